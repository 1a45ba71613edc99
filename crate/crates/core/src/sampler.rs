//! Thompson perturbation of the ridge estimate.
//!
//! `θ̃_t = θ̂_t + β_t V_t^{-1/2} η_t` with `η_t ∼ N(0, σ²I)`. The draw for a
//! round is a pure function of `(rng_seed, draw index)`: each draw index
//! selects its own ChaCha stream, so replaying a round reproduces its `η`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimator::BanditState;
use crate::linalg::symmetrize;
use crate::model::{ProblemParams, PseudoAction};
use crate::policy::argmin_residual;
use crate::safety::{certify, ConfidenceSchedule};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerturbationConfig {
    /// Scale `σ` of the Gaussian perturbation.
    pub sigma: f64,
    pub rng_seed: u64,
    /// Optimism probability to plug into the regret bound, when known.
    pub p_estimate: Option<f64>,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self { sigma: 1.0, rng_seed: 0, p_estimate: None }
    }
}

impl PerturbationConfig {
    pub fn with_seed(rng_seed: u64) -> Self {
        Self { rng_seed, ..Self::default() }
    }
}

/// Draws `η ∼ N(0, σ²I_d)` for the given draw index.
pub fn sample_eta(cfg: &PerturbationConfig, dim: usize, draw_index: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(draw_index);
    gaussian_vector(&mut rng, dim, cfg.sigma)
}

fn gaussian_vector<R: Rng>(rng: &mut R, dim: usize, sigma: f64) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)))
}

/// `√(2σ²·d·log(2d/δ))`: `‖η‖₂` stays below this with probability `≥ 1 − δ`.
pub fn concentration_radius(dim: usize, sigma: f64, delta: f64) -> f64 {
    let d = dim as f64;
    libm::sqrt(2.0 * sigma * sigma * d * libm::log(2.0 * d / delta).max(0.0))
}

/// Fraction of `n` draws with `‖η‖₂` above [`concentration_radius`].
/// Uses draw indices `0..n`.
pub fn concentration_failure_rate(cfg: &PerturbationConfig, dim: usize, delta: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let radius = concentration_radius(dim, cfg.sigma, delta);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let failures = (0..n).filter(|_| gaussian_vector(&mut rng, dim, cfg.sigma).norm() > radius).count();
    failures as f64 / n as f64
}

/// Symmetric positive-definite square root of `V⁻¹` via eigendecomposition.
pub fn inverse_sqrt(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = v.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| !l.is_finite() || *l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / libm::sqrt(l)));
    let mut root = &eig.eigenvectors * scale * eig.eigenvectors.transpose();
    symmetrize(&mut root);
    Ok(root)
}

/// `θ̂ + radius·V^{-1/2}η`.
pub fn perturb_with_eta(state: &BanditState, radius: f64, eta: &DVector<f64>) -> Result<DVector<f64>> {
    let root = inverse_sqrt(state.design())?;
    Ok(state.theta_hat() + root * eta * radius)
}

/// Perturbed parameter `θ̃_t` with radius `β_t(δ')` and draw index `t`.
pub fn perturb(
    state: &BanditState,
    t: usize,
    cfg: &PerturbationConfig,
    schedule: &ConfidenceSchedule,
) -> Result<DVector<f64>> {
    let eta = sample_eta(cfg, state.dim(), t as u64);
    perturb_with_eta(state, schedule.beta(t), &eta)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let margin = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    let lo = if successes == 0 { 0.0 } else { ((center - margin) / denom).max(0.0) };
    let hi = if successes as f64 == n { 1.0 } else { ((center + margin) / denom).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimismEstimate {
    pub successes: usize,
    pub samples: usize,
    pub estimate: f64,
    pub wilson_lower: f64,
    pub wilson_upper: f64,
    pub half_width: f64,
}

/// Monte Carlo estimate of the probability that a fresh `θ̃_t` is optimistic:
/// the proxy safe set is nonempty and its `|xᵀθ̃ − K|` minimizers all lie in
/// the unconstrained minimizer set over `candidates`.
///
/// `candidates` is the round's grid composed with its context. The draws use
/// a stream separate from the per-round perturbations.
pub fn estimate_optimism_p(
    state: &BanditState,
    candidates: &[PseudoAction],
    t: usize,
    cfg: &PerturbationConfig,
    params: &ProblemParams,
    schedule: &ConfidenceSchedule,
    n_samples: usize,
) -> Result<OptimismEstimate> {
    if n_samples == 0 {
        return Err(Error::NoSamples);
    }
    if candidates.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let beta = schedule.beta(t);
    let safe: Vec<PseudoAction> = candidates
        .iter()
        .filter(|x| certify(state, x, beta, params.safe_lower, params.safe_upper).is_safe)
        .cloned()
        .collect();
    let root = inverse_sqrt(state.design())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x6F70_7469_6D69_736D);

    let mut successes = 0;
    for _ in 0..n_samples {
        let eta = gaussian_vector(&mut rng, state.dim(), cfg.sigma);
        let theta = state.theta_hat() + &root * eta * beta;
        let Some((_, global)) = argmin_residual(candidates, &theta, params.target) else {
            continue;
        };
        if let Some((_, constrained)) = argmin_residual(&safe, &theta, params.target) {
            if constrained == global {
                successes += 1;
            }
        }
    }

    let estimate = successes as f64 / n_samples as f64;
    let (lo, hi) = wilson_interval(successes, n_samples, Z_95);
    Ok(OptimismEstimate {
        successes,
        samples: n_samples,
        estimate,
        wilson_lower: lo,
        wilson_upper: hi,
        half_width: 0.5 * (hi - lo),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::params;
    use crate::model::Context;
    use crate::policy::ActionGrid;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn px(v: &[f64]) -> PseudoAction {
        PseudoAction::new(v.to_vec(), 100.0).unwrap()
    }

    #[test]
    fn eta_is_deterministic_per_draw_index() {
        let cfg = PerturbationConfig::with_seed(42);
        assert_eq!(sample_eta(&cfg, 4, 7), sample_eta(&cfg, 4, 7));
        assert_ne!(sample_eta(&cfg, 4, 7), sample_eta(&cfg, 4, 8));
        let other = PerturbationConfig::with_seed(43);
        assert_ne!(sample_eta(&cfg, 4, 7), sample_eta(&other, 4, 7));
    }

    #[test]
    fn eta_empirical_mean_is_near_zero() {
        // CLT tolerance 5/√N with N = 10⁵
        let cfg = PerturbationConfig::with_seed(5);
        let n = 100_000u64;
        let mut sum = DVector::<f64>::zeros(4);
        for i in 0..n {
            sum += sample_eta(&cfg, 4, i);
        }
        let mean = sum / n as f64;
        for m in mean.iter() {
            assert!(m.abs() <= 5.0 / (n as f64).sqrt(), "mean {m}");
        }
    }

    #[test]
    fn concentration_holds_empirically() {
        let n = 100_000;
        for (dim, delta) in [(4, 0.01), (4, 0.1), (4, 0.5), (1, 0.1), (3, 0.1)] {
            let rate = concentration_failure_rate(&PerturbationConfig::with_seed(11), dim, delta, n);
            let slack = 3.0 * (delta * (1.0 - delta) / n as f64).sqrt();
            assert!(rate <= delta + slack, "d={dim} δ={delta}: {rate}");
        }
    }

    #[test]
    fn zero_eta_leaves_estimate() {
        let mut s = BanditState::with_dimension(2, 1.0);
        s.update(&px(&[0.4, 0.2]), 1.0).unwrap();
        let t = perturb_with_eta(&s, 3.0, &DVector::zeros(2)).unwrap();
        assert_eq!(&t, s.theta_hat());
    }

    #[test]
    fn identity_root_hand_value() {
        let s = BanditState::from_parts(DMatrix::identity(2, 2), DVector::from_vec(vec![0.5, -0.25]), 1).unwrap();
        let t = perturb_with_eta(&s, 2.0, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_relative_eq!(t[0], 2.5, epsilon = 1e-15);
        assert_relative_eq!(t[1], -0.25, epsilon = 1e-15);
    }

    #[test]
    fn inverse_sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(inverse_sqrt(&m), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn wilson_reference_values() {
        // 0 of n keeps a zero lower bound; n of n keeps a unit upper bound
        assert_eq!(wilson_interval(0, 100, Z_95).0, 0.0);
        assert_relative_eq!(wilson_interval(100, 100, Z_95).1, 1.0, epsilon = 1e-12);
        // 50/100: 0.5 ± 1.96·√(0.25/100 + 1.96²/40000) / (1 + 1.96²/100)
        let (lo, hi) = wilson_interval(50, 100, Z_95);
        assert_relative_eq!(lo, 0.403_831_7, epsilon = 1e-6);
        assert_relative_eq!(hi, 0.596_168_3, epsilon = 1e-6);
    }

    #[test]
    fn optimism_requires_samples() {
        let p = params(0, 1);
        let s = BanditState::new(&p);
        let sched = ConfidenceSchedule::new(&p, 1.0);
        let cands = vec![px(&[0.5])];
        let err = estimate_optimism_p(&s, &cands, 1, &PerturbationConfig::default(), &p, &sched, 0);
        assert_eq!(err, Err(Error::NoSamples));
    }

    #[test]
    fn single_action_grid_is_always_optimistic() {
        // one certified candidate: constrained and unconstrained argmins coincide
        let mut p = params(0, 1);
        p.safe_lower = -10.0;
        p.safe_upper = 10.0;
        let s = BanditState::new(&p);
        let sched = ConfidenceSchedule::new(&p, 1.0);
        let cands = vec![px(&[0.5])];
        let est = estimate_optimism_p(&s, &cands, 1, &PerturbationConfig::default(), &p, &sched, 500).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.successes, 500);
    }

    #[test]
    fn scalar_desk_instance_has_positive_lower_bound() {
        // d = 1, wide constraints, and enough data that D_t holds.
        let mut p = params(0, 1);
        p.target = 0.5;
        p.safe_lower = -2.0;
        p.safe_upper = 3.0;
        p.noise_scale = 0.1;
        p.horizon = 1000;
        let sched = ConfidenceSchedule::new(&p, 1.0);
        let mut s = BanditState::new(&p);
        for _ in 0..999 {
            s.update(&px(&[0.8]), 0.8 * 0.9).unwrap();
        }
        let grid = ActionGrid::uniform(&[0.0], &[1.0], 201).unwrap();
        let cands = grid.compose_with(&Context::new(vec![]).unwrap(), &p).unwrap();
        let threshold = crate::analysis::d_event_threshold(&p, &sched);
        let max_norm = cands.iter().map(|x| s.weighted_norm(x)).fold(0.0, f64::max);
        assert!(max_norm < threshold, "D_t does not hold: {max_norm} ≥ {threshold}");
        let est =
            estimate_optimism_p(&s, &cands, s.round(), &PerturbationConfig::with_seed(1), &p, &sched, 2000).unwrap();
        assert!(est.wilson_lower > 0.0, "{est:?}");
    }

    proptest! {
        #[test]
        fn perturbation_distance_is_beta_times_eta_norm(seed in any::<u64>(), beta in 0.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 3;
            let mut s = BanditState::with_dimension(dim, rng.random_range(1.0..3.0));
            for _ in 0..rng.random_range(0..30) {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                s.update(&px(&x), rng.random_range(-1.0..1.0)).unwrap();
            }
            let eta = gaussian_vector(&mut rng, dim, 1.0);
            let t = perturb_with_eta(&s, beta, &eta).unwrap();
            let dist = s.design_norm(&(t - s.theta_hat()));
            prop_assert!((dist - beta * eta.norm()).abs() <= 1e-10 * (1.0 + beta * eta.norm()));
        }

        #[test]
        fn inverse_sqrt_squares_to_inverse(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = rng.random_range(1..6);
            let mut s = BanditState::with_dimension(dim, rng.random_range(1.0..3.0));
            for _ in 0..rng.random_range(0..40) {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                s.update(&px(&x), 0.0).unwrap();
            }
            let root = inverse_sqrt(s.design()).unwrap();
            prop_assert_eq!(&root, &root.transpose());
            let inv = s.design().clone().try_inverse().unwrap();
            let err = (&root * &root - &inv).norm() / inv.norm();
            prop_assert!(err <= 1e-8);
        }

        #[test]
        fn eta_within_radius_keeps_tilde_in_gamma_ellipsoid(seed in any::<u64>(), t in 1usize..500) {
            let p = params(2, 1);
            let sched = ConfidenceSchedule::new(&p, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = BanditState::new(&p);
            for _ in 0..rng.random_range(0..30) {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
                s.update(&px(&x), rng.random_range(-1.0..1.0)).unwrap();
            }
            let eta = gaussian_vector(&mut rng, 3, 3.0);
            let beta = sched.beta(t);
            let gamma = sched.gamma(t);
            let tilde = perturb_with_eta(&s, beta, &eta).unwrap();
            if eta.norm() <= gamma / beta {
                prop_assert!(s.design_norm(&(tilde - s.theta_hat())) <= gamma * (1.0 + 1e-12));
            }
        }
    }
}

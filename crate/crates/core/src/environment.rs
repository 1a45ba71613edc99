//! Synthetic ground truth: the hidden parameter, contexts, noise, and the
//! true-safety and seed-set oracles built on them.

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Context, ProblemParams, PseudoAction};
use crate::policy::{argmin_residual, ActionGrid};

/// Additive observation noise. Every variant is `R`-sub-Gaussian with
/// `R = scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum NoiseModel {
    None,
    Gaussian {
        scale: f64,
    },
    /// Uniform on `[−√3·scale, √3·scale]`; its variance is `scale²` and a
    /// uniform variable is sub-Gaussian with proxy equal to its variance.
    UniformBounded {
        scale: f64,
    },
}

impl NoiseModel {
    pub fn scale(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { scale } | NoiseModel::UniformBounded { scale } => scale,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { scale } => scale * rng.sample::<f64, _>(StandardNormal),
            NoiseModel::UniformBounded { scale } => {
                let a = libm::sqrt(3.0) * scale;
                if a == 0.0 {
                    0.0
                } else {
                    rng.random_range(-a..=a)
                }
            }
        }
    }
}

/// Axis-aligned box the contexts are drawn from, uniformly per coordinate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct ContextBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ContextBox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch { expected: self.lower.len(), actual: self.upper.len() });
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(Error::Config("context box bounds must be finite with lower ≤ upper".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Context {
        let values =
            self.lower.iter().zip(&self.upper).map(|(&l, &u)| if l < u { rng.random_range(l..u) } else { l }).collect();
        Context::new(values).expect("box bounds are finite")
    }

    /// Largest `|z_i|` per coordinate over the box.
    pub fn max_abs(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| l.abs().max(u.abs())).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    theta_star: DVector<f64>,
    pub noise: NoiseModel,
    pub context_box: ContextBox,
    /// Slack `m` kept between seed outcomes and the constraint bounds.
    pub seed_margin: f64,
    /// Fixed contexts for round-robin mode.
    pub meal_schedule: Option<Vec<Context>>,
}

impl EnvironmentSpec {
    pub fn new(
        theta_star: DVector<f64>,
        noise: NoiseModel,
        context_box: ContextBox,
        seed_margin: f64,
        params: &ProblemParams,
    ) -> Result<Self> {
        if theta_star.len() != params.dim() {
            return Err(Error::DimensionMismatch { expected: params.dim(), actual: theta_star.len() });
        }
        if theta_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta_star"));
        }
        let norm = theta_star.norm();
        if norm > params.theta_norm_bound {
            return Err(Error::NormBound { norm, bound: params.theta_norm_bound });
        }
        context_box.validate()?;
        if context_box.dim() != params.context_dim {
            return Err(Error::DimensionMismatch { expected: params.context_dim, actual: context_box.dim() });
        }
        if !(seed_margin >= 0.0 && seed_margin.is_finite()) {
            return Err(Error::Config("seed margin must be a finite value ≥ 0".into()));
        }
        if noise.scale() < 0.0 || !noise.scale().is_finite() {
            return Err(Error::Config("noise scale must be finite and ≥ 0".into()));
        }
        Ok(Self { theta_star, noise, context_box, seed_margin, meal_schedule: None })
    }

    pub fn with_schedule(mut self, schedule: Vec<Context>) -> Self {
        self.meal_schedule = Some(schedule);
        self
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    /// `xᵀθ*` without noise.
    pub fn mean_outcome(&self, x: &PseudoAction) -> f64 {
        x.dot(&self.theta_star)
    }

    /// `o = xᵀθ* + ξ`.
    pub fn emit_outcome<R: Rng + ?Sized>(&self, x: &PseudoAction, rng: &mut R) -> f64 {
        self.mean_outcome(x) + self.noise.sample(rng)
    }

    /// `C1 ≤ xᵀθ* ≤ C2`, closed on both ends.
    pub fn true_safe(&self, x: &PseudoAction, params: &ProblemParams) -> bool {
        let v = self.mean_outcome(x);
        params.safe_lower <= v && v <= params.safe_upper
    }

    /// The `size` margin-safe grid actions whose outcome is closest to the
    /// middle of `[C1, C2]`, returned in grid order.
    pub fn gen_seed_set(
        &self,
        z: &Context,
        grid: &ActionGrid,
        params: &ProblemParams,
        size: usize,
    ) -> Result<Vec<PseudoAction>> {
        let lower = params.safe_lower + self.seed_margin;
        let upper = params.safe_upper - self.seed_margin;
        if lower > upper {
            return Err(Error::EmptyMarginInterval { lower, upper });
        }
        if size == 0 {
            return Err(Error::EmptySeedSet);
        }
        let mid = 0.5 * (params.safe_lower + params.safe_upper);
        let mut ok: Vec<(usize, f64, PseudoAction)> = grid
            .compose_with(z, params)?
            .into_iter()
            .enumerate()
            .filter_map(|(i, x)| {
                let v = self.mean_outcome(&x);
                (lower <= v && v <= upper).then(|| (i, libm::fabs(v - mid), x))
            })
            .collect();
        if ok.len() < size {
            return Err(Error::InfeasibleSeed { needed: size, available: ok.len() });
        }
        // stable sort keeps grid order among equal distances
        ok.sort_by(|a, b| a.1.total_cmp(&b.1));
        ok.truncate(size);
        ok.sort_by_key(|e| e.0);
        Ok(ok.into_iter().map(|e| e.2).collect())
    }

    /// Leveler-existence gap per context, compared against what the grid
    /// resolution guarantees.
    pub fn check_assumption3(
        &self,
        contexts: &[Context],
        grid: &ActionGrid,
        params: &ProblemParams,
    ) -> Result<LevelerReport> {
        // a nearest grid point moves each action coordinate by at most h/2
        let action_coef = &self.theta_star.as_slice()[params.context_dim..];
        let resolution_bound: f64 = action_coef.iter().zip(grid.step()).map(|(w, h)| libm::fabs(*w) * h / 2.0).sum();
        let mut gaps = Vec::with_capacity(contexts.len());
        for z in contexts {
            let cands = grid.compose_with(z, params)?;
            let (_, gap) = argmin_residual(&cands, &self.theta_star, params.target).ok_or(Error::EmptyGrid)?;
            gaps.push(gap);
        }
        let warnings =
            gaps.iter().enumerate().filter(|(_, g)| **g > resolution_bound + 1e-12).map(|(i, _)| i).collect();
        Ok(LevelerReport { gaps, resolution_bound, warnings })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LevelerReport {
    /// `min over grid of |xᵀθ* − K|`, per context.
    pub gaps: Vec<f64>,
    pub resolution_bound: f64,
    /// Indices of contexts whose gap exceeds `resolution_bound`.
    pub warnings: Vec<usize>,
}

impl LevelerReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// `0.1·(C2 − C1)`.
pub fn default_seed_margin(params: &ProblemParams) -> f64 {
    0.1 * (params.safe_upper - params.safe_lower)
}

/// A point drawn uniformly from the Euclidean ball of the given radius.
pub fn draw_in_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = g.norm();
        if n > 0.0 {
            let u: f64 = rng.random();
            return g * (radius * libm::pow(u, 1.0 / dim as f64) / n);
        }
    }
}

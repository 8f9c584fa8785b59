//! Logging policies for the two-arm bandit.
//!
//! Thompson Sampling keeps an independent Bayesian linear regression per arm
//! with an `N(0, I)` prior. Arm-1 probabilities are computed in closed form
//! from the two Gaussian posteriors rather than by sampling, so the logged
//! propensities are exact.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::statfn::{cholesky, dot, normal_cdf, Matrix};

/// `max(c, min(1 - c, p))`
pub fn clip_prob(p: f64, floor: f64) -> f64 {
    p.min(1.0 - floor).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Thompson,
    ThompsonHodges,
    EpsGreedy,
    /// Arm 1 with a fixed probability, never clipped.
    Fixed {
        p: f64,
    },
    /// Independent sampling with probability 1/2.
    Uniform,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Thompson => "ts",
            Self::ThompsonHodges => "ts_hodges",
            Self::EpsGreedy => "eps_greedy",
            Self::Fixed { .. } => "fixed",
            Self::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Probability floor for the Thompson variants.
    pub clip: f64,
    /// Exploration rate for ε-greedy.
    pub epsilon: f64,
    /// Observation-noise variance assumed by the Thompson posteriors.
    pub noise_variance: f64,
    /// TS-Hodges forces `π = 1/2` while `|μ₁ - μ₀| <= t^(-hodges_exponent)`.
    pub hodges_exponent: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Thompson,
            clip: 0.01,
            epsilon: 0.1,
            noise_variance: 1.0,
            hodges_exponent: 4.0,
        }
    }
}

impl PolicyConfig {
    pub fn thompson(clip: f64) -> Self {
        Self {
            clip,
            ..Self::default()
        }
    }

    pub fn thompson_hodges(clip: f64) -> Self {
        Self {
            kind: PolicyKind::ThompsonHodges,
            clip,
            ..Self::default()
        }
    }

    pub fn eps_greedy(epsilon: f64) -> Self {
        Self {
            kind: PolicyKind::EpsGreedy,
            epsilon,
            ..Self::default()
        }
    }

    pub fn fixed(p: f64) -> Self {
        Self {
            kind: PolicyKind::Fixed { p },
            ..Self::default()
        }
    }

    pub fn uniform() -> Self {
        Self {
            kind: PolicyKind::Uniform,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return Err(domain(format!(
                "clip must lie in (0, 0.5), got {}",
                self.clip
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(domain(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            return Err(domain("noise_variance must be positive"));
        }
        if !(self.hodges_exponent > 0.0) {
            return Err(domain("hodges_exponent must be positive"));
        }
        if let PolicyKind::Fixed { p } = self.kind {
            if !(0.0..=1.0).contains(&p) {
                return Err(domain(format!(
                    "fixed probability must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Conjugate Gaussian posterior for one arm's linear reward model.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLinearPosterior {
    pub precision: Matrix,
    pub moment: Vec<f64>,
}

impl GaussianLinearPosterior {
    /// `N(0, I_d)` prior.
    pub fn prior(dim: usize) -> Self {
        Self {
            precision: Matrix::identity(dim),
            moment: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        cholesky(&self.precision)?.solve_vec(&self.moment)
    }

    /// Posterior mean and `xᵀ Σ x` for the posterior covariance `Σ`.
    pub fn predictive(&self, x: &[f64]) -> Result<(f64, f64)> {
        let chol = cholesky(&self.precision)?;
        let mean = chol.solve_vec(&self.moment)?;
        let sx = chol.solve_vec(x)?;
        Ok((dot(x, &mean), dot(x, &sx)))
    }

    pub fn update(&mut self, x: &[f64], reward: f64, noise_variance: f64) {
        self.precision.add_outer(x, 1.0 / noise_variance);
        for (m, xi) in self.moment.iter_mut().zip(x) {
            *m += xi * reward / noise_variance;
        }
    }
}

/// Mutable state of one logging policy over one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub config: PolicyConfig,
    /// Posteriors for arm 0 and arm 1.
    pub posteriors: [GaussianLinearPosterior; 2],
    /// Number of completed updates.
    pub t: usize,
}

impl PolicyState {
    pub fn new(config: &PolicyConfig, feature_dim: usize) -> Result<Self> {
        config.validate()?;
        if feature_dim == 0 {
            return Err(domain("feature dimension must be at least 1"));
        }
        Ok(Self {
            config: *config,
            posteriors: [
                GaussianLinearPosterior::prior(feature_dim),
                GaussianLinearPosterior::prior(feature_dim),
            ],
            t: 0,
        })
    }

    /// Probability of choosing arm 1 at context `xtilde`.
    pub fn prob_arm1(&self, xtilde: &[f64]) -> Result<f64> {
        match self.config.kind {
            PolicyKind::Thompson => self.ts_prob_arm1(xtilde),
            PolicyKind::ThompsonHodges => self.ts_hodges_prob(xtilde),
            PolicyKind::EpsGreedy => self.eps_greedy_prob(xtilde),
            PolicyKind::Fixed { p } => Ok(p),
            PolicyKind::Uniform => Ok(0.5),
        }
    }

    fn posterior_gap(&self, xtilde: &[f64]) -> Result<(f64, f64)> {
        let dim = self.posteriors[0].dim();
        if xtilde.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: xtilde.len(),
            });
        }
        let (m0, v0) = self.posteriors[0].predictive(xtilde)?;
        let (m1, v1) = self.posteriors[1].predictive(xtilde)?;
        Ok((m1 - m0, v0 + v1))
    }

    /// Unclipped `P(X̃ᵀβ̃₁ > X̃ᵀβ̃₀ | H)`.
    fn raw_ts_prob(&self, xtilde: &[f64]) -> Result<f64> {
        let (gap, var) = self.posterior_gap(xtilde)?;
        // unit prior keeps both posterior covariances SPD
        assert!(var > 0.0, "posterior predictive variance must be positive");
        Ok(normal_cdf(gap / var.sqrt()))
    }

    /// Clipped closed-form Thompson Sampling probability for arm 1.
    pub fn ts_prob_arm1(&self, xtilde: &[f64]) -> Result<f64> {
        Ok(clip_prob(self.raw_ts_prob(xtilde)?, self.config.clip))
    }

    /// TS-Hodges: probability 1/2 while the posterior means are within
    /// `t^(-hodges_exponent)` of each other, Thompson Sampling otherwise,
    /// clipped afterwards. Only defined for the intercept-only bandit.
    pub fn ts_hodges_prob(&self, xtilde: &[f64]) -> Result<f64> {
        if xtilde.len() != 1 {
            return Err(Error::Misuse(
                "TS-Hodges is defined for the intercept-only bandit".into(),
            ));
        }
        let step = (self.t + 1) as f64;
        let threshold = step.powf(-self.config.hodges_exponent);
        let mu0 = self.posteriors[0].mean()?[0];
        let mu1 = self.posteriors[1].mean()?[0];
        let p = if (mu1 - mu0).abs() > threshold {
            self.raw_ts_prob(xtilde)?
        } else {
            0.5
        };
        Ok(clip_prob(p, self.config.clip))
    }

    /// ε-greedy on the posterior-mean predicted reward at `xtilde`.
    pub fn eps_greedy_prob(&self, xtilde: &[f64]) -> Result<f64> {
        let (gap, _) = self.posterior_gap(xtilde)?;
        let eps = self.config.epsilon;
        Ok(if gap > 0.0 {
            1.0 - eps + 0.5 * eps
        } else if gap < 0.0 {
            0.5 * eps
        } else {
            0.5
        })
    }

    /// Conjugate update of the chosen arm's posterior.
    pub fn update(&mut self, xtilde: &[f64], action: u8, reward_pre: f64) -> Result<()> {
        if action > 1 {
            return Err(domain(format!("action must be 0 or 1, got {action}")));
        }
        let dim = self.posteriors[0].dim();
        if xtilde.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: xtilde.len(),
            });
        }
        self.posteriors[action as usize].update(xtilde, reward_pre, self.config.noise_variance);
        self.t += 1;
        Ok(())
    }
}

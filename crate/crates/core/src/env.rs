//! Stochastic two-arm contextual bandit environment.
//!
//! Contexts are i.i.d. uniform, the expected reward is linear in
//! `X̃ = [1, X]` through `ν = X̃ᵀθ₀ + A·X̃ᵀθ₁`, and the reward law is picked by
//! the [`GlmFamily`]. Rewards handed to the logging policy are preprocessed;
//! the [`Trajectory`] keeps both the raw and the preprocessed values.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::output::fmt_f64;
use crate::policies::PolicyState;
use crate::statfn::{
    expit, sample_bernoulli, sample_poisson, sample_std_normal, sample_t, sample_uniform,
};

/// Outcome family together with its log-partition function `b(ν)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmFamily {
    /// Gaussian working model, rewards `ν + t₅` noise.
    T5,
    /// Gaussian working model, rewards `ν + N(0, 1)` noise.
    Normal,
    Bernoulli,
    Poisson,
}

impl GlmFamily {
    pub const ALL: [GlmFamily; 4] = [Self::T5, Self::Normal, Self::Bernoulli, Self::Poisson];

    pub fn name(self) -> &'static str {
        match self {
            Self::T5 => "t5",
            Self::Normal => "normal",
            Self::Bernoulli => "bernoulli",
            Self::Poisson => "poisson",
        }
    }

    /// True for the two families fitted by least squares.
    pub fn is_gaussian(self) -> bool {
        matches!(self, Self::T5 | Self::Normal)
    }

    pub fn b(self, nu: f64) -> f64 {
        match self {
            Self::T5 | Self::Normal => 0.5 * nu * nu,
            // log(1 + e^ν) without overflow
            Self::Bernoulli => nu.max(0.0) + (-nu.abs()).exp().ln_1p(),
            Self::Poisson => nu.exp(),
        }
    }

    /// Mean function `b′(ν)`.
    pub fn b_prime(self, nu: f64) -> f64 {
        match self {
            Self::T5 | Self::Normal => nu,
            Self::Bernoulli => expit(nu),
            Self::Poisson => nu.exp(),
        }
    }

    /// Variance of the reward at natural parameter `ν`.
    pub fn noise_variance(self, nu: f64) -> f64 {
        match self {
            Self::T5 => 5.0 / 3.0,
            _ => self.b_double_prime(nu),
        }
    }

    /// `r - b′(ν)`, computed without cancellation for binary rewards so a
    /// fit drifting towards separation keeps a nonzero score.
    pub fn residual(self, r: f64, nu: f64) -> f64 {
        match self {
            Self::Bernoulli if r == 1.0 => expit(-nu),
            Self::Bernoulli if r == 0.0 => -expit(nu),
            _ => r - self.b_prime(nu),
        }
    }

    /// Variance function `b″(ν)`.
    pub fn b_double_prime(self, nu: f64) -> f64 {
        match self {
            Self::T5 | Self::Normal => 1.0,
            Self::Bernoulli => {
                let e = (-nu.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            Self::Poisson => nu.exp(),
        }
    }
}

impl std::fmt::Display for GlmFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GlmFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| domain(format!("unknown family {s:?}")))
    }
}

/// Environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub family: GlmFamily,
    /// `[θ₀*, θ₁*]`, each block of length `context_dim + 1`.
    pub theta_star: Vec<f64>,
    pub context_dim: usize,
    pub context_low: f64,
    pub context_high: f64,
}

impl EnvConfig {
    /// The contextual setting used throughout the simulations: two
    /// Uniform(0, 5) covariates and `θ* = [0.1, 0.1, 0.1, 0, 0, 0]`.
    pub fn contextual(family: GlmFamily) -> Self {
        Self {
            family,
            theta_star: vec![0.1, 0.1, 0.1, 0.0, 0.0, 0.0],
            context_dim: 2,
            context_low: 0.0,
            context_high: 5.0,
        }
    }

    /// Intercept-only two-arm bandit with arm means `base` and `base + delta`.
    pub fn two_arm(family: GlmFamily, base: f64, delta: f64) -> Self {
        Self {
            family,
            theta_star: vec![base, delta],
            context_dim: 0,
            context_low: 0.0,
            context_high: 0.0,
        }
    }

    /// Length of `X̃`.
    pub fn feature_dim(&self) -> usize {
        self.context_dim + 1
    }

    /// Length of `θ*`.
    pub fn param_dim(&self) -> usize {
        2 * self.feature_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_star.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: self.theta_star.len(),
            });
        }
        if !(self.context_low <= self.context_high) {
            return Err(domain("context_low must not exceed context_high"));
        }
        if self.theta_star.iter().any(|v| !v.is_finite()) {
            return Err(domain("theta_star must be finite"));
        }
        Ok(())
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta_star[..self.feature_dim()]
    }

    pub fn theta1(&self) -> &[f64] {
        &self.theta_star[self.feature_dim()..]
    }
}

/// Draws `X̃ = [1, u₁, …, u_dim]` with `uᵢ ~ Uniform(low, high)`.
pub fn draw_context<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Vec<f64> {
    let mut x = Vec::with_capacity(cfg.feature_dim());
    x.push(1.0);
    for _ in 0..cfg.context_dim {
        x.push(
            sample_uniform(rng, cfg.context_low, cfg.context_high)
                .expect("validated context bounds"),
        );
    }
    x
}

/// `ν = X̃ᵀθ₀ + a·X̃ᵀθ₁`.
pub fn linear_predictor(theta: &[f64], xtilde: &[f64], action: u8) -> Result<f64> {
    let k = xtilde.len();
    if theta.len() != 2 * k {
        return Err(Error::DimensionMismatch {
            expected: 2 * k,
            got: theta.len(),
        });
    }
    let base: f64 = xtilde.iter().zip(&theta[..k]).map(|(x, t)| x * t).sum();
    if action == 0 {
        return Ok(base);
    }
    let adv: f64 = xtilde.iter().zip(&theta[k..]).map(|(x, t)| x * t).sum();
    Ok(base + adv)
}

/// Samples a raw reward with linear predictor `nu`.
pub fn draw_reward<R: Rng + ?Sized>(family: GlmFamily, nu: f64, rng: &mut R) -> Result<f64> {
    if !nu.is_finite() {
        return Err(domain("linear predictor must be finite"));
    }
    Ok(match family {
        GlmFamily::T5 => nu + sample_t(5, rng)?,
        GlmFamily::Normal => nu + sample_std_normal(rng),
        GlmFamily::Bernoulli => f64::from(sample_bernoulli(expit(nu), rng)?),
        GlmFamily::Poisson => sample_poisson(nu.exp(), rng)? as f64,
    })
}

/// Reward transformation applied before the logging policy sees a reward.
pub fn preprocess_reward(family: GlmFamily, r: f64) -> f64 {
    match family {
        GlmFamily::T5 | GlmFamily::Normal => r,
        GlmFamily::Bernoulli => 2.0 * r - 1.0,
        GlmFamily::Poisson => 0.6 * r,
    }
}

/// One logged run of a bandit algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `X̃_t` for every step.
    pub contexts: Vec<Vec<f64>>,
    pub actions: Vec<u8>,
    /// Logged `π_{t,1}`, the probability the action was sampled with.
    pub prob_arm1: Vec<f64>,
    pub rewards_raw: Vec<f64>,
    pub rewards_pre: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Probability of the action actually taken at step `t` (0-based).
    pub fn prob_logged(&self, t: usize) -> f64 {
        let p1 = self.prob_arm1[t];
        if self.actions[t] == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    /// `(1/T) Σ A_t`
    pub fn allocation(&self) -> f64 {
        self.actions.iter().map(|&a| f64::from(a)).sum::<f64>() / self.len().max(1) as f64
    }

    /// Writes `t, x1..xk, action, prob_arm1, reward_raw, reward_pre`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let k = self.contexts.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=k).map(|i| format!("x{i}")));
        header.extend(["action", "prob_arm1", "reward_raw", "reward_pre"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for t in 0..self.len() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(self.contexts[t].iter().map(|&v| fmt_f64(v)));
            row.push(self.actions[t].to_string());
            row.push(fmt_f64(self.prob_arm1[t]));
            row.push(fmt_f64(self.rewards_raw[t]));
            row.push(fmt_f64(self.rewards_pre[t]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Runs `policy` for `horizon` steps in the environment.
///
/// At each step the arm-1 probability is computed and recorded before the
/// action is sampled from it; the reward comes from the true family at
/// `ν(θ*, X̃_t, A_t)` and the policy is updated with the preprocessed reward.
pub fn run_trajectory<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    policy: &mut PolicyState,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    cfg.validate()?;
    if horizon == 0 {
        return Err(domain("horizon must be at least 1"));
    }
    let mut traj = Trajectory {
        contexts: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        prob_arm1: Vec::with_capacity(horizon),
        rewards_raw: Vec::with_capacity(horizon),
        rewards_pre: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let x = draw_context(cfg, rng);
        let p1 = policy.prob_arm1(&x)?;
        let a = sample_bernoulli(p1, rng)?;
        let nu = linear_predictor(&cfg.theta_star, &x, a)?;
        let r = draw_reward(cfg.family, nu, rng)?;
        let r_pre = preprocess_reward(cfg.family, r);
        policy.update(&x, a, r_pre)?;
        traj.contexts.push(x);
        traj.actions.push(a);
        traj.prob_arm1.push(p1);
        traj.rewards_raw.push(r);
        traj.rewards_pre.push(r_pre);
    }
    Ok(traj)
}

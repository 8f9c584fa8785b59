//! Run configuration: JSON file, environment and command-line overrides.

use std::path::{Path, PathBuf};

use banditlab::env::{EnvConfig, GlmFamily};
use banditlab::estimators::Design;
use banditlab::harness::{
    AllocationSpec, Calibration, EstimatorKind, EvalPolicyKind, EvalPolicyStudySpec,
    ExperimentSpec, Target, UniformitySpec, ZStatSpec,
};
use banditlab::policies::{PolicyConfig, PolicyKind};
use banditlab::regions::SelfNormParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "BANDITLAB_SEED";
pub const FULL_SCALE_REPS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Coverage,
    Mse,
    Zstat,
    Allocation,
    Uniformity,
    Evalpolicy,
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Coverage => "coverage",
            Self::Mse => "mse",
            Self::Zstat => "zstat",
            Self::Allocation => "allocation",
            Self::Uniformity => "uniformity",
            Self::Evalpolicy => "evalpolicy",
            Self::Calibrate => "calibrate",
        }
    }

    fn default_reps(self) -> usize {
        match self {
            Self::Zstat => 5000,
            Self::Evalpolicy => 2000,
            _ => 1000,
        }
    }

    fn default_horizon(self) -> usize {
        match self {
            Self::Allocation => 100,
            Self::Uniformity => 2000,
            _ => 1000,
        }
    }

    fn default_policy(self) -> PolicyName {
        match self {
            Self::Uniformity => PolicyName::TsHodges,
            _ => PolicyName::Ts,
        }
    }

    fn default_arm_means(self) -> [f64; 2] {
        match self {
            Self::Evalpolicy => [0.0, 1.0],
            _ => [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Ts,
    TsHodges,
    EpsGreedy,
    Fixed,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalName {
    Uniform,
    ExpectedPi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Everything a run needs. Fields left as `None` get command-specific
/// defaults in [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Label written to the `experiment` column; the command name if unset.
    pub experiment: Option<String>,
    pub family: GlmFamily,
    /// Contextual `θ*`; its length fixes the context dimension.
    pub theta_star: Option<Vec<f64>>,
    pub context_low: f64,
    pub context_high: f64,
    pub policy: Option<PolicyName>,
    pub clip: f64,
    pub epsilon: f64,
    pub hodges_exponent: f64,
    /// Arm-1 probability of the `fixed` policy.
    pub fixed_p: f64,
    pub eval_policy: EvalName,
    pub n_pilot: usize,
    pub design: Design,
    pub estimators: Option<Vec<EstimatorKind>>,
    pub targets: Vec<Target>,
    pub t_grid: Vec<usize>,
    pub n_reps: Option<usize>,
    pub alpha: f64,
    pub master_seed: Option<u64>,
    pub threads: usize,
    pub lambda_pilots: usize,
    pub self_norm: SelfNormParams,
    pub calibration: Calibration,
    /// Horizon of the two-arm experiments.
    pub horizon: Option<usize>,
    /// `[μ₀, μ₁]` for `zstat` and `evalpolicy`.
    pub arm_means: Option<[f64; 2]>,
    /// Margin for `allocation`.
    pub delta: f64,
    /// Margin grid for `uniformity`.
    pub deltas: Vec<f64>,
    pub output_dir: PathBuf,
    pub format: Format,
    pub full_scale: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let policy = PolicyConfig::default();
        let spec = ExperimentSpec::contextual(GlmFamily::T5);
        Self {
            experiment: None,
            family: GlmFamily::T5,
            theta_star: None,
            context_low: spec.env.context_low,
            context_high: spec.env.context_high,
            policy: None,
            clip: policy.clip,
            epsilon: policy.epsilon,
            hodges_exponent: policy.hodges_exponent,
            fixed_p: 0.5,
            eval_policy: EvalName::Uniform,
            n_pilot: 1000,
            design: spec.design,
            estimators: None,
            targets: spec.targets,
            t_grid: spec.t_grid,
            n_reps: None,
            alpha: spec.alpha,
            master_seed: None,
            threads: 0,
            lambda_pilots: spec.lambda_pilots,
            self_norm: spec.self_norm,
            calibration: spec.calibration,
            horizon: None,
            arm_means: None,
            delta: 0.0,
            deltas: vec![0.0, 1e-3, 1e-2, 1e-1, 1.0],
            output_dir: PathBuf::from("out"),
            format: Format::Csv,
            full_scale: false,
        }
    }
}

/// Values given on the command line. They beat the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub threads: Option<usize>,
    pub format: Option<Format>,
    pub full_scale: bool,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies overrides and fills every command-specific default.
    ///
    /// Seed precedence: `--seed`, then the file, then `BANDITLAB_SEED`,
    /// then 0. `--full-scale` raises the replication count to 5000 unless
    /// `--reps` is given.
    pub fn resolve(
        mut self,
        command: Command,
        overrides: &Overrides,
        env_seed: Option<&str>,
    ) -> Result<Self, CliError> {
        let env_seed = match env_seed {
            Some(s) => Some(s.trim().parse::<u64>().map_err(|_| {
                CliError::Validation(vec![format!(
                    "{SEED_ENV} must be an unsigned integer, got {s:?}"
                )])
            })?),
            None => None,
        };
        self.master_seed = overrides.seed.or(self.master_seed).or(env_seed).or(Some(0));
        if let Some(out) = &overrides.out {
            self.output_dir = out.clone();
        }
        if let Some(threads) = overrides.threads {
            self.threads = threads;
        }
        if let Some(format) = overrides.format {
            self.format = format;
        }
        self.full_scale |= overrides.full_scale;
        self.n_reps = Some(match (overrides.reps, self.full_scale, self.n_reps) {
            (Some(n), _, _) => n,
            (None, true, _) => FULL_SCALE_REPS,
            (None, false, Some(n)) => n,
            (None, false, None) => command.default_reps(),
        });
        self.experiment
            .get_or_insert_with(|| command.name().to_string());
        self.policy.get_or_insert(command.default_policy());
        self.horizon.get_or_insert(command.default_horizon());
        self.arm_means.get_or_insert(command.default_arm_means());
        if self.theta_star.is_none() {
            self.theta_star = Some(EnvConfig::contextual(self.family).theta_star);
        }
        if self.estimators.is_none() {
            self.estimators = Some(ExperimentSpec::contextual(self.family).estimators);
        }
        let problems = self.violations(command);
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(CliError::Validation(problems))
        }
    }

    fn seed(&self) -> u64 {
        self.master_seed.unwrap_or(0)
    }

    fn reps(&self) -> usize {
        self.n_reps.unwrap_or(1000)
    }

    fn horizon(&self) -> usize {
        self.horizon.unwrap_or(1000)
    }

    pub fn policy_config(&self) -> PolicyConfig {
        let kind = match self.policy.unwrap_or(PolicyName::Ts) {
            PolicyName::Ts => PolicyKind::Thompson,
            PolicyName::TsHodges => PolicyKind::ThompsonHodges,
            PolicyName::EpsGreedy => PolicyKind::EpsGreedy,
            PolicyName::Fixed => PolicyKind::Fixed { p: self.fixed_p },
            PolicyName::Uniform => PolicyKind::Uniform,
        };
        PolicyConfig {
            kind,
            clip: self.clip,
            epsilon: self.epsilon,
            hodges_exponent: self.hodges_exponent,
            ..PolicyConfig::default()
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        let theta_star = self
            .theta_star
            .clone()
            .unwrap_or_else(|| EnvConfig::contextual(self.family).theta_star);
        EnvConfig {
            family: self.family,
            context_dim: (theta_star.len() / 2).saturating_sub(1),
            theta_star,
            context_low: self.context_low,
            context_high: self.context_high,
        }
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            name: self.experiment.clone().unwrap_or_default(),
            env: self.env_config(),
            policy: self.policy_config(),
            eval_policy: match self.eval_policy {
                EvalName::Uniform => EvalPolicyKind::Uniform,
                EvalName::ExpectedPi => EvalPolicyKind::ExpectedPi {
                    n_pilot: self.n_pilot,
                },
            },
            design: self.design,
            estimators: self
                .estimators
                .clone()
                .unwrap_or_else(|| ExperimentSpec::contextual(self.family).estimators),
            targets: self.targets.clone(),
            t_grid: self.t_grid.clone(),
            n_reps: self.reps(),
            alpha: self.alpha,
            master_seed: self.seed(),
            threads: self.threads,
            lambda_pilots: self.lambda_pilots,
            self_norm: self.self_norm,
            calibration: self.calibration,
        }
    }

    pub fn zstat_spec(&self) -> ZStatSpec {
        ZStatSpec {
            policy: self.policy_config(),
            family: self.family,
            arm_means: self.arm_means.unwrap_or([0.0, 0.0]),
            horizon: self.horizon(),
            n_reps: self.reps(),
            master_seed: self.seed(),
            threads: self.threads,
        }
    }

    pub fn allocation_spec(&self) -> AllocationSpec {
        AllocationSpec {
            policy: self.policy_config(),
            delta: self.delta,
            horizon: self.horizon(),
            n_reps: self.reps(),
            master_seed: self.seed(),
            threads: self.threads,
        }
    }

    /// The configured policy next to independent sampling.
    pub fn uniformity_spec(&self) -> UniformitySpec {
        let mut policies = vec![self.policy_config()];
        if self.policy != Some(PolicyName::Uniform) {
            policies.push(PolicyConfig::uniform());
        }
        UniformitySpec {
            policies,
            deltas: self.deltas.clone(),
            horizon: self.horizon(),
            n_reps: self.reps(),
            alpha: self.alpha,
            master_seed: self.seed(),
            threads: self.threads,
        }
    }

    pub fn evalpolicy_spec(&self) -> EvalPolicyStudySpec {
        EvalPolicyStudySpec {
            policy: self.policy_config(),
            family: self.family,
            arm_means: self.arm_means.unwrap_or([0.0, 1.0]),
            horizon: self.horizon(),
            n_reps: self.reps(),
            n_pilot: self.n_pilot,
            master_seed: self.seed(),
            threads: self.threads,
        }
    }

    /// Every problem with the configuration for `command`.
    pub fn violations(&self, command: Command) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(theta) = &self.theta_star {
            if theta.len() < 2 || theta.len() % 2 != 0 {
                out.push(format!(
                    "theta_star must have even length >= 2, got {}",
                    theta.len()
                ));
            }
        }
        if !self.fixed_p.is_finite() || !(0.0..=1.0).contains(&self.fixed_p) {
            out.push(format!("fixed_p must lie in [0, 1], got {}", self.fixed_p));
        }
        match command {
            Command::Coverage | Command::Mse | Command::Calibrate => {
                out.extend(self.experiment_spec().violations());
            }
            _ => {
                if let Err(e) = self.policy_config().validate() {
                    out.push(format!("policy: {e}"));
                }
                if self.reps() < 2 {
                    out.push(format!("n_reps must be at least 2, got {}", self.reps()));
                }
                if self.horizon() == 0 {
                    out.push("horizon must be positive".into());
                }
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    out.push(format!("alpha must lie in (0, 1), got {}", self.alpha));
                }
                if let Some(m) = self.arm_means {
                    if m.iter().any(|v| !v.is_finite()) {
                        out.push("arm_means must be finite".into());
                    }
                }
            }
        }
        match command {
            Command::Evalpolicy if self.n_pilot < 100 => {
                out.push(format!(
                    "n_pilot must be at least 100, got {}",
                    self.n_pilot
                ));
            }
            Command::Uniformity if self.deltas.is_empty() => {
                out.push("deltas must not be empty".into())
            }
            Command::Allocation if !self.delta.is_finite() => {
                out.push("delta must be finite".into())
            }
            _ => {}
        }
        out
    }
}

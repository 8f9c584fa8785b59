//! Monte Carlo experiments: coverage, volume and MSE of every estimator,
//! z-statistic distributions, allocation histograms and the uniformity study.
//!
//! Replication `rep` at horizon `T` always draws from the stream
//! `(master_seed, [tag, T, rep, ...])`, and results are gathered in rep order,
//! so every output is bitwise identical for any thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{run_trajectory, EnvConfig, GlmFamily, Trajectory};
use crate::error::{domain, Error, Result};
use crate::estimators::{
    aw_least_squares, aw_mle_glm, design_rows, design_vector, gram, ridge_estimator,
    select_lambda_t, w_decorrelated, Design, EstimatorReport, NewtonOptions, WDecorrelated,
    Weighting,
};
use crate::evalpolicy::{awls_asymptotic_variance, estimate_expected_pi, EvalPolicy};
use crate::policies::{PolicyConfig, PolicyState};
use crate::regions::{
    calibrate_cutoff, hotelling_region, marginal_normal_region, project_ellipsoid,
    self_normalized_region, wdec_region, Ellipsoid, SelfNormParams,
};
use crate::statfn::{
    cholesky, normal_cdf, normal_quantile, symmetric_eigenvalues, Matrix, RngStream,
};

pub const TAG_REPLICATION: u64 = 1;
pub const TAG_LAMBDA_PILOT: u64 = 2;
pub const TAG_ZSTAT: u64 = 3;
pub const TAG_ALLOCATION: u64 = 4;
pub const TAG_UNIFORMITY: u64 = 5;
pub const TAG_EVALPOLICY: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ols,
    AwLs,
    Mle,
    AwMle,
    WDec,
    SelfNorm,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        Self::Ols,
        Self::AwLs,
        Self::Mle,
        Self::AwMle,
        Self::WDec,
        Self::SelfNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ols => "ols",
            Self::AwLs => "aw_ls",
            Self::Mle => "mle",
            Self::AwMle => "aw_mle",
            Self::WDec => "w_dec",
            Self::SelfNorm => "self_norm",
        }
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, Self::AwLs | Self::AwMle)
    }
}

/// Which part of `θ*` a region covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// The whole vector `[θ₀*, θ₁*]`.
    Full,
    /// The advantage block `θ₁*`.
    Advantage,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "theta",
            Self::Advantage => "theta1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Hotelling,
    Projected,
    NormalBlock,
    SelfNormalized,
}

impl RegionKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Hotelling => "hotelling",
            Self::Projected => "projected",
            Self::NormalBlock => "normal_block",
            Self::SelfNormalized => "self_normalized",
        }
    }

    /// The region reported for `estimator` on `target`.
    pub fn for_cell(estimator: EstimatorKind, target: Target) -> Self {
        use EstimatorKind::*;
        match (estimator, target) {
            (SelfNorm, Target::Full) => Self::SelfNormalized,
            (SelfNorm, Target::Advantage) => Self::Projected,
            (_, Target::Full) => Self::Hotelling,
            (AwLs | AwMle, Target::Advantage) => Self::Projected,
            (Ols | Mle | WDec, Target::Advantage) => Self::NormalBlock,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalPolicyKind {
    Uniform,
    ExpectedPi { n_pilot: usize },
}

/// How volumes of under-covering methods are calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    Off,
    /// Separate empirical cutoff at each horizon.
    #[default]
    PerHorizon,
    /// One cutoff from the statistics of all horizons together.
    Pooled,
}

/// Full description of a coverage / MSE experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub eval_policy: EvalPolicyKind,
    pub design: Design,
    pub estimators: Vec<EstimatorKind>,
    pub targets: Vec<Target>,
    pub t_grid: Vec<usize>,
    pub n_reps: usize,
    pub alpha: f64,
    pub master_seed: u64,
    /// Worker threads, 0 for the rayon default.
    pub threads: usize,
    /// Pilot runs used to choose `λ_T` for the W-decorrelated estimator.
    pub lambda_pilots: usize,
    pub self_norm: SelfNormParams,
    pub calibration: Calibration,
}

impl ExperimentSpec {
    /// Defaults for the contextual experiments: clipped Thompson sampling,
    /// `T ∈ {100, 316, 1000}`, 1000 replications, `α = 0.1`.
    pub fn contextual(family: GlmFamily) -> Self {
        let estimators = if family.is_gaussian() {
            vec![
                EstimatorKind::Ols,
                EstimatorKind::AwLs,
                EstimatorKind::WDec,
                EstimatorKind::SelfNorm,
            ]
        } else {
            vec![EstimatorKind::Mle, EstimatorKind::AwMle]
        };
        Self {
            name: "coverage".into(),
            env: EnvConfig::contextual(family),
            policy: PolicyConfig::thompson(0.01),
            eval_policy: EvalPolicyKind::Uniform,
            design: Design::Interaction,
            estimators,
            targets: vec![Target::Full, Target::Advantage],
            t_grid: vec![100, 316, 1000],
            n_reps: 1000,
            alpha: 0.1,
            master_seed: 0,
            threads: 0,
            lambda_pilots: 200,
            self_norm: SelfNormParams::default(),
            calibration: Calibration::PerHorizon,
        }
    }

    /// Every constraint violation, empty when the spec is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.env.validate() {
            out.push(format!("env: {e}"));
        }
        if let Err(e) = self.policy.validate() {
            out.push(format!("policy: {e}"));
        }
        if self.n_reps < 2 {
            out.push(format!("n_reps must be at least 2, got {}", self.n_reps));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            out.push(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.t_grid.is_empty() {
            out.push("t_grid must not be empty".into());
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            out.push("t_grid must be strictly ascending".into());
        }
        if self.t_grid.first() == Some(&0) {
            out.push("horizons must be positive".into());
        }
        if self.estimators.is_empty() {
            out.push("estimators must not be empty".into());
        }
        if self.targets.is_empty() {
            out.push("targets must not be empty".into());
        }
        if let EvalPolicyKind::ExpectedPi { n_pilot } = self.eval_policy {
            if n_pilot < 100 {
                out.push(format!("expected_pi needs n_pilot >= 100, got {n_pilot}"));
            }
        }
        if self.estimators.contains(&EstimatorKind::WDec) && self.lambda_pilots == 0 {
            out.push("lambda_pilots must be positive when w_dec is requested".into());
        }
        let sn = self.self_norm;
        if !(sn.lambda > 0.0 && sn.sigma > 0.0 && sn.s >= 0.0) {
            out.push("self_norm: lambda and sigma must be positive, s nonnegative".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(domain(v.join("; ")))
        }
    }

    fn advantage_dim(&self) -> usize {
        self.env.feature_dim()
    }

    fn target_truth(&self, target: Target) -> &[f64] {
        match target {
            Target::Full => &self.env.theta_star,
            Target::Advantage => self.env.theta1(),
        }
    }
}

/// Runs `f` on a pool of `threads` workers (the global pool when 0).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| domain(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Quantities fixed per horizon before any replication runs.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonContext {
    pub horizon: usize,
    pub eval_policy: EvalPolicy,
    pub lambda_t: Option<f64>,
}

/// Builds the evaluation policy and `λ_T` for one horizon from pilot runs
/// that use their own stream tags.
pub fn prepare_horizon(spec: &ExperimentSpec, horizon: usize) -> Result<HorizonContext> {
    let eval_policy = match spec.eval_policy {
        EvalPolicyKind::Uniform => EvalPolicy::Uniform,
        EvalPolicyKind::ExpectedPi { n_pilot } => {
            estimate_expected_pi(&spec.env, &spec.policy, horizon, n_pilot, spec.master_seed)?
        }
    };
    let lambda_t = if spec.estimators.contains(&EstimatorKind::WDec) {
        let dim = spec.env.param_dim();
        let eigs: Vec<f64> = (0..spec.lambda_pilots)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::derived(
                    spec.master_seed,
                    &[TAG_LAMBDA_PILOT, horizon as u64, i as u64],
                );
                let traj = simulate(&spec.env, &spec.policy, horizon, &mut rng)?;
                let rows = design_rows(&traj, spec.design, Weighting::Unit)?;
                Ok(symmetric_eigenvalues(&gram(&rows, dim))?[0])
            })
            .collect::<Result<_>>()?;
        Some(select_lambda_t(&eigs, horizon)?)
    } else {
        None
    };
    Ok(HorizonContext {
        horizon,
        eval_policy,
        lambda_t,
    })
}

fn simulate(
    env: &EnvConfig,
    policy: &PolicyConfig,
    horizon: usize,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    let mut state = PolicyState::new(policy, env.feature_dim())?;
    run_trajectory(env, &mut state, horizon, rng)
}

/// Membership and size of one region at `θ*` in one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOutcome {
    pub covered: bool,
    /// Region statistic at the target.
    pub statistic: f64,
    /// `statistic / cutoff`; the region covers iff this is at most 1.
    pub ratio: f64,
    pub volume: f64,
    /// Squared error of the region center against the target.
    pub sq_error: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub estimator: EstimatorKind,
    pub region: RegionKind,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOutcome {
    pub estimator: EstimatorKind,
    pub theta_hat: Vec<f64>,
    /// Coordinatewise standardized errors (empty for the ridge fit).
    pub z_stats: Vec<f64>,
}

/// Everything computed from one simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub horizon: usize,
    pub rep: usize,
    pub allocation: f64,
    pub estimates: Vec<std::result::Result<EstimateOutcome, Error>>,
    pub cells: Vec<(CellKey, std::result::Result<CellOutcome, Error>)>,
}

enum Fit {
    Sandwich(EstimatorReport),
    WDec(WDecorrelated),
    Ridge(Vec<f64>, Matrix),
}

fn fit_estimator(
    spec: &ExperimentSpec,
    ctx: &HorizonContext,
    kind: EstimatorKind,
    unit_rows: &[crate::estimators::DesignRow],
    aw_rows: &[crate::estimators::DesignRow],
) -> Result<Fit> {
    let family = spec.env.family;
    let glm = |rows: &[crate::estimators::DesignRow]| -> Result<EstimatorReport> {
        if family.is_gaussian() {
            aw_least_squares(rows)
        } else {
            aw_mle_glm(rows, family, None, NewtonOptions::default())
        }
    };
    Ok(match kind {
        EstimatorKind::Ols => Fit::Sandwich(aw_least_squares(unit_rows)?),
        EstimatorKind::AwLs => Fit::Sandwich(aw_least_squares(aw_rows)?),
        EstimatorKind::Mle => Fit::Sandwich(glm(unit_rows)?),
        EstimatorKind::AwMle => Fit::Sandwich(glm(aw_rows)?),
        EstimatorKind::WDec => {
            let ols = aw_least_squares(unit_rows)?;
            let lambda = ctx
                .lambda_t
                .ok_or_else(|| Error::Misuse("lambda_T was not prepared".into()))?;
            Fit::WDec(w_decorrelated(
                unit_rows,
                lambda,
                &ols.theta_hat,
                ols.sigma2_hat.unwrap_or(0.0),
            )?)
        }
        EstimatorKind::SelfNorm => {
            let (theta, v) =
                ridge_estimator(unit_rows, spec.env.param_dim(), spec.self_norm.lambda)?;
            Fit::Ridge(theta, v)
        }
    })
}

fn z_stats(fit: &Fit, truth: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(match fit {
        Fit::Sandwich(rep) => {
            let v = rep.sandwich()?;
            let root_t = (rep.n as f64).sqrt();
            let z = (0..rep.dim())
                .map(|j| root_t * (rep.theta_hat[j] - truth[j]) / v[(j, j)].sqrt())
                .collect();
            (rep.theta_hat.clone(), z)
        }
        Fit::WDec(wd) => {
            let z = (0..wd.theta.len())
                .map(|j| (wd.theta[j] - truth[j]) / wd.variance[(j, j)].sqrt())
                .collect();
            (wd.theta.clone(), z)
        }
        Fit::Ridge(theta, _) => (theta.clone(), Vec::new()),
    })
}

fn region_for(
    spec: &ExperimentSpec,
    fit: &Fit,
    kind: EstimatorKind,
    target: Target,
    n: usize,
) -> Result<Ellipsoid> {
    let p = spec.advantage_dim();
    match (fit, target) {
        (Fit::Sandwich(rep), Target::Full) => hotelling_region(rep, spec.alpha),
        (Fit::Sandwich(rep), Target::Advantage) if kind.is_weighted() => {
            project_ellipsoid(&hotelling_region(rep, spec.alpha)?, p)
        }
        (Fit::Sandwich(rep), Target::Advantage) => marginal_normal_region(rep, p, spec.alpha),
        (Fit::WDec(wd), Target::Full) => {
            wdec_region(&wd.theta, &wd.variance, wd.theta.len(), n, spec.alpha)
        }
        (Fit::WDec(wd), Target::Advantage) => {
            wdec_region(&wd.theta, &wd.variance, p, n, spec.alpha)
        }
        (Fit::Ridge(theta, v), target) => {
            let ball =
                self_normalized_region(theta, v, spec.alpha, spec.self_norm)?.to_ellipsoid()?;
            match target {
                Target::Full => Ok(ball),
                Target::Advantage => project_ellipsoid(&ball, p),
            }
        }
    }
}

fn cell_outcome(region: &Ellipsoid, truth: &[f64]) -> Result<CellOutcome> {
    let statistic = region.statistic(truth)?;
    let sq_error = region
        .center()
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(CellOutcome {
        covered: statistic <= region.cutoff(),
        statistic,
        ratio: statistic / region.cutoff(),
        volume: region.volume()?,
        sq_error,
        dim: region.dim(),
    })
}

/// One replication at the horizon described by `ctx`.
///
/// Estimator and region failures are recorded in the result; only failures
/// to simulate the trajectory itself are returned as errors.
pub fn run_replication(
    spec: &ExperimentSpec,
    ctx: &HorizonContext,
    rep: usize,
) -> Result<RepRecord> {
    if rep >= spec.n_reps {
        return Err(Error::Index {
            index: rep,
            len: spec.n_reps,
        });
    }
    let mut rng = RngStream::derived(
        spec.master_seed,
        &[TAG_REPLICATION, ctx.horizon as u64, rep as u64],
    );
    let traj = simulate(&spec.env, &spec.policy, ctx.horizon, &mut rng)?;
    let unit_rows = design_rows(&traj, spec.design, Weighting::Unit)?;
    let aw_rows = design_rows(&traj, spec.design, Weighting::Adaptive(&ctx.eval_policy))?;
    let theta_star = &spec.env.theta_star;
    let mut estimates = Vec::with_capacity(spec.estimators.len());
    let mut cells = Vec::with_capacity(spec.estimators.len() * spec.targets.len());
    for &kind in &spec.estimators {
        let fit = fit_estimator(spec, ctx, kind, &unit_rows, &aw_rows);
        estimates.push(fit.as_ref().map_err(Clone::clone).and_then(|f| {
            let (theta_hat, z) = z_stats(f, theta_star)?;
            Ok(EstimateOutcome {
                estimator: kind,
                theta_hat,
                z_stats: z,
            })
        }));
        for &target in &spec.targets {
            let key = CellKey {
                estimator: kind,
                region: RegionKind::for_cell(kind, target),
                target,
            };
            let outcome = fit.as_ref().map_err(Clone::clone).and_then(|f| {
                let region = region_for(spec, f, kind, target, ctx.horizon)?;
                cell_outcome(&region, spec.target_truth(target))
            });
            cells.push((key, outcome));
        }
    }
    Ok(RepRecord {
        horizon: ctx.horizon,
        rep,
        allocation: traj.allocation(),
        estimates,
        cells,
    })
}

/// Aggregated metrics of one (estimator, region, target, T) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: EstimatorKind,
    pub region: RegionKind,
    pub target: Target,
    pub horizon: usize,
    pub alpha: f64,
    pub n_reps: usize,
    /// Replications where the estimator and region succeeded.
    pub successes: usize,
    pub failures: usize,
    pub coverage: f64,
    pub coverage_se: f64,
    /// Reported volume, calibrated when `calibrated` is set.
    pub mean_volume: f64,
    pub volume_se: f64,
    /// Mean volume at the nominal cutoff.
    pub raw_volume: f64,
    /// Empirical `(1-α)` quantile of `statistic / cutoff` at `θ*`.
    pub ratio_quantile: f64,
    pub mse: f64,
    pub mse_se: f64,
    pub calibrated: bool,
}

impl SummaryRow {
    /// Fewer than two successful replications.
    pub fn insufficient(&self) -> bool {
        self.successes < 2
    }
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregates replication records into one row per cell and horizon.
///
/// Coverage is computed over successful replications. When a method's
/// coverage is below `1-α` at any horizon, its volumes are reported at the
/// empirical cutoff that restores `1-α` coverage (see [`Calibration`]).
pub fn summarize(records: &[RepRecord], alpha: f64, calibration: Calibration) -> Vec<SummaryRow> {
    let mut order: Vec<CellKey> = Vec::new();
    let mut groups: BTreeMap<(CellKey, usize), Vec<&std::result::Result<CellOutcome, Error>>> =
        BTreeMap::new();
    for rec in records {
        for (key, outcome) in &rec.cells {
            if !order.contains(key) {
                order.push(*key);
            }
            groups.entry((*key, rec.horizon)).or_default().push(outcome);
        }
    }
    let mut rows = Vec::new();
    for key in &order {
        let mut key_rows = Vec::new();
        let mut pooled_ratios = Vec::new();
        for ((k, horizon), outcomes) in groups.range((*key, 0)..=(*key, usize::MAX)) {
            debug_assert_eq!(k, key);
            let ok: Vec<&CellOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
            let n = ok.len();
            let ratios: Vec<f64> = ok.iter().map(|o| o.ratio).collect();
            pooled_ratios.extend_from_slice(&ratios);
            let coverage = ok.iter().filter(|o| o.covered).count() as f64 / n as f64;
            let volumes: Vec<f64> = ok.iter().map(|o| o.volume).collect();
            let sq: Vec<f64> = ok.iter().map(|o| o.sq_error).collect();
            let (raw_volume, _) = mean_se(&volumes);
            let (mse, mse_se) = mean_se(&sq);
            key_rows.push((
                SummaryRow {
                    estimator: key.estimator,
                    region: key.region,
                    target: key.target,
                    horizon: *horizon,
                    alpha,
                    n_reps: outcomes.len(),
                    successes: n,
                    failures: outcomes.len() - n,
                    coverage,
                    coverage_se: (coverage * (1.0 - coverage) / n as f64).sqrt(),
                    mean_volume: raw_volume,
                    volume_se: f64::NAN,
                    raw_volume,
                    ratio_quantile: calibrate_cutoff(&ratios, alpha).unwrap_or(f64::NAN),
                    mse,
                    mse_se,
                    calibrated: false,
                },
                volumes,
                ok.first().map_or(0, |o| o.dim),
            ));
        }
        let under = key_rows
            .iter()
            .any(|(r, _, _)| !r.insufficient() && r.coverage < 1.0 - alpha);
        let pooled_q = calibrate_cutoff(&pooled_ratios, alpha).unwrap_or(f64::NAN);
        for (mut row, volumes, dim) in key_rows {
            let scale = match calibration {
                Calibration::PerHorizon if under => Some(row.ratio_quantile),
                Calibration::Pooled if under => Some(pooled_q),
                _ => None,
            };
            let factor = scale.map_or(1.0, |q| q.powf(0.5 * dim as f64));
            let scaled: Vec<f64> = volumes.iter().map(|v| v * factor).collect();
            let (mean_volume, volume_se) = mean_se(&scaled);
            row.mean_volume = mean_volume;
            row.volume_se = volume_se;
            row.calibrated = scale.is_some();
            rows.push(row);
        }
    }
    rows
}

/// Records and summary of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub contexts: Vec<HorizonContext>,
    pub records: Vec<RepRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every horizon of `spec` and summarizes.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    with_threads(spec.threads, || {
        let mut contexts = Vec::with_capacity(spec.t_grid.len());
        let mut records = Vec::with_capacity(spec.t_grid.len() * spec.n_reps);
        for &horizon in &spec.t_grid {
            let ctx = prepare_horizon(spec, horizon)?;
            let recs: Vec<RepRecord> = (0..spec.n_reps)
                .into_par_iter()
                .map(|rep| run_replication(spec, &ctx, rep))
                .collect::<Result<_>>()?;
            records.extend(recs);
            contexts.push(ctx);
        }
        let summary = summarize(&records, spec.alpha, spec.calibration);
        Ok(ExperimentResult {
            contexts,
            records,
            summary,
        })
    })?
}

/// Kolmogorov-Smirnov distance between a sample and `N(0, s²)` with
/// `s² = mean(x²)`.
pub fn ks_distance_normal(sample: &[f64]) -> f64 {
    let n = sample.len();
    if n == 0 {
        return f64::NAN;
    }
    let scale = (sample.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x / scale);
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            (hi - f).max(f - lo)
        })
        .fold(0.0, f64::max)
}

/// Two-arm bandit with Gaussian noise used by the z-statistic, allocation
/// and uniformity experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZStatSpec {
    pub policy: PolicyConfig,
    pub family: GlmFamily,
    /// Arm means `[μ₀, μ₁]`.
    pub arm_means: [f64; 2],
    pub horizon: usize,
    pub n_reps: usize,
    pub master_seed: u64,
    pub threads: usize,
}

impl Default for ZStatSpec {
    fn default() -> Self {
        Self {
            policy: PolicyConfig::thompson(0.01),
            family: GlmFamily::Normal,
            arm_means: [0.0, 0.0],
            horizon: 1000,
            n_reps: 5000,
            master_seed: 0,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZStatResult {
    /// Replication index of each retained pair.
    pub reps: Vec<usize>,
    /// `sqrt(Σ A_t) (θ̂₁ - θ₁*)` for the arm-1 sample mean.
    pub ols: Vec<f64>,
    /// `T^{-1/2} Σ (A_t / sqrt(π_{t,1})) (θ̂₁^AW - θ₁*)`.
    pub aw: Vec<f64>,
    pub ks_ols: f64,
    pub ks_aw: f64,
    pub failures: usize,
}

fn two_arm_env(family: GlmFamily, means: [f64; 2]) -> EnvConfig {
    EnvConfig::two_arm(family, means[0], means[1] - means[0])
}

/// Distribution of the arm-1 z-statistics of OLS and AW-LS.
pub fn zstat_experiment(spec: &ZStatSpec) -> Result<ZStatResult> {
    if spec.n_reps < 2 {
        return Err(domain("zstat needs at least 2 replications"));
    }
    let env = two_arm_env(spec.family, spec.arm_means);
    let truth = spec.arm_means[1];
    let pairs: Vec<Option<(f64, f64)>> = with_threads(spec.threads, || {
        (0..spec.n_reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = RngStream::derived(
                    spec.master_seed,
                    &[TAG_ZSTAT, spec.horizon as u64, rep as u64],
                );
                let traj = simulate(&env, &spec.policy, spec.horizon, &mut rng)?;
                Ok(arm1_zstats(&traj, truth))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let failures = pairs.iter().filter(|p| p.is_none()).count();
    let reps = (0..pairs.len()).filter(|&i| pairs[i].is_some()).collect();
    let (ols, aw): (Vec<f64>, Vec<f64>) = pairs.into_iter().flatten().unzip();
    Ok(ZStatResult {
        reps,
        ks_ols: ks_distance_normal(&ols),
        ks_aw: ks_distance_normal(&aw),
        ols,
        aw,
        failures,
    })
}

fn arm1_zstats(traj: &Trajectory, truth: f64) -> Option<(f64, f64)> {
    let mut n1: f64 = 0.0;
    let mut sum1 = 0.0;
    let mut wsum = 0.0;
    let mut wr = 0.0;
    for t in 0..traj.len() {
        if traj.actions[t] == 1 {
            let w = 1.0 / traj.prob_arm1[t].sqrt();
            n1 += 1.0;
            sum1 += traj.rewards_raw[t];
            wsum += w;
            wr += w * traj.rewards_raw[t];
        }
    }
    if n1 == 0.0 {
        return None;
    }
    let ols = n1.sqrt() * (sum1 / n1 - truth);
    let aw = wsum / (traj.len() as f64).sqrt() * (wr / wsum - truth);
    Some((ols, aw))
}

pub const ALLOCATION_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSpec {
    pub policy: PolicyConfig,
    /// Margin `Δ* = μ₁ - μ₀` with `μ₀ = 0` and unit Gaussian noise.
    pub delta: f64,
    pub horizon: usize,
    pub n_reps: usize,
    pub master_seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    /// `(1/T) Σ A_t` per replication.
    pub allocations: Vec<f64>,
    /// Counts over 50 equal bins of `[0, 1]`.
    pub histogram: Vec<u64>,
    pub mean: f64,
    /// Sample variance of the allocations.
    pub variance: f64,
    /// `1/(4T)`, the variance under independent fair coin flips.
    pub binomial_variance: f64,
}

/// Histogram of the fraction of pulls of arm 1.
pub fn allocation_experiment(spec: &AllocationSpec) -> Result<AllocationResult> {
    if spec.n_reps < 2 {
        return Err(domain("allocation needs at least 2 replications"));
    }
    let env = EnvConfig::two_arm(GlmFamily::Normal, 0.0, spec.delta);
    let allocations: Vec<f64> = with_threads(spec.threads, || {
        (0..spec.n_reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = RngStream::derived(
                    spec.master_seed,
                    &[
                        TAG_ALLOCATION,
                        spec.horizon as u64,
                        rep as u64,
                        spec.delta.to_bits(),
                    ],
                );
                Ok(simulate(&env, &spec.policy, spec.horizon, &mut rng)?.allocation())
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut histogram = vec![0u64; ALLOCATION_BINS];
    for &a in &allocations {
        let bin = ((a * ALLOCATION_BINS as f64) as usize).min(ALLOCATION_BINS - 1);
        histogram[bin] += 1;
    }
    let (mean, se) = mean_se(&allocations);
    let n = allocations.len() as f64;
    Ok(AllocationResult {
        variance: se * se * n,
        mean,
        histogram,
        allocations,
        binomial_variance: 0.25 / spec.horizon as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformitySpec {
    pub policies: Vec<PolicyConfig>,
    pub deltas: Vec<f64>,
    pub horizon: usize,
    pub n_reps: usize,
    pub alpha: f64,
    pub master_seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformityRow {
    pub policy: &'static str,
    pub delta: f64,
    pub horizon: usize,
    pub coverage: f64,
    pub coverage_se: f64,
    pub successes: usize,
    pub failures: usize,
}

/// Whether the two-sided normal-approximation OLS interval for the margin
/// covers `delta`, using `Z = [1, A]`.
fn margin_interval_covers(traj: &Trajectory, delta: f64, z_crit: f64) -> Result<bool> {
    let rows: Vec<_> = (0..traj.len())
        .map(|t| crate::estimators::DesignRow {
            z: design_vector(Design::Interaction, &[1.0], traj.actions[t]),
            w: 1.0,
            prob_logged: traj.prob_logged(t),
            reward: traj.rewards_raw[t],
        })
        .collect();
    let fit = aw_least_squares(&rows)?;
    let g_inv = cholesky(&gram(&rows, 2))?.inverse();
    let se = (fit.sigma2_hat.unwrap_or(0.0) * g_inv[(1, 1)]).sqrt();
    Ok((fit.theta_hat[1] - delta).abs() <= z_crit * se)
}

/// Coverage of the OLS margin interval over a grid of margins.
pub fn uniformity_experiment(spec: &UniformitySpec) -> Result<Vec<UniformityRow>> {
    if spec.n_reps < 2 {
        return Err(domain("uniformity needs at least 2 replications"));
    }
    if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
        return Err(domain(format!(
            "alpha must lie in (0, 1), got {}",
            spec.alpha
        )));
    }
    let z_crit = normal_quantile(1.0 - spec.alpha / 2.0)?;
    with_threads(spec.threads, || {
        let mut rows = Vec::new();
        for (pi, policy) in spec.policies.iter().enumerate() {
            for &delta in &spec.deltas {
                let env = EnvConfig::two_arm(GlmFamily::Normal, 0.0, delta);
                let hits: Vec<Option<bool>> = (0..spec.n_reps)
                    .into_par_iter()
                    .map(|rep| {
                        let mut rng = RngStream::derived(
                            spec.master_seed,
                            &[
                                TAG_UNIFORMITY,
                                spec.horizon as u64,
                                rep as u64,
                                pi as u64,
                                delta.to_bits(),
                            ],
                        );
                        let traj = simulate(&env, policy, spec.horizon, &mut rng)?;
                        Ok(margin_interval_covers(&traj, delta, z_crit).ok())
                    })
                    .collect::<Result<_>>()?;
                let ok: Vec<bool> = hits.iter().flatten().copied().collect();
                let n = ok.len();
                let coverage = ok.iter().filter(|&&c| c).count() as f64 / n as f64;
                rows.push(UniformityRow {
                    policy: policy.kind.name(),
                    delta,
                    horizon: spec.horizon,
                    coverage,
                    coverage_se: (coverage * (1.0 - coverage) / n as f64).sqrt(),
                    successes: n,
                    failures: spec.n_reps - n,
                });
            }
        }
        Ok(rows)
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPolicyStudySpec {
    pub policy: PolicyConfig,
    pub family: GlmFamily,
    pub arm_means: [f64; 2],
    pub horizon: usize,
    pub n_reps: usize,
    pub n_pilot: usize,
    pub master_seed: u64,
    pub threads: usize,
}

impl Default for EvalPolicyStudySpec {
    fn default() -> Self {
        Self {
            policy: PolicyConfig::thompson(0.01),
            family: GlmFamily::Normal,
            arm_means: [0.0, 1.0],
            horizon: 1000,
            n_reps: 2000,
            n_pilot: 1000,
            master_seed: 0,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: u8,
    /// Mean of `T (θ̂_a - θ*_a)²`.
    pub t_mse: f64,
    pub t_mse_se: f64,
    /// Asymptotic variance averaged over replications.
    pub predicted: f64,
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPolicySummary {
    pub eval_policy: &'static str,
    /// Mean of `‖θ̂ - θ*‖²` over both arm means.
    pub mse: f64,
    pub mse_se: f64,
    pub arms: Vec<ArmSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPolicyStudy {
    pub table: EvalPolicy,
    pub horizon: usize,
    pub failures: usize,
    pub uniform: EvalPolicySummary,
    pub expected_pi: EvalPolicySummary,
    /// Paired mean of `‖θ̂_expected - θ*‖² - ‖θ̂_uniform - θ*‖²`.
    pub mse_diff: f64,
    pub mse_diff_se: f64,
}

struct EvalRep {
    sq: [[f64; 2]; 2],
    predicted: [[f64; 2]; 2],
    lower: [[f64; 2]; 2],
}

fn eval_rep(
    traj: &Trajectory,
    evals: [&EvalPolicy; 2],
    truth: [f64; 2],
    sigma2: [f64; 2],
) -> Result<EvalRep> {
    let n = traj.len() as f64;
    let mut out = EvalRep {
        sq: [[0.0; 2]; 2],
        predicted: [[0.0; 2]; 2],
        lower: [[0.0; 2]; 2],
    };
    for (e, eval) in evals.iter().enumerate() {
        let rows = design_rows(traj, Design::ArmIndicator, Weighting::Adaptive(eval))?;
        let fit = aw_least_squares(&rows)?;
        let mut pi_bar = [0.0; 2];
        let mut eval_bar = [0.0; 2];
        let mut cross = [0.0; 2];
        for t in 0..traj.len() {
            let p1 = traj.prob_arm1[t];
            for a in 0..2u8 {
                let p = if a == 1 { p1 } else { 1.0 - p1 };
                let pe = eval.eval_prob(t + 1, a)?;
                pi_bar[a as usize] += p / n;
                eval_bar[a as usize] += pe / n;
                cross[a as usize] += (p * pe).sqrt() / n;
            }
        }
        let v = awls_asymptotic_variance(&sigma2, &pi_bar, &eval_bar, &cross)?;
        for a in 0..2 {
            out.sq[e][a] = (fit.theta_hat[a] - truth[a]).powi(2);
            out.predicted[e][a] = v[a].variance;
            out.lower[e][a] = v[a].lower_bound;
        }
    }
    Ok(out)
}

/// Compares the uniform and expected-propensity evaluation policies for the
/// AW-LS arm means, alongside the asymptotic variance formula.
pub fn evalpolicy_experiment(spec: &EvalPolicyStudySpec) -> Result<EvalPolicyStudy> {
    if spec.n_reps < 2 {
        return Err(domain("evalpolicy needs at least 2 replications"));
    }
    let env = two_arm_env(spec.family, spec.arm_means);
    let sigma2 = spec.arm_means.map(|m| spec.family.noise_variance(m));
    let n = spec.horizon as f64;
    with_threads(spec.threads, || {
        let table = estimate_expected_pi(
            &env,
            &spec.policy,
            spec.horizon,
            spec.n_pilot,
            spec.master_seed,
        )?;
        let reps: Vec<Option<EvalRep>> = (0..spec.n_reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = RngStream::derived(
                    spec.master_seed,
                    &[TAG_EVALPOLICY, spec.horizon as u64, rep as u64],
                );
                let traj = simulate(&env, &spec.policy, spec.horizon, &mut rng)?;
                Ok(eval_rep(
                    &traj,
                    [&EvalPolicy::Uniform, &table],
                    spec.arm_means,
                    sigma2,
                )
                .ok())
            })
            .collect::<Result<_>>()?;
        let ok: Vec<&EvalRep> = reps.iter().flatten().collect();
        if ok.len() < 2 {
            return Err(Error::InsufficientData(
                "fewer than 2 successful replications".into(),
            ));
        }
        let summary = |e: usize, name: &'static str| {
            let totals: Vec<f64> = ok.iter().map(|r| r.sq[e][0] + r.sq[e][1]).collect();
            let (mse, mse_se) = mean_se(&totals);
            let arms = (0..2)
                .map(|a| {
                    let scaled: Vec<f64> = ok.iter().map(|r| n * r.sq[e][a]).collect();
                    let (t_mse, t_mse_se) = mean_se(&scaled);
                    let predicted: Vec<f64> = ok.iter().map(|r| r.predicted[e][a]).collect();
                    let lower: Vec<f64> = ok.iter().map(|r| r.lower[e][a]).collect();
                    ArmSummary {
                        arm: a as u8,
                        t_mse,
                        t_mse_se,
                        predicted: mean_se(&predicted).0,
                        lower_bound: mean_se(&lower).0,
                    }
                })
                .collect();
            EvalPolicySummary {
                eval_policy: name,
                mse,
                mse_se,
                arms,
            }
        };
        let diffs: Vec<f64> = ok
            .iter()
            .map(|r| (r.sq[1][0] + r.sq[1][1]) - (r.sq[0][0] + r.sq[0][1]))
            .collect();
        let (mse_diff, mse_diff_se) = mean_se(&diffs);
        Ok(EvalPolicyStudy {
            uniform: summary(0, "uniform"),
            expected_pi: summary(1, "expected_pi"),
            table,
            horizon: spec.horizon,
            failures: spec.n_reps - ok.len(),
            mse_diff,
            mse_diff_se,
        })
    })?
}

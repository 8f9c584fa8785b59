//! One function per subcommand, each producing its output tables.

use banditlab::harness::{
    allocation_experiment, evalpolicy_experiment, run_experiment, uniformity_experiment,
    zstat_experiment, ExperimentResult, SummaryRow, ALLOCATION_BINS,
};

use crate::config::{Command, RunConfig};
use crate::row;
use crate::table::Table;

pub const COVERAGE_HEADER: &[&str] = &[
    "experiment",
    "family",
    "policy",
    "estimator",
    "region",
    "target",
    "T",
    "alpha",
    "n_reps",
    "coverage",
    "coverage_se",
    "mean_volume",
    "volume_se",
    "mse",
    "mse_se",
    "calibrated",
    "failures",
];
pub const MSE_HEADER: &[&str] = &[
    "experiment",
    "family",
    "policy",
    "estimator",
    "target",
    "T",
    "n_reps",
    "mse",
    "mse_se",
    "failures",
];
pub const CALIBRATION_HEADER: &[&str] = &[
    "experiment",
    "family",
    "policy",
    "estimator",
    "region",
    "target",
    "T",
    "alpha",
    "coverage",
    "ratio_quantile",
    "raw_volume",
    "mean_volume",
    "calibrated",
];
pub const ZSTAT_HEADER: &[&str] = &["method", "rep", "value"];
pub const KS_HEADER: &[&str] = &["method", "ks_distance"];
pub const ALLOCATION_HEADER: &[&str] = &["policy", "delta", "T", "rep", "allocation"];
pub const HISTOGRAM_HEADER: &[&str] = &["policy", "delta", "T", "bin_low", "bin_high", "count"];
pub const ALLOCATION_SUMMARY_HEADER: &[&str] = &[
    "policy",
    "delta",
    "T",
    "n_reps",
    "mean",
    "variance",
    "binomial_variance",
];
pub const UNIFORMITY_HEADER: &[&str] = &[
    "policy",
    "delta",
    "T",
    "alpha",
    "n_reps",
    "coverage",
    "coverage_se",
    "failures",
];
pub const EVALPOLICY_HEADER: &[&str] = &[
    "eval_policy",
    "arm",
    "T",
    "n_reps",
    "t_mse",
    "t_mse_se",
    "predicted",
    "lower_bound",
];
pub const EVALPOLICY_MSE_HEADER: &[&str] =
    &["eval_policy", "T", "n_reps", "mse", "mse_se", "failures"];
pub const EXPECTED_PI_HEADER: &[&str] = &["t", "pi_eval_arm1"];

pub fn run(command: Command, cfg: &RunConfig) -> Vec<Table> {
    match command {
        Command::Coverage => summary_tables(cfg, "coverage", COVERAGE_HEADER, coverage_row),
        Command::Mse => summary_tables(cfg, "mse", MSE_HEADER, mse_row),
        Command::Calibrate => {
            summary_tables(cfg, "calibration", CALIBRATION_HEADER, calibration_row)
        }
        Command::Zstat => zstat(cfg),
        Command::Allocation => allocation(cfg),
        Command::Uniformity => uniformity(cfg),
        Command::Evalpolicy => evalpolicy(cfg),
    }
}

struct Labels<'a> {
    experiment: &'a str,
    family: &'static str,
    policy: &'static str,
}

fn labels(cfg: &RunConfig) -> Labels<'_> {
    Labels {
        experiment: cfg.experiment.as_deref().unwrap_or(""),
        family: cfg.family.name(),
        policy: cfg.policy_config().kind.name(),
    }
}

fn coverage_row(l: &Labels, r: &SummaryRow) -> Vec<crate::table::Cell> {
    row![
        l.experiment,
        l.family,
        l.policy,
        r.estimator.name(),
        r.region.name(),
        r.target.name(),
        r.horizon,
        r.alpha,
        r.n_reps,
        r.coverage,
        r.coverage_se,
        r.mean_volume,
        r.volume_se,
        r.mse,
        r.mse_se,
        r.calibrated,
        r.failures,
    ]
}

fn mse_row(l: &Labels, r: &SummaryRow) -> Vec<crate::table::Cell> {
    row![
        l.experiment,
        l.family,
        l.policy,
        r.estimator.name(),
        r.target.name(),
        r.horizon,
        r.n_reps,
        r.mse,
        r.mse_se,
        r.failures,
    ]
}

fn calibration_row(l: &Labels, r: &SummaryRow) -> Vec<crate::table::Cell> {
    row![
        l.experiment,
        l.family,
        l.policy,
        r.estimator.name(),
        r.region.name(),
        r.target.name(),
        r.horizon,
        r.alpha,
        r.coverage,
        r.ratio_quantile,
        r.raw_volume,
        r.mean_volume,
        r.calibrated,
    ]
}

fn summary_tables(
    cfg: &RunConfig,
    name: &'static str,
    header: &'static [&'static str],
    make_row: fn(&Labels, &SummaryRow) -> Vec<crate::table::Cell>,
) -> Vec<Table> {
    let mut table = Table::new(name, header);
    let l = labels(cfg);
    match run_experiment(&cfg.experiment_spec()) {
        Ok(ExperimentResult { summary, .. }) => {
            for r in &summary {
                table.push(make_row(&l, r));
                if r.insufficient() {
                    table.fail(format!(
                        "insufficient data: {} {} T={} has {} successful replications",
                        r.estimator.name(),
                        r.target.name(),
                        r.horizon,
                        r.successes
                    ));
                }
            }
        }
        Err(e) => table.fail(e.to_string()),
    }
    vec![table]
}

fn zstat(cfg: &RunConfig) -> Vec<Table> {
    let mut z = Table::new("zstat", ZSTAT_HEADER);
    let mut ks = Table::new("ks", KS_HEADER);
    match zstat_experiment(&cfg.zstat_spec()) {
        Ok(res) => {
            for (method, values) in [("ols", &res.ols), ("aw_ls", &res.aw)] {
                for (rep, v) in res.reps.iter().zip(values) {
                    z.push(row![method, *rep, *v]);
                }
            }
            ks.push(row!["ols", res.ks_ols]);
            ks.push(row!["aw_ls", res.ks_aw]);
            if res.ols.len() < 2 {
                z.fail("insufficient data: fewer than 2 replications pulled arm 1");
                ks.fail("insufficient data: fewer than 2 replications pulled arm 1");
            }
        }
        Err(e) => {
            z.fail(e.to_string());
            ks.fail(e.to_string());
        }
    }
    vec![z, ks]
}

fn allocation(cfg: &RunConfig) -> Vec<Table> {
    let spec = cfg.allocation_spec();
    let policy = spec.policy.kind.name();
    let mut reps = Table::new("allocation", ALLOCATION_HEADER);
    let mut hist = Table::new("allocation_hist", HISTOGRAM_HEADER);
    let mut summary = Table::new("allocation_summary", ALLOCATION_SUMMARY_HEADER);
    match allocation_experiment(&spec) {
        Ok(res) => {
            for (rep, a) in res.allocations.iter().enumerate() {
                reps.push(row![policy, spec.delta, spec.horizon, rep, *a]);
            }
            let width = 1.0 / ALLOCATION_BINS as f64;
            for (b, count) in res.histogram.iter().enumerate() {
                hist.push(row![
                    policy,
                    spec.delta,
                    spec.horizon,
                    b as f64 * width,
                    (b + 1) as f64 * width,
                    *count,
                ]);
            }
            summary.push(row![
                policy,
                spec.delta,
                spec.horizon,
                spec.n_reps,
                res.mean,
                res.variance,
                res.binomial_variance,
            ]);
        }
        Err(e) => {
            for t in [&mut reps, &mut hist, &mut summary] {
                t.fail(e.to_string());
            }
        }
    }
    vec![reps, hist, summary]
}

fn uniformity(cfg: &RunConfig) -> Vec<Table> {
    let spec = cfg.uniformity_spec();
    let mut table = Table::new("uniformity", UNIFORMITY_HEADER);
    match uniformity_experiment(&spec) {
        Ok(rows) => {
            for r in rows {
                table.push(row![
                    r.policy,
                    r.delta,
                    r.horizon,
                    spec.alpha,
                    spec.n_reps,
                    r.coverage,
                    r.coverage_se,
                    r.failures,
                ]);
                if r.successes < 2 {
                    table.fail(format!("insufficient data: {} delta={}", r.policy, r.delta));
                }
            }
        }
        Err(e) => table.fail(e.to_string()),
    }
    vec![table]
}

fn evalpolicy(cfg: &RunConfig) -> Vec<Table> {
    let spec = cfg.evalpolicy_spec();
    let mut arms = Table::new("evalpolicy", EVALPOLICY_HEADER);
    let mut mse = Table::new("evalpolicy_mse", EVALPOLICY_MSE_HEADER);
    let mut table = Table::new("expected_pi", EXPECTED_PI_HEADER);
    match evalpolicy_experiment(&spec) {
        Ok(study) => {
            for s in [&study.uniform, &study.expected_pi] {
                for a in &s.arms {
                    arms.push(row![
                        s.eval_policy,
                        a.arm as usize,
                        spec.horizon,
                        spec.n_reps,
                        a.t_mse,
                        a.t_mse_se,
                        a.predicted,
                        a.lower_bound,
                    ]);
                }
                mse.push(row![
                    s.eval_policy,
                    spec.horizon,
                    spec.n_reps,
                    s.mse,
                    s.mse_se,
                    study.failures
                ]);
            }
            mse.push(row![
                "expected_pi_minus_uniform",
                spec.horizon,
                spec.n_reps,
                study.mse_diff,
                study.mse_diff_se,
                study.failures,
            ]);
            for t in 1..=spec.horizon {
                let p = study.table.eval_prob(t, 1).unwrap_or(f64::NAN);
                table.push(row![t, p]);
            }
        }
        Err(e) => {
            for t in [&mut arms, &mut mse, &mut table] {
                t.fail(e.to_string());
            }
        }
    }
    vec![arms, mse, table]
}

use banditlab::env::{run_trajectory, EnvConfig, GlmFamily};
use banditlab::estimators::{design_rows, Design, Weighting};
use banditlab::evalpolicy::EvalPolicy;
use banditlab::harness::*;
use banditlab::policies::{PolicyConfig, PolicyState};
use banditlab::statfn::{chi2_quantile, dot, sample_std_normal, RngStream};

fn small_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::contextual(GlmFamily::T5);
    spec.t_grid = vec![100, 200];
    spec.n_reps = 40;
    spec.lambda_pilots = 50;
    spec
}

#[test]
fn replications_are_deterministic() {
    let spec = small_spec();
    let ctx = prepare_horizon(&spec, 100).unwrap();
    let a = run_replication(&spec, &ctx, 7).unwrap();
    let b = run_replication(&spec, &ctx, 7).unwrap();
    assert_eq!(a, b);
    let c = run_replication(&spec, &ctx, 8).unwrap();
    assert_ne!(a.allocation, c.allocation);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut one = small_spec();
    one.threads = 1;
    let mut three = small_spec();
    three.threads = 3;
    let a = run_experiment(&one).unwrap();
    let b = run_experiment(&three).unwrap();
    assert_eq!(a.records, b.records);
    for (x, y) in a.summary.iter().zip(&b.summary) {
        assert_eq!(x.coverage.to_bits(), y.coverage.to_bits());
        assert_eq!(x.mean_volume.to_bits(), y.mean_volume.to_bits());
        assert_eq!(x.mse.to_bits(), y.mse.to_bits());
    }
}

#[test]
fn constant_propensity_makes_weighting_irrelevant() {
    let mut spec = small_spec();
    spec.policy = PolicyConfig::fixed(0.5);
    spec.estimators = vec![EstimatorKind::Ols, EstimatorKind::AwLs];
    let ctx = prepare_horizon(&spec, 100).unwrap();
    for rep in 0..5 {
        let rec = run_replication(&spec, &ctx, rep).unwrap();
        let ols = rec.estimates[0].as_ref().unwrap();
        let aw = rec.estimates[1].as_ref().unwrap();
        for (a, b) in ols.theta_hat.iter().zip(&aw.theta_hat) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn singular_designs_are_counted_as_failures() {
    let mut spec = small_spec();
    spec.t_grid = vec![1];
    spec.estimators = vec![EstimatorKind::Ols, EstimatorKind::AwLs];
    let res = run_experiment(&spec).unwrap();
    assert_eq!(res.records.len(), spec.n_reps);
    for row in &res.summary {
        assert_eq!(row.failures, spec.n_reps);
        assert!(row.insufficient());
    }
}

#[test]
fn every_cell_is_reported() {
    let res = run_experiment(&small_spec()).unwrap();
    // 4 estimators × 2 targets × 2 horizons
    assert_eq!(res.summary.len(), 16);
    for row in &res.summary {
        assert_eq!(row.n_reps, 40);
        assert_eq!(row.region, RegionKind::for_cell(row.estimator, row.target));
        assert!(row.mean_volume > 0.0);
    }
    assert!(res.contexts.iter().all(|c| c.lambda_t.unwrap() > 0.0));
}

fn synthetic(stats: &[f64], cutoff: f64) -> Vec<RepRecord> {
    let key = CellKey {
        estimator: EstimatorKind::Ols,
        region: RegionKind::Hotelling,
        target: Target::Full,
    };
    stats
        .iter()
        .enumerate()
        .map(|(rep, &s)| RepRecord {
            horizon: 1000,
            rep,
            allocation: 0.5,
            estimates: Vec::new(),
            cells: vec![(
                key,
                Ok(CellOutcome {
                    covered: s <= cutoff,
                    statistic: s,
                    ratio: s / cutoff,
                    volume: 1.0,
                    sq_error: s,
                    dim: 6,
                }),
            )],
        })
        .collect()
}

#[test]
fn chi_square_statistics_cover_at_nominal_rate() {
    let mut rng = RngStream::new(21, 0);
    let stats: Vec<f64> = (0..4000)
        .map(|_| (0..6).map(|_| sample_std_normal(&mut rng).powi(2)).sum())
        .collect();
    let cutoff = chi2_quantile(6, 0.9).unwrap();
    let row = &summarize(&synthetic(&stats, cutoff), 0.1, Calibration::PerHorizon)[0];
    assert!((row.coverage - 0.9).abs() < 4.0 * row.coverage_se);
    assert!((row.mse - 6.0).abs() < 4.0 * row.mse_se);
    if row.calibrated {
        assert!((row.ratio_quantile - 1.0).abs() < 0.05);
    }
    // a cutoff that is too small triggers calibration back to χ²₆(0.9)
    let tight = &summarize(
        &synthetic(&stats, cutoff / 2.0),
        0.1,
        Calibration::PerHorizon,
    )[0];
    assert!(tight.calibrated);
    assert!((tight.ratio_quantile - 2.0).abs() < 0.1);
    assert!((tight.mean_volume - tight.ratio_quantile.powi(3)).abs() < 1e-12);
    let off = &summarize(&synthetic(&stats, cutoff / 2.0), 0.1, Calibration::Off)[0];
    assert!(!off.calibrated);
    assert_eq!(off.mean_volume, 1.0);
}

#[test]
fn uniform_allocation_is_binomial_and_thompson_is_not() {
    let uniform = allocation_experiment(&AllocationSpec {
        policy: PolicyConfig::uniform(),
        delta: 0.0,
        horizon: 100,
        n_reps: 2000,
        master_seed: 0,
        threads: 0,
    })
    .unwrap();
    assert!((uniform.mean - 0.5).abs() < 0.005);
    assert!((uniform.variance / uniform.binomial_variance - 1.0).abs() < 0.15);
    assert_eq!(uniform.histogram.iter().sum::<u64>(), 2000);
    let ts = allocation_experiment(&AllocationSpec {
        policy: PolicyConfig::thompson(0.01),
        delta: 0.0,
        horizon: 100,
        n_reps: 2000,
        master_seed: 0,
        threads: 0,
    })
    .unwrap();
    assert!(ts.variance > 4.0 * ts.binomial_variance);
}

#[test]
fn weighted_score_is_a_martingale_difference() {
    let env = EnvConfig::contextual(GlmFamily::T5);
    let reps = 2000;
    let horizon = 200;
    let (lo, hi) = ((0.5f64 / 0.99).sqrt(), (0.5f64 / 0.01).sqrt());
    let mut firsts = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut policy =
            PolicyState::new(&PolicyConfig::thompson(0.01), env.feature_dim()).unwrap();
        let mut rng = RngStream::derived(22, &[rep as u64]);
        let traj = run_trajectory(&env, &mut policy, horizon, &mut rng).unwrap();
        let rows = design_rows(
            &traj,
            Design::Interaction,
            Weighting::Adaptive(&EvalPolicy::Uniform),
        )
        .unwrap();
        for r in &rows {
            assert!(r.w >= lo - 1e-12 && r.w <= hi + 1e-12, "weight {}", r.w);
        }
        let score: f64 = rows
            .iter()
            .map(|r| r.w * r.z[3] * (r.reward - dot(&r.z, &env.theta_star)))
            .sum::<f64>()
            / (horizon as f64).sqrt();
        firsts.push(score);
    }
    let (mean, se) = mean_se(&firsts);
    assert!(mean.abs() < 4.0 * se, "mean {mean}, se {se}");
}

#[test]
fn zstat_experiment_is_reproducible() {
    let spec = ZStatSpec {
        horizon: 200,
        n_reps: 200,
        ..ZStatSpec::default()
    };
    let a = zstat_experiment(&spec).unwrap();
    let b = zstat_experiment(&ZStatSpec { threads: 2, ..spec }).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.ols.len() + a.failures, 200);
}

#[test]
fn uniform_policy_margin_interval_covers() {
    let rows = uniformity_experiment(&UniformitySpec {
        policies: vec![PolicyConfig::uniform()],
        deltas: vec![0.0, 0.5],
        horizon: 200,
        n_reps: 1000,
        alpha: 0.1,
        master_seed: 0,
        threads: 0,
    })
    .unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!((row.coverage - 0.9).abs() < 4.0 * 0.0095, "{row:?}");
    }
}

#[test]
fn invalid_specs_list_every_problem() {
    let mut spec = small_spec();
    spec.alpha = 1.5;
    spec.n_reps = 1;
    spec.t_grid = vec![200, 100];
    let v = spec.violations();
    assert_eq!(v.len(), 3, "{v:?}");
    assert!(run_experiment(&spec).is_err());
}

use banditlab::env::{run_trajectory, EnvConfig, GlmFamily, Trajectory};
use banditlab::estimators::*;
use banditlab::evalpolicy::EvalPolicy;
use banditlab::policies::{PolicyConfig, PolicyState};
use banditlab::regions::hotelling_statistic;
use banditlab::statfn::{dot, RngStream};
use nalgebra::{DMatrix, DVector};

fn trajectory(family: GlmFamily, horizon: usize, seed: u64) -> Trajectory {
    let env = EnvConfig::contextual(family);
    let mut policy = PolicyState::new(&PolicyConfig::thompson(0.01), env.feature_dim()).unwrap();
    let mut rng = RngStream::new(seed, 0);
    run_trajectory(&env, &mut policy, horizon, &mut rng).unwrap()
}

fn aw_rows(traj: &Trajectory) -> Vec<DesignRow> {
    design_rows(
        traj,
        Design::Interaction,
        Weighting::Adaptive(&EvalPolicy::Uniform),
    )
    .unwrap()
}

/// Minimizer of Σ W (R - Zᵀθ)² via SVD of the √W-scaled design.
fn svd_oracle(rows: &[DesignRow]) -> DVector<f64> {
    let d = rows[0].z.len();
    let a = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].w.sqrt() * rows[i].z[j]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.w.sqrt() * r.reward));
    a.svd(true, true).solve(&b, 1e-14).unwrap()
}

fn objective(rows: &[DesignRow], theta: &[f64]) -> f64 {
    rows.iter()
        .map(|r| r.w * (r.reward - dot(&r.z, theta)).powi(2))
        .sum()
}

#[test]
fn weighted_least_squares_is_the_quadratic_minimizer() {
    for seed in 0..5 {
        let rows = aw_rows(&trajectory(GlmFamily::T5, 400, seed));
        let fit = aw_least_squares(&rows).unwrap();
        let oracle = svd_oracle(&rows);
        for (a, b) in fit.theta_hat.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        // and no coordinate perturbation lowers the objective
        let base = objective(&rows, &fit.theta_hat);
        for j in 0..fit.dim() {
            for eps in [1e-4, -1e-4] {
                let mut t = fit.theta_hat.clone();
                t[j] += eps;
                assert!(objective(&rows, &t) >= base);
            }
        }
    }
}

#[test]
fn gaussian_weighted_mle_equals_weighted_least_squares() {
    let rows = aw_rows(&trajectory(GlmFamily::T5, 500, 3));
    let ls = aw_least_squares(&rows).unwrap();
    let ml = aw_mle_glm(&rows, GlmFamily::Normal, None, NewtonOptions::default()).unwrap();
    for (a, b) in ls.theta_hat.iter().zip(&ml.theta_hat) {
        assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn weighted_logistic_matches_independent_irls() {
    let traj = trajectory(GlmFamily::Bernoulli, 600, 4);
    let rows = aw_rows(&traj);
    let fit = aw_mle_glm(&rows, GlmFamily::Bernoulli, None, NewtonOptions::default()).unwrap();
    // plain IRLS in nalgebra
    let d = rows[0].z.len();
    let z = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].z[j]);
    let mut beta = DVector::zeros(d);
    for _ in 0..50 {
        let eta = &z * &beta;
        let mut h = DMatrix::zeros(d, d);
        let mut g = DVector::zeros(d);
        for i in 0..rows.len() {
            let p = 1.0 / (1.0 + (-eta[i]).exp());
            let zi = z.row(i).transpose();
            g += &zi * (rows[i].w * (rows[i].reward - p));
            h += &zi * zi.transpose() * (rows[i].w * p * (1.0 - p));
        }
        beta += h.lu().solve(&g).unwrap();
    }
    for (a, b) in fit.theta_hat.iter().zip(beta.iter()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    let score: Vec<f64> = (0..d)
        .map(|j| {
            rows.iter()
                .map(|r| {
                    r.w * (r.reward - GlmFamily::Bernoulli.b_prime(dot(&fit.theta_hat, &r.z)))
                        * r.z[j]
                })
                .sum::<f64>()
        })
        .collect();
    assert!(score.iter().all(|s| s.abs() / rows.len() as f64 <= 1e-10));
}

#[test]
fn poisson_newton_converges_and_reports_sandwich() {
    let traj = trajectory(GlmFamily::Poisson, 600, 5);
    let rows = aw_rows(&traj);
    let fit = aw_mle_glm(&rows, GlmFamily::Poisson, None, NewtonOptions::default()).unwrap();
    assert!(fit.converged && fit.iterations < 30);
    assert!(fit.sigma2_hat.is_none());
    let v = fit.sandwich().unwrap();
    assert!(v.diag().iter().all(|x| *x > 0.0));
}

#[test]
fn all_zero_poisson_counts_do_not_converge() {
    let rows: Vec<DesignRow> = (0..20)
        .map(|_| DesignRow {
            z: vec![1.0],
            w: 1.0,
            prob_logged: 0.5,
            reward: 0.0,
        })
        .collect();
    let err = aw_mle_glm(&rows, GlmFamily::Poisson, None, NewtonOptions::default());
    assert!(matches!(err, Err(banditlab::Error::NonConvergence { .. })));
}

#[test]
fn estimates_are_invariant_to_weight_scale() {
    let rows = aw_rows(&trajectory(GlmFamily::T5, 300, 6));
    let fit = aw_least_squares(&rows).unwrap();
    let truth = EnvConfig::contextual(GlmFamily::T5).theta_star;
    let stat = hotelling_statistic(&fit, &truth).unwrap();
    for c in [1e-3, 0.5, 7.0, 1e3] {
        let scaled: Vec<DesignRow> = rows
            .iter()
            .map(|r| DesignRow {
                w: r.w * c,
                ..r.clone()
            })
            .collect();
        let f2 = aw_least_squares(&scaled).unwrap();
        for (a, b) in fit.theta_hat.iter().zip(&f2.theta_hat) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        let s2 = hotelling_statistic(&f2, &truth).unwrap();
        assert!((stat - s2).abs() <= 1e-9 * (1.0 + stat));
    }
}

#[test]
fn uniform_weights_are_a_rescaled_inverse_root_propensity() {
    let traj = trajectory(GlmFamily::T5, 200, 7);
    let rows = aw_rows(&traj);
    for (t, r) in rows.iter().enumerate() {
        let shortcut = 1.0 / traj.prob_logged(t).sqrt();
        assert!((r.w - shortcut * 0.5f64.sqrt()).abs() < 1e-14);
    }
}

#[test]
fn arm_indicator_design_gives_weighted_arm_means() {
    let env = EnvConfig::two_arm(GlmFamily::Normal, 0.2, 0.5);
    let mut policy = PolicyState::new(&PolicyConfig::thompson(0.01), 1).unwrap();
    let mut rng = RngStream::new(8, 0);
    let traj = run_trajectory(&env, &mut policy, 400, &mut rng).unwrap();
    let rows = design_rows(
        &traj,
        Design::ArmIndicator,
        Weighting::Adaptive(&EvalPolicy::Uniform),
    )
    .unwrap();
    let fit = aw_least_squares(&rows).unwrap();
    for arm in 0..2u8 {
        let (num, den) = rows
            .iter()
            .zip(&traj.actions)
            .filter(|(_, &a)| a == arm)
            .fold((0.0, 0.0), |(n, d), (r, _)| (n + r.w * r.reward, d + r.w));
        let direct = num / den;
        assert!(
            (fit.theta_hat[arm as usize] - direct).abs()
                <= 4.0 * f64::EPSILON * (1.0 + direct.abs())
        );
    }
}

#[test]
fn w_decorrelated_tends_to_least_squares_for_huge_lambda() {
    let rows = design_rows(
        &trajectory(GlmFamily::T5, 300, 9),
        Design::Interaction,
        Weighting::Unit,
    )
    .unwrap();
    let ols = aw_least_squares(&rows).unwrap();
    let wd = w_decorrelated(&rows, 1e14, &ols.theta_hat, ols.sigma2_hat.unwrap()).unwrap();
    for (a, b) in wd.theta.iter().zip(&ols.theta_hat) {
        assert!((a - b).abs() < 1e-8);
    }
    assert_eq!(wd.weights.len(), 300);
}

#[test]
fn ridge_matches_normal_equations() {
    let rows = design_rows(
        &trajectory(GlmFamily::T5, 100, 10),
        Design::Interaction,
        Weighting::Unit,
    )
    .unwrap();
    let (theta, v) = ridge_estimator(&rows, 6, 1.0).unwrap();
    let z = DMatrix::from_fn(rows.len(), 6, |i, j| rows[i].z[j]);
    let r = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.reward));
    let vt = z.transpose() * &z + DMatrix::identity(6, 6);
    let oracle = vt.clone().lu().solve(&(z.transpose() * r)).unwrap();
    for j in 0..6 {
        assert!((theta[j] - oracle[j]).abs() < 1e-9);
        assert!((v[(j, j)] - vt[(j, j)]).abs() < 1e-9);
    }
}

#[test]
fn one_observation_is_a_singular_design() {
    let rows = aw_rows(&trajectory(GlmFamily::T5, 1, 11));
    assert_eq!(
        aw_least_squares(&rows),
        Err(banditlab::Error::SingularDesign)
    );
}

use banditlab::env::{run_trajectory, EnvConfig, GlmFamily};
use banditlab::estimators::{aw_least_squares, design_rows, Design, Weighting};
use banditlab::policies::{PolicyConfig, PolicyState};
use banditlab::regions::*;
use banditlab::statfn::{chi2_quantile, sample_std_normal, sample_uniform, Matrix, RngStream};
use nalgebra::DMatrix;

fn random_spd(d: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| sample_uniform(rng, -1.0, 1.0).unwrap());
    &m * m.transpose() + DMatrix::identity(d, d) * 0.3
}

fn to_matrix(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_vec(m.nrows(), m.ncols(), m.transpose().as_slice().to_vec())
}

fn random_ellipsoid(d: usize, rng: &mut RngStream) -> (Ellipsoid, DMatrix<f64>) {
    let q = random_spd(d, rng);
    let center: Vec<f64> = (0..d).map(|_| sample_std_normal(rng)).collect();
    let c = sample_uniform(rng, 0.5, 12.0).unwrap();
    (Ellipsoid::new(center, to_matrix(&q), c).unwrap(), q)
}

#[test]
fn projection_equals_inverse_block() {
    let mut rng = RngStream::new(1, 1);
    for i in 0..100 {
        let d = 2 + i % 6;
        let p = 1 + i % (d - 1);
        let (e, q) = random_ellipsoid(d, &mut rng);
        let proj = project_ellipsoid(&e, p).unwrap();
        let b_inv = (q / e.cutoff()).try_inverse().unwrap();
        let block = b_inv.view((d - p, d - p), (p, p)).into_owned();
        let shape = DMatrix::from_fn(p, p, |r, c| proj.shape()[(r, c)]);
        let shape_inv = shape.try_inverse().unwrap();
        assert!((shape_inv - block).abs().max() <= 1e-9);
        assert_eq!(proj.center(), &e.center()[d - p..]);
        assert_eq!(proj.cutoff(), 1.0);
    }
}

#[test]
fn block_diagonal_projection_keeps_the_block() {
    let q = Matrix::from_rows(&[&[2.0, 0.0, 0.0], &[0.0, 3.0, 0.5], &[0.0, 0.5, 4.0]]);
    let e = Ellipsoid::new(vec![0.0; 3], q, 2.0).unwrap();
    let proj = project_ellipsoid(&e, 2).unwrap();
    let expect = [[1.5, 0.25], [0.25, 2.0]];
    for (r, row) in expect.iter().enumerate() {
        for (c, want) in row.iter().enumerate() {
            assert!((proj.shape()[(r, c)] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn projection_is_sound_and_tight() {
    let mut rng = RngStream::new(2, 1);
    for _ in 0..20 {
        let d = 4;
        let p = 2;
        let (e, q) = random_ellipsoid(d, &mut rng);
        let proj = project_ellipsoid(&e, p).unwrap();
        // soundness: interior points map inside
        let l = (q.clone() / e.cutoff()).cholesky().unwrap().l();
        for _ in 0..500 {
            let mut u: Vec<f64> = (0..d).map(|_| sample_std_normal(&mut rng)).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let radius = sample_uniform(&mut rng, 0.0, 1.0)
                .unwrap()
                .powf(1.0 / d as f64);
            u.iter_mut().for_each(|x| *x *= radius / norm);
            // θ = center + L⁻ᵀ u lies in the region
            let offset = l
                .transpose()
                .solve_upper_triangular(&nalgebra::DVector::from_vec(u))
                .unwrap();
            let theta: Vec<f64> = (0..d).map(|j| e.center()[j] + offset[j]).collect();
            assert!(e.contains(&theta).unwrap());
            assert!(proj.contains(&theta[d - p..]).unwrap());
        }
        // tightness: coordinate extremes agree
        let full_inv = (q / e.cutoff()).try_inverse().unwrap();
        let proj_inv = DMatrix::from_fn(p, p, |r, c| proj.shape()[(r, c)])
            .try_inverse()
            .unwrap();
        for k in 0..p {
            let full = full_inv[(d - p + k, d - p + k)].sqrt();
            let projected = proj_inv[(k, k)].sqrt();
            assert!((full - projected).abs() < 1e-8);
        }
    }
}

#[test]
fn volume_matches_rejection_sampling() {
    let mut rng = RngStream::new(3, 1);
    for d in [2, 3, 3] {
        let (e, q) = random_ellipsoid(d, &mut rng);
        let inv = q.try_inverse().unwrap();
        let half: Vec<f64> = (0..d).map(|j| (e.cutoff() * inv[(j, j)]).sqrt()).collect();
        let n = 1_000_000;
        let mut hits = 0usize;
        let mut theta = vec![0.0; d];
        for _ in 0..n {
            for j in 0..d {
                theta[j] = e.center()[j] + sample_uniform(&mut rng, -half[j], half[j]).unwrap();
            }
            if e.contains(&theta).unwrap() {
                hits += 1;
            }
        }
        let box_volume: f64 = half.iter().map(|h| 2.0 * h).product();
        let mc = box_volume * hits as f64 / n as f64;
        let exact = e.volume().unwrap();
        assert!((mc / exact - 1.0).abs() < 0.01, "d = {d}: {mc} vs {exact}");
    }
}

#[test]
fn boundary_and_quadratic_growth() {
    let e = Ellipsoid::new(vec![1.0, 2.0], Matrix::from_diag(&[4.0, 1.0]), 1.0).unwrap();
    assert!(e.contains(&[1.5, 2.0]).unwrap());
    assert!(!e.contains(&[1.5 + 1e-12, 2.0]).unwrap());
    let s1 = e.statistic(&[1.0 + 1e-3, 2.0]).unwrap();
    let s2 = e.statistic(&[1.0 + 2e-3, 2.0]).unwrap();
    assert!((s2 / s1 - 4.0).abs() < 1e-6);
    assert!(e.contains(e.center()).unwrap());
}

#[test]
fn self_normalized_radius_grows_with_determinant() {
    let mut last = 0.0;
    for s in [1.0, 2.0, 5.0, 50.0, 5000.0] {
        let ball = self_normalized_region(
            &[0.0; 2],
            &Matrix::identity(2).scaled(s),
            0.1,
            SelfNormParams::default(),
        )
        .unwrap();
        assert!(ball.radius() >= last);
        last = ball.radius();
        let e = ball.to_ellipsoid().unwrap();
        assert!((e.cutoff() - ball.radius().powi(2)).abs() < 1e-12);
    }
    // det(V)/λ^d < α² clamps the log term
    let tiny = self_normalized_region(
        &[0.0],
        &Matrix::identity(1).scaled(1e-4),
        0.1,
        SelfNormParams::default(),
    )
    .unwrap();
    assert!(tiny.clamped());
    assert_eq!(tiny.radius(), 6.0);
}

#[test]
fn calibrated_cutoff_of_chi_square_draws() {
    let mut rng = RngStream::new(4, 1);
    let stats: Vec<f64> = (0..10_000)
        .map(|_| (0..6).map(|_| sample_std_normal(&mut rng).powi(2)).sum())
        .collect();
    let q = calibrate_cutoff(&stats, 0.1).unwrap();
    let exact = chi2_quantile(6, 0.9).unwrap();
    assert!((q / exact - 1.0).abs() < 0.03);
    let covered = stats.iter().filter(|s| **s <= q).count() as f64 / stats.len() as f64;
    assert!(covered >= 0.9);
}

#[test]
fn hotelling_coverage_on_independent_data() {
    let env = EnvConfig::contextual(GlmFamily::T5);
    let reps = 2000;
    let mut covered = 0;
    for rep in 0..reps {
        let mut policy = PolicyState::new(&PolicyConfig::fixed(0.5), env.feature_dim()).unwrap();
        let mut rng = RngStream::derived(5, &[rep]);
        let traj = run_trajectory(&env, &mut policy, 1000, &mut rng).unwrap();
        let rows = design_rows(&traj, Design::Interaction, Weighting::Unit).unwrap();
        let fit = aw_least_squares(&rows).unwrap();
        let region = hotelling_region(&fit, 0.1).unwrap();
        assert!(region.contains(&fit.theta_hat).unwrap());
        if region.contains(&env.theta_star).unwrap() {
            covered += 1;
        }
    }
    let coverage = covered as f64 / reps as f64;
    assert!((coverage - 0.9).abs() <= 0.02, "coverage {coverage}");
}

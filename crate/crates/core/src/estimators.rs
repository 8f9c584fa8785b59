//! Point estimators on logged bandit trajectories.
//!
//! Every estimator consumes a list of [`DesignRow`]s: the feature vector
//! `Z_t`, the adaptive weight `W_t = sqrt(π^eval_{t,A_t} / π_{t,A_t})`, the
//! logged propensity of the chosen action and the raw reward. Unweighted
//! estimators are the same code with `W_t = 1`.
//!
//! The sandwich pieces in [`EstimatorReport`] follow one convention for all
//! estimators:
//!
//! * bread `(1/T) Σ W_t b″(θ̂ᵀZ_t) Z_t Z_tᵀ` (with `b″ ≡ 1` for least squares)
//! * meat `(1/T) Σ W_t² b″(θ̂ᵀZ_t) Z_t Z_tᵀ`, times `σ̂²` for least squares
//!
//! With `W_t = 1/sqrt(π_{t,A_t})` the meat weight `W_t²` is exactly the
//! inverse propensity `(1/π_t)^{A_t} (1/(1-π_t))^{1-A_t}`.

use serde::{Deserialize, Serialize};

use crate::env::{GlmFamily, Trajectory};
use crate::error::{domain, Error, Result};
use crate::evalpolicy::EvalPolicy;
use crate::statfn::{cholesky, dot, max_norm, norm2, Matrix};

/// How `(X̃_t, A_t)` is mapped to the regression features `Z_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// `Z = [X̃, A·X̃]`: baseline parameters followed by the advantage.
    #[default]
    Interaction,
    /// `Z = [(1-A)·X̃, A·X̃]`: one block per arm.
    ArmIndicator,
}

pub fn design_vector(design: Design, xtilde: &[f64], action: u8) -> Vec<f64> {
    let k = xtilde.len();
    let mut z = vec![0.0; 2 * k];
    let a = f64::from(action);
    match design {
        Design::Interaction => {
            z[..k].copy_from_slice(xtilde);
        }
        Design::ArmIndicator => {
            for (zi, xi) in z[..k].iter_mut().zip(xtilde) {
                *zi = (1.0 - a) * xi;
            }
        }
    }
    for (zi, xi) in z[k..].iter_mut().zip(xtilde) {
        *zi = a * xi;
    }
    z
}

/// One observation as seen by the estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub z: Vec<f64>,
    pub w: f64,
    pub prob_logged: f64,
    pub reward: f64,
}

/// Weighting scheme used to build [`DesignRow`]s.
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    /// `W_t = 1`
    Unit,
    /// Square-root importance weights towards an evaluation policy.
    Adaptive(&'a EvalPolicy),
}

/// `sqrt(π^eval / π_logged)`.
pub fn sqrt_importance_weight(pi_eval: f64, pi_logged: f64) -> Result<f64> {
    if !(pi_eval > 0.0 && pi_eval <= 1.0) || !(pi_logged > 0.0 && pi_logged <= 1.0) {
        return Err(domain(format!(
            "importance weight needs probabilities in (0, 1] (eval={pi_eval}, logged={pi_logged})"
        )));
    }
    Ok((pi_eval / pi_logged).sqrt())
}

/// Builds the estimator input from a trajectory. Rewards are the raw ones.
pub fn design_rows(
    traj: &Trajectory,
    design: Design,
    weighting: Weighting<'_>,
) -> Result<Vec<DesignRow>> {
    (0..traj.len())
        .map(|t| {
            let a = traj.actions[t];
            let prob_logged = traj.prob_logged(t);
            let w = match weighting {
                Weighting::Unit => 1.0,
                Weighting::Adaptive(eval) => {
                    sqrt_importance_weight(eval.eval_prob(t + 1, a)?, prob_logged)?
                }
            };
            Ok(DesignRow {
                z: design_vector(design, &traj.contexts[t], a),
                w,
                prob_logged,
                reward: traj.rewards_raw[t],
            })
        })
        .collect()
}

fn row_dim(rows: &[DesignRow]) -> Result<usize> {
    let d = rows
        .first()
        .map(|r| r.z.len())
        .ok_or_else(|| Error::InsufficientData("no rows".into()))?;
    if let Some(bad) = rows.iter().find(|r| r.z.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.z.len(),
        });
    }
    Ok(d)
}

/// Estimate plus the sandwich pieces needed for confidence regions.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub theta_hat: Vec<f64>,
    pub bread: Matrix,
    pub meat: Matrix,
    /// Residual variance, least squares only.
    pub sigma2_hat: Option<f64>,
    /// Number of observations `T`.
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl EstimatorReport {
    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    /// Sandwich covariance of `sqrt(T)(θ̂ - θ*)`: `bread⁻¹ meat bread⁻¹`.
    pub fn sandwich(&self) -> Result<Matrix> {
        let chol = cholesky(&self.bread)?;
        let left = chol.solve_mat(&self.meat)?;
        let mut v = chol.solve_mat(&left.transpose())?;
        v.symmetrize();
        Ok(v)
    }
}

/// Weighted least squares `θ̂ = (Σ W Z Zᵀ)⁻¹ Σ W Z R`.
///
/// `σ̂² = (1/T) Σ (R - Zᵀθ̂)²` and the meat is `σ̂² (1/T) Σ W² Z Zᵀ`.
pub fn aw_least_squares(rows: &[DesignRow]) -> Result<EstimatorReport> {
    let d = row_dim(rows)?;
    let n = rows.len();
    let mut gram = Matrix::zeros(d, d);
    let mut meat = Matrix::zeros(d, d);
    let mut rhs = vec![0.0; d];
    for r in rows {
        gram.add_outer(&r.z, r.w);
        meat.add_outer(&r.z, r.w * r.w);
        for (b, z) in rhs.iter_mut().zip(&r.z) {
            *b += r.w * z * r.reward;
        }
    }
    let chol = cholesky(&gram).map_err(|_| Error::SingularDesign)?;
    let theta = chol.solve_vec(&rhs)?;
    let sigma2 = rows
        .iter()
        .map(|r| (r.reward - dot(&r.z, &theta)).powi(2))
        .sum::<f64>()
        / n as f64;
    let inv_n = 1.0 / n as f64;
    Ok(EstimatorReport {
        theta_hat: theta,
        bread: gram.scaled(inv_n),
        meat: meat.scaled(sigma2 * inv_n),
        sigma2_hat: Some(sigma2),
        n,
        converged: true,
        iterations: 0,
    })
}

/// Options for the Newton solver of [`aw_mle_glm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Bound on the max-norm of the averaged score `(1/T) Σ W (R - b′) Z`.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            max_halvings: 30,
        }
    }
}

fn glm_score(rows: &[DesignRow], family: GlmFamily, theta: &[f64]) -> Vec<f64> {
    let mut score = vec![0.0; theta.len()];
    for r in rows {
        let resid = family.residual(r.reward, dot(theta, &r.z));
        for (s, z) in score.iter_mut().zip(&r.z) {
            *s += r.w * resid * z;
        }
    }
    score
}

fn glm_curvature(rows: &[DesignRow], family: GlmFamily, theta: &[f64], power: i32) -> Matrix {
    let d = theta.len();
    let mut m = Matrix::zeros(d, d);
    for r in rows {
        let v = family.b_double_prime(dot(theta, &r.z));
        m.add_outer(&r.z, r.w.powi(power) * v);
    }
    m
}

/// Root of the weighted score `Σ W (R - b′(θᵀZ)) Z = 0` by Newton-Raphson.
///
/// The Newton matrix is `Σ W b″(θᵀZ) Z Zᵀ`, the derivative of the weighted
/// score. A step is halved while it increases the Euclidean norm of the
/// score. Convergence requires both the averaged score to be within `tol` and
/// the Newton step to be negligible, so a run that keeps stepping towards
/// infinity (complete separation) ends in [`Error::NonConvergence`].
pub fn aw_mle_glm(
    rows: &[DesignRow],
    family: GlmFamily,
    init: Option<&[f64]>,
    opts: NewtonOptions,
) -> Result<EstimatorReport> {
    let d = row_dim(rows)?;
    let n = rows.len();
    let mut theta = match init {
        Some(v) if v.len() == d => v.to_vec(),
        Some(v) => {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            })
        }
        None => vec![0.0; d],
    };
    let mut score = glm_score(rows, family, &theta);
    let mut iterations = 0;
    loop {
        let info = glm_curvature(rows, family, &theta, 1);
        let chol = cholesky(&info).map_err(|_| Error::SingularHessian)?;
        let step = chol.solve_vec(&score)?;
        let mean_score = max_norm(&score) / n as f64;
        if mean_score <= opts.tol && max_norm(&step) <= 1e-6 * (1.0 + max_norm(&theta)) {
            break;
        }
        if iterations == opts.max_iter {
            return Err(Error::NonConvergence { iterations });
        }
        let current = norm2(&score);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&step)
                .map(|(t, s)| t + scale * s)
                .collect();
            let cand_score = glm_score(rows, family, &cand);
            let cand_norm = norm2(&cand_score);
            if cand_norm.is_finite() && cand_norm <= current {
                accepted = Some((cand, cand_score));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, next_score)) = accepted else {
            return Err(Error::NonConvergence { iterations });
        };
        theta = next;
        score = next_score;
        iterations += 1;
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence { iterations });
    }
    let inv_n = 1.0 / n as f64;
    Ok(EstimatorReport {
        bread: glm_curvature(rows, family, &theta, 1).scaled(inv_n),
        meat: glm_curvature(rows, family, &theta, 2).scaled(inv_n),
        theta_hat: theta,
        sigma2_hat: None,
        n,
        converged: true,
        iterations,
    })
}

/// Weighted log-likelihood `Σ W (R θᵀZ - b(θᵀZ))`.
pub fn glm_log_likelihood(rows: &[DesignRow], family: GlmFamily, theta: &[f64]) -> f64 {
    rows.iter()
        .map(|r| {
            let nu = dot(theta, &r.z);
            r.w * (r.reward * nu - family.b(nu))
        })
        .sum()
}

/// Output of [`w_decorrelated`].
#[derive(Debug, Clone, PartialEq)]
pub struct WDecorrelated {
    pub theta: Vec<f64>,
    /// `σ̂² Σ w_t w_tᵀ`
    pub variance: Matrix,
    /// The matrix-valued weights `w_t`, in time order.
    pub weights: Vec<Vec<f64>>,
}

/// W-decorrelated estimator.
///
/// `θ^d = θ̂^LS + Σ_t w_t (R_t - Z_tᵀθ̂^LS)` with
/// `w_t = (I - Σ_{s<t} w_s Z_sᵀ) Z_t / (λ_T + ‖Z_t‖²)`.
/// Rows must be in time order.
pub fn w_decorrelated(
    rows: &[DesignRow],
    lambda_t: f64,
    theta_ls: &[f64],
    sigma2_hat: f64,
) -> Result<WDecorrelated> {
    if !(lambda_t > 0.0) {
        return Err(domain(format!("lambda_T must be positive, got {lambda_t}")));
    }
    let d = row_dim(rows)?;
    if theta_ls.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: theta_ls.len(),
        });
    }
    // running I - Σ_{s<t} w_s Z_sᵀ
    let mut resid_op = Matrix::identity(d);
    let mut theta = theta_ls.to_vec();
    let mut variance = Matrix::zeros(d, d);
    let mut weights = Vec::with_capacity(rows.len());
    for r in rows {
        let denom = lambda_t + dot(&r.z, &r.z);
        let w: Vec<f64> = resid_op.mat_vec(&r.z)?.iter().map(|v| v / denom).collect();
        let resid = r.reward - dot(&r.z, theta_ls);
        for (th, wi) in theta.iter_mut().zip(&w) {
            *th += wi * resid;
        }
        variance.add_outer(&w, sigma2_hat);
        for i in 0..d {
            for j in 0..d {
                resid_op[(i, j)] -= w[i] * r.z[j];
            }
        }
        weights.push(w);
    }
    Ok(WDecorrelated {
        theta,
        variance,
        weights,
    })
}

/// `λ_T = q_{0.01} / ln T` where `q_{0.01}` is the nearest-rank first
/// percentile of pilot minimum eigenvalues of `Σ Z_t Z_tᵀ`.
pub fn select_lambda_t(pilot_min_eigs: &[f64], horizon: usize) -> Result<f64> {
    if pilot_min_eigs.is_empty() {
        return Err(Error::InsufficientData("empty pilot list".into()));
    }
    let ln_t = (horizon as f64).ln();
    if !(ln_t > 1.0) {
        return Err(domain(format!("lambda_T needs T > e (T={horizon})")));
    }
    let mut sorted = pilot_min_eigs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = nearest_rank(0.01, sorted.len());
    Ok(sorted[rank - 1] / ln_t)
}

/// 1-based nearest rank `ceil(q n)`, clamped to `[1, n]`.
pub(crate) fn nearest_rank(q: f64, n: usize) -> usize {
    ((q * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Ridge estimator `θ = (λI + Σ Z Zᵀ)⁻¹ Σ Z R` and `V_T = λI + Σ Z Zᵀ`.
pub fn ridge_estimator(rows: &[DesignRow], dim: usize, lambda: f64) -> Result<(Vec<f64>, Matrix)> {
    if !(lambda > 0.0) {
        return Err(domain(format!(
            "ridge lambda must be positive, got {lambda}"
        )));
    }
    let mut v = Matrix::identity(dim).scaled(lambda);
    let mut rhs = vec![0.0; dim];
    for r in rows {
        if r.z.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.z.len(),
            });
        }
        v.add_outer(&r.z, 1.0);
        for (b, z) in rhs.iter_mut().zip(&r.z) {
            *b += z * r.reward;
        }
    }
    let theta = cholesky(&v)?.solve_vec(&rhs)?;
    Ok((theta, v))
}

/// Gram matrix `Σ Z_t Z_tᵀ` of a row list.
pub fn gram(rows: &[DesignRow], dim: usize) -> Matrix {
    let mut g = Matrix::zeros(dim, dim);
    for r in rows {
        g.add_outer(&r.z, 1.0);
    }
    g
}

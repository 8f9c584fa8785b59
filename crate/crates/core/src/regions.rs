//! Confidence regions: Hotelling ellipsoids, their projections, the
//! self-normalized ball, volumes and empirical cutoff calibration.

use crate::error::{domain, Error, Result};
use crate::estimators::{nearest_rank, EstimatorReport};
use crate::statfn::{cholesky, hotelling_cutoff, unit_ball_volume, Matrix};

/// `{θ : (center - θ)ᵀ Q (center - θ) ≤ c}`
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: Vec<f64>,
    shape: Matrix,
    cutoff: f64,
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl Ellipsoid {
    /// Validates that `shape` is SPD and `cutoff` positive.
    pub fn new(center: Vec<f64>, mut shape: Matrix, cutoff: f64) -> Result<Self> {
        check_dim(center.len(), shape.rows())?;
        if !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(domain(format!(
                "cutoff must be positive and finite, got {cutoff}"
            )));
        }
        cholesky(&shape)?;
        shape.symmetrize();
        Ok(Self {
            center,
            shape,
            cutoff,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn shape(&self) -> &Matrix {
        &self.shape
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `(center - θ)ᵀ Q (center - θ)`
    pub fn statistic(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        self.shape.quad_form(&diff(&self.center, theta))
    }

    pub fn contains(&self, theta: &[f64]) -> Result<bool> {
        Ok(self.statistic(theta)? <= self.cutoff)
    }

    /// Same ellipsoid with a different cutoff.
    pub fn with_cutoff(&self, cutoff: f64) -> Result<Self> {
        Self::new(self.center.clone(), self.shape.clone(), cutoff)
    }

    pub fn volume(&self) -> Result<f64> {
        ellipsoid_volume(self)
    }
}

/// `{θ : ‖center - θ‖_V ≤ radius}`
#[derive(Debug, Clone, PartialEq)]
pub struct NormBall {
    center: Vec<f64>,
    metric: Matrix,
    radius: f64,
    clamped: bool,
}

impl NormBall {
    pub fn new(center: Vec<f64>, mut metric: Matrix, radius: f64) -> Result<Self> {
        check_dim(center.len(), metric.rows())?;
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(domain(format!(
                "radius must be positive and finite, got {radius}"
            )));
        }
        cholesky(&metric)?;
        metric.symmetrize();
        Ok(Self {
            center,
            metric,
            radius,
            clamped: false,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn metric(&self) -> &Matrix {
        &self.metric
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// True when the log term of the radius was negative and clamped to zero.
    pub fn clamped(&self) -> bool {
        self.clamped
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `‖center - θ‖_V`
    pub fn distance(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        Ok(self
            .metric
            .quad_form(&diff(&self.center, theta))?
            .max(0.0)
            .sqrt())
    }

    pub fn contains(&self, theta: &[f64]) -> Result<bool> {
        Ok(self.distance(theta)? <= self.radius)
    }

    /// The same set written as an ellipsoid with `Q = V`, `c = radius²`.
    pub fn to_ellipsoid(&self) -> Result<Ellipsoid> {
        Ellipsoid::new(
            self.center.clone(),
            self.metric.clone(),
            self.radius * self.radius,
        )
    }
}

/// Any region that can test membership.
pub trait Region {
    fn dim(&self) -> usize;
    fn contains(&self, theta: &[f64]) -> Result<bool>;
}

impl Region for Ellipsoid {
    fn dim(&self) -> usize {
        Ellipsoid::dim(self)
    }

    fn contains(&self, theta: &[f64]) -> Result<bool> {
        Ellipsoid::contains(self, theta)
    }
}

impl Region for NormBall {
    fn dim(&self) -> usize {
        NormBall::dim(self)
    }

    fn contains(&self, theta: &[f64]) -> Result<bool> {
        NormBall::contains(self, theta)
    }
}

/// `Q = T · breadᵀ meat⁻¹ bread`
pub fn hotelling_shape(report: &EstimatorReport) -> Result<Matrix> {
    let solved = cholesky(&report.meat)?.solve_mat(&report.bread)?;
    let mut q = report
        .bread
        .transpose()
        .matmul(&solved)?
        .scaled(report.n as f64);
    q.symmetrize();
    Ok(q)
}

/// Hotelling-T² ellipsoid for the full parameter vector.
///
/// Cutoff `d(T-1)/(T-d) · F_{d,T-d}(1-α)`.
pub fn hotelling_region(report: &EstimatorReport, alpha: f64) -> Result<Ellipsoid> {
    let d = report.dim();
    let cutoff = hotelling_cutoff(d, report.n, alpha)?;
    Ellipsoid::new(report.theta_hat.clone(), hotelling_shape(report)?, cutoff)
}

/// `T (θ̂ - θ)ᵀ breadᵀ meat⁻¹ bread (θ̂ - θ)`
pub fn hotelling_statistic(report: &EstimatorReport, theta: &[f64]) -> Result<f64> {
    check_dim(report.dim(), theta.len())?;
    hotelling_shape(report)?.quad_form(&diff(&report.theta_hat, theta))
}

/// Projection of a `d`-dimensional ellipsoid onto its last `p` coordinates.
///
/// With `B = Q/c = [[C, D], [Dᵀ, E]]` the projection is
/// `{z : (z₀ - z)ᵀ (E - Dᵀ C⁻¹ D) (z₀ - z) ≤ 1}`.
pub fn project_ellipsoid(region: &Ellipsoid, keep_last: usize) -> Result<Ellipsoid> {
    let d = region.dim();
    if keep_last == 0 || keep_last >= d {
        return Err(domain(format!(
            "projection needs 1 <= p < d (p={keep_last}, d={d})"
        )));
    }
    let q = d - keep_last;
    let b = region.shape.scaled(1.0 / region.cutoff);
    let c = b.block(0, 0, q, q);
    let dm = b.block(0, q, q, keep_last);
    let e = b.block(q, q, keep_last, keep_last);
    let c_inv_d = cholesky(&c)?.solve_mat(&dm)?;
    let mut shape = e.sub(&dm.transpose().matmul(&c_inv_d)?)?;
    shape.symmetrize();
    Ellipsoid::new(region.center[q..].to_vec(), shape, 1.0)
}

/// Normal-approximation region for the last `p` coordinates of an unweighted
/// estimator, using the matching block `V₁` of the sandwich covariance.
///
/// `Q = T V₁⁻¹`, cutoff `p(T-1)/(T-p) · F_{p,T-p}(1-α)`.
pub fn marginal_normal_region(
    report: &EstimatorReport,
    keep_last: usize,
    alpha: f64,
) -> Result<Ellipsoid> {
    let d = report.dim();
    if keep_last == 0 || keep_last > d {
        return Err(domain(format!("need 1 <= p <= d (p={keep_last}, d={d})")));
    }
    let q = d - keep_last;
    let v = report.sandwich()?;
    let v1 = v.block(q, q, keep_last, keep_last);
    let shape = cholesky(&v1)?.inverse().scaled(report.n as f64);
    let cutoff = hotelling_cutoff(keep_last, report.n, alpha)?;
    Ellipsoid::new(report.theta_hat[q..].to_vec(), shape, cutoff)
}

/// Region around the W-decorrelated estimate: `Q = V_p⁻¹` on the last `p`
/// coordinates of `V = σ̂² Σ w_t w_tᵀ` (all of them when `p = d`), with the
/// Hotelling cutoff in dimension `p`.
pub fn wdec_region(
    theta_d: &[f64],
    variance: &Matrix,
    keep_last: usize,
    n: usize,
    alpha: f64,
) -> Result<Ellipsoid> {
    let d = theta_d.len();
    check_dim(d, variance.rows())?;
    if keep_last == 0 || keep_last > d {
        return Err(domain(format!("need 1 <= p <= d (p={keep_last}, d={d})")));
    }
    let q = d - keep_last;
    let block = variance.block(q, q, keep_last, keep_last);
    let shape = cholesky(&block)?.inverse();
    let cutoff = hotelling_cutoff(keep_last, n, alpha)?;
    Ellipsoid::new(theta_d[q..].to_vec(), shape, cutoff)
}

/// Parameters of the self-normalized martingale region.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfNormParams {
    pub lambda: f64,
    pub sigma: f64,
    /// Bound on `‖θ*‖₂`.
    pub s: f64,
}

impl Default for SelfNormParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            sigma: 1.0,
            s: 6.0,
        }
    }
}

/// Self-normalized ball
/// `‖θ̂ - θ‖_{V_T} ≤ σ sqrt(2 ln(det(V_T)^{1/2} det(λI)^{-1/2} / α)) + sqrt(λ) S`.
pub fn self_normalized_region(
    theta_ridge: &[f64],
    v_t: &Matrix,
    alpha: f64,
    params: SelfNormParams,
) -> Result<NormBall> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(params.lambda > 0.0 && params.sigma > 0.0 && params.s >= 0.0) {
        return Err(domain("self-normalized parameters must be positive"));
    }
    let d = theta_ridge.len();
    check_dim(d, v_t.rows())?;
    let log_arg = 0.5 * cholesky(v_t)?.log_det() - 0.5 * d as f64 * params.lambda.ln() - alpha.ln();
    let clamped = log_arg < 0.0;
    let radius = params.sigma * (2.0 * log_arg.max(0.0)).sqrt() + params.lambda.sqrt() * params.s;
    let mut ball = NormBall::new(theta_ridge.to_vec(), v_t.clone(), radius)?;
    ball.clamped = clamped;
    Ok(ball)
}

/// `π^{d/2}/Γ(d/2+1) · c^{d/2} · det(Q)^{-1/2}`
pub fn ellipsoid_volume(region: &Ellipsoid) -> Result<f64> {
    let d = region.dim() as f64;
    let log_det = cholesky(&region.shape)?.log_det();
    Ok(unit_ball_volume(region.dim()) * (0.5 * d * region.cutoff.ln() - 0.5 * log_det).exp())
}

/// Nearest-rank `(1-α)` empirical quantile of statistics evaluated at θ*.
pub fn calibrate_cutoff(statistics: &[f64], alpha: f64) -> Result<f64> {
    if statistics.is_empty() {
        return Err(Error::InsufficientData("no statistics to calibrate".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut sorted = statistics.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(1.0 - alpha, sorted.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn membership_is_closed() {
        let e = Ellipsoid::new(vec![0.0, 0.0], Matrix::from_diag(&[1.0, 4.0]), 4.0).unwrap();
        assert!(e.contains(&[0.0, 0.0]).unwrap());
        assert!(e.contains(&[2.0, 0.0]).unwrap());
        assert!(e.contains(&[0.0, 1.0]).unwrap());
        assert!(!e.contains(&[2.0 + 1e-9, 0.0]).unwrap());
        assert!(e.contains(&[1.0]).is_err());
    }

    #[test]
    fn volumes() {
        let e = Ellipsoid::new(vec![0.0], Matrix::identity(1), 1.0).unwrap();
        assert!((e.volume().unwrap() - 2.0).abs() < 1e-14);
        let disk = Ellipsoid::new(vec![0.0, 0.0], Matrix::identity(2), 9.0).unwrap();
        assert!((disk.volume().unwrap() - 9.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_projection() {
        let c = 2.5;
        let e = Ellipsoid::new(vec![1.0, -3.0], Matrix::from_diag(&[1.0, 4.0]), c).unwrap();
        let p = project_ellipsoid(&e, 1).unwrap();
        assert_eq!(p.center(), &[-3.0]);
        let half_width = (1.0 / p.shape()[(0, 0)]).sqrt();
        assert!((half_width - c.sqrt() / 2.0).abs() < 1e-14);
        assert!(project_ellipsoid(&e, 2).is_err());
        assert!(project_ellipsoid(&e, 0).is_err());
    }

    #[test]
    fn self_normalized_identity_radius() {
        let ball = self_normalized_region(
            &[0.0; 3],
            &Matrix::identity(3),
            0.1,
            SelfNormParams::default(),
        )
        .unwrap();
        let expect = (2.0 * 10f64.ln()).sqrt() + 6.0;
        assert!((ball.radius() - expect).abs() < 1e-12);
        assert!((ball.radius() - 8.1460).abs() < 1e-4);
        assert!(!ball.clamped());
    }

    #[test]
    fn nearest_rank_cutoffs() {
        assert_eq!(calibrate_cutoff(&[5.0; 7], 0.1).unwrap(), 5.0);
        let ramp: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        assert_eq!(calibrate_cutoff(&ramp, 0.1).unwrap(), 90.0);
        assert!(calibrate_cutoff(&[], 0.1).is_err());
    }
}

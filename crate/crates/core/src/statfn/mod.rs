//! Special functions, random samplers and small dense SPD linear algebra.

mod matrix;
mod rng;
mod special;

pub use matrix::{
    cholesky, dot, max_norm, norm2, solve_spd, solve_spd_mat, spd_inverse, symmetric_eigenvalues,
    Cholesky, Matrix, PIVOT_TOL, SYMMETRY_TOL,
};
pub use rng::{
    sample_bernoulli, sample_poisson, sample_std_normal, sample_t, sample_uniform, stream_id,
    RngStream,
};
pub use special::{
    beta_inc, chi2_cdf, chi2_quantile, expit, f_cdf, f_quantile, gamma_p, gamma_pq,
    hotelling_cutoff, ln_gamma, normal_cdf, normal_quantile, unit_ball_volume,
};

//! Special functions and the distribution quantiles built on them.
//!
//! The normal CDF is evaluated through the regularized incomplete gamma
//! function (`erfc(x) = Q(1/2, x²)`), which keeps the absolute error near
//! machine precision over the whole real line. Chi-squared and F quantiles are
//! found by bisection on the regularized incomplete gamma and beta functions.

use crate::error::{domain, Error, Result};

const MAX_ITER: usize = 20_000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower and upper incomplete gamma `(P(a, x), Q(a, x))`.
pub fn gamma_pq(a: f64, x: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(x >= 0.0) || !a.is_finite() {
        return Err(domain(format!(
            "incomplete gamma needs a > 0, x >= 0 (a={a}, x={x})"
        )));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let log_pref = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                let p = (log_pref.exp() * sum).min(1.0);
                return Ok((p, 1.0 - p));
            }
        }
        Err(Error::NonConvergence {
            iterations: MAX_ITER,
        })
    } else {
        // modified Lentz for the continued fraction of Q
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                let q = (log_pref.exp() * h).min(1.0);
                return Ok((1.0 - q, q));
            }
        }
        Err(Error::NonConvergence {
            iterations: MAX_ITER,
        })
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    Ok(gamma_pq(a, x)?.0)
}

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
    })
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(domain(format!(
            "incomplete beta needs a, b > 0 and x in [0, 1] (a={a}, b={b}, x={x})"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_cf(b, a, 1.0 - x)? / b)
    }
}

/// Standard normal CDF `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let z = x * std::f64::consts::FRAC_1_SQRT_2;
    // Φ(x) = erfc(-z)/2 and erfc(|z|) = Q(1/2, z²)
    let (p, q) = gamma_pq(0.5, z * z).expect("finite square is in domain");
    if x >= 0.0 {
        0.5 + 0.5 * p
    } else {
        0.5 * q
    }
}

/// Standard normal quantile `Φ⁻¹(p)`.
///
/// Acklam's rational approximation polished with two Halley steps.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("normal quantile needs 0 < p < 1 (p={p})")));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let lo = 0.024_25;
    let mut x = if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Chi-squared CDF with `d` degrees of freedom.
pub fn chi2_cdf(d: u32, x: f64) -> Result<f64> {
    if d == 0 {
        return Err(domain("chi-squared needs d >= 1"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    gamma_p(0.5 * d as f64, 0.5 * x)
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(d1: u32, d2: u32, x: f64) -> Result<f64> {
    if d1 == 0 || d2 == 0 {
        return Err(domain("F distribution needs d1, d2 >= 1"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let (a, b) = (d1 as f64, d2 as f64);
    beta_inc(0.5 * a, 0.5 * b, a * x / (a * x + b))
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("probability must lie in (0, 1) (p={p})")))
    }
}

/// Bisection for an increasing `cdf` on `(0, ∞)`.
fn invert_increasing(p: f64, guess: f64, cdf: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = guess.max(1.0);
    while cdf(hi)? < p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NonConvergence { iterations: 0 });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Chi-squared quantile `χ²_{d, p}`.
pub fn chi2_quantile(d: u32, p: f64) -> Result<f64> {
    if d == 0 {
        return Err(domain("chi-squared needs d >= 1"));
    }
    check_prob(p)?;
    if d == 2 {
        return Ok(-2.0 * (-p).ln_1p());
    }
    invert_increasing(p, d as f64 + 4.0 * (d as f64).sqrt(), |x| chi2_cdf(d, x))
}

/// Quantile of the F distribution with `(d1, d2)` degrees of freedom.
///
/// Solves `I_u(d1/2, d2/2) = p` for `u` in `(0, 1)` by bisection and maps back
/// through `x = d2 u / (d1 (1 - u))`.
pub fn f_quantile(d1: u32, d2: u32, p: f64) -> Result<f64> {
    if d1 == 0 || d2 == 0 {
        return Err(domain("F distribution needs d1, d2 >= 1"));
    }
    check_prob(p)?;
    let (a, b) = (0.5 * d1 as f64, 0.5 * d2 as f64);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_inc(a, b, mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    Ok(d2 as f64 * u / (d1 as f64 * (1.0 - u)))
}

/// Two-sided Hotelling cutoff `d (T-1)/(T-d) F_{d, T-d}(1-α)`.
pub fn hotelling_cutoff(d: usize, t: usize, alpha: f64) -> Result<f64> {
    if t <= d {
        return Err(domain(format!(
            "Hotelling cutoff needs T > d (T={t}, d={d})"
        )));
    }
    check_prob(alpha)?;
    let f = f_quantile(d as u32, (t - d) as u32, 1.0 - alpha)?;
    Ok(d as f64 * (t as f64 - 1.0) / (t as f64 - d as f64) * f)
}

/// `expit(ν) = 1/(1 + e^{-ν})`, stable for large `|ν|`.
pub fn expit(nu: f64) -> f64 {
    if nu >= 0.0 {
        1.0 / (1.0 + (-nu).exp())
    } else {
        let e = nu.exp();
        e / (1.0 + e)
    }
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    (h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        // Γ(10) = 9!
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_functions_match_frozen_values() {
        // scipy.special.gammainc(2.5, 1.3), betainc(2, 3.5, 0.4)
        assert!((gamma_p(2.5, 1.3).unwrap() - 0.238_634_732_154_986_04).abs() < 1e-13);
        assert!((beta_inc(2.0, 3.5, 0.4).unwrap() - 0.598_449_086_665_215_1).abs() < 1e-13);
        // P(1, x) = 1 - e^{-x}
        assert!((gamma_p(1.0, 1.5).unwrap() - (1.0 - (-1.5f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn normal_cdf_basics() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!(normal_cdf(8.0) > 1.0 - 1e-14);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_093_3).abs() < 1e-16);
        assert!((normal_cdf(-10.0) / 7.619_853_024_160_47e-24 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quantile_domain_errors() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(chi2_quantile(0, 0.5).is_err());
        assert!(chi2_quantile(3, 1.5).is_err());
        assert!(f_quantile(0, 3, 0.5).is_err());
        assert!(f_quantile(3, 3, -0.1).is_err());
    }

    #[test]
    fn chi2_two_dof_closed_form() {
        for &p in &[0.01, 0.3, 0.9, 0.999] {
            let q = chi2_quantile(2, p).unwrap();
            assert!((q + 2.0 * (1.0 - p).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(800.0) == 1.0 && expit(-800.0) == 0.0);
        assert!((expit(3f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-13);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-13);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-13);
    }
}

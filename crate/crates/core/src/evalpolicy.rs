//! Evaluation policies `π^eval` that define the adaptive weights.

use std::io::{self, BufRead, Write};

use rayon::prelude::*;

use crate::env::{run_trajectory, EnvConfig};
use crate::error::{domain, Error, Result};
use crate::output::fmt_f64;
use crate::policies::{PolicyConfig, PolicyState};
use crate::statfn::RngStream;

/// Stream tag reserved for pilot runs of [`estimate_expected_pi`].
pub const PILOT_EXPECTED_PI: u64 = 0x5049_4c4f_545f_5049;

pub const EXPECTED_PI_FLOOR: f64 = 0.01;
pub const EXPECTED_PI_CEIL: f64 = 0.99;

/// Pre-specified evaluation policy. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalPolicy {
    Uniform,
    /// `table[t-1] = π^eval_{t,1}`
    ExpectedPi(Vec<f64>),
}

impl EvalPolicy {
    pub fn expected_pi(table: Vec<f64>) -> Result<Self> {
        if table.is_empty() {
            return Err(domain("expected-pi table is empty"));
        }
        if let Some(p) = table.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(domain(format!(
                "expected-pi entries must lie in (0, 1), got {p}"
            )));
        }
        Ok(Self::ExpectedPi(table))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::ExpectedPi(_) => "expected_pi",
        }
    }

    /// `π^eval_{t,arm}` for 1-based `t`.
    pub fn eval_prob(&self, t: usize, arm: u8) -> Result<f64> {
        if arm > 1 {
            return Err(domain(format!("arm must be 0 or 1, got {arm}")));
        }
        let p1 = match self {
            Self::Uniform => {
                if t == 0 {
                    return Err(Error::Index { index: t, len: 0 });
                }
                0.5
            }
            Self::ExpectedPi(table) => {
                if t == 0 || t > table.len() {
                    return Err(Error::Index {
                        index: t,
                        len: table.len(),
                    });
                }
                table[t - 1]
            }
        };
        Ok(if arm == 1 { p1 } else { 1.0 - p1 })
    }

    /// Writes the table as `t,pi_eval_arm1`. Uniform needs a horizon.
    pub fn write_csv<W: Write>(&self, horizon: usize, mut w: W) -> io::Result<()> {
        writeln!(w, "t,pi_eval_arm1")?;
        for t in 1..=horizon {
            let p = self.eval_prob(t, 1).map_err(io::Error::other)?;
            writeln!(w, "{t},{}", fmt_f64(p))?;
        }
        Ok(())
    }

    /// Reads a table written by [`EvalPolicy::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| domain(e.to_string()))?
            .unwrap_or_default();
        if header.trim_end() != "t,pi_eval_arm1" {
            return Err(domain(format!("unexpected header {header:?}")));
        }
        let mut table = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| domain(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (t, p) = line
                .split_once(',')
                .ok_or_else(|| domain(format!("line {}: expected two columns", i + 2)))?;
            let t: usize = t
                .trim()
                .parse()
                .map_err(|_| domain(format!("line {}: bad step {t:?}", i + 2)))?;
            if t != table.len() + 1 {
                return Err(domain(format!("line {}: steps must be 1, 2, ...", i + 2)));
            }
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| domain(format!("line {}: bad probability {p:?}", i + 2)))?;
            table.push(p);
        }
        Self::expected_pi(table)
    }
}

/// Oracle evaluation policy `π^eval_{t,1} = E_{θ*}[π_{t,1}]`.
///
/// Averages the logged arm-1 probability over `n_pilot` independent runs under
/// the true environment and clamps the result to `[0.01, 0.99]`. Pilot `i`
/// uses the stream `(PILOT_EXPECTED_PI, T, i)` under `master_seed`.
pub fn estimate_expected_pi(
    cfg: &EnvConfig,
    policy_cfg: &PolicyConfig,
    horizon: usize,
    n_pilot: usize,
    master_seed: u64,
) -> Result<EvalPolicy> {
    if n_pilot < 100 {
        return Err(domain(format!(
            "need at least 100 pilot runs, got {n_pilot}"
        )));
    }
    let runs: Vec<Vec<f64>> = (0..n_pilot)
        .into_par_iter()
        .map(|i| {
            let mut rng =
                RngStream::derived(master_seed, &[PILOT_EXPECTED_PI, horizon as u64, i as u64]);
            let mut policy = PolicyState::new(policy_cfg, cfg.feature_dim())?;
            Ok(run_trajectory(cfg, &mut policy, horizon, &mut rng)?.prob_arm1)
        })
        .collect::<Result<_>>()?;
    let mut table = vec![0.0; horizon];
    for run in &runs {
        for (acc, p) in table.iter_mut().zip(run) {
            *acc += p;
        }
    }
    for p in &mut table {
        *p = (*p / n_pilot as f64).clamp(EXPECTED_PI_FLOOR, EXPECTED_PI_CEIL);
    }
    EvalPolicy::expected_pi(table)
}

/// Per-arm asymptotic variance of the AW-LS arm mean and its lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmVariance {
    /// `σ² · mean(π^eval) / mean(sqrt(π π^eval))²`
    pub variance: f64,
    /// `σ² / mean(π)`
    pub lower_bound: f64,
}

/// Variance of `sqrt(T)(θ̂_a - θ*_a)` for the AW-LS arm means, arm by arm.
pub fn awls_asymptotic_variance(
    sigma2: &[f64],
    pi_bar: &[f64],
    pi_eval_bar: &[f64],
    cross_bar: &[f64],
) -> Result<Vec<ArmVariance>> {
    let n = sigma2.len();
    for other in [pi_bar.len(), pi_eval_bar.len(), cross_bar.len()] {
        if other != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: other,
            });
        }
    }
    (0..n)
        .map(|a| {
            let in_unit = |v: f64| v > 0.0 && v <= 1.0;
            if !(sigma2[a] > 0.0)
                || !in_unit(pi_bar[a])
                || !in_unit(pi_eval_bar[a])
                || !in_unit(cross_bar[a])
            {
                return Err(domain(format!("arm {a}: variance inputs out of range")));
            }
            if cross_bar[a] * cross_bar[a] > pi_bar[a] * pi_eval_bar[a] * (1.0 + 1e-12) {
                return Err(domain(format!(
                    "arm {a}: mean sqrt(pi pi_eval) exceeds sqrt(mean pi * mean pi_eval)"
                )));
            }
            let variance = sigma2[a] * pi_eval_bar[a] / (cross_bar[a] * cross_bar[a]);
            let lower_bound = sigma2[a] / pi_bar[a];
            assert!(variance >= lower_bound * (1.0 - 1e-11) - 1e-12);
            Ok(ArmVariance {
                variance,
                lower_bound,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_table_lookup() {
        assert_eq!(EvalPolicy::Uniform.eval_prob(17, 0).unwrap(), 0.5);
        let p = EvalPolicy::expected_pi(vec![0.5, 0.6, 0.7]).unwrap();
        assert!((p.eval_prob(3, 0).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(p.eval_prob(3, 1).unwrap(), 0.7);
        assert!(matches!(p.eval_prob(4, 1), Err(Error::Index { .. })));
        assert!(matches!(p.eval_prob(0, 1), Err(Error::Index { .. })));
        assert!(EvalPolicy::expected_pi(vec![0.0]).is_err());
    }

    #[test]
    fn variance_examples() {
        let v = awls_asymptotic_variance(&[1.0], &[0.5], &[0.5], &[0.4]).unwrap();
        assert!((v[0].variance - 3.125).abs() < 1e-12);
        assert_eq!(v[0].lower_bound, 2.0);
        let eq = awls_asymptotic_variance(&[2.0], &[0.3], &[0.3], &[0.3]).unwrap();
        assert!((eq[0].variance - eq[0].lower_bound).abs() < 1e-12);
        assert!(awls_asymptotic_variance(&[0.0], &[0.3], &[0.3], &[0.3]).is_err());
        assert!(awls_asymptotic_variance(&[1.0], &[0.3], &[0.3], &[0.5]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = EvalPolicy::expected_pi(vec![0.25, 0.1 + 0.2, 0.99]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(3, &mut buf).unwrap();
        let back = EvalPolicy::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }
}

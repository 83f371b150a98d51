//! High-resolution rate and entropy predictions.
//!
//! All formulas are first-order asymptotics in n evaluated at finite n; every
//! value is a prediction of the limiting behavior, so comparison tooling
//! reports ratios to theory rather than absolute errors.
//!
//! For a spectrum λ_j ~ φ(j) with φ(x) = scale·x⁻ᵇ, b > 1, and
//! ψ(x) = 1/(x φ(x)):
//!
//! ```text
//! quantization:  e_n ≈ ((b/2)^{b-1} b/(b-1))^{1/2} ψ(log n)^{-1/2}
//! entropy:       e_n(U) ≈ (b/2)^{b/2} φ(log n)^{1/2}
//! ```
//!
//! so the two are linked by e_n / e_n(U) = (2 log n/(b-1))^{1/2} identically.
//! The Riemann-Liouville and integrated-Brownian specializations below are
//! independent closed forms used to cross-check the general route.

use crate::error::FunqError;
use crate::process::EigenModel;
use crate::special::gamma;
use crate::vector::CapacityEstimate;
use crate::Result;
use std::f64::consts::PI;

/// One rate prediction at level n.
#[derive(Debug, Clone)]
pub struct RatePrediction {
    pub n: u64,
    /// Predicted e_n (not squared).
    pub value: f64,
    /// Which formula produced the value.
    pub label: &'static str,
}

fn check_level(n: u64) -> Result<f64> {
    if n < 3 {
        return Err(FunqError::LevelTooSmall(n));
    }
    Ok((n as f64).ln())
}

/// Predicted quantization error e_n at nat-level log n (general formula).
pub fn quantization_rate_at_log(model: &EigenModel, log_n: f64) -> Result<f64> {
    let rv = model.reg_var()?;
    if rv.b <= 1.0 {
        return Err(FunqError::IndexTooSmall(rv.b));
    }
    let b = rv.b;
    let constant = ((b / 2.0).powf(b - 1.0) * b / (b - 1.0)).sqrt();
    Ok(constant * (log_n * rv.phi(log_n)).sqrt())
}

/// Predicted quantization error e_n for the model's process.
pub fn quantization_rate(model: &EigenModel, n: u64) -> Result<RatePrediction> {
    let log_n = check_level(n)?;
    Ok(RatePrediction {
        n,
        value: quantization_rate_at_log(model, log_n)?,
        label: "quantization",
    })
}

/// Predicted entropy number e_n(U) of the unit RKHS ball at nat-level log n.
pub fn entropy_rate_at_log(model: &EigenModel, log_n: f64) -> Result<f64> {
    let rv = model.reg_var()?;
    if rv.b <= 0.0 {
        return Err(FunqError::IndexTooSmall(rv.b));
    }
    let b = rv.b;
    Ok((b / 2.0).powf(b / 2.0) * rv.phi(log_n).sqrt())
}

/// Predicted entropy number e_n(U).
pub fn entropy_rate(model: &EigenModel, n: u64) -> Result<RatePrediction> {
    let log_n = check_level(n)?;
    Ok(RatePrediction {
        n,
        value: entropy_rate_at_log(model, log_n)?,
        label: "entropy",
    })
}

/// Closed-form Riemann-Liouville quantization rate evaluated directly from
/// rho (independent of the general route):
/// π^{-(ρ+1/2)} (ρ+1/2)^ρ ((2ρ+1)/2ρ)^{1/2} Γ(ρ+1/2) (log n)^{-ρ}.
pub fn rl_rate_direct(rho: f64, log_n: f64) -> f64 {
    PI.powf(-(rho + 0.5))
        * (rho + 0.5).powf(rho)
        * ((2.0 * rho + 1.0) / (2.0 * rho)).sqrt()
        * gamma(rho + 0.5)
        * log_n.powf(-rho)
}

/// Closed-form integrated-Brownian quantization rate:
/// π^{-(β+1)} (β+1)^{β+1/2} ((2β+2)/(2β+1))^{1/2} (log n)^{-(β+1/2)}.
pub fn ibm_rate_direct(beta: f64, log_n: f64) -> f64 {
    PI.powf(-(beta + 1.0))
        * (beta + 1.0).powf(beta + 0.5)
        * ((2.0 * beta + 2.0) / (2.0 * beta + 1.0)).sqrt()
        * log_n.powf(-(beta + 0.5))
}

/// Closed-form Riemann-Liouville entropy rate:
/// ((ρ+1/2)/π)^{ρ+1/2} Γ(ρ+1/2) (log n)^{-(ρ+1/2)}.
pub fn rl_entropy_direct(rho: f64, log_n: f64) -> f64 {
    ((rho + 0.5) / PI).powf(rho + 0.5) * gamma(rho + 0.5) * log_n.powf(-(rho + 0.5))
}

/// Limit ratio e_n(X^ρ)/e_n(Z^ρ) between the Riemann-Liouville process and
/// fractional Brownian motion of the same index:
/// Γ(ρ+1/2)/(Γ(2ρ+1) sin(πρ))^{1/2}.
pub fn fbm_ratio(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(FunqError::OutOfRange {
            name: "rho",
            range: "(0, 1)",
            value: rho,
        });
    }
    Ok(gamma(rho + 0.5) / (gamma(2.0 * rho + 1.0) * (PI * rho).sin()).sqrt())
}

/// The index in (1/2, 1) where the Riemann-Liouville process and fractional
/// Brownian motion have strongly equivalent quantization errors, found by
/// bisection of [`fbm_ratio`] − 1 on [0.6, 0.95].
pub fn rho_star() -> Result<f64> {
    let mut lo = 0.6f64;
    let mut hi = 0.95f64;
    let f = |r: f64| fbm_ratio(r).map(|v| v - 1.0);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo < 0.0 && fhi > 0.0) {
        return Err(FunqError::OutOfRange {
            name: "bisection bracket",
            range: "sign change on [0.6, 0.95]",
            value: flo,
        });
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Upper-bound constant of the once-integrated scalar product quantizer,
/// (3(12 C(1) + 1)/4)^{1/2}, evaluated at a given C(1).
pub fn rl32_bound_constant(c1: f64) -> f64 {
    (3.0 * (12.0 * c1 + 1.0) / 4.0).sqrt()
}

/// Truncation dimension c_n and the lower bound on the quantization
/// dimension d_n.
#[derive(Debug, Clone, Copy)]
pub struct DimensionProfile {
    pub n: u64,
    /// Smallest k with Σ_{j>k} λ_j ≤ (predicted e_n)².
    pub c_n: usize,
    /// b^{-1/(b-1)}·(2 log n)/b.
    pub lower_bound: f64,
}

/// Evaluate the dimension profile of the model at level n.
pub fn dimension_profile(model: &EigenModel, n: u64) -> Result<DimensionProfile> {
    let log_n = check_level(n)?;
    let rate = quantization_rate_at_log(model, log_n)?;
    let threshold = rate * rate;
    let mut k = 0usize;
    while model.tail_sum(k) > threshold {
        k += 1;
        if k > 1_000_000 {
            return Err(FunqError::OutOfRange {
                name: "c_n",
                range: "<= 1e6",
                value: k as f64,
            });
        }
    }
    let b = model.b();
    let lower_bound = b.powf(-1.0 / (b - 1.0)) * 2.0 * log_n / b;
    Ok(DimensionProfile {
        n,
        c_n: k,
        lower_bound,
    })
}

/// One row of the capacity report.
#[derive(Debug, Clone, Copy)]
pub struct CapacityRow {
    pub l: usize,
    pub c: f64,
    pub q: f64,
    pub c_over_l: f64,
    pub q_over_l: f64,
}

/// Capacity constants check: C(l)/l ≥ 1 within tolerance, Q(1) near π√3/2,
/// and Q(l)/l decreasing toward its limit 1.
#[derive(Debug, Clone)]
pub struct CapacityReport {
    pub rows: Vec<CapacityRow>,
    pub c_over_l_at_least_one: bool,
    pub q1_within_2pct: bool,
    pub q_over_l_decreasing: bool,
}

/// Summarize capacity estimates (noise tolerance 2% on the trend checks).
pub fn capacity_limit_check(estimates: &[CapacityEstimate]) -> CapacityReport {
    let mut rows: Vec<CapacityRow> = estimates
        .iter()
        .map(|e| CapacityRow {
            l: e.l,
            c: e.c,
            q: e.q,
            c_over_l: e.c / e.l as f64,
            q_over_l: e.q / e.l as f64,
        })
        .collect();
    rows.sort_by_key(|r| r.l);
    let tol = 0.02;
    let c_over_l_at_least_one = rows.iter().all(|r| r.c_over_l >= 1.0 - tol);
    let q1_target = PI * 3f64.sqrt() / 2.0;
    let q1_within_2pct = rows
        .iter()
        .find(|r| r.l == 1)
        .map(|r| (r.q - q1_target).abs() / q1_target < tol)
        .unwrap_or(false);
    let q_over_l_decreasing = rows
        .windows(2)
        .all(|w| w[1].q_over_l <= w[0].q_over_l * (1.0 + tol));
    CapacityReport {
        rows,
        c_over_l_at_least_one,
        q1_within_2pct,
        q_over_l_decreasing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_rate_closed_form() {
        // b = 2, scale 1/pi^2: e_n = sqrt(2)/pi (log n)^{-1/2}
        let m = EigenModel::brownian();
        for n in [10u64, 1000, 1_000_000] {
            let log_n = (n as f64).ln();
            let expected = 2f64.sqrt() / PI / log_n.sqrt();
            let got = quantization_rate(&m, n).unwrap().value;
            assert!((got - expected).abs() < 1e-14 * expected);
        }
    }

    #[test]
    fn general_route_reproduces_rl_closed_form() {
        // 20 (rho, n) pairs to 1e-12 relative
        let rhos = [0.3, 0.5, 0.75, 1.0, 1.5];
        let ns = [10u64, 100, 10_000, 10_000_000];
        for &rho in &rhos {
            let model = EigenModel::riemann_liouville(rho).unwrap();
            for &n in &ns {
                let log_n = (n as f64).ln();
                let general = quantization_rate(&model, n).unwrap().value;
                let direct = rl_rate_direct(rho, log_n);
                assert!(
                    (general - direct).abs() <= 1e-12 * direct,
                    "rho={rho} n={n}: {general} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn general_route_reproduces_ibm_closed_form() {
        for beta in [0.5, 1.0, 2.0] {
            let model = EigenModel::integrated_bm(beta).unwrap();
            for n in [100u64, 100_000] {
                let log_n = (n as f64).ln();
                let general = quantization_rate(&model, n).unwrap().value;
                let direct = ibm_rate_direct(beta, log_n);
                assert!(
                    (general - direct).abs() <= 1e-12 * direct,
                    "beta={beta} n={n}"
                );
            }
        }
    }

    #[test]
    fn ibm_constant_is_shifted_rl_over_gamma() {
        // the beta family is the rho = beta + 1/2 family divided by Gamma(1+beta)
        for beta in [0.4, 1.0, 1.7] {
            let log_n = 10.0;
            let lhs = ibm_rate_direct(beta, log_n);
            let rhs = rl_rate_direct(beta + 0.5, log_n) / gamma(1.0 + beta);
            assert!((lhs - rhs).abs() < 1e-12 * rhs, "beta={beta}");
        }
    }

    #[test]
    fn rl_half_equals_brownian_rate() {
        let bm = EigenModel::brownian();
        let rl = EigenModel::riemann_liouville(0.5).unwrap();
        for n in [10u64, 1000] {
            let a = quantization_rate(&bm, n).unwrap().value;
            let b = quantization_rate(&rl, n).unwrap().value;
            assert!((a - b).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn quantization_entropy_link() {
        // e_n / e_n(U) = sqrt(2 log n/(b-1)) exactly as formulas
        let models = [
            EigenModel::brownian(),
            EigenModel::riemann_liouville(0.8).unwrap(),
            EigenModel::integrated_bm(1.0).unwrap(),
        ];
        for m in &models {
            for n in [5u64, 1000, 1_000_000] {
                let log_n = (n as f64).ln();
                let q = quantization_rate(m, n).unwrap().value;
                let e = entropy_rate(m, n).unwrap().value;
                let link = (2.0 * log_n / (m.b() - 1.0)).sqrt();
                assert!((q / e - link).abs() < 1e-12 * link, "{} n={n}", m.name());
            }
        }
    }

    #[test]
    fn rl_entropy_specialization() {
        // the general entropy formula collapses to the closed RL form, which
        // is also (rho/log n)^{1/2} times the quantization rate
        for rho in [0.4, 0.5, 1.2] {
            let model = EigenModel::riemann_liouville(rho).unwrap();
            for n in [100u64, 10_000] {
                let log_n = (n as f64).ln();
                let general = entropy_rate(&model, n).unwrap().value;
                let direct = rl_entropy_direct(rho, log_n);
                assert!((general - direct).abs() < 1e-12 * direct);
                let viaq = (rho / log_n).sqrt() * quantization_rate(&model, n).unwrap().value;
                assert!((general - viaq).abs() < 1e-12 * general);
            }
        }
    }

    #[test]
    fn entropy_value_at_log_level_100() {
        // Brownian at log n = 100: (b/2)^{b/2} = 1, phi(100)^{1/2} = 10^-2/pi
        let m = EigenModel::brownian();
        let v = entropy_rate_at_log(&m, 100.0).unwrap();
        assert!((v - 0.01 / PI).abs() < 1e-15);
    }

    #[test]
    fn rates_decrease_in_n() {
        let m = EigenModel::riemann_liouville(0.7).unwrap();
        let mut prev = f64::INFINITY;
        for n in [3u64, 10, 100, 10_000, 10_000_000] {
            let v = quantization_rate(&m, n).unwrap().value;
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    #[test]
    fn guards_reject_out_of_scope_inputs() {
        let m = EigenModel::brownian();
        assert!(matches!(
            quantization_rate(&m, 2),
            Err(FunqError::LevelTooSmall(2))
        ));
        let finite = EigenModel::explicit(vec![1.0, 0.5], None).unwrap();
        assert!(quantization_rate(&finite, 100).is_err());
        assert!(fbm_ratio(0.0).is_err());
        assert!(fbm_ratio(1.0).is_err());
    }

    #[test]
    fn fbm_ratio_anchors() {
        // rho = 1/2: Gamma(1)/(Gamma(2) sin(pi/2))^{1/2} = 1 exactly
        assert_eq!(fbm_ratio(0.5).unwrap(), 1.0);
        let tiny = fbm_ratio(0.01).unwrap();
        assert!(tiny.is_finite() && tiny > 0.0);
    }

    #[test]
    fn rho_star_value() {
        let r = rho_star().unwrap();
        assert!((r - 0.81557).abs() < 1e-4, "{r}");
        // it is a genuine root
        assert!((fbm_ratio(r).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rl32_bound_at_limit_capacity() {
        let c1 = PI * 3f64.sqrt() / 2.0;
        let bound = rl32_bound_constant(c1);
        assert!((bound - 5.02357).abs() < 1e-4, "{bound}");
    }

    #[test]
    fn dimension_profile_brownian() {
        let m = EigenModel::brownian();
        // lower bound is log n / 2 for b = 2
        let p = dimension_profile(&m, 1000).unwrap();
        assert!((p.lower_bound - (1000f64).ln() / 2.0).abs() < 1e-12);
        // pinned truncation dimensions at the three desk levels
        let cases = [(1_000u64, 4usize), (1_000_000, 7), (1_000_000_000, 11)];
        for (n, expect) in cases {
            let p = dimension_profile(&m, n).unwrap();
            assert_eq!(p.c_n, expect, "n={n}");
        }
        // final relative deviation below 10%
        let p = dimension_profile(&m, 1_000_000_000).unwrap();
        let dev = (p.c_n as f64 / p.lower_bound - 1.0).abs();
        assert!(dev < 0.10, "deviation {dev}");
    }

    #[test]
    fn dimension_lower_bound_rl_form() {
        // (2 rho + 1)^{-1/2rho} 2 log n/(2 rho + 1)
        let rho = 0.75;
        let m = EigenModel::riemann_liouville(rho).unwrap();
        let n = 10_000u64;
        let log_n = (n as f64).ln();
        let expected = (2.0 * rho + 1.0).powf(-1.0 / (2.0 * rho)) * 2.0 * log_n / (2.0 * rho + 1.0);
        let p = dimension_profile(&m, n).unwrap();
        assert!((p.lower_bound - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn capacity_report_flags() {
        let est = vec![
            CapacityEstimate {
                l: 1,
                c: 2.70,
                q: 2.70,
                support: vec![],
            },
            CapacityEstimate {
                l: 2,
                c: 2.1,
                q: 2.05,
                support: vec![],
            },
        ];
        let report = capacity_limit_check(&est);
        assert!(report.c_over_l_at_least_one);
        assert!(report.q1_within_2pct);
        assert!(report.q_over_l_decreasing);
        assert!((report.rows[0].q_over_l - 2.70).abs() < 1e-12);
    }
}

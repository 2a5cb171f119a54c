//! Closed-form key-rate bounds for the Gaussian channel with additive
//! interference known at the transmitter ("secret keys from dirty paper").
//!
//! Model: Y_r = X + S + Z_r and Y_e = X + S + Z_e with S ~ N(0,Q),
//! Z_r ~ N(0,1), Z_e ~ N(0,1+Δ), input power E[X²] ≤ P ≥ 1 for the lower
//! bound. The auxiliary variable is U = X + αS with E[XS] = ρ√(PQ). All
//! rates are bits/symbol.

use serde::Serialize;

use crate::error::{Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;
const TWO_PI_E: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::E;

#[inline]
fn half_log2(x: f64) -> f64 {
    0.5 * x.log2()
}

/// Parameters of the dirty-paper key channel.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GaussianParams {
    /// Transmit power (linear).
    pub p: f64,
    /// Interference power (linear).
    pub q: f64,
    /// Eavesdropper degradation (linear).
    pub delta: f64,
    /// Input–state correlation, when pinned externally.
    pub rho: Option<f64>,
    /// Auxiliary scaling U = X + αS, when pinned externally.
    pub alpha: Option<f64>,
}

impl GaussianParams {
    pub fn new(p: f64, q: f64, delta: f64) -> Self {
        GaussianParams {
            p,
            q,
            delta,
            rho: None,
            alpha: None,
        }
    }
}

fn check_nonneg(p: f64, q: f64, delta: f64) -> Result<()> {
    if !(p >= 0.0) || !(q >= 0.0) || !(delta >= 0.0) {
        return Err(Error::domain(format!(
            "P, Q, Δ must be nonnegative (got P={p}, Q={q}, Δ={delta})"
        )));
    }
    Ok(())
}

/// The input–state correlation pinned by P(1−ρ²) = 1 − 1/(P+Q+1).
///
/// The nonnegative root is returned; the rate is increasing in ρ, so the
/// negative root is never useful.
pub fn solve_rho(p: f64, q: f64) -> Result<f64> {
    check_nonneg(p, q, 0.0)?;
    if p < 1.0 {
        return Err(Error::domain(format!(
            "the lower-bound analysis requires P ≥ 1 (got P={p})"
        )));
    }
    let rho_sq = 1.0 - (1.0 - 1.0 / (p + q + 1.0)) / p;
    Ok(rho_sq.max(0.0).sqrt())
}

/// Achievable key rate with α = 1 and ρ from [`solve_rho`]:
/// R⁻ = ½ log₂(1 + Δ(P+Q+2ρ√(PQ)) / (P+Q+1+Δ+2ρ√(PQ))).
pub fn lower_bound(p: f64, q: f64, delta: f64) -> Result<f64> {
    check_nonneg(p, q, delta)?;
    let rho = solve_rho(p, q)?;
    let a = p + q + 2.0 * rho * (p * q).sqrt();
    Ok(half_log2(1.0 + delta * a / (a + 1.0 + delta)))
}

/// Converse bound via the coupling Z_e = Z_r + Z_δ:
/// R⁺ = ½ log₂(1 + Δ(P+Q+2√(PQ)) / (P+Q+1+Δ+2√(PQ))).
pub fn upper_bound(p: f64, q: f64, delta: f64) -> Result<f64> {
    check_nonneg(p, q, delta)?;
    let a = p + q + 2.0 * (p * q).sqrt();
    Ok(half_log2(1.0 + delta * a / (a + 1.0 + delta)))
}

/// Lower bound plus the exact-feasibility record at the chosen (α=1, ρ).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LowerBoundReport {
    pub rate: f64,
    pub rho: f64,
    /// I(U;Y_r) − I(U;S) at the chosen point. The pinning of ρ drops a
    /// 2ρ√(PQ) term from the exact feasibility inequality, so this is
    /// slightly negative whenever Q > 0 and exactly zero at Q = 0.
    pub constraint_slack_bits: f64,
}

pub fn lower_bound_report(p: f64, q: f64, delta: f64) -> Result<LowerBoundReport> {
    let rate = lower_bound(p, q, delta)?;
    let rho = solve_rho(p, q)?;
    let t = gaussian_mi_terms(p, q, delta, rho, 1.0)?;
    Ok(LowerBoundReport {
        rate,
        rho,
        constraint_slack_bits: t.i_u_yr - t.i_u_s,
    })
}

/// All Gaussian information quantities of the auxiliary construction, from
/// the joint covariance of (U = X+αS, S, Y_r, Y_e). Differential entropies
/// are in bits.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MiTerms {
    pub h_u_given_ye: f64,
    pub h_u_given_yr: f64,
    pub i_u_s: f64,
    pub i_u_yr: f64,
    pub i_u_ye: f64,
}

pub fn gaussian_mi_terms(p: f64, q: f64, delta: f64, rho: f64, alpha: f64) -> Result<MiTerms> {
    check_nonneg(p, q, delta)?;
    if !(rho.abs() < 1.0) {
        return Err(Error::domain(format!("|ρ| < 1 required (got ρ={rho})")));
    }
    let c = rho * (p * q).sqrt(); // E[XS]
    let var_u = p + alpha * alpha * q + 2.0 * alpha * c;
    let var_s = q;
    let cov_us = c + alpha * q;
    // Y_r = X + S + Z_r, Y_e = X + S + Z_e
    let var_yr = p + q + 2.0 * c + 1.0;
    let var_ye = p + q + 2.0 * c + 1.0 + delta;
    let cov_uy = p + alpha * q + (1.0 + alpha) * c;

    let cond_var = |vu: f64, vy: f64, cuy: f64| (vu - cuy * cuy / vy).max(0.0);
    let mi = |vu: f64, vy: f64, cuy: f64| -> f64 {
        if vu <= 0.0 || vy <= 0.0 {
            return 0.0;
        }
        let r2 = (cuy * cuy / (vu * vy)).min(1.0 - 1e-15);
        (-half_log2(1.0 - r2)).max(0.0)
    };

    Ok(MiTerms {
        h_u_given_ye: half_log2(TWO_PI_E * cond_var(var_u, var_ye, cov_uy)),
        h_u_given_yr: half_log2(TWO_PI_E * cond_var(var_u, var_yr, cov_uy)),
        i_u_s: mi(var_u, var_s, cov_us),
        i_u_yr: mi(var_u, var_yr, cov_uy),
        i_u_ye: mi(var_u, var_ye, cov_uy),
    })
}

/// Secret-message rate for jointly Gaussian inputs:
/// max over (α, ρ) of I(U;Y_r) − max(I(U;S), I(U;Y_e)), by adaptive grid
/// refinement to about 1e-3 bits.
pub fn secret_message_rate_gaussian(p: f64, q: f64, delta: f64) -> Result<f64> {
    check_nonneg(p, q, delta)?;
    let rate_at = |alpha: f64, rho: f64| -> f64 {
        match gaussian_mi_terms(p, q, delta, rho, alpha) {
            Ok(t) => t.i_u_yr - t.i_u_s.max(t.i_u_ye),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let mut best = 0.0f64; // the trivial input always achieves 0
    let (mut a_lo, mut a_hi) = (-1.0f64, 2.5f64);
    let (mut r_lo, mut r_hi) = (-0.999f64, 0.999f64);
    let (mut a_best, mut r_best) = (1.0f64, 0.0f64);

    for round in 0..14 {
        let na = if round == 0 { 57 } else { 13 };
        let nr = if round == 0 { 41 } else { 13 };
        for ia in 0..=na {
            let alpha = a_lo + (a_hi - a_lo) * ia as f64 / na as f64;
            for ir in 0..=nr {
                let rho = (r_lo + (r_hi - r_lo) * ir as f64 / nr as f64).clamp(-0.999999, 0.999999);
                let v = rate_at(alpha, rho);
                if v > best {
                    best = v;
                    a_best = alpha;
                    r_best = rho;
                }
            }
        }
        let a_span = (a_hi - a_lo) * 0.35;
        let r_span = (r_hi - r_lo) * 0.35;
        a_lo = a_best - a_span / 2.0;
        a_hi = a_best + a_span / 2.0;
        r_lo = (r_best - r_span / 2.0).max(-0.999999);
        r_hi = (r_best + r_span / 2.0).min(0.999999);
        if a_span < 1e-5 && r_span < 1e-5 {
            break;
        }
    }
    Ok(best)
}

/// One sweep row: parameters in dB, both bounds, the gap, and the Gaussian
/// secret-message rate. Lower-bound entries are absent where P < 1.
#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub p_db: f64,
    pub q_db: f64,
    pub delta_db: f64,
    pub r_lower: Option<f64>,
    pub r_upper: f64,
    pub gap: Option<f64>,
    pub r_secret_message: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Evaluates every grid point independently; domain errors (P < 1) surface
/// per-row without aborting the sweep. Rows keep the input order.
pub fn gap_sweep(points: &[GaussianParams]) -> Result<Vec<GapRow>> {
    use rayon::prelude::*;
    points
        .par_iter()
        .map(|gp| {
            check_nonneg(gp.p, gp.q, gp.delta)?;
            let r_upper = upper_bound(gp.p, gp.q, gp.delta)?;
            let r_secret_message = secret_message_rate_gaussian(gp.p, gp.q, gp.delta)?;
            let (r_lower, gap, note) = match lower_bound(gp.p, gp.q, gp.delta) {
                Ok(lo) => (Some(lo), Some(r_upper - lo), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            Ok(GapRow {
                p_db: linear_to_db(gp.p),
                q_db: linear_to_db(gp.q),
                delta_db: linear_to_db(gp.delta),
                r_lower,
                r_upper,
                gap,
                r_secret_message,
                note,
            })
        })
        .collect()
}

/// Monte Carlo estimate of the same mutual informations by sampling the
/// jointly Gaussian vector; used as an independent oracle in tests.
pub fn mi_terms_monte_carlo(
    p: f64,
    q: f64,
    delta: f64,
    rho: f64,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<MiTermsEstimate> {
    check_nonneg(p, q, delta)?;
    if !(rho.abs() < 1.0) {
        return Err(Error::domain("|ρ| < 1 required"));
    }
    use rand::Rng;
    let mut rng = crate::rng::stream_rng(seed, 0xbeef);
    let mut gauss = move || -> (f64, f64) {
        // Box–Muller
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        (r * t.cos(), r * t.sin())
    };

    // accumulate covariance of (U, S, Yr, Ye)
    let mut sums = [0.0f64; 4];
    let mut prods = [[0.0f64; 4]; 4];
    for _ in 0..samples {
        let (g1, g2) = gauss();
        let (g3, g4) = gauss();
        let s = q.sqrt() * g1;
        // X = ρ√(P/Q)·S + √(P(1−ρ²))·G, independent G
        let x = if q > 0.0 {
            rho * (p / q).sqrt() * s + (p * (1.0 - rho * rho)).sqrt() * g2
        } else {
            p.sqrt() * g2
        };
        let zr = g3;
        let ze = (1.0 + delta).sqrt() * g4;
        let v = [x + alpha * s, s, x + s + zr, x + s + ze];
        for i in 0..4 {
            sums[i] += v[i];
            for j in 0..4 {
                prods[i][j] += v[i] * v[j];
            }
        }
    }
    let n = samples as f64;
    let mut cov = [[0.0f64; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            cov[i][j] = prods[i][j] / n - (sums[i] / n) * (sums[j] / n);
        }
    }
    let mi = |i: usize, j: usize| -> f64 {
        if cov[i][i] <= 0.0 || cov[j][j] <= 0.0 {
            return 0.0;
        }
        let r2 = (cov[i][j] * cov[i][j] / (cov[i][i] * cov[j][j])).min(1.0 - 1e-15);
        -half_log2(1.0 - r2)
    };
    // standard error of an MI estimate through the correlation coefficient:
    // Var(ρ̂) ≈ (1−ρ²)²/n, and dI/dρ = ρ/((1−ρ²) ln 2).
    let se = |i: usize, j: usize| -> f64 {
        let r2 = (cov[i][j] * cov[i][j] / (cov[i][i] * cov[j][j])).min(1.0 - 1e-15);
        let r = r2.sqrt();
        (r / ((1.0 - r2) * LN_2)) * (1.0 - r2) / n.sqrt()
    };
    Ok(MiTermsEstimate {
        i_u_s: mi(0, 1),
        i_u_yr: mi(0, 2),
        i_u_ye: mi(0, 3),
        se_i_u_s: se(0, 1),
        se_i_u_yr: se(0, 2),
        se_i_u_ye: se(0, 3),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MiTermsEstimate {
    pub i_u_s: f64,
    pub i_u_yr: f64,
    pub i_u_ye: f64,
    pub se_i_u_s: f64,
    pub se_i_u_yr: f64,
    pub se_i_u_ye: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_spot_values() {
        assert!((solve_rho(1.0, 2.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((solve_rho(1.0, 0.0).unwrap() - 0.7071067811865476).abs() < 1e-12);
        assert!(matches!(solve_rho(0.5, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_form_spot_values() {
        assert!((lower_bound(1.0, 2.0, 1.0).unwrap() - 0.3777397030372325).abs() < 1e-12);
        assert!((upper_bound(1.0, 2.0, 1.0).unwrap() - 0.4014154152740511).abs() < 1e-12);
        assert!((upper_bound(3.0, 1.0, 1.0).unwrap() - 0.4194456919430254).abs() < 1e-12);
        assert_eq!(lower_bound(1.0, 2.0, 0.0).unwrap(), 0.0);
        assert_eq!(upper_bound(5.0, 3.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn lower_bound_matches_mi_assembly() {
        for &(p, q, delta) in &[(1.0, 2.0, 1.0), (2.0, 2.0, 10.0), (10.0, 0.5, 3.0)] {
            let rho = solve_rho(p, q).unwrap();
            let t = gaussian_mi_terms(p, q, delta, rho, 1.0).unwrap();
            let assembled = t.i_u_yr - t.i_u_ye;
            let closed = lower_bound(p, q, delta).unwrap();
            assert!(
                (assembled - closed).abs() < 1e-9,
                "P={p} Q={q} Δ={delta}: {assembled} vs {closed}"
            );
            // equivalently through the conditional entropies
            let via_h = t.h_u_given_ye - t.h_u_given_yr;
            assert!((via_h - closed).abs() < 1e-9);
        }
    }

    #[test]
    fn alpha_zero_rho_zero_decouples_state() {
        let t = gaussian_mi_terms(2.0, 3.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(t.i_u_s, 0.0);
    }

    #[test]
    fn feasibility_slack_sign_records_dropped_term() {
        // Q > 0: the pinned ρ slightly violates the exact constraint.
        for &(p, q) in &[(1.0, 2.0), (2.0, 2.0), (10.0, 10.0), (1.5, 0.3)] {
            let rep = lower_bound_report(p, q, 1.0).unwrap();
            assert!(
                rep.constraint_slack_bits < 0.0 && rep.constraint_slack_bits > -0.1,
                "P={p} Q={q}: slack = {}",
                rep.constraint_slack_bits
            );
        }
        // Q = 0: U = X and the state is absent, slack is I(U;Y_r) ≥ 0.
        let rep = lower_bound_report(1.0, 0.0, 1.0).unwrap();
        assert!(rep.constraint_slack_bits >= 0.0);
    }

    #[test]
    fn universal_gap_holds_on_coarse_grid() {
        for &p in &[1.0, 3.0, 10.0, 100.0] {
            for &q in &[0.0, 1.0, 10.0] {
                for &delta in &[0.1, 1.0, 10.0] {
                    let gap = upper_bound(p, q, delta).unwrap() - lower_bound(p, q, delta).unwrap();
                    assert!(
                        (-1e-9..=0.5 + 1e-9).contains(&gap),
                        "gap({p},{q},{delta}) = {gap}"
                    );
                }
            }
        }
    }

    #[test]
    fn bounds_monotone_in_delta() {
        let mut prev_lo = 0.0;
        let mut prev_up = 0.0;
        for k in 0..40 {
            let delta = 0.1 * k as f64;
            let lo = lower_bound(2.0, 3.0, delta).unwrap();
            let up = upper_bound(2.0, 3.0, delta).unwrap();
            assert!(lo >= prev_lo - 1e-12);
            assert!(up >= prev_up - 1e-12);
            prev_lo = lo;
            prev_up = up;
        }
    }

    #[test]
    fn secret_message_degraded_wiretap_oracle() {
        // Q = 0 reduces to the degraded Gaussian wiretap channel
        for &(p, delta) in &[(2.0, 1.0), (5.0, 3.0)] {
            let got = secret_message_rate_gaussian(p, 0.0, delta).unwrap();
            let want = 0.5 * ((1.0 + p) * (1.0 + delta) / (1.0 + p + delta)).log2();
            assert!((got - want).abs() < 1e-3, "P={p} Δ={delta}: {got} vs {want}");
        }
        // Δ = 0: eavesdropper statistically identical, nothing to gain
        assert!(secret_message_rate_gaussian(2.0, 2.0, 0.0).unwrap().abs() < 1e-9);
        // dominance against the key-rate lower bound
        let sm = secret_message_rate_gaussian(2.0, 2.0, 1.0).unwrap();
        let lo = lower_bound(2.0, 2.0, 1.0).unwrap();
        assert!(sm <= lo + 1e-6);
    }

    #[test]
    fn sweep_surfaces_domain_errors_per_row() {
        let pts = vec![
            GaussianParams::new(0.5, 1.0, 1.0),
            GaussianParams::new(2.0, 1.0, 1.0),
        ];
        let rows = gap_sweep(&pts).unwrap();
        assert!(rows[0].r_lower.is_none() && rows[0].note.is_some());
        assert!(rows[1].r_lower.is_some());
        assert!(rows[1].gap.unwrap() >= -1e-9);
    }
}

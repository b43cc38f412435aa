//! Closed-form and enumerated optimal efficiencies.
//!
//! Everything here is a pure function of its arguments. Bandwidths share the
//! unit of `StreamParams::r`; efficiencies are dimensionless.

use serde::Serialize;
use thiserror::Error;

use crate::model::StreamParams;
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("seeders do not share a common rate u/c")]
    NotHomogeneous,
    #[error("set of {size} seeders exceeds the guaranteed size {bound}")]
    SetTooLarge { size: usize, bound: u64 },
    #[error("negative radicand {0}: upload too small for the general overhead model")]
    NegativeRadicand(f64),
}

/// Best efficiency of a seeder set in a perfect system:
/// `(1 − 1/N_L) · min(1, N_L·r/U_X)`.
pub fn eta_perfect_set(n_leechers: u64, total_upload: f64, r: f64) -> f64 {
    let n = n_leechers as f64;
    (1.0 - 1.0 / n) * (n * r / total_upload).min(1.0)
}

/// Best efficiency of one seeder limited to `c` connections:
/// `(1 − 1/c) · min(1, r·c/u)`.
pub fn eta_fanout_single(u: f64, c: u64, r: f64) -> f64 {
    let c = c as f64;
    (1.0 - 1.0 / c) * (r * c / u).min(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneousSet {
    pub eta: f64,
    /// Common per-connection rate `e = u_s/c_s`.
    pub rate: f64,
    /// Largest set size for which the efficiency is guaranteed;
    /// `None` when every seeder has a single connection (chains never run out of leaves).
    pub max_set_size: Option<u64>,
}

/// Size bound `⌊(N_L−1)/(c_max−1)⌋ · ⌊r/e⌋` for trees of rate `e`.
pub(crate) fn tree_set_bound(n_leechers: u64, max_children: u64, trees: u64) -> Option<u64> {
    if trees == 0 {
        Some(0)
    } else if max_children <= 1 {
        None
    } else {
        Some((n_leechers - 1) / (max_children - 1) * trees)
    }
}

/// Efficiency of a proportionally homogeneous set (`u_s = e·c_s` for all s)
/// under limited fanout: the upload-weighted mean of `1 − 1/c_s`, valid up to
/// the returned set size.
pub fn eta_fanout_homogeneous_set(
    seeders: &[(f64, u64)],
    n_leechers: u64,
    r: f64,
) -> Result<HomogeneousSet, AnalyticError> {
    let (u0, c0) = *seeders.first().ok_or_else(|| AnalyticError::InvalidInput("empty seeder set".into()))?;
    if seeders.iter().any(|&(u, c)| c == 0 || u.is_nan() || u <= 0.0) {
        return Err(AnalyticError::InvalidInput("uploads and fanouts must be positive".into()));
    }
    let rate = u0 / c0 as f64;
    if !seeders.iter().all(|&(u, c)| tol::approx_eq(u / c as f64, rate)) {
        return Err(AnalyticError::NotHomogeneous);
    }
    let trees = tol::floor(r / rate) as u64;
    let c_max = seeders.iter().map(|&(_, c)| c).max().unwrap_or(1);
    let max_set_size = tree_set_bound(n_leechers, c_max, trees);
    if let Some(bound) = max_set_size {
        if seeders.len() as u64 > bound {
            return Err(AnalyticError::SetTooLarge { size: seeders.len(), bound });
        }
    }
    let total: f64 = seeders.iter().map(|&(u, _)| u).sum();
    let weighted: f64 = seeders.iter().map(|&(u, c)| (1.0 - 1.0 / c as f64) * u).sum();
    Ok(HomogeneousSet { eta: weighted / total, rate, max_set_size })
}

/// Best efficiency with upload `u` and exactly `c` equal-rate connections:
/// `min((c−1)r/u, ((1 − 1/c) − (b/u)(c−1))/(1+a))`, floored at 0.
pub fn eta_given_u_c(params: &StreamParams, u: f64, c: u64) -> f64 {
    if c <= 1 || u <= 0.0 {
        return 0.0;
    }
    let cf = c as f64;
    let bandwidth_bound = ((1.0 - 1.0 / cf) - params.b / u * (cf - 1.0)) / (1.0 + params.a);
    let fanout_bound = (cf - 1.0) * params.r / u;
    fanout_bound.min(bandwidth_bound).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// `u ≤ 2b`: the seeder cannot help.
    Zero,
    /// `2b < u ≤ R²/b`: fanout near `√(u/b)`.
    Medium,
    /// `u > R²/b`: fanout near `u/R`.
    High,
    /// `u ≥ N_L·R`: the seeder alone can serve every leecher.
    Overprovisioned,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverheadEfficiency {
    pub eta: f64,
    pub c_opt: u64,
    /// Goodput per connection at the optimum.
    pub input_rate: f64,
    pub regime: Regime,
    /// Guaranteed gap to the continuous optimum.
    pub epsilon_bound: f64,
    /// Set when the continuous optimum asks for more than `N_L` connections.
    pub fanout_capped: bool,
}

/// Largest fanout worth considering: `min(N_L, ⌊u/b⌋)`, or `N_L` when `b = 0`.
pub fn max_fanout(params: &StreamParams, u: f64, n_leechers: u64) -> u64 {
    if params.b > 0.0 {
        let by_bandwidth = tol::floor(u / params.b).max(0.0);
        if by_bandwidth >= n_leechers as f64 {
            n_leechers
        } else {
            by_bandwidth as u64
        }
    } else {
        n_leechers
    }
}

/// Real-valued fanout maximizing `η(u, c)`: `√(u/b)` up to `u = R²/b`, `u/R`
/// beyond. Infinite when `b = 0`.
pub fn continuous_fanout(params: &StreamParams, u: f64) -> f64 {
    let big_r = params.full_stream_cost();
    if params.b == 0.0 {
        f64::INFINITY
    } else if u <= big_r * big_r / params.b {
        (u / params.b).sqrt()
    } else {
        u / big_r
    }
}

/// Optimal single-seeder efficiency under linear overhead, maximized over
/// integer fanouts (ties go to the smaller fanout).
pub fn eta_overhead_exact(params: &StreamParams, u: f64, n_leechers: u64) -> OverheadEfficiency {
    let big_r = params.full_stream_cost();
    let n = n_leechers.max(1);
    if tol::leq(n as f64 * big_r, u) {
        return OverheadEfficiency {
            eta: (n as f64 - 1.0) * params.r / u,
            c_opt: n,
            input_rate: params.r,
            regime: Regime::Overprovisioned,
            epsilon_bound: 0.0,
            fanout_capped: false,
        };
    }
    if u <= 2.0 * params.b || u <= 0.0 {
        return OverheadEfficiency {
            eta: 0.0,
            c_opt: 0,
            input_rate: 0.0,
            regime: Regime::Zero,
            epsilon_bound: 0.0,
            fanout_capped: false,
        };
    }
    let cap = max_fanout(params, u, n).max(1);
    let target = continuous_fanout(params, u);
    // η(u, ·) is concave, so the integer optimum sits next to the clipped
    // continuous one.
    let centre = target.clamp(1.0, cap as f64);
    let lo = (centre.floor() as u64).saturating_sub(1).max(1);
    let hi = (centre.ceil() as u64).saturating_add(1).min(cap);
    let (mut best_c, mut best) = (lo, eta_given_u_c(params, u, lo));
    for c in lo + 1..=hi {
        let eta = eta_given_u_c(params, u, c);
        if eta > best {
            (best_c, best) = (c, eta);
        }
    }
    let regime = if params.b > 0.0 && u > big_r * big_r / params.b { Regime::High } else { Regime::Medium };
    let input_rate = if best > 0.0 { params.r.min((u / best_c as f64 - params.b) / (1.0 + params.a)) } else { 0.0 };
    OverheadEfficiency {
        eta: best,
        c_opt: best_c,
        input_rate,
        regime,
        epsilon_bound: epsilon_bound(params, u),
        fanout_capped: target > cap as f64,
    }
}

/// Continuous approximation of the overhead-model optimum:
/// `(1 − √(b/u))²/(1+a)` for `2b < u ≤ R²/b`, `η_max − r/u` beyond, 0 below `2b`.
pub fn eta_overhead_continuous(params: &StreamParams, u: f64) -> f64 {
    if u <= 2.0 * params.b || u <= 0.0 {
        return 0.0;
    }
    let big_r = params.full_stream_cost();
    if params.b == 0.0 || u <= big_r * big_r / params.b {
        (1.0 - (params.b / u).sqrt()).powi(2) / (1.0 + params.a)
    } else {
        params.eta_max() - params.r / u
    }
}

/// Bound on the gap between the integer-fanout optimum and the continuous one.
pub fn epsilon_bound(params: &StreamParams, u: f64) -> f64 {
    let b = params.b;
    if b == 0.0 || u <= 2.0 * b {
        return 0.0;
    }
    let big_r = params.full_stream_cost();
    if u <= big_r * big_r / b {
        (b / u).powf(1.5) / (1.0 + params.a)
    } else {
        high_regime_bound(params, u)
    }
}

fn high_regime_bound(params: &StreamParams, u: f64) -> f64 {
    let big_r = params.full_stream_cost();
    (params.b / u).min((params.b / big_r).powi(2)) / (1.0 + params.a)
}

/// Best efficiency of a seeder forced to take the whole stream as input:
/// `max(0, r(⌊u/R⌋−1)/u, (1 − (b/u)⌈u/R⌉)/(1+a) − r/u)`.
pub fn eta_input_r(params: &StreamParams, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let big_r = params.full_stream_cost();
    let copies = tol::floor(u / big_r);
    let whole = params.r * (copies - 1.0) / u;
    let split = (1.0 - params.b / u * tol::ceil(u / big_r)) / (1.0 + params.a) - params.r / u;
    whole.max(split).max(0.0)
}

/// Continuous optimal fanout when receivers also pay `a_r·e + b_r` per
/// incoming connection. Reduces to `√(u/b)` when `a_r = b_r = 0`.
pub fn c_opt_general(params: &StreamParams, u: f64) -> Result<f64, AnalyticError> {
    let StreamParams { a, b, a_r, b_r, .. } = *params;
    if b <= 0.0 {
        return Err(AnalyticError::InvalidInput("the general optimum needs b > 0".into()));
    }
    let radicand = b * (a + a_r + 1.0) * (u - b_r - a * b_r + a_r * b + a * u);
    if radicand < 0.0 {
        return Err(AnalyticError::NegativeRadicand(radicand));
    }
    Ok((-a_r * b + radicand.sqrt()) / (b * (1.0 + a)))
}

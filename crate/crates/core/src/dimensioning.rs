//! System-level capacity questions: does the bandwidth add up, and how much
//! seeder upload makes a system scalable.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytic::{
    c_opt_general, continuous_fanout, epsilon_bound, eta_input_r, eta_overhead_continuous, eta_overhead_exact,
};
use crate::builders::{choose_level, default_k_max};
use crate::model::StreamParams;

#[derive(Debug, Error)]
pub enum DimensioningError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no upload below {cap} makes the system scalable")]
    NoSolution { cap: f64 },
    #[error("unknown sweep generator {0:?}")]
    UnknownGenerator(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Conservation {
    pub solvable: bool,
    /// `η(L)·α_L + η(S)·β·α_S + η(C)·N_C/N_L − 1`.
    pub margin: f64,
}

/// Efficiencies of leechers, seeders and servers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Efficiencies {
    pub leechers: f64,
    pub seeders: f64,
    pub servers: f64,
}

impl Efficiencies {
    pub const PERFECT: Efficiencies = Efficiencies { leechers: 1.0, seeders: 1.0, servers: 1.0 };
}

/// Bandwidth conservation: the system can only be served if the weighted
/// upload, in units of `r` per leecher, reaches 1.
pub fn conservation_check(
    alpha_l: f64,
    alpha_s: f64,
    beta: f64,
    servers_per_leecher: f64,
    etas: Efficiencies,
) -> Conservation {
    let margin = etas.leechers * alpha_l + etas.seeders * beta * alpha_s + etas.servers * servers_per_leecher - 1.0;
    Conservation { solvable: margin >= 0.0, margin }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalabilityQuery {
    pub params: StreamParams,
    /// Seeders per leecher.
    pub beta: f64,
    /// Leecher efficiency; `η_max` when unset.
    pub eta_leecher: Option<f64>,
    /// Leechers available to each seeder; unbounded when unset.
    pub n_leechers: Option<u64>,
    /// Largest upload searched.
    pub cap: f64,
}

impl ScalabilityQuery {
    pub fn new(params: StreamParams, beta: f64) -> Self {
        ScalabilityQuery { params, beta, eta_leecher: None, n_leechers: None, cap: 1e6 }
    }
}

/// Margin of `β·η_OPT(u) ≥ r/u − η(L)`.
fn scalability_gap(q: &ScalabilityQuery, eta_l: f64, u: f64) -> f64 {
    let n = q.n_leechers.unwrap_or(u64::MAX);
    q.beta * eta_overhead_exact(&q.params, u, n).eta - (q.params.r / u - eta_l)
}

const GRID_POINTS: usize = 4000;

/// Smallest common upload `u` for which every peer's share makes the system
/// scalable, treating seeder sets as aggregating without loss.
///
/// ```
/// use seedplan::dimensioning::{required_bandwidth, ScalabilityQuery};
/// use seedplan::StreamParams;
///
/// let seedless = ScalabilityQuery::new(StreamParams::small_overhead(), 0.0);
/// assert_eq!(required_bandwidth(&seedless).unwrap(), 111.7);
/// ```
pub fn required_bandwidth(q: &ScalabilityQuery) -> Result<f64, DimensioningError> {
    q.params.check().map_err(|e| DimensioningError::InvalidInput(e.to_string()))?;
    if !q.beta.is_finite() || q.beta < 0.0 {
        return Err(DimensioningError::InvalidInput(format!("beta must be >= 0, got {}", q.beta)));
    }
    let eta_max = q.params.eta_max();
    let eta_l = q.eta_leecher.unwrap_or(eta_max);
    if !(0.0..=eta_max + 1e-12).contains(&eta_l) {
        return Err(DimensioningError::InvalidInput(format!("leecher efficiency {eta_l} outside [0, {eta_max}]")));
    }
    if q.beta == 0.0 {
        if q.eta_leecher.is_none() {
            return Ok(q.params.full_stream_cost());
        }
        return if eta_l > 0.0 && q.params.r / eta_l <= q.cap {
            Ok(q.params.r / eta_l)
        } else {
            Err(DimensioningError::NoSolution { cap: q.cap })
        };
    }

    let hi = if eta_l > 0.0 { (q.params.r / eta_l).min(q.cap) } else { q.cap };
    let lo = (2.0 * q.params.b).max(hi * 1e-9);
    if scalability_gap(q, eta_l, hi) < 0.0 {
        return Err(DimensioningError::NoSolution { cap: q.cap });
    }
    // first grid point where the inequality holds, then bisection below it
    let ratio = (hi / lo).powf(1.0 / GRID_POINTS as f64);
    let mut below = lo;
    let mut above = hi;
    let mut x = lo;
    for _ in 0..=GRID_POINTS {
        if scalability_gap(q, eta_l, x) >= 0.0 {
            above = x;
            break;
        }
        below = x;
        x = (x * ratio).min(hi);
    }
    while above - below > 1e-9 * above {
        let mid = 0.5 * (below + above);
        if scalability_gap(q, eta_l, mid) >= 0.0 {
            above = mid;
        } else {
            below = mid;
        }
    }
    Ok(above)
}

/// Curve generators for [`sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    /// `u, eta_exact, eta_continuous, epsilon_bound`
    EtaVsU,
    /// `u, eta_exact_rel, eta_continuous_rel`, relative to `η_max`
    EtaRelVsU,
    /// `u, eta_opt_rel, eta_input_r_rel`
    InputRVsU,
    /// `u, eta_bin_rel, eta_opt_rel, level`
    BinVsOpt,
    /// `beta, u_required, u_required_perfect`
    UVsBeta,
    /// `u, c_opt_sender, c_opt_general`, receiver overhead equal to sender overhead
    GeneralVsSender,
}

impl Generator {
    pub const ALL: [Generator; 6] = [
        Generator::EtaVsU,
        Generator::EtaRelVsU,
        Generator::InputRVsU,
        Generator::BinVsOpt,
        Generator::UVsBeta,
        Generator::GeneralVsSender,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::EtaVsU => "eta_vs_u",
            Generator::EtaRelVsU => "eta_rel_vs_u",
            Generator::InputRVsU => "input_r_vs_u",
            Generator::BinVsOpt => "bin_vs_opt",
            Generator::UVsBeta => "u_vs_beta",
            Generator::GeneralVsSender => "general_vs_sender",
        }
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            Generator::EtaVsU => &["u", "eta_exact", "eta_continuous", "epsilon_bound"],
            Generator::EtaRelVsU => &["u", "eta_exact_rel", "eta_continuous_rel"],
            Generator::InputRVsU => &["u", "eta_opt_rel", "eta_input_r_rel"],
            Generator::BinVsOpt => &["u", "eta_bin_rel", "eta_opt_rel", "level"],
            Generator::UVsBeta => &["beta", "u_required", "u_required_perfect"],
            Generator::GeneralVsSender => &["u", "c_opt_sender", "c_opt_general"],
        }
    }
}

impl std::str::FromStr for Generator {
    type Err = DimensioningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| DimensioningError::UnknownGenerator(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSpec {
    pub generator: Generator,
    pub params: StreamParams,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Leechers available per seeder.
    pub n_leechers: u64,
    /// Deepest dichotomic level; defaults from the parameters.
    pub k_max: Option<u32>,
}

impl Serialize for Generator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// A sweep result: one row per x value, columns as in [`Generator::header`].
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DimensioningError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn row(spec: &SweepSpec, x: f64) -> Result<Vec<f64>, DimensioningError> {
    let p = &spec.params;
    let eta_max = p.eta_max();
    let n = spec.n_leechers;
    Ok(match spec.generator {
        Generator::EtaVsU => {
            vec![x, eta_overhead_exact(p, x, n).eta, eta_overhead_continuous(p, x), epsilon_bound(p, x)]
        }
        Generator::EtaRelVsU => {
            vec![x, eta_overhead_exact(p, x, n).eta / eta_max, eta_overhead_continuous(p, x) / eta_max]
        }
        Generator::InputRVsU => vec![x, eta_overhead_exact(p, x, n).eta / eta_max, eta_input_r(p, x) / eta_max],
        Generator::BinVsOpt => {
            let k_max = spec
                .k_max
                .or_else(|| default_k_max(p))
                .ok_or_else(|| DimensioningError::InvalidInput("k_max must be given when b = 0".into()))?;
            let bin = choose_level(p, x, k_max);
            let level = bin.level.map_or(-1.0, f64::from);
            vec![x, bin.eta / eta_max, eta_overhead_exact(p, x, n).eta / eta_max, level]
        }
        Generator::UVsBeta => {
            let mut q = ScalabilityQuery::new(*p, x);
            q.n_leechers = Some(n);
            let overhead = required_bandwidth(&q)?;
            q.params = StreamParams::overhead_free(p.r);
            vec![x, overhead, required_bandwidth(&q)?]
        }
        Generator::GeneralVsSender => {
            let general = StreamParams::with_receiver(p.r, p.a, p.b, p.a, p.b)
                .map_err(|e| DimensioningError::InvalidInput(e.to_string()))?;
            let c_general = c_opt_general(&general, x).unwrap_or(f64::NAN);
            vec![x, continuous_fanout(p, x), c_general]
        }
    })
}

/// Evaluates a generator at `x_i = lo + i·step` for every `x_i ≤ hi`, in
/// parallel; row order and values do not depend on the thread count.
pub fn sweep(spec: &SweepSpec) -> Result<Table, DimensioningError> {
    if !spec.step.is_finite() || spec.step <= 0.0 {
        return Err(DimensioningError::InvalidInput(format!("step must be positive, got {}", spec.step)));
    }
    if !spec.lo.is_finite() || !spec.hi.is_finite() {
        return Err(DimensioningError::InvalidInput("range bounds must be finite".into()));
    }
    let count = if spec.hi < spec.lo {
        0
    } else {
        ((spec.hi - spec.lo) / spec.step * (1.0 + 1e-12) + 1e-9).floor() as usize + 1
    };
    let rows =
        (0..count).into_par_iter().map(|i| row(spec, spec.lo + i as f64 * spec.step)).collect::<Result<Vec<_>, _>>()?;
    Ok(Table { header: spec.generator.header().to_vec(), rows })
}

//! Floating comparison policy shared by every module.
//!
//! Rates and bandwidths are reported as `f64`. Budget checks and integer
//! roundings (`⌊u/b⌋`, `⌊u/R⌋`, ...) treat values within `TOL` (relative,
//! with an absolute floor of `TOL`) as equal, so that `223.4 / 111.7` floors
//! to 2 instead of 1.

pub const TOL: f64 = 1e-9;

fn slack(x: f64) -> f64 {
    TOL * x.abs().max(1.0)
}

/// `a ≤ b` up to the tolerance.
pub fn leq(a: f64, b: f64) -> bool {
    a <= b + slack(b)
}

pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= slack(a.abs().max(b.abs()))
}

/// Floor that snaps values sitting just below an integer.
pub fn floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= slack(x) {
        r
    } else {
        x.floor()
    }
}

/// Ceiling that snaps values sitting just above an integer.
pub fn ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= slack(x) {
        r
    } else {
        x.ceil()
    }
}

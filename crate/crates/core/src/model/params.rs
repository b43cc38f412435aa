use serde::{Deserialize, Serialize};

use super::ModelError;

/// Stream rate and linear connection overhead.
///
/// Sending goodput `e` over one connection costs `(1+a)·e + b` of the
/// sender's upload. When the receiver-side terms are non-zero, the receiver
/// additionally pays `a_r·e + b_r` for every incoming connection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamParams {
    pub r: f64,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub a_r: f64,
    #[serde(default)]
    pub b_r: f64,
}

impl StreamParams {
    pub fn new(r: f64, a: f64, b: f64) -> Result<Self, ModelError> {
        Self::with_receiver(r, a, b, 0.0, 0.0)
    }

    pub fn with_receiver(r: f64, a: f64, b: f64, a_r: f64, b_r: f64) -> Result<Self, ModelError> {
        let p = StreamParams { r, a, b, a_r, b_r };
        p.check()?;
        Ok(p)
    }

    /// `r = 100`, `a = 0.1`, `b = 1.7` (KBytes/s).
    pub fn small_overhead() -> Self {
        StreamParams { r: 100.0, a: 0.1, b: 1.7, a_r: 0.0, b_r: 0.0 }
    }

    /// `r = 100`, `a = 0.1`, `b = 25` (KBytes/s).
    pub fn large_overhead() -> Self {
        StreamParams { r: 100.0, a: 0.1, b: 25.0, a_r: 0.0, b_r: 0.0 }
    }

    pub fn overhead_free(r: f64) -> Self {
        StreamParams { r, a: 0.0, b: 0.0, a_r: 0.0, b_r: 0.0 }
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let finite = [self.r, self.a, self.b, self.a_r, self.b_r].iter().all(|x| x.is_finite());
        if !finite || self.r <= 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "stream rate must be positive and finite, got r={}",
                self.r
            )));
        }
        for (name, v) in [("a", self.a), ("b", self.b), ("a_r", self.a_r), ("b_r", self.b_r)] {
            if v < 0.0 {
                return Err(ModelError::InvalidParams(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `R = (1+a)·r + b`, the cost of one full-stream connection.
    pub fn full_stream_cost(&self) -> f64 {
        // r + a·r rounds better than (1+a)·r: 100 + 0.1·100 is exactly 110.
        self.r + self.a * self.r + self.b
    }

    /// `η_max = r/R`.
    pub fn eta_max(&self) -> f64 {
        self.r / self.full_stream_cost()
    }

    pub fn has_receiver_overhead(&self) -> bool {
        self.a_r > 0.0 || self.b_r > 0.0
    }

    pub fn is_overhead_free(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }
}

/// One seeder: its upload and, in the limited-fanout model, its connection cap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeederSpec {
    pub upload: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fanout_cap: Option<u32>,
}

impl SeederSpec {
    pub fn new(upload: f64) -> Self {
        SeederSpec { upload, fanout_cap: None }
    }

    pub fn with_fanout(upload: f64, cap: u32) -> Self {
        SeederSpec { upload, fanout_cap: Some(cap) }
    }
}

/// Servers, leechers and seeders of one system.
///
/// Server bandwidth is expressed as a number `N_C` of stream copies: `N_C·R`
/// under the overhead model, `N_C·r` otherwise. Leechers are pure sinks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub server_capacity: f64,
    pub n_leechers: u32,
    pub seeders: Vec<SeederSpec>,
}

impl Population {
    pub fn new(server_capacity: f64, n_leechers: u32, seeders: Vec<SeederSpec>) -> Result<Self, ModelError> {
        let p = Population { server_capacity, n_leechers, seeders };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.n_leechers < 1 {
            return Err(ModelError::InvalidPopulation("at least one leecher is required".into()));
        }
        if !self.server_capacity.is_finite() || self.server_capacity < 1.0 {
            return Err(ModelError::InvalidPopulation(format!(
                "server capacity must be at least one stream copy, got {}",
                self.server_capacity
            )));
        }
        for (i, s) in self.seeders.iter().enumerate() {
            if !s.upload.is_finite() || s.upload < 0.0 {
                return Err(ModelError::InvalidPopulation(format!("S{i}: upload must be >= 0")));
            }
            if let Some(c) = s.fanout_cap {
                if c < 1 || c > self.n_leechers {
                    return Err(ModelError::InvalidPopulation(format!(
                        "S{i}: fanout cap {c} outside [1, {}]",
                        self.n_leechers
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_seeders(&self) -> u32 {
        self.seeders.len() as u32
    }

    pub fn all_seeders(&self) -> Vec<u32> {
        (0..self.n_seeders()).collect()
    }

    pub fn upload(&self, seeder: u32) -> f64 {
        self.seeders[seeder as usize].upload
    }

    pub fn total_upload(&self, subset: &[u32]) -> f64 {
        subset.iter().map(|&s| self.upload(s)).sum()
    }

    /// Checks that every id is a known seeder and appears once.
    pub fn check_subset(&self, subset: &[u32]) -> Result<(), ModelError> {
        let mut seen = vec![false; self.seeders.len()];
        for &s in subset {
            let slot = seen.get_mut(s as usize).ok_or_else(|| ModelError::UnknownNode(format!("S{s}")))?;
            if *slot {
                return Err(ModelError::InvalidPopulation(format!("S{s} listed twice in subset")));
            }
            *slot = true;
        }
        Ok(())
    }
}

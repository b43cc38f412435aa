use serde::{Deserialize, Serialize};

use super::{ModelError, Population, SeederSpec, StreamParams};

/// Scenario file contents.
///
/// ```json
/// {"stream": {"r": 100, "a": 0.1, "b": 1.7},
///  "servers": {"n_c": 4},
///  "leechers": {"count": 3},
///  "seeders": [{"upload": 150, "fanout": 2}, {"upload": 100, "fanout": 3, "count": 1}]}
/// ```
///
/// Missing stream fields default to `r = 100`, `a = 0.1`, `b = 1.7`, no
/// receiver overhead. A missing `servers` block gives the servers one copy per
/// leecher. Each seeder entry is repeated `count` times (default 1); ids
/// `S0, S1, ...` follow file order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub stream: StreamBlock,
    #[serde(default)]
    pub servers: Option<ServerBlock>,
    pub leechers: LeecherBlock,
    #[serde(default)]
    pub seeders: Vec<SeederBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamBlock {
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub a_r: f64,
    #[serde(default)]
    pub b_r: f64,
}

fn default_r() -> f64 {
    100.0
}
fn default_a() -> f64 {
    0.1
}
fn default_b() -> f64 {
    1.7
}

impl Default for StreamBlock {
    fn default() -> Self {
        StreamBlock { r: default_r(), a: default_a(), b: default_b(), a_r: 0.0, b_r: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerBlock {
    pub n_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeecherBlock {
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeederBlock {
    pub upload: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fanout: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn params(&self) -> Result<StreamParams, ModelError> {
        let s = &self.stream;
        StreamParams::with_receiver(s.r, s.a, s.b, s.a_r, s.b_r)
    }

    pub fn population(&self) -> Result<Population, ModelError> {
        let n_c = self.servers.as_ref().map_or(f64::from(self.leechers.count), |s| s.n_c);
        let seeders = self
            .seeders
            .iter()
            .flat_map(|b| {
                let spec = SeederSpec { upload: b.upload, fanout_cap: b.fanout };
                std::iter::repeat_n(spec, b.count.unwrap_or(1) as usize)
            })
            .collect();
        Population::new(n_c, self.leechers.count, seeders)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_expands_counts() {
        let text = r#"{"stream": {"r": 6, "a": 0, "b": 0},
                       "servers": {"n_c": 3},
                       "leechers": {"count": 3},
                       "seeders": [{"upload": 9, "fanout": 2}, {"upload": 6, "fanout": 3, "count": 2}]}"#;
        let sc = Scenario::from_json(text).unwrap();
        let pop = sc.population().unwrap();
        assert_eq!(pop.n_seeders(), 3);
        assert_eq!(pop.seeders[2], SeederSpec::with_fanout(6.0, 3));
        assert_eq!(sc.params().unwrap(), StreamParams::overhead_free(6.0));
    }

    #[test]
    fn defaults() {
        let sc = Scenario::from_json(r#"{"leechers": {"count": 10}}"#).unwrap();
        assert_eq!(sc.params().unwrap(), StreamParams::small_overhead());
        assert_eq!(sc.population().unwrap().server_capacity, 10.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Scenario::from_json(r#"{"leechers": {}}"#).is_err());
        assert!(Scenario::from_json(r#"{"leechers": {"count": 1}, "bogus": 1}"#).is_err());
        let sc = Scenario::from_json(r#"{"leechers": {"count": 0}}"#).unwrap();
        assert!(sc.population().is_err());
    }
}

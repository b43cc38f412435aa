use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;
use crate::slots::SlotSet;

/// A node of the system. Ids are zero-based: `L0`, `S0`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Server,
    Leecher(u32),
    Seeder(u32),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Server => f.write_str("server"),
            NodeId::Leecher(i) => write!(f, "L{i}"),
            NodeId::Seeder(i) => write!(f, "S{i}"),
        }
    }
}

impl FromStr for NodeId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::Parse(format!("bad node id {s:?}"));
        if s == "server" || s == "C" {
            return Ok(NodeId::Server);
        }
        let (kind, idx) = s.split_at_checked(1).ok_or_else(bad)?;
        let idx: u32 = idx.parse().map_err(|_| bad())?;
        match kind {
            "L" => Ok(NodeId::Leecher(idx)),
            "S" => Ok(NodeId::Seeder(idx)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|e: ModelError| match e {
            ModelError::Parse(msg) => serde::de::Error::custom(msg),
            other => serde::de::Error::custom(other),
        })
    }
}

/// A static diffusion scheme: the stream is cut into `slot_count` equal
/// slots of goodput `r/K`, and each directed edge carries a set of slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffusionScheme {
    slot_count: u32,
    edges: BTreeMap<(NodeId, NodeId), SlotSet>,
    /// `(to, from)` for every edge.
    incoming: BTreeSet<(NodeId, NodeId)>,
}

impl DiffusionScheme {
    pub fn new(slot_count: u32) -> Self {
        assert!(slot_count > 0, "slot count must be positive");
        DiffusionScheme { slot_count, edges: BTreeMap::new(), incoming: BTreeSet::new() }
    }

    pub fn slot_count(&self) -> u32 {
        self.slot_count
    }

    pub fn slot_rate(&self, r: f64) -> f64 {
        r / f64::from(self.slot_count)
    }

    /// Adds slots to the edge `from → to`, merging with what is already there.
    pub fn send(&mut self, from: NodeId, to: NodeId, slots: &SlotSet) {
        if slots.is_empty() {
            return;
        }
        self.edges.entry((from, to)).or_default().union_with(slots);
        self.incoming.insert((to, from));
    }

    /// Removes an edge entirely and returns its slots.
    pub fn remove_edge(&mut self, from: NodeId, to: NodeId) -> Option<SlotSet> {
        self.incoming.remove(&(to, from));
        self.edges.remove(&(from, to))
    }

    pub fn edge(&self, from: NodeId, to: NodeId) -> Option<&SlotSet> {
        self.edges.get(&(from, to))
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, &SlotSet)> {
        self.edges.iter().map(|(&(f, t), s)| (f, t, s))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn out_edges(&self, node: NodeId) -> impl Iterator<Item = (NodeId, &SlotSet)> {
        self.edges.range((node, NodeId::Server)..=(node, NodeId::Seeder(u32::MAX))).map(|(&(_, t), s)| (t, s))
    }

    pub fn in_edges(&self, node: NodeId) -> impl Iterator<Item = (NodeId, &SlotSet)> {
        self.incoming
            .range((node, NodeId::Server)..=(node, NodeId::Seeder(u32::MAX)))
            .map(move |&(_, f)| (f, &self.edges[&(f, node)]))
    }

    /// Union of every slot `node` receives.
    pub fn received(&self, node: NodeId) -> SlotSet {
        let mut all = SlotSet::new();
        for (_, s) in self.in_edges(node) {
            all.union_with(s);
        }
        all
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SchemeFile::from(self)).expect("scheme serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: SchemeFile = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        file.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    from: NodeId,
    to: NodeId,
    slots: SlotSet,
}

impl Serialize for DiffusionScheme {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SchemeFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiffusionScheme {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        SchemeFile::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

/// On-disk form: `{"slot_count": K, "edges": [{"from", "to", "slots"}]}`.
#[derive(Serialize, Deserialize)]
struct SchemeFile {
    slot_count: u32,
    edges: Vec<EdgeRecord>,
}

impl From<&DiffusionScheme> for SchemeFile {
    fn from(s: &DiffusionScheme) -> Self {
        SchemeFile {
            slot_count: s.slot_count,
            edges: s.edges().map(|(from, to, slots)| EdgeRecord { from, to, slots: slots.clone() }).collect(),
        }
    }
}

impl TryFrom<SchemeFile> for DiffusionScheme {
    type Error = ModelError;

    fn try_from(f: SchemeFile) -> Result<Self, ModelError> {
        if f.slot_count == 0 {
            return Err(ModelError::Parse("slot_count must be positive".into()));
        }
        let mut s = DiffusionScheme::new(f.slot_count);
        for e in f.edges {
            if s.edge(e.from, e.to).is_some() {
                return Err(ModelError::Parse(format!("edge {} -> {} listed twice", e.from, e.to)));
            }
            s.send(e.from, e.to, &e.slots);
        }
        Ok(s)
    }
}

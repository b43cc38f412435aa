//! Sets of slot indices stored as sorted, non-adjacent half-open ranges.

use std::fmt;
use std::ops::Range;

use serde::de::{Deserialize, Deserializer};
use serde::ser::{Serialize, SerializeSeq, Serializer};

/// A set of slot indices. Builders mostly produce contiguous blocks, so the
/// range encoding keeps large slot counts cheap.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct SlotSet {
    ranges: Vec<Range<u32>>,
}

impl SlotSet {
    pub fn new() -> Self {
        SlotSet { ranges: Vec::new() }
    }

    pub fn from_range(r: Range<u32>) -> Self {
        let mut s = SlotSet::new();
        s.insert_range(r);
        s
    }

    pub fn full(slot_count: u32) -> Self {
        SlotSet::from_range(0..slot_count)
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn len(&self) -> u64 {
        self.ranges.iter().map(|r| u64::from(r.end - r.start)).sum()
    }

    pub fn ranges(&self) -> &[Range<u32>] {
        &self.ranges
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.ranges.iter().flat_map(|r| r.clone())
    }

    pub fn first(&self) -> Option<u32> {
        self.ranges.first().map(|r| r.start)
    }

    pub fn max(&self) -> Option<u32> {
        self.ranges.last().map(|r| r.end - 1)
    }

    pub fn contains(&self, slot: u32) -> bool {
        let idx = self.ranges.partition_point(|r| r.end <= slot);
        self.ranges.get(idx).is_some_and(|r| r.start <= slot)
    }

    pub fn insert(&mut self, slot: u32) {
        self.insert_range(slot..slot + 1);
    }

    pub fn insert_range(&mut self, r: Range<u32>) {
        if r.start >= r.end {
            return;
        }
        // first range that could touch `r`
        let lo = self.ranges.partition_point(|x| x.end < r.start);
        let hi = self.ranges.partition_point(|x| x.start <= r.end);
        let mut merged = r;
        if lo < hi {
            merged.start = merged.start.min(self.ranges[lo].start);
            merged.end = merged.end.max(self.ranges[hi - 1].end);
        }
        self.ranges.splice(lo..hi, std::iter::once(merged));
    }

    pub fn union_with(&mut self, other: &SlotSet) {
        for r in &other.ranges {
            self.insert_range(r.clone());
        }
    }

    pub fn intersection(&self, other: &SlotSet) -> SlotSet {
        let mut out = SlotSet::new();
        let (mut i, mut j) = (0, 0);
        while i < self.ranges.len() && j < other.ranges.len() {
            let a = &self.ranges[i];
            let b = &other.ranges[j];
            let start = a.start.max(b.start);
            let end = a.end.min(b.end);
            if start < end {
                out.ranges.push(start..end);
            }
            if a.end < b.end {
                i += 1;
            } else {
                j += 1;
            }
        }
        out
    }

    pub fn is_disjoint(&self, other: &SlotSet) -> bool {
        self.intersection(other).is_empty()
    }

    pub fn is_subset(&self, other: &SlotSet) -> bool {
        self.intersection(other).len() == self.len()
    }

    /// Slots of `self` not in `other`.
    pub fn difference(&self, other: &SlotSet) -> SlotSet {
        let mut out = SlotSet::new();
        for r in &self.ranges {
            let mut cursor = r.start;
            let first = other.ranges.partition_point(|x| x.end <= r.start);
            for o in &other.ranges[first..] {
                if o.start >= r.end {
                    break;
                }
                if o.start > cursor {
                    out.ranges.push(cursor..o.start);
                }
                cursor = cursor.max(o.end);
            }
            if cursor < r.end {
                out.ranges.push(cursor..r.end);
            }
        }
        out
    }

    pub fn complement(&self, slot_count: u32) -> SlotSet {
        SlotSet::full(slot_count).difference(self)
    }
}

impl FromIterator<u32> for SlotSet {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        let mut s = SlotSet::new();
        for x in iter {
            s.insert(x);
        }
        s
    }
}

impl fmt::Debug for SlotSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.ranges.iter()).finish()
    }
}

impl Serialize for SlotSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.len() as usize))?;
        for x in self.iter() {
            seq.serialize_element(&x)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for SlotSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Vec<u32> = Vec::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn merges_adjacent_ranges() {
        let mut s = SlotSet::new();
        s.insert_range(4..6);
        s.insert_range(0..2);
        s.insert_range(2..4);
        assert_eq!(s.ranges(), std::slice::from_ref(&(0..6)));
        assert_eq!(s.len(), 6);
        assert_eq!(s.complement(8).ranges(), std::slice::from_ref(&(6..8)));
    }

    proptest! {
        #[test]
        fn agrees_with_btreeset(a in prop::collection::vec(0u32..64, 0..40),
                                b in prop::collection::vec(0u32..64, 0..40)) {
            let sa: SlotSet = a.iter().copied().collect();
            let sb: SlotSet = b.iter().copied().collect();
            let ta: BTreeSet<u32> = a.iter().copied().collect();
            let tb: BTreeSet<u32> = b.iter().copied().collect();
            prop_assert_eq!(sa.iter().collect::<Vec<_>>(), ta.iter().copied().collect::<Vec<_>>());
            prop_assert_eq!(sa.intersection(&sb).iter().collect::<Vec<_>>(),
                            ta.intersection(&tb).copied().collect::<Vec<_>>());
            prop_assert_eq!(sa.difference(&sb).iter().collect::<Vec<_>>(),
                            ta.difference(&tb).copied().collect::<Vec<_>>());
            prop_assert_eq!(sa.is_subset(&sb), ta.is_subset(&tb));
            prop_assert_eq!(sa.is_disjoint(&sb), ta.is_disjoint(&tb));
            for x in 0..64 {
                prop_assert_eq!(sa.contains(x), ta.contains(&x));
            }
        }
    }
}

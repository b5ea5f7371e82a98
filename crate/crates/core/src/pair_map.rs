//! Serializes `(k, r) -> count` maps as `[[k, r, count], ...]`, since JSON
//! object keys must be strings.

use std::collections::BTreeMap;

use serde::ser::{SerializeSeq, Serializer};

pub fn serialize<S: Serializer>(map: &BTreeMap<(u32, u32), u64>, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(map.len()))?;
    for (&(k, r), &c) in map {
        seq.serialize_element(&(k, r, c))?;
    }
    seq.end()
}

//! Key memory and one-hot key derivation.
//!
//! The key memory holds one row per distinct key encoding (normally the
//! encoding of a sentence's word prefix). A key for any encoding is the one-hot
//! indicator of its nearest row in Euclidean distance, with ties going to the
//! lowest row index.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::codec::{normalize_text, prefix_of, squared_distance, LatentCodec, LatentVector};
use crate::error::{Error, Result};
use crate::linefmt;

/// Which encoding addresses memory: a fixed-length word prefix, or the whole segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KeyMode {
    Prefix(usize),
    Full,
}

impl KeyMode {
    pub const DEFAULT_PREFIX_WORDS: usize = 4;

    pub fn validate(self) -> Result<Self> {
        match self {
            KeyMode::Prefix(0) => Err(Error::input("prefix key mode needs at least one word")),
            m => Ok(m),
        }
    }

    /// The text whose encoding is used as the key for `text`.
    pub fn key_text(self, text: &str) -> String {
        match self {
            KeyMode::Prefix(n) => prefix_of(text, n),
            KeyMode::Full => normalize_text(text),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            KeyMode::Prefix(_) => "prefix",
            KeyMode::Full => "full",
        }
    }
}

impl Default for KeyMode {
    fn default() -> Self {
        KeyMode::Prefix(Self::DEFAULT_PREFIX_WORDS)
    }
}

impl fmt::Display for KeyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyMode::Prefix(n) => write!(f, "prefix({n})"),
            KeyMode::Full => f.write_str("full"),
        }
    }
}

impl FromStr for KeyMode {
    type Err = Error;

    /// Accepts `full`, `prefix` (four words) or `prefix(N)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "full" => return Ok(KeyMode::Full),
            "prefix" => return Ok(KeyMode::default()),
            _ => {}
        }
        s.strip_prefix("prefix(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|n| n.trim().parse::<usize>().ok())
            .map(KeyMode::Prefix)
            .ok_or_else(|| Error::input(format!("unknown key mode {s:?}")))?
            .validate()
    }
}

/// One-hot key over `len` slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KeyVector {
    len: usize,
    hot_index: usize,
}

impl KeyVector {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn hot_index(&self) -> usize {
        self.hot_index
    }

    pub fn get(&self, k: usize) -> f64 {
        if k == self.hot_index {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.get(k)).collect()
    }
}

pub fn one_hot_key(hot_index: usize, len: usize) -> Result<KeyVector> {
    if hot_index >= len {
        return Err(Error::input(format!("slot {hot_index} out of range for {len} slots")));
    }
    Ok(KeyVector { len, hot_index })
}

/// The address store: immutable after construction.
#[derive(Clone, Debug)]
pub struct KeyMemory {
    dim: usize,
    rows: Vec<LatentVector>,
    meta: Vec<String>,
    exact: HashMap<Vec<u64>, usize>,
}

impl KeyMemory {
    /// Number of rows (the memory size K).
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &LatentVector {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[LatentVector] {
        &self.rows
    }

    /// Source text of each row.
    pub fn meta(&self) -> &[String] {
        &self.meta
    }

    pub fn export<W: Write>(&self, out: &mut W) -> Result<()> {
        linefmt::write_records(
            out,
            self.dim,
            self.meta.iter().zip(&self.rows).map(|(m, r)| (m.as_str(), r.as_slice())),
        )
    }
}

/// Builds the key memory from per-segment key encodings. Equal encodings share
/// a row; rows keep first-occurrence order.
pub fn build_key_memory(encodings: &[LatentVector], meta: &[String]) -> Result<KeyMemory> {
    if encodings.is_empty() {
        return Err(Error::input("key memory needs at least one encoding"));
    }
    if encodings.len() != meta.len() {
        return Err(Error::input(format!(
            "{} encodings but {} metadata entries",
            encodings.len(),
            meta.len()
        )));
    }
    let dim = encodings[0].dim();
    let mut km = KeyMemory { dim, rows: Vec::new(), meta: Vec::new(), exact: HashMap::new() };
    for (z, m) in encodings.iter().zip(meta) {
        if z.dim() != dim {
            return Err(Error::input(format!(
                "encoding has dimension {}, expected {dim}",
                z.dim()
            )));
        }
        let bits = LatentVector::canonical_bits(z.as_slice());
        if km.exact.contains_key(&bits) {
            continue;
        }
        km.exact.insert(bits, km.rows.len());
        km.rows.push(z.clone());
        km.meta.push(m.clone());
    }
    Ok(km)
}

/// Index of the row nearest to `z`; ties go to the lowest index.
pub fn nearest_slot(z: &LatentVector, km: &KeyMemory) -> Result<usize> {
    if z.dim() != km.dim {
        return Err(Error::input(format!(
            "query has dimension {}, key memory has {}",
            z.dim(),
            km.dim
        )));
    }
    // Rows are pairwise unequal, so a zero-distance row is the unique minimum.
    if let Some(&k) = km.exact.get(&LatentVector::canonical_bits(z.as_slice())) {
        return Ok(k);
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, row) in km.rows.iter().enumerate() {
        let d = squared_distance(row.as_slice(), z.as_slice());
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    Ok(best)
}

pub fn derive_key(
    text: &str,
    mode: KeyMode,
    codec: &dyn LatentCodec,
    km: &KeyMemory,
) -> Result<KeyVector> {
    let mode = mode.validate()?;
    if km.is_empty() {
        return Err(Error::State("key memory is empty".into()));
    }
    let z = codec.encode(&mode.key_text(text))?;
    one_hot_key(nearest_slot(&z, km)?, km.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Codec;

    fn lv(v: &[f64]) -> LatentVector {
        LatentVector::new(v.to_vec()).unwrap()
    }

    fn meta(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("row {i}")).collect()
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot_key(2, 4).unwrap().to_dense(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(one_hot_key(0, 1).unwrap().to_dense(), vec![1.0]);
        assert!(matches!(one_hot_key(5, 4), Err(Error::Input(_))));
    }

    #[test]
    fn build_preserves_first_occurrence_order() {
        let encs: Vec<_> = (0..7).map(|i| lv(&[i as f64, 1.0])).collect();
        let km = build_key_memory(&encs, &meta(7)).unwrap();
        assert_eq!(km.len(), 7);
        for (i, e) in encs.iter().enumerate() {
            assert_eq!(km.row(i), e);
        }
    }

    #[test]
    fn build_collapses_duplicates() {
        let a = lv(&[1.0, 0.0]);
        let b = lv(&[0.0, 1.0]);
        let encs = vec![a.clone(), b.clone(), a.clone(), b.clone(), a.clone()];
        let km = build_key_memory(&encs, &meta(5)).unwrap();
        assert_eq!(km.len(), 2);
        assert_eq!(km.meta(), &["row 0".to_string(), "row 1".to_string()]);
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(matches!(build_key_memory(&[], &[]), Err(Error::Input(_))));
        assert!(matches!(build_key_memory(&[lv(&[1.0])], &meta(2)), Err(Error::Input(_))));
        let mixed = vec![lv(&[1.0]), lv(&[1.0, 2.0])];
        assert!(matches!(build_key_memory(&mixed, &meta(2)), Err(Error::Input(_))));
    }

    #[test]
    fn nearest_slot_exact_and_single_row() {
        let encs: Vec<_> = (0..5).map(|i| lv(&[i as f64, -(i as f64)])).collect();
        let km = build_key_memory(&encs, &meta(5)).unwrap();
        assert_eq!(nearest_slot(&encs[3], &km).unwrap(), 3);

        let single = build_key_memory(&[lv(&[0.5, 0.5])], &meta(1)).unwrap();
        assert_eq!(nearest_slot(&lv(&[100.0, -7.0]), &single).unwrap(), 0);
    }

    #[test]
    fn nearest_slot_breaks_ties_low() {
        let km = build_key_memory(&[lv(&[1.0, 0.0]), lv(&[-1.0, 0.0])], &meta(2)).unwrap();
        assert_eq!(nearest_slot(&lv(&[0.0, 3.0]), &km).unwrap(), 0);
    }

    #[test]
    fn nearest_slot_rejects_dimension_mismatch() {
        let km = build_key_memory(&[lv(&[1.0, 0.0])], &meta(1)).unwrap();
        assert!(matches!(nearest_slot(&lv(&[1.0]), &km), Err(Error::Input(_))));
    }

    #[test]
    fn key_mode_parsing() {
        assert_eq!("full".parse::<KeyMode>().unwrap(), KeyMode::Full);
        assert_eq!("prefix".parse::<KeyMode>().unwrap(), KeyMode::Prefix(4));
        assert_eq!("prefix(3)".parse::<KeyMode>().unwrap(), KeyMode::Prefix(3));
        assert!("prefix(0)".parse::<KeyMode>().is_err());
        assert!("nearest".parse::<KeyMode>().is_err());
    }

    #[test]
    fn derive_key_single_sentence() {
        let codec = Codec::with_seed(2);
        for mode in [KeyMode::Prefix(4), KeyMode::Full] {
            let seg = "Here we go again, said nobody.";
            let z = codec.encode(&mode.key_text(seg)).unwrap();
            let km = build_key_memory(&[z], &[seg.to_string()]).unwrap();
            let w = derive_key("Anything at all", mode, &codec, &km).unwrap();
            assert_eq!(w.hot_index(), 0);
            assert_eq!(w.len(), 1);
        }
    }
}

//! One recall episode: write every context segment to a fresh memory, then
//! read it once with a key derived from the query.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::codec::{normalize_text, LatentCodec, LatentVector};
use crate::error::{Error, Result};
use crate::keys::{build_key_memory, derive_key, nearest_slot, KeyMode};
use crate::memory::{
    self, place, read_to, LedgerSnapshot, RowMatrix, Tier, TransferLedger, WriteBatch,
    SCALAR_BYTES,
};

/// Splits text after runs of `.`, `!` or `?` that are followed by whitespace.
/// Each sentence keeps its terminal punctuation and is normalized; a trailing
/// fragment without punctuation is kept as the last sentence.
pub fn segment_context(text: &str) -> Result<Vec<String>> {
    static BOUNDARY: OnceLock<Regex> = OnceLock::new();
    let boundary = BOUNDARY.get_or_init(|| Regex::new(r"[.!?]+\s+").expect("valid regex"));

    let mut out = Vec::new();
    let mut start = 0;
    for m in boundary.find_iter(text) {
        let end = m.start() + m.as_str().trim_end().len();
        push_sentence(&mut out, &text[start..end]);
        start = m.end();
    }
    push_sentence(&mut out, &text[start..]);
    if out.is_empty() {
        return Err(Error::input("context contains no sentences"));
    }
    Ok(out)
}

fn push_sentence(out: &mut Vec<String>, raw: &str) {
    let s = normalize_text(raw);
    if !s.is_empty() {
        out.push(s);
    }
}

/// Context segments followed by a query that is used only for reading.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    segments: Vec<String>,
    query: String,
    key_mode: KeyMode,
}

impl Episode {
    /// Segments are normalized; ones that normalize to nothing are dropped.
    pub fn new(segments: Vec<String>, query: &str, key_mode: KeyMode) -> Result<Self> {
        let key_mode = key_mode.validate()?;
        let segments: Vec<String> = segments
            .into_iter()
            .map(|s| normalize_text(&s))
            .filter(|s| !s.is_empty())
            .collect();
        if segments.is_empty() {
            return Err(Error::input("episode needs at least one segment"));
        }
        let query = normalize_text(query);
        if query.is_empty() {
            return Err(Error::input("episode query is empty"));
        }
        Ok(Episode { segments, query, key_mode })
    }

    pub fn from_context(context: &str, query: &str, key_mode: KeyMode) -> Result<Self> {
        Episode::new(segment_context(context)?, query, key_mode)
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn key_mode(&self) -> KeyMode {
        self.key_mode
    }

    pub fn with_key_mode(mut self, key_mode: KeyMode) -> Result<Self> {
        self.key_mode = key_mode.validate()?;
        Ok(self)
    }

    /// Segments reordered so that position `i` holds `segments[order[i]]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if !is_permutation(order, self.segments.len()) {
            return Err(Error::input("not a permutation of the segment indices"));
        }
        Ok(Episode {
            segments: order.iter().map(|&i| self.segments[i].clone()).collect(),
            query: self.query.clone(),
            key_mode: self.key_mode,
        })
    }

    /// Whitespace tokens across segments and query.
    pub fn context_tokens(&self) -> usize {
        self.segments
            .iter()
            .chain(std::iter::once(&self.query))
            .map(|s| s.split_whitespace().count())
            .sum()
    }

    /// Segments and query joined back into one string.
    pub fn context_text(&self) -> String {
        let mut out = self.segments.join(" ");
        out.push(' ');
        out.push_str(&self.query);
        out
    }
}

fn is_permutation(order: &[usize], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeOptions {
    /// Where the value memory lives while it is read.
    pub memory_tier: Tier,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions { memory_tier: Tier::Host }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecallResult {
    pub readout: LatentVector,
    pub decoded: String,
    pub slot_used: usize,
    /// Distinct segments that had to share a key row with an earlier segment.
    pub prefix_collisions: usize,
    pub distinct_segments: usize,
    /// Memory size K.
    pub memory_slots: usize,
    pub fallback_used: bool,
    pub ledger: LedgerSnapshot,
}

pub fn run_episode(ep: &Episode, codec: &dyn LatentCodec) -> Result<RecallResult> {
    run_episode_with(ep, codec, EpisodeOptions::default())
}

/// Encoding and decoding are charged to the device; memory construction and
/// lookup happen on the host unless `opts.memory_tier` moves the value memory.
pub fn run_episode_with(
    ep: &Episode,
    codec: &dyn LatentCodec,
    opts: EpisodeOptions,
) -> Result<RecallResult> {
    let ledger = TransferLedger::default();
    let dim = codec.dim();
    let vec_bytes = dim as u64 * SCALAR_BYTES;

    let mut first_seen: HashMap<&str, ()> = HashMap::new();
    let distinct: Vec<&str> = ep
        .segments
        .iter()
        .map(String::as_str)
        .filter(|s| first_seen.insert(s, ()).is_none())
        .collect();

    let mut z_rows = Vec::with_capacity(distinct.len() * dim);
    let mut key_encodings = Vec::with_capacity(distinct.len());
    let mut key_texts = Vec::with_capacity(distinct.len());
    for seg in &distinct {
        let key_text = ep.key_mode.key_text(seg);
        let z = codec.encode(seg)?;
        let key_z = if key_text == *seg { z.clone() } else { codec.encode(&key_text)? };
        let n_vectors = if key_text == *seg { 1 } else { 2 };
        ledger.alloc_device(n_vectors * vec_bytes);
        ledger.device_to_host(n_vectors * vec_bytes);
        ledger.free_device(n_vectors * vec_bytes);

        z_rows.extend_from_slice(z.as_slice());
        key_encodings.push(key_z);
        key_texts.push(key_text);
    }

    let km = build_key_memory(&key_encodings, &key_texts)?;
    let prefix_collisions = distinct.len() - km.len();
    if prefix_collisions > 0 {
        log::warn!("{prefix_collisions} segment(s) share a key row with an earlier segment");
    }
    let slots = key_encodings
        .iter()
        .map(|z| nearest_slot(z, &km))
        .collect::<Result<Vec<_>>>()?;

    let batch = WriteBatch::one_hot(RowMatrix::from_vec(distinct.len(), dim, z_rows)?, slots, km.len())?;
    let fast = memory::write_onehot_fast(&batch)?;
    let mem = place(fast.memory, opts.memory_tier, &ledger);

    ledger.alloc_device(vec_bytes);
    let key = derive_key(&ep.query, ep.key_mode, codec, &km)?;
    ledger.device_to_host(vec_bytes);
    ledger.free_device(vec_bytes);

    let readout = read_to(&key, &mem, Tier::Device, &ledger)?;
    if mem.tier() == Tier::Host {
        ledger.alloc_device(vec_bytes);
    }
    let decoded = codec.decode(&readout)?;
    if mem.tier() == Tier::Host {
        ledger.free_device(vec_bytes);
    } else {
        ledger.free_device(mem.size_bytes());
    }

    Ok(RecallResult {
        readout,
        decoded,
        slot_used: key.hot_index(),
        prefix_collisions,
        distinct_segments: distinct.len(),
        memory_slots: km.len(),
        fallback_used: fast.fallback_used,
        ledger: ledger.snapshot(),
    })
}

/// Runs the episode in original and permuted segment order and reports
/// whether recall is unaffected: identical decoded text, and readouts that are
/// bitwise equal (or within 1e-12 when a colliding slot had to be averaged).
pub fn recall_ordering_check(
    ep: &Episode,
    permutation: &[usize],
    codec: &dyn LatentCodec,
) -> Result<bool> {
    let base = run_episode(ep, codec)?;
    let moved = run_episode(&ep.permuted(permutation)?, codec)?;
    if base.decoded != moved.decoded {
        return Ok(false);
    }
    let (a, b) = (base.readout.as_slice(), moved.readout.as_slice());
    if !base.fallback_used && !moved.fallback_used {
        return Ok(LatentVector::canonical_bits(a) == LatentVector::canonical_bits(b));
    }
    Ok(a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0)))
}

//! Deterministic, invertible text codec.
//!
//! Every distinct normalized text is assigned a pseudo-random unit vector drawn
//! from a generator seeded by a hash of the codec seed and the text itself, so
//! the same text always maps to the same vector for a given seed. The vectors
//! are kept in a codebook that enforces a minimum pairwise Euclidean distance
//! (`separation`), which makes decoding by nearest codebook entry exact for any
//! vector within `separation / 2` of a registered encoding.
//!
//! A learned encoder/decoder can replace this by implementing [`LatentCodec`].

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::RwLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linefmt;

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_SEPARATION: f64 = 0.1;
pub const DEFAULT_CAPACITY: usize = 1 << 20;

/// Rejection-sampling budget per text. For unit vectors in C >= 64 dimensions
/// a single draw virtually always succeeds.
const MAX_PLACEMENT_ATTEMPTS: u32 = 64;

/// A C-dimensional real vector with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("latent vector must have at least one entry"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite latent entry at index {pos}")));
        }
        Ok(LatentVector(values))
    }

    /// Caller guarantees the entries are finite and non-empty.
    pub(crate) fn from_trusted(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty() && values.iter().all(|v| v.is_finite()));
        LatentVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &LatentVector) -> f64 {
        squared_distance(&self.0, &other.0).sqrt()
    }

    /// Bit patterns with `-0.0` folded onto `0.0`; equal keys iff the vectors compare equal.
    pub(crate) fn canonical_bits(values: &[f64]) -> Vec<u64> {
        values
            .iter()
            .map(|&v| if v == 0.0 { 0u64 } else { v.to_bits() })
            .collect()
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance is at least `bound`, stopping as soon as the partial sum
/// crosses it.
fn at_least(a: &[f64], b: &[f64], bound: f64) -> bool {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += (x - y) * (x - y);
        if acc >= bound {
            return true;
        }
    }
    false
}

/// Trims and collapses internal whitespace runs to a single space. Case and
/// punctuation are preserved.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// The first `n_words` whitespace-delimited words of `text`, joined by single
/// spaces. Texts with fewer words come back whole (normalized).
pub fn prefix_of(text: &str, n_words: usize) -> String {
    let mut out = String::new();
    for word in text.split_whitespace().take(n_words) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Encoder/decoder boundary between text and latent space.
pub trait LatentCodec: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<LatentVector>;
    fn decode(&self, z: &LatentVector) -> Result<String>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodecConfig {
    pub dim: usize,
    pub separation: f64,
    pub capacity: usize,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            dim: DEFAULT_DIM,
            separation: DEFAULT_SEPARATION,
            capacity: DEFAULT_CAPACITY,
            seed: 0,
        }
    }
}

impl CodecConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::input("codec dimension must be positive"));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::input("separation must be positive and finite"));
        }
        if self.capacity == 0 {
            return Err(Error::input("codebook capacity must be positive"));
        }
        Ok(())
    }
}

/// Registered (text, vector) pairs with unique texts and separated vectors.
#[derive(Debug, Default)]
pub struct Codebook {
    entries: Vec<(String, LatentVector)>,
    by_text: HashMap<String, usize>,
    by_bits: HashMap<Vec<u64>, usize>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, LatentVector)] {
        &self.entries
    }

    pub fn get(&self, text: &str) -> Option<&LatentVector> {
        self.by_text.get(text).map(|&i| &self.entries[i].1)
    }

    fn is_separated(&self, v: &[f64], separation: f64) -> bool {
        let bound = separation * separation;
        self.entries.iter().all(|(_, e)| at_least(e.as_slice(), v, bound))
    }

    fn push(&mut self, text: String, v: LatentVector) -> usize {
        let idx = self.entries.len();
        self.by_bits.insert(LatentVector::canonical_bits(v.as_slice()), idx);
        self.by_text.insert(text.clone(), idx);
        self.entries.push((text, v));
        idx
    }

    fn nearest(&self, z: &[f64]) -> Option<usize> {
        if let Some(&i) = self.by_bits.get(&LatentVector::canonical_bits(z)) {
            return Some(i);
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, e)) in self.entries.iter().enumerate() {
            let d = squared_distance(e.as_slice(), z);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Smallest Euclidean distance between any two entries, `None` below two entries.
    pub fn min_pairwise_distance(&self) -> Option<f64> {
        let mut min: Option<f64> = None;
        for (i, (_, a)) in self.entries.iter().enumerate() {
            for (_, b) in &self.entries[i + 1..] {
                let d = a.distance(b);
                if min.is_none_or(|m| d < m) {
                    min = Some(d);
                }
            }
        }
        min
    }
}

/// Codebook-backed codec. Registration is internally synchronized; lookups
/// take a shared lock.
#[derive(Debug)]
pub struct Codec {
    config: CodecConfig,
    book: RwLock<Codebook>,
}

impl Codec {
    pub fn new(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        Ok(Codec { config, book: RwLock::new(Codebook::default()) })
    }

    pub fn with_seed(seed: u64) -> Self {
        Codec::new(CodecConfig { seed, ..CodecConfig::default() }).expect("default config is valid")
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.read_book().len()
    }

    pub fn is_empty(&self) -> bool {
        self.read_book().is_empty()
    }

    /// Runs `f` against the codebook under the shared lock.
    pub fn with_codebook<T>(&self, f: impl FnOnce(&Codebook) -> T) -> T {
        f(&self.read_book())
    }

    fn read_book(&self) -> std::sync::RwLockReadGuard<'_, Codebook> {
        self.book.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_book(&self) -> std::sync::RwLockWriteGuard<'_, Codebook> {
        self.book.write().unwrap_or_else(|e| e.into_inner())
    }

    fn sample(&self, text: &str, attempt: u32) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.config.seed.to_le_bytes());
        hasher.update(attempt.to_le_bytes());
        hasher.update(text.as_bytes());
        let seed: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let mut v: Vec<f64> =
                (0..self.config.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
                return v;
            }
        }
    }

    /// Registers `text` with an explicit vector instead of a sampled one. Used to
    /// construct codebooks with prescribed geometry.
    pub fn register_with_vector(&self, text: &str, vector: LatentVector) -> Result<()> {
        let text = normalize_text(text);
        if text.is_empty() {
            return Err(Error::input("cannot register empty text"));
        }
        if vector.dim() != self.config.dim {
            return Err(Error::input(format!(
                "vector has dimension {}, codec expects {}",
                vector.dim(),
                self.config.dim
            )));
        }
        let mut book = self.write_book();
        if book.by_text.contains_key(&text) {
            return Err(Error::input(format!("text {text:?} is already registered")));
        }
        if book.len() >= self.config.capacity {
            return Err(Error::Capacity { capacity: self.config.capacity });
        }
        if !book.is_separated(vector.as_slice(), self.config.separation) {
            return Err(Error::input(format!(
                "vector for {text:?} is closer than {} to an existing entry",
                self.config.separation
            )));
        }
        book.push(text, vector);
        Ok(())
    }

    pub fn export<W: Write>(&self, out: &mut W) -> Result<()> {
        let book = self.read_book();
        linefmt::write_records(
            out,
            self.config.dim,
            book.entries.iter().map(|(t, v)| (t.as_str(), v.as_slice())),
        )
    }

    /// Loads a codebook written by [`Codec::export`]. The file's dimension must
    /// match `config.dim`; uniqueness and separation are re-checked.
    pub fn import<R: BufRead>(config: CodecConfig, input: R) -> Result<Self> {
        let codec = Codec::new(config)?;
        let (dim, records) = linefmt::read_records(input)?;
        if dim != config.dim {
            return Err(Error::input(format!(
                "codebook file has dimension {dim}, config expects {}",
                config.dim
            )));
        }
        for (text, values) in records {
            codec.register_with_vector(&text, LatentVector::new(values)?)?;
        }
        Ok(codec)
    }
}

impl LatentCodec for Codec {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn encode(&self, text: &str) -> Result<LatentVector> {
        let text = normalize_text(text);
        if text.is_empty() {
            return Err(Error::input("cannot encode empty text"));
        }
        if let Some(v) = self.read_book().get(&text) {
            return Ok(v.clone());
        }

        let mut book = self.write_book();
        if let Some(v) = book.get(&text) {
            return Ok(v.clone());
        }
        if book.len() >= self.config.capacity {
            return Err(Error::Capacity { capacity: self.config.capacity });
        }
        for attempt in 0..MAX_PLACEMENT_ATTEMPTS {
            let v = self.sample(&text, attempt);
            if book.is_separated(&v, self.config.separation) {
                let v = LatentVector::from_trusted(v);
                book.push(text, v.clone());
                return Ok(v);
            }
        }
        Err(Error::Numerical(format!(
            "no vector at separation {} found for {text:?} after {MAX_PLACEMENT_ATTEMPTS} draws",
            self.config.separation
        )))
    }

    fn decode(&self, z: &LatentVector) -> Result<String> {
        if z.dim() != self.config.dim {
            return Err(Error::input(format!(
                "vector has dimension {}, codec expects {}",
                z.dim(),
                self.config.dim
            )));
        }
        let book = self.read_book();
        let idx = book
            .nearest(z.as_slice())
            .ok_or_else(|| Error::State("cannot decode with an empty codebook".into()))?;
        Ok(book.entries[idx].0.clone())
    }
}

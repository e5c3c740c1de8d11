//! Needle-in-a-haystack trials.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::{Codec, CodecConfig, LatentCodec, LatentVector};
use crate::error::{Error, Result};
use crate::keys::KeyMode;
use crate::pipeline::{segment_context, Episode};

pub const MAGIC_QUERY: &str = "The magic number is";
pub const SF_NEEDLE: &str =
    "The best thing to do in San Francisco is eat a sandwich and sit in Dolores Park on a sunny day.";
pub const SF_QUERY: &str = "The best thing to do in San Francisco is";
pub const SF_EXPECTED: &str = "eat a sandwich and sit in Dolores Park on a sunny day.";

/// Where haystack sentences come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Corpus {
    /// Plain-text files in a directory, read in lexicographic filename order.
    Directory(PathBuf),
    /// `sentences` generated distractors.
    Synthetic { sentences: usize, seed: u64 },
    Sentences(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeedleSpec {
    pub needle: String,
    pub query: String,
    pub expected: String,
    /// 0.0 puts the needle first, 1.0 last.
    pub position_fraction: f64,
    pub corpus: Corpus,
}

impl NeedleSpec {
    pub fn magic_number(number: &str, position_fraction: f64, corpus: Corpus) -> Self {
        NeedleSpec {
            needle: format!("{MAGIC_QUERY} {number}."),
            query: MAGIC_QUERY.to_string(),
            expected: number.to_string(),
            position_fraction,
            corpus,
        }
    }

    pub fn san_francisco(position_fraction: f64, corpus: Corpus) -> Self {
        NeedleSpec {
            needle: SF_NEEDLE.to_string(),
            query: SF_QUERY.to_string(),
            expected: SF_EXPECTED.to_string(),
            position_fraction,
            corpus,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.expected.trim().is_empty() {
            return Err(Error::input("needle expectation is empty"));
        }
        if self.needle.trim().is_empty() || self.query.trim().is_empty() {
            return Err(Error::input("needle and query must be non-empty"));
        }
        if !(0.0..=1.0).contains(&self.position_fraction) {
            return Err(Error::input(format!(
                "position fraction {} outside [0, 1]",
                self.position_fraction
            )));
        }
        Ok(())
    }
}

const ADJECTIVES: &[&str] = &[
    "Quiet", "Curious", "Patient", "Stubborn", "Clever", "Tired", "Eager", "Humble", "Restless",
    "Careful", "Bold", "Gentle", "Nervous", "Honest", "Lucky", "Modest", "Proud", "Sleepy",
    "Steady", "Thrifty", "Witty", "Young", "Early", "Ambitious",
];
const NOUNS: &[&str] = &[
    "founders", "hackers", "investors", "painters", "students", "writers", "engineers",
    "designers", "teachers", "farmers", "builders", "readers", "critics", "doctors", "sailors",
    "bakers", "lawyers", "gardeners", "pilots", "chemists", "poets", "merchants", "tailors",
    "drummers",
];
const VERBS: &[&str] = &[
    "build", "question", "rewrite", "ignore", "study", "fund", "sketch", "measure", "admire",
    "polish", "borrow", "discover", "debate", "explain", "repair", "collect", "publish", "forget",
    "outline", "test",
];
const OBJECTS: &[&str] = &[
    "prototypes", "essays", "markets", "ideas", "programs", "startups", "gardens", "bridges",
    "theories", "novels", "maps", "engines", "recipes", "arguments", "paintings", "schedules",
    "budgets", "libraries", "melodies", "puzzles",
];
const TAILS: &[&str] = &[
    "before breakfast", "in the spring", "with great care", "for no reason at all",
    "every other week", "near the old harbor", "despite the weather", "when nobody is watching",
    "during long winters", "after the meeting ends", "without asking anyone", "on quiet afternoons",
];

pub fn max_synthetic_sentences() -> usize {
    ADJECTIVES.len() * NOUNS.len() * VERBS.len() * OBJECTS.len()
}

/// `count` distractor sentences whose four-word prefixes are pairwise distinct.
pub fn synthetic_haystack(count: usize, seed: u64) -> Result<Vec<String>> {
    let space = max_synthetic_sentences();
    if count > space {
        return Err(Error::input(format!(
            "at most {space} synthetic sentences available, {count} requested"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, space, count).into_vec();
    Ok(picks
        .into_iter()
        .map(|mut i| {
            let o = OBJECTS[i % OBJECTS.len()];
            i /= OBJECTS.len();
            let v = VERBS[i % VERBS.len()];
            i /= VERBS.len();
            let n = NOUNS[i % NOUNS.len()];
            i /= NOUNS.len();
            let a = ADJECTIVES[i];
            let tail = TAILS.choose(&mut rng).expect("non-empty");
            format!("{a} {n} {v} {o} {tail}.")
        })
        .collect())
}

/// Reads every regular file in `dir` in lexicographic filename order and
/// splits the concatenation into sentences.
pub fn load_directory(dir: &Path) -> Result<Vec<String>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut text = String::new();
    for f in &files {
        text.push_str(&fs::read_to_string(f)?);
        text.push('\n');
    }
    segment_context(&text).map_err(|_| {
        Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("corpus directory {} has no sentences", dir.display()),
        ))
    })
}

pub fn load_corpus(corpus: &Corpus) -> Result<Vec<String>> {
    let sentences = match corpus {
        Corpus::Directory(dir) => load_directory(dir)?,
        Corpus::Synthetic { sentences, seed } => synthetic_haystack(*sentences, *seed)?,
        Corpus::Sentences(s) => s.clone(),
    };
    if sentences.is_empty() {
        return Err(Error::Io(io::Error::new(io::ErrorKind::InvalidData, "corpus is empty")));
    }
    Ok(sentences)
}

/// Insertion index for the needle among `len` haystack sentences.
pub fn insertion_index(position_fraction: f64, len: usize) -> usize {
    ((position_fraction * len as f64).round() as usize).min(len)
}

pub fn gen_needle_trial(spec: &NeedleSpec) -> Result<Episode> {
    spec.validate()?;
    let haystack = load_corpus(&spec.corpus)?;
    gen_needle_trial_in(spec, &haystack)
}

/// Like [`gen_needle_trial`] with the haystack already loaded; `spec.corpus` is ignored.
pub fn gen_needle_trial_in(spec: &NeedleSpec, haystack: &[String]) -> Result<Episode> {
    spec.validate()?;
    let at = insertion_index(spec.position_fraction, haystack.len());
    let mut segments = Vec::with_capacity(haystack.len() + 1);
    segments.extend_from_slice(&haystack[..at]);
    segments.push(spec.needle.clone());
    segments.extend_from_slice(&haystack[at..]);
    Episode::new(segments, &spec.query, KeyMode::default())
}

/// A needle trial paired with a codec arranged so that, under full-sentence
/// keying, the query lands on a haystack sentence instead of the needle.
#[derive(Debug)]
pub struct AdversarialTrial {
    pub episode: Episode,
    pub codec: Codec,
    /// The haystack sentence planted next to the query in latent space.
    pub decoy: String,
}

/// Builds an [`AdversarialTrial`]: one haystack sentence gets a vector at
/// distance `2 * separation` from the query's full encoding, so it is the
/// query's nearest key row in full mode while the needle's key is a random
/// unit vector far away. Prefix keying is unaffected because the decoy's
/// prefix encoding is unrelated to the query's.
pub fn gen_adversarial_needle_trial(
    spec: &NeedleSpec,
    haystack: &[String],
    config: CodecConfig,
    seed: u64,
) -> Result<AdversarialTrial> {
    let episode = gen_needle_trial_in(spec, haystack)?;
    let codec = Codec::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let query = codec.encode(episode.query())?;
    let needle = codec.encode(&spec.needle)?;
    let decoy = haystack
        .choose(&mut rng)
        .ok_or_else(|| Error::input("adversarial trial needs a non-empty haystack"))?
        .clone();

    let mut dir: Vec<f64> = (0..config.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let radius = 2.0 * config.separation;
    dir.iter_mut()
        .zip(query.as_slice())
        .for_each(|(d, q)| *d = q + radius * *d / norm);
    let decoy_vec = LatentVector::new(dir)?;

    if decoy_vec.distance(&query) >= needle.distance(&query) {
        return Err(Error::Numerical(
            "decoy is not nearer the query than the needle".into(),
        ));
    }
    codec.register_with_vector(&decoy, decoy_vec)?;
    Ok(AdversarialTrial { episode, codec, decoy })
}

/// Uniform random number with exactly `digits` digits.
pub fn random_magic_number<R: Rng + ?Sized>(rng: &mut R, digits: u32) -> Result<String> {
    if !(1..=18).contains(&digits) {
        return Err(Error::input(format!("magic number digit count {digits} outside 1..=18")));
    }
    let lo = if digits == 1 { 0 } else { 10u64.pow(digits - 1) };
    Ok(rng.random_range(lo..10u64.pow(digits)).to_string())
}

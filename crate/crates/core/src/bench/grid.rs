//! Trial grids: configuration, execution and aggregation.
//!
//! A grid config is a TOML key/value file:
//!
//! ```toml
//! protocol = "passkey"          # or "needle"
//! seed = 42
//! trials = 100                  # trials per cell
//! key_modes = ["prefix", "full"]
//! prefix_words = 4
//! memory_tier = "host"          # or "device"
//! codec_dim = 256
//!
//! # passkey cells: digits x context_tokens x key_modes
//! digits = [3, 4, 5]
//! context_tokens = [128000, 1000000]
//!
//! # needle cells: needles x key_modes
//! needles = ["magic:3", "magic:4", "sf"]
//! synthetic = 1000              # distractor sentences, or
//! # corpus = "path/to/essays"   # directory of text files
//! positions = 10                # needle positions swept over [0, 1], or
//! # position = 0.5              # one fixed position
//! adversarial = false
//! # needle = "..."; query = "..."; expected = "..."   adds a custom needle
//! ```

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{score_exact, score_rouge_l_recall};
use super::needle::{
    gen_adversarial_needle_trial, gen_needle_trial_in, load_corpus, random_magic_number, Corpus,
    NeedleSpec,
};
use super::passkey::{gen_passkey_context, random_passkey, PasskeySpec};
use crate::codec::{Codec, CodecConfig, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::keys::KeyMode;
use crate::memory::{LedgerSnapshot, Tier};
use crate::pipeline::{run_episode_with, EpisodeOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Passkey,
    Needle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NeedleKind {
    /// "The magic number is N." with an N of the given digit count.
    Magic(u32),
    SanFrancisco,
    Custom { needle: String, query: String, expected: String },
}

impl NeedleKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "sf" => Ok(NeedleKind::SanFrancisco),
            other => other
                .strip_prefix("magic:")
                .and_then(|d| d.parse::<u32>().ok())
                .filter(|d| (1..=18).contains(d))
                .map(NeedleKind::Magic)
                .ok_or_else(|| Error::Config(format!("unknown needle {other:?}"))),
        }
    }

    fn label(&self) -> String {
        match self {
            NeedleKind::Magic(d) => format!("magic:{d}"),
            NeedleKind::SanFrancisco => "sf".into(),
            NeedleKind::Custom { .. } => "custom".into(),
        }
    }

    fn scores_rouge(&self) -> bool {
        !matches!(self, NeedleKind::Magic(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Haystack {
    Synthetic(usize),
    Directory(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Positions {
    Fixed(f64),
    /// Evenly spaced over [0, 1], cycled across trials.
    Sweep(usize),
}

impl Positions {
    fn for_trial(self, trial: usize) -> f64 {
        match self {
            Positions::Fixed(f) => f,
            Positions::Sweep(1) => 0.5,
            Positions::Sweep(k) => (trial % k) as f64 / (k - 1) as f64,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    protocol: Protocol,
    #[serde(default)]
    seed: u64,
    trials: usize,
    #[serde(default)]
    key_modes: Option<Vec<String>>,
    #[serde(default)]
    prefix_words: Option<usize>,
    #[serde(default)]
    memory_tier: Tier,
    #[serde(default)]
    codec_dim: Option<usize>,
    #[serde(default)]
    digits: Vec<u32>,
    #[serde(default)]
    context_tokens: Vec<usize>,
    #[serde(default)]
    needles: Vec<String>,
    synthetic: Option<usize>,
    corpus: Option<PathBuf>,
    positions: Option<usize>,
    position: Option<f64>,
    #[serde(default)]
    adversarial: bool,
    needle: Option<String>,
    query: Option<String>,
    expected: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub protocol: Protocol,
    pub seed: u64,
    pub trials: usize,
    pub key_modes: Vec<KeyMode>,
    pub memory_tier: Tier,
    pub codec_dim: usize,
    pub digits: Vec<u32>,
    pub context_tokens: Vec<usize>,
    pub needles: Vec<NeedleKind>,
    pub haystack: Haystack,
    pub positions: Positions,
    pub adversarial: bool,
}

pub const DEFAULT_SWEEP: usize = 10;

impl GridConfig {
    /// Passkey grid with defaults for everything but the axes.
    pub fn passkey(seed: u64, trials: usize, digits: Vec<u32>, context_tokens: Vec<usize>) -> Self {
        GridConfig {
            protocol: Protocol::Passkey,
            seed,
            trials,
            key_modes: vec![KeyMode::default()],
            memory_tier: Tier::Host,
            codec_dim: DEFAULT_DIM,
            digits,
            context_tokens,
            needles: Vec::new(),
            haystack: Haystack::Synthetic(1000),
            positions: Positions::Sweep(DEFAULT_SWEEP),
            adversarial: false,
        }
    }

    pub fn needle(seed: u64, trials: usize, needles: Vec<NeedleKind>, haystack: Haystack) -> Self {
        GridConfig {
            protocol: Protocol::Needle,
            needles,
            haystack,
            ..GridConfig::passkey(seed, trials, Vec::new(), Vec::new())
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let prefix_words = raw.prefix_words.unwrap_or(KeyMode::DEFAULT_PREFIX_WORDS);
        let key_modes = match raw.key_modes {
            None => vec![KeyMode::Prefix(prefix_words)],
            Some(modes) => modes
                .iter()
                .map(|m| match m.trim() {
                    "prefix" => KeyMode::Prefix(prefix_words).validate(),
                    other => other.parse(),
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Config(e.to_string()))?,
        };

        let mut needles = raw
            .needles
            .iter()
            .map(|n| NeedleKind::parse(n))
            .collect::<Result<Vec<_>>>()?;
        match (raw.needle, raw.query, raw.expected) {
            (Some(needle), Some(query), Some(expected)) => {
                needles.push(NeedleKind::Custom { needle, query, expected })
            }
            (None, None, None) => {}
            _ => return Err(Error::Config("custom needle needs needle, query and expected".into())),
        }

        let haystack = match (raw.synthetic, raw.corpus) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("set only one of `synthetic` and `corpus`".into()))
            }
            (_, Some(dir)) => Haystack::Directory(dir),
            (Some(n), None) => Haystack::Synthetic(n),
            (None, None) => Haystack::Synthetic(1000),
        };
        let positions = match (raw.positions, raw.position) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("set only one of `positions` and `position`".into()))
            }
            (_, Some(f)) => Positions::Fixed(f),
            (Some(k), None) => Positions::Sweep(k),
            (None, None) => Positions::Sweep(DEFAULT_SWEEP),
        };

        let cfg = GridConfig {
            protocol: raw.protocol,
            seed: raw.seed,
            trials: raw.trials,
            key_modes,
            memory_tier: raw.memory_tier,
            codec_dim: raw.codec_dim.unwrap_or(DEFAULT_DIM),
            digits: raw.digits,
            context_tokens: raw.context_tokens,
            needles,
            haystack,
            positions,
            adversarial: raw.adversarial,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.key_modes.is_empty() {
            return bad("key_modes is empty");
        }
        if self.codec_dim == 0 {
            return bad("codec_dim must be positive");
        }
        match self.protocol {
            Protocol::Passkey => {
                if self.digits.is_empty() || self.context_tokens.is_empty() {
                    return bad("passkey grid needs `digits` and `context_tokens`");
                }
                if let Some(d) = self.digits.iter().find(|d| !(3..=8).contains(*d)) {
                    return Err(Error::Config(format!("passkey digits {d} outside 3..=8")));
                }
            }
            Protocol::Needle => {
                if self.needles.is_empty() {
                    return bad("needle grid needs at least one needle");
                }
                match self.positions {
                    Positions::Sweep(0) => return bad("positions must be positive"),
                    Positions::Fixed(f) if !(0.0..=1.0).contains(&f) => {
                        return bad("position must lie in [0, 1]")
                    }
                    _ => {}
                }
                if matches!(self.haystack, Haystack::Synthetic(0)) {
                    return bad("synthetic haystack needs at least one sentence");
                }
            }
        }
        Ok(())
    }

    fn codec_config(&self, seed: u64) -> CodecConfig {
        CodecConfig { dim: self.codec_dim, seed, ..CodecConfig::default() }
    }
}

/// Aggregated outcome of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub cell: String,
    pub trials: usize,
    pub successes: usize,
    pub recall_rate: f64,
    pub rouge_l: Option<f64>,
    pub context_tokens: usize,
    pub ledger: LedgerSnapshot,
    pub collisions: usize,
    /// Trials that errored, as `trial <i>: <error>`. Not counted in `trials`.
    pub failures: Vec<String>,
}

struct TrialOutcome {
    success: bool,
    rouge: Option<f64>,
    context_tokens: usize,
    ledger: LedgerSnapshot,
    collisions: usize,
}

/// Deterministic per-trial seed, independent of execution order.
pub fn trial_seed(seed: u64, cell: usize, trial: usize) -> u64 {
    let mut x = seed;
    for v in [cell as u64, trial as u64] {
        x = splitmix64(x ^ splitmix64(v.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

enum Cell {
    Passkey { digits: u32, tokens: usize, mode: KeyMode },
    Needle { kind: NeedleKind, mode: KeyMode },
}

impl Cell {
    fn label(&self, adversarial: bool) -> String {
        match self {
            Cell::Passkey { digits, tokens, mode } => {
                format!("passkey digits={digits} tokens={tokens} key={mode}")
            }
            Cell::Needle { kind, mode } => format!(
                "needle {} key={mode}{}",
                kind.label(),
                if adversarial { " adversarial" } else { "" }
            ),
        }
    }
}

fn cells(cfg: &GridConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    match cfg.protocol {
        Protocol::Passkey => {
            for &digits in &cfg.digits {
                for &tokens in &cfg.context_tokens {
                    for &mode in &cfg.key_modes {
                        out.push(Cell::Passkey { digits, tokens, mode });
                    }
                }
            }
        }
        Protocol::Needle => {
            for kind in &cfg.needles {
                for &mode in &cfg.key_modes {
                    out.push(Cell::Needle { kind: kind.clone(), mode });
                }
            }
        }
    }
    out
}

/// Runs every cell of the grid. Trials run in parallel; a failing trial is
/// recorded in its cell's `failures` and the grid carries on. Haystack loading
/// errors abort before any trial runs.
pub fn run_grid(cfg: &GridConfig) -> Result<Vec<TrialReport>> {
    cfg.validate()?;
    if cfg.trials == 0 {
        return Ok(Vec::new());
    }
    let haystack = match cfg.protocol {
        Protocol::Passkey => Vec::new(),
        Protocol::Needle => load_corpus(&match &cfg.haystack {
            Haystack::Synthetic(n) => Corpus::Synthetic { sentences: *n, seed: cfg.seed },
            Haystack::Directory(dir) => Corpus::Directory(dir.clone()),
        })?,
    };

    let mut reports = Vec::new();
    for (ci, cell) in cells(cfg).iter().enumerate() {
        let outcomes: Vec<Result<TrialOutcome>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, cell, &haystack, trial_seed(cfg.seed, ci, t), t))
            .collect();
        reports.push(aggregate(cell.label(cfg.adversarial), outcomes));
    }
    Ok(reports)
}

fn run_trial(
    cfg: &GridConfig,
    cell: &Cell,
    haystack: &[String],
    seed: u64,
    index: usize,
) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = EpisodeOptions { memory_tier: cfg.memory_tier };
    match cell {
        Cell::Passkey { digits, tokens, mode } => {
            let passkey = random_passkey(&mut rng, *digits)?;
            let spec = PasskeySpec::with_target_tokens(&passkey, *tokens)?;
            let episode = gen_passkey_context(&spec)?.with_key_mode(*mode)?;
            let codec = Codec::new(cfg.codec_config(seed))?;
            let result = run_episode_with(&episode, &codec, opts)?;
            Ok(TrialOutcome {
                success: score_exact(&result.decoded, &passkey),
                rouge: None,
                context_tokens: episode.context_tokens(),
                ledger: result.ledger,
                collisions: result.prefix_collisions,
            })
        }
        Cell::Needle { kind, mode } => {
            let position = cfg.positions.for_trial(index);
            let corpus = Corpus::Sentences(Vec::new());
            let spec = match kind {
                NeedleKind::Magic(d) => {
                    NeedleSpec::magic_number(&random_magic_number(&mut rng, *d)?, position, corpus)
                }
                NeedleKind::SanFrancisco => NeedleSpec::san_francisco(position, corpus),
                NeedleKind::Custom { needle, query, expected } => NeedleSpec {
                    needle: needle.clone(),
                    query: query.clone(),
                    expected: expected.clone(),
                    position_fraction: position,
                    corpus,
                },
            };
            let (episode, codec) = if cfg.adversarial {
                let t = gen_adversarial_needle_trial(&spec, haystack, cfg.codec_config(seed), seed)?;
                (t.episode, t.codec)
            } else {
                (gen_needle_trial_in(&spec, haystack)?, Codec::new(cfg.codec_config(seed))?)
            };
            let episode = episode.with_key_mode(*mode)?;
            let result = run_episode_with(&episode, &codec, opts)?;
            Ok(TrialOutcome {
                success: score_exact(&result.decoded, &spec.expected),
                rouge: kind
                    .scores_rouge()
                    .then(|| score_rouge_l_recall(&result.decoded, &spec.expected)),
                context_tokens: episode.context_tokens(),
                ledger: result.ledger,
                collisions: result.prefix_collisions,
            })
        }
    }
}

fn aggregate(cell: String, outcomes: Vec<Result<TrialOutcome>>) -> TrialReport {
    let mut report = TrialReport {
        cell,
        trials: 0,
        successes: 0,
        recall_rate: 0.0,
        rouge_l: None,
        context_tokens: 0,
        ledger: LedgerSnapshot::default(),
        collisions: 0,
        failures: Vec::new(),
    };
    let mut rouge_sum = 0.0;
    let mut rouge_n = 0usize;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                report.trials += 1;
                report.successes += o.success as usize;
                report.context_tokens = report.context_tokens.max(o.context_tokens);
                report.ledger = report.ledger.merge(o.ledger);
                report.collisions += o.collisions;
                if let Some(r) = o.rouge {
                    rouge_sum += r;
                    rouge_n += 1;
                }
            }
            Err(e) => report.failures.push(format!("trial {i}: {e}")),
        }
    }
    if report.trials > 0 {
        report.recall_rate = report.successes as f64 / report.trials as f64;
    }
    if rouge_n > 0 {
        report.rouge_l = Some(rouge_sum / rouge_n as f64);
    }
    report
}

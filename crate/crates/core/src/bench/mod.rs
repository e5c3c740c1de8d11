//! Recall benchmarks: passkey and needle-in-a-haystack trial generation,
//! scoring, grid execution and reporting.

pub mod grid;
pub mod metrics;
pub mod needle;
pub mod passkey;
pub mod report;

pub use grid::{run_grid, GridConfig, Haystack, NeedleKind, Positions, Protocol, TrialReport};
pub use metrics::{lcs_len, rouge_tokens, score_exact, score_rouge_l_recall};
pub use needle::{
    gen_adversarial_needle_trial, gen_needle_trial, gen_needle_trial_in, load_corpus,
    synthetic_haystack, AdversarialTrial, Corpus, NeedleSpec,
};
pub use passkey::{gen_passkey_context, passkey_context_text, random_passkey, PasskeySpec};
pub use report::{read_jsonl, render_table, write_jsonl};

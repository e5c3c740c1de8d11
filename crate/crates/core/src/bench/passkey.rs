//! Passkey retrieval context: a preamble, filler repeated `x` times, the
//! passkey sentences, filler repeated `y` times, a question, and the query
//! "The pass key is".

use rand::Rng;

use crate::error::{Error, Result};
use crate::keys::KeyMode;
use crate::pipeline::Episode;

pub const PREAMBLE: &str = "There is an important info hidden inside a lot of irrelevant text. \
Find it and memorize them. I will quiz you about the important information there.";
pub const FILLER: &str =
    "The grass is green. The sky is blue. The sun is yellow. Here we go. There and back again.";
pub const QUESTION: &str = "What is the pass key?";
pub const QUERY: &str = "The pass key is";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PasskeySpec {
    pub passkey: String,
    pub x_repeats: usize,
    pub y_repeats: usize,
}

impl PasskeySpec {
    pub fn new(passkey: &str, x_repeats: usize, y_repeats: usize) -> Result<Self> {
        validate_passkey(passkey)?;
        Ok(PasskeySpec { passkey: passkey.to_string(), x_repeats, y_repeats })
    }

    /// Picks filler repeats so the context reaches at least `target_tokens`
    /// whitespace tokens, split evenly before and after the passkey.
    pub fn with_target_tokens(passkey: &str, target_tokens: usize) -> Result<Self> {
        validate_passkey(passkey)?;
        let base = PasskeySpec::new(passkey, 0, 0)?.token_count();
        let filler = word_count(FILLER);
        let repeats = target_tokens.saturating_sub(base).div_ceil(filler);
        PasskeySpec::new(passkey, repeats.div_ceil(2), repeats / 2)
    }

    fn passkey_sentences(&self) -> String {
        format!("The pass key is {0}. Remember it. {0} is the pass key.", self.passkey)
    }

    /// Whitespace tokens in the full context text including the query.
    pub fn token_count(&self) -> usize {
        word_count(PREAMBLE)
            + word_count(FILLER) * (self.x_repeats + self.y_repeats)
            + word_count(&self.passkey_sentences())
            + word_count(QUESTION)
            + word_count(QUERY)
    }
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

fn validate_passkey(passkey: &str) -> Result<()> {
    let ok = (3..=8).contains(&passkey.len()) && passkey.bytes().all(|b| b.is_ascii_digit());
    if !ok {
        return Err(Error::input(format!("passkey {passkey:?} must be 3 to 8 digits")));
    }
    Ok(())
}

/// Uniform random passkey with exactly `digits` digits and no leading zero.
pub fn random_passkey<R: Rng + ?Sized>(rng: &mut R, digits: u32) -> Result<String> {
    if !(3..=8).contains(&digits) {
        return Err(Error::input(format!("passkey digit count {digits} outside 3..=8")));
    }
    let lo = 10u64.pow(digits - 1);
    Ok(rng.random_range(lo..lo * 10).to_string())
}

/// The complete context text, ending with the query.
pub fn passkey_context_text(spec: &PasskeySpec) -> String {
    let mut body = context_body(spec);
    body.push(' ');
    body.push_str(QUERY);
    body
}

fn context_body(spec: &PasskeySpec) -> String {
    let filler_len = FILLER.len() + 1;
    let mut text = String::with_capacity(
        PREAMBLE.len() + filler_len * (spec.x_repeats + spec.y_repeats) + 128,
    );
    text.push_str(PREAMBLE);
    for _ in 0..spec.x_repeats {
        text.push(' ');
        text.push_str(FILLER);
    }
    text.push(' ');
    text.push_str(&spec.passkey_sentences());
    for _ in 0..spec.y_repeats {
        text.push(' ');
        text.push_str(FILLER);
    }
    text.push(' ');
    text.push_str(QUESTION);
    text
}

/// Episode over the passkey context, keyed by four-word prefixes. Use
/// [`Episode::with_key_mode`] for other modes.
pub fn gen_passkey_context(spec: &PasskeySpec) -> Result<Episode> {
    validate_passkey(&spec.passkey)?;
    Episode::from_context(&context_body(spec), QUERY, KeyMode::default())
}

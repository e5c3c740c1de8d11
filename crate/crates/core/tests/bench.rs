mod common;

use std::fs;

use assocmem::bench::{
    gen_needle_trial, gen_needle_trial_in, gen_passkey_context, lcs_len, read_jsonl,
    rouge_tokens, run_grid, score_exact, score_rouge_l_recall, synthetic_haystack, write_jsonl,
    Corpus, GridConfig, Haystack, NeedleKind, NeedleSpec, PasskeySpec, Positions,
};
use assocmem::bench::needle::{load_corpus, SF_EXPECTED, SF_NEEDLE};
use assocmem::keys::KeyMode;
use assocmem::{run_episode, Codec, Error};
use common::{bits, lcs_dp};
use proptest::prelude::*;

#[test]
fn target_tokens_within_one_percent() {
    for target in [10_000usize, 128_000, 1_200_057] {
        let spec = PasskeySpec::with_target_tokens("90210", target).unwrap();
        let got = spec.token_count();
        assert!(got >= target);
        assert!((got - target) as f64 / target as f64 <= 0.01, "{got} vs {target}");
        let ep = gen_passkey_context(&spec).unwrap();
        assert_eq!(ep.context_tokens(), got);
    }
}

#[test]
fn passkey_recall_exact() {
    let codec = Codec::with_seed(11);
    for key in ["123", "40404", "98765432"] {
        let spec = PasskeySpec::with_target_tokens(key, 20_000).unwrap();
        let r = run_episode(&gen_passkey_context(&spec).unwrap(), &codec).unwrap();
        assert!(score_exact(&r.decoded, key), "{}", r.decoded);
    }
}

#[test]
fn needle_first_and_last_decode_identically() {
    let codec = Codec::with_seed(12);
    let hay = synthetic_haystack(1000, 12).unwrap();
    let decode = |pos: f64| {
        let spec = NeedleSpec::magic_number("6021", pos, Corpus::Sentences(Vec::new()));
        let r = run_episode(&gen_needle_trial_in(&spec, &hay).unwrap(), &codec).unwrap();
        (r.decoded, bits(r.readout.as_slice()))
    };
    let first = decode(0.0);
    assert_eq!(first.0, "The magic number is 6021.");
    assert_eq!(decode(1.0), first);
}

#[test]
fn san_francisco_scores_full_rouge() {
    let codec = Codec::with_seed(13);
    let spec = NeedleSpec::san_francisco(0.4, Corpus::Synthetic { sentences: 300, seed: 13 });
    let r = run_episode(&gen_needle_trial(&spec).unwrap(), &codec).unwrap();
    assert_eq!(r.decoded, SF_NEEDLE);
    assert_eq!(score_rouge_l_recall(&r.decoded, SF_EXPECTED), 1.0);
}

#[test]
fn rouge_examples() {
    assert_eq!(score_rouge_l_recall("Dolores Park, sandwich", SF_EXPECTED), 2.0 / 12.0);
    assert_eq!(score_rouge_l_recall("anything", ""), 0.0);
    assert_eq!(score_rouge_l_recall("", "a b"), 0.0);
    assert_eq!(rouge_tokens("Eat, a SANDWICH!"), vec!["eat", "a", "sandwich"]);
}

#[test]
fn needle_spec_validation() {
    let empty = Corpus::Sentences(Vec::new());
    let mut spec = NeedleSpec::magic_number("1", 1.5, empty.clone());
    assert!(matches!(gen_needle_trial(&spec), Err(Error::Input(_))));
    spec.position_fraction = 0.5;
    assert!(matches!(gen_needle_trial(&spec), Err(Error::Io(_))));
}

#[test]
fn directory_corpus_loads_in_filename_order() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("b.txt"), "Second file sentence. Another one here.").unwrap();
    fs::write(dir.path().join("a.txt"), "First file sentence.").unwrap();
    let s = load_corpus(&Corpus::Directory(dir.path().into())).unwrap();
    assert_eq!(s, vec!["First file sentence.", "Second file sentence.", "Another one here."]);

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(load_corpus(&Corpus::Directory(empty.path().into())), Err(Error::Io(_))));
    let missing = empty.path().join("nope");
    assert!(matches!(load_corpus(&Corpus::Directory(missing)), Err(Error::Io(_))));
}

#[test]
fn prefix_recall_at_least_full_on_adversarial() {
    let mut cfg = GridConfig::needle(5, 20, vec![NeedleKind::Magic(4)], Haystack::Synthetic(300));
    cfg.adversarial = true;
    cfg.key_modes = vec![KeyMode::default(), KeyMode::Full];
    let reports = run_grid(&cfg).unwrap();
    assert_eq!(reports.len(), 2);
    let (prefix, full) = (&reports[0], &reports[1]);
    assert!(prefix.failures.is_empty() && full.failures.is_empty());
    assert_eq!(prefix.recall_rate, 1.0);
    assert!(prefix.recall_rate >= full.recall_rate);
    assert!(full.recall_rate < 1.0);
}

#[test]
fn grid_is_reproducible_and_accounts_for_trials() {
    let cfg = GridConfig::passkey(17, 6, vec![3, 8], vec![2000, 9000]);
    let a = run_grid(&cfg).unwrap();
    let b = run_grid(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 4);
    for r in &a {
        assert_eq!(r.trials + r.failures.len(), 6);
        assert_eq!(r.recall_rate, 1.0);
    }
    let mut out = Vec::new();
    write_jsonl(&mut out, &a).unwrap();
    assert_eq!(read_jsonl(std::str::from_utf8(&out).unwrap()).unwrap(), a);
}

#[test]
fn zero_trials_gives_no_reports() {
    let cfg = GridConfig::passkey(1, 0, vec![3], vec![1000]);
    assert!(run_grid(&cfg).unwrap().is_empty());
}

#[test]
fn needle_sweep_grid_scores_rouge() {
    let mut cfg = GridConfig::needle(3, 10, vec![NeedleKind::SanFrancisco], Haystack::Synthetic(500));
    cfg.positions = Positions::Sweep(5);
    let r = &run_grid(&cfg).unwrap()[0];
    assert_eq!(r.recall_rate, 1.0);
    assert_eq!(r.rouge_l, Some(1.0));
}

#[test]
fn toml_config_round_trip() {
    let cfg = GridConfig::from_toml_str(
        "protocol = \"needle\"\ntrials = 3\nneedles = [\"magic:5\", \"sf\"]\nsynthetic = 50\nposition = 0.25\n",
    )
    .unwrap();
    assert_eq!(cfg.positions, Positions::Fixed(0.25));
    assert_eq!(cfg.haystack, Haystack::Synthetic(50));
    assert_eq!(run_grid(&cfg).unwrap().len(), 2);
    for bad in ["protocol = \"passkey\"\ntrials = 1\n", "trials = 1\n", "protocol = \"x\"\ntrials = 1\n"] {
        assert!(matches!(GridConfig::from_toml_str(bad), Err(Error::Config(_))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bit_parallel_lcs_matches_dp(
        a in prop::collection::vec("[a-e]", 0..150),
        b in prop::collection::vec("[a-e]", 0..150),
    ) {
        prop_assert_eq!(lcs_len(&a, &b), lcs_dp(&a, &b));
    }

    #[test]
    fn rouge_recall_in_unit_interval(a in "[a-c ,.]{0,60}", b in "[a-c ,.]{0,60}") {
        let r = score_rouge_l_recall(&a, &b);
        prop_assert!((0.0..=1.0).contains(&r));
        if !rouge_tokens(&b).is_empty() {
            prop_assert_eq!(score_rouge_l_recall(&b, &b), 1.0);
        }
    }
}

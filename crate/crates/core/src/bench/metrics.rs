use std::collections::HashMap;

/// True iff `expected` occurs verbatim in `decoded`.
pub fn score_exact(decoded: &str, expected: &str) -> bool {
    !expected.is_empty() && decoded.contains(expected)
}

/// Lower-cased whitespace tokens with punctuation stripped from both ends.
/// Tokens that are pure punctuation disappear.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// rougeL recall: longest common token subsequence over the number of
/// expected tokens. An `expected` without tokens scores 0.
pub fn score_rouge_l_recall(decoded: &str, expected: &str) -> f64 {
    let target = rouge_tokens(expected);
    if target.is_empty() {
        return 0.0;
    }
    let response = rouge_tokens(decoded);
    lcs_len(&response, &target) as f64 / target.len() as f64
}

/// Length of the longest common subsequence, bit-parallel over positions of `b`
/// (Allison-Dix / Hyyro recurrence), O(|a| * |b| / 64).
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let m = b.len();
    if m == 0 || a.is_empty() {
        return 0;
    }
    let words = m.div_ceil(64);

    let mut masks: HashMap<&str, Vec<u64>> = HashMap::new();
    for (j, tok) in b.iter().enumerate() {
        masks.entry(tok.as_ref()).or_insert_with(|| vec![0; words])[j / 64] |= 1 << (j % 64);
    }

    // Zero bits of `v` mark matched positions.
    let mut v = vec![u64::MAX; words];
    for tok in a {
        let Some(mask) = masks.get(tok.as_ref()) else { continue };
        let mut carry = 0u64;
        for i in 0..words {
            let u = v[i] & mask[i];
            let (s1, c1) = v[i].overflowing_add(u);
            let (s2, c2) = s1.overflowing_add(carry);
            carry = (c1 || c2) as u64;
            v[i] = s2 | (v[i] & !mask[i]);
        }
    }

    let tail = m % 64;
    let zeros: usize = v
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let valid = if i + 1 == words && tail != 0 { (1u64 << tail) - 1 } else { u64::MAX };
            (!w & valid).count_ones() as usize
        })
        .sum();
    zeros
}

#[cfg(test)]
mod tests {
    use super::*;

    const SF: &str = "eat a sandwich and sit in Dolores Park on a sunny day.";

    #[test]
    fn exact_examples() {
        assert!(score_exact("The pass key is 9054.", "9054"));
        assert!(!score_exact("The pass key is 905.", "9054"));
        assert!(!score_exact("", "9054"));
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(score_rouge_l_recall(SF, SF), 1.0);
        assert_eq!(rouge_tokens(SF).len(), 12);
        assert_eq!(score_rouge_l_recall("eat a sandwich", SF), 0.25);
        assert_eq!(score_rouge_l_recall("completely unrelated words", SF), 0.0);
        assert_eq!(score_rouge_l_recall("anything", "..."), 0.0);
    }

    #[test]
    fn rouge_ignores_case_and_edge_punctuation() {
        assert_eq!(score_rouge_l_recall("EAT, a (Sandwich)!", "eat a sandwich"), 1.0);
        assert_eq!(rouge_tokens("don't -- stop."), vec!["don't", "stop"]);
    }

    #[test]
    fn lcs_across_word_boundary() {
        let b: Vec<String> = (0..130).map(|i| format!("t{}", i % 7)).collect();
        let a = b.clone();
        assert_eq!(lcs_len(&a, &b), 130);
        let rev: Vec<String> = b.iter().rev().cloned().collect();
        assert!(lcs_len(&rev, &b) < 130);
    }
}

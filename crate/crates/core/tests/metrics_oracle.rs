mod support;

use proptest::prelude::*;

use bioqa_core::metrics::{bleu, rouge_l, rouge_n, BLEU_MAX_ORDER};
use support::oracle;

const WORDS: [&str; 6] = ["the", "cat", "sat", "on", "mat", "dog"];

fn text() -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::sample::select(WORDS.to_vec()), 0..15).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn rouge_matches_oracle(c in text(), r in text()) {
        for n in 1..=3 {
            prop_assert!((rouge_n(&c, &r, n).0 - oracle::rouge_n(&c, &r, n)).abs() < 1e-9);
        }
        prop_assert!((rouge_l(&c, &r).0 - oracle::rouge_l(&c, &r)).abs() < 1e-9);
    }

    #[test]
    fn corpus_bleu_matches_oracle(pairs in proptest::collection::vec((text(), text()), 1..6)) {
        let (c, r): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
        let (score, _) = bleu(&c, &r, BLEU_MAX_ORDER).unwrap();
        prop_assert!((score.0 - oracle::bleu(&c, &r)).abs() < 1e-9, "{} vs {}", score.0, oracle::bleu(&c, &r));
    }
}

#[test]
fn punctuation_and_case_are_ignored() {
    let (c, r) = ("The CAT, sat.", "the cat sat");
    assert_eq!(rouge_n(c, r, 2).0, oracle::rouge_n(c, r, 2));
    assert_eq!(rouge_n(c, r, 2).0, 100.0);
}

#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// A random segment of up to `max_len` words over a `vocab`-word alphabet.
pub fn segment(rng: &mut impl Rng, vocab: usize, max_len: usize) -> String {
    const WORDS: [&str; 12] =
        ["alpha", "beta", "gamma", "delta", "omega", "kappa", "sigma", "theta", "zeta", "iota", "rho", "tau"];
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| *WORDS[..vocab].choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

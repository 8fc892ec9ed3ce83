//! Parsers must reject, never panic on, malformed input. Exercises every
//! untrusted-input entry point with the checked-in fuzz corpus seeds plus
//! deterministic mutations of them.

use std::path::PathBuf;

use densedet::checkpoint::parse_checkpoint;
use densedet::config::parse_run_config;
use densedet::data::format::{parse_features, parse_labels};
use densedet::data::manifest::parse_manifest;
use densedet::data::synthetic::parse_spec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn corpus_dir(target: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target)
}

fn corpus_seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = corpus_dir(target);
    let mut seeds = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap_or_else(|e| panic!("{dir:?}: {e}")) {
        seeds.push(std::fs::read(entry.unwrap().path()).unwrap());
    }
    assert!(!seeds.is_empty(), "no corpus seeds for {target}");
    seeds
}

/// Truncations, byte flips, and random garbage derived from each seed.
fn mutations(seed_data: &[u8], rng: &mut ChaCha20Rng) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for len in 0..seed_data.len().min(48) {
        out.push(seed_data[..len].to_vec());
    }
    for _ in 0..300 {
        let mut m = seed_data.to_vec();
        if m.is_empty() {
            continue;
        }
        for _ in 0..rng.gen_range(1..=4) {
            let idx = rng.gen_range(0..m.len());
            m[idx] = rng.gen();
        }
        out.push(m);
    }
    for _ in 0..50 {
        let n = rng.gen_range(0..512);
        out.push((0..n).map(|_| rng.gen()).collect());
    }
    out
}

fn exercise(target: &str, parse: impl Fn(&[u8])) {
    let mut rng = ChaCha20Rng::seed_from_u64(0xDAD);
    for seed_data in corpus_seeds(target) {
        parse(&seed_data);
        for m in mutations(&seed_data, &mut rng) {
            parse(&m);
        }
    }
}

#[test]
fn feature_parser_never_panics() {
    exercise("features", |bytes| {
        let _ = parse_features(bytes, "fuzz");
    });
}

#[test]
fn label_parser_never_panics() {
    exercise("labels", |bytes| {
        let _ = parse_labels(bytes);
    });
}

#[test]
fn manifest_parser_never_panics() {
    exercise("manifest", |bytes| {
        if let Ok(text) = std::str::from_utf8(bytes) {
            let _ = parse_manifest(text);
        }
    });
}

#[test]
fn run_config_parser_never_panics() {
    exercise("run_config", |bytes| {
        if let Ok(text) = std::str::from_utf8(bytes) {
            let _ = parse_run_config(text, None, None);
            let _ = parse_run_config(text, Some("paper"), Some(1));
        }
    });
}

#[test]
fn checkpoint_parser_never_panics() {
    exercise("checkpoint", |bytes| {
        let _ = parse_checkpoint(bytes);
    });
}

#[test]
fn synthetic_spec_parser_never_panics() {
    exercise("synthetic_spec", |bytes| {
        if let Ok(text) = std::str::from_utf8(bytes) {
            let _ = parse_spec(text);
        }
    });
}

#[test]
fn corpus_seeds_parse_cleanly() {
    // the checked-in seeds are valid examples of their formats
    for seed in corpus_seeds("features") {
        parse_features(&seed, "seed").unwrap();
    }
    for seed in corpus_seeds("labels") {
        parse_labels(&seed).unwrap();
    }
    for seed in corpus_seeds("manifest") {
        parse_manifest(std::str::from_utf8(&seed).unwrap()).unwrap();
    }
    for seed in corpus_seeds("run_config") {
        parse_run_config(std::str::from_utf8(&seed).unwrap(), None, None).unwrap();
    }
    for seed in corpus_seeds("checkpoint") {
        parse_checkpoint(&seed).unwrap();
    }
    for seed in corpus_seeds("synthetic_spec") {
        parse_spec(std::str::from_utf8(&seed).unwrap()).unwrap();
    }
}

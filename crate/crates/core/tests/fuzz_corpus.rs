//! Replays the fuzz seed corpora, plus deterministic mutations of each seed, through
//! the same checks the fuzz targets make.

use std::path::{Path, PathBuf};

use fragpes_core::config::PipelineConfig;
use fragpes_core::formats::*;
use fragpes_core::geometry::{assign_nodes, build_graph, parse_xyz, write_xyz};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

fn mutations(seed: &[u8], rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
    let mut out = vec![seed.to_vec()];
    if seed.is_empty() {
        return out;
    }
    const TOKENS: [&[u8]; 8] = [b"0", b"-1", b"1e308", b"NaN", b"\n", b"\t", b" ", b"18446744073709551616"];
    for _ in 0..200 {
        let mut m = seed.to_vec();
        for _ in 0..rng.random_range(1..4) {
            let at = rng.random_range(0..m.len().max(1));
            match rng.random_range(0..5) {
                0 => m.truncate(at),
                1 => {
                    let i = at.min(m.len() - 1);
                    m[i] ^= 1 << rng.random_range(0..7);
                }
                2 => {
                    let tok = TOKENS[rng.random_range(0..TOKENS.len())];
                    m.splice(at..at, tok.iter().copied());
                }
                3 => {
                    let end = (at + rng.random_range(1..16)).min(m.len());
                    m.drain(at..end);
                }
                _ => {
                    let end = (at + rng.random_range(1..64)).min(m.len());
                    let chunk = m[at..end].to_vec();
                    m.splice(at..at, chunk);
                }
            }
            if m.is_empty() {
                break;
            }
        }
        out.push(m);
    }
    out
}

fn replay(target: &str, check: impl Fn(&str)) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for (path, seed) in corpus(target) {
        for input in mutations(&seed, &mut rng) {
            let Ok(text) = std::str::from_utf8(&input) else {
                continue;
            };
            let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| check(text)));
            assert!(outcome.is_ok(), "{} mutation panicked:\n{text}", path.display());
        }
    }
}

#[test]
fn xyz_corpus() {
    replay("xyz", |text| {
        let Ok(frames) = parse_xyz(text) else {
            return;
        };
        let again = parse_xyz(&write_xyz(&frames)).unwrap();
        assert_eq!(frames.len(), again.len());
        for (a, b) in frames.iter().zip(&again) {
            assert_eq!(a.atoms, b.atoms);
        }
        for g in frames.iter().take(2).filter(|g| g.len() <= 64) {
            if let Ok(nodes) = assign_nodes(g, 1.4) {
                let _ = build_graph(g, nodes, 4.5).map(|graph| graph.with_max_rank(2));
            }
        }
    });
}

#[test]
fn config_corpus() {
    replay("config", |text| {
        if let Ok(cfg) = PipelineConfig::parse(text, Path::new(".")) {
            assert_eq!(cfg, PipelineConfig::parse(&cfg.to_toml(), Path::new(".")).unwrap());
        }
    });
}

#[test]
fn fragments_corpus() {
    replay("fragments", |text| {
        if let Ok(ds) = parse_fragments(text) {
            assert_eq!(ds, parse_fragments(&write_fragments(&ds)).unwrap());
        }
    });
}

#[test]
fn labels_corpus() {
    replay("labels", |text| {
        if let Ok(ds) = parse_labels(text) {
            assert_eq!(ds, parse_labels(&write_labels(&ds)).unwrap());
        }
    });
}

#[test]
fn model_corpus() {
    replay("model", |text| {
        if let Ok((header, array)) = parse_model(text) {
            assert_eq!((header.clone(), array.clone()), parse_model(&write_model(&array, &header)).unwrap());
            let _ = array.predict_features(&vec![1.0; array.features]);
        }
    });
}

#[test]
fn clusters_corpus() {
    replay("clusters", |text| {
        if let Ok(c) = parse_clusters(text) {
            assert_eq!(c, parse_clusters(&write_clusters(&c)).unwrap());
        }
    });
}

#[test]
fn manifest_corpus() {
    replay("manifest", |text| {
        if let Ok(m) = parse_manifest(text) {
            assert_eq!(m, parse_manifest(&write_manifest(&m)).unwrap());
        }
    });
}

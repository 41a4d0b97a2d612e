#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fragpes_core::config::{PipelineConfig, System};
use fragpes_core::geometry::{Atom, Element, Geometry};
use fragpes_core::pipeline;

/// Writes `text` as `config.toml` in `dir` and loads it.
pub fn config_in(dir: &Path, text: &str) -> PipelineConfig {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    PipelineConfig::load(&path).unwrap()
}

/// generate, fragment and label both systems.
pub fn prepare(cfg: &PipelineConfig) {
    pipeline::run_generate(cfg).unwrap();
    for system in [System::Primitive, System::Target] {
        pipeline::run_fragment(cfg, system).unwrap();
        pipeline::run_label(cfg, system).unwrap();
    }
}

/// Every file under `dir`, relative path to contents, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn water(origin: [f64; 3]) -> Vec<Atom> {
    let [x, y, z] = origin;
    vec![
        Atom::new(Element::O, [x, y, z]),
        Atom::new(Element::H, [x + 0.9572, y, z]),
        Atom::new(Element::H, [x - 0.24, y + 0.9266, z]),
    ]
}

pub fn waters(origins: &[[f64; 3]]) -> Geometry {
    Geometry::new(origins.iter().flat_map(|&o| water(o)).collect())
}

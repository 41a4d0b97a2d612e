#![no_main]

use fragpes_core::geometry::{assign_nodes, build_graph, parse_xyz, write_xyz};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(frames) = parse_xyz(text) else {
        return;
    };
    let again = parse_xyz(&write_xyz(&frames)).expect("written frames parse");
    assert_eq!(frames.len(), again.len());
    for (a, b) in frames.iter().zip(&again) {
        assert_eq!(a.atoms, b.atoms);
    }
    // graph building must reject or accept, never panic; keep it small
    for g in frames.iter().take(2).filter(|g| g.len() <= 64) {
        if let Ok(nodes) = assign_nodes(g, 1.4) {
            let _ = build_graph(g, nodes, 4.5).map(|graph| graph.with_max_rank(2));
        }
    }
});

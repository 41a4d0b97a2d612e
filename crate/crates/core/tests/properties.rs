mod common;

use std::collections::{BTreeMap, BTreeSet};

use fragpes_core::assembly::{assemble_exact, error_report, fragment_weights, histogram};
use fragpes_core::descriptor::{canonical_atom_order, canonical_frame, descriptor_of};
use fragpes_core::formats::*;
use fragpes_core::geometry::{
    assign_nodes, build_graph, parse_xyz, write_xyz, Atom, Element, FragGraph, Geometry,
};
use fragpes_core::sampling::*;
use nalgebra::{Rotation3, Vector3};
use ndarray::Array2;
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -50.0..50.0f64
}

fn atom() -> impl Strategy<Value = Atom> {
    (prop::bool::ANY, coord(), coord(), coord())
        .prop_map(|(o, x, y, z)| Atom::new(if o { Element::O } else { Element::H }, [x, y, z]))
}

/// Water molecules on a jittered grid so O-H assignment is unambiguous.
fn water_cluster(max: usize) -> impl Strategy<Value = Geometry> {
    prop::collection::vec((0..4i32, 0..4i32, 0..3i32, -0.3..0.3f64, -0.3..0.3f64), 1..max).prop_map(|cells| {
        let mut seen = BTreeSet::new();
        let origins: Vec<[f64; 3]> = cells
            .into_iter()
            .filter(|&(i, j, k, _, _)| seen.insert((i, j, k)))
            .map(|(i, j, k, dx, dy)| [3.0 * i as f64 + dx, 3.0 * j as f64 + dy, 3.0 * k as f64])
            .collect();
        common::waters(&origins)
    })
}

fn graph_of(g: &Geometry, oo: f64, rank: usize) -> FragGraph {
    let nodes = assign_nodes(g, 1.4).unwrap();
    build_graph(g, nodes, oo).unwrap().with_max_rank(rank)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-10.0..10.0f64, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn xyz_roundtrip(frames in prop::collection::vec(prop::collection::vec(atom(), 0..8), 0..4)) {
        let frames: Vec<Geometry> = frames.into_iter().map(Geometry::new).collect();
        let again = parse_xyz(&write_xyz(&frames)).unwrap();
        prop_assert_eq!(frames.len(), again.len());
        for (a, b) in frames.iter().zip(&again) {
            prop_assert_eq!(&a.atoms, &b.atoms);
        }
    }

    #[test]
    fn every_node_is_counted_once(g in water_cluster(14), oo in 2.5..7.0f64, rank in 0usize..4) {
        let graph = graph_of(&g, oo, rank);
        let mut coverage = vec![0i64; graph.node_count()];
        for (s, m) in graph.weighted_simplexes() {
            for &n in &s.node_ids {
                coverage[n] += m;
            }
        }
        prop_assert!(coverage.iter().all(|&c| c == 1), "{coverage:?}");
    }

    #[test]
    fn additive_energies_assemble_exactly(
        g in water_cluster(12),
        oo in 2.5..7.0f64,
        rank in 0usize..4,
        per_node in prop::collection::vec(-5.0..5.0f64, 48),
    ) {
        let graph = graph_of(&g, oo, rank);
        let energies: BTreeMap<Vec<usize>, f64> = graph
            .weighted_simplexes()
            .map(|(s, _)| (s.node_ids.clone(), s.node_ids.iter().map(|&n| per_node[n]).sum()))
            .collect();
        let expected: f64 = per_node[..graph.node_count()].iter().sum();
        let got = assemble_exact(&graph, &energies).unwrap();
        prop_assert!((got - expected).abs() < 1e-9 * (1.0 + expected.abs()));
    }

    #[test]
    fn simplexes_are_cliques(g in water_cluster(12), oo in 2.5..7.0f64, rank in 0usize..4) {
        let graph = graph_of(&g, oo, rank);
        for (r, set) in graph.simplex_sets.iter().enumerate() {
            prop_assert!(set.windows(2).all(|w| w[0].node_ids < w[1].node_ids));
            for s in set {
                prop_assert_eq!(s.rank, r);
                prop_assert_eq!(s.node_ids.len(), r + 1);
                for (i, &a) in s.node_ids.iter().enumerate() {
                    for &b in &s.node_ids[i + 1..] {
                        prop_assert!(graph.is_edge(a, b));
                    }
                }
            }
        }
    }

    #[test]
    fn descriptor_is_rigid_motion_invariant(
        g in water_cluster(4),
        axis in (-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64),
        angle in 0.0..std::f64::consts::TAU,
        shift in (coord(), coord(), coord()),
        perm_seed in any::<u64>(),
    ) {
        let frame = canonical_frame(&g).unwrap();
        let m = frame.moments;
        prop_assume!((m[1] - m[0]).abs() > 1e-2 * m[2] && (m[2] - m[1]).abs() > 1e-2 * m[2]);
        // The canonical order sorts by projection, so near-ties may legitimately swap.
        let proj: Vec<_> = canonical_atom_order(&g, &frame).iter().map(|&i| (g.atoms[i].mass, frame.project(&g.atoms[i].position)[0])).collect();
        prop_assume!(proj.windows(2).all(|w| w[0].0 != w[1].0 || (w[1].1 - w[0].1) > 1e-4));

        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(axis.0, axis.1, axis.2)), angle);
        let mut atoms: Vec<Atom> = g
            .atoms
            .iter()
            .map(|a| {
                let p = rot * Vector3::from(a.position);
                Atom::new(a.element, [p.x + shift.0, p.y + shift.1, p.z + shift.2])
            })
            .collect();
        let n = atoms.len();
        for i in (1..n).rev() {
            atoms.swap(i, (perm_seed.rotate_left(i as u32) % (i as u64 + 1)) as usize);
        }
        let a = descriptor_of(&g, "x").unwrap();
        let b = descriptor_of(&Geometry::new(atoms), "x").unwrap();
        let worst = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-8, "deviation {worst}");
    }

    #[test]
    fn weights_sum_to_one(items in prop::collection::vec((0usize..3, 0usize..4, -5i64..5), 1..40)) {
        let kinds = ["H2O", "H4O2", "H6O3"];
        let report = fragment_weights(items.iter().map(|&(k, r, m)| (kinds[k], r, m)));
        let total: i64 = items.iter().map(|i| i.2.abs()).sum();
        let sum_kinds: f64 = report.kinds.iter().map(|k| k.omega).sum();
        let sum_ranks: f64 = report.ranks.iter().sum();
        if total == 0 {
            prop_assert_eq!(sum_kinds, 0.0);
        } else {
            prop_assert!((sum_kinds - 1.0).abs() < 1e-12 && (sum_ranks - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_counts_every_value(values in prop::collection::vec(0.0..100.0f64, 0..60), width in 0.01..10.0f64) {
        let h = histogram(&values, width).unwrap();
        prop_assert_eq!(h.iter().map(|b| b.1).sum::<usize>(), values.len());
        for v in &values {
            let bin = h.iter().rposition(|b| b.0 <= *v + 1e-12).unwrap();
            prop_assert!(h[bin].1 > 0);
        }
    }

    #[test]
    fn error_report_mae_bounds(pairs in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 1..50)) {
        let (p, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let rep = error_report(&p, &r, 0.5).unwrap();
        prop_assert!(rep.mae >= 0.0 && rep.mae <= rep.max_error + 1e-12);
        prop_assert_eq!(rep.count, p.len());
    }

    #[test]
    fn slice_index_brackets_distance(d in 0.0..1e3f64, width in 1e-3..10.0f64, e in 0.0..10.0f64) {
        let s = slice_index(d, width);
        prop_assert!(s >= 1);
        prop_assert!(d <= s as f64 * width * (1.0 + 1e-12));
        if s > 1 {
            prop_assert!(d > (s - 1) as f64 * width * (1.0 - 1e-12));
        }
        prop_assert!(slice_index(d + e, width) >= s);
    }

    #[test]
    fn kmeans_assigns_nearest_centroid(data in matrix(40, 3), k in 1usize..8, seed in any::<u64>()) {
        let model = minibatch_kmeans(data.view(), &KMeansParams { k, batch_size: 8, max_iter: 50, seed }).unwrap();
        prop_assert_eq!(model.assignments.len(), 40);
        prop_assert_eq!(model.cluster_sizes.iter().sum::<usize>(), 40);
        for (i, &c) in model.assignments.iter().enumerate() {
            let (best, d2) = nearest(data.row(i), model.centroids.view());
            let own: f64 = data.row(i).iter().zip(model.centroids.row(c)).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!(best == c || (own - d2).abs() < 1e-12);
        }
        let picked = select_training_points(data.view(), model.centroids.view());
        prop_assert!(picked.windows(2).all(|w| w[0] < w[1]) && picked.len() <= k);
    }

    #[test]
    fn recursive_clusters_partition_and_pass(data in matrix(60, 2), eta0 in 0.5..20.0f64, seed in any::<u64>()) {
        let params = RecursiveParams { eta0, inertia_factor: INERTIA_FACTOR, batch_size: 16, max_iter: 50, seed };
        let res = recursive_slice_clustering(2, data.view(), &params).unwrap();
        let mut all: Vec<usize> = res.clusters.iter().flat_map(|c| c.members.clone()).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..60).collect::<Vec<_>>());
        for c in &res.clusters {
            prop_assert!(c.eta <= INERTIA_FACTOR * eta0 || c.members.len() == 1);
        }
        prop_assert!(res.training_indices.len() <= res.clusters.len());
    }

    #[test]
    fn manifest_roundtrip(entries in prop::collection::vec(
        ("[A-Z][a-z0-9]{0,6}", any::<u64>(), 0usize..100, 0usize..10_000, 0usize..1000, 0.0..1e3f64, 0.0..1e3f64, prop::collection::btree_set(2usize..20, 0..4)),
        0..6,
    )) {
        let m = Manifest {
            header: Header::new("manifest").with("config_hash", "0123456789abcdef"),
            entries: entries
                .into_iter()
                .map(|(kind, seed, features, samples, train_samples, train_mae, full_mae, slices)| ManifestEntry {
                    kind, seed, features, samples, train_samples, train_mae, full_mae,
                    slices_consumed: slices.into_iter().collect(),
                })
                .collect(),
        };
        prop_assert_eq!(&m, &parse_manifest(&write_manifest(&m)).unwrap());
    }

    #[test]
    fn clusters_roundtrip(centroids in matrix(5, 3), width in 0.0..10.0f64, eta0 in 0.0..10.0f64, seed in any::<u64>(), training in prop::collection::btree_set(0usize..1000, 0..20)) {
        let c = ClusterFile {
            header: Header::new("clusters").with("config_hash", "00ff"),
            kind: "H4O2".into(),
            tessellation: Tessellation { centroids, width, eta0, seed },
            training: training.into_iter().collect(),
        };
        prop_assert_eq!(&c, &parse_clusters(&write_clusters(&c)).unwrap());
    }

    #[test]
    fn labels_roundtrip(records in prop::collection::vec(
        (0usize..50, 0usize..3, -3i64..4, -1e4..1e4f64, prop::collection::vec(0.5..20.0f64, 3)),
        0..10,
    )) {
        let ds = LabelDataset {
            header: Header::new("labels"),
            records: records
                .into_iter()
                .map(|(frame, rank, multiplicity, delta, descriptor)| LabelRecord {
                    kind: "H2O".into(),
                    frame,
                    rank,
                    node_ids: (0..=rank).collect(),
                    multiplicity,
                    delta,
                    descriptor,
                })
                .collect(),
        };
        prop_assert_eq!(&ds, &parse_labels(&write_labels(&ds)).unwrap());
    }

    #[test]
    fn fragments_roundtrip(g in water_cluster(4), frame in 0usize..100, multiplicity in -3i64..4) {
        let mut geometry = g.clone();
        geometry.frame_id = Some(frame);
        let rank = g.len() / 3 - 1;
        let ds = FragmentDataset {
            header: Header::new("fragments"),
            records: vec![FragmentRecord {
                frame,
                rank,
                node_ids: (0..=rank).collect(),
                kind: "x".into(),
                multiplicity,
                geometry,
            }],
        };
        prop_assert_eq!(&ds, &parse_fragments(&write_fragments(&ds)).unwrap());
    }
}

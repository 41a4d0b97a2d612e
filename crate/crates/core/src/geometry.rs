//! Molecular geometries, molecular-unit nodes and the fragmentation graph.
//!
//! A [`FragGraph`] holds the nodes of a system (one oxygen-centred unit each),
//! the edges given by an oxygen-oxygen distance cutoff, every clique of the edge
//! graph up to a maximum rank, and the signed inclusion-exclusion multiplicity of
//! each clique in the truncated many-body energy expression.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::linalg::{distance, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("frame {frame}: expected {expected} atoms, found {found}")]
    CountMismatch {
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unknown element symbol `{symbol}`")]
    UnknownElement { line: usize, symbol: String },
    #[error("atom {index}: element {symbol} is not supported for node assignment (only O and H)")]
    UnsupportedElement { index: usize, symbol: String },
    #[error("hydrogen atom {index} has no oxygen within {cutoff} Å")]
    OrphanHydrogen { index: usize, cutoff: f64 },
    #[error("cutoff must be positive and finite, got {0}")]
    InvalidCutoff(f64),
    #[error("simplex references node {0} which does not exist")]
    InvalidNode(usize),
}

/// Chemical element, identified by atomic number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(u8);

// (symbol, standard atomic weight in amu)
const ELEMENTS: [(&str, f64); 36] = [
    ("H", 1.008),
    ("He", 4.0026),
    ("Li", 6.94),
    ("Be", 9.0122),
    ("B", 10.81),
    ("C", 12.011),
    ("N", 14.007),
    ("O", 15.999),
    ("F", 18.998),
    ("Ne", 20.180),
    ("Na", 22.990),
    ("Mg", 24.305),
    ("Al", 26.982),
    ("Si", 28.085),
    ("P", 30.974),
    ("S", 32.06),
    ("Cl", 35.45),
    ("Ar", 39.948),
    ("K", 39.098),
    ("Ca", 40.078),
    ("Sc", 44.956),
    ("Ti", 47.867),
    ("V", 50.942),
    ("Cr", 51.996),
    ("Mn", 54.938),
    ("Fe", 55.845),
    ("Co", 58.933),
    ("Ni", 58.693),
    ("Cu", 63.546),
    ("Zn", 65.38),
    ("Ga", 69.723),
    ("Ge", 72.630),
    ("As", 74.922),
    ("Se", 78.971),
    ("Br", 79.904),
    ("Kr", 83.798),
];

impl Element {
    pub const H: Element = Element(1);
    pub const O: Element = Element(8);

    /// Looks up a symbol; the case of the input is normalised (`o`, `O` and `O ` all map to oxygen).
    pub fn from_symbol(symbol: &str) -> Option<Element> {
        let symbol = symbol.trim();
        let mut chars = symbol.chars();
        let first = chars.next()?.to_ascii_uppercase();
        let normalized: String = std::iter::once(first)
            .chain(chars.map(|c| c.to_ascii_lowercase()))
            .collect();
        ELEMENTS
            .iter()
            .position(|(s, _)| *s == normalized)
            .map(|i| Element(i as u8 + 1))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        ELEMENTS[self.0 as usize - 1].0
    }

    pub fn mass(self) -> f64 {
        ELEMENTS[self.0 as usize - 1].1
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub element: Element,
    /// amu
    pub mass: f64,
    /// Å
    pub position: Vec3,
}

impl Atom {
    pub fn new(element: Element, position: Vec3) -> Self {
        Atom {
            element,
            mass: element.mass(),
            position,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Geometry {
    pub atoms: Vec<Atom>,
    pub frame_id: Option<usize>,
}

impl Geometry {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Geometry {
            atoms,
            frame_id: None,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Number of electrons of the neutral atoms minus `charge`.
    pub fn electron_count(&self, charge: i32) -> i64 {
        let z: i64 = self.atoms.iter().map(|a| a.element.atomic_number() as i64).sum();
        z - charge as i64
    }
}

/// Parses one or more concatenated XYZ frames. Frames are numbered from 0 in input order.
pub fn parse_xyz(text: &str) -> Result<Vec<Geometry>, GeometryError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let header = lines[i].trim();
        if header.is_empty() {
            i += 1;
            continue;
        }
        let frame = frames.len();
        let expected: usize = header.parse().map_err(|_| GeometryError::Parse {
            line: i + 1,
            msg: format!("expected an atom count, found `{header}`"),
        })?;
        // comment line
        i += 2;
        let mut atoms = Vec::with_capacity(expected.min(lines.len()));
        while atoms.len() < expected {
            let Some(line) = lines.get(i) else {
                return Err(GeometryError::CountMismatch {
                    frame,
                    expected,
                    found: atoms.len(),
                });
            };
            atoms.push(parse_atom_line(line, i + 1)?);
            i += 1;
        }
        frames.push(Geometry {
            atoms,
            frame_id: Some(frame),
        });
    }
    Ok(frames)
}

fn parse_atom_line(line: &str, lineno: usize) -> Result<Atom, GeometryError> {
    let mut fields = line.split_whitespace();
    let symbol = fields.next().ok_or_else(|| GeometryError::Parse {
        line: lineno,
        msg: "empty atom line".into(),
    })?;
    let element = Element::from_symbol(symbol).ok_or_else(|| GeometryError::UnknownElement {
        line: lineno,
        symbol: symbol.to_string(),
    })?;
    let mut position = [0.0; 3];
    for coord in position.iter_mut() {
        let field = fields.next().ok_or_else(|| GeometryError::Parse {
            line: lineno,
            msg: "atom line needs three coordinates".into(),
        })?;
        *coord = match field.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                return Err(GeometryError::Parse {
                    line: lineno,
                    msg: format!("non-numeric coordinate `{field}`"),
                })
            }
        };
    }
    Ok(Atom::new(element, position))
}

/// Writes frames in XYZ format; the comment line carries the frame id.
pub fn write_xyz(frames: &[Geometry]) -> String {
    let mut out = String::new();
    for (i, g) in frames.iter().enumerate() {
        out.push_str(&format!("{}\n", g.len()));
        out.push_str(&format!("frame {}\n", g.frame_id.unwrap_or(i)));
        for atom in &g.atoms {
            let [x, y, z] = atom.position;
            out.push_str(&format!("{} {x} {y} {z}\n", atom.element));
        }
    }
    out
}

/// Hydrogen/oxygen composition of a node or fragment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Composition {
    pub hydrogens: usize,
    pub oxygens: usize,
}

impl Composition {
    /// Formal charge of a protonated/deprotonated water unit: #H - 2 #O.
    pub fn charge(&self) -> i32 {
        self.hydrogens as i32 - 2 * self.oxygens as i32
    }

    /// Hill-order formula with the charge as a run of `+` or `-` signs, e.g. `H5O2+`.
    pub fn formula(&self) -> String {
        let mut s = String::new();
        for (symbol, n) in [("H", self.hydrogens), ("O", self.oxygens)] {
            match n {
                0 => {}
                1 => s.push_str(symbol),
                n => s.push_str(&format!("{symbol}{n}")),
            }
        }
        let q = self.charge();
        let sign = if q > 0 { '+' } else { '-' };
        s.extend(std::iter::repeat_n(sign, q.unsigned_abs() as usize));
        s
    }
}

impl std::ops::Add for Composition {
    type Output = Composition;
    fn add(self, rhs: Composition) -> Composition {
        Composition {
            hydrogens: self.hydrogens + rhs.hydrogens,
            oxygens: self.oxygens + rhs.oxygens,
        }
    }
}

/// A rank-0 unit: one oxygen with the hydrogens bonded to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    /// Sorted indices into the parent geometry.
    pub atom_indices: Vec<usize>,
    pub kind: String,
    pub charge: i32,
    pub composition: Composition,
}

/// Groups each oxygen with the hydrogens nearest to it.
///
/// A hydrogen joins the strictly nearest oxygen within `oh_cutoff`; an exact tie goes
/// to the oxygen with the lower atom index. Nodes come out in oxygen-index order.
pub fn assign_nodes(g: &Geometry, oh_cutoff: f64) -> Result<Vec<Node>, GeometryError> {
    if !(oh_cutoff > 0.0 && oh_cutoff.is_finite()) {
        return Err(GeometryError::InvalidCutoff(oh_cutoff));
    }
    let mut oxygens = Vec::new();
    let mut hydrogens = Vec::new();
    for (i, atom) in g.atoms.iter().enumerate() {
        match atom.element {
            Element::O => oxygens.push(i),
            Element::H => hydrogens.push(i),
            other => {
                return Err(GeometryError::UnsupportedElement {
                    index: i,
                    symbol: other.symbol().to_string(),
                })
            }
        }
    }
    let mut members: Vec<Vec<usize>> = oxygens.iter().map(|&o| vec![o]).collect();
    for &h in &hydrogens {
        let mut best: Option<(usize, f64)> = None;
        for (slot, &o) in oxygens.iter().enumerate() {
            let d = distance(&g.atoms[h].position, &g.atoms[o].position);
            if d <= oh_cutoff && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((slot, d));
            }
        }
        match best {
            Some((slot, _)) => members[slot].push(h),
            None => {
                return Err(GeometryError::OrphanHydrogen {
                    index: h,
                    cutoff: oh_cutoff,
                })
            }
        }
    }
    Ok(members
        .into_iter()
        .map(|mut atom_indices| {
            atom_indices.sort_unstable();
            let composition = Composition {
                hydrogens: atom_indices.len() - 1,
                oxygens: 1,
            };
            Node {
                atom_indices,
                kind: composition.formula(),
                charge: composition.charge(),
                composition,
            }
        })
        .collect())
}

/// An (r+1)-clique of nodes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Simplex {
    pub rank: usize,
    /// Sorted node ids; this tuple is the simplex identity.
    pub node_ids: Vec<usize>,
    pub kind: String,
}

impl Simplex {
    fn from_nodes(node_ids: Vec<usize>, nodes: &[Node]) -> Simplex {
        let composition = node_ids
            .iter()
            .fold(Composition::default(), |acc, &n| acc + nodes[n].composition);
        Simplex {
            rank: node_ids.len() - 1,
            node_ids,
            kind: composition.formula(),
        }
    }

    pub fn contains_node(&self, node: usize) -> bool {
        self.node_ids.binary_search(&node).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FragGraph {
    pub nodes: Vec<Node>,
    /// `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// `simplex_sets[r]` holds every rank-r simplex, lexicographically sorted.
    pub simplex_sets: Vec<Vec<Simplex>>,
    pub max_rank: usize,
    /// Parallel to `simplex_sets`.
    pub multiplicities: Vec<Vec<i64>>,
}

impl FragGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_edge(&self, a: usize, b: usize) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.binary_search(&key).is_ok()
    }

    /// Re-enumerates simplexes and multiplicities for a new maximum rank.
    pub fn with_max_rank(mut self, max_rank: usize) -> FragGraph {
        self.simplex_sets = enumerate_simplexes(&self, max_rank);
        self.multiplicities = compute_multiplicities(&self.simplex_sets);
        self.max_rank = max_rank;
        self
    }

    /// Iterates `(simplex, multiplicity)` over all ranks.
    pub fn weighted_simplexes(&self) -> impl Iterator<Item = (&Simplex, i64)> {
        self.simplex_sets
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(set, ms)| set.iter().zip(ms.iter().copied()))
    }
}

/// Builds the node graph: nodes `i` and `j` share an edge iff the smallest O-O distance
/// between them is at most `oo_cutoff`. Ranks 0 and 1 are populated.
pub fn build_graph(
    g: &Geometry,
    nodes: Vec<Node>,
    oo_cutoff: f64,
) -> Result<FragGraph, GeometryError> {
    if !(oo_cutoff > 0.0 && oo_cutoff.is_finite()) {
        return Err(GeometryError::InvalidCutoff(oo_cutoff));
    }
    let oxygen_positions: Vec<Vec<Vec3>> = nodes
        .iter()
        .map(|n| {
            n.atom_indices
                .iter()
                .filter(|&&i| g.atoms[i].element == Element::O)
                .map(|&i| g.atoms[i].position)
                .collect()
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            let min = oxygen_positions[i]
                .iter()
                .flat_map(|a| oxygen_positions[j].iter().map(move |b| distance(a, b)))
                .fold(f64::INFINITY, f64::min);
            if min <= oo_cutoff {
                edges.push((i, j));
            }
        }
    }
    let graph = FragGraph {
        nodes,
        edges,
        simplex_sets: Vec::new(),
        max_rank: 0,
        multiplicities: Vec::new(),
    };
    Ok(graph.with_max_rank(1))
}

/// Every clique of the edge graph with at most `max_rank + 1` nodes, grouped by rank.
///
/// Cliques grow one node at a time, only ever adding a node id larger than the current
/// maximum member, so each clique is produced exactly once and in lexicographic order.
pub fn enumerate_simplexes(graph: &FragGraph, max_rank: usize) -> Vec<Vec<Simplex>> {
    let n = graph.nodes.len();
    let mut adjacent = vec![false; n * n];
    for &(a, b) in &graph.edges {
        adjacent[a * n + b] = true;
        adjacent[b * n + a] = true;
    }
    let mut sets: Vec<Vec<Simplex>> = Vec::with_capacity(max_rank + 1);
    sets.push(
        (0..n)
            .map(|i| Simplex::from_nodes(vec![i], &graph.nodes))
            .collect(),
    );
    for _rank in 1..=max_rank {
        let prev = sets.last().expect("rank 0 is always present");
        let mut next = Vec::new();
        for s in prev {
            let last = *s.node_ids.last().expect("simplexes are non-empty");
            for v in last + 1..n {
                if s.node_ids.iter().all(|&u| adjacent[u * n + v]) {
                    let mut ids = s.node_ids.clone();
                    ids.push(v);
                    next.push(Simplex::from_nodes(ids, &graph.nodes));
                }
            }
        }
        sets.push(next);
    }
    sets
}

/// Inclusion-exclusion multiplicities for simplex sets truncated at `sets.len() - 1`.
///
/// `M(a) = sum_{m >= r} (-1)^(m + r) p(a, m)` where `p(a, m)` counts the rank-m
/// simplexes that contain `a` (`p(a, r) = 1`).
pub fn compute_multiplicities(sets: &[Vec<Simplex>]) -> Vec<Vec<i64>> {
    let index: Vec<HashMap<&[usize], usize>> = sets
        .iter()
        .map(|set| {
            set.iter()
                .enumerate()
                .map(|(i, s)| (s.node_ids.as_slice(), i))
                .collect()
        })
        .collect();
    let mut result: Vec<Vec<i64>> = sets.iter().map(|set| vec![1; set.len()]).collect();
    let mut subset = Vec::new();
    for (m, set) in sets.iter().enumerate() {
        for big in set {
            // every proper sub-simplex of `big`, by rank
            for (r, counts) in result.iter_mut().enumerate().take(m) {
                let sign = if (m + r) % 2 == 0 { 1 } else { -1 };
                for_each_combination(&big.node_ids, r + 1, &mut subset, &mut |ids| {
                    let i = index[r][ids];
                    counts[i] += sign;
                });
            }
        }
    }
    result
}

fn for_each_combination(
    items: &[usize],
    size: usize,
    buf: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]),
) {
    fn rec(items: &[usize], start: usize, size: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if buf.len() == size {
            f(buf);
            return;
        }
        let needed = size - buf.len();
        for i in start..=items.len() - needed {
            buf.push(items[i]);
            rec(items, i + 1, size, buf, f);
            buf.pop();
        }
    }
    buf.clear();
    rec(items, 0, size, buf, f);
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FragmentSource {
    pub system: String,
    pub frame_id: Option<usize>,
}

/// Atoms of a simplex's node union, copied out of the parent geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Fragment {
    pub geometry: Geometry,
    pub simplex: Simplex,
    pub source: FragmentSource,
}

impl Fragment {
    pub fn kind(&self) -> &str {
        &self.simplex.kind
    }
}

/// Copies the atoms of every node in `simplex`, node by node, each node's atoms in
/// index order.
pub fn extract_fragment(
    g: &Geometry,
    simplex: &Simplex,
    nodes: &[Node],
    system: &str,
) -> Result<Fragment, GeometryError> {
    let mut atoms = Vec::new();
    for &n in &simplex.node_ids {
        let node = nodes.get(n).ok_or(GeometryError::InvalidNode(n))?;
        atoms.extend(node.atom_indices.iter().map(|&i| g.atoms[i].clone()));
    }
    Ok(Fragment {
        geometry: Geometry {
            atoms,
            frame_id: g.frame_id,
        },
        simplex: simplex.clone(),
        source: FragmentSource {
            system: system.to_string(),
            frame_id: g.frame_id,
        },
    })
}

/// Cutoffs controlling how a geometry is turned into a fragmentation graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FragmentationParams {
    pub oh_cutoff: f64,
    pub oo_cutoff: f64,
    pub max_rank: usize,
}

/// Node assignment, graph construction and simplex enumeration in one call.
pub fn fragment_graph(g: &Geometry, params: &FragmentationParams) -> Result<FragGraph, GeometryError> {
    let nodes = assign_nodes(g, params.oh_cutoff)?;
    Ok(build_graph(g, nodes, params.oo_cutoff)?.with_max_rank(params.max_rank))
}

/// All fragments of a graph paired with their multiplicities, rank by rank.
pub fn extract_all(
    g: &Geometry,
    graph: &FragGraph,
    system: &str,
) -> Result<Vec<(Fragment, i64)>, GeometryError> {
    graph
        .weighted_simplexes()
        .map(|(s, m)| Ok((extract_fragment(g, s, &graph.nodes, system)?, m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const WATER: &str = "3\n\nO 0 0 0\nH 0.96 0 0\nH -0.24 0.93 0\n";

    fn water_at(origin: Vec3) -> Vec<Atom> {
        let [x, y, z] = origin;
        vec![
            Atom::new(Element::O, [x, y, z]),
            Atom::new(Element::H, [x + 0.757, y + 0.586, z]),
            Atom::new(Element::H, [x - 0.757, y + 0.586, z]),
        ]
    }

    fn water_line(spacing: f64, count: usize) -> Geometry {
        Geometry::new(
            (0..count)
                .flat_map(|i| water_at([i as f64 * spacing, 0.0, 0.0]))
                .collect(),
        )
    }

    fn graph_from_edges(n: usize, edges: &[(usize, usize)], max_rank: usize) -> FragGraph {
        let nodes = (0..n)
            .map(|i| Node {
                atom_indices: vec![i],
                kind: "H2O".into(),
                charge: 0,
                composition: Composition {
                    hydrogens: 2,
                    oxygens: 1,
                },
            })
            .collect();
        let mut edges = edges.to_vec();
        edges.sort_unstable();
        FragGraph {
            nodes,
            edges,
            simplex_sets: vec![],
            max_rank: 0,
            multiplicities: vec![],
        }
        .with_max_rank(max_rank)
    }

    fn multiplicity_of(g: &FragGraph, ids: &[usize]) -> i64 {
        let r = ids.len() - 1;
        let i = g.simplex_sets[r]
            .iter()
            .position(|s| s.node_ids == ids)
            .unwrap();
        g.multiplicities[r][i]
    }

    #[test]
    fn parses_water_monomer() {
        let frames = parse_xyz(WATER).unwrap();
        assert_eq!(frames.len(), 1);
        let masses: Vec<f64> = frames[0].atoms.iter().map(|a| a.mass).collect();
        assert_eq!(masses, vec![15.999, 1.008, 1.008]);
        assert_eq!(frames[0].atoms[2].position, [-0.24, 0.93, 0.0]);
    }

    #[test]
    fn parses_empty_frame() {
        let frames = parse_xyz("0\n\n").unwrap();
        assert_eq!(frames.len(), 1);
        assert!(frames[0].is_empty());
    }

    #[test]
    fn parses_concatenated_frames() {
        let text = format!("{WATER}{WATER}");
        let frames = parse_xyz(&text).unwrap();
        let ids: Vec<_> = frames.iter().map(|f| f.frame_id).collect();
        assert_eq!(ids, vec![Some(0), Some(1)]);
    }

    #[test]
    fn xyz_errors() {
        assert!(matches!(
            parse_xyz("3\n\nO 0 0 0\n"),
            Err(GeometryError::CountMismatch { expected: 3, found: 1, .. })
        ));
        assert!(matches!(
            parse_xyz("1\n\nXx 0 0 0\n"),
            Err(GeometryError::UnknownElement { line: 3, .. })
        ));
        assert!(matches!(
            parse_xyz("1\n\nO 0 zero 0\n"),
            Err(GeometryError::Parse { line: 3, .. })
        ));
        assert!(matches!(parse_xyz("x\n"), Err(GeometryError::Parse { line: 1, .. })));
    }

    #[test]
    fn xyz_write_parse_roundtrip() {
        let g = water_line(2.8, 2);
        let back = parse_xyz(&write_xyz(std::slice::from_ref(&g))).unwrap();
        assert_eq!(back[0].atoms, g.atoms);
    }

    #[test]
    fn formulas_follow_hill_order_and_charge() {
        let f = |h, o| Composition { hydrogens: h, oxygens: o }.formula();
        assert_eq!(f(2, 1), "H2O");
        assert_eq!(f(3, 1), "H3O+");
        assert_eq!(f(4, 1), "H4O++");
        assert_eq!(f(1, 1), "HO-");
        assert_eq!(f(4, 2), "H4O2");
        assert_eq!(f(7, 3), "H7O3+");
    }

    #[test]
    fn monomer_is_one_neutral_node() {
        let g = &parse_xyz(WATER).unwrap()[0];
        let nodes = assign_nodes(g, 1.4).unwrap();
        assert_eq!(nodes.len(), 1);
        assert_eq!(nodes[0].kind, "H2O");
        assert_eq!(nodes[0].charge, 0);
        assert_eq!(nodes[0].atom_indices, vec![0, 1, 2]);
    }

    #[test]
    fn bridging_hydrogen_goes_to_nearer_oxygen() {
        // O at 0 and 2.39 Å; the bridging H sits at 1.19 Å from the first O and 1.20 Å
        // from the second (both inside the 1.4 Å cutoff).
        let mut atoms = vec![
            Atom::new(Element::O, [0.0, 0.0, 0.0]),
            Atom::new(Element::O, [2.39, 0.0, 0.0]),
            Atom::new(Element::H, [1.19, 0.0, 0.0]),
        ];
        atoms.push(Atom::new(Element::H, [-0.3, 0.93, 0.0]));
        atoms.push(Atom::new(Element::H, [-0.3, -0.93, 0.0]));
        atoms.push(Atom::new(Element::H, [2.69, 0.93, 0.0]));
        atoms.push(Atom::new(Element::H, [2.69, -0.93, 0.0]));
        let g = Geometry::new(atoms);
        let d0 = distance(&g.atoms[2].position, &g.atoms[0].position);
        let d1 = distance(&g.atoms[2].position, &g.atoms[1].position);
        assert!(d0 < d1 && d1 < 1.4);
        let nodes = assign_nodes(&g, 1.4).unwrap();
        let kinds: Vec<&str> = nodes.iter().map(|n| n.kind.as_str()).collect();
        assert_eq!(kinds, vec!["H3O+", "H2O"]);
        assert!(nodes[0].atom_indices.contains(&2));
    }

    #[test]
    fn equidistant_hydrogen_goes_to_lower_oxygen_index() {
        let g = Geometry::new(vec![
            Atom::new(Element::O, [0.0, 0.0, 0.0]),
            Atom::new(Element::H, [1.2, 0.0, 0.0]),
            Atom::new(Element::O, [2.4, 0.0, 0.0]),
        ]);
        let nodes = assign_nodes(&g, 1.4).unwrap();
        assert_eq!(nodes[0].atom_indices, vec![0, 1]);
        assert_eq!(nodes[1].atom_indices, vec![2]);
    }

    #[test]
    fn four_hydrogens_make_a_doubly_charged_node() {
        let g = Geometry::new(vec![
            Atom::new(Element::O, [0.0, 0.0, 0.0]),
            Atom::new(Element::H, [1.0, 0.0, 0.0]),
            Atom::new(Element::H, [-1.0, 0.0, 0.0]),
            Atom::new(Element::H, [0.0, 1.0, 0.0]),
            Atom::new(Element::H, [0.0, -1.0, 0.0]),
        ]);
        let nodes = assign_nodes(&g, 1.4).unwrap();
        assert_eq!(nodes[0].kind, "H4O++");
        assert_eq!(nodes[0].charge, 2);
    }

    #[test]
    fn node_assignment_errors() {
        let orphan = Geometry::new(vec![
            Atom::new(Element::O, [0.0, 0.0, 0.0]),
            Atom::new(Element::H, [2.0, 0.0, 0.0]),
        ]);
        assert!(matches!(
            assign_nodes(&orphan, 1.4),
            Err(GeometryError::OrphanHydrogen { index: 1, .. })
        ));
        let carbon = Geometry::new(vec![Atom::new(Element::from_symbol("C").unwrap(), [0.0; 3])]);
        assert!(matches!(
            assign_nodes(&carbon, 1.4),
            Err(GeometryError::UnsupportedElement { index: 0, .. })
        ));
        assert!(assign_nodes(&carbon, 0.0).is_err());
    }

    #[test]
    fn line_of_waters_edges_follow_cutoff() {
        let g = water_line(2.8, 3);
        let nodes = assign_nodes(&g, 1.4).unwrap();
        let graph = build_graph(&g, nodes.clone(), 4.5).unwrap();
        assert_eq!(graph.edges, vec![(0, 1), (1, 2)]);
        let graph = build_graph(&g, nodes, 7.5).unwrap();
        assert_eq!(graph.edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn single_node_graph() {
        let g = &parse_xyz(WATER).unwrap()[0];
        let graph = build_graph(g, assign_nodes(g, 1.4).unwrap(), 4.5).unwrap();
        assert_eq!(graph.node_count(), 1);
        assert!(graph.edges.is_empty());
        for r in 0..4 {
            let graph = graph.clone().with_max_rank(r);
            assert_eq!(graph.multiplicities[0], vec![1]);
        }
    }

    #[test]
    fn path_has_no_faces() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2)], 2);
        let sizes: Vec<usize> = g.simplex_sets.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 2, 0]);
    }

    #[test]
    fn triangle_has_one_face() {
        let g = graph_from_edges(3, &[(0, 1), (0, 2), (1, 2)], 2);
        assert_eq!(g.simplex_sets[2].len(), 1);
        assert_eq!(g.simplex_sets[2][0].node_ids, vec![0, 1, 2]);
    }

    #[test]
    fn complete_graph_on_four_nodes() {
        let edges: Vec<_> = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).collect();
        let g = graph_from_edges(4, &edges, 3);
        let sizes: Vec<usize> = g.simplex_sets.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 6, 4, 1]);
    }

    #[test]
    fn path_multiplicities() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2)], 1);
        assert_eq!(multiplicity_of(&g, &[0, 1]), 1);
        assert_eq!(multiplicity_of(&g, &[1, 2]), 1);
        assert_eq!(multiplicity_of(&g, &[0]), 0);
        assert_eq!(multiplicity_of(&g, &[1]), -1);
        assert_eq!(multiplicity_of(&g, &[2]), 0);
    }

    #[test]
    fn triangle_collapses_to_its_face() {
        let g = graph_from_edges(3, &[(0, 1), (0, 2), (1, 2)], 2);
        assert_eq!(g.multiplicities, vec![vec![0, 0, 0], vec![0, 0, 0], vec![1]]);
    }

    #[test]
    fn fragments_copy_node_atoms() {
        let g = water_line(2.8, 2);
        let graph = fragment_graph(
            &g,
            &FragmentationParams {
                oh_cutoff: 1.4,
                oo_cutoff: 4.5,
                max_rank: 1,
            },
        )
        .unwrap();
        let edge = &graph.simplex_sets[1][0];
        let frag = extract_fragment(&g, edge, &graph.nodes, "test").unwrap();
        assert_eq!(frag.kind(), "H4O2");
        assert_eq!(frag.geometry.len(), 6);
        assert_eq!(frag.geometry.atoms, g.atoms);
        let bad = Simplex {
            rank: 0,
            node_ids: vec![7],
            kind: "H2O".into(),
        };
        assert_eq!(
            extract_fragment(&g, &bad, &graph.nodes, "test"),
            Err(GeometryError::InvalidNode(7))
        );
    }

    #[test]
    fn hydronium_water_face_kind() {
        let mut atoms = water_at([0.0, 0.0, 0.0]);
        atoms.extend(water_at([2.8, 0.0, 0.0]));
        atoms.extend(water_at([1.4, 2.4, 0.0]));
        atoms.push(Atom::new(Element::H, [1.4, 2.4, 0.98]));
        let g = Geometry::new(atoms);
        let graph = fragment_graph(
            &g,
            &FragmentationParams {
                oh_cutoff: 1.4,
                oo_cutoff: 4.5,
                max_rank: 2,
            },
        )
        .unwrap();
        let face = &graph.simplex_sets[2][0];
        assert_eq!(face.kind, "H7O3+");
        let frag = extract_fragment(&g, face, &graph.nodes, "test").unwrap();
        assert_eq!(frag.geometry.len(), 10);
        let hydronium = &graph.simplex_sets[0][2];
        assert_eq!(hydronium.kind, "H3O+");
        assert_eq!(extract_fragment(&g, hydronium, &graph.nodes, "t").unwrap().geometry.len(), 4);
    }
}

//! Synthetic reference and target potentials used to label fragments.
//!
//! Both act on oxygen positions only. A pair term sums a Morse curve over O-O pairs;
//! an optional k-body term adds `amplitude * prod s(r_ij)` over every k-tuple of
//! oxygens, with the cosine switch `s(r) = (1 + cos(pi r / range)) / 2` for
//! `r < range` and 0 beyond.

use serde::{Deserialize, Serialize};

use crate::geometry::{Element, Geometry};
use crate::linalg::distance;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorseParams {
    /// Well depth, kcal/mol.
    pub depth: f64,
    /// Equilibrium distance, Å.
    pub r0: f64,
    /// Width, 1/Å.
    pub a: f64,
}

impl Default for MorseParams {
    fn default() -> Self {
        MorseParams {
            depth: 5.0,
            r0: 2.8,
            a: 1.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManyBodyParams {
    pub order: usize,
    /// kcal/mol
    pub amplitude: f64,
    /// Å
    pub range: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OraclePotential {
    pub pair: MorseParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub many_body: Option<ManyBodyParams>,
}

impl OraclePotential {
    pub fn pairwise(pair: MorseParams) -> Self {
        OraclePotential {
            pair,
            many_body: None,
        }
    }

    pub fn energy(&self, g: &Geometry) -> f64 {
        let centers = oxygen_positions(g);
        let mut e = pair_energy(&centers, &self.pair);
        if let Some(mb) = &self.many_body {
            e += many_body_energy(&centers, mb);
        }
        e
    }
}

/// Reference and target potentials; labels are target minus reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Oracle {
    pub reference: OraclePotential,
    pub target: OraclePotential,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle {
            reference: OraclePotential::pairwise(MorseParams::default()),
            target: OraclePotential {
                pair: MorseParams {
                    depth: 5.5,
                    r0: 2.75,
                    a: 1.6,
                },
                many_body: Some(ManyBodyParams {
                    order: 3,
                    amplitude: 1.0,
                    range: 5.0,
                }),
            },
        }
    }
}

impl Oracle {
    /// Target minus reference energy of a fragment geometry, kcal/mol.
    pub fn delta_label(&self, g: &Geometry) -> f64 {
        self.target.energy(g) - self.reference.energy(g)
    }
}

pub fn morse(r: f64, p: &MorseParams) -> f64 {
    let x = 1.0 - (-p.a * (r - p.r0)).exp();
    p.depth * (x * x - 1.0)
}

pub fn switching(r: f64, range: f64) -> f64 {
    if r < range {
        0.5 * (1.0 + (std::f64::consts::PI * r / range).cos())
    } else {
        0.0
    }
}

fn oxygen_positions(g: &Geometry) -> Vec<[f64; 3]> {
    g.atoms
        .iter()
        .filter(|a| a.element == Element::O)
        .map(|a| a.position)
        .collect()
}

fn pair_energy(centers: &[[f64; 3]], p: &MorseParams) -> f64 {
    let mut e = 0.0;
    for (i, a) in centers.iter().enumerate() {
        for b in &centers[i + 1..] {
            e += morse(distance(a, b), p);
        }
    }
    e
}

fn many_body_energy(centers: &[[f64; 3]], p: &ManyBodyParams) -> f64 {
    if p.order < 2 || p.amplitude == 0.0 || centers.len() < p.order {
        return 0.0;
    }
    let n = centers.len();
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = switching(distance(&centers[i], &centers[j]), p.range);
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    let mut total = 0.0;
    let mut tuple = Vec::with_capacity(p.order);
    accumulate_tuples(&s, n, p.order, 0, 1.0, &mut tuple, &mut total);
    p.amplitude * total
}

fn accumulate_tuples(
    s: &[f64],
    n: usize,
    order: usize,
    start: usize,
    product: f64,
    tuple: &mut Vec<usize>,
    total: &mut f64,
) {
    if tuple.len() == order {
        *total += product;
        return;
    }
    for next in start..n {
        let mut p = product;
        for &t in tuple.iter() {
            p *= s[t * n + next];
        }
        if p == 0.0 {
            continue;
        }
        tuple.push(next);
        accumulate_tuples(s, n, order, next + 1, p, tuple, total);
        tuple.pop();
    }
}

/// Morse sum over all O-O pairs.
pub fn pair_potential_energy(g: &Geometry, p: &MorseParams) -> f64 {
    pair_energy(&oxygen_positions(g), p)
}

/// Pair energy plus the k-body switching term.
pub fn manybody_potential_energy(g: &Geometry, pair: &MorseParams, many_body: &ManyBodyParams) -> f64 {
    let centers = oxygen_positions(g);
    pair_energy(&centers, pair) + many_body_energy(&centers, many_body)
}

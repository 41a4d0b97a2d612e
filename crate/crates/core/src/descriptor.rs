//! Translation-, rotation- and permutation-invariant fragment descriptors.
//!
//! A fragment is expressed in its principal-axes frame, atoms are put in a canonical
//! order (mass, then projection on the smallest-moment axis, then the next axis), and
//! the upper triangle of the resulting distance matrix is flattened row by row.

use thiserror::Error;

use crate::geometry::{Fragment, Geometry};
use crate::linalg::{distance, dot, sub, symmetric_eigen, Mat3, Vec3};

/// Relative gap below which two principal moments count as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;
/// Third moments smaller than this fall back to the heaviest-atom sign rule.
const THIRD_MOMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("a descriptor needs at least 2 atoms, fragment has {0}")]
    TooFewAtoms(usize),
    #[error("atoms {0} and {1} coincide")]
    CoincidentAtoms(usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalFrame {
    /// Centre of mass, Å.
    pub origin: Vec3,
    /// Orthonormal principal axes ordered by ascending |moment|.
    pub axes: [Vec3; 3],
    /// amu Å²
    pub moments: [f64; 3],
    /// Two moments agree within [`DEGENERACY_TOLERANCE`]; the axes inside that
    /// eigenspace are then arbitrary.
    pub degenerate: bool,
}

impl CanonicalFrame {
    pub fn project(&self, position: &Vec3) -> Vec3 {
        let r = sub(position, &self.origin);
        [dot(&r, &self.axes[0]), dot(&r, &self.axes[1]), dot(&r, &self.axes[2])]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorVector {
    pub kind: String,
    /// n(n-1)/2 distances in Å, upper triangle, row-major, canonical atom order.
    pub values: Vec<f64>,
    pub degenerate: bool,
}

impl DescriptorVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn distance_to(&self, other: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Number of descriptor entries for an `n`-atom fragment.
pub fn descriptor_len(n_atoms: usize) -> usize {
    n_atoms * n_atoms.saturating_sub(1) / 2
}

/// Inverse of [`descriptor_len`], if `len` is a triangular number.
pub fn atoms_for_descriptor_len(len: usize) -> Option<usize> {
    let n = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    (descriptor_len(n) == len).then_some(n)
}

/// Centre of mass and principal axes of inertia.
///
/// Each axis is oriented so the mass-weighted third moment of the atom projections
/// on it is non-negative. When that moment vanishes the projection of the heaviest
/// atom (lowest index among equals) is made non-negative instead.
pub fn canonical_frame(g: &Geometry) -> Result<CanonicalFrame, DescriptorError> {
    if g.len() < 2 {
        return Err(DescriptorError::TooFewAtoms(g.len()));
    }
    let total_mass: f64 = g.atoms.iter().map(|a| a.mass).sum();
    let mut origin = [0.0; 3];
    for atom in &g.atoms {
        for k in 0..3 {
            origin[k] += atom.mass * atom.position[k];
        }
    }
    for c in origin.iter_mut() {
        *c /= total_mass;
    }

    let mut inertia: Mat3 = [[0.0; 3]; 3];
    for atom in &g.atoms {
        let r = sub(&atom.position, &origin);
        let r2 = dot(&r, &r);
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { r2 } else { 0.0 };
                inertia[i][j] += atom.mass * (delta - r[i] * r[j]);
            }
        }
    }
    let (values, vectors) = symmetric_eigen(&inertia);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()));
    let moments = order.map(|i| values[i]);
    let mut axes = order.map(|i| vectors[i]);

    let heaviest = g
        .atoms
        .iter()
        .enumerate()
        .fold(0, |best, (i, a)| if a.mass > g.atoms[best].mass { i } else { best });
    for axis in axes.iter_mut() {
        let third: f64 = g
            .atoms
            .iter()
            .map(|a| a.mass * dot(&sub(&a.position, &origin), axis).powi(3))
            .sum();
        let flip = if third.abs() < THIRD_MOMENT_TOLERANCE {
            dot(&sub(&g.atoms[heaviest].position, &origin), axis) < 0.0
        } else {
            third < 0.0
        };
        if flip {
            *axis = axis.map(|c| -c);
        }
    }

    let scale = moments[2].abs().max(f64::MIN_POSITIVE);
    let degenerate = (moments[1].abs() - moments[0].abs()) < DEGENERACY_TOLERANCE * scale
        || (moments[2].abs() - moments[1].abs()) < DEGENERACY_TOLERANCE * scale;

    Ok(CanonicalFrame {
        origin,
        axes,
        moments,
        degenerate,
    })
}

/// Atom indices sorted by mass, then by projection on axes 1, 2 and 3, then by index.
pub fn canonical_atom_order(g: &Geometry, frame: &CanonicalFrame) -> Vec<usize> {
    let projections: Vec<Vec3> = g.atoms.iter().map(|a| frame.project(&a.position)).collect();
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| {
        g.atoms[a]
            .mass
            .total_cmp(&g.atoms[b].mass)
            .then(projections[a][0].total_cmp(&projections[b][0]))
            .then(projections[a][1].total_cmp(&projections[b][1]))
            .then(projections[a][2].total_cmp(&projections[b][2]))
            .then(a.cmp(&b))
    });
    order
}

/// Descriptor of a bare geometry labelled with `kind`.
pub fn descriptor_of(g: &Geometry, kind: &str) -> Result<DescriptorVector, DescriptorError> {
    let frame = canonical_frame(g)?;
    let order = canonical_atom_order(g, &frame);
    let mut values = Vec::with_capacity(descriptor_len(g.len()));
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            let d = distance(&g.atoms[a].position, &g.atoms[b].position);
            if d == 0.0 {
                return Err(DescriptorError::CoincidentAtoms(a.min(b), a.max(b)));
            }
            values.push(d);
        }
    }
    Ok(DescriptorVector {
        kind: kind.to_string(),
        values,
        degenerate: frame.degenerate,
    })
}

pub fn descriptor_vector(f: &Fragment) -> Result<DescriptorVector, DescriptorError> {
    descriptor_of(&f.geometry, f.kind())
}

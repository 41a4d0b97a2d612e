//! Full-system energies from multiplicity-weighted fragment corrections, plus error
//! decompositions, fragment significance weights and cost estimates.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::descriptor::{descriptor_vector, DescriptorError};
use crate::geometry::{extract_fragment, FragGraph, Fragment, Geometry, GeometryError};
use crate::model::{ModelError, NNArray};
use crate::oracle::Oracle;

pub const HARTREE_TO_KCAL_PER_MOL: f64 = 627.5094740631;

pub fn hartree_to_kcal(e: f64) -> f64 {
    e * HARTREE_TO_KCAL_PER_MOL
}

pub fn kcal_to_hartree(e: f64) -> f64 {
    e / HARTREE_TO_KCAL_PER_MOL
}

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("no energy for simplex {0:?}")]
    MissingEnergy(Vec<usize>),
    #[error("no model for fragment kind {0}")]
    UnknownKind(String),
    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cost estimate needs at least 3 atoms, got {0}")]
    TooFewAtoms(usize),
    #[error("histogram bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything that can supply a fragment energy correction.
pub trait DeltaModel: Sync {
    /// `Ok(None)` when the model does not cover the fragment's kind.
    fn predict_delta(&self, fragment: &Fragment) -> Result<Option<f64>, AssemblyError>;
}

/// Oracle corrections, used as the exact model.
impl DeltaModel for Oracle {
    fn predict_delta(&self, fragment: &Fragment) -> Result<Option<f64>, AssemblyError> {
        Ok(Some(self.delta_label(&fragment.geometry)))
    }
}

/// One trained array per fragment kind.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelBank {
    pub arrays: BTreeMap<String, NNArray>,
}

impl ModelBank {
    pub fn insert(&mut self, array: NNArray) {
        self.arrays.insert(array.kind.clone(), array);
    }

    pub fn get(&self, kind: &str) -> Option<&NNArray> {
        self.arrays.get(kind)
    }
}

impl DeltaModel for ModelBank {
    fn predict_delta(&self, fragment: &Fragment) -> Result<Option<f64>, AssemblyError> {
        let Some(array) = self.arrays.get(fragment.kind()) else {
            return Ok(None);
        };
        // a single-node fragment of one atom has no distances; its correction is the
        // array's response to an empty descriptor
        if fragment.geometry.len() < 2 {
            return Ok(Some(array.predict_features(&[])));
        }
        let v = descriptor_vector(fragment)?;
        Ok(Some(array.predict(&v)?))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UnknownKindPolicy {
    #[default]
    Error,
    /// Unknown kinds contribute 0 and are counted.
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexContribution {
    pub rank: usize,
    pub node_ids: Vec<usize>,
    pub kind: String,
    pub multiplicity: i64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyBreakdown {
    /// kcal/mol
    pub reference: f64,
    /// Simplexes with non-zero multiplicity, rank by rank.
    pub contributions: Vec<SimplexContribution>,
    /// `sum M * delta` per rank.
    pub rank_sums: Vec<f64>,
    pub total: f64,
    /// Contributions zero-filled because no model covered their kind.
    pub unknown_fragments: usize,
}

/// `sum M(alpha) E(alpha)` over every simplex of the graph, keyed by node ids.
pub fn assemble_exact(graph: &FragGraph, energies: &BTreeMap<Vec<usize>, f64>) -> Result<f64, AssemblyError> {
    let mut total = 0.0;
    for (simplex, m) in graph.weighted_simplexes() {
        let e = energies
            .get(&simplex.node_ids)
            .ok_or_else(|| AssemblyError::MissingEnergy(simplex.node_ids.clone()))?;
        total += m as f64 * e;
    }
    Ok(total)
}

/// `E_ref + sum M * dE` with each correction taken from `model`.
pub fn assemble_ml(
    reference: f64,
    g: &Geometry,
    graph: &FragGraph,
    model: &dyn DeltaModel,
    policy: UnknownKindPolicy,
    system: &str,
) -> Result<EnergyBreakdown, AssemblyError> {
    let mut contributions = Vec::new();
    let mut rank_sums = vec![0.0; graph.simplex_sets.len()];
    let mut unknown = 0;
    for (simplex, m) in graph.weighted_simplexes() {
        if m == 0 {
            continue;
        }
        let fragment = extract_fragment(g, simplex, &graph.nodes, system)?;
        let delta = match model.predict_delta(&fragment)? {
            Some(d) => d,
            None if policy == UnknownKindPolicy::Zero => {
                unknown += 1;
                0.0
            }
            None => return Err(AssemblyError::UnknownKind(simplex.kind.clone())),
        };
        rank_sums[simplex.rank] += m as f64 * delta;
        contributions.push(SimplexContribution {
            rank: simplex.rank,
            node_ids: simplex.node_ids.clone(),
            kind: simplex.kind.clone(),
            multiplicity: m,
            delta,
        });
    }
    let total = reference + rank_sums.iter().sum::<f64>();
    Ok(EnergyBreakdown {
        reference,
        contributions,
        rank_sums,
        total,
        unknown_fragments: unknown,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorDecomposition {
    /// `dE_ml - dE` per contribution.
    pub per_fragment: Vec<f64>,
    /// `sum M (dE_ml - dE)`.
    pub total: f64,
}

/// Splits the assembled ML error over fragments; `true_deltas` parallels
/// `breakdown.contributions`.
pub fn ml_error_decomposition(
    breakdown: &EnergyBreakdown,
    true_deltas: &[f64],
) -> Result<ErrorDecomposition, AssemblyError> {
    if true_deltas.len() != breakdown.contributions.len() {
        return Err(AssemblyError::LengthMismatch {
            left: breakdown.contributions.len(),
            right: true_deltas.len(),
        });
    }
    let per_fragment: Vec<f64> = breakdown
        .contributions
        .iter()
        .zip(true_deltas)
        .map(|(c, t)| c.delta - t)
        .collect();
    let total = breakdown
        .contributions
        .iter()
        .zip(&per_fragment)
        .map(|(c, e)| c.multiplicity as f64 * e)
        .sum();
    Ok(ErrorDecomposition { per_fragment, total })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KindWeight {
    pub kind: String,
    pub rank: usize,
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightReport {
    /// Sorted by rank, then kind.
    pub kinds: Vec<KindWeight>,
    /// Indexed by rank.
    pub ranks: Vec<f64>,
}

/// Share of `sum |M|` held by each (kind, rank) and by each rank.
///
/// Accepts `(kind, rank, M)` triples, possibly pooled over many frames. When every
/// multiplicity is zero all weights are reported as zero.
pub fn fragment_weights<'a>(items: impl IntoIterator<Item = (&'a str, usize, i64)>) -> WeightReport {
    let mut by_kind: BTreeMap<(usize, &str), u64> = BTreeMap::new();
    let mut by_rank: Vec<u64> = Vec::new();
    for (kind, rank, m) in items {
        *by_kind.entry((rank, kind)).or_default() += m.unsigned_abs();
        if by_rank.len() <= rank {
            by_rank.resize(rank + 1, 0);
        }
        by_rank[rank] += m.unsigned_abs();
    }
    let total: u64 = by_rank.iter().sum();
    let share = |x: u64| if total == 0 { 0.0 } else { x as f64 / total as f64 };
    WeightReport {
        kinds: by_kind
            .into_iter()
            .map(|((rank, kind), w)| KindWeight {
                kind: kind.to_string(),
                rank,
                omega: share(w),
            })
            .collect(),
        ranks: by_rank.into_iter().map(share).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub count: usize,
    pub mae: f64,
    pub max_error: f64,
    /// `(lower edge, count)` of |error| bins.
    pub histogram: Vec<(f64, usize)>,
}

/// Counts of `values` in bins `[k w, (k + 1) w)` for `k = 0 ..= max / w`.
pub fn histogram(values: &[f64], bin_width: f64) -> Result<Vec<(f64, usize)>, AssemblyError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(AssemblyError::InvalidBinWidth(bin_width));
    }
    let mut counts: Vec<usize> = Vec::new();
    for &v in values {
        let bin = (v.max(0.0) / bin_width).floor() as usize;
        if counts.len() <= bin {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (k as f64 * bin_width, c))
        .collect())
}

pub fn error_report(predictions: &[f64], references: &[f64], bin_width: f64) -> Result<ErrorReport, AssemblyError> {
    if predictions.len() != references.len() {
        return Err(AssemblyError::LengthMismatch {
            left: predictions.len(),
            right: references.len(),
        });
    }
    let errors: Vec<f64> = predictions
        .iter()
        .zip(references)
        .map(|(p, r)| (p - r).abs())
        .collect();
    let count = errors.len();
    let mae = if count == 0 {
        0.0
    } else {
        errors.iter().sum::<f64>() / count as f64
    };
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(ErrorReport {
        count,
        mae,
        max_error,
        histogram: histogram(&errors, bin_width)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostEstimate {
    /// `(3N - 6)^2`
    pub training_samples: u64,
    /// `frames * electrons^6`
    pub relative_cost: f64,
}

pub fn cost_estimate(n_atoms: usize, n_electrons: u64, n_frames: u64) -> Result<CostEstimate, AssemblyError> {
    if n_atoms < 3 {
        return Err(AssemblyError::TooFewAtoms(n_atoms));
    }
    let dof = 3 * n_atoms as u64 - 6;
    Ok(CostEstimate {
        training_samples: dof * dof,
        relative_cost: n_frames as f64 * (n_electrons as f64).powi(6),
    })
}

//! Descriptor-space tessellation.
//!
//! Mini-batch k-means picks the primitive training set (the sample nearest each
//! centroid). Samples from a new system are then binned into slices by their distance
//! to the nearest primitive centroid, and each slice is clustered recursively until
//! every cluster is about as tight as the primitive ones.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Centroid movement below which mini-batch iterations stop.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;
/// Default share of the data kept as primitive training points.
pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.10;
/// Clusters with average inertia above `INERTIA_FACTOR * eta0` are split again.
pub const INERTIA_FACTOR: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("no samples to cluster")]
    EmptyData,
    #[error("cluster count {k} must lie in 1..={n}")]
    InvalidClusterCount { k: usize, n: usize },
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("slice width is zero: all primitive samples coincide with their centroids")]
    ZeroSliceWidth,
    #[error("target average inertia must be positive, got {0}")]
    InvalidInertia(f64),
    #[error("dimension mismatch: data has {data} columns, centroids have {centroids}")]
    DimensionMismatch { data: usize, centroids: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub batch_size: usize,
    pub max_iter: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    /// k x dim
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    /// Mean squared sample-to-centroid distance within each cluster (0 for empty ones).
    pub per_cluster_avg_inertia: Vec<f64>,
    /// Total inertia divided by the number of samples.
    pub avg_inertia: f64,
    pub max_sample_to_centroid_distance: f64,
    pub seed: u64,
}

impl ClusterModel {
    pub fn total_inertia(&self) -> f64 {
        self.avg_inertia * self.assignments.len() as f64
    }

    /// Reference geometry of descriptor space kept for slicing a new system.
    pub fn tessellation(&self) -> Tessellation {
        Tessellation {
            centroids: self.centroids.clone(),
            width: self.max_sample_to_centroid_distance,
            eta0: self.avg_inertia,
            seed: self.seed,
        }
    }

    /// Members of cluster `c`, in sample order.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == c).then_some(i))
            .collect()
    }
}

/// Primitive centroids together with slice width and target inertia.
#[derive(Clone, Debug, PartialEq)]
pub struct Tessellation {
    pub centroids: Array2<f64>,
    pub width: f64,
    pub eta0: f64,
    pub seed: u64,
}

#[inline]
fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of and squared distance to the nearest centroid; ties go to the lower index.
pub fn nearest(point: ArrayView1<f64>, centroids: ArrayView2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.outer_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign_all(data: ArrayView2<f64>, centroids: ArrayView2<f64>) -> Vec<(usize, f64)> {
    let rows: Vec<ArrayView1<f64>> = data.outer_iter().collect();
    rows.par_iter().map(|row| nearest(*row, centroids)).collect()
}

/// Mini-batch k-means.
///
/// Centroids start at `k` distinct random samples. Each iteration draws a batch,
/// assigns it, and moves every touched centroid toward its samples with a per-centroid
/// rate of `1 / times_updated`. Iteration stops once no centroid moves more than
/// [`CONVERGENCE_TOLERANCE`] or after `max_iter` batches. A final full-data pass resets
/// each centroid to the mean of its members (re-seeding empty clusters) and assigns
/// every sample to its nearest centroid.
pub fn minibatch_kmeans(
    data: ArrayView2<f64>,
    params: &KMeansParams,
) -> Result<ClusterModel, SamplingError> {
    let n = data.nrows();
    if n == 0 {
        return Err(SamplingError::EmptyData);
    }
    if params.k == 0 || params.k > n {
        return Err(SamplingError::InvalidClusterCount { k: params.k, n });
    }
    if params.batch_size == 0 {
        return Err(SamplingError::InvalidBatchSize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = index::sample(&mut rng, n, params.k).into_vec();
    let mut centroids = data.select(Axis(0), &init);
    let mut counts = vec![0usize; params.k];
    let batch_size = params.batch_size.min(n);

    for _ in 0..params.max_iter {
        let batch = index::sample(&mut rng, n, batch_size).into_vec();
        let labels: Vec<usize> = batch
            .iter()
            .map(|&i| nearest(data.row(i), centroids.view()).0)
            .collect();
        let before = centroids.clone();
        let mut touched = vec![false; params.k];
        for (&i, &c) in batch.iter().zip(&labels) {
            counts[c] += 1;
            touched[c] = true;
            let rate = 1.0 / counts[c] as f64;
            let mut centroid = centroids.row_mut(c);
            centroid.zip_mut_with(&data.row(i), |m, &x| *m += rate * (x - *m));
        }
        let movement = (0..params.k)
            .filter(|&c| touched[c])
            .map(|c| sq_dist(before.row(c), centroids.row(c)).sqrt())
            .fold(0.0, f64::max);
        if movement < CONVERGENCE_TOLERANCE {
            break;
        }
    }

    let mut model = ClusterModel {
        k: params.k,
        centroids,
        assignments: vec![0; n],
        cluster_sizes: vec![0; params.k],
        per_cluster_avg_inertia: vec![0.0; params.k],
        avg_inertia: 0.0,
        max_sample_to_centroid_distance: 0.0,
        seed: params.seed,
    };
    update_assignments(data, &mut model);
    lloyd_step(data, &mut model);
    Ok(model)
}

fn update_assignments(data: ArrayView2<f64>, model: &mut ClusterModel) {
    let nearest = assign_all(data, model.centroids.view());
    model.assignments = nearest.iter().map(|&(c, _)| c).collect();
    update_statistics(data, model);
}

/// Recomputes sizes and inertia statistics from the stored assignments.
fn update_statistics(data: ArrayView2<f64>, model: &mut ClusterModel) {
    let k = model.k;
    let mut sizes = vec![0usize; k];
    let mut sums = vec![0.0; k];
    let mut max_d2: f64 = 0.0;
    for (i, &c) in model.assignments.iter().enumerate() {
        let d2 = sq_dist(data.row(i), model.centroids.row(c));
        sizes[c] += 1;
        sums[c] += d2;
        max_d2 = max_d2.max(d2);
    }
    model.per_cluster_avg_inertia = sums
        .iter()
        .zip(&sizes)
        .map(|(&s, &m)| if m == 0 { 0.0 } else { s / m as f64 })
        .collect();
    model.avg_inertia = sums.iter().sum::<f64>() / data.nrows() as f64;
    model.max_sample_to_centroid_distance = max_d2.sqrt();
    model.cluster_sizes = sizes;
}

/// One full-batch k-means update: centroids to member means, empty clusters re-seeded
/// from the farthest member of the largest cluster, then a full reassignment.
/// Never increases the total inertia.
pub fn lloyd_step(data: ArrayView2<f64>, model: &mut ClusterModel) {
    let k = model.k;
    let dim = data.ncols();
    let mut sums = Array2::<f64>::zeros((k, dim));
    let mut sizes = vec![0usize; k];
    for (i, &c) in model.assignments.iter().enumerate() {
        sizes[c] += 1;
        let mut row = sums.row_mut(c);
        row += &data.row(i);
    }
    for c in 0..k {
        if sizes[c] > 0 {
            let mean = &sums.row(c) / sizes[c] as f64;
            model.centroids.row_mut(c).assign(&mean);
        }
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let largest = (0..k).fold(0, |best, j| if sizes[j] > sizes[best] { j } else { best });
        let farthest = model
            .assignments
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a == largest)
            .map(|(i, _)| (i, sq_dist(data.row(i), model.centroids.row(largest))))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, d)) = farthest {
            if d > 0.0 {
                model.centroids.row_mut(c).assign(&data.row(i));
                model.assignments[i] = c;
                sizes[c] = 1;
                sizes[largest] -= 1;
            }
        }
    }
    update_assignments(data, model);
}

/// Mean squared distance of every sample to its assigned centroid.
pub fn average_inertia(data: ArrayView2<f64>, model: &ClusterModel) -> f64 {
    if data.nrows() == 0 {
        return 0.0;
    }
    model
        .assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(data.row(i), model.centroids.row(c)))
        .sum::<f64>()
        / data.nrows() as f64
}

/// The sample nearest each centroid (ties to the lower index), deduplicated and sorted.
pub fn select_training_points(data: ArrayView2<f64>, centroids: ArrayView2<f64>) -> Vec<usize> {
    let mut picked: Vec<usize> = centroids
        .outer_iter()
        .map(|c| nearest(c, data).0)
        .collect();
    picked.sort_unstable();
    picked.dedup();
    picked
}

/// Number of clusters giving `fraction` of `n` samples, at least one.
pub fn cluster_count_for_fraction(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n.max(1))
}

/// Slice index of every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicePartition {
    pub width: f64,
    /// Distance to the nearest primitive centroid.
    pub nearest_distance: Vec<f64>,
    /// 1-based slice of each sample.
    pub slice_of: Vec<usize>,
}

impl SlicePartition {
    pub fn slice_count(&self) -> usize {
        self.slice_of.iter().copied().max().unwrap_or(0)
    }

    pub fn members(&self, slice: usize) -> Vec<usize> {
        self.slice_of
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == slice).then_some(i))
            .collect()
    }
}

/// Slice for a distance `d` to the nearest primitive centroid: shells of thickness
/// `width`, closed on the outside, so `d <= width` is slice 1, `(width, 2 width]` slice 2.
pub fn slice_index(d: f64, width: f64) -> usize {
    ((d / width).ceil() as usize).max(1)
}

pub fn assign_slices(
    data: ArrayView2<f64>,
    tessellation: &Tessellation,
) -> Result<SlicePartition, SamplingError> {
    if !(tessellation.width > 0.0) {
        return Err(SamplingError::ZeroSliceWidth);
    }
    if data.ncols() != tessellation.centroids.ncols() {
        return Err(SamplingError::DimensionMismatch {
            data: data.ncols(),
            centroids: tessellation.centroids.ncols(),
        });
    }
    let nearest_distance: Vec<f64> = assign_all(data, tessellation.centroids.view())
        .into_iter()
        .map(|(_, d2)| d2.sqrt())
        .collect();
    let slice_of = nearest_distance
        .iter()
        .map(|&d| slice_index(d, tessellation.width))
        .collect();
    Ok(SlicePartition {
        width: tessellation.width,
        nearest_distance,
        slice_of,
    })
}

/// Round-1 cluster count for a slice of `m` samples: the rounded square root.
pub fn initial_cluster_count(m: usize) -> usize {
    ((m as f64).sqrt().round() as usize).clamp(1, m.max(1))
}

/// Children for a cluster whose average inertia is `eta` against a target `eta0`.
pub fn child_cluster_count(eta: f64, eta0: f64) -> usize {
    ((eta / eta0).ceil() as usize).max(2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinalCluster {
    pub centroid: Array1<f64>,
    /// Indices into the slice data.
    pub members: Vec<usize>,
    pub eta: f64,
    /// Clustering round that produced the cluster, from 1.
    pub round: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceClusterResult {
    pub slice: usize,
    /// Centroids produced in each round, round 1 first.
    pub round_centroids: Vec<Array2<f64>>,
    pub clusters: Vec<FinalCluster>,
    /// Indices into the slice data nearest to each final centroid, sorted and unique.
    pub training_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecursiveParams {
    pub eta0: f64,
    pub inertia_factor: f64,
    pub batch_size: usize,
    pub max_iter: usize,
    pub seed: u64,
}

/// Recursive mini-batch k-means over the samples of one slice.
///
/// Round 1 uses `round(sqrt(M))` clusters. Any cluster whose average inertia exceeds
/// `inertia_factor * eta0` is clustered again on its own members into
/// `max(2, ceil(eta / eta0))` children, until every cluster passes. Single-sample
/// clusters always pass.
pub fn recursive_slice_clustering(
    slice: usize,
    slice_data: ArrayView2<f64>,
    params: &RecursiveParams,
) -> Result<SliceClusterResult, SamplingError> {
    let m = slice_data.nrows();
    if m == 0 {
        return Err(SamplingError::EmptyData);
    }
    if !(params.eta0 > 0.0 && params.eta0.is_finite()) {
        return Err(SamplingError::InvalidInertia(params.eta0));
    }
    let threshold = params.inertia_factor * params.eta0;
    let mut round_centroids: Vec<Array2<f64>> = Vec::new();
    let mut clusters = Vec::new();
    let mut job_seed = params.seed;
    // (members, round, k)
    let mut pending = vec![((0..m).collect::<Vec<usize>>(), 1usize, initial_cluster_count(m))];

    while !pending.is_empty() {
        let mut next = Vec::new();
        for (members, round, k) in pending {
            let subset = slice_data.select(Axis(0), &members);
            let k = k.min(members.len());
            let model = minibatch_kmeans(
                subset.view(),
                &KMeansParams {
                    k,
                    batch_size: params.batch_size,
                    max_iter: params.max_iter,
                    seed: job_seed,
                },
            )?;
            job_seed = job_seed.wrapping_add(1);
            let groups = split_or_bisect(subset.view(), &model);

            if round_centroids.len() < round {
                round_centroids.push(Array2::zeros((0, slice_data.ncols())));
            }
            for (centroid, local) in groups {
                round_centroids[round - 1]
                    .push_row(centroid.view())
                    .expect("centroid width matches data");
                let global: Vec<usize> = local.iter().map(|&i| members[i]).collect();
                let eta = local
                    .iter()
                    .map(|&i| sq_dist(subset.row(i), centroid.view()))
                    .sum::<f64>()
                    / local.len() as f64;
                if eta > threshold && global.len() > 1 {
                    let k = child_cluster_count(eta, params.eta0);
                    next.push((global, round + 1, k));
                } else {
                    clusters.push(FinalCluster {
                        centroid,
                        members: global,
                        eta,
                        round,
                    });
                }
            }
        }
        pending = next;
    }

    let mut training_indices: Vec<usize> = clusters
        .iter()
        .map(|c| {
            let rows = slice_data.select(Axis(0), &c.members);
            c.members[nearest(c.centroid.view(), rows.view()).0]
        })
        .collect();
    training_indices.sort_unstable();
    training_indices.dedup();
    Ok(SliceClusterResult {
        slice,
        round_centroids,
        clusters,
        training_indices,
    })
}

/// Non-empty clusters of a model as `(centroid, local member indices)`.
///
/// If k-means left everything in a single cluster despite `k >= 2` (only possible for
/// degenerate inputs), the members are bisected along the direction of their farthest
/// point so a re-clustered group always shrinks.
fn split_or_bisect(data: ArrayView2<f64>, model: &ClusterModel) -> Vec<(Array1<f64>, Vec<usize>)> {
    let groups: Vec<(Array1<f64>, Vec<usize>)> = (0..model.k)
        .filter(|&c| model.cluster_sizes[c] > 0)
        .map(|c| (model.centroids.row(c).to_owned(), model.members(c)))
        .collect();
    if model.k < 2 || groups.len() > 1 {
        return groups;
    }
    let (centroid, members) = groups.into_iter().next().expect("data is non-empty");
    let (far, d2) = members
        .iter()
        .map(|&i| (i, sq_dist(data.row(i), centroid.view())))
        .fold((members[0], 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if d2 == 0.0 {
        return vec![(centroid, members)];
    }
    let direction = &data.row(far) - &centroid;
    let (left, right): (Vec<usize>, Vec<usize>) = members
        .iter()
        .partition(|&&i| (&data.row(i) - &centroid).dot(&direction) <= 0.0);
    [left, right]
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let mean = data
                .select(Axis(0), &g)
                .mean_axis(Axis(0))
                .expect("group is non-empty");
            (mean, g)
        })
        .collect()
}

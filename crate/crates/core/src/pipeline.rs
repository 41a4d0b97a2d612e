//! Stage drivers behind the command line.
//!
//! Each stage reads the previous stage's artifacts from the output directory, checks
//! that their `config_hash` matches the current configuration, and writes its own.
//! Hashes chain: trajectory and fragmentation settings, then the oracle, then the
//! sampling and training settings, then the target labels.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::assembly::{
    assemble_ml, cost_estimate, error_report, fragment_weights, CostEstimate, ErrorReport, ModelBank,
    UnknownKindPolicy, WeightReport,
};
use crate::config::{chain_hash, stable_seed, BankChoice, PipelineConfig, System};
use crate::descriptor::descriptor_of;
use crate::ensemble::generate_ensemble;
use crate::error::{Error, Result};
use crate::formats::{
    parse_clusters, parse_fragments, parse_labels, parse_manifest, parse_model, write_clusters,
    write_fragments, write_labels, write_manifest, write_model, write_table, ClusterFile, FormatError,
    FragmentDataset, FragmentRecord, Header, LabelDataset, LabelRecord, Manifest, ManifestEntry,
};
use crate::geometry::{assign_nodes, build_graph, extract_fragment, fragment_graph, parse_xyz, write_xyz, Geometry};
use crate::model::{train_array, transfer_slice, NNArray, TrainSet};
use crate::sampling::{
    assign_slices, cluster_count_for_fraction, minibatch_kmeans, recursive_slice_clustering,
    select_training_points, KMeansParams, RecursiveParams, Tessellation,
};

pub const PRIMITIVE_BANK_DIR: &str = "models";
pub const TRANSFER_BANK_DIR: &str = "models_transfer";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const TRANSFER_TRACE_FILE: &str = "transfer_trace.tsv";

pub fn fragments_path(cfg: &PipelineConfig, system: System) -> PathBuf {
    cfg.output_path().join(format!("fragments_{system}.txt"))
}

pub fn labels_path(cfg: &PipelineConfig, system: System) -> PathBuf {
    cfg.output_path().join(format!("labels_{system}.tsv"))
}

pub fn bank_dir(cfg: &PipelineConfig, bank: BankChoice) -> PathBuf {
    cfg.output_path().join(match bank {
        BankChoice::Primitive => PRIMITIVE_BANK_DIR,
        BankChoice::Transfer => TRANSFER_BANK_DIR,
    })
}

pub fn bank_name(bank: BankChoice) -> &'static str {
    match bank {
        BankChoice::Primitive => "primitive",
        BankChoice::Transfer => "transfer",
    }
}

pub fn predictions_path(cfg: &PipelineConfig, system: System, bank: BankChoice, rank: usize) -> PathBuf {
    let bank = bank_name(bank);
    cfg.output_path().join(format!("predict_{system}_{bank}_R{rank}.tsv"))
}

pub fn errors_path(cfg: &PipelineConfig, system: System, bank: BankChoice, rank: usize) -> PathBuf {
    let bank = bank_name(bank);
    cfg.output_path().join(format!("errors_{system}_{bank}_R{rank}.tsv"))
}

pub fn weights_path(cfg: &PipelineConfig, system: System) -> PathBuf {
    cfg.output_path().join(format!("weights_{system}.tsv"))
}

pub fn cost_path(cfg: &PipelineConfig, system: System) -> PathBuf {
    cfg.output_path().join(format!("cost_{system}.tsv"))
}

/// File names inside a bank directory are derived from the kind; `+` is not portable.
pub fn kind_file_stem(kind: &str) -> String {
    kind.replace('+', "p").replace('-', "m")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parsed<T>(path: &Path, r: std::result::Result<T, FormatError>) -> Result<T> {
    r.map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

fn check_hash(path: &Path, header: &Header, expected: &str) -> Result<()> {
    if header.config_hash() != expected {
        return Err(Error::Stale {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found: header.config_hash().to_string(),
        });
    }
    Ok(())
}

fn load_trajectory(cfg: &PipelineConfig, system: System) -> Result<(Vec<Geometry>, String)> {
    let path = cfg.trajectory_path(system);
    let text = read_text(&path)?;
    let digest = chain_hash("", &[text.as_bytes()]);
    let frames = parse_xyz(&text).map_err(|source| Error::Trajectory { path, source })?;
    Ok((frames, digest))
}

fn fragments_hash_from(cfg: &PipelineConfig, system: System, trajectory: &str) -> String {
    let p = cfg.fragmentation_params(system);
    let settings = format!("{} {} {}", p.oh_cutoff, p.oo_cutoff, p.max_rank);
    chain_hash(trajectory, &[system.name().as_bytes(), settings.as_bytes()])
}

pub fn fragments_hash(cfg: &PipelineConfig, system: System) -> Result<String> {
    let path = cfg.trajectory_path(system);
    let text = read_text(&path)?;
    Ok(fragments_hash_from(cfg, system, &chain_hash("", &[text.as_bytes()])))
}

pub fn labels_hash(cfg: &PipelineConfig, system: System) -> Result<String> {
    let oracle = toml::to_string(&cfg.oracle).expect("oracle serializes");
    Ok(chain_hash(&fragments_hash(cfg, system)?, &[oracle.as_bytes()]))
}

pub fn models_hash(cfg: &PipelineConfig) -> Result<String> {
    let sampling = toml::to_string(&cfg.sampling).expect("sampling serializes");
    let training = toml::to_string(&cfg.training).expect("training serializes");
    Ok(chain_hash(
        &labels_hash(cfg, System::Primitive)?,
        &[sampling.as_bytes(), training.as_bytes(), &cfg.seed.to_le_bytes()],
    ))
}

pub fn transfer_hash(cfg: &PipelineConfig) -> Result<String> {
    Ok(chain_hash(
        &models_hash(cfg)?,
        &[labels_hash(cfg, System::Target)?.as_bytes()],
    ))
}

fn bank_hash(cfg: &PipelineConfig, bank: BankChoice) -> Result<String> {
    match bank {
        BankChoice::Primitive => models_hash(cfg),
        BankChoice::Transfer => transfer_hash(cfg),
    }
}

// ---------------------------------------------------------------------------------
// generate

/// Writes synthetic trajectories for every system with a `generate` section.
pub fn run_generate(cfg: &PipelineConfig) -> Result<Vec<(System, PathBuf, usize)>> {
    let mut written = Vec::new();
    for system in [System::Primitive, System::Target] {
        let Some(params) = &cfg.system(system).generate else {
            continue;
        };
        let frames = generate_ensemble(params)?;
        let path = cfg.trajectory_path(system);
        write_text(&path, &write_xyz(&frames))?;
        info!("wrote {} frames to {}", frames.len(), path.display());
        written.push((system, path, frames.len()));
    }
    if written.is_empty() {
        return Err(Error::Usage(
            "no [primitive.generate] or [target.generate] section in the config".into(),
        ));
    }
    Ok(written)
}

// ---------------------------------------------------------------------------------
// fragment

#[derive(Clone, Debug, PartialEq)]
pub struct FragmentSummary {
    pub system: System,
    pub frames: usize,
    pub fragments: usize,
    /// Simplex count per (rank, kind).
    pub by_kind: BTreeMap<(usize, String), usize>,
    pub path: PathBuf,
}

pub fn run_fragment(cfg: &PipelineConfig, system: System) -> Result<FragmentSummary> {
    let (frames, trajectory) = load_trajectory(cfg, system)?;
    if frames.is_empty() {
        warn!("{system} trajectory has no frames");
    }
    let params = cfg.fragmentation_params(system);
    let per_frame: Vec<Vec<FragmentRecord>> = frames
        .par_iter()
        .enumerate()
        .map(|(frame, g)| {
            let graph = fragment_graph(g, &params).map_err(|source| Error::Frame { frame, source })?;
            graph
                .weighted_simplexes()
                .map(|(s, m)| {
                    let f = extract_fragment(g, s, &graph.nodes, system.name())
                        .map_err(|source| Error::Frame { frame, source })?;
                    Ok(FragmentRecord {
                        frame,
                        rank: s.rank,
                        node_ids: s.node_ids.clone(),
                        kind: s.kind.clone(),
                        multiplicity: m,
                        geometry: f.geometry,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let records: Vec<FragmentRecord> = per_frame.into_iter().flatten().collect();
    let mut by_kind = BTreeMap::new();
    for r in &records {
        *by_kind.entry((r.rank, r.kind.clone())).or_insert(0) += 1;
    }
    let header = Header::new("fragments")
        .with("config_hash", fragments_hash_from(cfg, system, &trajectory))
        .with("system", system)
        .with("frames", frames.len())
        .with("max_rank", params.max_rank)
        .with("oo_cutoff", params.oo_cutoff)
        .with("oh_cutoff", params.oh_cutoff);
    let path = fragments_path(cfg, system);
    let ds = FragmentDataset { header, records };
    write_text(&path, &write_fragments(&ds))?;
    Ok(FragmentSummary {
        system,
        frames: frames.len(),
        fragments: ds.records.len(),
        by_kind,
        path,
    })
}

fn load_fragments(cfg: &PipelineConfig, system: System) -> Result<FragmentDataset> {
    let path = fragments_path(cfg, system);
    let ds = parsed(&path, parse_fragments(&read_text(&path)?))?;
    check_hash(&path, &ds.header, &fragments_hash(cfg, system)?)?;
    Ok(ds)
}

// ---------------------------------------------------------------------------------
// label

#[derive(Clone, Debug, PartialEq)]
pub struct LabelSummary {
    pub system: System,
    pub labels: usize,
    /// Sample count and mean |delta| per kind, kcal/mol.
    pub by_kind: BTreeMap<String, (usize, f64)>,
    pub path: PathBuf,
}

pub fn run_label(cfg: &PipelineConfig, system: System) -> Result<LabelSummary> {
    let fragments = load_fragments(cfg, system)?;
    let records: Vec<LabelRecord> = fragments
        .records
        .par_iter()
        .map(|r| {
            let descriptor = if r.geometry.len() < 2 {
                Vec::new()
            } else {
                descriptor_of(&r.geometry, &r.kind)
                    .map_err(|source| Error::Descriptor {
                        frame: r.frame,
                        nodes: r.node_ids.clone(),
                        source,
                    })?
                    .values
            };
            Ok(LabelRecord {
                kind: r.kind.clone(),
                frame: r.frame,
                rank: r.rank,
                node_ids: r.node_ids.clone(),
                multiplicity: r.multiplicity,
                delta: cfg.oracle.delta_label(&r.geometry),
                descriptor,
            })
        })
        .collect::<Result<_>>()?;
    let mut by_kind: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for r in &records {
        let e = by_kind.entry(r.kind.clone()).or_default();
        e.0 += 1;
        e.1 += r.delta.abs();
    }
    for (n, sum) in by_kind.values_mut() {
        *sum /= *n as f64;
    }
    let header = Header::new("labels")
        .with("config_hash", labels_hash(cfg, system)?)
        .with("system", system);
    let path = labels_path(cfg, system);
    let ds = LabelDataset { header, records };
    write_text(&path, &write_labels(&ds))?;
    Ok(LabelSummary {
        system,
        labels: ds.records.len(),
        by_kind,
        path,
    })
}

fn load_labels(cfg: &PipelineConfig, system: System) -> Result<LabelDataset> {
    let path = labels_path(cfg, system);
    let ds = parsed(&path, parse_labels(&read_text(&path)?))?;
    check_hash(&path, &ds.header, &labels_hash(cfg, system)?)?;
    Ok(ds)
}

/// Labelled samples of one kind as a feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct KindSamples {
    pub kind: String,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl KindSamples {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn train_set(&self) -> TrainSet {
        TrainSet::from_features(self.x.view(), self.y.clone())
    }

    pub fn subset(&self, rows: &[usize]) -> TrainSet {
        TrainSet::from_features(self.x.select(Axis(0), rows).view(), self.y.select(Axis(0), rows))
    }
}

/// Splits a label dataset by kind, keeping row order within each kind.
pub fn group_by_kind(ds: &LabelDataset) -> Result<BTreeMap<String, KindSamples>> {
    let mut rows: BTreeMap<&str, Vec<&LabelRecord>> = BTreeMap::new();
    for r in &ds.records {
        rows.entry(&r.kind).or_default().push(r);
    }
    rows.into_iter()
        .map(|(kind, records)| {
            let d = records[0].descriptor.len();
            if let Some(bad) = records.iter().find(|r| r.descriptor.len() != d) {
                return Err(Error::Data {
                    kind: kind.to_string(),
                    msg: format!(
                        "descriptor lengths differ ({d} and {}) in frame {}",
                        bad.descriptor.len(),
                        bad.frame
                    ),
                });
            }
            let flat: Vec<f64> = records.iter().flat_map(|r| r.descriptor.iter().copied()).collect();
            let x = Array2::from_shape_vec((records.len(), d), flat).expect("rows checked");
            let y = records.iter().map(|r| r.delta).collect();
            Ok((kind.to_string(), KindSamples { kind: kind.to_string(), x, y }))
        })
        .collect()
}

// ---------------------------------------------------------------------------------
// train

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedKind {
    pub array: NNArray,
    pub tessellation: Tessellation,
    /// Rows of the kind's primitive samples used for training.
    pub training: Vec<usize>,
    pub entry: ManifestEntry,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub trained: Vec<ManifestEntry>,
    /// Kinds left out, with the reason.
    pub skipped: Vec<(String, String)>,
    pub dir: PathBuf,
}

/// k-means tessellation of a kind's descriptors and the samples nearest each centroid.
///
/// A fraction of 1 keeps every sample; the tessellation is then the samples themselves
/// with zero width.
pub fn select_samples(cfg: &PipelineConfig, x: &Array2<f64>, seed: u64) -> Result<(Tessellation, Vec<usize>), crate::sampling::SamplingError> {
    let n = x.nrows();
    if cfg.sampling.fraction >= 1.0 {
        return Ok((
            Tessellation {
                centroids: x.clone(),
                width: 0.0,
                eta0: 0.0,
                seed,
            },
            (0..n).collect(),
        ));
    }
    let model = minibatch_kmeans(
        x.view(),
        &KMeansParams {
            k: cluster_count_for_fraction(n, cfg.sampling.fraction),
            batch_size: cfg.sampling.batch_size,
            max_iter: cfg.sampling.max_iter,
            seed,
        },
    )?;
    let training = select_training_points(x.view(), model.centroids.view());
    Ok((model.tessellation(), training))
}

fn skip_reason(cfg: &PipelineConfig, samples: &KindSamples) -> Option<String> {
    if samples.len() < cfg.training.min_samples {
        Some(format!(
            "{} samples, fewer than training.min_samples = {}",
            samples.len(),
            cfg.training.min_samples
        ))
    } else if samples.x.ncols() == 0 {
        Some("single-atom fragments have no descriptor".into())
    } else {
        None
    }
}

/// Samples, clusters and trains one kind from scratch.
pub fn train_kind(cfg: &PipelineConfig, samples: &KindSamples) -> Result<TrainedKind> {
    let kind = &samples.kind;
    let seed = stable_seed(cfg.seed, kind);
    let (tessellation, training) = select_samples(cfg, &samples.x, seed).map_err(|source| Error::Sampling {
        kind: kind.clone(),
        source,
    })?;
    let train_set = samples.subset(&training);
    let (array, _) = train_array(kind, &train_set, &cfg.training.train_config(seed)).map_err(|source| Error::Model {
        kind: kind.clone(),
        source,
    })?;
    let entry = ManifestEntry {
        kind: kind.clone(),
        seed,
        features: samples.x.ncols(),
        samples: samples.len(),
        train_samples: training.len(),
        train_mae: array.mae(&train_set),
        full_mae: array.mae(&samples.train_set()),
        slices_consumed: Vec::new(),
    };
    Ok(TrainedKind {
        array,
        tessellation,
        training,
        entry,
    })
}

fn prepare_bank_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ours = path.extension().is_some_and(|e| e == "model" || e == "clusters")
            || path.file_name().is_some_and(|n| n == MANIFEST_FILE);
        if ours {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

fn write_bank(dir: &Path, hash: &str, kinds: &[TrainedKind]) -> Result<()> {
    prepare_bank_dir(dir)?;
    for t in kinds {
        let stem = kind_file_stem(&t.entry.kind);
        let header = Header::new("model").with("config_hash", hash);
        write_text(&dir.join(format!("{stem}.model")), &write_model(&t.array, &header))?;
        let clusters = ClusterFile {
            header: Header::new("clusters").with("config_hash", hash),
            kind: t.entry.kind.clone(),
            tessellation: t.tessellation.clone(),
            training: t.training.clone(),
        };
        write_text(&dir.join(format!("{stem}.clusters")), &write_clusters(&clusters))?;
    }
    let manifest = Manifest {
        header: Header::new("manifest").with("config_hash", hash),
        entries: kinds.iter().map(|t| t.entry.clone()).collect(),
    };
    write_text(&dir.join(MANIFEST_FILE), &write_manifest(&manifest))
}

pub fn run_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    let labels = load_labels(cfg, System::Primitive)?;
    let groups = group_by_kind(&labels)?;
    let mut skipped = Vec::new();
    let mut todo = Vec::new();
    for samples in groups.values() {
        match skip_reason(cfg, samples) {
            Some(reason) => {
                warn!("not training {}: {reason}", samples.kind);
                skipped.push((samples.kind.clone(), reason));
            }
            None => todo.push(samples),
        }
    }
    let trained: Vec<TrainedKind> = todo
        .par_iter()
        .map(|s| {
            let t = train_kind(cfg, s)?;
            info!(
                "{}: {} samples, {} trained, MAE {:.4} kcal/mol",
                t.entry.kind, t.entry.samples, t.entry.train_samples, t.entry.full_mae
            );
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let dir = bank_dir(cfg, BankChoice::Primitive);
    write_bank(&dir, &models_hash(cfg)?, &trained)?;
    Ok(TrainSummary {
        trained: trained.into_iter().map(|t| t.entry).collect(),
        skipped,
        dir,
    })
}

/// Loaded bank with the clustering state of every kind.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedBank {
    pub manifest: Manifest,
    pub models: ModelBank,
    pub clusters: BTreeMap<String, ClusterFile>,
}

pub fn load_bank(cfg: &PipelineConfig, bank: BankChoice) -> Result<LoadedBank> {
    let dir = bank_dir(cfg, bank);
    let expected = bank_hash(cfg, bank)?;
    let path = dir.join(MANIFEST_FILE);
    let manifest = parsed(&path, parse_manifest(&read_text(&path)?))?;
    check_hash(&path, &manifest.header, &expected)?;
    let mut models = ModelBank::default();
    let mut clusters = BTreeMap::new();
    for e in &manifest.entries {
        let stem = kind_file_stem(&e.kind);
        let path = dir.join(format!("{stem}.model"));
        let (header, array) = parsed(&path, parse_model(&read_text(&path)?))?;
        check_hash(&path, &header, &expected)?;
        if array.kind != e.kind || array.features != e.features {
            return Err(Error::Data {
                kind: e.kind.clone(),
                msg: format!("{} does not match the manifest", path.display()),
            });
        }
        models.insert(array);
        let path = dir.join(format!("{stem}.clusters"));
        let c = parsed(&path, parse_clusters(&read_text(&path)?))?;
        check_hash(&path, &c.header, &expected)?;
        clusters.insert(e.kind.clone(), c);
    }
    Ok(LoadedBank {
        manifest,
        models,
        clusters,
    })
}

// ---------------------------------------------------------------------------------
// transfer

/// One slice update of one kind; MAEs in kcal/mol.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferStep {
    pub kind: String,
    pub slice: usize,
    /// Target samples in the slice.
    pub samples: usize,
    pub train_samples: usize,
    pub clusters: usize,
    /// False for an empty slice, which is recorded and skipped.
    pub updated: bool,
    /// Lower edge of the slice's distance shell.
    pub distance: f64,
    pub mae_slice_before: f64,
    pub mae_slice_after: f64,
    pub mae_target_after: f64,
    pub mae_primitive_after: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferSummary {
    pub entries: Vec<ManifestEntry>,
    pub steps: Vec<TransferStep>,
    /// Target samples per kind and slice, before any update.
    pub slice_counts: BTreeMap<String, Vec<usize>>,
    /// Target kinds without a primitive model, trained from scratch.
    pub cold_started: Vec<String>,
    pub skipped: Vec<(String, String)>,
    pub dir: PathBuf,
}

struct KindTransfer {
    trained: TrainedKind,
    steps: Vec<TransferStep>,
    slice_counts: Vec<usize>,
}

fn transfer_kind(
    cfg: &PipelineConfig,
    array: &NNArray,
    clusters: &ClusterFile,
    entry: &ManifestEntry,
    primitive: &KindSamples,
    target: &KindSamples,
) -> Result<KindTransfer> {
    let kind = &target.kind;
    let sampling_err = |source| Error::Sampling {
        kind: kind.clone(),
        source,
    };
    let model_err = |source| Error::Model {
        kind: kind.clone(),
        source,
    };
    let tess = &clusters.tessellation;
    let partition = assign_slices(target.x.view(), tess).map_err(sampling_err)?;
    let slice_counts: Vec<usize> = (1..=partition.slice_count())
        .map(|s| partition.members(s).len())
        .collect();
    if clusters.training.iter().any(|&i| i >= primitive.len()) {
        return Err(Error::Data {
            kind: kind.clone(),
            msg: "cluster file indexes past the primitive samples".into(),
        });
    }
    let mut cumulative = primitive.subset(&clusters.training);
    let target_all = target.train_set();
    let primitive_all = primitive.train_set();
    let mut array = array.clone();
    let mut steps = Vec::new();
    let mut consumed = Vec::new();
    for slice in 2..=partition.slice_count() {
        let members = partition.members(slice);
        if members.is_empty() {
            let after_target = array.mae(&target_all);
            steps.push(TransferStep {
                kind: kind.clone(),
                slice,
                samples: 0,
                train_samples: 0,
                clusters: 0,
                updated: false,
                distance: (slice - 1) as f64 * tess.width,
                mae_slice_before: 0.0,
                mae_slice_after: 0.0,
                mae_target_after: after_target,
                mae_primitive_after: array.mae(&primitive_all),
            });
            continue;
        }
        let slice_x = target.x.select(Axis(0), &members);
        let slice_seed = stable_seed(entry.seed, &format!("slice {slice}"));
        let result = recursive_slice_clustering(
            slice,
            slice_x.view(),
            &RecursiveParams {
                eta0: tess.eta0,
                inertia_factor: cfg.sampling.inertia_factor,
                batch_size: cfg.sampling.batch_size,
                max_iter: cfg.sampling.max_iter,
                seed: slice_seed,
            },
        )
        .map_err(sampling_err)?;
        let chosen: Vec<usize> = result.training_indices.iter().map(|&i| members[i]).collect();
        let slice_set = target.subset(&chosen);
        let slice_all = target.subset(&members);
        cumulative = cumulative.concat(&slice_set);
        let mae_slice_before = array.mae(&slice_all);
        transfer_slice(
            &mut array,
            &slice_set,
            &cumulative,
            &cfg.training.train_config(slice_seed),
            cfg.training.fine_tune_scale,
        )
        .map_err(model_err)?;
        consumed.push(slice);
        steps.push(TransferStep {
            kind: kind.clone(),
            slice,
            samples: members.len(),
            train_samples: chosen.len(),
            clusters: result.clusters.len(),
            updated: true,
            distance: (slice - 1) as f64 * tess.width,
            mae_slice_before,
            mae_slice_after: array.mae(&slice_all),
            mae_target_after: array.mae(&target_all),
            mae_primitive_after: array.mae(&primitive_all),
        });
        info!(
            "{kind} slice {slice}: {} samples, {} trained, MAE {:.4} -> {:.4} kcal/mol",
            members.len(),
            chosen.len(),
            mae_slice_before,
            array.mae(&slice_all)
        );
    }
    let entry = ManifestEntry {
        kind: kind.clone(),
        seed: entry.seed,
        features: entry.features,
        samples: target.len(),
        train_samples: cumulative.len(),
        train_mae: array.mae(&cumulative),
        full_mae: array.mae(&target_all),
        slices_consumed: consumed,
    };
    Ok(KindTransfer {
        trained: TrainedKind {
            array,
            tessellation: tess.clone(),
            training: clusters.training.clone(),
            entry,
        },
        steps,
        slice_counts,
    })
}

pub fn run_transfer(cfg: &PipelineConfig) -> Result<TransferSummary> {
    let bank = load_bank(cfg, BankChoice::Primitive)?;
    let primitive = group_by_kind(&load_labels(cfg, System::Primitive)?)?;
    let target = group_by_kind(&load_labels(cfg, System::Target)?)?;

    enum Job<'a> {
        Transfer(&'a KindSamples),
        Cold(&'a KindSamples),
    }
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for samples in target.values() {
        if bank.models.get(&samples.kind).is_some() {
            jobs.push(Job::Transfer(samples));
        } else if let Some(reason) = skip_reason(cfg, samples) {
            warn!("no model for {} and not training it: {reason}", samples.kind);
            skipped.push((samples.kind.clone(), reason));
        } else {
            warn!("no primitive model for {}; training it from target samples", samples.kind);
            jobs.push(Job::Cold(samples));
        }
    }
    let results: Vec<(KindTransfer, bool)> = jobs
        .par_iter()
        .map(|job| match job {
            Job::Transfer(t) => {
                let kind = &t.kind;
                let entry = bank
                    .manifest
                    .entries
                    .iter()
                    .find(|e| &e.kind == kind)
                    .expect("bank kinds come from the manifest");
                let p = primitive.get(kind).ok_or_else(|| Error::Data {
                    kind: kind.clone(),
                    msg: "model present but no primitive labels".into(),
                })?;
                let r = transfer_kind(cfg, bank.models.get(kind).unwrap(), &bank.clusters[kind], entry, p, t)?;
                Ok((r, false))
            }
            Job::Cold(t) => Ok((
                KindTransfer {
                    trained: train_kind(cfg, t)?,
                    steps: Vec::new(),
                    slice_counts: Vec::new(),
                },
                true,
            )),
        })
        .collect::<Result<_>>()?;

    let mut kinds: BTreeMap<String, TrainedKind> = BTreeMap::new();
    // primitive kinds absent from the target carry over unchanged
    for e in &bank.manifest.entries {
        kinds.insert(
            e.kind.clone(),
            TrainedKind {
                array: bank.models.get(&e.kind).unwrap().clone(),
                tessellation: bank.clusters[&e.kind].tessellation.clone(),
                training: bank.clusters[&e.kind].training.clone(),
                entry: e.clone(),
            },
        );
    }
    let mut steps = Vec::new();
    let mut slice_counts = BTreeMap::new();
    let mut cold_started = Vec::new();
    for (r, cold) in results {
        let kind = r.trained.entry.kind.clone();
        if cold {
            cold_started.push(kind.clone());
        }
        steps.extend(r.steps);
        slice_counts.insert(kind.clone(), r.slice_counts);
        kinds.insert(kind, r.trained);
    }
    let kinds: Vec<TrainedKind> = kinds.into_values().collect();
    let hash = transfer_hash(cfg)?;
    let dir = bank_dir(cfg, BankChoice::Transfer);
    write_bank(&dir, &hash, &kinds)?;
    let rows: Vec<Vec<String>> = steps
        .iter()
        .map(|s| {
            vec![
                s.kind.clone(),
                s.slice.to_string(),
                s.distance.to_string(),
                s.samples.to_string(),
                s.train_samples.to_string(),
                s.clusters.to_string(),
                if s.updated { "updated" } else { "empty" }.to_string(),
                s.mae_slice_before.to_string(),
                s.mae_slice_after.to_string(),
                s.mae_target_after.to_string(),
                s.mae_primitive_after.to_string(),
            ]
        })
        .collect();
    write_text(
        &cfg.output_path().join(TRANSFER_TRACE_FILE),
        &write_table(
            &Header::new("transfer_trace")
                .with("config_hash", &hash)
                .with("units", "kcal/mol"),
            &[
                "kind",
                "slice",
                "distance",
                "samples",
                "train_samples",
                "clusters",
                "status",
                "mae_slice_before",
                "mae_slice_after",
                "mae_target_after",
                "mae_primitive_after",
            ],
            &rows,
        ),
    )?;
    Ok(TransferSummary {
        entries: kinds.into_iter().map(|t| t.entry).collect(),
        steps,
        slice_counts,
        cold_started,
        skipped,
        dir,
    })
}

// ---------------------------------------------------------------------------------
// predict

/// Energies of one frame at one rank, kcal/mol.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePrediction {
    pub frame: usize,
    pub reference: f64,
    /// Reference plus model corrections.
    pub ml: f64,
    /// Reference plus oracle corrections over the same fragments.
    pub exact: f64,
    /// Target potential on the whole frame.
    pub oracle: f64,
    pub unknown_fragments: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankPrediction {
    pub rank: usize,
    pub frames: Vec<FramePrediction>,
    /// Model against the exact assembly.
    pub report: ErrorReport,
    /// Exact assembly against the whole-frame target potential.
    pub truncation_mae: f64,
    pub path: PathBuf,
}

/// Predicts every frame of `system` at each rank from 0 to the configured maximum, or
/// only at `rank` when given.
pub fn run_predict(cfg: &PipelineConfig, system: System, rank: Option<usize>) -> Result<Vec<RankPrediction>> {
    let bank = load_bank(cfg, cfg.predict.bank)?;
    let (frames, _) = load_trajectory(cfg, system)?;
    let ranks: Vec<usize> = match rank {
        Some(r) => vec![r],
        None => (0..=cfg.fragmentation.max_rank).collect(),
    };
    let policy: UnknownKindPolicy = cfg.predict.unknown_kind.into();
    let oo = cfg.oo_cutoff(system);
    let per_frame: Vec<Vec<FramePrediction>> = frames
        .par_iter()
        .enumerate()
        .map(|(frame, g)| {
            let geometry_err = |source| Error::Frame { frame, source };
            let assembly_err = |source| Error::Assembly { frame, source };
            let nodes = assign_nodes(g, cfg.fragmentation.oh_cutoff).map_err(geometry_err)?;
            let base = build_graph(g, nodes, oo).map_err(geometry_err)?;
            let reference = cfg.oracle.reference.energy(g);
            let oracle = cfg.oracle.target.energy(g);
            ranks
                .iter()
                .map(|&r| {
                    let graph = base.clone().with_max_rank(r);
                    let ml = assemble_ml(reference, g, &graph, &bank.models, policy, system.name())
                        .map_err(assembly_err)?;
                    let exact = assemble_ml(
                        reference,
                        g,
                        &graph,
                        &cfg.oracle,
                        UnknownKindPolicy::Error,
                        system.name(),
                    )
                    .map_err(assembly_err)?;
                    Ok(FramePrediction {
                        frame,
                        reference,
                        ml: ml.total,
                        exact: exact.total,
                        oracle,
                        unknown_fragments: ml.unknown_fragments,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let hash = bank_hash(cfg, cfg.predict.bank)?;
    let mut out = Vec::new();
    for (i, &r) in ranks.iter().enumerate() {
        let frames: Vec<FramePrediction> = per_frame.iter().map(|f| f[i].clone()).collect();
        let ml: Vec<f64> = frames.iter().map(|f| f.ml).collect();
        let exact: Vec<f64> = frames.iter().map(|f| f.exact).collect();
        let report = error_report(&ml, &exact, cfg.predict.histogram_bin).map_err(|source| Error::Assembly {
            frame: 0,
            source,
        })?;
        let truncation_mae = if frames.is_empty() {
            0.0
        } else {
            frames.iter().map(|f| (f.exact - f.oracle).abs()).sum::<f64>() / frames.len() as f64
        };
        let unknown: usize = frames.iter().map(|f| f.unknown_fragments).sum();
        if unknown > 0 {
            warn!("{unknown} fragments at rank {r} had no model and contributed zero");
        }
        let header = Header::new("predictions")
            .with("config_hash", &hash)
            .with("system", system)
            .with("bank", bank_name(cfg.predict.bank))
            .with("rank", r)
            .with("units", "kcal/mol")
            .with("mae", report.mae)
            .with("max_error", report.max_error)
            .with("unknown_fragments", unknown);
        let rows: Vec<Vec<String>> = frames
            .iter()
            .map(|f| {
                vec![
                    f.frame.to_string(),
                    f.reference.to_string(),
                    f.ml.to_string(),
                    f.exact.to_string(),
                    (f.ml - f.exact).to_string(),
                    f.oracle.to_string(),
                    f.unknown_fragments.to_string(),
                ]
            })
            .collect();
        let path = predictions_path(cfg, system, cfg.predict.bank, r);
        write_text(
            &path,
            &write_table(
                &header,
                &["frame", "e_ref", "e_ml", "e_exact", "error", "e_oracle", "unknown"],
                &rows,
            ),
        )?;
        let histogram_rows: Vec<Vec<String>> = report
            .histogram
            .iter()
            .map(|(lo, n)| vec![lo.to_string(), (lo + cfg.predict.histogram_bin).to_string(), n.to_string()])
            .collect();
        write_text(
            &errors_path(cfg, system, cfg.predict.bank, r),
            &write_table(
                &Header::new("error_histogram")
                    .with("config_hash", &hash)
                    .with("system", system)
                    .with("rank", r)
                    .with("units", "kcal/mol")
                    .with("count", report.count)
                    .with("mae", report.mae)
                    .with("max_error", report.max_error),
                &["abs_error_from", "abs_error_to", "frames"],
                &histogram_rows,
            ),
        )?;
        out.push(RankPrediction {
            rank: r,
            frames,
            report,
            truncation_mae,
            path,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------------
// report

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSummary {
    pub system: System,
    pub weights: WeightReport,
    pub cost: Option<CostEstimate>,
    pub atoms: usize,
    pub electrons: i64,
    pub frames: usize,
}

/// Fragment significance weights from the fragment dataset and a cost estimate for
/// labelling the whole trajectory directly.
pub fn run_report(cfg: &PipelineConfig, system: System) -> Result<ReportSummary> {
    let fragments = load_fragments(cfg, system)?;
    let weights = fragment_weights(
        fragments
            .records
            .iter()
            .map(|r| (r.kind.as_str(), r.rank, r.multiplicity)),
    );
    let (frames, _) = load_trajectory(cfg, system)?;
    let (atoms, electrons) = match frames.first() {
        Some(g) => {
            let charge: i32 = assign_nodes(g, cfg.fragmentation.oh_cutoff)
                .map_err(|source| Error::Frame { frame: 0, source })?
                .iter()
                .map(|n| n.charge)
                .sum();
            (g.len(), g.electron_count(charge))
        }
        None => (0, 0),
    };
    let cost = cost_estimate(atoms, electrons.max(0) as u64, frames.len() as u64).ok();
    if cost.is_none() {
        warn!("{system}: no cost estimate for {atoms}-atom frames");
    }

    let hash = fragments_hash(cfg, system)?;
    let mut rows: Vec<Vec<String>> = weights
        .kinds
        .iter()
        .map(|k| vec![k.rank.to_string(), k.kind.clone(), k.omega.to_string()])
        .collect();
    rows.extend(
        weights
            .ranks
            .iter()
            .enumerate()
            .map(|(r, w)| vec![r.to_string(), "*".into(), w.to_string()]),
    );
    write_text(
        &weights_path(cfg, system),
        &write_table(
            &Header::new("weights").with("config_hash", &hash).with("system", system),
            &["rank", "kind", "omega"],
            &rows,
        ),
    )?;
    let cost_rows = match &cost {
        Some(c) => vec![vec![
            frames.len().to_string(),
            atoms.to_string(),
            electrons.to_string(),
            c.training_samples.to_string(),
            c.relative_cost.to_string(),
        ]],
        None => Vec::new(),
    };
    write_text(
        &cost_path(cfg, system),
        &write_table(
            &Header::new("cost").with("config_hash", &hash).with("system", system),
            &["frames", "atoms", "electrons", "training_samples", "relative_cost"],
            &cost_rows,
        ),
    )?;
    Ok(ReportSummary {
        system,
        weights,
        cost,
        atoms,
        electrons,
        frames: frames.len(),
    })
}

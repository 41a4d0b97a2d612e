//! Plain-text artifacts passed between pipeline stages.
//!
//! Every artifact opens with `# fragpes <artifact> v1` followed by `# key value`
//! header lines, one of which is the `config_hash` of the stage that wrote it.
//! Floats are written in Rust's shortest round-trip form so a reread file reproduces
//! the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::assembly::hartree_to_kcal;
use crate::geometry::{Atom, Element, Geometry};
use crate::model::{GaussianNet, NNArray};
use crate::sampling::Tessellation;

pub const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {msg}")]
pub struct FormatError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError {
        line,
        msg: msg.into(),
    })
}

/// Header of an artifact: its type tag and `# key value` fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Header {
    pub artifact: String,
    pub fields: BTreeMap<String, String>,
}

impl Header {
    pub fn new(artifact: &str) -> Header {
        Header {
            artifact: artifact.to_string(),
            fields: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Header {
        self.fields.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    pub fn config_hash(&self) -> &str {
        self.get("config_hash").unwrap_or("")
    }

    fn write(&self, out: &mut String) {
        let _ = writeln!(out, "# fragpes {} {FORMAT_VERSION}", self.artifact);
        for (k, v) in &self.fields {
            let _ = writeln!(out, "# {k} {v}");
        }
    }
}

/// Line cursor that skips nothing and tracks 1-based line numbers.
struct Lines<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            lines: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let (i, l) = self.lines.next()?;
        self.last = i + 1;
        Some((i + 1, l))
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str), FormatError> {
        match self.next() {
            Some(x) => Ok(x),
            None => err(self.last + 1, format!("unexpected end of input, expected {what}")),
        }
    }

    /// Next non-blank line, if any.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        loop {
            let (n, l) = self.next()?;
            if !l.trim().is_empty() {
                return Some((n, l));
            }
        }
    }
}

fn read_header(lines: &mut Lines<'_>, artifact: &str) -> Result<Header, FormatError> {
    let (n, first) = lines.expect("artifact header")?;
    let tag: Vec<&str> = first.split_whitespace().collect();
    if tag.len() != 4 || tag[0] != "#" || tag[1] != "fragpes" {
        return err(n, "not a fragpes artifact");
    }
    if tag[2] != artifact {
        return err(n, format!("expected a {artifact} artifact, found {}", tag[2]));
    }
    if tag[3] != FORMAT_VERSION {
        return err(n, format!("unsupported version {}", tag[3]));
    }
    let mut header = Header::new(artifact);
    while let Some(&(_, l)) = lines.lines.peek() {
        let Some(rest) = l.strip_prefix("# ") else {
            break;
        };
        lines.next();
        let mut parts = rest.splitn(2, ' ');
        let key = parts.next().unwrap_or_default();
        let value = parts.next().unwrap_or_default();
        header.fields.insert(key.to_string(), value.to_string());
    }
    Ok(header)
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, FormatError> {
    s.parse()
        .map_or_else(|_| err(line, format!("bad {what}: {s:?}")), Ok)
}

fn parse_finite(s: &str, line: usize, what: &str) -> Result<f64, FormatError> {
    let v: f64 = parse_num(s, line, what)?;
    if v.is_finite() {
        Ok(v)
    } else {
        err(line, format!("{what} is not finite"))
    }
}

fn parse_floats(s: &str, line: usize, sep: char) -> Result<Vec<f64>, FormatError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(sep)
        .map(|t| parse_finite(t.trim(), line, "number"))
        .collect()
}

fn parse_ids(s: &str, line: usize) -> Result<Vec<usize>, FormatError> {
    let ids: Vec<usize> = s
        .split(',')
        .map(|t| parse_num(t, line, "node id"))
        .collect::<Result<_, _>>()?;
    if ids.is_empty() || ids.windows(2).any(|w| w[0] >= w[1]) {
        return err(line, "node ids must be strictly increasing");
    }
    Ok(ids)
}

fn join<T: std::fmt::Display>(items: &[T], sep: &str) -> String {
    let mut s = String::new();
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            s.push_str(sep);
        }
        let _ = write!(s, "{x}");
    }
    s
}

/// `key value` line with a fixed key.
fn keyed<'a>(lines: &mut Lines<'a>, key: &str) -> Result<(usize, &'a str), FormatError> {
    let (n, l) = lines.next_content().map_or_else(|| err(lines.last + 1, format!("missing {key}")), Ok)?;
    match l.trim().split_once(' ') {
        Some((k, v)) if k == key => Ok((n, v.trim())),
        _ if l.trim() == key => Ok((n, "")),
        _ => err(n, format!("expected {key}")),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FragmentRecord {
    pub frame: usize,
    pub rank: usize,
    pub node_ids: Vec<usize>,
    pub kind: String,
    pub multiplicity: i64,
    pub geometry: Geometry,
}

/// Every simplex of every frame of one trajectory, with its atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct FragmentDataset {
    pub header: Header,
    pub records: Vec<FragmentRecord>,
}

pub fn write_fragments(ds: &FragmentDataset) -> String {
    let mut out = String::new();
    ds.header.write(&mut out);
    for r in &ds.records {
        let _ = writeln!(
            out,
            "FRAGMENT {} {} {} {} {} {}",
            r.frame,
            r.rank,
            join(&r.node_ids, ","),
            r.kind,
            r.multiplicity,
            r.geometry.len()
        );
        for a in &r.geometry.atoms {
            let [x, y, z] = a.position;
            let _ = writeln!(out, "{} {x} {y} {z}", a.element);
        }
    }
    out
}

pub fn parse_fragments(text: &str) -> Result<FragmentDataset, FormatError> {
    let mut lines = Lines::new(text);
    let header = read_header(&mut lines, "fragments")?;
    let mut records = Vec::new();
    while let Some((n, l)) = lines.next_content() {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 7 || t[0] != "FRAGMENT" {
            return err(n, "expected FRAGMENT frame rank nodes kind multiplicity natoms");
        }
        let frame = parse_num(t[1], n, "frame")?;
        let rank: usize = parse_num(t[2], n, "rank")?;
        let node_ids = parse_ids(t[3], n)?;
        if node_ids.len() - 1 != rank {
            return err(n, "rank does not match node count");
        }
        let multiplicity = parse_num(t[5], n, "multiplicity")?;
        let natoms: usize = parse_num(t[6], n, "atom count")?;
        let mut atoms = Vec::new();
        for _ in 0..natoms {
            let (m, al) = lines.expect("atom line")?;
            let f: Vec<&str> = al.split_whitespace().collect();
            if f.len() != 4 {
                return err(m, "expected symbol x y z");
            }
            let element = Element::from_symbol(f[0])
                .map_or_else(|| err(m, format!("unknown element {}", f[0])), Ok)?;
            let position = [
                parse_finite(f[1], m, "coordinate")?,
                parse_finite(f[2], m, "coordinate")?,
                parse_finite(f[3], m, "coordinate")?,
            ];
            atoms.push(Atom::new(element, position));
        }
        records.push(FragmentRecord {
            frame,
            rank,
            node_ids,
            kind: t[4].to_string(),
            multiplicity,
            geometry: Geometry {
                atoms,
                frame_id: Some(frame),
            },
        });
    }
    Ok(FragmentDataset { header, records })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelRecord {
    pub kind: String,
    pub frame: usize,
    pub rank: usize,
    pub node_ids: Vec<usize>,
    pub multiplicity: i64,
    /// kcal/mol
    pub delta: f64,
    pub descriptor: Vec<f64>,
}

/// Descriptors with their energy corrections, one row per fragment.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelDataset {
    pub header: Header,
    pub records: Vec<LabelRecord>,
}

const LABEL_COLUMNS: &str = "kind\tframe\trank\tnodes\tmultiplicity\tdelta\tdescriptor";

/// Written in kcal/mol; the `units` header field records that.
pub fn write_labels(ds: &LabelDataset) -> String {
    let mut out = String::new();
    ds.header.clone().with("units", "kcal/mol").write(&mut out);
    out.push_str(LABEL_COLUMNS);
    out.push('\n');
    for r in &ds.records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.kind,
            r.frame,
            r.rank,
            join(&r.node_ids, ","),
            r.multiplicity,
            r.delta,
            join(&r.descriptor, ",")
        );
    }
    out
}

/// Accepts `units` of `kcal/mol` (default) or `hartree`; deltas come back in kcal/mol.
pub fn parse_labels(text: &str) -> Result<LabelDataset, FormatError> {
    let mut lines = Lines::new(text);
    let mut header = read_header(&mut lines, "labels")?;
    let hartree = match header.get("units").unwrap_or("kcal/mol") {
        "kcal/mol" => false,
        "hartree" => true,
        other => return err(1, format!("unknown units {other:?}")),
    };
    header.fields.remove("units");
    let (n, cols) = lines.expect("column header")?;
    if cols.trim_end() != LABEL_COLUMNS {
        return err(n, "unexpected column header");
    }
    let mut records = Vec::new();
    while let Some((n, l)) = lines.next_content() {
        let t: Vec<&str> = l.split('\t').collect();
        if t.len() != 7 {
            return err(n, "expected 7 tab-separated columns");
        }
        let rank: usize = parse_num(t[2], n, "rank")?;
        let node_ids = parse_ids(t[3], n)?;
        if node_ids.len() - 1 != rank {
            return err(n, "rank does not match node count");
        }
        let delta = parse_finite(t[5], n, "delta")?;
        records.push(LabelRecord {
            kind: t[0].to_string(),
            frame: parse_num(t[1], n, "frame")?,
            rank,
            node_ids,
            multiplicity: parse_num(t[4], n, "multiplicity")?,
            delta: if hartree { hartree_to_kcal(delta) } else { delta },
            descriptor: parse_floats(t[6], n, ',')?,
        });
    }
    Ok(LabelDataset { header, records })
}

fn write_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub fn write_model(array: &NNArray, header: &Header) -> String {
    let mut out = String::new();
    header.write(&mut out);
    let _ = writeln!(out, "kind {}", array.kind);
    let _ = writeln!(out, "features {}", array.features);
    let _ = writeln!(out, "members {}", array.members.len());
    for (m, net) in array.members.iter().enumerate() {
        let _ = writeln!(out, "member {m}");
        let _ = writeln!(out, "layers {}", join(&net.layer_sizes, " "));
        for (l, w) in net.hidden.iter().enumerate() {
            let _ = writeln!(out, "hidden {l}");
            for row in w.outer_iter() {
                write_row(&mut out, row.iter().copied());
            }
        }
        out.push_str("output\n");
        write_row(&mut out, net.output.iter().copied());
        let _ = writeln!(out, "bias {}", net.output_bias);
    }
    out
}

/// Largest layer width accepted when reading a model.
const MAX_LAYER_WIDTH: usize = 1 << 16;

pub fn parse_model(text: &str) -> Result<(Header, NNArray), FormatError> {
    let mut lines = Lines::new(text);
    let header = read_header(&mut lines, "model")?;
    let (_, kind) = keyed(&mut lines, "kind")?;
    if kind.is_empty() || kind.contains(char::is_whitespace) {
        return err(lines.last, "bad kind");
    }
    let (n, f) = keyed(&mut lines, "features")?;
    let features: usize = parse_num(f, n, "feature count")?;
    let (n, m) = keyed(&mut lines, "members")?;
    let member_count: usize = parse_num(m, n, "member count")?;
    let mut members = Vec::new();
    for expected in 0..member_count {
        let (n, idx) = keyed(&mut lines, "member")?;
        if parse_num::<usize>(idx, n, "member index")? != expected {
            return err(n, "members out of order");
        }
        let (n, sizes) = keyed(&mut lines, "layers")?;
        let layer_sizes: Vec<usize> = sizes
            .split_whitespace()
            .map(|s| parse_num(s, n, "layer size"))
            .collect::<Result<_, _>>()?;
        if layer_sizes.len() < 2
            || layer_sizes.iter().any(|&s| s == 0 || s > MAX_LAYER_WIDTH)
            || layer_sizes[0] - 1 != features
            || *layer_sizes.last().unwrap() != 1
        {
            return err(n, "invalid layer sizes");
        }
        let mut hidden = Vec::new();
        for l in 0..layer_sizes.len() - 2 {
            let (n, idx) = keyed(&mut lines, "hidden")?;
            if parse_num::<usize>(idx, n, "layer index")? != l {
                return err(n, "layers out of order");
            }
            let (rows, cols) = (layer_sizes[l + 1], layer_sizes[l]);
            let mut values = Vec::new();
            for _ in 0..rows {
                let (n, row) = lines.expect("weight row")?;
                let parsed = parse_floats(row, n, ' ')?;
                if parsed.len() != cols {
                    return err(n, format!("expected {cols} weights"));
                }
                values.extend(parsed);
            }
            hidden.push(Array2::from_shape_vec((rows, cols), values).expect("shape checked"));
        }
        keyed(&mut lines, "output")?;
        let (n, row) = lines.expect("output weights")?;
        let output = parse_floats(row, n, ' ')?;
        if output.len() != layer_sizes[layer_sizes.len() - 2] {
            return err(n, "output width does not match last hidden layer");
        }
        let (n, b) = keyed(&mut lines, "bias")?;
        members.push(GaussianNet {
            layer_sizes,
            hidden,
            output: Array1::from(output),
            output_bias: parse_finite(b, n, "bias")?,
        });
    }
    if let Some((n, _)) = lines.next_content() {
        return err(n, "trailing content");
    }
    Ok((
        header,
        NNArray {
            kind: kind.to_string(),
            features,
            members,
        },
    ))
}

/// Primitive tessellation of one kind plus the indices of its training samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterFile {
    pub header: Header,
    pub kind: String,
    pub tessellation: Tessellation,
    /// Indices into the kind's rows of the primitive label dataset.
    pub training: Vec<usize>,
}

pub fn write_clusters(c: &ClusterFile) -> String {
    let mut out = String::new();
    c.header.write(&mut out);
    let t = &c.tessellation;
    let _ = writeln!(out, "kind {}", c.kind);
    let _ = writeln!(out, "width {}", t.width);
    let _ = writeln!(out, "eta0 {}", t.eta0);
    let _ = writeln!(out, "seed {}", t.seed);
    let _ = writeln!(out, "centroids {} {}", t.centroids.nrows(), t.centroids.ncols());
    for row in t.centroids.outer_iter() {
        write_row(&mut out, row.iter().copied());
    }
    let _ = writeln!(out, "training {}", c.training.len());
    out.push_str(&join(&c.training, " "));
    out.push('\n');
    out
}

pub fn parse_clusters(text: &str) -> Result<ClusterFile, FormatError> {
    let mut lines = Lines::new(text);
    let header = read_header(&mut lines, "clusters")?;
    let (_, kind) = keyed(&mut lines, "kind")?;
    let (n, w) = keyed(&mut lines, "width")?;
    let width = parse_finite(w, n, "width")?;
    let (n, e) = keyed(&mut lines, "eta0")?;
    let eta0 = parse_finite(e, n, "eta0")?;
    let (n, s) = keyed(&mut lines, "seed")?;
    let seed = parse_num(s, n, "seed")?;
    let (n, dims) = keyed(&mut lines, "centroids")?;
    let d: Vec<usize> = dims
        .split_whitespace()
        .map(|x| parse_num(x, n, "dimension"))
        .collect::<Result<_, _>>()?;
    let [rows, cols] = d[..] else {
        return err(n, "expected centroid rows and columns");
    };
    let mut values = Vec::new();
    for _ in 0..rows {
        let (n, row) = lines.expect("centroid row")?;
        let parsed = parse_floats(row, n, ' ')?;
        if parsed.len() != cols {
            return err(n, format!("expected {cols} coordinates"));
        }
        values.extend(parsed);
    }
    let centroids = Array2::from_shape_vec((rows, cols), values).expect("shape checked");
    let (n, count) = keyed(&mut lines, "training")?;
    let count: usize = parse_num(count, n, "training count")?;
    let (n, row) = lines.next().unwrap_or((lines.last + 1, ""));
    let training: Vec<usize> = row
        .split_whitespace()
        .map(|x| parse_num(x, n, "training index"))
        .collect::<Result<_, _>>()?;
    if training.len() != count {
        return err(n, format!("expected {count} training indices"));
    }
    Ok(ClusterFile {
        header,
        kind: kind.to_string(),
        tessellation: Tessellation {
            centroids,
            width,
            eta0,
            seed,
        },
        training,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub kind: String,
    pub seed: u64,
    pub features: usize,
    /// Labelled samples of the kind.
    pub samples: usize,
    pub train_samples: usize,
    /// MAE on the training set, kcal/mol.
    pub train_mae: f64,
    /// MAE on every labelled sample of the kind, kcal/mol.
    pub full_mae: f64,
    /// Target slices applied by transfer, ascending.
    pub slices_consumed: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub header: Header,
    pub entries: Vec<ManifestEntry>,
}

const MANIFEST_COLUMNS: &str =
    "kind\tseed\tfeatures\tsamples\ttrain_samples\ttrain_mae\tfull_mae\tslices_consumed";

pub fn write_manifest(m: &Manifest) -> String {
    let mut out = String::new();
    m.header.write(&mut out);
    out.push_str(MANIFEST_COLUMNS);
    out.push('\n');
    for e in &m.entries {
        let slices = if e.slices_consumed.is_empty() {
            "-".to_string()
        } else {
            join(&e.slices_consumed, ",")
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.kind, e.seed, e.features, e.samples, e.train_samples, e.train_mae, e.full_mae, slices
        );
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Manifest, FormatError> {
    let mut lines = Lines::new(text);
    let header = read_header(&mut lines, "manifest")?;
    let (n, cols) = lines.expect("column header")?;
    if cols.trim_end() != MANIFEST_COLUMNS {
        return err(n, "unexpected column header");
    }
    let mut entries = Vec::new();
    while let Some((n, l)) = lines.next_content() {
        let t: Vec<&str> = l.split('\t').collect();
        if t.len() != 8 {
            return err(n, "expected 8 tab-separated columns");
        }
        let slices_consumed = if t[7] == "-" {
            Vec::new()
        } else {
            t[7].split(',')
                .map(|s| parse_num(s, n, "slice"))
                .collect::<Result<_, _>>()?
        };
        entries.push(ManifestEntry {
            kind: t[0].to_string(),
            seed: parse_num(t[1], n, "seed")?,
            features: parse_num(t[2], n, "features")?,
            samples: parse_num(t[3], n, "samples")?,
            train_samples: parse_num(t[4], n, "train samples")?,
            train_mae: parse_finite(t[5], n, "train MAE")?,
            full_mae: parse_finite(t[6], n, "full MAE")?,
            slices_consumed,
        });
    }
    Ok(Manifest { header, entries })
}

/// Delimited report with a column row; values are written as given.
pub fn write_table(header: &Header, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    header.write(&mut out);
    out.push_str(&columns.join("\t"));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(kind: &str) -> Header {
        Header::new(kind).with("config_hash", "00ff").with("system", "primitive")
    }

    #[test]
    fn fragments_round_trip() {
        let ds = FragmentDataset {
            header: header("fragments"),
            records: vec![FragmentRecord {
                frame: 3,
                rank: 1,
                node_ids: vec![0, 2],
                kind: "H4O2".into(),
                multiplicity: -1,
                geometry: Geometry {
                    atoms: vec![
                        Atom::new(Element::O, [0.1, -0.2, 1e-17]),
                        Atom::new(Element::H, [1.0 / 3.0, 0.0, 2.5]),
                    ],
                    frame_id: Some(3),
                },
            }],
        };
        let text = write_fragments(&ds);
        assert_eq!(parse_fragments(&text).unwrap(), ds);
    }

    #[test]
    fn labels_round_trip_and_units() {
        let ds = LabelDataset {
            header: header("labels"),
            records: vec![LabelRecord {
                kind: "H2O".into(),
                frame: 0,
                rank: 0,
                node_ids: vec![4],
                multiplicity: 1,
                delta: 0.1 + 0.2,
                descriptor: vec![1.5, 0.9572, 0.9572],
            }],
        };
        let text = write_labels(&ds);
        assert_eq!(parse_labels(&text).unwrap(), ds);
        let hartree = text.replace("# units kcal/mol", "# units hartree");
        let parsed = parse_labels(&hartree).unwrap();
        assert!((parsed.records[0].delta - 0.3 * 627.5094740631).abs() < 1e-9);
        assert!(parse_labels(&text.replace("kcal/mol", "eV")).is_err());
    }

    #[test]
    fn model_round_trip() {
        let array = NNArray::new("H3O+", 3, 2, 7).unwrap();
        let text = write_model(&array, &header("model"));
        let (h, back) = parse_model(&text).unwrap();
        assert_eq!(back, array);
        assert_eq!(h.config_hash(), "00ff");
        assert!(parse_model(&text.replace("features 3", "features 4")).is_err());
        let truncated = &text[..text.len() / 2];
        assert!(parse_model(truncated).is_err());
    }

    #[test]
    fn clusters_round_trip() {
        let c = ClusterFile {
            header: header("clusters"),
            kind: "H4O2".into(),
            tessellation: Tessellation {
                centroids: Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 2.5, -3.0]).unwrap(),
                width: 0.75,
                eta0: 0.01,
                seed: 99,
            },
            training: vec![0, 17],
        };
        assert_eq!(parse_clusters(&write_clusters(&c)).unwrap(), c);
        let empty = ClusterFile {
            training: vec![],
            ..c
        };
        assert_eq!(parse_clusters(&write_clusters(&empty)).unwrap(), empty);
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            header: header("manifest"),
            entries: vec![
                ManifestEntry {
                    kind: "H2O".into(),
                    seed: 1,
                    features: 3,
                    samples: 10,
                    train_samples: 1,
                    train_mae: 0.0,
                    full_mae: 0.5,
                    slices_consumed: vec![],
                },
                ManifestEntry {
                    kind: "H4O2".into(),
                    seed: u64::MAX,
                    features: 15,
                    samples: 100,
                    train_samples: 10,
                    train_mae: 0.125,
                    full_mae: 0.25,
                    slices_consumed: vec![2, 3],
                },
            ],
        };
        assert_eq!(parse_manifest(&write_manifest(&m)).unwrap(), m);
    }

    #[test]
    fn wrong_artifact_rejected() {
        let text = write_manifest(&Manifest {
            header: header("manifest"),
            entries: vec![],
        });
        assert!(parse_labels(&text).is_err());
        assert!(parse_fragments("").is_err());
        assert!(parse_fragments("# fragpes fragments v2\n").is_err());
        let e = parse_fragments("# fragpes fragments v1\nFRAGMENT 0 1 0 H2O 1 0\n").unwrap_err();
        assert_eq!(e.line, 2);
    }
}

//! Synthetic water-cluster trajectories.
//!
//! A cluster template places oxygens by random sequential addition, each new oxygen
//! at `spacing * (1 + U(0, spread))` from a random existing one and no closer than
//! `spacing` to any other. Every frame jitters the oxygens with Gaussian noise and
//! tilts each molecule by a small random rotation around its template orientation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Atom, Element, Geometry};
use crate::linalg::{norm, Mat3, Vec3};

const OH_BOND: f64 = 0.9572;
const HOH_ANGLE_DEG: f64 = 104.52;
const HYDRONIUM_OH_BOND: f64 = 0.98;
const HYDRONIUM_HOH_ANGLE_DEG: f64 = 113.0;
const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("could not place {0} oxygens at the requested spacing")]
    Placement(usize),
    #[error("invalid ensemble parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleParams {
    pub nodes: usize,
    pub frames: usize,
    /// Minimum template O-O distance, Å.
    pub spacing: f64,
    /// Relative spread of the template neighbour distance above `spacing`.
    pub spread: f64,
    /// Per-frame standard deviation of each O coordinate, Å.
    pub jitter: f64,
    /// Per-frame standard deviation of each molecule's tilt angle, radians.
    pub tilt: f64,
    /// Per-frame standard deviation of each O-H bond length, Å.
    pub bond_jitter: f64,
    /// Make the first node a hydronium ion.
    pub protonated: bool,
    pub seed: u64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            nodes: 6,
            frames: 100,
            spacing: 2.8,
            spread: 0.15,
            jitter: 0.08,
            tilt: 0.1,
            bond_jitter: 0.02,
            protonated: false,
            seed: 0,
        }
    }
}

fn rotation_from_quaternion([w, x, y, z]: [f64; 4]) -> Mat3 {
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let q: [f64; 4] = std::array::from_fn(|_| normal.sample(rng));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    rotation_from_quaternion(q.map(|v| v / n))
}

fn small_rotation(rng: &mut impl Rng, sigma: f64) -> Mat3 {
    if sigma == 0.0 {
        return rotation_from_quaternion([1.0, 0.0, 0.0, 0.0]);
    }
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
    let (s, c) = (angle / 2.0).sin_cos();
    rotation_from_quaternion([c, s * axis[0], s * axis[1], s * axis[2]])
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

fn rotate(m: &Mat3, v: &Vec3) -> Vec3 {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

/// Hydrogen offsets of a water (in the xz-plane) or a pyramidal hydronium.
fn hydrogen_offsets(hydronium: bool) -> Vec<Vec3> {
    if hydronium {
        // three bonds at equal angles from the -z axis
        let theta = HYDRONIUM_HOH_ANGLE_DEG.to_radians();
        let sin_tilt = (2.0 / 3.0_f64.sqrt()) * (theta / 2.0).sin();
        let cos_tilt = (1.0 - sin_tilt * sin_tilt).sqrt();
        (0..3)
            .map(|k| {
                let phi = k as f64 * 2.0 * std::f64::consts::PI / 3.0;
                [
                    HYDRONIUM_OH_BOND * sin_tilt * phi.cos(),
                    HYDRONIUM_OH_BOND * sin_tilt * phi.sin(),
                    -HYDRONIUM_OH_BOND * cos_tilt,
                ]
            })
            .collect()
    } else {
        let half = HOH_ANGLE_DEG.to_radians() / 2.0;
        vec![
            [OH_BOND * half.sin(), 0.0, -OH_BOND * half.cos()],
            [-OH_BOND * half.sin(), 0.0, -OH_BOND * half.cos()],
        ]
    }
}

fn place_oxygens(params: &EnsembleParams, rng: &mut impl Rng) -> Result<Vec<Vec3>, EnsembleError> {
    let mut placed: Vec<Vec3> = vec![[0.0; 3]];
    let mut attempts = 0;
    while placed.len() < params.nodes {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS * params.nodes {
            return Err(EnsembleError::Placement(params.nodes));
        }
        let anchor = placed[rng.random_range(0..placed.len())];
        let dir: [f64; 3] = UnitSphere.sample(rng);
        let r = params.spacing * (1.0 + rng.random_range(0.0..=params.spread));
        let candidate = [anchor[0] + r * dir[0], anchor[1] + r * dir[1], anchor[2] + r * dir[2]];
        let clear = placed
            .iter()
            .all(|p| crate::linalg::distance(p, &candidate) >= params.spacing);
        if clear {
            placed.push(candidate);
        }
    }
    Ok(placed)
}

/// Frames of one synthetic cluster; frame ids run from 0.
pub fn generate_ensemble(params: &EnsembleParams) -> Result<Vec<Geometry>, EnsembleError> {
    if params.nodes == 0 {
        return Err(EnsembleError::InvalidParameter("nodes must be positive".into()));
    }
    for (name, v) in [
        ("spacing", params.spacing),
        ("spread", params.spread),
        ("jitter", params.jitter),
        ("tilt", params.tilt),
        ("bond_jitter", params.bond_jitter),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(EnsembleError::InvalidParameter(format!("{name} = {v}")));
        }
    }
    if params.spacing < 2.0 * OH_BOND {
        return Err(EnsembleError::InvalidParameter(format!(
            "spacing {} leaves hydrogens ambiguous",
            params.spacing
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let oxygens = place_oxygens(params, &mut rng)?;
    let orientations: Vec<Mat3> = (0..params.nodes).map(|_| random_rotation(&mut rng)).collect();
    let jitter = Normal::new(0.0, params.jitter).expect("finite jitter");
    let stretch = Normal::new(0.0, params.bond_jitter).expect("finite bond jitter");

    let mut frames = Vec::with_capacity(params.frames);
    for frame in 0..params.frames {
        let mut atoms = Vec::with_capacity(params.nodes * 3 + 1);
        for (n, (o, orient)) in oxygens.iter().zip(&orientations).enumerate() {
            let center: Vec3 = std::array::from_fn(|k| o[k] + jitter.sample(&mut rng));
            let tilt = mat_mul(&small_rotation(&mut rng, params.tilt), orient);
            atoms.push(Atom::new(Element::O, center));
            for h in hydrogen_offsets(params.protonated && n == 0) {
                let len = norm(&h);
                let scale = (len + stretch.sample(&mut rng)).max(0.5 * len) / len;
                let d = rotate(&tilt, &h.map(|v| v * scale));
                atoms.push(Atom::new(
                    Element::H,
                    [center[0] + d[0], center[1] + d[1], center[2] + d[2]],
                ));
            }
        }
        frames.push(Geometry {
            atoms,
            frame_id: Some(frame),
        });
    }
    Ok(frames)
}

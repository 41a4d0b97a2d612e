//! Gaussian-activation feedforward networks and residual network arrays.
//!
//! A [`GaussianNet`] maps a descriptor with a constant 1 appended through hidden layers
//! computing `exp(-(W_a . x)^2)` per unit to a linear output. An [`NNArray`] chains
//! networks so each member fits what the previous members left unexplained; its
//! prediction is the sum of member outputs.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::descriptor::DescriptorVector;

/// Hidden layers per network.
pub const HIDDEN_LAYERS: usize = 4;
/// Hidden width as a multiple of the feature count.
pub const WIDTH_FACTOR: usize = 4;
/// Networks per array.
pub const ARRAY_MEMBERS: usize = 2;
/// Relative-error denominator floor used by [`gradient_check`].
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("fragment kind mismatch: model is for {expected}, input is {found}")]
    KindMismatch { expected: String, found: String },
    #[error("feature count mismatch: model expects {expected}, input has {found}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("loss became non-finite at epoch {epoch} (learning rate {learning_rate})")]
    NonFiniteLoss { epoch: usize, learning_rate: f64 },
    #[error("invalid network layout: {0}")]
    InvalidLayout(String),
}

/// Layer widths for `d` input features: `[d + 1, 4d, 4d, 4d, 4d, 1]`.
pub fn standard_layout(features: usize) -> Vec<usize> {
    let mut sizes = vec![features + 1];
    sizes.extend(std::iter::repeat_n(WIDTH_FACTOR * features, HIDDEN_LAYERS));
    sizes.push(1);
    sizes
}

/// `exp(-(W_a . x)^2)` for every row `a` of `weights`.
pub fn gaussian_layer_forward(x: ArrayView1<f64>, weights: ArrayView2<f64>) -> Array1<f64> {
    weights.dot(&x).mapv(|z| (-z * z).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianNet {
    /// Input width (features + 1), hidden widths, then 1.
    pub layer_sizes: Vec<usize>,
    /// One `out x in` matrix per hidden layer.
    pub hidden: Vec<Array2<f64>>,
    pub output: Array1<f64>,
    pub output_bias: f64,
}

/// Gradient of the loss with the same shape as a [`GaussianNet`].
#[derive(Clone, Debug)]
pub struct Gradients {
    pub hidden: Vec<Array2<f64>>,
    pub output: Array1<f64>,
    pub output_bias: f64,
}

impl Gradients {
    fn zeros_like(net: &GaussianNet) -> Gradients {
        Gradients {
            hidden: net.hidden.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            output: Array1::zeros(net.output.len()),
            output_bias: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.hidden
            .iter()
            .flat_map(|w| w.iter().copied())
            .chain(self.output.iter().copied())
            .chain(std::iter::once(self.output_bias))
            .collect()
    }
}

struct Activations {
    /// Layer inputs: `layers[0]` is the biased input, `layers[l]` the l-th hidden output.
    layers: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    output: Array1<f64>,
}

impl GaussianNet {
    /// Hidden weights uniform in `±1/sqrt(fan_in)`; output weights and bias start at zero.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<GaussianNet, ModelError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(ModelError::InvalidLayout(format!("{layer_sizes:?}")));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(ModelError::InvalidLayout(
                "output layer must have width 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = layer_sizes
            .windows(2)
            .take(layer_sizes.len() - 2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-bound..=bound))
            })
            .collect();
        let last_hidden = layer_sizes[layer_sizes.len() - 2];
        Ok(GaussianNet {
            layer_sizes: layer_sizes.to_vec(),
            hidden,
            output: Array1::zeros(last_hidden),
            output_bias: 0.0,
        })
    }

    pub fn for_features(features: usize, seed: u64) -> Result<GaussianNet, ModelError> {
        GaussianNet::new(&standard_layout(features), seed)
    }

    pub fn features(&self) -> usize {
        self.layer_sizes[0] - 1
    }

    pub fn parameter_count(&self) -> usize {
        self.hidden.iter().map(|w| w.len()).sum::<usize>() + self.output.len() + 1
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.hidden
            .iter()
            .flat_map(|w| w.iter().copied())
            .chain(self.output.iter().copied())
            .chain(std::iter::once(self.output_bias))
            .collect()
    }

    fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for w in &mut self.hidden {
            if index < w.len() {
                return w.iter_mut().nth(index).expect("index checked");
            }
            index -= w.len();
        }
        if index < self.output.len() {
            return &mut self.output[index];
        }
        &mut self.output_bias
    }

    /// Data-dependent start for raw, unscaled inputs.
    ///
    /// Layer by layer, each hidden unit's pre-activation over `inputs` is shifted to zero
    /// mean and scaled to unit standard deviation. The first layer shifts through its
    /// bias column; deeper layers, which have none, remove the weight component along
    /// the mean incoming activation. Output weights are untouched.
    pub fn calibrate(&mut self, inputs: ArrayView2<f64>) {
        if inputs.nrows() == 0 {
            return;
        }
        let mut x = inputs.to_owned();
        for (l, w) in self.hidden.iter_mut().enumerate() {
            let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
            let x_norm2 = x_mean.dot(&x_mean);
            for mut row in w.rows_mut() {
                let z = x.dot(&row);
                let mean = z.mean().unwrap_or(0.0);
                if l == 0 {
                    let last = row.len() - 1;
                    row[last] -= mean;
                } else if x_norm2 > 0.0 {
                    row.scaled_add(-mean / x_norm2, &x_mean);
                }
                let sd = x.dot(&row).std(0.0);
                if sd > 1e-12 {
                    row /= sd;
                }
            }
            x = x.dot(&w.t()).mapv(|v| (-v * v).exp());
        }
    }

    /// Prediction for raw features (the constant 1 is appended here).
    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut x = Array1::from_iter(features.iter().copied().chain(std::iter::once(1.0)));
        for w in &self.hidden {
            x = gaussian_layer_forward(x.view(), w.view());
        }
        self.output.dot(&x) + self.output_bias
    }

    /// Predictions for rows that already carry the trailing 1.
    pub fn predict_biased(&self, inputs: ArrayView2<f64>) -> Array1<f64> {
        self.forward(inputs).output
    }

    fn forward(&self, inputs: ArrayView2<f64>) -> Activations {
        let mut layers = vec![inputs.to_owned()];
        let mut pre = Vec::with_capacity(self.hidden.len());
        for w in &self.hidden {
            let z = layers.last().unwrap().dot(&w.t());
            layers.push(z.mapv(|v| (-v * v).exp()));
            pre.push(z);
        }
        let output = layers.last().unwrap().dot(&self.output) + self.output_bias;
        Activations {
            layers,
            pre,
            output,
        }
    }

    /// Mean squared error and its gradient over a batch of biased inputs.
    pub fn loss_and_gradients(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView1<f64>,
    ) -> (f64, Gradients) {
        let acts = self.forward(inputs);
        let n = targets.len() as f64;
        let residual = &acts.output - &targets;
        let loss = residual.mapv(|r| r * r).sum() / n;
        let delta = residual * (2.0 / n);

        let mut grads = Gradients::zeros_like(self);
        let last = acts.layers.last().unwrap();
        grads.output = last.t().dot(&delta);
        grads.output_bias = delta.sum();
        let mut upstream = delta
            .view()
            .insert_axis(Axis(1))
            .dot(&self.output.view().insert_axis(Axis(0)));
        for l in (0..self.hidden.len()).rev() {
            // d/dz exp(-z^2) = -2 z exp(-z^2)
            let h = &acts.layers[l + 1];
            let z = &acts.pre[l];
            let mut dz = upstream;
            ndarray::Zip::from(&mut dz)
                .and(z)
                .and(h)
                .for_each(|d, &z, &h| *d *= -2.0 * z * h);
            grads.hidden[l] = dz.t().dot(&acts.layers[l]);
            upstream = if l > 0 {
                dz.dot(&self.hidden[l])
            } else {
                Array2::zeros((0, 0))
            };
        }
        (loss, grads)
    }

    fn apply(&mut self, step: &Gradients) {
        for (w, g) in self.hidden.iter_mut().zip(&step.hidden) {
            *w += g;
        }
        self.output += &step.output;
        self.output_bias += step.output_bias;
    }
}

/// Descriptor rows with targets; inputs keep a trailing column of ones.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSet {
    pub inputs: Array2<f64>,
    pub targets: Array1<f64>,
}

impl TrainSet {
    pub fn from_features(features: ArrayView2<f64>, targets: Array1<f64>) -> TrainSet {
        let (n, d) = features.dim();
        let mut inputs = Array2::ones((n, d + 1));
        inputs.slice_mut(s![.., ..d]).assign(&features);
        TrainSet { inputs, targets }
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> TrainSet {
        let d = rows.first().map_or(0, Vec::len);
        let mut inputs = Array2::ones((rows.len(), d + 1));
        for (i, row) in rows.iter().enumerate() {
            inputs.slice_mut(s![i, ..d]).assign(&ArrayView1::from(row.as_slice()));
        }
        TrainSet {
            inputs,
            targets: Array1::from(targets.to_vec()),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.ncols() - 1
    }

    pub fn subset(&self, rows: &[usize]) -> TrainSet {
        TrainSet {
            inputs: self.inputs.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
        }
    }

    pub fn concat(&self, other: &TrainSet) -> TrainSet {
        TrainSet {
            inputs: ndarray::concatenate(Axis(0), &[self.inputs.view(), other.inputs.view()])
                .expect("feature counts match"),
            targets: ndarray::concatenate(Axis(0), &[self.targets.view(), other.targets.view()])
                .expect("1-D"),
        }
    }

    fn with_targets(&self, targets: Array1<f64>) -> TrainSet {
        TrainSet {
            inputs: self.inputs.clone(),
            targets,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without an improvement of at least `min_delta` before stopping.
    pub patience: usize,
    /// Squared kcal/mol.
    pub min_delta: f64,
    /// Halve the learning rate after this many epochs without improvement.
    pub plateau_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            min_delta: 1e-7,
            plateau_epochs: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Full-set MSE before training (entry 0) and after every epoch.
    pub loss_trace: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

pub fn mse(net: &GaussianNet, data: &TrainSet) -> f64 {
    let pred = net.predict_biased(data.inputs.view());
    (&pred - &data.targets).mapv(|r| r * r).mean().unwrap_or(0.0)
}

/// Mini-batch SGD with momentum on the mean squared error.
///
/// The best weights seen (including the starting point) are kept and restored at the
/// end, so the returned network is never worse on `data` than the one passed in.
/// The learning rate halves after `plateau_epochs` epochs without improvement and
/// whenever the loss more than doubles (which also rolls back to the best weights).
pub fn train_network(
    net: &mut GaussianNet,
    data: &TrainSet,
    cfg: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if data.features() != net.features() {
        return Err(ModelError::FeatureMismatch {
            expected: net.features(),
            found: data.features(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lr = cfg.learning_rate;
    let mut best_loss = mse(net, data);
    if !best_loss.is_finite() {
        return Err(ModelError::NonFiniteLoss {
            epoch: 0,
            learning_rate: lr,
        });
    }
    let mut best_net = net.clone();
    let mut best_epoch = 0;
    let mut trace = vec![best_loss];
    let mut velocity = Gradients::zeros_like(net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut since_best = 0;
    // patience only resets on improvements of at least min_delta over this
    let mut reference = best_loss;
    let mut stopped_early = false;
    let mut epoch = 0;

    while epoch < cfg.max_epochs {
        epoch += 1;
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let inputs = data.inputs.select(Axis(0), batch);
            let targets = data.targets.select(Axis(0), batch);
            let (_, grads) = net.loss_and_gradients(inputs.view(), targets.view());
            for (v, g) in velocity.hidden.iter_mut().zip(&grads.hidden) {
                v.zip_mut_with(g, |v, &g| *v = cfg.momentum * *v - lr * g);
            }
            velocity
                .output
                .zip_mut_with(&grads.output, |v, &g| *v = cfg.momentum * *v - lr * g);
            velocity.output_bias = cfg.momentum * velocity.output_bias - lr * grads.output_bias;
            net.apply(&velocity);
        }
        let loss = mse(net, data);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch,
                learning_rate: lr,
            });
        }
        trace.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_net.clone_from(net);
            best_epoch = epoch;
        }
        if loss < reference - cfg.min_delta {
            reference = loss;
            since_best = 0;
            continue;
        }
        since_best += 1;
        if loss > 2.0 * best_loss {
            net.clone_from(&best_net);
            velocity = Gradients::zeros_like(net);
            lr *= 0.5;
        } else if cfg.plateau_epochs > 0 && since_best % cfg.plateau_epochs == 0 {
            lr *= 0.5;
        }
        if since_best >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    *net = best_net;
    Ok(TrainReport {
        loss_trace: trace,
        best_epoch,
        best_loss,
        epochs_run: epoch,
        stopped_early,
    })
}

/// Largest relative difference between backpropagated and central-difference
/// gradients of the squared error on one sample, over every weight.
///
/// Relative error is `|a - n| / max(|a|, |n|, GRADIENT_CHECK_FLOOR)`.
pub fn gradient_check(net: &GaussianNet, features: &[f64], target: f64, h: f64) -> f64 {
    let sample = TrainSet::from_rows(&[features.to_vec()], &[target]);
    let (_, grads) = net.loss_and_gradients(sample.inputs.view(), sample.targets.view());
    let analytic = grads.flatten();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let original = *probe.parameter_mut(i);
        *probe.parameter_mut(i) = original + h;
        let up = mse(&probe, &sample);
        *probe.parameter_mut(i) = original - h;
        let down = mse(&probe, &sample);
        *probe.parameter_mut(i) = original;
        let numeric = (up - down) / (2.0 * h);
        let scale = a.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

/// Networks summed to predict one fragment kind's energy correction.
#[derive(Clone, Debug, PartialEq)]
pub struct NNArray {
    pub kind: String,
    pub features: usize,
    pub members: Vec<GaussianNet>,
}

impl NNArray {
    pub fn new(kind: &str, features: usize, members: usize, seed: u64) -> Result<NNArray, ModelError> {
        let members = (0..members as u64)
            .map(|m| GaussianNet::for_features(features, seed.wrapping_add(m)))
            .collect::<Result<_, _>>()?;
        Ok(NNArray {
            kind: kind.to_string(),
            features,
            members,
        })
    }

    pub fn predict_features(&self, features: &[f64]) -> f64 {
        self.members.iter().map(|m| m.predict(features)).sum()
    }

    pub fn predict_biased(&self, inputs: ArrayView2<f64>) -> Array1<f64> {
        let mut total = Array1::zeros(inputs.nrows());
        for m in &self.members {
            total += &m.predict_biased(inputs);
        }
        total
    }

    pub fn mse(&self, data: &TrainSet) -> f64 {
        (&self.predict_biased(data.inputs.view()) - &data.targets)
            .mapv(|r| r * r)
            .mean()
            .unwrap_or(0.0)
    }

    pub fn mae(&self, data: &TrainSet) -> f64 {
        (&self.predict_biased(data.inputs.view()) - &data.targets)
            .mapv(f64::abs)
            .mean()
            .unwrap_or(0.0)
    }

    /// Energy correction for a descriptor of this array's kind.
    pub fn predict(&self, v: &DescriptorVector) -> Result<f64, ModelError> {
        if v.kind != self.kind {
            return Err(ModelError::KindMismatch {
                expected: self.kind.clone(),
                found: v.kind.clone(),
            });
        }
        if v.values.len() != self.features {
            return Err(ModelError::FeatureMismatch {
                expected: self.features,
                found: v.values.len(),
            });
        }
        Ok(self.predict_features(&v.values))
    }
}

/// Trains the members in order, each on what the previous members leave unexplained.
fn fit_residuals(
    members: &mut [GaussianNet],
    data: &TrainSet,
    cfg: &TrainConfig,
) -> Result<Vec<TrainReport>, ModelError> {
    let mut residual = data.targets.clone();
    let mut reports = Vec::with_capacity(members.len());
    for (m, net) in members.iter_mut().enumerate() {
        let member_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(m as u64),
            ..cfg.clone()
        };
        let stage = data.with_targets(residual.clone());
        reports.push(train_network(net, &stage, &member_cfg)?);
        residual -= &net.predict_biased(data.inputs.view());
    }
    Ok(reports)
}

/// Fresh array for `kind`: member 1 fits the labels, member 2 the residuals.
pub fn train_array(
    kind: &str,
    data: &TrainSet,
    cfg: &TrainConfig,
) -> Result<(NNArray, Vec<TrainReport>), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut array = NNArray::new(kind, data.features(), ARRAY_MEMBERS, cfg.seed)?;
    for net in &mut array.members {
        net.calibrate(data.inputs.view());
    }
    let reports = fit_residuals(&mut array.members, data, cfg)?;
    Ok((array, reports))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferReport {
    pub slice_phase: Vec<TrainReport>,
    pub fine_tune_phase: Vec<TrainReport>,
}

/// Warm-started update of an array with a new slice.
///
/// The members first continue training on the slice's training set, then are
/// fine-tuned on the cumulative set (every training point so far) at
/// `fine_tune_scale` times the learning rate.
pub fn transfer_slice(
    array: &mut NNArray,
    slice_set: &TrainSet,
    cumulative_set: &TrainSet,
    cfg: &TrainConfig,
    fine_tune_scale: f64,
) -> Result<TransferReport, ModelError> {
    for set in [slice_set, cumulative_set] {
        if set.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        if set.features() != array.features {
            return Err(ModelError::FeatureMismatch {
                expected: array.features,
                found: set.features(),
            });
        }
    }
    let slice_phase = fit_residuals(&mut array.members, slice_set, cfg)?;
    let fine_cfg = TrainConfig {
        learning_rate: cfg.learning_rate * fine_tune_scale,
        seed: cfg.seed.wrapping_add(1000),
        ..cfg.clone()
    };
    let fine_tune_phase = fit_residuals(&mut array.members, cumulative_set, &fine_cfg)?;
    Ok(TransferReport {
        slice_phase,
        fine_tune_phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(layout: &[usize], seed: u64) -> GaussianNet {
        let mut net = GaussianNet::new(layout, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        net.output.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        net.output_bias = rng.random_range(-1.0..1.0);
        net
    }

    /// Straight-line forward pass written out loop by loop.
    fn reference_forward(net: &GaussianNet, features: &[f64]) -> f64 {
        let mut x: Vec<f64> = features.to_vec();
        x.push(1.0);
        for w in &net.hidden {
            let mut next = Vec::with_capacity(w.nrows());
            for a in 0..w.nrows() {
                let mut z = 0.0;
                for b in 0..w.ncols() {
                    z += w[[a, b]] * x[b];
                }
                next.push((-z * z).exp());
            }
            x = next;
        }
        let mut out = net.output_bias;
        for (w, v) in net.output.iter().zip(&x) {
            out += w * v;
        }
        out
    }

    #[test]
    fn gaussian_layer_values() {
        let x = Array1::from(vec![1.0, 1.0]);
        let w = Array2::from_shape_vec((2, 2), vec![1.0, 1.0, 1.0, -1.0]).unwrap();
        let out = gaussian_layer_forward(x.view(), w.view());
        assert!((out[0] - 0.018315638888734).abs() < 1e-12);
        assert_eq!(out[1], 1.0);
        let zero = Array2::zeros((3, 2));
        assert_eq!(gaussian_layer_forward(x.view(), zero.view()).to_vec(), vec![1.0; 3]);
    }

    #[test]
    fn standard_layout_widths() {
        assert_eq!(standard_layout(3), vec![4, 12, 12, 12, 12, 1]);
        let net = GaussianNet::for_features(15, 0).unwrap();
        assert_eq!(net.hidden.len(), 4);
        assert_eq!(net.hidden[0].dim(), (60, 16));
        assert_eq!(net.output.len(), 60);
        assert!(GaussianNet::new(&[3, 4, 2], 0).is_err());
        assert!(GaussianNet::new(&[3], 0).is_err());
    }

    #[test]
    fn forward_matches_reference() {
        let net = random_net(&standard_layout(3), 11);
        for features in [[0.5, 1.0, -0.3], [2.0, 0.0, 1.0], [0.0, 0.0, 0.0]] {
            assert!((net.predict(&features) - reference_forward(&net, &features)).abs() < 1e-13);
        }
        let zero = GaussianNet {
            hidden: net.hidden.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            ..net.clone()
        };
        assert!((zero.predict(&[1.0, 2.0, 3.0]) - reference_forward(&zero, &[1.0, 2.0, 3.0])).abs() < 1e-13);
    }

    #[test]
    fn array_prediction_is_member_sum() {
        let mut array = NNArray::new("H4O2", 2, 2, 0).unwrap();
        array.members[0].output_bias = 0.3;
        array.members[1].output_bias = -0.1;
        let v = DescriptorVector {
            kind: "H4O2".into(),
            values: vec![1.0, 2.0],
            degenerate: false,
        };
        assert!((array.predict(&v).unwrap() - 0.2).abs() < 1e-15);

        let single = NNArray {
            members: vec![array.members[0].clone()],
            ..array.clone()
        };
        assert_eq!(single.predict(&v).unwrap(), array.members[0].predict(&v.values));

        let wrong_kind = DescriptorVector {
            kind: "H2O".into(),
            ..v.clone()
        };
        assert!(matches!(array.predict(&wrong_kind), Err(ModelError::KindMismatch { .. })));
        let wrong_len = DescriptorVector {
            values: vec![1.0],
            ..v
        };
        assert!(matches!(array.predict(&wrong_len), Err(ModelError::FeatureMismatch { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = random_net(&standard_layout(3), 5);
        let err = gradient_check(&net, &[0.4, 0.9, 0.2], 0.7, 1e-5);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_weight_gradients_are_finite() {
        let mut net = GaussianNet::for_features(2, 1).unwrap();
        for w in &mut net.hidden {
            w.fill(0.0);
        }
        let err = gradient_check(&net, &[0.3, 0.1], 1.0, 1e-5);
        assert!(err.is_finite() && err < 1e-6, "{err}");
    }

    #[test]
    fn linear_only_gradients_are_exact() {
        let net = random_net(&[3, 1], 2);
        assert!(net.hidden.is_empty());
        let err = gradient_check(&net, &[0.5, -1.5], 0.25, 1e-5);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn calibration_centres_every_hidden_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.random_range(2.0..8.0)).collect())
            .collect();
        let data = TrainSet::from_rows(&rows, &vec![0.0; rows.len()]);
        let mut net = GaussianNet::for_features(3, 1).unwrap();
        net.calibrate(data.inputs.view());
        let acts = net.forward(data.inputs.view());
        for z in &acts.pre {
            for col in z.columns() {
                assert!(col.mean().unwrap().abs() < 1e-9);
                assert!((col.std(0.0) - 1.0).abs() < 1e-9);
            }
        }
        // output untouched, so predictions are still zero
        assert!(acts.output.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_target_is_fit() {
        let rows = vec![vec![1.0, 2.0]; 16];
        let data = TrainSet::from_rows(&rows, &[0.75; 16]);
        let mut net = GaussianNet::for_features(2, 3).unwrap();
        let report = train_network(&mut net, &data, &TrainConfig::default()).unwrap();
        assert!(report.best_loss < 1e-7, "{report:?}");
        assert!(mse(&net, &data) < 1e-7);
    }

    #[test]
    fn best_losses_never_increase() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 10.0]).collect();
        let targets: Vec<f64> = rows.iter().map(|r| (r[0] - 2.0).powi(2)).collect();
        let data = TrainSet::from_rows(&rows, &targets);
        let mut net = GaussianNet::for_features(1, 4).unwrap();
        let cfg = TrainConfig {
            max_epochs: 60,
            ..TrainConfig::default()
        };
        let report = train_network(&mut net, &data, &cfg).unwrap();
        let mut running = f64::INFINITY;
        for &l in &report.loss_trace {
            running = running.min(l);
        }
        assert_eq!(running, report.best_loss);
        assert!(report.best_loss <= report.loss_trace[0]);
        assert!((mse(&net, &data) - report.best_loss).abs() < 1e-15);
    }

    #[test]
    fn plateau_triggers_early_stop() {
        // labels already matched by the zero-initialised output: nothing to improve
        let data = TrainSet::from_rows(&[vec![1.0], vec![2.0]], &[0.0, 0.0]);
        let mut net = GaussianNet::for_features(1, 0).unwrap();
        let report = train_network(&mut net, &data, &TrainConfig::default()).unwrap();
        assert!(report.stopped_early);
        assert_eq!(report.best_epoch, 0);
        assert_eq!(report.epochs_run, 20);
    }

    #[test]
    fn training_errors() {
        let empty = TrainSet::from_rows(&[], &[]);
        let mut net = GaussianNet::for_features(1, 0).unwrap();
        assert_eq!(
            train_network(&mut net, &empty, &TrainConfig::default()),
            Err(ModelError::EmptyDataset)
        );
        assert!(matches!(
            train_array("H2O", &empty, &TrainConfig::default()),
            Err(ModelError::EmptyDataset)
        ));
        let wide = TrainSet::from_rows(&[vec![1.0, 2.0]], &[0.0]);
        assert!(matches!(
            train_network(&mut net, &wide, &TrainConfig::default()),
            Err(ModelError::FeatureMismatch { expected: 1, found: 2 })
        ));
        let bad = TrainSet::from_rows(&[vec![f64::NAN]], &[0.0]);
        assert!(matches!(
            train_network(&mut net, &bad, &TrainConfig::default()),
            Err(ModelError::NonFiniteLoss { epoch: 0, .. })
        ));
    }

    #[test]
    fn exact_first_member_leaves_nothing_for_the_second() {
        let data = TrainSet::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], &[0.0; 3]);
        let (array, reports) = train_array("H2O", &data, &TrainConfig::default()).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(array.mse(&data), 0.0);
        assert_eq!(array.members[1].predict(&[2.0]), 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 5.0, 1.0]).collect();
        let targets: Vec<f64> = rows.iter().map(|r| r[0].sin()).collect();
        let data = TrainSet::from_rows(&rows, &targets);
        let cfg = TrainConfig {
            max_epochs: 15,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, _) = train_array("X", &data, &cfg).unwrap();
        let (b, _) = train_array("X", &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn transfer_rejects_mismatched_sets() {
        let mut array = NNArray::new("H2O", 1, 2, 0).unwrap();
        let good = TrainSet::from_rows(&[vec![1.0]], &[0.0]);
        let empty = TrainSet::from_rows(&[], &[]);
        assert_eq!(
            transfer_slice(&mut array, &empty, &good, &TrainConfig::default(), 0.1),
            Err(ModelError::EmptyDataset)
        );
        let wide = TrainSet::from_rows(&[vec![1.0, 2.0]], &[0.0]);
        assert!(matches!(
            transfer_slice(&mut array, &good, &wide, &TrainConfig::default(), 0.1),
            Err(ModelError::FeatureMismatch { .. })
        ));
    }
}

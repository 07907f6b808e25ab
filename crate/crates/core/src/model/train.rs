use serde::{Deserialize, Serialize};

use super::network::{sigmoid, Dense};
use super::{threshold_decide, DecisionModel, ModelError, OperationMask, OperationScores};
use super::{SyntheticDataset, Tuple, DEFAULT_THRESHOLD, INPUT_WIDTH};

/// Parameter update rule for full-batch training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    /// Adam with the usual (0.9, 0.999, 1e-8) constants.
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub hidden: (usize, usize),
    pub threshold: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 200,
            seed: 7,
            hidden: (32, 16),
            threshold: DEFAULT_THRESHOLD,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be positive".into()));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(ModelError::Config("hidden widths must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ModelError::Config("threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn widths(&self) -> [usize; 4] {
        [INPUT_WIDTH, self.hidden.0, self.hidden.1, 4]
    }
}

/// Numerically stable binary cross-entropy on a logit.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Scratch buffers for one forward/backward pass.
struct Pass {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    prev_delta: Vec<f64>,
    active: Vec<usize>,
    /// First-layer weights and gradient, column-major.
    first_t: Vec<f64>,
    first_grad_t: Vec<f64>,
}

impl Pass {
    fn new(model: &DecisionModel) -> Self {
        let n = model.layers().len();
        let first = &model.layers()[0];
        let mut first_t = vec![0.0; first.weights.len()];
        for r in 0..first.rows {
            for c in 0..first.cols {
                first_t[c * first.rows + r] = first.weights[r * first.cols + c];
            }
        }
        Pass {
            first_grad_t: vec![0.0; first_t.len()],
            first_t,
            pre: vec![Vec::new(); n],
            post: vec![Vec::new(); n],
            delta: Vec::new(),
            prev_delta: Vec::new(),
            active: Vec::new(),
        }
    }

    fn finish(self, grads: &mut [Dense]) {
        let g = &mut grads[0];
        for r in 0..g.rows {
            for c in 0..g.cols {
                g.weights[r * g.cols + c] = self.first_grad_t[c * g.rows + r];
            }
        }
    }

    /// Adds `scale * dL/dθ` for one sample to `grads`; returns the sample loss
    /// (mean BCE over the four outputs).
    fn accumulate(
        &mut self,
        model: &DecisionModel,
        input: &[f64],
        label: &[f64; 4],
        scale: f64,
        grads: &mut [Dense],
    ) -> f64 {
        let layers = model.layers();
        let last = layers.len() - 1;
        // Model inputs are mostly zero bits; the first layer only touches
        // the active columns.
        self.active.clear();
        self.active
            .extend(input.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(j, _)| j));
        for (i, layer) in layers.iter().enumerate() {
            let mut z = std::mem::take(&mut self.pre[i]);
            if i == 0 {
                z.clear();
                z.resize(layer.rows, 0.0);
                for &j in &self.active {
                    let col = &self.first_t[j * layer.rows..(j + 1) * layer.rows];
                    let x = input[j];
                    for (acc, &w) in z.iter_mut().zip(col) {
                        *acc += w * x;
                    }
                }
                for (acc, &b) in z.iter_mut().zip(&layer.bias) {
                    *acc += b;
                }
            } else {
                layer.affine(&self.post[i - 1], &mut z);
            }
            let post = &mut self.post[i];
            post.clear();
            if i == last {
                post.extend(z.iter().map(|&v| sigmoid(v)));
            } else {
                post.extend(z.iter().map(|&v| v.max(0.0)));
            }
            self.pre[i] = z;
        }

        let logits = &self.pre[last];
        let probs = &self.post[last];
        let k = probs.len() as f64;
        let loss = logits
            .iter()
            .zip(label)
            .map(|(&z, &y)| bce_with_logit(z, y))
            .sum::<f64>()
            / k;

        self.delta.clear();
        self.delta
            .extend(probs.iter().zip(label).map(|(&p, &y)| (p - y) / k * scale));

        for i in (0..=last).rev() {
            let layer = &layers[i];
            let src: &[f64] = if i == 0 { input } else { &self.post[i - 1] };
            let g = &mut grads[i];
            for (b, &d) in g.bias.iter_mut().zip(&self.delta) {
                *b += d;
            }
            if i == 0 {
                // Accumulated transposed; `finish` restores row-major order.
                for &j in &self.active {
                    let col = &mut self.first_grad_t[j * layer.rows..(j + 1) * layer.rows];
                    let x = input[j];
                    for (acc, &d) in col.iter_mut().zip(&self.delta) {
                        *acc += d * x;
                    }
                }
            } else {
                for r in 0..layer.rows {
                    let d = self.delta[r];
                    let row = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (w, &x) in row.iter_mut().zip(src) {
                        *w += d * x;
                    }
                }
            }
            if i > 0 {
                self.prev_delta.clear();
                self.prev_delta.resize(layer.cols, 0.0);
                for r in 0..layer.rows {
                    let d = self.delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (acc, &w) in self.prev_delta.iter_mut().zip(row) {
                        *acc += w * d;
                    }
                }
                for (acc, &z) in self.prev_delta.iter_mut().zip(&self.pre[i - 1]) {
                    if z <= 0.0 {
                        *acc = 0.0;
                    }
                }
                std::mem::swap(&mut self.delta, &mut self.prev_delta);
            }
        }
        loss
    }
}

fn zero_grads(model: &DecisionModel) -> Vec<Dense> {
    model
        .layers()
        .iter()
        .map(|l| Dense::zeros(l.rows, l.cols))
        .collect()
}

/// Mean loss over `samples` and its analytic gradient, one `Dense` per layer.
pub fn loss_and_gradient(
    model: &DecisionModel,
    samples: &[(Vec<f64>, [f64; 4])],
) -> (f64, Vec<Dense>) {
    let mut grads = zero_grads(model);
    let mut pass = Pass::new(model);
    let scale = 1.0 / samples.len().max(1) as f64;
    let mut total = 0.0;
    for (x, y) in samples {
        total += pass.accumulate(model, x, y, scale, &mut grads);
    }
    pass.finish(&mut grads);
    (total * scale, grads)
}

/// Sample loss and which hidden units are active.
fn sample_loss(model: &DecisionModel, input: &[f64], label: &[f64; 4]) -> (f64, Vec<bool>) {
    // Re-derive logits with the output sigmoid stripped for a stable loss.
    let layers = model.layers();
    let last = layers.len() - 1;
    let mut current = input.to_vec();
    let mut next = Vec::new();
    let mut pattern = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        layer.affine(&current, &mut next);
        if i != last {
            pattern.extend(next.iter().map(|&z| z > 0.0));
            next.iter_mut().for_each(|z| *z = z.max(0.0));
        }
        std::mem::swap(&mut current, &mut next);
    }
    let loss = current
        .iter()
        .zip(label)
        .map(|(&z, &y)| bce_with_logit(z, y))
        .sum::<f64>()
        / current.len() as f64;
    (loss, pattern)
}

const FD_STEP: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely rather than relatively.
const FD_FLOOR: f64 = 1e-4;

/// Result of comparing backpropagated gradients with central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    /// Largest `|a - n| / max(|a|, |n|, 1e-4)` over compared coordinates.
    pub max_rel_error: f64,
    pub compared: usize,
    /// Coordinates whose ±step stencil flips a hidden ReLU on or off; the
    /// loss is not differentiable across the stencil there, so the central
    /// difference is no reference.
    pub kinks: usize,
}

/// Largest relative disagreement between the backpropagated gradient and a
/// central finite difference (step 1e-4), over every parameter whose
/// stencil stays on one side of every ReLU kink.
pub fn gradient_check(model: &DecisionModel, input: &[f64], label: &[f64; 4]) -> f64 {
    gradient_check_report(model, input, label).max_rel_error
}

pub fn gradient_check_report(model: &DecisionModel, input: &[f64], label: &[f64; 4]) -> GradientCheck {
    let (_, analytic) = loss_and_gradient(model, &[(input.to_vec(), *label)]);
    let (_, base_pattern) = sample_loss(model, input, label);
    let mut probe = model.clone();
    let mut report = GradientCheck {
        max_rel_error: 0.0,
        compared: 0,
        kinks: 0,
    };
    for (li, grads) in analytic.iter().enumerate() {
        let n_weights = model.layers()[li].weights.len();
        let n_bias = model.layers()[li].bias.len();
        for pi in 0..n_weights + n_bias {
            fn read(m: &mut DecisionModel, li: usize, pi: usize) -> &mut f64 {
                let l = &mut m.layers_mut()[li];
                let n_weights = l.weights.len();
                if pi < n_weights {
                    &mut l.weights[pi]
                } else {
                    &mut l.bias[pi - n_weights]
                }
            }
            let original = *read(&mut probe, li, pi);
            *read(&mut probe, li, pi) = original + FD_STEP;
            let (up, up_pattern) = sample_loss(&probe, input, label);
            *read(&mut probe, li, pi) = original - FD_STEP;
            let (down, down_pattern) = sample_loss(&probe, input, label);
            *read(&mut probe, li, pi) = original;
            if up_pattern != base_pattern || down_pattern != base_pattern {
                report.kinks += 1;
                continue;
            }

            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = if pi < n_weights {
                grads.weights[pi]
            } else {
                grads.bias[pi - n_weights]
            };
            let denom = a.abs().max(numeric.abs()).max(FD_FLOOR);
            report.max_rel_error = report.max_rel_error.max((a - numeric).abs() / denom);
            report.compared += 1;
        }
    }
    report
}

fn label_vec(mask: &OperationMask) -> [f64; 4] {
    mask.0.map(|g| if g { 1.0 } else { 0.0 })
}

fn samples_of(tuples: &[&Tuple]) -> Vec<(Vec<f64>, [f64; 4])> {
    tuples
        .iter()
        .map(|t| (t.input().as_f64(), label_vec(&t.label)))
        .collect()
}

/// Full-batch training on the dataset's training split. Deterministic given
/// `config.seed`; the returned parameters are rounded to f32.
pub fn train(dataset: &SyntheticDataset, config: &TrainConfig) -> Result<DecisionModel, ModelError> {
    config.validate()?;
    let train_split = dataset.train();
    if train_split.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let samples = samples_of(&train_split);
    let mut model = DecisionModel::seeded(&config.widths(), config.seed)?;

    let mut first = zero_grads(&model);
    let mut second = zero_grads(&model);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);

    for epoch in 1..=config.epochs {
        let (_, grads) = loss_and_gradient(&model, &samples);
        let lr = config.learning_rate;
        for (li, g) in grads.iter().enumerate() {
            let layer = &mut model.layers_mut()[li];
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            match config.optimizer {
                Optimizer::Sgd => {
                    for (p, &gv) in params.zip(gs) {
                        *p -= lr * gv;
                    }
                }
                Optimizer::Adam => {
                    let Dense { weights: mw, bias: mb, .. } = &mut first[li];
                    let m = mw.iter_mut().chain(mb.iter_mut());
                    let Dense { weights: vw, bias: vb, .. } = &mut second[li];
                    let v = vw.iter_mut().chain(vb.iter_mut());
                    let c1 = 1.0 - b1.powi(epoch as i32);
                    let c2 = 1.0 - b2.powi(epoch as i32);
                    for (((p, &gv), m), v) in params.zip(gs).zip(m).zip(v) {
                        *m = b1 * *m + (1.0 - b1) * gv;
                        *v = b2 * *v + (1.0 - b2) * gv * gv;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
    model.round_to_f32();
    // Parameters stay finite under these update rules; re-validate anyway so a
    // diverged run surfaces as an error instead of NaN scores.
    DecisionModel::new(model.layers().to_vec())
}

/// Fraction of (tuple, operation) labels predicted correctly.
pub fn accuracy(model: &DecisionModel, tuples: &[&Tuple], threshold: f64) -> f64 {
    if tuples.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for t in tuples {
        let scores: OperationScores = model.infer(&t.input()).expect("dataset tuples are 64 bits");
        let mask = threshold_decide(&scores, threshold);
        correct += mask.0.iter().zip(t.label.0).filter(|(a, b)| **a == *b).count();
    }
    correct as f64 / (tuples.len() * 4) as f64
}

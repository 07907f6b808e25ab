use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{BitVector, ModelError, OperationScores, INPUT_WIDTH};

/// Fully connected layer: `rows` outputs, `cols` inputs, row-major weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }

    pub(crate) fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let dot: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            out.push(dot + self.bias[r]);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Feedforward scorer: ReLU on hidden layers, sigmoid on the output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionModel {
    layers: Vec<Dense>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl DecisionModel {
    /// Validates shapes (64 inputs, 4 outputs, adjacent layers agree) and
    /// that every parameter is finite.
    pub fn new(layers: Vec<Dense>) -> Result<Self, ModelError> {
        let first = layers
            .first()
            .ok_or_else(|| ModelError::Dimension("model has no layers".into()))?;
        if first.cols != INPUT_WIDTH {
            return Err(ModelError::Dimension(format!(
                "input width {} != {INPUT_WIDTH}",
                first.cols
            )));
        }
        let last = layers.last().expect("nonempty");
        if last.rows != 4 {
            return Err(ModelError::Dimension(format!("output width {} != 4", last.rows)));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.len() != layer.rows * layer.cols || layer.bias.len() != layer.rows {
                return Err(ModelError::Dimension(format!("layer {i} storage size")));
            }
            if i > 0 && layers[i - 1].rows != layer.cols {
                return Err(ModelError::Dimension(format!(
                    "layer {i} expects {} inputs but previous layer emits {}",
                    layer.cols,
                    layers[i - 1].rows
                )));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(ModelError::Dimension(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(DecisionModel { layers })
    }

    /// All-zero model with the given layer widths (input first).
    pub fn zeros(widths: &[usize]) -> Result<Self, ModelError> {
        let layers = widths.windows(2).map(|w| Dense::zeros(w[1], w[0])).collect();
        Self::new(layers)
    }

    /// Xavier-uniform weights, zero biases, all values representable as f32
    /// so that the weight file round-trips exactly.
    pub fn seeded(widths: &[usize], seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = Dense::zeros(fan_out, fan_in);
                for v in &mut layer.weights {
                    *v = rng.gen_range(-limit..limit) as f32 as f64;
                }
                layer
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Layer widths, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].cols];
        w.extend(self.layers.iter().map(|l| l.rows));
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Dense::parameter_count).sum()
    }

    /// Rounds every parameter to the nearest f32, the stored precision.
    pub fn round_to_f32(&mut self) {
        for layer in &mut self.layers {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Forward pass on a real-valued input of width 64.
    pub fn forward(&self, input: &[f64]) -> Result<[f64; 4], ModelError> {
        if input.len() != INPUT_WIDTH {
            return Err(ModelError::Dimension(format!(
                "input width {} != {INPUT_WIDTH}",
                input.len()
            )));
        }
        let mut current = input.to_vec();
        let mut next = Vec::with_capacity(64);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&current, &mut next);
            if i == last {
                next.iter_mut().for_each(|z| *z = sigmoid(*z));
            } else {
                next.iter_mut().for_each(|z| *z = z.max(0.0));
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok([current[0], current[1], current[2], current[3]])
    }

    pub fn infer(&self, input: &BitVector) -> Result<OperationScores, ModelError> {
        self.forward(&input.as_f64()).map(OperationScores)
    }
}

/// Free-function form of [`DecisionModel::infer`].
pub fn infer(model: &DecisionModel, input: &BitVector) -> Result<OperationScores, ModelError> {
    model.infer(input)
}

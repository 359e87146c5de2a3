//! Minimal dense-network core: MLP forward pass, per-example softmax cross
//! entropy, a weighted backward pass, and SGD-with-momentum updates.
//!
//! The backward pass computes the gradient of `(1/B) * sum_i w_i * L_i` with
//! the per-example weights `w_i` treated as constants, which is the exact
//! chain rule for loss transforms whose gradient is `weight(L) * dL`. All
//! arithmetic is `f64` and every reduction runs in a fixed order, so results
//! replay bit-identically.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::config("ragged rows in matrix construction"));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::config(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Copies the given rows into a new matrix, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (dst, &src) in indices.iter().enumerate() {
            out.data[dst * self.cols..(dst + 1) * self.cols].copy_from_slice(self.row(src));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self (r x k) * other (k x c)`.
    fn matmul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (kk, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(kk);
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T (k x r)^T=(r x k) ... ` computes `self^T * other` where
    /// `self` is `(n x r)` and `other` is `(n x c)`, yielding `(r x c)`.
    fn matmul_at_b(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.cols, other.cols);
        for n in 0..self.rows {
            let a_row = self.row(n);
            let b_row = other.row(n);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self (n x k) * other^T` where `other` is `(c x k)`, yielding `(n x c)`.
    fn matmul_a_bt(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.cols);
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                let b_row = other.row(j);
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.data[i * other.rows + j] = acc;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "softsign")]
    Softsign,
}

impl Activation {
    #[inline]
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softsign => z / (1.0 + z.abs()),
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softsign => {
                let d = 1.0 + z.abs();
                1.0 / (d * d)
            }
        }
    }
}

/// Dense feed-forward network. `weights[l]` has shape
/// `layer_sizes[l] x layer_sizes[l+1]`; the final layer emits raw logits.
#[derive(Debug, Clone)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

impl MlpModel {
    /// He-uniform weight initialization, zero biases.
    pub fn new(layer_sizes: &[usize], activation: Activation, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut model = MlpModel::zeros(layer_sizes, activation)?;
        for w in &mut model.weights {
            let limit = (6.0 / w.rows() as f64).sqrt();
            for v in w.data_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        }
        Ok(model)
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config("model needs at least input and output layers"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[0], w[1]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&s| vec![0.0; s]).collect();
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated in constructor")
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    /// Forward pass over a batch; the cache retains every intermediate needed
    /// by [`mlp_backward`]. Logits live in the cache.
    pub fn forward(&self, batch_x: &Matrix) -> Result<ForwardCache> {
        if batch_x.cols() != self.input_dim() {
            return Err(Error::config(format!(
                "input has {} features, model expects {}",
                batch_x.cols(),
                self.input_dim()
            )));
        }
        let layers = self.weights.len();
        let mut activations: Vec<Matrix> = Vec::with_capacity(layers);
        let mut pre_activations: Vec<Matrix> = Vec::with_capacity(layers);
        let mut current = batch_x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = current.matmul(w);
            for r in 0..z.rows() {
                let row = &mut z.data_mut()[r * w.cols()..(r + 1) * w.cols()];
                for (v, &bias) in row.iter_mut().zip(b) {
                    *v += bias;
                }
            }
            activations.push(current);
            let last = l + 1 == layers;
            if last {
                if !z.is_finite() {
                    return Err(Error::Numeric("non-finite logits in forward pass".into()));
                }
                pre_activations.push(z);
                current = Matrix::zeros(0, 0); // unused past the last layer
            } else {
                let mut a = z.clone();
                for v in a.data_mut() {
                    *v = self.activation.apply(*v);
                }
                pre_activations.push(z);
                current = a;
            }
        }
        Ok(ForwardCache {
            activations,
            pre_activations,
        })
    }

    /// Logits only, without keeping intermediates.
    pub fn logits(&self, batch_x: &Matrix) -> Result<Matrix> {
        let cache = self.forward(batch_x)?;
        Ok(cache.into_logits())
    }
}

/// Intermediates of one forward pass: `activations[l]` is the input to layer
/// `l` (so `activations[0]` is the batch itself) and `pre_activations[l]` its
/// affine output; the last pre-activation holds the logits.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        self.pre_activations.last().expect("cache is never empty")
    }

    pub fn into_logits(mut self) -> Matrix {
        self.pre_activations.pop().expect("cache is never empty")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].rows()
    }
}

/// Per-example softmax cross entropy, computed with the shifted
/// log-sum-exp so large logits stay finite.
pub fn softmax_ce_per_example(logits: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    if logits.rows() != labels.len() {
        return Err(Error::input(format!(
            "{} logit rows vs {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let k = logits.cols();
    let mut out = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::input(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        out.push(sum_exp.ln() + max - row[label]);
    }
    Ok(out)
}

/// Row-wise softmax probabilities.
fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    let cols = out.cols();
    for r in 0..out.rows() {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Gradients (or any shape-congruent buffer set, e.g. momentum velocities)
/// for one model.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub d_weights: Vec<Matrix>,
    pub d_biases: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(model: &MlpModel) -> Self {
        GradientSet {
            d_weights: model
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            d_biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_weights.iter().all(Matrix::is_finite)
            && self
                .d_biases
                .iter()
                .all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Gradient of `(1/B) * sum_i w_i * L_i` with respect to all parameters,
/// with the weights `w_i` held constant. `B` is the batch size.
pub fn mlp_backward(
    model: &MlpModel,
    cache: &ForwardCache,
    labels: &[usize],
    per_example_weights: &[f64],
) -> Result<GradientSet> {
    let batch = cache.batch_size();
    if labels.len() != batch || per_example_weights.len() != batch {
        return Err(Error::Internal(format!(
            "batch {batch} vs {} labels / {} weights",
            labels.len(),
            per_example_weights.len()
        )));
    }
    if cache.activations.len() != model.weights.len() {
        return Err(Error::Internal("cache does not match model depth".into()));
    }
    if per_example_weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::input("per-example weights must be finite"));
    }
    let k = model.num_classes();
    let logits = cache.logits();
    if logits.cols() != k {
        return Err(Error::Internal("cached logits width mismatch".into()));
    }

    // delta = dJ/dz at the output layer: (w_i / B) * (softmax - onehot).
    let mut delta = softmax_rows(logits);
    let inv_b = 1.0 / batch as f64;
    for (i, (&label, &w)) in labels.iter().zip(per_example_weights).enumerate() {
        if label >= k {
            return Err(Error::input(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        let scale = w * inv_b;
        let row = &mut delta.data_mut()[i * k..(i + 1) * k];
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }

    let layers = model.weights.len();
    let mut grads = GradientSet::zeros_like(model);
    for l in (0..layers).rev() {
        let inputs = &cache.activations[l];
        grads.d_weights[l] = inputs.matmul_at_b(&delta);
        let db = &mut grads.d_biases[l];
        for r in 0..delta.rows() {
            for (acc, &v) in db.iter_mut().zip(delta.row(r)) {
                *acc += v;
            }
        }
        if l > 0 {
            // Propagate through the affine map and the previous activation.
            let mut prev = delta.matmul_a_bt(&model.weights[l]);
            let z_prev = &cache.pre_activations[l - 1];
            for (v, &z) in prev.data_mut().iter_mut().zip(z_prev.data()) {
                *v *= model.activation.derivative(z);
            }
            delta = prev;
        }
    }
    Ok(grads)
}

/// Momentum SGD with decoupled weight decay folded into the velocity:
/// `v <- momentum * v + (grad + weight_decay * theta)`, `theta <- theta - lr * v`.
pub fn sgd_momentum_step(
    model: &mut MlpModel,
    grads: &GradientSet,
    velocity: &mut GradientSet,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::config("learning rate must be positive"));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::config("momentum must be in [0, 1)"));
    }
    if weight_decay < 0.0 {
        return Err(Error::config("weight decay must be >= 0"));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient in SGD step".into()));
    }
    for ((w, dw), vw) in model
        .weights
        .iter_mut()
        .zip(&grads.d_weights)
        .zip(&mut velocity.d_weights)
    {
        for ((theta, &g), v) in w
            .data_mut()
            .iter_mut()
            .zip(dw.data())
            .zip(vw.data_mut())
        {
            *v = momentum * *v + (g + weight_decay * *theta);
            *theta -= lr * *v;
        }
    }
    for ((b, db), vb) in model
        .biases
        .iter_mut()
        .zip(&grads.d_biases)
        .zip(&mut velocity.d_biases)
    {
        for ((theta, &g), v) in b.iter_mut().zip(db).zip(vb.iter_mut()) {
            *v = momentum * *v + (g + weight_decay * *theta);
            *theta -= lr * *v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, STREAM_INIT};
    use approx::assert_relative_eq;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = stream_rng(seed, 77);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let model = MlpModel::zeros(&[3, 4, 2], Activation::Relu).unwrap();
        let cache = model.forward(&random_batch(5, 3, 1)).unwrap();
        assert!(cache.logits().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut model = MlpModel::zeros(&[2, 2], Activation::Relu).unwrap();
        model.weights_mut()[0].set(0, 0, 1.0);
        model.weights_mut()[0].set(1, 1, 1.0);
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let cache = model.forward(&x).unwrap();
        assert_eq!(cache.logits().row(0), &[1.0, 2.0]);
    }

    #[test]
    fn forward_shape_follows_layers() {
        let mut rng = stream_rng(3, STREAM_INIT);
        let model = MlpModel::new(&[2, 16, 3], Activation::Relu, &mut rng).unwrap();
        let cache = model.forward(&random_batch(7, 2, 2)).unwrap();
        assert_eq!((cache.logits().rows(), cache.logits().cols()), (7, 3));
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let model = MlpModel::zeros(&[3, 2], Activation::Relu).unwrap();
        assert!(model.forward(&random_batch(4, 2, 1)).is_err());
    }

    #[test]
    fn uniform_logits_cost_ln_k() {
        let logits = Matrix::zeros(2, 10);
        let losses = softmax_ce_per_example(&logits, &[3, 7]).unwrap();
        for l in losses {
            assert_relative_eq!(l, 10.0_f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn saturated_true_logit_cost_near_zero() {
        let mut logits = Matrix::zeros(1, 4);
        logits.set(0, 2, 50.0);
        let losses = softmax_ce_per_example(&logits, &[2]).unwrap();
        assert!(losses[0] < 1e-9);
    }

    #[test]
    fn ce_matches_closed_form() {
        let logits = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let losses = softmax_ce_per_example(&logits, &[0]).unwrap();
        let expected = -1.0 + (1.0_f64.exp() + 2.0_f64.exp() + 3.0_f64.exp()).ln();
        assert_relative_eq!(losses[0], expected, epsilon = 1e-12);
        assert_relative_eq!(losses[0], 2.40760596444438, epsilon = 1e-10);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let logits = Matrix::zeros(1, 3);
        assert!(softmax_ce_per_example(&logits, &[3]).is_err());
    }

    #[test]
    fn ce_shift_invariant() {
        let logits = Matrix::from_rows(&[vec![0.3, -1.2, 2.0]]).unwrap();
        let mut shifted = logits.clone();
        for v in shifted.data_mut() {
            *v += 123.456;
        }
        let a = softmax_ce_per_example(&logits, &[1]).unwrap();
        let b = softmax_ce_per_example(&shifted, &[1]).unwrap();
        assert_relative_eq!(a[0], b[0], epsilon = 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_gradients() {
        let mut rng = stream_rng(5, STREAM_INIT);
        let model = MlpModel::new(&[2, 8, 3], Activation::Relu, &mut rng).unwrap();
        let x = random_batch(4, 2, 9);
        let cache = model.forward(&x).unwrap();
        let grads = mlp_backward(&model, &cache, &[0, 1, 2, 0], &[0.0; 4]).unwrap();
        assert!(grads.d_weights.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
        assert!(grads.d_biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    /// Scaling the retained examples' weights by B'/B reproduces the
    /// zero-weight batch's gradient, so zero-weight rows contribute nothing.
    #[test]
    fn zero_weight_rows_are_inert() {
        let mut rng = stream_rng(6, STREAM_INIT);
        let model = MlpModel::new(&[3, 6, 4], Activation::Softsign, &mut rng).unwrap();
        let x = random_batch(5, 3, 10);
        let labels = [0usize, 3, 1, 2, 0];
        let weights = [0.7, 0.0, 1.3, 0.0, 0.4];

        let cache = model.forward(&x).unwrap();
        let full = mlp_backward(&model, &cache, &labels, &weights).unwrap();

        let keep = [0usize, 2, 4];
        let x_sub = x.select_rows(&keep);
        let labels_sub: Vec<usize> = keep.iter().map(|&i| labels[i]).collect();
        let scale = keep.len() as f64 / labels.len() as f64;
        let weights_sub: Vec<f64> = keep.iter().map(|&i| weights[i] * scale).collect();
        let cache_sub = model.forward(&x_sub).unwrap();
        let sub = mlp_backward(&model, &cache_sub, &labels_sub, &weights_sub).unwrap();

        for (a, b) in full.d_weights.iter().zip(&sub.d_weights) {
            for (&va, &vb) in a.data().iter().zip(b.data()) {
                assert_relative_eq!(va, vb, epsilon = 1e-12);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn numeric_gradient(
        model: &MlpModel,
        x: &Matrix,
        labels: &[usize],
        weights: &[f64],
        layer: usize,
        param: usize,
        bias: bool,
        h: f64,
    ) -> f64 {
        let eval = |m: &MlpModel| -> f64 {
            let logits = m.logits(x).unwrap();
            let losses = softmax_ce_per_example(&logits, labels).unwrap();
            losses
                .iter()
                .zip(weights)
                .map(|(&l, &w)| w * l)
                .sum::<f64>()
                / labels.len() as f64
        };
        let mut plus = model.clone();
        let mut minus = model.clone();
        if bias {
            plus.biases_mut()[layer][param] += h;
            minus.biases_mut()[layer][param] -= h;
        } else {
            plus.weights_mut()[layer].data_mut()[param] += h;
            minus.weights_mut()[layer].data_mut()[param] -= h;
        }
        (eval(&plus) - eval(&minus)) / (2.0 * h)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream_rng(8, STREAM_INIT);
        let model = MlpModel::new(&[3, 5, 4], Activation::Softsign, &mut rng).unwrap();
        let x = random_batch(6, 3, 11);
        let labels = [0usize, 1, 2, 3, 1, 0];
        let weights = [1.0, 0.5, 0.9, 0.0, 1.4, 0.2];
        let cache = model.forward(&x).unwrap();
        let grads = mlp_backward(&model, &cache, &labels, &weights).unwrap();

        let h = 1e-6;
        for l in 0..model.weights().len() {
            for p in 0..model.weights()[l].data().len() {
                let analytic = grads.d_weights[l].data()[p];
                let numeric = numeric_gradient(&model, &x, &labels, &weights, l, p, false, h);
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (analytic - numeric).abs() / denom <= 1e-4,
                    "layer {l} weight {p}: analytic {analytic} vs numeric {numeric}"
                );
            }
            for p in 0..model.biases()[l].len() {
                let analytic = grads.d_biases[l][p];
                let numeric = numeric_gradient(&model, &x, &labels, &weights, l, p, true, h);
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (analytic - numeric).abs() / denom <= 1e-4,
                    "layer {l} bias {p}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    /// Unit weights must reproduce the gradient of the plain mean CE loss,
    /// checked against central differences of that unweighted objective.
    #[test]
    fn all_ones_weights_reduce_to_plain_ce() {
        let mut rng = stream_rng(9, STREAM_INIT);
        let model = MlpModel::new(&[2, 4, 3], Activation::Relu, &mut rng).unwrap();
        let x = random_batch(3, 2, 12);
        let labels = [0usize, 1, 2];
        let cache = model.forward(&x).unwrap();
        let grads = mlp_backward(&model, &cache, &labels, &[1.0; 3]).unwrap();

        let mean_ce = |m: &MlpModel| -> f64 {
            let logits = m.logits(&x).unwrap();
            softmax_ce_per_example(&logits, &labels).unwrap().iter().sum::<f64>() / 3.0
        };
        let h = 1e-6;
        for l in 0..model.weights().len() {
            for p in 0..model.weights()[l].data().len() {
                let mut plus = model.clone();
                plus.weights_mut()[l].data_mut()[p] += h;
                let mut minus = model.clone();
                minus.weights_mut()[l].data_mut()[p] -= h;
                let numeric = (mean_ce(&plus) - mean_ce(&minus)) / (2.0 * h);
                let analytic = grads.d_weights[l].data()[p];
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!((analytic - numeric).abs() / denom <= 1e-4);
            }
        }
    }

    #[test]
    fn vanilla_sgd_step() {
        let mut model = MlpModel::zeros(&[1, 1], Activation::Relu).unwrap();
        let mut grads = GradientSet::zeros_like(&model);
        grads.d_weights[0].set(0, 0, 2.0);
        let mut velocity = GradientSet::zeros_like(&model);
        sgd_momentum_step(&mut model, &grads, &mut velocity, 0.1, 0.0, 0.0).unwrap();
        assert_relative_eq!(model.weights()[0].get(0, 0), -0.2, epsilon = 1e-15);
    }

    #[test]
    fn pure_velocity_step() {
        let mut model = MlpModel::zeros(&[1, 1], Activation::Relu).unwrap();
        let grads = GradientSet::zeros_like(&model);
        let mut velocity = GradientSet::zeros_like(&model);
        velocity.d_weights[0].set(0, 0, 1.0);
        sgd_momentum_step(&mut model, &grads, &mut velocity, 0.1, 0.9, 0.0).unwrap();
        assert_relative_eq!(model.weights()[0].get(0, 0), -0.09, epsilon = 1e-15);
    }

    #[test]
    fn momentum_compounds_identical_grads() {
        let mut model = MlpModel::zeros(&[1, 1], Activation::Relu).unwrap();
        let mut grads = GradientSet::zeros_like(&model);
        grads.d_weights[0].set(0, 0, 1.0);
        let mut velocity = GradientSet::zeros_like(&model);
        sgd_momentum_step(&mut model, &grads, &mut velocity, 0.1, 0.9, 0.0).unwrap();
        let after_first = model.weights()[0].get(0, 0);
        sgd_momentum_step(&mut model, &grads, &mut velocity, 0.1, 0.9, 0.0).unwrap();
        let second_step = after_first - model.weights()[0].get(0, 0);
        assert_relative_eq!(second_step, 0.1 * 1.9, epsilon = 1e-15);
    }

    #[test]
    fn nan_gradient_is_training_error() {
        let mut model = MlpModel::zeros(&[1, 1], Activation::Relu).unwrap();
        let mut grads = GradientSet::zeros_like(&model);
        grads.d_weights[0].set(0, 0, f64::NAN);
        let mut velocity = GradientSet::zeros_like(&model);
        let err = sgd_momentum_step(&mut model, &grads, &mut velocity, 0.1, 0.9, 0.0);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }
}

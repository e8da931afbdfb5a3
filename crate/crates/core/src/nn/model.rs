use serde::{Deserialize, Serialize};

use super::layers::{softmax_in_place, Cache, Layer, Shape, KERNEL, POOL};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng64;

/// Whether dropout is active. Training mode draws masks from the given stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng64),
}

impl Mode<'_> {
    fn rng(&mut self) -> Option<&mut Rng64> {
        match self {
            Mode::Eval => None,
            Mode::Train(rng) => Some(rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// L2 coefficient: the objective adds `lambda * ||theta||^2`.
    pub lambda: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 30,
            lambda: 0.0,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda {} must be non-negative",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Per-epoch training statistics. Accuracy is measured on the training
/// batches as they are seen (dropout active), loss includes the L2 term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Parameter gradients in [`NetworkModel::parameters`] order.
pub type Gradients = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    input_dim: usize,
    input_shape: Shape,
    class_count: usize,
    layers: Vec<Layer>,
}

impl NetworkModel {
    /// Inputs of length `input_dim` are zero-padded to `input_shape` before
    /// the first layer. The last layer must be a softmax over `class_count`.
    pub fn new(
        input_dim: usize,
        input_shape: Shape,
        class_count: usize,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        if input_dim == 0 || input_dim > input_shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("input dim in 1..={}", input_shape.len()),
                actual: input_dim.to_string(),
            });
        }
        if class_count < 2 {
            return Err(Error::InvalidDimension(format!(
                "need at least 2 classes, got {class_count}"
            )));
        }
        match layers.last() {
            Some(Layer::Softmax { len }) if *len == class_count => {}
            _ => {
                return Err(Error::ShapeMismatch {
                    expected: format!("softmax({class_count}) as the last layer"),
                    actual: layers.last().map_or("nothing".into(), |l| l.name().into()),
                })
            }
        }
        let mut shape = input_shape;
        for (i, layer) in layers.iter().enumerate() {
            let ok = match layer.required_input_shape() {
                Some(req) => req == shape,
                None => layer.input_len() == shape.len(),
            };
            if !ok {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer {i} ({}) input {}", layer.name(), layer.input_len()),
                    actual: shape.to_string(),
                });
            }
            if let Layer::Dropout { rate, .. } = layer {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::Config(format!("dropout rate {rate} outside [0,1)")));
                }
            }
            let out = layer.output_shape();
            if out.is_empty() {
                return Err(Error::InvalidDimension(format!(
                    "layer {i} ({}) produces an empty output from {shape}",
                    layer.name()
                )));
            }
            shape = out;
        }
        Ok(Self {
            input_dim,
            input_shape,
            class_count,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Re-draws every weight He-uniform from `seed` and zeroes the biases.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = Rng64::new(seed);
        for layer in &mut self.layers {
            layer.initialize(&mut rng);
        }
    }

    fn padded(&self, batch: &[f64]) -> Result<(Vec<f64>, usize)> {
        if batch.is_empty() || !batch.len().is_multiple_of(self.input_dim) {
            return Err(Error::ShapeMismatch {
                expected: format!("a multiple of {} values", self.input_dim),
                actual: batch.len().to_string(),
            });
        }
        let n = batch.len() / self.input_dim;
        let full = self.input_shape.len();
        if full == self.input_dim {
            return Ok((batch.to_vec(), n));
        }
        let mut x = vec![0.0; n * full];
        for (dst, src) in x.chunks_mut(full).zip(batch.chunks(self.input_dim)) {
            dst[..self.input_dim].copy_from_slice(src);
        }
        Ok((x, n))
    }

    /// Logits (pre-softmax) plus per-layer caches for every layer but the last.
    fn forward_logits(
        &self,
        batch: &[f64],
        mode: &mut Mode,
    ) -> Result<(Vec<f64>, usize, Vec<Cache>)> {
        let (mut x, n) = self.padded(batch)?;
        let body = &self.layers[..self.layers.len() - 1];
        let mut caches = Vec::with_capacity(body.len());
        for layer in body {
            let (out, cache) = layer.forward(&x, n, mode.rng());
            caches.push(cache);
            x = out;
        }
        Ok((x, n, caches))
    }

    /// Class probabilities, `n x class_count` row-major, for a row-major
    /// batch of `n` inputs.
    pub fn forward(&self, batch: &[f64], mut mode: Mode) -> Result<Vec<f64>> {
        let (mut z, _, _) = self.forward_logits(batch, &mut mode)?;
        for row in z.chunks_mut(self.class_count) {
            softmax_in_place(row);
        }
        Ok(z)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim.to_string(),
                actual: x.len().to_string(),
            });
        }
        self.forward(x, Mode::Eval)
    }

    /// Argmax class, ties broken toward the lowest index.
    pub fn classify(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let p = self.predict(x)?;
        Ok((argmax(&p), p))
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        match labels.iter().find(|&&l| l >= self.class_count) {
            Some(&label) => Err(Error::LabelOutOfRange {
                label,
                classes: self.class_count,
            }),
            None => Ok(()),
        }
    }

    /// Mean cross-entropy over the batch plus `lambda * ||theta||^2`.
    pub fn loss(
        &self,
        batch: &[f64],
        labels: &[usize],
        lambda: f64,
        mut mode: Mode,
    ) -> Result<f64> {
        self.check_labels(labels)?;
        let (z, n, _) = self.forward_logits(batch, &mut mode)?;
        check_batch(n, labels.len())?;
        Ok(cross_entropy(&z, labels, self.class_count).0 / n as f64 + lambda * self.l2())
    }

    fn l2(&self) -> f64 {
        self.parameters()
            .iter()
            .flat_map(|p| p.iter())
            .map(|v| v * v)
            .sum()
    }

    /// Loss as in [`NetworkModel::loss`] and its gradient by backpropagation.
    pub fn loss_and_gradients(
        &self,
        batch: &[f64],
        labels: &[usize],
        lambda: f64,
        mode: Mode,
    ) -> Result<(f64, Gradients)> {
        let (loss, grads, _) = self.backprop(batch, labels, lambda, mode)?;
        Ok((loss, grads))
    }

    fn backprop(
        &self,
        batch: &[f64],
        labels: &[usize],
        lambda: f64,
        mut mode: Mode,
    ) -> Result<(f64, Gradients, usize)> {
        self.check_labels(labels)?;
        let (z, n, caches) = self.forward_logits(batch, &mut mode)?;
        check_batch(n, labels.len())?;
        let c = self.class_count;
        let (ce, correct) = cross_entropy(&z, labels, c);

        // d(mean CE)/dz = (softmax(z) - onehot) / n
        let mut grad = z;
        for (row, &y) in grad.chunks_mut(c).zip(labels) {
            softmax_in_place(row);
            row[y] -= 1.0;
            row.iter_mut().for_each(|v| *v /= n as f64);
        }

        let body = &self.layers[..self.layers.len() - 1];
        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); body.len()];
        for (i, layer) in body.iter().enumerate().rev() {
            let need_input = body[..i].iter().any(|l| !l.params().is_empty());
            let (pg, dx) = layer.backward(&caches[i], &grad, n, need_input);
            per_layer[i] = pg;
            match dx {
                Some(dx) => grad = dx,
                None => break,
            }
        }
        let mut grads: Gradients = Vec::new();
        for (layer, pg) in body.iter().zip(per_layer) {
            if layer.params().is_empty() {
                continue;
            }
            grads.extend(pg);
        }
        if lambda > 0.0 {
            for (g, p) in grads.iter_mut().zip(self.parameters()) {
                for (gi, pi) in g.iter_mut().zip(p) {
                    *gi += 2.0 * lambda * pi;
                }
            }
        }
        Ok((ce / n as f64 + lambda * self.l2(), grads, correct))
    }

    /// `theta -= learning_rate * grad`.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for (p, g) in self.parameters_mut().into_iter().zip(grads) {
            for (pi, gi) in p.iter_mut().zip(g) {
                *pi -= learning_rate * gi;
            }
        }
    }

    /// Accuracy on `test` using one forward pass per sample.
    pub fn evaluate(&self, test: &Dataset) -> Result<f64> {
        if test.is_empty() {
            return Err(Error::EmptyDataset("evaluation set is empty".into()));
        }
        let mut correct = 0usize;
        for (x, y) in test.iter() {
            if self.classify(x)?.0 == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / test.len() as f64)
    }
}

fn check_batch(n: usize, labels: usize) -> Result<()> {
    if n != labels {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} labels"),
            actual: labels.to_string(),
        });
    }
    Ok(())
}

/// Summed cross-entropy from logits and the number of argmax hits.
fn cross_entropy(z: &[f64], labels: &[usize], classes: usize) -> (f64, usize) {
    let mut total = 0.0;
    let mut correct = 0;
    for (row, &y) in z.chunks(classes).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
        if argmax(row) == y {
            correct += 1;
        }
    }
    (total, correct)
}

/// Index of the largest value; the first one wins on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch SGD. Batch order comes from `Rng64::new(seed)`, dropout masks
/// from stream 1 of the same seed. The final partial batch is kept.
pub fn train(
    mut model: NetworkModel,
    train_set: &Dataset,
    config: &TrainConfig,
) -> Result<(NetworkModel, Vec<EpochStats>)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    if train_set.dim() != model.input_dim {
        return Err(Error::ShapeMismatch {
            expected: format!("{}-dimensional samples", model.input_dim),
            actual: train_set.dim().to_string(),
        });
    }
    model.check_labels(train_set.labels())?;
    let mut order_rng = Rng64::new(config.seed);
    let mut dropout_rng = Rng64::derive(config.seed, 1);
    let n = train_set.len();
    let d = model.input_dim;
    let mut history = Vec::with_capacity(config.epochs);
    let mut xb = Vec::with_capacity(config.batch_size * d);
    let mut yb = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        let order: Vec<usize> = if config.shuffle {
            order_rng.permutation(n)
        } else {
            (0..n).collect()
        };
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(train_set.sample(i));
                yb.push(train_set.label(i));
            }
            let (loss, grads, hits) =
                model.backprop(&xb, &yb, config.lambda, Mode::Train(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::Config(format!(
                    "training diverged at epoch {epoch} (loss {loss})"
                )));
            }
            model.apply_gradients(&grads, config.learning_rate);
            loss_sum += loss * chunk.len() as f64;
            correct += hits;
        }
        history.push(EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
        });
    }
    Ok((model, history))
}

pub fn evaluate(model: &NetworkModel, test_set: &Dataset) -> Result<f64> {
    model.evaluate(test_set)
}

/// Side length of the square image a `k`-vector is padded into.
pub fn padded_side(k: usize) -> usize {
    let mut s = (k as f64).sqrt() as usize;
    while s * s < k {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= k {
        s -= 1;
    }
    s
}

/// The two-convolution CNN on 28x28 inputs.
pub fn build_mnist_cnn(seed: u64) -> Result<NetworkModel> {
    build_mnist_cnn_for(784, 10, seed)
}

/// The same topology on a `k`-vector zero-padded to the next square image.
/// The dense input width follows from the padded side length.
pub fn build_mnist_cnn_for(k: usize, classes: usize, seed: u64) -> Result<NetworkModel> {
    let side = padded_side(k);
    let after = |s: usize| (s.saturating_sub(KERNEL - 1)) / POOL;
    if after(after(side)) == 0 {
        return Err(Error::InvalidDimension(format!(
            "a {k}-vector pads to {side}x{side}, too small for two 5x5 convolutions and pools"
        )));
    }
    let input = Shape::image(1, side, side);
    let mut layers = Vec::new();
    let c1 = Layer::conv2d(input, 10);
    let p1 = Layer::MaxPool {
        input: c1.output_shape(),
    };
    let r1 = Layer::Relu {
        shape: p1.output_shape(),
    };
    let c2 = Layer::conv2d(r1.output_shape(), 20);
    let p2 = Layer::MaxPool {
        input: c2.output_shape(),
    };
    let r2 = Layer::Relu {
        shape: p2.output_shape(),
    };
    let flat = r2.output_shape().len();
    layers.extend([c1, p1, r1, c2, p2, r2]);
    layers.push(Layer::dense(flat, 50));
    layers.push(Layer::Relu {
        shape: Shape::flat(50),
    });
    layers.push(Layer::dense(50, classes));
    layers.push(Layer::Softmax { len: classes });
    let mut model = NetworkModel::new(k, input, classes, layers)?;
    model.initialize(seed);
    Ok(model)
}

/// Dense 57-100-50-10-2 with ReLU and dropout after each hidden layer.
pub fn build_spam_mlp(dropout: f64, seed: u64) -> Result<NetworkModel> {
    build_mlp(57, &[100, 50, 10], 2, dropout, seed)
}

pub fn build_toy_mlp(
    input_dim: usize,
    hidden: &[usize],
    classes: usize,
    seed: u64,
) -> Result<NetworkModel> {
    build_mlp(input_dim, hidden, classes, 0.0, seed)
}

/// Dense layers with ReLU between them and a softmax head. A positive
/// `dropout` inserts a dropout layer after every hidden ReLU.
pub fn build_mlp(
    input_dim: usize,
    hidden: &[usize],
    classes: usize,
    dropout: f64,
    seed: u64,
) -> Result<NetworkModel> {
    if input_dim == 0 || hidden.contains(&0) {
        return Err(Error::InvalidDimension(format!(
            "widths must be positive, got input {input_dim}, hidden {hidden:?}"
        )));
    }
    let mut layers = Vec::new();
    let mut width = input_dim;
    for &h in hidden {
        layers.push(Layer::dense(width, h));
        layers.push(Layer::Relu {
            shape: Shape::flat(h),
        });
        if dropout > 0.0 {
            layers.push(Layer::Dropout {
                rate: dropout,
                shape: Shape::flat(h),
            });
        }
        width = h;
    }
    layers.push(Layer::dense(width, classes));
    layers.push(Layer::Softmax { len: classes });
    let mut model = NetworkModel::new(input_dim, Shape::flat(input_dim), classes, layers)?;
    model.initialize(seed);
    Ok(model)
}

//! Layer kinds with batched forward and backward passes.
//!
//! Activations are row-major `batch x len` buffers; image tensors are stored
//! channel-major (`c, h, w`) within a row.

use matrixmultiply::dgemm;
use serde::{Deserialize, Serialize};

use crate::rng::Rng64;

pub const KERNEL: usize = 5;
pub const POOL: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn flat(len: usize) -> Self {
        Self::image(1, 1, len)
    }

    pub fn image(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// One layer with its parameters. `Dense` accepts any input whose total
/// length matches, which is how image tensors are flattened.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense {
        input: usize,
        output: usize,
        /// `output x input`, row-major.
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Conv2d {
        input: Shape,
        out_channels: usize,
        /// `out_channels x (in_channels * KERNEL * KERNEL)`, row-major.
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    MaxPool {
        input: Shape,
    },
    Relu {
        shape: Shape,
    },
    Dropout {
        rate: f64,
        shape: Shape,
    },
    Softmax {
        len: usize,
    },
}

pub(crate) enum Cache {
    Input(Vec<f64>),
    Columns(Vec<f64>),
    Argmax(Vec<u32>),
    Output(Vec<f64>),
    Mask(Vec<f64>),
    Nothing,
}

impl Layer {
    pub fn dense(input: usize, output: usize) -> Self {
        Layer::Dense {
            input,
            output,
            weights: vec![0.0; input * output],
            bias: vec![0.0; output],
        }
    }

    pub fn conv2d(input: Shape, out_channels: usize) -> Self {
        Layer::Conv2d {
            input,
            out_channels,
            weights: vec![0.0; out_channels * input.channels * KERNEL * KERNEL],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Relu { .. } => "relu",
            Layer::Dropout { .. } => "dropout",
            Layer::Softmax { .. } => "softmax",
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Layer::Dense { input, .. } => *input,
            Layer::Conv2d { input, .. } | Layer::MaxPool { input } => input.len(),
            Layer::Relu { shape } | Layer::Dropout { shape, .. } => shape.len(),
            Layer::Softmax { len } => *len,
        }
    }

    /// Exact input shape for layers that care about spatial layout.
    pub fn required_input_shape(&self) -> Option<Shape> {
        match self {
            Layer::Conv2d { input, .. } | Layer::MaxPool { input } => Some(*input),
            _ => None,
        }
    }

    pub fn output_shape(&self) -> Shape {
        match self {
            Layer::Dense { output, .. } => Shape::flat(*output),
            Layer::Conv2d {
                input,
                out_channels,
                ..
            } => Shape::image(
                *out_channels,
                input.height + 1 - KERNEL,
                input.width + 1 - KERNEL,
            ),
            Layer::MaxPool { input } => {
                Shape::image(input.channels, input.height / POOL, input.width / POOL)
            }
            Layer::Relu { shape } | Layer::Dropout { shape, .. } => *shape,
            Layer::Softmax { len } => Shape::flat(*len),
        }
    }

    /// Trainable tensors in a fixed order (weights, then bias).
    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense { weights, bias, .. } | Layer::Conv2d { weights, bias, .. } => {
                vec![weights, bias]
            }
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense { weights, bias, .. } | Layer::Conv2d { weights, bias, .. } => {
                vec![weights, bias]
            }
            _ => Vec::new(),
        }
    }

    pub fn fan_in(&self) -> usize {
        match self {
            Layer::Dense { input, .. } => *input,
            Layer::Conv2d { input, .. } => input.channels * KERNEL * KERNEL,
            _ => 0,
        }
    }

    /// He-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero bias.
    pub(crate) fn initialize(&mut self, rng: &mut Rng64) {
        let limit = (6.0 / self.fan_in().max(1) as f64).sqrt();
        if let Layer::Dense { weights, bias, .. } | Layer::Conv2d { weights, bias, .. } = self {
            for w in weights.iter_mut() {
                *w = (2.0 * rng.uniform() - 1.0) * limit;
            }
            bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub(crate) fn forward(
        &self,
        x: &[f64],
        batch: usize,
        rng: Option<&mut Rng64>,
    ) -> (Vec<f64>, Cache) {
        match self {
            Layer::Dense {
                input,
                output,
                weights,
                bias,
            } => {
                let (i, o) = (*input, *output);
                let mut out = Vec::with_capacity(batch * o);
                for _ in 0..batch {
                    out.extend_from_slice(bias);
                }
                // out (B x o) += X (B x i) * W^T (i x o)
                unsafe {
                    dgemm(
                        batch,
                        i,
                        o,
                        1.0,
                        x.as_ptr(),
                        i as isize,
                        1,
                        weights.as_ptr(),
                        1,
                        i as isize,
                        1.0,
                        out.as_mut_ptr(),
                        o as isize,
                        1,
                    );
                }
                (out, Cache::Input(x.to_vec()))
            }
            Layer::Conv2d {
                input,
                out_channels,
                weights,
                bias,
            } => {
                let out_shape = self.output_shape();
                let p = out_shape.height * out_shape.width;
                let rows = input.channels * KERNEL * KERNEL;
                let cols = im2col(x, batch, *input, out_shape);
                let n = batch * p;
                let mut tmp = vec![0.0; out_channels * n];
                unsafe {
                    dgemm(
                        *out_channels,
                        rows,
                        n,
                        1.0,
                        weights.as_ptr(),
                        rows as isize,
                        1,
                        cols.as_ptr(),
                        n as isize,
                        1,
                        0.0,
                        tmp.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
                let mut out = vec![0.0; batch * out_channels * p];
                for o in 0..*out_channels {
                    for b in 0..batch {
                        let src = &tmp[o * n + b * p..o * n + (b + 1) * p];
                        let dst =
                            &mut out[(b * out_channels + o) * p..(b * out_channels + o + 1) * p];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d = s + bias[o];
                        }
                    }
                }
                (out, Cache::Columns(cols))
            }
            Layer::MaxPool { input } => {
                let out_shape = self.output_shape();
                let (ih, iw) = (input.height, input.width);
                let (oh, ow) = (out_shape.height, out_shape.width);
                let in_len = input.len();
                let mut out = Vec::with_capacity(batch * out_shape.len());
                let mut argmax = Vec::with_capacity(batch * out_shape.len());
                for b in 0..batch {
                    for c in 0..input.channels {
                        let base = b * in_len + c * ih * iw;
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut best = base + (POOL * oy) * iw + POOL * ox;
                                for dy in 0..POOL {
                                    for dx in 0..POOL {
                                        let at = base + (POOL * oy + dy) * iw + POOL * ox + dx;
                                        if x[at] > x[best] {
                                            best = at;
                                        }
                                    }
                                }
                                out.push(x[best]);
                                argmax.push((best - b * in_len) as u32);
                            }
                        }
                    }
                }
                (out, Cache::Argmax(argmax))
            }
            Layer::Relu { .. } => {
                let out: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
                (out.clone(), Cache::Output(out))
            }
            Layer::Dropout { rate, .. } => match rng {
                Some(rng) if *rate > 0.0 => {
                    let keep = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> = x
                        .iter()
                        .map(|_| if rng.uniform() < *rate { 0.0 } else { keep })
                        .collect();
                    let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
                    (out, Cache::Mask(mask))
                }
                _ => (x.to_vec(), Cache::Nothing),
            },
            Layer::Softmax { len } => {
                let mut out = x.to_vec();
                for row in out.chunks_mut(*len) {
                    softmax_in_place(row);
                }
                (out.clone(), Cache::Output(out))
            }
        }
    }

    /// Returns parameter gradients (same order as [`Layer::params`]) and,
    /// when `need_input` is set, the gradient with respect to the input.
    pub(crate) fn backward(
        &self,
        cache: &Cache,
        grad: &[f64],
        batch: usize,
        need_input: bool,
    ) -> (Vec<Vec<f64>>, Option<Vec<f64>>) {
        match (self, cache) {
            (
                Layer::Dense {
                    input,
                    output,
                    weights,
                    ..
                },
                Cache::Input(x),
            ) => {
                let (i, o) = (*input, *output);
                let mut dw = vec![0.0; o * i];
                // dW (o x i) = G^T (o x B) * X (B x i)
                unsafe {
                    dgemm(
                        o,
                        batch,
                        i,
                        1.0,
                        grad.as_ptr(),
                        1,
                        o as isize,
                        x.as_ptr(),
                        i as isize,
                        1,
                        0.0,
                        dw.as_mut_ptr(),
                        i as isize,
                        1,
                    );
                }
                let mut db = vec![0.0; o];
                for row in grad.chunks(o) {
                    for (d, g) in db.iter_mut().zip(row) {
                        *d += g;
                    }
                }
                let dx = need_input.then(|| {
                    let mut dx = vec![0.0; batch * i];
                    // dX (B x i) = G (B x o) * W (o x i)
                    unsafe {
                        dgemm(
                            batch,
                            o,
                            i,
                            1.0,
                            grad.as_ptr(),
                            o as isize,
                            1,
                            weights.as_ptr(),
                            i as isize,
                            1,
                            0.0,
                            dx.as_mut_ptr(),
                            i as isize,
                            1,
                        );
                    }
                    dx
                });
                (vec![dw, db], dx)
            }
            (
                Layer::Conv2d {
                    input,
                    out_channels,
                    weights,
                    ..
                },
                Cache::Columns(cols),
            ) => {
                let oc = *out_channels;
                let out_shape = self.output_shape();
                let p = out_shape.height * out_shape.width;
                let rows = input.channels * KERNEL * KERNEL;
                let n = batch * p;
                // Gather the gradient into (oc x B*p) to match the column layout.
                let mut g = vec![0.0; oc * n];
                let mut db = vec![0.0; oc];
                for b in 0..batch {
                    for o in 0..oc {
                        let src = &grad[(b * oc + o) * p..(b * oc + o + 1) * p];
                        g[o * n + b * p..o * n + (b + 1) * p].copy_from_slice(src);
                        db[o] += src.iter().sum::<f64>();
                    }
                }
                let mut dw = vec![0.0; oc * rows];
                unsafe {
                    dgemm(
                        oc,
                        n,
                        rows,
                        1.0,
                        g.as_ptr(),
                        n as isize,
                        1,
                        cols.as_ptr(),
                        1,
                        n as isize,
                        0.0,
                        dw.as_mut_ptr(),
                        rows as isize,
                        1,
                    );
                }
                let dx = need_input.then(|| {
                    let mut dcols = vec![0.0; rows * n];
                    unsafe {
                        dgemm(
                            rows,
                            oc,
                            n,
                            1.0,
                            weights.as_ptr(),
                            1,
                            rows as isize,
                            g.as_ptr(),
                            n as isize,
                            1,
                            0.0,
                            dcols.as_mut_ptr(),
                            n as isize,
                            1,
                        );
                    }
                    col2im(&dcols, batch, *input, out_shape)
                });
                (vec![dw, db], dx)
            }
            (Layer::MaxPool { input }, Cache::Argmax(argmax)) => {
                let in_len = input.len();
                let out_len = self.output_shape().len();
                let mut dx = vec![0.0; batch * in_len];
                for b in 0..batch {
                    for j in 0..out_len {
                        let at = b * out_len + j;
                        dx[b * in_len + argmax[at] as usize] += grad[at];
                    }
                }
                (Vec::new(), Some(dx))
            }
            (Layer::Relu { .. }, Cache::Output(out)) => {
                let dx = grad
                    .iter()
                    .zip(out)
                    .map(|(g, o)| if *o > 0.0 { *g } else { 0.0 })
                    .collect();
                (Vec::new(), Some(dx))
            }
            (Layer::Dropout { .. }, Cache::Mask(mask)) => (
                Vec::new(),
                Some(grad.iter().zip(mask).map(|(g, m)| g * m).collect()),
            ),
            (Layer::Dropout { .. }, Cache::Nothing) => (Vec::new(), Some(grad.to_vec())),
            (Layer::Softmax { len }, Cache::Output(out)) => {
                // dx_i = s_i * (g_i - sum_j g_j s_j)
                let mut dx = Vec::with_capacity(grad.len());
                for (g, s) in grad.chunks(*len).zip(out.chunks(*len)) {
                    let inner: f64 = g.iter().zip(s).map(|(a, b)| a * b).sum();
                    dx.extend(g.iter().zip(s).map(|(a, b)| b * (a - inner)));
                }
                (Vec::new(), Some(dx))
            }
            _ => unreachable!("cache does not belong to this layer"),
        }
    }
}

/// Numerically stable softmax: subtract the row maximum before exponentiating.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Columns laid out as `(c*K*K) x (batch * oh * ow)`.
fn im2col(x: &[f64], batch: usize, input: Shape, out: Shape) -> Vec<f64> {
    let (ih, iw) = (input.height, input.width);
    let (oh, ow) = (out.height, out.width);
    let p = oh * ow;
    let n = batch * p;
    let mut cols = vec![0.0; input.channels * KERNEL * KERNEL * n];
    for c in 0..input.channels {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let r = (c * KERNEL + ky) * KERNEL + kx;
                let row = &mut cols[r * n..(r + 1) * n];
                for b in 0..batch {
                    let plane = &x[b * input.len() + c * ih * iw..][..ih * iw];
                    for oy in 0..oh {
                        let src = &plane[(oy + ky) * iw + kx..][..ow];
                        row[b * p + oy * ow..][..ow].copy_from_slice(src);
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], batch: usize, input: Shape, out: Shape) -> Vec<f64> {
    let (ih, iw) = (input.height, input.width);
    let (oh, ow) = (out.height, out.width);
    let p = oh * ow;
    let n = batch * p;
    let mut x = vec![0.0; batch * input.len()];
    for c in 0..input.channels {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let r = (c * KERNEL + ky) * KERNEL + kx;
                let row = &cols[r * n..(r + 1) * n];
                for b in 0..batch {
                    let plane = &mut x[b * input.len() + c * ih * iw..][..ih * iw];
                    for oy in 0..oh {
                        let dst = &mut plane[(oy + ky) * iw + kx..][..ow];
                        for (d, s) in dst.iter_mut().zip(&row[b * p + oy * ow..][..ow]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
    x
}

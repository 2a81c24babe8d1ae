//! Layer kinds with Keras-style fused activations.

use std::fmt;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor2};
use crate::textprep::PAD_INDEX;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

/// Logistic function, split by sign so neither branch overflows.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Linear => x,
            Activation::Relu => relu(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative from the pre-activation and activated values.
    pub fn derivative<T: Scalar>(self, pre: T, out: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Relu => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => out * (T::one() - out),
        }
    }
}

/// Dimensions of the data flowing between layers: `[len]` for index
/// sequences and flat vectors, `[len, channels]` for sequences of vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape(pub Vec<usize>);

impl Shape {
    pub fn elements(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        if dims.len() == 1 {
            write!(f, "({},)", dims[0])
        } else {
            write!(f, "({})", dims.join(", "))
        }
    }
}

/// Serializable description of a layer; enough to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `input_dim` table rows, padding row included.
    Embedding { input_dim: usize, dim: usize },
    Conv1dSame {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    Maxpool1d { pool: usize },
    Flatten,
    Dense { units: usize, activation: Activation },
    Dropout { rate: f64 },
    Activation { activation: Activation },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Embedding { .. } => "embedding",
            LayerSpec::Conv1dSame { .. } => "conv1d",
            LayerSpec::Maxpool1d { .. } => "max_pooling1d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Activation { .. } => "activation",
        }
    }

    /// Output shape for `input`, validating hyperparameters on the way.
    pub fn output_shape(&self, input: &Shape) -> Result<Shape, NnError> {
        let bad = |why: String| Err(NnError::InvalidConfig(format!("{}: {why}", self.kind_name())));
        match (self, input.0.as_slice()) {
            (LayerSpec::Embedding { input_dim, dim }, [len]) => {
                if *input_dim == 0 || *dim == 0 {
                    return bad("zero-sized table".into());
                }
                Ok(Shape(vec![*len, *dim]))
            }
            (LayerSpec::Conv1dSame { filters, kernel, .. }, [len, _]) => {
                if *filters == 0 || kernel % 2 == 0 {
                    return bad(format!("needs filters >= 1 and an odd kernel, got {filters}/{kernel}"));
                }
                Ok(Shape(vec![*len, *filters]))
            }
            (LayerSpec::Maxpool1d { pool }, [len, ch]) => {
                if *pool == 0 {
                    return bad("pool must be at least 1".into());
                }
                Ok(Shape(vec![len / pool, *ch]))
            }
            (LayerSpec::Flatten, dims) => Ok(Shape(vec![dims.iter().product()])),
            (LayerSpec::Dense { units, .. }, [_]) => {
                if *units == 0 {
                    return bad("units must be at least 1".into());
                }
                Ok(Shape(vec![*units]))
            }
            (LayerSpec::Dropout { rate }, _) => {
                if !(0.0..1.0).contains(rate) {
                    return bad(format!("rate {rate} outside [0, 1)"));
                }
                Ok(input.clone())
            }
            (LayerSpec::Activation { .. }, _) => Ok(input.clone()),
            (_, dims) => bad(format!("cannot accept input of rank {}", dims.len())),
        }
    }

    /// Trainable parameters for `input`, by closed-form count.
    pub fn param_count(&self, input: &Shape) -> usize {
        match (self, input.0.as_slice()) {
            (LayerSpec::Embedding { input_dim, dim }, _) => input_dim * dim,
            (LayerSpec::Conv1dSame { filters, kernel, .. }, [_, ch]) => filters * (kernel * ch + 1),
            (LayerSpec::Dense { units, .. }, [n]) => units * (n + 1),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// What a layer consumes: token indices (embedding only) or values.
#[derive(Debug, Clone, Copy)]
pub enum LayerInput<'a, T> {
    Indices(&'a [usize]),
    Values(&'a Tensor2<T>),
}

fn values<'a, T>(input: LayerInput<'a, T>) -> Result<&'a Tensor2<T>, NnError> {
    match input {
        LayerInput::Values(x) => Ok(x),
        LayerInput::Indices(_) => Err(NnError::ShapeMismatch(
            "only an embedding layer accepts token indices".into(),
        )),
    }
}

/// Where the incoming gradient sits relative to a layer's fused activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradAt {
    Output,
    PreActivation,
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Embedding {
        table: Tensor2<T>,
    },
    Conv1dSame {
        /// `filters x (kernel * channels)`, offset-major within a row.
        weights: Tensor2<T>,
        bias: Tensor2<T>,
        kernel: usize,
        activation: Activation,
    },
    Maxpool1d {
        pool: usize,
    },
    Flatten,
    Dense {
        /// `units x inputs`.
        weights: Tensor2<T>,
        bias: Tensor2<T>,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    Activation {
        activation: Activation,
    },
}

/// Forward-pass state a layer needs for its backward pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Embedding { indices: Vec<usize> },
    Affine { input: Tensor2<T>, pre: Tensor2<T>, out: Tensor2<T> },
    Pool { argmax: Vec<usize>, in_rows: usize, cols: usize },
    Flatten { rows: usize, cols: usize },
    Dropout { mask: Option<Vec<T>> },
    Activation { pre: Tensor2<T>, out: Tensor2<T> },
}

fn glorot<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor2<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    let data = (0..rows * cols).map(|_| T::of(dist.sample(rng))).collect();
    Tensor2::from_vec(rows, cols, data).expect("sized by construction")
}

impl<T: Scalar> Layer<T> {
    /// Allocate and initialize a layer for `input`. Embeddings draw from
    /// U(-0.05, 0.05) with a zero padding row; kernels use Glorot-uniform;
    /// biases start at zero.
    pub fn init<R: Rng + ?Sized>(spec: &LayerSpec, input: &Shape, rng: &mut R) -> Result<Self, NnError> {
        spec.output_shape(input)?;
        Ok(match (spec, input.0.as_slice()) {
            (LayerSpec::Embedding { input_dim, dim }, _) => {
                let dist = Uniform::new_inclusive(-0.05, 0.05);
                let mut table = Tensor2::zeros(*input_dim, *dim);
                for r in 1..*input_dim {
                    for v in table.row_mut(r) {
                        *v = T::of(dist.sample(rng));
                    }
                }
                Layer::Embedding { table }
            }
            (LayerSpec::Conv1dSame { filters, kernel, activation }, [_, ch]) => Layer::Conv1dSame {
                weights: glorot(*filters, kernel * ch, kernel * ch, kernel * filters, rng),
                bias: Tensor2::zeros(1, *filters),
                kernel: *kernel,
                activation: *activation,
            },
            (LayerSpec::Maxpool1d { pool }, _) => Layer::Maxpool1d { pool: *pool },
            (LayerSpec::Flatten, _) => Layer::Flatten,
            (LayerSpec::Dense { units, activation }, [n]) => Layer::Dense {
                weights: glorot(*units, *n, *n, *units, rng),
                bias: Tensor2::zeros(1, *units),
                activation: *activation,
            },
            (LayerSpec::Dropout { rate }, _) => Layer::Dropout { rate: *rate },
            (LayerSpec::Activation { activation }, _) => Layer::Activation { activation: *activation },
            _ => unreachable!("output_shape validated the input rank"),
        })
    }

    pub fn params(&self) -> Vec<&Tensor2<T>> {
        match self {
            Layer::Embedding { table } => vec![table],
            Layer::Conv1dSame { weights, bias, .. } | Layer::Dense { weights, bias, .. } => vec![weights, bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        match self {
            Layer::Embedding { table } => vec![table],
            Layer::Conv1dSame { weights, bias, .. } | Layer::Dense { weights, bias, .. } => vec![weights, bias],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn activation(&self) -> Option<Activation> {
        match self {
            Layer::Conv1dSame { activation, .. }
            | Layer::Dense { activation, .. }
            | Layer::Activation { activation } => Some(*activation),
            _ => None,
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: LayerInput<'_, T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor2<T>, Cache<T>), NnError> {
        match self {
            Layer::Embedding { table } => {
                let indices = match input {
                    LayerInput::Indices(ix) => ix,
                    LayerInput::Values(_) => {
                        return Err(NnError::ShapeMismatch("embedding expects token indices".into()))
                    }
                };
                let mut out = Tensor2::zeros(indices.len(), table.cols());
                for (i, &ix) in indices.iter().enumerate() {
                    if ix >= table.rows() {
                        return Err(NnError::IndexOutOfRange { index: ix, rows: table.rows() });
                    }
                    if ix != PAD_INDEX {
                        out.row_mut(i).copy_from_slice(table.row(ix));
                    }
                }
                Ok((out, Cache::Embedding { indices: indices.to_vec() }))
            }
            Layer::Conv1dSame { weights, bias, kernel, activation } => {
                let x = values(input)?;
                let (len, ch) = x.shape();
                if weights.cols() != kernel * ch {
                    return Err(NnError::ShapeMismatch(format!(
                        "conv1d expects {} channels, got {ch}",
                        weights.cols() / kernel
                    )));
                }
                let filters = weights.rows();
                let half = kernel / 2;
                let mut pre = Tensor2::zeros(len, filters);
                for t in 0..len {
                    for f in 0..filters {
                        let w = weights.row(f);
                        let mut acc = bias.get(0, f);
                        for j in 0..*kernel {
                            let Some(s) = (t + j).checked_sub(half).filter(|&s| s < len) else {
                                continue;
                            };
                            let xr = x.row(s);
                            let wr = &w[j * ch..(j + 1) * ch];
                            for c in 0..ch {
                                acc += wr[c] * xr[c];
                            }
                        }
                        pre.set(t, f, acc);
                    }
                }
                let out = pre.map(|v| activation.apply(v));
                Ok((out.clone(), Cache::Affine { input: x.clone(), pre, out }))
            }
            Layer::Maxpool1d { pool } => {
                let x = values(input)?;
                let (len, ch) = x.shape();
                let out_rows = len / pool;
                let mut out = Tensor2::zeros(out_rows, ch);
                let mut argmax = vec![0; out_rows * ch];
                for i in 0..out_rows {
                    for c in 0..ch {
                        let mut best = i * pool;
                        for r in i * pool + 1..(i + 1) * pool {
                            // strict: first maximum wins ties
                            if x.get(r, c) > x.get(best, c) {
                                best = r;
                            }
                        }
                        argmax[i * ch + c] = best;
                        out.set(i, c, x.get(best, c));
                    }
                }
                Ok((out, Cache::Pool { argmax, in_rows: len, cols: ch }))
            }
            Layer::Flatten => {
                let x = values(input)?;
                let (rows, cols) = x.shape();
                let out = x.clone().reshaped(1, rows * cols)?;
                Ok((out, Cache::Flatten { rows, cols }))
            }
            Layer::Dense { weights, bias, activation } => {
                let x = values(input)?;
                if x.rows() != 1 || x.cols() != weights.cols() {
                    return Err(NnError::ShapeMismatch(format!(
                        "dense expects 1x{}, got {}x{}",
                        weights.cols(),
                        x.rows(),
                        x.cols()
                    )));
                }
                let xs = x.as_slice();
                let pre: Vec<T> = (0..weights.rows())
                    .map(|m| {
                        let w = weights.row(m);
                        let mut acc = bias.get(0, m);
                        for (a, b) in w.iter().zip(xs) {
                            acc += *a * *b;
                        }
                        acc
                    })
                    .collect();
                let pre = Tensor2::row_vector(pre);
                let out = pre.map(|v| activation.apply(v));
                Ok((out.clone(), Cache::Affine { input: x.clone(), pre, out }))
            }
            Layer::Dropout { rate } => {
                let x = values(input)?;
                if mode == Mode::Infer || *rate == 0.0 {
                    return Ok((x.clone(), Cache::Dropout { mask: None }));
                }
                let keep = T::of(1.0 / (1.0 - rate));
                let mask: Vec<T> = (0..x.len())
                    .map(|_| if rng.gen::<f64>() < *rate { T::zero() } else { keep })
                    .collect();
                let mut out = x.clone();
                for (v, &m) in out.as_mut_slice().iter_mut().zip(&mask) {
                    *v *= m;
                }
                Ok((out, Cache::Dropout { mask: Some(mask) }))
            }
            Layer::Activation { activation } => {
                let x = values(input)?;
                let out = x.map(|v| activation.apply(v));
                Ok((out.clone(), Cache::Activation { pre: x.clone(), out }))
            }
        }
    }

    /// Accumulate parameter gradients into `param_grads` (same order as
    /// [`Layer::params`]) and return the gradient for this layer's input,
    /// or `None` when the input is token indices.
    pub fn backward(
        &self,
        cache: &Cache<T>,
        grad: &Tensor2<T>,
        at: GradAt,
        param_grads: &mut [Tensor2<T>],
    ) -> Result<Option<Tensor2<T>>, NnError> {
        let stale = || NnError::StaleCache;
        match (self, cache) {
            (Layer::Embedding { table }, Cache::Embedding { indices }) => {
                if grad.shape() != (indices.len(), table.cols()) {
                    return Err(NnError::ShapeMismatch("embedding gradient".into()));
                }
                let g_table = &mut param_grads[0];
                for (i, &ix) in indices.iter().enumerate() {
                    // padding row stays frozen
                    if ix == PAD_INDEX {
                        continue;
                    }
                    for (a, &b) in g_table.row_mut(ix).iter_mut().zip(grad.row(i)) {
                        *a += b;
                    }
                }
                Ok(None)
            }
            (Layer::Conv1dSame { weights, kernel, activation, .. }, Cache::Affine { input, pre, out }) => {
                let g_pre = through_activation(*activation, grad, pre, out, at)?;
                let (len, ch) = input.shape();
                let filters = weights.rows();
                let half = kernel / 2;
                let mut g_in = Tensor2::zeros(len, ch);
                let (g_w, rest) = param_grads.split_at_mut(1);
                let (g_w, g_b) = (&mut g_w[0], &mut rest[0]);
                for t in 0..len {
                    for f in 0..filters {
                        let g = g_pre.get(t, f);
                        if g == T::zero() {
                            continue;
                        }
                        g_b.as_mut_slice()[f] += g;
                        let w = weights.row(f);
                        for j in 0..*kernel {
                            let Some(s) = (t + j).checked_sub(half).filter(|&s| s < len) else {
                                continue;
                            };
                            let off = j * ch;
                            let xr = input.row(s);
                            let gw = &mut g_w.row_mut(f)[off..off + ch];
                            for c in 0..ch {
                                gw[c] += g * xr[c];
                            }
                            let gi = g_in.row_mut(s);
                            for c in 0..ch {
                                gi[c] += g * w[off + c];
                            }
                        }
                    }
                }
                Ok(Some(g_in))
            }
            (Layer::Maxpool1d { .. }, Cache::Pool { argmax, in_rows, cols }) => {
                let mut g_in = Tensor2::zeros(*in_rows, *cols);
                for i in 0..grad.rows() {
                    for c in 0..*cols {
                        let r = argmax[i * cols + c];
                        let v = g_in.get(r, c) + grad.get(i, c);
                        g_in.set(r, c, v);
                    }
                }
                Ok(Some(g_in))
            }
            (Layer::Flatten, Cache::Flatten { rows, cols }) => Ok(Some(grad.clone().reshaped(*rows, *cols)?)),
            (Layer::Dense { weights, activation, .. }, Cache::Affine { input, pre, out }) => {
                let g_pre = through_activation(*activation, grad, pre, out, at)?;
                let xs = input.as_slice();
                let mut g_in = vec![T::zero(); xs.len()];
                let (g_w, rest) = param_grads.split_at_mut(1);
                let (g_w, g_b) = (&mut g_w[0], &mut rest[0]);
                for m in 0..weights.rows() {
                    let g = g_pre.get(0, m);
                    g_b.as_mut_slice()[m] += g;
                    if g == T::zero() {
                        continue;
                    }
                    for (a, &x) in g_w.row_mut(m).iter_mut().zip(xs) {
                        *a += g * x;
                    }
                    for (a, &w) in g_in.iter_mut().zip(weights.row(m)) {
                        *a += g * w;
                    }
                }
                Ok(Some(Tensor2::row_vector(g_in)))
            }
            (Layer::Dropout { .. }, Cache::Dropout { mask }) => {
                let mut g = grad.clone();
                if let Some(mask) = mask {
                    for (v, &m) in g.as_mut_slice().iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                Ok(Some(g))
            }
            (Layer::Activation { activation }, Cache::Activation { pre, out }) => {
                Ok(Some(through_activation(*activation, grad, pre, out, at)?))
            }
            _ => Err(stale()),
        }
    }
}

fn through_activation<T: Scalar>(
    activation: Activation,
    grad: &Tensor2<T>,
    pre: &Tensor2<T>,
    out: &Tensor2<T>,
    at: GradAt,
) -> Result<Tensor2<T>, NnError> {
    grad.check_same_shape(pre)?;
    if at == GradAt::PreActivation || activation == Activation::Linear {
        return Ok(grad.clone());
    }
    let mut g = grad.clone();
    for ((v, &p), &o) in g.as_mut_slice().iter_mut().zip(pre.as_slice()).zip(out.as_slice()) {
        *v *= activation.derivative(p, o);
    }
    Ok(g)
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Cache, GradAt, Layer, LayerInput, LayerSpec, Mode, Shape};
use super::{AdamState, NnError, Tensor2};
use crate::Scalar;

/// What the first layer consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    /// Fixed-length token index sequence.
    Indices { len: usize },
    /// Dense feature vector.
    Features { dim: usize },
}

impl InputSpec {
    pub fn shape(&self) -> Shape {
        match self {
            InputSpec::Indices { len } => Shape(vec![*len]),
            InputSpec::Features { dim } => Shape(vec![*dim]),
        }
    }
}

/// A network input matching its [`InputSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum NetInput<T> {
    Indices(Vec<usize>),
    Features(Tensor2<T>),
}

/// Named layer summary row: name, output shape, parameter count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: String,
    pub output_shape: Shape,
    pub params: usize,
}

/// Activations cached by a forward pass, tied to the parameter version that
/// produced them.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    caches: Vec<Cache<T>>,
    version: u64,
    /// Final layer output (probabilities for a sigmoid head).
    pub output: Tensor2<T>,
}

/// Gradients in the same flat order as [`Network::params`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor2<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn scale(&mut self, k: T) {
        self.tensors.iter_mut().for_each(|t| t.scale(k));
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.as_slice().iter().all(|v| *v == T::zero()))
    }
}

/// A fixed sequence of layers.
#[derive(Debug, Clone)]
pub struct Network<T> {
    input: InputSpec,
    specs: Vec<LayerSpec>,
    names: Vec<String>,
    layers: Vec<Layer<T>>,
    shapes: Vec<Shape>,
    version: u64,
}

impl<T: Scalar> Network<T> {
    /// Build and initialize from specs, drawing weights from `seed`.
    pub fn new(input: InputSpec, specs: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(input, specs, &mut rng)
    }

    pub fn with_rng<R: Rng + ?Sized>(input: InputSpec, specs: Vec<LayerSpec>, rng: &mut R) -> Result<Self, NnError> {
        if specs.is_empty() {
            return Err(NnError::InvalidConfig("network has no layers".into()));
        }
        if matches!(input, InputSpec::Indices { len: 0 } | InputSpec::Features { dim: 0 }) {
            return Err(NnError::InvalidConfig("input size must be at least 1".into()));
        }
        let indices_in = matches!(input, InputSpec::Indices { .. });
        let embed_first = matches!(specs[0], LayerSpec::Embedding { .. });
        if indices_in != embed_first || specs[1..].iter().any(|s| matches!(s, LayerSpec::Embedding { .. })) {
            return Err(NnError::InvalidConfig(
                "an embedding layer must come first exactly when the input is token indices".into(),
            ));
        }
        let mut shape = input.shape();
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = Vec::with_capacity(specs.len());
        let mut names = Vec::with_capacity(specs.len());
        let mut seen = std::collections::HashMap::new();
        for spec in &specs {
            let out = spec.output_shape(&shape)?;
            if out.elements() == 0 {
                return Err(NnError::InvalidConfig(format!("{} produces an empty output", spec.kind_name())));
            }
            layers.push(Layer::init(spec, &shape, rng)?);
            let n = seen.entry(spec.kind_name()).or_insert(0usize);
            *n += 1;
            names.push(if *n == 1 { spec.kind_name().to_string() } else { format!("{}_{}", spec.kind_name(), n) });
            shapes.push(out.clone());
            shape = out;
        }
        // Keras numbers a kind from _1 once it repeats
        for (i, spec) in specs.iter().enumerate() {
            if seen[spec.kind_name()] > 1 && names[i] == spec.kind_name() {
                names[i] = format!("{}_1", spec.kind_name());
            }
        }
        Ok(Network {
            input,
            specs,
            names,
            layers,
            shapes,
            version: 0,
        })
    }

    pub fn input_spec(&self) -> InputSpec {
        self.input
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().map(Shape::elements).unwrap_or(0)
    }

    /// Per-layer output shapes.
    pub fn output_shapes(&self) -> &[Shape] {
        &self.shapes
    }

    /// Per-layer trainable parameter counts, from the allocated tensors.
    pub fn param_counts(&self) -> Vec<usize> {
        self.layers.iter().map(Layer::param_count).collect()
    }

    pub fn total_params(&self) -> usize {
        self.param_counts().iter().sum()
    }

    pub fn summary(&self) -> Vec<LayerSummary> {
        self.names
            .iter()
            .zip(&self.shapes)
            .zip(&self.layers)
            .map(|((n, s), l)| LayerSummary {
                name: n.clone(),
                output_shape: s.clone(),
                params: l.param_count(),
            })
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor2<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    /// Mutable parameter access. Bumps the version, invalidating traces.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        self.version += 1;
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            tensors: self.params().iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect(),
        }
    }

    fn check_input(&self, input: &NetInput<T>) -> Result<(), NnError> {
        match (self.input, input) {
            (InputSpec::Indices { len }, NetInput::Indices(ix)) if ix.len() == len => Ok(()),
            (InputSpec::Features { dim }, NetInput::Features(x)) if x.rows() == 1 && x.cols() == dim => Ok(()),
            (spec, _) => Err(NnError::ShapeMismatch(format!("input does not match {spec:?}"))),
        }
    }

    /// Run every layer, caching what backward needs.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &NetInput<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardTrace<T>, NnError> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current: Option<Tensor2<T>> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let arg = match (&current, input) {
                (Some(x), _) => LayerInput::Values(x),
                (None, NetInput::Indices(ix)) => LayerInput::Indices(ix),
                (None, NetInput::Features(x)) => LayerInput::Values(x),
            };
            let (out, cache) = layer.forward(arg, mode, rng)?;
            if !out.all_finite() {
                return Err(NnError::NonFinite(format!("output of layer `{}`", self.names[i])));
            }
            caches.push(cache);
            current = Some(out);
        }
        let output = current.expect("at least one layer");
        Ok(ForwardTrace {
            caches,
            version: self.version,
            output,
        })
    }

    /// Inference-mode forward pass (dropout off).
    pub fn predict(&self, input: &NetInput<T>) -> Result<Tensor2<T>, NnError> {
        // Inference never draws from the generator.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(input, Mode::Infer, &mut rng)?.output)
    }

    /// Backpropagate a gradient taken with respect to the final layer's
    /// pre-activation, adding parameter gradients into `grads`.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace<T>,
        grad_logits: &Tensor2<T>,
        grads: &mut Gradients<T>,
    ) -> Result<(), NnError> {
        if trace.version != self.version || trace.caches.len() != self.layers.len() {
            return Err(NnError::StaleCache);
        }
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.params().len();
        }
        if grads.tensors.len() != off {
            return Err(NnError::ShapeMismatch("gradient set does not match network".into()));
        }
        let mut grad = grad_logits.clone();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let np = layer.params().len();
            let at = if i == last { GradAt::PreActivation } else { GradAt::Output };
            let slot = &mut grads.tensors[offsets[i]..offsets[i] + np];
            match layer.backward(&trace.caches[i], &grad, at, slot)? {
                Some(g) => grad = g,
                None => break,
            }
        }
        Ok(())
    }

    pub fn backward(&self, trace: &ForwardTrace<T>, grad_logits: &Tensor2<T>) -> Result<Gradients<T>, NnError> {
        let mut grads = self.zero_gradients();
        self.backward_into(trace, grad_logits, &mut grads)?;
        Ok(grads)
    }

    /// One Adam step over all parameters.
    pub fn apply_adam(&mut self, state: &mut AdamState<T>, grads: &Gradients<T>) -> Result<(), NnError> {
        let mut params = self.params_mut();
        state.update(&mut params, &grads.tensors)
    }

    /// Replace parameters wholesale, e.g. from a checkpoint.
    pub fn load_params(&mut self, values: Vec<Tensor2<T>>) -> Result<(), NnError> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} tensors for {} parameters",
                values.len(),
                params.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            p.check_same_shape(&v)?;
            **p = v;
        }
        Ok(())
    }

    /// Parameter names like `dense_1.weight`, in [`Network::params`] order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, layer) in self.names.iter().zip(&self.layers) {
            let suffixes: &[&str] = match layer {
                Layer::Embedding { .. } => &["table"],
                Layer::Conv1dSame { .. } | Layer::Dense { .. } => &["weight", "bias"],
                _ => &[],
            };
            out.extend(suffixes.iter().map(|s| format!("{name}.{s}")));
        }
        out
    }

    /// Convert to another scalar type, keeping architecture and values.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::<U>::with_rng(self.input, self.specs.clone(), &mut rng)
            .expect("architecture already validated");
        net.load_params(self.params().iter().map(|p| p.cast()).collect())
            .expect("same architecture");
        net.version = 0;
        net
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Activation;

    fn toy() -> Network<f64> {
        Network::new(
            InputSpec::Indices { len: 6 },
            vec![
                LayerSpec::Embedding { input_dim: 7, dim: 4 },
                LayerSpec::Conv1dSame { filters: 3, kernel: 3, activation: Activation::Relu },
                LayerSpec::Maxpool1d { pool: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 5, activation: Activation::Relu },
                LayerSpec::Dense { units: 5, activation: Activation::Sigmoid },
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn names_follow_keras_numbering() {
        let n = toy();
        let names: Vec<_> = n.summary().into_iter().map(|s| s.name).collect();
        assert_eq!(names, vec!["embedding", "conv1d", "max_pooling1d", "flatten", "dense_1", "dense_2"]);
        assert_eq!(n.param_names()[0], "embedding.table");
        assert_eq!(n.param_names().len(), n.params().len());
    }

    #[test]
    fn allocated_counts_match_formulas() {
        let n = toy();
        let mut shape = n.input_spec().shape();
        for (spec, layer) in n.specs().iter().zip(n.layers()) {
            assert_eq!(spec.param_count(&shape), layer.param_count());
            shape = spec.output_shape(&shape).unwrap();
        }
    }

    #[test]
    fn stale_trace_is_rejected() {
        let mut n = toy();
        let input = NetInput::Indices(vec![1, 2, 3, 0, 0, 0]);
        let trace = n.forward(&input, Mode::Train, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let _ = n.params_mut();
        let g = Tensor2::zeros(1, 5);
        assert!(matches!(n.backward(&trace, &g), Err(NnError::StaleCache)));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let n = toy();
        let input = NetInput::Indices(vec![1, 2, 3, 4, 5, 6]);
        let trace = n.forward(&input, Mode::Train, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(n.backward(&trace, &Tensor2::zeros(1, 5)).unwrap().is_zero());
    }

    #[test]
    fn identical_inputs_identical_gradients() {
        let n = toy();
        let input = NetInput::Indices(vec![6, 2, 3, 4, 1, 0]);
        let g = Tensor2::row_vector(vec![0.1, -0.2, 0.3, 0.0, 0.05]);
        let run = || {
            let t = n.forward(&input, Mode::Train, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            n.backward(&t, &g).unwrap()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.tensors.iter().zip(&b.tensors) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn wrong_input_kind_is_rejected() {
        let n = toy();
        assert!(n.predict(&NetInput::Indices(vec![1, 2])).is_err());
        assert!(n.predict(&NetInput::Features(Tensor2::zeros(1, 6))).is_err());
        assert!(matches!(
            n.predict(&NetInput::Indices(vec![1, 2, 3, 4, 5, 7])),
            Err(NnError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_architectures() {
        let dense_first = Network::<f64>::new(
            InputSpec::Indices { len: 4 },
            vec![LayerSpec::Dense { units: 2, activation: Activation::Linear }],
            0,
        );
        assert!(dense_first.is_err());
        let pooled_away = Network::<f64>::new(
            InputSpec::Indices { len: 1 },
            vec![LayerSpec::Embedding { input_dim: 2, dim: 2 }, LayerSpec::Maxpool1d { pool: 2 }],
            0,
        );
        assert!(pooled_away.is_err());
    }

    #[test]
    fn cast_preserves_outputs() {
        let n = toy();
        let n32: Network<f32> = n.cast();
        let input = NetInput::Indices(vec![1, 2, 3, 4, 5, 6]);
        let a = n.predict(&input).unwrap();
        let b = n32.predict(&NetInput::Indices(vec![1, 2, 3, 4, 5, 6])).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - *y as f64).abs() < 1e-5);
        }
    }
}

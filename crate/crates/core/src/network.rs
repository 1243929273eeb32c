//! Declarative layer stacks and their parameter state.
//!
//! A [`NetworkSpec`] is an ordered list of named layers ending in the
//! identification head `representation -> Dropout -> FullyConnected`. The
//! output of the representation layer, flattened, is the face embedding; the
//! final fully connected layer produces the class logits.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, Normal};

use crate::layers::{layer_backward, layer_forward, LayerAux, LayerKind, Mode};
use crate::rng::{derive_seed, rng_from};
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("layer {layer}: {source}")]
    Layer { layer: String, source: ShapeError },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value first produced by layer {layer}")]
    NonFinite { layer: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// `[height, width, channels]` of the input image.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub representation_layer: String,
    pub class_count: usize,
}

/// Parameters of the block-structured family the canonical network belongs
/// to: each block is two 3x3 convolutions followed by a pooling layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockConfig {
    pub input_side: usize,
    pub input_channels: usize,
    /// Output channels of the two convolutions of each block.
    pub blocks: Vec<(usize, usize)>,
    pub class_count: usize,
    pub dropout_rate: f64,
}

impl BlockConfig {
    pub fn canonical() -> Self {
        Self {
            input_side: 100,
            input_channels: 1,
            blocks: vec![(32, 64), (64, 128), (96, 192), (128, 256), (160, 320)],
            class_count: 10575,
            dropout_rate: 0.4,
        }
    }
}

/// Per-layer and total parameter counts, in raw scalars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub per_layer: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCount {
    pub fn get(&self, name: &str) -> Option<usize> {
        self.per_layer
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, c)| c)
    }
}

/// Formats a scalar count in units of K = 1024, two decimals below 1K and
/// rounded to an integer above.
pub fn format_k(count: usize) -> String {
    let k = count as f64 / 1024.0;
    if k < 1.0 {
        format!("{k:.2}K")
    } else {
        format!("{k:.0}K")
    }
}

impl NetworkSpec {
    /// The 11-layer baseline: ten 3x3 convolutions in five blocks, four
    /// ceil-mode max pools, a 7x7 average pool giving the 320-d representation,
    /// 40% dropout and a 10575-way fully connected layer.
    pub fn canonical() -> Self {
        Self::from_blocks(&BlockConfig::canonical()).expect("canonical configuration is valid")
    }

    /// Builds a block-structured network. ReLU follows every convolution
    /// except the last one, whose output feeds the average pool directly.
    pub fn from_blocks(config: &BlockConfig) -> Result<Self, NetworkError> {
        if config.blocks.is_empty() {
            return Err(NetworkError::InvalidSpec("at least one block required".into()));
        }
        let mut layers = Vec::new();
        let mut channels = config.input_channels;
        let mut side = config.input_side;
        let n = config.blocks.len();
        for (b, &(c1, c2)) in config.blocks.iter().enumerate() {
            let id = b + 1;
            let last = id == n;
            layers.push(LayerSpec::new(format!("Conv{id}1"), LayerKind::conv3x3(channels, c1)));
            layers.push(LayerSpec::new(format!("Relu{id}1"), LayerKind::Relu));
            layers.push(LayerSpec::new(format!("Conv{id}2"), LayerKind::conv3x3(c1, c2)));
            channels = c2;
            if last {
                layers.push(LayerSpec::new(
                    format!("Pool{id}"),
                    LayerKind::AvgPool {
                        window: side,
                        stride: 1,
                    },
                ));
            } else {
                layers.push(LayerSpec::new(format!("Relu{id}2"), LayerKind::Relu));
                layers.push(LayerSpec::new(
                    format!("Pool{id}"),
                    LayerKind::MaxPool {
                        window: 2,
                        stride: 2,
                        ceil_mode: true,
                    },
                ));
                side = side.div_ceil(2);
            }
        }
        layers.push(LayerSpec::new(
            "Dropout",
            LayerKind::Dropout {
                rate: config.dropout_rate,
            },
        ));
        layers.push(LayerSpec::new(
            format!("Fc{}", n + 1),
            LayerKind::FullyConnected {
                in_dim: channels,
                out_dim: config.class_count,
            },
        ));
        let spec = Self {
            input_shape: [config.input_side, config.input_side, config.input_channels],
            layers,
            representation_layer: format!("Pool{n}"),
            class_count: config.class_count,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn representation_index(&self) -> Result<usize, NetworkError> {
        self.layer_index(&self.representation_layer).ok_or_else(|| {
            NetworkError::InvalidSpec(format!(
                "representation layer {} not found",
                self.representation_layer
            ))
        })
    }

    /// Checks structure and returns the activation shape after every layer,
    /// preceded by the input shape.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>, NetworkError> {
        for (i, l) in self.layers.iter().enumerate() {
            if l.name.is_empty() || l.name.chars().any(char::is_whitespace) {
                return Err(NetworkError::InvalidSpec(format!(
                    "layer {i} needs a nonempty name without whitespace"
                )));
            }
            if self.layers[..i].iter().any(|p| p.name == l.name) {
                return Err(NetworkError::InvalidSpec(format!(
                    "duplicate layer name {}",
                    l.name
                )));
            }
        }
        if self.class_count == 0 {
            return Err(NetworkError::InvalidSpec("class count must be positive".into()));
        }
        let mut shapes = vec![self.input_shape.to_vec()];
        for l in &self.layers {
            let next = l
                .kind
                .output_shape(shapes.last().expect("nonempty"))
                .map_err(|source| NetworkError::Layer {
                    layer: l.name.clone(),
                    source,
                })?;
            shapes.push(next);
        }
        let rep = self.representation_index()?;
        let head = &self.layers[rep + 1..];
        match head {
            [drop, fc] => {
                if !matches!(drop.kind, LayerKind::Dropout { .. }) {
                    return Err(NetworkError::InvalidSpec(format!(
                        "layer after the representation must be dropout, found {}",
                        drop.name
                    )));
                }
                match fc.kind {
                    LayerKind::FullyConnected { out_dim, .. } if out_dim == self.class_count => {}
                    LayerKind::FullyConnected { out_dim, .. } => {
                        return Err(NetworkError::InvalidSpec(format!(
                            "{} has {out_dim} outputs but class count is {}",
                            fc.name, self.class_count
                        )))
                    }
                    _ => {
                        return Err(NetworkError::InvalidSpec(format!(
                            "last layer must be fully connected, found {}",
                            fc.name
                        )))
                    }
                }
            }
            _ => {
                return Err(NetworkError::InvalidSpec(
                    "representation layer must be followed by exactly dropout and a fully connected layer"
                        .into(),
                ))
            }
        }
        Ok(shapes)
    }

    /// Activation shapes keyed by layer name.
    pub fn activation_shapes(&self) -> Result<Vec<(String, Vec<usize>)>, NetworkError> {
        let shapes = self.validate()?;
        Ok(self
            .layers
            .iter()
            .zip(shapes.into_iter().skip(1))
            .map(|(l, s)| (l.name.clone(), s))
            .collect())
    }

    pub fn embedding_dim(&self) -> Result<usize, NetworkError> {
        let shapes = self.validate()?;
        Ok(shapes[self.representation_index()? + 1].iter().product())
    }

    /// Number of layers that carry weights.
    pub fn depth(&self) -> usize {
        self.layers.iter().filter(|l| l.kind.is_parameterized()).count()
    }

    pub fn count_params(&self) -> ParamCount {
        let per_layer: Vec<(String, usize)> = self
            .layers
            .iter()
            .filter(|l| l.kind.is_parameterized())
            .map(|l| (l.name.clone(), l.kind.param_count()))
            .collect();
        let total = per_layer.iter().map(|(_, c)| c).sum();
        ParamCount { per_layer, total }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub weights: Option<Tensor>,
    /// Accumulated gradient, same shape as `weights`.
    pub grad: Option<Tensor>,
    /// Seed for the layer's own randomness (dropout in train mode).
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub states: Vec<LayerState>,
    pub mode: Mode,
    pub seed: u64,
}

/// Activations and auxiliary state recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[i + 1]` the output of layer `i`.
    pub activations: Vec<Tensor>,
    pub aux: Vec<LayerAux>,
    representation: usize,
}

impl Trace {
    pub fn embedding(&self) -> &[f64] {
        self.activations[self.representation + 1].data()
    }

    pub fn logits(&self) -> &Tensor {
        self.activations.last().expect("trace has activations")
    }

    /// Index of the first layer whose output holds a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.activations
            .iter()
            .skip(1)
            .position(|a| !a.all_finite())
    }
}

impl Network {
    /// He-style initialization: each weight drawn from `N(0, 2 / fan_in)`,
    /// layers in order from one seeded stream.
    pub fn init_weights(spec: &NetworkSpec, seed: u64) -> Result<Self, NetworkError> {
        spec.validate()?;
        let mut rng = rng_from(seed);
        let states = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let weights = match (l.kind.param_shape(), l.kind.fan_in()) {
                    (Some(shape), Some(fan_in)) => {
                        let std = libm::sqrt(2.0 / fan_in as f64);
                        let normal = Normal::new(0.0, std).expect("positive std");
                        let n = shape.iter().product();
                        let data = (0..n).map(|_| normal.sample(&mut rng)).collect();
                        Some(Tensor::from_vec(&shape, data)?)
                    }
                    _ => None,
                };
                Ok(LayerState {
                    grad: weights.as_ref().map(|w| Tensor::zeros(w.shape())).transpose()?,
                    weights,
                    seed: derive_seed(seed, &[i as u64]),
                })
            })
            .collect::<Result<Vec<_>, ShapeError>>()?;
        Ok(Self {
            spec: spec.clone(),
            states,
            mode: Mode::Infer,
            seed,
        })
    }

    /// A network whose weights are all zero.
    pub fn zeros(spec: &NetworkSpec, seed: u64) -> Result<Self, NetworkError> {
        let mut net = Self::init_weights(spec, seed)?;
        for s in &mut net.states {
            if let Some(w) = &mut s.weights {
                w.scale(0.0);
            }
        }
        Ok(net)
    }

    /// Checks that every parameterized layer holds weights of the implied shape.
    pub fn check_consistency(&self) -> Result<(), NetworkError> {
        self.spec.validate()?;
        if self.states.len() != self.spec.layers.len() {
            return Err(NetworkError::InvalidSpec(format!(
                "{} layer states for {} layers",
                self.states.len(),
                self.spec.layers.len()
            )));
        }
        for (l, s) in self.spec.layers.iter().zip(&self.states) {
            match (l.kind.param_shape(), &s.weights) {
                (Some(shape), Some(w)) => {
                    w.expect_shape(&shape)
                        .map_err(|source| NetworkError::Layer {
                            layer: l.name.clone(),
                            source,
                        })?;
                }
                (None, None) => {}
                (Some(_), None) => {
                    return Err(NetworkError::Layer {
                        layer: l.name.clone(),
                        source: ShapeError::MissingWeights,
                    })
                }
                (None, Some(_)) => {
                    return Err(NetworkError::InvalidSpec(format!(
                        "parameterless layer {} carries weights",
                        l.name
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Runs every layer, recording activations for backpropagation. Dropout
    /// masks derive from `dropout_seed` and the layer index.
    pub fn trace(&self, image: &Tensor, mode: Mode, dropout_seed: u64) -> Result<Trace, NetworkError> {
        image.expect_shape(&self.spec.input_shape)?;
        let mut activations = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.spec.layers.len());
        activations.push(image.clone());
        for (i, (l, s)) in self.spec.layers.iter().zip(&self.states).enumerate() {
            let input = activations.last().expect("nonempty");
            let (out, a) = layer_forward(
                &l.kind,
                s.weights.as_ref(),
                input,
                mode,
                derive_seed(dropout_seed, &[i as u64]),
            )
            .map_err(|source| NetworkError::Layer {
                layer: l.name.clone(),
                source,
            })?;
            activations.push(out);
            aux.push(a);
        }
        Ok(Trace {
            activations,
            aux,
            representation: self.spec.representation_index()?,
        })
    }

    /// Embedding (flattened representation output, taken before dropout) and
    /// logits. Dropout is the identity unless the network is in train mode.
    pub fn forward(&self, image: &Tensor) -> Result<(Vec<f64>, Tensor), NetworkError> {
        let trace = self.trace(image, self.mode, self.seed)?;
        Ok((trace.embedding().to_vec(), trace.logits().clone()))
    }

    /// Runs only the layers up to the representation.
    pub fn embed(&self, image: &Tensor) -> Result<Vec<f64>, NetworkError> {
        image.expect_shape(&self.spec.input_shape)?;
        let rep = self.spec.representation_index()?;
        let mut x = image.clone();
        for (l, s) in self.spec.layers[..=rep].iter().zip(&self.states) {
            x = layer_forward(&l.kind, s.weights.as_ref(), &x, Mode::Infer, 0)
                .map_err(|source| NetworkError::Layer {
                    layer: l.name.clone(),
                    source,
                })?
                .0;
        }
        Ok(x.into_data())
    }

    /// Backpropagates `d_logits` from the top and `d_embedding` injected at
    /// the representation output. Returns one weight gradient per layer
    /// (`None` for parameterless layers).
    pub fn backward(
        &self,
        trace: &Trace,
        d_embedding: Option<&[f64]>,
        d_logits: &Tensor,
    ) -> Result<Vec<Option<Tensor>>, NetworkError> {
        let n = self.spec.layers.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        let mut upstream = d_logits.clone();
        upstream.expect_shape(trace.logits().shape())?;
        for i in (0..n).rev() {
            if i == trace.representation {
                if let Some(d) = d_embedding {
                    if d.len() != upstream.len() {
                        return Err(ShapeError::Dimension {
                            axis: "embedding",
                            expected: upstream.len(),
                            actual: d.len(),
                        }
                        .into());
                    }
                    for (u, g) in upstream.data_mut().iter_mut().zip(d) {
                        *u += g;
                    }
                }
            }
            let l = &self.spec.layers[i];
            let (dx, dw) = layer_backward(
                &l.kind,
                self.states[i].weights.as_ref(),
                &trace.activations[i],
                &trace.aux[i],
                &upstream,
            )
            .map_err(|source| NetworkError::Layer {
                layer: l.name.clone(),
                source,
            })?;
            grads[i] = dw;
            upstream = dx;
        }
        Ok(grads)
    }

    /// Names of layers in order, for diagnostics.
    pub fn layer_name(&self, index: usize) -> String {
        self.spec
            .layers
            .get(index)
            .map_or_else(|| "?".to_string(), |l| l.name.clone())
    }
}

//! Feed-forward classifier with an explicit representation/decision split.
//!
//! The representation stack (rectified linear layers ending in the embedding
//! layer) maps features to embeddings; a single linear decision layer maps
//! embeddings to class logits. Parameters live in a flat [`ParamVector`] with
//! a per-layer offset table, the universal currency of aggregation.

mod io;
mod loss;
mod train;

pub use io::{load_param_vector, read_param_vector, save_param_vector, write_param_vector};
pub use loss::{ce_loss_grad, softmax, uniformity_loss_grad};
pub use train::{dataset_ce_loss, evaluate_accuracy, sgd_local_train, LocalLoss};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{vec_all_finite, RngStream};

/// Whether a layer belongs to the embedding-producing stack or the classifier
/// head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerRole {
    Representation,
    Decision,
}

/// One contiguous slice of a [`ParamVector`] holding a layer's weights and
/// bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSegment {
    pub start: usize,
    pub len: usize,
    pub role: LayerRole,
}

/// Network shape: `input_dim -> hidden_dims (rectified) -> embedding_dim
/// (linear) -> num_classes (linear)`. The embedding layer's output is the
/// representation `f(phi; x)`; the final linear layer is the decision head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub num_classes: usize,
}

/// Shape of a single dense layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub role: LayerRole,
    /// Hidden representation layers are rectified; the embedding layer and
    /// the decision layer are linear, so the embedding `f(phi; x)` is the
    /// raw output of the representation stack.
    pub rectified: bool,
}

impl MlpArch {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        embedding_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_dims,
            embedding_dim,
            num_classes,
        };
        if arch.input_dim == 0
            || arch.embedding_dim == 0
            || arch.num_classes == 0
            || arch.hidden_dims.contains(&0)
        {
            return Err(Error::InvalidArgument(
                "all architecture dimensions must be >= 1".into(),
            ));
        }
        Ok(arch)
    }

    /// Layer shapes in forward order; all representation layers precede the
    /// decision layer.
    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.embedding_dim);
        let n_rep = dims.len() - 1;
        let mut shapes: Vec<LayerShape> = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerShape {
                in_dim: w[0],
                out_dim: w[1],
                role: LayerRole::Representation,
                rectified: i + 1 < n_rep,
            })
            .collect();
        shapes.push(LayerShape {
            in_dim: self.embedding_dim,
            out_dim: self.num_classes,
            role: LayerRole::Decision,
            rectified: false,
        });
        shapes
    }

    /// Offset table matching the flat parameter layout: per layer, weights
    /// (row-major, `out_dim x in_dim`) followed by bias.
    pub fn segments(&self) -> Vec<LayerSegment> {
        let mut out = Vec::new();
        let mut start = 0;
        for shape in self.layer_shapes() {
            let len = shape.out_dim * shape.in_dim + shape.out_dim;
            out.push(LayerSegment {
                start,
                len,
                role: shape.role,
            });
            start += len;
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|s| s.out_dim * s.in_dim + s.out_dim)
            .sum()
    }
}

/// Flat real-valued parameter vector with a layer-offset map.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<LayerSegment>,
}

impl ParamVector {
    /// Build and validate: segments must partition `[0, len)` exactly, with
    /// every representation segment preceding every decision segment, and all
    /// values finite.
    pub fn new(values: Vec<f64>, segments: Vec<LayerSegment>) -> Result<Self> {
        let mut cursor = 0;
        let mut seen_decision = false;
        for seg in &segments {
            if seg.start != cursor {
                return Err(Error::InvalidArgument(format!(
                    "segment start {} does not continue previous segment end {}",
                    seg.start, cursor
                )));
            }
            match seg.role {
                LayerRole::Decision => seen_decision = true,
                LayerRole::Representation if seen_decision => {
                    return Err(Error::InvalidArgument(
                        "representation segment after decision segment".into(),
                    ))
                }
                LayerRole::Representation => {}
            }
            cursor += seg.len;
        }
        if cursor != values.len() {
            return Err(Error::DimensionMismatch {
                expected: cursor,
                got: values.len(),
            });
        }
        if !vec_all_finite(&values) {
            return Err(Error::InvalidArgument(
                "parameter vector contains non-finite entries".into(),
            ));
        }
        Ok(Self { values, segments })
    }

    pub fn zeros(arch: &MlpArch) -> Self {
        Self {
            values: vec![0.0; arch.param_count()],
            segments: arch.segments(),
        }
    }

    /// Same offset table, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        ParamVector::new(values, self.segments.clone())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segments(&self) -> &[LayerSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index range covered by decision-layer segments.
    pub fn decision_span(&self) -> std::ops::Range<usize> {
        let start = self
            .segments
            .iter()
            .find(|s| s.role == LayerRole::Decision)
            .map(|s| s.start)
            .unwrap_or(self.values.len());
        start..self.values.len()
    }
}

/// A classifier: architecture plus a parameter vector of matching shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    arch: MlpArch,
    params: ParamVector,
}

/// Borrowed view of one layer's weights and bias.
pub(crate) struct LayerView<'a> {
    pub weights: &'a [f64],
    pub bias: &'a [f64],
    pub shape: LayerShape,
}

impl MlpModel {
    pub fn from_params(arch: MlpArch, params: ParamVector) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::DimensionMismatch {
                expected: arch.param_count(),
                got: params.len(),
            });
        }
        if params.segments() != arch.segments().as_slice() {
            return Err(Error::InvalidArgument(
                "parameter offset table does not match architecture".into(),
            ));
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: MlpArch) -> Self {
        let params = ParamVector::zeros(&arch);
        Self { arch, params }
    }

    /// Per-layer uniform initialization in `+-sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub fn init(arch: MlpArch, rng: &mut RngStream) -> Self {
        let mut model = Self::zeros(arch);
        let shapes = model.arch.layer_shapes();
        let segments = model.arch.segments();
        for (shape, seg) in shapes.iter().zip(&segments) {
            let limit = (6.0 / (shape.in_dim + shape.out_dim) as f64).sqrt();
            let w_len = shape.out_dim * shape.in_dim;
            for v in &mut model.params.values_mut()[seg.start..seg.start + w_len] {
                *v = rng.random_range(-limit..limit);
            }
        }
        model
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }

    pub(crate) fn layer(&self, idx: usize) -> LayerView<'_> {
        let shape = self.arch.layer_shapes()[idx];
        let seg = self.arch.segments()[idx];
        let w_len = shape.out_dim * shape.in_dim;
        LayerView {
            weights: &self.params.values()[seg.start..seg.start + w_len],
            bias: &self.params.values()[seg.start + w_len..seg.start + seg.len],
            shape,
        }
    }

    pub(crate) fn num_layers(&self) -> usize {
        self.arch.hidden_dims.len() + 2
    }

    /// Activations of every layer for one input: `[input, h_1, ...,
    /// embedding, logits]`. Hidden representation layers are rectified; the
    /// embedding and decision layers are linear.
    pub(crate) fn forward_cache(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                got: x.len(),
            });
        }
        let n_layers = self.num_layers();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        for l in 0..n_layers {
            let view = self.layer(l);
            let prev = acts.last().unwrap();
            let mut out = Vec::with_capacity(view.shape.out_dim);
            for o in 0..view.shape.out_dim {
                let row = &view.weights[o * view.shape.in_dim..(o + 1) * view.shape.in_dim];
                let mut z = view.bias[o];
                for (w, a) in row.iter().zip(prev) {
                    z += w * a;
                }
                if view.shape.rectified {
                    z = z.max(0.0);
                }
                out.push(z);
            }
            acts.push(out);
        }
        Ok(acts)
    }

    /// Embedding `f(phi; x)`: the output of the representation stack.
    pub fn forward_embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut acts = self.forward_cache(x)?;
        acts.pop();
        Ok(acts.pop().unwrap())
    }

    /// Class logits `g(v; f(phi; x))`.
    pub fn forward_logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut acts = self.forward_cache(x)?;
        Ok(acts.pop().unwrap())
    }
}

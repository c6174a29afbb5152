//! Loss functions and their exact gradients via manual backpropagation.

use crate::error::{Error, Result};
use crate::model::{MlpModel, ParamVector};

/// Numerically stable softmax; output sums to 1.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy over the batch and its gradient w.r.t. all parameters.
pub fn ce_loss_grad(model: &MlpModel, batch: &[(Vec<f64>, usize)]) -> Result<(f64, ParamVector)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let num_classes = model.arch().num_classes;
    let inv_b = 1.0 / batch.len() as f64;
    let mut grad = ParamVector::zeros(model.arch());
    let mut loss = 0.0;
    for (x, label) in batch {
        if *label >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} >= num_classes {num_classes}"
            )));
        }
        let acts = model.forward_cache(x)?;
        let logits = acts.last().unwrap();
        let probs = softmax(logits);
        loss -= (probs[*label].max(f64::MIN_POSITIVE)).ln() * inv_b;
        // dL/dlogits for one sample, already scaled by 1/B.
        let mut delta: Vec<f64> = probs.iter().map(|p| p * inv_b).collect();
        delta[*label] -= inv_b;
        backprop_from(model, &acts, model.num_layers() - 1, delta, &mut grad);
    }
    Ok((loss, grad))
}

/// Uniformity loss: log of the mean over unordered sample pairs of
/// `exp(-||f(phi;x1) - f(phi;x2)||^2)`, with gradient w.r.t. representation
/// parameters only (the decision layer never enters the loss).
pub fn uniformity_loss_grad(model: &MlpModel, batch: &[Vec<f64>]) -> Result<(f64, ParamVector)> {
    if batch.len() < 2 {
        return Err(Error::TooFewUpdates {
            needed: 2,
            got: batch.len(),
        });
    }
    let caches: Vec<Vec<Vec<f64>>> = batch
        .iter()
        .map(|x| model.forward_cache(x))
        .collect::<Result<_>>()?;
    let embed_layer = model.num_layers() - 1; // activation index of the embedding
    let embeddings: Vec<&Vec<f64>> = caches.iter().map(|c| &c[embed_layer]).collect();
    if embeddings
        .iter()
        .any(|e| !crate::math::vec_all_finite(e) || crate::math::vec_dot(e, e).is_infinite())
    {
        return Err(Error::NonFinite("embeddings"));
    }

    let b = batch.len();
    let n_pairs = (b * (b - 1) / 2) as f64;
    // Log-sum-exp over pair exponents for stability.
    let mut exponents = Vec::with_capacity(b * (b - 1) / 2);
    for i in 0..b {
        for j in (i + 1)..b {
            let d2: f64 = embeddings[i]
                .iter()
                .zip(embeddings[j])
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            exponents.push(-d2);
        }
    }
    let m = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted_sum: f64 = exponents.iter().map(|e| (e - m).exp()).sum();
    let loss = m + shifted_sum.ln() - n_pairs.ln();

    // dL/de_i = sum_j w_ij * (-2)(e_i - e_j), w_ij = exp(-d2 - m) / shifted_sum.
    let dim = model.arch().embedding_dim;
    let mut deltas = vec![vec![0.0; dim]; b];
    let mut pair = 0;
    for i in 0..b {
        for j in (i + 1)..b {
            let w = (exponents[pair] - m).exp() / shifted_sum;
            pair += 1;
            for k in 0..dim {
                let diff = embeddings[i][k] - embeddings[j][k];
                deltas[i][k] += -2.0 * w * diff;
                deltas[j][k] += 2.0 * w * diff;
            }
        }
    }

    let mut grad = ParamVector::zeros(model.arch());
    for (cache, delta) in caches.iter().zip(deltas) {
        backprop_from(model, cache, embed_layer - 1, delta, &mut grad);
    }
    Ok((loss, grad))
}

/// Accumulate parameter gradients given `dL/d(output of layer `last`)` for a
/// single sample. `acts[l]` is the input to layer `l`; `acts[l + 1]` its
/// output. Rectified outputs mask their delta through the stored activation.
fn backprop_from(
    model: &MlpModel,
    acts: &[Vec<f64>],
    last: usize,
    mut delta: Vec<f64>,
    grad: &mut ParamVector,
) {
    let segments: Vec<_> = model.arch().segments();
    for l in (0..=last).rev() {
        let view = model.layer(l);
        if view.shape.rectified {
            for (d, a) in delta.iter_mut().zip(&acts[l + 1]) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let seg = segments[l];
        let in_dim = view.shape.in_dim;
        let w_len = view.shape.out_dim * in_dim;
        let input = &acts[l];
        {
            let gvals = grad.values_mut();
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut gvals[seg.start + o * in_dim..seg.start + (o + 1) * in_dim];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                gvals[seg.start + w_len + o] += d;
            }
        }
        if l == 0 {
            break;
        }
        let mut prev = vec![0.0; in_dim];
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let row = &view.weights[o * in_dim..(o + 1) * in_dim];
            for (p, w) in prev.iter_mut().zip(row) {
                *p += d * w;
            }
        }
        delta = prev;
    }
}

#[cfg(test)]
pub(crate) mod gradcheck {
    use super::*;

    /// Central finite differences of an arbitrary scalar loss over the
    /// parameters; the independent oracle for gradient checks.
    pub fn finite_difference_grad<F>(model: &MlpModel, eps: f64, mut loss_fn: F) -> Vec<f64>
    where
        F: FnMut(&MlpModel) -> f64,
    {
        let n = model.params().len();
        let mut grad = vec![0.0; n];
        for i in 0..n {
            let mut plus = model.clone();
            plus.params_mut().values_mut()[i] += eps;
            let mut minus = model.clone();
            minus.params_mut().values_mut()[i] -= eps;
            grad[i] = (loss_fn(&plus) - loss_fn(&minus)) / (2.0 * eps);
        }
        grad
    }

    pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, b)| (a - b).abs() / f64::max(1e-6, f64::max(a.abs(), b.abs())))
            .fold(0.0, f64::max)
    }
}

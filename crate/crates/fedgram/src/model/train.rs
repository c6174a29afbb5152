//! Local stochastic gradient descent, shared by benign clients and every
//! attack that trains a model.

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{vec_axpy, RngStream};
use crate::model::{ce_loss_grad, uniformity_loss_grad, MlpModel};

/// Which objective local training minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalLoss {
    CrossEntropy,
    /// Embedding-uniformity objective; touches representation layers only.
    Uniformity,
}

/// Run `steps` minibatch SGD updates starting from `model`. The input model
/// is left untouched; minibatches are consecutive chunks of an index
/// permutation reshuffled once per epoch.
pub fn sgd_local_train(
    model: &MlpModel,
    data: &Dataset,
    steps: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut RngStream,
    loss: LocalLoss,
) -> Result<MlpModel> {
    if data.samples.is_empty() {
        return Err(Error::EmptyClientData);
    }
    if !(lr > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be > 0".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let mut current = model.clone();
    let n = data.samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut cursor = 0;
    for _ in 0..steps {
        if cursor >= n {
            order.shuffle(rng);
            cursor = 0;
        }
        let end = (cursor + batch_size).min(n);
        let indices = &order[cursor..end];
        cursor = end;
        let grad = match loss {
            LocalLoss::CrossEntropy => {
                let batch: Vec<(Vec<f64>, usize)> = indices
                    .iter()
                    .map(|&i| data.samples[i].clone())
                    .collect();
                ce_loss_grad(&current, &batch)?.1
            }
            LocalLoss::Uniformity => {
                if indices.len() < 2 {
                    // A trailing 1-sample batch has no pairs; skip the step.
                    continue;
                }
                let batch: Vec<Vec<f64>> = indices
                    .iter()
                    .map(|&i| data.samples[i].0.clone())
                    .collect();
                match uniformity_loss_grad(&current, &batch) {
                    Ok((_, grad)) => grad,
                    // The unbounded uniformity objective can diverge; stop at
                    // the last finite iterate.
                    Err(Error::NonFinite(_)) => break,
                    Err(e) => return Err(e),
                }
            }
        };
        if !crate::math::vec_all_finite(grad.values()) {
            break;
        }
        let before = current.params().values().to_vec();
        vec_axpy(current.params_mut().values_mut(), -lr, grad.values());
        // Keep iterates inside an envelope where all downstream arithmetic
        // (embeddings, Gram products, pairwise distances) stays finite.
        const MAX_PARAM_ABS: f64 = 1e50;
        if !crate::math::vec_all_finite(current.params().values())
            || current
                .params()
                .values()
                .iter()
                .any(|v| v.abs() > MAX_PARAM_ABS)
        {
            current.params_mut().values_mut().copy_from_slice(&before);
            break;
        }
    }
    Ok(current)
}

/// Mean cross-entropy of a model over a whole dataset.
pub fn dataset_ce_loss(model: &MlpModel, data: &Dataset) -> Result<f64> {
    ce_loss_grad(model, &data.samples).map(|(loss, _)| loss)
}

/// Fraction of argmax-correct predictions; argmax ties resolve to the lowest
/// class index.
pub fn evaluate_accuracy(model: &MlpModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let mut correct = 0usize;
    for (x, y) in &data.samples {
        let logits = model.forward_logits(x)?;
        let mut best = 0usize;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        if best == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

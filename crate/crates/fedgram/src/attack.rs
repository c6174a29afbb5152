//! Malicious submission crafting for the untargeted attack catalog.
//!
//! Model-poisoning attacks observe the benign submissions of the round (a
//! [`BenignView`]) and emit crafted parameter vectors; data-poisoning attacks
//! transform a client's dataset and train honestly on the result. The
//! colluding coalition submits one identical vector per round, except Fang
//! where each member draws independently inside the same intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{flip_labels_static, ClientDataset};
use crate::error::{Error, Result};
use crate::math::{
    self, std_normal_inverse_cdf, vec_axpy, vec_norm, vec_sub, RngStream,
};
use crate::model::{sgd_local_train, softmax, LocalLoss, MlpArch, MlpModel, ParamVector};

fn default_fang_b() -> f64 {
    2.0
}
fn default_gamma_hi() -> f64 {
    100.0
}
fn default_tau() -> f64 {
    1e-3
}
fn default_mpaf_lambda() -> f64 {
    10.0
}
fn default_surrogate_epochs() -> usize {
    30
}

/// Which attack the malicious coalition runs, with its knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    None,
    Lie,
    Fang {
        #[serde(default = "default_fang_b")]
        scale_b: f64,
    },
    #[serde(rename = "minmax")]
    MinMax {
        #[serde(default = "default_gamma_hi")]
        gamma_hi: f64,
        #[serde(default = "default_tau")]
        tau: f64,
    },
    #[serde(rename = "minsum")]
    MinSum {
        #[serde(default = "default_gamma_hi")]
        gamma_hi: f64,
        #[serde(default = "default_tau")]
        tau: f64,
    },
    Mpaf {
        #[serde(default = "default_mpaf_lambda")]
        lambda: f64,
    },
    LabelFlip,
    DynamicLabelFlip {
        #[serde(default = "default_surrogate_epochs")]
        surrogate_epochs: usize,
    },
    AdaptiveUniformity,
}

impl AttackSpec {
    /// Attacks that craft parameter vectors from the benign view.
    pub fn is_model_poisoning(&self) -> bool {
        matches!(
            self,
            AttackSpec::Lie
                | AttackSpec::Fang { .. }
                | AttackSpec::MinMax { .. }
                | AttackSpec::MinSum { .. }
                | AttackSpec::Mpaf { .. }
        )
    }

    /// Attacks that corrupt local datasets and then train honestly.
    pub fn is_data_poisoning(&self) -> bool {
        matches!(
            self,
            AttackSpec::LabelFlip | AttackSpec::DynamicLabelFlip { .. }
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            AttackSpec::None => "none",
            AttackSpec::Lie => "lie",
            AttackSpec::Fang { .. } => "fang",
            AttackSpec::MinMax { .. } => "minmax",
            AttackSpec::MinSum { .. } => "minsum",
            AttackSpec::Mpaf { .. } => "mpaf",
            AttackSpec::LabelFlip => "label_flip",
            AttackSpec::DynamicLabelFlip { .. } => "dynamic_label_flip",
            AttackSpec::AdaptiveUniformity => "adaptive_uniformity",
        }
    }

    /// Default spec for a kind name, used by sweep axes.
    pub fn from_kind_name(name: &str) -> Option<AttackSpec> {
        Some(match name {
            "none" => AttackSpec::None,
            "lie" => AttackSpec::Lie,
            "fang" => AttackSpec::Fang {
                scale_b: default_fang_b(),
            },
            "minmax" => AttackSpec::MinMax {
                gamma_hi: default_gamma_hi(),
                tau: default_tau(),
            },
            "minsum" => AttackSpec::MinSum {
                gamma_hi: default_gamma_hi(),
                tau: default_tau(),
            },
            "mpaf" => AttackSpec::Mpaf {
                lambda: default_mpaf_lambda(),
            },
            "label_flip" => AttackSpec::LabelFlip,
            "dynamic_label_flip" => AttackSpec::DynamicLabelFlip {
                surrogate_epochs: default_surrogate_epochs(),
            },
            "adaptive_uniformity" => AttackSpec::AdaptiveUniformity,
            _ => return None,
        })
    }
}

/// What the colluding coalition observes in a round.
#[derive(Debug, Clone)]
pub struct BenignView {
    /// Benign submissions visible to the coalition (full local models).
    pub benign_updates: Vec<ParamVector>,
    pub global_model: ParamVector,
}

impl BenignView {
    fn dim(&self) -> Result<usize> {
        let first = self
            .benign_updates
            .first()
            .ok_or(Error::EmptyInput("benign view"))?;
        let dim = first.len();
        for u in &self.benign_updates {
            if u.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: u.len(),
                });
            }
        }
        Ok(dim)
    }
}

/// The inverse-CDF constant `z_max` of the LIE attack for `n` total clients
/// and `m` malicious clients.
pub fn lie_zmax(n: usize, m: usize) -> Result<f64> {
    if m == 0 || n <= m {
        return Err(Error::InvalidArgument(format!(
            "LIE requires n > m >= 1, got n={n}, m={m}"
        )));
    }
    let s = (n / 2 + 1) as i64 - m as i64;
    let fraction = (n as i64 - m as i64 - s) as f64 / (n - m) as f64;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::LieFractionDegenerate { fraction });
    }
    std_normal_inverse_cdf(fraction)
}

/// LIE: per coordinate, `mean(benign) - z_max * std(benign)` with population
/// standard deviation. Every malicious client submits this identical vector.
pub fn lie_craft(view: &BenignView, n: usize, m: usize) -> Result<ParamVector> {
    let dim = view.dim()?;
    let z = lie_zmax(n, m)?;
    let count = view.benign_updates.len() as f64;
    let mut mean = vec![0.0; dim];
    for u in &view.benign_updates {
        vec_axpy(&mut mean, 1.0 / count, u.values());
    }
    let mut values = Vec::with_capacity(dim);
    for j in 0..dim {
        let var = view
            .benign_updates
            .iter()
            .map(|u| {
                let d = u.values()[j] - mean[j];
                d * d
            })
            .sum::<f64>()
            / count;
        values.push(mean[j] - z * var.sqrt());
    }
    view.benign_updates[0].with_values(values)
}

/// Per-coordinate direction estimate for Fang: the sign of the mean benign
/// model minus the global model (ties resolve to +1).
pub fn fang_directions(view: &BenignView) -> Result<Vec<f64>> {
    let dim = view.dim()?;
    let count = view.benign_updates.len() as f64;
    let mut mean = vec![0.0; dim];
    for u in &view.benign_updates {
        vec_axpy(&mut mean, 1.0 / count, u.values());
    }
    Ok(mean
        .iter()
        .zip(view.global_model.values())
        .map(|(m, g)| if m - g < 0.0 { -1.0 } else { 1.0 })
        .collect())
}

/// Fang: per coordinate, sample uniformly inside the interval selected by the
/// direction estimate and the sign of the benign extreme.
pub fn fang_craft(
    view: &BenignView,
    directions: &[f64],
    b: f64,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    let dim = view.dim()?;
    if !(b > 1.0) {
        return Err(Error::InvalidArgument(format!("fang scale b={b} must be > 1")));
    }
    if directions.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: directions.len(),
        });
    }
    let mut values = Vec::with_capacity(dim);
    for j in 0..dim {
        let column: Vec<f64> = view.benign_updates.iter().map(|u| u.values()[j]).collect();
        let w_max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w_min = column.iter().cloned().fold(f64::INFINITY, f64::min);
        let (lo, hi) = fang_interval(directions[j], w_max, w_min, b);
        values.push(if lo == hi { lo } else { rng.random_range(lo..hi) });
    }
    view.benign_updates[0].with_values(values)
}

/// The sampling interval `(lo, hi)` for one coordinate.
pub fn fang_interval(direction: f64, w_max: f64, w_min: f64, b: f64) -> (f64, f64) {
    if direction < 0.0 {
        if w_max > 0.0 {
            (w_max, b * w_max)
        } else {
            (w_max, w_max / b)
        }
    } else if w_min > 0.0 {
        (w_min / b, w_min)
    } else {
        (b * w_min, w_min)
    }
}

/// Which deviation-attack constraint bounds the perturbation scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviationVariant {
    /// Max distance to any benign update stays within the max pairwise
    /// benign distance.
    MinMax,
    /// Sum of squared distances to the benign updates stays within the
    /// largest such sum among benign updates themselves.
    MinSum,
}

/// MinMax / MinSum: perturb the mean benign update along `-w_p`, where `w_p`
/// is its inverse unit direction, with the largest feasible scale `gamma`
/// found by bracketing halving search on `[0, gamma_hi]` to tolerance `tau`.
pub fn minmax_minsum_craft(
    view: &BenignView,
    variant: DeviationVariant,
    gamma_hi: f64,
    tau: f64,
) -> Result<ParamVector> {
    let (update, _) = deviation_update(view, variant, gamma_hi, tau)?;
    let mut values = view.global_model.values().to_vec();
    vec_axpy(&mut values, 1.0, &update);
    view.global_model.with_values(values)
}

/// The crafted malicious update (relative to the global model) and the
/// selected `gamma`.
pub fn deviation_update(
    view: &BenignView,
    variant: DeviationVariant,
    gamma_hi: f64,
    tau: f64,
) -> Result<(Vec<f64>, f64)> {
    view.dim()?;
    if view.benign_updates.len() < 2 {
        return Err(Error::TooFewUpdates {
            needed: 2,
            got: view.benign_updates.len(),
        });
    }
    if !(gamma_hi > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidArgument(
            "gamma_hi and tau must be > 0".into(),
        ));
    }
    let global = view.global_model.values();
    let deltas: Vec<Vec<f64>> = view
        .benign_updates
        .iter()
        .map(|u| vec_sub(u.values(), global))
        .collect();
    let mean_delta = math::mean_vectors(&deltas)?;
    let mean_norm = vec_norm(&mean_delta);
    if mean_norm == 0.0 {
        return Err(Error::ZeroPerturbationDirection);
    }
    // w_p is the inverse unit direction of the mean benign update; the craft
    // applies w_m = w_b - gamma * w_p, an overshoot along the mean update.
    let perturbation: Vec<f64> = mean_delta.iter().map(|v| v / mean_norm).collect();

    let bound = match variant {
        DeviationVariant::MinMax => {
            let mut max_pair: f64 = 0.0;
            for i in 0..deltas.len() {
                for j in (i + 1)..deltas.len() {
                    max_pair = max_pair.max(math::vec_distance(&deltas[i], &deltas[j]));
                }
            }
            max_pair
        }
        DeviationVariant::MinSum => {
            let mut max_sum: f64 = 0.0;
            for i in 0..deltas.len() {
                let sum: f64 = deltas
                    .iter()
                    .map(|d| {
                        let dist = math::vec_distance(&deltas[i], d);
                        dist * dist
                    })
                    .sum();
                max_sum = max_sum.max(sum);
            }
            max_sum
        }
    };
    let feasible = |gamma: f64| -> bool {
        let mut candidate = mean_delta.clone();
        vec_axpy(&mut candidate, gamma, &perturbation);
        match variant {
            DeviationVariant::MinMax => deltas
                .iter()
                .map(|d| math::vec_distance(&candidate, d))
                .fold(0.0_f64, f64::max)
                .le(&bound),
            DeviationVariant::MinSum => deltas
                .iter()
                .map(|d| {
                    let dist = math::vec_distance(&candidate, d);
                    dist * dist
                })
                .sum::<f64>()
                .le(&bound),
        }
    };

    let gamma = if feasible(gamma_hi) {
        gamma_hi
    } else if !feasible(0.0) {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, gamma_hi);
        while hi - lo > tau {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let mut update = mean_delta;
    vec_axpy(&mut update, gamma, &perturbation);
    Ok((update, gamma))
}

/// MPAF: pull the global model toward a fixed random-initialization baseline,
/// `global + lambda * (baseline - global)`.
pub fn mpaf_craft(global: &ParamVector, baseline: &ParamVector, lambda: f64) -> Result<ParamVector> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mpaf lambda={lambda} must be > 0"
        )));
    }
    if baseline.len() != global.len() {
        return Err(Error::DimensionMismatch {
            expected: global.len(),
            got: baseline.len(),
        });
    }
    let values = global
        .values()
        .iter()
        .zip(baseline.values())
        .map(|(g, b)| g + lambda * (b - g))
        .collect();
    global.with_values(values)
}

/// Dynamic label flip: train a fresh surrogate on the clean local data, then
/// relabel every sample to the surrogate's least probable class.
pub fn dynamic_flip(
    data: &ClientDataset,
    arch: &MlpArch,
    surrogate_epochs: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<ClientDataset> {
    if data.is_empty() {
        return Err(Error::EmptyClientData);
    }
    let surrogate = MlpModel::init(arch.clone(), rng);
    let steps_per_epoch = data.len().div_ceil(batch_size);
    let surrogate = sgd_local_train(
        &surrogate,
        data,
        surrogate_epochs * steps_per_epoch,
        lr,
        batch_size,
        rng,
        LocalLoss::CrossEntropy,
    )?;
    let mut samples = Vec::with_capacity(data.len());
    for (x, _) in &data.samples {
        let probs = softmax(&surrogate.forward_logits(x)?);
        let least = probs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .unwrap();
        samples.push((x.clone(), least));
    }
    ClientDataset::new(samples, data.num_classes, data.feature_dim)
}

/// Adaptive attack: local training identical to benign clients except the
/// loss enforces embedding uniformity, leaving the decision layer untouched.
pub fn adaptive_submit(
    global: &MlpModel,
    data: &ClientDataset,
    steps: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    sgd_local_train(global, data, steps, lr, batch_size, rng, LocalLoss::Uniformity)
        .map(MlpModel::into_params)
}

/// Static label flip applied to a malicious client's dataset.
pub fn label_flip(data: &ClientDataset) -> ClientDataset {
    flip_labels_static(data)
}

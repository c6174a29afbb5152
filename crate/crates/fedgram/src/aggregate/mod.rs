//! Server-side aggregation rules.
//!
//! Every rule is a pure function from (global model, submissions, server
//! resources) to the next global model plus an [`AggregationAudit`].
//! Submissions are full local models; rules defined on updates subtract the
//! global internally. All tie-breaks resolve toward the lower client id, and
//! the dispatcher canonicalizes submission order by client id, so outputs are
//! invariant under permutation of the input list.

mod gram;
mod krum;

pub use gram::{fedgram_aggregate, gram_score, rank_and_filter, rank_fractions, GramScore, ThenRule};
pub use krum::{bulyan_aggregate, krum_select};

use rand::prelude::*;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::data::{AuxiliaryDataset, Dataset};
use crate::error::{Error, Result};
use crate::math::{
    self, coordinate_median, coordinate_trimmed_mean, geometric_median, vec_axpy, vec_dot,
    vec_norm, vec_sub, RngStream, WeiszfeldParams,
};
use crate::model::{evaluate_accuracy, sgd_local_train, LocalLoss, MlpArch, MlpModel, ParamVector};

/// One client's submission for a round. The ground-truth flag feeds detection
/// metrics only; no aggregator reads it.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: u64,
    pub model: ParamVector,
    pub is_malicious: bool,
}

/// What an aggregation rule did: which submissions survived, which were
/// removed, and any per-client scores the rule computed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregationAudit {
    pub kept_ids: Vec<u64>,
    pub removed_ids: Vec<u64>,
    pub scores: Vec<(u64, f64)>,
    pub notes: Vec<String>,
}

impl AggregationAudit {
    fn keep_all(updates: &[ClientUpdate]) -> Self {
        let mut kept: Vec<u64> = updates.iter().map(|u| u.client_id).collect();
        kept.sort_unstable();
        Self {
            kept_ids: kept,
            ..Self::default()
        }
    }
}

fn default_filter_fraction() -> f64 {
    0.3
}
fn default_then() -> ThenRule {
    ThenRule::Avg
}
fn default_trim_k() -> usize {
    3
}
fn default_norm_bound() -> f64 {
    5.0
}
fn default_crfl_rho() -> f64 {
    5.0
}
fn default_crfl_sigma() -> f64 {
    0.01
}
fn default_false() -> bool {
    false
}
fn default_byzantine_f() -> usize {
    2
}
fn default_multi_select() -> usize {
    5
}
fn default_bulyan_f() -> usize {
    1
}
fn default_rlr_theta() -> usize {
    4
}
fn default_rlr_eta() -> f64 {
    1.0
}
fn default_bucket_size() -> usize {
    2
}
fn default_bucket_trim_k() -> usize {
    1
}
fn default_remove_fraction() -> f64 {
    0.3
}

/// Which aggregation rule the server runs, with its knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefenseSpec {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedgram")]
    FedGram {
        #[serde(default = "default_filter_fraction")]
        filter_fraction: f64,
        #[serde(default = "default_then")]
        then: ThenRule,
    },
    TrimmedMean {
        #[serde(default = "default_trim_k")]
        trim_k: usize,
    },
    Median,
    NormBound {
        #[serde(default = "default_norm_bound")]
        p: f64,
    },
    Crfl {
        #[serde(default = "default_crfl_rho")]
        rho: f64,
        #[serde(default = "default_crfl_sigma")]
        sigma: f64,
        /// Clip the aggregated parameters themselves instead of the
        /// aggregate update.
        #[serde(default = "default_false")]
        clip_raw_params: bool,
    },
    Krum {
        #[serde(default = "default_byzantine_f")]
        f: usize,
    },
    MultiKrum {
        #[serde(default = "default_byzantine_f")]
        f: usize,
        #[serde(default = "default_multi_select")]
        select: usize,
    },
    Bulyan {
        #[serde(default = "default_bulyan_f")]
        f: usize,
    },
    Rfa,
    Rlr {
        #[serde(default = "default_rlr_theta")]
        theta: usize,
        #[serde(default = "default_rlr_eta")]
        eta: f64,
    },
    Bucket {
        #[serde(default = "default_bucket_size")]
        bucket_size: usize,
        #[serde(default = "default_bucket_trim_k")]
        trim_k: usize,
    },
    #[serde(rename = "fltrust")]
    FlTrust,
    Roni {
        #[serde(default = "default_remove_fraction")]
        remove_fraction: f64,
    },
}

impl DefenseSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DefenseSpec::FedAvg => "fedavg",
            DefenseSpec::FedGram { then: ThenRule::Avg, .. } => "fedgram",
            DefenseSpec::FedGram { then: ThenRule::TrimmedMean, .. } => "fedgram_trim",
            DefenseSpec::TrimmedMean { .. } => "trimmed_mean",
            DefenseSpec::Median => "median",
            DefenseSpec::NormBound { .. } => "norm_bound",
            DefenseSpec::Crfl { .. } => "crfl",
            DefenseSpec::Krum { .. } => "krum",
            DefenseSpec::MultiKrum { .. } => "multi_krum",
            DefenseSpec::Bulyan { .. } => "bulyan",
            DefenseSpec::Rfa => "rfa",
            DefenseSpec::Rlr { .. } => "rlr",
            DefenseSpec::Bucket { .. } => "bucket",
            DefenseSpec::FlTrust => "fltrust",
            DefenseSpec::Roni { .. } => "roni",
        }
    }

    /// Default spec for a kind name, used by sweep axes. `fedgram_trim`
    /// selects the trimmed-mean composition.
    pub fn from_kind_name(name: &str) -> Option<DefenseSpec> {
        Some(match name {
            "fedavg" => DefenseSpec::FedAvg,
            "fedgram" => DefenseSpec::FedGram {
                filter_fraction: default_filter_fraction(),
                then: ThenRule::Avg,
            },
            "fedgram_trim" => DefenseSpec::FedGram {
                filter_fraction: default_filter_fraction(),
                then: ThenRule::TrimmedMean,
            },
            "trimmed_mean" => DefenseSpec::TrimmedMean {
                trim_k: default_trim_k(),
            },
            "median" => DefenseSpec::Median,
            "norm_bound" => DefenseSpec::NormBound {
                p: default_norm_bound(),
            },
            "crfl" => DefenseSpec::Crfl {
                rho: default_crfl_rho(),
                sigma: default_crfl_sigma(),
                clip_raw_params: false,
            },
            "krum" => DefenseSpec::Krum {
                f: default_byzantine_f(),
            },
            "multi_krum" => DefenseSpec::MultiKrum {
                f: default_byzantine_f(),
                select: default_multi_select(),
            },
            "bulyan" => DefenseSpec::Bulyan {
                f: default_bulyan_f(),
            },
            "rfa" => DefenseSpec::Rfa,
            "rlr" => DefenseSpec::Rlr {
                theta: default_rlr_theta(),
                eta: default_rlr_eta(),
            },
            "bucket" => DefenseSpec::Bucket {
                bucket_size: default_bucket_size(),
                trim_k: default_bucket_trim_k(),
            },
            "fltrust" => DefenseSpec::FlTrust,
            "roni" => DefenseSpec::Roni {
                remove_fraction: default_remove_fraction(),
            },
            _ => return None,
        })
    }

    /// Does this rule score submissions with the Gram-matrix probe?
    pub fn uses_gram_scores(&self) -> bool {
        matches!(self, DefenseSpec::FedGram { .. })
    }

    /// Does this rule need the server-held root/validation pool?
    pub fn needs_server_data(&self) -> bool {
        matches!(self, DefenseSpec::FlTrust | DefenseSpec::Roni { .. })
    }
}

/// Server-held state an aggregation rule may consult.
pub struct ServerResources<'a> {
    pub arch: &'a MlpArch,
    pub aux: Option<&'a AuxiliaryDataset>,
    /// Clean root/validation pool for FLTrust and RONI.
    pub server_data: Option<&'a Dataset>,
    /// Local-training knobs mirrored by the server where a rule trains.
    pub local_steps: usize,
    pub local_lr: f64,
    pub batch_size: usize,
}

/// Run one aggregation rule. Submissions are canonicalized by client id
/// first, so the result is independent of input order.
pub fn aggregate(
    spec: &DefenseSpec,
    global: &ParamVector,
    updates: &[ClientUpdate],
    resources: &ServerResources<'_>,
    rng: &mut RngStream,
) -> Result<(ParamVector, AggregationAudit)> {
    if updates.is_empty() {
        return Err(Error::EmptyInput("updates"));
    }
    let mut sorted: Vec<ClientUpdate> = updates.to_vec();
    sorted.sort_by_key(|u| u.client_id);
    for u in &sorted {
        if u.model.len() != global.len() {
            return Err(Error::DimensionMismatch {
                expected: global.len(),
                got: u.model.len(),
            });
        }
    }
    let updates = &sorted[..];

    match spec {
        DefenseSpec::FedAvg => fedavg(updates),
        DefenseSpec::FedGram {
            filter_fraction,
            then,
        } => {
            let aux = resources
                .aux
                .ok_or(Error::EmptyInput("auxiliary dataset"))?;
            let (vector, audit, _) =
                fedgram_aggregate(resources.arch, updates, aux, *filter_fraction, *then)?;
            Ok((vector, audit))
        }
        DefenseSpec::TrimmedMean { trim_k } => trimmed_mean_aggregate(updates, *trim_k),
        DefenseSpec::Median => median_aggregate(updates),
        DefenseSpec::NormBound { p } => norm_bound_aggregate(global, updates, *p),
        DefenseSpec::Crfl {
            rho,
            sigma,
            clip_raw_params,
        } => crfl_aggregate(global, updates, *rho, *sigma, *clip_raw_params, rng),
        DefenseSpec::Krum { f } => krum_select(updates, *f, 1),
        DefenseSpec::MultiKrum { f, select } => krum_select(updates, *f, *select),
        DefenseSpec::Bulyan { f } => bulyan_aggregate(updates, *f),
        DefenseSpec::Rfa => rfa_aggregate(updates, None),
        DefenseSpec::Rlr { theta, eta } => rlr_aggregate(global, updates, *theta, *eta),
        DefenseSpec::Bucket {
            bucket_size,
            trim_k,
        } => bucket_aggregate(updates, *bucket_size, *trim_k, rng),
        DefenseSpec::FlTrust => {
            let root = resources
                .server_data
                .ok_or(Error::EmptyInput("server root dataset"))?;
            fltrust_aggregate(
                global,
                updates,
                root,
                resources.arch,
                resources.local_steps,
                resources.local_lr,
                resources.batch_size,
                rng,
            )
        }
        DefenseSpec::Roni { remove_fraction } => {
            let validation = resources
                .server_data
                .ok_or(Error::EmptyInput("server validation dataset"))?;
            let remove = ((remove_fraction * updates.len() as f64).ceil() as usize)
                .min(updates.len().saturating_sub(1));
            roni_aggregate(updates, validation, resources.arch, remove)
        }
    }
}

pub(crate) fn mean_of(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    math::mean_vectors(vectors)
}

fn model_vectors(updates: &[ClientUpdate]) -> Vec<Vec<f64>> {
    updates.iter().map(|u| u.model.values().to_vec()).collect()
}

fn deltas_from(global: &ParamVector, updates: &[ClientUpdate]) -> Vec<Vec<f64>> {
    updates
        .iter()
        .map(|u| vec_sub(u.model.values(), global.values()))
        .collect()
}

/// Arithmetic mean of the submitted models.
pub fn fedavg(updates: &[ClientUpdate]) -> Result<(ParamVector, AggregationAudit)> {
    let mean = mean_of(&model_vectors(updates))?;
    Ok((
        updates[0].model.with_values(mean)?,
        AggregationAudit::keep_all(updates),
    ))
}

/// Coordinate-wise trimmed mean of the submitted models.
pub fn trimmed_mean_aggregate(
    updates: &[ClientUpdate],
    trim_k: usize,
) -> Result<(ParamVector, AggregationAudit)> {
    let out = coordinate_trimmed_mean(&model_vectors(updates), trim_k)?;
    Ok((
        updates[0].model.with_values(out)?,
        AggregationAudit::keep_all(updates),
    ))
}

/// Coordinate-wise median of the submitted models.
pub fn median_aggregate(updates: &[ClientUpdate]) -> Result<(ParamVector, AggregationAudit)> {
    let out = coordinate_median(&model_vectors(updates))?;
    Ok((
        updates[0].model.with_values(out)?,
        AggregationAudit::keep_all(updates),
    ))
}

/// Clip every client update to norm at most `p`, then average: `global +
/// mean(clipped deltas)`.
pub fn norm_bound_aggregate(
    global: &ParamVector,
    updates: &[ClientUpdate],
    p: f64,
) -> Result<(ParamVector, AggregationAudit)> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("norm bound p={p} must be > 0")));
    }
    let mut deltas = deltas_from(global, updates);
    for d in &mut deltas {
        let norm = vec_norm(d);
        if norm > p {
            let scale = p / norm;
            for v in d.iter_mut() {
                *v *= scale;
            }
        }
    }
    let mean = mean_of(&deltas)?;
    let mut out = global.values().to_vec();
    vec_axpy(&mut out, 1.0, &mean);
    Ok((
        global.with_values(out)?,
        AggregationAudit::keep_all(updates),
    ))
}

/// Average the models, clip (the aggregate update by default, or the raw
/// parameters), then add isotropic Gaussian noise.
pub fn crfl_aggregate(
    global: &ParamVector,
    updates: &[ClientUpdate],
    rho: f64,
    sigma: f64,
    clip_raw_params: bool,
    rng: &mut RngStream,
) -> Result<(ParamVector, AggregationAudit)> {
    if !(rho > 0.0) || sigma < 0.0 {
        return Err(Error::InvalidArgument(
            "crfl needs rho > 0 and sigma >= 0".into(),
        ));
    }
    let mut out = mean_of(&model_vectors(updates))?;
    if clip_raw_params {
        let norm = vec_norm(&out);
        if norm > rho {
            let scale = rho / norm;
            for v in out.iter_mut() {
                *v *= scale;
            }
        }
    } else {
        let mut delta = vec_sub(&out, global.values());
        let norm = vec_norm(&delta);
        if norm > rho {
            let scale = rho / norm;
            for v in delta.iter_mut() {
                *v *= scale;
            }
        }
        out = global.values().to_vec();
        vec_axpy(&mut out, 1.0, &delta);
    }
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidArgument(format!("crfl noise: {e}")))?;
        for v in out.iter_mut() {
            *v += noise.sample(rng);
        }
    }
    Ok((
        global.with_values(out)?,
        AggregationAudit::keep_all(updates),
    ))
}

/// Geometric median of the submitted models (uniform weights by default).
pub fn rfa_aggregate(
    updates: &[ClientUpdate],
    weights: Option<&[f64]>,
) -> Result<(ParamVector, AggregationAudit)> {
    let vectors = model_vectors(updates);
    let uniform = vec![1.0; vectors.len()];
    let w = weights.unwrap_or(&uniform);
    let out = geometric_median(&vectors, w, WeiszfeldParams::default())?;
    Ok((
        updates[0].model.with_values(out)?,
        AggregationAudit::keep_all(updates),
    ))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Robust learning rate: per coordinate, apply `+eta` to the mean update
/// where the update signs agree at least `theta` strongly, `-eta` elsewhere.
pub fn rlr_aggregate(
    global: &ParamVector,
    updates: &[ClientUpdate],
    theta: usize,
    eta: f64,
) -> Result<(ParamVector, AggregationAudit)> {
    let deltas = deltas_from(global, updates);
    let mean = mean_of(&deltas)?;
    let mut out = global.values().to_vec();
    for j in 0..out.len() {
        let agreement: f64 = deltas.iter().map(|d| sign(d[j])).sum();
        let rate = if agreement.abs() >= theta as f64 {
            eta
        } else {
            -eta
        };
        out[j] += rate * mean[j];
    }
    Ok((
        global.with_values(out)?,
        AggregationAudit::keep_all(updates),
    ))
}

/// Shuffle submissions into buckets of `bucket_size`, average each bucket,
/// then take a coordinate-wise trimmed mean across the bucket means.
pub fn bucket_aggregate(
    updates: &[ClientUpdate],
    bucket_size: usize,
    trim_k: usize,
    rng: &mut RngStream,
) -> Result<(ParamVector, AggregationAudit)> {
    if bucket_size == 0 {
        return Err(Error::InvalidArgument("bucket_size must be >= 1".into()));
    }
    // Canonical order first so the shuffle depends only on ids and the rng.
    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.shuffle(rng);
    let vectors = model_vectors(updates);
    let bucket_means: Vec<Vec<f64>> = order
        .chunks(bucket_size)
        .map(|chunk| {
            let members: Vec<Vec<f64>> = chunk.iter().map(|&i| vectors[i].clone()).collect();
            mean_of(&members)
        })
        .collect::<Result<_>>()?;
    let out = coordinate_trimmed_mean(&bucket_means, trim_k)?;
    Ok((
        updates[0].model.with_values(out)?,
        AggregationAudit::keep_all(updates),
    ))
}

/// Trust-scored aggregation: the server trains a root model, scores each
/// update by the rectified cosine to the root update, rescales updates to the
/// root update's norm, and averages with trust weights.
#[allow(clippy::too_many_arguments)]
pub fn fltrust_aggregate(
    global: &ParamVector,
    updates: &[ClientUpdate],
    root_data: &Dataset,
    arch: &MlpArch,
    steps: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<(ParamVector, AggregationAudit)> {
    if root_data.is_empty() {
        return Err(Error::EmptyInput("root dataset"));
    }
    let global_model = MlpModel::from_params(arch.clone(), global.clone())?;
    let root_model = sgd_local_train(
        &global_model,
        root_data,
        steps,
        lr,
        batch_size,
        rng,
        LocalLoss::CrossEntropy,
    )?;
    let root_delta = vec_sub(root_model.params().values(), global.values());
    let root_norm = vec_norm(&root_delta);
    let mut audit = AggregationAudit::default();
    if root_norm == 0.0 {
        audit.notes.push("zero root update; global unchanged".into());
        audit.kept_ids = updates.iter().map(|u| u.client_id).collect();
        return Ok((global.clone(), audit));
    }
    let deltas = deltas_from(global, updates);
    let mut trust = Vec::with_capacity(updates.len());
    for d in &deltas {
        let norm = vec_norm(d);
        let ts = if norm == 0.0 {
            0.0
        } else {
            (vec_dot(d, &root_delta) / (norm * root_norm)).max(0.0)
        };
        trust.push(ts);
    }
    let trust_sum: f64 = trust.iter().sum();
    audit.scores = updates
        .iter()
        .zip(&trust)
        .map(|(u, t)| (u.client_id, *t))
        .collect();
    audit.kept_ids = updates
        .iter()
        .zip(&trust)
        .filter(|(_, t)| **t > 0.0)
        .map(|(u, _)| u.client_id)
        .collect();
    audit.removed_ids = updates
        .iter()
        .zip(&trust)
        .filter(|(_, t)| **t == 0.0)
        .map(|(u, _)| u.client_id)
        .collect();
    if trust_sum == 0.0 {
        audit.notes.push("all trust scores zero; global unchanged".into());
        return Ok((global.clone(), audit));
    }
    let mut combined = vec![0.0; global.len()];
    for (d, &ts) in deltas.iter().zip(&trust) {
        if ts == 0.0 {
            continue;
        }
        let norm = vec_norm(d);
        let rescale = root_norm / norm;
        vec_axpy(&mut combined, ts * rescale / trust_sum, d);
    }
    let mut out = global.values().to_vec();
    vec_axpy(&mut out, 1.0, &combined);
    Ok((global.with_values(out)?, audit))
}

/// Error-rate-impact filtering: drop the `remove` clients whose exclusion
/// from the mean raises validation accuracy the most, then average the rest.
pub fn roni_aggregate(
    updates: &[ClientUpdate],
    validation: &Dataset,
    arch: &MlpArch,
    remove: usize,
) -> Result<(ParamVector, AggregationAudit)> {
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation dataset"));
    }
    let n = updates.len();
    if remove >= n {
        return Err(Error::FilterRemovesEverything { remove, n });
    }
    let vectors = model_vectors(updates);
    let accuracy_of_mean = |members: &[Vec<f64>]| -> Result<f64> {
        let mean = mean_of(members)?;
        let model = MlpModel::from_params(arch.clone(), updates[0].model.with_values(mean)?)?;
        evaluate_accuracy(&model, validation)
    };
    let acc_all = accuracy_of_mean(&vectors)?;
    // Impact of client i: accuracy without i minus accuracy with everyone.
    let mut impacts = Vec::with_capacity(n);
    for i in 0..n {
        let without: Vec<Vec<f64>> = vectors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| v.clone())
            .collect();
        impacts.push(accuracy_of_mean(&without)? - acc_all);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        impacts[b]
            .partial_cmp(&impacts[a])
            .expect("non-finite impact")
            .then(updates[a].client_id.cmp(&updates[b].client_id))
    });
    let mut removed: Vec<u64> = order[..remove].iter().map(|&i| updates[i].client_id).collect();
    removed.sort_unstable();
    let mut kept: Vec<u64> = order[remove..].iter().map(|&i| updates[i].client_id).collect();
    kept.sort_unstable();
    let survivors: Vec<Vec<f64>> = updates
        .iter()
        .filter(|u| kept.binary_search(&u.client_id).is_ok())
        .map(|u| u.model.values().to_vec())
        .collect();
    let mean = mean_of(&survivors)?;
    let audit = AggregationAudit {
        kept_ids: kept,
        removed_ids: removed,
        scores: updates
            .iter()
            .enumerate()
            .map(|(i, u)| (u.client_id, impacts[i]))
            .collect(),
        notes: Vec::new(),
    };
    Ok((updates[0].model.with_values(mean)?, audit))
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::model::{LayerRole, LayerSegment};

    /// Parameter vector over a synthetic single-segment layout; fine for
    /// rules that treat models as flat vectors.
    pub fn pv(values: Vec<f64>) -> ParamVector {
        let seg = LayerSegment {
            start: 0,
            len: values.len(),
            role: LayerRole::Representation,
        };
        ParamVector::new(values, vec![seg]).unwrap()
    }

    pub fn updates_from_vectors(vectors: Vec<Vec<f64>>) -> Vec<ClientUpdate> {
        vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| ClientUpdate {
                client_id: i as u64,
                model: pv(v),
                is_malicious: false,
            })
            .collect()
    }

    pub fn scalar_updates(values: &[f64]) -> Vec<ClientUpdate> {
        updates_from_vectors(values.iter().map(|&v| vec![v]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::tests_support::*;
    use super::*;
    use crate::math::Actor;
    use approx::assert_abs_diff_eq;

    fn rng() -> RngStream {
        RngStream::new(11, 1, Actor::Defense)
    }

    #[test]
    fn fedavg_examples() {
        let single = updates_from_vectors(vec![vec![1.5, -2.0]]);
        let (out, audit) = fedavg(&single).unwrap();
        assert_eq!(out.values(), &[1.5, -2.0]);
        assert_eq!(audit.kept_ids, vec![0]);

        let opposite = updates_from_vectors(vec![vec![3.0, -1.0], vec![-3.0, 1.0]]);
        let (out, _) = fedavg(&opposite).unwrap();
        assert_eq!(out.values(), &[0.0, 0.0]);
    }

    #[test]
    fn fedavg_matches_summation_oracle() {
        use rand::Rng as _;
        let mut gen = RngStream::setup(1, Actor::Defense);
        let vectors: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| gen.random_range(-10.0..10.0)).collect())
            .collect();
        let updates = updates_from_vectors(vectors.clone());
        let (out, _) = fedavg(&updates).unwrap();
        for j in 0..4 {
            let want: f64 = vectors.iter().map(|v| v[j]).sum::<f64>() / 5.0;
            assert_abs_diff_eq!(out.values()[j], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn norm_bound_clips_and_preserves_direction() {
        let global = pv(vec![0.0, 0.0]);
        let updates = updates_from_vectors(vec![vec![6.0, 8.0]]); // norm 10
        let (out, _) = norm_bound_aggregate(&global, &updates, 5.0).unwrap();
        assert_abs_diff_eq!(vec_norm(out.values()), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.values()[0] / out.values()[1], 0.75, epsilon = 1e-12);

        let small = updates_from_vectors(vec![vec![3.0, 0.0]]);
        let (out, _) = norm_bound_aggregate(&global, &small, 5.0).unwrap();
        assert_eq!(out.values(), &[3.0, 0.0]);
    }

    #[test]
    fn norm_bound_mixed_batch_matches_per_vector_clip_oracle() {
        let global = pv(vec![1.0, -1.0]);
        let raw = vec![vec![7.0, -1.0], vec![1.0, 2.0], vec![-5.0, -1.0]];
        let updates = updates_from_vectors(raw.clone());
        let p = 2.0;
        let (out, _) = norm_bound_aggregate(&global, &updates, p).unwrap();
        // Oracle: clip each delta by hand, average, add to global.
        let mut acc = [0.0, 0.0];
        for v in &raw {
            let mut d = [v[0] - 1.0, v[1] + 1.0];
            let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if norm > p {
                d[0] *= p / norm;
                d[1] *= p / norm;
            }
            acc[0] += d[0] / 3.0;
            acc[1] += d[1] / 3.0;
        }
        assert_abs_diff_eq!(out.values()[0], 1.0 + acc[0], epsilon = 1e-12);
        assert_abs_diff_eq!(out.values()[1], -1.0 + acc[1], epsilon = 1e-12);
    }

    #[test]
    fn crfl_without_noise_reduces_to_clipped_mean() {
        let global = pv(vec![0.0, 0.0]);
        let updates = updates_from_vectors(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (out, _) = crfl_aggregate(&global, &updates, 5.0, 0.0, false, &mut rng()).unwrap();
        assert_eq!(out.values(), &[0.5, 0.5]);

        let big = updates_from_vectors(vec![vec![30.0, 40.0]]);
        let (out, _) = crfl_aggregate(&global, &big, 5.0, 0.0, false, &mut rng()).unwrap();
        assert_abs_diff_eq!(vec_norm(out.values()), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn crfl_raw_parameter_clipping_bounds_the_model_norm() {
        let global = pv(vec![10.0, 0.0]);
        let updates = updates_from_vectors(vec![vec![30.0, 40.0]]);
        let (out, _) = crfl_aggregate(&global, &updates, 5.0, 0.0, true, &mut rng()).unwrap();
        assert_abs_diff_eq!(vec_norm(out.values()), 5.0, epsilon = 1e-12);
        // Direction of the raw mean, not of the update.
        assert_abs_diff_eq!(out.values()[1] / out.values()[0], 40.0 / 30.0, epsilon = 1e-12);
    }

    #[test]
    fn rfa_two_points_minimizes_the_flat_segment_objective() {
        let updates = updates_from_vectors(vec![vec![0.0, 0.0], vec![2.0, 2.0]]);
        let (out, _) = rfa_aggregate(&updates, None).unwrap();
        // Any point on the segment minimizes; compare objective values
        // against the midpoint.
        use crate::math::vec_distance;
        let objective = |v: &[f64]| vec_distance(v, &[0.0, 0.0]) + vec_distance(v, &[2.0, 2.0]);
        let midpoint_obj = objective(&[1.0, 1.0]);
        assert!((objective(out.values()) - midpoint_obj).abs() <= 1e-9);
    }

    #[test]
    fn crfl_noise_mean_is_near_zero() {
        let global = pv(vec![0.0; 1]);
        let updates = updates_from_vectors(vec![vec![0.0]]);
        let sigma = 1.0;
        let n = 10_000;
        let mut total = 0.0;
        let mut stream = RngStream::new(5, 7, Actor::Defense);
        for _ in 0..n {
            let (out, _) =
                crfl_aggregate(&global, &updates, 5.0, sigma, false, &mut stream).unwrap();
            total += out.values()[0];
        }
        let mean = total / n as f64;
        assert!(mean.abs() < 3.0 * sigma / 100.0, "noise mean {mean}");
    }

    #[test]
    fn rlr_threshold_rule() {
        let global = pv(vec![0.0]);
        // 5 clients all positive in the dimension.
        let all_pos = scalar_updates(&[1.0, 2.0, 0.5, 1.5, 1.0]);
        let (out, _) = rlr_aggregate(&global, &all_pos, 4, 1.0).unwrap();
        assert_abs_diff_eq!(out.values()[0], 1.2, epsilon = 1e-12);

        // 3 positive, 2 negative: |S| = 1 < 4, rate flips.
        let mixed = scalar_updates(&[1.0, 1.0, 1.0, -1.0, -1.0]);
        let (out, _) = rlr_aggregate(&global, &mixed, 4, 1.0).unwrap();
        assert_abs_diff_eq!(out.values()[0], -0.2, epsilon = 1e-12);
    }

    #[test]
    fn rlr_zero_threshold_is_plain_mean_step() {
        let global = pv(vec![1.0, -1.0]);
        let updates = updates_from_vectors(vec![vec![2.0, 0.0], vec![4.0, -4.0]]);
        let (out, _) = rlr_aggregate(&global, &updates, 0, 0.5).unwrap();
        // mean delta = (2.0, -1.0); out = global + 0.5 * mean.
        assert_eq!(out.values(), &[2.0, -1.5]);
    }

    #[test]
    fn bucket_size_one_k_zero_matches_fedavg() {
        let updates = updates_from_vectors(vec![vec![1.0, 5.0], vec![3.0, -1.0], vec![2.0, 2.0]]);
        let (bucketed, _) = bucket_aggregate(&updates, 1, 0, &mut rng()).unwrap();
        let (avg, _) = fedavg(&updates).unwrap();
        for (a, b) in bucketed.values().iter().zip(avg.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn bucket_whole_population_is_single_mean() {
        let updates = updates_from_vectors(vec![vec![1.0], vec![2.0], vec![6.0]]);
        let (out, _) = bucket_aggregate(&updates, 3, 0, &mut rng()).unwrap();
        assert_abs_diff_eq!(out.values()[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn bucket_matches_seeded_hand_trace() {
        let updates = updates_from_vectors(vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let mut stream_a = RngStream::new(9, 3, Actor::Defense);
        let (out, _) = bucket_aggregate(&updates, 2, 0, &mut stream_a).unwrap();
        // Trace the same shuffle independently.
        let mut order: Vec<usize> = (0..4).collect();
        let mut stream_b = RngStream::new(9, 3, Actor::Defense);
        order.shuffle(&mut stream_b);
        let values = [1.0, 2.0, 3.0, 4.0];
        let m1 = (values[order[0]] + values[order[1]]) / 2.0;
        let m2 = (values[order[2]] + values[order[3]]) / 2.0;
        assert_abs_diff_eq!(out.values()[0], (m1 + m2) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn median_defense_matches_math_kernel() {
        let updates = updates_from_vectors(vec![vec![1.0, 9.0], vec![5.0, 1.0], vec![3.0, 5.0]]);
        let (out, _) = median_aggregate(&updates).unwrap();
        assert_eq!(out.values(), &[3.0, 5.0]);
    }

    #[test]
    fn aggregators_are_permutation_invariant() {
        use rand::Rng as _;
        let mut gen = RngStream::setup(17, Actor::Defense);
        let vectors: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..3).map(|_| gen.random_range(-5.0..5.0)).collect())
            .collect();
        let updates = updates_from_vectors(vectors);
        let mut permuted = updates.clone();
        permuted.reverse();
        permuted.swap(0, 3);
        let global = pv(vec![0.1, -0.2, 0.3]);

        let resources = ServerResources {
            arch: &MlpArch::new(1, vec![], 1, 1).unwrap(),
            aux: None,
            server_data: None,
            local_steps: 0,
            local_lr: 0.1,
            batch_size: 8,
        };
        for spec in [
            DefenseSpec::FedAvg,
            DefenseSpec::TrimmedMean { trim_k: 2 },
            DefenseSpec::Median,
            DefenseSpec::NormBound { p: 1.0 },
            DefenseSpec::Crfl { rho: 1.0, sigma: 0.5, clip_raw_params: false },
            DefenseSpec::Krum { f: 2 },
            DefenseSpec::MultiKrum { f: 2, select: 3 },
            DefenseSpec::Bulyan { f: 1 },
            DefenseSpec::Rfa,
            DefenseSpec::Rlr { theta: 3, eta: 1.0 },
            DefenseSpec::Bucket { bucket_size: 2, trim_k: 1 },
        ] {
            let (a, audit_a) = aggregate(
                &spec,
                &global,
                &updates,
                &resources,
                &mut RngStream::new(3, 5, Actor::Defense),
            )
            .unwrap();
            let (b, audit_b) = aggregate(
                &spec,
                &global,
                &permuted,
                &resources,
                &mut RngStream::new(3, 5, Actor::Defense),
            )
            .unwrap();
            assert_eq!(a.values(), b.values(), "{spec:?} not permutation invariant");
            assert_eq!(audit_a, audit_b);
        }
    }

    #[test]
    fn coordinate_rules_stay_inside_the_envelope() {
        use rand::Rng as _;
        let mut gen = RngStream::setup(29, Actor::Defense);
        for _ in 0..20 {
            let vectors: Vec<Vec<f64>> = (0..7)
                .map(|_| (0..3).map(|_| gen.random_range(-5.0..5.0)).collect())
                .collect();
            let updates = updates_from_vectors(vectors.clone());
            let lo: Vec<f64> = (0..3)
                .map(|j| vectors.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min))
                .collect();
            let hi: Vec<f64> = (0..3)
                .map(|j| vectors.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max))
                .collect();

            let outputs = [
                trimmed_mean_aggregate(&updates, 2).unwrap().0,
                median_aggregate(&updates).unwrap().0,
                krum_select(&updates, 2, 2).unwrap().0,
                bulyan_aggregate(&updates, 1).unwrap().0,
                rfa_aggregate(&updates, None).unwrap().0,
            ];
            for out in &outputs {
                for j in 0..3 {
                    assert!(out.values()[j] >= lo[j] - 1e-9);
                    assert!(out.values()[j] <= hi[j] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn audit_partitions_submissions() {
        let updates = scalar_updates(&[0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0]);
        let (_, audit) = krum_select(&updates, 2, 3).unwrap();
        let mut all: Vec<u64> = audit.kept_ids.clone();
        all.extend(&audit.removed_ids);
        all.sort_unstable();
        assert_eq!(all, (0..7).collect::<Vec<u64>>());
    }

    mod model_based {
        use super::*;
        use crate::data::{make_blobs, Dataset};
        use crate::model::{MlpModel, ParamVector};

        fn arch() -> MlpArch {
            MlpArch::new(4, vec![6], 4, 3).unwrap()
        }

        fn setup() -> (MlpArch, ParamVector, Dataset) {
            let arch = arch();
            let mut rng = RngStream::setup(61, Actor::DataGen);
            let (train, _) = make_blobs(3, 4, 30, 5.0, 0.8, &mut rng).unwrap();
            let mut init_rng = RngStream::setup(61, Actor::Client(0));
            let global = MlpModel::init(arch.clone(), &mut init_rng);
            (arch, global.into_params(), train)
        }

        fn update(id: u64, pv: ParamVector) -> ClientUpdate {
            ClientUpdate {
                client_id: id,
                model: pv,
                is_malicious: false,
            }
        }

        #[test]
        fn fltrust_single_aligned_client_gets_full_step() {
            let (arch, global, root) = setup();
            // Train the root update once, then submit exactly that model.
            let global_model = MlpModel::from_params(arch.clone(), global.clone()).unwrap();
            let root_model = sgd_local_train(
                &global_model,
                &root,
                5,
                0.05,
                8,
                &mut RngStream::new(61, 1, Actor::Defense),
                LocalLoss::CrossEntropy,
            )
            .unwrap();
            let updates = vec![update(0, root_model.params().clone())];
            let (out, audit) = fltrust_aggregate(
                &global,
                &updates,
                &root,
                &arch,
                5,
                0.05,
                8,
                &mut RngStream::new(61, 1, Actor::Defense),
            )
            .unwrap();
            assert_eq!(audit.kept_ids, vec![0]);
            for (a, b) in out.values().iter().zip(root_model.params().values()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }

        #[test]
        fn fltrust_opposed_client_is_excluded() {
            let (arch, global, root) = setup();
            let global_model = MlpModel::from_params(arch.clone(), global.clone()).unwrap();
            let root_model = sgd_local_train(
                &global_model,
                &root,
                5,
                0.05,
                8,
                &mut RngStream::new(61, 1, Actor::Defense),
                LocalLoss::CrossEntropy,
            )
            .unwrap();
            // Submit the reflection of the root model through the global.
            let opposed: Vec<f64> = global
                .values()
                .iter()
                .zip(root_model.params().values())
                .map(|(g, r)| 2.0 * g - r)
                .collect();
            let updates = vec![update(0, global.with_values(opposed).unwrap())];
            let (out, audit) = fltrust_aggregate(
                &global,
                &updates,
                &root,
                &arch,
                5,
                0.05,
                8,
                &mut RngStream::new(61, 1, Actor::Defense),
            )
            .unwrap();
            assert_eq!(audit.removed_ids, vec![0]);
            assert_eq!(out.values(), global.values());
        }

        #[test]
        fn fltrust_mixed_set_matches_weighted_formula() {
            let (arch, global, root) = setup();
            let global_model = MlpModel::from_params(arch.clone(), global.clone()).unwrap();
            let mut clients = Vec::new();
            for c in 0..3u64 {
                let trained = sgd_local_train(
                    &global_model,
                    &root,
                    3 + c as usize,
                    0.05,
                    8,
                    &mut RngStream::new(62, 1, Actor::Client(c)),
                    LocalLoss::CrossEntropy,
                )
                .unwrap();
                clients.push(update(c, trained.into_params()));
            }
            let (out, audit) = fltrust_aggregate(
                &global,
                &clients,
                &root,
                &arch,
                5,
                0.05,
                8,
                &mut RngStream::new(61, 1, Actor::Defense),
            )
            .unwrap();
            // Oracle: recompute the weighted combination by hand from the
            // audited trust scores and the root update norm.
            let root_model = sgd_local_train(
                &global_model,
                &root,
                5,
                0.05,
                8,
                &mut RngStream::new(61, 1, Actor::Defense),
                LocalLoss::CrossEntropy,
            )
            .unwrap();
            let root_delta = vec_sub(root_model.params().values(), global.values());
            let root_norm = vec_norm(&root_delta);
            let ts_sum: f64 = audit.scores.iter().map(|s| s.1).sum();
            let mut want = global.values().to_vec();
            for u in &clients {
                let ts = audit.scores.iter().find(|s| s.0 == u.client_id).unwrap().1;
                let delta = vec_sub(u.model.values(), global.values());
                let norm = vec_norm(&delta);
                if ts > 0.0 && norm > 0.0 {
                    vec_axpy(&mut want, ts * (root_norm / norm) / ts_sum, &delta);
                }
            }
            for (a, b) in out.values().iter().zip(&want) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }

        #[test]
        fn roni_identical_updates_fall_back_to_tie_rule() {
            let (arch, global, validation) = setup();
            let updates: Vec<ClientUpdate> =
                (0..3).map(|c| update(c, global.clone())).collect();
            let (out, audit) = roni_aggregate(&updates, &validation, &arch, 1).unwrap();
            assert_eq!(audit.removed_ids, vec![0]);
            assert_eq!(out.values(), global.values());
        }

        #[test]
        fn roni_removes_the_adversarial_vector() {
            let (arch, global, validation) = setup();
            // Two honest models, one trained model negated (flips logits).
            let global_model = MlpModel::from_params(arch.clone(), global.clone()).unwrap();
            let trained = sgd_local_train(
                &global_model,
                &validation,
                40,
                0.05,
                8,
                &mut RngStream::new(63, 1, Actor::Client(0)),
                LocalLoss::CrossEntropy,
            )
            .unwrap();
            let adversarial: Vec<f64> = trained.params().values().iter().map(|v| -3.0 * v).collect();
            let updates = vec![
                update(0, trained.params().clone()),
                update(1, trained.params().clone()),
                update(2, global.with_values(adversarial).unwrap()),
            ];
            let (_, audit) = roni_aggregate(&updates, &validation, &arch, 1).unwrap();
            assert_eq!(audit.removed_ids, vec![2]);
        }

        #[test]
        fn roni_remove_zero_equals_fedavg() {
            let (arch, global, validation) = setup();
            use rand::Rng as _;
            let mut gen = RngStream::setup(64, Actor::Defense);
            let updates: Vec<ClientUpdate> = (0..4)
                .map(|c| {
                    let values: Vec<f64> = global
                        .values()
                        .iter()
                        .map(|v| v + gen.random_range(-0.1..0.1))
                        .collect();
                    update(c, global.with_values(values).unwrap())
                })
                .collect();
            let (roni_out, _) = roni_aggregate(&updates, &validation, &arch, 0).unwrap();
            let (avg_out, _) = fedavg(&updates).unwrap();
            assert_eq!(roni_out.values(), avg_out.values());
        }
    }
}

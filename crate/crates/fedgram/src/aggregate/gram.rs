//! Embedding Gram-matrix scoring and the filtering aggregator built on it.
//!
//! For each submitted model the server feeds the auxiliary samples through
//! the representation layers, row-normalizes the resulting embedding matrix,
//! multiplies it by its transpose and takes the Frobenius norm. Diagonal
//! entries are pinned at 1 by the normalization, so the score lives in
//! `[sqrt(K_cov), K_cov]`: orthogonal class embeddings score the minimum,
//! collinear ones the maximum. The aggregator drops the highest-scoring
//! fraction and averages (or trim-means) the rest.

use crate::aggregate::{mean_of, AggregationAudit, ClientUpdate};
use crate::data::AuxiliaryDataset;
use crate::error::{Error, Result};
use crate::math::{coordinate_trimmed_mean, Matrix};
use crate::model::{MlpArch, MlpModel, ParamVector};

/// One client's suspicion score for a round.
#[derive(Debug, Clone, PartialEq)]
pub struct GramScore {
    pub client_id: u64,
    pub score: f64,
    /// A zero embedding row made the Gram matrix undefined; the score was
    /// pinned to the upper bound `K_cov`.
    pub degenerate: bool,
}

/// What follows the filtering stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThenRule {
    Avg,
    TrimmedMean,
}

/// Score one model against the auxiliary dataset: Frobenius norm of the Gram
/// matrix of its row-normalized auxiliary embeddings. A zero embedding row is
/// treated as maximally suspicious: the score pins to `K_cov`.
pub fn gram_score(model: &MlpModel, aux: &AuxiliaryDataset) -> Result<(f64, bool)> {
    if aux.entries.is_empty() {
        return Err(Error::EmptyInput("auxiliary dataset"));
    }
    let rows: Vec<Vec<f64>> = aux
        .entries
        .values()
        .map(|x| model.forward_embed(x))
        .collect::<Result<_>>()?;
    let k_cov = rows.len() as f64;
    let matrix = Matrix::from_rows(&rows)?;
    match matrix.normalize_rows() {
        Ok(normalized) => Ok((normalized.mul_transpose().frobenius_norm()?, false)),
        Err(Error::DegenerateEmbedding { .. }) => Ok((k_cov, true)),
        Err(e) => Err(e),
    }
}

/// Rank scores descending and split off the `r = ceil(c * n)` highest; ties
/// break toward removing the lower client id first.
pub fn rank_and_filter(scores: &[(u64, f64)], c: f64) -> Result<(Vec<u64>, Vec<u64>)> {
    let n = scores.len();
    if n == 0 {
        return Err(Error::EmptyInput("scores"));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "filter fraction {c} not in (0, 1)"
        )));
    }
    let remove = (c * n as f64).ceil() as usize;
    if remove >= n {
        return Err(Error::FilterRemovesEverything { remove, n });
    }
    let mut order: Vec<&(u64, f64)> = scores.iter().collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("non-finite score").then(a.0.cmp(&b.0)));
    let mut removed: Vec<u64> = order[..remove].iter().map(|s| s.0).collect();
    let mut kept: Vec<u64> = order[remove..].iter().map(|s| s.0).collect();
    removed.sort_unstable();
    kept.sort_unstable();
    Ok((removed, kept))
}

/// Descending-rank position of each score among all, divided by the count;
/// 0 marks the largest score. Ties use the same ordering as the filter.
pub fn rank_fractions(scores: &[GramScore]) -> Vec<(u64, f64)> {
    let n = scores.len();
    let mut order: Vec<&GramScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("non-finite score")
            .then(a.client_id.cmp(&b.client_id))
    });
    order
        .iter()
        .enumerate()
        .map(|(rank, s)| (s.client_id, rank as f64 / n as f64))
        .collect()
}

/// Gram-matrix norm filtering: score every submission, remove the highest
/// `ceil(c * n)`, then aggregate the survivors by plain mean or by
/// coordinate-wise trimmed mean.
pub fn fedgram_aggregate(
    arch: &MlpArch,
    updates: &[ClientUpdate],
    aux: &AuxiliaryDataset,
    c: f64,
    then: ThenRule,
) -> Result<(ParamVector, AggregationAudit, Vec<GramScore>)> {
    if updates.is_empty() {
        return Err(Error::EmptyInput("updates"));
    }
    let mut scores = Vec::with_capacity(updates.len());
    for update in updates {
        let model = MlpModel::from_params(arch.clone(), update.model.clone())?;
        let (score, degenerate) = gram_score(&model, aux)?;
        scores.push(GramScore {
            client_id: update.client_id,
            score,
            degenerate,
        });
    }
    let pairs: Vec<(u64, f64)> = scores.iter().map(|s| (s.client_id, s.score)).collect();
    let (removed, kept) = rank_and_filter(&pairs, c)?;

    let survivors: Vec<&ClientUpdate> = updates
        .iter()
        .filter(|u| kept.binary_search(&u.client_id).is_ok())
        .collect();
    let vectors: Vec<Vec<f64>> = survivors
        .iter()
        .map(|u| u.model.values().to_vec())
        .collect();
    let mut audit = AggregationAudit {
        kept_ids: kept,
        removed_ids: removed,
        scores: pairs,
        notes: Vec::new(),
    };
    for s in scores.iter().filter(|s| s.degenerate) {
        audit
            .notes
            .push(format!("client {}: degenerate embedding, score pinned", s.client_id));
    }
    let aggregated = match then {
        ThenRule::Avg => mean_of(&vectors)?,
        ThenRule::TrimmedMean => {
            let n_surv = vectors.len();
            let mut k = ((c * n_surv as f64).ceil() as usize) / 2;
            if 2 * k >= n_surv {
                k = (n_surv - 1) / 2;
                audit
                    .notes
                    .push(format!("trim count clamped to {k} for {n_surv} survivors"));
            }
            coordinate_trimmed_mean(&vectors, k)?
        }
    };
    let vector = updates[0].model.with_values(aggregated)?;
    Ok((vector, audit, scores))
}

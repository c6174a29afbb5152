//! Distance-based selection rules: Krum, Multi-Krum and Bulyan.

use crate::aggregate::{mean_of, AggregationAudit, ClientUpdate};
use crate::error::{Error, Result};
use crate::math::vec_distance;
use crate::model::ParamVector;

/// Krum scores: for each update, the sum of squared distances to its
/// `n - f - 2` nearest neighbors. When the neighbor count is not positive
/// every score is zero and ties decide.
fn krum_scores(vectors: &[Vec<f64>], f: usize) -> Vec<f64> {
    let n = vectors.len();
    let neighbors = n.saturating_sub(f + 2);
    if neighbors == 0 {
        return vec![0.0; n];
    }
    let mut d2 = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = vec_distance(&vectors[i], &vectors[j]);
            d2[i][j] = d * d;
            d2[j][i] = d * d;
        }
    }
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d2[i][j]).collect();
            row.sort_by(|a, b| a.partial_cmp(b).expect("non-finite distance"));
            row[..neighbors].iter().sum()
        })
        .collect()
}

/// Select the `select` lowest-scoring updates (ties to the lower client id)
/// and return their mean.
pub fn krum_select(
    updates: &[ClientUpdate],
    f: usize,
    select: usize,
) -> Result<(ParamVector, AggregationAudit)> {
    let n = updates.len();
    if n < f + 3 {
        return Err(Error::TooFewUpdates { needed: f + 3, got: n });
    }
    if select == 0 || select > n {
        return Err(Error::InvalidArgument(format!(
            "selection count {select} not in 1..={n}"
        )));
    }
    let vectors: Vec<Vec<f64>> = updates.iter().map(|u| u.model.values().to_vec()).collect();
    let scores = krum_scores(&vectors, f);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("non-finite score")
            .then(updates[a].client_id.cmp(&updates[b].client_id))
    });
    let selected: Vec<usize> = order[..select].to_vec();
    let mut kept: Vec<u64> = selected.iter().map(|&i| updates[i].client_id).collect();
    kept.sort_unstable();
    let mut removed: Vec<u64> = order[select..].iter().map(|&i| updates[i].client_id).collect();
    removed.sort_unstable();

    let chosen: Vec<Vec<f64>> = updates
        .iter()
        .filter(|u| kept.binary_search(&u.client_id).is_ok())
        .map(|u| u.model.values().to_vec())
        .collect();
    let mean = mean_of(&chosen)?;
    let audit = AggregationAudit {
        kept_ids: kept,
        removed_ids: removed,
        scores: updates
            .iter()
            .enumerate()
            .map(|(i, u)| (u.client_id, scores[i]))
            .collect(),
        notes: Vec::new(),
    };
    Ok((updates[0].model.with_values(mean)?, audit))
}

/// Bulyan: iterated Krum selection of `theta = n - 2f` updates, then a
/// per-coordinate average of the `beta = theta - 2f` values closest to the
/// coordinate median of the selection.
pub fn bulyan_aggregate(
    updates: &[ClientUpdate],
    f: usize,
) -> Result<(ParamVector, AggregationAudit)> {
    let n = updates.len();
    if n < 4 * f + 3 {
        return Err(Error::BulyanInfeasible { n, needed: 4 * f + 3 });
    }
    let theta = n - 2 * f;
    let beta = theta - 2 * f;

    let mut pool: Vec<usize> = (0..n).collect();
    let mut selected: Vec<usize> = Vec::with_capacity(theta);
    while selected.len() < theta {
        let vectors: Vec<Vec<f64>> = pool
            .iter()
            .map(|&i| updates[i].model.values().to_vec())
            .collect();
        let scores = krum_scores(&vectors, f);
        let pick_pos = (0..pool.len())
            .min_by(|&a, &b| {
                scores[a]
                    .partial_cmp(&scores[b])
                    .expect("non-finite score")
                    .then(updates[pool[a]].client_id.cmp(&updates[pool[b]].client_id))
            })
            .expect("pool nonempty");
        selected.push(pool.remove(pick_pos));
    }

    let dim = updates[0].model.len();
    let mut out = vec![0.0; dim];
    let mut column: Vec<(f64, u64)> = Vec::with_capacity(theta);
    for j in 0..dim {
        column.clear();
        for &i in &selected {
            column.push((updates[i].model.values()[j], updates[i].client_id));
        }
        let mut values: Vec<f64> = column.iter().map(|c| c.0).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value"));
        let median = if theta % 2 == 1 {
            values[theta / 2]
        } else {
            0.5 * (values[theta / 2 - 1] + values[theta / 2])
        };
        // Closest to the median first; ties to the lower client id.
        column.sort_by(|a, b| {
            (a.0 - median)
                .abs()
                .partial_cmp(&(b.0 - median).abs())
                .expect("non-finite value")
                .then(a.1.cmp(&b.1))
        });
        out[j] = column[..beta].iter().map(|c| c.0).sum::<f64>() / beta as f64;
    }

    let mut kept: Vec<u64> = selected.iter().map(|&i| updates[i].client_id).collect();
    kept.sort_unstable();
    let mut removed: Vec<u64> = (0..n)
        .filter(|i| !selected.contains(i))
        .map(|i| updates[i].client_id)
        .collect();
    removed.sort_unstable();
    let audit = AggregationAudit {
        kept_ids: kept,
        removed_ids: removed,
        scores: Vec::new(),
        notes: Vec::new(),
    };
    Ok((updates[0].model.with_values(out)?, audit))
}

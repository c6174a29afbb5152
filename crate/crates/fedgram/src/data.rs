//! Dataset synthesis and ingestion, Dirichlet non-IID partitioning,
//! label-flip poisoning, and server-held auxiliary data.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_distr::{Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::math::RngStream;

/// Labeled samples: features of fixed dimension, labels below `num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<(Vec<f64>, usize)>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

/// One client's local data.
pub type ClientDataset = Dataset;

impl Dataset {
    pub fn new(samples: Vec<(Vec<f64>, usize)>, num_classes: usize, feature_dim: usize) -> Result<Self> {
        for (i, (x, y)) in samples.iter().enumerate() {
            if x.len() != feature_dim {
                return Err(Error::CsvRow {
                    row: i + 1,
                    reason: format!("feature length {} != {}", x.len(), feature_dim),
                });
            }
            if *y >= num_classes {
                return Err(Error::CsvRow {
                    row: i + 1,
                    reason: format!("label {} >= num_classes {}", y, num_classes),
                });
            }
        }
        Ok(Self {
            samples,
            num_classes,
            feature_dim,
        })
    }

    pub fn empty(num_classes: usize, feature_dim: usize) -> Self {
        Self {
            samples: Vec::new(),
            num_classes,
            feature_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for (_, y) in &self.samples {
            counts[*y] += 1;
        }
        counts
    }

    /// Natural-log entropy of the label distribution; 0 for empty data.
    pub fn label_entropy(&self) -> f64 {
        let n = self.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        self.class_counts()
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    }
}

/// Server-held probe set: at most one feature vector per class.
#[derive(Debug, Clone)]
pub struct AuxiliaryDataset {
    /// Ordered by class id, which fixes the embedding-matrix row order.
    pub entries: BTreeMap<usize, Vec<f64>>,
    pub num_classes: usize,
}

impl AuxiliaryDataset {
    /// Fraction of classes present.
    pub fn coverage(&self) -> f64 {
        self.entries.len() as f64 / self.num_classes as f64
    }

    /// Number of classes present.
    pub fn classes_covered(&self) -> usize {
        self.entries.len()
    }
}

/// Dirichlet partitioning knobs.
#[derive(Debug, Clone, Copy)]
pub struct PartitionConfig {
    pub num_clients: usize,
    pub concentration: f64,
    pub min_samples_per_client: usize,
}

/// Gaussian blobs around class means drawn uniformly on the radius-`radius`
/// sphere, split 80/20 into train/test stratified per class.
pub fn make_blobs(
    num_classes: usize,
    feature_dim: usize,
    n_per_class: usize,
    radius: f64,
    noise_sigma: f64,
    rng: &mut RngStream,
) -> Result<(Dataset, Dataset)> {
    if num_classes == 0 || feature_dim == 0 || n_per_class == 0 {
        return Err(Error::InvalidArgument("counts must be >= 1".into()));
    }
    if !(radius > 0.0) || !(noise_sigma > 0.0) {
        return Err(Error::InvalidArgument(
            "radius and noise_sigma must be > 0".into(),
        ));
    }
    let mut means = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let mut dir: Vec<f64> = (0..feature_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = crate::math::vec_norm(&dir).max(1e-12);
        for v in &mut dir {
            *v *= radius / norm;
        }
        means.push(dir);
    }
    let n_train = n_per_class * 4 / 5;
    let mut train = Vec::with_capacity(num_classes * n_train);
    let mut test = Vec::with_capacity(num_classes * (n_per_class - n_train));
    for (class, mean) in means.iter().enumerate() {
        for i in 0..n_per_class {
            let x: Vec<f64> = mean
                .iter()
                .map(|m| m + noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            if i < n_train {
                train.push((x, class));
            } else {
                test.push((x, class));
            }
        }
    }
    Ok((
        Dataset::new(train, num_classes, feature_dim)?,
        Dataset::new(test, num_classes, feature_dim)?,
    ))
}

/// Parse a headerless CSV of `feature_dim` floats followed by an integer
/// label. Malformed rows are rejected with their 1-based row number.
pub fn load_csv(path: &Path, num_classes: usize, feature_dim: usize) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let row = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != feature_dim + 1 {
            return Err(Error::CsvRow {
                row,
                reason: format!("expected {} columns, got {}", feature_dim + 1, fields.len()),
            });
        }
        let mut x = Vec::with_capacity(feature_dim);
        for f in &fields[..feature_dim] {
            let v: f64 = f.trim().parse().map_err(|_| Error::CsvRow {
                row,
                reason: format!("bad float {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::CsvRow {
                    row,
                    reason: format!("non-finite feature {v}"),
                });
            }
            x.push(v);
        }
        let label: usize = fields[feature_dim].trim().parse().map_err(|_| Error::CsvRow {
            row,
            reason: format!("bad label {:?}", fields[feature_dim]),
        })?;
        if label >= num_classes {
            return Err(Error::CsvRow {
                row,
                reason: format!("label {label} >= num_classes {num_classes}"),
            });
        }
        samples.push((x, label));
    }
    if samples.is_empty() {
        return Err(Error::NoSamples(path.display().to_string()));
    }
    Dataset::new(samples, num_classes, feature_dim)
}

/// Per class, draw proportions from `Dir(beta)` and assign that class's
/// samples multinomially across clients. Clients below the floor then receive
/// donated samples from the currently largest client until the floor holds.
/// The union of client datasets equals the input exactly.
pub fn dirichlet_partition(
    train: &Dataset,
    cfg: &PartitionConfig,
    rng: &mut RngStream,
) -> Result<Vec<ClientDataset>> {
    if train.is_empty() {
        return Err(Error::NoSamples("training set".into()));
    }
    if cfg.num_clients == 0 || !(cfg.concentration > 0.0) {
        return Err(Error::InvalidArgument(
            "num_clients >= 1 and concentration > 0 required".into(),
        ));
    }
    if cfg.num_clients * cfg.min_samples_per_client > train.len() {
        return Err(Error::InfeasibleFloor {
            clients: cfg.num_clients,
            floor: cfg.min_samples_per_client,
            available: train.len(),
        });
    }
    let n_clients = cfg.num_clients;
    let mut assignments: Vec<Vec<(Vec<f64>, usize)>> = vec![Vec::new(); n_clients];

    let mut by_class: Vec<Vec<&(Vec<f64>, usize)>> = vec![Vec::new(); train.num_classes];
    for sample in &train.samples {
        by_class[sample.1].push(sample);
    }

    let gamma = Gamma::new(cfg.concentration, 1.0)
        .map_err(|e| Error::InvalidArgument(format!("gamma draw: {e}")))?;
    for class_samples in by_class.iter().filter(|c| !c.is_empty()) {
        let proportions: Vec<f64> = if n_clients == 1 {
            vec![1.0]
        } else {
            // Dirichlet via normalized gamma draws.
            let mut draws: Vec<f64> = (0..n_clients).map(|_| gamma.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            if total <= 0.0 {
                // All-zero underflow at tiny beta: fall back to a single owner.
                let owner = rng.random_range(0..n_clients);
                draws = vec![0.0; n_clients];
                draws[owner] = 1.0;
            }
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|d| d / total).collect()
        };
        let index = WeightedIndex::new(&proportions)
            .map_err(|e| Error::InvalidArgument(format!("weighted draw: {e}")))?;
        for sample in class_samples {
            assignments[index.sample(rng)].push((*sample).clone());
        }
    }

    // Donate from the largest client until every client meets the floor.
    let floor = cfg.min_samples_per_client;
    loop {
        let recipient = (0..n_clients)
            .filter(|&i| assignments[i].len() < floor)
            .min_by_key(|&i| (assignments[i].len(), i));
        let Some(recipient) = recipient else { break };
        let donor = (0..n_clients)
            .max_by_key(|&i| (assignments[i].len(), usize::MAX - i))
            .expect("at least one client");
        let sample = assignments[donor].pop().expect("donor nonempty");
        assignments[recipient].push(sample);
    }

    assignments
        .into_iter()
        .map(|samples| Dataset::new(samples, train.num_classes, train.feature_dim))
        .collect()
}

/// Pick `ceil(coverage * K)` distinct classes uniformly and one uniform
/// sample per picked class; those samples are removed from the returned
/// remainder.
pub fn build_auxiliary(
    train: &Dataset,
    coverage: f64,
    rng: &mut RngStream,
) -> Result<(AuxiliaryDataset, Dataset)> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "coverage {coverage} not in (0, 1]"
        )));
    }
    let k = train.num_classes;
    let n_selected = ((coverage * k as f64).ceil() as usize).clamp(1, k);
    let mut classes: Vec<usize> = (0..k).collect();
    classes.shuffle(rng);
    classes.truncate(n_selected);
    classes.sort_unstable();

    let mut entries = BTreeMap::new();
    let mut removed_indices = Vec::with_capacity(n_selected);
    for class in classes {
        let candidates: Vec<usize> = train
            .samples
            .iter()
            .enumerate()
            .filter(|(_, (_, y))| *y == class)
            .map(|(i, _)| i)
            .collect();
        if candidates.is_empty() {
            return Err(Error::NoSamples(format!("class {class}")));
        }
        let pick = candidates[rng.random_range(0..candidates.len())];
        entries.insert(class, train.samples[pick].0.clone());
        removed_indices.push(pick);
    }
    removed_indices.sort_unstable();
    let remaining: Vec<(Vec<f64>, usize)> = train
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| removed_indices.binary_search(i).is_err())
        .map(|(_, s)| s.clone())
        .collect();
    Ok((
        AuxiliaryDataset {
            entries,
            num_classes: k,
        },
        Dataset::new(remaining, k, train.feature_dim)?,
    ))
}

/// Carve a class-balanced server pool of `per_class` samples per class
/// (uniformly chosen) out of `train`; returns `(pool, remaining)`.
pub fn split_server_pool(
    train: &Dataset,
    per_class: usize,
    rng: &mut RngStream,
) -> Result<(Dataset, Dataset)> {
    let mut removed_indices = Vec::new();
    let mut pool = Vec::new();
    for class in 0..train.num_classes {
        let mut candidates: Vec<usize> = train
            .samples
            .iter()
            .enumerate()
            .filter(|(_, (_, y))| *y == class)
            .map(|(i, _)| i)
            .collect();
        if candidates.len() < per_class {
            return Err(Error::NoSamples(format!(
                "class {class}: need {per_class} for the server pool, have {}",
                candidates.len()
            )));
        }
        candidates.shuffle(rng);
        for &idx in &candidates[..per_class] {
            pool.push(train.samples[idx].clone());
            removed_indices.push(idx);
        }
    }
    removed_indices.sort_unstable();
    let remaining: Vec<(Vec<f64>, usize)> = train
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| removed_indices.binary_search(i).is_err())
        .map(|(_, s)| s.clone())
        .collect();
    Ok((
        Dataset::new(pool, train.num_classes, train.feature_dim)?,
        Dataset::new(remaining, train.num_classes, train.feature_dim)?,
    ))
}

/// Replace every label `l` by `K - l - 1`; features untouched. Applying it
/// twice restores the original labels.
pub fn flip_labels_static(data: &ClientDataset) -> ClientDataset {
    let k = data.num_classes;
    Dataset {
        samples: data
            .samples
            .iter()
            .map(|(x, y)| (x.clone(), k - y - 1))
            .collect(),
        num_classes: k,
        feature_dim: data.feature_dim,
    }
}

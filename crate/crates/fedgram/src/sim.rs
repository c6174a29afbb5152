//! The round engine: client sampling, benign and malicious local work,
//! aggregation, evaluation, and detection metrics.
//!
//! Determinism: every consumer of randomness owns a stream keyed by
//! `(seed, round, actor)`, client work is merged in client-id order, and
//! rounds advance strictly sequentially. Parallel and sequential execution
//! produce identical results.

use rayon::prelude::*;

use crate::aggregate::{
    self, rank_fractions, AggregationAudit, ClientUpdate, GramScore, ServerResources,
};
use crate::attack::{
    adaptive_submit, dynamic_flip, fang_craft, fang_directions, label_flip, lie_craft,
    minmax_minsum_craft, AttackSpec, BenignView, DeviationVariant,
};
use crate::config::{AttackerKnowledge, DatasetConfig, ExperimentConfig};
use crate::data::{
    build_auxiliary, dirichlet_partition, load_csv, make_blobs, split_server_pool,
    AuxiliaryDataset, ClientDataset, Dataset, PartitionConfig,
};
use crate::error::{Error, Result};
use crate::math::{Actor, RngStream};
use crate::model::{
    evaluate_accuracy, sgd_local_train, LocalLoss, MlpArch, MlpModel, ParamVector,
};

/// Per-round metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: u32,
    pub test_accuracy: f64,
    /// Running maximum of `test_accuracy`.
    pub best_accuracy: f64,
    pub sampled_ids: Vec<u64>,
    pub malicious_sampled_ids: Vec<u64>,
    pub removed_ids: Vec<u64>,
    pub detect_precision: f64,
    pub detect_recall: f64,
    /// Per-client Gram scores, when the defense computes them.
    pub gram_scores: Option<Vec<(u64, f64)>>,
    /// Descending-rank fraction of each sampled malicious client's score,
    /// when Gram scores exist; 0 marks the largest score.
    pub malicious_rank_fractions: Vec<f64>,
}

impl RoundRecord {
    /// Mean malicious rank fraction, when defined.
    pub fn mean_malicious_rank_fraction(&self) -> Option<f64> {
        if self.malicious_rank_fractions.is_empty() {
            None
        } else {
            Some(
                self.malicious_rank_fractions.iter().sum::<f64>()
                    / self.malicious_rank_fractions.len() as f64,
            )
        }
    }
}

/// Everything `run_experiment` produces.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<RoundRecord>,
    pub final_model: ParamVector,
    pub arch: MlpArch,
}

impl ExperimentResult {
    pub fn best_accuracy(&self) -> f64 {
        self.records.last().map(|r| r.best_accuracy).unwrap_or(0.0)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map(|r| r.test_accuracy).unwrap_or(0.0)
    }
}

/// Materialized experiment state before round 1.
pub struct Prepared {
    pub arch: MlpArch,
    pub global: MlpModel,
    pub clients: Vec<ClientDataset>,
    pub malicious_ids: Vec<u64>,
    pub aux: AuxiliaryDataset,
    pub server_pool: Option<Dataset>,
    pub test: Dataset,
    /// Fixed random baseline the MPAF attack pulls toward.
    pub mpaf_baseline: ParamVector,
}

impl Prepared {
    pub fn is_malicious(&self, id: u64) -> bool {
        self.malicious_ids.binary_search(&id).is_ok()
    }
}

/// Build datasets, partition, auxiliary set, malicious identities and the
/// initial global model for a configuration.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (train, test) = match &cfg.dataset {
        DatasetConfig::Blobs {
            num_classes,
            feature_dim,
            samples_per_class,
            radius,
            noise_sigma,
        } => make_blobs(
            *num_classes,
            *feature_dim,
            *samples_per_class,
            *radius,
            *noise_sigma,
            &mut RngStream::setup(cfg.seed, Actor::DataGen),
        )?,
        DatasetConfig::Csv {
            path,
            num_classes,
            feature_dim,
        } => {
            let full = load_csv(std::path::Path::new(path), *num_classes, *feature_dim)?;
            // Deterministic 80/20 split by position.
            let n_train = full.len() * 4 / 5;
            let train =
                Dataset::new(full.samples[..n_train].to_vec(), *num_classes, *feature_dim)?;
            let test =
                Dataset::new(full.samples[n_train..].to_vec(), *num_classes, *feature_dim)?;
            if test.is_empty() {
                return Err(Error::NoSamples("csv test split".into()));
            }
            (train, test)
        }
    };

    let (aux, train) = build_auxiliary(
        &train,
        cfg.auxiliary.coverage,
        &mut RngStream::setup(cfg.seed, Actor::Auxiliary),
    )?;
    let (server_pool, train) = if cfg.server_pool.per_class > 0 {
        let (pool, rest) = split_server_pool(
            &train,
            cfg.server_pool.per_class,
            &mut RngStream::setup(cfg.seed, Actor::ServerPool),
        )?;
        (Some(pool), rest)
    } else {
        (None, train)
    };

    let partition_cfg = PartitionConfig {
        num_clients: cfg.num_clients,
        concentration: cfg.partition.beta,
        min_samples_per_client: cfg.partition.min_samples_per_client,
    };
    let mut clients = dirichlet_partition(
        &train,
        &partition_cfg,
        &mut RngStream::setup(cfg.seed, Actor::Partition),
    )?;

    // Malicious identities: the first ceil(fraction * N) ids of a seeded
    // shuffle, fixed for the whole experiment.
    let mut ids: Vec<u64> = (0..cfg.num_clients as u64).collect();
    {
        use rand::seq::SliceRandom;
        ids.shuffle(&mut RngStream::setup(cfg.seed, Actor::MaliciousAssignment));
    }
    let mut malicious_ids: Vec<u64> = ids[..cfg.malicious_count().min(cfg.num_clients)].to_vec();
    malicious_ids.sort_unstable();

    // Data-poisoning attacks corrupt the malicious datasets up front; the
    // poisoned clients then train through the ordinary benign code path.
    let arch = MlpArch::new(
        cfg.dataset.feature_dim(),
        cfg.model.hidden_dims.clone(),
        cfg.model.embedding_dim,
        cfg.dataset.num_classes(),
    )?;
    match &cfg.attack {
        AttackSpec::LabelFlip => {
            for &id in &malicious_ids {
                clients[id as usize] = label_flip(&clients[id as usize]);
            }
        }
        AttackSpec::DynamicLabelFlip { surrogate_epochs } => {
            for &id in &malicious_ids {
                clients[id as usize] = dynamic_flip(
                    &clients[id as usize],
                    &arch,
                    *surrogate_epochs,
                    cfg.local_lr,
                    cfg.batch_size,
                    &mut RngStream::setup(cfg.seed, Actor::Client(id)),
                )?;
            }
        }
        _ => {}
    }

    let global = MlpModel::init(
        arch.clone(),
        &mut RngStream::setup(cfg.seed, Actor::GlobalInit),
    );
    let mpaf_baseline = MlpModel::init(
        arch.clone(),
        &mut RngStream::setup(cfg.seed.wrapping_add(1), Actor::GlobalInit),
    )
    .into_params();

    Ok(Prepared {
        arch,
        global,
        clients,
        malicious_ids,
        aux,
        server_pool,
        test,
        mpaf_baseline,
    })
}

/// Detection quality of one round's removals. Precision is 1 when nothing
/// was removed; recall is 1 when no malicious client was sampled.
pub fn detection_metrics(removed_ids: &[u64], updates: &[ClientUpdate]) -> (f64, f64) {
    let malicious: Vec<u64> = updates
        .iter()
        .filter(|u| u.is_malicious)
        .map(|u| u.client_id)
        .collect();
    let true_positives = removed_ids
        .iter()
        .filter(|id| malicious.contains(id))
        .count() as f64;
    let precision = if removed_ids.is_empty() {
        1.0
    } else {
        true_positives / removed_ids.len() as f64
    };
    let recall = if malicious.is_empty() {
        1.0
    } else {
        true_positives / malicious.len() as f64
    };
    (precision, recall)
}

/// Descending-rank fraction of each malicious client's score among all
/// sampled scores (0 = largest).
pub fn norm_rank_of_malicious(scores: &[(u64, f64)], malicious_ids: &[u64]) -> Vec<f64> {
    let gram: Vec<GramScore> = scores
        .iter()
        .map(|&(client_id, score)| GramScore {
            client_id,
            score,
            degenerate: false,
        })
        .collect();
    let fractions = rank_fractions(&gram);
    let mut out: Vec<(u64, f64)> = fractions
        .into_iter()
        .filter(|(id, _)| malicious_ids.contains(id))
        .collect();
    out.sort_by_key(|&(id, _)| id);
    out.into_iter().map(|(_, f)| f).collect()
}

/// Accuracy of a model on a dataset (argmax ties to the lowest class).
pub fn evaluate(model: &MlpModel, test: &Dataset) -> Result<f64> {
    evaluate_accuracy(model, test)
}

enum LocalOutcome {
    /// A trained local model to submit (benign, data-poisoned, or adaptive).
    Submission(ParamVector),
    /// Honest run used only as the coalition's view under restricted
    /// knowledge; the submission is crafted later.
    CoalitionProbe(ParamVector),
    /// Crafted centrally after benign submissions are known.
    PendingCraft,
}

/// Run the full experiment, invoking `observer` after every round.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    mut observer: impl FnMut(&RoundRecord),
) -> Result<ExperimentResult> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(Error::Config(violations.join("; ")));
    }
    let prepared = prepare(cfg)?;
    let mut global = prepared.global.clone();
    let n_sampled = cfg.sampled_per_round();
    let total_malicious = prepared.malicious_ids.len();

    let mut records = Vec::with_capacity(cfg.rounds as usize);
    let mut best = 0.0_f64;
    for round in 1..=cfg.rounds {
        let record = run_round(cfg, &prepared, &mut global, round, n_sampled, total_malicious, best)
            .map_err(|e| e.at_round(round))?;
        best = record.best_accuracy;
        observer(&record);
        records.push(record);
    }
    Ok(ExperimentResult {
        records,
        final_model: global.into_params(),
        arch: prepared.arch,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_round(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    global: &mut MlpModel,
    round: u32,
    n_sampled: usize,
    total_malicious: usize,
    best_so_far: f64,
) -> Result<RoundRecord> {
    // Client sampling depends only on (seed, round).
    let mut sampled_ids: Vec<u64> = rand::seq::index::sample(
        &mut RngStream::new(cfg.seed, round as u64, Actor::Sampling),
        cfg.num_clients,
        n_sampled,
    )
    .into_iter()
    .map(|i| i as u64)
    .collect();
    sampled_ids.sort_unstable();
    let malicious_sampled: Vec<u64> = sampled_ids
        .iter()
        .copied()
        .filter(|&id| prepared.is_malicious(id))
        .collect();

    // Phase 1: per-client local work, a parallel map merged in id order.
    let attack = &cfg.attack;
    let knowledge = cfg.attacker_knowledge;
    let work = |&id: &u64| -> Result<(u64, LocalOutcome)> {
        let is_malicious = prepared.is_malicious(id);
        let mut rng = RngStream::new(cfg.seed, round as u64, Actor::Client(id));
        let outcome = if !is_malicious || !attack.is_model_poisoning() {
            match (is_malicious, attack) {
                (true, AttackSpec::AdaptiveUniformity) => LocalOutcome::Submission(
                    adaptive_submit(
                        global,
                        &prepared.clients[id as usize],
                        cfg.local_steps,
                        cfg.local_lr,
                        cfg.batch_size,
                        &mut rng,
                    )?,
                ),
                // Benign clients and data-poisoned malicious clients share
                // the identical training path.
                _ => LocalOutcome::Submission(
                    sgd_local_train(
                        global,
                        &prepared.clients[id as usize],
                        cfg.local_steps,
                        cfg.local_lr,
                        cfg.batch_size,
                        &mut rng,
                        LocalLoss::CrossEntropy,
                    )?
                    .into_params(),
                ),
            }
        } else if knowledge == AttackerKnowledge::CoalitionOnly {
            LocalOutcome::CoalitionProbe(
                sgd_local_train(
                    global,
                    &prepared.clients[id as usize],
                    cfg.local_steps,
                    cfg.local_lr,
                    cfg.batch_size,
                    &mut rng,
                    LocalLoss::CrossEntropy,
                )?
                .into_params(),
            )
        } else {
            LocalOutcome::PendingCraft
        };
        Ok((id, outcome))
    };
    let outcomes: Vec<(u64, LocalOutcome)> = if cfg.parallel {
        sampled_ids.par_iter().map(work).collect::<Result<_>>()?
    } else {
        sampled_ids.iter().map(work).collect::<Result<_>>()?
    };

    // Phase 2: craft model-poisoning submissions from the coalition's view.
    let mut submissions: Vec<ClientUpdate> = Vec::with_capacity(outcomes.len());
    if attack.is_model_poisoning() && !malicious_sampled.is_empty() {
        let view_updates: Vec<ParamVector> = match knowledge {
            AttackerKnowledge::CurrentRound => outcomes
                .iter()
                .filter(|(id, _)| !prepared.is_malicious(*id))
                .filter_map(|(_, o)| match o {
                    LocalOutcome::Submission(p) => Some(p.clone()),
                    _ => None,
                })
                .collect(),
            AttackerKnowledge::CoalitionOnly => outcomes
                .iter()
                .filter_map(|(_, o)| match o {
                    LocalOutcome::CoalitionProbe(p) => Some(p.clone()),
                    _ => None,
                })
                .collect(),
        };
        let view = BenignView {
            benign_updates: view_updates,
            global_model: global.params().clone(),
        };
        let crafted =
            craft_submissions(cfg, prepared, &view, &malicious_sampled, round, total_malicious)?;
        for (id, outcome) in outcomes {
            let model = match outcome {
                LocalOutcome::Submission(p) => p,
                LocalOutcome::CoalitionProbe(_) | LocalOutcome::PendingCraft => crafted
                    .iter()
                    .find(|(mid, _)| *mid == id)
                    .map(|(_, p)| p.clone())
                    .expect("crafted submission for every malicious client"),
            };
            submissions.push(ClientUpdate {
                client_id: id,
                model,
                is_malicious: prepared.is_malicious(id),
            });
        }
    } else {
        for (id, outcome) in outcomes {
            let model = match outcome {
                LocalOutcome::Submission(p) | LocalOutcome::CoalitionProbe(p) => p,
                LocalOutcome::PendingCraft => unreachable!("no crafting without coalition"),
            };
            submissions.push(ClientUpdate {
                client_id: id,
                model,
                is_malicious: prepared.is_malicious(id),
            });
        }
    }

    // Aggregate.
    let resources = ServerResources {
        arch: &prepared.arch,
        aux: Some(&prepared.aux),
        server_data: prepared.server_pool.as_ref(),
        local_steps: cfg.local_steps,
        local_lr: cfg.local_lr,
        batch_size: cfg.batch_size,
    };
    let mut defense_rng = RngStream::new(cfg.seed, round as u64, Actor::Defense);
    let (next_global, audit): (ParamVector, AggregationAudit) = aggregate::aggregate(
        &cfg.defense,
        global.params(),
        &submissions,
        &resources,
        &mut defense_rng,
    )?;
    *global = MlpModel::from_params(prepared.arch.clone(), next_global)?;

    // Evaluate and record.
    let test_accuracy = evaluate(global, &prepared.test)?;
    let (detect_precision, detect_recall) = detection_metrics(&audit.removed_ids, &submissions);
    let (gram_scores, malicious_rank_fractions) = if cfg.defense.uses_gram_scores() {
        let fractions = norm_rank_of_malicious(&audit.scores, &malicious_sampled);
        (Some(audit.scores.clone()), fractions)
    } else {
        (None, Vec::new())
    };
    Ok(RoundRecord {
        round,
        test_accuracy,
        best_accuracy: best_so_far.max(test_accuracy),
        sampled_ids,
        malicious_sampled_ids: malicious_sampled,
        removed_ids: audit.removed_ids,
        detect_precision,
        detect_recall,
        gram_scores,
        malicious_rank_fractions,
    })
}

/// Craft one submission per sampled malicious client. The coalition submits
/// identical vectors except under Fang, where each member draws its own
/// coordinates inside the shared intervals. If the view is too small for the
/// attack, the coalition falls back to submitting the unchanged global.
fn craft_submissions(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    view: &BenignView,
    malicious_sampled: &[u64],
    round: u32,
    total_malicious: usize,
) -> Result<Vec<(u64, ParamVector)>> {
    let fallback = |_: &Error| -> ParamVector { view.global_model.clone() };
    let shared: Option<ParamVector> = match &cfg.attack {
        AttackSpec::Lie => Some(
            lie_craft(view, cfg.num_clients, total_malicious).unwrap_or_else(|e| fallback(&e)),
        ),
        AttackSpec::MinMax { gamma_hi, tau } => Some(
            minmax_minsum_craft(view, DeviationVariant::MinMax, *gamma_hi, *tau)
                .unwrap_or_else(|e| fallback(&e)),
        ),
        AttackSpec::MinSum { gamma_hi, tau } => Some(
            minmax_minsum_craft(view, DeviationVariant::MinSum, *gamma_hi, *tau)
                .unwrap_or_else(|e| fallback(&e)),
        ),
        AttackSpec::Mpaf { lambda } => Some(crate::attack::mpaf_craft(
            &view.global_model,
            &prepared.mpaf_baseline,
            *lambda,
        )?),
        AttackSpec::Fang { .. } => None,
        other => {
            return Err(Error::InvalidArgument(format!(
                "craft_submissions called for non-model-poisoning attack {}",
                other.kind_name()
            )))
        }
    };
    let mut out = Vec::with_capacity(malicious_sampled.len());
    for &id in malicious_sampled {
        let submission = match (&cfg.attack, &shared) {
            (AttackSpec::Fang { scale_b }, _) => {
                let mut rng = RngStream::new(cfg.seed, round as u64, Actor::AttackClient(id));
                match fang_directions(view) {
                    Ok(dirs) => fang_craft(view, &dirs, *scale_b, &mut rng)
                        .unwrap_or_else(|e| fallback(&e)),
                    Err(e) => fallback(&e),
                }
            }
            (_, Some(vector)) => vector.clone(),
            _ => unreachable!(),
        };
        out.push((id, submission));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::DefenseSpec;

    fn tiny_cfg() -> ExperimentConfig {
        ExperimentConfig {
            rounds: 3,
            num_clients: 10,
            sample_fraction: 0.5,
            malicious_fraction: 0.2,
            local_steps: 2,
            batch_size: 8,
            dataset: DatasetConfig::Blobs {
                num_classes: 3,
                feature_dim: 5,
                samples_per_class: 60,
                radius: 5.0,
                noise_sigma: 1.0,
            },
            model: crate::config::ModelConfig {
                hidden_dims: vec![8],
                embedding_dim: 4,
            },
            partition: crate::config::PartitionSettings {
                beta: 1.0,
                min_samples_per_client: 2,
            },
            server_pool: crate::config::ServerPoolSettings { per_class: 2 },
            ..Default::default()
        }
    }

    #[test]
    fn noop_round_keeps_global_and_reports_initial_accuracy() {
        let cfg = ExperimentConfig {
            rounds: 1,
            local_steps: 0,
            attack: AttackSpec::None,
            defense: DefenseSpec::FedAvg,
            ..tiny_cfg()
        };
        let prepared = prepare(&cfg).unwrap();
        let initial_acc = evaluate(&prepared.global, &prepared.test).unwrap();
        let result = run_experiment(&cfg, |_| {}).unwrap();
        assert_eq!(result.records.len(), 1);
        assert_eq!(result.records[0].test_accuracy, initial_acc);
        // Mean of identical submissions; equal up to summation rounding.
        for (a, b) in result
            .final_model
            .values()
            .iter()
            .zip(prepared.global.params().values())
        {
            assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn sampling_is_independent_of_the_defense() {
        let base = ExperimentConfig {
            malicious_fraction: 0.0,
            defense: DefenseSpec::FedAvg,
            ..tiny_cfg()
        };
        let gram = ExperimentConfig {
            defense: DefenseSpec::from_kind_name("fedgram").unwrap(),
            ..base.clone()
        };
        let a = run_experiment(&base, |_| {}).unwrap();
        let b = run_experiment(&gram, |_| {}).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.sampled_ids, rb.sampled_ids);
        }
    }

    #[test]
    fn identical_configs_produce_identical_records() {
        let cfg = ExperimentConfig {
            attack: AttackSpec::Lie,
            ..tiny_cfg()
        };
        let a = run_experiment(&cfg, |_| {}).unwrap();
        let b = run_experiment(&cfg, |_| {}).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_model.values(), b.final_model.values());
    }

    #[test]
    fn parallel_equals_sequential() {
        let mut cfg = ExperimentConfig {
            attack: AttackSpec::MinSum {
                gamma_hi: 100.0,
                tau: 1e-3,
            },
            ..tiny_cfg()
        };
        cfg.parallel = true;
        let par = run_experiment(&cfg, |_| {}).unwrap();
        cfg.parallel = false;
        let seq = run_experiment(&cfg, |_| {}).unwrap();
        assert_eq!(par.records, seq.records);
        assert_eq!(par.final_model.values(), seq.final_model.values());
    }

    #[test]
    fn detection_metric_conventions() {
        let updates = crate::aggregate::tests_support::scalar_updates(&[0.0, 1.0, 2.0, 3.0]);
        let mut updates = updates;
        updates[0].is_malicious = true;
        updates[1].is_malicious = true;
        // removed = {m, m, b}: precision 2/3, recall 1.
        let (p, r) = detection_metrics(&[0, 1, 2], &updates);
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r, 1.0);
        // nothing removed: precision 1, recall 0.
        let (p, r) = detection_metrics(&[], &updates);
        assert_eq!(p, 1.0);
        assert_eq!(r, 0.0);
        // no malicious sampled: recall 1 by convention.
        let benign = crate::aggregate::tests_support::scalar_updates(&[0.0, 1.0]);
        let (_, r) = detection_metrics(&[0], &benign);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn malicious_rank_fractions_match_sort_oracle() {
        let scores = vec![(0u64, 1.0), (1, 5.0), (2, 3.0), (3, 4.0), (4, 2.0)];
        // Malicious ids 1 and 3 hold the largest and second largest scores.
        let fractions = norm_rank_of_malicious(&scores, &[1, 3]);
        assert_eq!(fractions, vec![0.0, 0.2]);
        assert!(norm_rank_of_malicious(&scores, &[]).is_empty());
    }

    #[test]
    fn best_accuracy_is_monotone() {
        let cfg = ExperimentConfig {
            rounds: 5,
            ..tiny_cfg()
        };
        let result = run_experiment(&cfg, |_| {}).unwrap();
        let mut prev = 0.0;
        for r in &result.records {
            assert!(r.best_accuracy >= prev);
            assert!(r.best_accuracy >= r.test_accuracy);
            prev = r.best_accuracy;
        }
    }

    #[test]
    fn data_poisoning_attacks_run_through_the_benign_path() {
        for kind in ["label_flip", "dynamic_label_flip"] {
            let cfg = ExperimentConfig {
                attack: AttackSpec::from_kind_name(kind).unwrap(),
                ..tiny_cfg()
            };
            let result = run_experiment(&cfg, |_| {}).unwrap();
            assert_eq!(result.records.len(), cfg.rounds as usize);
        }
        // Static flip at setup really relabels the malicious datasets.
        let cfg = ExperimentConfig {
            attack: AttackSpec::LabelFlip,
            ..tiny_cfg()
        };
        let poisoned = prepare(&cfg).unwrap();
        let clean = prepare(&ExperimentConfig {
            attack: AttackSpec::None,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(poisoned.malicious_ids, clean.malicious_ids);
        let k = cfg.dataset.num_classes();
        for &id in &poisoned.malicious_ids {
            let flipped = &poisoned.clients[id as usize];
            let original = &clean.clients[id as usize];
            for ((fx, fy), (ox, oy)) in flipped.samples.iter().zip(&original.samples) {
                assert_eq!(fx, ox);
                assert_eq!(*fy, k - oy - 1);
            }
        }
    }

    #[test]
    fn coalition_only_knowledge_changes_the_crafted_submissions() {
        let full = ExperimentConfig {
            attack: AttackSpec::MinSum {
                gamma_hi: 100.0,
                tau: 1e-3,
            },
            ..tiny_cfg()
        };
        let restricted = ExperimentConfig {
            attacker_knowledge: crate::config::AttackerKnowledge::CoalitionOnly,
            ..full.clone()
        };
        let a = run_experiment(&full, |_| {}).unwrap();
        let b = run_experiment(&restricted, |_| {}).unwrap();
        // Sampling is knowledge-independent; the trajectories are not.
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.sampled_ids, rb.sampled_ids);
        }
        assert_ne!(a.final_model.values(), b.final_model.values());
    }

    #[test]
    fn mpaf_runs_end_to_end_and_is_filtered_by_the_gram_rule() {
        let cfg = ExperimentConfig {
            rounds: 6,
            attack: AttackSpec::Mpaf { lambda: 10.0 },
            defense: DefenseSpec::from_kind_name("fedgram").unwrap(),
            ..tiny_cfg()
        };
        let result = run_experiment(&cfg, |_| {}).unwrap();
        assert_eq!(result.records.len(), 6);
        for record in &result.records {
            assert!(record.gram_scores.is_some());
        }
    }

    #[test]
    fn centralized_training_calibrates_default_blob_difficulty() {
        // One client holding everything, default blob parameters: a
        // converged model clears 95% test accuracy.
        let (train, test) = crate::data::make_blobs(
            10,
            20,
            100,
            5.0,
            1.0,
            &mut crate::math::RngStream::setup(7, crate::math::Actor::DataGen),
        )
        .unwrap();
        let arch = crate::model::MlpArch::new(20, vec![32], 16, 10).unwrap();
        let mut init = crate::math::RngStream::setup(7, crate::math::Actor::GlobalInit);
        let model = crate::model::MlpModel::init(arch, &mut init);
        let trained = crate::model::sgd_local_train(
            &model,
            &train,
            600,
            0.1,
            32,
            &mut crate::math::RngStream::new(7, 1, crate::math::Actor::Client(0)),
            crate::model::LocalLoss::CrossEntropy,
        )
        .unwrap();
        let acc = evaluate(&trained, &test).unwrap();
        assert!(acc > 0.95, "centralized accuracy {acc}");

        // Near-zero noise: the same pipeline is perfectly separable.
        let (train0, test0) = crate::data::make_blobs(
            4,
            8,
            60,
            5.0,
            1e-6,
            &mut crate::math::RngStream::setup(8, crate::math::Actor::DataGen),
        )
        .unwrap();
        let arch0 = crate::model::MlpArch::new(8, vec![16], 8, 4).unwrap();
        let mut init0 = crate::math::RngStream::setup(8, crate::math::Actor::GlobalInit);
        let trained0 = crate::model::sgd_local_train(
            &crate::model::MlpModel::init(arch0, &mut init0),
            &train0,
            400,
            0.1,
            16,
            &mut crate::math::RngStream::new(8, 1, crate::math::Actor::Client(0)),
            crate::model::LocalLoss::CrossEntropy,
        )
        .unwrap();
        assert_eq!(evaluate(&trained0, &test0).unwrap(), 1.0);
    }

    #[test]
    fn zero_model_on_balanced_test_scores_one_over_k() {
        let cfg = tiny_cfg();
        let prepared = prepare(&cfg).unwrap();
        let zero = MlpModel::zeros(prepared.arch.clone());
        let acc = evaluate(&zero, &prepared.test).unwrap();
        // Balanced 3-class test set; argmax ties resolve to class 0.
        assert!((acc - 1.0 / 3.0).abs() < 1e-12);
    }
}

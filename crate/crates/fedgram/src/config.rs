//! Experiment configuration: a TOML tree with every field defaulted, so an
//! empty file runs the desk-scale reference experiment.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::DefenseSpec;
use crate::attack::AttackSpec;
use crate::error::{Error, Result};

/// What the malicious coalition can observe when crafting submissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerKnowledge {
    /// The coalition reads the true benign submissions of the round.
    CurrentRound,
    /// The coalition only sees honest training runs of its own members.
    CoalitionOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs {
        #[serde(default = "default_num_classes")]
        num_classes: usize,
        #[serde(default = "default_feature_dim")]
        feature_dim: usize,
        #[serde(default = "default_samples_per_class")]
        samples_per_class: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_noise_sigma")]
        noise_sigma: f64,
    },
    Csv {
        path: String,
        num_classes: usize,
        feature_dim: usize,
    },
}

impl DatasetConfig {
    pub fn num_classes(&self) -> usize {
        match self {
            DatasetConfig::Blobs { num_classes, .. } => *num_classes,
            DatasetConfig::Csv { num_classes, .. } => *num_classes,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            DatasetConfig::Blobs { feature_dim, .. } => *feature_dim,
            DatasetConfig::Csv { feature_dim, .. } => *feature_dim,
        }
    }
}

fn default_num_classes() -> usize {
    10
}
fn default_feature_dim() -> usize {
    20
}
fn default_samples_per_class() -> usize {
    250
}
fn default_radius() -> f64 {
    5.0
}
fn default_noise_sigma() -> f64 {
    1.0
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Blobs {
            num_classes: default_num_classes(),
            feature_dim: default_feature_dim(),
            samples_per_class: default_samples_per_class(),
            radius: default_radius(),
            noise_sigma: default_noise_sigma(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32],
            embedding_dim: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSettings {
    pub beta: f64,
    pub min_samples_per_client: usize,
}

impl Default for PartitionSettings {
    fn default() -> Self {
        Self {
            beta: 0.2,
            min_samples_per_client: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxiliarySettings {
    /// Fraction of classes the server-held auxiliary set covers.
    pub coverage: f64,
}

impl Default for AuxiliarySettings {
    fn default() -> Self {
        Self { coverage: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerPoolSettings {
    /// Class-balanced samples per class carved out for FLTrust / RONI; 0
    /// disables the pool.
    pub per_class: usize,
}

impl Default for ServerPoolSettings {
    fn default() -> Self {
        Self { per_class: 10 }
    }
}

/// Full experiment description. Every field has a default; the default tree
/// is the desk-scale reference experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rounds: u32,
    pub num_clients: usize,
    pub sample_fraction: f64,
    pub malicious_fraction: f64,
    pub local_steps: usize,
    pub local_lr: f64,
    pub batch_size: usize,
    /// Run per-client round work as a parallel map; the result is identical
    /// to sequential execution.
    pub parallel: bool,
    pub attacker_knowledge: AttackerKnowledge,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub partition: PartitionSettings,
    pub auxiliary: AuxiliarySettings,
    pub server_pool: ServerPoolSettings,
    pub attack: AttackSpec,
    pub defense: DefenseSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            rounds: 150,
            num_clients: 50,
            sample_fraction: 0.2,
            malicious_fraction: 0.2,
            local_steps: 10,
            local_lr: 0.1,
            batch_size: 32,
            parallel: true,
            attacker_knowledge: AttackerKnowledge::CurrentRound,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            partition: PartitionSettings::default(),
            auxiliary: AuxiliarySettings::default(),
            server_pool: ServerPoolSettings::default(),
            attack: AttackSpec::None,
            defense: DefenseSpec::from_kind_name("fedgram").unwrap(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Canonical serialized form of the resolved configuration.
    pub fn resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Stable hash of the resolved configuration.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.resolved_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Clients sampled per round.
    pub fn sampled_per_round(&self) -> usize {
        ((self.sample_fraction * self.num_clients as f64).ceil() as usize)
            .clamp(1, self.num_clients)
    }

    /// Size of the fixed malicious population.
    pub fn malicious_count(&self) -> usize {
        (self.malicious_fraction * self.num_clients as f64).ceil() as usize
    }

    /// Full schema and invariant check; returns a human-readable violation
    /// list, empty when the configuration is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut violations: Vec<String> = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                violations.push(msg.to_string());
            }
        };
        check(self.rounds >= 1, "rounds >= 1");
        check(self.num_clients >= 1, "num_clients >= 1");
        check(
            self.sample_fraction > 0.0 && self.sample_fraction <= 1.0,
            "sample_fraction in (0, 1]",
        );
        check(
            (0.0..0.5).contains(&self.malicious_fraction),
            "malicious_fraction < 0.5 and >= 0",
        );
        check(self.local_lr > 0.0, "local_lr > 0");
        check(self.batch_size >= 1, "batch_size >= 1");
        match &self.dataset {
            DatasetConfig::Blobs {
                num_classes,
                feature_dim,
                samples_per_class,
                radius,
                noise_sigma,
            } => {
                check(*num_classes >= 2, "dataset.num_classes >= 2");
                check(*feature_dim >= 1, "dataset.feature_dim >= 1");
                check(*samples_per_class >= 5, "dataset.samples_per_class >= 5");
                check(*radius > 0.0, "dataset.radius > 0");
                check(*noise_sigma > 0.0, "dataset.noise_sigma > 0");
            }
            DatasetConfig::Csv {
                path,
                num_classes,
                feature_dim,
            } => {
                check(!path.is_empty(), "dataset.path non-empty");
                check(*num_classes >= 2, "dataset.num_classes >= 2");
                check(*feature_dim >= 1, "dataset.feature_dim >= 1");
            }
        }
        check(
            self.model.embedding_dim >= 1 && self.model.hidden_dims.iter().all(|&d| d >= 1),
            "model dimensions >= 1",
        );
        check(self.partition.beta > 0.0, "partition.beta > 0");
        check(
            self.auxiliary.coverage > 0.0 && self.auxiliary.coverage <= 1.0,
            "auxiliary.coverage in (0, 1]",
        );

        let n = self.sampled_per_round();
        match &self.defense {
            DefenseSpec::FedGram {
                filter_fraction, ..
            } => {
                check(
                    *filter_fraction > 0.0 && *filter_fraction < 1.0,
                    "defense.filter_fraction in (0, 1)",
                );
                if *filter_fraction > 0.0 && *filter_fraction < 1.0 {
                    check(
                        ((filter_fraction * n as f64).ceil() as usize) < n,
                        "defense.filter_fraction leaves at least one survivor per round",
                    );
                }
            }
            DefenseSpec::TrimmedMean { trim_k } => {
                check(2 * trim_k < n, "defense.trim_k: 2k < sampled clients");
            }
            DefenseSpec::NormBound { p } => check(*p > 0.0, "defense.p > 0"),
            DefenseSpec::Crfl { rho, sigma, .. } => {
                check(*rho > 0.0, "defense.rho > 0");
                check(*sigma >= 0.0, "defense.sigma >= 0");
            }
            DefenseSpec::Krum { f } => check(n >= f + 3, "defense.f: sampled clients >= f + 3"),
            DefenseSpec::MultiKrum { f, select } => {
                check(n >= f + 3, "defense.f: sampled clients >= f + 3");
                check(
                    *select >= 1 && *select <= n,
                    "defense.select in 1..=sampled clients",
                );
            }
            DefenseSpec::Bulyan { f } => {
                check(n >= 4 * f + 3, "defense.f: sampled clients >= 4f + 3");
            }
            DefenseSpec::Rlr { eta, .. } => check(*eta > 0.0, "defense.eta > 0"),
            DefenseSpec::Bucket {
                bucket_size,
                trim_k,
            } => {
                check(*bucket_size >= 1, "defense.bucket_size >= 1");
                if *bucket_size >= 1 {
                    let buckets = n.div_ceil(*bucket_size);
                    check(2 * trim_k < buckets, "defense.trim_k: 2k < bucket count");
                }
            }
            DefenseSpec::Roni { remove_fraction } => {
                check(
                    *remove_fraction >= 0.0 && *remove_fraction < 1.0,
                    "defense.remove_fraction in [0, 1)",
                );
            }
            DefenseSpec::FedAvg | DefenseSpec::Median | DefenseSpec::Rfa | DefenseSpec::FlTrust => {}
        }
        if self.defense.needs_server_data() {
            check(
                self.server_pool.per_class >= 1,
                "server_pool.per_class >= 1 for fltrust/roni",
            );
        }

        match &self.attack {
            AttackSpec::Lie => {
                let m = self.malicious_count();
                check(m >= 1, "attack lie requires at least one malicious client");
                if m >= 1 && m < self.num_clients {
                    if let Err(e) = crate::attack::lie_zmax(self.num_clients, m) {
                        check(false, &format!("attack lie: {e}"));
                    }
                }
            }
            AttackSpec::Fang { scale_b } => check(*scale_b > 1.0, "attack.scale_b > 1"),
            AttackSpec::MinMax { gamma_hi, tau } | AttackSpec::MinSum { gamma_hi, tau } => {
                check(*gamma_hi > 0.0, "attack.gamma_hi > 0");
                check(*tau > 0.0, "attack.tau > 0");
            }
            AttackSpec::Mpaf { lambda } => check(*lambda > 0.0, "attack.lambda > 0"),
            _ => {}
        }

        // Feasibility of the partition floor, when the train size is known.
        if let DatasetConfig::Blobs {
            num_classes,
            samples_per_class,
            ..
        } = &self.dataset
        {
            let train = num_classes * (samples_per_class * 4 / 5);
            let carved = num_classes
                * (self.server_pool.per_class
                    + usize::from(self.auxiliary.coverage > 0.0));
            let available = train.saturating_sub(carved);
            check(
                self.num_clients * self.partition.min_samples_per_client <= available,
                "partition.min_samples_per_client feasible for the training set",
            );
        }
        violations
    }
}

//! Run artifacts: manifest, per-round metrics CSV, summary record, model
//! checkpoint, and sweep drivers.
//!
//! The metrics CSV schema is fixed:
//! `round,test_acc,best_acc,n_sampled,n_malicious_sampled,n_removed,detect_precision,detect_recall,mean_malicious_rank_fraction`.
//! Absent metrics are emitted as empty fields, never as omitted columns.
//! Given the same config and seed, the CSV, summary and checkpoint are
//! byte-identical across runs; only the manifest timestamps differ.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::aggregate::DefenseSpec;
use crate::attack::AttackSpec;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::save_param_vector;
use crate::sim::{run_experiment, RoundRecord};

pub const METRICS_CSV_HEADER: &str = "round,test_acc,best_acc,n_sampled,n_malicious_sampled,n_removed,detect_precision,detect_recall,mean_malicious_rank_fraction";

/// Serialize a float with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..=8).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// One CSV data row for a round record.
pub fn metrics_csv_row(record: &RoundRecord) -> String {
    let rank = record
        .mean_malicious_rank_fraction()
        .map(format_sig6)
        .unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{}",
        record.round,
        format_sig6(record.test_accuracy),
        format_sig6(record.best_accuracy),
        record.sampled_ids.len(),
        record.malicious_sampled_ids.len(),
        record.removed_ids.len(),
        format_sig6(record.detect_precision),
        format_sig6(record.detect_recall),
        rank,
    )
}

/// End-of-run summary. Detection means cover rounds >= 10.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub rounds: u32,
    pub best_accuracy: f64,
    pub final_accuracy: f64,
    pub mean_detect_precision: f64,
    pub mean_detect_recall: f64,
    pub mean_malicious_rank_fraction: Option<f64>,
}

impl RunSummary {
    pub fn from_records(records: &[RoundRecord]) -> Self {
        let mut late: Vec<&RoundRecord> = records.iter().filter(|r| r.round >= 10).collect();
        if late.is_empty() {
            // Runs shorter than 10 rounds have no warmup to exclude.
            late = records.iter().collect();
        }
        let denom = late.len().max(1) as f64;
        let mean_precision = late.iter().map(|r| r.detect_precision).sum::<f64>() / denom;
        let mean_recall = late.iter().map(|r| r.detect_recall).sum::<f64>() / denom;
        let ranks: Vec<f64> = late
            .iter()
            .filter_map(|r| r.mean_malicious_rank_fraction())
            .collect();
        let mean_rank = if ranks.is_empty() {
            None
        } else {
            Some(ranks.iter().sum::<f64>() / ranks.len() as f64)
        };
        Self {
            rounds: records.last().map(|r| r.round).unwrap_or(0),
            best_accuracy: records.last().map(|r| r.best_accuracy).unwrap_or(0.0),
            final_accuracy: records.last().map(|r| r.test_accuracy).unwrap_or(0.0),
            mean_detect_precision: mean_precision,
            mean_detect_recall: mean_recall,
            mean_malicious_rank_fraction: mean_rank,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    artifact_version: &'static str,
    config_hash: String,
    seed: u64,
    out_dir: String,
    metrics_csv: String,
    summary_file: String,
    checkpoint_file: String,
    started_at: String,
    finished_at: String,
    config: &'a ExperimentConfig,
}

/// Load a config file and run the full schema check; errors here are usage
/// errors (exit code 2 at the CLI).
pub fn load_validated(path: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?;
    let violations = cfg.validate();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(violations.join("; ")))
    }
}

/// Execute one experiment and write its artifacts under `out_dir`.
pub fn run_to_dir(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
    mut progress: impl FnMut(&RoundRecord),
) -> Result<RunSummary> {
    let mut cfg = cfg.clone();
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(out_dir)?;
    let metrics_path = out_dir.join("metrics.csv");
    let summary_path = out_dir.join("summary.toml");
    let checkpoint_path = out_dir.join("global_model.bin");
    let manifest_path = out_dir.join("manifest.toml");

    let mut manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        out_dir: out_dir.display().to_string(),
        metrics_csv: metrics_path.display().to_string(),
        summary_file: summary_path.display().to_string(),
        checkpoint_file: checkpoint_path.display().to_string(),
        started_at: chrono::Utc::now().to_rfc3339(),
        finished_at: String::new(),
        config: &cfg,
    };
    write_toml(&manifest_path, &manifest)?;

    let mut csv = String::with_capacity(64 * cfg.rounds as usize);
    csv.push_str(METRICS_CSV_HEADER);
    csv.push('\n');
    let result = run_experiment(&cfg, |record| {
        let _ = writeln!(csv, "{}", metrics_csv_row(record));
        progress(record);
    })?;

    std::fs::write(&metrics_path, csv)?;
    let summary = RunSummary::from_records(&result.records);
    write_toml(&summary_path, &summary)?;
    save_param_vector(&result.final_model, &checkpoint_path)?;

    manifest.finished_at = chrono::Utc::now().to_rfc3339();
    write_toml(&manifest_path, &manifest)?;
    Ok(summary)
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Sweepable configuration axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Beta,
    FilterFraction,
    Coverage,
    MaliciousFraction,
    Defense,
    Attack,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "beta" => SweepAxis::Beta,
            "c" | "C" | "filter_fraction" => SweepAxis::FilterFraction,
            "coverage" => SweepAxis::Coverage,
            "malicious_fraction" => SweepAxis::MaliciousFraction,
            "defense" => SweepAxis::Defense,
            "attack" => SweepAxis::Attack,
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep axis {other:?} (expected beta | C | coverage | malicious_fraction | defense | attack)"
                )))
            }
        })
    }
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Beta => "beta",
            SweepAxis::FilterFraction => "C",
            SweepAxis::Coverage => "coverage",
            SweepAxis::MaliciousFraction => "malicious_fraction",
            SweepAxis::Defense => "defense",
            SweepAxis::Attack => "attack",
        }
    }

    /// Apply one axis value to a base configuration.
    pub fn apply(&self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("sweep value {v:?} is not a number")))
        };
        match self {
            SweepAxis::Beta => cfg.partition.beta = parse_f64(value)?,
            SweepAxis::FilterFraction => match &mut cfg.defense {
                DefenseSpec::FedGram {
                    filter_fraction, ..
                } => *filter_fraction = parse_f64(value)?,
                other => {
                    return Err(Error::Config(format!(
                        "axis C requires a fedgram defense, found {}",
                        other.kind_name()
                    )))
                }
            },
            SweepAxis::Coverage => cfg.auxiliary.coverage = parse_f64(value)?,
            SweepAxis::MaliciousFraction => cfg.malicious_fraction = parse_f64(value)?,
            SweepAxis::Defense => {
                cfg.defense = DefenseSpec::from_kind_name(value).ok_or_else(|| {
                    Error::Config(format!("unknown defense kind {value:?}"))
                })?
            }
            SweepAxis::Attack => {
                cfg.attack = AttackSpec::from_kind_name(value).ok_or_else(|| {
                    Error::Config(format!("unknown attack kind {value:?}"))
                })?
            }
        }
        let violations = cfg.validate();
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(format!(
                "sweep value {value:?}: {}",
                violations.join("; ")
            )))
        }
    }
}

/// Run one experiment per axis value (shared seeds), plus a joined summary
/// CSV keyed by the axis value. Returns the per-value summaries.
pub fn sweep_to_dir(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    out_dir: &Path,
    mut progress: impl FnMut(&str, &RunSummary),
) -> Result<Vec<(String, RunSummary)>> {
    if values.is_empty() {
        return Err(Error::Config("empty sweep value list".into()));
    }
    // Validate every value before any run starts.
    let configs: Vec<(String, ExperimentConfig)> = values
        .iter()
        .map(|v| axis.apply(base, v).map(|c| (v.clone(), c)))
        .collect::<Result<_>>()?;

    std::fs::create_dir_all(out_dir)?;
    let mut summaries = Vec::with_capacity(configs.len());
    for (value, cfg) in configs {
        let run_dir = out_dir.join(format!("{}={}", axis.name(), sanitize(&value)));
        let summary = run_to_dir(&cfg, &run_dir, None, |_| {})?;
        progress(&value, &summary);
        summaries.push((value, summary));
    }

    let mut csv = String::new();
    let _ = writeln!(
        csv,
        "{},best_acc,final_acc,mean_detect_precision,mean_detect_recall,mean_malicious_rank_fraction",
        axis.name()
    );
    for (value, summary) in &summaries {
        let rank = summary
            .mean_malicious_rank_fraction
            .map(format_sig6)
            .unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            value,
            format_sig6(summary.best_accuracy),
            format_sig6(summary.final_accuracy),
            format_sig6(summary.mean_detect_precision),
            format_sig6(summary.mean_detect_recall),
            rank,
        );
    }
    std::fs::write(out_dir.join("sweep_summary.csv"), csv)?;
    Ok(summaries)
}

fn sanitize(value: &str) -> String {
    value
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1.00000");
        assert_eq!(format_sig6(0.9234567), "0.923457");
        assert_eq!(format_sig6(0.5), "0.500000");
        assert_eq!(format_sig6(123.4567891), "123.457");
        assert_eq!(format_sig6(0.000123456789), "0.000123457");
    }

    #[test]
    fn csv_row_emits_absent_metrics_as_empty_fields() {
        let record = crate::sim::RoundRecord {
            round: 3,
            test_accuracy: 0.5,
            best_accuracy: 0.625,
            sampled_ids: vec![1, 2, 3, 4],
            malicious_sampled_ids: vec![2],
            removed_ids: vec![],
            detect_precision: 1.0,
            detect_recall: 0.0,
            gram_scores: None,
            malicious_rank_fractions: Vec::new(),
        };
        let row = metrics_csv_row(&record);
        assert_eq!(row, "3,0.500000,0.625000,4,1,0,1.00000,0,");
        assert_eq!(row.matches(',').count(), METRICS_CSV_HEADER.matches(',').count());
    }

    #[test]
    fn axis_parsing_and_application() {
        let base = ExperimentConfig::default();
        let cfg = SweepAxis::from_str("beta")
            .unwrap()
            .apply(&base, "0.2")
            .unwrap();
        assert_eq!(cfg.partition.beta, 0.2);

        let cfg = SweepAxis::from_str("C").unwrap().apply(&base, "0.4").unwrap();
        match cfg.defense {
            DefenseSpec::FedGram { filter_fraction, .. } => assert_eq!(filter_fraction, 0.4),
            _ => panic!("expected fedgram"),
        }

        let cfg = SweepAxis::from_str("attack").unwrap().apply(&base, "lie").unwrap();
        assert_eq!(cfg.attack.kind_name(), "lie");

        assert!(SweepAxis::from_str("bogus").is_err());
        assert!(SweepAxis::from_str("defense")
            .unwrap()
            .apply(&base, "bogus")
            .is_err());
    }
}

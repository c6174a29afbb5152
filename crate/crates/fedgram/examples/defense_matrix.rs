//! Short defense-vs-attack grid: best test accuracy for each pairing.
//!
//! Run with: cargo run --release --example defense_matrix

use fedgram::aggregate::DefenseSpec;
use fedgram::attack::AttackSpec;
use fedgram::config::ExperimentConfig;
use fedgram::sim::run_experiment;

fn main() {
    let attacks = ["none", "fang", "mpaf", "label_flip"];
    let defenses = ["fedavg", "fedgram", "trimmed_mean", "multi_krum", "rfa"];

    let mut base = ExperimentConfig::default();
    base.rounds = 30;

    print!("{:<14}", "");
    for atk in &attacks {
        print!("{atk:>12}");
    }
    println!();
    for def in &defenses {
        print!("{def:<14}");
        for atk in &attacks {
            let mut cfg = base.clone();
            cfg.attack = AttackSpec::from_kind_name(atk).unwrap();
            cfg.defense = DefenseSpec::from_kind_name(def).unwrap();
            let best = run_experiment(&cfg, |_| {})
                .map(|r| r.best_accuracy())
                .unwrap_or(f64::NAN);
            print!("{best:>12.3}");
        }
        println!();
    }
    println!("\nbest test accuracy over 30 rounds, 20% malicious clients.");
}

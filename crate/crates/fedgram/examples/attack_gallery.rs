//! Craft every model-poisoning attack against one synthetic round and print
//! what each submission looks like relative to the benign population.
//!
//! Run with: cargo run --release --example attack_gallery

use fedgram::attack::{
    fang_craft, fang_directions, lie_craft, lie_zmax, minmax_minsum_craft, mpaf_craft,
    BenignView, DeviationVariant,
};
use fedgram::math::{vec_distance, vec_norm, vec_sub, Actor, RngStream};
use fedgram::model::{MlpArch, MlpModel};

fn main() {
    let arch = MlpArch::new(6, vec![8], 4, 3).unwrap();
    let global = MlpModel::init(arch.clone(), &mut RngStream::setup(1, Actor::GlobalInit));

    // Eight benign submissions: local-drifted copies of the global.
    use rand::Rng;
    let mut drift = RngStream::setup(2, Actor::DataGen);
    let benign: Vec<_> = (0..8)
        .map(|_| {
            let values: Vec<f64> = global
                .params()
                .values()
                .iter()
                .map(|v| v + drift.random_range(-0.3..0.3))
                .collect();
            global.params().with_values(values).unwrap()
        })
        .collect();
    let view = BenignView {
        benign_updates: benign.clone(),
        global_model: global.params().clone(),
    };
    let mean: Vec<f64> = {
        let mut acc = vec![0.0; global.params().len()];
        for b in &benign {
            for (a, v) in acc.iter_mut().zip(b.values()) {
                *a += v / benign.len() as f64;
            }
        }
        acc
    };
    let spread = benign
        .iter()
        .map(|b| vec_distance(b.values(), &mean))
        .fold(0.0_f64, f64::max);
    println!("benign population: 8 submissions, max distance to mean {spread:.3}\n");
    println!("{:<22} {:>14} {:>16}", "attack", "dist to mean", "dist to global");

    let report = |name: &str, crafted: &fedgram::model::ParamVector| {
        println!(
            "{:<22} {:>14.3} {:>16.3}",
            name,
            vec_distance(crafted.values(), &mean),
            vec_distance(crafted.values(), global.params().values())
        );
    };

    let lie = lie_craft(&view, 50, 10).unwrap();
    report(&format!("lie (z={:.3})", lie_zmax(50, 10).unwrap()), &lie);

    let dirs = fang_directions(&view).unwrap();
    let fang = fang_craft(&view, &dirs, 2.0, &mut RngStream::new(2, 1, Actor::AttackClient(0))).unwrap();
    report("fang (b=2)", &fang);

    let minmax = minmax_minsum_craft(&view, DeviationVariant::MinMax, 100.0, 1e-3).unwrap();
    report("minmax", &minmax);
    let minsum = minmax_minsum_craft(&view, DeviationVariant::MinSum, 100.0, 1e-3).unwrap();
    report("minsum", &minsum);

    let baseline = MlpModel::init(arch, &mut RngStream::setup(2, Actor::GlobalInit)).into_params();
    let mpaf = mpaf_craft(global.params(), &baseline, 10.0).unwrap();
    report("mpaf (lambda=10)", &mpaf);

    let update_norm = vec_norm(&vec_sub(&mean, global.params().values()));
    println!("\nmean benign update norm: {update_norm:.3}");
    println!("lie and the deviation attacks hide inside the benign spread;");
    println!("mpaf pulls far toward a fixed random baseline.");
}

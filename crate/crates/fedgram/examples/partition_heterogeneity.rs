//! How the Dirichlet concentration shapes client data: label entropy and
//! per-client class histograms at beta in {10, 1, 0.2}.
//!
//! Run with: cargo run --release --example partition_heterogeneity

use fedgram::data::{dirichlet_partition, make_blobs, PartitionConfig};
use fedgram::math::{Actor, RngStream};

fn main() {
    let (train, _) = make_blobs(5, 8, 200, 5.0, 1.0, &mut RngStream::setup(3, Actor::DataGen)).unwrap();
    for beta in [10.0, 1.0, 0.2] {
        let cfg = PartitionConfig {
            num_clients: 8,
            concentration: beta,
            min_samples_per_client: 2,
        };
        let clients = dirichlet_partition(&train, &cfg, &mut RngStream::setup(4, Actor::Partition)).unwrap();
        let mean_entropy: f64 =
            clients.iter().map(|c| c.label_entropy()).sum::<f64>() / clients.len() as f64;
        println!("beta = {beta:>5}: mean label entropy {mean_entropy:.3} (max {:.3})", (5.0_f64).ln());
        for (i, client) in clients.iter().enumerate() {
            let counts = client.class_counts();
            let bars: Vec<String> = counts.iter().map(|&c| format!("{c:>4}")).collect();
            println!("  client {i}: [{}]  ({} samples)", bars.join(" "), client.len());
        }
        println!();
    }
}

//! Hand-rolled federated averaging: partition, local updates, aggregate.
//!
//! cargo run --release --example fedavg_round

use fedlwf::{aggregate, evaluate, init_model, local_update, partition, FedConfig, PartitionStrategy, SyntheticSuite};

fn main() -> fedlwf::Result<()> {
    let events = SyntheticSuite { events: 1, dim: 32, ..SyntheticSuite::default() }.generate()?;
    let ev = &events[0];

    let cfg = FedConfig { n_clients: 4, rounds: 5, local_epochs: 2, ..FedConfig::default() };
    let shards = partition(&ev.train, cfg.n_clients, cfg.partition, 3)?;
    for s in &shards {
        println!("client {}: {} samples", s.client_id, s.indices.len());
    }

    let mut central = init_model(3, 64, 32, 10, 0)?;
    for round in 0..cfg.rounds {
        let updates = shards
            .iter()
            .map(|s| local_update(&central, s, None, &cfg, round))
            .collect::<fedlwf::Result<Vec<_>>>()?;
        central = aggregate(&updates)?;
        let e = evaluate(&central, &ev.valid)?;
        println!("round {}: valid loss {:.4}, accuracy {:.3}", round + 1, e.loss, e.accuracy);
    }

    let skewed = partition(&ev.train, 4, PartitionStrategy::LabelSkew { alpha: 0.3 }, 3)?;
    println!("label-skew shard sizes: {:?}", skewed.iter().map(|s| s.indices.len()).collect::<Vec<_>>());
    Ok(())
}

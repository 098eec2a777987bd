//! Per-client label histograms under IID and Dirichlet label-skew splits.
//!
//! cargo run --example partition_skew

use fedlwf::{partition, synth_gaussian, PartitionStrategy};

fn main() -> fedlwf::Result<()> {
    let data = synth_gaussian(100, 10, 4, 1.0, 1.0, 0, 0)?;
    for strategy in [
        PartitionStrategy::Iid,
        PartitionStrategy::LabelSkew { alpha: 100.0 },
        PartitionStrategy::LabelSkew { alpha: 0.1 },
    ] {
        println!("{strategy:?}");
        for s in partition(&data, 5, strategy, 42)? {
            println!("  client {}  {:?}", s.client_id, s.data.class_counts());
        }
    }
    Ok(())
}

//! Centralized depth sweep on a single synthetic event; writes
//! `out/depth_sweep/sweep.csv`.
//!
//! cargo run --release --example depth_sweep

use fedlwf::experiment::{sweep, DataSource, ExperimentConfig, SweepAxis};
use fedlwf::{Mode, ModelSpec, SyntheticSuite};

fn main() -> fedlwf::Result<()> {
    let mut cfg = ExperimentConfig { mode: Mode::CentralOnly, ..ExperimentConfig::default() };
    cfg.model = ModelSpec { in_dim: 32, ..ModelSpec::default() };
    cfg.data = DataSource::Synthetic(SyntheticSuite { events: 1, dim: 32, train_per_class: 100, ..SyntheticSuite::default() });
    cfg.output.dir = "out/depth_sweep".into();

    println!("depth  train   test");
    for r in sweep(&cfg, SweepAxis::Depth, &[3, 5, 10, 15, 25])? {
        println!("{:>5}  {:.3}  {:.3}", r.axis_value, r.train_accuracy, r.test_accuracy);
    }
    Ok(())
}

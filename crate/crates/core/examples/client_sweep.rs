//! Federated continual runs with 3, 5, 7 and 9 clients; writes
//! `out/client_sweep/sweep.csv`.
//!
//! cargo run --release --example client_sweep

use fedlwf::experiment::{sweep, DataSource, ExperimentConfig, SweepAxis};
use fedlwf::{Mode, ModelSpec, SyntheticSuite};

fn main() -> fedlwf::Result<()> {
    let mut cfg = ExperimentConfig { mode: Mode::FedCl, ..ExperimentConfig::default() };
    cfg.model = ModelSpec { in_dim: 32, ..ModelSpec::default() };
    cfg.data = DataSource::Synthetic(SyntheticSuite { dim: 32, ..SyntheticSuite::default() });
    cfg.output.dir = "out/client_sweep".into();

    for r in sweep(&cfg, SweepAxis::Clients, &[3, 5, 7, 9])? {
        println!("{} clients: test {:.3} (loss {:.3})", r.axis_value, r.test_accuracy, r.test_loss);
    }
    Ok(())
}

//! Run all four modes over a three-event synthetic sequence and print each
//! accuracy matrix with its forgetting score.
//!
//! cargo run --release --example event_sequence

use fedlwf::{run_event_sequence, FedConfig, Mode, ModelSpec, SyntheticSuite};

fn main() -> fedlwf::Result<()> {
    let events = SyntheticSuite { dim: 32, ..SyntheticSuite::default() }.generate()?;
    let model = ModelSpec { in_dim: 32, ..ModelSpec::default() };
    let cfg = FedConfig { n_clients: 3, rounds: 4, local_epochs: 5, ..FedConfig::default() };

    for mode in Mode::ALL {
        let out = run_event_sequence(&events, &model, &cfg, mode)?;
        println!("{mode}");
        for (i, row) in out.test_matrix.rows().iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|a| format!("{a:.3}")).collect();
            println!("  after {}: {}", events[i].name, cells.join("  "));
        }
        let s = &out.summary;
        println!(
            "  cumulative test {:.3}, forgetting {:.3}",
            s.final_cumulative_test(),
            s.forgetting.unwrap_or(0.0)
        );
    }
    Ok(())
}

//! Train a small MLP on Gaussian clusters and report validation accuracy.
//!
//! cargo run --release --example train_mlp

use fedlwf::{evaluate, init_model, synth_gaussian, train_on_task, TrainConfig};

fn main() -> fedlwf::Result<()> {
    let train = synth_gaussian(50, 10, 32, 3.0, 1.0, 7, 1)?;
    let valid = synth_gaussian(20, 10, 32, 3.0, 1.0, 7, 2)?;

    let params = init_model(3, 100, 32, 10, 0)?;
    let cfg = TrainConfig { epochs: 15, ..TrainConfig::default() };
    let (trained, history) = train_on_task(&params, &train, Some(&valid), None, &cfg)?;

    for m in &history {
        println!(
            "epoch {:>2}  loss {:.4}  train acc {:.3}  valid acc {:.3}",
            m.epoch,
            m.train_loss,
            m.train_accuracy,
            m.valid_accuracy.unwrap_or(f64::NAN)
        );
    }
    let e = evaluate(&trained, &valid)?;
    println!("final: loss {:.4}, accuracy {:.3}", e.loss, e.accuracy);
    Ok(())
}

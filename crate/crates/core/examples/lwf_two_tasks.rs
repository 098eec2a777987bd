//! Train task A, then task B with and without distillation from a snapshot
//! taken after A. Distillation should keep more of task A.
//!
//! cargo run --release --example lwf_two_tasks

use fedlwf::{evaluate, init_model, snapshot_teacher, train_on_task, LwfConfig, SyntheticSuite, TrainConfig};

fn main() -> fedlwf::Result<()> {
    let suite = SyntheticSuite { events: 2, dim: 32, drift: 0.7, ..SyntheticSuite::default() };
    let events = suite.generate()?;
    let (a, b) = (&events[0], &events[1]);

    let cfg = TrainConfig::default();
    let start = init_model(3, 100, suite.dim, suite.n_classes, 1)?;
    let (after_a, _) = train_on_task(&start, &a.train, Some(&a.valid), None, &cfg)?;
    println!("task A accuracy after A: {:.3}", evaluate(&after_a, &a.test)?.accuracy);

    let teacher = snapshot_teacher(&after_a, 0);
    for (label, lwf, t) in [
        ("plain", LwfConfig::disabled(), None),
        ("distilled", LwfConfig::default(), Some(&teacher)),
    ] {
        let (after_b, _) = train_on_task(&after_a, &b.train, Some(&b.valid), t, &TrainConfig { lwf, ..cfg })?;
        println!(
            "{label:>9}: task A {:.3}, task B {:.3}",
            evaluate(&after_b, &a.test)?.accuracy,
            evaluate(&after_b, &b.test)?.accuracy
        );
    }
    Ok(())
}

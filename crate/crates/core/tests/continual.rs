use fedlwf::data::sample_around;
use fedlwf::{
    evaluate, init_model, snapshot_teacher, train_on_task, Dataset, LwfConfig, Matrix,
    SyntheticSuite, TrainConfig,
};

/// Two Gaussian blobs in 2-d centred on (-2, -2) and (2, 2).
fn blobs(sample_seed: u64) -> Dataset {
    let centers = Matrix::from_rows(&[vec![-2.0, -2.0], vec![2.0, 2.0]]).unwrap();
    sample_around(&centers, 500, 0.5, sample_seed).unwrap()
}

/// Full-batch logistic regression by gradient descent.
fn logistic_oracle(train: &Dataset, steps: usize, lr: f64) -> impl Fn(&[f64]) -> usize {
    let d = train.dim();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let n = train.len() as f64;
    for _ in 0..steps {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (i, &y) in train.labels().iter().enumerate() {
            let x = train.features().row(i);
            let z: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = 1.0 / (1.0 + (-z).exp()) - y as f64;
            gw.iter_mut().zip(x).for_each(|(g, xi)| *g += err * xi / n);
            gb += err / n;
        }
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= lr * g);
        b -= lr * gb;
    }
    move |x: &[f64]| usize::from(b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() > 0.0)
}

fn accuracy_of(pred: impl Fn(&[f64]) -> usize, data: &Dataset) -> f64 {
    let hits = (0..data.len()).filter(|&i| pred(data.features().row(i)) == data.labels()[i]).count();
    hits as f64 / data.len() as f64
}

#[test]
fn blobs_are_linearly_separable_by_oracle() {
    let (train, valid) = (blobs(1), blobs(2));
    let acc = accuracy_of(logistic_oracle(&train, 500, 0.5), &valid);
    assert!(acc >= 0.95, "oracle accuracy {acc}");
}

#[test]
fn shallow_mlp_learns_two_clusters() {
    let (train, valid) = (blobs(1), blobs(2));
    let params = init_model(2, 100, 2, 2, 3).unwrap();
    let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
    let (trained, hist) = train_on_task(&params, &train, Some(&valid), None, &cfg).unwrap();
    assert_eq!(hist.len(), 20);
    let acc = hist.last().unwrap().valid_accuracy.unwrap();
    assert!(acc >= 0.95, "valid accuracy {acc}");
    assert_eq!(evaluate(&trained, &valid).unwrap().accuracy, acc);
    assert!(hist.last().unwrap().train_loss < hist[0].train_loss);
}

#[test]
fn inactive_distillation_matches_plain_training() {
    let train = blobs(3);
    let start = init_model(3, 8, 2, 2, 4).unwrap();
    let teacher = snapshot_teacher(&init_model(3, 8, 2, 2, 5).unwrap(), 0);
    let base = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let (plain, _) = train_on_task(&start, &train, None, None, &base).unwrap();
    for lwf in [LwfConfig { lambda0: 0.0, ..LwfConfig::default() }, LwfConfig::disabled()] {
        let cfg = TrainConfig { lwf, ..base };
        let (p, _) = train_on_task(&start, &train, None, Some(&teacher), &cfg).unwrap();
        assert!(p.bit_eq(&plain));
    }
    let (distilled, _) = train_on_task(&start, &train, None, Some(&teacher), &base).unwrap();
    assert!(!distilled.bit_eq(&plain));
}

#[test]
fn training_is_reproducible() {
    let train = blobs(4);
    let start = init_model(3, 8, 2, 2, 6).unwrap();
    let cfg = TrainConfig { epochs: 4, seed: 9, ..TrainConfig::default() };
    let (a, ha) = train_on_task(&start, &train, None, None, &cfg).unwrap();
    let (b, hb) = train_on_task(&start, &train, None, None, &cfg).unwrap();
    assert!(a.bit_eq(&b));
    assert_eq!(ha, hb);
}

/// Trains task A, then task B with and without distillation, and compares
/// the retained accuracy on A averaged over five seeds.
#[test]
fn distillation_retains_more_of_the_first_task() {
    let (mut with, mut without) = (0.0, 0.0);
    for seed in 0..5u64 {
        let events = SyntheticSuite {
            events: 2,
            dim: 32,
            train_per_class: 30,
            drift: 0.7,
            seed,
            ..SyntheticSuite::default()
        }
        .generate()
        .unwrap();
        let start = init_model(3, 100, 32, 10, seed).unwrap();
        let cfg = TrainConfig { epochs: 20, seed, ..TrainConfig::default() };
        let (after_a, _) = train_on_task(&start, &events[0].train, None, None, &cfg).unwrap();
        let teacher = snapshot_teacher(&after_a, 0);

        let (lwf, _) = train_on_task(&after_a, &events[1].train, None, Some(&teacher), &cfg).unwrap();
        let plain_cfg = TrainConfig { lwf: LwfConfig::disabled(), ..cfg };
        let (plain, _) = train_on_task(&after_a, &events[1].train, None, None, &plain_cfg).unwrap();

        with += evaluate(&lwf, &events[0].test).unwrap().accuracy / 5.0;
        without += evaluate(&plain, &events[0].test).unwrap().accuracy / 5.0;
    }
    assert!(with > without, "retained accuracy with {with}, without {without}");
}

//! Analytic gradients against central finite differences.

use fedlwf::nn::{forward, loss_and_grads, softmax_xent, Hyper, ModelParams};
use fedlwf::tensor::{softmax_rows, Matrix};
use fedlwf::{distillation_loss, init_model, LwfConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|)`, with the denominator floored so coordinates
/// whose true gradient is ~0 are judged on absolute error.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

#[test]
fn softmax_xent_dlogits_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let logits = random_matrix(&mut rng, 4, 10, 3.0);
    let labels = [3, 0, 9, 5];
    let (_, grad) = softmax_xent(&logits, &labels).unwrap();
    for i in 0..logits.data().len() {
        let f = |v: f64| {
            let mut l = logits.clone();
            l.data_mut()[i] = v;
            softmax_xent(&l, &labels).unwrap().0
        };
        let n = central_diff(f, logits.data()[i]);
        assert!(rel_err(grad.data()[i], n) < TOL, "coord {i}: {} vs {n}", grad.data()[i]);
    }
}

#[test]
fn distillation_dlogits_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let logits = random_matrix(&mut rng, 4, 10, 3.0);
    let targets = softmax_rows(&random_matrix(&mut rng, 4, 10, 2.0), 2.0);
    let (_, grad) = distillation_loss(&logits, &targets, 2.0).unwrap();
    for i in 0..logits.data().len() {
        let f = |v: f64| {
            let mut l = logits.clone();
            l.data_mut()[i] = v;
            distillation_loss(&l, &targets, 2.0).unwrap().0
        };
        let n = central_diff(f, logits.data()[i]);
        assert!(rel_err(grad.data()[i], n) < TOL, "coord {i}: {} vs {n}", grad.data()[i]);
    }
}

#[test]
fn forward_matches_naive_matmul_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = init_model(3, 7, 5, 4, 11).unwrap();
    let x = random_matrix(&mut rng, 6, 5, 1.0);
    let logits = forward(&params, &x).unwrap().logits;

    for r in 0..6 {
        let mut a: Vec<f64> = x.row(r).to_vec();
        for (k, layer) in params.layers().iter().enumerate() {
            let mut z = vec![0.0; layer.fan_out()];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = layer.bias[j];
                for (i, ai) in a.iter().enumerate() {
                    *zj += ai * layer.weights.get(i, j);
                }
            }
            if k + 1 < params.depth() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        for (c, v) in a.iter().enumerate() {
            assert!((logits.get(r, c) - v).abs() <= 1e-12);
        }
    }
}

/// He-initialized weights plus nonzero random biases, so no pre-activation
/// sits exactly on the ReLU kink.
pub fn random_model(rng: &mut ChaCha8Rng, depth: usize, width: usize, in_dim: usize, classes: usize) -> ModelParams {
    let mut p = init_model(depth, width, in_dim, classes, rng.gen()).unwrap();
    for l in p.layers_mut() {
        l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
    }
    p
}

/// Checks every parameter coordinate of the full objective. Returns the
/// worst relative error seen.
pub fn check_full_objective(
    params: &ModelParams,
    x: &Matrix,
    y: &[usize],
    soft: Option<&Matrix>,
    lwf: &LwfConfig,
    hyper: &Hyper,
) -> f64 {
    let (_, grads) = loss_and_grads(params, x, y, soft, lwf, hyper).unwrap();
    let analytic = grads.flatten();
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    let mut flat_idx = 0;
    let n_tensors = params.tensors().count();
    for t in 0..n_tensors {
        let len = params.tensors().nth(t).unwrap().len();
        for i in 0..len {
            let orig = params.tensors().nth(t).unwrap()[i];
            let mut eval = |v: f64| {
                probe.tensors_mut().nth(t).unwrap()[i] = v;
                let l = loss_and_grads(&probe, x, y, soft, lwf, hyper).unwrap().0;
                probe.tensors_mut().nth(t).unwrap()[i] = orig;
                l
            };
            let n = (eval(orig + H) - eval(orig - H)) / (2.0 * H);
            worst = worst.max(rel_err(analytic[flat_idx], n));
            flat_idx += 1;
        }
    }
    worst
}

#[test]
fn full_objective_gradient_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for depth in [2, 3] {
        for use_soft in [false, true] {
            for l2 in [0.0, 1e-4] {
                for lambda0 in [0.0, 1.0, 2.0] {
                    let width = rng.gen_range(2..=8);
                    let in_dim = rng.gen_range(2..=6);
                    let classes = rng.gen_range(2..=5);
                    let b = rng.gen_range(1..=4);
                    let params = random_model(&mut rng, depth, width, in_dim, classes);
                    let x = random_matrix(&mut rng, b, in_dim, 1.0);
                    let y: Vec<usize> = (0..b).map(|_| rng.gen_range(0..classes)).collect();
                    let soft = softmax_rows(&random_matrix(&mut rng, b, classes, 2.0), 1.0);
                    let lwf = LwfConfig { lambda0, temperature: 2.0, enabled: true };
                    let hyper = Hyper { l2, ..Hyper::default() };
                    let worst = check_full_objective(&params, &x, &y, use_soft.then_some(&soft), &lwf, &hyper);
                    assert!(
                        worst < TOL,
                        "depth {depth} soft {use_soft} l2 {l2} lambda0 {lambda0}: worst rel err {worst:e}"
                    );
                }
            }
        }
    }
}

#[test]
fn teacher_match_gives_zero_distillation_gradient() {
    let params = init_model(3, 6, 4, 5, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_matrix(&mut rng, 4, 4, 1.0);
    let logits = forward(&params, &x).unwrap().logits;
    let targets = softmax_rows(&logits, 2.0);
    let (_, grad) = distillation_loss(&logits, &targets, 2.0).unwrap();
    assert!(grad.data().iter().all(|g| g.abs() < 1e-9));
}

#[test]
fn total_loss_is_affine_in_lambda0() {
    let params = init_model(3, 6, 4, 5, 22).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_matrix(&mut rng, 4, 4, 1.0);
    let y = [1, 2, 0, 4];
    let soft = softmax_rows(&random_matrix(&mut rng, 4, 5, 2.0), 1.0);
    let loss = |lambda0| {
        let lwf = LwfConfig { lambda0, ..LwfConfig::default() };
        loss_and_grads(&params, &x, &y, Some(&soft), &lwf, &Hyper::default()).unwrap().0
    };
    let (l0, l1, l2) = (loss(0.0), loss(1.0), loss(2.0));
    assert!(((l2 - l1) - (l1 - l0)).abs() < 1e-9);
}

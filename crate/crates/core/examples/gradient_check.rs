//! Compare analytic gradients of the full objective (cross-entropy,
//! distillation and L2) with central finite differences.
//!
//! cargo run --example gradient_check

use fedlwf::nn::{loss_and_grads, Hyper};
use fedlwf::tensor::{softmax_rows, Matrix};
use fedlwf::{init_model, LwfConfig};

fn main() -> fedlwf::Result<()> {
    let mut params = init_model(3, 6, 4, 5, 3)?;
    for (i, l) in params.layers_mut().iter_mut().enumerate() {
        for (j, b) in l.bias.iter_mut().enumerate() {
            *b = 0.1 * ((i + j) as f64).sin();
        }
    }
    let x = Matrix::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.37).cos()).collect())?;
    let y = [0, 3, 4];
    let teacher_logits = Matrix::from_vec(3, 5, (0..15).map(|i| (i as f64 * 0.91).sin()).collect())?;
    let lwf = LwfConfig { lambda0: 1.5, temperature: 2.0, enabled: true };
    let soft = softmax_rows(&teacher_logits, lwf.temperature);
    let hyper = Hyper::default();

    let (loss, grads) = loss_and_grads(&params, &x, &y, Some(&soft), &lwf, &hyper)?;
    let analytic = grads.flatten();
    println!("loss {loss:.6}, {} parameters", analytic.len());

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    let n_tensors = params.tensors().count();
    for t in 0..n_tensors {
        let len = params.tensors().nth(t).unwrap().len();
        for i in 0..len {
            let orig = params.tensors().nth(t).unwrap()[i];
            let mut at = |v: f64| {
                params.tensors_mut().nth(t).unwrap()[i] = v;
                let l = loss_and_grads(&params, &x, &y, Some(&soft), &lwf, &hyper).map(|r| r.0);
                params.tensors_mut().nth(t).unwrap()[i] = orig;
                l
            };
            let numeric = (at(orig + h)? - at(orig - h)?) / (2.0 * h);
            let a = analytic[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            k += 1;
        }
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}

//! Dense ReLU network: initialization, forward pass, losses, analytic
//! gradients and Adam.
//!
//! Weights are stored `[fan_in × fan_out]` so a layer computes `z = x·W + b`
//! for a row-major batch `x`. Hidden layers apply ReLU; the last layer is
//! affine and yields pre-softmax logits.

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::continual::{distillation_loss, LwfConfig};
use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tensor::{log_softmax_into, softmax_into, Matrix};

/// One affine layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[fan_in × fan_out]`
    pub weights: Matrix,
    /// `[fan_out]`
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn zeros_like(&self) -> Dense {
        Dense {
            weights: Matrix::zeros(self.fan_in(), self.fan_out()),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

/// Ordered layer stack. Also used as the gradient container and as the
/// Adam moment buffers, since all three share one shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    layers: Vec<Dense>,
}

impl ModelParams {
    /// Validates the dimension chain.
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::config("depth", "need at least 2 layers"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::shape(
                    format!("layer {k} bias"),
                    l.fan_out(),
                    l.bias.len(),
                ));
            }
            if k > 0 && layers[k - 1].fan_out() != l.fan_in() {
                return Err(Error::shape(
                    format!("layer {k} fan_in"),
                    layers[k - 1].fan_out(),
                    l.fan_in(),
                ));
            }
        }
        Ok(ModelParams { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn n_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    /// Dimension chain `[in_dim, h1, …, n_classes]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Dense::fan_out))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    /// Errors unless `other` has the same dimension chain.
    pub fn check_compatible(&self, other: &ModelParams, context: &str) -> Result<()> {
        let (a, b) = (self.dims(), other.dims());
        if a != b {
            return Err(Error::shape(context, format!("{a:?}"), format!("{b:?}")));
        }
        Ok(())
    }

    /// Flat views of every tensor in a fixed order (per layer: weights, bias).
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            let Dense { weights, bias } = l;
            [weights.data_mut(), bias.as_mut_slice()]
        })
    }

    /// All parameters concatenated in [`tensors`](Self::tensors) order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().flatten().copied().collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().flatten().all(|v| v.is_finite())
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &ModelParams) -> bool {
        self.dims() == other.dims()
            && self
                .tensors()
                .flatten()
                .zip(other.tensors().flatten())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers.iter().map(|l| l.weights.sq_norm()).sum()
    }
}

/// He-uniform weights `U(−√(6/fan_in), √(6/fan_in))`, zero biases.
///
/// `depth` counts every weight layer, output layer included, so `depth = 3`
/// is `in_dim → width → width → n_classes`.
pub fn init_model(
    depth: usize,
    width: usize,
    in_dim: usize,
    n_classes: usize,
    seed: u64,
) -> Result<ModelParams> {
    if depth < 2 {
        return Err(Error::config("depth", format!("must be >= 2, got {depth}")));
    }
    if width < 1 {
        return Err(Error::config("width", "must be >= 1"));
    }
    if in_dim < 1 {
        return Err(Error::config("in_dim", "must be >= 1"));
    }
    if n_classes < 2 {
        return Err(Error::config(
            "n_classes",
            format!("must be >= 2, got {n_classes}"),
        ));
    }
    let mut rng = rng_from(seed);
    let mut layers = Vec::with_capacity(depth);
    for k in 0..depth {
        let fan_in = if k == 0 { in_dim } else { width };
        let fan_out = if k + 1 == depth { n_classes } else { width };
        let limit = (6.0 / fan_in as f64).sqrt();
        let dist = Uniform::new(-limit, limit);
        let w = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
        layers.push(Dense {
            weights: Matrix::from_vec(fan_in, fan_out, w)?,
            bias: vec![0.0; fan_out],
        });
    }
    ModelParams::new(layers)
}

/// Everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input batch; `activations[k]` is the ReLU
    /// output of hidden layer `k − 1`.
    pub activations: Vec<Matrix>,
    pub logits: Matrix,
}

pub fn forward(params: &ModelParams, batch: &Matrix) -> Result<ForwardTrace> {
    if batch.cols() != params.in_dim() {
        return Err(Error::shape(
            "forward input dim",
            params.in_dim(),
            batch.cols(),
        ));
    }
    let depth = params.depth();
    let mut activations = Vec::with_capacity(depth);
    activations.push(batch.clone());
    for (k, layer) in params.layers.iter().enumerate() {
        let mut z = activations[k].matmul(&layer.weights)?;
        z.add_row_vector(&layer.bias)?;
        if k + 1 == depth {
            return Ok(ForwardTrace {
                activations,
                logits: z,
            });
        }
        z.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
        activations.push(z);
    }
    unreachable!("depth >= 2")
}

/// Logits only.
pub fn predict_logits(params: &ModelParams, batch: &Matrix) -> Result<Matrix> {
    forward(params, batch).map(|t| t.logits)
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits,
/// `(softmax − onehot) / B`.
pub fn softmax_xent(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (b, c) = logits.shape();
    if labels.len() != b {
        return Err(Error::shape("softmax_xent labels", b, labels.len()));
    }
    let mut grad = Matrix::zeros(b, c);
    let mut logp = vec![0.0; c];
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for (r, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Data {
                row: r,
                col: None,
                message: format!("label {y} out of range [0, {c})"),
            });
        }
        let row = logits.row(r);
        log_softmax_into(row, &mut logp);
        loss -= logp[y];
        let g = grad.row_mut(r);
        softmax_into(row, g);
        g[y] -= 1.0;
        g.iter_mut().for_each(|x| *x *= inv_b);
    }
    Ok((loss * inv_b, grad))
}

/// Backpropagates `dlogits` through the trace. Returns data-term gradients
/// only; regularizers are added by the caller.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, dlogits: Matrix) -> Result<ModelParams> {
    let depth = params.depth();
    let mut grads: Vec<Dense> = Vec::with_capacity(depth);
    let mut delta = dlogits;
    for k in (0..depth).rev() {
        let input = &trace.activations[k];
        let dw = input.t_matmul(&delta)?;
        let db = delta.sum_rows();
        if k > 0 {
            let mut dprev = delta.matmul_t(&params.layers[k].weights)?;
            // ReLU mask; derivative at 0 taken as 0.
            for (d, &a) in dprev.data_mut().iter_mut().zip(input.data()) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = dprev;
        }
        grads.push(Dense {
            weights: dw,
            bias: db,
        });
    }
    grads.reverse();
    Ok(ModelParams { layers: grads })
}

/// Optimizer and weight-decay settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coefficient of the `½‖W‖²` penalty on weight matrices.
    pub l2: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 1e-4,
        }
    }
}

impl Hyper {
    /// `lr = 0` is accepted as a degenerate no-learning setting.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("train.lr", format!("must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("train.beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("train.beta2", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("train.eps", "must be > 0"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::config("train.l2", "must be >= 0"));
        }
        Ok(())
    }
}

/// Total objective
/// `L_new + λ₀·L_distill(T) + l2·½‖W‖²` and its exact gradient.
///
/// The distillation term is active only when `soft_targets` is given,
/// `lwf.enabled` is set and `λ₀ ≠ 0`; otherwise it is skipped entirely, so
/// the result is bitwise identical to the plain cross-entropy path.
pub fn loss_and_grads(
    params: &ModelParams,
    batch: &Matrix,
    labels: &[usize],
    soft_targets: Option<&Matrix>,
    lwf: &LwfConfig,
    hyper: &Hyper,
) -> Result<(f64, ModelParams)> {
    let (loss, grads, _) = loss_grads_logits(params, batch, labels, soft_targets, lwf, hyper)?;
    Ok((loss, grads))
}

/// As [`loss_and_grads`], also returning the batch logits.
pub(crate) fn loss_grads_logits(
    params: &ModelParams,
    batch: &Matrix,
    labels: &[usize],
    soft_targets: Option<&Matrix>,
    lwf: &LwfConfig,
    hyper: &Hyper,
) -> Result<(f64, ModelParams, Matrix)> {
    let trace = forward(params, batch)?;
    let (mut loss, mut dlogits) = softmax_xent(&trace.logits, labels)?;

    if let Some(targets) = soft_targets {
        if targets.shape() != trace.logits.shape() {
            return Err(Error::shape(
                "soft targets vs logits",
                format!("{:?}", trace.logits.shape()),
                format!("{:?}", targets.shape()),
            ));
        }
        check_rows_normalized(targets)?;
        if lwf.enabled && lwf.lambda0 != 0.0 {
            let (old, dold) = distillation_loss(&trace.logits, targets, lwf.temperature)?;
            loss += lwf.lambda0 * old;
            for (d, g) in dlogits.data_mut().iter_mut().zip(dold.data()) {
                *d += lwf.lambda0 * g;
            }
        }
    }

    let mut grads = backward(params, &trace, dlogits)?;

    if hyper.l2 != 0.0 {
        loss += 0.5 * hyper.l2 * params.weight_sq_norm();
        for (g, p) in grads.layers.iter_mut().zip(&params.layers) {
            for (gw, &w) in g.weights.data_mut().iter_mut().zip(p.weights.data()) {
                *gw += hyper.l2 * w;
            }
        }
    }
    Ok((loss, grads, trace.logits))
}

pub(crate) fn check_rows_normalized(m: &Matrix) -> Result<()> {
    for r in 0..m.rows() {
        let s: f64 = m.row(r).iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Data {
                row: r,
                col: None,
                message: format!("soft-target row sums to {s}, expected 1"),
            });
        }
    }
    Ok(())
}

/// Adam moment buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One Adam step with bias correction. Inputs are left untouched.
pub fn adam_step(
    params: &ModelParams,
    grads: &ModelParams,
    state: &AdamState,
    hyper: &Hyper,
) -> Result<(ModelParams, AdamState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    adam_step_in_place(&mut p, grads, &mut s, hyper)?;
    Ok((p, s))
}

pub(crate) fn adam_step_in_place(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    hyper: &Hyper,
) -> Result<()> {
    params.check_compatible(grads, "adam_step grads")?;
    params.check_compatible(&state.m, "adam_step first moment")?;
    params.check_compatible(&state.v, "adam_step second moment")?;

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let (b1, b2) = (hyper.beta1, hyper.beta2);

    let tensors = params
        .tensors_mut()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().zip(state.v.tensors_mut()));
    for ((p, g), (m, v)) in tensors {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_from(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn init_builds_width_chain() {
        let p = init_model(10, 100, 512, 10, 7).unwrap();
        assert_eq!(p.depth(), 10);
        let mut want = vec![512];
        want.extend(std::iter::repeat(100).take(9));
        want.push(10);
        assert_eq!(p.dims(), want);
        assert_eq!(p.param_count(), 512 * 100 + 100 + 8 * (100 * 100 + 100) + 100 * 10 + 10);
        assert_eq!(p.param_count(), 133_110);
    }

    #[test]
    fn init_biases_are_zero_and_weights_in_range() {
        let p = init_model(2, 1, 1, 2, 0).unwrap();
        for l in p.layers() {
            assert!(l.bias.iter().all(|&b| b == 0.0));
            let lim = (6.0 / l.fan_in() as f64).sqrt();
            assert!(l.weights.data().iter().all(|w| w.abs() <= lim));
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model(3, 8, 5, 4, 42).unwrap();
        let b = init_model(3, 8, 5, 4, 42).unwrap();
        assert!(a.bit_eq(&b));
        assert!(!a.bit_eq(&init_model(3, 8, 5, 4, 43).unwrap()));
    }

    #[test]
    fn init_rejects_bad_dims_naming_field() {
        for (args, field) in [
            ((1, 4, 4, 2), "depth"),
            ((2, 0, 4, 2), "width"),
            ((2, 4, 0, 2), "in_dim"),
            ((2, 4, 4, 1), "n_classes"),
        ] {
            match init_model(args.0, args.1, args.2, args.3, 0) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_batch_on_zero_bias_model_gives_zero_logits() {
        let p = init_model(3, 6, 4, 5, 1).unwrap();
        let logits = predict_logits(&p, &Matrix::zeros(3, 4)).unwrap();
        assert!(logits.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_row_matches_row_inside_batch() {
        let p = init_model(3, 16, 8, 10, 3).unwrap();
        let batch = random_matrix(32, 8, 9);
        let all = predict_logits(&p, &batch).unwrap();
        let one = predict_logits(&p, &batch.gather_rows(&[17])).unwrap();
        assert_eq!(one.row(0), all.row(17));
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let p = init_model(2, 4, 8, 3, 0).unwrap();
        assert!(matches!(
            forward(&p, &Matrix::zeros(2, 7)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn xent_of_zero_logits_is_ln_c() {
        let (loss, _) = softmax_xent(&Matrix::zeros(3, 10), &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((loss - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn xent_saturated_logits_do_not_overflow() {
        let logits = Matrix::from_rows(&[vec![1000.0, 0.0]]).unwrap();
        let (loss, grad) = softmax_xent(&logits, &[0]).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-300);
        assert!(grad.all_finite());
    }

    #[test]
    fn xent_rejects_out_of_range_label_with_row() {
        match softmax_xent(&Matrix::zeros(3, 4), &[0, 1, 4]) {
            Err(Error::Data { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn soft_target_shape_mismatch_is_shape_error() {
        let p = init_model(2, 4, 3, 5, 0).unwrap();
        let x = random_matrix(2, 3, 1);
        let soft = Matrix::filled(2, 4, 0.25);
        let r = loss_and_grads(&p, &x, &[0, 1], Some(&soft), &LwfConfig::default(), &Hyper::default());
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn unnormalized_soft_targets_rejected() {
        let p = init_model(2, 4, 3, 5, 0).unwrap();
        let x = random_matrix(2, 3, 1);
        let soft = Matrix::filled(2, 5, 0.3);
        let r = loss_and_grads(&p, &x, &[0, 1], Some(&soft), &LwfConfig::default(), &Hyper::default());
        assert!(matches!(r, Err(Error::Data { .. })));
    }

    #[test]
    fn no_soft_targets_no_l2_equals_plain_xent() {
        let p = init_model(3, 6, 4, 5, 11).unwrap();
        let x = random_matrix(4, 4, 2);
        let y = [0, 3, 4, 1];
        let hyper = Hyper { l2: 0.0, ..Hyper::default() };
        let (loss, _) = loss_and_grads(&p, &x, &y, None, &LwfConfig::default(), &hyper).unwrap();
        let (xent, _) = softmax_xent(&predict_logits(&p, &x).unwrap(), &y).unwrap();
        assert_eq!(loss.to_bits(), xent.to_bits());
    }

    #[test]
    fn zero_lambda_grads_bitwise_equal_absent_targets() {
        let p = init_model(3, 6, 4, 5, 11).unwrap();
        let x = random_matrix(4, 4, 2);
        let y = [0, 3, 4, 1];
        let soft = Matrix::filled(4, 5, 0.2);
        let lwf = LwfConfig { lambda0: 0.0, ..LwfConfig::default() };
        let hyper = Hyper::default();
        let (l1, g1) = loss_and_grads(&p, &x, &y, Some(&soft), &lwf, &hyper).unwrap();
        let (l2, g2) = loss_and_grads(&p, &x, &y, None, &lwf, &hyper).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert!(g1.bit_eq(&g2));
    }

    #[test]
    fn adam_zero_grads_leave_params_unchanged() {
        let p = init_model(3, 5, 4, 3, 5).unwrap();
        let s = AdamState::new(&p);
        let (p2, s2) = adam_step(&p, &p.zeros_like(), &s, &Hyper::default()).unwrap();
        assert!(p2.bit_eq(&p));
        assert_eq!(s2.t, 1);
        assert_eq!(s.t, 0, "input state must not be mutated");
    }

    #[test]
    fn adam_first_step_moves_by_lr_over_one_plus_eps() {
        let p = init_model(2, 1, 1, 2, 0).unwrap();
        let mut g = p.zeros_like();
        g.tensors_mut().for_each(|t| t.fill(1.0));
        let hyper = Hyper::default();
        let (p2, _) = adam_step(&p, &g, &AdamState::new(&p), &hyper).unwrap();
        let step = 0.001 / (1.0 + 1e-8);
        for (a, b) in p.flatten().iter().zip(p2.flatten()) {
            assert!(((a - b) - step).abs() < 1e-15, "{} vs {step}", a - b);
        }
    }

    #[test]
    fn adam_two_steps_match_scalar_oracle() {
        let p = init_model(2, 2, 2, 2, 3).unwrap();
        let mut g = p.zeros_like();
        g.tensors_mut().flatten().enumerate().for_each(|(i, x)| *x = 0.3 - 0.1 * i as f64);
        let hyper = Hyper { lr: 0.01, ..Hyper::default() };
        let (p1, s1) = adam_step(&p, &g, &AdamState::new(&p), &hyper).unwrap();
        let (p2, _) = adam_step(&p1, &g, &s1, &hyper).unwrap();

        // Scalar Adam written out step by step.
        for ((&x0, &gi), &x2) in p.flatten().iter().zip(&g.flatten()).zip(&p2.flatten()) {
            let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.01f64);
            let (mut x, mut m, mut v) = (x0, 0.0f64, 0.0f64);
            for t in 1..=2 {
                m = b1 * m + (1.0 - b1) * gi;
                v = b2 * v + (1.0 - b2) * gi * gi;
                let mh = m / (1.0 - b1.powi(t));
                let vh = v / (1.0 - b2.powi(t));
                x -= lr * mh / (vh.sqrt() + eps);
            }
            assert!((x - x2).abs() <= 1e-15);
        }
    }

    #[test]
    fn adam_rejects_mismatched_shapes() {
        let p = init_model(2, 3, 4, 2, 0).unwrap();
        let q = init_model(2, 5, 4, 2, 0).unwrap();
        assert!(matches!(
            adam_step(&p, &q, &AdamState::new(&p), &Hyper::default()),
            Err(Error::Shape { .. })
        ));
    }
}

//! Minimal dense-network engine.
//!
//! Networks are ordered layer lists: affine layers with relu/tanh/linear
//! activations, plus parameterless sign layers that binarize to {−1, 1} in the
//! forward pass and let gradients through unchanged in the backward pass (the
//! straight-through estimator). Reverse-mode gradients are exact for the
//! relu/tanh/linear chain and are verified against central finite differences
//! in the test suite.

pub mod checkpoint;

use crate::scalar::Scalar;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("input width {got} does not match network input width {want}")]
    InputWidth { want: usize, got: usize },
    #[error("upstream gradient width {got} does not match network output width {want}")]
    GradWidth { want: usize, got: usize },
    #[error("tape batch size {tape} does not match gradient batch size {grad}")]
    BatchMismatch { tape: usize, grad: usize },
    #[error("tape is stale: parameters changed since the forward pass")]
    StaleTape,
    #[error("network must contain at least one dense layer")]
    Empty,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Activation applied after a dense layer's affine map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Linear => z,
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's *output* value.
    #[inline]
    fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Sign with the x ≥ 0 convention: binarize(0) = 1.
#[inline]
pub fn sign_value<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Elementwise binarization to {−1, 1}.
pub fn binarize<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| sign_value(v)).collect()
}

/// Straight-through backward of [`binarize`]: the identity Jacobian.
pub fn binarize_backward<T: Scalar>(upstream: &[T]) -> Vec<T> {
    upstream.to_vec()
}

#[derive(Clone, Debug)]
pub enum Layer<T: Scalar> {
    /// Affine map plus activation; `weights` has shape (in, out).
    Dense {
        weights: Array2<T>,
        biases: Array1<T>,
        activation: Activation,
    },
    /// Parameterless binarization with straight-through backward.
    Sign,
}

impl<T: Scalar> Layer<T> {
    fn out_dim(&self, in_dim: usize) -> usize {
        match self {
            Layer::Dense { weights, .. } => weights.ncols(),
            Layer::Sign => in_dim,
        }
    }
}

/// Architecture element for [`DenseNetwork::new`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { width: usize, activation: Activation },
    Sign,
}

impl LayerSpec {
    pub fn dense(width: usize, activation: Activation) -> Self {
        LayerSpec::Dense { width, activation }
    }

    pub fn sign() -> Self {
        LayerSpec::Sign
    }
}

/// Per-layer RMSProp accumulators (dense layers only).
#[derive(Clone, Debug)]
pub(crate) struct RmsPropState<T: Scalar> {
    pub(crate) vw: Array2<T>,
    pub(crate) vb: Array1<T>,
}

/// Cached forward-pass values consumed by [`DenseNetwork::backward`].
///
/// A tape is only valid for the parameter state that produced it; parameter
/// updates invalidate outstanding tapes.
pub struct Tape<T: Scalar> {
    version: u64,
    input: Array2<T>,
    outputs: Vec<Array2<T>>,
}

impl<T: Scalar> Tape<T> {
    /// Output of layer `idx` recorded during the forward pass.
    pub fn layer_output(&self, idx: usize) -> &Array2<T> {
        &self.outputs[idx]
    }
}

/// Parameter gradients aligned with the network's dense layers.
#[derive(Clone, Debug)]
pub struct Gradients<T: Scalar> {
    layers: Vec<Option<(Array2<T>, Array1<T>)>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient pair (dW, db) of dense layer `idx`, None for sign layers.
    pub fn layer(&self, idx: usize) -> Option<&(Array2<T>, Array1<T>)> {
        self.layers[idx].as_ref()
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.layers.iter_mut().flatten() {
            g.0.mapv_inplace(|v| v * factor);
            g.1.mapv_inplace(|v| v * factor);
        }
    }

    pub fn add(&mut self, other: &Gradients<T>) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            match (a, b) {
                (Some(ga), Some(gb)) => {
                    ga.0 += &gb.0;
                    ga.1 += &gb.1;
                }
                (None, None) => {}
                _ => panic!("gradient layouts differ"),
            }
        }
    }
}

/// Feed-forward network with dense and sign layers plus RMSProp state.
#[derive(Clone, Debug)]
pub struct DenseNetwork<T: Scalar> {
    input_dim: usize,
    layers: Vec<Layer<T>>,
    opt: Vec<Option<RmsPropState<T>>>,
    version: u64,
}

impl<T: Scalar> DenseNetwork<T> {
    /// Build a network with Glorot-uniform weights (±√(6/(fan_in+fan_out)))
    /// and zero biases.
    pub fn new<R: Rng>(input_dim: usize, specs: &[LayerSpec], rng: &mut R) -> Self {
        assert!(input_dim > 0, "input width must be positive");
        let mut layers = Vec::with_capacity(specs.len());
        let mut opt = Vec::with_capacity(specs.len());
        let mut in_dim = input_dim;
        for spec in specs {
            match *spec {
                LayerSpec::Dense { width, activation } => {
                    assert!(width > 0, "layer width must be positive");
                    let limit = (6.0 / (in_dim + width) as f64).sqrt();
                    let weights = Array2::from_shape_fn((in_dim, width), |_| {
                        T::from_f64(rng.random_range(-limit..limit))
                    });
                    let biases = Array1::zeros(width);
                    opt.push(Some(RmsPropState {
                        vw: Array2::zeros((in_dim, width)),
                        vb: Array1::zeros(width),
                    }));
                    layers.push(Layer::Dense {
                        weights,
                        biases,
                        activation,
                    });
                    in_dim = width;
                }
                LayerSpec::Sign => {
                    opt.push(None);
                    layers.push(Layer::Sign);
                }
            }
        }
        assert!(!layers.is_empty(), "network must have at least one layer");
        Self {
            input_dim,
            layers,
            opt,
            version: 0,
        }
    }

    pub(crate) fn from_parts(
        input_dim: usize,
        layers: Vec<Layer<T>>,
        opt: Vec<Option<RmsPropState<T>>>,
    ) -> Self {
        Self {
            input_dim,
            layers,
            opt,
            version: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        let mut dim = self.input_dim;
        for layer in &self.layers {
            dim = layer.out_dim(dim);
        }
        dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, idx: usize) -> &Layer<T> {
        &self.layers[idx]
    }

    pub(crate) fn opt_state(&self, idx: usize) -> Option<&RmsPropState<T>> {
        self.opt[idx].as_ref()
    }

    /// Inference without recording a tape.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>, NeuralError> {
        if x.ncols() != self.input_dim {
            return Err(NeuralError::InputWidth {
                want: self.input_dim,
                got: x.ncols(),
            });
        }
        let mut cur = x.to_owned();
        for layer in &self.layers {
            cur = apply_layer(layer, &cur);
        }
        Ok(cur)
    }

    /// Forward pass recording everything [`DenseNetwork::backward`] needs.
    pub fn forward_tape(&self, x: ArrayView2<T>) -> Result<(Array2<T>, Tape<T>), NeuralError> {
        if x.ncols() != self.input_dim {
            return Err(NeuralError::InputWidth {
                want: self.input_dim,
                got: x.ncols(),
            });
        }
        let input = x.to_owned();
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = input.clone();
        for layer in &self.layers {
            cur = apply_layer(layer, &cur);
            outputs.push(cur.clone());
        }
        Ok((
            cur,
            Tape {
                version: self.version,
                input,
                outputs,
            },
        ))
    }

    /// Exact reverse-mode gradients for the forward pass recorded in `tape`.
    ///
    /// Sign layers use the straight-through estimator. Returns the parameter
    /// gradients and the gradient with respect to the network input (which is
    /// the upstream gradient for a network feeding this one).
    pub fn backward(
        &self,
        tape: &Tape<T>,
        d_out: ArrayView2<T>,
    ) -> Result<(Gradients<T>, Array2<T>), NeuralError> {
        if tape.version != self.version {
            return Err(NeuralError::StaleTape);
        }
        if d_out.ncols() != self.output_dim() {
            return Err(NeuralError::GradWidth {
                want: self.output_dim(),
                got: d_out.ncols(),
            });
        }
        if d_out.nrows() != tape.input.nrows() {
            return Err(NeuralError::BatchMismatch {
                tape: tape.input.nrows(),
                grad: d_out.nrows(),
            });
        }
        let mut grads = vec![None; self.layers.len()];
        let mut d_cur = d_out.to_owned();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            match layer {
                Layer::Dense {
                    weights,
                    activation,
                    ..
                } => {
                    let y = &tape.outputs[idx];
                    // d_z = d_y ⊙ act'(y)
                    d_cur.zip_mut_with(y, |d, &yv| *d = *d * activation.grad_from_output(yv));
                    let x_in = if idx == 0 {
                        &tape.input
                    } else {
                        &tape.outputs[idx - 1]
                    };
                    let dw = x_in.t().dot(&d_cur);
                    let db = d_cur.sum_axis(Axis(0));
                    grads[idx] = Some((dw, db));
                    d_cur = d_cur.dot(&weights.t());
                }
                Layer::Sign => {
                    // straight-through: gradient passes unchanged
                }
            }
        }
        Ok((Gradients { layers: grads }, d_cur))
    }

    /// RMSProp update: v ← decay·v + (1−decay)·g²; p ← p − lr·g/(√v + eps).
    pub fn apply_rmsprop(&mut self, grads: &Gradients<T>, lr: T, decay: T, eps: T) {
        assert_eq!(grads.layers.len(), self.layers.len(), "gradient layout");
        let one_minus = T::one() - decay;
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            let Layer::Dense { weights, biases, .. } = layer else {
                continue;
            };
            let (dw, db) = grads.layers[idx]
                .as_ref()
                .expect("dense layer without gradients");
            let state = self.opt[idx].as_mut().expect("dense layer without opt state");
            ndarray::Zip::from(weights)
                .and(&mut state.vw)
                .and(dw)
                .for_each(|w, v, &g| {
                    *v = decay * *v + one_minus * g * g;
                    *w = *w - lr * g / (v.sqrt() + eps);
                });
            ndarray::Zip::from(biases)
                .and(&mut state.vb)
                .and(db)
                .for_each(|b, v, &g| {
                    *v = decay * *v + one_minus * g * g;
                    *b = *b - lr * g / (v.sqrt() + eps);
                });
        }
        self.version += 1;
    }

    /// Copy parameters (not optimizer state) from `src`; used for target-network
    /// refreshes. Panics on architecture mismatch.
    pub fn copy_parameters_from(&mut self, src: &DenseNetwork<T>) {
        assert_eq!(self.layers.len(), src.layers.len(), "layer count");
        for (dst, from) in self.layers.iter_mut().zip(src.layers.iter()) {
            match (dst, from) {
                (
                    Layer::Dense { weights, biases, .. },
                    Layer::Dense {
                        weights: sw,
                        biases: sb,
                        ..
                    },
                ) => {
                    weights.assign(sw);
                    biases.assign(sb);
                }
                (Layer::Sign, Layer::Sign) => {}
                _ => panic!("layer kinds differ"),
            }
        }
        self.version += 1;
    }

    /// Bitwise parameter equality (weights and biases).
    pub fn parameters_equal(&self, other: &DenseNetwork<T>) -> bool {
        if self.layers.len() != other.layers.len() {
            return false;
        }
        self.layers.iter().zip(other.layers.iter()).all(|(a, b)| {
            match (a, b) {
                (
                    Layer::Dense {
                        weights: wa,
                        biases: ba,
                        activation: aa,
                    },
                    Layer::Dense {
                        weights: wb,
                        biases: bb,
                        activation: ab,
                    },
                ) => aa == ab && wa == wb && ba == bb,
                (Layer::Sign, Layer::Sign) => true,
                _ => false,
            }
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weights, biases, .. } => weights.len() + biases.len(),
                Layer::Sign => 0,
            })
            .sum()
    }

    /// Flat parameter access in a fixed traversal order (per dense layer:
    /// weights row-major, then biases). Used by serialization and by the
    /// finite-difference oracle.
    pub fn param(&self, mut idx: usize) -> T {
        for layer in &self.layers {
            if let Layer::Dense { weights, biases, .. } = layer {
                if idx < weights.len() {
                    return weights.as_slice().expect("contiguous")[idx];
                }
                idx -= weights.len();
                if idx < biases.len() {
                    return biases[idx];
                }
                idx -= biases.len();
            }
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: T) {
        for layer in &mut self.layers {
            if let Layer::Dense { weights, biases, .. } = layer {
                if idx < weights.len() {
                    weights.as_slice_mut().expect("contiguous")[idx] = value;
                    self.version += 1;
                    return;
                }
                idx -= weights.len();
                if idx < biases.len() {
                    biases[idx] = value;
                    self.version += 1;
                    return;
                }
                idx -= biases.len();
            }
        }
        panic!("parameter index out of range");
    }

    /// Flat gradient read-out matching the [`DenseNetwork::param`] order.
    /// Iterates in logical row-major order; gradient arrays from transposed
    /// products are not always contiguous.
    pub fn grad_flat(&self, grads: &Gradients<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for (idx, layer) in self.layers.iter().enumerate() {
            if matches!(layer, Layer::Dense { .. }) {
                let (dw, db) = grads.layers[idx].as_ref().expect("dense gradients");
                out.extend(dw.iter().copied());
                out.extend(db.iter().copied());
            }
        }
        out
    }

    /// Architecture with every sign layer removed; parameters are shared
    /// copies. This is the differentiable surrogate that the straight-through
    /// estimator implicitly optimizes, used for gradient verification.
    pub fn without_sign_layers(&self) -> DenseNetwork<T> {
        let layers: Vec<Layer<T>> = self
            .layers
            .iter()
            .filter(|l| matches!(l, Layer::Dense { .. }))
            .cloned()
            .collect();
        let opt = self
            .opt
            .iter()
            .zip(self.layers.iter())
            .filter(|(_, l)| matches!(l, Layer::Dense { .. }))
            .map(|(o, _)| o.clone())
            .collect();
        DenseNetwork::from_parts(self.input_dim, layers, opt)
    }
}

fn apply_layer<T: Scalar>(layer: &Layer<T>, x: &Array2<T>) -> Array2<T> {
    match layer {
        Layer::Dense {
            weights,
            biases,
            activation,
        } => {
            let mut z = x.dot(weights);
            z += biases;
            z.mapv_inplace(|v| activation.apply(v));
            z
        }
        Layer::Sign => x.mapv(sign_value),
    }
}

/// Mean Huber loss over a batch of scalar predictions and its gradient
/// with respect to the predictions.
///
/// Per element: e²/2 for |e| ≤ δ, else δ(|e| − δ/2), with e = pred − target.
pub fn huber_loss<T: Scalar>(pred: &[T], target: &[T], delta: T) -> (T, Vec<T>) {
    assert_eq!(pred.len(), target.len(), "length mismatch");
    assert!(!pred.is_empty(), "empty batch");
    let inv_n = T::one() / T::from_f64(pred.len() as f64);
    let half = T::from_f64(0.5);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target.iter()) {
        let e = p - t;
        let a = e.abs();
        if a <= delta {
            loss = loss + half * e * e;
            grad.push(e * inv_n);
        } else {
            loss = loss + delta * (a - half * delta);
            grad.push(delta * e.signum() * inv_n);
        }
    }
    (loss * inv_n, grad)
}

/// Mean squared-error loss over a batch, kept for ablation against Huber.
pub fn squared_loss<T: Scalar>(pred: &[T], target: &[T]) -> (T, Vec<T>) {
    assert_eq!(pred.len(), target.len(), "length mismatch");
    assert!(!pred.is_empty(), "empty batch");
    let inv_n = T::one() / T::from_f64(pred.len() as f64);
    let half = T::from_f64(0.5);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target.iter()) {
        let e = p - t;
        loss = loss + half * e * e;
        grad.push(e * inv_n);
    }
    (loss * inv_n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdcheck;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn identity_linear_layer_is_identity() {
        let mut net: DenseNetwork<f64> =
            DenseNetwork::new(3, &[LayerSpec::dense(3, Activation::Linear)], &mut rng(0));
        for i in 0..3 {
            for j in 0..3 {
                net.set_param(i * 3 + j, if i == j { 1.0 } else { 0.0 });
            }
        }
        let x = array![[0.3, -1.2, 7.0]];
        let y = net.forward(x.view()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn relu_and_tanh_pointwise() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(Activation::Tanh.apply(0.0f64), 0.0);
    }

    #[test]
    fn forward_rejects_width_mismatch() {
        let net: DenseNetwork<f64> =
            DenseNetwork::new(4, &[LayerSpec::dense(2, Activation::Relu)], &mut rng(1));
        let x = Array2::<f64>::zeros((2, 3));
        assert!(matches!(
            net.forward(x.view()),
            Err(NeuralError::InputWidth { want: 4, got: 3 })
        ));
    }

    #[test]
    fn backward_rejects_stale_tape() {
        let mut net: DenseNetwork<f64> =
            DenseNetwork::new(2, &[LayerSpec::dense(2, Activation::Tanh)], &mut rng(2));
        let x = Array2::<f64>::zeros((1, 2));
        let (_, tape) = net.forward_tape(x.view()).unwrap();
        net.set_param(0, 0.123);
        let d = Array2::<f64>::ones((1, 2));
        assert!(matches!(
            net.backward(&tape, d.view()),
            Err(NeuralError::StaleTape)
        ));
    }

    #[test]
    fn binarize_contracts() {
        assert_eq!(binarize(&[0.0f64]), vec![1.0]);
        assert_eq!(binarize(&[-0.3f64]), vec![-1.0]);
        assert_eq!(binarize(&[0.7f64]), vec![1.0]);
        assert_eq!(binarize_backward(&[0.7f64]), vec![0.7]);
        assert_eq!(binarize_backward(&[0.0f64]), vec![0.0]);
        assert_eq!(binarize_backward(&[-2.0f64, 3.0]), vec![-2.0, 3.0]);
    }

    #[test]
    fn huber_reference_values() {
        let (l, _) = huber_loss(&[0.5f64], &[0.0], 1.0);
        assert_relative_eq!(l, 0.125);
        let (l, g) = huber_loss(&[2.0f64], &[0.0], 1.0);
        assert_relative_eq!(l, 1.5);
        assert_relative_eq!(g[0], 1.0); // clipped slope, batch of one
        // mean over batch
        let (l, _) = huber_loss(&[0.5f64, 2.0], &[0.0, 0.0], 1.0);
        assert_relative_eq!(l, (0.125 + 1.5) / 2.0);
    }

    #[test]
    fn rmsprop_zero_gradient_is_identity() {
        let mut net: DenseNetwork<f64> =
            DenseNetwork::new(2, &[LayerSpec::dense(2, Activation::Linear)], &mut rng(3));
        let before: Vec<f64> = (0..net.param_count()).map(|i| net.param(i)).collect();
        let x = Array2::<f64>::zeros((1, 2));
        let (_, tape) = net.forward_tape(x.view()).unwrap();
        let d = Array2::<f64>::zeros((1, 2));
        let (grads, _) = net.backward(&tape, d.view()).unwrap();
        net.apply_rmsprop(&grads, 0.001, 0.9, 1e-7);
        let after: Vec<f64> = (0..net.param_count()).map(|i| net.param(i)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn rmsprop_scalar_fixture() {
        // p = 0, v = 0, g = 1, lr = 0.001, decay = 0.9 →
        // v' = 0.1, p' = −0.001/(√0.1 + 1e−7)
        let mut net: DenseNetwork<f64> =
            DenseNetwork::new(1, &[LayerSpec::dense(1, Activation::Linear)], &mut rng(4));
        net.set_param(0, 0.0);
        net.set_param(1, 0.0);
        let grads = Gradients {
            layers: vec![Some((array![[1.0]], array![0.0]))],
        };
        net.apply_rmsprop(&grads, 0.001, 0.9, 1e-7);
        let expected = -0.001 / (0.1f64.sqrt() + 1e-7);
        assert!((net.param(0) - expected).abs() < 1e-12);
        assert_eq!(net.param(1), 0.0);
    }

    #[test]
    fn rmsprop_is_deterministic_across_copies() {
        let net: DenseNetwork<f64> = DenseNetwork::new(
            3,
            &[
                LayerSpec::dense(4, Activation::Relu),
                LayerSpec::dense(2, Activation::Linear),
            ],
            &mut rng(5),
        );
        let mut a = net.clone();
        let mut b = net;
        let x = Array2::from_shape_fn((3, 3), |(i, j)| (i + j) as f64 * 0.1);
        for net in [&mut a, &mut b] {
            let (y, tape) = net.forward_tape(x.view()).unwrap();
            let (grads, _) = net.backward(&tape, y.view()).unwrap();
            net.apply_rmsprop(&grads, 0.001, 0.9, 1e-7);
        }
        assert!(a.parameters_equal(&b));
    }

    fn loss_of<T: Scalar>(net: &DenseNetwork<T>, x: &Array2<T>, target: &[T]) -> T {
        let y = net.forward(x.view()).unwrap();
        let pred: Vec<T> = y.iter().copied().collect();
        huber_loss(&pred, target, T::from_f64(1.0)).0
    }

    fn grad_check(net: &mut DenseNetwork<f64>, x: &Array2<f64>, target: &[f64]) -> f64 {
        let (y, tape) = net.forward_tape(x.view()).unwrap();
        let pred: Vec<f64> = y.iter().copied().collect();
        let (_, dpred) = huber_loss(&pred, target, 1.0);
        let d_out =
            Array2::from_shape_vec((y.nrows(), y.ncols()), dpred).expect("gradient reshape");
        let (grads, _) = net.backward(&tape, d_out.view()).unwrap();
        let analytic = net.grad_flat(&grads);

        let n = net.param_count();
        let numeric = fdcheck::central_diff(
            net,
            n,
            |net, i| net.param(i),
            |net, i, v| net.set_param(i, v),
            |net| loss_of(net, x, target),
            1e-5,
        );
        fdcheck::max_rel_err(&analytic, &numeric)
    }

    #[test]
    fn gradients_match_finite_differences_plain_net() {
        let mut net: DenseNetwork<f64> = DenseNetwork::new(
            5,
            &[
                LayerSpec::dense(7, Activation::Relu),
                LayerSpec::dense(6, Activation::Tanh),
                LayerSpec::dense(4, Activation::Linear),
            ],
            &mut rng(6),
        );
        let mut r = rng(7);
        let x = Array2::from_shape_fn((3, 5), |_| r.random_range(-1.0..1.0));
        let target: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let err = grad_check(&mut net, &x, &target);
        assert!(err < 1e-4, "max relative error {}", err);
    }

    #[test]
    fn gradients_match_finite_differences_binary_head_surrogate() {
        // Eq-16-style head appended to a small trunk. Sign is treated as
        // identity in the analytic backward AND in the surrogate the oracle
        // differentiates, so both nets share parameters.
        let full: DenseNetwork<f64> = DenseNetwork::new(
            4,
            &[
                LayerSpec::dense(5, Activation::Relu),
                LayerSpec::dense(3, Activation::Linear),
                LayerSpec::dense(6, Activation::Tanh), // pre-binary layer
                LayerSpec::sign(),
            ],
            &mut rng(8),
        );
        let mut surrogate = full.without_sign_layers();
        assert_eq!(surrogate.param_count(), full.param_count());

        let mut r = rng(9);
        let x = Array2::from_shape_fn((4, 4), |_| r.random_range(-1.0..1.0));
        let target: Vec<f64> = (0..24).map(|_| r.random_range(-1.0..1.0)).collect();
        let err = grad_check(&mut surrogate, &x, &target);
        assert!(err < 1e-4, "max relative error {}", err);

        // the full head still emits exactly ±1
        let y = full.forward(x.view()).unwrap();
        assert!(y.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn ste_composition_matches_headless_gradient_under_linear_readout() {
        // With a fixed linear functional downstream, the gradient w.r.t. the
        // pre-binary layer is identical with and without the sign layer.
        let with_sign: DenseNetwork<f64> = DenseNetwork::new(
            3,
            &[LayerSpec::dense(4, Activation::Tanh), LayerSpec::sign()],
            &mut rng(10),
        );
        let without = with_sign.without_sign_layers();
        let x = array![[0.2, -0.4, 0.9], [1.4, 0.0, -0.3]];
        let readout = Array2::from_elem((2, 4), 0.37);

        let (_, tape_a) = with_sign.forward_tape(x.view()).unwrap();
        let (ga, _) = with_sign.backward(&tape_a, readout.view()).unwrap();
        let (_, tape_b) = without.forward_tape(x.view()).unwrap();
        let (gb, _) = without.backward(&tape_b, readout.view()).unwrap();
        assert_eq!(with_sign.grad_flat(&ga), without.grad_flat(&gb));
    }

    #[test]
    fn zero_weight_binary_head_emits_all_ones() {
        let mut net: DenseNetwork<f64> = DenseNetwork::new(
            2,
            &[LayerSpec::dense(3, Activation::Tanh), LayerSpec::sign()],
            &mut rng(11),
        );
        for i in 0..net.param_count() {
            net.set_param(i, 0.0);
        }
        let x = array![[0.5, -0.5]];
        let y = net.forward(x.view()).unwrap();
        assert!(y.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_upstream_gradient_yields_zero_parameter_gradients() {
        let net: DenseNetwork<f64> = DenseNetwork::new(
            3,
            &[
                LayerSpec::dense(4, Activation::Tanh),
                LayerSpec::dense(2, Activation::Linear),
            ],
            &mut rng(12),
        );
        let x = Array2::from_elem((2, 3), 0.4);
        let (_, tape) = net.forward_tape(x.view()).unwrap();
        let d = Array2::<f64>::zeros((2, 2));
        let (grads, d_in) = net.backward(&tape, d.view()).unwrap();
        assert!(net.grad_flat(&grads).iter().all(|&g| g == 0.0));
        assert!(d_in.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn batch_gradient_is_sum_of_per_sample_gradients() {
        let net: DenseNetwork<f64> = DenseNetwork::new(
            3,
            &[
                LayerSpec::dense(5, Activation::Relu),
                LayerSpec::dense(2, Activation::Linear),
            ],
            &mut rng(13),
        );
        let mut r = rng(14);
        let x = Array2::from_shape_fn((4, 3), |_| r.random_range(-1.0..1.0));
        let d = Array2::from_shape_fn((4, 2), |_| r.random_range(-1.0..1.0));

        let (_, tape) = net.forward_tape(x.view()).unwrap();
        let (batch_grads, _) = net.backward(&tape, d.view()).unwrap();

        let mut acc: Option<Gradients<f64>> = None;
        for b in 0..4 {
            let xb = x.row(b).insert_axis(Axis(0)).to_owned();
            let db = d.row(b).insert_axis(Axis(0)).to_owned();
            let (_, t) = net.forward_tape(xb.view()).unwrap();
            let (g, _) = net.backward(&t, db.view()).unwrap();
            match &mut acc {
                None => acc = Some(g),
                Some(a) => a.add(&g),
            }
        }
        let summed = net.grad_flat(&acc.unwrap());
        let batch = net.grad_flat(&batch_grads);
        for (a, b) in batch.iter().zip(summed.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_is_pure() {
        let net: DenseNetwork<f64> = DenseNetwork::new(
            4,
            &[
                LayerSpec::dense(6, Activation::Tanh),
                LayerSpec::dense(3, Activation::Linear),
            ],
            &mut rng(15),
        );
        let mut r = rng(16);
        let x = Array2::from_shape_fn((5, 4), |_| r.random_range(-2.0..2.0));
        let y1 = net.forward(x.view()).unwrap();
        let y2 = net.forward(x.view()).unwrap();
        assert_eq!(y1, y2);
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{config_err, Result};
use crate::scalar::{gemm, Scalar, Strides};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation output; relu at 0 gives 0.
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Feed-forward network with linear output and a flat parameter vector.
///
/// Parameters are laid out layer by layer: the weight matrix (out × in,
/// row-major) followed by the bias vector. Hidden layers apply their
/// activation; with `layer_norm_first` the first hidden pre-activation is
/// normalized (no gain/bias) before its activation.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<T> {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    layer_norm_first: bool,
    params: Vec<T>,
}

/// Intermediates kept from a batched forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    /// `inputs[l]` feeds layer `l`; `inputs[0]` is the network input.
    inputs: Vec<Matrix<T>>,
    norm: Option<NormCache<T>>,
    output: Matrix<T>,
}

#[derive(Clone, Debug)]
struct NormCache<T> {
    normalized: Matrix<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &Matrix<T> {
        &self.output
    }

    pub fn input(&self) -> &Matrix<T> {
        &self.inputs[0]
    }
}

/// Parameter and input gradients of `⟨upstream, forward(input)⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub params: Vec<T>,
    pub input: Vec<T>,
}

pub fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Scalar> DenseNet<T> {
    /// Zero-initialised network; every hidden layer uses `activation`.
    pub fn zeros(sizes: &[usize], activation: Activation, layer_norm_first: bool) -> Result<Self> {
        let hidden = sizes.len().saturating_sub(2);
        Self::with_activations(sizes, vec![activation; hidden], layer_norm_first)
    }

    pub fn with_activations(sizes: &[usize], activations: Vec<Activation>, layer_norm_first: bool) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(config_err("a network needs at least input and output sizes"));
        }
        if sizes.iter().any(|&n| n == 0) {
            return Err(config_err(format!("layer sizes must be positive: {sizes:?}")));
        }
        if activations.len() != sizes.len() - 2 {
            return Err(config_err(format!(
                "{} activations for {} hidden layers",
                activations.len(),
                sizes.len() - 2
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activations,
            layer_norm_first,
            params: vec![T::zero(); parameter_count(sizes)],
        })
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let (w, b) = self.layer_offsets(l);
            for p in &mut self.params[w..w + fan_in * fan_out] {
                *p = T::of(rng.random_range(-bound..bound));
            }
            for p in &mut self.params[b..b + fan_out] {
                *p = T::zero();
            }
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layer_norm_first(&self) -> bool {
        self.layer_norm_first
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(config_err(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Offsets of the weight matrix and bias vector of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let w = parameter_count(&self.sizes[..=l]);
        (w, w + self.sizes[l] * self.sizes[l + 1])
    }

    fn normalizes(&self, l: usize) -> bool {
        l == 0 && self.layer_norm_first && self.num_layers() > 1
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input.len())?;
        let x = Matrix::from_vec(1, input.len(), input.to_vec());
        Ok(self.forward_batch(&x).into_vec())
    }

    /// Gradients of `⟨upstream, forward(input)⟩` for a single sample.
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<Gradients<T>> {
        self.check_input(input.len())?;
        if upstream.len() != self.output_dim() {
            return Err(config_err(format!(
                "upstream gradient has {} entries, network outputs {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let cache = self.forward_cached(Matrix::from_vec(1, input.len(), input.to_vec()));
        let up = Matrix::from_vec(1, upstream.len(), upstream.to_vec());
        let mut params = vec![T::zero(); self.params.len()];
        let input = self
            .backward_batch(&cache, &up, &mut params, true)
            .expect("input gradient requested")
            .into_vec();
        Ok(Gradients { params, input })
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(config_err(format!(
                "input has {len} entries, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples. Panics on a column mismatch.
    pub fn forward_batch(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut h = self.affine(0, x);
        for l in 0..self.num_layers() - 1 {
            if self.normalizes(l) {
                normalize_rows(&mut h);
            }
            let act = self.activations[l];
            h.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            h = self.affine(l + 1, &h);
        }
        h
    }

    /// Forward pass keeping the intermediates needed by [`Self::backward_batch`].
    pub fn forward_cached(&self, x: Matrix<T>) -> ForwardCache<T> {
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut norm = None;
        let mut h = self.affine(0, &x);
        inputs.push(x);
        for l in 0..self.num_layers() - 1 {
            if self.normalizes(l) {
                let inv_std = normalize_rows(&mut h);
                norm = Some(NormCache {
                    normalized: h.clone(),
                    inv_std,
                });
            }
            let act = self.activations[l];
            h.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            let next = self.affine(l + 1, &h);
            inputs.push(h);
            h = next;
        }
        ForwardCache {
            inputs,
            norm,
            output: h,
        }
    }

    /// Accumulates `∂⟨upstream, output⟩/∂params` into `grads` (summed over the
    /// batch) and optionally returns the input gradient.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache<T>,
        upstream: &Matrix<T>,
        grads: &mut [T],
        want_input: bool,
    ) -> Option<Matrix<T>> {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        self.backprop(cache, upstream, Some(grads), want_input)
    }

    /// `∂⟨upstream, output⟩/∂input` without parameter gradients.
    pub fn input_gradient(&self, cache: &ForwardCache<T>, upstream: &Matrix<T>) -> Matrix<T> {
        self.backprop(cache, upstream, None, true)
            .expect("input gradient requested")
    }

    fn backprop(
        &self,
        cache: &ForwardCache<T>,
        upstream: &Matrix<T>,
        mut grads: Option<&mut [T]>,
        want_input: bool,
    ) -> Option<Matrix<T>> {
        assert_eq!(upstream.cols(), self.output_dim(), "upstream width");
        assert_eq!(upstream.rows(), cache.output.rows(), "upstream batch size");
        let batch = upstream.rows();
        let mut delta = upstream.clone();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let x = &cache.inputs[l];
            if let Some(grads) = grads.as_deref_mut() {
                // dW += δᵀ·X
                gemm(
                    n_out,
                    batch,
                    n_in,
                    T::one(),
                    delta.as_slice(),
                    Strides::transposed(n_out),
                    x.as_slice(),
                    Strides::row_major(n_in),
                    T::one(),
                    &mut grads[w_off..b_off],
                    Strides::row_major(n_in),
                );
                let db = &mut grads[b_off..b_off + n_out];
                for i in 0..batch {
                    for (g, d) in db.iter_mut().zip(delta.row(i)) {
                        *g += *d;
                    }
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let mut dx = Matrix::zeros(batch, n_in);
            gemm(
                batch,
                n_out,
                n_in,
                T::one(),
                delta.as_slice(),
                Strides::row_major(n_out),
                &self.params[w_off..b_off],
                Strides::row_major(n_in),
                T::zero(),
                dx.as_mut_slice(),
                Strides::row_major(n_in),
            );
            if l > 0 {
                let act = self.activations[l - 1];
                for (d, y) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    *d *= act.derivative_from_output(*y);
                }
                if self.normalizes(l - 1) {
                    let norm = cache.norm.as_ref().expect("layer-norm cache");
                    layer_norm_backward(&mut dx, &norm.normalized, &norm.inv_std);
                }
            }
            delta = dx;
        }
        Some(delta)
    }

    /// `x·Wᵀ + b` for layer `l`.
    fn affine(&self, l: usize, x: &Matrix<T>) -> Matrix<T> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        assert_eq!(x.cols(), n_in, "layer {l} input width");
        let (w_off, b_off) = self.layer_offsets(l);
        let bias = &self.params[b_off..b_off + n_out];
        let mut y = Matrix::zeros(x.rows(), n_out);
        for i in 0..x.rows() {
            y.row_mut(i).copy_from_slice(bias);
        }
        gemm(
            x.rows(),
            n_in,
            n_out,
            T::one(),
            x.as_slice(),
            Strides::row_major(n_in),
            &self.params[w_off..b_off],
            Strides::transposed(n_in),
            T::one(),
            y.as_mut_slice(),
            Strides::row_major(n_out),
        );
        y
    }
}

/// Normalizes each row to zero mean / unit variance in place, returning
/// `1/√(var + ε)` per row.
fn normalize_rows<T: Scalar>(h: &mut Matrix<T>) -> Vec<T> {
    let n = T::of(h.cols() as f64);
    let eps = T::of(LAYER_NORM_EPS);
    (0..h.rows())
        .map(|i| {
            let row = h.row_mut(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv
        })
        .collect()
}

/// `du = inv·(dn − mean(dn) − n·mean(dn⊙n))`, in place on `d`.
fn layer_norm_backward<T: Scalar>(d: &mut Matrix<T>, normalized: &Matrix<T>, inv_std: &[T]) {
    let n = T::of(d.cols() as f64);
    for (i, inv) in inv_std.iter().enumerate() {
        let nrow = normalized.row(i);
        let drow = d.row_mut(i);
        let mean_d = drow.iter().copied().sum::<T>() / n;
        let mean_dn = drow.iter().zip(nrow).map(|(a, b)| *a * *b).sum::<T>() / n;
        for (dv, nv) in drow.iter_mut().zip(nrow) {
            *dv = *inv * (*dv - mean_d - *nv * mean_dn);
        }
    }
}

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::numerics::{gemm, transpose_into, Mat, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Identity => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    input: usize,
    output: usize,
    activation: Activation,
    offset: usize,
}

impl LayerShape {
    fn weight_range(&self) -> Range<usize> {
        self.offset..self.offset + self.input * self.output
    }

    fn bias_range(&self) -> Range<usize> {
        let start = self.offset + self.input * self.output;
        start..start + self.output
    }
}

/// Borrowed view of one affine layer. `weight` is `output × input`, row-major.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub weight: &'a [f64],
    pub bias: &'a [f64],
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

/// Fully connected network with all parameters in one flat buffer.
///
/// Layer `l` occupies `W_l` (output×input, row-major) followed by `b_l`.
/// Optimisers, regularisers and snapshots all work on the flat buffer.
#[derive(Debug)]
pub struct DenseNet {
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    id: u64,
    version: u64,
}

impl Clone for DenseNet {
    fn clone(&self) -> Self {
        DenseNet {
            layers: self.layers.clone(),
            params: self.params.clone(),
            id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.params == other.params
    }
}

/// Activations recorded by a forward pass; consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Mat>,
    pre: Vec<Mat>,
    output: Mat,
    net_id: u64,
    version: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &Mat {
        &self.output
    }

    pub fn into_output(self) -> Mat {
        self.output
    }

    /// Input fed to layer `l` (post-activation of layer `l - 1`).
    pub fn layer_input(&self, l: usize) -> &Mat {
        &self.inputs[l]
    }

    pub fn pre_activation(&self, l: usize) -> &Mat {
        &self.pre[l]
    }

    pub fn batch_size(&self) -> usize {
        self.output.rows()
    }
}

pub struct Backward {
    pub grads: Vec<f64>,
    pub input_grad: Option<Mat>,
}

impl DenseNet {
    /// Builds a network from layer widths `[in, h1, ..., out]` with the given
    /// activation per layer.
    pub fn zeros(widths: &[usize], activations: &[Activation]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::shape("a network needs at least an input and output width"));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::shape("one activation per layer is required"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::shape("layer widths must be positive"));
        }
        let mut layers = Vec::with_capacity(activations.len());
        let mut offset = 0;
        for (w, &activation) in widths.windows(2).zip(activations) {
            layers.push(LayerShape {
                input: w[0],
                output: w[1],
                activation,
                offset,
            });
            offset += w[0] * w[1] + w[1];
        }
        Ok(DenseNet {
            layers,
            params: vec![0.0; offset],
            id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        })
    }

    /// ReLU hidden layers, linear output layer, Glorot-uniform weights, zero biases.
    pub fn new(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        let acts = Self::default_activations(widths.len().saturating_sub(1));
        let mut net = DenseNet::zeros(widths, &acts)?;
        net.init_glorot(rng);
        Ok(net)
    }

    pub(crate) fn default_activations(layers: usize) -> Vec<Activation> {
        (0..layers)
            .map(|l| {
                if l + 1 == layers {
                    Activation::Identity
                } else {
                    Activation::Relu
                }
            })
            .collect()
    }

    pub fn init_glorot(&mut self, rng: &mut Rng) {
        for l in 0..self.layers.len() {
            self.init_layer(l, rng);
        }
    }

    /// Re-draws one layer: Glorot-uniform weights, zero bias.
    pub fn init_layer(&mut self, l: usize, rng: &mut Rng) {
        let shape = self.layers[l];
        let limit = (6.0 / (shape.input + shape.output) as f64).sqrt();
        for w in &mut self.params[shape.weight_range()] {
            *w = rng.uniform_range(-limit, limit);
        }
        self.params[shape.bias_range()].fill(0.0);
        self.version += 1;
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].input];
        w.extend(self.layers.iter().map(|l| l.output));
        w
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn layer(&self, l: usize) -> LayerView<'_> {
        let s = self.layers[l];
        LayerView {
            weight: &self.params[s.weight_range()],
            bias: &self.params[s.bias_range()],
            input: s.input,
            output: s.output,
            activation: s.activation,
        }
    }

    /// Index range of layer `l` (weights then bias) in the flat buffer.
    pub fn layer_range(&self, l: usize) -> Range<usize> {
        let s = self.layers[l];
        s.offset..s.bias_range().end
    }

    pub fn weight_range(&self, l: usize) -> Range<usize> {
        self.layers[l].weight_range()
    }

    pub fn bias_range(&self, l: usize) -> Range<usize> {
        self.layers[l].bias_range()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the flat buffer. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                values.len()
            )));
        }
        self.params_mut().copy_from_slice(values);
        Ok(())
    }

    pub fn forward_batch(&self, x: &Mat) -> Result<ForwardCache> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let batch = x.rows();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        let mut wt = Vec::new();
        for shape in &self.layers {
            let mut z = Mat::zeros(batch, shape.output);
            wt.resize(shape.input * shape.output, 0.0);
            transpose_into(&self.params[shape.weight_range()], shape.output, shape.input, &mut wt);
            gemm(current.as_slice(), &wt, z.as_mut_slice(), batch, shape.input, shape.output);
            let bias = &self.params[shape.bias_range()];
            for r in 0..batch {
                for (v, b) in z.row_mut(r).iter_mut().zip(bias) {
                    *v += b;
                }
            }
            let mut a = z.clone();
            if shape.activation != Activation::Identity {
                for v in a.as_mut_slice() {
                    *v = shape.activation.apply(*v);
                }
            }
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: current,
            net_id: self.id,
            version: self.version,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        let m = Mat::from_vec(1, x.len(), x.to_vec())?;
        self.forward_batch(&m)
    }

    /// Output for one input vector.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.into_output().into_vec())
    }

    /// Output rows for a batch, without keeping intermediate activations.
    pub fn predict_batch(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let batch = x.rows();
        let mut current = x.clone();
        let mut wt = Vec::new();
        for shape in &self.layers {
            let mut z = Mat::zeros(batch, shape.output);
            wt.resize(shape.input * shape.output, 0.0);
            transpose_into(&self.params[shape.weight_range()], shape.output, shape.input, &mut wt);
            gemm(current.as_slice(), &wt, z.as_mut_slice(), batch, shape.input, shape.output);
            let bias = &self.params[shape.bias_range()];
            for r in 0..batch {
                for (v, b) in z.row_mut(r).iter_mut().zip(bias) {
                    *v = shape.activation.apply(*v + b);
                }
            }
            current = z;
        }
        Ok(current)
    }

    fn check_cache(&self, cache: &ForwardCache, grad_out: &Mat) -> Result<()> {
        if cache.net_id != self.id || cache.version != self.version {
            return Err(Error::Usage(
                "forward cache does not belong to the current parameters".into(),
            ));
        }
        if grad_out.rows() != cache.batch_size() || grad_out.cols() != self.output_dim() {
            return Err(Error::shape(format!(
                "output gradient is {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                cache.batch_size(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Gradient w.r.t. the pre-activation of layer `l`, given the gradient
    /// w.r.t. its post-activation. ReLU'(0) = 0.
    fn through_activation(&self, l: usize, cache: &ForwardCache, grad: &mut Mat) {
        if self.layers[l].activation == Activation::Relu {
            for (g, &z) in grad.as_mut_slice().iter_mut().zip(cache.pre[l].as_slice()) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }

    /// Parameter gradients (summed over the batch rows of `grad_out`).
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Mat) -> Result<Vec<f64>> {
        Ok(self.backward_impl(cache, grad_out, false)?.grads)
    }

    /// Parameter gradients plus the gradient w.r.t. the network input.
    pub fn backward_with_input(&self, cache: &ForwardCache, grad_out: &Mat) -> Result<Backward> {
        self.backward_impl(cache, grad_out, true)
    }

    fn backward_impl(&self, cache: &ForwardCache, grad_out: &Mat, want_input: bool) -> Result<Backward> {
        self.check_cache(cache, grad_out)?;
        let batch = cache.batch_size();
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_out.clone();
        let mut input_grad = None;
        let mut dt = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            self.through_activation(l, cache, &mut delta);
            // dW = δᵀ · a
            dt.resize(batch * shape.output, 0.0);
            transpose_into(delta.as_slice(), batch, shape.output, &mut dt);
            gemm(
                &dt,
                cache.inputs[l].as_slice(),
                &mut grads[shape.weight_range()],
                shape.output,
                batch,
                shape.input,
            );
            let db = &mut grads[shape.bias_range()];
            for r in 0..batch {
                for (g, d) in db.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            if l > 0 || want_input {
                // ∂/∂a = δ · W
                let mut prev = Mat::zeros(batch, shape.input);
                gemm(
                    delta.as_slice(),
                    &self.params[shape.weight_range()],
                    prev.as_mut_slice(),
                    batch,
                    shape.output,
                    shape.input,
                );
                if l == 0 {
                    input_grad = Some(prev);
                    break;
                }
                delta = prev;
            }
        }
        Ok(Backward { grads, input_grad })
    }

    /// `Σ_n w_n · g_n²` where `g_n` is the parameter gradient produced by row
    /// `n` of `grad_out` alone. Each per-sample gradient of a weight is an
    /// outer product `δ aᵀ`, so its square is `δ² (a²)ᵀ` and the sum over rows
    /// is again a matrix product.
    pub fn weighted_squared_grads(
        &self,
        cache: &ForwardCache,
        grad_out: &Mat,
        row_weights: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_cache(cache, grad_out)?;
        let batch = cache.batch_size();
        if row_weights.len() != batch {
            return Err(Error::shape("one weight per batch row is required"));
        }
        let mut out = vec![0.0; self.params.len()];
        let mut delta = grad_out.clone();
        let mut dt = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            self.through_activation(l, cache, &mut delta);
            dt.resize(batch * shape.output, 0.0);
            for r in 0..batch {
                let w = row_weights[r];
                for (c, d) in delta.row(r).iter().enumerate() {
                    dt[c * batch + r] = w * d * d;
                }
            }
            let a2: Vec<f64> = cache.inputs[l].as_slice().iter().map(|v| v * v).collect();
            gemm(&dt, &a2, &mut out[shape.weight_range()], shape.output, batch, shape.input);
            let db = &mut out[shape.bias_range()];
            for r in 0..batch {
                for (c, d) in delta.row(r).iter().enumerate() {
                    db[c] += row_weights[r] * d * d;
                }
            }
            if l > 0 {
                let mut prev = Mat::zeros(batch, shape.input);
                gemm(
                    delta.as_slice(),
                    &self.params[shape.weight_range()],
                    prev.as_mut_slice(),
                    batch,
                    shape.output,
                    shape.input,
                );
                delta = prev;
            }
        }
        Ok(out)
    }
}

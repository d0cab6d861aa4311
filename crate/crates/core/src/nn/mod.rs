//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Everything is `f64` and row-major: a minibatch is a `Tensor2` with one
//! sample per row, and a layer's weight matrix has shape `(in, out)` so that
//! the affine map is `x · W + b`.

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{checkpoint_len, HEADER_LEN, LAYER_HEADER_LEN, MAGIC, VERSION};
pub use gradcheck::{grad_check, relative_error, GRAD_CHECK_FLOOR};
pub use loss::{
    distill_loss, entropy, latent_reg_batch, latent_reg_loss, mse_loss, softmax, softmax_ce_loss,
    softmax_rows,
};

use ndarray::{Array1, Array2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::Rng;

use crate::error::{Error, Result};

pub type Tensor2 = Array2<f64>;

/// Negative-side slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    LeakyRelu,
    Logistic,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Logistic => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative given both the pre-activation and the activation output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu => {
                if pre > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Logistic => out * (1.0 - out),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::LeakyRelu => 1,
            Activation::Logistic => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::LeakyRelu),
            2 => Some(Activation::Logistic),
            _ => None,
        }
    }
}

/// One affine layer followed by an elementwise activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

/// Parameters of a chained stack of [`Dense`] layers.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    layers: Vec<Dense>,
}

/// Per-layer values kept by [`ModelParams::forward_trace`] for backprop.
#[derive(Clone, Debug)]
pub struct Trace {
    inputs: Vec<Tensor2>,
    pre: Vec<Tensor2>,
    output: Tensor2,
}

impl Trace {
    pub fn output(&self) -> &Tensor2 {
        &self.output
    }
}

impl ModelParams {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch("network has no layers".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k}: bias length {} vs {} outputs",
                    layer.bias.len(),
                    layer.outputs()
                )));
            }
            if k > 0 && layers[k - 1].outputs() != layer.inputs() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k} takes {} inputs but layer {} yields {}",
                    layer.inputs(),
                    k - 1,
                    layers[k - 1].outputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases. `widths` lists every layer
    /// boundary including input and output; hidden layers use `hidden`.
    pub fn init<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::ShapeMismatch(format!("invalid layer widths {widths:?}")));
        }
        let count = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                let weights = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng));
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation: if k + 1 == count { output } else { hidden },
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn shape_signature(&self) -> Vec<LayerShape> {
        self.layers
            .iter()
            .map(|l| LayerShape {
                inputs: l.inputs(),
                outputs: l.outputs(),
                activation: l.activation,
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Splits the stack after `count` layers.
    pub fn split_at(self, count: usize) -> Result<(Self, Self)> {
        if count == 0 || count >= self.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot split {} layers at {count}",
                self.layers.len()
            )));
        }
        let mut head = self.layers;
        let tail = head.split_off(count);
        Ok((Self { layers: head }, Self { layers: tail }))
    }

    /// Chains `self` followed by `next` into one stack.
    pub fn concat(&self, next: &Self) -> Result<Self> {
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        Self::from_layers(layers)
    }

    fn check_input(&self, x: &Tensor2) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        self.check_input(x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            h = z;
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: &Tensor2) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            let out = z.mapv(|v| layer.activation.apply(v));
            inputs.push(h);
            pre.push(z);
            h = out;
        }
        Ok(Trace {
            inputs,
            pre,
            output: h,
        })
    }

    /// Gradients of a loss w.r.t. every parameter and w.r.t. the network
    /// input, given `grad_output = dL/d(output)`.
    pub fn backward(&self, trace: &Trace, grad_output: &Tensor2) -> Result<(Gradients, Tensor2)> {
        if grad_output.dim() != trace.output.dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} vs output {:?}",
                grad_output.dim(),
                trace.output.dim()
            )));
        }
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut upstream = grad_output.to_owned();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let out = if k + 1 == n {
                &trace.output
            } else {
                &trace.inputs[k + 1]
            };
            let mut dz = upstream;
            ndarray::Zip::from(&mut dz)
                .and(&trace.pre[k])
                .and(out)
                .for_each(|g, &p, &o| *g *= layer.activation.derivative(p, o));
            let dw = trace.inputs[k].t().dot(&dz);
            let db = dz.sum_axis(Axis(0));
            upstream = dz.dot(&layer.weights.t());
            grads.push((dw, db));
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, upstream))
    }

    /// Flat view of parameter `k` (weights row-major, then bias, layer by layer).
    pub fn param(&self, k: usize) -> f64 {
        let (layer, offset) = self.locate(k);
        let l = &self.layers[layer];
        if offset < l.weights.len() {
            l.weights.as_slice().expect("standard layout")[offset]
        } else {
            l.bias[offset - l.weights.len()]
        }
    }

    pub fn set_param(&mut self, k: usize, value: f64) {
        let (layer, offset) = self.locate(k);
        let l = &mut self.layers[layer];
        if offset < l.weights.len() {
            l.weights.as_slice_mut().expect("standard layout")[offset] = value;
        } else {
            let w = l.weights.len();
            l.bias[offset - w] = value;
        }
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (i, l) in self.layers.iter().enumerate() {
            if k < l.param_count() {
                return (i, k);
            }
            k -= l.param_count();
        }
        panic!("parameter index out of range");
    }
}

/// Parameter-shaped gradient (or moment) storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn matches(&self, params: &ModelParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|((w, b), l)| w.dim() == l.weights.dim() && b.len() == l.bias.len())
    }

    pub fn get(&self, mut k: usize) -> f64 {
        for (w, b) in &self.layers {
            if k < w.len() {
                return w.as_slice().expect("standard layout")[k];
            }
            k -= w.len();
            if k < b.len() {
                return b[k];
            }
            k -= b.len();
        }
        panic!("gradient index out of range");
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            *w *= factor;
            *b *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }
}

/// Stacks equal-length rows into a matrix.
pub fn stack_rows<'a, I>(rows: I, width: usize) -> Tensor2
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut data = Vec::new();
    let mut count = 0;
    for row in rows {
        assert_eq!(row.len(), width, "row width");
        data.extend_from_slice(row);
        count += 1;
    }
    Array2::from_shape_vec((count, width), data).expect("row-major shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Dense {
            weights: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        };
        let net = ModelParams::from_layers(vec![layer]).unwrap();
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn activation_definitions() {
        assert_eq!(Activation::LeakyRelu.apply(-1.0), -0.01);
        assert_eq!(Activation::LeakyRelu.apply(2.0), 2.0);
        assert_eq!(Activation::Logistic.apply(0.0), 0.5);
        for a in [Activation::Identity, Activation::LeakyRelu, Activation::Logistic] {
            assert_eq!(Activation::from_tag(a.tag()), Some(a));
        }
        assert_eq!(Activation::from_tag(9), None);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = ModelParams::init(&[4, 3, 2], Activation::LeakyRelu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(net.forward(&Array2::zeros((1, 5))), Err(Error::ShapeMismatch(_))));
        let bad = vec![
            net.layers()[0].clone(),
            Dense {
                weights: Array2::zeros((4, 2)),
                bias: Array1::zeros(2),
                activation: Activation::Identity,
            },
        ];
        assert!(ModelParams::from_layers(bad).is_err());
    }

    #[test]
    fn forward_is_deterministic_and_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = ModelParams::init(&[5, 8, 3], Activation::LeakyRelu, Activation::Logistic, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i as f64 - j as f64) * 0.3);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(net.forward_trace(&x).unwrap().output(), &a);
    }

    #[test]
    fn init_respects_glorot_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ModelParams::init(&[10, 6], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(net.layers()[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(net.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn flat_parameter_indexing_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = ModelParams::init(&[3, 2, 2], Activation::LeakyRelu, Activation::Identity, &mut rng).unwrap();
        assert_eq!(net.param_count(), 3 * 2 + 2 + 2 * 2 + 2);
        net.set_param(7, 4.25);
        assert_eq!(net.layers()[0].bias[1], 4.25);
        assert_eq!(net.param(7), 4.25);
        net.set_param(8, -1.5);
        assert_eq!(net.layers()[1].weights[[0, 0]], -1.5);
    }

    #[test]
    fn split_and_concat_are_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ModelParams::init(&[6, 5, 4, 3], Activation::LeakyRelu, Activation::Identity, &mut rng).unwrap();
        let (head, tail) = net.clone().split_at(2).unwrap();
        assert_eq!(head.output_width(), 4);
        assert_eq!(head.concat(&tail).unwrap(), net);
    }
}

use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TdaError};
use crate::rng::TdaRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine layer followed by an elementwise activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `outputs x inputs`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.nrows() {
            return Err(TdaError::Shape {
                expected: weights.nrows(),
                actual: bias.len(),
            });
        }
        Ok(Dense {
            weights,
            bias,
            activation,
        })
    }

    /// Uniform `(-1/sqrt(in), 1/sqrt(in))` initialisation for weights and bias.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut TdaRng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-bound..bound));
        let bias = Array1::from_shape_fn(outputs, |_| rng.random_range(-bound..bound));
        Dense {
            weights,
            bias,
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Where a layer's parameters live in the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpan {
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

impl LayerSpan {
    pub fn all(&self) -> Range<usize> {
        self.weights.start..self.bias.end
    }
}

/// Dense feedforward network.
///
/// The flat parameter vector is laid out layer by layer; within a layer the
/// weight matrix comes first in row-major order (`weights[o][i]` at
/// `o * inputs + i`), followed by the bias vector.
///
/// Dropout is applied after the activation of every layer except the last,
/// only in training passes, with inverted `1/(1-p)` scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
    dropout: f64,
}

/// Activations retained by a batch forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("network has at least one layer")
    }

    pub fn rows(&self) -> usize {
        self.inputs.nrows()
    }

    /// Input to layer `layer` (the network input for layer 0).
    pub fn layer_input(&self, layer: usize) -> ArrayView2<'_, f64> {
        if layer == 0 {
            self.inputs.view()
        } else {
            self.post[layer - 1].view()
        }
    }
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>, dropout: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(TdaError::Config("network needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(TdaError::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(TdaError::Shape {
                    expected: pair[0].outputs(),
                    actual: pair[1].inputs(),
                });
            }
        }
        for layer in &layers {
            if layer.weights.iter().chain(layer.bias.iter()).any(|w| !w.is_finite()) {
                return Err(TdaError::Domain("non-finite weight".into()));
            }
        }
        Ok(DenseNet { layers, dropout })
    }

    /// Randomly initialised network with layer widths `dims` (input first).
    pub fn init(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        dropout: f64,
        rng: &mut TdaRng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(TdaError::Config("need input and output widths".into()));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| Dense::init(w[0], w[1], if l == last { output } else { hidden }, rng))
            .collect();
        DenseNet::new(layers, dropout)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn layer_spans(&self) -> Vec<LayerSpan> {
        let mut offset = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = offset..offset + l.weights.len();
                let b = w.end..w.end + l.bias.len();
                offset = b.end;
                LayerSpan { weights: w, bias: b }
            })
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(TdaError::Shape {
                expected: self.n_params(),
                actual: flat.len(),
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            for (w, v) in l.weights.iter_mut().zip(&flat[offset..]) {
                *w = *v;
            }
            offset += l.weights.len();
            for (b, v) in l.bias.iter_mut().zip(&flat[offset..]) {
                *b = *v;
            }
            offset += l.bias.len();
        }
        Ok(())
    }

    /// Evaluates the network on one input. Dropout is active only when a
    /// generator is supplied.
    pub fn forward(&self, x: &[f64], dropout_rng: Option<&mut TdaRng>) -> Result<Vec<f64>> {
        let input = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let cache = self.forward_batch(input, dropout_rng)?;
        Ok(cache.output().row(0).to_vec())
    }

    /// Batch forward pass; rows are samples.
    pub fn forward_batch(
        &self,
        x: ArrayView2<'_, f64>,
        mut dropout_rng: Option<&mut TdaRng>,
    ) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(TdaError::Shape {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        let n_layers = self.layers.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        let mut masks = Vec::with_capacity(n_layers);
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { post[l - 1].view() };
            let mut z = input.dot(&layer.weights.t());
            z += &layer.bias;
            let mut a = z.mapv(|v| layer.activation.apply(v));
            let mut mask = None;
            if l + 1 < n_layers && self.dropout > 0.0 {
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    let keep = 1.0 - self.dropout;
                    let m = Array2::from_shape_fn(a.raw_dim(), |_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    a *= &m;
                    mask = Some(m);
                }
            }
            pre.push(z);
            post.push(a);
            masks.push(mask);
        }
        Ok(ForwardCache {
            inputs: x.to_owned(),
            pre,
            post,
            masks,
        })
    }

    /// Backpropagates `grad_out` (d loss / d output, one row per sample)
    /// and returns the flat parameter gradient summed over rows together
    /// with the gradient with respect to the inputs.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        grad_out: ArrayView2<'_, f64>,
    ) -> (Vec<f64>, Array2<f64>) {
        let spans = self.layer_spans();
        let mut grad = vec![0.0; self.n_params()];
        let mut delta = grad_out.to_owned();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if let Some(mask) = &cache.masks[l] {
                delta *= mask;
            }
            let act = layer.activation;
            delta.zip_mut_with(&cache.pre[l], |d, &z| *d *= act.derivative(z));
            let input = cache.layer_input(l);
            let gw = delta.t().dot(&input);
            let gb = delta.sum_axis(Axis(0));
            grad[spans[l].weights.clone()]
                .iter_mut()
                .zip(gw.iter())
                .for_each(|(g, v)| *g = *v);
            grad[spans[l].bias.clone()]
                .iter_mut()
                .zip(gb.iter())
                .for_each(|(g, v)| *g = *v);
            delta = delta.dot(&layer.weights);
        }
        (grad, delta)
    }

    /// Backward pass for a single cached row, writing the gradient of that
    /// row's loss into `grad` (length `n_params`). Layers below `stop_layer`
    /// are skipped and their entries left untouched.
    pub fn backward_row(
        &self,
        cache: &ForwardCache,
        row: usize,
        grad_out: ArrayView1<'_, f64>,
        stop_layer: usize,
        spans: &[LayerSpan],
        grad: &mut [f64],
    ) {
        let mut delta: Array1<f64> = grad_out.to_owned();
        for l in (stop_layer..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if let Some(mask) = &cache.masks[l] {
                delta *= &mask.row(row);
            }
            let act = layer.activation;
            delta.zip_mut_with(&cache.pre[l].row(row), |d, &z| *d *= act.derivative(z));
            let input = cache.layer_input(l);
            let input = input.row(row);
            let n_in = layer.inputs();
            let w0 = spans[l].weights.start;
            for (o, d) in delta.iter().enumerate() {
                let dst = &mut grad[w0 + o * n_in..w0 + (o + 1) * n_in];
                for (g, x) in dst.iter_mut().zip(input.iter()) {
                    *g = d * x;
                }
            }
            grad[spans[l].bias.clone()]
                .iter_mut()
                .zip(delta.iter())
                .for_each(|(g, v)| *g = *v);
            if l > stop_layer {
                delta = delta.dot(&layer.weights);
            }
        }
    }
}

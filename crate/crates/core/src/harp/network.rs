//! The order-scale MLP: parameters, initialization, batched forward pass and
//! exact reverse-mode gradients of the harmonization loss.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{HarpError, Result};
use crate::sh::{block_of, N_COEFFS, N_ORDERS};

/// Layer widths and skip pattern of the scale network.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    /// 1-based hidden layers whose input is `[previous activations, network input]`.
    pub skip_into: Vec<usize>,
    pub output: usize,
}

impl Architecture {
    /// 45 -> 160 -> 240 -> 320 -> 360 -> 480 -> 520 -> 600 -> 5 with the
    /// input re-injected into hidden layers 3, 5 and 7.
    pub fn harp() -> Self {
        Self {
            input: N_COEFFS,
            hidden: vec![160, 240, 320, 360, 480, 520, 600],
            skip_into: vec![3, 5, 7],
            output: N_ORDERS,
        }
    }

    /// Same skip topology with custom hidden widths; skips into layers that
    /// do not exist are dropped.
    pub fn with_hidden(hidden: Vec<usize>) -> Self {
        let base = Self::harp();
        let depth = hidden.len();
        Self {
            skip_into: base.skip_into.into_iter().filter(|&l| l <= depth).collect(),
            hidden,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input != N_COEFFS || self.output != N_ORDERS {
            return Err(HarpError::invalid(format!(
                "network must map {N_COEFFS} coefficients to {N_ORDERS} scales (got {} -> {})",
                self.input, self.output
            )));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(HarpError::invalid(
                "hidden layers must be non-empty with positive widths",
            ));
        }
        if self
            .skip_into
            .iter()
            .any(|&l| l < 2 || l > self.hidden.len())
        {
            return Err(HarpError::invalid(format!(
                "skip targets {:?} must name hidden layers 2..={}",
                self.skip_into,
                self.hidden.len()
            )));
        }
        Ok(())
    }

    fn has_skip(&self, hidden_layer: usize) -> bool {
        self.skip_into.contains(&hidden_layer)
    }

    /// `(outputs, inputs)` of every dense layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input;
        for (i, &w) in self.hidden.iter().enumerate() {
            let fan_in = if self.has_skip(i + 1) {
                prev + self.input
            } else {
                prev
            };
            shapes.push((w, fan_in));
            prev = w;
        }
        shapes.push((self.output, prev));
        shapes
    }

    pub fn n_parameters(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

/// Weights (`outputs x inputs`) and bias of one fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weights: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weights.nrows(), self.weights.ncols())
    }
}

/// Parameters of the scale network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub arch: Architecture,
    pub layers: Vec<Dense>,
    /// Optional `[lo, hi]` clamp on predicted scales.
    pub scale_clamp: Option<[f64; 2]>,
}

/// Gradients, laid out exactly like [`MlpParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self {
            layers: p.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl MlpParams {
    /// He-uniform hidden weights, zero hidden biases, output weights with
    /// standard deviation 1e-3 and output biases 1, so the untrained network
    /// is close to the identity harmonizer.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = arch.layer_shapes();
        let n_hidden = arch.hidden.len();
        let mut layers = Vec::with_capacity(shapes.len());
        for (i, &(out, inp)) in shapes.iter().enumerate() {
            let mut layer = Dense::zeros(out, inp);
            if i < n_hidden {
                let bound = (6.0 / inp as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                layer
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = dist.sample(&mut rng));
            } else {
                let dist = Normal::new(0.0, 1e-3).expect("positive std");
                layer
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = dist.sample(&mut rng));
                layer.bias.fill(1.0);
            }
            layers.push(layer);
        }
        Ok(Self {
            arch: arch.clone(),
            layers,
            scale_clamp: None,
        })
    }

    /// All weights zero and output biases 1: predicts unit scales everywhere.
    pub fn identity(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let mut layers: Vec<Dense> = arch
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| Dense::zeros(o, i))
            .collect();
        layers.last_mut().expect("output layer").bias.fill(1.0);
        Ok(Self {
            arch: arch.clone(),
            layers,
            scale_clamp: None,
        })
    }

    /// Shapes agree with the architecture and every value is finite.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let shapes = self.arch.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(HarpError::invalid(format!(
                "architecture has {} layers, parameters have {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (i, ((o, n), l)) in shapes.iter().zip(&self.layers).enumerate() {
            if l.weights.dim() != (*o, *n) || l.bias.len() != *o {
                return Err(HarpError::invalid(format!(
                    "layer {i} has shape {:?}/{}, expected ({o}, {n})/{o}",
                    l.weights.dim(),
                    l.bias.len()
                )));
            }
            if l.weights
                .iter()
                .chain(l.bias.iter())
                .any(|v| !v.is_finite())
            {
                return Err(HarpError::invalid(format!(
                    "layer {i} has non-finite parameters"
                )));
            }
        }
        if let Some([lo, hi]) = self.scale_clamp {
            if !(lo <= hi) {
                return Err(HarpError::invalid(format!(
                    "scale clamp [{lo}, {hi}] is empty"
                )));
            }
        }
        Ok(())
    }

    /// Predicted order scales `(s0, s2, s4, s6, s8)` for one voxel.
    pub fn forward_scales(&self, c: ArrayView1<f64>) -> Result<[f64; N_ORDERS]> {
        if c.len() != self.arch.input {
            return Err(HarpError::invalid(format!(
                "expected {} coefficients, got {}",
                self.arch.input,
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(HarpError::invalid("network input must be finite"));
        }
        let x = c.insert_axis(Axis(0));
        let s = self.predict_scales(x);
        let mut out = [0.0; N_ORDERS];
        out.iter_mut().zip(s.row(0)).for_each(|(o, v)| *o = *v);
        Ok(out)
    }

    /// Scales for a batch of inputs (one row per voxel).
    pub fn predict_scales(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let trace = self.forward(x);
        trace.scales
    }

    fn forward(&self, x: ArrayView2<f64>) -> Trace {
        let n_hidden = self.arch.hidden.len();
        let mut inputs = Vec::with_capacity(n_hidden + 1);
        let mut pre = Vec::with_capacity(n_hidden + 1);
        let mut act: Array2<f64> = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = if i > 0 && i < n_hidden && self.arch.has_skip(i + 1) {
                concat_columns(&act, x)
            } else {
                act
            };
            let mut a = z.dot(&layer.weights.t());
            a += &layer.bias;
            if i < n_hidden {
                act = a.mapv(|v| v.max(0.0));
                pre.push(a);
            } else {
                act = a.clone();
                pre.push(a);
            }
            inputs.push(z);
        }
        let raw = act;
        let scales = match self.scale_clamp {
            Some([lo, hi]) => raw.mapv(|v| v.clamp(lo, hi)),
            None => raw,
        };
        Trace {
            inputs,
            pre,
            scales,
        }
    }

    /// Mean over the batch of `sum_k (s_{l(k)} c_k - t_k)^2`.
    pub fn loss(&self, src: ArrayView2<f64>, tgt: ArrayView2<f64>) -> f64 {
        let trace = self.forward(src);
        batch_loss(&trace.scales, src, tgt)
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        src: ArrayView2<f64>,
        tgt: ArrayView2<f64>,
    ) -> Result<(f64, Gradients)> {
        if src.nrows() == 0 || src.dim() != tgt.dim() {
            return Err(HarpError::invalid(format!(
                "source batch {:?} and target batch {:?} must be non-empty and equal",
                src.dim(),
                tgt.dim()
            )));
        }
        if src.ncols() != self.arch.input {
            return Err(HarpError::invalid(format!(
                "batch rows have {} coefficients, network expects {}",
                src.ncols(),
                self.arch.input
            )));
        }
        let trace = self.forward(src);
        let loss = batch_loss(&trace.scales, src, tgt);
        let n = src.nrows() as f64;

        // dL/ds_l = sum over block l of 2 (s_l c_k - t_k) c_k / n
        let mut d_out = Array2::<f64>::zeros(trace.scales.dim());
        for ((mut d, s), (c, t)) in d_out
            .rows_mut()
            .into_iter()
            .zip(trace.scales.rows())
            .zip(src.rows().into_iter().zip(tgt.rows()))
        {
            for k in 0..c.len() {
                let b = block_of(k);
                d[b] += 2.0 * (s[b] * c[k] - t[k]) * c[k] / n;
            }
        }
        if let Some([lo, hi]) = self.scale_clamp {
            let raw = &trace.pre[trace.pre.len() - 1];
            ndarray::Zip::from(&mut d_out).and(raw).for_each(|d, &r| {
                if r < lo || r > hi {
                    *d = 0.0;
                }
            });
        }

        let n_hidden = self.arch.hidden.len();
        let mut grads = Gradients::zeros_like(self);
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            if i < n_hidden {
                ndarray::Zip::from(&mut delta)
                    .and(&trace.pre[i])
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            let g = &mut grads.layers[i];
            g.weights = delta.t().dot(&trace.inputs[i]);
            g.bias = delta.sum_axis(Axis(0));
            if i == 0 {
                break;
            }
            let d_in = delta.dot(&self.layers[i].weights);
            let prev_width = self.arch.hidden[i - 1];
            delta = if d_in.ncols() == prev_width {
                d_in
            } else {
                d_in.slice(s![.., ..prev_width]).to_owned()
            };
        }
        Ok((loss, grads))
    }
}

struct Trace {
    /// Input to each dense layer (after skip concatenation).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each dense layer; the last is the raw output.
    pre: Vec<Array2<f64>>,
    scales: Array2<f64>,
}

fn concat_columns(a: &Array2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(s![.., ..a.ncols()]).assign(a);
    out.slice_mut(s![.., a.ncols()..]).assign(&b);
    out
}

fn batch_loss(scales: &Array2<f64>, src: ArrayView2<f64>, tgt: ArrayView2<f64>) -> f64 {
    let mut total = 0.0;
    for (s, (c, t)) in scales
        .rows()
        .into_iter()
        .zip(src.rows().into_iter().zip(tgt.rows()))
    {
        for k in 0..c.len() {
            let r = s[block_of(k)] * c[k] - t[k];
            total += r * r;
        }
    }
    total / src.nrows() as f64
}

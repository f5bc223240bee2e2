//! Dense feed-forward networks with exact input derivatives.
//!
//! A [`Network`] maps `(x, t, x0)` rows to one or more outputs. Besides plain
//! evaluation it propagates first and second derivatives with respect to `x`
//! and `t` in Taylor mode ([`Network::forward_with_input_derivs`]), and can
//! back-propagate a loss that depends on those derivatives into the weights
//! ([`loss_gradient`]).

mod checkpoint;
mod init;
mod taylor;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use init::{init_glorot, init_siren, DEFAULT_OMEGA0};
pub use taylor::{loss_gradient, DerivativeBundle, Tape};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input columns.
pub const INPUT_X: usize = 0;
pub const INPUT_T: usize = 1;
pub const INPUT_X0: usize = 2;
pub const INPUT_DIM: usize = 3;

/// Row block size for parallel evaluation.
const PAR_BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `sin(omega0 * z)`
    Sine,
    Tanh,
    Identity,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Sine => "sine",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "sine" => Some(Activation::Sine),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn apply(self, z: f64, omega0: f64) -> f64 {
        match self {
            Activation::Sine => (omega0 * z).sin(),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Value and first three derivatives at `z`.
    #[inline]
    pub(crate) fn jet(self, z: f64, omega0: f64) -> [f64; 4] {
        match self {
            Activation::Sine => {
                let (s, c) = (omega0 * z).sin_cos();
                let w2 = omega0 * omega0;
                [s, omega0 * c, -w2 * s, -w2 * omega0 * c]
            }
            Activation::Tanh => {
                let s = z.tanh();
                let d = 1.0 - s * s;
                [s, d, -2.0 * s * d, d * (6.0 * s * s - 2.0)]
            }
            Activation::Identity => [z, 1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    omega0: f64,
}

impl Network {
    pub fn new(layers: Vec<Layer>, omega0: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::config(format!(
                "omega0 must be positive, got {omega0}"
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::dim(format!(
                    "layer {i}: bias length {} != fan_out {}",
                    layer.bias.len(),
                    layer.fan_out()
                )));
            }
            if layer.fan_in() == 0 || layer.fan_out() == 0 {
                return Err(Error::dim(format!("layer {i} has an empty dimension")));
            }
            if i > 0 && layers[i - 1].fan_out() != layer.fan_in() {
                return Err(Error::dim(format!(
                    "layer {i}: fan_in {} does not match previous fan_out {}",
                    layer.fan_in(),
                    layers[i - 1].fan_out()
                )));
            }
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(Error::config("final layer activation must be identity"));
        }
        Ok(Self { layers, omega0 })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    /// `[in, hidden..., out]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::fan_out))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Mutable parameter slices in a fixed order: per layer, weights (row-major) then bias.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weights.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &self.layers {
            out.push(layer.weights.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub(crate) fn check_inputs(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::dim(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                inputs.ncols()
            )));
        }
        Ok(())
    }

    /// Plain evaluation, `batch x output_dim`. Large batches are split into
    /// fixed-size row blocks evaluated on the rayon pool; rows never interact,
    /// so the result does not depend on the thread count.
    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(&inputs)?;
        if inputs.nrows() <= PAR_BLOCK {
            return Ok(self.forward_block(inputs));
        }
        let blocks: Vec<ArrayView2<f64>> = inputs.axis_chunks_iter(Axis(0), PAR_BLOCK).collect();
        let outs: Vec<Array2<f64>> = blocks
            .par_iter()
            .map(|b| self.forward_block(b.view()))
            .collect();
        let views: Vec<ArrayView2<f64>> = outs.iter().map(Array2::view).collect();
        Ok(ndarray::concatenate(Axis(0), &views).expect("blocks share the column count"))
    }

    fn forward_block(&self, inputs: ArrayView2<f64>) -> Array2<f64> {
        let mut a = inputs.to_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias.view().insert_axis(Axis(0));
            if layer.activation != Activation::Identity {
                let (act, w0) = (layer.activation, self.omega0);
                z.mapv_inplace(|v| act.apply(v, w0));
            }
            a = z;
        }
        a
    }

    /// Evaluates a single row.
    pub fn eval_point(&self, x: f64, t: f64, x0: f64) -> Result<Vec<f64>> {
        let row = ndarray::arr2(&[[x, t, x0]]);
        Ok(self.forward(row.view())?.row(0).to_vec())
    }
}

/// Parameter gradient with the same shape as a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradient {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| {
                    (
                        Array2::zeros(l.weights.raw_dim()),
                        Array1::zeros(l.bias.len()),
                    )
                })
                .collect(),
        }
    }

    /// Slices in the order of [`Network::params_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (w, b) in &self.layers {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            *w *= k;
            *b *= k;
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
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

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array};

    fn single_sine(w: f64, b: f64, omega0: f64) -> Network {
        Network::new(
            vec![
                Layer {
                    weights: arr2(&[[w, 0.0, 0.0]]),
                    bias: arr1(&[b]),
                    activation: Activation::Sine,
                },
                Layer {
                    weights: arr2(&[[1.0]]),
                    bias: arr1(&[0.0]),
                    activation: Activation::Identity,
                },
            ],
            omega0,
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut net = init_siren(&[3, 8, 1], 30.0, 1).unwrap();
        for p in net.params_mut() {
            p.fill(0.0);
        }
        let last = net.layers.len() - 1;
        net.layers[last].bias[0] = 0.75;
        let x = Array::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let y = net.forward(x.view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.75));
    }

    #[test]
    fn sine_layer_composition() {
        let net = single_sine(1.0, 0.0, 30.0);
        for &x in &[-0.3, 0.0, 0.17, 0.9] {
            let y = net.eval_point(x, 0.4, 0.1).unwrap()[0];
            assert!((y - (30.0 * x).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_equals_rows() {
        let net = init_siren(&[3, 16, 16, 2], 30.0, 7).unwrap();
        let x = Array::from_shape_fn((9, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
        let y = net.forward(x.view()).unwrap();
        for i in 0..9 {
            let row = net.eval_point(x[[i, 0]], x[[i, 1]], x[[i, 2]]).unwrap();
            assert_eq!(row, y.row(i).to_vec());
        }
    }

    #[test]
    fn blocked_batch_equals_rows() {
        let net = init_siren(&[3, 32, 32, 1], 30.0, 8).unwrap();
        let n = 2 * PAR_BLOCK + 37;
        let x = Array::from_shape_fn((n, 3), |(i, j)| {
            ((i * 13 + j * 5) % 101) as f64 / 101.0 - 0.5
        });
        let y = net.forward(x.view()).unwrap();
        for i in (0..n).step_by(97) {
            let row = net.eval_point(x[[i, 0]], x[[i, 1]], x[[i, 2]]).unwrap();
            assert_eq!(row[0].to_bits(), y[[i, 0]].to_bits(), "row {i}");
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = init_siren(&[3, 4, 1], 30.0, 0).unwrap();
        let x = Array2::<f64>::zeros((2, 2));
        assert!(matches!(net.forward(x.view()), Err(Error::Dimension(_))));
        let bad = Network::new(
            vec![Layer {
                weights: Array2::zeros((2, 3)),
                bias: Array1::zeros(2),
                activation: Activation::Tanh,
            }],
            1.0,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn tanh_jet_matches_finite_differences() {
        let h = 1e-5;
        for &z in &[-1.3, -0.2, 0.0, 0.4, 2.0] {
            let j = Activation::Tanh.jet(z, 1.0);
            let jp = Activation::Tanh.jet(z + h, 1.0);
            let jm = Activation::Tanh.jet(z - h, 1.0);
            for k in 0..3 {
                let fd = (jp[k] - jm[k]) / (2.0 * h);
                assert!((fd - j[k + 1]).abs() < 1e-8, "order {k} at {z}");
            }
        }
    }
}

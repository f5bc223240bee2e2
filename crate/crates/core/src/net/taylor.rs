//! Second-order Taylor-mode propagation along `x` and `t`, and its adjoint.
//!
//! Every layer works on a stacked matrix of `5 n` rows: the value block
//! followed by the `d/dx`, `d/dt`, `d2/dx2` and `d2/dt2` blocks. The affine
//! part is then a single matrix product per layer; only the bias and the
//! activation treat the blocks differently. Because the input is linear in
//! `x` and `t`, the seed blocks are unit columns and zeros.

use ndarray::{s, Array2, ArrayView2, Axis};

use super::{Activation, Gradient, Network, INPUT_T, INPUT_X};
use crate::error::{Error, Result};

const BLOCKS: usize = 5;
const VALUE: usize = 0;
const DX: usize = 1;
const DT: usize = 2;
const DXX: usize = 3;
const DTT: usize = 4;

/// Network outputs and their input derivatives, each `batch x output_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub value: Array2<f64>,
    pub d_dx: Array2<f64>,
    pub d_dt: Array2<f64>,
    pub d2_dx2: Array2<f64>,
    pub d2_dt2: Array2<f64>,
}

impl DerivativeBundle {
    pub fn zeros(rows: usize, outputs: usize) -> Self {
        let z = Array2::zeros((rows, outputs));
        Self {
            value: z.clone(),
            d_dx: z.clone(),
            d_dt: z.clone(),
            d2_dx2: z.clone(),
            d2_dt2: z,
        }
    }

    pub fn rows(&self) -> usize {
        self.value.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.value.ncols()
    }

    fn channels(&self) -> [&Array2<f64>; BLOCKS] {
        [
            &self.value,
            &self.d_dx,
            &self.d_dt,
            &self.d2_dx2,
            &self.d2_dt2,
        ]
    }

    fn stack(&self) -> Array2<f64> {
        let views: Vec<_> = self.channels().iter().map(|c| c.view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("equal widths")
    }

    fn unstack(stacked: Array2<f64>, n: usize) -> Self {
        let block = |b: usize| stacked.slice(s![b * n..(b + 1) * n, ..]).to_owned();
        Self {
            value: block(VALUE),
            d_dx: block(DX),
            d_dt: block(DT),
            d2_dx2: block(DXX),
            d2_dt2: block(DTT),
        }
    }

    /// Bundle of a single output channel.
    pub fn column(&self, j: usize) -> DerivativeBundle {
        let c = |a: &Array2<f64>| a.slice(s![.., j..j + 1]).to_owned();
        Self {
            value: c(&self.value),
            d_dx: c(&self.d_dx),
            d_dt: c(&self.d_dt),
            d2_dx2: c(&self.d2_dx2),
            d2_dt2: c(&self.d2_dt2),
        }
    }
}

/// Forward intermediates needed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    n: usize,
    /// Stacked layer inputs.
    inputs: Vec<Array2<f64>>,
    /// Stacked pre-activations.
    pre: Vec<Array2<f64>>,
    /// First three activation derivatives at each value-block pre-activation.
    jets: Vec<Vec<[f64; 3]>>,
}

fn seed(inputs: &ArrayView2<f64>) -> Array2<f64> {
    let n = inputs.nrows();
    let mut a = Array2::zeros((BLOCKS * n, inputs.ncols()));
    a.slice_mut(s![0..n, ..]).assign(inputs);
    for r in 0..n {
        a[[DX * n + r, INPUT_X]] = 1.0;
        a[[DT * n + r, INPUT_T]] = 1.0;
    }
    a
}

fn activate(
    z: &Array2<f64>,
    n: usize,
    act: Activation,
    omega0: f64,
) -> (Array2<f64>, Vec<[f64; 3]>) {
    if act == Activation::Identity {
        return (z.clone(), Vec::new());
    }
    let m = z.ncols();
    let zs = z.as_slice().expect("standard layout");
    let mut h = Array2::zeros(z.raw_dim());
    let hs = h.as_slice_mut().expect("standard layout");
    let mut jets = Vec::with_capacity(n * m);
    let block = n * m;
    for i in 0..block {
        let [s0, s1, s2, s3] = act.jet(zs[i], omega0);
        let zx = zs[DX * block + i];
        let zt = zs[DT * block + i];
        hs[i] = s0;
        hs[DX * block + i] = s1 * zx;
        hs[DT * block + i] = s1 * zt;
        hs[DXX * block + i] = s2 * zx * zx + s1 * zs[DXX * block + i];
        hs[DTT * block + i] = s2 * zt * zt + s1 * zs[DTT * block + i];
        jets.push([s1, s2, s3]);
    }
    (h, jets)
}

fn activate_adjoint(
    z: &Array2<f64>,
    jets: &[[f64; 3]],
    hbar: &Array2<f64>,
    n: usize,
) -> Array2<f64> {
    let m = z.ncols();
    let zs = z.as_slice().expect("standard layout");
    let gs = hbar.as_slice().expect("standard layout");
    let mut zbar = Array2::zeros(z.raw_dim());
    let out = zbar.as_slice_mut().expect("standard layout");
    let block = n * m;
    for i in 0..block {
        let [s1, s2, s3] = jets[i];
        let (zx, zt) = (zs[DX * block + i], zs[DT * block + i]);
        let (zxx, ztt) = (zs[DXX * block + i], zs[DTT * block + i]);
        let g = gs[i];
        let (gx, gt) = (gs[DX * block + i], gs[DT * block + i]);
        let (gxx, gtt) = (gs[DXX * block + i], gs[DTT * block + i]);
        out[i] = g * s1
            + s2 * (gx * zx + gt * zt)
            + gxx * (s3 * zx * zx + s2 * zxx)
            + gtt * (s3 * zt * zt + s2 * ztt);
        out[DX * block + i] = gx * s1 + 2.0 * gxx * s2 * zx;
        out[DT * block + i] = gt * s1 + 2.0 * gtt * s2 * zt;
        out[DXX * block + i] = gxx * s1;
        out[DTT * block + i] = gtt * s1;
    }
    zbar
}

impl Network {
    /// Outputs with exact first and second derivatives in `x` and `t`.
    pub fn forward_with_input_derivs(&self, inputs: ArrayView2<f64>) -> Result<DerivativeBundle> {
        self.forward_tape(inputs).map(|(bundle, _)| bundle)
    }

    /// As [`Network::forward_with_input_derivs`], keeping what the adjoint pass needs.
    pub fn forward_tape(&self, inputs: ArrayView2<f64>) -> Result<(DerivativeBundle, Tape)> {
        self.check_inputs(&inputs)?;
        let n = inputs.nrows();
        let mut tape = Tape {
            n,
            inputs: Vec::with_capacity(self.layers().len()),
            pre: Vec::with_capacity(self.layers().len()),
            jets: Vec::with_capacity(self.layers().len()),
        };
        let mut a = seed(&inputs);
        for layer in self.layers() {
            // narrow products can come back column-major
            let mut z = a.dot(&layer.weights.t()).as_standard_layout().into_owned();
            z.slice_mut(s![0..n, ..])
                .zip_mut_with(&layer.bias.view().insert_axis(Axis(0)), |v, b| *v += b);
            let (h, jets) = activate(&z, n, layer.activation, self.omega0());
            tape.inputs.push(a);
            tape.pre.push(z);
            tape.jets.push(jets);
            a = h;
        }
        Ok((DerivativeBundle::unstack(a, n), tape))
    }

    /// Pulls an output adjoint back to the parameters.
    pub fn backward(&self, tape: &Tape, adjoint: &DerivativeBundle) -> Result<Gradient> {
        let n = tape.n;
        if adjoint.rows() != n || adjoint.outputs() != self.output_dim() {
            return Err(Error::dim(format!(
                "adjoint is {}x{}, network produced {}x{}",
                adjoint.rows(),
                adjoint.outputs(),
                n,
                self.output_dim()
            )));
        }
        let mut grad = Gradient::zeros_like(self);
        let mut hbar = adjoint.stack();
        for (l, layer) in self.layers().iter().enumerate().rev() {
            let zbar = if layer.activation == Activation::Identity {
                hbar
            } else {
                activate_adjoint(&tape.pre[l], &tape.jets[l], &hbar, n)
            };
            let (gw, gb) = &mut grad.layers[l];
            *gw = zbar.t().dot(&tape.inputs[l]);
            *gb = zbar.slice(s![0..n, ..]).sum_axis(Axis(0));
            hbar = if l > 0 {
                zbar.dot(&layer.weights).as_standard_layout().into_owned()
            } else {
                Array2::zeros((0, 0))
            };
        }
        Ok(grad)
    }
}

/// Gradient of a scalar loss built from one or more networks' derivative bundles.
///
/// `evaluator` receives one bundle per `(network, inputs)` pair and returns the
/// loss together with its adjoint with respect to every bundle entry.
pub fn loss_gradient<F>(
    nets: &[(&Network, ArrayView2<f64>)],
    evaluator: F,
) -> Result<(f64, Vec<Gradient>)>
where
    F: FnOnce(&[DerivativeBundle]) -> Result<(f64, Vec<DerivativeBundle>)>,
{
    let mut bundles = Vec::with_capacity(nets.len());
    let mut tapes = Vec::with_capacity(nets.len());
    for (net, inputs) in nets {
        let (b, t) = net.forward_tape(inputs.view())?;
        bundles.push(b);
        tapes.push(t);
    }
    let (loss, adjoints) = evaluator(&bundles)?;
    if !loss.is_finite() {
        return Err(Error::numerical(format!("loss is not finite ({loss})")));
    }
    if adjoints.len() != nets.len() {
        return Err(Error::dim("evaluator must return one adjoint per network"));
    }
    let grads = nets
        .iter()
        .zip(&tapes)
        .zip(&adjoints)
        .map(|(((net, _), tape), adj)| net.backward(tape, adj))
        .collect::<Result<Vec<_>>>()?;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical("gradient is not finite"));
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_glorot, init_siren, Layer};
    use ndarray::{arr1, arr2, Array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array::from_shape_simple_fn((n, 3), || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn constant_network_has_zero_derivatives() {
        let mut net = init_glorot(&[3, 6, 2], 3).unwrap();
        net.params_mut()[0].fill(0.0);
        let b = net.forward_with_input_derivs(rows(10, 1).view()).unwrap();
        for ch in [&b.d_dx, &b.d_dt, &b.d2_dx2, &b.d2_dt2] {
            assert!(ch.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_neuron_closed_form() {
        let (w, b, w0) = (0.7, 0.2, 30.0);
        let net = Network::new(
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
            w0,
        )
        .unwrap();
        let x = rows(20, 5);
        let d = net.forward_with_input_derivs(x.view()).unwrap();
        for i in 0..20 {
            let arg = w0 * (w * x[[i, 0]] + b);
            assert!((d.value[[i, 0]] - arg.sin()).abs() < 1e-12);
            assert!((d.d_dx[[i, 0]] - w * w0 * arg.cos()).abs() < 1e-12);
            assert!((d.d2_dx2[[i, 0]] + w * w * w0 * w0 * arg.sin()).abs() < 1e-12);
            assert_eq!(d.d_dt[[i, 0]], 0.0);
        }
    }

    #[test]
    fn value_channel_matches_forward() {
        let net = init_siren(&[3, 32, 32, 3], 30.0, 9).unwrap();
        let x = rows(50, 2);
        let plain = net.forward(x.view()).unwrap();
        let d = net.forward_with_input_derivs(x.view()).unwrap();
        let diff = (&plain - &d.value)
            .mapv(f64::abs)
            .fold(0.0f64, |a, &b| a.max(b));
        assert!(diff <= 1e-14, "{diff}");
    }

    #[test]
    fn zero_net_square_loss_has_zero_gradient() {
        let mut net = init_siren(&[3, 8, 8, 1], 30.0, 4).unwrap();
        for p in net.params_mut() {
            p.fill(0.0);
        }
        let x = rows(16, 3);
        let (loss, grads) = loss_gradient(&[(&net, x.view())], |b| {
            let v = &b[0].value;
            let n = v.len() as f64;
            let mut adj = DerivativeBundle::zeros(b[0].rows(), 1);
            adj.value = v.mapv(|e| 2.0 * e / n);
            Ok((v.mapv(|e| e * e).sum() / n, vec![adj]))
        })
        .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads[0].norm(), 0.0);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let net = init_siren(&[3, 4, 1], 30.0, 4).unwrap();
        let x = rows(4, 3);
        let r = loss_gradient(&[(&net, x.view())], |b| {
            Ok((f64::NAN, vec![DerivativeBundle::zeros(b[0].rows(), 1)]))
        });
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Activation, Layer, Network, INPUT_DIM};
use crate::error::{Error, Result};

/// Frequency scale for sine networks when none is configured.
pub const DEFAULT_OMEGA0: f64 = 30.0;

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::config(
            "layer sizes need an input and an output entry",
        ));
    }
    if sizes[0] != INPUT_DIM {
        return Err(Error::config(format!(
            "networks take (x, t, x0): first layer size must be {INPUT_DIM}, got {}",
            sizes[0]
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::config("layer sizes must be positive"));
    }
    Ok(())
}

/// Sine network with SIREN initialization.
///
/// The first layer draws weights from `U(-1/fan_in, 1/fan_in)`, later layers
/// from `U(-sqrt(6/fan_in)/omega0, sqrt(6/fan_in)/omega0)`. Biases follow the
/// usual dense-layer default `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`. All hidden
/// layers are `sin(omega0 * z)`; the output layer is linear.
pub fn init_siren(sizes: &[usize], omega0: f64, seed: u64) -> Result<Network> {
    check_sizes(sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = sizes.len() - 1;
    let layers = (0..n_layers)
        .map(|i| {
            let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
            let w_bound = if i == 0 {
                1.0 / fan_in as f64
            } else {
                (6.0 / fan_in as f64).sqrt() / omega0
            };
            let b_bound = 1.0 / (fan_in as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.gen_range(-w_bound..w_bound)
            });
            let bias = Array1::from_shape_simple_fn(fan_out, || rng.gen_range(-b_bound..b_bound));
            let activation = if i + 1 == n_layers {
                Activation::Identity
            } else {
                Activation::Sine
            };
            Layer {
                weights,
                bias,
                activation,
            }
        })
        .collect();
    Network::new(layers, omega0)
}

/// Tanh network with Glorot-normal weights, `N(0, 2/(fan_in + fan_out))`, and zero biases.
pub fn init_glorot(sizes: &[usize], seed: u64) -> Result<Network> {
    check_sizes(sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = sizes.len() - 1;
    let layers = (0..n_layers)
        .map(|i| {
            let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let weights =
                Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(&mut rng));
            let activation = if i + 1 == n_layers {
                Activation::Identity
            } else {
                Activation::Tanh
            };
            Layer {
                weights,
                bias: Array1::zeros(fan_out),
                activation,
            }
        })
        .collect();
    // omega0 is unused by tanh layers but kept for a uniform checkpoint layout.
    Network::new(layers, DEFAULT_OMEGA0)
}

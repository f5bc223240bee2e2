//! Time-series error metrics, impulse-response extraction and timing.

use std::time::{Duration, Instant};

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DomainSpec, Normalization};
use crate::net::Network;

/// Gate level relative to the reference peak, in dB.
pub const GATE_DB: f64 = -60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSummary {
    /// Gated mean relative error, as a fraction.
    pub mu_rel: f64,
    /// Ungated maximum absolute error.
    pub inf_abs: f64,
    /// Samples inside the gate.
    pub n_gated: usize,
}

fn check_lengths(pred: &[f64], reference: &[f64]) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(Error::dim(format!(
            "series lengths differ: {} predicted, {} reference",
            pred.len(),
            reference.len()
        )));
    }
    Ok(())
}

/// Indices where `|ref|` is within 60 dB of the reference peak.
pub fn gate(reference: &[f64]) -> Vec<usize> {
    let peak = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 10f64.powf(GATE_DB / 20.0) * peak;
    reference
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() >= floor && r.abs() > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Mean of `|pred - ref| / |ref|` over the gate.
pub fn mu_rel(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(pred, reference)?;
    let g = gate(reference);
    if g.is_empty() {
        return Err(Error::numerical(
            "reference series is silent; the -60 dB gate is empty",
        ));
    }
    let sum: f64 = g
        .iter()
        .map(|&i| (pred[i] - reference[i]).abs() / reference[i].abs())
        .sum();
    Ok(sum / g.len() as f64)
}

/// Maximum absolute difference over all samples.
pub fn inf_abs(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(pred, reference)?;
    Ok(pred
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (p, r)| m.max((p - r).abs())))
}

pub fn summarize(pred: &[f64], reference: &[f64]) -> Result<ErrorSummary> {
    Ok(ErrorSummary {
        mu_rel: mu_rel(pred, reference)?,
        inf_abs: inf_abs(pred, reference)?,
        n_gated: gate(reference).len(),
    })
}

/// Surrogate impulse response on a uniform physical-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub fs: f64,
    /// Normalized evaluation times.
    pub t_norm: Vec<f64>,
    pub samples: Vec<f64>,
    /// Forward-pass wall clock.
    pub elapsed: Duration,
    /// Some samples lie past the trained time horizon.
    pub beyond_training: bool,
}

/// Physical sample times `i / fs`, `round(fs * duration)` of them.
pub fn sample_times(fs: f64, duration: f64) -> Result<Vec<f64>> {
    if !(fs > 0.0 && fs.is_finite()) || !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::config(format!(
            "need fs > 0 and duration >= 0, got fs = {fs}, duration = {duration}"
        )));
    }
    let n = (fs * duration).round() as usize;
    Ok((0..n).map(|i| i as f64 / fs).collect())
}

/// Evaluates the pressure network at `(x_receiver, t_i, x0)` for the physical
/// sample grid of `fs` over `duration` seconds.
pub fn extract_ir(
    net: &Network,
    domain: &DomainSpec,
    norm: &Normalization,
    x_receiver: f64,
    x0: f64,
    fs: f64,
    duration: f64,
) -> Result<ImpulseResponse> {
    if !domain.contains(x_receiver) || !domain.contains(x0) {
        return Err(Error::config(format!(
            "receiver {x_receiver} and source {x0} must lie in [{}, {}]",
            domain.x_min, domain.x_max
        )));
    }
    let t_norm: Vec<f64> = sample_times(fs, duration)?
        .into_iter()
        .map(|t| norm.to_normalized_time(t))
        .collect();
    let beyond_training = t_norm
        .last()
        .is_some_and(|&t| t > domain.t_max * (1.0 + 1e-12));
    if beyond_training {
        log::warn!(
            "impulse response reaches t = {:.3} beyond the trained horizon {}",
            t_norm.last().copied().unwrap_or_default(),
            domain.t_max
        );
    }
    let inputs = Array2::from_shape_fn((t_norm.len(), 3), |(i, j)| match j {
        0 => x_receiver,
        1 => t_norm[i],
        _ => x0,
    });
    let start = Instant::now();
    let out = net.forward(inputs.view())?;
    let elapsed = start.elapsed();
    Ok(ImpulseResponse {
        fs,
        t_norm,
        samples: out.column(0).to_vec(),
        elapsed,
        beyond_training,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkStats {
    pub n_samples: usize,
    pub threads: usize,
    pub timings_s: Vec<f64>,
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

/// Times `repeats` batched forward passes of `n_samples` points on the
/// current rayon pool.
pub fn benchmark_eval(
    net: &Network,
    domain: &DomainSpec,
    n_samples: usize,
    repeats: usize,
) -> Result<BenchmarkStats> {
    if n_samples == 0 || repeats == 0 {
        return Err(Error::config(
            "benchmark needs at least one sample and one repeat",
        ));
    }
    let inputs = Array2::from_shape_fn((n_samples, 3), |(i, j)| match j {
        0 => domain.x_min + 0.75 * domain.length(),
        1 => domain.t_max * i as f64 / n_samples as f64,
        _ => 0.5 * (domain.x_min + domain.x_max),
    });
    let mut timings_s = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = net.forward(inputs.view())?;
        timings_s.push(start.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    let mut sorted = timings_s.clone();
    sorted.sort_by(f64::total_cmp);
    let median_s = if repeats % 2 == 1 {
        sorted[repeats / 2]
    } else {
        0.5 * (sorted[repeats / 2 - 1] + sorted[repeats / 2])
    };
    Ok(BenchmarkStats {
        n_samples,
        threads: rayon::current_num_threads(),
        median_s,
        min_s: sorted[0],
        max_s: sorted[repeats - 1],
        timings_s,
    })
}

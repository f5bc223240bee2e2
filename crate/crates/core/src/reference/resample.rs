//! Band-limited interpolation with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Kernel half-width in input samples.
pub(crate) const HALF_WIDTH: usize = 24;
const KAISER_BETA: f64 = 8.0;

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut sum, mut term) = (1.0, 1.0);
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Evaluates a trace sampled every `dt` (starting at 0) at arbitrary times.
///
/// Samples outside the trace are supplied by even reflection about its ends;
/// at `t = 0` this matches a pulse released from rest.
pub fn resample_bandlimited(trace: &[f64], dt: f64, t_out: &[f64]) -> Result<Vec<f64>> {
    if t_out.is_empty() {
        return Ok(Vec::new());
    }
    if !(dt > 0.0) || trace.len() < 2 {
        return Err(Error::config(
            "resampling needs dt > 0 and at least two samples",
        ));
    }
    let last = trace.len() - 1;
    let t_end = last as f64 * dt;
    if let Some(t) = t_out
        .iter()
        .find(|&&t| !(0.0..=t_end * (1.0 + 1e-12)).contains(&t))
    {
        return Err(Error::config(format!(
            "resample time {t} outside the trace [0, {t_end}]"
        )));
    }
    let norm = bessel_i0(KAISER_BETA);
    let at = |k: i64| -> f64 {
        let period = 2 * last as i64;
        let mut k = k.rem_euclid(period);
        if k > last as i64 {
            k = period - k;
        }
        trace[k as usize]
    };
    let hw = HALF_WIDTH as i64;
    Ok(t_out
        .iter()
        .map(|&t| {
            let u = t / dt;
            let centre = u.floor() as i64;
            let mut acc = 0.0;
            for k in centre - hw + 1..=centre + hw {
                let d = u - k as f64;
                let r = d / HALF_WIDTH as f64;
                if r.abs() >= 1.0 {
                    continue;
                }
                let sinc = if d.abs() < 1e-12 {
                    1.0
                } else {
                    (PI * d).sin() / (PI * d)
                };
                let w = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                acc += at(k) * sinc * w;
            }
            acc
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i0_reference_values() {
        assert_eq!(bessel_i0(0.0), 1.0);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-15);
        assert!((bessel_i0(8.0) - 427.564_115_721_804_74).abs() < 1e-9);
    }

    #[test]
    fn reproduces_samples_on_grid() {
        let trace: Vec<f64> = (0..200).map(|i| (i as f64 * 0.05).cos()).collect();
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let out = resample_bandlimited(&trace, 0.01, &t).unwrap();
        for (a, b) in out.iter().zip(&trace) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sinusoid_amplitude_preserved() {
        let dt = 1.0 / 29_000.0;
        let f = 1000.0;
        let trace: Vec<f64> = (0..6000)
            .map(|i| (2.0 * PI * f * i as f64 * dt + 0.3).sin())
            .collect();
        let t: Vec<f64> = (200..9000).map(|i| i as f64 / 44_100.0).collect();
        let out = resample_bandlimited(&trace, dt, &t).unwrap();
        let amp = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((amp - 1.0).abs() < 1e-3, "{amp}");
        for (v, ti) in out.iter().zip(&t) {
            assert!((v - (2.0 * PI * f * ti + 0.3).sin()).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(resample_bandlimited(&[1.0, 2.0], 0.1, &[0.5]).is_err());
        assert!(resample_bandlimited(&[1.0, 2.0], 0.1, &[])
            .unwrap()
            .is_empty());
    }
}

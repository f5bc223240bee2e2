//! Reference integration of the accumulator ODEs
//!
//! `phi' + lambda phi = p`, `psi0' + alpha psi0 + beta psi1 = p`,
//! `psi1' + alpha psi1 - beta psi0 = 0`
//!
//! with classical RK4 and `p` linear between samples.

use crate::error::{Error, Result};
use crate::model::RationalAdmittance;

/// Accumulator histories aligned with the input pressure samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccumulatorSeries {
    /// One series per real pole.
    pub phi: Vec<Vec<f64>>,
    /// One series per complex pair.
    pub psi0: Vec<Vec<f64>>,
    pub psi1: Vec<Vec<f64>>,
}

impl AccumulatorSeries {
    pub fn len(&self) -> usize {
        self.phi
            .first()
            .or_else(|| self.psi0.first())
            .map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Accumulator values at sample `i` in network output order: phi, then psi0/psi1 per pair.
    pub fn state(&self, i: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self.phi.iter().map(|s| s[i]).collect();
        for (a, b) in self.psi0.iter().zip(&self.psi1) {
            out.push(a[i]);
            out.push(b[i]);
        }
        out
    }
}

/// Right-hand side of the accumulator system for state `y` (same order as
/// [`AccumulatorSeries::state`]) at boundary pressure `p`.
pub(crate) fn ade_rhs(adm: &RationalAdmittance, y: &[f64], p: f64, dy: &mut [f64]) {
    let q = adm.q();
    for (k, pole) in adm.real_poles.iter().enumerate() {
        dy[k] = p - pole.lambda * y[k];
    }
    for (k, pair) in adm.complex_pairs.iter().enumerate() {
        let (i0, i1) = (q + 2 * k, q + 2 * k + 1);
        dy[i0] = p - pair.alpha * y[i0] - pair.beta * y[i1];
        dy[i1] = -pair.alpha * y[i1] + pair.beta * y[i0];
    }
}

/// Wall normal velocity `Y_inf p + sum A phi + sum 2 (B psi0 + C psi1)`.
pub fn wall_velocity(adm: &RationalAdmittance, p: f64, state: &[f64]) -> f64 {
    let q = adm.q();
    let mut v = adm.y_inf * p;
    for (k, pole) in adm.real_poles.iter().enumerate() {
        v += pole.residue * state[k];
    }
    for (k, pair) in adm.complex_pairs.iter().enumerate() {
        v += 2.0 * (pair.b * state[q + 2 * k] + pair.c * state[q + 2 * k + 1]);
    }
    v
}

/// Integrates the accumulators from rest, driven by pressure samples spaced `dt` apart.
pub fn ade_integrate(adm: &RationalAdmittance, p: &[f64], dt: f64) -> Result<AccumulatorSeries> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config(format!(
            "time step must be positive, got {dt}"
        )));
    }
    adm.validate()?;
    let n = adm.n_accumulators();
    let mut y = vec![0.0; n];
    let mut hist: Vec<Vec<f64>> = vec![Vec::with_capacity(p.len()); n];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for (i, &p0) in p.iter().enumerate() {
        for (h, v) in hist.iter_mut().zip(&y) {
            h.push(*v);
        }
        let Some(&p1) = p.get(i + 1) else { break };
        let pm = 0.5 * (p0 + p1);
        ade_rhs(adm, &y, p0, &mut k1);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * dt * k1[j];
        }
        ade_rhs(adm, &tmp, pm, &mut k2);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * dt * k2[j];
        }
        ade_rhs(adm, &tmp, pm, &mut k3);
        for j in 0..n {
            tmp[j] = y[j] + dt * k3[j];
        }
        ade_rhs(adm, &tmp, p1, &mut k4);
        for j in 0..n {
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    let q = adm.q();
    let mut out = AccumulatorSeries {
        phi: hist.drain(..q).collect(),
        ..AccumulatorSeries::default()
    };
    for pair in hist.chunks_exact(2) {
        out.psi0.push(pair[0].clone());
        out.psi1.push(pair[1].clone());
    }
    Ok(out)
}

//! Boundary material data.
//!
//! A rigidly backed porous layer is described by Miki's empirical model, its
//! surface admittance is fitted to the pole-residue form of
//! [`RationalAdmittance`] by vector fitting, and [`ade_integrate`] integrates
//! the matching auxiliary differential equations as an independent oracle.
//!
//! All impedances use the `e^{-i w t}` time convention, the one implied by the
//! `-i w` variable of the admittance.

mod ade;
mod vfit;

pub(crate) use ade::ade_rhs;
pub use ade::{ade_integrate, wall_velocity, AccumulatorSeries};
pub use vfit::{vector_fit, vector_fit_weighted, FitReport};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RationalAdmittance;

/// Porous layer on a rigid backing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PorousLayer {
    /// Thickness in m.
    pub d_mat: f64,
    /// Flow resistivity; N s m^-4 physically, divided by `c_phys` once normalized.
    pub sigma_mat: f64,
}

impl Default for PorousLayer {
    fn default() -> Self {
        Self {
            d_mat: 0.10,
            sigma_mat: 8000.0,
        }
    }
}

impl PorousLayer {
    pub fn new(d_mat: f64, sigma_mat: f64) -> Result<Self> {
        let layer = Self { d_mat, sigma_mat };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_mat > 0.0 && self.d_mat.is_finite())
            || !(self.sigma_mat > 0.0 && self.sigma_mat.is_finite())
        {
            return Err(Error::config(format!(
                "porous layer needs positive thickness and flow resistivity, got d = {}, sigma = {}",
                self.d_mat, self.sigma_mat
            )));
        }
        Ok(())
    }
}

/// Linearly sampled frequency band in Hz (physical or normalized).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyBand {
    pub f_min: f64,
    pub f_max: f64,
    pub n_samples: usize,
}

impl Default for FrequencyBand {
    fn default() -> Self {
        Self {
            f_min: 20.0,
            f_max: 1000.0,
            n_samples: 200,
        }
    }
}

impl FrequencyBand {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max.is_finite()) {
            return Err(Error::config(format!(
                "frequency band needs 0 < f_min < f_max, got [{}, {}]",
                self.f_min, self.f_max
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::config("frequency band needs at least 2 samples"));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_samples;
        (0..n)
            .map(|i| self.f_min + (self.f_max - self.f_min) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Angular frequencies `2 pi f`.
    pub fn omegas(&self) -> Vec<f64> {
        self.frequencies()
            .into_iter()
            .map(|f| 2.0 * PI * f)
            .collect()
    }
}

/// Characteristic impedance `Z_c` and wavenumber `k_c` of the porous material
/// from Miki's model, with `X = f / sigma`:
/// `Z_c = rho0 c (1 + 0.0699 X^-0.632 + i 0.1071 X^-0.632)` and
/// `k_c = (w / c)(1 + 0.1093 X^-0.618 + i 0.1597 X^-0.618)`.
/// Frequency and resistivity must share units, so the same call serves
/// physical inputs and normalized ones (`c = 1`).
pub fn miki_characteristic(f: f64, sigma_mat: f64, rho0: f64, c: f64) -> (Complex64, Complex64) {
    let x = f / sigma_mat;
    let xz = x.powf(-0.632);
    let xk = x.powf(-0.618);
    let zc = rho0 * c * Complex64::new(1.0 + 0.0699 * xz, 0.1071 * xz);
    let kc = 2.0 * PI * f / c * Complex64::new(1.0 + 0.1093 * xk, 0.1597 * xk);
    (zc, kc)
}

/// Surface impedance `Z_s = i Z_c cot(k_c d)` of a rigidly backed porous layer.
pub fn miki_surface_impedance(f: f64, layer: &PorousLayer, rho0: f64, c: f64) -> Result<Complex64> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::config(format!(
            "frequency must be positive, got {f}"
        )));
    }
    layer.validate()?;
    let (zc, kc) = miki_characteristic(f, layer.sigma_mat, rho0, c);
    let arg = kc * layer.d_mat;
    Ok(Complex64::i() * zc * arg.cos() / arg.sin())
}

/// Divides flow resistivity and band edges by `c_phys`.
pub fn normalize_material(
    layer: &PorousLayer,
    band: &FrequencyBand,
    c_phys: f64,
) -> Result<(PorousLayer, FrequencyBand)> {
    if !(c_phys > 0.0) {
        return Err(Error::config(format!(
            "c_phys must be positive, got {c_phys}"
        )));
    }
    Ok((
        PorousLayer {
            d_mat: layer.d_mat,
            sigma_mat: layer.sigma_mat / c_phys,
        },
        FrequencyBand {
            f_min: band.f_min / c_phys,
            f_max: band.f_max / c_phys,
            n_samples: band.n_samples,
        },
    ))
}

/// Target admittance samples `1 / Z_s` at the band's angular frequencies.
pub fn miki_admittance_samples(
    layer: &PorousLayer,
    band: &FrequencyBand,
    rho0: f64,
    c: f64,
) -> Result<Vec<Complex64>> {
    band.validate()?;
    band.frequencies()
        .into_iter()
        .map(|f| miki_surface_impedance(f, layer, rho0, c).map(|z| z.inv()))
        .collect()
}

/// Least-squares weighting of the admittance samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    /// Weights `1 / |Y_k|`, so the fit minimizes relative rather than absolute error.
    #[default]
    Relative,
}

/// Miki admittance of a normalized layer fitted over a normalized band.
pub fn fit_material(
    layer: &PorousLayer,
    band: &FrequencyBand,
    rho0: f64,
    q: usize,
    s: usize,
    iterations: usize,
    weighting: Weighting,
) -> Result<FitReport> {
    let samples = miki_admittance_samples(layer, band, rho0, 1.0)?;
    let weights: Option<Vec<f64>> = match weighting {
        Weighting::Uniform => None,
        Weighting::Relative => Some(samples.iter().map(|y| 1.0 / y.norm()).collect()),
    };
    vector_fit_weighted(
        &band.omegas(),
        &samples,
        weights.as_deref(),
        q,
        s,
        iterations,
    )
}

pub fn evaluate_admittance(adm: &RationalAdmittance, omega: f64) -> Complex64 {
    adm.evaluate(omega)
}

/// Plane-wave reflection coefficient `(Z_s - rho0 c) / (Z_s + rho0 c)` of a wall with admittance `y`.
pub fn reflection_from_admittance(y: Complex64, rho0: f64, c: f64) -> Complex64 {
    let z = y.inv();
    (z - rho0 * c) / (z + rho0 * c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_air_limit() {
        let rc = 1.2 * 343.0;
        let mut last = f64::INFINITY;
        for x in [1e2, 1e4, 1e6, 1e8] {
            let (zc, _) = miki_characteristic(x * 8000.0, 8000.0, 1.2, 343.0);
            let dev = (zc - rc).norm() / rc;
            assert!(dev < last);
            last = dev;
        }
        assert!(last < 1e-5, "{last}");
    }

    #[test]
    fn deep_layer_is_anechoic() {
        let deep = PorousLayer::new(20.0, 8000.0).unwrap();
        for f in [50.0, 200.0, 800.0] {
            let zs = miki_surface_impedance(f, &deep, 1.2, 343.0).unwrap();
            let (zc, _) = miki_characteristic(f, 8000.0, 1.2, 343.0);
            assert!((zs - zc).norm() / zc.norm() < 1e-9, "f = {f}: {zs} vs {zc}");
        }
    }

    #[test]
    fn passive_over_band() {
        let layer = PorousLayer::default();
        let band = FrequencyBand {
            n_samples: 2000,
            ..FrequencyBand::default()
        };
        for f in band.frequencies() {
            assert!(
                miki_surface_impedance(f, &layer, 1.2, 343.0).unwrap().re >= 0.0,
                "f = {f}"
            );
        }
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let layer = PorousLayer::default();
        let (ln, bn) = normalize_material(&layer, &FrequencyBand::default(), 343.0).unwrap();
        assert!((ln.sigma_mat - 23.323_615_160_349_85).abs() < 1e-12);
        assert!((bn.f_min - 0.058_309_037_900_874_63).abs() < 1e-15);
        assert!((bn.f_max - 2.915_451_895_043_731_6).abs() < 1e-14);
        let (same, band) = normalize_material(&layer, &FrequencyBand::default(), 1.0).unwrap();
        assert_eq!(same, layer);
        assert_eq!(band, FrequencyBand::default());
        // Normalized impedance is the physical one divided by c_phys.
        let zp = miki_surface_impedance(500.0, &layer, 1.2, 343.0).unwrap();
        let zn = miki_surface_impedance(500.0 / 343.0, &ln, 1.2, 1.0).unwrap();
        assert!((zp / 343.0 - zn).norm() < 1e-12 * zn.norm());
    }

    #[test]
    fn rejects_bad_inputs() {
        let layer = PorousLayer::default();
        assert!(miki_surface_impedance(0.0, &layer, 1.2, 343.0).is_err());
        assert!(PorousLayer::new(0.0, 1.0).is_err());
        assert!(FrequencyBand {
            f_min: 10.0,
            f_max: 5.0,
            n_samples: 10
        }
        .validate()
        .is_err());
    }

    #[test]
    fn admittance_symmetry_and_limits() {
        let adm = RationalAdmittance {
            y_inf: 0.3,
            real_poles: vec![crate::model::RealPole {
                residue: 2.0,
                lambda: 4.0,
            }],
            complex_pairs: vec![crate::model::ComplexPair {
                b: 0.5,
                c: -0.2,
                alpha: 1.0,
                beta: 3.0,
            }],
        };
        for w in [0.1, 1.0, 2.9, 17.0] {
            let a = evaluate_admittance(&adm, w);
            let b = evaluate_admittance(&adm, -w);
            assert!((a - b.conj()).norm() < 1e-15);
        }
        assert!((evaluate_admittance(&adm, 1e12) - 0.3).norm() < 1e-10);
        let single = RationalAdmittance {
            y_inf: 0.1,
            real_poles: vec![crate::model::RealPole {
                residue: 2.0,
                lambda: 4.0,
            }],
            complex_pairs: vec![],
        };
        assert_eq!(
            evaluate_admittance(&single, 0.0),
            Complex64::new(0.1 + 0.5, 0.0)
        );
    }

    #[test]
    fn matched_wall_does_not_reflect() {
        let r = reflection_from_admittance(Complex64::new(1.0 / 1.2, 0.0), 1.2, 1.0);
        assert!(r.norm() < 1e-15);
    }
}

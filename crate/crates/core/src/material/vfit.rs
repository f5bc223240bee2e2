//! Vector fitting (Gustavsen and Semlyen) in the variable `s = -i w`.
//!
//! The model `Y(s) = d + sum r_n / (s - a_n)` is fitted with poles `a_n` in the
//! left half-plane, which maps onto [`RationalAdmittance`] via `lambda = -a`
//! for real poles and `alpha + i beta = -a` for complex ones. Complex pairs
//! are carried in the usual real basis
//! `1/(s-a) + 1/(s-a*)` and `i/(s-a) - i/(s-a*)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ComplexPair, RationalAdmittance, RealPole};

/// Condition number beyond which the residue solve is rejected.
const MAX_CONDITION: f64 = 1e13;

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub admittance: RationalAdmittance,
    /// `max_k |Y_fit - Y_k| / |Y_k|` over the samples.
    pub max_rel_error: f64,
    pub rms_rel_error: f64,
    pub iterations: usize,
    /// False when the poles were still moving after the last iteration.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pole {
    Real(f64),
    /// One pole of a conjugate pair.
    Pair(Complex64),
}

fn n_basis(poles: &[Pole]) -> usize {
    poles
        .iter()
        .map(|p| match p {
            Pole::Real(_) => 1,
            Pole::Pair(_) => 2,
        })
        .sum()
}

/// Basis values for one sample, in pole order.
fn basis(poles: &[Pole], s: Complex64, out: &mut Vec<Complex64>) {
    out.clear();
    for p in poles {
        match *p {
            Pole::Real(a) => out.push(1.0 / (s - a)),
            Pole::Pair(a) => {
                let (u, v) = (1.0 / (s - a), 1.0 / (s - a.conj()));
                out.push(u + v);
                out.push(Complex64::i() * (u - v));
            }
        }
    }
}

/// Column-equilibrated SVD least squares. Returns the solution and the
/// condition number of the scaled matrix. Singular values below
/// `rcond * s_max` are dropped, giving the minimum-norm solution.
fn lstsq(mut a: DMatrix<f64>, b: DVector<f64>, rcond: f64) -> Result<(DVector<f64>, f64)> {
    let scales: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).unscale_mut(*s);
    }
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition = if s_min > 0.0 {
        s_max / s_min
    } else {
        f64::INFINITY
    };
    let mut x = svd
        .solve(&b, rcond * s_max)
        .map_err(|e| Error::numerical(format!("least squares: {e}")))?;
    for (j, s) in scales.iter().enumerate() {
        x[j] /= s;
    }
    Ok((x, condition))
}

/// Stacks real and imaginary parts of complex rows.
fn real_system(
    rows: &[Vec<Complex64>],
    rhs: &[Complex64],
    weights: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let k = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let mut a = DMatrix::zeros(2 * k, n);
    let mut b = DVector::zeros(2 * k);
    for (i, ((row, y), w)) in rows.iter().zip(rhs).zip(weights).enumerate() {
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = w * v.re;
            a[(k + i, j)] = w * v.im;
        }
        b[i] = w * y.re;
        b[k + i] = w * y.im;
    }
    (a, b)
}

/// Zeros of the sigma function: the relocated poles.
fn relocate(poles: &[Pole], ctilde: &[f64]) -> Vec<Complex64> {
    let n = n_basis(poles);
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut bvec = vec![0.0; n];
    let mut j = 0;
    for p in poles {
        match *p {
            Pole::Real(a) => {
                h[(j, j)] = a;
                bvec[j] = 1.0;
                j += 1;
            }
            Pole::Pair(a) => {
                h[(j, j)] = a.re;
                h[(j, j + 1)] = a.im;
                h[(j + 1, j)] = -a.im;
                h[(j + 1, j + 1)] = a.re;
                bvec[j] = 2.0;
                j += 2;
            }
        }
    }
    for r in 0..n {
        for c in 0..n {
            h[(r, c)] -= bvec[r] * ctilde[c];
        }
    }
    h.complex_eigenvalues().iter().copied().collect()
}

/// Sorts eigenvalues into `q` real poles and `s` pairs, flipping unstable
/// ones into the left half-plane. When the eigenvalue structure does not
/// match, the closest real poles are merged into a pair or the flattest pair
/// is split into two real poles.
fn classify(eigs: &[Complex64], q: usize, s: usize) -> Vec<Pole> {
    let mut reals = Vec::new();
    let mut pairs = Vec::new();
    for e in eigs {
        let scale = e.norm().max(1e-300);
        let re = -e.re.abs().max(1e-12 * scale);
        if e.im.abs() <= 1e-10 * scale {
            reals.push(re);
        } else if e.im > 0.0 {
            pairs.push(Complex64::new(re, e.im));
        }
    }
    while reals.len() > q && pairs.len() < s && reals.len() >= 2 {
        reals.sort_by(f64::total_cmp);
        let k = (0..reals.len() - 1)
            .min_by(|&i, &j| {
                (reals[i + 1] / reals[i])
                    .total_cmp(&(reals[j + 1] / reals[j]))
                    .reverse()
            })
            .expect("two reals");
        let (a, b) = (reals[k], reals.remove(k + 1));
        reals.remove(k);
        let mid = 0.5 * (a + b);
        pairs.push(Complex64::new(
            mid,
            (0.5 * (b - a)).abs().max(1e-3 * mid.abs()),
        ));
    }
    while pairs.len() > s && reals.len() + 2 <= q {
        let k = (0..pairs.len())
            .min_by(|&i, &j| {
                (pairs[i].im / pairs[i].re.abs()).total_cmp(&(pairs[j].im / pairs[j].re.abs()))
            })
            .expect("a pair");
        let p = pairs.remove(k);
        reals.push(p.re - p.im.abs().min(0.5 * p.re.abs()));
        reals.push(p.re + p.im.abs().min(0.5 * p.re.abs()));
    }
    reals.sort_by(f64::total_cmp);
    pairs.sort_by(|a, b| a.im.total_cmp(&b.im));
    reals
        .into_iter()
        .map(Pole::Real)
        .chain(pairs.into_iter().map(Pole::Pair))
        .collect()
}

fn initial_poles(omegas: &[f64], q: usize, s: usize) -> Vec<Pole> {
    let lo = omegas
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(1e-12);
    let hi = omegas.iter().copied().fold(0.0, f64::max).max(lo * 1.0001);
    let logspace = |n: usize| -> Vec<f64> {
        match n {
            0 => vec![],
            1 => vec![(lo * hi).sqrt()],
            _ => (0..n)
                .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
                .collect(),
        }
    };
    let mut poles: Vec<Pole> = logspace(q).into_iter().map(|w| Pole::Real(-w)).collect();
    poles.extend(
        logspace(s)
            .into_iter()
            .map(|w| Pole::Pair(Complex64::new(-w / 100.0, w))),
    );
    poles
}

/// Residues for fixed poles; returns the model and its sample errors.
fn fit_residues(
    poles: &[Pole],
    ss: &[Complex64],
    ys: &[Complex64],
    weights: &[f64],
) -> Result<(RationalAdmittance, f64, f64)> {
    let mut rows = Vec::with_capacity(ss.len());
    let mut buf = Vec::new();
    for s in ss {
        basis(poles, *s, &mut buf);
        let mut row = buf.clone();
        row.push(Complex64::new(1.0, 0.0));
        rows.push(row);
    }
    let (a, b) = real_system(&rows, ys, weights);
    let (x, condition) = lstsq(a, b, 1e-15)?;
    if !(condition < MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let mut adm = RationalAdmittance {
        y_inf: x[x.len() - 1],
        ..RationalAdmittance::default()
    };
    let mut j = 0;
    for p in poles {
        match *p {
            Pole::Real(a) => {
                adm.real_poles.push(RealPole {
                    residue: x[j],
                    lambda: -a,
                });
                j += 1;
            }
            Pole::Pair(a) => {
                // Basis pole a with residue x_j + i x_{j+1}; the model's pole
                // -(alpha + i beta) carries B + iC.
                let (mut beta, mut c) = (-a.im, x[j + 1]);
                if beta < 0.0 {
                    beta = -beta;
                    c = -c;
                }
                adm.complex_pairs.push(ComplexPair {
                    b: x[j],
                    c,
                    alpha: -a.re,
                    beta,
                });
                j += 2;
            }
        }
    }
    let (max, rms) = sample_errors(&adm, ss, ys);
    Ok((adm, max, rms))
}

fn sample_errors(adm: &RationalAdmittance, ss: &[Complex64], ys: &[Complex64]) -> (f64, f64) {
    let mut max = 0.0f64;
    let mut sum = 0.0;
    for (s, y) in ss.iter().zip(ys) {
        // s = -i w  =>  w = i s
        let w = (Complex64::i() * s).re;
        let e = (adm.evaluate(w) - y).norm() / y.norm().max(f64::MIN_POSITIVE);
        max = max.max(e);
        sum += e * e;
    }
    (max, (sum / ss.len() as f64).sqrt())
}

/// Fits `q` real poles and `s` complex pairs to admittance samples at angular
/// frequencies `omegas`.
///
/// Each iteration solves the sigma-weighted least-squares problem and moves
/// the poles to the zeros of sigma. The returned model is the best one seen
/// (by RMS relative error); `converged` reports whether the poles settled.
pub fn vector_fit(
    omegas: &[f64],
    samples: &[Complex64],
    q: usize,
    s: usize,
    iterations: usize,
) -> Result<FitReport> {
    vector_fit_weighted(omegas, samples, None, q, s, iterations)
}

/// [`vector_fit`] with per-sample least-squares weights (uniform when `None`).
pub fn vector_fit_weighted(
    omegas: &[f64],
    samples: &[Complex64],
    weights: Option<&[f64]>,
    q: usize,
    s: usize,
    iterations: usize,
) -> Result<FitReport> {
    let n = q + 2 * s;
    if omegas.len() != samples.len() {
        return Err(Error::dim(format!(
            "{} frequencies but {} samples",
            omegas.len(),
            samples.len()
        )));
    }
    if omegas.len() < 2 * (n + 1) {
        return Err(Error::config(format!(
            "vector fit with {n} poles needs at least {} samples, got {}",
            2 * (n + 1),
            omegas.len()
        )));
    }
    if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) || samples.iter().any(|y| !y.is_finite())
    {
        return Err(Error::config(
            "vector fit samples must be finite at positive frequencies",
        ));
    }
    let weights = match weights {
        Some(w) if w.len() != samples.len() => {
            return Err(Error::dim(format!(
                "{} weights for {} samples",
                w.len(),
                samples.len()
            )))
        }
        Some(w) if w.iter().any(|w| !(w.is_finite() && *w > 0.0)) => {
            return Err(Error::config(
                "vector fit weights must be positive and finite",
            ))
        }
        Some(w) => w.to_vec(),
        None => vec![1.0; samples.len()],
    };
    let ss: Vec<Complex64> = omegas.iter().map(|&w| Complex64::new(0.0, -w)).collect();
    let mut poles = initial_poles(omegas, q, s);
    let mut best = fit_residues(&poles, &ss, samples, &weights)?;
    let mut converged = n == 0;
    let mut iters = 0;
    let mut buf = Vec::new();
    while iters < iterations && !converged {
        iters += 1;
        let mut rows = Vec::with_capacity(ss.len());
        for (sk, yk) in ss.iter().zip(samples) {
            basis(&poles, *sk, &mut buf);
            let mut row = buf.clone();
            row.push(Complex64::new(1.0, 0.0));
            row.extend(buf.iter().map(|phi| -yk * phi));
            rows.push(row);
        }
        let (a, b) = real_system(&rows, samples, &weights);
        let (x, _) = lstsq(a, b, 1e-14)?;
        let ctilde: Vec<f64> = x.iter().skip(n + 1).copied().collect();
        let new = classify(&relocate(&poles, &ctilde), q, s);
        let shift = poles
            .iter()
            .zip(&new)
            .map(|(a, b)| match (a, b) {
                (Pole::Real(x), Pole::Real(y)) => (x - y).abs() / y.abs(),
                (Pole::Pair(x), Pole::Pair(y)) => (x - y).norm() / y.norm(),
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max);
        poles = new;
        let candidate = fit_residues(&poles, &ss, samples, &weights)?;
        if candidate.2 <= best.2 {
            best = candidate;
        }
        converged = shift < 1e-10;
    }
    if !converged {
        log::warn!(
            "vector fit did not converge in {iterations} iterations; max relative error {:.3e}",
            best.1
        );
    }
    Ok(FitReport {
        admittance: best.0,
        max_rel_error: best.1,
        rms_rel_error: best.2,
        iterations: iters,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known() -> RationalAdmittance {
        RationalAdmittance {
            y_inf: 0.12,
            real_poles: vec![
                RealPole {
                    residue: 0.9,
                    lambda: 1.3,
                },
                RealPole {
                    residue: -2.5,
                    lambda: 9.0,
                },
            ],
            complex_pairs: vec![ComplexPair {
                b: 0.4,
                c: 0.25,
                alpha: 1.5,
                beta: 6.0,
            }],
        }
    }

    fn band(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 0.3 + 18.0 * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn synthetic_round_trip() {
        let adm = known();
        let w = band(150);
        let y: Vec<Complex64> = w.iter().map(|&w| adm.evaluate(w)).collect();
        let fit = vector_fit(&w, &y, 2, 1, 30).unwrap();
        assert!(fit.max_rel_error < 1e-8, "{fit:?}");
        fit.admittance.validate().unwrap();
        let mut lambdas: Vec<f64> = fit.admittance.real_poles.iter().map(|p| p.lambda).collect();
        lambdas.sort_by(f64::total_cmp);
        assert!(
            (lambdas[0] - 1.3).abs() < 1e-6 && (lambdas[1] - 9.0).abs() < 1e-6,
            "{lambdas:?}"
        );
        let pair = fit.admittance.complex_pairs[0];
        assert!((pair.alpha - 1.5).abs() < 1e-6 && (pair.beta - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_target() {
        let w = band(40);
        let y = vec![Complex64::new(0.7, 0.0); w.len()];
        let fit = vector_fit(&w, &y, 2, 1, 10).unwrap();
        assert!((fit.admittance.y_inf - 0.7).abs() < 1e-10);
        assert!(fit
            .admittance
            .real_poles
            .iter()
            .all(|p| p.residue.abs() < 1e-10));
        assert!(fit
            .admittance
            .complex_pairs
            .iter()
            .all(|p| p.b.abs() < 1e-10 && p.c.abs() < 1e-10));
        fit.admittance.validate().unwrap();
    }

    #[test]
    fn flips_unstable_poles() {
        let poles = classify(
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.5, 3.0),
                Complex64::new(0.5, -3.0),
            ],
            1,
            1,
        );
        assert_eq!(poles[0], Pole::Real(-2.0));
        assert_eq!(poles[1], Pole::Pair(Complex64::new(-0.5, 3.0)));
    }

    #[test]
    fn structure_is_enforced() {
        let eigs = [-1.0, -1.1, -5.0, -9.0].map(|r| Complex64::new(r, 0.0));
        let poles = classify(&eigs, 2, 1);
        assert_eq!(
            poles.iter().filter(|p| matches!(p, Pole::Real(_))).count(),
            2
        );
        let eigs = [
            Complex64::new(-1.0, 0.1),
            Complex64::new(-1.0, -0.1),
            Complex64::new(-3.0, 4.0),
            Complex64::new(-3.0, -4.0),
        ];
        let poles = classify(&eigs, 2, 1);
        assert_eq!(poles.len(), 3);
        assert!(poles.iter().all(|p| match p {
            Pole::Real(a) => *a < 0.0,
            Pole::Pair(a) => a.re < 0.0,
        }));
    }

    #[test]
    fn input_checks() {
        let w = band(5);
        let y = vec![Complex64::new(1.0, 0.0); 5];
        assert!(matches!(vector_fit(&w, &y, 2, 1, 5), Err(Error::Config(_))));
        assert!(matches!(
            vector_fit(&w, &y[..4], 0, 0, 5),
            Err(Error::Dimension(_))
        ));
        let mut bad = y.clone();
        bad[2] = Complex64::new(f64::NAN, 0.0);
        assert!(vector_fit(&w, &bad, 0, 1, 5).is_err());
    }

    #[test]
    fn coincident_frequencies_are_rank_deficient() {
        let w = vec![2.0; 20];
        let y = vec![Complex64::new(0.3, 0.1); 20];
        assert!(matches!(
            vector_fit(&w, &y, 2, 1, 5),
            Err(Error::RankDeficient { .. })
        ));
    }
}

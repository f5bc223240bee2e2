//! Residuals and loss assembly.
//!
//! The total objective is
//! `L = L_pde + lambda_ic L_ic + lambda_bc L_bc + L_ade`, every term a mean of
//! squared residuals over its collocation partition. For frequency-dependent
//! walls an auxiliary network predicts scaled accumulators
//! `phi~_k = l_phi_k phi_k`, `psi0~_k = l_psi0_k psi0_k`, `psi1~_k = l_psi1_k psi1_k`;
//! their ODE residuals are weighted by `lambda_ade / l` and the unscaled
//! accumulators rebuild the wall velocity `v_n`.
//!
//! Adjoints are written out by hand so [`PhysicsLoss::gradient`] can hand them
//! straight to [`crate::net::loss_gradient`].

use std::io::Write;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ic_pressure, BoundarySpec, DomainSpec, GaussianSource, RationalAdmittance, C_NORM,
};
use crate::net::{loss_gradient, DerivativeBundle, Gradient, Network};
use crate::sampling::TrainingSet;

/// Anything that yields values and `x`/`t` derivatives at `(x, t, x0)` rows.
pub trait FieldModel {
    fn derivatives(&self, pts: ArrayView2<f64>) -> Result<DerivativeBundle>;
    fn output_dim(&self) -> usize;
}

impl FieldModel for Network {
    fn derivatives(&self, pts: ArrayView2<f64>) -> Result<DerivativeBundle> {
        self.forward_with_input_derivs(pts)
    }

    fn output_dim(&self) -> usize {
        Network::output_dim(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_ic: f64,
    pub lambda_bc: f64,
    /// Applied to every accumulator before division by its scaling factor.
    pub lambda_ade: f64,
    pub l_phi: Vec<f64>,
    pub l_psi0: Vec<f64>,
    pub l_psi1: Vec<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ic: 20.0,
            lambda_bc: 1.0,
            lambda_ade: 10.0,
            l_phi: vec![10.3, 261.4],
            l_psi0: vec![45.9],
            l_psi1: vec![22.0],
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_ic, self.lambda_bc, self.lambda_ade]
            .into_iter()
            .chain(self.l_phi.iter().copied())
            .chain(self.l_psi0.iter().copied())
            .chain(self.l_psi1.iter().copied());
        for w in all {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::config(format!(
                    "loss weights and scalings must be positive, got {w}"
                )));
            }
        }
        Ok(())
    }

    fn check_admittance(&self, adm: &RationalAdmittance) -> Result<()> {
        if self.l_phi.len() != adm.q()
            || self.l_psi0.len() != adm.s()
            || self.l_psi1.len() != adm.s()
        {
            return Err(Error::dim(format!(
                "scaling factors ({} phi, {} psi0, {} psi1) do not match Q = {}, S = {}",
                self.l_phi.len(),
                self.l_psi0.len(),
                self.l_psi1.len(),
                adm.q(),
                adm.s()
            )));
        }
        Ok(())
    }

    /// Scaling factors in accumulator output order.
    pub fn scales(&self) -> Vec<f64> {
        self.l_phi
            .iter()
            .chain(&self.l_psi0)
            .chain(&self.l_psi1)
            .copied()
            .collect()
    }
}

/// Loss decomposition for one evaluation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub total: f64,
    pub pde: f64,
    pub ic: f64,
    pub bc: f64,
    /// Unweighted mean-square residual per accumulator, output order.
    pub ade: Vec<f64>,
    /// Weighted accumulator loss as it enters `total`.
    pub ade_total: f64,
}

impl LossReport {
    pub fn recompose(&self, weights: &LossWeights) -> f64 {
        self.pde + weights.lambda_ic * self.ic + weights.lambda_bc * self.bc + self.ade_total
    }

    pub fn csv_header(n_ade: usize) -> String {
        let mut h = String::from("epoch,total,pde,ic,bc,ade_total");
        for k in 0..n_ade {
            h.push_str(&format!(",ade_{k}"));
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut r = format!(
            "{},{:e},{:e},{:e},{:e},{:e}",
            self.epoch, self.total, self.pde, self.ic, self.bc, self.ade_total
        );
        for a in &self.ade {
            r.push_str(&format!(",{a:e}"));
        }
        r
    }

    pub fn write_log(reports: &[LossReport], mut out: impl Write) -> Result<()> {
        let n_ade = reports.first().map_or(0, |r| r.ade.len());
        writeln!(out, "{}", Self::csv_header(n_ade))?;
        for r in reports {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

fn mean_sq(r: &Array1<f64>) -> f64 {
    if r.is_empty() {
        0.0
    } else {
        r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
    }
}

/// Outward normal in 1D: `-1` at the left wall, `+1` at the right wall.
pub fn normal_signs(pts: ArrayView2<f64>, domain: &DomainSpec) -> Array1<f64> {
    let mid = 0.5 * (domain.x_min + domain.x_max);
    pts.column(0).mapv(|x| if x < mid { -1.0 } else { 1.0 })
}

/// `p_tt - c^2 p_xx` from a bundle.
pub fn pde_residual_from(b: &DerivativeBundle, c: f64) -> Array1<f64> {
    &b.d2_dt2.column(0) - &(c * c * &b.d2_dx2.column(0))
}

pub fn pde_residual(nf: &dyn FieldModel, pts: ArrayView2<f64>, c: f64) -> Result<Array1<f64>> {
    Ok(pde_residual_from(&nf.derivatives(pts)?, c))
}

/// Mean-square pressure misfit plus mean-square `dp/dt`, at `t = 0` rows.
pub fn ic_loss(nf: &dyn FieldModel, sigma0: f64, pts: ArrayView2<f64>) -> Result<f64> {
    let b = nf.derivatives(pts)?;
    let (miss, rate) = ic_residuals_from(&b, sigma0, pts);
    Ok(mean_sq(&miss) + mean_sq(&rate))
}

fn ic_residuals_from(
    b: &DerivativeBundle,
    sigma0: f64,
    pts: ArrayView2<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let miss = Array1::from_iter(
        pts.rows()
            .into_iter()
            .zip(b.value.column(0))
            .map(|(row, &p)| {
                let src = GaussianSource { x0: row[2], sigma0 };
                p - ic_pressure(row[0], &src)
            }),
    );
    (miss, b.d_dt.column(0).to_owned())
}

/// `dp/dt + c xi n dp/dx`.
pub fn bc_indep_residual_from(
    b: &DerivativeBundle,
    xi: f64,
    normal: &Array1<f64>,
    c: f64,
) -> Array1<f64> {
    &b.d_dt.column(0) + &(c * xi * normal * b.d_dx.column(0))
}

pub fn bc_indep_residual(
    nf: &dyn FieldModel,
    pts: ArrayView2<f64>,
    xi: f64,
    normal: &Array1<f64>,
    c: f64,
) -> Result<Array1<f64>> {
    Ok(bc_indep_residual_from(&nf.derivatives(pts)?, xi, normal, c))
}

/// `dp/dn`, the rigid-wall residual.
pub fn bc_neumann_residual_from(b: &DerivativeBundle, normal: &Array1<f64>) -> Array1<f64> {
    normal * &b.d_dx.column(0)
}

/// ODE residuals of the scaled accumulators, one array per accumulator in output order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdeResiduals {
    pub phi: Vec<Array1<f64>>,
    pub psi0: Vec<Array1<f64>>,
    pub psi1: Vec<Array1<f64>>,
}

impl AdeResiduals {
    pub fn iter(&self) -> impl Iterator<Item = &Array1<f64>> {
        self.phi.iter().chain(&self.psi0).chain(&self.psi1)
    }
}

fn check_ade_dims(
    nade: &DerivativeBundle,
    pf: &DerivativeBundle,
    adm: &RationalAdmittance,
    weights: &LossWeights,
) -> Result<()> {
    weights.check_admittance(adm)?;
    if nade.outputs() != adm.n_accumulators() {
        return Err(Error::dim(format!(
            "accumulator network has {} outputs, admittance needs Q + 2S = {}",
            nade.outputs(),
            adm.n_accumulators()
        )));
    }
    if nade.rows() != pf.rows() {
        return Err(Error::dim(
            "accumulator and pressure bundles cover different points",
        ));
    }
    Ok(())
}

pub fn ade_residuals_from(
    nade: &DerivativeBundle,
    pf: &DerivativeBundle,
    adm: &RationalAdmittance,
    weights: &LossWeights,
) -> Result<AdeResiduals> {
    check_ade_dims(nade, pf, adm, weights)?;
    let (q, s_) = (adm.q(), adm.s());
    let p = pf.value.column(0);
    let val = |j: usize| nade.value.column(j);
    let dt = |j: usize| nade.d_dt.column(j);
    let phi = (0..q)
        .map(|k| {
            let (lam, l) = (adm.real_poles[k].lambda, weights.l_phi[k]);
            &dt(k) + &(lam * &val(k)) - l * &p
        })
        .collect();
    let mut psi0 = Vec::with_capacity(s_);
    let mut psi1 = Vec::with_capacity(s_);
    for k in 0..s_ {
        let pair = &adm.complex_pairs[k];
        let (l0, l1) = (weights.l_psi0[k], weights.l_psi1[k]);
        let (j0, j1) = (q + k, q + s_ + k);
        psi0.push(&dt(j0) + &(pair.alpha * &val(j0)) + &(pair.beta * l0 / l1 * &val(j1)) - l0 * &p);
        psi1.push(&dt(j1) + &(pair.alpha * &val(j1)) - &(pair.beta * l1 / l0 * &val(j0)));
    }
    Ok(AdeResiduals { phi, psi0, psi1 })
}

pub fn ade_residuals(
    nade: &dyn FieldModel,
    nf: &dyn FieldModel,
    pts: ArrayView2<f64>,
    adm: &RationalAdmittance,
    weights: &LossWeights,
) -> Result<AdeResiduals> {
    ade_residuals_from(&nade.derivatives(pts)?, &nf.derivatives(pts)?, adm, weights)
}

/// Wall velocity `v_n` and `dv_n/dt` from the unscaled accumulators.
pub fn boundary_velocity_from(
    nade: &DerivativeBundle,
    pf: &DerivativeBundle,
    adm: &RationalAdmittance,
    weights: &LossWeights,
) -> Result<(Array1<f64>, Array1<f64>)> {
    check_ade_dims(nade, pf, adm, weights)?;
    let (q, s_) = (adm.q(), adm.s());
    let mut v = adm.y_inf * &pf.value.column(0);
    let mut dv = adm.y_inf * &pf.d_dt.column(0);
    for (k, pole) in adm.real_poles.iter().enumerate() {
        let w = pole.residue / weights.l_phi[k];
        v.scaled_add(w, &nade.value.column(k));
        dv.scaled_add(w, &nade.d_dt.column(k));
    }
    for (k, pair) in adm.complex_pairs.iter().enumerate() {
        let (j0, j1) = (q + k, q + s_ + k);
        let w0 = 2.0 * pair.b / weights.l_psi0[k];
        let w1 = 2.0 * pair.c / weights.l_psi1[k];
        v.scaled_add(w0, &nade.value.column(j0));
        v.scaled_add(w1, &nade.value.column(j1));
        dv.scaled_add(w0, &nade.d_dt.column(j0));
        dv.scaled_add(w1, &nade.d_dt.column(j1));
    }
    Ok((v, dv))
}

pub fn boundary_velocity(
    nade: &dyn FieldModel,
    nf: &dyn FieldModel,
    pts: ArrayView2<f64>,
    adm: &RationalAdmittance,
    weights: &LossWeights,
) -> Result<(Array1<f64>, Array1<f64>)> {
    boundary_velocity_from(&nade.derivatives(pts)?, &nf.derivatives(pts)?, adm, weights)
}

/// `n dp/dx + rho0 dv_n/dt`.
pub fn bc_dep_residual_from(
    pf: &DerivativeBundle,
    dv_dt: &Array1<f64>,
    rho0: f64,
    normal: &Array1<f64>,
) -> Array1<f64> {
    normal * &pf.d_dx.column(0) + rho0 * dv_dt
}

#[allow(clippy::too_many_arguments)]
pub fn bc_dep_residual(
    nade: &dyn FieldModel,
    nf: &dyn FieldModel,
    pts: ArrayView2<f64>,
    adm: &RationalAdmittance,
    rho0: f64,
    normal: &Array1<f64>,
    weights: &LossWeights,
) -> Result<Array1<f64>> {
    let pf = nf.derivatives(pts)?;
    let (_, dv) = boundary_velocity_from(&nade.derivatives(pts)?, &pf, adm, weights)?;
    Ok(bc_dep_residual_from(&pf, &dv, rho0, normal))
}

/// The complete physics-informed objective for one boundary configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsLoss {
    pub boundary: BoundarySpec,
    pub weights: LossWeights,
    pub domain: DomainSpec,
    pub sigma0: f64,
    pub rho0: f64,
    pub c: f64,
}

struct Adjoints {
    nf: DerivativeBundle,
    nade: Option<DerivativeBundle>,
}

impl PhysicsLoss {
    pub fn new(
        boundary: BoundarySpec,
        weights: LossWeights,
        domain: DomainSpec,
        sigma0: f64,
        rho0: f64,
    ) -> Result<Self> {
        boundary.validate()?;
        weights.validate()?;
        domain.validate()?;
        if let Some(adm) = boundary.admittance() {
            weights.check_admittance(adm)?;
        }
        if !(sigma0 > 0.0) || !(rho0 > 0.0) {
            return Err(Error::config("sigma0 and rho0 must be positive"));
        }
        Ok(Self {
            boundary,
            weights,
            domain,
            sigma0,
            rho0,
            c: C_NORM,
        })
    }

    fn check_nets(&self, nade_present: bool, nade_outputs: Option<usize>) -> Result<()> {
        match (&self.boundary, nade_present) {
            (BoundarySpec::FrequencyDependent { admittance }, true) => {
                if nade_outputs != Some(admittance.n_accumulators()) {
                    return Err(Error::dim(format!(
                        "accumulator network must have {} outputs",
                        admittance.n_accumulators()
                    )));
                }
                Ok(())
            }
            (BoundarySpec::FrequencyDependent { .. }, false) => Err(Error::config(
                "frequency-dependent walls need an accumulator network",
            )),
            (_, true) => Err(Error::config(
                "an accumulator network is only used with frequency-dependent walls",
            )),
            (_, false) => Ok(()),
        }
    }

    fn stacked_points(set: &TrainingSet) -> Array2<f64> {
        concatenate(Axis(0), &[set.inner.view(), set.ic.view(), set.bc.view()]).expect("3 columns")
    }

    /// Loss decomposition without gradients.
    pub fn evaluate(
        &self,
        nf: &dyn FieldModel,
        nade: Option<&dyn FieldModel>,
        set: &TrainingSet,
    ) -> Result<LossReport> {
        self.check_nets(nade.is_some(), nade.map(|n| n.output_dim()))?;
        let pf = nf.derivatives(Self::stacked_points(set).view())?;
        let pa = match nade {
            Some(n) => Some(n.derivatives(set.bc.view())?),
            None => None,
        };
        Ok(self.assemble(&pf, pa.as_ref(), set, false)?.0)
    }

    /// Loss decomposition and parameter gradients; `[nf]` or `[nf, nade]`.
    pub fn gradient(
        &self,
        nf: &Network,
        nade: Option<&Network>,
        set: &TrainingSet,
    ) -> Result<(LossReport, Vec<Gradient>)> {
        self.check_nets(nade.is_some(), nade.map(|n| n.output_dim()))?;
        let pts = Self::stacked_points(set);
        let mut nets: Vec<(&Network, ArrayView2<f64>)> = vec![(nf, pts.view())];
        if let Some(n) = nade {
            nets.push((n, set.bc.view()));
        }
        let mut report = None;
        let (_, grads) = loss_gradient(&nets, |bundles| {
            let (r, adj) = self.assemble(&bundles[0], bundles.get(1), set, true)?;
            let adj = adj.expect("requested");
            let total = r.total;
            report = Some(r);
            let mut out = vec![adj.nf];
            out.extend(adj.nade);
            Ok((total, out))
        })?;
        Ok((report.expect("evaluator ran"), grads))
    }

    fn assemble(
        &self,
        pf: &DerivativeBundle,
        pa: Option<&DerivativeBundle>,
        set: &TrainingSet,
        want_adjoint: bool,
    ) -> Result<(LossReport, Option<Adjoints>)> {
        let (ni, nc, nb) = (set.inner.nrows(), set.ic.nrows(), set.bc.nrows());
        let w = &self.weights;
        let c = self.c;
        let rows = |b: &DerivativeBundle, r: std::ops::Range<usize>| -> DerivativeBundle {
            let sl = |a: &Array2<f64>| a.slice(s![r.clone(), ..]).to_owned();
            DerivativeBundle {
                value: sl(&b.value),
                d_dx: sl(&b.d_dx),
                d_dt: sl(&b.d_dt),
                d2_dx2: sl(&b.d2_dx2),
                d2_dt2: sl(&b.d2_dt2),
            }
        };
        let inner = rows(pf, 0..ni);
        let ic = rows(pf, ni..ni + nc);
        let bc = rows(pf, ni + nc..ni + nc + nb);
        let mut adj = DerivativeBundle::zeros(pf.rows(), 1);
        let mut adj_ade = pa.map(|a| DerivativeBundle::zeros(a.rows(), a.outputs()));
        let mut report = LossReport::default();

        let r_pde = pde_residual_from(&inner, c);
        report.pde = mean_sq(&r_pde);
        if want_adjoint && ni > 0 {
            let g = 2.0 / ni as f64;
            for i in 0..ni {
                adj.d2_dt2[[i, 0]] = g * r_pde[i];
                adj.d2_dx2[[i, 0]] = -c * c * g * r_pde[i];
            }
        }

        let (miss, rate) = ic_residuals_from(&ic, self.sigma0, set.ic.view());
        report.ic = mean_sq(&miss) + mean_sq(&rate);
        if want_adjoint && nc > 0 {
            let g = w.lambda_ic * 2.0 / nc as f64;
            for i in 0..nc {
                adj.value[[ni + i, 0]] = g * miss[i];
                adj.d_dt[[ni + i, 0]] = g * rate[i];
            }
        }

        let normal = normal_signs(set.bc.view(), &self.domain);
        let off = ni + nc;
        let gb = if nb > 0 {
            w.lambda_bc * 2.0 / nb as f64
        } else {
            0.0
        };
        match &self.boundary {
            BoundarySpec::Neumann => {
                let r = bc_neumann_residual_from(&bc, &normal);
                report.bc = mean_sq(&r);
                if want_adjoint {
                    for i in 0..nb {
                        adj.d_dx[[off + i, 0]] = gb * r[i] * normal[i];
                    }
                }
            }
            BoundarySpec::FrequencyIndependent { xi } => {
                let r = bc_indep_residual_from(&bc, *xi, &normal, c);
                report.bc = mean_sq(&r);
                if want_adjoint {
                    for i in 0..nb {
                        adj.d_dt[[off + i, 0]] = gb * r[i];
                        adj.d_dx[[off + i, 0]] = gb * r[i] * c * xi * normal[i];
                    }
                }
            }
            BoundarySpec::FrequencyDependent { admittance: adm } => {
                let pa = pa.ok_or_else(|| {
                    Error::config("frequency-dependent walls need an accumulator network")
                })?;
                let (_, dv) = boundary_velocity_from(pa, &bc, adm, w)?;
                let r = bc_dep_residual_from(&bc, &dv, self.rho0, &normal);
                report.bc = mean_sq(&r);
                let res = ade_residuals_from(pa, &bc, adm, w)?;
                let lam = self.ade_lambdas();
                report.ade = res.iter().map(mean_sq).collect();
                report.ade_total = report.ade.iter().zip(&lam).map(|(l, k)| l * k).sum();

                if want_adjoint {
                    let aa = adj_ade.as_mut().expect("accumulator adjoint");
                    let (q, s_) = (adm.q(), adm.s());
                    // Boundary condition through dv/dt.
                    for i in 0..nb {
                        let g = gb * r[i];
                        adj.d_dx[[off + i, 0]] += g * normal[i];
                        let gv = g * self.rho0;
                        adj.d_dt[[off + i, 0]] += gv * adm.y_inf;
                        for (k, pole) in adm.real_poles.iter().enumerate() {
                            aa.d_dt[[i, k]] += gv * pole.residue / w.l_phi[k];
                        }
                        for (k, pair) in adm.complex_pairs.iter().enumerate() {
                            aa.d_dt[[i, q + k]] += gv * 2.0 * pair.b / w.l_psi0[k];
                            aa.d_dt[[i, q + s_ + k]] += gv * 2.0 * pair.c / w.l_psi1[k];
                        }
                    }
                    // Accumulator ODEs.
                    let gn = if nb > 0 { 2.0 / nb as f64 } else { 0.0 };
                    for (k, pole) in adm.real_poles.iter().enumerate() {
                        let l = w.l_phi[k];
                        for i in 0..nb {
                            let g = lam[k] * gn * res.phi[k][i];
                            aa.d_dt[[i, k]] += g;
                            aa.value[[i, k]] += g * pole.lambda;
                            adj.value[[off + i, 0]] -= g * l;
                        }
                    }
                    for (k, pair) in adm.complex_pairs.iter().enumerate() {
                        let (l0, l1) = (w.l_psi0[k], w.l_psi1[k]);
                        let (j0, j1) = (q + k, q + s_ + k);
                        for i in 0..nb {
                            let g0 = lam[j0] * gn * res.psi0[k][i];
                            aa.d_dt[[i, j0]] += g0;
                            aa.value[[i, j0]] += g0 * pair.alpha;
                            aa.value[[i, j1]] += g0 * pair.beta * l0 / l1;
                            adj.value[[off + i, 0]] -= g0 * l0;
                            let g1 = lam[j1] * gn * res.psi1[k][i];
                            aa.d_dt[[i, j1]] += g1;
                            aa.value[[i, j1]] += g1 * pair.alpha;
                            aa.value[[i, j0]] -= g1 * pair.beta * l1 / l0;
                        }
                    }
                }
            }
        }
        report.total = report.recompose(w);
        let adjoints = want_adjoint.then(|| Adjoints {
            nf: adj,
            nade: adj_ade,
        });
        Ok((report, adjoints))
    }

    /// `lambda_ade / l` per accumulator, output order.
    pub fn ade_lambdas(&self) -> Vec<f64> {
        self.weights
            .scales()
            .iter()
            .map(|l| self.weights.lambda_ade / l)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ComplexPair, RealPole};
    use crate::net::{init_glorot, init_siren};
    use crate::sampling::{assemble_training_set, PartitionFractions};
    use ndarray::Array;

    /// Field given by closures for value and the four derivatives.
    struct Closed<F: Fn(f64, f64, f64) -> [f64; 5]>(F);

    impl<F: Fn(f64, f64, f64) -> [f64; 5]> FieldModel for Closed<F> {
        fn derivatives(&self, pts: ArrayView2<f64>) -> Result<DerivativeBundle> {
            let mut b = DerivativeBundle::zeros(pts.nrows(), 1);
            for (i, r) in pts.rows().into_iter().enumerate() {
                let [v, dx, dt, dxx, dtt] = (self.0)(r[0], r[1], r[2]);
                b.value[[i, 0]] = v;
                b.d_dx[[i, 0]] = dx;
                b.d_dt[[i, 0]] = dt;
                b.d2_dx2[[i, 0]] = dxx;
                b.d2_dt2[[i, 0]] = dtt;
            }
            Ok(b)
        }
        fn output_dim(&self) -> usize {
            1
        }
    }

    fn boundary_pts(n: usize) -> Array2<f64> {
        Array::from_shape_fn((n, 3), |(i, j)| match j {
            0 => 1.0,
            1 => 0.1 * i as f64,
            _ => 0.0,
        })
    }

    fn ones(n: usize) -> Array1<f64> {
        Array1::ones(n)
    }

    #[test]
    fn zero_field_residuals() {
        let zero = Closed(|_, _, _| [0.0; 5]);
        let pts = boundary_pts(5);
        assert!(pde_residual(&zero, pts.view(), 1.0)
            .unwrap()
            .iter()
            .all(|&r| r == 0.0));
        assert!(bc_indep_residual(&zero, pts.view(), 5.83, &ones(5), 1.0)
            .unwrap()
            .iter()
            .all(|&r| r == 0.0));
    }

    #[test]
    fn quadratic_field_pde_residual() {
        let f = Closed(|x, _, _| [x * x, 2.0 * x, 0.0, 2.0, 0.0]);
        let r = pde_residual(&f, boundary_pts(4).view(), 1.0).unwrap();
        assert!(r.iter().all(|&v| v == -2.0));
    }

    #[test]
    fn ic_loss_cases() {
        let sigma0 = 0.2;
        let pts = Array::from_shape_vec((3, 3), vec![0.1, 0.0, 0.1, -0.3, 0.0, 0.1, 0.5, 0.0, 0.1])
            .unwrap();
        let zero = Closed(|_, _, _| [0.0; 5]);
        // zero network at x = x0 only
        let at_src = Array::from_shape_vec((1, 3), vec![0.1, 0.0, 0.1]).unwrap();
        assert_eq!(ic_loss(&zero, sigma0, at_src.view()).unwrap(), 1.0);
        let v = 0.3;
        let moving = Closed(move |x, _, x0| {
            let p = ic_pressure(x, &GaussianSource { x0, sigma0 });
            [p, 0.0, v, 0.0, 0.0]
        });
        assert!((ic_loss(&moving, sigma0, pts.view()).unwrap() - v * v).abs() < 1e-15);
    }

    #[test]
    fn indep_boundary_cases() {
        let pts = boundary_pts(8);
        // right-going wave f(x - t) with xi = 1 is absorbed
        let f = |u: f64| (-(u / 0.2).powi(2)).exp();
        let df = |u: f64| -2.0 * u / 0.04 * f(u);
        let wave = Closed(move |x, t, _| [f(x - t), df(x - t), -df(x - t), 0.0, 0.0]);
        let r = bc_indep_residual(&wave, pts.view(), 1.0, &ones(8), 1.0).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-15));
        let ramp = Closed(|_, t, _| [t, 0.0, 1.0, 0.0, 0.0]);
        let r = bc_indep_residual(&ramp, pts.view(), 5.83, &ones(8), 1.0).unwrap();
        assert!(r.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn large_impedance_degenerates_to_neumann() {
        let pts = boundary_pts(6);
        let normal = ones(6);
        for (a, b) in [(0.3, 1.0), (-1.2, 0.4), (2.0, -0.7)] {
            let f = Closed(move |x, t, _| [a * x + b * t, a, b, 0.0, 0.0]);
            let bundle = f.derivatives(pts.view()).unwrap();
            let neumann = mean_sq(&bc_neumann_residual_from(&bundle, &normal));
            for xi in [1e6, 1e8] {
                let indep = mean_sq(&bc_indep_residual_from(&bundle, xi, &normal, 1.0));
                let rel = (indep / (xi * xi) - neumann).abs() / neumann;
                assert!(rel < 10.0 / xi, "xi {xi}: {rel}");
            }
        }
    }

    fn material() -> RationalAdmittance {
        RationalAdmittance {
            y_inf: 0.3,
            real_poles: vec![
                RealPole {
                    residue: 2.0,
                    lambda: 4.0,
                },
                RealPole {
                    residue: 1.0,
                    lambda: 30.0,
                },
            ],
            complex_pairs: vec![ComplexPair {
                b: 0.5,
                c: -0.2,
                alpha: 3.0,
                beta: 7.0,
            }],
        }
    }

    #[test]
    fn ade_homogeneous_case() {
        let adm = material();
        let w = LossWeights::default();
        let zero4 = DerivativeBundle::zeros(5, 4);
        let p = DerivativeBundle::zeros(5, 1);
        let r = ade_residuals_from(&zero4, &p, &adm, &w).unwrap();
        assert!(r.iter().all(|a| a.iter().all(|&v| v == 0.0)));
        let mut pnz = p.clone();
        pnz.value.fill(1.0);
        let r = ade_residuals_from(&zero4, &pnz, &adm, &w).unwrap();
        assert!(r.psi1[0].iter().all(|&v| v == 0.0));
        assert!(r.phi[0].iter().all(|&v| v == -10.3));
    }

    #[test]
    fn ade_sinusoid_closed_form() {
        // phi' + lam phi = sin(w t) has the steady state
        // phi = (lam sin(w t) - w cos(w t)) / (lam^2 + w^2).
        let (lam, om) = (4.0, 3.0);
        let adm = RationalAdmittance {
            y_inf: 0.0,
            real_poles: vec![RealPole {
                residue: 1.0,
                lambda: lam,
            }],
            complex_pairs: vec![],
        };
        let w = LossWeights {
            l_phi: vec![1.0],
            l_psi0: vec![],
            l_psi1: vec![],
            ..LossWeights::default()
        };
        let n = 50;
        let mut pa = DerivativeBundle::zeros(n, 1);
        let mut pf = DerivativeBundle::zeros(n, 1);
        let den = lam * lam + om * om;
        for i in 0..n {
            let t = 0.05 * i as f64;
            pf.value[[i, 0]] = (om * t).sin();
            pa.value[[i, 0]] = (lam * (om * t).sin() - om * (om * t).cos()) / den;
            pa.d_dt[[i, 0]] = (lam * om * (om * t).cos() + om * om * (om * t).sin()) / den;
        }
        let r = ade_residuals_from(&pa, &pf, &adm, &w).unwrap();
        assert!(r.phi[0].iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn ade_scaling_homogeneity() {
        let adm = material();
        let w = LossWeights::default();
        let mut pa = DerivativeBundle::zeros(3, 4);
        let mut pf = DerivativeBundle::zeros(3, 1);
        for i in 0..3 {
            pf.value[[i, 0]] = 0.4 + i as f64;
            for j in 0..4 {
                pa.value[[i, j]] = 0.1 * (i + j) as f64 - 0.2;
                pa.d_dt[[i, j]] = 0.3 - 0.05 * (i * j) as f64;
            }
        }
        let base = ade_residuals_from(&pa, &pf, &adm, &w).unwrap();
        let mut w10 = w.clone();
        w10.l_phi[0] *= 10.0;
        let mut pa10 = pa.clone();
        pa10.value.column_mut(0).mapv_inplace(|v| 10.0 * v);
        pa10.d_dt.column_mut(0).mapv_inplace(|v| 10.0 * v);
        let scaled = ade_residuals_from(&pa10, &pf, &adm, &w10).unwrap();
        for i in 0..3 {
            assert!((scaled.phi[0][i] - 10.0 * base.phi[0][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn memoryless_velocity() {
        let adm = RationalAdmittance::constant(0.7);
        let w = LossWeights {
            l_phi: vec![],
            l_psi0: vec![],
            l_psi1: vec![],
            ..LossWeights::default()
        };
        let mut pf = DerivativeBundle::zeros(4, 1);
        pf.value
            .assign(&ndarray::arr2(&[[1.0], [-2.0], [0.5], [0.0]]));
        let pa = DerivativeBundle::zeros(4, 0);
        let (v, _) = boundary_velocity_from(&pa, &pf, &adm, &w).unwrap();
        assert_eq!(v.to_vec(), vec![0.7, -1.4, 0.35, 0.0]);
        let (v0, _) =
            boundary_velocity_from(&pa, &pf, &RationalAdmittance::constant(0.0), &w).unwrap();
        assert!(v0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dep_residual_cases() {
        let n = 4;
        let normal = ones(n);
        let mut pf = DerivativeBundle::zeros(n, 1);
        pf.d_dx.fill(1.0);
        // p = x balanced by dv/dt = -1/rho0
        let rho0 = 1.2;
        let dv = Array1::from_elem(n, -1.0 / rho0);
        assert!(bc_dep_residual_from(&pf, &dv, rho0, &normal)
            .iter()
            .all(|v| v.abs() < 1e-15));
        // rigid limit reduces to dp/dn
        let r = bc_dep_residual_from(&pf, &Array1::zeros(n), rho0, &(-1.0 * &normal));
        assert!(r.iter().all(|&v| v == -1.0));
        let static_field = DerivativeBundle::zeros(n, 1);
        assert!(
            bc_dep_residual_from(&static_field, &Array1::zeros(n), rho0, &normal)
                .iter()
                .all(|&v| v == 0.0)
        );
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let adm = material();
        let w = LossWeights::default();
        let pa = DerivativeBundle::zeros(3, 3);
        let pf = DerivativeBundle::zeros(3, 1);
        assert!(ade_residuals_from(&pa, &pf, &adm, &w).is_err());
        let bad = LossWeights {
            l_phi: vec![1.0],
            ..LossWeights::default()
        };
        assert!(PhysicsLoss::new(
            BoundarySpec::FrequencyDependent { admittance: adm },
            bad,
            DomainSpec::default(),
            0.2,
            1.2
        )
        .is_err());
    }

    fn small_set() -> TrainingSet {
        assemble_training_set(
            &DomainSpec::default(),
            &[-0.2, 0.0, 0.2],
            60,
            &PartitionFractions::default(),
            3,
        )
        .unwrap()
    }

    #[test]
    fn total_loss_composition() {
        let set = small_set();
        let nf = init_siren(&[3, 12, 12, 1], 30.0, 1).unwrap();
        let loss = PhysicsLoss::new(
            BoundarySpec::FrequencyIndependent { xi: 5.83 },
            LossWeights::default(),
            DomainSpec::default(),
            0.2,
            1.2,
        )
        .unwrap();
        let r = loss.evaluate(&nf, None, &set).unwrap();
        assert!((r.total - (r.pde + 20.0 * r.ic + r.bc)).abs() <= 1e-12 * r.total.abs().max(1.0));
        assert!(r.pde >= 0.0 && r.ic >= 0.0 && r.bc >= 0.0);

        let mut doubled = loss.clone();
        doubled.weights.lambda_bc = 2.0;
        let r2 = doubled.evaluate(&nf, None, &set).unwrap();
        assert!(((r2.total - r.total) - r.bc).abs() < 1e-12 * r.total.max(1.0));

        let manual = LossReport {
            pde: 1.0,
            ic: 1.0,
            bc: 1.0,
            ..LossReport::default()
        };
        assert_eq!(manual.recompose(&LossWeights::default()), 22.0);
        assert_eq!(
            LossReport::default().recompose(&LossWeights::default()),
            0.0
        );
    }

    #[test]
    fn dependent_walls_require_accumulators() {
        let set = small_set();
        let nf = init_siren(&[3, 8, 1], 30.0, 1).unwrap();
        let loss = PhysicsLoss::new(
            BoundarySpec::FrequencyDependent {
                admittance: material(),
            },
            LossWeights::default(),
            DomainSpec::default(),
            0.2,
            1.2,
        )
        .unwrap();
        assert!(matches!(
            loss.evaluate(&nf, None, &set),
            Err(Error::Config(_))
        ));
        let nade = init_glorot(&[3, 6, 4], 2).unwrap();
        let r = loss.evaluate(&nf, Some(&nade), &set).unwrap();
        assert_eq!(r.ade.len(), 4);
        let expect = r.pde + 20.0 * r.ic + r.bc + r.ade_total;
        assert!((r.total - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn gradient_is_linear_in_weights() {
        let set = small_set();
        let nf = init_siren(&[3, 8, 1], 30.0, 1).unwrap();
        let mk = |lam_ic: f64, lam_bc: f64| {
            let w = LossWeights {
                lambda_ic: lam_ic,
                lambda_bc: lam_bc,
                ..LossWeights::default()
            };
            PhysicsLoss::new(BoundarySpec::Neumann, w, DomainSpec::default(), 0.2, 1.2).unwrap()
        };
        // Scaling every term by 20 scales the gradient by 20. PDE weight is fixed
        // at one, so compare against a loss on inner-free points.
        let mut set_no_inner = set.clone();
        set_no_inner.inner = Array2::zeros((0, 3));
        let (_, g1) = mk(1.0, 1.0).gradient(&nf, None, &set_no_inner).unwrap();
        let (_, g20) = mk(20.0, 20.0).gradient(&nf, None, &set_no_inner).unwrap();
        let (a, b) = (g1[0].flatten(), g20[0].flatten());
        for (x, y) in a.iter().zip(&b) {
            assert!((20.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-12));
        }
    }
}

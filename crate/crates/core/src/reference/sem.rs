//! Spectral-element discretization of `p_tt = c^2 p_xx` on a uniform mesh of
//! Gauss-Lobatto-Legendre elements with a lumped (diagonal) mass matrix.
//!
//! The weak form leaves the wall flux `c^2 n p_x` at the two end nodes:
//! zero for rigid walls, `-c p_t / xi` for a frequency-independent wall and
//! `-c^2 rho0 dv_n/dt` for a wall with a rational admittance, where the
//! accumulators advance with the field. The semi-discrete system in
//! `(p, p_t, accumulators)` is stepped with classical RK4.

use ndarray::Array2;

use super::SolverConfig;
use crate::error::{Error, Result};
use crate::material::{ade_rhs, wall_velocity};
use crate::model::{BoundarySpec, DomainSpec, GaussianSource, RationalAdmittance, C_NORM};

/// Gauss-Lobatto-Legendre nodes on `[-1, 1]` (ascending) and their quadrature weights.
pub fn gll_nodes_weights(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let legendre = |x: f64| -> (f64, f64) {
        // (P_n, P_{n-1})
        let (mut p0, mut p1) = (1.0, x);
        for k in 1..n {
            let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
            p0 = p1;
            p1 = p2;
        }
        (p1, p0)
    };
    let mut nodes = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let mut x = -(std::f64::consts::PI * j as f64 / n as f64).cos();
        if j != 0 && j != n {
            for _ in 0..100 {
                let (pn, pm) = legendre(x);
                let step = (x * pn - pm) / ((n + 1) as f64 * pn);
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
        }
        nodes.push(x);
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (pn, _) = legendre(x);
            2.0 / ((n * (n + 1)) as f64 * pn * pn)
        })
        .collect();
    (nodes, weights)
}

/// Derivative matrix `D[i][j] = l_j'(xi_i)` of the GLL Lagrange basis.
fn derivative_matrix(nodes: &[f64]) -> Vec<Vec<f64>> {
    let m = nodes.len();
    // barycentric weights
    let bw: Vec<f64> = (0..m)
        .map(|j| {
            1.0 / (0..m)
                .filter(|&k| k != j)
                .map(|k| nodes[j] - nodes[k])
                .product::<f64>()
        })
        .collect();
    let mut d = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                d[i][j] = bw[j] / bw[i] / (nodes[i] - nodes[j]);
            }
        }
        d[i][i] = -d[i].iter().sum::<f64>();
    }
    d
}

/// Uniform spectral-element mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    order: usize,
    n_el: usize,
    h: f64,
    x_min: f64,
    ref_nodes: Vec<f64>,
    /// Global node coordinates.
    pub x: Vec<f64>,
    /// Lumped mass per global node.
    pub mass: Vec<f64>,
    /// Element stiffness, row-major `(order+1)^2`.
    k_el: Vec<f64>,
}

impl Mesh {
    pub fn new(domain: &DomainSpec, solver: &SolverConfig) -> Result<Self> {
        domain.validate()?;
        solver.validate()?;
        let order = solver.order;
        let n_el = (domain.length() / (order as f64 * solver.dx()))
            .ceil()
            .max(1.0) as usize;
        Ok(Self::uniform(domain.x_min, domain.x_max, n_el, order))
    }

    pub fn uniform(x_min: f64, x_max: f64, n_el: usize, order: usize) -> Self {
        let (nodes, weights) = gll_nodes_weights(order);
        let d = derivative_matrix(&nodes);
        let h = (x_max - x_min) / n_el as f64;
        let np = order + 1;
        let mut k_el = vec![0.0; np * np];
        for i in 0..np {
            for j in 0..np {
                let s: f64 = (0..np).map(|k| weights[k] * d[k][i] * d[k][j]).sum();
                k_el[i * np + j] = 2.0 / h * s;
            }
        }
        let n = n_el * order + 1;
        let mut x = vec![0.0; n];
        let mut mass = vec![0.0; n];
        for e in 0..n_el {
            for (j, (&xi, &w)) in nodes.iter().zip(&weights).enumerate() {
                let g = e * order + j;
                x[g] = x_min + h * (e as f64 + 0.5 * (xi + 1.0));
                mass[g] += 0.5 * h * w;
            }
        }
        x[n - 1] = x_max;
        Self {
            order,
            n_el,
            h,
            x_min,
            ref_nodes: nodes,
            x,
            mass,
            k_el,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn n_elements(&self) -> usize {
        self.n_el
    }

    pub fn element_size(&self) -> f64 {
        self.h
    }

    /// Smallest distance between neighbouring nodes.
    pub fn dx_min(&self) -> f64 {
        self.ref_nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
            * 0.5
            * self.h
    }

    /// `out = K p`.
    pub fn apply_stiffness(&self, p: &[f64], out: &mut [f64]) {
        let np = self.order + 1;
        out.iter_mut().for_each(|v| *v = 0.0);
        for e in 0..self.n_el {
            let base = e * self.order;
            let pe = &p[base..base + np];
            for i in 0..np {
                let row = &self.k_el[i * np..(i + 1) * np];
                out[base + i] += row.iter().zip(pe).map(|(k, v)| k * v).sum::<f64>();
            }
        }
    }

    /// Global node indices and Lagrange weights that interpolate the field at `x`.
    pub fn interpolation(&self, x: f64) -> (usize, Vec<f64>) {
        let e = (((x - self.x_min) / self.h).floor().max(0.0) as usize).min(self.n_el - 1);
        let xi = 2.0 * (x - self.x_min - e as f64 * self.h) / self.h - 1.0;
        let nodes = &self.ref_nodes;
        let w = (0..nodes.len())
            .map(|j| {
                (0..nodes.len())
                    .filter(|&k| k != j)
                    .map(|k| (xi - nodes[k]) / (nodes[j] - nodes[k]))
                    .product()
            })
            .collect();
        (e * self.order, w)
    }

    /// `0.5 q^T M q + 0.5 c^2 p^T K p`.
    pub fn energy(&self, p: &[f64], q: &[f64], scratch: &mut [f64]) -> f64 {
        self.apply_stiffness(p, scratch);
        let kin: f64 = q.iter().zip(&self.mass).map(|(v, m)| m * v * v).sum();
        let pot: f64 = p.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
        0.5 * kin + 0.5 * C_NORM * C_NORM * pot
    }
}

/// Boundary conditions at the left and right wall.
#[derive(Debug, Clone, PartialEq)]
pub struct Walls {
    pub left: BoundarySpec,
    pub right: BoundarySpec,
}

impl Walls {
    pub fn both(bc: BoundarySpec) -> Self {
        Self {
            left: bc.clone(),
            right: bc,
        }
    }

    pub fn is_frequency_dependent(&self) -> bool {
        self.left.is_frequency_dependent() || self.right.is_frequency_dependent()
    }
}

/// Pressure on the full node grid at selected times.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshotSeries {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    /// `t.len() x x.len()`.
    pub p: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainSolution {
    pub t: Vec<f64>,
    pub receivers: Vec<f64>,
    /// One trace per receiver, aligned with `t`.
    pub traces: Vec<Vec<f64>>,
    /// Discrete acoustic energy at every step.
    pub energy: Vec<f64>,
    pub snapshots: Option<FieldSnapshotSeries>,
    pub dt: f64,
    pub n_elements: usize,
}

enum Wall<'a> {
    Rigid,
    Resistive(f64),
    Reactive(&'a RationalAdmittance),
}

impl<'a> Wall<'a> {
    fn new(bc: &'a BoundarySpec) -> Result<Self> {
        bc.validate()?;
        Ok(match bc {
            BoundarySpec::Neumann => Wall::Rigid,
            BoundarySpec::FrequencyIndependent { xi } if xi.is_infinite() => Wall::Rigid,
            BoundarySpec::FrequencyIndependent { xi } => Wall::Resistive(*xi),
            BoundarySpec::FrequencyDependent { admittance } => Wall::Reactive(admittance),
        })
    }

    fn n_states(&self) -> usize {
        match self {
            Wall::Reactive(adm) => adm.n_accumulators(),
            _ => 0,
        }
    }

    /// Adds the wall flux `c^2 n p_x` and writes accumulator rates.
    fn flux(&self, p: f64, q: f64, s: &[f64], ds: &mut [f64], rho0: f64) -> f64 {
        match self {
            Wall::Rigid => 0.0,
            Wall::Resistive(xi) => -C_NORM * q / xi,
            Wall::Reactive(adm) => {
                ade_rhs(adm, s, p, ds);
                // dv/dt = Y_inf p_t + (accumulator contributions of the rates)
                let dv = wall_velocity(adm, q, ds);
                -C_NORM * C_NORM * rho0 * dv
            }
        }
    }
}

struct System<'a> {
    mesh: &'a Mesh,
    left: Wall<'a>,
    right: Wall<'a>,
    rho0: f64,
    n: usize,
    nl: usize,
}

impl System<'_> {
    /// State layout: `[p (n), q (n), left accumulators, right accumulators]`.
    fn rates(&self, y: &[f64], dy: &mut [f64], kp: &mut [f64]) {
        let n = self.n;
        let (p, rest) = y.split_at(n);
        let (q, s) = rest.split_at(n);
        let (sl, sr) = s.split_at(self.nl);
        let (dp, drest) = dy.split_at_mut(n);
        let (dq, ds) = drest.split_at_mut(n);
        let (dsl, dsr) = ds.split_at_mut(self.nl);
        dp.copy_from_slice(q);
        self.mesh.apply_stiffness(p, kp);
        for (d, k) in dq.iter_mut().zip(kp.iter()) {
            *d = -C_NORM * C_NORM * k;
        }
        dq[0] += self.left.flux(p[0], q[0], sl, dsl, self.rho0);
        dq[n - 1] += self.right.flux(p[n - 1], q[n - 1], sr, dsr, self.rho0);
        dq.iter_mut()
            .zip(&self.mesh.mass)
            .for_each(|(d, m)| *d /= m);
    }
}

/// Integrates the Gaussian-pulse initial value problem to `t_max`, recording
/// `receivers` at every step and, if requested, the whole field every
/// `snapshot_every` steps.
pub fn solve_time_domain(
    domain: &DomainSpec,
    src: &GaussianSource,
    walls: &Walls,
    solver: &SolverConfig,
    receivers: &[f64],
    t_max: f64,
    snapshot_every: Option<usize>,
) -> Result<TimeDomainSolution> {
    let mesh = Mesh::new(domain, solver)?;
    let cfl = solver.effective_cfl(walls);
    solve_on_mesh(
        &mesh,
        src,
        walls,
        solver,
        cfl,
        receivers,
        t_max,
        snapshot_every,
    )
}

pub(crate) fn solve_on_mesh(
    mesh: &Mesh,
    src: &GaussianSource,
    walls: &Walls,
    solver: &SolverConfig,
    cfl: f64,
    receivers: &[f64],
    t_max: f64,
    snapshot_every: Option<usize>,
) -> Result<TimeDomainSolution> {
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::config(format!(
            "t_max must be non-negative, got {t_max}"
        )));
    }
    let (x_lo, x_hi) = (mesh.x[0], mesh.x[mesh.n_nodes() - 1]);
    if let Some(r) = receivers.iter().find(|&&r| !(x_lo..=x_hi).contains(&r)) {
        return Err(Error::config(format!(
            "receiver {r} outside [{x_lo}, {x_hi}]"
        )));
    }
    let system = System {
        mesh,
        left: Wall::new(&walls.left)?,
        right: Wall::new(&walls.right)?,
        rho0: solver.rho0,
        n: mesh.n_nodes(),
        nl: 0,
    };
    let system = System {
        nl: system.left.n_states(),
        ..system
    };
    let n = system.n;
    let dim = 2 * n + system.nl + system.right.n_states();

    let n_steps = if t_max == 0.0 {
        0
    } else {
        (t_max * C_NORM / (cfl * mesh.dx_min())).ceil() as usize
    };
    let dt = if n_steps == 0 {
        0.0
    } else {
        t_max / n_steps as f64
    };

    let mut y = vec![0.0; dim];
    for (i, &x) in mesh.x.iter().enumerate() {
        let u = (x - src.x0) / src.sigma0;
        y[i] = (-u * u).exp();
    }
    let probes: Vec<(usize, Vec<f64>)> = receivers.iter().map(|&r| mesh.interpolation(r)).collect();
    let sample = |y: &[f64], out: &mut Vec<Vec<f64>>| {
        for ((base, w), trace) in probes.iter().zip(out.iter_mut()) {
            trace.push(w.iter().enumerate().map(|(j, wj)| wj * y[base + j]).sum());
        }
    };
    let mut traces = vec![Vec::with_capacity(n_steps + 1); receivers.len()];
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut energy = Vec::with_capacity(n_steps + 1);
    let mut snaps: Option<(Vec<f64>, Vec<Vec<f64>>)> =
        snapshot_every.map(|_| (Vec::new(), Vec::new()));
    let mut kp = vec![0.0; n];

    let e0 = mesh.energy(&y[..n], &y[n..2 * n], &mut kp);
    let record = |step: usize,
                  y: &[f64],
                  traces: &mut Vec<Vec<f64>>,
                  snaps: &mut Option<(Vec<f64>, Vec<Vec<f64>>)>| {
        sample(y, traces);
        if let (Some(every), Some((ts, ps))) = (snapshot_every, snaps.as_mut()) {
            if step.is_multiple_of(every.max(1)) {
                ts.push(step as f64 * dt);
                ps.push(y[..n].to_vec());
            }
        }
    };
    times.push(0.0);
    energy.push(e0);
    record(0, &y, &mut traces, &mut snaps);

    let (mut k1, mut k2, mut k3, mut k4) = (
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    );
    let mut tmp = vec![0.0; dim];
    for step in 1..=n_steps {
        system.rates(&y, &mut k1, &mut kp);
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * dt * k1[j];
        }
        system.rates(&tmp, &mut k2, &mut kp);
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * dt * k2[j];
        }
        system.rates(&tmp, &mut k3, &mut kp);
        for j in 0..dim {
            tmp[j] = y[j] + dt * k3[j];
        }
        system.rates(&tmp, &mut k4, &mut kp);
        for j in 0..dim {
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t = step as f64 * dt;
        let e = mesh.energy(&y[..n], &y[n..2 * n], &mut kp);
        if !e.is_finite() || e > 10.0 * e0 + 1e-300 {
            return Err(Error::Unstable {
                time: t,
                reason: format!(
                    "energy grew from {e0:.3e} to {e:.3e} (dt = {dt:.3e}, smallest spacing {:.3e}, CFL {cfl})",
                    mesh.dx_min()
                ),
            });
        }
        times.push(t);
        energy.push(e);
        record(step, &y, &mut traces, &mut snaps);
    }

    let snapshots = snaps.map(|(t, rows)| FieldSnapshotSeries {
        x: mesh.x.clone(),
        p: Array2::from_shape_fn((rows.len(), n), |(i, j)| rows[i][j]),
        t,
    });
    Ok(TimeDomainSolution {
        t: times,
        receivers: receivers.to_vec(),
        traces,
        energy,
        snapshots,
        dt,
        n_elements: mesh.n_elements(),
    })
}

//! Collocation point generation.
//!
//! Points are split into three partitions: interior points for the PDE
//! residual, `t = 0` points for the initial condition, and wall points for the
//! boundary condition. Each partition is laid out with a centered Latin
//! hypercube and every point carries a source position taken round-robin from
//! the configured source grid.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DomainSpec;

/// Centered Latin hypercube on an axis-aligned box.
///
/// Each dimension is cut into `n` equal strata; every stratum receives exactly
/// one point at its center, and the stratum order is an independent seeded
/// permutation per dimension.
pub fn latin_hypercube_centered(n: usize, bounds: &[(f64, f64)], seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::config("latin hypercube needs at least one point"));
    }
    if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo < hi)) {
        return Err(Error::config(format!("degenerate bounds [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::zeros((n, bounds.len()));
    let mut perm: Vec<usize> = (0..n).collect();
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        perm.shuffle(&mut rng);
        let width = (hi - lo) / n as f64;
        for (i, &stratum) in perm.iter().enumerate() {
            out[[i, d]] = lo + (stratum as f64 + 0.5) * width;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Inner,
    Initial,
    Boundary,
}

impl Partition {
    pub fn tag(self) -> &'static str {
        match self {
            Partition::Inner => "inner",
            Partition::Initial => "ic",
            Partition::Boundary => "bc",
        }
    }
}

/// Shares of the total point budget per partition; must sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionFractions {
    pub bc: f64,
    pub ic: f64,
    pub inner: f64,
}

impl Default for PartitionFractions {
    fn default() -> Self {
        Self {
            bc: 0.45,
            ic: 0.25,
            inner: 0.30,
        }
    }
}

impl PartitionFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.bc, self.ic, self.inner];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::config("partition fractions must lie in [0, 1]"));
        }
        if ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::config("partition fractions must sum to 1"));
        }
        Ok(())
    }

    /// `(bc, ic, inner)` counts; bc and ic are rounded, the remainder goes to inner.
    pub fn counts(&self, total: usize) -> (usize, usize, usize) {
        let bc = (total as f64 * self.bc).round() as usize;
        let ic = (total as f64 * self.ic).round() as usize;
        let bc = bc.min(total);
        let ic = ic.min(total - bc);
        (bc, ic, total - bc - ic)
    }
}

/// Rows are `(x, t, x0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inner: Array2<f64>,
    pub ic: Array2<f64>,
    pub bc: Array2<f64>,
    pub domain: DomainSpec,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inner.nrows() + self.ic.nrows() + self.bc.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn partition(&self, p: Partition) -> ArrayView2<'_, f64> {
        match p {
            Partition::Inner => self.inner.view(),
            Partition::Initial => self.ic.view(),
            Partition::Boundary => self.bc.view(),
        }
    }

    /// Writes `x,t,x0,partition` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(f)
    }

    pub fn write_csv_to(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "x,t,x0,partition")?;
        for p in [Partition::Inner, Partition::Initial, Partition::Boundary] {
            for row in self.partition(p).rows() {
                writeln!(out, "{},{},{},{}", row[0], row[1], row[2], p.tag())?;
            }
        }
        Ok(())
    }
}

/// Builds the pooled collocation set over all source positions.
pub fn assemble_training_set(
    domain: &DomainSpec,
    source_grid: &[f64],
    total: usize,
    fractions: &PartitionFractions,
    seed: u64,
) -> Result<TrainingSet> {
    domain.validate()?;
    fractions.validate()?;
    if source_grid.is_empty() {
        return Err(Error::config("source grid is empty"));
    }
    if let Some(x0) = source_grid
        .iter()
        .find(|&&x0| !(x0 > domain.x_min && x0 < domain.x_max))
    {
        return Err(Error::config(format!(
            "source position {x0} outside the domain"
        )));
    }
    let (n_bc, n_ic, n_inner) = fractions.counts(total);
    let label = |i: usize| source_grid[i % source_grid.len()];
    let x_range = (domain.x_min, domain.x_max);
    let t_range = (0.0, domain.t_max);

    let mut inner = Array2::zeros((n_inner, 3));
    if n_inner > 0 {
        let pts = latin_hypercube_centered(n_inner, &[x_range, t_range], seed)?;
        for i in 0..n_inner {
            inner[[i, 0]] = pts[[i, 0]];
            inner[[i, 1]] = pts[[i, 1]];
            inner[[i, 2]] = label(i);
        }
    }

    let mut ic = Array2::zeros((n_ic, 3));
    if n_ic > 0 {
        let pts = latin_hypercube_centered(n_ic, &[x_range], seed.wrapping_add(1))?;
        for i in 0..n_ic {
            ic[[i, 0]] = pts[[i, 0]];
            ic[[i, 2]] = label(i);
        }
    }

    // Wall times are shared between the two endpoints; an odd count leaves the
    // right wall one point short.
    let mut bc = Array2::zeros((n_bc, 3));
    let n_left = n_bc.div_ceil(2);
    if n_left > 0 {
        let ts = latin_hypercube_centered(n_left, &[t_range], seed.wrapping_add(2))?;
        for i in 0..n_bc {
            let (x, k) = if i < n_left {
                (domain.x_min, i)
            } else {
                (domain.x_max, i - n_left)
            };
            bc[[i, 0]] = x;
            bc[[i, 1]] = ts[[k, 0]];
            bc[[i, 2]] = label(i);
        }
    }

    Ok(TrainingSet {
        inner,
        ic,
        bc,
        domain: *domain,
    })
}

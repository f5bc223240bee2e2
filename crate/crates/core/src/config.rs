//! Run configuration and on-disk file schemas.
//!
//! A [`RunConfig`] is a TOML document; every section has defaults, unknown
//! keys are rejected, and [`RunConfig::validate`] runs the invariant checks of
//! each module it feeds. Relative paths resolve against the directory of the
//! config file, except `output_dir`, which resolves against the output root
//! (the working directory unless overridden).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::material::{ade_integrate, FitReport, FrequencyBand, PorousLayer, Weighting};
use crate::model::{
    analytic_free_field, BoundarySpec, DomainSpec, GaussianSource, PhysicalConstants,
    RationalAdmittance,
};
use crate::net::{init_glorot, init_siren, Activation, Network, DEFAULT_OMEGA0, INPUT_DIM};
use crate::reference::SolverConfig;
use crate::sampling::PartitionFractions;
use crate::trainer::{Surrogate, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;
pub const MATERIAL_FORMAT: &str = "wavepinn-material";
pub const MATERIAL_VERSION: u32 = 1;

/// Source/receiver pairs `(x0, x)` evaluated by default.
pub const DEFAULT_PAIRS: [[f64; 2]; 5] = [
    [-0.3, 0.64],
    [-0.15, 0.58],
    [0.0, 0.5],
    [0.15, -0.58],
    [0.3, -0.66],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub output_dir: PathBuf,
    pub physics: PhysicalConstants,
    pub domain: DomainSpec,
    pub source: SourceConfig,
    pub boundary: BoundaryConfig,
    pub material: MaterialConfig,
    pub sampling: SamplingConfig,
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub training: TrainConfig,
    /// Epochs between checkpoint writes during training; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub reference: ReferenceConfig,
    pub evaluation: EvaluationConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            output_dir: PathBuf::from("runs/default"),
            physics: PhysicalConstants::default(),
            domain: DomainSpec::default(),
            source: SourceConfig::default(),
            boundary: BoundaryConfig::default(),
            material: MaterialConfig::default(),
            sampling: SamplingConfig::default(),
            network: NetworkConfig::default(),
            loss: LossConfig::default(),
            training: TrainConfig::default(),
            checkpoint_every: 500,
            reference: ReferenceConfig::default(),
            evaluation: EvaluationConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub sigma0: f64,
    /// Source positions pooled into one training set.
    pub grid: Vec<f64>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            sigma0: 0.2,
            grid: (-3..=3).map(|i| 0.1 * i as f64).collect(),
        }
    }
}

/// Wall model for both walls. Frequency-dependent walls read their
/// admittance from a material file written by `fit-material`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Neumann {},
    FrequencyIndependent { xi: f64 },
    FrequencyDependent { material_file: PathBuf },
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig::FrequencyIndependent { xi: 5.83 }
    }
}

/// Wall material to be fitted, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialModel {
    /// Porous layer on a rigid backing.
    Miki { d_mat: f64, sigma_mat: f64 },
    /// Frequency-independent wall of specific impedance `xi`.
    Constant { xi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub material: MaterialModel,
    /// Physical band in Hz.
    pub band: FrequencyBand,
    pub q: usize,
    pub s: usize,
    pub iterations: usize,
    pub weighting: Weighting,
    /// Largest acceptable relative fit error.
    pub max_rel_error: f64,
    /// Written by `fit-material`; relative to the output directory.
    pub output_file: PathBuf,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let layer = PorousLayer::default();
        Self {
            material: MaterialModel::Miki {
                d_mat: layer.d_mat,
                sigma_mat: layer.sigma_mat,
            },
            band: FrequencyBand::default(),
            q: 2,
            s: 1,
            iterations: 50,
            weighting: Weighting::default(),
            max_rel_error: 0.01,
            output_file: PathBuf::from("material.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub total: usize,
    pub fractions: PartitionFractions,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            total: 47_089,
            fractions: PartitionFractions::default(),
            seed: 0,
        }
    }
}

/// Hidden layer widths and activation of one network; inputs are `(x, t, x0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
}

fn default_omega0() -> f64 {
    DEFAULT_OMEGA0
}

impl NetSpec {
    pub fn sizes(&self, outputs: usize) -> Vec<usize> {
        let mut sizes = vec![INPUT_DIM];
        sizes.extend(&self.hidden);
        sizes.push(outputs);
        sizes
    }

    pub fn build(&self, outputs: usize, seed: u64) -> Result<Network> {
        let sizes = self.sizes(outputs);
        match self.activation {
            Activation::Sine => init_siren(&sizes, self.omega0, seed),
            Activation::Tanh => init_glorot(&sizes, seed),
            Activation::Identity => Err(Error::config(
                "hidden layers need a sine or tanh activation",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub field: NetSpec,
    pub ade: NetSpec,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            field: NetSpec {
                hidden: vec![256; 3],
                activation: Activation::Sine,
                omega0: DEFAULT_OMEGA0,
            },
            ade: NetSpec {
                hidden: vec![20; 3],
                activation: Activation::Tanh,
                omega0: DEFAULT_OMEGA0,
            },
            seed: 0,
        }
    }
}

/// Accumulator scaling factors: explicit, or measured from the material with [`auto_scaling`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum Scaling {
    Auto(AutoTag),
    Explicit {
        l_phi: Vec<f64>,
        l_psi0: Vec<f64>,
        l_psi1: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda_ic: f64,
    pub lambda_bc: f64,
    pub lambda_ade: f64,
    pub scaling: Scaling,
}

impl Default for LossConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            lambda_ic: w.lambda_ic,
            lambda_bc: w.lambda_bc,
            lambda_ade: w.lambda_ade,
            scaling: Scaling::Explicit {
                l_phi: w.l_phi,
                l_psi0: w.l_psi0,
                l_psi1: w.l_psi1,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    /// Image sources for frequency-independent walls, the solver otherwise.
    #[default]
    Auto,
    ImageSource,
    Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub method: ReferenceMethod,
    pub solver: SolverConfig,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            method: ReferenceMethod::Auto,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// `[x0, x]` source/receiver pairs.
    pub pairs: Vec<[f64; 2]>,
    /// Samples over `[0, t_max]`, endpoints included.
    pub n_times: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            pairs: DEFAULT_PAIRS.to_vec(),
            n_times: 1001,
        }
    }
}

impl EvaluationConfig {
    pub fn times(&self, t_max: f64) -> Vec<f64> {
        let n = self.n_times;
        (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub n_samples: usize,
    pub repeats: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_samples: 44_100,
            repeats: 5,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file; relative input paths become
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let BoundaryConfig::FrequencyDependent { material_file } = &mut cfg.boundary {
            if material_file.is_relative() {
                *material_file = base.join(&*material_file);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Output directory under `root` when it is relative.
    pub fn output_dir_in(&self, root: Option<&Path>) -> PathBuf {
        match root {
            Some(r) if self.output_dir.is_relative() => r.join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.physics.validate()?;
        self.domain.validate()?;
        if self.source.grid.is_empty() {
            return Err(Error::config("source grid is empty"));
        }
        for &x0 in &self.source.grid {
            self.domain
                .check_source(&GaussianSource::new(x0, self.source.sigma0)?)?;
        }
        match &self.boundary {
            BoundaryConfig::Neumann {} => {}
            BoundaryConfig::FrequencyIndependent { xi } => {
                BoundarySpec::FrequencyIndependent { xi: *xi }.validate()?
            }
            BoundaryConfig::FrequencyDependent { material_file } => {
                if material_file.as_os_str().is_empty() {
                    return Err(Error::config("material_file is empty"));
                }
            }
        }
        self.material.validate()?;
        self.sampling.fractions.validate()?;
        if self.sampling.total == 0 {
            return Err(Error::config("sampling.total must be positive"));
        }
        for spec in [&self.network.field, &self.network.ade] {
            if spec.hidden.is_empty() || spec.hidden.contains(&0) {
                return Err(Error::config(
                    "networks need at least one hidden layer of positive width",
                ));
            }
            if spec.activation == Activation::Identity {
                return Err(Error::config(
                    "hidden layers need a sine or tanh activation",
                ));
            }
            if !(spec.omega0 > 0.0 && spec.omega0.is_finite()) {
                return Err(Error::config("omega0 must be positive"));
            }
        }
        self.loss.validate()?;
        self.training.validate()?;
        self.reference.solver.validate()?;
        if self.evaluation.n_times < 2 {
            return Err(Error::config("evaluation.n_times must be at least 2"));
        }
        for &[x0, x] in &self.evaluation.pairs {
            if !self.domain.contains(x0) || !self.domain.contains(x) {
                return Err(Error::config(format!(
                    "evaluation pair ({x0}, {x}) lies outside the domain"
                )));
            }
        }
        if self.benchmark.n_samples == 0 || self.benchmark.repeats == 0 {
            return Err(Error::config(
                "benchmark needs positive n_samples and repeats",
            ));
        }
        Ok(())
    }

    pub fn source(&self, x0: f64) -> Result<GaussianSource> {
        GaussianSource::new(x0, self.source.sigma0)
    }

    /// Resolves the boundary, reading the material file if needed.
    pub fn boundary_spec(&self) -> Result<BoundarySpec> {
        let spec = match &self.boundary {
            BoundaryConfig::Neumann {} => BoundarySpec::Neumann,
            BoundaryConfig::FrequencyIndependent { xi } => {
                BoundarySpec::FrequencyIndependent { xi: *xi }
            }
            BoundaryConfig::FrequencyDependent { material_file } => {
                BoundarySpec::FrequencyDependent {
                    admittance: MaterialFile::load(material_file)?.admittance,
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Loss weights for `boundary`, measuring scalings if they are set to `auto`.
    pub fn loss_weights(&self, boundary: &BoundarySpec) -> Result<LossWeights> {
        let (l_phi, l_psi0, l_psi1) = match (&self.loss.scaling, boundary.admittance()) {
            (
                Scaling::Explicit {
                    l_phi,
                    l_psi0,
                    l_psi1,
                },
                _,
            ) => (l_phi.clone(), l_psi0.clone(), l_psi1.clone()),
            (Scaling::Auto(_), Some(adm)) => {
                let l = auto_scaling(adm, &self.domain, &self.source.grid, self.source.sigma0)?;
                let (q, s) = (adm.q(), adm.s());
                (l[..q].to_vec(), l[q..q + s].to_vec(), l[q + s..].to_vec())
            }
            (Scaling::Auto(_), None) => (Vec::new(), Vec::new(), Vec::new()),
        };
        let w = LossWeights {
            lambda_ic: self.loss.lambda_ic,
            lambda_bc: self.loss.lambda_bc,
            lambda_ade: self.loss.lambda_ade,
            l_phi,
            l_psi0,
            l_psi1,
        };
        w.validate()?;
        Ok(w)
    }

    /// Freshly initialized networks for `boundary`.
    pub fn build_surrogate(&self, boundary: &BoundarySpec) -> Result<Surrogate> {
        let nf = self.network.field.build(1, self.network.seed)?;
        let nade = match boundary.admittance() {
            Some(adm) => Some(
                self.network
                    .ade
                    .build(adm.n_accumulators(), self.network.seed.wrapping_add(1))?,
            ),
            None => None,
        };
        Ok(Surrogate { nf, nade })
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let mut all = vec![self.lambda_ic, self.lambda_bc, self.lambda_ade];
        if let Scaling::Explicit {
            l_phi,
            l_psi0,
            l_psi1,
        } = &self.scaling
        {
            if l_psi0.len() != l_psi1.len() {
                return Err(Error::config(
                    "l_psi0 and l_psi1 need one entry per complex pair",
                ));
            }
            all.extend(l_phi.iter().chain(l_psi0).chain(l_psi1));
        }
        if let Some(w) = all.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::config(format!(
                "loss weights and scalings must be positive, got {w}"
            )));
        }
        Ok(())
    }
}

impl MaterialConfig {
    pub fn validate(&self) -> Result<()> {
        match self.material {
            MaterialModel::Miki { d_mat, sigma_mat } => {
                PorousLayer::new(d_mat, sigma_mat)?;
            }
            MaterialModel::Constant { xi } => {
                BoundarySpec::FrequencyIndependent { xi }.validate()?
            }
        }
        self.band.validate()?;
        if self.iterations == 0 {
            return Err(Error::config("material.iterations must be positive"));
        }
        if !(self.max_rel_error > 0.0) {
            return Err(Error::config("material.max_rel_error must be positive"));
        }
        Ok(())
    }
}

/// Scalings `1 / max|acc|`, in output order, with each wall driven by twice
/// the incident free-field pulse of every training source.
pub fn auto_scaling(
    adm: &RationalAdmittance,
    domain: &DomainSpec,
    grid: &[f64],
    sigma0: f64,
) -> Result<Vec<f64>> {
    adm.validate()?;
    let n = 4000;
    let dt = domain.t_max / n as f64;
    let mut peak = vec![0.0f64; adm.n_accumulators()];
    for &x0 in grid {
        let src = GaussianSource::new(x0, sigma0)?;
        for wall in [domain.x_min, domain.x_max] {
            let p: Vec<f64> = (0..=n)
                .map(|i| 2.0 * analytic_free_field(wall, i as f64 * dt, &src, 1.0))
                .collect();
            let acc = ade_integrate(adm, &p, dt)?;
            // network output order: every phi, then every psi0, then every psi1
            for (m, series) in peak
                .iter_mut()
                .zip(acc.phi.iter().chain(&acc.psi0).chain(&acc.psi1))
            {
                *m = series.iter().fold(*m, |m, v| m.max(v.abs()));
            }
        }
    }
    if let Some(k) = peak.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::numerical(format!(
            "accumulator {k} stays at zero; set its scaling explicitly"
        )));
    }
    Ok(peak.iter().map(|m| 1.0 / m).collect())
}

/// Fitted wall admittance in normalized units, with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFile {
    pub format: String,
    pub version: u32,
    pub physics: PhysicalConstants,
    pub material: MaterialModel,
    /// Physical band the fit covered.
    pub band: FrequencyBand,
    pub max_rel_error: f64,
    pub rms_rel_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub admittance: RationalAdmittance,
}

impl MaterialFile {
    pub fn new(
        physics: PhysicalConstants,
        material: MaterialModel,
        band: FrequencyBand,
        fit: &FitReport,
    ) -> Self {
        Self {
            format: MATERIAL_FORMAT.into(),
            version: MATERIAL_VERSION,
            physics,
            material,
            band,
            max_rel_error: fit.max_rel_error,
            rms_rel_error: fit.rms_rel_error,
            iterations: fit.iterations,
            converged: fit.converged,
            admittance: fit.admittance.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: MaterialFile = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if file.format != MATERIAL_FORMAT || file.version != MATERIAL_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("expected {MATERIAL_FORMAT} version {MATERIAL_VERSION}"),
            });
        }
        file.admittance.validate()?;
        Ok(file)
    }
}

/// Pressure time series for one source/receiver pair; CSV columns `t,x0,x,p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub x0: f64,
    pub x: f64,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    t: f64,
    x0: f64,
    x: f64,
    p: f64,
}

impl Trace {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (&t, &p) in self.t.iter().zip(&self.p) {
            w.serialize(TraceRow {
                t,
                x0: self.x0,
                x: self.x,
                p,
            })?;
        }
        if self.t.is_empty() {
            w.write_record(["t", "x0", "x", "p"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut r = csv::Reader::from_path(path)?;
        let mut trace = Trace {
            x0: f64::NAN,
            x: f64::NAN,
            t: Vec::new(),
            p: Vec::new(),
        };
        for (i, row) in r.deserialize::<TraceRow>().enumerate() {
            let row = row?;
            if i == 0 {
                (trace.x0, trace.x) = (row.x0, row.x);
            } else if row.x0 != trace.x0 || row.x != trace.x {
                return Err(bad(format!(
                    "row {} changes the source/receiver pair",
                    i + 1
                )));
            }
            trace.t.push(row.t);
            trace.p.push(row.p);
        }
        if trace.t.is_empty() {
            return Err(bad("no samples".into()));
        }
        Ok(trace)
    }

    /// Errors unless `other` covers the same pair and time grid.
    pub fn check_same_grid(&self, other: &Trace) -> Result<()> {
        if self.x0 != other.x0 || self.x != other.x {
            return Err(Error::dim(format!(
                "pair (x0 = {}, x = {}) does not match (x0 = {}, x = {})",
                self.x0, self.x, other.x0, other.x
            )));
        }
        let same_t = self.t.len() == other.t.len()
            && self
                .t
                .iter()
                .zip(&other.t)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if !same_t {
            return Err(Error::dim("time grids differ"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(cfg.network.field.sizes(1), vec![3, 256, 256, 256, 1]);
        assert_eq!(cfg.network.ade.sizes(4), vec![3, 20, 20, 20, 4]);
        assert_eq!(cfg.source.grid.len(), 7);
    }

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[training]\nlearning_rat = 1e-3").is_err());
        assert!(RunConfig::from_toml_str("[boundary]\nkind = \"neumann\"\nxi = 2.0").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = RunConfig::from_toml_str(
            "[training]\nlearning_rate = 1e-3\n[boundary]\nkind = \"neumann\"",
        )
        .unwrap();
        assert_eq!(cfg.training.learning_rate, 1e-3);
        assert_eq!(cfg.training.batch_size, 512);
        assert_eq!(cfg.boundary, BoundaryConfig::Neumann {});
    }

    #[test]
    fn scaling_forms() {
        let cfg = RunConfig::from_toml_str("[loss]\nscaling = \"auto\"").unwrap();
        assert_eq!(cfg.loss.scaling, Scaling::Auto(AutoTag::Auto));
        let cfg =
            RunConfig::from_toml_str("[loss.scaling]\nl_phi = [1.0]\nl_psi0 = []\nl_psi1 = []")
                .unwrap();
        assert!(matches!(cfg.loss.scaling, Scaling::Explicit { .. }));
        assert!(RunConfig::from_toml_str("[loss]\nscaling = \"manual\"").is_err());
        assert!(RunConfig::from_toml_str(
            "[loss.scaling]\nl_phi = [-1.0]\nl_psi0 = []\nl_psi1 = []"
        )
        .is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        for doc in [
            "[domain]\nx_min = 1.0\nx_max = -1.0\nt_max = 2.0",
            "[source]\ngrid = []",
            "[source]\ngrid = [1.5]",
            "[boundary]\nkind = \"frequency_independent\"\nxi = -1.0",
            "[sampling]\ntotal = 0",
            "[network.field]\nhidden = []\nactivation = \"sine\"",
            "[evaluation]\npairs = [[0.0, 2.0]]",
            "[reference.solver]\ncfl = 2.0",
            "version = 7",
        ] {
            assert!(RunConfig::from_toml_str(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn relative_material_path_follows_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "[boundary]\nkind = \"frequency_dependent\"\nmaterial_file = \"m.json\"",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(
            cfg.boundary,
            BoundaryConfig::FrequencyDependent {
                material_file: dir.path().join("m.json")
            }
        );
        assert!(cfg.boundary_spec().is_err());
    }

    #[test]
    fn output_root_applies_to_relative_dirs() {
        let mut cfg = RunConfig::default();
        assert_eq!(
            cfg.output_dir_in(Some(Path::new("/data"))),
            PathBuf::from("/data/runs/default")
        );
        cfg.output_dir = PathBuf::from("/abs");
        assert_eq!(
            cfg.output_dir_in(Some(Path::new("/data"))),
            PathBuf::from("/abs")
        );
    }

    #[test]
    fn surrogate_matches_boundary() {
        let cfg = RunConfig::default();
        let s = cfg.build_surrogate(&BoundarySpec::Neumann).unwrap();
        assert!(s.nade.is_none());
        let adm = RationalAdmittance {
            y_inf: 0.1,
            real_poles: vec![crate::model::RealPole {
                residue: 1.0,
                lambda: 2.0,
            }],
            complex_pairs: Vec::new(),
        };
        let s = cfg
            .build_surrogate(&BoundarySpec::FrequencyDependent { admittance: adm })
            .unwrap();
        assert_eq!(s.nade.unwrap().output_dim(), 1);
    }

    #[test]
    fn auto_scaling_single_pole() {
        // phi' + lambda phi = p peaks just below max|p| / lambda = 1 / 50
        let adm = RationalAdmittance {
            y_inf: 0.0,
            real_poles: vec![crate::model::RealPole {
                residue: 1.0,
                lambda: 50.0,
            }],
            complex_pairs: Vec::new(),
        };
        let l = auto_scaling(&adm, &DomainSpec::default(), &[0.0], 0.2).unwrap();
        assert!(l[0] >= 50.0 && l[0] < 100.0, "{}", l[0]);
    }

    #[test]
    fn auto_scaling_follows_output_order() {
        let pair = |alpha| crate::model::ComplexPair {
            b: 1.0,
            c: 0.0,
            alpha,
            beta: 1.0,
        };
        let adm = RationalAdmittance {
            y_inf: 0.0,
            real_poles: Vec::new(),
            complex_pairs: vec![pair(100.0), pair(1.0)],
        };
        // fast pair: psi0 ~ p/100, psi1 ~ psi0/100; slow pair: both O(0.1)
        let l = auto_scaling(&adm, &DomainSpec::default(), &[0.0], 0.2).unwrap();
        assert!(
            l[0] > 50.0 && l[1] < 20.0 && l[2] > 1000.0 && l[3] < 50.0,
            "{l:?}"
        );
    }

    #[test]
    fn trace_round_trip_and_grid_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pair.csv");
        let tr = Trace {
            x0: -0.3,
            x: 0.64,
            t: vec![0.0, 0.1, 0.2],
            p: vec![0.1, -2.5e-7, 1.0 / 3.0],
        };
        tr.save(&path).unwrap();
        let back = Trace::load(&path).unwrap();
        assert_eq!(back, tr);
        back.check_same_grid(&tr).unwrap();
        let shifted = Trace {
            x: 0.5,
            ..tr.clone()
        };
        assert!(matches!(
            shifted.check_same_grid(&tr),
            Err(Error::Dimension(_))
        ));
        let short = Trace {
            t: vec![0.0, 0.1],
            p: vec![0.0, 0.0],
            ..tr.clone()
        };
        assert!(short.check_same_grid(&tr).is_err());
        fs::write(&path, "t,x0,x,p\n0,0,0.5,1\n0.1,0.1,0.5,1\n").unwrap();
        assert!(matches!(Trace::load(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn material_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let fit = FitReport {
            admittance: RationalAdmittance::constant(0.2),
            max_rel_error: 1e-12,
            rms_rel_error: 1e-13,
            iterations: 1,
            converged: true,
        };
        let file = MaterialFile::new(
            PhysicalConstants::default(),
            MaterialModel::Constant { xi: 5.0 },
            FrequencyBand::default(),
            &fit,
        );
        file.save(&path).unwrap();
        assert_eq!(MaterialFile::load(&path).unwrap(), file);
        fs::write(&path, "{\"format\": \"other\"}").unwrap();
        assert!(matches!(
            MaterialFile::load(&path),
            Err(Error::Format { .. })
        ));
    }
}

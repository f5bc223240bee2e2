use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context as _, Result};
use num_complex::Complex64;
use serde::Serialize;

use wavepinn::config::{
    BoundaryConfig, MaterialFile, MaterialModel, ReferenceMethod, RunConfig, Trace,
};
use wavepinn::losses::{LossReport, PhysicsLoss};
use wavepinn::material::{
    miki_admittance_samples, normalize_material, vector_fit_weighted, FrequencyBand, PorousLayer,
    Weighting,
};
use wavepinn::metrics::{self, benchmark_eval, summarize};
use wavepinn::model::BoundarySpec;
use wavepinn::net::{Checkpoint, Network};
use wavepinn::reference::{image_source_solution, reference_trace, Walls};
use wavepinn::sampling::assemble_training_set;
use wavepinn::trainer::{train as run_training, AdamState, Control, Surrogate};
use wavepinn::Error;

pub const CHECKPOINT_FILE: &str = "checkpoint.wpnn";
const PRESSURE: &str = "pressure";
const ADE: &str = "ade";

/// A result that is valid but misses its configured quality threshold.
#[derive(Debug, thiserror::Error)]
#[error("quality threshold missed: {0}")]
pub struct QualityMiss(String);

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<QualityMiss>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Numerical(_)
                | Error::Diverged { .. }
                | Error::Unstable { .. }
                | Error::RankDeficient { .. } => 3,
                _ => 1,
            };
        }
    }
    1
}

pub struct Context {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn load(config: Option<&Path>, output_root: Option<&Path>) -> Result<Self> {
        let mut cfg = match config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        let out_dir = std::path::absolute(cfg.output_dir_in(output_root))?;
        // the effective config must reload identically from anywhere
        cfg.output_dir = out_dir.clone();
        if let BoundaryConfig::FrequencyDependent { material_file } = &mut cfg.boundary {
            *material_file = std::path::absolute(&*material_file)?;
        }
        Ok(Self { cfg, out_dir })
    }

    /// Creates the output directory and records the effective config in it.
    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        self.cfg.save(&self.out_dir.join("effective_config.toml"))?;
        Ok(())
    }

    fn checkpoint_path(&self, explicit: Option<&Path>) -> PathBuf {
        explicit.map_or_else(|| self.out_dir.join(CHECKPOINT_FILE), Path::to_path_buf)
    }

    fn reference_path(&self, k: usize) -> PathBuf {
        self.out_dir.join("reference").join(format!("pair_{k}.csv"))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn load_pressure_net(path: &Path) -> Result<Network> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    ckpt.network(PRESSURE)
        .cloned()
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: format!("no `{PRESSURE}` network"),
        })
        .map_err(Into::into)
}

pub fn fit_material(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let m = &cfg.material;
    let rho0 = cfg.physics.rho0;
    let (band_n, samples, q, s) = match m.material {
        MaterialModel::Miki { d_mat, sigma_mat } => {
            let (layer_n, band_n) = normalize_material(
                &PorousLayer::new(d_mat, sigma_mat)?,
                &m.band,
                cfg.physics.c_phys,
            )?;
            (
                band_n,
                miki_admittance_samples(&layer_n, &band_n, rho0, 1.0)?,
                m.q,
                m.s,
            )
        }
        MaterialModel::Constant { xi } => {
            let norm = cfg.physics.normalization();
            let band_n = FrequencyBand {
                f_min: norm.to_normalized_frequency(m.band.f_min),
                f_max: norm.to_normalized_frequency(m.band.f_max),
                n_samples: m.band.n_samples,
            };
            // a constant needs no poles
            (
                band_n,
                vec![Complex64::new(1.0 / (rho0 * xi), 0.0); m.band.n_samples],
                0,
                0,
            )
        }
    };
    let weights: Option<Vec<f64>> = match m.weighting {
        Weighting::Uniform => None,
        Weighting::Relative => Some(samples.iter().map(|y| 1.0 / y.norm()).collect()),
    };
    let omegas = band_n.omegas();
    let fit = vector_fit_weighted(&omegas, &samples, weights.as_deref(), q, s, m.iterations)?;

    ctx.prepare()?;
    let file = MaterialFile::new(cfg.physics, m.material.clone(), m.band, &fit);
    let path = ctx.out_dir.join(&m.output_file);
    file.save(&path)?;
    let mut out = BufWriter::new(fs::File::create(ctx.out_dir.join("fit_quality.csv"))?);
    writeln!(
        out,
        "f_hz,f_norm,target_re,target_im,fit_re,fit_im,rel_error"
    )?;
    for ((f_phys, w), y) in m.band.frequencies().iter().zip(&omegas).zip(&samples) {
        let y_fit = fit.admittance.evaluate(*w);
        writeln!(
            out,
            "{f_phys},{},{},{},{},{},{:e}",
            w / (2.0 * std::f64::consts::PI),
            y.re,
            y.im,
            y_fit.re,
            y_fit.im,
            (y_fit - y).norm() / y.norm()
        )?;
    }
    out.flush()?;
    log::info!(
        "fitted Q = {}, S = {}: max relative error {:.3e}, rms {:.3e}, {} iterations -> {}",
        fit.admittance.q(),
        fit.admittance.s(),
        fit.max_rel_error,
        fit.rms_rel_error,
        fit.iterations,
        path.display()
    );
    if !fit.converged {
        log::warn!(
            "pole relocation did not settle within {} iterations",
            m.iterations
        );
    }
    if fit.max_rel_error.is_nan() || fit.max_rel_error >= m.max_rel_error {
        return Err(QualityMiss(format!(
            "max relative fit error {:.3e} is not below {:.3e}",
            fit.max_rel_error, m.max_rel_error
        ))
        .into());
    }
    Ok(())
}

fn save_checkpoint(
    path: &Path,
    model: &Surrogate,
    adam: &AdamState,
    epoch: usize,
    config: &str,
) -> Result<()> {
    let mut networks = vec![(PRESSURE.to_string(), model.nf.clone())];
    if let Some(n) = &model.nade {
        networks.push((ADE.to_string(), n.clone()));
    }
    Checkpoint {
        networks,
        optimizer: Some(adam.clone()),
        epoch,
        config: Some(config.to_string()),
    }
    .save(path)?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    stop: String,
    epoch: usize,
    final_loss: f64,
    elapsed_s: f64,
    n_params: usize,
    n_points: usize,
}

pub fn train(ctx: &Context, resume: bool) -> Result<()> {
    let mut ctx_cfg = ctx.cfg.clone();
    if !ctx_cfg.training.deterministic {
        if resume {
            return Err(Error::Config(
                "resume a non-deterministic run from its effective_config.toml".into(),
            )
            .into());
        }
        // draw fresh seeds, then record them so the effective config replays this run
        ctx_cfg.sampling.seed = rand::random::<u32>().into();
        ctx_cfg.network.seed = rand::random::<u32>().into();
        ctx_cfg.training.seed = rand::random::<u32>().into();
        ctx_cfg.training.deterministic = true;
        log::info!(
            "non-deterministic run: seeds sampling {}, network {}, training {}",
            ctx_cfg.sampling.seed,
            ctx_cfg.network.seed,
            ctx_cfg.training.seed
        );
    }
    let ctx = Context {
        cfg: ctx_cfg,
        out_dir: ctx.out_dir.clone(),
    };
    let cfg = &ctx.cfg;
    let boundary = cfg.boundary_spec()?;
    let weights = cfg.loss_weights(&boundary)?;
    let loss = PhysicsLoss::new(
        boundary.clone(),
        weights,
        cfg.domain,
        cfg.source.sigma0,
        cfg.physics.rho0,
    )?;
    let set = assemble_training_set(
        &cfg.domain,
        &cfg.source.grid,
        cfg.sampling.total,
        &cfg.sampling.fractions,
        cfg.sampling.seed,
    )?;
    let ckpt_path = ctx.checkpoint_path(None);
    let (mut model, resume_state) = if resume {
        let ckpt = Checkpoint::load(&ckpt_path)
            .with_context(|| format!("resuming from {}", ckpt_path.display()))?;
        let nf = ckpt
            .network(PRESSURE)
            .cloned()
            .ok_or_else(|| Error::Config("checkpoint has no pressure network".into()))?;
        let nade = ckpt.network(ADE).cloned();
        let adam = ckpt
            .optimizer
            .clone()
            .ok_or_else(|| Error::Config("checkpoint has no optimizer state".into()))?;
        log::info!("resuming at epoch {}", ckpt.epoch);
        (Surrogate { nf, nade }, Some((adam, ckpt.epoch)))
    } else {
        (cfg.build_surrogate(&boundary)?, None)
    };

    ctx.prepare()?;
    let config_text = cfg.to_toml_string()?;
    set.write_csv(&ctx.out_dir.join("training_set.csv"))?;
    let n_ade = model.nade.as_ref().map_or(0, Network::output_dim);
    let log_path = ctx.out_dir.join("loss_log.csv");
    let mut log_out = if resume && log_path.exists() {
        BufWriter::new(fs::OpenOptions::new().append(true).open(&log_path)?)
    } else {
        let mut w = BufWriter::new(fs::File::create(&log_path)?);
        writeln!(w, "{}", LossReport::csv_header(n_ade))?;
        w
    };
    let start_epoch = resume_state.as_ref().map_or(0, |(_, e)| *e);
    if resume_state.is_none() {
        let mut initial = loss.evaluate(&model.nf, model.nade.as_ref().map(|n| n as _), &set)?;
        initial.epoch = 0;
        writeln!(log_out, "{}", initial.csv_row())?;
        save_checkpoint(
            &ckpt_path,
            &model,
            &AdamState::new(model.n_params()),
            0,
            &config_text,
        )?;
    }
    log::info!(
        "training {} parameters on {} points, epochs {}..{}",
        model.n_params(),
        set.len(),
        start_epoch,
        cfg.training.max_epochs
    );

    let started = Instant::now();
    let every = cfg.checkpoint_every;
    let result = run_training(
        &mut model,
        &set,
        &loss,
        &cfg.training,
        resume_state,
        |r, m, adam| {
            writeln!(log_out, "{}", r.csv_row())?;
            if every > 0 && r.epoch % every == 0 {
                log_out.flush()?;
                save_checkpoint(&ckpt_path, m, adam, r.epoch, &config_text)
                    .map_err(|e| Error::Config(format!("{e:#}")))?;
                log::info!(
                    "epoch {}: loss {:.4e} ({:.0} s)",
                    r.epoch,
                    r.total,
                    started.elapsed().as_secs_f64()
                );
            }
            Ok(Control::Continue)
        },
    );
    log_out.flush()?;
    let outcome =
        result.with_context(|| format!("last good checkpoint kept at {}", ckpt_path.display()))?;
    save_checkpoint(
        &ckpt_path,
        &model,
        &outcome.adam,
        outcome.epoch,
        &config_text,
    )?;
    let final_loss = outcome.history.last().map_or(f64::NAN, |r| r.total);
    log::info!(
        "stopped ({:?}) at epoch {} with loss {:.4e}",
        outcome.stop,
        outcome.epoch,
        final_loss
    );
    write_json(
        &ctx.out_dir.join("train_summary.json"),
        &TrainSummary {
            stop: format!("{:?}", outcome.stop),
            epoch: outcome.epoch,
            final_loss,
            elapsed_s: started.elapsed().as_secs_f64(),
            n_params: model.n_params(),
            n_points: set.len(),
        },
    )
}

pub fn reference(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let boundary = cfg.boundary_spec()?;
    let method = match (cfg.reference.method, &boundary) {
        (ReferenceMethod::Auto, BoundarySpec::FrequencyDependent { .. }) => ReferenceMethod::Solver,
        (ReferenceMethod::Auto, _) => ReferenceMethod::ImageSource,
        (ReferenceMethod::ImageSource, BoundarySpec::FrequencyDependent { .. }) => {
            return Err(
                Error::Config("image sources need a frequency-independent wall".into()).into(),
            )
        }
        (m, _) => m,
    };
    ctx.prepare()?;
    fs::create_dir_all(ctx.out_dir.join("reference"))?;
    let times = cfg.evaluation.times(cfg.domain.t_max);
    let walls = Walls::both(boundary.clone());
    for (k, &[x0, x]) in cfg.evaluation.pairs.iter().enumerate() {
        let src = cfg.source(x0)?;
        let p = match method {
            ReferenceMethod::Solver => {
                reference_trace(&cfg.domain, &src, &walls, x, &times, &cfg.reference.solver)?
            }
            _ => {
                let xi = match boundary {
                    BoundarySpec::FrequencyIndependent { xi } => xi,
                    _ => f64::INFINITY,
                };
                times
                    .iter()
                    .map(|&t| image_source_solution(x, t, &src, xi, &cfg.domain))
                    .collect::<wavepinn::Result<_>>()?
            }
        };
        let path = ctx.reference_path(k);
        Trace {
            x0,
            x,
            t: times.clone(),
            p,
        }
        .save(&path)?;
        log::info!("pair {k} (x0 = {x0}, x = {x}) -> {}", path.display());
    }
    Ok(())
}

pub fn evaluate(
    ctx: &Context,
    checkpoint: Option<&Path>,
    predictions: Option<&Path>,
) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut refs = Vec::new();
    for (k, &[x0, x]) in cfg.evaluation.pairs.iter().enumerate() {
        let r = Trace::load(&ctx.reference_path(k))
            .with_context(|| format!("reference for pair {k}"))?;
        if r.x0 != x0 || r.x != x {
            return Err(Error::Dimension(format!(
                "reference pair {k} is (x0 = {}, x = {}), config asks for ({x0}, {x})",
                r.x0, r.x
            ))
            .into());
        }
        refs.push(r);
    }
    let preds: Vec<Trace> = match predictions {
        Some(dir) => refs
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let p = Trace::load(&dir.join(format!("pair_{k}.csv")))?;
                p.check_same_grid(r)?;
                Ok(p)
            })
            .collect::<wavepinn::Result<_>>()?,
        None => {
            let net = load_pressure_net(&ctx.checkpoint_path(checkpoint))?;
            refs.iter()
                .map(|r| {
                    let p =
                        r.t.iter()
                            .map(|&t| net.eval_point(r.x, t, r.x0).map(|v| v[0]))
                            .collect::<wavepinn::Result<_>>()?;
                    Ok(Trace { p, ..r.clone() })
                })
                .collect::<wavepinn::Result<_>>()?
        }
    };
    ctx.prepare()?;
    if predictions.is_none() {
        fs::create_dir_all(ctx.out_dir.join("predictions"))?;
        for (k, p) in preds.iter().enumerate() {
            p.save(
                &ctx.out_dir
                    .join("predictions")
                    .join(format!("pair_{k}.csv")),
            )?;
        }
    }
    let mut out = BufWriter::new(fs::File::create(ctx.out_dir.join("evaluation.csv"))?);
    writeln!(out, "pair,x0,x,mu_rel,inf_abs,n_gated")?;
    for (k, (p, r)) in preds.iter().zip(&refs).enumerate() {
        let s = summarize(&p.p, &r.p)?;
        writeln!(
            out,
            "{k},{},{},{:e},{:e},{}",
            r.x0, r.x, s.mu_rel, s.inf_abs, s.n_gated
        )?;
        log::info!(
            "pair {k}: mu_rel {:.3}%, inf_abs {:.4e}",
            100.0 * s.mu_rel,
            s.inf_abs
        );
    }
    out.flush()?;
    Ok(())
}

pub fn extract_ir(
    ctx: &Context,
    checkpoint: Option<&Path>,
    x0: f64,
    receiver: f64,
    fs_hz: f64,
    duration: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = &ctx.cfg;
    let norm = cfg.physics.normalization();
    let net = load_pressure_net(&ctx.checkpoint_path(checkpoint))?;
    let duration = duration.unwrap_or_else(|| norm.to_physical_time(cfg.domain.t_max));
    let ir = metrics::extract_ir(&net, &cfg.domain, &norm, receiver, x0, fs_hz, duration)?;
    ctx.prepare()?;
    let path = out.map_or_else(
        || ctx.out_dir.join(format!("ir_x0_{x0}_x_{receiver}.csv")),
        Path::to_path_buf,
    );
    let mut w = BufWriter::new(fs::File::create(&path)?);
    writeln!(w, "t_s,t_norm,p")?;
    for (i, (t, p)) in ir.t_norm.iter().zip(&ir.samples).enumerate() {
        writeln!(w, "{},{t},{p}", i as f64 / fs_hz)?;
    }
    w.flush()?;
    log::info!(
        "{} samples in {:.3} ms -> {}",
        ir.samples.len(),
        1e3 * ir.elapsed.as_secs_f64(),
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchmarkReport {
    #[serde(flatten)]
    stats: wavepinn::metrics::BenchmarkStats,
    samples_per_s: f64,
    layer_sizes: Vec<usize>,
    arch: &'static str,
    os: &'static str,
    cpu: Option<String>,
}

fn cpu_model() -> Option<String> {
    let info = fs::read_to_string("/proc/cpuinfo").ok()?;
    info.lines()
        .find(|l| l.starts_with("model name"))
        .and_then(|l| l.split(':').nth(1))
        .map(|s| s.trim().to_string())
}

pub fn benchmark(ctx: &Context, checkpoint: Option<&Path>) -> Result<()> {
    let cfg = &ctx.cfg;
    let net = match checkpoint {
        Some(p) => load_pressure_net(p)?,
        None => cfg.network.field.build(1, cfg.network.seed)?,
    };
    let stats = benchmark_eval(
        &net,
        &cfg.domain,
        cfg.benchmark.n_samples,
        cfg.benchmark.repeats,
    )?;
    ctx.prepare()?;
    let mut w = BufWriter::new(fs::File::create(ctx.out_dir.join("benchmark.csv"))?);
    writeln!(w, "repeat,seconds,n_samples,threads")?;
    for (i, t) in stats.timings_s.iter().enumerate() {
        writeln!(w, "{i},{t:e},{},{}", stats.n_samples, stats.threads)?;
    }
    w.flush()?;
    log::info!(
        "{} samples through {:?}: median {:.3} ms on {} thread(s)",
        stats.n_samples,
        net.layer_sizes(),
        1e3 * stats.median_s,
        stats.threads
    );
    let report = BenchmarkReport {
        samples_per_s: stats.n_samples as f64 / stats.median_s,
        stats,
        layer_sizes: net.layer_sizes(),
        arch: std::env::consts::ARCH,
        os: std::env::consts::OS,
        cpu: cpu_model(),
    };
    write_json(&ctx.out_dir.join("benchmark_summary.json"), &report)
}

//! ADAM minimization of the physics-informed loss.
//!
//! One epoch is a seeded stratified shuffle of the collocation set followed by
//! a full pass in mini-batches; every batch keeps the inner/initial/boundary
//! proportions of the whole set. The pressure network and, for
//! frequency-dependent walls, the accumulator network share one optimizer over
//! their concatenated parameters. Batch order depends only on `(seed, epoch)`,
//! so a run resumed from a checkpoint retraces the uninterrupted trajectory.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossReport, PhysicsLoss};
use crate::net::{Gradient, Network};
use crate::sampling::TrainingSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Stop once the epoch loss is at or below this value.
    pub loss_threshold: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub deterministic: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 512,
            loss_threshold: 2e-4,
            max_epochs: 25_000,
            seed: 0,
            deterministic: true,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.loss_threshold > 0.0) {
            return Err(Error::config("loss_threshold must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(Error::config(
                "adam requires beta1, beta2 in [0, 1) and eps > 0",
            ));
        }
        Ok(())
    }
}

/// First and second moment estimates over the flattened parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }
}

/// One bias-corrected ADAM update. `params` and `grads` are matching slice lists.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let n: usize = params.iter().map(|p| p.len()).sum();
    let n_grad: usize = grads.iter().map(|g| g.len()).sum();
    if params.len() != grads.len() || n != n_grad || n != state.m.len() || n != state.v.len() {
        return Err(Error::dim(format!(
            "adam: {n} parameters, {n_grad} gradients, {} moments",
            state.m.len()
        )));
    }
    if let Some(bad) = grads.iter().flat_map(|g| g.iter()).find(|g| !g.is_finite()) {
        return Err(Error::numerical(format!(
            "non-finite gradient entry {bad} at step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let mut offset = 0;
    for (p, g) in params.iter_mut().zip(grads) {
        let m = &mut state.m[offset..offset + p.len()];
        let v = &mut state.v[offset..offset + p.len()];
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        offset += p.len();
    }
    Ok(())
}

/// Pressure network plus the optional accumulator network.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub nf: Network,
    pub nade: Option<Network>,
}

impl Surrogate {
    pub fn n_params(&self) -> usize {
        self.nf.n_params() + self.nade.as_ref().map_or(0, Network::n_params)
    }

    fn step(&mut self, grads: &[Gradient], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
        let mut params = self.nf.params_mut();
        if let Some(n) = self.nade.as_mut() {
            params.extend(n.params_mut());
        }
        let g: Vec<&[f64]> = grads.iter().flat_map(Gradient::slices).collect();
        adam_step(&mut params, &g, state, cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Loss reached the threshold.
    Converged,
    MaxEpochs,
    /// A callback asked to stop.
    Interrupted,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Initial evaluation followed by one report per completed epoch.
    pub history: Vec<LossReport>,
    pub stop: StopReason,
    pub adam: AdamState,
    /// Last completed epoch.
    pub epoch: usize,
}

/// Whether training should carry on after an epoch callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Splits the set into batches that each keep the partition proportions.
pub fn stratified_batches(
    set: &TrainingSet,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<TrainingSet> {
    let n = set.len();
    if n == 0 {
        return Vec::new();
    }
    let n_batches = n.div_ceil(batch_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut split = |part: &Array2<f64>| -> Vec<Array2<f64>> {
        let mut idx: Vec<usize> = (0..part.nrows()).collect();
        idx.shuffle(&mut rng);
        (0..n_batches)
            .map(|j| {
                let lo = j * idx.len() / n_batches;
                let hi = (j + 1) * idx.len() / n_batches;
                part.select(Axis(0), &idx[lo..hi])
            })
            .collect()
    };
    let inner = split(&set.inner);
    let ic = split(&set.ic);
    let bc = split(&set.bc);
    inner
        .into_iter()
        .zip(ic)
        .zip(bc)
        .map(|((inner, ic), bc)| TrainingSet {
            inner,
            ic,
            bc,
            domain: set.domain,
        })
        .collect()
}

fn accumulate(acc: &mut LossReport, r: &LossReport, weight: f64) {
    acc.total += weight * r.total;
    acc.pde += weight * r.pde;
    acc.ic += weight * r.ic;
    acc.bc += weight * r.bc;
    acc.ade_total += weight * r.ade_total;
    if acc.ade.len() < r.ade.len() {
        acc.ade.resize(r.ade.len(), 0.0);
    }
    for (a, b) in acc.ade.iter_mut().zip(&r.ade) {
        *a += weight * b;
    }
}

/// Runs ADAM from `start_epoch` until the loss threshold or `cfg.max_epochs`.
///
/// The history starts with a full-set evaluation of the incoming networks;
/// each later entry is the batch-size weighted mean of that epoch's batch
/// losses. If the loss or a gradient turns non-finite, the networks are rolled
/// back to the start of the failing epoch and [`Error::Diverged`] is returned.
pub fn train(
    model: &mut Surrogate,
    set: &TrainingSet,
    loss: &PhysicsLoss,
    cfg: &TrainConfig,
    resume: Option<(AdamState, usize)>,
    mut on_epoch: impl FnMut(&LossReport, &Surrogate, &AdamState) -> Result<Control>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (mut adam, start_epoch) = resume.unwrap_or_else(|| (AdamState::new(model.n_params()), 0));
    if adam.m.len() != model.n_params() {
        return Err(Error::dim("optimizer state does not match the networks"));
    }
    let mut initial = loss.evaluate(&model.nf, model.nade.as_ref().map(|n| n as _), set)?;
    initial.epoch = start_epoch;
    if !initial.total.is_finite() {
        return Err(Error::Diverged {
            epoch: start_epoch,
            reason: "initial loss is not finite".into(),
        });
    }
    let mut history = vec![initial.clone()];
    if initial.total <= cfg.loss_threshold {
        return Ok(TrainOutcome {
            history,
            stop: StopReason::Converged,
            adam,
            epoch: start_epoch,
        });
    }

    let n_total = set.len() as f64;
    let mut stop = StopReason::MaxEpochs;
    let mut epoch = start_epoch;
    while epoch < cfg.max_epochs {
        let snapshot = model.clone();
        let mut report = LossReport {
            epoch: epoch + 1,
            ..LossReport::default()
        };
        let run = (|| -> Result<()> {
            for batch in stratified_batches(set, cfg.batch_size, cfg.seed, epoch + 1) {
                let (r, grads) = loss.gradient(&model.nf, model.nade.as_ref(), &batch)?;
                model.step(&grads, &mut adam, cfg)?;
                accumulate(&mut report, &r, batch.len() as f64 / n_total);
            }
            Ok(())
        })();
        if let Err(e) = run.and_then(|_| {
            if report.total.is_finite() {
                Ok(())
            } else {
                Err(Error::numerical("epoch loss is not finite"))
            }
        }) {
            *model = snapshot;
            return Err(Error::Diverged {
                epoch: epoch + 1,
                reason: e.to_string(),
            });
        }
        epoch += 1;
        log::debug!("epoch {epoch}: loss {:.4e}", report.total);
        let done = report.total <= cfg.loss_threshold;
        history.push(report);
        let control = on_epoch(history.last().expect("pushed"), model, &adam)?;
        if done {
            stop = StopReason::Converged;
            break;
        }
        if control == Control::Stop {
            stop = StopReason::Interrupted;
            break;
        }
    }
    Ok(TrainOutcome {
        history,
        stop,
        adam,
        epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossWeights;
    use crate::model::{BoundarySpec, DomainSpec};
    use crate::net::init_siren;
    use crate::sampling::{assemble_training_set, PartitionFractions};

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0, -2.0, 3.0];
        let g = [0.0; 3];
        let mut st = AdamState::new(3);
        adam_step(&mut [&mut p[..]], &[&g[..]], &mut st, &cfg).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn constant_gradient_step_tends_to_learning_rate() {
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let mut p = [0.0];
        let mut st = AdamState::new(1);
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p[0];
            adam_step(&mut [&mut p[..]], &[&[0.37][..]], &mut st, &cfg).unwrap();
            last = before - p[0];
        }
        assert!((last - 1e-3).abs() < 1e-3 * 1e-6, "{last}");
    }

    #[test]
    fn adam_is_deterministic() {
        let cfg = TrainConfig::default();
        let run = || {
            let mut p: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
            let mut st = AdamState::new(10);
            for k in 0..100 {
                let g: Vec<f64> = p.iter().map(|x| (x * 3.0 + k as f64).sin()).collect();
                adam_step(&mut [&mut p[..]], &[&g[..]], &mut st, &cfg).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = [0.0];
        let mut st = AdamState::new(1);
        let r = adam_step(
            &mut [&mut p[..]],
            &[&[f64::NAN][..]],
            &mut st,
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::Numerical(_))));
        assert_eq!(st.step, 0);
    }

    fn setup() -> (Surrogate, TrainingSet, PhysicsLoss) {
        let set = assemble_training_set(
            &DomainSpec::default(),
            &[0.0],
            200,
            &PartitionFractions::default(),
            5,
        )
        .unwrap();
        let loss = PhysicsLoss::new(
            BoundarySpec::FrequencyIndependent { xi: 5.83 },
            LossWeights::default(),
            DomainSpec::default(),
            0.2,
            1.2,
        )
        .unwrap();
        let nf = init_siren(&[3, 16, 16, 1], 30.0, 3).unwrap();
        (Surrogate { nf, nade: None }, set, loss)
    }

    #[test]
    fn batches_are_stratified_and_cover_the_set() {
        let (_, set, _) = setup();
        let batches = stratified_batches(&set, 64, 1, 1);
        assert_eq!(batches.len(), 4);
        assert_eq!(
            batches.iter().map(TrainingSet::len).sum::<usize>(),
            set.len()
        );
        for b in &batches {
            assert!(b.bc.nrows().abs_diff(set.bc.nrows() / 4) <= 1);
            assert!(b.ic.nrows().abs_diff(set.ic.nrows() / 4) <= 1);
        }
        assert_eq!(batches, stratified_batches(&set, 64, 1, 1));
        assert_ne!(batches, stratified_batches(&set, 64, 1, 2));
    }

    #[test]
    fn threshold_met_immediately() {
        let (mut m, set, loss) = setup();
        let before = m.clone();
        let cfg = TrainConfig {
            loss_threshold: 1e9,
            ..TrainConfig::default()
        };
        let out = train(&mut m, &set, &loss, &cfg, None, |_, _, _| {
            Ok(Control::Continue)
        })
        .unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.stop, StopReason::Converged);
        assert_eq!(m, before);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (mut m, set, loss) = setup();
        let before = m.clone();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&mut m, &set, &loss, &cfg, None, |_, _, _| {
            Ok(Control::Continue)
        })
        .unwrap();
        assert_eq!(m, before);
        assert_eq!(out.epoch, 0);
        assert_eq!(out.stop, StopReason::MaxEpochs);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (m0, set, loss) = setup();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 6,
            ..TrainConfig::default()
        };
        let mut full = m0.clone();
        let out_full = train(&mut full, &set, &loss, &cfg, None, |_, _, _| {
            Ok(Control::Continue)
        })
        .unwrap();

        let mut part = m0.clone();
        let first = TrainConfig {
            max_epochs: 3,
            ..cfg.clone()
        };
        let out1 = train(&mut part, &set, &loss, &first, None, |_, _, _| {
            Ok(Control::Continue)
        })
        .unwrap();
        let out2 = train(
            &mut part,
            &set,
            &loss,
            &cfg,
            Some((out1.adam, out1.epoch)),
            |_, _, _| Ok(Control::Continue),
        )
        .unwrap();
        assert_eq!(part, full);
        assert_eq!(out2.adam, out_full.adam);
        assert_eq!(out2.history.last(), out_full.history.last());
        assert!(out_full.history.last().unwrap().total < out_full.history[0].total);
    }

    #[test]
    fn divergence_rolls_back() {
        let (mut m, set, loss) = setup();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let mut calls = 0;
        let saved = std::cell::RefCell::new(None);
        // Poison the weights after the first epoch; the second epoch must fail and roll back.
        let r = train(&mut m, &set, &loss, &cfg, None, |_, model, _| {
            calls += 1;
            *saved.borrow_mut() = Some(model.clone());
            Ok(Control::Continue)
        });
        assert!(r.is_ok());
        assert_eq!(calls, 3);

        let mut poisoned = saved.into_inner().unwrap();
        poisoned.nf.params_mut()[0][0] = f64::NAN;
        let before = poisoned.clone();
        let r = train(&mut poisoned, &set, &loss, &cfg, None, |_, _, _| {
            Ok(Control::Continue)
        });
        assert!(matches!(r, Err(Error::Diverged { .. })));
        assert_eq!(format!("{:?}", poisoned), format!("{:?}", before));
    }
}

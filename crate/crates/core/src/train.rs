//! Regularized loss, minibatch descent and the baseline-matching sweep.
//!
//! The training objective on a minibatch is
//! `mean |Y - N(X)|^2 + alpha * Lip_S(N)`, where `Lip_S` is the finite-set
//! estimate from [`crate::lipreg`] taken on a fresh random subsample of the
//! probe set at every step. Its gradient uses the maximizing pair, held fixed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{inputs_matrix, targets_matrix, Dataset, SamplePair};
use crate::linalg::Matrix;
use crate::lipreg::{
    estimate_lipschitz, lipschitz_subgradient, sample_probe_set, LipEstimate, ProbeSet, REPORT_PROBE_SIZE,
    STEP_PROBE_SIZE,
};
use crate::net::{Gradients, MlpParams, DEFAULT_LRELU_EPS};
use crate::{Error, Result, Scalar};

/// The regularization weight whose fixed-epoch run defines the baseline.
pub const BASELINE_ALPHA: f64 = 0.01;

/// Default regularization grid, in report order.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.0, 0.01, 0.005, 0.0025, 0.001];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSeeds {
    pub init: u64,
    pub shuffle: u64,
    pub probe: u64,
}

impl Default for TrainSeeds {
    fn default() -> Self {
        Self {
            init: 17,
            shuffle: 23,
            probe: 29,
        }
    }
}

/// Update rule applied to each minibatch gradient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Gradient descent, optionally with heavy-ball momentum.
    Sgd,
    /// Adam with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    #[default]
    Adam,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
enum OptState<T> {
    Plain,
    Momentum(Gradients<T>),
    Adam { m: Vec<T>, v: Vec<T>, t: i32 },
}

impl<T: Scalar> OptState<T> {
    fn new(cfg: &TrainConfig, params: &MlpParams<T>) -> Self {
        match cfg.optimizer {
            Optimizer::Sgd if cfg.momentum > 0.0 => Self::Momentum(params.zero_grads()),
            Optimizer::Sgd => Self::Plain,
            Optimizer::Adam => {
                let n = params.param_count();
                Self::Adam {
                    m: vec![T::zero(); n],
                    v: vec![T::zero(); n],
                    t: 0,
                }
            }
        }
    }

    fn apply(&mut self, params: &mut MlpParams<T>, grads: &Gradients<T>, lr: T, momentum: f64) -> Result<()> {
        match self {
            Self::Plain => params.descend(grads, lr),
            Self::Momentum(v) => {
                v.scale(T::lit(momentum));
                v.add_scaled(T::one(), grads);
                params.descend(v, lr);
            }
            Self::Adam { m, v, t } => {
                *t += 1;
                let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
                let c1 = T::one() - b1.powi(*t);
                let c2 = T::one() - b2.powi(*t);
                let eps = T::lit(ADAM_EPS);
                let mut flat = params.to_flat();
                for (((p, g), m), v) in flat.iter_mut().zip(grads.to_flat()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
                params.set_flat(&flat)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    /// Number of affine layers `L`; there are `L - 1` hidden layers.
    pub layers: usize,
    pub width: usize,
    pub lrelu_eps: f64,
    pub batch_size: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_period: usize,
    pub max_epochs: usize,
    pub baseline_epochs: usize,
    /// Probe set size `|S|`, capped at the number of distinct training inputs.
    pub probe_n: usize,
    /// Probe points re-drawn from `S` at every step.
    pub step_probe_n: usize,
    /// Redraw `S` itself at the start of every epoch.
    pub resample_probes: bool,
    pub optimizer: Optimizer,
    /// Heavy-ball momentum for [`Optimizer::Sgd`]; zero is plain gradient descent.
    pub momentum: f64,
    pub seeds: TrainSeeds,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            layers: 8,
            width: 30,
            lrelu_eps: DEFAULT_LRELU_EPS,
            batch_size: 50,
            lr0: 1e-2,
            decay_factor: 0.1,
            decay_period: 7,
            max_epochs: 50,
            baseline_epochs: 10,
            probe_n: REPORT_PROBE_SIZE,
            step_probe_n: STEP_PROBE_SIZE,
            resample_probes: false,
            optimizer: Optimizer::Adam,
            momentum: 0.0,
            seeds: TrainSeeds::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad("alpha must be finite and >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must lie in (0, 1]");
        }
        if self.decay_period == 0 {
            return bad("decay_period must be >= 1");
        }
        if self.layers == 0 || self.width == 0 {
            return bad("layers and width must be >= 1");
        }
        if !(self.lr0 >= 0.0) || !self.lr0.is_finite() {
            return bad("lr0 must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.probe_n < 2 || self.step_probe_n < 2 {
            return bad("probe sizes must be >= 2");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        Ok(())
    }

    /// Layer sizes `(1 + d, width, ..., width, out)`.
    pub fn layer_sizes(&self, input_dim: usize, output_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(std::iter::repeat_n(self.width, self.layers - 1));
        sizes.push(output_dim);
        sizes
    }

    /// Staircase schedule: `lr0 * factor^floor((epoch - 1) / period)`, epochs from 1.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let k = epoch.saturating_sub(1) / self.decay_period;
        self.lr0 * self.decay_factor.powi(k as i32)
    }
}

/// When [`train`] stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Exactly this many epochs.
    Epochs(usize),
    /// Until the relative train MSE agrees with this percentage to three
    /// significant digits, at most `max_epochs`.
    MatchBaseline { target_rel_pct: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CompletedEpochs,
    /// Matched at an epoch boundary.
    Matched,
    /// The epoch stepped past the baseline band; matched inside it (see [`train`]).
    MatchedWithinEpoch,
    /// `max_epochs` reached without matching.
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_mse: f64,
    pub train_rel_mse_pct: f64,
    /// Full probe-set estimate; only computed when `alpha > 0`.
    pub lip_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub initial_train_mse: f64,
    pub epochs: Vec<EpochStats>,
    pub stop: StopReason,
    /// Calls into the Lipschitz estimator made by this run.
    pub lip_evaluations: usize,
}

impl TrainRecord {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    pub fn flagged(&self) -> bool {
        self.stop == StopReason::MaxEpochs
    }

    /// `epoch,lr,loss,train_mse,train_rel_mse_pct,lip_estimate`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,loss,train_mse,train_rel_mse_pct,lip_estimate\n");
        for e in &self.epochs {
            let lip = e.lip_estimate.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.lr, e.loss, e.train_mse, e.train_rel_mse_pct, lip
            ));
        }
        out
    }
}

/// Three-significant-digit rendering used by the baseline protocol.
pub fn sig3(v: f64) -> String {
    format!("{v:.2e}")
}

/// Mean over pairs of `|Y - N(X)|^2`.
pub fn mse<T: Scalar>(params: &MlpParams<T>, pairs: &[SamplePair<T>]) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::input("mse of an empty pair set"));
    }
    let (sq, _) = residual_sums(params, pairs)?;
    Ok(sq / T::from_usize_lossy(pairs.len()))
}

/// `100 * sum |Y - N(X)|^2 / sum |Y|^2`.
pub fn relative_mse<T: Scalar>(params: &MlpParams<T>, pairs: &[SamplePair<T>]) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::input("relative mse of an empty pair set"));
    }
    let (sq, norm) = residual_sums(params, pairs)?;
    if norm == T::zero() {
        return Err(Error::Normalization);
    }
    Ok(T::lit(100.0) * sq / norm)
}

fn residual_sums<T: Scalar>(params: &MlpParams<T>, pairs: &[SamplePair<T>]) -> Result<(T, T)> {
    let out = params.predict(&inputs_matrix(pairs))?;
    let mut sq = T::zero();
    let mut norm = T::zero();
    for (p, o) in pairs.iter().zip(out.iter_rows()) {
        if p.target.len() != o.len() {
            return Err(Error::input("target width does not match network output"));
        }
        for (&y, &n) in p.target.iter().zip(o) {
            sq += (y - n) * (y - n);
            norm += y * y;
        }
    }
    Ok((sq, norm))
}

/// Loss value and parameter gradient on one minibatch.
#[derive(Debug, Clone)]
pub struct LossEval<T> {
    pub loss: T,
    pub mse: T,
    /// Estimate on the probes passed in; `None` when `alpha == 0`.
    pub lip: Option<LipEstimate<T>>,
    pub grads: Gradients<T>,
}

/// Batch MSE plus `alpha` times the probe-set estimate, with gradient.
///
/// With `alpha == 0` no Lipschitz work is done and `probes` may be `None`.
pub fn total_loss<T: Scalar>(
    params: &MlpParams<T>,
    inputs: &Matrix<T>,
    targets: &Matrix<T>,
    alpha: T,
    probes: Option<&ProbeSet<T>>,
) -> Result<LossEval<T>> {
    let b = inputs.rows();
    if b == 0 {
        return Err(Error::input("empty minibatch"));
    }
    let (out, tape) = params.forward(inputs)?;
    if targets.shape() != out.shape() {
        return Err(Error::input("targets do not match network output shape"));
    }
    let inv_b = T::one() / T::from_usize_lossy(b);
    let two_over_b = T::lit(2.0) * inv_b;
    let mut up = Matrix::zeros(b, out.cols());
    let mut sq = T::zero();
    for ((u, &o), &y) in up.as_mut_slice().iter_mut().zip(out.as_slice()).zip(targets.as_slice()) {
        let r = o - y;
        sq += r * r;
        *u = two_over_b * r;
    }
    let mse = sq * inv_b;
    let (mut grads, _) = params.backward(&tape, &up)?;

    if alpha == T::zero() {
        return Ok(LossEval {
            loss: mse,
            mse,
            lip: None,
            grads,
        });
    }
    let probes = probes.ok_or_else(|| Error::input("alpha > 0 needs a probe set"))?;
    let est = estimate_lipschitz(params, probes)?;
    let (_, sub) = lipschitz_subgradient(params, probes.point(est.pair.0), probes.point(est.pair.1))?;
    grads.add_scaled(alpha, &sub);
    Ok(LossEval {
        loss: mse + alpha * est.value,
        mse,
        lip: Some(est),
        grads,
    })
}

/// Parameters and history of one run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: MlpParams<T>,
    pub record: TrainRecord,
}

#[derive(Clone)]
struct State<T> {
    params: MlpParams<T>,
    opt: OptState<T>,
    shuffle_rng: ChaCha8Rng,
    probe_rng: ChaCha8Rng,
    probes: Option<ProbeSet<T>>,
}

/// Relative position of a train MSE with respect to the baseline band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Band {
    Above,
    Inside,
    Below,
}

fn band(rel_pct: f64, target: f64) -> Band {
    if sig3(rel_pct) == sig3(target) {
        Band::Inside
    } else if rel_pct > target {
        Band::Above
    } else {
        Band::Below
    }
}

struct Trainer<'a, T> {
    cfg: &'a TrainConfig,
    train: &'a [SamplePair<T>],
    x: Matrix<T>,
    y: Matrix<T>,
    alpha: T,
    lip_evaluations: usize,
}

impl<T: Scalar> Trainer<'_, T> {
    fn rel(&self, params: &MlpParams<T>) -> Result<f64> {
        Ok(relative_mse(params, self.train)?.as_f64())
    }

    fn draw_probes(&self, rng: &mut ChaCha8Rng) -> Result<ProbeSet<T>> {
        sample_probe_set(self.train, self.cfg.probe_n, self.cfg.seeds.probe, rng)
    }

    /// One minibatch update; returns the parameters before the step.
    fn step(&mut self, st: &mut State<T>, idx: &[usize], lr: T, epoch: usize) -> Result<()> {
        let bx = self.x.select_rows(idx);
        let by = self.y.select_rows(idx);
        let sub = match &st.probes {
            Some(s) if self.alpha > T::zero() => {
                self.lip_evaluations += 1;
                Some(s.subsample(self.cfg.step_probe_n, &mut st.probe_rng))
            }
            _ => None,
        };
        let eval = total_loss(&st.params, &bx, &by, self.alpha, sub.as_ref())?;
        if !eval.loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        st.opt.apply(&mut st.params, &eval.grads, lr, self.cfg.momentum)
    }

    fn batches(&self, st: &mut State<T>) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut st.shuffle_rng);
        order.chunks(self.cfg.batch_size).map(<[usize]>::to_vec).collect()
    }

    fn epoch_stats(&mut self, st: &State<T>, epoch: usize, lr: f64) -> Result<EpochStats> {
        let train_mse = mse(&st.params, self.train)?.as_f64();
        let rel = self.rel(&st.params)?;
        let lip = match &st.probes {
            Some(s) if self.alpha > T::zero() => {
                self.lip_evaluations += 1;
                Some(estimate_lipschitz(&st.params, s)?.value.as_f64())
            }
            _ => None,
        };
        let loss = train_mse + self.alpha.as_f64() * lip.unwrap_or(0.0);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        Ok(EpochStats {
            epoch,
            lr,
            loss,
            train_mse,
            train_rel_mse_pct: rel,
            lip_estimate: lip,
        })
    }

    /// Replays an epoch that jumped from above the baseline band to below it,
    /// checking after every minibatch and bisecting the crossing step.
    fn refine(&mut self, st: &mut State<T>, epoch: usize, target: f64) -> Result<bool> {
        let lr = T::lit(self.cfg.learning_rate(epoch));
        for idx in self.batches(st) {
            let before = st.params.to_flat();
            self.step(st, &idx, lr, epoch)?;
            match band(self.rel(&st.params)?, target) {
                Band::Inside => return Ok(true),
                Band::Above => continue,
                Band::Below => {}
            }
            let after = st.params.to_flat();
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut probe = st.params.clone();
            for _ in 0..64 {
                let s = 0.5 * (lo + hi);
                let blend: Vec<T> = before
                    .iter()
                    .zip(&after)
                    .map(|(&a, &b)| a + T::lit(s) * (b - a))
                    .collect();
                probe.set_flat(&blend)?;
                match band(self.rel(&probe)?, target) {
                    Band::Inside => {
                        st.params = probe;
                        return Ok(true);
                    }
                    Band::Above => lo = s,
                    Band::Below => hi = s,
                }
            }
            return Ok(false);
        }
        Ok(false)
    }
}

/// Trains a fresh network on `dataset.train`.
///
/// Each epoch shuffles the training pairs, takes one descent step per
/// minibatch at the staircase learning rate and then records full-set
/// statistics. Under [`StopRule::MatchBaseline`], an epoch whose train MSE
/// jumps from above the three-digit baseline band to below it is replayed from
/// its starting state with a check after every minibatch, and the crossing
/// step is shortened by bisection until the MSE lands inside the band.
pub fn train<T: Scalar>(cfg: &TrainConfig, dataset: &Dataset<T>, stop: StopRule) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::input("empty training set"));
    }
    let sizes = cfg.layer_sizes(dataset.train[0].input.len(), dataset.target_dim());
    let params = MlpParams::init_with_eps(&sizes, T::lit(cfg.lrelu_eps), cfg.seeds.init)?;

    let mut tr = Trainer {
        cfg,
        train: &dataset.train,
        x: inputs_matrix(&dataset.train),
        y: targets_matrix(&dataset.train),
        alpha: T::lit(cfg.alpha),
        lip_evaluations: 0,
    };
    let mut probe_rng = ChaCha8Rng::seed_from_u64(cfg.seeds.probe);
    let probes = if cfg.alpha > 0.0 { Some(tr.draw_probes(&mut probe_rng)?) } else { None };
    let mut st = State {
        opt: OptState::new(cfg, &params),
        params,
        shuffle_rng: ChaCha8Rng::seed_from_u64(cfg.seeds.shuffle),
        probe_rng,
        probes,
    };

    let initial_train_mse = mse(&st.params, &dataset.train)?.as_f64();
    let mut epochs = Vec::new();
    let n_epochs = match stop {
        StopRule::Epochs(n) => n,
        StopRule::MatchBaseline { .. } => cfg.max_epochs,
    };
    let mut prev_band = match stop {
        StopRule::MatchBaseline { target_rel_pct } => {
            let b = band(tr.rel(&st.params)?, target_rel_pct);
            if b == Band::Inside {
                return Ok(TrainOutcome {
                    params: st.params,
                    record: TrainRecord {
                        initial_train_mse,
                        epochs,
                        stop: StopReason::Matched,
                        lip_evaluations: 0,
                    },
                });
            }
            Some(b)
        }
        StopRule::Epochs(_) => None,
    };

    let mut reason = match stop {
        StopRule::Epochs(_) => StopReason::CompletedEpochs,
        StopRule::MatchBaseline { .. } => StopReason::MaxEpochs,
    };
    for epoch in 1..=n_epochs {
        if cfg.resample_probes && epoch > 1 && st.probes.is_some() {
            st.probes = Some(tr.draw_probes(&mut st.probe_rng)?);
        }
        let snapshot = prev_band.map(|_| st.clone());
        let lr = cfg.learning_rate(epoch);
        for idx in tr.batches(&mut st) {
            tr.step(&mut st, &idx, T::lit(lr), epoch)?;
        }

        if let StopRule::MatchBaseline { target_rel_pct } = stop {
            let now = band(tr.rel(&st.params)?, target_rel_pct);
            match (prev_band, now) {
                (_, Band::Inside) => {
                    epochs.push(tr.epoch_stats(&st, epoch, lr)?);
                    reason = StopReason::Matched;
                    break;
                }
                (Some(Band::Above), Band::Below) => {
                    let mut replay = snapshot.expect("snapshot taken in matching mode");
                    if tr.refine(&mut replay, epoch, target_rel_pct)? {
                        st = replay;
                        epochs.push(tr.epoch_stats(&st, epoch, lr)?);
                        reason = StopReason::MatchedWithinEpoch;
                        break;
                    }
                }
                _ => {}
            }
            prev_band = Some(now);
        }
        epochs.push(tr.epoch_stats(&st, epoch, lr)?);
    }

    Ok(TrainOutcome {
        params: st.params,
        record: TrainRecord {
            initial_train_mse,
            epochs,
            stop: reason,
            lip_evaluations: tr.lip_evaluations,
        },
    })
}

/// One trained network of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRun<T> {
    pub alpha: f64,
    pub params: MlpParams<T>,
    pub record: TrainRecord,
}

impl<T> SweepRun<T> {
    pub fn flagged(&self) -> bool {
        self.record.flagged()
    }
}

/// Baseline-matched sweep over `alphas` (which must contain
/// [`BASELINE_ALPHA`]).
///
/// The baseline run trains for `baseline_epochs`; every other weight trains
/// until its relative train MSE agrees with the baseline to three significant
/// digits. Runs come back in the order of `alphas`.
pub fn run_alpha_sweep<T: Scalar>(dataset: &Dataset<T>, base: &TrainConfig, alphas: &[f64]) -> Result<Vec<SweepRun<T>>> {
    let Some(base_pos) = alphas.iter().position(|&a| a == BASELINE_ALPHA) else {
        return Err(Error::Config(format!("alpha grid must contain the baseline weight {BASELINE_ALPHA}")));
    };
    let baseline_cfg = TrainConfig {
        alpha: BASELINE_ALPHA,
        ..base.clone()
    };
    let baseline = train(&baseline_cfg, dataset, StopRule::Epochs(base.baseline_epochs))?;
    let target = baseline
        .record
        .last()
        .map(|e| e.train_rel_mse_pct)
        .ok_or_else(|| Error::Config("baseline_epochs must be >= 1".into()))?;
    log::info!("baseline relative train mse {}%", sig3(target));

    let others: Vec<Result<SweepRun<T>>> = alphas
        .par_iter()
        .enumerate()
        .filter(|&(i, _)| i != base_pos)
        .map(|(_, &alpha)| {
            let cfg = TrainConfig { alpha, ..base.clone() };
            let out = train(&cfg, dataset, StopRule::MatchBaseline { target_rel_pct: target })?;
            if out.record.flagged() {
                log::warn!("alpha {alpha}: baseline not matched within {} epochs", cfg.max_epochs);
            }
            Ok(SweepRun {
                alpha,
                params: out.params,
                record: out.record,
            })
        })
        .collect();

    let mut others = others.into_iter();
    let mut baseline = Some(SweepRun {
        alpha: BASELINE_ALPHA,
        params: baseline.params,
        record: baseline.record,
    });
    (0..alphas.len())
        .map(|i| {
            if i == base_pos {
                Ok(baseline.take().unwrap())
            } else {
                others.next().unwrap()
            }
        })
        .collect()
}

//! From ground-truth trajectories to network sample pairs.
//!
//! The pipeline is: integrate `K` trajectories, add noise scaled by the
//! per-component mean range, build derivative targets (odd extension plus
//! central differences, through a smoothing spline when the data is noisy),
//! then shuffle all `K * M` pairs and split them 80/20.

mod io;
pub mod spline;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{RhsSystem, Trajectory};
use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

pub use io::{write_dataset_csv, write_metadata, DatasetMetadata};
pub use spline::{fit_smoothing_curve, fit_to_noise_level, SmoothingCurve};

/// Fraction of pairs that go to the training set.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Samples added on each side before differencing.
pub const DEFAULT_EXTENSION: usize = 2;

/// Sub-steps per sampling interval for the target difference quotients.
pub const DEFAULT_QUOTIENT_REFINEMENT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise fraction of the mean range, e.g. `0.01` for 1% noise.
    pub level: f64,
    pub seed: u64,
    /// Read `level` as the variance of the normal draw instead of its
    /// standard deviation.
    #[serde(default)]
    pub level_is_variance: bool,
}

impl NoiseSpec {
    pub fn clean() -> Self {
        Self {
            level: 0.0,
            seed: 0,
            level_is_variance: false,
        }
    }

    pub fn new(level: f64, seed: u64) -> Self {
        Self {
            level,
            seed,
            level_is_variance: false,
        }
    }

    /// Standard deviation of the unit-range noise draw `n_ij`.
    pub fn std_dev(&self) -> f64 {
        if self.level_is_variance {
            self.level.sqrt()
        } else {
            self.level
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0) || !self.level.is_finite() {
            return Err(Error::input(format!("noise level must be >= 0, got {}", self.level)));
        }
        Ok(())
    }
}

/// Which comes first for noisy data: the spline fit or the odd extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingOrder {
    /// Fit on the sampled span, then odd-extend the smoothed samples.
    #[default]
    SmoothThenExtend,
    /// Odd-extend the noisy samples, then fit on the extended grid.
    ExtendThenSmooth,
}

/// Knobs of [`build_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub noise: NoiseSpec,
    pub ic_seed: u64,
    pub split_seed: u64,
    pub extension: usize,
    pub order: SmoothingOrder,
    /// Difference quotients use step `dt / quotient_refinement` on a cubic
    /// spline through the extended samples; 1 means plain central
    /// differences of the samples.
    pub quotient_refinement: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            noise: NoiseSpec::clean(),
            ic_seed: 0,
            split_seed: 1,
            extension: DEFAULT_EXTENSION,
            order: SmoothingOrder::default(),
            quotient_refinement: DEFAULT_QUOTIENT_REFINEMENT,
        }
    }
}

/// Network input `(t, x^1, ..., x^d)` and derivative target.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair<T> {
    pub input: Vec<T>,
    pub target: Vec<T>,
    /// `(trajectory i, time index j)` on the original grid.
    pub origin: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub train: Vec<SamplePair<T>>,
    pub test: Vec<SamplePair<T>>,
    pub dim: usize,
    pub system_id: String,
    pub config: DataConfig,
    pub n_traj: usize,
    pub n_times: usize,
    pub dt: T,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of target columns (`d`, or 1 after [`Dataset::component`]).
    pub fn target_dim(&self) -> usize {
        self.train
            .first()
            .or(self.test.first())
            .map_or(self.dim, |p| p.target.len())
    }

    /// Same inputs, targets restricted to component `k`.
    pub fn component(&self, k: usize) -> Result<Self> {
        if k >= self.target_dim() {
            return Err(Error::input(format!("component {k} out of range")));
        }
        let pick = |ps: &[SamplePair<T>]| {
            ps.iter()
                .map(|p| SamplePair {
                    input: p.input.clone(),
                    target: vec![p.target[k]],
                    origin: p.origin,
                })
                .collect()
        };
        Ok(Self {
            train: pick(&self.train),
            test: pick(&self.test),
            ..self.clone()
        })
    }
}

/// Stacks pair inputs into a `B x (1 + d)` matrix.
pub fn inputs_matrix<T: Scalar>(pairs: &[SamplePair<T>]) -> Matrix<T> {
    let rows: Vec<&[T]> = pairs.iter().map(|p| p.input.as_slice()).collect();
    Matrix::from_rows(&rows).expect("sample pairs share input width")
}

pub fn targets_matrix<T: Scalar>(pairs: &[SamplePair<T>]) -> Matrix<T> {
    let rows: Vec<&[T]> = pairs.iter().map(|p| p.target.as_slice()).collect();
    Matrix::from_rows(&rows).expect("sample pairs share target width")
}

/// `K` initial conditions, each component uniform in its box interval.
pub fn sample_initial_conditions<T: Scalar>(system: &RhsSystem<T>, seed: u64) -> Result<Vec<Vec<T>>> {
    if system.n_ic == 0 {
        return Err(Error::input("need at least one initial condition"));
    }
    if system.ic_box.iter().any(|&(a, b)| !(a <= b)) {
        return Err(Error::input("initial-condition box has an inverted interval"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ics = (0..system.n_ic)
        .map(|_| {
            system
                .ic_box
                .iter()
                .map(|&(a, b)| {
                    let u: f64 = rng.random();
                    a + (b - a) * T::lit(u)
                })
                .collect()
        })
        .collect();
    Ok(ics)
}

/// Mean over trajectories of `max_j x^k - min_j x^k`.
pub fn mean_range<T: Scalar>(trajectories: &[Trajectory<T>], k: usize) -> Result<T> {
    if trajectories.is_empty() {
        return Err(Error::input("mean range of an empty trajectory set"));
    }
    let mut total = T::zero();
    for tr in trajectories {
        if k >= tr.dim() {
            return Err(Error::input(format!("component {k} out of range for dimension {}", tr.dim())));
        }
        let col = tr.states.column(k);
        let (lo, hi) = col
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        total += (hi - lo).abs();
    }
    Ok(total / T::from_usize_lossy(trajectories.len()))
}

/// Adds `n_ijk * M_k` to every sample, `n ~ Normal(0, std_dev)`.
///
/// Trajectory `i` draws from its own ChaCha stream, so the result does not
/// depend on processing order.
pub fn add_noise<T: Scalar>(trajectories: &[Trajectory<T>], spec: &NoiseSpec) -> Result<Vec<Trajectory<T>>> {
    spec.validate()?;
    if spec.level == 0.0 || trajectories.is_empty() {
        return Ok(trajectories.to_vec());
    }
    let d = trajectories[0].dim();
    let m = trajectories[0].len();
    if trajectories.iter().any(|t| t.dim() != d || t.len() != m) {
        return Err(Error::input("trajectories must share length and dimension"));
    }
    let ranges = (0..d)
        .map(|k| mean_range(trajectories, k))
        .collect::<Result<Vec<T>>>()?;
    let normal = Normal::new(0.0, spec.std_dev()).map_err(|e| Error::input(e.to_string()))?;

    let noisy = trajectories
        .par_iter()
        .enumerate()
        .map(|(i, tr)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let mut out = tr.clone();
            for j in 0..m {
                for k in 0..d {
                    let n = T::lit(normal.sample(&mut rng));
                    let v = out.states.get(j, k) + n * ranges[k];
                    out.states.set(j, k, v);
                }
            }
            out.ic = out.states.row(0).to_vec();
            out
        })
        .collect();
    Ok(noisy)
}

/// Odd reflection through both endpoints: `v(t0 - q dt) = 2 v(t0) - v(t0 + q dt)`.
pub fn odd_extend<T: Scalar>(values: &[T], p: usize) -> Result<Vec<T>> {
    let m = values.len();
    if m <= p {
        return Err(Error::input(format!("cannot extend {m} samples by {p}")));
    }
    let two = T::lit(2.0);
    let (first, last) = (values[0], values[m - 1]);
    let mut out = Vec::with_capacity(m + 2 * p);
    for q in (1..=p).rev() {
        out.push(two * first - values[q]);
    }
    out.extend_from_slice(values);
    for q in 1..=p {
        out.push(two * last - values[m - 1 - q]);
    }
    Ok(out)
}

/// Central differences `(v[j+1] - v[j-1]) / (2 dt)` at each original index of
/// a sequence extended by `p >= 1` on both sides.
pub fn estimate_derivatives<T: Scalar>(values: &[T], p: usize, dt: T) -> Result<Vec<T>> {
    if p == 0 {
        return Err(Error::input("central differences need an extension of at least 1"));
    }
    if values.len() < 2 * p + 1 {
        return Err(Error::input(format!(
            "extended sequence of length {} is too short for extension {p}",
            values.len()
        )));
    }
    let m = values.len() - 2 * p;
    let denom = T::lit(2.0) * dt;
    Ok((p..p + m).map(|j| (values[j + 1] - values[j - 1]) / denom).collect())
}

fn extended_times<T: Scalar>(t0: T, dt: T, m: usize, p: usize) -> Vec<T> {
    (0..m + 2 * p)
        .map(|j| t0 + (T::from_usize_lossy(j) - T::from_usize_lossy(p)) * dt)
        .collect()
}

/// Central differences with step `dt / r` on `curve` at `times`.
fn curve_quotients<T: Scalar>(curve: &SmoothingCurve<T>, times: &[T], dt: T, r: usize) -> Vec<T> {
    let h = dt / T::from_usize_lossy(r);
    let denom = T::lit(2.0) * h;
    times.iter().map(|&t| (curve.eval(t + h) - curve.eval(t - h)) / denom).collect()
}

/// Derivative targets for one component of one trajectory.
fn component_targets<T: Scalar>(
    times: &[T],
    values: &[T],
    dt: T,
    noise_std: T,
    cfg: &DataConfig,
) -> Result<Vec<T>> {
    let p = cfg.extension;
    let r = cfg.quotient_refinement;
    let ext_t = extended_times(times[0], dt, times.len(), p);
    let extended = if noise_std == T::zero() {
        odd_extend(values, p)?
    } else {
        match cfg.order {
            SmoothingOrder::SmoothThenExtend => {
                let curve = fit_to_noise_level(times, values, noise_std)?;
                let smooth: Vec<T> = times.iter().map(|&t| curve.eval(t)).collect();
                odd_extend(&smooth, p)?
            }
            SmoothingOrder::ExtendThenSmooth => {
                let ext = odd_extend(values, p)?;
                let curve = fit_to_noise_level(&ext_t, &ext, noise_std)?;
                if r > 1 {
                    return Ok(curve_quotients(&curve, times, dt, r));
                }
                ext_t.iter().map(|&t| curve.eval(t)).collect()
            }
        }
    };
    if r == 1 {
        return estimate_derivatives(&extended, p, dt);
    }
    let curve = fit_smoothing_curve(&ext_t, &extended, T::zero())?;
    Ok(curve_quotients(&curve, times, dt, r))
}

/// Runs the full pipeline for one system.
pub fn build_dataset<T: Scalar>(system: &RhsSystem<T>, cfg: &DataConfig) -> Result<Dataset<T>> {
    system.validate()?;
    cfg.noise.validate()?;
    if cfg.extension == 0 {
        return Err(Error::input("extension depth must be at least 1"));
    }
    if cfg.quotient_refinement == 0 {
        return Err(Error::input("quotient refinement must be at least 1"));
    }
    let d = system.dim();
    let m = system.n_times();

    let ics = sample_initial_conditions(system, cfg.ic_seed)?;
    let clean: Vec<Trajectory<T>> = ics
        .par_iter()
        .map(|x0| system.integrate(x0))
        .collect::<Result<_>>()?;
    let noisy = add_noise(&clean, &cfg.noise)?;

    let noise_std: Vec<T> = if cfg.noise.level > 0.0 {
        (0..d)
            .map(|k| Ok(T::lit(cfg.noise.std_dev()) * mean_range(&clean, k)?))
            .collect::<Result<_>>()?
    } else {
        vec![T::zero(); d]
    };

    let per_traj: Vec<Vec<SamplePair<T>>> = noisy
        .par_iter()
        .enumerate()
        .map(|(i, tr)| {
            let targets = (0..d)
                .map(|k| component_targets(&tr.times, &tr.component(k), system.dt, noise_std[k], cfg))
                .collect::<Result<Vec<_>>>()?;
            Ok((0..m)
                .map(|j| {
                    let mut input = Vec::with_capacity(1 + d);
                    input.push(tr.times[j]);
                    input.extend_from_slice(tr.states.row(j));
                    SamplePair {
                        input,
                        target: targets.iter().map(|c| c[j]).collect(),
                        origin: (i, j),
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut pairs: Vec<SamplePair<T>> = per_traj.into_iter().flatten().collect();
    if pairs.iter().any(|p| p.input.iter().chain(&p.target).any(|v| !v.is_finite())) {
        return Err(Error::input("non-finite sample produced by the pipeline"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.split_seed);
    pairs.shuffle(&mut rng);
    let n_train = (TRAIN_FRACTION * pairs.len() as f64).round() as usize;
    let test = pairs.split_off(n_train);

    Ok(Dataset {
        train: pairs,
        test,
        dim: d,
        system_id: system.id.clone(),
        config: *cfg,
        n_traj: system.n_ic,
        n_times: m,
        dt: system.dt,
    })
}

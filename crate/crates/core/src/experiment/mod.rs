//! Config-driven experiment runner.
//!
//! A run is described by a flat TOML file of optional keys. Missing keys take
//! the defaults of the chosen system, and the fully resolved configuration is
//! echoed next to the outputs so a run can be reproduced from it alone.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{DataConfig, NoiseSpec, SmoothingOrder, DEFAULT_EXTENSION, DEFAULT_QUOTIENT_REFINEMENT};
use crate::dynamics::{lookup, RhsSystem, DEFAULT_SUBSTEPS};
use crate::eval::{GridSpec, RecoveryMetric};
use crate::lipreg::{REPORT_PROBE_SIZE, STEP_PROBE_SIZE};
use crate::net::DEFAULT_LRELU_EPS;
use crate::train::{Optimizer, TrainConfig, TrainSeeds, DEFAULT_ALPHAS};
use crate::{Error, Result};

pub use commands::{generate, recover, report, sweep, GenerateSummary, RecoverSummary, SweepSummary};

/// Floor added to `|f|` by the pointwise-relative recovery metric.
pub const POINTWISE_FLOOR: f64 = 1e-8;

/// Every key accepted in a config file. All keys are optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: Option<String>,
    pub noise: Option<f64>,
    pub noise_param_is_variance: Option<bool>,
    pub out_dir: Option<PathBuf>,
    pub alphas: Option<Vec<f64>>,
    /// Master seed; individual seeds default to `seed + offset`.
    pub seed: Option<u64>,
    pub ic_seed: Option<u64>,
    pub noise_seed: Option<u64>,
    pub split_seed: Option<u64>,
    pub init_seed: Option<u64>,
    pub shuffle_seed: Option<u64>,
    pub probe_seed: Option<u64>,
    pub n_ic: Option<usize>,
    pub substeps: Option<usize>,
    pub extension: Option<usize>,
    pub smoothing_order: Option<SmoothingOrder>,
    pub quotient_refinement: Option<usize>,
    pub layers: Option<usize>,
    pub width: Option<usize>,
    pub lrelu_eps: Option<f64>,
    pub batch_size: Option<usize>,
    pub lr0: Option<f64>,
    pub decay_factor: Option<f64>,
    pub decay_period: Option<usize>,
    pub max_epochs: Option<usize>,
    pub baseline_epochs: Option<usize>,
    pub probe_n: Option<usize>,
    pub step_probe_n: Option<usize>,
    pub resample_probes: Option<bool>,
    pub optimizer: Option<Optimizer>,
    pub momentum: Option<f64>,
    pub recovery: Option<bool>,
    pub grid_nt: Option<usize>,
    pub grid_nx: Option<usize>,
    pub pointwise_relative: Option<bool>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Keys set in `other` win.
    pub fn merge(self, other: ConfigFile) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            system, noise, noise_param_is_variance, out_dir, alphas, seed, ic_seed, noise_seed, split_seed,
            init_seed, shuffle_seed, probe_seed, n_ic, substeps, extension, smoothing_order, quotient_refinement, layers, width,
            lrelu_eps, batch_size, lr0, decay_factor, decay_period, max_epochs, baseline_epochs, probe_n,
            step_probe_n, resample_probes, optimizer, momentum, recovery, grid_nt, grid_nx, pointwise_relative
        )
    }
}

/// Architecture and schedule reported for each system.
fn system_train_defaults(id: &str) -> (usize, usize, usize, usize) {
    // (layers, width, batch, decay period)
    match id {
        "explog" => (8, 30, 100, 5),
        "lotka_volterra" => (10, 50, 200, 3),
        "pendulum" => (10, 60, 100, 3),
        _ => (8, 30, 50, 7),
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: String,
    pub out_dir: PathBuf,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub data: DataConfig,
    pub n_ic: usize,
    pub substeps: usize,
    pub train: TrainConfig,
    pub recovery: bool,
    pub grid: GridSpec,
    pub pointwise_relative: bool,
}

impl ExperimentConfig {
    pub fn resolve(file: ConfigFile) -> Result<Self> {
        let system = file.system.clone().unwrap_or_else(|| "xcosx".to_owned());
        let sys: RhsSystem<f64> = lookup(&system)?;
        let seed = file.seed.unwrap_or(0);
        let (layers, width, batch, period) = system_train_defaults(&system);
        let noise = file.noise.unwrap_or(0.0);
        if !(noise >= 0.0) {
            return Err(Error::Config(format!("noise must be >= 0, got {noise}")));
        }

        let cfg = Self {
            out_dir: file.out_dir.unwrap_or_else(|| PathBuf::from("out").join(&system)),
            alphas: file.alphas.unwrap_or_else(|| DEFAULT_ALPHAS.to_vec()),
            seed,
            data: DataConfig {
                noise: NoiseSpec {
                    level: noise,
                    seed: file.noise_seed.unwrap_or(seed.wrapping_add(1)),
                    level_is_variance: file.noise_param_is_variance.unwrap_or(false),
                },
                ic_seed: file.ic_seed.unwrap_or(seed),
                split_seed: file.split_seed.unwrap_or(seed.wrapping_add(2)),
                extension: file.extension.unwrap_or(DEFAULT_EXTENSION),
                order: file.smoothing_order.unwrap_or_default(),
                quotient_refinement: file.quotient_refinement.unwrap_or(DEFAULT_QUOTIENT_REFINEMENT),
            },
            n_ic: file.n_ic.unwrap_or(sys.n_ic),
            substeps: file.substeps.unwrap_or(DEFAULT_SUBSTEPS),
            train: TrainConfig {
                alpha: 0.0,
                layers: file.layers.unwrap_or(layers),
                width: file.width.unwrap_or(width),
                lrelu_eps: file.lrelu_eps.unwrap_or(DEFAULT_LRELU_EPS),
                batch_size: file.batch_size.unwrap_or(batch),
                lr0: file.lr0.unwrap_or(1e-2),
                decay_factor: file.decay_factor.unwrap_or(0.1),
                decay_period: file.decay_period.unwrap_or(period),
                max_epochs: file.max_epochs.unwrap_or(TrainConfig::default().max_epochs),
                baseline_epochs: file.baseline_epochs.unwrap_or(10),
                probe_n: file.probe_n.unwrap_or(REPORT_PROBE_SIZE),
                step_probe_n: file.step_probe_n.unwrap_or(STEP_PROBE_SIZE),
                resample_probes: file.resample_probes.unwrap_or(false),
                optimizer: file.optimizer.unwrap_or_default(),
                momentum: file.momentum.unwrap_or(0.0),
                seeds: TrainSeeds {
                    init: file.init_seed.unwrap_or(seed.wrapping_add(3)),
                    shuffle: file.shuffle_seed.unwrap_or(seed.wrapping_add(4)),
                    probe: file.probe_seed.unwrap_or(seed.wrapping_add(5)),
                },
            },
            recovery: file.recovery.unwrap_or(false),
            grid: GridSpec {
                nt: file.grid_nt.unwrap_or(100),
                nx: file.grid_nx.unwrap_or(100),
            },
            pointwise_relative: file.pointwise_relative.unwrap_or(false),
            system,
        };
        cfg.train.validate()?;
        if cfg.alphas.is_empty() || cfg.alphas.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config("alphas must be a non-empty list of weights >= 0".into()));
        }
        if cfg.n_ic == 0 || cfg.substeps == 0 || cfg.grid.nt == 0 || cfg.grid.nx == 0 {
            return Err(Error::Config("n_ic, substeps and grid sizes must be >= 1".into()));
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::resolve(ConfigFile::parse(text)?)
    }

    /// Every key set explicitly.
    pub fn to_file(&self) -> ConfigFile {
        let t = &self.train;
        ConfigFile {
            system: Some(self.system.clone()),
            noise: Some(self.data.noise.level),
            noise_param_is_variance: Some(self.data.noise.level_is_variance),
            out_dir: Some(self.out_dir.clone()),
            alphas: Some(self.alphas.clone()),
            seed: Some(self.seed),
            ic_seed: Some(self.data.ic_seed),
            noise_seed: Some(self.data.noise.seed),
            split_seed: Some(self.data.split_seed),
            init_seed: Some(t.seeds.init),
            shuffle_seed: Some(t.seeds.shuffle),
            probe_seed: Some(t.seeds.probe),
            n_ic: Some(self.n_ic),
            substeps: Some(self.substeps),
            extension: Some(self.data.extension),
            smoothing_order: Some(self.data.order),
            quotient_refinement: Some(self.data.quotient_refinement),
            layers: Some(t.layers),
            width: Some(t.width),
            lrelu_eps: Some(t.lrelu_eps),
            batch_size: Some(t.batch_size),
            lr0: Some(t.lr0),
            decay_factor: Some(t.decay_factor),
            decay_period: Some(t.decay_period),
            max_epochs: Some(t.max_epochs),
            baseline_epochs: Some(t.baseline_epochs),
            probe_n: Some(t.probe_n),
            step_probe_n: Some(t.step_probe_n),
            resample_probes: Some(t.resample_probes),
            optimizer: Some(t.optimizer),
            momentum: Some(t.momentum),
            recovery: Some(self.recovery),
            grid_nt: Some(self.grid.nt),
            grid_nx: Some(self.grid.nx),
            pointwise_relative: Some(self.pointwise_relative),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("config serializes")
    }

    /// The configured system with `n_ic` and `substeps` applied.
    pub fn rhs_system(&self) -> Result<RhsSystem<f64>> {
        let mut sys: RhsSystem<f64> = lookup(&self.system)?;
        sys.n_ic = self.n_ic;
        sys.substeps = self.substeps;
        Ok(sys)
    }

    pub fn recovery_metric(&self) -> RecoveryMetric {
        if self.pointwise_relative {
            RecoveryMetric::PointwiseRelative { floor: POINTWISE_FLOOR }
        } else {
            RecoveryMetric::RatioOfMeans
        }
    }
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, SmoothingOrder};
use crate::{Error, Result, Scalar};

/// Sidecar describing how a dataset CSV was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub system: String,
    pub dim: usize,
    pub noise_level: f64,
    pub noise_level_is_variance: bool,
    pub noise_seed: u64,
    pub ic_seed: u64,
    pub split_seed: u64,
    pub dt: f64,
    pub n_traj: usize,
    pub n_times: usize,
    pub extension: usize,
    pub smoothing_order: SmoothingOrder,
    pub n_train: usize,
    pub n_test: usize,
}

impl DatasetMetadata {
    pub fn of<T: Scalar>(ds: &Dataset<T>) -> Self {
        Self {
            system: ds.system_id.clone(),
            dim: ds.dim,
            noise_level: ds.config.noise.level,
            noise_level_is_variance: ds.config.noise.level_is_variance,
            noise_seed: ds.config.noise.seed,
            ic_seed: ds.config.ic_seed,
            split_seed: ds.config.split_seed,
            dt: ds.dt.as_f64(),
            n_traj: ds.n_traj,
            n_times: ds.n_times,
            extension: ds.config.extension,
            smoothing_order: ds.config.order,
            n_train: ds.train.len(),
            n_test: ds.test.len(),
        }
    }
}

/// Renders `t,x1..xd,y1..yd,split`; train rows first, each set in stored order.
pub fn dataset_csv<T: Scalar>(ds: &Dataset<T>) -> String {
    let d = ds.dim;
    let yd = ds.target_dim();
    let mut out = String::from("t");
    for k in 1..=d {
        write!(out, ",x{k}").unwrap();
    }
    for k in 1..=yd {
        write!(out, ",y{k}").unwrap();
    }
    out.push_str(",split\n");
    for (label, pairs) in [("train", &ds.train), ("test", &ds.test)] {
        for p in pairs.iter() {
            for (n, v) in p.input.iter().chain(&p.target).enumerate() {
                if n > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            writeln!(out, ",{label}").unwrap();
        }
    }
    out
}

pub fn write_dataset_csv<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    fs::write(path, dataset_csv(ds)).map_err(|e| Error::io(path, e))
}

pub fn write_metadata(meta: &DatasetMetadata, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

//! Test error, generalization gap, Hoeffding bound and recovery error.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{inputs_matrix, targets_matrix, Dataset};
use crate::dynamics::RhsSystem;
use crate::linalg::{dist2, norm2, Matrix};
use crate::lipreg::{estimate_lipschitz, sample_probe_set};
use crate::net::MlpParams;
use crate::train::{mse, relative_mse, SweepRun};
use crate::{Error, Result, Scalar};

/// Test MSE minus train MSE, both absolute.
pub fn generalization_gap(train_mse_abs: f64, test_mse_abs: f64) -> f64 {
    test_mse_abs - train_mse_abs
}

/// Hoeffding tail bound `2 exp(-2 eps^2 m)`.
pub fn hoeffding_bound(m: usize, eps: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::input("Hoeffding bound needs at least one test sample"));
    }
    if !(eps > 0.0) {
        return Err(Error::input("deviation must be positive"));
    }
    Ok(2.0 * (-2.0 * eps * eps * m as f64).exp())
}

/// Per-row `|N(x) - reference|`, in input order.
pub fn error_field<T: Scalar>(params: &MlpParams<T>, inputs: &Matrix<T>, references: &Matrix<T>) -> Result<Vec<T>> {
    let out = params.predict(inputs)?;
    if out.shape() != references.shape() {
        return Err(Error::input(format!(
            "references have shape {:?}, network output {:?}",
            references.shape(),
            out.shape()
        )));
    }
    Ok(out.iter_rows().zip(references.iter_rows()).map(|(a, b)| dist2(a, b)).collect())
}

/// How the recovery error normalizes the pointwise error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMetric {
    /// `100 * mean |N - f| / mean |f|`.
    #[default]
    RatioOfMeans,
    /// `100 * mean (|N - f| / (|f| + floor))`.
    PointwiseRelative { floor: f64 },
}

/// Regular grid over `[t_start, t_end] x recovery_box`, `nt` times and `nx`
/// points per spatial dimension, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nt: usize,
    pub nx: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nt: 100, nx: 100 }
    }
}

fn linspace<T: Scalar>(a: T, b: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![a];
    }
    let last = T::from_usize_lossy(n - 1);
    (0..n).map(|i| a + (b - a) * T::from_usize_lossy(i) / last).collect()
}

/// Grid points as rows `(t, x1, ..., xd)`; time varies slowest.
pub fn grid_points<T: Scalar>(system: &RhsSystem<T>, grid: GridSpec) -> Result<Matrix<T>> {
    if grid.nt == 0 || grid.nx == 0 {
        return Err(Error::input("grid needs at least one point per axis"));
    }
    let d = system.dim();
    let ts = linspace(system.t_start, system.t_end, grid.nt);
    let axes: Vec<Vec<T>> = system.recovery_box.iter().map(|&(a, b)| linspace(a, b, grid.nx)).collect();
    let per_t = grid.nx.pow(d as u32);
    let mut m = Matrix::zeros(grid.nt * per_t, 1 + d);
    for (it, &t) in ts.iter().enumerate() {
        for s in 0..per_t {
            let row = m.row_mut(it * per_t + s);
            row[0] = t;
            let mut rem = s;
            for k in (0..d).rev() {
                row[1 + k] = axes[k][rem % grid.nx];
                rem /= grid.nx;
            }
        }
    }
    Ok(m)
}

/// Network and closed-form values on a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEval<T> {
    pub points: Matrix<T>,
    pub net: Matrix<T>,
    pub truth: Matrix<T>,
}

impl<T: Scalar> GridEval<T> {
    /// Evaluates `params` against `f` (or its component `k`) at `points`.
    pub fn at_points(
        params: &MlpParams<T>,
        system: &RhsSystem<T>,
        component: Option<usize>,
        points: Matrix<T>,
    ) -> Result<Self> {
        let d = system.dim();
        if points.cols() != 1 + d {
            return Err(Error::input("grid points must have 1 + d columns"));
        }
        let out_dim = match component {
            Some(k) if k < d => 1,
            Some(k) => return Err(Error::input(format!("component {k} out of range"))),
            None => d,
        };
        if params.output_dim() != out_dim {
            return Err(Error::input("network output does not match the compared components"));
        }
        let truth_rows = points
            .iter_rows()
            .map(|r| {
                let f = system.eval_rhs(r[0], &r[1..])?;
                Ok(match component {
                    Some(k) => vec![f[k]],
                    None => f,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let truth = Matrix::from_rows(&truth_rows)?;

        // chunked so each chunk stays a single contiguous batch
        const CHUNK: usize = 4096;
        let chunks: Vec<Matrix<T>> = (0..points.rows())
            .step_by(CHUNK)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&s| {
                let idx: Vec<usize> = (s..(s + CHUNK).min(points.rows())).collect();
                params.predict(&points.select_rows(&idx))
            })
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(points.rows() * out_dim);
        for c in chunks {
            data.extend(c.into_vec());
        }
        let net = Matrix::from_vec(points.rows(), out_dim, data)?;
        Ok(Self { points, net, truth })
    }

    pub fn on_grid(
        params: &MlpParams<T>,
        system: &RhsSystem<T>,
        component: Option<usize>,
        grid: GridSpec,
    ) -> Result<Self> {
        Self::at_points(params, system, component, grid_points(system, grid)?)
    }

    pub fn abs_errors(&self) -> Vec<T> {
        self.net.iter_rows().zip(self.truth.iter_rows()).map(|(a, b)| dist2(a, b)).collect()
    }

    /// Recovery error in percent.
    pub fn recovery_error(&self, metric: RecoveryMetric) -> Result<T> {
        let n = self.points.rows();
        if n == 0 {
            return Err(Error::input("empty grid"));
        }
        let errs = self.abs_errors();
        let refs: Vec<T> = self.truth.iter_rows().map(norm2).collect();
        let hundred = T::lit(100.0);
        match metric {
            RecoveryMetric::RatioOfMeans => {
                let den: T = refs.iter().copied().sum();
                if den == T::zero() {
                    return Err(Error::Normalization);
                }
                Ok(hundred * errs.iter().copied().sum::<T>() / den)
            }
            RecoveryMetric::PointwiseRelative { floor } => {
                let floor = T::lit(floor);
                let s: T = errs.iter().zip(&refs).map(|(&e, &r)| e / (r + floor)).sum();
                Ok(hundred * s / T::from_usize_lossy(n))
            }
        }
    }

    /// `t,x1..xd,net[k],truth[k],abs_err` with one row per point.
    pub fn to_csv(&self) -> String {
        let d = self.points.cols() - 1;
        let c = self.net.cols();
        let mut out = String::from("t");
        for k in 1..=d {
            write!(out, ",x{k}").unwrap();
        }
        for k in 1..=c {
            let suffix = if c == 1 { String::new() } else { k.to_string() };
            write!(out, ",net{suffix},truth{suffix}").unwrap();
        }
        out.push_str(",abs_err\n");
        for (i, e) in self.abs_errors().into_iter().enumerate() {
            for (j, v) in self.points.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            for k in 0..c {
                write!(out, ",{},{}", self.net.get(i, k), self.truth.get(i, k)).unwrap();
            }
            writeln!(out, ",{e}").unwrap();
        }
        out
    }
}

/// Convenience wrapper: recovery error on the default-style regular grid.
pub fn recovery_error<T: Scalar>(
    params: &MlpParams<T>,
    system: &RhsSystem<T>,
    component: Option<usize>,
    grid: GridSpec,
    metric: RecoveryMetric,
) -> Result<T> {
    GridEval::on_grid(params, system, component, grid)?.recovery_error(metric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub alpha: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub train_rel_mse_pct: f64,
    pub test_rel_mse_pct: f64,
    pub generalization_gap: f64,
    pub lip_estimate: f64,
    pub flagged: bool,
    pub recovery_error_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub system: String,
    pub noise_level: f64,
    /// Target component for per-component networks.
    pub component: Option<usize>,
    pub rows: Vec<ReportRow>,
    /// Row with the smallest test MSE; ties go to the smaller gap.
    pub best: usize,
}

/// Report assembly knobs.
#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    pub probe_n: usize,
    pub probe_seed: u64,
    pub component: Option<usize>,
}

/// Index of the smallest test MSE, ties broken by the smaller gap.
pub fn best_row(rows: &[ReportRow]) -> Option<usize> {
    (0..rows.len()).min_by(|&a, &b| {
        let (ra, rb) = (&rows[a], &rows[b]);
        ra.test_mse
            .total_cmp(&rb.test_mse)
            .then(ra.generalization_gap.total_cmp(&rb.generalization_gap))
    })
}

/// Builds one report from a sweep over networks trained on `dataset`.
pub fn build_report<T: Scalar>(
    runs: &[SweepRun<T>],
    dataset: &Dataset<T>,
    opts: ReportOptions,
) -> Result<ExperimentReport> {
    if runs.is_empty() {
        return Err(Error::input("cannot report an empty sweep"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.probe_seed);
    let probes = sample_probe_set(&dataset.train, opts.probe_n, opts.probe_seed, &mut rng)?;
    let rows = runs
        .iter()
        .map(|r| {
            let train_mse = mse(&r.params, &dataset.train)?.as_f64();
            let test_mse = mse(&r.params, &dataset.test)?.as_f64();
            Ok(ReportRow {
                alpha: r.alpha,
                train_mse,
                test_mse,
                train_rel_mse_pct: relative_mse(&r.params, &dataset.train)?.as_f64(),
                test_rel_mse_pct: relative_mse(&r.params, &dataset.test)?.as_f64(),
                generalization_gap: generalization_gap(train_mse, test_mse),
                lip_estimate: estimate_lipschitz(&r.params, &probes)?.value.as_f64(),
                flagged: r.flagged(),
                recovery_error_pct: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = best_row(&rows).expect("non-empty");
    Ok(ExperimentReport {
        system: dataset.system_id.clone(),
        noise_level: dataset.config.noise.level,
        component: opts.component,
        rows,
        best,
    })
}

impl ExperimentReport {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }

    /// Attaches recovery errors, one per row in row order.
    pub fn attach_recovery(&mut self, errors: &[f64]) -> Result<()> {
        if errors.len() != self.rows.len() {
            return Err(Error::input("one recovery error per row expected"));
        }
        for (r, &e) in self.rows.iter_mut().zip(errors) {
            r.recovery_error_pct = Some(e);
        }
        Ok(())
    }

    /// Row with the smallest recovery error, if recovery errors are attached.
    pub fn best_recovery(&self) -> Option<usize> {
        let errs: Option<Vec<f64>> = self.rows.iter().map(|r| r.recovery_error_pct).collect();
        let errs = errs?;
        (0..errs.len()).min_by(|&a, &b| errs[a].total_cmp(&errs[b]))
    }

    /// Table columns: regularization weight, baseline train MSE (%),
    /// generalization gap, test MSE (%), then `lip_estimate`, `flagged`, the
    /// optional recovery error (%) and the best-row marker.
    pub fn to_csv(&self) -> String {
        let with_rec = self.rows.iter().any(|r| r.recovery_error_pct.is_some());
        let mut out = String::from("alpha,baseline_train_mse_pct,generalization_gap,test_mse_pct,lip_estimate,flagged");
        if with_rec {
            out.push_str(",recovery_error_pct");
        }
        out.push_str(",best\n");
        for (i, r) in self.rows.iter().enumerate() {
            write!(
                out,
                "{},{},{},{},{},{}",
                r.alpha, r.train_rel_mse_pct, r.generalization_gap, r.test_rel_mse_pct, r.lip_estimate, r.flagged
            )
            .unwrap();
            if with_rec {
                let v = r.recovery_error_pct.map(|v| v.to_string()).unwrap_or_default();
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{}", i == self.best).unwrap();
        }
        out
    }

    /// Fixed-width table for terminal output.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let comp = self.component.map(|k| format!(" component {}", k + 1)).unwrap_or_default();
        writeln!(out, "{}{} (noise {}%)", self.system, comp, self.noise_level * 100.0).unwrap();
        writeln!(out, "{:>8} {:>12} {:>12} {:>12} {:>10} {:>10}", "alpha", "train MSE", "gap", "test MSE", "Lip", "recovery").unwrap();
        for (i, r) in self.rows.iter().enumerate() {
            let rec = r.recovery_error_pct.map(|v| format!("{v:.2}%")).unwrap_or_else(|| "-".into());
            writeln!(
                out,
                "{:>8} {:>11.4}% {:>12.2e} {:>11.4}% {:>10.3} {:>10}{}{}",
                r.alpha,
                r.train_rel_mse_pct,
                r.generalization_gap,
                r.test_rel_mse_pct,
                r.lip_estimate,
                rec,
                if i == self.best { "  *" } else { "" },
                if r.flagged { "  (unmatched)" } else { "" }
            )
            .unwrap();
        }
        out
    }
}

/// Error field on the test pairs against their targets.
pub fn test_error_field<T: Scalar>(params: &MlpParams<T>, dataset: &Dataset<T>) -> Result<Vec<T>> {
    error_field(params, &inputs_matrix(&dataset.test), &targets_matrix(&dataset.test))
}

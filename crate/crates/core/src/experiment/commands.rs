use std::fs;
use std::path::{Path, PathBuf};

use super::ExperimentConfig;
use crate::datagen::{build_dataset, write_dataset_csv, write_metadata, Dataset, DatasetMetadata};
use crate::eval::{build_report, ExperimentReport, GridEval, ReportOptions};
use crate::net::{read_checkpoint, write_checkpoint, MlpParams};
use crate::train::run_alpha_sweep;
use crate::{Error, Result};

pub const CONFIG_ECHO: &str = "config.toml";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare(cfg: &ExperimentConfig) -> Result<Dataset<f64>> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    write(&cfg.out_dir.join(CONFIG_ECHO), &cfg.to_toml())?;
    build_dataset(&cfg.rhs_system()?, &cfg.data)
}

/// Components to fit; `None` means one network for the whole state.
fn components(ds: &Dataset<f64>) -> Vec<Option<usize>> {
    if ds.dim == 1 {
        vec![None]
    } else {
        (0..ds.dim).map(Some).collect()
    }
}

fn tag(component: Option<usize>) -> String {
    format!("c{}", component.map_or(1, |k| k + 1))
}

fn run_name(cfg: &ExperimentConfig, prefix: &str, component: Option<usize>, alpha: f64, ext: &str) -> PathBuf {
    cfg.out_dir.join(format!("{prefix}_{}_a{alpha}.{ext}", tag(component)))
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub n_train: usize,
    pub n_test: usize,
    pub csv: PathBuf,
}

/// Writes `dataset.csv` and `dataset.json`.
pub fn generate(cfg: &ExperimentConfig) -> Result<GenerateSummary> {
    let ds = prepare(cfg)?;
    let csv = cfg.out_dir.join("dataset.csv");
    write_dataset_csv(&ds, &csv)?;
    write_metadata(&DatasetMetadata::of(&ds), &cfg.out_dir.join("dataset.json"))?;
    Ok(GenerateSummary {
        n_train: ds.train.len(),
        n_test: ds.test.len(),
        csv,
    })
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub reports: Vec<ExperimentReport>,
}

impl SweepSummary {
    /// Some non-baseline weight never matched the baseline train MSE.
    pub fn flagged(&self) -> bool {
        self.reports.iter().any(ExperimentReport::any_flagged)
    }
}

/// Trains the full weight grid for every component and writes training
/// records, checkpoints and `report_c{k}.{csv,json}`.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepSummary> {
    let ds = prepare(cfg)?;
    let system = cfg.rhs_system()?;
    let mut reports = Vec::new();
    for comp in components(&ds) {
        let sub = match comp {
            Some(k) => ds.component(k)?,
            None => ds.clone(),
        };
        log::info!("{} {}: training {} weights", cfg.system, tag(comp), cfg.alphas.len());
        let runs = run_alpha_sweep(&sub, &cfg.train, &cfg.alphas)?;
        for r in &runs {
            write(&run_name(cfg, "train", comp, r.alpha, "csv"), &r.record.to_csv())?;
            write_checkpoint(&r.params, &run_name(cfg, "net", comp, r.alpha, "ckpt"))?;
        }
        let opts = ReportOptions {
            probe_n: cfg.train.probe_n,
            probe_seed: cfg.train.seeds.probe,
            component: comp,
        };
        let mut report = build_report(&runs, &sub, opts)?;
        if cfg.recovery {
            let errs = runs
                .iter()
                .map(|r| GridEval::on_grid(&r.params, &system, comp, cfg.grid)?.recovery_error(cfg.recovery_metric()))
                .collect::<Result<Vec<f64>>>()?;
            report.attach_recovery(&errs)?;
        }
        write_report(cfg, &report)?;
        reports.push(report);
    }
    Ok(SweepSummary { reports })
}

fn write_report(cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<()> {
    let base = cfg.out_dir.join(format!("report_{}", tag(report.component)));
    write(&base.with_extension("csv"), &report.to_csv())?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write(&base.with_extension("json"), &json)
}

fn read_report(cfg: &ExperimentConfig, component: Option<usize>) -> Result<ExperimentReport> {
    let path = cfg.out_dir.join(format!("report_{}.json", tag(component)));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct RecoverSummary {
    pub component: Option<usize>,
    pub alphas: Vec<f64>,
    pub errors_pct: Vec<f64>,
}

/// Evaluates saved networks on the recovery grid; writes one grid CSV per
/// weight, `recovery_c{k}.csv`, and updates the stored reports.
pub fn recover(cfg: &ExperimentConfig) -> Result<Vec<RecoverSummary>> {
    let system = cfg.rhs_system()?;
    let comps: Vec<Option<usize>> = if system.dim() == 1 { vec![None] } else { (0..system.dim()).map(Some).collect() };
    let mut out = Vec::new();
    for comp in comps {
        let mut errors = Vec::with_capacity(cfg.alphas.len());
        let mut csv = String::from("alpha,recovery_error_pct\n");
        for &alpha in &cfg.alphas {
            let params: MlpParams<f64> = read_checkpoint(&run_name(cfg, "net", comp, alpha, "ckpt"))?;
            let grid = GridEval::on_grid(&params, &system, comp, cfg.grid)?;
            write(&run_name(cfg, "grid", comp, alpha, "csv"), &grid.to_csv())?;
            let e = grid.recovery_error(cfg.recovery_metric())?;
            csv.push_str(&format!("{alpha},{e}\n"));
            errors.push(e);
        }
        write(&cfg.out_dir.join(format!("recovery_{}.csv", tag(comp))), &csv)?;
        if let Ok(mut report) = read_report(cfg, comp) {
            if report.rows.iter().map(|r| r.alpha).eq(cfg.alphas.iter().copied()) {
                report.attach_recovery(&errors)?;
                write_report(cfg, &report)?;
            }
        }
        out.push(RecoverSummary {
            component: comp,
            alphas: cfg.alphas.clone(),
            errors_pct: errors,
        });
    }
    Ok(out)
}

/// Loads the stored reports of a finished sweep.
pub fn report(cfg: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    let system = cfg.rhs_system()?;
    if system.dim() == 1 {
        Ok(vec![read_report(cfg, None)?])
    } else {
        (0..system.dim()).map(|k| read_report(cfg, Some(k))).collect()
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use lipode::experiment::{self, ConfigFile, ExperimentConfig};

fn small(out: &Path, extra: &str) -> ExperimentConfig {
    let text = format!(
        "out_dir = {:?}\nn_ic = 20\nlayers = 3\nwidth = 10\nbatch_size = 20\nmax_epochs = 20\nalphas = [0.0, 0.01]\ngrid_nt = 10\ngrid_nx = 10\n{extra}",
        out.to_str().unwrap()
    );
    ExperimentConfig::parse(&text).unwrap()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn full_cycle_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), "");
    let g = experiment::generate(&cfg).unwrap();
    assert_eq!(g.n_train + g.n_test, 20 * 7);
    let csv = fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    assert!(csv.starts_with("t,x1,y1,split\n"));
    assert_eq!(csv.lines().count(), 141);

    let s = experiment::sweep(&cfg).unwrap();
    assert_eq!(s.reports.len(), 1);
    for name in ["report_c1.csv", "report_c1.json", "train_c1_a0.csv", "train_c1_a0.01.csv", "net_c1_a0.ckpt", "config.toml"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let rec = experiment::recover(&cfg).unwrap();
    assert_eq!(rec[0].errors_pct.len(), 2);
    let grid = fs::read_to_string(dir.path().join("grid_c1_a0.01.csv")).unwrap();
    assert_eq!(grid.lines().count(), 101);
    assert!(grid.starts_with("t,x1,net,truth,abs_err\n"));

    let reports = experiment::report(&cfg).unwrap();
    assert!(reports[0].rows.iter().all(|r| r.recovery_error_pct.is_some()));
    let table = fs::read_to_string(dir.path().join("report_c1.csv")).unwrap();
    assert!(table.starts_with("alpha,baseline_train_mse_pct,generalization_gap,test_mse_pct,lip_estimate,flagged,recovery_error_pct,best\n"));
}

#[test]
fn two_dimensional_systems_train_one_network_per_component() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), "system = \"lotka_volterra\"\nrecovery = true\n");
    let s = experiment::sweep(&cfg).unwrap();
    assert_eq!(s.reports.len(), 2);
    assert_eq!(s.reports[1].component, Some(1));
    assert!(dir.path().join("report_c2.csv").exists());
    let net: lipode::Mlp = lipode::net::read_checkpoint(&dir.path().join("net_c2_a0.ckpt")).unwrap();
    assert_eq!((net.input_dim(), net.output_dim()), (3, 1));
    assert!(s.reports[0].rows.iter().all(|r| r.recovery_error_pct.is_some()));
}

#[test]
fn end_to_end_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let cfg = small(d, "noise = 0.01\nseed = 3\n");
        experiment::generate(&cfg).unwrap();
        experiment::sweep(&cfg).unwrap();
        experiment::recover(&cfg).unwrap();
    }
    let (fa, fb) = (read_dir(a.path()), read_dir(b.path()));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        if name == "config.toml" {
            continue; // records its own output directory
        }
        assert!(bytes == &fb[name], "{name} differs");
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), "system = \"explog\"\n");
    experiment::generate(&cfg).unwrap();
    let echoed = ConfigFile::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(ExperimentConfig::resolve(echoed).unwrap(), cfg);
}

#[test]
fn recover_needs_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), "");
    assert!(matches!(experiment::recover(&cfg), Err(lipode::Error::Io { .. })));
    assert!(experiment::report(&cfg).is_err());
}

//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use lipode::linalg::Matrix;
use lipode::net::MlpParams;
use lipode::train::mse;
use lipode::datagen::SamplePair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

/// Central finite-difference gradient of `f` over the flat parameters.
pub fn fd_gradient(params: &MlpParams<f64>, f: impl Fn(&MlpParams<f64>) -> f64) -> Vec<f64> {
    let base = params.to_flat();
    let mut probe = params.clone();
    (0..base.len())
        .map(|i| {
            let mut v = base.clone();
            v[i] = base[i] + FD_STEP;
            probe.set_flat(&v).unwrap();
            let up = f(&probe);
            v[i] = base[i] - FD_STEP;
            probe.set_flat(&v).unwrap();
            let down = f(&probe);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Random network with 1 to 3 affine layers of at most 8 units.
pub fn random_net(rng: &mut ChaCha8Rng) -> MlpParams<f64> {
    let n_layers = rng.random_range(1..=3);
    let sizes: Vec<usize> = (0..=n_layers).map(|_| rng.random_range(1..=8)).collect();
    let mut p = MlpParams::<f64>::init(&sizes, rng.random()).unwrap();
    // non-zero biases so every term of the gradient is exercised
    for b in &mut p.biases {
        b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    p
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
}

pub fn pairs(inputs: &Matrix<f64>, targets: &Matrix<f64>) -> Vec<SamplePair<f64>> {
    inputs
        .iter_rows()
        .zip(targets.iter_rows())
        .enumerate()
        .map(|(i, (x, y))| SamplePair {
            input: x.to_vec(),
            target: y.to_vec(),
            origin: (i, 0),
        })
        .collect()
}

pub fn batch_mse(params: &MlpParams<f64>, inputs: &Matrix<f64>, targets: &Matrix<f64>) -> f64 {
    mse(params, &pairs(inputs, targets)).unwrap()
}

/// Largest singular value and its right singular vector by power iteration
/// on `W^T W`.
pub fn top_singular(w: &Matrix<f64>) -> (f64, Vec<f64>) {
    let n = w.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut sigma = 0.0;
    for _ in 0..20000 {
        let wv: Vec<f64> = (0..w.rows()).map(|i| w.row(i).iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let mut next = vec![0.0; n];
        for (i, &s) in wv.iter().enumerate() {
            for (nx, &a) in next.iter_mut().zip(w.row(i)) {
                *nx += a * s;
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (0.0, v);
        }
        let new_sigma = norm.sqrt();
        v = next.into_iter().map(|x| x / norm).collect();
        if (new_sigma - sigma).abs() <= 1e-15 * new_sigma {
            break;
        }
        sigma = new_sigma;
    }
    let wv: Vec<f64> = (0..w.rows()).map(|i| w.row(i).iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
    (wv.iter().map(|x| x * x).sum::<f64>().sqrt(), v)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

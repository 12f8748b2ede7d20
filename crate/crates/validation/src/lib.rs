//! Reference computations that do not share code paths with `lipode`'s
//! numerical kernels: finite differences, power iteration and small
//! statistics helpers.

use lipode::linalg::Matrix;
use lipode::Mlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central finite-difference gradient of `f` over the flat parameters.
pub fn fd_gradient(params: &Mlp, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut v = base.clone();
    (0..base.len())
        .map(|i| {
            v[i] = base[i] + FD_STEP;
            probe.set_flat(&v).expect("same length");
            let up = f(&probe);
            v[i] = base[i] - FD_STEP;
            probe.set_flat(&v).expect("same length");
            let down = f(&probe);
            v[i] = base[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Network with 1 to 3 affine layers of at most 8 units and random biases.
pub fn random_net(rng: &mut ChaCha8Rng) -> Mlp {
    let n_layers = rng.random_range(1..=3);
    let sizes: Vec<usize> = (0..=n_layers).map(|_| rng.random_range(1..=8)).collect();
    let mut p = Mlp::init(&sizes, rng.random()).expect("valid sizes");
    for b in &mut p.biases {
        b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    p
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
}

fn mat_vec(w: &Matrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|i| w.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Largest singular value of `w` and a unit right singular vector, by power
/// iteration on `W^T W`.
pub fn top_singular(w: &Matrix<f64>) -> (f64, Vec<f64>) {
    let n = w.cols();
    let mut rng = seeded(99);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut prev = 0.0;
    for _ in 0..20000 {
        let wv = mat_vec(w, &v);
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
        v = next.into_iter().map(|x| x / norm).collect();
        let sigma = norm.sqrt();
        if (sigma - prev).abs() <= 1e-15 * sigma {
            break;
        }
        prev = sigma;
    }
    let wv = mat_vec(w, &v);
    (wv.iter().map(|x| x * x).sum::<f64>().sqrt(), v)
}

/// Median of a non-empty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

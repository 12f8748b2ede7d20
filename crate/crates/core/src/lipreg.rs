//! Finite-set Lipschitz estimate of a network and its subgradient.
//!
//! The estimate is the largest difference quotient
//! `|N(x_a) - N(x_b)| / |x_a - x_b|` over unordered pairs of a probe set. It
//! is always a lower bound on the true Lipschitz constant and grows with the
//! probe set.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::datagen::SamplePair;
use crate::linalg::{dist2, Matrix};
use crate::net::{Gradients, MlpParams};
use crate::{Error, Result, Scalar};

/// Step-time subsample size for the regularizer's argmax pair.
pub const STEP_PROBE_SIZE: usize = 64;
/// Cap on the reporting probe set.
pub const REPORT_PROBE_SIZE: usize = 1024;

/// Distinct network inputs used to probe difference quotients.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet<T> {
    points: Matrix<T>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipEstimate<T> {
    pub value: T,
    /// Row indices `(a, b)`, `a < b`, of the maximizing pair.
    pub pair: (usize, usize),
}

fn dedup_rows<T: Scalar>(rows: &[&[T]]) -> Vec<usize> {
    let mut seen = HashSet::new();
    rows.iter()
        .enumerate()
        .filter(|(_, r)| seen.insert(r.iter().map(|v| v.as_f64().to_bits()).collect::<Vec<_>>()))
        .map(|(i, _)| i)
        .collect()
}

impl<T: Scalar> ProbeSet<T> {
    /// Drops duplicate rows (first occurrence wins); needs two distinct rows.
    pub fn new(points: Matrix<T>, seed: u64) -> Result<Self> {
        let rows: Vec<&[T]> = points.iter_rows().collect();
        let keep = dedup_rows(&rows);
        if keep.len() < 2 {
            return Err(Error::input("probe set needs at least two distinct points"));
        }
        let points = if keep.len() == points.rows() { points } else { points.select_rows(&keep) };
        Ok(Self { points, seed })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn points(&self) -> &Matrix<T> {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[T] {
        self.points.row(i)
    }

    /// Uniform subsample without replacement of `min(n, len)` points.
    pub fn subsample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Self {
        if n >= self.len() {
            return self.clone();
        }
        let idx = index::sample(rng, self.len(), n.max(2)).into_vec();
        Self {
            points: self.points.select_rows(&idx),
            seed: self.seed,
        }
    }

    /// Appends rows, skipping any already present.
    pub fn extended(&self, extra: &Matrix<T>) -> Result<Self> {
        let mut data = self.points.as_slice().to_vec();
        data.extend_from_slice(extra.as_slice());
        let m = Matrix::from_vec(self.len() + extra.rows(), self.points.cols(), data)?;
        Self::new(m, self.seed)
    }
}

/// Draws `n` distinct training inputs uniformly (all of them if `n` exceeds
/// the number of distinct inputs).
pub fn sample_probe_set<T: Scalar, R: Rng + ?Sized>(
    train: &[SamplePair<T>],
    n: usize,
    seed: u64,
    rng: &mut R,
) -> Result<ProbeSet<T>> {
    if n < 2 {
        return Err(Error::input("probe set size must be at least 2"));
    }
    let rows: Vec<&[T]> = train.iter().map(|p| p.input.as_slice()).collect();
    let distinct = dedup_rows(&rows);
    if distinct.len() < 2 {
        return Err(Error::input("fewer than two distinct training inputs"));
    }
    let chosen: Vec<usize> = if n >= distinct.len() {
        distinct
    } else {
        index::sample(rng, distinct.len(), n).into_iter().map(|k| distinct[k]).collect()
    };
    let picked: Vec<&[T]> = chosen.iter().map(|&i| rows[i]).collect();
    ProbeSet::new(Matrix::from_rows(&picked)?, seed)
}

/// Max difference quotient over all unordered pairs of `probes`.
///
/// Ties keep the lexicographically smallest `(a, b)`.
pub fn estimate_lipschitz<T: Scalar>(params: &MlpParams<T>, probes: &ProbeSet<T>) -> Result<LipEstimate<T>> {
    let out = params.predict(probes.points())?;
    let n = probes.len();
    let best_per_row: Vec<Option<LipEstimate<T>>> = (0..n - 1)
        .into_par_iter()
        .map(|a| {
            let mut best: Option<LipEstimate<T>> = None;
            for b in a + 1..n {
                let num = dist2(out.row(a), out.row(b));
                let den = dist2(probes.point(a), probes.point(b));
                let r = num / den;
                if best.is_none_or(|e| r > e.value) {
                    best = Some(LipEstimate { value: r, pair: (a, b) });
                }
            }
            best
        })
        .collect();
    let mut best = LipEstimate {
        value: T::neg_infinity(),
        pair: (0, 1),
    };
    for e in best_per_row.into_iter().flatten() {
        if e.value > best.value {
            best = e;
        }
    }
    if !best.value.is_finite() {
        return Err(Error::input("non-finite Lipschitz estimate"));
    }
    Ok(best)
}

/// Gradient of `g(theta) = |N(x_a) - N(x_b)| / |x_a - x_b|` for a fixed pair.
///
/// Returns `g` and its gradient; at `N(x_a) = N(x_b)` the zero subgradient.
pub fn lipschitz_subgradient<T: Scalar>(params: &MlpParams<T>, xa: &[T], xb: &[T]) -> Result<(T, Gradients<T>)> {
    if xa.len() != xb.len() {
        return Err(Error::input("pair points differ in length"));
    }
    let dx = dist2(xa, xb);
    if dx == T::zero() {
        return Err(Error::input("coincident pair has no difference quotient"));
    }
    let mut data = xa.to_vec();
    data.extend_from_slice(xb);
    let batch = Matrix::from_vec(2, xa.len(), data)?;
    let (out, tape) = params.forward(&batch)?;
    let diff: Vec<T> = out.row(0).iter().zip(out.row(1)).map(|(&a, &b)| a - b).collect();
    let dn = diff.iter().map(|&v| v * v).sum::<T>().sqrt();
    if dn == T::zero() {
        return Ok((T::zero(), params.zero_grads()));
    }
    let scale = T::one() / (dn * dx);
    let d = diff.len();
    let mut up = Matrix::zeros(2, d);
    for k in 0..d {
        up.set(0, k, diff[k] * scale);
        up.set(1, k, -diff[k] * scale);
    }
    let (grads, _) = params.backward(&tape, &up)?;
    Ok((dn / dx, grads))
}

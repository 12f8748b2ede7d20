//! Natural cubic smoothing splines (Reinsch form).
//!
//! The fitted curve minimizes `sum (s(t_j) - y_j)^2 + lambda * int s''(t)^2 dt`.
//! With `lambda = 0` it is the interpolating natural cubic spline. Outside the
//! knot span the curve continues linearly, which is how a natural spline
//! extends with zero curvature.

use crate::{Error, Result, Scalar};

/// Piecewise cubic `a + b u + c u^2 + d u^3` with `u = t - knots[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingCurve<T> {
    knots: Vec<T>,
    coeffs: Vec<[T; 4]>,
    lambda: T,
}

impl<T: Scalar> SmoothingCurve<T> {
    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// One `[a, b, c, d]` block per knot interval.
    pub fn coefficients(&self) -> &[[T; 4]] {
        &self.coeffs
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    fn interval(&self, t: T) -> usize {
        // partition_point gives the first knot > t
        let idx = self.knots.partition_point(|&k| k <= t);
        idx.saturating_sub(1).min(self.coeffs.len() - 1)
    }

    pub fn eval(&self, t: T) -> T {
        let n = self.knots.len();
        let (first, last) = (self.knots[0], self.knots[n - 1]);
        if t < first {
            let [a, b, _, _] = self.coeffs[0];
            return a + b * (t - first);
        }
        if t > last {
            let (v, slope) = self.end_value_and_slope();
            return v + slope * (t - last);
        }
        let i = self.interval(t);
        let [a, b, c, d] = self.coeffs[i];
        let u = t - self.knots[i];
        a + u * (b + u * (c + u * d))
    }

    pub fn derivative(&self, t: T) -> T {
        let n = self.knots.len();
        if t < self.knots[0] {
            return self.coeffs[0][1];
        }
        if t > self.knots[n - 1] {
            return self.end_value_and_slope().1;
        }
        let i = self.interval(t);
        let [_, b, c, d] = self.coeffs[i];
        let u = t - self.knots[i];
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        b + u * (two * c + three * u * d)
    }

    fn end_value_and_slope(&self) -> (T, T) {
        let i = self.coeffs.len() - 1;
        let h = self.knots[i + 1] - self.knots[i];
        let [a, b, c, d] = self.coeffs[i];
        let v = a + h * (b + h * (c + h * d));
        let slope = b + h * (T::lit(2.0) * c + T::lit(3.0) * h * d);
        (v, slope)
    }
}

/// Fits the natural cubic smoothing spline with roughness weight `lambda`.
pub fn fit_smoothing_curve<T: Scalar>(times: &[T], values: &[T], lambda: T) -> Result<SmoothingCurve<T>> {
    validate(times, values)?;
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::input("roughness weight must be finite and non-negative"));
    }
    let (g, gamma) = solve_reinsch(times, values, lambda);
    Ok(build_curve(times, &g, &gamma, lambda))
}

/// Chooses `lambda` so that the RMS fit residual equals `noise_std`
/// (discrepancy rule), then fits. A zero `noise_std` interpolates.
pub fn fit_to_noise_level<T: Scalar>(times: &[T], values: &[T], noise_std: T) -> Result<SmoothingCurve<T>> {
    validate(times, values)?;
    if !(noise_std >= T::zero()) {
        return Err(Error::input("noise level must be non-negative"));
    }
    if noise_std == T::zero() {
        return fit_smoothing_curve(times, values, T::zero());
    }
    let lambda = discrepancy_lambda(times, values, noise_std.as_f64());
    fit_smoothing_curve(times, values, T::lit(lambda))
}

fn validate<T: Scalar>(times: &[T], values: &[T]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::input(format!(
            "{} knots but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 3 {
        return Err(Error::input("smoothing spline needs at least 3 points"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::input("knot times must be strictly increasing"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite value in spline data"));
    }
    Ok(())
}

fn rms_residual(times: &[f64], values: &[f64], lambda: f64) -> f64 {
    let (g, _) = solve_reinsch(times, values, lambda);
    let ss: f64 = g.iter().zip(values).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / values.len() as f64).sqrt()
}

fn discrepancy_lambda<T: Scalar>(times: &[T], values: &[T], target: f64) -> f64 {
    let t: Vec<f64> = times.iter().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.as_f64()).collect();
    let span = t[t.len() - 1] - t[0];
    let h = span / (t.len() - 1) as f64;
    // lambda carries units of time^3
    let scale = h.powi(3);
    let (mut lo, mut hi) = ((scale * 1e-10).ln(), (scale * 1e12).ln());
    if rms_residual(&t, &y, hi.exp()) <= target {
        return hi.exp();
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rms_residual(&t, &y, mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Returns smoothed knot values `g` and second derivatives `gamma` (length
/// `n`, zero at both ends).
fn solve_reinsch<T: Scalar>(t: &[T], y: &[T], lambda: T) -> (Vec<T>, Vec<T>) {
    let n = t.len();
    let m = n - 2;
    let h: Vec<T> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let (three, six) = (T::lit(3.0), T::lit(6.0));

    // Column j of Q (interior knot j+1) touches rows j, j+1, j+2.
    let qcol = |j: usize| -> [T; 3] {
        let (a, b) = (T::one() / h[j], T::one() / h[j + 1]);
        [a, -a - b, b]
    };

    // Banded storage of R + lambda Q^T Q: band[k][j] = A[j][j+k], k = 0..=2.
    let mut band = [vec![T::zero(); m], vec![T::zero(); m], vec![T::zero(); m]];
    for j in 0..m {
        band[0][j] = (h[j] + h[j + 1]) / three;
        if j + 1 < m {
            band[1][j] = h[j + 1] / six;
        }
    }
    if lambda > T::zero() {
        for j in 0..m {
            let cj = qcol(j);
            for k in 0..=2 {
                if j + k >= m {
                    break;
                }
                let ck = qcol(j + k);
                // rows j..j+2 against rows j+k..j+k+2
                let mut acc = T::zero();
                for r in k..3 {
                    acc += cj[r] * ck[r - k];
                }
                band[k][j] += lambda * acc;
            }
        }
    }

    let mut rhs: Vec<T> = (0..m)
        .map(|j| {
            let c = qcol(j);
            c[0] * y[j] + c[1] * y[j + 1] + c[2] * y[j + 2]
        })
        .collect();
    banded_cholesky_solve(&mut band, &mut rhs);

    let mut gamma = vec![T::zero(); n];
    gamma[1..n - 1].copy_from_slice(&rhs);

    let mut g = y.to_vec();
    if lambda > T::zero() {
        for j in 0..m {
            let c = qcol(j);
            for r in 0..3 {
                g[j + r] -= lambda * c[r] * rhs[j];
            }
        }
    }
    (g, gamma)
}

/// In-place `L D L^T` solve for a symmetric positive definite matrix with
/// two super-diagonals.
fn banded_cholesky_solve<T: Scalar>(band: &mut [Vec<T>; 3], rhs: &mut [T]) {
    let m = rhs.len();
    // factor: A = L D L^T with unit lower L stored in band[1], band[2]
    for j in 0..m {
        let mut dj = band[0][j];
        if j >= 1 {
            let l = band[1][j - 1];
            dj -= l * l * band[0][j - 1];
        }
        if j >= 2 {
            let l = band[2][j - 2];
            dj -= l * l * band[0][j - 2];
        }
        band[0][j] = dj;
        if j + 1 < m {
            let mut a = band[1][j];
            if j >= 1 {
                a -= band[1][j - 1] * band[2][j - 1] * band[0][j - 1];
            }
            band[1][j] = a / dj;
        }
        if j + 2 < m {
            band[2][j] = band[2][j] / dj;
        }
    }
    // forward
    for j in 0..m {
        if j >= 1 {
            let v = band[1][j - 1] * rhs[j - 1];
            rhs[j] -= v;
        }
        if j >= 2 {
            let v = band[2][j - 2] * rhs[j - 2];
            rhs[j] -= v;
        }
    }
    for j in 0..m {
        rhs[j] /= band[0][j];
    }
    // backward
    for j in (0..m).rev() {
        if j + 1 < m {
            let v = band[1][j] * rhs[j + 1];
            rhs[j] -= v;
        }
        if j + 2 < m {
            let v = band[2][j] * rhs[j + 2];
            rhs[j] -= v;
        }
    }
}

fn build_curve<T: Scalar>(t: &[T], g: &[T], gamma: &[T], lambda: T) -> SmoothingCurve<T> {
    let (two, six) = (T::lit(2.0), T::lit(6.0));
    let coeffs = (0..t.len() - 1)
        .map(|i| {
            let h = t[i + 1] - t[i];
            let a = g[i];
            let b = (g[i + 1] - g[i]) / h - h * (two * gamma[i] + gamma[i + 1]) / six;
            let c = gamma[i] / two;
            let d = (gamma[i + 1] - gamma[i]) / (six * h);
            [a, b, c, d]
        })
        .collect();
    SmoothingCurve {
        knots: t.to_vec(),
        coeffs,
        lambda,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Dense Gaussian elimination, independent of the banded path.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn banded_solver_matches_dense() {
        let t = [0.0, 0.4, 1.1, 1.5, 2.3, 3.0, 3.2, 4.0];
        let y = [1.0, -0.3, 0.8, 2.0, 0.1, -1.0, 0.5, 0.2];
        let lambda = 0.37;
        let n = t.len();
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let mut q = vec![vec![0.0; n - 2]; n];
        let mut r = vec![vec![0.0; n - 2]; n - 2];
        for j in 0..n - 2 {
            q[j][j] = 1.0 / h[j];
            q[j + 1][j] = -1.0 / h[j] - 1.0 / h[j + 1];
            q[j + 2][j] = 1.0 / h[j + 1];
            r[j][j] = (h[j] + h[j + 1]) / 3.0;
            if j + 1 < n - 2 {
                r[j][j + 1] = h[j + 1] / 6.0;
                r[j + 1][j] = h[j + 1] / 6.0;
            }
        }
        let mut a = r.clone();
        let mut rhs = vec![0.0; n - 2];
        for i in 0..n - 2 {
            for k in 0..n - 2 {
                a[i][k] += lambda * (0..n).map(|p| q[p][i] * q[p][k]).sum::<f64>();
            }
            rhs[i] = (0..n).map(|p| q[p][i] * y[p]).sum();
        }
        let want = dense_solve(a, rhs);
        let (_, gamma) = solve_reinsch(&t, &y, lambda);
        for (w, g) in want.iter().zip(&gamma[1..n - 1]) {
            assert!((w - g).abs() < 1e-12, "{w} vs {g}");
        }
    }

    #[test]
    fn interpolates_at_zero_lambda() {
        let t: Vec<f64> = (0..9).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|v| (v * 1.3).sin() + 0.2 * v).collect();
        let c = fit_smoothing_curve(&t, &y, 0.0).unwrap();
        for (ti, yi) in t.iter().zip(&y) {
            assert!((c.eval(*ti) - yi).abs() < 1e-10);
        }
    }

    #[test]
    fn reproduces_lines_for_any_lambda() {
        let t: Vec<f64> = (0..7).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|v| 2.0 - 0.7 * v).collect();
        for lambda in [0.0, 0.1, 10.0, 1e6] {
            let c = fit_smoothing_curve(&t, &y, lambda).unwrap();
            for k in 0..=60 {
                let s = -0.5 + 4.0 * k as f64 / 60.0;
                assert!((c.eval(s) - (2.0 - 0.7 * s)).abs() < 1e-10, "lambda {lambda} at {s}");
            }
        }
    }

    #[test]
    fn curve_is_c2_at_knots() {
        let t: [f64; 6] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5];
        let y: [f64; 6] = [0.0, 1.0, 0.5, -0.2, 0.3, 1.2];
        let c = fit_smoothing_curve::<f64>(&t, &y, 0.05).unwrap();
        let co = c.coefficients();
        for i in 0..co.len() - 1 {
            let h = t[i + 1] - t[i];
            let [a, b, cc, d] = co[i];
            let val = a + b * h + cc * h * h + d * h * h * h;
            let der = b + 2.0 * cc * h + 3.0 * d * h * h;
            let sec = 2.0 * cc + 6.0 * d * h;
            let nxt = co[i + 1];
            assert!((val - nxt[0]).abs() < 1e-12);
            assert!((der - nxt[1]).abs() < 1e-12);
            assert!((sec - 2.0 * nxt[2]).abs() < 1e-12);
        }
        // natural end conditions
        assert!(co[0][2].abs() < 1e-12);
        let [_, _, cc, d] = co[co.len() - 1];
        assert!((2.0 * cc + 6.0 * d * 0.5).abs() < 1e-12);
    }

    #[test]
    fn smoothing_beats_raw_noise_on_sine() {
        let n = 41;
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let clean: Vec<f64> = t.iter().map(|v| v.sin()).collect();
        let sigma = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, sigma).unwrap();
        let noisy: Vec<f64> = clean.iter().map(|v| v + normal.sample(&mut rng)).collect();
        let c = fit_to_noise_level(&t, &noisy, sigma).unwrap();
        let rms = |a: &[f64]| (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt();
        let raw: Vec<f64> = noisy.iter().zip(&clean).map(|(a, b)| a - b).collect();
        let fit: Vec<f64> = t.iter().zip(&clean).map(|(s, b)| c.eval(*s) - b).collect();
        assert!(rms(&fit) < rms(&raw), "{} !< {}", rms(&fit), rms(&raw));
        assert!(c.lambda() > 0.0);
    }

    #[test]
    fn discrepancy_hits_target_residual() {
        let t: Vec<f64> = (0..15).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = t.iter().map(|v| (2.0 * v).cos() + 0.1 * (7.0 * v).sin()).collect();
        let c = fit_to_noise_level(&t, &y, 0.03).unwrap();
        let res: f64 = t.iter().zip(&y).map(|(s, v)| (c.eval(*s) - v).powi(2)).sum::<f64>() / 15.0;
        assert!((res.sqrt() - 0.03).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(fit_smoothing_curve(&[0.0, 1.0, 1.0, 2.0], &[0.0; 4], 0.0).is_err());
        assert!(fit_smoothing_curve(&[0.0, 2.0, 1.0, 3.0], &[0.0; 4], 0.0).is_err());
        assert!(fit_smoothing_curve(&[0.0, 1.0], &[0.0; 2], 0.0).is_err());
        assert!(fit_smoothing_curve(&[0.0, 1.0, 2.0], &[0.0; 3], -1.0).is_err());
    }

    #[test]
    fn derivative_matches_difference() {
        let t: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y = vec![0.0, 1.0, 0.0, 2.0, 1.0, 1.5];
        let c = fit_smoothing_curve(&t, &y, 0.2).unwrap();
        for s in [0.3, 1.7, 2.5, 4.9, -0.5, 6.0] {
            let fd = (c.eval(s + 1e-6) - c.eval(s - 1e-6)) / 2e-6;
            assert!((fd - c.derivative(s)).abs() < 1e-6);
        }
    }
}

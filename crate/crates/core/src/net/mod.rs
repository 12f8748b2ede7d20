//! Feed-forward network `N: R^{1+d} -> R^d` with leaky-ReLU hidden layers and
//! an affine output layer.
//!
//! Layer `i` maps `a_{i-1}` (rows of a batch) to `a_{i-1} W_i^T + b_i`; every
//! layer but the last is followed by `lrelu`. Batches are `B x n` row-major
//! matrices and each row is evaluated independently with the same summation
//! order, so a batch forward equals the row-wise forwards bit for bit.

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};

/// Default negative-side slope of the leaky ReLU.
pub const DEFAULT_LRELU_EPS: f64 = 0.01;

#[inline]
pub fn lrelu<T: Scalar>(z: T, eps: T) -> T {
    if z >= T::zero() {
        z
    } else {
        eps * z
    }
}

/// Derivative of [`lrelu`]; the `z >= 0` branch owns the kink.
#[inline]
pub fn lrelu_grad<T: Scalar>(z: T, eps: T) -> T {
    if z >= T::zero() {
        T::one()
    } else {
        eps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    sizes: Vec<usize>,
    /// `weights[i]` has shape `sizes[i+1] x sizes[i]`.
    pub weights: Vec<Matrix<T>>,
    pub biases: Vec<Vec<T>>,
    pub lrelu_eps: T,
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Matrix<T>>,
    pub biases: Vec<Vec<T>>,
}

/// Cached layer inputs and pre-activations from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape<T> {
    /// `inputs[i]` is the input to layer `i`; `inputs[0]` is the batch.
    inputs: Vec<Matrix<T>>,
    pre: Vec<Matrix<T>>,
}

impl<T: Scalar> ForwardTape<T> {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::input("a network needs at least an input and an output size"));
    }
    if sizes.iter().any(|&n| n == 0) {
        return Err(Error::input(format!("layer sizes must be positive, got {sizes:?}")));
    }
    Ok(())
}

impl<T: Scalar> MlpParams<T> {
    /// Glorot-uniform weights `U[-sqrt(6/(n_in+n_out)), +...]`, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        Self::init_with_eps(sizes, T::lit(DEFAULT_LRELU_EPS), seed)
    }

    pub fn init_with_eps(sizes: &[usize], lrelu_eps: T, seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        check_eps(lrelu_eps)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = (6.0 / (n_in + n_out) as f64).sqrt();
                Matrix::from_fn(n_out, n_in, |_, _| T::lit(rng.random_range(-bound..=bound)))
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases: sizes[1..].iter().map(|&n| vec![T::zero(); n]).collect(),
            lrelu_eps,
        })
    }

    /// Builds parameters from explicit layers, validating the shape chain.
    pub fn from_layers(weights: Vec<Matrix<T>>, biases: Vec<Vec<T>>, lrelu_eps: T) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::input("need one bias vector per weight matrix"));
        }
        check_eps(lrelu_eps)?;
        let mut sizes = vec![weights[0].cols()];
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.cols() != sizes[i] || b.len() != w.rows() {
                return Err(Error::input(format!("layer {i} shape does not chain")));
            }
            sizes.push(w.rows());
        }
        check_sizes(&sizes)?;
        let p = Self {
            sizes,
            weights,
            biases,
            lrelu_eps,
        };
        if !p.is_finite() {
            return Err(Error::input("non-finite parameter"));
        }
        Ok(p)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Parameters flattened layer by layer: row-major weights, then biases.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::input("flat parameter length mismatch"));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
            let m = b.len();
            b.copy_from_slice(&flat[off..off + m]);
            off += m;
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients {
            weights: self.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: self.biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }

    /// `theta -= lr * grads`.
    pub fn descend(&mut self, grads: &Gradients<T>, lr: T) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.axpy(-lr, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (x, &y) in b.iter_mut().zip(g) {
                *x -= lr * y;
            }
        }
    }

    /// Evaluates one input row.
    pub fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.predict(&batch)?.into_vec())
    }

    /// Forward pass without keeping a tape.
    pub fn predict(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_batch(batch)?;
        let last = self.n_layers() - 1;
        let mut a = batch.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = affine(&a, w, b);
            if l < last {
                let eps = self.lrelu_eps;
                z.as_mut_slice().iter_mut().for_each(|v| *v = lrelu(*v, eps));
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward(&self, batch: &Matrix<T>) -> Result<(Matrix<T>, ForwardTape<T>)> {
        self.check_batch(batch)?;
        let last = self.n_layers() - 1;
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut a = batch.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = affine(&a, w, b);
            let next = if l < last { z.map(|v| lrelu(v, self.lrelu_eps)) } else { z.clone() };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok((a, ForwardTape { inputs, pre }))
    }

    /// Reverse pass for the scalar `sum(upstream * output)`.
    ///
    /// Returns parameter gradients and the gradient with respect to the batch.
    pub fn backward(&self, tape: &ForwardTape<T>, upstream: &Matrix<T>) -> Result<(Gradients<T>, Matrix<T>)> {
        let n = self.n_layers();
        if tape.pre.len() != n || tape.inputs.len() != n {
            return Err(Error::input("tape layer count does not match the network"));
        }
        for (l, (z, w)) in tape.pre.iter().zip(&self.weights).enumerate() {
            if z.cols() != w.rows() || tape.inputs[l].cols() != w.cols() {
                return Err(Error::input(format!("tape shape mismatch at layer {l}")));
            }
        }
        let batch = tape.inputs[0].rows();
        if upstream.shape() != (batch, self.output_dim()) {
            return Err(Error::input(format!(
                "upstream has shape {:?}, expected ({batch}, {})",
                upstream.shape(),
                self.output_dim()
            )));
        }

        let mut grads = self.zero_grads();
        let mut delta = upstream.clone();
        for l in (0..n).rev() {
            if l < n - 1 {
                let z = &tape.pre[l];
                for (d, &zv) in delta.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    *d *= lrelu_grad(zv, self.lrelu_eps);
                }
            }
            let a = &tape.inputs[l];
            let w = &self.weights[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for r in 0..batch {
                let dr = delta.row(r);
                let ar = a.row(r);
                for (i, &di) in dr.iter().enumerate() {
                    gb[i] += di;
                    if di != T::zero() {
                        for (g, &av) in gw.row_mut(i).iter_mut().zip(ar) {
                            *g += di * av;
                        }
                    }
                }
            }
            // delta_{l-1} = delta_l W_l
            let mut prev = Matrix::zeros(batch, w.cols());
            for r in 0..batch {
                let dr = delta.row(r).to_vec();
                let pr = prev.row_mut(r);
                for (i, &di) in dr.iter().enumerate() {
                    if di != T::zero() {
                        for (p, &wv) in pr.iter_mut().zip(w.row(i)) {
                            *p += di * wv;
                        }
                    }
                }
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    fn check_batch(&self, batch: &Matrix<T>) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::input(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

fn check_eps<T: Scalar>(eps: T) -> Result<()> {
    if !(eps > T::zero() && eps < T::one()) {
        return Err(Error::input(format!("lrelu slope must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// `a W^T + b`, accumulating each dot product left to right before the bias.
fn affine<T: Scalar>(a: &Matrix<T>, w: &Matrix<T>, b: &[T]) -> Matrix<T> {
    let (rows, n_out) = (a.rows(), w.rows());
    let mut out = Matrix::zeros(rows, n_out);
    for r in 0..rows {
        let ar = a.row(r);
        let or = out.row_mut(r);
        for i in 0..n_out {
            let mut acc = T::zero();
            for (&x, &wv) in ar.iter().zip(w.row(i)) {
                acc += x * wv;
            }
            or[i] = acc + b[i];
        }
    }
    out
}

impl<T: Scalar> Gradients<T> {
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: T, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.axpy(scale, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for w in &mut self.weights {
            w.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.to_flat().iter().all(|v| *v == T::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine_net(w: Vec<Vec<f64>>, b: Vec<f64>) -> MlpParams<f64> {
        MlpParams::from_layers(vec![Matrix::from_rows(&w).unwrap()], vec![b], 0.01).unwrap()
    }

    #[test]
    fn lrelu_values() {
        assert_eq!(lrelu(-1.0, 0.01), -0.01);
        assert_eq!(lrelu(2.0, 0.01), 2.0);
        assert_eq!(lrelu(0.0, 0.01), 0.0);
        assert_eq!(lrelu_grad(0.0, 0.01), 1.0);
        assert_eq!(lrelu_grad(-3.0, 0.01), 0.01);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = MlpParams::<f64>::init(&[2, 30, 1], 9).unwrap();
        let b = MlpParams::<f64>::init(&[2, 30, 1], 9).unwrap();
        assert_eq!(a, b);
        assert!(a.biases.iter().flatten().all(|&v| v == 0.0));
        assert_ne!(a, MlpParams::<f64>::init(&[2, 30, 1], 10).unwrap());

        let big = MlpParams::<f64>::init(&[30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30], 1).unwrap();
        let ws: Vec<f64> = big.weights.iter().flat_map(|w| w.as_slice().to_vec()).collect();
        assert!(ws.len() >= 9_900);
        let bound = (6.0f64 / 60.0).sqrt();
        assert!(ws.iter().all(|w| w.abs() <= bound));
        // the bound is actually approached
        assert!(ws.iter().any(|w| w.abs() > 0.99 * bound));
    }

    #[test]
    fn init_rejects_zero_width() {
        assert!(MlpParams::<f64>::init(&[2, 0, 1], 0).is_err());
        assert!(MlpParams::<f64>::init(&[2], 0).is_err());
        assert!(MlpParams::<f64>::init_with_eps(&[2, 1], 1.5, 0).is_err());
    }

    #[test]
    fn zero_weights_output_last_bias() {
        let mut p = MlpParams::<f64>::init(&[3, 5, 4, 2], 1).unwrap();
        for w in &mut p.weights {
            w.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        }
        p.biases[2] = vec![0.25, -1.5];
        let batch = Matrix::from_fn(4, 3, |i, j| (i + j) as f64);
        let out = p.predict(&batch).unwrap();
        for r in out.iter_rows() {
            assert_eq!(r, &[0.25, -1.5]);
        }
    }

    #[test]
    fn single_affine_layer() {
        let p = affine_net(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], vec![0.0, 0.0]);
        let out = p.predict(&Matrix::from_rows(&[[4.0, -2.0, 7.0]]).unwrap()).unwrap();
        assert_eq!(out.row(0), &[4.0, -2.0]);
    }

    #[test]
    fn shape_errors() {
        let p = MlpParams::<f64>::init(&[2, 3, 1], 0).unwrap();
        assert!(p.predict(&Matrix::zeros(2, 3)).is_err());
        let (_, tape) = p.forward(&Matrix::zeros(2, 2)).unwrap();
        assert!(p.backward(&tape, &Matrix::zeros(3, 1)).is_err());
        let other = MlpParams::<f64>::init(&[2, 4, 4, 1], 0).unwrap();
        assert!(other.backward(&tape, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = MlpParams::<f64>::init(&[3, 6, 2], 4).unwrap();
        let x = Matrix::from_fn(5, 3, |i, j| (i as f64 - j as f64) * 0.3);
        let (_, tape) = p.forward(&x).unwrap();
        let (g, gi) = p.backward(&tape, &Matrix::zeros(5, 2)).unwrap();
        assert!(g.is_zero());
        assert!(gi.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_layer_gradients() {
        let p = affine_net(vec![vec![0.5, -1.0], vec![2.0, 0.25]], vec![0.1, 0.2]);
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]).unwrap();
        let (_, tape) = p.forward(&x).unwrap();
        let up = Matrix::from_fn(3, 2, |_, _| 1.0);
        let (g, gi) = p.backward(&tape, &up).unwrap();
        assert_eq!(g.biases[0], vec![3.0, 3.0]);
        // upstream^T x: each row sums the batch column
        assert_eq!(g.weights[0].row(0), &[4.5, 1.5]);
        assert_eq!(g.weights[0].row(1), &[4.5, 1.5]);
        // input gradient: ones * W
        assert_eq!(gi.row(0), &[2.5, -0.75]);
    }

    #[test]
    fn flat_round_trip() {
        let mut p = MlpParams::<f64>::init(&[2, 4, 3, 1], 5).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.param_count());
        let mut shifted = flat.clone();
        shifted[0] += 1.0;
        p.set_flat(&shifted).unwrap();
        assert_eq!(p.weights[0].get(0, 0), flat[0] + 1.0);
        assert!(p.set_flat(&flat[1..]).is_err());
    }
}

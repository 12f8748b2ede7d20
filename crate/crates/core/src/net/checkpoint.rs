//! Binary parameter checkpoints.
//!
//! Layout (little endian): magic `LPCK`, `u32` version, `u32` layer-size
//! count `n`, `n` x `u64` layer sizes, `f64` lrelu slope, then for each layer
//! the row-major weights followed by the biases, all as `f64`. Every `f32`
//! widens to `f64` exactly, so both precisions round-trip bitwise.

use std::fs;
use std::path::Path;

use super::MlpParams;
use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

const MAGIC: &[u8; 4] = b"LPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode<T: Scalar>(params: &MlpParams<T>) -> Vec<u8> {
    let sizes = params.sizes();
    let mut out = Vec::with_capacity(16 + 8 * sizes.len() + 8 * params.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &n in sizes {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    out.extend_from_slice(&params.lrelu_eps.as_f64().to_le_bytes());
    for v in params.to_flat() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.buf.len() < N {
            return Err(Error::Checkpoint("truncated".into()));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().unwrap())
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<MlpParams<T>> {
    let mut r = Reader { buf: bytes };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take()?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(r.take()?) as usize;
    if n < 2 || n > 1 << 16 {
        return Err(Error::Checkpoint(format!("implausible layer count {n}")));
    }
    let sizes = (0..n)
        .map(|_| Ok(u64::from_le_bytes(r.take()?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let eps = T::lit(f64::from_le_bytes(r.take()?));
    let mut next = || -> Result<T> { Ok(T::lit(f64::from_le_bytes(r.take()?))) };

    let mut weights = Vec::with_capacity(n - 1);
    let mut biases = Vec::with_capacity(n - 1);
    for w in sizes.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let data = (0..n_in * n_out).map(|_| next()).collect::<Result<Vec<T>>>()?;
        weights.push(Matrix::from_vec(n_out, n_in, data)?);
        biases.push((0..n_out).map(|_| next()).collect::<Result<Vec<T>>>()?);
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.buf.len())));
    }
    MlpParams::from_layers(weights, biases, eps).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn write_checkpoint<T: Scalar>(params: &MlpParams<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<MlpParams<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

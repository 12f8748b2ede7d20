//! Closed-form right-hand sides and the fixed-step integrator that produces
//! ground-truth trajectories from them.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

/// Default RK4 substeps per output step.
pub const DEFAULT_SUBSTEPS: usize = 20;

/// Compiled catalog of right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsKind {
    /// `x' = x cos x`
    XCosX,
    /// `x' = exp(-x) ln t - t^2`
    ExpLog,
    /// `x1' = 1.5 x1 - x1 x2`, `x2' = -3 x2 + x1 x2`
    LotkaVolterra,
    /// `z'' + 2z' + 2z = cos 2t` reduced to `x1 = z`, `x2 = z'`.
    Pendulum,
    /// `x' = -x`, oracle only.
    Decay,
    /// `x' = 0`, oracle only.
    Zero,
}

impl RhsKind {
    pub fn dim(self) -> usize {
        match self {
            RhsKind::XCosX | RhsKind::ExpLog | RhsKind::Decay | RhsKind::Zero => 1,
            RhsKind::LotkaVolterra | RhsKind::Pendulum => 2,
        }
    }

    /// Whether `f` involves `ln t` and so needs `t > 0`.
    pub fn needs_positive_time(self) -> bool {
        matches!(self, RhsKind::ExpLog)
    }

    /// Unchecked evaluation into `out`.
    #[inline]
    fn eval_into<T: Scalar>(self, t: T, x: &[T], out: &mut [T]) {
        match self {
            RhsKind::XCosX => out[0] = x[0] * x[0].cos(),
            RhsKind::ExpLog => out[0] = (-x[0]).exp() * t.ln() - t * t,
            RhsKind::LotkaVolterra => {
                let (a, b) = (x[0], x[1]);
                out[0] = T::lit(1.5) * a - a * b;
                out[1] = T::lit(-3.0) * b + a * b;
            }
            RhsKind::Pendulum => {
                let two = T::lit(2.0);
                out[0] = x[1];
                out[1] = -two * x[0] - two * x[1] + (two * t).cos();
            }
            RhsKind::Decay => out[0] = -x[0],
            RhsKind::Zero => out[0] = T::zero(),
        }
    }
}

/// A right-hand side together with its sampling protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsSystem<T> {
    pub id: String,
    pub kind: RhsKind,
    pub t_start: T,
    pub t_end: T,
    pub dt: T,
    /// Per-component interval for uniform initial conditions.
    pub ic_box: Vec<(T, T)>,
    /// Number of trajectories `K`.
    pub n_ic: usize,
    /// Spatial box of the dense recovery grid; time uses `[t_start, t_end]`.
    pub recovery_box: Vec<(T, T)>,
    /// RK4 substeps per output step.
    pub substeps: usize,
}

impl<T: Scalar> RhsSystem<T> {
    fn new(id: &str, kind: RhsKind, interval: (f64, f64), ic: &[(f64, f64)], n_ic: usize) -> Self {
        let ic_box: Vec<(T, T)> = ic.iter().map(|&(a, b)| (T::lit(a), T::lit(b))).collect();
        Self {
            id: id.to_owned(),
            kind,
            t_start: T::lit(interval.0),
            t_end: T::lit(interval.1),
            dt: T::lit(0.5),
            recovery_box: ic_box.clone(),
            ic_box,
            n_ic,
            substeps: DEFAULT_SUBSTEPS,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Number of output samples `M = floor((t_end - t_start) / dt) + 1`.
    pub fn n_times(&self) -> usize {
        let span = ((self.t_end - self.t_start) / self.dt).as_f64();
        // guard against 2.9999999 from inexact division
        (span + 1e-9).floor() as usize + 1
    }

    /// Sample time `t_start + j dt`, constructed rather than accumulated.
    #[inline]
    pub fn time(&self, j: usize) -> T {
        self.t_start + T::from_usize_lossy(j) * self.dt
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.n_times()).map(|j| self.time(j)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start < self.t_end) {
            return Err(Error::input(format!("{}: empty time interval", self.id)));
        }
        if !(self.dt > T::zero()) {
            return Err(Error::input(format!("{}: dt must be positive", self.id)));
        }
        if self.n_times() < 2 {
            return Err(Error::input(format!("{}: fewer than two sample times", self.id)));
        }
        if self.ic_box.len() != self.dim() || self.recovery_box.len() != self.dim() {
            return Err(Error::input(format!("{}: box dimension mismatch", self.id)));
        }
        if self.substeps == 0 {
            return Err(Error::input("substeps must be at least 1"));
        }
        Ok(())
    }

    /// Evaluates `f(t, x)`.
    pub fn eval_rhs(&self, t: T, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::input(format!(
                "{}: state has length {}, expected {}",
                self.id,
                x.len(),
                self.dim()
            )));
        }
        if self.kind.needs_positive_time() && !(t > T::zero()) {
            return Err(Error::Domain(format!("{}: ln t requires t > 0, got {t}", self.id)));
        }
        let mut out = vec![T::zero(); self.dim()];
        self.kind.eval_into(t, x, &mut out);
        Ok(out)
    }

    pub fn integrate(&self, x0: &[T]) -> Result<Trajectory<T>> {
        self.integrate_with_substeps(x0, self.substeps)
    }

    /// Classical RK4 with `substeps` equal steps per output interval.
    pub fn integrate_with_substeps(&self, x0: &[T], substeps: usize) -> Result<Trajectory<T>> {
        self.validate()?;
        if substeps == 0 {
            return Err(Error::input("substeps must be at least 1"));
        }
        let d = self.dim();
        if x0.len() != d {
            return Err(Error::input(format!(
                "{}: initial condition has length {}, expected {d}",
                self.id,
                x0.len()
            )));
        }
        if self.kind.needs_positive_time() && !(self.t_start > T::zero()) {
            return Err(Error::Domain(format!("{}: interval must start after t = 0", self.id)));
        }

        let m = self.n_times();
        let times = self.times();
        let mut states = Matrix::zeros(m, d);
        states.row_mut(0).copy_from_slice(x0);

        let h = self.dt / T::from_usize_lossy(substeps);
        let half = T::lit(0.5);
        let sixth = T::one() / T::lit(6.0);
        let two = T::lit(2.0);

        let mut x = x0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d]);
        let mut tmp = vec![T::zero(); d];

        for j in 1..m {
            let t0 = times[j - 1];
            for s in 0..substeps {
                let t = t0 + T::from_usize_lossy(s) * h;
                self.kind.eval_into(t, &x, &mut k1);
                for i in 0..d {
                    tmp[i] = x[i] + half * h * k1[i];
                }
                self.kind.eval_into(t + half * h, &tmp, &mut k2);
                for i in 0..d {
                    tmp[i] = x[i] + half * h * k2[i];
                }
                self.kind.eval_into(t + half * h, &tmp, &mut k3);
                for i in 0..d {
                    tmp[i] = x[i] + h * k3[i];
                }
                self.kind.eval_into(t + h, &tmp, &mut k4);
                for i in 0..d {
                    x[i] += h * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Integration {
                        time: (t + h).as_f64(),
                    });
                }
            }
            states.row_mut(j).copy_from_slice(&x);
        }

        Ok(Trajectory {
            times,
            states,
            ic: x0.to_vec(),
        })
    }
}

/// One solution path sampled on the system's uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    /// `M x d`, row `j` is the state at `times[j]`.
    pub states: Matrix<T>,
    pub ic: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    pub fn component(&self, k: usize) -> Vec<T> {
        self.states.column(k)
    }
}

/// The four systems used in the experiments, with their default sampling.
pub fn builtin_systems<T: Scalar>() -> Vec<RhsSystem<T>> {
    let mut explog = RhsSystem::new("explog", RhsKind::ExpLog, (0.1, 2.0), &[(0.5, 5.0)], 200);
    explog.recovery_box = vec![(T::lit(-1.5), T::lit(5.0))];
    vec![
        RhsSystem::new("xcosx", RhsKind::XCosX, (0.0, 3.0), &[(-2.5, 2.5)], 200),
        explog,
        RhsSystem::new(
            "lotka_volterra",
            RhsKind::LotkaVolterra,
            (0.0, 4.0),
            &[(1.0, 5.0), (1.0, 5.0)],
            400,
        ),
        RhsSystem::new("pendulum", RhsKind::Pendulum, (0.0, 2.0), &[(0.0, 2.0), (0.0, 2.0)], 1000),
    ]
}

/// Systems with analytic solutions, kept out of [`builtin_systems`].
pub fn oracle_systems<T: Scalar>() -> Vec<RhsSystem<T>> {
    vec![
        RhsSystem::new("decay", RhsKind::Decay, (0.0, 1.0), &[(0.0, 1.0)], 10),
        RhsSystem::new("zero", RhsKind::Zero, (0.0, 1.0), &[(-1.0, 1.0)], 10),
    ]
}

/// Finds a system by id in the builtin catalog, then the oracle catalog.
pub fn lookup<T: Scalar>(id: &str) -> Result<RhsSystem<T>> {
    builtin_systems()
        .into_iter()
        .chain(oracle_systems())
        .find(|s| s.id == id)
        .ok_or_else(|| Error::input(format!("unknown system '{id}'")))
}

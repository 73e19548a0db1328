//! Discrete hidden-state dynamics `h_{k+1} = h_k + δ_k σ(A_k h_k + b_k)`,
//! its piecewise-constant extension, and the Itô-correction field `Q`.

mod activation;

pub use activation::{make_activation, Activation, ActivationKind};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Tensor4, Vector};
use crate::processes::{stride, WeightTensor};

/// Norm above which a state is reported as exploded.
pub const EXPLOSION_THRESHOLD: f64 = 1e6;

/// States on the equispaced grid `t_k = k/n`, `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    times: Vec<f64>,
    states: Vec<S>,
}

pub type HiddenTrajectory = Trajectory<Vector>;
pub type MatrixTrajectory = Trajectory<Mat>;

impl<S> Trajectory<S> {
    pub fn new(states: Vec<S>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::GridMismatch(format!(
                "a trajectory needs at least 2 grid points, got {}",
                states.len()
            )));
        }
        let n = states.len() - 1;
        let times = (0..=n).map(|k| k as f64 / n as f64).collect();
        Ok(Trajectory { times, states })
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn into_states(self) -> Vec<S> {
        self.states
    }

    pub fn state(&self, k: usize) -> &S {
        &self.states[k]
    }

    pub fn first(&self) -> &S {
        &self.states[0]
    }

    pub fn last(&self) -> &S {
        &self.states[self.steps()]
    }

    /// The unique `k` with `k/n ≤ t < (k+1)/n`, or `n` at `t = 1`. Grid
    /// times are compared as stored, so `index_at(times[k]) == k`.
    pub fn index_at(&self, t: f64) -> usize {
        let n = self.steps();
        if t >= 1.0 {
            return n;
        }
        if t <= 0.0 {
            return 0;
        }
        let mut k = ((t * n as f64) as usize).min(n);
        while k > 0 && self.times[k] > t {
            k -= 1;
        }
        while k < n && self.times[k + 1] <= t {
            k += 1;
        }
        k
    }

    /// Every `steps/coarse`-th state.
    pub fn subsample(&self, coarse: usize) -> Result<Trajectory<S>>
    where
        S: Clone,
    {
        let s = stride(self.steps(), coarse)?;
        Trajectory::new(self.states.iter().step_by(s).cloned().collect())
    }
}

/// Runs the residual recursion from `x`. Aborts when `‖h_k‖` exceeds
/// [`EXPLOSION_THRESHOLD`].
pub fn forward_hidden(x: &Vector, w: &WeightTensor, act: &Activation) -> Result<HiddenTrajectory> {
    if x.len() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: x.len(),
        });
    }
    let l = w.depth();
    let mut states = Vec::with_capacity(l + 1);
    states.push(x.clone());
    for k in 0..l {
        let h = &states[k];
        let mut z = &w.a()[k] * h + &w.b()[k];
        z.apply(|v| *v = act.f(*v));
        let next = h + z * w.delta(k);
        let norm = next.norm();
        if !(norm <= EXPLOSION_THRESHOLD) {
            return Err(Error::Explosion {
                path: 0,
                layer: k + 1,
                norm,
            });
        }
        states.push(next);
    }
    Trajectory::new(states)
}

/// Continuous-time extension: right-continuous, piecewise constant.
pub fn cte(traj: &HiddenTrajectory, t: f64) -> &Vector {
    traj.state(traj.index_at(t))
}

/// `Q_i(x) = Σ_jk x_j x_k (Σ^A)_{ijik} + (Σ^b)_{ii}`.
pub fn q_field(sigma_a: &Tensor4, sigma_b: &Mat, x: &Vector) -> Vector {
    let d = x.len();
    Vector::from_fn(d, |i, _| {
        let mut q = sigma_b[(i, i)];
        for j in 0..d {
            for k in 0..d {
                q += x[j] * x[k] * sigma_a.get(i, j, i, k);
            }
        }
        q
    })
}

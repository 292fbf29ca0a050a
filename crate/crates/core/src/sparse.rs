//! Per-task L1-regularized code solve, `min_s f(s) + μ‖s‖₁`, by two-metric
//! projection on the nonnegative split `s = s⁺ − s⁻`.
//!
//! Each iteration partitions the `2k` split variables into an active set
//! (at the bound and pushed into it by the gradient) and a free set. Free
//! variables take a Newton step through the split Hessian
//! `[[H, −H], [−H, H]]`, which is singular by construction and is therefore
//! damped by a small multiple of the identity. Active variables take a plain
//! gradient step. The combined step is projected onto the orthant and
//! backtracked with an Armijo test.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::losses::ProjectedTask;
use crate::model::TaskData;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;

const ACTIVE_EPS: f64 = 1e-8;
const HESS_DAMPING: f64 = 1e-8;
const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolveResult {
    pub s: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `f(s) + μ‖s‖₁` at the start point and after every accepted step.
    pub objective_trace: Vec<f64>,
}

/// Largest violation of the L1 optimality conditions.
///
/// For `s_i ≠ 0` the violation is `|g_i + μ·sign(s_i)|`; for `s_i = 0` it is
/// `max(0, |g_i| − μ)`.
pub fn kkt_residual(s: &DVector<f64>, grad: &DVector<f64>, mu: f64) -> f64 {
    s.iter()
        .zip(grad.iter())
        .map(|(&si, &gi)| {
            if si == 0.0 {
                (gi.abs() - mu).max(0.0)
            } else {
                (gi + mu * si.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

pub fn solve_s(
    basis: &DMatrix<f64>,
    task: &TaskData,
    mu: f64,
    s0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SparseSolveResult> {
    let proj = ProjectedTask::new(basis, task)?;
    solve_projected(&proj, mu, s0, tol, max_iter)
}

struct Split {
    pos: DVector<f64>,
    neg: DVector<f64>,
}

impl Split {
    fn from_code(s: &DVector<f64>) -> Self {
        Self {
            pos: s.map(|v| v.max(0.0)),
            neg: s.map(|v| (-v).max(0.0)),
        }
    }

    fn code(&self) -> DVector<f64> {
        &self.pos - &self.neg
    }

    fn l1(&self) -> f64 {
        self.pos.sum() + self.neg.sum()
    }

    fn get(&self, j: usize) -> f64 {
        let k = self.pos.len();
        if j < k {
            self.pos[j]
        } else {
            self.neg[j - k]
        }
    }

    /// Projected point `max(0, u + α·d)`.
    fn step(&self, dir: &DVector<f64>, alpha: f64) -> Self {
        let k = self.pos.len();
        Self {
            pos: DVector::from_fn(k, |i, _| (self.pos[i] + alpha * dir[i]).max(0.0)),
            neg: DVector::from_fn(k, |i, _| (self.neg[i] + alpha * dir[k + i]).max(0.0)),
        }
    }

    /// Removes the common part of `s⁺_i` and `s⁻_i`; keeps `s`, lowers `‖·‖₁`.
    fn collapse(&mut self) {
        for i in 0..self.pos.len() {
            let m = self.pos[i].min(self.neg[i]);
            self.pos[i] -= m;
            self.neg[i] -= m;
        }
    }
}

pub(crate) fn solve_projected(
    proj: &ProjectedTask<'_>,
    mu: f64,
    s0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SparseSolveResult> {
    if !(mu >= 0.0) {
        return Err(Error::Parameter(format!("mu = {mu} must be >= 0")));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tol = {tol} must be > 0")));
    }
    let k = proj.n_latent();
    if s0.len() != k {
        return Err(Error::Dimension(format!(
            "start code has length {}, basis has {k} columns",
            s0.len()
        )));
    }

    let objective = |split: &Split| proj.value(&split.code()) + mu * split.l1();

    let mut u = Split::from_code(s0);
    let mut s = u.code();
    let mut eval = proj.eval(&s, true);
    let mut obj = eval.value + mu * u.l1();
    let mut trace = vec![obj];
    let mut iterations = 0;

    loop {
        if !obj.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("sparse code solve".into()));
        }
        let kkt = kkt_residual(&s, &eval.grad, mu);
        if kkt <= tol || iterations >= max_iter {
            return Ok(SparseSolveResult {
                s,
                kkt_residual: kkt,
                iterations,
                converged: kkt <= tol,
                objective_trace: trace,
            });
        }

        // Gradient of the split objective: (g + μ, −g + μ).
        let split_grad = DVector::from_fn(2 * k, |j, _| {
            if j < k {
                eval.grad[j] + mu
            } else {
                mu - eval.grad[j - k]
            }
        });
        let hess = eval.hess.as_ref().expect("hessian requested");

        let free: Vec<usize> = (0..2 * k)
            .filter(|&j| !(u.get(j) <= ACTIVE_EPS && split_grad[j] >= 0.0))
            .collect();
        let mut dir = -&split_grad;
        if !free.is_empty() {
            let sign = |j: usize| if j < k { 1.0 } else { -1.0 };
            let base = |j: usize| if j < k { j } else { j - k };
            let nf = free.len();
            let block = DMatrix::from_fn(nf, nf, |a, b| {
                let (ja, jb) = (free[a], free[b]);
                let damp = if a == b { HESS_DAMPING } else { 0.0 };
                sign(ja) * sign(jb) * hess[(base(ja), base(jb))] + damp
            });
            let rhs = DVector::from_fn(nf, |a, _| -split_grad[free[a]]);
            if let Some(chol) = block.cholesky() {
                let newton = chol.solve(&rhs);
                for (a, &j) in free.iter().enumerate() {
                    dir[j] = newton[a];
                }
            }
        }

        let accepted = armijo(&u, obj, &split_grad, &dir, &objective).or_else(|| {
            // Newton-projected direction failed; retry along the projected
            // gradient before giving up.
            armijo(&u, obj, &split_grad, &(-&split_grad), &objective)
        });
        iterations += 1;
        let Some((mut next, _)) = accepted else {
            // No decrease within the backtracking budget: stalled at
            // round-off level.
            return Ok(SparseSolveResult {
                s,
                kkt_residual: kkt,
                iterations,
                converged: false,
                objective_trace: trace,
            });
        };
        next.collapse();
        u = next;
        s = u.code();
        eval = proj.eval(&s, true);
        obj = eval.value + mu * u.l1();
        trace.push(obj);
    }
}

fn armijo(
    u: &Split,
    obj: f64,
    grad: &DVector<f64>,
    dir: &DVector<f64>,
    objective: &impl Fn(&Split) -> f64,
) -> Option<(Split, f64)> {
    let k = u.pos.len();
    let mut alpha = 1.0;
    for _ in 0..=MAX_BACKTRACKS {
        let cand = u.step(dir, alpha);
        let predicted: f64 = (0..2 * k).map(|j| grad[j] * (cand.get(j) - u.get(j))).sum();
        let value = objective(&cand);
        if value.is_finite() && value <= obj + ARMIJO_C * predicted.min(0.0) {
            let moved = (0..2 * k).any(|j| cand.get(j) != u.get(j));
            if moved {
                return Some((cand, value));
            }
        }
        alpha *= ARMIJO_SHRINK;
    }
    None
}

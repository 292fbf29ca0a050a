//! Values, gradients and Hessians of the per-task losses.
//!
//! With the basis `L` fixed, a task's loss only depends on its code `s`
//! through the projected design `P = X'L` (`N × k`), so the per-task
//! routines here work on a [`ProjectedTask`] built once per basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{MultiTaskDataset, TaskData, TaskKind};

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic loss of margin `m` for a `{0, 1}` label, i.e. `log(1 + exp(-ŷ m))`
/// with `ŷ = 2y − 1`.
#[inline]
pub fn logistic_sample_loss(margin: f64, label: f64) -> f64 {
    log1p_exp(-(2.0 * label - 1.0) * margin)
}

/// Loss value, gradient and (optionally) Hessian with respect to a task code.
#[derive(Debug, Clone, PartialEq)]
pub struct SParamGradient {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: Option<DMatrix<f64>>,
}

/// A task seen through a fixed basis.
#[derive(Debug, Clone)]
pub struct ProjectedTask<'a> {
    proj: DMatrix<f64>,
    labels: &'a DVector<f64>,
    kind: TaskKind,
}

impl<'a> ProjectedTask<'a> {
    pub fn new(basis: &DMatrix<f64>, task: &'a TaskData) -> Result<Self> {
        if basis.nrows() != task.dim() {
            return Err(Error::Dimension(format!(
                "basis has {} rows, task has {} features",
                basis.nrows(),
                task.dim()
            )));
        }
        Ok(Self {
            proj: task.features().tr_mul(basis),
            labels: task.labels(),
            kind: task.kind(),
        })
    }

    pub fn n_latent(&self) -> usize {
        self.proj.ncols()
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    fn check(&self, s: &DVector<f64>) -> Result<()> {
        if s.len() != self.n_latent() {
            return Err(Error::Dimension(format!(
                "code has length {}, basis has {} columns",
                s.len(),
                self.n_latent()
            )));
        }
        Ok(())
    }

    pub fn value(&self, s: &DVector<f64>) -> f64 {
        let n = self.labels.len() as f64;
        let scores = &self.proj * s;
        match self.kind {
            TaskKind::Regression => (scores - self.labels).norm_squared() / n,
            TaskKind::Classification => {
                scores
                    .iter()
                    .zip(self.labels.iter())
                    .map(|(&m, &y)| logistic_sample_loss(m, y))
                    .sum::<f64>()
                    / n
            }
        }
    }

    pub fn eval(&self, s: &DVector<f64>, want_hess: bool) -> SParamGradient {
        let n = self.labels.len() as f64;
        let scores = &self.proj * s;
        match self.kind {
            TaskKind::Regression => {
                let resid = scores - self.labels;
                let value = resid.norm_squared() / n;
                let grad = self.proj.tr_mul(&resid) * (2.0 / n);
                let hess = want_hess.then(|| self.proj.tr_mul(&self.proj) * (2.0 / n));
                SParamGradient { value, grad, hess }
            }
            TaskKind::Classification => {
                let mut value = 0.0;
                let mut resid = DVector::zeros(scores.len());
                let mut weights = DVector::zeros(scores.len());
                for (i, (&m, &y)) in scores.iter().zip(self.labels.iter()).enumerate() {
                    value += logistic_sample_loss(m, y);
                    let p = sigmoid(m);
                    resid[i] = p - y;
                    weights[i] = p * (1.0 - p);
                }
                let grad = self.proj.tr_mul(&resid) / n;
                let hess = want_hess.then(|| {
                    let mut scaled = self.proj.clone();
                    for (mut row, &w) in scaled.row_iter_mut().zip(weights.iter()) {
                        row *= w;
                    }
                    self.proj.tr_mul(&scaled) / n
                });
                SParamGradient {
                    value: value / n,
                    grad,
                    hess,
                }
            }
        }
    }
}

fn expect_kind(kind: TaskKind, want: TaskKind) -> Result<()> {
    if kind != want {
        return Err(Error::Parameter(format!(
            "{want:?} loss requested for {kind:?} data"
        )));
    }
    Ok(())
}

/// `(1/N)‖y − X'L s‖²` with gradient `(2/N) L'X(X'L s − y)` and Hessian
/// `(2/N) L'X X'L`.
pub fn squared_eval_s(
    s: &DVector<f64>,
    basis: &DMatrix<f64>,
    task: &TaskData,
    want_hess: bool,
) -> Result<SParamGradient> {
    expect_kind(task.kind(), TaskKind::Regression)?;
    let proj = ProjectedTask::new(basis, task)?;
    proj.check(s)?;
    Ok(proj.eval(s, want_hess))
}

/// Mean logistic loss with gradient `−(1/N) Σ (y − σ(m)) L'x` and Hessian
/// `(1/N) Σ σ(m)(1 − σ(m)) L'x x'L`, where `m = s'L'x` and `y ∈ {0, 1}`.
pub fn logistic_eval_s(
    s: &DVector<f64>,
    basis: &DMatrix<f64>,
    task: &TaskData,
    want_hess: bool,
) -> Result<SParamGradient> {
    expect_kind(task.kind(), TaskKind::Classification)?;
    let proj = ProjectedTask::new(basis, task)?;
    proj.check(s)?;
    Ok(proj.eval(s, want_hess))
}

pub(crate) fn check_factors(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
) -> Result<()> {
    if basis.nrows() != data.dim() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, data has {} features",
            basis.nrows(),
            data.dim()
        )));
    }
    if codes.nrows() != basis.ncols() || codes.ncols() != data.n_tasks() {
        return Err(Error::Dimension(format!(
            "codes are {}x{}, expected {}x{}",
            codes.nrows(),
            codes.ncols(),
            basis.ncols(),
            data.n_tasks()
        )));
    }
    Ok(())
}

/// `Σ_t loss_t(L s_t) + λ‖L‖_F²`, the objective of the basis subproblem.
pub fn basis_objective(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
) -> Result<f64> {
    check_factors(basis, codes, data)?;
    let w = basis * codes;
    let loss: f64 = data
        .tasks()
        .iter()
        .enumerate()
        .map(|(t, task)| crate::model::task_loss(&w.column(t).into_owned(), task))
        .sum();
    Ok(loss + lambda * basis.norm_squared())
}

/// Gradient of [`basis_objective`] with respect to `L` for either loss.
///
/// Logistic: `−Σ_t (1/N_t) Σ_i (y − σ(w_t'x)) x s_t' + 2λL`.
/// Squared: `Σ_t (2/N_t) X_t(X_t'L s_t − y_t) s_t' + 2λL`.
fn basis_gradient(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    check_factors(basis, codes, data)?;
    let mut grad = basis * (2.0 * lambda);
    for (t, task) in data.tasks().iter().enumerate() {
        let s = codes.column(t);
        let w = basis * s;
        let scores = task.features().tr_mul(&w);
        let n = task.n_samples() as f64;
        let resid: DVector<f64> = match task.kind() {
            TaskKind::Regression => (scores - task.labels()) * (2.0 / n),
            TaskKind::Classification => scores
                .zip_map(task.labels(), |m, y| sigmoid(m) - y)
                .unscale(n),
        };
        let xr = task.features() * resid;
        grad.ger(1.0, &xr, &s, 1.0);
    }
    Ok(grad)
}

pub fn logistic_grad_l(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    expect_kind(data.kind(), TaskKind::Classification)?;
    basis_gradient(basis, codes, data, lambda)
}

pub fn squared_grad_l(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    expect_kind(data.kind(), TaskKind::Regression)?;
    basis_gradient(basis, codes, data, lambda)
}

//! Alternating minimisation of the joint objective, and the single-task
//! baseline that seeds it.
//!
//! The fit runs:
//! 1. independent per-task training to get `W⁰`;
//! 2. `L ←` top-`k` left singular vectors of `W⁰`;
//! 3. repeat: solve every code `s_t` against the current `L` (warm-started),
//!    save `L_old = L`, then re-solve `L` against the new codes;
//! 4. stop once the relative change of both `L` and `S` is below
//!    `outer_tol`, returning `(L_old, S)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{self, BasisSolveResult};
use crate::error::{Error, Result};
use crate::losses::{sigmoid, ProjectedTask};
use crate::model::{
    full_objective, BasisMethod, Execution, Hyperparams, LatentModel, MultiTaskDataset,
    OuterStats, TaskData, TaskKind, TrainReport,
};
use crate::sparse::{self, SparseSolveResult};

const STL_TOL: f64 = 1e-8;
const STL_MAX_ITER: usize = 100;

/// Independently trained per-task weights, one column per task.
#[derive(Debug, Clone, PartialEq)]
pub struct StlModel {
    pub weights: DMatrix<f64>,
}

impl StlModel {
    /// The baseline as a factored model with `L = W⁰` and `S = I`.
    pub fn as_latent(&self) -> LatentModel {
        let t = self.weights.ncols();
        LatentModel::new(self.weights.clone(), DMatrix::identity(t, t))
            .expect("identity codes match the weight columns")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: LatentModel,
    pub report: TrainReport,
}

/// Ridge (regression) or L2-regularised logistic regression (classification)
/// per task, each minimising `(1/N_t)·loss_t(w) + λ‖w‖²`.
pub fn train_stl(data: &MultiTaskDataset, lambda: f64) -> Result<StlModel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "single-task lambda = {lambda} must be > 0"
        )));
    }
    let columns = data
        .tasks()
        .iter()
        .enumerate()
        .map(|(t, task)| {
            if task.n_samples() == 0 {
                return Err(Error::Dataset(format!("task {t} has no training samples")));
            }
            match task.kind() {
                TaskKind::Regression => ridge(task, lambda),
                TaskKind::Classification => regularized_logistic(task, lambda),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StlModel {
        weights: DMatrix::from_columns(&columns),
    })
}

fn ridge(task: &TaskData, lambda: f64) -> Result<DVector<f64>> {
    let x = task.features();
    let n = task.n_samples() as f64;
    let d = task.dim();
    let gram = x * x.transpose() / n + DMatrix::identity(d, d) * lambda;
    let rhs = x * task.labels() / n;
    gram.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::Singular { size: d })
}

fn logistic_value(task: &TaskData, w: &DVector<f64>, lambda: f64) -> f64 {
    crate::model::task_loss(w, task) + lambda * w.norm_squared()
}

/// Newton's method (the IRLS iteration) with Armijo backtracking.
fn regularized_logistic(task: &TaskData, lambda: f64) -> Result<DVector<f64>> {
    let x = task.features();
    let n = task.n_samples() as f64;
    let d = task.dim();
    let mut w = DVector::zeros(d);
    let mut value = logistic_value(task, &w, lambda);
    for _ in 0..STL_MAX_ITER {
        let scores = x.tr_mul(&w);
        let probs = scores.map(sigmoid);
        let grad = x * (&probs - task.labels()) / n + &w * (2.0 * lambda);
        if grad.norm() <= STL_TOL {
            break;
        }
        let mut weighted = x.clone();
        for (mut col, &p) in weighted.column_iter_mut().zip(probs.iter()) {
            col *= p * (1.0 - p) / n;
        }
        let hess = &weighted * x.transpose() + DMatrix::identity(d, d) * (2.0 * lambda);
        let dir = hess
            .cholesky()
            .map(|c| -c.solve(&grad))
            .ok_or(Error::Singular { size: d })?;
        let slope = grad.dot(&dir);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=50 {
            let cand = &w + &dir * alpha;
            let v = logistic_value(task, &cand, lambda);
            if v <= value + 1e-4 * alpha * slope {
                w = cand;
                value = v;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("single-task logistic fit".into()));
    }
    Ok(w)
}

/// Top-`k` left singular vectors of `W⁰`, ordered by decreasing singular
/// value. Column signs are arbitrary.
pub fn init_l(w0: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let (d, t) = w0.shape();
    if k == 0 || k > d.min(t) {
        return Err(Error::Parameter(format!(
            "k = {k} must lie in [1, min(d, T)] = [1, {}]",
            d.min(t)
        )));
    }
    let svd = w0.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::NonFinite("singular value decomposition".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Ok(u.select_columns(&order[..k]))
}

fn sweep_codes(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    hyper: &Hyperparams,
) -> Result<Vec<SparseSolveResult>> {
    let solve = |(t, task): (usize, &TaskData)| {
        let proj = ProjectedTask::new(basis, task)?;
        let start = codes.column(t).into_owned();
        sparse::solve_projected(&proj, hyper.mu, &start, hyper.inner_tol, hyper.inner_max_iter)
            .map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} (task {t})")),
                other => other,
            })
    };
    match hyper.execution {
        Execution::Parallel => data.tasks().par_iter().enumerate().map(solve).collect(),
        Execution::Sequential => data.tasks().iter().enumerate().map(solve).collect(),
    }
}

fn solve_basis(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    hyper: &Hyperparams,
) -> Result<BasisSolveResult> {
    match hyper.basis_method {
        BasisMethod::ClosedForm => {
            basis::solve_l_squared_capped(codes, data, hyper.lambda, hyper.max_system_dim)
        }
        method => basis::solve_l_logistic_from(
            basis,
            codes,
            data,
            hyper.lambda,
            method,
            hyper.basis_tol,
            hyper.basis_iterations(),
            hyper.max_system_dim,
        ),
    }
}

fn relative_change(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    (new - old).norm() / (1.0 + old.norm())
}

/// Alternating minimisation, warm-started from the single-task solution.
///
/// The single-task phase uses the same `λ` as the basis penalty.
pub fn fit(data: &MultiTaskDataset, hyper: &Hyperparams) -> Result<FitResult> {
    hyper.validate(data)?;
    let stl = train_stl(data, hyper.lambda)?;
    let basis = init_l(&stl.weights, hyper.k)?;
    fit_from(data, hyper, basis)
}

/// Alternating minimisation from a given initial basis.
pub fn fit_from(
    data: &MultiTaskDataset,
    hyper: &Hyperparams,
    initial_basis: DMatrix<f64>,
) -> Result<FitResult> {
    hyper.validate(data)?;
    if initial_basis.shape() != (data.dim(), hyper.k) {
        return Err(Error::Dimension(format!(
            "initial basis is {:?}, expected ({}, {})",
            initial_basis.shape(),
            data.dim(),
            hyper.k
        )));
    }
    let mut basis = initial_basis;
    let mut codes = DMatrix::zeros(hyper.k, data.n_tasks());
    let mut trace = Vec::new();
    let mut stats = Vec::new();
    let mut converged = false;
    let mut old_basis = basis.clone();

    for iteration in 0..hyper.outer_max_iter {
        let at = |source: Error| Error::AtIteration {
            iteration,
            source: Box::new(source),
        };
        let solves = sweep_codes(&basis, &codes, data, hyper).map_err(at)?;
        let mut new_codes = DMatrix::zeros(hyper.k, data.n_tasks());
        for (t, r) in solves.iter().enumerate() {
            new_codes.set_column(t, &r.s);
        }
        old_basis = basis.clone();
        let current = LatentModel::new(old_basis.clone(), new_codes.clone()).map_err(at)?;
        trace.push(full_objective(&current, data, hyper.mu, hyper.lambda).map_err(at)?);

        let solved = solve_basis(&old_basis, &new_codes, data, hyper).map_err(at)?;
        stats.push(OuterStats {
            max_kkt_residual: solves.iter().map(|r| r.kkt_residual).fold(0.0, f64::max),
            sparse_iterations: solves.iter().map(|r| r.iterations).sum(),
            sparse_unconverged: solves.iter().filter(|r| !r.converged).count(),
            basis_residual: solved.residual,
            basis_iterations: solved.iterations,
            basis_converged: solved.converged,
        });

        let delta = relative_change(&solved.basis, &old_basis)
            .max(relative_change(&new_codes, &codes));
        basis = solved.basis;
        codes = new_codes;
        if delta < hyper.outer_tol {
            converged = true;
            break;
        }
    }

    let model = LatentModel::new(old_basis, codes)?;
    Ok(FitResult {
        model,
        report: TrainReport {
            outer_iters: trace.len(),
            objective_trace: trace,
            converged,
            inner_stats: stats,
        },
    })
}

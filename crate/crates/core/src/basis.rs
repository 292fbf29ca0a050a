//! Basis subproblem: `min_L Σ_t loss_t(L s_t) + λ‖L‖_F²` with the codes fixed.
//!
//! Squared loss is solved in closed form through the vectorised system
//! `[Σ_t (1/N_t)(s_t s_t') ⊗ (X_t X_t') + λI] vec(L) = Σ_t (1/N_t) vec(X_t y_t s_t')`,
//! using `vec(AXB) = (B' ⊗ A) vec(X)`. Logistic loss is minimised iteratively
//! by gradient descent or Newton steps, both with Armijo backtracking.
//!
//! `vec` stacks columns, which is also nalgebra's storage order, so
//! `vec(L)[j·d + i] = L[(i, j)]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::losses::{self, basis_objective, check_factors, sigmoid};
use crate::model::{BasisMethod, MultiTaskDataset, TaskKind};

pub const DEFAULT_MAX_SYSTEM_DIM: usize = 20_000;
pub const DEFAULT_TOL: f64 = 1e-6;

const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSolveResult {
    pub basis: DMatrix<f64>,
    /// `‖A·vec(L) − b‖` for the closed form, `‖∇_L‖_F` for iterative solves.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Basis objective at the start point and after each accepted step
    /// (empty for the closed form).
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonDirection {
    /// Step direction `M`, shaped like `L`.
    pub direction: DMatrix<f64>,
    pub step_size: f64,
    /// Whether the Armijo test passed within the backtracking budget.
    pub accepted: bool,
}

/// A dense `dk × dk` system over `vec(L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KronSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

fn expect_kind(data: &MultiTaskDataset, want: TaskKind) -> Result<()> {
    if data.kind() != want {
        return Err(Error::Parameter(format!(
            "{want:?} basis solve requested for {:?} data",
            data.kind()
        )));
    }
    Ok(())
}

fn check_size(d: usize, k: usize, cap: usize) -> Result<()> {
    let size = d * k;
    if size > cap {
        return Err(Error::SystemTooLarge { size, cap });
    }
    Ok(())
}

/// Adds `(c c') ⊗ G` into `matrix` without forming the Kronecker product.
fn add_kron(matrix: &mut DMatrix<f64>, code: &[f64], gram: &DMatrix<f64>) {
    let d = gram.nrows();
    for (a, &sa) in code.iter().enumerate() {
        for (b, &sb) in code.iter().enumerate() {
            let w = sa * sb;
            if w == 0.0 {
                continue;
            }
            let mut block = matrix.view_mut((a * d, b * d), (d, d));
            block.zip_apply(gram, |m, g| *m += w * g);
        }
    }
}

/// Assembles the closed-form system for squared loss.
pub fn squared_system(
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
) -> Result<KronSystem> {
    expect_kind(data, TaskKind::Regression)?;
    let d = data.dim();
    let k = codes.nrows();
    if codes.ncols() != data.n_tasks() {
        return Err(Error::Dimension(format!(
            "codes have {} columns, data has {} tasks",
            codes.ncols(),
            data.n_tasks()
        )));
    }
    let mut matrix = DMatrix::identity(d * k, d * k) * lambda;
    let mut rhs = DVector::zeros(d * k);
    for (t, task) in data.tasks().iter().enumerate() {
        let code: Vec<f64> = codes.column(t).iter().copied().collect();
        if code.iter().all(|&v| v == 0.0) {
            continue;
        }
        let n = task.n_samples() as f64;
        let x = task.features();
        let gram = x * x.transpose() / n;
        add_kron(&mut matrix, &code, &gram);
        let xy = x * task.labels() / n;
        for (j, &sj) in code.iter().enumerate() {
            rhs.rows_mut(j * d, d).axpy(sj, &xy, 1.0);
        }
    }
    Ok(KronSystem { matrix, rhs })
}

fn solve_dense(system: &KronSystem) -> Result<DVector<f64>> {
    let size = system.rhs.len();
    if let Some(chol) = system.matrix.clone().cholesky() {
        return Ok(chol.solve(&system.rhs));
    }
    system
        .matrix
        .clone()
        .lu()
        .solve(&system.rhs)
        .ok_or(Error::Singular { size })
}

pub fn solve_l_squared(
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
) -> Result<BasisSolveResult> {
    solve_l_squared_capped(codes, data, lambda, DEFAULT_MAX_SYSTEM_DIM)
}

pub fn solve_l_squared_capped(
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
    max_system_dim: usize,
) -> Result<BasisSolveResult> {
    if !(lambda >= 0.0) {
        return Err(Error::Parameter(format!("lambda = {lambda} must be >= 0")));
    }
    let d = data.dim();
    let k = codes.nrows();
    check_size(d, k, max_system_dim)?;
    let system = squared_system(codes, data, lambda)?;
    let sol = solve_dense(&system)?;
    let residual = (&system.matrix * &sol - &system.rhs).norm();
    if !residual.is_finite() || sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { size: d * k });
    }
    if residual > 1e-8 * (1.0 + system.rhs.norm()) {
        return Err(Error::Singular { size: d * k });
    }
    Ok(BasisSolveResult {
        basis: DMatrix::from_column_slice(d, k, sol.as_slice()),
        residual,
        iterations: 1,
        converged: true,
        objective_trace: Vec::new(),
    })
}

/// Assembles the Newton system of the logistic basis objective at `L`:
/// `[Σ_t (1/N_t) Σ_i δ_ti vec(x s_t')vec(x s_t')' + 2λI] vec(M) = −vec(∇_L)`.
///
/// Since `vec(x s') = s ⊗ x`, the per-task sum of rank-one terms equals
/// `(s_t s_t') ⊗ (X_t D_t X_t' / N_t)` with `D_t = diag(δ_t)`; it is
/// accumulated in that form.
pub fn newton_system(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
) -> Result<KronSystem> {
    expect_kind(data, TaskKind::Classification)?;
    check_factors(basis, codes, data)?;
    let (d, k) = basis.shape();
    let mut matrix = DMatrix::identity(d * k, d * k) * (2.0 * lambda);
    for (t, task) in data.tasks().iter().enumerate() {
        let code: Vec<f64> = codes.column(t).iter().copied().collect();
        if code.iter().all(|&v| v == 0.0) {
            continue;
        }
        let n = task.n_samples() as f64;
        let x = task.features();
        let scores = x.tr_mul(&(basis * codes.column(t)));
        let mut weighted = x.clone();
        for (mut col, &m) in weighted.column_iter_mut().zip(scores.iter()) {
            let p = sigmoid(m);
            col *= p * (1.0 - p) / n;
        }
        let gram = &weighted * x.transpose();
        add_kron(&mut matrix, &code, &gram);
    }
    let grad = losses::logistic_grad_l(basis, codes, data, lambda)?;
    let rhs = DVector::from_iterator(d * k, grad.iter().map(|g| -g));
    Ok(KronSystem { matrix, rhs })
}

pub fn newton_direction_logistic(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
) -> Result<NewtonDirection> {
    newton_direction_capped(basis, codes, data, lambda, DEFAULT_MAX_SYSTEM_DIM)
}

fn newton_direction_capped(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
    max_system_dim: usize,
) -> Result<NewtonDirection> {
    let (d, k) = basis.shape();
    check_size(d, k, max_system_dim)?;
    let system = newton_system(basis, codes, data, lambda)?;
    if system.rhs.iter().all(|&v| v == 0.0) {
        return Ok(NewtonDirection {
            direction: DMatrix::zeros(d, k),
            step_size: 1.0,
            accepted: true,
        });
    }
    let sol = system
        .matrix
        .clone()
        .cholesky()
        .map(|c| c.solve(&system.rhs))
        .ok_or(Error::Singular { size: d * k })?;
    let direction = DMatrix::from_column_slice(d, k, sol.as_slice());
    let obj = basis_objective(basis, codes, data, lambda)?;
    // rhs is −vec(∇), so ⟨∇, M⟩ = −rhs·vec(M)
    let slope = -system.rhs.dot(&sol);
    let (step_size, accepted) = match armijo(basis, codes, data, lambda, obj, slope, &direction)? {
        Some((alpha, _)) => (alpha, true),
        None => (ARMIJO_SHRINK.powi(MAX_BACKTRACKS as i32), false),
    };
    Ok(NewtonDirection {
        direction,
        step_size,
        accepted,
    })
}

/// Backtracks from a unit step until
/// `F(L + αM) ≤ F(L) + c·α·⟨∇F, M⟩`. Returns `(α, F(L + αM))`.
fn armijo(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
    obj: f64,
    slope: f64,
    direction: &DMatrix<f64>,
) -> Result<Option<(f64, f64)>> {
    if !(slope < 0.0) {
        return Ok(None);
    }
    let mut alpha = 1.0;
    for _ in 0..=MAX_BACKTRACKS {
        let cand = basis + direction * alpha;
        let value = basis_objective(&cand, codes, data, lambda)?;
        if value.is_finite() && value <= obj + ARMIJO_C * alpha * slope {
            return Ok(Some((alpha, value)));
        }
        alpha *= ARMIJO_SHRINK;
    }
    Ok(None)
}

/// Iterative logistic basis solve from `L = 0`.
pub fn solve_l_logistic(
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
    method: BasisMethod,
    tol: f64,
    max_iter: usize,
) -> Result<BasisSolveResult> {
    let start = DMatrix::zeros(data.dim(), codes.nrows());
    solve_l_logistic_from(&start, codes, data, lambda, method, tol, max_iter, DEFAULT_MAX_SYSTEM_DIM)
}

/// Iterative logistic basis solve warm-started at `start`.
///
/// Stops once `‖∇_L‖_F ≤ tol·(1 + |F(L)|)` or after `max_iter` steps.
#[allow(clippy::too_many_arguments)]
pub fn solve_l_logistic_from(
    start: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
    method: BasisMethod,
    tol: f64,
    max_iter: usize,
    max_system_dim: usize,
) -> Result<BasisSolveResult> {
    expect_kind(data, TaskKind::Classification)?;
    check_factors(start, codes, data)?;
    if method == BasisMethod::ClosedForm {
        return Err(Error::Parameter(
            "logistic loss has no closed-form basis solve".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tol = {tol} must be > 0")));
    }
    let mut basis = start.clone();
    let mut obj = basis_objective(&basis, codes, data, lambda)?;
    let mut trace = vec![obj];
    let mut iterations = 0;
    loop {
        if !obj.is_finite() {
            return Err(Error::NonFinite("logistic basis objective".into()));
        }
        let grad = losses::logistic_grad_l(&basis, codes, data, lambda)?;
        let gnorm = grad.norm();
        let converged = gnorm <= tol * (1.0 + obj.abs());
        if converged || iterations >= max_iter {
            return Ok(BasisSolveResult {
                basis,
                residual: gnorm,
                iterations,
                converged,
                objective_trace: trace,
            });
        }
        let step = match method {
            BasisMethod::Newton => {
                let dir = newton_direction_capped(&basis, codes, data, lambda, max_system_dim)?;
                dir.accepted.then(|| dir.direction * dir.step_size)
            }
            _ => armijo(&basis, codes, data, lambda, obj, -gnorm * gnorm, &(-&grad))?
                .map(|(alpha, _)| -&grad * alpha),
        };
        iterations += 1;
        let Some(step) = step else {
            // Line search exhausted: no representable decrease left.
            return Ok(BasisSolveResult {
                basis,
                residual: gnorm,
                iterations,
                converged: false,
                objective_trace: trace,
            });
        };
        basis += step;
        obj = basis_objective(&basis, codes, data, lambda)?;
        trace.push(obj);
    }
}

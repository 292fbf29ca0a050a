//! Datasets, the factored model `W = L·S`, and the joint training objective.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

/// One task's samples. Features are stored `d × N` with samples as columns.
///
/// Classification labels are kept in `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    features: DMatrix<f64>,
    labels: DVector<f64>,
    kind: TaskKind,
}

impl TaskData {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>, kind: TaskKind) -> Result<Self> {
        if features.ncols() == 0 {
            return Err(Error::Dataset("task has no samples".into()));
        }
        if features.ncols() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature columns but {} labels",
                features.ncols(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite feature entry".into()));
        }
        match kind {
            TaskKind::Regression => {
                if labels.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Dataset("non-finite label".into()));
                }
            }
            TaskKind::Classification => {
                if let Some(bad) = labels.iter().find(|&&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Dataset(format!(
                        "classification label {bad} is not 0 or 1"
                    )));
                }
            }
        }
        Ok(Self {
            features,
            labels,
            kind,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.features.ncols()
    }

    /// Keeps the samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_columns(indices);
        let labels = self.labels.select_rows(indices);
        Self::new(features, labels, self.kind)
    }

    /// Appends a constant-1 feature as the last row.
    pub fn with_bias(&self) -> Self {
        Self {
            features: self.features.clone().insert_row(self.dim(), 1.0),
            labels: self.labels.clone(),
            kind: self.kind,
        }
    }
}

/// A collection of tasks sharing one feature dimension and one loss kind.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskDataset {
    tasks: Vec<TaskData>,
    dim: usize,
}

impl MultiTaskDataset {
    pub fn new(tasks: Vec<TaskData>) -> Result<Self> {
        let first = tasks
            .first()
            .ok_or_else(|| Error::Dataset("dataset has no tasks".into()))?;
        let dim = first.dim();
        let kind = first.kind();
        for (t, task) in tasks.iter().enumerate() {
            if task.dim() != dim {
                return Err(Error::TaskDimension {
                    task: t,
                    detail: format!("{} feature rows, expected {dim}", task.dim()),
                });
            }
            if task.kind() != kind {
                return Err(Error::Dataset(format!(
                    "task {t} is {:?} but task 0 is {kind:?}",
                    task.kind()
                )));
            }
        }
        Ok(Self { tasks, dim })
    }

    pub fn tasks(&self) -> &[TaskData] {
        &self.tasks
    }

    pub fn task(&self, t: usize) -> Result<&TaskData> {
        self.tasks.get(t).ok_or(Error::TaskIndex {
            index: t,
            tasks: self.tasks.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn kind(&self) -> TaskKind {
        self.tasks[0].kind()
    }

    pub fn total_samples(&self) -> usize {
        self.tasks.iter().map(TaskData::n_samples).sum()
    }

    pub fn with_bias(&self) -> Self {
        Self {
            tasks: self.tasks.iter().map(TaskData::with_bias).collect(),
            dim: self.dim + 1,
        }
    }
}

/// The factor pair: basis `L` (`d × k`, one latent task per column) and
/// codes `S` (`k × T`, one sparse combination per task).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    basis: DMatrix<f64>,
    codes: DMatrix<f64>,
}

impl LatentModel {
    pub fn new(basis: DMatrix<f64>, codes: DMatrix<f64>) -> Result<Self> {
        if basis.ncols() != codes.nrows() {
            return Err(Error::Dimension(format!(
                "basis has {} columns but codes have {} rows",
                basis.ncols(),
                codes.nrows()
            )));
        }
        if basis.iter().chain(codes.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model factors".into()));
        }
        Ok(Self { basis, codes })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn codes(&self) -> &DMatrix<f64> {
        &self.codes
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn n_latent(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_tasks(&self) -> usize {
        self.codes.ncols()
    }

    /// `W = L·S`, one predictor per column.
    pub fn assemble_w(&self) -> DMatrix<f64> {
        &self.basis * &self.codes
    }

    /// The predictor `w_t = L·s_t`.
    pub fn weight(&self, t: usize) -> Result<DVector<f64>> {
        if t >= self.n_tasks() {
            return Err(Error::TaskIndex {
                index: t,
                tasks: self.n_tasks(),
            });
        }
        Ok(&self.basis * self.codes.column(t))
    }

    /// Prediction for one sample: the linear score for regression, the
    /// positive-class probability for classification.
    pub fn predict(&self, kind: TaskKind, t: usize, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "sample has {} features, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let score = self.weight(t)?.dot(x);
        Ok(match kind {
            TaskKind::Regression => score,
            TaskKind::Classification => losses::sigmoid(score),
        })
    }

    pub(crate) fn check_against(&self, data: &MultiTaskDataset) -> Result<()> {
        if self.n_tasks() != data.n_tasks() {
            return Err(Error::Dimension(format!(
                "model has {} task codes, dataset has {} tasks",
                self.n_tasks(),
                data.n_tasks()
            )));
        }
        for (t, task) in data.tasks().iter().enumerate() {
            if task.dim() != self.dim() {
                return Err(Error::TaskDimension {
                    task: t,
                    detail: format!("{} features, model basis has {} rows", task.dim(), self.dim()),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMethod {
    ClosedForm,
    Gradient,
    Newton,
}

impl BasisMethod {
    pub fn default_max_iter(self) -> usize {
        match self {
            BasisMethod::ClosedForm => 1,
            BasisMethod::Gradient => 200,
            BasisMethod::Newton => 30,
        }
    }
}

/// Whether per-task work inside a fit may run on the rayon pool.
///
/// Per-task results are collected in task order, so both modes give the same
/// numbers; `Sequential` exists for profiling and single-threaded hosts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Number of latent basis tasks.
    pub k: usize,
    /// Entrywise L1 weight on the codes.
    pub mu: f64,
    /// Squared Frobenius weight on the basis.
    pub lambda: f64,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// KKT tolerance of the per-task sparse solves.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub basis_method: BasisMethod,
    /// Gradient-norm tolerance of the iterative basis solvers.
    pub basis_tol: f64,
    /// `None` picks the method default (200 gradient, 30 Newton).
    pub basis_max_iter: Option<usize>,
    /// Largest `d·k` accepted by the dense basis systems.
    pub max_system_dim: usize,
    pub execution: Execution,
}

impl Hyperparams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_basis_method(mut self, method: BasisMethod) -> Self {
        self.basis_method = method;
        self
    }

    pub fn basis_iterations(&self) -> usize {
        self.basis_max_iter
            .unwrap_or_else(|| self.basis_method.default_max_iter())
    }

    pub fn validate(&self, data: &MultiTaskDataset) -> Result<()> {
        let max_k = data.dim().min(data.n_tasks());
        if self.k == 0 || self.k > max_k {
            return Err(Error::Parameter(format!(
                "k = {} must lie in [1, min(d, T)] = [1, {max_k}]",
                self.k
            )));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Parameter(format!("mu = {} must be >= 0", self.mu)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda = {} must be >= 0",
                self.lambda
            )));
        }
        for (name, tol) in [
            ("outer_tol", self.outer_tol),
            ("inner_tol", self.inner_tol),
            ("basis_tol", self.basis_tol),
        ] {
            if !(tol > 0.0) {
                return Err(Error::Parameter(format!("{name} = {tol} must be > 0")));
            }
        }
        if self.basis_method == BasisMethod::ClosedForm && data.kind() != TaskKind::Regression {
            return Err(Error::Parameter(
                "closed-form basis solve requires regression data".into(),
            ));
        }
        if self.basis_method != BasisMethod::ClosedForm && data.kind() != TaskKind::Classification
        {
            return Err(Error::Parameter(
                "gradient and Newton basis solves require classification data".into(),
            ));
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 1,
            mu: 0.1,
            lambda: 0.1,
            outer_tol: 1e-4,
            outer_max_iter: 100,
            inner_tol: 1e-6,
            inner_max_iter: 500,
            basis_method: BasisMethod::ClosedForm,
            basis_tol: 1e-6,
            basis_max_iter: None,
            max_system_dim: 20_000,
            execution: Execution::Parallel,
        }
    }
}

/// Inner-solver statistics for one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterStats {
    /// Largest KKT residual over the per-task sparse solves.
    pub max_kkt_residual: f64,
    pub sparse_iterations: usize,
    pub sparse_unconverged: usize,
    pub basis_residual: f64,
    pub basis_iterations: usize,
    pub basis_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Joint objective at `(L_old, S)` after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    pub inner_stats: Vec<OuterStats>,
}

/// Mean per-sample loss of predictor `w` on one task.
pub fn task_loss(w: &DVector<f64>, task: &TaskData) -> f64 {
    let scores = task.features().tr_mul(w);
    let n = task.n_samples() as f64;
    match task.kind() {
        TaskKind::Regression => (scores - task.labels()).norm_squared() / n,
        TaskKind::Classification => {
            scores
                .iter()
                .zip(task.labels().iter())
                .map(|(&m, &y)| losses::logistic_sample_loss(m, y))
                .sum::<f64>()
                / n
        }
    }
}

/// The joint objective
/// `Σ_t (1/N_t)·loss_t(L s_t) + μ‖S‖₁ + λ‖L‖_F²`.
pub fn full_objective(
    model: &LatentModel,
    data: &MultiTaskDataset,
    mu: f64,
    lambda: f64,
) -> Result<f64> {
    Ok(data_loss(model, data)? + penalty(model, mu, lambda))
}

/// Loss part of the joint objective, without penalties.
pub fn data_loss(model: &LatentModel, data: &MultiTaskDataset) -> Result<f64> {
    model.check_against(data)?;
    let w = model.assemble_w();
    Ok(data
        .tasks()
        .iter()
        .enumerate()
        .map(|(t, task)| task_loss(&w.column(t).into_owned(), task))
        .sum())
}

fn penalty(model: &LatentModel, mu: f64, lambda: f64) -> f64 {
    mu * model.codes().iter().map(|v| v.abs()).sum::<f64>()
        + lambda * model.basis().norm_squared()
}

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::losses::logistic_sample_loss;
use crate::model::{LatentModel, MultiTaskDataset, TaskKind};

fn expect_kind(data: &MultiTaskDataset, want: TaskKind) -> Result<()> {
    if data.kind() != want {
        return Err(Error::Parameter(format!(
            "metric needs {want:?} data, got {:?}",
            data.kind()
        )));
    }
    Ok(())
}

/// Per-task sums of squared errors and sample counts.
fn squared_errors(model: &LatentModel, test: &MultiTaskDataset) -> Result<Vec<(f64, usize)>> {
    expect_kind(test, TaskKind::Regression)?;
    model.check_against(test)?;
    let w = model.assemble_w();
    Ok(test
        .tasks()
        .iter()
        .enumerate()
        .map(|(t, task)| {
            let resid = task.features().tr_mul(&w.column(t)) - task.labels();
            (resid.norm_squared(), task.n_samples())
        })
        .collect())
}

/// Root mean squared error pooled over every test sample of every task.
pub fn rmse(model: &LatentModel, test: &MultiTaskDataset) -> Result<f64> {
    let errs = squared_errors(model, test)?;
    let total: usize = errs.iter().map(|e| e.1).sum();
    if total == 0 {
        return Err(Error::Dataset("empty test set".into()));
    }
    Ok((errs.iter().map(|e| e.0).sum::<f64>() / total as f64).sqrt())
}

pub fn per_task_rmse(model: &LatentModel, test: &MultiTaskDataset) -> Result<Vec<f64>> {
    Ok(squared_errors(model, test)?
        .into_iter()
        .map(|(sse, n)| (sse / n as f64).sqrt())
        .collect())
}

/// Fraction of misclassified samples pooled over tasks, thresholding the
/// score at zero.
pub fn binary_error(model: &LatentModel, test: &MultiTaskDataset) -> Result<f64> {
    expect_kind(test, TaskKind::Classification)?;
    model.check_against(test)?;
    let w = model.assemble_w();
    let mut wrong = 0usize;
    for (t, task) in test.tasks().iter().enumerate() {
        let scores = task.features().tr_mul(&w.column(t));
        wrong += scores
            .iter()
            .zip(task.labels().iter())
            .filter(|(&m, &y)| (m > 0.0) != (y == 1.0))
            .count();
    }
    Ok(wrong as f64 / test.total_samples() as f64)
}

/// Mean logistic loss pooled over samples.
pub fn logistic_loss(model: &LatentModel, test: &MultiTaskDataset) -> Result<f64> {
    expect_kind(test, TaskKind::Classification)?;
    model.check_against(test)?;
    let w = model.assemble_w();
    let mut total = 0.0;
    for (t, task) in test.tasks().iter().enumerate() {
        let scores = task.features().tr_mul(&w.column(t));
        total += scores
            .iter()
            .zip(task.labels().iter())
            .map(|(&m, &y)| logistic_sample_loss(m, y))
            .sum::<f64>();
    }
    Ok(total / test.total_samples() as f64)
}

/// Samples with a single class label each, scored by one-vs-all predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSet {
    features: DMatrix<f64>,
    classes: Vec<usize>,
}

impl MulticlassSet {
    pub fn new(features: DMatrix<f64>, classes: Vec<usize>) -> Result<Self> {
        if features.ncols() != classes.len() {
            return Err(Error::Dataset(format!(
                "{} samples but {} class labels",
                features.ncols(),
                classes.len()
            )));
        }
        if classes.is_empty() {
            return Err(Error::Dataset("empty test set".into()));
        }
        Ok(Self { features, classes })
    }

    /// Recovers class labels from a one-vs-all dataset: every task must hold
    /// the same samples, and each sample must be positive in exactly one task.
    pub fn from_one_vs_all(data: &MultiTaskDataset) -> Result<Self> {
        expect_kind(data, TaskKind::Classification)?;
        let first = &data.tasks()[0];
        for (t, task) in data.tasks().iter().enumerate().skip(1) {
            if task.features() != first.features() {
                return Err(Error::Dataset(format!(
                    "task {t} does not share the samples of task 0"
                )));
            }
        }
        let classes = (0..first.n_samples())
            .map(|i| {
                let positives: Vec<usize> = data
                    .tasks()
                    .iter()
                    .enumerate()
                    .filter(|(_, task)| task.labels()[i] == 1.0)
                    .map(|(t, _)| t)
                    .collect();
                match positives.as_slice() {
                    [c] => Ok(*c),
                    _ => Err(Error::Dataset(format!(
                        "sample {i} is positive in {} tasks",
                        positives.len()
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(first.features().clone(), classes)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }
}

/// Fraction of samples whose label differs from the argmax of the linear
/// one-vs-all scores. Ties go to the lowest class index.
pub fn multiclass_error(model: &LatentModel, test: &MulticlassSet) -> Result<f64> {
    let n_classes = model.n_tasks();
    if test.features.nrows() != model.dim() {
        return Err(Error::Dimension(format!(
            "samples have {} features, model expects {}",
            test.features.nrows(),
            model.dim()
        )));
    }
    if let Some(&bad) = test.classes.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Dataset(format!(
            "class label {bad} outside [0, {n_classes})"
        )));
    }
    let scores = model.assemble_w().tr_mul(&test.features);
    let wrong = scores
        .column_iter()
        .zip(test.classes.iter())
        .filter(|(col, &c)| argmax(&col.into_owned()) != c)
        .count();
    Ok(wrong as f64 / test.classes.len() as f64)
}

fn argmax(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

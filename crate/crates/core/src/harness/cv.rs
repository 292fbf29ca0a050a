//! Selection of the sparsity weight `μ` by repeated random train/validation
//! splits of the training data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::metrics;
use crate::model::{Execution, Hyperparams, LatentModel, MultiTaskDataset, TaskKind};
use crate::trainer;

/// Sparsity grid searched by default.
pub const DEFAULT_MU_GRID: [f64; 8] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4];
pub const DEFAULT_SPLITS: usize = 4;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub mu_grid: Vec<f64>,
    pub splits: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            mu_grid: DEFAULT_MU_GRID.to_vec(),
            splits: DEFAULT_SPLITS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            seed: 0,
        }
    }
}

impl CvSettings {
    pub fn validate(&self) -> Result<()> {
        if self.mu_grid.is_empty() {
            return Err(Error::Parameter("mu grid is empty".into()));
        }
        if let Some(bad) = self.mu_grid.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
            return Err(Error::Parameter(format!("mu grid entry {bad} is not >= 0")));
        }
        if self.splits == 0 {
            return Err(Error::Parameter("at least one split is required".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Parameter(format!(
                "train fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub mu: f64,
    /// Validation metric averaged over splits.
    pub mean_metric: f64,
    pub split_metrics: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub mu_star: f64,
    /// Name of the validation metric (`rmse` or `logistic_loss`).
    pub metric: String,
    pub table: Vec<GridPoint>,
}

/// Validation metric: pooled RMSE for regression, mean logistic loss for
/// classification. Lower is better for both.
pub fn validation_metric(model: &LatentModel, data: &MultiTaskDataset) -> Result<f64> {
    match data.kind() {
        TaskKind::Regression => metrics::rmse(model, data),
        TaskKind::Classification => metrics::logistic_loss(model, data),
    }
}

fn metric_name(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Regression => "rmse",
        TaskKind::Classification => "logistic_loss",
    }
}

/// Splits every task's samples into `(fit, validation)` parts.
pub fn random_split(
    data: &MultiTaskDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(MultiTaskDataset, MultiTaskDataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fit = Vec::with_capacity(data.n_tasks());
    let mut val = Vec::with_capacity(data.n_tasks());
    for (t, task) in data.tasks().iter().enumerate() {
        let n = task.n_samples();
        if n < 2 {
            return Err(Error::Dataset(format!(
                "task {t} has {n} training sample(s); a validation split needs at least 2"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let n_fit = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        fit.push(task.select(&order[..n_fit])?);
        val.push(task.select(&order[n_fit..])?);
    }
    Ok((MultiTaskDataset::new(fit)?, MultiTaskDataset::new(val)?))
}

/// Seed of the `split`-th random split derived from the base seed.
pub fn split_seed(seed: u64, split: usize) -> u64 {
    seed.wrapping_add((split as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Grid search over `μ`. Ties go to the smaller `μ`.
///
/// Only the training data is passed in; the held-out test split never
/// reaches this function.
pub fn cv_select_mu(
    data: &MultiTaskDataset,
    hyper: &Hyperparams,
    settings: &CvSettings,
) -> Result<CvOutcome> {
    settings.validate()?;
    let splits = (0..settings.splits)
        .map(|r| random_split(data, settings.train_fraction, split_seed(settings.seed, r)))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..settings.mu_grid.len())
        .flat_map(|g| (0..splits.len()).map(move |r| (g, r)))
        .collect();
    let run = |&(g, r): &(usize, usize)| -> Result<f64> {
        let (fit_part, val_part) = &splits[r];
        let h = Hyperparams {
            mu: settings.mu_grid[g],
            ..hyper.clone()
        };
        let fitted = trainer::fit(fit_part, &h)?;
        validation_metric(&fitted.model, val_part)
    };
    let values = match hyper.execution {
        Execution::Parallel => jobs.par_iter().map(run).collect::<Result<Vec<_>>>()?,
        Execution::Sequential => jobs.iter().map(run).collect::<Result<Vec<_>>>()?,
    };

    let table: Vec<GridPoint> = settings
        .mu_grid
        .iter()
        .enumerate()
        .map(|(g, &mu)| {
            let split_metrics = values[g * splits.len()..(g + 1) * splits.len()].to_vec();
            let mean_metric = split_metrics.iter().sum::<f64>() / split_metrics.len() as f64;
            GridPoint {
                mu,
                mean_metric,
                split_metrics,
            }
        })
        .collect();
    let best = table
        .iter()
        .min_by(|a, b| {
            a.mean_metric
                .total_cmp(&b.mean_metric)
                .then(a.mu.total_cmp(&b.mu))
        })
        .expect("grid is non-empty");
    Ok(CvOutcome {
        mu_star: best.mu,
        metric: metric_name(data.kind()).to_string(),
        table,
    })
}

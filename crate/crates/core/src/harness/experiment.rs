//! End-to-end experiment: load or generate data, pick `μ` on the training
//! split, refit, score the held-out split, and write the results.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::cv::{self, CvOutcome, CvSettings, GridPoint};
use crate::harness::io;
use crate::harness::metrics::{self, MulticlassSet};
use crate::harness::support;
use crate::model::{Hyperparams, LatentModel, MultiTaskDataset, TaskKind};
use crate::synth::{self, SynthKind, TaskGroups};
use crate::trainer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum DataSource {
    Synthetic {
        dataset: SynthKind,
        seed: u64,
        append_bias: bool,
    },
    Directory {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Shared latent basis with sparse task codes.
    #[default]
    Latent,
    /// Independent per-task training.
    SingleTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub mode: Mode,
    /// Expected loss kind; checked against the data when set.
    pub loss: Option<TaskKind>,
    pub hyper: Hyperparams,
    /// With a single entry, that `μ` is used directly and no CV is run.
    pub mu_grid: Vec<f64>,
    pub cv_splits: usize,
    pub cv_train_fraction: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(source: DataSource, hyper: Hyperparams) -> Self {
        Self {
            source,
            mode: Mode::Latent,
            loss: None,
            hyper,
            mu_grid: cv::DEFAULT_MU_GRID.to_vec(),
            cv_splits: cv::DEFAULT_SPLITS,
            cv_train_fraction: cv::DEFAULT_TRAIN_FRACTION,
            seed: 0,
            output: None,
        }
    }

    pub fn cv_settings(&self) -> CvSettings {
        CvSettings {
            mu_grid: self.mu_grid.clone(),
            splits: self.cv_splits,
            train_fraction: self.cv_train_fraction,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub basis: PathBuf,
    pub codes: PathBuf,
    pub weights: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub mu_star: Option<f64>,
    pub cv_metric: Option<String>,
    pub cv_table: Vec<GridPoint>,
    /// `rmse`, `multiclass_error` or `binary_error`.
    pub test_metric_name: Option<String>,
    pub test_metric: Option<f64>,
    pub per_task_rmse: Option<Vec<f64>>,
    pub mean_task_rmse: Option<f64>,
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    pub active_latent_rows: usize,
    pub support_recovery: Option<f64>,
    pub wall_time_secs: f64,
    pub artifacts: Option<Artifacts>,
}

impl ResultRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serialises")
    }
}

struct LoadedData {
    train: MultiTaskDataset,
    test: Option<MultiTaskDataset>,
    groups: Option<TaskGroups>,
}

fn load(source: &DataSource) -> Result<LoadedData> {
    match source {
        DataSource::Synthetic {
            dataset,
            seed,
            append_bias,
        } => {
            let mut ds = synth::generate(*dataset, *seed);
            if *append_bias {
                ds = ds.with_bias();
            }
            Ok(LoadedData {
                train: ds.train,
                test: Some(ds.test),
                groups: Some(ds.true_groups),
            })
        }
        DataSource::Directory { path } => {
            let ds = io::ingest_dataset(path)?;
            Ok(LoadedData {
                train: ds.train,
                test: ds.test,
                groups: None,
            })
        }
    }
}

/// Headline metric on held-out data: pooled RMSE for regression; for
/// classification the multiclass error when the tasks form a one-vs-all
/// set, else the pooled binary error.
pub fn test_metric(model: &LatentModel, test: &MultiTaskDataset) -> Result<(&'static str, f64)> {
    match test.kind() {
        TaskKind::Regression => Ok(("rmse", metrics::rmse(model, test)?)),
        TaskKind::Classification => match MulticlassSet::from_one_vs_all(test) {
            Ok(set) => Ok(("multiclass_error", metrics::multiclass_error(model, &set)?)),
            Err(_) => Ok(("binary_error", metrics::binary_error(model, test)?)),
        },
    }
}

/// Runs the experiment and returns the record together with the fitted model.
pub fn run_experiment_with_model(config: &ExperimentConfig) -> Result<(ResultRecord, LatentModel)> {
    let started = Instant::now();
    let data = load(&config.source)?;
    if let Some(loss) = config.loss {
        if loss != data.train.kind() {
            return Err(Error::Parameter(format!(
                "{loss:?} loss requested for {:?} data",
                data.train.kind()
            )));
        }
    }

    let mut cv_outcome: Option<CvOutcome> = None;
    let (model, trace, outer_iters, converged, mu_star) = match config.mode {
        Mode::SingleTask => {
            if !(config.hyper.lambda > 0.0) {
                return Err(Error::Parameter("single-task mode needs lambda > 0".into()));
            }
            let stl = trainer::train_stl(&data.train, config.hyper.lambda)?;
            (stl.as_latent(), Vec::new(), 0, true, None)
        }
        Mode::Latent => {
            config.hyper.validate(&data.train)?;
            let settings = config.cv_settings();
            settings.validate()?;
            let mu = if settings.mu_grid.len() == 1 {
                settings.mu_grid[0]
            } else {
                let outcome = cv::cv_select_mu(&data.train, &config.hyper, &settings)?;
                let mu = outcome.mu_star;
                cv_outcome = Some(outcome);
                mu
            };
            let hyper = Hyperparams {
                mu,
                ..config.hyper.clone()
            };
            let fitted = trainer::fit(&data.train, &hyper)?;
            (
                fitted.model,
                fitted.report.objective_trace,
                fitted.report.outer_iters,
                fitted.report.converged,
                Some(mu),
            )
        }
    };

    let (test_metric_name, test_value, per_task) = match &data.test {
        Some(test) => {
            let (name, value) = test_metric(&model, test)?;
            let per_task = match test.kind() {
                TaskKind::Regression => Some(metrics::per_task_rmse(&model, test)?),
                TaskKind::Classification => None,
            };
            (Some(name.to_string()), Some(value), per_task)
        }
        None => (None, None, None),
    };
    let threshold = support::default_threshold(model.codes());
    let support_recovery = match (&data.groups, config.mode) {
        (Some(groups), Mode::Latent) => {
            Some(support::support_recovery_score(model.codes(), groups, threshold))
        }
        _ => None,
    };

    let artifacts = match &config.output {
        Some(dir) => Some(write_outputs(dir, &model, data.train.kind())?),
        None => None,
    };

    let record = ResultRecord {
        config: config.clone(),
        mu_star,
        cv_metric: cv_outcome.as_ref().map(|o| o.metric.clone()),
        cv_table: cv_outcome.map(|o| o.table).unwrap_or_default(),
        test_metric_name,
        test_metric: test_value,
        mean_task_rmse: per_task
            .as_ref()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64),
        per_task_rmse: per_task,
        objective_trace: trace,
        outer_iters,
        converged,
        active_latent_rows: support::active_rows(model.codes(), threshold),
        support_recovery,
        wall_time_secs: started.elapsed().as_secs_f64(),
        artifacts,
    };
    if let Some(dir) = &config.output {
        write_record(dir, &record)?;
    }
    Ok((record, model))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultRecord> {
    run_experiment_with_model(config).map(|(record, _)| record)
}

fn write_outputs(dir: &Path, model: &LatentModel, kind: TaskKind) -> Result<Artifacts> {
    io::write_model(dir, model, kind)?;
    Ok(Artifacts {
        dir: dir.to_path_buf(),
        basis: dir.join("L.csv"),
        codes: dir.join("S.csv"),
        weights: dir.join("W.csv"),
    })
}

pub fn write_record(dir: &Path, record: &ResultRecord) -> Result<()> {
    let path = dir.join("record.json");
    std::fs::write(&path, record.to_json()).map_err(|e| Error::Io { path, source: e })
}

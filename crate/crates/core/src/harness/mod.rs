//! Experiment harness: dataset files, metrics, cross-validation of `μ`, and
//! the end-to-end runner used by the command-line front end.

pub mod cv;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod support;

pub use cv::{cv_select_mu, CvOutcome, CvSettings, GridPoint};
pub use experiment::{run_experiment, DataSource, ExperimentConfig, Mode, ResultRecord};
pub use io::{export_dataset, ingest_dataset, DatasetSplits};
pub use metrics::{multiclass_error, rmse, MulticlassSet};
pub use support::support_recovery_score;

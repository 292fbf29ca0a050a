//! Multi-task learning with a shared latent task basis.
//!
//! Every task's weight vector is a sparse combination of `k` latent basis
//! tasks, `W = L·S`. Training alternates between per-task L1-regularised
//! code solves and a basis solve, starting from the top singular vectors of
//! independently trained task weights.
//!
//! ```no_run
//! use taskbasis::{fit, synth, Hyperparams};
//!
//! let data = synth::gen_overlap(0);
//! let fitted = fit(&data.train, &Hyperparams::new(4).with_mu(0.05)).unwrap();
//! let rmse = taskbasis::harness::rmse(&fitted.model, &data.test).unwrap();
//! println!("test rmse {rmse:.3}");
//! ```

pub mod basis;
pub mod error;
pub mod harness;
pub mod losses;
pub mod model;
pub mod sparse;
pub mod synth;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
pub use model::{
    data_loss, full_objective, BasisMethod, Execution, Hyperparams, LatentModel,
    MultiTaskDataset, OuterStats, TaskData, TaskKind, TrainReport,
};
pub use trainer::{fit, init_l, train_stl, FitResult, StlModel};

//! Synthetic multi-task regression benchmarks with known structure.
//!
//! Both generators build 30 tasks in 20 dimensions with 15 training and 50
//! test samples per task, features `x ~ N(0, I)` and label noise
//! `ε ~ N(0, 0.5²)`.
//!
//! * **overlap**: four latent vectors with i.i.d. `N(0, 1)` entries; tasks
//!   0–9 combine latents (0, 1), tasks 10–19 combine (1, 2), tasks 20–29
//!   combine (2, 3), with `N(0, 1)` coefficients.
//! * **disjoint**: three template vectors with i.i.d. `N(0, 1)` entries; task
//!   `t` in group `g = t / 10` is `c_t · template_g` with
//!   `c_t ~ Uniform(−2, 2)` conditioned on `|c_t| ≥ 0.1`.
//!
//! # Random stream
//!
//! A single `ChaCha8Rng` seeded with `seed_from_u64(seed)` feeds every draw.
//! Normals come from `rand_distr::StandardNormal` and uniforms from
//! `rand_distr::Uniform`. Draws are consumed in this order:
//!
//! 1. latent (or template) matrix, column by column, each column top to bottom;
//! 2. per task in task order: its coefficient(s) (two per overlap task, in
//!    latent order; one per disjoint task, redrawn until accepted);
//! 3. per task in task order: training features sample by sample (each
//!    sample's `d` entries in order), then the training noise, then test
//!    features, then test noise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::model::{MultiTaskDataset, TaskData, TaskKind};

pub const DIM: usize = 20;
pub const TASKS: usize = 30;
pub const TASKS_PER_GROUP: usize = 10;
pub const TRAIN_PER_TASK: usize = 15;
pub const TEST_PER_TASK: usize = 50;
pub const NOISE_STD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Disjoint,
    Overlap,
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disjoint" => Ok(SynthKind::Disjoint),
            "overlap" => Ok(SynthKind::Overlap),
            other => Err(format!("unknown synthetic dataset '{other}'")),
        }
    }
}

/// Ground-truth task grouping.
///
/// `adjacent` lists pairs of group indices whose members share at least one
/// latent task in the generating model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskGroups {
    pub groups: Vec<Vec<usize>>,
    pub adjacent: Vec<(usize, usize)>,
}

impl TaskGroups {
    pub fn group_of(&self, task: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&task))
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacent
            .iter()
            .any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: MultiTaskDataset,
    pub test: MultiTaskDataset,
    pub true_w: DMatrix<f64>,
    pub true_s: DMatrix<f64>,
    pub true_groups: TaskGroups,
    /// Label noise actually added, per task.
    pub train_noise: Vec<DVector<f64>>,
    pub test_noise: Vec<DVector<f64>>,
}

impl SynthDataset {
    /// Appends a constant-1 feature to every sample; the true weights gain a
    /// zero bias row.
    pub fn with_bias(&self) -> Self {
        let d = self.true_w.nrows();
        Self {
            train: self.train.with_bias(),
            test: self.test.with_bias(),
            true_w: self.true_w.clone().insert_row(d, 0.0),
            ..self.clone()
        }
    }
}

pub fn generate(kind: SynthKind, seed: u64) -> SynthDataset {
    match kind {
        SynthKind::Disjoint => gen_disjoint(seed),
        SynthKind::Overlap => gen_overlap(seed),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let values: Vec<f64> = (0..rows * cols).map(|_| normal(rng)).collect();
    DMatrix::from_column_slice(rows, cols, &values)
}

fn contiguous_groups(n_groups: usize) -> Vec<Vec<usize>> {
    (0..n_groups)
        .map(|g| (g * TASKS_PER_GROUP..(g + 1) * TASKS_PER_GROUP).collect())
        .collect()
}

fn sample_tasks(
    rng: &mut ChaCha8Rng,
    true_w: &DMatrix<f64>,
) -> (Vec<TaskData>, Vec<TaskData>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut train = Vec::with_capacity(TASKS);
    let mut test = Vec::with_capacity(TASKS);
    let mut train_noise = Vec::with_capacity(TASKS);
    let mut test_noise = Vec::with_capacity(TASKS);
    for t in 0..TASKS {
        let w = true_w.column(t);
        for (n, tasks, noises) in [
            (TRAIN_PER_TASK, &mut train, &mut train_noise),
            (TEST_PER_TASK, &mut test, &mut test_noise),
        ] {
            let x = normal_matrix(rng, DIM, n);
            let noise = DVector::from_fn(n, |_, _| NOISE_STD * normal(rng));
            let y = x.tr_mul(&w) + &noise;
            tasks.push(
                TaskData::new(x, y, TaskKind::Regression).expect("generated samples are finite"),
            );
            noises.push(noise);
        }
    }
    (train, test, train_noise, test_noise)
}

fn assemble(
    rng: &mut ChaCha8Rng,
    true_w: DMatrix<f64>,
    true_s: DMatrix<f64>,
    true_groups: TaskGroups,
) -> SynthDataset {
    let (train, test, train_noise, test_noise) = sample_tasks(rng, &true_w);
    SynthDataset {
        train: MultiTaskDataset::new(train).expect("uniform task shapes"),
        test: MultiTaskDataset::new(test).expect("uniform task shapes"),
        true_w,
        true_s,
        true_groups,
        train_noise,
        test_noise,
    }
}

/// Three groups of ten tasks overlapping through shared latent tasks.
pub fn gen_overlap(seed: u64) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = normal_matrix(&mut rng, DIM, 4);
    let mut true_s = DMatrix::zeros(4, TASKS);
    for t in 0..TASKS {
        let first = t / TASKS_PER_GROUP;
        for j in [first, first + 1] {
            // a zero draw has probability zero; keep the two-nonzero contract anyway
            let mut c = normal(&mut rng);
            while c == 0.0 {
                c = normal(&mut rng);
            }
            true_s[(j, t)] = c;
        }
    }
    let true_w = &latent * &true_s;
    let groups = TaskGroups {
        groups: contiguous_groups(3),
        adjacent: vec![(0, 1), (1, 2)],
    };
    assemble(&mut rng, true_w, true_s, groups)
}

/// Three disjoint groups of ten tasks, each a rescaled copy of one template.
pub fn gen_disjoint(seed: u64) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates = normal_matrix(&mut rng, DIM, 3);
    let scale = Uniform::new(-2.0, 2.0).expect("valid range");
    let mut true_s = DMatrix::zeros(3, TASKS);
    for t in 0..TASKS {
        let c = loop {
            let c: f64 = rng.sample(scale);
            if c.abs() >= 0.1 {
                break c;
            }
        };
        true_s[(t / TASKS_PER_GROUP, t)] = c;
    }
    let true_w = &templates * &true_s;
    let groups = TaskGroups {
        groups: contiguous_groups(3),
        adjacent: Vec::new(),
    };
    assemble(&mut rng, true_w, true_s, groups)
}

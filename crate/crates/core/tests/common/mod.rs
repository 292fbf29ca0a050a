//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the solvers under test; losses are recomputed with
//! explicit loops over samples.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use taskbasis::{MultiTaskDataset, TaskData, TaskKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random task: Gaussian features, labels from a random linear model
/// (thresholded for classification).
pub fn random_task(rng: &mut ChaCha8Rng, d: usize, n: usize, kind: TaskKind) -> TaskData {
    let x = gaussian(rng, d, n);
    let w = gaussian_vec(rng, d);
    let noise = gaussian_vec(rng, n);
    let score = x.tr_mul(&w) + noise * 0.5;
    let y = match kind {
        TaskKind::Regression => score,
        TaskKind::Classification => score.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
    };
    TaskData::new(x, y, kind).unwrap()
}

pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    d: usize,
    tasks: usize,
    n_range: (usize, usize),
    kind: TaskKind,
) -> MultiTaskDataset {
    let tasks = (0..tasks)
        .map(|_| {
            let n = rng.random_range(n_range.0..=n_range.1);
            random_task(rng, d, n, kind)
        })
        .collect();
    MultiTaskDataset::new(tasks).unwrap()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean per-sample loss of weight vector `w`, one sample at a time.
pub fn naive_task_loss(w: &DVector<f64>, task: &TaskData) -> f64 {
    let n = task.n_samples();
    let mut total = 0.0;
    for i in 0..n {
        let mut m = 0.0;
        for r in 0..task.dim() {
            m += w[r] * task.features()[(r, i)];
        }
        let y = task.labels()[i];
        total += match task.kind() {
            TaskKind::Regression => (y - m) * (y - m),
            TaskKind::Classification => {
                let signed = 2.0 * y - 1.0;
                (1.0 + (-signed * m).exp()).ln()
            }
        };
    }
    total / n as f64
}

pub fn naive_code_loss(s: &DVector<f64>, basis: &DMatrix<f64>, task: &TaskData) -> f64 {
    naive_task_loss(&(basis * s), task)
}

/// Naive per-task code loss gradient via explicit sums.
pub fn naive_code_grad(s: &DVector<f64>, basis: &DMatrix<f64>, task: &TaskData) -> DVector<f64> {
    let w = basis * s;
    let n = task.n_samples() as f64;
    let mut g = DVector::zeros(s.len());
    for i in 0..task.n_samples() {
        let x = task.features().column(i);
        let m = w.dot(&x);
        let y = task.labels()[i];
        let coef = match task.kind() {
            TaskKind::Regression => 2.0 * (m - y) / n,
            TaskKind::Classification => (sigmoid(m) - y) / n,
        };
        let lx = basis.tr_mul(&x);
        g += lx * coef;
    }
    g
}

pub fn central_difference<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += h;
        minus[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

pub fn central_difference_matrix<F: Fn(&DMatrix<f64>) -> f64>(
    f: F,
    x: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[(i, j)] += h;
        minus[(i, j)] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

/// `‖a − b‖ / max(1, ‖b‖)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Brute-force KKT violation, coordinate by coordinate.
pub fn naive_kkt(s: &DVector<f64>, g: &DVector<f64>, mu: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..s.len() {
        let v = if s[i] > 0.0 {
            (g[i] + mu).abs()
        } else if s[i] < 0.0 {
            (g[i] - mu).abs()
        } else if g[i].abs() > mu {
            g[i].abs() - mu
        } else {
            0.0
        };
        worst = worst.max(v);
    }
    worst
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub s: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Accelerated proximal gradient (FISTA with gradient-based restart) and the
/// constant step `1/Lip` for `min_s f(s) + μ‖s‖₁`, where `Lip` bounds the
/// curvature of `f`: `(2/N)‖X'L‖₂²` for squared loss, a quarter of
/// `(1/N)‖X'L‖₂²` for logistic. Runs until the KKT residual is at most `tol`
/// or 500 000 iterations.
pub fn oracle_solve_s(basis: &DMatrix<f64>, task: &TaskData, mu: f64, tol: f64) -> OracleResult {
    let k = basis.ncols();
    let a = task.features().transpose() * basis;
    let sigma = a.singular_values().max();
    let n = task.n_samples() as f64;
    let lip = match task.kind() {
        TaskKind::Regression => 2.0 * sigma * sigma / n,
        TaskKind::Classification => 0.25 * sigma * sigma / n,
    };
    let step = 1.0 / lip.max(1e-300);
    let mut s = DVector::zeros(k);
    let mut prev = s.clone();
    let mut momentum = 1.0f64;
    let cap = 500_000;
    for it in 0..cap {
        let g = naive_code_grad(&s, basis, task);
        let kkt = naive_kkt(&s, &g, mu);
        if kkt <= tol {
            return OracleResult {
                s,
                kkt_residual: kkt,
                iterations: it,
                converged: true,
            };
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let y = &s + (&s - &prev) * ((momentum - 1.0) / next_momentum);
        let gy = naive_code_grad(&y, basis, task);
        let next = DVector::from_fn(k, |i, _| soft_threshold(y[i] - step * gy[i], step * mu));
        if (&y - &next).dot(&(&next - &s)) > 0.0 {
            // Momentum points uphill: drop it and take a plain step from `s`.
            momentum = 1.0;
            prev = s.clone();
            s = DVector::from_fn(k, |i, _| soft_threshold(s[i] - step * g[i], step * mu));
        } else {
            momentum = next_momentum;
            prev = std::mem::replace(&mut s, next);
        }
    }
    let g = naive_code_grad(&s, basis, task);
    OracleResult {
        kkt_residual: naive_kkt(&s, &g, mu),
        s,
        iterations: cap,
        converged: false,
    }
}

pub fn l1_objective(s: &DVector<f64>, basis: &DMatrix<f64>, task: &TaskData, mu: f64) -> f64 {
    naive_code_loss(s, basis, task) + mu * s.iter().map(|v| v.abs()).sum::<f64>()
}

/// `Σ_t (1/N_t) loss_t(L s_t) + λ‖L‖²` by explicit loops.
pub fn naive_basis_objective(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
) -> f64 {
    let mut total = 0.0;
    for (t, task) in data.tasks().iter().enumerate() {
        total += naive_code_loss(&codes.column(t).into_owned(), basis, task);
    }
    total + lambda * basis.iter().map(|v| v * v).sum::<f64>()
}

/// Squared-loss basis gradient from explicit per-sample outer products.
pub fn naive_squared_basis_grad(
    basis: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
) -> DMatrix<f64> {
    let mut g = basis * (2.0 * lambda);
    for (t, task) in data.tasks().iter().enumerate() {
        let s = codes.column(t);
        let w = basis * s;
        let n = task.n_samples() as f64;
        for i in 0..task.n_samples() {
            let x = task.features().column(i);
            let r = 2.0 * (w.dot(&x) - task.labels()[i]) / n;
            g += (x * s.transpose()) * r;
        }
    }
    g
}

/// Fixed-step gradient descent on the squared basis objective from `L = 0`.
pub fn gradient_descent_basis(
    codes: &DMatrix<f64>,
    data: &MultiTaskDataset,
    lambda: f64,
    steps: usize,
) -> DMatrix<f64> {
    // Step 1/Lip with Lip bounded by 2·(Σ_t ‖s_t‖²·‖X_t‖²/N_t + λ).
    let mut lip = lambda;
    for (t, task) in data.tasks().iter().enumerate() {
        let sn = codes.column(t).norm_squared();
        let xn = task.features().norm_squared();
        lip += sn * xn / task.n_samples() as f64;
    }
    let step = 1.0 / (2.0 * lip);
    let mut basis = DMatrix::zeros(data.dim(), codes.nrows());
    for _ in 0..steps {
        let g = naive_squared_basis_grad(&basis, codes, data, lambda);
        basis -= g * step;
    }
    basis
}

/// Ridge weights solving `((1/N)XX' + λI) w = (1/N) X y` by Gaussian
/// elimination on the normal equations.
pub fn ridge_oracle(task: &TaskData, lambda: f64) -> DVector<f64> {
    let x = task.features();
    let n = task.n_samples() as f64;
    let d = task.dim();
    let a = x * x.transpose() / n + DMatrix::identity(d, d) * lambda;
    let b = x * task.labels() / n;
    a.lu().solve(&b).unwrap()
}

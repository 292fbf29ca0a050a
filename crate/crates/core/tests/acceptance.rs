//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::time::Instant;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use taskbasis::basis::{newton_system, solve_l_squared, squared_system};
use taskbasis::harness::cv::DEFAULT_MU_GRID;
use taskbasis::harness::experiment::{run_experiment, DataSource, ExperimentConfig, Mode, ResultRecord};
use taskbasis::harness::io::ingest_dataset;
use taskbasis::losses::{logistic_eval_s, logistic_grad_l, squared_eval_s, squared_grad_l};
use taskbasis::sparse::{self, solve_s};
use taskbasis::synth::SynthKind;
use taskbasis::{fit, full_objective, train_stl, BasisMethod, Hyperparams, TaskKind};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn synth_run(dataset: SynthKind, k: usize, seed: u64, mode: Mode) -> ResultRecord {
    let source = DataSource::Synthetic {
        dataset,
        seed,
        append_bias: false,
    };
    let mut config = ExperimentConfig::new(source, Hyperparams::new(k));
    config.seed = seed;
    config.mode = mode;
    run_experiment(&config).expect("synthetic experiment runs")
}

fn rmse_of(records: &[ResultRecord]) -> Vec<f64> {
    records.iter().map(|r| r.test_metric.expect("test split")).collect()
}

/// Every objective trace produced while checking the criteria.
#[derive(Default)]
struct Traces(Vec<(String, Vec<f64>)>);

impl Traces {
    fn add(&mut self, label: impl Into<String>, trace: &[f64]) {
        self.0.push((label.into(), trace.to_vec()));
    }
}

fn overlap_headline(traces: &mut Traces) -> (Outcome, Vec<ResultRecord>) {
    let started = Instant::now();
    let latent: Vec<ResultRecord> = SEEDS
        .iter()
        .map(|&s| synth_run(SynthKind::Overlap, 4, s, Mode::Latent))
        .collect();
    let single: Vec<ResultRecord> = SEEDS
        .iter()
        .map(|&s| synth_run(SynthKind::Overlap, 4, s, Mode::SingleTask))
        .collect();
    let secs = started.elapsed().as_secs_f64();
    for r in &latent {
        traces.add(format!("overlap k=4 seed {}", r.config.seed), &r.objective_trace);
    }
    let ours = rmse_of(&latent);
    let stl = rmse_of(&single);
    let (m_ours, m_stl) = (mean(&ours), mean(&stl));
    let pass = m_ours <= 0.80 && m_stl >= 1.10 && m_ours < 0.65 * m_stl && secs <= 120.0;
    let detail = format!(
        "latent mean RMSE {m_ours:.3} {} (<= 0.80), single-task mean {m_stl:.3} {} (>= 1.10), ratio {:.3} (< 0.65), {secs:.1}s (<= 120s)",
        fmt(&ours),
        fmt(&stl),
        m_ours / m_stl
    );
    (outcome(pass, detail), latent)
}

fn disjoint_headline(traces: &mut Traces) -> Outcome {
    let latent: Vec<ResultRecord> = SEEDS
        .iter()
        .map(|&s| synth_run(SynthKind::Disjoint, 3, s, Mode::Latent))
        .collect();
    let single: Vec<ResultRecord> = SEEDS
        .iter()
        .map(|&s| synth_run(SynthKind::Disjoint, 3, s, Mode::SingleTask))
        .collect();
    for r in &latent {
        traces.add(format!("disjoint k=3 seed {}", r.config.seed), &r.objective_trace);
    }
    let (m_ours, m_stl) = (mean(&rmse_of(&latent)), mean(&rmse_of(&single)));
    outcome(
        m_ours < 0.60 * m_stl,
        format!(
            "latent mean RMSE {m_ours:.3}, single-task mean {m_stl:.3}, ratio {:.3} (< 0.60)",
            m_ours / m_stl
        ),
    )
}

fn k_stability(k4: &[ResultRecord], traces: &mut Traces) -> (Outcome, Vec<ResultRecord>) {
    let base = mean(&rmse_of(k4));
    let mut worst: f64 = 0.0;
    let mut parts = vec![format!("k=4 {base:.3}")];
    let mut k5 = Vec::new();
    for k in 5..=8 {
        let records: Vec<ResultRecord> = SEEDS
            .iter()
            .map(|&s| synth_run(SynthKind::Overlap, k, s, Mode::Latent))
            .collect();
        for r in &records {
            traces.add(format!("overlap k={k} seed {}", r.config.seed), &r.objective_trace);
        }
        let m = mean(&rmse_of(&records));
        let dev = (m - base).abs() / base;
        worst = worst.max(dev);
        parts.push(format!("k={k} {m:.3} ({:+.1}%)", 100.0 * (m - base) / base));
        if k == 5 {
            k5 = records;
        }
    }
    let detail = format!("{}; largest deviation {:.1}% (<= 15%)", parts.join(", "), 100.0 * worst);
    (outcome(worst <= 0.15, detail), k5)
}

fn support_recovery(k5: &[ResultRecord]) -> Outcome {
    let per_seed: Vec<String> = k5
        .iter()
        .map(|r| {
            format!(
                "seed {}: {} rows, score {:.2}",
                r.config.seed,
                r.active_latent_rows,
                r.support_recovery.unwrap_or(f64::NAN)
            )
        })
        .collect();
    let good = k5
        .iter()
        .filter(|r| r.active_latent_rows <= 4 && r.support_recovery.is_some_and(|s| s >= 0.8))
        .count();
    outcome(
        good >= 4,
        format!("{good}/5 seeds with <= 4 active rows and score >= 0.8 ({})", per_seed.join("; ")),
    )
}

fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

fn derivatives() -> Outcome {
    let mut rng = rng(2024);
    let mut worst_grad: f64 = 0.0;
    let mut worst_asym: f64 = 0.0;
    let mut worst_eig: f64 = f64::INFINITY;
    let mut checked = 0;
    for kind in [TaskKind::Regression, TaskKind::Classification] {
        for _ in 0..100 {
            let d = rng.random_range(1..=10);
            let k = rng.random_range(1..=10);
            let t = rng.random_range(1..=3);
            let data = random_dataset(&mut rng, d, t, (1, 20), kind);
            let basis = gaussian(&mut rng, d, k);
            let codes = gaussian(&mut rng, k, t) * 0.5;
            let lambda = 0.1;

            let task = &data.tasks()[0];
            let s = codes.column(0).into_owned();
            let eval = match kind {
                TaskKind::Regression => squared_eval_s(&s, &basis, task, true),
                TaskKind::Classification => logistic_eval_s(&s, &basis, task, true),
            }
            .unwrap();
            let numeric = central_difference(|v| naive_code_loss(v, &basis, task), &s, 1e-6);
            worst_grad = worst_grad.max(rel_err(eval.grad.as_slice(), numeric.as_slice()));

            let grad_l = match kind {
                TaskKind::Regression => squared_grad_l(&basis, &codes, &data, lambda),
                TaskKind::Classification => logistic_grad_l(&basis, &codes, &data, lambda),
            }
            .unwrap();
            let numeric = central_difference_matrix(
                |l| naive_basis_objective(l, &codes, &data, lambda),
                &basis,
                1e-6,
            );
            worst_grad = worst_grad.max(rel_err(grad_l.as_slice(), numeric.as_slice()));

            let mut hessians = vec![eval.hess.unwrap()];
            hessians.push(match kind {
                TaskKind::Regression => squared_system(&codes, &data, lambda).unwrap().matrix,
                TaskKind::Classification => newton_system(&basis, &codes, &data, lambda).unwrap().matrix,
            });
            for h in &hessians {
                worst_asym = worst_asym.max((h - h.transpose()).amax());
                worst_eig = worst_eig.min(min_sym_eigenvalue(h));
            }
            checked += 1;
        }
    }
    outcome(
        worst_grad <= 1e-5 && worst_asym <= 1e-10 && worst_eig >= -1e-10,
        format!(
            "{checked} instances: max gradient rel. error {worst_grad:.2e} (<= 1e-5), max Hessian asymmetry {worst_asym:.1e}, min eigenvalue {worst_eig:.2e} (>= -1e-10)"
        ),
    )
}

fn closed_form_basis() -> Outcome {
    let mut rng = rng(2025);
    let mut worst_resid: f64 = 0.0;
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..20 {
        let d = rng.random_range(2..=8);
        let k = rng.random_range(1..=5);
        let t = rng.random_range(1..=6);
        let data = random_dataset(&mut rng, d, t, (3, 20), TaskKind::Regression);
        let codes = gaussian(&mut rng, k, t);
        let lambda = 0.1;
        let out = solve_l_squared(&codes, &data, lambda).unwrap();
        let system = squared_system(&codes, &data, lambda).unwrap();
        let vec_l = DVector::from_column_slice(out.basis.as_slice());
        let resid = (&system.matrix * vec_l - &system.rhs).norm() / (1.0 + system.rhs.norm());
        worst_resid = worst_resid.max(resid);
        let gd = gradient_descent_basis(&codes, &data, lambda, 1000);
        let gap = naive_basis_objective(&out.basis, &codes, &data, lambda)
            - naive_basis_objective(&gd, &codes, &data, lambda);
        worst_gap = worst_gap.max(gap);
    }
    outcome(
        worst_resid <= 1e-8 && worst_gap <= 1e-6,
        format!(
            "20 instances: max scaled residual {worst_resid:.1e} (<= 1e-8), max objective excess over 1000 gradient steps {worst_gap:.1e} (<= 1e-6)"
        ),
    )
}

fn sparse_equivalence() -> Outcome {
    let mut rng = rng(2026);
    let mut worst_gap: f64 = 0.0;
    let mut sign_mismatches = 0;
    let signs = |s: &DVector<f64>| -> Vec<i8> {
        s.iter()
            .map(|&v| if v > 1e-6 { 1 } else if v < -1e-6 { -1 } else { 0 })
            .collect()
    };
    for i in 0..50 {
        let kind = if i % 2 == 0 { TaskKind::Regression } else { TaskKind::Classification };
        let mu = DEFAULT_MU_GRID[(i / 2) % DEFAULT_MU_GRID.len()];
        let d = rng.random_range(2..=8);
        let k = rng.random_range(1..=8);
        let n = rng.random_range(5..=30);
        let task = random_task(&mut rng, d, n, kind);
        let basis = gaussian(&mut rng, d, k);
        let ours = solve_s(&basis, &task, mu, &DVector::zeros(k), 1e-10, sparse::DEFAULT_MAX_ITER).unwrap();
        let oracle = oracle_solve_s(&basis, &task, mu, 1e-10);
        let gap = (l1_objective(&ours.s, &basis, &task, mu) - l1_objective(&oracle.s, &basis, &task, mu)).abs();
        worst_gap = worst_gap.max(gap);
        if signs(&ours.s) != signs(&oracle.s) {
            sign_mismatches += 1;
        }
    }
    outcome(
        worst_gap <= 1e-6 && sign_mismatches == 0,
        format!("50 instances: max objective gap {worst_gap:.1e} (<= 1e-6), sign-pattern mismatches {sign_mismatches}"),
    )
}

fn nesting(traces: &mut Traces) -> Outcome {
    let mut rng = rng(2027);
    let mut worst = f64::NEG_INFINITY;
    let mut runs = 0;
    for kind in [TaskKind::Regression, TaskKind::Classification] {
        for _ in 0..4 {
            let d = rng.random_range(6..=10);
            let t = rng.random_range(2..=d.min(6));
            let data = random_dataset(&mut rng, d, t, (5, 20), kind);
            let mut hyper = Hyperparams::new(t).with_mu(0.0);
            if kind == TaskKind::Classification {
                hyper = hyper.with_basis_method(BasisMethod::Newton);
            }
            let out = fit(&data, &hyper).unwrap();
            traces.add(format!("nesting {kind:?} run {runs}"), &out.report.objective_trace);
            let stl = train_stl(&data, hyper.lambda).unwrap().as_latent();
            let trained = full_objective(&out.model, &data, 0.0, hyper.lambda).unwrap();
            let feasible = full_objective(&stl, &data, 0.0, hyper.lambda).unwrap();
            worst = worst.max(trained - feasible);
            runs += 1;
        }
    }
    outcome(
        worst <= 1e-8,
        format!("{runs} fits with k = T, mu = 0: max (trained - single-task point) {worst:.2e} (<= 1e-8)"),
    )
}

fn logistic_fits(traces: &mut Traces) {
    let mut rng = rng(2028);
    for method in [BasisMethod::Newton, BasisMethod::Gradient] {
        for run in 0..3 {
            let data = random_dataset(&mut rng, 6, 8, (10, 25), TaskKind::Classification);
            let hyper = Hyperparams::new(3).with_mu(0.05).with_basis_method(method);
            let out = fit(&data, &hyper).unwrap();
            traces.add(format!("logistic {method:?} run {run}"), &out.report.objective_trace);
        }
    }
}

fn monotonicity(traces: &Traces) -> Outcome {
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_label = String::new();
    let mut steps = 0;
    for (label, trace) in &traces.0 {
        for w in trace.windows(2) {
            steps += 1;
            if w[1] - w[0] > worst_rise {
                worst_rise = w[1] - w[0];
                worst_label.clone_from(label);
            }
        }
    }
    outcome(
        worst_rise <= 1e-10,
        format!(
            "{} fits, {steps} outer steps: largest increase {worst_rise:.2e} ({worst_label}) (<= 1e-10)",
            traces.0.len()
        ),
    )
}

fn real_shaped_ingestion() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("manifest.toml"),
        "d = 27\nT = 139\nkind = \"regression\"\nhas_bias_feature = true\n",
    )
    .unwrap();
    let mut rng = rng(2029);
    let truth = gaussian(&mut rng, 27, 2);
    for t in 0..139 {
        let s = gaussian_vec(&mut rng, 2);
        let w = &truth * s;
        for split in ["train", "test"] {
            let n = rng.random_range(8..=30);
            let mut text = String::new();
            for _ in 0..n {
                let mut x: Vec<f64> = (0..26).map(|_| rng.random_range(0..5) as f64).collect();
                x.push(1.0);
                let y = x.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.5..0.5);
                let mut cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                cells.push(format!("{y:.6}"));
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            fs::write(dir.path().join(format!("{split}_{t}.csv")), text).unwrap();
        }
    }
    let ds = ingest_dataset(dir.path()).unwrap();
    let source = DataSource::Directory {
        path: dir.path().to_path_buf(),
    };
    let mut config = ExperimentConfig::new(source, Hyperparams::new(2));
    config.mu_grid = vec![0.01];
    let record = run_experiment(&config).unwrap();
    let per_task = record.per_task_rmse.as_ref().map_or(0, Vec::len);
    let pass = ds.train.n_tasks() == 139 && ds.train.dim() == 27 && per_task == 139 && record.test_metric.is_some();
    outcome(
        pass,
        format!(
            "ingested T = {}, d = {}; fitted and scored {per_task} tasks (test RMSE {:.3})",
            ds.train.n_tasks(),
            ds.train.dim(),
            record.test_metric.unwrap_or(f64::NAN)
        ),
    )
}

fn main() {
    let mut traces = Traces::default();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    let (c1, k4) = overlap_headline(&mut traces);
    results.push((1, "synthetic-overlap headline", c1));
    results.push((2, "synthetic-disjoint headline", disjoint_headline(&mut traces)));
    let (c3, k5) = k_stability(&k4, &mut traces);
    results.push((3, "k-stability", c3));
    results.push((4, "support recovery at k = 5", support_recovery(&k5)));
    results.push((5, "gradient and Hessian correctness", derivatives()));
    results.push((6, "closed-form basis solve", closed_form_basis()));
    results.push((7, "sparse solver vs proximal gradient", sparse_equivalence()));
    let c9 = nesting(&mut traces);
    logistic_fits(&mut traces);
    results.push((8, "alternating monotonicity", monotonicity(&traces)));
    results.push((9, "nesting sanity", c9));
    results.push((10, "real-dataset-shaped ingestion", real_shaped_ingestion()));

    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id:>2} {name}: {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! On-disk dataset and model layout.
//!
//! A dataset directory holds `manifest.toml` plus `train_<t>.csv` and,
//! optionally, `test_<t>.csv` for `t = 0..T`. Each CSV row is one sample:
//! `d` feature columns followed by the label, no header. Classification
//! labels may be written as `{0, 1}` or `{−1, 1}`; `−1` is read as `0`.
//!
//! Numbers are written with 17 significant digits so a write/read cycle
//! reproduces every `f64` exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentModel, MultiTaskDataset, TaskData, TaskKind};

pub const MANIFEST: &str = "manifest.toml";
pub const MODEL_MANIFEST: &str = "model.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub d: usize,
    #[serde(rename = "T")]
    pub tasks: usize,
    pub kind: TaskKind,
    pub has_bias_feature: bool,
}

/// A dataset directory's contents.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: MultiTaskDataset,
    pub test: Option<MultiTaskDataset>,
    pub has_bias_feature: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub kind: TaskKind,
    pub d: usize,
    pub k: usize,
    #[serde(rename = "T")]
    pub tasks: usize,
}

pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: u64, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// Reads numeric CSV rows; every row must have `width` cells when given.
fn read_rows(path: &Path, width: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    let mut expected = width;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let want = *expected.get_or_insert(record.len());
        if record.len() != want {
            return Err(parse_error(
                path,
                line,
                format!("expected {want} columns, found {}", record.len()),
            ));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        parse_error(path, line, format!("column {}: non-numeric cell '{cell}'", c + 1))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_task(path: &Path, d: usize, kind: TaskKind) -> Result<TaskData> {
    let rows = read_rows(path, Some(d + 1))?;
    if rows.is_empty() {
        return Err(parse_error(path, 1, "task file has no samples"));
    }
    let n = rows.len();
    let features = DMatrix::from_fn(d, n, |i, j| rows[j][i]);
    let mut labels = DVector::from_fn(n, |j, _| rows[j][d]);
    if kind == TaskKind::Classification {
        for (j, y) in labels.iter_mut().enumerate() {
            *y = match *y {
                v if v == 1.0 => 1.0,
                v if v == 0.0 || v == -1.0 => 0.0,
                v => {
                    return Err(parse_error(
                        path,
                        j as u64 + 1,
                        format!("classification label {v} is not -1, 0 or 1"),
                    ))
                }
            };
        }
    }
    TaskData::new(features, labels, kind).map_err(|e| parse_error(path, 1, e.to_string()))
}

fn write_task(path: &Path, task: &TaskData) -> Result<()> {
    let mut out = String::new();
    for (x, y) in task.features().column_iter().zip(task.labels().iter()) {
        let cells: Vec<String> = x.iter().chain(std::iter::once(y)).map(|&v| format_number(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| {
        let line = e
            .span()
            .map_or(0, |s| text[..s.start].matches('\n').count() as u64 + 1);
        parse_error(&path, line, e.message().to_string())
    })
}

pub fn task_file(dir: &Path, split: &str, t: usize) -> PathBuf {
    dir.join(format!("{split}_{t}.csv"))
}

pub fn ingest_dataset(dir: &Path) -> Result<DatasetSplits> {
    let manifest = read_manifest(dir)?;
    if manifest.d == 0 || manifest.tasks == 0 {
        return Err(parse_error(&dir.join(MANIFEST), 1, "d and T must be positive"));
    }
    let load = |split: &str| -> Result<MultiTaskDataset> {
        let tasks = (0..manifest.tasks)
            .map(|t| read_task(&task_file(dir, split, t), manifest.d, manifest.kind))
            .collect::<Result<Vec<_>>>()?;
        MultiTaskDataset::new(tasks)
    };
    let train = load("train")?;
    let test = if task_file(dir, "test", 0).exists() {
        Some(load("test")?)
    } else {
        None
    };
    Ok(DatasetSplits {
        train,
        test,
        has_bias_feature: manifest.has_bias_feature,
    })
}

pub fn export_dataset(
    dir: &Path,
    train: &MultiTaskDataset,
    test: Option<&MultiTaskDataset>,
    has_bias_feature: bool,
) -> Result<()> {
    if let Some(test) = test {
        if test.n_tasks() != train.n_tasks() || test.dim() != train.dim() || test.kind() != train.kind()
        {
            return Err(Error::Dataset("train and test splits disagree in shape".into()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        d: train.dim(),
        tasks: train.n_tasks(),
        kind: train.kind(),
        has_bias_feature,
    };
    write_file(&dir.join(MANIFEST), &toml::to_string(&manifest).expect("plain struct"))?;
    for (t, task) in train.tasks().iter().enumerate() {
        write_task(&task_file(dir, "train", t), task)?;
    }
    if let Some(test) = test {
        for (t, task) in test.tasks().iter().enumerate() {
            write_task(&task_file(dir, "test", t), task)?;
        }
    }
    Ok(())
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = Vec::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        writeln!(out, "{}", cells.join(",")).expect("write to memory");
    }
    write_file(path, std::str::from_utf8(&out).expect("ascii"))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_rows(path, None)?;
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes `L.csv`, `S.csv`, `W.csv` and `model.toml` into `dir`.
pub fn write_model(dir: &Path, model: &LatentModel, kind: TaskKind) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(&dir.join("L.csv"), model.basis())?;
    write_matrix(&dir.join("S.csv"), model.codes())?;
    write_matrix(&dir.join("W.csv"), &model.assemble_w())?;
    let manifest = ModelManifest {
        kind,
        d: model.dim(),
        k: model.n_latent(),
        tasks: model.n_tasks(),
    };
    write_file(
        &dir.join(MODEL_MANIFEST),
        &toml::to_string(&manifest).expect("plain struct"),
    )
}

pub fn read_model(dir: &Path) -> Result<(LatentModel, TaskKind)> {
    let path = dir.join(MODEL_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: ModelManifest =
        toml::from_str(&text).map_err(|e| parse_error(&path, 0, e.message().to_string()))?;
    let basis = read_matrix(&dir.join("L.csv"))?;
    let codes = read_matrix(&dir.join("S.csv"))?;
    if basis.shape() != (manifest.d, manifest.k) || codes.shape() != (manifest.k, manifest.tasks) {
        return Err(Error::Dimension(format!(
            "model files are L {:?}, S {:?}; manifest says d = {}, k = {}, T = {}",
            basis.shape(),
            codes.shape(),
            manifest.d,
            manifest.k,
            manifest.tasks
        )));
    }
    Ok((LatentModel::new(basis, codes)?, manifest.kind))
}

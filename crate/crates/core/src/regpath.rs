//! Regularization paths from one stored trace.
//!
//! A single SGD pass is stored; every level of the geometric discount
//! `ρ = 1 − γλ` (or every tail start `τ`) is then an average of the same
//! iterates, so a whole path costs one scan. Levels are compared by mean
//! squared error on held-out data.

use std::io::{BufWriter, Write};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{
    average, parallel_geometric_combine, AveragingScheme, GeometricAccumulator, PartialGeometricSum,
};
use crate::error::{GeoAvgError, Result};
use crate::problem::Dataset;
use crate::trace::Iterates;
use crate::Vector;

/// Regularization key of a path entry. Larger values regularize more.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PathKey {
    Lambda(f64),
    Tau(usize),
}

impl PathKey {
    pub fn kind(&self) -> &'static str {
        match self {
            PathKey::Lambda(_) => "lambda",
            PathKey::Tau(_) => "tau",
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            PathKey::Lambda(l) => l,
            PathKey::Tau(t) => t as f64,
        }
    }
}

/// An unscored point of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub key: PathKey,
    pub solution: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub key: PathKey,
    pub solution: Vector,
    pub validation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub entries: Vec<PathEntry>,
    pub selected_index: usize,
    pub trace_id: String,
}

impl PathResult {
    pub fn selected(&self) -> &PathEntry {
        &self.entries[self.selected_index]
    }

    /// Columns `key_kind, key_value, validation_error, selected, w_0 … w_{d−1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let dim = self.entries.first().map_or(0, |e| e.solution.len());
        let mut header = vec![
            "key_kind".to_string(),
            "key_value".into(),
            "validation_error".into(),
            "selected".into(),
        ];
        header.extend((0..dim).map(|i| format!("w_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (i, e) in self.entries.iter().enumerate() {
            let mut cells = vec![
                e.key.kind().to_string(),
                format!("{}", e.key.value()),
                format!("{}", e.validation_error),
                (i == self.selected_index).to_string(),
            ];
            cells.extend(e.solution.iter().map(|v| format!("{v}")));
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn rhos_for_grid(gamma: f64, lambda_grid: &[f64]) -> Result<Vec<f64>> {
    if lambda_grid.is_empty() {
        return Err(GeoAvgError::Range("empty lambda grid".into()));
    }
    if !(gamma > 0.0) {
        return Err(GeoAvgError::Range(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let mut prev = f64::NEG_INFINITY;
    lambda_grid
        .iter()
        .map(|&l| {
            if !(l >= 0.0) || !(gamma * l < 1.0) {
                return Err(GeoAvgError::Range(format!(
                    "lambda = {l} violates 0 <= gamma * lambda < 1"
                )));
            }
            if l < prev {
                return Err(GeoAvgError::Range(
                    "lambda grid must be sorted ascending".into(),
                ));
            }
            prev = l;
            Ok(1.0 - gamma * l)
        })
        .collect()
}

/// Geometric averages for every `λ` in `lambda_grid`, from one pass over the
/// trace. Each entry equals `average(trace, geometric(1 − γλ))` bit for bit.
pub fn geometric_path(trace: &Iterates, gamma: f64, lambda_grid: &[f64]) -> Result<Vec<PathPoint>> {
    trace.last_index()?;
    let rhos = rhos_for_grid(gamma, lambda_grid)?;
    let mut accs: Vec<GeometricAccumulator> = rhos
        .iter()
        .map(|&rho| GeometricAccumulator::new(trace.dim(), rho, 0))
        .collect();
    for row in trace.rows() {
        for acc in &mut accs {
            acc.push(row);
        }
    }
    Ok(lambda_grid
        .iter()
        .zip(&accs)
        .map(|(&l, acc)| PathPoint {
            key: PathKey::Lambda(l),
            solution: acc.average(),
        })
        .collect())
}

/// Tail averages `mean(w_τ … w_n)` for every `τ` in `tau_grid`.
pub fn tail_path(trace: &Iterates, tau_grid: &[usize]) -> Result<Vec<PathPoint>> {
    let last = trace.last_index()?;
    tau_grid
        .iter()
        .map(|&tau| {
            if tau > last {
                return Err(GeoAvgError::IndexOutOfRange { index: tau, last });
            }
            Ok(PathPoint {
                key: PathKey::Tau(tau),
                solution: average(trace, &AveragingScheme::Tail { tau })?,
            })
        })
        .collect()
}

/// Scores every point on `validation` and selects the smallest mean squared
/// error. Ties go to the larger key, so the choice does not depend on the
/// order of `points`.
pub fn select(points: Vec<PathPoint>, validation: &Dataset, trace_id: &str) -> Result<PathResult> {
    if validation.is_empty() {
        return Err(GeoAvgError::EmptyDataset);
    }
    if points.is_empty() {
        return Err(GeoAvgError::Range("no path entries to select from".into()));
    }
    let entries = points
        .into_iter()
        .map(|p| {
            Ok(PathEntry {
                validation_error: validation.mean_squared_error(&p.solution)?,
                key: p.key,
                solution: p.solution,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut selected_index = 0;
    for (i, e) in entries.iter().enumerate().skip(1) {
        let best = &entries[selected_index];
        let better = e.validation_error < best.validation_error
            || (e.validation_error == best.validation_error && e.key.value() >= best.key.value());
        if better {
            selected_index = i;
        }
    }
    Ok(PathResult {
        entries,
        selected_index,
        trace_id: trace_id.to_string(),
    })
}

/// Same output as [`geometric_path`] (to rounding), computed per shard on
/// `workers` threads. Shards must partition the trace in order; the combined
/// result depends only on the shards, never on the worker count.
pub fn parallel_path(
    trace: &Iterates,
    shards: &[Range<usize>],
    gamma: f64,
    lambda_grid: &[f64],
    workers: usize,
) -> Result<Vec<PathPoint>> {
    let last = trace.last_index()?;
    let rhos = rhos_for_grid(gamma, lambda_grid)?;
    if shards.last().map(|r| r.end) != Some(last + 1) {
        return Err(GeoAvgError::Partition(format!(
            "shards must cover 0..{}, got {:?}",
            last + 1,
            shards.last()
        )));
    }
    if shards.iter().any(|r| r.is_empty()) {
        return Err(GeoAvgError::Partition("empty shard".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| GeoAvgError::Config(format!("thread pool: {e}")))?;
    let per_shard: Vec<Vec<PartialGeometricSum>> = pool.install(|| {
        shards
            .par_iter()
            .map(|range| {
                let mut accs: Vec<GeometricAccumulator> = rhos
                    .iter()
                    .map(|&rho| GeometricAccumulator::new(trace.dim(), rho, range.start))
                    .collect();
                for t in range.clone() {
                    let row = trace.row(t);
                    for acc in &mut accs {
                        acc.push(row);
                    }
                }
                accs.into_iter()
                    .map(GeometricAccumulator::into_partial)
                    .collect()
            })
            .collect()
    });
    lambda_grid
        .iter()
        .zip(&rhos)
        .enumerate()
        .map(|(j, (&l, &rho))| {
            let partials: Vec<PartialGeometricSum> =
                per_shard.iter().map(|s| s[j].clone()).collect();
            Ok(PathPoint {
                key: PathKey::Lambda(l),
                solution: parallel_geometric_combine(&partials, rho)?,
            })
        })
        .collect()
}

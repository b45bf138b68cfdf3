//! Box partitions of a sampled attractor, cell transition statistics, and
//! affine cell charts onto the model fiber `[0,1]^d`.

use crate::dynamics::{BoxRegion, MapSystem, Trajectory};
use crate::{Error, Result};
use std::collections::HashMap;
use std::io::{BufRead, Write};

/// A finite cover of the sampled attractor by half-open grid boxes of side
/// `mesh`, aligned to `origin`. Cells with no sample are dropped.
#[derive(Clone, Debug)]
pub struct BoxPartition {
    pub dim: usize,
    pub mesh: f64,
    pub origin: Vec<f64>,
    pub cells: Vec<BoxRegion>,
    pub sample_counts: Vec<usize>,
    index: HashMap<Vec<i64>, usize>,
}

impl BoxPartition {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn grid_key(&self, p: &[f64]) -> Vec<i64> {
        p.iter()
            .zip(&self.origin)
            .map(|(&x, &o)| ((x - o) / self.mesh).floor() as i64)
            .collect()
    }

    /// Cell containing `p`, if any. The grid key is the authoritative
    /// membership test: the stored float bounds can disagree with
    /// `floor((x - o) / mesh)` by one ulp at cell faces.
    pub fn locate(&self, p: &[f64]) -> Option<usize> {
        self.index.get(&self.grid_key(p)).copied()
    }

    pub fn chart(&self, cell: usize) -> CellChart {
        CellChart {
            cell,
            lo: self.cells[cell].lo.clone(),
            hi: self.cells[cell].hi.clone(),
        }
    }

    /// Cell bounds and sample counts, as JSON.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.dim,
            "mesh": self.mesh,
            "cells": self.cells.iter().zip(&self.sample_counts).map(|(c, &n)| {
                serde_json::json!({"lo": c.lo, "hi": c.hi, "samples": n})
            }).collect::<Vec<_>>(),
        })
    }
}

/// Build a grid partition of side `mesh` over the samples, aligned to
/// `origin` (usually the lower corner of the system's domain box).
pub fn build_box_partition(
    samples: &[Vec<f64>],
    mesh: f64,
    origin: &[f64],
) -> Result<BoxPartition> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    assert!(mesh > 0.0, "mesh must be positive");
    let dim = samples[0].len();
    let mut occupancy: HashMap<Vec<i64>, usize> = HashMap::new();
    for p in samples {
        let key: Vec<i64> = p
            .iter()
            .zip(origin)
            .map(|(&x, &o)| ((x - o) / mesh).floor() as i64)
            .collect();
        *occupancy.entry(key).or_insert(0) += 1;
    }
    let mut keys: Vec<Vec<i64>> = occupancy.keys().cloned().collect();
    keys.sort();
    let mut cells = Vec::with_capacity(keys.len());
    let mut sample_counts = Vec::with_capacity(keys.len());
    let mut index = HashMap::with_capacity(keys.len());
    for (i, key) in keys.into_iter().enumerate() {
        let lo: Vec<f64> = key
            .iter()
            .zip(origin)
            .map(|(&k, &o)| o + k as f64 * mesh)
            .collect();
        let hi: Vec<f64> = lo.iter().map(|&l| l + mesh).collect();
        sample_counts.push(occupancy[&key]);
        cells.push(BoxRegion::new(lo, hi));
        index.insert(key, i);
    }
    Ok(BoxPartition {
        dim,
        mesh,
        origin: origin.to_vec(),
        cells,
        sample_counts,
        index,
    })
}

/// Column-stochastic `m x m` transition matrix; column `j` is the estimated
/// transition probability vector out of cell `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    pub m: usize,
    data: Vec<f64>, // row-major: data[i * m + j] = P_{i,j}
}

impl TransitionMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let m = columns.len();
        let mut data = vec![0.0; m * m];
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), m);
            let sum: f64 = col.iter().sum();
            if col.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::NonStochasticColumn { column: j, sum });
            }
            for (i, &p) in col.iter().enumerate() {
                data[i * m + j] = p;
            }
        }
        Ok(TransitionMatrix { m, data })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.get(i, j)).collect()
    }

    /// Row indices with positive mass in column `j`, ascending.
    pub fn positive_rows(&self, j: usize) -> Vec<usize> {
        (0..self.m).filter(|&i| self.get(i, j) > 0.0).collect()
    }

    pub fn max_column_sum_error(&self) -> f64 {
        (0..self.m)
            .map(|j| (self.column(j).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Stationary distribution by power iteration.
    pub fn stationary(&self) -> Vec<f64> {
        let mut v = vec![1.0 / self.m as f64; self.m];
        for _ in 0..20_000 {
            let mut next = vec![0.0; self.m];
            for j in 0..self.m {
                let vj = v[j];
                if vj == 0.0 {
                    continue;
                }
                for i in 0..self.m {
                    next[i] += self.get(i, j) * vj;
                }
            }
            let diff: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = next;
            if diff < 1e-14 {
                break;
            }
        }
        v
    }

    /// CSV layout: row `i`, column `j` holds `P_{i,j}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.m {
            let row: Vec<String> = (0..self.m).map(|j| format!("{:.17e}", self.get(i, j))).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|e| Error::Csv(e.to_string()))?);
        }
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Csv("matrix is not square".into()));
        }
        let columns: Vec<Vec<f64>> = (0..m).map(|j| (0..m).map(|i| rows[i][j]).collect()).collect();
        TransitionMatrix::from_columns(columns)
    }
}

/// Estimate the transition matrix from consecutive trajectory points:
/// `P_{i,j}` is the fraction of visits to cell `j` whose successor lands in
/// cell `i`. Columns are stochastic by construction.
pub fn estimate_transition_matrix(
    traj: &Trajectory,
    partition: &BoxPartition,
) -> Result<TransitionMatrix> {
    let m = partition.len();
    let mut counts = vec![0u64; m * m];
    let mut visits = vec![0u64; m];
    let locate = |p: &Vec<f64>| {
        partition
            .locate(p)
            .ok_or_else(|| Error::PointOutsideCells { point: p.clone() })
    };
    let mut current = locate(&traj.points[0])?;
    for next_point in &traj.points[1..] {
        let next = locate(next_point)?;
        counts[next * m + current] += 1;
        visits[current] += 1;
        current = next;
    }
    if let Some(j) = visits.iter().position(|&v| v == 0) {
        return Err(Error::UnvisitedCell { cell: j });
    }
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            (0..m)
                .map(|i| counts[i * m + j] as f64 / visits[j] as f64)
                .collect()
        })
        .collect();
    TransitionMatrix::from_columns(columns)
}

/// Affine bijection between the model fiber `[0,1]^d` and a cell.
#[derive(Clone, Debug)]
pub struct CellChart {
    pub cell: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl CellChart {
    /// Cell point -> model fiber.
    pub fn to_model(&self, p: &[f64]) -> Result<Vec<f64>> {
        let u: Vec<f64> = p
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&x, (&lo, &hi))| (x - lo) / (hi - lo))
            .collect();
        if u.iter().any(|&c| !(-1e-9..=1.0 + 1e-9).contains(&c)) {
            return Err(Error::PointOutsideCell {
                cell: self.cell,
                point: p.to_vec(),
            });
        }
        Ok(u)
    }

    /// Model fiber -> cell point.
    pub fn to_cell(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.iter().any(|&c| !(-1e-9..=1.0 + 1e-9).contains(&c)) {
            return Err(Error::PointOutsideCell {
                cell: self.cell,
                point: u.to_vec(),
            });
        }
        Ok(u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&c, (&lo, &hi))| lo + c * (hi - lo))
            .collect())
    }
}

/// Apply the extended cell map `phi_{j -> i}`: the original map where its
/// image already lies in cell `i`, the coordinatewise clamp onto the closed
/// cell otherwise. The range is always within the closed cell `i`.
pub fn cell_map_apply(
    j: usize,
    i: usize,
    y: &[f64],
    system: &MapSystem,
    partition: &BoxPartition,
) -> Result<Vec<f64>> {
    if !partition.cells[j].contains_closed(y) {
        return Err(Error::PointOutsideCell {
            cell: j,
            point: y.to_vec(),
        });
    }
    let fy = system.apply(y);
    let target = &partition.cells[i];
    if target.contains(&fy) {
        Ok(fy)
    } else {
        Ok(target.clamp(&fy))
    }
}

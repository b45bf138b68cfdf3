//! The step-skew Markov product: a finite-state chain on partition cells
//! driving the extended cell maps on the fiber.

use crate::dynamics::MapSystem;
use crate::partition::{cell_map_apply, BoxPartition, TransitionMatrix};
use crate::rng::{Cursor, Stream};
use crate::stats::directed_hausdorff;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Joint state: current cell and fiber point (inside the closed cell).
#[derive(Clone, Debug, PartialEq)]
pub struct StepSkewState {
    pub cell: usize,
    pub y: Vec<f64>,
}

/// The sampled process: transition matrix, partition, cell maps, and a
/// seeded randomness stream. Identical seed implies identical paths.
pub struct StepSkewProcess<'a> {
    pub matrix: &'a TransitionMatrix,
    pub partition: &'a BoxPartition,
    pub system: &'a MapSystem,
    pub seed: u64,
}

/// Draw an index from a probability column by inverse CDF on one uniform,
/// scanning entries in increasing order.
pub fn inverse_cdf_draw(column: &[f64], u: f64) -> Result<usize> {
    let mut cum = 0.0;
    let mut last_positive = None;
    for (i, &p) in column.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = Some(i);
            if u < cum {
                return Ok(i);
            }
        }
    }
    // u landed in the rounding slack beyond the accumulated mass
    last_positive.ok_or(Error::ZeroColumn(0))
}

impl<'a> StepSkewProcess<'a> {
    pub fn new(
        matrix: &'a TransitionMatrix,
        partition: &'a BoxPartition,
        system: &'a MapSystem,
        seed: u64,
    ) -> Self {
        StepSkewProcess {
            matrix,
            partition,
            system,
            seed,
        }
    }

    fn stream(&self) -> Stream {
        Stream::new(self.seed)
    }

    /// Per-trial stream, derived so trials are independent and mergeable in
    /// any order.
    pub fn trial_cursor(&self, trial: u64) -> Cursor {
        Cursor::new(self.stream().derive(trial))
    }

    /// One step: draw the next cell from the current column, then apply the
    /// extended cell map to the fiber point.
    pub fn step(&self, state: &StepSkewState, cursor: &mut Cursor) -> Result<StepSkewState> {
        let column = self.matrix.column(state.cell);
        if column.iter().all(|&p| p == 0.0) {
            return Err(Error::ZeroColumn(state.cell));
        }
        let next = inverse_cdf_draw(&column, cursor.next_f64())?;
        let y = cell_map_apply(state.cell, next, &state.y, self.system, self.partition)?;
        Ok(StepSkewState { cell: next, y })
    }

    /// The one-step Markov transition function from `(j, y)`: finitely many
    /// atoms at the cell-map images, weighted by the column masses.
    pub fn markov_kernel(&self, y: &[f64], j: usize) -> Result<Vec<(Vec<f64>, f64)>> {
        if !self.partition.cells[j].contains_closed(y) {
            return Err(Error::PointOutsideCell {
                cell: j,
                point: y.to_vec(),
            });
        }
        self.matrix
            .positive_rows(j)
            .into_iter()
            .map(|i| {
                let image = cell_map_apply(j, i, y, self.system, self.partition)?;
                Ok((image, self.matrix.get(i, j)))
            })
            .collect()
    }

    /// Start state `(j, y)` with `y` drawn uniformly from the attractor
    /// samples, `j` its cell.
    pub fn start_from_cloud(&self, cloud: &[Vec<f64>], cursor: &mut Cursor) -> Result<StepSkewState> {
        let y = cloud[cursor.next_index(cloud.len())].clone();
        let cell = self
            .partition
            .locate(&y)
            .ok_or_else(|| Error::PointOutsideCells { point: y.clone() })?;
        Ok(StepSkewState { cell, y })
    }
}

/// Stationary-sampling diagnostics, including the Hausdorff comparison with
/// the attractor sample cloud.
#[derive(Clone, Debug, Serialize)]
pub struct StationaryEstimate {
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
    pub cell_marginal: Vec<f64>,
    /// max distance from a stationary sample to the attractor cloud
    pub max_dist_to_cloud: f64,
    /// max distance from a cloud point to the stationary samples
    pub max_dist_from_cloud: f64,
}

/// Sample the chain past a burn-in and report the empirical cell marginal
/// together with both directed Hausdorff distances to the attractor cloud.
pub fn estimate_stationary(
    process: &StepSkewProcess,
    cloud: &[Vec<f64>],
    burn: usize,
    n: usize,
    seed: u64,
) -> Result<StationaryEstimate> {
    assert!(n >= 1);
    let mut cursor = Cursor::new(Stream::new(seed));
    let mut state = process.start_from_cloud(cloud, &mut cursor)?;
    for _ in 0..burn {
        state = process.step(&state, &mut cursor)?;
    }
    let mut samples = Vec::with_capacity(n);
    let mut counts = vec![0u64; process.matrix.m];
    for _ in 0..n {
        state = process.step(&state, &mut cursor)?;
        counts[state.cell] += 1;
        samples.push(state.y.clone());
    }
    let cell_marginal = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let max_dist_to_cloud = directed_hausdorff(&samples, cloud);
    let max_dist_from_cloud = directed_hausdorff(cloud, &samples);
    Ok(StationaryEstimate {
        samples,
        cell_marginal,
        max_dist_to_cloud,
        max_dist_from_cloud,
    })
}

/// Result of the exact-orbit match diagnostic.
#[derive(Clone, Debug, Serialize)]
pub struct MatchReport {
    /// fraction of trials whose N-step path never clamped
    pub fraction: f64,
    /// expectation over start points of the product of the per-step masses
    /// of the true transition
    pub oracle: f64,
    pub trials: usize,
    pub steps: usize,
}

/// Fraction of N-step sample paths that used no clamping, so the path is an
/// exact orbit of the map; also returns the analytic expectation.
pub fn exact_match_fraction(
    process: &StepSkewProcess,
    cloud: &[Vec<f64>],
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<MatchReport> {
    assert!(trials >= 1);
    let stream = Stream::new(seed);
    let results: Vec<Result<(bool, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut cursor = Cursor::new(stream.derive(trial));
            let start = process.start_from_cloud(cloud, &mut cursor)?;
            // analytic clamp-free probability along the true orbit
            let mut oracle = 1.0;
            let mut truth = start.y.clone();
            let mut true_cell = start.cell;
            for _ in 0..steps {
                truth = process.system.apply(&truth);
                let next_cell = process
                    .partition
                    .locate(&truth)
                    .ok_or_else(|| Error::PointOutsideCells { point: truth.clone() })?;
                oracle *= process.matrix.get(next_cell, true_cell);
                true_cell = next_cell;
            }
            // sampled path
            let mut state = start;
            let mut clamp_free = true;
            for _ in 0..steps {
                let image = process.system.apply(&state.y);
                let next = process.step(&state, &mut cursor)?;
                if process.partition.locate(&image) != Some(next.cell) {
                    clamp_free = false;
                }
                state = next;
            }
            Ok((clamp_free, oracle))
        })
        .collect();
    let mut matches = 0usize;
    let mut oracle_sum = 0.0;
    for r in results {
        let (clamp_free, oracle) = r?;
        if clamp_free {
            matches += 1;
        }
        oracle_sum += oracle;
    }
    Ok(MatchReport {
        fraction: matches as f64 / trials as f64,
        oracle: oracle_sum / trials as f64,
        trials,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::iterate_map;
    use crate::partition::build_box_partition;
    use crate::stats::three_sigma;

    fn doubling_process_parts() -> (crate::dynamics::Trajectory, BoxPartition, TransitionMatrix) {
        let system = MapSystem::doubling();
        let traj = iterate_map(&system, &[0.1234567891], 200_000).unwrap();
        let partition = build_box_partition(&traj.points, 0.5, &[0.0]).unwrap();
        let matrix = estimate_transition_matrix_exact();
        (traj, partition, matrix)
    }

    // doubling on 2 half cells has the exact matrix [[1/2,1/2],[1/2,1/2]]
    fn estimate_transition_matrix_exact() -> TransitionMatrix {
        TransitionMatrix::from_columns(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn doubling_step_outcomes_are_the_kernel_atoms() {
        let system = MapSystem::doubling();
        let (traj, partition, matrix) = doubling_process_parts();
        drop(traj);
        let process = StepSkewProcess::new(&matrix, &partition, &system, 1);
        let state = StepSkewState {
            cell: 0,
            y: vec![0.2],
        };
        let mut seen = std::collections::BTreeSet::new();
        for trial in 0..100 {
            let mut cursor = process.trial_cursor(trial);
            let next = process.step(&state, &mut cursor).unwrap();
            seen.insert((next.cell, format!("{:.15}", next.y[0])));
        }
        let expected: std::collections::BTreeSet<_> = [
            (0usize, format!("{:.15}", 0.4)),
            (1usize, format!("{:.15}", 0.5)),
        ]
        .into_iter()
        .collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn step_frequencies_match_kernel_within_3_sigma() {
        let system = MapSystem::doubling();
        let (_, partition, matrix) = doubling_process_parts();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 2);
        let state = StepSkewState {
            cell: 0,
            y: vec![0.2],
        };
        let trials = 100_000u64;
        let mut to_zero = 0usize;
        for trial in 0..trials {
            let mut cursor = process.trial_cursor(trial);
            if process.step(&state, &mut cursor).unwrap().cell == 0 {
                to_zero += 1;
            }
        }
        let freq = to_zero as f64 / trials as f64;
        assert!((freq - 0.5).abs() < three_sigma(0.5, trials as usize));
    }

    #[test]
    fn kernel_masses_sum_to_one() {
        let system = MapSystem::doubling();
        let (_, partition, matrix) = doubling_process_parts();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 3);
        let kernel = process.markov_kernel(&[0.2], 0).unwrap();
        assert_eq!(kernel.len(), 2);
        let mass: f64 = kernel.iter().map(|(_, p)| p).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(kernel[0].0, vec![0.4]);
        assert_eq!(kernel[1].0, vec![0.5]);
    }

    #[test]
    fn permutation_matrix_kernel_is_single_atom() {
        let system = MapSystem::rotation(0.25);
        let traj = iterate_map(&system, &[0.05], 100_000).unwrap();
        let partition = build_box_partition(&traj.points, 0.25, &[0.0]).unwrap();
        let matrix = crate::partition::estimate_transition_matrix(&traj, &partition).unwrap();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 4);
        let kernel = process.markov_kernel(&[0.1], 0).unwrap();
        assert_eq!(kernel.len(), 1);
        assert_eq!(kernel[0].1, 1.0);
    }

    #[test]
    fn identical_seed_replays_identical_paths() {
        let system = MapSystem::doubling();
        let (traj, partition, matrix) = doubling_process_parts();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 5);
        let run = |seed| {
            let mut cursor = Cursor::from_seed(seed);
            let mut state = process.start_from_cloud(&traj.points, &mut cursor).unwrap();
            let mut path = Vec::new();
            for _ in 0..50 {
                state = process.step(&state, &mut cursor).unwrap();
                path.push(state.clone());
            }
            path
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn range_confinement_along_sampled_paths() {
        let system = MapSystem::logistic(4.0);
        let traj = iterate_map(&system, &[0.3], 100_000).unwrap();
        let partition = build_box_partition(&traj.points, 0.05, &[0.0]).unwrap();
        let matrix = crate::partition::estimate_transition_matrix(&traj, &partition).unwrap();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 6);
        let mut cursor = Cursor::from_seed(123);
        let mut state = process.start_from_cloud(&traj.points, &mut cursor).unwrap();
        for _ in 0..5_000 {
            state = process.step(&state, &mut cursor).unwrap();
            assert!(partition.cells[state.cell].contains_closed(&state.y));
        }
    }

    #[test]
    fn clamp_free_paths_are_exact_orbits() {
        let system = MapSystem::doubling();
        let (traj, partition, matrix) = doubling_process_parts();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 7);
        let mut found = 0;
        for trial in 0..200u64 {
            let mut cursor = process.trial_cursor(trial);
            let start = process.start_from_cloud(&traj.points, &mut cursor).unwrap();
            let mut state = start.clone();
            let mut clamp_free = true;
            for _ in 0..4 {
                let image = system.apply(&state.y);
                state = process.step(&state, &mut cursor).unwrap();
                if state.y != image {
                    clamp_free = false;
                    break;
                }
            }
            if clamp_free {
                found += 1;
                let truth = iterate_map(&system, &start.y, 4).unwrap();
                assert!((state.y[0] - truth.points[4][0]).abs() <= 1e-12);
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn doubling_match_fraction_near_one_sixteenth() {
        let system = MapSystem::doubling();
        let (traj, partition, matrix) = doubling_process_parts();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 8);
        let report = exact_match_fraction(&process, &traj.points, 4, 100_000, 8).unwrap();
        assert!((report.oracle - 0.0625).abs() < 1e-12);
        assert!((report.fraction - 0.0625).abs() < three_sigma(0.0625, report.trials));
    }

    #[test]
    fn identity_match_fraction_is_one() {
        let system = MapSystem::identity();
        let points: Vec<Vec<f64>> = (0..1000).map(|k| vec![k as f64 / 1000.0]).collect();
        let partition = build_box_partition(&points, 0.25, &[0.0]).unwrap();
        let m = partition.len();
        let columns: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let matrix = TransitionMatrix::from_columns(columns).unwrap();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 9);
        let report = exact_match_fraction(&process, &points, 5, 500, 9).unwrap();
        assert_eq!(report.fraction, 1.0);
        assert_eq!(report.oracle, 1.0);
    }

    #[test]
    fn doubling_stationary_marginal_is_half_half() {
        let system = MapSystem::doubling();
        let (traj, partition, matrix) = doubling_process_parts();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 10);
        let est = estimate_stationary(&process, &traj.points, 100, 100_000, 10).unwrap();
        for &p in &est.cell_marginal {
            assert!((p - 0.5).abs() < three_sigma(0.5, 100_000));
        }
    }

    #[test]
    fn identity_stationary_sticks_to_start() {
        let system = MapSystem::identity();
        let points = vec![vec![0.3]];
        let partition = build_box_partition(&points, 0.25, &[0.0]).unwrap();
        let matrix = TransitionMatrix::from_columns(vec![vec![1.0]]).unwrap();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 11);
        let est = estimate_stationary(&process, &points, 10, 100, 11).unwrap();
        assert!(est.samples.iter().all(|s| s == &vec![0.3]));
        assert_eq!(est.max_dist_to_cloud, 0.0);
        assert_eq!(est.max_dist_from_cloud, 0.0);
    }
}

//! Path-space statistics: cylinder conditionals, the Markov product law,
//! the convergence-in-law comparison, shadowing against exact orbits, and
//! the symbolic metric.

use crate::dynamics::MapSystem;
use crate::network::OrbitRecord;
use crate::partition::{BoxPartition, TransitionMatrix};
use crate::stepskew::{StepSkewProcess, StepSkewState};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

/// Where a path sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PathSource {
    Stepskew,
    Pipeflow,
}

/// One sampled symbol-and-fiber path `(s_0, y_0) .. (s_N, y_N)` with the
/// fiber points in ambient coordinates, `y_n` in the closure of cell `s_n`.
#[derive(Clone, Debug, Serialize)]
pub struct PathSample {
    pub source: PathSource,
    pub seed: u64,
    pub steps: Vec<(usize, Vec<f64>)>,
}

impl PathSample {
    pub fn word(&self) -> Vec<usize> {
        self.steps.iter().map(|(s, _)| *s).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn validate_word(m: usize, word: &[usize]) -> Result<()> {
    if word.is_empty() {
        return Err(Error::InvalidConfig("empty cylinder word".into()));
    }
    for &s in word {
        if s >= m {
            return Err(Error::SymbolOutOfRange { symbol: s, m });
        }
    }
    Ok(())
}

/// Conditional Markov mass of the cylinder given its first symbol:
/// the product of the column entries along the word. A single-symbol word
/// is the empty product, 1.
pub fn markov_cylinder_conditional(matrix: &TransitionMatrix, word: &[usize]) -> Result<f64> {
    validate_word(matrix.m, word)?;
    Ok(word
        .windows(2)
        .map(|w| matrix.get(w[1], w[0]))
        .product())
}

/// Empirical conditional mass: matching paths over paths sharing the first
/// symbol. Errors when no path starts with the word's first symbol.
pub fn empirical_cylinder_conditional(paths: &[PathSample], word: &[usize]) -> Result<f64> {
    if word.is_empty() {
        return Err(Error::InvalidConfig("empty cylinder word".into()));
    }
    let mut base = 0usize;
    let mut hits = 0usize;
    for p in paths {
        let w = p.word();
        if w.first() == Some(&word[0]) {
            base += 1;
            if w.len() >= word.len() && w[..word.len()] == *word {
                hits += 1;
            }
        }
    }
    if base == 0 {
        return Err(Error::UndefinedConditional(word[0]));
    }
    Ok(hits as f64 / base as f64)
}

/// Fraction of paths whose symbols at `offset .. offset + word.len()`
/// equal `word`; the unconditioned mass of a shifted cylinder occurrence.
pub fn empirical_word_mass(paths: &[PathSample], word: &[usize], offset: usize) -> f64 {
    let hits = paths
        .iter()
        .filter(|p| {
            let w = p.word();
            w.len() >= offset + word.len() && w[offset..offset + word.len()] == *word
        })
        .count();
    hits as f64 / paths.len() as f64
}

/// One row of the per-cylinder comparison table.
#[derive(Clone, Debug, Serialize)]
pub struct CylinderRow {
    pub word: Vec<usize>,
    pub markov: f64,
    pub empirical: f64,
    pub deviation: f64,
    /// paths sharing the word's first symbol
    pub count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct LawComparison {
    pub max_deviation: f64,
    pub rows: Vec<CylinderRow>,
}

impl LawComparison {
    /// CSV table: `word, markov, empirical, deviation, count`, symbols
    /// joined by `-`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "word,markov,empirical,deviation,count")?;
        for row in &self.rows {
            let word: Vec<String> = row.word.iter().map(|s| s.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{}",
                word.join("-"),
                row.markov,
                row.empirical,
                row.deviation,
                row.count
            )?;
        }
        Ok(())
    }
}

/// Compare empirical conditionals with the Markov product over every
/// cylinder word of length 2 to `max_len` that has positive Markov mass
/// and an observed first symbol. Zero-mass cylinders are skipped.
pub fn law_comparison(
    paths: &[PathSample],
    matrix: &TransitionMatrix,
    max_len: usize,
) -> Result<LawComparison> {
    if paths.is_empty() {
        return Err(Error::EmptySamples);
    }
    // prefix counts of every path, one trie level per word length
    let mut prefix_counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for p in paths {
        let w = p.word();
        for len in 1..=max_len.min(w.len()) {
            *prefix_counts.entry(w[..len].to_vec()).or_insert(0) += 1;
        }
    }
    let mut rows = Vec::new();
    for s0 in 0..matrix.m {
        let base = match prefix_counts.get(&vec![s0]) {
            Some(&c) => c,
            None => continue,
        };
        let mut stack = vec![vec![s0]];
        while let Some(word) = stack.pop() {
            if word.len() >= 2 {
                let markov = markov_cylinder_conditional(matrix, &word)?;
                let empirical =
                    prefix_counts.get(&word).copied().unwrap_or(0) as f64 / base as f64;
                rows.push(CylinderRow {
                    deviation: (empirical - markov).abs(),
                    word: word.clone(),
                    markov,
                    empirical,
                    count: base,
                });
            }
            if word.len() < max_len {
                let j = *word.last().unwrap();
                for i in matrix.positive_rows(j) {
                    let mut next = word.clone();
                    next.push(i);
                    stack.push(next);
                }
            }
        }
    }
    rows.sort_by(|a, b| a.word.cmp(&b.word));
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(LawComparison {
        max_deviation,
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ShadowingReport {
    pub fraction: f64,
    /// expected clamp-free product mass, averaged over the orbit starts
    pub oracle: f64,
    pub orbits: usize,
    pub delta: f64,
    pub steps: usize,
}

/// Fraction of sampled paths staying within `delta` of the exact orbit of
/// their own start for `steps` iterates, against the product-mass oracle:
/// a clamp-free path reproduces the exact orbit, and the chance of staying
/// clamp-free is the product of the visited column entries.
pub fn shadowing_fraction(
    orbits: &[PathSample],
    system: &MapSystem,
    partition: &BoxPartition,
    matrix: &TransitionMatrix,
    delta: f64,
    steps: usize,
) -> Result<ShadowingReport> {
    if orbits.is_empty() {
        return Err(Error::EmptySamples);
    }
    assert!(delta > 0.0);
    let per_orbit: Vec<(bool, f64)> = orbits
        .par_iter()
        .map(|path| {
            let mut exact = path.steps[0].1.clone();
            let mut shadowed = true;
            let mut product = 1.0;
            let mut prev_cell = partition.locate(&exact);
            let n = steps.min(path.steps.len() - 1);
            for (s_n, y_n) in path.steps.iter().skip(1).take(n) {
                exact = system.apply(&exact);
                let dist = y_n
                    .iter()
                    .zip(&exact)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if dist >= delta {
                    shadowed = false;
                }
                let cell = partition.locate(&exact);
                product *= match (prev_cell, cell) {
                    (Some(j), Some(i)) => matrix.get(i, j),
                    _ => 0.0,
                };
                prev_cell = cell;
                let _ = s_n;
            }
            (shadowed, product)
        })
        .collect();
    let hits = per_orbit.iter().filter(|(s, _)| *s).count();
    let oracle = per_orbit.iter().map(|(_, p)| p).sum::<f64>() / orbits.len() as f64;
    Ok(ShadowingReport {
        fraction: hits as f64 / orbits.len() as f64,
        oracle,
        orbits: orbits.len(),
        delta,
        steps,
    })
}

/// Symbolic metric `sum_n 2^-n [p_n != q_n]` on equal-length words.
pub fn path_metric(p: &[usize], q: &[usize]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    Ok(p.iter()
        .zip(q)
        .enumerate()
        .map(|(n, (a, b))| if a != b { (0.5f64).powi(n as i32) } else { 0.0 })
        .sum())
}

/// Sample step-skew paths from a common start; per-trial random streams,
/// deterministic merge order.
pub fn stepskew_paths(
    process: &StepSkewProcess,
    start: &StepSkewState,
    len: usize,
    trials: usize,
) -> Result<Vec<PathSample>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut cursor = process.trial_cursor(trial);
            let mut steps = Vec::with_capacity(len + 1);
            let mut state = start.clone();
            steps.push((state.cell, state.y.clone()));
            for _ in 0..len {
                state = process.step(&state, &mut cursor)?;
                steps.push((state.cell, state.y.clone()));
            }
            Ok(PathSample {
                source: PathSource::Stepskew,
                seed: trial,
                steps,
            })
        })
        .collect()
}

/// Convert a pipe-flow orbit to a path sample, mapping the model-fiber
/// points back to ambient coordinates through the cell charts.
pub fn path_from_orbit(partition: &BoxPartition, record: &OrbitRecord) -> Result<PathSample> {
    let mut steps = Vec::with_capacity(record.steps.len() + 1);
    let start = partition
        .chart(record.start_cell)
        .to_cell(&record.start_fiber)?;
    steps.push((record.start_cell, start));
    for s in &record.steps {
        steps.push((s.cell, partition.chart(s.cell).to_cell(&s.fiber)?));
    }
    Ok(PathSample {
        source: PathSource::Pipeflow,
        seed: record.seed,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::build_box_partition;
    use crate::stats::three_sigma;

    fn half_half() -> TransitionMatrix {
        TransitionMatrix::from_columns(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    fn swap() -> TransitionMatrix {
        TransitionMatrix::from_columns(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn sample(word: &[usize]) -> PathSample {
        PathSample {
            source: PathSource::Stepskew,
            seed: 0,
            steps: word.iter().map(|&s| (s, vec![0.0])).collect(),
        }
    }

    #[test]
    fn markov_conditional_examples() {
        let p = half_half();
        assert_eq!(markov_cylinder_conditional(&p, &[0, 1, 0]).unwrap(), 0.25);
        assert_eq!(markov_cylinder_conditional(&p, &[1]).unwrap(), 1.0);
        let s = swap();
        assert_eq!(markov_cylinder_conditional(&s, &[0, 1, 0]).unwrap(), 1.0);
        assert_eq!(markov_cylinder_conditional(&s, &[0, 0]).unwrap(), 0.0);
        assert!(matches!(
            markov_cylinder_conditional(&p, &[0, 2]),
            Err(Error::SymbolOutOfRange { .. })
        ));
        assert!(markov_cylinder_conditional(&p, &[]).is_err());
    }

    #[test]
    fn empirical_conditional_edge_cases() {
        let paths = vec![sample(&[0, 1, 0]), sample(&[0, 1, 0]), sample(&[1, 0, 1])];
        assert_eq!(
            empirical_cylinder_conditional(&paths, &[0, 1, 0]).unwrap(),
            1.0
        );
        assert_eq!(
            empirical_cylinder_conditional(&paths, &[0, 0]).unwrap(),
            0.0
        );
        let only_zero = vec![sample(&[0, 0])];
        assert!(matches!(
            empirical_cylinder_conditional(&only_zero, &[1, 0]),
            Err(Error::UndefinedConditional(1))
        ));
    }

    fn doubling_paths(len: usize, trials: usize) -> (TransitionMatrix, Vec<PathSample>) {
        let system = MapSystem::doubling();
        let points: Vec<Vec<f64>> = (0..1000).map(|k| vec![k as f64 / 1000.0]).collect();
        let partition = build_box_partition(&points, 0.5, &[0.0]).unwrap();
        let matrix = half_half();
        let process = StepSkewProcess::new(&matrix, &partition, &system, 77);
        let start = StepSkewState {
            cell: 0,
            y: vec![0.2],
        };
        let paths = stepskew_paths(&process, &start, len, trials).unwrap();
        (matrix, paths)
    }

    #[test]
    fn sampler_conditionals_match_markov_product() {
        let (matrix, paths) = doubling_paths(3, 100_000);
        let word = [0, 1, 0];
        let markov = markov_cylinder_conditional(&matrix, &word).unwrap();
        let empirical = empirical_cylinder_conditional(&paths, &word).unwrap();
        assert!((empirical - markov).abs() < three_sigma(markov, paths.len()));
    }

    #[test]
    fn law_comparison_self_consistency_per_cylinder() {
        let (matrix, paths) = doubling_paths(4, 100_000);
        let table = law_comparison(&paths, &matrix, 4).unwrap();
        assert!(!table.rows.is_empty());
        for row in &table.rows {
            assert!(
                row.deviation < three_sigma(row.markov, row.count),
                "{row:?}"
            );
        }
    }

    #[test]
    fn law_comparison_skips_zero_mass_words() {
        let paths = vec![sample(&[0, 1, 0]), sample(&[1, 0, 1])];
        let table = law_comparison(&paths, &swap(), 3).unwrap();
        assert_eq!(table.max_deviation, 0.0);
        assert!(table
            .rows
            .iter()
            .all(|r| r.markov > 0.0 && r.empirical == 1.0));
    }

    #[test]
    fn law_comparison_errors_on_empty_paths() {
        assert!(matches!(
            law_comparison(&[], &half_half(), 2),
            Err(Error::EmptySamples)
        ));
    }

    #[test]
    fn longer_words_dominate_the_max_deviation() {
        // the length <= l table is a subset of the length <= l+1 table
        let (matrix, paths) = doubling_paths(4, 20_000);
        let short = law_comparison(&paths, &matrix, 3).unwrap();
        let long = law_comparison(&paths, &matrix, 4).unwrap();
        assert!(short.max_deviation <= long.max_deviation + 1e-15);
        assert!(short.rows.len() < long.rows.len());
    }

    #[test]
    fn shifted_word_masses_agree_for_stationary_starts() {
        // both cells carry stationary mass 1/2; start half the trials in
        // each by pooling two samplers
        let system = MapSystem::doubling();
        let points: Vec<Vec<f64>> = (0..1000).map(|k| vec![k as f64 / 1000.0]).collect();
        let partition = build_box_partition(&points, 0.5, &[0.0]).unwrap();
        let matrix = half_half();
        let mut paths = Vec::new();
        for (cell, y) in [(0usize, 0.2f64), (1, 0.7)] {
            let process = StepSkewProcess::new(&matrix, &partition, &system, 100 + cell as u64);
            let start = StepSkewState { cell, y: vec![y] };
            paths.extend(stepskew_paths(&process, &start, 4, 50_000).unwrap());
        }
        let word = [0, 1];
        let at0 = empirical_word_mass(&paths, &word, 0);
        let at1 = empirical_word_mass(&paths, &word, 1);
        assert!((at0 - at1).abs() < 2.0 * three_sigma(0.25, paths.len()));
    }

    #[test]
    fn metric_examples() {
        assert_eq!(path_metric(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(path_metric(&[0, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        // all-different partial sums approach 2 from below
        let n = 30;
        let p: Vec<usize> = vec![0; n];
        let q: Vec<usize> = vec![1; n];
        let d = path_metric(&p, &q).unwrap();
        assert!(d < 2.0 && (2.0 - d) < 1e-8);
        assert!(matches!(
            path_metric(&[1], &[1, 2]),
            Err(Error::LengthMismatch(..))
        ));
    }

    #[test]
    fn metric_axioms_on_small_alphabet() {
        let words: Vec<Vec<usize>> = (0..8u32)
            .map(|b| (0..3).map(|n| ((b >> n) & 1) as usize).collect())
            .collect();
        for p in &words {
            assert_eq!(path_metric(p, p).unwrap(), 0.0);
            for q in &words {
                let pq = path_metric(p, q).unwrap();
                assert_eq!(pq, path_metric(q, p).unwrap());
                if p != q {
                    assert!(pq > 0.0);
                }
                for r in &words {
                    assert!(pq <= path_metric(p, r).unwrap() + path_metric(r, q).unwrap() + 1e-15);
                }
            }
        }
    }

    #[test]
    fn exact_paths_shadow_with_fraction_one() {
        // paths that are exact orbits of the identity map
        let system = MapSystem::identity();
        let points: Vec<Vec<f64>> = (0..100).map(|k| vec![k as f64 / 100.0]).collect();
        let partition = build_box_partition(&points, 0.25, &[0.0]).unwrap();
        let m = partition.len();
        let columns: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let matrix = TransitionMatrix::from_columns(columns).unwrap();
        let paths: Vec<PathSample> = (0..50)
            .map(|k| {
                let y = vec![k as f64 / 50.0 * 0.99];
                let cell = partition.locate(&y).unwrap();
                PathSample {
                    source: PathSource::Pipeflow,
                    seed: k,
                    steps: vec![(cell, y.clone()); 6],
                }
            })
            .collect();
        let report = shadowing_fraction(&paths, &system, &partition, &matrix, 0.01, 5).unwrap();
        assert_eq!(report.fraction, 1.0);
        assert_eq!(report.oracle, 1.0);
    }

    #[test]
    fn doubling_two_cell_control_matches_product_oracle() {
        let (matrix, paths) = doubling_paths(4, 100_000);
        let system = MapSystem::doubling();
        let points: Vec<Vec<f64>> = (0..1000).map(|k| vec![k as f64 / 1000.0]).collect();
        let partition = build_box_partition(&points, 0.5, &[0.0]).unwrap();
        // the first clamp sits at least 0.1 from this start's exact orbit,
        // so below that tolerance shadowing means every sampled cell matched
        let report =
            shadowing_fraction(&paths, &system, &partition, &matrix, 0.05, 4).unwrap();
        assert!((report.oracle - 0.0625).abs() < 1e-12);
        assert!((report.fraction - 0.0625).abs() < three_sigma(0.0625, report.orbits));
    }

    #[test]
    fn comparison_csv_lists_each_row() {
        let paths = vec![sample(&[0, 1, 0]), sample(&[1, 0, 1])];
        let table = law_comparison(&paths, &swap(), 2).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), table.rows.len() + 1);
        assert!(text.contains("0-1,1,1,0,1"));
    }
}

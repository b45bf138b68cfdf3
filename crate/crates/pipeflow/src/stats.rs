//! Small statistical helpers shared by the diagnostics.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Three-sigma binomial band for a proportion `p` estimated from `n` draws.
pub fn three_sigma(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Pearson chi-squared independence statistic for a contingency table
/// (row-major, `rows x cols`), plus its degrees of freedom.
pub fn chi_squared_independence(table: &[Vec<u64>]) -> (f64, usize) {
    let rows = table.len();
    let cols = table[0].len();
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols)
        .map(|c| table.iter().map(|r| r[c] as f64).sum())
        .collect();
    let total: f64 = row_sums.iter().sum();
    let mut stat = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let expected = row_sums[i] * col_sums[j] / total;
            if expected > 0.0 {
                let diff = table[i][j] as f64 - expected;
                stat += diff * diff / expected;
            }
        }
    }
    (stat, (rows - 1) * (cols - 1))
}

/// Quantile of the chi-squared distribution with `df` degrees of freedom.
pub fn chi_squared_quantile(df: usize, p: f64) -> f64 {
    ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

/// Euclidean distance.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Directed Hausdorff distance: max over `from` of the distance to the
/// nearest point of `to`. Sorted binary search in 1-d, linear scan otherwise.
pub fn directed_hausdorff(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    assert!(!from.is_empty() && !to.is_empty());
    if to[0].len() == 1 {
        let mut sorted: Vec<f64> = to.iter().map(|p| p[0]).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        from.iter()
            .map(|p| nearest_1d(&sorted, p[0]))
            .fold(0.0, f64::max)
    } else {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| euclidean(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

fn nearest_1d(sorted: &[f64], x: f64) -> f64 {
    let idx = sorted.partition_point(|&v| v < x);
    let mut best = f64::INFINITY;
    if idx < sorted.len() {
        best = best.min((sorted[idx] - x).abs());
    }
    if idx > 0 {
        best = best.min((x - sorted[idx - 1]).abs());
    }
    best
}

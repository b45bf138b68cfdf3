//! Analytic transition-matrix oracles, derived from the maps' geometry
//! rather than from trajectory counting.

use pipeflow::partition::TransitionMatrix;

/// Exact doubling-map matrix on `m` equal cells of `[0,1)` under the
/// uniform invariant measure: cell `j` maps onto cells `2j` and `2j+1`
/// (mod `m`), half its mass each. Requires even `m`.
pub fn doubling_matrix(m: usize) -> TransitionMatrix {
    assert!(m >= 2 && m % 2 == 0);
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut col = vec![0.0; m];
            col[(2 * j) % m] += 0.5;
            col[(2 * j + 1) % m] += 0.5;
            col
        })
        .collect();
    TransitionMatrix::from_columns(columns).unwrap()
}

/// Exact rotation matrix on `m` equal cells: the image of cell `j`
/// straddles cells `j + floor(alpha m)` and its successor (mod `m`), with
/// masses given by the fractional part of `alpha m`. Interval arithmetic
/// on exact cell endpoints; valid when `alpha m` is not an integer.
pub fn rotation_matrix(m: usize, alpha: f64) -> TransitionMatrix {
    let shift = alpha * m as f64;
    let whole = shift.floor() as usize;
    let phi = shift - shift.floor();
    assert!(phi > 1e-9 && phi < 1.0 - 1e-9);
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut col = vec![0.0; m];
            col[(j + whole) % m] += 1.0 - phi;
            col[(j + whole + 1) % m] += phi;
            col
        })
        .collect();
    TransitionMatrix::from_columns(columns).unwrap()
}

#[allow(dead_code)]
pub fn golden_ratio_alpha() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

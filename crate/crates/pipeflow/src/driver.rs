//! The deterministic mixing source: a constant-ceiling suspension flow over
//! a full shift on block symbols, with a sector readout whose windowed
//! average actuates the junction switches.

use crate::rng::Stream;
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::TAU;

/// Suspension flow over a fair-coin full shift. The base alphabet consists
/// of `2^block_len` block symbols; the tape is a pure function of
/// `(seed, index)`, so any cell is addressable in O(1) and replay is exact.
#[derive(Clone, Debug)]
pub struct SuspensionDriver {
    pub block_len: u32,
    pub ceiling: f64,
    tape: Stream,
}

/// Flow state: tape index plus fiber position in `[0, ceiling)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriverState {
    pub index: u64,
    pub pos: f64,
}

impl SuspensionDriver {
    pub fn new(block_len: u32, ceiling: f64, seed: u64) -> Self {
        assert!(block_len >= 1 && block_len <= 16);
        assert!(ceiling > 0.0);
        SuspensionDriver {
            block_len,
            ceiling,
            tape: Stream::new(seed),
        }
    }

    pub fn alphabet_size(&self) -> usize {
        1usize << self.block_len
    }

    /// Block symbol under tape cell `index`.
    pub fn symbol(&self, index: u64) -> usize {
        (self.tape.word(index) & ((1u64 << self.block_len) - 1)) as usize
    }

    /// Random initial state: fresh fiber position, tape index 0. Tapes are
    /// randomized by deriving the driver seed per trial.
    pub fn with_seed(&self, seed: u64) -> Self {
        SuspensionDriver {
            block_len: self.block_len,
            ceiling: self.ceiling,
            tape: Stream::new(seed),
        }
    }

    /// Advance by `dt`, crossing `floor((pos + dt) / ceiling)` ceilings and
    /// shifting the tape index by one per crossing.
    pub fn advance(&self, state: &DriverState, dt: f64) -> Result<DriverState> {
        if dt < 0.0 {
            return Err(Error::NegativeDuration(dt));
        }
        let total = state.pos + dt;
        let crossings = (total / self.ceiling).floor();
        let mut pos = total - crossings * self.ceiling;
        // guard the edge where division rounds the quotient down
        if pos >= self.ceiling {
            pos -= self.ceiling;
        }
        Ok(DriverState {
            index: state.index + crossings as u64,
            pos,
        })
    }

    /// Time until the next ceiling crossing.
    pub fn time_to_crossing(&self, state: &DriverState) -> f64 {
        self.ceiling - state.pos
    }
}

/// Sector readout: a group map from block symbols onto `k` branch angles,
/// built so the dyadic group masses track a target probability vector.
#[derive(Clone, Debug)]
pub struct SectorReadout {
    pub branches: usize,
    pub target: Vec<f64>,
    /// group (0-based) of each block symbol, lexicographic block order
    pub groups: Vec<u16>,
}

impl SectorReadout {
    pub fn build(target: &[f64], block_len: u32) -> Result<Self> {
        let groups = assign_groups(target, block_len)?;
        Ok(SectorReadout {
            branches: target.len(),
            target: target.to_vec(),
            groups,
        })
    }

    /// Branch angle for group `g`: `g * 2 pi / k` (0-based).
    pub fn angle(&self, group: usize) -> f64 {
        group as f64 * TAU / self.branches as f64
    }

    pub fn group_of(&self, symbol: usize) -> usize {
        self.groups[symbol] as usize
    }

    /// Exact dyadic mass of each group.
    pub fn dyadic_masses(&self) -> Vec<f64> {
        let total = self.groups.len() as f64;
        let mut counts = vec![0usize; self.branches];
        for &g in &self.groups {
            counts[g as usize] += 1;
        }
        counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Largest quota error `max_i |#g^{-1}(i)/2^L - target_i|`.
    pub fn max_quota_error(&self) -> f64 {
        self.dyadic_masses()
            .iter()
            .zip(&self.target)
            .map(|(d, t)| (d - t).abs())
            .fold(0.0, f64::max)
    }
}

/// Largest-remainder assignment of `2^L` blocks to `k` groups in
/// lexicographic block order; the quota error is at most `2^-L` per group.
pub fn assign_groups(target: &[f64], block_len: u32) -> Result<Vec<u16>> {
    let blocks = 1usize << block_len;
    let k = target.len();
    if k > blocks {
        return Err(Error::TooManyGroups { groups: k, blocks });
    }
    let sum: f64 = target.iter().sum();
    if target.iter().any(|&b| b < 0.0) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidProbabilityVector(format!(
            "entries must be nonnegative and sum to 1 (sum = {sum})"
        )));
    }
    let mut quotas: Vec<usize> = Vec::with_capacity(k);
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(k);
    for (i, &b) in target.iter().enumerate() {
        let exact = b * blocks as f64;
        let floor = exact.floor();
        quotas.push(floor as usize);
        remainders.push((i, exact - floor));
    }
    let assigned: usize = quotas.iter().sum();
    // top up the largest remainders; ties resolve to the lower index
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(i, _) in remainders.iter().take(blocks - assigned) {
        quotas[i] += 1;
    }
    let mut groups = Vec::with_capacity(blocks);
    for (i, &q) in quotas.iter().enumerate() {
        groups.extend(std::iter::repeat(i as u16).take(q));
    }
    debug_assert_eq!(groups.len(), blocks);
    Ok(groups)
}

/// Sector-center readout of the current block symbol; constant along the
/// fiber between ceiling crossings.
pub fn zeta_readout(
    driver: &SuspensionDriver,
    state: &DriverState,
    readout: &SectorReadout,
) -> f64 {
    readout.angle(readout.group_of(driver.symbol(state.index)))
}

/// Weight profiles for the windowed average, given by their CDF on [0,1]
/// so segment masses are exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum WindowWeight {
    Uniform,
    /// normalized bump 6 x (1 - x), vanishing at both window edges
    Bump,
}

impl WindowWeight {
    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            WindowWeight::Uniform => x,
            WindowWeight::Bump => x * x * (3.0 - 2.0 * x),
        }
    }
}

/// Weighted average of the unit-vector readout over `[0, horizon]`,
/// computed in closed form: the readout is piecewise constant in time, so
/// the integral is a finite sum of weighted unit vectors. `|result| <= 1`.
pub fn zeta_bar(
    driver: &SuspensionDriver,
    start: &DriverState,
    horizon: f64,
    weight: WindowWeight,
    readout: &SectorReadout,
) -> Complex64 {
    assert!(horizon > 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut state = *start;
    let mut elapsed = 0.0;
    let mut cdf_left = 0.0;
    while elapsed < horizon {
        let seg = driver.time_to_crossing(&state).min(horizon - elapsed);
        let cdf_right = weight.cdf((elapsed + seg) / horizon);
        let mass = cdf_right - cdf_left;
        let theta = zeta_readout(driver, &state, readout);
        sum += mass * Complex64::new(theta.cos(), theta.sin());
        cdf_left = cdf_right;
        elapsed += seg;
        state = driver
            .advance(&state, seg)
            .expect("nonnegative segment length");
        // force the crossing when the segment ended exactly at the ceiling
        if driver.time_to_crossing(&state) <= 0.0 {
            state = DriverState {
                index: state.index + 1,
                pos: 0.0,
            };
        }
    }
    sum
}

/// Result of the separated-events independence battery.
#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    pub separation: f64,
    pub sequence_len: usize,
    pub trials: usize,
    /// max over tested label sequences of |empirical joint - product mass|
    pub max_deviation: f64,
}

/// Sample group labels at times `T, 2T, ..., NT` from random initial
/// states and compare every observed label sequence's empirical mass with
/// the product of the group masses.
pub fn separated_events_test(
    driver: &SuspensionDriver,
    readout: &SectorReadout,
    separation: f64,
    sequence_len: usize,
    trials: usize,
    seed: u64,
) -> Result<SeparationReport> {
    if separation < 0.0 {
        return Err(Error::NegativeDuration(separation));
    }
    let stream = Stream::new(seed);
    let sequences: Vec<Vec<usize>> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let keys = stream.derive(trial);
            let tape = driver.with_seed(keys.word(0));
            let mut state = DriverState {
                index: 0,
                pos: keys.uniform(1) * driver.ceiling,
            };
            let mut labels = Vec::with_capacity(sequence_len);
            for _ in 0..sequence_len {
                state = tape.advance(&state, separation).expect("nonnegative");
                labels.push(readout.group_of(tape.symbol(state.index)));
            }
            labels
        })
        .collect();
    let masses = readout.dyadic_masses();
    let mut counts: std::collections::HashMap<Vec<usize>, usize> = std::collections::HashMap::new();
    for s in &sequences {
        *counts.entry(s.clone()).or_insert(0) += 1;
    }
    let mut max_deviation = 0.0f64;
    for (labels, count) in &counts {
        let empirical = *count as f64 / trials as f64;
        let product: f64 = labels.iter().map(|&g| masses[g]).product();
        max_deviation = max_deviation.max((empirical - product).abs());
    }
    Ok(SeparationReport {
        separation,
        sequence_len,
        trials,
        max_deviation,
    })
}

/// An event on the base alphabet: a set of block symbols.
#[derive(Clone, Debug)]
pub struct BlockEvent {
    pub members: Vec<bool>,
}

impl BlockEvent {
    pub fn from_predicate(alphabet: usize, pred: impl Fn(usize) -> bool) -> Self {
        BlockEvent {
            members: (0..alphabet).map(pred).collect(),
        }
    }

    pub fn mass(&self) -> f64 {
        self.members.iter().filter(|&&b| b).count() as f64 / self.members.len() as f64
    }

    pub fn contains(&self, symbol: usize) -> bool {
        self.members[symbol]
    }
}

/// Empirical joint mass of `x in A` and `flow^lag(x) in B` versus the
/// product of the event masses.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationEstimate {
    pub joint: f64,
    pub product: f64,
    pub samples: usize,
}

pub fn correlation_estimate(
    driver: &SuspensionDriver,
    event_a: &BlockEvent,
    event_b: &BlockEvent,
    lag: f64,
    samples: usize,
    seed: u64,
) -> Result<CorrelationEstimate> {
    assert!(event_a.mass() > 0.0 && event_b.mass() > 0.0);
    let stream = Stream::new(seed);
    let hits: usize = (0..samples as u64)
        .into_par_iter()
        .map(|trial| {
            let keys = stream.derive(trial);
            let tape = driver.with_seed(keys.word(0));
            let state = DriverState {
                index: 0,
                pos: keys.uniform(1) * driver.ceiling,
            };
            let in_a = event_a.contains(tape.symbol(state.index));
            let moved = tape.advance(&state, lag).expect("nonnegative");
            let in_b = event_b.contains(tape.symbol(moved.index));
            usize::from(in_a && in_b)
        })
        .sum();
    Ok(CorrelationEstimate {
        joint: hits as f64 / samples as f64,
        product: event_a.mass() * event_b.mass(),
        samples,
    })
}

/// Triple-joint mass of `x in A`, `flow^lag(x) in B`, `flow^{2 lag}(x) in C`
/// versus the triple product; the three-event analogue of
/// `correlation_estimate`.
pub fn triple_correlation_estimate(
    driver: &SuspensionDriver,
    events: [&BlockEvent; 3],
    lag: f64,
    samples: usize,
    seed: u64,
) -> Result<CorrelationEstimate> {
    assert!(events.iter().all(|e| e.mass() > 0.0));
    let stream = Stream::new(seed);
    let hits: usize = (0..samples as u64)
        .into_par_iter()
        .map(|trial| {
            let keys = stream.derive(trial);
            let tape = driver.with_seed(keys.word(0));
            let mut state = DriverState {
                index: 0,
                pos: keys.uniform(1) * driver.ceiling,
            };
            let mut all = events[0].contains(tape.symbol(state.index));
            for event in &events[1..] {
                state = tape.advance(&state, lag).expect("nonnegative");
                all = all && event.contains(tape.symbol(state.index));
            }
            usize::from(all)
        })
        .sum();
    Ok(CorrelationEstimate {
        joint: hits as f64 / samples as f64,
        product: events.iter().map(|e| e.mass()).product(),
        samples,
    })
}

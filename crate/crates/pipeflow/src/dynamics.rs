//! Base abstractions: map systems, trajectories, and (axial) partial
//! semi-flows.

use crate::{Error, Result};
use std::fmt;
use std::io::Write;

/// An axis-aligned box, half-open in each coordinate: `[lo, hi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        BoxRegion { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&x, (&lo, &hi))| x >= lo && x < hi)
    }

    /// Membership in the closure `[lo, hi]`.
    pub fn contains_closed(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    /// Nearest point of the closure, coordinatewise clamp.
    pub fn clamp(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
            .collect()
    }
}

type MapFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A total map on `R^d` with a domain box containing its attractor.
pub struct MapSystem {
    pub name: String,
    pub dim: usize,
    pub domain: BoxRegion,
    map: MapFn,
}

impl fmt::Debug for MapSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .finish()
    }
}

fn frac(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can return 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl MapSystem {
    pub fn new(name: &str, dim: usize, domain: BoxRegion, map: MapFn) -> Self {
        MapSystem {
            name: name.to_string(),
            dim,
            domain,
            map,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.map)(x)
    }

    /// x -> 2x mod 1 on [0,1).
    pub fn doubling() -> Self {
        MapSystem::new(
            "doubling",
            1,
            BoxRegion::new(vec![0.0], vec![1.0]),
            Box::new(|x| vec![frac(2.0 * x[0])]),
        )
    }

    /// x -> x + alpha mod 1 on [0,1).
    pub fn rotation(alpha: f64) -> Self {
        MapSystem::new(
            "rotation",
            1,
            BoxRegion::new(vec![0.0], vec![1.0]),
            Box::new(move |x| vec![frac(x[0] + alpha)]),
        )
    }

    /// x -> a x (1 - x) on [0,1).
    pub fn logistic(a: f64) -> Self {
        assert!(a > 0.0 && a <= 4.0);
        MapSystem::new(
            "logistic",
            1,
            BoxRegion::new(vec![0.0], vec![1.0]),
            Box::new(move |x| vec![(a * x[0] * (1.0 - x[0])).min(1.0 - f64::EPSILON)]),
        )
    }

    /// Identity map on [0,1); useful as a degenerate control.
    pub fn identity() -> Self {
        MapSystem::new(
            "identity",
            1,
            BoxRegion::new(vec![0.0], vec![1.0]),
            Box::new(|x| x.to_vec()),
        )
    }

    /// Henon map with the classical parameters a=1.4, b=0.3.
    pub fn henon() -> Self {
        MapSystem::new(
            "henon",
            2,
            BoxRegion::new(vec![-1.8, -0.5], vec![1.8, 0.5]),
            Box::new(|p| vec![1.0 - 1.4 * p[0] * p[0] + p[1], 0.3 * p[0]]),
        )
    }

    pub fn by_name(name: &str, params: &std::collections::BTreeMap<String, f64>) -> Result<Self> {
        match name {
            "doubling" => Ok(MapSystem::doubling()),
            "rotation" => {
                let alpha = *params
                    .get("alpha")
                    .ok_or_else(|| Error::InvalidConfig("rotation needs `alpha`".into()))?;
                Ok(MapSystem::rotation(alpha))
            }
            "logistic" => {
                let a = *params
                    .get("a")
                    .ok_or_else(|| Error::InvalidConfig("logistic needs `a`".into()))?;
                Ok(MapSystem::logistic(a))
            }
            "identity" => Ok(MapSystem::identity()),
            "henon" => Ok(MapSystem::henon()),
            other => Err(Error::InvalidConfig(format!("unknown system `{other}`"))),
        }
    }
}

/// A finite forward orbit of a [`MapSystem`], stored at full precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn origin(&self) -> &[f64] {
        &self.points[0]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One row per step: `t, x_1..x_d`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.points[0].len();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=d).map(|i| format!("x_{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, p) in self.points.iter().enumerate() {
            let coords: Vec<String> = p.iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(out, "{},{}", t, coords.join(","))?;
        }
        Ok(())
    }
}

/// Iterate the map `n` times from `x0`, producing `n + 1` points.
pub fn iterate_map(system: &MapSystem, x0: &[f64], n: usize) -> Result<Trajectory> {
    if !system.domain.contains(x0) {
        return Err(Error::OutsideDomain {
            system: system.name.clone(),
            point: x0.to_vec(),
        });
    }
    let mut points = Vec::with_capacity(n + 1);
    points.push(x0.to_vec());
    for _ in 0..n {
        let next = system.apply(points.last().unwrap());
        points.push(next);
    }
    Ok(Trajectory { points })
}

/// A generic orbit of the doubling map, via its conjugacy with the binary
/// shift: point `n` reads bits `n..n+53` of a random tape. Iterating
/// `2x mod 1` directly in floating point shifts the mantissa out and
/// collapses to 0 within 53 steps, so long orbits must come from the
/// symbolic side.
pub fn generic_doubling_orbit(seed: u64, n: usize) -> Trajectory {
    let tape = crate::rng::Stream::new(seed);
    let bit = |k: usize| (tape.word((k / 64) as u64) >> (63 - (k % 64))) & 1;
    let mut window: u64 = 0;
    for k in 0..53 {
        window = (window << 1) | bit(k);
    }
    let mut points = Vec::with_capacity(n + 1);
    points.push(vec![window as f64 / (1u64 << 53) as f64]);
    for k in 0..n {
        window = ((window << 1) | bit(k + 53)) & ((1u64 << 53) - 1);
        points.push(vec![window as f64 / (1u64 << 53) as f64]);
    }
    Trajectory { points }
}

/// Uniform interval flow on `[0, L]`: exit time `L - l`, flow `l + s`.
pub fn uniform_interval_flow(l: f64, s: f64, length: f64) -> Result<(f64, f64)> {
    if s < 0.0 {
        return Err(Error::NegativeDuration(s));
    }
    let remaining = length - l;
    if s > remaining + 1e-12 {
        return Err(Error::ExitTimeExceeded {
            duration: s,
            remaining,
        });
    }
    Ok((l + s, length - (l + s)))
}

type ExitTimeFn<'a, S> = Box<dyn Fn(&S) -> f64 + Send + Sync + 'a>;
type FlowFn<'a, S> = Box<dyn Fn(&S, f64) -> S + Send + Sync + 'a>;
type ProjectionFn<'a, S> = Box<dyn Fn(&S) -> f64 + Send + Sync + 'a>;

/// Behavioral description of a partial semi-flow: an exit time and a flow
/// map, with the defining identities checked by [`validate_axial_flow`].
pub struct PartialSemiFlow<'a, S> {
    pub tag: String,
    pub exit_time: ExitTimeFn<'a, S>,
    pub flow: FlowFn<'a, S>,
}

/// A partial semi-flow projecting onto the uniform interval flow on `[0, L]`.
pub struct AxialFlow<'a, S> {
    pub partial: PartialSemiFlow<'a, S>,
    pub projection: ProjectionFn<'a, S>,
    pub length: f64,
}

/// Per-axiom maximum violations over a sample set.
#[derive(Clone, Debug, serde::Serialize)]
pub struct AxiomReport {
    pub tag: String,
    pub samples: usize,
    /// |T(Phi(x, T(x)))|
    pub exit_terminates: f64,
    /// |T(Phi(x, s)) - (T(x) - s)|
    pub exit_decrements: f64,
    /// |T(x) - (L - pi(x))|
    pub exit_matches_axis: f64,
    /// |pi(Phi(x, s)) - (pi(x) + s)|
    pub projection_advances: f64,
}

impl AxiomReport {
    pub fn max_violation(&self) -> f64 {
        self.exit_terminates
            .max(self.exit_decrements)
            .max(self.exit_matches_axis)
            .max(self.projection_advances)
    }

    pub fn passes(&self) -> bool {
        self.max_violation() <= 1e-9
    }
}

/// Check the axial-flow axioms on the given `(state, duration)` samples.
/// Violations are reported, never raised.
pub fn validate_axial_flow<S>(flow: &AxialFlow<S>, samples: &[(S, f64)]) -> AxiomReport {
    let mut report = AxiomReport {
        tag: flow.partial.tag.clone(),
        samples: samples.len(),
        exit_terminates: 0.0,
        exit_decrements: 0.0,
        exit_matches_axis: 0.0,
        projection_advances: 0.0,
    };
    for (x, s) in samples {
        let exit = (flow.partial.exit_time)(x);
        let at_exit = (flow.partial.flow)(x, exit);
        report.exit_terminates = report
            .exit_terminates
            .max((flow.partial.exit_time)(&at_exit).abs());
        report.exit_matches_axis = report
            .exit_matches_axis
            .max((exit - (flow.length - (flow.projection)(x))).abs());
        let s = s.min(exit);
        let moved = (flow.partial.flow)(x, s);
        report.exit_decrements = report
            .exit_decrements
            .max(((flow.partial.exit_time)(&moved) - (exit - s)).abs());
        report.projection_advances = report
            .projection_advances
            .max(((flow.projection)(&moved) - ((flow.projection)(x) + s)).abs());
    }
    report
}

/// The uniform interval flow on `[0, L]` packaged as an [`AxialFlow`].
pub fn uniform_interval_axial_flow(length: f64) -> AxialFlow<'static, f64> {
    AxialFlow {
        partial: PartialSemiFlow {
            tag: format!("uniform-interval-{length}"),
            exit_time: Box::new(move |&l| length - l),
            flow: Box::new(|&l, s| l + s),
        },
        projection: Box::new(|&l| l),
        length,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Cursor;
    use proptest::prelude::*;

    #[test]
    fn doubling_orbit_matches_arithmetic() {
        let traj = iterate_map(&MapSystem::doubling(), &[0.1], 2).unwrap();
        assert_eq!(traj.points, vec![vec![0.1], vec![0.2], vec![0.4]]);
    }

    #[test]
    fn zero_steps_returns_origin_only() {
        let traj = iterate_map(&MapSystem::henon(), &[0.1, 0.1], 0).unwrap();
        assert_eq!(traj.points, vec![vec![0.1, 0.1]]);
    }

    #[test]
    fn rotation_wraps_mod_one() {
        let traj = iterate_map(&MapSystem::rotation(0.25), &[0.9], 1).unwrap();
        assert!((traj.points[1][0] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn origin_outside_domain_is_rejected() {
        let err = iterate_map(&MapSystem::doubling(), &[1.5], 3).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain { .. }));
    }

    #[test]
    fn interval_flow_examples() {
        assert_eq!(uniform_interval_flow(0.3, 0.2, 1.0).unwrap(), (0.5, 0.5));
        assert_eq!(uniform_interval_flow(0.0, 1.0, 1.0).unwrap(), (1.0, 0.0));
        assert!(uniform_interval_flow(0.9, 0.2, 1.0).is_err());
    }

    #[test]
    fn interval_flow_semigroup_is_exact() {
        let cur = &mut Cursor::from_seed(11);
        for _ in 0..1000 {
            let l = cur.next_f64() * 0.5;
            let s = cur.next_f64() * 0.25;
            let t = cur.next_f64() * 0.25;
            let (mid, _) = uniform_interval_flow(l, s, 1.0).unwrap();
            let (two_step, _) = uniform_interval_flow(mid, t, 1.0).unwrap();
            let (one_step, _) = uniform_interval_flow(l, s + t, 1.0).unwrap();
            // float addition is non-associative at the last ulp
            assert!((two_step - one_step).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_interval_flow_passes_axioms() {
        let flow = uniform_interval_axial_flow(1.0);
        let cur = &mut Cursor::from_seed(5);
        let samples: Vec<(f64, f64)> = (0..100)
            .map(|_| {
                let l = cur.next_f64();
                let s = cur.next_f64() * (1.0 - l);
                (l, s)
            })
            .collect();
        let report = validate_axial_flow(&flow, &samples);
        assert!(report.passes());
        assert!(report.max_violation() < 1e-15);
    }

    #[test]
    fn injected_exit_time_fault_is_caught() {
        let mut flow = uniform_interval_axial_flow(1.0);
        flow.partial.exit_time = Box::new(|&l| 1.0 - l + 0.1);
        let report = validate_axial_flow(&flow, &[(0.2, 0.3)]);
        assert!(!report.passes());
        assert!(report.exit_matches_axis > 0.09);
    }

    #[test]
    fn interval_maps_preserve_domain_box() {
        for system in [
            MapSystem::doubling(),
            MapSystem::rotation(0.25),
            MapSystem::rotation((5f64.sqrt() - 1.0) / 2.0),
            MapSystem::logistic(4.0),
            MapSystem::identity(),
        ] {
            let cur = &mut Cursor::from_seed(99);
            for _ in 0..1_000_000 {
                let x = vec![cur.next_f64()];
                let y = system.apply(&x);
                assert!(system.domain.contains(&y), "{} left its box", system.name);
            }
        }
    }

    #[test]
    fn henon_preserves_box_along_attractor() {
        // The box is not forward-invariant from arbitrary points; it traps
        // the attractor, so the check runs along a long orbit.
        let system = MapSystem::henon();
        let traj = iterate_map(&system, &[0.1, 0.1], 100_000).unwrap();
        for p in &traj.points[100..] {
            assert!(system.domain.contains(p));
        }
    }

    proptest! {
        #[test]
        fn trajectory_points_chain_exactly(x0 in 0.0f64..1.0, n in 0usize..50) {
            let system = MapSystem::logistic(4.0);
            let traj = iterate_map(&system, &[x0], n).unwrap();
            prop_assert_eq!(traj.len(), n + 1);
            for w in traj.points.windows(2) {
                prop_assert_eq!(&system.apply(&w[0]), &w[1]);
            }
        }
    }
}

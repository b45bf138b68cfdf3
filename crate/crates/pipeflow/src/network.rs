//! The perturbed pipe-flow: junctions and pipes glued along the transition
//! graph, with the suspension driver actuating the junction switches
//! through a weighted window.
//!
//! Flow-time bookkeeping: a junction has axial length 2 (unit speed), a
//! pipe length 1, so every junction-entry-to-junction-entry segment lasts
//! exactly 3. The driver advances by `t_speed` per unit flow time, and the
//! driver ceiling equals `t_speed`, so one decision symbol passes per unit
//! flow time and consecutive windows read disjoint tape blocks.

use crate::driver::{DriverState, SectorReadout, SuspensionDriver, WindowWeight};
use crate::dynamics::{AxialFlow, MapSystem, PartialSemiFlow};
use crate::partition::{cell_map_apply, BoxPartition, CellChart, TransitionMatrix};
use crate::rng::Stream;
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{PI, TAU};

/// Geometry and driver-coupling parameters shared by every component.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NetworkParams {
    /// switching window width in flow time (window is `[1, 1 + width]`)
    pub window_width: f64,
    /// lateral attraction rate past the window
    pub kappa: f64,
    /// driver time per unit flow time; also the driver ceiling
    pub t_speed: f64,
    /// driver block length (alphabet `2^block_len`)
    pub block_len: u32,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            window_width: 0.01,
            kappa: 10.0,
            t_speed: 1.0,
            block_len: 16,
        }
    }
}

/// One junction per partition cell: out-edges, their probabilities, and the
/// sector readout that realizes them dyadically.
#[derive(Clone, Debug)]
pub struct JunctionSpec {
    pub cell: usize,
    /// target cells of the positive column entries, ascending
    pub out: Vec<usize>,
    pub beta: Vec<f64>,
    pub readout: SectorReadout,
}

impl JunctionSpec {
    pub fn branch_count(&self) -> usize {
        self.out.len()
    }

    /// Branch center angle, 0-based.
    pub fn branch_angle(&self, branch: usize) -> f64 {
        branch as f64 * TAU / self.branch_count() as f64
    }
}

/// The glued network: one junction per cell and one pipe per positive
/// transition entry. Pipes carry the chart-conjugated cell maps.
pub struct PipeNetwork<'a> {
    pub matrix: &'a TransitionMatrix,
    pub partition: &'a BoxPartition,
    pub system: &'a MapSystem,
    pub params: NetworkParams,
    pub junctions: Vec<JunctionSpec>,
    pub charts: Vec<CellChart>,
}

pub const JUNCTION_LENGTH: f64 = 2.0;
pub const PIPE_LENGTH: f64 = 1.0;
const WINDOW_START: f64 = 1.0;

/// Build the network from a column-stochastic matrix.
pub fn build_network<'a>(
    matrix: &'a TransitionMatrix,
    partition: &'a BoxPartition,
    system: &'a MapSystem,
    params: NetworkParams,
) -> Result<PipeNetwork<'a>> {
    assert!(params.window_width > 0.0 && params.window_width < 1.0);
    let mut junctions = Vec::with_capacity(matrix.m);
    for j in 0..matrix.m {
        let out = matrix.positive_rows(j);
        if out.is_empty() {
            return Err(Error::ZeroColumn(j));
        }
        let beta: Vec<f64> = out.iter().map(|&i| matrix.get(i, j)).collect();
        // renormalize the rounding slack so the readout validator sees mass 1
        let sum: f64 = beta.iter().sum();
        let beta: Vec<f64> = beta.iter().map(|b| b / sum).collect();
        let readout = SectorReadout::build(&beta, params.block_len)?;
        junctions.push(JunctionSpec {
            cell: j,
            out,
            beta,
            readout,
        });
    }
    let charts = (0..matrix.m).map(|j| partition.chart(j)).collect();
    Ok(PipeNetwork {
        matrix,
        partition,
        system,
        params,
        junctions,
        charts,
    })
}

impl<'a> PipeNetwork<'a> {
    /// Chart-conjugated cell map on the model fiber.
    pub fn fiber_map(&self, j: usize, i: usize, u: &[f64]) -> Result<Vec<f64>> {
        let y = self.charts[j].to_cell(u)?;
        let image = cell_map_apply(j, i, &y, self.system, self.partition)?;
        self.charts[i].to_model(&image)
    }

    /// The driver for a given tape seed; ceiling pinned to `t_speed`.
    pub fn driver(&self, tape_seed: u64) -> SuspensionDriver {
        SuspensionDriver::new(self.params.block_len, self.params.t_speed, tape_seed)
    }

    pub fn window_end(&self) -> f64 {
        WINDOW_START + self.params.window_width
    }

    /// Vertices, edges, lengths, and the gluing table, as JSON.
    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<serde_json::Value> = self
            .junctions
            .iter()
            .flat_map(|jct| {
                jct.out.iter().enumerate().map(move |(b, &i)| {
                    serde_json::json!({
                        "from": jct.cell,
                        "to": i,
                        "exit_window": b,
                        "pipe_length": PIPE_LENGTH,
                    })
                })
            })
            .collect();
        serde_json::json!({
            "vertices": self.matrix.m,
            "junction_length": JUNCTION_LENGTH,
            "params": self.params,
            "edges": edges,
        })
    }
}

/// Where a flow state currently lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Component {
    Junction(usize),
    Pipe(usize, usize),
}

impl Component {
    pub fn length(&self) -> f64 {
        match self {
            Component::Junction(_) => JUNCTION_LENGTH,
            Component::Pipe(_, _) => PIPE_LENGTH,
        }
    }
}

/// Outcome of a completed switching window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JunctionOutcome {
    pub junction: usize,
    pub branch: usize,
    pub target_cell: usize,
    #[serde(skip)]
    pub kick: Complex64,
    /// whether the window straddled a ceiling crossing
    pub crossed: bool,
}

/// Full flow state: component, axial coordinate, window scratch, fiber
/// point in model coordinates, driver state, and the global clock.
#[derive(Clone, Debug)]
pub struct PipeFlowState {
    pub component: Component,
    pub axial: f64,
    /// entry fiber point of the current component (constant within it)
    pub fiber: Vec<f64>,
    /// partial lateral kick accumulated inside the window
    pub window_sum: Complex64,
    /// number of readout segments seen inside the window so far
    pub window_segments: u32,
    /// lateral kick frozen at the window end
    pub window_z: Option<Complex64>,
    /// chosen branch index (into `JunctionSpec::out`)
    pub branch: Option<usize>,
    pub driver: DriverState,
    pub clock: f64,
    /// most recent completed switch, surviving component hand-offs
    pub last_decision: Option<JunctionOutcome>,
}

impl PipeFlowState {
    /// Entry state of junction `cell` with model-fiber point `fiber`.
    pub fn junction_entry(cell: usize, fiber: Vec<f64>, driver: DriverState) -> Self {
        PipeFlowState {
            component: Component::Junction(cell),
            axial: 0.0,
            fiber,
            window_sum: Complex64::new(0.0, 0.0),
            window_segments: 0,
            window_z: None,
            branch: None,
            driver,
            clock: 0.0,
            last_decision: None,
        }
    }
}

fn angle_difference(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(TAU);
    if d > PI {
        d = TAU - d;
    }
    d
}

/// Pick the angular basin (width `2 pi / k`, centered on the branch angles)
/// containing `arg(z)`. Near-zero kicks and near-boundary angles are
/// indeterminate and surface as errors.
pub fn decide_branch(junction: &JunctionSpec, z: Complex64) -> Result<usize> {
    let k = junction.branch_count();
    if k == 1 {
        return Ok(0);
    }
    let magnitude = z.norm();
    if magnitude < 1e-9 {
        return Err(Error::IndeterminateSwitch {
            junction: junction.cell,
            magnitude,
            margin: 0.0,
        });
    }
    let sector = TAU / k as f64;
    let arg = z.arg();
    let branch = (arg / sector).round().rem_euclid(k as f64) as usize % k;
    let margin = sector / 2.0 - angle_difference(arg, junction.branch_angle(branch));
    if margin < 1e-9 {
        return Err(Error::IndeterminateSwitch {
            junction: junction.cell,
            magnitude,
            margin,
        });
    }
    Ok(branch)
}

impl<'a> PipeNetwork<'a> {
    fn advance_driver(&self, driver: &SuspensionDriver, state: &mut PipeFlowState, flow_dt: f64) {
        state.driver = driver
            .advance(&state.driver, flow_dt * self.params.t_speed)
            .expect("nonnegative duration");
    }

    /// Accumulate the window integral over `[state.axial, state.axial + dl]`
    /// (both inside the window) as an exact sum of weighted unit vectors.
    fn accumulate_window(
        &self,
        driver: &SuspensionDriver,
        junction: &JunctionSpec,
        state: &mut PipeFlowState,
        dl: f64,
    ) {
        let width = self.params.window_width;
        let mut driver_span = dl * self.params.t_speed;
        let mut axial = state.axial;
        while driver_span > 0.0 {
            let seg = driver.time_to_crossing(&state.driver).min(driver_span);
            let seg_dl = seg / self.params.t_speed;
            let x_left = (axial - WINDOW_START) / width;
            let x_right = (axial + seg_dl - WINDOW_START) / width;
            let mass = WindowWeight::Bump.cdf(x_right) - WindowWeight::Bump.cdf(x_left);
            let theta = junction
                .readout
                .angle(junction.readout.group_of(driver.symbol(state.driver.index)));
            state.window_sum += mass * Complex64::new(theta.cos(), theta.sin());
            state.window_segments += 1;
            axial += seg_dl;
            state.driver = driver.advance(&state.driver, seg).expect("nonnegative");
            if driver.time_to_crossing(&state.driver) <= 0.0 {
                state.driver = DriverState {
                    index: state.driver.index + 1,
                    pos: 0.0,
                };
            }
            driver_span -= seg;
            if driver_span <= 1e-18 {
                break;
            }
        }
    }

    /// Advance within the current component by `dt <= remaining length`.
    /// Phase boundaries are landed on exactly.
    fn advance_within(&self, driver: &SuspensionDriver, state: &mut PipeFlowState, dt: f64) -> Result<()> {
        let mut rem = dt;
        let length = state.component.length();
        while rem > 0.0 {
            match state.component {
                Component::Pipe(_, _) => {
                    let step = rem.min(length - state.axial);
                    let hits_end = step >= length - state.axial;
                    self.advance_driver(driver, state, step);
                    state.axial = if hits_end { length } else { state.axial + step };
                    state.clock += step;
                    rem -= step;
                    if hits_end {
                        break;
                    }
                }
                Component::Junction(cell) => {
                    let junction = &self.junctions[cell];
                    let window_end = self.window_end();
                    let boundary = if state.axial < WINDOW_START {
                        WINDOW_START
                    } else if state.axial < window_end {
                        window_end
                    } else {
                        JUNCTION_LENGTH
                    };
                    let in_window = state.axial >= WINDOW_START && state.axial < window_end;
                    let step = rem.min(boundary - state.axial);
                    let hits_boundary = step >= boundary - state.axial;
                    if in_window {
                        self.accumulate_window(driver, junction, state, step);
                    } else {
                        self.advance_driver(driver, state, step);
                    }
                    state.axial = if hits_boundary {
                        boundary
                    } else {
                        state.axial + step
                    };
                    state.clock += step;
                    rem -= step;
                    if hits_boundary && boundary == self.window_end() && state.window_z.is_none() {
                        let z = state.window_sum;
                        let branch = decide_branch(junction, z)?;
                        state.window_z = Some(z);
                        state.branch = Some(branch);
                        state.last_decision = Some(JunctionOutcome {
                            junction: cell,
                            branch,
                            target_cell: junction.out[branch],
                            kick: z,
                            crossed: state.window_segments > 1,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Hand the state at a component exit face to the glued successor.
    fn hand_off(&self, state: &mut PipeFlowState) -> Result<()> {
        match state.component {
            Component::Junction(cell) => {
                let branch = state.branch.expect("branch decided before exit face");
                let target = self.junctions[cell].out[branch];
                state.component = Component::Pipe(cell, target);
                state.axial = 0.0;
                // fiber unchanged through the junction, bitwise
            }
            Component::Pipe(j, i) => {
                state.fiber = self.fiber_map(j, i, &state.fiber)?;
                state.component = Component::Junction(i);
                state.axial = 0.0;
            }
        }
        state.window_sum = Complex64::new(0.0, 0.0);
        state.window_segments = 0;
        state.window_z = None;
        state.branch = None;
        Ok(())
    }

    /// The recursive glued semi-flow: flow within the current component,
    /// then continue in the glued successor. Landing exactly on an exit
    /// face hands off to the successor's entry face.
    pub fn global_flow(
        &self,
        driver: &SuspensionDriver,
        state: &PipeFlowState,
        t: f64,
    ) -> Result<PipeFlowState> {
        if t < 0.0 {
            return Err(Error::NegativeDuration(t));
        }
        let mut state = state.clone();
        let mut rem = t;
        loop {
            let remaining = state.component.length() - state.axial;
            if rem < remaining {
                self.advance_within(driver, &mut state, rem)?;
                return Ok(state);
            }
            self.advance_within(driver, &mut state, remaining)?;
            rem -= remaining;
            self.hand_off(&mut state)?;
            if rem == 0.0 {
                return Ok(state);
            }
        }
    }

    /// Lateral coordinate of a junction state, in closed form: zero before
    /// the window, the running window sum inside it, and exponential
    /// attraction toward the chosen branch center past it.
    pub fn lateral(&self, state: &PipeFlowState) -> Complex64 {
        match state.component {
            Component::Pipe(_, _) => Complex64::new(0.0, 0.0),
            Component::Junction(cell) => {
                if state.axial <= WINDOW_START {
                    Complex64::new(0.0, 0.0)
                } else if state.axial < self.window_end() || state.window_z.is_none() {
                    state.window_sum
                } else {
                    let z = state.window_z.unwrap();
                    let theta = self.junctions[cell].branch_angle(state.branch.unwrap());
                    let center = Complex64::new(theta.cos(), theta.sin());
                    let decay = (-self.params.kappa * (state.axial - self.window_end())).exp();
                    center + (z - center) * decay
                }
            }
        }
    }

    /// Traverse one junction end to end (flow time 2): the fiber point is
    /// returned untouched, the driver advances by `2 t_speed`, and the
    /// switch outcome carries the lateral kick.
    pub fn junction_traverse(
        &self,
        driver: &SuspensionDriver,
        cell: usize,
        fiber: &[f64],
        entry: DriverState,
    ) -> Result<(JunctionOutcome, DriverState)> {
        let mut state = PipeFlowState::junction_entry(cell, fiber.to_vec(), entry);
        self.advance_within(driver, &mut state, JUNCTION_LENGTH)?;
        debug_assert_eq!(state.fiber, fiber);
        Ok((
            state.last_decision.expect("window completed"),
            state.driver,
        ))
    }

    /// Closed-form two-stage position along a pipe at elapsed `t in [0,1]`:
    /// first onto the graph point of the fiber map, then contraction of the
    /// upstream factor. At `t = 1` the exit point equals the fiber-map
    /// image exactly.
    pub fn pipe_traverse(
        &self,
        j: usize,
        i: usize,
        entry: &[f64],
        t: f64,
    ) -> Result<PipePoint> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange { t, max: 1.0 });
        }
        let image = self.fiber_map(j, i, entry)?;
        let center = vec![0.5; entry.len()];
        let (upstream, downstream) = if t < 0.5 {
            let s = 2.0 * t;
            let downstream: Vec<f64> = entry
                .iter()
                .zip(&image)
                .map(|(&a, &b)| a + s * (b - a))
                .collect();
            (entry.to_vec(), downstream)
        } else {
            let s = 2.0 * t - 1.0;
            let upstream: Vec<f64> = entry
                .iter()
                .zip(&center)
                .map(|(&a, &c)| c + (1.0 - s) * (a - c))
                .collect();
            (upstream, image.clone())
        };
        Ok(PipePoint {
            axial: t,
            upstream,
            downstream,
            exit: image,
        })
    }

    /// Run an orbit and record the state at the junction entries reached at
    /// global times 3, 6, ..., 3N.
    pub fn run_time3_orbit(
        &self,
        seed: u64,
        start_cell: usize,
        start_fiber: &[f64],
        steps: usize,
    ) -> OrbitRecord {
        let keys = Stream::new(seed);
        let driver = self.driver(keys.word(0));
        let initial = DriverState {
            index: 0,
            pos: keys.uniform(1) * self.params.t_speed,
        };
        let mut state = PipeFlowState::junction_entry(start_cell, start_fiber.to_vec(), initial);
        let mut record = OrbitRecord {
            seed,
            start_cell,
            start_fiber: start_fiber.to_vec(),
            steps: Vec::with_capacity(steps),
            truncated: None,
        };
        for _ in 0..steps {
            match self.global_flow(&driver, &state, 3.0) {
                Ok(next) => {
                    let decision = next.last_decision.expect("one switch per step");
                    let cell = match next.component {
                        Component::Junction(c) => c,
                        Component::Pipe(_, _) => unreachable!("time-3 lands on a junction entry"),
                    };
                    record.steps.push(OrbitStep {
                        cell,
                        fiber: next.fiber.clone(),
                        branch: decision.branch,
                        crossed: decision.crossed,
                        clock: next.clock,
                    });
                    state = next;
                }
                Err(err) => {
                    record.truncated = Some(err.to_string());
                    break;
                }
            }
        }
        record
    }

    /// Run many orbits with derived seeds; deterministic under any degree
    /// of parallelism.
    pub fn run_orbits(
        &self,
        seed: u64,
        starts: &[(usize, Vec<f64>)],
        steps: usize,
    ) -> Vec<OrbitRecord> {
        let stream = Stream::new(seed);
        starts
            .par_iter()
            .enumerate()
            .map(|(trial, (cell, fiber))| {
                self.run_time3_orbit(stream.derive(trial as u64).word(0), *cell, fiber, steps)
            })
            .collect()
    }

    /// Axial-flow descriptor of one component, for axiom validation.
    pub fn component_axial_flow(
        &'a self,
        driver: &'a SuspensionDriver,
        component: Component,
    ) -> AxialFlow<'a, PipeFlowState> {
        let length = component.length();
        AxialFlow {
            partial: PartialSemiFlow {
                tag: format!("{component:?}"),
                exit_time: Box::new(move |s: &PipeFlowState| length - s.axial),
                flow: Box::new(move |s: &PipeFlowState, dt: f64| {
                    let mut next = s.clone();
                    self.advance_within(driver, &mut next, dt.min(length - s.axial))
                        .expect("within component");
                    next
                }),
            },
            projection: Box::new(|s: &PipeFlowState| s.axial),
            length,
        }
    }
}

/// Snapshot along a pipe: positions in the upstream and downstream fiber
/// factors and the exit image.
#[derive(Clone, Debug, PartialEq)]
pub struct PipePoint {
    pub axial: f64,
    pub upstream: Vec<f64>,
    pub downstream: Vec<f64>,
    pub exit: Vec<f64>,
}

/// One recorded time-3 sample.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitStep {
    pub cell: usize,
    pub fiber: Vec<f64>,
    pub branch: usize,
    pub crossed: bool,
    pub clock: f64,
}

/// A sampled pipe-flow orbit; `truncated` flags an indeterminate switch.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitRecord {
    pub seed: u64,
    pub start_cell: usize,
    pub start_fiber: Vec<f64>,
    pub steps: Vec<OrbitStep>,
    pub truncated: Option<String>,
}


impl OrbitRecord {
    /// CSV rows: `n, t, s_n, y-coordinates.., branch, crossing flag`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, header: bool) -> Result<()> {
        if header {
            writeln!(out, "n,t,cell,fiber,branch,crossed")?;
        }
        for (n, step) in self.steps.iter().enumerate() {
            let coords: Vec<String> = step.fiber.iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                n + 1,
                3 * (n + 1),
                step.cell,
                coords.join(";"),
                step.branch,
                step.crossed
            )?;
        }
        Ok(())
    }
}

//! Memristive junction dynamics over a device graph.
//!
//! Each junction carries a filament state `λ` (V·s). Its conductance grows
//! linearly from `g_off` at `λ = 0` to `g_on` at `|λ| = λ_max`. A tile run
//! holds the input drive fixed and alternates a Kirchhoff solve with a
//! forward-Euler update of every `λ`.

mod cholesky;
mod solver;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgen::DeviceGraph;
pub use solver::{NetworkSolver, SolveWorkspace};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid dynamics parameter: {0}")]
    InvalidParams(String),
    #[error("{what} has length {got}, expected {expected}")]
    Length { what: &'static str, expected: usize, got: usize },
    #[error("drive value {0} is not finite")]
    NonFiniteDrive(usize),
    #[error("singular network system: {0}")]
    Singular(String),
    #[error("symbolic factorization failed: {0}")]
    Factorization(String),
    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetPolicy {
    /// Every junction starts each tile at `λ = 0`.
    PerTile,
    /// State carries over from the previous tile.
    Persistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynParams {
    pub v_set: f64,
    pub v_reset: f64,
    pub lambda_max: f64,
    /// Decay rate below `v_reset`.
    pub b: f64,
    pub dt: f64,
    pub steps_per_tile: usize,
    pub g_off: f64,
    pub g_on: f64,
    pub reset_policy: ResetPolicy,
}

impl Default for DynParams {
    fn default() -> Self {
        Self {
            v_set: 1e-2,
            v_reset: 5e-3,
            lambda_max: 1.5e-2,
            b: 10.0,
            dt: 1e-4,
            steps_per_tile: 14,
            g_off: 7.75e-8,
            g_on: 7.75e-5,
            reset_policy: ResetPolicy::PerTile,
        }
    }
}

impl DynParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidParams(m.to_string()));
        if !(self.v_reset > 0.0 && self.v_reset < self.v_set) {
            return bad("require 0 < v_reset < v_set");
        }
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return bad("lambda_max must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return bad("b must be non-negative");
        }
        if !(self.g_off > 0.0 && self.g_on > self.g_off && self.g_on.is_finite()) {
            return bad("require g_on > g_off > 0");
        }
        Ok(())
    }

    /// Simulated device time covered by one tile.
    pub fn seconds_per_tile(&self) -> f64 {
        self.steps_per_tile as f64 * self.dt
    }
}

/// Filament state of every junction, in device edge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionState {
    pub lambda: Vec<f64>,
}

impl JunctionState {
    pub fn zeros(junctions: usize) -> Self {
        Self { lambda: vec![0.0; junctions] }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.lambda.iter().all(|&l| l == 0.0)
    }

    pub fn reset(&mut self) {
        self.lambda.fill(0.0);
    }
}

/// Conductance of a junction with filament state `lambda`.
#[inline]
pub fn junction_conductance(lambda: f64, params: &DynParams) -> f64 {
    let frac = lambda.abs().min(params.lambda_max) / params.lambda_max;
    params.g_off + (params.g_on - params.g_off) * frac
}

pub fn conductance(state: &JunctionState, params: &DynParams) -> Vec<f64> {
    state.lambda.iter().map(|&l| junction_conductance(l, params)).collect()
}

fn conductance_into(state: &JunctionState, params: &DynParams, out: &mut [f64]) {
    for (g, &l) in out.iter_mut().zip(&state.lambda) {
        *g = junction_conductance(l, params);
    }
}

/// One forward-Euler step of the filament state under junction voltage `v`.
#[inline]
pub fn advance_lambda(lambda: f64, v: f64, params: &DynParams) -> f64 {
    let mag = v.abs();
    let next = if mag > params.v_set {
        let grown = lambda + (mag - params.v_set) * v.signum() * params.dt;
        // saturated junctions do not grow further
        if lambda.abs() >= params.lambda_max && grown.abs() > lambda.abs() {
            lambda
        } else {
            grown
        }
    } else if mag < params.v_reset {
        if lambda == 0.0 {
            return 0.0;
        }
        let decayed = lambda + params.b * (mag - params.v_reset) * lambda.signum() * params.dt;
        // decay stops at zero rather than flipping sign
        if decayed.signum() != lambda.signum() {
            0.0
        } else {
            decayed
        }
    } else {
        // dead zone, including both boundaries
        lambda
    };
    next.clamp(-params.lambda_max, params.lambda_max)
}

/// Voltage across junction `j`, `v(node_a) - v(node_b)`.
pub fn junction_voltages(graph: &DeviceGraph, node_voltages: &[f64]) -> Vec<f64> {
    graph
        .junctions
        .iter()
        .map(|j| node_voltages[j.node_a] - node_voltages[j.node_b])
        .collect()
}

/// Advances every junction by one timestep given the solved node voltages.
pub fn step_state(state: &JunctionState, node_voltages: &[f64], graph: &DeviceGraph, params: &DynParams) -> JunctionState {
    let mut next = state.clone();
    step_state_in_place(&mut next, node_voltages, graph, params);
    next
}

fn step_state_in_place(state: &mut JunctionState, node_voltages: &[f64], graph: &DeviceGraph, params: &DynParams) {
    for (l, j) in state.lambda.iter_mut().zip(&graph.junctions) {
        *l = advance_lambda(*l, node_voltages[j.node_a] - node_voltages[j.node_b], params);
    }
}

/// Solves Kirchhoff's laws for one conductance assignment.
///
/// Builds a fresh solver plan; callers solving the same device repeatedly
/// should hold a [`NetworkSolver`] instead.
pub fn solve_network(graph: &DeviceGraph, conductance: &[f64], drive: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    let solver = NetworkSolver::new(graph)?;
    let mut ws = solver.workspace();
    let mut out = vec![0.0; graph.node_count()];
    solver.solve_into(conductance, drive, &mut ws, &mut out)?;
    Ok(out)
}

/// Result of driving the device with one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct TileRun {
    /// Readout electrode voltages in row-major grid order.
    pub readout: Vec<f64>,
    pub state: JunctionState,
}

/// A device ready to be driven: the graph, its solver plan and the dynamics
/// parameters. Cheap to clone; clones share the immutable parts.
#[derive(Clone)]
pub struct Reservoir {
    graph: Arc<DeviceGraph>,
    solver: Arc<NetworkSolver>,
    params: DynParams,
}

/// Mutable buffers for one thread of tile runs.
pub struct TileWorkspace {
    solve: SolveWorkspace,
    conductance: Vec<f64>,
    voltages: Vec<f64>,
}

impl Reservoir {
    pub fn new(graph: Arc<DeviceGraph>, params: DynParams) -> Result<Self, DynamicsError> {
        params.validate()?;
        let solver = Arc::new(NetworkSolver::new(&graph)?);
        Ok(Self { graph, solver, params })
    }

    pub fn graph(&self) -> &DeviceGraph {
        &self.graph
    }

    pub fn params(&self) -> &DynParams {
        &self.params
    }

    pub fn solver(&self) -> &NetworkSolver {
        &self.solver
    }

    pub fn input_count(&self) -> usize {
        self.graph.input_node_ids().len()
    }

    pub fn readout_count(&self) -> usize {
        self.graph.readout_node_ids().len()
    }

    pub fn workspace(&self) -> TileWorkspace {
        TileWorkspace {
            solve: self.solver.workspace(),
            conductance: vec![0.0; self.graph.edge_count()],
            voltages: vec![0.0; self.graph.node_count()],
        }
    }

    pub fn fresh_state(&self) -> JunctionState {
        JunctionState::zeros(self.graph.edge_count())
    }

    /// Drives the device with `pooled` (one value per input electrode, in
    /// row-major input grid order) for `steps_per_tile` steps.
    ///
    /// The first solve uses the incoming state; each step then updates the
    /// state and re-solves, so the readout reflects the state after the
    /// final step. Under the per-tile policy `state` is zeroed first.
    pub fn run_tile_in_place(
        &self,
        pooled: &[f64],
        state: &mut JunctionState,
        ws: &mut TileWorkspace,
        mut trace: Option<&mut dyn Write>,
    ) -> Result<Vec<f64>, DynamicsError> {
        if pooled.len() != self.input_count() {
            return Err(DynamicsError::Length { what: "pooled input", expected: self.input_count(), got: pooled.len() });
        }
        if state.len() != self.graph.edge_count() {
            return Err(DynamicsError::Length { what: "junction state", expected: self.graph.edge_count(), got: state.len() });
        }
        if self.params.reset_policy == ResetPolicy::PerTile {
            state.reset();
        }
        let solver = &*self.solver;
        if state.is_zero() {
            solver.solve_uniform_into(self.params.g_off, pooled, &mut ws.solve, &mut ws.voltages)?;
        } else {
            conductance_into(state, &self.params, &mut ws.conductance);
            solver.solve_into(&ws.conductance, pooled, &mut ws.solve, &mut ws.voltages)?;
        }
        for step in 0..self.params.steps_per_tile {
            if let Some(out) = trace.as_deref_mut() {
                write_trace(out, step, &self.graph, state, &ws.voltages)?;
            }
            step_state_in_place(state, &ws.voltages, &self.graph, &self.params);
            conductance_into(state, &self.params, &mut ws.conductance);
            solver.solve_into(&ws.conductance, pooled, &mut ws.solve, &mut ws.voltages)?;
        }
        Ok(self.graph.readout_node_ids().iter().map(|&n| ws.voltages[n]).collect())
    }

    pub fn run_tile(&self, pooled: &[f64], state_in: &JunctionState) -> Result<TileRun, DynamicsError> {
        let mut state = state_in.clone();
        let mut ws = self.workspace();
        let readout = self.run_tile_in_place(pooled, &mut state, &mut ws, None)?;
        Ok(TileRun { readout, state })
    }
}

/// Writes the CSV header used by tile traces.
pub fn write_trace_header(out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "step,junction,lambda,voltage")
}

fn write_trace(
    out: &mut dyn Write,
    step: usize,
    graph: &DeviceGraph,
    state: &JunctionState,
    voltages: &[f64],
) -> std::io::Result<()> {
    for (j, &l) in graph.junctions.iter().zip(&state.lambda) {
        let v = voltages[j.node_a] - voltages[j.node_b];
        writeln!(out, "{step},{},{l:e},{v:e}", j.id)?;
    }
    Ok(())
}

/// Convenience wrapper building a one-off [`Reservoir`].
pub fn run_tile(
    graph: &DeviceGraph,
    pooled: &[f64],
    params: &DynParams,
    state_in: &JunctionState,
) -> Result<TileRun, DynamicsError> {
    Reservoir::new(Arc::new(graph.clone()), params.clone())?.run_tile(pooled, state_in)
}

//! Nodal analysis of the junction network.
//!
//! Input electrodes are ideal voltage sources; every other node obeys
//! Kirchhoff's current law with no external injection. Eliminating the driven
//! nodes leaves a weighted graph Laplacian restricted to the free nodes, which
//! is symmetric positive definite as long as every free node has a path to a
//! driven one. Nodes in components without any input electrode are pinned to
//! 0 V and excluded from the system.
//!
//! The sparsity pattern depends only on the graph, so the fill-reducing
//! ordering and symbolic factorization are computed once per device and each
//! solve only refactors numerically.

use std::sync::{Arc, Mutex};

use super::cholesky::{FactorScratch, SupernodalPlan};
use super::DynamicsError;
use crate::netgen::DeviceGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeClass {
    Free(usize),
    Driven(usize),
    Pinned,
}

/// Where one junction's conductance lands in the reduced system.
#[derive(Debug, Clone, Copy)]
enum Stamp {
    /// Both ends free: two diagonal slots and the off-diagonal slot.
    Free { diag_a: usize, diag_b: usize, off: usize },
    /// One end free, the other driven by input `input`.
    Coupled { diag: usize, free: usize, input: usize },
    /// Both ends driven, or pinned: no unknowns involved.
    Inert,
}

/// Per-device factorization plan, shareable across threads.
pub struct NetworkSolver {
    node_count: usize,
    input_count: usize,
    classes: Vec<NodeClass>,
    free_nodes: Vec<usize>,
    stamps: Vec<Stamp>,
    plan: Option<SupernodalPlan>,
    components: Vec<usize>,
    /// Factor of the system with every junction at one uniform conductance,
    /// keyed by that conductance's bits.
    uniform_factor: Mutex<Option<(u64, Arc<Vec<f64>>)>>,
}

/// Scratch buffers for one thread of solves.
pub struct SolveWorkspace {
    values: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Option<FactorScratch>,
}

impl NetworkSolver {
    pub fn new(graph: &DeviceGraph) -> Result<Self, DynamicsError> {
        let n = graph.node_count();
        let comps = graph.components();
        let mut energized = vec![false; graph.component_count()];
        for &node in graph.input_node_ids() {
            energized[comps[node]] = true;
        }
        let mut classes = vec![NodeClass::Pinned; n];
        for (slot, &node) in graph.input_node_ids().iter().enumerate() {
            classes[node] = NodeClass::Driven(slot);
        }
        let mut free_nodes = Vec::new();
        for node in 0..n {
            if classes[node] == NodeClass::Pinned && energized[comps[node]] {
                classes[node] = NodeClass::Free(free_nodes.len());
                free_nodes.push(node);
            }
        }
        let m = free_nodes.len();

        // lower-triangular CSC pattern: diagonal plus (max, min) per free-free edge
        let mut cols: Vec<Vec<usize>> = (0..m).map(|j| vec![j]).collect();
        for j in &graph.junctions {
            if let (NodeClass::Free(a), NodeClass::Free(b)) = (classes[j.node_a], classes[j.node_b]) {
                cols[a.min(b)].push(a.max(b));
            }
        }
        let mut col_ptr = Vec::with_capacity(m + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for c in &mut cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        let plan = if m == 0 {
            None
        } else {
            Some(SupernodalPlan::analyze(m, &col_ptr, &row_idx).map_err(DynamicsError::Factorization)?)
        };

        let stamps = match &plan {
            None => vec![Stamp::Inert; graph.junctions.len()],
            Some(plan) => graph
                .junctions
                .iter()
                .map(|j| match (classes[j.node_a], classes[j.node_b]) {
                    (NodeClass::Free(a), NodeClass::Free(b)) => Stamp::Free {
                        diag_a: plan.slot(a, a),
                        diag_b: plan.slot(b, b),
                        off: plan.slot(a.max(b), a.min(b)),
                    },
                    (NodeClass::Free(f), NodeClass::Driven(i)) | (NodeClass::Driven(i), NodeClass::Free(f)) => {
                        Stamp::Coupled { diag: plan.slot(f, f), free: plan.perm_inv()[f], input: i }
                    }
                    _ => Stamp::Inert,
                })
                .collect(),
        };
        // from here on free indices are in factor ordering
        if let Some(plan) = &plan {
            for class in &mut classes {
                if let NodeClass::Free(i) = class {
                    *i = plan.perm_inv()[*i];
                }
            }
            free_nodes = plan.perm_fwd().iter().map(|&old| free_nodes[old]).collect();
        }

        Ok(Self {
            node_count: n,
            input_count: graph.input_node_ids().len(),
            classes,
            free_nodes,
            stamps,
            plan,
            components: comps.to_vec(),
            uniform_factor: Mutex::new(None),
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.stamps.len()
    }

    pub fn free_count(&self) -> usize {
        self.free_nodes.len()
    }

    /// Number of stored entries in the Cholesky factor, explicit zeros included.
    pub fn factor_len(&self) -> usize {
        self.plan.as_ref().map_or(0, SupernodalPlan::len_val)
    }

    pub fn workspace(&self) -> SolveWorkspace {
        SolveWorkspace {
            values: vec![0.0; self.factor_len()],
            rhs: vec![0.0; self.free_nodes.len()],
            scratch: self.plan.as_ref().map(SupernodalPlan::scratch),
        }
    }

    fn check_drive(&self, drive: &[f64]) -> Result<(), DynamicsError> {
        if drive.len() != self.input_count {
            return Err(DynamicsError::Length { what: "drive", expected: self.input_count, got: drive.len() });
        }
        if let Some(i) = drive.iter().position(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFiniteDrive(i));
        }
        Ok(())
    }

    fn assemble(&self, conductance: impl Fn(usize) -> f64, drive: &[f64], values: &mut [f64], rhs: &mut [f64]) {
        values.fill(0.0);
        rhs.fill(0.0);
        for (e, stamp) in self.stamps.iter().enumerate() {
            match *stamp {
                Stamp::Free { diag_a, diag_b, off } => {
                    let g = conductance(e);
                    values[diag_a] += g;
                    values[diag_b] += g;
                    values[off] -= g;
                }
                Stamp::Coupled { diag, free, input } => {
                    let g = conductance(e);
                    values[diag] += g;
                    rhs[free] += g * drive[input];
                }
                Stamp::Inert => {}
            }
        }
    }

    fn assemble_rhs(&self, g: f64, drive: &[f64], rhs: &mut [f64]) {
        rhs.fill(0.0);
        for stamp in &self.stamps {
            if let Stamp::Coupled { free, input, .. } = *stamp {
                rhs[free] += g * drive[input];
            }
        }
    }

    fn factorize(&self, values: &mut [f64], scratch: &mut Option<FactorScratch>) -> Result<(), DynamicsError> {
        let (Some(plan), Some(scratch)) = (&self.plan, scratch) else { return Ok(()) };
        plan.factorize(values, scratch).map_err(|col| {
            let node = self.free_nodes[col];
            DynamicsError::Singular(format!(
                "non-positive pivot at node {node} (component {})",
                self.components[node]
            ))
        })
    }

    fn back_substitute(&self, l_values: &[f64], rhs: &mut [f64]) {
        if let Some(plan) = &self.plan {
            plan.solve_in_place(l_values, rhs);
        }
    }

    fn scatter(&self, drive: &[f64], rhs: &[f64], out: &mut [f64]) {
        for (node, class) in self.classes.iter().enumerate() {
            out[node] = match *class {
                NodeClass::Free(i) => rhs[i],
                NodeClass::Driven(i) => drive[i],
                NodeClass::Pinned => 0.0,
            };
        }
    }

    /// Solves for every node voltage given per-junction conductances and the
    /// input-electrode drive. `out` must have one slot per node.
    pub fn solve_into(
        &self,
        conductance: &[f64],
        drive: &[f64],
        ws: &mut SolveWorkspace,
        out: &mut [f64],
    ) -> Result<(), DynamicsError> {
        if conductance.len() != self.stamps.len() {
            return Err(DynamicsError::Length { what: "conductance", expected: self.stamps.len(), got: conductance.len() });
        }
        self.check_drive(drive)?;
        assert_eq!(out.len(), self.node_count, "output buffer length");
        self.assemble(|e| conductance[e], drive, &mut ws.values, &mut ws.rhs);
        self.factorize(&mut ws.values, &mut ws.scratch)?;
        self.back_substitute(&ws.values, &mut ws.rhs);
        self.scatter(drive, &ws.rhs, out);
        Ok(())
    }

    /// Same as [`solve_into`](Self::solve_into) for the case where every
    /// junction has conductance `g`. The factor is computed once and reused
    /// across calls with the same `g`.
    pub fn solve_uniform_into(
        &self,
        g: f64,
        drive: &[f64],
        ws: &mut SolveWorkspace,
        out: &mut [f64],
    ) -> Result<(), DynamicsError> {
        self.check_drive(drive)?;
        assert_eq!(out.len(), self.node_count, "output buffer length");
        let cached = {
            let guard = self.uniform_factor.lock().expect("uniform factor lock");
            guard.as_ref().filter(|(bits, _)| *bits == g.to_bits()).map(|(_, f)| Arc::clone(f))
        };
        let factor = match cached {
            Some(f) => f,
            None => {
                self.assemble(|_| g, drive, &mut ws.values, &mut ws.rhs);
                self.factorize(&mut ws.values, &mut ws.scratch)?;
                let l = Arc::new(ws.values.clone());
                *self.uniform_factor.lock().expect("uniform factor lock") = Some((g.to_bits(), Arc::clone(&l)));
                l
            }
        };
        self.assemble_rhs(g, drive, &mut ws.rhs);
        self.back_substitute(&factor, &mut ws.rhs);
        self.scatter(drive, &ws.rhs, out);
        Ok(())
    }
}

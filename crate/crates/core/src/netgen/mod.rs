//! Procedural generation of the simulated nanowire device.
//!
//! A device is a set of straight wire segments scattered over a square plane,
//! overlaid with a square grid of disk electrodes. Every wire–wire crossing and
//! every wire–electrode contact becomes a memristive junction. The resulting
//! [`DeviceGraph`] has wires and electrodes as nodes and junctions as edges.
//!
//! Node ids are assigned wires first (`0..wire_count`), then electrodes in
//! row-major grid order.

pub mod geometry;
mod junctions;
mod serial;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::Point;
pub use junctions::detect_junctions;
pub use serial::{read_device, write_device, DeviceFile, DEVICE_FORMAT_VERSION};

/// Lengths below this floor are resampled.
pub const MIN_WIRE_LENGTH: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum NetgenError {
    #[error("invalid generation parameter: {0}")]
    InvalidParams(String),
    #[error("grid_n = {0} is not divisible by 2; the input sub-grid is undefined")]
    OddGrid(usize),
    #[error("junction {junction} references node {node}, but the device has {nodes} nodes")]
    DanglingJunction { junction: usize, node: usize, nodes: usize },
    #[error("junction {0} connects a node to itself")]
    SelfJunction(usize),
}

/// Parameters of the procedurally generated device. Lengths are in µm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub wire_count: usize,
    /// Plane width and height.
    pub plane_size: (f64, f64),
    /// Shape of the generalized normal distribution of wire centres.
    pub center_dist_beta: f64,
    /// Scale of the generalized normal distribution, per axis.
    pub center_dist_scale: f64,
    pub length_mean: f64,
    pub length_std: f64,
    pub grid_n: usize,
    pub electrode_diameter: f64,
    /// Centre-to-centre spacing of neighbouring electrodes.
    pub electrode_pitch: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            wire_count: 1520,
            plane_size: (250.0, 250.0),
            center_dist_beta: 5.0,
            center_dist_scale: 125.0,
            length_mean: 30.0,
            length_std: 6.0,
            grid_n: 16,
            electrode_diameter: 8.0,
            electrode_pitch: 8.0,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), NetgenError> {
        let bad = |m: &str| Err(NetgenError::InvalidParams(m.to_string()));
        let (w, h) = self.plane_size;
        if self.wire_count == 0 {
            return bad("wire_count must be positive");
        }
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return bad("plane_size must be positive and finite");
        }
        if !(self.center_dist_beta > 0.0 && self.center_dist_scale > 0.0) {
            return bad("center distribution shape and scale must be positive");
        }
        if !(self.length_mean > 0.0) {
            return bad("length_mean must be positive");
        }
        if !(self.length_std >= 0.0) {
            return bad("length_std must be non-negative");
        }
        if self.grid_n == 0 {
            return bad("grid_n must be positive");
        }
        if !self.grid_n.is_multiple_of(2) {
            return Err(NetgenError::OddGrid(self.grid_n));
        }
        if !(self.electrode_diameter > 0.0) {
            return bad("electrode_diameter must be positive");
        }
        if !(self.electrode_pitch > 0.0) {
            return bad("electrode_pitch must be positive");
        }
        let span = self.electrode_pitch * (self.grid_n - 1) as f64 + self.electrode_diameter;
        if span > w.min(h) {
            return bad("electrode grid does not fit inside the plane");
        }
        Ok(())
    }

    pub fn plane_center(&self) -> Point {
        Point::new(self.plane_size.0 / 2.0, self.plane_size.1 / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wire {
    pub id: usize,
    pub center: Point,
    /// Radians in `[0, π)`.
    pub orientation: f64,
    pub length: f64,
    pub endpoints: [Point; 2],
}

impl Wire {
    pub fn new(id: usize, center: Point, orientation: f64, length: f64) -> Self {
        let (s, c) = orientation.sin_cos();
        let hx = 0.5 * length * c;
        let hy = 0.5 * length * s;
        Self {
            id,
            center,
            orientation,
            length,
            endpoints: [
                Point::new(center.x - hx, center.y - hy),
                Point::new(center.x + hx, center.y + hy),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElectrodeRole {
    Input,
    Readout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub id: usize,
    pub center: Point,
    pub radius: f64,
    pub role: ElectrodeRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JunctionKind {
    WireWire,
    WireElectrode,
}

/// A memristive contact. `node_a < node_b` always; for wire–electrode
/// junctions `node_a` is the wire and `node_b` the electrode node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: usize,
    pub kind: JunctionKind,
    pub node_a: usize,
    pub node_b: usize,
    pub position: Point,
}

/// Samples one coordinate from a generalized normal distribution centred on
/// `mu`, resampling until it lands in `[0, extent]`.
fn sample_gen_normal<R: Rng>(rng: &mut R, gamma: &Gamma<f64>, mu: f64, scale: f64, beta: f64, extent: f64) -> f64 {
    loop {
        // |X - mu| / scale ~ Gamma(1/beta, 1)^(1/beta), sign uniform
        let mag = gamma.sample(rng).powf(1.0 / beta);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let x = mu + sign * scale * mag;
        if (0.0..=extent).contains(&x) {
            return x;
        }
    }
}

/// Scatters `wire_count` wires over the plane.
///
/// Each wire draws, in order, its centre x, centre y, orientation and length
/// from one seeded stream, so a larger `wire_count` extends a smaller one.
pub fn sample_wires(params: &GenParams) -> Result<Vec<Wire>, NetgenError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let beta = params.center_dist_beta;
    let gamma = Gamma::new(1.0 / beta, 1.0).map_err(|e| NetgenError::InvalidParams(e.to_string()))?;
    let length = Normal::new(params.length_mean, params.length_std)
        .map_err(|e| NetgenError::InvalidParams(e.to_string()))?;
    let mid = params.plane_center();
    let (w, h) = params.plane_size;
    let scale = params.center_dist_scale;

    let wires = (0..params.wire_count)
        .map(|id| {
            let x = sample_gen_normal(&mut rng, &gamma, mid.x, scale, beta, w);
            let y = sample_gen_normal(&mut rng, &gamma, mid.y, scale, beta, h);
            let theta = rng.random::<f64>() * std::f64::consts::PI;
            let len = loop {
                let l = length.sample(&mut rng);
                if l >= MIN_WIRE_LENGTH {
                    break l;
                }
            };
            Wire::new(id, Point::new(x, y), theta, len)
        })
        .collect();
    Ok(wires)
}

/// Lays out the `grid_n × grid_n` electrode grid, centred on the plane.
///
/// Electrodes at even (row, column) indices are inputs; they form an evenly
/// spaced `grid_n/2 × grid_n/2` sub-grid. Electrode ids follow row-major order.
pub fn place_electrodes(params: &GenParams) -> Result<Vec<Electrode>, NetgenError> {
    params.validate()?;
    let n = params.grid_n;
    let mid = params.plane_center();
    let offset = 0.5 * params.electrode_pitch * (n - 1) as f64;
    let radius = 0.5 * params.electrode_diameter;
    let mut out = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let center = Point::new(
                mid.x - offset + col as f64 * params.electrode_pitch,
                mid.y - offset + row as f64 * params.electrode_pitch,
            );
            let role = if row % 2 == 0 && col % 2 == 0 {
                ElectrodeRole::Input
            } else {
                ElectrodeRole::Readout
            };
            out.push(Electrode { id: row * n + col, center, radius, role });
        }
    }
    Ok(out)
}

/// The device as a graph: wires and electrodes are nodes, junctions are edges.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceGraph {
    pub params: GenParams,
    pub wires: Vec<Wire>,
    pub electrodes: Vec<Electrode>,
    pub junctions: Vec<Junction>,
    /// CSR offsets into `adjacency`, one entry per node plus one.
    adj_offsets: Vec<usize>,
    /// `(neighbour node, junction id)` pairs.
    adjacency: Vec<(usize, usize)>,
    input_node_ids: Vec<usize>,
    readout_node_ids: Vec<usize>,
    components: Vec<usize>,
    component_count: usize,
}

impl DeviceGraph {
    pub fn node_count(&self) -> usize {
        self.wires.len() + self.electrodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.junctions.len()
    }

    pub fn electrode_node(&self, electrode_id: usize) -> usize {
        self.wires.len() + electrode_id
    }

    /// Input electrode nodes in row-major grid order.
    pub fn input_node_ids(&self) -> &[usize] {
        &self.input_node_ids
    }

    /// Readout electrode nodes in row-major grid order.
    pub fn readout_node_ids(&self) -> &[usize] {
        &self.readout_node_ids
    }

    /// Connected-component label per node; labels are `0..component_count`
    /// in order of each component's smallest node id.
    pub fn components(&self) -> &[usize] {
        &self.components
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[self.adj_offsets[node]..self.adj_offsets[node + 1]]
    }

    pub fn wire_wire_count(&self) -> usize {
        self.junctions.iter().filter(|j| j.kind == JunctionKind::WireWire).count()
    }
}

/// Builds the device graph and labels its connected components.
pub fn build_graph(
    params: GenParams,
    wires: Vec<Wire>,
    electrodes: Vec<Electrode>,
    junctions: Vec<Junction>,
) -> Result<DeviceGraph, NetgenError> {
    let nodes = wires.len() + electrodes.len();
    let mut degree = vec![0usize; nodes];
    for j in &junctions {
        for node in [j.node_a, j.node_b] {
            if node >= nodes {
                return Err(NetgenError::DanglingJunction { junction: j.id, node, nodes });
            }
        }
        if j.node_a == j.node_b {
            return Err(NetgenError::SelfJunction(j.id));
        }
        degree[j.node_a] += 1;
        degree[j.node_b] += 1;
    }

    let mut adj_offsets = Vec::with_capacity(nodes + 1);
    adj_offsets.push(0);
    for d in &degree {
        adj_offsets.push(adj_offsets.last().unwrap() + d);
    }
    let mut fill = adj_offsets[..nodes].to_vec();
    let mut adjacency = vec![(0, 0); adj_offsets[nodes]];
    for (edge, j) in junctions.iter().enumerate() {
        adjacency[fill[j.node_a]] = (j.node_b, edge);
        fill[j.node_a] += 1;
        adjacency[fill[j.node_b]] = (j.node_a, edge);
        fill[j.node_b] += 1;
    }

    let mut components = vec![usize::MAX; nodes];
    let mut component_count = 0;
    let mut stack = Vec::new();
    for start in 0..nodes {
        if components[start] != usize::MAX {
            continue;
        }
        components[start] = component_count;
        stack.push(start);
        while let Some(n) = stack.pop() {
            for &(m, _) in &adjacency[adj_offsets[n]..adj_offsets[n + 1]] {
                if components[m] == usize::MAX {
                    components[m] = component_count;
                    stack.push(m);
                }
            }
        }
        component_count += 1;
    }

    let base = wires.len();
    let input_node_ids = electrodes
        .iter()
        .filter(|e| e.role == ElectrodeRole::Input)
        .map(|e| base + e.id)
        .collect();
    let readout_node_ids = electrodes
        .iter()
        .filter(|e| e.role == ElectrodeRole::Readout)
        .map(|e| base + e.id)
        .collect();

    Ok(DeviceGraph {
        params,
        wires,
        electrodes,
        junctions,
        adj_offsets,
        adjacency,
        input_node_ids,
        readout_node_ids,
        components,
        component_count,
    })
}

/// Runs the whole generation chain for one parameter set.
pub fn generate(params: &GenParams) -> Result<DeviceGraph, NetgenError> {
    let wires = sample_wires(params)?;
    let electrodes = place_electrodes(params)?;
    let junctions = detect_junctions(&wires, &electrodes);
    build_graph(params.clone(), wires, electrodes, junctions)
}

//! Oracles shared by the integration tests.
#![allow(dead_code)]

use nwn_core::netgen::{generate, DeviceGraph, GenParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Node voltages from a dense nodal-analysis solve: inputs fixed to the
/// drive, components without an input held at 0 V, every other node at
/// zero net current.
pub fn dense_node_voltages(graph: &DeviceGraph, g: &[f64], drive: &[f64]) -> Vec<f64> {
    let n = graph.node_count();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for (&node, &v) in graph.input_node_ids().iter().zip(drive) {
        fixed[node] = Some(v);
    }
    let comps = graph.components();
    let mut energized = vec![false; graph.component_count()];
    for &node in graph.input_node_ids() {
        energized[comps[node]] = true;
    }
    for node in 0..n {
        if !energized[comps[node]] {
            fixed[node] = Some(0.0);
        }
    }
    let unknown: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut index = vec![usize::MAX; n];
    for (k, &node) in unknown.iter().enumerate() {
        index[node] = k;
    }
    let m = unknown.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (j, &gj) in graph.junctions.iter().zip(g) {
        for (p, q) in [(j.node_a, j.node_b), (j.node_b, j.node_a)] {
            if index[p] == usize::MAX {
                continue;
            }
            a[index[p]][index[p]] += gj;
            match fixed[q] {
                Some(v) => b[index[p]] += gj * v,
                None => a[index[p]][index[q]] -= gj,
            }
        }
    }
    let x = gauss_solve(a, b);
    (0..n).map(|i| fixed[i].unwrap_or_else(|| x[index[i]])).collect()
}

/// Worst per-node current imbalance over all non-input nodes, each scaled
/// by that node's total conductance times `max |v|`.
pub fn conservation_residual(graph: &DeviceGraph, g: &[f64], v: &[f64]) -> f64 {
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut is_input = vec![false; graph.node_count()];
    for &i in graph.input_node_ids() {
        is_input[i] = true;
    }
    let mut worst = 0.0f64;
    for node in 0..graph.node_count() {
        if is_input[node] {
            continue;
        }
        let (mut current, mut total) = (0.0, 0.0);
        for &(m, e) in graph.neighbors(node) {
            current += g[e] * (v[node] - v[m]);
            total += g[e];
        }
        if total > 0.0 && vmax > 0.0 {
            worst = worst.max(current.abs() / (total * vmax));
        }
    }
    worst
}

/// A random device with at most 200 nodes.
pub fn small_random_device(seed: u64) -> DeviceGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let side = rng.random_range(40.0..80.0);
    let grid_n = if rng.random_bool(0.5) { 2 } else { 4 };
    let params = GenParams {
        wire_count: rng.random_range(20..=200 - grid_n * grid_n),
        plane_size: (side, side),
        center_dist_scale: side / 2.0,
        length_mean: rng.random_range(10.0..30.0),
        length_std: 3.0,
        grid_n,
        seed,
        ..GenParams::default()
    };
    generate(&params).unwrap()
}

/// Conductances spread log-uniformly over `[lo, hi]`.
pub fn random_conductances(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| lo * (hi / lo).powf(rng.random::<f64>())).collect()
}

pub fn random_drive(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-0.4..=0.8)).collect()
}

/// `max |a - b| / max |b|`
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 { diff } else { diff / scale }
}

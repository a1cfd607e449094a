use super::geometry::{segment_disk_contact, segment_intersection, Point};
use super::{Electrode, Junction, JunctionKind, Wire};

/// Uniform bucket grid over wire bounding boxes.
struct BucketGrid {
    origin: Point,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
}

struct CellRange {
    c0: usize,
    c1: usize,
    r0: usize,
    r1: usize,
}

impl BucketGrid {
    fn new(wires: &[Wire]) -> (Self, Vec<CellRange>) {
        let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        let mut total_len = 0.0;
        for w in wires {
            for p in w.endpoints {
                lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
            }
            total_len += w.length;
        }
        // cells of roughly half a mean wire length keep buckets short
        let mean_len = total_len / wires.len() as f64;
        let cell = (0.5 * mean_len).max(1e-6);
        let cols = (((hi.x - lo.x) / cell).floor() as usize + 1).max(1);
        let rows = (((hi.y - lo.y) / cell).floor() as usize + 1).max(1);
        let mut grid = Self { origin: lo, cell, cols, rows, buckets: vec![Vec::new(); cols * rows] };
        let ranges: Vec<CellRange> = wires.iter().map(|w| grid.range_of(w)).collect();
        for (i, r) in ranges.iter().enumerate() {
            for row in r.r0..=r.r1 {
                for col in r.c0..=r.c1 {
                    grid.buckets[row * grid.cols + col].push(i as u32);
                }
            }
        }
        (grid, ranges)
    }

    fn cell_of(&self, v: f64, o: f64, n: usize) -> usize {
        (((v - o) / self.cell).floor().max(0.0) as usize).min(n - 1)
    }

    fn range_of(&self, w: &Wire) -> CellRange {
        let [a, b] = w.endpoints;
        CellRange {
            c0: self.cell_of(a.x.min(b.x), self.origin.x, self.cols),
            c1: self.cell_of(a.x.max(b.x), self.origin.x, self.cols),
            r0: self.cell_of(a.y.min(b.y), self.origin.y, self.rows),
            r1: self.cell_of(a.y.max(b.y), self.origin.y, self.rows),
        }
    }
}

fn wire_wire_junctions(wires: &[Wire]) -> Vec<(usize, usize, Point)> {
    if wires.len() < 2 {
        return Vec::new();
    }
    let (grid, ranges) = BucketGrid::new(wires);
    let mut out = Vec::new();
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let bucket = &grid.buckets[row * grid.cols + col];
            for (k, &i) in bucket.iter().enumerate() {
                let (i, ri) = (i as usize, &ranges[i as usize]);
                for &j in &bucket[k + 1..] {
                    let (j, rj) = (j as usize, &ranges[j as usize]);
                    // test each pair only in the first cell their boxes share
                    if col != ri.c0.max(rj.c0) || row != ri.r0.max(rj.r0) {
                        continue;
                    }
                    let (wa, wb) = (&wires[i], &wires[j]);
                    if let Some(p) = segment_intersection(wa.endpoints[0], wa.endpoints[1], wb.endpoints[0], wb.endpoints[1]) {
                        out.push((i.min(j), i.max(j), p));
                    }
                }
            }
        }
    }
    out
}

fn wire_electrode_junctions(wires: &[Wire], electrodes: &[Electrode]) -> Vec<(usize, usize, Point)> {
    let mut out = Vec::new();
    if electrodes.is_empty() {
        return out;
    }
    let r_max = electrodes.iter().map(|e| e.radius).fold(0.0, f64::max);
    // electrodes indexed by x so each wire only checks those near its box
    let mut by_x: Vec<usize> = (0..electrodes.len()).collect();
    by_x.sort_by(|&a, &b| electrodes[a].center.x.total_cmp(&electrodes[b].center.x));
    let xs: Vec<f64> = by_x.iter().map(|&i| electrodes[i].center.x).collect();
    for (wi, w) in wires.iter().enumerate() {
        let [a, b] = w.endpoints;
        let (x0, x1) = (a.x.min(b.x) - r_max, a.x.max(b.x) + r_max);
        let (y0, y1) = (a.y.min(b.y) - r_max, a.y.max(b.y) + r_max);
        let start = xs.partition_point(|&x| x < x0);
        for &ei in &by_x[start..] {
            let e = &electrodes[ei];
            if e.center.x > x1 {
                break;
            }
            if e.center.y < y0 || e.center.y > y1 {
                continue;
            }
            if let Some(p) = segment_disk_contact(a, b, e.center, e.radius) {
                out.push((wi, ei, p));
            }
        }
    }
    out
}

/// Finds every wire–wire crossing and wire–electrode contact.
///
/// Junctions come back sorted by `(node_a, node_b)` with ids equal to their
/// position, so the output does not depend on traversal order. Electrode
/// node ids are offset by `wires.len()`.
pub fn detect_junctions(wires: &[Wire], electrodes: &[Electrode]) -> Vec<Junction> {
    let base = wires.len();
    let mut raw: Vec<(usize, usize, Point, JunctionKind)> = wire_wire_junctions(wires)
        .into_iter()
        .map(|(a, b, p)| (a, b, p, JunctionKind::WireWire))
        .chain(
            wire_electrode_junctions(wires, electrodes)
                .into_iter()
                .map(|(w, e, p)| (w, base + e, p, JunctionKind::WireElectrode)),
        )
        .collect();
    raw.sort_by_key(|x| (x.0, x.1));
    raw.into_iter()
        .enumerate()
        .map(|(id, (node_a, node_b, position, kind))| Junction { id, kind, node_a, node_b, position })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::geometry::point_segment_distance;
    use crate::netgen::{place_electrodes, sample_wires, ElectrodeRole, GenParams};

    fn naive(wires: &[Wire], electrodes: &[Electrode]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..wires.len() {
            for j in i + 1..wires.len() {
                let (a, b) = (&wires[i], &wires[j]);
                if segment_intersection(a.endpoints[0], a.endpoints[1], b.endpoints[0], b.endpoints[1]).is_some() {
                    out.push((i, j));
                }
            }
            for (k, e) in electrodes.iter().enumerate() {
                if segment_disk_contact(wires[i].endpoints[0], wires[i].endpoints[1], e.center, e.radius).is_some() {
                    out.push((i, wires.len() + k));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn indexed_matches_naive() {
        for seed in 0..4 {
            let p = GenParams { wire_count: 400, seed, ..GenParams::default() };
            let w = sample_wires(&p).unwrap();
            let e = place_electrodes(&p).unwrap();
            let got: Vec<_> = detect_junctions(&w, &e).iter().map(|j| (j.node_a, j.node_b)).collect();
            assert_eq!(got, naive(&w, &e));
        }
    }

    #[test]
    fn crossing_pair() {
        let w = vec![
            Wire::new(0, Point::new(10.0, 10.0), 0.0, 8.0),
            Wire::new(1, Point::new(10.0, 10.0), std::f64::consts::FRAC_PI_2, 8.0),
        ];
        let j = detect_junctions(&w, &[]);
        assert_eq!(j.len(), 1);
        assert_eq!(j[0].kind, JunctionKind::WireWire);
        assert!(j[0].position.distance(Point::new(10.0, 10.0)) < 1e-12);
    }

    #[test]
    fn parallel_pair() {
        let w = vec![
            Wire::new(0, Point::new(10.0, 10.0), 0.0, 8.0),
            Wire::new(1, Point::new(10.0, 12.0), 0.0, 8.0),
        ];
        assert!(detect_junctions(&w, &[]).is_empty());
    }

    #[test]
    fn empty_inputs() {
        assert!(detect_junctions(&[], &[]).is_empty());
    }

    #[test]
    fn wire_through_two_electrodes() {
        let w = vec![Wire::new(0, Point::new(20.0, 10.0), 0.0, 40.0)];
        let e = vec![
            Electrode { id: 0, center: Point::new(10.0, 10.0), radius: 4.0, role: ElectrodeRole::Input },
            Electrode { id: 1, center: Point::new(30.0, 11.0), radius: 4.0, role: ElectrodeRole::Readout },
            Electrode { id: 2, center: Point::new(30.0, 30.0), radius: 4.0, role: ElectrodeRole::Readout },
        ];
        let j = detect_junctions(&w, &e);
        assert_eq!(j.len(), 2);
        assert_eq!((j[0].node_a, j[0].node_b), (0, 1));
        assert_eq!((j[1].node_a, j[1].node_b), (0, 2));
        assert!(j.iter().all(|j| j.kind == JunctionKind::WireElectrode));
    }

    #[test]
    fn default_device_geometry_is_sound() {
        let p = GenParams::with_seed(5);
        let w = sample_wires(&p).unwrap();
        let e = place_electrodes(&p).unwrap();
        for j in detect_junctions(&w, &e) {
            let a = &w[j.node_a];
            assert!(point_segment_distance(j.position, a.endpoints[0], a.endpoints[1]) < 1e-9);
            match j.kind {
                JunctionKind::WireWire => {
                    let b = &w[j.node_b];
                    assert!(point_segment_distance(j.position, b.endpoints[0], b.endpoints[1]) < 1e-9);
                }
                JunctionKind::WireElectrode => {
                    let el = &e[j.node_b - w.len()];
                    assert!(j.position.distance(el.center) <= el.radius + 1e-9);
                }
            }
        }
    }
}

//! Planar primitives used by junction detection.

use serde::{Deserialize, Serialize};

/// A point in the device plane, in micrometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + t * (o.x - self.x), self.y + t * (o.y - self.y))
    }

    pub fn distance(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b.sub(a);
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (p.sub(a).dot(d) / len2).clamp(0.0, 1.0);
    p.distance(a.lerp(b, t))
}

/// Contact point between two closed segments, if they touch.
///
/// Crossing segments yield the crossing point. Collinear segments that
/// overlap yield the midpoint of the shared interval.
pub fn segment_intersection(p0: Point, p1: Point, q0: Point, q1: Point) -> Option<Point> {
    let r = p1.sub(p0);
    let s = q1.sub(q0);
    let qp = q0.sub(p0);
    let denom = r.cross(s);
    let scale = r.dot(r).max(s.dot(s));
    // relative parallel test; exact zero for genuinely parallel inputs
    if denom.abs() <= 1e-14 * scale {
        let rr = r.dot(r);
        if rr == 0.0 {
            return (point_segment_distance(p0, q0, q1) <= 1e-12).then_some(p0);
        }
        // distance from q0 to the carrier line of p
        if qp.cross(r).abs() / rr.sqrt() > 1e-12 {
            return None;
        }
        let t0 = qp.dot(r) / rr;
        let t1 = q1.sub(p0).dot(r) / rr;
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        let lo = lo.max(0.0);
        let hi = hi.min(1.0);
        if lo > hi {
            return None;
        }
        return Some(p0.lerp(p1, 0.5 * (lo + hi)));
    }
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        // whichever parametrisation is closer to the interior is better conditioned
        let pt = if (t - 0.5).abs() <= (u - 0.5).abs() {
            p0.lerp(p1, t)
        } else {
            q0.lerp(q1, u)
        };
        Some(pt)
    } else {
        None
    }
}

/// Midpoint of the chord `segment ∩ disk`, if the segment touches the disk.
pub fn segment_disk_contact(a: Point, b: Point, center: Point, radius: f64) -> Option<Point> {
    let d = b.sub(a);
    let f = a.sub(center);
    let dd = d.dot(d);
    if dd == 0.0 {
        return (a.distance(center) <= radius).then_some(a);
    }
    // |f + t d|^2 = r^2
    let half_b = f.dot(d);
    let c = f.dot(f) - radius * radius;
    let disc = half_b * half_b - dd * c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let t_in = ((-half_b - root) / dd).max(0.0);
    let t_out = ((-half_b + root) / dd).min(1.0);
    if t_in > t_out {
        return None;
    }
    Some(a.lerp(b, 0.5 * (t_in + t_out)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perpendicular_crossing() {
        let p = segment_intersection(
            Point::new(0.0, 10.0),
            Point::new(20.0, 10.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 20.0),
        )
        .unwrap();
        assert!((p.x - 10.0).abs() < 1e-12 && (p.y - 10.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_disjoint() {
        assert!(segment_intersection(
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(10.0, 1.0),
        )
        .is_none());
    }

    #[test]
    fn collinear_overlap_midpoint() {
        let p = segment_intersection(
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(6.0, 0.0),
            Point::new(14.0, 0.0),
        )
        .unwrap();
        assert_eq!(p, Point::new(8.0, 0.0));
    }

    #[test]
    fn collinear_disjoint() {
        assert!(segment_intersection(
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
            Point::new(3.0, 3.0),
        )
        .is_none());
    }

    #[test]
    fn touching_endpoint() {
        let p = segment_intersection(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 5.0),
        );
        assert_eq!(p, Some(Point::new(1.0, 0.0)));
    }

    #[test]
    fn chord_midpoint_of_crossing_disk() {
        let p = segment_disk_contact(
            Point::new(-10.0, 1.0),
            Point::new(10.0, 1.0),
            Point::new(0.0, 0.0),
            4.0,
        )
        .unwrap();
        assert!(p.x.abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn segment_ending_inside_disk() {
        let p = segment_disk_contact(Point::new(-10.0, 0.0), Point::new(2.0, 0.0), Point::new(0.0, 0.0), 4.0)
            .unwrap();
        assert!((p.x + 1.0).abs() < 1e-12);
    }

    #[test]
    fn segment_missing_disk() {
        assert!(
            segment_disk_contact(Point::new(-10.0, 5.0), Point::new(10.0, 5.0), Point::new(0.0, 0.0), 4.0)
                .is_none()
        );
        assert!(
            segment_disk_contact(Point::new(5.0, 0.0), Point::new(10.0, 0.0), Point::new(0.0, 0.0), 4.0)
                .is_none()
        );
    }
}

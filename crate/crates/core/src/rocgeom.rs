//! Geometry on the ROC plane: per-group hulls, their intersection, and the
//! distances used to compare feasible areas.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::probcore::RocPoint;

/// Coordinates closer than this are merged, and values this close to 0 or 1
/// are snapped onto the unit-square boundary.
pub const SNAP: f64 = 1e-12;

/// Number of boundary samples per region used by [`region_hausdorff`].
pub const HAUSDORFF_SAMPLES: usize = 256;

/// A convex region of the unit square, stored as counterclockwise vertices
/// without repeats. Zero-area regions keep two vertices (a segment) or one
/// (a point); an empty region has none.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexRegion {
    vertices: Vec<RocPoint>,
}

fn cross(o: RocPoint, a: RocPoint, b: RocPoint) -> f64 {
    (a.fpr - o.fpr) * (b.tpr - o.tpr) - (a.tpr - o.tpr) * (b.fpr - o.fpr)
}

fn dist(a: RocPoint, b: RocPoint) -> f64 {
    (a.fpr - b.fpr).hypot(a.tpr - b.tpr)
}

fn snap(v: f64) -> f64 {
    if v.abs() <= SNAP {
        0.0
    } else if (v - 1.0).abs() <= SNAP {
        1.0
    } else {
        v
    }
}

fn point_segment_distance(p: RocPoint, a: RocPoint, b: RocPoint) -> f64 {
    let (dx, dy) = (b.fpr - a.fpr, b.tpr - a.tpr);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p.fpr - a.fpr) * dx + (p.tpr - a.tpr) * dy) / len2).clamp(0.0, 1.0);
    dist(p, RocPoint::new(a.fpr + t * dx, a.tpr + t * dy))
}

/// Half-plane `{ v : n·v >= c }` with a unit normal.
#[derive(Debug, Clone, Copy)]
struct HalfPlane {
    nx: f64,
    ny: f64,
    c: f64,
}

impl HalfPlane {
    /// The side to the left of the directed line `p -> q`.
    fn left_of(p: RocPoint, q: RocPoint) -> Self {
        let (dx, dy) = (q.fpr - p.fpr, q.tpr - p.tpr);
        let len = dx.hypot(dy);
        let (nx, ny) = (-dy / len, dx / len);
        Self { nx, ny, c: nx * p.fpr + ny * p.tpr }
    }

    /// The side of the line through `p` perpendicular to `p -> q` that contains `q`.
    fn toward(p: RocPoint, q: RocPoint) -> Self {
        let (dx, dy) = (q.fpr - p.fpr, q.tpr - p.tpr);
        let len = dx.hypot(dy);
        let (nx, ny) = (dx / len, dy / len);
        Self { nx, ny, c: nx * p.fpr + ny * p.tpr }
    }

    fn signed(&self, v: RocPoint) -> f64 {
        self.nx * v.fpr + self.ny * v.tpr - self.c
    }

    /// One Sutherland-Hodgman pass over a closed vertex loop.
    fn clip(&self, poly: &[RocPoint]) -> Vec<RocPoint> {
        let mut out = Vec::with_capacity(poly.len() + 2);
        let n = poly.len();
        if n == 1 {
            if self.signed(poly[0]) >= -SNAP {
                out.push(poly[0]);
            }
            return out;
        }
        for i in 0..n {
            let cur = poly[i];
            let next = poly[(i + 1) % n];
            let (sc, sn) = (self.signed(cur), self.signed(next));
            let (cin, nin) = (sc >= -SNAP, sn >= -SNAP);
            if cin {
                out.push(cur);
            }
            if cin != nin {
                let t = sc / (sc - sn);
                out.push(RocPoint::new(cur.fpr + t * (next.fpr - cur.fpr), cur.tpr + t * (next.tpr - cur.tpr)));
            }
        }
        out
    }
}

impl ConvexRegion {
    /// Convex hull of arbitrary points (Andrew's monotone chain), with
    /// collinear and near-duplicate points dropped.
    pub fn from_points(points: &[RocPoint]) -> Self {
        let mut pts: Vec<RocPoint> = points.iter().map(|p| RocPoint::new(snap(p.fpr), snap(p.tpr))).collect();
        pts.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));
        pts.dedup_by(|a, b| dist(*a, *b) <= SNAP);
        if pts.len() <= 2 {
            return Self { vertices: pts };
        }
        let mut hull: Vec<RocPoint> = Vec::with_capacity(2 * pts.len());
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &RocPoint>> =
                if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
            for &p in iter {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= SNAP {
                    hull.pop();
                }
                hull.push(p);
            }
            hull.pop();
        }
        hull.dedup_by(|a, b| dist(*a, *b) <= SNAP);
        if hull.len() > 1 && dist(hull[0], hull[hull.len() - 1]) <= SNAP {
            hull.pop();
        }
        Self { vertices: hull }
    }

    /// The full unit square.
    pub fn unit_square() -> Self {
        Self::from_points(&[
            RocPoint::new(0.0, 0.0),
            RocPoint::new(1.0, 0.0),
            RocPoint::new(1.0, 1.0),
            RocPoint::new(0.0, 1.0),
        ])
    }

    /// The diagonal segment `(0,0)-(1,1)`: the rates of trivial predictors.
    pub fn diagonal() -> Self {
        Self::from_points(&[RocPoint::new(0.0, 0.0), RocPoint::new(1.0, 1.0)])
    }

    pub fn vertices(&self) -> &[RocPoint] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Enclosed area; zero for segments and points.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let s: f64 = (0..n)
            .map(|i| {
                let (p, q) = (self.vertices[i], self.vertices[(i + 1) % n]);
                p.fpr * q.tpr - q.fpr * p.tpr
            })
            .sum();
        0.5 * s
    }

    fn half_planes(&self) -> Vec<HalfPlane> {
        let v = &self.vertices;
        match v.len() {
            0 | 1 => Vec::new(),
            2 => vec![
                HalfPlane::left_of(v[0], v[1]),
                HalfPlane::left_of(v[1], v[0]),
                HalfPlane::toward(v[0], v[1]),
                HalfPlane::toward(v[1], v[0]),
            ],
            n => (0..n).map(|i| HalfPlane::left_of(v[i], v[(i + 1) % n])).collect(),
        }
    }

    /// Intersection of two convex regions by successive half-plane clipping.
    pub fn intersect(&self, other: &ConvexRegion) -> ConvexRegion {
        if self.is_empty() || other.is_empty() {
            return ConvexRegion::default();
        }
        if other.vertices.len() == 1 {
            let p = other.vertices[0];
            return if self.contains(p, SNAP) { other.clone() } else { ConvexRegion::default() };
        }
        let mut poly = self.vertices.clone();
        for hp in other.half_planes() {
            poly = hp.clip(&poly);
            if poly.is_empty() {
                return ConvexRegion::default();
            }
        }
        ConvexRegion::from_points(&poly)
    }

    /// Whether `p` lies in the region or within `tol` of it.
    pub fn contains(&self, p: RocPoint, tol: f64) -> bool {
        let v = &self.vertices;
        match v.len() {
            0 => false,
            1 => dist(p, v[0]) <= tol,
            2 => point_segment_distance(p, v[0], v[1]) <= tol,
            n => (0..n).all(|i| HalfPlane::left_of(v[i], v[(i + 1) % n]).signed(p) >= -tol),
        }
    }

    /// Euclidean distance from `p` to the region (zero inside).
    pub fn distance_to(&self, p: RocPoint) -> f64 {
        let v = &self.vertices;
        match v.len() {
            0 => f64::INFINITY,
            1 => dist(p, v[0]),
            2 => point_segment_distance(p, v[0], v[1]),
            n => {
                if self.contains(p, 0.0) {
                    0.0
                } else {
                    (0..n).map(|i| point_segment_distance(p, v[i], v[(i + 1) % n])).fold(f64::INFINITY, f64::min)
                }
            }
        }
    }

    /// Vertices plus `k` points spaced evenly along the boundary.
    pub fn boundary_samples(&self, k: usize) -> Vec<RocPoint> {
        let v = &self.vertices;
        let mut out = v.clone();
        if v.len() < 2 || k == 0 {
            return out;
        }
        let n = v.len();
        let edges: Vec<(RocPoint, RocPoint)> =
            if n == 2 { vec![(v[0], v[1])] } else { (0..n).map(|i| (v[i], v[(i + 1) % n])).collect() };
        let perimeter: f64 = edges.iter().map(|(a, b)| dist(*a, *b)).sum();
        let step = perimeter / k as f64;
        let mut edge = 0;
        let mut walked = 0.0;
        for s in 0..k {
            let target = s as f64 * step;
            while edge + 1 < edges.len() && walked + dist(edges[edge].0, edges[edge].1) < target {
                walked += dist(edges[edge].0, edges[edge].1);
                edge += 1;
            }
            let (a, b) = edges[edge];
            let len = dist(a, b);
            let t = if len > 0.0 { ((target - walked) / len).clamp(0.0, 1.0) } else { 0.0 };
            out.push(RocPoint::new(a.fpr + t * (b.fpr - a.fpr), a.tpr + t * (b.tpr - a.tpr)));
        }
        out
    }

    /// Whether every vertex of `self` lies in `other` (within `tol`); for
    /// convex regions this is set inclusion.
    pub fn is_subset_of(&self, other: &ConvexRegion, tol: f64) -> bool {
        self.vertices.iter().all(|&p| other.contains(p, tol))
    }

    /// Plain-text vertex list, one `fpr tpr` pair per line.
    pub fn to_vertex_text(&self) -> String {
        let mut s = String::new();
        for p in &self.vertices {
            let _ = writeln!(s, "{} {}", p.fpr, p.tpr);
        }
        s
    }

    pub fn from_vertex_text(text: &str) -> Result<Self> {
        let pts = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|l| {
                let v: Vec<f64> = l
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{l:?}: {e}"))))
                    .collect::<Result<_>>()?;
                match v.as_slice() {
                    [f, t] => Ok(RocPoint::new(*f, *t)),
                    _ => Err(Error::Parse(format!("expected two numbers per line, got {l:?}"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_points(&pts))
    }
}

/// `Conv{(0,0), γ, 1-γ, (1,1)}`: every rate pair reachable by randomizing
/// over a group's predictions. On-diagonal `γ` gives the diagonal segment.
pub fn group_hull(gamma: RocPoint) -> ConvexRegion {
    ConvexRegion::from_points(&[RocPoint::new(0.0, 0.0), gamma, gamma.flipped(), RocPoint::new(1.0, 1.0)])
}

/// Rates attainable by post-processing every group to a common point: the
/// intersection of all group hulls.
pub fn feasible_area_post(rates: &[RocPoint]) -> Result<ConvexRegion> {
    let (first, rest) = rates.split_first().ok_or_else(|| Error::Argument("no groups".into()))?;
    Ok(rest.iter().fold(group_hull(*first), |acc, g| acc.intersect(&group_hull(*g))))
}

/// Smallest distance of any group's `|tpr − fpr|` from zero.
pub fn nontriviality_margin(rates: &[RocPoint]) -> f64 {
    rates.iter().map(|g| (g.tpr - g.fpr).abs()).fold(f64::INFINITY, f64::min)
}

pub fn region_contains(r: &ConvexRegion, p: RocPoint, tol: f64) -> bool {
    r.contains(p, tol)
}

/// Symmetric Hausdorff distance between two regions, evaluated on
/// [`HAUSDORFF_SAMPLES`] boundary samples (plus vertices) of each.
pub fn region_hausdorff(r1: &ConvexRegion, r2: &ConvexRegion) -> f64 {
    if r1.is_empty() || r2.is_empty() {
        return if r1.is_empty() && r2.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let one_way = |a: &ConvexRegion, b: &ConvexRegion| {
        a.boundary_samples(HAUSDORFF_SAMPLES).into_iter().map(|p| b.distance_to(p)).fold(0.0, f64::max)
    };
    one_way(r1, r2).max(one_way(r2, r1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(f: f64, t: f64) -> RocPoint {
        RocPoint::new(f, t)
    }

    #[test]
    fn perfect_classifier_hull_is_square() {
        let h = group_hull(p(0.0, 1.0));
        assert_eq!(h.vertices().len(), 4);
        assert!((h.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trivial_classifier_hull_is_diagonal() {
        let h = group_hull(p(0.5, 0.5));
        assert_eq!(h.vertices(), &[p(0.0, 0.0), p(1.0, 1.0)]);
    }

    #[test]
    fn quadrilateral_hull_is_counterclockwise() {
        let h = group_hull(p(0.2, 0.8));
        let want = [p(0.0, 0.0), p(0.8, 0.2), p(1.0, 1.0), p(0.2, 0.8)];
        assert_eq!(h.vertices().len(), 4);
        for (v, w) in h.vertices().iter().zip(&want) {
            assert!((v.fpr - w.fpr).abs() < 1e-12 && (v.tpr - w.tpr).abs() < 1e-12, "{v:?} vs {w:?}");
        }
        assert!(h.area() > 0.0);
    }

    #[test]
    fn hull_is_flip_invariant() {
        let g = p(0.13, 0.71);
        assert_eq!(group_hull(g), group_hull(g.flipped()));
    }

    #[test]
    fn square_contains_center() {
        assert!(region_contains(&ConvexRegion::unit_square(), p(0.5, 0.5), 0.0));
        assert!(!region_contains(&ConvexRegion::diagonal(), p(0.5, 0.6), 1e-3));
    }

    #[test]
    fn hausdorff_of_offset_squares() {
        let a = ConvexRegion::unit_square();
        let b = ConvexRegion::from_points(&[p(0.1, 0.0), p(1.1, 0.0), p(1.1, 1.0), p(0.1, 1.0)]);
        assert!(region_hausdorff(&a, &a) < 1e-15);
        assert!((region_hausdorff(&a, &b) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn intersection_with_diagonal_is_diagonal() {
        let r = group_hull(p(0.2, 0.9)).intersect(&ConvexRegion::diagonal());
        assert_eq!(r.vertices(), ConvexRegion::diagonal().vertices());
    }

    #[test]
    fn single_group_area_is_its_hull() {
        let g = p(0.2, 0.8);
        assert_eq!(feasible_area_post(&[g, g]).unwrap(), group_hull(g));
        assert!(feasible_area_post(&[]).is_err());
    }

    #[test]
    fn margin_is_min_distance_from_diagonal() {
        assert!((nontriviality_margin(&[p(0.3, 0.8), p(0.6, 0.7)]) - 0.1).abs() < 1e-12);
        assert_eq!(nontriviality_margin(&[p(0.3, 0.3), p(0.1, 0.9)]), 0.0);
    }

    #[test]
    fn vertex_text_round_trip() {
        let h = group_hull(p(0.25, 0.75));
        assert_eq!(ConvexRegion::from_vertex_text(&h.to_vertex_text()).unwrap(), h);
    }
}

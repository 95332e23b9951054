//! Delaunay triangulation, alpha-shapes and convex hulls over cluster
//! points.
//!
//! Orientation follows the usual mathematical convention: a ring is
//! counter-clockwise when its shoelace area is positive with `x` to the
//! right and `y` up. In image coordinates (`y` down) such rings appear
//! clockwise on screen. Orientation and in-circle tests use exact adaptive
//! predicates.

use std::collections::HashMap;

use log::debug;
use robust::{incircle, orient2d, Coord};
use serde::{Deserialize, Serialize};

use crate::cluster::Point;
use crate::error::{Error, Result};

/// Relative slack on the circumradius filter. Pixel-grid triangles have
/// circumradius exactly `1/√2`, which must survive at `α = √2`.
pub const RADIUS_TOLERANCE: f64 = 1e-9;

fn c(p: Point) -> Coord<f64> {
    Coord { x: p.0, y: p.1 }
}

/// Positive when `r` lies left of `p → q`.
pub fn orient(p: Point, q: Point, r: Point) -> f64 {
    orient2d(c(p), c(q), c(r))
}

/// Positive when `d` lies inside the circle through the CCW triangle `abc`.
pub fn in_circle(a: Point, b: Point, cc: Point, d: Point) -> f64 {
    incircle(c(a), c(b), c(cc), c(d))
}

pub fn circumradius(a: Point, b: Point, cc: Point) -> f64 {
    let d = |p: Point, q: Point| (p.0 - q.0).hypot(p.1 - q.1);
    let area2 = ((b.0 - a.0) * (cc.1 - a.1) - (b.1 - a.1) * (cc.0 - a.0)).abs();
    if area2 == 0.0 {
        return f64::INFINITY;
    }
    d(a, b) * d(b, cc) * d(cc, a) / (2.0 * area2)
}

/// Shoelace area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (p, q) = (ring[i], ring[(i + 1) % n]);
            p.0 * q.1 - q.0 * p.1
        })
        .sum::<f64>()
        / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    /// Counter-clockwise ring without a repeated closing vertex.
    pub vertices: Vec<Point>,
    pub area: f64,
}

impl Polygon {
    /// Builds a polygon, reversing clockwise input.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return Err(Error::argument("polygon vertex is not finite"));
        }
        let mut area = signed_area(&vertices);
        if area == 0.0 {
            return Err(Error::DegenerateGeometry("polygon has zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
            area = -area;
        }
        Ok(Self { vertices, area })
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p.0), b.min(p.1), c.max(p.0), d.max(p.1)),
        )
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Point-in-polygon with the boundary counted as inside; crossings use
    /// the even-odd rule.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if on_segment(a, b, p) {
                return true;
            }
            if (a.1 > p.1) != (b.1 > p.1) {
                let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
                if p.0 < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// True when no two non-adjacent edges touch and adjacent edges meet
    /// only at their shared vertex.
    pub fn is_simple(&self) -> bool {
        let e: Vec<(Point, Point)> = self.edges().collect();
        let n = e.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Collinear overlap folds the ring back on itself.
                    let (shared, a, b) = if j == i + 1 { (e[i].1, e[i].0, e[j].1) } else { (e[i].0, e[i].1, e[j].0) };
                    if orient(a, shared, b) == 0.0 && dot(a, shared, b) > 0.0 {
                        return false;
                    }
                } else if segments_touch(e[i].0, e[i].1, e[j].0, e[j].1) {
                    return false;
                }
            }
        }
        true
    }

    /// Rotates the ring to start at its lexicographically smallest vertex.
    pub fn canonical(&self) -> Polygon {
        let start = (0..self.vertices.len())
            .min_by(|&i, &j| lex(self.vertices[i], self.vertices[j]))
            .unwrap_or(0);
        let mut v = self.vertices.clone();
        v.rotate_left(start);
        Polygon {
            vertices: v,
            area: self.area,
        }
    }
}

/// `(a - s) · (b - s)`.
fn dot(a: Point, s: Point, b: Point) -> f64 {
    (a.0 - s.0) * (b.0 - s.0) + (a.1 - s.1) * (b.1 - s.1)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    orient(a, b, p) == 0.0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

fn segments_touch(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let (d1, d2) = (orient(q1, q2, p1), orient(q1, q2, p2));
    let (d3, d4) = (orient(p1, p2, q1), orient(p1, p2, q2));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(q1, q2, p1) || on_segment(q1, q2, p2) || on_segment(p1, p2, q1) || on_segment(p1, p2, q2)
}

fn lex(a: Point, b: Point) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangulation {
    /// Distinct input points in first-occurrence order.
    pub points: Vec<Point>,
    /// Counter-clockwise index triples into `points`.
    pub triangles: Vec<[usize; 3]>,
    pub circumradii: Vec<f64>,
}

impl Triangulation {
    pub fn triangle(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.points[i])
    }
}

fn dedup(points: &[Point]) -> Result<Vec<Point>> {
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::argument("point has a non-finite coordinate"));
    }
    let mut seen = std::collections::HashSet::new();
    // -0.0 and 0.0 are the same location.
    let key = |p: Point| ((p.0 + 0.0).to_bits(), (p.1 + 0.0).to_bits());
    Ok(points.iter().copied().filter(|&p| seen.insert(key(p))).collect())
}

struct Mesh {
    tris: Vec<[usize; 3]>,
    /// Directed edge → triangle holding it in CCW order.
    edges: HashMap<(usize, usize), usize>,
}

impl Mesh {
    fn add(&mut self, t: [usize; 3]) {
        let id = self.tris.len();
        self.tris.push(t);
        self.link(id);
    }

    fn link(&mut self, id: usize) {
        let [a, b, c] = self.tris[id];
        for e in [(a, b), (b, c), (c, a)] {
            self.edges.insert(e, id);
        }
    }

    fn unlink(&mut self, id: usize) {
        let [a, b, c] = self.tris[id];
        for e in [(a, b), (b, c), (c, a)] {
            self.edges.remove(&e);
        }
    }
}

fn third(t: [usize; 3], a: usize, b: usize) -> usize {
    t.into_iter().find(|&v| v != a && v != b).expect("triangle has three vertices")
}

/// Delaunay triangulation.
///
/// Points are deduplicated, swept in lexicographic order into a valid
/// triangulation, then made Delaunay by edge flips. An edge is flipped only
/// when the opposite vertex lies strictly inside the circumcircle, so
/// cocircular configurations (common on pixel grids) keep the diagonal
/// produced by the sweep, which depends only on the input.
pub fn delaunay(points: &[Point]) -> Result<Triangulation> {
    let pts = dedup(points)?;
    if pts.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("{} distinct points, need 3", pts.len())));
    }
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| lex(pts[i], pts[j]));
    let p = |i: usize| pts[i];

    let k = (2..order.len())
        .find(|&k| orient(p(order[0]), p(order[1]), p(order[k])) != 0.0)
        .ok_or_else(|| Error::DegenerateGeometry("all points are collinear".into()))?;

    let mut mesh = Mesh {
        tris: Vec::with_capacity(2 * pts.len()),
        edges: HashMap::with_capacity(6 * pts.len()),
    };
    let apex = order[k];
    let left = orient(p(order[0]), p(order[1]), p(apex)) > 0.0;
    for w in order[..k].windows(2) {
        mesh.add(if left { [w[0], w[1], apex] } else { [w[1], w[0], apex] });
    }
    let mut hull: Vec<usize> = if left {
        order[..=k].to_vec()
    } else {
        std::iter::once(order[0]).chain(std::iter::once(apex)).chain(order[1..k].iter().rev().copied()).collect()
    };

    for &v in &order[k + 1..] {
        let n = hull.len();
        let visible = |i: usize| orient(p(hull[i]), p(hull[(i + 1) % n]), p(v)) < 0.0;
        // Rotate so the visible chain does not wrap around the end.
        let hidden = (0..n).find(|&i| !visible(i)).expect("new point sees only part of the hull");
        hull.rotate_left((hidden + 1) % n);
        let n = hull.len();
        let first = (0..n).find(|&i| orient(p(hull[i]), p(hull[(i + 1) % n]), p(v)) < 0.0).expect("an edge is visible");
        let mut last = first;
        while last + 1 < n && orient(p(hull[last + 1]), p(hull[(last + 2) % n]), p(v)) < 0.0 {
            last += 1;
        }
        for i in first..=last {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            mesh.add([b, a, v]);
        }
        // Vertices strictly inside the visible chain leave the hull.
        hull.splice(first + 1..=last, std::iter::once(v));
    }

    legalize(&mut mesh, &pts);

    let circumradii = mesh.tris.iter().map(|t| circumradius(pts[t[0]], pts[t[1]], pts[t[2]])).collect();
    Ok(Triangulation {
        points: pts,
        triangles: mesh.tris,
        circumradii,
    })
}

fn legalize(mesh: &mut Mesh, pts: &[Point]) {
    let mut stack: Vec<(usize, usize)> = mesh
        .tris
        .iter()
        .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
        .filter(|&(a, b)| a < b)
        .collect();
    stack.reverse();
    while let Some((a, b)) = stack.pop() {
        let (Some(&t1), Some(&t2)) = (mesh.edges.get(&(a, b)), mesh.edges.get(&(b, a))) else {
            continue;
        };
        let cc = third(mesh.tris[t1], a, b);
        let d = third(mesh.tris[t2], a, b);
        if in_circle(pts[a], pts[b], pts[cc], pts[d]) <= 0.0 {
            continue;
        }
        if orient(pts[a], pts[d], pts[cc]) <= 0.0 || orient(pts[d], pts[b], pts[cc]) <= 0.0 {
            continue;
        }
        mesh.unlink(t1);
        mesh.unlink(t2);
        mesh.tris[t1] = [a, d, cc];
        mesh.tris[t2] = [d, b, cc];
        mesh.link(t1);
        mesh.link(t2);
        for (u, w) in [(a, d), (d, b), (b, cc), (cc, a)] {
            stack.push((u.min(w), u.max(w)));
        }
    }
}

/// Indices of triangles kept at `alpha`; `alpha == 0` keeps all.
pub fn alpha_filter(tri: &Triangulation, alpha: f64) -> Vec<usize> {
    (0..tri.triangles.len())
        .filter(|&t| alpha == 0.0 || tri.circumradii[t] * alpha <= 1.0 + RADIUS_TOLERANCE)
        .collect()
}

/// Chains boundary edges into closed rings, splitting at pinch vertices so
/// each ring is simple.
fn trace_rings(pts: &[Point], boundary: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut out: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(u, v) in boundary {
        out.entry(u).or_default().push(v);
    }
    let mut used: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    let mut rings = Vec::new();
    for &start in boundary {
        if used.contains(&start) {
            continue;
        }
        let mut ring = vec![start.0];
        let (mut u, mut v) = start;
        used.insert(start);
        loop {
            // The kept region is left of u → v; the wedge it occupies at v
            // closes at the first outgoing edge clockwise from v → u.
            let back = (pts[u].1 - pts[v].1).atan2(pts[u].0 - pts[v].0);
            let next = out[&v]
                .iter()
                .copied()
                .min_by(|&w1, &w2| {
                    let cw = |w: usize| {
                        let a = (pts[w].1 - pts[v].1).atan2(pts[w].0 - pts[v].0);
                        (back - a).rem_euclid(std::f64::consts::TAU)
                    };
                    cw(w1).total_cmp(&cw(w2))
                });
            let Some(w) = next else { break };
            if (v, w) == start {
                break;
            }
            if !used.insert((v, w)) {
                debug!("alpha-shape: boundary walk revisited an edge; ring truncated");
                break;
            }
            ring.push(v);
            u = v;
            v = w;
        }
        rings.push(ring);
    }
    rings
}

/// Splits a closed walk that revisits a vertex into loops that do not.
/// A region touching itself at a vertex around an enclosed gap yields one
/// walk covering both the outer contour and the gap; splitting separates
/// them so the gap can be recognised by its orientation.
fn split_at_repeats(walk: Vec<usize>) -> Vec<Vec<usize>> {
    let mut loops = Vec::new();
    let mut path: Vec<usize> = Vec::with_capacity(walk.len());
    let mut pos: HashMap<usize, usize> = HashMap::new();
    for v in walk {
        if let Some(&i) = pos.get(&v) {
            let sub: Vec<usize> = path.drain(i..).collect();
            for x in &sub {
                pos.remove(x);
            }
            loops.push(sub);
        }
        pos.insert(v, path.len());
        path.push(v);
    }
    loops.push(path);
    loops
}

/// Drops vertices lying on the segment between their neighbours.
fn merge_collinear(ring: Vec<Point>) -> Vec<Point> {
    let mut v = ring;
    loop {
        let n = v.len();
        if n < 3 {
            return v;
        }
        let drop = (0..n).find(|&i| orient(v[(i + n - 1) % n], v[i], v[(i + 1) % n]) == 0.0);
        match drop {
            Some(i) => {
                v.remove(i);
            }
            None => return v,
        }
    }
}

/// Outer contours of the alpha-shape.
///
/// Delaunay triangles with circumradius at most `1/alpha` are kept (with
/// [`RADIUS_TOLERANCE`] slack); `alpha == 0` keeps every triangle and yields
/// the convex hull. Boundary edges are chained into counter-clockwise rings
/// with collinear vertices merged; clockwise rings bound holes and are
/// dropped. An empty list means no triangle survived.
pub fn alpha_shape(points: &[Point], alpha: f64) -> Result<Vec<Polygon>> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::argument(format!("alpha must be finite and non-negative, got {alpha}")));
    }
    let tri = delaunay(points)?;
    Ok(alpha_shape_of(&tri, alpha))
}

pub fn alpha_shape_of(tri: &Triangulation, alpha: f64) -> Vec<Polygon> {
    let kept = alpha_filter(tri, alpha);
    let mut directed = std::collections::HashSet::new();
    for &t in &kept {
        let [a, b, c] = tri.triangles[t];
        directed.extend([(a, b), (b, c), (c, a)]);
    }
    let mut boundary: Vec<(usize, usize)> = directed.iter().copied().filter(|&(a, b)| !directed.contains(&(b, a))).collect();
    boundary.sort_unstable();

    let mut polys = Vec::new();
    let mut holes = 0;
    for ring in trace_rings(&tri.points, &boundary).into_iter().flat_map(split_at_repeats) {
        let pts = merge_collinear(ring.into_iter().map(|i| tri.points[i]).collect());
        if pts.len() < 3 {
            continue;
        }
        let area = signed_area(&pts);
        if area > 0.0 {
            polys.push(Polygon { vertices: pts, area });
        } else {
            holes += 1;
        }
    }
    if holes > 0 {
        debug!("alpha-shape: dropped {holes} hole ring(s)");
    }
    polys
}

/// Counter-clockwise convex hull (monotone chain), collinear boundary points
/// excluded.
pub fn convex_hull(points: &[Point]) -> Result<Polygon> {
    let mut pts = dedup(points)?;
    if pts.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("{} distinct points, need 3", pts.len())));
    }
    pts.sort_by(|&a, &b| lex(a, b));
    let chain = |it: &mut dyn Iterator<Item = Point>| {
        let mut h: Vec<Point> = Vec::new();
        for q in it {
            while h.len() >= 2 && orient(h[h.len() - 2], h[h.len() - 1], q) <= 0.0 {
                h.pop();
            }
            h.push(q);
        }
        h.pop();
        h
    };
    let mut hull = chain(&mut pts.iter().copied());
    hull.extend(chain(&mut pts.iter().rev().copied()));
    if hull.len() < 3 {
        return Err(Error::DegenerateGeometry("all points are collinear".into()));
    }
    let area = signed_area(&hull);
    Ok(Polygon { vertices: hull, area })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(seed: u64, n: usize) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0))).collect()
    }

    fn disk(cx: f64, cy: f64, r: f64) -> Vec<Point> {
        let n = (cx + r + 2.0) as usize;
        (0..n)
            .flat_map(|y| (0..n).map(move |x| (x as f64 + 0.5, y as f64 + 0.5)))
            .filter(|p| (p.0 - cx).hypot(p.1 - cy) <= r)
            .collect()
    }

    fn assert_delaunay(t: &Triangulation) {
        for (k, tri) in t.triangles.iter().enumerate() {
            let [a, b, c] = t.triangle(k);
            assert!(orient(a, b, c) > 0.0, "triangle {k} not CCW");
            for (i, &q) in t.points.iter().enumerate() {
                if !tri.contains(&i) {
                    assert!(in_circle(a, b, c, q) <= 0.0, "point {i} inside circumcircle of {k}");
                }
            }
        }
    }

    #[test]
    fn unit_square_gives_two_triangles() {
        let t = delaunay(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(t.triangles.len(), 2);
        let shared: Vec<usize> = (0..4)
            .filter(|v| t.triangles[0].contains(v) && t.triangles[1].contains(v))
            .collect();
        assert_eq!(shared.len(), 2);
        assert_delaunay(&t);
    }

    #[test]
    fn random_points_satisfy_empty_circle() {
        for seed in 0..5 {
            let pts = random_points(seed, 100);
            let t = delaunay(&pts).unwrap();
            // Euler: 2n - 2 - h triangles.
            let h = convex_hull(&pts).unwrap().vertices.len();
            assert_eq!(t.triangles.len(), 2 * pts.len() - 2 - h);
            assert_delaunay(&t);
        }
    }

    #[test]
    fn grid_points_triangulate() {
        let pts: Vec<Point> = (0..12).flat_map(|y| (0..9).map(move |x| (x as f64, y as f64))).collect();
        let t = delaunay(&pts).unwrap();
        assert_eq!(t.triangles.len(), 2 * 8 * 11);
        assert_delaunay(&t);
        assert!(t.circumradii.iter().all(|&r| (r - 0.5f64.sqrt()).abs() < 1e-12));
    }

    #[test]
    fn degenerate_inputs() {
        let col = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
        assert!(matches!(delaunay(&col), Err(Error::DegenerateGeometry(_))));
        assert!(matches!(convex_hull(&col), Err(Error::DegenerateGeometry(_))));
        let dup = [(1.0, 1.0), (1.0, 1.0), (2.0, 0.0)];
        assert!(matches!(delaunay(&dup), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn collinear_prefix_then_apex() {
        let pts = [(0.0, 0.0), (0.0, 1.0), (0.0, 2.0), (0.0, 3.0), (2.0, 1.5), (-1.0, 0.5)];
        let t = delaunay(&pts).unwrap();
        assert_delaunay(&t);
        let area: f64 = (0..t.triangles.len()).map(|k| signed_area(&t.triangle(k))).sum();
        assert!((area - convex_hull(&pts).unwrap().area).abs() < 1e-9);
    }

    #[test]
    fn hull_of_square_with_interior_point() {
        let h = convex_hull(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0), (2.0, 2.0), (2.0, 0.0)]).unwrap();
        assert_eq!(h.vertices.len(), 4);
        assert_eq!(h.area, 16.0);
    }

    #[test]
    fn hull_brute_force_check() {
        let pts = random_points(9, 40);
        let h = convex_hull(&pts).unwrap();
        for (a, b) in h.edges() {
            for &q in &pts {
                assert!(orient(a, b, q) >= 0.0);
            }
        }
        let mut got = h.vertices.clone();
        got.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        assert_eq!(got, crate::oracle::brute_force_hull(&pts));
        // Collinear boundary points are not vertices.
        let square = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0), (1.0, 1.0)];
        assert_eq!(crate::oracle::brute_force_hull(&square), [(0.0, 0.0), (0.0, 2.0), (2.0, 0.0), (2.0, 2.0)]);
    }

    #[test]
    fn tiny_alpha_is_convex_hull() {
        for seed in 0..20 {
            let pts = random_points(100 + seed, 60);
            let hull = convex_hull(&pts).unwrap().canonical();
            for alpha in [0.0, 1e-6] {
                let shape = alpha_shape(&pts, alpha).unwrap();
                assert_eq!(shape.len(), 1, "seed {seed}");
                let s = shape[0].canonical();
                assert_eq!(s.vertices, hull.vertices, "seed {seed} alpha {alpha}");
            }
        }
    }

    #[test]
    fn two_by_two_block_is_unit_square() {
        let pts = [(3.0, 3.0), (4.0, 3.0), (3.0, 4.0), (4.0, 4.0)];
        let shape = alpha_shape(&pts, 2f64.sqrt()).unwrap();
        assert_eq!(shape.len(), 1);
        assert_eq!(shape[0].area, 1.0);
        assert_eq!(shape[0].vertices.len(), 4);
    }

    #[test]
    fn filtration_is_monotone() {
        let pts = random_points(4, 150);
        let tri = delaunay(&pts).unwrap();
        let alphas = [0.1, 0.5, 1.0, 2f64.sqrt()];
        for w in alphas.windows(2) {
            let (lo, hi) = (alpha_filter(&tri, w[0]), alpha_filter(&tri, w[1]));
            assert!(hi.iter().all(|t| lo.contains(t)));
        }
    }

    #[test]
    fn pixel_disk_contour_within_one_pixel() {
        let (cx, cy, r) = (20.0, 20.0, 12.0);
        let pts = disk(cx, cy, r);
        let shape = alpha_shape(&pts, 2f64.sqrt()).unwrap();
        assert_eq!(shape.len(), 1);
        let ring = &shape[0];
        assert!(ring.is_simple());
        for &v in &ring.vertices {
            assert!(((v.0 - cx).hypot(v.1 - cy) - r).abs() <= 1.0);
        }
        for k in 0..720 {
            let th = k as f64 * std::f64::consts::TAU / 720.0;
            assert!(crate::oracle::distance_to_boundary((cx + r * th.cos(), cy + r * th.sin()), ring) <= 1.0);
        }
        for &p in &pts {
            assert!(ring.contains(p));
        }
    }

    #[test]
    fn separate_blobs_separate_rings_and_holes_dropped() {
        let mut pts: Vec<Point> = (0..5).flat_map(|y| (0..5).map(move |x| (x as f64, y as f64))).collect();
        pts.extend((0..4).flat_map(|y| (0..4).map(move |x| (x as f64 + 20.0, y as f64))));
        let shape = alpha_shape(&pts, 2f64.sqrt()).unwrap();
        assert_eq!(shape.len(), 2);
        // Ring of pixels with a 3×3 hole: only the outer contour survives.
        let ring: Vec<Point> = (0..7)
            .flat_map(|y| (0..7).map(move |x| (x as f64, y as f64)))
            .filter(|&(x, y)| !(2.0..=4.0).contains(&x) || !(2.0..=4.0).contains(&y))
            .collect();
        let shape = alpha_shape(&ring, 2f64.sqrt()).unwrap();
        assert_eq!(shape.len(), 1);
        assert_eq!(shape[0].area, 36.0);
    }

    #[test]
    fn pinched_blobs_trace_simple_rings() {
        // Two triangles meeting at (2, 1); the connecting triangles have
        // circumradius 2.5 and drop out.
        let pts = [(0.0, 0.0), (2.0, 1.0), (0.0, 2.0), (4.0, 0.0), (4.0, 2.0)];
        let shape = alpha_shape(&pts, 1.0 / 1.5).unwrap();
        assert_eq!(shape.len(), 2);
        assert!(shape.iter().all(|p| p.area == 2.0 && p.is_simple()));
    }

    #[test]
    fn self_touching_region_drops_enclosed_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9650758312784716439);
        let pts: Vec<Point> = (0..80).map(|_| (rng.gen_range(0..30) as f64, rng.gen_range(0..30) as f64)).collect();
        let shape = alpha_shape(&pts, 0.3138168175286631).unwrap();
        assert!(!shape.is_empty());
        assert!(shape.iter().all(Polygon::is_simple));
    }

    #[test]
    fn contains_counts_boundary() {
        let sq = Polygon::new(vec![(10.0, 10.0), (11.0, 10.0), (11.0, 11.0), (10.0, 11.0)]).unwrap();
        assert!(sq.contains((10.5, 10.5)) && sq.contains((10.0, 10.5)) && sq.contains((11.0, 11.0)));
        assert!(!sq.contains((11.5, 10.5)));
        let cw = Polygon::new(vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)]).unwrap();
        assert!(cw.area > 0.0 && signed_area(&cw.vertices) > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn alpha_rings_are_simple_ccw_and_inside_hull(seed in any::<u64>(), alpha in 0.05f64..1.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point> = (0..80).map(|_| (rng.gen_range(0..30) as f64, rng.gen_range(0..30) as f64)).collect();
            let Ok(tri) = delaunay(&pts) else { return Ok(()) };
            let hull = convex_hull(&pts).unwrap();
            let shape = alpha_shape_of(&tri, alpha);
            let total: f64 = shape.iter().map(|p| p.area).sum();
            prop_assert!(total <= hull.area + 1e-9);
            for p in &shape {
                prop_assert!(signed_area(&p.vertices) > 0.0);
                prop_assert!(p.is_simple());
            }
        }

        #[test]
        fn pixel_blobs_covered_at_sqrt2(seed in any::<u64>()) {
            // Random 4-connected blob grown from a seed pixel.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut set = std::collections::BTreeSet::new();
            set.insert((10i32, 10i32));
            for _ in 0..60 {
                let v: Vec<_> = set.iter().copied().collect();
                let (x, y) = v[rng.gen_range(0..v.len())];
                let d = [(1, 0), (-1, 0), (0, 1), (0, -1)][rng.gen_range(0..4)];
                set.insert((x + d.0, y + d.1));
            }
            let pts: Vec<Point> = set.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
            let Ok(shape) = alpha_shape(&pts, 2f64.sqrt()) else { return Ok(()) };
            for &p in &pts {
                let covered = shape.iter().any(|poly| poly.contains(p));
                // Pixels that only hang on by a single edge have no triangle.
                let lonely = {
                    let has = |dx: i32, dy: i32| set.contains(&(p.0 as i32 + dx, p.1 as i32 + dy));
                    let corners = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
                    !corners.iter().any(|&(dx, dy)| (has(dx, 0) && has(0, dy)) || (has(dx, 0) && has(dx, dy)) || (has(0, dy) && has(dx, dy)))
                };
                prop_assert!(covered || lonely, "pixel {:?} not covered", p);
            }
        }
    }
}

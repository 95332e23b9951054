//! DBSCAN density clustering of defect pixel coordinates.
//!
//! Neighborhoods are closed balls (`dist <= epsilon`) and counts include the
//! point itself. Clusters are numbered in the input order of their first
//! core point; a border point reachable from several clusters belongs to the
//! first one expanded.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = (f64, f64);

/// Largest input accepted by [`dbscan_reference`].
pub const REFERENCE_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub epsilon: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(epsilon: f64, min_pts: usize) -> Result<Self> {
        let p = Self { epsilon, min_pts };
        p.validate()?;
        Ok(p)
    }

    /// ε = 10, minPts = 100: the values tuned on full-resolution cells.
    pub fn tuned() -> Self {
        Self {
            epsilon: 10.0,
            min_pts: 100,
        }
    }

    /// ε = 30, minPts = 100: the radius suggested in the method description.
    pub fn wide() -> Self {
        Self {
            epsilon: 30.0,
            ..Self::tuned()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::argument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.min_pts == 0 {
            return Err(Error::argument("min_pts must be at least 1"));
        }
        Ok(())
    }
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self::tuned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Core,
    Border,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    /// Position in the input slice.
    pub index: usize,
    pub point: Point,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cluster {
    /// Members in the order they joined the cluster.
    pub members: Vec<Member>,
}

impl Cluster {
    pub fn points(&self) -> Vec<Point> {
        self.members.iter().map(|m| m.point).collect()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.index).collect()
    }

    pub fn core_count(&self) -> usize {
        self.members.iter().filter(|m| m.role == Role::Core).count()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    /// Input indices of points reachable from no core point.
    pub outliers: Vec<usize>,
}

impl ClusterSet {
    /// Cluster id per input point, `None` for outliers.
    pub fn labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for (c, cl) in self.clusters.iter().enumerate() {
            for m in &cl.members {
                out[m.index] = Some(c);
            }
        }
        out
    }

    /// Compares two clusterings of the same input up to relabeling of
    /// clusters.
    pub fn same_partition(&self, other: &ClusterSet, n: usize) -> bool {
        let (a, b) = (self.labels(n), other.labels(n));
        if self.clusters.len() != other.clusters.len() {
            return false;
        }
        let mut fwd: HashMap<usize, usize> = HashMap::new();
        let mut back: HashMap<usize, usize> = HashMap::new();
        for (x, y) in a.iter().zip(&b) {
            match (x, y) {
                (None, None) => {}
                (Some(x), Some(y)) => {
                    if *fwd.entry(*x).or_insert(*y) != *y || *back.entry(*y).or_insert(*x) != *x {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        true
    }
}

/// Classical DBSCAN driven by a neighbor query.
fn expand(n: usize, points: &[Point], min_pts: usize, neighbors: impl Fn(usize) -> Vec<usize>) -> ClusterSet {
    const UNSEEN: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = vec![UNSEEN; n];
    let mut role = vec![Role::Border; n];
    let mut clusters: Vec<Cluster> = Vec::new();

    for seed in 0..n {
        if label[seed] != UNSEEN {
            continue;
        }
        let nb = neighbors(seed);
        if nb.len() < min_pts {
            label[seed] = NOISE;
            continue;
        }
        let id = clusters.len();
        let mut members = Vec::new();
        label[seed] = id;
        role[seed] = Role::Core;
        members.push(seed);
        let mut queue: VecDeque<usize> = nb.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            if label[q] == NOISE {
                label[q] = id;
                members.push(q);
                continue;
            }
            if label[q] != UNSEEN {
                continue;
            }
            label[q] = id;
            members.push(q);
            let nq = neighbors(q);
            if nq.len() >= min_pts {
                role[q] = Role::Core;
                queue.extend(nq);
            }
        }
        clusters.push(Cluster {
            members: members
                .into_iter()
                .map(|i| Member {
                    index: i,
                    point: points[i],
                    role: role[i],
                })
                .collect(),
        });
    }
    let outliers = (0..n).filter(|&i| label[i] == NOISE).collect();
    ClusterSet { clusters, outliers }
}

#[inline]
fn within(a: Point, b: Point, eps2: f64) -> bool {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    dx * dx + dy * dy <= eps2
}

fn check_points(points: &[Point]) -> Result<()> {
    if let Some(i) = points.iter().position(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::argument(format!("point {i} has a non-finite coordinate")));
    }
    Ok(())
}

/// DBSCAN with a uniform grid index of cell size ε.
pub fn dbscan(points: &[Point], p: &DbscanParams) -> Result<ClusterSet> {
    p.validate()?;
    check_points(points)?;
    let eps = p.epsilon;
    let eps2 = eps * eps;
    // Slightly oversized cells keep every ε-neighbor within the adjacent
    // cells despite rounding in the division.
    let size = eps * (1.0 + 1e-9);
    let cell = |q: Point| ((q.0 / size).floor() as i64, (q.1 / size).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &q) in points.iter().enumerate() {
        grid.entry(cell(q)).or_default().push(i);
    }
    let neighbors = |i: usize| {
        let (cx, cy) = cell(points[i]);
        let mut out = Vec::new();
        for gy in cy - 1..=cy + 1 {
            for gx in cx - 1..=cx + 1 {
                if let Some(bucket) = grid.get(&(gx, gy)) {
                    out.extend(bucket.iter().copied().filter(|&j| within(points[i], points[j], eps2)));
                }
            }
        }
        out
    };
    Ok(expand(points.len(), points, p.min_pts, neighbors))
}

/// Exhaustive O(n²) DBSCAN used as a test oracle.
pub fn dbscan_reference(points: &[Point], p: &DbscanParams) -> Result<ClusterSet> {
    p.validate()?;
    check_points(points)?;
    if points.len() > REFERENCE_LIMIT {
        return Err(Error::argument(format!(
            "reference DBSCAN is limited to {REFERENCE_LIMIT} points, got {}",
            points.len()
        )));
    }
    let eps2 = p.epsilon * p.epsilon;
    let neighbors = |i: usize| (0..points.len()).filter(|&j| within(points[i], points[j], eps2)).collect();
    Ok(expand(points.len(), points, p.min_pts, neighbors))
}

/// Pixel indices to pixel-center coordinates: pixel `(x, y)` covers
/// `[x, x+1) × [y, y+1)` and is represented by `(x + 0.5, y + 0.5)`.
pub fn pixel_points(pixels: &[(usize, usize)]) -> Vec<Point> {
    pixels.iter().map(|&(x, y)| (x as f64 + 0.5, y as f64 + 0.5)).collect()
}

//! Instances, covering sets and purity orders.
//!
//! The purity order of an edge `(i, j)` is the number of instance vertices
//! lying strictly inside the circle whose diameter is the segment `x_i x_j`,
//! i.e. the points `x` with `(x_i - x) · (x_j - x) < 0`. Points on the circle
//! (dot product exactly zero) are outside, which also excludes both endpoints
//! and any vertex coincident with an endpoint.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Aspect-preserving map of raw coordinates into the unit square: subtract
/// the per-axis minimum, divide both axes by the larger extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub min_x: f64,
    pub min_y: f64,
    pub extent: f64,
}

impl Normalization {
    pub fn fit(points: &[Point]) -> Self {
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
        Normalization {
            min_x,
            min_y,
            extent: (max_x - min_x).max(max_y - min_y),
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        if self.extent > 0.0 {
            Point::new(
                ((p.x - self.min_x) / self.extent).clamp(0.0, 1.0),
                ((p.y - self.min_y) / self.extent).clamp(0.0, 1.0),
            )
        } else {
            Point::new(0.0, 0.0)
        }
    }
}

/// Uniform bucket grid over the unit square, stored in CSR form.
#[derive(Debug, Clone)]
pub struct Grid {
    side: usize,
    cell: f64,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl Grid {
    /// Cell side `1/ceil(sqrt(n))`, clamped to `[1/64, 1/4]`.
    pub fn default_cell_side(n: usize) -> f64 {
        let side = (n as f64).sqrt().ceil().max(1.0);
        (1.0 / side).clamp(1.0 / 64.0, 0.25)
    }

    fn build(points: &[Point], cell: f64) -> Self {
        let side = (1.0 / cell).round().max(1.0) as usize;
        let cell = 1.0 / side as f64;
        let mut counts = vec![0u32; side * side + 1];
        let keys: Vec<usize> = points
            .iter()
            .map(|p| Self::key(side, cell, p.x, p.y))
            .collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (idx, &k) in keys.iter().enumerate() {
            items[fill[k] as usize] = idx as u32;
            fill[k] += 1;
        }
        Grid {
            side,
            cell,
            starts: counts,
            items,
        }
    }

    fn coord(side: usize, cell: f64, v: f64) -> usize {
        ((v / cell).floor().max(0.0) as usize).min(side - 1)
    }

    fn key(side: usize, cell: f64, x: f64, y: f64) -> usize {
        Self::coord(side, cell, y) * side + Self::coord(side, cell, x)
    }

    pub fn cell_side(&self) -> f64 {
        self.cell
    }

    pub fn cells_per_axis(&self) -> usize {
        self.side
    }

    pub fn bucket(&self, cx: usize, cy: usize) -> &[u32] {
        let k = cy * self.side + cx;
        &self.items[self.starts[k] as usize..self.starts[k + 1] as usize]
    }

    /// Cell index range `(x0..=x1, y0..=y1)` covering the given box.
    fn cover(&self, lo: Point, hi: Point) -> (usize, usize, usize, usize) {
        (
            Self::coord(self.side, self.cell, lo.x),
            Self::coord(self.side, self.cell, hi.x),
            Self::coord(self.side, self.cell, lo.y),
            Self::coord(self.side, self.cell, hi.y),
        )
    }
}

/// A Euclidean TSP instance in the unit square.
#[derive(Debug, Clone)]
pub struct Instance {
    points: Vec<Point>,
    grid: Grid,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl Instance {
    /// Builds an instance from points already inside `[0,1]²`.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::arg(format!(
                "an instance needs at least 2 points, got {}",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::arg(format!("point {i} is not finite")));
            }
            if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
                return Err(Error::arg(format!(
                    "point {i} = ({}, {}) lies outside the unit square",
                    p.x, p.y
                )));
            }
        }
        let cell = Grid::default_cell_side(points.len());
        let grid = Grid::build(&points, cell);
        Ok(Instance { points, grid })
    }

    /// Normalizes arbitrary finite coordinates into the unit square first.
    pub fn from_raw(raw: &[Point]) -> Result<(Self, Normalization)> {
        if let Some(i) = raw.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::arg(format!("point {i} is not finite")));
        }
        let norm = Normalization::fit(raw);
        let points = raw.iter().map(|&p| norm.apply(p)).collect();
        Ok((Self::new(points)?, norm))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.points[i].dist(&self.points[j])
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        let n = self.len();
        if i >= n || j >= n {
            return Err(Error::arg(format!(
                "edge ({i}, {j}) out of range for {n} vertices"
            )));
        }
        if i == j {
            return Err(Error::arg(format!("degenerate edge ({i}, {i})")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&InstanceJson::from(self)).expect("points are finite")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceJson = serde_json::from_str(text)?;
        doc.try_into()
    }

    /// Row-major little-endian `f64` pairs, `16·N` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * 16);
        for p in &self.points {
            out.extend_from_slice(&p.x.to_le_bytes());
            out.extend_from_slice(&p.y.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 16 != 0 {
            return Err(Error::arg(format!(
                "binary instance length {} is not a multiple of 16",
                bytes.len()
            )));
        }
        let points = bytes
            .chunks_exact(16)
            .map(|c| {
                let x = f64::from_le_bytes(c[..8].try_into().unwrap());
                let y = f64::from_le_bytes(c[8..].try_into().unwrap());
                Point::new(x, y)
            })
            .collect();
        Self::new(points)
    }
}

/// JSON wire form `{"n": N, "points": [[x, y], ...]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceJson {
    pub n: usize,
    pub points: Vec<[f64; 2]>,
}

impl From<&Instance> for InstanceJson {
    fn from(inst: &Instance) -> Self {
        InstanceJson {
            n: inst.len(),
            points: inst.points.iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}

impl TryFrom<InstanceJson> for Instance {
    type Error = Error;

    fn try_from(doc: InstanceJson) -> Result<Self> {
        if doc.n != doc.points.len() {
            return Err(Error::arg(format!(
                "header n = {} but {} points listed",
                doc.n,
                doc.points.len()
            )));
        }
        Instance::new(doc.points.into_iter().map(|[x, y]| Point::new(x, y)).collect())
    }
}

#[inline]
fn covers(a: Point, b: Point, x: Point) -> bool {
    (a.x - x.x) * (b.x - x.x) + (a.y - x.y) * (b.y - x.y) < 0.0
}

/// Brute-force purity order: scans every vertex.
pub fn purity_order(inst: &Instance, i: usize, j: usize) -> Result<usize> {
    inst.check_pair(i, j)?;
    Ok(purity_order_scan(inst, i, j))
}

pub(crate) fn purity_order_scan(inst: &Instance, i: usize, j: usize) -> usize {
    let (a, b) = (inst.points[i], inst.points[j]);
    inst.points.iter().filter(|&&x| covers(a, b, x)).count()
}

/// Grid-accelerated purity order. Only buckets meeting the bounding box of
/// the diametral circle are inspected; the predicate is the same one the
/// brute-force path evaluates, so results are identical.
pub fn purity_order_fast(inst: &Instance, i: usize, j: usize) -> Result<usize> {
    inst.check_pair(i, j)?;
    Ok(purity_order_grid(inst, i, j))
}

pub(crate) fn purity_order_grid(inst: &Instance, i: usize, j: usize) -> usize {
    // slack absorbs rounding in the box so no marginal interior point is missed
    const SLACK: f64 = 1e-9;
    let (a, b) = (inst.points[i], inst.points[j]);
    let (cx, cy) = (0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
    let r = 0.5 * a.dist(&b) + SLACK;
    let grid = &inst.grid;
    let (x0, x1, y0, y1) = grid.cover(Point::new(cx - r, cy - r), Point::new(cx + r, cy + r));
    let mut count = 0;
    for gy in y0..=y1 {
        for gx in x0..=x1 {
            count += grid
                .bucket(gx, gy)
                .iter()
                .filter(|&&k| covers(a, b, inst.points[k as usize]))
                .count();
        }
    }
    count
}

/// Dense symmetric matrix of purity orders. The diagonal is zero and unused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurityTable {
    n: usize,
    data: Vec<u32>,
}

impl PurityTable {
    /// Computes every pair with the grid path, rows in parallel.
    pub fn build(inst: &Instance) -> Self {
        let n = inst.len();
        let rows: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if j > i {
                            purity_order_grid(inst, i, j) as u32
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect();
        let mut data = vec![0u32; n * n];
        for (i, row) in rows.iter().enumerate() {
            for j in (i + 1)..n {
                data[i * n + j] = row[j];
                data[j * n + i] = row[j];
            }
        }
        PurityTable { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// For each vertex, every other vertex ordered by ascending purity order,
    /// ties broken by ascending index.
    #[cfg(test)]
    pub(crate) fn with_row_zeroed(mut self, i: usize) -> Self {
        for j in 0..self.n {
            self.data[i * self.n + j] = 0;
            self.data[j * self.n + i] = 0;
        }
        self
    }

    pub fn sorted_partners(&self) -> Vec<Vec<u32>> {
        (0..self.n)
            .map(|i| {
                let row = self.row(i);
                let mut partners: Vec<u32> = (0..self.n as u32).filter(|&j| j as usize != i).collect();
                partners.sort_by_key(|&j| (row[j as usize], j));
                partners
            })
            .collect()
    }
}

/// Convenience wrapper for [`PurityTable::build`].
pub fn all_pairs_purity(inst: &Instance) -> PurityTable {
    PurityTable::build(inst)
}

pub fn sorted_partners(table: &PurityTable) -> Vec<Vec<u32>> {
    table.sorted_partners()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(pts: &[(f64, f64)]) -> Instance {
        Instance::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn small_examples() {
        assert_eq!(purity_order(&inst(&[(0.0, 0.0), (1.0, 0.0)]), 0, 1).unwrap(), 0);
        let mid = inst(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.0)]);
        assert_eq!(purity_order(&mid, 0, 1).unwrap(), 1);
        assert_eq!(purity_order_fast(&mid, 0, 1).unwrap(), 1);
        let above = inst(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.6)]);
        assert_eq!(purity_order(&above, 0, 1).unwrap(), 0);
    }

    #[test]
    fn point_on_circle_is_not_covering() {
        // (0.5, 0.5) lies exactly on the circle with diameter (0,0)-(1,0)
        let on = inst(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.5)]);
        assert_eq!(purity_order(&on, 0, 1).unwrap(), 0);
    }

    #[test]
    fn argument_errors() {
        let two = inst(&[(0.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(purity_order(&two, 0, 0), Err(Error::Argument(_))));
        assert!(matches!(purity_order(&two, 0, 2), Err(Error::Argument(_))));
        assert!(matches!(purity_order_fast(&two, 5, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn instance_validation() {
        assert!(Instance::new(vec![Point::new(0.0, 0.0)]).is_err());
        assert!(Instance::new(vec![Point::new(0.0, 0.0), Point::new(1.5, 0.0)]).is_err());
        assert!(Instance::new(vec![Point::new(f64::NAN, 0.0), Point::new(0.5, 0.0)]).is_err());
    }

    #[test]
    fn duplicates_of_endpoints() {
        // copies of an endpoint sit on the circle; a copy of an interior point counts twice
        let d = inst(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.5, 0.1), (0.5, 0.1)]);
        assert_eq!(purity_order(&d, 0, 1).unwrap(), 2);
        assert_eq!(purity_order(&d, 2, 1).unwrap(), 2);
        // the pair of coincident vertices has an empty diametral circle
        assert_eq!(purity_order(&d, 0, 2).unwrap(), 0);
    }

    #[test]
    fn collinear_table_and_partners() {
        let c = inst(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)]);
        let t = all_pairs_purity(&c);
        assert_eq!(t.get(0, 2), 1);
        assert_eq!(t.get(2, 0), 1);
        assert_eq!(t.get(0, 1), 0);
        assert_eq!(t.get(1, 2), 0);
        let sp = sorted_partners(&t);
        assert_eq!(sp[0], vec![1, 2]);
        assert_eq!(sp[1], vec![0, 2]);
        assert_eq!(sp[2], vec![1, 0]);

        let two = all_pairs_purity(&inst(&[(0.1, 0.1), (0.9, 0.3)]));
        assert_eq!(two.get(0, 1), 0);
        assert_eq!(sorted_partners(&two)[0], vec![1]);
    }

    #[test]
    fn grid_partitions_points() {
        let pts: Vec<Point> = (0..97)
            .map(|k| Point::new((k as f64 * 0.37) % 1.0, (k as f64 * 0.61) % 1.0))
            .collect();
        let inst = Instance::new(pts).unwrap();
        let g = inst.grid();
        assert!(g.cell_side() > 0.0);
        let mut seen = vec![0; inst.len()];
        for cy in 0..g.cells_per_axis() {
            for cx in 0..g.cells_per_axis() {
                for &k in g.bucket(cx, cy) {
                    seen[k as usize] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn cell_side_clamps() {
        assert_eq!(Grid::default_cell_side(2), 0.25);
        assert_eq!(Grid::default_cell_side(100), 0.1);
        assert_eq!(Grid::default_cell_side(1_000_000), 1.0 / 64.0);
    }

    #[test]
    fn serialization_round_trips() {
        let a = inst(&[(0.1, 0.2), (0.3, 0.999_999_999_1), (1.0, 0.0)]);
        assert_eq!(Instance::from_json(&a.to_json()).unwrap(), a);
        assert_eq!(Instance::from_bytes(&a.to_bytes()).unwrap(), a);
        assert!(Instance::from_json(r#"{"n":3,"points":[[0,0],[1,1]]}"#).is_err());
        assert!(Instance::from_bytes(&[0u8; 17]).is_err());
    }

    #[test]
    fn normalization_preserves_aspect() {
        let raw = [Point::new(10.0, 5.0), Point::new(30.0, 5.0), Point::new(20.0, 15.0)];
        let (inst, norm) = Instance::from_raw(&raw).unwrap();
        assert_eq!(norm.extent, 20.0);
        assert_eq!(inst.point(0), Point::new(0.0, 0.0));
        assert_eq!(inst.point(1), Point::new(1.0, 0.0));
        assert_eq!(inst.point(2), Point::new(0.5, 0.5));
    }
}

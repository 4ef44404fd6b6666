//! Purity availability, purity costs and weightings along a tour
//! construction, and per-tour purity summaries.
//!
//! Throughout, purity orders are those of the full instance: a visited
//! vertex still counts as a coverer of edges between unvisited vertices.
//! The availability of an empty or single-vertex set is defined as 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{purity_order_grid, Instance, PurityTable};
use crate::solvers::Tour;

/// Purity table plus per-vertex partner lists sorted by purity order.
#[derive(Debug, Clone)]
pub struct PurityIndex {
    pub table: PurityTable,
    pub partners: Vec<Vec<u32>>,
}

impl PurityIndex {
    pub fn build(inst: &Instance) -> Self {
        let table = PurityTable::build(inst);
        let partners = table.sorted_partners();
        PurityIndex { table, partners }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn tracker(&self) -> AvailabilityTracker<'_> {
        AvailabilityTracker::new(self)
    }
}

/// Partial tour plus the complementary unvisited set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructionState {
    visited: Vec<usize>,
    in_tour: Vec<bool>,
}

impl ConstructionState {
    pub fn new(n: usize, first: usize) -> Result<Self> {
        if first >= n {
            return Err(Error::arg(format!("first vertex {first} out of range for {n}")));
        }
        let mut in_tour = vec![false; n];
        in_tour[first] = true;
        Ok(ConstructionState {
            visited: vec![first],
            in_tour,
        })
    }

    /// State after visiting `prefix` in order.
    pub fn from_prefix(n: usize, prefix: &[usize]) -> Result<Self> {
        let (&first, rest) = prefix
            .split_first()
            .ok_or_else(|| Error::arg("prefix must contain at least one vertex"))?;
        let mut state = Self::new(n, first)?;
        for &v in rest {
            state.visit(v)?;
        }
        Ok(state)
    }

    pub fn visit(&mut self, v: usize) -> Result<()> {
        if v >= self.in_tour.len() {
            return Err(Error::arg(format!("vertex {v} out of range")));
        }
        if self.in_tour[v] {
            return Err(Error::arg(format!("vertex {v} already visited")));
        }
        self.in_tour[v] = true;
        self.visited.push(v);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.in_tour.len()
    }

    pub fn t(&self) -> usize {
        self.visited.len()
    }

    pub fn visited(&self) -> &[usize] {
        &self.visited
    }

    pub fn current(&self) -> usize {
        *self.visited.last().expect("state always holds a first vertex")
    }

    pub fn first(&self) -> usize {
        self.visited[0]
    }

    pub fn is_visited(&self, v: usize) -> bool {
        self.in_tour[v]
    }

    /// Unvisited vertices in ascending index order.
    pub fn unvisited(&self) -> impl Iterator<Item = usize> + '_ {
        self.in_tour.iter().enumerate().filter(|(_, &v)| !v).map(|(i, _)| i)
    }

    pub fn unvisited_count(&self) -> usize {
        self.n() - self.visited.len()
    }
}

/// Average over `set` of each member's minimum purity order to another member.
pub fn purity_availability(table: &PurityTable, set: &[usize]) -> Result<f64> {
    let n = table.len();
    let mut member = vec![false; n];
    for &v in set {
        if v >= n {
            return Err(Error::arg(format!("vertex {v} out of range for {n}")));
        }
        if std::mem::replace(&mut member[v], true) {
            return Err(Error::arg(format!("vertex {v} listed twice")));
        }
    }
    if set.len() < 2 {
        return Ok(0.0);
    }
    let total: u64 = set
        .iter()
        .map(|&i| {
            set.iter()
                .filter(|&&j| j != i)
                .map(|&j| table.get(i, j))
                .min()
                .unwrap_or(0) as u64
        })
        .sum();
    Ok(total as f64 / set.len() as f64)
}

/// Purity cost of extending `state` with `next`.
///
/// While unvisited vertices remain this is the new edge's purity order plus
/// the change in availability of the unvisited set. Once every vertex is
/// visited, `next` must be the first vertex and the cost is the closing
/// edge's purity order.
pub fn purity_cost(table: &PurityTable, state: &ConstructionState, next: usize) -> Result<f64> {
    let cur = state.current();
    if state.unvisited_count() == 0 {
        if next != state.first() {
            return Err(Error::arg("a complete tour can only close back to its first vertex"));
        }
        return Ok(table.get(cur, next) as f64);
    }
    if next >= state.n() || state.is_visited(next) {
        return Err(Error::arg(format!("vertex {next} is not an unvisited vertex")));
    }
    let before: Vec<usize> = state.unvisited().collect();
    let after: Vec<usize> = before.iter().copied().filter(|&v| v != next).collect();
    Ok(table.get(cur, next) as f64 + purity_availability(table, &after)?
        - purity_availability(table, &before)?)
}

/// `W_t = 1 + Σ_{j ≥ t} δ^{j-t} C_j`, via `W_t = 1 + C_t + δ (W_{t+1} - 1)`.
pub fn purity_weights(costs: &[f64], discount: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&discount) {
        return Err(Error::arg(format!("discount {discount} outside [0, 1]")));
    }
    let mut w = vec![0.0; costs.len()];
    let mut tail = 0.0;
    for (k, &c) in costs.iter().enumerate().rev() {
        tail = c + discount * tail;
        w[k] = 1.0 + tail;
    }
    Ok(w)
}

/// Incrementally maintained availability of a shrinking vertex set.
///
/// Each survivor keeps a cursor into its purity-sorted partner list pointing
/// at its first surviving partner, so its minimum is read in O(1). A removal
/// touches every survivor once and advances cursors monotonically.
#[derive(Debug, Clone)]
pub struct AvailabilityTracker<'a> {
    index: &'a PurityIndex,
    alive: Vec<bool>,
    cursor: Vec<usize>,
    count: usize,
    sum: u64,
}

impl<'a> AvailabilityTracker<'a> {
    pub fn new(index: &'a PurityIndex) -> Self {
        let n = index.len();
        let sum = (0..n)
            .map(|i| index.table.get(i, index.partners[i][0] as usize) as u64)
            .sum();
        AvailabilityTracker {
            index,
            alive: vec![true; n],
            cursor: vec![0; n],
            count: n,
            sum,
        }
    }

    fn current_min(&self, i: usize) -> u64 {
        match self.index.partners[i].get(self.cursor[i]) {
            Some(&j) => self.index.table.get(i, j as usize) as u64,
            None => 0,
        }
    }

    pub fn remove(&mut self, v: usize) -> Result<()> {
        if v >= self.alive.len() {
            return Err(Error::arg(format!("vertex {v} out of range")));
        }
        if !self.alive[v] {
            return Err(Error::State(format!("vertex {v} already removed")));
        }
        self.sum -= self.current_min(v);
        self.alive[v] = false;
        self.count -= 1;
        for i in 0..self.alive.len() {
            if !self.alive[i] {
                continue;
            }
            let list = &self.index.partners[i];
            if list.get(self.cursor[i]).map(|&j| j as usize) != Some(v) {
                continue;
            }
            let old = self.current_min(i);
            let mut c = self.cursor[i];
            while c < list.len() && !self.alive[list[c] as usize] {
                c += 1;
            }
            self.cursor[i] = c;
            self.sum = self.sum - old + self.current_min(i);
        }
        Ok(())
    }

    pub fn is_alive(&self, v: usize) -> bool {
        self.alive[v]
    }

    pub fn survivors(&self) -> usize {
        self.count
    }

    pub fn phi(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.sum as f64 / self.count as f64
        }
    }
}

/// Per-step purity costs and weightings of one complete tour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityTrace {
    /// `costs[k]` is the cost of the decision that places `order[k+1]`
    /// (the last entry is the closing edge).
    pub costs: Vec<f64>,
    pub weights: Vec<f64>,
    pub discount: f64,
}

impl PurityTrace {
    /// Weight multiplying the log-probability gradient of the decision that
    /// places `order[pos]`, for `pos` in `1..N`.
    pub fn weight_for_position(&self, pos: usize) -> f64 {
        self.weights[pos - 1]
    }
}

pub fn purity_trace(index: &PurityIndex, order: &[usize], discount: f64) -> Result<PurityTrace> {
    let n = index.len();
    crate::solvers::check_permutation(n, order)?;
    let mut tracker = index.tracker();
    tracker.remove(order[0])?;
    let mut costs = Vec::with_capacity(n);
    for t in 0..n - 1 {
        let before = tracker.phi();
        tracker.remove(order[t + 1])?;
        costs.push(index.table.get(order[t], order[t + 1]) as f64 + tracker.phi() - before);
    }
    costs.push(index.table.get(order[n - 1], order[0]) as f64);
    let weights = purity_weights(&costs, discount)?;
    Ok(PurityTrace {
        costs,
        weights,
        discount,
    })
}

/// Histogram of a tour's edge purity orders and its summary metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityProfile {
    pub histogram: Vec<u64>,
    pub prop0: f64,
    pub apo_all: f64,
    pub apo_non0: f64,
}

impl PurityProfile {
    pub const CSV_HEADER: [&'static str; 5] = ["n", "dist", "prop0", "apo_all", "apo_non0"];

    pub fn from_orders(n_bins: usize, orders: impl IntoIterator<Item = usize>) -> Self {
        let mut histogram = vec![0u64; n_bins.max(1)];
        for k in orders {
            if k >= histogram.len() {
                histogram.resize(k + 1, 0);
            }
            histogram[k] += 1;
        }
        Self::from_histogram(histogram)
    }

    pub fn from_histogram(histogram: Vec<u64>) -> Self {
        let edges: u64 = histogram.iter().sum();
        let weighted: u64 = histogram.iter().enumerate().map(|(k, &c)| k as u64 * c).sum();
        let non0 = edges - histogram.first().copied().unwrap_or(0);
        let (prop0, apo_all) = if edges > 0 {
            (histogram[0] as f64 / edges as f64, weighted as f64 / edges as f64)
        } else {
            (0.0, 0.0)
        };
        PurityProfile {
            prop0,
            apo_all,
            apo_non0: if non0 > 0 { weighted as f64 / non0 as f64 } else { 0.0 },
            histogram,
        }
    }

    pub fn edges(&self) -> u64 {
        self.histogram.iter().sum()
    }

    pub fn csv_row(&self, n: usize, dist: &str) -> [String; 5] {
        [
            n.to_string(),
            dist.to_string(),
            self.prop0.to_string(),
            self.apo_all.to_string(),
            self.apo_non0.to_string(),
        ]
    }
}

pub fn purity_profile(inst: &Instance, tour: &Tour) -> Result<PurityProfile> {
    let n = inst.len();
    if n < 3 {
        return Err(Error::arg("purity profiles need at least 3 vertices"));
    }
    crate::solvers::check_permutation(n, &tour.order)?;
    Ok(PurityProfile::from_orders(
        n - 1,
        tour.edges().map(|(a, b)| purity_order_grid(inst, a, b)),
    ))
}

/// Purity orders of all tour edges summed.
pub fn total_tour_purity(table: &PurityTable, order: &[usize]) -> u64 {
    let n = order.len();
    (0..n).map(|k| table.get(order[k], order[(k + 1) % n]) as u64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn inst(pts: &[(f64, f64)]) -> Instance {
        Instance::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn availability_small_cases() {
        let two = PurityTable::build(&inst(&[(0.0, 0.0), (1.0, 0.0)]));
        assert_eq!(purity_availability(&two, &[0, 1]).unwrap(), 0.0);
        assert_eq!(purity_availability(&two, &[1]).unwrap(), 0.0);
        assert_eq!(purity_availability(&two, &[]).unwrap(), 0.0);
        assert!(purity_availability(&two, &[0, 2]).is_err());
        assert!(purity_availability(&two, &[0, 0]).is_err());

        let line = PurityTable::build(&inst(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)]));
        assert_eq!(purity_availability(&line, &[0, 1, 2]).unwrap(), 0.0);
        // without the middle vertex the ends only see each other, but it still covers
        assert_eq!(purity_availability(&line, &[0, 2]).unwrap(), 1.0);
    }

    #[test]
    fn cost_two_points() {
        let two = PurityTable::build(&inst(&[(0.0, 0.0), (1.0, 0.0)]));
        let s = ConstructionState::new(2, 0).unwrap();
        assert_eq!(purity_cost(&two, &s, 1).unwrap(), 0.0);
        assert!(purity_cost(&two, &s, 0).is_err());
    }

    #[test]
    fn weights_examples() {
        assert_eq!(purity_weights(&[0.0; 4], 0.7).unwrap(), vec![1.0; 4]);
        assert_eq!(purity_weights(&[1.0, 2.0, 3.0], 0.0).unwrap(), vec![2.0, 3.0, 4.0]);
        assert_eq!(purity_weights(&[1.0, 2.0, 3.0], 0.5).unwrap(), vec![3.75, 4.5, 4.0]);
        assert!(purity_weights(&[1.0], 1.5).is_err());
        assert!(purity_weights(&[1.0], -0.1).is_err());
    }

    #[test]
    fn tracker_edge_cases() {
        let idx = PurityIndex::build(&inst(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)]));
        let mut tr = idx.tracker();
        assert_eq!(tr.phi(), 0.0);
        tr.remove(1).unwrap();
        assert_eq!(tr.phi(), 1.0);
        assert!(matches!(tr.remove(1), Err(Error::State(_))));
        tr.remove(0).unwrap();
        assert_eq!(tr.phi(), 0.0);
        tr.remove(2).unwrap();
        assert_eq!(tr.phi(), 0.0);
        assert_eq!(tr.survivors(), 0);
    }

    #[test]
    fn profile_metrics() {
        let p = PurityProfile::from_histogram(vec![3, 0, 1]);
        assert_eq!(p.prop0, 0.75);
        assert_eq!(p.apo_all, 0.5);
        assert_eq!(p.apo_non0, 2.0);
        let zero = PurityProfile::from_histogram(vec![5]);
        assert_eq!(zero.apo_non0, 0.0);

        let tri = inst(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.8)]);
        let t = Tour::new(&tri, vec![0, 1, 2]).unwrap();
        assert_eq!(purity_profile(&tri, &t).unwrap().edges(), 3);
        let two = inst(&[(0.0, 0.0), (1.0, 0.0)]);
        let t2 = Tour::new(&two, vec![0, 1]).unwrap();
        assert!(purity_profile(&two, &t2).is_err());
    }

    #[test]
    fn trace_closes_the_cycle() {
        let line = inst(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)]);
        let idx = PurityIndex::build(&line);
        let tr = purity_trace(&idx, &[0, 2, 1], 0.5).unwrap();
        // 0->2 covers vertex 1; availability drops from 0 ({1,2}) to 0 ({1})
        assert_eq!(tr.costs, vec![1.0, 0.0, 0.0]);
        assert_eq!(tr.weights, vec![2.0, 1.0, 1.0]);
    }
}

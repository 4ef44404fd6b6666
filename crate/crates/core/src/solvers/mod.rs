//! Reference tour constructors.

mod held_karp;
mod local_search;

pub use held_karp::{held_karp, MAX_EXACT};
pub use local_search::{local_search_solve, or_opt, two_opt, two_opt_gain};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Instance;

/// A Hamiltonian cycle with its cached Euclidean length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub length: f64,
}

impl Tour {
    pub fn new(inst: &Instance, order: Vec<usize>) -> Result<Self> {
        let length = tour_length(inst, &order)?;
        Ok(Tour { order, length })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Cycle edges `(order[k], order[k+1])`, closing edge last.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.order.len();
        (0..n).map(move |k| (self.order[k], self.order[(k + 1) % n]))
    }
}

pub fn check_permutation(n: usize, order: &[usize]) -> Result<()> {
    if order.len() != n {
        return Err(Error::arg(format!(
            "tour has {} entries for {n} vertices",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n || std::mem::replace(&mut seen[v], true) {
            return Err(Error::arg(format!("tour is not a permutation (vertex {v})")));
        }
    }
    Ok(())
}

/// Closed-tour Euclidean length.
///
/// The sum is always accumulated from vertex 0 in the direction of its
/// smaller-indexed tour neighbour, so every rotation and reversal of the same
/// cycle yields a bit-identical value.
pub fn tour_length(inst: &Instance, order: &[usize]) -> Result<f64> {
    check_permutation(inst.len(), order)?;
    Ok(cycle_length(inst, order))
}

pub(crate) fn cycle_length(inst: &Instance, order: &[usize]) -> f64 {
    let n = order.len();
    let start = order.iter().position(|&v| v == 0).unwrap_or(0);
    let next = order[(start + 1) % n];
    let prev = order[(start + n - 1) % n];
    let step = if next <= prev { 1 } else { n - 1 };
    let mut total = 0.0;
    let mut k = start;
    for _ in 0..n {
        let k2 = (k + step) % n;
        total += inst.dist(order[k], order[k2]);
        k = k2;
    }
    total
}

/// Greedy closest-unvisited construction, ties to the lowest index.
pub fn nearest_neighbor(inst: &Instance, start: usize) -> Result<Tour> {
    let n = inst.len();
    if start >= n {
        return Err(Error::arg(format!("start {start} out of range for {n} vertices")));
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    order.push(cur);
    for _ in 1..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, &seen) in visited.iter().enumerate() {
            if !seen {
                let d = inst.dist(cur, j);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
        }
        visited[best] = true;
        order.push(best);
        cur = best;
    }
    Tour::new(inst, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn inst(pts: &[(f64, f64)]) -> Instance {
        Instance::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn square_length() {
        let sq = inst(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(tour_length(&sq, &[0, 1, 2, 3]).unwrap(), 4.0);
    }

    #[test]
    fn triangle_all_permutations_equal() {
        let t = inst(&[(0.1, 0.2), (0.8, 0.3), (0.4, 0.9)]);
        let base = tour_length(&t, &[0, 1, 2]).unwrap();
        for p in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            assert_eq!(tour_length(&t, &p).unwrap(), base);
        }
    }

    #[test]
    fn rejects_non_permutations() {
        let t = inst(&[(0.1, 0.2), (0.8, 0.3), (0.4, 0.9)]);
        assert!(tour_length(&t, &[0, 1]).is_err());
        assert!(tour_length(&t, &[0, 1, 1]).is_err());
        assert!(tour_length(&t, &[0, 1, 3]).is_err());
    }

    #[test]
    fn nearest_neighbor_basics() {
        let two = inst(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(nearest_neighbor(&two, 1).unwrap().order, vec![1, 0]);
        let line = inst(&[(1.0, 0.0), (0.0, 0.0), (0.5, 0.0)]);
        assert_eq!(nearest_neighbor(&line, 1).unwrap().order, vec![1, 2, 0]);
        assert!(nearest_neighbor(&line, 3).is_err());
        // equidistant candidates resolve to the lower index
        let tie = inst(&[(0.5, 0.5), (0.5, 0.0), (0.5, 1.0)]);
        assert_eq!(nearest_neighbor(&tie, 0).unwrap().order, vec![0, 1, 2]);
    }
}

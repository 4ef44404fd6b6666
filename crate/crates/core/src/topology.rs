//! Checks for the structural properties of 0-order pure edges: every vertex
//! has one, they form a connected graph, and each vertex's 0-order
//! neighbours form a convex polygon around it.

use serde::{Deserialize, Serialize};

use crate::geometry::{Instance, PurityTable};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Existence {
    /// Every vertex has at least one 0-order partner.
    pub holds: bool,
    /// A 0-order partner per vertex: the nearest neighbour (ties to the lower
    /// index) when it qualifies, otherwise the first qualifying partner.
    pub witness: Vec<Option<usize>>,
    /// Vertices without any 0-order partner.
    pub failures: Vec<usize>,
    /// Vertices whose nearest neighbour is not a 0-order partner.
    pub nearest_not_pure: Vec<usize>,
}

pub fn check_existence(inst: &Instance, table: &PurityTable) -> Existence {
    let n = inst.len();
    let mut witness = Vec::with_capacity(n);
    let mut failures = Vec::new();
    let mut nearest_not_pure = Vec::new();
    for i in 0..n {
        let nn = (0..n)
            .filter(|&j| j != i)
            .min_by(|&a, &b| inst.dist(i, a).total_cmp(&inst.dist(i, b)).then(a.cmp(&b)))
            .expect("n >= 2");
        if table.get(i, nn) == 0 {
            witness.push(Some(nn));
            continue;
        }
        nearest_not_pure.push(i);
        let other = (0..n).find(|&j| j != i && table.get(i, j) == 0);
        if other.is_none() {
            failures.push(i);
        }
        witness.push(other);
    }
    Existence {
        holds: failures.is_empty(),
        witness,
        failures,
        nearest_not_pure,
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Number of connected components of the 0-order pure edge graph.
pub fn zero_order_components(table: &PurityTable) -> usize {
    let n = table.len();
    let mut ds = DisjointSet::new(n);
    let mut components = n;
    for i in 0..n {
        for j in (i + 1)..n {
            if table.get(i, j) == 0 && ds.union(i, j) {
                components -= 1;
            }
        }
    }
    components
}

pub fn check_connectivity(table: &PurityTable) -> bool {
    zero_order_components(table) == 1
}

/// 0-order neighbours of `v` sorted counter-clockwise by angle around `v`.
pub fn zero_order_fan(inst: &Instance, table: &PurityTable, v: usize) -> Vec<usize> {
    let c = inst.point(v);
    let mut fan: Vec<(f64, usize)> = (0..inst.len())
        .filter(|&j| j != v && table.get(v, j) == 0)
        .map(|j| {
            let p = inst.point(j);
            ((p.y - c.y).atan2(p.x - c.x), j)
        })
        .collect();
    fan.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    fan.into_iter().map(|(_, j)| j).collect()
}

/// Whether the polygon through `v`'s 0-order neighbours, taken in angular
/// order, turns the same way at every corner. Collinear corners are allowed.
/// Fewer than three neighbours is vacuously convex.
pub fn check_convexity(inst: &Instance, table: &PurityTable, v: usize) -> bool {
    let fan = zero_order_fan(inst, table, v);
    let m = fan.len();
    if m < 3 {
        return true;
    }
    let (mut pos, mut neg) = (false, false);
    for k in 0..m {
        let a = inst.point(fan[k]);
        let b = inst.point(fan[(k + 1) % m]);
        let c = inst.point(fan[(k + 2) % m]);
        let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        let scale = a.dist(&b) * b.dist(&c);
        if cross > 1e-12 * scale {
            pos = true;
        } else if cross < -1e-12 * scale {
            neg = true;
        }
    }
    !(pos && neg)
}

/// Pass/fail counts over a fuzz suite.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyTally {
    pub instances: usize,
    pub existence_failures: usize,
    /// Instances where some vertex's nearest neighbour is not 0-order pure.
    pub nearest_witness_failures: usize,
    pub connectivity_failures: usize,
    pub convexity_vertices_checked: usize,
    pub convexity_failures: usize,
}

impl TopologyTally {
    pub fn passed(&self) -> bool {
        self.existence_failures == 0
            && self.nearest_witness_failures == 0
            && self.connectivity_failures == 0 && self.convexity_failures == 0
    }

    pub fn record(&mut self, inst: &Instance) {
        let table = PurityTable::build(inst);
        self.instances += 1;
        let existence = check_existence(inst, &table);
        if !existence.holds {
            self.existence_failures += 1;
        }
        if !existence.nearest_not_pure.is_empty() {
            self.nearest_witness_failures += 1;
        }
        if !check_connectivity(&table) {
            self.connectivity_failures += 1;
        }
        for v in 0..inst.len() {
            self.convexity_vertices_checked += 1;
            if !check_convexity(inst, &table, v) {
                self.convexity_failures += 1;
            }
        }
    }

    pub fn merge(mut self, other: TopologyTally) -> Self {
        self.instances += other.instances;
        self.existence_failures += other.existence_failures;
        self.nearest_witness_failures += other.nearest_witness_failures;
        self.connectivity_failures += other.connectivity_failures;
        self.convexity_vertices_checked += other.convexity_vertices_checked;
        self.convexity_failures += other.convexity_failures;
        self
    }
}

/// Runs all three checks on `count` seeded uniform instances with sizes
/// drawn from `min_n..=max_n`.
pub fn fuzz_topology(count: usize, min_n: usize, max_n: usize, base_seed: u64) -> TopologyTally {
    use rand::Rng as _;
    use rayon::prelude::*;

    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = crate::seed::derive(base_seed, &[crate::seed::tag("topology"), i as u64]);
            let n = crate::seed::rng(s).random_range(min_n.max(2)..=max_n.max(2));
            let inst = crate::generate::generate(&crate::generate::GenSpec::new(
                crate::generate::Distribution::Uniform,
                n,
                s,
            ))
            .expect("valid generator spec");
            let mut t = TopologyTally::default();
            t.record(&inst);
            t
        })
        .reduce(TopologyTally::default, TopologyTally::merge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn inst(pts: &[(f64, f64)]) -> Instance {
        Instance::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn two_points() {
        let i = inst(&[(0.2, 0.2), (0.7, 0.9)]);
        let t = PurityTable::build(&i);
        let e = check_existence(&i, &t);
        assert!(e.holds);
        assert_eq!(e.witness, vec![Some(1), Some(0)]);
        assert!(e.nearest_not_pure.is_empty());
        assert!(check_connectivity(&t));
        assert!(check_convexity(&i, &t, 0));
    }

    #[test]
    fn collinear_three() {
        let i = inst(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)]);
        let t = PurityTable::build(&i);
        let e = check_existence(&i, &t);
        assert!(e.holds);
        let w = e.witness[1].unwrap();
        assert!(w == 0 || w == 2);
        assert_eq!(t.get(1, w), 0);
    }

    #[test]
    fn square_corners() {
        let i = inst(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let t = PurityTable::build(&i);
        for v in 0..4 {
            assert!(check_convexity(&i, &t, v));
        }
    }

    #[test]
    fn detects_a_concave_fan() {
        // a hand-built table claiming all four points are 0-order partners of the center
        let i = inst(&[(0.5, 0.5), (0.9, 0.5), (0.52, 0.52), (0.5, 0.9), (0.1, 0.5), (0.5, 0.1)]);
        let mut t = PurityTable::build(&i);
        t = t.with_row_zeroed(0);
        assert!(!check_convexity(&i, &t, 0));
    }
}

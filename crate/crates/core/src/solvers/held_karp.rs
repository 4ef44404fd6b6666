// Held-Karp: g(S, e) is the cheapest path that leaves vertex 0, visits
// exactly the vertices of S and ends at e in S. Vertex 0 is fixed as the
// start, so masks range over the remaining N-1 vertices.

use super::Tour;
use crate::error::{Error, Result};
use crate::geometry::Instance;

/// Largest instance accepted by [`held_karp`] (2^15 · 15 table entries).
pub const MAX_EXACT: usize = 16;

pub fn held_karp(inst: &Instance) -> Result<Tour> {
    let n = inst.len();
    if n > MAX_EXACT {
        return Err(Error::Capacity(format!(
            "held_karp supports at most {MAX_EXACT} vertices, got {n}"
        )));
    }
    if n <= 3 {
        return Tour::new(inst, (0..n).collect());
    }
    let m = n - 1;
    let full = (1usize << m) - 1;
    let d = |a: usize, b: usize| inst.dist(a, b);

    let mut cost = vec![f64::INFINITY; (full + 1) * m];
    let mut parent = vec![u8::MAX; (full + 1) * m];
    for e in 0..m {
        cost[(1 << e) * m + e] = d(0, e + 1);
    }
    for mask in 1..=full {
        for e in 0..m {
            if mask & (1 << e) == 0 {
                continue;
            }
            let here = cost[mask * m + e];
            if !here.is_finite() {
                continue;
            }
            let mut rest = full & !mask;
            while rest != 0 {
                let f = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let next = mask | (1 << f);
                let cand = here + d(e + 1, f + 1);
                if cand < cost[next * m + f] {
                    cost[next * m + f] = cand;
                    parent[next * m + f] = e as u8;
                }
            }
        }
    }

    let mut last = 0;
    let mut best = f64::INFINITY;
    for e in 0..m {
        let total = cost[full * m + e] + d(e + 1, 0);
        if total < best {
            best = total;
            last = e;
        }
    }

    let mut order = Vec::with_capacity(n);
    let mut mask = full;
    let mut e = last;
    loop {
        order.push(e + 1);
        let p = parent[mask * m + e];
        mask &= !(1 << e);
        if p == u8::MAX {
            break;
        }
        e = p as usize;
    }
    order.push(0);
    order.reverse();
    Tour::new(inst, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn unit_square() {
        let sq = Instance::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        let t = held_karp(&sq).unwrap();
        assert_eq!(t.length, 4.0);
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn tiny_instances() {
        let tri = Instance::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]).unwrap();
        assert!((held_karp(&tri).unwrap().length - (2.0 + 2f64.sqrt())).abs() < 1e-15);
        let two = Instance::new(vec![Point::new(0.0, 0.0), Point::new(0.5, 0.0)]).unwrap();
        assert_eq!(held_karp(&two).unwrap().length, 1.0);
    }

    #[test]
    fn capacity() {
        let pts = (0..17).map(|k| Point::new(k as f64 / 16.0, 0.5)).collect();
        let big = Instance::new(pts).unwrap();
        assert!(matches!(held_karp(&big), Err(Error::Capacity(_))));
    }
}

//! Nearest-neighbour construction followed by alternating 2-opt and Or-opt
//! descent, best of several restarts. Stands in for a state-of-the-art
//! heuristic solver when producing near-optimal reference tours.

use rand::seq::SliceRandom as _;
use rayon::prelude::*;

use super::{cycle_length, nearest_neighbor, Tour};
use crate::error::Result;
use crate::geometry::Instance;
use crate::seed;

const EPS: f64 = 1e-12;

/// Length reduction from replacing edges `(a,b)`, `(c,d)` with `(a,c)`, `(b,d)`.
pub fn two_opt_gain(inst: &Instance, a: usize, b: usize, c: usize, d: usize) -> f64 {
    inst.dist(a, b) + inst.dist(c, d) - inst.dist(a, c) - inst.dist(b, d)
}

/// First-improvement 2-opt until no improving move remains. Returns whether
/// the tour changed.
pub fn two_opt(inst: &Instance, order: &mut [usize]) -> bool {
    let n = order.len();
    if n < 4 {
        return false;
    }
    let mut changed = false;
    loop {
        let mut improved = false;
        for i in 0..n - 2 {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b, c, d) = (order[i], order[i + 1], order[j], order[(j + 1) % n]);
                if two_opt_gain(inst, a, b, c, d) > EPS {
                    order[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            return changed;
        }
        changed = true;
    }
}

/// Or-opt: relocate segments of 1 to 3 consecutive vertices, in either
/// orientation, to the cheapest improving position. Runs to local optimality.
pub fn or_opt(inst: &Instance, order: &mut Vec<usize>) -> bool {
    let n = order.len();
    let mut changed = false;
    'restart: loop {
        for seg in 1..=3usize {
            if n < seg + 3 {
                continue;
            }
            for i in 0..n {
                let at = |k: usize| order[(i + k) % n];
                let first = at(0);
                let last = at(seg - 1);
                let prev = at(n - 1);
                let next = at(seg);
                let removed = inst.dist(prev, first) + inst.dist(last, next) - inst.dist(prev, next);
                // remaining cycle is at(seg), ..., at(n-1); try every edge but (prev, next)
                let rest = n - seg;
                for p in 0..rest - 1 {
                    let u = at(seg + p);
                    let v = at(seg + p + 1);
                    let base = inst.dist(u, v);
                    let fwd = inst.dist(u, first) + inst.dist(last, v) - base;
                    let rev = inst.dist(u, last) + inst.dist(first, v) - base;
                    let (added, reversed) = if rev < fwd { (rev, true) } else { (fwd, false) };
                    if removed - added > EPS {
                        let mut segment: Vec<usize> = (0..seg).map(at).collect();
                        if reversed {
                            segment.reverse();
                        }
                        let mut fresh = Vec::with_capacity(n);
                        fresh.extend((0..=p).map(|k| at(seg + k)));
                        fresh.extend(segment);
                        fresh.extend((p + 1..rest).map(|k| at(seg + k)));
                        *order = fresh;
                        changed = true;
                        continue 'restart;
                    }
                }
            }
        }
        return changed;
    }
}

fn descend(inst: &Instance, order: &mut Vec<usize>) {
    loop {
        two_opt(inst, order);
        if !or_opt(inst, order) {
            break;
        }
    }
}

/// Best tour over `restarts` descents, each from a nearest-neighbour tour.
/// Start vertices are drawn without replacement from a seeded shuffle; descent
/// is deterministic given the start, so at most `n` restarts run.
/// Ties go to the lowest restart index.
pub fn local_search_solve(inst: &Instance, restarts: usize, seed: u64) -> Result<Tour> {
    let n = inst.len();
    if n <= 3 {
        return Tour::new(inst, (0..n).collect());
    }
    let mut starts: Vec<usize> = (0..n).collect();
    starts.shuffle(&mut seed::rng(seed));
    starts.truncate(restarts.clamp(1, n));
    let runs: Vec<Result<(Vec<usize>, f64)>> = starts
        .into_par_iter()
        .map(|start| {
            let mut order = nearest_neighbor(inst, start)?.order;
            descend(inst, &mut order);
            let len = cycle_length(inst, &order);
            Ok((order, len))
        })
        .collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for run in runs {
        let (order, len) = run?;
        if best.as_ref().is_none_or(|(_, b)| len < *b) {
            best = Some((order, len));
        }
    }
    let (order, length) = best.expect("at least one restart");
    Ok(Tour { order, length })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn untangles_a_crossing() {
        let sq = Instance::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        let mut order = vec![0, 1, 2, 3];
        assert!(two_opt(&sq, &mut order));
        assert_eq!(cycle_length(&sq, &order), 4.0);
    }

    #[test]
    fn or_opt_moves_a_stray_vertex() {
        // vertex 4 belongs between 0 and 1 on the bottom edge
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.5, 0.0),
        ];
        let inst = Instance::new(pts).unwrap();
        let mut order = vec![0, 1, 2, 4, 3];
        assert!(or_opt(&inst, &mut order));
        assert!((cycle_length(&inst, &order) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn restarts_use_distinct_starts() {
        let pts: Vec<Point> = (0..12).map(|i| Point::new((i * 7 % 12) as f64 / 12.0, (i * 5 % 11) as f64 / 11.0)).collect();
        let inst = Instance::new(pts).unwrap();
        let all = local_search_solve(&inst, 12, 4).unwrap();
        // extra restarts beyond n repeat nothing
        assert_eq!(all, local_search_solve(&inst, 500, 4).unwrap());
        let best = (0..12)
            .map(|s| {
                let mut o = nearest_neighbor(&inst, s).unwrap().order;
                descend(&inst, &mut o);
                cycle_length(&inst, &o)
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(all.length, best);
    }

    #[test]
    fn tiny_inputs() {
        let inst = Instance::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).unwrap();
        assert_eq!(local_search_solve(&inst, 3, 0).unwrap().length, 2.0);
    }
}

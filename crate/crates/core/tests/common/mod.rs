//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use pula_core::geometry::{Instance, Point, PurityTable};
use pula_core::policy::{action_distribution, PolicyParams, Rollout};
use pula_core::purity::ConstructionState;

/// Counts points strictly inside the circle with diameter `a b`.
pub fn brute_purity(points: &[Point], i: usize, j: usize) -> usize {
    let (a, b) = (points[i], points[j]);
    points
        .iter()
        .filter(|p| (a.x - p.x) * (b.x - p.x) + (a.y - p.y) * (b.y - p.y) < 0.0)
        .count()
}

/// Availability computed from scratch with orders taken from `points`.
pub fn scratch_phi(points: &[Point], set: &[usize]) -> f64 {
    if set.len() < 2 {
        return 0.0;
    }
    let total: usize = set
        .iter()
        .map(|&i| {
            set.iter()
                .filter(|&&j| j != i)
                .map(|&j| brute_purity(points, i, j))
                .min()
                .unwrap()
        })
        .sum();
    total as f64 / set.len() as f64
}

fn cycle(points: &[Point], order: &[usize]) -> f64 {
    let n = order.len();
    (0..n).map(|k| points[order[k]].dist(&points[order[(k + 1) % n]])).sum()
}

/// Shortest Hamiltonian cycle by enumerating permutations of `1..n` with 0 fixed.
pub fn brute_force_tsp(points: &[Point]) -> f64 {
    let n = points.len();
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut rest, 0, &mut |perm| {
        let mut order = vec![0];
        order.extend_from_slice(perm);
        best = best.min(cycle(points, &order));
    });
    best
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

/// `Σ_b adv_b Σ_k w_bk log p_θ(step k of rollout b)` averaged over the batch,
/// with tours, advantages and weights held fixed.
pub fn surrogate(
    inst: &[Instance],
    tables: &[PurityTable],
    rollouts: &[Rollout],
    adv: &[f64],
    weights: &[Vec<f64>],
    params: &PolicyParams,
) -> f64 {
    let mut total = 0.0;
    for b in 0..rollouts.len() {
        let order = &rollouts[b].tour.order;
        let mut inner = 0.0;
        for k in 0..order.len() - 1 {
            let state = ConstructionState::from_prefix(order.len(), &order[..=k]).unwrap();
            let d = action_distribution(&inst[b], &tables[b], &state, params).unwrap();
            inner += weights[b][k] * d.log_prob(order[k + 1]).unwrap();
        }
        total += adv[b] * inner;
    }
    total / rollouts.len() as f64
}

/// Central differences of `f` at `w` with step `h`.
pub fn central_diff(w: &[f64], h: f64, f: impl Fn(&PolicyParams) -> f64) -> Vec<f64> {
    (0..w.len())
        .map(|i| {
            let mut plus = w.to_vec();
            let mut minus = w.to_vec();
            plus[i] += h;
            minus[i] -= h;
            (f(&PolicyParams { w: plus }) - f(&PolicyParams { w: minus })) / (2.0 * h)
        })
        .collect()
}

/// `‖a - b‖ / max(‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

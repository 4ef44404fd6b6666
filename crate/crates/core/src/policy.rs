//! Feature-linear softmax construction policy.
//!
//! At each step every unvisited candidate `c` gets a feature vector
//! `f(c) = [d, q, r, u]`:
//!
//! * `d` — Euclidean distance from the current vertex,
//! * `q` — `ln(1 + K_p(current, c))`,
//! * `r` — rank of `c` by distance among the candidates, scaled to `[0, 1]`,
//! * `u` — fraction of vertices still unvisited (identical for all candidates).
//!
//! The logit is `-w·f(c)`, so positive weights penalize long and impure edges.
//! Features are used unstandardized.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Instance, PurityTable};
use crate::purity::ConstructionState;
use crate::seed;
use crate::solvers::Tour;

pub const FEATURES: usize = 4;
pub type Features = [f64; FEATURES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyParams {
    pub w: Vec<f64>,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self::zeros()
    }
}

impl PolicyParams {
    pub fn zeros() -> Self {
        PolicyParams { w: vec![0.0; FEATURES] }
    }

    pub fn new(w: Vec<f64>) -> Result<Self> {
        let p = PolicyParams { w };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.len() != FEATURES {
            return Err(Error::arg(format!(
                "policy expects {FEATURES} weights, got {}",
                self.w.len()
            )));
        }
        if self.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("policy weights must be finite"));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn score(&self, f: &Features) -> f64 {
        -self.w.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Softmax over the unvisited candidates of one state.
#[derive(Debug, Clone)]
pub struct ActionDistribution {
    /// Candidates in ascending index order.
    pub candidates: Vec<usize>,
    pub features: Vec<Features>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    log_norm: f64,
}

impl ActionDistribution {
    fn position(&self, v: usize) -> Result<usize> {
        self.candidates
            .binary_search(&v)
            .map_err(|_| Error::arg(format!("vertex {v} is not a candidate")))
    }

    pub fn prob(&self, v: usize) -> Result<f64> {
        Ok(self.probs[self.position(v)?])
    }

    pub fn log_prob(&self, v: usize) -> Result<f64> {
        Ok(self.logits[self.position(v)?] - self.log_norm)
    }

    /// Candidate with the largest logit; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for k in 1..self.logits.len() {
            if self.logits[k] > self.logits[best] {
                best = k;
            }
        }
        self.candidates[best]
    }

    /// Gradient of `log p(chosen)` with respect to the weights:
    /// `-f(chosen) + Σ_c p(c) f(c)`.
    pub fn grad_log_prob(&self, chosen: usize) -> Result<Features> {
        let k = self.position(chosen)?;
        let mut g = [0.0; FEATURES];
        for (p, f) in self.probs.iter().zip(&self.features) {
            for (gi, fi) in g.iter_mut().zip(f) {
                *gi += p * fi;
            }
        }
        for (gi, fi) in g.iter_mut().zip(&self.features[k]) {
            *gi -= fi;
        }
        Ok(g)
    }
}

pub fn candidate_features(inst: &Instance, table: &PurityTable, state: &ConstructionState) -> (Vec<usize>, Vec<Features>) {
    let cur = state.current();
    let candidates: Vec<usize> = state.unvisited().collect();
    let m = candidates.len();
    let dists: Vec<f64> = candidates.iter().map(|&c| inst.dist(cur, c)).collect();
    let mut by_dist: Vec<usize> = (0..m).collect();
    by_dist.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    let mut rank = vec![0.0; m];
    if m > 1 {
        for (r, &k) in by_dist.iter().enumerate() {
            rank[k] = r as f64 / (m - 1) as f64;
        }
    }
    let u = m as f64 / state.n() as f64;
    let features = (0..m)
        .map(|k| {
            let kp = table.get(cur, candidates[k]) as f64;
            [dists[k], kp.ln_1p(), rank[k], u]
        })
        .collect();
    (candidates, features)
}

pub fn action_distribution(
    inst: &Instance,
    table: &PurityTable,
    state: &ConstructionState,
    params: &PolicyParams,
) -> Result<ActionDistribution> {
    if state.unvisited_count() == 0 {
        return Err(Error::State("no unvisited candidates left".into()));
    }
    let (candidates, features) = candidate_features(inst, table, state);
    let logits: Vec<f64> = features.iter().map(|f| params.score(f)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs = exps.iter().map(|e| e / z).collect();
    Ok(ActionDistribution {
        candidates,
        features,
        logits,
        probs,
        log_norm: max + z.ln(),
    })
}

pub fn grad_log_prob(
    inst: &Instance,
    table: &PurityTable,
    state: &ConstructionState,
    params: &PolicyParams,
    chosen: usize,
) -> Result<Features> {
    action_distribution(inst, table, state, params)?.grad_log_prob(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Sample,
    Greedy,
}

/// How the first vertex is chosen. The choice carries no gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartRule {
    #[default]
    Zero,
    Random,
}

/// One decision of a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub chosen: usize,
    pub log_prob: f64,
    pub grad: Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub tour: Tour,
    /// `steps[k]` places `tour.order[k + 1]`.
    pub steps: Vec<Step>,
}

impl Rollout {
    pub fn log_prob(&self) -> f64 {
        self.steps.iter().map(|s| s.log_prob).sum()
    }

    /// Construction state in which `steps[k]` was decided.
    pub fn state_before(&self, k: usize) -> ConstructionState {
        ConstructionState::from_prefix(self.tour.len(), &self.tour.order[..=k])
            .expect("rollout orders are permutations")
    }
}

pub fn rollout(
    inst: &Instance,
    table: &PurityTable,
    params: &PolicyParams,
    mode: DecodeMode,
    seed: u64,
    start: StartRule,
) -> Result<Rollout> {
    params.validate()?;
    let n = inst.len();
    if n < 3 {
        return Err(Error::arg("rollouts need at least 3 vertices"));
    }
    let mut rng = seed::rng(seed);
    let first = match start {
        StartRule::Zero => 0,
        StartRule::Random => rng.random_range(0..n),
    };
    let mut state = ConstructionState::new(n, first)?;
    let mut steps = Vec::with_capacity(n - 1);
    while state.unvisited_count() > 0 {
        let dist = action_distribution(inst, table, &state, params)?;
        let chosen = match mode {
            DecodeMode::Greedy => dist.argmax(),
            DecodeMode::Sample => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = *dist.candidates.last().unwrap();
                for (&c, &p) in dist.candidates.iter().zip(&dist.probs) {
                    acc += p;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                pick
            }
        };
        steps.push(Step {
            chosen,
            log_prob: dist.log_prob(chosen)?,
            grad: dist.grad_log_prob(chosen)?,
        });
        state.visit(chosen)?;
    }
    let tour = Tour::new(inst, state.visited().to_vec())?;
    Ok(Rollout { tour, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn two_candidate_softmax() {
        // current vertex 0; candidates at distance 0.1 and 0.2
        let inst = Instance::new(vec![Point::new(0.5, 0.5), Point::new(0.6, 0.5), Point::new(0.5, 0.7)]).unwrap();
        let table = PurityTable::build(&inst);
        let state = ConstructionState::new(3, 0).unwrap();
        let p = PolicyParams::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let d = action_distribution(&inst, &table, &state, &p).unwrap();
        assert!((d.probs[0] - 0.52498).abs() < 5e-6);
        assert!((d.probs[1] - 0.47502).abs() < 5e-6);

        let z = action_distribution(&inst, &table, &state, &PolicyParams::zeros()).unwrap();
        assert_eq!(z.probs, vec![0.5, 0.5]);
        // vertex 1 is the first candidate
        let g = z.grad_log_prob(1).unwrap();
        let mean: Vec<f64> = (0..FEATURES).map(|i| 0.5 * (z.features[0][i] + z.features[1][i])).collect();
        for i in 0..FEATURES {
            assert!((g[i] - (mean[i] - z.features[0][i])).abs() < 1e-12);
        }
    }

    #[test]
    fn single_candidate() {
        let inst = Instance::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.5, 0.4)]).unwrap();
        let table = PurityTable::build(&inst);
        let state = ConstructionState::from_prefix(3, &[0, 2]).unwrap();
        let p = PolicyParams::new(vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let d = action_distribution(&inst, &table, &state, &p).unwrap();
        assert_eq!(d.candidates, vec![1]);
        assert_eq!(d.probs, vec![1.0]);
        assert_eq!(d.grad_log_prob(1).unwrap(), [0.0; FEATURES]);
        assert!(d.grad_log_prob(0).is_err());

        let full = ConstructionState::from_prefix(3, &[0, 2, 1]).unwrap();
        assert!(matches!(action_distribution(&inst, &table, &full, &p), Err(Error::State(_))));
    }

    #[test]
    fn param_validation() {
        assert!(PolicyParams::new(vec![1.0; 3]).is_err());
        assert!(PolicyParams::new(vec![f64::NAN, 0.0, 0.0, 0.0]).is_err());
        assert_eq!(PolicyParams::new(vec![3.0, 4.0, 0.0, 0.0]).unwrap().norm(), 5.0);
        assert_eq!(serde_json::to_string(&PolicyParams::zeros()).unwrap(), "[0.0,0.0,0.0,0.0]");
    }
}

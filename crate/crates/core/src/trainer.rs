//! REINFORCE with a greedy-rollout baseline, and its purity-weighted
//! variant (PUPO), plus greedy evaluation against reference solvers.
//!
//! Both estimators average `(L(τ) - b) · Σ_t w_t ∇log p(τ_t)` over a batch,
//! with `w_t = 1` for vanilla REINFORCE and `w_t = W(U_{t-1}, τ_t)` for PUPO.
//! Parameters move against the estimate (descent on expected tour length).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{generate, Distribution, GenSpec};
use crate::geometry::{Instance, PurityTable};
use crate::policy::{rollout, DecodeMode, PolicyParams, Rollout, StartRule, FEATURES};
use crate::purity::{purity_profile, purity_trace, PurityIndex, PurityProfile, PurityTrace};
use crate::seed;
use crate::solvers::{held_karp, local_search_solve, MAX_EXACT};

pub const EPOCH_SCHEMA_LINE: &str = "# schema: pula/train-epochs v1";
pub const EVAL_SCHEMA_LINE: &str = "# schema: pula/eval v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vanilla,
    Pupo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineUpdate {
    /// Copy the current parameters into the baseline at epoch end when they
    /// achieve a strictly lower mean greedy length on the held-out set.
    #[default]
    OnImprovement,
    /// Keep the initial parameters as the baseline throughout.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch: usize,
    pub scale: usize,
    pub discount: f64,
    pub learning_rate: f64,
    pub mode: Mode,
    pub seed: u64,
    pub baseline_update: BaselineUpdate,
    /// Size of the held-out set used for baseline updates and epoch reports.
    pub eval_size: usize,
    /// Local-search restarts for reference tours when `scale` exceeds the exact cap.
    pub reference_restarts: usize,
    pub start: StartRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            steps_per_epoch: 50,
            batch: 64,
            scale: 20,
            discount: 0.95,
            learning_rate: 0.05,
            mode: Mode::Vanilla,
            seed: 0,
            baseline_update: BaselineUpdate::OnImprovement,
            eval_size: 128,
            reference_restarts: 5,
            start: StartRule::Zero,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch == 0 || self.eval_size == 0 {
            return Err(Error::arg("epochs, steps_per_epoch, batch and eval_size must be positive"));
        }
        if self.scale < 3 {
            return Err(Error::arg("training scale must be at least 3"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::arg(format!("discount {} outside [0, 1]", self.discount)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        Ok(())
    }
}

/// Everything a gradient estimate needs about one batch instance.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub rollout: Rollout,
    pub baseline: f64,
    pub trace: Option<PurityTrace>,
}

fn accumulate(rollouts: &[&Rollout], baselines: &[f64], weight: impl Fn(usize, usize) -> f64) -> Result<Vec<f64>> {
    if rollouts.len() != baselines.len() {
        return Err(Error::arg(format!(
            "{} rollouts but {} baselines",
            rollouts.len(),
            baselines.len()
        )));
    }
    if rollouts.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let mut g = vec![0.0; FEATURES];
    for (b, (r, &base)) in rollouts.iter().zip(baselines).enumerate() {
        let adv = r.tour.length - base;
        let mut inner = [0.0; FEATURES];
        for (k, step) in r.steps.iter().enumerate() {
            let w = weight(b, k);
            for (acc, gi) in inner.iter_mut().zip(&step.grad) {
                *acc += w * gi;
            }
        }
        for (acc, v) in g.iter_mut().zip(inner) {
            *acc += adv * v;
        }
    }
    let scale = 1.0 / rollouts.len() as f64;
    g.iter_mut().for_each(|v| *v *= scale);
    Ok(g)
}

/// `mean_b (L(τ_b) - baseline_b) · Σ_t ∇log p(τ_t)`.
pub fn reinforce_gradient(rollouts: &[&Rollout], baselines: &[f64]) -> Result<Vec<f64>> {
    accumulate(rollouts, baselines, |_, _| 1.0)
}

/// `mean_b (L(τ_b) - baseline_b) · Σ_t W_t ∇log p(τ_t)`, where the decision
/// placing `order[k+1]` is weighted by `trace.weights[k]`.
pub fn pupo_gradient(rollouts: &[&Rollout], traces: &[&PurityTrace], baselines: &[f64]) -> Result<Vec<f64>> {
    if traces.len() != rollouts.len() {
        return Err(Error::arg(format!(
            "{} rollouts but {} purity traces",
            rollouts.len(),
            traces.len()
        )));
    }
    for (r, t) in rollouts.iter().zip(traces) {
        if t.weights.len() != r.steps.len() + 1 {
            return Err(Error::arg("purity trace does not match its rollout"));
        }
    }
    accumulate(rollouts, baselines, |b, k| traces[b].weights[k])
}

/// Gradient of whichever estimator `mode` selects over prepared batch items.
pub fn batch_gradient(items: &[BatchItem], mode: Mode) -> Result<Vec<f64>> {
    let rollouts: Vec<&Rollout> = items.iter().map(|i| &i.rollout).collect();
    let baselines: Vec<f64> = items.iter().map(|i| i.baseline).collect();
    match mode {
        Mode::Vanilla => reinforce_gradient(&rollouts, &baselines),
        Mode::Pupo => {
            let traces = items
                .iter()
                .map(|i| i.trace.as_ref().ok_or_else(|| Error::arg("missing purity trace")))
                .collect::<Result<Vec<_>>>()?;
            pupo_gradient(&rollouts, &traces, &baselines)
        }
    }
}

/// A seeded instance with its purity index, ready for rollouts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub instance: Instance,
    pub index: PurityIndex,
}

impl Prepared {
    pub fn new(instance: Instance) -> Self {
        let index = PurityIndex::build(&instance);
        Prepared { instance, index }
    }

    pub fn table(&self) -> &PurityTable {
        &self.index.table
    }
}

pub fn prepare_uniform(count: usize, scale: usize, base_seed: u64, label: &str) -> Result<Vec<Prepared>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive(base_seed, &[seed::tag(label), i as u64]);
            Ok(Prepared::new(generate(&GenSpec::new(Distribution::Uniform, scale, s))?))
        })
        .collect()
}

/// Builds one batch item: a sampled rollout under `params`, the greedy
/// baseline length under `baseline`, and a purity trace when `discount` is given.
pub fn batch_item(
    prep: &Prepared,
    params: &PolicyParams,
    baseline: &PolicyParams,
    sample_seed: u64,
    start: StartRule,
    discount: Option<f64>,
) -> Result<BatchItem> {
    let r = rollout(&prep.instance, prep.table(), params, DecodeMode::Sample, sample_seed, start)?;
    let b = rollout(&prep.instance, prep.table(), baseline, DecodeMode::Greedy, sample_seed, start)?;
    let trace = match discount {
        Some(d) => Some(purity_trace(&prep.index, &r.tour.order, d)?),
        None => None,
    };
    Ok(BatchItem {
        rollout: r,
        baseline: b.tour.length,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean length of the sampled training tours.
    pub mean_sampled_length: f64,
    /// Mean greedy length on the held-out set.
    pub mean_greedy_length: f64,
    pub mean_gap: f64,
    pub prop0: f64,
    pub apo_all: f64,
    pub apo_non0: f64,
    pub param_norm: f64,
    pub baseline_updated: bool,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochStats>,
    pub final_params: PolicyParams,
    pub baseline_params: PolicyParams,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{EPOCH_SCHEMA_LINE}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epoch",
            "mean_sampled_length",
            "mean_greedy_length",
            "mean_gap",
            "prop0",
            "apo_all",
            "apo_non0",
            "param_norm",
            "baseline_updated",
        ])
        .map_err(crate::stats::csv_err)?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.mean_sampled_length.to_string(),
                e.mean_greedy_length.to_string(),
                e.mean_gap.to_string(),
                e.prop0.to_string(),
                e.apo_all.to_string(),
                e.apo_non0.to_string(),
                e.param_norm.to_string(),
                e.baseline_updated.to_string(),
            ])
            .map_err(crate::stats::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reference tour lengths: exact when the scale allows it, local search otherwise.
pub fn reference_lengths(set: &[Prepared], restarts: usize, base_seed: u64) -> Result<Vec<f64>> {
    set.par_iter()
        .enumerate()
        .map(|(i, p)| {
            if p.instance.len() <= MAX_EXACT {
                held_karp(&p.instance).map(|t| t.length)
            } else {
                local_search_solve(&p.instance, restarts, seed::derive(base_seed, &[seed::tag("reference"), i as u64]))
                    .map(|t| t.length)
            }
        })
        .collect()
}

pub fn train(config: &TrainConfig) -> Result<(PolicyParams, TrainReport)> {
    config.validate()?;
    let cfg = config;
    let eval_set = prepare_uniform(cfg.eval_size, cfg.scale, cfg.seed, "baseline-eval")?;
    let refs = reference_lengths(&eval_set, cfg.reference_restarts, cfg.seed)?;

    let mut params = PolicyParams::zeros();
    let mut baseline = params.clone();
    let mut baseline_score = evaluate_prepared(&baseline, &eval_set, &refs, cfg.start)?.mean_model_length;
    let discount = (cfg.mode == Mode::Pupo).then_some(cfg.discount);
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut sampled = 0.0;
        for step in 0..cfg.steps_per_epoch {
            let items: Vec<BatchItem> = (0..cfg.batch)
                .into_par_iter()
                .map(|i| {
                    let s = seed::derive(cfg.seed, &[seed::tag("batch"), epoch as u64, step as u64, i as u64]);
                    let prep = Prepared::new(generate(&GenSpec::new(Distribution::Uniform, cfg.scale, s))?);
                    batch_item(&prep, &params, &baseline, seed::derive(s, &[seed::tag("sample")]), cfg.start, discount)
                })
                .collect::<Result<_>>()?;
            sampled += items.iter().map(|i| i.rollout.tour.length).sum::<f64>() / items.len() as f64;
            let g = batch_gradient(&items, cfg.mode)?;
            for (w, gi) in params.w.iter_mut().zip(&g) {
                *w -= cfg.learning_rate * gi;
            }
            params.validate()?;
        }

        let eval = evaluate_prepared(&params, &eval_set, &refs, cfg.start)?;
        let updated = cfg.baseline_update == BaselineUpdate::OnImprovement && eval.mean_model_length < baseline_score;
        if updated {
            baseline = params.clone();
            baseline_score = eval.mean_model_length;
        }
        epochs.push(EpochStats {
            epoch,
            mean_sampled_length: sampled / cfg.steps_per_epoch as f64,
            mean_greedy_length: eval.mean_model_length,
            mean_gap: eval.mean_gap,
            prop0: eval.mean_prop0,
            apo_all: eval.mean_apo_all,
            apo_non0: eval.mean_apo_non0,
            param_norm: params.norm(),
            baseline_updated: updated,
            weights: params.w.clone(),
        });
    }

    let report = TrainReport {
        config: cfg.clone(),
        epochs,
        final_params: params.clone(),
        baseline_params: baseline,
    };
    Ok((params, report))
}

/// `(L_model - L_ref) / L_ref · 100`.
pub fn gap_percent(model: f64, reference: f64) -> f64 {
    (model - reference) / reference * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    HeldKarp,
    LocalSearch { restarts: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub index: usize,
    pub n: usize,
    pub model_length: f64,
    pub reference_length: f64,
    pub gap: f64,
    pub profile: PurityProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    pub mean_model_length: f64,
    pub mean_gap: f64,
    pub mean_prop0: f64,
    pub mean_apo_all: f64,
    pub mean_apo_non0: f64,
}

impl Evaluation {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let m = rows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / m;
        Evaluation {
            mean_model_length: mean(&|r| r.model_length),
            mean_gap: mean(&|r| r.gap),
            mean_prop0: mean(&|r| r.profile.prop0),
            mean_apo_all: mean(&|r| r.profile.apo_all),
            mean_apo_non0: mean(&|r| r.profile.apo_non0),
            rows,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{EVAL_SCHEMA_LINE}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "n", "model_length", "reference_length", "gap", "prop0", "apo_all", "apo_non0"])
            .map_err(crate::stats::csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.index.to_string(),
                r.n.to_string(),
                r.model_length.to_string(),
                r.reference_length.to_string(),
                r.gap.to_string(),
                r.profile.prop0.to_string(),
                r.profile.apo_all.to_string(),
                r.profile.apo_non0.to_string(),
            ])
            .map_err(crate::stats::csv_err)?;
        }
        let mean_ref = self.rows.iter().map(|r| r.reference_length).sum::<f64>() / self.rows.len().max(1) as f64;
        w.write_record([
            "mean".to_string(),
            String::new(),
            self.mean_model_length.to_string(),
            mean_ref.to_string(),
            self.mean_gap.to_string(),
            self.mean_prop0.to_string(),
            self.mean_apo_all.to_string(),
            self.mean_apo_non0.to_string(),
        ])
        .map_err(crate::stats::csv_err)?;
        w.flush()?;
        Ok(())
    }
}

/// Greedy decoding on prepared instances against known reference lengths.
pub fn evaluate_prepared(
    params: &PolicyParams,
    set: &[Prepared],
    reference_lengths: &[f64],
    start: StartRule,
) -> Result<Evaluation> {
    if set.len() != reference_lengths.len() {
        return Err(Error::arg("one reference length per instance required"));
    }
    let rows = set
        .par_iter()
        .zip(reference_lengths)
        .enumerate()
        .map(|(index, (p, &reference_length))| {
            let r = rollout(&p.instance, p.table(), params, DecodeMode::Greedy, 0, start)?;
            Ok(EvalRow {
                index,
                n: p.instance.len(),
                model_length: r.tour.length,
                reference_length,
                gap: gap_percent(r.tour.length, reference_length),
                profile: purity_profile(&p.instance, &r.tour)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation::from_rows(rows))
}

pub fn evaluate(params: &PolicyParams, instances: &[Instance], reference: Reference, seed: u64) -> Result<Evaluation> {
    if reference == Reference::HeldKarp {
        if let Some(big) = instances.iter().find(|i| i.len() > MAX_EXACT) {
            return Err(Error::Capacity(format!(
                "held_karp reference needs at most {MAX_EXACT} vertices, got {}",
                big.len()
            )));
        }
    }
    let set: Vec<Prepared> = instances.par_iter().map(|i| Prepared::new(i.clone())).collect();
    let refs: Vec<f64> = set
        .par_iter()
        .enumerate()
        .map(|(i, p)| match reference {
            Reference::HeldKarp => held_karp(&p.instance).map(|t| t.length),
            Reference::LocalSearch { restarts } => {
                local_search_solve(&p.instance, restarts, seed::derive(seed, &[seed::tag("reference"), i as u64]))
                    .map(|t| t.length)
            }
        })
        .collect::<Result<_>>()?;
    evaluate_prepared(params, &set, &refs, StartRule::Zero)
}

/// Euclidean norms of labelled parameter vectors.
pub fn param_norm_report(params: &[(String, PolicyParams)]) -> Vec<(String, f64)> {
    params.iter().map(|(l, p)| (l.clone(), p.norm())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_arithmetic() {
        assert!((gap_percent(1.1, 1.0) - 10.0).abs() < 1e-12);
        assert_eq!(gap_percent(2.5, 2.5), 0.0);
    }

    #[test]
    fn norms() {
        let r = param_norm_report(&[
            ("zero".into(), PolicyParams::zeros()),
            ("345".into(), PolicyParams::new(vec![3.0, 4.0, 0.0, 0.0]).unwrap()),
        ]);
        assert_eq!(r[0].1, 0.0);
        assert_eq!(r[1].1, 5.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { discount: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { batch: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: f64::NAN, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn held_karp_reference_capacity() {
        let big = generate(&GenSpec::new(Distribution::Uniform, 20, 1)).unwrap();
        let err = evaluate(&PolicyParams::zeros(), &[big], Reference::HeldKarp, 0);
        assert!(matches!(err, Err(Error::Capacity(_))));
    }

    #[test]
    fn mismatched_batches() {
        assert!(reinforce_gradient(&[], &[1.0]).is_err());
    }
}

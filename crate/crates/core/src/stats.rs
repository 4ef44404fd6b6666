//! Purity-order proportions of near-optimal tours and the negative
//! exponential fit `y(k) ≈ α·exp(-β·k)`.
//!
//! Edges are pooled across all instances of a `(scale, distribution)` cell
//! before proportions are taken, and one curve is fitted per cell. The fit is
//! ordinary least squares of `ln y(k)` on `k` over bins with `y(k) > 0`;
//! empty bins are dropped rather than smoothed. The reported fitting error is
//! the mean squared residual `(α·exp(-β·k) - y(k))²` in linear space over the
//! same bins.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{suite_specs, Distribution, GenSpec};
use crate::purity::{purity_profile, PurityProfile};
use crate::seed;
use crate::solvers::local_search_solve;

pub const SCHEMA_LINE: &str = "# schema: pula/purity-law v1";
pub const PLOT_SCHEMA_LINE: &str = "# schema: pula/purity-law-curve v1";

/// Pooled counts of tour-edge purity orders.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderHistogramPool {
    pub counts: Vec<u64>,
    pub instances: usize,
    pub edges: u64,
}

impl OrderHistogramPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one tour's histogram.
    pub fn add(&mut self, histogram: &[u64]) {
        if histogram.len() > self.counts.len() {
            self.counts.resize(histogram.len(), 0);
        }
        for (c, &h) in self.counts.iter_mut().zip(histogram) {
            *c += h;
        }
        self.edges += histogram.iter().sum::<u64>();
        self.instances += 1;
    }

    pub fn add_profile(&mut self, profile: &PurityProfile) {
        self.add(&profile.histogram);
    }

    pub fn merge(&mut self, other: &OrderHistogramPool) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (c, &h) in self.counts.iter_mut().zip(&other.counts) {
            *c += h;
        }
        self.edges += other.edges;
        self.instances += other.instances;
    }

    /// Trailing empty bins trimmed, so equal pools compare equal regardless
    /// of the instance sizes that fed them.
    pub fn normalized(mut self) -> Self {
        while self.counts.last() == Some(&0) {
            self.counts.pop();
        }
        self
    }

    pub fn profile(&self) -> PurityProfile {
        PurityProfile::from_histogram(self.counts.clone())
    }
}

/// `y(k) = counts[k] / edges` for every bin of the pool.
pub fn proportions(pool: &OrderHistogramPool) -> Result<BTreeMap<usize, f64>> {
    if pool.edges == 0 {
        return Err(Error::State("empty histogram pool".into()));
    }
    Ok(pool
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (k, c as f64 / pool.edges as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha: f64,
    pub beta: f64,
    pub fit_error: f64,
    pub k_used: usize,
}

impl FitResult {
    pub fn predict(&self, k: f64) -> f64 {
        self.alpha * (-self.beta * k).exp()
    }
}

pub fn fit_purity_law(y: &BTreeMap<usize, f64>) -> Result<FitResult> {
    let bins: Vec<(f64, f64)> = y
        .iter()
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&k, &v)| (k as f64, v))
        .collect();
    if bins.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least two positive bins, got {}",
            bins.len()
        )));
    }
    let m = bins.len() as f64;
    let mean_k = bins.iter().map(|b| b.0).sum::<f64>() / m;
    let mean_z = bins.iter().map(|b| b.1.ln()).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(k, v) in &bins {
        sxy += (k - mean_k) * (v.ln() - mean_z);
        sxx += (k - mean_k) * (k - mean_k);
    }
    let slope = sxy / sxx;
    let intercept = mean_z - slope * mean_k;
    let alpha = intercept.exp();
    let beta = -slope;
    let fit_error = bins
        .iter()
        .map(|&(k, v)| {
            let r = alpha * (-beta * k).exp() - v;
            r * r
        })
        .sum::<f64>()
        / m;
    Ok(FitResult {
        alpha,
        beta,
        fit_error,
        k_used: bins.len(),
    })
}

/// Least squares in linear space, `min Σ (α e^{-βk} - y(k))²` over the same
/// positive bins, by Levenberg-Marquardt started from the log-space fit.
/// Not used by the study report; exposed for comparison.
pub fn fit_purity_law_linear(y: &BTreeMap<usize, f64>) -> Result<FitResult> {
    let start = fit_purity_law(y)?;
    let bins: Vec<(f64, f64)> = y
        .iter()
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&k, &v)| (k as f64, v))
        .collect();
    let sse = |a: f64, b: f64| bins.iter().map(|&(k, v)| (a * (-b * k).exp() - v).powi(2)).sum::<f64>();
    let (mut a, mut b) = (start.alpha, start.beta);
    let mut cost = sse(a, b);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        // normal equations of the 2-parameter Gauss-Newton step
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(k, v) in &bins {
            let e = (-b * k).exp();
            let r = a * e - v;
            let (da, db) = (e, -a * k * e);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let (haa, hbb) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
        let det = haa * hbb - jab * jab;
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = -(hbb * ga - jab * gb) / det;
        let step_b = -(haa * gb - jab * ga) / det;
        let trial = sse(a + step_a, b + step_b);
        if trial < cost {
            let done = (cost - trial) <= 1e-15 * cost.max(1e-300);
            a += step_a;
            b += step_b;
            cost = trial;
            lambda = (lambda * 0.3).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    Ok(FitResult {
        alpha: a,
        beta: b,
        fit_error: cost / bins.len() as f64,
        k_used: bins.len(),
    })
}

/// Fits each tour on its own, for variance studies.
pub fn per_instance_fits(profiles: &[PurityProfile]) -> Vec<Option<FitResult>> {
    profiles
        .iter()
        .map(|p| {
            let mut pool = OrderHistogramPool::new();
            pool.add_profile(p);
            proportions(&pool).ok().and_then(|y| fit_purity_law(&y).ok())
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scales: Vec<usize>,
    pub distributions: Vec<Distribution>,
    pub count: usize,
    pub base_seed: u64,
    pub restarts: usize,
    #[serde(default)]
    pub paper_protocol: bool,
}

/// One `(scale, distribution)` cell of a study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub scale: usize,
    pub distribution: Distribution,
    pub pool: OrderHistogramPool,
    pub profiles: Vec<PurityProfile>,
    pub tour_lengths: Vec<f64>,
}

impl CellResult {
    pub fn fit(&self) -> Result<FitResult> {
        fit_purity_law(&proportions(&self.pool)?)
    }
}

/// Generate, solve with local search, profile every tour and pool per cell.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<CellResult>> {
    let specs = suite_specs(
        &cfg.scales,
        &cfg.distributions,
        cfg.count,
        cfg.base_seed,
        cfg.paper_protocol,
    )?;
    let solved: Vec<(GenSpec, PurityProfile, f64)> = specs
        .par_iter()
        .map(|spec| {
            let inst = crate::generate::generate(spec)?;
            let tour = local_search_solve(&inst, cfg.restarts, seed::derive(spec.seed, &[seed::tag("solve")]))?;
            let profile = purity_profile(&inst, &tour)?;
            Ok((*spec, profile, tour.length))
        })
        .collect::<Result<_>>()?;

    let mut cells: Vec<CellResult> = Vec::new();
    for (spec, profile, len) in solved {
        let fresh = !matches!(cells.last(), Some(c) if c.scale == spec.n && c.distribution == spec.distribution);
        if fresh {
            cells.push(CellResult {
                scale: spec.n,
                distribution: spec.distribution,
                pool: OrderHistogramPool::new(),
                profiles: Vec::new(),
                tour_lengths: Vec::new(),
            });
        }
        let cell = cells.last_mut().unwrap();
        cell.pool.add_profile(&profile);
        cell.profiles.push(profile);
        cell.tour_lengths.push(len);
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scale: usize,
    pub distribution: String,
    pub alpha: f64,
    pub beta: f64,
    pub fit_error: f64,
    pub prop0: f64,
    pub apo_all: f64,
    pub apo_non0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub fit_error: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityLawReport {
    pub rows: Vec<ReportRow>,
    pub mean: FitSummary,
    /// Population variance across cells.
    pub variance: FitSummary,
}

pub fn purity_law_report(cells: &[CellResult]) -> Result<PurityLawReport> {
    if cells.is_empty() {
        return Err(Error::arg("report needs at least one cell"));
    }
    let rows: Vec<ReportRow> = cells
        .iter()
        .map(|c| {
            let fit = c.fit()?;
            let prof = c.pool.profile();
            Ok(ReportRow {
                scale: c.scale,
                distribution: c.distribution.to_string(),
                alpha: fit.alpha,
                beta: fit.beta,
                fit_error: fit.fit_error,
                prop0: prof.prop0,
                apo_all: prof.apo_all,
                apo_non0: prof.apo_non0,
            })
        })
        .collect::<Result<_>>()?;
    let m = rows.len() as f64;
    let mean = FitSummary {
        fit_error: rows.iter().map(|r| r.fit_error).sum::<f64>() / m,
        alpha: rows.iter().map(|r| r.alpha).sum::<f64>() / m,
        beta: rows.iter().map(|r| r.beta).sum::<f64>() / m,
    };
    let var = |f: fn(&ReportRow) -> f64, mu: f64| rows.iter().map(|r| (f(r) - mu).powi(2)).sum::<f64>() / m;
    let variance = FitSummary {
        fit_error: var(|r| r.fit_error, mean.fit_error),
        alpha: var(|r| r.alpha, mean.alpha),
        beta: var(|r| r.beta, mean.beta),
    };
    Ok(PurityLawReport { rows, mean, variance })
}

impl PurityLawReport {
    pub const CSV_HEADER: [&'static str; 8] = [
        "scale", "distribution", "alpha", "beta", "fit_error", "prop0", "apo_all", "apo_non0",
    ];

    /// Per-cell rows followed by `mean` and `variance` summary rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{SCHEMA_LINE}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.scale.to_string(),
                r.distribution.clone(),
                r.alpha.to_string(),
                r.beta.to_string(),
                r.fit_error.to_string(),
                r.prop0.to_string(),
                r.apo_all.to_string(),
                r.apo_non0.to_string(),
            ])
            .map_err(csv_err)?;
        }
        for (label, s) in [("mean", self.mean), ("variance", self.variance)] {
            w.write_record([
                "all".to_string(),
                label.to_string(),
                s.alpha.to_string(),
                s.beta.to_string(),
                s.fit_error.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Three-line summary: header, mean, variance of (fit_error, alpha, beta).
    pub fn write_table1<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{:<10}{:>14}{:>12}{:>12}", "", "fit_error", "alpha", "beta")?;
        for (label, s) in [("mean", self.mean), ("variance", self.variance)] {
            writeln!(out, "{label:<10}{:>14.3e}{:>12.4e}{:>12.4e}", s.fit_error, s.alpha, s.beta)?;
        }
        Ok(())
    }
}

/// Tidy curve data `(k, log_y, scale, dist)` for external plotting.
pub fn write_curve_csv<W: Write>(cells: &[CellResult], mut out: W) -> Result<()> {
    writeln!(out, "{PLOT_SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "log_y", "scale", "dist"]).map_err(csv_err)?;
    for c in cells {
        for (k, y) in proportions(&c.pool)? {
            if y > 0.0 {
                w.write_record([k.to_string(), y.ln().to_string(), c.scale.to_string(), c.distribution.to_string()])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::State(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportions_counting() {
        let mut pool = OrderHistogramPool::new();
        assert!(matches!(proportions(&pool), Err(Error::State(_))));
        pool.add(&[3, 0]);
        pool.add(&[2, 1]);
        let y = proportions(&pool).unwrap();
        assert_eq!(y[&0], 5.0 / 6.0);
        assert_eq!(y[&1], 1.0 / 6.0);
        assert_eq!(pool.edges, 6);
        assert_eq!(pool.instances, 2);

        let mut all0 = OrderHistogramPool::new();
        all0.add(&[4, 0, 0]);
        let y = proportions(&all0).unwrap();
        assert_eq!(y[&0], 1.0);
        assert!(y.iter().skip(1).all(|(_, &v)| v == 0.0));
    }

    #[test]
    fn exact_exponential_recovered() {
        let y: BTreeMap<usize, f64> = (0..6).map(|k| (k, 0.92 * (-2.63 * k as f64).exp())).collect();
        let fit = fit_purity_law(&y).unwrap();
        assert!((fit.alpha - 0.92).abs() / 0.92 < 1e-10);
        assert!((fit.beta - 2.63).abs() / 2.63 < 1e-10);
        assert!(fit.fit_error < 1e-20);
        assert_eq!(fit.k_used, 6);
    }

    #[test]
    fn linear_fit_matches_on_exact_data_and_lowers_linear_error() {
        let y: BTreeMap<usize, f64> = (0..6).map(|k| (k, 0.92 * (-2.63 * k as f64).exp())).collect();
        let fit = fit_purity_law_linear(&y).unwrap();
        assert!((fit.alpha - 0.92).abs() < 1e-9);
        assert!((fit.beta - 2.63).abs() < 1e-8);

        // counts decaying faster than exponential at first, then a flat tail
        let counts = [2262.0, 251.0, 35.0, 10.0, 2.0];
        let total: f64 = counts.iter().sum();
        let y: BTreeMap<usize, f64> = counts.iter().enumerate().map(|(k, c)| (k, c / total)).collect();
        let log = fit_purity_law(&y).unwrap();
        let lin = fit_purity_law_linear(&y).unwrap();
        assert!(lin.fit_error <= log.fit_error);
        assert!((lin.alpha - y[&0]).abs() < 0.01);
    }

    #[test]
    fn zero_bins_are_skipped() {
        let y: BTreeMap<usize, f64> = [(0, 0.9), (1, 0.0), (2, 0.9 * (-4.0f64).exp())].into_iter().collect();
        let fit = fit_purity_law(&y).unwrap();
        assert_eq!(fit.k_used, 2);
        assert!((fit.beta - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fit() {
        let y: BTreeMap<usize, f64> = [(0, 1.0), (1, 0.0)].into_iter().collect();
        assert!(matches!(fit_purity_law(&y), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn report_shapes() {
        let cfg = StudyConfig {
            scales: vec![12],
            distributions: vec![Distribution::Uniform],
            count: 8,
            base_seed: 5,
            restarts: 2,
            paper_protocol: false,
        };
        let cells = run_study(&cfg).unwrap();
        let rep = purity_law_report(&cells).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.variance.alpha, 0.0);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SCHEMA_LINE);
        assert!(lines[1].starts_with("scale,distribution"));
        assert_eq!(lines.len(), 5);

        let cfg = StudyConfig {
            scales: vec![10, 12],
            distributions: Distribution::ALL.to_vec(),
            count: 4,
            ..cfg
        };
        let cells = run_study(&cfg).unwrap();
        assert_eq!(purity_law_report(&cells).unwrap().rows.len(), 8);
        assert!(purity_law_report(&[]).is_err());
    }
}

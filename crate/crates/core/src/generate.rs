//! Seeded instance generators for the uniform, clustered, explosion and
//! implosion families.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Instance, Normalization, Point};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    Clustered,
    Explosion,
    Implosion,
}

impl Distribution {
    pub const ALL: [Distribution; 4] = [
        Distribution::Uniform,
        Distribution::Clustered,
        Distribution::Explosion,
        Distribution::Implosion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::Clustered => "clustered",
            Distribution::Explosion => "explosion",
            Distribution::Implosion => "implosion",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Distribution::Uniform),
            "clustered" | "cluster" => Ok(Distribution::Clustered),
            "explosion" => Ok(Distribution::Explosion),
            "implosion" => Ok(Distribution::Implosion),
            other => Err(Error::arg(format!("unknown distribution '{other}'"))),
        }
    }
}

/// Per-distribution knobs. Fields that do not apply to a distribution are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistParams {
    /// Cluster count; `None` means `max(2, n / 40)`.
    pub clusters: Option<usize>,
    /// Gaussian spread around each cluster center.
    pub sigma: f64,
    /// Radius of the explosion / implosion ball.
    pub radius: f64,
    /// Explosion shell thickness as a fraction of `radius`.
    pub spread: f64,
    /// Implosion contraction factor.
    pub shrink: f64,
}

impl Default for DistParams {
    fn default() -> Self {
        DistParams {
            clusters: None,
            sigma: 0.05,
            radius: 0.3,
            spread: 0.1,
            shrink: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub distribution: Distribution,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub params: DistParams,
}

impl GenSpec {
    pub fn new(distribution: Distribution, n: usize, seed: u64) -> Self {
        GenSpec {
            distribution,
            n,
            seed,
            params: DistParams::default(),
        }
    }
}

/// Parses `dist:scale:seed[:k=v,...]`, e.g. `clustered:100:7:clusters=3,sigma=0.02`.
impl FromStr for GenSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(Error::arg(format!(
                "spec '{s}' must look like dist:scale:seed[:k=v,...]"
            )));
        }
        let distribution = parts[0].parse()?;
        let n = parts[1]
            .parse()
            .map_err(|_| Error::arg(format!("bad scale '{}'", parts[1])))?;
        let seed = parts[2]
            .parse()
            .map_err(|_| Error::arg(format!("bad seed '{}'", parts[2])))?;
        let mut params = DistParams::default();
        if let Some(kvs) = parts.get(3) {
            for kv in kvs.split(',').filter(|kv| !kv.is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::arg(format!("bad parameter '{kv}'")))?;
                let num: f64 = v
                    .parse()
                    .map_err(|_| Error::arg(format!("bad value in '{kv}'")))?;
                match k {
                    "clusters" | "n_c" => params.clusters = Some(num as usize),
                    "sigma" => params.sigma = num,
                    "radius" | "R" => params.radius = num,
                    "spread" => params.spread = num,
                    "shrink" | "lambda" => params.shrink = num,
                    _ => return Err(Error::arg(format!("unknown parameter '{k}'"))),
                }
            }
        }
        Ok(GenSpec {
            distribution,
            n,
            seed,
            params,
        })
    }
}

/// Generator output with the auxiliary geometry used to build it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: Instance,
    /// Explosion / implosion center, mapped into the final normalized frame.
    pub center: Option<Point>,
    /// Ball radius in the final normalized frame.
    pub radius: Option<f64>,
}

pub fn generate(spec: &GenSpec) -> Result<Instance> {
    generate_detailed(spec).map(|g| g.instance)
}

pub fn generate_detailed(spec: &GenSpec) -> Result<Generated> {
    if spec.n < 2 {
        return Err(Error::arg(format!("scale must be at least 2, got {}", spec.n)));
    }
    let p = &spec.params;
    let mut rng = seed::rng(spec.seed);
    let mut pts: Vec<Point> = Vec::with_capacity(spec.n);
    let mut ball = None;
    match spec.distribution {
        Distribution::Uniform => {
            pts.extend((0..spec.n).map(|_| Point::new(rng.random(), rng.random())));
            return Ok(Generated {
                instance: Instance::new(pts)?,
                center: None,
                radius: None,
            });
        }
        Distribution::Clustered => {
            let k = p.clusters.unwrap_or((spec.n / 40).max(2)).max(1);
            let centers: Vec<Point> = (0..k).map(|_| Point::new(rng.random(), rng.random())).collect();
            let noise = Normal::new(0.0, p.sigma).map_err(|e| Error::arg(e.to_string()))?;
            for _ in 0..spec.n {
                let c = centers[rng.random_range(0..k)];
                pts.push(Point::new(c.x + noise.sample(&mut rng), c.y + noise.sample(&mut rng)));
            }
        }
        Distribution::Explosion | Distribution::Implosion => {
            pts.extend((0..spec.n).map(|_| Point::new(rng.random(), rng.random())));
            let c = Point::new(rng.random(), rng.random());
            let r = p.radius;
            for q in pts.iter_mut() {
                let (dx, dy) = (q.x - c.x, q.y - c.y);
                let len = dx.hypot(dy);
                if len >= r {
                    continue;
                }
                *q = if spec.distribution == Distribution::Explosion {
                    let (ux, uy) = if len > 0.0 { (dx / len, dy / len) } else { (1.0, 0.0) };
                    let u: f64 = rng.random();
                    let to = r + p.spread * r * u;
                    Point::new(c.x + to * ux, c.y + to * uy)
                } else {
                    Point::new(c.x + p.shrink * dx, c.y + p.shrink * dy)
                };
            }
            ball = Some((c, r));
        }
    }
    let norm = Normalization::fit(&pts);
    let pts: Vec<Point> = pts.into_iter().map(|q| norm.apply(q)).collect();
    let (center, radius) = match ball {
        Some((c, r)) if norm.extent > 0.0 => (Some(norm.apply_unclamped(c)), Some(r / norm.extent)),
        _ => (None, None),
    };
    Ok(Generated {
        instance: Instance::new(pts)?,
        center,
        radius,
    })
}

impl Normalization {
    pub(crate) fn apply_unclamped(&self, p: Point) -> Point {
        Point::new((p.x - self.min_x) / self.extent, (p.y - self.min_y) / self.extent)
    }
}

/// All instances of one `(scale, distribution)` cell.
#[derive(Debug, Clone)]
pub struct SuiteCell {
    pub scale: usize,
    pub distribution: Distribution,
    pub specs: Vec<GenSpec>,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub base_seed: u64,
    pub entries: Vec<GenSpec>,
}

/// Seed of the `index`-th instance in a suite cell.
pub fn suite_seed(base_seed: u64, scale: usize, dist: Distribution, index: usize) -> u64 {
    seed::derive(base_seed, &[scale as u64, seed::tag(dist.name()), index as u64])
}

/// Instance count per cell under the published protocol: 256 below scale 500, 128 from 500 up.
pub fn protocol_count(scale: usize) -> usize {
    if scale < 500 {
        256
    } else {
        128
    }
}

/// Builds the specs of a suite. With `paper_protocol` the per-cell count
/// follows [`protocol_count`] instead of `count_per_type`.
pub fn suite_specs(
    scales: &[usize],
    distributions: &[Distribution],
    count_per_type: usize,
    base_seed: u64,
    paper_protocol: bool,
) -> Result<Vec<GenSpec>> {
    if scales.is_empty() || distributions.is_empty() {
        return Err(Error::arg("suite needs at least one scale and one distribution"));
    }
    let mut out = Vec::new();
    for &scale in scales {
        for &dist in distributions {
            let count = if paper_protocol { protocol_count(scale) } else { count_per_type };
            out.extend((0..count).map(|i| GenSpec::new(dist, scale, suite_seed(base_seed, scale, dist, i))));
        }
    }
    Ok(out)
}

pub fn generate_suite(
    scales: &[usize],
    distributions: &[Distribution],
    count_per_type: usize,
    base_seed: u64,
    paper_protocol: bool,
) -> Result<Vec<SuiteCell>> {
    use rayon::prelude::*;
    let specs = suite_specs(scales, distributions, count_per_type, base_seed, paper_protocol)?;
    let instances: Vec<Instance> = specs.par_iter().map(generate).collect::<Result<_>>()?;
    let mut cells: Vec<SuiteCell> = Vec::new();
    for (spec, inst) in specs.into_iter().zip(instances) {
        match cells.last_mut() {
            Some(cell) if cell.scale == spec.n && cell.distribution == spec.distribution => {
                cell.specs.push(spec);
                cell.instances.push(inst);
            }
            _ => cells.push(SuiteCell {
                scale: spec.n,
                distribution: spec.distribution,
                specs: vec![spec],
                instances: vec![inst],
            }),
        }
    }
    Ok(cells)
}

impl SuiteManifest {
    pub fn from_cells(base_seed: u64, cells: &[SuiteCell]) -> Self {
        SuiteManifest {
            base_seed,
            entries: cells.iter().flat_map(|c| c.specs.iter().copied()).collect(),
        }
    }

    pub fn instances(&self) -> Result<Vec<Instance>> {
        use rayon::prelude::*;
        self.entries.par_iter().map(generate).collect()
    }
}

//! `pula`: generate suites, solve, run purity-law studies, verify topology,
//! train and evaluate the construction policy.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use pula_core::generate::{generate, generate_suite, Distribution, GenSpec, SuiteManifest};
use pula_core::geometry::Instance;
use pula_core::policy::{rollout, DecodeMode, PolicyParams, StartRule};
use pula_core::purity::{purity_profile, PurityIndex};
use pula_core::solvers::{held_karp, local_search_solve, nearest_neighbor, Tour};
use pula_core::stats::{fit_purity_law, fit_purity_law_linear, proportions, purity_law_report, run_study, write_curve_csv, OrderHistogramPool, StudyConfig};
use pula_core::topology::fuzz_topology;
use pula_core::trainer::{evaluate, gap_percent, train, EvalRow, Evaluation, Mode, Reference, TrainConfig};
use pula_core::tsplib::{parse_optima, parse_tsplib, TsplibInstance};
use pula_core::{seed, Error, Result};

#[derive(Parser)]
#[command(name = "pula", version, about = "Purity-order analysis and policy training for Euclidean TSP")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PULA_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance-suite manifest.
    Gen(GenArgs),
    /// Solve one instance and print the tour as JSON.
    Solve(SolveArgs),
    /// Purity-law study: generate, solve, profile, fit; CSV out.
    Stats(StudyArgs),
    /// Mean and variance of the per-cell fits.
    Table1(StudyArgs),
    /// Fuzz the 0-order pure edge properties and print counts as JSON.
    VerifyTopology(TopologyArgs),
    /// Train the construction policy.
    Train(TrainArgs),
    /// Greedy evaluation of saved parameters; CSV out.
    Eval(EvalArgs),
    /// Fit the exponential law to a saved order histogram.
    Fit(FitArgs),
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long, value_delimiter = ',', default_value = "20,50,100")]
    scales: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "uniform,clustered,explosion,implosion")]
    dists: Vec<Distribution>,
    /// Instances per (scale, distribution) cell.
    #[arg(long, default_value_t = 128)]
    count: usize,
    /// Use 256 instances per cell below scale 500 and 128 above, ignoring --count.
    #[arg(long)]
    protocol: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Manifest path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the generated instances as a JSON array.
    #[arg(long)]
    instances_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverKind {
    HeldKarp,
    LocalSearch,
    NearestNeighbor,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file.
    #[arg(long, conflicts_with_all = ["spec", "tsplib"])]
    instance: Option<PathBuf>,
    /// Generator spec `dist:scale:seed[:k=v,...]`.
    #[arg(long, conflicts_with = "tsplib")]
    spec: Option<String>,
    /// TSPLIB EUC_2D file.
    #[arg(long)]
    tsplib: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "local-search")]
    solver: SolverKind,
    /// Shorthand for `--solver held-karp`.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start vertex for nearest neighbour.
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write tidy (k, log_y, scale, dist) curve data.
    #[arg(long)]
    curve_out: Option<PathBuf>,
}

#[derive(Args)]
struct TopologyArgs {
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 2)]
    min_n: usize,
    #[arg(long, default_value_t = 50)]
    max_n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Vanilla,
    Pupo,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON or TOML config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<ModeArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Final parameters as JSON.
    #[arg(long)]
    params_out: Option<PathBuf>,
    /// Per-epoch CSV.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Full run summary as JSON (stdout when omitted).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefArg {
    HeldKarp,
    LocalSearch,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    params: PathBuf,
    /// Suite manifest written by `gen`.
    #[arg(long, conflicts_with = "tsplib", required_unless_present = "tsplib")]
    suite: Option<PathBuf>,
    /// TSPLIB EUC_2D files.
    #[arg(long, num_args = 1..)]
    tsplib: Vec<PathBuf>,
    /// `name : length` optima for TSPLIB inputs.
    #[arg(long)]
    optima: Option<PathBuf>,
    #[arg(long = "ref", default_value = "local_search", value_parser = parse_ref)]
    reference: RefArg,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_ref(s: &str) -> std::result::Result<RefArg, String> {
    match s.replace('-', "_").as_str() {
        "held_karp" | "exact" => Ok(RefArg::HeldKarp),
        "local_search" => Ok(RefArg::LocalSearch),
        _ => Err(format!("unknown reference `{s}` (held_karp, local_search)")),
    }
}

#[derive(Args)]
struct FitArgs {
    /// JSON: an array of counts indexed by order, or a pooled histogram object.
    #[arg(long)]
    histogram: PathBuf,
    /// `log`: least squares on ln y; `linear`: least squares on y.
    #[arg(long, value_enum, default_value = "log")]
    method: FitMethod,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitMethod {
    Log,
    Linear,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_tsplib(path: &Path, optima: Option<&std::collections::BTreeMap<String, u64>>) -> Result<TsplibInstance> {
    let mut t = parse_tsplib(&read(path)?)?;
    if let Some(m) = optima {
        t.optimum = m.get(&t.name).copied();
    }
    Ok(t)
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let s = &a.suite;
    let cells = generate_suite(&s.scales.clone(), &s.dists.clone(), s.count, s.seed, s.protocol)?;
    write_json(a.out.as_deref(), &SuiteManifest::from_cells(s.seed, &cells))?;
    if let Some(p) = &a.instances_out {
        let docs: Vec<_> = cells
            .iter()
            .flat_map(|c| c.instances.iter().map(pula_core::geometry::InstanceJson::from))
            .collect();
        write_json(Some(p), &docs)?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct SolveOutput {
    #[serde(flatten)]
    tour: Tour,
    #[serde(skip_serializing_if = "Option::is_none")]
    rounded_length: Option<u64>,
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let mut tsp = None;
    let inst = match (&a.instance, &a.spec, &a.tsplib) {
        (Some(p), _, _) => Instance::from_json(&read(p)?)?,
        (_, Some(s), _) => generate(&s.parse::<GenSpec>()?)?,
        (_, _, Some(p)) => {
            let t = load_tsplib(p, None)?;
            let inst = t.instance.clone();
            tsp = Some(t);
            inst
        }
        _ => return Err(Error::Argument("one of --instance, --spec or --tsplib is required".into())),
    };
    let solver = if a.exact { SolverKind::HeldKarp } else { a.solver };
    let tour = match solver {
        SolverKind::HeldKarp => held_karp(&inst)?,
        SolverKind::LocalSearch => local_search_solve(&inst, a.restarts, a.seed)?,
        SolverKind::NearestNeighbor => nearest_neighbor(&inst, a.start)?,
    };
    let rounded_length = tsp.map(|t| t.rounded_length(&tour.order)).transpose()?;
    write_json(a.out.as_deref(), &SolveOutput { tour, rounded_length })
}

fn study(a: &StudyArgs) -> Result<Vec<pula_core::stats::CellResult>> {
    let s = &a.suite;
    run_study(&StudyConfig {
        scales: s.scales.clone(),
        distributions: s.dists.clone(),
        count: s.count,
        base_seed: s.seed,
        restarts: a.restarts,
        paper_protocol: s.protocol,
    })
}

fn cmd_stats(a: &StudyArgs, table1: bool) -> Result<()> {
    let cells = study(a)?;
    let report = purity_law_report(&cells)?;
    let mut out = output(a.out.as_deref())?;
    if table1 {
        report.write_table1(&mut out)?;
    } else {
        report.write_csv(&mut out)?;
    }
    out.flush()?;
    if let Some(p) = &a.curve_out {
        write_curve_csv(&cells, BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn cmd_topology(a: &TopologyArgs) -> Result<()> {
    if a.min_n < 2 || a.min_n > a.max_n {
        return Err(Error::Argument("need 2 <= min-n <= max-n".into()));
    }
    let tally = fuzz_topology(a.count, a.min_n, a.max_n, a.seed);
    #[derive(serde::Serialize)]
    struct Out {
        passed: bool,
        #[serde(flatten)]
        tally: pula_core::topology::TopologyTally,
    }
    write_json(None, &Out { passed: tally.passed(), tally })
}

fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = read(path)?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    if is_toml {
        toml::from_str(&text).map_err(|e| {
            let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].lines().count().max(1));
            Error::Parse { line, message: e.message().to_string() }
        })
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(m) = a.mode {
        cfg.mode = match m {
            ModeArg::Vanilla => Mode::Vanilla,
            ModeArg::Pupo => Mode::Pupo,
        };
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$( if let Some(v) = a.$flag { cfg.$field = v; } )*};
    }
    set!(epochs => epochs, steps => steps_per_epoch, batch => batch, scale => scale,
         discount => discount, lr => learning_rate, eval_size => eval_size, seed => seed);

    let (params, report) = train(&cfg)?;
    if let Some(p) = &a.params_out {
        write_json(Some(p), &params)?;
    }
    if let Some(p) = &a.report {
        report.write_csv(BufWriter::new(File::create(p)?))?;
    }
    write_json(a.summary.as_deref(), &report)
}

fn load_params(path: &Path) -> Result<PolicyParams> {
    let text = read(path)?;
    let p: PolicyParams = serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
    p.validate()?;
    Ok(p)
}

fn eval_tsplib(params: &PolicyParams, a: &EvalArgs) -> Result<Evaluation> {
    let optima = a.optima.as_deref().map(|p| read(p).and_then(|t| parse_optima(&t))).transpose()?;
    let rows = a
        .tsplib
        .iter()
        .enumerate()
        .map(|(index, path)| {
            let t = load_tsplib(path, optima.as_ref())?;
            let index_tbl = PurityIndex::build(&t.instance);
            let r = rollout(&t.instance, &index_tbl.table, params, DecodeMode::Greedy, 0, StartRule::Zero)?;
            let model = t.rounded_length(&r.tour.order)? as f64;
            let reference = match (t.optimum, a.reference) {
                (Some(opt), _) => opt as f64,
                (None, RefArg::HeldKarp) => t.rounded_length(&held_karp(&t.instance)?.order)? as f64,
                (None, RefArg::LocalSearch) => {
                    let s = seed::derive(a.seed, &[seed::tag("reference"), index as u64]);
                    t.rounded_length(&local_search_solve(&t.instance, a.restarts, s)?.order)? as f64
                }
            };
            Ok(EvalRow {
                index,
                n: t.n,
                model_length: model,
                reference_length: reference,
                gap: gap_percent(model, reference),
                profile: purity_profile(&t.instance, &r.tour)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation::from_rows(rows))
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let params = load_params(&a.params)?;
    let eval = match &a.suite {
        Some(p) => {
            let text = read(p)?;
            let manifest: SuiteManifest =
                serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
            let reference = match a.reference {
                RefArg::HeldKarp => Reference::HeldKarp,
                RefArg::LocalSearch => Reference::LocalSearch { restarts: a.restarts },
            };
            evaluate(&params, &manifest.instances()?, reference, a.seed)?
        }
        None => eval_tsplib(&params, a)?,
    };
    let mut out = output(a.out.as_deref())?;
    eval.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HistogramDoc {
    Counts(Vec<u64>),
    Pool(OrderHistogramPool),
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let text = read(&a.histogram)?;
    let doc: HistogramDoc =
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
    let pool = match doc {
        HistogramDoc::Counts(c) => {
            let mut p = OrderHistogramPool::new();
            p.add(&c);
            p
        }
        HistogramDoc::Pool(p) => p,
    };
    let y = proportions(&pool)?;
    let fit = match a.method {
        FitMethod::Log => fit_purity_law(&y)?,
        FitMethod::Linear => fit_purity_law_linear(&y)?,
    };
    write_json(None, &fit)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Io(_) => 2,
        Error::Parse { .. } | Error::Json(_) => 3,
        Error::Capacity(_) => 4,
        _ => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(5);
        }
    }
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Stats(a) => cmd_stats(a, false),
        Command::Table1(a) => cmd_stats(a, true),
        Command::VerifyTopology(a) => cmd_topology(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Fit(a) => cmd_fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

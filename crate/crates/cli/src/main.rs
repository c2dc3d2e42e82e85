//! Command-line front end for the graphon large-deviation toolkit.
//!
//! Every subcommand reads JSON inputs, writes its outputs atomically, embeds
//! a run manifest (JSON outputs) or writes one next to the output (CSV), and
//! prints a one-line summary. Exit status: 0 success, 2 invalid input,
//! 3 numerical failure.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use graphon_ldp::cut::{d_cut, delta_cut, CutConfig, CutMode, CutWitness, PermutationSearch};
use graphon_ldp::discretization::{DensityMeasure, NestedPartitionScheme, SchemeConfig};
use graphon_ldp::entropy::{entropy_per_cell, graphon_entropy};
use graphon_ldp::io::{from_json, DensityGraphonFile, EventFile, GraphFile, GraphonFile, MeasureFile, Real};
use graphon_ldp::lp::lp_distance;
use graphon_ldp::rate::{minimize_rate, ConstraintSet, SolveMethod};
use graphon_ldp::sampling::{
    concentration_experiment, conditional_sample, event_log_prob_exact, graphon_at, sample_from_graphon, sample_graph,
    verify_ldp, EventSpec, LdpMethod, MonteCarloConfig,
};
use graphon_ldp::{Graphon, Measure};

use output::{json_with_manifest, sidecar_path, write_atomic, Cell, ConfigHasher, Csv, Manifest};

const THREADS_VAR: &str = "GRAPHON_LDP_THREADS";

#[derive(Parser, Debug)]
#[command(name = "graphon-ldp", version, about = "Rates, distances and samplers for weighted random graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn existing_file(s: &str) -> std::result::Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("no such file: {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistKind {
    Lp,
    Cut,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Search {
    Exact,
    Anneal,
}

#[derive(clap::Args, Debug, Clone, Copy)]
struct CutArgs {
    /// Largest block count for exhaustive rectangle search.
    #[arg(long, default_value_t = 10)]
    n_exact: usize,
    /// Random starts of the rectangle local search.
    #[arg(long, default_value_t = 32)]
    starts: usize,
    /// Extra refinement before permutation search.
    #[arg(long, default_value_t = 1)]
    refine: usize,
}

impl CutArgs {
    fn config(&self, seed: u64) -> CutConfig {
        CutConfig { n_exact: self.n_exact, starts: self.starts, seed, refine: self.refine }
    }

    fn hash(&self, h: &mut ConfigHasher) {
        h.param("n_exact", self.n_exact).param("starts", self.starts).param("refine", self.refine);
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a weighted graph from an edge law or a step graphon.
    Sample {
        /// Edge law (measure file); needs --n.
        #[arg(long, value_parser = existing_file, conflicts_with = "graphon", required_unless_present = "graphon")]
        reference: Option<PathBuf>,
        /// Step graphon; one vertex per block unless --n is given.
        #[arg(long, value_parser = existing_file)]
        graphon: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lévy–Prokhorov, labeled cut or unlabeled cut distance.
    Dist {
        #[arg(long, value_enum)]
        kind: DistKind,
        #[arg(long, value_parser = existing_file)]
        a: PathBuf,
        #[arg(long, value_parser = existing_file)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "anneal")]
        search: Search,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        cut: CutArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rate of a step graphon (or graph) relative to an edge law.
    Entropy {
        #[arg(long, value_parser = existing_file)]
        graphon: PathBuf,
        #[arg(long, value_parser = existing_file)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rates of the dyadic projections of a density graphon.
    Project {
        #[arg(long, value_parser = existing_file)]
        graphon: PathBuf,
        /// Reference density file.
        #[arg(long, value_parser = existing_file)]
        reference: PathBuf,
        #[arg(long, value_parser = existing_file)]
        scheme: PathBuf,
        /// Deepest level reported (defaults to the scheme depth).
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare scaled log-probabilities of an event with its rate.
    Verify {
        #[arg(long, value_parser = existing_file)]
        config: PathBuf,
        /// Required for Monte Carlo runs.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a graph conditioned on a mean-functional event.
    Condition {
        #[arg(long, value_parser = existing_file)]
        reference: PathBuf,
        #[arg(long, value_parser = existing_file)]
        event: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distances of conditioned samples from the event's minimizer.
    Concentrate {
        #[arg(long, value_parser = existing_file)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimize the rate under linear mean constraints.
    Minimize {
        #[arg(long, value_parser = existing_file)]
        reference: PathBuf,
        #[arg(long, value_parser = existing_file)]
        constraints: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the bundled invariant checks.
    Selftest,
}

/// Marks failures that should exit with status 3.
#[derive(Debug)]
struct NumericalFailure(String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<NumericalFailure>().is_some() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<graphon_ldp::Error>() {
            use graphon_ldp::Error::*;
            return match e {
                Infeasible(_) | Numerical(_) | ZeroProbability => 3,
                _ => 2,
            };
        }
    }
    2
}

fn read(path: &Path, h: &mut ConfigHasher) -> Result<String> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    h.input(text.as_bytes());
    Ok(text)
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, h: &mut ConfigHasher) -> Result<T> {
    let text = read(path, h)?;
    from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A graphon file, or a graph file embedded as its step graphon.
fn read_graphon(path: &Path, h: &mut ConfigHasher) -> Result<Graphon> {
    let text = read(path, h)?;
    if let Ok(g) = from_json::<GraphonFile>(&text) {
        return g.build().with_context(|| format!("building the graphon in {}", path.display()));
    }
    let g: GraphFile = from_json(&text).with_context(|| format!("{} is neither a graphon nor a graph file", path.display()))?;
    Ok(g.build().with_context(|| format!("building the graph in {}", path.display()))?.embed())
}

fn read_measure(path: &Path, h: &mut ConfigHasher) -> Result<Measure> {
    let m: MeasureFile = parse(path, h)?;
    m.build().with_context(|| format!("building the measure in {}", path.display()))
}

fn emit_json<T: Serialize>(out: &Path, body: &T, manifest: &Manifest) -> Result<()> {
    write_atomic(out, json_with_manifest(body, manifest)?.as_bytes())
}

fn emit_csv<T: Serialize>(out: &Path, csv: Csv, extra: &T, manifest: &Manifest) -> Result<()> {
    write_atomic(out, csv.into_string().as_bytes())?;
    write_atomic(&sidecar_path(out), json_with_manifest(extra, manifest)?.as_bytes())
}

#[derive(Serialize)]
struct Nothing {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.trim().parse().map_err(|_| anyhow!("{THREADS_VAR} must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("{THREADS_VAR} must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(command: Command) -> Result<String> {
    match command {
        Command::Sample { reference, graphon, n, seed, out } => sample(reference, graphon, n, seed, &out),
        Command::Dist { kind, a, b, search, seed, cut, out } => dist(kind, &a, &b, search, seed, cut, &out),
        Command::Entropy { graphon, reference, out } => entropy(&graphon, &reference, &out),
        Command::Project { graphon, reference, scheme, levels, out } => project(&graphon, &reference, &scheme, levels, &out),
        Command::Verify { config, seed, out } => verify(&config, seed, &out),
        Command::Condition { reference, event, n, seed, out } => condition(&reference, &event, n, seed, &out),
        Command::Concentrate { config, seed, out } => concentrate(&config, seed, &out),
        Command::Minimize { reference, constraints, out } => minimize(&reference, &constraints, &out),
        Command::Selftest => selftest(),
    }
}

fn sample(reference: Option<PathBuf>, graphon: Option<PathBuf>, n: Option<usize>, seed: u64, out: &Path) -> Result<String> {
    let mut h = ConfigHasher::new("sample");
    h.param("n", format!("{n:?}"));
    let g = match (reference, graphon) {
        (Some(r), None) => {
            let nu = read_measure(&r, &mut h)?;
            let n = n.ok_or_else(|| anyhow!("--n is required when sampling from an edge law"))?;
            sample_graph(n, &nu, seed)?
        }
        (None, Some(w)) => {
            let w = read_graphon(&w, &mut h)?;
            let w = match n {
                Some(n) => graphon_at(&w, n)?,
                None => w,
            };
            sample_from_graphon(&w, seed)?
        }
        _ => bail!("give exactly one of --reference and --graphon"),
    };
    let manifest = h.finish("sample", Some(seed));
    emit_json(out, &GraphFile::of(&g), &manifest)?;
    Ok(format!("sample: {} vertices -> {}", g.n(), out.display()))
}

#[derive(Serialize)]
struct DistReport {
    kind: &'static str,
    value: f64,
    metric: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<CutMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    blocks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<CutWitness>,
}

fn dist(kind: DistKind, a: &Path, b: &Path, search: Search, seed: u64, cut: CutArgs, out: &Path) -> Result<String> {
    let mut h = ConfigHasher::new("dist");
    h.param("kind", format!("{kind:?}")).param("search", format!("{search:?}")).param("seed", seed);
    cut.hash(&mut h);
    let report = match kind {
        DistKind::Lp => {
            let (x, y) = (read_measure(a, &mut h)?, read_measure(b, &mut h)?);
            let value = lp_distance(&x, &y)?;
            DistReport { kind: "lp", value, metric: x.space().metric().name(), mode: None, blocks: None, witness: None }
        }
        DistKind::Cut | DistKind::Delta => {
            let (u, w) = (read_graphon(a, &mut h)?, read_graphon(b, &mut h)?);
            let config = cut.config(seed);
            let (name, r) = if kind == DistKind::Cut {
                ("cut", d_cut(&u, &w, &config)?)
            } else {
                let s = match search {
                    Search::Exact => PermutationSearch::Exact,
                    Search::Anneal => PermutationSearch::Anneal,
                };
                ("delta", delta_cut(&u, &w, s, &config)?)
            };
            DistReport {
                kind: name,
                value: r.value,
                metric: u.space().metric().name(),
                mode: Some(r.mode),
                blocks: Some(r.blocks),
                witness: Some(r.witness),
            }
        }
    };
    let manifest = h.finish("dist", Some(seed));
    emit_json(out, &report, &manifest)?;
    Ok(format!("dist: {} = {} -> {}", report.kind, graphon_ldp::io::fmt_f64(report.value), out.display()))
}

#[derive(Serialize)]
struct EntropyReport {
    entropy: Real,
    per_cell: Vec<Vec<Real>>,
}

fn entropy(graphon: &Path, reference: &Path, out: &Path) -> Result<String> {
    let mut h = ConfigHasher::new("entropy");
    let w = read_graphon(graphon, &mut h)?;
    let nu = read_measure(reference, &mut h)?;
    let value = graphon_entropy(&w, &nu)?;
    let cells = entropy_per_cell(&w, &nu)?;
    let per_cell = cells.rows().into_iter().map(|r| r.iter().map(|&x| Real(x)).collect()).collect();
    let manifest = h.finish("entropy", None);
    emit_json(out, &EntropyReport { entropy: Real(value), per_cell }, &manifest)?;
    Ok(format!("entropy: {} -> {}", graphon_ldp::io::fmt_f64(value), out.display()))
}

fn project(graphon: &Path, reference: &Path, scheme: &Path, levels: Option<usize>, out: &Path) -> Result<String> {
    let mut h = ConfigHasher::new("project");
    h.param("levels", format!("{levels:?}"));
    let w = parse::<DensityGraphonFile>(graphon, &mut h)?.build()?;
    let nu = parse::<DensityMeasure>(reference, &mut h)?.validated()?;
    let cfg: SchemeConfig = parse(scheme, &mut h)?;
    let scheme = NestedPartitionScheme::<f64>::from_config(&cfg)?;
    let m_max = levels.unwrap_or(cfg.depth_max);
    let rates = scheme.rate_by_projections(&w, &nu, m_max)?;
    let mut csv = Csv::new(&["m", "diameter", "rate"]);
    for (i, &r) in rates.iter().enumerate() {
        csv.row(&[Cell::Int(i + 1), Cell::Real(scheme.diameter(i + 1)), Cell::Real(r)]);
    }
    let manifest = h.finish("project", None);
    emit_csv(out, csv, &Nothing {}, &manifest)?;
    let last = rates.last().copied().unwrap_or(0.0);
    Ok(format!("project: {m_max} levels, rate at level {m_max} = {} -> {}", graphon_ldp::io::fmt_f64(last), out.display()))
}

fn default_cut() -> CutSettings {
    let c = CutConfig::default();
    CutSettings { n_exact: c.n_exact, starts: c.starts, refine: c.refine }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct CutSettings {
    n_exact: usize,
    starts: usize,
    refine: usize,
}

impl CutSettings {
    fn config(&self, seed: u64) -> CutConfig {
        CutConfig { n_exact: self.n_exact, starts: self.starts, seed, refine: self.refine }
    }
}

fn default_method() -> LdpMethod {
    LdpMethod::Exact
}

#[derive(Debug, Deserialize)]
struct VerifyConfig {
    reference: MeasureFile,
    event: EventFile,
    n_list: Vec<usize>,
    #[serde(default = "default_method")]
    method: LdpMethod,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default = "default_cut")]
    cut: CutSettings,
}

const LDP_HEADER: [&str; 7] = ["n", "method", "log_prob", "scaled", "rate_target", "gap", "ess"];

fn verify(config: &Path, seed: Option<u64>, out: &Path) -> Result<String> {
    let mut h = ConfigHasher::new("verify");
    h.param("seed", format!("{seed:?}"));
    let cfg: VerifyConfig = parse(config, &mut h)?;
    let nu = cfg.reference.build()?;
    let event = cfg.event.build()?;
    let seed = match (cfg.method, seed) {
        (LdpMethod::MonteCarlo, None) => bail!("--seed is required for Monte Carlo runs"),
        (_, s) => s,
    };
    let mc = MonteCarloConfig {
        samples: cfg.samples.unwrap_or(MonteCarloConfig::default().samples),
        seed: seed.unwrap_or(0),
        cut: cfg.cut.config(seed.unwrap_or(0)),
    };
    let report = verify_ldp(&nu, &event, &cfg.n_list, cfg.method, &mc)?;
    let mut csv = Csv::new(&LDP_HEADER);
    for row in &report.rows {
        csv.row(&[
            Cell::Int(row.n),
            Cell::Text(report.method.name()),
            Cell::Real(row.log_prob),
            Cell::Real(row.scaled),
            Cell::Real(row.rate_target),
            Cell::Real(row.gap),
            row.ess.map_or(Cell::Empty, Cell::Real),
        ]);
    }
    let manifest = h.finish("verify", seed);
    let rows: Vec<_> = report
        .rows
        .iter()
        .map(|r| VerifyRow { n: r.n, samples: r.samples, hits: r.hits, half_width: Real(r.half_width) })
        .collect();
    emit_csv(out, csv, &VerifyExtra { rate_is_exact: report.rate_is_exact, rows }, &manifest)?;
    let last = report.rows.last().ok_or_else(|| anyhow!("n_list is empty"))?;
    Ok(format!("verify: rate {}, gap at n={} is {} -> {}", graphon_ldp::io::fmt_f64(report.rate_target), last.n, graphon_ldp::io::fmt_f64(last.gap), out.display()))
}

#[derive(Serialize)]
struct VerifyRow {
    n: usize,
    samples: usize,
    hits: usize,
    half_width: Real,
}

#[derive(Serialize)]
struct VerifyExtra {
    rate_is_exact: bool,
    rows: Vec<VerifyRow>,
}

fn condition(reference: &Path, event: &Path, n: usize, seed: u64, out: &Path) -> Result<String> {
    let mut h = ConfigHasher::new("condition");
    h.param("n", n);
    let nu = read_measure(reference, &mut h)?;
    let event = parse::<EventFile>(event, &mut h)?.build()?;
    let g = conditional_sample(n, &nu, &event, seed)?;
    let manifest = h.finish("condition", Some(seed));
    emit_json(out, &GraphFile::of(&g), &manifest)?;
    Ok(format!("condition: {} vertices -> {}", g.n(), out.display()))
}

#[derive(Debug, Deserialize)]
struct ConcentrateConfig {
    reference: MeasureFile,
    event: EventFile,
    n_list: Vec<usize>,
    reps: usize,
    #[serde(default = "default_cut")]
    cut: CutSettings,
}

#[derive(Serialize)]
struct ConcentrateExtra {
    minimizer: GraphonFile,
    mode: Vec<CutMode>,
    deltas: Vec<Vec<f64>>,
}

fn concentrate(config: &Path, seed: u64, out: &Path) -> Result<String> {
    let mut h = ConfigHasher::new("concentrate");
    let cfg: ConcentrateConfig = parse(config, &mut h)?;
    let nu = cfg.reference.build()?;
    let event = cfg.event.build()?;
    if !matches!(event, EventSpec::MeanFunctional { .. }) {
        bail!("concentration needs a mean-functional event");
    }
    let cut = cfg.cut.config(seed);
    let (target, rows) = concentration_experiment(&nu, &event, &cfg.n_list, cfg.reps, seed, &cut)?;
    let rate = graphon_entropy(&target, &nu)?;
    let mut header = LDP_HEADER.to_vec();
    header.extend(["median_delta", "q90_delta"]);
    let mut csv = Csv::new(&header);
    for row in &rows {
        let log_prob = event_log_prob_exact(row.n, &nu, &event)?;
        let scaled = 2.0 / (row.n * row.n) as f64 * log_prob;
        csv.row(&[
            Cell::Int(row.n),
            Cell::Text(LdpMethod::Exact.name()),
            Cell::Real(log_prob),
            Cell::Real(scaled),
            Cell::Real(rate),
            Cell::Real(scaled + rate),
            Cell::Empty,
            Cell::Real(row.median_delta),
            Cell::Real(row.q90_delta),
        ]);
    }
    let extra = ConcentrateExtra {
        minimizer: GraphonFile::of(&target),
        mode: rows.iter().map(|r| r.mode).collect(),
        deltas: rows.iter().map(|r| r.deltas.clone()).collect(),
    };
    let manifest = h.finish("concentrate", Some(seed));
    emit_csv(out, csv, &extra, &manifest)?;
    let medians: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}", r.n, r.median_delta)).collect();
    Ok(format!("concentrate: median delta {} -> {}", medians.join(" "), out.display()))
}

#[derive(Serialize)]
struct MinimizeReport {
    graphon: GraphonFile,
    value: Real,
    dual: Vec<Real>,
    kkt_residual: Real,
    method: SolveMethod,
    iterations: usize,
}

fn minimize(reference: &Path, constraints: &Path, out: &Path) -> Result<String> {
    let mut h = ConfigHasher::new("minimize");
    let nu = read_measure(reference, &mut h)?;
    let set: ConstraintSet<f64> = parse(constraints, &mut h)?;
    let r = minimize_rate(&nu, &set)?;
    if !r.value.is_finite() {
        return Err(NumericalFailure(format!("minimized rate is {}", r.value)).into());
    }
    let report = MinimizeReport {
        graphon: GraphonFile::of(&r.graphon),
        value: Real(r.value),
        dual: r.dual.iter().map(|&x| Real(x)).collect(),
        kkt_residual: Real(r.kkt_residual),
        method: r.method,
        iterations: r.iterations,
    };
    let manifest = h.finish("minimize", None);
    emit_json(out, &report, &manifest)?;
    Ok(format!(
        "minimize: value {} kkt {} -> {}",
        graphon_ldp::io::fmt_f64(r.value),
        graphon_ldp::io::fmt_f64(r.kkt_residual),
        out.display()
    ))
}

fn selftest() -> Result<String> {
    let checks = graphon_ldp::selftest::run();
    let mut failed = 0;
    for c in &checks {
        match &c.outcome {
            Ok(()) => println!("PASS {:<15} {}", c.module, c.name),
            Err(e) => {
                failed += 1;
                println!("FAIL {:<15} {}: {e}", c.module, c.name);
            }
        }
    }
    if failed > 0 {
        return Err(NumericalFailure(format!("{failed} of {} self-checks failed", checks.len())).into());
    }
    Ok(format!("selftest: {} checks passed", checks.len()))
}

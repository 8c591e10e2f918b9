use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use moments_harness::bench::{self, BenchSpec};
use moments_harness::generate::{self, Dataset, GroupWorkload, SpikeWorkload};
use moments_harness::output::{Cell, Format, Table};
use moments_harness::query::{query_quantile, query_threshold_groups, ThresholdMode};
use moments_harness::window::{query_sliding_window, PaneSeries};
use moments_harness::eval::read_values;
use moments_harness::{evaluate, CubeStore, Filter, Grouping, HarnessConfig};
use moments_sketch::accuracy::standard_phis;
use moments_sketch::{SolverConfig, Stage};

/// Quantile sketches over pre-aggregated data.
#[derive(Debug, Parser)]
#[command(name = "msketch", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sketch order [default: 10].
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Condition-number limit for moment selection [default: 1e4].
    #[arg(long = "kappa-max", global = true)]
    kappa_max: Option<f64>,
    /// Solver moment tolerance [default: 1e-9].
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Chebyshev approximation degree [default: 128].
    #[arg(long, global = true)]
    nc: Option<usize>,
    /// Worker threads for cell merges [default: 1].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format: table, csv or json [default: table].
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Round quantile estimates to the nearest integer.
    #[arg(long = "round-integers", global = true)]
    round_integers: bool,
    /// Values per sequence cell [default: 200].
    #[arg(long = "cell-size", global = true)]
    cell_size: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<HarnessConfig> {
        let mut c = match &self.config {
            Some(path) => HarnessConfig::load(path)?,
            None => HarnessConfig::default(),
        };
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = self.kappa_max {
            c.kappa_max = v;
        }
        if let Some(v) = self.tol {
            c.tol = v;
        }
        if let Some(v) = self.nc {
            c.nc = v;
        }
        if let Some(v) = self.threads {
            c.threads = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.format {
            c.format = v;
        }
        if let Some(v) = self.cell_size {
            c.cell_size = v;
        }
        c.round_integers |= self.round_integers;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Pre-aggregate a CSV file into a cube store.
    Ingest(IngestArgs),
    /// Query a cube store.
    #[command(subcommand)]
    Query(QueryCommand),
    /// Sliding-window threshold query over a time series CSV.
    Window(WindowArgs),
    /// Measure quantile error against the raw values of a CSV file.
    Eval(EvalArgs),
    /// Merge, estimation and query-time benchmarks.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DatasetKind {
    Exponential,
    Gamma,
    GaussianOutliers,
    UniformDiscrete,
    /// Grouped cube rows (`group,shard,value`).
    Groups,
    /// Time series with two injected spikes (`time,value`).
    Spikes,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    dataset: DatasetKind,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    shape: f64,
    #[arg(long = "outlier-mean", default_value_t = 10.0)]
    outlier_mean: f64,
    #[arg(long, default_value_t = 10)]
    cardinality: usize,
    #[arg(long, default_value_t = 1000)]
    groups: usize,
    #[arg(long, default_value_t = 4320)]
    panes: usize,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Directory to write the store to.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "value")]
    metric: String,
    /// Dimension columns; without them rows are grouped into sequence cells.
    #[arg(long, value_delimiter = ',')]
    dims: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum QueryCommand {
    /// Quantiles of the merge of all cells matching a filter.
    Quantile(QuantileArgs),
    /// Groups whose quantile exceeds a threshold.
    Threshold(ThresholdArgs),
}

#[derive(Debug, Args)]
struct QuantileArgs {
    #[arg(long)]
    store: PathBuf,
    /// `dim=value` terms, all of which must hold.
    #[arg(long, value_delimiter = ',')]
    filter: Vec<String>,
    /// Probabilities [default: 21 points from 0.01 to 0.99].
    #[arg(long, value_delimiter = ',')]
    phi: Vec<f64>,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long = "group-by", value_delimiter = ',', required = true)]
    group_by: Vec<String>,
    #[arg(long, default_value_t = 0.7)]
    phi: f64,
    #[arg(
        long,
        allow_negative_numbers = true,
        conflicts_with = "global_phi",
        required_unless_present = "global_phi"
    )]
    threshold: Option<f64>,
    /// Use this quantile of the whole cube as the threshold.
    #[arg(long = "global-phi")]
    global_phi: Option<f64>,
}

#[derive(Debug, Args)]
struct WindowArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "time-column", default_value = "time")]
    time_column: String,
    #[arg(long, default_value = "value")]
    metric: String,
    #[arg(long = "pane-width")]
    pane_width: f64,
    /// Window width in time units; a multiple of the pane width.
    #[arg(long)]
    window: f64,
    #[arg(long, default_value_t = 0.99)]
    phi: f64,
    #[arg(long, allow_negative_numbers = true)]
    threshold: f64,
    /// List every window, not only flagged ones.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "value")]
    metric: String,
    #[arg(long, value_delimiter = ',')]
    phi: Vec<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Largest number of merges in the query-time sweep.
    #[arg(long = "max-merge", default_value_t = 1_000_000)]
    max_merge: usize,
    /// Distinct cells to merge from, reused cyclically.
    #[arg(long = "pool-cells", default_value_t = 10_000)]
    pool_cells: usize,
    /// Thread counts for the parallel merge benchmark.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    shards: Vec<usize>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.common.resolve()?;
    let solver = config.solver()?;
    match cli.command {
        Command::Gen(a) => gen(a, &config),
        Command::Ingest(a) => ingest(a, &config),
        Command::Query(QueryCommand::Quantile(a)) => quantile(a, &config, &solver),
        Command::Query(QueryCommand::Threshold(a)) => threshold(a, &config, &solver),
        Command::Window(a) => window(a, &config, &solver),
        Command::Eval(a) => eval(a, &config, &solver),
        Command::Bench(a) => bench_cmd(a, &config, &solver),
    }
}

fn gen(a: GenArgs, c: &HarnessConfig) -> Result<()> {
    let out: Box<dyn Write> = match &a.output {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let out = BufWriter::new(out);
    let dataset = match a.dataset {
        DatasetKind::Exponential => Dataset::Exponential { lambda: a.lambda },
        DatasetKind::Gamma => Dataset::Gamma { shape: a.shape },
        DatasetKind::GaussianOutliers => Dataset::GaussianOutliers { outlier_mean: a.outlier_mean },
        DatasetKind::UniformDiscrete => Dataset::UniformDiscrete { cardinality: a.cardinality },
        DatasetKind::Groups => {
            let w = GroupWorkload { groups: a.groups, seed: c.seed, ..Default::default() };
            return Ok(w.write_csv(out)?);
        }
        DatasetKind::Spikes => {
            let w = SpikeWorkload { panes: a.panes, seed: c.seed, ..Default::default() };
            return Ok(w.write_csv(out)?);
        }
    };
    generate::write_values(&dataset.sample(a.n, c.seed)?, out)?;
    Ok(())
}

fn ingest(a: IngestArgs, c: &HarnessConfig) -> Result<()> {
    let grouping = match a.dims.is_empty() {
        true => Grouping::Sequence { cell_size: c.cell_size },
        false => Grouping::Dimensions { columns: a.dims },
    };
    let (store, report) = CubeStore::ingest_path(&a.input, &a.metric, grouping, c.k)?;
    store.save(&a.store)?;
    let mut t = Table::new(["rows", "skipped", "cells", "store"]);
    t.push(vec![report.rows.into(), report.skipped.into(), store.len().into(), a.store.display().to_string().into()]);
    print(&t, c.format)
}

fn phis_or_default(phis: Vec<f64>) -> Vec<f64> {
    if phis.is_empty() { standard_phis() } else { phis }
}

fn quantile(a: QuantileArgs, c: &HarnessConfig, solver: &SolverConfig) -> Result<()> {
    let store = CubeStore::load(&a.store)?;
    let filter = Filter::parse(&a.filter)?;
    let phis = phis_or_default(a.phi);
    let r = query_quantile(&store, &filter, &phis, solver, c.round_integers, c.threads)?;
    let mut t = Table::new(["phi", "estimate", "rank_lower", "rank_upper", "error_bound", "low_confidence"]);
    for ans in &r.answers {
        t.push(vec![
            ans.phi.into(),
            ans.estimate.into(),
            ans.bounds.lower.into(),
            ans.bounds.upper.into(),
            ans.error_bound.into(),
            ans.low_confidence.into(),
        ]);
    }
    print(&t, c.format)?;
    eprintln!(
        "{} values in {} cells; merge {:?}, estimate {:?}",
        r.count, r.cells, r.merge_time, r.estimate_time
    );
    Ok(())
}

fn stage_table(stats: &moments_sketch::CascadeStats) -> Table {
    let mut t = Table::new(["stage", "calls", "fraction", "mean_time_us"]);
    for s in Stage::ALL {
        let mean = stats.mean_time(s).map(|d| d.as_secs_f64() * 1e6);
        t.push(vec![s.name().into(), stats.count(s).into(), stats.fraction(s).into(), mean.into()]);
    }
    t
}

fn threshold(a: ThresholdArgs, c: &HarnessConfig, solver: &SolverConfig) -> Result<()> {
    let store = CubeStore::load(&a.store)?;
    let mode = match (a.threshold, a.global_phi) {
        (Some(t), _) => ThresholdMode::Value(t),
        (None, Some(p)) => ThresholdMode::GlobalQuantile(p),
        (None, None) => bail!("either --threshold or --global-phi is required"),
    };
    let r = query_threshold_groups(&store, &a.group_by, a.phi, mode, solver, c.threads)?;
    let mut t = Table::new(["group", "count", "status", "stage", "estimate"]);
    for g in r.groups.iter().filter(|g| g.outcome.decision != Some(false)) {
        let status = if g.outcome.is_indeterminate() { "indeterminate" } else { "above" };
        t.push(vec![
            g.key.join("|").into(),
            g.count.into(),
            status.into(),
            g.outcome.resolved_by.name().into(),
            g.outcome.estimate.into(),
        ]);
    }
    print(&t, c.format)?;
    eprintln!(
        "threshold {}{}; {} of {} groups above, {} indeterminate",
        r.threshold,
        if r.threshold_low_confidence { " (low confidence)" } else { "" },
        r.qualifying().count(),
        r.groups.len(),
        r.indeterminate().count()
    );
    eprint!("{}", stage_table(&r.stats).render(Format::Table)?);
    Ok(())
}

fn window(a: WindowArgs, c: &HarnessConfig, solver: &SolverConfig) -> Result<()> {
    let file = open(&a.input)?;
    let (series, report) = PaneSeries::from_csv(file, &a.time_column, &a.metric, a.pane_width, c.k)?;
    let r = query_sliding_window(&series, a.window, a.phi, a.threshold, solver)?;
    let mut t = Table::new(["start", "end", "count", "flagged", "stage", "estimate"]);
    for w in r.windows.iter().filter(|w| a.all || w.flagged() || w.indeterminate()) {
        let o = w.outcome.as_ref();
        t.push(vec![
            w.start.into(),
            w.end.into(),
            w.count.into(),
            Cell::from(o.and_then(|o| o.decision)),
            Cell::from(o.map(|o| o.resolved_by.name())),
            Cell::from(o.and_then(|o| o.estimate)),
        ]);
    }
    print(&t, c.format)?;
    eprintln!(
        "{} rows ({} skipped), {} panes, {} windows, {} flagged",
        report.rows,
        report.skipped,
        series.len(),
        r.windows.len(),
        r.flagged().count()
    );
    eprint!("{}", stage_table(&r.stats).render(Format::Table)?);
    Ok(())
}

fn eval(a: EvalArgs, c: &HarnessConfig, solver: &SolverConfig) -> Result<()> {
    let (values, report) = read_values(open(&a.input)?, &a.metric)?;
    let phis = phis_or_default(a.phi);
    let r = evaluate(&values, c.cell_size, c.k, &phis, solver)?;
    let mut t = Table::new(["phi", "estimate", "error"]);
    for i in 0..phis.len() {
        t.push(vec![r.phis[i].into(), r.estimates[i].into(), r.errors[i].into()]);
    }
    print(&t, c.format)?;
    eprintln!(
        "{} values ({} skipped); eps_avg {:.6e}; n_merge {}, t_merge {:?}, t_est {:?}{}",
        report.rows,
        report.skipped,
        r.eps_avg,
        r.n_merge,
        r.t_merge,
        r.t_est,
        if r.low_confidence { "; low confidence" } else { "" }
    );
    Ok(())
}

fn bench_cmd(a: BenchArgs, c: &HarnessConfig, solver: &SolverConfig) -> Result<()> {
    let mut sweep: Vec<usize> = [1_000, 3_000, 10_000, 30_000, 100_000, 300_000, 1_000_000]
        .into_iter()
        .filter(|&n| n <= a.max_merge)
        .collect();
    if sweep.len() < 2 {
        sweep = vec![a.max_merge / 2, a.max_merge];
    }
    let spec = BenchSpec {
        order: c.k,
        pool_cells: a.pool_cells,
        cell_size: c.cell_size,
        sweep,
        threads: a.shards,
        parallel_merges: a.max_merge,
        seed: c.seed,
        solver: solver.clone(),
    };
    let r = bench::run(&spec)?;
    let mut t = Table::new(["n_merge", "t_query_ms"]);
    t.push(vec![0usize.into(), (r.t_est.as_secs_f64() * 1e3).into()]);
    for p in &r.sweep {
        t.push(vec![p.n_merge.into(), (p.t_query.as_secs_f64() * 1e3).into()]);
    }
    print(&t, c.format)?;
    eprintln!(
        "merge {:.1} ns; solve {:.3} ms; t_query = {:.3e}·n + {:.3e} s, R² {:.5}",
        r.merge_latency.as_secs_f64() * 1e9,
        r.solve_latency.as_secs_f64() * 1e3,
        r.fit.slope,
        r.fit.intercept,
        r.fit.r2
    );
    let mut p = Table::new(["threads", "ms", "merges_per_sec", "max_rel_diff"]);
    for x in &r.parallel {
        p.push(vec![x.threads.into(), (x.elapsed.as_secs_f64() * 1e3).into(), x.merges_per_sec.into(), x.max_rel_diff.into()]);
    }
    eprint!("{}", p.render(Format::Table)?);
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn print(table: &Table, format: Format) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(table.render(format)?.as_bytes())?;
    Ok(())
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rrmar::io::{ingest, read_artifact, Artifact, Dataset, DatasetSpec, Transform};
use rrmar::report::default_labels;
use rrmar::{
    comovement_report, export_long, fit, run_experiment, select_ranks, simulate_dgp, Criterion, Design, DgpSpec,
    Dims, Error, ExperimentSpec, FitResult, PseudoStructParams, RunConfig,
};

#[derive(Parser)]
#[command(name = "rrmar", version, about = "Reduced-rank matrix autoregressions: simulate, fit, select, decompose")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from a random data-generating process.
    Simulate(SimulateArgs),
    /// Fit one model and write its estimates and co-movement equations.
    Fit(FitArgs),
    /// Fit a grid of ranks and lags and report AIC and BIC.
    Select(SelectArgs),
    /// Re-render the co-movement equations of a saved fit.
    Decompose(DecomposeArgs),
    /// Run a Monte Carlo experiment.
    Mc(McArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Long CSV with header time,row,col,value.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Per-row transform, e.g. GDP=logdiff (repeatable).
    #[arg(long = "transform", value_parser = parse_transform)]
    transforms: Vec<(String, Transform)>,
    #[arg(long)]
    no_demean: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    /// Ranks as r1,r2.
    #[arg(long, value_parser = parse_pair)]
    ranks: Option<(usize, usize)>,
    #[arg(long)]
    lags: Option<usize>,
    /// Number of observations.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_pair)]
    ranks: Option<(usize, usize)>,
    #[arg(long)]
    lags: Option<usize>,
    /// Number of starting points.
    #[arg(long)]
    starts: Option<usize>,
    /// Starts continued after screening.
    #[arg(long)]
    keep: Option<usize>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fix the lag order.
    #[arg(long, conflicts_with = "lag_max")]
    lags: Option<usize>,
    /// Search lags 1..=P.
    #[arg(long)]
    lag_max: Option<usize>,
    #[arg(long)]
    criterion: Option<Criterion>,
    /// Restrict the row rank, e.g. 1,3 or 2,2 for a slice.
    #[arg(long, value_parser = parse_pair)]
    r1: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_pair)]
    r2: Option<(usize, usize)>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// fit.json written by `rrmar fit`.
    #[arg(long)]
    fit: PathBuf,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    design: Option<Design>,
    #[arg(long)]
    reps: Option<usize>,
    /// Sample sizes, e.g. 100,250.
    #[arg(long, value_delimiter = ',')]
    t: Vec<usize>,
    /// Points per kernel density.
    #[arg(long, default_value_t = 200)]
    grid: usize,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated integers, got '{s}'"))?;
    let n = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("'{x}': {e}"));
    Ok((n(a)?, n(b)?))
}

fn parse_transform(s: &str) -> Result<(String, Transform), String> {
    let (row, kind) = s.split_once('=').ok_or_else(|| format!("expected ROW=KIND, got '{s}'"))?;
    let kind = match kind {
        "none" => Transform::None,
        "diff" => Transform::Diff,
        "logdiff" => Transform::Logdiff,
        _ => return Err(format!("unknown transform '{kind}', expected none, diff or logdiff")),
    };
    Ok((row.to_string(), kind))
}

/// Body of `fit.json`.
#[derive(Serialize, Deserialize)]
struct SavedFit {
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    pipeline: Vec<String>,
    fit: FitResult,
}

#[derive(Serialize)]
struct SavedDgp<'a> {
    spec: &'a DgpSpec,
    params: &'a PseudoStructParams,
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
    /// An output directory was requested rather than defaulted.
    out_given: bool,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> rrmar::Result<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        std::fs::write(&path, contents)?;
        Ok(path)
    }

    fn dataset(&self, args: &DataArgs) -> rrmar::Result<Dataset> {
        let mut spec = match (&args.data, &self.cfg.data) {
            (Some(path), Some(cfg)) => DatasetSpec { path: path.clone(), ..cfg.clone() },
            (Some(path), None) => DatasetSpec::new(path),
            (None, Some(cfg)) => cfg.clone(),
            (None, None) => return Err(Error::Config("no data: pass --data or set [data] in the config".into())),
        };
        spec.transforms.extend(args.transforms.iter().cloned());
        if args.no_demean {
            spec.demean = false;
        }
        ingest(&spec)
    }
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> rrmar::Result<()> {
    let mut spec = ctx.cfg.simulate.clone().unwrap_or_else(|| DgpSpec::new(Dims { n1: 3, n2: 4, r1: 1, r2: 1, p: 1 }, 250));
    let d = &mut spec.dims;
    if let Some(n) = a.n1 {
        d.n1 = n;
    }
    if let Some(n) = a.n2 {
        d.n2 = n;
    }
    if let Some((r1, r2)) = a.ranks {
        (d.r1, d.r2) = (r1, r2);
    }
    if let Some(p) = a.lags {
        d.p = p;
    }
    if let Some(t) = a.t {
        spec.t = t;
    }
    if let Some(s) = a.snr {
        spec.snr = s;
    }
    spec.seed = ctx.seed;
    let (params, series) = simulate_dgp(&spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))?;
    let (rows, cols) = (default_labels("R", series.n1()), default_labels("C", series.n2()));
    let times = default_labels("", series.len());
    let mut buf = vec![];
    export_long(&series, &rows, &cols, &times, &mut buf)?;
    let csv = ctx.write("series.csv", std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    ctx.write("dgp.json", &Artifact::new("dgp", SavedDgp { spec: &spec, params: &params }).to_json()?)?;
    emit(&format!("wrote {} ({} observations of {}x{})\n", csv.display(), series.len(), series.n1(), series.n2()));
    Ok(())
}

fn cmd_fit(ctx: &Ctx, a: &FitArgs) -> rrmar::Result<()> {
    let data = ctx.dataset(&a.data)?;
    let m = &ctx.cfg.model;
    let (r1, r2) = match (a.ranks, m.r1, m.r2) {
        (Some(r), _, _) => r,
        (None, Some(r1), Some(r2)) => (r1, r2),
        _ => return Err(Error::Config("ranks are required: pass --ranks r1,r2 or set [model] r1 and r2".into())),
    };
    let dims = Dims::new(data.series.n1(), data.series.n2(), r1, r2, a.lags.unwrap_or(m.p))?;
    let mut config = ctx.cfg.fit.with_seed(ctx.seed);
    if let Some(k) = a.starts {
        config.n_starts = k;
        config.keep = config.keep.min(k);
    }
    if let Some(l) = a.keep {
        config.keep = l;
    }
    let result = fit(&data.series, dims, &config)?;
    for w in &result.diagnostics.warnings {
        log::warn!("{w}");
    }
    let text = comovement_report(&result, &data.row_labels, &data.col_labels)?.render_text();
    let saved = SavedFit { row_labels: data.row_labels, col_labels: data.col_labels, pipeline: data.pipeline, fit: result };
    ctx.write("fit.json", &Artifact::new("fit", &saved).to_json()?)?;
    ctx.write("comovements.txt", &text)?;
    emit(&text);
    emit(&format!("log-likelihood {:.4}\n", saved.fit.loglik));
    Ok(())
}

fn cmd_select(ctx: &Ctx, a: &SelectArgs) -> rrmar::Result<()> {
    let data = ctx.dataset(&a.data)?;
    let mut config = ctx.cfg.select.clone().unwrap_or_default();
    if let Some(p) = a.lags {
        config.lags = (p, p);
    }
    if let Some(p) = a.lag_max {
        config.lags = (1, p);
    }
    if a.r1.is_some() {
        config.r1 = a.r1;
    }
    if a.r2.is_some() {
        config.r2 = a.r2;
    }
    config.fit.seed = ctx.seed;
    let criterion = a.criterion.unwrap_or(ctx.cfg.model.criterion);
    let grid = select_ranks(&data.series, &config)?;
    ctx.write("selection.csv", &grid.to_csv()?)?;
    ctx.write("selection.json", &Artifact::new("selection", &grid).to_json()?)?;
    emit(&grid.render_table(criterion));
    for e in grid.entries.iter().filter(|e| !e.converged) {
        log::warn!("cell ({},{},{}) excluded: {}", e.r1, e.r2, e.p, e.error.as_deref().unwrap_or("saddle or nesting violation"));
    }
    match grid.argmin(criterion) {
        Some((r1, r2, p)) => emit(&format!("{} selects ranks ({r1},{r2}) with {p} lags\n", criterion.name())),
        None => return Err(Error::SelectionFailed),
    }
    Ok(())
}

fn cmd_decompose(ctx: &Ctx, a: &DecomposeArgs) -> rrmar::Result<()> {
    let text = std::fs::read_to_string(&a.fit)?;
    let saved: SavedFit = read_artifact(&text, "fit")?;
    let report = comovement_report(&saved.fit, &saved.row_labels, &saved.col_labels)?.render_text();
    if ctx.out_given {
        ctx.write("comovements.txt", &report)?;
    }
    emit(&report);
    Ok(())
}

fn cmd_mc(ctx: &Ctx, a: &McArgs) -> rrmar::Result<()> {
    let mut spec = match (&ctx.cfg.experiment, a.design) {
        (Some(e), None) => e.clone(),
        (Some(e), Some(d)) if e.design == d => e.clone(),
        (_, Some(d)) => ExperimentSpec::preset(d),
        (None, None) => return Err(Error::Config("no experiment: pass --design or set [experiment]".into())),
    };
    if let Some(r) = a.reps {
        spec.replications = r;
    }
    if !a.t.is_empty() {
        spec.t_list = a.t.clone();
    }
    spec.seed = ctx.seed;
    let result = run_experiment(&spec)?;
    ctx.write("experiment.json", &Artifact::new("experiment", &result).to_json()?)?;
    let tables = result.render_tables();
    ctx.write("tables.txt", &tables)?;
    if !result.estimation.is_empty() {
        match result.density_csv(a.grid) {
            Ok(csv) => {
                ctx.write("density.csv", &csv)?;
            }
            Err(e) => log::warn!("no density export: {e}"),
        }
    }
    emit(&tables);
    log::info!("finished in {:.1} s", result.runtime_secs);
    Ok(())
}

/// Stdout may be a closed pipe (`rrmar ... | head`); that is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn run(cli: Cli) -> rrmar::Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.threads.or(cfg.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure {n} threads: {e}")))?;
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let out = cli.out.clone().or_else(|| cfg.out.clone());
    let out_given = out.is_some();
    let out = out.unwrap_or_else(|| Path::new(".").to_path_buf());
    let ctx = Ctx { cfg, seed, out, out_given };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::Select(a) => cmd_select(&ctx, a),
        Command::Decompose(a) => cmd_decompose(&ctx, a),
        Command::Mc(a) => cmd_mc(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

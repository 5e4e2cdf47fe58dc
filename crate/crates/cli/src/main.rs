use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cibp::diagnostics::{chisq_gof, poisson_cells, poisson_pmf, CountTable, MIN_EXPECTED};
use cibp::factor::{run_chain, Dataset, FactorPrior};
use cibp::ibp::{sample_ibp, IbpParams};
use cibp::lof::{left_order, lof_log_pmf};
use cibp::samplers::sample_restaurant;
use cibp::sim::{run_experiment, ExperimentConfig};
use cibp::{kplus_mean, CibpParams, FeatureMatrix, RngStream};

mod plot;

const MIN_KDIST_DRAWS: usize = 1000;

#[derive(Parser)]
#[command(name = "cibp", version, about = "Convergent Indian buffet process toolkit")]
struct Cli {
    /// Base seed; falls back to $CIBP_SEED, then to a fresh random seed.
    #[arg(long, global = true, env = "CIBP_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw binary matrices from CIBP or IBP.
    Sample(SampleArgs),
    /// Empirical vs analytic law of the number of nonzero columns.
    Kdist(KdistArgs),
    /// Log-pmf of a matrix's left-ordered class.
    Pmf(PmfArgs),
    /// Run the spike-and-slab factor model sampler on a data set.
    Factor(FactorArgs),
    /// Run the CIBP vs IBP simulation study.
    Simulate(SimulateArgs),
    /// Render an aggregate CSV or a matrix file as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Process {
    Cibp,
    Ibp,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum)]
    process: Process,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    draws: usize,
    /// Output file; with --draws > 1 files are numbered `stem_0001.ext`, ...
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KdistArgs {
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    draws: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PmfArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    kappa: f64,
}

#[derive(Args)]
struct FactorArgs {
    /// CSV, one sample per line.
    #[arg(long)]
    data: PathBuf,
    /// Skip the first line of the data file.
    #[arg(long)]
    header: bool,
    /// JSON prior: {"allocation": {"kind": "cibp", ...}, "tau": .., "a": .., "b": ..}
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Growth,
    Heatmap,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: PlotKind,
    #[arg(long)]
    out: PathBuf,
    /// Height of the reference line in growth plots.
    #[arg(long, default_value_t = 4.0)]
    k_true: f64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<cibp::Error> for CliError {
    fn from(e: cibp::Error) -> Self {
        use cibp::Error as E;
        match e {
            E::InvalidParameter(_) | E::Capacity(_) => Self::Usage(e.to_string()),
            E::Numerical(_) | E::ChainAborted { .. } => Self::Numerical(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, contents),
        None => io::stdout().write_all(contents.as_bytes()).map_err(|e| CliError::Data(e.to_string())),
    }
}

fn numbered(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{i:04}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{i:04}"),
    };
    path.with_file_name(name)
}

enum Model {
    Cibp(CibpParams),
    Ibp(IbpParams),
}

impl Model {
    fn from_args(args: &SampleArgs) -> Result<Self, CliError> {
        match args.process {
            Process::Cibp => {
                let (Some(gamma), Some(alpha), None) = (args.gamma, args.alpha, args.omega) else {
                    return Err(CliError::Usage("--process cibp takes --gamma, --alpha, --kappa and no --omega".into()));
                };
                Ok(Self::Cibp(CibpParams::new(gamma, alpha, args.kappa)?))
            }
            Process::Ibp => {
                let (Some(omega), None, None) = (args.omega, args.gamma, args.alpha) else {
                    return Err(CliError::Usage("--process ibp takes --omega, --kappa and no --gamma/--alpha".into()));
                };
                Ok(Self::Ibp(IbpParams::new(omega, args.kappa)?))
            }
        }
    }

    fn draw(&self, p: usize, stream: RngStream) -> cibp::Result<FeatureMatrix> {
        let mut rng = stream.rng();
        match self {
            Self::Cibp(params) => sample_restaurant(params, p, &mut rng),
            Self::Ibp(params) => sample_ibp(params, p, &mut rng),
        }
    }
}

fn cmd_sample(args: &SampleArgs, seed: u64) -> Result<(), CliError> {
    let model = Model::from_args(args)?;
    if args.draws == 0 {
        return Err(CliError::Usage("--draws must be at least 1".into()));
    }
    if args.draws > 1 && args.out.is_none() {
        return Err(CliError::Usage("--draws > 1 needs --out".into()));
    }
    for i in 0..args.draws {
        let text = model.draw(args.p, RngStream::new(seed, i as u64))?.to_text();
        match &args.out {
            Some(path) if args.draws > 1 => write_file(&numbered(path, i + 1), &text)?,
            out => emit(out.as_deref(), &text)?,
        }
    }
    Ok(())
}

fn cmd_kdist(args: &KdistArgs, seed: u64) -> Result<(), CliError> {
    if args.draws < MIN_KDIST_DRAWS {
        return Err(CliError::Usage(format!("--draws must be at least {MIN_KDIST_DRAWS} for the goodness-of-fit test")));
    }
    let params = CibpParams::new(args.gamma, args.alpha, args.kappa)?;
    let mut rng = RngStream::new(seed, 0).rng();
    let mut table = CountTable::new();
    for _ in 0..args.draws {
        table.add(sample_restaurant(&params, args.p, &mut rng)?.ncols() as u64);
    }
    let mean = kplus_mean(&params, args.p);
    let gof = chisq_gof(&table, &poisson_cells(mean), MIN_EXPECTED)?;
    let max_k = table.iter().map(|(k, _)| *k).max().unwrap_or(0);
    let mut out = String::from("k,observed,expected\n");
    for k in 0..=max_k {
        let expected = args.draws as f64 * poisson_pmf(mean, k);
        writeln!(out, "{k},{},{expected}", table.get(&k)).unwrap();
    }
    writeln!(out, "# mean={mean} chisq={} df={} p_value={}", gof.statistic, gof.df, gof.p_value).unwrap();
    emit(args.out.as_deref(), &out)
}

fn cmd_pmf(args: &PmfArgs) -> Result<(), CliError> {
    let params = CibpParams::new(args.gamma, args.alpha, args.kappa)?;
    let matrix = FeatureMatrix::from_text(&read_file(&args.matrix)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.matrix.display())))?;
    let value = lof_log_pmf(&left_order(&matrix), &params)?;
    println!("{value:.12}");
    Ok(())
}

fn cmd_factor(args: &FactorArgs, seed: u64) -> Result<(), CliError> {
    let file = fs::File::open(&args.data).map_err(|e| io_err(&args.data, e))?;
    let data = Dataset::from_csv(file, args.header)?;
    let prior: FactorPrior = serde_json::from_str(&read_file(&args.config)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.config.display())))?;
    prior.validate()?;
    if args.iters == 0 || args.burn_in >= args.iters {
        return Err(CliError::Usage("need --iters > --burn-in".into()));
    }
    let trace = run_chain(&data, &prior, args.iters, args.burn_in, RngStream::new(seed, 0))?;
    if let Some(path) = &args.trace {
        write_file(path, &trace.to_csv())?;
    }
    println!("posterior mean k_plus: {}", trace.mean_kplus());
    println!("posterior mean sigma2: {}", trace.mean_sigma2());
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<u64, CliError> {
    let mut config = ExperimentConfig::from_json(&read_file(&args.config)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.config.display())))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if args.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let start = Instant::now();
    let result = run_experiment(&config, args.jobs)?;
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    write_file(&args.out.join("records.csv"), &result.records_csv())?;
    write_file(&args.out.join("aggregate.csv"), &result.aggregate_csv())?;
    for a in &result.aborted {
        eprintln!("warning: cell p={} replication={} prior={} aborted: {}", a.p, a.replication, a.prior, a.reason);
    }
    if !result.aborted.is_empty() {
        eprintln!("warning: {} cell(s) excluded from aggregates", result.aborted.len());
    }
    eprintln!("{} cells in {:.1}s", result.records.len(), start.elapsed().as_secs_f64());
    Ok(config.seed)
}

fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let text = read_file(&args.input)?;
    let svg = match args.kind {
        PlotKind::Growth => plot::growth_svg(&plot::read_aggregate(&text)?, args.k_true),
        PlotKind::Heatmap => plot::heatmap_svg(
            &FeatureMatrix::from_text(&text).map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?,
        ),
    };
    write_file(&args.out, &svg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or_else(rand_seed);
    match &cli.command {
        Command::Simulate(args) => {
            let used = cmd_simulate(args, cli.seed)?;
            eprintln!("seed: {used}");
            return Ok(());
        }
        Command::Pmf(_) | Command::Plot(_) => {}
        _ => eprintln!("seed: {seed}"),
    }
    match &cli.command {
        Command::Sample(args) => cmd_sample(args, seed),
        Command::Kdist(args) => cmd_kdist(args, seed),
        Command::Pmf(args) => cmd_pmf(args),
        Command::Factor(args) => cmd_factor(args, seed),
        Command::Plot(args) => cmd_plot(args),
        Command::Simulate(_) => unreachable!(),
    }
}

fn rand_seed() -> u64 {
    use std::hash::{BuildHasher, RandomState};
    RandomState::new().hash_one(std::time::SystemTime::now())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

//! Command-line front end: estimate, simulate, truth, replicate, report.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gatt::config::{read_json, TaskConfig, TruthConfig};
use gatt::estimators::{estimate, ratio_estimate, EstimateResult};
use gatt::simlab::dgp::{simulate, DgpSpec};
use gatt::simlab::harness::{run_replications, ReplicationReport, StudyConfig};
use gatt::simlab::oracle::compute_true_gatt;
use gatt::simlab::report::{format_table, write_csv};
use gatt::{EstimatorKind, GattError, Result, TaskSpec};

#[derive(Parser)]
#[command(name = "gatt", version, about = "Generalized ATT estimation for longitudinal modified treatment policies")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "GATT_THREADS")]
    threads: Option<usize>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured estimators and write a result JSON.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave per-unit influence function values out of the output.
        #[arg(long)]
        no_eif: bool,
    },
    /// Draw a dataset from a built-in law and write it as CSV.
    Simulate(SimulateArgs),
    /// Monte-Carlo truth of a GATT under a simulated law.
    Truth {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the number of draws in the config.
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a replication study and write the report.
    Replicate {
        #[arg(long)]
        config: PathBuf,
        /// Report CSV, one row per cell, estimator and metric.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Text table; printed to stdout when absent.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Overrides the replicate count in the config.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Post-process saved outputs.
    Report {
        /// Ratio of two saved estimate results, numerator first.
        #[arg(long, num_args = 2, value_names = ["NUM", "DEN"], conflicts_with = "input")]
        ratio: Option<Vec<PathBuf>>,
        #[arg(long, value_enum, default_value = "tmle")]
        estimator: Kind,
        /// Saved replication report JSON to render as a table.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file holding a law specification; overrides `--dgp`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sim1")]
    dgp: Law,
    /// Horizon for sim2.
    #[arg(long, default_value_t = 4)]
    tau: usize,
    /// Outcome noise for sim2.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Law {
    Sim1,
    Sim2,
    AttToy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Sub,
    Ipw,
    Tmle,
}

impl From<Kind> for EstimatorKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Sub => EstimatorKind::Sub,
            Kind::Ipw => EstimatorKind::Ipw,
            Kind::Tmle => EstimatorKind::Tmle,
        }
    }
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    n: usize,
    tau: usize,
    results: &'a [EstimateResult],
    task: &'a TaskSpec,
}

#[derive(serde::Deserialize)]
struct SavedEstimate {
    results: Vec<EstimateResult>,
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run_estimate(config: &Path, out: Option<&Path>, no_eif: bool, seed: Option<u64>) -> Result<()> {
    let mut cfg = TaskConfig::from_path(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let frame = cfg.load_frame(config.parent())?;
    let task = cfg.task(frame.tau())?;
    task.validate(&frame)?;
    let mut results = estimate(&frame, &task)?;
    if no_eif {
        results.iter_mut().for_each(|r| r.eif = None);
    }
    write_json(&EstimateOutput { n: frame.n(), tau: frame.tau(), results: &results, task: &task }, out)
}

fn run_simulate(args: &SimulateArgs, seed: u64) -> Result<()> {
    let dgp = match &args.config {
        Some(p) => read_json::<DgpSpec>(p)?,
        None => match args.dgp {
            Law::Sim1 => DgpSpec::Sim1,
            Law::Sim2 => DgpSpec::Sim2 { tau: args.tau, sigma: args.sigma },
            Law::AttToy => DgpSpec::AttToy,
        },
    };
    dgp.validate()?;
    let frame = simulate(dgp.model().as_ref(), args.n, seed)?;
    let w = sink(args.out.as_deref())?;
    frame.to_csv(w)
}

fn run_truth(config: &Path, draws: Option<usize>, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut cfg: TruthConfig = read_json(config)?;
    if let Some(m) = draws {
        cfg.draws = m;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (policy, conditioning) = cfg.resolve()?;
    let truth = compute_true_gatt(cfg.dgp.model().as_ref(), &policy, &conditioning, cfg.draws, cfg.seed)?;
    write_json(&truth, out)
}

fn run_replicate(
    config: &Path,
    out: Option<&Path>,
    json: Option<&Path>,
    table: Option<&Path>,
    replicates: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let mut study: StudyConfig = read_json(config)?;
    if let Some(r) = replicates {
        study.replicates = r;
    }
    if let Some(s) = seed {
        study.seed = s;
    }
    let report = run_replications(&study)?;
    if let Some(p) = out {
        write_csv(&report, BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = json {
        write_json(&report, Some(p))?;
    }
    let mut w = sink(table)?;
    write!(w, "{}", format_table(&report))?;
    w.flush()?;
    Ok(())
}

fn pick(path: &Path, kind: EstimatorKind) -> Result<EstimateResult> {
    let saved: SavedEstimate = read_json(path)?;
    saved
        .results
        .into_iter()
        .find(|r| r.estimator == kind)
        .ok_or_else(|| GattError::Config(format!("{} has no {kind:?} result", path.display())))
}

fn run_report(ratio: Option<&[PathBuf]>, estimator: Kind, input: Option<&Path>, out: Option<&Path>) -> Result<()> {
    match (ratio, input) {
        (Some([num, den]), _) => {
            let kind = estimator.into();
            let r = ratio_estimate(&pick(num, kind)?, &pick(den, kind)?)?;
            write_json(&r, out)
        }
        (None, Some(p)) => {
            let report: ReplicationReport = read_json(p)?;
            let mut w = sink(out)?;
            write!(w, "{}", format_table(&report))?;
            w.flush()?;
            Ok(())
        }
        _ => Err(GattError::Config("report needs --ratio NUM DEN or --input REPORT".into())),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(GattError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| GattError::Config(format!("cannot build thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Estimate { config, out, no_eif } => run_estimate(config, out.as_deref(), *no_eif, cli.seed),
        Command::Simulate(args) => run_simulate(args, cli.seed.unwrap_or(0)),
        Command::Truth { config, draws, out } => run_truth(config, *draws, out.as_deref(), cli.seed),
        Command::Replicate { config, out, json, table, replicates } => {
            run_replicate(config, out.as_deref(), json.as_deref(), table.as_deref(), *replicates, cli.seed)
        }
        Command::Report { ratio, estimator, input, out } => {
            run_report(ratio.as_deref(), *estimator, input.as_deref(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("error: {e}");
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

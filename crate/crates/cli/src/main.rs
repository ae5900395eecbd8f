use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use stfusion::eval::{comparison_table, run_all, ConfusionMatrix, Pipeline, RunConfig, RunLock};
use stfusion::Error;

/// Two-stream video classification: data generation, optical flow,
/// stream training and fusion evaluation.
#[derive(Parser, Debug)]
#[command(name = "stfusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run configuration (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `run.strategy`.
    #[arg(long)]
    strategy: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic clip dataset.
    GenData(RunArgs),
    /// Precompute optical flow for every clip.
    ComputeFlow(RunArgs),
    /// Train the streams the strategy needs.
    Train(RunArgs),
    /// Evaluate one strategy with already trained streams.
    Eval(RunArgs),
    /// Train and evaluate all five strategies and write a comparison table.
    RunAll(RunArgs),
    /// Render a confusion CSV as a row-normalized graymap.
    RenderConfusion {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pixels per matrix cell.
        #[arg(long, default_value_t = 16)]
        cell: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 1,
        Error::Convergence { .. } | Error::Divergence { .. } => 3,
        _ => 2,
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Error> {
    if !args.config.is_file() {
        return Err(Error::Config(format!("config file {} not found", args.config.display())));
    }
    let mut cfg = RunConfig::from_file(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(s) = &args.strategy {
        cfg.strategy = s.parse()?;
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    cfg.validate()?;
    if let Some(j) = cfg.jobs {
        // Fails only if a pool was already built, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    Ok(cfg)
}

fn render(input: &Path, out: &Path, cell: usize) -> Result<(), Error> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let m = ConfusionMatrix::from_csv(&text)?;
    let bytes = m.to_pgm(cell)?;
    std::fs::write(out, bytes).map_err(|e| Error::io(out, e))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData(a) => {
            let cfg = load_config(&a)?;
            let _lock = RunLock::acquire(&cfg.out)?;
            let mut p = Pipeline::new(cfg)?;
            let dir = p.dataset_dir();
            let m = p.ensure_dataset()?;
            println!("{} clips in {}", m.entries.len(), dir.display());
        }
        Command::ComputeFlow(a) => {
            let cfg = load_config(&a)?;
            let _lock = RunLock::acquire(&cfg.out)?;
            let mut p = Pipeline::new(cfg)?;
            p.ensure_inputs(true)?;
            println!("flows in {}", p.flow_dir().display());
        }
        Command::Train(a) => {
            let cfg = load_config(&a)?;
            let _lock = RunLock::acquire(&cfg.out)?;
            let strategy = cfg.strategy;
            let mut p = Pipeline::new(cfg)?;
            for &kind in strategy.streams() {
                p.ensure_stream(kind)?;
                println!("{kind}: {}", p.checkpoint_path(kind).display());
            }
        }
        Command::Eval(a) => {
            let cfg = load_config(&a)?;
            let _lock = RunLock::acquire(&cfg.out)?;
            let strategy = cfg.strategy;
            let mut p = Pipeline::new(cfg)?.allow_training(false);
            let r = p.evaluate(strategy)?;
            let dir = p.write_outputs(&r)?;
            info!("outputs in {}", dir.display());
            print!("{}", r.report.to_csv());
        }
        Command::RunAll(a) => {
            let cfg = load_config(&a)?;
            let results = run_all(cfg)?;
            print!("{}", comparison_table(&results));
        }
        Command::RenderConfusion { input, out, cell } => render(&input, &out, cell)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

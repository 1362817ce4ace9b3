use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kdistill::cli::{self, EvalSource, Status};
use kdistill::config::RunConfig;
use kdistill::distill::Method;

#[derive(Parser)]
#[command(name = "kdistill", version, about = "Bias-aware dataset distillation with KDE sample reweighting")]
struct Args {
    /// TOML run config; defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output`.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dm,
    Dsa,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Dm => Method::Dm,
            MethodArg::Dsa => Method::Dsa,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Distilled,
    Biased,
    Unbiased,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the biased/unbiased dataset bundle.
    Generate {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Train the contrastive encoder and cache embedding distances.
    Embed,
    /// Dump per-sample KDE weights.
    Weights,
    /// Distill the biased training split.
    Distill {
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, value_enum, default_value = "off")]
        kde: Switch,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        ipc: Option<usize>,
    },
    /// Train classifiers and report unbiased test accuracy.
    Eval {
        #[arg(long, value_enum, default_value = "distilled")]
        source: SourceArg,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, value_enum, default_value = "off")]
        kde: Switch,
    },
    /// Run the benchmark grid.
    Bench,
    /// Summarize an artifact file or directory.
    Inspect { path: PathBuf },
}

fn run(args: Args) -> kdistill::Result<Status> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = args.output {
        cfg.output = o;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.apply_seed();
    match args.command {
        Command::Generate { preset, ratio } => {
            if let Some(p) = preset {
                cfg.dataset.preset = p;
            }
            if let Some(r) = ratio {
                cfg.dataset.conflict_ratio = r;
            }
            println!("{}", cli::cmd_generate(&cfg)?);
        }
        Command::Embed => println!("{}", cli::cmd_embed(&cfg)?),
        Command::Weights => println!("{}", cli::cmd_weights(&cfg)?),
        Command::Distill {
            method,
            kde,
            iterations,
            ipc,
        } => {
            if let Some(i) = iterations {
                cfg.distill.iterations = i;
            }
            if let Some(i) = ipc {
                cfg.distill.ipc = i;
            }
            let method = method.map_or(cfg.method, Method::from);
            let dir = cli::cmd_distill(&cfg, method, matches!(kde, Switch::On))?;
            println!("wrote {}", dir.display());
        }
        Command::Eval { source, method, kde } => {
            let source = match source {
                SourceArg::Biased => EvalSource::Biased,
                SourceArg::Unbiased => EvalSource::Unbiased,
                SourceArg::Distilled => EvalSource::Distilled {
                    method: method.map_or(cfg.method, Method::from),
                    kde: matches!(kde, Switch::On),
                },
            };
            println!("{}", cli::cmd_eval(&cfg, source)?);
        }
        Command::Bench => {
            let table = cli::cmd_bench(&cfg)?;
            print!("{}", table.to_markdown());
            if table.is_partial() {
                eprintln!("some cells failed; see table.csv");
                return Ok(Status::Partial);
            }
        }
        Command::Inspect { path } => println!("{}", cli::cmd_inspect(&path)?),
    }
    Ok(Status::Ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let status = run(Args::parse()).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        Status::of_error(&e)
    });
    ExitCode::from(status as u8)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowmatch_cli::commands::{
    cmd_ebm, cmd_eval, cmd_plot, cmd_sb_eval, cmd_sweep, cmd_train, CHECKPOINT_FILE,
};
use flowmatch_cli::config::{load_config, ExperimentConfig};
use flowmatch_cli::exit_code;

#[derive(Parser)]
#[command(name = "flowmatch", version, about = "Flow-matching experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// experiment TOML
    #[arg(long)]
    config: PathBuf,
    /// overrides train.seed (and FLOWMATCH_SEED)
    #[arg(long)]
    seed: Option<u64>,
    /// overrides output_dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// dotted-path config override, e.g. --set train.lr=0.01 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn load(&self) -> flowmatch::Result<ExperimentConfig> {
        load_config(&self.config, &self.set, self.seed, self.out.as_deref())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write checkpoint/history/meta artifacts
    Train(RunArgs),
    /// Evaluate a checkpoint into report.csv / report.json
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// defaults to <output_dir>/checkpoint.json
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run a value × seed grid and aggregate mean ± std per value
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// worker pool size
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare a trained bridge against the entropic ground-truth marginals
    SbEval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Funnel pipeline: weighted targets -> training -> log-partition estimate
    Ebm(RunArgs),
    /// Render a scene JSON or report CSV to <out>/plot.svg
    Plot {
        input: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
        /// report column for CSV inputs: w2_sq | pe | npe | nfe_mean
        #[arg(long, default_value = "npe")]
        metric: String,
    },
}

fn run(cli: Cli) -> flowmatch::Result<()> {
    match cli.cmd {
        Cmd::Train(args) => {
            let cfg = args.load()?;
            let run = cmd_train(&cfg)?;
            let last = run.history.last();
            println!(
                "trained {} in {:.1}s ({} checks, best val {:.4}); artifacts in {}",
                cfg.run_id,
                run.wall_clock_s,
                run.history.len(),
                last.map(|h| h.val_loss).unwrap_or(f64::NAN),
                run.out_dir.display()
            );
        }
        Cmd::Eval { run: args, checkpoint } => {
            let cfg = args.load()?;
            let ckpt = checkpoint.unwrap_or_else(|| {
                flowmatch_cli::commands::resolve_out_dir(&cfg).join(CHECKPOINT_FILE)
            });
            let rows = cmd_eval(&ckpt, &cfg)?;
            for r in &rows {
                let steps = r.n_steps.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
                println!(
                    "{} {}:{} w2_sq={:.4} pe={:.4} npe={:.4} nfe={:.0}",
                    r.run_id, r.integrator, steps, r.w2_sq, r.pe, r.npe, r.nfe_mean
                );
            }
        }
        Cmd::Sweep { run: args, jobs } => {
            let cfg = args.load()?;
            let rows = cmd_sweep(&cfg, jobs)?;
            for r in &rows {
                println!(
                    "{}={} n_ok={} npe={:.4}±{:.4}",
                    r.param,
                    r.value,
                    r.n_ok,
                    r.npe_mean.unwrap_or(f64::NAN),
                    r.npe_std.unwrap_or(f64::NAN)
                );
            }
        }
        Cmd::SbEval { run: args, checkpoint } => {
            let cfg = args.load()?;
            let ckpt = checkpoint.unwrap_or_else(|| {
                flowmatch_cli::commands::resolve_out_dir(&cfg).join(CHECKPOINT_FILE)
            });
            let curve = cmd_sb_eval(&ckpt, &cfg)?;
            let mean = curve.iter().map(|(_, e)| e).sum::<f64>() / curve.len() as f64;
            println!("sb marginal error: mean {mean:.4} over {} timepoints", curve.len());
        }
        Cmd::Ebm(args) => {
            let cfg = args.load()?;
            let out = cmd_ebm(&cfg)?;
            println!(
                "log_z = {:.4} ({:.1}s); artifacts in {}",
                out.log_z,
                out.wall_clock_s,
                out.out_dir.display()
            );
        }
        Cmd::Plot { input, out, metric } => {
            let path = cmd_plot(&input, &out, &metric)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

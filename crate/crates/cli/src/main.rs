use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use privml_cli::{
    cmd_audit, cmd_predict, cmd_serve, cmd_train, format_audit, AuditQuery, AuditTarget, Overrides, Result, RunConfig,
};
use privml_core::accountant::DEFAULT_LAMBDA_MAX;
use privml_core::nn::KernelMode;
use privml_federation::{ProviderOutcome, TransportKind};

#[derive(Parser)]
#[command(name = "privml", version, about = "Private, data-oblivious training across data providers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Loopback,
    Tcp,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Oblivious,
    Baseline,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Target ε for the whole run.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Examples per update, split evenly across providers.
    #[arg(long)]
    lot_size: Option<usize>,
    /// Per-example gradient norm bound.
    #[arg(long)]
    clip_bound: Option<f64>,
    #[arg(long)]
    providers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Plain SGD: no clipping, no noise.
    #[arg(long)]
    no_dp: bool,
    /// Use the branching baseline kernels.
    #[arg(long)]
    no_oblivious: bool,
    #[arg(long, value_enum)]
    transport: Option<TransportArg>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            epochs: self.epochs,
            epsilon: self.epsilon,
            delta: self.delta,
            lot_size: self.lot_size,
            clip_bound: self.clip_bound,
            providers: self.providers,
            seed: self.seed,
            no_dp: self.no_dp,
            no_oblivious: self.no_oblivious,
            transport: self.transport.map(|t| match t {
                TransportArg::Loopback => TransportKind::Loopback,
                TransportArg::Tcp => TransportKind::Tcp,
            }),
            learning_rate: self.learning_rate,
            output: self.output.clone(),
        });
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train across providers and write metrics, parameters and the ledger.
    Train(RunArgs),
    /// Compare moments-accountant and linear-composition guarantees.
    Audit {
        #[arg(long)]
        q: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        steps: u64,
        #[arg(long, conflicts_with = "epsilon", required_unless_present = "epsilon")]
        delta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_LAMBDA_MAX)]
        lambda_max: u32,
        /// Print one JSON object instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Class probabilities for CSV feature rows.
    Predict {
        /// Model spec JSON written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "oblivious")]
        mode: ModeArg,
    },
    /// Serve one provider's shard over TCP to a single consumer.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        provider_id: u32,
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
    },
    /// Print the effective configuration in canonical form.
    Config(RunArgs),
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let report = cmd_train(&cfg)?;
            let last = report.outcome.metrics.last();
            println!(
                "{:?}: {} epochs, test accuracy {:.4}, epsilon {} -> {}",
                report.outcome.status,
                report.outcome.metrics.len(),
                last.map_or(f64::NAN, |m| m.test_accuracy),
                last.map_or(f64::NAN, |m| m.epsilon_spent),
                report.output.display()
            );
            Ok(if report.ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Audit {
            q,
            sigma,
            steps,
            delta,
            epsilon,
            lambda_max,
            json,
        } => {
            let target = match (delta, epsilon) {
                (Some(d), _) => AuditTarget::Delta(d),
                (None, Some(e)) => AuditTarget::Epsilon(e),
                (None, None) => unreachable!("clap requires one of them"),
            };
            let r = cmd_audit(&AuditQuery {
                q,
                sigma,
                steps,
                target,
                lambda_max,
            })?;
            if json {
                println!("{}", serde_json::to_string(&r).expect("report is serializable"));
            } else {
                print!("{}", format_audit(&r));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict {
            model,
            params,
            input,
            output,
            mode,
        } => {
            let mode = match mode {
                ModeArg::Oblivious => KernelMode::Oblivious,
                ModeArg::Baseline => KernelMode::Baseline,
            };
            let n = cmd_predict(&model, &params, &input, &output, mode)?;
            eprintln!("{n} rows -> {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { run, provider_id, listen } => {
            let cfg = run.resolve()?;
            let report = cmd_serve(&cfg, provider_id, &listen, |addr| {
                println!("listening on {addr}");
                let _ = std::io::stdout().flush();
            })?;
            println!("provider {}: {:?} after {} chunks", report.id, report.outcome, report.chunks_served);
            Ok(if report.outcome == ProviderOutcome::Finished {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Config(args) => {
            print!("{}", args.resolve()?.canonical());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

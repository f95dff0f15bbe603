use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use hjarl_cli::commands::{cmd_eval, cmd_heatmap, cmd_solve, cmd_train};
use hjarl_cli::serve::{serve, ServeResources};
use hjarl_cli::{CliError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "hjarl", version, about = "HJ reach-avoid solver and HJ-guided adversarial RL")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,

    /// JSON run configuration; task defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Checkpoint to resume (train) or evaluate.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Buffer manifest written by `solve`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, default_value = "hjarl-out")]
    out: PathBuf,

    /// Overrides the serve port.
    #[arg(long, global = true)]
    port: Option<u16>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Solve the value-function buffer.
    Solve,
    /// Train a policy.
    Train,
    /// Evaluate a checkpoint.
    Eval,
    /// Export critic heatmaps and BRT slices.
    Heatmap,
    /// Serve the reach-avoid game over WebSocket.
    Serve,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(port) = cli.port {
        config.serve.port = port;
    }
    Ok(config)
}

fn require_checkpoint(cli: &Cli) -> Result<&PathBuf> {
    cli.checkpoint
        .as_ref()
        .ok_or_else(|| CliError::config("this verb needs --checkpoint"))
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let manifest = cli.manifest.as_deref();
    match cli.verb {
        Verb::Solve => {
            let path = cmd_solve(&config, &cli.out)?;
            println!("wrote {}", path.display());
        }
        Verb::Train => {
            let outcome = cmd_train(&config, manifest, cli.checkpoint.as_deref(), &cli.out)?;
            println!(
                "trained {} to step {} (seed {}), final checkpoint {}",
                outcome.metadata.trainer,
                outcome.metadata.final_step,
                outcome.metadata.seed,
                outcome.final_checkpoint.display()
            );
        }
        Verb::Eval => {
            let summary = cmd_eval(&config, require_checkpoint(cli)?, manifest, &cli.out)?;
            for s in &summary.sweeps {
                println!(
                    "defender {:?}: agreement {:.3}, critic/BRT correlation {:.3}",
                    s.defender_init, s.agreement, s.critic_brt_correlation
                );
            }
            for q in &summary.quad {
                println!("{:?}: episode length {:.1} ± {:.1}", q.mode, q.mean, q.std);
            }
        }
        Verb::Heatmap => {
            for p in cmd_heatmap(&config, require_checkpoint(cli)?, manifest, &cli.out)? {
                println!("wrote {}", p.display());
            }
        }
        Verb::Serve => {
            let resources = Arc::new(ServeResources::load(&config, cli.checkpoint.as_deref(), manifest)?);
            let addr = format!("{}:{}", config.serve.host, config.serve.port);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io("tokio runtime", e))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| CliError::io(&addr, e))?;
                println!("serving on ws://{}", listener.local_addr().map_err(|e| CliError::io(&addr, e))?);
                serve(listener, resources, config.serve.tick_hz)
                    .await
                    .map_err(|e| CliError::io(&addr, e))
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

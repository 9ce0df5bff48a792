use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use eon_cli::{
    cmd_inspect, cmd_run, cmd_train, cmd_validate_fixtures, load_config, InspectArgs, RunManifest, RunOverrides,
    RESULTS_FILE, SUMMARY_FILE,
};
use eon_core::rsa::RequestKind;

#[derive(Parser)]
#[command(
    name = "eonsim",
    version,
    about = "Video-aware RSA simulator for elastic optical networks"
)]
struct Cli {
    /// TOML configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground truth, fit the quality estimator, write model and report.
    Train {
        #[arg(long, default_value = "out/train")]
        out: PathBuf,
        /// Dataset and split seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate every (load, seed) replication and write results.csv and summary.json.
    Run {
        #[arg(long, default_value = "out/run")]
        out: PathBuf,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seed: Option<Vec<u64>>,
        /// Expand a single seed into this many consecutive seeds.
        #[arg(long)]
        replications: Option<usize>,
        /// Comma-separated offered loads in Erlang.
        #[arg(long, value_delimiter = ',')]
        loads: Option<Vec<f64>>,
        /// Bundled name (nsfnet, usbackbone, fig1) or topology JSON path.
        #[arg(long)]
        topology: Option<String>,
        /// Video-cost weight; 0 gives the fragmentation-only baseline.
        #[arg(long)]
        beta: Option<f64>,
        /// Estimator from `train`; trained on the fly when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Print every candidate of one request and the decision.
    Inspect {
        #[arg(long, default_value = "fig1")]
        topology: String,
        #[arg(long)]
        src: String,
        #[arg(long)]
        dst: String,
        #[arg(long)]
        slots: usize,
        #[arg(long, default_value = "video")]
        kind: RequestKind,
        /// Grid snapshot; the bundled fixture is used for fig1.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        u_th: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Candidate path count.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Replay the six-node worked example and report each check.
    ValidateFixtures,
}

fn run(cli: Cli) -> Result<bool> {
    let mut config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Train { out, seed } => {
            if let Some(s) = seed {
                config.training.seed = s;
            }
            let s = cmd_train(&config, &out)?;
            println!(
                "neurons={} train_mse={:.6e} test_mse={} -> {}",
                s.neurons,
                s.train_mse,
                s.test_mse.map(|t| format!("{t:.6e}")).unwrap_or_else(|| "n/a".into()),
                out.display()
            );
        }
        Command::Run {
            out,
            seed,
            replications,
            loads,
            topology,
            beta,
            model,
        } => {
            let overrides = RunOverrides {
                loads,
                seeds: seed,
                replications,
                topology,
                beta,
                model,
            };
            let manifest = RunManifest::new(config, out.clone(), overrides)?;
            let summary = cmd_run(&manifest)?;
            for p in &summary.points {
                println!(
                    "{} load={} seed={} bp={:.4} video_bp={:.4} non_video_bp={:.4}",
                    p.topology, p.load_erlang, p.seed, p.overall_bp, p.video.bp, p.non_video.bp
                );
            }
            println!(
                "wrote {} and {}",
                out.join(RESULTS_FILE).display(),
                out.join(SUMMARY_FILE).display()
            );
        }
        Command::Inspect {
            topology,
            src,
            dst,
            slots,
            kind,
            grid,
            model,
            u_th,
            beta,
            k,
        } => {
            if let Some(b) = beta {
                config.weights.beta = b;
            }
            if let Some(k) = k {
                config.routing.k = k;
            }
            config.validate()?;
            let args = InspectArgs {
                topology,
                src,
                dst,
                slots,
                kind,
                grid,
                model,
                u_th,
            };
            print!("{}", cmd_inspect(&config, &args)?.trace);
        }
        Command::ValidateFixtures => {
            let checks = cmd_validate_fixtures()?;
            for c in &checks {
                let tag = if c.passed() { "PASS" } else { "FAIL" };
                println!("{tag} {}: expected {}, got {}", c.name, c.expected, c.actual);
            }
            return Ok(checks.iter().all(|c| c.passed()));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use permabc_cli::plot::{self, PlotKind, PlotOptions};
use permabc_cli::{load_config, output, presets, run, CliError, ConfigSources};

#[derive(Parser)]
#[command(name = "permabc", version, about = "Permutation-matched ABC for hierarchical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration file (a run's config.json is accepted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset
    #[arg(long)]
    preset: Option<String>,
    /// Override a configuration key, e.g. --set model.n=20
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Population size N
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sampler: Option<String>,
    /// Output directory
    #[arg(long)]
    output: Option<PathBuf>,
    /// Simulator call budget
    #[arg(long)]
    budget: Option<u64>,
    /// Target tolerance
    #[arg(long)]
    epsilon: Option<f64>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.set.clone();
        let mut push = |key: &str, v: String| o.push(format!("{key}={v}"));
        if let Some(s) = self.seed {
            push("seed", s.to_string());
        }
        if let Some(n) = self.n {
            push("N", n.to_string());
        }
        if let Some(s) = &self.sampler {
            push("sampler", serde_json::to_string(s).expect("string"));
        }
        if let Some(p) = &self.output {
            push("output_dir", serde_json::to_string(&p.display().to_string()).expect("string"));
        }
        if let Some(b) = self.budget {
            push("budget", b.to_string());
        }
        if let Some(e) = self.epsilon {
            push("epsilon", e.to_string());
        }
        o
    }

    fn load(&self) -> Result<permabc_cli::RunConfig, CliError> {
        load_config(&ConfigSources {
            preset: self.preset.as_deref(),
            file: self.config.as_deref(),
            overrides: self.overrides(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its result files
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads (results do not depend on it)
        #[arg(long, env = "PERMABC_THREADS")]
        threads: Option<usize>,
    },
    /// Print the fully materialised configuration
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// List the named presets
    ListPresets,
    /// Emit a long-format table for plotting from run directories
    PlotData {
        /// budget-curve, marginal-hist, os-evolution or map-values
        #[arg(long)]
        kind: String,
        /// Output file; standard output when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Combine runs with different problem hashes
        #[arg(long)]
        force: bool,
        #[arg(long, default_value_t = 1000)]
        target_unique: usize,
        /// Parameter for map-values
        #[arg(long)]
        parameter: Option<String>,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run { config, threads } => {
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .map_err(|e| CliError::Io(e.to_string()))?;
            }
            let cfg = config.load()?;
            let (cfg, result) = run::run_experiment(&cfg)?;
            println!(
                "{}: status {}, {} samples, epsilon {}, {} simulator calls, results in {}",
                cfg.sampler.name(),
                result.status,
                result.samples.len(),
                result.epsilon,
                result.simulator_calls,
                cfg.output_dir
            );
            Ok(result.outcome.exit_code())
        }
        Command::ValidateConfig { config } => {
            let cfg = config.load()?;
            let (cfg, _) = run::prepare(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&output::wrapped_config(&cfg)).expect("config serialises"));
            Ok(0)
        }
        Command::ListPresets => {
            for p in presets::PRESETS {
                println!("{:<20} {}", p.name, p.description);
            }
            Ok(0)
        }
        Command::PlotData { kind, out, force, target_unique, parameter, runs } => {
            let kind: PlotKind = kind.parse()?;
            let text = plot::emit(kind, &runs, &PlotOptions { target_unique, parameter, force })?;
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
                None => print!("{text}"),
            }
            Ok(0)
        }
    }
}

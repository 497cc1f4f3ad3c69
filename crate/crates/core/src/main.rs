use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qshear::runner::{self, RunError, RunResult, Targets};

/// Spectral shearing and two-photon interference simulator.
#[derive(Parser)]
#[command(name = "qshear", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `run.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides any config value, e.g. `--set elements.0.phi0=3.14159`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write results.csv and summary.json.
    Run(Common),
    /// Run once per value of a config parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted parameter path, e.g. `elements.0.v0`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Parse and check a configuration without running it.
    Validate(Common),
    /// Solve for mean pair number and/or source parameters.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Targets such as `g2=0.038` or `visibility=0.9,bandwidth_ghz=435`.
        #[arg(long)]
        target: String,
    },
}

fn load(common: &Common) -> RunResult<(toml::Table, PathBuf)> {
    let mut tree = runner::load_tree(&common.config)?;
    for item in &common.overrides {
        let (path, value) = item
            .split_once('=')
            .ok_or_else(|| RunError::Parse(format!("override `{item}` is not PATH=VALUE")))?;
        runner::set_path(&mut tree, path.trim(), runner::parse_value(value.trim()))?;
    }
    if let Some(seed) = common.seed {
        runner::set_path(&mut tree, "run.seed", toml::Value::Integer(seed as i64))?;
    }
    let out = match &common.out {
        Some(p) => p.clone(),
        None => tree
            .get("run")
            .and_then(|r| r.get("output_dir"))
            .and_then(|v| v.as_str())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out")),
    };
    Ok((tree, out))
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> RunResult<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(RunError::Parse("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| RunError::Parse(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn report(out: &Path, files: &[&str]) {
    for f in files {
        println!("{}", out.join(f).display());
    }
}

fn dispatch(cli: Cli) -> RunResult<()> {
    match cli.command {
        Command::Run(common) => {
            let (tree, out) = load(&common)?;
            let config = runner::parse_config(tree)?;
            with_workers(common.workers, || runner::run(&config, &out))??;
            report(&out, &["results.csv", "summary.json"]);
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let (tree, out) = load(&common)?;
            let values: Vec<toml::Value> = values.iter().map(|v| runner::parse_value(v.trim())).collect();
            with_workers(common.workers, || runner::sweep(&tree, &param, &values, &out))??;
            report(&out, &["sweep.csv", "summary.json"]);
        }
        Command::Validate(common) => {
            let (tree, _) = load(&common)?;
            let config = runner::parse_config(tree)?;
            with_workers(common.workers, || runner::prepare(&config))??;
            println!("ok");
        }
        Command::Calibrate { common, target } => {
            let (tree, out) = load(&common)?;
            let config = runner::parse_config(tree)?;
            let targets = Targets::parse(&target)?;
            let value = with_workers(common.workers, || runner::calibrate(&config, &targets, &out))??;
            println!("{}", serde_json::to_string_pretty(&value).expect("json"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qshear: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

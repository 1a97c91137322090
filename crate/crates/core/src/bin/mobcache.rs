use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mobcache::bench::{self, ExperimentConfig};
use mobcache::Error;

#[derive(Parser)]
#[command(name = "mobcache", version, about = "Mobility-aware cache placement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Extra `key=value` config overrides, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit mobility models from the configured input and write them as CSV.
    Estimate,
    /// Compute one placement per configured strategy.
    Optimize,
    /// Score a placement file against the configured model.
    Evaluate {
        #[arg(long)]
        placement: PathBuf,
    },
    /// Run the full grid and write results.csv plus charts.
    Sweep,
    /// Run the bundled oracle checks.
    Selftest,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli.config.as_deref().ok_or_else(|| Error::Config {
        field: "--config".into(),
        msg: "this subcommand needs a config file".into(),
    })?;
    let mut overrides = cli
        .set
        .iter()
        .map(|s| bench::parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    ExperimentConfig::from_file(path, &overrides)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

fn run(cli: &Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::Selftest => {
            let checks = bench::selftest(cli.seed.unwrap_or(1));
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
        Command::Estimate => {
            let cfg = load(cli)?;
            for (name, text) in bench::estimate_models(&cfg)? {
                println!("{}", write(&cli.out, &name, &text)?.display());
            }
            Ok(true)
        }
        Command::Optimize => {
            let cfg = load(cli)?;
            for (strategy, placed) in bench::optimize_at_base(&cfg)? {
                let name = format!("placement_{strategy}.csv");
                println!("{}", write(&cli.out, &name, &bench::placement_csv(&placed))?.display());
            }
            Ok(true)
        }
        Command::Evaluate { placement } => {
            let cfg = load(cli)?;
            let text = std::fs::read_to_string(placement).map_err(|e| Error::Io {
                path: placement.clone(),
                source: e,
            })?;
            let mut csv = String::from("metric,value,std_error\n");
            for m in bench::evaluate_at_base(&cfg, &text)? {
                csv += &format!(
                    "{},{},{}\n",
                    m.name,
                    bench::format_sig9(m.value),
                    bench::format_sig9(m.std_error)
                );
            }
            print!("{csv}");
            write(&cli.out, "evaluate.csv", &csv)?;
            Ok(true)
        }
        Command::Sweep => {
            let cfg = load(cli)?;
            let rows = bench::run_experiment(&cfg)?;
            for path in bench::emit_report(&rows, &cli.out, cfg.svg)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: kind=runtime msg=\"{e}\"");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            // One line, `key=value` fields, for scripts.
            let (kind, field, code) = match &e {
                Error::Config { field, .. } => ("config", Some(field.as_str()), 2),
                Error::Parse { .. } => ("parse", None, 2),
                Error::Io { .. } => ("io", None, 1),
                _ => ("input", None, 1),
            };
            let msg = match &e {
                Error::Config { msg, .. } => msg.clone(),
                other => other.to_string(),
            };
            let field = field.map(|f| format!(" field={f}")).unwrap_or_default();
            eprintln!("error: kind={kind}{field} msg={msg:?}");
            ExitCode::from(code)
        }
    }
}

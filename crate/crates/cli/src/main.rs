use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use fqpsa::config::{parse_config_with, parse_override};
use fqpsa::dualsolve::verify::selftest;
use fqpsa::simkit::{run_table, sweep, ResultTable, SweepAxis};

#[derive(Parser, Debug)]
#[command(name = "fqpsa", version, about = "OFDMA downlink scheduling simulator: FQPSA versus M-LWDF-PF")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the CSV here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, global = true)]
    scheduler: Option<SchedulerArg>,

    #[arg(long, value_enum, global = true)]
    quantize: Option<Toggle>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario.
    Run,
    /// Vary one user count and run both schedulers at each value.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated user counts.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Check the allocator's optimality conditions on random instances.
    Selftest {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchedulerArg {
    Fqpsa,
    Mlwdf,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    Voice,
    Video,
    Data,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Voice => SweepAxis::Voice,
            AxisArg::Video => SweepAxis::Video,
            AxisArg::Data => SweepAxis::Data,
        }
    }
}

fn scenario(cli: &Cli) -> Result<fqpsa::simkit::ScenarioConfig> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => String::new(),
    };
    let mut overrides = cli.overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(s) = cli.scheduler {
        let name = match s {
            SchedulerArg::Fqpsa => "fqpsa",
            SchedulerArg::Mlwdf => "mlwdf",
            SchedulerArg::Both => "both",
        };
        overrides.push(("scheduler".into(), name.into()));
    }
    if let Some(q) = cli.quantize {
        overrides.push(("quantize".into(), if matches!(q, Toggle::On) { "on" } else { "off" }.into()));
    }
    let origin = cli.config.as_ref().map_or("defaults".to_string(), |p| p.display().to_string());
    parse_config_with(&text, &overrides).with_context(|| format!("configuration from {origin}"))
}

fn emit(cli: &Cli, table: &ResultTable) -> Result<()> {
    let csv = table.to_csv();
    match &cli.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            print!("{}", table.to_aligned());
        }
        None => {
            print!("{csv}");
            eprint!("{}", table.to_aligned());
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run => {
            let cfg = scenario(cli)?;
            emit(cli, &run_table(&cfg)?)?;
            Ok(true)
        }
        Command::Sweep { axis, values } => {
            let cfg = scenario(cli)?;
            emit(cli, &sweep(&cfg, (*axis).into(), values)?)?;
            Ok(true)
        }
        Command::Selftest { instances } => {
            if *instances == 0 {
                bail!("selftest needs at least one instance");
            }
            let seed = cli.seed.unwrap_or(1);
            let outcomes = selftest(seed, *instances);
            let mut report = String::new();
            for o in &outcomes {
                report.push_str(&format!(
                    "{} {:<26} checked={:<6} failures={:<4} worst={:.3e}\n",
                    if o.passed() { "PASS" } else { "FAIL" },
                    o.name,
                    o.checked,
                    o.failures,
                    o.worst
                ));
            }
            print!("{report}");
            if let Some(path) = &cli.out {
                fs::write(path, &report).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(outcomes.iter().all(|o| o.passed()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

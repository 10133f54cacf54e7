use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tcl_response::harness::{
    self, commitment_sweep, derive_seed, generate_population, montecarlo, montecarlo_csv, run_with_population,
    sweep_csv, ScenarioConfig, Stream,
};
use tcl_response::io::{self as tio, RunSummary};
use tcl_response::Device;

/// Prioritized frequency response from thermostatic loads.
#[derive(Parser, Debug)]
#[command(name = "tclsim", version)]
struct Cli {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(subcommand)]
    command: Command,
}

/// Scenario overrides, applied on top of `--config` in the order listed here,
/// then every `--set` in command-line order.
#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Master seed; every random draw derives from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario TOML file; omitted fields take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Fraction of the guaranteed capacity offered
    #[arg(long, global = true)]
    commitment: Option<f64>,
    /// Commitment tolerance in kW (default: largest committed rating)
    #[arg(long, global = true)]
    tolerance_kw: Option<f64>,
    #[arg(long, global = true)]
    window_s: Option<f64>,
    /// start | middle | end | uniform
    #[arg(long, global = true)]
    placement: Option<String>,
    /// priority | shuffled
    #[arg(long, global = true)]
    allocation: Option<String>,
    #[arg(long, global = true)]
    dt_s: Option<f64>,
    /// tracking | latching
    #[arg(long, global = true)]
    mode: Option<String>,
    /// nadir | average
    #[arg(long, global = true)]
    rmvt: Option<String>,
    #[arg(long, global = true)]
    quality_beta: Option<f64>,
    #[arg(long, global = true)]
    quality_delay_s: Option<f64>,
    #[arg(long, global = true)]
    ac_count: Option<usize>,
    #[arg(long, global = true)]
    ewh_count: Option<usize>,
    /// Replay a recorded `time_s,freq_hz` trace instead of synthetic events
    #[arg(long, global = true)]
    trace_file: Option<PathBuf>,
    /// Any config field by dotted path, e.g. `bands.under_hz=[59.8,59.99]` or
    /// `population.ac.ambient=[85,90]`; values are TOML
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the effective configuration as TOML
    Config,
    /// Draw a population: population CSV
    Generate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fitness of every device for the configured window: fitness CSV
    Fitness {
        #[command(flatten)]
        input: PopulationInput,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select, order and threshold the committed devices: assignment CSV
    Allocate {
        #[command(flatten)]
        input: PopulationInput,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One closed-loop scenario. Writes trace.csv, series.csv,
    /// switches.csv and summary.toml into `--out`, or the summary to stdout
    Simulate {
        #[command(flatten)]
        input: PopulationInput,
        /// Run index selecting the event and shuffle streams
        #[arg(long, default_value_t = 0)]
        run: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean RMVT against commitment level: sweep CSV
    Sweep {
        /// Commitment levels as fractions
        #[arg(long, value_delimiter = ',', default_values_t = default_levels())]
        levels: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean RMVT per window length and event time, both allocation modes
    Montecarlo {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct PopulationInput {
    /// Population CSV from `generate`; drawn from the seed if omitted
    #[arg(long)]
    population: Option<PathBuf>,
}

fn default_levels() -> Vec<f64> {
    (1..=24).map(|i| i as f64 * 0.05).collect()
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let Some(seed) = self.seed else {
            bail!("--seed is required");
        };
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ScenarioConfig::default(),
        };
        cfg.seed = seed;
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        push("runs", self.runs.map(|v| v.to_string()));
        push("commitment", self.commitment.map(toml_float));
        push("tolerance_kw", self.tolerance_kw.map(toml_float));
        push("window_s", self.window_s.map(toml_float));
        push("placement", self.placement.clone());
        push("allocation", self.allocation.clone());
        push("dt_s", self.dt_s.map(toml_float));
        push("mode", self.mode.clone());
        push("rmvt", self.rmvt.clone());
        push("quality_beta", self.quality_beta.map(toml_float));
        push("quality_delay_s", self.quality_delay_s.map(toml_float));
        push("population.ac_count", self.ac_count.map(|v| v.to_string()));
        push("population.ewh_count", self.ewh_count.map(|v| v.to_string()));
        for s in &self.set {
            let (k, v) = s.split_once('=').with_context(|| format!("--set `{s}`: expected KEY=VALUE"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        for (k, v) in &pairs {
            cfg.set(k, v).with_context(|| format!("override `{k}`"))?;
        }
        if let Some(p) = &self.trace_file {
            let period = match &cfg.trace {
                harness::TraceSource::File { period_s, .. } => *period_s,
                _ => None,
            };
            cfg.trace = harness::TraceSource::File { path: p.clone(), period_s: period };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Keeps integral values typed as floats once they reach the TOML parser.
fn toml_float(x: f64) -> String {
    format!("{x:?}")
}

fn population(cfg: &ScenarioConfig, input: &PopulationInput) -> Result<Vec<Device>> {
    match &input.population {
        Some(p) => tio::read_population(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(generate_population(&cfg.population, derive_seed(cfg.seed, Stream::Population, 0))?),
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(out: &Option<PathBuf>, text: &str) -> Result<()> {
    let mut w = sink(out)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // `tclsim ... | head` closes stdout early; that is not a failure
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let io = c.downcast_ref::<io::Error>().or(match c.downcast_ref::<tcl_response::Error>() {
            Some(tcl_response::Error::Io(e)) => Some(e),
            _ => None,
        });
        io.is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.scenario.resolve()?;
    match cli.command {
        Command::Config => write_text(&None, &cfg.to_toml()?)?,
        Command::Generate { out } => {
            let pop = generate_population(&cfg.population, derive_seed(cfg.seed, Stream::Population, 0))?;
            let mut w = sink(&out)?;
            tio::write_population(&mut w, &pop)?;
            w.flush()?;
        }
        Command::Fitness { input, out } => {
            let pop = population(&cfg, &input)?;
            let reports = tcl_response::fitness_table(&pop, cfg.service(), cfg.window_s, &cfg.quality())?;
            let mut w = sink(&out)?;
            tio::write_fitness(&mut w, &reports)?;
            w.flush()?;
        }
        Command::Allocate { input, out } => {
            let pop = population(&cfg, &input)?;
            let assignment = harness::allocate(&cfg, &pop, 0)?.assignment;
            let mut w = sink(&out)?;
            tio::write_assignment(&mut w, &assignment)?;
            w.flush()?;
        }
        Command::Simulate { input, run, out } => {
            let pop = population(&cfg, &input)?;
            let outcome = run_with_population(&cfg, &pop, run)?;
            let mut summary = RunSummary::new(&outcome.result, outcome.assignment.len());
            summary.rmvt = outcome.rmvt;
            let summary = summary.to_toml()?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    tio::write_trace(create(&dir, "trace.csv")?, &outcome.trace)?;
                    tio::write_series(create(&dir, "series.csv")?, &outcome.result)?;
                    tio::write_switch_log(create(&dir, "switches.csv")?, &outcome.result)?;
                    fs::write(dir.join("summary.toml"), summary)?;
                }
                None => write_text(&None, &summary)?,
            }
        }
        Command::Sweep { levels, out } => {
            let rows = commitment_sweep(&cfg, &levels)?;
            write_text(&out, &sweep_csv(&rows))?;
        }
        Command::Montecarlo { out } => {
            let cells = montecarlo(&cfg, cfg.runs)?;
            write_text(&out, &montecarlo_csv(&cells))?;
        }
    }
    Ok(())
}

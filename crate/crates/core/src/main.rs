use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use outage_sim::audit::audit_run;
use outage_sim::config::{is_policy_key, parse_assignment, Config, ConfigError};
use outage_sim::engine::{run_batch, run_paired, Simulation};
use outage_sim::{output, Error};

const EXIT_VALIDATION: u8 = 1;
const EXIT_PROPERTY: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "outage-sim",
    version,
    about = "Payment outage contagion simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run: metrics, merchant and timeline CSVs plus a JSON summary.
    Run(Common),
    /// Independent runs over several seeds.
    Batch(Common),
    /// Baseline against a policy variant on identical seeds.
    Paired(Common),
    /// Audits invariants on full runs and reports each property.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; the built-in baseline when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// A count N (seeds 1..=N) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Policy override KEY=VALUE (substitution.*, merchants.comm_quality).
    #[arg(long, num_args = 1..)]
    variant: Vec<String>,
    #[arg(long)]
    parallel: Option<usize>,
    /// Also write the withdrawal event log.
    #[arg(long)]
    events: bool,
    /// Also write the population and edge-list dumps.
    #[arg(long)]
    dump: bool,
}

enum Failure {
    Validation(String),
    Property(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => Failure::Io(e.to_string()),
            Error::Run { ref source, .. } if matches!(**source, Error::Io(_)) => {
                Failure::Io(e.to_string())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// The configuration text and parsed config, with CLI overrides applied.
struct Loaded {
    source: String,
    config: Config,
}

fn load(args: &Common) -> Result<Loaded, Failure> {
    let source = match &args.config {
        Some(path) => fs::read_to_string(path).map_err(|e| io_err(path, e))?,
        None => Config::baseline().to_toml_string(),
    };
    let mut config = Config::from_toml_str(&source)?;
    if let Some(p) = args.parallel {
        config.run.parallel = p;
    }
    if let Some(s) = args.seed {
        config.run.seed = s;
    }
    if let Some(out) = &args.out {
        config.run.out = out.display().to_string();
    }
    config.run.events |= args.events;
    for w in config.validate()?.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Loaded { source, config })
}

fn seeds(args: &Common, config: &Config) -> Result<Vec<u64>, Failure> {
    let bad = |s: &str| Failure::Validation(format!("--seeds: cannot parse `{s}`"));
    let list = match &args.seeds {
        None => (1..=config.run.seeds as u64).collect(),
        Some(s) if s.contains(',') => s
            .split(',')
            .map(|x| x.trim().parse::<u64>().map_err(|_| bad(x)))
            .collect::<Result<Vec<_>, _>>()?,
        Some(s) => {
            let n: u64 = s.trim().parse().map_err(|_| bad(s))?;
            (1..=n).collect()
        }
    };
    if list.is_empty() {
        return Err(Failure::Validation("--seeds: no seeds".into()));
    }
    Ok(list)
}

fn out_dir(config: &Config) -> Result<PathBuf, Failure> {
    let dir = PathBuf::from(&config.run.out);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| io_err(&path, e))
}

fn cmd_run(args: &Common) -> Result<(), Failure> {
    let Loaded { config, .. } = load(args)?;
    let dir = out_dir(&config)?;
    let sim = Simulation::new(&config, config.run.seed)?;
    output::write_timeline(create(&dir, "timeline.csv")?, sim.timeline())?;
    if args.dump {
        output::write_edges(create(&dir, "edges.csv")?, sim.graph())?;
        output::write_population(create(&dir, "population.csv")?, sim.customers())?;
    }
    let out = sim.run_to_end();
    output::write_metrics(create(&dir, "metrics.csv")?, &out.frames)?;
    output::write_merchants(create(&dir, "merchants.csv")?, &out.frames)?;
    if config.run.events {
        output::write_events(create(&dir, "events.csv")?, &out.events)?;
    }
    output::write_json(create(&dir, "summary.json")?, &out.summary)?;
    let s = &out.summary;
    println!(
        "seed {}: peak outflow {} at t={} (t_min={}), peak avoidance {} at t={}, cumulative fraction {}",
        s.seed,
        s.peak_outflow,
        s.peak_outflow_step,
        s.t_min,
        s.peak_avoidance,
        s.peak_avoidance_step,
        s.cumulative_outflow_fraction
    );
    Ok(())
}

fn cmd_batch(args: &Common) -> Result<(), Failure> {
    let Loaded { config, .. } = load(args)?;
    let seeds = seeds(args, &config)?;
    let dir = out_dir(&config)?;
    let batch = run_batch(&config, &seeds)?;
    output::write_batch(create(&dir, "batch.csv")?, &batch)?;
    output::write_json(create(&dir, "batch_summary.json")?, &batch.stats)?;
    let st = &batch.stats;
    println!(
        "{} runs: delayed peak in {:.0}%, median peak outflow {}, median peak avoidance {}",
        st.runs,
        st.delayed_peak_fraction * 100.0,
        st.peak_outflow.median,
        st.peak_avoidance.median
    );
    Ok(())
}

fn cmd_paired(args: &Common) -> Result<(), Failure> {
    let Loaded { source, config } = load(args)?;
    let mut overrides = Vec::with_capacity(args.variant.len());
    for v in &args.variant {
        let (key, value) = parse_assignment(v)?;
        if !is_policy_key(&key) {
            return Err(Failure::Validation(format!(
                "{key}: not a policy field; paired variants may only set substitution.* or merchants.comm_quality"
            )));
        }
        overrides.push((key, value));
    }
    let mut variant = Config::from_toml_with_overrides(&source, &overrides)?;
    variant.run = config.run.clone();
    let seeds = seeds(args, &config)?;
    let dir = out_dir(&config)?;
    let paired = run_paired(&config, &variant, &seeds)?;
    output::write_paired(create(&dir, "paired.csv")?, &paired)?;
    output::write_json(create(&dir, "paired_summary.json")?, &paired)?;
    println!(
        "{} seeds: median deltas peak avoidance {}, peak outflow {}, cumulative outflow {}",
        paired.deltas.len(),
        paired.median_peak_avoidance_delta,
        paired.median_peak_outflow_delta,
        paired.median_cumulative_outflow_delta
    );
    Ok(())
}

fn cmd_check(args: &Common) -> Result<(), Failure> {
    let Loaded { config, .. } = load(args)?;
    let seeds = match &args.seeds {
        Some(_) => seeds(args, &config)?,
        None => vec![config.run.seed],
    };
    let mut failed = Vec::new();
    for seed in seeds {
        let report = audit_run(&config, seed)?;
        for p in &report.properties {
            let status = if p.passed { "PASS" } else { "FAIL" };
            match &p.detail {
                Some(d) => println!("seed {seed} {status} {}: {d}", p.name),
                None => println!("seed {seed} {status} {}", p.name),
            }
            if !p.passed {
                failed.push(format!("seed {seed}: {}", p.name));
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(failed.join(", ")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Paired(a) => cmd_paired(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Property(m)) => {
            eprintln!("property failures: {m}");
            ExitCode::from(EXIT_PROPERTY)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}

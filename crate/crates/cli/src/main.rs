//! Command-line front end: instances, datasets, single runs, sweeps, plots
//! and optimism audits.
//!
//! Exit status: 0 on success, 1 for invalid input, 2 when a run or sweep
//! cell fails, 3 for file-system errors.

mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use dovi::config::CALIBRATED_BETA_SCALE;
use dovi::experiments::gallery::{gallery, GALLERY};
use dovi::experiments::plot::emit_plots;
use dovi::experiments::sweep::{CellId, SweepOutcome, SweepSpec};
use dovi::experiments::{mode_supported, run_cell, run_sweep, OfflineDataset};
use dovi::mdp::{read_instance, render_instance};
use dovi::report::{AuditCounts, RegretReport};
use dovi::{AlgoConfig, ConfoundedMdp, Error, Mode, ValueCap};

/// Environment variable holding the sweep worker count.
const WORKERS_ENV: &str = "DOVI_WORKERS";

/// Violation budget used by `audit` for its verdict line.
const AUDIT_BUDGET: f64 = 0.05;

#[derive(Parser)]
#[command(name = "dovi", version, about = "Optimistic value iteration with confounded observational data")]
#[command(after_help = "Any long flag may also come from a settings file given with --config FILE \
(one `key = value` per line). Command-line flags override the file.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Built-in instances.
    Gallery {
        #[command(subcommand)]
        action: GalleryAction,
    },
    /// Draw observational episodes under the behavior policy.
    GenData(GenDataArgs),
    /// One learner run on one instance.
    Run(RunArgs),
    /// Every (mode, n, seed) cell of a grid.
    Sweep(SweepArgs),
    /// Regret and information-gain charts from sweep output.
    Plot(PlotArgs),
    /// Optimism check of one run.
    Audit(RunArgs),
}

#[derive(Subcommand)]
enum GalleryAction {
    /// Names and one-line descriptions.
    List,
    /// Print an instance in the instance-file format.
    Show {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenDataArgs {
    /// Gallery name or instance file.
    #[arg(long)]
    instance: String,
    /// Number of episodes.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct AlgoArgs {
    /// Exploration multiplier c.
    #[arg(long, default_value_t = CALIBRATED_BETA_SCALE)]
    beta_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    zeta: f64,
    /// `remaining` or `verbatim`.
    #[arg(long, default_value = "remaining", value_parser = parse_cap)]
    value_cap: ValueCap,
    /// Skip the per-episode optimism audit.
    #[arg(long)]
    no_audit: bool,
}

impl AlgoArgs {
    fn config(&self, mode: Mode, seed: u64, episodes: usize) -> AlgoConfig {
        AlgoConfig {
            lambda: self.lambda,
            beta_scale: self.beta_scale,
            zeta: self.zeta,
            episodes,
            mode,
            seed,
            value_cap: self.value_cap,
            initial_schedule: None,
            audit: !self.no_audit,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Gallery name or instance file.
    #[arg(long)]
    instance: String,
    #[arg(long, value_parser = parse_mode)]
    mode: Mode,
    /// Observational episodes drawn on the fly (ignored with --data).
    #[arg(long, default_value_t = 0)]
    n: usize,
    /// Observational dataset written by gen-data.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Comma-separated initial states cycled over episodes.
    #[arg(long, value_delimiter = ',')]
    initial_states: Option<Vec<usize>>,
    #[command(flatten)]
    algo: AlgoArgs,
    /// Directory for results.csv and friends.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Gallery name.
    #[arg(long)]
    instance: String,
    #[arg(long, value_delimiter = ',', value_parser = parse_mode, required = true)]
    modes: Vec<Mode>,
    #[arg(long, value_delimiter = ',', required = true)]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// `a..b` (half-open) or a comma-separated list.
    #[arg(long)]
    seeds: String,
    /// Comma-separated initial states cycled over episodes.
    #[arg(long, value_delimiter = ',')]
    initial_states: Option<Vec<usize>>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(flatten)]
    algo: AlgoArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    results: PathBuf,
    /// replay.csv from the same sweep; defaults to the one next to the results if present.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_cap(s: &str) -> Result<ValueCap, String> {
    match s {
        "remaining" => Ok(ValueCap::Remaining),
        "verbatim" => Ok(ValueCap::Verbatim),
        other => Err(format!("unknown value cap `{other}`")),
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::Validation(format!("cannot parse seed list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect()
}

enum Failure {
    Validation(String),
    Runtime(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) | Failure::Io(m) => m,
        }
    }

    /// Input-side errors: file trouble is I/O, anything else is invalid input.
    fn input(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Csv { .. } => Failure::Io(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }

    /// Errors raised while a learner runs.
    fn runtime(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Csv { .. } => Failure::Io(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_instance(name: &str) -> Result<ConfoundedMdp, Failure> {
    match gallery(name) {
        Ok(mdp) => Ok(mdp),
        Err(Error::UnknownInstance(_)) if Path::new(name).exists() => {
            let mdp = read_instance(name).map_err(Failure::input)?;
            let problems = mdp.validate();
            if problems.is_empty() {
                Ok(mdp)
            } else {
                let list: Vec<String> = problems.iter().map(ToString::to_string).collect();
                Err(Failure::Validation(format!("invalid instance: {}", list.join("; "))))
            }
        }
        Err(e) => Err(Failure::input(e)),
    }
}

fn main() -> ExitCode {
    let mut args: Vec<String> = std::env::args().collect();
    let prepared = settings::take_config_path(&mut args).and_then(|path| match path {
        None => Ok(()),
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| settings::SettingsError(format!("{path}: {e}")))?;
            let map = settings::parse(&text)?;
            settings::inject(&Cli::command(), &mut args, &map)
        }
    });
    if let Err(settings::SettingsError(msg)) = prepared {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Gallery { action } => gallery_cmd(action),
        Command::GenData(a) => gen_data(a),
        Command::Run(a) => run(a, false),
        Command::Audit(a) => run(a, true),
        Command::Sweep(a) => sweep(a),
        Command::Plot(a) => plot(a),
    }
}

fn gallery_cmd(action: GalleryAction) -> Result<(), Failure> {
    match action {
        GalleryAction::List => {
            for e in GALLERY {
                println!("{:<12} {}", e.name, e.summary);
            }
            Ok(())
        }
        GalleryAction::Show { name, out } => {
            let text = render_instance(&load_instance(&name)?);
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn gen_data(a: GenDataArgs) -> Result<(), Failure> {
    let mdp = load_instance(&a.instance)?;
    let data = OfflineDataset::generate(&mdp, a.n, mdp.mode(), a.seed).map_err(Failure::input)?;
    data.save(&a.out).map_err(Failure::input)?;
    println!("wrote {} episodes to {}", data.len(), a.out.display());
    Ok(())
}

fn run(a: RunArgs, audit_only: bool) -> Result<(), Failure> {
    let mdp = load_instance(&a.instance)?;
    if !mode_supported(a.mode, mdp.mode()) {
        return Err(Failure::Validation(format!(
            "mode {} is not available on {} instance {}",
            a.mode,
            mdp.mode(),
            mdp.name()
        )));
    }
    let data = match &a.data {
        Some(path) => {
            let d = OfflineDataset::load(path).map_err(Failure::input)?;
            d.check_against(&mdp).map_err(Failure::input)?;
            d
        }
        None => OfflineDataset::generate(&mdp, a.n, mdp.mode(), a.seed).map_err(Failure::input)?,
    };
    let mut cfg = a.algo.config(a.mode, a.seed, a.episodes);
    if audit_only {
        cfg.audit = true;
    }
    cfg.initial_schedule = a.initial_states.clone();
    cfg.validate().map_err(Failure::input)?;
    if let Some(states) = &a.initial_states {
        if let Some(&bad) = states.iter().find(|&&s| s >= mdp.n_states()) {
            return Err(Failure::Validation(format!("initial state {bad} is out of range")));
        }
    }
    let report = run_cell(&mdp, a.mode, &data.episodes, &cfg).map_err(Failure::runtime)?;
    if audit_only {
        print_audit(&report);
    } else {
        println!(
            "{} {} n={} seed={} K={} cum_regret={} delta={} beta={}",
            report.instance,
            report.mode,
            data.len(),
            report.seed,
            report.episodes.len(),
            report.cumulative_regret(),
            report.delta.total(),
            report.beta
        );
    }
    if let Some(out) = &a.out {
        let spec = SweepSpec {
            instance: mdp.name().to_string(),
            modes: vec![a.mode],
            ns: vec![data.len()],
            episodes: a.episodes,
            seeds: vec![a.seed],
            algo: cfg,
            workers: 1,
        };
        let outcome = SweepOutcome {
            spec,
            variant: mdp.mode(),
            cells: vec![(
                CellId {
                    mode: a.mode,
                    n: data.len(),
                    seed: a.seed,
                },
                report,
            )],
            failures: Vec::new(),
            replay: Vec::new(),
        };
        outcome.write(out).map_err(Failure::input)?;
    }
    Ok(())
}

fn audit_line(label: &str, c: &AuditCounts) -> bool {
    let ok = c.above_zero_rate() <= AUDIT_BUDGET && c.below_floor_rate() <= AUDIT_BUDGET;
    println!(
        "{label}: checks={} above_zero={} ({:.4}) below_floor={} ({:.4}) {}",
        c.checks,
        c.above_zero,
        c.above_zero_rate(),
        c.below_floor,
        c.below_floor_rate(),
        if ok { "within budget" } else { "over budget" }
    );
    ok
}

fn print_audit(report: &RegretReport) {
    println!(
        "{} {} n={} seed={} K={} beta={}",
        report.instance,
        report.mode,
        report.n_offline,
        report.seed,
        report.episodes.len(),
        report.beta
    );
    audit_line("action values", &report.audit.action);
    if let Some(half) = &report.audit.half {
        audit_line("mediator values", half);
    }
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut algo = a.algo.config(Mode::Dovi, 0, a.episodes);
    algo.initial_schedule = a.initial_states;
    let spec = SweepSpec {
        instance: a.instance,
        modes: a.modes,
        ns: a.ns,
        episodes: a.episodes,
        seeds: parse_seeds(&a.seeds)?,
        algo,
        workers,
    };
    let outcome = run_sweep(&spec).map_err(Failure::input)?;
    let paths = outcome.write(&a.out).map_err(Failure::input)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        for f in &outcome.failures {
            eprintln!("cell {} n={} seed={}: {}", f.cell.mode, f.cell.n, f.cell.seed, f.message);
        }
        Err(Failure::Runtime(format!("{} cell(s) failed", outcome.failures.len())))
    }
}

fn plot(a: PlotArgs) -> Result<(), Failure> {
    if !a.results.exists() {
        return Err(Failure::Io(format!("{}: no such file", a.results.display())));
    }
    let replay = a.replay.clone().or_else(|| {
        let sibling = a.results.with_file_name("replay.csv");
        sibling.exists().then_some(sibling)
    });
    let paths = emit_plots(&a.results, replay.as_deref(), &a.out).map_err(Failure::input)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

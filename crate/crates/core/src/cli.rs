//! Command-line experiment runner.
//!
//! ```text
//! dopsim run      (--scenario PATH | --generate m=3 n=50 [dur=A..B] [w=A..B] [arr=A..B] [tasks=A..B])
//!                 [--policies all] [--seeds A..B | --seed N] [--out PATH] [--dump-trace]
//!                 [--tardiness literal|clamped|both] [--latency TICKS] [--capacity INT]
//! dopsim compare  same flags, plus --pairwise
//! dopsim generate --generate ... [--seed N] [--latency TICKS] [--capacity INT] [--out PATH]
//! ```
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 simulation stall.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use num_rational::Ratio;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{run, EngineError, SimulationTrace};
use crate::metrics::{aggregate, MetricsError};
use crate::policies::PolicyLabel;
use crate::scenario::{
    generate_scenario, render_decimal, write_report, GeneratorParams, ReportRow, ScenarioError,
    ScenarioSpec, TardinessMode,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_STALL: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dopsim",
    version,
    about = "Distributed patient scheduling simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (policy, seed) pair and report per-run and mean metrics.
    Run(RunArgs),
    /// Run and print a comparison table with deltas against FCFS.
    Compare(CompareArgs),
    /// Write a generated scenario document.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["scenario", "generate"]))]
struct SourceArgs {
    /// Scenario document (JSON).
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Generator parameters as key=value tokens: m, n, dur, w, arr, tasks.
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    generate: Option<Vec<String>>,
    /// Message latency in ticks.
    #[arg(long, value_name = "TICKS")]
    latency: Option<u64>,
    /// Fixed capacity of every resource.
    #[arg(long, value_name = "INT")]
    capacity: Option<u32>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Comma-separated subset of fcfs, wspt, dops, dopsg, or `all`.
    #[arg(long, default_value = "all")]
    policies: String,
    /// Inclusive seed range `A..B` (or a single seed).
    #[arg(long, conflicts_with = "seed")]
    seeds: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Summary CSV path; per-run rows go to `<stem>.runs.csv` beside it.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Write line-per-event trace dumps.
    #[arg(long)]
    dump_trace: bool,
    #[arg(long, default_value = "literal")]
    tardiness: String,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also print deltas between every pair of policies.
    #[arg(long)]
    pairwise: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE", required = true)]
    generate: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "TICKS")]
    latency: Option<u64>,
    #[arg(long, value_name = "INT")]
    capacity: Option<u32>,
    /// Destination file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Engine(EngineError::Stall(_)) => EXIT_STALL,
            _ => EXIT_INVALID,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Where scenarios come from.
#[derive(Debug, Clone)]
pub enum Source {
    File(PathBuf),
    Generate(GeneratorParams),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: Source,
    pub policies: Vec<PolicyLabel>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub dump_trace: bool,
    pub tardiness: TardinessMode,
    pub latency: Option<u64>,
    pub capacity: Option<u32>,
}

/// One simulated (policy, seed) pair.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub policy: PolicyLabel,
    pub seed: u64,
    pub row: ReportRow,
    pub trace: SimulationTrace,
}

/// Parses `A..B` (inclusive) or a single integer.
pub fn parse_range<T>(text: &str) -> Result<RangeInclusive<T>, String>
where
    T: FromStr + PartialOrd + Copy + std::fmt::Display,
{
    let parse = |s: &str| {
        s.trim()
            .parse::<T>()
            .map_err(|_| format!("`{s}` is not a valid number"))
    };
    let range = match text.split_once("..") {
        Some((a, b)) => parse(a)?..=parse(b.trim_start_matches('='))?,
        None => {
            let v = parse(text)?;
            v..=v
        }
    };
    if range.start() > range.end() {
        return Err(format!("range `{text}` is empty"));
    }
    Ok(range)
}

/// Parses `--generate` tokens such as `m=3 n=50 dur=5..30`.
pub fn parse_generator(tokens: &[String]) -> Result<GeneratorParams, CliError> {
    let mut m = None;
    let mut n = None;
    let mut params = GeneratorParams::new(1, 0);
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| usage(format!("generator token `{token}` is not KEY=VALUE")))?;
        let bad = |e: String| usage(format!("generator `{key}`: {e}"));
        match key {
            "m" => {
                m = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| bad(format!("`{value}` is not an integer")))?,
                )
            }
            "n" => {
                n = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| bad(format!("`{value}` is not an integer")))?,
                )
            }
            "dur" => params.durations = parse_range(value).map_err(bad)?,
            "w" => params.weights = parse_range(value).map_err(bad)?,
            "arr" => params.arrivals = parse_range(value).map_err(bad)?,
            "tasks" => params.tasks_per_patient = parse_range(value).map_err(bad)?,
            other => {
                return Err(usage(format!(
                    "unknown generator key `{other}` (m, n, dur, w, arr, tasks)"
                )))
            }
        }
    }
    params.resources = m.ok_or_else(|| usage("--generate needs m=INT"))?;
    params.patients = n.ok_or_else(|| usage("--generate needs n=INT"))?;
    Ok(params)
}

/// Parses `fcfs,dopsg` or `all` into report order without duplicates.
pub fn parse_policies(text: &str) -> Result<Vec<PolicyLabel>, CliError> {
    let mut chosen = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if part.eq_ignore_ascii_case("all") {
            chosen.extend(PolicyLabel::ALL);
        } else {
            chosen.push(
                part.parse::<PolicyLabel>()
                    .map_err(|e| usage(e.to_string()))?,
            );
        }
    }
    chosen.sort();
    chosen.dedup();
    if chosen.is_empty() {
        return Err(usage("at least one policy is required"));
    }
    Ok(chosen)
}

impl RunConfig {
    fn from_args(args: RunArgs) -> Result<Self, CliError> {
        let source = match (args.source.scenario, args.source.generate) {
            (Some(path), None) => Source::File(path),
            (None, Some(tokens)) => Source::Generate(parse_generator(&tokens)?),
            _ => return Err(usage("exactly one of --scenario or --generate is required")),
        };
        let seeds: Vec<u64> = match (args.seeds, args.seed) {
            (Some(text), _) => parse_range::<u64>(&text).map_err(usage)?.collect(),
            (None, Some(seed)) => vec![seed],
            (None, None) => vec![0],
        };
        if matches!(source, Source::File(_)) && seeds.len() > 1 {
            return Err(usage(
                "--seeds applies to --generate; a scenario file is run once",
            ));
        }
        Ok(RunConfig {
            source,
            policies: parse_policies(&args.policies)?,
            seeds,
            out: args.out,
            dump_trace: args.dump_trace,
            tardiness: args.tardiness.parse().map_err(usage)?,
            latency: args.source.latency,
            capacity: args.source.capacity,
        })
    }

    /// Scenario for one seed, with overrides applied.
    pub fn scenario(&self, seed: u64) -> Result<ScenarioSpec, CliError> {
        let mut spec = match &self.source {
            Source::File(path) => ScenarioSpec::load(path)?,
            Source::Generate(params) => {
                let mut params = params.clone();
                params.capacity = self.capacity.or(params.capacity);
                if let Some(latency) = self.latency {
                    params.message_latency = latency;
                }
                generate_scenario(&params, seed)?
            }
        };
        if let Some(latency) = self.latency {
            spec.message_latency = latency;
        }
        if let Some(capacity) = self.capacity {
            for r in &mut spec.resources {
                r.fixed_capacity = capacity;
            }
        }
        spec.validate().map_err(ScenarioError::from)?;
        Ok(spec)
    }

    fn label(&self, policy: PolicyLabel) -> String {
        if self.seeds.len() == 1 {
            policy.as_str().to_string()
        } else {
            format!("{} mean({} seeds)", policy, self.seeds.len())
        }
    }
}

/// Runs every (policy, seed) pair. Pairs may run in parallel; results come
/// back ordered by (policy, seed).
pub fn execute(config: &RunConfig) -> Result<Vec<RunResult>, CliError> {
    let scenarios: Vec<(u64, ScenarioSpec)> = config
        .seeds
        .iter()
        .map(|&seed| Ok((seed, config.scenario(seed)?)))
        .collect::<Result<_, CliError>>()?;
    let jobs: Vec<(PolicyLabel, usize)> = config
        .policies
        .iter()
        .flat_map(|&p| (0..scenarios.len()).map(move |i| (p, i)))
        .collect();
    jobs.par_iter()
        .map(|&(policy, i)| {
            let (seed, spec) = &scenarios[i];
            let trace = run(spec, policy)?;
            let report = aggregate(&trace)?;
            let row = ReportRow::from_report(policy, format!("{policy} seed={seed}"), &report);
            Ok(RunResult {
                policy,
                seed: *seed,
                row,
                trace,
            })
        })
        .collect()
}

/// One row per policy: the run itself for a single seed, the mean otherwise.
pub fn summarize(config: &RunConfig, results: &[RunResult]) -> Vec<ReportRow> {
    config
        .policies
        .iter()
        .map(|&policy| {
            let rows: Vec<ReportRow> = results
                .iter()
                .filter(|r| r.policy == policy)
                .map(|r| r.row.clone())
                .collect();
            ReportRow::mean(policy, config.label(policy), &rows)
        })
        .collect()
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}{suffix}"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_outputs(
    config: &RunConfig,
    results: &[RunResult],
    summary: &[ReportRow],
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if let Some(out) = &config.out {
        write_report(summary, out, config.tardiness)?;
        if config.seeds.len() > 1 {
            let rows: Vec<ReportRow> = results.iter().map(|r| r.row.clone()).collect();
            write_report(&rows, sibling(out, ".runs.csv"), config.tardiness)?;
        }
    }
    if config.dump_trace {
        for r in results {
            let dump = r.trace.dump();
            match &config.out {
                Some(out) => {
                    let suffix = format!(
                        ".{}.seed{}.trace",
                        r.policy.as_str().to_ascii_lowercase(),
                        r.seed
                    );
                    write_file(&sibling(out, &suffix), dump.as_bytes())?;
                }
                None => {
                    let text = format!("# trace {} seed={}\n{dump}", r.policy, r.seed);
                    stdout.write_all(text.as_bytes()).map_err(stdout_err)?;
                }
            }
        }
    }
    Ok(())
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source,
    }
}

/// Fixed-width text table of report rows.
pub fn render_table(rows: &[ReportRow], mode: TardinessMode) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let names: Vec<&str> = first.columns(mode).iter().map(|(n, _)| *n).collect();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![r.label.clone()];
            line.extend(r.columns(mode).into_iter().map(|(_, v)| render_decimal(v)));
            line
        })
        .collect();
    let mut header = vec!["policy".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    render_grid(&header, &cells)
}

fn render_grid(header: &[String], cells: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for line in cells {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for line in std::iter::once(header).chain(cells.iter().map(Vec::as_slice)) {
        for (i, (cell, w)) in line.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.push('\n');
    }
    out
}

/// `value` relative to `base` as a signed percentage with one decimal.
pub fn percent_delta(value: Ratio<i128>, base: Ratio<i128>) -> String {
    if base.is_zero() {
        return if value.is_zero() {
            "0.0%".into()
        } else {
            "n/a".into()
        };
    }
    let delta = (value - base) * Ratio::from_integer(1000) / base.abs();
    // tenths of a percent, half away from zero
    let tenths = delta.round().to_integer();
    let sign = if tenths < 0 {
        "-"
    } else if tenths > 0 {
        "+"
    } else {
        ""
    };
    let t = tenths.abs();
    format!("{sign}{}.{}%", t / 10, t % 10)
}

/// Deltas of every row against `base`, one column per metric.
pub fn render_deltas(rows: &[ReportRow], base: &ReportRow, mode: TardinessMode) -> String {
    let base_cols = base.columns(mode);
    let mut header = vec![format!("vs {}", base.policy)];
    header.extend(base_cols.iter().map(|(n, _)| n.to_string()));
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![r.label.clone()];
            line.extend(
                r.columns(mode)
                    .iter()
                    .zip(&base_cols)
                    .map(|((_, v), (_, b))| percent_delta(*v, *b)),
            );
            line
        })
        .collect();
    render_grid(&header, &cells)
}

fn cmd_run(config: &RunConfig, stdout: &mut dyn Write) -> Result<Vec<ReportRow>, CliError> {
    let results = execute(config)?;
    let summary = summarize(config, &results);
    write_outputs(config, &results, &summary, stdout)?;
    Ok(summary)
}

fn run_command(args: RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = RunConfig::from_args(args)?;
    let summary = cmd_run(&config, stdout)?;
    let mut text = String::new();
    if config.seeds.len() > 1 {
        let _ = writeln!(
            text,
            "{} seeds: {}",
            config.seeds.len(),
            seed_span(&config.seeds)
        );
    }
    text.push_str(&render_table(&summary, config.tardiness));
    stdout.write_all(text.as_bytes()).map_err(stdout_err)
}

fn seed_span(seeds: &[u64]) -> String {
    match (seeds.first(), seeds.last()) {
        (Some(a), Some(b)) if a != b => format!("{a}..{b}"),
        (Some(a), _) => a.to_string(),
        _ => String::new(),
    }
}

fn compare_command(args: CompareArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = RunConfig::from_args(args.run)?;
    if config.policies.len() < 2 {
        return Err(usage("compare needs at least two policies"));
    }
    let summary = cmd_run(&config, stdout)?;
    let baseline = summary
        .iter()
        .find(|r| r.policy == PolicyLabel::Fcfs)
        .unwrap_or(&summary[0]);

    let mut text = String::new();
    if config.seeds.len() > 1 {
        let _ = writeln!(
            text,
            "{} seeds: {}",
            config.seeds.len(),
            seed_span(&config.seeds)
        );
    }
    text.push_str(&render_table(&summary, config.tardiness));
    text.push('\n');
    text.push_str(&render_deltas(&summary, baseline, config.tardiness));
    if args.pairwise {
        for base in &summary {
            let others: Vec<ReportRow> = summary
                .iter()
                .filter(|r| r.policy != base.policy)
                .cloned()
                .collect();
            text.push('\n');
            text.push_str(&render_deltas(&others, base, config.tardiness));
        }
    }
    stdout.write_all(text.as_bytes()).map_err(stdout_err)
}

fn generate_command(args: GenerateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut params = parse_generator(&args.generate)?;
    params.capacity = args.capacity;
    if let Some(latency) = args.latency {
        params.message_latency = latency;
    }
    let spec = generate_scenario(&params, args.seed)?;
    match args.out {
        Some(path) => Ok(spec.save(path)?),
        None => stdout
            .write_all(spec.render().as_bytes())
            .map_err(stdout_err),
    }
}

/// Parses `args` (program name first) and runs the command, writing to the
/// given streams. Returns the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let target: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => run_command(args, stdout),
        Command::Compare(args) => compare_command(args, stdout),
        Command::Generate(args) => generate_command(args, stdout),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if let CliError::Engine(EngineError::Stall(report)) = &e {
                for line in &report.resources {
                    let _ = writeln!(stderr, "  {line}");
                }
            }
            e.exit_code()
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run_cli(args, &mut stdout.lock(), &mut stderr.lock());
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(v: i128) -> Ratio<i128> {
        Ratio::from_integer(v)
    }

    #[test]
    fn delta_examples() {
        assert_eq!(percent_delta(ratio(150), ratio(200)), "-25.0%");
        assert_eq!(percent_delta(ratio(200), ratio(200)), "0.0%");
        assert_eq!(percent_delta(ratio(250), ratio(200)), "+25.0%");
        assert_eq!(percent_delta(ratio(0), ratio(0)), "0.0%");
        assert_eq!(percent_delta(ratio(1), ratio(3)), "-66.7%");
        assert_eq!(percent_delta(ratio(5), ratio(-10)), "+150.0%");
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range::<u64>("1..10").unwrap(), 1..=10);
        assert_eq!(parse_range::<u64>("7").unwrap(), 7..=7);
        assert_eq!(parse_range::<u64>("3..=4").unwrap(), 3..=4);
        assert!(parse_range::<u64>("5..2").is_err());
        assert!(parse_range::<u64>("a..2").is_err());
    }

    #[test]
    fn generator_tokens() {
        let tokens: Vec<String> = ["m=3", "n=50", "dur=2..9", "w=1..3", "arr=0..10"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let p = parse_generator(&tokens).unwrap();
        assert_eq!((p.resources, p.patients), (3, 50));
        assert_eq!(p.durations, 2..=9);
        assert_eq!(p.weights, 1..=3);
        assert_eq!(p.arrivals, 0..=10);
        assert!(parse_generator(&["m=3".to_string()]).is_err());
        assert!(
            parse_generator(&["m=3".to_string(), "n=4".to_string(), "q=1".to_string()]).is_err()
        );
    }

    #[test]
    fn policy_lists() {
        assert_eq!(parse_policies("all").unwrap(), PolicyLabel::ALL.to_vec());
        assert_eq!(
            parse_policies("dopsg,FCFS").unwrap(),
            vec![PolicyLabel::Fcfs, PolicyLabel::Dopsg]
        );
        assert_eq!(
            parse_policies("wspt,wspt").unwrap(),
            vec![PolicyLabel::Wspt]
        );
        assert!(parse_policies("").is_err());
        assert!(parse_policies("edd").is_err());
    }

    #[test]
    fn stalls_map_to_exit_two() {
        let stall = EngineError::Stall(Box::new(crate::engine::StallReport {
            tick: 9,
            reason: "test".into(),
            unfinished: Vec::new(),
            resources: Vec::new(),
        }));
        assert_eq!(CliError::from(stall).exit_code(), EXIT_STALL);
        assert_eq!(usage("x").exit_code(), EXIT_INVALID);
    }
}

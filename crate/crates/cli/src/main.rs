//! Command-line front end: replay event logs through the engine, evaluate
//! filters over snapshots, inspect outputs, and generate fixture logs.
//!
//! Exit codes: 0 success, 1 I/O or malformed data, 2 user error
//! (configuration or filter).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use tigris::analysis::{evaluate_filter, group, GroupingTable, DEFAULT_SIGMA_K};
use tigris::config::{load_config, ConfigError};
use tigris::dsl::parse_filter;
use tigris::engine::{replay, Engine, EngineError, ReplaySummary};
use tigris::fixtures::{self, Fixture, FixtureOptions};
use tigris::io::{
    read_event_log, read_snapshot_file, write_event_log, CycleReport, FileSink, IoError,
    TraceEntry,
};
use tigris::metrics::{EventRecord, MetricsError};

#[derive(Parser)]
#[command(name = "tigris", version, about = "Two-phase adaptive monitoring engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a JSONL event log through the engine, writing traces,
    /// per-cycle reports and a summary
    Replay {
        /// Configuration file (key = value lines)
        #[arg(long)]
        config: PathBuf,
        /// Input event log (.jsonl)
        #[arg(long)]
        input: PathBuf,
        /// Output directory for traces.jsonl, reports.jsonl, summary.json
        #[arg(long)]
        out: PathBuf,
        /// Override the configured sampling rate
        #[arg(long)]
        rate: Option<f64>,
        /// Override the configured analysis delay (seconds)
        #[arg(long)]
        delay: Option<u64>,
    },
    /// Group a snapshot file and evaluate a relevance filter over it
    FilterEval {
        /// Filter text, e.g. "(more frequent U most expensive) & least changeable"
        filter: String,
        /// Snapshot JSON file with values and bindings
        #[arg(long)]
        input: PathBuf,
    },
    /// Summarize a JSONL event-log, trace, or report file
    Inspect {
        #[arg(long)]
        input: PathBuf,
    },
    /// Generate a bundled fixture event log and its matching config
    GenFixture {
        /// running-example, workload-shift, or uniform
        #[arg(long)]
        fixture: String,
        /// Output directory for events.jsonl and config.properties
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Event count (uniform fixture)
        #[arg(long, default_value_t = 1000)]
        events: usize,
        /// Distinct event types (uniform fixture)
        #[arg(long = "types", default_value_t = 10)]
        event_types: usize,
    },
}

struct CliError {
    code: i32,
    message: String,
}

fn user_error(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

fn io_error(message: impl Into<String>) -> CliError {
    CliError {
        code: 1,
        message: message.into(),
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => io_error(format!("config: {e}")),
            _ => user_error(format!("config: {e}")),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(_) => io_error(e.to_string()),
            _ => user_error(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        io_error(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => c.into(),
            EngineError::Metrics(m) => m.into(),
            EngineError::Io(i) => i.into(),
            EngineError::Analysis(_) | EngineError::Sampling(_) | EngineError::InvalidDelay => {
                user_error(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        io_error(e.to_string())
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Replay {
            config,
            input,
            out,
            rate,
            delay,
        } => cmd_replay(&config, &input, &out, rate, delay),
        Command::FilterEval { filter, input } => cmd_filter_eval(&filter, &input),
        Command::Inspect { input } => cmd_inspect(&input),
        Command::GenFixture {
            fixture,
            out,
            seed,
            events,
            event_types,
        } => cmd_gen_fixture(&fixture, &out, seed, events, event_types),
    }
}

fn cmd_replay(
    config_path: &Path,
    input: &Path,
    out: &Path,
    rate: Option<f64>,
    delay: Option<u64>,
) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let engine = Engine::new(config)?;
    if let Some(rate) = rate {
        engine
            .set_sampling_rate(rate)
            .map_err(|e| user_error(e.to_string()))?;
    }
    if let Some(delay) = delay {
        engine.set_analysis_delay(delay)?;
    }

    std::fs::create_dir_all(out)?;
    let mut sink = FileSink::create(out.join("traces.jsonl"), out.join("reports.jsonl"))?;
    let records = read_event_log(input)?;
    let summary = replay(&engine, records, &mut sink)?;

    let summary_json =
        serde_json::to_string_pretty(&summary).map_err(|e| io_error(e.to_string()))?;
    std::fs::write(out.join("summary.json"), summary_json + "\n")?;

    if summary.empty_log {
        eprintln!("warning: event log is empty; no cycles were run");
    }
    print_summary(&summary);
    Ok(())
}

fn print_summary(summary: &ReplaySummary) {
    println!(
        "events: {} read, {} dropped by scan patterns",
        summary.events_read, summary.events_dropped
    );
    println!(
        "cycles: {} (relevant-set sizes: {:?})",
        summary.cycles_run, summary.relevant_set_sizes
    );
    println!("traces emitted: {}", summary.traces_emitted);
    println!("relevant after final cycle: {:?}", summary.final_selected);
    for (id, t) in &summary.per_type {
        println!(
            "  {id}: {} occurrences while relevant, {} traces (achieved rate {:.4})",
            t.occurrences_while_relevant, t.traces, t.achieved_rate
        );
    }
}

fn cmd_filter_eval(filter_text: &str, input: &Path) -> Result<(), CliError> {
    let filter = match parse_filter(filter_text) {
        Ok(f) => f,
        Err(e) => {
            // echo the filter with a caret under the offending column
            let caret = " ".repeat(e.position);
            return Err(user_error(format!(
                "{e}\n  {filter_text}\n  {caret}^\n  expected: {}",
                e.expected.join(", ")
            )));
        }
    };
    let file = read_snapshot_file(input)?;
    let snapshot = file.snapshot();
    let sigma_k = file.sigma_k.unwrap_or(DEFAULT_SIGMA_K);
    let table =
        group(&snapshot, &file.bindings, sigma_k).map_err(|e| user_error(e.to_string()))?;
    print_grouping(&table);
    let selected = evaluate_filter(&filter, &table).map_err(|e| user_error(e.to_string()))?;
    println!("relevant set ({}):", selected.len());
    for id in &selected {
        println!("  {id}");
    }
    Ok(())
}

fn print_grouping(table: &GroupingTable) {
    for g in table.iter() {
        let verdict = match g.normality {
            Some(n) => format!(
                "KS D={:.4}, p={:.4} -> {}",
                n.statistic,
                n.p_value,
                if n.is_normal { "normal" } else { "not normal" }
            ),
            None => "sample too small or degenerate".to_string(),
        };
        println!(
            "criterion {} via {} ({:?}, {:?}; {verdict})",
            g.criterion, g.metric, g.direction, g.strategy
        );
        for (id, band) in &g.bands {
            println!("  {:<6} {id}", band.label());
        }
    }
}

fn cmd_inspect(input: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)?;
    let mut reports: Vec<CycleReport> = Vec::new();
    let mut traces: Vec<TraceEntry> = Vec::new();
    let mut events: Vec<EventRecord> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Ok(r) = serde_json::from_str::<CycleReport>(line) {
            reports.push(r);
        } else if let Ok(t) = serde_json::from_str::<TraceEntry>(line) {
            traces.push(t);
        } else if let Ok(e) = serde_json::from_str::<EventRecord>(line) {
            events.push(e);
        } else {
            return Err(io_error(format!(
                "line {}: not a cycle report, trace, or event record",
                idx + 1
            )));
        }
    }

    if !reports.is_empty() {
        println!("{} cycle reports", reports.len());
        for r in &reports {
            println!(
                "  cycle {}: {} selected (+{} / -{}), {} traces since previous{}",
                r.cycle_index,
                r.selected.len(),
                r.added.len(),
                r.removed.len(),
                r.traces_since_previous,
                if r.empty_registry {
                    " [empty registry]"
                } else {
                    ""
                }
            );
        }
    }
    if !traces.is_empty() {
        println!("{} traces", traces.len());
        let mut per_type: BTreeMap<&str, (u64, u64, u64)> = BTreeMap::new();
        for t in &traces {
            let entry = per_type.entry(&t.event_type_id).or_insert((0, u64::MAX, 0));
            entry.0 += 1;
            entry.1 = entry.1.min(t.occurrence_index);
            entry.2 = entry.2.max(t.occurrence_index);
        }
        for (id, (count, min_occ, max_occ)) in per_type {
            println!("  {id}: {count} traces, occurrences {min_occ}..{max_occ}");
        }
    }
    if !events.is_empty() {
        println!("{} events", events.len());
        let mut per_type: BTreeMap<&str, u64> = BTreeMap::new();
        for e in &events {
            *per_type.entry(&e.event_type_id).or_insert(0) += 1;
        }
        let span_start = events.first().map(|e| e.timestamp_ns).unwrap_or(0);
        let span_end = events.last().map(|e| e.timestamp_ns).unwrap_or(0);
        println!(
            "  span: {:.3} s across {} event types",
            (span_end - span_start) as f64 / 1e9,
            per_type.len()
        );
        for (id, count) in per_type {
            println!("  {id}: {count}");
        }
    }
    if reports.is_empty() && traces.is_empty() && events.is_empty() {
        println!("empty file");
    }
    Ok(())
}

fn cmd_gen_fixture(
    fixture: &str,
    out: &Path,
    seed: u64,
    events: usize,
    event_types: usize,
) -> Result<(), CliError> {
    let fixture: Fixture = fixture
        .parse()
        .map_err(|e: tigris::fixtures::UnknownFixture| user_error(e.to_string()))?;
    let options = FixtureOptions {
        seed,
        events,
        event_types,
    };
    let generated = fixtures::generate(fixture, &options);
    std::fs::create_dir_all(out)?;
    let log_path = out.join("events.jsonl");
    let config_path = out.join("config.properties");
    write_event_log(&log_path, &generated.events)?;
    std::fs::write(&config_path, &generated.config_text)?;
    println!(
        "{}: {} events -> {} (config: {})",
        fixture.name(),
        generated.events.len(),
        log_path.display(),
        config_path.display()
    );
    Ok(())
}

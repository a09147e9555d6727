//! Deterministic, seeded event-log generators used by tests, benchmarks
//! and the `gen-fixture` CLI command. Each fixture comes with a matching
//! configuration so a generated log can be replayed directly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::NANOS_PER_SECOND;
use crate::metrics::EventRecord;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown fixture '{0}' (expected running-example, workload-shift, or uniform)")]
pub struct UnknownFixture(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    RunningExample,
    WorkloadShift,
    Uniform,
}

impl std::str::FromStr for Fixture {
    type Err = UnknownFixture;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "running-example" => Ok(Fixture::RunningExample),
            "workload-shift" => Ok(Fixture::WorkloadShift),
            "uniform" => Ok(Fixture::Uniform),
            other => Err(UnknownFixture(other.to_string())),
        }
    }
}

impl Fixture {
    pub fn name(self) -> &'static str {
        match self {
            Fixture::RunningExample => "running-example",
            Fixture::WorkloadShift => "workload-shift",
            Fixture::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureOptions {
    pub seed: u64,
    /// Event count for the uniform fixture.
    pub events: usize,
    /// Distinct event types for the uniform fixture.
    pub event_types: usize,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions {
            seed: 42,
            events: 1000,
            event_types: 10,
        }
    }
}

/// A generated log plus the configuration text that replays it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFixture {
    pub events: Vec<EventRecord>,
    pub config_text: String,
}

pub fn generate(fixture: Fixture, options: &FixtureOptions) -> GeneratedFixture {
    match fixture {
        Fixture::RunningExample => running_example(options.seed),
        Fixture::WorkloadShift => workload_shift(options.seed),
        Fixture::Uniform => uniform(options.seed, options.events, options.event_types),
    }
}

/// The five pet-clinic methods with their target per-phase statistics:
/// (id, calls, constant duration ns, return-size population stddev).
pub const RUNNING_EXAMPLE_METHODS: [(&str, u64, u64, u64); 5] = [
    ("ClinicService.findOwner(args)", 12, 180, 6),
    ("ClinicService.updateOwner(args)", 2, 500, 0),
    ("VisitController.newVisit(args)", 50, 250, 12),
    ("ClinicService.findVets()", 200, 300, 200),
    ("OwnerRepository.findAll()", 100, 200, 90),
];

pub const RUNNING_EXAMPLE_DELAY_S: u64 = 120;
pub const RUNNING_EXAMPLE_CRITERIA: &str =
    "(more frequent U most expensive) & least changeable";

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn sort_stream(events: &mut [EventRecord]) {
    events.sort_by(|a, b| {
        a.timestamp_ns
            .cmp(&b.timestamp_ns)
            .then_with(|| a.event_type_id.cmp(&b.event_type_id))
    });
}

/// One phase of the running example: each method's calls are spread evenly
/// across the phase, durations are the target mean exactly, and return
/// sizes alternate 0 and twice the target stddev (counts are even, so the
/// population stddev is hit exactly).
fn running_example_phase(phase_start_ns: u64, phase_ns: u64, digest_seed: &mut u64) -> Vec<EventRecord> {
    let mut events = Vec::new();
    for (id, count, duration, sigma) in RUNNING_EXAMPLE_METHODS {
        let step = phase_ns / count;
        for j in 0..count {
            let mut ev = EventRecord::new(id, phase_start_ns + j * step, duration);
            ev.return_size_bytes = if j % 2 == 0 { 0 } else { 2 * sigma };
            ev.input_digest = splitmix(digest_seed);
            events.push(ev);
        }
    }
    sort_stream(&mut events);
    events
}

/// Two identical phases separated by the analysis boundary. The first
/// cycle therefore groups exactly the per-phase statistics, and the second
/// phase streams while the selection is active; doubling every count
/// preserves all band labels, so the final snapshot groups identically.
fn running_example(seed: u64) -> GeneratedFixture {
    let phase_ns = RUNNING_EXAMPLE_DELAY_S * NANOS_PER_SECOND;
    let mut digest_seed = seed;
    let mut events = running_example_phase(0, phase_ns, &mut digest_seed);
    events.extend(running_example_phase(phase_ns, phase_ns, &mut digest_seed));
    let config_text = format!(
        r#"criteria = "{RUNNING_EXAMPLE_CRITERIA}"
samplingPercentage = 0.5
analysisFixedDelay = {RUNNING_EXAMPLE_DELAY_S}
frequencyMetric = INVOCATION_FREQUENCY
expensivenessMetric = EXECUTION_TIME
changeabilityMetric = COMPUTATION_PATTERN
"#
    );
    GeneratedFixture {
        events,
        config_text,
    }
}

pub const WORKLOAD_SHIFT_SEGMENT_S: u64 = 60;
pub const WORKLOAD_SHIFT_TYPES: usize = 8;

/// Per-segment call counts: a baseline of 10+i calls per type plus one
/// rotating dominant spike (t0 in segment 0, t1 in segment 1, t2 in
/// segment 2). Spike magnitudes grow so each spike dominates the
/// cumulative counts of its cycle, moving the top frequency band every
/// cycle.
fn workload_shift_counts(segment: usize, type_index: usize) -> u64 {
    let baseline = 10 + type_index as u64;
    let spike = match (segment, type_index) {
        (0, 0) => 90,
        (1, 1) => 290,
        (2, 2) => 590,
        _ => 0,
    };
    baseline + spike
}

fn workload_shift(seed: u64) -> GeneratedFixture {
    let segment_ns = WORKLOAD_SHIFT_SEGMENT_S * NANOS_PER_SECOND;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut digest_seed = seed ^ 0xabcdef;
    let mut events = Vec::new();
    for segment in 0..3 {
        let start = segment as u64 * segment_ns;
        let mut segment_events = Vec::new();
        for t in 0..WORKLOAD_SHIFT_TYPES {
            let id = format!("shop.Service{t}.handle()");
            let count = workload_shift_counts(segment, t);
            let step = segment_ns / count;
            for j in 0..count {
                let mut ev = EventRecord::new(
                    id.clone(),
                    start + j * step,
                    rng.random_range(50_000..500_000),
                );
                ev.return_size_bytes = rng.random_range(16..4096);
                ev.input_digest = splitmix(&mut digest_seed);
                ev.active_threads = rng.random_range(1..16);
                segment_events.push(ev);
            }
        }
        sort_stream(&mut segment_events);
        events.extend(segment_events);
    }
    let config_text = format!(
        r#"criteria = "most frequent"
samplingPercentage = 0.5
analysisFixedDelay = {WORKLOAD_SHIFT_SEGMENT_S}
frequencyMetric = INVOCATION_FREQUENCY
"#
    );
    GeneratedFixture {
        events,
        config_text,
    }
}

/// Uniformly mixed traffic across `event_types` types; useful as neutral
/// load for sampling and precision checks.
fn uniform(seed: u64, events: usize, event_types: usize) -> GeneratedFixture {
    let types = event_types.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut digest_seed = seed ^ 0x5eed;
    let mut out = Vec::with_capacity(events);
    for i in 0..events {
        let t = rng.random_range(0..types);
        let mut ev = EventRecord::new(
            format!("app.Component{t}.run()"),
            i as u64 * 1_000_000,
            rng.random_range(10_000..1_000_000),
        );
        ev.return_size_bytes = rng.random_range(8..65536);
        ev.input_digest = splitmix(&mut digest_seed);
        ev.active_threads = rng.random_range(1..8);
        if rng.random_range(0..10) == 0 {
            ev.session_id = Some(format!("session{}", rng.random_range(0..50)));
        }
        ev.raised_error = rng.random_range(0..100) == 0;
        out.push(ev);
    }
    let config_text = r#"criteria = "more frequent U more expensive"
samplingPercentage = 0.5
analysisFixedDelay = 60
frequencyMetric = INVOCATION_FREQUENCY
expensivenessMetric = EXECUTION_TIME
"#
    .to_string();
    GeneratedFixture {
        events: out,
        config_text,
    }
}

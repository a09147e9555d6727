//! Coarse-grained phase: one lightweight in-memory estimator per configured
//! metric per event type, advanced on every admitted event.
//!
//! Estimators are single scalars (counters, online means, an online
//! standard deviation, a distinct-session count) so per-event work is
//! constant and no value history is retained. Mean and spread use the
//! incremental Welford recurrence.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use dashmap::DashMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default cap on the distinct-session set per event type; beyond it the
/// count saturates and a warning is logged.
pub const DEFAULT_SESSION_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid event record: {0}")]
    InvalidRecord(String),
    #[error("no events recorded")]
    EmptyRegistry,
    #[error("malformed static-metric csv at line {line}: {detail}")]
    MalformedCsv { line: u64, detail: String },
    #[error("duplicate static metric for ({event_type}, {metric_name})")]
    DuplicateKey {
        event_type: String,
        metric_name: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One observed execution event: the unit of ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_type_id: String,
    pub timestamp_ns: u64,
    pub duration_ns: u64,
    pub return_size_bytes: u64,
    pub input_digest: u64,
    pub active_threads: u32,
    pub raised_error: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_estimate: Option<f64>,
}

impl EventRecord {
    /// Minimal record; remaining fields default to zero/absent.
    pub fn new(event_type_id: impl Into<String>, timestamp_ns: u64, duration_ns: u64) -> Self {
        EventRecord {
            event_type_id: event_type_id.into(),
            timestamp_ns,
            duration_ns,
            return_size_bytes: 0,
            input_digest: 0,
            active_threads: 1,
            raised_error: false,
            session_id: None,
            memory_bytes: None,
            energy_estimate: None,
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.event_type_id.is_empty() {
            return Err(MetricsError::InvalidRecord(
                "event_type_id must be non-empty".into(),
            ));
        }
        if self.active_threads < 1 {
            return Err(MetricsError::InvalidRecord(
                "active_threads must be >= 1".into(),
            ));
        }
        if let Some(e) = self.energy_estimate {
            if !e.is_finite() || e < 0.0 {
                return Err(MetricsError::InvalidRecord(
                    "energy_estimate must be a non-negative finite number".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Welford accumulator: count, mean and the sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OnlineStats {
    count: u64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl OnlineStats {
    pub fn new() -> Self {
        OnlineStats::default()
    }

    /// Advance the accumulator by one sample.
    pub fn update(&mut self, x: f64) -> Result<(), MetricsError> {
        if x.is_nan() {
            return Err(MetricsError::InvalidSample("NaN sample rejected".into()));
        }
        if self.count == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        // Welford keeps m2 >= 0 analytically; guard the float edge anyway.
        if self.m2 < 0.0 {
            self.m2 = 0.0;
        }
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sum of squared deviations from the running mean.
    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Population variance (divide by count); 0 for an empty accumulator.
    pub fn population_variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn population_stddev(&self) -> f64 {
        self.population_variance().sqrt()
    }

    pub fn min(&self) -> Option<f64> {
        (self.count > 0).then_some(self.min)
    }

    pub fn max(&self) -> Option<f64> {
        (self.count > 0).then_some(self.max)
    }
}

/// The metric estimations maintained per event type. Each kind defines one
/// estimator shape.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    ConcurrencyLevel,
    ComputationPattern,
    EnergyConsumption,
    ErrorLevel,
    ExecutionTime,
    InterArrivalTime,
    InvocationFrequency,
    MemoryConsumption,
    UserBehavior,
    /// Looked up from the static source-metric table by name.
    StaticMetric(String),
}

impl MetricKind {
    fn as_str(&self) -> String {
        match self {
            MetricKind::ConcurrencyLevel => "concurrency_level".into(),
            MetricKind::ComputationPattern => "computation_pattern".into(),
            MetricKind::EnergyConsumption => "energy_consumption".into(),
            MetricKind::ErrorLevel => "error_level".into(),
            MetricKind::ExecutionTime => "execution_time".into(),
            MetricKind::InterArrivalTime => "inter_arrival_time".into(),
            MetricKind::InvocationFrequency => "invocation_frequency".into(),
            MetricKind::MemoryConsumption => "memory_consumption".into(),
            MetricKind::UserBehavior => "user_behavior".into(),
            MetricKind::StaticMetric(name) => format!("static:{name}"),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown metric name '{0}'")]
pub struct UnknownMetric(pub String);

impl FromStr for MetricKind {
    type Err = UnknownMetric;

    /// Accepts snake_case names, the `Metrics.UPPER_SNAKE` spelling used in
    /// annotation-style configs, and `static:<name>` for static metrics.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let lowered = trimmed
            .strip_prefix("Metrics.")
            .unwrap_or(trimmed)
            .to_lowercase();
        if let Some(name) = lowered.strip_prefix("static:") {
            let name = name.trim();
            if name.is_empty() {
                return Err(UnknownMetric(s.to_string()));
            }
            return Ok(MetricKind::StaticMetric(name.to_string()));
        }
        match lowered.as_str() {
            "concurrency_level" => Ok(MetricKind::ConcurrencyLevel),
            "computation_pattern" => Ok(MetricKind::ComputationPattern),
            "energy_consumption" => Ok(MetricKind::EnergyConsumption),
            "error_level" => Ok(MetricKind::ErrorLevel),
            "execution_time" => Ok(MetricKind::ExecutionTime),
            "inter_arrival_time" => Ok(MetricKind::InterArrivalTime),
            "invocation_frequency" => Ok(MetricKind::InvocationFrequency),
            "memory_consumption" => Ok(MetricKind::MemoryConsumption),
            "user_behavior" => Ok(MetricKind::UserBehavior),
            _ => Err(UnknownMetric(s.to_string())),
        }
    }
}

impl Serialize for MetricKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&self.as_str())
    }
}

impl<'de> Deserialize<'de> for MetricKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-event-type bundle of estimators. Only the kinds configured on the
/// registry are advanced.
#[derive(Debug, Default)]
struct EventTypeStats {
    invocations: u64,
    errors: u64,
    execution_time: OnlineStats,
    computation_pattern: OnlineStats,
    concurrency: OnlineStats,
    inter_arrival: OnlineStats,
    memory: OnlineStats,
    energy: OnlineStats,
    sessions: HashSet<String>,
    sessions_saturated: bool,
    last_timestamp_ns: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Enabled {
    frequency: bool,
    error_level: bool,
    execution_time: bool,
    computation_pattern: bool,
    concurrency: bool,
    inter_arrival: bool,
    memory: bool,
    energy: bool,
    user_behavior: bool,
}

/// Concurrent registry of per-event-type estimators.
///
/// `record` may be called from many producer threads; updates to one event
/// type are atomic (guarded by the map shard). `snapshot` may run while
/// recording continues and observes, per event type, a consistent prefix of
/// its update sequence; skew across event types is tolerated.
pub struct StatsRegistry {
    enabled: Enabled,
    static_names: Vec<String>,
    session_cap: usize,
    stats: DashMap<String, EventTypeStats>,
    events_recorded: AtomicU64,
    latest_timestamp_ns: AtomicU64,
}

impl StatsRegistry {
    pub fn new(kinds: impl IntoIterator<Item = MetricKind>, session_cap: usize) -> Self {
        let mut enabled = Enabled::default();
        let mut static_names = Vec::new();
        for kind in kinds {
            match kind {
                MetricKind::InvocationFrequency => enabled.frequency = true,
                MetricKind::ErrorLevel => enabled.error_level = true,
                MetricKind::ExecutionTime => enabled.execution_time = true,
                MetricKind::ComputationPattern => enabled.computation_pattern = true,
                MetricKind::ConcurrencyLevel => enabled.concurrency = true,
                MetricKind::InterArrivalTime => enabled.inter_arrival = true,
                MetricKind::MemoryConsumption => enabled.memory = true,
                MetricKind::EnergyConsumption => enabled.energy = true,
                MetricKind::UserBehavior => enabled.user_behavior = true,
                MetricKind::StaticMetric(name) => static_names.push(name),
            }
        }
        static_names.sort();
        static_names.dedup();
        StatsRegistry {
            enabled,
            static_names,
            session_cap,
            stats: DashMap::new(),
            events_recorded: AtomicU64::new(0),
            latest_timestamp_ns: AtomicU64::new(0),
        }
    }

    /// All Table-style estimators enabled; convenient for tests and tools.
    pub fn with_all_metrics() -> Self {
        StatsRegistry::new(
            [
                MetricKind::InvocationFrequency,
                MetricKind::ErrorLevel,
                MetricKind::ExecutionTime,
                MetricKind::ComputationPattern,
                MetricKind::ConcurrencyLevel,
                MetricKind::InterArrivalTime,
                MetricKind::MemoryConsumption,
                MetricKind::EnergyConsumption,
                MetricKind::UserBehavior,
            ],
            DEFAULT_SESSION_CAP,
        )
    }

    pub fn is_empty(&self) -> bool {
        self.events_recorded.load(Ordering::Acquire) == 0
    }

    pub fn events_recorded(&self) -> u64 {
        self.events_recorded.load(Ordering::Acquire)
    }

    pub fn event_type_count(&self) -> usize {
        self.stats.len()
    }

    /// Advance every configured estimator for this event exactly once.
    pub fn record(&self, event: &EventRecord) -> Result<(), MetricsError> {
        event.validate()?;
        let mut entry = self.stats.entry(event.event_type_id.clone()).or_default();
        let s = entry.value_mut();

        if self.enabled.frequency {
            s.invocations += 1;
        }
        if self.enabled.error_level && event.raised_error {
            s.errors += 1;
        }
        if self.enabled.execution_time {
            s.execution_time.update(event.duration_ns as f64)?;
        }
        if self.enabled.computation_pattern {
            s.computation_pattern.update(event.return_size_bytes as f64)?;
        }
        if self.enabled.concurrency {
            s.concurrency.update(event.active_threads as f64)?;
        }
        if self.enabled.inter_arrival {
            if let Some(prev) = s.last_timestamp_ns {
                let delta = event.timestamp_ns.saturating_sub(prev);
                s.inter_arrival.update(delta as f64)?;
            }
            s.last_timestamp_ns = Some(event.timestamp_ns);
        }
        if self.enabled.memory {
            if let Some(m) = event.memory_bytes {
                s.memory.update(m as f64)?;
            }
        }
        if self.enabled.energy {
            if let Some(e) = event.energy_estimate {
                s.energy.update(e)?;
            }
        }
        if self.enabled.user_behavior {
            if let Some(session) = &event.session_id {
                if s.sessions.len() >= self.session_cap {
                    if !s.sessions_saturated && !s.sessions.contains(session) {
                        s.sessions_saturated = true;
                        log::warn!(
                            "distinct-session set for '{}' reached cap {}; count saturates",
                            event.event_type_id,
                            self.session_cap
                        );
                    }
                } else {
                    s.sessions.insert(session.clone());
                }
            }
        }
        drop(entry);

        self.events_recorded.fetch_add(1, Ordering::AcqRel);
        self.latest_timestamp_ns
            .fetch_max(event.timestamp_ns, Ordering::AcqRel);
        Ok(())
    }

    /// Point-in-time copy of one scalar per (event type, configured metric).
    /// Estimators with no defined value (inter-arrival with < 2 events,
    /// absent optional fields, missing static rows) are omitted for that
    /// event type.
    pub fn snapshot(&self, statics: Option<&StaticMetrics>) -> Result<MetricSnapshot, MetricsError> {
        if self.is_empty() {
            return Err(MetricsError::EmptyRegistry);
        }
        let mut values: BTreeMap<String, BTreeMap<MetricKind, f64>> = BTreeMap::new();
        for entry in self.stats.iter() {
            let (id, s) = (entry.key(), entry.value());
            let mut per_metric = BTreeMap::new();
            if self.enabled.frequency {
                per_metric.insert(MetricKind::InvocationFrequency, s.invocations as f64);
            }
            if self.enabled.error_level {
                per_metric.insert(MetricKind::ErrorLevel, s.errors as f64);
            }
            if self.enabled.execution_time && s.execution_time.count() > 0 {
                per_metric.insert(MetricKind::ExecutionTime, s.execution_time.mean());
            }
            if self.enabled.computation_pattern && s.computation_pattern.count() > 0 {
                per_metric.insert(
                    MetricKind::ComputationPattern,
                    s.computation_pattern.population_stddev(),
                );
            }
            if self.enabled.concurrency && s.concurrency.count() > 0 {
                per_metric.insert(MetricKind::ConcurrencyLevel, s.concurrency.mean());
            }
            if self.enabled.inter_arrival && s.inter_arrival.count() > 0 {
                per_metric.insert(MetricKind::InterArrivalTime, s.inter_arrival.mean());
            }
            if self.enabled.memory && s.memory.count() > 0 {
                per_metric.insert(MetricKind::MemoryConsumption, s.memory.mean());
            }
            if self.enabled.energy && s.energy.count() > 0 {
                per_metric.insert(MetricKind::EnergyConsumption, s.energy.mean());
            }
            if self.enabled.user_behavior && !s.sessions.is_empty() {
                per_metric.insert(MetricKind::UserBehavior, s.sessions.len() as f64);
            }
            if let Some(table) = statics {
                for name in &self.static_names {
                    if let Some(v) = table.lookup(id, name) {
                        per_metric.insert(MetricKind::StaticMetric(name.clone()), v);
                    }
                }
            }
            values.insert(id.clone(), per_metric);
        }
        Ok(MetricSnapshot {
            taken_at_ns: self.latest_timestamp_ns.load(Ordering::Acquire),
            values,
        })
    }
}

/// Immutable point-in-time scalar per (event type, metric). Analysis
/// operates only on snapshots, never on live estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub taken_at_ns: u64,
    pub values: BTreeMap<String, BTreeMap<MetricKind, f64>>,
}

impl MetricSnapshot {
    pub fn event_type_count(&self) -> usize {
        self.values.len()
    }

    /// All (event type, value) pairs defined for a metric, in id order.
    pub fn metric_values<'a>(&'a self, kind: &MetricKind) -> Vec<(&'a str, f64)> {
        self.values
            .iter()
            .filter_map(|(id, per)| per.get(kind).map(|v| (id.as_str(), *v)))
            .collect()
    }

    /// Distinct metric kinds present anywhere in the snapshot.
    pub fn metric_kinds(&self) -> BTreeSet<MetricKind> {
        self.values
            .values()
            .flat_map(|per| per.keys().cloned())
            .collect()
    }
}

/// Static source-metric table keyed by (event type, metric name), loaded
/// from CSV with header `event_type,metric_name,value`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StaticMetrics {
    entries: BTreeMap<(String, String), f64>,
}

impl StaticMetrics {
    pub fn lookup(&self, event_type: &str, metric_name: &str) -> Option<f64> {
        self.entries
            .get(&(event_type.to_string(), metric_name.to_string()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_static_metrics(path: impl AsRef<Path>) -> Result<StaticMetrics, MetricsError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;

    let headers = reader
        .headers()
        .map_err(|e| MetricsError::MalformedCsv {
            line: 1,
            detail: e.to_string(),
        })?
        .clone();
    let expected = ["event_type", "metric_name", "value"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(MetricsError::MalformedCsv {
            line: 1,
            detail: format!("expected header {expected:?}, found {got:?}"),
        });
    }

    let mut table = StaticMetrics::default();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            MetricsError::MalformedCsv {
                line,
                detail: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(MetricsError::MalformedCsv {
                line,
                detail: format!("expected 3 columns, found {}", record.len()),
            });
        }
        let event_type = record[0].to_string();
        let metric_name = record[1].to_string();
        if event_type.is_empty() || metric_name.is_empty() {
            return Err(MetricsError::MalformedCsv {
                line,
                detail: "event_type and metric_name must be non-empty".into(),
            });
        }
        let value: f64 = record[2].parse().map_err(|_| MetricsError::MalformedCsv {
            line,
            detail: format!("column 3: '{}' is not a number", &record[2]),
        })?;
        if table
            .entries
            .insert((event_type.clone(), metric_name.clone()), value)
            .is_some()
        {
            return Err(MetricsError::DuplicateKey {
                event_type,
                metric_name,
            });
        }
    }
    Ok(table)
}

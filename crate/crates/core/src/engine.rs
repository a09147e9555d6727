//! Two-phase orchestration: every admitted event advances the coarse
//! estimators; a periodic analysis cycle snapshots them, groups, evaluates
//! the relevance filter and atomically publishes the new relevance set;
//! occurrences of relevant types are sampled into detailed traces.
//!
//! Estimators accumulate across cycles and are never reset. Many producer
//! threads may call [`Engine::on_event`] concurrently; one logical
//! scheduler calls [`Engine::run_cycle`]. Producers read the relevance set
//! through an atomic `Arc` swap, so no event ever observes a half-updated
//! set.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use dashmap::DashMap;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{evaluate_filter, group, AnalysisError, RelevanceSet};
use crate::config::{ConfigError, MonitoringConfig};
use crate::io::{CycleReport, IoError, Sink, TraceEntry};
use crate::metrics::{
    load_static_metrics, EventRecord, MetricsError, StaticMetrics, StatsRegistry,
};
use crate::sampling::{InvalidRate, Sampler};

pub const NANOS_PER_SECOND: u64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Sampling(#[from] InvalidRate),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("analysis delay must be positive")]
    InvalidDelay,
}

/// Shared engine state. Cheap to share behind an `Arc`.
pub struct Engine {
    config: MonitoringConfig,
    registry: StatsRegistry,
    statics: Option<StaticMetrics>,
    sampler: Sampler,
    relevance: RwLock<Arc<RelevanceSet>>,
    cycle_lock: Mutex<()>,
    delay_ns: AtomicU64,
    dropped: AtomicU64,
    traces_total: AtomicU64,
    traces_since_cycle: AtomicU64,
    traces_per_type: DashMap<String, u64>,
    /// Occurrences accumulated during earlier relevance periods of types
    /// that have since left the set; live periods are in the sampler.
    occurrence_history: DashMap<String, u64>,
}

impl Engine {
    /// Build an engine from a validated config, loading the static-metric
    /// table if one is configured.
    pub fn new(config: MonitoringConfig) -> Result<Self, EngineError> {
        let statics = match &config.static_metric_file {
            Some(path) => Some(load_static_metrics(path)?),
            None => None,
        };
        let registry = StatsRegistry::new(config.metric_kinds(), config.session_cap);
        let sampler = Sampler::new(config.sampling_percentage)?;
        let delay_ns = config
            .analysis_fixed_delay_s
            .saturating_mul(NANOS_PER_SECOND);
        Ok(Engine {
            config,
            registry,
            statics,
            sampler,
            relevance: RwLock::new(Arc::new(RelevanceSet::initial(0, Default::default()))),
            cycle_lock: Mutex::new(()),
            delay_ns: AtomicU64::new(delay_ns),
            dropped: AtomicU64::new(0),
            traces_total: AtomicU64::new(0),
            traces_since_cycle: AtomicU64::new(0),
            traces_per_type: DashMap::new(),
            occurrence_history: DashMap::new(),
        })
    }

    pub fn config(&self) -> &MonitoringConfig {
        &self.config
    }

    pub fn registry(&self) -> &StatsRegistry {
        &self.registry
    }

    pub fn static_metrics(&self) -> Option<&StaticMetrics> {
        self.statics.as_ref()
    }

    /// Current relevance set (atomic publication).
    pub fn relevance(&self) -> Arc<RelevanceSet> {
        self.relevance.read().expect("relevance lock").clone()
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampler.rate()
    }

    /// Adjust the sampling rate at runtime; takes effect for subsequent
    /// events without restart.
    pub fn set_sampling_rate(&self, rate: f64) -> Result<(), InvalidRate> {
        self.sampler.set_rate(rate)
    }

    pub fn analysis_delay_ns(&self) -> u64 {
        self.delay_ns.load(Ordering::Acquire)
    }

    /// Adjust the analysis delay at runtime; applies from the next cycle
    /// boundary computation.
    pub fn set_analysis_delay(&self, seconds: u64) -> Result<(), EngineError> {
        if seconds == 0 {
            return Err(EngineError::InvalidDelay);
        }
        self.delay_ns
            .store(seconds.saturating_mul(NANOS_PER_SECOND), Ordering::Release);
        Ok(())
    }

    /// Count of events rejected by the allow/deny scan patterns.
    pub fn dropped_events(&self) -> u64 {
        self.dropped.load(Ordering::Acquire)
    }

    pub fn traces_emitted(&self) -> u64 {
        self.traces_total.load(Ordering::Acquire)
    }

    /// Ingest one event. Admitted events always advance the coarse
    /// estimators; additionally, when the event type is currently relevant
    /// and the sampler selects this occurrence, a trace entry is produced
    /// for the sink.
    pub fn on_event(&self, event: &EventRecord) -> Result<Option<TraceEntry>, EngineError> {
        if !self.config.admits(&event.event_type_id) {
            self.dropped.fetch_add(1, Ordering::AcqRel);
            return Ok(None);
        }
        self.registry.record(event)?;

        let relevance = self.relevance();
        if !relevance.selected.contains(&event.event_type_id) {
            return Ok(None);
        }
        let observation = self.sampler.observe(&event.event_type_id);
        if !observation.sampled {
            return Ok(None);
        }
        self.traces_total.fetch_add(1, Ordering::AcqRel);
        self.traces_since_cycle.fetch_add(1, Ordering::AcqRel);
        *self
            .traces_per_type
            .entry(event.event_type_id.clone())
            .or_insert(0) += 1;
        Ok(Some(TraceEntry {
            event_type_id: event.event_type_id.clone(),
            timestamp_ns: event.timestamp_ns,
            duration_ns: event.duration_ns,
            input_digest: event.input_digest,
            return_size_bytes: event.return_size_bytes,
            session_id: event.session_id.clone(),
            raised_error: event.raised_error,
            occurrence_index: observation.occurrence,
            cycle_index: relevance.cycle_index,
        }))
    }

    /// Run one analysis cycle: snapshot, group, classify, swap the
    /// relevance set, report. With an empty registry this is a no-op cycle
    /// flagged in the report.
    pub fn run_cycle(&self) -> Result<CycleReport, EngineError> {
        let _scheduler = self.cycle_lock.lock().expect("cycle lock");
        let previous = self.relevance();
        let cycle_index = previous.cycle_index + 1;
        let traces_since = self.traces_since_cycle.swap(0, Ordering::AcqRel);

        if self.registry.is_empty() {
            let next = RelevanceSet::next(&previous, cycle_index, Default::default());
            *self.relevance.write().expect("relevance lock") = Arc::new(next);
            return Ok(CycleReport {
                cycle_index,
                taken_at_ns: 0,
                event_type_count: 0,
                normality: BTreeMap::new(),
                selected: Vec::new(),
                added: Vec::new(),
                removed: Vec::new(),
                traces_since_previous: traces_since,
                empty_registry: true,
            });
        }

        let snapshot = self.registry.snapshot(self.statics.as_ref())?;
        let referenced = self.config.filter.referenced_criteria();
        let bindings: Vec<_> = self
            .config
            .bindings
            .iter()
            .filter(|b| referenced.contains(&b.criterion))
            .cloned()
            .collect();
        let table = group(&snapshot, &bindings, self.config.sigma_k)?;
        let selected = evaluate_filter(&self.config.filter, &table)?;
        let next = RelevanceSet::next(&previous, cycle_index, selected);

        // Added types were not relevant before the swap, so resetting their
        // counters first is race-free; removed counters go after the swap.
        self.sampler
            .sync_relevance(next.added.iter().map(String::as_str), std::iter::empty());
        *self.relevance.write().expect("relevance lock") = Arc::new(next.clone());
        for id in &next.removed {
            let occurrences = self.sampler.counter(id);
            if occurrences > 0 {
                *self.occurrence_history.entry(id.clone()).or_insert(0) += occurrences;
            }
        }
        self.sampler
            .sync_relevance(std::iter::empty(), next.removed.iter().map(String::as_str));

        let normality = table
            .iter()
            .map(|g| (g.criterion, g.normality.map(|n| n.is_normal)))
            .collect();
        Ok(CycleReport {
            cycle_index,
            taken_at_ns: snapshot.taken_at_ns,
            event_type_count: snapshot.event_type_count(),
            normality,
            selected: next.selected.iter().cloned().collect(),
            added: next.added.iter().cloned().collect(),
            removed: next.removed.iter().cloned().collect(),
            traces_since_previous: traces_since,
            empty_registry: false,
        })
    }
}

/// Per-type outcome of a replay run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeSummary {
    /// Occurrences counted by the sampler while the type was relevant.
    pub occurrences_while_relevant: u64,
    pub traces: u64,
    pub achieved_rate: f64,
}

/// Outcome of replaying an event log through the engine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub events_read: u64,
    pub events_dropped: u64,
    pub cycles_run: u64,
    pub traces_emitted: u64,
    /// Selected-set size after each cycle, in cycle order.
    pub relevant_set_sizes: Vec<usize>,
    pub final_selected: Vec<String>,
    pub per_type: BTreeMap<String, TypeSummary>,
    pub empty_log: bool,
}

/// Replay an event stream through the engine, evaluating the analysis
/// delay against event timestamps so runs are wall-clock independent.
///
/// Cycle boundaries form a grid anchored at the first record's timestamp;
/// the boundary check runs before each record is ingested, so a cycle at
/// boundary B sees exactly the records with timestamps below B. A final
/// cycle runs at end of log when events arrived after the last boundary.
pub fn replay(
    engine: &Engine,
    records: impl IntoIterator<Item = Result<EventRecord, IoError>>,
    sink: &mut dyn Sink,
) -> Result<ReplaySummary, EngineError> {
    let mut summary = ReplaySummary {
        events_read: 0,
        events_dropped: 0,
        cycles_run: 0,
        traces_emitted: 0,
        relevant_set_sizes: Vec::new(),
        final_selected: Vec::new(),
        per_type: BTreeMap::new(),
        empty_log: false,
    };
    let dropped_before = engine.dropped_events();
    let mut next_cycle_at: Option<u64> = None;
    let mut recorded_at_last_cycle = engine.registry().events_recorded();

    let run_cycle = |engine: &Engine,
                         sink: &mut dyn Sink,
                         summary: &mut ReplaySummary|
     -> Result<(), EngineError> {
        let report = engine.run_cycle()?;
        summary.cycles_run += 1;
        summary.relevant_set_sizes.push(report.selected.len());
        sink.write_cycle_report(&report)?;
        sink.flush()?;
        Ok(())
    };

    for item in records {
        let event = item?;
        match next_cycle_at {
            None => {
                next_cycle_at = Some(event.timestamp_ns + engine.analysis_delay_ns());
            }
            Some(at) if event.timestamp_ns >= at => {
                run_cycle(engine, sink, &mut summary)?;
                recorded_at_last_cycle = engine.registry().events_recorded();
                let delay = engine.analysis_delay_ns().max(1);
                let mut next = at;
                while next <= event.timestamp_ns {
                    next += delay;
                }
                next_cycle_at = Some(next);
            }
            _ => {}
        }
        summary.events_read += 1;
        if let Some(trace) = engine.on_event(&event)? {
            sink.write_trace(&trace)?;
        }
    }

    if summary.events_read == 0 {
        summary.empty_log = true;
        log::warn!("replay: event log is empty; no cycles run");
    } else if engine.registry().events_recorded() > recorded_at_last_cycle {
        run_cycle(engine, sink, &mut summary)?;
    }
    sink.flush()?;

    summary.events_dropped = engine.dropped_events() - dropped_before;
    summary.traces_emitted = engine.traces_emitted();
    let relevance = engine.relevance();
    summary.final_selected = relevance.selected.iter().cloned().collect();

    // Occurrences across all relevance periods: earlier periods are folded
    // into the history when a type leaves the set, live ones sit in the
    // sampler counters.
    let mut occurrences: BTreeMap<String, u64> = BTreeMap::new();
    for entry in engine.occurrence_history.iter() {
        *occurrences.entry(entry.key().clone()).or_insert(0) += *entry.value();
    }
    for (id, count) in engine.sampler.counters() {
        *occurrences.entry(id).or_insert(0) += count;
    }
    for (id, occurred) in occurrences {
        let traces = engine.traces_per_type.get(&id).map(|t| *t).unwrap_or(0);
        let achieved_rate = if occurred == 0 {
            0.0
        } else {
            traces as f64 / occurred as f64
        };
        summary.per_type.insert(
            id,
            TypeSummary {
                occurrences_while_relevant: occurred,
                traces,
                achieved_rate,
            },
        );
    }
    Ok(summary)
}

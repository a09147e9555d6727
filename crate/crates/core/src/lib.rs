//! Tigris: a two-phase adaptive monitoring engine.
//!
//! The coarse-grained phase ingests every admitted event and keeps one
//! lightweight scalar estimator per configured metric per event type. A
//! periodic analysis cycle snapshots those estimators, bands event types
//! into five groups per relevance criterion, evaluates a relevance filter
//! (set algebra over modifier-qualified criteria) and publishes the
//! resulting relevance set. Occurrences of relevant event types are then
//! traced in detail under a bounded, deterministic sampling rate.
//!
//! Typical embedding:
//!
//! ```
//! use tigris::analysis::CriterionBinding;
//! use tigris::config::MonitoringConfig;
//! use tigris::dsl::Criterion;
//! use tigris::engine::Engine;
//! use tigris::metrics::{EventRecord, MetricKind};
//!
//! let config = MonitoringConfig::new(
//!     "more frequent",
//!     vec![CriterionBinding::new(
//!         Criterion::Frequency,
//!         MetricKind::InvocationFrequency,
//!     )],
//!     0.5,
//!     120,
//! )
//! .unwrap();
//! let engine = Engine::new(config).unwrap();
//! engine.on_event(&EventRecord::new("svc.hot()", 0, 1_000)).unwrap();
//! let report = engine.run_cycle().unwrap();
//! assert_eq!(report.cycle_index, 1);
//! ```

pub mod analysis;
pub mod config;
pub mod dsl;
pub mod engine;
pub mod fixtures;
pub mod io;
pub mod metrics;
pub mod sampling;

pub use analysis::{
    evaluate_filter, group, group_sequential, ks_normality_test, partition_normal,
    partition_quantile, AnalysisError, BandingStrategy, CriterionBinding, Direction,
    GroupingTable, NormalityResult, RelevanceSet,
};
pub use config::{admit_event, load_config, ConfigError, MonitoringConfig};
pub use dsl::{parse_filter, referenced_criteria, Criterion, FilterExpr, Modifier, SyntaxError};
pub use engine::{replay, Engine, EngineError, ReplaySummary};
pub use io::{read_event_log, CycleReport, IoError, MemorySink, Sink, TraceEntry};
pub use metrics::{
    load_static_metrics, EventRecord, MetricKind, MetricSnapshot, MetricsError, OnlineStats,
    StatsRegistry,
};
pub use sampling::Sampler;

//! Serialized surfaces: JSONL event logs (replay input), JSONL trace and
//! cycle-report sinks (output), and the snapshot file consumed by filter
//! evaluation. One JSON object per line; unknown fields are ignored on
//! read.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::CriterionBinding;
use crate::dsl::Criterion;
use crate::metrics::{EventRecord, MetricKind, MetricSnapshot};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("timestamp regression at line {line}: {prev} -> {current}")]
    TimestampRegression { line: usize, prev: u64, current: u64 },
    #[error("malformed snapshot file: {0}")]
    MalformedSnapshot(String),
}

/// One sampled fine-grained trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub event_type_id: String,
    pub timestamp_ns: u64,
    pub duration_ns: u64,
    pub input_digest: u64,
    pub return_size_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub raised_error: bool,
    /// Per-type occurrence index the sampler had counted at emission.
    pub occurrence_index: u64,
    /// Relevance cycle under which this trace was sampled.
    pub cycle_index: u64,
}

/// Result of one analysis cycle, including the relevance-set diff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle_index: u64,
    pub taken_at_ns: u64,
    pub event_type_count: usize,
    /// Per-criterion normality verdict; `null` when the sample was
    /// degenerate and banding fell back to quantiles directly.
    pub normality: BTreeMap<Criterion, Option<bool>>,
    pub selected: Vec<String>,
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub traces_since_previous: u64,
    /// Set when the cycle ran before any event was recorded (no-op cycle).
    #[serde(default)]
    pub empty_registry: bool,
}

/// Streaming JSONL reader yielding validated event records in file order.
/// Timestamps must be non-decreasing.
pub struct EventLogReader<R> {
    reader: R,
    line_no: usize,
    last_timestamp: Option<u64>,
    buf: String,
}

impl<R: BufRead> EventLogReader<R> {
    pub fn new(reader: R) -> Self {
        EventLogReader {
            reader,
            line_no: 0,
            last_timestamp: None,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for EventLogReader<R> {
    type Item = Result<EventRecord, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let record: EventRecord = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => {
                    return Some(Err(IoError::MalformedLine {
                        line: self.line_no,
                        detail: e.to_string(),
                    }))
                }
            };
            if let Err(e) = record.validate() {
                return Some(Err(IoError::MalformedLine {
                    line: self.line_no,
                    detail: e.to_string(),
                }));
            }
            if let Some(prev) = self.last_timestamp {
                if record.timestamp_ns < prev {
                    return Some(Err(IoError::TimestampRegression {
                        line: self.line_no,
                        prev,
                        current: record.timestamp_ns,
                    }));
                }
            }
            self.last_timestamp = Some(record.timestamp_ns);
            return Some(Ok(record));
        }
    }
}

/// Open a JSONL event log for streaming replay.
pub fn read_event_log(path: impl AsRef<Path>) -> Result<EventLogReader<BufReader<File>>, IoError> {
    Ok(EventLogReader::new(BufReader::new(File::open(path)?)))
}

/// Serialize records to a JSONL event log.
pub fn write_event_log<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a EventRecord>,
) -> Result<(), IoError> {
    let mut writer = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut writer, record).map_err(std::io::Error::other)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Destination for traces and cycle reports. The engine serializes trace
/// emission per sink; flushes happen at cycle boundaries.
pub trait Sink {
    fn write_trace(&mut self, entry: &TraceEntry) -> Result<(), IoError>;
    fn write_cycle_report(&mut self, report: &CycleReport) -> Result<(), IoError>;
    fn flush(&mut self) -> Result<(), IoError>;
}

/// In-memory sink retaining everything written.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub traces: Vec<TraceEntry>,
    pub reports: Vec<CycleReport>,
}

impl MemorySink {
    pub fn new() -> Self {
        MemorySink::default()
    }

    /// The JSONL lines a file sink would have produced for the traces.
    pub fn trace_lines(&self) -> Vec<String> {
        self.traces
            .iter()
            .map(|t| serde_json::to_string(t).expect("trace serializes"))
            .collect()
    }

    pub fn report_lines(&self) -> Vec<String> {
        self.reports
            .iter()
            .map(|r| serde_json::to_string(r).expect("report serializes"))
            .collect()
    }
}

impl Sink for MemorySink {
    fn write_trace(&mut self, entry: &TraceEntry) -> Result<(), IoError> {
        self.traces.push(entry.clone());
        Ok(())
    }

    fn write_cycle_report(&mut self, report: &CycleReport) -> Result<(), IoError> {
        self.reports.push(report.clone());
        Ok(())
    }

    fn flush(&mut self) -> Result<(), IoError> {
        Ok(())
    }
}

/// JSONL file sink writing traces and reports to separate files.
pub struct FileSink {
    traces: BufWriter<File>,
    reports: BufWriter<File>,
}

impl FileSink {
    pub fn create(
        trace_path: impl AsRef<Path>,
        report_path: impl AsRef<Path>,
    ) -> Result<Self, IoError> {
        Ok(FileSink {
            traces: BufWriter::new(File::create(trace_path)?),
            reports: BufWriter::new(File::create(report_path)?),
        })
    }
}

impl Sink for FileSink {
    fn write_trace(&mut self, entry: &TraceEntry) -> Result<(), IoError> {
        serde_json::to_writer(&mut self.traces, entry).map_err(std::io::Error::other)?;
        self.traces.write_all(b"\n")?;
        Ok(())
    }

    fn write_cycle_report(&mut self, report: &CycleReport) -> Result<(), IoError> {
        serde_json::to_writer(&mut self.reports, report).map_err(std::io::Error::other)?;
        self.reports.write_all(b"\n")?;
        Ok(())
    }

    fn flush(&mut self) -> Result<(), IoError> {
        self.traces.flush()?;
        self.reports.flush()?;
        Ok(())
    }
}

/// Fan out writes to two sinks; used to verify sink equivalence and to
/// tee replay output.
pub struct TeeSink<'a> {
    pub first: &'a mut dyn Sink,
    pub second: &'a mut dyn Sink,
}

impl Sink for TeeSink<'_> {
    fn write_trace(&mut self, entry: &TraceEntry) -> Result<(), IoError> {
        self.first.write_trace(entry)?;
        self.second.write_trace(entry)
    }

    fn write_cycle_report(&mut self, report: &CycleReport) -> Result<(), IoError> {
        self.first.write_cycle_report(report)?;
        self.second.write_cycle_report(report)
    }

    fn flush(&mut self) -> Result<(), IoError> {
        self.first.flush()?;
        self.second.flush()
    }
}

/// On-disk snapshot: the (event type, metric) -> value map plus the
/// bindings needed to group and classify it offline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotFile {
    #[serde(default)]
    pub taken_at_ns: u64,
    pub values: BTreeMap<String, BTreeMap<MetricKind, f64>>,
    pub bindings: Vec<CriterionBinding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_k: Option<f64>,
}

impl SnapshotFile {
    pub fn snapshot(&self) -> MetricSnapshot {
        MetricSnapshot {
            taken_at_ns: self.taken_at_ns,
            values: self.values.clone(),
        }
    }
}

pub fn read_snapshot_file(path: impl AsRef<Path>) -> Result<SnapshotFile, IoError> {
    let file = File::open(path)?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| IoError::MalformedSnapshot(e.to_string()))
}

pub fn write_snapshot_file(
    path: impl AsRef<Path>,
    snapshot: &SnapshotFile,
) -> Result<(), IoError> {
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut writer, snapshot).map_err(std::io::Error::other)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn arb_record() -> impl Strategy<Value = EventRecord> {
        (
            "[a-zA-Z][a-zA-Z0-9_.]{0,20}\\(\\)",
            0u64..1_000_000,
            0u64..10_000_000,
            0u64..65536,
            any::<u64>(),
            1u32..64,
            any::<bool>(),
            prop::option::of("[a-z0-9]{1,8}"),
            prop::option::of(0u64..1_000_000),
            prop::option::of(0.0f64..1e6),
        )
            .prop_map(
                |(id, ts, dur, ret, digest, threads, err, session, mem, energy)| EventRecord {
                    event_type_id: id,
                    timestamp_ns: ts,
                    duration_ns: dur,
                    return_size_bytes: ret,
                    input_digest: digest,
                    active_threads: threads,
                    raised_error: err,
                    session_id: session,
                    memory_bytes: mem,
                    energy_estimate: energy,
                },
            )
    }

    proptest! {
        #[test]
        fn jsonl_round_trip_is_identity(mut records in prop::collection::vec(arb_record(), 0..40)) {
            records.sort_by_key(|r| r.timestamp_ns);
            let mut text = String::new();
            for r in &records {
                text.push_str(&serde_json::to_string(r).unwrap());
                text.push('\n');
            }
            let read: Vec<EventRecord> = EventLogReader::new(Cursor::new(text))
                .collect::<Result<_, _>>()
                .unwrap();
            prop_assert_eq!(read, records);
        }
    }
}

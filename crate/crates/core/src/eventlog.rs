//! Event log ingestion from CSV and XES, plus descriptive dataset statistics.
//!
//! Parsed logs are immutable: traces are grouped by case identifier and each
//! trace is stably sorted by timestamp, so events sharing a timestamp keep
//! their original file order.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds in one day. Durations are converted without calendar or DST adjustment.
pub const MS_PER_DAY: f64 = 86_400_000.0;

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("configuration error: column `{0}` not found in header")]
    MissingColumn(String),
    #[error("line {line}: cannot parse timestamp `{value}`")]
    Timestamp { line: u64, value: String },
    #[error("line {line}: empty activity")]
    EmptyActivity { line: u64 },
    #[error("line {line}: empty case identifier")]
    EmptyCase { line: u64 },
    #[error("event log is empty")]
    EmptyLog,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed XES at byte {position}: {message}")]
    Xml { position: u64, message: String },
    #[error("trace `{trace}`: event {event} is missing `{key}`")]
    MissingAttribute { trace: String, event: usize, key: String },
    #[error("trace `{trace}`: cannot parse timestamp `{value}`")]
    XesTimestamp { trace: String, value: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: DateTime<Utc>,
    pub resource: Option<String>,
    pub attributes: BTreeMap<String, String>,
}

impl Event {
    pub fn new(case_id: impl Into<String>, activity: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        Self {
            case_id: case_id.into(),
            activity: activity.into(),
            timestamp,
            resource: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn timestamp_ms(&self) -> i64 {
        self.timestamp.timestamp_millis()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.events[0].timestamp
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.events[self.events.len() - 1].timestamp
    }

    /// Duration from first to last event, in days.
    pub fn throughput_days(&self) -> f64 {
        days_between(self.start(), self.end())
    }
}

/// A set of traces keyed by case identifier. Iteration order is lexicographic by case id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventLog {
    traces: BTreeMap<String, Trace>,
}

impl EventLog {
    /// Groups events by case and stably sorts each trace by timestamp.
    pub fn from_events(events: impl IntoIterator<Item = Event>) -> Result<Self, EventLogError> {
        let mut grouped: BTreeMap<String, Vec<Event>> = BTreeMap::new();
        for event in events {
            grouped.entry(event.case_id.clone()).or_default().push(event);
        }
        if grouped.is_empty() {
            return Err(EventLogError::EmptyLog);
        }
        let traces = grouped
            .into_iter()
            .map(|(case_id, mut events)| {
                events.sort_by_key(|e| e.timestamp);
                (case_id.clone(), Trace { case_id, events })
            })
            .collect();
        Ok(Self { traces })
    }

    pub fn from_traces(traces: impl IntoIterator<Item = Trace>) -> Result<Self, EventLogError> {
        Self::from_events(traces.into_iter().flat_map(|t| t.events))
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn traces(&self) -> impl Iterator<Item = &Trace> {
        self.traces.values()
    }

    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.get(case_id)
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.traces.keys().map(String::as_str)
    }

    pub fn n_events(&self) -> usize {
        self.traces.values().map(Trace::len).sum()
    }
}

/// Elapsed time between two instants in days (86,400,000 ms per day).
pub fn days_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    (to - from).num_milliseconds() as f64 / MS_PER_DAY
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub case: String,
    pub activity: String,
    pub timestamp: String,
    #[serde(default)]
    pub resource: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            case: "case_id".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
            resource: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TimestampFormat {
    /// ISO-8601 with timezone, ISO-8601 without timezone (UTC assumed), then `YYYY-MM-DD HH:MM:SS`.
    #[default]
    Auto,
    /// A chrono `strftime` pattern. Patterns without an offset specifier are read as UTC.
    Pattern(String),
}

impl TimestampFormat {
    pub fn parse(&self, raw: &str) -> Option<DateTime<Utc>> {
        let raw = raw.trim();
        let ts = match self {
            TimestampFormat::Auto => parse_auto(raw),
            TimestampFormat::Pattern(p) => parse_with_pattern(raw, p),
        }?;
        // millisecond precision
        Utc.timestamp_millis_opt(ts.timestamp_millis()).single()
    }
}

impl std::str::FromStr for TimestampFormat {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("auto") {
            TimestampFormat::Auto
        } else {
            TimestampFormat::Pattern(s.to_string())
        })
    }
}

const NAIVE_FORMATS: &[&str] = &["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S%.f"];

fn parse_auto(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f%#z", "%Y-%m-%d %H:%M:%S%.f%#z"] {
        if let Ok(dt) = DateTime::parse_from_str(raw, fmt) {
            return Some(dt.with_timezone(&Utc));
        }
    }
    NAIVE_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .map(|naive| naive.and_utc())
}

fn parse_with_pattern(raw: &str, pattern: &str) -> Option<DateTime<Utc>> {
    if pattern.contains("%z") || pattern.contains("%:z") || pattern.contains("%#z") {
        DateTime::parse_from_str(raw, pattern).ok().map(|dt| dt.with_timezone(&Utc))
    } else {
        NaiveDateTime::parse_from_str(raw, pattern).ok().map(|n| n.and_utc())
    }
}

/// Parses a headed, comma-separated UTF-8 event log.
pub fn parse_csv<R: Read>(
    source: R,
    mapping: &ColumnMapping,
    format: &TimestampFormat,
) -> Result<EventLog, EventLogError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| EventLogError::MissingColumn(name.to_string()))
    };
    let case_col = column(&mapping.case)?;
    let activity_col = column(&mapping.activity)?;
    let time_col = column(&mapping.timestamp)?;
    let resource_col = mapping.resource.as_deref().map(column).transpose()?;

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let case_id = field(case_col).trim();
        if case_id.is_empty() {
            return Err(EventLogError::EmptyCase { line });
        }
        let activity = field(activity_col).trim();
        if activity.is_empty() {
            return Err(EventLogError::EmptyActivity { line });
        }
        let raw_ts = field(time_col);
        let timestamp = format.parse(raw_ts).ok_or_else(|| EventLogError::Timestamp {
            line,
            value: raw_ts.to_string(),
        })?;
        let resource = resource_col
            .map(|i| field(i).trim())
            .filter(|r| !r.is_empty())
            .map(str::to_string);
        let attributes = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != case_col && *i != activity_col && *i != time_col && Some(*i) != resource_col)
            .map(|(i, name)| (name.to_string(), field(i).to_string()))
            .collect();
        events.push(Event {
            case_id: case_id.to_string(),
            activity: activity.to_string(),
            timestamp,
            resource,
            attributes,
        });
    }
    EventLog::from_events(events)
}

/// Writes a log as CSV with columns `case_id,activity,timestamp,resource` followed by
/// every attribute key seen in the log. Timestamps are RFC 3339 UTC with milliseconds.
pub fn write_csv<W: Write>(log: &EventLog, sink: W) -> Result<(), EventLogError> {
    let attribute_keys: BTreeSet<&str> = log
        .traces()
        .flat_map(|t| t.events.iter())
        .flat_map(|e| e.attributes.keys().map(String::as_str))
        .collect();
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["case_id", "activity", "timestamp", "resource"];
    header.extend(attribute_keys.iter().copied());
    writer.write_record(&header)?;
    for event in log.traces().flat_map(|t| t.events.iter()) {
        let mut row = vec![
            event.case_id.clone(),
            event.activity.clone(),
            event.timestamp.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string(),
            event.resource.clone().unwrap_or_default(),
        ];
        row.extend(
            attribute_keys
                .iter()
                .map(|k| event.attributes.get(*k).cloned().unwrap_or_default()),
        );
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

const CONCEPT_NAME: &str = "concept:name";
const TIME_TIMESTAMP: &str = "time:timestamp";
const ORG_RESOURCE: &str = "org:resource";

#[derive(Default)]
struct PendingEvent {
    attributes: BTreeMap<String, String>,
}

#[derive(Default)]
struct PendingTrace {
    attributes: BTreeMap<String, String>,
    events: Vec<PendingEvent>,
}

enum Scope {
    Log,
    Trace,
    Event,
    /// Anything whose attribute children must not be read (globals, nested attributes, ...).
    Opaque,
}

/// Parses the IEEE XES subset: `log/trace/event` with `string` and `date` attributes.
///
/// Other typed attributes (`int`, `float`, `boolean`, `id`) are kept as strings in
/// the attribute map. Nested attribute children and `global` declarations are skipped.
pub fn parse_xes<R: Read>(source: R) -> Result<EventLog, EventLogError> {
    let mut buf_reader = std::io::BufReader::new(source);
    let mut reader = Reader::from_reader(&mut buf_reader);
    reader.config_mut().trim_text(true);

    let mut stack: Vec<Scope> = Vec::new();
    let mut traces: Vec<PendingTrace> = Vec::new();
    let mut current_trace: Option<PendingTrace> = None;
    let mut current_event: Option<PendingEvent> = None;
    let mut saw_log = false;
    let mut buf = Vec::new();

    loop {
        let position = reader.buffer_position();
        let event = reader.read_event_into(&mut buf).map_err(|e| EventLogError::Xml {
            position,
            message: e.to_string(),
        })?;
        match event {
            XmlEvent::Start(ref start) => {
                let scope = open_element(start, &stack, &mut current_trace, &mut current_event, &mut saw_log, &reader)?;
                stack.push(scope);
            }
            XmlEvent::Empty(ref start) => {
                if let Some(parent) = stack.last() {
                    read_attribute(start, parent, &mut current_trace, &mut current_event, &reader)?;
                }
            }
            XmlEvent::End(ref end) => {
                let name = end.local_name();
                match stack.pop() {
                    Some(Scope::Event) if name.as_ref() == b"event" => {
                        let event = current_event.take().unwrap_or_default();
                        if let Some(trace) = current_trace.as_mut() {
                            trace.events.push(event);
                        }
                    }
                    Some(Scope::Trace) if name.as_ref() == b"trace" => {
                        if let Some(trace) = current_trace.take() {
                            traces.push(trace);
                        }
                    }
                    _ => {}
                }
            }
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(EventLogError::Xml {
            position: reader.buffer_position(),
            message: "unexpected end of document".into(),
        });
    }
    if !saw_log {
        return Err(EventLogError::Xml {
            position: 0,
            message: "missing <log> root element".into(),
        });
    }

    let mut events = Vec::new();
    for (index, trace) in traces.into_iter().enumerate() {
        let case_id = trace
            .attributes
            .get(CONCEPT_NAME)
            .cloned()
            .unwrap_or_else(|| format!("trace-{index}"));
        for (event_index, mut pending) in trace.events.into_iter().enumerate() {
            let missing = |key: &str| EventLogError::MissingAttribute {
                trace: case_id.clone(),
                event: event_index,
                key: key.to_string(),
            };
            let activity = pending.attributes.remove(CONCEPT_NAME).ok_or_else(|| missing(CONCEPT_NAME))?;
            if activity.trim().is_empty() {
                return Err(missing(CONCEPT_NAME));
            }
            let raw_ts = pending.attributes.remove(TIME_TIMESTAMP).ok_or_else(|| missing(TIME_TIMESTAMP))?;
            let timestamp = TimestampFormat::Auto
                .parse(&raw_ts)
                .ok_or_else(|| EventLogError::XesTimestamp {
                    trace: case_id.clone(),
                    value: raw_ts.clone(),
                })?;
            let resource = pending.attributes.remove(ORG_RESOURCE);
            events.push(Event {
                case_id: case_id.clone(),
                activity,
                timestamp,
                resource,
                attributes: pending.attributes,
            });
        }
    }
    EventLog::from_events(events)
}

fn open_element<R>(
    start: &BytesStart<'_>,
    stack: &[Scope],
    current_trace: &mut Option<PendingTrace>,
    current_event: &mut Option<PendingEvent>,
    saw_log: &mut bool,
    reader: &Reader<R>,
) -> Result<Scope, EventLogError> {
    let name = start.local_name();
    let scope = match (stack.last(), name.as_ref()) {
        (None, b"log") => {
            *saw_log = true;
            Scope::Log
        }
        (Some(Scope::Log), b"trace") => {
            *current_trace = Some(PendingTrace::default());
            Scope::Trace
        }
        (Some(Scope::Trace), b"event") => {
            *current_event = Some(PendingEvent::default());
            Scope::Event
        }
        (Some(parent), _) => {
            // attribute with nested children: record its own value, ignore the children
            read_attribute(start, parent, current_trace, current_event, reader)?;
            Scope::Opaque
        }
        (None, other) => {
            return Err(EventLogError::Xml {
                position: reader.buffer_position(),
                message: format!("unexpected root element <{}>", String::from_utf8_lossy(other)),
            })
        }
    };
    Ok(scope)
}

fn read_attribute<R>(
    start: &BytesStart<'_>,
    parent: &Scope,
    current_trace: &mut Option<PendingTrace>,
    current_event: &mut Option<PendingEvent>,
    reader: &Reader<R>,
) -> Result<(), EventLogError> {
    let target = match parent {
        Scope::Event => current_event.as_mut().map(|e| &mut e.attributes),
        Scope::Trace => current_trace.as_mut().map(|t| &mut t.attributes),
        _ => None,
    };
    let Some(target) = target else {
        return Ok(());
    };
    if !matches!(
        start.local_name().as_ref(),
        b"string" | b"date" | b"int" | b"float" | b"boolean" | b"id"
    ) {
        return Ok(());
    }
    let mut key = None;
    let mut value = None;
    for attr in start.attributes() {
        let attr = attr.map_err(|e| EventLogError::Xml {
            position: reader.buffer_position(),
            message: e.to_string(),
        })?;
        let text = attr
            .unescape_value()
            .map_err(|e| EventLogError::Xml {
                position: reader.buffer_position(),
                message: e.to_string(),
            })?
            .into_owned();
        match attr.key.local_name().as_ref() {
            b"key" => key = Some(text),
            b"value" => value = Some(text),
            _ => {}
        }
    }
    if let (Some(key), Some(value)) = (key, value) {
        target.insert(key, value);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFormat {
    Csv,
    Xes,
}

impl LogFormat {
    /// Guesses from the extension; anything but `.xes` is read as CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("xes") => LogFormat::Xes,
            _ => LogFormat::Csv,
        }
    }
}

impl std::str::FromStr for LogFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(LogFormat::Csv),
            "xes" => Ok(LogFormat::Xes),
            other => Err(format!("unknown log format `{other}` (valid: csv, xes)")),
        }
    }
}

/// Reads a log file in `format`.
pub fn read_log(
    path: &std::path::Path,
    format: LogFormat,
    mapping: &ColumnMapping,
    timestamps: &TimestampFormat,
) -> Result<EventLog, EventLogError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    match format {
        LogFormat::Csv => parse_csv(file, mapping, timestamps),
        LogFormat::Xes => parse_xes(file),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_cases: usize,
    pub n_unique_activities: usize,
    pub avg_case_length: f64,
    pub max_case_length: usize,
    pub avg_throughput_days: f64,
}

/// Descriptive statistics over raw traces (no sentinel tokens).
pub fn compute_stats(log: &EventLog) -> Result<DatasetStats, EventLogError> {
    if log.is_empty() {
        return Err(EventLogError::EmptyLog);
    }
    let n_cases = log.len();
    let activities: BTreeSet<&str> = log.traces().flat_map(Trace::activities).collect();
    let total_events: usize = log.traces().map(Trace::len).sum();
    let max_case_length = log.traces().map(Trace::len).max().unwrap_or(0);
    // integer milliseconds summed exactly, so trace order cannot change the result
    let total_ms: i128 = log
        .traces()
        .map(|t| (t.end() - t.start()).num_milliseconds() as i128)
        .sum();
    Ok(DatasetStats {
        n_cases,
        n_unique_activities: activities.len(),
        avg_case_length: total_events as f64 / n_cases as f64,
        max_case_length,
        avg_throughput_days: total_ms as f64 / MS_PER_DAY / n_cases as f64,
    })
}

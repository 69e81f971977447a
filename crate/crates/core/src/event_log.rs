//! Event logs: traces of activities parsed from XES or CSV.
//!
//! An [`EventLog`] is a multiset of [`Trace`]s and is the sensitive input to
//! everything else in this crate. Only the activity order within a trace
//! matters; timestamps and other event attributes are ignored at parse time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::sync::Arc;

use quick_xml::events::Event as XmlEvent;
use quick_xml::Reader as XmlReader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Labels that would collide with the dummy endpoints and the silent leaf.
pub const RESERVED_LABELS: [&str; 3] = ["START", "END", "tau"];

#[derive(Debug, Error)]
pub enum LogError {
    #[error("activity label is empty after trimming")]
    EmptyLabel,
    #[error("activity label {0:?} is reserved")]
    ReservedLabel(String),
    #[error("malformed XML at line {line}, column {column}: {message}")]
    Xml {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("event without a \"concept:name\" attribute in trace {trace_index}")]
    MissingConceptName { trace_index: usize },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?} in CSV header")]
    MissingColumn(String),
    #[error("unsortable order value {value:?} in CSV row {row}")]
    UnsortableOrder { row: u64, value: String },
    #[error("trace must contain at least one activity")]
    EmptyTrace,
}

/// An activity label. Interned: clones share one allocation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Activity(Arc<str>);

impl Activity {
    /// Trims surrounding whitespace and rejects empty or reserved labels.
    pub fn new(label: &str) -> Result<Self, LogError> {
        let trimmed = label.trim();
        if trimmed.is_empty() {
            return Err(LogError::EmptyLabel);
        }
        if RESERVED_LABELS.contains(&trimmed) {
            return Err(LogError::ReservedLabel(trimmed.to_string()));
        }
        Ok(Activity(Arc::from(trimmed)))
    }

    pub fn label(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One case: a nonempty activity sequence in source event order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace(Vec<Activity>);

impl Trace {
    pub fn new(activities: Vec<Activity>) -> Result<Self, LogError> {
        if activities.is_empty() {
            return Err(LogError::EmptyTrace);
        }
        Ok(Trace(activities))
    }

    pub fn activities(&self) -> &[Activity] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> &Activity {
        &self.0[0]
    }

    pub fn last(&self) -> &Activity {
        &self.0[self.0.len() - 1]
    }
}

/// A multiset of traces plus the alphabet they range over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    traces: Vec<Trace>,
    alphabet: BTreeSet<Activity>,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>) -> Self {
        let alphabet = traces
            .iter()
            .flat_map(|t| t.activities().iter().cloned())
            .collect();
        EventLog { traces, alphabet }
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn alphabet(&self) -> &BTreeSet<Activity> {
        &self.alphabet
    }

    /// Number of traces, |L|.
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

/// Headline counts for a log, as reported by `dpim stats`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogStatistics {
    pub traces: usize,
    pub variants: usize,
    pub events: usize,
    pub activities: usize,
}

/// Exact trace/variant/event/activity counts.
pub fn statistics(log: &EventLog) -> LogStatistics {
    let variants: BTreeSet<&Trace> = log.traces().iter().collect();
    let events = log.traces().iter().map(Trace::len).sum();
    LogStatistics {
        traces: log.len(),
        variants: variants.len(),
        events,
        activities: log.alphabet().len(),
    }
}

/// Result of parsing a file that may contain skippable content.
#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub log: EventLog,
    /// Traces dropped because they contained no events.
    pub dropped_empty_traces: usize,
}

fn position_to_line_column(bytes: &[u8], position: usize) -> (usize, usize) {
    let upto = position.min(bytes.len());
    let mut line = 1;
    let mut column = 1;
    for &b in &bytes[..upto] {
        if b == b'\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    (line, column)
}

/// Parses the XES subset used here: `<log>`/`<trace>`/`<event>` with one
/// `<string key="concept:name" value="..."/>` per event. All other
/// attributes, extensions, and globals are skipped. Traces with zero events
/// are dropped and counted in the result.
pub fn parse_xes(bytes: &[u8]) -> Result<ParsedLog, LogError> {
    let mut reader = XmlReader::from_reader(bytes);
    reader.trim_text(true);

    let xml_err = |reader: &XmlReader<&[u8]>, e: &dyn fmt::Display| {
        let (line, column) = position_to_line_column(bytes, reader.buffer_position());
        LogError::Xml {
            line,
            column,
            message: e.to_string(),
        }
    };

    let mut traces = Vec::new();
    let mut dropped_empty_traces = 0usize;
    let mut trace_index = 0usize;

    // Parser state: inside <trace>, inside <event>, the concept:name seen so far.
    let mut in_trace = false;
    let mut in_event = false;
    let mut current_trace: Vec<Activity> = Vec::new();
    let mut current_name: Option<String> = None;
    let mut buf = Vec::new();

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| xml_err(&reader, &e))?;
        match event {
            XmlEvent::Start(ref e) | XmlEvent::Empty(ref e) => {
                let is_empty = matches!(event, XmlEvent::Empty(_));
                match e.local_name().as_ref() {
                    b"trace" => {
                        in_trace = true;
                        current_trace.clear();
                        if is_empty {
                            dropped_empty_traces += 1;
                            trace_index += 1;
                            in_trace = false;
                        }
                    }
                    b"event" if in_trace => {
                        in_event = true;
                        current_name = None;
                        if is_empty {
                            return Err(LogError::MissingConceptName { trace_index });
                        }
                    }
                    b"string" if in_event => {
                        let mut key = None;
                        let mut value = None;
                        for attr in e.attributes() {
                            let attr = attr.map_err(|e| xml_err(&reader, &e))?;
                            match attr.key.local_name().as_ref() {
                                b"key" => {
                                    key = Some(
                                        attr.unescape_value()
                                            .map_err(|e| xml_err(&reader, &e))?
                                            .into_owned(),
                                    )
                                }
                                b"value" => {
                                    value = Some(
                                        attr.unescape_value()
                                            .map_err(|e| xml_err(&reader, &e))?
                                            .into_owned(),
                                    )
                                }
                                _ => {}
                            }
                        }
                        if key.as_deref() == Some("concept:name") {
                            if let Some(v) = value {
                                current_name = Some(v);
                            }
                        }
                    }
                    _ => {}
                }
            }
            XmlEvent::End(ref e) => match e.local_name().as_ref() {
                b"event" if in_event => {
                    in_event = false;
                    match current_name.take() {
                        Some(name) => current_trace.push(Activity::new(&name)?),
                        None => return Err(LogError::MissingConceptName { trace_index }),
                    }
                }
                b"trace" if in_trace => {
                    in_trace = false;
                    if current_trace.is_empty() {
                        dropped_empty_traces += 1;
                    } else {
                        traces.push(Trace::new(std::mem::take(&mut current_trace))?);
                    }
                    trace_index += 1;
                }
                _ => {}
            },
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    Ok(ParsedLog {
        log: EventLog::new(traces),
        dropped_empty_traces,
    })
}

/// Order-column value. The whole column is parsed with one scheme:
/// integers, then floats, then RFC 3339 timestamps (lexicographic once the
/// format is fixed). Stable sort keeps file order on ties.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
enum OrderKey {
    Int(i64),
    Float(f64),
    Text(String),
}

fn infer_order_keys(values: &[(u64, String)]) -> Result<Vec<OrderKey>, LogError> {
    let Some(first) = values.first() else {
        return Ok(Vec::new());
    };
    let is_float = |v: &str| v.trim().parse::<f64>().is_ok_and(f64::is_finite);
    // ISO-like prefix (YYYY-MM-DD...): lexicographic order is time order.
    let looks_like_timestamp = |v: &str| {
        let v = v.trim().as_bytes();
        v.len() >= 10 && v[4] == b'-' && v[7] == b'-'
    };
    let bad_row = |(row, value): &(u64, String)| LogError::UnsortableOrder {
        row: *row,
        value: value.clone(),
    };

    if is_float(&first.1) {
        if values.iter().all(|(_, v)| v.trim().parse::<i64>().is_ok()) {
            return Ok(values
                .iter()
                .map(|(_, v)| OrderKey::Int(v.trim().parse().unwrap()))
                .collect());
        }
        if let Some(bad) = values.iter().find(|(_, v)| !is_float(v)) {
            return Err(bad_row(bad));
        }
        return Ok(values
            .iter()
            .map(|(_, v)| OrderKey::Float(v.trim().parse().unwrap()))
            .collect());
    }
    if looks_like_timestamp(&first.1) {
        if let Some(bad) = values.iter().find(|(_, v)| !looks_like_timestamp(v)) {
            return Err(bad_row(bad));
        }
        return Ok(values
            .iter()
            .map(|(_, v)| OrderKey::Text(v.trim().to_string()))
            .collect());
    }
    Err(bad_row(first))
}

/// Parses a CSV event table: one row per event, grouped by `case_col`,
/// ordered within each case by `order_col` (stable: ties keep file order).
/// Traces appear in order of first appearance of their case id.
pub fn parse_csv(
    bytes: &[u8],
    case_col: &str,
    activity_col: &str,
    order_col: &str,
) -> Result<EventLog, LogError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LogError::MissingColumn(name.to_string()))
    };
    let case_idx = col(case_col)?;
    let activity_idx = col(activity_col)?;
    let order_idx = col(order_col)?;

    // (case -> rows), plus raw order values for column-wide type inference.
    let mut case_order: Vec<String> = Vec::new();
    let mut rows_by_case: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut activities: Vec<Activity> = Vec::new();
    let mut order_values: Vec<(u64, String)> = Vec::new();

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_number = record
            .position()
            .map(|p| p.line())
            .unwrap_or((i + 2) as u64);
        let case = record.get(case_idx).unwrap_or("").to_string();
        let activity = record.get(activity_idx).unwrap_or("");
        let order = record.get(order_idx).unwrap_or("").to_string();

        if !rows_by_case.contains_key(&case) {
            case_order.push(case.clone());
        }
        rows_by_case.entry(case).or_default().push(activities.len());
        activities.push(Activity::new(activity)?);
        order_values.push((row_number, order));
    }

    let keys = infer_order_keys(&order_values)?;

    let mut traces = Vec::new();
    for case in case_order {
        let mut rows = rows_by_case.remove(&case).unwrap();
        rows.sort_by(|&a, &b| {
            keys[a]
                .partial_cmp(&keys[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let trace: Vec<Activity> = rows.into_iter().map(|r| activities[r].clone()).collect();
        traces.push(Trace::new(trace)?);
    }

    Ok(EventLog::new(traces))
}

/// Writes a log back to `case,activity,order` CSV. Re-parsing the output
/// yields the same multiset of traces.
pub fn write_csv(log: &EventLog) -> String {
    let mut out = String::from("case,activity,order\n");
    for (case, trace) in log.traces().iter().enumerate() {
        for (position, activity) in trace.activities().iter().enumerate() {
            let label = activity.label();
            let needs_quotes = label.contains([',', '"', '\n']);
            if needs_quotes {
                out.push_str(&format!(
                    "{},\"{}\",{}\n",
                    case + 1,
                    label.replace('"', "\"\""),
                    position + 1
                ));
            } else {
                out.push_str(&format!("{},{},{}\n", case + 1, label, position + 1));
            }
        }
    }
    out
}

/// Reads a log from a reader in XES or CSV form depending on `format`.
pub fn parse_reader<R: BufRead>(
    mut reader: R,
    format: LogFormat,
    csv_columns: &CsvColumns,
) -> Result<ParsedLog, LogError> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| LogError::Xml {
            line: 0,
            column: 0,
            message: e.to_string(),
        })?;
    match format {
        LogFormat::Xes => parse_xes(&bytes),
        LogFormat::Csv => Ok(ParsedLog {
            log: parse_csv(
                &bytes,
                &csv_columns.case,
                &csv_columns.activity,
                &csv_columns.order,
            )?,
            dropped_empty_traces: 0,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Xes,
    Csv,
}

/// Column names for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvColumns {
    pub case: String,
    pub activity: String,
    pub order: String,
}

impl Default for CsvColumns {
    fn default() -> Self {
        CsvColumns {
            case: "case".into(),
            activity: "activity".into(),
            order: "order".into(),
        }
    }
}

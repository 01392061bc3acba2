//! CSV ingestion and export of event streams.
//!
//! String ids in the event and entity columns are interned to integers in
//! order of first appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use coldstart_core::preprocess::SchemaSpec;
use coldstart_core::{EntityId, Event, EventId, Label, Oracle};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn row_err(line: u64, message: impl Into<String>) -> CsvError {
    CsvError::Row { line, message: message.into() }
}

/// Reads events from `path`, sorted by timestamp (stable for ties).
pub fn load_csv(path: &Path, schema: &SchemaSpec) -> Result<Vec<Event>, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Io { path: path.display().to_string(), source })?;
    read_events(file, schema)
}

pub fn read_events<R: Read>(reader: R, schema: &SchemaSpec) -> Result<Vec<Event>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize, CsvError> {
        header.iter().position(|h| h.trim() == name).ok_or_else(|| CsvError::MissingColumn(name.to_owned()))
    };
    let c_id = col(&schema.event_id)?;
    let c_ts = col(&schema.timestamp)?;
    let c_ent = col(&schema.entity)?;
    let c_amt = col(&schema.amount)?;
    let c_lab = col(&schema.label)?;
    let c_cat = schema.categoricals.iter().map(|c| col(c)).collect::<Result<Vec<_>, _>>()?;
    let c_num = schema.numericals.iter().map(|c| col(c)).collect::<Result<Vec<_>, _>>()?;

    let mut event_ids: HashMap<String, u64> = HashMap::new();
    let mut entity_ids: HashMap<String, u64> = HashMap::new();
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).map(str::trim).ok_or_else(|| row_err(line, format!("missing field {i}")));
        let real = |i: usize, what: &str| -> Result<f64, CsvError> {
            let raw = field(i)?;
            let v: f64 = raw.parse().map_err(|_| row_err(line, format!("{what} `{raw}` is not a number")))?;
            if v.is_finite() { Ok(v) } else { Err(row_err(line, format!("{what} `{raw}` is not finite"))) }
        };
        let raw_id = field(c_id)?;
        let next = event_ids.len() as u64;
        if event_ids.insert(raw_id.to_owned(), next).is_some() {
            return Err(row_err(line, format!("duplicate event id `{raw_id}`")));
        }
        let raw_ts = field(c_ts)?;
        let ts: i64 = raw_ts.parse().map_err(|_| row_err(line, format!("timestamp `{raw_ts}` is not an integer")))?;
        let raw_ent = field(c_ent)?;
        let n_ent = entity_ids.len() as u64;
        let entity = *entity_ids.entry(raw_ent.to_owned()).or_insert(n_ent);
        let amount = real(c_amt, "amount")?;
        let label = match field(c_lab)? {
            "0" => Label::Negative,
            "1" => Label::Positive,
            other => return Err(row_err(line, format!("label `{other}` is not 0 or 1"))),
        };
        let categoricals = c_cat.iter().map(|&i| field(i).map(str::to_owned)).collect::<Result<Vec<_>, _>>()?;
        let numericals = c_num.iter().map(|&i| real(i, "numerical field")).collect::<Result<Vec<_>, _>>()?;
        events.push(Event::new(EventId(next), ts, EntityId(entity), amount, categoricals, numericals, label));
    }
    events.sort_by_key(|e| e.timestamp);
    Ok(events)
}

/// Writes events in the canonical column order of `schema`.
pub fn write_events<W: Write>(writer: W, events: &[Event], schema: &SchemaSpec) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(schema.columns())?;
    let mut oracle = Oracle::new();
    let mut row: Vec<String> = Vec::new();
    for e in events {
        row.clear();
        row.push(e.event_id.0.to_string());
        row.push(e.timestamp.to_string());
        row.push(e.entity_id.0.to_string());
        row.push(e.amount.to_string());
        row.extend(e.categoricals.iter().cloned());
        row.extend(e.numericals.iter().map(f64::to_string));
        row.push(if oracle.label(e).is_positive() { "1" } else { "0" }.to_owned());
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| CsvError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

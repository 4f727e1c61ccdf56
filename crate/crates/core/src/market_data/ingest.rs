//! CSV ingestion into a [`MarketFrame`].
//!
//! Expected header: `date,hour,id3,da,load,load_fc,wind,wind_fc,vwap_t0,...,vwap_t12`.
//! Empty cells are kept as missing values.

use std::collections::HashSet;
use std::io::{Read, Write};

use chrono::NaiveDate;

use super::calendar::{DeliveryKey, VWAP_COLUMNS};
use super::frame::{HourRecord, MarketFrame};
use super::MarketDataError;

const FIXED_COLUMNS: [&str; 8] = ["date", "hour", "id3", "da", "load", "load_fc", "wind", "wind_fc"];

/// Column names of the market CSV in order.
pub fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend((0..VWAP_COLUMNS).map(|j| format!("vwap_t{j}")));
    cols
}

#[derive(Debug, Clone)]
pub struct SchemaConfig {
    pub delimiter: u8,
    pub date_format: String,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self { delimiter: b',', date_format: "%Y-%m-%d".into() }
    }
}

fn parse_cell(raw: &str, line: u64, column: &str) -> Result<Option<f64>, MarketDataError> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| MarketDataError::MalformedRow {
        line,
        reason: format!("column {column}: cannot parse {s:?}"),
    })?;
    if !v.is_finite() {
        return Err(MarketDataError::MalformedRow { line, reason: format!("column {column}: non-finite value") });
    }
    Ok(Some(v))
}

pub fn ingest<R: Read>(source: R, schema: &SchemaConfig) -> Result<MarketFrame, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| MarketDataError::MalformedRow { line: 1, reason: e.to_string() })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let expected = csv_header();
    if header != expected {
        return Err(MarketDataError::MalformedRow {
            line: 1,
            reason: format!("header mismatch, expected {}", expected.join(",")),
        });
    }

    let mut rows: Vec<(DeliveryKey, HourRecord)> = Vec::new();
    let mut seen = HashSet::new();
    for result in reader.records() {
        let rec = result.map_err(|e| MarketDataError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != expected.len() {
            return Err(MarketDataError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        let date = NaiveDate::parse_from_str(rec[0].trim(), &schema.date_format)
            .map_err(|e| MarketDataError::MalformedRow { line, reason: format!("date: {e}") })?;
        let hour: u8 = rec[1]
            .trim()
            .parse()
            .ok()
            .filter(|h| *h < 24)
            .ok_or_else(|| MarketDataError::MalformedRow { line, reason: format!("hour: {:?}", &rec[1]) })?;
        let key = DeliveryKey::new(date, hour);

        if !seen.insert(key) {
            return Err(MarketDataError::DuplicateKey { key, line });
        }
        if let Some((prev, _)) = rows.last() {
            if key < *prev {
                return Err(MarketDataError::NonMonotoneTimestamps { key, line });
            }
        }

        let cell = |i: usize| parse_cell(&rec[i], line, &expected[i]);
        let mut vwap = [None; VWAP_COLUMNS];
        for (j, slot) in vwap.iter_mut().enumerate() {
            *slot = cell(8 + j)?;
        }
        let record = HourRecord {
            id3: cell(2)?,
            da: cell(3)?,
            load: cell(4)?,
            load_fc: cell(5)?,
            wind: cell(6)?,
            wind_fc: cell(7)?,
            vwap,
        };
        rows.push((key, record));
    }

    let Some((first, _)) = rows.first() else {
        return Ok(MarketFrame::from_parts(NaiveDate::from_ymd_opt(1970, 1, 1).unwrap(), vec![], vec![]));
    };
    let start = first.date;
    let probe = MarketFrame::from_parts(start, vec![], vec![]);
    let last = rows.last().map(|(k, _)| *k).unwrap();
    let len = (probe.position(&last) as usize / 24 + 1) * 24;
    let mut records = vec![HourRecord::default(); len];
    let mut present = vec![false; len];
    for (key, rec) in rows {
        let t = probe.position(&key) as usize;
        records[t] = rec;
        present[t] = true;
    }
    Ok(MarketFrame::from_parts(start, records, present))
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a frame back out in the ingest schema (present rows only).
pub fn write_csv<W: Write>(frame: &MarketFrame, out: W) -> Result<(), MarketDataError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for t in 0..frame.len() {
        let Some(r) = frame.record(t) else { continue };
        let key = frame.key_at(t);
        let mut row = vec![key.date.to_string(), key.hour.to_string()];
        for c in [r.id3, r.da, r.load, r.load_fc, r.wind, r.wind_fc] {
            row.push(fmt_cell(c));
        }
        row.extend(r.vwap.iter().map(|v| fmt_cell(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::calendar::{
    day_number, subperiod_end_offset, subperiod_minutes, DeliveryKey, SUBPERIODS, VWAP_COLUMNS,
};
use super::MarketDataError;

/// One hourly column of the frame. `Vwap(j)` covers `t_0..t_12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Series {
    Id3,
    DayAhead,
    Load,
    LoadForecast,
    Wind,
    WindForecast,
    Vwap(u8),
    /// Sample standard deviation of `t_1..t_12`.
    PathStd,
}

impl Series {
    /// Minutes after (positive) or before (negative) delivery start at which
    /// the cell becomes observable. Day-ahead quantities are published at
    /// noon of the previous day.
    pub fn availability_offset(&self, key: &DeliveryKey) -> i64 {
        match *self {
            Series::Id3 | Series::PathStd => 0,
            Series::Load | Series::Wind => 60,
            Series::Vwap(j) => subperiod_end_offset(j as usize),
            Series::DayAhead | Series::LoadForecast | Series::WindForecast => {
                -(i64::from(key.hour) * 60) - 12 * 60
            }
        }
    }

    /// Absolute availability time of the cell belonging to `key`.
    pub fn available_at(&self, key: &DeliveryKey) -> i64 {
        key.delivery_start() + self.availability_offset(key)
    }

    pub fn name(&self) -> String {
        match self {
            Series::Id3 => "id3".into(),
            Series::DayAhead => "da".into(),
            Series::Load => "load".into(),
            Series::LoadForecast => "load_fc".into(),
            Series::Wind => "wind".into(),
            Series::WindForecast => "wind_fc".into(),
            Series::Vwap(j) => format!("vwap_t{j}"),
            Series::PathStd => "path_std".into(),
        }
    }
}

/// Raw cells of one hourly product. `None` marks a missing value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub id3: Option<f64>,
    pub da: Option<f64>,
    pub load: Option<f64>,
    pub load_fc: Option<f64>,
    pub wind: Option<f64>,
    pub wind_fc: Option<f64>,
    pub vwap: [Option<f64>; VWAP_COLUMNS],
}

impl HourRecord {
    pub fn missing_count(&self) -> usize {
        [self.id3, self.da, self.load, self.load_fc, self.wind, self.wind_fc]
            .iter()
            .chain(self.vwap.iter())
            .filter(|v| v.is_none())
            .count()
    }
}

/// Observed VWAP path of one hourly market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    /// `t_1..t_10`.
    pub values: [f64; SUBPERIODS],
    /// `t_11, t_12`, only needed for ID3 and the path standard deviation.
    pub tail: Option<[f64; 2]>,
    /// `t_0`, the last VWAP before the forecast origin.
    pub last_pre: Option<f64>,
}

impl PricePath {
    pub fn new(values: [f64; SUBPERIODS]) -> Self {
        Self { values, tail: None, last_pre: None }
    }

    pub fn with_last_pre(mut self, t0: f64) -> Self {
        self.last_pre = Some(t0);
        self
    }
}

/// Duration-weighted mean of `t_1..t_12`, the ID3 index when only subperiod
/// VWAPs (no volumes) are known.
pub fn duration_weighted_id3(vwaps: &[f64; 12]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in vwaps.iter().enumerate() {
        let w = subperiod_minutes(i + 1) as f64;
        num += w * v;
        den += w;
    }
    num / den
}

/// Sample standard deviation (denominator n-1).
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Dense hourly table of all market series, indexed by position
/// `t = day_offset * 24 + hour` from the first delivery day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketFrame {
    start: NaiveDate,
    records: Vec<HourRecord>,
    present: Vec<bool>,
}

impl MarketFrame {
    /// Builds a frame from complete days of records starting at `start`, hour 0.
    pub fn from_records(start: NaiveDate, records: Vec<HourRecord>) -> Self {
        let present = vec![true; records.len()];
        Self { start, records, present }
    }

    pub(crate) fn from_parts(start: NaiveDate, records: Vec<HourRecord>, present: Vec<bool>) -> Self {
        debug_assert_eq!(records.len(), present.len());
        Self { start, records, present }
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of whole or partial delivery days covered.
    pub fn days(&self) -> usize {
        self.records.len().div_ceil(24)
    }

    pub fn last_date(&self) -> NaiveDate {
        self.start + Duration::days(self.days() as i64 - 1)
    }

    pub fn key_at(&self, t: usize) -> DeliveryKey {
        DeliveryKey::new(self.start + Duration::days((t / 24) as i64), (t % 24) as u8)
    }

    /// Position of `key`; may be negative or past the end for out-of-range keys.
    pub fn position(&self, key: &DeliveryKey) -> isize {
        ((day_number(key.date) - day_number(self.start)) * 24 + i64::from(key.hour)) as isize
    }

    pub fn index_of(&self, key: &DeliveryKey) -> Option<usize> {
        let t = self.position(key);
        (t >= 0 && (t as usize) < self.records.len() && self.present[t as usize]).then_some(t as usize)
    }

    pub fn keys(&self) -> impl Iterator<Item = DeliveryKey> + '_ {
        (0..self.records.len()).filter(|&t| self.present[t]).map(|t| self.key_at(t))
    }

    pub fn record(&self, t: usize) -> Option<&HourRecord> {
        self.present.get(t).and_then(|&p| p.then(|| &self.records[t]))
    }

    pub fn records(&self) -> &[HourRecord] {
        &self.records
    }

    /// Cell value at position `t`, `None` if missing or out of range.
    pub fn value(&self, t: isize, series: Series) -> Option<f64> {
        if t < 0 {
            return None;
        }
        let r = self.record(t as usize)?;
        match series {
            Series::Id3 => r.id3,
            Series::DayAhead => r.da,
            Series::Load => r.load,
            Series::LoadForecast => r.load_fc,
            Series::Wind => r.wind,
            Series::WindForecast => r.wind_fc,
            Series::Vwap(j) => r.vwap[j as usize],
            Series::PathStd => {
                let mut v = [0.0; 12];
                for (i, slot) in v.iter_mut().enumerate() {
                    *slot = r.vwap[i + 1]?;
                }
                Some(sample_std(&v))
            }
        }
    }

    /// Observed target path of the product at `t`.
    pub fn path(&self, t: usize) -> Result<PricePath, MarketDataError> {
        let key = self.key_at(t);
        let r = self.record(t).ok_or(MarketDataError::MissingPath { key })?;
        let mut values = [0.0; SUBPERIODS];
        for (j, slot) in values.iter_mut().enumerate() {
            *slot = r.vwap[j + 1].ok_or(MarketDataError::MissingPath { key })?;
        }
        let tail = match (r.vwap[11], r.vwap[12]) {
            (Some(a), Some(b)) => Some([a, b]),
            _ => None,
        };
        Ok(PricePath { values, tail, last_pre: r.vwap[0] })
    }

    pub fn path_for(&self, key: &DeliveryKey) -> Result<PricePath, MarketDataError> {
        let t = self.index_of(key).ok_or(MarketDataError::MissingPath { key: *key })?;
        self.path(t)
    }

    /// Number of missing cells over all present rows.
    pub fn missing_cells(&self) -> usize {
        (0..self.records.len())
            .filter_map(|t| self.record(t))
            .map(HourRecord::missing_count)
            .sum()
    }

    /// Content hash over dates, presence flags and the bit patterns of all cells.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.start.to_string().as_bytes());
        for (r, &p) in self.records.iter().zip(&self.present) {
            h.update([p as u8]);
            let cells = [r.id3, r.da, r.load, r.load_fc, r.wind, r.wind_fc];
            for c in cells.iter().chain(r.vwap.iter()) {
                match c {
                    Some(v) => {
                        h.update([1u8]);
                        h.update(v.to_bits().to_le_bytes());
                    }
                    None => h.update([0u8]),
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Sub-frame covering whole days `[from, to)` (clamped to the frame).
    pub fn slice_days(&self, from: NaiveDate, to: NaiveDate) -> MarketFrame {
        let a = (self.position(&DeliveryKey::new(from, 0)).max(0) as usize).min(self.records.len());
        let b = (self.position(&DeliveryKey::new(to, 0)).max(0) as usize).min(self.records.len());
        let start = if a < self.records.len() { self.key_at(a).date } else { from };
        MarketFrame {
            start,
            records: self.records[a..b.max(a)].to_vec(),
            present: self.present[a..b.max(a)].to_vec(),
        }
    }
}

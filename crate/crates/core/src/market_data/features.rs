//! Regressor and network-input construction with an availability check on
//! every cell read.
//!
//! All builders read through [`CellReader`], which rejects any cell whose
//! availability time lies after the forecast origin (delivery minus three
//! hours) and collects missing cells instead of imputing them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::calendar::DeliveryKey;
use super::frame::{MarketFrame, Series};
use super::MarketDataError;

pub const LEAR_FEATURES: usize = 101;
/// Lags (in hours) covered by the long-history network inputs.
pub const CGM_LAG_MIN: i64 = 4;
pub const CGM_LAG_MAX: i64 = 168;
pub const CGM_LAGS: usize = (CGM_LAG_MAX - CGM_LAG_MIN + 1) as usize;
pub const INPUT1_VARIABLES: usize = 20;
pub const INPUT1_LEN: usize = INPUT1_VARIABLES * CGM_LAGS;
pub const INPUT2_LEN: usize = CGM_LAGS;
pub const INPUT3_LEN: usize = INPUT1_VARIABLES + 16 + 12 + 4;
/// Period of the day-of-year sine/cosine pair, in days.
pub const YEAR_PERIOD_DAYS: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSchema {
    Lear,
    Input1,
    Input2,
    Input3,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        match self {
            FeatureSchema::Lear => LEAR_FEATURES,
            FeatureSchema::Input1 => INPUT1_LEN,
            FeatureSchema::Input2 => INPUT2_LEN,
            FeatureSchema::Input3 => INPUT3_LEN,
        }
    }
}

/// Ordered feature values plus the latest availability time among the cells read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub schema: FeatureSchema,
    pub values: Vec<f64>,
    /// Weekday category 1..=7, carried next to `Input3` only.
    pub weekday: Option<u8>,
    pub latest_input: i64,
}

/// The 20 long-history variables in their fixed (variable-major) order.
pub fn input1_variables() -> [Series; INPUT1_VARIABLES] {
    let mut v = [Series::Id3; INPUT1_VARIABLES];
    v[1] = Series::DayAhead;
    v[2] = Series::Load;
    v[3] = Series::LoadForecast;
    v[4] = Series::Wind;
    v[5] = Series::WindForecast;
    for j in 0..13u8 {
        v[6 + j as usize] = Series::Vwap(j);
    }
    v[19] = Series::PathStd;
    v
}

/// Reads frame cells relative to a target product, enforcing the
/// availability cutoff and collecting missing cells.
pub struct CellReader<'a> {
    frame: &'a MarketFrame,
    target: DeliveryKey,
    cutoff: i64,
    latest: i64,
    missing: Vec<String>,
}

impl<'a> CellReader<'a> {
    /// Reader for forecasting `target`; the cutoff is its forecast origin.
    pub fn for_target(frame: &'a MarketFrame, target: DeliveryKey) -> Self {
        Self::with_cutoff(frame, target, target.forecast_origin())
    }

    pub fn with_cutoff(frame: &'a MarketFrame, target: DeliveryKey, cutoff: i64) -> Self {
        Self { frame, target, cutoff, latest: i64::MIN, missing: Vec::new() }
    }

    /// Cell of the product `lag` hours before the target. Missing cells yield
    /// `NaN` and are reported by [`finish`](Self::finish).
    pub fn get(&mut self, lag: i64, series: Series) -> Result<f64, MarketDataError> {
        let key = self.target.offset_hours(-lag);
        self.get_key(key, series)
    }

    pub fn get_key(&mut self, key: DeliveryKey, series: Series) -> Result<f64, MarketDataError> {
        let available = series.available_at(&key);
        if available > self.cutoff {
            return Err(MarketDataError::LeakageViolation {
                target: self.target,
                cell: key,
                series: series.name(),
                available_at: available,
                cutoff: self.cutoff,
            });
        }
        self.latest = self.latest.max(available);
        match self.frame.value(self.frame.position(&key), series) {
            Some(v) => Ok(v),
            None => {
                self.missing.push(format!("{} {}", key, series.name()));
                Ok(f64::NAN)
            }
        }
    }

    pub fn latest(&self) -> i64 {
        self.latest
    }

    pub fn finish(self) -> Result<i64, MarketDataError> {
        if self.missing.is_empty() {
            Ok(self.latest)
        } else {
            Err(MarketDataError::InsufficientHistory { key: self.target, cells: self.missing })
        }
    }
}

/// Names of the 101 LEAR regressors, in vector order.
pub fn lear_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(LEAR_FEATURES);
    names.extend((4..=24).map(|i| format!("id3_h-{i}")));
    names.extend((0..=24).map(|i| format!("da_h-{i}")));
    names.extend((0..=24).map(|i| format!("wind_fc_h-{i}")));
    names.extend((0..=24).map(|i| format!("load_fc_h-{i}")));
    names.extend(["wind_h-4", "wind_h-24", "load_h-4", "load_h-24", "vwap_t0_h-0"].map(String::from));
    names
}

/// LEAR regressors for `key`; the same set serves all ten subperiod models.
pub fn build_lear_features(frame: &MarketFrame, key: DeliveryKey) -> Result<FeatureVector, MarketDataError> {
    let mut r = CellReader::for_target(frame, key);
    let mut values = Vec::with_capacity(LEAR_FEATURES);
    for i in 4..=24 {
        values.push(r.get(i, Series::Id3)?);
    }
    for i in 0..=24 {
        values.push(r.get(i, Series::DayAhead)?);
    }
    for i in 0..=24 {
        values.push(r.get(i, Series::WindForecast)?);
    }
    for i in 0..=24 {
        values.push(r.get(i, Series::LoadForecast)?);
    }
    values.push(r.get(4, Series::Wind)?);
    values.push(r.get(24, Series::Wind)?);
    values.push(r.get(4, Series::Load)?);
    values.push(r.get(24, Series::Load)?);
    values.push(r.get(0, Series::Vwap(0))?);
    let latest_input = r.finish()?;
    debug_assert_eq!(values.len(), LEAR_FEATURES);
    Ok(FeatureVector { schema: FeatureSchema::Lear, values, weekday: None, latest_input })
}

/// Inputs of the three generator modules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgmInputs {
    pub input1: FeatureVector,
    pub input2: FeatureVector,
    pub input3: FeatureVector,
}

impl CgmInputs {
    pub fn weekday(&self) -> u8 {
        self.input3.weekday.expect("input3 carries the weekday")
    }

    pub fn latest_input(&self) -> i64 {
        self.input1.latest_input.max(self.input2.latest_input).max(self.input3.latest_input)
    }
}

/// Subperiods of the partial paths of markets `h-2` and `h-3` that have
/// closed by the forecast origin and enter `Input3`.
pub const PARTIAL_PATH_H2: std::ops::RangeInclusive<u8> = 5..=8;
pub const PARTIAL_PATH_H3: std::ops::RangeInclusive<u8> = 5..=12;

pub fn build_cgm_inputs(frame: &MarketFrame, key: DeliveryKey) -> Result<CgmInputs, MarketDataError> {
    let vars = input1_variables();

    let mut r = CellReader::for_target(frame, key);
    let mut in1 = Vec::with_capacity(INPUT1_LEN);
    for s in vars {
        for lag in CGM_LAG_MIN..=CGM_LAG_MAX {
            in1.push(r.get(lag, s)?);
        }
    }
    let latest1 = r.finish()?;

    let mut r = CellReader::for_target(frame, key);
    let in2: Vec<f64> = (CGM_LAG_MIN..=CGM_LAG_MAX)
        .map(|lag| r.get(lag, Series::PathStd))
        .collect::<Result<_, _>>()?;
    let latest2 = r.finish()?;

    let mut r = CellReader::for_target(frame, key);
    let mut in3 = Vec::with_capacity(INPUT3_LEN);
    for s in vars {
        in3.push(r.get(CGM_LAG_MIN, s)?);
    }
    for s in [Series::DayAhead, Series::LoadForecast, Series::WindForecast, Series::Vwap(0)] {
        for lag in 0..=3 {
            in3.push(r.get(lag, s)?);
        }
    }
    for j in PARTIAL_PATH_H2 {
        in3.push(r.get(2, Series::Vwap(j))?);
    }
    for j in PARTIAL_PATH_H3 {
        in3.push(r.get(3, Series::Vwap(j))?);
    }
    let doy = 2.0 * PI * key.day_of_year() as f64 / YEAR_PERIOD_DAYS;
    let hod = 2.0 * PI * key.hour as f64 / 24.0;
    in3.extend([doy.sin(), doy.cos(), hod.sin(), hod.cos()]);
    let latest3 = r.finish()?;
    debug_assert_eq!(in3.len(), INPUT3_LEN);

    Ok(CgmInputs {
        input1: FeatureVector { schema: FeatureSchema::Input1, values: in1, weekday: None, latest_input: latest1 },
        input2: FeatureVector { schema: FeatureSchema::Input2, values: in2, weekday: None, latest_input: latest2 },
        input3: FeatureVector {
            schema: FeatureSchema::Input3,
            values: in3,
            weekday: Some(key.weekday()),
            latest_input: latest3,
        },
    })
}

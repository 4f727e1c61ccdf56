//! Synthetic market generator standing in for proprietary exchange data.
//!
//! Day-ahead prices follow a seasonal autoregression driven by load and wind
//! forecasts. Intraday subperiod VWAPs move around the day-ahead price by the
//! forecast errors, with a noise scale that grows with the absolute wind
//! forecast error (persistent over hours, so lagged path dispersion predicts
//! it) and an optional linear drift into the last subperiod.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::market_data::frame::duration_weighted_id3;
use crate::market_data::{HourRecord, MarketFrame, VWAP_COLUMNS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub days: usize,
    pub seed: u64,
    pub start: NaiveDate,
    /// Expected price increase from `t_1` to `t_10` (EUR/MWh).
    pub drift: f64,
    /// Baseline intraday noise scale (EUR/MWh).
    pub noise_scale: f64,
    /// Hourly autocorrelation of the wind forecast error.
    pub wind_error_persistence: f64,
    /// Standard deviation of the wind forecast error (MW).
    pub wind_error_std: f64,
    /// Price response to the wind forecast error (EUR/MWh per GW).
    pub wind_error_impact: f64,
    /// Price response to the load forecast error (EUR/MWh per GW).
    pub load_error_impact: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 90,
            seed: 1,
            start: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            drift: 3.0,
            noise_scale: 4.0,
            wind_error_persistence: 0.97,
            wind_error_std: 1500.0,
            wind_error_impact: 3.0,
            load_error_impact: 2.0,
        }
    }
}

/// Generated frame plus the noise scale used for every hourly product.
#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub frame: MarketFrame,
    pub noise_scale: Vec<f64>,
}

pub fn generate(cfg: &SynthConfig) -> SyntheticMarket {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut n = move || -> f64 { rng.sample(StandardNormal) };
    let hours = cfg.days * 24;
    let rho = cfg.wind_error_persistence;
    let innov = cfg.wind_error_std * (1.0 - rho * rho).sqrt();
    let mut wind_level = 0.0f64;
    let mut wind_err = cfg.wind_error_std * n();
    let mut load_err = 0.0f64;
    let mut da_noise = 0.0f64;
    let mut records = Vec::with_capacity(hours);
    let mut scales = Vec::with_capacity(hours);
    for t in 0..hours {
        let day = t / 24;
        let hour = t % 24;
        let weekday = (cfg.start + chrono::Days::new(day as u64)).format("%u").to_string().parse::<u8>().expect("weekday");
        let weekend = weekday >= 6;
        let daily = (2.0 * std::f64::consts::PI * (hour as f64 - 6.0) / 24.0).sin();
        let season = (2.0 * std::f64::consts::PI * day as f64 / 365.25).cos();

        let load_fc = 55_000.0 + 9_000.0 * daily + 4_000.0 * season - if weekend { 8_000.0 } else { 0.0 } + 500.0 * n();
        load_err = 0.8 * load_err + 600.0 * n();
        let load = load_fc + load_err;

        wind_level = 0.99 * wind_level + 900.0 * n();
        let wind_fc = (12_000.0 + wind_level + 3_000.0 * season).max(200.0);
        wind_err = rho * wind_err + innov * n();
        let wind = (wind_fc + wind_err).max(0.0);

        da_noise = 0.9 * da_noise + 2.0 * n();
        let da = 42.0 + 10.0 * daily + 0.0006 * (load_fc - 55_000.0) - 0.0012 * (wind_fc - 12_000.0)
            - if weekend { 6.0 } else { 0.0 }
            + da_noise;

        let level = da - cfg.wind_error_impact * (wind - wind_fc) / 1000.0 + cfg.load_error_impact * load_err / 1000.0;
        let scale = cfg.noise_scale * (0.5 + wind_err.abs() / cfg.wind_error_std);
        let common = 0.5 * scale * n();
        let mut vwap = [None; VWAP_COLUMNS];
        for (j, slot) in vwap.iter_mut().enumerate() {
            let drift = cfg.drift * j as f64 / 10.0;
            *slot = Some(level + common + drift + scale * n());
        }
        let mut tail = [0.0; 12];
        for (i, v) in tail.iter_mut().enumerate() {
            *v = vwap[i + 1].expect("filled");
        }
        records.push(HourRecord {
            id3: Some(duration_weighted_id3(&tail)),
            da: Some(da),
            load: Some(load),
            load_fc: Some(load_fc),
            wind: Some(wind),
            wind_fc: Some(wind_fc),
            vwap,
        });
        scales.push(scale);
    }
    SyntheticMarket { frame: MarketFrame::from_records(cfg.start, records), noise_scale: scales }
}

//! Delivery calendar: hourly products, the ten traded subperiods and the
//! availability time of every data cell relative to delivery.
//!
//! All times are integer minutes since 1970-01-01T00:00 in the market's
//! local (DST-free) clock.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of forecast subperiods `t_1..t_10`.
pub const SUBPERIODS: usize = 10;
/// Number of stored VWAP columns `t_0..t_12`.
pub const VWAP_COLUMNS: usize = 13;
/// Forecasts are issued this many minutes before delivery starts.
pub const FORECAST_LEAD_MINUTES: i64 = 180;

const MINUTES_PER_DAY: i64 = 1440;

/// One hourly product: delivery day and delivery hour start (0-23).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeliveryKey {
    pub date: NaiveDate,
    pub hour: u8,
}

impl DeliveryKey {
    pub fn new(date: NaiveDate, hour: u8) -> Self {
        assert!(hour < 24, "delivery hour out of range: {hour}");
        Self { date, hour }
    }

    /// The product `hours` later (negative = earlier).
    pub fn offset_hours(&self, hours: i64) -> Self {
        let total = day_number(self.date) * 24 + i64::from(self.hour) + hours;
        let day = total.div_euclid(24);
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch");
        Self { date: epoch + chrono::Duration::days(day), hour: total.rem_euclid(24) as u8 }
    }

    /// Delivery start in minutes since the epoch.
    pub fn delivery_start(&self) -> i64 {
        day_number(self.date) * MINUTES_PER_DAY + i64::from(self.hour) * 60
    }

    /// The moment the forecast for this product is issued.
    pub fn forecast_origin(&self) -> i64 {
        self.delivery_start() - FORECAST_LEAD_MINUTES
    }

    /// On-peak delivery hours are 8:00-19:00 (hour starts 8..=19).
    pub fn is_peak(&self) -> bool {
        (8..=19).contains(&self.hour)
    }

    /// Weekday category 1 (Monday) ..= 7 (Sunday).
    pub fn weekday(&self) -> u8 {
        self.date.weekday().number_from_monday() as u8
    }

    pub fn day_of_year(&self) -> u32 {
        self.date.ordinal()
    }
}

impl fmt::Display for DeliveryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:02}:00", self.date, self.hour)
    }
}

pub(crate) fn day_number(date: NaiveDate) -> i64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch");
    (date - epoch).num_days()
}

/// Length of subperiod `j` in minutes; `t_1` is shortened to ten minutes.
pub fn subperiod_minutes(j: usize) -> i64 {
    assert!(j < VWAP_COLUMNS, "subperiod index out of range: {j}");
    if j == 1 {
        10
    } else {
        15
    }
}

/// End of subperiod `j` relative to delivery start (negative = before).
pub fn subperiod_end_offset(j: usize) -> i64 {
    assert!(j < VWAP_COLUMNS, "subperiod index out of range: {j}");
    match j {
        0 => -FORECAST_LEAD_MINUTES,
        _ => -165 + 15 * (j as i64 - 1),
    }
}

/// Start of subperiod `j` relative to delivery start.
pub fn subperiod_start_offset(j: usize) -> i64 {
    subperiod_end_offset(j) - subperiod_minutes(j)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subperiods_tile_the_last_three_hours() {
        // t_1 opens five minutes after the forecast origin, t_12 closes at delivery.
        assert_eq!(subperiod_start_offset(1), -175);
        assert_eq!(subperiod_end_offset(12), 0);
        assert_eq!(subperiod_end_offset(10), -30);
        for j in 2..VWAP_COLUMNS {
            assert_eq!(subperiod_start_offset(j), subperiod_end_offset(j - 1));
        }
        assert_eq!(subperiod_start_offset(0), -195);
    }

    #[test]
    fn keys_order_lexicographically() {
        let d1 = NaiveDate::from_ymd_opt(2019, 3, 13).unwrap();
        let d2 = d1.succ_opt().unwrap();
        assert!(DeliveryKey::new(d1, 23) < DeliveryKey::new(d2, 0));
        assert!(DeliveryKey::new(d1, 3) < DeliveryKey::new(d1, 4));
        assert_eq!(
            DeliveryKey::new(d2, 0).delivery_start() - DeliveryKey::new(d1, 23).delivery_start(),
            60
        );
    }

    #[test]
    fn peak_hours() {
        let d = NaiveDate::from_ymd_opt(2019, 3, 13).unwrap();
        let peak: Vec<u8> = (0..24).filter(|&h| DeliveryKey::new(d, h).is_peak()).collect();
        assert_eq!(peak.len(), 12);
        assert_eq!(peak.first(), Some(&8));
        assert_eq!(peak.last(), Some(&19));
    }
}

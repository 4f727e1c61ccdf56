//! Simultaneous prediction bands from trajectory ensembles.
//!
//! Trajectories holding the global extreme (maximum for an upper band,
//! minimum for a lower band) are removed one at a time until `ceil(α·M)`
//! remain; the band is the pointwise extreme of the survivors. Removing a
//! trajectory never changes the extremes of the others, so the removal
//! order is simply the trajectories sorted by their own extreme value, with
//! ties removing the lower row index first.

use std::cmp::Ordering;
use std::io::Write;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::market_data::DeliveryKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BandSide {
    Upper,
    Lower,
}

impl BandSide {
    pub fn as_str(&self) -> &'static str {
        match self {
            BandSide::Upper => "upper",
            BandSide::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBand {
    pub side: BandSide,
    pub scp: f64,
    pub values: Vec<f64>,
    /// Surviving row indices, ascending.
    pub survivors: Vec<usize>,
}

/// `ceil(α·M)`, tolerant to the representation error of `α` (0.6·10 = 6).
pub fn survivor_count(scp: f64, m: usize) -> usize {
    let raw = scp * m as f64;
    let k = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    k.clamp(1, m)
}

/// Rows in removal order for `side`.
fn removal_order(samples: &ArrayView2<f64>, side: BandSide) -> Vec<usize> {
    let extremes: Vec<f64> = samples
        .rows()
        .into_iter()
        .map(|r| match side {
            BandSide::Upper => r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            BandSide::Lower => r.iter().copied().fold(f64::INFINITY, f64::min),
        })
        .collect();
    let mut order: Vec<usize> = (0..extremes.len()).collect();
    order.sort_by(|&a, &b| {
        let by_value = match side {
            BandSide::Upper => extremes[b].total_cmp(&extremes[a]),
            BandSide::Lower => extremes[a].total_cmp(&extremes[b]),
        };
        by_value.then(a.cmp(&b))
    });
    order
}

fn band_from_survivors(samples: &ArrayView2<f64>, survivors: Vec<usize>, side: BandSide, scp: f64) -> PredictionBand {
    let d = samples.ncols();
    let init = match side {
        BandSide::Upper => f64::NEG_INFINITY,
        BandSide::Lower => f64::INFINITY,
    };
    let mut values = vec![init; d];
    for &i in &survivors {
        for (v, x) in values.iter_mut().zip(samples.row(i)) {
            *v = match side {
                BandSide::Upper => v.max(*x),
                BandSide::Lower => v.min(*x),
            };
        }
    }
    PredictionBand { side, scp, values, survivors }
}

pub fn build_band(samples: ArrayView2<f64>, scp: f64, side: BandSide) -> PredictionBand {
    build_bands(samples, &[scp], side).pop().expect("one band")
}

/// Bands for several coverage levels sharing one removal ordering.
pub fn build_bands(samples: ArrayView2<f64>, scps: &[f64], side: BandSide) -> Vec<PredictionBand> {
    let m = samples.nrows();
    assert!(m >= 1, "band needs at least one trajectory");
    let order = removal_order(&samples, side);
    scps.iter()
        .map(|&scp| {
            assert!(scp > 0.0 && scp <= 1.0, "SCP must lie in (0, 1], got {scp}");
            let keep = survivor_count(scp, m);
            let mut survivors = order[m - keep..].to_vec();
            survivors.sort_unstable();
            band_from_survivors(&samples, survivors, side, scp)
        })
        .collect()
}

/// Fraction of paths lying entirely on the covered side of the band.
pub fn empirical_scp(band: &PredictionBand, paths: &[Vec<f64>]) -> f64 {
    assert!(!paths.is_empty());
    let inside = paths
        .iter()
        .filter(|p| {
            p.iter().zip(&band.values).all(|(x, b)| match band.side {
                BandSide::Upper => x.partial_cmp(b) != Some(Ordering::Greater),
                BandSide::Lower => x.partial_cmp(b) != Some(Ordering::Less),
            })
        })
        .count();
    inside as f64 / paths.len() as f64
}

/// Writes `(date, hour, side, scp, b_t1..b_tD)` rows.
pub fn write_bands_csv<W: Write>(rows: &[(DeliveryKey, PredictionBand)], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let d = rows.first().map(|(_, b)| b.values.len()).unwrap_or(10);
    let mut header = vec!["date".to_string(), "hour".into(), "side".into(), "scp".into()];
    header.extend((1..=d).map(|j| format!("b_t{j}")));
    w.write_record(&header)?;
    for (key, band) in rows {
        let mut rec = vec![key.date.to_string(), key.hour.to_string(), band.side.as_str().to_string(), band.scp.to_string()];
        rec.extend(band.values.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

//! Proper scoring rules for sample-based forecasts: CRPS, energy score,
//! Dawid-Sebastiani score and variogram score.
//!
//! Ensembles are `M x D` matrices with one sampled path per row.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{DeliveryKey, SUBPERIODS};

/// Diagonal jitter added to the sample covariance when one of its squared
/// Cholesky pivots is at or below this size.
pub const DSS_JITTER: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("energy score needs at least two samples, got {0}")]
    SingleSample(usize),
    #[error("sample covariance is singular ({0})")]
    SingularCovariance(String),
    #[error("dimension mismatch: samples have {samples} columns, observation {observation}")]
    DimensionMismatch { samples: usize, observation: usize },
}

fn check_dims(samples: &ArrayView2<f64>, obs: &ArrayView1<f64>) -> Result<(), ScoringError> {
    if samples.ncols() != obs.len() {
        return Err(ScoringError::DimensionMismatch { samples: samples.ncols(), observation: obs.len() });
    }
    Ok(())
}

/// Sum over all ordered pairs `Σ_m Σ_n |x_m - x_n|`, via sorting.
fn pairwise_abs_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - m - 1.0) * x)
        .sum::<f64>()
        * 2.0
}

/// Sample CRPS with the `1/(2M²)` pairwise term.
pub fn crps(samples: &[f64], observation: f64) -> f64 {
    let m = samples.len() as f64;
    assert!(!samples.is_empty(), "crps needs at least one sample");
    let mae = samples.iter().map(|x| (x - observation).abs()).sum::<f64>() / m;
    let mut sorted = samples.to_vec();
    mae - pairwise_abs_sum(&mut sorted) / (2.0 * m * m)
}

fn euclid(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Energy score with the unordered-pairs term `1/(M(M-1)) Σ_{m<n}`.
pub fn energy_score(samples: ArrayView2<f64>, observation: ArrayView1<f64>) -> Result<f64, ScoringError> {
    check_dims(&samples, &observation)?;
    let m = samples.nrows();
    if m < 2 {
        return Err(ScoringError::SingleSample(m));
    }
    let mf = m as f64;
    let mut to_obs = 0.0;
    let mut pairs = 0.0;
    for i in 0..m {
        let xi = samples.row(i);
        to_obs += euclid(xi, observation);
        for k in (i + 1)..m {
            pairs += euclid(xi, samples.row(k));
        }
    }
    Ok(to_obs / mf - pairs / (mf * (mf - 1.0)))
}

/// Energy score and its gradient with respect to every sample entry.
/// Zero distances contribute a zero subgradient.
pub fn energy_score_with_grad(
    samples: ArrayView2<f64>,
    observation: ArrayView1<f64>,
) -> Result<(f64, Array2<f64>), ScoringError> {
    check_dims(&samples, &observation)?;
    let (m, d) = samples.dim();
    if m < 2 {
        return Err(ScoringError::SingleSample(m));
    }
    let mf = m as f64;
    let pair_w = 1.0 / (mf * (mf - 1.0));
    let mut grad = Array2::<f64>::zeros((m, d));
    let mut to_obs = 0.0;
    let mut pairs = 0.0;
    let mut diff = vec![0.0; d];
    for i in 0..m {
        let xi = samples.row(i);
        let dist = euclid(xi, observation);
        to_obs += dist;
        if dist > 0.0 {
            for j in 0..d {
                grad[[i, j]] += (xi[j] - observation[j]) / (dist * mf);
            }
        }
        for k in (i + 1)..m {
            let xk = samples.row(k);
            let mut ss = 0.0;
            for j in 0..d {
                diff[j] = xi[j] - xk[j];
                ss += diff[j] * diff[j];
            }
            let dist = ss.sqrt();
            pairs += dist;
            if dist > 0.0 {
                for j in 0..d {
                    let g = pair_w * diff[j] / dist;
                    grad[[i, j]] -= g;
                    grad[[k, j]] += g;
                }
            }
        }
    }
    Ok((to_obs / mf - pairs * pair_w, grad))
}

/// `log det S + Kᵀ S⁻¹ K` with the (n-1) sample covariance, jittered only
/// when it is numerically singular.
///
/// Works on the QR factorization of the centered samples, `S = RᵀR/(M-1)`,
/// so the conditioning of `S` is never squared.
pub fn dawid_sebastiani(samples: ArrayView2<f64>, observation: ArrayView1<f64>) -> Result<f64, ScoringError> {
    check_dims(&samples, &observation)?;
    let (m, d) = samples.dim();
    if m < d + 1 {
        return Err(ScoringError::SingularCovariance(format!("{m} samples for dimension {d}")));
    }
    let mean = samples.mean_axis(Axis(0)).expect("non-empty");
    let n1 = m as f64 - 1.0;
    let centered = DMatrix::from_fn(m, d, |i, j| samples[[i, j]] - mean[j]);
    let k = DVector::from_iterator(d, (0..d).map(|j| observation[j] - mean[j]));
    let r = centered.clone().qr().r();
    let score = if r.diagonal().iter().all(|v| v * v / n1 > DSS_JITTER) {
        let log_det = r.diagonal().iter().map(|v| (v * v).ln()).sum::<f64>() - d as f64 * n1.ln();
        let z = r
            .transpose()
            .solve_lower_triangular(&k)
            .ok_or_else(|| ScoringError::SingularCovariance("zero pivot".into()))?;
        log_det + n1 * z.norm_squared()
    } else {
        let mut cov = centered.transpose() * &centered / n1;
        for a in 0..d {
            cov[(a, a)] += DSS_JITTER;
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| ScoringError::SingularCovariance("cholesky failed after jitter".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        log_det + k.dot(&chol.solve(&k))
    };
    if score.is_finite() {
        Ok(score)
    } else {
        Err(ScoringError::SingularCovariance("non-finite score".into()))
    }
}

/// Variogram score of order `p` with explicit weights.
pub fn variogram_score(
    samples: ArrayView2<f64>,
    observation: ArrayView1<f64>,
    p: f64,
    weights: ArrayView2<f64>,
) -> Result<f64, ScoringError> {
    check_dims(&samples, &observation)?;
    let (m, d) = samples.dim();
    assert!(m >= 1 && p > 0.0);
    assert_eq!(weights.dim(), (d, d), "weights must be D x D");
    // Mean sample variogram per cell, accumulated row by row.
    let mut sample_vario = vec![0.0; d * d];
    for row in samples.rows() {
        for i in 0..d {
            for j in (i + 1)..d {
                sample_vario[i * d + j] += (row[i] - row[j]).abs().powf(p);
            }
        }
    }
    let mut score = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            let obs_v = (observation[i] - observation[j]).abs().powf(p);
            let diff = obs_v - sample_vario[i * d + j] / m as f64;
            // Cells (i, j) and (j, i) are equal; diagonal cells vanish.
            score += (weights[[i, j]] + weights[[j, i]]) * diff * diff;
        }
    }
    Ok(score)
}

/// Variogram score with uniform weights `1/D²` (1/100 for ten subperiods).
pub fn variogram_score_uniform(
    samples: ArrayView2<f64>,
    observation: ArrayView1<f64>,
    p: f64,
) -> Result<f64, ScoringError> {
    let d = observation.len();
    let w = Array2::from_elem((d, d), 1.0 / (d * d) as f64);
    variogram_score(samples, observation, p, w.view())
}

/// All scores of one hourly market for one generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyScores {
    pub key: DeliveryKey,
    pub es: f64,
    /// `None` when the ensemble covariance is singular.
    pub dss: Option<f64>,
    pub vs1: f64,
    pub vs05: f64,
    pub crps: [f64; SUBPERIODS],
    /// Absolute error of the per-subperiod sample median.
    pub mae: [f64; SUBPERIODS],
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn score_ensemble(
    key: DeliveryKey,
    samples: ArrayView2<f64>,
    observation: &[f64; SUBPERIODS],
) -> Result<KeyScores, ScoringError> {
    let obs = ArrayView1::from(observation.as_slice());
    let es = energy_score(samples, obs)?;
    let dss = dawid_sebastiani(samples, obs).ok();
    let vs1 = variogram_score_uniform(samples, obs, 1.0)?;
    let vs05 = variogram_score_uniform(samples, obs, 0.5)?;
    let mut crps_v = [0.0; SUBPERIODS];
    let mut mae = [0.0; SUBPERIODS];
    for j in 0..SUBPERIODS {
        let mut col = samples.column(j).to_vec();
        crps_v[j] = crps(&col, observation[j]);
        mae[j] = (median_of(&mut col) - observation[j]).abs();
    }
    Ok(KeyScores { key, es, dss, vs1, vs05, crps: crps_v, mae })
}

pub fn score_csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["date", "hour", "peak_flag", "es", "dss", "vs1", "vs05"].map(String::from).to_vec();
    h.extend((1..=SUBPERIODS).map(|j| format!("crps_t{j}")));
    h.extend((1..=SUBPERIODS).map(|j| format!("mae_t{j}")));
    h
}

pub fn write_scores_csv<W: Write>(rows: &[KeyScores], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(score_csv_header())?;
    for r in rows {
        let mut rec = vec![
            r.key.date.to_string(),
            r.key.hour.to_string(),
            (r.key.is_peak() as u8).to_string(),
            r.es.to_string(),
            r.dss.map(|v| v.to_string()).unwrap_or_default(),
            r.vs1.to_string(),
            r.vs05.to_string(),
        ];
        rec.extend(r.crps.iter().map(f64::to_string));
        rec.extend(r.mae.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

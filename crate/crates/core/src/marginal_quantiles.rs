//! Quantile regression of observed prices on the point forecast, giving 99
//! percentiles per subperiod, and the piecewise-linear marginal CDF built
//! from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of percentile levels `0.01, …, 0.99`.
pub const PERCENTILES: usize = 99;
pub const MIN_QR_OBSERVATIONS: usize = 30;
/// Smoothing of `|r|` in the reweighting step.
pub const IRLS_EPSILON: f64 = 1e-6;
const IRLS_MAX_ITER: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum QuantileError {
    #[error("quantile regression needs at least {MIN_QR_OBSERVATIONS} observations, got {0}")]
    TooFewObservations(usize),
    #[error("regressor is constant")]
    Degenerate,
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("length mismatch: {0} forecasts vs {1} observations")]
    LengthMismatch(usize, usize),
    #[error("non-finite input")]
    NonFinite,
    #[error("fan needs {PERCENTILES} finite values, got {0}")]
    BadFan(usize),
}

pub fn percentile_level(k: usize) -> f64 {
    (k + 1) as f64 / 100.0
}

pub fn pinball(residual: f64, p: f64) -> f64 {
    if residual >= 0.0 {
        p * residual
    } else {
        (p - 1.0) * residual
    }
}

/// `Σ ρ_p(y − a − b·x)`.
pub fn pinball_objective(x: &[f64], y: &[f64], p: f64, intercept: f64, slope: f64) -> f64 {
    x.iter().zip(y).map(|(xi, yi)| pinball(yi - intercept - slope * xi, p)).sum()
}

/// Fitted quantile line `y ≈ intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileLine {
    pub intercept: f64,
    pub slope: f64,
}

impl QuantileLine {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Intercept-only quantile: the lower empirical `p`-quantile, which
/// minimizes the pinball loss.
pub fn fit_intercept_quantile(y: &[f64], p: f64) -> Result<f64, QuantileError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(QuantileError::InvalidProbability(p));
    }
    if y.is_empty() {
        return Err(QuantileError::TooFewObservations(0));
    }
    let mut v = y.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Ok(v[k - 1])
}

/// Single-regressor quantile regression. Majorize-minimize reweighted least
/// squares on the smoothed pinball loss, finished by an exact descent over
/// lines through pairs of data points (the optimum is attained on one).
pub fn fit_quantile(x: &[f64], y: &[f64], p: f64) -> Result<QuantileLine, QuantileError> {
    if x.len() != y.len() {
        return Err(QuantileError::LengthMismatch(x.len(), y.len()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(QuantileError::InvalidProbability(p));
    }
    if x.len() < MIN_QR_OBSERVATIONS {
        return Err(QuantileError::TooFewObservations(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(QuantileError::NonFinite);
    }
    let x0 = x[0];
    if x.iter().all(|v| *v == x0) {
        return Err(QuantileError::Degenerate);
    }
    Ok(solve_quantile(x, y, p))
}

fn solve_quantile(x: &[f64], y: &[f64], p: f64) -> QuantileLine {
    // Start from least squares.
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let mut slope = sxy / sxx;
    let mut intercept = my - slope * mx;
    let mut obj = pinball_objective(x, y, p, intercept, slope);
    let shift = p - 0.5;
    for _ in 0..IRLS_MAX_ITER {
        // Weighted normal equations of the quadratic majorizer.
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (xi, yi) in x.iter().zip(y) {
            let r = yi - intercept - slope * xi;
            let v = 0.5 / r.abs().max(IRLS_EPSILON);
            s0 += v;
            s1 += v * xi;
            s2 += v * xi * xi;
            t0 += v * yi + shift;
            t1 += (v * yi + shift) * xi;
        }
        let det = s0 * s2 - s1 * s1;
        if !(det.abs() > 0.0) {
            break;
        }
        let new_i = (s2 * t0 - s1 * t1) / det;
        let new_s = (s0 * t1 - s1 * t0) / det;
        let new_obj = pinball_objective(x, y, p, new_i, new_s);
        let change = (obj - new_obj).abs();
        intercept = new_i;
        slope = new_s;
        let done = change <= 1e-12 * (1.0 + obj.abs());
        obj = new_obj;
        if done {
            break;
        }
    }
    polish(x, y, p, QuantileLine { intercept, slope }, obj)
}

/// Best line through data point `a`: a weighted quantile of the slopes to
/// the other points. Returns the line and the index of its second support
/// point.
fn rotate(x: &[f64], y: &[f64], p: f64, a: usize) -> Option<(QuantileLine, usize)> {
    // Each term becomes w_i ρ_{p_i}(t_i − s) in the slope s.
    let mut terms: Vec<(f64, f64, f64, usize)> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let dx = x[i] - x[a];
        if dx == 0.0 {
            continue;
        }
        let t = (y[i] - y[a]) / dx;
        let pi = if dx > 0.0 { p } else { 1.0 - p };
        terms.push((t, dx.abs(), pi, i));
    }
    if terms.is_empty() {
        return None;
    }
    terms.sort_by(|u, v| u.0.total_cmp(&v.0).then(u.3.cmp(&v.3)));
    let mut below = 0.0;
    let mut above: f64 = terms.iter().map(|(_, w, pi, _)| w * pi).sum();
    for &(t, w, pi, i) in &terms {
        below += w * (1.0 - pi);
        above -= w * pi;
        if below - above >= 0.0 {
            return Some((QuantileLine { intercept: y[a] - t * x[a], slope: t }, i));
        }
    }
    let &(t, _, _, i) = terms.last().expect("nonempty");
    Some((QuantileLine { intercept: y[a] - t * x[a], slope: t }, i))
}

/// Exact descent along the edges of the piecewise-linear objective,
/// started from the reweighted solution.
fn polish(x: &[f64], y: &[f64], p: f64, line: QuantileLine, obj: f64) -> QuantileLine {
    let start = (0..x.len())
        .min_by(|&a, &b| (y[a] - line.at(x[a])).abs().total_cmp(&(y[b] - line.at(x[b])).abs()))
        .expect("nonempty");
    let Some((mut cur, mut other)) = rotate(x, y, p, start) else {
        return line;
    };
    let mut support = [start, other];
    let mut cur_obj = pinball_objective(x, y, p, cur.intercept, cur.slope);
    for _ in 0..10 * x.len() {
        let mut improved = false;
        for pivot in support {
            if let Some((cand, next)) = rotate(x, y, p, pivot) {
                let o = pinball_objective(x, y, p, cand.intercept, cand.slope);
                if o < cur_obj - 1e-15 * cur_obj.abs() {
                    cur = cand;
                    cur_obj = o;
                    other = next;
                    support = [pivot, other];
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }
    if cur_obj <= obj {
        cur
    } else {
        line
    }
}

/// The 99 quantile lines of one subperiod.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModel {
    pub subperiod: usize,
    pub lines: Vec<QuantileLine>,
}

impl QuantileModel {
    pub fn fit(subperiod: usize, point: &[f64], observed: &[f64]) -> Result<Self, QuantileError> {
        let lines = (0..PERCENTILES)
            .map(|k| fit_quantile(point, observed, percentile_level(k)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { subperiod, lines })
    }

    pub fn predict(&self, point: f64) -> QuantileFan {
        QuantileFan::from_values(self.lines.iter().map(|l| l.at(point)).collect()).expect("99 finite predictions")
    }
}

/// Percentiles `q_0.01 … q_0.99` in nondecreasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFan {
    pub values: Vec<f64>,
}

impl QuantileFan {
    /// Sorts the values, which repairs quantile crossings.
    pub fn from_values(mut values: Vec<f64>) -> Result<Self, QuantileError> {
        if values.len() != PERCENTILES || values.iter().any(|v| !v.is_finite()) {
            return Err(QuantileError::BadFan(values.len()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn cdf(&self) -> MarginalCdf {
        MarginalCdf::from_fan(self)
    }
}

/// Piecewise-linear CDF through `(q_k, k/100)` with linear tails continuing
/// the outermost interior segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCdf {
    knots: Vec<f64>,
}

impl MarginalCdf {
    /// Tied knots are spread by a relative `1e-9` so the CDF is strictly
    /// increasing and invertible.
    pub fn from_fan(fan: &QuantileFan) -> Self {
        let mut knots = fan.values.clone();
        let span = (knots[PERCENTILES - 1] - knots[0]).abs().max(knots.iter().fold(0.0f64, |m, v| m.max(v.abs()))).max(1.0);
        let gap = span * 1e-9;
        for k in 1..knots.len() {
            if knots[k] < knots[k - 1] + gap {
                knots[k] = knots[k - 1] + gap;
            }
        }
        Self { knots }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn left_slope(&self) -> f64 {
        0.01 / (self.knots[1] - self.knots[0])
    }

    fn right_slope(&self) -> f64 {
        0.01 / (self.knots[PERCENTILES - 1] - self.knots[PERCENTILES - 2])
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let q = &self.knots;
        if x <= q[0] {
            return (0.01 + (x - q[0]) * self.left_slope()).max(0.0);
        }
        if x >= q[PERCENTILES - 1] {
            return (0.99 + (x - q[PERCENTILES - 1]) * self.right_slope()).min(1.0);
        }
        // q[k] <= x < q[k+1]
        let k = q.partition_point(|v| *v <= x) - 1;
        let w = (x - q[k]) / (q[k + 1] - q[k]);
        percentile_level(k) + 0.01 * w
    }

    /// Quantile function on `[0, 1]`; the ends map to the points where the
    /// tail lines reach 0 and 1.
    pub fn inverse(&self, u: f64) -> f64 {
        let q = &self.knots;
        let u = u.clamp(0.0, 1.0);
        if u <= 0.01 {
            return q[0] + (u - 0.01) / self.left_slope();
        }
        if u >= 0.99 {
            return q[PERCENTILES - 1] + (u - 0.99) / self.right_slope();
        }
        let pos = u * 100.0 - 1.0;
        let k = (pos.floor() as usize).min(PERCENTILES - 2);
        let w = (u - percentile_level(k)) / 0.01;
        q[k] + w * (q[k + 1] - q[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn grid_min(y: &[f64], p: f64) -> f64 {
        (0..=6000)
            .map(|i| i as f64 * 1e-3)
            .min_by(|a, b| {
                let la: f64 = y.iter().map(|v| pinball(v - a, p)).sum();
                let lb: f64 = y.iter().map(|v| pinball(v - b, p)).sum();
                la.total_cmp(&lb)
            })
            .unwrap()
    }

    /// Exact optimum by enumerating every line through two data points.
    fn brute_force(x: &[f64], y: &[f64], p: f64) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..x.len() {
            for b in a + 1..x.len() {
                if x[a] == x[b] {
                    continue;
                }
                let s = (y[b] - y[a]) / (x[b] - x[a]);
                best = best.min(pinball_objective(x, y, p, y[a] - s * x[a], s));
            }
        }
        best
    }

    #[test]
    fn intercept_only_fixtures() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(fit_intercept_quantile(&y, 0.5).unwrap(), 3.0);
        assert_eq!(fit_intercept_quantile(&y, 0.9).unwrap(), 5.0);
        assert!((grid_min(&y, 0.5) - 3.0).abs() < 1e-9);
        assert!((grid_min(&y, 0.9) - 5.0).abs() < 1e-9);
        assert_eq!(fit_intercept_quantile(&y, 1.0), Err(QuantileError::InvalidProbability(1.0)));
    }

    #[test]
    fn calibrated_forecasts_give_identity_lines() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..60).map(|_| rng.random_range(10.0..90.0)).collect();
        for k in 0..PERCENTILES {
            let l = fit_quantile(&x, &x, percentile_level(k)).unwrap();
            assert!((l.slope - 1.0).abs() < 1e-6 && l.intercept.abs() < 1e-6, "{k}: {l:?}");
        }
    }

    #[test]
    fn errors_on_bad_input() {
        let x = vec![1.0; 40];
        let y: Vec<f64> = (0..40).map(|i| i as f64).collect();
        assert_eq!(fit_quantile(&x, &y, 0.5), Err(QuantileError::Degenerate));
        assert_eq!(fit_quantile(&y[..29], &y[..29], 0.5), Err(QuantileError::TooFewObservations(29)));
        assert_eq!(fit_quantile(&y, &y, 0.0), Err(QuantileError::InvalidProbability(0.0)));
    }

    #[test]
    fn matches_exhaustive_vertex_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..40 {
            let n = 30 + trial;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..50.0)).collect();
            let y: Vec<f64> = x
                .iter()
                .map(|v| 5.0 + 0.8 * v + (1.0 + 0.1 * v) * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for p in [0.01, 0.1, 0.37, 0.5, 0.9, 0.99] {
                let l = fit_quantile(&x, &y, p).unwrap();
                let got = pinball_objective(&x, &y, p, l.intercept, l.slope);
                let opt = brute_force(&x, &y, p);
                assert!(got - opt <= 1e-8 * (1.0 + opt), "n={n} p={p}: {got} vs {opt}");
            }
        }
    }

    #[test]
    fn training_coverage_is_close_to_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 240;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..50.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let model = QuantileModel::fit(1, &x, &y).unwrap();
        for (k, line) in model.lines.iter().enumerate() {
            let covered = x.iter().zip(&y).filter(|(a, b)| **b <= line.at(**a)).count() as f64 / n as f64;
            assert!((covered - percentile_level(k)).abs() <= 2.0 / (n as f64).sqrt(), "{k}: {covered}");
        }
    }

    #[test]
    fn sorting_repairs_crossings_without_changing_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw: Vec<f64> = (0..PERCENTILES).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fan = QuantileFan::from_values(raw.clone()).unwrap();
        assert!(fan.values.windows(2).all(|w| w[0] <= w[1]));
        let mut a = raw;
        a.sort_by(f64::total_cmp);
        assert_eq!(a, fan.values);
        assert!(QuantileFan::from_values(vec![0.0; 5]).is_err());
    }

    #[test]
    fn linear_fan_gives_identity_cdf() {
        let fan = QuantileFan::from_values((0..PERCENTILES).map(percentile_level).collect()).unwrap();
        let cdf = fan.cdf();
        for i in 0..=980 {
            let x = 0.01 + i as f64 * 1e-3;
            assert!((cdf.cdf(x) - x).abs() < 1e-12);
        }
        assert!((cdf.inverse(0.5) - fan.values[49]).abs() == 0.0);
        // Tails continue the unit slope and clip at 0 and 1.
        assert!((cdf.cdf(0.005) - 0.005).abs() < 1e-12);
        assert_eq!(cdf.cdf(-3.0), 0.0);
        assert_eq!(cdf.cdf(3.0), 1.0);
    }

    #[test]
    fn inverse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut raw: Vec<f64> = (0..PERCENTILES).map(|_| 40.0 + 20.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        raw[10] = raw[11]; // ties survive sorting and are spread by the CDF
        let cdf = QuantileFan::from_values(raw).unwrap().cdf();
        assert!(cdf.knots().windows(2).all(|w| w[0] < w[1]));
        for _ in 0..10_000 {
            let u: f64 = rng.random_range(1e-9..1.0 - 1e-9);
            assert!((cdf.cdf(cdf.inverse(u)) - u).abs() < 1e-9, "{u}");
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..2000 {
            let v = cdf.cdf(-100.0 + i as f64 * 0.15);
            assert!(v >= prev);
            prev = v;
        }
    }
}

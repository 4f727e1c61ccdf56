//! LEAR point forecasts: one LASSO-estimated linear model per subperiod on
//! robust-normalized, arsinh-transformed regressors and targets.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::market_data::features::lear_feature_names;
use crate::market_data::scaling::median;
use crate::market_data::{arsinh, inverse_arsinh, FeatureSchema, FeatureVector, RobustScaler, SUBPERIODS};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_GRID_POINTS: usize = 40;
pub const DEFAULT_MAX_SWEEPS: usize = 100_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Active-set sweeps between attempts at an exact solve on the support.
const EXACT_SOLVE_EVERY: usize = 3;

pub type PointPathForecast = [f64; SUBPERIODS];

#[derive(Debug, Error)]
pub enum PointForecastError {
    #[error("column {0} has zero variance")]
    DegenerateColumn(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("feature schema mismatch: expected {expected}, got {got}")]
    SchemaMismatch { expected: String, got: String },
    #[error("need at least two rows, got {0}")]
    TooFewRows(usize),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Raw LASSO solution on already-transformed columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn active(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }

    pub fn predict(&self, row: ArrayView1<f64>) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_sweeps: DEFAULT_MAX_SWEEPS, tolerance: DEFAULT_TOLERANCE }
    }
}

/// Centered design with its Gram matrix, shared by all targets regressed on
/// the same rows.
pub struct CenteredDesign {
    means: Array1<f64>,
    xc: Array2<f64>,
    gram: Array2<f64>,
}

impl CenteredDesign {
    pub fn new(x: ArrayView2<f64>) -> Result<Self, PointForecastError> {
        let n = x.nrows();
        if n < 2 {
            return Err(PointForecastError::TooFewRows(n));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PointForecastError::NonFinite("design matrix"));
        }
        let means = x.mean_axis(Axis(0)).expect("nonempty");
        let xc = &x - &means;
        let gram = xc.t().dot(&xc) / n as f64;
        for k in 0..gram.nrows() {
            if gram[[k, k]] <= 0.0 {
                return Err(PointForecastError::DegenerateColumn(k));
            }
        }
        Ok(Self { means, xc, gram })
    }

    pub fn n(&self) -> usize {
        self.xc.nrows()
    }

    pub fn p(&self) -> usize {
        self.xc.ncols()
    }

    fn correlations(&self, y: ArrayView1<f64>) -> Result<(f64, Array1<f64>, Array1<f64>), PointForecastError> {
        if y.len() != self.n() {
            return Err(PointForecastError::SchemaMismatch {
                expected: format!("{} targets", self.n()),
                got: format!("{} targets", y.len()),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(PointForecastError::NonFinite("targets"));
        }
        let ymean = y.mean().expect("nonempty");
        let yc = y.mapv(|v| v - ymean);
        let c = self.xc.t().dot(&yc) / self.n() as f64;
        Ok((ymean, yc, c))
    }

    /// Smallest penalty with an all-zero solution.
    pub fn lambda_max(&self, y: ArrayView1<f64>) -> Result<f64, PointForecastError> {
        let (_, _, c) = self.correlations(y)?;
        Ok(c.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
    }

    /// Coordinate descent from `start` (zeros when `None`).
    pub fn fit(
        &self,
        y: ArrayView1<f64>,
        lambda: f64,
        start: Option<&[f64]>,
        opts: SolverOptions,
    ) -> Result<LassoFit, PointForecastError> {
        let (ymean, _, c) = self.correlations(y)?;
        Ok(self.solve(ymean, &c, lambda, start, opts))
    }

    fn solve(&self, ymean: f64, c: &Array1<f64>, lambda: f64, start: Option<&[f64]>, opts: SolverOptions) -> LassoFit {
        let p = self.p();
        let mut beta = match start {
            Some(b) => Array1::from(b.to_vec()),
            None => Array1::zeros(p),
        };
        // r = c - G beta, the negative gradient of the smooth part.
        let mut r = c - &self.gram.dot(&beta);
        let mut sweeps = 0;
        let update = |k: usize, beta: &mut Array1<f64>, r: &mut Array1<f64>| -> f64 {
            let gkk = self.gram[[k, k]];
            let z = r[k] + gkk * beta[k];
            let new = soft_threshold(z, lambda) / gkk;
            let delta = new - beta[k];
            if delta != 0.0 {
                beta[k] = new;
                r.scaled_add(-delta, &self.gram.row(k));
            }
            delta.abs()
        };
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let mut max_delta = 0.0f64;
            for k in 0..p {
                max_delta = max_delta.max(update(k, &mut beta, &mut r));
            }
            if max_delta < opts.tolerance {
                break;
            }
            // Iterate on the active set until it settles, then re-check all.
            let active: Vec<usize> = (0..p).filter(|&k| beta[k] != 0.0).collect();
            let mut inner = 0;
            while sweeps < opts.max_sweeps {
                sweeps += 1;
                inner += 1;
                let mut max_delta = 0.0f64;
                for &k in &active {
                    max_delta = max_delta.max(update(k, &mut beta, &mut r));
                }
                if max_delta < opts.tolerance {
                    break;
                }
                if inner % EXACT_SOLVE_EVERY == 0 && self.exact_on_support(c, lambda, &active, &mut beta, &mut r) {
                    break;
                }
            }
        }
        let intercept = ymean - self.means.dot(&beta);
        LassoFit { coefficients: beta.to_vec(), intercept, lambda, sweeps }
    }

    /// Active-set step: moves to the minimizer restricted to the support of
    /// `beta` with its current signs. When that point leaves the orthant the
    /// move stops where the first coefficient reaches zero, the coefficient
    /// is dropped and the restricted problem is solved again. The objective
    /// never rises; the next full sweep checks the remaining coordinates.
    fn exact_on_support(
        &self,
        c: &Array1<f64>,
        lambda: f64,
        active: &[usize],
        beta: &mut Array1<f64>,
        r: &mut Array1<f64>,
    ) -> bool {
        let mut support: Vec<usize> = active.iter().copied().filter(|&k| beta[k] != 0.0).collect();
        let mut moved = false;
        while !support.is_empty() && support.len() < self.n() {
            let a = support.len();
            let g = DMatrix::from_fn(a, a, |i, j| self.gram[[support[i], support[j]]]);
            let Some(chol) = g.cholesky() else { break };
            let rhs = DVector::from_fn(a, |i, _| c[support[i]] - lambda * beta[support[i]].signum());
            let x = chol.solve(&rhs);
            if x.iter().any(|v| !v.is_finite()) {
                break;
            }
            // Largest step in [0, 1] keeping every sign.
            let mut step = 1.0;
            let mut blocking = None;
            for (i, &k) in support.iter().enumerate() {
                let (b, v) = (beta[k], x[i]);
                if v.signum() != b.signum() {
                    let t = b / (b - v);
                    if t < step {
                        step = t;
                        blocking = Some(i);
                    }
                }
            }
            for (i, &k) in support.iter().enumerate() {
                beta[k] += step * (x[i] - beta[k]);
            }
            moved = true;
            match blocking {
                Some(i) => {
                    beta[support[i]] = 0.0;
                    support.remove(i);
                }
                None => break,
            }
        }
        if moved {
            *r = c - &self.gram.dot(beta);
        }
        moved
    }

    /// Fits every grid value in order, warm-starting each from the previous.
    pub fn path(&self, y: ArrayView1<f64>, grid: &[f64], opts: SolverOptions) -> Result<Vec<LassoFit>, PointForecastError> {
        let (ymean, _, c) = self.correlations(y)?;
        let mut fits: Vec<LassoFit> = Vec::with_capacity(grid.len());
        for &lambda in grid {
            let start = fits.last().map(|f| f.coefficients.clone());
            fits.push(self.solve(ymean, &c, lambda, start.as_deref(), opts));
        }
        Ok(fits)
    }

    pub fn rss(&self, y: ArrayView1<f64>, fit: &LassoFit) -> f64 {
        let ymean = y.mean().expect("nonempty");
        let beta = ArrayView1::from(&fit.coefficients[..]);
        let fitted = self.xc.dot(&beta);
        y.iter().zip(fitted.iter()).map(|(yi, fi)| (yi - ymean - fi).powi(2)).sum()
    }

    /// AIC with the active-set size as degrees of freedom. Fits whose
    /// active set leaves fewer than two residual degrees of freedom are not
    /// eligible.
    pub fn aic(&self, y: ArrayView1<f64>, fit: &LassoFit) -> Option<f64> {
        let n = self.n() as f64;
        let df = fit.active() as f64;
        if df >= n - 1.0 {
            return None;
        }
        let rss = self.rss(y, fit).max(f64::MIN_POSITIVE);
        Some(n * (rss / n).ln() + 2.0 * df)
    }

    /// Minimum-AIC fit over a descending grid.
    pub fn select(&self, y: ArrayView1<f64>, grid: &[f64], opts: SolverOptions) -> Result<LassoFit, PointForecastError> {
        if grid.is_empty() {
            return Err(PointForecastError::EmptyGrid);
        }
        let fits = self.path(y, grid, opts)?;
        let mut best: Option<(f64, usize)> = None;
        for (i, f) in fits.iter().enumerate() {
            if let Some(a) = self.aic(y, f) {
                if best.is_none_or(|(b, _)| a < b) {
                    best = Some((a, i));
                }
            }
        }
        let idx = match best {
            Some((_, i)) => i,
            None => (0..fits.len()).min_by_key(|&i| fits[i].active()).expect("nonempty"),
        };
        Ok(fits.into_iter().nth(idx).expect("index in range"))
    }
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Minimizes `(1/2n)‖y − Xβ − b‖² + λ‖β‖₁` with an unpenalized intercept.
pub fn fit_lasso(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<LassoFit, PointForecastError> {
    CenteredDesign::new(x)?.fit(y, lambda, None, SolverOptions::default())
}

/// Grid value with the lowest AIC.
pub fn select_lambda(x: ArrayView2<f64>, y: ArrayView1<f64>, grid: &[f64]) -> Result<f64, PointForecastError> {
    if grid.is_empty() {
        return Err(PointForecastError::EmptyGrid);
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    Ok(CenteredDesign::new(x)?.select(y, grid, SolverOptions::default())?.lambda)
}

/// Descending log-spaced grid from `lambda_max` down to `ratio · lambda_max`.
pub fn lambda_grid(lambda_max: f64, points: usize, ratio: f64) -> Vec<f64> {
    if points == 0 {
        return Vec::new();
    }
    if points == 1 || lambda_max <= 0.0 {
        return vec![lambda_max.max(0.0); points.min(1)];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..points)
        .map(|i| (hi + (lo - hi) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Penalty selection for the per-subperiod models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaRule {
    Aic { grid_points: usize },
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearConfig {
    pub lambda: LambdaRule,
    /// Apply arsinh to the robust-scaled targets as well as the inputs.
    pub transform_targets: bool,
}

impl Default for LearConfig {
    fn default() -> Self {
        Self { lambda: LambdaRule::Aic { grid_points: DEFAULT_GRID_POINTS }, transform_targets: true }
    }
}

/// One subperiod model in the transformed space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub subperiod: usize,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub target_scaler: RobustScaler,
}

/// The ten subperiod models with the shared input scalers. A `None` scaler
/// marks a regressor without spread in the training window; it is dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearModel {
    pub version: u32,
    pub schema_hash: String,
    pub feature_scalers: Vec<Option<RobustScaler>>,
    pub transform_targets: bool,
    pub models: Vec<LassoModel>,
}

pub fn lear_schema_hash() -> String {
    let mut h = Sha256::new();
    for name in lear_feature_names() {
        h.update(name.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Robust scaler that falls back to the sample standard deviation when the
/// MAD vanishes; `None` for a constant column.
fn column_scaler(values: &[f64]) -> Option<RobustScaler> {
    if let Ok(s) = RobustScaler::fit(values) {
        return Some(s);
    }
    let center = median(values);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    (std > 0.0).then_some(RobustScaler { center, scale: std })
}

fn target_scaler(values: &[f64]) -> RobustScaler {
    column_scaler(values).unwrap_or(RobustScaler { center: median(values), scale: 1.0 })
}

impl LearModel {
    fn transform_features(&self, values: &[f64]) -> Vec<f64> {
        self.feature_scalers
            .iter()
            .zip(values)
            .map(|(s, v)| s.map_or(0.0, |s| arsinh(s.transform(*v))))
            .collect()
    }

    fn check_schema(&self, features: &FeatureVector) -> Result<(), PointForecastError> {
        if features.schema != FeatureSchema::Lear || features.values.len() != self.feature_scalers.len() {
            return Err(PointForecastError::SchemaMismatch {
                expected: format!("Lear[{}]", self.feature_scalers.len()),
                got: format!("{:?}[{}]", features.schema, features.values.len()),
            });
        }
        if features.values.iter().any(|v| !v.is_finite()) {
            return Err(PointForecastError::NonFinite("features"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, PointForecastError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PointForecastError> {
        let model: LearModel = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(PointForecastError::UnsupportedVersion(model.version));
        }
        Ok(model)
    }
}

/// Fits the ten subperiod models on raw regressor rows and observed paths.
pub fn fit_lear(
    rows: &[FeatureVector],
    targets: &[PointPathForecast],
    cfg: &LearConfig,
) -> Result<LearModel, PointForecastError> {
    let n = rows.len();
    if n < 2 {
        return Err(PointForecastError::TooFewRows(n));
    }
    if targets.len() != n {
        return Err(PointForecastError::SchemaMismatch {
            expected: format!("{n} target paths"),
            got: format!("{} target paths", targets.len()),
        });
    }
    let p = rows[0].values.len();
    for r in rows {
        if r.schema != FeatureSchema::Lear || r.values.len() != p {
            return Err(PointForecastError::SchemaMismatch {
                expected: format!("Lear[{p}]"),
                got: format!("{:?}[{}]", r.schema, r.values.len()),
            });
        }
    }
    let feature_scalers: Vec<Option<RobustScaler>> = (0..p)
        .map(|k| column_scaler(&rows.iter().map(|r| r.values[k]).collect::<Vec<_>>()))
        .collect();
    let kept: Vec<usize> = (0..p).filter(|&k| feature_scalers[k].is_some()).collect();
    let mut model = LearModel {
        version: MODEL_FORMAT_VERSION,
        schema_hash: lear_schema_hash(),
        feature_scalers,
        transform_targets: cfg.transform_targets,
        models: Vec::with_capacity(SUBPERIODS),
    };
    let transformed: Vec<Vec<f64>> = rows.iter().map(|r| model.transform_features(&r.values)).collect();
    let x = Array2::from_shape_fn((n, kept.len()), |(i, c)| transformed[i][kept[c]]);
    // Robust scaling leaves no constant column, but arsinh can still collapse
    // one numerically; those are treated like constant columns.
    let design = if kept.is_empty() { None } else { Some(CenteredDesign::new(x.view())?) };
    for j in 0..SUBPERIODS {
        let raw: Vec<f64> = targets.iter().map(|t| t[j]).collect();
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(PointForecastError::NonFinite("targets"));
        }
        let ts = target_scaler(&raw);
        let y: Array1<f64> = raw
            .iter()
            .map(|v| {
                let z = ts.transform(*v);
                if cfg.transform_targets {
                    arsinh(z)
                } else {
                    z
                }
            })
            .collect();
        let (coef, intercept, lambda) = match &design {
            None => (Vec::new(), y.mean().expect("nonempty"), 0.0),
            Some(d) => {
                let fit = match cfg.lambda {
                    LambdaRule::Fixed(l) => d.fit(y.view(), l, None, SolverOptions::default())?,
                    LambdaRule::Aic { grid_points } => {
                        let ratio = if d.n() < d.p() { 0.01 } else { 1e-4 };
                        let grid = lambda_grid(d.lambda_max(y.view())?, grid_points, ratio);
                        d.select(y.view(), &grid, SolverOptions::default())?
                    }
                };
                (fit.coefficients, fit.intercept, fit.lambda)
            }
        };
        let mut coefficients = vec![0.0; p];
        for (c, &k) in kept.iter().enumerate() {
            coefficients[k] = coef[c];
        }
        model.models.push(LassoModel { subperiod: j + 1, coefficients, intercept, lambda, target_scaler: ts });
    }
    Ok(model)
}

/// Evaluates the ten models and maps each prediction back to EUR/MWh.
pub fn predict_path(model: &LearModel, features: &FeatureVector) -> Result<PointPathForecast, PointForecastError> {
    model.check_schema(features)?;
    let z = model.transform_features(&features.values);
    let mut out = [0.0; SUBPERIODS];
    for (o, m) in out.iter_mut().zip(&model.models) {
        let yhat = m.intercept + z.iter().zip(&m.coefficients).map(|(a, b)| a * b).sum::<f64>();
        let unscaled = if model.transform_targets { inverse_arsinh(yhat) } else { yhat };
        *o = m.target_scaler.inverse(unscaled);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Array2<f64>, Array1<f64>) {
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |i| {
            x[[i, 0]] * 2.0 - x[[i, p - 1]] + 0.5 * rng.sample::<f64, _>(StandardNormal) + 1.0
        });
        (x, y)
    }

    /// Least squares with intercept through the normal equations.
    fn ols_oracle(x: &Array2<f64>, y: &Array1<f64>) -> Vec<f64> {
        let (n, p) = x.dim();
        let a = DMatrix::from_fn(n, p + 1, |i, k| if k == p { 1.0 } else { x[[i, k]] });
        let b = DVector::from_iterator(n, y.iter().copied());
        let ata = a.transpose() * &a;
        let sol = ata.cholesky().unwrap().solve(&(a.transpose() * b));
        sol.iter().copied().collect()
    }

    fn objective(x: &Array2<f64>, y: &Array1<f64>, beta: &[f64], b: f64, lambda: f64) -> f64 {
        let n = x.nrows() as f64;
        let fitted = x.dot(&Array1::from(beta.to_vec()));
        let rss: f64 = y.iter().zip(fitted.iter()).map(|(yi, fi)| (yi - fi - b).powi(2)).sum();
        rss / (2.0 * n) + lambda * beta.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn kkt_violation(x: &Array2<f64>, y: &Array1<f64>, fit: &LassoFit) -> f64 {
        let n = x.nrows() as f64;
        let beta = Array1::from(fit.coefficients.clone());
        let resid = y - &x.dot(&beta) - fit.intercept;
        let grad = -x.t().dot(&resid) / n;
        let mut worst = 0.0f64;
        for (k, g) in grad.iter().enumerate() {
            let b = fit.coefficients[k];
            let v = if b == 0.0 { (g.abs() - fit.lambda).max(0.0) } else { (g + fit.lambda * b.signum()).abs() };
            worst = worst.max(v);
        }
        worst
    }

    #[test]
    fn zero_penalty_matches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = random_problem(&mut rng, 60, 6);
        let fit = fit_lasso(x.view(), y.view(), 0.0).unwrap();
        let ols = ols_oracle(&x, &y);
        for k in 0..6 {
            assert!((fit.coefficients[k] - ols[k]).abs() < 1e-6);
        }
        assert!((fit.intercept - ols[6]).abs() < 1e-6);
    }

    #[test]
    fn soft_threshold_on_single_orthonormal_regressor() {
        // x has mean 0 and (1/n)Σx² = 1; noise is orthogonal to x and 1.
        let x = Array2::from_shape_vec((4, 1), vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let noise = [0.3, 0.3, -0.3, -0.3];
        let y = Array1::from_shape_fn(4, |i| 2.0 * x[[i, 0]] + noise[i]);
        let fit = fit_lasso(x.view(), y.view(), 0.5).unwrap();
        assert!((fit.coefficients[0] - 1.5).abs() < 1e-6);
        // Independent check: grid-minimize the one-dimensional objective.
        let best = (0..=40_000)
            .map(|i| -1.0 + i as f64 * 1e-4)
            .min_by(|a, b| objective(&x, &y, &[*a], 0.0, 0.5).total_cmp(&objective(&x, &y, &[*b], 0.0, 0.5)))
            .unwrap();
        assert!((best - 1.5).abs() < 1e-4);
    }

    #[test]
    fn zero_target_gives_zero_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, _) = random_problem(&mut rng, 30, 5);
        let y = Array1::zeros(30);
        for lambda in [0.0, 0.1, 10.0] {
            let fit = fit_lasso(x.view(), y.view(), lambda).unwrap();
            assert!(fit.coefficients.iter().all(|b| *b == 0.0));
            assert_eq!(fit.intercept, 0.0);
        }
    }

    #[test]
    fn rejects_degenerate_and_nonfinite_input() {
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 1.0, 2.0, 1.0, 3.0, 1.0]).unwrap();
        let y = Array1::from(vec![1.0, 2.0, 3.0]);
        assert!(matches!(fit_lasso(x.view(), y.view(), 0.1), Err(PointForecastError::DegenerateColumn(1))));
        let mut x2 = x.clone();
        x2[[0, 1]] = f64::NAN;
        assert!(matches!(fit_lasso(x2.view(), y.view(), 0.1), Err(PointForecastError::NonFinite(_))));
    }

    #[test]
    fn lambda_selection_fixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, y) = random_problem(&mut rng, 40, 4);
        assert_eq!(select_lambda(x.view(), y.view(), &[0.0]).unwrap(), 0.0);
        assert!(matches!(select_lambda(x.view(), y.view(), &[]), Err(PointForecastError::EmptyGrid)));

        // Pure noise: compute each AIC from independent fits and compare.
        let x = Array2::from_shape_fn((50, 5), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(50, |_| rng.sample::<f64, _>(StandardNormal));
        let grid = [10.0, 1.0, 0.1];
        let design = CenteredDesign::new(x.view()).unwrap();
        let aics: Vec<f64> = grid
            .iter()
            .map(|l| {
                let f = fit_lasso(x.view(), y.view(), *l).unwrap();
                design.aic(y.view(), &f).unwrap()
            })
            .collect();
        let oracle = grid[(0..3).min_by(|a, b| aics[*a].total_cmp(&aics[*b])).unwrap()];
        let chosen = select_lambda(x.view(), y.view(), &grid).unwrap();
        assert_eq!(chosen, oracle);
        assert_eq!(chosen, 10.0);

        // Strong signal on the first regressor.
        let x = Array2::from_shape_fn((80, 6), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(80, |i| 3.0 * x[[i, 0]] + rng.sample::<f64, _>(StandardNormal));
        let grid = lambda_grid(design_lambda_max(&x, &y), 40, 1e-4);
        let l = select_lambda(x.view(), y.view(), &grid).unwrap();
        let fit = fit_lasso(x.view(), y.view(), l).unwrap();
        assert!(fit.coefficients[0] != 0.0);
    }

    fn design_lambda_max(x: &Array2<f64>, y: &Array1<f64>) -> f64 {
        CenteredDesign::new(x.view()).unwrap().lambda_max(y.view()).unwrap()
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = random_problem(&mut rng, 40, 8);
        let lmax = design_lambda_max(&x, &y);
        assert_eq!(fit_lasso(x.view(), y.view(), lmax * 1.0001).unwrap().active(), 0);
        assert!(fit_lasso(x.view(), y.view(), lmax * 0.99).unwrap().active() > 0);
        let grid = lambda_grid(lmax, 40, 0.01);
        assert_eq!(grid.len(), 40);
        assert!((grid[39] / grid[0] - 0.01).abs() < 1e-12);
        assert!(grid.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn path_warm_start_matches_cold_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, y) = random_problem(&mut rng, 30, 40);
        let d = CenteredDesign::new(x.view()).unwrap();
        let grid = lambda_grid(d.lambda_max(y.view()).unwrap(), 10, 0.01);
        let path = d.path(y.view(), &grid, SolverOptions::default()).unwrap();
        for (f, l) in path.iter().zip(&grid) {
            let cold = fit_lasso(x.view(), y.view(), *l).unwrap();
            let (a, b) = (objective(&x, &y, &f.coefficients, f.intercept, *l), objective(&x, &y, &cold.coefficients, cold.intercept, *l));
            assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn kkt_conditions_hold(seed in 0u64..10_000, n in 5usize..40, p in 1usize..25, frac in 0.001f64..1.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = random_problem(&mut rng, n, p);
            let lmax = design_lambda_max(&x, &y);
            let fit = fit_lasso(x.view(), y.view(), lmax * frac).unwrap();
            prop_assert!(kkt_violation(&x, &y, &fit) <= 1e-6);
        }
    }

    fn lear_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Vec<FeatureVector>, Vec<PointPathForecast>) {
        let mut rows = Vec::new();
        let mut paths = Vec::new();
        for _ in 0..n {
            let values: Vec<f64> = (0..p).map(|_| 40.0 + 10.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let mut path = [0.0; SUBPERIODS];
            for (j, v) in path.iter_mut().enumerate() {
                *v = 0.5 * values[0] + 0.3 * values[1 % p] + j as f64 + rng.sample::<f64, _>(StandardNormal);
            }
            rows.push(FeatureVector { schema: FeatureSchema::Lear, values, weekday: None, latest_input: 0 });
            paths.push(path);
        }
        (rows, paths)
    }

    #[test]
    fn constant_model_predicts_inverted_intercept() {
        let scaler = RobustScaler { center: 40.0, scale: 5.0 };
        let c = 0.7;
        let model = LearModel {
            version: MODEL_FORMAT_VERSION,
            schema_hash: lear_schema_hash(),
            feature_scalers: vec![Some(RobustScaler { center: 0.0, scale: 1.0 }); 3],
            transform_targets: true,
            models: (1..=SUBPERIODS)
                .map(|j| LassoModel { subperiod: j, coefficients: vec![0.0; 3], intercept: c, lambda: 1.0, target_scaler: scaler })
                .collect(),
        };
        let fv = FeatureVector { schema: FeatureSchema::Lear, values: vec![1.0, 2.0, 3.0], weekday: None, latest_input: 0 };
        let out = predict_path(&model, &fv).unwrap();
        for v in out {
            assert!((v - (40.0 + 5.0 * c.sinh())).abs() < 1e-12);
        }
        let bad = FeatureVector { schema: FeatureSchema::Input2, ..fv.clone() };
        assert!(matches!(predict_path(&model, &bad), Err(PointForecastError::SchemaMismatch { .. })));
        let short = FeatureVector { values: vec![1.0], ..fv };
        assert!(matches!(predict_path(&model, &short), Err(PointForecastError::SchemaMismatch { .. })));
    }

    #[test]
    fn unpenalized_square_system_interpolates_training_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // Discrete Fourier columns keep the square system well conditioned,
        // which coordinate descent needs to reach the exact solution.
        let n = 12;
        let (mut rows, paths) = lear_rows(&mut rng, n, n - 1);
        for (i, r) in rows.iter_mut().enumerate() {
            for (k, v) in r.values.iter_mut().enumerate() {
                let f = (k / 2 + 1) as f64 * 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let basis = if k % 2 == 0 { f.cos() } else { f.sin() };
                *v = 40.0 + 10.0 * basis + 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let cfg = LearConfig { lambda: LambdaRule::Fixed(0.0), transform_targets: true };
        let model = fit_lear(&rows, &paths, &cfg).unwrap();
        for (r, p) in rows.iter().zip(&paths) {
            let out = predict_path(&model, r).unwrap();
            for j in 0..SUBPERIODS {
                assert!((out[j] - p[j]).abs() < 1e-6, "{} vs {}", out[j], p[j]);
            }
        }
    }

    #[test]
    fn beats_persistence_out_of_sample() {
        // Linear model in the transformed space; persistence repeats the
        // previous observation.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (rows, paths) = lear_rows(&mut rng, 300, 8);
        let model = fit_lear(&rows[..200], &paths[..200], &LearConfig::default()).unwrap();
        let (mut mae_model, mut mae_naive) = (0.0, 0.0);
        for i in 200..300 {
            let out = predict_path(&model, &rows[i]).unwrap();
            for j in 0..SUBPERIODS {
                mae_model += (out[j] - paths[i][j]).abs();
                mae_naive += (paths[i - 1][j] - paths[i][j]).abs();
            }
        }
        assert!(mae_model < mae_naive, "{mae_model} vs {mae_naive}");
    }

    #[test]
    fn predictions_scale_with_prices() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (rows, paths) = lear_rows(&mut rng, 60, 5);
        let shrink = |v: f64| (v - 45.0) / 60.0;
        let rows: Vec<FeatureVector> = rows
            .into_iter()
            .map(|r| FeatureVector { values: r.values.iter().map(|v| shrink(*v)).collect(), ..r })
            .collect();
        let paths: Vec<PointPathForecast> = paths.iter().map(|p| p.map(shrink)).collect();
        let c = 3.0;
        let rows_c: Vec<FeatureVector> =
            rows.iter().map(|r| FeatureVector { values: r.values.iter().map(|v| v * c).collect(), ..r.clone() }).collect();
        let paths_c: Vec<PointPathForecast> = paths.iter().map(|p| p.map(|v| v * c)).collect();
        let m1 = fit_lear(&rows[..50], &paths[..50], &LearConfig::default()).unwrap();
        let m2 = fit_lear(&rows_c[..50], &paths_c[..50], &LearConfig::default()).unwrap();
        for i in 50..60 {
            let a = predict_path(&m1, &rows[i]).unwrap();
            let b = predict_path(&m2, &rows_c[i]).unwrap();
            for j in 0..SUBPERIODS {
                assert!((b[j] - c * a[j]).abs() <= 1e-4 * (c * a[j]).abs().max(1e-3));
            }
        }
    }

    #[test]
    fn constant_regressors_are_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (mut rows, paths) = lear_rows(&mut rng, 40, 4);
        for r in rows.iter_mut() {
            r.values[3] = 7.0;
        }
        let model = fit_lear(&rows, &paths, &LearConfig::default()).unwrap();
        assert!(model.feature_scalers[3].is_none());
        assert!(model.models.iter().all(|m| m.coefficients[3] == 0.0));
    }

    #[test]
    fn json_roundtrip_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let (rows, paths) = lear_rows(&mut rng, 40, 6);
        let model = fit_lear(&rows, &paths, &LearConfig::default()).unwrap();
        let back = LearModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model, back);
        let mut future = model.clone();
        future.version = 99;
        let text = future.to_json().unwrap();
        assert!(matches!(LearModel::from_json(&text), Err(PointForecastError::UnsupportedVersion(99))));
    }
}

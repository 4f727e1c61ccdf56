//! Trajectory generators built on point and quantile forecasts: a Gaussian
//! copula over the marginal CDFs, and bootstrapped historical error vectors.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::marginal_quantiles::MarginalCdf;
use crate::market_data::{DeliveryKey, SUBPERIODS};

pub const MIN_COPULA_DAYS: usize = 20;
pub const PIT_CLIP: f64 = 1e-6;
pub const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("copula window has {0} usable days, need at least {MIN_COPULA_DAYS}")]
    InsufficientWindow(usize),
    #[error("error-vector pool is empty")]
    EmptyPool,
    #[error("expected {SUBPERIODS} marginals, got {0}")]
    MarginalCount(usize),
    #[error("ensemble needs at least one trajectory")]
    EmptyEnsemble,
    #[error("malformed ensemble file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Covariance of the probit-transformed PITs and its Cholesky factor
/// (both `10 x 10`, row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub covariance: Vec<f64>,
    pub cholesky: Vec<f64>,
    pub window: String,
    pub days: usize,
}

impl CopulaSpec {
    /// Validates and factorizes a given covariance after the eigenvalue repair.
    pub fn from_covariance(cov: &DMatrix<f64>, window: impl Into<String>, days: usize) -> Self {
        let repaired = repair_psd(cov);
        let chol = cholesky_with_jitter(&repaired);
        let d = repaired.nrows();
        Self {
            covariance: (0..d * d).map(|i| repaired[(i / d, i % d)]).collect(),
            cholesky: (0..d * d).map(|i| chol[(i / d, i % d)]).collect(),
            window: window.into(),
            days,
        }
    }

    pub fn dim(&self) -> usize {
        (self.covariance.len() as f64).sqrt().round() as usize
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.covariance)
    }

    /// Equicorrelation matrix with unit variances.
    pub fn equicorrelation(rho: f64, window: impl Into<String>) -> Self {
        let cov = DMatrix::from_fn(SUBPERIODS, SUBPERIODS, |i, j| if i == j { 1.0 } else { rho });
        Self::from_covariance(&cov, window, 0)
    }
}

/// Floors the eigenvalues at [`EIGEN_FLOOR`] and re-symmetrizes.
pub fn repair_psd(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (&rebuilt + rebuilt.transpose()) * 0.5
}

/// Lower Cholesky factor; rounding after the eigenvalue floor can leave a
/// matrix that fails factorization, in which case a growing diagonal
/// jitter is added.
fn cholesky_with_jitter(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut jitter = 0.0;
    loop {
        let a = m + DMatrix::identity(m.nrows(), m.ncols()) * jitter;
        if let Some(c) = a.cholesky() {
            return c.l();
        }
        jitter = if jitter == 0.0 { EIGEN_FLOOR } else { jitter * 10.0 };
    }
}

/// Probit of a clipped PIT value.
pub fn probit_pit(u: f64) -> f64 {
    std_normal().inverse_cdf(u.clamp(PIT_CLIP, 1.0 - PIT_CLIP))
}

/// Covariance (denominator `n − 1`) of probit-transformed PIT vectors.
pub fn estimate_copula_from_pits(pits: &[[f64; SUBPERIODS]], window: impl Into<String>) -> Result<CopulaSpec, SamplerError> {
    let n = pits.len();
    if n < MIN_COPULA_DAYS {
        return Err(SamplerError::InsufficientWindow(n));
    }
    let z: Vec<[f64; SUBPERIODS]> = pits.iter().map(|row| row.map(probit_pit)).collect();
    let mut mean = [0.0; SUBPERIODS];
    for row in &z {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let cov = DMatrix::from_fn(SUBPERIODS, SUBPERIODS, |i, j| {
        z.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n as f64 - 1.0)
    });
    Ok(CopulaSpec::from_covariance(&cov, window, n))
}

/// Copula from historical marginal CDFs and the realized paths they forecast.
pub fn estimate_copula(
    cdfs: &[Vec<MarginalCdf>],
    observations: &[[f64; SUBPERIODS]],
    window: impl Into<String>,
) -> Result<CopulaSpec, SamplerError> {
    let pits: Vec<[f64; SUBPERIODS]> = cdfs
        .iter()
        .zip(observations)
        .map(|(c, x)| {
            let mut u = [0.0; SUBPERIODS];
            for j in 0..SUBPERIODS {
                u[j] = c[j].cdf(x[j]);
            }
            u
        })
        .collect();
    estimate_copula_from_pits(&pits, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Generator {
    Cgm,
    Lqc,
    Bootstrap,
}

impl Generator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Generator::Cgm => "CGM",
            Generator::Lqc => "LQC",
            Generator::Bootstrap => "BOOTSTRAP",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "CGM" => Some(Generator::Cgm),
            "LQC" => Some(Generator::Lqc),
            "BOOTSTRAP" => Some(Generator::Bootstrap),
            _ => None,
        }
    }

    fn stream(&self) -> u64 {
        match self {
            Generator::Cgm => 1,
            Generator::Lqc => 2,
            Generator::Bootstrap => 3,
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-product seed derived from the master seed, the delivery key and the
/// generator, independent of processing order.
pub fn derive_seed(master: u64, key: &DeliveryKey, generator: Generator) -> u64 {
    let k = (crate::market_data::calendar::day_number(key.date) as u64) << 8 | key.hour as u64;
    splitmix64(splitmix64(splitmix64(master) ^ k) ^ generator.stream())
}

/// `M x 10` matrix of jointly sampled paths, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub key: DeliveryKey,
    pub generator: Generator,
    pub seed: u64,
    pub samples: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnsembleSidecar {
    m: usize,
    d: usize,
    key: DeliveryKey,
    generator: Generator,
    seed: u64,
    layout: String,
}

impl TrajectoryEnsemble {
    pub fn m(&self) -> usize {
        self.samples.nrows()
    }

    /// Column-major little-endian `f64` matrix at `path` plus a JSON sidecar
    /// at `path.json`.
    pub fn write_binary(&self, path: &Path) -> Result<(), SamplerError> {
        let mut w = BufWriter::new(File::create(path)?);
        for col in self.samples.columns() {
            for v in col {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        let sidecar = EnsembleSidecar {
            m: self.m(),
            d: self.samples.ncols(),
            key: self.key,
            generator: self.generator,
            seed: self.seed,
            layout: "column-major f64 little-endian".into(),
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self, SamplerError> {
        let sidecar: EnsembleSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() != sidecar.m * sidecar.d * 8 {
            return Err(SamplerError::Format(format!("{} bytes for {}x{}", bytes.len(), sidecar.m, sidecar.d)));
        }
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let samples = Array2::from_shape_fn((sidecar.m, sidecar.d), |(i, j)| values[j * sidecar.m + i]);
        Ok(Self { key: sidecar.key, generator: sidecar.generator, seed: sidecar.seed, samples })
    }

    /// Long-format CSV: `date,hour,generator,m,t1..t10`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SamplerError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string(), "hour".into(), "generator".into(), "m".into()];
        header.extend((1..=self.samples.ncols()).map(|j| format!("t{j}")));
        w.write_record(&header)?;
        for (m, row) in self.samples.rows().into_iter().enumerate() {
            let mut rec = vec![self.key.date.to_string(), self.key.hour.to_string(), self.generator.to_string(), m.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// `X̃^m_j = F̂_j⁻¹(Φ(Z^m_j))` with `Z^m ~ N(0, Σ)`.
pub fn sample_copula_paths(
    spec: &CopulaSpec,
    cdfs: &[MarginalCdf],
    m: usize,
    key: DeliveryKey,
    seed: u64,
) -> Result<TrajectoryEnsemble, SamplerError> {
    let d = spec.dim();
    if cdfs.len() != d {
        return Err(SamplerError::MarginalCount(cdfs.len()));
    }
    if m == 0 {
        return Err(SamplerError::EmptyEnsemble);
    }
    let l = DMatrix::from_row_slice(d, d, &spec.cholesky);
    let normal = std_normal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Array2::zeros((m, d));
    let mut e = vec![0.0; d];
    for mut row in samples.rows_mut() {
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for j in 0..d {
            let z: f64 = (0..=j).map(|k| l[(j, k)] * e[k]).sum();
            row[j] = cdfs[j].inverse(normal.cdf(z));
        }
    }
    Ok(TrajectoryEnsemble { key, generator: Generator::Lqc, seed, samples })
}

/// Historical error vectors `ε = X̂ − X`, each kept whole.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorVectorPool {
    pub vectors: Vec<[f64; SUBPERIODS]>,
}

impl ErrorVectorPool {
    pub fn from_forecasts(point: &[[f64; SUBPERIODS]], observed: &[[f64; SUBPERIODS]]) -> Self {
        let vectors = point
            .iter()
            .zip(observed)
            .map(|(f, x)| {
                let mut e = [0.0; SUBPERIODS];
                for j in 0..SUBPERIODS {
                    e[j] = f[j] - x[j];
                }
                e
            })
            .collect();
        Self { vectors }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// `X̃^m = X̂ + ε^m` with `ε^m` drawn uniformly with replacement.
pub fn sample_bootstrap_paths(
    point: &[f64; SUBPERIODS],
    pool: &ErrorVectorPool,
    m: usize,
    key: DeliveryKey,
    seed: u64,
) -> Result<TrajectoryEnsemble, SamplerError> {
    if pool.is_empty() {
        return Err(SamplerError::EmptyPool);
    }
    if m == 0 {
        return Err(SamplerError::EmptyEnsemble);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Array2::zeros((m, SUBPERIODS));
    for mut row in samples.rows_mut() {
        let e = &pool.vectors[rng.random_range(0..pool.len())];
        for j in 0..SUBPERIODS {
            row[j] = point[j] + e[j];
        }
    }
    Ok(TrajectoryEnsemble { key, generator: Generator::Bootstrap, seed, samples })
}

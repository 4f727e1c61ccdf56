//! Variance-stabilizing transform and the two normalization schemes.

use serde::{Deserialize, Serialize};

use super::MarketDataError;

/// `Φ⁻¹(0.75)`, the MAD consistency constant for Gaussian data.
pub const PROBIT_075: f64 = 0.674_489_750_196_081_7;

/// Area hyperbolic sine, `ln(x + sqrt(x² + 1))`.
pub fn arsinh(x: f64) -> f64 {
    x.asinh()
}

pub fn inverse_arsinh(y: f64) -> f64 {
    y.sinh()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median / MAD scaler; `scale = MAD / Φ⁻¹(0.75)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub center: f64,
    pub scale: f64,
}

impl RobustScaler {
    pub fn fit(values: &[f64]) -> Result<Self, MarketDataError> {
        if values.is_empty() {
            return Err(MarketDataError::DegenerateScale("empty sample".into()));
        }
        let center = median(values);
        let dev: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
        let scale = median(&dev) / PROBIT_075;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(MarketDataError::DegenerateScale(format!("MAD is {scale}")));
        }
        Ok(Self { center, scale })
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.center) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.scale + self.center
    }
}

/// Mean / standard-deviation scaler fitted on the training period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScaler {
    pub mean: f64,
    pub std: f64,
}

impl ZScaler {
    pub fn fit(values: &[f64]) -> Result<Self, MarketDataError> {
        let n = values.len();
        if n < 2 {
            return Err(MarketDataError::DegenerateScale("need at least two values".into()));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let std = var.sqrt();
        if !(std > 0.0 && std.is_finite()) {
            return Err(MarketDataError::DegenerateScale(format!("std is {std}")));
        }
        Ok(Self { mean, std })
    }

    /// Like [`fit`](Self::fit) but a constant series keeps unit scale.
    pub fn fit_or_unit(values: &[f64]) -> Self {
        Self::fit(values).unwrap_or_else(|_| {
            let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
            Self { mean, std: 1.0 }
        })
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn arsinh_fixtures() {
        assert_eq!(arsinh(0.0), 0.0);
        // ln(1 + sqrt 2)
        assert!((arsinh(1.0) - 0.881_373_587_019_543).abs() < 1e-15);
        for x in [-100.0, -1.0, 0.5, 1e6] {
            let back = inverse_arsinh(arsinh(x));
            assert!(((back - x) / x).abs() < 1e-10, "{x} -> {back}");
        }
        // Explicit logarithmic form agrees with the library routine.
        for x in [-3.5f64, 0.2, 12.0] {
            assert!((arsinh(x) - (x + (x * x + 1.0).sqrt()).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn robust_scale_divides_mad_by_probit() {
        let s = RobustScaler::fit(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.center, 3.0);
        assert!((s.scale - 1.0 / PROBIT_075).abs() < 1e-12);
        assert!(RobustScaler::fit(&[2.0, 2.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn scalers_roundtrip(values in prop::collection::vec(-1e4f64..1e4, 5..40), probe in -1e5f64..1e5) {
            prop_assume!(RobustScaler::fit(&values).is_ok());
            let r = RobustScaler::fit(&values).unwrap();
            let back = r.inverse(r.transform(probe));
            prop_assert!((back - probe).abs() <= 1e-12 * (probe.abs() + r.center.abs() + r.scale));
            let z = ZScaler::fit(&values).unwrap();
            let back = z.inverse(z.transform(probe));
            prop_assert!((back - probe).abs() <= 1e-12 * (probe.abs() + z.mean.abs() + z.std));
        }
    }
}

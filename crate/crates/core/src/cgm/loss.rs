//! Training objectives: the energy score and the economic loss that adds a
//! penalty on the majority-vote sale index.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::CgmError;
use crate::scoring::{energy_score, energy_score_with_grad};
use crate::trading::{argmax_latest, majority_vote};

/// Temperature of the soft-argmax used in place of the hard index.
pub const SOFTARGMAX_TAU: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    EnergyScore,
    /// `(1 − ω)·ES/2 + ω·(J̃ − J_obs)²/100`.
    Custom { omega: f64 },
}

pub fn energy_score_loss(samples: ArrayView2<f64>, obs: ArrayView1<f64>) -> Result<(f64, Array2<f64>), CgmError> {
    Ok(energy_score_with_grad(samples, obs)?)
}

pub fn custom_loss_value(es: f64, j_tilde: usize, j_obs: usize, omega: f64) -> f64 {
    let dj = j_tilde as f64 - j_obs as f64;
    (1.0 - omega) * 0.5 * es + omega * dj * dj / 100.0
}

/// Evaluation form with the hard majority-vote index.
pub fn custom_loss(samples: ArrayView2<f64>, obs: ArrayView1<f64>, omega: f64) -> Result<f64, CgmError> {
    let es = energy_score(samples, obs)?;
    let j_obs = argmax_latest(&obs.to_vec());
    Ok(custom_loss_value(es, majority_vote(samples), j_obs, omega))
}

/// Mean over samples of `Σ_j j·softmax(τ x^m)_j` (1-based `j`) and its
/// gradient with respect to the samples.
pub fn soft_argmax_index(samples: ArrayView2<f64>, tau: f64) -> (f64, Array2<f64>) {
    let (m, d) = samples.dim();
    let mut grad = Array2::zeros((m, d));
    let mut total = 0.0;
    let mut p = vec![0.0; d];
    for (i, row) in samples.rows().into_iter().enumerate() {
        let top = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut norm = 0.0;
        for (pj, x) in p.iter_mut().zip(row.iter()) {
            *pj = (tau * (x - top)).exp();
            norm += *pj;
        }
        let mut s = 0.0;
        for (j, pj) in p.iter_mut().enumerate() {
            *pj /= norm;
            s += (j + 1) as f64 * *pj;
        }
        total += s;
        for (j, pj) in p.iter().enumerate() {
            grad[[i, j]] = tau * pj * ((j + 1) as f64 - s) / m as f64;
        }
    }
    (total / m as f64, grad)
}

/// Differentiable stand-in for [`custom_loss`] used during training.
pub fn surrogate_loss(
    samples: ArrayView2<f64>,
    obs: ArrayView1<f64>,
    omega: f64,
    tau: f64,
) -> Result<(f64, Array2<f64>), CgmError> {
    let (es, g_es) = energy_score_with_grad(samples, obs)?;
    let j_obs = argmax_latest(&obs.to_vec()) as f64;
    let (s, g_s) = soft_argmax_index(samples, tau);
    let value = (1.0 - omega) * 0.5 * es + omega * (s - j_obs).powi(2) / 100.0;
    let grad = g_es * ((1.0 - omega) * 0.5) + g_s * (omega * 2.0 * (s - j_obs) / 100.0);
    Ok((value, grad))
}

pub fn training_loss(kind: LossKind, samples: ArrayView2<f64>, obs: ArrayView1<f64>) -> Result<(f64, Array2<f64>), CgmError> {
    match kind {
        LossKind::EnergyScore => energy_score_loss(samples, obs),
        LossKind::Custom { omega } => surrogate_loss(samples, obs, omega, SOFTARGMAX_TAU),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn energy_score_fixtures() {
        let (v, _) = energy_score_loss(array![[1.0, 1.0], [1.0, 1.0]].view(), array![1.0, 1.0].view()).unwrap();
        assert_eq!(v, 0.0);
        let (v, _) = energy_score_loss(array![[0.0, 0.0], [2.0, 2.0]].view(), array![1.0, 1.0].view()).unwrap();
        assert!(v.abs() < 1e-15);
        let (v, g) = energy_score_loss(array![[0.0, 0.0], [0.0, 0.0]].view(), array![3.0, 4.0].view()).unwrap();
        assert!((v - 5.0).abs() < 1e-15);
        assert!(g.iter().all(|x| x.is_finite()));
        assert!(matches!(energy_score_loss(array![[0.0, 0.0]].view(), array![0.0, 0.0].view()), Err(CgmError::Scoring(_))));
    }

    #[test]
    fn custom_loss_fixtures() {
        assert!((custom_loss_value(4.0, 5, 2, 0.5) - 1.045).abs() < 1e-12);
        assert_eq!(custom_loss_value(4.0, 5, 2, 0.0), 2.0);
        assert_eq!(custom_loss_value(4.0, 3, 3, 1.0), 0.0);
        let s = array![[0.0, 1.0, 0.0], [0.0, 2.0, 0.0]];
        let o = array![0.0, 1.5, 0.0];
        let es = energy_score(s.view(), o.view()).unwrap();
        assert_eq!(custom_loss(s.view(), o.view(), 0.0).unwrap(), 0.5 * es);
        assert_eq!(custom_loss(s.view(), o.view(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn soft_argmax_gradient_matches_differences() {
        let s = array![[0.1, 0.7, -0.2, 0.4], [1.0, 0.2, 0.3, 0.9], [0.0, -0.5, 0.8, 0.1]];
        let o: Array1<f64> = array![0.2, 0.5, 0.1, 0.6];
        for omega in [0.0, 0.3, 1.0] {
            let (_, g) = surrogate_loss(s.view(), o.view(), omega, SOFTARGMAX_TAU).unwrap();
            for i in 0..3 {
                for j in 0..4 {
                    let h = 1e-6;
                    let mut p = s.clone();
                    p[[i, j]] += h;
                    let mut q = s.clone();
                    q[[i, j]] -= h;
                    let fd = (surrogate_loss(p.view(), o.view(), omega, SOFTARGMAX_TAU).unwrap().0
                        - surrogate_loss(q.view(), o.view(), omega, SOFTARGMAX_TAU).unwrap().0)
                        / (2.0 * h);
                    assert!((fd - g[[i, j]]).abs() < 1e-7, "{omega} {i} {j}: {fd} vs {}", g[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn soft_argmax_approaches_hard_index_at_large_tau() {
        let s = array![[0.0, 3.0, 1.0], [0.0, 3.0, 1.0]];
        let (v, _) = soft_argmax_index(s.view(), 50.0);
        assert!((v - 2.0).abs() < 1e-9);
    }
}

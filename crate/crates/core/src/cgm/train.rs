//! Normalization, minibatch Adam training with early stopping, and sampling
//! from a trained generator.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{training_loss, LossKind};
use super::network::{Conditioning, GeneratorNetwork, NetworkConfig};
use super::CgmError;
use crate::market_data::features::{CGM_LAGS, INPUT1_VARIABLES};
use crate::market_data::{CgmInputs, ZScaler, SUBPERIODS};

/// Examples per gradient work item; fixes the summation order so results do
/// not depend on the thread count.
const CHUNK: usize = 64;
const VALIDATION_STREAM: u64 = 0x5641_4c49_4441_5445;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub m_train: usize,
    pub validation_fraction: f64,
    pub max_epochs: usize,
    pub loss: LossKind,
    pub seed: u64,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 1024,
            patience: 10,
            m_train: 32,
            validation_fraction: 0.2,
            max_epochs: 200,
            loss: LossKind::EnergyScore,
            seed: 0,
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CgmError> {
        let omega_ok = match self.loss {
            LossKind::Custom { omega } => (0.0..=1.0).contains(&omega),
            LossKind::EnergyScore => true,
        };
        if self.learning_rate > 0.0
            && self.batch_size > 0
            && self.patience > 0
            && self.m_train >= 2
            && (0.0..1.0).contains(&self.validation_fraction)
            && self.max_epochs > 0
            && omega_ok
        {
            Ok(())
        } else {
            Err(CgmError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Raw (unnormalized) training examples.
#[derive(Debug, Clone, PartialEq)]
pub struct CgmDataset {
    pub x1: Array2<f64>,
    pub x2: Array2<f64>,
    pub x3: Array2<f64>,
    pub weekday: Vec<u8>,
    pub y: Array2<f64>,
}

impl CgmDataset {
    pub fn from_examples(inputs: &[CgmInputs], paths: &[[f64; SUBPERIODS]]) -> Self {
        let rows = |f: &dyn Fn(&CgmInputs) -> &Vec<f64>| {
            let width = inputs.first().map_or(0, |i| f(i).len());
            Array2::from_shape_fn((inputs.len(), width), |(i, k)| f(&inputs[i])[k])
        };
        Self {
            x1: rows(&|i| &i.input1.values),
            x2: rows(&|i| &i.input2.values),
            x3: rows(&|i| &i.input3.values),
            weekday: inputs.iter().map(CgmInputs::weekday).collect(),
            y: Array2::from_shape_fn((paths.len(), SUBPERIODS), |(i, j)| paths[i][j]),
        }
    }

    pub fn len(&self) -> usize {
        self.x1.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x1: self.x1.select(Axis(0), idx),
            x2: self.x2.select(Axis(0), idx),
            x3: self.x3.select(Axis(0), idx),
            weekday: idx.iter().map(|&i| self.weekday[i]).collect(),
            y: self.y.select(Axis(0), idx),
        }
    }

    pub fn conditioning(&self) -> Conditioning<'_> {
        Conditioning { x1: self.x1.view(), x2: self.x2.view(), x3: self.x3.view(), weekday: &self.weekday }
    }
}

/// Per-variable z-scalers: one per INPUT1 variable (shared across its lags),
/// one for INPUT2, one per INPUT3 column, and one for all target prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScalers {
    pub input1: Vec<ZScaler>,
    pub input2: ZScaler,
    pub input3: Vec<ZScaler>,
    pub target: ZScaler,
}

impl InputScalers {
    pub fn fit(data: &CgmDataset) -> Self {
        let groups = if data.x1.ncols() == INPUT1_VARIABLES * CGM_LAGS { INPUT1_VARIABLES } else { data.x1.ncols() };
        let width = data.x1.ncols() / groups.max(1);
        let input1 = (0..groups)
            .map(|g| {
                let block = data.x1.slice(ndarray::s![.., g * width..(g + 1) * width]);
                ZScaler::fit_or_unit(&block.iter().copied().collect::<Vec<_>>())
            })
            .collect();
        let input2 = ZScaler::fit_or_unit(&data.x2.iter().copied().collect::<Vec<_>>());
        let input3 = data.x3.columns().into_iter().map(|c| ZScaler::fit_or_unit(&c.to_vec())).collect();
        let target = ZScaler::fit_or_unit(&data.y.iter().copied().collect::<Vec<_>>());
        Self { input1, input2, input3, target }
    }

    pub fn normalize(&self, data: &CgmDataset) -> CgmDataset {
        let width = data.x1.ncols() / self.input1.len().max(1);
        let mut x1 = data.x1.clone();
        for (k, mut col) in x1.columns_mut().into_iter().enumerate() {
            let s = self.input1[k / width];
            col.mapv_inplace(|v| s.transform(v));
        }
        let x2 = data.x2.mapv(|v| self.input2.transform(v));
        let mut x3 = data.x3.clone();
        for (k, mut col) in x3.columns_mut().into_iter().enumerate() {
            let s = self.input3[k];
            col.mapv_inplace(|v| s.transform(v));
        }
        let y = data.y.mapv(|v| self.target.transform(v));
        CgmDataset { x1, x2, x3, weekday: data.weekday.clone(), y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

/// A generator with its normalization and training record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCgm {
    pub network: GeneratorNetwork,
    pub scalers: InputScalers,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept; 0 when none beat the initial weights.
    pub best_epoch: usize,
}

impl TrainedCgm {
    pub fn is_trained(&self) -> bool {
        !self.history.is_empty()
    }

    /// Normalized single-example conditioning.
    fn normalize_inputs(&self, inputs: &CgmInputs) -> CgmDataset {
        let raw = CgmDataset::from_examples(std::slice::from_ref(inputs), &[[0.0; SUBPERIODS]]);
        self.scalers.normalize(&raw)
    }

    /// `M` paths in EUR/MWh; latent rows are drawn in order from `seed`.
    pub fn sample(&self, inputs: &CgmInputs, m: usize, seed: u64) -> Result<Array2<f64>, CgmError> {
        let data = self.normalize_inputs(inputs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latent = Array2::from_shape_simple_fn((m, self.network.config.latent), || rng.sample(StandardNormal));
        let pass = self.network.forward(&data.conditioning(), latent.view(), m)?;
        let t = self.scalers.target;
        Ok(pass.output().mapv(|v| t.inverse(v)))
    }

    /// Noise-scale vector `δ` for one example.
    pub fn delta(&self, inputs: &CgmInputs) -> Array1<f64> {
        let data = self.normalize_inputs(inputs);
        self.network.delta_only(data.x2.view()).row(0).to_owned()
    }
}

/// Mean loss over a batch and the parameter gradient of that mean.
pub fn batch_loss_and_grad(
    net: &GeneratorNetwork,
    data: &CgmDataset,
    latent: ArrayView2<f64>,
    m: usize,
    loss: LossKind,
) -> Result<(f64, Vec<f64>), CgmError> {
    let b = data.len();
    let chunks: Vec<(usize, usize)> = (0..b).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(b))).collect();
    let parts: Vec<Result<(f64, Vec<f64>), CgmError>> = chunks
        .par_iter()
        .map(|&(s, e)| {
            let idx: Vec<usize> = (s..e).collect();
            let sub = data.select(&idx);
            let lat = latent.slice(ndarray::s![s * m..e * m, ..]);
            let cond = sub.conditioning();
            let pass = net.forward(&cond, lat, m)?;
            let out = pass.output();
            let mut d_out = Array2::zeros(out.raw_dim());
            let mut total = 0.0;
            for i in 0..(e - s) {
                let rows = ndarray::s![i * m..(i + 1) * m, ..];
                let (v, g) = training_loss(loss, out.slice(rows), sub.y.row(i))?;
                total += v;
                d_out.slice_mut(rows).assign(&(g / b as f64));
            }
            let grad = net.backward(&cond, &pass, d_out);
            Ok((total, grad.flat_params()))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; net.param_count()];
    for p in parts {
        let (v, g) = p?;
        total += v;
        for (a, x) in grad.iter_mut().zip(&g) {
            *a += x;
        }
    }
    Ok((total / b as f64, grad))
}

/// Mean loss without gradients.
pub fn batch_loss(net: &GeneratorNetwork, data: &CgmDataset, latent: ArrayView2<f64>, m: usize, loss: LossKind) -> Result<f64, CgmError> {
    let b = data.len();
    let chunks: Vec<(usize, usize)> = (0..b).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(b))).collect();
    let parts: Vec<Result<f64, CgmError>> = chunks
        .par_iter()
        .map(|&(s, e)| {
            let idx: Vec<usize> = (s..e).collect();
            let sub = data.select(&idx);
            let pass = net.forward(&sub.conditioning(), latent.slice(ndarray::s![s * m..e * m, ..]), m)?;
            let out = pass.output();
            let mut total = 0.0;
            for i in 0..(e - s) {
                total += training_loss(loss, out.slice(ndarray::s![i * m..(i + 1) * m, ..]), sub.y.row(i))?.0;
            }
            Ok(total)
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / b as f64)
}

/// Adam with bias correction.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

fn draw_latent(rng: &mut ChaCha8Rng, rows: usize, latent: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, latent), || rng.sample(StandardNormal))
}

/// Trains from freshly initialized weights.
pub fn train(config: &TrainConfig, data: &CgmDataset) -> Result<TrainedCgm, CgmError> {
    train_from(config, data, None)
}

/// Trains from `init` when given (fresh optimizer state), otherwise from
/// fresh weights. The best-validation weights are restored at the end.
pub fn train_from(config: &TrainConfig, data: &CgmDataset, init: Option<GeneratorNetwork>) -> Result<TrainedCgm, CgmError> {
    config.validate()?;
    if data.is_empty() {
        return Err(CgmError::EmptyDataset);
    }
    let scalers = InputScalers::fit(data);
    let norm = scalers.normalize(data);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = GeneratorNetwork::new(config.network.clone(), &mut rng);
    if let Some(init) = init {
        if init.config != config.network {
            return Err(CgmError::ShapeMismatch("resume weights have a different architecture".into()));
        }
        net = init;
    }
    let n = norm.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).min(n.saturating_sub(1));
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    // With too few examples for a split, the training set doubles as validation.
    let val = if n_val == 0 { norm.select(&train_idx) } else { norm.select(val_idx) };
    let m = config.m_train;
    let latent_dim = config.network.latent;
    let val_latent = draw_latent(&mut ChaCha8Rng::seed_from_u64(config.seed ^ VALIDATION_STREAM), val.len() * m, latent_dim);

    let mut params = net.flat_params();
    let mut adam = Adam::new(config.learning_rate, params.len());
    let mut best = (batch_loss(&net, &val, val_latent.view(), m, config.loss)?, params.clone(), 0usize);
    if !best.0.is_finite() {
        return Err(CgmError::NonFiniteLoss { epoch: 0, batch: 0 });
    }
    let mut history = Vec::new();
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for (bi, idx) in train_idx.chunks(config.batch_size).enumerate() {
            let batch = norm.select(idx);
            let latent = draw_latent(&mut rng, idx.len() * m, latent_dim);
            let (loss, grad) = batch_loss_and_grad(&net, &batch, latent.view(), m, config.loss)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(CgmError::NonFiniteLoss { epoch, batch: bi });
            }
            adam.step(&mut params, &grad);
            net.set_flat_params(&params);
            epoch_loss += loss;
            batches += 1;
        }
        let validation_loss = batch_loss(&net, &val, val_latent.view(), m, config.loss)?;
        if !validation_loss.is_finite() {
            return Err(CgmError::NonFiniteLoss { epoch, batch: batches });
        }
        history.push(EpochRecord { epoch, train_loss: epoch_loss / batches.max(1) as f64, validation_loss });
        if validation_loss < best.0 {
            best = (validation_loss, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    net.set_flat_params(&best.1);
    Ok(TrainedCgm { network: net, scalers, config: config.clone(), history, best_epoch: best.2 })
}

//! Three-module generator: a history module on INPUT1, a noise-scale module
//! on INPUT2 and a merging module that also sees INPUT3 and a weekday
//! embedding.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{stack_backward, stack_forward, Activation, Dense, LayerCache};
use super::CgmError;
use crate::market_data::features::{INPUT1_LEN, INPUT2_LEN, INPUT3_LEN};
use crate::market_data::SUBPERIODS;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input1: usize,
    pub input2: usize,
    pub input3: usize,
    pub latent: usize,
    pub weekdays: usize,
    pub embed_dim: usize,
    /// Widths of the history module, the last one being its output.
    pub ts_widths: Vec<usize>,
    /// Hidden widths of the noise-scale module (its output has `latent` units).
    pub delta_hidden: Vec<usize>,
    /// Hidden widths of the merging module (its output has `outputs` units).
    pub all_hidden: Vec<usize>,
    pub outputs: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input1: INPUT1_LEN,
            input2: INPUT2_LEN,
            input3: INPUT3_LEN,
            latent: 100,
            weekdays: 7,
            embed_dim: 2,
            ts_widths: vec![512, 256, 64],
            delta_hidden: vec![128],
            all_hidden: vec![256, 128, 64],
            outputs: SUBPERIODS,
        }
    }
}

impl NetworkConfig {
    /// Hidden widths divided by two; inputs, latent size and outputs unchanged.
    pub fn halved(&self) -> Self {
        let half = |v: &Vec<usize>| v.iter().map(|w| (w / 2).max(1)).collect();
        Self { ts_widths: half(&self.ts_widths), delta_hidden: half(&self.delta_hidden), all_hidden: half(&self.all_hidden), ..self.clone() }
    }

    /// Dense layers including the embedding.
    pub fn dense_layers(&self) -> usize {
        self.ts_widths.len() + self.delta_hidden.len() + 1 + self.all_hidden.len() + 1 + 1
    }

    fn ts_out(&self) -> usize {
        *self.ts_widths.last().expect("history module has at least one layer")
    }

    /// Width of the per-example part of the merging input.
    fn example_width(&self) -> usize {
        self.ts_out() + self.input3 + self.embed_dim
    }
}

/// Generator weights. The first merging layer takes
/// `[h_ts, δ ⊙ z, INPUT3, embedding]` in that row order.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNetwork {
    pub config: NetworkConfig,
    pub ts: Vec<Dense>,
    pub delta: Vec<Dense>,
    pub all: Vec<Dense>,
    pub embedding: Array2<f64>,
}

/// Normalized conditioning inputs of a batch of `B` examples.
#[derive(Debug, Clone, Copy)]
pub struct Conditioning<'a> {
    pub x1: ArrayView2<'a, f64>,
    pub x2: ArrayView2<'a, f64>,
    pub x3: ArrayView2<'a, f64>,
    /// Weekday category 1..=7 per example.
    pub weekday: &'a [u8],
}

impl Conditioning<'_> {
    pub fn len(&self) -> usize {
        self.x1.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct ForwardPass {
    m: usize,
    ts: Vec<LayerCache>,
    delta: Vec<LayerCache>,
    latent: Array2<f64>,
    noise: Array2<f64>,
    example_input: Array2<f64>,
    all: Vec<LayerCache>,
}

impl ForwardPass {
    /// Samples in normalized space, `B·M x outputs`, example-major.
    pub fn output(&self) -> &Array2<f64> {
        &self.all.last().expect("merging module has layers").a
    }

    /// Noise scales `δ`, one row per example.
    pub fn delta(&self) -> &Array2<f64> {
        &self.delta.last().expect("noise module has layers").a
    }
}

fn build_stack<R: Rng>(input: usize, widths: &[usize], last: Activation, rng: &mut R) -> Vec<Dense> {
    let mut layers = Vec::with_capacity(widths.len());
    let mut prev = input;
    for (i, &w) in widths.iter().enumerate() {
        let act = if i + 1 == widths.len() { last } else { Activation::Elu };
        layers.push(Dense::new(prev, w, act, rng));
        prev = w;
    }
    layers
}

impl GeneratorNetwork {
    pub fn new<R: Rng>(config: NetworkConfig, rng: &mut R) -> Self {
        let ts = build_stack(config.input1, &config.ts_widths, Activation::Elu, rng);
        let mut dw = config.delta_hidden.clone();
        dw.push(config.latent);
        let delta = build_stack(config.input2, &dw, Activation::Softplus, rng);
        let mut aw = config.all_hidden.clone();
        aw.push(config.outputs);
        let merged_in = config.ts_out() + config.latent + config.input3 + config.embed_dim;
        let all = build_stack(merged_in, &aw, Activation::Linear, rng);
        let bound = 1.0 / (config.weekdays as f64).sqrt();
        let embedding = Array2::from_shape_fn((config.weekdays, config.embed_dim), |_| rng.random_range(-bound..bound));
        Self { config, ts, delta, all, embedding }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            ts: self.ts.iter().map(Dense::zeros_like).collect(),
            delta: self.delta.iter().map(Dense::zeros_like).collect(),
            all: self.all.iter().map(Dense::zeros_like).collect(),
            embedding: Array2::zeros(self.embedding.raw_dim()),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.ts.iter().chain(&self.delta).chain(&self.all)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.ts.iter_mut().chain(self.delta.iter_mut()).chain(self.all.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum::<usize>() + self.embedding.len()
    }

    /// All parameters in a fixed order: each layer's weights (row-major)
    /// then biases, module by module, then the embedding table.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out.extend(self.embedding.iter());
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter vector length");
        let mut pos = 0;
        let mut take = |dst: &mut dyn Iterator<Item = &mut f64>| {
            for v in dst {
                *v = params[pos];
                pos += 1;
            }
        };
        for l in self.layers_mut() {
            take(&mut l.w.iter_mut());
            take(&mut l.b.iter_mut());
        }
        take(&mut self.embedding.iter_mut());
    }

    /// Row indices of the first merging layer that see per-example inputs.
    fn example_rows(&self) -> Vec<usize> {
        let c = &self.config;
        let ts = c.ts_out();
        (0..ts).chain(ts + c.latent..ts + c.latent + c.input3 + c.embed_dim).collect()
    }

    fn noise_rows(&self) -> std::ops::Range<usize> {
        let ts = self.config.ts_out();
        ts..ts + self.config.latent
    }

    pub fn check_shapes(&self, cond: &Conditioning, latent: ArrayView2<f64>, m: usize) -> Result<(), CgmError> {
        let c = &self.config;
        let b = cond.len();
        let ok = cond.x1.ncols() == c.input1
            && cond.x2.ncols() == c.input2
            && cond.x3.ncols() == c.input3
            && cond.x2.nrows() == b
            && cond.x3.nrows() == b
            && cond.weekday.len() == b
            && cond.weekday.iter().all(|w| (1..=c.weekdays as u8).contains(w))
            && latent.ncols() == c.latent
            && latent.nrows() == b * m
            && m >= 1;
        if ok {
            Ok(())
        } else {
            Err(CgmError::ShapeMismatch(format!(
                "inputs {}x{}/{}x{}/{}x{}, {} weekdays, latent {}x{}, M={m}",
                cond.x1.nrows(),
                cond.x1.ncols(),
                cond.x2.nrows(),
                cond.x2.ncols(),
                cond.x3.nrows(),
                cond.x3.ncols(),
                cond.weekday.len(),
                latent.nrows(),
                latent.ncols()
            )))
        }
    }

    /// Evaluates `B·M` samples; the history and noise-scale modules run once
    /// per example.
    pub fn forward(&self, cond: &Conditioning, latent: ArrayView2<f64>, m: usize) -> Result<ForwardPass, CgmError> {
        self.check_shapes(cond, latent, m)?;
        let b = cond.len();
        let c = &self.config;
        let ts = stack_forward(&self.ts, cond.x1);
        let delta = stack_forward(&self.delta, cond.x2);
        let d = &delta.last().expect("noise module").a;
        let mut noise = latent.to_owned();
        for (row, mut n) in noise.outer_iter_mut().enumerate() {
            n *= &d.row(row / m);
        }
        let mut example_input = Array2::zeros((b, c.example_width()));
        let ts_out = c.ts_out();
        example_input.slice_mut(s![.., ..ts_out]).assign(&ts.last().expect("history module").a);
        example_input.slice_mut(s![.., ts_out..ts_out + c.input3]).assign(&cond.x3);
        for (i, w) in cond.weekday.iter().enumerate() {
            example_input.slice_mut(s![i, ts_out + c.input3..]).assign(&self.embedding.row(*w as usize - 1));
        }
        let first = &self.all[0];
        let w_ex = first.w.select(Axis(0), &self.example_rows());
        let w_noise = first.w.slice(s![self.noise_rows(), ..]);
        let ex_pre = example_input.dot(&w_ex) + &first.b;
        let mut z = noise.dot(&w_noise);
        for (row, mut zr) in z.outer_iter_mut().enumerate() {
            zr += &ex_pre.row(row / m);
        }
        let act = first.activation;
        let a = z.mapv(|v| act.apply(v));
        let mut all = vec![LayerCache { z, a }];
        all.extend(stack_forward(&self.all[1..], all[0].a.view()));
        Ok(ForwardPass { m, ts, delta, latent: latent.to_owned(), noise, example_input, all })
    }

    /// Parameter gradients for the loss gradient `d_out` on the samples.
    pub fn backward(&self, cond: &Conditioning, pass: &ForwardPass, d_out: Array2<f64>) -> GeneratorNetwork {
        let mut grad = self.zeros_like();
        let c = &self.config;
        let m = pass.m;
        let b = cond.len();
        let d_first = stack_backward(&self.all[1..], pass.all[0].a.view(), &pass.all[1..], d_out, &mut grad.all[1..], true)
            .expect("input gradient requested");
        let first = &self.all[0];
        let mut dz = d_first;
        let act = first.activation;
        ndarray::Zip::from(&mut dz).and(&pass.all[0].z).and(&pass.all[0].a).for_each(|d, &z, &a| *d *= act.derivative(z, a));
        let width = dz.ncols();
        let per_example = dz.view().into_shape_with_order((b, m, width)).expect("example-major rows").sum_axis(Axis(1));

        let noise_rows = self.noise_rows();
        let g_noise = pass.noise.t().dot(&dz);
        grad.all[0].w.slice_mut(s![noise_rows.clone(), ..]).assign(&g_noise);
        let g_ex = pass.example_input.t().dot(&per_example);
        for (k, row) in self.example_rows().into_iter().enumerate() {
            grad.all[0].w.row_mut(row).assign(&g_ex.row(k));
        }
        grad.all[0].b = per_example.sum_axis(Axis(0));

        let w_noise = first.w.slice(s![noise_rows, ..]);
        let d_noise = dz.dot(&w_noise.t());
        let w_ex = first.w.select(Axis(0), &self.example_rows());
        let d_ex = per_example.dot(&w_ex.t());

        let mut d_delta = Array2::zeros((b, c.latent));
        for (row, dn) in d_noise.outer_iter().enumerate() {
            let mut target = d_delta.row_mut(row / m);
            ndarray::Zip::from(&mut target).and(&dn).and(&pass.latent.row(row)).for_each(|t, &g, &z| *t += g * z);
        }
        let ts_out = c.ts_out();
        let d_ts = d_ex.slice(s![.., ..ts_out]).to_owned();
        for (i, w) in cond.weekday.iter().enumerate() {
            let g = d_ex.slice(s![i, ts_out + c.input3..]);
            let mut row = grad.embedding.row_mut(*w as usize - 1);
            row += &g;
        }
        stack_backward(&self.delta, cond.x2, &pass.delta, d_delta, &mut grad.delta, false);
        stack_backward(&self.ts, cond.x1, &pass.ts, d_ts, &mut grad.ts, false);
        grad
    }

    /// Noise scales for a batch of normalized INPUT2 rows.
    pub fn delta_only(&self, x2: ArrayView2<f64>) -> Array2<f64> {
        stack_forward(&self.delta, x2).pop().expect("noise module").a
    }
}

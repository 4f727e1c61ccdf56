//! Acceptance suite. Every criterion prints one `ACCEPTANCE <n> PASS|FAIL`
//! line straight to stdout, so the lines show up even under captured output.
//! The test fails at the end if any criterion failed.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use chrono::Duration;
use ndarray::{array, Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use pathcast_core::backtest::{
    cgm_training_data, run_backtest, write_score_reports, write_summary, write_trading_reports, BacktestConfig, BacktestOutcome, RunOptions,
};
use pathcast_core::bands::{build_band, empirical_scp, BandSide, PredictionBand};
use pathcast_core::cgm::train::batch_loss_and_grad;
use pathcast_core::cgm::{CgmDataset, GeneratorNetwork, LossKind, NetworkConfig};
use pathcast_core::marginal_quantiles::{percentile_level, MarginalCdf, QuantileFan};
use pathcast_core::market_data::{build_cgm_inputs, DeliveryKey, MarketFrame, SUBPERIODS};
use pathcast_core::path_samplers::{sample_copula_paths, CopulaSpec};
use pathcast_core::point_forecast::{fit_lasso, soft_threshold};
use pathcast_core::scoring::{crps, dawid_sebastiani, energy_score, variogram_score, variogram_score_uniform, DSS_JITTER};
use pathcast_core::stats::{ks_statistic, pearson, spearman};
use pathcast_core::synth::{generate, SynthConfig};
use pathcast_core::trading::{crystal_ball, Strategy};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

// Brute-force oracles ------------------------------------------------------

fn crps_oracle(x: &[f64], y: f64) -> f64 {
    let m = x.len() as f64;
    let mut a = 0.0;
    let mut b = 0.0;
    for xi in x {
        a += (xi - y).abs();
        for xk in x {
            b += (xi - xk).abs();
        }
    }
    a / m - b / (2.0 * m * m)
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.len() {
        s += (a[j] - b[j]).powi(2);
    }
    s.sqrt()
}

fn es_oracle(x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let m = x.nrows() as f64;
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..x.nrows() {
        a += dist(x.row(i), y);
        for k in 0..x.nrows() {
            if k != i {
                b += dist(x.row(i), x.row(k));
            }
        }
    }
    a / m - b / (2.0 * m * (m - 1.0))
}

/// Double-double number `hi + lo`, enough precision that the oracle's own
/// rounding is far below the tolerance even for ill-conditioned covariances.
#[derive(Debug, Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn from(x: f64) -> Self {
        Dd(x, 0.0)
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd(s, (a - (s - bb)) + (b - bb))
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.0, o.0);
        let t = Dd::two_sum(self.1, o.1);
        let r = Dd::two_sum(s.0, s.1 + t.0);
        Dd::two_sum(r.0, r.1 + t.1)
    }

    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        Dd::two_sum(p, e + self.0 * o.1 + self.1 * o.0)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.0 / o.0;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.0 / o.0;
        Dd::two_sum(q1, q2).add(Dd::from(q3))
    }

    fn ln(self) -> f64 {
        self.0.ln() + self.1 / self.0
    }

    fn f64(self) -> f64 {
        self.0 + self.1
    }
}

/// Unpivoted Gaussian elimination of a symmetric positive definite system.
/// Returns `(log det, pivots, solution)`.
fn gauss(mut a: Vec<Vec<Dd>>, mut rhs: Vec<Dd>) -> (f64, Vec<Dd>, Vec<Dd>) {
    let d = rhs.len();
    let mut pivots = Vec::with_capacity(d);
    for c in 0..d {
        let p = a[c][c];
        pivots.push(p);
        for r in (c + 1)..d {
            let f = a[r][c].div(p);
            for k in c..d {
                a[r][k] = a[r][k].sub(f.mul(a[c][k]));
            }
            rhs[r] = rhs[r].sub(f.mul(rhs[c]));
        }
    }
    let mut x = vec![Dd::from(0.0); d];
    for r in (0..d).rev() {
        let mut s = rhs[r];
        for k in (r + 1)..d {
            s = s.sub(a[r][k].mul(x[k]));
        }
        x[r] = s.div(a[r][r]);
    }
    (pivots.iter().map(|p| p.ln()).sum(), pivots, x)
}

fn dss_oracle(x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let (m, d) = x.dim();
    let mut mean = vec![Dd::from(0.0); d];
    for i in 0..m {
        for j in 0..d {
            mean[j] = mean[j].add(Dd::from(x[[i, j]]));
        }
    }
    for v in mean.iter_mut() {
        *v = v.div(Dd::from(m as f64));
    }
    let mut cov = vec![vec![Dd::from(0.0); d]; d];
    for a in 0..d {
        for b in 0..d {
            let mut s = Dd::from(0.0);
            for i in 0..m {
                s = s.add(Dd::from(x[[i, a]]).sub(mean[a]).mul(Dd::from(x[[i, b]]).sub(mean[b])));
            }
            cov[a][b] = s.div(Dd::from(m as f64 - 1.0));
        }
    }
    let k: Vec<Dd> = (0..d).map(|j| Dd::from(y[j]).sub(mean[j])).collect();
    let (mut logdet, pivots, mut sol) = gauss(cov.clone(), k.clone());
    if pivots.iter().any(|p| p.f64() <= DSS_JITTER) {
        for (a, row) in cov.iter_mut().enumerate() {
            row[a] = row[a].add(Dd::from(DSS_JITTER));
        }
        (logdet, _, sol) = gauss(cov, k.clone());
    }
    let quad = k.iter().zip(&sol).fold(Dd::from(0.0), |acc, (a, b)| acc.add(a.mul(*b)));
    logdet + quad.f64()
}

fn vs_oracle(x: ArrayView2<f64>, y: ArrayView1<f64>, p: f64, w: ArrayView2<f64>) -> f64 {
    let (m, d) = x.dim();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut ev = 0.0;
            for r in 0..m {
                ev += (x[[r, i]] - x[[r, j]]).abs().powf(p);
            }
            let diff = (y[i] - y[j]).abs().powf(p) - ev / m as f64;
            s += w[[i, j]] * diff * diff;
        }
    }
    s
}

// Criteria -----------------------------------------------------------------

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = BTreeMap::from([("crps", 0.0f64), ("es", 0.0), ("dss", 0.0), ("vs", 0.0)]);
    let mut dss_checked = 0;
    let mut bump = |name, err: f64| {
        let w = worst.get_mut(name).unwrap();
        *w = w.max(err);
    };
    for _ in 0..1000 {
        let m = rng.random_range(2..=50);
        let d = rng.random_range(1..=10);
        let scale = rng.random_range(0.1..20.0);
        let x = normal_matrix(&mut rng, m, d, scale);
        let y = normal_matrix(&mut rng, 1, d, scale).row(0).to_owned();
        for j in 0..d {
            let col = x.column(j).to_vec();
            bump("crps", (crps(&col, y[j]) - crps_oracle(&col, y[j])).abs());
        }
        bump("es", (energy_score(x.view(), y.view()).unwrap() - es_oracle(x.view(), y.view())).abs());
        match dawid_sebastiani(x.view(), y.view()) {
            Ok(v) => {
                dss_checked += 1;
                bump("dss", (v - dss_oracle(x.view(), y.view())).abs());
            }
            Err(_) if m < d + 1 => {}
            Err(e) => return Err(format!("DSS failed on M={m} D={d}: {e}")),
        }
        let w = Array2::from_shape_simple_fn((d, d), || rng.random_range(0.0..1.0));
        let uniform = Array2::from_elem((d, d), 1.0 / (d * d) as f64);
        for p in [1.0, 0.5] {
            bump("vs", (variogram_score(x.view(), y.view(), p, w.view()).unwrap() - vs_oracle(x.view(), y.view(), p, w.view())).abs());
            bump("vs", (variogram_score_uniform(x.view(), y.view(), p).unwrap() - vs_oracle(x.view(), y.view(), p, uniform.view())).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let max_err = worst.values().copied().fold(0.0, f64::max);
    check(
        max_err <= 1e-10 && secs < 10.0,
        format!("max abs err {worst:?} over 1000 instances ({dss_checked} with DSS), {secs:.2} s"),
    )
}

fn criterion_2() -> Verdict {
    let mut failures = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64, tol: f64| {
        if (got - want).abs() > tol {
            failures.push(format!("{name}: got {got}, want {want}"));
        }
    };
    expect("crps", crps(&[0.0, 2.0], 1.0), 0.5, 0.0);
    expect("es", energy_score(array![[0.0, 0.0], [2.0, 2.0]].view(), array![1.0, 1.0].view()).unwrap(), 0.0, 0.0);
    let dss = dawid_sebastiani(array![[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]].view(), array![2.0, 0.0].view()).unwrap();
    expect("dss", dss, (16.0f64 / 9.0).ln() + 3.0, 1e-9);
    let w = Array2::from_elem((2, 2), 0.25);
    expect("vs", variogram_score(array![[0.0, 1.0]].view(), array![0.0, 2.0].view(), 1.0, w.view()).unwrap(), 0.5, 0.0);
    let band: PredictionBand = build_band(array![[1.0, 5.0], [2.0, 2.0], [4.0, 1.0], [3.0, 3.0]].view(), 0.5, BandSide::Upper);
    expect("band t1", band.values[0], 3.0, 0.0);
    expect("band t2", band.values[1], 3.0, 0.0);
    expect("soft-threshold", soft_threshold(2.0, 0.5), 1.5, 1e-6);
    let x = Array2::from_shape_vec((4, 1), vec![1.0, -1.0, 1.0, -1.0]).unwrap();
    let y = Array1::from_vec(vec![2.3, -1.7, 1.7, -2.3]);
    expect("lasso", fit_lasso(x.view(), y.view(), 0.5).unwrap().coefficients[0], 1.5, 1e-6);
    check(failures.is_empty(), if failures.is_empty() { "all six fixtures exact".into() } else { failures.join("; ") })
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let cfg = NetworkConfig {
        input1: 5,
        input2: 4,
        input3: 3,
        latent: 3,
        weekdays: 7,
        embed_dim: 2,
        ts_widths: vec![8],
        delta_hidden: vec![],
        all_hidden: vec![8],
        outputs: SUBPERIODS,
    };
    let mut worst = Vec::new();
    for (loss, seed) in [(LossKind::EnergyScore, 31u64), (LossKind::Custom { omega: 0.4 }, 32)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = GeneratorNetwork::new(cfg.clone(), &mut rng);
        let n = 3;
        let data = CgmDataset {
            x1: normal_matrix(&mut rng, n, cfg.input1, 1.0),
            x2: normal_matrix(&mut rng, n, cfg.input2, 1.0),
            x3: normal_matrix(&mut rng, n, cfg.input3, 1.0),
            weekday: (0..n).map(|i| (i % 7) as u8 + 1).collect(),
            y: normal_matrix(&mut rng, n, SUBPERIODS, 1.0),
        };
        let m = 4;
        let latent = normal_matrix(&mut rng, n * m, cfg.latent, 1.0);
        let (_, grad) = batch_loss_and_grad(&net, &data, latent.view(), m, loss).unwrap();
        let base = net.flat_params();
        let eval = |p: &[f64]| {
            let mut moved = net.clone();
            moved.set_flat_params(p);
            batch_loss_and_grad(&moved, &data, latent.view(), m, loss).unwrap().0
        };
        let mut max_rel = 0.0f64;
        for _ in 0..100 {
            let k = rng.random_range(0..base.len());
            let h = 1e-6 * base[k].abs().max(1.0);
            let mut plus = base.clone();
            plus[k] += h;
            let mut minus = base.clone();
            minus[k] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let scale = fd.abs().max(grad[k].abs());
            if scale > 1e-10 {
                max_rel = max_rel.max((fd - grad[k]).abs() / scale);
            }
        }
        worst.push((loss, max_rel));
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst.iter().all(|(_, r)| *r <= 1e-4) && secs < 30.0;
    check(ok, format!("max relative error {worst:?} on 100 probes each, {secs:.2} s"))
}

fn criterion_4() -> Verdict {
    let m = 10_000;
    let rho = 0.8;
    let spec = CopulaSpec::equicorrelation(rho, "known");
    let normal = Normal::standard();
    let fan = QuantileFan::from_values((0..99).map(|k| normal.inverse_cdf(percentile_level(k))).collect()).unwrap();
    let cdfs: Vec<MarginalCdf> = (0..SUBPERIODS).map(|_| fan.cdf()).collect();
    let key = DeliveryKey::new(chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 0);
    let paths = sample_copula_paths(&spec, &cdfs, m, key, 404).unwrap().samples;
    let scores: Vec<Vec<f64>> =
        (0..SUBPERIODS).map(|j| paths.column(j).iter().map(|x| normal.inverse_cdf(cdfs[j].cdf(*x))).collect()).collect();
    let mut corr_err = 0.0f64;
    for a in 0..SUBPERIODS {
        for b in (a + 1)..SUBPERIODS {
            corr_err = corr_err.max((pearson(&scores[a], &scores[b]) - rho).abs());
        }
    }
    let ks = (0..SUBPERIODS).map(|j| ks_statistic(&paths.column(j).to_vec(), |x| cdfs[j].cdf(x))).fold(0.0, f64::max);
    let bound = 1.63 / (m as f64).sqrt();
    check(corr_err <= 0.05 && ks <= bound, format!("max |corr - 0.8| {corr_err:.4}, max KS {ks:.5} (bound {bound:.5})"))
}

/// Gaussian AR(1) paths with unit stationary variance.
fn ar1_paths(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Array2<f64> {
    let innov = (1.0 - phi * phi).sqrt();
    let mut out = Array2::zeros((n, SUBPERIODS));
    for mut row in out.rows_mut() {
        let mut x: f64 = rng.sample(StandardNormal);
        for v in row.iter_mut() {
            *v = x;
            x = phi * x + innov * rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let ensemble = ar1_paths(&mut rng, 10_000, 0.7);
    let held_out: Vec<Vec<f64>> = ar1_paths(&mut rng, 10_000, 0.7).rows().into_iter().map(|r| r.to_vec()).collect();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for side in [BandSide::Upper, BandSide::Lower] {
        for alpha in [0.25, 0.5, 0.75] {
            let scp = empirical_scp(&build_band(ensemble.view(), alpha, side), &held_out);
            worst = worst.max((scp - alpha).abs());
            parts.push(format!("{}@{alpha}={scp:.4}", side.as_str()));
        }
    }
    check(worst <= 0.03, format!("max |SCP - alpha| {worst:.4} ({})", parts.join(", ")))
}

fn criterion_6() -> Verdict {
    let synth = generate(&SynthConfig { days: 490, seed: 606, ..SynthConfig::default() });
    let frame = &synth.frame;
    let mut cfg = BacktestConfig::desk();
    cfg.seed = 606;
    cfg.engines = vec!["CGM".into()];
    cfg.test_start = Some(frame.start_date() + Duration::days(430));
    cfg.test_days = 60;
    cfg.windows.cgm_days = 430;
    cfg.samples.cgm_members = 1;
    let (data, _) = cgm_training_data(frame, &cfg).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let model = pathcast_core::cgm::train(&cfg.cgm.train_config(cfg.seed), &data).map_err(|e| e.to_string())?;
    let train_secs = start.elapsed().as_secs_f64();

    let test_start = cfg.test_start.unwrap();
    let keys: Vec<DeliveryKey> =
        (0..60).flat_map(|d| (0..24).map(move |h| DeliveryKey::new(test_start + Duration::days(d), h))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(607);
    let climatology = data.select(&(0..1000).map(|_| rng.random_range(0..data.len())).collect::<Vec<_>>()).y;
    let (mut delta_norm, mut scale) = (Vec::new(), Vec::new());
    let (mut es_cgm, mut es_clim) = (0.0, 0.0);
    for (i, key) in keys.iter().enumerate() {
        let inputs = build_cgm_inputs(frame, *key).map_err(|e| e.to_string())?;
        let obs = Array1::from_vec(frame.path_for(key).map_err(|e| e.to_string())?.values.to_vec());
        delta_norm.push(model.delta(&inputs).iter().map(|v| v * v).sum::<f64>().sqrt());
        scale.push(synth.noise_scale[frame.index_of(key).expect("key in frame")]);
        let samples = model.sample(&inputs, 1000, 9000 + i as u64).map_err(|e| e.to_string())?;
        es_cgm += energy_score(samples.view(), obs.view()).unwrap();
        es_clim += energy_score(climatology.view(), obs.view()).unwrap();
    }
    let rho = spearman(&delta_norm, &scale);
    let gain = 1.0 - es_cgm / es_clim;
    check(
        rho >= 0.5 && gain >= 0.10 && train_secs <= 900.0,
        format!(
            "{} examples, Spearman {rho:.3}, ES {:.3} vs climatology {:.3} ({:.1}% better), training {train_secs:.0} s on {} threads",
            data.len(),
            es_cgm / keys.len() as f64,
            es_clim / keys.len() as f64,
            100.0 * gain,
            rayon::current_num_threads(),
        ),
    )
}

fn e2e_run(frame: &MarketFrame) -> Result<(BacktestOutcome, f64), String> {
    let mut cfg = BacktestConfig::desk();
    cfg.seed = 7;
    cfg.engines = vec!["BOOTSTRAP".into(), "LQC".into(), "CGM".into()];
    let start = Instant::now();
    let outcome = run_backtest(frame, &cfg, None, &RunOptions::default()).map_err(|e| e.to_string())?;
    Ok((outcome, start.elapsed().as_secs_f64()))
}

fn e2e_frame() -> MarketFrame {
    generate(&SynthConfig { days: 80, seed: 7, drift: 3.0, ..SynthConfig::default() }).frame
}

fn criterion_7(frame: &MarketFrame, run: &(BacktestOutcome, f64)) -> Verdict {
    let (out, secs) = run;
    let ledger = &out.ledger;
    let mut problems = Vec::new();
    if *secs >= 600.0 {
        problems.push(format!("took {secs:.0} s"));
    }
    if !out.audit.violations.is_empty() || out.audit.checked == 0 {
        problems.push(format!("{} leakage violations of {} checked", out.audit.violations.len(), out.audit.checked));
    }
    if !out.skips.is_empty() {
        problems.push(format!("{} skipped keys", out.skips.len()));
    }
    for (s, t) in &ledger.totals {
        match t.rtp() {
            Some(r) if (0.0..=100.0).contains(&r) => {}
            other => problems.push(format!("RTP of {s} is {other:?}")),
        }
    }
    let mut dominance_checked = 0;
    for d in &ledger.decisions {
        // The t_0 market order of Naive_first trades outside the ten subperiods.
        if d.chosen == Some(0) {
            continue;
        }
        let (hi, lo) = crystal_ball(&frame.path_for(&d.key).map_err(|e| e.to_string())?);
        if d.revenue > hi || d.revenue < lo {
            problems.push(format!("{} at {} outside [{lo}, {hi}]", d.strategy, d.key));
        }
        dominance_checked += 1;
    }
    let naive_first = ledger.totals.get(&Strategy::NaiveFirst).map(|t| t.profit).unwrap_or(f64::NAN);
    let mut majority = Vec::new();
    for g in &out.engines {
        let p = ledger.totals.get(&Strategy::Majority { engine: g.as_str().into() }).map(|t| t.profit).unwrap_or(f64::NAN);
        if !(p >= naive_first) {
            problems.push(format!("majority:{g} profit {p} < naive_first {naive_first}"));
        }
        majority.push(format!("{g} {:.1}", ledger.rtp(&Strategy::Majority { engine: g.as_str().into() }).unwrap_or(f64::NAN)));
    }
    let detail = format!(
        "{secs:.0} s, {} keys, {} audited, {dominance_checked} decisions inside CB, RTP naive_first {:.1}, majority [{}]",
        out.test_keys,
        out.audit.checked,
        ledger.rtp(&Strategy::NaiveFirst).unwrap_or(f64::NAN),
        majority.join(", "),
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn report_bodies(out: &BacktestOutcome, dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = write_score_reports(out, dir).unwrap();
    files.extend(write_trading_reports(out, dir).unwrap());
    files.extend(write_summary(out, dir).unwrap());
    files.iter().map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap())).collect()
}

fn criterion_8(frame: &MarketFrame, first: &BacktestOutcome) -> Verdict {
    let (second, _) = e2e_run(frame)?;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = report_bodies(first, a.path());
    let rb = report_bodies(&second, b.path());
    let differing: Vec<&String> = ra.keys().filter(|k| ra.get(*k) != rb.get(*k)).collect();
    let bytes: usize = ra.values().map(Vec::len).sum();
    check(
        differing.is_empty() && ra.len() == rb.len(),
        format!("{} report files, {bytes} bytes, differing {differing:?}", ra.len()),
    )
}

fn report(n: usize, verdict: std::thread::Result<Verdict>) -> bool {
    let (ok, detail) = match verdict {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => (false, format!("panicked: {}", p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())),
    };
    let mut out = std::io::stdout();
    writeln!(out, "ACCEPTANCE {n} {}: {detail}", if ok { "PASS" } else { "FAIL" }).unwrap();
    out.flush().unwrap();
    ok
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    results.push(report(1, catch_unwind(criterion_1)));
    results.push(report(2, catch_unwind(criterion_2)));
    results.push(report(3, catch_unwind(criterion_3)));
    results.push(report(4, catch_unwind(criterion_4)));
    results.push(report(5, catch_unwind(criterion_5)));
    results.push(report(6, catch_unwind(criterion_6)));
    let frame = e2e_frame();
    match catch_unwind(AssertUnwindSafe(|| e2e_run(&frame))) {
        Ok(Ok(run)) => {
            results.push(report(7, catch_unwind(AssertUnwindSafe(|| criterion_7(&frame, &run)))));
            results.push(report(8, catch_unwind(AssertUnwindSafe(|| criterion_8(&frame, &run.0)))));
        }
        other => {
            let err = match other {
                Ok(Err(e)) => Ok(Err(e)),
                Ok(Ok(_)) => unreachable!(),
                Err(p) => Err(p),
            };
            results.push(report(7, err));
            results.push(report(8, Ok(Err("end-to-end run failed".into()))));
        }
    }
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed acceptance criteria: {failed:?}");
}

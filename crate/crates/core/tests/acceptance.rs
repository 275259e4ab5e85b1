//! Acceptance suite. Prints one PASS/FAIL (or SKIP) line per criterion and
//! exits non-zero when any criterion fails.
//!
//! Dataset criteria run only when `PROPFAULT_UAVFD_MANIFEST` points at a
//! manifest of the real flights.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand_distr::StandardNormal;

use propfault::baselines::mahalanobis_score;
use propfault::cls::{build_toy_ensemble, cls_detect, uniform_weights, ToyEnsemble};
use propfault::config::RunConfig;
use propfault::detector::{composite_q, ema_smooth};
use propfault::eval::lofo::{run_lofo, FoldResult, LofoConfig, Method};
use propfault::eval::metrics::auc;
use propfault::eval::report::{build_report, emit_report, EvalReport, REPORT_SCHEMA};
use propfault::features::FeatureSet;
use propfault::gaussian::{ledoit_wolf, GaussianModel, HypothesisBank, Standardizer};
use propfault::ingest::{IngestConfig, Manifest};
use propfault::rng::{rng_from_seed, Rng};
use propfault::sbi::{
    build_training_pairs, calibration_report, mixture_nll_grad, train_posterior, FaultParams, MdnConfig,
    MixtureDensityNetwork, PairConfig, TrainingPair,
};
use propfault::synth::generate_corpus;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const DATASET_ENV: &str = "PROPFAULT_UAVFD_MANIFEST";

#[derive(Default)]
struct Suite {
    failed: Vec<String>,
}

impl Suite {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name.to_string());
        }
    }

    fn error(&mut self, name: &str, e: propfault::Error) {
        self.record(name, false, format!("error: {e}"));
    }
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn normal_matrix(rng: &mut Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

/// Gauss-Jordan inverse with partial pivoting, plus log|det|.
fn gauss_jordan(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col];
        log_det += p.abs().ln();
        for j in 0..n {
            m[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = m[i][col];
                for j in 0..n {
                    m[i][j] -= f * m[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    (inv, log_det)
}

fn quad_form(inv: &[Vec<f64>], v: &[f64]) -> f64 {
    (0..v.len()).map(|i| (0..v.len()).map(|j| v[i] * inv[i][j] * v[j]).sum::<f64>()).sum()
}

fn naive_ema(q: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut s = 0.0;
    for (t, &v) in q.iter().enumerate() {
        s = if t == 0 { v } else { alpha * v + (1.0 - alpha) * s };
        out.push(s);
    }
    out
}

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn brute_tail(toys: &[f64], q: f64) -> f64 {
    (1 + toys.iter().filter(|&&v| v >= q).count()) as f64 / (toys.len() + 1) as f64
}

fn numerical_oracles(suite: &mut Suite) {
    const NAME: &str = "numerical oracles";
    let t0 = Instant::now();
    let mut rng = rng_from_seed(101);
    let (mut e_logpdf, mut e_maha, mut e_ema, mut e_auc, mut e_cls) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let instances = 200;
    for _ in 0..instances {
        let d = rng.random_range(1..=8);
        let b = normal_matrix(&mut rng, d, d);
        let cov = &b * b.transpose() + DMatrix::identity(d, d) * 0.5;
        let mean = DVector::from_fn(d, |_, _| normal(&mut rng));
        let model = match GaussianModel::from_parts(mean.clone(), cov.clone(), 0.0) {
            Ok(m) => m,
            Err(e) => return suite.error(NAME, e),
        };
        let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| cov[(i, j)]).collect()).collect();
        let (inv, log_det) = gauss_jordan(&rows);
        let x: Vec<f64> = (0..d).map(|_| 2.0 * normal(&mut rng)).collect();
        let diff: Vec<f64> = x.iter().zip(mean.iter()).map(|(a, b)| a - b).collect();
        let q = quad_form(&inv, &diff);
        let want = -0.5 * (d as f64 * LN_2PI + log_det + q);
        e_logpdf = e_logpdf.max((model.log_pdf(&x).unwrap() - want).abs());
        e_maha = e_maha.max((mahalanobis_score(&model, &x).unwrap() - q.sqrt()).abs());

        let n = rng.random_range(1..=200);
        let series: Vec<f64> = (0..n).map(|_| 5.0 * normal(&mut rng)).collect();
        let alpha = rng.random_range(0.01..=1.0);
        let got = ema_smooth(&series, alpha).unwrap();
        for (a, b) in got.iter().zip(naive_ema(&series, alpha)) {
            e_ema = e_ema.max((a - b).abs());
        }

        // Rounded scores force ties.
        let n = rng.random_range(4..=120);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| ((normal(&mut rng) + if l { 0.7 } else { 0.0 }) * 4.0).round() / 4.0)
            .collect();
        e_auc = e_auc.max((auc(&scores, &labels).unwrap() - pairwise_auc(&scores, &labels)).abs());

        let toys = |rng: &mut Rng, n: usize| -> Vec<f64> {
            let mut v: Vec<f64> = (0..n).map(|_| (normal(rng) * 3.0).round() / 2.0).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let n = rng.random_range(1..=300);
        let ensemble = ToyEnsemble {
            q_under_h0: toys(&mut rng, n),
            q_under_h1: toys(&mut rng, n),
            n_toys: n,
            seed: 0,
            h1_weights: vec![1.0],
        };
        let q_obs = if rng.random_bool(0.5) { ensemble.q_under_h0[rng.random_range(0..n)] } else { 3.0 * normal(&mut rng) };
        let r = cls_detect(&ensemble, q_obs, 0.05).unwrap();
        let (pb, psb) = (brute_tail(&ensemble.q_under_h0, q_obs), brute_tail(&ensemble.q_under_h1, q_obs));
        e_cls = e_cls.max((r.p_b - pb).abs()).max((r.p_sb - psb).abs()).max((r.cls_det - pb / psb).abs());
    }
    let elapsed = t0.elapsed();
    let pass = e_logpdf <= 1e-9 && e_maha <= 1e-9 && e_ema <= 1e-12 && e_auc <= 1e-9 && e_cls <= 1e-9 && elapsed.as_secs() < 60;
    suite.record(
        NAME,
        pass,
        format!(
            "{instances} instances each; max error log-density {e_logpdf:.1e}, Mahalanobis {e_maha:.1e}, EMA {e_ema:.1e}, AUC {e_auc:.1e}, CLs {e_cls:.1e}; {:.2} s",
            secs(elapsed)
        ),
    );
}

// ---------------------------------------------------------------------------
// Ledoit-Wolf
// ---------------------------------------------------------------------------

/// Intensity minimizing `l^2 a^2 + (1 - l)^2 b^2` on a 1001-point grid, with
/// the target distance and the estimation-error term computed from explicit
/// outer products.
fn grid_shrinkage(x: &DMatrix<f64>) -> f64 {
    let (n, p) = x.shape();
    let mean = x.row_mean();
    let rows: Vec<DVector<f64>> = (0..n).map(|i| (x.row(i) - &mean).transpose()).collect();
    let s = rows.iter().fold(DMatrix::zeros(p, p), |acc, r| acc + r * r.transpose()) / n as f64;
    let mu = s.trace() / p as f64;
    let d2 = (&s - DMatrix::identity(p, p) * mu).norm_squared() / p as f64;
    let b_bar2 = rows.iter().map(|r| (r * r.transpose() - &s).norm_squared() / p as f64).sum::<f64>() / (n * n) as f64;
    let b2 = b_bar2.min(d2);
    let a2 = d2 - b2;
    (0..=1000)
        .map(|i| i as f64 / 1000.0)
        .min_by(|l1, l2| {
            let f = |l: f64| l * l * a2 + (1.0 - l) * (1.0 - l) * b2;
            f(*l1).total_cmp(&f(*l2))
        })
        .unwrap()
}

fn ledoit_wolf_criterion(suite: &mut Suite) {
    const NAME: &str = "Ledoit-Wolf";
    let mut min_eig = f64::INFINITY;
    for seed in 0..10 {
        let mut rng = rng_from_seed(200 + seed);
        let x = normal_matrix(&mut rng, 2, 90);
        let fit = match ledoit_wolf(&x) {
            Ok(f) => f,
            Err(e) => return suite.error(NAME, e),
        };
        let eig = SymmetricEigen::new(fit.covariance.clone()).eigenvalues.min();
        min_eig = min_eig.min(eig);
        if let Err(e) = GaussianModel::fit(&x) {
            return suite.error(NAME, e);
        }
    }
    let mut max_gap = 0.0f64;
    let mut interior = 0;
    for seed in 0..20 {
        let mut rng = rng_from_seed(300 + seed);
        let p = rng.random_range(2..=6);
        let n = rng.random_range(3..=40);
        let scales: Vec<f64> = (0..p).map(|_| rng.random_range(0.3..3.0)).collect();
        let x = DMatrix::from_fn(n, p, |_, j| scales[j] * normal(&mut rng));
        let fit = ledoit_wolf(&x).unwrap();
        if fit.shrinkage > 0.0 && fit.shrinkage < 1.0 {
            interior += 1;
        }
        max_gap = max_gap.max((fit.shrinkage - grid_shrinkage(&x)).abs());
    }
    suite.record(
        NAME,
        min_eig > 0.0 && max_gap <= 1e-3,
        format!("min eigenvalue at N=2, D=90: {min_eig:.3e}; max |lambda - grid| over 20 instances ({interior} interior): {max_gap:.1e}"),
    );
}

// ---------------------------------------------------------------------------
// Synthetic corpus evaluation
// ---------------------------------------------------------------------------

struct Evaluation {
    report: EvalReport,
    folds: Vec<FoldResult>,
    elapsed: Duration,
}

fn evaluate(features: &FeatureSet, cfg: &RunConfig) -> propfault::Result<Evaluation> {
    let t0 = Instant::now();
    let folds = run_lofo(features, &cfg.eval)?;
    let config = serde_json::to_value(cfg)?;
    let report = build_report(&folds, features, config, &cfg.report)?;
    Ok(Evaluation { report, folds, elapsed: t0.elapsed() })
}

fn auc_of(report: &EvalReport, m: Method) -> f64 {
    report.auc(m).unwrap_or(f64::NAN)
}

fn ablation_ordering(suite: &mut Suite, e: &Evaluation) {
    let r = &e.report;
    let (ema, lrt, pooled, cusum) =
        (auc_of(r, Method::LrtEma), auc_of(r, Method::Lrt), auc_of(r, Method::LrtPooled), auc_of(r, Method::MahalanobisCusum));
    let pass = ema >= lrt && lrt >= pooled && ema >= 0.85 && ema > cusum && e.elapsed.as_secs() < 300;
    suite.record(
        "ablation ordering",
        pass,
        format!(
            "AUC lrt_ema {ema:.3} >= lrt {lrt:.3} >= lrt_pooled {pooled:.3}; lrt_ema vs mahalanobis_cusum {cusum:.3}; sprt {:.3}, autoencoder {:.3}; {:.1} s",
            auc_of(r, Method::Sprt),
            auc_of(r, Method::Autoencoder),
            secs(e.elapsed)
        ),
    );
}

fn feature_physics(suite: &mut Suite, e: &Evaluation) {
    let top = e.report.feature_ranking.first();
    let top_name = top.map_or("<none>".to_string(), |f| format!("{} (d = {:.2})", f.feature, f.cohens_d));
    let band = top.is_some_and(|f| f.feature.contains("logpow_80_150") || f.feature.contains("fracpow_80_150"));
    let (full, time) = (auc_of(&e.report, Method::LrtEma), auc_of(&e.report, Method::LrtTimeOnly));
    suite.record(
        "feature physics",
        band && time <= full - 0.05,
        format!("top feature {top_name}; time-domain-only AUC {time:.3} vs full {full:.3}"),
    );
}

fn reproducibility(suite: &mut Suite, first: &Evaluation, features: &FeatureSet, cfg: &RunConfig) {
    const NAME: &str = "reproducibility";
    let second = match evaluate(features, cfg) {
        Ok(e) => e,
        Err(e) => return suite.error(NAME, e),
    };
    let (a, b) = (first.report.to_json().unwrap(), second.report.to_json().unwrap());
    let dirs = tempfile::tempdir().unwrap();
    let (da, db) = (dirs.path().join("a"), dirs.path().join("b"));
    emit_report(&first.report, &first.folds, &da).unwrap();
    emit_report(&second.report, &second.folds, &db).unwrap();
    let mut names: Vec<PathBuf> = std::fs::read_dir(&da).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let identical_files = names.iter().all(|p| {
        let other = db.join(p.file_name().unwrap());
        std::fs::read(p).ok() == std::fs::read(other).ok()
    });
    suite.record(
        NAME,
        a == b && identical_files,
        format!("report.json {} bytes, {} exported files byte-identical: {}", a.len(), names.len(), identical_files && a == b),
    );
}

fn report_schema(report: &EvalReport) -> String {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let instance = serde_json::to_value(report).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    if errors.is_empty() { "valid".into() } else { format!("INVALID: {}", errors.join("; ")) }
}

// ---------------------------------------------------------------------------
// CLs
// ---------------------------------------------------------------------------

fn cls_conservatism(suite: &mut Suite, features: &FeatureSet) {
    const NAME: &str = "CLs conservatism";
    let t0 = Instant::now();
    let alpha_det = 0.05;
    let bank = match HypothesisBank::fit(features, features.motors()) {
        Ok(b) => b,
        Err(e) => return suite.error(NAME, e),
    };
    let ensemble = build_toy_ensemble(&bank, &uniform_weights(bank.motors()), 10_000, 17).unwrap();

    let n_fresh = 4000;
    let mut rng = rng_from_seed(18);
    let (mut detected, mut violations, mut evaluated) = (0usize, 0usize, 0usize);
    for _ in 0..n_fresh {
        let (q, _) = composite_q(&bank, &bank.h0.draw(&mut rng)).unwrap();
        let r = cls_detect(&ensemble, q, alpha_det).unwrap();
        detected += usize::from(r.detected);
        violations += usize::from(r.cls_det < r.p_b);
        evaluated += 1;
    }
    let mut by_flight: std::collections::BTreeMap<&str, Vec<f64>> = std::collections::BTreeMap::new();
    for row in &features.rows {
        let (q, _) = composite_q(&bank, &bank.standardize(&row.values).unwrap()).unwrap();
        by_flight.entry(row.flight_id.as_str()).or_default().push(q);
    }
    for qs in by_flight.values() {
        for q in qs.iter().chain(&ema_smooth(qs, 0.3).unwrap()) {
            let r = cls_detect(&ensemble, *q, alpha_det).unwrap();
            violations += usize::from(r.cls_det < r.p_b);
            evaluated += 1;
        }
    }
    let rate = detected as f64 / n_fresh as f64;
    let bound = alpha_det + 3.0 * (alpha_det * (1.0 - alpha_det) / n_fresh as f64).sqrt();

    // H1 barely distinguishable from H0.
    let d = 10;
    let iso = |shift: f64, k: usize| {
        let mut m = DVector::zeros(d);
        m[k % d] = shift;
        GaussianModel::from_parts(m, DMatrix::identity(d, d), 0.0).unwrap()
    };
    let degenerate = HypothesisBank {
        h0: iso(0.0, 0),
        h1: (0..6).map(|k| iso(0.05, k)).collect(),
        standardizer: Standardizer::identity(d),
        pooled: false,
    };
    let weak = build_toy_ensemble(&degenerate, &uniform_weights(6), 10_000, 19).unwrap();
    let mut rng = rng_from_seed(20);
    let mut tail_cls = Vec::new();
    let mut tail_pb = Vec::new();
    for _ in 0..20_000 {
        let (q, _) = composite_q(&degenerate, &degenerate.h0.draw(&mut rng)).unwrap();
        let r = cls_detect(&weak, q, alpha_det).unwrap();
        violations += usize::from(r.cls_det < r.p_b);
        evaluated += 1;
        if r.p_b < alpha_det {
            tail_cls.push(r.cls_det);
            tail_pb.push(r.p_b);
        }
    }
    tail_cls.sort_by(f64::total_cmp);
    tail_pb.sort_by(f64::total_cmp);
    let median = |v: &[f64]| if v.is_empty() { f64::NAN } else { v[v.len() / 2] };
    let (med_cls, med_pb) = (median(&tail_cls), median(&tail_pb));
    suite.record(
        NAME,
        rate <= bound && violations == 0 && med_cls > 0.5,
        format!(
            "fresh H0 detection rate {rate:.4} <= {bound:.4} (n = {n_fresh}); cls_det >= p_b on {}/{evaluated} windows; near-degenerate bank: median cls_det {med_cls:.3} on {} tail windows (median p_b {med_pb:.4}); {:.1} s",
            evaluated - violations,
            tail_cls.len(),
            secs(t0.elapsed())
        ),
    );
}

// ---------------------------------------------------------------------------
// SBI
// ---------------------------------------------------------------------------

/// theta ~ N(0, I2), x = A theta + N(0, s^2 I3).
fn linear_gaussian(suite_detail: &mut Vec<String>) -> bool {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.4, 1.2, 0.8, -0.9]);
    let sigma = 0.5;
    let mut rng = rng_from_seed(31);
    let draw = |rng: &mut Rng| {
        let theta = DVector::from_fn(2, |_, _| normal(rng));
        let x = &a * &theta + DVector::from_fn(3, |_, _| sigma * normal(rng));
        (theta, x)
    };
    let (thetas, xs): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
        (0..20_000).map(|_| draw(&mut rng)).map(|(t, x)| (t.as_slice().to_vec(), x.as_slice().to_vec())).unzip();
    let cfg = MdnConfig { hidden: vec![64, 64], components: 3, epochs: 40, batch_size: 128, learning_rate: 1e-3, seed: 32 };
    let mdn = MixtureDensityNetwork::train(&thetas, &xs, &cfg).unwrap();

    let precision = DMatrix::identity(2, 2) + a.transpose() * &a / (sigma * sigma);
    let post_cov = precision.try_inverse().unwrap();
    let mut sq = 0.0;
    let n_test = 200;
    for _ in 0..n_test {
        let (_, x) = draw(&mut rng);
        let want = &post_cov * a.transpose() * &x / (sigma * sigma);
        let samples = mdn.sample(x.as_slice(), 4000, None, &mut rng).unwrap();
        for j in 0..2 {
            let got = samples.iter().map(|s| s[j]).sum::<f64>() / samples.len() as f64;
            sq += (got - want[j]).powi(2);
        }
    }
    let rms = (sq / (2 * n_test) as f64).sqrt();
    suite_detail.push(format!("linear-Gaussian posterior mean RMS {rms:.4}"));
    rms < 0.05
}

fn nll_gradient(detail: &mut Vec<String>) -> bool {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mut rng = rng_from_seed(40 + seed);
        let (b, k, t) = (5, 3, 4);
        let out = normal_matrix(&mut rng, b, k + 2 * k * t) * 0.5;
        let theta = normal_matrix(&mut rng, b, t);
        let (_, grad) = mixture_nll_grad(&out, &theta, k);
        let h = 1e-5;
        let scale = grad.amax();
        for idx in 0..out.len() {
            let (mut plus, mut minus) = (out.clone(), out.clone());
            plus[idx] += h;
            minus[idx] -= h;
            let fd = (mixture_nll_grad(&plus, &theta, k).0 - mixture_nll_grad(&minus, &theta, k).0) / (2.0 * h);
            let rel = (grad[idx] - fd).abs() / grad[idx].abs().max(fd.abs()).max(1e-2 * scale);
            worst = worst.max(rel);
        }
    }
    detail.push(format!("max relative gradient error {worst:.1e}"));
    worst <= 1e-4
}

const CALIB_NOISE: f64 = 0.3;

/// Three classes (two motors plus healthy); severity enters the first three
/// features linearly, gated by class.
fn calibrated_pairs(n: usize, rng: &mut Rng) -> Vec<TrainingPair> {
    let sigma = CALIB_NOISE;
    (0..n)
        .map(|_| {
            let sev = rng.random_range(-0.01..0.13);
            let class = rng.random_range(0..3);
            let mot: Vec<f64> =
                (0..3).map(|c| f64::from(u8::from(c == class)) + rng.random_range(-0.1..0.1)).collect();
            let gate = |c: usize| f64::from(u8::from(class == c));
            let x = vec![
                20.0 * sev + sigma * normal(rng),
                20.0 * sev * gate(0) + sigma * normal(rng),
                20.0 * sev * gate(1) + sigma * normal(rng),
                sigma * normal(rng),
            ];
            TrainingPair { theta: FaultParams { sev, mot }, x }
        })
        .collect()
}

/// Coverage of equal-tailed intervals from the exact severity posterior,
/// integrated on a grid over the uniform prior.
fn exact_coverage(pairs: &[TrainingPair], level: f64) -> f64 {
    let grid: Vec<f64> = (0..=2800).map(|i| -0.01 + 0.14 * f64::from(i) / 2800.0).collect();
    let tail = (1.0 - level) / 2.0;
    let hits = pairs
        .iter()
        .filter(|p| {
            let w: Vec<f64> = grid
                .iter()
                .map(|&sev| {
                    (0..3)
                        .map(|c| {
                            let mean = [20.0 * sev, if c == 0 { 20.0 * sev } else { 0.0 }, if c == 1 { 20.0 * sev } else { 0.0 }];
                            let r2: f64 = mean.iter().zip(&p.x).map(|(m, x)| (x - m).powi(2)).sum();
                            (-r2 / (2.0 * CALIB_NOISE * CALIB_NOISE)).exp()
                        })
                        .sum()
                })
                .collect();
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            let (mut lo, mut hi) = (None, None);
            for (g, wi) in grid.iter().zip(&w) {
                acc += wi / total;
                if lo.is_none() && acc >= tail {
                    lo = Some(*g);
                }
                if hi.is_none() && acc >= 1.0 - tail {
                    hi = Some(*g);
                }
            }
            (lo.unwrap()..=hi.unwrap()).contains(&p.theta.sev)
        })
        .count();
    hits as f64 / pairs.len() as f64
}

fn calibrated_coverage(detail: &mut Vec<String>) -> bool {
    let mut rng = rng_from_seed(51);
    let train = calibrated_pairs(20_000, &mut rng);
    let test = calibrated_pairs(2000, &mut rng);
    let cfg = MdnConfig { hidden: vec![64, 64], components: 2, epochs: 150, batch_size: 128, learning_rate: 1e-3, seed: 52 };
    let model = train_posterior(&train, &PairConfig::exact(), &cfg).unwrap();
    let levels = [0.5, 0.9];
    let report = calibration_report(&model, &test, &levels, 1000, 53).unwrap();
    let mut ok = true;
    for row in &report.coverage {
        let tol = 3.0 * (row.level * (1.0 - row.level) / row.n as f64).sqrt();
        ok &= (row.coverage - row.level).abs() <= tol;
        detail.push(format!(
            "coverage {:.3} at {:.0}% (+/- {tol:.3}; exact posterior {:.3})",
            row.coverage,
            100.0 * row.level,
            exact_coverage(&test, row.level)
        ));
    }
    ok
}

fn sbi_correctness(suite: &mut Suite) {
    let t0 = Instant::now();
    let mut detail = Vec::new();
    let grad = nll_gradient(&mut detail);
    let linear = linear_gaussian(&mut detail);
    let coverage = calibrated_coverage(&mut detail);
    let elapsed = t0.elapsed();
    detail.push(format!("{:.1} s", secs(elapsed)));
    suite.record("SBI correctness", grad && linear && coverage && elapsed.as_secs() < 600, detail.join("; "));
}

// ---------------------------------------------------------------------------
// Real dataset
// ---------------------------------------------------------------------------

fn dataset_criteria(suite: &mut Suite) {
    let names = ["dataset LOFO AUC", "dataset FAR and flight decisions", "dataset SBI"];
    let Some(path) = std::env::var_os(DATASET_ENV) else {
        for n in names {
            println!("SKIP {n}: set {DATASET_ENV} to a flight manifest to run");
        }
        return;
    };
    let t0 = Instant::now();
    let loaded = Manifest::load(std::path::Path::new(&path))
        .and_then(|m| m.load_flights(&IngestConfig::default()))
        .and_then(|flights| FeatureSet::extract(&flights, 500, 250));
    let features = match loaded {
        Ok(f) => f,
        Err(e) => {
            for n in names {
                suite.record(n, false, format!("error: {e}"));
            }
            return;
        }
    };
    let cfg = RunConfig { eval: LofoConfig { seed: 1, ..LofoConfig::default() }, ..RunConfig::default() };
    let e = match evaluate(&features, &cfg) {
        Ok(e) => e,
        Err(err) => return suite.error(names[0], err),
    };
    let r = &e.report;
    let (ema, lrt, pooled) = (auc_of(r, Method::LrtEma), auc_of(r, Method::Lrt), auc_of(r, Method::LrtPooled));
    let elapsed = t0.elapsed();
    suite.record(
        names[0],
        (ema - 0.862).abs() <= 0.02 && ema > lrt && lrt > pooled && elapsed.as_secs() < 1800,
        format!("lrt_ema {ema:.3} (target 0.862 +/- 0.02), lrt {lrt:.3}, lrt_pooled {pooled:.3}; {:.0} s", secs(elapsed)),
    );

    let metrics = r.methods.get(Method::LrtEma.name()).and_then(Option::as_ref);
    let far80 = metrics
        .and_then(|m| m.far_at_tpr.as_ref())
        .and_then(|rows| rows.iter().find(|row| (row.tpr_target - 0.8).abs() < 1e-9))
        .map_or(f64::NAN, |row| row.far);
    let flights = metrics.and_then(|m| m.flights);
    let (tp, fault, tn, healthy) =
        flights.map_or((0, 0, 0, 0), |f| (f.true_positive, f.true_positive + f.false_negative, f.true_negative, f.true_negative + f.false_positive));
    suite.record(
        names[1],
        (far80 - 0.204).abs() <= 0.05 && tp == fault && fault == 12 && tn >= 4 && healthy == 6,
        format!("FAR at 80% TPR {:.1}% (target 20.4 +/- 5); fault flights {tp}/{fault}; healthy cleared {tn}/{healthy}", 100.0 * far80),
    );

    let t1 = Instant::now();
    let pairs = build_training_pairs(&features, &cfg.sbi.pairs)
        .and_then(|p| train_posterior(&p, &cfg.sbi.pairs, &cfg.sbi.mdn))
        .and_then(|model| {
            let held = build_training_pairs(&features, &PairConfig::exact())?;
            calibration_report(&model, &held, &[0.9], 1000, 61)
        });
    match pairs {
        Ok(c) => {
            let mae = c.sev_mae_fault.unwrap_or(f64::NAN);
            let cov = c.coverage[0].coverage;
            suite.record(
                names[2],
                mae <= 0.02 && cov >= 0.85,
                format!("fault-window severity MAE {mae:.4}; 90% coverage {cov:.3}; {:.0} s", secs(t1.elapsed())),
            );
        }
        Err(e) => suite.error(names[2], e),
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` probes every target.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut suite = Suite::default();
    numerical_oracles(&mut suite);
    ledoit_wolf_criterion(&mut suite);

    let mut cfg = RunConfig::default();
    cfg.set_seed(1);
    let features = generate_corpus(&cfg.synth)
        .and_then(|flights| FeatureSet::extract(&flights, cfg.features.window_length, cfg.features.stride));
    match features.and_then(|f| evaluate(&f, &cfg).map(|e| (f, e))) {
        Ok((features, first)) => {
            println!("  synthetic corpus: {} flights, {} windows; report schema {}", first.report.corpus.n_flights, features.len(), report_schema(&first.report));
            ablation_ordering(&mut suite, &first);
            feature_physics(&mut suite, &first);
            reproducibility(&mut suite, &first, &features, &cfg);
            cls_conservatism(&mut suite, &features);
        }
        Err(e) => {
            for n in ["ablation ordering", "feature physics", "reproducibility", "CLs conservatism"] {
                suite.record(n, false, format!("error: {e}"));
            }
        }
    }
    sbi_correctness(&mut suite);
    dataset_criteria(&mut suite);

    if suite.failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} failed: {}", suite.failed.len(), suite.failed.join(", "));
        ExitCode::FAILURE
    }
}

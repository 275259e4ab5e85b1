//! Simulation-based inference over fault severity and motor identity.
//!
//! A conditional mixture density network is trained on `(theta, x)` pairs
//! built from labelled windows, where `theta = (sev, mot)` and `mot` is a
//! soft one-hot over the motors followed by a healthy class.

mod mdn;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::quantile_sorted;
use crate::features::FeatureSet;
use crate::ingest::FaultLabel;
use crate::rng::{derive_seed, rng_from_seed, Rng};

pub use mdn::{log_sum_exp, mixture_nll_grad, MdnConfig, Mixture, MixtureDensityNetwork};

/// Prior support of the severity during training.
pub const SEV_BOUNDS: (f64, f64) = (-0.01, 0.13);
/// Prior support of every motor-indicator component.
pub const MOT_BOUNDS: (f64, f64) = (-0.1, 1.1);
/// Severity at or above which a window counts as faulty.
pub const FAULT_SEVERITY: f64 = 0.025;
pub const DEFAULT_POSTERIOR_SAMPLES: usize = 5000;
pub const MIN_TRAINING_PAIRS: usize = 100;

/// `theta = (sev, mot)`; `mot` has one entry per motor plus a trailing
/// healthy class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultParams {
    pub sev: f64,
    pub mot: Vec<f64>,
}

impl FaultParams {
    /// Exact parameters of a label: its severity and a hard one-hot.
    pub fn from_label(label: &FaultLabel) -> Result<Self> {
        label.validate()?;
        let mut mot = vec![0.0; label.motors + 1];
        mot[label.motor.map_or(label.motors, |m| m - 1)] = 1.0;
        Ok(Self { sev: label.severity, mot })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.mot.len());
        v.push(self.sev);
        v.extend(&self.mot);
        v
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        match theta.split_first() {
            Some((sev, mot)) => Ok(Self { sev: *sev, mot: mot.to_vec() }),
            None => Err(Error::Dimension { expected: 1, got: 0 }),
        }
    }

    /// 1-based class with the largest indicator; `motors + 1` is healthy.
    pub fn class(&self) -> Option<usize> {
        argmax(&self.mot).map(|i| i + 1)
    }
}

fn argmax(v: &[f64]) -> Option<usize> {
    v.iter().enumerate().fold(None, |best: Option<(usize, f64)>, (i, &x)| match best {
        Some((_, b)) if b >= x => best,
        _ => Some((i, x)),
    })
    .map(|(i, _)| i)
}

/// Box bounds for a `theta` of `1 + motors + 1` entries.
pub fn prior_bounds(motors: usize) -> Vec<(f64, f64)> {
    let mut b = vec![SEV_BOUNDS];
    b.extend(std::iter::repeat_n(MOT_BOUNDS, motors + 1));
    b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    /// Standard deviation of the Gaussian noise added to severities.
    pub dequant_sigma: f64,
    /// Copies per window, the first unjittered.
    pub augment_factor: usize,
    /// Feature jitter as a fraction of each feature's standard deviation.
    pub jitter_frac: f64,
    /// Half-width of the uniform jitter on each motor indicator.
    pub motor_jitter: f64,
    pub seed: u64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self { dequant_sigma: 0.005, augment_factor: 3, jitter_frac: 0.05, motor_jitter: 0.1, seed: 0 }
    }
}

impl PairConfig {
    /// Exact labels, one pair per window; used for evaluation.
    pub fn exact() -> Self {
        Self { dequant_sigma: 0.0, augment_factor: 1, jitter_frac: 0.0, motor_jitter: 0.0, seed: 0 }
    }

    fn validate(&self) -> Result<()> {
        if self.augment_factor == 0 {
            return Err(Error::Config("augment_factor must be at least 1".into()));
        }
        for (name, v) in [("dequant_sigma", self.dequant_sigma), ("jitter_frac", self.jitter_frac), ("motor_jitter", self.motor_jitter)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub theta: FaultParams,
    pub x: Vec<f64>,
}

/// Dequantized, jittered and augmented `(theta, x)` pairs, `augment_factor`
/// per window in row order.
pub fn build_training_pairs(features: &FeatureSet, cfg: &PairConfig) -> Result<Vec<TrainingPair>> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::InsufficientData("no labelled windows".into()));
    }
    let d = features.schema.len();
    let n = features.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| features.rows.iter().map(|r| r.values[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| (features.rows.iter().map(|r| (r.values[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();

    let mut rng = rng_from_seed(cfg.seed);
    let mut out = Vec::with_capacity(features.len() * cfg.augment_factor);
    for row in &features.rows {
        let exact = FaultParams::from_label(&row.label)?;
        for copy in 0..cfg.augment_factor {
            let sev = (exact.sev + cfg.dequant_sigma * rng.sample::<f64, _>(StandardNormal)).clamp(SEV_BOUNDS.0, SEV_BOUNDS.1);
            let mot = exact
                .mot
                .iter()
                .map(|m| {
                    let u = if cfg.motor_jitter > 0.0 { rng.random_range(-cfg.motor_jitter..=cfg.motor_jitter) } else { 0.0 };
                    (m + u).clamp(MOT_BOUNDS.0, MOT_BOUNDS.1)
                })
                .collect();
            let x = if copy == 0 {
                row.values.clone()
            } else {
                row.values
                    .iter()
                    .zip(&std)
                    .map(|(v, s)| v + cfg.jitter_frac * s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            out.push(TrainingPair { theta: FaultParams { sev, mot }, x });
        }
    }
    Ok(out)
}

/// Anything that can draw `theta` samples given `x`.
pub trait ConditionalPosterior {
    fn sample(&self, x: &[f64], n: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>>;
}

/// Trained estimator of `p(theta | x)` plus the settings it was built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorModel {
    pub mdn: MixtureDensityNetwork,
    pub motors: usize,
    pub pairs: PairConfig,
    pub training: MdnConfig,
    pub n_pairs: usize,
}

impl PosteriorModel {
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        prior_bounds(self.motors)
    }

    pub fn final_loss(&self) -> f64 {
        self.mdn.final_loss()
    }
}

impl ConditionalPosterior for PosteriorModel {
    /// Draws clipped to the prior box.
    fn sample(&self, x: &[f64], n: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
        self.mdn.sample(x, n, Some(&self.bounds()), rng)
    }
}

pub fn train_posterior(pairs: &[TrainingPair], pair_config: &PairConfig, cfg: &MdnConfig) -> Result<PosteriorModel> {
    if pairs.len() < MIN_TRAINING_PAIRS {
        return Err(Error::InsufficientData(format!(
            "posterior training needs at least {MIN_TRAINING_PAIRS} pairs, got {}",
            pairs.len()
        )));
    }
    let motors = pairs[0].theta.mot.len().checked_sub(1).filter(|m| *m > 0).ok_or_else(|| {
        Error::Config("motor indicator needs at least one motor plus the healthy class".into())
    })?;
    if let Some(p) = pairs.iter().find(|p| p.theta.mot.len() != motors + 1) {
        return Err(Error::Dimension { expected: motors + 1, got: p.theta.mot.len() });
    }
    let thetas: Vec<Vec<f64>> = pairs.iter().map(|p| p.theta.to_vec()).collect();
    let xs: Vec<Vec<f64>> = pairs.iter().map(|p| p.x.clone()).collect();
    let mdn = MixtureDensityNetwork::train(&thetas, &xs, cfg)?;
    Ok(PosteriorModel { mdn, motors, pairs: pair_config.clone(), training: cfg.clone(), n_pairs: pairs.len() })
}

/// Posterior draws for one window with the derived summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityPosterior {
    pub samples: Vec<Vec<f64>>,
    pub level: f64,
    pub sev_mean: f64,
    /// Equal-tailed credible interval at `level`.
    pub interval: (f64, f64),
    /// Fraction of draws with severity at least [`FAULT_SEVERITY`].
    pub p_fault: f64,
    /// Mean of each motor indicator.
    pub mot_mean: Vec<f64>,
    /// 1-based argmax of `mot_mean`; one past the motor count is healthy.
    pub motor_map: usize,
}

impl SeverityPosterior {
    pub fn from_samples(samples: Vec<Vec<f64>>, level: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData("no posterior samples".into()));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Config(format!("credible level must lie in (0, 1), got {level}")));
        }
        let n = samples.len() as f64;
        let mut sev: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        let sev_mean = sev.iter().sum::<f64>() / n;
        let p_fault = sev.iter().filter(|s| **s >= FAULT_SEVERITY).count() as f64 / n;
        sev.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        let interval = (quantile_sorted(&sev, tail), quantile_sorted(&sev, 1.0 - tail));
        let dim = samples[0].len();
        let mot_mean: Vec<f64> = (1..dim).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
        let motor_map = argmax(&mot_mean).map_or(0, |i| i + 1);
        Ok(Self { samples, level, sev_mean, interval, p_fault, mot_mean, motor_map })
    }

    pub fn summary(&self, seed: u64) -> PosteriorSummary {
        PosteriorSummary {
            sev_mean: self.sev_mean,
            interval: [self.interval.0, self.interval.1],
            level: self.level,
            p_fault: self.p_fault,
            motor_map: self.motor_map,
            n_samples: self.samples.len(),
            seed,
        }
    }
}

/// Per-window posterior report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub sev_mean: f64,
    pub interval: [f64; 2],
    pub level: f64,
    pub p_fault: f64,
    pub motor_map: usize,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn posterior_query(model: &dyn ConditionalPosterior, x: &[f64], n_samples: usize, level: f64, seed: u64) -> Result<SeverityPosterior> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    SeverityPosterior::from_samples(model.sample(x, n_samples, &mut rng)?, level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub level: f64,
    pub coverage: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub coverage: Vec<CoverageRow>,
    /// Mean absolute error of the posterior mean severity.
    pub sev_mae: f64,
    /// MAE restricted to healthy and to fault windows, when present.
    pub sev_mae_healthy: Option<f64>,
    pub sev_mae_fault: Option<f64>,
    /// Per-window accuracy of `motor_map`, when `theta` has motor indicators.
    pub motor_accuracy: Option<f64>,
}

/// Coverage of equal-tailed severity intervals and point-estimate errors
/// over held-out pairs. Window `i` uses seed `derive_seed(seed, i)`.
pub fn calibration_report(
    model: &dyn ConditionalPosterior,
    held_out: &[TrainingPair],
    levels: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    if held_out.is_empty() {
        return Err(Error::InsufficientData("calibration needs held-out pairs".into()));
    }
    if levels.is_empty() {
        return Err(Error::Config("at least one credible level is required".into()));
    }
    let mut hits = vec![0usize; levels.len()];
    let (mut abs, mut abs_h, mut abs_f) = (Vec::new(), Vec::new(), Vec::new());
    let (mut correct, mut with_motor) = (0usize, 0usize);
    for (i, pair) in held_out.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let samples = model.sample(&pair.x, n_samples, &mut rng)?;
        let post = SeverityPosterior::from_samples(samples, levels[0])?;
        let mut sev: Vec<f64> = post.samples.iter().map(|s| s[0]).collect();
        sev.sort_by(f64::total_cmp);
        for (h, &level) in hits.iter_mut().zip(levels) {
            let tail = (1.0 - level) / 2.0;
            let (lo, hi) = (quantile_sorted(&sev, tail), quantile_sorted(&sev, 1.0 - tail));
            if (lo..=hi).contains(&pair.theta.sev) {
                *h += 1;
            }
        }
        let err = (post.sev_mean - pair.theta.sev).abs();
        abs.push(err);
        if let Some(class) = pair.theta.class() {
            with_motor += 1;
            if post.motor_map == class {
                correct += 1;
            }
            if class == pair.theta.mot.len() { abs_h.push(err) } else { abs_f.push(err) }
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let n = held_out.len();
    Ok(CalibrationReport {
        coverage: levels.iter().zip(&hits).map(|(&level, &h)| CoverageRow { level, coverage: h as f64 / n as f64, n }).collect(),
        sev_mae: mean(&abs).unwrap_or(f64::NAN),
        sev_mae_healthy: mean(&abs_h),
        sev_mae_fault: mean(&abs_f),
        motor_accuracy: (with_motor > 0).then(|| correct as f64 / with_motor as f64),
    })
}

/// Splits whole flights into (train, evaluation), holding out about
/// `fraction` of the flights of every label class (healthy, or one
/// severity), at least one per class that has two or more flights.
pub fn split_by_flight(features: &FeatureSet, fraction: f64, seed: u64) -> Result<(FeatureSet, FeatureSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("evaluation fraction must lie in (0, 1), got {fraction}")));
    }
    let mut classes: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for id in features.flight_ids() {
        let row = features.rows.iter().find(|r| r.flight_id == id).expect("flight has rows");
        classes.entry(row.label.severity.to_bits()).or_default().push(id);
    }
    let mut rng = rng_from_seed(seed);
    let mut held = Vec::new();
    for ids in classes.values_mut() {
        if ids.len() < 2 {
            continue;
        }
        ids.shuffle(&mut rng);
        let k = ((ids.len() as f64 * fraction).round() as usize).clamp(1, ids.len() - 1);
        held.extend(ids.drain(..k));
    }
    if held.is_empty() {
        return Err(Error::InsufficientData("no label class has two flights to split".into()));
    }
    Ok((features.filter(|r| !held.contains(&r.flight_id)), features.filter(|r| held.contains(&r.flight_id))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::lofo::tests::toy_features;
    use std::f64::consts::PI;

    /// `theta ~ N(0, 1)`, `x = theta + N(0, s^2)`: the posterior is
    /// `N(x / (1 + s^2), s^2 / (1 + s^2))`.
    struct Conjugate {
        s: f64,
    }

    impl ConditionalPosterior for Conjugate {
        fn sample(&self, x: &[f64], n: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
            let v = self.s * self.s;
            let (m, sd) = (x[0] / (1.0 + v), (v / (1.0 + v)).sqrt());
            Ok((0..n).map(|_| vec![m + sd * rng.sample::<f64, _>(StandardNormal)]).collect())
        }
    }

    fn ks(a: &[f64], b: &[f64]) -> f64 {
        let (mut a, mut b) = (a.to_vec(), b.to_vec());
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] { i += 1 } else { j += 1 }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn pair_multiplicity_and_healthy_params() {
        let fs = toy_features(3, 1, 50, 1.0, 2);
        let pairs = build_training_pairs(&fs, &PairConfig::default()).unwrap();
        assert_eq!(pairs.len(), 3 * fs.len());
        for (p, row) in pairs.chunks(3).zip(&fs.rows) {
            assert_eq!(p[0].x, row.values);
            assert_ne!(p[1].x, row.values);
            if !row.label.is_fault() {
                for q in p {
                    assert!(q.theta.sev.abs() <= 0.01 + 3.0 * 0.005);
                    assert_eq!(q.theta.class(), Some(4));
                }
            }
            for q in p {
                assert!((SEV_BOUNDS.0..=SEV_BOUNDS.1).contains(&q.theta.sev));
                assert!(q.theta.mot.iter().all(|m| (MOT_BOUNDS.0..=MOT_BOUNDS.1).contains(m)));
            }
        }
    }

    #[test]
    fn dequantized_severity_mean() {
        let fs = toy_features(1, 1, 1000, 1.0, 3);
        let fault = fs.filter(|r| r.label.is_fault());
        let cfg = PairConfig { augment_factor: 1, ..Default::default() };
        let pairs = build_training_pairs(&fault, &cfg).unwrap();
        assert_eq!(pairs.len(), 1000);
        let mean = pairs.iter().map(|p| p.theta.sev).sum::<f64>() / 1000.0;
        assert!((mean - 0.10).abs() < 0.002, "{mean}");
    }

    #[test]
    fn invalid_label_is_a_label_error() {
        let mut fs = toy_features(2, 1, 10, 1.0, 4);
        let i = fs.rows.iter().position(|r| r.label.is_fault()).unwrap();
        fs.rows[i].label.severity = 0.0;
        assert!(matches!(build_training_pairs(&fs, &PairConfig::default()), Err(Error::Label(_))));
    }

    #[test]
    fn too_few_pairs() {
        let fs = toy_features(2, 1, 10, 1.0, 4);
        let pairs = build_training_pairs(&fs, &PairConfig::exact()).unwrap();
        assert!(pairs.len() < MIN_TRAINING_PAIRS);
        assert!(matches!(train_posterior(&pairs, &PairConfig::exact(), &MdnConfig::default()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn linear_gaussian_conditional_mean() {
        let mut rng = rng_from_seed(11);
        let w = [0.6, -0.4];
        let sigma = 0.2;
        let draw = |rng: &mut Rng| {
            let x: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            let t = w[0] * x[0] + w[1] * x[1] + sigma * rng.sample::<f64, _>(StandardNormal);
            (vec![t], x)
        };
        let (thetas, xs): (Vec<_>, Vec<_>) = (0..4000).map(|_| draw(&mut rng)).unzip();
        let cfg = MdnConfig { hidden: vec![32, 32], components: 3, epochs: 60, batch_size: 128, learning_rate: 3e-3, seed: 1 };
        let mdn = MixtureDensityNetwork::train(&thetas, &xs, &cfg).unwrap();
        let mut sq = 0.0;
        let m = 200;
        for _ in 0..m {
            let (_, x) = draw(&mut rng);
            let mix = mdn.mixture(&x).unwrap();
            let st = &mdn.theta_standardizer;
            let mean_z: f64 = mix.weights.iter().zip(&mix.means).map(|(w, mu)| w * mu[0]).sum();
            let mean = mean_z * st.std[0] + st.mean[0];
            sq += (mean - (w[0] * x[0] + w[1] * x[1])).powi(2);
        }
        let rms = (sq / m as f64).sqrt();
        assert!(rms < 0.05, "rms {rms}");
    }

    #[test]
    fn independent_theta_gives_same_posterior_everywhere() {
        let mut rng = rng_from_seed(12);
        let xs: Vec<Vec<f64>> = (0..6000).map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        let thetas: Vec<Vec<f64>> = (0..6000).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        let cfg = MdnConfig { hidden: vec![16], components: 4, epochs: 25, batch_size: 128, learning_rate: 3e-3, seed: 2 };
        let mdn = MixtureDensityNetwork::train(&thetas, &xs, &cfg).unwrap();
        let a: Vec<f64> = mdn.sample(&[-1.0, 0.5], 4000, None, &mut rng).unwrap().iter().map(|t| t[0]).collect();
        let b: Vec<f64> = mdn.sample(&[1.0, -0.5], 4000, None, &mut rng).unwrap().iter().map(|t| t[0]).collect();
        let d = ks(&a, &b);
        assert!(d < 0.1, "KS {d}");
    }

    #[test]
    fn exact_posterior_is_calibrated() {
        let model = Conjugate { s: 0.7 };
        let mut rng = rng_from_seed(13);
        let held: Vec<TrainingPair> = (0..1000)
            .map(|_| {
                let t: f64 = rng.sample(StandardNormal);
                let x = t + 0.7 * rng.sample::<f64, _>(StandardNormal);
                TrainingPair { theta: FaultParams { sev: t, mot: vec![] }, x: vec![x] }
            })
            .collect();
        let rep = calibration_report(&model, &held, &[0.5, 0.9], 400, 5).unwrap();
        for row in &rep.coverage {
            let sd = (row.level * (1.0 - row.level) / row.n as f64).sqrt();
            assert!((row.coverage - row.level).abs() <= 3.0 * sd, "{row:?}");
        }
        assert!(rep.motor_accuracy.is_none());
        // mean absolute deviation of N(0, v) is sqrt(2 v / pi)
        let v = 0.49 / 1.49;
        assert!((rep.sev_mae - (2.0 * v / PI).sqrt()).abs() < 0.03, "{}", rep.sev_mae);
    }

    struct PointMass(f64);

    impl ConditionalPosterior for PointMass {
        fn sample(&self, _: &[f64], n: usize, _: &mut Rng) -> Result<Vec<Vec<f64>>> {
            Ok(vec![vec![self.0]; n])
        }
    }

    #[test]
    fn wrong_point_mass_has_zero_coverage() {
        let held: Vec<TrainingPair> = (0..20).map(|i| TrainingPair { theta: FaultParams { sev: i as f64 * 0.01, mot: vec![] }, x: vec![0.0] }).collect();
        let rep = calibration_report(&PointMass(1.0), &held, &[0.5, 0.9], 10, 0).unwrap();
        assert!(rep.coverage.iter().all(|r| r.coverage == 0.0));
    }

    #[test]
    fn query_summaries() {
        let post = posterior_query(&PointMass(0.10), &[0.0], 100, 0.9, 1).unwrap();
        assert_eq!(post.p_fault, 1.0);
        assert!(post.interval.0 <= 0.10 && 0.10 <= post.interval.1);
        let model = Conjugate { s: 1.0 };
        // posterior N(0.025, 0.5) for x = 0.05 is symmetric about 0.025
        let post = posterior_query(&model, &[0.05], 20_000, 0.9, 2).unwrap();
        assert!((post.p_fault - 0.5).abs() < 0.02, "{}", post.p_fault);
        let s = post.summary(2);
        assert_eq!(s.n_samples, 20_000);
        assert!(s.interval[0] < s.sev_mean && s.sev_mean < s.interval[1]);
    }

    #[test]
    fn motor_map_uses_indicator_means() {
        let samples = vec![vec![0.1, 0.2, 0.9, 0.0], vec![0.1, 0.3, 0.7, 0.1]];
        let post = SeverityPosterior::from_samples(samples, 0.5).unwrap();
        assert_eq!(post.motor_map, 2);
        assert_eq!(post.mot_mean.len(), 3);
    }

    #[test]
    fn split_holds_out_whole_flights_per_class() {
        let fs = toy_features(2, 3, 5, 1.0, 6);
        let (train, eval) = split_by_flight(&fs, 0.34, 1).unwrap();
        let (a, b) = (train.flight_ids(), eval.flight_ids());
        assert!(a.iter().all(|id| !b.contains(id)));
        assert_eq!(train.len() + eval.len(), fs.len());
        assert!(eval.rows.iter().any(|r| r.label.is_fault()) && eval.rows.iter().any(|r| !r.label.is_fault()));
    }

    proptest::proptest! {
        #[test]
        fn p_fault_monotone_under_shift(raw in proptest::collection::vec(-0.05f64..0.15, 1..200), delta in 0.0f64..0.1) {
            let base: Vec<Vec<f64>> = raw.iter().map(|s| vec![*s]).collect();
            let shifted: Vec<Vec<f64>> = raw.iter().map(|s| vec![s + delta]).collect();
            let a = SeverityPosterior::from_samples(base, 0.9).unwrap();
            let b = SeverityPosterior::from_samples(shifted, 0.9).unwrap();
            proptest::prop_assert!(b.p_fault >= a.p_fault);
        }
    }
}

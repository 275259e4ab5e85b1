//! Leave-one-flight-out cross-validation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{mahalanobis_score, page_cusum, sprt_from_llr, AeConfig, Autoencoder, PageParams};
use crate::detector::{composite_q, decide_flight, ema_smooth, mixture_llr, DetectionTrace};
use crate::error::{Error, Result};
use crate::features::{FeatureSet, FeatureVector};
use crate::gaussian::{GaussianModel, HypothesisBank, Standardizer};
use crate::ingest::FaultLabel;
use crate::rng::derive_seed;

use super::metrics::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Per-motor composite LRT with EMA smoothing.
    LrtEma,
    /// Per-motor composite LRT, unsmoothed.
    Lrt,
    /// Single pooled fault model, unsmoothed.
    LrtPooled,
    /// Composite LRT with EMA on time-domain features only.
    LrtTimeOnly,
    MahalanobisCusum,
    Sprt,
    Autoencoder,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::LrtEma,
        Method::Lrt,
        Method::LrtPooled,
        Method::LrtTimeOnly,
        Method::MahalanobisCusum,
        Method::Sprt,
        Method::Autoencoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LrtEma => "lrt_ema",
            Method::Lrt => "lrt",
            Method::LrtPooled => "lrt_pooled",
            Method::LrtTimeOnly => "lrt_time_only",
            Method::MahalanobisCusum => "mahalanobis_cusum",
            Method::Sprt => "sprt",
            Method::Autoencoder => "autoencoder",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Method::MahalanobisCusum | Method::Sprt | Method::Autoencoder)
    }

    /// Expands a comma-separated selection. `lrt` selects the composite
    /// family, `ablation` the time-only variant, `baselines` the three
    /// comparison detectors and `all` everything.
    pub fn parse_list(spec: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let group: Vec<Method> = match token {
                "all" => Method::ALL.to_vec(),
                "lrt" => vec![Method::LrtEma, Method::Lrt, Method::LrtPooled],
                "ablation" => vec![Method::LrtTimeOnly],
                "baselines" => vec![Method::MahalanobisCusum, Method::Sprt, Method::Autoencoder],
                "cusum" | "mahalanobis" => vec![Method::MahalanobisCusum],
                "ae" => vec![Method::Autoencoder],
                other => vec![other.parse()?],
            };
            for m in group {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no evaluation methods selected".into()));
        }
        out.sort();
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LofoConfig {
    pub methods: Vec<Method>,
    pub alpha_ema: f64,
    /// Per-flight majority vote counts windows with score above this value
    /// (LRT family).
    pub decision_threshold: f64,
    pub sprt_alpha: f64,
    pub sprt_beta: f64,
    pub page_h_sigmas: f64,
    /// Healthy-score quantile used as the autoencoder window threshold.
    pub ae_threshold_quantile: f64,
    pub autoencoder: AeConfig,
    pub seed: u64,
}

impl Default for LofoConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            alpha_ema: crate::detector::DEFAULT_EMA_ALPHA,
            decision_threshold: 0.0,
            sprt_alpha: crate::baselines::DEFAULT_SPRT_ALPHA,
            sprt_beta: crate::baselines::DEFAULT_SPRT_BETA,
            page_h_sigmas: crate::baselines::DEFAULT_PAGE_H_SIGMAS,
            ae_threshold_quantile: 0.95,
            autoencoder: AeConfig::default(),
            seed: 0,
        }
    }
}

/// Scores and decision of one method on one held-out flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub scores: Vec<f64>,
    pub fault_declared: bool,
    pub localized_motor: Option<usize>,
    /// Page trigger window (1-based) for the CUSUM baseline.
    pub trigger_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub held_out: String,
    pub label: FaultLabel,
    pub start_indices: Vec<usize>,
    pub outcomes: BTreeMap<Method, MethodOutcome>,
    /// Methods that could not be fit on this fold's training data.
    pub skipped: BTreeMap<Method, String>,
}

impl FoldResult {
    /// The per-window trace of one method in the detector CSV layout.
    pub fn trace(&self, method: Method) -> Option<DetectionTrace> {
        let o = self.outcomes.get(&method)?;
        Some(DetectionTrace {
            flight_id: self.held_out.clone(),
            start_indices: self.start_indices.clone(),
            q: o.scores.clone(),
            q_smoothed: o.scores.clone(),
            motor_argmax: vec![o.localized_motor.unwrap_or(0); o.scores.len()],
            alpha_ema: 1.0,
        })
    }
}

/// Fails if any held-out window also appears in the training set.
pub fn check_leakage(train: &FeatureSet, test: &[&FeatureVector]) -> Result<()> {
    let seen: HashSet<(&str, usize)> = train.rows.iter().map(|r| (r.flight_id.as_str(), r.start_index)).collect();
    if let Some(r) = test.iter().find(|r| seen.contains(&(r.flight_id.as_str(), r.start_index))) {
        return Err(Error::Internal(format!(
            "held-out window {}@{} is part of the training set",
            r.flight_id, r.start_index
        )));
    }
    Ok(())
}

fn skippable(e: &Error) -> bool {
    matches!(e, Error::MissingClass(_) | Error::InsufficientData(_))
}

struct Fold<'a> {
    train: FeatureSet,
    test: Vec<&'a FeatureVector>,
    cfg: &'a LofoConfig,
    seed: u64,
}

impl Fold<'_> {
    fn composite(&self, bank: &HypothesisBank, smooth: bool, columns: Option<&[usize]>) -> Result<MethodOutcome> {
        let mut q = Vec::with_capacity(self.test.len());
        let mut motors = Vec::with_capacity(self.test.len());
        for w in &self.test {
            let x: Vec<f64> = match columns {
                Some(c) => c.iter().map(|&i| w.values[i]).collect(),
                None => w.values.clone(),
            };
            let (qi, m) = composite_q(bank, &bank.standardize(&x)?)?;
            q.push(qi);
            motors.push(m);
        }
        let scores = if smooth { ema_smooth(&q, self.cfg.alpha_ema)? } else { q.clone() };
        let trace = DetectionTrace {
            flight_id: String::new(),
            start_indices: Vec::new(),
            q,
            q_smoothed: scores.clone(),
            motor_argmax: motors,
            alpha_ema: self.cfg.alpha_ema,
        };
        let d = decide_flight(&trace, self.cfg.decision_threshold);
        Ok(MethodOutcome {
            scores,
            fault_declared: d.fault_declared,
            localized_motor: if bank.pooled { None } else { d.localized_motor },
            trigger_window: None,
        })
    }

    fn mahalanobis(&self) -> Result<MethodOutcome> {
        let healthy: Vec<&[f64]> =
            self.train.rows.iter().filter(|r| !r.label.is_fault()).map(|r| r.values.as_slice()).collect();
        let st = Standardizer::fit(&healthy)?;
        let z: Vec<Vec<f64>> = healthy.iter().map(|r| st.apply(r)).collect::<Result<_>>()?;
        let refs: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
        let h0 = GaussianModel::fit_rows(&refs)?;
        let train_scores: Vec<f64> = refs.iter().map(|x| mahalanobis_score(&h0, x)).collect::<Result<_>>()?;
        let page = PageParams::calibrate(&train_scores, self.cfg.page_h_sigmas)?;
        let scores: Vec<f64> =
            self.test.iter().map(|w| mahalanobis_score(&h0, &st.apply(&w.values)?)).collect::<Result<_>>()?;
        let state = page_cusum(&scores, page.k, page.h);
        Ok(MethodOutcome {
            scores,
            fault_declared: state.triggered_at.is_some(),
            localized_motor: None,
            trigger_window: state.triggered_at,
        })
    }

    fn sprt(&self, bank: &HypothesisBank) -> Result<MethodOutcome> {
        let llr: Vec<f64> =
            self.test.iter().map(|w| mixture_llr(bank, &bank.standardize(&w.values)?)).collect::<Result<_>>()?;
        let t = sprt_from_llr(&llr, self.cfg.sprt_alpha, self.cfg.sprt_beta)?;
        Ok(MethodOutcome { scores: t.cumulative, fault_declared: t.fault_declared, localized_motor: None, trigger_window: None })
    }

    fn autoencoder(&self) -> Result<MethodOutcome> {
        let healthy: Vec<&[f64]> =
            self.train.rows.iter().filter(|r| !r.label.is_fault()).map(|r| r.values.as_slice()).collect();
        let cfg = AeConfig { seed: derive_seed(self.seed, 1), ..self.cfg.autoencoder.clone() };
        let ae = Autoencoder::train(&healthy, &cfg)?;
        let mut train_scores: Vec<f64> = healthy.iter().map(|x| ae.score(x)).collect::<Result<_>>()?;
        train_scores.sort_by(f64::total_cmp);
        let threshold = quantile_sorted(&train_scores, self.cfg.ae_threshold_quantile);
        let scores: Vec<f64> = self.test.iter().map(|w| ae.score(&w.values)).collect::<Result<_>>()?;
        let above = scores.iter().filter(|s| **s > threshold).count();
        Ok(MethodOutcome {
            fault_declared: 2 * above > scores.len(),
            scores,
            localized_motor: None,
            trigger_window: None,
        })
    }
}

fn run_fold(features: &FeatureSet, held_out: &str, index: usize, cfg: &LofoConfig) -> Result<FoldResult> {
    let train = features.filter(|r| r.flight_id != held_out);
    let mut test: Vec<&FeatureVector> = features.rows.iter().filter(|r| r.flight_id == held_out).collect();
    test.sort_by_key(|r| r.start_index);
    check_leakage(&train, &test)?;
    let label = test[0].label.clone();
    let fold = Fold { train, test, cfg, seed: derive_seed(cfg.seed, index as u64) };

    let mut outcomes = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    let mut record = |m: Method, r: Result<MethodOutcome>| -> Result<()> {
        match r {
            Ok(o) => {
                outcomes.insert(m, o);
                Ok(())
            }
            Err(e) if skippable(&e) => {
                log::warn!("fold `{held_out}`: skipping {m}: {e}");
                skipped.insert(m, e.to_string());
                Ok(())
            }
            Err(e) => Err(e),
        }
    };
    let wants = |m: Method| cfg.methods.contains(&m);
    let motors = features.motors();

    if wants(Method::LrtEma) || wants(Method::Lrt) || wants(Method::Sprt) {
        let bank = HypothesisBank::fit(&fold.train, motors);
        for m in [Method::LrtEma, Method::Lrt, Method::Sprt] {
            if !wants(m) {
                continue;
            }
            let r = match &bank {
                Ok(b) if m == Method::Sprt => fold.sprt(b),
                Ok(b) => fold.composite(b, m == Method::LrtEma, None),
                Err(Error::MissingClass(v)) => Err(Error::MissingClass(v.clone())),
                Err(Error::InsufficientData(s)) => Err(Error::InsufficientData(s.clone())),
                Err(e) => return Err(Error::Internal(format!("hypothesis fit failed: {e}"))),
            };
            record(m, r)?;
        }
    }
    if wants(Method::LrtPooled) {
        let r = HypothesisBank::fit_pooled(&fold.train).and_then(|b| fold.composite(&b, false, None));
        record(Method::LrtPooled, r)?;
    }
    if wants(Method::LrtTimeOnly) {
        let cols = fold.train.schema.time_domain_indices();
        let r = HypothesisBank::fit(&fold.train.select_columns(&cols), motors)
            .and_then(|b| fold.composite(&b, true, Some(&cols)));
        record(Method::LrtTimeOnly, r)?;
    }
    if wants(Method::MahalanobisCusum) {
        record(Method::MahalanobisCusum, fold.mahalanobis())?;
    }
    if wants(Method::Autoencoder) {
        record(Method::Autoencoder, fold.autoencoder())?;
    }
    Ok(FoldResult { held_out: held_out.to_string(), label, start_indices: fold.test.iter().map(|r| r.start_index).collect(), outcomes, skipped })
}

/// One fold per flight, in order of first appearance; folds run in parallel.
pub fn run_lofo(features: &FeatureSet, cfg: &LofoConfig) -> Result<Vec<FoldResult>> {
    let flights = features.flight_ids();
    if flights.len() < 2 {
        return Err(Error::Config(format!("LOFO needs at least 2 flights, got {}", flights.len())));
    }
    if cfg.methods.is_empty() {
        return Err(Error::Config("no evaluation methods selected".into()));
    }
    let indexed: Vec<(usize, &String)> = flights.iter().enumerate().collect();
    super::par_map(&indexed, |&(i, id)| run_fold(features, id, i, cfg)).into_iter().collect()
}

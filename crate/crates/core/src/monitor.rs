//! Fitted detector artifact and batch flight monitoring.

use serde::{Deserialize, Serialize};

use crate::cls::{build_toy_ensemble, cls_detect, uniform_weights, ClsResult, ToyEnsemble};
use crate::detector::{decide_flight, scan_flight, DetectionTrace, FlightDecision};
use crate::error::{Error, Result};
use crate::eval::metrics::quantile_sorted;
use crate::eval::par_map;
use crate::features::{FeatureSchema, FeatureSet, FeatureVector};
use crate::gaussian::HypothesisBank;
use crate::persist::{check_schema, Persist};
use crate::rng::derive_seed;
use crate::sbi::{posterior_query, PosteriorModel, PosteriorSummary};

/// Hypothesis bank plus everything needed to score a new flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub schema: FeatureSchema,
    pub window_length: usize,
    pub stride: usize,
    pub alpha_ema: f64,
    pub bank: HypothesisBank,
    /// Alarm threshold on the smoothed statistic.
    pub threshold: f64,
    pub far_target: f64,
    /// Number of healthy windows the threshold was calibrated on.
    pub calibration_windows: usize,
    pub ensemble: Option<ToyEnsemble>,
}

impl Persist for DetectorModel {
    const KIND: &'static str = "detector";

    fn feature_schema(&self) -> &FeatureSchema {
        &self.schema
    }
}

/// Posterior estimator tied to the feature schema it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorArtifact {
    pub schema: FeatureSchema,
    pub model: PosteriorModel,
}

impl Persist for PosteriorArtifact {
    const KIND: &'static str = "posterior";

    fn feature_schema(&self) -> &FeatureSchema {
        &self.schema
    }
}

fn flight_windows<'a>(features: &'a FeatureSet, id: &str) -> Vec<&'a FeatureVector> {
    features.rows.iter().filter(|r| r.flight_id == id).collect()
}

/// Smoothed healthy-flight statistics, each flight scored by a bank fit
/// without it. With a single healthy flight the scores are in-sample.
pub fn healthy_calibration_scores(features: &FeatureSet, motors: usize, alpha: f64) -> Result<Vec<f64>> {
    let healthy: Vec<String> = features
        .flight_ids()
        .into_iter()
        .filter(|id| features.rows.iter().any(|r| &r.flight_id == id && !r.label.is_fault()))
        .collect();
    if healthy.is_empty() {
        return Err(Error::InsufficientData("no healthy flights to calibrate the threshold".into()));
    }
    let full = (healthy.len() < 2).then(|| HypothesisBank::fit(features, motors)).transpose()?;
    let per_flight = par_map(&healthy, |id| -> Result<Vec<f64>> {
        let bank = match &full {
            Some(b) => b.clone(),
            None => HypothesisBank::fit(&features.filter(|r| &r.flight_id != id), motors)?,
        };
        Ok(scan_flight(&bank, &flight_windows(features, id), alpha)?.q_smoothed)
    });
    let mut out = Vec::new();
    for scores in per_flight {
        out.extend(scores?);
    }
    Ok(out)
}

impl DetectorModel {
    /// Fits the bank on every labelled window and sets the alarm threshold
    /// at the `1 - far_target` quantile of held-out healthy scores.
    pub fn fit(features: &FeatureSet, window_length: usize, stride: usize, alpha_ema: f64, far_target: f64) -> Result<Self> {
        if !(far_target > 0.0 && far_target < 1.0) {
            return Err(Error::Config(format!("far_target must lie in (0, 1), got {far_target}")));
        }
        let motors = features.motors();
        let bank = HypothesisBank::fit(features, motors)?;
        let mut scores = healthy_calibration_scores(features, motors, alpha_ema)?;
        scores.sort_by(f64::total_cmp);
        Ok(Self {
            schema: features.schema.clone(),
            window_length,
            stride,
            alpha_ema,
            bank,
            threshold: quantile_sorted(&scores, 1.0 - far_target),
            far_target,
            calibration_windows: scores.len(),
            ensemble: None,
        })
    }

    /// Builds and caches the toy ensemble (uniform H1 mixture).
    pub fn attach_ensemble(&mut self, n_toys: usize, seed: u64) -> Result<&ToyEnsemble> {
        let ensemble = build_toy_ensemble(&self.bank, &uniform_weights(self.bank.motors()), n_toys, seed)?;
        Ok(self.ensemble.insert(ensemble))
    }

    pub fn scan(&self, features: &FeatureSet) -> Result<DetectionTrace> {
        check_schema(&self.schema, &features.schema)?;
        let ids = features.flight_ids();
        if ids.len() != 1 {
            return Err(Error::Config(format!("expected windows from one flight, got {} flights", ids.len())));
        }
        let mut windows = flight_windows(features, &ids[0]);
        windows.sort_by_key(|w| w.start_index);
        scan_flight(&self.bank, &windows, self.alpha_ema)
    }

    /// Scores one flight and assembles the per-window report.
    pub fn detect(&self, features: &FeatureSet, opts: &DetectOptions, posterior: Option<&PosteriorArtifact>) -> Result<DetectionReport> {
        let trace = self.scan(features)?;
        if let Some(p) = posterior {
            check_schema(&p.schema, &features.schema)?;
        }
        if opts.alpha_det.is_some() && self.ensemble.is_none() {
            return Err(Error::Config("CLs requested but the model has no toy ensemble".into()));
        }
        let mut rows: Vec<&FeatureVector> = features.rows.iter().collect();
        rows.sort_by_key(|w| w.start_index);

        let mut windows = Vec::with_capacity(trace.len());
        for (i, row) in rows.iter().enumerate() {
            let alarm = trace.q_smoothed[i] > self.threshold;
            let cls = match (opts.alpha_det, &self.ensemble) {
                (Some(a), Some(e)) => {
                    let q = if opts.cls_on_smoothed { trace.q_smoothed[i] } else { trace.q[i] };
                    Some(cls_detect(e, q, a)?)
                }
                _ => None,
            };
            let post = match posterior {
                Some(p) if alarm => {
                    let seed = derive_seed(opts.seed, row.start_index as u64);
                    Some(posterior_query(&p.model, &row.values, opts.n_samples, opts.level, seed)?.summary(seed))
                }
                _ => None,
            };
            windows.push(WindowDetection {
                start_index: row.start_index,
                q: trace.q[i],
                q_smoothed: trace.q_smoothed[i],
                motor: trace.motor_argmax[i],
                alarm,
                cls,
                posterior: post,
            });
        }
        let n = windows.len() as f64;
        let alarm_fraction = windows.iter().filter(|w| w.alarm).count() as f64 / n;
        let cls_detected_fraction = opts
            .alpha_det
            .map(|_| windows.iter().filter(|w| w.cls.is_some_and(|c| c.detected)).count() as f64 / n);
        Ok(DetectionReport {
            flight_id: trace.flight_id.clone(),
            feature_schema_hash: self.schema.hash(),
            alpha_ema: self.alpha_ema,
            threshold: self.threshold,
            far_target: self.far_target,
            decision: decide_flight(&trace, opts.decision_threshold),
            alarm_fraction,
            cls_detected_fraction,
            windows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectOptions {
    pub decision_threshold: f64,
    /// CLs level; `None` skips the CLs columns.
    pub alpha_det: Option<f64>,
    pub cls_on_smoothed: bool,
    pub n_samples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            decision_threshold: 0.0,
            alpha_det: Some(crate::cls::DEFAULT_ALPHA_DET),
            cls_on_smoothed: true,
            n_samples: crate::sbi::DEFAULT_POSTERIOR_SAMPLES,
            level: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDetection {
    pub start_index: usize,
    pub q: f64,
    pub q_smoothed: f64,
    pub motor: usize,
    /// Smoothed statistic above the calibrated threshold.
    pub alarm: bool,
    pub cls: Option<ClsResult>,
    pub posterior: Option<PosteriorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub flight_id: String,
    pub feature_schema_hash: String,
    pub alpha_ema: f64,
    pub threshold: f64,
    pub far_target: f64,
    pub decision: FlightDecision,
    pub alarm_fraction: f64,
    pub cls_detected_fraction: Option<f64>,
    pub windows: Vec<WindowDetection>,
}

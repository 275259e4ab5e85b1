//! Evaluation report assembly and export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{cohens_d_ranking, FeatureRank, FeatureSet};

use super::lofo::{FoldResult, Method};
use super::metrics::{auc, bootstrap_ci, far_at_tpr, roc_curve, tpr_at_far, BootstrapCi, FarAtTpr, DEFAULT_TPR_TARGETS};

pub const REPORT_SCHEMA_VERSION: &str = "1.0.0";
/// JSON schema of [`EvalReport`].
pub const REPORT_SCHEMA: &str = include_str!("../../schema/eval_report.schema.json");
pub const NOT_IMPLEMENTED: &str = "not_implemented";
const TOP_FEATURES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    pub n_boot: usize,
    pub level: f64,
    pub tpr_targets: Vec<f64>,
    pub far_target: f64,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { n_boot: 1000, level: 0.95, tpr_targets: DEFAULT_TPR_TARGETS.to_vec(), far_target: 0.05, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityAuc {
    pub severity: f64,
    pub n_fault_windows: usize,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlightConfusion {
    pub true_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    pub false_positive: usize,
}

impl FlightConfusion {
    pub fn accuracy(&self) -> f64 {
        let n = self.true_positive + self.false_negative + self.true_negative + self.false_positive;
        (self.true_positive + self.true_negative) as f64 / n.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub status: String,
    pub n_windows: Option<usize>,
    pub folds_evaluated: Option<usize>,
    pub folds_skipped: Option<usize>,
    pub auc_all: Option<f64>,
    pub auc_by_severity: Option<Vec<SeverityAuc>>,
    pub bootstrap: Option<BootstrapCi>,
    pub far_at_tpr: Option<Vec<FarAtTpr>>,
    pub tpr_at_far: Option<f64>,
    pub flights: Option<FlightConfusion>,
    pub localization_accuracy: Option<f64>,
}

impl MethodMetrics {
    fn not_implemented() -> Self {
        Self {
            status: NOT_IMPLEMENTED.into(),
            n_windows: None,
            folds_evaluated: None,
            folds_skipped: None,
            auc_all: None,
            auc_by_severity: None,
            bootstrap: None,
            far_at_tpr: None,
            tpr_at_far: None,
            flights: None,
            localization_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub n_flights: usize,
    pub n_windows: usize,
    pub motors: usize,
    pub healthy_flights: usize,
    pub fault_flights: usize,
    pub severities: Vec<f64>,
    pub feature_schema_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightRow {
    pub flight_id: String,
    pub severity: f64,
    pub motor: Option<usize>,
    /// `null` where the method was not run or was skipped for this fold.
    pub decisions: BTreeMap<String, Option<bool>>,
    pub localized_motor: Option<usize>,
    pub page_trigger_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub corpus: CorpusMeta,
    /// Echo of every setting that produced the report.
    pub config: serde_json::Value,
    /// Every known method; `null` when not selected.
    pub methods: BTreeMap<String, Option<MethodMetrics>>,
    pub per_flight_decisions: Vec<FlightRow>,
    pub feature_ranking: Vec<FeatureRank>,
}

/// Held-out scores of one method pooled over folds.
pub struct Pooled {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub severities: Vec<f64>,
}

pub fn pooled_scores(folds: &[FoldResult], method: Method) -> Pooled {
    let mut p = Pooled { scores: Vec::new(), labels: Vec::new(), severities: Vec::new() };
    for f in folds {
        if let Some(o) = f.outcomes.get(&method) {
            p.scores.extend(&o.scores);
            p.labels.extend(std::iter::repeat_n(f.label.is_fault(), o.scores.len()));
            p.severities.extend(std::iter::repeat_n(f.label.severity, o.scores.len()));
        }
    }
    p
}

/// Pooled held-out AUC of one method over all severities.
pub fn pooled_auc(folds: &[FoldResult], method: Method) -> Result<f64> {
    let p = pooled_scores(folds, method);
    auc(&p.scores, &p.labels)
}

fn severities(folds: &[FoldResult]) -> Vec<f64> {
    let mut s: Vec<f64> = folds.iter().filter(|f| f.label.is_fault()).map(|f| f.label.severity).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

fn method_metrics(folds: &[FoldResult], method: Method, opts: &ReportOptions) -> Result<MethodMetrics> {
    let p = pooled_scores(folds, method);
    let evaluated = folds.iter().filter(|f| f.outcomes.contains_key(&method)).count();
    let (auc_all, boot, far, tpr) = match auc(&p.scores, &p.labels) {
        Ok(a) => (
            Some(a),
            Some(bootstrap_ci(&p.scores, &p.labels, opts.n_boot, opts.level, opts.seed)?),
            Some(far_at_tpr(&p.scores, &p.labels, &opts.tpr_targets)?),
            Some(tpr_at_far(&p.scores, &p.labels, opts.far_target)?.1),
        ),
        Err(Error::UndefinedMetric(_)) => (None, None, None, None),
        Err(e) => return Err(e),
    };
    let by_sev = severities(folds)
        .into_iter()
        .map(|sev| {
            let keep: Vec<usize> = (0..p.scores.len()).filter(|&i| !p.labels[i] || p.severities[i] == sev).collect();
            let s: Vec<f64> = keep.iter().map(|&i| p.scores[i]).collect();
            let l: Vec<bool> = keep.iter().map(|&i| p.labels[i]).collect();
            SeverityAuc { severity: sev, n_fault_windows: l.iter().filter(|x| **x).count(), auc: auc(&s, &l).ok() }
        })
        .collect();
    let mut conf = FlightConfusion::default();
    let (mut localized, mut loc_total) = (0usize, 0usize);
    for f in folds {
        let Some(o) = f.outcomes.get(&method) else { continue };
        match (f.label.is_fault(), o.fault_declared) {
            (true, true) => conf.true_positive += 1,
            (true, false) => conf.false_negative += 1,
            (false, false) => conf.true_negative += 1,
            (false, true) => conf.false_positive += 1,
        }
        if f.label.is_fault() && o.fault_declared && o.localized_motor.is_some() {
            loc_total += 1;
            localized += usize::from(o.localized_motor == f.label.motor);
        }
    }
    Ok(MethodMetrics {
        status: "ok".into(),
        n_windows: Some(p.scores.len()),
        folds_evaluated: Some(evaluated),
        folds_skipped: Some(folds.len() - evaluated),
        auc_all,
        auc_by_severity: Some(by_sev),
        bootstrap: boot,
        far_at_tpr: far,
        tpr_at_far: tpr,
        flights: Some(conf),
        localization_accuracy: (loc_total > 0).then(|| localized as f64 / loc_total as f64),
    })
}

/// Methods that produced a result in at least one fold or were skipped in one.
fn selected_methods(folds: &[FoldResult]) -> Vec<Method> {
    Method::ALL
        .into_iter()
        .filter(|m| folds.iter().any(|f| f.outcomes.contains_key(m) || f.skipped.contains_key(m)))
        .collect()
}

pub fn build_report(
    folds: &[FoldResult],
    features: &FeatureSet,
    config: serde_json::Value,
    opts: &ReportOptions,
) -> Result<EvalReport> {
    if folds.is_empty() {
        return Err(Error::InsufficientData("report needs at least one fold".into()));
    }
    let selected = selected_methods(folds);
    let mut methods: BTreeMap<String, Option<MethodMetrics>> = BTreeMap::new();
    for m in Method::ALL {
        let entry = if selected.contains(&m) { Some(method_metrics(folds, m, opts)?) } else { None };
        methods.insert(m.name().to_string(), entry);
    }
    methods.insert("lstm_autoencoder".into(), Some(MethodMetrics::not_implemented()));

    let per_flight_decisions = folds
        .iter()
        .map(|f| FlightRow {
            flight_id: f.held_out.clone(),
            severity: f.label.severity,
            motor: f.label.motor,
            decisions: selected
                .iter()
                .map(|m| (m.name().to_string(), f.outcomes.get(m).map(|o| o.fault_declared)))
                .collect(),
            localized_motor: f.outcomes.get(&Method::LrtEma).and_then(|o| o.localized_motor),
            page_trigger_window: f.outcomes.get(&Method::MahalanobisCusum).and_then(|o| o.trigger_window),
        })
        .collect();

    let healthy: Vec<Vec<f64>> = features.rows.iter().filter(|r| !r.label.is_fault()).map(|r| r.values.clone()).collect();
    let faulty: Vec<Vec<f64>> = features.rows.iter().filter(|r| r.label.is_fault()).map(|r| r.values.clone()).collect();
    let feature_ranking = match cohens_d_ranking(&healthy, &faulty, &features.schema.names) {
        Ok(mut r) => {
            r.truncate(TOP_FEATURES);
            r
        }
        Err(_) => Vec::new(),
    };

    let flights = features.flight_ids();
    let fault_flights = folds.iter().filter(|f| f.label.is_fault()).count();
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION.into(),
        corpus: CorpusMeta {
            n_flights: flights.len(),
            n_windows: features.len(),
            motors: features.motors(),
            healthy_flights: folds.len() - fault_flights,
            fault_flights,
            severities: severities(folds),
            feature_schema_hash: features.schema.hash(),
        },
        config,
        methods,
        per_flight_decisions,
        feature_ranking,
    })
}

impl EvalReport {
    pub fn auc(&self, method: Method) -> Option<f64> {
        self.methods.get(method.name())?.as_ref()?.auc_all
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-width table of the main metrics.
    pub fn summary_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        let mut out = String::new();
        let sevs = &self.corpus.severities;
        let _ = write!(out, "{:<20} {:>7} {:>7}", "method", "AUC", "sd");
        for s in sevs {
            let _ = write!(out, " {:>8}", format!("AUC@{}%", (s * 100.0).round()));
        }
        let _ = writeln!(out, " {:>9} {:>8}", "FAR@TPR80", "flights");
        for (name, entry) in &self.methods {
            let Some(m) = entry else { continue };
            if m.status != "ok" {
                let _ = writeln!(out, "{name:<20} {}", m.status);
                continue;
            }
            let _ = write!(out, "{name:<20} {:>7} {:>7}", fmt(m.auc_all), fmt(m.bootstrap.map(|b| b.sd)));
            for s in sevs {
                let a = m.auc_by_severity.as_ref().and_then(|v| v.iter().find(|x| x.severity == *s)).and_then(|x| x.auc);
                let _ = write!(out, " {:>8}", fmt(a));
            }
            let far80 = m.far_at_tpr.as_ref().and_then(|v| v.iter().find(|f| (f.tpr_target - 0.8).abs() < 1e-9)).map(|f| f.far);
            let flights = m.flights.map_or("-".into(), |c| format!("{}/{}", c.true_positive + c.true_negative, {
                c.true_positive + c.true_negative + c.false_positive + c.false_negative
            }));
            let _ = writeln!(out, " {:>9} {:>8}", fmt(far80), flights);
        }
        out
    }
}

/// Writes `report.json` plus the CSV exports into `dir`.
pub fn emit_report(report: &EvalReport, folds: &[FoldResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json()? + "\n")?;

    let mut roc = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("roc_points.csv"))?));
    roc.write_record(["method", "threshold", "fpr", "tpr"])?;
    let mut far = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("far_table.csv"))?));
    far.write_record(["method", "tpr_target", "threshold", "tpr", "far"])?;
    for m in Method::ALL {
        let p = pooled_scores(folds, m);
        let Ok(points) = roc_curve(&p.scores, &p.labels) else { continue };
        for pt in points {
            roc.write_record([m.name().to_string(), format!("{}", pt.threshold), format!("{}", pt.fpr), format!("{}", pt.tpr)])?;
        }
        if let Some(Some(metrics)) = report.methods.get(m.name()) {
            for r in metrics.far_at_tpr.iter().flatten() {
                far.write_record([
                    m.name().to_string(),
                    format!("{}", r.tpr_target),
                    format!("{}", r.threshold),
                    format!("{}", r.tpr),
                    format!("{}", r.far),
                ])?;
            }
        }
    }
    roc.flush()?;
    far.flush()?;

    let methods: Vec<String> = report.per_flight_decisions.first().map_or_else(Vec::new, |r| r.decisions.keys().cloned().collect());
    let mut pf = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("per_flight_decisions.csv"))?));
    let mut header = vec!["flight_id".to_string(), "severity".into(), "motor".into()];
    header.extend(methods.iter().cloned());
    header.extend(["localized_motor".to_string(), "page_trigger_window".into()]);
    pf.write_record(&header)?;
    let opt = |v: Option<usize>| v.map_or_else(String::new, |x| x.to_string());
    for r in &report.per_flight_decisions {
        let mut row = vec![r.flight_id.clone(), format!("{}", r.severity), opt(r.motor)];
        row.extend(methods.iter().map(|m| match r.decisions.get(m).copied().flatten() {
            Some(true) => "fault".to_string(),
            Some(false) => "healthy".to_string(),
            None => String::new(),
        }));
        row.extend([opt(r.localized_motor), opt(r.page_trigger_window)]);
        pf.write_record(&row)?;
    }
    pf.flush()?;

    let mut fr = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("feature_ranking.csv"))?));
    fr.write_record(["rank", "feature", "cohens_d"])?;
    for (i, r) in report.feature_ranking.iter().enumerate() {
        fr.write_record([(i + 1).to_string(), r.feature.clone(), format!("{}", r.cohens_d)])?;
    }
    fr.flush()?;
    Ok(())
}

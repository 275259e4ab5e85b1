//! Composite likelihood-ratio scan, EMA smoothing and per-flight decisions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::gaussian::HypothesisBank;

pub const DEFAULT_EMA_ALPHA: f64 = 0.3;

/// `max_m [log p(x | H1_m) - log p(x | H0)]` and the 1-based maximising motor.
///
/// `x` must already be standardized with the bank's parameters. Ties go to
/// the lowest motor index.
pub fn composite_q(bank: &HypothesisBank, x: &[f64]) -> Result<(f64, usize)> {
    let l0 = bank.h0.log_pdf(x)?;
    let mut best = (f64::NEG_INFINITY, 1);
    for (m, h1) in bank.h1.iter().enumerate() {
        let q = h1.log_pdf(x)? - l0;
        if q > best.0 {
            best = (q, m + 1);
        }
    }
    Ok(best)
}

/// `log((1/M) sum_m p(x | H1_m)) - log p(x | H0)`: the likelihood ratio of
/// the uniform per-motor mixture against H0.
pub fn mixture_llr(bank: &HypothesisBank, x: &[f64]) -> Result<f64> {
    let l0 = bank.h0.log_pdf(x)?;
    let l1: Vec<f64> = bank.h1.iter().map(|h| h.log_pdf(x)).collect::<Result<_>>()?;
    let top = l1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + l1.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    Ok(lse - (bank.motors() as f64).ln() - l0)
}

/// `q~_0 = q_0`, `q~_t = alpha q_t + (1 - alpha) q~_{t-1}`.
pub fn ema_smooth(q: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if q.is_empty() {
        return Err(Error::InsufficientData("cannot smooth an empty sequence".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("EMA alpha must lie in (0, 1], got {alpha}")));
    }
    let mut out = Vec::with_capacity(q.len());
    let mut prev = q[0];
    out.push(prev);
    for &v in &q[1..] {
        prev = alpha * v + (1.0 - alpha) * prev;
        out.push(prev);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTrace {
    pub flight_id: String,
    pub start_indices: Vec<usize>,
    pub q: Vec<f64>,
    pub q_smoothed: Vec<f64>,
    pub motor_argmax: Vec<usize>,
    pub alpha_ema: f64,
}

impl DetectionTrace {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["window", "start_index", "q", "q_smoothed", "motor"])?;
        for i in 0..self.len() {
            wtr.write_record([
                i.to_string(),
                self.start_indices[i].to_string(),
                format!("{}", self.q[i]),
                format!("{}", self.q_smoothed[i]),
                self.motor_argmax[i].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Scores one flight's windows (raw, unstandardized features, in time order).
pub fn scan_flight(bank: &HypothesisBank, windows: &[&FeatureVector], alpha: f64) -> Result<DetectionTrace> {
    let first = windows
        .first()
        .ok_or_else(|| Error::InsufficientData("flight has no windows".into()))?;
    let mut q = Vec::with_capacity(windows.len());
    let mut motor_argmax = Vec::with_capacity(windows.len());
    for w in windows {
        let (qi, m) = composite_q(bank, &bank.standardize(&w.values)?)?;
        q.push(qi);
        motor_argmax.push(m);
    }
    let q_smoothed = ema_smooth(&q, alpha)?;
    Ok(DetectionTrace {
        flight_id: first.flight_id.clone(),
        start_indices: windows.iter().map(|w| w.start_index).collect(),
        q,
        q_smoothed,
        motor_argmax,
        alpha_ema: alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightDecision {
    pub flight_id: String,
    pub fault_declared: bool,
    pub positive_fraction: f64,
    pub localized_motor: Option<usize>,
}

/// Majority vote: fault iff strictly more than half the windows have
/// `q~ > threshold`. The localized motor is the modal argmax over positive
/// windows (ties to the lowest index).
pub fn decide_flight(trace: &DetectionTrace, threshold: f64) -> FlightDecision {
    let n = trace.q_smoothed.len();
    let positive: Vec<usize> = (0..n).filter(|&i| trace.q_smoothed[i] > threshold).collect();
    let positive_fraction = if n == 0 { 0.0 } else { positive.len() as f64 / n as f64 };
    let max_motor = trace.motor_argmax.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max_motor + 1];
    for &i in &positive {
        counts[trace.motor_argmax[i]] += 1;
    }
    let localized_motor = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .fold(None, |best: Option<(usize, usize)>, (m, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((m, c)),
        })
        .map(|(m, _)| m);
    FlightDecision {
        flight_id: trace.flight_id.clone(),
        fault_declared: positive_fraction > 0.5,
        positive_fraction,
        localized_motor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{GaussianModel, Standardizer};
    use crate::rng::rng_from_seed;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn iso(mean: &[f64]) -> GaussianModel {
        let d = mean.len();
        GaussianModel::from_parts(DVector::from_column_slice(mean), DMatrix::identity(d, d), 0.0).unwrap()
    }

    fn bank(h0: GaussianModel, h1: Vec<GaussianModel>) -> HypothesisBank {
        let d = h0.dim();
        HypothesisBank { h0, h1, standardizer: Standardizer::identity(d), pooled: false }
    }

    fn trace(q_smoothed: Vec<f64>, motors: Vec<usize>) -> DetectionTrace {
        DetectionTrace {
            flight_id: "f".into(),
            start_indices: (0..q_smoothed.len()).collect(),
            q: q_smoothed.clone(),
            q_smoothed,
            motor_argmax: motors,
            alpha_ema: 1.0,
        }
    }

    #[test]
    fn identical_hypotheses_give_zero() {
        let b = bank(iso(&[0.0, 0.0]), vec![iso(&[0.0, 0.0]); 3]);
        let (q, m) = composite_q(&b, &[1.3, -0.2]).unwrap();
        assert_eq!(q, 0.0);
        assert_eq!(m, 1);
    }

    #[test]
    fn single_alternative_is_simple_lrt() {
        let b = bank(iso(&[0.0]), vec![iso(&[2.0])]);
        let (q, m) = composite_q(&b, &[1.5]).unwrap();
        let direct = b.h1[0].log_pdf(&[1.5]).unwrap() - b.h0.log_pdf(&[1.5]).unwrap();
        assert_eq!(q, direct);
        assert_eq!(m, 1);
    }

    #[test]
    fn localizes_to_matching_motor() {
        let b = bank(iso(&[0.0, 0.0]), vec![iso(&[3.0, 0.0]), iso(&[0.0, 3.0])]);
        let (q, m) = composite_q(&b, &[0.0, 3.0]).unwrap();
        assert_eq!(m, 2);
        // Direct evaluation: log N(x; mu2) - log N(x; 0) = 0 + 4.5.
        assert!((q - 4.5).abs() < 1e-12);
    }

    #[test]
    fn ema_examples() {
        assert_eq!(ema_smooth(&[2.5; 6], 0.3).unwrap(), vec![2.5; 6]);
        let s = ema_smooth(&[0.0, 1.0], 0.3).unwrap();
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 0.3).abs() < 1e-15);
        assert!(ema_smooth(&[], 0.3).is_err());
        assert!(ema_smooth(&[1.0], 0.0).is_err());
        assert!(ema_smooth(&[1.0], 1.5).is_err());
    }

    #[test]
    fn ema_matches_direct_recursion() {
        let mut rng = rng_from_seed(17);
        let q: Vec<f64> = (0..100).map(|_| rng.random_range(-5.0..5.0)).collect();
        let s = ema_smooth(&q, 0.3).unwrap();
        let mut prev = 0.0;
        for (t, (&qt, &st)) in q.iter().zip(&s).enumerate() {
            let expect = if t == 0 { qt } else { 0.3 * qt + 0.7 * prev };
            assert!((st - expect).abs() < 1e-12);
            prev = expect;
        }
    }

    #[test]
    fn majority_vote_is_strict() {
        let d = decide_flight(&trace(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0], vec![2; 10]), 0.0);
        assert!(d.fault_declared);
        assert!((d.positive_fraction - 0.6).abs() < 1e-15);
        assert_eq!(d.localized_motor, Some(2));

        let d = decide_flight(&trace(vec![1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0, -1.0], vec![2; 10]), 0.0);
        assert!(!d.fault_declared);
    }

    #[test]
    fn localized_motor_mode_and_ties() {
        let d = decide_flight(&trace(vec![1.0, 1.0, 1.0, 1.0, -1.0], vec![3, 2, 3, 2, 1]), 0.0);
        assert_eq!(d.localized_motor, Some(2));
        let d = decide_flight(&trace(vec![-1.0, -1.0], vec![3, 2]), 0.0);
        assert_eq!(d.localized_motor, None);
        assert_eq!(d.positive_fraction, 0.0);
    }

    #[test]
    fn mixture_llr_with_equal_models_is_zero() {
        let b = bank(iso(&[0.0]), vec![iso(&[0.0]); 4]);
        assert!(mixture_llr(&b, &[0.7]).unwrap().abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ema_is_affine(q in prop::collection::vec(-10.0f64..10.0, 1..50), c in 0.01f64..5.0, alpha in 0.01f64..1.0) {
            let base = ema_smooth(&q, alpha).unwrap();
            let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
            let out = ema_smooth(&shifted, alpha).unwrap();
            prop_assert_eq!(out.len(), q.len());
            for (a, b) in base.iter().zip(&out) {
                prop_assert!(b > a);
                prop_assert!((b - a - c).abs() < 1e-9);
            }
        }

        #[test]
        fn unsmoothed_vote_is_permutation_invariant(q in prop::collection::vec(-3.0f64..3.0, 1..40)) {
            let motors: Vec<usize> = (0..q.len()).map(|i| 1 + i % 3).collect();
            let s = ema_smooth(&q, 1.0).unwrap();
            let a = decide_flight(&trace(s, motors.clone()), 0.0);
            let mut rq = q.clone();
            rq.reverse();
            let mut rm = motors;
            rm.reverse();
            let b = decide_flight(&trace(ema_smooth(&rq, 1.0).unwrap(), rm), 0.0);
            prop_assert_eq!(a.fault_declared, b.fault_declared);
            prop_assert_eq!(a.positive_fraction, b.positive_fraction);
        }

        #[test]
        fn common_log_density_shift_cancels(x in prop::collection::vec(-3.0f64..3.0, 2), s in 0.2f64..5.0) {
            // Shared covariances: log-determinant and normalisation terms cancel.
            let cov = DMatrix::identity(2, 2) * s;
            let g = |m: [f64; 2]| GaussianModel::from_parts(DVector::from_column_slice(&m), cov.clone(), 0.0).unwrap();
            let b = bank(g([0.0, 0.0]), vec![g([1.0, 0.0]), g([0.0, 1.0])]);
            let (q, m) = composite_q(&b, &x).unwrap();
            let direct: Vec<f64> = b.h1.iter().map(|h| h.log_pdf(&x).unwrap() - b.h0.log_pdf(&x).unwrap()).collect();
            let linear = [(2.0 * x[0] - 1.0) / (2.0 * s), (2.0 * x[1] - 1.0) / (2.0 * s)];
            prop_assert!((direct[m - 1] - q).abs() < 1e-12);
            prop_assert!((linear[m - 1] - q).abs() < 1e-9);
        }
    }
}

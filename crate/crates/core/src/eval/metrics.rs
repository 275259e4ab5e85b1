//! Threshold-free and fixed-rate detection metrics.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let n1 = labels.iter().filter(|l| **l).count();
    (labels.len() - n1, n1)
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension { expected: labels.len(), got: scores.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let (n0, n1) = class_counts(labels);
    if n0 == 0 || n1 == 0 {
        return Err(Error::UndefinedMetric(format!("need both classes, got {n0} negative and {n1} positive")));
    }
    Ok((n0, n1))
}

/// Mann-Whitney AUC with midranks (ties count one half). `true` = fault.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n0, n1) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n0 as f64 * n1 as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
    /// Resamples that contributed (single-class draws are redrawn, then skipped).
    pub n_used: usize,
}

const MAX_REDRAWS: usize = 20;

/// Linear-interpolation quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Window-level percentile bootstrap of the AUC.
pub fn bootstrap_ci(scores: &[f64], labels: &[bool], n_boot: usize, level: f64, seed: u64) -> Result<BootstrapCi> {
    check_inputs(scores, labels)?;
    if n_boot == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("bootstrap needs n_boot >= 1 and level in (0, 1), got {n_boot}, {level}")));
    }
    let n = scores.len();
    let ids: Vec<usize> = (0..n_boot).collect();
    let draws = super::par_map(&ids, |&b| {
        let mut rng = rng_from_seed(derive_seed(seed, b as u64));
        for _ in 0..MAX_REDRAWS {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            if let Ok(a) = auc(&s, &l) {
                return Some(a);
            }
        }
        None
    });
    let mut values: Vec<f64> = draws.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(Error::UndefinedMetric("every bootstrap resample was single-class".into()));
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        sd,
        lo: quantile_sorted(&values, tail),
        hi: quantile_sorted(&values, 1.0 - tail),
        n_used: values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarAtTpr {
    pub tpr_target: f64,
    pub threshold: f64,
    pub tpr: f64,
    pub far: f64,
}

pub const DEFAULT_TPR_TARGETS: [f64; 3] = [0.80, 0.90, 0.95];

/// For each target, the largest threshold `t` with `#{fault >= t} / n1 >= target`
/// and the healthy fraction with `score >= t`.
pub fn far_at_tpr(scores: &[f64], labels: &[bool], targets: &[f64]) -> Result<Vec<FarAtTpr>> {
    let (n0, n1) = check_inputs(scores, labels)?;
    let mut fault: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l).map(|(s, _)| *s).collect();
    let mut healthy: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| !**l).map(|(s, _)| *s).collect();
    fault.sort_by(|a, b| b.total_cmp(a));
    healthy.sort_by(f64::total_cmp);
    targets
        .iter()
        .map(|&target| {
            if !(target > 0.0 && target <= 1.0) {
                return Err(Error::Config(format!("TPR target {target} outside (0, 1]")));
            }
            let k = ((target * n1 as f64) - 1e-9).ceil().max(1.0) as usize;
            let threshold = fault[k.min(n1) - 1];
            let tpr = fault.iter().filter(|s| **s >= threshold).count() as f64 / n1 as f64;
            let above = n0 - healthy.partition_point(|s| *s < threshold);
            Ok(FarAtTpr { tpr_target: target, threshold, tpr, far: above as f64 / n0 as f64 })
        })
        .collect()
}

/// Fault-window detection rate at the threshold whose healthy exceedance
/// rate (`score > t`) is at most `far_target`.
pub fn tpr_at_far(scores: &[f64], labels: &[bool], far_target: f64) -> Result<(f64, f64)> {
    let (n0, n1) = check_inputs(scores, labels)?;
    let mut healthy: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| !**l).map(|(s, _)| *s).collect();
    healthy.sort_by(|a, b| b.total_cmp(a));
    let allowed = (far_target * n0 as f64 + 1e-9).floor() as usize;
    let threshold = if allowed >= n0 { f64::NEG_INFINITY } else { healthy[allowed] };
    let tp = scores.iter().zip(labels).filter(|(s, l)| **l && **s > threshold).count();
    Ok((threshold, tp as f64 / n1 as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve over all distinct thresholds (`score >= t` is positive), from (0,0) to (1,1).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (n0, n1) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold: t, fpr: fp as f64 / n0 as f64, tpr: tp as f64 / n1 as f64 });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::StandardNormal;

    fn labelled(h: &[f64], f: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let mut s = h.to_vec();
        s.extend_from_slice(f);
        let l = (0..s.len()).map(|i| i >= h.len()).collect();
        (s, l)
    }

    /// Exhaustive pair count.
    fn auc_oracle(s: &[f64], l: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        let (s, l) = labelled(&[0.0, 1.0, 2.0], &[3.0, 4.0, 5.0]);
        assert_eq!(auc(&s, &l).unwrap(), 1.0);
        assert_eq!(auc(&[2.0; 6], &l).unwrap(), 0.5);
        let (s, l) = labelled(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]);
        assert!((auc(&s, &l).unwrap() - 7.0 / 9.0).abs() < 1e-15);
        assert!(matches!(auc(&[1.0, 2.0], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn bootstrap_examples() {
        let h: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let f: Vec<f64> = (0..500).map(|i| 1000.0 + i as f64).collect();
        let (s, l) = labelled(&h, &f);
        let ci = bootstrap_ci(&s, &l, 200, 0.95, 1).unwrap();
        assert!(ci.hi - ci.lo < 0.01);
        let one = bootstrap_ci(&s, &l, 1, 0.95, 1).unwrap();
        assert_eq!(one.lo, one.hi);
        let (s, l) = labelled(&[1.0, 2.0, 3.0, 0.5], &[2.0, 3.0, 4.0, 1.5]);
        assert_eq!(bootstrap_ci(&s, &l, 300, 0.95, 9).unwrap(), bootstrap_ci(&s, &l, 300, 0.95, 9).unwrap());
    }

    #[test]
    fn far_examples() {
        let (s, l) = labelled(&[0.0, 1.0, 2.0], &[3.0, 4.0, 5.0]);
        for r in far_at_tpr(&s, &l, &DEFAULT_TPR_TARGETS).unwrap() {
            assert_eq!(r.far, 0.0);
            assert!(r.tpr >= r.tpr_target);
        }
        let mut rng = rng_from_seed(3);
        let h: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let f: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let (s, l) = labelled(&h, &f);
        for r in far_at_tpr(&s, &l, &DEFAULT_TPR_TARGETS).unwrap() {
            // Binomial sd at n = 20000 is below 0.0035.
            assert!((r.far - r.tpr_target).abs() < 0.015, "{r:?}");
        }
        assert!(far_at_tpr(&[1.0, 2.0], &[false, false], &[0.8]).is_err());
    }

    #[test]
    fn tpr_at_far_examples() {
        let h: Vec<f64> = (0..100).map(f64::from).collect();
        let f: Vec<f64> = (90..190).map(f64::from).collect();
        let (s, l) = labelled(&h, &f);
        let (t, tpr) = tpr_at_far(&s, &l, 0.05).unwrap();
        assert_eq!(t, 94.0);
        assert!((tpr - 0.95).abs() < 1e-12);
    }

    #[test]
    fn roc_endpoints() {
        let (s, l) = labelled(&[0.0, 1.0, 1.0], &[1.0, 2.0]);
        let roc = roc_curve(&s, &l).unwrap();
        assert_eq!((roc[0].fpr, roc[0].tpr), (0.0, 0.0));
        let last = roc.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        // Trapezoidal area equals the rank AUC.
        let area: f64 = roc.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum();
        assert!((area - auc(&s, &l).unwrap()).abs() < 1e-12);
    }

    fn corpus() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (1usize..60, 1usize..60).prop_flat_map(|(n0, n1)| {
            (prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 4.0), n0 + n1), Just(n0))
                .prop_map(|(s, n0)| {
                    let l = (0..s.len()).map(|i| i >= n0).collect();
                    (s, l)
                })
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_oracle((s, l) in corpus()) {
            prop_assert!((auc(&s, &l).unwrap() - auc_oracle(&s, &l)).abs() < 1e-9);
        }

        #[test]
        fn metrics_invariant_under_monotone_maps((s, l) in corpus()) {
            let t: Vec<f64> = s.iter().map(|v| (0.7 * v).exp() + 3.0).collect();
            prop_assert!((auc(&s, &l).unwrap() - auc(&t, &l).unwrap()).abs() < 1e-12);
            let a = far_at_tpr(&s, &l, &DEFAULT_TPR_TARGETS).unwrap();
            let b = far_at_tpr(&t, &l, &DEFAULT_TPR_TARGETS).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.far, y.far);
                prop_assert_eq!(x.tpr, y.tpr);
            }
        }
    }

    #[test]
    fn bootstrap_interval_contains_point_estimate() {
        let mut misses = 0;
        for c in 0..200u64 {
            let mut rng = rng_from_seed(100 + c);
            let shift = rng.random_range(0.0..1.5);
            let h: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
            let f: Vec<f64> = (0..60).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
            let (s, l) = labelled(&h, &f);
            let a = auc(&s, &l).unwrap();
            let ci = bootstrap_ci(&s, &l, 200, 0.95, c).unwrap();
            if !(ci.lo <= a && a <= ci.hi) {
                misses += 1;
            }
        }
        assert!(misses <= 2, "{misses} of 200 intervals missed the point estimate");
    }
}

//! Detection-oriented CLs.
//!
//! The sampling distributions of the composite statistic under H0 and under
//! the H1 mixture are estimated by drawing toy feature vectors from the
//! fitted bank. A window is declared faulty when
//! `CLs = P(q >= q_obs | H0) / P(q >= q_obs | H1)` falls below `alpha_det`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::detector::composite_q;
use crate::error::{Error, Result};
use crate::gaussian::HypothesisBank;
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_N_TOYS: usize = 10_000;
pub const MIN_TOYS: usize = 100;
pub const DEFAULT_ALPHA_DET: f64 = 0.05;

const TOY_BATCH: usize = 512;

/// Sorted toy values of the composite statistic under each hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEnsemble {
    pub q_under_h0: Vec<f64>,
    pub q_under_h1: Vec<f64>,
    pub n_toys: usize,
    pub seed: u64,
    /// Per-motor weights of the H1 mixture the toys were drawn from.
    pub h1_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClsResult {
    pub q_obs: f64,
    pub p_b: f64,
    pub p_sb: f64,
    pub cls_det: f64,
    pub detected: bool,
}

pub fn uniform_weights(motors: usize) -> Vec<f64> {
    vec![1.0 / motors as f64; motors]
}

/// All H1 toys from a single motor's alternative (post-localization mode).
pub fn motor_weights(motors: usize, motor: usize) -> Result<Vec<f64>> {
    if motor == 0 || motor > motors {
        return Err(Error::Config(format!("motor {motor} outside [1, {motors}]")));
    }
    let mut w = vec![0.0; motors];
    w[motor - 1] = 1.0;
    Ok(w)
}

pub fn build_toy_ensemble(bank: &HypothesisBank, h1_weights: &[f64], n_toys: usize, seed: u64) -> Result<ToyEnsemble> {
    if n_toys < MIN_TOYS {
        return Err(Error::Config(format!("at least {MIN_TOYS} toys are required, got {n_toys}")));
    }
    if h1_weights.len() != bank.motors() {
        return Err(Error::Dimension { expected: bank.motors(), got: h1_weights.len() });
    }
    let total: f64 = h1_weights.iter().sum();
    if h1_weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("H1 mixture weights must be nonnegative and sum to 1, got {h1_weights:?}")));
    }
    let cumulative: Vec<f64> = h1_weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();

    let batches: Vec<(usize, usize)> = (0..n_toys)
        .step_by(TOY_BATCH)
        .enumerate()
        .map(|(b, start)| (b, TOY_BATCH.min(n_toys - start)))
        .collect();
    let results = crate::eval::par_map(&batches, |&(b, len)| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng0 = rng_from_seed(derive_seed(seed, 2 * b as u64));
        let mut rng1 = rng_from_seed(derive_seed(seed, 2 * b as u64 + 1));
        let mut q0 = Vec::with_capacity(len);
        let mut q1 = Vec::with_capacity(len);
        for _ in 0..len {
            q0.push(composite_q(bank, &bank.h0.draw(&mut rng0))?.0);
            let u: f64 = rng1.random();
            let m = cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1);
            q1.push(composite_q(bank, &bank.h1[m].draw(&mut rng1))?.0);
        }
        Ok((q0, q1))
    });
    let mut q_under_h0 = Vec::with_capacity(n_toys);
    let mut q_under_h1 = Vec::with_capacity(n_toys);
    for r in results {
        let (a, b) = r?;
        q_under_h0.extend(a);
        q_under_h1.extend(b);
    }
    q_under_h0.sort_by(f64::total_cmp);
    q_under_h1.sort_by(f64::total_cmp);
    Ok(ToyEnsemble { q_under_h0, q_under_h1, n_toys, seed, h1_weights: h1_weights.to_vec() })
}

/// Add-one tail estimate `(1 + #{toys >= q_obs}) / (N + 1)` on sorted toys.
pub fn tail_probability(sorted: &[f64], q_obs: f64) -> f64 {
    let below = sorted.partition_point(|&v| v < q_obs);
    (1 + sorted.len() - below) as f64 / (sorted.len() + 1) as f64
}

pub fn cls_detect(ensemble: &ToyEnsemble, q_obs: f64, alpha_det: f64) -> Result<ClsResult> {
    if !(alpha_det > 0.0 && alpha_det < 1.0) {
        return Err(Error::Config(format!("alpha_det must lie in (0, 1), got {alpha_det}")));
    }
    let p_b = tail_probability(&ensemble.q_under_h0, q_obs);
    let p_sb = tail_probability(&ensemble.q_under_h1, q_obs);
    let cls_det = p_b / p_sb;
    Ok(ClsResult { q_obs, p_b, p_sb, cls_det, detected: cls_det < alpha_det })
}

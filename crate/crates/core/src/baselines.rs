//! Comparison detectors: Mahalanobis distance with Page's CUSUM, Wald's SPRT
//! and a feedforward autoencoder.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::detector::{mixture_llr, DetectionTrace};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianModel, HypothesisBank, Standardizer};
use crate::nn::{gather_rows, minibatches, rows_to_matrix, Adam, AdamConfig, Mlp};
use crate::rng::{rng_from_seed, Rng};

/// Per-window anomaly scores of one method on one flight (higher = more anomalous).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScore {
    pub method: String,
    pub flight_id: String,
    pub start_indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub decision: Option<bool>,
}

impl BaselineScore {
    /// Same per-window layout as the composite detector (motor column is 0).
    pub fn to_trace(&self) -> DetectionTrace {
        DetectionTrace {
            flight_id: self.flight_id.clone(),
            start_indices: self.start_indices.clone(),
            q: self.scores.clone(),
            q_smoothed: self.scores.clone(),
            motor_argmax: vec![0; self.scores.len()],
            alpha_ema: 1.0,
        }
    }
}

/// `sqrt((x - mu)' Sigma^-1 (x - mu))`.
pub fn mahalanobis_score(h0: &GaussianModel, x: &[f64]) -> Result<f64> {
    Ok(h0.mahalanobis_sq(x)?.sqrt())
}

// ---------------------------------------------------------------------------
// Page's CUSUM
// ---------------------------------------------------------------------------

/// Default threshold in units of the healthy score standard deviation.
pub const DEFAULT_PAGE_H_SIGMAS: f64 = 5.0;
/// Drift offset above the healthy mean, in standard deviations.
pub const PAGE_K_SIGMAS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageParams {
    pub k: f64,
    pub h: f64,
}

impl PageParams {
    /// `k = mean + 0.5 sd`, `h = h_sigmas * sd` of training healthy scores.
    pub fn calibrate(healthy_scores: &[f64], h_sigmas: f64) -> Result<Self> {
        let n = healthy_scores.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 healthy scores, got {n}")));
        }
        let mean = healthy_scores.iter().sum::<f64>() / n as f64;
        let sd = (healthy_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        Ok(Self { k: mean + PAGE_K_SIGMAS * sd, h: h_sigmas * sd })
    }
}

/// Accumulator trace `S_t = max(0, S_{t-1} + score_t - k)` with `S_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageState {
    /// `S_1 ..= S_T`.
    pub accumulator: Vec<f64>,
    pub k: f64,
    pub h: f64,
    /// First `t` (1-based, matching `S_t`) with `S_t > h`.
    pub triggered_at: Option<usize>,
}

/// Runs the recursion over all windows without resetting after a trigger.
pub fn page_cusum(scores: &[f64], k: f64, h: f64) -> PageState {
    let mut s = 0.0f64;
    let mut triggered_at = None;
    let accumulator = scores
        .iter()
        .enumerate()
        .map(|(i, x)| {
            s = (s + x - k).max(0.0);
            if triggered_at.is_none() && s > h {
                triggered_at = Some(i + 1);
            }
            s
        })
        .collect();
    PageState { accumulator, k, h, triggered_at }
}

// ---------------------------------------------------------------------------
// SPRT
// ---------------------------------------------------------------------------

pub const DEFAULT_SPRT_ALPHA: f64 = 0.05;
pub const DEFAULT_SPRT_BETA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaldDecision {
    Healthy,
    Fault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprtTrace {
    /// Cumulative log-likelihood ratio at each window before any restart.
    pub cumulative: Vec<f64>,
    /// Boundary crossings as `(window index, decision)`.
    pub decisions: Vec<(usize, WaldDecision)>,
    /// Majority vote over the completed decisions; no decisions means healthy.
    pub fault_declared: bool,
}

/// Wald boundaries `(log A, log B)` for error rates `alpha` and `beta`.
pub fn sprt_bounds(alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0 && alpha + beta < 1.0) {
        return Err(Error::Config(format!("invalid SPRT error rates alpha={alpha}, beta={beta}")));
    }
    Ok(((beta / (1.0 - alpha)).ln(), ((1.0 - beta) / alpha).ln()))
}

/// SPRT on a sequence of per-window log-likelihood ratios, restarting after each crossing.
pub fn sprt_from_llr(llr: &[f64], alpha: f64, beta: f64) -> Result<SprtTrace> {
    let (log_a, log_b) = sprt_bounds(alpha, beta)?;
    let mut s = 0.0;
    let mut cumulative = Vec::with_capacity(llr.len());
    let mut decisions = Vec::new();
    for (i, l) in llr.iter().enumerate() {
        s += l;
        cumulative.push(s);
        if s >= log_b {
            decisions.push((i, WaldDecision::Fault));
            s = 0.0;
        } else if s <= log_a {
            decisions.push((i, WaldDecision::Healthy));
            s = 0.0;
        }
    }
    let faults = decisions.iter().filter(|(_, d)| *d == WaldDecision::Fault).count();
    Ok(SprtTrace { cumulative, decisions: decisions.clone(), fault_declared: 2 * faults > decisions.len() })
}

/// SPRT on standardized windows using the uniform per-motor mixture LLR.
pub fn sprt_flight(bank: &HypothesisBank, windows_std: &[Vec<f64>], alpha: f64, beta: f64) -> Result<SprtTrace> {
    let llr = windows_std.iter().map(|x| mixture_llr(bank, x)).collect::<Result<Vec<_>>>()?;
    sprt_from_llr(&llr, alpha, beta)
}

// ---------------------------------------------------------------------------
// Autoencoder
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            sizes: vec![90, 64, 32, 64, 90],
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            patience: 10,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub net: Option<Mlp>,
    pub standardizer: Standardizer,
    pub epochs_run: usize,
    pub best_val_loss: f64,
}

fn reconstruction_mse(net: &Mlp, x: &DMatrix<f64>) -> f64 {
    (net.forward(x) - x).norm_squared() / x.len().max(1) as f64
}

impl Autoencoder {
    /// Wraps an existing network; `standardizer` maps raw rows to network inputs.
    pub fn from_net(net: Mlp, standardizer: Standardizer) -> Self {
        Self { net: Some(net), standardizer, epochs_run: 0, best_val_loss: f64::NAN }
    }

    pub fn untrained(dim: usize) -> Self {
        Self { net: None, standardizer: Standardizer::identity(dim), epochs_run: 0, best_val_loss: f64::NAN }
    }

    /// Trains on healthy rows with early stopping on a held-out validation split.
    pub fn train(healthy: &[&[f64]], cfg: &AeConfig) -> Result<Self> {
        let n = healthy.len();
        if n < 10 {
            return Err(Error::InsufficientData(format!("autoencoder needs at least 10 healthy rows, got {n}")));
        }
        let d = healthy[0].len();
        if cfg.sizes.first() != Some(&d) || cfg.sizes.last() != Some(&d) {
            return Err(Error::Dimension { expected: d, got: cfg.sizes.first().copied().unwrap_or(0) });
        }
        let standardizer = Standardizer::fit(healthy)?;
        let z: Vec<Vec<f64>> = healthy.iter().map(|r| standardizer.apply(r)).collect::<Result<_>>()?;
        let x = rows_to_matrix(&z);

        let mut rng: Rng = rng_from_seed(cfg.seed);
        let order = minibatches(n, n, &mut rng).concat();
        let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
        let val = gather_rows(&x, &order[..n_val]);
        let train = gather_rows(&x, &order[n_val..]);

        let mut net = Mlp::new(&cfg.sizes, &mut rng)?;
        let mut opt = Adam::new(&net, AdamConfig { learning_rate: cfg.learning_rate, ..Default::default() });
        let mut best = (reconstruction_mse(&net, &val), net.clone());
        let mut stale = 0;
        let mut epochs_run = 0;
        for epoch in 0..cfg.epochs {
            epochs_run = epoch + 1;
            for batch in minibatches(train.nrows(), cfg.batch_size, &mut rng) {
                let xb = gather_rows(&train, &batch);
                let cache = net.forward_cached(&xb);
                let grad = (&cache.output - &xb) * (2.0 / xb.len() as f64);
                let grads = net.backward(&cache, &grad);
                opt.step(&mut net, &grads);
            }
            let v = reconstruction_mse(&net, &val);
            if !v.is_finite() {
                return Err(Error::Training { epoch: epoch + 1, reason: "validation loss is not finite".into() });
            }
            if v < best.0 {
                best = (v, net.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        log::debug!("autoencoder stopped after {epochs_run} epochs, best validation MSE {:.4}", best.0);
        Ok(Self { net: Some(best.1), standardizer, epochs_run, best_val_loss: best.0 })
    }

    /// Mean squared reconstruction error of one raw feature row.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let net = self.net.as_ref().ok_or_else(|| Error::Config("autoencoder has not been trained".into()))?;
        let z = self.standardizer.apply(x)?;
        if z.len() != net.input_dim() {
            return Err(Error::Dimension { expected: net.input_dim(), got: z.len() });
        }
        Ok(reconstruction_mse(net, &DMatrix::from_row_slice(1, z.len(), &z)))
    }
}

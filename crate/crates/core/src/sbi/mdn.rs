//! Conditional Gaussian mixture density network with diagonal components.
//!
//! Both `x` and `theta` are z-scored internally; densities and samples are
//! reported in the original `theta` units.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Standardizer;
use crate::nn::{gather_rows, minibatches, rows_to_matrix, Adam, AdamConfig, Mlp};
use crate::rng::{rng_from_seed, Rng};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdnConfig {
    pub hidden: Vec<usize>,
    pub components: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MdnConfig {
    fn default() -> Self {
        Self { hidden: vec![128, 128], components: 8, epochs: 150, batch_size: 128, learning_rate: 1e-3, seed: 0 }
    }
}

/// Mixture parameters for one conditioning value, in standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub weights: Vec<f64>,
    /// `K` rows of `T` means.
    pub means: Vec<Vec<f64>>,
    pub scales: Vec<Vec<f64>>,
}

impl Mixture {
    pub fn log_density(&self, t: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.weights.len())
            .map(|k| self.weights[k].ln() + diag_log_normal(t, &self.means[k], &self.scales[k]))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn draw(&self, rng: &mut Rng) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        self.means[k]
            .iter()
            .zip(&self.scales[k])
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

fn diag_log_normal(t: &[f64], mean: &[f64], scale: &[f64]) -> f64 {
    t.iter()
        .zip(mean.iter().zip(scale))
        .map(|(t, (m, s))| {
            let z = (t - m) / s;
            -0.5 * z * z - s.ln() - HALF_LN_2PI
        })
        .sum()
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// Mean NLL over the batch and its gradient with respect to the raw network
/// output `[logits (K) | means (K T) | log-scales (K T)]`.
pub fn mixture_nll_grad(out: &DMatrix<f64>, theta: &DMatrix<f64>, k: usize) -> (f64, DMatrix<f64>) {
    let (b, t_dim) = theta.shape();
    let mut grad = DMatrix::zeros(out.nrows(), out.ncols());
    let mut total = 0.0;
    let mut logp = vec![0.0; k];
    let mut z = vec![0.0; k * t_dim];
    for i in 0..b {
        let logits: Vec<f64> = (0..k).map(|c| out[(i, c)]).collect();
        let lse_a = log_sum_exp(&logits);
        for c in 0..k {
            let mut l = logits[c] - lse_a;
            for j in 0..t_dim {
                let mu = out[(i, k + c * t_dim + j)];
                let s = out[(i, k + k * t_dim + c * t_dim + j)];
                let zz = (theta[(i, j)] - mu) * (-s).exp();
                z[c * t_dim + j] = zz;
                l += -0.5 * zz * zz - s - HALF_LN_2PI;
            }
            logp[c] = l;
        }
        let lse = log_sum_exp(&logp);
        total -= lse;
        for c in 0..k {
            let r = (logp[c] - lse).exp();
            let pi = (logits[c] - lse_a).exp();
            grad[(i, c)] = (pi - r) / b as f64;
            for j in 0..t_dim {
                let zz = z[c * t_dim + j];
                let s = out[(i, k + k * t_dim + c * t_dim + j)];
                grad[(i, k + c * t_dim + j)] = -r * zz * (-s).exp() / b as f64;
                grad[(i, k + k * t_dim + c * t_dim + j)] = r * (1.0 - zz * zz) / b as f64;
            }
        }
    }
    (total / b as f64, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensityNetwork {
    pub net: Mlp,
    pub components: usize,
    pub theta_dim: usize,
    pub x_standardizer: Standardizer,
    pub theta_standardizer: Standardizer,
    /// Mean training NLL (standardized units) after each epoch.
    pub loss_curve: Vec<f64>,
}

impl MixtureDensityNetwork {
    pub fn output_dim(components: usize, theta_dim: usize) -> usize {
        components * (1 + 2 * theta_dim)
    }

    pub fn x_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_curve.last().copied().unwrap_or(f64::NAN)
    }

    pub fn train(thetas: &[Vec<f64>], xs: &[Vec<f64>], cfg: &MdnConfig) -> Result<Self> {
        let n = thetas.len();
        if n != xs.len() {
            return Err(Error::Dimension { expected: n, got: xs.len() });
        }
        if n < 2 || cfg.components == 0 || cfg.epochs == 0 {
            return Err(Error::Config("MDN training needs data, components and epochs".into()));
        }
        let theta_dim = thetas[0].len();
        let x_dim = xs[0].len();
        if thetas.iter().any(|t| t.len() != theta_dim) || xs.iter().any(|x| x.len() != x_dim) {
            return Err(Error::Dimension { expected: x_dim, got: 0 });
        }
        let x_standardizer = Standardizer::fit(&refs(xs))?;
        let theta_standardizer = Standardizer::fit(&refs(thetas))?;
        let xz: Vec<Vec<f64>> = xs.iter().map(|x| x_standardizer.apply(x)).collect::<Result<_>>()?;
        let tz: Vec<Vec<f64>> = thetas.iter().map(|t| theta_standardizer.apply(t)).collect::<Result<_>>()?;
        let (xm, tm) = (rows_to_matrix(&xz), rows_to_matrix(&tz));

        let mut rng = rng_from_seed(cfg.seed);
        let mut sizes = vec![x_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(Self::output_dim(cfg.components, theta_dim));
        let mut net = Mlp::new(&sizes, &mut rng)?;
        // Start from broad, unit-scale components.
        let out = net.layers.last_mut().expect("output layer");
        out.w.scale_mut(0.1);
        let mut opt = Adam::new(&net, AdamConfig { learning_rate: cfg.learning_rate, ..Default::default() });
        let mut loss_curve = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let (mut sum, mut count) = (0.0, 0usize);
            for batch in minibatches(n, cfg.batch_size, &mut rng) {
                let xb = gather_rows(&xm, &batch);
                let tb = gather_rows(&tm, &batch);
                let cache = net.forward_cached(&xb);
                let (loss, grad) = mixture_nll_grad(&cache.output, &tb, cfg.components);
                if !loss.is_finite() {
                    return Err(Error::Training { epoch: epoch + 1, reason: format!("loss is {loss}") });
                }
                let grads = net.backward(&cache, &grad);
                opt.step(&mut net, &grads);
                sum += loss * batch.len() as f64;
                count += batch.len();
            }
            loss_curve.push(sum / count as f64);
        }
        log::debug!("MDN trained: {} epochs, final loss {:.4}", cfg.epochs, loss_curve.last().unwrap_or(&f64::NAN));
        Ok(Self { net, components: cfg.components, theta_dim, x_standardizer, theta_standardizer, loss_curve })
    }

    /// Mixture over standardized theta for one raw `x`.
    pub fn mixture(&self, x: &[f64]) -> Result<Mixture> {
        let z = self.x_standardizer.apply(x)?;
        let out = self.net.forward(&DMatrix::from_row_slice(1, z.len(), &z));
        let (k, t) = (self.components, self.theta_dim);
        let logits: Vec<f64> = (0..k).map(|c| out[(0, c)]).collect();
        let lse = log_sum_exp(&logits);
        Ok(Mixture {
            weights: logits.iter().map(|a| (a - lse).exp()).collect(),
            means: (0..k).map(|c| (0..t).map(|j| out[(0, k + c * t + j)]).collect()).collect(),
            scales: (0..k).map(|c| (0..t).map(|j| out[(0, k + k * t + c * t + j)].exp()).collect()).collect(),
        })
    }

    /// `log p(theta | x)` in original theta units.
    pub fn log_density(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        let t = self.theta_standardizer.apply(theta)?;
        let jac: f64 = self.theta_standardizer.std.iter().map(|s| s.ln()).sum();
        Ok(self.mixture(x)?.log_density(&t) - jac)
    }

    fn unstandardize(&self, t: &[f64]) -> Vec<f64> {
        let st = &self.theta_standardizer;
        t.iter().zip(st.mean.iter().zip(&st.std)).map(|(v, (m, s))| v * s + m).collect()
    }

    /// Draws in original units. With `bounds`, each coordinate is clipped
    /// into its interval. Clipping is monotone, so equal-tailed quantiles
    /// inside the box are those of the unclipped mixture; rejection would
    /// truncate a density that was already fit to bounded targets.
    pub fn sample(&self, x: &[f64], n: usize, bounds: Option<&[(f64, f64)]>, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
        if let Some(b) = bounds.filter(|b| b.len() != self.theta_dim) {
            return Err(Error::Dimension { expected: self.theta_dim, got: b.len() });
        }
        let mix = self.mixture(x)?;
        Ok((0..n)
            .map(|_| {
                let theta = self.unstandardize(&mix.draw(rng));
                match bounds {
                    Some(b) => theta.iter().zip(b).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect(),
                    None => theta,
                }
            })
            .collect())
    }
}

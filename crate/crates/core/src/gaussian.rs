//! Shrinkage-regularised multivariate Gaussian hypothesis models.
//!
//! Covariances are estimated with the Ledoit-Wolf closed-form intensity
//! toward the scaled identity `(tr(S)/D) I`, where `S` is the maximum
//! likelihood (1/N) sample covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::rng::{rng_from_seed, Rng};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Ridge added to every fitted covariance, relative to `max(tr(S)/D, 1)`.
/// Keeps the estimate positive definite when the shrinkage intensity is 0
/// (e.g. N = 2, where every centred outer product equals S).
pub const COVARIANCE_RIDGE: f64 = 1e-9;

/// Result of a Ledoit-Wolf fit.
#[derive(Debug, Clone)]
pub struct LedoitWolf {
    pub mean: DVector<f64>,
    pub sample_covariance: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    pub shrinkage: f64,
}

/// Closed-form Ledoit-Wolf intensity for centred rows `xc` (N x D) with
/// sample covariance `s`.
pub fn ledoit_wolf_intensity(xc: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    let (n, p) = xc.shape();
    let (nf, pf) = (n as f64, p as f64);
    let mu = s.trace() / pf;
    let s_fro2 = s.norm_squared();
    // ||S - mu I||^2 / p
    let d2 = (s_fro2 - 2.0 * mu * s.trace() + pf * mu * mu) / pf;
    // (1/n^2) sum_k ||x_k x_k' - S||^2 / p
    let fourth: f64 = xc.row_iter().map(|r| r.norm_squared().powi(2)).sum::<f64>() / nf;
    let b_bar2 = ((fourth - s_fro2) / (nf * pf)).max(0.0);
    if d2 <= f64::EPSILON * mu.abs().max(f64::MIN_POSITIVE) * mu.abs() {
        // S already equals the target.
        return 1.0;
    }
    (b_bar2.min(d2) / d2).clamp(0.0, 1.0)
}

pub fn ledoit_wolf(x: &DMatrix<f64>) -> Result<LedoitWolf> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 rows to fit a Gaussian, got {n}")));
    }
    if p == 0 {
        return Err(Error::InsufficientData("zero-dimensional data".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gaussian fit input".into()));
    }
    let mean = x.row_mean().transpose();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= mean.transpose();
    }
    let s = xc.tr_mul(&xc) / n as f64;
    let shrinkage = ledoit_wolf_intensity(&xc, &s);
    let mu = s.trace() / p as f64;
    let ridge = COVARIANCE_RIDGE * mu.max(1.0);
    let mut covariance = &s * (1.0 - shrinkage);
    for i in 0..p {
        covariance[(i, i)] += shrinkage * mu + ridge;
    }
    Ok(LedoitWolf { mean, sample_covariance: s, covariance, shrinkage })
}

/// Multivariate normal with cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    shrinkage: f64,
    chol: DMatrix<f64>,
    log_det: f64,
}

/// Serialisable form of [`GaussianModel`]; the factorisation is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDoc {
    pub mean: Vec<f64>,
    /// Row-major.
    pub covariance: Vec<Vec<f64>>,
    pub shrinkage: f64,
}

impl Serialize for GaussianModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = GaussianDoc::deserialize(d)?;
        GaussianModel::from_doc(&doc).map_err(serde::de::Error::custom)
    }
}

impl GaussianModel {
    /// Fits mean and shrinkage covariance to the rows of `x` (N x D).
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let lw = ledoit_wolf(x)?;
        log::debug!("Ledoit-Wolf fit: N={} D={} shrinkage={:.4}", x.nrows(), x.ncols(), lw.shrinkage);
        Self::from_parts(lw.mean, lw.covariance, lw.shrinkage)
    }

    pub fn fit_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension { expected: d, got: bad.len() });
        }
        Self::fit(&DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    pub fn from_parts(mean: DVector<f64>, covariance: DMatrix<f64>, shrinkage: f64) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::Dimension { expected: d, got: covariance.nrows() });
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InsufficientData("covariance is not positive definite".into()))?
            .unpack();
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { mean, covariance, shrinkage, chol, log_det })
    }

    pub fn to_doc(&self) -> GaussianDoc {
        GaussianDoc {
            mean: self.mean.iter().copied().collect(),
            covariance: self.covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
            shrinkage: self.shrinkage,
        }
    }

    pub fn from_doc(doc: &GaussianDoc) -> Result<Self> {
        let d = doc.mean.len();
        if doc.covariance.len() != d || doc.covariance.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension { expected: d, got: doc.covariance.len() });
        }
        let cov = DMatrix::from_fn(d, d, |i, j| doc.covariance[i][j]);
        Self::from_parts(DVector::from_vec(doc.mean.clone()), cov, doc.shrinkage)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `(x - mu)' Sigma^-1 (x - mu)` via forward substitution on the Cholesky factor.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Dimension { expected: d, got: x.len() });
        }
        let mut z: Vec<f64> = x.iter().zip(self.mean.iter()).map(|(a, m)| a - m).collect();
        let l = self.chol.as_slice();
        // Column-major: column j occupies l[j*d .. (j+1)*d].
        for j in 0..d {
            let col = &l[j * d..(j + 1) * d];
            z[j] /= col[j];
            let zj = z[j];
            for i in j + 1..d {
                z[i] -= col[i] * zj;
            }
        }
        Ok(z.iter().map(|v| v * v).sum())
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        let q = self.mahalanobis_sq(x)?;
        Ok(-0.5 * (q + self.log_det + self.dim() as f64 * LN_2PI))
    }

    /// One draw `mu + L z`.
    pub fn draw(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let l = self.chol.as_slice();
        let mut out: Vec<f64> = self.mean.iter().copied().collect();
        for (j, zj) in z.iter().enumerate() {
            let col = &l[j * d..(j + 1) * d];
            for i in j..d {
                out[i] += col[i] * zj;
            }
        }
        out
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }
}

/// Per-feature z-scoring with statistics of the healthy training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 rows to standardise, got {n}")));
        }
        let d = rows[0].len();
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let std = (0..d)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
                if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Self { mean: vec![0.0; d], std: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        Ok(x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect())
    }
}

/// H0 plus one alternative per motor (or a single pooled alternative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisBank {
    pub h0: GaussianModel,
    pub h1: Vec<GaussianModel>,
    pub standardizer: Standardizer,
    /// True when `h1` is a single model fit on all fault rows.
    pub pooled: bool,
}

impl HypothesisBank {
    /// Number of alternatives.
    pub fn motors(&self) -> usize {
        self.h1.len()
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.standardizer.apply(x)
    }

    /// Alternatives fit on standardized rows of the named motor only.
    pub fn fit(features: &FeatureSet, motors: usize) -> Result<Self> {
        Self::fit_inner(features, motors, false)
    }

    /// Ablation: a single alternative fit on all fault rows.
    pub fn fit_pooled(features: &FeatureSet) -> Result<Self> {
        Self::fit_inner(features, features.motors(), true)
    }

    fn fit_inner(features: &FeatureSet, motors: usize, pooled: bool) -> Result<Self> {
        if motors == 0 {
            return Err(Error::Config("motor count must be at least 1".into()));
        }
        let healthy: Vec<&[f64]> = features
            .rows
            .iter()
            .filter(|r| !r.label.is_fault())
            .map(|r| r.values.as_slice())
            .collect();
        if healthy.is_empty() {
            return Err(Error::InsufficientData("no healthy rows for H0".into()));
        }
        let missing: Vec<usize> = (1..=motors)
            .filter(|&m| !features.rows.iter().any(|r| r.label.motor == Some(m)))
            .collect();
        if pooled && missing.len() == motors || !pooled && !missing.is_empty() {
            return Err(Error::MissingClass(missing));
        }
        let standardizer = Standardizer::fit(&healthy)?;
        let z: Vec<(Option<usize>, Vec<f64>)> = features
            .rows
            .iter()
            .map(|r| Ok((r.label.motor, standardizer.apply(&r.values)?)))
            .collect::<Result<_>>()?;
        let fit_where = |pred: &dyn Fn(Option<usize>) -> bool| {
            let rows: Vec<&[f64]> = z.iter().filter(|(m, _)| pred(*m)).map(|(_, v)| v.as_slice()).collect();
            GaussianModel::fit_rows(&rows)
        };
        let h0 = fit_where(&|m| m.is_none())?;
        let h1 = if pooled {
            vec![fit_where(&|m| m.is_some())?]
        } else {
            (1..=motors).map(|k| fit_where(&|m| m == Some(k))).collect::<Result<Vec<_>>>()?
        };
        Ok(Self { h0, h1, standardizer, pooled })
    }
}

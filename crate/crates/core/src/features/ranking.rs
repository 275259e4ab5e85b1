use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRank {
    pub feature: String,
    pub cohens_d: f64,
}

/// |mean1 - mean0| / pooled std; 0 when the pooled std vanishes.
pub fn cohens_d(healthy: &[f64], faulty: &[f64]) -> f64 {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (n0, m0, v0) = stats(healthy);
    let (n1, m1, v1) = stats(faulty);
    let pooled = (((n0 - 1.0) * v0 + (n1 - 1.0) * v1) / (n0 + n1 - 2.0)).sqrt();
    if pooled > 0.0 && pooled.is_finite() {
        (m1 - m0).abs() / pooled
    } else {
        0.0
    }
}

/// Features sorted by descending Cohen's d between the two groups.
pub fn cohens_d_ranking(healthy: &[Vec<f64>], faulty: &[Vec<f64>], names: &[String]) -> Result<Vec<FeatureRank>> {
    if healthy.len() < 2 || faulty.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "Cohen's d needs at least 2 rows per group, got {} healthy and {} faulty",
            healthy.len(),
            faulty.len()
        )));
    }
    let dim = names.len();
    if let Some(bad) = healthy.iter().chain(faulty).find(|r| r.len() != dim) {
        return Err(Error::Dimension { expected: dim, got: bad.len() });
    }
    let column = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let mut ranks: Vec<FeatureRank> = names
        .iter()
        .enumerate()
        .map(|(j, name)| FeatureRank {
            feature: name.clone(),
            cohens_d: cohens_d(&column(healthy, j), &column(faulty, j)),
        })
        .collect();
    ranks.sort_by(|a, b| b.cohens_d.total_cmp(&a.cohens_d));
    Ok(ranks)
}

//! Per-window feature extraction.
//!
//! Each channel contributes four time-domain statistics and eleven spectral
//! statistics, giving 6 x 15 = 90 features per window.

mod ranking;
mod welch;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use ranking::{cohens_d, cohens_d_ranking, FeatureRank};
pub use welch::{welch_psd, PsdEstimate, Welch, SEGMENT_LEN};

use crate::error::{Error, Result};
use crate::ingest::{make_windows, FaultLabel, FlightRecord, Window};
use crate::{CHANNEL_NAMES, N_CHANNELS};

/// Floor inside `ln(band power + EPS)`.
pub const LOG_EPS: f64 = 1e-12;

/// Spectral statistics ignore bins below this frequency.
pub const MIN_SPECTRAL_HZ: f64 = 5.0;

pub const STATS_PER_CHANNEL: usize = 15;
pub const N_TIME_STATS: usize = 4;
pub const N_SPECTRAL_STATS: usize = 11;
pub const N_FEATURES: usize = N_CHANNELS * STATS_PER_CHANNEL;

/// Half-open frequency band `[lo, hi)` in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo && f < self.hi
    }

    fn tag(&self) -> String {
        format!("{}_{}", self.lo, self.hi)
    }
}

pub const DEFAULT_BANDS: [Band; 4] = [
    Band::new(5.0, 30.0),
    Band::new(30.0, 80.0),
    Band::new(80.0, 150.0),
    Band::new(150.0, 250.0),
];

/// Ordered feature names plus the band definitions they were computed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    pub bands: [Band; 4],
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::new(DEFAULT_BANDS)
    }
}

impl FeatureSchema {
    pub fn new(bands: [Band; 4]) -> Self {
        let names = CHANNEL_NAMES
            .iter()
            .flat_map(|ch| Self::stat_names(&bands).into_iter().map(move |s| format!("{ch}_{s}")))
            .collect();
        Self { names, bands }
    }

    /// Statistic names in per-channel order.
    pub fn stat_names(bands: &[Band; 4]) -> Vec<String> {
        let mut s: Vec<String> = ["mean", "std", "rms", "kurtosis"].map(String::from).to_vec();
        s.extend(bands.iter().map(|b| format!("logpow_{}", b.tag())));
        s.extend(bands.iter().map(|b| format!("fracpow_{}", b.tag())));
        s.extend(["centroid", "dominant", "entropy"].map(String::from));
        s
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Columns holding the four time-domain statistics of every channel.
    pub fn time_domain_indices(&self) -> Vec<usize> {
        (0..N_CHANNELS)
            .flat_map(|ch| (0..N_TIME_STATS).map(move |s| ch * STATS_PER_CHANNEL + s))
            .collect()
    }

    /// Hex SHA-256 over names and band edges; guards model/feature compatibility.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.names {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        for b in &self.bands {
            h.update(b.lo.to_le_bytes());
            h.update(b.hi.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.len() != N_FEATURES {
            return Err(Error::Dimension { expected: N_FEATURES, got: self.names.len() });
        }
        let mut sorted = self.names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.names.len() {
            return Err(Error::Config("feature names are not unique".into()));
        }
        Ok(())
    }
}

/// One window's features with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub flight_id: String,
    pub start_index: usize,
    pub label: FaultLabel,
}

/// (mean, population std, rms, excess kurtosis).
pub fn time_features(signal: &[f64]) -> Result<[f64; 4]> {
    if signal.len() < 4 {
        return Err(Error::InsufficientSamples { needed: 4, got: signal.len() });
    }
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let (mut m2, mut m4, mut sq) = (0.0, 0.0, 0.0);
    for &x in signal {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
        sq += x * x;
    }
    m2 /= n;
    m4 /= n;
    let scale = signal.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let degenerate = m2 <= (f64::EPSILON * scale).powi(2);
    let std = if degenerate { 0.0 } else { m2.sqrt() };
    let kurtosis = if degenerate { 0.0 } else { m4 / (m2 * m2) - 3.0 };
    Ok([mean, std, (sq / n).sqrt(), kurtosis])
}

/// Log band powers, fractional band powers, centroid, dominant frequency and
/// spectral entropy, in that order.
pub fn spectral_features(psd: &PsdEstimate, bands: &[Band; 4]) -> [f64; N_SPECTRAL_STATS] {
    let mut out = [0.0; N_SPECTRAL_STATS];
    let band_power: Vec<f64> = bands
        .iter()
        .map(|b| {
            psd.frequencies
                .iter()
                .zip(&psd.power)
                .filter(|(f, _)| b.contains(**f))
                .map(|(_, p)| p)
                .sum()
        })
        .collect();
    for (o, bp) in out.iter_mut().zip(&band_power) {
        *o = (bp + LOG_EPS).ln();
    }

    let upper: Vec<(f64, f64)> = psd
        .frequencies
        .iter()
        .zip(&psd.power)
        .filter(|(f, _)| **f >= MIN_SPECTRAL_HZ)
        .map(|(f, p)| (*f, *p))
        .collect();
    let total: f64 = upper.iter().map(|(_, p)| p).sum();
    if total < LOG_EPS {
        return out;
    }
    for (o, bp) in out[4..8].iter_mut().zip(&band_power) {
        *o = bp / total;
    }
    out[8] = upper.iter().map(|(f, p)| f * p).sum::<f64>() / total;
    out[9] = upper
        .iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, &(f, p)| if p > best.1 { (f, p) } else { best })
        .0;
    out[10] = -upper
        .iter()
        .map(|(_, p)| p / total)
        .filter(|&q| q > 0.0)
        .map(|q| q * q.ln())
        .sum::<f64>();
    out
}

/// Reusable extractor; holds the FFT plan.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    schema: FeatureSchema,
    welch: Welch,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(FeatureSchema::default())
    }
}

impl FeatureExtractor {
    pub fn new(schema: FeatureSchema) -> Self {
        Self { schema, welch: Welch::default() }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn extract(&self, window: &Window) -> Result<FeatureVector> {
        let mut values = Vec::with_capacity(N_FEATURES);
        for (ch, signal) in window.samples.iter().enumerate() {
            values.extend(time_features(signal)?);
            let psd = self.welch.psd(signal, window.sample_rate_hz)?;
            values.extend(spectral_features(&psd, &self.schema.bands));
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "feature {} of window {}@{} (channel {})",
                    self.schema.names.get(i).map_or("?", String::as_str),
                    window.flight_id,
                    window.start_index,
                    CHANNEL_NAMES[ch]
                )));
            }
        }
        Ok(FeatureVector {
            values,
            flight_id: window.flight_id.clone(),
            start_index: window.start_index,
            label: window.label.clone(),
        })
    }
}

pub fn extract_features(window: &Window, schema: &FeatureSchema) -> Result<FeatureVector> {
    FeatureExtractor::new(schema.clone()).extract(window)
}

/// A labelled feature matrix, one row per window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub schema: FeatureSchema,
    pub rows: Vec<FeatureVector>,
}

impl FeatureSet {
    pub fn new(schema: FeatureSchema, rows: Vec<FeatureVector>) -> Self {
        Self { schema, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn motors(&self) -> usize {
        self.rows.first().map_or(0, |r| r.label.motors)
    }

    /// Windows of all flights, in flight order then window order.
    pub fn extract(flights: &[FlightRecord], window_length: usize, stride: usize) -> Result<Self> {
        let extractor = FeatureExtractor::default();
        let mut windows = Vec::new();
        for f in flights {
            windows.extend(make_windows(f, window_length, stride)?);
        }
        let rows = crate::eval::par_map(&windows, |w| extractor.extract(w))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { schema: extractor.schema, rows })
    }

    /// Keeps only the given columns; the schema names follow.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let names = columns.iter().map(|&c| self.schema.names[c].clone()).collect();
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureVector { values: columns.iter().map(|&c| r.values[c]).collect(), ..r.clone() })
            .collect();
        Self { schema: FeatureSchema { names, bands: self.schema.bands }, rows }
    }

    pub fn filter(&self, mut keep: impl FnMut(&FeatureVector) -> bool) -> Self {
        Self { schema: self.schema.clone(), rows: self.rows.iter().filter(|r| keep(r)).cloned().collect() }
    }

    pub fn flight_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for r in &self.rows {
            if ids.last() != Some(&r.flight_id) && !ids.contains(&r.flight_id) {
                ids.push(r.flight_id.clone());
            }
        }
        ids
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = vec!["flight_id", "start_index", "severity", "motor", "motors"];
        header.extend(self.schema.names.iter().map(String::as_str));
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.flight_id.clone(),
                r.start_index.to_string(),
                format!("{}", r.label.severity),
                r.label.motor.map(|m| m.to_string()).unwrap_or_default(),
                r.label.motors.to_string(),
            ];
            rec.extend(r.values.iter().map(|v| format!("{v}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a feature CSV; the header must match `schema` exactly.
    pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().skip(5).collect();
        if names.len() != schema.names.len() || names.iter().zip(&schema.names).any(|(a, b)| a != b) {
            return Err(Error::Compatibility("feature CSV header does not match the feature schema".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |j: usize| rec.get(j).unwrap_or("");
            let num = |j: usize| -> Result<f64> {
                field(j).parse::<f64>().map_err(|_| Error::Parse {
                    row: i + 1,
                    column: headers.get(j).unwrap_or("?").to_string(),
                    value: field(j).to_string(),
                })
            };
            let motor = match field(3) {
                "" => None,
                s => Some(s.parse::<usize>().map_err(|_| Error::Parse {
                    row: i + 1,
                    column: "motor".into(),
                    value: s.to_string(),
                })?),
            };
            let label = FaultLabel { severity: num(2)?, motor, motors: num(4)? as usize };
            let values = (5..5 + schema.names.len()).map(num).collect::<Result<Vec<_>>>()?;
            rows.push(FeatureVector {
                values,
                flight_id: field(0).to_string(),
                start_index: num(1)? as usize,
                label,
            });
        }
        Ok(Self { schema: schema.clone(), rows })
    }
}

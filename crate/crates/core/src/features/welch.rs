//! Welch power spectral density.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Welch segment length in samples.
pub const SEGMENT_LEN: usize = 256;

/// One-sided PSD on a uniform frequency grid from 0 to Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
}

impl PsdEstimate {
    pub fn bin_width(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0) - self.frequencies[0]
    }

    /// Integral of the density over frequency.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.bin_width()
    }
}

/// Welch estimator with a cached FFT plan: Hann taper, 50% overlap,
/// per-segment mean removal, density scaling.
#[derive(Clone)]
pub struct Welch {
    segment_len: usize,
    fft: Arc<dyn Fft<f64>>,
    taper: Vec<f64>,
    taper_energy: f64,
}

impl std::fmt::Debug for Welch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Welch").field("segment_len", &self.segment_len).finish()
    }
}

impl Default for Welch {
    fn default() -> Self {
        Self::new(SEGMENT_LEN)
    }
}

impl Welch {
    pub fn new(segment_len: usize) -> Self {
        assert!(segment_len >= 2 && segment_len.is_multiple_of(2), "segment length must be even");
        let fft = FftPlanner::new().plan_fft_forward(segment_len);
        // Periodic Hann.
        let taper: Vec<f64> = (0..segment_len)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / segment_len as f64).cos())
            .collect();
        let taper_energy = taper.iter().map(|w| w * w).sum();
        Self { segment_len, fft, taper, taper_energy }
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    pub fn psd(&self, signal: &[f64], sample_rate_hz: f64) -> Result<PsdEstimate> {
        let seg = self.segment_len;
        if signal.len() < seg {
            return Err(Error::InsufficientSamples { needed: seg, got: signal.len() });
        }
        let step = seg / 2;
        let n_segments = (signal.len() - seg) / step + 1;
        let n_bins = seg / 2 + 1;
        let mut acc = vec![0.0; n_bins];
        let mut buf = vec![Complex::new(0.0, 0.0); seg];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for s in 0..n_segments {
            let chunk = &signal[s * step..s * step + seg];
            let mean = chunk.iter().sum::<f64>() / seg as f64;
            for ((b, &x), &w) in buf.iter_mut().zip(chunk).zip(&self.taper) {
                *b = Complex::new((x - mean) * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (a, b) in acc.iter_mut().zip(&buf[..n_bins]) {
                *a += b.norm_sqr();
            }
        }
        let scale = 1.0 / (sample_rate_hz * self.taper_energy * n_segments as f64);
        let power = acc
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let one_sided = if k == 0 || k == n_bins - 1 { 1.0 } else { 2.0 };
                p * scale * one_sided
            })
            .collect();
        let frequencies = (0..n_bins).map(|k| k as f64 * sample_rate_hz / seg as f64).collect();
        Ok(PsdEstimate { frequencies, power })
    }
}

/// Welch PSD with 256-sample segments.
pub fn welch_psd(signal: &[f64], sample_rate_hz: f64) -> Result<PsdEstimate> {
    Welch::default().psd(signal, sample_rate_hz)
}

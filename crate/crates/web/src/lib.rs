//! WebAssembly bindings for the browser demo.
//!
//! The demo logic lives in plain Rust functions so it can be tested
//! natively; the `wasm` module only converts types and errors.

use serde::Serialize;

use propfault::cls::{build_toy_ensemble, cls_detect, uniform_weights, ClsResult, ToyEnsemble};
use propfault::detector::{composite_q, ema_smooth};
use propfault::features::{welch_psd, FeatureSet};
use propfault::gaussian::HypothesisBank;
use propfault::ingest::FlightRecord;
use propfault::synth::{generate_corpus, generate_flight, CorpusSpec, SynthConfig};
use propfault::{Result, CHANNEL_NAMES};

pub const MOTORS: usize = 6;
pub const DEMO_DURATION_S: f64 = 30.0;
const DEMO_TOYS: usize = 2000;

fn demo_flight(severity: f64, motor: usize, seed: u64, duration_s: f64) -> Result<FlightRecord> {
    let mut cfg = SynthConfig::healthy("demo", MOTORS, seed);
    cfg.duration_s = duration_s;
    if severity > 0.0 {
        cfg = cfg.with_fault(severity, motor);
    }
    generate_flight(&cfg)
}

#[derive(Debug, Serialize)]
pub struct Spectrum {
    pub channel: String,
    pub frequencies: Vec<f64>,
    pub healthy: Vec<f64>,
    pub fault: Vec<f64>,
}

/// Welch spectra of one channel for a healthy flight and the same flight
/// with a damaged blade on `motor`.
pub fn spectrum(severity: f64, motor: usize, channel: usize, seed: u64) -> Result<Spectrum> {
    if channel >= CHANNEL_NAMES.len() {
        return Err(propfault::Error::Config(format!("channel {channel} out of range")));
    }
    let healthy = demo_flight(0.0, motor, seed, 10.0)?;
    let fault = demo_flight(severity, motor, seed, 10.0)?;
    let h = welch_psd(&healthy.channels[channel], healthy.sample_rate_hz)?;
    let f = welch_psd(&fault.channels[channel], fault.sample_rate_hz)?;
    Ok(Spectrum { channel: CHANNEL_NAMES[channel].to_string(), frequencies: h.frequencies, healthy: h.power, fault: f.power })
}

#[derive(Debug, Serialize)]
pub struct Scan {
    pub q: Vec<f64>,
    pub motor: Vec<usize>,
    pub times_s: Vec<f64>,
}

/// A detector fitted on a small synthetic hexarotor corpus.
pub struct DemoCore {
    pub bank: HypothesisBank,
    pub ensemble: ToyEnsemble,
}

impl DemoCore {
    pub fn fit(seed: u64) -> Result<Self> {
        let spec = CorpusSpec {
            n_healthy: 4,
            n_fault_per_severity: MOTORS,
            duration_s: DEMO_DURATION_S,
            ..CorpusSpec::standard(seed)
        };
        let features = FeatureSet::extract(&generate_corpus(&spec)?, 500, 250)?;
        let bank = HypothesisBank::fit(&features, MOTORS)?;
        let ensemble = build_toy_ensemble(&bank, &uniform_weights(MOTORS), DEMO_TOYS, seed)?;
        Ok(Self { bank, ensemble })
    }

    /// Raw composite statistic over a fresh flight.
    pub fn scan(&self, severity: f64, motor: usize, seed: u64) -> Result<Scan> {
        let flight = demo_flight(severity, motor, seed, DEMO_DURATION_S)?;
        let fs = FeatureSet::extract(&[flight], 500, 250)?;
        let mut out = Scan { q: Vec::new(), motor: Vec::new(), times_s: Vec::new() };
        for row in &fs.rows {
            let (q, m) = composite_q(&self.bank, &self.bank.standardize(&row.values)?)?;
            out.q.push(q);
            out.motor.push(m);
            out.times_s.push(row.start_index as f64 / propfault::synth::DEFAULT_SAMPLE_RATE_HZ);
        }
        Ok(out)
    }

    pub fn cls(&self, q_obs: f64, alpha_det: f64) -> Result<ClsResult> {
        cls_detect(&self.ensemble, q_obs, alpha_det)
    }
}

pub fn smooth(q: &[f64], alpha: f64) -> Result<Vec<f64>> {
    ema_smooth(q, alpha)
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    fn js(e: impl std::fmt::Display) -> JsError {
        JsError::new(&e.to_string())
    }

    fn json<T: serde::Serialize>(v: &T) -> Result<String, JsError> {
        serde_json::to_string(v).map_err(js)
    }

    /// JSON `{channel, frequencies, healthy, fault}`.
    #[wasm_bindgen]
    pub fn spectrum(severity: f64, motor: usize, channel: usize, seed: u32) -> Result<String, JsError> {
        json(&super::spectrum(severity, motor, channel, seed as u64).map_err(js)?)
    }

    #[wasm_bindgen]
    pub fn ema(q: &[f64], alpha: f64) -> Result<Vec<f64>, JsError> {
        super::smooth(q, alpha).map_err(js)
    }

    #[wasm_bindgen]
    pub struct Demo(super::DemoCore);

    #[wasm_bindgen]
    impl Demo {
        #[wasm_bindgen(constructor)]
        pub fn new(seed: u32) -> Result<Demo, JsError> {
            super::DemoCore::fit(seed as u64).map(Demo).map_err(js)
        }

        /// JSON `{q, motor, times_s}`.
        pub fn scan(&self, severity: f64, motor: usize, seed: u32) -> Result<String, JsError> {
            json(&self.0.scan(severity, motor, seed as u64).map_err(js)?)
        }

        /// JSON `{q_obs, p_b, p_sb, cls_det, detected}`.
        pub fn cls(&self, q_obs: f64, alpha_det: f64) -> Result<String, JsError> {
            json(&self.0.cls(q_obs, alpha_det).map_err(js)?)
        }
    }
}

//! Statistical fault detection for multirotor propeller damage.
//!
//! The crate is organised as a pipeline:
//!
//! * [`ingest`] parses flight logs and slices them into windows,
//! * [`features`] turns every window into a 90-dimensional feature vector,
//! * [`gaussian`] fits shrinkage-regularised Gaussian hypothesis models,
//! * [`detector`] runs the composite likelihood-ratio scan with EMA smoothing,
//! * [`cls`] calibrates detections against toy Monte Carlo ensembles,
//! * [`sbi`] estimates posteriors over fault severity and motor identity,
//! * [`baselines`] holds the comparison detectors,
//! * [`synth`] generates synthetic multirotor flights with blade faults,
//! * [`eval`] runs leave-one-flight-out evaluation and writes reports,
//! * [`monitor`] and [`persist`] store fitted detectors and score new flights.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cls;
pub mod config;
pub mod detector;
pub mod error;
pub mod eval;
pub mod features;
pub mod gaussian;
pub mod ingest;
pub mod monitor;
pub mod nn;
pub mod persist;
pub mod rng;
pub mod sbi;
pub mod synth;

pub use error::{Error, ErrorClass, Result};

/// Number of IMU channels (three accelerometer and three gyroscope axes).
pub const N_CHANNELS: usize = 6;

/// Canonical channel names, in storage order.
pub const CHANNEL_NAMES: [&str; N_CHANNELS] = ["acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z"];

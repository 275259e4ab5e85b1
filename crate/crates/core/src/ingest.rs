//! Flight log ingestion and windowing.
//!
//! CSV is the canonical on-disk format. Dataset-specific layouts are
//! handled by [`ColumnMap`] presets rather than dedicated parsers.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CHANNEL_NAMES, N_CHANNELS};

/// Largest blade damage fraction a label may carry.
pub const MAX_SEVERITY: f64 = 0.12;

/// Maximum tolerated relative deviation of a timestamp delta from the median.
pub const MAX_TIMESTAMP_JITTER: f64 = 0.2;

/// Ground-truth fault label of a flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultLabel {
    /// Blade damage fraction, 0 for a healthy flight.
    pub severity: f64,
    /// Faulty motor, 1-based. `None` iff the flight is healthy.
    pub motor: Option<usize>,
    /// Number of motors on the airframe.
    pub motors: usize,
}

impl FaultLabel {
    pub fn healthy(motors: usize) -> Self {
        Self { severity: 0.0, motor: None, motors }
    }

    pub fn fault(severity: f64, motor: usize, motors: usize) -> Result<Self> {
        let label = Self { severity, motor: Some(motor), motors };
        label.validate()?;
        Ok(label)
    }

    pub fn is_fault(&self) -> bool {
        self.motor.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.motors == 0 {
            return Err(Error::Label("motor count must be at least 1".into()));
        }
        if !(0.0..=MAX_SEVERITY).contains(&self.severity) {
            return Err(Error::Label(format!(
                "severity {} outside [0, {MAX_SEVERITY}]",
                self.severity
            )));
        }
        match self.motor {
            None if self.severity != 0.0 => Err(Error::Label(format!(
                "severity {} given without a faulty motor",
                self.severity
            ))),
            Some(_) if self.severity == 0.0 => {
                Err(Error::Label("faulty motor given with zero severity".into()))
            }
            Some(m) if m == 0 || m > self.motors => Err(Error::Label(format!(
                "motor {m} outside [1, {}]",
                self.motors
            ))),
            _ => Ok(()),
        }
    }
}

/// Six-channel IMU time series of one flight.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightRecord {
    pub flight_id: String,
    pub sample_rate_hz: f64,
    /// `acc_x, acc_y, acc_z, gyr_x, gyr_y, gyr_z`, all of equal length.
    pub channels: [Vec<f64>; N_CHANNELS],
    pub label: FaultLabel,
}

impl FlightRecord {
    pub fn new(
        flight_id: impl Into<String>,
        sample_rate_hz: f64,
        channels: [Vec<f64>; N_CHANNELS],
        label: FaultLabel,
    ) -> Result<Self> {
        let record = Self { flight_id: flight_id.into(), sample_rate_hz, channels, label };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        let len = self.channels[0].len();
        if len == 0 {
            return Err(Error::ShortFlight { len: 0, needed: 1 });
        }
        if let Some(i) = self.channels.iter().position(|c| c.len() != len) {
            return Err(Error::Alignment(format!(
                "channel {} has {} samples, expected {len}",
                CHANNEL_NAMES[i],
                self.channels[i].len()
            )));
        }
        self.label.validate()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A fixed-length slice of a flight.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub flight_id: String,
    pub start_index: usize,
    pub sample_rate_hz: f64,
    pub samples: [Vec<f64>; N_CHANNELS],
    pub label: FaultLabel,
}

impl Window {
    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Maps CSV columns onto the six canonical channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: Option<String>,
    /// Seconds per timestamp unit (1e-6 for microsecond clocks).
    pub timestamp_scale: f64,
    pub channels: [String; N_CHANNELS],
}

impl ColumnMap {
    /// Layout written by [`write_flight_csv`].
    pub fn canonical() -> Self {
        Self {
            timestamp: Some("timestamp".into()),
            timestamp_scale: 1.0,
            channels: CHANNEL_NAMES.map(String::from),
        }
    }

    /// ArduPilot `IMU` message exported to CSV (`TimeUS`, `AccX`, ..., `GyrZ`).
    pub fn ardupilot() -> Self {
        Self {
            timestamp: Some("TimeUS".into()),
            timestamp_scale: 1e-6,
            channels: ["AccX", "AccY", "AccZ", "GyrX", "GyrY", "GyrZ"].map(String::from),
        }
    }

    /// Per-arm IMU export without a clock column; the sample rate comes from config.
    pub fn arm_imu() -> Self {
        Self {
            timestamp: None,
            timestamp_scale: 1.0,
            channels: ["ax", "ay", "az", "gx", "gy", "gz"].map(String::from),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "" | "canonical" => Ok(Self::canonical()),
            "ardupilot" => Ok(Self::ardupilot()),
            "arm_imu" => Ok(Self::arm_imu()),
            other => Err(Error::Config(format!("unknown column preset `{other}`"))),
        }
    }
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self::canonical()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub window_length: usize,
    pub stride: usize,
    /// Used when the CSV has no timestamp column.
    pub sample_rate_hz: Option<f64>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { window_length: 500, stride: 250, sample_rate_hz: None }
    }
}

/// Reads one flight from a CSV file. The flight id is the file stem and the
/// label is healthy; manifest loading overrides both.
pub fn load_flight_csv(path: &Path, schema: &ColumnMap, cfg: &IngestConfig) -> Result<FlightRecord> {
    let file = File::open(path)?;
    let flight_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_flight_csv(file, &flight_id, schema, cfg)
}

pub fn read_flight_csv<R: Read>(
    reader: R,
    flight_id: &str,
    schema: &ColumnMap,
    cfg: &IngestConfig,
) -> Result<FlightRecord> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(name.to_string()))
    };
    let channel_cols = schema
        .channels
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let ts_col = schema.timestamp.as_deref().map(find).transpose()?;

    let mut channels: [Vec<f64>; N_CHANNELS] = Default::default();
    let mut stamps = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_index = i + 1;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = row.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: row_index,
                    column: name.to_string(),
                    value: raw.to_string(),
                })
        };
        for (ch, (&col, name)) in channel_cols.iter().zip(&schema.channels).enumerate() {
            channels[ch].push(cell(col, name)?);
        }
        if let (Some(col), Some(name)) = (ts_col, schema.timestamp.as_deref()) {
            stamps.push(cell(col, name)? * schema.timestamp_scale);
        }
    }

    let len = channels[0].len();
    if len < cfg.window_length.max(1) {
        return Err(Error::ShortFlight { len, needed: cfg.window_length.max(1) });
    }
    let sample_rate_hz = if ts_col.is_some() {
        sample_rate_from_timestamps(&stamps)?
    } else {
        cfg.sample_rate_hz.ok_or_else(|| {
            Error::Config("no timestamp column and no sample_rate_hz fallback configured".into())
        })?
    };
    FlightRecord::new(flight_id, sample_rate_hz, channels, FaultLabel::healthy(1))
}

/// Infers the sample rate from the median timestamp delta (timestamps in seconds).
pub fn sample_rate_from_timestamps(stamps: &[f64]) -> Result<f64> {
    if stamps.len() < 2 {
        return Err(Error::Timestamps("need at least two timestamps".into()));
    }
    let mut deltas: Vec<f64> = stamps.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = deltas.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    if median <= 0.0 {
        return Err(Error::Timestamps(format!("non-increasing timestamps (median delta {median})")));
    }
    deltas.retain(|d| ((d - median) / median).abs() >= MAX_TIMESTAMP_JITTER);
    if let Some(bad) = deltas.first() {
        return Err(Error::Timestamps(format!(
            "non-uniform sampling: delta {bad} deviates from median {median} by more than {}%",
            MAX_TIMESTAMP_JITTER * 100.0
        )));
    }
    Ok(1.0 / median)
}

/// Writes a flight in the canonical CSV layout.
pub fn write_flight_csv<W: Write>(record: &FlightRecord, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp"];
    header.extend(CHANNEL_NAMES);
    wtr.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(N_CHANNELS + 1);
    for i in 0..record.len() {
        row.clear();
        row.push(format!("{}", i as f64 / record.sample_rate_hz));
        row.extend(record.channels.iter().map(|c| format!("{}", c[i])));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Channel-wise mean over several IMUs mounted on the same airframe.
///
/// Identity and label are taken from the first stream.
pub fn average_arm_imus(records: &[FlightRecord]) -> Result<FlightRecord> {
    let first = records
        .first()
        .ok_or_else(|| Error::InsufficientData("no IMU streams to average".into()))?;
    let len = first.len();
    for r in &records[1..] {
        if r.len() != len {
            return Err(Error::Alignment(format!(
                "stream `{}` has {} samples, `{}` has {len}",
                r.flight_id,
                r.len(),
                first.flight_id
            )));
        }
        if (r.sample_rate_hz - first.sample_rate_hz).abs() > 1e-6 * first.sample_rate_hz {
            return Err(Error::Alignment(format!(
                "stream `{}` sampled at {} Hz, `{}` at {} Hz",
                r.flight_id, r.sample_rate_hz, first.flight_id, first.sample_rate_hz
            )));
        }
    }
    let k = records.len() as f64;
    let channels: [Vec<f64>; N_CHANNELS] = std::array::from_fn(|ch| {
        (0..len)
            .map(|i| records.iter().map(|r| r.channels[ch][i]).sum::<f64>() / k)
            .collect()
    });
    FlightRecord::new(first.flight_id.clone(), first.sample_rate_hz, channels, first.label.clone())
}

/// Complete windows starting at `0, stride, 2*stride, ...`.
pub fn make_windows(record: &FlightRecord, window_length: usize, stride: usize) -> Result<Vec<Window>> {
    if window_length == 0 || stride == 0 {
        return Err(Error::Config("window length and stride must be positive".into()));
    }
    let len = record.len();
    if window_length > len {
        return Err(Error::ShortFlight { len, needed: window_length });
    }
    Ok((0..=len - window_length)
        .step_by(stride)
        .map(|start| Window {
            flight_id: record.flight_id.clone(),
            start_index: start,
            sample_rate_hz: record.sample_rate_hz,
            samples: std::array::from_fn(|ch| record.channels[ch][start..start + window_length].to_vec()),
            label: record.label.clone(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// One flight of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub flight_id: String,
    /// Path relative to the manifest directory. Several `;`-separated paths
    /// denote per-arm IMU files that are averaged into one stream.
    pub path: String,
    pub severity: f64,
    pub motor: Option<usize>,
    pub motors: usize,
    pub platform: String,
    #[serde(default)]
    pub columns: String,
}

impl ManifestEntry {
    pub fn label(&self) -> Result<FaultLabel> {
        let label = FaultLabel { severity: self.severity, motor: self.motor, motors: self.motors };
        label.validate().map_err(|e| Error::Config(format!("flight `{}`: {e}", self.flight_id)))?;
        Ok(label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| Error::Config(format!("cannot open manifest {}: {e}", path.display())))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let entries = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestEntry>, _>>()
            .map_err(|e| Error::Config(format!("malformed manifest {}: {e}", path.display())))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self { root, entries };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Config("manifest lists no flights".into()));
        }
        let mut seen = HashSet::new();
        let motors = self.entries[0].motors;
        for e in &self.entries {
            if !seen.insert(e.flight_id.as_str()) {
                return Err(Error::Config(format!("duplicate flight id `{}`", e.flight_id)));
            }
            if e.motors != motors {
                return Err(Error::Config(format!(
                    "flight `{}` declares {} motors, manifest started with {motors}",
                    e.flight_id, e.motors
                )));
            }
            e.label()?;
        }
        Ok(())
    }

    pub fn motors(&self) -> usize {
        self.entries.first().map_or(0, |e| e.motors)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for e in &self.entries {
            wtr.serialize(e)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Loads every flight, averaging multi-IMU entries.
    pub fn load_flights(&self, cfg: &IngestConfig) -> Result<Vec<FlightRecord>> {
        self.entries.iter().map(|e| self.load_entry(e, cfg)).collect()
    }

    pub fn load_entry(&self, entry: &ManifestEntry, cfg: &IngestConfig) -> Result<FlightRecord> {
        let schema = ColumnMap::preset(&entry.columns)?;
        let streams = entry
            .path
            .split(';')
            .map(|p| load_flight_csv(&self.root.join(p.trim()), &schema, cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut record = if streams.len() == 1 {
            streams.into_iter().next().expect("one stream")
        } else {
            average_arm_imus(&streams)?
        };
        record.flight_id = entry.flight_id.clone();
        record.label = entry.label()?;
        Ok(record)
    }
}

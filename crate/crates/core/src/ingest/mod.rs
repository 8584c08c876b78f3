//! External data: forecast records and reference gauge traces, written into
//! the datastore as ordinary series, plus validation of simulated flows
//! against a reference.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::datastore::{Datastore, Point};
use crate::time::{format_iso8601, parse_iso8601, Timestamp};

pub const EXTERNAL_NODE: &str = "ext";
pub const PRECIP_PROB_SENSOR: &str = "precip_prob";
pub const PRECIP_INTENSITY_SENSOR: &str = "precip_mmh";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("no overlap between simulated and reference series")]
    EmptyOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub valid_at: Timestamp,
    pub precip_probability: f64,
    pub intensity_mmh: f64,
    /// How far ahead of issue time the record was made, minutes.
    #[serde(default)]
    pub horizon_min: f64,
}

impl ForecastRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.precip_probability) {
            return Err(format!("probability {} outside [0, 1]", self.precip_probability));
        }
        if !(self.intensity_mmh >= 0.0) || !self.intensity_mmh.is_finite() {
            return Err(format!("intensity {} must be >= 0", self.intensity_mmh));
        }
        Ok(())
    }

    fn points(&self) -> [Point; 2] {
        [
            Point::new(EXTERNAL_NODE, PRECIP_PROB_SENSOR, self.valid_at, self.precip_probability),
            Point::new(EXTERNAL_NODE, PRECIP_INTENSITY_SENSOR, self.valid_at, self.intensity_mmh),
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub written: usize,
    pub rejected: usize,
}

/// Writes valid records as `ext.precip_prob` and `ext.precip_mmh`; invalid
/// ones are skipped and counted.
pub fn ingest_records(records: &[ForecastRecord], store: &Datastore) -> IngestSummary {
    let mut summary = IngestSummary::default();
    let mut points = Vec::with_capacity(records.len() * 2);
    for r in records {
        match r.validate() {
            Ok(()) => points.extend(r.points()),
            Err(e) => {
                log::warn!("forecast record at {} skipped: {e}", r.valid_at);
                summary.rejected += 1;
            }
        }
    }
    summary.written = store.write_points(&points).written;
    summary
}

/// Reads a forecast CSV (`timestamp,probability,intensity_mmh`, ISO-8601 UTC)
/// and ingests it. Malformed rows are skipped and counted.
pub fn ingest_forecast(source: impl Read, store: &Datastore) -> Result<IngestSummary, IngestError> {
    let (records, bad) = read_forecast_csv(source)?;
    let mut summary = ingest_records(&records, store);
    summary.rejected += bad;
    Ok(summary)
}

pub fn read_forecast_csv(source: impl Read) -> Result<(Vec<ForecastRecord>, usize), IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let expected = ["timestamp", "probability", "intensity_mmh"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(IngestError::Row { row: 1, reason: format!("expected header {}", expected.join(",")) });
    }
    let mut records = Vec::new();
    let mut rejected = 0;
    for row in reader.records() {
        let row = row?;
        let parsed = (|| {
            if row.len() != 3 {
                return None;
            }
            Some(ForecastRecord {
                valid_at: parse_iso8601(&row[0])?,
                precip_probability: row[1].parse().ok()?,
                intensity_mmh: row[2].parse().ok()?,
                horizon_min: 0.0,
            })
        })();
        match parsed {
            Some(r) => records.push(r),
            None => rejected += 1,
        }
    }
    Ok((records, rejected))
}

pub fn write_forecast_csv(records: &[ForecastRecord], out: impl Write) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "probability", "intensity_mmh"])?;
    for r in records {
        w.write_record([format_iso8601(r.valid_at), r.precip_probability.to_string(), r.intensity_mmh.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Replayed stream gauge: flow in m³/s at strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGauge {
    pub station_id: String,
    pub series: Vec<(Timestamp, f64)>,
}

impl ReferenceGauge {
    pub fn new(station_id: impl Into<String>, series: Vec<(Timestamp, f64)>) -> Result<Self, IngestError> {
        if let Some(i) = series.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(IngestError::Row { row: i + 3, reason: "timestamps must be strictly increasing".into() });
        }
        Ok(ReferenceGauge { station_id: station_id.into(), series })
    }

    /// Gauge CSV: header `timestamp,flow_cms`, ISO-8601 UTC timestamps.
    pub fn read_csv(station_id: &str, source: impl Read) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["timestamp", "flow_cms"] {
            return Err(IngestError::Row { row: 1, reason: "expected header timestamp,flow_cms".into() });
        }
        let mut series = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let bad = |reason: &str| IngestError::Row { row: i + 2, reason: reason.into() };
            let t = parse_iso8601(&row[0]).ok_or_else(|| bad("bad timestamp"))?;
            let q: f64 = row[1].parse().map_err(|_| bad("bad flow"))?;
            if !(q >= 0.0) || !q.is_finite() {
                return Err(bad("flow must be >= 0"));
            }
            series.push((t, q));
        }
        ReferenceGauge::new(station_id, series)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), IngestError> {
        write_gauge_csv(&self.series, out)
    }

    /// Stores the trace as `<station_id>.flow_cms`.
    pub fn ingest(&self, store: &Datastore) -> usize {
        let pts: Vec<Point> = self.series.iter().map(|&(t, q)| Point::new(&self.station_id, "flow_cms", t, q)).collect();
        store.write_points(&pts).written
    }
}

pub fn write_gauge_csv(series: &[(Timestamp, f64)], out: impl Write) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "flow_cms"])?;
    for &(t, q) in series {
        w.write_record([format_iso8601(t), q.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub rmse: f64,
    /// `(peak_sim - peak_ref) / peak_ref`.
    pub peak_error: f64,
    /// `(vol_sim - vol_ref) / vol_ref`, trapezoidal volumes over the window.
    pub volume_error: f64,
    pub samples: usize,
}

fn interpolate(series: &[(Timestamp, f64)], t: Timestamp) -> Option<f64> {
    let i = series.partition_point(|&(ts, _)| ts < t);
    match (i.checked_sub(1).and_then(|j| series.get(j)), series.get(i)) {
        (_, Some(&(t1, v1))) if t1 == t => Some(v1),
        (Some(&(t0, v0)), Some(&(t1, v1))) => Some(v0 + (v1 - v0) * (t - t0) as f64 / (t1 - t0) as f64),
        _ => None,
    }
}

fn trapezoid(series: &[(Timestamp, f64)]) -> f64 {
    series.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0) as f64 / 1000.0).sum()
}

/// Compares a simulated flow series with a reference on the reference's
/// timestamps inside `[window.0, window.1]`, interpolating the simulation
/// linearly.
pub fn validate_against_reference(
    simulated: &[(Timestamp, f64)],
    reference: &[(Timestamp, f64)],
    window: (Timestamp, Timestamp),
) -> Result<ValidationMetrics, IngestError> {
    let pairs: Vec<(Timestamp, f64, f64)> = reference
        .iter()
        .filter(|(t, _)| (window.0..=window.1).contains(t))
        .filter_map(|&(t, r)| interpolate(simulated, t).map(|s| (t, s, r)))
        .collect();
    if pairs.is_empty() {
        return Err(IngestError::EmptyOverlap);
    }
    let n = pairs.len() as f64;
    let rmse = (pairs.iter().map(|(_, s, r)| (s - r).powi(2)).sum::<f64>() / n).sqrt();
    let peak_sim = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let peak_ref = pairs.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    let sim: Vec<(Timestamp, f64)> = pairs.iter().map(|&(t, s, _)| (t, s)).collect();
    let rf: Vec<(Timestamp, f64)> = pairs.iter().map(|&(t, _, r)| (t, r)).collect();
    let (vs, vr) = (trapezoid(&sim), trapezoid(&rf));
    let rel = |a: f64, b: f64| if b == 0.0 { if a == 0.0 { 0.0 } else { f64::INFINITY } } else { (a - b) / b };
    Ok(ValidationMetrics { rmse, peak_error: rel(peak_sim, peak_ref), volume_error: rel(vs, vr), samples: pairs.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::SeriesKey;

    const H: i64 = 3_600_000;

    #[test]
    fn empty_file_writes_nothing() {
        let ds = Datastore::new();
        let s = ingest_forecast("timestamp,probability,intensity_mmh\n".as_bytes(), &ds).unwrap();
        assert_eq!(s, IngestSummary { written: 0, rejected: 0 });
    }

    #[test]
    fn hourly_day_gives_two_series() {
        let mut csv = String::from("timestamp,probability,intensity_mmh\n");
        for h in 0..24 {
            csv.push_str(&format!("2016-12-02T{h:02}:00:00Z,0.5,1.0\n"));
        }
        let ds = Datastore::new();
        let s = ingest_forecast(csv.as_bytes(), &ds).unwrap();
        assert_eq!(s.written, 48);
        assert_eq!(ds.query_range(&SeriesKey::new("ext", "precip_prob"), 0, i64::MAX).unwrap().len(), 24);
        assert_eq!(ds.query_range(&SeriesKey::new("ext", "precip_mmh"), 0, i64::MAX).unwrap().len(), 24);
    }

    #[test]
    fn malformed_rows_are_counted() {
        let csv = "timestamp,probability,intensity_mmh\n\
                   2016-12-02T00:00:00Z,0.5,1.0\n\
                   yesterday,0.5,1.0\n\
                   2016-12-02T01:00:00Z,1.5,1.0\n\
                   2016-12-02T02:00:00Z,0.2\n";
        let ds = Datastore::new();
        let s = ingest_forecast(csv.as_bytes(), &ds).unwrap();
        assert_eq!(s, IngestSummary { written: 2, rejected: 3 });
    }

    #[test]
    fn reingest_is_idempotent() {
        let csv = "timestamp,probability,intensity_mmh\n2016-12-02T00:00:00Z,0.5,1.0\n";
        let ds = Datastore::new();
        ingest_forecast(csv.as_bytes(), &ds).unwrap();
        let before = ds.snapshot();
        ingest_forecast(csv.as_bytes(), &ds).unwrap();
        assert_eq!(ds.snapshot(), before);
    }

    #[test]
    fn gauge_csv_roundtrip() {
        let g = ReferenceGauge::new("gauge", vec![(0, 0.1), (H, 0.25), (2 * H, 0.5)]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("timestamp,flow_cms\n1970-01-01T00:00:00Z,0.1\n"));
        assert_eq!(ReferenceGauge::read_csv("gauge", buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn gauge_rejects_unordered_times() {
        assert!(ReferenceGauge::new("g", vec![(H, 0.1), (H, 0.2)]).is_err());
    }

    fn hydrograph(shift: i64) -> Vec<(Timestamp, f64)> {
        (0..=48)
            .map(|k| {
                let t = k * H / 2;
                let x = (t - shift) as f64 / H as f64;
                (t, (-(x - 10.0).powi(2) / 8.0).exp())
            })
            .collect()
    }

    #[test]
    fn self_validation_is_exact() {
        let s = hydrograph(0);
        let m = validate_against_reference(&s, &s, (0, 24 * H)).unwrap();
        assert_eq!((m.rmse, m.peak_error, m.volume_error), (0.0, 0.0, 0.0));
    }

    #[test]
    fn shifted_copy_keeps_volume() {
        // shifting a pulse that starts and ends near zero moves no volume across the window
        let fine: Vec<(Timestamp, f64)> = (0..=24 * 60)
            .map(|k| {
                let t = k * 60_000;
                let x = (t - 10 * 60_000) as f64 / H as f64;
                (t, (-(x - 10.0).powi(2) / 8.0).exp())
            })
            .collect();
        let reference = hydrograph(0);
        let m = validate_against_reference(&fine, &reference, (0, 24 * H)).unwrap();
        assert!(m.rmse > 0.0);
        assert!(m.volume_error.abs() < 0.01, "{m:?}");
    }

    #[test]
    fn no_overlap_is_an_error() {
        let s = hydrograph(0);
        let r: Vec<_> = s.iter().map(|&(t, v)| (t + 100 * H, v)).collect();
        assert!(matches!(validate_against_reference(&s, &r, (0, i64::MAX)), Err(IngestError::EmptyOverlap)));
    }
}

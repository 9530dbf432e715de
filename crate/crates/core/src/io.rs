//! CSV formats for raw series and labeled window datasets.
//!
//! Series files: header `timestamp,value`, one row per minute, an empty
//! value field marking a missing point. Timestamps must be strictly
//! increasing; skipped minutes read back as missing points.
//!
//! Dataset files: headerless rows `label,v1,...,v{5k+3}` with label 0
//! (anomaly) or 1 (normal). Values are written with 9 significant digits,
//! which round-trips every tolerance used downstream; rows are
//! re-normalized on load to restore the exact 0/1 extremes.

use crate::model::{joint_len, Dataset, Label, ModelError, TimeSeries, WindowSample};
use std::fs;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

/// Slack allowed on the [0, 1] bound when validating loaded rows.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("line {line}: timestamp {next} does not increase over {prev}")]
    GapError { line: usize, prev: i64, next: i64 },
    #[error("line {line}: row has {got} values, expected {expected}")]
    RowLengthError {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: label '{found}' is not 0 or 1")]
    LabelError { line: usize, found: String },
    #[error("line {line}: {msg}")]
    RangeError { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Write `contents` to `path` atomically (temp file + rename in the same
/// directory).
pub fn atomic_write(path: &Path, contents: &str) -> Result<(), IoError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

/// Serialize a series to the `timestamp,value` format.
pub fn series_to_csv(series: &TimeSeries) -> String {
    let mut out = String::from("timestamp,value\n");
    for (i, v) in series.values().iter().enumerate() {
        let t = series.start() + i as i64;
        match v {
            Some(v) => out.push_str(&format!("{t},{}\n", format_value(*v))),
            None => out.push_str(&format!("{t},\n")),
        }
    }
    out
}

pub fn write_series(path: &Path, series: &TimeSeries) -> Result<(), IoError> {
    atomic_write(path, &series_to_csv(series))
}

/// Parse the `timestamp,value` format. The series id is taken from the
/// file stem.
pub fn read_series(path: &Path) -> Result<TimeSeries, IoError> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    let text = fs::read_to_string(path)?;
    series_from_csv(&text, id)
}

pub fn series_from_csv(text: &str, id: impl Into<String>) -> Result<TimeSeries, IoError> {
    let mut rows: Vec<(i64, Option<f64>)> = Vec::new();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(IoError::ParseError {
        line: 1,
        msg: "empty file".into(),
    })?;
    if header.trim() != "timestamp,value" {
        return Err(IoError::ParseError {
            line: 1,
            msg: format!("bad header '{}'", header.trim()),
        });
    }
    for (i, raw) in lines {
        let line = i + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let (ts, value) = row.split_once(',').ok_or(IoError::ParseError {
            line,
            msg: "expected 'timestamp,value'".into(),
        })?;
        let t: i64 = ts.trim().parse().map_err(|_| IoError::ParseError {
            line,
            msg: format!("bad timestamp '{}'", ts.trim()),
        })?;
        if let Some(&(prev, _)) = rows.last() {
            if t <= prev {
                return Err(IoError::GapError {
                    line,
                    prev,
                    next: t,
                });
            }
        }
        let v = match value.trim() {
            "" => None,
            tok => {
                let v: f64 = tok.parse().map_err(|_| IoError::ParseError {
                    line,
                    msg: format!("bad value '{tok}'"),
                })?;
                if !v.is_finite() {
                    return Err(IoError::ParseError {
                        line,
                        msg: format!("non-finite value '{tok}'"),
                    });
                }
                Some(v)
            }
        };
        rows.push((t, v));
    }
    if rows.is_empty() {
        return Err(IoError::ParseError {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    let start = rows[0].0;
    let end = rows.last().unwrap().0;
    let mut values: Vec<Option<f64>> = vec![None; (end - start + 1) as usize];
    for (t, v) in rows {
        values[(t - start) as usize] = v;
    }
    Ok(TimeSeries::new(id, start, values)?)
}

/// Serialize a labeled dataset to headerless `label,v1,...` rows.
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    for s in dataset.samples() {
        out.push_str(
            &s.label
                .expect("dataset samples are labeled")
                .code()
                .to_string(),
        );
        for v in &s.joint {
            out.push(',');
            out.push_str(&format_value(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), IoError> {
    atomic_write(path, &dataset_to_csv(dataset))
}

pub fn read_dataset(path: &Path, k: u32) -> Result<Dataset, IoError> {
    let text = fs::read_to_string(path)?;
    dataset_from_csv(&text, k)
}

/// Parse dataset rows, validating length, label, and range (with 1e-9
/// slack for serialization rounding) before re-normalizing each row to the
/// exact window invariants.
pub fn dataset_from_csv(text: &str, k: u32) -> Result<Dataset, IoError> {
    let expected = joint_len(k);
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let mut fields = row.split(',');
        let label_tok = fields.next().unwrap_or("").trim();
        let label = label_tok
            .parse::<u8>()
            .ok()
            .and_then(|c| Label::from_code(c).ok())
            .ok_or(IoError::LabelError {
                line,
                found: label_tok.to_string(),
            })?;
        let mut joint = Vec::with_capacity(expected);
        for tok in fields {
            let v: f64 = tok.trim().parse().map_err(|_| IoError::ParseError {
                line,
                msg: format!("bad value '{}'", tok.trim()),
            })?;
            joint.push(v);
        }
        if joint.len() != expected {
            return Err(IoError::RowLengthError {
                line,
                expected,
                got: joint.len(),
            });
        }
        let min = joint.iter().copied().fold(f64::INFINITY, f64::min);
        let max = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min < -RANGE_SLACK || max > 1.0 + RANGE_SLACK {
            return Err(IoError::RangeError {
                line,
                msg: format!("values span [{min}, {max}], outside [0, 1]"),
            });
        }
        let degenerate = max == 0.0 && min == 0.0;
        if !degenerate {
            if min > RANGE_SLACK || max < 1.0 - RANGE_SLACK {
                return Err(IoError::RangeError {
                    line,
                    msg: format!("non-degenerate row must span [0, 1], found [{min}, {max}]"),
                });
            }
            // Undo serialization rounding: restore exact 0/1 extremes.
            for v in &mut joint {
                *v = ((*v - min) / (max - min)).clamp(0.0, 1.0);
            }
        }
        samples.push(WindowSample {
            k,
            joint,
            raw_min: 0.0,
            raw_max: if degenerate { 0.0 } else { 1.0 },
            degenerate,
            source_id: format!("row{line}"),
            pending_timestamp: line as i64,
            label: Some(label),
        });
    }
    Ok(Dataset::new(k, samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windowing::normalize;
    use tempfile::tempdir;

    fn sample(raw: &[f64], k: u32, label: Label) -> WindowSample {
        let (joint, a, b, degenerate) = normalize(raw).unwrap();
        WindowSample {
            k,
            joint,
            raw_min: a,
            raw_max: b,
            degenerate,
            source_id: "t".into(),
            pending_timestamp: 0,
            label: Some(label),
        }
    }

    #[test]
    fn series_round_trip_with_missing_points() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let series = TimeSeries::new(
            "s",
            100,
            vec![Some(1.5), None, Some(-2.25), Some(1.0 / 3.0)],
        )
        .unwrap();
        write_series(&path, &series).unwrap();
        let back = read_series(&path).unwrap();
        assert_eq!(back.start(), 100);
        assert_eq!(back.len(), 4);
        assert_eq!(back.value_at(101), None);
        for t in [100, 102, 103] {
            let orig = series.value_at(t).unwrap();
            let got = back.value_at(t).unwrap();
            assert!((orig - got).abs() <= 1e-8 * orig.abs().max(1.0));
        }
        // Re-serialization is byte-stable at fixed precision.
        assert_eq!(series_to_csv(&back), fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn series_rejects_bad_timestamp() {
        let err = series_from_csv("timestamp,value\n1,1.0\nxyz,2.0\n", "s").unwrap_err();
        match err {
            IoError::ParseError { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn series_rejects_decreasing_timestamps() {
        let err = series_from_csv("timestamp,value\n5,1.0\n4,2.0\n", "s").unwrap_err();
        assert!(matches!(
            err,
            IoError::GapError {
                line: 3,
                prev: 5,
                next: 4
            }
        ));
    }

    #[test]
    fn series_fills_skipped_minutes_as_missing() {
        let s = series_from_csv("timestamp,value\n10,1.0e0\n13,2.0e0\n", "s").unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.value_at(11), None);
        assert_eq!(s.value_at(12), None);
        assert_eq!(s.value_at(13), Some(2.0));
    }

    #[test]
    fn dataset_round_trip() {
        let s1 = sample(&[1.0, 3.0, 5.0, 2.0, 4.0, 0.5, 2.5, 3.5], 1, Label::Normal);
        let s2 = sample(&[7.0; 8], 1, Label::Anomaly); // degenerate
        let s3 = sample(
            &[0.1, 0.9, 0.4, 0.3, 0.7, 0.2, 0.6, 1.0 / 3.0],
            1,
            Label::Anomaly,
        );
        let ds = Dataset::new(1, vec![s1, s2, s3]).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &ds).unwrap();
        let back = read_dataset(&path, 1).unwrap();
        assert_eq!(back.len(), 3);
        for (orig, got) in ds.samples().iter().zip(back.samples()) {
            assert_eq!(orig.label, got.label);
            assert_eq!(orig.degenerate, got.degenerate);
            for (a, b) in orig.joint.iter().zip(&got.joint) {
                assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn dataset_accepts_k180_row_width() {
        let mut raw: Vec<f64> = (0..903).map(|i| (i % 97) as f64).collect();
        raw[0] = -1.0; // ensure unique extremes
        raw[1] = 100.0;
        let s = sample(&raw, 180, Label::Normal);
        let ds = Dataset::new(180, vec![s]).unwrap();
        let text = dataset_to_csv(&ds);
        let first = text.lines().next().unwrap();
        assert_eq!(first.split(',').count(), 904); // label + 903 values
        let back = dataset_from_csv(&text, 180).unwrap();
        assert_eq!(back.len(), 1);
    }

    #[test]
    fn dataset_rejects_wrong_row_length() {
        let err = dataset_from_csv("1,0.0e0,5.0e-1,1.0e0\n", 1).unwrap_err();
        assert!(matches!(
            err,
            IoError::RowLengthError {
                line: 1,
                expected: 8,
                got: 3
            }
        ));
    }

    #[test]
    fn dataset_rejects_bad_label() {
        let row = format!("2{}\n", ",5.0e-1".repeat(8));
        let err = dataset_from_csv(&row, 1).unwrap_err();
        assert!(matches!(err, IoError::LabelError { line: 1, .. }));
    }

    #[test]
    fn dataset_rejects_out_of_range_values() {
        let row = format!("1,0.0e0,2.0e0{}\n", ",5.0e-1".repeat(6));
        let err = dataset_from_csv(&row, 1).unwrap_err();
        assert!(matches!(err, IoError::RangeError { line: 1, .. }));
    }

    #[test]
    fn atomic_write_replaces_existing_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.txt");
        atomic_write(&path, "first").unwrap();
        atomic_write(&path, "second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
        // No temp file left behind.
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

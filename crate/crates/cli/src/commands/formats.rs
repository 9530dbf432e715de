//! Small CSV formats used between commands: ground-truth anomaly lists,
//! predictions, training traces, and embeddings.

use crate::CliError;
use kpidet_core::mlp::TraceRow;
use kpidet_core::model::Label;
use kpidet_core::ts2vec::Embedding;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

/// `id,timestamp` rows mapping each series to its anomalous minutes.
pub fn anomalies_to_csv(per_series: &BTreeMap<String, BTreeSet<i64>>) -> String {
    let mut out = String::from("id,timestamp\n");
    for (id, timestamps) in per_series {
        for t in timestamps {
            let _ = writeln!(out, "{id},{t}");
        }
    }
    out
}

pub fn read_anomalies(path: &Path) -> Result<BTreeMap<String, BTreeSet<i64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "id,timestamp" => {}
        _ => {
            return Err(CliError::Data(format!(
                "{}: expected header 'id,timestamp'",
                path.display()
            )))
        }
    }
    let mut map: BTreeMap<String, BTreeSet<i64>> = BTreeMap::new();
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (id, ts) = line.split_once(',').ok_or_else(|| {
            CliError::Data(format!(
                "{}:{}: expected 'id,timestamp'",
                path.display(),
                i + 1
            ))
        })?;
        let t: i64 = ts.trim().parse().map_err(|_| {
            CliError::Data(format!(
                "{}:{}: bad timestamp '{}'",
                path.display(),
                i + 1,
                ts.trim()
            ))
        })?;
        map.entry(id.trim().to_string()).or_default().insert(t);
    }
    Ok(map)
}

/// One prediction row.
pub struct Prediction {
    pub source_id: String,
    pub pending_timestamp: i64,
    pub label: Label,
    pub p_anomaly: f64,
}

pub fn predictions_to_csv(predictions: &[Prediction]) -> String {
    let mut out = String::from("index,id,timestamp,label,p_anomaly\n");
    for (i, p) in predictions.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{:.6}",
            p.source_id,
            p.pending_timestamp,
            p.label.code(),
            p.p_anomaly
        );
    }
    out
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "index,id,timestamp,label,p_anomaly" => {}
        _ => {
            return Err(CliError::Data(format!(
                "{}: expected prediction header",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::Data(format!(
                "{}:{}: expected 5 fields",
                path.display(),
                i + 1
            )));
        }
        let bad = |what: &str| CliError::Data(format!("{}:{}: bad {what}", path.display(), i + 1));
        rows.push(Prediction {
            source_id: fields[1].to_string(),
            pending_timestamp: fields[2].parse().map_err(|_| bad("timestamp"))?,
            label: fields[3]
                .parse::<u8>()
                .ok()
                .and_then(|c| Label::from_code(c).ok())
                .ok_or_else(|| bad("label"))?,
            p_anomaly: fields[4].parse().map_err(|_| bad("probability"))?,
        });
    }
    Ok(rows)
}

/// Per-epoch training trace; validation columns appear when a validation
/// set was supplied.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let with_val = trace.iter().any(|r| r.val_loss.is_some());
    let mut out = String::from(if with_val {
        "epoch,loss,accuracy,val_loss,val_accuracy\n"
    } else {
        "epoch,loss,accuracy\n"
    });
    for row in trace {
        if with_val {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                row.epoch,
                row.loss,
                row.accuracy,
                row.val_loss.unwrap_or(f64::NAN),
                row.val_accuracy.unwrap_or(f64::NAN)
            );
        } else {
            let _ = writeln!(out, "{},{:.6},{:.6}", row.epoch, row.loss, row.accuracy);
        }
    }
    out
}

/// `id,timestamp,v1..vD` rows of combined hidden-layer vectors.
pub fn embeddings_to_csv(embeddings: &[Embedding]) -> String {
    let dim = embeddings
        .first()
        .map(|e| e.layer1.len() + e.layer2.len())
        .unwrap_or(0);
    let mut out = String::from("id,timestamp");
    for i in 1..=dim {
        let _ = write!(out, ",v{i}");
    }
    out.push('\n');
    for e in embeddings {
        let _ = write!(out, "{},{}", e.source_id, e.pending_timestamp);
        for v in e.combined() {
            let _ = write!(out, ",{v:.9e}");
        }
        out.push('\n');
    }
    out
}

/// Read embeddings back; the layer split is not recorded in the CSV, so
/// the whole vector loads as one combined layer.
pub fn read_embeddings(path: &Path) -> Result<Vec<Embedding>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_start().starts_with("id,timestamp") => {}
        _ => {
            return Err(CliError::Data(format!(
                "{}: expected embeddings header",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or("").to_string();
        let ts: i64 = fields.next().and_then(|t| t.parse().ok()).ok_or_else(|| {
            CliError::Data(format!("{}:{}: bad timestamp", path.display(), i + 1))
        })?;
        let values: Vec<f64> = fields
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Data(format!("{}:{}: bad value", path.display(), i + 1)))?;
        if values.is_empty() {
            return Err(CliError::Data(format!(
                "{}:{}: row has no vector values",
                path.display(),
                i + 1
            )));
        }
        rows.push(Embedding {
            layer1: values,
            layer2: Vec::new(),
            source_id: id,
            pending_timestamp: ts,
        });
    }
    Ok(rows)
}

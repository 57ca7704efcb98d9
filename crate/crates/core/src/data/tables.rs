use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{PredictionRecord, RocCurve, ScoreSet};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

/// Reads `id,prediction,truth[,group]`.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<PredictionRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::data(path, format!("row {}: {e}", i + 2)))?;
        if !rec.prediction.is_finite() || !rec.truth.is_finite() {
            return Err(Error::data(path, format!("row {}: non-finite value", i + 2)));
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::data(path, "no prediction rows"));
    }
    Ok(out)
}

pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["id", "prediction", "truth", "group"])?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            &r.prediction.to_string(),
            &r.truth.to_string(),
            r.group.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `score,label` rows where label is `genuine`/`impostor` (or `1`/`0`).
pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreSet> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(path, e.to_string()))?;
    let mut set = ScoreSet::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(path, format!("row {}: {e}", i + 2)))?;
        let bad = |what: &str| Error::data(path, format!("row {}: {what}", i + 2));
        let score: f64 = rec
            .get(0)
            .ok_or_else(|| bad("missing score"))?
            .parse()
            .map_err(|_| bad("score is not a number"))?;
        match rec.get(1).map(|l| l.to_ascii_lowercase()).as_deref() {
            Some("genuine") | Some("1") => set.genuine.push(score),
            Some("impostor") | Some("0") => set.impostor.push(score),
            _ => return Err(bad("label must be genuine or impostor")),
        }
    }
    set.validate().map_err(|e| Error::data(path, e.to_string()))?;
    Ok(set)
}

pub fn write_roc_csv(path: impl AsRef<Path>, curve: &RocCurve) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["threshold", "fmr", "tmr"])?;
    for p in &curve.points {
        w.write_record([p.threshold.to_string(), p.fmr.to_string(), p.tmr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

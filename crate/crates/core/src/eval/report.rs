use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{
    age_group_accuracy, demographic_slice, mae, minor_adult_accuracy, shift_stats, EstimationShift, GroupMae,
    PredictionRecord, ShiftStats, ADULT_AGE,
};
use super::stats::{t_confidence_interval, ConfidenceInterval};
use crate::bins::AgeGroupBins;
use crate::error::{Error, Result};

/// Aggregated age-estimation metrics for one prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub n: usize,
    pub mae: f64,
    pub age_group_accuracy: f64,
    pub minor_adult_accuracy: f64,
    /// Change against a baseline prediction file, matched by id.
    pub shift: Option<ShiftStats>,
    pub under_ci: Option<ConfidenceInterval>,
    pub over_ci: Option<ConfidenceInterval>,
    pub groups: Vec<GroupMae>,
}

impl EvalReport {
    pub fn from_records(
        label: &str,
        records: &[PredictionRecord],
        bins: &AgeGroupBins,
        baseline: Option<&[PredictionRecord]>,
        level: f64,
    ) -> Result<Self> {
        let pred: Vec<f64> = records.iter().map(|r| r.prediction).collect();
        let truth: Vec<f64> = records.iter().map(|r| r.truth).collect();
        let (mut shift, mut under_ci, mut over_ci) = (None, None, None);
        if let Some(base) = baseline {
            let by_id: HashMap<&str, f64> = base.iter().map(|r| (r.id.as_str(), r.prediction)).collect();
            let (mut before, mut after) = (Vec::new(), Vec::new());
            for r in records {
                if let Some(b) = by_id.get(r.id.as_str()) {
                    before.push(*b);
                    after.push(r.prediction);
                }
            }
            if before.is_empty() {
                return Err(Error::InvalidArgument("no ids shared with the baseline predictions".into()));
            }
            let s = EstimationShift::new(before, after)?;
            let under: Vec<f64> = s.before.iter().zip(&s.after).filter(|(b, a)| a < b).map(|(b, a)| b - a).collect();
            let over: Vec<f64> = s.before.iter().zip(&s.after).filter(|(b, a)| a > b).map(|(b, a)| a - b).collect();
            under_ci = t_confidence_interval(&under, level).ok();
            over_ci = t_confidence_interval(&over, level).ok();
            shift = Some(shift_stats(&s)?);
        }
        Ok(Self {
            label: label.to_string(),
            n: records.len(),
            mae: mae(&pred, &truth)?,
            age_group_accuracy: age_group_accuracy(&pred, &truth, bins)?,
            minor_adult_accuracy: minor_adult_accuracy(&pred, &truth, ADULT_AGE)?,
            shift,
            under_ci,
            over_ci,
            groups: demographic_slice(records),
        })
    }

    /// Flat `(metric, value)` rows in a stable order.
    pub fn metric_rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("n".to_string(), self.n as f64),
            ("mae".into(), self.mae),
            ("age_group_accuracy".into(), self.age_group_accuracy),
            ("minor_adult_accuracy".into(), self.minor_adult_accuracy),
        ];
        if let Some(s) = &self.shift {
            for (name, sum) in [("shift", &s.overall), ("under", &s.under), ("over", &s.over)] {
                rows.push((format!("{name}_count"), sum.count as f64));
                rows.push((format!("{name}_mean"), sum.mean));
                rows.push((format!("{name}_std"), sum.std));
            }
            rows.push(("unchanged_count".into(), s.unchanged as f64));
        }
        for (name, ci) in [("under", &self.under_ci), ("over", &self.over_ci)] {
            if let Some(ci) = ci {
                rows.push((format!("{name}_ci_lo"), ci.lo));
                rows.push((format!("{name}_ci_hi"), ci.hi));
                rows.push((format!("{name}_ci_margin"), ci.margin));
            }
        }
        for g in &self.groups {
            rows.push((format!("group_mae:{}", g.group), g.mae));
            rows.push((format!("group_count:{}", g.group), g.count as f64));
        }
        rows
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_rows(path.as_ref(), &self.metric_rows())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "report {} ({} predictions)", self.label, self.n);
        let _ = writeln!(s, "  MAE                  {:.3}", self.mae);
        let _ = writeln!(s, "  age-group accuracy   {:.2}%", 100.0 * self.age_group_accuracy);
        let _ = writeln!(s, "  minor/adult accuracy {:.2}%", 100.0 * self.minor_adult_accuracy);
        if let Some(sh) = &self.shift {
            let _ = writeln!(
                s,
                "  shift                {:+.3} ± {:.3} (n={})",
                sh.overall.mean, sh.overall.std, sh.overall.count
            );
            let _ = writeln!(
                s,
                "  under-estimation     {:.3} ± {:.3} (n={})",
                sh.under.mean, sh.under.std, sh.under.count
            );
            let _ = writeln!(s, "  over-estimation      {:.3} ± {:.3} (n={})", sh.over.mean, sh.over.std, sh.over.count);
            let _ = writeln!(s, "  unchanged            {}", sh.unchanged);
        }
        for (name, ci) in [("under", &self.under_ci), ("over", &self.over_ci)] {
            if let Some(ci) = ci {
                let _ = writeln!(s, "  {name} CI             [{:.3}, {:.3}] margin {:.3}", ci.lo, ci.hi, ci.margin);
            }
        }
        for g in &self.groups {
            let _ = writeln!(s, "  group {:<14} MAE {:.3} (n={})", g.group, g.mae, g.count);
        }
        s
    }
}

fn write_rows(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "value"])?;
    for (k, v) in rows {
        w.write_record([k.as_str(), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `(metric, value)` rows written by [`EvalReport::write_csv`].
pub fn read_report_rows(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::data(path, format!("row {}: expected metric,value", i + 2));
        let k = rec.get(0).ok_or_else(bad)?;
        let v: f64 = rec.get(1).ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        rows.push((k.to_string(), v));
    }
    Ok(rows)
}

/// Side-by-side table: one `metric` column plus one column per report,
/// rendered as CSV text. Metrics missing from a report are left empty.
pub fn merge_reports(reports: &[(String, Vec<(String, f64)>)]) -> String {
    let mut order: Vec<&str> = Vec::new();
    let mut table: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for (col, (_, rows)) in reports.iter().enumerate() {
        for (k, v) in rows {
            let entry = table.entry(k.as_str()).or_insert_with(|| {
                order.push(k.as_str());
                vec![None; reports.len()]
            });
            entry[col] = Some(*v);
        }
    }
    let mut out = String::from("metric");
    for (label, _) in reports {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for k in order {
        out.push_str(k);
        for v in &table[k] {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bins::default_age_bins;

    fn rec(id: &str, p: f64, t: f64) -> PredictionRecord {
        PredictionRecord {
            id: id.into(),
            prediction: p,
            truth: t,
            group: Some("g".into()),
        }
    }

    #[test]
    fn report_rows_round_trip() {
        let recs = vec![rec("a", 20.0, 22.0), rec("b", 40.0, 35.0), rec("c", 16.0, 19.0)];
        let base = vec![rec("a", 25.0, 22.0), rec("b", 38.0, 35.0), rec("c", 18.0, 19.0)];
        let r = EvalReport::from_records("x", &recs, &default_age_bins(), Some(&base), 0.95).unwrap();
        let s = r.shift.unwrap();
        assert_eq!((s.under.count, s.over.count), (2, 1));
        assert!(r.under_ci.is_some() && r.over_ci.is_none());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        r.write_csv(&p).unwrap();
        assert_eq!(read_report_rows(&p).unwrap(), r.metric_rows());
        let merged = merge_reports(&[("x".into(), r.metric_rows()), ("y".into(), vec![("mae".into(), 1.5)])]);
        assert!(merged.starts_with("metric,x,y\nn,3,\n"));
        assert!(merged.contains("\nmae,"));
        assert!(r.summary().contains("MAE"));
    }
}

//! Long-format metrics CSV: one metric value per row.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use smdp_core::data::format_real;

use crate::error::{HarnessError, Result};

pub const HEADER: &str = "run,seed,algo,dataset,index,metric,value";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run: String,
    pub seed: u64,
    pub algo: String,
    pub dataset: String,
    /// Epoch, evaluation number or test-start index depending on the metric.
    pub index: u64,
    pub metric: String,
    pub value: f64,
}

fn check_field(name: &str, v: &str) -> Result<()> {
    if v.is_empty() || v.contains([',', '\n', '\r', '"']) {
        return Err(HarnessError::Metrics(format!("invalid {name} field {v:?}")));
    }
    Ok(())
}

impl MetricsRow {
    pub fn validate(&self) -> Result<()> {
        check_field("run", &self.run)?;
        check_field("algo", &self.algo)?;
        check_field("dataset", &self.dataset)?;
        check_field("metric", &self.metric)?;
        if !self.value.is_finite() {
            return Err(HarnessError::Metrics(format!(
                "non-finite value for {} in {}",
                self.metric, self.run
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.run,
            self.seed,
            self.algo,
            self.dataset,
            self.index,
            self.metric,
            format_real(self.value)
        )
    }
}

/// Identifies the run a group of rows belongs to.
#[derive(Debug, Clone)]
pub struct RunTag {
    pub run: String,
    pub seed: u64,
    pub algo: String,
    pub dataset: String,
}

impl RunTag {
    pub fn row(&self, index: u64, metric: &str, value: f64) -> MetricsRow {
        MetricsRow {
            run: self.run.clone(),
            seed: self.seed,
            algo: self.algo.clone(),
            dataset: self.dataset.clone(),
            index,
            metric: metric.to_string(),
            value,
        }
    }
}

/// Append-only writer; the file gets the header when created.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    /// Opens `path` for appending, writing the header if the file is new.
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = !path.exists();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        if fresh {
            writeln!(w.out, "{HEADER}").map_err(|e| HarnessError::io(path, e))?;
        }
        Ok(w)
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        row.validate()?;
        writeln!(self.out, "{}", row.to_csv()).map_err(|e| HarnessError::io(&self.path, e))
    }

    pub fn append_all(&mut self, rows: &[MetricsRow]) -> Result<()> {
        rows.iter().try_for_each(|r| self.append(r))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(HarnessError::Metrics(format!("expected header {HEADER:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| HarnessError::Metrics(format!("line {}: {what}", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let row = MetricsRow {
            run: f[0].to_string(),
            seed: f[1].parse().map_err(|_| bad("bad seed"))?,
            algo: f[2].to_string(),
            dataset: f[3].to_string(),
            index: f[4].parse().map_err(|_| bad("bad index"))?,
            metric: f[5].to_string(),
            value: f[6].parse().map_err(|_| bad("bad value"))?,
        };
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_metrics(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag() -> RunTag {
        RunTag {
            run: "offline-sdqn".into(),
            seed: 3,
            algo: "sdqn".into(),
            dataset: "n100-r0.1".into(),
        }
    }

    #[test]
    fn rows_round_trip_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let rows = vec![tag().row(0, "train_loss", 0.1), tag().row(1, "train_loss", -2.5e-7)];
        let mut w = MetricsWriter::open(&path).unwrap();
        w.append_all(&rows[..1]).unwrap();
        w.finish().unwrap();
        let mut w = MetricsWriter::open(&path).unwrap();
        w.append(&rows[1]).unwrap();
        w.finish().unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_metrics(&path).unwrap(), rows);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut w = MetricsWriter::open(&tempfile::tempdir().unwrap().path().join("m.csv")).unwrap();
        assert!(w.append(&tag().row(0, "loss", f64::NAN)).is_err());
        assert!(w.append(&tag().row(0, "a,b", 1.0)).is_err());
        assert!(parse_metrics("run,seed\n").is_err());
        assert!(parse_metrics(&format!("{HEADER}\nr,x,a,d,0,m,1\n")).is_err());
    }
}

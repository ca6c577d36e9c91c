use std::path::Path;

use super::LossReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub iteration: usize,
    pub seed: u64,
    pub name: String,
    pub value: f64,
}

/// Long-format metrics: one `iteration,seed,name,value` row per number.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricRow>,
}

impl MetricsLog {
    pub fn new() -> Self {
        MetricsLog::default()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, iteration: usize, seed: u64, name: impl Into<String>, value: f64) {
        self.rows.push(MetricRow {
            iteration,
            seed,
            name: name.into(),
            value,
        });
    }

    pub fn push_losses(&mut self, seed: u64, report: &LossReport) {
        for (name, v) in &report.losses.0 {
            self.push(report.iteration, seed, name.clone(), *v);
        }
    }

    /// Values of `name` in log order, with their iterations.
    pub fn series(&self, name: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.name == name)
            .map(|r| (r.iteration, r.value))
            .collect()
    }

    /// Distinct metric names in first-seen order.
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.name) {
                out.push(r.name.clone());
            }
        }
        out
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iteration", "seed", "name", "value"]).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                r.seed.to_string(),
                r.name.clone(),
                r.value.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let bytes = self.to_csv_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Appends rows to an existing CSV, writing the header if the file is new.
    pub fn append_csv(&self, path: &Path) -> Result<()> {
        let mut existing = if path.exists() {
            Self::read_csv(path)?
        } else {
            MetricsLog::new()
        };
        existing.rows.extend(self.rows.iter().cloned());
        existing.write_csv(path)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&bytes, path)
    }

    pub fn parse_csv(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().map_err(|e| Error::format(path, e.to_string()))?;
        if header != vec!["iteration", "seed", "name", "value"] {
            return Err(Error::format(path, format!("unexpected header {header:?}")));
        }
        let mut log = MetricsLog::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", line + 2));
            log.push(
                rec[0].parse().map_err(|_| bad("iteration"))?,
                rec[1].parse().map_err(|_| bad("seed"))?,
                rec[2].to_string(),
                rec[3].parse().map_err(|_| bad("value"))?,
            );
        }
        Ok(log)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_every_bit() {
        let mut log = MetricsLog::new();
        log.push(100, 3, "disc_a0", 0.1 + 0.2);
        log.push(100, 3, "gen_dec", -1.0 / 3.0);
        log.push(200, 3, "disc_a0", 1e-300);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        log.write_csv(&path).unwrap();
        assert_eq!(MetricsLog::read_csv(&path).unwrap(), log);
        assert_eq!(log.series("disc_a0"), vec![(100, 0.1 + 0.2), (200, 1e-300)]);
        assert_eq!(log.names(), vec!["disc_a0", "gen_dec"]);
    }

    #[test]
    fn append_adds_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut a = MetricsLog::new();
        a.push(1, 0, "x", 1.0);
        a.append_csv(&path).unwrap();
        a.append_csv(&path).unwrap();
        assert_eq!(MetricsLog::read_csv(&path).unwrap().rows.len(), 2);
    }

    #[test]
    fn wrong_header_rejected() {
        let err = MetricsLog::parse_csv(b"a,b\n1,2\n", Path::new("x.csv")).unwrap_err();
        assert!(err.to_string().contains("header"));
    }
}

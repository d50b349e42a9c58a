//! Per-step training records and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hyper::Stage;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// 1-based step count within the stage.
    pub step: u64,
    pub stage: Stage,
    pub l_id: f64,
    /// Raw center loss, before the α weight.
    pub l_cs: f64,
    /// Masked attribute loss sum, before the λ weight.
    pub l_att: f64,
    pub total: f64,
    pub cmc_rank1_train: Option<f64>,
    /// Seconds since the stage started; not part of the CSV.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

pub const CSV_HEADER: &str = "step,stage,l_id,l_cs,l_att,total,cmc_rank1_train";

impl TrainingLog {
    pub fn push(&mut self, record: LogRecord) {
        debug_assert!(self.records.last().is_none_or(|r| (r.stage, r.step) < (record.stage, record.step)));
        self.records.push(record);
    }

    pub fn extend(&mut self, other: &TrainingLog) {
        for r in &other.records {
            self.push(r.clone());
        }
    }

    /// Logged training rank-1 values with their step.
    pub fn rank1_points(&self) -> Vec<(Stage, u64, f64)> {
        self.records.iter().filter_map(|r| r.cmc_rank1_train.map(|v| (r.stage, r.step, v))).collect()
    }

    pub fn last_rank1(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.cmc_rank1_train)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER.split(','))?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.stage.to_string(),
                r.l_id.to_string(),
                r.l_cs.to_string(),
                r.l_att.to_string(),
                r.total.to_string(),
                r.cmc_rank1_train.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut log = Self::default();
        for row in r.deserialize() {
            let row: CsvRow = row?;
            log.records.push(LogRecord {
                step: row.step,
                stage: Stage::try_from(row.stage)?,
                l_id: row.l_id,
                l_cs: row.l_cs,
                l_att: row.l_att,
                total: row.total,
                cmc_rank1_train: row.cmc_rank1_train,
                wall_time: None,
            });
        }
        Ok(log)
    }
}

#[derive(Deserialize)]
struct CsvRow {
    step: u64,
    stage: u8,
    l_id: f64,
    l_cs: f64,
    l_att: f64,
    total: f64,
    cmc_rank1_train: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(step: u64, rank1: Option<f64>) -> LogRecord {
        LogRecord {
            step,
            stage: Stage::One,
            l_id: 0.1 + step as f64,
            l_cs: 1.0 / 3.0,
            l_att: 0.0,
            total: 2.5e-7,
            cmc_rank1_train: rank1,
            wall_time: Some(0.5),
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let log = TrainingLog { records: vec![record(1, None), record(2, Some(0.75))] };
        log.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(text.contains("\n1,1,1.1,0.3333333333333333,0,0.00000025,\n"));
        let back = TrainingLog::read_csv(&path).unwrap();
        for (a, b) in back.records.iter().zip(&log.records) {
            assert_eq!(LogRecord { wall_time: None, ..b.clone() }, *a);
        }
        assert_eq!(back.last_rank1(), Some(0.75));
    }
}

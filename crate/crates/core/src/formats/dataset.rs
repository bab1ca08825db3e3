use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{FormatError, NumberedLines};
use crate::graph::EntityId;

/// Outlier dissimilarity grade: sibling class, cousin class, far class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    O1,
    O2,
    O3,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::O1, Tier::O2, Tier::O3];
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::O1 => "O1",
            Tier::O2 => "O2",
            Tier::O3 => "O3",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outlier {
    pub tier: Tier,
    pub surface: String,
}

/// One test group as written to `.dataset.jsonl`. Field order is the key order
/// on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub class_id: EntityId,
    pub class_label: String,
    pub language: String,
    pub cluster: Vec<String>,
    pub outliers: Vec<Outlier>,
}

impl DatasetRecord {
    /// Number of test cases (cluster paired with each outlier).
    pub fn test_cases(&self) -> usize {
        self.outliers.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetLimits {
    pub min_cluster: usize,
    pub max_cluster: usize,
    pub max_outliers: usize,
    pub per_tier: usize,
}

impl Default for DatasetLimits {
    fn default() -> Self {
        Self {
            min_cluster: 7,
            max_cluster: 8,
            max_outliers: 6,
            per_tier: 2,
        }
    }
}

/// Check the record invariants, returning the first violated rule.
pub fn validate_record(record: &DatasetRecord, limits: &DatasetLimits) -> Result<(), String> {
    if record.class_id.as_str().is_empty() {
        return Err("empty class_id".into());
    }
    let n = record.cluster.len();
    if n < limits.min_cluster || n > limits.max_cluster {
        return Err(format!(
            "cluster size {n} outside {}..={}",
            limits.min_cluster, limits.max_cluster
        ));
    }
    let m = record.outliers.len();
    if m == 0 || m > limits.max_outliers {
        return Err(format!("outlier count {m} outside 1..={}", limits.max_outliers));
    }
    for tier in Tier::ALL {
        let k = record.outliers.iter().filter(|o| o.tier == tier).count();
        if k > limits.per_tier {
            return Err(format!("{k} outliers in tier {tier}, at most {}", limits.per_tier));
        }
    }
    let mut seen = HashSet::new();
    let surfaces = record.cluster.iter().chain(record.outliers.iter().map(|o| &o.surface));
    for s in surfaces {
        if s.is_empty() {
            return Err("empty surface".into());
        }
        if !seen.insert(s.as_str()) {
            return Err(format!("surface {s:?} appears twice"));
        }
    }
    Ok(())
}

pub fn write_dataset<W: Write>(records: &[DatasetRecord], sink: W) -> Result<(), FormatError> {
    write_dataset_with(records, sink, &DatasetLimits::default())
}

/// One compact JSON object per record, LF-terminated.
pub fn write_dataset_with<W: Write>(
    records: &[DatasetRecord],
    mut sink: W,
    limits: &DatasetLimits,
) -> Result<(), FormatError> {
    for (index, record) in records.iter().enumerate() {
        validate_record(record, limits).map_err(|rule| FormatError::Dataset { index, rule })?;
        let line = serde_json::to_string(record).expect("dataset records always serialize");
        sink.write_all(line.as_bytes())?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(source: R) -> Result<Vec<DatasetRecord>, FormatError> {
    read_dataset_with(source, &DatasetLimits::default())
}

/// Read and validate every record. Record indices in errors are zero-based.
pub fn read_dataset_with<R: BufRead>(source: R, limits: &DatasetLimits) -> Result<Vec<DatasetRecord>, FormatError> {
    let mut out = Vec::new();
    for item in NumberedLines::new(source) {
        let (n, line) = item?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| FormatError::json(n, &e))?;
        validate_record(&record, limits).map_err(|rule| FormatError::Dataset { index: out.len(), rule })?;
        out.push(record);
    }
    Ok(out)
}

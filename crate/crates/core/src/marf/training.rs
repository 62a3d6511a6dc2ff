use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Method};
use super::wal::Wal;
use super::MarfError;

/// Per-speaker reference vectors sharing one extraction method.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    method: Method,
    entries: BTreeMap<String, Vec<Vec<f64>>>,
    version: u64,
}

impl TrainingSet {
    pub fn new(method: Method) -> Self {
        TrainingSet {
            method,
            entries: BTreeMap::new(),
            version: 0,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn entries(&self) -> &BTreeMap<String, Vec<Vec<f64>>> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn check_len(&self, values: &[f64]) -> Result<(), MarfError> {
        if values.len() != self.method.len() {
            return Err(MarfError::DimensionMismatch {
                expected: self.method.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MarfError::Malformed("non-finite feature".into()));
        }
        Ok(())
    }

    fn check(&self, v: &FeatureVector) -> Result<(), MarfError> {
        if v.method != self.method {
            return Err(MarfError::MethodMismatch {
                expected: self.method,
                found: v.method,
            });
        }
        self.check_len(&v.values)
    }

    /// Applies one committed transaction.
    pub(crate) fn apply(&mut self, puts: &[(String, Vec<f64>)]) -> Result<u64, MarfError> {
        for (_, values) in puts {
            self.check_len(values)?;
        }
        for (speaker, values) in puts {
            self.entries.entry(speaker.clone()).or_default().push(values.clone());
        }
        self.version += 1;
        Ok(self.version)
    }
}

/// Adds `vector` under `speaker`. The transaction is logged and flushed
/// before the set changes; a failed log write leaves the set as it was.
pub fn train(set: &mut TrainingSet, speaker: &str, vector: &FeatureVector, wal: &mut Wal) -> Result<u64, MarfError> {
    set.check(vector)?;
    let puts = [(speaker.to_string(), vector.values.clone())];
    wal.append(&puts)?;
    set.apply(&puts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Computed,
    Replicated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub sample_id: String,
    pub speaker_id: String,
    pub distance: f64,
    pub source: Source,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Nearest neighbour over every stored vector. Ties go to the smallest
/// speaker id.
pub fn classify(set: &TrainingSet, vector: &FeatureVector) -> Result<ClassificationResult, MarfError> {
    if set.is_empty() {
        return Err(MarfError::EmptyTrainingSet);
    }
    set.check(vector)?;
    let mut best: Option<(&str, f64)> = None;
    for (speaker, vectors) in &set.entries {
        for v in vectors {
            let d = euclidean(&vector.values, v);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((speaker, d));
            }
        }
    }
    let (speaker, distance) = best.expect("nonempty set");
    Ok(ClassificationResult {
        sample_id: vector.sample_id.clone(),
        speaker_id: speaker.to_string(),
        distance,
        source: Source::Computed,
    })
}

use super::forest::ForestModel;
use super::gbm::GbmModel;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// A trained chain classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClassifierModel {
    Forest(ForestModel),
    Gbm(GbmModel),
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema_version: u32,
    model: ClassifierModel,
}

impl ClassifierModel {
    pub fn n_features(&self) -> usize {
        match self {
            Self::Forest(m) => m.n_features,
            Self::Gbm(m) => m.n_features,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Self::Forest(m) => m.n_classes,
            Self::Gbm(m) => m.n_classes,
        }
    }

    /// Predicted chain probabilities for one draw.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        Ok(match self {
            Self::Forest(m) => m.predict_proba_unchecked(x),
            Self::Gbm(m) => m.predict_proba_unchecked(x),
        })
    }

    /// Most probable chain (0-based); ties go to the lowest index.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        self.predict_proba(x).map(|p| argmax(&p))
    }

    /// Probabilities for each row of a row-major matrix.
    pub fn predict_proba_rows(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let k = self.n_features();
        if x.len() % k != 0 {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: x.len() % k,
            });
        }
        x.chunks(k).map(|row| self.predict_proba(row)).collect()
    }

    /// Summed split improvements per feature, scaled so the largest is 100.
    /// All zeros when no tree ever split.
    pub fn variable_importance(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features()];
        match self {
            Self::Forest(m) => m.trees.iter().for_each(|t| t.accumulate_importance(&mut acc)),
            Self::Gbm(m) => m
                .rounds
                .iter()
                .flatten()
                .for_each(|t| t.accumulate_importance(&mut acc)),
        }
        let max = acc.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            acc.iter_mut().for_each(|v| *v *= 100.0 / max);
        }
        acc
    }

    pub fn to_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(
            writer,
            &ModelDocument {
                schema_version: MODEL_SCHEMA_VERSION,
                model: self.clone(),
            },
        )?;
        Ok(())
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_reader(reader)?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "model schema version {} is not supported (expected {MODEL_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc.model)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

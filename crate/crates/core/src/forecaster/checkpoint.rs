//! JSON checkpoints: config plus every parameter tensor with its shape.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::ForecastModel;
use super::ModelConfig;
use crate::error::{MfrsError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn from_model(model: &ForecastModel) -> Self {
        let mut tensors = Vec::new();
        model.visit(&mut |name, shape, values| {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: shape.to_vec(),
                values: values.to_vec(),
            })
        });
        Self {
            format_version: CHECKPOINT_VERSION,
            config: model.config().clone(),
            tensors,
        }
    }

    /// Rebuilds the model, checking every tensor name and shape against what
    /// the config implies.
    pub fn to_model(&self) -> Result<ForecastModel> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(MfrsError::validation(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        let mut model = ForecastModel::new(self.config.clone(), 0)?;
        let expected = model.param_shapes();
        if expected.len() != self.tensors.len() {
            return Err(MfrsError::Shape {
                what: "checkpoint tensor count",
                expected: expected.len().to_string(),
                actual: self.tensors.len().to_string(),
            });
        }
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            let count: usize = t.shape.iter().product();
            if *name != t.name || *shape != t.shape || count != t.values.len() {
                return Err(MfrsError::validation(format!(
                    "checkpoint tensor {} {:?} ({} values) does not match expected {name} {shape:?}",
                    t.name,
                    t.shape,
                    t.values.len()
                )));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(MfrsError::Numeric {
                    param: t.name.clone(),
                    detail: "non-finite value in checkpoint".into(),
                });
            }
        }
        let mut i = 0;
        model.visit_mut(&mut |_, v| {
            v.copy_from_slice(&self.tensors[i].values);
            i += 1;
        });
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| MfrsError::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| MfrsError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| MfrsError::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

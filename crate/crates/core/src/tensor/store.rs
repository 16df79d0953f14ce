use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, Result, Tensor, TensorError, Var};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    /// Frozen parameters (embedding tables) are never bound as graph leaves
    /// that require gradients and are skipped by the optimizer.
    pub trainable: bool,
    pub grad: Option<Vec<f64>>,
}

/// Named parameters in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: u32,
    params: BTreeMap<String, CheckpointEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            trainable,
            grad: None,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Places a copy of the parameter on `graph`. With `track` set, trainable
    /// parameters become gradient-carrying leaves.
    pub fn bind(&self, graph: &mut Graph, id: ParamId, track: bool) -> Var {
        let p = &self.params[id.0];
        graph.leaf(p.value.clone(), track && p.trainable)
    }

    /// Adds `grad` into the parameter's gradient accumulator.
    pub fn accumulate_grad(&mut self, id: ParamId, grad: &[f64]) -> Result<()> {
        let p = &mut self.params[id.0];
        if grad.len() != p.value.numel() {
            return Err(TensorError::ShapeMismatch {
                kernel: "accumulate_grad",
                left: p.value.shape().to_vec(),
                right: vec![grad.len()],
            });
        }
        let slot = p.grad.get_or_insert_with(|| vec![0.0; grad.len()]);
        for (s, g) in slot.iter_mut().zip(grad) {
            *s += g;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT,
            params: self
                .params
                .iter()
                .map(|p| {
                    (
                        p.name.clone(),
                        CheckpointEntry {
                            shape: p.value.shape().to_vec(),
                            data: p.value.data().to_vec(),
                        },
                    )
                })
                .collect(),
        };
        serde_json::to_string(&file).map_err(|e| TensorError::Checkpoint(e.to_string()))
    }

    /// Overwrites every parameter from a checkpoint. Names and shapes must
    /// match exactly.
    pub fn load_json(&mut self, json: &str) -> Result<()> {
        let file: CheckpointFile =
            serde_json::from_str(json).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(TensorError::Checkpoint(format!(
                "unsupported format {}",
                file.format
            )));
        }
        if file.params.len() != self.params.len() {
            return Err(TensorError::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.params.len(),
                file.params.len()
            )));
        }
        for p in &mut self.params {
            let entry = file
                .params
                .get(&p.name)
                .ok_or_else(|| TensorError::UnknownParam(p.name.clone()))?;
            if entry.shape != p.value.shape() {
                return Err(TensorError::ShapeMismatch {
                    kernel: "checkpoint",
                    left: p.value.shape().to_vec(),
                    right: entry.shape.clone(),
                });
            }
            p.value = Tensor::new(entry.shape.clone(), entry.data.clone())?;
            p.grad = None;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| TensorError::Checkpoint(e.to_string()))
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let json =
            std::fs::read_to_string(path).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        self.load_json(&json)
    }
}

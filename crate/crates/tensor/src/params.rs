use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "unimrp-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn total_size(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(name, t)| CheckpointEntry {
                    name: name.clone(),
                    shape: vec![t.rows(), t.cols()],
                    values: t.data().to_vec(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &file)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Overwrites every registered parameter with the checkpoint's values.
    /// Every parameter must be present with a matching shape; extra entries
    /// in the checkpoint are an error too.
    pub fn load_checkpoint<R: Read>(&mut self, input: R) -> Result<()> {
        let file: CheckpointFile = serde_json::from_reader(input)?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(TensorError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                file.format, file.version
            )));
        }
        let mut seen = vec![false; self.values.len()];
        for entry in file.params {
            let id = self
                .id(&entry.name)
                .ok_or_else(|| TensorError::UnknownParam(entry.name.clone()))?;
            let [r, c] = match entry.shape.as_slice() {
                [r, c] => [*r, *c],
                _ => {
                    return Err(TensorError::Checkpoint(format!(
                        "parameter {} is not rank 2",
                        entry.name
                    )))
                }
            };
            if self.values[id.0].shape() != [r, c] {
                return Err(TensorError::Checkpoint(format!(
                    "parameter {} has shape {:?}, checkpoint has {:?}",
                    entry.name,
                    self.values[id.0].shape(),
                    [r, c]
                )));
            }
            self.values[id.0] = Tensor::from_vec(r, c, entry.values)?;
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(TensorError::Checkpoint(format!(
                "checkpoint lacks parameter {}",
                self.names[missing]
            )));
        }
        Ok(())
    }

    /// Copies values of identically named and shaped parameters from `other`.
    /// Returns how many were copied.
    pub fn copy_matching(&mut self, other: &ParamStore, prefix: &str) -> usize {
        let mut copied = 0;
        for (name, id) in &self.index {
            if !name.starts_with(prefix) {
                continue;
            }
            if let Some(src) = other.id(name) {
                if other.get(src).shape() == self.values[id.0].shape() {
                    self.values[id.0] = other.get(src).clone();
                    copied += 1;
                }
            }
        }
        copied
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    params: Vec<CheckpointEntry>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Per-parameter gradients. `None` means the parameter took no part in the
/// computation, which the optimizer treats differently from a zero gradient.
#[derive(Clone, Debug, Default)]
pub struct ParamGrads {
    grads: Vec<Option<Tensor>>,
}

impl ParamGrads {
    pub fn new(n: usize) -> Self {
        ParamGrads {
            grads: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut Tensor> {
        self.grads.get_mut(id.0).and_then(Option::as_mut)
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(g),
            slot => *slot = Some(g.clone()),
        }
    }

    pub fn accumulate_owned(&mut self, id: ParamId, g: Tensor) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    /// Adds `other` into `self`.
    pub fn merge(&mut self, other: &ParamGrads) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale_assign(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(Tensor::sq_norm)
            .sum::<f64>()
            .sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn has_nonfinite(&self) -> bool {
        self.grads
            .iter()
            .flatten()
            .any(|g| g.data().iter().any(|x| !x.is_finite()))
    }
}

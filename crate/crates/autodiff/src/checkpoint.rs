use serde::{Deserialize, Serialize};

use crate::error::AutodiffError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Flat JSON checkpoint: an architecture descriptor plus named arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<A> {
    pub architecture: A,
    pub tensors: Vec<NamedTensor>,
}

impl<A> Checkpoint<A> {
    pub fn new(architecture: A) -> Self {
        Self {
            architecture,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Looks up `name` and checks it holds `len` values.
    pub fn take(&self, name: &str, len: usize) -> Result<&[f64], AutodiffError> {
        let t = self
            .get(name)
            .ok_or_else(|| AutodiffError::Architecture(format!("missing tensor {name}")))?;
        if t.data.len() != len {
            return Err(AutodiffError::ShapeMismatch {
                expected: len,
                actual: t.data.len(),
            });
        }
        Ok(&t.data)
    }
}

impl<A: Serialize> Checkpoint<A> {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

impl<A: for<'de> Deserialize<'de>> Checkpoint<A> {
    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AutogradError, Graph, Tensor, Var};
use crate::Scalar;

pub const PARAMS_FORMAT: &str = "chaptering-params";
pub const PARAMS_VERSION: u32 = 1;

/// Named parameter tensors, ordered by path.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, path: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(path.into(), t);
    }

    pub fn get(&self, path: &str) -> Result<&Tensor<T>, AutogradError> {
        self.tensors
            .get(path)
            .ok_or_else(|| AutogradError::UnknownParam(path.to_string()))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.tensors.contains_key(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn paths(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Zero tensors with the same paths and shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Adds every tensor to `g` as a trainable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> BTreeMap<String, Var> {
        self.tensors
            .iter()
            .map(|(k, t)| (k.clone(), g.param(t.clone())))
            .collect()
    }

    /// Adds every tensor to `g` as a constant.
    pub fn bind_constant(&self, g: &mut Graph<T>) -> BTreeMap<String, Var> {
        self.tensors
            .iter()
            .map(|(k, t)| (k.clone(), g.constant(t.clone())))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self.tensors.iter().map(|(k, t)| (k.clone(), t.cast())).collect(),
        }
    }

    pub fn to_file(&self) -> ParamsFile {
        ParamsFile {
            format: PARAMS_FORMAT.to_string(),
            version: PARAMS_VERSION,
            params: self
                .tensors
                .iter()
                .map(|(k, t)| {
                    (
                        k.clone(),
                        StoredTensor {
                            shape: t.shape().to_vec(),
                            data: t.data().iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn from_file(file: &ParamsFile) -> Result<Self, AutogradError> {
        if file.format != PARAMS_FORMAT {
            return Err(AutogradError::Format(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version != PARAMS_VERSION {
            return Err(AutogradError::Format(format!("unsupported version {}", file.version)));
        }
        let mut store = Self::new();
        for (k, st) in &file.params {
            let data = st
                .data
                .iter()
                .map(|&x| T::from_f64(x).ok_or(AutogradError::NonFinite("parameter file")))
                .collect::<Result<Vec<T>, _>>()?;
            store.insert(k.clone(), Tensor::new(st.shape.clone(), data)?);
        }
        Ok(store)
    }
}

impl<T: Scalar> FromIterator<(String, Tensor<T>)> for ParamStore<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        Self {
            tensors: iter.into_iter().collect(),
        }
    }
}

/// Serialized form: versioned header plus `path -> {shape, data}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub format: String,
    pub version: u32,
    pub params: BTreeMap<String, StoredTensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

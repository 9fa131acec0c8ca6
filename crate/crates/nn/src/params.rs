//! Named parameter storage and the JSON parameter archive shared by every
//! checkpoint format in the workspace.

use crate::graph::{Graph, VarId};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajmia_core::Scalar;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive entry {name}: shape {shape:?} holds {expected} values, found {got}")]
    ShapeMismatch { name: String, shape: Vec<usize>, expected: usize, got: usize },
}

/// Handle to one tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// A flat, named collection of parameter tensors.
#[derive(Clone, Debug)]
pub struct ParamSet<F: Scalar> {
    names: Vec<String>,
    values: Vec<ArrayD<F>>,
}

impl<F: Scalar> Default for ParamSet<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamSet<F> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<F>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<F> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<F> {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Inserts every tensor into `graph` (trainable or frozen) and returns
    /// the binding used to route gradients back.
    pub fn bind(&self, graph: &mut Graph<F>, trainable: bool) -> Bound {
        let vars = self
            .values
            .iter()
            .map(|v| {
                if trainable {
                    graph.trainable(v.clone())
                } else {
                    graph.constant(v.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    pub fn to_archive(&self) -> ParamArchive {
        ParamArchive {
            entries: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(name, value)| ParamEntry {
                    name: name.clone(),
                    shape: value.shape().to_vec(),
                    data: value.iter().map(|x| x.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_archive(archive: &ParamArchive) -> Result<Self, ArchiveError> {
        let mut set = Self::new();
        for entry in &archive.entries {
            let expected: usize = entry.shape.iter().product();
            if expected != entry.data.len() {
                return Err(ArchiveError::ShapeMismatch {
                    name: entry.name.clone(),
                    shape: entry.shape.clone(),
                    expected,
                    got: entry.data.len(),
                });
            }
            let data: Vec<F> = entry.data.iter().map(|&x| F::of_f64(x)).collect();
            let value = ArrayD::from_shape_vec(IxDyn(&entry.shape), data).expect("checked length");
            set.add(entry.name.clone(), value);
        }
        Ok(set)
    }
}

/// Mapping from [`ParamId`]s to the graph leaves of one forward pass.
pub struct Bound {
    vars: Vec<VarId>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> VarId {
        self.vars[id.0]
    }

    /// Drains `(param, gradient)` pairs out of the graph after `backward`.
    pub fn take_grads<F: Scalar>(&self, graph: &mut Graph<F>) -> Vec<(ParamId, ArrayD<F>)> {
        self.vars
            .iter()
            .enumerate()
            .filter_map(|(i, &var)| graph.take_grad(var).map(|g| (ParamId(i), g)))
            .collect()
    }
}

/// Serializable dump of a [`ParamSet`]. Values travel as `f64`, which holds
/// both `f32` and `f64` parameters bit-exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamArchive {
    pub entries: Vec<ParamEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    #[test]
    fn archive_round_trip_is_bit_exact() {
        let mut set = ParamSet::<f32>::new();
        set.add("w", ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![0.1, -0.2, 0.3, 1.5e-7, 9.0, -3.25]).unwrap());
        set.add("b", ArrayD::from_shape_vec(IxDyn(&[3]), vec![0.0, -0.0, 2.0]).unwrap());

        let archive = set.to_archive();
        let restored = ParamSet::<f32>::from_archive(&archive).unwrap();
        assert_eq!(restored.len(), set.len());
        for id in set.ids() {
            assert_eq!(restored.name(id), set.name(id));
            let bits = |a: &ArrayD<f32>| a.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(restored.value(id)), bits(set.value(id)));
        }
    }

    #[test]
    fn archive_rejects_inconsistent_shapes() {
        let archive = ParamArchive {
            entries: vec![ParamEntry { name: "w".into(), shape: vec![2, 2], data: vec![1.0; 3] }],
        };
        assert!(ParamSet::<f32>::from_archive(&archive).is_err());
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"DIVERSIREC1\n";

/// Named parameter collection. Iteration order is lexicographic by name,
/// which is also the checkpoint order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn new() -> Self {
        ModelParams {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Flattens all values in name order.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors.values().flat_map(|t| t.values().iter().copied()).collect()
    }

    /// Inverse of [`ModelParams::flatten`].
    pub fn assign_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_values() {
            return Err(Error::Shape(format!(
                "{} flat values for {} parameters",
                flat.len(),
                self.num_values()
            )));
        }
        let mut offset = 0;
        for t in self.tensors.values_mut() {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = CHECKPOINT_MAGIC.to_vec();
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            out.extend_from_slice(format!("{name}\t{}\n", dims.join(",")).as_bytes());
            for v in t.values() {
                let x = v.to_f32().expect("finite parameter");
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let rest = bytes
            .strip_prefix(CHECKPOINT_MAGIC)
            .ok_or_else(|| bad("missing magic header".into()))?;
        let mut pos = 0;
        let mut params = ModelParams::new();
        while pos < rest.len() {
            let nl = rest[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad(format!("unterminated header at byte {pos}")))?;
            let header = std::str::from_utf8(&rest[pos..pos + nl])
                .map_err(|_| bad("header is not UTF-8".into()))?;
            pos += nl + 1;
            let (name, dims) = header
                .split_once('\t')
                .ok_or_else(|| bad(format!("malformed header {header:?}")))?;
            let shape = dims
                .split(',')
                .map(|d| d.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("bad dimensions in {header:?}")))?;
            let n: usize = shape.iter().product();
            let end = pos + 4 * n;
            if end > rest.len() {
                return Err(bad(format!("truncated values for {name}")));
            }
            let values = rest[pos..end]
                .chunks_exact(4)
                .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            pos = end;
            params.insert(name, Tensor::new(shape, values)?);
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let mut p = ModelParams::<f32>::new();
        p.insert("b", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
        p.insert("a", Tensor::scalar(0.5));
        let bytes = p.to_checkpoint_bytes();
        let mut expected = b"DIVERSIREC1\na\t1\n".to_vec();
        expected.extend_from_slice(&0.5f32.to_le_bytes());
        expected.extend_from_slice(b"b\t2\n");
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_garbage() {
        assert!(ModelParams::<f32>::from_checkpoint_bytes(b"NOPE").is_err());
        let mut bytes = b"DIVERSIREC1\nx\t3\n".to_vec();
        bytes.extend_from_slice(&[0; 8]);
        assert!(ModelParams::<f32>::from_checkpoint_bytes(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip(vals in proptest::collection::vec(-1e3f32..1e3, 1..40), split in 1usize..5) {
            let mut p = ModelParams::<f32>::new();
            let cols = split.min(vals.len());
            let rows = vals.len() / cols;
            let used = rows * cols;
            p.insert("m.weight", Tensor::matrix(rows, cols, vals[..used].to_vec()).unwrap());
            p.insert("a.bias", Tensor::new(vec![vals.len()], vals.clone()).unwrap());
            let back = ModelParams::<f32>::from_checkpoint_bytes(&p.to_checkpoint_bytes()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}

//! Named parameter tensors and their gradient buffers.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OrcaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// All trainable tensors of a model, addressed by [`ParamId`] and carrying a
/// stable name used in checkpoints.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn n_elements(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Flat coordinate access across all tensors, for finite-difference probes.
    pub fn get_flat(&self, coord: usize) -> f64 {
        let (t, i) = self.locate(coord);
        *self.tensors[t].as_slice().unwrap().get(i).unwrap()
    }

    pub fn set_flat(&mut self, coord: usize, value: f64) {
        let (t, i) = self.locate(coord);
        self.tensors[t].as_slice_mut().unwrap()[i] = value;
    }

    fn locate(&self, mut coord: usize) -> (usize, usize) {
        for (t, tensor) in self.tensors.iter().enumerate() {
            if coord < tensor.len() {
                return (t, coord);
            }
            coord -= tensor.len();
        }
        panic!("flat coordinate out of range");
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient buffers matching a [`ParamStore`] layout.
#[derive(Debug, Clone)]
pub struct GradStore {
    pub(crate) grads: Vec<Array2<f64>>,
}

impl GradStore {
    pub fn zeros_like(store: &ParamStore) -> Self {
        GradStore {
            grads: store.tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.grads[id.0]
    }

    pub fn get_flat(&self, mut coord: usize) -> f64 {
        for g in &self.grads {
            if coord < g.len() {
                return g.as_slice().unwrap()[coord];
            }
            coord -= g.len();
        }
        panic!("flat coordinate out of range");
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Glorot-uniform initialization.
pub fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

/// Small-scale normal initialization for embedding tables.
pub fn embedding_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_fn((rows, cols), |_| {
        let v: f64 = StandardNormal.sample(rng);
        v * scale
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Element offset into the raw f32 blob.
    pub offset: usize,
}

/// Serialize all tensors as one little-endian `f32` blob, returning the
/// per-tensor index for the checkpoint manifest.
pub fn tensor_blob(store: &ParamStore) -> (Vec<TensorEntry>, Vec<u8>) {
    let mut entries = Vec::with_capacity(store.len());
    let mut blob = Vec::with_capacity(store.n_elements() * 4);
    let mut offset = 0usize;
    for id in store.ids() {
        let t = store.get(id);
        entries.push(TensorEntry {
            name: store.name(id).to_owned(),
            rows: t.nrows(),
            cols: t.ncols(),
            offset,
        });
        for &v in t.iter() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
        offset += t.len();
    }
    (entries, blob)
}

/// Rebuild a parameter store from a manifest index and its `f32` blob. Tensor
/// order and shapes must match the store being filled (checkpoints store the
/// layout; callers rebuild the model first, then overwrite values).
pub fn load_blob(store: &mut ParamStore, entries: &[TensorEntry], blob: &[u8]) -> Result<()> {
    if entries.len() != store.len() {
        return Err(OrcaError::data(format!(
            "checkpoint has {} tensors, model expects {}",
            entries.len(),
            store.len()
        )));
    }
    for (id, entry) in store.ids().collect::<Vec<_>>().into_iter().zip(entries) {
        let t = store.get_mut(id);
        if entry.rows != t.nrows() || entry.cols != t.ncols() {
            return Err(OrcaError::data(format!(
                "tensor '{}' shape mismatch: checkpoint {}x{}, model {}x{}",
                entry.name,
                entry.rows,
                entry.cols,
                t.nrows(),
                t.ncols()
            )));
        }
        let start = entry.offset * 4;
        let end = start + t.len() * 4;
        if end > blob.len() {
            return Err(OrcaError::data(format!("tensor '{}' overruns blob", entry.name)));
        }
        for (dst, chunk) in t.iter_mut().zip(blob[start..end].chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn blob_round_trip_preserves_f32_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        store.add("a", glorot(&mut rng, 3, 4));
        store.add("b", glorot(&mut rng, 2, 2));
        let (entries, blob) = tensor_blob(&store);

        let mut other = store.clone();
        for id in other.ids().collect::<Vec<_>>() {
            other.get_mut(id).fill(0.0);
        }
        load_blob(&mut other, &entries, &blob).unwrap();
        for id in store.ids() {
            for (x, y) in store.get(id).iter().zip(other.get(id).iter()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }

    #[test]
    fn flat_coordinates_cover_every_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        store.add("a", glorot(&mut rng, 2, 3));
        store.add("b", glorot(&mut rng, 1, 4));
        assert_eq!(store.n_elements(), 10);
        let before: Vec<f64> = (0..10).map(|i| store.get_flat(i)).collect();
        store.set_flat(7, 99.0);
        assert_eq!(store.get_flat(7), 99.0);
        for i in 0..10 {
            if i != 7 {
                assert_eq!(store.get_flat(i), before[i]);
            }
        }
    }
}

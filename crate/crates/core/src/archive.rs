//! Named-tensor archives in the safetensors layout: an 8-byte little-endian
//! header length, a JSON header (dtype, shape, byte offsets, plus a free-form
//! string metadata map), then raw little-endian tensor data.

use std::collections::{BTreeMap, HashMap};

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shape plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

/// Tensors by name plus the string metadata of an archive.
pub type Decoded<T> = (BTreeMap<String, NamedTensor<T>>, HashMap<String, String>);

fn dtype_of<T: Scalar>() -> Dtype {
    match T::DTYPE {
        "F32" => Dtype::F32,
        _ => Dtype::F64,
    }
}

pub fn encode<T: Scalar>(tensors: &BTreeMap<String, NamedTensor<T>>, metadata: HashMap<String, String>) -> Result<Vec<u8>> {
    let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = tensors
        .iter()
        .map(|(name, t)| {
            let mut buf = Vec::with_capacity(t.values.len() * T::BYTES);
            for &v in &t.values {
                v.write_le(&mut buf);
            }
            (name.clone(), t.shape.clone(), buf)
        })
        .collect();
    let views = bytes
        .iter()
        .map(|(name, shape, buf)| {
            TensorView::new(dtype_of::<T>(), shape.clone(), buf)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = safetensors::serialize(views, Some(metadata)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    canonical_header(&raw)
}

/// Rewrites the JSON header with sorted keys so equal archives are equal
/// bytes (the metadata map is otherwise emitted in hash order).
fn canonical_header(raw: &[u8]) -> Result<Vec<u8>> {
    let bad = || Error::Checkpoint("malformed archive header".into());
    let n = u64::from_le_bytes(raw.get(..8).ok_or_else(bad)?.try_into().map_err(|_| bad())?) as usize;
    let header = raw.get(8..8 + n).ok_or_else(bad)?;
    let mut fields: BTreeMap<String, serde_json::Value> = serde_json::from_slice(header)?;
    if let Some(serde_json::Value::Object(meta)) = fields.get("__metadata__") {
        let sorted: BTreeMap<&String, &serde_json::Value> = meta.iter().collect();
        let sorted = serde_json::to_value(sorted)?;
        fields.insert("__metadata__".into(), sorted);
    }
    let mut text = serde_json::to_vec(&fields)?;
    while text.len() % 8 != 0 {
        text.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + text.len() + raw.len() - 8 - n);
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(&raw[8 + n..]);
    Ok(out)
}

/// Decodes every tensor, converting `F32`/`F64` storage into `T`.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Decoded<T>> {
    let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let metadata = meta.metadata().clone().unwrap_or_default();
    let st = SafeTensors::deserialize(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (name, view) in st.tensors() {
        let values: Vec<T> = match view.dtype() {
            Dtype::F32 => view.data().chunks_exact(4).map(|b| T::from_f64_lossy(f32::read_le(b) as f64)).collect(),
            Dtype::F64 => view.data().chunks_exact(8).map(|b| T::from_f64_lossy(f64::read_le(b))).collect(),
            other => return Err(Error::Checkpoint(format!("tensor `{name}` has unsupported dtype {other:?}"))),
        };
        out.insert(name, NamedTensor { shape: view.shape().to_vec(), values });
    }
    Ok((out, metadata))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits_and_metadata() {
        let mut t = BTreeMap::new();
        t.insert("a".to_string(), NamedTensor { shape: vec![2, 2], values: vec![1.0f32, -0.0, f32::MIN_POSITIVE, 3.5] });
        let meta = HashMap::from([("k".to_string(), "v".to_string())]);
        let bytes = encode(&t, meta.clone()).unwrap();
        let (back, m) = decode::<f32>(&bytes).unwrap();
        assert_eq!(m, meta);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back["a"].values), bits(&t["a"].values));
        let widened = decode::<f64>(&bytes).unwrap().0;
        assert_eq!(widened["a"].values[3], 3.5);
    }
}

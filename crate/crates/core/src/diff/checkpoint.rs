//! Parameter-store serialization: a versioned little-endian binary layout
//! that round-trips bit-exactly, plus a JSON form for inspection.
//!
//! Binary layout:
//!
//! ```text
//! magic   b"GPPCKPT\0"
//! version u32
//! count   u32
//! repeat count times:
//!   name_len u32, name utf-8 bytes
//!   rows u32, cols u32
//!   rows*cols f64 (IEEE-754 bits, little-endian)
//! ```

use super::matrix::Matrix;
use super::params::ParamStore;
use super::DiffError;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GPPCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_binary<T: Scalar>(store: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, m) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DiffError> {
        if self.pos + n > self.buf.len() {
            return Err(DiffError::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DiffError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DiffError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_binary<T: Scalar>(bytes: &[u8]) -> Result<ParamStore<T>, DiffError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(DiffError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(DiffError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| DiffError::Checkpoint(format!("parameter name: {e}")))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(T::lit(r.f64()?));
        }
        store.push(name, Matrix::from_vec(rows, cols, data));
    }
    if r.pos != bytes.len() {
        return Err(DiffError::Checkpoint("trailing bytes".into()));
    }
    Ok(store)
}

#[derive(Serialize, Deserialize)]
struct JsonParam {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JsonCheckpoint {
    format_version: u32,
    params: Vec<JsonParam>,
}

pub fn encode_json<T: Scalar>(store: &ParamStore<T>) -> String {
    let doc = JsonCheckpoint {
        format_version: CHECKPOINT_VERSION,
        params: store
            .iter()
            .map(|(name, m)| JsonParam {
                name: name.to_string(),
                rows: m.rows(),
                cols: m.cols(),
                data: m.as_slice().iter().map(|v| v.to_f64_lossy()).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("checkpoint serializes")
}

pub fn decode_json<T: Scalar>(text: &str) -> Result<ParamStore<T>, DiffError> {
    let doc: JsonCheckpoint =
        serde_json::from_str(text).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
    if doc.format_version != CHECKPOINT_VERSION {
        return Err(DiffError::Checkpoint(format!(
            "unsupported version {}",
            doc.format_version
        )));
    }
    let mut store = ParamStore::new();
    for p in doc.params {
        if p.data.len() != p.rows * p.cols {
            return Err(DiffError::Checkpoint(format!("parameter {} has wrong length", p.name)));
        }
        store.push(
            p.name,
            Matrix::from_vec(p.rows, p.cols, p.data.into_iter().map(T::lit).collect()),
        );
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(
            shapes in prop::collection::vec((1usize..5, 1usize..5), 1..4),
            seed in any::<u64>(),
        ) {
            let mut store = ParamStore::<f64>::new();
            let mut x = seed;
            for (i, (r, c)) in shapes.into_iter().enumerate() {
                let data = (0..r * c)
                    .map(|_| {
                        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        f64::from_bits(x >> 2) * if x & 1 == 0 { 1.0 } else { -1.0 }
                    })
                    .collect();
                store.push(format!("p{i}"), Matrix::from_vec(r, c, data));
            }
            let bytes = encode_binary(&store);
            let back: ParamStore<f64> = decode_binary(&bytes).unwrap();
            for ((n1, a), (n2, b)) in store.iter().zip(back.iter()) {
                prop_assert_eq!(n1, n2);
                let abits: Vec<u64> = a.as_slice().iter().map(|v| v.to_bits()).collect();
                let bbits: Vec<u64> = b.as_slice().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(abits, bbits);
            }
        }
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut store = ParamStore::<f64>::new();
        store.push("w", Matrix::filled(2, 3, 0.5));
        let bytes = encode_binary(&store);
        assert!(decode_binary::<f64>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_binary::<f64>(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_binary::<f64>(&extra).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut store = ParamStore::<f64>::new();
        store.push("a", Matrix::from_vec(1, 3, vec![0.1, -2.5, 1e-300]));
        let back: ParamStore<f64> = decode_json(&encode_json(&store)).unwrap();
        assert_eq!(back, store);
    }
}

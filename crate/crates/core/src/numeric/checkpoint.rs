//! Binary checkpoint format.
//!
//! ```text
//! magic            8 bytes   b"DSICKPT\0"
//! version          u32 LE    currently 1
//! metadata_len     u32 LE
//! metadata         UTF-8     free-form (the model writes its config as JSON)
//! record_count     u32 LE
//! record_count times:
//!   name_len       u32 LE
//!   name           UTF-8
//!   ndim           u32 LE
//!   dims           u64 LE x ndim
//!   data           f32 LE x product(dims)
//! ```
//!
//! Records appear in parameter insertion order.

use std::io::{Read, Write};

use super::{NumericError, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSICKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, metadata: &str, params: &ParamStore<f32>) -> Result<(), NumericError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(metadata.len() as u32).to_le_bytes())?;
    w.write_all(metadata.as_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (_, name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NumericError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String, NumericError> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| NumericError::Checkpoint(format!("invalid UTF-8: {e}")))
}

/// Returns the metadata string and the parameters.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(String, ParamStore<f32>), NumericError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NumericError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(NumericError::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let metadata = read_string(&mut r, meta_len)?;
    let count = read_u32(&mut r)?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let name = read_string(&mut r, name_len)?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.insert(name, Tensor::new(shape, data)?)?;
    }
    Ok((metadata, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_names_shapes_and_bits() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::new(vec![2, 2], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5]).unwrap())
            .unwrap();
        s.insert("b.bias", Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "{\"k\":1}", &s).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        let (meta, back) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(meta, "{\"k\":1}");
        let names: Vec<_> = back.iter().map(|(_, n, _)| n.to_string()).collect();
        assert_eq!(names, ["a", "b.bias"]);
        for ((_, _, x), (_, _, y)) in s.iter().zip(back.iter()) {
            assert_eq!(x.shape(), y.shape());
            let xb: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let err = read_checkpoint(&b"NOTACKPT\x01\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, NumericError::Checkpoint(_)));
    }
}

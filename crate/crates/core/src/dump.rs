//! Portable tensor dump format.
//!
//! Layout: 8-byte magic `PFTENSOR`, 1 byte dtype code (1 = f32, 2 = f64),
//! 1 byte rank (always 4), four little-endian `u64` dims, then the raw
//! little-endian values in `N, C, H, W` order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

pub const MAGIC: &[u8; 8] = b"PFTENSOR";
const HEADER_LEN: usize = 8 + 1 + 1 + 4 * 8;

pub fn encode<T: Element>(tensor: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + tensor.len() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE_CODE);
    out.push(4);
    for d in tensor.shape().dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in tensor.data() {
        v.write_le(&mut out);
    }
    out
}

pub fn decode<T: Element>(bytes: &[u8]) -> Result<Tensor<T>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if bytes[8] != T::DTYPE_CODE {
        return Err(Error::Format(format!(
            "dtype code {} does not match requested element type (code {})",
            bytes[8],
            T::DTYPE_CODE
        )));
    }
    if bytes[9] != 4 {
        return Err(Error::Format(format!("rank {} unsupported", bytes[9])));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let start = 10 + 8 * i;
        let raw = u64::from_le_bytes(bytes[start..start + 8].try_into().expect("8 bytes"));
        *d = usize::try_from(raw).map_err(|_| Error::Format(format!("dim {raw} too large")))?;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3])?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != shape.numel() * T::BYTES {
        return Err(Error::Format(format!(
            "payload has {} bytes, shape {shape} needs {}",
            body.len(),
            shape.numel() * T::BYTES
        )));
    }
    let data = body.chunks_exact(T::BYTES).map(T::read_le).collect();
    Tensor::from_vec(shape, data)
}

pub fn write_to<T: Element, W: Write>(tensor: &Tensor<T>, mut w: W) -> Result<()> {
    w.write_all(&encode(tensor))?;
    Ok(())
}

pub fn read_from<T: Element, R: Read>(mut r: R) -> Result<Tensor<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save<T: Element>(tensor: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(tensor))?;
    Ok(())
}

pub fn load<T: Element>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::from_vec(Shape::new(1, 2, 1, 1).unwrap(), vec![1.0, -2.0]).unwrap();
        let bytes = encode(&t);
        assert_eq!(&bytes[..8], b"PFTENSOR");
        assert_eq!(bytes[8], 1);
        assert_eq!(bytes[9], 4);
        assert_eq!(&bytes[10..18], &1u64.to_le_bytes());
        assert_eq!(&bytes[18..26], &2u64.to_le_bytes());
        assert_eq!(&bytes[42..46], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[46..50], &(-2.0f32).to_le_bytes());
        assert_eq!(bytes.len(), 50);
    }

    #[test]
    fn rejects_wrong_dtype_and_truncation() {
        let t = Tensor::<f64>::zeros(Shape::new(1, 1, 2, 2).unwrap());
        let bytes = encode(&t);
        assert!(matches!(decode::<f32>(&bytes), Err(Error::Format(_))));
        assert!(matches!(
            decode::<f64>(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode::<f64>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(dims in (1usize..3, 1usize..4, 1usize..5, 1usize..5), seed in any::<u64>()) {
            let shape = Shape::new(dims.0, dims.1, dims.2, dims.3).unwrap();
            let t = Tensor::<f64>::create(shape, crate::tensor::Fill::Uniform { low: -3.0, high: 3.0 }, seed).unwrap();
            let back = decode::<f64>(&encode(&t)).unwrap();
            prop_assert_eq!(back.shape(), shape);
            prop_assert_eq!(back.data(), t.data());
        }
    }
}

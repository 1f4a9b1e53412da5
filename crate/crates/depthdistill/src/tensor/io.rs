//! `.dtns` tensor container.
//!
//! Layout: magic "DTNS", u32 version=1, u8 dtype (0=f32, 1=f64),
//! u32 rank, u64 dims[rank], then the payload little-endian. The round
//! trip is bit-exact.

use super::{Dtype, Scalar, Shape, Tensor};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DTNS";
pub const VERSION: u32 = 1;

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + t.rank() * 8 + t.numel() * T::DTYPE.size_bytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::DTYPE as u8);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data().iter() {
        v.write_le(&mut out);
    }
    out
}

fn bad(ctx: &str, what: &str) -> Error {
    Error::format(format!("{ctx}: {what}"))
}

/// Decode a tensor, checking magic, version, dtype, and payload size.
/// `ctx` names the source (e.g. a file name) for error messages.
pub fn decode<T: Scalar>(bytes: &[u8], ctx: &str) -> Result<Tensor<T>> {
    if bytes.len() < 13 {
        return Err(bad(ctx, "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad(ctx, "bad magic (expected DTNS)"));
    }
    let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != VERSION {
        return Err(bad(ctx, &format!("unsupported version {version}")));
    }
    let dtype = Dtype::from_code(bytes[8]).ok_or_else(|| bad(ctx, "unknown dtype code"))?;
    if dtype != T::DTYPE {
        return Err(bad(ctx, &format!("dtype mismatch: file has {dtype:?}, expected {:?}", T::DTYPE)));
    }
    let rank = u32::from_le_bytes([bytes[9], bytes[10], bytes[11], bytes[12]]) as usize;
    let dims_end = 13 + rank * 8;
    if bytes.len() < dims_end {
        return Err(bad(ctx, "truncated dims"));
    }
    let mut dims = Vec::with_capacity(rank);
    for r in 0..rank {
        let off = 13 + r * 8;
        let d = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        dims.push(d as usize);
    }
    let numel: usize = dims.iter().product();
    let esz = T::DTYPE.size_bytes();
    if bytes.len() != dims_end + numel * esz {
        return Err(bad(
            ctx,
            &format!("payload size {} != expected {}", bytes.len() - dims_end, numel * esz),
        ));
    }
    let mut data = Vec::with_capacity(numel);
    for i in 0..numel {
        data.push(T::read_le(&bytes[dims_end + i * esz..]));
    }
    Tensor::from_vec(Shape(dims), data)
}

pub fn save<T: Scalar>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path.as_ref())?;
    f.write_all(&encode(t))?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn roundtrip_is_bit_exact_f32_and_f64() {
        let mut rng = Rng::new(2);
        let t32 = Tensor::<f32>::randn([3, 4, 5], 10.0, &mut rng);
        let back32: Tensor<f32> = decode(&encode(&t32), "mem").unwrap();
        assert_eq!(back32.dims(), t32.dims());
        for (a, b) in t32.data().iter().zip(back32.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let t64 = Tensor::<f64>::randn([7], 1e-3, &mut rng);
        let back64: Tensor<f64> = decode(&encode(&t64), "mem").unwrap();
        for (a, b) in t64.data().iter().zip(back64.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupt_magic_and_truncation_are_format_errors() {
        let t = Tensor::<f32>::ones([2, 2]);
        let mut bytes = encode(&t);
        bytes[0] = b'X';
        let err = decode::<f32>(&bytes, "somefile.dtns").unwrap_err().to_string();
        assert!(err.contains("somefile.dtns") && err.contains("magic"), "{err}");

        let bytes = encode(&t);
        let err = decode::<f32>(&bytes[..bytes.len() - 3], "trunc.dtns").unwrap_err().to_string();
        assert!(err.contains("trunc.dtns"), "{err}");
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let t = Tensor::<f32>::ones([2]);
        let err = decode::<f64>(&encode(&t), "mem").unwrap_err().to_string();
        assert!(err.contains("dtype"), "{err}");
    }
}

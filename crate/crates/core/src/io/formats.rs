//! Binary image formats.
//!
//! PGM frames are binary (`P5`) with the header `P5\n84 84\n255\n` followed
//! by 7056 row-major bytes. Tensor files start with the magic `BEVT` and three
//! big-endian `u32` (stack, height, width), then the frames back to back.

use crate::error::{Error, Result};
use crate::observation::{Observation, IMAGE_SIZE};

pub const PGM_HEADER: &[u8] = b"P5\n84 84\n255\n";
pub const TENSOR_MAGIC: &[u8; 4] = b"BEVT";

pub fn encode_pgm(frame: &[u8]) -> Result<Vec<u8>> {
    if frame.len() != IMAGE_SIZE * IMAGE_SIZE {
        return Err(Error::Layout {
            what: "PGM frame",
            expected: IMAGE_SIZE * IMAGE_SIZE,
            got: frame.len(),
        });
    }
    let mut out = Vec::with_capacity(PGM_HEADER.len() + frame.len());
    out.extend_from_slice(PGM_HEADER);
    out.extend_from_slice(frame);
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Vec<u8>> {
    let body = bytes
        .strip_prefix(PGM_HEADER)
        .ok_or_else(|| Error::Domain("not an 84x84 binary PGM".into()))?;
    if body.len() != IMAGE_SIZE * IMAGE_SIZE {
        return Err(Error::Layout {
            what: "PGM body",
            expected: IMAGE_SIZE * IMAGE_SIZE,
            got: body.len(),
        });
    }
    Ok(body.to_vec())
}

pub fn encode_tensor(obs: &Observation) -> Result<Vec<u8>> {
    let Observation::Image { stack, data } = obs else {
        return Err(Error::Domain("only image observations form a tensor".into()));
    };
    let mut out = Vec::with_capacity(16 + data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    for d in [*stack, IMAGE_SIZE, IMAGE_SIZE] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Observation> {
    if bytes.len() < 16 || &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::Domain("missing BEVT header".into()));
    }
    let dim = |k: usize| u32::from_be_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize;
    let (stack, h, w) = (dim(0), dim(1), dim(2));
    if h != IMAGE_SIZE || w != IMAGE_SIZE || bytes.len() - 16 != stack * h * w {
        return Err(Error::Domain(format!(
            "tensor {stack}x{h}x{w} does not match {} bytes",
            bytes.len() - 16
        )));
    }
    Ok(Observation::Image {
        stack,
        data: bytes[16..].to_vec(),
    })
}

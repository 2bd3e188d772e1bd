//! IDX binary format (big-endian), as used by the MNIST distribution files.
//! Accepted magics: `0x00000803` (unsigned-byte images, 3 dimensions) and
//! `0x00000801` (unsigned-byte labels, 1 dimension).

use crate::error::{Error, Result};

pub const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;
pub const IDX_MAGIC_LABELS: u32 = 0x0000_0801;

/// Parsed IDX payload: dimension sizes plus the raw unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxData {
    pub dims: Vec<usize>,
    pub payload: Vec<u8>,
}

impl IdxData {
    pub fn len(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Product of the trailing dimensions (bytes per record).
    pub fn record_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::FormatError(format!(
            "idx stream truncated at byte {offset}"
        )));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parse an IDX byte stream: magic, big-endian dimension sizes, then payload
/// whose length must equal the product of the dimensions.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let magic = read_u32_be(bytes, 0)?;
    let ndims = match magic {
        IDX_MAGIC_IMAGES => 3,
        IDX_MAGIC_LABELS => 1,
        other => {
            return Err(Error::FormatError(format!(
                "unexpected idx magic 0x{other:08x}"
            )))
        }
    };
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        dims.push(read_u32_be(bytes, 4 + 4 * i)? as usize);
    }
    let header = 4 + 4 * ndims;
    let expected: usize = dims.iter().product();
    let payload = &bytes[header.min(bytes.len())..];
    if payload.len() < expected {
        return Err(Error::FormatError(format!(
            "idx payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::FormatError(format!(
            "idx payload has {} trailing bytes",
            payload.len() - expected
        )));
    }
    Ok(IdxData {
        dims,
        payload: payload.to_vec(),
    })
}

/// Inverse of [`parse_idx`] for the two accepted shapes.
pub fn serialize_idx(data: &IdxData) -> Result<Vec<u8>> {
    let magic = match data.dims.len() {
        3 => IDX_MAGIC_IMAGES,
        1 => IDX_MAGIC_LABELS,
        n => {
            return Err(Error::FormatError(format!(
                "idx serialization supports 1 or 3 dimensions, got {n}"
            )))
        }
    };
    let expected: usize = data.dims.iter().product();
    if data.payload.len() != expected {
        return Err(Error::FormatError(format!(
            "payload length {} does not match dims product {expected}",
            data.payload.len()
        )));
    }
    let mut out = Vec::with_capacity(4 + 4 * data.dims.len() + data.payload.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in &data.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&data.payload);
    Ok(out)
}

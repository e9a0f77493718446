//! Delta + LEB128 varint coding of sorted adjacency lists.
//!
//! Layout: `varint(count)`, `varint(first)`, then `count - 1` varint gaps.
//! The empty list is the single byte `0x00`.

use crate::error::{Error, Result};
use crate::vectors::VertexId;

/// Longest LEB128 encoding of a `u32`.
const MAX_VARINT_LEN: usize = 5;

#[inline]
pub fn write_varint(mut x: u32, out: &mut Vec<u8>) {
    while x >= 0x80 {
        out.push((x as u8) | 0x80);
        x >>= 7;
    }
    out.push(x as u8);
}

/// Decodes one varint, returning the value and the bytes consumed.
#[inline]
pub fn read_varint(bytes: &[u8]) -> Result<(u32, usize)> {
    let mut value = 0u32;
    for (i, &b) in bytes.iter().enumerate().take(MAX_VARINT_LEN) {
        let payload = (b & 0x7f) as u32;
        if i == MAX_VARINT_LEN - 1 && (b & 0x80 != 0 || payload > 0x0f) {
            return Err(Error::corrupt("overlong varint"));
        }
        value |= payload << (7 * i);
        if b & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    Err(Error::corrupt("truncated varint"))
}

pub fn compress_adjacency(ids: &[VertexId]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(1 + ids.len() * 2);
    compress_adjacency_into(ids, &mut out)?;
    Ok(out)
}

/// Appends the encoding of a strictly ascending id list to `out`.
pub fn compress_adjacency_into(ids: &[VertexId], out: &mut Vec<u8>) -> Result<()> {
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("adjacency list must be strictly ascending"));
    }
    let count = u32::try_from(ids.len()).map_err(|_| Error::invalid("adjacency list too long"))?;
    write_varint(count, out);
    let mut prev = None;
    for &id in ids {
        match prev {
            None => write_varint(id, out),
            Some(p) => write_varint(id - p, out),
        }
        prev = Some(id);
    }
    Ok(())
}

/// Exact inverse of [`compress_adjacency`]; trailing bytes are corruption.
pub fn decompress_adjacency(bytes: &[u8]) -> Result<Vec<VertexId>> {
    let mut out = Vec::new();
    let used = decompress_adjacency_into(bytes, &mut out)?;
    if used != bytes.len() {
        return Err(Error::corrupt("trailing bytes after adjacency list"));
    }
    Ok(out)
}

/// Decodes a list from the front of `bytes` into `out` (cleared first) and
/// returns the number of bytes consumed.
pub fn decompress_adjacency_into(bytes: &[u8], out: &mut Vec<VertexId>) -> Result<usize> {
    out.clear();
    let (count, mut pos) = read_varint(bytes)?;
    // Every element takes at least one byte.
    if count as usize > bytes.len() - pos {
        return Err(Error::corrupt("adjacency count exceeds available bytes"));
    }
    out.reserve(count as usize);
    let mut prev: Option<u32> = None;
    for _ in 0..count {
        let (x, n) = read_varint(&bytes[pos..])?;
        pos += n;
        let id = match prev {
            None => x,
            Some(p) => {
                if x == 0 {
                    return Err(Error::corrupt("zero gap in adjacency list"));
                }
                p.checked_add(x)
                    .ok_or_else(|| Error::corrupt("adjacency id overflow"))?
            }
        };
        out.push(id);
        prev = Some(id);
    }
    Ok(pos)
}

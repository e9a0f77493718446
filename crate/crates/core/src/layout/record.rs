use crate::error::{Error, Result};
use crate::layout::varint::{compress_adjacency_into, decompress_adjacency_into};
use crate::vectors::VertexId;

/// A decoded vertex record: the 4-bit code and the out-neighbour list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexRecord {
    pub vid: VertexId,
    pub extended: Vec<u8>,
    pub neighbors: Vec<VertexId>,
}

/// Record bytes are the extended code followed by the compressed adjacency.
pub fn encode_record(extended: &[u8], neighbors: &[VertexId]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(extended.len() + 1 + neighbors.len() * 2);
    out.extend_from_slice(extended);
    compress_adjacency_into(neighbors, &mut out)?;
    if out.len() > u16::MAX as usize {
        return Err(Error::invalid("record exceeds 16-bit length"));
    }
    Ok(out)
}

/// Byte length [`encode_record`] produces for these inputs.
pub fn encoded_record_len(extended_len: usize, neighbors: &[VertexId]) -> usize {
    let varint_len = |x: u32| (32 - x.leading_zeros()).max(1).div_ceil(7) as usize;
    let mut len = extended_len + varint_len(neighbors.len() as u32);
    let mut prev = None;
    for &id in neighbors {
        len += varint_len(prev.map_or(id, |p| id - p));
        prev = Some(id);
    }
    len
}

pub fn decode_record(vid: VertexId, bytes: &[u8], extended_len: usize) -> Result<VertexRecord> {
    let mut rec = VertexRecord {
        vid,
        extended: Vec::with_capacity(extended_len),
        neighbors: Vec::new(),
    };
    decode_record_into(bytes, extended_len, &mut rec.extended, &mut rec.neighbors)?;
    Ok(rec)
}

/// Decodes into caller-owned buffers, reusing their allocations.
pub(crate) fn decode_record_into(
    bytes: &[u8],
    extended_len: usize,
    extended: &mut Vec<u8>,
    neighbors: &mut Vec<VertexId>,
) -> Result<()> {
    if bytes.len() <= extended_len {
        return Err(Error::corrupt("record shorter than its extended code"));
    }
    extended.clear();
    extended.extend_from_slice(&bytes[..extended_len]);
    let used = decompress_adjacency_into(&bytes[extended_len..], neighbors)?;
    if extended_len + used != bytes.len() {
        return Err(Error::corrupt("trailing bytes in vertex record"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let bytes = encode_record(&[0x12, 0x34], &[4, 9, 200]).unwrap();
        let rec = decode_record(7, &bytes, 2).unwrap();
        assert_eq!(rec.extended, vec![0x12, 0x34]);
        assert_eq!(rec.neighbors, vec![4, 9, 200]);
        assert!(decode_record(7, &bytes[..2], 2).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode_record(7, &longer, 2).is_err());
    }

    #[test]
    fn predicted_length_matches_encoding() {
        for ids in [vec![], vec![0], vec![127, 128, 20_000], vec![5, 1 << 28, u32::MAX]] {
            let bytes = encode_record(&[0; 16], &ids).unwrap();
            assert_eq!(encoded_record_len(16, &ids), bytes.len());
        }
    }
}

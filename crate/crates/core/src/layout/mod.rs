//! On-disk index layout: compressed vertex records packed into slotted pages,
//! affinity-aware placement, and the index file container.

mod file;
mod page;
mod placement;
mod record;
mod stats;
pub mod varint;

pub use file::{write_index, IndexFile, IndexMeta, WriteReport, FORMAT_VERSION, MAGIC};
pub use page::{InsertOutcome, Page, PageView, Slot, MAX_PAGE_SIZE, MIN_PAGE_SIZE, PAGE_HEADER_LEN, SLOT_LEN};
pub use placement::{affinity_bound, co_paged_fraction, plan_placement, PlacementPlan};
pub use record::{decode_record, encode_record, encoded_record_len, VertexRecord};
pub use stats::{
    fixed_record_fragmentation, one_record_per_page_fragmentation, LayoutStats,
};
pub use varint::{compress_adjacency, decompress_adjacency};
pub(crate) use record::decode_record_into;

use crate::error::{Error, Result};

/// Little-endian reader over a byte slice.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::corrupt("unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

//! Slotted page with a sorted slot directory and a backward-growing heap.
//!
//! ```text
//! 0      1          3         5                                  page_size
//! +------+----------+---------+-------------------+-----+--------------+
//! |count | heap_start| heap_used| slot 0 | slot 1 | ... | free | records |
//! +------+----------+---------+-------------------+-----+--------------+
//! slot = vid:u32 | color:u8 | length:u16 | start_offset:u16   (9 bytes)
//! ```
//!
//! All integers are little-endian. Slots are sorted by vid; records are
//! appended at `heap_start - len`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::vectors::VertexId;

pub const PAGE_HEADER_LEN: usize = 5;
pub const SLOT_LEN: usize = 9;
pub const MIN_PAGE_SIZE: usize = 64;
/// `heap_start` of an empty page equals the page size and must fit 16 bits.
pub const MAX_PAGE_SIZE: usize = u16::MAX as usize;
const MAX_SLOTS: usize = u8::MAX as usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub vid: VertexId,
    pub color: u8,
    pub length: u16,
    pub start: u16,
}

impl Slot {
    fn read(b: &[u8]) -> Self {
        Slot {
            vid: u32::from_le_bytes(b[0..4].try_into().unwrap()),
            color: b[4],
            length: u16::from_le_bytes(b[5..7].try_into().unwrap()),
            start: u16::from_le_bytes(b[7..9].try_into().unwrap()),
        }
    }

    fn write(&self, b: &mut [u8]) {
        b[0..4].copy_from_slice(&self.vid.to_le_bytes());
        b[4] = self.color;
        b[5..7].copy_from_slice(&self.length.to_le_bytes());
        b[7..9].copy_from_slice(&self.start.to_le_bytes());
    }

    fn extent(&self) -> std::ops::Range<usize> {
        self.start as usize..self.start as usize + self.length as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    PageFull,
}

fn check_page_size(size: usize) -> Result<()> {
    if !(MIN_PAGE_SIZE..=MAX_PAGE_SIZE).contains(&size) {
        return Err(Error::invalid(format!(
            "page size {size} outside {MIN_PAGE_SIZE}..={MAX_PAGE_SIZE}"
        )));
    }
    Ok(())
}

/// Validated read-only view over serialized page bytes.
#[derive(Clone, Copy, Debug)]
pub struct PageView<'a> {
    bytes: &'a [u8],
}

impl<'a> PageView<'a> {
    /// Checks every layout invariant; violations are corruption.
    pub fn parse(bytes: &'a [u8]) -> Result<Self> {
        check_page_size(bytes.len()).map_err(|e| Error::corrupt(e.to_string()))?;
        let view = Self { bytes };
        view.validate()?;
        Ok(view)
    }

    fn validate(&self) -> Result<()> {
        let size = self.bytes.len();
        let count = self.count();
        let heap_start = self.heap_start();
        let heap_used = self.heap_used();
        if heap_start + heap_used != size {
            return Err(Error::corrupt("heap_start + heap_used != page size"));
        }
        if PAGE_HEADER_LEN + SLOT_LEN * count > heap_start {
            return Err(Error::corrupt("slot directory overlaps heap"));
        }
        let mut extents = Vec::with_capacity(count);
        let mut prev: Option<VertexId> = None;
        for s in self.slots() {
            if prev.is_some_and(|p| p >= s.vid) {
                return Err(Error::corrupt("slot directory not sorted by vid"));
            }
            prev = Some(s.vid);
            let r = s.extent();
            if r.start < heap_start || r.end > size {
                return Err(Error::corrupt(format!("record of vid {} outside heap", s.vid)));
            }
            extents.push(r);
        }
        extents.sort_by_key(|r| r.start);
        if extents.windows(2).any(|w| w[0].end > w[1].start) {
            return Err(Error::corrupt("overlapping record extents"));
        }
        Ok(())
    }

    pub fn page_size(&self) -> usize {
        self.bytes.len()
    }

    pub fn count(&self) -> usize {
        self.bytes[0] as usize
    }

    pub fn heap_start(&self) -> usize {
        u16::from_le_bytes([self.bytes[1], self.bytes[2]]) as usize
    }

    pub fn heap_used(&self) -> usize {
        u16::from_le_bytes([self.bytes[3], self.bytes[4]]) as usize
    }

    /// Bytes left between the slot directory and the heap.
    pub fn free_space(&self) -> usize {
        self.heap_start() - PAGE_HEADER_LEN - SLOT_LEN * self.count()
    }

    pub fn slot(&self, i: usize) -> Slot {
        let off = PAGE_HEADER_LEN + i * SLOT_LEN;
        Slot::read(&self.bytes[off..off + SLOT_LEN])
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + 'a {
        let view = *self;
        (0..self.count()).map(move |i| view.slot(i))
    }

    fn find(&self, vid: VertexId) -> std::result::Result<usize, usize> {
        let (mut lo, mut hi) = (0, self.count());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.slot(mid).vid.cmp(&vid) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Ok(mid),
            }
        }
        Err(lo)
    }

    pub fn lookup_slot(&self, vid: VertexId) -> Option<Slot> {
        self.find(vid).ok().map(|i| self.slot(i))
    }

    /// Record bytes of `vid`, or `None` when absent.
    pub fn lookup(&self, vid: VertexId) -> Option<&'a [u8]> {
        let s = self.lookup_slot(vid)?;
        Some(&self.bytes[s.extent()])
    }

    /// `vid`'s record together with every record sharing its non-zero
    /// color; just `vid` itself when its color is 0.
    pub fn coresidents(&self, vid: VertexId) -> Result<Vec<(VertexId, &'a [u8])>> {
        let s = self
            .lookup_slot(vid)
            .ok_or_else(|| Error::invalid(format!("vid {vid} not on page")))?;
        if s.color == 0 {
            return Ok(vec![(vid, &self.bytes[s.extent()])]);
        }
        let bytes = self.bytes;
        Ok(self
            .slots()
            .filter(|o| o.color == s.color)
            .map(|o| (o.vid, &bytes[o.extent()]))
            .collect())
    }

    pub fn as_bytes(&self) -> &'a [u8] {
        self.bytes
    }
}

/// Owned, mutable page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Page {
    buf: Vec<u8>,
}

impl Page {
    pub fn new(page_size: usize) -> Result<Self> {
        check_page_size(page_size)?;
        let mut buf = vec![0u8; page_size];
        buf[1..3].copy_from_slice(&(page_size as u16).to_le_bytes());
        Ok(Self { buf })
    }

    pub fn from_bytes(buf: Vec<u8>) -> Result<Self> {
        PageView::parse(&buf)?;
        Ok(Self { buf })
    }

    pub fn view(&self) -> PageView<'_> {
        PageView { bytes: &self.buf }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn count(&self) -> usize {
        self.view().count()
    }

    pub fn free_space(&self) -> usize {
        self.view().free_space()
    }

    pub fn lookup(&self, vid: VertexId) -> Option<&[u8]> {
        self.view().lookup(vid)
    }

    pub fn coresidents(&self, vid: VertexId) -> Result<Vec<(VertexId, &[u8])>> {
        self.view().coresidents(vid)
    }

    /// Whether a record of `len` bytes would fit.
    pub fn fits(&self, len: usize) -> bool {
        self.count() < MAX_SLOTS && SLOT_LEN + len <= self.free_space()
    }

    /// Inserts a record, keeping the slot directory sorted. A full page is
    /// left untouched.
    pub fn insert(&mut self, vid: VertexId, color: u8, record: &[u8]) -> Result<InsertOutcome> {
        let view = self.view();
        let at = match view.find(vid) {
            Ok(_) => return Err(Error::invalid(format!("vid {vid} already on page"))),
            Err(at) => at,
        };
        if !self.fits(record.len()) {
            return Ok(InsertOutcome::PageFull);
        }
        let count = view.count();
        let start = view.heap_start() - record.len();
        let used = view.heap_used() + record.len();
        self.buf[start..start + record.len()].copy_from_slice(record);

        let slot_off = PAGE_HEADER_LEN + at * SLOT_LEN;
        let dir_end = PAGE_HEADER_LEN + count * SLOT_LEN;
        self.buf.copy_within(slot_off..dir_end, slot_off + SLOT_LEN);
        Slot {
            vid,
            color,
            length: record.len() as u16,
            start: start as u16,
        }
        .write(&mut self.buf[slot_off..slot_off + SLOT_LEN]);

        self.buf[0] = (count + 1) as u8;
        self.buf[1..3].copy_from_slice(&(start as u16).to_le_bytes());
        self.buf[3..5].copy_from_slice(&(used as u16).to_le_bytes());
        Ok(InsertOutcome::Inserted)
    }

    pub fn validate(&self) -> Result<()> {
        self.view().validate()
    }

    /// Vid -> record bytes for every slot.
    pub fn records(&self) -> HashMap<VertexId, Vec<u8>> {
        let v = self.view();
        v.slots().map(|s| (s.vid, v.bytes[s.extent()].to_vec())).collect()
    }
}

//! Index file container.
//!
//! ```text
//! offset  field
//!      0  magic "RECANNIX"
//!      8  version: u32
//!     12  header_crc: u32     crc32 of bytes [16, 56 + meta_len)
//!     16  page_size, dim, n, entry_point, max_degree, page_count: u32
//!     40  meta_len: u64
//!     48  pages_offset: u64   multiple of page_size
//!     56  quantizer model | binary codes (n x ceil(dim/8)) | directory (n x u32)
//!         zero padding
//! pages_offset  page_count pages of page_size bytes
//! ```
//!
//! Everything is little-endian. Pages are not checksummed; each page is
//! validated structurally when read.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layout::page::{InsertOutcome, Page, PageView, MAX_PAGE_SIZE, MIN_PAGE_SIZE};
use crate::layout::placement::PlacementPlan;
use crate::layout::record::{decode_record, encode_record, VertexRecord};
use crate::layout::stats::LayoutStats;
use crate::layout::Cursor;
use crate::quantizer::{binary_code_len, extended_code_len, QuantizerModel};
use crate::vectors::{Dataset, VertexId};

pub const MAGIC: [u8; 8] = *b"RECANNIX";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 56;
const CRC_START: usize = 16;
/// Vids checked against their page when an index is opened.
const OPEN_SAMPLE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexMeta {
    pub page_size: usize,
    pub dim: usize,
    pub n: usize,
    pub entry_point: VertexId,
    pub max_degree: usize,
    pub page_count: usize,
    pub pages_offset: u64,
}

#[derive(Clone, Debug)]
pub struct WriteReport {
    pub meta: IndexMeta,
    pub layout: LayoutStats,
    pub file_bytes: u64,
}

fn check_plan(plan: &PlacementPlan, n: usize) -> Result<Vec<u32>> {
    let mut directory = vec![u32::MAX; n];
    for (pid, page) in plan.pages.iter().enumerate() {
        for &(vid, _) in page {
            let slot = directory
                .get_mut(vid as usize)
                .ok_or_else(|| Error::invalid(format!("plan references vid {vid} >= n")))?;
            if *slot != u32::MAX {
                return Err(Error::invalid(format!("plan places vid {vid} twice")));
            }
            *slot = pid as u32;
        }
    }
    if let Some(v) = directory.iter().position(|&p| p == u32::MAX) {
        return Err(Error::invalid(format!("plan does not place vid {v}")));
    }
    Ok(directory)
}

/// Encodes every record, packs pages per `plan` and writes the file.
pub fn write_index(
    path: impl AsRef<Path>,
    ds: &Dataset,
    model: &QuantizerModel,
    graph: &Graph,
    plan: &PlacementPlan,
) -> Result<WriteReport> {
    let n = ds.len();
    if n == 0 || graph.is_empty() {
        return Err(Error::invalid("cannot write an empty index"));
    }
    if graph.len() != n {
        return Err(Error::invalid("graph and dataset sizes differ"));
    }
    if model.dim() != ds.dim() {
        return Err(Error::invalid("quantizer and dataset dimensions differ"));
    }
    let directory = check_plan(plan, n)?;
    let page_size = plan.page_size;
    let dim = ds.dim();

    let mut ext = vec![0u8; extended_code_len(dim)];
    let mut pages = Vec::with_capacity(plan.pages.len());
    let mut layout = LayoutStats::default();
    for assignments in &plan.pages {
        let mut page = Page::new(page_size)?;
        for &(vid, color) in assignments {
            model.encode_extended_into(ds.get(vid as usize), &mut ext);
            let record = encode_record(&ext, graph.neighbors(vid))?;
            if page.insert(vid, color, &record)? == InsertOutcome::PageFull {
                return Err(Error::invalid(format!(
                    "placement overflows page {} at vid {vid}",
                    pages.len()
                )));
            }
        }
        layout.add_page(&page.view());
        pages.push(page);
    }

    let mut meta_bytes = Vec::new();
    model.write_to(&mut meta_bytes);
    let mut code = vec![0u8; binary_code_len(dim)];
    for v in ds.iter() {
        model.encode_binary_into(v, &mut code);
        meta_bytes.extend_from_slice(&code);
    }
    for &p in &directory {
        meta_bytes.extend_from_slice(&p.to_le_bytes());
    }
    let pages_offset = (HEADER_LEN + meta_bytes.len()).next_multiple_of(page_size) as u64;
    let meta = IndexMeta {
        page_size,
        dim,
        n,
        entry_point: graph.entry_point(),
        max_degree: graph.max_degree(),
        page_count: pages.len(),
        pages_offset,
    };

    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(&MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&[0; 4]);
    for x in [
        page_size,
        dim,
        n,
        meta.entry_point as usize,
        meta.max_degree,
        meta.page_count,
    ] {
        header.extend_from_slice(&(x as u32).to_le_bytes());
    }
    header.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    header.extend_from_slice(&pages_offset.to_le_bytes());
    let mut crc = crc32fast::Hasher::new();
    crc.update(&header[CRC_START..]);
    crc.update(&meta_bytes);
    header[12..16].copy_from_slice(&crc.finalize().to_le_bytes());

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header)?;
    w.write_all(&meta_bytes)?;
    let pad = pages_offset as usize - HEADER_LEN - meta_bytes.len();
    w.write_all(&vec![0u8; pad])?;
    for p in &pages {
        w.write_all(p.as_bytes())?;
    }
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    Ok(WriteReport {
        meta,
        layout,
        file_bytes: pages_offset + (pages.len() * page_size) as u64,
    })
}

/// An opened, read-only index. The binary codes and the directory are held
/// in memory; pages are read on demand with positional reads, so one
/// instance can serve any number of threads.
#[derive(Debug)]
pub struct IndexFile {
    path: PathBuf,
    file: File,
    meta: IndexMeta,
    model: QuantizerModel,
    binary_codes: Vec<u8>,
    directory: Vec<u32>,
}

impl IndexFile {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let file_len = file.metadata()?.len();

        let mut header = [0u8; HEADER_LEN];
        if file_len < HEADER_LEN as u64 {
            return Err(Error::corrupt("file shorter than header"));
        }
        file.read_exact_at(&mut header, 0)?;
        if header[..8] != MAGIC {
            return Err(Error::BadMagic);
        }
        let mut cur = Cursor::new(&header[8..]);
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let stored_crc = cur.u32()?;
        let mut fields = [0usize; 6];
        for f in &mut fields {
            *f = cur.u32()? as usize;
        }
        let [page_size, dim, n, entry_point, max_degree, page_count] = fields;
        let meta_len = cur.u64()?;
        let pages_offset = cur.u64()?;

        let meta_end = (HEADER_LEN as u64)
            .checked_add(meta_len)
            .filter(|&e| e <= file_len && e <= pages_offset)
            .ok_or_else(|| Error::corrupt("metadata length out of range"))?;
        let mut meta_bytes = vec![0u8; (meta_end - HEADER_LEN as u64) as usize];
        file.read_exact_at(&mut meta_bytes, HEADER_LEN as u64)?;
        let mut crc = crc32fast::Hasher::new();
        crc.update(&header[CRC_START..]);
        crc.update(&meta_bytes);
        if crc.finalize() != stored_crc {
            return Err(Error::corrupt("header checksum mismatch"));
        }
        if !(MIN_PAGE_SIZE..=MAX_PAGE_SIZE).contains(&page_size)
            || pages_offset % page_size as u64 != 0
        {
            return Err(Error::corrupt(format!("bad page geometry ({page_size})")));
        }
        if n == 0 || dim == 0 || entry_point >= n || page_count == 0 {
            return Err(Error::corrupt("empty or inconsistent index dimensions"));
        }
        let pages_end = pages_offset + (page_count * page_size) as u64;
        if file_len < pages_end {
            return Err(Error::corrupt("file truncated before last page"));
        }

        let (model, used) = QuantizerModel::read_from(&meta_bytes)?;
        if model.dim() != dim {
            return Err(Error::corrupt("model dimension disagrees with header"));
        }
        let mut cur = Cursor::new(&meta_bytes[used..]);
        let binary_codes = cur.take(n * binary_code_len(dim))?.to_vec();
        let directory = (0..n).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        if cur.remaining() != 0 {
            return Err(Error::corrupt("trailing metadata bytes"));
        }
        if directory.iter().any(|&p| p as usize >= page_count) {
            return Err(Error::corrupt("directory references a missing page"));
        }

        let index = Self {
            path,
            file,
            meta: IndexMeta {
                page_size,
                dim,
                n,
                entry_point: entry_point as VertexId,
                max_degree,
                page_count,
                pages_offset,
            },
            model,
            binary_codes,
            directory,
        };
        let step = n.div_ceil(OPEN_SAMPLE).max(1);
        for vid in (0..n).step_by(step).chain([index.meta.entry_point as usize]) {
            let page = index.read_page(index.directory[vid])?;
            if page.lookup(vid as VertexId).is_none() {
                return Err(Error::corrupt(format!(
                    "directory maps vid {vid} to page {} which lacks it",
                    index.directory[vid]
                )));
            }
        }
        Ok(index)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self) -> &File {
        &self.file
    }

    pub fn meta(&self) -> &IndexMeta {
        &self.meta
    }

    pub fn model(&self) -> &QuantizerModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.meta.n
    }

    pub fn is_empty(&self) -> bool {
        self.meta.n == 0
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn page_size(&self) -> usize {
        self.meta.page_size
    }

    pub fn page_count(&self) -> usize {
        self.meta.page_count
    }

    pub fn entry_point(&self) -> VertexId {
        self.meta.entry_point
    }

    pub fn extended_len(&self) -> usize {
        extended_code_len(self.meta.dim)
    }

    /// Memory-resident 1-bit code of `vid`.
    #[inline]
    pub fn binary_code(&self, vid: VertexId) -> &[u8] {
        let len = binary_code_len(self.meta.dim);
        let at = vid as usize * len;
        &self.binary_codes[at..at + len]
    }

    /// Vid → page id for every record.
    pub fn directory(&self) -> &[u32] {
        &self.directory
    }

    pub fn page_of(&self, vid: VertexId) -> Result<u32> {
        self.directory
            .get(vid as usize)
            .copied()
            .ok_or_else(|| Error::invalid(format!("vid {vid} out of range")))
    }

    pub fn page_offset(&self, page_id: u32) -> u64 {
        self.meta.pages_offset + page_id as u64 * self.meta.page_size as u64
    }

    /// Reads page bytes without validating them.
    pub fn read_page_into(&self, page_id: u32, buf: &mut [u8]) -> Result<()> {
        if page_id as usize >= self.meta.page_count {
            return Err(Error::invalid(format!("page {page_id} out of range")));
        }
        if buf.len() < self.meta.page_size {
            return Err(Error::invalid("page buffer too small"));
        }
        self.file
            .read_exact_at(&mut buf[..self.meta.page_size], self.page_offset(page_id))?;
        Ok(())
    }

    pub fn read_page(&self, page_id: u32) -> Result<Page> {
        let mut buf = vec![0u8; self.meta.page_size];
        self.read_page_into(page_id, &mut buf)?;
        Page::from_bytes(buf)
    }

    /// Synchronously reads and decodes one record.
    pub fn read_record(&self, vid: VertexId) -> Result<VertexRecord> {
        let page = self.read_page(self.page_of(vid)?)?;
        let bytes = page
            .lookup(vid)
            .ok_or_else(|| Error::corrupt(format!("vid {vid} missing from its page")))?;
        decode_record(vid, bytes, self.extended_len())
    }

    /// Scans every page and accumulates occupancy.
    pub fn layout_stats(&self) -> Result<LayoutStats> {
        let mut stats = LayoutStats::default();
        let mut buf = vec![0u8; self.meta.page_size];
        for pid in 0..self.meta.page_count as u32 {
            self.read_page_into(pid, &mut buf)?;
            stats.add_page(&PageView::parse(&buf)?);
        }
        Ok(stats)
    }
}

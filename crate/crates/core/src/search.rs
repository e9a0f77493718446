//! Query-time traversal over a [`RecordSource`].
//!
//! Candidates are ranked by binary-code estimates; every explored vertex is
//! re-scored with its extended code, and the answer is the `k` nearest
//! explored vertices by that refined distance. The searches are `async` so a
//! fetch that misses the buffer pool can suspend the calling task.

use std::cell::RefCell;
use std::future::Future;

use rustc_hash::FxHashSet;

use crate::error::{Error, Result};
use crate::layout::{decode_record_into, IndexFile, PageView};
use crate::pool::{BeginLoad, BufferPool, Lookup, Residency};
use crate::quantizer::QueryTables;
use crate::vectors::{cmp_candidates, ResultSet, VertexId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchParams {
    /// Candidate-list capacity `L`.
    pub list_size: usize,
    pub k: usize,
    /// Look-ahead scanned for a resident pivot when the nearest candidate is
    /// on disk. Zero disables pivoting.
    pub beam_width: usize,
    /// Nearest unexplored candidates prefetched at the top of each step.
    pub prefetch_depth: usize,
}

impl SearchParams {
    pub fn new(list_size: usize, k: usize) -> Self {
        Self {
            list_size,
            k,
            beam_width: 0,
            prefetch_depth: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.list_size == 0 {
            return Err(Error::invalid("k and the list size must be positive"));
        }
        if self.k > self.list_size {
            return Err(Error::invalid(format!("k ({}) exceeds list size ({})", self.k, self.list_size)));
        }
        if self.beam_width > self.list_size {
            return Err(Error::invalid(format!(
                "beam width ({}) exceeds list size ({})",
                self.beam_width, self.list_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub vid: VertexId,
    pub distance: f32,
    pub explored: bool,
}

/// Bounded best-first frontier, ascending by `(distance, vid)`.
#[derive(Clone, Debug)]
pub struct CandidateList {
    entries: Vec<Candidate>,
    capacity: usize,
}

impl CandidateList {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: Vec::with_capacity(capacity + 1),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    /// Inserts in order and drops the farthest entry on overflow. Returns
    /// false when the candidate would be trimmed straight away. The caller
    /// keeps vids unique.
    pub fn insert(&mut self, vid: VertexId, distance: f32) -> bool {
        debug_assert!(self.entries.iter().all(|c| c.vid != vid));
        let pos = self
            .entries
            .partition_point(|c| cmp_candidates(c.distance, c.vid, distance, vid).is_lt());
        if pos >= self.capacity {
            return false;
        }
        self.entries.insert(
            pos,
            Candidate {
                vid,
                distance,
                explored: false,
            },
        );
        self.entries.truncate(self.capacity);
        true
    }

    pub fn nearest_unexplored(&self) -> Option<usize> {
        self.entries.iter().position(|c| !c.explored)
    }

    /// Positions of the `limit` nearest unexplored entries, nearest first.
    pub fn unexplored(&self, limit: usize) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.explored)
            .map(|(i, _)| i)
            .take(limit)
    }

    pub fn mark_explored(&mut self, pos: usize) {
        self.entries[pos].explored = true;
    }
}

/// Extended code and adjacency of one fetched record.
#[derive(Clone, Debug, Default)]
pub struct FetchedRecord {
    pub extended: Vec<u8>,
    pub neighbors: Vec<VertexId>,
}

impl FetchedRecord {
    pub(crate) fn copy_from(&mut self, extended: &[u8], neighbors: &[VertexId]) {
        self.extended.clear();
        self.extended.extend_from_slice(extended);
        self.neighbors.clear();
        self.neighbors.extend_from_slice(neighbors);
    }

    /// Decodes `vid`'s record out of a raw page.
    pub(crate) fn decode_from_page(&mut self, page: &[u8], vid: VertexId, extended_len: usize) -> Result<()> {
        let view = PageView::parse(page)?;
        let bytes = view
            .lookup(vid)
            .ok_or_else(|| Error::corrupt(format!("vid {vid} missing from its page")))?;
        decode_record_into(bytes, extended_len, &mut self.extended, &mut self.neighbors)
    }
}

/// How a fetch was served.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FetchKind {
    /// Resident in the pool. `prefetched` marks the first use of a record a
    /// prefetch brought in.
    Hit { prefetched: bool },
    /// Waited on a load already in flight.
    Joined,
    /// Issued a read that fills a pool slot.
    Read,
    /// Issued a read that bypasses the pool.
    Direct,
}

/// Record access used by the searches. Binary codes are memory resident;
/// records come through the pool.
pub trait RecordSource {
    fn binary_code(&self, vid: VertexId) -> &[u8];

    fn residency(&self, vid: VertexId) -> Residency;

    /// Starts a background load of an on-disk record. Returns whether a
    /// read was issued; never waits.
    fn prefetch(&self, vid: VertexId) -> bool;

    fn fetch(&self, vid: VertexId, out: &mut FetchedRecord) -> impl Future<Output = Result<FetchKind>>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchMetrics {
    /// Vertices explored.
    pub hops: u32,
    pub hits: u32,
    pub joins: u32,
    /// Demand reads, into the pool or bypassing it.
    pub reads: u32,
    pub prefetches: u32,
    pub prefetch_hits: u32,
    pub pivots: u32,
}

impl SearchMetrics {
    /// Page reads this query issued.
    pub fn ios(&self) -> u32 {
        self.reads + self.prefetches
    }

    fn record(&mut self, kind: FetchKind) {
        match kind {
            FetchKind::Hit { prefetched } => {
                self.hits += 1;
                self.prefetch_hits += prefetched as u32;
            }
            FetchKind::Joined => self.joins += 1,
            FetchKind::Read | FetchKind::Direct => self.reads += 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchOutput {
    pub result: ResultSet,
    /// Explored vertices in visit order.
    pub trace: Vec<VertexId>,
    pub metrics: SearchMetrics,
}

struct State {
    list: CandidateList,
    seen: FxHashSet<VertexId>,
    explored: Vec<(VertexId, f32)>,
    record: FetchedRecord,
    metrics: SearchMetrics,
}

impl State {
    fn new<S: RecordSource>(src: &S, tables: &QueryTables, entry: VertexId, params: &SearchParams) -> Result<Self> {
        params.validate()?;
        let mut st = Self {
            list: CandidateList::new(params.list_size),
            seen: FxHashSet::default(),
            explored: Vec::new(),
            record: FetchedRecord::default(),
            metrics: SearchMetrics::default(),
        };
        st.seen.insert(entry);
        st.list.insert(entry, tables.binary_distance(src.binary_code(entry)));
        Ok(st)
    }

    /// Fetches the candidate at `pos`, refines it and expands its
    /// neighbours.
    async fn explore<S: RecordSource>(&mut self, src: &S, tables: &QueryTables, pos: usize) -> Result<()> {
        let vid = self.list.entries()[pos].vid;
        let kind = src.fetch(vid, &mut self.record).await?;
        self.metrics.record(kind);
        self.metrics.hops += 1;
        self.explored.push((vid, tables.extended_distance(&self.record.extended)));
        self.list.mark_explored(pos);
        for &nbr in &self.record.neighbors {
            if self.seen.insert(nbr) {
                self.list.insert(nbr, tables.binary_distance(src.binary_code(nbr)));
            }
        }
        Ok(())
    }

    fn finish(self, k: usize) -> SearchOutput {
        let trace = self.explored.iter().map(|&(v, _)| v).collect();
        let mut result = ResultSet::from_pairs(self.explored);
        result.truncate(k);
        SearchOutput {
            result,
            trace,
            metrics: self.metrics,
        }
    }
}

/// Plain best-first search: always explores the nearest unexplored
/// candidate, with no pivoting and no prefetching.
pub async fn best_first_search<S: RecordSource>(
    src: &S,
    tables: &QueryTables,
    entry: VertexId,
    params: &SearchParams,
) -> Result<SearchOutput> {
    let mut st = State::new(src, tables, entry, params)?;
    while let Some(pos) = st.list.nearest_unexplored() {
        st.explore(src, tables, pos).await?;
    }
    Ok(st.finish(params.k))
}

/// Issues prefetches for the `depth` nearest unexplored candidates that are
/// on disk. Returns the number issued.
pub fn prefetch_top<S: RecordSource>(src: &S, list: &CandidateList, depth: usize) -> usize {
    list.unexplored(depth)
        .filter(|&pos| {
            let vid = list.entries()[pos].vid;
            matches!(src.residency(vid), Residency::OnDisk(_)) && src.prefetch(vid)
        })
        .count()
}

/// Best-first search that, when the nearest candidate is on disk, explores
/// the nearest resident one among the `beam_width` nearest instead, and
/// prefetches the on-disk ones it passes over.
pub async fn cache_aware_search<S: RecordSource>(
    src: &S,
    tables: &QueryTables,
    entry: VertexId,
    params: &SearchParams,
) -> Result<SearchOutput> {
    let mut st = State::new(src, tables, entry, params)?;
    loop {
        if params.prefetch_depth > 0 {
            st.metrics.prefetches += prefetch_top(src, &st.list, params.prefetch_depth) as u32;
        }
        let Some(mut pos) = st.list.nearest_unexplored() else {
            break;
        };
        let nearest = st.list.entries()[pos].vid;
        if params.beam_width > 0 && matches!(src.residency(nearest), Residency::OnDisk(_)) {
            let look_ahead: Vec<usize> = st.list.unexplored(params.beam_width).collect();
            for c in look_ahead {
                let vid = st.list.entries()[c].vid;
                match src.residency(vid) {
                    Residency::Resident => {
                        pos = c;
                        st.metrics.pivots += 1;
                        break;
                    }
                    Residency::OnDisk(_) => st.metrics.prefetches += src.prefetch(vid) as u32,
                    Residency::Loading => {}
                }
            }
        }
        st.explore(src, tables, pos).await?;
    }
    Ok(st.finish(params.k))
}

/// Blocking source for single-threaded callers: misses are read in place.
pub struct SyncSource<'a> {
    index: &'a IndexFile,
    pool: Option<&'a BufferPool>,
    cofetch: bool,
    page: RefCell<Vec<u8>>,
}

impl<'a> SyncSource<'a> {
    /// Without a pool every fetch reads its page.
    pub fn new(index: &'a IndexFile, pool: Option<&'a BufferPool>, cofetch: bool) -> Self {
        Self {
            index,
            pool,
            cofetch,
            page: RefCell::new(vec![0; index.page_size()]),
        }
    }

    fn read_direct(&self, vid: VertexId, page_id: u32, out: &mut FetchedRecord) -> Result<()> {
        let mut page = self.page.borrow_mut();
        self.index.read_page_into(page_id, &mut page)?;
        out.decode_from_page(&page, vid, self.index.extended_len())
    }

    fn fetch_blocking(&self, vid: VertexId, out: &mut FetchedRecord) -> Result<FetchKind> {
        let Some(pool) = self.pool else {
            self.read_direct(vid, self.index.page_of(vid)?, out)?;
            return Ok(FetchKind::Direct);
        };
        loop {
            match pool.lookup(vid)? {
                Lookup::Resident(g) => {
                    out.copy_from(g.extended(), g.neighbors());
                    return Ok(FetchKind::Hit {
                        prefetched: g.prefetch_hit,
                    });
                }
                // Another thread is loading it.
                Lookup::Loading => std::thread::yield_now(),
                Lookup::OnDisk(page_id) => match pool.begin_load(vid, page_id) {
                    Ok(BeginLoad::Reserved(r)) => {
                        let mut page = self.page.borrow_mut();
                        if let Err(e) = self.index.read_page_into(page_id, &mut page) {
                            pool.abort_load(r)?;
                            return Err(e);
                        }
                        let g = pool.complete_load(r, &page, self.cofetch)?;
                        out.copy_from(g.extended(), g.neighbors());
                        return Ok(FetchKind::Read);
                    }
                    Ok(BeginLoad::AlreadyLoading) => std::thread::yield_now(),
                    Ok(BeginLoad::Resident) => {}
                    Err(Error::RetryLater) => {
                        self.read_direct(vid, page_id, out)?;
                        return Ok(FetchKind::Direct);
                    }
                    Err(e) => return Err(e),
                },
            }
        }
    }
}

impl RecordSource for SyncSource<'_> {
    fn binary_code(&self, vid: VertexId) -> &[u8] {
        self.index.binary_code(vid)
    }

    fn residency(&self, vid: VertexId) -> Residency {
        match self.pool {
            Some(pool) => pool.peek(vid).unwrap_or(Residency::OnDisk(u32::MAX)),
            None => Residency::OnDisk(self.index.directory()[vid as usize]),
        }
    }

    fn prefetch(&self, _vid: VertexId) -> bool {
        false
    }

    fn fetch(&self, vid: VertexId, out: &mut FetchedRecord) -> impl Future<Output = Result<FetchKind>> {
        std::future::ready(self.fetch_blocking(vid, out))
    }
}

/// Runs a search future that never suspends, such as one over a
/// [`SyncSource`].
pub fn block_on<F: Future>(fut: F) -> F::Output {
    futures::executor::block_on(fut)
}

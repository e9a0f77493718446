//! Record-granularity buffer pool.
//!
//! A record map holds one 64-bit word per vertex. The top bit marks
//! residency; the rest is a slot index when resident and a page id
//! otherwise. A slot is reserved for its vid (the map points at it) from the
//! moment it is Locked for loading.
//!
//! Each slot has a state word `vid:32 | version:24 | state:8` changed only by
//! compare-and-swap along the edges
//!
//! ```text
//! Free -> Locked -> Occupied <-> Marked -> Free
//!           \-> Free (abort)
//! ```
//!
//! Payload bytes sit behind a per-slot `RwLock` and are written only while
//! the slot is Locked. Eviction runs a second-chance clock: Occupied slots
//! are marked, Marked slots are freed, Locked slots are skipped.
//!
//! Guards returned by [`BufferPool::lookup`] must not be held across a task
//! suspension: a single-threaded worker would deadlock reloading that slot.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use parking_lot::{Mutex, RwLock, RwLockReadGuard};

use crate::error::{Error, Result};
use crate::layout::{decode_record_into, PageView};
use crate::vectors::VertexId;

const RESIDENT: u64 = 1 << 63;
const VERSION_MASK: u64 = 0x00ff_ffff;

/// Fraction of free slots the background sweep restores.
pub const DEFAULT_LOW_WATERMARK: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SlotState {
    Free = 0,
    Locked = 1,
    Occupied = 2,
    Marked = 3,
}

impl SlotState {
    fn from_bits(b: u64) -> Self {
        match b & 0xff {
            0 => SlotState::Free,
            1 => SlotState::Locked,
            2 => SlotState::Occupied,
            _ => SlotState::Marked,
        }
    }

    /// Whether `self -> to` is one of the six legal edges.
    pub fn can_transition(self, to: SlotState) -> bool {
        use SlotState::*;
        matches!(
            (self, to),
            (Free, Locked)
                | (Locked, Occupied)
                | (Occupied, Marked)
                | (Marked, Occupied)
                | (Marked, Free)
                | (Locked, Free)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Word {
    state: SlotState,
    version: u32,
    vid: VertexId,
}

impl Word {
    fn unpack(w: u64) -> Self {
        Word {
            state: SlotState::from_bits(w),
            version: ((w >> 8) & VERSION_MASK) as u32,
            vid: (w >> 32) as VertexId,
        }
    }

    fn pack(self) -> u64 {
        (self.vid as u64) << 32 | ((self.version as u64) & VERSION_MASK) << 8 | self.state as u64
    }

    fn next(self, state: SlotState, vid: VertexId) -> Self {
        Word {
            state,
            version: (self.version + 1) & VERSION_MASK as u32,
            vid,
        }
    }
}

/// Decoded map entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapEntry {
    Resident(u32),
    OnDisk(u32),
}

impl MapEntry {
    fn unpack(w: u64) -> Self {
        if w & RESIDENT != 0 {
            MapEntry::Resident((w & !RESIDENT) as u32)
        } else {
            MapEntry::OnDisk(w as u32)
        }
    }

    fn pack(self) -> u64 {
        match self {
            MapEntry::Resident(s) => RESIDENT | s as u64,
            MapEntry::OnDisk(p) => p as u64,
        }
    }
}

/// One state change of one slot, for history checking.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub slot: u32,
    /// Slot version after the transition.
    pub version: u32,
    pub from: SlotState,
    pub to: SlotState,
    pub vid: VertexId,
}

#[derive(Clone, Debug)]
pub struct PoolConfig {
    /// Number of record slots; 0 disables caching.
    pub capacity: usize,
    /// Bytes of the extended code in every record.
    pub extended_len: usize,
    /// Maximum out-degree, used to size slot buffers.
    pub max_degree: usize,
    /// Free-slot fraction below which [`BufferPool::maintain`] sweeps.
    pub low_watermark: f64,
    /// Keep a log of every slot transition.
    pub record_transitions: bool,
}

impl PoolConfig {
    pub fn new(capacity: usize, extended_len: usize, max_degree: usize) -> Self {
        Self {
            capacity,
            extended_len,
            max_degree,
            low_watermark: DEFAULT_LOW_WATERMARK,
            record_transitions: false,
        }
    }

    /// Capacity for `ratio` of `n` records, at least one slot when
    /// `ratio > 0`.
    pub fn capacity_for_ratio(n: usize, ratio: f64) -> usize {
        if ratio <= 0.0 {
            0
        } else {
            ((n as f64 * ratio).ceil() as usize).clamp(1, n)
        }
    }
}

/// Decoded record held by a slot.
#[derive(Debug, Default)]
pub struct SlotData {
    vid: VertexId,
    extended: Vec<u8>,
    neighbors: Vec<VertexId>,
}

impl SlotData {
    pub fn vid(&self) -> VertexId {
        self.vid
    }

    pub fn extended(&self) -> &[u8] {
        &self.extended
    }

    pub fn neighbors(&self) -> &[VertexId] {
        &self.neighbors
    }
}

/// Read access to a resident record.
pub struct RecordGuard<'a> {
    data: RwLockReadGuard<'a, SlotData>,
    /// First access to a record brought in by a prefetch.
    pub prefetch_hit: bool,
}

impl std::ops::Deref for RecordGuard<'_> {
    type Target = SlotData;

    fn deref(&self) -> &SlotData {
        &self.data
    }
}

pub enum Lookup<'a> {
    Resident(RecordGuard<'a>),
    /// A load is in flight, or the record is mid-eviction.
    Loading,
    OnDisk(u32),
}

/// Residency without touching the slot or the counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Residency {
    Resident,
    Loading,
    OnDisk(u32),
}

/// Exclusive right to fill one slot with one vid. Consume it with
/// [`BufferPool::complete_load`] or [`BufferPool::abort_load`].
#[derive(Debug, PartialEq, Eq)]
#[must_use]
pub struct Reservation {
    vid: VertexId,
    slot: u32,
    page: u32,
    prefetch: bool,
}

impl Reservation {
    pub fn vid(&self) -> VertexId {
        self.vid
    }

    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn page(&self) -> u32 {
        self.page
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum BeginLoad {
    Reserved(Reservation),
    AlreadyLoading,
    Resident,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PoolStats {
    pub hits: u64,
    pub misses: u64,
    /// Lookups that found a load already in flight.
    pub joins: u64,
    pub loads: u64,
    pub prefetch_loads: u64,
    pub prefetch_hits: u64,
    pub evictions: u64,
    pub cofetch_installs: u64,
}

impl PoolStats {
    /// `hits / (hits + misses + joins)`.
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses + self.joins;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }

    pub fn since(&self, earlier: &PoolStats) -> PoolStats {
        PoolStats {
            hits: self.hits - earlier.hits,
            misses: self.misses - earlier.misses,
            joins: self.joins - earlier.joins,
            loads: self.loads - earlier.loads,
            prefetch_loads: self.prefetch_loads - earlier.prefetch_loads,
            prefetch_hits: self.prefetch_hits - earlier.prefetch_hits,
            evictions: self.evictions - earlier.evictions,
            cofetch_installs: self.cofetch_installs - earlier.cofetch_installs,
        }
    }
}

#[derive(Default)]
struct Counters {
    hits: AtomicU64,
    misses: AtomicU64,
    joins: AtomicU64,
    loads: AtomicU64,
    prefetch_loads: AtomicU64,
    prefetch_hits: AtomicU64,
    evictions: AtomicU64,
    cofetch_installs: AtomicU64,
}

struct Slot {
    word: AtomicU64,
    prefetched: AtomicBool,
    data: RwLock<SlotData>,
}

pub struct BufferPool {
    config: PoolConfig,
    page_of: Vec<u32>,
    map: Vec<AtomicU64>,
    slots: Vec<Slot>,
    /// Popped from the back; starts as `[cap-1, ..., 1, 0]`.
    free: Mutex<Vec<u32>>,
    hand: Mutex<usize>,
    counters: Counters,
    log: Option<Mutex<Vec<Transition>>>,
}

impl BufferPool {
    /// `page_of[vid]` is the page holding each record.
    pub fn new(page_of: Vec<u32>, config: PoolConfig) -> Result<Self> {
        if config.capacity > page_of.len() {
            return Err(Error::invalid(format!(
                "pool capacity {} exceeds record count {}",
                config.capacity,
                page_of.len()
            )));
        }
        if config.capacity > u32::MAX as usize {
            return Err(Error::invalid("pool capacity exceeds 32-bit slot ids"));
        }
        if !(0.0..1.0).contains(&config.low_watermark) {
            return Err(Error::invalid("low watermark must lie in [0, 1)"));
        }
        let map = page_of.iter().map(|&p| AtomicU64::new(p as u64)).collect();
        let slots = (0..config.capacity)
            .map(|_| Slot {
                word: AtomicU64::new(0),
                prefetched: AtomicBool::new(false),
                data: RwLock::new(SlotData {
                    vid: 0,
                    extended: Vec::with_capacity(config.extended_len),
                    neighbors: Vec::with_capacity(config.max_degree),
                }),
            })
            .collect();
        let log = config.record_transitions.then(|| Mutex::new(Vec::new()));
        Ok(Self {
            free: Mutex::new((0..config.capacity as u32).rev().collect()),
            hand: Mutex::new(0),
            counters: Counters::default(),
            config,
            page_of,
            map,
            slots,
            log,
        })
    }

    pub fn capacity(&self) -> usize {
        self.config.capacity
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn is_caching(&self) -> bool {
        self.config.capacity > 0
    }

    pub fn page_of(&self, vid: VertexId) -> u32 {
        self.page_of[vid as usize]
    }

    pub fn free_count(&self) -> usize {
        self.free.lock().len()
    }

    fn check_vid(&self, vid: VertexId) -> Result<()> {
        if vid as usize >= self.map.len() {
            return Err(Error::invalid(format!("vid {vid} out of range")));
        }
        Ok(())
    }

    pub fn map_entry(&self, vid: VertexId) -> Result<MapEntry> {
        self.check_vid(vid)?;
        Ok(MapEntry::unpack(self.map[vid as usize].load(Ordering::Acquire)))
    }

    pub fn slot_state(&self, slot: u32) -> (SlotState, VertexId) {
        let w = Word::unpack(self.slots[slot as usize].word.load(Ordering::Acquire));
        (w.state, w.vid)
    }

    fn cas_slot(&self, slot: u32, from: Word, to: Word) -> bool {
        debug_assert!(from.state.can_transition(to.state));
        let ok = self.slots[slot as usize]
            .word
            .compare_exchange(from.pack(), to.pack(), Ordering::AcqRel, Ordering::Acquire)
            .is_ok();
        if ok {
            if let Some(log) = &self.log {
                log.lock().push(Transition {
                    slot,
                    version: to.version,
                    from: from.state,
                    to: to.state,
                    vid: to.vid,
                });
            }
        }
        ok
    }

    fn cas_map(&self, vid: VertexId, from: MapEntry, to: MapEntry) -> bool {
        self.map[vid as usize]
            .compare_exchange(from.pack(), to.pack(), Ordering::AcqRel, Ordering::Acquire)
            .is_ok()
    }

    fn word(&self, slot: u32) -> Word {
        Word::unpack(self.slots[slot as usize].word.load(Ordering::Acquire))
    }

    fn residency(&self, vid: VertexId) -> (Residency, Option<(u32, Word)>) {
        match MapEntry::unpack(self.map[vid as usize].load(Ordering::Acquire)) {
            MapEntry::OnDisk(p) => (Residency::OnDisk(p), None),
            MapEntry::Resident(s) => {
                let w = self.word(s);
                let r = match w.state {
                    SlotState::Occupied | SlotState::Marked if w.vid == vid => Residency::Resident,
                    _ => Residency::Loading,
                };
                (r, Some((s, w)))
            }
        }
    }

    /// Residency of `vid` without side effects.
    pub fn peek(&self, vid: VertexId) -> Result<Residency> {
        self.check_vid(vid)?;
        Ok(self.residency(vid).0)
    }

    /// Decodes the map entry. A resident record gets its second chance
    /// restored and is returned under a read guard. Counts a hit, a miss or
    /// a join.
    pub fn lookup(&self, vid: VertexId) -> Result<Lookup<'_>> {
        self.check_vid(vid)?;
        loop {
            match self.residency(vid) {
                (Residency::OnDisk(p), _) => {
                    self.counters.misses.fetch_add(1, Ordering::Relaxed);
                    return Ok(Lookup::OnDisk(p));
                }
                (Residency::Loading, _) => {
                    self.counters.joins.fetch_add(1, Ordering::Relaxed);
                    return Ok(Lookup::Loading);
                }
                (Residency::Resident, Some((s, w))) => {
                    let slot = &self.slots[s as usize];
                    let data = slot.data.read();
                    if data.vid != vid {
                        // Slot recycled between the map read and the lock.
                        drop(data);
                        std::hint::spin_loop();
                        continue;
                    }
                    if w.state == SlotState::Marked {
                        self.cas_slot(s, w, w.next(SlotState::Occupied, vid));
                    }
                    let prefetch_hit = slot.prefetched.swap(false, Ordering::AcqRel);
                    self.counters.hits.fetch_add(1, Ordering::Relaxed);
                    if prefetch_hit {
                        self.counters.prefetch_hits.fetch_add(1, Ordering::Relaxed);
                    }
                    return Ok(Lookup::Resident(RecordGuard { data, prefetch_hit }));
                }
                (Residency::Resident, None) => unreachable!(),
            }
        }
    }

    /// Reserves a slot for loading `vid`. Evicts when the free list is
    /// empty; [`Error::RetryLater`] means every slot is Locked.
    pub fn begin_load(&self, vid: VertexId, page_id: u32) -> Result<BeginLoad> {
        self.begin(vid, page_id, false, true)
    }

    /// Like [`begin_load`](Self::begin_load) but only takes an already free
    /// slot, so it never evicts. Returns `Ok(None)` when none is free.
    pub fn begin_prefetch(&self, vid: VertexId, page_id: u32) -> Result<Option<BeginLoad>> {
        match self.begin(vid, page_id, true, false) {
            Err(Error::RetryLater) => Ok(None),
            other => other.map(Some),
        }
    }

    fn begin(&self, vid: VertexId, page_id: u32, prefetch: bool, may_evict: bool) -> Result<BeginLoad> {
        self.check_vid(vid)?;
        if self.config.capacity == 0 {
            return Err(Error::RetryLater);
        }
        loop {
            match self.residency(vid) {
                (Residency::Resident, _) => return Ok(BeginLoad::Resident),
                (Residency::Loading, Some((_, w))) if w.state == SlotState::Locked && w.vid == vid => {
                    return Ok(BeginLoad::AlreadyLoading)
                }
                (Residency::Loading, _) => {
                    // Mid-eviction: the map flips to OnDisk momentarily.
                    std::thread::yield_now();
                    continue;
                }
                (Residency::OnDisk(p), _) => {
                    if p != page_id {
                        return Err(Error::invalid(format!(
                            "vid {vid} lives on page {p}, not {page_id}"
                        )));
                    }
                }
            }
            let slot = match self.take_free(may_evict) {
                Some(s) => s,
                None => return Err(Error::RetryLater),
            };
            let w = self.word(slot);
            debug_assert_eq!(w.state, SlotState::Free);
            let locked = w.next(SlotState::Locked, vid);
            if !self.cas_slot(slot, w, locked) {
                return Err(Error::Logic(format!("free-list slot {slot} was not Free")));
            }
            if self.cas_map(vid, MapEntry::OnDisk(page_id), MapEntry::Resident(slot)) {
                self.slots[slot as usize]
                    .prefetched
                    .store(prefetch, Ordering::Release);
                return Ok(BeginLoad::Reserved(Reservation {
                    vid,
                    slot,
                    page: page_id,
                    prefetch,
                }));
            }
            // Another loader won the map entry.
            self.cas_slot(slot, locked, locked.next(SlotState::Free, vid));
            self.free.lock().push(slot);
        }
    }

    fn take_free(&self, may_evict: bool) -> Option<u32> {
        if let Some(s) = self.free.lock().pop() {
            return Some(s);
        }
        if !may_evict {
            return None;
        }
        self.evict(self.eviction_batch());
        self.free.lock().pop()
    }

    fn eviction_batch(&self) -> usize {
        ((self.config.capacity as f64 * self.config.low_watermark).ceil() as usize).max(1)
    }

    /// Decodes the reserved record from `page` into its slot and publishes
    /// it. With `cofetch`, same-colored neighbours on the page are installed
    /// into already free slots.
    pub fn complete_load(&self, r: Reservation, page: &[u8], cofetch: bool) -> Result<RecordGuard<'_>> {
        let w = self.word(r.slot);
        if w.state != SlotState::Locked || w.vid != r.vid {
            return Err(Error::Logic(format!(
                "reservation for vid {} finds slot {} in {:?}",
                r.vid, r.slot, w.state
            )));
        }
        let parsed = PageView::parse(page).and_then(|view| {
            let slot = view
                .lookup_slot(r.vid)
                .ok_or_else(|| Error::corrupt(format!("vid {} missing from page {}", r.vid, r.page)))?;
            Ok((view, slot))
        });
        let (view, page_slot) = match parsed {
            Ok(x) => x,
            Err(e) => {
                self.abort_load(r)?;
                return Err(e);
            }
        };
        if let Err(e) = self.fill(r.slot, r.vid, view.lookup(r.vid).unwrap()) {
            self.abort_load(r)?;
            return Err(e);
        }
        self.cas_slot(r.slot, w, w.next(SlotState::Occupied, r.vid));
        self.counters.loads.fetch_add(1, Ordering::Relaxed);
        if r.prefetch {
            self.counters.prefetch_loads.fetch_add(1, Ordering::Relaxed);
        }
        if cofetch && page_slot.color != 0 {
            for s in view.slots() {
                if s.color == page_slot.color && s.vid != r.vid && (s.vid as usize) < self.map.len() {
                    if !self.install_cofetched(s.vid, r.page, view.lookup(s.vid).unwrap()) {
                        break;
                    }
                }
            }
        }
        let data = self.slots[r.slot as usize].data.read();
        Ok(RecordGuard {
            data,
            prefetch_hit: false,
        })
    }

    /// Returns false once no free slot is left.
    fn install_cofetched(&self, vid: VertexId, page: u32, bytes: &[u8]) -> bool {
        if self.residency(vid).0 != Residency::OnDisk(page) {
            return true;
        }
        let Some(slot) = self.free.lock().pop() else {
            return false;
        };
        let w = self.word(slot);
        let locked = w.next(SlotState::Locked, vid);
        if !self.cas_slot(slot, w, locked) {
            self.free.lock().push(slot);
            return true;
        }
        if !self.cas_map(vid, MapEntry::OnDisk(page), MapEntry::Resident(slot)) {
            self.cas_slot(slot, locked, locked.next(SlotState::Free, vid));
            self.free.lock().push(slot);
            return true;
        }
        self.slots[slot as usize].prefetched.store(false, Ordering::Release);
        if self.fill(slot, vid, bytes).is_err() {
            self.release(slot, locked, vid, page);
            return true;
        }
        self.cas_slot(slot, locked, locked.next(SlotState::Occupied, vid));
        self.counters.cofetch_installs.fetch_add(1, Ordering::Relaxed);
        true
    }

    fn fill(&self, slot: u32, vid: VertexId, bytes: &[u8]) -> Result<()> {
        let mut data = self.slots[slot as usize].data.write();
        let SlotData {
            vid: v,
            extended,
            neighbors,
        } = &mut *data;
        *v = vid;
        decode_record_into(bytes, self.config.extended_len, extended, neighbors)
    }

    /// Locked -> Free: the map goes back to OnDisk and the slot is freed.
    pub fn abort_load(&self, r: Reservation) -> Result<()> {
        let w = self.word(r.slot);
        if w.state != SlotState::Locked || w.vid != r.vid {
            return Err(Error::Logic(format!("abort of vid {} on a non-Locked slot", r.vid)));
        }
        self.release(r.slot, w, r.vid, r.page);
        Ok(())
    }

    fn release(&self, slot: u32, locked: Word, vid: VertexId, page: u32) {
        self.cas_slot(slot, locked, locked.next(SlotState::Free, vid));
        self.cas_map(vid, MapEntry::Resident(slot), MapEntry::OnDisk(page));
        self.free.lock().push(slot);
    }

    /// Second-chance clock sweep. Stops after freeing `target_free` slots or
    /// two full revolutions; returns the number freed.
    pub fn evict(&self, target_free: usize) -> usize {
        let cap = self.config.capacity;
        if cap == 0 || target_free == 0 {
            return 0;
        }
        let mut hand = self.hand.lock();
        let mut freed = 0;
        for _ in 0..2 * cap {
            let s = *hand as u32;
            *hand = (*hand + 1) % cap;
            let w = self.word(s);
            match w.state {
                SlotState::Occupied => {
                    self.cas_slot(s, w, w.next(SlotState::Marked, w.vid));
                }
                SlotState::Marked => {
                    if self.cas_slot(s, w, w.next(SlotState::Free, w.vid)) {
                        let page = self.page_of[w.vid as usize];
                        self.cas_map(w.vid, MapEntry::Resident(s), MapEntry::OnDisk(page));
                        self.slots[s as usize].prefetched.store(false, Ordering::Release);
                        self.free.lock().push(s);
                        self.counters.evictions.fetch_add(1, Ordering::Relaxed);
                        freed += 1;
                        if freed == target_free {
                            break;
                        }
                    }
                }
                SlotState::Free | SlotState::Locked => {}
            }
        }
        freed
    }

    /// Background sweep: tops the free list up to the low watermark. A pool
    /// that can hold every record never needs a reserve.
    pub fn maintain(&self) -> usize {
        if self.config.capacity >= self.page_of.len() {
            return 0;
        }
        let want = (self.config.capacity as f64 * self.config.low_watermark).ceil() as usize;
        let have = self.free_count();
        if have >= want {
            0
        } else {
            self.evict(want - have)
        }
    }

    pub fn clock_hand(&self) -> usize {
        *self.hand.lock()
    }

    pub fn stats(&self) -> PoolStats {
        let c = &self.counters;
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        PoolStats {
            hits: get(&c.hits),
            misses: get(&c.misses),
            joins: get(&c.joins),
            loads: get(&c.loads),
            prefetch_loads: get(&c.prefetch_loads),
            prefetch_hits: get(&c.prefetch_hits),
            evictions: get(&c.evictions),
            cofetch_installs: get(&c.cofetch_installs),
        }
    }

    /// Drains the transition log (empty unless enabled in the config).
    pub fn take_transitions(&self) -> Vec<Transition> {
        self.log
            .as_ref()
            .map(|l| std::mem::take(&mut *l.lock()))
            .unwrap_or_default()
    }

    /// Checks the quiescent invariants: resident map entries match
    /// non-free slots one to one, and the free list holds exactly the Free
    /// slots. Only meaningful when no operation is in progress.
    pub fn check_invariants(&self) -> Result<()> {
        let mut owner = vec![None; self.slots.len()];
        for (vid, m) in self.map.iter().enumerate() {
            if let MapEntry::Resident(s) = MapEntry::unpack(m.load(Ordering::Acquire)) {
                let slot = owner
                    .get_mut(s as usize)
                    .ok_or_else(|| Error::Logic(format!("vid {vid} maps to bad slot {s}")))?;
                if slot.is_some() {
                    return Err(Error::Logic(format!("slot {s} claimed by two vids")));
                }
                *slot = Some(vid as VertexId);
            }
        }
        let free: Vec<u32> = self.free.lock().clone();
        let mut in_free = vec![false; self.slots.len()];
        for &s in &free {
            if std::mem::replace(&mut in_free[s as usize], true) {
                return Err(Error::Logic(format!("slot {s} twice on the free list")));
            }
        }
        for (s, o) in owner.iter().enumerate() {
            let w = self.word(s as u32);
            match (w.state, o) {
                (SlotState::Free, None) if in_free[s] => {}
                (SlotState::Locked | SlotState::Occupied | SlotState::Marked, Some(v))
                    if *v == w.vid && !in_free[s] => {}
                _ => {
                    return Err(Error::Logic(format!(
                        "slot {s} in {:?} (vid {}) owned by {o:?}, free-listed {}",
                        w.state, w.vid, in_free[s]
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Verifies that a transition log admits a sequential witness: per slot,
/// versions are consecutive from the first, every edge is legal, and each
/// transition starts from the state the previous one ended in. Returns the
/// number of transitions checked.
pub fn check_history(log: &[Transition], capacity: usize) -> Result<usize> {
    let mut per_slot: Vec<Vec<Transition>> = vec![Vec::new(); capacity];
    for t in log {
        per_slot
            .get_mut(t.slot as usize)
            .ok_or_else(|| Error::Logic(format!("slot {} out of range", t.slot)))?
            .push(*t);
    }
    for (s, ts) in per_slot.iter_mut().enumerate() {
        ts.sort_by_key(|t| t.version);
        let mut state = SlotState::Free;
        let mut version = 0u32;
        let mut vid = None;
        for t in ts.iter() {
            if t.version != (version + 1) & VERSION_MASK as u32 {
                return Err(Error::Logic(format!("slot {s}: version gap at {}", t.version)));
            }
            if t.from != state || !t.from.can_transition(t.to) {
                return Err(Error::Logic(format!(
                    "slot {s}: illegal {:?} -> {:?} from {state:?}",
                    t.from, t.to
                )));
            }
            if t.from != SlotState::Free && vid != Some(t.vid) {
                return Err(Error::Logic(format!("slot {s}: vid changed without a load")));
            }
            state = t.to;
            version = t.version;
            vid = Some(t.vid);
        }
    }
    Ok(log.len())
}

//! Per-worker cooperative scheduler.
//!
//! Each worker runs up to `batch_size` queries as futures on one thread. A
//! query that misses the buffer pool queues a page read and suspends; the
//! worker submits all queued reads in one batch, polls the driver, and
//! resumes the tasks whose pages arrived. Workers share only the pool and
//! the index; every worker owns its driver and its tasks.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::sync::Arc;
use std::task::{Context, Poll};
use std::time::{Duration, Instant};

use futures::task::noop_waker_ref;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::io::{IoBackend, IoCompletion, IoRequest, PageSource};
use crate::layout::IndexFile;
use crate::pool::{BeginLoad, BufferPool, Lookup, PoolConfig, Reservation, Residency};
use crate::search::{
    best_first_search, cache_aware_search, FetchKind, FetchedRecord, RecordSource, SearchOutput, SearchParams,
};
use crate::vectors::{Dataset, VertexId};

/// How long a worker blocks in the driver when nothing else can run.
const BLOCKING_POLL: Duration = Duration::from_millis(50);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SchedulerConfig {
    /// Concurrent queries per worker.
    pub batch_size: usize,
    pub workers: usize,
    /// Install same-colored page neighbours alongside each loaded record.
    pub cofetch: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            batch_size: 2,
            workers: 1,
            cofetch: true,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.workers == 0 {
            return Err(Error::invalid("batch size and worker count must be positive"));
        }
        Ok(())
    }
}

/// `max(1, ⌈alpha · io_latency / compute_time⌉)`, evaluated exactly on the
/// binary value of `alpha` and the nanosecond durations. Saturates at
/// `usize::MAX`.
pub fn compute_batch_size(alpha: f64, io_latency: Duration, compute_time: Duration) -> Result<usize> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive and finite, got {alpha}")));
    }
    if io_latency.is_zero() || compute_time.is_zero() {
        return Err(Error::invalid("I/O latency and compute time must be positive"));
    }
    // alpha = mantissa · 2^exp exactly.
    let bits = alpha.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1 << 52) - 1);
    let (mantissa, exp) = if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | 1 << 52, raw_exp - 1075)
    };
    let io = io_latency.as_nanos();
    let compute = compute_time.as_nanos();
    // mantissa < 2^53 and io < 2^94, so the product fits in 128 bits.
    let mut num = mantissa as u128 * io;
    let mut den = compute;
    if exp >= 0 {
        let e = exp as u32;
        if e >= num.leading_zeros() {
            return Ok(usize::MAX);
        }
        num <<= e;
    } else {
        let e = exp.unsigned_abs();
        if e >= den.leading_zeros() {
            // den would exceed 2^128 > num, so the quotient is in (0, 1).
            return Ok(1);
        }
        den <<= e;
    }
    let b = num.div_ceil(den).max(1);
    Ok(usize::try_from(b).unwrap_or(usize::MAX))
}

/// Which traversal the tasks run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchKind {
    BestFirst,
    CacheAware,
}

/// Result of one query, tagged with its position in the input.
#[derive(Debug)]
pub struct QueryOutcome {
    pub query: usize,
    pub output: Result<SearchOutput>,
    /// Admission to completion.
    pub latency: Duration,
    /// Time spent suspended.
    pub stall: Duration,
}

/// Suspend and resume notifications, for callers that account time
/// themselves.
pub trait TaskHooks {
    fn on_suspend(&mut self, _query: usize, _at: Instant) {}
    fn on_resume(&mut self, _query: usize, _at: Instant) {}
}

pub struct NoHooks;

impl TaskHooks for NoHooks {}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(m.clone()),
        Error::CorruptData(m) => Error::CorruptData(m.clone()),
        Error::BadMagic => Error::BadMagic,
        Error::VersionMismatch { found, expected } => Error::VersionMismatch {
            found: *found,
            expected: *expected,
        },
        Error::RetryLater => Error::RetryLater,
        Error::Logic(m) => Error::Logic(m.clone()),
        Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
    }
}

/// One outstanding read.
struct Wait {
    vid: VertexId,
    /// Absent for reads that bypass the pool.
    reservation: Option<Reservation>,
    waiters: Vec<usize>,
    /// Set on completion; each waiter takes a copy.
    result: Option<Result<Rc<Vec<u8>>>>,
    unread: usize,
}

/// Worker state the tasks reach through their sources.
struct Shared {
    page_size: usize,
    next_token: u64,
    /// Task being polled.
    current: usize,
    outbox: VecDeque<IoRequest>,
    waits: FxHashMap<u64, Wait>,
    /// This worker's in-flight loads, by vid.
    loading: FxHashMap<VertexId, u64>,
    ready: VecDeque<usize>,
    yielded: Vec<usize>,
    spare: Vec<Vec<u8>>,
}

impl Shared {
    fn new(page_size: usize) -> Self {
        Self {
            page_size,
            next_token: 1,
            current: usize::MAX,
            outbox: VecDeque::new(),
            waits: FxHashMap::default(),
            loading: FxHashMap::default(),
            ready: VecDeque::new(),
            yielded: Vec::new(),
            spare: Vec::new(),
        }
    }

    fn queue_read(&mut self, vid: VertexId, page_id: u32, reservation: Option<Reservation>) -> u64 {
        let token = self.next_token;
        self.next_token += 1;
        let buf = self.spare.pop().unwrap_or_else(|| vec![0; self.page_size]);
        self.outbox.push_back(IoRequest { token, page_id, buf });
        if reservation.is_some() {
            self.loading.insert(vid, token);
        }
        self.waits.insert(
            token,
            Wait {
                vid,
                reservation,
                waiters: Vec::new(),
                result: None,
                unread: 0,
            },
        );
        token
    }

    fn recycle(&mut self, buf: Vec<u8>) {
        if self.spare.len() < 64 {
            self.spare.push(buf);
        }
    }
}

/// Resolves to the page read under `token`.
struct AwaitPage {
    shared: Rc<RefCell<Shared>>,
    token: u64,
    registered: bool,
}

impl Future for AwaitPage {
    type Output = Result<Rc<Vec<u8>>>;

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Self::Output> {
        let shared = Rc::clone(&self.shared);
        let mut sh = shared.borrow_mut();
        let current = sh.current;
        let w = sh.waits.get_mut(&self.token).expect("wait entry outlives its waiters");
        if let Some(result) = &w.result {
            let out = match result {
                Ok(page) => Ok(Rc::clone(page)),
                Err(e) => Err(clone_error(e)),
            };
            w.unread -= 1;
            if w.unread == 0 {
                sh.waits.remove(&self.token);
            }
            return Poll::Ready(out);
        }
        if !self.registered {
            w.waiters.push(current);
            self.registered = true;
        }
        Poll::Pending
    }
}

/// Gives other tasks one turn.
struct YieldNow {
    shared: Rc<RefCell<Shared>>,
    yielded: bool,
}

impl Future for YieldNow {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        if self.yielded {
            return Poll::Ready(());
        }
        self.yielded = true;
        let mut sh = self.shared.borrow_mut();
        let current = sh.current;
        sh.yielded.push(current);
        Poll::Pending
    }
}

/// Record access for one task: pool first, reads through the worker.
struct TaskSource<'a> {
    index: &'a IndexFile,
    pool: &'a BufferPool,
    shared: Rc<RefCell<Shared>>,
}

impl TaskSource<'_> {
    async fn wait_page(&self, token: u64) -> Result<Rc<Vec<u8>>> {
        AwaitPage {
            shared: Rc::clone(&self.shared),
            token,
            registered: false,
        }
        .await
    }

    async fn yield_now(&self) {
        YieldNow {
            shared: Rc::clone(&self.shared),
            yielded: false,
        }
        .await
    }

    async fn read_into(&self, token: u64, vid: VertexId, out: &mut FetchedRecord) -> Result<()> {
        let page = self.wait_page(token).await?;
        out.decode_from_page(&page, vid, self.index.extended_len())
    }

    async fn fetch_async(&self, vid: VertexId, out: &mut FetchedRecord) -> Result<FetchKind> {
        loop {
            match self.pool.lookup(vid)? {
                Lookup::Resident(g) => {
                    out.copy_from(g.extended(), g.neighbors());
                    return Ok(FetchKind::Hit {
                        prefetched: g.prefetch_hit,
                    });
                }
                Lookup::Loading => {
                    let own = self.shared.borrow().loading.get(&vid).copied();
                    match own {
                        Some(token) => {
                            self.read_into(token, vid, out).await?;
                            return Ok(FetchKind::Joined);
                        }
                        // Loaded by another worker, or mid-eviction.
                        None => self.yield_now().await,
                    }
                }
                Lookup::OnDisk(page_id) => match self.pool.begin_load(vid, page_id) {
                    Ok(BeginLoad::Reserved(r)) => {
                        let token = self.shared.borrow_mut().queue_read(vid, page_id, Some(r));
                        self.read_into(token, vid, out).await?;
                        return Ok(FetchKind::Read);
                    }
                    Ok(BeginLoad::AlreadyLoading) => self.yield_now().await,
                    Ok(BeginLoad::Resident) => {}
                    Err(Error::RetryLater) => {
                        let token = self.shared.borrow_mut().queue_read(vid, page_id, None);
                        self.read_into(token, vid, out).await?;
                        return Ok(FetchKind::Direct);
                    }
                    Err(e) => return Err(e),
                },
            }
        }
    }
}

impl RecordSource for TaskSource<'_> {
    fn binary_code(&self, vid: VertexId) -> &[u8] {
        self.index.binary_code(vid)
    }

    fn residency(&self, vid: VertexId) -> Residency {
        self.pool
            .peek(vid)
            .unwrap_or(Residency::OnDisk(self.index.directory()[vid as usize]))
    }

    fn prefetch(&self, vid: VertexId) -> bool {
        if self.shared.borrow().loading.contains_key(&vid) {
            return false;
        }
        let Ok(Residency::OnDisk(page_id)) = self.pool.peek(vid) else {
            return false;
        };
        match self.pool.begin_prefetch(vid, page_id) {
            Ok(Some(BeginLoad::Reserved(r))) => {
                self.shared.borrow_mut().queue_read(vid, page_id, Some(r));
                true
            }
            _ => false,
        }
    }

    fn fetch(&self, vid: VertexId, out: &mut FetchedRecord) -> impl Future<Output = Result<FetchKind>> {
        self.fetch_async(vid, out)
    }
}

type TaskFuture<'a> = Pin<Box<dyn Future<Output = Result<SearchOutput>> + 'a>>;

struct Task<'a> {
    query: usize,
    fut: TaskFuture<'a>,
    admitted: Instant,
    suspended_at: Option<Instant>,
    stall: Duration,
}

/// An open index, its buffer pool and the I/O backend workers use.
pub struct Engine {
    index: Arc<IndexFile>,
    pool: BufferPool,
    backend: IoBackend,
}

impl Engine {
    /// Builds a pool holding up to `capacity` records.
    pub fn new(index: Arc<IndexFile>, capacity: usize, backend: IoBackend) -> Result<Self> {
        let config = PoolConfig::new(capacity, index.extended_len(), index.meta().max_degree);
        let pool = BufferPool::new(index.directory().to_vec(), config)?;
        Ok(Self { index, pool, backend })
    }

    pub fn with_pool(index: Arc<IndexFile>, pool: BufferPool, backend: IoBackend) -> Result<Self> {
        if pool.len() != index.len() {
            return Err(Error::invalid("pool and index disagree on the record count"));
        }
        Ok(Self { index, pool, backend })
    }

    pub fn index(&self) -> &IndexFile {
        &self.index
    }

    pub fn pool(&self) -> &BufferPool {
        &self.pool
    }

    pub fn backend(&self) -> &IoBackend {
        &self.backend
    }

    /// Loads records synchronously until the pool is full or every listed
    /// record is resident. Returns how many were loaded.
    pub fn preload(&self, vids: impl IntoIterator<Item = VertexId>) -> Result<usize> {
        let mut page = vec![0u8; self.index.page_size()];
        let mut loaded = 0;
        for vid in vids {
            if self.pool.free_count() == 0 {
                break;
            }
            let Residency::OnDisk(page_id) = self.pool.peek(vid)? else {
                continue;
            };
            if let Some(BeginLoad::Reserved(r)) = self.pool.begin_prefetch(vid, page_id)? {
                self.index.read_page_into(page_id, &mut page)?;
                self.pool.complete_load(r, &page, false)?;
                loaded += 1;
            }
        }
        // Preloaded records are not prefetch hits.
        for vid in 0..self.index.len() as VertexId {
            if let Lookup::Resident(g) = self.pool.lookup(vid)? {
                drop(g);
            }
        }
        Ok(loaded)
    }

    /// Runs every query, spread round-robin over `config.workers` threads.
    /// Outcomes come back in query order.
    pub fn run(
        &self,
        queries: &Dataset,
        kind: SearchKind,
        params: &SearchParams,
        config: &SchedulerConfig,
    ) -> Result<Vec<QueryOutcome>> {
        config.validate()?;
        params.validate()?;
        if queries.dim() != self.index.dim() {
            return Err(Error::invalid(format!(
                "query dimension {} does not match index dimension {}",
                queries.dim(),
                self.index.dim()
            )));
        }
        let workers = config.workers.min(queries.len().max(1));
        let mut outcomes = if workers == 1 {
            self.run_worker((0..queries.len()).map(|i| (i, queries.get(i))), kind, params, config, &mut NoHooks)?
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..workers)
                    .map(|w| {
                        s.spawn(move || {
                            let mine = (w..queries.len()).step_by(workers).map(|i| (i, queries.get(i)));
                            self.run_worker(mine, kind, params, config, &mut NoHooks)
                        })
                    })
                    .collect();
                let mut all = Vec::with_capacity(queries.len());
                for h in handles {
                    all.extend(h.join().expect("worker panicked")?);
                }
                Ok::<_, Error>(all)
            })?
        };
        outcomes.sort_by_key(|o| o.query);
        Ok(outcomes)
    }

    /// Runs one worker's share of queries to completion on the calling
    /// thread. Outcomes are in completion order.
    pub fn run_worker<'q>(
        &self,
        queries: impl IntoIterator<Item = (usize, &'q [f32])>,
        kind: SearchKind,
        params: &SearchParams,
        config: &SchedulerConfig,
        hooks: &mut dyn TaskHooks,
    ) -> Result<Vec<QueryOutcome>> {
        config.validate()?;
        params.validate()?;
        let source: Arc<dyn PageSource> = self.index.clone();
        let mut driver = self.backend.build(source);
        let shared = Rc::new(RefCell::new(Shared::new(self.index.page_size())));
        let mut queries = queries.into_iter().peekable();
        let mut tasks: Vec<Option<Task<'_>>> = (0..config.batch_size).map(|_| None).collect();
        let mut idle: Vec<usize> = (0..config.batch_size).rev().collect();
        let mut outcomes = Vec::new();
        let mut completions: Vec<IoCompletion> = Vec::new();
        let mut batch = Vec::new();
        let entry = self.index.entry_point();
        let mut cx = Context::from_waker(noop_waker_ref());

        loop {
            while let Some(&slot) = idle.last() {
                let Some((query, q)) = queries.next() else {
                    break;
                };
                idle.pop();
                let fut = self.task_future(q, entry, kind, *params, Rc::clone(&shared));
                tasks[slot] = Some(Task {
                    query,
                    fut,
                    admitted: Instant::now(),
                    suspended_at: None,
                    stall: Duration::ZERO,
                });
                shared.borrow_mut().ready.push_back(slot);
            }
            if idle.len() == tasks.len() && driver.in_flight() == 0 && shared.borrow().outbox.is_empty() {
                break;
            }

            let mut ready: Vec<usize> = shared.borrow_mut().ready.drain(..).collect();
            ready.dedup();
            for slot in ready {
                let Some(task) = tasks[slot].as_mut() else {
                    continue;
                };
                let now = Instant::now();
                if let Some(t) = task.suspended_at.take() {
                    task.stall += now - t;
                    hooks.on_resume(task.query, now);
                }
                shared.borrow_mut().current = slot;
                match task.fut.as_mut().poll(&mut cx) {
                    Poll::Ready(output) => {
                        let task = tasks[slot].take().unwrap();
                        outcomes.push(QueryOutcome {
                            query: task.query,
                            output,
                            latency: task.admitted.elapsed(),
                            stall: task.stall,
                        });
                        idle.push(slot);
                    }
                    Poll::Pending => {
                        let now = Instant::now();
                        task.suspended_at = Some(now);
                        hooks.on_suspend(task.query, now);
                    }
                }
            }

            {
                let mut sh = shared.borrow_mut();
                if !sh.outbox.is_empty() {
                    batch.extend(sh.outbox.drain(..));
                    let rejected = driver.submit(std::mem::take(&mut batch));
                    for r in rejected.into_iter().rev() {
                        sh.outbox.push_front(r);
                    }
                }
            }

            // Yielded tasks wait on another worker's load; they do not stop
            // this worker from blocking on its own reads, which may be what
            // the other worker is waiting for.
            let runnable = !shared.borrow().ready.is_empty() || (!idle.is_empty() && queries.peek().is_some());
            let wait = if runnable { Duration::ZERO } else { BLOCKING_POLL };
            if driver.in_flight() > 0 {
                driver.poll(wait, &mut completions);
            }
            for c in completions.drain(..) {
                self.complete(&shared, c, config.cofetch);
            }
            {
                let mut sh = shared.borrow_mut();
                let yielded = std::mem::take(&mut sh.yielded);
                sh.ready.extend(yielded);
            }
            self.pool.maintain();
        }
        Ok(outcomes)
    }

    fn task_future<'a>(
        &'a self,
        q: &'a [f32],
        entry: VertexId,
        kind: SearchKind,
        params: SearchParams,
        shared: Rc<RefCell<Shared>>,
    ) -> TaskFuture<'a> {
        Box::pin(async move {
            let tables = self.index.model().query_tables(q)?;
            let src = TaskSource {
                index: &self.index,
                pool: &self.pool,
                shared,
            };
            match kind {
                SearchKind::BestFirst => best_first_search(&src, &tables, entry, &params).await,
                SearchKind::CacheAware => cache_aware_search(&src, &tables, entry, &params).await,
            }
        })
    }

    /// Publishes a finished read to the pool and wakes its waiters.
    fn complete(&self, shared: &Rc<RefCell<Shared>>, c: IoCompletion, cofetch: bool) {
        let mut sh = shared.borrow_mut();
        let Some(mut w) = sh.waits.remove(&c.token) else {
            panic!("completion for unknown token {}", c.token);
        };
        if sh.loading.get(&w.vid) == Some(&c.token) {
            sh.loading.remove(&w.vid);
        }
        let outcome = match (c.outcome, w.reservation.take()) {
            (Err(e), r) => {
                if let Some(r) = r {
                    // The reservation is ours; abort only fails on a logic bug.
                    self.pool.abort_load(r).expect("abort of an owned reservation");
                }
                Err(Error::Io(e))
            }
            (Ok(()), Some(r)) => self.pool.complete_load(r, &c.buf, cofetch).map(drop),
            (Ok(()), None) => Ok(()),
        };
        if w.waiters.is_empty() {
            if let Err(e) = outcome {
                log::warn!("prefetch of vid {} failed: {e}", w.vid);
            }
            sh.recycle(c.buf);
            return;
        }
        w.unread = w.waiters.len();
        w.result = Some(outcome.map(|()| Rc::new(c.buf)));
        let waiters = std::mem::take(&mut w.waiters);
        sh.ready.extend(waiters);
        sh.waits.insert(c.token, w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn us(x: u64) -> Duration {
        Duration::from_micros(x)
    }

    #[test]
    fn batch_size_examples() {
        assert_eq!(compute_batch_size(1.0, us(100), us(50)).unwrap(), 2);
        assert_eq!(compute_batch_size(1.0, us(10), us(100)).unwrap(), 1);
        assert_eq!(compute_batch_size(1.0, us(100), us(100)).unwrap(), 1);
        assert_eq!(compute_batch_size(1.5, us(101), us(100)).unwrap(), 2);
        assert_eq!(compute_batch_size(0.5, us(200), us(50)).unwrap(), 2);
    }

    #[test]
    fn batch_size_rejects_bad_inputs() {
        assert!(compute_batch_size(0.0, us(1), us(1)).is_err());
        assert!(compute_batch_size(-1.0, us(1), us(1)).is_err());
        assert!(compute_batch_size(f64::NAN, us(1), us(1)).is_err());
        assert!(compute_batch_size(f64::INFINITY, us(1), us(1)).is_err());
        assert!(compute_batch_size(1.0, Duration::ZERO, us(1)).is_err());
        assert!(compute_batch_size(1.0, us(1), Duration::ZERO).is_err());
    }

    #[test]
    fn batch_size_extremes() {
        assert_eq!(compute_batch_size(f64::MIN_POSITIVE, us(1), us(1)).unwrap(), 1);
        assert_eq!(compute_batch_size(5e-324, Duration::MAX, Duration::from_nanos(1)).unwrap(), 1);
        assert_eq!(compute_batch_size(f64::MAX, us(1), us(1)).unwrap(), usize::MAX);
        assert_eq!(compute_batch_size(1e300, Duration::from_nanos(1), Duration::MAX).unwrap(), usize::MAX);
    }
}

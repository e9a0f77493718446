//! Simulated driver with a virtual clock.
//!
//! Each request completes `latency` after its batch was submitted, in
//! virtual time. Virtual time moves only when a blocking poll jumps to the
//! earliest deadline, so completion order depends only on the submission
//! sequence and the latency model. The blocking poll also sleeps until that
//! deadline in real time, so overlapping requests overlap on the wall clock.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use super::{to_io_error, IoCompletion, IoDriver, IoRequest, PageSource};

#[derive(Clone, Debug, PartialEq)]
pub enum LatencyModel {
    Fixed(Duration),
    /// Assigned to requests in submission order, cycling.
    Sequence(Vec<Duration>),
    /// Uniform in `[low, high]` from a seeded generator.
    Uniform {
        low: Duration,
        high: Duration,
        seed: u64,
    },
}

struct Pending {
    req: IoRequest,
    real_deadline: Instant,
}

pub struct SimDriver {
    source: Arc<dyn PageSource>,
    latency: LatencyModel,
    queue_depth: usize,
    next_in_sequence: usize,
    rng: ChaCha8Rng,
    virtual_now: Duration,
    deadlines: BinaryHeap<Reverse<(Duration, u64)>>,
    pending: FxHashMap<u64, Pending>,
}

impl SimDriver {
    pub fn new(source: Arc<dyn PageSource>, latency: LatencyModel, queue_depth: usize) -> Self {
        let seed = match &latency {
            LatencyModel::Uniform { seed, .. } => *seed,
            _ => 0,
        };
        Self {
            source,
            latency,
            queue_depth: queue_depth.max(1),
            next_in_sequence: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            virtual_now: Duration::ZERO,
            deadlines: BinaryHeap::new(),
            pending: FxHashMap::default(),
        }
    }

    /// Virtual time elapsed so far.
    pub fn now(&self) -> Duration {
        self.virtual_now
    }

    fn next_latency(&mut self) -> Duration {
        match &self.latency {
            LatencyModel::Fixed(d) => *d,
            LatencyModel::Sequence(seq) if seq.is_empty() => Duration::ZERO,
            LatencyModel::Sequence(seq) => {
                let d = seq[self.next_in_sequence % seq.len()];
                self.next_in_sequence += 1;
                d
            }
            LatencyModel::Uniform { low, high, .. } => {
                let (lo, hi) = (low.as_nanos() as u64, high.as_nanos().max(low.as_nanos()) as u64);
                Duration::from_nanos(self.rng.random_range(lo..=hi))
            }
        }
    }

    fn complete(&mut self, token: u64, out: &mut Vec<IoCompletion>) {
        let Pending { mut req, .. } = self.pending.remove(&token).expect("deadline without request");
        let outcome = self
            .source
            .read_page_into(req.page_id, &mut req.buf)
            .map_err(to_io_error);
        out.push(IoCompletion {
            token,
            page_id: req.page_id,
            buf: req.buf,
            outcome,
        });
    }
}

impl IoDriver for SimDriver {
    fn submit(&mut self, batch: Vec<IoRequest>) -> Vec<IoRequest> {
        let now = Instant::now();
        let room = self.queue_depth.saturating_sub(self.pending.len());
        let mut batch = batch.into_iter();
        for req in batch.by_ref().take(room) {
            let lat = self.next_latency();
            let token = req.token;
            self.deadlines.push(Reverse((self.virtual_now + lat, token)));
            let prev = self.pending.insert(
                token,
                Pending {
                    req,
                    real_deadline: now + lat,
                },
            );
            assert!(prev.is_none(), "token {token} already in flight");
        }
        batch.collect()
    }

    fn poll(&mut self, max_wait: Duration, out: &mut Vec<IoCompletion>) -> usize {
        let ready = |d: &BinaryHeap<Reverse<(Duration, u64)>>, now: Duration| {
            d.peek().is_some_and(|Reverse((t, _))| *t <= now)
        };
        if !ready(&self.deadlines, self.virtual_now) && !max_wait.is_zero() {
            let Some(&Reverse((next, token))) = self.deadlines.peek() else {
                return 0;
            };
            let real_deadline = self.pending[&token].real_deadline;
            let now = Instant::now();
            if real_deadline > now + max_wait {
                std::thread::sleep(max_wait);
                return 0;
            }
            if real_deadline > now {
                std::thread::sleep(real_deadline - now);
            }
            self.virtual_now = next;
        }
        let before = out.len();
        while ready(&self.deadlines, self.virtual_now) {
            let Reverse((_, token)) = self.deadlines.pop().unwrap();
            self.complete(token, out);
        }
        out.len() - before
    }

    fn in_flight(&self) -> usize {
        self.pending.len()
    }
}

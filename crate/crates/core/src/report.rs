//! Benchmark configurations and the rows they produce.
//!
//! The ablation ladder enables one mechanism per rung: concurrent tasks,
//! the record pool, prefetching, then cache-aware pivoting. Each rung runs
//! on a fresh pool so counters and residency never leak between rows.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::engine::{compute_batch_size, Engine, QueryOutcome, SchedulerConfig, SearchKind};
use crate::error::{Error, Result};
use crate::io::IoBackend;
use crate::layout::{one_record_per_page_fragmentation, IndexFile};
use crate::pool::PoolConfig;
use crate::search::SearchParams;
use crate::vectors::{mean_recall, Dataset, VertexId};

/// Recall is always reported at this depth.
pub const RECALL_DEPTH: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub label: String,
    pub kind: SearchKind,
    pub buffer_ratio: f64,
    pub search: SearchParams,
    pub scheduler: SchedulerConfig,
}

/// Settings the upper rungs of the ladder switch on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LadderSpec {
    pub batch_size: usize,
    pub workers: usize,
    pub buffer_ratio: f64,
    pub prefetch_depth: usize,
    pub beam_width: usize,
}

impl Default for LadderSpec {
    fn default() -> Self {
        Self {
            batch_size: 2,
            workers: 1,
            buffer_ratio: 0.1,
            prefetch_depth: 4,
            beam_width: 4,
        }
    }
}

/// Rungs in order: `baseline`, `+async`, `+record`, `+prefetch`, `+cbs`,
/// each at every list size.
pub fn ladder(spec: &LadderSpec, list_sizes: &[usize]) -> Vec<RunConfig> {
    let mut out = Vec::new();
    for &l in list_sizes {
        let k = RECALL_DEPTH.min(l);
        let sched = |batch_size| SchedulerConfig {
            batch_size,
            workers: spec.workers,
            cofetch: true,
        };
        let base = SearchParams::new(l, k);
        let rungs = [
            ("baseline", SearchKind::BestFirst, 0.0, base, sched(1)),
            ("+async", SearchKind::BestFirst, 0.0, base, sched(spec.batch_size)),
            ("+record", SearchKind::BestFirst, spec.buffer_ratio, base, sched(spec.batch_size)),
            (
                "+prefetch",
                SearchKind::CacheAware,
                spec.buffer_ratio,
                SearchParams {
                    prefetch_depth: spec.prefetch_depth,
                    ..base
                },
                sched(spec.batch_size),
            ),
            (
                "+cbs",
                SearchKind::CacheAware,
                spec.buffer_ratio,
                SearchParams {
                    prefetch_depth: spec.prefetch_depth,
                    beam_width: spec.beam_width.min(l),
                    ..base
                },
                sched(spec.batch_size),
            ),
        ];
        for (label, kind, buffer_ratio, search, scheduler) in rungs {
            out.push(RunConfig {
                label: label.to_string(),
                kind,
                buffer_ratio,
                search,
                scheduler,
            });
        }
    }
    out
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub config: String,
    pub list_size: usize,
    pub batch_size: usize,
    pub beam_width: usize,
    pub prefetch_depth: usize,
    pub buffer_ratio: f64,
    pub workers: usize,
    pub queries: usize,
    pub recall_at_10: f64,
    pub qps: f64,
    pub mean_latency_us: f64,
    pub median_latency_us: f64,
    pub p99_latency_us: f64,
    pub mean_ios: f64,
    pub mean_stall_us: f64,
    pub hit_rate: f64,
    pub fragmentation: f64,
}

/// Nearest-rank percentile of a sorted slice.
pub fn percentile(sorted: &[Duration], p: f64) -> Duration {
    if sorted.is_empty() {
        return Duration::ZERO;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn micros(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

/// Runs `config` on a fresh pool. Returns the row and the per-query
/// outcomes; any failed query fails the run.
pub fn run_config(
    index: &Arc<IndexFile>,
    backend: &IoBackend,
    queries: &Dataset,
    truth: &[Vec<VertexId>],
    config: &RunConfig,
) -> Result<(BenchRow, Vec<QueryOutcome>)> {
    if truth.len() != queries.len() {
        return Err(Error::invalid(format!(
            "{} ground-truth rows for {} queries",
            truth.len(),
            queries.len()
        )));
    }
    let capacity = PoolConfig::capacity_for_ratio(index.len(), config.buffer_ratio);
    let engine = Engine::new(Arc::clone(index), capacity, backend.clone())?;
    let start = Instant::now();
    let outcomes = engine.run(queries, config.kind, &config.search, &config.scheduler)?;
    let wall = start.elapsed();

    let mut ids = Vec::with_capacity(outcomes.len());
    let mut latencies = Vec::with_capacity(outcomes.len());
    let (mut ios, mut stall) = (0u64, Duration::ZERO);
    for o in &outcomes {
        let out = o
            .output
            .as_ref()
            .map_err(|e| Error::Logic(format!("query {} failed: {e}", o.query)))?;
        ids.push(out.result.ids.clone());
        latencies.push(o.latency);
        ios += out.metrics.ios() as u64;
        stall += o.stall;
    }
    latencies.sort_unstable();
    let count = outcomes.len().max(1) as f64;
    let depth = RECALL_DEPTH.min(config.search.k);
    let row = BenchRow {
        config: config.label.clone(),
        list_size: config.search.list_size,
        batch_size: config.scheduler.batch_size,
        beam_width: config.search.beam_width,
        prefetch_depth: config.search.prefetch_depth,
        buffer_ratio: config.buffer_ratio,
        workers: config.scheduler.workers,
        queries: outcomes.len(),
        recall_at_10: mean_recall(&ids, truth, depth)?,
        qps: outcomes.len() as f64 / wall.as_secs_f64().max(1e-9),
        mean_latency_us: latencies.iter().map(|&d| micros(d)).sum::<f64>() / count,
        median_latency_us: micros(percentile(&latencies, 50.0)),
        p99_latency_us: micros(percentile(&latencies, 99.0)),
        mean_ios: ios as f64 / count,
        mean_stall_us: micros(stall) / count,
        hit_rate: engine.pool().stats().hit_rate(),
        fragmentation: index.layout_stats()?.fragmentation(),
    };
    Ok((row, outcomes))
}

/// Layout and co-placement metrics read back from an index file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexStats {
    pub n: usize,
    pub dim: usize,
    pub page_size: usize,
    pub pages: usize,
    pub file_bytes: u64,
    pub fragmentation: f64,
    pub one_per_page_fragmentation: f64,
    /// Records carrying a non-zero page-local color.
    pub co_placed_records: usize,
    /// Distinct `(page, color)` groups with a non-zero color.
    pub groups: usize,
    pub mean_group_size: f64,
}

pub fn index_stats(index: &IndexFile) -> Result<IndexStats> {
    let mut sizes = Vec::with_capacity(index.len());
    let (mut co_placed, mut groups) = (0usize, 0usize);
    for pid in 0..index.page_count() as u32 {
        let page = index.read_page(pid)?;
        let mut colors = [false; 256];
        for slot in page.view().slots() {
            sizes.push(slot.length as usize);
            if slot.color != 0 {
                co_placed += 1;
                if !colors[slot.color as usize] {
                    colors[slot.color as usize] = true;
                    groups += 1;
                }
            }
        }
    }
    let layout = index.layout_stats()?;
    Ok(IndexStats {
        n: index.len(),
        dim: index.dim(),
        page_size: index.page_size(),
        pages: index.page_count(),
        file_bytes: index.file().metadata()?.len(),
        fragmentation: layout.fragmentation(),
        one_per_page_fragmentation: one_record_per_page_fragmentation(&sizes, index.page_size())?,
        co_placed_records: co_placed,
        groups,
        mean_group_size: if groups == 0 { 0.0 } else { co_placed as f64 / groups as f64 },
    })
}

/// Measured per-read latency and compute time between reads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub io_latency: Duration,
    pub compute_time: Duration,
    pub batch_size: usize,
}

/// Runs `queries` one at a time with no pool and derives the batch size
/// from the observed stall per read and compute per read.
pub fn calibrate_batch_size(
    index: &Arc<IndexFile>,
    backend: &IoBackend,
    queries: &Dataset,
    search: &SearchParams,
    alpha: f64,
) -> Result<Calibration> {
    let engine = Engine::new(Arc::clone(index), 0, backend.clone())?;
    let sched = SchedulerConfig {
        batch_size: 1,
        workers: 1,
        cofetch: true,
    };
    let outcomes = engine.run(queries, SearchKind::BestFirst, search, &sched)?;
    let (mut reads, mut stall, mut busy) = (0u64, Duration::ZERO, Duration::ZERO);
    for o in &outcomes {
        let out = o
            .output
            .as_ref()
            .map_err(|e| Error::Logic(format!("warmup query {} failed: {e}", o.query)))?;
        reads += out.metrics.ios() as u64;
        stall += o.stall;
        busy += o.latency.saturating_sub(o.stall);
    }
    if reads == 0 {
        return Err(Error::invalid("warmup issued no reads"));
    }
    let per_read = |d: Duration| Duration::from_nanos((d.as_nanos() / reads as u128).max(1) as u64);
    let (io_latency, compute_time) = (per_read(stall), per_read(busy));
    Ok(Calibration {
        io_latency,
        compute_time,
        batch_size: compute_batch_size(alpha, io_latency, compute_time)?,
    })
}

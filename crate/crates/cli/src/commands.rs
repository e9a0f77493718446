use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use recann::report::{self, calibrate_batch_size, index_stats, ladder, run_config, LadderSpec, RunConfig};
use recann::synthetic::{clustered, ClusteredSpec};
use recann::vecs::{read_ivecs, read_vectors, write_fvecs, write_ivecs};
use recann::{
    brute_force_topk, build_index, Dataset, Engine, Error, IndexFile, IndexParams, Result, SchedulerConfig,
    SearchKind, SearchParams,
};
use serde::Serialize;

use crate::{BenchArgs, BuildArgs, GenArgs, QueryArgs, RuntimeArgs, StatsArgs};

/// Queries used to calibrate the batch size when none is given.
const WARMUP_QUERIES: usize = 20;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_csv<T: Serialize>(out: Box<dyn Write>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let (base, queries) = clustered(&ClusteredSpec::new(a.n, a.dim, a.seed), a.queries)?;
    let depth = a.gt_k.min(a.n);
    if depth == 0 {
        return Err(Error::InvalidArgument("--gt-k must be positive".into()));
    }
    let truth = queries
        .iter()
        .map(|q| brute_force_topk(&base, q, depth).map(|r| r.ids))
        .collect::<Result<Vec<_>>>()?;
    write_fvecs(with_suffix(&a.prefix, ".base.fvecs"), &base)?;
    write_fvecs(with_suffix(&a.prefix, ".query.fvecs"), &queries)?;
    write_ivecs(with_suffix(&a.prefix, ".gt.ivecs"), &truth)?;
    Ok(())
}

fn build_params(a: &BuildArgs) -> Result<IndexParams> {
    let mut p = match &a.params {
        Some(path) => IndexParams::from_toml(&std::fs::read_to_string(path)?)?,
        None => IndexParams::default(),
    };
    if let Some(v) = a.page_size {
        p.page_size = v;
    }
    if let Some(v) = a.degree {
        p.degree = v;
    }
    if let Some(v) = a.l_build {
        p.l_build = v;
    }
    if let Some(v) = a.tau_percentile {
        p.tau_percentile = v;
    }
    if let Some(v) = a.seed {
        p.seed = v;
    }
    p.validate()?;
    Ok(p)
}

pub fn build(a: &BuildArgs) -> Result<()> {
    let params = build_params(a)?;
    let ds = read_vectors(&a.dataset, a.limit)?;
    let report = build_index(&ds, &params, &a.out)?;
    write_csv(output(None)?, &[report])
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    let index = IndexFile::open(&a.index)?;
    write_csv(output(None)?, &[index_stats(&index)?])
}

fn open_inputs(index: &Path, queries: &Path, limit: Option<usize>) -> Result<(Arc<IndexFile>, Dataset)> {
    let index = Arc::new(IndexFile::open(index)?);
    let queries = read_vectors(queries, limit)?;
    if queries.dim() != index.dim() {
        return Err(Error::InvalidArgument(format!(
            "queries have dimension {}, index has {}",
            queries.dim(),
            index.dim()
        )));
    }
    Ok((index, queries))
}

/// The given batch size, or one calibrated on a warmup prefix.
fn batch_size(rt: &RuntimeArgs, index: &Arc<IndexFile>, queries: &Dataset, search: &SearchParams) -> Result<usize> {
    if let Some(b) = rt.batch {
        return Ok(b);
    }
    let warmup: Vec<usize> = (0..queries.len().min(WARMUP_QUERIES)).collect();
    if warmup.is_empty() {
        return Ok(1);
    }
    let c = calibrate_batch_size(index, &rt.io_backend, &queries.select(&warmup), search, rt.alpha)?;
    log::info!(
        "calibrated batch size {} (read {:?}, compute {:?})",
        c.batch_size,
        c.io_latency,
        c.compute_time
    );
    Ok(c.batch_size)
}

pub fn query(a: &QueryArgs) -> Result<()> {
    let rt = &a.runtime;
    let (index, queries) = open_inputs(&a.index, &a.queries, rt.limit)?;
    let search = SearchParams {
        beam_width: rt.beam,
        prefetch_depth: rt.prefetch,
        ..SearchParams::new(a.list_size, a.k)
    };
    search.validate()?;
    let sched = SchedulerConfig {
        batch_size: batch_size(rt, &index, &queries, &SearchParams::new(a.list_size, a.k))?,
        workers: rt.workers,
        cofetch: true,
    };
    let capacity = recann::pool::PoolConfig::capacity_for_ratio(index.len(), rt.buffer_ratio);
    let engine = Engine::new(Arc::clone(&index), capacity, rt.io_backend.clone())?;
    let outcomes = engine.run(&queries, SearchKind::CacheAware, &search, &sched)?;
    let mut out = output(a.out.as_deref())?;
    for o in outcomes {
        let result = o.output?.result;
        let line: Vec<String> = result
            .ids
            .iter()
            .zip(&result.distances)
            .map(|(id, d)| format!("{id}:{d}"))
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

/// Ladder rows followed by batch and beam sweeps of the full configuration.
fn bench_configs(a: &BenchArgs, batch_size: usize) -> Vec<RunConfig> {
    let rt = &a.runtime;
    let spec = LadderSpec {
        batch_size,
        workers: rt.workers,
        buffer_ratio: rt.buffer_ratio,
        prefetch_depth: rt.prefetch,
        beam_width: rt.beam,
    };
    let mut configs = ladder(&spec, &a.list_sizes);
    for &l in &a.list_sizes {
        let full = ladder(&spec, &[l]).pop().expect("ladder has rungs");
        for &b in &a.batch_sweep {
            let mut c = full.clone();
            c.label = "batch-sweep".into();
            c.scheduler.batch_size = b;
            configs.push(c);
        }
        for &w in &a.beam_sweep {
            let mut c = full.clone();
            c.label = "beam-sweep".into();
            c.search.beam_width = w;
            configs.push(c);
        }
    }
    configs
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let rt = &a.runtime;
    let (index, queries) = open_inputs(&a.index, &a.queries, rt.limit)?;
    let truth = read_ivecs(&a.gt, rt.limit)?;
    if truth.len() != queries.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ground-truth rows for {} queries",
            truth.len(),
            queries.len()
        )));
    }
    if a.list_sizes.is_empty() {
        return Err(Error::InvalidArgument("--list-sizes is empty".into()));
    }
    let l = a.list_sizes[0];
    let b = batch_size(rt, &index, &queries, &SearchParams::new(l, report::RECALL_DEPTH.min(l)))?;
    let mut rows = Vec::new();
    for config in bench_configs(a, b) {
        config.search.validate()?;
        let (row, _) = run_config(&index, &rt.io_backend, &queries, &truth, &config)?;
        log::info!("{} L={} qps {:.0} recall {:.4}", row.config, row.list_size, row.qps, row.recall_at_10);
        rows.push(row);
    }
    write_csv(output(a.out.as_deref())?, &rows)
}

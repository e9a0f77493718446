mod common;

use std::sync::Arc;

use common::{clustered_fixture, params, sim};
use recann::layout::{encoded_record_len, plan_placement, write_index};
use recann::pool::{BufferPool, PoolConfig};
use recann::quantizer::{train, TrainParams};
use recann::search::{block_on, SyncSource};
use recann::synthetic::uniform;
use recann::vectors::{mean_recall, VertexId};
use recann::{
    best_first_search, cache_aware_search, AffinityDictionary, Engine, Graph, IndexFile, SchedulerConfig, SearchKind,
    SearchParams,
};

fn sync_search(index: &IndexFile, pool: Option<&BufferPool>, q: &[f32], params: &SearchParams) -> recann::SearchOutput {
    let src = SyncSource::new(index, pool, true);
    let tables = index.model().query_tables(q).unwrap();
    block_on(best_first_search(&src, &tables, index.entry_point(), params)).unwrap()
}

#[test]
fn complete_graph_matches_reconstruction_oracle() {
    let n = 200;
    let ds = uniform(n, 32, 11).unwrap();
    let queries = uniform(20, 32, 12).unwrap();
    let model = train(&ds, &TrainParams { num_clusters: 8, ..TrainParams::default() }).unwrap();
    let graph = Graph::complete(n, 0).unwrap();
    let sizes: Vec<usize> = (0..n as VertexId)
        .map(|v| encoded_record_len(model.extended_len(), graph.neighbors(v)))
        .collect();
    let plan = plan_placement(&AffinityDictionary::empty(n), &sizes, 4096).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("complete.bin");
    write_index(&path, &ds, &model, &graph, &plan).unwrap();
    let index = IndexFile::open(&path).unwrap();

    let recon: Vec<Vec<f32>> = ds
        .iter()
        .map(|v| {
            let mut code = vec![0u8; model.extended_len()];
            model.encode_extended_into(v, &mut code);
            model.decode_extended(&code)
        })
        .collect();
    let k = 10;
    for q in queries.iter() {
        let out = sync_search(&index, None, q, &SearchParams::new(n, k));
        assert_eq!(out.trace.len(), n, "L = n explores every vertex");
        let mut oracle: Vec<(f64, VertexId)> = recon
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d: f64 = r.iter().zip(q).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
                (d.sqrt(), i as VertexId)
            })
            .collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let kth = oracle[k - 1].0;
        for (rank, (&id, &d)) in out.result.ids.iter().zip(&out.result.distances).enumerate() {
            let exact = oracle.iter().find(|o| o.1 == id).unwrap().0;
            assert!((d as f64 - exact).abs() < 1e-3, "distance of {id}: {d} vs {exact}");
            assert!((d as f64 - oracle[rank].0).abs() < 1e-3);
            assert!(exact <= kth + 1e-3);
        }
    }
}

#[test]
fn query_at_entry_returns_entry() {
    let f = clustered_fixture(500, 32, 1, &params(4));
    let entry = f.index.entry_point();
    let q = f.data.get(entry as usize);
    let out = sync_search(&f.index, None, q, &SearchParams::new(16, 1));
    assert_eq!(out.result.ids, vec![entry]);
}

#[test]
fn recall_non_decreasing_in_list_size() {
    let f = clustered_fixture(2000, 32, 100, &params(9));
    let mut last = 0.0;
    for l in [16, 32, 64] {
        let results: Vec<Vec<VertexId>> = f
            .queries
            .iter()
            .map(|q| sync_search(&f.index, None, q, &SearchParams::new(l, 10)).result.ids)
            .collect();
        let r = mean_recall(&results, &f.truth, 10).unwrap();
        assert!(r >= last, "L={l}: {r} < {last}");
        last = r;
    }
}

#[test]
fn explored_count_bounded_by_n() {
    let f = clustered_fixture(300, 16, 10, &params(2));
    for q in f.queries.iter() {
        let out = sync_search(&f.index, None, q, &SearchParams::new(300, 10));
        assert!(out.trace.len() <= 300);
        let mut t = out.trace.clone();
        t.sort_unstable();
        t.dedup();
        assert_eq!(t.len(), out.trace.len(), "a vertex was explored twice");
    }
}

#[test]
fn zero_beam_width_matches_best_first_traces() {
    let f = clustered_fixture(1000, 32, 30, &params(5));
    let run = |kind, beam, prefetch| {
        let engine = Engine::new(Arc::clone(&f.index), 100, sim(5)).unwrap();
        let p = SearchParams {
            beam_width: beam,
            prefetch_depth: prefetch,
            ..SearchParams::new(32, 10)
        };
        let cfg = SchedulerConfig {
            batch_size: 1,
            ..SchedulerConfig::default()
        };
        engine
            .run(&f.queries, kind, &p, &cfg)
            .unwrap()
            .into_iter()
            .map(|o| o.output.unwrap().trace)
            .collect::<Vec<_>>()
    };
    let reference = run(SearchKind::BestFirst, 0, 0);
    assert_eq!(run(SearchKind::CacheAware, 0, 0), reference);
    assert_eq!(run(SearchKind::CacheAware, 0, 4), reference);
}

#[test]
fn fully_resident_pivoting_changes_nothing() {
    let f = clustered_fixture(1000, 32, 50, &params(6));
    let n = f.index.len();
    let engine = Engine::new(Arc::clone(&f.index), n, sim(5)).unwrap();
    assert_eq!(engine.preload(0..n as VertexId).unwrap(), n);
    let cfg = SchedulerConfig::default();
    let base = SearchParams::new(48, 10);
    let wide = SearchParams {
        beam_width: 4,
        prefetch_depth: 4,
        ..base
    };
    let a = engine.run(&f.queries, SearchKind::BestFirst, &base, &cfg).unwrap();
    let b = engine.run(&f.queries, SearchKind::CacheAware, &wide, &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let (x, y) = (x.output.as_ref().unwrap(), y.output.as_ref().unwrap());
        assert_eq!(x.result, y.result);
        assert_eq!(x.trace, y.trace);
        assert_eq!(y.metrics.pivots, 0);
        assert_eq!(y.metrics.ios(), 0);
    }
}

#[test]
fn sync_source_with_pool_matches_without() {
    let f = clustered_fixture(800, 16, 20, &params(8));
    let pool = BufferPool::new(
        f.index.directory().to_vec(),
        PoolConfig::new(80, f.index.extended_len(), f.index.meta().max_degree),
    )
    .unwrap();
    let p = SearchParams::new(32, 10);
    for q in f.queries.iter() {
        let plain = sync_search(&f.index, None, q, &p);
        let pooled = sync_search(&f.index, Some(&pool), q, &p);
        assert_eq!(plain.result, pooled.result);
        assert_eq!(plain.trace, pooled.trace);
    }
    pool.check_invariants().unwrap();
}

#[test]
fn prefetch_raises_hit_rate() {
    let f = clustered_fixture(2000, 32, 100, &params(10));
    let rate = |depth| {
        let engine = Engine::new(Arc::clone(&f.index), 200, sim(20)).unwrap();
        let p = SearchParams {
            prefetch_depth: depth,
            ..SearchParams::new(64, 10)
        };
        let out = engine
            .run(&f.queries, SearchKind::CacheAware, &p, &SchedulerConfig::default())
            .unwrap();
        assert!(out.iter().all(|o| o.output.is_ok()));
        engine.pool().stats().hit_rate()
    };
    let (off, on) = (rate(0), rate(4));
    assert!(on > off, "hit rate with prefetch {on} vs {off}");
}

#[test]
fn cache_aware_search_runs_synchronously() {
    let f = clustered_fixture(500, 16, 5, &params(3));
    let src = SyncSource::new(&f.index, None, false);
    for q in f.queries.iter() {
        let tables = f.index.model().query_tables(q).unwrap();
        let p = SearchParams {
            beam_width: 4,
            ..SearchParams::new(32, 10)
        };
        let out = block_on(cache_aware_search(&src, &tables, f.index.entry_point(), &p)).unwrap();
        assert_eq!(out.result.len(), 10);
    }
}

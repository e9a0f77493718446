#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use recann::io::{IoBackend, LatencyModel};
use recann::synthetic::{clustered, ClusteredSpec};
use recann::vectors::brute_force_topk;
use recann::{build_index, BuildReport, Dataset, IndexFile, IndexParams, VertexId};
use tempfile::TempDir;

pub struct Fixture {
    pub dir: TempDir,
    pub path: PathBuf,
    pub index: Arc<IndexFile>,
    pub data: Dataset,
    pub queries: Dataset,
    pub truth: Vec<Vec<VertexId>>,
    pub report: BuildReport,
}

pub fn params(seed: u64) -> IndexParams {
    IndexParams {
        degree: 32,
        l_build: 64,
        alpha: 1.2,
        num_clusters: 16,
        seed,
        ..IndexParams::default()
    }
}

/// Clustered data, its index and exact top-10 ground truth.
pub fn clustered_fixture(n: usize, dim: usize, num_queries: usize, params: &IndexParams) -> Fixture {
    let (data, queries) = clustered(&ClusteredSpec::new(n, dim, params.seed), num_queries).unwrap();
    fixture_from(data, queries, params)
}

pub fn fixture_from(data: Dataset, queries: Dataset, params: &IndexParams) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.bin");
    let report = build_index(&data, params, &path).unwrap();
    let index = Arc::new(IndexFile::open(&path).unwrap());
    let truth = queries
        .iter()
        .map(|q| brute_force_topk(&data, q, 10).unwrap().ids)
        .collect();
    Fixture {
        dir,
        path,
        index,
        data,
        queries,
        truth,
        report,
    }
}

pub fn sim(latency_us: u64) -> IoBackend {
    IoBackend::Sim {
        latency: LatencyModel::Fixed(Duration::from_micros(latency_us)),
        queue_depth: 64,
    }
}

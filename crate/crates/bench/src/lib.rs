//! Shared fixtures for the criterion benchmarks.

use std::sync::Arc;

use recann::synthetic::{clustered, ClusteredSpec};
use recann::{build_index, Dataset, IndexFile, IndexParams};
use tempfile::TempDir;

/// A built index with its queries. The directory lives as long as the
/// fixture.
pub struct Fixture {
    _dir: TempDir,
    pub index: Arc<IndexFile>,
    pub data: Dataset,
    pub queries: Dataset,
}

impl Fixture {
    pub fn clustered(n: usize, dim: usize, num_queries: usize) -> Self {
        let (data, queries) = clustered(&ClusteredSpec::new(n, dim, 7), num_queries).expect("generate dataset");
        let dir = tempfile::tempdir().expect("create temp dir");
        let path = dir.path().join("bench.idx");
        let params = IndexParams {
            num_clusters: 16,
            ..IndexParams::default()
        };
        build_index(&data, &params, &path).expect("build index");
        let index = Arc::new(IndexFile::open(&path).expect("open index"));
        Self {
            _dir: dir,
            index,
            data,
            queries,
        }
    }
}

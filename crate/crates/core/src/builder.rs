//! End-to-end index construction: train the quantizer, build the graph and
//! its affinity groups, plan the page layout and write the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, BuildParams};
use crate::layout::{
    affinity_bound, co_paged_fraction, encoded_record_len, one_record_per_page_fragmentation, plan_placement,
    write_index, MAX_PAGE_SIZE, MIN_PAGE_SIZE,
};
use crate::quantizer::{extended_code_len, train, TrainParams};
use crate::vectors::{Dataset, VertexId};

/// Everything that determines an index file. Loadable from TOML; missing
/// keys take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexParams {
    pub page_size: usize,
    /// Maximum out-degree.
    pub degree: usize,
    /// Candidate-list size of the construction search.
    pub l_build: usize,
    pub alpha: f32,
    /// Requested affinity-set size; capped by what a page can hold.
    pub k_affine: usize,
    /// Clamped to the dataset size.
    pub num_clusters: usize,
    pub sample_size: usize,
    /// Percentile of member-to-centroid distances that sets the affinity
    /// threshold. Zero disables co-placement.
    pub tau_percentile: f32,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            page_size: 4096,
            degree: 32,
            l_build: 64,
            alpha: 1.2,
            k_affine: 8,
            num_clusters: 64,
            sample_size: 20_000,
            tau_percentile: 5.0,
            seed: 42,
        }
    }
}

impl IndexParams {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("bad params file: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_PAGE_SIZE..=MAX_PAGE_SIZE).contains(&self.page_size) {
            return Err(Error::invalid(format!(
                "page size {} outside {MIN_PAGE_SIZE}..={MAX_PAGE_SIZE}",
                self.page_size
            )));
        }
        if self.num_clusters == 0 || self.sample_size == 0 {
            return Err(Error::invalid("num_clusters and sample_size must be positive"));
        }
        if !(0.0..=100.0).contains(&self.tau_percentile) {
            return Err(Error::invalid("tau_percentile must lie in [0, 100]"));
        }
        self.graph_params(0.0, self.k_affine).validate()
    }

    fn graph_params(&self, tau: f32, k_affine: usize) -> BuildParams {
        BuildParams {
            l_build: self.l_build,
            degree: self.degree,
            alpha: self.alpha,
            tau,
            k_affine,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuildReport {
    pub n: usize,
    pub dim: usize,
    pub degree: usize,
    pub tau: f32,
    pub k_affine: usize,
    pub mean_affinity: f64,
    /// Share of affinity pairs stored on the same page.
    pub co_paged: f64,
    pub pages: usize,
    pub fragmentation: f64,
    /// Fragmentation the same records would have one per page.
    pub one_per_page_fragmentation: f64,
    pub file_bytes: u64,
}

pub fn build_index(ds: &Dataset, params: &IndexParams, path: impl AsRef<Path>) -> Result<BuildReport> {
    params.validate()?;
    if ds.len() < 2 {
        return Err(Error::invalid("an index needs at least two vectors"));
    }
    let train_params = TrainParams {
        num_clusters: params.num_clusters.min(ds.len()),
        sample_size: params.sample_size,
        tau_percentile: params.tau_percentile,
        seed: params.seed,
    };
    let model = train(ds, &train_params)?;
    // Smallest possible record: the extended code, a count byte and one
    // one-byte neighbour id.
    let min_record = extended_code_len(ds.dim()) + 2;
    let k_affine = params.k_affine.min(affinity_bound(params.page_size, min_record)).max(1);
    let (graph, aff) = build_graph(ds, &params.graph_params(model.tau(), k_affine))?;
    let sizes: Vec<usize> = (0..ds.len() as VertexId)
        .map(|v| encoded_record_len(model.extended_len(), graph.neighbors(v)))
        .collect();
    let plan = plan_placement(&aff, &sizes, params.page_size)?;
    let report = write_index(path, ds, &model, &graph, &plan)?;
    Ok(BuildReport {
        n: ds.len(),
        dim: ds.dim(),
        degree: graph.max_degree(),
        tau: model.tau(),
        k_affine,
        mean_affinity: aff.mean_set_size(),
        co_paged: co_paged_fraction(&aff, &plan.page_of(ds.len())),
        pages: report.meta.page_count,
        fragmentation: report.layout.fragmentation(),
        one_per_page_fragmentation: one_record_per_page_fragmentation(&sizes, params.page_size)?,
        file_bytes: report.file_bytes,
    })
}

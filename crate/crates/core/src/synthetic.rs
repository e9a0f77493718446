//! Seeded Gaussian-mixture datasets for tests, benchmarks and the CLI `gen`
//! command.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::Dataset;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusteredSpec {
    pub n: usize,
    pub dim: usize,
    pub clusters: usize,
    /// Cluster centres are drawn uniformly from `[-spread, spread]^dim`.
    pub spread: f32,
    /// Per-dimension standard deviation of group centres around their
    /// cluster centre.
    pub sigma: f32,
    /// Points per group; 1 gives a plain Gaussian mixture.
    pub group_size: usize,
    /// Per-dimension standard deviation of points around their group centre.
    pub group_sigma: f32,
    pub seed: u64,
}

impl ClusteredSpec {
    pub fn new(n: usize, dim: usize, seed: u64) -> Self {
        Self {
            n,
            dim,
            clusters: 16,
            spread: 4.0,
            sigma: 1.0,
            group_size: 8,
            group_sigma: 0.2,
            seed,
        }
    }
}

/// Two-level Gaussian mixture: clusters of tight groups. Base vectors are
/// shuffled so vertex ids carry no locality. Each query is drawn around the
/// centre of a random group.
pub fn clustered(spec: &ClusteredSpec, num_queries: usize) -> Result<(Dataset, Dataset)> {
    if spec.n == 0 || spec.dim == 0 || spec.clusters == 0 || spec.group_size == 0 {
        return Err(Error::invalid("n, dim, clusters and group_size must be positive"));
    }
    let valid = |x: f32| x.is_finite() && x >= 0.0;
    if !(valid(spec.sigma) && valid(spec.spread) && valid(spec.group_sigma)) {
        return Err(Error::invalid("spread and standard deviations must be non-negative"));
    }
    let dim = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centre = Uniform::new_inclusive(-spec.spread, spec.spread)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let spread = Normal::new(0.0, spec.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let jitter = Normal::new(0.0, spec.group_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let centres: Vec<f32> = (0..spec.clusters * dim)
        .map(|_| centre.sample(&mut rng))
        .collect();
    let groups = spec.n.div_ceil(spec.group_size);
    let mut group_centres = Vec::with_capacity(groups * dim);
    for _ in 0..groups {
        let c = rng.random_range(0..spec.clusters);
        let base = &centres[c * dim..(c + 1) * dim];
        group_centres.extend(base.iter().map(|&x| x + spread.sample(&mut rng)));
    }
    let mut rows: Vec<Vec<f32>> = (0..spec.n)
        .map(|i| {
            let g = i / spec.group_size;
            group_centres[g * dim..(g + 1) * dim]
                .iter()
                .map(|&x| x + jitter.sample(&mut rng))
                .collect()
        })
        .collect();
    rows.shuffle(&mut rng);
    let base = Dataset::new(dim, rows.concat())?;

    let mut qrng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut queries = Vec::with_capacity(num_queries * dim);
    for _ in 0..num_queries {
        let g = qrng.random_range(0..groups);
        queries.extend(
            group_centres[g * dim..(g + 1) * dim]
                .iter()
                .map(|&x| x + jitter.sample(&mut qrng)),
        );
    }
    Ok((base, Dataset::new(dim, queries)?))
}

/// Independent uniform vectors in `[-1, 1]^dim`.
pub fn uniform(n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset::new(dim, (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let spec = ClusteredSpec::new(100, 8, 3);
        let (a, qa) = clustered(&spec, 10).unwrap();
        let (b, qb) = clustered(&spec, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(qa, qb);
        assert_eq!(a.len(), 100);
        assert_eq!(qa.len(), 10);
        assert_ne!(a.get(0), qa.get(0));
    }
}

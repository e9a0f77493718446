//! Bounded-degree proximity graph construction (single-pass Vamana) with
//! affinity extraction folded into the same pass.
//!
//! For every vertex `p` the builder runs a greedy search towards `p`, keeps
//! up to `k_affine` of the visited vertices that lie within `tau` of `p` as
//! its affinity set, prunes the visited set together with `p`'s current
//! out-neighbours into its new out-neighbours and adds back-edges,
//! re-pruning any neighbour whose degree overflows.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::{cmp_candidates, l2_squared, Dataset, ResultSet, VertexId};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildParams {
    /// Candidate-list size of the construction search.
    pub l_build: usize,
    /// Maximum out-degree `R`.
    pub degree: usize,
    pub alpha: f32,
    /// Affinity distance threshold.
    pub tau: f32,
    /// Maximum affinity-set size.
    pub k_affine: usize,
    pub seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            l_build: 64,
            degree: 32,
            alpha: 1.2,
            tau: 0.0,
            k_affine: 8,
            seed: 42,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 || self.l_build == 0 || self.k_affine == 0 {
            return Err(Error::invalid("l_build, degree and k_affine must be positive"));
        }
        if self.l_build < self.degree {
            return Err(Error::invalid(format!(
                "l_build ({}) must be at least the degree bound ({})",
                self.l_build, self.degree
            )));
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be finite and >= 1"));
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            return Err(Error::invalid("tau must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<VertexId>>,
    entry_point: VertexId,
}

impl Graph {
    /// Wraps adjacency lists, sorting them and checking the structural
    /// invariants (no self-loops, ids in range, no duplicates).
    pub fn new(mut adjacency: Vec<Vec<VertexId>>, entry_point: VertexId) -> Result<Self> {
        let n = adjacency.len();
        if n == 0 {
            return Err(Error::invalid("graph must have at least one vertex"));
        }
        if entry_point as usize >= n {
            return Err(Error::invalid("entry point out of range"));
        }
        for (v, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("duplicate edge at vertex {v}")));
            }
            if list.iter().any(|&u| u as usize >= n || u as usize == v) {
                return Err(Error::invalid(format!("bad edge at vertex {v}")));
            }
        }
        Ok(Self {
            adjacency,
            entry_point,
        })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn entry_point(&self) -> VertexId {
        self.entry_point
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.adjacency[v as usize]
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Complete directed graph, handy for exactness tests.
    pub fn complete(n: usize, entry_point: VertexId) -> Result<Self> {
        let adjacency = (0..n as VertexId)
            .map(|v| (0..n as VertexId).filter(|&u| u != v).collect())
            .collect();
        Self::new(adjacency, entry_point)
    }
}

/// Per-vertex affinity sets: `sets[p]` lists vertices within `tau` of `p`,
/// nearest first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AffinityDictionary {
    sets: Vec<Vec<VertexId>>,
}

impl AffinityDictionary {
    pub fn new(sets: Vec<Vec<VertexId>>) -> Self {
        Self { sets }
    }

    pub fn empty(n: usize) -> Self {
        Self {
            sets: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn get(&self, p: VertexId) -> &[VertexId] {
        &self.sets[p as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, &[VertexId])> {
        self.sets
            .iter()
            .enumerate()
            .map(|(p, s)| (p as VertexId, s.as_slice()))
    }

    pub fn mean_set_size(&self) -> f64 {
        if self.sets.is_empty() {
            return 0.0;
        }
        self.sets.iter().map(Vec::len).sum::<usize>() as f64 / self.sets.len() as f64
    }
}

/// Epoch-stamped membership set, reused across searches without clearing.
struct Visited {
    stamps: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self {
            stamps: vec![0; n],
            epoch: 0,
        }
    }

    fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamps.fill(0);
            self.epoch = 1;
        }
    }

    /// Marks `v`; returns false if it was already marked.
    fn insert(&mut self, v: VertexId) -> bool {
        let s = &mut self.stamps[v as usize];
        if *s == self.epoch {
            false
        } else {
            *s = self.epoch;
            true
        }
    }
}

/// Best-first search that returns every expanded vertex (with exact
/// distance, nearest first) and the final candidate list.
pub fn greedy_search(
    g: &Graph,
    ds: &Dataset,
    q: &[f32],
    l_build: usize,
) -> Result<(ResultSet, ResultSet)> {
    if g.len() != ds.len() {
        return Err(Error::invalid("graph and dataset sizes differ"));
    }
    if q.len() != ds.dim() {
        return Err(Error::invalid("query dimension mismatch"));
    }
    if l_build == 0 {
        return Err(Error::invalid("l_build must be positive"));
    }
    let mut seen = Visited::new(g.len());
    let (visited, frontier) = greedy_search_inner(g, ds, q, l_build, &mut seen);
    Ok((to_result(visited), to_result(frontier)))
}

fn to_result(pairs: Vec<(f32, VertexId)>) -> ResultSet {
    ResultSet {
        ids: pairs.iter().map(|p| p.1).collect(),
        distances: pairs.iter().map(|p| p.0.sqrt()).collect(),
    }
}

/// Returns `(visited, frontier)` as `(squared distance, id)` pairs.
fn greedy_search_inner(
    g: &Graph,
    ds: &Dataset,
    q: &[f32],
    l_build: usize,
    seen: &mut Visited,
) -> (Vec<(f32, VertexId)>, Vec<(f32, VertexId)>) {
    seen.reset();
    // (squared distance, id, expanded), nearest first.
    let mut list: Vec<(f32, VertexId, bool)> = Vec::with_capacity(l_build + 1);
    let ep = g.entry_point;
    seen.insert(ep);
    list.push((l2_squared(q, ds.get(ep as usize)), ep, false));
    let mut visited = Vec::new();
    while let Some(pos) = list.iter().position(|c| !c.2) {
        list[pos].2 = true;
        let (dist, v, _) = list[pos];
        visited.push((dist, v));
        for &u in g.neighbors(v) {
            if !seen.insert(u) {
                continue;
            }
            let d = l2_squared(q, ds.get(u as usize));
            if list.len() == l_build {
                let last = list[l_build - 1];
                if cmp_candidates(d, u, last.0, last.1).is_ge() {
                    continue;
                }
            }
            let at = list.partition_point(|c| cmp_candidates(c.0, c.1, d, u).is_lt());
            list.insert(at, (d, u, false));
            list.truncate(l_build);
        }
    }
    visited.sort_by(|a, b| cmp_candidates(a.0, a.1, b.0, b.1));
    let frontier = list.into_iter().map(|c| (c.0, c.1)).collect();
    (visited, frontier)
}

/// α-pruning: walk `candidates` (sorted by distance to `p`) nearest first,
/// keeping `v` only if every already-kept `u` satisfies
/// `alpha * d(u, v) > d(p, v)`. Stops after `degree` keeps. The result is
/// sorted by id.
pub fn robust_prune(
    ds: &Dataset,
    p: VertexId,
    candidates: &ResultSet,
    alpha: f32,
    degree: usize,
) -> Vec<VertexId> {
    let pairs: Vec<(f32, VertexId)> = candidates
        .ids
        .iter()
        .zip(&candidates.distances)
        .map(|(&id, &d)| (d * d, id))
        .collect();
    prune_sq(ds, p, &pairs, alpha, degree)
}

/// Same rule on squared distances: `alpha² d²(u, v) > d²(p, v)`.
fn prune_sq(
    ds: &Dataset,
    p: VertexId,
    candidates: &[(f32, VertexId)],
    alpha: f32,
    degree: usize,
) -> Vec<VertexId> {
    let alpha_sq = alpha * alpha;
    let mut kept: Vec<VertexId> = Vec::with_capacity(degree);
    for &(d_pv, v) in candidates {
        if kept.len() == degree {
            break;
        }
        if v == p || kept.contains(&v) {
            continue;
        }
        let vv = ds.get(v as usize);
        let dominated = kept
            .iter()
            .any(|&u| alpha_sq * l2_squared(ds.get(u as usize), vv) <= d_pv);
        if !dominated {
            kept.push(v);
        }
    }
    kept.sort_unstable();
    kept
}

/// Vertex nearest to the dataset mean.
pub fn medoid(ds: &Dataset) -> VertexId {
    let dim = ds.dim();
    let mut mean = vec![0.0f64; dim];
    for v in ds.iter() {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x as f64;
        }
    }
    let mean: Vec<f32> = mean.iter().map(|&m| (m / ds.len() as f64) as f32).collect();
    let mut best = (f32::INFINITY, 0);
    for (i, v) in ds.iter().enumerate() {
        let d = l2_squared(&mean, v);
        if cmp_candidates(d, i as VertexId, best.0, best.1).is_lt() {
            best = (d, i as VertexId);
        }
    }
    best.1
}

fn random_regular(n: usize, degree: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<VertexId>> {
    let d = degree.min(n - 1);
    (0..n)
        .map(|v| {
            let mut out: Vec<VertexId> = rand::seq::index::sample(rng, n - 1, d)
                .into_iter()
                .map(|u| if u >= v { u + 1 } else { u } as VertexId)
                .collect();
            out.sort_unstable();
            out
        })
        .collect()
}

/// Builds the graph and the affinity dictionary in one pass.
pub fn build_graph(ds: &Dataset, params: &BuildParams) -> Result<(Graph, AffinityDictionary)> {
    params.validate()?;
    let n = ds.len();
    if n < 2 {
        return Err(Error::invalid("graph construction needs at least two vectors"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut g = Graph {
        adjacency: random_regular(n, params.degree, &mut rng),
        entry_point: medoid(ds),
    };
    let mut order: Vec<VertexId> = (0..n as VertexId).collect();
    order.shuffle(&mut rng);

    let mut affinity = vec![Vec::new(); n];
    let mut seen = Visited::new(n);
    let tau_sq = if params.tau.is_infinite() {
        f32::INFINITY
    } else {
        params.tau * params.tau
    };
    let mut scratch: Vec<(f32, VertexId)> = Vec::new();
    for &p in &order {
        let (visited, _) = greedy_search_inner(&g, ds, ds.get(p as usize), params.l_build, &mut seen);

        let a_p = &mut affinity[p as usize];
        for &(d, v) in &visited {
            if a_p.len() == params.k_affine {
                break;
            }
            if v != p && d <= tau_sq {
                a_p.push(v);
            }
        }

        // Current out-edges stay candidates; dropping them loses the
        // long-range links made before p's neighbourhood became local.
        let mut candidates = visited;
        let base = ds.get(p as usize);
        for &u in &g.adjacency[p as usize] {
            if !candidates.iter().any(|c| c.1 == u) {
                candidates.push((l2_squared(base, ds.get(u as usize)), u));
            }
        }
        candidates.sort_by(|a, b| cmp_candidates(a.0, a.1, b.0, b.1));
        let out = prune_sq(ds, p, &candidates, params.alpha, params.degree);
        g.adjacency[p as usize] = out.clone();
        for v in out {
            let list = &mut g.adjacency[v as usize];
            if let Err(at) = list.binary_search(&p) {
                list.insert(at, p);
            }
            if list.len() > params.degree {
                let base = ds.get(v as usize);
                scratch.clear();
                scratch.extend(
                    list.iter()
                        .map(|&u| (l2_squared(base, ds.get(u as usize)), u)),
                );
                scratch.sort_by(|a, b| cmp_candidates(a.0, a.1, b.0, b.1));
                *list = prune_sq(ds, v, &scratch, params.alpha, params.degree);
            }
        }
    }
    Ok((g, AffinityDictionary::new(affinity)))
}

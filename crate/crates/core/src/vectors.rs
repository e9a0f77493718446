//! Dense float vectors, exact Euclidean distance, the brute-force ground-truth
//! oracle and Recall@k.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Vertex identifier. IDs are contiguous `0..n`.
pub type VertexId = u32;

/// A set of `n` vectors of one shared dimensionality, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f32>,
}

impl Dataset {
    /// Wraps row-major `data`. Rejects `dim == 0`, ragged lengths and
    /// non-finite components.
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "data length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite component in vector {}",
                pos / dim
            )));
        }
        if data.len() / dim > u32::MAX as usize {
            return Err(Error::invalid("too many vectors for 32-bit ids"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::invalid("empty dataset"))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::invalid(format!(
                    "row {i} has dim {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Copies the rows at `ids` into a new dataset.
    pub fn select(&self, ids: &[usize]) -> Dataset {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            data.extend_from_slice(self.get(i));
        }
        Dataset { dim: self.dim, data }
    }
}

/// Ranked answer to a query: ids with their distances, nearest first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultSet {
    pub ids: Vec<VertexId>,
    pub distances: Vec<f32>,
}

impl ResultSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Builds a result set from `(id, distance)` pairs, sorting them by
    /// distance with ties broken by the smaller id.
    pub fn from_pairs(mut pairs: Vec<(VertexId, f32)>) -> Self {
        pairs.sort_by(|a, b| cmp_candidates(a.1, a.0, b.1, b.0));
        let (ids, distances) = pairs.into_iter().unzip();
        Self { ids, distances }
    }

    pub fn truncate(&mut self, k: usize) {
        self.ids.truncate(k);
        self.distances.truncate(k);
    }
}

/// Total order used for every candidate ranking: by distance, then by id.
#[inline]
pub fn cmp_candidates(da: f32, ia: VertexId, db: f32, ib: VertexId) -> Ordering {
    da.total_cmp(&db).then(ia.cmp(&ib))
}

/// Squared L2 distance without dimension checks.
#[inline]
pub fn l2_squared(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the compiler vectorize.
    let mut acc = [0.0f32; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (x, y) in chunks_a.zip(chunks_b) {
        for j in 0..4 {
            let d = x[j] - y[j];
            acc[j] += d * d;
        }
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in tail_a.iter().zip(tail_b) {
        let d = x - y;
        sum += d * d;
    }
    sum
}

/// Euclidean distance between two vectors of equal dimension.
pub fn euclidean_distance(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(l2_squared(a, b).sqrt())
}

/// Exact k nearest neighbours of `q` by linear scan.
pub fn brute_force_topk(ds: &Dataset, q: &[f32], k: usize) -> Result<ResultSet> {
    if q.len() != ds.dim() {
        return Err(Error::invalid(format!(
            "query dim {} does not match dataset dim {}",
            q.len(),
            ds.dim()
        )));
    }
    if k == 0 || k > ds.len() {
        return Err(Error::invalid(format!(
            "k = {k} out of range 1..={}",
            ds.len()
        )));
    }
    let mut all: Vec<(VertexId, f32)> = ds
        .iter()
        .enumerate()
        .map(|(i, v)| (i as VertexId, l2_squared(q, v)))
        .collect();
    let cmp = |a: &(VertexId, f32), b: &(VertexId, f32)| cmp_candidates(a.1, a.0, b.1, b.0);
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    Ok(ResultSet {
        ids: all.iter().map(|p| p.0).collect(),
        distances: all.iter().map(|p| p.1.sqrt()).collect(),
    })
}

/// Fraction of the first `k` true neighbours found among the first `k`
/// returned ids. A result shorter than `k` simply contributes fewer hits.
pub fn recall_at_k(result: &[VertexId], truth: &[VertexId], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if truth.len() < k {
        return Err(Error::invalid(format!(
            "ground truth has {} entries, need at least {k}",
            truth.len()
        )));
    }
    let truth = &truth[..k];
    let hits = result
        .iter()
        .take(k)
        .enumerate()
        .filter(|&(i, id)| truth.contains(id) && !result[..i].contains(id))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Mean Recall@k over paired result / truth lists.
pub fn mean_recall<R: AsRef<[VertexId]>, T: AsRef<[VertexId]>>(
    results: &[R],
    truth: &[T],
    k: usize,
) -> Result<f64> {
    if results.len() != truth.len() {
        return Err(Error::invalid("result and truth counts differ"));
    }
    if results.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (r, t) in results.iter().zip(truth) {
        sum += recall_at_k(r.as_ref(), t.as_ref(), k)?;
    }
    Ok(sum / results.len() as f64)
}

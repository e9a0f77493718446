//! Per-dimension uniform scalar quantization.
//!
//! Each vector gets two codes: a 1-bit-per-dimension [`BinaryCode`] that stays
//! memory resident and drives neighbour distance estimates, and a
//! 4-bit-per-dimension [`ExtendedCode`] stored with the on-disk record and
//! used to refine the distance of every vertex the search actually visits.
//!
//! Training also runs k-means over a sample; the clustering yields the
//! co-placement threshold `tau` as the mean, over clusters, of the chosen
//! percentile of member-to-centroid distances.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::{l2_squared, Dataset};

const KMEANS_ITERATIONS: usize = 20;

/// Number of bytes in a binary code for `dim` dimensions.
pub const fn binary_code_len(dim: usize) -> usize {
    dim.div_ceil(8)
}

/// Number of bytes in an extended (4-bit) code for `dim` dimensions.
pub const fn extended_code_len(dim: usize) -> usize {
    dim.div_ceil(2)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryCode(pub Vec<u8>);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedCode(pub Vec<u8>);

impl ExtendedCode {
    pub fn value(&self, i: usize) -> u8 {
        nibble(&self.0, i)
    }
}

#[inline]
fn nibble(bytes: &[u8], i: usize) -> u8 {
    let b = bytes[i / 2];
    if i % 2 == 0 {
        b & 0x0f
    } else {
        b >> 4
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainParams {
    pub num_clusters: usize,
    pub sample_size: usize,
    /// Percentile (0..=100) of member-to-centroid distances that defines
    /// `tau`. Zero disables co-placement by forcing `tau = 0`.
    pub tau_percentile: f32,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            num_clusters: 64,
            sample_size: 20_000,
            tau_percentile: 5.0,
            seed: 42,
        }
    }
}

/// Common surface of the vector codecs the index can carry.
pub trait Quantizer {
    fn dim(&self) -> usize;
    fn encode_binary(&self, v: &[f32]) -> Result<BinaryCode>;
    fn encode_extended(&self, v: &[f32]) -> Result<ExtendedCode>;
    fn estimate_distance_binary(&self, q: &[f32], code: &[u8]) -> Result<f32>;
    fn estimate_distance_extended(&self, q: &[f32], code: &[u8]) -> Result<f32>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizerModel {
    dim: usize,
    per_dim_min: Vec<f32>,
    per_dim_max: Vec<f32>,
    /// Row-major `num_clusters x dim`.
    centroids: Vec<f32>,
    tau: f32,
}

impl QuantizerModel {
    pub fn from_parts(
        per_dim_min: Vec<f32>,
        per_dim_max: Vec<f32>,
        centroids: Vec<f32>,
        tau: f32,
    ) -> Result<Self> {
        let dim = per_dim_min.len();
        if dim == 0 || per_dim_max.len() != dim {
            return Err(Error::invalid("min/max arrays must be non-empty and equal length"));
        }
        if centroids.is_empty() || centroids.len() % dim != 0 {
            return Err(Error::invalid("centroids must be a non-empty multiple of dim"));
        }
        if per_dim_min
            .iter()
            .zip(&per_dim_max)
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
        {
            return Err(Error::invalid("per-dimension min must not exceed max"));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::invalid("tau must be finite and non-negative"));
        }
        Ok(Self {
            dim,
            per_dim_min,
            per_dim_max,
            centroids,
            tau,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau(&self) -> f32 {
        self.tau
    }

    pub fn per_dim_min(&self) -> &[f32] {
        &self.per_dim_min
    }

    pub fn per_dim_max(&self) -> &[f32] {
        &self.per_dim_max
    }

    pub fn num_clusters(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Returns a copy with `tau` replaced.
    pub fn with_tau(mut self, tau: f32) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::invalid("tau must be finite and non-negative"));
        }
        self.tau = tau;
        Ok(self)
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::invalid(format!(
                "vector dim {len} does not match model dim {}",
                self.dim
            )));
        }
        Ok(())
    }

    pub fn binary_len(&self) -> usize {
        binary_code_len(self.dim)
    }

    pub fn extended_len(&self) -> usize {
        extended_code_len(self.dim)
    }

    /// Writes the binary code of `v` into `out` (`binary_len` bytes).
    pub fn encode_binary_into(&self, v: &[f32], out: &mut [u8]) {
        out.fill(0);
        for (i, &x) in v.iter().enumerate() {
            let mid = (self.per_dim_min[i] + self.per_dim_max[i]) * 0.5;
            if x >= mid {
                out[i / 8] |= 1 << (i % 8);
            }
        }
    }

    /// Writes the 4-bit code of `v` into `out` (`extended_len` bytes).
    pub fn encode_extended_into(&self, v: &[f32], out: &mut [u8]) {
        out.fill(0);
        for (i, &x) in v.iter().enumerate() {
            let (lo, hi) = (self.per_dim_min[i], self.per_dim_max[i]);
            let value = if hi > lo {
                let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                (15.0 * t).round() as u8
            } else {
                0
            };
            out[i / 2] |= value << (4 * (i % 2));
        }
    }

    /// Reconstruction of a binary code: bit `b` maps to the lower or upper
    /// quarter point of the dimension's range.
    pub fn decode_binary(&self, code: &[u8]) -> Vec<f32> {
        (0..self.dim)
            .map(|i| {
                let bit = (code[i / 8] >> (i % 8)) & 1;
                let (lo, hi) = (self.per_dim_min[i], self.per_dim_max[i]);
                lo + if bit == 1 { 0.75 } else { 0.25 } * (hi - lo)
            })
            .collect()
    }

    pub fn decode_extended(&self, code: &[u8]) -> Vec<f32> {
        (0..self.dim)
            .map(|i| {
                let (lo, hi) = (self.per_dim_min[i], self.per_dim_max[i]);
                lo + nibble(code, i) as f32 / 15.0 * (hi - lo)
            })
            .collect()
    }

    /// Precomputes per-query lookup tables for fast estimates.
    pub fn query_tables(&self, q: &[f32]) -> Result<QueryTables> {
        self.check_dim(q.len())?;
        Ok(QueryTables::new(self, q))
    }

    /// Appends the little-endian serialized model to `out`.
    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_clusters() as u32).to_le_bytes());
        for x in self
            .per_dim_min
            .iter()
            .chain(&self.per_dim_max)
            .chain(&self.centroids)
        {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&self.tau.to_le_bytes());
    }

    /// Parses a model written by [`write_to`](Self::write_to); returns the
    /// model and the number of bytes consumed.
    pub fn read_from(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut cur = crate::layout::Cursor::new(bytes);
        let dim = cur.u32()? as usize;
        let k = cur.u32()? as usize;
        if dim == 0 || k == 0 {
            return Err(Error::corrupt("quantizer model has zero dim or clusters"));
        }
        let floats = dim
            .checked_mul(k + 2)
            .and_then(|x| x.checked_add(1))
            .ok_or_else(|| Error::corrupt("quantizer model size overflow"))?;
        if cur.remaining() < floats * 4 {
            return Err(Error::corrupt("truncated quantizer model"));
        }
        let mut read = |n: usize| -> Result<Vec<f32>> { (0..n).map(|_| cur.f32()).collect() };
        let lo = read(dim)?;
        let hi = read(dim)?;
        let centroids = read(dim * k)?;
        let tau = cur.f32()?;
        let consumed = cur.position();
        let model = Self::from_parts(lo, hi, centroids, tau)
            .map_err(|e| Error::corrupt(format!("invalid quantizer model: {e}")))?;
        Ok((model, consumed))
    }
}

impl Quantizer for QuantizerModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_binary(&self, v: &[f32]) -> Result<BinaryCode> {
        self.check_dim(v.len())?;
        let mut out = vec![0u8; self.binary_len()];
        self.encode_binary_into(v, &mut out);
        Ok(BinaryCode(out))
    }

    fn encode_extended(&self, v: &[f32]) -> Result<ExtendedCode> {
        self.check_dim(v.len())?;
        let mut out = vec![0u8; self.extended_len()];
        self.encode_extended_into(v, &mut out);
        Ok(ExtendedCode(out))
    }

    fn estimate_distance_binary(&self, q: &[f32], code: &[u8]) -> Result<f32> {
        self.check_dim(q.len())?;
        if code.len() != self.binary_len() {
            return Err(Error::invalid("binary code length does not match model"));
        }
        Ok(l2_squared(q, &self.decode_binary(code)).sqrt())
    }

    fn estimate_distance_extended(&self, q: &[f32], code: &[u8]) -> Result<f32> {
        self.check_dim(q.len())?;
        if code.len() != self.extended_len() {
            return Err(Error::invalid("extended code length does not match model"));
        }
        Ok(l2_squared(q, &self.decode_extended(code)).sqrt())
    }
}

/// Per-query tables: squared distance contributions for every byte value of
/// a binary code and every nibble value of an extended code.
#[derive(Clone, Debug)]
pub struct QueryTables {
    dim: usize,
    /// `binary_len x 256`.
    binary: Vec<f32>,
    /// `dim x 16`.
    extended: Vec<f32>,
}

impl QueryTables {
    fn new(m: &QuantizerModel, q: &[f32]) -> Self {
        let dim = m.dim;
        let nbytes = binary_code_len(dim);
        let mut binary = vec![0.0f32; nbytes * 256];
        for j in 0..nbytes {
            let dims = (j * 8)..((j * 8 + 8).min(dim));
            let mut c0 = [0.0f32; 8];
            let mut c1 = [0.0f32; 8];
            for (b, i) in dims.enumerate() {
                let (lo, hi) = (m.per_dim_min[i], m.per_dim_max[i]);
                let r0 = lo + 0.25 * (hi - lo);
                let r1 = lo + 0.75 * (hi - lo);
                c0[b] = (q[i] - r0) * (q[i] - r0);
                c1[b] = (q[i] - r1) * (q[i] - r1);
            }
            let table = &mut binary[j * 256..(j + 1) * 256];
            for (mask, slot) in table.iter_mut().enumerate() {
                *slot = (0..8)
                    .map(|b| if mask >> b & 1 == 1 { c1[b] } else { c0[b] })
                    .sum();
            }
        }
        let mut extended = vec![0.0f32; dim * 16];
        for i in 0..dim {
            let (lo, hi) = (m.per_dim_min[i], m.per_dim_max[i]);
            for v in 0..16 {
                let r = lo + v as f32 / 15.0 * (hi - lo);
                extended[i * 16 + v] = (q[i] - r) * (q[i] - r);
            }
        }
        Self {
            dim,
            binary,
            extended,
        }
    }

    /// Estimated distance to the vector behind a binary code.
    #[inline]
    pub fn binary_distance(&self, code: &[u8]) -> f32 {
        let mut sum = 0.0f32;
        for (j, &b) in code.iter().enumerate() {
            sum += self.binary[j * 256 + b as usize];
        }
        sum.max(0.0).sqrt()
    }

    /// Refined distance to the vector behind an extended code.
    #[inline]
    pub fn extended_distance(&self, code: &[u8]) -> f32 {
        let mut sum = 0.0f32;
        for (j, &b) in code.iter().enumerate() {
            let i = 2 * j;
            sum += self.extended[i * 16 + (b & 0x0f) as usize];
            if i + 1 < self.dim {
                sum += self.extended[(i + 1) * 16 + (b >> 4) as usize];
            }
        }
        sum.max(0.0).sqrt()
    }
}

/// Trains the model: per-dimension bounds and k-means centroids over a
/// seeded uniform sample, then `tau` from the cluster distance profile.
pub fn train(ds: &Dataset, params: &TrainParams) -> Result<QuantizerModel> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if params.num_clusters == 0 || params.num_clusters > ds.len() {
        return Err(Error::invalid(format!(
            "num_clusters {} out of range 1..={}",
            params.num_clusters,
            ds.len()
        )));
    }
    if params.sample_size == 0 {
        return Err(Error::invalid("sample_size must be positive"));
    }
    if !(0.0..=100.0).contains(&params.tau_percentile) {
        return Err(Error::invalid("tau_percentile must lie in [0, 100]"));
    }
    let dim = ds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let m = params.sample_size.min(ds.len());
    let mut ids = sample(&mut rng, ds.len(), m).into_vec();
    ids.sort_unstable();
    let sample = ds.select(&ids);

    let mut lo = vec![f32::INFINITY; dim];
    let mut hi = vec![f32::NEG_INFINITY; dim];
    for v in sample.iter() {
        for i in 0..dim {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }

    let k = params.num_clusters.min(m);
    let (centroids, assignment) = kmeans(&sample, k, &mut rng);

    let tau = if params.tau_percentile == 0.0 {
        0.0
    } else {
        let mut per_cluster: Vec<Vec<f32>> = vec![Vec::new(); k];
        for (v, &c) in sample.iter().zip(&assignment) {
            let centre = &centroids[c * dim..(c + 1) * dim];
            per_cluster[c].push(l2_squared(v, centre).sqrt());
        }
        let mut acc = 0.0f64;
        let mut count = 0usize;
        for mut d in per_cluster.into_iter().filter(|d| !d.is_empty()) {
            d.sort_by(f32::total_cmp);
            acc += percentile_nearest_rank(&d, params.tau_percentile) as f64;
            count += 1;
        }
        (acc / count as f64) as f32
    };
    QuantizerModel::from_parts(lo, hi, centroids, tau)
}

/// Nearest-rank percentile of an ascending slice.
fn percentile_nearest_rank(sorted: &[f32], p: f32) -> f32 {
    let rank = ((p as f64 / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn nearest_centroid(v: &[f32], centroids: &[f32], dim: usize) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (c, centre) in centroids.chunks_exact(dim).enumerate() {
        let d = l2_squared(v, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters keep their
/// previous centre.
fn kmeans(data: &Dataset, k: usize, rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<usize>) {
    let dim = data.dim();
    let n = data.len();
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(data.get(rng.random_range(0..n)));
    let mut d2: Vec<f32> = data.iter().map(|v| l2_squared(v, &centroids[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().map(|&x| x as f64).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &x) in d2.iter().enumerate() {
                target -= x as f64;
                if target < 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(data.get(pick));
        for (i, v) in data.iter().enumerate() {
            d2[i] = d2[i].min(l2_squared(v, &centroids[start..start + dim]));
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_ITERATIONS {
        for (i, v) in data.iter().enumerate() {
            assignment[i] = nearest_centroid(v, &centroids, dim).0;
        }
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (v, &c) in data.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(v) {
                *s += x as f64;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for j in 0..dim {
                centroids[c * dim + j] = (sums[c * dim + j] / counts[c] as f64) as f32;
            }
        }
    }
    for (i, v) in data.iter().enumerate() {
        assignment[i] = nearest_centroid(v, &centroids, dim).0;
    }
    (centroids, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn model_1d(lo: f32, hi: f32) -> QuantizerModel {
        QuantizerModel::from_parts(vec![lo], vec![hi], vec![lo], 0.0).unwrap()
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        fn ranks(x: &[f64]) -> Vec<f64> {
            let mut idx: Vec<usize> = (0..x.len()).collect();
            idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
            let mut r = vec![0.0; x.len()];
            for (rank, &i) in idx.iter().enumerate() {
                r[i] = rank as f64;
            }
            r
        }
        let (ra, rb) = (ranks(a), ranks(b));
        let n = a.len() as f64;
        let mean = (n - 1.0) / 2.0;
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
        let var: f64 = ra.iter().map(|x| (x - mean) * (x - mean)).sum();
        cov / var
    }

    fn trained(n: usize, dim: usize) -> (Dataset, QuantizerModel) {
        let ds = synthetic::uniform(n, dim, 7).unwrap();
        let m = train(
            &ds,
            &TrainParams {
                num_clusters: 4,
                sample_size: n,
                tau_percentile: 5.0,
                seed: 1,
            },
        )
        .unwrap();
        (ds, m)
    }

    #[test]
    fn identical_vectors_give_zero_tau() {
        let ds = Dataset::new(3, [1.0f32, 2.0, 3.0].repeat(50)).unwrap();
        let m = train(
            &ds,
            &TrainParams {
                num_clusters: 4,
                sample_size: 50,
                tau_percentile: 5.0,
                seed: 9,
            },
        )
        .unwrap();
        assert_eq!(m.tau(), 0.0);
        for c in 0..m.num_clusters() {
            assert_eq!(m.centroid(c), &[1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn two_blobs_tau_bounded_by_blob_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = Vec::new();
        for i in 0..400 {
            let centre = if i % 2 == 0 { 0.0 } else { 100.0 };
            data.push(centre + rng.random_range(-1.0f32..=1.0));
        }
        let ds = Dataset::new(1, data.clone()).unwrap();
        let m = train(
            &ds,
            &TrainParams {
                num_clusters: 2,
                sample_size: 400,
                tau_percentile: 5.0,
                seed: 4,
            },
        )
        .unwrap();
        // Oracle: exhaustive 5th percentile of distances to each blob mean.
        let mut oracle = 0.0f64;
        for centre in [0.0f32, 100.0] {
            let members: Vec<f32> = data
                .iter()
                .copied()
                .filter(|x| (x - centre).abs() < 50.0)
                .collect();
            let mean = members.iter().map(|&x| x as f64).sum::<f64>() / members.len() as f64;
            let mut d: Vec<f64> = members.iter().map(|&x| (x as f64 - mean).abs()).collect();
            d.sort_by(f64::total_cmp);
            oracle += d[(0.05 * d.len() as f64).ceil() as usize - 1];
        }
        oracle /= 2.0;
        assert!(m.tau() <= 2.0, "tau {}", m.tau());
        assert!((m.tau() as f64 - oracle).abs() < 1e-3, "{} vs {oracle}", m.tau());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = synthetic::uniform(500, 8, 2).unwrap();
        let p = TrainParams {
            num_clusters: 8,
            sample_size: 300,
            tau_percentile: 5.0,
            seed: 77,
        };
        let a = train(&ds, &p).unwrap();
        let b = train(&ds, &p).unwrap();
        assert_eq!(a.tau().to_bits(), b.tau().to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn train_rejects_bad_params() {
        let ds = synthetic::uniform(10, 2, 2).unwrap();
        let mut p = TrainParams {
            num_clusters: 11,
            sample_size: 10,
            tau_percentile: 5.0,
            seed: 0,
        };
        assert!(train(&ds, &p).is_err());
        p.num_clusters = 2;
        p.tau_percentile = 101.0;
        assert!(train(&ds, &p).is_err());
        let empty = Dataset::new(2, vec![]).unwrap();
        assert!(train(&empty, &TrainParams::default()).is_err());
    }

    #[test]
    fn zero_percentile_disables_tau() {
        let ds = synthetic::uniform(100, 4, 2).unwrap();
        let p = TrainParams {
            num_clusters: 4,
            sample_size: 100,
            tau_percentile: 0.0,
            seed: 0,
        };
        assert_eq!(train(&ds, &p).unwrap().tau(), 0.0);
    }

    #[test]
    fn binary_bounds_and_packing() {
        let lo: Vec<f32> = (0..9).map(|i| i as f32).collect();
        let hi: Vec<f32> = (0..9).map(|i| i as f32 + 2.0).collect();
        let m = QuantizerModel::from_parts(lo.clone(), hi.clone(), lo.clone(), 0.0).unwrap();
        assert_eq!(m.encode_binary(&lo).unwrap().0, vec![0, 0]);
        let top = m.encode_binary(&hi).unwrap().0;
        assert_eq!(top.len(), 2);
        assert_eq!(top, vec![0xff, 0x01]);
        assert!(m.encode_binary(&lo[..3]).is_err());
    }

    #[test]
    fn extended_bounds() {
        let (_, m) = trained(50, 7);
        let lo = m.per_dim_min().to_vec();
        let hi = m.per_dim_max().to_vec();
        let c = m.encode_extended(&lo).unwrap();
        assert!((0..7).all(|i| c.value(i) == 0));
        let c = m.encode_extended(&hi).unwrap();
        assert!((0..7).all(|i| c.value(i) == 15));
        // Trailing nibble of the odd-dimension code stays zero.
        assert_eq!(c.0[3] >> 4, 0);
    }

    #[test]
    fn extended_round_trip_within_half_step() {
        let (ds, m) = trained(300, 16);
        for v in ds.iter() {
            let rec = m.decode_extended(&m.encode_extended(v).unwrap().0);
            for i in 0..16 {
                let step = m.per_dim_max()[i] - m.per_dim_min()[i];
                assert!((v[i] - rec[i]).abs() <= step / 30.0 + 1e-5);
            }
        }
    }

    #[test]
    fn out_of_range_values_clamp() {
        let m = model_1d(0.0, 4.0);
        assert_eq!(m.encode_extended(&[-10.0]).unwrap().value(0), 0);
        assert_eq!(m.encode_extended(&[10.0]).unwrap().value(0), 15);
        assert_eq!(m.encode_binary(&[10.0]).unwrap().0, vec![1]);
    }

    #[test]
    fn binary_estimate_direct_formula() {
        let m = model_1d(0.0, 4.0);
        let code = m.encode_binary(&[3.9]).unwrap();
        assert_eq!(m.decode_binary(&code.0), vec![3.0]);
        assert_eq!(m.estimate_distance_binary(&[0.0], &code.0).unwrap(), 3.0);
        assert_eq!(m.estimate_distance_binary(&[3.0], &code.0).unwrap(), 0.0);
    }

    #[test]
    fn extended_estimate_identity_and_degenerate_dim() {
        let (ds, m) = trained(100, 5);
        let code = m.encode_extended(ds.get(3)).unwrap();
        let rec = m.decode_extended(&code.0);
        assert_eq!(m.estimate_distance_extended(&rec, &code.0).unwrap(), 0.0);

        let m = QuantizerModel::from_parts(vec![2.0], vec![2.0], vec![2.0], 0.0).unwrap();
        let code = m.encode_extended(&[2.0]).unwrap();
        assert_eq!(code.value(0), 0);
        assert_eq!(m.estimate_distance_extended(&[5.5], &code.0).unwrap(), 3.5);
    }

    #[test]
    fn tables_match_direct_estimates() {
        let (ds, m) = trained(200, 13);
        let q = ds.get(0);
        let t = m.query_tables(q).unwrap();
        for v in ds.iter().skip(1).take(50) {
            let b = m.encode_binary(v).unwrap();
            let e = m.encode_extended(v).unwrap();
            let (tb, db) = (t.binary_distance(&b.0), m.estimate_distance_binary(q, &b.0).unwrap());
            let (te, de) = (t.extended_distance(&e.0), m.estimate_distance_extended(q, &e.0).unwrap());
            assert!((tb - db).abs() <= 1e-4 * db.max(1.0), "{tb} vs {db}");
            assert!((te - de).abs() <= 1e-4 * de.max(1.0), "{te} vs {de}");
        }
    }

    #[test]
    fn binary_estimates_rank_correlate_with_exact() {
        let (ds, m) = trained(2000, 64);
        let (mut est, mut exact) = (Vec::new(), Vec::new());
        for p in 0..1000 {
            let (a, b) = (ds.get(2 * p), ds.get(2 * p + 1));
            let code = m.encode_binary(b).unwrap();
            est.push(m.estimate_distance_binary(a, &code.0).unwrap() as f64);
            exact.push(crate::vectors::euclidean_distance(a, b).unwrap() as f64);
        }
        let rho = spearman(&est, &exact);
        assert!(rho > 0.5, "spearman {rho}");
    }

    #[test]
    fn extended_beats_binary_on_most_pairs() {
        let (ds, m) = trained(2000, 64);
        let mut better = 0;
        for p in 0..1000 {
            let (a, b) = (ds.get(2 * p), ds.get(2 * p + 1));
            let exact = crate::vectors::euclidean_distance(a, b).unwrap();
            let eb = m
                .estimate_distance_binary(a, &m.encode_binary(b).unwrap().0)
                .unwrap();
            let ee = m
                .estimate_distance_extended(a, &m.encode_extended(b).unwrap().0)
                .unwrap();
            if (ee - exact).abs() <= (eb - exact).abs() {
                better += 1;
            }
        }
        assert!(better >= 900, "{better}/1000");
    }

    #[test]
    fn model_serialization_round_trip() {
        let (_, m) = trained(100, 6);
        let mut buf = vec![0xaa];
        m.write_to(&mut buf);
        let (back, used) = QuantizerModel::read_from(&buf[1..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(used, buf.len() - 1);
        assert!(QuantizerModel::read_from(&buf[1..buf.len() - 1]).is_err());
    }
}

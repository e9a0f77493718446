//! Affinity-aware assignment of records to pages.
//!
//! Affinity groups `{p} ∪ A_p` are laid out contiguously in ascending `p`
//! order, each tagged with a page-local color. A group that does not fit the
//! current page is preceded by padding with non-affine records; once those
//! run out, the group is split across the page boundary. Everything left
//! over is appended in ascending vid order with color 0.

use crate::error::{Error, Result};
use crate::graph::AffinityDictionary;
use crate::layout::page::{MAX_PAGE_SIZE, MIN_PAGE_SIZE, PAGE_HEADER_LEN, SLOT_LEN};
use crate::vectors::VertexId;

const MAX_SLOTS_PER_PAGE: usize = u8::MAX as usize;

/// Ordered `(vid, color)` assignments, one list per page.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlacementPlan {
    pub page_size: usize,
    pub pages: Vec<Vec<(VertexId, u8)>>,
}

impl PlacementPlan {
    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    /// `page_of[vid]` for every placed vid; `u32::MAX` marks unplaced ids.
    pub fn page_of(&self, n: usize) -> Vec<u32> {
        let mut out = vec![u32::MAX; n];
        for (pid, page) in self.pages.iter().enumerate() {
            for &(vid, _) in page {
                out[vid as usize] = pid as u32;
            }
        }
        out
    }
}

/// Largest affinity-set size that keeps a group of minimum-size records
/// within one page.
pub fn affinity_bound(page_size: usize, min_record_size: usize) -> usize {
    ((page_size - PAGE_HEADER_LEN) / (SLOT_LEN + min_record_size.max(1))).min(MAX_SLOTS_PER_PAGE)
}

struct Filler<'a> {
    sizes: &'a [usize],
    page_size: usize,
    pages: Vec<Vec<(VertexId, u8)>>,
    current: Vec<(VertexId, u8)>,
    used: usize,
    next_color: u8,
}

impl Filler<'_> {
    fn fits(&self, vid: VertexId) -> bool {
        self.current.len() < MAX_SLOTS_PER_PAGE
            && self.used + SLOT_LEN + self.sizes[vid as usize] <= self.page_size
    }

    fn group_fits(&self, group: &[VertexId]) -> bool {
        let bytes: usize = group.iter().map(|&v| SLOT_LEN + self.sizes[v as usize]).sum();
        self.current.len() + group.len() <= MAX_SLOTS_PER_PAGE && self.used + bytes <= self.page_size
    }

    fn push(&mut self, vid: VertexId, color: u8) {
        self.used += SLOT_LEN + self.sizes[vid as usize];
        self.current.push((vid, color));
    }

    fn close_page(&mut self) {
        if !self.current.is_empty() {
            self.pages.push(std::mem::take(&mut self.current));
        }
        self.used = PAGE_HEADER_LEN;
        self.next_color = 1;
    }

    fn take_color(&mut self) -> u8 {
        let c = self.next_color;
        self.next_color = if c == u8::MAX { 1 } else { c + 1 };
        c
    }

    /// Places a record, opening a new page if it does not fit.
    fn place(&mut self, vid: VertexId, color: u8) {
        if !self.fits(vid) {
            self.close_page();
        }
        self.push(vid, color);
    }
}

pub fn plan_placement(
    aff: &AffinityDictionary,
    record_sizes: &[usize],
    page_size: usize,
) -> Result<PlacementPlan> {
    if !(MIN_PAGE_SIZE..=MAX_PAGE_SIZE).contains(&page_size) {
        return Err(Error::invalid(format!("invalid page size {page_size}")));
    }
    let n = record_sizes.len();
    if aff.len() != n {
        return Err(Error::invalid("affinity dictionary and record sizes disagree on n"));
    }
    if let Some(v) = record_sizes
        .iter()
        .position(|&s| s + SLOT_LEN + PAGE_HEADER_LEN > page_size)
    {
        return Err(Error::invalid(format!(
            "record {v} ({} bytes) does not fit in a {page_size}-byte page",
            record_sizes[v]
        )));
    }
    for (p, set) in aff.iter() {
        if set.iter().any(|&v| v as usize >= n || v == p) {
            return Err(Error::invalid(format!("bad affinity set for vertex {p}")));
        }
    }

    let mut in_group = vec![false; n];
    for (p, set) in aff.iter() {
        if !set.is_empty() {
            in_group[p as usize] = true;
            for &v in set {
                in_group[v as usize] = true;
            }
        }
    }
    let non_affine: Vec<VertexId> = (0..n as VertexId).filter(|&v| !in_group[v as usize]).collect();
    let mut next_non_affine = 0usize;

    let mut placed = vec![false; n];
    let mut f = Filler {
        sizes: record_sizes,
        page_size,
        pages: Vec::new(),
        current: Vec::new(),
        used: PAGE_HEADER_LEN,
        next_color: 1,
    };
    let mut group = Vec::new();
    for (p, set) in aff.iter() {
        if set.is_empty() {
            continue;
        }
        group.clear();
        group.extend(
            std::iter::once(p)
                .chain(set.iter().copied())
                .filter(|&v| !placed[v as usize]),
        );
        group.dedup();
        if group.is_empty() {
            continue;
        }
        for &v in &group {
            placed[v as usize] = true;
        }
        if group.len() == 1 {
            // A lone leftover has nothing to be co-fetched with.
            f.place(group[0], 0);
            continue;
        }
        if !f.current.is_empty() && !f.group_fits(&group) && next_non_affine < non_affine.len() {
            while let Some(&v) = non_affine.get(next_non_affine) {
                if !f.fits(v) {
                    break;
                }
                f.push(v, 0);
                placed[v as usize] = true;
                next_non_affine += 1;
            }
            f.close_page();
        }
        let mut color = f.take_color();
        for &v in &group {
            if !f.fits(v) {
                f.close_page();
                color = f.take_color();
            }
            f.push(v, color);
        }
    }
    for v in 0..n as VertexId {
        if !placed[v as usize] {
            f.place(v, 0);
        }
    }
    f.close_page();
    Ok(PlacementPlan {
        page_size,
        pages: f.pages,
    })
}

/// Fraction of `(p, v)` affinity pairs, `v ∈ A_p`, stored on the same page.
pub fn co_paged_fraction(aff: &AffinityDictionary, page_of: &[u32]) -> f64 {
    let (mut together, mut total) = (0usize, 0usize);
    for (p, set) in aff.iter() {
        for &v in set {
            total += 1;
            if page_of[p as usize] == page_of[v as usize] {
                together += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        together as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, BuildParams};
    use crate::quantizer::{train, TrainParams};
    use crate::synthetic::{self, ClusteredSpec};

    fn check_bijection(plan: &PlacementPlan, n: usize) {
        let mut seen = vec![0u32; n];
        for page in &plan.pages {
            for &(v, _) in page {
                seen[v as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    fn check_capacity(plan: &PlacementPlan, sizes: &[usize], page_size: usize) {
        for page in &plan.pages {
            let bytes: usize = page.iter().map(|&(v, _)| SLOT_LEN + sizes[v as usize]).sum();
            assert!(PAGE_HEADER_LEN + bytes <= page_size);
        }
    }

    #[test]
    fn empty_affinity_packs_in_vid_order() {
        let sizes = vec![100usize; 50];
        let plan = plan_placement(&AffinityDictionary::empty(50), &sizes, 512).unwrap();
        let flat: Vec<_> = plan.pages.iter().flatten().copied().collect();
        assert_eq!(flat, (0..50).map(|v| (v, 0)).collect::<Vec<_>>());
        // (512 - 5) / 109 = 4 records per page.
        assert!(plan.pages.iter().all(|p| p.len() <= 4));
        assert_eq!(plan.pages[0].len(), 4);
    }

    #[test]
    fn small_group_lands_on_one_page() {
        let mut sets = vec![Vec::new(); 10];
        sets[2] = vec![7, 5];
        let plan = plan_placement(&AffinityDictionary::new(sets), &[50; 10], 4096).unwrap();
        check_bijection(&plan, 10);
        let page = &plan.pages[0];
        let colors: Vec<u8> = [2u32, 7, 5]
            .iter()
            .map(|v| page.iter().find(|e| e.0 == *v).unwrap().1)
            .collect();
        assert!(colors[0] != 0 && colors.iter().all(|&c| c == colors[0]));
        assert_eq!(page[..3], [(2, 1), (7, 1), (5, 1)]);
    }

    #[test]
    fn pads_with_non_affine_before_new_page() {
        // Page fits 4 records of 100 bytes. Groups of 3 force padding.
        let mut sets = vec![Vec::new(); 12];
        sets[0] = vec![1, 2];
        sets[3] = vec![4, 5];
        let plan = plan_placement(&AffinityDictionary::new(sets), &[100; 12], 512).unwrap();
        check_bijection(&plan, 12);
        assert_eq!(plan.pages[0], vec![(0, 1), (1, 1), (2, 1), (6, 0)]);
        assert_eq!(plan.pages[1][..3], [(3, 1), (4, 1), (5, 1)]);
    }

    #[test]
    fn splits_when_no_padding_left() {
        let mut sets = vec![Vec::new(); 6];
        sets[0] = vec![1, 2];
        sets[3] = vec![4, 5];
        let plan = plan_placement(&AffinityDictionary::new(sets), &[100; 6], 512).unwrap();
        check_bijection(&plan, 6);
        assert_eq!(plan.pages[0], vec![(0, 1), (1, 1), (2, 1), (3, 2)]);
        // The split remainder receives the next page's first color.
        assert_eq!(plan.pages[1], vec![(4, 1), (5, 1)]);
    }

    #[test]
    fn oversized_record_rejected() {
        assert!(plan_placement(&AffinityDictionary::empty(2), &[10, 600], 512).is_err());
    }

    #[test]
    fn clustered_data_co_pages_affine_pairs() {
        let (ds, _) = synthetic::clustered(&ClusteredSpec::new(1500, 16, 5), 0).unwrap();
        let model = train(&ds, &TrainParams { num_clusters: 16, ..TrainParams::default() }).unwrap();
        let params = BuildParams {
            l_build: 32,
            degree: 16,
            tau: model.tau(),
            k_affine: 8,
            ..BuildParams::default()
        };
        let (_, aff) = build_graph(&ds, &params).unwrap();
        assert!(aff.mean_set_size() > 1.0);
        let sizes = vec![80usize; ds.len()];
        let plan = plan_placement(&aff, &sizes, 4096).unwrap();
        check_bijection(&plan, ds.len());
        check_capacity(&plan, &sizes, 4096);
        let baseline = plan_placement(&AffinityDictionary::empty(ds.len()), &sizes, 4096).unwrap();
        let with = co_paged_fraction(&aff, &plan.page_of(ds.len()));
        let without = co_paged_fraction(&aff, &baseline.page_of(ds.len()));
        assert!(with >= 3.0 * without, "{with} vs {without}");
    }

    #[test]
    fn bound_matches_page_capacity() {
        assert_eq!(affinity_bound(4096, 64), (4096 - 5) / 73);
        assert_eq!(affinity_bound(65535, 1), 255);
    }
}

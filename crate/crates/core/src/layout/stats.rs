//! Space accounting for packed pages and for the alternative layouts the
//! slotted format replaces.

use crate::error::{Error, Result};
use crate::layout::page::{PageView, PAGE_HEADER_LEN, SLOT_LEN};

/// Occupancy of a set of slotted pages. Slot and header bytes count as used.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LayoutStats {
    pub pages: usize,
    pub page_size: usize,
    pub records: usize,
    pub record_bytes: usize,
    pub free_bytes: usize,
}

impl LayoutStats {
    /// Accumulates one page.
    pub fn add_page(&mut self, page: &PageView<'_>) {
        self.pages += 1;
        self.page_size = page.page_size();
        self.records += page.count();
        self.record_bytes += page.heap_used();
        self.free_bytes += page.free_space();
    }

    pub fn from_pages<'a>(pages: impl IntoIterator<Item = PageView<'a>>) -> Self {
        let mut s = Self::default();
        for p in pages {
            s.add_page(&p);
        }
        s
    }

    pub fn total_bytes(&self) -> usize {
        self.pages * self.page_size
    }

    /// Σ free bytes / Σ page bytes.
    pub fn fragmentation(&self) -> f64 {
        if self.pages == 0 {
            0.0
        } else {
            self.free_bytes as f64 / self.total_bytes() as f64
        }
    }
}

fn check_sizes(sizes: &[usize], page_size: usize) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::invalid("no records"));
    }
    if let Some(s) = sizes
        .iter()
        .find(|&&s| s + PAGE_HEADER_LEN + SLOT_LEN > page_size)
    {
        return Err(Error::invalid(format!("record of {s} bytes exceeds a {page_size}-byte page")));
    }
    Ok(())
}

/// Fragmentation when each record occupies its own slotted page.
pub fn one_record_per_page_fragmentation(sizes: &[usize], page_size: usize) -> Result<f64> {
    check_sizes(sizes, page_size)?;
    let used: usize = sizes.iter().map(|s| s + PAGE_HEADER_LEN + SLOT_LEN).sum();
    let total = sizes.len() * page_size;
    Ok((total - used) as f64 / total as f64)
}

/// Fragmentation when every record is padded to the largest record size and
/// packed `⌊page_size / max_size⌋` to a page with no slot directory.
pub fn fixed_record_fragmentation(sizes: &[usize], page_size: usize) -> Result<f64> {
    check_sizes(sizes, page_size)?;
    let max = *sizes.iter().max().unwrap();
    let per_page = page_size / max.max(1);
    let pages = sizes.len().div_ceil(per_page);
    let used: usize = sizes.iter().sum();
    let total = pages * page_size;
    Ok((total - used) as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::page::Page;

    #[test]
    fn stats_of_hand_built_pages() {
        let mut a = Page::new(512).unwrap();
        a.insert(1, 0, &[0; 100]).unwrap();
        a.insert(2, 0, &[0; 50]).unwrap();
        let mut b = Page::new(512).unwrap();
        b.insert(3, 0, &[0; 200]).unwrap();
        let s = LayoutStats::from_pages([a.view(), b.view()]);
        assert_eq!(s.pages, 2);
        assert_eq!(s.records, 3);
        assert_eq!(s.record_bytes, 350);
        assert_eq!(s.free_bytes, (512 - 5 - 18 - 150) + (512 - 5 - 9 - 200));
        assert!((s.fragmentation() - s.free_bytes as f64 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn one_per_page_arithmetic() {
        let f = one_record_per_page_fragmentation(&[100, 200], 1000).unwrap();
        assert!((f - (2000.0 - 114.0 - 214.0) / 2000.0).abs() < 1e-12);
        assert!(one_record_per_page_fragmentation(&[], 1000).is_err());
        assert!(one_record_per_page_fragmentation(&[990], 1000).is_err());
    }

    #[test]
    fn fixed_record_arithmetic() {
        // max 300 -> 3 per page, 4 records -> 2 pages.
        let f = fixed_record_fragmentation(&[100, 300, 200, 300], 1000).unwrap();
        assert!((f - (2000.0 - 900.0) / 2000.0).abs() < 1e-12);
    }
}

//! Batched asynchronous page reads.
//!
//! A driver accepts batches of [`IoRequest`]s and hands back one
//! [`IoCompletion`] per request, in any order. Each request owns its
//! destination buffer; the completion returns it.

mod sim;
mod threaded;

use std::io;
use std::sync::Arc;
use std::time::Duration;

pub use sim::{LatencyModel, SimDriver};
pub use threaded::ThreadedDriver;

use crate::error::Result;
use crate::layout::IndexFile;

/// Anything that can fill a buffer with one page.
pub trait PageSource: Send + Sync {
    fn page_size(&self) -> usize;
    fn read_page_into(&self, page_id: u32, buf: &mut [u8]) -> Result<()>;
}

impl PageSource for IndexFile {
    fn page_size(&self) -> usize {
        IndexFile::page_size(self)
    }

    fn read_page_into(&self, page_id: u32, buf: &mut [u8]) -> Result<()> {
        IndexFile::read_page_into(self, page_id, buf)
    }
}

#[derive(Debug)]
pub struct IoRequest {
    pub token: u64,
    pub page_id: u32,
    /// At least one page long.
    pub buf: Vec<u8>,
}

#[derive(Debug)]
pub struct IoCompletion {
    pub token: u64,
    pub page_id: u32,
    pub buf: Vec<u8>,
    pub outcome: io::Result<()>,
}

pub trait IoDriver {
    /// Queues as many requests as the submission queue has room for and
    /// returns the rest, in order, for the caller to resubmit later.
    fn submit(&mut self, batch: Vec<IoRequest>) -> Vec<IoRequest>;

    /// Appends ready completions to `out`. Waits up to `max_wait` for the
    /// first one when none is ready; `Duration::ZERO` never blocks.
    fn poll(&mut self, max_wait: Duration, out: &mut Vec<IoCompletion>) -> usize;

    /// Requests submitted and not yet returned by `poll`.
    fn in_flight(&self) -> usize;
}

/// Which driver each worker builds.
#[derive(Clone, Debug, PartialEq)]
pub enum IoBackend {
    /// Positional reads on a pool of I/O threads.
    Threaded { threads: usize, queue_depth: usize },
    /// In-process reads completed after a modelled latency.
    Sim { latency: LatencyModel, queue_depth: usize },
}

impl IoBackend {
    pub fn build(&self, source: Arc<dyn PageSource>) -> Box<dyn IoDriver> {
        match self {
            IoBackend::Threaded {
                threads,
                queue_depth,
            } => Box::new(ThreadedDriver::new(source, *threads, *queue_depth)),
            IoBackend::Sim {
                latency,
                queue_depth,
            } => Box::new(SimDriver::new(source, latency.clone(), *queue_depth)),
        }
    }

    /// Parses `real` or `sim:<latency-µs>`.
    pub fn parse(spec: &str) -> Option<Self> {
        const DEPTH: usize = 64;
        if spec == "real" {
            return Some(IoBackend::Threaded {
                threads: 4,
                queue_depth: DEPTH,
            });
        }
        let us: f64 = spec.strip_prefix("sim:")?.parse().ok()?;
        (us.is_finite() && us >= 0.0).then(|| IoBackend::Sim {
            latency: LatencyModel::Fixed(Duration::from_secs_f64(us * 1e-6)),
            queue_depth: DEPTH,
        })
    }
}

fn to_io_error(e: crate::error::Error) -> io::Error {
    match e {
        crate::error::Error::Io(e) => e,
        other => io::Error::other(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_spec_parsing() {
        assert!(matches!(IoBackend::parse("real"), Some(IoBackend::Threaded { .. })));
        assert_eq!(
            IoBackend::parse("sim:100"),
            Some(IoBackend::Sim {
                latency: LatencyModel::Fixed(Duration::from_micros(100)),
                queue_depth: 64
            })
        );
        assert_eq!(IoBackend::parse("sim:"), None);
        assert_eq!(IoBackend::parse("sim:-1"), None);
        assert_eq!(IoBackend::parse("uring"), None);
    }
}

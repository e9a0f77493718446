//! Real backend: positional reads served by a small pool of I/O threads,
//! with channels as the submission and completion queues.

use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam::channel::{self, Receiver, Sender};

use super::{to_io_error, IoCompletion, IoDriver, IoRequest, PageSource};

pub struct ThreadedDriver {
    submit_tx: Option<Sender<IoRequest>>,
    complete_rx: Receiver<IoCompletion>,
    queue_depth: usize,
    in_flight: usize,
    threads: Vec<JoinHandle<()>>,
}

impl ThreadedDriver {
    pub fn new(source: Arc<dyn PageSource>, threads: usize, queue_depth: usize) -> Self {
        let (submit_tx, submit_rx) = channel::unbounded::<IoRequest>();
        let (complete_tx, complete_rx) = channel::unbounded();
        let threads = (0..threads.max(1))
            .map(|i| {
                let rx = submit_rx.clone();
                let tx = complete_tx.clone();
                let source = Arc::clone(&source);
                std::thread::Builder::new()
                    .name(format!("io-{i}"))
                    .spawn(move || {
                        for mut req in rx {
                            let outcome = source
                                .read_page_into(req.page_id, &mut req.buf)
                                .map_err(to_io_error);
                            let done = IoCompletion {
                                token: req.token,
                                page_id: req.page_id,
                                buf: req.buf,
                                outcome,
                            };
                            if tx.send(done).is_err() {
                                break;
                            }
                        }
                    })
                    .expect("spawn I/O thread")
            })
            .collect();
        Self {
            submit_tx: Some(submit_tx),
            complete_rx,
            queue_depth: queue_depth.max(1),
            in_flight: 0,
            threads,
        }
    }
}

impl IoDriver for ThreadedDriver {
    fn submit(&mut self, batch: Vec<IoRequest>) -> Vec<IoRequest> {
        let room = self.queue_depth.saturating_sub(self.in_flight);
        let mut batch = batch.into_iter();
        let tx = self.submit_tx.as_ref().expect("driver shut down");
        for req in batch.by_ref().take(room) {
            tx.send(req).expect("I/O threads exited");
            self.in_flight += 1;
        }
        batch.collect()
    }

    fn poll(&mut self, max_wait: Duration, out: &mut Vec<IoCompletion>) -> usize {
        let before = out.len();
        out.extend(self.complete_rx.try_iter());
        if out.len() == before && self.in_flight > 0 && !max_wait.is_zero() {
            if let Ok(c) = self.complete_rx.recv_timeout(max_wait) {
                out.push(c);
                out.extend(self.complete_rx.try_iter());
            }
        }
        let n = out.len() - before;
        self.in_flight -= n;
        n
    }

    fn in_flight(&self) -> usize {
        self.in_flight
    }
}

impl Drop for ThreadedDriver {
    fn drop(&mut self) {
        self.submit_tx.take();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use std::io::Write;
    use std::os::unix::fs::FileExt;

    struct RawFile {
        file: std::fs::File,
        pages: u32,
    }

    impl PageSource for RawFile {
        fn page_size(&self) -> usize {
            512
        }

        fn read_page_into(&self, page_id: u32, buf: &mut [u8]) -> Result<()> {
            if page_id >= self.pages {
                return Err(crate::error::Error::invalid("page out of range"));
            }
            self.file.read_exact_at(&mut buf[..512], page_id as u64 * 512)?;
            Ok(())
        }
    }

    #[test]
    fn random_reads_match_synchronous_reads() {
        use rand::{Rng, SeedableRng};
        let pages = 64u32;
        let mut tmp = tempfile::tempfile().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let content: Vec<u8> = (0..pages as usize * 512).map(|_| rng.random()).collect();
        tmp.write_all(&content).unwrap();
        let source = Arc::new(RawFile { file: tmp, pages });
        let mut d = ThreadedDriver::new(source.clone(), 4, 32);
        let mut pending = Vec::new();
        let mut out = Vec::new();
        let mut next = 0u64;
        let total = 10_000u64;
        while (out.len() as u64) < total {
            while next < total && pending.len() < 48 {
                pending.push(IoRequest {
                    token: next,
                    page_id: rng.random_range(0..pages),
                    buf: vec![0; 512],
                });
                next += 1;
            }
            pending = d.submit(std::mem::take(&mut pending));
            d.poll(Duration::from_millis(50), &mut out);
        }
        assert_eq!(d.in_flight(), 0);
        let mut seen = vec![false; total as usize];
        let mut direct = vec![0u8; 512];
        for c in &out {
            c.outcome.as_ref().unwrap();
            assert!(!std::mem::replace(&mut seen[c.token as usize], true));
            source.read_page_into(c.page_id, &mut direct).unwrap();
            assert_eq!(c.buf, direct);
        }
    }

    #[test]
    fn errors_and_empty_polls() {
        let tmp = tempfile::tempfile().unwrap();
        let mut d = ThreadedDriver::new(Arc::new(RawFile { file: tmp, pages: 0 }), 1, 4);
        let mut out = Vec::new();
        assert_eq!(d.poll(Duration::from_millis(1), &mut out), 0);
        d.submit(vec![IoRequest {
            token: 7,
            page_id: 3,
            buf: vec![0; 512],
        }]);
        while d.poll(Duration::from_millis(100), &mut out) == 0 {}
        assert_eq!(out[0].token, 7);
        assert!(out[0].outcome.is_err());
    }
}

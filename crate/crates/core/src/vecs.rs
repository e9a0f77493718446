//! Readers and writers for the TEXMEX `.fvecs` / `.bvecs` / `.ivecs` formats.
//!
//! Every vector is stored as a little-endian `u32` dimension followed by that
//! many components (`f32`, `u8` or `i32` respectively).

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::vectors::Dataset;

fn read_records<R: Read, T>(
    mut r: R,
    elem_size: usize,
    limit: Option<usize>,
    decode: impl Fn(&[u8]) -> T,
) -> Result<(usize, Vec<T>)> {
    let mut dim: Option<usize> = None;
    let mut out = Vec::new();
    let mut count = 0usize;
    let mut header = [0u8; 4];
    let mut buf = Vec::new();
    loop {
        if limit.is_some_and(|l| count >= l) {
            break;
        }
        match r.read_exact(&mut header) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let d = u32::from_le_bytes(header) as usize;
        if d == 0 {
            return Err(Error::corrupt(format!("vector {count} has zero dimension")));
        }
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(Error::corrupt(format!(
                    "vector {count} has dimension {d}, expected {prev}"
                )))
            }
            _ => {}
        }
        buf.resize(d * elem_size, 0);
        r.read_exact(&mut buf).map_err(|e| {
            if e.kind() == ErrorKind::UnexpectedEof {
                Error::corrupt(format!("truncated vector {count}"))
            } else {
                e.into()
            }
        })?;
        out.extend(buf.chunks_exact(elem_size).map(&decode));
        count += 1;
    }
    let dim = dim.ok_or_else(|| Error::invalid("vector file is empty"))?;
    Ok((dim, out))
}

pub fn read_fvecs(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    let f = BufReader::new(File::open(path)?);
    let (dim, data) = read_records(f, 4, limit, |b| {
        f32::from_le_bytes(b.try_into().unwrap())
    })?;
    Dataset::new(dim, data)
}

/// Reads byte vectors, widening each component to `f32`.
pub fn read_bvecs(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    let f = BufReader::new(File::open(path)?);
    let (dim, data) = read_records(f, 1, limit, |b| b[0] as f32)?;
    Dataset::new(dim, data)
}

/// Reads integer vectors (ground-truth neighbour lists), one `Vec` per row.
pub fn read_ivecs(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Vec<Vec<u32>>> {
    let f = BufReader::new(File::open(path)?);
    let (dim, data) = read_records(f, 4, limit, |b| {
        i32::from_le_bytes(b.try_into().unwrap())
    })?;
    data.chunks_exact(dim)
        .map(|row| {
            row.iter()
                .map(|&x| {
                    u32::try_from(x).map_err(|_| Error::corrupt("negative id in ivecs file"))
                })
                .collect()
        })
        .collect()
}

/// Picks the reader by file extension.
pub fn read_vectors(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("fvecs") => read_fvecs(path, limit),
        Some("bvecs") => read_bvecs(path, limit),
        _ => Err(Error::invalid(format!(
            "unsupported vector file {} (expected .fvecs or .bvecs)",
            path.display()
        ))),
    }
}

pub fn write_fvecs(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let dim = ds.dim() as u32;
    for v in ds.iter() {
        w.write_all(&dim.to_le_bytes())?;
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ivecs<R: AsRef<[u32]>>(path: impl AsRef<Path>, rows: &[R]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        let row = row.as_ref();
        w.write_all(&(row.len() as u32).to_le_bytes())?;
        for &x in row {
            let x = i32::try_from(x).map_err(|_| Error::invalid("id exceeds i32 range"))?;
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fvecs_round_trip_and_limit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.fvecs");
        let ds = Dataset::new(3, (0..12).map(|x| x as f32 * 0.5).collect()).unwrap();
        write_fvecs(&p, &ds).unwrap();
        assert_eq!(read_vectors(&p, None).unwrap(), ds);
        let head = read_fvecs(&p, Some(2)).unwrap();
        assert_eq!(head.len(), 2);
        assert_eq!(head.get(1), ds.get(1));
    }

    #[test]
    fn bvecs_widen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bvecs");
        let mut bytes = Vec::new();
        for row in [[1u8, 2], [250, 0]] {
            bytes.extend_from_slice(&2u32.to_le_bytes());
            bytes.extend_from_slice(&row);
        }
        std::fs::write(&p, bytes).unwrap();
        let ds = read_vectors(&p, None).unwrap();
        assert_eq!(ds.as_flat(), &[1.0, 2.0, 250.0, 0.0]);
    }

    #[test]
    fn ivecs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.ivecs");
        let rows = vec![vec![3u32, 1, 2], vec![9, 8, 7]];
        write_ivecs(&p, &rows).unwrap();
        assert_eq!(read_ivecs(&p, None).unwrap(), rows);
    }

    #[test]
    fn truncated_and_ragged_files_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.fvecs");
        let mut bytes = 2u32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_fvecs(&p, None), Err(Error::CorruptData(_))));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_fvecs(&p, None), Err(Error::CorruptData(_))));
    }
}

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn recann(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recann"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn recann")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = recann(args, dir);
    assert!(
        out.status.success(),
        "recann {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Header-keyed rows of a CSV without quoted fields.
fn parse_csv(text: &str) -> Vec<HashMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

fn num(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

/// Generates `d.*` files with `n` vectors of `dim` dimensions.
fn dataset(n: usize, dim: usize, queries: usize) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let (n, dim, q) = (n.to_string(), dim.to_string(), queries.to_string());
    ok(&["gen", "d", "--n", &n, "--dim", &dim, "--queries", &q, "--seed", "9"], dir.path());
    dir
}

fn read_ivecs(path: PathBuf) -> Vec<Vec<u32>> {
    let bytes = fs::read(path).unwrap();
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let mut rows = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let d = word(at) as usize;
        rows.push((0..d).map(|j| word(at + 4 + 4 * j)).collect());
        at += 4 + 4 * d;
    }
    rows
}

#[test]
fn same_seed_builds_identical_files() {
    let dir = dataset(1500, 16, 1);
    let p = dir.path();
    ok(&["build", "d.base.fvecs", "a.idx", "--seed", "5"], p);
    ok(&["build", "d.base.fvecs", "b.idx", "--seed", "5"], p);
    assert_eq!(fs::read(p.join("a.idx")).unwrap(), fs::read(p.join("b.idx")).unwrap());
}

#[test]
fn zero_tau_disables_affinity() {
    let dir = dataset(1500, 16, 1);
    let p = dir.path();
    fs::write(p.join("params.toml"), "tau_percentile = 0.0\ndegree = 24\n").unwrap();
    let report = parse_csv(&ok(&["build", "d.base.fvecs", "x.idx", "--params", "params.toml"], p));
    assert_eq!(num(&report[0], "mean_affinity"), 0.0);
    assert_eq!(num(&report[0], "degree"), 24.0);
    let stats = parse_csv(&ok(&["stats", "x.idx"], p));
    assert_eq!(num(&stats[0], "co_placed_records"), 0.0);

    let report = parse_csv(&ok(&["build", "d.base.fvecs", "y.idx"], p));
    assert!(num(&report[0], "mean_affinity") > 0.0);
}

#[test]
fn slotted_pages_keep_128d_fragmentation_low() {
    let dir = dataset(2000, 128, 1);
    let p = dir.path();
    ok(&["build", "d.base.fvecs", "x.idx", "--page-size", "4096"], p);
    let stats = parse_csv(&ok(&["stats", "x.idx"], p));
    let frag = num(&stats[0], "fragmentation");
    assert!(frag < 0.15, "fragmentation {frag}");
    assert!(frag < num(&stats[0], "one_per_page_fragmentation"));
}

#[test]
fn recall_column_matches_results_file() {
    let dir = dataset(3000, 32, 50);
    let p = dir.path();
    ok(&["build", "d.base.fvecs", "x.idx"], p);
    let sim = ["--io-backend", "sim:5"];
    let csv = ok(
        &[&["bench", "x.idx", "d.query.fvecs", "d.gt.ivecs", "--list-sizes", "64", "--batch", "2"][..], &sim].concat(),
        p,
    );
    let rows = parse_csv(&csv);
    assert_eq!(rows.len(), 5);
    let labels: Vec<&str> = rows.iter().map(|r| r["config"].as_str()).collect();
    assert_eq!(labels, ["baseline", "+async", "+record", "+prefetch", "+cbs"]);
    let baseline = &rows[0];

    let query = [
        "query", "x.idx", "d.query.fvecs", "-o", "res.txt", "-L", "64", "-k", "10", "--beam", "0", "--prefetch", "0",
        "--batch", "1", "--buffer-ratio", "0",
    ];
    ok(&[&query[..], &sim].concat(), p);
    let results = fs::read_to_string(p.join("res.txt")).unwrap();
    let truth = read_ivecs(p.join("d.gt.ivecs"));
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(lines.len(), truth.len());
    let mut hits = 0usize;
    for (line, t) in lines.iter().zip(&truth) {
        let ids: Vec<u32> = line.split(' ').map(|pair| pair.split(':').next().unwrap().parse().unwrap()).collect();
        assert_eq!(ids.len(), 10);
        hits += ids.iter().filter(|id| t[..10].contains(id)).count();
    }
    let recall = hits as f64 / (10 * truth.len()) as f64;
    assert!((recall - num(baseline, "recall_at_10")).abs() < 1e-9);

    // Answers do not depend on pool size or batching when pivoting is off.
    let again = [
        "query", "x.idx", "d.query.fvecs", "-o", "res2.txt", "-L", "64", "--beam", "0", "--batch", "3",
        "--buffer-ratio", "0.2",
    ];
    ok(&[&again[..], &sim].concat(), p);
    assert_eq!(results, fs::read_to_string(p.join("res2.txt")).unwrap());
}

#[test]
fn ladder_directions_on_io_bound_config() {
    let dir = dataset(4000, 32, 100);
    let p = dir.path();
    ok(&["build", "d.base.fvecs", "aff.idx"], p);
    ok(&["build", "d.base.fvecs", "flat.idx", "--tau-percentile", "0"], p);
    let bench = |idx: &str| {
        parse_csv(&ok(
            &[
                "bench", idx, "d.query.fvecs", "d.gt.ivecs", "--list-sizes", "48", "--batch", "2", "--io-backend",
                "sim:100",
            ],
            p,
        ))
    };
    let aff = bench("aff.idx");
    let flat = bench("flat.idx");
    assert!(num(&aff[1], "qps") > num(&aff[0], "qps"), "+async not faster than baseline");
    // Co-fetched neighbours need a pool to land in, so compare the pooled rung.
    assert_eq!(aff[2]["config"], "+record");
    assert!(num(&aff[2], "mean_ios") < num(&flat[2], "mean_ios"), "co-placement did not reduce reads");
    // Read counts are reproducible; only timing columns vary.
    let again = bench("aff.idx");
    for (a, b) in aff.iter().zip(&again) {
        assert_eq!(a["mean_ios"], b["mean_ios"]);
        assert_eq!(a["recall_at_10"], b["recall_at_10"]);
    }
}

#[test]
fn sweeps_append_rows() {
    let dir = dataset(1500, 16, 10);
    let p = dir.path();
    ok(&["build", "d.base.fvecs", "x.idx"], p);
    let csv = ok(
        &[
            "bench", "x.idx", "d.query.fvecs", "d.gt.ivecs", "--list-sizes", "16,32", "--batch-sweep", "1,4",
            "--beam-sweep", "0,2", "--io-backend", "sim:0", "--batch", "2",
        ],
        p,
    );
    let rows = parse_csv(&csv);
    assert_eq!(rows.len(), 2 * 5 + 2 * 4);
    let batches: Vec<&str> = rows
        .iter()
        .filter(|r| r["config"] == "batch-sweep")
        .map(|r| r["batch_size"].as_str())
        .collect();
    assert_eq!(batches, ["1", "4", "1", "4"]);
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = dataset(500, 8, 5);
    let p = dir.path();
    assert_eq!(recann(&["query"], p).status.code(), Some(2));
    assert_eq!(recann(&["build", "d.base.fvecs", "x.idx", "--page-size", "10"], p).status.code(), Some(2));
    assert_eq!(recann(&["stats", "missing.idx"], p).status.code(), Some(3));
    ok(&["build", "d.base.fvecs", "x.idx"], p);
    let bytes = fs::read(p.join("x.idx")).unwrap();
    fs::write(p.join("cut.idx"), &bytes[..bytes.len() / 2]).unwrap();
    let mut flipped = bytes.clone();
    flipped[20] ^= 0xff;
    fs::write(p.join("flip.idx"), flipped).unwrap();
    for bad in ["cut.idx", "flip.idx"] {
        assert_eq!(recann(&["stats", bad], p).status.code(), Some(4), "{bad}");
    }
    // Ground truth is required.
    assert_eq!(recann(&["bench", "x.idx", "d.query.fvecs"], p).status.code(), Some(2));
    assert_eq!(
        recann(&["bench", "x.idx", "d.query.fvecs", "nope.ivecs"], p).status.code(),
        Some(3)
    );
    // Query dimension must match the index.
    ok(&["gen", "w", "--n", "20", "--dim", "9", "--queries", "2"], p);
    let out = recann(&["query", "x.idx", "w.query.fvecs", "--io-backend", "sim:0"], p);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}

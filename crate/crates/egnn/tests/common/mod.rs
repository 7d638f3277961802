#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use egnn::molecular::{write_graph_records, EdgeRecord, GraphRecord};
use egnn_core::rng::seeded;
use rand::Rng;

pub fn egnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egnn"))
        .args(args)
        .output()
        .expect("spawn egnn")
}

pub fn egnn_ok(args: &[&str]) -> String {
    let out = egnn(args);
    assert!(
        out.status.success(),
        "egnn {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two planted clusters of `per` papers each. Papers cite mostly within
/// their cluster; features carry a noisy cluster indicator.
pub fn write_citation(dir: &Path, per: usize, seed: u64) -> (PathBuf, PathBuf) {
    let mut rng = seeded(seed);
    let n = 2 * per;
    let mut content = String::new();
    for i in 0..n {
        let c = i / per;
        let feats: Vec<String> = (0..4)
            .map(|k| {
                let on = if k % 2 == c { rng.gen_bool(0.8) } else { rng.gen_bool(0.2) };
                (on as u8).to_string()
            })
            .collect();
        writeln!(content, "p{i}\t{}\t{}", feats.join("\t"), ["theory", "systems"][c]).unwrap();
    }
    let mut cites = String::new();
    for i in 0..n {
        let c = i / per;
        for _ in 0..2 {
            let same = rng.gen_bool(0.9);
            let target_c = if same { c } else { 1 - c };
            let j = target_c * per + rng.gen_range(0..per);
            if j != i {
                // cited-first
                writeln!(cites, "p{j}\tp{i}").unwrap();
            }
        }
    }
    let content_path = dir.join("toy.content");
    let cites_path = dir.join("toy.cites");
    std::fs::write(&content_path, content).unwrap();
    std::fs::write(&cites_path, cites).unwrap();
    (content_path, cites_path)
}

/// Path graphs whose target is a fixed linear functional of the mean-pooled
/// node features.
pub fn regression_records(count: usize, seed: u64) -> Vec<GraphRecord> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(3..7);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let pooled: Vec<f64> = (0..3)
                .map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n as f64)
                .collect();
            let edges = (1..n)
                .map(|i| EdgeRecord {
                    src: i - 1,
                    dst: i,
                    features: vec![1.0, rng.gen_range(0.5..1.5)],
                })
                .collect();
            GraphRecord {
                num_nodes: n,
                node_features: x,
                edges,
                labels: None,
                target: Some(0.8 * pooled[0] - 0.5 * pooled[1] + 0.3 * pooled[2]),
            }
        })
        .collect()
}

pub fn write_regression(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let path = dir.join("mols.jsonl");
    std::fs::write(&path, write_graph_records(&regression_records(count, seed)).unwrap()).unwrap();
    path
}

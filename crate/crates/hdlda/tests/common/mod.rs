#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdlda_core::seed;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hdlda"))
}

pub fn run_cli(args: &[&str]) -> Output {
    bin().args(args).output().expect("cannot launch hdlda")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes `label,x0,…,x{p-1}` rows with the given labels and features.
pub fn write_csv(path: &Path, labels: &[&str], rows: &[Vec<f64>]) {
    let p = rows[0].len();
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header = vec!["label".to_string()];
    header.extend((0..p).map(|j| format!("x{j}")));
    w.write_record(&header).unwrap();
    for (l, r) in labels.iter().zip(rows) {
        let mut rec = vec![l.to_string()];
        rec.extend(r.iter().map(|v| v.to_string()));
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
}

/// Two Gaussian clouds, `n` rows each, labelled `A` and `B` and
/// interleaved so row order carries no information.
pub fn two_cluster_rows(n: usize, p: usize, shift: f64, seed: u64) -> (Vec<&'static str>, Vec<Vec<f64>>) {
    let mut rng = seed::rng(seed);
    let (mut labels, mut rows) = (Vec::new(), Vec::new());
    for i in 0..2 * n {
        let b = i % 2 == 1;
        labels.push(if b { "B" } else { "A" });
        rows.push((0..p).map(|_| rng.sample::<f64, _>(StandardNormal) + if b { shift } else { 0.0 }).collect());
    }
    (labels, rows)
}

pub fn two_cluster_fixture(dir: &Path, n: usize, p: usize, shift: f64, seed: u64) -> PathBuf {
    let (labels, rows) = two_cluster_rows(n, p, shift, seed);
    let path = dir.join("two_cluster.csv");
    write_csv(&path, &labels, &rows);
    path
}

/// The two-cluster rows with their labels randomly permuted.
pub fn permutation_null_fixture(dir: &Path, n: usize, p: usize, shift: f64, seed: u64) -> PathBuf {
    let (mut labels, rows) = two_cluster_rows(n, p, shift, seed);
    labels.shuffle(&mut seed::rng(seed::derive(seed, 1)));
    let path = dir.join("permuted.csv");
    write_csv(&path, &labels, &rows);
    path
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

pub fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"))
}

/// All CSV files in `dir`, sorted by name, with their bytes.
pub fn csv_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use taxoutlier::formats::{write_dataset, AnchorEntry, DatasetRecord, Embedding, EntityRecord};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_taxoutlier"));
    c.env_remove("TAXOUTLIER_THREADS");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn write_dump(dir: &Path, name: &str, records: &[EntityRecord]) -> PathBuf {
    let p = dir.join(name);
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).unwrap());
        s.push('\n');
    }
    fs::write(&p, s).unwrap();
    p
}

pub fn write_anchors(dir: &Path, name: &str, entries: &[AnchorEntry]) -> PathBuf {
    let p = dir.join(name);
    let s: String = entries
        .iter()
        .map(|e| format!("{}\t{}\t{}\n", e.anchor, e.target_title, e.count))
        .collect();
    fs::write(&p, s).unwrap();
    p
}

pub fn write_embedding(dir: &Path, name: &str, e: &Embedding) -> PathBuf {
    let p = dir.join(name);
    let mut s = format!("{} {}\n", e.len(), e.dimension());
    for t in e.tokens() {
        s.push_str(t);
        for x in e.get(t).unwrap() {
            s.push_str(&format!(" {x:?}"));
        }
        s.push('\n');
    }
    fs::write(&p, s).unwrap();
    p
}

pub fn write_records(dir: &Path, name: &str, records: &[DatasetRecord]) -> PathBuf {
    let p = dir.join(name);
    let mut buf = Vec::new();
    write_dataset(records, &mut buf).unwrap();
    fs::write(&p, buf).unwrap();
    p
}

pub fn read_records(path: &Path) -> Vec<DatasetRecord> {
    taxoutlier::formats::read_dataset(fs::read(path).unwrap().as_slice()).unwrap()
}

/// `key=value` lines of a command's stdout.
pub fn kv(out: &str, key: &str) -> Option<String> {
    out.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .map(str::to_owned)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

//! Shared helpers for integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use weft::classfile::jar::read_jar;
use weft::classfile::{parse_class, ClassModel};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

/// `(entry name, bytes)` for every class in the corpus jars.
pub fn corpus() -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for jar in ["py4j-0.10.9.9.jar", "jpype-1.7.1.jar"] {
        for e in read_jar(&corpus_dir().join(jar)).expect("corpus jar") {
            if e.is_class() {
                out.push((e.name, e.data));
            }
        }
    }
    out
}

pub fn corpus_models() -> Vec<ClassModel> {
    corpus().iter().map(|(n, b)| parse_class(b).unwrap_or_else(|e| panic!("{n}: {e}"))).collect()
}
pub mod jvm;
pub mod minivm;
pub mod fixtures;
pub mod criteria;
pub mod programs;

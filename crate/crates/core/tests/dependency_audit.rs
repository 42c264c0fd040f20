//! The prediction path must not depend on the summarizer.

use std::fs;
use std::path::{Path, PathBuf};

fn rust_files(dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            rust_files(&path, out);
        } else if path.extension().is_some_and(|e| e == "rs") {
            out.push(path);
        }
    }
}

#[test]
fn prediction_modules_never_reference_the_summarizer() {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let mut files = Vec::new();
    for module in ["features", "eval", "nn"] {
        rust_files(&src.join(module), &mut files);
    }
    for single in ["fusion.rs", "ingestion.rs", "metrics.rs"] {
        files.push(src.join(single));
    }
    assert!(files.len() >= 10, "module layout changed: {files:?}");
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        assert!(!text.contains("summarizer"), "{} references the summarizer", f.display());
    }
}

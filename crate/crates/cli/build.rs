use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

fn collect(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = fs::read_dir(dir) else { return };
    for e in entries.flatten() {
        let p = e.path();
        if p.is_dir() {
            collect(&p, out);
        } else if p.extension().is_some_and(|x| x == "rs" || x == "toml") {
            out.push(p);
        }
    }
}

/// Digest of every crate source file and manifest in the workspace.
fn main() {
    let manifest = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").expect("set by cargo"));
    let crates = manifest.parent().expect("crates directory").to_path_buf();
    let mut files = Vec::new();
    if let Ok(entries) = fs::read_dir(&crates) {
        for e in entries.flatten() {
            let root = e.path();
            collect(&root.join("src"), &mut files);
            files.push(root.join("Cargo.toml"));
            println!("cargo:rerun-if-changed={}", root.join("src").display());
            println!("cargo:rerun-if-changed={}", root.join("Cargo.toml").display());
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for f in &files {
        if let Ok(bytes) = fs::read(f) {
            let rel = f.strip_prefix(&crates).unwrap_or(f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(format!("blob {}\0", bytes.len()).as_bytes());
            h.update(&bytes);
        }
    }
    println!("cargo:rustc-env=SOD_CODE_DIGEST={}", hex::encode(h.finalize()));
}

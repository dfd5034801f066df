#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dsvd_core::synthetic::{is_matrix_like, mixed_layers, perturb_low_rank, random_checkpoint};
use dsvd_core::{write_checkpoint, Checkpoint};
use serde_json::Value;

pub fn dsvd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsvd"))
        .args(args)
        .env_remove("DSVD_THREADS")
        .output()
        .expect("spawn dsvd")
}

pub fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

pub fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON error in: {text}"));
    serde_json::from_str(line).unwrap()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Twelve mixed-shape layers with rank-4 updates on every layer whose
/// matrix view has more than one column; 1-D biases are left untouched.
pub fn low_rank_pair() -> (Checkpoint, Checkpoint) {
    let base = random_checkpoint(&mixed_layers(), 2024).unwrap();
    let ft = perturb_low_rank(&base, is_matrix_like, 4, 0.05, 2025).unwrap();
    (base, ft)
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub base: PathBuf,
    pub finetuned: PathBuf,
}

impl Fixture {
    pub fn new(base: &Checkpoint, ft: &Checkpoint) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let (b, f) = (dir.path().join("base.safetensors"), dir.path().join("ft.safetensors"));
        write_checkpoint(base, &b).unwrap();
        write_checkpoint(ft, &f).unwrap();
        Fixture { dir, base: b, finetuned: f }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn compress(&self, tau: &str, out: &Path, extra: &[&str]) -> Output {
        let mut args = vec![
            "compress",
            "--base",
            path_str(&self.base),
            "--finetuned",
            path_str(&self.finetuned),
            "--tau",
            tau,
            "--out",
            path_str(out),
        ];
        args.extend_from_slice(extra);
        dsvd(&args)
    }
}

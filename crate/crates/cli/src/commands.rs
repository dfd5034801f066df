use std::collections::BTreeMap;

use dsvd_core::analysis::{compression_report, fidelity_report, layer_similarity_report, rank_table, LayerGroupSpec};
use dsvd_core::delta::fingerprint;
use dsvd_core::format::ArchiveManifest;
use dsvd_core::{
    compress_checkpoint, load_archive, read_checkpoint, reconstruct_checkpoint, save_archive, write_checkpoint,
    CompressOptions, Result,
};
use serde_json::{json, Value};

use crate::Command;

pub struct Outcome {
    pub json: Value,
    pub exit_code: u8,
}

impl Outcome {
    fn ok(json: Value) -> Self {
        Outcome { json, exit_code: 0 }
    }
}

/// Exit code when `verify` measures an error above `--tol`.
pub const VERIFY_FAILED: u8 = 3;

pub fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Compress {
            base,
            finetuned,
            tau,
            out,
            policy,
            energy_mode,
        } => {
            let pre = read_checkpoint(&base)?;
            let ft = read_checkpoint(&finetuned)?;
            let options = CompressOptions {
                tau,
                policy: policy.into(),
                energy_mode: energy_mode.into(),
            };
            let archive = compress_checkpoint(&pre, &ft, &options)?;
            save_archive(&archive, &out)?;
            if archive.stats.mismatched_layers > 0 {
                eprintln!(
                    "warning: {} layer(s) present in only one checkpoint",
                    archive.stats.mismatched_layers
                );
            }
            Ok(Outcome::ok(to_value(&compression_report(&archive))))
        }
        Command::Reconstruct { base, delta, out, force } => {
            let base_ckpt = read_checkpoint(&base)?;
            let archive = load_archive(&delta)?;
            let matches = fingerprint(&base_ckpt)? == archive.base_fingerprint;
            if !matches && force {
                eprintln!("warning: base fingerprint does not match the archive; continuing because of --force");
            }
            let rebuilt = reconstruct_checkpoint(&base_ckpt, &archive, force)?;
            write_checkpoint(&rebuilt, &out)?;
            Ok(Outcome::ok(json!({
                "out": out.display().to_string(),
                "tensors": rebuilt.len(),
                "fingerprint_match": matches,
            })))
        }
        Command::Inspect { delta, groups } => {
            let archive = load_archive(&delta)?;
            let spec = match groups {
                Some(path) => LayerGroupSpec::load(path)?,
                None => LayerGroupSpec::default(),
            };
            let manifest = ArchiveManifest::from_archive(&archive);
            let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
            for entry in manifest.layer_index.values() {
                *kinds.entry(entry.kind.as_str()).or_default() += 1;
            }
            Ok(Outcome::ok(json!({
                "manifest": {
                    "format_version": manifest.format_version,
                    "tau": manifest.tau,
                    "energy_mode": manifest.energy_mode,
                    "base_fingerprint": manifest.base_fingerprint,
                    "layer_count": manifest.layer_index.len(),
                    "layer_kinds": kinds,
                    "mismatched_layers": manifest.mismatched_layers,
                },
                "groups": spec,
                "rank_table": rank_table(&archive, &spec),
                "compression_report": compression_report(&archive),
            })))
        }
        Command::Diff { base, finetuned } => {
            let pre = read_checkpoint(&base)?;
            let ft = read_checkpoint(&finetuned)?;
            Ok(Outcome::ok(to_value(&layer_similarity_report(&pre, &ft)?)))
        }
        Command::Verify {
            base,
            finetuned,
            delta,
            tol,
        } => {
            let pre = read_checkpoint(&base)?;
            let ft = read_checkpoint(&finetuned)?;
            let archive = load_archive(&delta)?;
            let rebuilt = reconstruct_checkpoint(&pre, &archive, false)?;
            let report = fidelity_report(&rebuilt, &ft)?;
            let pass = report.max_rel_error <= tol;
            if !pass {
                eprintln!(
                    "verification failed: max relative error {:e} exceeds tolerance {:e}",
                    report.max_rel_error, tol
                );
            }
            let mut json = to_value(&report);
            json["tol"] = json!(tol);
            json["pass"] = json!(pass);
            Ok(Outcome {
                json,
                exit_code: if pass { 0 } else { VERIFY_FAILED },
            })
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize to JSON")
}

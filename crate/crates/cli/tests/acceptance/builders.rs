use std::io::BufReader;
use std::path::Path;
use std::process::Command;

use errag_core::selection::{build_dpo_pairs, build_sft_set, read_log, top2_from_log, write_jsonl};

use crate::{ensure, Outcome};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/acceptance").join(name)
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn training_files() -> Outcome {
    let file = std::fs::File::open(fixture("log.jsonl")).map_err(|e| e.to_string())?;
    let log = read_log(BufReader::new(file)).map_err(|e| e.to_string())?;
    let queries: std::collections::BTreeSet<_> = log.iter().map(|e| e.query.as_str()).collect();
    ensure(queries.len() == 10, || format!("{} queries in the log", queries.len()))?;

    let sft = build_sft_set(&log);
    let pairs = build_dpo_pairs(&top2_from_log(&log), &log).map_err(|e| e.to_string())?;
    let mut sft_bytes = Vec::new();
    write_jsonl(&mut sft_bytes, &sft).map_err(|e| e.to_string())?;
    let mut dpo_bytes = Vec::new();
    write_jsonl(&mut dpo_bytes, &pairs).map_err(|e| e.to_string())?;
    ensure(sft_bytes == read(&fixture("expected_sft.jsonl"))?, || {
        format!("sft differs:\n{}", String::from_utf8_lossy(&sft_bytes))
    })?;
    ensure(dpo_bytes == read(&fixture("expected_dpo.jsonl"))?, || {
        format!("dpo differs:\n{}", String::from_utf8_lossy(&dpo_bytes))
    })?;

    // the command-line path writes the same bytes
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let status = Command::new(env!("CARGO_BIN_EXE_errag"))
        .arg("train-files")
        .arg(fixture("log.jsonl"))
        .arg(out.path())
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || format!("train-files failed: {}", String::from_utf8_lossy(&status.stderr)))?;
    ensure(read(&out.path().join("sft.jsonl"))? == sft_bytes, || "train-files sft.jsonl differs".into())?;
    ensure(read(&out.path().join("dpo_pairs.jsonl"))? == dpo_bytes, || "train-files dpo_pairs.jsonl differs".into())?;
    Ok(format!("10 queries: {} sft lines, {} pairs, byte-identical", sft.len(), pairs.len()))
}

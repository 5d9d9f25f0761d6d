#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_motifwatch"));
    cmd.env("RUST_LOG", "error");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

/// Validate a JSON document, or every line of a JSON Lines file, against a shipped schema.
pub fn validate(schema: &str, file: &Path) -> Result<(), String> {
    let text = std::fs::read_to_string(schema_dir().join(format!("{schema}.schema.json")))
        .map_err(|e| e.to_string())?;
    let schema_value: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let validator = jsonschema::validator_for(&schema_value).map_err(|e| e.to_string())?;
    let body = std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    let docs: Vec<Value> = if file.extension().is_some_and(|e| e == "jsonl") {
        body.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?
    } else {
        vec![serde_json::from_str(&body).map_err(|e| e.to_string())?]
    };
    for doc in &docs {
        if let Some(err) = validator.iter_errors(doc).next() {
            return Err(format!(
                "{} against {schema}: {err} at {}",
                file.display(),
                err.instance_path
            ));
        }
    }
    Ok(())
}

/// Every file under `dir` with its SHA-256, keyed by relative path.
pub fn hash_tree(dir: &Path) -> BTreeMap<String, String> {
    use sha2::{Digest, Sha256};
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).expect("readable file");
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, format!("{:x}", Sha256::digest(&bytes)));
            }
        }
    }
    out
}

/// Schema of each known output file name.
pub fn schema_for(name: &str) -> Option<&'static str> {
    Some(match name {
        "manifest.json" => "manifest",
        "motifs.json" => "motifs",
        "eventstudy.json" => "eventstudy",
        "impact.json" => "impact",
        "fit.json" => "fit",
        "labels.jsonl" => "label",
        "voided.jsonl" => "voided",
        "recall.json" => "recall",
        "plan.json" => "plan",
        _ => return None,
    })
}

/// Validate every recognised file under `dir`; returns how many were checked.
pub fn validate_tree(dir: &Path) -> Result<usize, String> {
    let mut n = 0;
    for rel in hash_tree(dir).keys() {
        let name = rel.rsplit('/').next().unwrap();
        if let Some(schema) = schema_for(name) {
            validate(schema, &dir.join(rel))?;
            n += 1;
        }
    }
    Ok(n)
}

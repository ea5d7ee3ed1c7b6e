#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn manifest() -> PathBuf {
    fixtures().join("manifest.toml")
}

pub fn webcent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_webcent"))
        .args(args)
        .env_remove("WEBCENT_MANIFEST")
        .env_remove("WEBCENT_MIN_SITES")
        .env_remove("WEBCENT_FORMAT")
        .env_remove("WEBCENT_LAYERS")
        .output()
        .expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output, what: &str) {
    assert!(o.status.success(), "{what} failed: {}", stderr(&o));
}

/// annotate, score, classify and report over the fixture, each into its own
/// subdirectory of `out`.
pub fn run_pipeline(out: &Path) {
    let m = manifest();
    let m = m.to_str().unwrap();
    let dir = |s: &str| out.join(s).to_str().unwrap().to_string();
    let records = out.join("annotate/records.jsonl");
    let records = records.to_str().unwrap();
    let stats = out.join("annotate/annotation_stats.json");
    ok(
        webcent(&["--manifest", m, "annotate", "--out", &dir("annotate")]),
        "annotate",
    );
    ok(
        webcent(&[
            "--manifest",
            m,
            "score",
            "--records",
            records,
            "--band",
            "--oracle-check",
            "--out",
            &dir("score"),
        ]),
        "score",
    );
    ok(
        webcent(&[
            "--manifest",
            m,
            "classify",
            "--records",
            records,
            "--dump-features",
            "--out",
            &dir("classify"),
        ]),
        "classify",
    );
    ok(
        webcent(&[
            "--manifest",
            m,
            "report",
            "--records",
            records,
            "--stats",
            stats.to_str().unwrap(),
            "--band",
            "--out",
            &dir("report"),
        ]),
        "report",
    );
}

/// Every file under `dir`, keyed by relative path.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Compares `out` with the checked-in golden tree; with
/// `WEBCENT_UPDATE_GOLDEN=1` rewrites the golden tree instead.
pub fn golden_diff(out: &Path) -> Vec<String> {
    let golden = fixtures().join("golden");
    let got = read_tree(out);
    if std::env::var_os("WEBCENT_UPDATE_GOLDEN").is_some() {
        let _ = fs::remove_dir_all(&golden);
        for (rel, bytes) in &got {
            let p = golden.join(rel);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, bytes).unwrap();
        }
    }
    let want = read_tree(&golden);
    let mut diffs = Vec::new();
    for k in want.keys().chain(got.keys()).collect::<std::collections::BTreeSet<_>>() {
        match (want.get(k), got.get(k)) {
            (Some(a), Some(b)) if a == b => {}
            (Some(_), Some(_)) => diffs.push(format!("{k}: contents differ")),
            (Some(_), None) => diffs.push(format!("{k}: missing from output")),
            (None, _) => diffs.push(format!("{k}: not in golden set")),
        }
    }
    diffs
}

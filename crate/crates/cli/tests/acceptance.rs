//! Acceptance criteria at full desk scale, one PASS/FAIL line each.
//!
//! Criteria 1 to 9 run in-process through the suite. Criterion 10 runs the
//! `check` binary twice with one seed and compares the CSV outputs.

use std::io::Write;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rough_euler_cli::output::{sha256_hex, Output, MANIFEST};
use rough_euler_cli::suite::{compare_csv_dirs, run_suite, CriterionResult, SuiteOptions};

const SEED: u64 = 20_240_601;

fn run_group(ids: &[u8], root: &Path) -> Vec<CriterionResult> {
    let dir = root.join(format!("criteria_{}", ids.iter().map(u8::to_string).collect::<Vec<_>>().join("_")));
    let opts = SuiteOptions {
        seed: SEED,
        criteria: ids.to_vec(),
        ..SuiteOptions::default()
    };
    let mut out = Output::create(&dir).expect("output directory");
    match run_suite(&opts, &mut out) {
        Ok(r) => r,
        Err(e) => ids
            .iter()
            .map(|&id| CriterionResult {
                id,
                name: rough_euler_cli::suite::NAMES[id as usize - 1],
                passed: false,
                statistic: f64::NAN,
                threshold: String::new(),
                detail: format!("error: {e:#}"),
                seconds: 0.0,
            })
            .collect(),
    }
}

/// Every file in `dir` other than the manifest is listed with its checksum.
fn manifest_complete(dir: &Path) -> Result<(), String> {
    let text = std::fs::read_to_string(dir.join(MANIFEST)).map_err(|e| e.to_string())?;
    let m: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let files = m["files"].as_array().ok_or("manifest has no file list")?;
    let mut listed = Vec::new();
    for f in files {
        let name = f["path"].as_str().ok_or("file entry without path")?;
        let bytes = std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if f["sha256"].as_str() != Some(sha256_hex(&bytes).as_str()) {
            return Err(format!("checksum mismatch for {name}"));
        }
        listed.push(name.to_string());
    }
    for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let name = e.map_err(|e| e.to_string())?.file_name().to_string_lossy().into_owned();
        if name != MANIFEST && !listed.contains(&name) {
            return Err(format!("{name} missing from manifest"));
        }
    }
    Ok(())
}

fn determinism(root: &Path) -> CriterionResult {
    let t0 = Instant::now();
    let config = root.join("determinism.toml");
    std::fs::write(&config, "[check]\nscale = 0.001\ncriteria = [1, 2, 3, 4, 5, 6, 7, 8, 9]\n").unwrap();
    let dirs = [root.join("determinism_a"), root.join("determinism_b")];
    let mut notes = Vec::new();
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_rough-euler"))
            .args(["check", "--seed", &SEED.to_string(), "--config"])
            .arg(&config)
            .arg("--out")
            .arg(d)
            .output()
            .expect("run check");
        // Threshold failures (exit 2) are expected at this scale; only errors matter.
        if !matches!(status.status.code(), Some(0) | Some(2)) {
            notes.push(format!("check exited with {:?}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
        }
        if let Err(e) = manifest_complete(d) {
            notes.push(format!("manifest: {e}"));
        }
    }
    let (same, total) = compare_csv_dirs(&dirs[0], &dirs[1]).unwrap_or((0, 0));
    CriterionResult {
        id: 10,
        name: "determinism",
        passed: notes.is_empty() && total > 0 && same == total,
        statistic: (total - same) as f64,
        threshold: "two check runs with one seed give byte-identical CSVs".into(),
        detail: if notes.is_empty() {
            format!("{same} of {total} CSV files identical; manifests complete")
        } else {
            notes.join("; ")
        },
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn main() -> ExitCode {
    // Accept and ignore libtest flags such as `--nocapture` or filters.
    let root = tempfile::tempdir().expect("temporary directory");
    println!("acceptance suite (seed {SEED})");
    let mut results = Vec::new();
    let groups: [&[u8]; 8] = [&[1], &[2], &[3], &[4, 5], &[6], &[7], &[8], &[9]];
    for g in groups {
        for r in run_group(g, root.path()) {
            println!("{}", r.line());
            std::io::stdout().flush().ok();
            results.push(r);
        }
    }
    let r = determinism(root.path());
    println!("{}", r.line());
    results.push(r);
    let passed = results.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

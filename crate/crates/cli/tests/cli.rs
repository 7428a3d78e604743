use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rough_euler_cli::output::{sha256_hex, MANIFEST};
use rough_euler_cli::suite::compare_csv_dirs;
use rough_euler_cli::ExperimentConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rough-euler"));
    for var in ["ROUGH_EULER_CONFIG", "ROUGH_EULER_SEED", "ROUGH_EULER_OUT", "ROUGH_EULER_THREADS"] {
        c.env_remove(var);
    }
    c
}

fn run(args: &[&str], config: Option<&str>, out: &Path) -> Output {
    let mut c = bin();
    c.args(args).arg("--out").arg(out);
    let cfg_path;
    if let Some(text) = config {
        cfg_path = out.with_extension("toml");
        fs::write(&cfg_path, text).unwrap();
        c.arg("--config").arg(&cfg_path);
    }
    c.output().unwrap()
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn empty_rate_section_gives_defaults() {
    let cfg = ExperimentConfig::parse("[rate]\n").unwrap();
    assert_eq!(cfg.rate.hurst, 0.4);
    assert_eq!(cfg.rate.ns, vec![64, 128, 256, 512, 1024, 2048, 4096]);
    assert_eq!(cfg.rate.reps, 1000);
    assert_eq!(cfg.rate.refinement, 32);
}

#[test]
fn regimes_are_enforced_per_command() {
    let err = ExperimentConfig::parse("[rate]\nhurst = 0.6\n").unwrap_err();
    assert!(format!("{err:#}").contains("(1/3, 1/2)"), "{err:#}");
    assert!(ExperimentConfig::parse("[rate]\nhurst = 0.3\n").is_err());
    assert!(ExperimentConfig::parse("[constants]\nhurst = [0.3]\n").is_ok());
    assert!(ExperimentConfig::parse("[fbm]\nhurst = 0.26\n").is_ok());
    let err = ExperimentConfig::parse("[fbm]\nhurst = 0.2\n").unwrap_err();
    assert!(format!("{err:#}").contains("(1/4, 1/2)"), "{err:#}");
}

#[test]
fn unknown_keys_fail_closed() {
    assert!(ExperimentConfig::parse("sed = 3\n").is_err());
    assert!(ExperimentConfig::parse("[rate]\nrepetitions = 3\n").is_err());
    assert!(ExperimentConfig::parse("[plots]\n").is_err());
    assert!(ExperimentConfig::parse("[rate]\nschemes = [\"heun\"]\n").is_err());
    assert!(ExperimentConfig::parse("[clt]\nfield = \"vortex\"\n").is_err());
}

#[test]
fn config_round_trips() {
    let text = "command = \"clt\"\nseed = 9\nthreads = 2\n[clt]\nhurst = 0.4\nreps = 50\nswap_qp = true\n[rate]\nfixture = \"x.csv\"\n";
    let a = ExperimentConfig::parse(text).unwrap();
    let b = ExperimentConfig::parse(&a.to_toml().unwrap()).unwrap();
    assert_eq!(a, b);
    let d = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::parse(&d.to_toml().unwrap()).unwrap(), d);
}

#[test]
fn bundled_configs_parse() {
    let dir = repo_root().join("configs");
    let mut seen = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            ExperimentConfig::parse(&fs::read_to_string(&p).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e:#}", p.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn regime_violation_in_config_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bad_regime.toml");
    let out = bin()
        .args(["rate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("hurst = 0.6") && msg.contains("(1/3, 1/2)"), "{msg}");
}

#[test]
fn command_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["fbm"], Some("command = \"rate\"\n"), &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn constants_command_reports_q_above_p() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let out = run(&["constants"], Some("[constants]\nhurst = [0.4]\nk_max = 8\nquad_n = 4096\n"), &o);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&o.join("constants.csv"));
    assert_eq!(rows[0], ["H", "Q", "P", "tail_estimate", "q_minus_p"]);
    let q: f64 = rows[1][1].parse().unwrap();
    let p: f64 = rows[1][2].parse().unwrap();
    assert!(q > p && q > 0.0);
    assert_eq!(read_csv(&o.join("constants_terms.csv")).len(), 1 + 17);
}

#[test]
fn rate_fixture_recovers_synthetic_slope() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic_rate.csv");
    let cfg = format!("[rate]\nfixture = {:?}\n", fixture.display().to_string());
    let out = run(&["rate"], Some(&cfg), &o);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&o.join("rate_fit.csv"));
    assert_eq!(rows[1][0], "modified");
    let slope: f64 = rows[1][1].parse().unwrap();
    assert!((slope + 0.3).abs() < 1e-12, "{slope}");
}

#[test]
fn small_rate_run_writes_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let out = run(&["rate", "--seed", "4"], Some("[rate]\nns = [8, 16, 32, 64]\nreps = 3\n"), &o);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&o.join("rate.csv"));
    assert_eq!(rows[0], ["scheme", "n", "H", "mean_err", "stderr", "reps"]);
    assert_eq!(rows.len(), 1 + 8);
    assert!(o.join("rate_fit.csv").exists() && o.join("summary.json").exists());
}

#[test]
fn same_seed_gives_identical_csvs_and_complete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[simulate]\nn = 32\n[fbm]\nn = 64\npaths = 2\n";
    for cmd in ["simulate", "fbm"] {
        let (a, b) = (dir.path().join(format!("{cmd}_a")), dir.path().join(format!("{cmd}_b")));
        for d in [&a, &b] {
            let out = run(&[cmd, "--seed", "11"], Some(cfg), d);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
        let (same, total) = compare_csv_dirs(&a, &b).unwrap();
        assert!(total > 0 && same == total, "{cmd}: {same}/{total}");

        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(a.join(MANIFEST)).unwrap()).unwrap();
        let listed: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
        for e in fs::read_dir(&a).unwrap() {
            let name = e.unwrap().file_name().to_string_lossy().into_owned();
            if name != MANIFEST {
                assert!(listed.contains(&name.as_str()), "{name} not in manifest");
            }
        }
        for f in manifest["files"].as_array().unwrap() {
            let bytes = fs::read(a.join(f["path"].as_str().unwrap())).unwrap();
            assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes));
        }
    }
}

#[test]
fn different_seed_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["fbm", "--seed", "1"], Some("[fbm]\nn = 16\n"), &a);
    let out = bin().args(["fbm", "--out"]).arg(&b).env("ROUGH_EULER_SEED", "2").env("ROUGH_EULER_CONFIG", a.with_extension("toml")).output().unwrap();
    assert!(out.status.success());
    assert_ne!(fs::read(a.join("fbm.csv")).unwrap(), fs::read(b.join("fbm.csv")).unwrap());
}

#[test]
fn csv_numbers_round_trip_through_text() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    assert!(run(&["fbm"], Some("[fbm]\nn = 64\n"), &o).status.success());
    let rows = read_csv(&o.join("fbm.csv"));
    for row in &rows[1..] {
        for field in row {
            let x: f64 = field.parse().unwrap();
            assert_eq!(rough_euler::fbm::fmt_f64(x), *field);
        }
    }
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(&["check"], Some("[check]\ncriteria = [2, 3]\n"), &dir.path().join("ok"));
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("2/2 criteria passed"));

    // With Q and P exchanged, W for the two-noise field is not a covariance,
    // so the CLT criterion fails regardless of sample size.
    let o = dir.path().join("swapped");
    let bad = run(&["check"], Some("[check]\ncriteria = [9]\nscale = 0.01\nswap_qp = true\n"), &o);
    assert_eq!(bad.status.code(), Some(2), "{}", String::from_utf8_lossy(&bad.stderr));
    let table = fs::read_to_string(o.join("check.csv")).unwrap();
    let row = table.lines().nth(1).unwrap();
    assert!(row.starts_with("9,error_CLT,false"), "{row}");
    assert!(row.contains("rejected"), "{row}");
}

#[test]
fn print_config_echoes_effective_values() {
    let out = bin().args(["rate", "--seed", "77", "--print-config"]).output().unwrap();
    assert!(out.status.success());
    let cfg = ExperimentConfig::parse(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(cfg.seed, 77);
}

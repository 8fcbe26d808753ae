use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn apd(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apd"))
        .args(args)
        .env("APD_OUTPUT_ROOT", root)
        .output()
        .expect("spawn apd")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const TESTBED: &str = r#"
schema_version = 1
task = "testbed"
algorithm = "apd"
seeds = [0, 1]
iterations = 500
output_dir = "tb"

[schedule]
kind = "invlin-exact"

[dual]
kind = "ascent"
zeta = 0.05
"#;

const GRID: &str = r#"
schema_version = 1
task = "gridworld"
algorithm = "papd-reinforce"
seeds = [1, 2]
iterations = 30
output_dir = "grid"

[schedule]
kind = "invlin-practical"

[sampling]
n_traj = 4
horizon = 20
"#;

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn testbed_run_writes_certified_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tb.toml", TESTBED);
    let out = apd(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("tb");
    for s in [0, 1] {
        assert_eq!(lines(&dir.join(format!("seed_{s}.csv"))), 501);
        let cert: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("certificate_seed_{s}.json"))).unwrap())
                .unwrap();
        assert_eq!(cert["passed"], serde_json::Value::Bool(true));
    }
    assert_eq!(lines(&dir.join("curves.csv")), 501);
    assert!(dir.join("summary.json").exists());
    assert!(dir.join("config.toml").exists());

    let out = apd(tmp.path(), &["verify", dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("pass").count(), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "g.toml", GRID);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(apd(&a, &["run", cfg.to_str().unwrap()]).status.success());
    assert!(apd(&b, &["run", cfg.to_str().unwrap()]).status.success());
    for name in ["seed_1.csv", "seed_2.csv", "curves.csv"] {
        let x = std::fs::read(a.join("grid").join(name)).unwrap();
        let y = std::fs::read(b.join("grid").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn aggregate_rebuilds_curves() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "g.toml", GRID);
    assert!(apd(tmp.path(), &["run", cfg.to_str().unwrap()]).status.success());
    let dir = tmp.path().join("grid");
    let curves = dir.join("curves.csv");
    let before = std::fs::read(&curves).unwrap();
    std::fs::remove_file(&curves).unwrap();
    let out = apd(tmp.path(), &["aggregate", dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(&curves).unwrap(), before);
}

#[test]
fn sweep_table_has_a_row_per_cell() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "g.toml", GRID);
    let out = apd(
        tmp.path(),
        &["sweep", cfg.to_str().unwrap(), "--grid", "h1=0.2,0.32,0.5,0.8,1,1.25,2,3.2"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = tmp.path().join("grid/sweep.csv");
    assert_eq!(lines(&table), 9);
}

#[test]
fn single_cell_sweep_matches_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "g.toml", GRID);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(apd(&a, &["run", cfg.to_str().unwrap()]).status.success());
    assert!(apd(&b, &["sweep", cfg.to_str().unwrap(), "--grid", "h1=1"]).status.success());
    let run = std::fs::read(a.join("grid/seed_1.csv")).unwrap();
    let cell = std::fs::read(b.join("grid/cell_00_h1_x1/seed_1.csv")).unwrap();
    assert_eq!(run, cell);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let no_seeds = write_config(tmp.path(), "bad.toml", &TESTBED.replace("seeds = [0, 1]", "seeds = []"));
    assert_eq!(apd(tmp.path(), &["run", no_seeds.to_str().unwrap()]).status.code(), Some(2));

    let unknown = write_config(tmp.path(), "typo.toml", &format!("{TESTBED}\n[sampling]\nntraj = 3\n"));
    assert_eq!(apd(tmp.path(), &["run", unknown.to_str().unwrap()]).status.code(), Some(2));

    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(apd(tmp.path(), &["aggregate", empty.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(apd(tmp.path(), &["verify", empty.to_str().unwrap()]).status.code(), Some(3));
}

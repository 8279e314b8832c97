use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
trials = 2
axis_values = [10.0, 20.0]
architectures = [
  { array = "RCRAA", structure = "FullyConnected" },
  { array = "FPA", structure = "FullyConnected" },
]

[config]
n_em = 20
n_t = 4
n_rf = 2
k_users = 2
"#;

fn trihybrid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trihybrid"))
        .args(args)
        .current_dir(dir)
        .env("TRIHYBRID_THREADS", "2")
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), config).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn run_se_writes_rows_plotdata_and_metadata() {
    let dir = setup(SMALL);
    let out = trihybrid(dir.path(), &["run-se", "--config", "exp.toml", "--out", "se.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(dir.path(), "se.csv").lines().count(), 1 + 2 * 2 * 2);
    assert!(read(dir.path(), "se_plotdata.csv").contains("paired,"));
    let meta = read(dir.path(), "se_metadata.json");
    assert!(meta.contains("\"objective\": \"SE\"") && meta.contains("\"seeds\""));
}

#[test]
fn flags_override_file_values() {
    let dir = setup(SMALL);
    let out = trihybrid(
        dir.path(),
        &["run-ee", "--config", "exp.toml", "--solver", "dqtfp", "--seed", "9", "--trials", "1", "--values", "15", "--out", "ee.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read(dir.path(), "ee.csv");
    assert_eq!(rows.lines().count(), 3);
    assert!(rows.lines().skip(1).all(|l| l.contains(",1.5000000000000000e1,0,9,")));
    let meta = read(dir.path(), "ee_metadata.json");
    assert!(meta.contains("\"ee_solver\": \"DQTFP\"") && meta.contains("\"objective\": \"EE\""));
}

#[test]
fn reruns_are_identical() {
    let dir = setup(SMALL);
    for name in ["a.csv", "b.csv"] {
        let out = trihybrid(dir.path(), &["sweep", "--config", "exp.toml", "--out", name]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(read(dir.path(), "a.csv"), read(dir.path(), "b.csv"));
}

#[test]
fn not_converged_rows_exit_with_two() {
    let dir = setup(&format!("{SMALL}\n[se_options]\nmax_outer = 1\n"));
    let out = trihybrid(dir.path(), &["run-se", "--config", "exp.toml", "--out", "nc.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(read(dir.path(), "nc.csv").contains(",false"));
}

#[test]
fn errors_exit_with_one() {
    let dir = setup("trialz = 3\n");
    let out = trihybrid(dir.path(), &["sweep", "--config", "exp.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trialz"));

    let out = trihybrid(dir.path(), &["run-se", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(1));

    // The default 80-candidate array is far beyond exhaustive search.
    let out = trihybrid(dir.path(), &["oracle-check", "--trials", "1", "--out", "o.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_check_reports_gaps() {
    let dir = setup("trials = 3\n[config]\nn_em = 10\nn_t = 3\nn_rf = 2\nk_users = 2\nd_p = 0.25\n");
    let out = trihybrid(dir.path(), &["oracle-check", "--config", "exp.toml", "--out", "oracle.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(dir.path(), "oracle.csv");
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.contains(",56,")));
}

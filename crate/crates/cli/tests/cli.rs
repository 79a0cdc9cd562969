//! The binary's exit codes, outputs and golden reports.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rvbir_cli::{BenchRow, BenchTable};
use serde_json::Value;

fn corpus(name: &str, ext: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/corpus/{name}/{name}.{ext}"))
}

fn rvbir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvbir"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Compares with `tests/golden/<name>`, rewriting it under `RVBIR_BLESS`.
fn golden(name: &str, actual: &str) {
    let file = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("RVBIR_BLESS").is_some() {
        std::fs::create_dir_all(file.parent().unwrap()).unwrap();
        std::fs::write(&file, actual).unwrap();
        return;
    }
    let expected =
        std::fs::read_to_string(&file).unwrap_or_else(|e| panic!("{}: {e}", file.display()));
    assert_eq!(actual, expected, "golden {name}");
}

/// Zeroes wall-clock fields so reports compare across runs.
fn without_times(mut v: Value) -> Value {
    fn walk(v: &mut Value) {
        match v {
            Value::Object(m) => {
                for (k, x) in m.iter_mut() {
                    if k == "elapsed_seconds" || k == "seconds" {
                        *x = Value::from(0.0);
                    } else {
                        walk(x);
                    }
                }
            }
            Value::Array(a) => a.iter_mut().for_each(walk),
            _ => {}
        }
    }
    walk(&mut v);
    v
}

#[test]
fn lift_prints_the_incr_program() {
    let o = rvbir(&[
        "lift",
        path(&corpus("incr", "dis")),
        "--entry",
        "0x10488",
        "--end",
        "0x1048c",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    golden("lift_incr.txt", &stdout(&o));
}

#[test]
fn lift_errors_exit_2_with_their_location() {
    let dir = tempfile::tempdir().unwrap();
    let listing = std::fs::read_to_string(corpus("incr", "dis")).unwrap();

    let bad = dir.path().join("bad.dis");
    std::fs::write(&bad, listing.replace("00150513", "0015zz13")).unwrap();
    let o = rvbir(&["lift", path(&bad), "--entry", "0x10488", "--end", "0x1048c"]);
    assert_eq!(code(&o), 2);
    let line = listing
        .lines()
        .position(|l| l.contains("00150513"))
        .unwrap()
        + 1;
    assert!(
        stderr(&o).contains(&format!("line {line}")),
        "{}",
        stderr(&o)
    );

    let float = dir.path().join("float.dis");
    let text = listing.replace(
        "00150513          \taddi\ta0,a0,1",
        "02b57553          \tfadd.d\tfa0,fa0,fa1",
    );
    assert_ne!(text, listing);
    std::fs::write(&float, text).unwrap();
    let o = rvbir(&[
        "lift",
        path(&float),
        "--entry",
        "0x10488",
        "--end",
        "0x1048c",
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("0x10488"), "{}", stderr(&o));
}

#[test]
fn verify_incr_exits_0_with_the_golden_report() {
    let o = rvbir(&[
        "--format",
        "json",
        "verify",
        path(&corpus("incr", "dis")),
        path(&corpus("incr", "contract")),
        "--trials",
        "50",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["status"], "holds");
    assert_eq!(v["leaves"], 1);
    golden(
        "verify_incr.json",
        &(serde_json::to_string_pretty(&without_times(v)).unwrap() + "\n"),
    );
}

#[test]
fn verify_off_by_one_exits_1_with_pre_x10() {
    let dir = tempfile::tempdir().unwrap();
    let contract = dir.path().join("incr2.contract");
    let text = std::fs::read_to_string(corpus("incr", "contract")).unwrap();
    std::fs::write(&contract, text.replace("pre_x10 + 1", "pre_x10 + 2")).unwrap();
    let o = rvbir(&[
        "--format",
        "json",
        "verify",
        path(&corpus("incr", "dis")),
        path(&contract),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "refuted");
    assert!(v["report"]["counterexample"]["pre_x10"].is_string());
}

#[test]
fn unrolling_nothing_on_a_loop_exits_3() {
    let o = rvbir(&[
        "--unroll",
        "0",
        "verify",
        path(&corpus("isqrt", "dis")),
        path(&corpus("isqrt", "contract")),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stdout(&o).contains("budget exhausted"), "{}", stdout(&o));
}

#[test]
fn missing_solver_exits_2() {
    let o = rvbir(&[
        "--solver",
        "/nonexistent/z3",
        "verify",
        path(&corpus("incr", "dis")),
        path(&corpus("incr", "contract")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("solver"), "{}", stderr(&o));
}

#[test]
fn symex_dumps_the_structure() {
    let o = rvbir(&[
        "--format",
        "json",
        "symex",
        path(&corpus("mod2", "dis")),
        path(&corpus("mod2", "contract")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["structure"]["leaves"].as_array().unwrap().len(), 1);
    golden("symex_mod2.json", &stdout(&o));
}

#[test]
fn check_sim_passes_fails_on_mutation_and_rejects_zero_trials() {
    let o = rvbir(&["check-sim", "--trials", "100"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("0 failed"));
    let o = rvbir(&["check-sim", "--trials", "50", "--mutate"]);
    assert_eq!(code(&o), 1);
    let o = rvbir(&["check-sim", "--trials", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bench_of_an_empty_corpus_is_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let o = rvbir(&["bench", path(dir.path()), "--csv", path(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    golden("bench_empty.csv", &text);
    assert!(BenchTable::from_csv(&text).unwrap().is_empty());
}

#[test]
fn bench_rows_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["incr", "mod2", "swap", "isqrt"] {
        let sub = dir.path().join(name);
        std::fs::create_dir(&sub).unwrap();
        for ext in ["dis", "contract"] {
            std::fs::copy(corpus(name, ext), sub.join(format!("{name}.{ext}"))).unwrap();
        }
    }
    let csv = dir.path().join("t.csv");
    let o = rvbir(&[
        "--format",
        "json",
        "bench",
        path(dir.path()),
        "--csv",
        path(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows: Vec<BenchRow> = serde_json::from_value(v["rows"].clone()).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["incr", "mod2", "isqrt", "swap"]);
    assert!(rows.iter().all(|r| r.verdict == "verified"));
    let back = BenchTable::from_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(back, rows);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CSVS: [&str; 4] = ["mct.csv", "ccdf.csv", "throughput.csv", "cwnd_growth.csv"];

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn cwrsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwrsim"))
        .args(args)
        .output()
        .expect("spawn cwrsim")
}

fn simulate(file: &str, out: &Path, extra: &[&str]) {
    let path = scenario(file);
    let mut args = vec![
        "simulate",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = cwrsim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn one_run_writes_four_csvs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    simulate("three_sources_sym_cwr.conf", tmp.path(), &[]);
    let run = tmp.path().join("run_000");
    for f in CSVS.iter().chain(&["manifest.json"]) {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    assert!(tmp.path().join("ccdf_pooled.csv").is_file());
    assert!(!tmp.path().join("run_001").exists());
    let mct = fs::read_to_string(run.join("mct.csv")).unwrap();
    assert_eq!(
        mct.lines().next(),
        Some("source_id,message_id,generated_at_us,mct_us,loss_involved,duplicated")
    );
    // Warm-up of 1 s, then three sources for 29 s.
    assert!(mct.lines().count() > 800);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    simulate("three_sources_20_100_cwr_red.conf", &a, &["--seed", "9"]);
    simulate("three_sources_20_100_cwr_red.conf", &b, &["--seed", "9"]);
    simulate("three_sources_20_100_cwr_red.conf", &c, &["--seed", "10"]);
    for f in CSVS.iter().chain(&["manifest.json"]) {
        let read = |d: &Path| fs::read(d.join("run_000").join(f)).unwrap();
        assert_eq!(read(&a), read(&b), "{f} differs");
    }
    assert_ne!(
        fs::read(a.join("run_000/mct.csv")).unwrap(),
        fs::read(c.join("run_000/mct.csv")).unwrap()
    );
}

#[test]
fn repetitions_advance_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (reps, single) = (tmp.path().join("reps"), tmp.path().join("single"));
    simulate(
        "one_source_cwr.conf",
        &reps,
        &["--reps", "2", "--seed", "4"],
    );
    simulate("one_source_cwr.conf", &single, &["--seed", "5"]);
    assert_eq!(
        fs::read(reps.join("run_001/throughput.csv")).unwrap(),
        fs::read(single.join("run_000/throughput.csv")).unwrap()
    );
}

#[test]
fn parse_error_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.conf");
    fs::write(&bad, "duration = 30\npath_scheduler = fastest\n").unwrap();
    let o = cwrsim(&[
        "simulate",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert!(!tmp.path().join("run_000").exists());
}

#[test]
fn compare_reports_growth_ordering() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for k in ["lowrtt", "cwr", "cwr_red"] {
        let d = tmp.path().join(k);
        simulate(&format!("one_source_{k}.conf"), &d, &[]);
        dirs.push(d.to_str().unwrap().to_string());
    }
    let mut args = vec!["compare"];
    args.extend(dirs.iter().map(String::as_str));
    let o = cwrsim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8(o.stdout).unwrap();
    for p in 0..2 {
        assert!(
            report.contains(&format!(
                "growth ordering lowrtt >= cwr >= cwr_red on path {p}: holds"
            )),
            "{report}"
        );
    }
    assert!(report.contains("priority bytes cwr_red/cwr"));
}

#[test]
fn compare_rejects_missing_directory() {
    let o = cwrsim(&["compare", "/nonexistent/cwrsim-runs"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cwrsim-runs"));
}

use std::path::Path;
use std::process::{Command, Output};

use howde::io;
use howde::{run_howde_all, HowdeParams};

fn howde(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_howde"))
        .current_dir(dir)
        .env("HOWDE_THREADS", "2")
        .args(args)
        .output()
        .expect("run howde")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = howde(dir, args);
    assert!(
        out.status.success(),
        "howde {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path) {
    ok(
        dir,
        &[
            "synth",
            "--agents",
            "12",
            "--days",
            "56",
            "--seed",
            "4",
            "--output",
            "stops.csv",
            "--truth",
            "truth.csv",
            "--coords",
            "coords.csv",
        ],
    );
}

#[test]
fn detect_matches_library_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = ok(
        dir.path(),
        &[
            "detect",
            "--input",
            "stops.csv",
            "--delta-T-H",
            "28",
            "--f-hours-H",
            "0.9",
        ],
    );

    let users = io::read_stops(&dir.path().join("stops.csv")).unwrap();
    let params = HowdeParams {
        delta_t_h: 28,
        f_hours_h: 0.9,
        ..Default::default()
    };
    let mut expected = Vec::new();
    io::write_labels(&run_howde_all(&users, &params).unwrap(), &mut expected).unwrap();
    assert_eq!(out.stdout, expected);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    std::fs::write(
        dir.path().join("run.cfg"),
        "# detector settings\nf_hours_H = 0.9\ndelta_T_H = 28\n",
    )
    .unwrap();
    let from_file = ok(
        dir.path(),
        &["detect", "--config", "run.cfg", "--input", "stops.csv"],
    );
    let from_flags = ok(
        dir.path(),
        &[
            "detect",
            "--input",
            "stops.csv",
            "--delta-T-H",
            "28",
            "--f-hours-H",
            "0.9",
        ],
    );
    assert_eq!(from_file.stdout, from_flags.stdout);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    std::fs::write(
        dir.path().join("bad.cfg"),
        "f_hours_H = 0.9\nf_hour_H = 0.8\n",
    )
    .unwrap();
    let out = howde(
        dir.path(),
        &["detect", "--config", "bad.cfg", "--input", "stops.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("f_hour_H"), "{err}");
}

#[test]
fn odd_centered_window_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = howde(
        dir.path(),
        &["detect", "--input", "stops.csv", "--delta-T-H", "27"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta_T_H"));
    // past-only windows accept any length
    ok(
        dir.path(),
        &[
            "detect",
            "--input",
            "stops.csv",
            "--delta-T-H",
            "27",
            "--window-mode",
            "PAST_ONLY",
        ],
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing_truth = howde(dir.path(), &["evaluate", "--labels", "labels.csv"]);
    assert_eq!(missing_truth.status.code(), Some(2));
    let both_targets = howde(
        dir.path(),
        &[
            "profiles",
            "--input",
            "stops.csv",
            "--labels",
            "l.csv",
            "--truth",
            "t.csv",
        ],
    );
    assert_eq!(both_targets.status.code(), Some(2));
    let no_target = howde(dir.path(), &["profiles", "--input", "stops.csv"]);
    assert_eq!(no_target.status.code(), Some(2));
}

#[test]
fn malformed_stops_report_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("stops.csv"),
        "user_id,loc_id,start,end\nu,A,2019-01-07T00:00:00,2019-01-07T06:00:00\nu,B,2019-01-07T09:00:00,2019-01-07T08:00:00\n",
    )
    .unwrap();
    let out = howde(dir.path(), &["detect", "--input", "stops.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stops.csv:3"));
}

#[test]
fn sweep_has_one_row_per_combination() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = ok(
        dir.path(),
        &[
            "sweep",
            "--input",
            "stops.csv",
            "--truth",
            "truth.csv",
            "--grid",
            "f_hours_H=0.5,0.7,0.9",
            "--grid",
            "delta_T_H=14,28",
            "--bootstrap-B",
            "10",
        ],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines[0].starts_with("f_hours_H,delta_T_H,home_acc"));
}

#[test]
fn evaluate_writes_both_scopes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    ok(
        dir.path(),
        &["detect", "--input", "stops.csv", "--output", "labels.csv"],
    );
    let out = ok(
        dir.path(),
        &[
            "evaluate",
            "--labels",
            "labels.csv",
            "--truth",
            "truth.csv",
            "--bootstrap-B",
            "20",
        ],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("HOME,USER_WEEK,") && rows[1].starts_with("WORK,USER_WEEK,"));
}

#[test]
fn protocol_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    ok(
        dir.path(),
        &["detect", "--input", "stops.csv", "--output", "labels.csv"],
    );
    std::fs::write(
        dir.path().join("other.csv"),
        "user_id,scope,week,loc_id\nnobody,HOME,2019-W02,x\n",
    )
    .unwrap();
    let out = howde(
        dir.path(),
        &["evaluate", "--labels", "labels.csv", "--truth", "other.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn profiles_then_entropy() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    ok(
        dir.path(),
        &["detect", "--input", "stops.csv", "--output", "labels.csv"],
    );
    ok(
        dir.path(),
        &[
            "profiles",
            "--input",
            "stops.csv",
            "--labels",
            "labels.csv",
            "--k",
            "3",
            "--output",
            "clusters.csv",
            "--assignments",
            "assign.csv",
        ],
    );
    let clusters = std::fs::read_to_string(dir.path().join("clusters.csv")).unwrap();
    assert_eq!(clusters.lines().count(), 1 + 3);
    let out = ok(
        dir.path(),
        &["entropy", "--assignments", "assign.csv", "--k", "3"],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    for row in text.lines().skip(1) {
        let h: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0 + 1e-12).contains(&h), "{row}");
    }
}

#[test]
fn anonymize_and_apps_run() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = ok(
        dir.path(),
        &["anonymize", "--input", "stops.csv", "--seed", "1"],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.lines().nth(1).unwrap().contains("1969-12-")
            || text.lines().nth(1).unwrap().contains("1970-01-0")
    );

    ok(
        dir.path(),
        &["detect", "--input", "stops.csv", "--output", "labels.csv"],
    );
    let emp = ok(
        dir.path(),
        &[
            "apps",
            "employment",
            "--labels",
            "labels.csv",
            "--coords",
            "coords.csv",
            "--min-stable-days",
            "14",
        ],
    );
    assert!(String::from_utf8(emp.stdout).unwrap().lines().count() > 1);
    let com = ok(
        dir.path(),
        &[
            "apps",
            "commute",
            "--labels",
            "labels.csv",
            "--coords",
            "coords.csv",
        ],
    );
    assert!(String::from_utf8(com.stdout).unwrap().lines().count() > 1);
}

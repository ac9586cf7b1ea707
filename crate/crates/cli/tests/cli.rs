//! Binary behavior: flags, report formats, exit codes, diagnostics.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use maskcheck_core::counting::smt::emit_smt;
use maskcheck_core::{VarId, Width};

fn maskcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskcheck"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/goubin_b2a.mask")
        .display()
        .to_string()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn secure_run_exits_zero_with_a_text_report() {
    let out = maskcheck(&["verify", &fixture(), "--order", "1", "--width", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("maskcheck: secure"), "got {text}");
    assert!(text.contains("potential leaky sets: 1 (1 spurious, 0 genuine, 0 undecided)"));
}

#[test]
fn leaky_run_exits_one_and_names_the_share_pair() {
    let out = maskcheck(&["verify", &fixture(), "-d", "2", "-w", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.starts_with("maskcheck: leaky"));
    assert!(text.contains("{y0, y3}"), "got {text}");
}

#[test]
fn types_mode_exits_two_when_potentials_remain() {
    let out = maskcheck(&["verify", &fixture(), "-d", "1", "--mode", "types"]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout(&out);
    assert!(text.starts_with("maskcheck: undecided"));
    assert!(text.contains("{A}"), "got {text}");
}

#[test]
fn json_report_is_machine_readable() {
    let out = maskcheck(&[
        "verify", &fixture(), "-d", "1", "-w", "2", "--format", "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert_eq!(v["schema"], 1);
    assert_eq!(v["verdict"], "secure");
    assert_eq!(v["width"], 2);
    assert_eq!(v["stats"]["pls"], 1);
}

#[test]
fn environment_variables_configure_the_run() {
    let out = Command::new(env!("CARGO_BIN_EXE_maskcheck"))
        .args(["verify", &fixture()])
        .env("MASKCHECK_ORDER", "2")
        .env("MASKCHECK_WIDTH", "1")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn source_diagnostics_point_at_file_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.mask");
    fs::write(&path, "#private k;\ny = k ^^ 1;\nreturn y;\n").unwrap();
    let out = maskcheck(&["verify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken.mask:2:"), "got {err}");
}

#[test]
fn usage_errors_stay_clear_of_verdict_codes() {
    for args in [
        &["verify", "--no-such-flag"][..],
        &["verify"][..],
        &["no-such-command"][..],
    ] {
        let out = maskcheck(args);
        assert_eq!(out.status.code(), Some(3), "args {args:?}");
    }
    let out = maskcheck(&["verify", &fixture(), "--width", "40"]);
    assert_eq!(out.status.code(), Some(3));
    let out = maskcheck(&["verify", &fixture(), "--order", "0"]);
    assert_eq!(out.status.code(), Some(3));
    let out = maskcheck(&["verify", "/no/such/file.mask"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_and_version_exit_cleanly() {
    for args in [&["--help"][..], &["--version"][..], &["verify", "--help"][..]] {
        let out = maskcheck(args);
        assert_eq!(out.status.code(), Some(0), "args {args:?}");
    }
    assert!(stdout(&maskcheck(&["--help"])).contains("verify"));
}

#[test]
fn smt_solve_decides_emitted_formulas() {
    let w = Width::W1;
    let p = common::program(
        common::CORPUS.iter().find(|(n, _)| *n == "goubin_b2a").unwrap().1,
        w,
    );
    let by_name = |n: &str| p.vars.lookup(n).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let solve = |set: &BTreeSet<VarId>, name: &str| -> String {
        let doc = emit_smt(&p, set, 12).unwrap();
        let path = dir.path().join(name);
        fs::write(&path, doc.formula).unwrap();
        let out = maskcheck(&["smt-solve", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        stdout(&out).trim().to_string()
    };

    let leaky: BTreeSet<VarId> = [by_name("y0"), by_name("y3")].into_iter().collect();
    assert_eq!(solve(&leaky, "leaky.smt2"), "sat");

    let spurious: BTreeSet<VarId> = [by_name("y0")].into_iter().collect();
    assert_eq!(solve(&spurious, "spurious.smt2"), "unsat");

    let out = maskcheck(&["smt-solve", "/no/such/file.smt2"]);
    assert_eq!(out.status.code(), Some(3));
}

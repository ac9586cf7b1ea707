//! Full pipeline runs checked against the reference interpreter.

mod common;

use std::collections::BTreeSet;
use std::fs;

use maskcheck_core::pipeline::{run, Mode, RunConfig};
use maskcheck_core::report::{emit_report, Format, Report, Timings, Verdict};
use maskcheck_core::{VarId, Width};

fn write_config(dir: &tempfile::TempDir, name: &str, src: &str) -> RunConfig {
    let path = dir.path().join(format!("{name}.mask"));
    fs::write(&path, src).unwrap();
    let mut c = RunConfig::new(path);
    c.workers = 1;
    c
}

fn genuine_ids(report: &Report) -> BTreeSet<BTreeSet<VarId>> {
    report
        .genuine_leaks
        .iter()
        .map(|l| l.set_ids.iter().map(|&id| VarId(id)).collect())
        .collect()
}

#[test]
fn full_runs_agree_with_exhaustive_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    for &(name, src) in common::CORPUS {
        for width in [Width::W1, Width::W2] {
            let p = common::program(src, width);
            for order in 1..=2usize {
                let mut c = write_config(&dir, name, src);
                c.order = order;
                c.width = width;
                let report = run(&c).unwrap();
                assert!(
                    report.undecided.is_empty(),
                    "{name} w{} d{order}: nothing should stay undecided at this size",
                    width.bits()
                );

                let oracle: BTreeSet<BTreeSet<VarId>> =
                    common::leaky_sets(&p, order).into_iter().collect();
                let expected = if oracle.is_empty() {
                    Verdict::Secure
                } else {
                    Verdict::Leaky
                };
                assert_eq!(
                    report.verdict,
                    expected,
                    "{name} w{} d{order}: verdict disagrees with enumeration",
                    width.bits()
                );
                assert_eq!(
                    genuine_ids(&report),
                    oracle,
                    "{name} w{} d{order}: leak lists disagree",
                    width.bits()
                );
            }
        }
    }
}

#[test]
fn genuine_leaks_stay_within_the_type_phase_potentials() {
    let dir = tempfile::tempdir().unwrap();
    for &(name, src) in common::CORPUS {
        let mut c = write_config(&dir, name, src);
        c.order = 2;
        c.width = Width::W2;
        let full = run(&c).unwrap();
        c.mode = Mode::TypesOnly;
        let types = run(&c).unwrap();

        let potentials: BTreeSet<Vec<u32>> = types
            .undecided
            .iter()
            .map(|u| u.set_ids.clone())
            .collect();
        for leak in &full.genuine_leaks {
            assert!(
                potentials.contains(&leak.set_ids),
                "{name}: genuine leak {:?} missing from the type phase potentials",
                leak.set
            );
        }
    }
}

#[test]
fn repeat_single_worker_runs_render_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let goubin = common::CORPUS.iter().find(|(n, _)| *n == "goubin_b2a").unwrap();
    let mut c = write_config(&dir, goubin.0, goubin.1);
    c.order = 2;
    c.width = Width::W2;
    let render = |mut r: Report| {
        r.timings = Timings::default();
        emit_report(&r, Format::Json)
    };
    assert_eq!(render(run(&c).unwrap()), render(run(&c).unwrap()));
}

//! End-to-end orchestration: source file in, [`Report`] out.
//!
//! [`run`] drives the phases in order. The source is parsed and
//! elaborated, the explorer covers every size-d observation set and hands
//! back the potential leaky sets, and each of those is resolved: first
//! against the pattern store, then by exhaustive counting, and when the
//! counting budget is exceeded by emitting a solver formula (solved
//! externally when a command is configured). Freshly counted verdicts are
//! inserted into the store and fed back to the type context, so repeated
//! shapes are resolved once and later queries short-circuit.
//!
//! Resolution failures are never dropped: a set that exhausts its budget
//! with no solver configured, or whose solver answers unknown, is listed
//! in the report as undecided with the reason, and the run exits
//! undecided rather than secure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::counting::smt::{emit_smt, run_solver, SolverAnswer};
use crate::counting::{
    parallel_decide, CountError, CountVerdict, LeakWitness, DEFAULT_BIT_BUDGET, SMT_BIT_CAP,
};
use crate::explore::explore;
use crate::frontend::{self, Diagnostic, ElaborateOptions};
use crate::patterns::{CacheOutcome, PatternStore, StoreError};
use crate::program::Program;
use crate::report::{
    Backend, Format, Leak, Report, RunStats, Timings, UndecidedSet, WitnessReport, REPORT_SCHEMA,
};
use crate::typesys::{DistType, TypeContext};
use crate::vars::VarId;
use crate::width::Width;

/// Whether resolution runs after type inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Explore, then resolve every potential leaky set.
    Full,
    /// Stop after exploration; potential leaky sets stay undecided.
    TypesOnly,
}

impl Mode {
    fn label(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::TypesOnly => "typecheck-only",
        }
    }
}

/// One verification run, fully specified.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    /// Attack order d: the number of simultaneous observations.
    pub order: usize,
    pub width: Width,
    pub mode: Mode,
    /// Counting workers; 0 means one per available core.
    pub workers: usize,
    /// Bit budget bounding histogram size and enumeration space.
    pub budget: u32,
    /// Where emitted solver formulas go; temp directory when unset.
    pub smt_dir: Option<PathBuf>,
    /// External solver command, e.g. `z3 -in` style binaries taking a
    /// file argument. Unset disables solver escalation.
    pub solver: Option<String>,
    /// Pattern store backing file; in-memory store when unset.
    pub patterns_path: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            input: input.into(),
            order: 1,
            width: Width::W8,
            mode: Mode::Full,
            workers: 0,
            budget: DEFAULT_BIT_BUDGET,
            smt_dir: None,
            solver: None,
            patterns_path: None,
            format: Format::Text,
        }
    }

    fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            self.workers
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Parse or elaboration failure, rendered `path:line:col: message`.
    #[error("{path}:{diagnostic}")]
    Source { path: PathBuf, diagnostic: Diagnostic },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Execute a full verification run.
pub fn run(config: &RunConfig) -> Result<Report, RunError> {
    if config.order == 0 {
        return Err(RunError::Config("order must be at least 1".into()));
    }
    if config.budget == 0 {
        return Err(RunError::Config("bit budget must be positive".into()));
    }
    if let Some(cmd) = &config.solver {
        if cmd.split_whitespace().next().is_none() {
            return Err(RunError::Config("solver command is empty".into()));
        }
    }

    let total = Instant::now();
    let src = std::fs::read_to_string(&config.input).map_err(|source| RunError::Io {
        path: config.input.clone(),
        source,
    })?;
    let diag = |diagnostic| RunError::Source {
        path: config.input.clone(),
        diagnostic,
    };
    let parsed = frontend::parse(&src).map_err(diag)?;
    let opts = ElaborateOptions {
        table_dir: config.input.parent().map(Path::to_path_buf),
        ..ElaborateOptions::default()
    };
    let program = frontend::elaborate_with(&parsed, config.width, &opts).map_err(diag)?;

    let mut ctx = TypeContext::new(&program);
    let explore_start = Instant::now();
    let explored = explore(&ctx, config.order);
    let explore_ms = explore_start.elapsed().as_millis() as u64;

    let store = match &config.patterns_path {
        Some(path) => PatternStore::open(path)?,
        None => PatternStore::in_memory(),
    };

    let resolve_start = Instant::now();
    let mut resolution = Resolution::default();
    match config.mode {
        Mode::TypesOnly => {
            for set in &explored.pls {
                resolution.undecided.push(UndecidedSet {
                    set: set_names(&program, set),
                    set_ids: set_ids(set),
                    reason: "type inference inconclusive; resolution skipped in \
                             typecheck-only mode"
                        .into(),
                });
            }
        }
        Mode::Full => {
            for set in &explored.pls {
                resolve_set(config, &program, &mut ctx, &store, set, &mut resolution)?;
            }
        }
    }
    let resolve_ms = resolve_start.elapsed().as_millis() as u64;

    let verdict = Report::verdict_for(&resolution.genuine, &resolution.undecided);
    Ok(Report {
        schema: REPORT_SCHEMA,
        program: config.input.display().to_string(),
        order: config.order,
        width: config.width,
        mode: config.mode.label().to_string(),
        verdict,
        genuine_leaks: resolution.genuine,
        spurious_sets: resolution.spurious,
        undecided: resolution.undecided,
        stats: RunStats {
            tuples: explored.stats.tuples,
            sets: explored.stats.sets,
            simply_dom: explored.stats.simply_dom,
            simply_col: explored.stats.simply_col,
            pls: explored.pls.len() as u64,
            pattern_hits: store.hits(),
            counting_calls: resolution.counting_calls,
            smt_calls: resolution.smt_calls,
        },
        pattern_families: store.summary(),
        proof_log: resolution.log,
        timings: Timings {
            explore_ms,
            resolve_ms,
            total_ms: total.elapsed().as_millis() as u64,
        },
    })
}

#[derive(Default)]
struct Resolution {
    genuine: Vec<Leak>,
    spurious: u64,
    undecided: Vec<UndecidedSet>,
    counting_calls: u64,
    smt_calls: u64,
    log: Vec<String>,
    emitted: u64,
}

/// Settle one potential leaky set: pattern store, then counting, then the
/// solver escape hatch.
fn resolve_set(
    config: &RunConfig,
    program: &Program,
    ctx: &mut TypeContext,
    store: &PatternStore,
    set: &BTreeSet<VarId>,
    out: &mut Resolution,
) -> Result<(), RunError> {
    let names = set_names(program, set);
    let label = format!("{{{}}}", names.join(", "));
    let exprs: Vec<_> = set.iter().map(|&x| program.computation(x)).collect();

    let normalized = match store.lookup_set(&program.arena, &exprs) {
        CacheOutcome::Hit(verdict) => {
            out.log.push(format!("{label}: pattern hit, {verdict}"));
            if verdict.is_secure() {
                out.spurious += 1;
                ctx.feedback.record_independent(set.clone());
            } else {
                ctx.feedback.record_leaky(set.clone());
                out.genuine.push(Leak {
                    set: names,
                    set_ids: set_ids(set),
                    backend: Backend::Pattern,
                    witness: None,
                });
            }
            return Ok(());
        }
        CacheOutcome::Miss(normalized) => normalized,
    };

    let provenance = format!(
        "{} d={} w={}",
        config.input.display(),
        config.order,
        config.width.bits()
    );
    let workers = config.effective_workers();
    match parallel_decide(program, set, workers, config.budget) {
        Ok(CountVerdict::SecretIndependent) => {
            out.counting_calls += 1;
            out.spurious += 1;
            ctx.feedback.record_independent(set.clone());
            store.insert(normalized, DistType::SecretIndependent, provenance)?;
            out.log
                .push(format!("{label}: counted secret-independent, spurious"));
        }
        Ok(CountVerdict::Leaky(witness)) => {
            out.counting_calls += 1;
            ctx.feedback.record_leaky(set.clone());
            store.insert(normalized, DistType::Leaky, provenance)?;
            out.log.push(format!(
                "{label}: counted leaky, tuple {:?} occurs {} vs {} times",
                witness.tuple, witness.count_ref, witness.count
            ));
            out.genuine.push(Leak {
                set: names,
                set_ids: set_ids(set),
                backend: Backend::Counting,
                witness: Some(witness_report(program, set, &witness)),
            });
        }
        Err(err @ (CountError::HistogramBudget { .. } | CountError::EnumerationBudget { .. })) => {
            escalate_to_smt(config, program, ctx, store, set, normalized, &err, out)?;
        }
        Err(err) => {
            out.log.push(format!("{label}: counting failed, {err}"));
            out.undecided.push(UndecidedSet {
                set: names,
                set_ids: set_ids(set),
                reason: err.to_string(),
            });
        }
    }
    Ok(())
}

/// Counting ran out of budget: emit the solver formula and, when a solver
/// command is configured, trust its sat/unsat answer.
#[allow(clippy::too_many_arguments)]
fn escalate_to_smt(
    config: &RunConfig,
    program: &Program,
    ctx: &mut TypeContext,
    store: &PatternStore,
    set: &BTreeSet<VarId>,
    normalized: crate::patterns::NormalizedSet,
    budget_err: &CountError,
    out: &mut Resolution,
) -> Result<(), RunError> {
    let names = set_names(program, set);
    let label = format!("{{{}}}", names.join(", "));
    let give_up = |out: &mut Resolution, reason: String| {
        out.log.push(format!("{label}: {reason}"));
        out.undecided.push(UndecidedSet {
            set: names.clone(),
            set_ids: set_ids(set),
            reason,
        });
    };

    if config.smt_dir.is_none() && config.solver.is_none() {
        give_up(
            out,
            format!("{budget_err}; no smt directory or solver configured"),
        );
        return Ok(());
    }

    let doc = match emit_smt(program, set, SMT_BIT_CAP) {
        Ok(doc) => doc,
        Err(cap_err) => {
            give_up(
                out,
                format!("{budget_err}; solver formula unavailable: {cap_err}"),
            );
            return Ok(());
        }
    };

    let dir = config
        .smt_dir
        .clone()
        .unwrap_or_else(std::env::temp_dir);
    let io_err = |source| RunError::Io {
        path: dir.clone(),
        source,
    };
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    let stem = config
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "program".into());
    let ids: Vec<String> = set.iter().map(|v| v.0.to_string()).collect();
    out.emitted += 1;
    let base = format!("{}_d{}_set_{}", stem, config.order, ids.join("_"));
    let formula_path = dir.join(format!("{base}.smt2"));
    let manifest_path = dir.join(format!("{base}.manifest.json"));
    std::fs::write(&formula_path, &doc.formula).map_err(io_err)?;
    std::fs::write(&manifest_path, &doc.manifest).map_err(io_err)?;

    let Some(solver) = &config.solver else {
        give_up(
            out,
            format!(
                "{budget_err}; formula emitted to {}, no solver configured",
                formula_path.display()
            ),
        );
        return Ok(());
    };

    out.smt_calls += 1;
    let provenance = format!(
        "{} d={} w={} (solver)",
        config.input.display(),
        config.order,
        config.width.bits()
    );
    match run_solver(solver, &formula_path) {
        Ok(SolverAnswer::Unsat) => {
            out.spurious += 1;
            ctx.feedback.record_independent(set.clone());
            store.insert(normalized, DistType::SecretIndependent, provenance)?;
            out.log
                .push(format!("{label}: solver unsat, secret-independent"));
        }
        Ok(SolverAnswer::Sat) => {
            ctx.feedback.record_leaky(set.clone());
            store.insert(normalized, DistType::Leaky, provenance)?;
            out.log.push(format!("{label}: solver sat, leaky"));
            out.genuine.push(Leak {
                set: names,
                set_ids: set_ids(set),
                backend: Backend::Smt,
                witness: None,
            });
        }
        Ok(SolverAnswer::Unknown) => {
            give_up(
                out,
                format!("solver answered unknown on {}", formula_path.display()),
            );
        }
        Err(spawn_err) => {
            give_up(
                out,
                format!(
                    "solver `{}` failed on {}: {}",
                    solver,
                    formula_path.display(),
                    spawn_err
                ),
            );
        }
    }
    Ok(())
}

fn set_names(program: &Program, set: &BTreeSet<VarId>) -> Vec<String> {
    set.iter()
        .map(|&v| program.vars.name(v).to_string())
        .collect()
}

fn set_ids(set: &BTreeSet<VarId>) -> Vec<u32> {
    set.iter().map(|v| v.0).collect()
}

fn witness_report(program: &Program, set: &BTreeSet<VarId>, w: &LeakWitness) -> WitnessReport {
    let named = |m: &std::collections::BTreeMap<VarId, u16>| -> Vec<(String, u16)> {
        m.iter()
            .map(|(&v, &val)| (program.vars.name(v).to_string(), val))
            .collect()
    };
    WitnessReport {
        publics: named(&w.eta_p),
        secrets_ref: named(&w.eta_k_ref),
        secrets: named(&w.eta_k),
        tuple: set
            .iter()
            .zip(&w.tuple)
            .map(|(&v, &val)| (program.vars.name(v).to_string(), val))
            .collect(),
        count_ref: w.count_ref,
        count: w.count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::count_joint;
    use crate::report::{emit_report, Verdict};
    use std::collections::BTreeMap;
    use std::fs;
    use std::os::unix::fs::PermissionsExt;

    const GOUBIN: &str = r#"
        #private k;
        #random r, r';
        #preshare { x' = k ^ r; }
        y0 = x' ^ r';
        y1 = y0 - r';
        y2 = y1 ^ x';
        y3 = r' ^ r;
        y4 = y3 ^ x';
        y5 = y4 - y3;
        A  = y5 ^ y2;
        return A;
    "#;

    fn fixture(dir: &tempfile::TempDir, name: &str, src: &str) -> PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, src).unwrap();
        path
    }

    fn config(input: PathBuf) -> RunConfig {
        let mut c = RunConfig::new(input);
        c.workers = 1;
        c
    }

    fn leak_names(report: &Report) -> Vec<Vec<String>> {
        report.genuine_leaks.iter().map(|l| l.set.clone()).collect()
    }

    #[test]
    fn first_order_conversion_is_secure_with_one_spurious_set() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(fixture(&dir, "b2a.mask", GOUBIN));
        c.order = 1;
        c.width = Width::W8;
        let r = run(&c).unwrap();
        assert_eq!(r.verdict, Verdict::Secure);
        assert!(r.genuine_leaks.is_empty());
        assert_eq!(r.spurious_sets, 1);
        assert!(r.undecided.is_empty());
        assert_eq!(r.stats.pls, 1);
        assert_eq!(r.stats.counting_calls, 1);
        assert_eq!(r.stats.pattern_hits, 0);
        assert_eq!(r.stats.tuples, 10);
        assert_eq!(r.stats.sets, 5);
    }

    #[test]
    fn second_order_flags_the_masked_share_pair() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(fixture(&dir, "b2a.mask", GOUBIN));
        c.order = 2;
        c.width = Width::W1;
        let r = run(&c).unwrap();
        assert_eq!(r.verdict, Verdict::Leaky);
        assert!(r.undecided.is_empty());
        let names = leak_names(&r);
        assert!(names.contains(&vec!["y0".to_string(), "y3".to_string()]));
        assert!(names.contains(&vec!["r".to_string(), "x'".to_string()]));

        // Every reported witness must replay: the two secret assignments
        // disagree on the reported tuple with exactly the reported counts.
        let program = {
            let src = fs::read_to_string(&c.input).unwrap();
            frontend::elaborate(&frontend::parse(&src).unwrap(), c.width).unwrap()
        };
        let by_name: BTreeMap<&str, VarId> = program
            .x_check()
            .iter()
            .map(|&v| (program.vars.name(v), v))
            .chain(
                program
                    .vars
                    .ids()
                    .map(|v| (program.vars.name(v), v)),
            )
            .collect();
        for leak in &r.genuine_leaks {
            let w = leak.witness.as_ref().expect("counting leaks carry witnesses");
            assert_ne!(w.count_ref, w.count);
            let set: BTreeSet<VarId> = leak.set.iter().map(|n| by_name[n.as_str()]).collect();
            let to_ids = |kv: &[(String, u16)]| -> BTreeMap<VarId, u16> {
                kv.iter().map(|(n, val)| (by_name[n.as_str()], *val)).collect()
            };
            let eta_p = to_ids(&w.publics);
            let idx_vals: Vec<u16> = w.tuple.iter().map(|&(_, v)| v).collect();
            let h_ref = count_joint(&program, &set, &eta_p, &to_ids(&w.secrets_ref), 32).unwrap();
            let h = count_joint(&program, &set, &eta_p, &to_ids(&w.secrets), 32).unwrap();
            assert_eq!(h_ref.counts()[h_ref.index_of(&idx_vals)], w.count_ref);
            assert_eq!(h.counts()[h.index_of(&idx_vals)], w.count);
        }
    }

    #[test]
    fn typecheck_only_leaves_potentials_undecided() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(fixture(&dir, "b2a.mask", GOUBIN));
        c.order = 1;
        c.mode = Mode::TypesOnly;
        let r = run(&c).unwrap();
        assert_eq!(r.verdict, Verdict::Undecided);
        assert_eq!(r.undecided.len(), 1);
        assert_eq!(r.undecided[0].set, vec!["A".to_string()]);
        assert_eq!(r.stats.counting_calls, 0);
        assert_eq!(r.stats.smt_calls, 0);
        assert_eq!(r.verdict.exit_code(), 2);
    }

    #[test]
    fn reports_are_deterministic_modulo_timings() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(fixture(&dir, "b2a.mask", GOUBIN));
        c.order = 2;
        c.width = Width::W2;
        let render = |mut r: Report| {
            r.timings = Timings::default();
            emit_report(&r, Format::Json)
        };
        let a = render(run(&c).unwrap());
        let b = render(run(&c).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn pattern_store_short_circuits_repeat_runs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(fixture(&dir, "b2a.mask", GOUBIN));
        c.order = 2;
        c.width = Width::W1;
        c.patterns_path = Some(dir.path().join("patterns.jsonl"));

        let first = run(&c).unwrap();
        assert_eq!(first.stats.pattern_hits, 0);
        assert!(first.stats.counting_calls > 0);

        let second = run(&c).unwrap();
        assert_eq!(second.stats.counting_calls, 0);
        assert_eq!(second.stats.pattern_hits, second.stats.pls);
        assert_eq!(second.verdict, first.verdict);
        assert_eq!(leak_names(&second), leak_names(&first));
        assert!(second
            .genuine_leaks
            .iter()
            .all(|l| l.backend == Backend::Pattern && l.witness.is_none()));
    }

    fn script_solver(dir: &tempfile::TempDir, answer: &str) -> String {
        let path = dir.path().join(format!("solver_{answer}.sh"));
        fs::write(&path, format!("#!/bin/sh\necho {answer}\n")).unwrap();
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
        path.display().to_string()
    }

    #[test]
    fn budget_overflow_escalates_to_the_configured_solver() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(fixture(&dir, "b2a.mask", GOUBIN));
        c.order = 1;
        c.width = Width::W1;
        c.budget = 1;
        c.smt_dir = Some(dir.path().join("smt"));

        // No solver: the formula is still written and the set is reported
        // undecided with the reason, not silently dropped.
        let r = run(&c).unwrap();
        assert_eq!(r.verdict, Verdict::Undecided);
        assert_eq!(r.undecided.len(), 1);
        assert!(r.undecided[0].reason.contains("no solver configured"));
        assert_eq!(r.stats.smt_calls, 0);
        let emitted: Vec<_> = fs::read_dir(dir.path().join("smt"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert!(emitted.iter().any(|n| n.ends_with(".smt2")));
        assert!(emitted.iter().any(|n| n.ends_with(".manifest.json")));

        // An unsat answer settles the set as spurious, sat as leaky; the
        // pipeline trusts the solver for sets it cannot count.
        c.solver = Some(script_solver(&dir, "unsat"));
        let r = run(&c).unwrap();
        assert_eq!(r.verdict, Verdict::Secure);
        assert_eq!(r.spurious_sets, 1);
        assert_eq!(r.stats.smt_calls, 1);

        c.solver = Some(script_solver(&dir, "sat"));
        let r = run(&c).unwrap();
        assert_eq!(r.verdict, Verdict::Leaky);
        assert_eq!(r.genuine_leaks.len(), 1);
        assert_eq!(r.genuine_leaks[0].backend, Backend::Smt);

        c.solver = Some(script_solver(&dir, "maybe"));
        let r = run(&c).unwrap();
        assert_eq!(r.verdict, Verdict::Undecided);
        assert!(r.undecided[0].reason.contains("unknown"));
    }

    #[test]
    fn invalid_configs_are_rejected_up_front() {
        let dir = tempfile::tempdir().unwrap();
        let path = fixture(&dir, "b2a.mask", GOUBIN);

        let mut c = config(path.clone());
        c.order = 0;
        assert!(matches!(run(&c), Err(RunError::Config(_))));

        let mut c = config(path.clone());
        c.budget = 0;
        assert!(matches!(run(&c), Err(RunError::Config(_))));

        let mut c = config(path);
        c.solver = Some("   ".into());
        assert!(matches!(run(&c), Err(RunError::Config(_))));
    }

    #[test]
    fn missing_input_surfaces_as_io_error() {
        let c = config(PathBuf::from("/nonexistent/input.mask"));
        let err = run(&c).unwrap_err();
        assert!(matches!(err, RunError::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/input.mask"));
    }

    #[test]
    fn source_errors_render_file_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let src = "#private k;\ny0 = k ^^ 1;\nreturn y0;\n";
        let c = config(fixture(&dir, "broken.mask", src));
        let err = run(&c).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, RunError::Source { .. }));
        assert!(msg.contains("broken.mask:2:"), "got {msg}");
    }
}

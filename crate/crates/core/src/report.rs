//! Run results in their final, user-facing shape.
//!
//! [`Report`] is everything a verification run concluded: verdict, the
//! genuine leaks with their counterexamples, anything left undecided with
//! the reason, and the work counters that explain where time went. It
//! renders as readable text or as versioned JSON with stable field order,
//! so downstream tooling can pin itself to `schema`.
//!
//! The verdict is three-valued on purpose. Secure means every size-d set
//! was certified; leaky means at least one genuine leak was proven;
//! undecided means nothing was proven leaky but some sets exceeded the
//! configured budgets and are still open. An undecided run is not a
//! security statement.

use serde::Serialize;

use crate::width::Width;

/// Bumped whenever the JSON layout changes incompatibly.
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Every size-d observable set is secret-independent.
    Secure,
    /// At least one genuine leak was established.
    Leaky,
    /// No leak proven, but some sets could not be resolved.
    Undecided,
}

impl Verdict {
    /// Shell convention: 0 secure, 1 leaky, 2 undecided.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Secure => 0,
            Verdict::Leaky => 1,
            Verdict::Undecided => 2,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Secure => "secure",
            Verdict::Leaky => "leaky",
            Verdict::Undecided => "undecided",
        })
    }
}

/// Output encoding for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

/// How a genuine leak or spurious set was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Exhaustive histogram comparison.
    Counting,
    /// Reused from an isomorphic cached pattern.
    Pattern,
    /// External solver on the emitted formula.
    Smt,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Counting => "counting",
            Backend::Pattern => "pattern",
            Backend::Smt => "smt",
        })
    }
}

/// A concrete demonstration that a set leaks: two secret assignments with
/// different counts for one observed tuple, publics held fixed.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub publics: Vec<(String, u16)>,
    pub secrets_ref: Vec<(String, u16)>,
    pub secrets: Vec<(String, u16)>,
    /// Observed values paired with the set members, ascending by variable.
    pub tuple: Vec<(String, u16)>,
    pub count_ref: u64,
    pub count: u64,
}

/// One genuinely leaky size-d set.
#[derive(Debug, Clone, Serialize)]
pub struct Leak {
    pub set: Vec<String>,
    pub set_ids: Vec<u32>,
    pub backend: Backend,
    /// Present when counting found the leak; pattern and solver verdicts
    /// carry no valuation.
    pub witness: Option<WitnessReport>,
}

/// A set the run could not resolve, with the reason spelled out.
#[derive(Debug, Clone, Serialize)]
pub struct UndecidedSet {
    pub set: Vec<String>,
    pub set_ids: Vec<u32>,
    pub reason: String,
}

/// Work counters, one per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    /// Size-d observation tuples the naive enumeration would visit.
    pub tuples: u64,
    /// Group checks the explorer performed.
    pub sets: u64,
    /// Checks needing dominated-subexpression rewrites.
    pub simply_dom: u64,
    /// Checks needing collapse rewrites on top.
    pub simply_col: u64,
    /// Potential leaky sets handed to resolution.
    pub pls: u64,
    /// Resolutions answered by the pattern store.
    pub pattern_hits: u64,
    /// Exhaustive counting runs that completed.
    pub counting_calls: u64,
    /// External solver invocations.
    pub smt_calls: u64,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timings {
    pub explore_ms: u64,
    pub resolve_ms: u64,
    pub total_ms: u64,
}

/// Everything one verification run concluded.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: u32,
    pub program: String,
    pub order: usize,
    pub width: Width,
    pub mode: String,
    pub verdict: Verdict,
    pub genuine_leaks: Vec<Leak>,
    pub spurious_sets: u64,
    pub undecided: Vec<UndecidedSet>,
    pub stats: RunStats,
    /// Canonical-shape families in the pattern store, constants masked,
    /// with entry counts.
    pub pattern_families: Vec<(String, usize)>,
    pub proof_log: Vec<String>,
    pub timings: Timings,
}

impl Report {
    /// The verdict the evidence forces: any genuine leak is leaky, any
    /// open set without a leak is undecided, otherwise secure.
    pub fn verdict_for(genuine: &[Leak], undecided: &[UndecidedSet]) -> Verdict {
        if !genuine.is_empty() {
            Verdict::Leaky
        } else if !undecided.is_empty() {
            Verdict::Undecided
        } else {
            Verdict::Secure
        }
    }
}

/// Render a report. Text is for terminals; JSON field order follows the
/// struct declaration and is covered by `schema`.
pub fn emit_report(report: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            serde_json::to_string_pretty(report).expect("reports always serialize")
        }
        Format::Text => render_text(report),
    }
}

fn render_text(r: &Report) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "maskcheck: {}", r.verdict);
    let _ = writeln!(
        out,
        "program {}, order {}, width {} bits, mode {}",
        r.program,
        r.order,
        r.width.bits(),
        r.mode
    );
    let _ = writeln!(
        out,
        "potential leaky sets: {} ({} spurious, {} genuine, {} undecided)",
        r.stats.pls,
        r.spurious_sets,
        r.genuine_leaks.len(),
        r.undecided.len()
    );

    if r.genuine_leaks.is_empty() {
        let _ = writeln!(out, "genuine leaks: none");
    } else {
        let _ = writeln!(out, "genuine leaks:");
        for leak in &r.genuine_leaks {
            let _ = writeln!(out, "  {{{}}} [{}]", leak.set.join(", "), leak.backend);
            if let Some(w) = &leak.witness {
                if !w.publics.is_empty() {
                    let _ = writeln!(out, "    publics {}", pairs(&w.publics));
                }
                let _ = writeln!(
                    out,
                    "    secrets {} vs {}",
                    pairs(&w.secrets_ref),
                    pairs(&w.secrets)
                );
                let _ = writeln!(
                    out,
                    "    tuple {}: {} assignments vs {}",
                    pairs(&w.tuple),
                    w.count_ref,
                    w.count
                );
            }
        }
    }

    if !r.undecided.is_empty() {
        let _ = writeln!(out, "undecided:");
        for u in &r.undecided {
            let _ = writeln!(out, "  {{{}}}: {}", u.set.join(", "), u.reason);
        }
    }

    if !r.pattern_families.is_empty() {
        let _ = writeln!(out, "pattern families:");
        for (family, count) in &r.pattern_families {
            let _ = writeln!(out, "  {} x{}", family, count);
        }
    }

    let s = &r.stats;
    let _ = writeln!(
        out,
        "stats: tuples {}, set checks {}, dominator rewrites {}, collapse rewrites {}, \
         pattern hits {}, counting calls {}, smt calls {}",
        s.tuples, s.sets, s.simply_dom, s.simply_col, s.pattern_hits, s.counting_calls, s.smt_calls
    );
    let t = &r.timings;
    let _ = writeln!(
        out,
        "timings: explore {} ms, resolve {} ms, total {} ms",
        t.explore_ms, t.resolve_ms, t.total_ms
    );
    out
}

fn pairs(kv: &[(String, u16)]) -> String {
    if kv.is_empty() {
        return "()".to_string();
    }
    let body: Vec<String> = kv.iter().map(|(k, v)| format!("{}={}", k, v)).collect();
    format!("({})", body.join(", "))
}

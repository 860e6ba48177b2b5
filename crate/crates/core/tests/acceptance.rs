//! The twelve acceptance criteria, one PASS/FAIL line each.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fpt::fp::div_violation_count;
use fpt::verify::{run_suite, SuiteConfig, SuiteReport};
use fpt::FpFormat;

fn fmt(p: u32, q: u32) -> FpFormat {
    FpFormat::new(p, q).expect("valid format")
}

struct Outcome {
    ok: bool,
    detail: String,
}

fn run(name: &str, f: FpFormat) -> SuiteReport {
    let report = run_suite(name, f, &SuiteConfig::default()).unwrap_or_else(|e| panic!("{name}: {e}"));
    if !report.ok() {
        for failure in report.failures.iter().take(5) {
            eprintln!("  {name} {}: {} expected {} got {}", f, failure.case, failure.expected, failure.actual);
        }
    }
    report
}

/// All reports clean, none skipped, each with at least one case, inside the time budget.
fn judge(reports: &[SuiteReport], budget: Duration, start: Instant) -> Outcome {
    let elapsed = start.elapsed();
    let failed: u64 = reports.iter().map(|r| r.failed).sum();
    let skipped: u64 = reports.iter().map(|r| r.skipped).sum();
    let passed: u64 = reports.iter().map(|r| r.passed).sum();
    let empty = reports.iter().any(|r| r.passed == 0);
    Outcome {
        ok: failed == 0 && skipped == 0 && !empty && elapsed <= budget,
        detail: format!("{passed} passed, {failed} failed, {skipped} skipped in {:.1}s (budget {}s)", elapsed.as_secs_f64(), budget.as_secs()),
    }
}

fn c1() -> Outcome {
    let start = Instant::now();
    let reports = [run("arith-conformance", fmt(2, 4)), run("arith-conformance", fmt(3, 4))];
    judge(&reports, Duration::from_secs(30), start)
}

fn c2() -> Outcome {
    let start = Instant::now();
    let mut reports: Vec<SuiteReport> = (3..=5).map(|p| run("lemma-oneppp", fmt(p, 4))).collect();
    reports.push(run("lemma-onep2", fmt(2, 4)));
    reports.extend((2..=5).map(|p| run("lemma-one-plus", fmt(p, 4))));
    judge(&reports, Duration::from_secs(60), start)
}

fn c3() -> Outcome {
    let start = Instant::now();
    let reports = [run("max-distinguish", fmt(2, 4)), run("max-distinguish", fmt(3, 4))];
    // 3·2^p closed-form values, 3·2^p distinctness checks, 6 saturated tails.
    let expected: u64 = [2u32, 3].iter().map(|&p| 2 * 3 * (1u64 << p) + 6).sum();
    let mut out = judge(&reports, Duration::from_secs(60), start);
    let total: u64 = reports.iter().map(|r| r.total).sum();
    out.ok &= total == expected;
    out.detail += &format!(", {total}/{expected} cases");
    out
}

fn c4() -> Outcome {
    let start = Instant::now();
    judge(&[run("saturation", fmt(2, 4))], Duration::from_secs(60), start)
}

fn c5() -> Outcome {
    let start = Instant::now();
    let r = run("posenc", fmt(2, 4));
    let mut out = judge(std::slice::from_ref(&r), Duration::from_secs(60), start);
    let finite_nonzero = fpt::fp::finite_count(fmt(2, 4)) - 1;
    let misses = r.failures.iter().filter(|f| f.case.starts_with("collision")).count();
    out.ok &= finite_nonzero == 118 && misses == 0;
    out.detail += &format!(", {finite_nonzero} nonzero finite z");
    out
}

fn c6() -> Outcome {
    let start = Instant::now();
    let r = run("three-max", fmt(2, 4));
    let mut out = judge(std::slice::from_ref(&r), Duration::from_secs(1), start);
    out.ok &= r.total == 2 + 6 + 24 + 120;
    out
}

fn c7() -> Outcome {
    let start = Instant::now();
    judge(&[run("thm4-thm5", fmt(2, 4))], Duration::from_secs(120), start)
}

fn c8() -> Outcome {
    let start = Instant::now();
    let r = run("thm2", fmt(2, 4));
    let mut out = judge(std::slice::from_ref(&r), Duration::from_secs(300), start);
    let shadow = r.notes.iter().any(|n| n.starts_with("exact arithmetic breaks (12,36)"));
    out.ok &= shadow;
    out.detail += if shadow { ", shadow violation recorded" } else { ", no shadow violation" };
    out
}

fn c9() -> Outcome {
    let start = Instant::now();
    let r = run("thm1-micro", fmt(2, 4));
    let mut out = judge(std::slice::from_ref(&r), Duration::from_secs(120), start);
    let witness = r.notes.iter().find(|n| n.starts_with("3-cycle witness"));
    out.ok &= witness.is_some();
    if let Some(w) = witness {
        out.detail += &format!("; {w}");
    }
    out
}

fn c10() -> Outcome {
    let start = Instant::now();
    judge(&[run("thm3-micro", fmt(2, 4))], Duration::from_secs(600), start)
}

fn c11() -> Outcome {
    let start = Instant::now();
    judge(&[run("gadgets", fmt(2, 4))], Duration::from_secs(300), start)
}

fn c12() -> Outcome {
    let count = div_violation_count();
    Outcome { ok: count == 0, detail: format!("{count} division contract violations") }
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 12] = [
        ("arithmetic conformance", c1),
        ("lemma identities and solvers", c2),
        ("max-distinguish", c3),
        ("same-sum saturation", c4),
        ("position encoding collisions", c5),
        ("three-max preimages", c6),
        ("swap12 equivariance and equality preservation", c7),
        ("similarity preservation", c8),
        ("diagonal micro assembly", c9),
        ("permutation-equivariant micro assembly", c10),
        ("gadget units", c11),
        ("softmax division domain", c12),
    ];
    let mut all = true;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let out = f();
        all &= out.ok;
        println!("{} criterion {:>2} {name}: {}", if out.ok { "PASS" } else { "FAIL" }, i + 1, out.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

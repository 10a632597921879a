//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Runs without the test harness so the lines are never captured:
//! `cargo test -p perishlab-core --test acceptance`. The benchmark behind
//! criteria 7, 8 and 10 dominates the runtime.

use std::time::{Duration, Instant};

use perishlab::checks::{self, CheckOutcome};
use perishlab::experiment::{pairwise_tests, run_instance, BenchmarkConfig, InstanceResult};
use perishlab::theory::{
    excess_risk_experiment, ExcessRiskConfig, HypothesisClass, NewsvendorWorld,
};

const SEED: u64 = 7;
const INSTANCES: usize = 5;
const ORDERING_MIN: usize = 4;
const STRUCTURE_SLACK: f64 = 0.01;
const STRUCTURE_CONTEXTS: usize = 20;
const THEORY_DEGREE: usize = 2;
const THEORY_SMALL_N: usize = 50;
const THEORY_LARGE_N: usize = 100_000;
const THEORY_SEEDS: usize = 100;
const THEORY_ALPHA: f64 = 0.05;
const THEORY_PARITY: f64 = 0.02;

/// Criteria that do not hold at the pinned settings. Their lines still print
/// FAIL; the test fails if any other criterion does, or if one of these
/// starts passing and the list goes stale.
const KNOWN_RED: &[usize] = &[7];

const LIMITS: [(usize, u64); 10] = [
    (1, 30),
    (2, 10),
    (3, 120),
    (4, 10),
    (5, 30),
    (6, 60),
    (7, 45 * 60),
    (8, 5 * 60),
    (9, 10 * 60),
    (10, 45 * 60),
];

struct Line {
    id: usize,
    passed: bool,
    text: String,
}

impl Line {
    fn new(id: usize, passed: bool, seconds: f64, text: String) -> Self {
        let limit = LIMITS[id - 1].1;
        let in_time = seconds <= limit as f64;
        let timing = if in_time {
            format!("{seconds:.1}s of {limit}s")
        } else {
            format!("{seconds:.1}s OVER the {limit}s limit")
        };
        Line {
            id,
            passed: passed && in_time,
            text: format!("{text}; {timing}"),
        }
    }

    fn from_check(id: usize, c: &CheckOutcome) -> Self {
        Self::new(id, c.passed, c.seconds, c.line())
    }

    fn print(&self) {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        let body = self
            .text
            .strip_prefix("PASS ")
            .or_else(|| self.text.strip_prefix("FAIL "))
            .unwrap_or(&self.text);
        println!("[{tag}] criterion {:>2}: {body}", self.id);
    }
}

fn invariants() -> Vec<Line> {
    let outcomes = checks::run_all(SEED).expect("invariant suites");
    outcomes
        .iter()
        .enumerate()
        .map(|(i, c)| Line::from_check(i + 1, c))
        .collect()
}

fn count(results: &[InstanceResult], better: &str, worse: &str, strict: bool) -> usize {
    results
        .iter()
        .filter(|r| {
            let (a, b) = (r.cost(better).unwrap().total, r.cost(worse).unwrap().total);
            if strict {
                a < b
            } else {
                a <= b
            }
        })
        .count()
}

fn benchmark() -> Vec<Line> {
    let cfg = BenchmarkConfig {
        seed: SEED,
        ..BenchmarkConfig::default()
    };
    let start = Instant::now();
    let mut results = Vec::new();
    let mut structure: Vec<CheckOutcome> = Vec::new();
    for i in 0..INSTANCES {
        let (r, m) = run_instance(&cfg, i).expect("benchmark instance");
        println!(
            "  instance {i}: benchmark {:.3}, e2e-bb {:.3}, e2e-pil {:.3}, e2e-bpil {:.3} (gamma {})",
            r.benchmark.summary.total,
            r.bb.summary.total,
            r.pil.summary.total,
            r.bpil.summary.total,
            r.boost.gamma
        );
        structure.push(
            checks::pil_structure(&m.pil.policy, &m.bench, STRUCTURE_CONTEXTS, STRUCTURE_SLACK)
                .expect("structure probe"),
        );
        results.push(r);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let probe_secs: f64 = structure.iter().map(|c| c.seconds).sum();

    let pairs = [
        ("e2e-bb", "e2e-pil"),
        ("e2e-pil", "e2e-bpil"),
        ("e2e-bb", "e2e-bpil"),
        ("benchmark", "e2e-bb"),
        ("benchmark", "e2e-pil"),
    ];
    println!("  paired t-tests, H0: C(first) <= C(second), t(p), stars at 5%, 1%, 0.1%");
    for (name, t) in pairwise_tests(&results, &pairs).expect("t-tests") {
        println!("    {name:<24} {}", t.cell());
    }

    let bpil = count(&results, "e2e-bpil", "e2e-pil", false);
    let pil = count(&results, "e2e-pil", "e2e-bb", true);
    let c7 = Line::new(
        7,
        bpil >= ORDERING_MIN && pil >= ORDERING_MIN,
        elapsed,
        format!(
            "cost ordering on {INSTANCES} SCR instances: BPIL <= PIL in {bpil}/{INSTANCES}, \
             PIL < BB in {pil}/{INSTANCES} (need {ORDERING_MIN} each)"
        ),
    );

    let worst = structure.iter().map(|c| c.worst).fold(0.0, f64::max);
    let probes: usize = structure.iter().map(|c| c.cases).sum();
    let c8 = Line::new(
        8,
        structure.iter().all(|c| c.passed),
        probe_secs,
        format!(
            "PIL order nonincreasing in probed stock: {probes} slot curves over {INSTANCES} \
             models, worst rise {worst:.3e} (slack {STRUCTURE_SLACK})"
        ),
    );

    let kept = results
        .iter()
        .filter(|r| {
            let one = r.boost.costs.iter().find(|c| c.0 == 1.0).map(|c| c.1);
            one.is_some_and(|c| r.boost.best_cost() <= c)
        })
        .count();
    let c10 = Line::new(
        10,
        kept == INSTANCES,
        elapsed,
        format!("boosted in-sample cost <= unboosted on {kept}/{INSTANCES} instances"),
    );
    vec![c7, c8, c10]
}

fn theory() -> Line {
    let start = Instant::now();
    let world = NewsvendorWorld::default();
    let cfg = ExcessRiskConfig {
        degree: THEORY_DEGREE,
        n_grid: vec![THEORY_SMALL_N, THEORY_LARGE_N],
        seeds: THEORY_SEEDS,
        seed: SEED,
        ..ExcessRiskConfig::default()
    };
    let rep = excess_risk_experiment(&world, &cfg).expect("excess-risk experiment");
    let risk = |n, c| rep.point(n, c).unwrap().mean_risk;
    let (full, cons) = (
        risk(THEORY_SMALL_N, HypothesisClass::Full),
        risk(THEORY_SMALL_N, HypothesisClass::Constrained),
    );
    let test = rep.dominance_test(THEORY_SMALL_N).unwrap();
    let (full_l, cons_l) = (
        risk(THEORY_LARGE_N, HypothesisClass::Full),
        risk(THEORY_LARGE_N, HypothesisClass::Constrained),
    );
    let gap = (full_l - cons_l).abs() / full_l.min(cons_l);
    Line::new(
        9,
        cons <= full && test.p < THEORY_ALPHA && gap <= THEORY_PARITY,
        start.elapsed().as_secs_f64(),
        format!(
            "n={THEORY_SMALL_N}: constrained {cons:.4} vs full {full:.4}, Welch p {:.2e} \
             (alpha {THEORY_ALPHA}); n={THEORY_LARGE_N}: gap {gap:.2e} (tol {THEORY_PARITY})",
            test.p
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut lines = invariants();
    lines.extend(benchmark());
    lines.push(theory());
    lines.sort_by_key(|l| l.id);
    println!();
    for l in &lines {
        l.print();
    }
    let red: Vec<usize> = lines.iter().filter(|l| !l.passed).map(|l| l.id).collect();
    println!(
        "{} of {} criteria pass in {:?}; known red: {KNOWN_RED:?}",
        lines.len() - red.len(),
        lines.len(),
        Duration::from_secs(start.elapsed().as_secs())
    );
    assert_eq!(
        red, KNOWN_RED,
        "failing criteria differ from the known-red list"
    );
}

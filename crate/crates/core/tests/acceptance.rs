//! Acceptance run: one PASS/FAIL line per criterion, followed by the
//! statistics behind it. Exits nonzero on any unexpected failure.

use std::process::ExitCode;
use std::time::Instant;

use quadlab::experiments::{self, ExperimentError};
use quadlab::report::ExperimentReport;

const SEED: u64 = 20_240_601;

/// Statistics whose stated reference is known not to hold; they still print
/// FAIL but do not change the exit code.
const KNOWN: &[(&str, &str)] = &[(
    "min_label.lt_minus_k",
    "the printed formula is the law of {min <= -k}; the strict event matches it at k+1 (see min_label.lt_minus_k_shifted)",
)];

struct Criterion {
    id: u32,
    title: &'static str,
    limit_seconds: Option<f64>,
    gated: bool,
    run: fn() -> Result<ExperimentReport, ExperimentError>,
}

fn criteria() -> Vec<Criterion> {
    vec![
        Criterion {
            id: 1,
            title: "Green function closed forms against the linear solve",
            limit_seconds: Some(60.0),
            gated: true,
            run: || experiments::green_audit(8, 8, 1e-9),
        },
        Criterion {
            id: 2,
            title: "weighted-visit recurrence residuals and boundary constants",
            limit_seconds: Some(5.0),
            gated: true,
            run: || experiments::hstar_audit(30, 10),
        },
        Criterion {
            id: 3,
            title: "spine decomposition law equality, N = 1e6",
            limit_seconds: Some(300.0),
            gated: true,
            run: || experiments::law_equality(1, 1_000_000, 2, SEED),
        },
        Criterion {
            id: 4,
            title: "all-positive frequency of rho(x) against w(x), N = 1e6",
            limit_seconds: None,
            gated: true,
            run: || experiments::rho_positive(&[1, 2, 3], 1_000_000, SEED),
        },
        Criterion {
            id: 5,
            title: "CVS bijection on all 3-edge labeled trees",
            limit_seconds: Some(10.0),
            gated: true,
            run: || experiments::cvs_audit(3),
        },
        Criterion {
            id: 6,
            title: "hitting probability of 1 from 2, N = 1e6",
            limit_seconds: None,
            gated: true,
            run: || experiments::hitting_frequency(2, 1, 1_000_000, 1e-7, SEED),
        },
        Criterion {
            id: 7,
            title: "min-label tail of the conditioned tree, n = 5, k = 3, N = 1e5",
            limit_seconds: None,
            gated: true,
            run: || experiments::min_label(5, 3, 100_000, SEED),
        },
        Criterion {
            id: 8,
            title: "kernel sum and upper block share",
            limit_seconds: Some(120.0),
            gated: true,
            run: || experiments::kernel_limit(5, 5, 500, &[200, 500, 1000]),
        },
        Criterion {
            id: 9,
            title: "second moment of the Lamperti chain at n = 1e4",
            limit_seconds: Some(120.0),
            gated: true,
            run: || experiments::lamperti(10_000),
        },
        Criterion {
            id: 10,
            title: "embedded submap law at n = 1, N = 1e5",
            limit_seconds: None,
            gated: true,
            run: || experiments::submap_law(100_000, 2, SEED),
        },
        Criterion {
            id: 11,
            title: "property suites on sampled maps",
            limit_seconds: None,
            gated: true,
            run: || experiments::property_suite(20, 10_000, SEED),
        },
        Criterion {
            id: 12,
            title: "coupling and localization trends at n = 30 (not gated)",
            limit_seconds: None,
            gated: false,
            run: || {
                Ok(ExperimentReport::merge(
                    "trends",
                    SEED,
                    vec![experiments::couple(30, &[], 400, SEED)?, experiments::localize(30, &[], 0.5, 100, SEED)?],
                ))
            },
        },
    ]
}

fn known(name: &str) -> Option<&'static str> {
    KNOWN.iter().find(|(n, _)| *n == name).map(|(_, why)| *why)
}

fn main() -> ExitCode {
    let mut unexpected = 0;
    for c in criteria() {
        let start = Instant::now();
        let outcome = (c.run)();
        let secs = start.elapsed().as_secs_f64();
        let report = match outcome {
            Ok(r) => r,
            Err(e) => {
                println!("FAIL  {:>2}  {}  error: {e}", c.id, c.title);
                unexpected += usize::from(c.gated);
                continue;
            }
        };
        let failed: Vec<&str> = report.statistics.iter().filter(|s| s.failed()).map(|s| s.name.as_str()).collect();
        let slow = c.limit_seconds.is_some_and(|l| secs > l);
        let timing = match c.limit_seconds {
            Some(l) => format!("{secs:.1}s, limit {l}s"),
            None => format!("{secs:.1}s"),
        };
        let status = if !c.gated {
            "INFO"
        } else if failed.is_empty() && !slow {
            "PASS"
        } else {
            "FAIL"
        };
        let mut line = format!("{status}  {:>2}  {}  ({timing})", c.id, c.title);
        if slow {
            line.push_str("  runtime over limit");
        }
        let known_only = !slow && !failed.is_empty() && failed.iter().all(|n| known(n).is_some());
        for n in &failed {
            if let Some(why) = known(n) {
                line.push_str(&format!("  known: {n}: {why}"));
            }
        }
        println!("{line}");
        for l in report.to_text().lines().skip(1) {
            println!("          {l}");
        }
        for a in report.artifacts.iter().take(3) {
            println!("          artifact {a}");
        }
        if c.gated && status == "FAIL" && !known_only {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        println!("acceptance: no unexpected failures");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    }
}

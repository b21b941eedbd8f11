use quadlab::experiments::{cvs_audit, hstar_audit};
use quadlab::report::{validate_json, validate_report_json, ExperimentReport, Provenance, Statistic, REPORT_SCHEMA};
use serde_json::Value;

fn sample_report() -> ExperimentReport {
    let mut r = ExperimentReport::new("demo", 7).param("n", 3).param("betas", [0.1, 0.5]);
    r.push(Statistic::close("close", 1.0, 1.0 + 1e-12, 1e-9, Provenance::Derived));
    r.push(Statistic::binomial("freq", 30, 100, 0.5, 3.0, Provenance::Paper));
    r.push(Statistic::trend("trend", 0.2, false));
    r.push(Statistic::observe("huge", f64::INFINITY));
    r.replicates = 100;
    r.artifacts.push("witness".into());
    r
}

#[test]
fn json_round_trip_validates() {
    let r = sample_report();
    let text = r.to_json();
    validate_report_json(&text).unwrap();
    let back = ExperimentReport::from_json(&text).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.to_json(), text);
}

#[test]
fn experiment_reports_validate() {
    for r in [cvs_audit(2).unwrap(), hstar_audit(6, 4).unwrap()] {
        validate_report_json(&r.to_json()).unwrap();
        assert!(r.passed(), "{}", r.to_text());
    }
}

#[test]
fn schema_rejects_malformed_reports() {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let good: Value = serde_json::from_str(&sample_report().to_json()).unwrap();
    validate_json(&schema, &good).unwrap();
    let mutate = |f: &dyn Fn(&mut Value)| {
        let mut v = good.clone();
        f(&mut v);
        validate_json(&schema, &v)
    };
    assert!(mutate(&|v| {
        v.as_object_mut().unwrap().remove("seed");
    })
    .is_err());
    assert!(mutate(&|v| v["seed"] = Value::from(-1)).is_err());
    assert!(mutate(&|v| v["extra"] = Value::Null).is_err());
    assert!(mutate(&|v| v["statistics"][0]["provenance"] = Value::from("guess")).is_err());
    assert!(mutate(&|v| v["statistics"][1]["pass"] = Value::from("yes")).is_err());
    assert!(mutate(&|v| v["artifacts"][0] = Value::from(3)).is_err());
    assert!(validate_report_json("{").is_err());
}

#[test]
fn only_reference_statistics_gate() {
    let r = sample_report();
    assert!(!r.stat("trend").unwrap().gates());
    assert!(!r.stat("huge").unwrap().gates());
    assert!(r.stat("close").unwrap().gates());
    assert!(r.stat("freq").unwrap().failed());
    assert!(!r.passed());
    let mut ok = r.clone();
    ok.statistics.retain(|s| s.name != "freq");
    assert!(ok.passed());
    assert_eq!(r.stat("huge").unwrap().value, f64::MAX);
}

#[test]
fn text_lists_every_statistic() {
    let r = sample_report();
    let text = r.to_text();
    assert!(text.starts_with("# demo seed 7 replicates 100 censored 0"));
    assert_eq!(text.lines().count(), 1 + r.statistics.len());
    assert!(text.contains("PASS     close"));
    assert!(text.contains("FAIL     freq"));
    assert!(text.contains("trend-no trend"));
}

#[test]
fn merge_prefixes_parameters() {
    let a = ExperimentReport::new("a", 1).param("n", 1);
    let mut b = ExperimentReport::new("b", 1).param("n", 2);
    b.censored = 3;
    let m = ExperimentReport::merge("ab", 1, vec![a, b]);
    assert_eq!(m.parameters["a.n"], Value::from(1));
    assert_eq!(m.parameters["b.n"], Value::from(2));
    assert_eq!(m.censored, 3);
}

proptest::proptest! {
    #[test]
    fn statistic_values_survive_json(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        let mut r = ExperimentReport::new("p", 0);
        r.push(Statistic::close("v", v, v, 0.0, Provenance::Trivial));
        let back = ExperimentReport::from_json(&r.to_json()).unwrap();
        proptest::prop_assert_eq!(back.statistics[0].value.to_bits(), v.to_bits());
    }
}

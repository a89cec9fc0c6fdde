//! The full oracle verification suite must pass on a fixed fuzz seed and on
//! an arbitrary second seed (reproducibility and coverage).

use asht_core::verify;

#[test]
fn oracle_suite_passes_on_the_default_seed() {
    let report = verify::run_all(1).unwrap();
    for check in &report.checks {
        println!(
            "[{}] {} ({} cases): {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.cases,
            check.detail
        );
    }
    assert!(report.passed);
}

#[test]
fn oracle_suite_passes_on_a_second_seed() {
    let report = verify::run_all(99).unwrap();
    assert!(report.passed, "{:?}", report.checks);
}

#[test]
fn reports_serialize_deterministically() {
    let a = serde_json::to_string(&verify::run_all(5).unwrap()).unwrap();
    let b = serde_json::to_string(&verify::run_all(5).unwrap()).unwrap();
    assert_eq!(a, b);
}

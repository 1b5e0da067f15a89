//! Acceptance suite: runs every criterion at its stated tolerance and
//! prints one pass/fail line per criterion.

use tshelm::selftest::{run_all, CriterionResult};

fn report(r: &CriterionResult) {
    let status = if r.passed { "PASS" } else { "FAIL" };
    println!(
        "{status} criterion {:>2} {:<26} worst {:.3e} threshold {:.3e} ({})",
        r.index, r.name, r.worst, r.threshold, r.detail
    );
}

macro_rules! criterion_test {
    ($test:ident, $func:ident) => {
        #[test]
        fn $test() {
            let r = tshelm::selftest::$func(42);
            report(&r);
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    };
}

criterion_test!(acceptance_01_operator_identities, criterion_operator_identities);
criterion_test!(acceptance_02_integration_by_parts, criterion_integration_by_parts);
criterion_test!(acceptance_03_helmholtz_catalog, criterion_helmholtz_catalog);
criterion_test!(acceptance_04_reconstruction_roundtrip, criterion_reconstruction_roundtrip);
criterion_test!(acceptance_05_variational_agreement, criterion_variational_agreement);
criterion_test!(acceptance_06_solver_reductions, criterion_solver_reductions);
criterion_test!(acceptance_07_critical_point, criterion_critical_point);
criterion_test!(acceptance_08_star_equivalence, criterion_star_equivalence);
criterion_test!(acceptance_09_parser_differentiator, criterion_parser_differentiator);

#[test]
fn acceptance_all_summary() {
    let results = run_all(42);
    for r in &results {
        report(r);
    }
    assert!(results.iter().all(|r| r.passed));
}

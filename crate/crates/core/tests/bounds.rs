use unireg::bounds::*;
use unireg::linalg::SymmetricMatrix;
use unireg::regression::RegressionPair;

fn suite_holds(p: usize, k: usize, seed: u64, regime: Regime) -> TheoremSuite {
    let (p1, p2) = random_test_pairs(p, k, seed, regime).unwrap();
    let s = TheoremSuite::run(k, &p1, &p2).unwrap();
    for r in &s.reports {
        assert!(r.all_hold(), "{:?} violated for p={p} k={k} seed={seed}: {:?}", r.theorem, r.worst_slack());
    }
    assert!(s.identity_max_err < 1e-9, "identity error {}", s.identity_max_err);
    s
}

#[test]
fn suite_holds_on_random_pairs() {
    for seed in 0..8 {
        for (p, k) in [(4, 1), (8, 2), (12, 3)] {
            let s = suite_holds(p, k, seed, Regime::Half);
            // Everything applies in the half regime.
            for r in &s.reports[..6] {
                assert_eq!(r.checked(), r.records.len());
            }
            suite_holds(p, k, seed, Regime::Full);
        }
    }
}

#[test]
fn lower_bound_is_informative_for_definite_perturbations() {
    let (p1, p2) = random_test_pairs(6, 2, 3, Regime::Definite).unwrap();
    let r = check_lower(2, &p1, &p2).unwrap();
    assert_eq!(r.checked(), r.records.len());
    assert!(r.all_hold());
    let (p1, p2) = random_test_pairs(6, 2, 3, Regime::Half).unwrap();
    let r = check_lower(2, &p1, &p2).unwrap();
    assert!(r.records.iter().all(|x| x.outcome == Outcome::Vacuous));
}

#[test]
fn identical_pairs_give_zero_differences() {
    let (_, p2) = random_test_pairs(5, 2, 1, Regime::Half).unwrap();
    let s = TheoremSuite::run(2, &p2, &p2).unwrap();
    for r in &s.reports[..4] {
        for rec in &r.records {
            assert_eq!(rec.outcome, Outcome::Holds);
            assert!(rec.lhs.abs() < 1e-12);
        }
    }
}

#[test]
fn precondition_violation_is_not_applicable() {
    let sigma2 = SymmetricMatrix::identity(3);
    let sigma1 = SymmetricMatrix::diagonal(&[3.0, 1.0, 1.0]);
    let p1 = RegressionPair::new(sigma1, vec![1.0, 0.0, 0.0]).unwrap();
    let p2 = RegressionPair::new(sigma2, vec![0.5, 0.0, 0.0]).unwrap();
    let r = check_l2(1, &p1, &p2).unwrap();
    assert_eq!(r.precondition.unwrap().status, PreconditionStatus::Violated);
    assert!(r.records.iter().all(|x| x.outcome == Outcome::NotApplicable));
}

#[test]
fn boundary_precondition_is_vacuous() {
    // RIP(1, Σ1 − Σ2) = 1 = Λ(1; I).
    let p1 = RegressionPair::new(SymmetricMatrix::diagonal(&[2.0, 1.0]), vec![1.0, 1.0]).unwrap();
    let p2 = RegressionPair::new(SymmetricMatrix::identity(2), vec![1.0, 1.0]).unwrap();
    let r = check_l2(1, &p1, &p2).unwrap();
    assert_eq!(r.precondition.unwrap().status, PreconditionStatus::Boundary);
    assert!(r.records.iter().all(|x| x.outcome == Outcome::Vacuous));
}

#[test]
fn sandwich_applies_at_equality() {
    // RIP(1, Σ1 − Σ2) = 0.5 = Λ/2.
    let p1 = RegressionPair::new(SymmetricMatrix::diagonal(&[1.5, 1.0]), vec![1.0, -1.0]).unwrap();
    let p2 = RegressionPair::new(SymmetricMatrix::identity(2), vec![0.3, 0.2]).unwrap();
    let s = check_sandwich(1, &p1, &p2).unwrap();
    assert_eq!(s.lower.checked(), 2);
    assert!(s.lower.all_hold() && s.upper.all_hold());
}

#[test]
fn csv_has_one_row_per_model_and_theorem() {
    let (p1, p2) = random_test_pairs(4, 2, 0, Regime::Half).unwrap();
    let s = TheoremSuite::run(2, &p1, &p2).unwrap();
    let mut buf = Vec::new();
    write_csv(&s.reports, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theorem,model,lhs,rhs,holds,slack"));
    assert_eq!(lines.count(), 7 * 10);
}

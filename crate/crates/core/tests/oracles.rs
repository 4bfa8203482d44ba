//! Independent oracles for the enumeration-based functionals.

mod common;

use common::{extremes_bisect, quadratic_minimizer, random_sym, sub_rows};
use unireg::bounds::{random_test_pairs, Regime};
use unireg::models::ModelClass;
use unireg::norms::{dvec, lambda_sparse, lambda_sparse_max, rip};
use unireg::regression::beta_map;
use unireg::rng::SimRng;

#[test]
fn rip_and_sparse_eigenvalues_match_brute_force() {
    let mut rng = SimRng::new(11, &[]);
    for p in [3, 5, 8, 10] {
        for k in 1..=3.min(p) {
            let a = random_sym(p, &mut rng);
            let class = ModelClass::up_to(p, k).unwrap();
            let (mut op, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
            for m in class.iter() {
                let (l, h) = extremes_bisect(&sub_rows(&a, &m));
                op = op.max(l.abs()).max(h.abs());
                lo = lo.min(l);
                hi = hi.max(h);
            }
            assert!((rip(k, &a).unwrap().value - op).abs() < 1e-9, "rip p={p} k={k}");
            assert!((lambda_sparse(k, &a).unwrap().value - lo).abs() < 1e-9, "lambda p={p} k={k}");
            assert!((lambda_sparse_max(k, &a).unwrap().value - hi).abs() < 1e-9);
        }
    }
}

#[test]
fn dvec_matches_enumeration() {
    let mut rng = SimRng::new(12, &[]);
    for p in [1, 4, 7, 10] {
        let v: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        for k in 1..=p.min(4) {
            let brute = ModelClass::up_to(p, k)
                .unwrap()
                .iter()
                .map(|m| m.gather(&v).iter().map(|x| x * x).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            let e = dvec(k, &v).unwrap();
            assert!((e.value - brute).abs() < 1e-12);
            let at_model = e.model.gather(&v).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((at_model - e.value).abs() < 1e-12);
        }
    }
}

#[test]
fn beta_map_matches_quadratic_minimizer() {
    for seed in 0..10 {
        let (pair, _) = random_test_pairs(10, 3, seed, Regime::Half).unwrap();
        for m in ModelClass::up_to(10, 3).unwrap().iter().step_by(7) {
            let b = beta_map(&pair, &m).unwrap();
            let o = quadratic_minimizer(&sub_rows(&pair.sigma, &m), &m.gather(&pair.gamma));
            for (x, y) in b.iter().zip(&o) {
                assert!((x - y).abs() <= 1e-6 * (1.0 + y.abs()), "{m}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn strength_bounds_dominate() {
    use unireg::norms::{strength, strength_upper_bound, Norm};
    use unireg::regression::RegressionPair;
    // A genuine second-moment pair: Γ = E[XY], E[Y²] ≥ Γᵀ Σ^{-1} Γ.
    let spec = unireg::datagen::IndepSpec::gaussian_toeplitz(6, 0.4);
    let pop = unireg::datagen::population_independent(&spec).unwrap();
    let pair: &RegressionPair = &pop.pair;
    for k in 1..=3 {
        let (b2, b1) = strength_upper_bound(k, &pair.sigma, pop.mean_y2).unwrap();
        assert!(strength(Norm::L2, k, pair).unwrap().value <= b2);
        assert!(strength(Norm::L1, k, pair).unwrap().value <= b1);
    }
}

use unireg::datagen::{CausalSpec, GeneratorSpec, IndepSpec};
use unireg::experiments::*;
use unireg::par::with_threads;

fn small_rates() -> RateConfig {
    RateConfig {
        n_grid: vec![200, 400, 800],
        k: 2,
        reps: 20,
        generator: GeneratorSpec::Independent(IndepSpec::gaussian_toeplitz(5, 0.3)),
        seed: 3,
    }
}

#[test]
fn appendix_constants() {
    let rep = appendix_numerics();
    assert!(rep.all_hold());
    assert_eq!(shift(2.0), 1.0);
    assert_eq!(trunc1(0.5), 0.5);
    for e in 6..=14 {
        assert_eq!(rep.constant("Omega", 1.0, Some(1 << e)), Some(80.0));
    }
    assert!((b_nu(1.0) - 587.109).abs() < 1e-3);
    assert_eq!(rep.sums.len(), 9 * 4 * 3 * 2);
    // log₂ n = 7 is odd: the middle term is not doubled, and the shortcut fails.
    let odd = rep.sums.iter().find(|s| s.part == 'a' && s.n == 128 && s.beta == 0.25 && s.power == 2).unwrap();
    assert!(odd.half_sum.unwrap() < odd.sum);

    let mut out = Vec::new();
    rep.write_constants_csv(&mut out).unwrap();
    assert!(String::from_utf8(out).unwrap().starts_with("name,arg,n,value\n"));
}

#[test]
fn rate_rows_are_reproducible() {
    let cfg = small_rates();
    let a = rate_sweep(&cfg).unwrap();
    let b = with_threads(1, || rate_sweep(&cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 60);
    for r in &a.rows {
        assert!(r.sup_l1_err >= r.sup_l2_err);
        assert!(r.lambda_k > 0.0 && r.rip >= 0.0 && r.d >= 0.0);
    }
    assert!(a.l2.slope < 0.0 && a.rep.slope < a.l2.slope);

    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("n,p,k,rep,sup_l2_err,sup_l1_err,sup_rep_err,rip,d,lambda_k,s2k,seed\n"));
    let svg = a.svg();
    assert!(svg.contains("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 3);
}

#[test]
fn rate_config_round_trips_and_validates() {
    let cfg = RateConfig::causal_default();
    let json = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<RateConfig>(&json).unwrap(), cfg);
    let mut bad = small_rates();
    bad.n_grid = vec![100];
    assert!(rate_sweep(&bad).is_err());
    bad = small_rates();
    bad.k = 9;
    assert!(rate_sweep(&bad).is_err());
}

#[test]
fn loglog_fit_rejects_bad_input() {
    assert!(fit_loglog(&[1.0], &[1.0]).is_err());
    assert!(fit_loglog(&[1.0, 2.0], &[1.0, 0.0]).is_err());
    assert!(fit_loglog(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    assert!(fit_loglog(&[1.0, 2.0], &[1.0, 2.0]).unwrap().stderr.is_infinite());
}

#[test]
fn tail_checks_hold_on_small_runs() {
    let mut cfgs = vec![
        TailConfig::independent_max_default(),
        TailConfig::independent_sparse_default(),
        TailConfig::dependent_max_default(),
        TailConfig::dependent_sparse_default(),
    ];
    for c in &mut cfgs {
        c.reps = 200;
        c.n = 200;
        c.dep_reps = 2000;
    }
    for c in &cfgs {
        let rep = tail_check(c).unwrap();
        assert!(rep.all_hold(), "{:?}", c.theorem);
        assert_eq!(rep.rows.len(), 3);
        for w in rep.rows.windows(2) {
            assert!(w[1].bound > w[0].bound && w[1].cap < w[0].cap);
        }
        let mut out = Vec::new();
        rep.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 4);
    }
}

#[test]
fn tail_check_rejects_mismatched_generators() {
    let mut c = TailConfig::independent_max_default();
    c.generator = GeneratorSpec::Causal(CausalSpec::geometric(3, 0.5));
    assert!(tail_check(&c).is_err());
    let mut c = TailConfig::dependent_max_default();
    c.generator = GeneratorSpec::Independent(IndepSpec::standard_gaussian(3));
    assert!(tail_check(&c).is_err());
    // Quadratic response: no closed-form variance proxy.
    let mut c = TailConfig::independent_sparse_default();
    c.generator = GeneratorSpec::Independent(IndepSpec::gaussian_toeplitz(4, 0.3));
    assert!(tail_check(&c).is_err());
}

#[test]
fn certified_proxies_match_isserlis_by_hand() {
    // Identity covariance, Y = X₀ + noise(1): Var Y = 2, Cov(X₀, Y) = 1.
    let mut spec = IndepSpec::standard_gaussian(3);
    if let unireg::datagen::Link::Linear { b } = &mut spec.link {
        b[0] = 1.0;
    }
    spec.noise = unireg::datagen::NoiseLaw::Gaussian { sd: 1.0 };
    let (ug, us) = certified_upsilon(&spec, 2).unwrap();
    // max_{a,l} Σ_al Var Y + Cov(X_a,Y)Cov(X_l,Y) = 2 + 1 at a = l = 0.
    assert!((ug - 2.0 * 3.0).abs() < 1e-12);
    // max Σ_ac Σ_bd + Σ_ad Σ_bc = 2 at a = b = c = d.
    assert!((us - 4.0 * 2.0).abs() < 1e-12);
}

#[test]
fn analytic_norm_of_independent_coordinates_is_their_scale() {
    let mut spec = CausalSpec::geometric(2, 0.5);
    spec.horizon = unireg::datagen::Horizon::Fixed { s: 0 };
    let z = analytic_covariate_norm(&spec, 1.0).unwrap();
    // With no memory Δ_0 = ‖X − X′‖₂ = √2 ‖A_j‖ |a_0|.
    let best = spec.mixing.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    assert!((z - 2f64.sqrt() * best * spec.coefficients.coefficient(0)).abs() < 1e-12);
}

#[test]
fn exact_sparse_proxies_sit_below_certified_ones() {
    let cfg = TailConfig::independent_sparse_default();
    let GeneratorSpec::Independent(spec) = &cfg.generator else { unreachable!() };
    let (ug, us) = certified_upsilon(spec, cfg.k).unwrap();
    let [eg, es] = exact_upsilon(spec, cfg.k).unwrap().unwrap();
    assert!(eg > 0.0 && eg <= ug * (1.0 + 1e-12));
    assert!(es > 0.0 && es <= us * (1.0 + 1e-12));
    // Standard normal, no response: Var((θᵀX)²) = 2 on the unit sphere.
    let [g0, s0] = exact_upsilon(&IndepSpec::standard_gaussian(4), 2).unwrap().unwrap();
    assert_eq!(g0, 0.0);
    assert!((s0 - 2.0).abs() < 1e-12);
}

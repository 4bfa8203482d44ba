use unireg::datagen::*;
use unireg::linalg::ModelIndex;
use unireg::regression::{beta_map, empirical_pair};

fn assert_close_mc(pop: &Population, mc: &Population, z: f64) {
    let Provenance::MonteCarlo { se_sigma, se_gamma, se_mean_y2, .. } = mc.provenance else {
        panic!("expected a simulated population");
    };
    let q = pop.pair.p();
    for a in 0..q {
        for b in 0..=a {
            let (e, s) = (pop.pair.sigma.get(a, b), mc.pair.sigma.get(a, b));
            assert!((e - s).abs() <= z * se_sigma + 1e-12, "sigma[{a},{b}]: exact {e} vs mc {s} (se {se_sigma})");
        }
        let (e, s) = (pop.pair.gamma[a], mc.pair.gamma[a]);
        assert!((e - s).abs() <= z * se_gamma + 1e-12, "gamma[{a}]: exact {e} vs mc {s} (se {se_gamma})");
    }
    assert!(
        (pop.mean_y2 - mc.mean_y2).abs() <= z * se_mean_y2,
        "E[Y^2]: exact {} vs mc {} (se {se_mean_y2})",
        pop.mean_y2,
        mc.mean_y2
    );
}

#[test]
fn gaussian_closed_form_matches_simulation() {
    let spec = IndepSpec::gaussian_toeplitz(4, 0.3);
    let exact = spec.population(1).unwrap();
    let mc = monte_carlo_population(&spec, 10_000, 400_000, 7).unwrap();
    assert_close_mc(&exact, &mc, 5.0);
}

#[test]
fn sub_weibull_with_intercept_matches_simulation() {
    let spec = IndepSpec {
        p: 3,
        design: DesignLaw::SubWeibull { alpha: 1.0, scale: 0.7 },
        link: Link::LinearQuadratic { b: vec![0.5, 1.0, -1.0, 0.0], c: 0.3, j: 2 },
        noise: NoiseLaw::Gaussian { sd: 0.5 },
        intercept: true,
    };
    let exact = spec.population(1).unwrap();
    let mc = monte_carlo_population(&spec, 10_000, 400_000, 8).unwrap();
    assert_close_mc(&exact, &mc, 5.0);
}

#[test]
fn causal_closed_form_matches_simulation() {
    for innovation in [Innovation::Gaussian, Innovation::Rademacher, Innovation::SubWeibull { alpha: 1.5 }] {
        let mut spec = CausalSpec::geometric(3, 0.5);
        spec.innovation = innovation;
        spec.mean = Some(vec![0.5, 0.0, -0.2]);
        let exact = spec.population(2000).unwrap();
        let mc = monte_carlo_population(&spec, 2000, 400_000, 9).unwrap();
        assert_close_mc(&exact, &mc, 5.0);
    }
}

#[test]
fn two_regimes_average_by_share() {
    let mut spec = CausalSpec::geometric(2, 0.3);
    let mut other = banded_mixing(2);
    other[0][0] = 2.0;
    spec.regime = Some(RegimeSwitch { mixing: other, fraction: 0.25 });
    let exact = spec.population(1000).unwrap();
    let mc = monte_carlo_population(&spec, 1000, 400_000, 10).unwrap();
    assert_close_mc(&exact, &mc, 5.0);
}

#[test]
fn noiseless_linear_recovers_coefficients() {
    let spec = IndepSpec {
        p: 3,
        design: DesignLaw::Gaussian { sigma: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]] },
        link: Link::Linear { b: vec![1.5, -2.0, 0.25] },
        noise: NoiseLaw::None,
        intercept: false,
    };
    let d = gen_independent(&spec, 50, 3).unwrap();
    let beta = beta_map(&empirical_pair(&d), &ModelIndex::new(vec![0, 1, 2]).unwrap()).unwrap();
    for (b, t) in beta.iter().zip([1.5, -2.0, 0.25]) {
        assert!((b - t).abs() < 1e-10);
    }
}

#[test]
fn generation_is_reproducible_and_thread_independent() {
    let spec = CausalSpec::geometric(3, 0.5);
    let a = spec.generate(200, 42).unwrap();
    let b = unireg::par::with_threads(1, || spec.generate(200, 42).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, spec.generate(200, 43).unwrap());
}

#[test]
fn zero_horizon_gives_independent_rows() {
    let mut spec = CausalSpec::geometric(2, 0.5);
    spec.horizon = Horizon::Fixed { s: 0 };
    let (d, tape) = gen_causal(&spec, 10, 1).unwrap();
    // Row i depends only on its own innovation.
    let coupled = replay(&spec, &tape.coupled(&spec, 3)).unwrap();
    for i in 0..10 {
        let same = d.row(i) == coupled.row(i);
        assert_eq!(same, i != 3, "row {i}");
    }
}

#[test]
fn replay_matches_generation() {
    let spec = CausalSpec::geometric(3, 0.7);
    let (d, tape) = gen_causal(&spec, 100, 5).unwrap();
    assert_eq!(replay(&spec, &tape).unwrap(), d);
}

#[test]
fn spec_round_trips_through_json() {
    let g = GeneratorSpec::Causal(CausalSpec::geometric(2, 0.5));
    let s = serde_json::to_string(&g).unwrap();
    assert_eq!(serde_json::from_str::<GeneratorSpec>(&s).unwrap(), g);
}

#[test]
fn invalid_specs_are_rejected() {
    let mut spec = CausalSpec::geometric(2, 1.0);
    assert!(spec.validate().is_err());
    spec = CausalSpec::geometric(2, 0.5);
    spec.mixing.pop();
    assert!(spec.generate(5, 0).is_err());
}

use unireg::bounds::Outcome;
use unireg::linalg::ModelIndex;
use unireg::mest::*;
use unireg::models::ModelClass;
use unireg::regression::{beta_map, empirical_pair, Dataset};
use unireg::rng::SimRng;

fn m(v: &[usize]) -> ModelIndex {
    ModelIndex::new(v.to_vec()).unwrap()
}

fn gaussian_data(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = SimRng::new(seed, &[]);
    let x: Vec<f64> = (0..n * p).map(|_| rng.normal()).collect();
    let y: Vec<f64> = (0..n).map(|i| x[i * p] - 0.5 * x[i * p + 1] + rng.normal()).collect();
    Dataset::new(n, p, x, y).unwrap()
}

#[test]
fn squared_loss_reproduces_least_squares() {
    let d = gaussian_data(300, 4, 1);
    let spec = LossSpec::new(Loss::Squared);
    let pair = empirical_pair(&d);
    for model in ModelClass::up_to(4, 3).unwrap().iter() {
        let a = fit_mest(&d, &spec, &model).unwrap();
        let b = beta_map(&pair, &model).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8);
        }
        let j = jhat(&d, &spec, &model, &a).unwrap();
        let s = pair.sigma.submatrix(&model).unwrap().scale(2.0);
        assert!(j.sub(&s).unwrap().max_abs() < 1e-12);
        // Quadratic loss: the Newton step norm equals the estimation error.
        let target = vec![0.1; model.len()];
        let delta = delta_nm(&d, &spec, &model, &target).unwrap();
        let err: f64 = a.iter().zip(&target).map(|(x, t)| (x - t).powi(2)).sum::<f64>().sqrt();
        assert!((delta - err).abs() < 1e-9);
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let mut rng = SimRng::new(2, &[]);
    let h = 1e-5;
    for loss in [Loss::Squared, Loss::Logistic, Loss::Poisson] {
        for _ in 0..50 {
            let y = match loss {
                Loss::Logistic => rng.uniform().round(),
                Loss::Poisson => (3.0 * rng.uniform()).floor(),
                Loss::Squared => rng.normal(),
            };
            let u = 2.0 * rng.normal();
            let fd1 = (loss.value(y, u + h) - loss.value(y, u - h)) / (2.0 * h);
            let fd2 = (loss.d1(y, u + h) - loss.d1(y, u - h)) / (2.0 * h);
            assert!((fd1 - loss.d1(y, u)).abs() <= 1e-6 * (1.0 + loss.d1(y, u).abs()), "{loss:?} d1");
            assert!((fd2 - loss.d2(y, u)).abs() <= 1e-6 * (1.0 + loss.d2(y, u).abs()), "{loss:?} d2");
            assert!(loss.d2(y, u) >= 0.0);
        }
    }
    // Score and curvature against differences of the objective.
    let design = LogisticDesign::default_for(3);
    let d = design.sample(200, 3).unwrap();
    for loss in [Loss::Squared, Loss::Logistic, Loss::Poisson] {
        let spec = LossSpec::new(loss);
        let model = m(&[0, 2]);
        let theta = [0.3, -0.2];
        let z = zhat(&d, &spec, &model, &theta).unwrap();
        let j = jhat(&d, &spec, &model, &theta).unwrap();
        for a in 0..2 {
            let mut tp = theta;
            let mut tm = theta;
            tp[a] += h;
            tm[a] -= h;
            let fd = (objective(&d, &spec, &model, &tp).unwrap() - objective(&d, &spec, &model, &tm).unwrap()) / (2.0 * h);
            assert!((fd - z[a]).abs() <= 1e-6 * (1.0 + z[a].abs()));
            let zp = zhat(&d, &spec, &model, &tp).unwrap();
            let zm = zhat(&d, &spec, &model, &tm).unwrap();
            for b in 0..2 {
                let fd = (zp[b] - zm[b]) / (2.0 * h);
                assert!((fd - j.get(a, b)).abs() <= 1e-6 * (1.0 + j.get(a, b).abs()));
            }
        }
    }
}

#[test]
fn balanced_labels_give_zero_intercept() {
    let rows = vec![vec![1.0]; 10];
    let y = (0..10).map(|i| f64::from(i % 2)).collect();
    let d = Dataset::from_rows(&rows, y).unwrap();
    let b = fit_mest(&d, &LossSpec::new(Loss::Logistic), &m(&[0])).unwrap();
    assert!(b[0].abs() < 1e-12);
}

#[test]
fn separated_data_does_not_converge() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 - 4.5]).collect();
    let y = (0..10).map(|i| f64::from(u8::from(i >= 5))).collect();
    let d = Dataset::from_rows(&rows, y).unwrap();
    let r = fit_mest(&d, &LossSpec::new(Loss::Logistic), &m(&[0]));
    assert!(matches!(r, Err(unireg::Error::NonConvergence { .. }) | Err(unireg::Error::SingularModel { .. })));
}

#[test]
fn poisson_fit_is_consistent() {
    let n = 2000;
    let mut rng = SimRng::new(4, &[]);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let x = 2.0 * rng.uniform() - 1.0;
        let rate: f64 = (0.5 + 0.3 * x).exp();
        // Poisson draw by inversion.
        let (mut k, mut p, mut cdf, u) = (0.0, (-rate).exp(), (-rate).exp(), rng.uniform());
        while u > cdf {
            k += 1.0;
            p *= rate / k;
            cdf += p;
        }
        rows.push(vec![1.0, x]);
        y.push(k);
    }
    let d = Dataset::from_rows(&rows, y).unwrap();
    let spec = LossSpec::new(Loss::Poisson);
    let model = m(&[0, 1]);
    let b = fit_mest(&d, &spec, &model).unwrap();
    // Correct specification: Cov(β̂) ≈ Ĵ^{-1} / n.
    let j = jhat(&d, &spec, &model, &b).unwrap();
    let chol = unireg::linalg::Cholesky::factor(&j).unwrap();
    for (a, truth) in [0.5, 0.3].into_iter().enumerate() {
        let mut e = vec![0.0; 2];
        e[a] = 1.0;
        let se = (chol.solve(&e)[a] / n as f64).sqrt();
        assert!((b[a] - truth).abs() <= 3.0 * se, "coef {a}: {} vs {truth} (se {se})", b[a]);
    }
    assert!(zhat(&d, &spec, &model, &b).unwrap().iter().all(|g| g.abs() < 1e-8));
}

#[test]
fn oracle_target_gives_zero_delta() {
    let spec = LossSpec::new(Loss::Logistic);
    let design = LogisticDesign::default_for(3);
    let d2 = design.sample(500, 6).unwrap();
    let model = m(&[0, 1]);
    let b = fit_mest(&d2, &spec, &model).unwrap();
    assert!(delta_nm(&d2, &spec, &model, &b).unwrap() < 1e-9);
}

#[test]
fn logistic_theorem_holds_on_bounded_design() {
    let design = LogisticDesign::default_for(6);
    let spec = LossSpec::new(Loss::Logistic);
    let d = design.sample(5000, 7).unwrap();
    let class = ModelClass::up_to(6, 2).unwrap();
    let rep = check_mest_bounds(&d, &spec, &class, design.targets(&spec).unwrap()).unwrap();
    assert!(rep.event_all());
    assert_eq!(rep.violations(), 0);
    assert_eq!(rep.checked(), 21);
}

#[test]
fn tiny_samples_are_not_applicable() {
    let design = LogisticDesign::default_for(6);
    let spec = LossSpec::new(Loss::Logistic);
    let d = design.sample(20, 8).unwrap();
    let class = ModelClass::up_to(6, 2).unwrap();
    let rep = check_mest_bounds(&d, &spec, &class, design.targets(&spec).unwrap()).unwrap();
    assert!(!rep.event_all());
    for r in rep.records.iter().filter(|r| !r.event) {
        assert_eq!(r.rep, Outcome::NotApplicable);
    }
    assert_eq!(rep.violations(), 0);
}

#[test]
fn simulated_targets_report_precision() {
    let design = LogisticDesign::default_for(4);
    let spec = LossSpec::new(Loss::Logistic);
    let big = design.sample(200_000, 9).unwrap();
    let model = m(&[0, 1]);
    let sim = sample_target(&big, &spec, &model).unwrap();
    let (support, probs) = design.support().unwrap();
    let exact = population_target(&support, &probs, &spec, &model).unwrap();
    let se = sim.stderr.unwrap();
    let err: f64 = sim.beta.iter().zip(&exact.beta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err <= 4.0 * se, "simulated target off by {err} (se {se})");
}

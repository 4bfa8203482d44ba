use unireg::linalg::SymmetricMatrix;
use unireg::net::*;
use unireg::norms::{dvec, rip};
use unireg::rng::SimRng;

#[test]
fn planar_nets_are_certified_within_the_bound() {
    for (eps, cap) in [(0.5, 9), (0.25, 25)] {
        let n = ball_net(2, eps, 0).unwrap();
        assert_eq!(n.method, NetMethod::Certified);
        assert!(n.points.len() <= cap);
        assert!(n.radius <= eps, "radius {} for eps {eps}", n.radius);
        let pts: Vec<[f64; 2]> = n.points.iter().map(|p| [p[0], p[1]]).collect();
        assert!((planar_radius(&pts) - n.radius).abs() < 1e-12);
        assert!(pts.iter().all(|p| p[0].hypot(p[1]) <= 1.0 + 1e-12));
    }
}

#[test]
fn sparse_nets_cover_and_respect_cardinality() {
    for (p, k, eps) in [(4, 1, 0.5), (2, 2, 0.25), (8, 2, 0.5), (8, 2, 0.25), (6, 3, 0.5)] {
        let net = build_net(p, k, eps, 1).unwrap();
        net.check_cardinality().unwrap();
        assert!((net.len() as f64) <= net.cardinality_bound());
        assert_eq!(net.points().count() as u128, net.len());
        let cov = validate_covering(&net, 10_000, 2).unwrap();
        assert_eq!(cov.failures, 0, "p={p} k={k} eps={eps}: max distance {}", cov.max_distance);
    }
}

#[test]
fn discretization_inequalities_hold() {
    let half = build_net(8, 2, 0.5, 0).unwrap();
    let quarter = build_net(8, 2, 0.25, 0).unwrap();
    let mut rng = SimRng::new(5, &[]);
    for _ in 0..100 {
        let v: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let d = dvec(2, &v).unwrap().value;
        let net_d = net_sup_gamma(&half, &v).unwrap();
        assert!(net_d <= d * (1.0 + 1e-12) && d <= 2.0 * net_d * (1.0 + 1e-12));

        let mut delta = SymmetricMatrix::zeros(8);
        for i in 0..8 {
            for j in 0..=i {
                delta.set(i, j, rng.normal());
            }
        }
        let r = rip(2, &delta).unwrap().value;
        let net_r = net_sup_sigma(&quarter, &delta).unwrap();
        assert!(net_r <= r * (1.0 + 1e-12) && r <= 2.0 * net_r * (1.0 + 1e-12));
    }
}

#[test]
fn unattainable_cardinality_is_an_error() {
    // 125 points do not cover the 3-ball at radius 1/4 with this construction.
    let err = ball_net(3, 0.25, 0).unwrap_err();
    assert!(matches!(err, unireg::Error::Domain(_)));
}

#[test]
fn wrong_radius_is_rejected() {
    let net = build_net(4, 1, 0.25, 0).unwrap();
    assert!(net_sup_gamma(&net, &[1.0; 4]).is_err());
    assert!(ball_net(2, 1.5, 0).is_err());
}

#[test]
fn csv_lists_every_point() {
    let net = build_net(3, 2, 0.5, 0).unwrap();
    let mut buf = Vec::new();
    net.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count() as u128, net.len() + 1);
    assert!(text.starts_with("support,theta0,theta1,theta2\n"));
}

#[test]
fn library_discretization_check_passes() {
    let rows = check_discretization(6, 2, 50, 3).unwrap();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| r.holds));
}

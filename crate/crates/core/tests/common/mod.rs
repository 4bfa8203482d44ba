//! Oracles shared by the integration tests and the acceptance harness. They
//! use no code from the library beyond its matrix container.
#![allow(dead_code)]

use unireg::linalg::{ModelIndex, SymmetricMatrix};
use unireg::rng::SimRng;

/// Number of eigenvalues below `x`, by Sylvester's law of inertia on the
/// LDLᵀ pivots of `A − xI`.
pub fn count_below(a: &[Vec<f64>], x: f64) -> usize {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= x;
    }
    let mut neg = 0;
    for k in 0..n {
        let mut piv = m[k][k];
        if piv == 0.0 {
            piv = -1e-300;
        }
        if piv < 0.0 {
            neg += 1;
        }
        for i in k + 1..n {
            let f = m[i][k] / piv;
            for j in k + 1..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    neg
}

/// Extreme eigenvalues by bisection, independent of the Jacobi solver.
pub fn extremes_bisect(a: &[Vec<f64>]) -> (f64, f64) {
    let n = a.len();
    let r: f64 = a.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let bisect = |target: usize| {
        // Smallest x with count_below(x) >= target.
        let (mut lo, mut hi) = (-r, r);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(a, mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    (bisect(1), bisect(n))
}

pub fn sub_rows(a: &SymmetricMatrix, m: &ModelIndex) -> Vec<Vec<f64>> {
    a.submatrix(m).unwrap().to_rows()
}

pub fn random_sym(p: usize, rng: &mut SimRng) -> SymmetricMatrix {
    let mut e = SymmetricMatrix::zeros(p);
    for i in 0..p {
        for j in 0..=i {
            e.set(i, j, rng.normal());
        }
    }
    e
}

/// Minimizes `θᵀΣθ − 2Γᵀθ` by cyclic coordinate descent.
pub fn quadratic_minimizer(s: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut th = vec![0.0; n];
    for _ in 0..20_000 {
        let mut moved = 0.0f64;
        for j in 0..n {
            let r: f64 = g[j] - (0..n).filter(|&l| l != j).map(|l| s[j][l] * th[l]).sum::<f64>();
            let new = r / s[j][j];
            moved = moved.max((new - th[j]).abs());
            th[j] = new;
        }
        if moved < 1e-14 {
            break;
        }
    }
    th
}

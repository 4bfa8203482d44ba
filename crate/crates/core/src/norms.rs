//! Uniform-in-model error functionals: RIP, D, the sparse minimum eigenvalue,
//! regression strength, and their cheap elementwise bounds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    congruence, eig_extremes, inv_sqrt_spd, norm1, norm2, op_norm, ModelIndex, SymmetricMatrix,
};
use crate::models::ModelClass;
use crate::regression::{beta_map, RegressionPair};

/// A supremum or infimum over models together with the first model attaining it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub model: ModelIndex,
}

fn check_k(k: usize, dim: usize) -> Result<()> {
    if k == 0 || k > dim {
        return Err(Error::input(format!("sparsity k = {k} must lie in 1..={dim}")));
    }
    Ok(())
}

/// `RIP(k, Δ) = sup_{|M| ≤ k} ‖Δ(M)‖_op`, evaluated over `|M| = k`
/// (by interlacing the sup is attained there).
pub fn rip(k: usize, delta: &SymmetricMatrix) -> Result<Extremum> {
    check_k(k, delta.dim())?;
    sparse_extreme(k, delta, |m| op_norm(m))
}

/// `Λ(k; A) = min_{|M| = k} λ_min(A(M))`.
pub fn lambda_sparse(k: usize, a: &SymmetricMatrix) -> Result<Extremum> {
    check_k(k, a.dim())?;
    let neg = sparse_extreme(k, a, |m| eig_extremes(m).map(|(lo, _)| -lo))?;
    Ok(Extremum { value: -neg.value, model: neg.model })
}

/// Largest eigenvalue over `k`-sparse supports.
pub fn lambda_sparse_max(k: usize, a: &SymmetricMatrix) -> Result<Extremum> {
    check_k(k, a.dim())?;
    sparse_extreme(k, a, |m| eig_extremes(m).map(|(_, hi)| hi))
}

fn sparse_extreme<F>(k: usize, a: &SymmetricMatrix, f: F) -> Result<Extremum>
where
    F: Fn(&SymmetricMatrix) -> Result<f64> + Sync + Send,
{
    let class = ModelClass::exactly(a.dim(), k)?;
    let results = class.par_map(|m| {
        let sub = a.submatrix(m).expect("model within dimension");
        f(&sub)
    })?;
    let mut best: Option<(f64, usize)> = None;
    for (r, v) in results.iter().enumerate() {
        let v = v.clone()?;
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, r));
        }
    }
    let (value, rank) = best.expect("class is nonempty");
    Ok(Extremum { value, model: class.unrank(rank as u128).expect("rank in range") })
}

/// `D(k, v) = sup_{|M| ≤ k} ‖v(M)‖_2`, closed form: the `k` largest
/// magnitudes (ties to the lower index).
pub fn dvec(k: usize, v: &[f64]) -> Result<Extremum> {
    check_k(k, v.len())?;
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    let mut top: Vec<usize> = order[..k].to_vec();
    let value = norm2(&top.iter().map(|&j| v[j]).collect::<Vec<_>>());
    top.sort_unstable();
    Ok(Extremum { value, model: ModelIndex::from_sorted(top) })
}

/// Strength `S_{r,k} = sup_{|M| ≤ k} ‖β_M(Σ, Γ)‖_r`, over every size (the
/// norms are not monotone in `M`). Singular models are skipped and counted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Strength {
    pub value: f64,
    pub model: Option<ModelIndex>,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Norm {
    L1,
    L2,
}

pub fn strength(r: Norm, k: usize, pair: &RegressionPair) -> Result<Strength> {
    check_k(k, pair.p())?;
    let class = ModelClass::up_to(pair.p(), k)?;
    let vals = class.par_map(|m| {
        beta_map(pair, m).ok().map(|b| match r {
            Norm::L1 => norm1(&b),
            Norm::L2 => norm2(&b),
        })
    })?;
    let skipped = vals.iter().filter(|v| v.is_none()).count();
    let mut best: Option<(f64, usize)> = None;
    for (rank, v) in vals.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, rank));
            }
        }
    }
    Ok(match best {
        Some((value, rank)) => Strength { value, model: class.unrank(rank as u128), skipped },
        None => Strength { value: 0.0, model: None, skipped },
    })
}

/// `(k · |||Δ|||_∞, √k · ‖δγ‖_∞)`; upper bounds on RIP and D.
pub fn elementwise_bounds(k: usize, delta: &SymmetricMatrix, dgamma: &[f64]) -> (f64, f64) {
    let kf = k as f64;
    (kf * delta.max_abs(), kf.sqrt() * crate::linalg::norm_inf(dgamma))
}

/// Bounds on the strength from the response second moment:
/// `S_{2,k} ≤ sqrt(E Y² / Λ(k))`, `S_{1,k} ≤ sqrt(k · E Y² / Λ(k))`.
pub fn strength_upper_bound(k: usize, sigma: &SymmetricMatrix, mean_y2: f64) -> Result<(f64, f64)> {
    let lam = lambda_sparse(k, sigma)?.value;
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("sparse minimum eigenvalue {lam:.3e} is not positive")));
    }
    if mean_y2 < 0.0 {
        return Err(Error::Domain("E[Y^2] must be nonnegative".into()));
    }
    let s2 = (mean_y2 / lam).sqrt();
    Ok((s2, (k as f64).sqrt() * s2))
}

/// `sup_{|M| ≤ k} ‖Σ_2(M)^{-1/2} Σ_1(M) Σ_2(M)^{-1/2} − I‖_op` over every size.
pub fn relative_rip(k: usize, sigma1: &SymmetricMatrix, sigma2: &SymmetricMatrix) -> Result<Extremum> {
    if sigma1.dim() != sigma2.dim() {
        return Err(Error::DimensionMismatch { expected: sigma1.dim(), got: sigma2.dim() });
    }
    check_k(k, sigma1.dim())?;
    let class = ModelClass::up_to(sigma1.dim(), k)?;
    let vals = class.par_map(|m| -> Result<f64> {
        let w = inv_sqrt_spd(&sigma2.submatrix(m)?)?;
        let t = congruence(&w, &sigma1.submatrix(m)?);
        op_norm(&t.sub(&SymmetricMatrix::identity(m.len()))?)
    })?;
    let mut best: Option<(f64, usize)> = None;
    for (rank, v) in vals.into_iter().enumerate() {
        let v = v?;
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, rank));
        }
    }
    let (value, rank) = best.expect("class is nonempty");
    Ok(Extremum { value, model: class.unrank(rank as u128).expect("rank in range") })
}

/// Error functionals of an estimate `pair1` against a target `pair2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorNormReport {
    pub k: usize,
    pub rip: f64,
    pub d: f64,
    pub lambda_k: f64,
    pub s2k: f64,
    pub s1k: f64,
    pub rip_model: ModelIndex,
    pub d_model: ModelIndex,
    pub lambda_model: ModelIndex,
    pub s2k_model: Option<ModelIndex>,
    pub s1k_model: Option<ModelIndex>,
}

impl ErrorNormReport {
    pub fn compute(k: usize, pair1: &RegressionPair, pair2: &RegressionPair) -> Result<Self> {
        let r = rip(k, &pair1.sigma.sub(&pair2.sigma)?)?;
        let d = dvec(k, &crate::linalg::sub(&pair1.gamma, &pair2.gamma))?;
        let lam = lambda_sparse(k, &pair2.sigma)?;
        let s2 = strength(Norm::L2, k, pair2)?;
        let s1 = strength(Norm::L1, k, pair2)?;
        Ok(Self {
            k,
            rip: r.value,
            d: d.value,
            lambda_k: lam.value,
            s2k: s2.value,
            s1k: s1.value,
            rip_model: r.model,
            d_model: d.model,
            lambda_model: lam.model,
            s2k_model: s2.model,
            s1k_model: s1.model,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dvec_tie_break() {
        let e = dvec(1, &[2.0, -2.0, 1.0]).unwrap();
        assert_eq!(e.model.as_slice(), &[0]);
        assert_eq!(e.value, 2.0);
    }

    #[test]
    fn rip_diag() {
        let e = rip(1, &SymmetricMatrix::diagonal(&[1.0, -2.0])).unwrap();
        assert_eq!(e.value, 2.0);
        assert_eq!(e.model.as_slice(), &[1]);
    }
}

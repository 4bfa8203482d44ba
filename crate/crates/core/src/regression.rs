//! Regression pairs `(Σ, Γ)`, the per-model linear regression map, and the
//! data containers that produce them.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{refine, solve_spd, sub, Cholesky, ModelIndex, SymmetricMatrix};
use crate::models::ModelClass;

/// `n × p` design (row-major) and a length-`n` response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    intercept: bool,
}

impl Dataset {
    pub fn new(n: usize, p: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::input("dataset needs n >= 1 and p >= 1"));
        }
        if x.len() != n * p {
            return Err(Error::DimensionMismatch { expected: n * p, got: x.len() });
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { n, p, x, y, intercept: false })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::input("ragged design rows"));
        }
        Self::new(rows.len(), p, rows.concat(), y)
    }

    /// Marks column 0 as an intercept; it must be all ones.
    pub fn with_intercept(mut self) -> Result<Self> {
        if (0..self.n).any(|i| self.x[i * self.p] != 1.0) {
            return Err(Error::input("intercept column 0 must be all ones"));
        }
        self.intercept = true;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// CSV with header `y,x0,..,x{p-1}`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["y".to_string()];
        header.extend((0..self.p).map(|j| format!("x{j}")));
        wr.write_record(&header)?;
        for i in 0..self.n {
            let mut rec = vec![self.y[i].to_string()];
            rec.extend(self.row(i).iter().map(f64::to_string));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        if header.get(0) != Some("y") {
            return Err(Error::input("first CSV column must be `y`"));
        }
        let p = header.len() - 1;
        for j in 0..p {
            if header.get(j + 1) != Some(format!("x{j}").as_str()) {
                return Err(Error::input(format!("expected column x{j}")));
            }
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for rec in rd.records() {
            let rec = rec?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::input(format!("{s:?}: {e}")));
            y.push(parse(&rec[0])?);
            for j in 0..p {
                x.push(parse(&rec[j + 1])?);
            }
        }
        Self::new(y.len(), p, x, y)
    }
}

/// A `(Σ, Γ)` pair fed to the linear regression map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionPair {
    pub sigma: SymmetricMatrix,
    pub gamma: Vec<f64>,
}

impl RegressionPair {
    pub fn new(sigma: SymmetricMatrix, gamma: Vec<f64>) -> Result<Self> {
        if sigma.dim() != gamma.len() {
            return Err(Error::DimensionMismatch { expected: sigma.dim(), got: gamma.len() });
        }
        if !sigma.is_finite() || gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { sigma, gamma })
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { sigma: self.sigma.scale(c), gamma: self.gamma.iter().map(|g| c * g).collect() }
    }
}

/// `Σ̂ = (1/n) Σ X_i X_iᵀ`, `Γ̂ = (1/n) Σ X_i Y_i`.
pub fn empirical_pair(d: &Dataset) -> RegressionPair {
    let p = d.p();
    let mut sigma = SymmetricMatrix::zeros(p);
    let mut gamma = vec![0.0; p];
    for i in 0..d.n() {
        let x = d.row(i);
        let yi = d.y()[i];
        for a in 0..p {
            gamma[a] += x[a] * yi;
            for b in 0..=a {
                sigma.add_at(a, b, x[a] * x[b]);
            }
        }
    }
    let inv = 1.0 / d.n() as f64;
    RegressionPair { sigma: sigma.scale(inv), gamma: gamma.iter().map(|g| g * inv).collect() }
}

/// Sample means of the columns and of the response.
pub fn means(d: &Dataset) -> (Vec<f64>, f64) {
    let p = d.p();
    let mut mx = vec![0.0; p];
    for i in 0..d.n() {
        for (m, v) in mx.iter_mut().zip(d.row(i)) {
            *m += v;
        }
    }
    let inv = 1.0 / d.n() as f64;
    mx.iter_mut().for_each(|m| *m *= inv);
    let my = d.y().iter().sum::<f64>() * inv;
    (mx, my)
}

/// Sample-mean-centered pair `(Σ̂*, Γ̂*)`.
pub fn centered_pair(d: &Dataset) -> Result<RegressionPair> {
    if d.n() < 2 {
        return Err(Error::input("centering needs n >= 2"));
    }
    let p = d.p();
    let (mx, my) = means(d);
    let mut sigma = SymmetricMatrix::zeros(p);
    let mut gamma = vec![0.0; p];
    let mut c = vec![0.0; p];
    for i in 0..d.n() {
        for (cj, (xj, mj)) in c.iter_mut().zip(d.row(i).iter().zip(&mx)) {
            *cj = xj - mj;
        }
        let yc = d.y()[i] - my;
        for a in 0..p {
            gamma[a] += c[a] * yc;
            for b in 0..=a {
                sigma.add_at(a, b, c[a] * c[b]);
            }
        }
    }
    let inv = 1.0 / d.n() as f64;
    Ok(RegressionPair { sigma: sigma.scale(inv), gamma: gamma.iter().map(|g| g * inv).collect() })
}

/// Additive-noise correction: observed `Z = X + W` with known `Cov(W)`.
/// The corrected gram may be indefinite.
pub fn noise_corrected_pair(dz: &Dataset, sigma_w: &SymmetricMatrix) -> Result<RegressionPair> {
    if sigma_w.dim() != dz.p() {
        return Err(Error::DimensionMismatch { expected: dz.p(), got: sigma_w.dim() });
    }
    let raw = empirical_pair(dz);
    Ok(RegressionPair { sigma: raw.sigma.sub(sigma_w)?, gamma: raw.gamma })
}

/// `β_M(Σ, Γ) = Σ(M)^{-1} Γ(M)`.
pub fn beta_map(pair: &RegressionPair, model: &ModelIndex) -> Result<Vec<f64>> {
    let sm = pair.sigma.submatrix(model)?;
    solve_spd(&sm, &model.gather(&pair.gamma))
}

/// One entry of [`fit_all`]; `beta` is `None` for singular models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelFit {
    pub model: ModelIndex,
    pub beta: Option<Vec<f64>>,
}

impl ModelFit {
    pub fn is_singular(&self) -> bool {
        self.beta.is_none()
    }
}

/// `β_M` for every model of size at most `k`, in enumeration order.
pub fn fit_all(pair: &RegressionPair, k: usize) -> Result<Vec<ModelFit>> {
    let class = ModelClass::up_to(pair.p(), k)?;
    class.par_map(|m| ModelFit { model: m.clone(), beta: beta_map(pair, m).ok() })
}

/// `(1/n) Σ [Σ_n(M)]^{-1} X_i(M) (Y_i − X_i(M)ᵀ β_{n,M})` computed row by row.
pub fn lin_rep_term(
    d: &Dataset,
    sigma_n: &SymmetricMatrix,
    beta_nm: &[f64],
    model: &ModelIndex,
) -> Result<Vec<f64>> {
    model.check_dim(d.p())?;
    if beta_nm.len() != model.len() {
        return Err(Error::DimensionMismatch { expected: model.len(), got: beta_nm.len() });
    }
    let idx = model.as_slice();
    let mut acc = vec![0.0; idx.len()];
    for i in 0..d.n() {
        let row = d.row(i);
        let fitted: f64 = idx.iter().zip(beta_nm).map(|(&j, b)| row[j] * b).sum();
        let resid = d.y()[i] - fitted;
        for (a, &j) in idx.iter().enumerate() {
            acc[a] += row[j] * resid;
        }
    }
    let inv = 1.0 / d.n() as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    let sm = sigma_n.submatrix(model)?;
    let chol = Cholesky::factor(&sm)?;
    Ok(refine(&sm, &chol, &acc))
}

/// Pair-level form of the influence average:
/// `Σ_2(M)^{-1} (Γ_1(M) − Σ_1(M) β_M(Σ_2, Γ_2))`. With `pair1` empirical and
/// `pair2` the population pair this equals [`lin_rep_term`].
pub fn influence_term(
    pair1: &RegressionPair,
    pair2: &RegressionPair,
    beta2: &[f64],
    model: &ModelIndex,
) -> Result<Vec<f64>> {
    let s1 = pair1.sigma.submatrix(model)?;
    let s2 = pair2.sigma.submatrix(model)?;
    let rhs = sub(&model.gather(&pair1.gamma), &s1.matvec(beta2));
    solve_spd(&s2, &rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_observation_pair() {
        let d = Dataset::new(1, 2, vec![1.0, 2.0], vec![3.0]).unwrap();
        let pr = empirical_pair(&d);
        assert_eq!(pr.sigma.to_rows(), vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert_eq!(pr.gamma, vec![3.0, 6.0]);
    }

    #[test]
    fn csv_round_trip() {
        let d = Dataset::new(2, 2, vec![1.0, 0.5, -2.0, 3.25], vec![0.1, -7.0]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("y,x0,x1\n"));
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn intercept_flag_checks_ones() {
        let d = Dataset::new(2, 2, vec![1.0, 0.5, 1.0, 3.0], vec![0.0, 0.0]).unwrap();
        assert!(d.clone().with_intercept().unwrap().has_intercept());
        let bad = Dataset::new(2, 2, vec![1.0, 0.5, 2.0, 3.0], vec![0.0, 0.0]).unwrap();
        assert!(bad.with_intercept().is_err());
    }
}

//! Reproducible data generators.
//!
//! Independent designs draw Gaussian or sub-Weibull covariates with a
//! misspecified response. Causal designs are vector moving averages of an iid
//! innovation sequence, `X_i = μ + A Σ_s a_s ε_{i−s}`, with the response built
//! from the same filtration, so coupled versions can be replayed exactly.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, SymmetricMatrix};
use crate::par::map_indices;
use crate::regression::{Dataset, RegressionPair};
use crate::rng::SimRng;

const TAG_INDEP: u64 = 0x1D;
const TAG_INNOV: u64 = 0xE5;
const TAG_COPY: u64 = 0xC0;
const TAG_MC: u64 = 0x3C;

/// Relative truncation target for infinite moving averages.
pub const TAIL_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_HORIZON: usize = 5000;

// ---------------------------------------------------------------------------
// Independent designs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DesignLaw {
    Gaussian { sigma: Vec<Vec<f64>> },
    /// Independent coordinates `sign · E^{1/α} · scale`, `E ~ Exp(1)`.
    SubWeibull { alpha: f64, scale: f64 },
}

/// Mean function `μ(x)`; indices refer to dataset columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    Linear { b: Vec<f64> },
    /// `bᵀx + c · x_j²`.
    LinearQuadratic { b: Vec<f64>, c: f64, j: usize },
}

impl Link {
    fn parts(&self) -> (&[f64], f64, usize) {
        match self {
            Link::Linear { b } => (b, 0.0, 0),
            Link::LinearQuadratic { b, c, j } => (b, *c, *j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NoiseLaw {
    None,
    Gaussian { sd: f64 },
}

impl NoiseLaw {
    fn sd(&self) -> f64 {
        match self {
            NoiseLaw::None => 0.0,
            NoiseLaw::Gaussian { sd } => *sd,
        }
    }
}

/// `p` random covariates (plus a leading all-ones column when `intercept`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndepSpec {
    pub p: usize,
    pub design: DesignLaw,
    pub link: Link,
    pub noise: NoiseLaw,
    #[serde(default)]
    pub intercept: bool,
}

impl IndepSpec {
    /// Gaussian design with `Σ_jl = ρ^|j−l|`, a sparse linear part, a
    /// quadratic term in column 0 and unit Gaussian noise.
    pub fn gaussian_toeplitz(p: usize, rho: f64) -> Self {
        let sigma = (0..p)
            .map(|i| (0..p).map(|j| rho.powi((i as i32 - j as i32).abs())).collect())
            .collect();
        Self {
            p,
            design: DesignLaw::Gaussian { sigma },
            link: Link::LinearQuadratic { b: default_coefficients(p), c: 0.5, j: 0 },
            noise: NoiseLaw::Gaussian { sd: 1.0 },
            intercept: false,
        }
    }

    /// Independent standard Gaussian coordinates, linear link, no noise.
    pub fn standard_gaussian(p: usize) -> Self {
        let sigma = (0..p).map(|i| (0..p).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        Self {
            p,
            design: DesignLaw::Gaussian { sigma },
            link: Link::Linear { b: vec![0.0; p] },
            noise: NoiseLaw::None,
            intercept: false,
        }
    }

    pub fn columns(&self) -> usize {
        self.p + usize::from(self.intercept)
    }

    fn offset(&self) -> usize {
        usize::from(self.intercept)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::input("p must be positive"));
        }
        match &self.design {
            DesignLaw::Gaussian { sigma } => {
                let s = SymmetricMatrix::from_rows(sigma)?;
                if s.dim() != self.p {
                    return Err(Error::DimensionMismatch { expected: self.p, got: s.dim() });
                }
                Cholesky::factor(&s).map_err(|_| Error::input("design covariance must be positive definite"))?;
            }
            DesignLaw::SubWeibull { alpha, scale } => {
                if !(*alpha > 0.0) || !(*scale > 0.0) {
                    return Err(Error::input("sub-Weibull needs alpha > 0 and scale > 0"));
                }
            }
        }
        let (b, _, j) = self.link.parts();
        if b.len() != self.columns() {
            return Err(Error::DimensionMismatch { expected: self.columns(), got: b.len() });
        }
        if matches!(self.link, Link::LinearQuadratic { .. }) && (j >= self.columns() || (self.intercept && j == 0)) {
            return Err(Error::input("quadratic index must be a random covariate column"));
        }
        if self.noise.sd() < 0.0 {
            return Err(Error::input("noise sd must be nonnegative"));
        }
        Ok(())
    }

    /// Second and fourth moments of one random coordinate.
    fn coord_moments(&self, j: usize) -> (f64, f64) {
        match &self.design {
            DesignLaw::Gaussian { sigma } => (sigma[j][j], 3.0 * sigma[j][j] * sigma[j][j]),
            DesignLaw::SubWeibull { alpha, scale } => (
                scale.powi(2) * gamma(1.0 + 2.0 / alpha),
                scale.powi(4) * gamma(1.0 + 4.0 / alpha),
            ),
        }
    }

    fn design_cov(&self) -> SymmetricMatrix {
        match &self.design {
            DesignLaw::Gaussian { sigma } => SymmetricMatrix::from_fn(self.p, |i, j| sigma[i][j]),
            DesignLaw::SubWeibull { .. } => {
                let m2 = self.coord_moments(0).0;
                SymmetricMatrix::diagonal(&vec![m2; self.p])
            }
        }
    }
}

fn default_coefficients(q: usize) -> Vec<f64> {
    let mut b = vec![0.0; q];
    for (j, v) in [1.0, -0.5, 0.25].into_iter().enumerate().take(q) {
        b[j] = v;
    }
    b
}

/// Closed-form or simulated population quantities for one generator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population {
    pub pair: RegressionPair,
    pub mean_x: Vec<f64>,
    pub mean_y: f64,
    pub mean_y2: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    /// Batch-means standard errors; the largest per-entry value is reported.
    MonteCarlo { draws: usize, batches: usize, se_sigma: f64, se_gamma: f64, se_mean_y2: f64 },
}

/// Anything that can emit datasets and knows (or can simulate) its targets.
pub trait Generator: Sync {
    /// Number of dataset columns.
    fn columns(&self) -> usize;
    fn generate(&self, n: usize, seed: u64) -> Result<Dataset>;
    /// Population pair averaged over `n` observations.
    fn population(&self, n: usize) -> Result<Population>;
}

impl Generator for IndepSpec {
    fn columns(&self) -> usize {
        IndepSpec::columns(self)
    }

    fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        gen_independent(self, n, seed)
    }

    fn population(&self, _n: usize) -> Result<Population> {
        population_independent(self)
    }
}

/// `n` iid rows. Row `i` uses its own counter stream, so rows may be drawn in
/// any order.
pub fn gen_independent(spec: &IndepSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let q = spec.columns();
    let off = spec.offset();
    let chol = match &spec.design {
        DesignLaw::Gaussian { sigma } => Some(Cholesky::factor(&SymmetricMatrix::from_rows(sigma)?)?),
        DesignLaw::SubWeibull { .. } => None,
    };
    let (b, c, j) = spec.link.parts();
    let sd = spec.noise.sd();
    let rows: Vec<(Vec<f64>, f64)> = map_indices(n, |i| {
        let mut rng = SimRng::new(seed, &[TAG_INDEP, i as u64]);
        let z: Vec<f64> = match &spec.design {
            DesignLaw::Gaussian { .. } => {
                let w: Vec<f64> = (0..spec.p).map(|_| rng.normal()).collect();
                chol.as_ref().expect("gaussian factor").lower_mul(&w)
            }
            DesignLaw::SubWeibull { alpha, scale } => {
                (0..spec.p).map(|_| rng.sign() * rng.exp1().powf(1.0 / alpha) * scale).collect()
            }
        };
        let mut x = Vec::with_capacity(q);
        if off == 1 {
            x.push(1.0);
        }
        x.extend(z);
        let mut y = dot(b, &x) + c * x[j] * x[j];
        if sd > 0.0 {
            y += sd * rng.normal();
        }
        (x, y)
    });
    let mut x = Vec::with_capacity(n * q);
    let mut y = Vec::with_capacity(n);
    for (r, v) in rows {
        x.extend(r);
        y.push(v);
    }
    let d = Dataset::new(n, q, x, y)?;
    if spec.intercept {
        d.with_intercept()
    } else {
        Ok(d)
    }
}

/// Closed-form moments. Coordinates are mean zero and symmetric, so all odd
/// moments vanish; the quadratic term contributes through `E[x_j²]`,
/// `E[x_j⁴]`.
pub fn population_independent(spec: &IndepSpec) -> Result<Population> {
    spec.validate()?;
    let q = spec.columns();
    let off = spec.offset();
    let cov = spec.design_cov();
    let sigma = SymmetricMatrix::from_fn(q, |a, b| {
        match (a < off, b < off) {
            (true, true) => 1.0,
            (false, false) => cov.get(a - off, b - off),
            _ => 0.0,
        }
    });
    let (b, c, j) = spec.link.parts();
    let mut gamma_vec = sigma.matvec(b);
    let (m2, m4) = if c != 0.0 { spec.coord_moments(j - off) } else { (0.0, 0.0) };
    let b0 = if off == 1 { b[0] } else { 0.0 };
    if off == 1 {
        gamma_vec[0] += c * m2;
    }
    let lin_var = cov.quad_form(&b[off..]);
    let sd = spec.noise.sd();
    let mean_y2 = b0 * b0 + lin_var + c * c * m4 + sd * sd + 2.0 * b0 * c * m2;
    let mut mean_x = vec![0.0; q];
    if off == 1 {
        mean_x[0] = 1.0;
    }
    Ok(Population {
        pair: RegressionPair::new(sigma, gamma_vec)?,
        mean_x,
        mean_y: b0 + c * m2,
        mean_y2,
        provenance: Provenance::ClosedForm,
    })
}

// ---------------------------------------------------------------------------
// Causal (moving average) designs

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficients {
    /// `a_s = ρ^s`.
    Geometric { rho: f64 },
    /// `a_s = (s + 1)^{−(ν+1)}`.
    Polynomial { nu: f64 },
}

impl Coefficients {
    pub fn coefficient(&self, s: usize) -> f64 {
        match *self {
            Coefficients::Geometric { rho } => rho.powi(s as i32),
            Coefficients::Polynomial { nu } => ((s + 1) as f64).powf(-(nu + 1.0)),
        }
    }

    /// Upper bound on `Σ_{s>S} |a_s| / Σ_s |a_s|`.
    fn relative_tail(&self, horizon: usize) -> f64 {
        match *self {
            Coefficients::Geometric { rho } => rho.abs().powi(horizon as i32 + 1),
            // Integral comparison; the full sum is at least a_0 = 1.
            Coefficients::Polynomial { nu } => ((horizon + 1) as f64).powf(-nu) / nu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Horizon {
    /// Smallest `S` with relative tail at most [`TAIL_TOLERANCE`], capped.
    Auto { max: usize },
    Fixed { s: usize },
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Auto { max: DEFAULT_MAX_HORIZON }
    }
}

/// Where the infinite moving average was cut and what that cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    pub horizon: usize,
    /// Bound on the omitted share of `Σ |a_s|`; 0 for fixed finite horizons.
    pub relative_tail: f64,
    pub capped: bool,
}

/// Innovation coordinates, each normalized to mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Innovation {
    Gaussian,
    Rademacher,
    SubWeibull { alpha: f64 },
}

impl Innovation {
    #[inline]
    fn draw(&self, rng: &mut SimRng) -> f64 {
        match *self {
            Innovation::Gaussian => rng.normal(),
            Innovation::Rademacher => rng.sign(),
            Innovation::SubWeibull { alpha } => {
                rng.sign() * rng.exp1().powf(1.0 / alpha) / gamma(1.0 + 2.0 / alpha).sqrt()
            }
        }
    }

    /// `E ξ⁴` for a unit-variance coordinate.
    pub fn fourth_moment(&self) -> f64 {
        match *self {
            Innovation::Gaussian => 3.0,
            Innovation::Rademacher => 1.0,
            Innovation::SubWeibull { alpha } => gamma(1.0 + 4.0 / alpha) / gamma(1.0 + 2.0 / alpha).powi(2),
        }
    }
}

/// `Y_i = bᵀX_i + c · X_i(j)² + σ e_i`, `e_i` the moving average of the last
/// innovation coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalResponse {
    pub b: Vec<f64>,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub j: usize,
    #[serde(default)]
    pub sigma: f64,
}

/// Second mixing matrix used for observations `i ≥ ⌊fraction · n⌋`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSwitch {
    pub mixing: Vec<Vec<f64>>,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalSpec {
    pub p: usize,
    pub coefficients: Coefficients,
    #[serde(default)]
    pub horizon: Horizon,
    /// `p × (p + 1)` loading of the innovation vector.
    pub mixing: Vec<Vec<f64>>,
    pub innovation: Innovation,
    pub response: CausalResponse,
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
    #[serde(default)]
    pub regime: Option<RegimeSwitch>,
}

/// `A_jj = 1`, `A_j,j+1 = 0.4`: neighbouring covariates share an innovation,
/// and the last covariate loads on the response noise.
pub fn banded_mixing(p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|j| {
            let mut row = vec![0.0; p + 1];
            row[j] = 1.0;
            row[j + 1] = 0.4;
            row
        })
        .collect()
}

impl CausalSpec {
    /// Geometric decay `ρ^s`, Gaussian innovations, banded mixing and a
    /// misspecified response.
    pub fn geometric(p: usize, rho: f64) -> Self {
        Self {
            p,
            coefficients: Coefficients::Geometric { rho },
            horizon: Horizon::default(),
            mixing: banded_mixing(p),
            innovation: Innovation::Gaussian,
            response: CausalResponse { b: default_coefficients(p), c: 0.5, j: 0, sigma: 1.0 },
            mean: None,
            regime: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::input("p must be positive"));
        }
        let check_mixing = |a: &Vec<Vec<f64>>| -> Result<()> {
            if a.len() != self.p || a.iter().any(|r| r.len() != self.p + 1) {
                return Err(Error::input(format!("mixing matrix must be {} x {}", self.p, self.p + 1)));
            }
            if a.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
            Ok(())
        };
        check_mixing(&self.mixing)?;
        if let Some(r) = &self.regime {
            check_mixing(&r.mixing)?;
            if !(0.0..=1.0).contains(&r.fraction) {
                return Err(Error::input("regime fraction must lie in [0, 1]"));
            }
        }
        match self.coefficients {
            Coefficients::Geometric { rho } if !(rho.abs() < 1.0) => {
                return Err(Error::input("geometric coefficients need |rho| < 1"))
            }
            Coefficients::Polynomial { nu } if !(nu > 0.0) => {
                return Err(Error::input("polynomial coefficients need nu > 0"))
            }
            _ => {}
        }
        if let Innovation::SubWeibull { alpha } = self.innovation {
            if !(alpha > 0.0) {
                return Err(Error::input("sub-Weibull innovations need alpha > 0"));
            }
        }
        let r = &self.response;
        if r.b.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, got: r.b.len() });
        }
        if r.j >= self.p {
            return Err(Error::IndexOutOfRange { index: r.j, dim: self.p });
        }
        if let Some(m) = &self.mean {
            if m.len() != self.p {
                return Err(Error::DimensionMismatch { expected: self.p, got: m.len() });
            }
        }
        Ok(())
    }

    pub fn truncation(&self) -> Truncation {
        match self.horizon {
            Horizon::Fixed { s } => Truncation { horizon: s, relative_tail: 0.0, capped: false },
            Horizon::Auto { max } => {
                let mut s = 0;
                while s < max && self.coefficients.relative_tail(s) > TAIL_TOLERANCE {
                    s += 1;
                }
                let tail = self.coefficients.relative_tail(s);
                Truncation { horizon: s, relative_tail: tail, capped: tail > TAIL_TOLERANCE }
            }
        }
    }

    pub fn horizon(&self) -> usize {
        self.truncation().horizon
    }

    /// `a_0, …, a_S`.
    pub fn coefficient_vector(&self) -> Vec<f64> {
        (0..=self.horizon()).map(|s| self.coefficients.coefficient(s)).collect()
    }

    pub fn innovation_dim(&self) -> usize {
        self.p + 1
    }

    /// Number of observations in the first regime.
    pub fn regime_split(&self, n: usize) -> usize {
        match &self.regime {
            Some(r) => ((r.fraction * n as f64).floor() as usize).min(n),
            None => n,
        }
    }

    pub fn regime_count(&self) -> usize {
        1 + usize::from(self.regime.is_some())
    }

    pub fn mixing_for(&self, regime: usize) -> &[Vec<f64>] {
        match (&self.regime, regime) {
            (Some(r), 1) => &r.mixing,
            _ => &self.mixing,
        }
    }

    /// The observation `W = (X, Y)` as a function of the filtered innovation
    /// `u = Σ_s a_s ε_{i−s}`.
    pub fn observe(&self, u: &[f64], regime: usize, out: &mut Vec<f64>) {
        out.clear();
        let a = self.mixing_for(regime);
        for (j, row) in a.iter().enumerate() {
            let mu = self.mean.as_ref().map_or(0.0, |m| m[j]);
            out.push(mu + dot(row, u));
        }
        let r = &self.response;
        let xj = out[r.j];
        let y = dot(&r.b, &out[..self.p]) + r.c * xj * xj + r.sigma * u[self.p];
        out.push(y);
    }

    pub(crate) fn draw_innovation(&self, rng: &mut SimRng, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.innovation.draw(rng);
        }
    }
}

/// Innovations `ε_{−S}, …, ε_{n−1}` of one path. Independent replacements
/// `ε′_t` are reproducible from the same seed.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationTape {
    pub seed: u64,
    pub horizon: usize,
    pub n: usize,
    pub dim: usize,
    eps: Vec<f64>,
}

impl InnovationTape {
    /// `ε_t` for `t ∈ [−S, n)`.
    pub fn get(&self, t: i64) -> &[f64] {
        let idx = (t + self.horizon as i64) as usize;
        &self.eps[idx * self.dim..(idx + 1) * self.dim]
    }

    /// The independent copy `ε′_t`.
    pub fn copy_at(&self, spec: &CausalSpec, t: i64) -> Vec<f64> {
        let mut rng = SimRng::new(self.seed, &[TAG_COPY, t as u64]);
        let mut v = vec![0.0; self.dim];
        spec.draw_innovation(&mut rng, &mut v);
        v
    }

    /// The tape with `ε_t` swapped for its independent copy.
    pub fn coupled(&self, spec: &CausalSpec, t: i64) -> Self {
        let mut out = self.clone();
        let copy = self.copy_at(spec, t);
        let idx = (t + self.horizon as i64) as usize;
        out.eps[idx * self.dim..(idx + 1) * self.dim].copy_from_slice(&copy);
        out
    }
}

pub fn draw_tape(spec: &CausalSpec, n: usize, seed: u64) -> Result<InnovationTape> {
    spec.validate()?;
    let horizon = spec.horizon();
    let dim = spec.innovation_dim();
    let len = n + horizon;
    let chunks: Vec<Vec<f64>> = map_indices(len, |idx| {
        let t = idx as i64 - horizon as i64;
        let mut rng = SimRng::new(seed, &[TAG_INNOV, t as u64]);
        let mut v = vec![0.0; dim];
        spec.draw_innovation(&mut rng, &mut v);
        v
    });
    Ok(InnovationTape { seed, horizon, n, dim, eps: chunks.concat() })
}

/// Rebuilds the dataset from a tape; identical tapes give identical data.
pub fn replay(spec: &CausalSpec, tape: &InnovationTape) -> Result<Dataset> {
    spec.validate()?;
    if tape.horizon != spec.horizon() || tape.dim != spec.innovation_dim() {
        return Err(Error::input("tape does not match the specification"));
    }
    let a = spec.coefficient_vector();
    let n = tape.n;
    let p = spec.p;
    let split = spec.regime_split(n);
    let rows: Vec<Vec<f64>> = map_indices(n, |i| {
        let mut u = vec![0.0; tape.dim];
        for (s, &as_) in a.iter().enumerate() {
            let e = tape.get(i as i64 - s as i64);
            for (uk, ek) in u.iter_mut().zip(e) {
                *uk += as_ * ek;
            }
        }
        let mut w = Vec::with_capacity(p + 1);
        spec.observe(&u, usize::from(i >= split), &mut w);
        w
    });
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for w in rows {
        x.extend_from_slice(&w[..p]);
        y.push(w[p]);
    }
    Dataset::new(n, p, x, y)
}

pub fn gen_causal(spec: &CausalSpec, n: usize, seed: u64) -> Result<(Dataset, InnovationTape)> {
    let tape = draw_tape(spec, n, seed)?;
    let d = replay(spec, &tape)?;
    Ok((d, tape))
}

impl Generator for CausalSpec {
    fn columns(&self) -> usize {
        self.p
    }

    fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        let tape = draw_tape(self, n, seed)?;
        replay(self, &tape)
    }

    fn population(&self, n: usize) -> Result<Population> {
        population_causal(self, n)
    }
}

/// Moments of one regime, exact for the truncated moving average.
pub(crate) struct RegimeMoments {
    pub(crate) second: SymmetricMatrix,
    pub(crate) gamma: Vec<f64>,
    pub(crate) mean_y: f64,
    pub(crate) mean_y2: f64,
}

pub(crate) fn regime_moments(spec: &CausalSpec, regime: usize) -> RegimeMoments {
    let p = spec.p;
    let a = spec.mixing_for(regime);
    let coef = spec.coefficient_vector();
    let tau2: f64 = coef.iter().map(|c| c * c).sum();
    let sum_a4: f64 = coef.iter().map(|c| c.powi(4)).sum();
    let mu: Vec<f64> = spec.mean.clone().unwrap_or_else(|| vec![0.0; p]);
    let r = &spec.response;
    let (c, j) = (r.c, r.j);

    // Z = X − μ = A u, Cov(u) = τ² I.
    let cov = SymmetricMatrix::from_fn(p, |i, l| tau2 * dot(&a[i], &a[l]));
    let second = SymmetricMatrix::from_fn(p, |i, l| cov.get(i, l) + mu[i] * mu[l]);

    // E[X u_last] = τ² A[:, p].
    let x_noise: Vec<f64> = (0..p).map(|i| tau2 * a[i][p]).collect();
    let czz = cov.get(j, j);
    let mut gamma_vec = second.matvec(&r.b);
    for i in 0..p {
        gamma_vec[i] += c * (mu[i] * (mu[j] * mu[j] + czz) + 2.0 * mu[j] * cov.get(i, j));
        gamma_vec[i] += r.sigma * x_noise[i];
    }

    // Y = α0 + V + β Z_j + c Z_j², V = bᵀZ + σ u_last, odd moments vanish.
    let alpha0 = dot(&r.b, &mu) + c * mu[j] * mu[j];
    let beta = 2.0 * c * mu[j];
    let mut w: Vec<f64> = (0..=p).map(|l| (0..p).map(|i| r.b[i] * a[i][l]).sum()).collect();
    w[p] += r.sigma;
    let s_vv = tau2 * dot(&w, &w);
    let s_vz = tau2 * dot(&w, &a[j]);
    let sum_aj4: f64 = a[j].iter().map(|v| v.powi(4)).sum();
    let z4 = 3.0 * czz * czz + (spec.innovation.fourth_moment() - 3.0) * sum_a4 * sum_aj4;
    let mean_y2 = alpha0 * alpha0 + s_vv + beta * beta * czz + c * c * z4 + 2.0 * alpha0 * c * czz + 2.0 * beta * s_vz;
    RegimeMoments { second, gamma: gamma_vec, mean_y: alpha0 + c * czz, mean_y2 }
}

/// Closed form for every supported innovation law: second moments need only
/// unit variances, and the one fourth moment `E[Z_j⁴]` uses the innovation
/// kurtosis. Regimes are weighted by their share of the `n` observations.
pub fn population_causal(spec: &CausalSpec, n: usize) -> Result<Population> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::input("n must be positive"));
    }
    let split = spec.regime_split(n);
    let w0 = split as f64 / n as f64;
    let m0 = regime_moments(spec, 0);
    let m = if spec.regime.is_some() && split < n {
        let m1 = regime_moments(spec, 1);
        let w1 = 1.0 - w0;
        RegimeMoments {
            second: m0.second.scale(w0).add(&m1.second.scale(w1))?,
            gamma: m0.gamma.iter().zip(&m1.gamma).map(|(a, b)| w0 * a + w1 * b).collect(),
            mean_y: w0 * m0.mean_y + w1 * m1.mean_y,
            mean_y2: w0 * m0.mean_y2 + w1 * m1.mean_y2,
        }
    } else {
        m0
    };
    Ok(Population {
        pair: RegressionPair::new(m.second, m.gamma)?,
        mean_x: spec.mean.clone().unwrap_or_else(|| vec![0.0; spec.p]),
        mean_y: m.mean_y,
        mean_y2: m.mean_y2,
        provenance: Provenance::ClosedForm,
    })
}

/// Monte Carlo population pair from `draws` observations split into
/// independent batches of `batch` rows (whole paths for dependent data).
/// Standard errors come from batch means.
pub fn monte_carlo_population<G: Generator + ?Sized>(gen: &G, batch: usize, draws: usize, seed: u64) -> Result<Population> {
    if batch == 0 || draws < batch {
        return Err(Error::input("need draws >= batch >= 1"));
    }
    let batches = draws / batch;
    let q = gen.columns();
    let n_sigma = q * (q + 1) / 2;
    // Per batch: sigma (packed), gamma, mean_x, mean_y, mean_y2.
    let stats: Vec<Result<Vec<f64>>> = map_indices(batches, |bi| {
        let d = gen.generate(batch, crate::rng::stream_key(seed, &[TAG_MC, bi as u64]))?;
        let mut v = vec![0.0; n_sigma + 2 * q + 2];
        for i in 0..d.n() {
            let x = d.row(i);
            let y = d.y()[i];
            let mut idx = 0;
            for a in 0..q {
                for b in 0..=a {
                    v[idx] += x[a] * x[b];
                    idx += 1;
                }
            }
            for a in 0..q {
                v[n_sigma + a] += x[a] * y;
                v[n_sigma + q + a] += x[a];
            }
            v[n_sigma + 2 * q] += y;
            v[n_sigma + 2 * q + 1] += y * y;
        }
        let inv = 1.0 / d.n() as f64;
        v.iter_mut().for_each(|s| *s *= inv);
        Ok(v)
    });
    let stats: Vec<Vec<f64>> = stats.into_iter().collect::<Result<_>>()?;
    let len = stats[0].len();
    let bf = batches as f64;
    let mean: Vec<f64> = (0..len).map(|e| stats.iter().map(|s| s[e]).sum::<f64>() / bf).collect();
    let se: Vec<f64> = (0..len)
        .map(|e| {
            if batches < 2 {
                return f64::INFINITY;
            }
            let var = stats.iter().map(|s| (s[e] - mean[e]).powi(2)).sum::<f64>() / (bf - 1.0);
            (var / bf).sqrt()
        })
        .collect();
    let mut sigma = SymmetricMatrix::zeros(q);
    let mut idx = 0;
    for a in 0..q {
        for b in 0..=a {
            sigma.set(a, b, mean[idx]);
            idx += 1;
        }
    }
    let max_se = |r: std::ops::Range<usize>| se[r].iter().cloned().fold(0.0, f64::max);
    Ok(Population {
        pair: RegressionPair::new(sigma, mean[n_sigma..n_sigma + q].to_vec())?,
        mean_x: mean[n_sigma + q..n_sigma + 2 * q].to_vec(),
        mean_y: mean[n_sigma + 2 * q],
        mean_y2: mean[n_sigma + 2 * q + 1],
        provenance: Provenance::MonteCarlo {
            draws: batches * batch,
            batches,
            se_sigma: max_se(0..n_sigma),
            se_gamma: max_se(n_sigma..n_sigma + q),
            se_mean_y2: se[n_sigma + 2 * q + 1],
        },
    })
}

/// Either generator family, for configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Independent(IndepSpec),
    Causal(CausalSpec),
}

impl Generator for GeneratorSpec {
    fn columns(&self) -> usize {
        match self {
            GeneratorSpec::Independent(s) => Generator::columns(s),
            GeneratorSpec::Causal(s) => Generator::columns(s),
        }
    }

    fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            GeneratorSpec::Independent(s) => s.generate(n, seed),
            GeneratorSpec::Causal(s) => s.generate(n, seed),
        }
    }

    fn population(&self, n: usize) -> Result<Population> {
        match self {
            GeneratorSpec::Independent(s) => s.population(n),
            GeneratorSpec::Causal(s) => s.population(n),
        }
    }
}

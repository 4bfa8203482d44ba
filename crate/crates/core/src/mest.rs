//! Per-model M-estimation for smooth convex losses and the deterministic
//! sandwich/representation inequalities around the Newton step at the target.

use std::io::Write;

use serde::Serialize;

use crate::bounds::{within, Outcome};
use crate::error::{Error, Result};
use crate::linalg::{eig_extremes, norm2, norm_inf, op_norm, solve_spd, sub, Cholesky, ModelIndex, SymmetricMatrix};
use crate::models::ModelClass;
use crate::regression::Dataset;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `(y − u)²`.
    Squared,
    /// `log(1 + eᵘ) − y·u`, `y ∈ [0, 1]`.
    Logistic,
    /// `eᵘ − y·u`.
    Poisson,
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl Loss {
    pub fn value(self, y: f64, u: f64) -> f64 {
        match self {
            Loss::Squared => (y - u) * (y - u),
            Loss::Logistic => softplus(u) - y * u,
            Loss::Poisson => u.exp() - y * u,
        }
    }

    pub fn d1(self, y: f64, u: f64) -> f64 {
        match self {
            Loss::Squared => 2.0 * (u - y),
            Loss::Logistic => sigmoid(u) - y,
            Loss::Poisson => u.exp() - y,
        }
    }

    pub fn d2(self, _y: f64, u: f64) -> f64 {
        match self {
            Loss::Squared => 2.0,
            Loss::Logistic => sigmoid(u) * sigmoid(-u),
            Loss::Poisson => u.exp(),
        }
    }

    /// Exact `C₊(y, u) = sup_{|s−t| ≤ u} L″(y, s) / L″(y, t)`: `eᵘ` for the
    /// canonical Poisson and logistic losses (for logistic the supremum is
    /// approached as `t → ±∞`), 1 for squared loss.
    pub fn c_plus(self, u: f64) -> f64 {
        match self {
            Loss::Squared => 1.0,
            Loss::Logistic | Loss::Poisson => u.max(0.0).exp(),
        }
    }

    /// The coarser `exp(3u)` bound quoted for canonical GLMs.
    pub fn c_plus_bound(self, u: f64) -> f64 {
        match self {
            Loss::Squared => 1.0,
            Loss::Logistic | Loss::Poisson => (3.0 * u.max(0.0)).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::Squared => "squared",
            Loss::Logistic => "logistic",
            Loss::Poisson => "poisson",
        }
    }
}

/// Nonnegative covariate weight `h_M(X(M))`.
#[derive(Debug, Clone, Copy)]
pub enum Weight {
    Unit,
    Custom(fn(&[f64]) -> f64),
}

#[derive(Debug, Clone, Copy)]
pub struct LossSpec {
    pub loss: Loss,
    pub weight: Weight,
}

impl LossSpec {
    pub fn new(loss: Loss) -> Self {
        Self { loss, weight: Weight::Unit }
    }

    fn h(&self, x: &[f64]) -> f64 {
        match self.weight {
            Weight::Unit => 1.0,
            Weight::Custom(f) => f(x),
        }
    }
}

/// A dataset with optional observation weights summing to one (unweighted
/// means `1/n` each).
#[derive(Clone, Copy)]
struct Sample<'a> {
    data: &'a Dataset,
    weights: Option<&'a [f64]>,
}

impl Sample<'_> {
    fn w(&self, i: usize) -> f64 {
        match self.weights {
            Some(w) => w[i],
            None => 1.0 / self.data.n() as f64,
        }
    }

    /// Calls `f(weight, x(M), y, u)` for every row.
    fn for_each(&self, model: &ModelIndex, theta: &[f64], mut f: impl FnMut(f64, &[f64], f64, f64)) {
        let mut x = vec![0.0; model.len()];
        for i in 0..self.data.n() {
            let row = self.data.row(i);
            for (xa, &j) in x.iter_mut().zip(model.as_slice()) {
                *xa = row[j];
            }
            let u: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
            f(self.w(i), &x, self.data.y()[i], u);
        }
    }
}

fn check_args(d: &Dataset, model: &ModelIndex, theta: &[f64]) -> Result<()> {
    model.check_dim(d.p())?;
    if theta.len() != model.len() {
        return Err(Error::DimensionMismatch { expected: model.len(), got: theta.len() });
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn objective_s(s: Sample, spec: &LossSpec, model: &ModelIndex, theta: &[f64]) -> f64 {
    let mut acc = 0.0;
    s.for_each(model, theta, |w, x, y, u| acc += w * spec.h(x) * spec.loss.value(y, u));
    acc
}

fn zhat_s(s: Sample, spec: &LossSpec, model: &ModelIndex, theta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; model.len()];
    s.for_each(model, theta, |w, x, y, u| {
        let c = w * spec.h(x) * spec.loss.d1(y, u);
        for (ga, xa) in g.iter_mut().zip(x) {
            *ga += c * xa;
        }
    });
    g
}

fn jhat_s(s: Sample, spec: &LossSpec, model: &ModelIndex, theta: &[f64]) -> SymmetricMatrix {
    let m = model.len();
    let mut h = SymmetricMatrix::zeros(m);
    s.for_each(model, theta, |w, x, y, u| {
        let c = w * spec.h(x) * spec.loss.d2(y, u);
        for a in 0..m {
            for b in 0..=a {
                h.add_at(a, b, c * x[a] * x[b]);
            }
        }
    });
    h
}

/// `(1/n) Σ h_M L(Y_i, X_i(M)ᵀθ)`.
pub fn objective(d: &Dataset, spec: &LossSpec, model: &ModelIndex, theta: &[f64]) -> Result<f64> {
    check_args(d, model, theta)?;
    Ok(objective_s(Sample { data: d, weights: None }, spec, model, theta))
}

/// Empirical score `Ẑ(θ) = (1/n) Σ h_M L′(Y_i, X_i(M)ᵀθ) X_i(M)`.
pub fn zhat(d: &Dataset, spec: &LossSpec, model: &ModelIndex, theta: &[f64]) -> Result<Vec<f64>> {
    check_args(d, model, theta)?;
    Ok(zhat_s(Sample { data: d, weights: None }, spec, model, theta))
}

/// Empirical curvature `Ĵ(θ) = (1/n) Σ h_M L″(Y_i, X_i(M)ᵀθ) X_i(M) X_i(M)ᵀ`.
pub fn jhat(d: &Dataset, spec: &LossSpec, model: &ModelIndex, theta: &[f64]) -> Result<SymmetricMatrix> {
    check_args(d, model, theta)?;
    Ok(jhat_s(Sample { data: d, weights: None }, spec, model, theta))
}

const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;

fn fit_s(s: Sample, spec: &LossSpec, model: &ModelIndex) -> Result<Vec<f64>> {
    let m = model.len();
    // Scale for the stopping rule: ‖Γ̂(M)‖_∞ = ‖(1/n) Σ X_i(M) Y_i‖_∞.
    let mut gamma = vec![0.0; m];
    s.for_each(model, &vec![0.0; m], |w, x, y, _| {
        for (g, xa) in gamma.iter_mut().zip(x) {
            *g += w * xa * y;
        }
    });
    let tol = 1e-10 * (1.0 + norm_inf(&gamma));
    let mut theta = vec![0.0; m];
    // Separation drives θ to infinity while the score decays below any
    // tolerance; the curvature then collapses relative to its value at 0.
    let scale = jhat_s(s, spec, model, &theta).trace() / m as f64;
    let finish = |theta: Vec<f64>, g: &[f64]| -> Result<Vec<f64>> {
        let (lo, _) = eig_extremes(&jhat_s(s, spec, model, &theta))?;
        if lo <= 1e-8 * scale {
            return Err(Error::NonConvergence { iterations: MAX_ITER, gradient: norm_inf(g) });
        }
        Ok(theta)
    };
    let mut f = objective_s(s, spec, model, &theta);
    for _ in 0..MAX_ITER {
        let g = zhat_s(s, spec, model, &theta);
        if norm_inf(&g) <= tol {
            return finish(theta, &g);
        }
        let h = jhat_s(s, spec, model, &theta);
        let step = solve_spd(&h, &g)?;
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        // Newton decrement at rounding level: the objective can no longer
        // rank candidates, and the full step is safe in the quadratic regime.
        if slope <= 1e-12 * (1.0 + f.abs()) {
            theta = theta.iter().zip(&step).map(|(a, b)| a - b).collect();
            f = objective_s(s, spec, model, &theta);
            continue;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, b)| a - t * b).collect();
            let fc = objective_s(s, spec, model, &cand);
            if fc.is_finite() && fc <= f - 1e-4 * t * slope {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No decrease representable in floating point: take the full
            // Newton step and let the gradient test decide.
            theta = theta.iter().zip(&step).map(|(a, b)| a - b).collect();
            f = objective_s(s, spec, model, &theta);
        }
    }
    let g = zhat_s(s, spec, model, &theta);
    if norm_inf(&g) <= tol {
        return finish(theta, &g);
    }
    Err(Error::NonConvergence { iterations: MAX_ITER, gradient: norm_inf(&g) })
}

/// Minimizer of the empirical objective over `θ ∈ R^{|M|}` by damped Newton
/// (Armijo step halving). `NonConvergence` usually means separation.
pub fn fit_mest(d: &Dataset, spec: &LossSpec, model: &ModelIndex) -> Result<Vec<f64>> {
    model.check_dim(d.p())?;
    fit_s(Sample { data: d, weights: None }, spec, model)
}

/// As [`fit_mest`] with observation weights (nonnegative, summing to one).
pub fn fit_mest_weighted(d: &Dataset, weights: &[f64], spec: &LossSpec, model: &ModelIndex) -> Result<Vec<f64>> {
    model.check_dim(d.p())?;
    check_weights(d, weights)?;
    fit_s(Sample { data: d, weights: Some(weights) }, spec, model)
}

fn check_weights(d: &Dataset, w: &[f64]) -> Result<()> {
    if w.len() != d.n() {
        return Err(Error::DimensionMismatch { expected: d.n(), got: w.len() });
    }
    if w.iter().any(|v| !(*v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::input("observation weights must be nonnegative and sum to one"));
    }
    Ok(())
}

/// `δ = ‖Ĵ(β)^{-1} Ẑ(β)‖₂` at the target.
pub fn delta_nm(d: &Dataset, spec: &LossSpec, model: &ModelIndex, target: &[f64]) -> Result<f64> {
    let z = zhat(d, spec, model, target)?;
    let j = jhat(d, spec, model, target)?;
    Ok(norm2(&solve_spd(&j, &z)?))
}

/// Target `β_{n,M}` with the population curvature `J̄(β)` and, for simulated
/// targets, a standard error of `β` (Euclidean norm scale).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MestTarget {
    pub beta: Vec<f64>,
    pub jbar: SymmetricMatrix,
    pub stderr: Option<f64>,
}

/// Exact target for a covariate law on finitely many support points. All
/// three losses depend on `y` only through `E[Y | x]` up to `θ`-free terms,
/// so the population objective is the weighted objective with `y` replaced
/// by the conditional mean.
pub fn population_target(
    support: &Dataset,
    probs: &[f64],
    spec: &LossSpec,
    model: &ModelIndex,
) -> Result<MestTarget> {
    let beta = fit_mest_weighted(support, probs, spec, model)?;
    let jbar = jhat_s(Sample { data: support, weights: Some(probs) }, spec, model, &beta);
    Ok(MestTarget { beta, jbar, stderr: None })
}

/// Target fitted on a large independent sample. The standard error uses the
/// sandwich covariance `J^{-1} V J^{-1} / N`.
pub fn sample_target(big: &Dataset, spec: &LossSpec, model: &ModelIndex) -> Result<MestTarget> {
    let beta = fit_mest(big, spec, model)?;
    let s = Sample { data: big, weights: None };
    let jbar = jhat_s(s, spec, model, &beta);
    let m = model.len();
    let mut v = SymmetricMatrix::zeros(m);
    s.for_each(model, &beta, |w, x, y, u| {
        let c = spec.h(x) * spec.loss.d1(y, u);
        for a in 0..m {
            for b in 0..=a {
                v.add_at(a, b, w * c * c * x[a] * x[b]);
            }
        }
    });
    let chol = Cholesky::factor(&jbar)?;
    // trace(J^{-1} V J^{-1}) = Σ_a e_aᵀ J^{-1} V J^{-1} e_a.
    let mut tr = 0.0;
    for a in 0..m {
        let mut e = vec![0.0; m];
        e[a] = 1.0;
        let col = chol.solve(&e);
        tr += v.quad_form(&col);
    }
    Ok(MestTarget { beta, jbar, stderr: Some((tr / big.n() as f64).sqrt()) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MEstRecord {
    pub model: ModelIndex,
    pub beta_hat: Option<Vec<f64>>,
    pub target: Vec<f64>,
    pub delta: f64,
    /// `max_i C₊(2‖X_i(M)‖δ)` with the exact `C₊`.
    pub c_plus_max: f64,
    /// The same with the `exp(3u)` bound.
    pub c_plus_bound_max: f64,
    pub event: bool,
    pub event_with_bound: bool,
    pub error_norm: f64,
    pub sandwich_lower: Outcome,
    pub sandwich_upper: Outcome,
    pub rep_lhs: f64,
    pub rep_rhs: f64,
    pub rep: Outcome,
    /// `‖Ĵ − J̄‖_op / λ_min(J̄) + (max C₊ − 1)`.
    pub big_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MEstReport {
    pub loss: Loss,
    pub records: Vec<MEstRecord>,
}

impl MEstReport {
    /// The simultaneous event over the whole model class.
    pub fn event_all(&self) -> bool {
        self.records.iter().all(|r| r.event)
    }

    pub fn violations(&self) -> usize {
        self.records
            .iter()
            .map(|r| {
                [r.sandwich_lower, r.sandwich_upper, r.rep].iter().filter(|o| **o == Outcome::Violated).count()
            })
            .sum()
    }

    pub fn checked(&self) -> usize {
        self.records.iter().filter(|r| r.rep == Outcome::Holds || r.rep == Outcome::Violated).count()
    }

    /// CSV: `theorem,model,lhs,rhs,holds,slack,event`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["theorem", "model", "lhs", "rhs", "holds", "slack", "event"])?;
        for r in &self.records {
            let rows = [
                ("mest_sandwich_lower", r.delta / 2.0, r.error_norm, r.sandwich_lower),
                ("mest_sandwich_upper", r.error_norm, 2.0 * r.delta, r.sandwich_upper),
                ("mest_representation", r.rep_lhs, r.rep_rhs, r.rep),
            ];
            for (name, lhs, rhs, o) in rows {
                wr.write_record([
                    name.to_string(),
                    r.model.to_string(),
                    lhs.to_string(),
                    rhs.to_string(),
                    o.label().to_string(),
                    (rhs - lhs).to_string(),
                    r.event.to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Checks the sandwich and representation inequalities for every model in
/// `class`. Models whose event fails, or whose simulated target is not
/// precise to 1% of `δ`, are reported as not applicable.
pub fn check_mest_bounds<T>(d: &Dataset, spec: &LossSpec, class: &ModelClass, targets: T) -> Result<MEstReport>
where
    T: Fn(&ModelIndex) -> Result<MestTarget> + Sync + Send,
{
    if class.p() != d.p() {
        return Err(Error::DimensionMismatch { expected: d.p(), got: class.p() });
    }
    let records = class.par_map(|m| model_record(d, spec, m, &targets(m)?))?;
    Ok(MEstReport { loss: spec.loss, records: records.into_iter().collect::<Result<_>>()? })
}

fn model_record(d: &Dataset, spec: &LossSpec, m: &ModelIndex, t: &MestTarget) -> Result<MEstRecord> {
    let beta = &t.beta;
    let z = zhat(d, spec, m, beta)?;
    let j = jhat(d, spec, m, beta)?;
    let delta = norm2(&solve_spd(&j, &z)?);
    let mut row_norm_max: f64 = 0.0;
    for i in 0..d.n() {
        let x = m.gather(d.row(i));
        row_norm_max = row_norm_max.max(norm2(&x));
    }
    let u = 2.0 * row_norm_max * delta;
    let c_plus_max = spec.loss.c_plus(u);
    let c_plus_bound_max = spec.loss.c_plus_bound(u);
    let event = c_plus_max <= 1.5;
    let precise = t.stderr.is_none_or(|se| se <= 0.01 * delta);

    let beta_hat = fit_mest(d, spec, m).ok();
    let (lam_min, _) = eig_extremes(&t.jbar)?;
    let big_delta = op_norm(&j.sub(&t.jbar)?)? / lam_min + (c_plus_max - 1.0);
    let rep_rhs = big_delta * delta;

    let (error_norm, rep_lhs) = match &beta_hat {
        Some(b) => {
            let diff = sub(b, beta);
            let newton = solve_spd(&t.jbar, &z)?;
            let rep: Vec<f64> = diff.iter().zip(&newton).map(|(a, c)| a + c).collect();
            (norm2(&diff), norm2(&rep))
        }
        None => (f64::NAN, f64::NAN),
    };
    let judge = |lhs: f64, rhs: f64| {
        if !(event && precise) {
            Outcome::NotApplicable
        } else if beta_hat.is_none() {
            // On the event a root exists; failing to find it is a violation.
            Outcome::Violated
        } else if within(lhs, rhs) {
            Outcome::Holds
        } else {
            Outcome::Violated
        }
    };
    Ok(MEstRecord {
        model: m.clone(),
        beta_hat: beta_hat.clone(),
        target: beta.clone(),
        delta,
        c_plus_max,
        c_plus_bound_max,
        event,
        event_with_bound: c_plus_bound_max <= 1.5,
        error_norm,
        sandwich_lower: judge(delta / 2.0, error_norm),
        sandwich_upper: judge(error_norm, 2.0 * delta),
        rep_lhs,
        rep_rhs,
        rep: judge(rep_lhs, rep_rhs),
        big_delta,
    })
}

/// Bounded binary-response design: `X ∈ {±1}^p` uniform and
/// `P(Y = 1 | x) = σ(η(x))` with an interaction the fitted models cannot
/// represent, so every model is misspecified.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct LogisticDesign {
    pub p: usize,
    pub main: Vec<f64>,
    /// `(j, l, c)`: adds `c · x_j · x_l` to the linear predictor.
    pub interactions: Vec<(usize, usize, f64)>,
}

impl LogisticDesign {
    pub fn default_for(p: usize) -> Self {
        let mut main = vec![0.0; p];
        for (j, v) in [0.4, -0.3, 0.0, 0.2].into_iter().enumerate().take(p) {
            main[j] = v;
        }
        let interactions = if p >= 3 { vec![(0, 2, 0.25)] } else { Vec::new() };
        Self { p, main, interactions }
    }

    fn eta(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.main.iter().zip(x).map(|(a, b)| a * b).sum();
        lin + self.interactions.iter().map(|&(j, l, c)| c * x[j] * x[l]).sum::<f64>()
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 || self.p > 20 || self.main.len() != self.p {
            return Err(Error::input("logistic design needs 1 <= p <= 20 main effects"));
        }
        if self.interactions.iter().any(|&(j, l, _)| j >= self.p || l >= self.p) {
            return Err(Error::input("interaction index out of range"));
        }
        Ok(())
    }

    /// All `2^p` covariate points with `y = P(Y = 1 | x)` and equal weights.
    pub fn support(&self) -> Result<(Dataset, Vec<f64>)> {
        self.validate()?;
        let n = 1usize << self.p;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|b| (0..self.p).map(|j| if b >> j & 1 == 1 { 1.0 } else { -1.0 }).collect())
            .collect();
        let y = rows.iter().map(|x| sigmoid(self.eta(x))).collect();
        Ok((Dataset::from_rows(&rows, y)?, vec![1.0 / n as f64; n]))
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = SimRng::new(seed, &[0x1061, i as u64]);
            let x: Vec<f64> = (0..self.p).map(|_| rng.sign()).collect();
            y.push(f64::from(u8::from(rng.uniform() < sigmoid(self.eta(&x)))));
            rows.push(x);
        }
        Dataset::from_rows(&rows, y)
    }

    /// Exact per-model targets and population curvature.
    pub fn targets(&self, spec: &LossSpec) -> Result<impl Fn(&ModelIndex) -> Result<MestTarget> + Sync + Send> {
        let (support, probs) = self.support()?;
        let spec = *spec;
        Ok(move |m: &ModelIndex| population_target(&support, &probs, &spec, m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_logistic_pieces() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn c_plus_is_attained_in_the_limit() {
        // L″(t − u) / L″(t) → eᵘ as t → ∞ for logistic loss.
        let u = 0.3;
        let t = 30.0;
        let r = Loss::Logistic.d2(0.0, t - u) / Loss::Logistic.d2(0.0, t);
        assert!((r - Loss::Logistic.c_plus(u)).abs() < 1e-9);
        assert!(Loss::Logistic.c_plus(u) <= Loss::Logistic.c_plus_bound(u));
    }
}

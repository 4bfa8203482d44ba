//! Machine-precision checks of the deterministic inequalities linking two
//! regression pairs `(Σ_1, Γ_1)` (think: estimate) and `(Σ_2, Γ_2)` (think:
//! target), per model and uniformly over `|M| ≤ k`.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::linalg::{norm1, norm2, solve_spd, sub, ModelIndex, SymmetricMatrix};
use crate::models::ModelClass;
use crate::norms::{dvec, lambda_sparse, rip, strength, Norm};
use crate::regression::{beta_map, influence_term, RegressionPair};
use crate::rng::SimRng;

/// Relative slack covering floating point solve error only.
pub const SLACK: f64 = 1e-9;

/// `lhs ≤ rhs + 1e-9 · (1 + |rhs|)`.
pub fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + SLACK * (1.0 + rhs.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// `‖β_1 − β_2‖_2 ≤ (D + RIP·‖β_2‖_2) / (Λ − RIP)`.
    UniformL2,
    /// The L2 bound times `|M|^{1/2}`, against `‖β_1 − β_2‖_1`.
    UniformL1,
    /// Representation error `≤ (RIP/Λ) ‖β_1 − β_2‖_2`.
    LinRepPointwise,
    /// Representation error `≤ (RIP/Λ) (D + RIP·S_{2,k}) / (Λ − RIP)`.
    LinRepUniform,
    /// `½ ‖u_M‖_2 ≤ ‖β_1 − β_2‖_2` when `RIP ≤ Λ/2`.
    SandwichLower,
    /// `‖β_1 − β_2‖_2 ≤ 2 ‖u_M‖_2` when `RIP ≤ Λ/2`.
    SandwichUpper,
    /// Representation error `≥ Λ(k, Σ_1 − Σ_2) ‖β_1 − β_2‖_2 / RIP(k, Σ_2)`.
    LowerBound,
}

impl Theorem {
    pub fn id(self) -> &'static str {
        match self {
            Theorem::UniformL2 => "uniform_l2",
            Theorem::UniformL1 => "uniform_l1",
            Theorem::LinRepPointwise => "linrep_pointwise",
            Theorem::LinRepUniform => "linrep_uniform",
            Theorem::SandwichLower => "sandwich_lower",
            Theorem::SandwichUpper => "sandwich_upper",
            Theorem::LowerBound => "lower_bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Holds,
    Violated,
    /// Precondition fails; the inequality makes no claim.
    NotApplicable,
    /// Precondition holds only with equality, or the bound is trivial.
    Vacuous,
    Singular,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Holds => "true",
            Outcome::Violated => "false",
            Outcome::NotApplicable => "not-applicable",
            Outcome::Vacuous => "vacuous",
            Outcome::Singular => "singular",
        }
    }
}

/// One model's comparison. `lhs` is always the side claimed to be smaller.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRecord {
    pub model: ModelIndex,
    pub lhs: f64,
    pub rhs: f64,
    pub outcome: Outcome,
    /// `rhs − lhs`; negative only for violations beyond rounding.
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionStatus {
    Satisfied,
    /// Holds with equality; the bound's denominator vanishes.
    Boundary,
    Violated,
}

/// `RIP(k, Σ_1 − Σ_2)` against `factor · Λ(k; Σ_2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Precondition {
    pub rip: f64,
    pub lambda: f64,
    pub factor: f64,
    pub status: PreconditionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub precondition: Option<Precondition>,
    pub records: Vec<BoundRecord>,
}

impl BoundReport {
    pub fn violations(&self) -> usize {
        self.records.iter().filter(|r| r.outcome == Outcome::Violated).count()
    }

    pub fn all_hold(&self) -> bool {
        self.violations() == 0
    }

    pub fn checked(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.outcome, Outcome::Holds | Outcome::Violated))
            .count()
    }

    /// Smallest `rhs − lhs` among checked models.
    pub fn worst_slack(&self) -> Option<f64> {
        self.records
            .iter()
            .filter(|r| matches!(r.outcome, Outcome::Holds | Outcome::Violated))
            .map(|r| r.slack)
            .min_by(f64::total_cmp)
    }
}

/// Quantities shared by every check on one `(k, pair1, pair2)`.
#[derive(Debug, Clone, Serialize)]
pub struct PairContext {
    pub k: usize,
    pub rip: f64,
    pub d: f64,
    pub lambda: f64,
    pub s2k: f64,
}

impl PairContext {
    pub fn new(k: usize, pair1: &RegressionPair, pair2: &RegressionPair) -> Result<Self> {
        let delta = pair1.sigma.sub(&pair2.sigma)?;
        Ok(Self {
            k,
            rip: rip(k, &delta)?.value,
            d: dvec(k, &sub(&pair1.gamma, &pair2.gamma))?.value,
            lambda: lambda_sparse(k, &pair2.sigma)?.value,
            s2k: strength(Norm::L2, k, pair2)?.value,
        })
    }

    fn precondition(&self, factor: f64) -> Precondition {
        let limit = factor * self.lambda;
        let status = if self.rip < limit {
            PreconditionStatus::Satisfied
        } else if self.rip == limit {
            PreconditionStatus::Boundary
        } else {
            PreconditionStatus::Violated
        };
        Precondition { rip: self.rip, lambda: self.lambda, factor, status }
    }

    /// `(D + RIP · ‖β_2‖) / (Λ − RIP)`.
    fn l2_rhs(&self, beta2_norm: f64) -> f64 {
        (self.d + self.rip * beta2_norm) / (self.lambda - self.rip)
    }
}

/// Per-model terms. `rep = βdiff − u` with `u = Σ_2(M)^{-1}(Γ_1(M) − Σ_1(M)β_2)`.
struct ModelTerms {
    beta2: Vec<f64>,
    diff: Vec<f64>,
    u: Vec<f64>,
    rep: Vec<f64>,
}

fn model_terms(pair1: &RegressionPair, pair2: &RegressionPair, m: &ModelIndex) -> Option<ModelTerms> {
    let beta1 = beta_map(pair1, m).ok()?;
    let beta2 = beta_map(pair2, m).ok()?;
    let u = influence_term(pair1, pair2, &beta2, m).ok()?;
    let diff = sub(&beta1, &beta2);
    let rep = sub(&diff, &u);
    Some(ModelTerms { beta2, diff, u, rep })
}

fn record(model: &ModelIndex, lhs: f64, rhs: f64) -> BoundRecord {
    let outcome = if within(lhs, rhs) { Outcome::Holds } else { Outcome::Violated };
    BoundRecord { model: model.clone(), lhs, rhs, outcome, slack: rhs - lhs }
}

fn skipped(model: &ModelIndex, outcome: Outcome) -> BoundRecord {
    BoundRecord { model: model.clone(), lhs: f64::NAN, rhs: f64::NAN, outcome, slack: f64::NAN }
}

fn run<F>(
    theorem: Theorem,
    precondition: Option<Precondition>,
    k: usize,
    pair1: &RegressionPair,
    pair2: &RegressionPair,
    f: F,
) -> Result<BoundReport>
where
    F: Fn(&ModelIndex, &ModelTerms) -> BoundRecord + Sync + Send,
{
    let class = ModelClass::up_to(pair1.p(), k)?;
    let gate = precondition.map(|p| p.status);
    let records = class.par_map(|m| match gate {
        Some(PreconditionStatus::Violated) => skipped(m, Outcome::NotApplicable),
        Some(PreconditionStatus::Boundary) => skipped(m, Outcome::Vacuous),
        _ => match model_terms(pair1, pair2, m) {
            Some(t) => f(m, &t),
            None => skipped(m, Outcome::Singular),
        },
    })?;
    Ok(BoundReport { theorem, precondition, records })
}

pub fn check_l2(k: usize, pair1: &RegressionPair, pair2: &RegressionPair) -> Result<BoundReport> {
    let ctx = PairContext::new(k, pair1, pair2)?;
    check_l2_with(&ctx, pair1, pair2)
}

pub fn check_l2_with(ctx: &PairContext, p1: &RegressionPair, p2: &RegressionPair) -> Result<BoundReport> {
    run(Theorem::UniformL2, Some(ctx.precondition(1.0)), ctx.k, p1, p2, |m, t| {
        record(m, norm2(&t.diff), ctx.l2_rhs(norm2(&t.beta2)))
    })
}

pub fn check_l1(k: usize, pair1: &RegressionPair, pair2: &RegressionPair) -> Result<BoundReport> {
    let ctx = PairContext::new(k, pair1, pair2)?;
    check_l1_with(&ctx, pair1, pair2)
}

pub fn check_l1_with(ctx: &PairContext, p1: &RegressionPair, p2: &RegressionPair) -> Result<BoundReport> {
    run(Theorem::UniformL1, Some(ctx.precondition(1.0)), ctx.k, p1, p2, |m, t| {
        let rhs = (m.len() as f64).sqrt() * ctx.l2_rhs(norm2(&t.beta2));
        record(m, norm1(&t.diff), rhs)
    })
}

/// Pointwise and uniform representation bounds plus the largest entrywise
/// deviation from the exact identity `rep = Σ_2(M)^{-1}(Σ_2(M) − Σ_1(M)) βdiff`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinRepReport {
    pub pointwise: BoundReport,
    pub uniform: BoundReport,
    pub identity_max_err: f64,
}

pub fn check_linrep(k: usize, pair1: &RegressionPair, pair2: &RegressionPair) -> Result<LinRepReport> {
    let ctx = PairContext::new(k, pair1, pair2)?;
    check_linrep_with(&ctx, pair1, pair2)
}

pub fn check_linrep_with(ctx: &PairContext, p1: &RegressionPair, p2: &RegressionPair) -> Result<LinRepReport> {
    let pre = Some(ctx.precondition(1.0));
    let ratio = ctx.rip / ctx.lambda;
    let pointwise = run(Theorem::LinRepPointwise, pre, ctx.k, p1, p2, |m, t| {
        record(m, norm2(&t.rep), ratio * norm2(&t.diff))
    })?;
    let uniform_rhs = ratio * (ctx.d + ctx.rip * ctx.s2k) / (ctx.lambda - ctx.rip);
    let uniform = run(Theorem::LinRepUniform, pre, ctx.k, p1, p2, |m, t| {
        record(m, norm2(&t.rep), uniform_rhs)
    })?;
    let class = ModelClass::up_to(p1.p(), ctx.k)?;
    let errs = class.par_map(|m| identity_error(p1, p2, m).unwrap_or(0.0))?;
    let identity_max_err = errs.into_iter().fold(0.0, f64::max);
    Ok(LinRepReport { pointwise, uniform, identity_max_err })
}

/// Max entrywise gap between the representation error vector and
/// `Σ_2(M)^{-1}(Σ_2(M) − Σ_1(M)) βdiff`; `None` for singular models.
pub fn identity_error(p1: &RegressionPair, p2: &RegressionPair, m: &ModelIndex) -> Option<f64> {
    let t = model_terms(p1, p2, m)?;
    let s1 = p1.sigma.submatrix(m).ok()?;
    let s2 = p2.sigma.submatrix(m).ok()?;
    let rhs = solve_spd(&s2, &s2.sub(&s1).ok()?.matvec(&t.diff)).ok()?;
    Some(t.rep.iter().zip(&rhs).fold(0.0, |acc, (a, b)| acc.max((a - b).abs())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub lower: BoundReport,
    pub upper: BoundReport,
}

pub fn check_sandwich(k: usize, pair1: &RegressionPair, pair2: &RegressionPair) -> Result<SandwichReport> {
    let ctx = PairContext::new(k, pair1, pair2)?;
    check_sandwich_with(&ctx, pair1, pair2)
}

pub fn check_sandwich_with(ctx: &PairContext, p1: &RegressionPair, p2: &RegressionPair) -> Result<SandwichReport> {
    // Equality RIP = Λ/2 still gives finite bounds.
    let mut pre = ctx.precondition(0.5);
    if pre.status == PreconditionStatus::Boundary {
        pre.status = PreconditionStatus::Satisfied;
    }
    let lower = run(Theorem::SandwichLower, Some(pre), ctx.k, p1, p2, |m, t| {
        record(m, 0.5 * norm2(&t.u), norm2(&t.diff))
    })?;
    let upper = run(Theorem::SandwichUpper, Some(pre), ctx.k, p1, p2, |m, t| {
        record(m, norm2(&t.diff), 2.0 * norm2(&t.u))
    })?;
    Ok(SandwichReport { lower, upper })
}

/// Lower bound on the representation error; vacuous unless
/// `Λ(k, Σ_1 − Σ_2) > 0`.
pub fn check_lower(k: usize, pair1: &RegressionPair, pair2: &RegressionPair) -> Result<BoundReport> {
    let delta = pair1.sigma.sub(&pair2.sigma)?;
    let lam_delta = lambda_sparse(k, &delta)?.value;
    let c_star = 1.0 / rip(k, &pair2.sigma)?.value;
    let class = ModelClass::up_to(pair1.p(), k)?;
    let records = class.par_map(|m| {
        if !(lam_delta > 0.0) {
            return skipped(m, Outcome::Vacuous);
        }
        match model_terms(pair1, pair2, m) {
            Some(t) => record(m, c_star * lam_delta * norm2(&t.diff), norm2(&t.rep)),
            None => skipped(m, Outcome::Singular),
        }
    })?;
    Ok(BoundReport { theorem: Theorem::LowerBound, precondition: None, records })
}

/// Every check on one pair of pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremSuite {
    pub reports: Vec<BoundReport>,
    pub identity_max_err: f64,
}

impl TheoremSuite {
    pub fn run(k: usize, pair1: &RegressionPair, pair2: &RegressionPair) -> Result<Self> {
        let ctx = PairContext::new(k, pair1, pair2)?;
        let lin = check_linrep_with(&ctx, pair1, pair2)?;
        let sw = check_sandwich_with(&ctx, pair1, pair2)?;
        let reports = vec![
            check_l2_with(&ctx, pair1, pair2)?,
            check_l1_with(&ctx, pair1, pair2)?,
            lin.pointwise,
            lin.uniform,
            sw.lower,
            sw.upper,
            check_lower(k, pair1, pair2)?,
        ];
        Ok(Self { reports, identity_max_err: lin.identity_max_err })
    }

    pub fn violations(&self) -> usize {
        self.reports.iter().map(BoundReport::violations).sum()
    }
}

/// CSV: `theorem,model,lhs,rhs,holds,slack`.
pub fn write_csv<'a, W: Write>(reports: impl IntoIterator<Item = &'a BoundReport>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["theorem", "model", "lhs", "rhs", "holds", "slack"])?;
    for rep in reports {
        for r in &rep.records {
            wr.write_record([
                rep.theorem.id().to_string(),
                r.model.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.outcome.label().to_string(),
                r.slack.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// How far the random perturbation may push `RIP(k, Σ_1 − Σ_2)` relative to `Λ(k; Σ_2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `RIP ≤ 0.95 · Λ/2`: every check applies.
    Half,
    /// `RIP ≤ 0.95 · Λ`: the sandwich may not apply.
    Full,
    /// As `Half`, with a positive definite perturbation so that the lower
    /// bound is informative.
    Definite,
}

/// Random `(pair1, pair2)` with the precondition holding by construction:
/// `Σ_2 = BᵀB/(2p) + ½I` from `2p` Gaussian rows, `Σ_1 = Σ_2 + εE` with
/// symmetric Gaussian `E` scaled so that `RIP(k, εE) = u · Λ(k; Σ_2) · c`,
/// `u ~ U(0.1, 0.95)`, `c = ½` or `1` per regime. `Definite` replaces `E`
/// by `CᵀC/(2p) + 0.1·I`.
pub fn random_test_pairs(p: usize, k: usize, seed: u64, regime: Regime) -> Result<(RegressionPair, RegressionPair)> {
    let mut rng = SimRng::new(seed, &[0xB0_0D, p as u64, k as u64]);
    let m = 2 * p;
    let b: Vec<f64> = (0..m * p).map(|_| rng.normal()).collect();
    let sigma2 = SymmetricMatrix::from_fn(p, |i, j| {
        let s: f64 = (0..m).map(|r| b[r * p + i] * b[r * p + j]).sum();
        s / m as f64 + if i == j { 0.5 } else { 0.0 }
    });
    let e = if regime == Regime::Definite {
        let c: Vec<f64> = (0..m * p).map(|_| rng.normal()).collect();
        SymmetricMatrix::from_fn(p, |i, j| {
            let s: f64 = (0..m).map(|r| c[r * p + i] * c[r * p + j]).sum();
            s / m as f64 + if i == j { 0.1 } else { 0.0 }
        })
    } else {
        let mut e = SymmetricMatrix::zeros(p);
        for i in 0..p {
            for j in 0..=i {
                e.set(i, j, rng.normal());
            }
        }
        e
    };
    let lam = lambda_sparse(k, &sigma2)?.value;
    let rip_e = rip(k, &e)?.value;
    let u = 0.1 + 0.85 * rng.uniform();
    let c = match regime {
        Regime::Half | Regime::Definite => 0.5,
        Regime::Full => 1.0,
    };
    let eps = u * c * lam / rip_e;
    let sigma1 = sigma2.add(&e.scale(eps))?;
    let gamma2: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
    let gamma1: Vec<f64> = gamma2.iter().map(|g| g + 0.3 * rng.normal()).collect();
    Ok((RegressionPair::new(sigma1, gamma1)?, RegressionPair::new(sigma2, gamma2)?))
}

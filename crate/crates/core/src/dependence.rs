//! Functional dependence measures of causal moving-average specifications,
//! estimated by coupled replay.
//!
//! For `W_i = G(…, ε_{i−1}, ε_i)` the coupled value `W_{i,s}` swaps `ε_{i−s}`
//! for an independent copy. With the horizon truncated at `S`, the process
//! is an exact finite moving average, so `δ_s = 0` for `s > S` and every tail
//! sum `Δ_m = Σ_{s=m..S} δ_s` is finite. Stationarity within a regime lets a
//! single index stand in for `max_i`; two-regime specifications are evaluated
//! per regime and the larger value kept.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datagen::{regime_moments, CausalSpec, Truncation};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::par::map_indices;
use crate::rng::SimRng;

const TAG_DEP: u64 = 0xDE;
const TAG_THETA: u64 = 0x7E;
const CHUNK: usize = 256;

/// Moment orders used for the ψ_α norm. The supremum over `r ≥ 2` is taken
/// over this grid only, so reported ψ_α values are lower bounds.
pub const R_GRID: [f64; 5] = [2.0, 3.0, 4.0, 6.0, 8.0];
pub const MIN_REPS: usize = 1000;
/// One-sided slack, in standard errors, for inequalities between estimates.
pub const CHECK_SE: f64 = 4.0;
/// Two-sided tolerance, in standard errors, for estimate-versus-formula checks.
pub const MATCH_SE: f64 = 3.0;

/// A scalar function of `W = (X, Y)`; index `p` is the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Coord { j: usize },
    Linear { theta: Vec<f64> },
    Product { a: usize, b: usize },
}

impl Observable {
    #[inline]
    fn eval(&self, w: &[f64]) -> f64 {
        match self {
            Observable::Coord { j } => w[*j],
            Observable::Linear { theta } => dot(theta, &w[..theta.len()]),
            Observable::Product { a, b } => w[*a] * w[*b],
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        match self {
            Observable::Coord { j } if *j > p => Err(Error::IndexOutOfRange { index: *j, dim: p + 1 }),
            Observable::Product { a, b } if (*a).max(*b) > p => {
                Err(Error::IndexOutOfRange { index: (*a).max(*b), dim: p + 1 })
            }
            Observable::Linear { theta } if theta.len() != p => {
                Err(Error::DimensionMismatch { expected: p, got: theta.len() })
            }
            _ => Ok(()),
        }
    }

    /// Short name used in CSV output; `idx` numbers linear combinations.
    pub fn label(&self, idx: usize) -> String {
        match self {
            Observable::Coord { j } => j.to_string(),
            Observable::Linear { .. } => format!("theta{idx}"),
            Observable::Product { a, b } => format!("{a}*{b}"),
        }
    }
}

/// `W(0), …, W(p)`.
pub fn coordinates(p: usize) -> Vec<Observable> {
    (0..=p).map(|j| Observable::Coord { j }).collect()
}

/// Exact `E f(W)` in one regime.
fn exact_mean(spec: &CausalSpec, obs: &Observable, regime: usize) -> f64 {
    let p = spec.p;
    let mm = regime_moments(spec, regime);
    let mu: Vec<f64> = spec.mean.clone().unwrap_or_else(|| vec![0.0; p]);
    match obs {
        Observable::Coord { j } if *j == p => mm.mean_y,
        Observable::Coord { j } => mu[*j],
        Observable::Linear { theta } => dot(theta, &mu),
        Observable::Product { a, b } => match (*a == p, *b == p) {
            (true, true) => mm.mean_y2,
            (true, false) => mm.gamma[*b],
            (false, true) => mm.gamma[*a],
            (false, false) => mm.second.get(*a, *b),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { value: 0.0, stderr: 0.0 };

    /// `(mean |d|^r)^{1/r}` from the sums of `|d|^r` and `|d|^{2r}`, with a
    /// delta-method standard error.
    fn from_power_sums(sum: f64, sum2: f64, reps: usize, r: f64) -> Self {
        let n = reps as f64;
        let m = sum / n;
        if m <= 0.0 {
            return Estimate::ZERO;
        }
        let var = ((sum2 / n - m * m) * n / (n - 1.0)).max(0.0);
        let se_m = (var / n).sqrt();
        let value = m.powf(1.0 / r);
        Estimate { value, stderr: value * se_m / (r * m) }
    }

    fn scale(self, c: f64) -> Self {
        Estimate { value: c.abs() * self.value, stderr: c.abs() * self.stderr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Replace `ε_{i−s}` by an independent draw.
    #[default]
    Independent,
    /// Replace `ε_{i−s}` by itself; every distance is exactly zero.
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepConfig {
    pub reps: usize,
    pub seed: u64,
    pub r_grid: Vec<f64>,
    pub nu_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub coupling: Coupling,
}

impl Default for DepConfig {
    fn default() -> Self {
        Self {
            reps: 20_000,
            seed: 0,
            r_grid: R_GRID.to_vec(),
            nu_grid: vec![0.5, 1.0, 2.0],
            alpha_grid: vec![1.0, 2.0],
            coupling: Coupling::Independent,
        }
    }
}

impl DepConfig {
    fn validate(&self) -> Result<()> {
        if self.reps < MIN_REPS {
            return Err(Error::input(format!("at least {MIN_REPS} coupled replications are required")));
        }
        if self.r_grid.is_empty() || self.r_grid.iter().any(|r| !(r.is_finite() && *r >= 1.0)) {
            return Err(Error::input("moment orders must be finite and at least 1"));
        }
        if self.nu_grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::input("nu must be finite and nonnegative"));
        }
        if self.alpha_grid.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::input("alpha must be positive"));
        }
        Ok(())
    }
}

/// `sup_m (m+1)^ν Δ_{m,r}` per moment order and observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustedNorm {
    pub nu: f64,
    /// `[r][j]`.
    pub values: Vec<Vec<Estimate>>,
}

/// `max_{r ∈ grid} r^{−1/α} ‖·‖_{r,ν}` per observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiNorm {
    pub alpha: f64,
    pub nu: f64,
    pub values: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceProfile {
    pub observables: Vec<Observable>,
    pub r_grid: Vec<f64>,
    pub truncation: Truncation,
    pub reps: usize,
    pub seed: u64,
    /// `δ_{s,r,j}` for `s = 0..=S`.
    pub delta: Vec<Vec<Vec<Estimate>>>,
    /// `Δ_{m,r,j}` for `m = 0..=S`; standard errors add up the lag terms.
    pub tail: Vec<Vec<Vec<Estimate>>>,
    /// `‖f(W) − E f(W)‖_r`, `[r][j]`.
    pub moment: Vec<Vec<Estimate>>,
    /// `max_regime |E f(W)|`.
    pub mean_abs: Vec<f64>,
    pub adjusted: Vec<AdjustedNorm>,
    pub psi: Vec<PsiNorm>,
}

#[derive(Clone)]
struct Acc {
    pow: Vec<f64>,
    pow2: Vec<f64>,
    mom: Vec<f64>,
    mom2: Vec<f64>,
}

impl Acc {
    fn zeros(lagged: usize, moments: usize) -> Self {
        Self { pow: vec![0.0; lagged], pow2: vec![0.0; lagged], mom: vec![0.0; moments], mom2: vec![0.0; moments] }
    }

    fn absorb(&mut self, other: &Acc) {
        for (a, b) in [(&mut self.pow, &other.pow), (&mut self.pow2, &other.pow2), (&mut self.mom, &other.mom), (&mut self.mom2, &other.mom2)] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[inline]
fn power(x: f64, r: f64) -> f64 {
    if r.fract() == 0.0 && r <= 16.0 {
        x.powi(r as i32)
    } else {
        x.powf(r)
    }
}

/// Estimates every `δ_{s,r}` and centered moment for the given observables.
pub fn profile(spec: &CausalSpec, observables: &[Observable], cfg: &DepConfig) -> Result<DependenceProfile> {
    spec.validate()?;
    cfg.validate()?;
    if observables.is_empty() {
        return Err(Error::input("no observables requested"));
    }
    for o in observables {
        o.validate(spec.p)?;
    }
    let truncation = spec.truncation();
    let horizon = truncation.horizon;
    let coef = spec.coefficient_vector();
    let dim = spec.innovation_dim();
    let regimes = spec.regime_count();
    let nr = cfg.r_grid.len();
    let no = observables.len();
    let lagged = (horizon + 1) * nr * no;
    let moments = nr * no;
    let means: Vec<Vec<f64>> =
        (0..regimes).map(|g| observables.iter().map(|o| exact_mean(spec, o, g)).collect()).collect();

    let chunks = cfg.reps.div_ceil(CHUNK);
    let parts: Vec<Vec<Acc>> = map_indices(chunks, |c| {
        let mut acc = vec![Acc::zeros(lagged, moments); regimes];
        let mut eps = vec![0.0; (horizon + 1) * dim];
        let mut copy = vec![0.0; (horizon + 1) * dim];
        let mut u = vec![0.0; dim];
        let mut us = vec![0.0; dim];
        let mut w = Vec::with_capacity(spec.p + 1);
        let mut ws = Vec::with_capacity(spec.p + 1);
        let mut f = vec![0.0; no];
        for rep in c * CHUNK..((c + 1) * CHUNK).min(cfg.reps) {
            let mut rng = SimRng::new(cfg.seed, &[TAG_DEP, rep as u64]);
            spec.draw_innovation(&mut rng, &mut eps);
            match cfg.coupling {
                Coupling::Independent => spec.draw_innovation(&mut rng, &mut copy),
                Coupling::NoOp => copy.copy_from_slice(&eps),
            }
            u.iter_mut().for_each(|v| *v = 0.0);
            for (s, &a) in coef.iter().enumerate() {
                for (uk, ek) in u.iter_mut().zip(&eps[s * dim..(s + 1) * dim]) {
                    *uk += a * ek;
                }
            }
            for (g, acc) in acc.iter_mut().enumerate() {
                spec.observe(&u, g, &mut w);
                for (o, obs) in observables.iter().enumerate() {
                    f[o] = obs.eval(&w);
                    let z = (f[o] - means[g][o]).abs();
                    for (ri, &r) in cfg.r_grid.iter().enumerate() {
                        let v = power(z, r);
                        acc.mom[ri * no + o] += v;
                        acc.mom2[ri * no + o] += v * v;
                    }
                }
                for (s, &a) in coef.iter().enumerate() {
                    for k in 0..dim {
                        us[k] = u[k] + a * (copy[s * dim + k] - eps[s * dim + k]);
                    }
                    spec.observe(&us, g, &mut ws);
                    for (o, obs) in observables.iter().enumerate() {
                        let d = (f[o] - obs.eval(&ws)).abs();
                        if d == 0.0 {
                            continue;
                        }
                        for (ri, &r) in cfg.r_grid.iter().enumerate() {
                            let v = power(d, r);
                            let idx = (s * nr + ri) * no + o;
                            acc.pow[idx] += v;
                            acc.pow2[idx] += v * v;
                        }
                    }
                }
            }
        }
        acc
    });
    let mut total = vec![Acc::zeros(lagged, moments); regimes];
    for part in &parts {
        for (t, a) in total.iter_mut().zip(part) {
            t.absorb(a);
        }
    }

    let pick = |est: &[Estimate]| -> Estimate {
        est.iter().copied().fold(Estimate::ZERO, |best, e| if e.value > best.value { e } else { best })
    };
    let mut delta = vec![vec![vec![Estimate::ZERO; no]; nr]; horizon + 1];
    for (s, row) in delta.iter_mut().enumerate() {
        for (ri, col) in row.iter_mut().enumerate() {
            for (o, cell) in col.iter_mut().enumerate() {
                let idx = (s * nr + ri) * no + o;
                let per: Vec<Estimate> = total
                    .iter()
                    .map(|t| Estimate::from_power_sums(t.pow[idx], t.pow2[idx], cfg.reps, cfg.r_grid[ri]))
                    .collect();
                *cell = pick(&per);
            }
        }
    }
    let mut moment = vec![vec![Estimate::ZERO; no]; nr];
    for (ri, col) in moment.iter_mut().enumerate() {
        for (o, cell) in col.iter_mut().enumerate() {
            let idx = ri * no + o;
            let per: Vec<Estimate> = total
                .iter()
                .map(|t| Estimate::from_power_sums(t.mom[idx], t.mom2[idx], cfg.reps, cfg.r_grid[ri]))
                .collect();
            *cell = pick(&per);
        }
    }
    let tail = tail_sums(&delta);
    let mean_abs = (0..no).map(|o| means.iter().map(|m| m[o].abs()).fold(0.0, f64::max)).collect();

    let mut out = DependenceProfile {
        observables: observables.to_vec(),
        r_grid: cfg.r_grid.clone(),
        truncation,
        reps: cfg.reps,
        seed: cfg.seed,
        delta,
        tail,
        moment,
        mean_abs,
        adjusted: Vec::new(),
        psi: Vec::new(),
    };
    if out.r_index(2.0).is_ok() && out.r_index(4.0).is_ok() {
        out.adjusted_norms(&cfg.nu_grid, &cfg.alpha_grid)?;
    }
    Ok(out)
}

/// Backward cumulative sums, so `Δ_m = Σ_{s ≥ m} δ_s` holds term by term.
fn tail_sums(delta: &[Vec<Vec<Estimate>>]) -> Vec<Vec<Vec<Estimate>>> {
    let mut tail = delta.to_vec();
    for m in (0..delta.len().saturating_sub(1)).rev() {
        for ri in 0..delta[m].len() {
            for o in 0..delta[m][ri].len() {
                let next = tail[m + 1][ri][o];
                let cur = &mut tail[m][ri][o];
                cur.value += next.value;
                cur.stderr += next.stderr;
            }
        }
    }
    tail
}

impl DependenceProfile {
    pub fn horizon(&self) -> usize {
        self.truncation.horizon
    }

    pub fn r_index(&self, r: f64) -> Result<usize> {
        self.r_grid
            .iter()
            .position(|&x| x == r)
            .ok_or_else(|| Error::input(format!("moment order {r} is not on the profile grid")))
    }

    fn obs_index(&self, o: usize) -> Result<usize> {
        if o < self.observables.len() {
            Ok(o)
        } else {
            Err(Error::IndexOutOfRange { index: o, dim: self.observables.len() })
        }
    }

    /// `δ_{s,r}` of observable `o`; exactly zero beyond the horizon.
    pub fn delta_at(&self, s: usize, r: f64, o: usize) -> Result<Estimate> {
        let ri = self.r_index(r)?;
        let o = self.obs_index(o)?;
        Ok(self.delta.get(s).map_or(Estimate::ZERO, |d| d[ri][o]))
    }

    pub fn tail_at(&self, m: usize, r: f64, o: usize) -> Result<Estimate> {
        let ri = self.r_index(r)?;
        let o = self.obs_index(o)?;
        Ok(self.tail.get(m).map_or(Estimate::ZERO, |d| d[ri][o]))
    }

    /// `‖{f(W)}‖_{r,ν} = sup_m (m+1)^ν Δ_{m,r}`, exact over `m ≤ S` since the
    /// tail vanishes beyond. Returns the maximizing `m` as well.
    pub fn norm_with_argmax(&self, r: f64, o: usize, nu: f64) -> Result<(Estimate, usize)> {
        let ri = self.r_index(r)?;
        let o = self.obs_index(o)?;
        let mut best = (Estimate::ZERO, 0);
        for (m, t) in self.tail.iter().enumerate() {
            let e = t[ri][o].scale(((m + 1) as f64).powf(nu));
            if e.value > best.0.value {
                best = (e, m);
            }
        }
        Ok(best)
    }

    pub fn norm(&self, r: f64, o: usize, nu: f64) -> Result<Estimate> {
        Ok(self.norm_with_argmax(r, o, nu)?.0)
    }

    /// `max_{r ∈ grid, r ≥ 2} r^{−1/α} ‖·‖_{r,ν}`: a lower bound on the ψ_α norm.
    pub fn psi_norm(&self, o: usize, alpha: f64, nu: f64) -> Result<Estimate> {
        let mut best = Estimate::ZERO;
        for &r in self.r_grid.iter().filter(|&&r| r >= 2.0) {
            let e = self.norm(r, o, nu)?.scale(r.powf(-1.0 / alpha));
            if e.value > best.value {
                best = e;
            }
        }
        Ok(best)
    }

    /// Fills the `‖·‖_{r,ν}` and ψ_α tables. The grid must contain `r = 2`
    /// and `r = 4`.
    pub fn adjusted_norms(&mut self, nu_grid: &[f64], alpha_grid: &[f64]) -> Result<()> {
        self.r_index(2.0)?;
        self.r_index(4.0)?;
        let no = self.observables.len();
        let mut adjusted = Vec::with_capacity(nu_grid.len());
        for &nu in nu_grid {
            let values = self
                .r_grid
                .iter()
                .map(|&r| (0..no).map(|o| self.norm(r, o, nu)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            adjusted.push(AdjustedNorm { nu, values });
        }
        let mut psi = Vec::new();
        for &alpha in alpha_grid {
            for &nu in nu_grid {
                let values = (0..no).map(|o| self.psi_norm(o, alpha, nu)).collect::<Result<Vec<_>>>()?;
                psi.push(PsiNorm { alpha, nu, values });
            }
        }
        self.adjusted = adjusted;
        self.psi = psi;
        Ok(())
    }

    /// `K = max(max_j ψ_α-norm of W(j), max_j |E W(j)|)` over the coordinate
    /// observables in the profile.
    pub fn k_bound(&self, alpha: f64, nu: f64) -> Result<Estimate> {
        let mut k = Estimate::ZERO;
        let mut any = false;
        for (o, obs) in self.observables.iter().enumerate() {
            if let Observable::Coord { .. } = obs {
                any = true;
                let e = self.psi_norm(o, alpha, nu)?;
                if e.value > k.value {
                    k = e;
                }
                if self.mean_abs[o] > k.value {
                    k = Estimate { value: self.mean_abs[o], stderr: 0.0 };
                }
            }
        }
        if !any {
            return Err(Error::input("profile has no coordinate observables"));
        }
        Ok(k)
    }

    fn labels(&self) -> Vec<String> {
        self.observables.iter().enumerate().map(|(i, o)| o.label(i)).collect()
    }

    /// Columns `s,r,j,delta,stderr`.
    pub fn write_delta_csv<W: Write>(&self, out: W) -> Result<()> {
        let labels = self.labels();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "r", "j", "delta", "stderr"])?;
        for (s, row) in self.delta.iter().enumerate() {
            for (ri, col) in row.iter().enumerate() {
                for (o, e) in col.iter().enumerate() {
                    w.write_record([
                        s.to_string(),
                        self.r_grid[ri].to_string(),
                        labels[o].clone(),
                        e.value.to_string(),
                        e.stderr.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `m,r,j,Delta`.
    pub fn write_tail_csv<W: Write>(&self, out: W) -> Result<()> {
        let labels = self.labels();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "r", "j", "Delta"])?;
        for (m, row) in self.tail.iter().enumerate() {
            for (ri, col) in row.iter().enumerate() {
                for (o, e) in col.iter().enumerate() {
                    w.write_record([m.to_string(), self.r_grid[ri].to_string(), labels[o].clone(), e.value.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Single `δ_{s,r}` of coordinate `j`.
pub fn estimate_delta(spec: &CausalSpec, s: usize, r: f64, j: usize, reps: usize, seed: u64) -> Result<Estimate> {
    let cfg = DepConfig { reps, seed, r_grid: vec![r], ..DepConfig::default() };
    spec.validate()?;
    cfg.validate()?;
    if s > spec.horizon() {
        Observable::Coord { j }.validate(spec.p)?;
        return Ok(Estimate::ZERO);
    }
    profile(spec, &[Observable::Coord { j }], &cfg)?.delta_at(s, r, 0)
}

/// Closed-form `δ_{s,2}` for observables linear in the innovations: with
/// `f(W) = cᵀu`, the coupled difference is `a_s cᵀ(ε − ε′)`, whose second
/// moment is `2 a_s² ‖c‖²` for unit-variance coordinates.
pub fn analytic_delta2(spec: &CausalSpec, obs: &Observable, s: usize) -> Option<f64> {
    if s > spec.horizon() {
        return Some(0.0);
    }
    let p = spec.p;
    let a_s = spec.coefficients.coefficient(s).abs();
    let mut best: f64 = 0.0;
    for g in 0..spec.regime_count() {
        let a = spec.mixing_for(g);
        let row: Vec<f64> = match obs {
            Observable::Coord { j } if *j < p => a[*j].clone(),
            Observable::Coord { .. } if spec.response.c == 0.0 => {
                let r = &spec.response;
                let mut w: Vec<f64> = (0..=p).map(|l| (0..p).map(|i| r.b[i] * a[i][l]).sum()).collect();
                w[p] += r.sigma;
                w
            }
            Observable::Linear { theta } => (0..=p).map(|l| (0..p).map(|i| theta[i] * a[i][l]).sum()).collect(),
            _ => return None,
        };
        best = best.max(a_s * dot(&row, &row).sqrt() * std::f64::consts::SQRT_2);
    }
    Some(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepCheckRow {
    pub label: String,
    pub r: f64,
    pub nu: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepCheckReport {
    pub name: &'static str,
    pub rows: Vec<DepCheckRow>,
}

impl DepCheckReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.holds).count()
    }

    /// Columns `check,label,r,nu,lhs,rhs,stderr,holds`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_reports_csv(std::slice::from_ref(self), out)
    }
}

/// Columns `check,label,r,nu,lhs,rhs,stderr,holds`, one block per report.
pub fn write_reports_csv<W: Write>(reports: &[DepCheckReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "label", "r", "nu", "lhs", "rhs", "stderr", "holds"])?;
    for rep in reports {
        for r in &rep.rows {
            w.write_record([
                rep.name.to_string(),
                r.label.clone(),
                r.r.to_string(),
                r.nu.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.stderr.to_string(),
                r.holds.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `lhs ≤ rhs + CHECK_SE · se`.
fn one_sided(label: String, r: f64, nu: f64, lhs: Estimate, rhs: Estimate) -> DepCheckRow {
    let se = lhs.stderr.hypot(rhs.stderr);
    DepCheckRow { label, r, nu, lhs: lhs.value, rhs: rhs.value, stderr: se, holds: lhs.value <= rhs.value + CHECK_SE * se + 1e-12 * (1.0 + rhs.value) }
}

/// Compares every estimated `δ_{s,2}` of the linear observables with its
/// closed form, and checks exact zeros one lag past the horizon.
pub fn check_linear_deltas(spec: &CausalSpec, cfg: &DepConfig) -> Result<DepCheckReport> {
    let observables: Vec<Observable> =
        coordinates(spec.p).into_iter().filter(|o| analytic_delta2(spec, o, 0).is_some()).collect();
    let cfg = DepConfig { r_grid: vec![2.0], ..cfg.clone() };
    let prof = profile(spec, &observables, &cfg)?;
    let mut rows = Vec::new();
    for s in 0..=prof.horizon() + 1 {
        for (o, obs) in observables.iter().enumerate() {
            let est = prof.delta_at(s, 2.0, o)?;
            let exact = analytic_delta2(spec, obs, s).unwrap_or(0.0);
            let diff = (est.value - exact).abs();
            let holds = if s > prof.horizon() || est.stderr == 0.0 {
                diff <= 1e-12 * (1.0 + exact)
            } else {
                diff <= MATCH_SE * est.stderr
            };
            rows.push(DepCheckRow {
                label: format!("s={s} j={}", obs.label(o)),
                r: 2.0,
                nu: f64::NAN,
                lhs: est.value,
                rhs: exact,
                stderr: est.stderr,
                holds,
            });
        }
    }
    Ok(DepCheckReport { name: "linear_delta", rows })
}

/// A uniformly random `k`-sparse unit vector in `R^p`.
pub fn random_sparse_unit(p: usize, k: usize, rng: &mut SimRng) -> Vec<f64> {
    let k = k.min(p);
    let mut idx: Vec<usize> = (0..p).collect();
    for i in 0..k {
        let j = i + ((rng.uniform() * (p - i) as f64) as usize).min(p - i - 1);
        idx.swap(i, j);
    }
    let mut theta = vec![0.0; p];
    let mut norm = 0.0;
    for &j in &idx[..k] {
        let v = rng.normal();
        theta[j] = v;
        norm += v * v;
    }
    let norm = norm.sqrt();
    if norm > 0.0 {
        theta.iter_mut().for_each(|v| *v /= norm);
    }
    theta
}

/// `‖{θᵀX}‖_{r,ν} ≤ ‖θ‖₁ max_j ‖{X(j)}‖_{r,ν} ≤ √k max_j ‖{X(j)}‖_{r,ν}` for
/// random `k`-sparse unit `θ`, on every grid `(r, ν)`, and the ψ_α form
/// against `√k K`.
pub fn check_combination_norms(spec: &CausalSpec, k: usize, thetas: usize, cfg: &DepConfig) -> Result<DepCheckReport> {
    let p = spec.p;
    if k == 0 || k > p {
        return Err(Error::input("sparsity must lie in 1..=p"));
    }
    let mut rng = SimRng::new(cfg.seed, &[TAG_THETA]);
    let mut observables = coordinates(p);
    for _ in 0..thetas {
        observables.push(Observable::Linear { theta: random_sparse_unit(p, k, &mut rng) });
    }
    let prof = profile(spec, &observables, cfg)?;
    let root_k = (k as f64).sqrt();
    let mut rows = Vec::new();
    for &nu in &cfg.nu_grid {
        for &r in &prof.r_grid {
            let mut xmax = Estimate::ZERO;
            for j in 0..p {
                let e = prof.norm(r, j, nu)?;
                if e.value > xmax.value {
                    xmax = e;
                }
            }
            for o in p + 1..observables.len() {
                let lhs = prof.norm(r, o, nu)?;
                rows.push(one_sided(format!("{} l1", observables[o].label(o - p - 1)), r, nu, lhs, xmax.scale(root_k)));
            }
        }
        for &alpha in &cfg.alpha_grid {
            let kb = prof.k_bound(alpha, nu)?;
            for o in p + 1..observables.len() {
                let lhs = prof.psi_norm(o, alpha, nu)?;
                rows.push(one_sided(format!("{} psi{alpha}", observables[o].label(o - p - 1)), f64::NAN, nu, lhs, kb.scale(root_k)));
            }
        }
    }
    Ok(DepCheckReport { name: "combination", rows })
}

/// Four-term product bound for each coordinate pair, at every `r` on the
/// grid with `r ≥ 4` and `r/2` also on the grid.
pub fn check_product_norms(spec: &CausalSpec, pairs: &[(usize, usize)], cfg: &DepConfig) -> Result<DepCheckReport> {
    let mut observables = Vec::new();
    let coord_of = |j: usize, obs: &mut Vec<Observable>| -> usize {
        let o = Observable::Coord { j };
        obs.iter().position(|x| *x == o).unwrap_or_else(|| {
            obs.push(o);
            obs.len() - 1
        })
    };
    let mut triples = Vec::new();
    for &(a, b) in pairs {
        let ia = coord_of(a, &mut observables);
        let ib = coord_of(b, &mut observables);
        observables.push(Observable::Product { a, b });
        triples.push((ia, ib, observables.len() - 1));
    }
    let prof = profile(spec, &observables, cfg)?;
    let orders: Vec<f64> = prof.r_grid.iter().copied().filter(|&r| r >= 4.0 && prof.r_index(r / 2.0).is_ok()).collect();
    if orders.is_empty() {
        return Err(Error::input("the moment grid needs some r ≥ 4 with r/2 on the grid"));
    }
    let mut rows = Vec::new();
    for &(ia, ib, ip) in &triples {
        for &r in &orders {
            for &nu in &cfg.nu_grid {
                let lhs = prof.norm(r / 2.0, ip, nu)?;
                let (a0, anu) = (prof.norm(r, ia, 0.0)?, prof.norm(r, ia, nu)?);
                let (b0, bnu) = (prof.norm(r, ib, 0.0)?, prof.norm(r, ib, nu)?);
                let (ma, mb) = (prof.mean_abs[ia], prof.mean_abs[ib]);
                let value = (a0.value + ma) * bnu.value + (b0.value + mb) * anu.value;
                let stderr = (a0.stderr * bnu.value + (a0.value + ma) * bnu.stderr)
                    .hypot(b0.stderr * anu.value + (b0.value + mb) * anu.stderr);
                rows.push(one_sided(observables[ip].label(ip), r, nu, lhs, Estimate { value, stderr }));
            }
        }
    }
    Ok(DepCheckReport { name: "product", rows })
}

/// `‖f(W) − E f(W)‖_r ≤ Δ_{0,r}` for every observable and grid order.
pub fn check_prop_converse(spec: &CausalSpec, observables: &[Observable], cfg: &DepConfig) -> Result<DepCheckReport> {
    let prof = profile(spec, observables, cfg)?;
    let mut rows = Vec::new();
    for (o, obs) in observables.iter().enumerate() {
        for (ri, &r) in prof.r_grid.iter().enumerate() {
            let lhs = prof.moment[ri][o];
            let rhs = prof.tail[0][ri][o];
            rows.push(one_sided(obs.label(o), r, 0.0, lhs, rhs));
        }
    }
    Ok(DepCheckReport { name: "prop_converse", rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_sums_give_root_mean() {
        let e = Estimate::from_power_sums(4.0 * 10.0, 16.0 * 10.0, 10, 2.0);
        assert!((e.value - 2.0).abs() < 1e-15);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(Estimate::from_power_sums(0.0, 0.0, 10, 3.0), Estimate::ZERO);
    }

    #[test]
    fn tails_are_backward_sums() {
        let d = |v: f64| vec![vec![Estimate { value: v, stderr: 0.1 }]];
        let t = tail_sums(&[d(3.0), d(2.0), d(1.0)]);
        let vals: Vec<f64> = t.iter().map(|x| x[0][0].value).collect();
        assert_eq!(vals, vec![6.0, 3.0, 1.0]);
        assert!((t[0][0][0].stderr - 0.3).abs() < 1e-15);
    }

    #[test]
    fn sparse_units_are_sparse_and_unit() {
        let mut rng = SimRng::new(1, &[]);
        for _ in 0..50 {
            let t = random_sparse_unit(7, 3, &mut rng);
            assert!(t.iter().filter(|v| **v != 0.0).count() <= 3);
            assert!((dot(&t, &t) - 1.0).abs() < 1e-12);
        }
    }
}

//! Monte Carlo harnesses: convergence-rate sweeps, tail-bound violation
//! frequencies, and exact numerics for the constants used by the dependent
//! tail bounds.

use std::f64::consts::{E, PI};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datagen::{
    population_independent, CausalSpec, DesignLaw, Generator, GeneratorSpec, IndepSpec, Innovation,
    Link, NoiseLaw,
};
use crate::dependence::{analytic_delta2, coordinates, profile, DepConfig, Estimate, CHECK_SE};
use crate::error::{Error, Result};
use crate::linalg::{norm1, norm2, sub, SymmetricMatrix};
use crate::models::ModelClass;
use crate::norms::{dvec, lambda_sparse, rip, strength, Norm};
use crate::par::map_indices;
use crate::regression::{beta_map, empirical_pair, influence_term, RegressionPair};
use crate::rng::stream_key;

const TAG_RATE: u64 = 0x5A;
const TAG_TAIL: u64 = 0x7A;

// ---------------------------------------------------------------------------
// Constants of the dependent moment bounds

/// `s(λ) = (1/2 + 1/λ)^{-1}`.
pub fn shift(lambda: f64) -> f64 {
    1.0 / (0.5 + 1.0 / lambda)
}

/// `T₁(λ) = min(λ, 1)`.
pub fn trunc1(lambda: f64) -> f64 {
    lambda.min(1.0)
}

/// `Ω_n(ν)`, piecewise in `ν` around 1/2.
pub fn omega(n: usize, nu: f64) -> f64 {
    let base = if nu > 0.5 {
        5.0 / (nu - 0.5).powi(3)
    } else if nu == 0.5 {
        2.0 * (n as f64).log2().powf(2.5)
    } else {
        5.0 * (2.0 * n as f64).powf(0.5 - nu) / (0.5 - nu).powi(3)
    };
    2f64.powf(nu) * base
}

/// `B_ν = √6 [1 + 20 π³ 2^ν / (3√3 ν³)]`.
pub fn b_nu(nu: f64) -> f64 {
    6f64.sqrt() * (1.0 + 20.0 * PI.powi(3) * 2f64.powf(nu) / (3.0 * 3f64.sqrt() * nu.powi(3)))
}

/// `λ_1, …, λ_L` with `L = ⌊log₂ n⌋`: `3/(π² ℓ²)` up to `L/2`, mirrored after.
pub fn lambda_seq(n: usize) -> Vec<f64> {
    let l = (usize::BITS - 1 - n.max(1).leading_zeros()) as usize;
    (1..=l)
        .map(|ell| {
            let d = if 2 * ell <= l { ell } else { l + 1 - ell };
            3.0 / (PI * PI * (d * d) as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantRow {
    pub name: &'static str,
    pub arg: f64,
    /// Sample size, where the constant depends on it.
    pub n: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumCheck {
    /// `'a'` or `'b'`.
    pub part: char,
    pub n: usize,
    pub beta: f64,
    pub power: u32,
    pub sum: f64,
    pub cap: f64,
    pub holds: bool,
    /// Part (a) only: `2 Σ_{ℓ ≤ L/2}` — an intermediate step, reported but not
    /// checked.
    pub half_sum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixReport {
    pub constants: Vec<ConstantRow>,
    pub sums: Vec<SumCheck>,
    /// `(n, Σ λ_ℓ)`.
    pub lambda_sums: Vec<(usize, f64)>,
}

pub const BETA_GRID: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
pub const POWER_GRID: [u32; 3] = [2, 3, 4];

/// Evaluates the constants and checks both summation inequalities by direct
/// summation for `n = 2^6, …, 2^14`.
pub fn appendix_numerics() -> AppendixReport {
    let ns: Vec<usize> = (6..=14).map(|e| 1usize << e).collect();
    let mut constants = Vec::new();
    for lam in [0.5, 2.0 / 3.0, 1.0, 2.0, 4.0] {
        constants.push(ConstantRow { name: "s", arg: lam, n: None, value: shift(lam) });
        constants.push(ConstantRow { name: "T1", arg: lam, n: None, value: trunc1(lam) });
    }
    for nu in [0.25, 0.5, 1.0, 2.0] {
        constants.push(ConstantRow { name: "B", arg: nu, n: None, value: b_nu(nu) });
        for &n in &ns {
            constants.push(ConstantRow { name: "Omega", arg: nu, n: Some(n), value: omega(n, nu) });
        }
    }
    let c3 = PI * PI / 3.0;
    let mut sums = Vec::new();
    let mut lambda_sums = Vec::new();
    for &n in &ns {
        let lam = lambda_seq(n);
        let l = lam.len();
        lambda_sums.push((n, lam.iter().sum()));
        for &beta in &BETA_GRID {
            for &power in &POWER_GRID {
                let pf = f64::from(power);
                let term_a = |ell: usize| 1.0 / (lam[ell - 1].powf(pf) * 2f64.powf(pf * ell as f64 * beta));
                let sum_a: f64 = (1..=l).map(term_a).sum();
                let half: f64 = 2.0 * (1..=l / 2).map(term_a).sum::<f64>();
                let cap_a = (5.0 / beta.powi(3)).powf(pf) * c3.powf(pf + 1.0);
                sums.push(SumCheck { part: 'a', n, beta, power, sum: sum_a, cap: cap_a, holds: sum_a <= cap_a, half_sum: Some(half) });

                let sum_b: f64 =
                    (1..=l).map(|ell| 2f64.powf(pf * ell as f64 * (0.5 - beta)) / lam[ell - 1].powf(pf)).sum();
                let cap_b = c3.powf(pf + 1.0)
                    * if beta > 0.5 {
                        (5.0 / (beta - 0.5).powi(3)).powf(pf)
                    } else if beta == 0.5 {
                        2.0 * (n as f64).log2().powf(2.0 * pf + 1.0)
                    } else {
                        (2.0 * n as f64).powf((0.5 - beta) * pf) * (5.0 / (0.5 - beta).powi(3)).powf(pf)
                    };
                sums.push(SumCheck { part: 'b', n, beta, power, sum: sum_b, cap: cap_b, holds: sum_b <= cap_b, half_sum: None });
            }
        }
    }
    AppendixReport { constants, sums, lambda_sums }
}

impl AppendixReport {
    /// Both summation inequalities and `Σ λ_ℓ < 1` everywhere.
    pub fn all_hold(&self) -> bool {
        self.sums.iter().all(|s| s.holds) && self.lambda_sums.iter().all(|(_, s)| *s < 1.0)
    }

    pub fn constant(&self, name: &str, arg: f64, n: Option<usize>) -> Option<f64> {
        self.constants.iter().find(|c| c.name == name && c.arg == arg && c.n == n).map(|c| c.value)
    }

    /// Columns `name,arg,n,value`; the summation checks follow as
    /// `sum_a`/`sum_b` rows with the cap in `arg`'s place omitted.
    pub fn write_constants_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "arg", "n", "value"])?;
        for c in &self.constants {
            w.write_record([c.name.to_string(), c.arg.to_string(), c.n.map_or(String::new(), |n| n.to_string()), c.value.to_string()])?;
        }
        for (n, s) in &self.lambda_sums {
            w.write_record(["lambda_sum".to_string(), String::new(), n.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `part,n,beta,power,sum,cap,holds,half_sum`.
    pub fn write_sums_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["part", "n", "beta", "power", "sum", "cap", "holds", "half_sum"])?;
        for s in &self.sums {
            w.write_record([
                s.part.to_string(),
                s.n.to_string(),
                s.beta.to_string(),
                s.power.to_string(),
                s.sum.to_string(),
                s.cap.to_string(),
                s.holds.to_string(),
                s.half_sum.map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Rate sweeps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub n_grid: Vec<usize>,
    pub k: usize,
    pub reps: usize,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub seed: u64,
}

impl RateConfig {
    /// `n = 500 · 2^i` up to 8000.
    pub fn geometric_grid() -> Vec<usize> {
        (0..5).map(|i| 500 << i).collect()
    }

    pub fn independent_default() -> Self {
        Self {
            n_grid: Self::geometric_grid(),
            k: 2,
            reps: 200,
            generator: GeneratorSpec::Independent(IndepSpec::gaussian_toeplitz(20, 0.3)),
            seed: 0,
        }
    }

    pub fn causal_default() -> Self {
        Self { generator: GeneratorSpec::Causal(CausalSpec::geometric(20, 0.5)), ..Self::independent_default() }
    }

    fn validate(&self) -> Result<()> {
        if self.n_grid.len() < 2 || self.n_grid.contains(&0) {
            return Err(Error::input("the n grid needs at least two positive sizes"));
        }
        if self.reps == 0 {
            return Err(Error::input("reps must be positive"));
        }
        let p = self.generator.columns();
        if self.k == 0 || self.k > p {
            return Err(Error::input(format!("k must lie in 1..={p}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub rep: usize,
    pub sup_l2_err: f64,
    pub sup_l1_err: f64,
    pub sup_rep_err: f64,
    pub rip: f64,
    pub d: f64,
    pub lambda_k: f64,
    pub s2k: f64,
    pub seed: u64,
}

/// Least squares line through `(log x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

impl SlopeFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        (lo..=hi).contains(&self.slope)
    }
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("log-log fit needs at least two positive points".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if lx.len() > 2 {
        let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (m - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(SlopeFit { slope, stderr, intercept })
}

/// Mean errors over replications at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCell {
    pub n: usize,
    pub l2: f64,
    pub l1: f64,
    pub rep: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub cells: Vec<RateCell>,
    pub l2: SlopeFit,
    pub l1: SlopeFit,
    pub rep: SlopeFit,
}

struct Target {
    pair: RegressionPair,
    betas: Vec<Vec<f64>>,
    lambda_k: f64,
    s2k: f64,
}

fn target(gen: &GeneratorSpec, n: usize, class: &ModelClass) -> Result<Target> {
    let pop = gen.population(n)?;
    let k = class.max_size();
    let lambda_k = lambda_sparse(k, &pop.pair.sigma)?.value;
    if !(lambda_k > 0.0) {
        return Err(Error::input(format!("population sparse eigenvalue {lambda_k:.3e} is not positive")));
    }
    let betas = class.iter().map(|m| beta_map(&pop.pair, &m)).collect::<Result<Vec<_>>>()?;
    let s2k = strength(Norm::L2, k, &pop.pair)?.value;
    Ok(Target { pair: pop.pair, betas, lambda_k, s2k })
}

fn rate_row(gen: &GeneratorSpec, t: &Target, class: &ModelClass, n: usize, rep: usize, seed: u64) -> Result<RateRow> {
    let d = gen.generate(n, seed)?;
    let emp = empirical_pair(&d);
    let (mut l2, mut l1, mut rp) = (0.0f64, 0.0f64, 0.0f64);
    for (m, b2) in class.iter().zip(&t.betas) {
        let b1 = beta_map(&emp, &m)?;
        let diff = sub(&b1, b2);
        l2 = l2.max(norm2(&diff));
        l1 = l1.max(norm1(&diff));
        let infl = influence_term(&emp, &t.pair, b2, &m)?;
        rp = rp.max(norm2(&sub(&diff, &infl)));
    }
    let k = class.max_size();
    Ok(RateRow {
        n,
        p: class.p(),
        k,
        rep,
        sup_l2_err: l2,
        sup_l1_err: l1,
        sup_rep_err: rp,
        rip: rip(k, &emp.sigma.sub(&t.pair.sigma)?)?.value,
        d: dvec(k, &sub(&emp.gamma, &t.pair.gamma))?.value,
        lambda_k: t.lambda_k,
        s2k: t.s2k,
        seed,
    })
}

/// Every `(n, rep)` cell draws its own seed from `(config seed, n, rep)`, so
/// rows are reproducible one at a time and independent of thread count.
pub fn rate_sweep(cfg: &RateConfig) -> Result<RateReport> {
    cfg.validate()?;
    let class = ModelClass::up_to(cfg.generator.columns(), cfg.k)?;
    let targets = cfg.n_grid.iter().map(|&n| target(&cfg.generator, n, &class)).collect::<Result<Vec<_>>>()?;
    let cells = cfg.n_grid.len() * cfg.reps;
    let rows: Vec<Result<RateRow>> = map_indices(cells, |c| {
        let (ni, rep) = (c / cfg.reps, c % cfg.reps);
        let n = cfg.n_grid[ni];
        let seed = stream_key(cfg.seed, &[TAG_RATE, n as u64, rep as u64]);
        rate_row(&cfg.generator, &targets[ni], &class, n, rep, seed)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let reps = cfg.reps as f64;
    let means: Vec<RateCell> = cfg
        .n_grid
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            let chunk = &rows[ni * cfg.reps..(ni + 1) * cfg.reps];
            RateCell {
                n,
                l2: chunk.iter().map(|r| r.sup_l2_err).sum::<f64>() / reps,
                l1: chunk.iter().map(|r| r.sup_l1_err).sum::<f64>() / reps,
                rep: chunk.iter().map(|r| r.sup_rep_err).sum::<f64>() / reps,
            }
        })
        .collect();
    let xs: Vec<f64> = means.iter().map(|c| c.n as f64).collect();
    let fit = |f: fn(&RateCell) -> f64| fit_loglog(&xs, &means.iter().map(f).collect::<Vec<_>>());
    Ok(RateReport { l2: fit(|c| c.l2)?, l1: fit(|c| c.l1)?, rep: fit(|c| c.rep)?, rows, cells: means })
}

impl RateReport {
    /// Columns follow [`RateRow`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Log-log plot of the mean errors with fitted lines.
    pub fn svg(&self) -> String {
        let series = [("sup L2 error", self.l2, 0usize), ("sup L1 error", self.l1, 1), ("representation error", self.rep, 2)];
        let plotted: Vec<Series> = series
            .iter()
            .map(|(label, fit, which)| Series {
                label: format!("{label} (slope {:.3} ± {:.3})", fit.slope, fit.stderr),
                points: self
                    .cells
                    .iter()
                    .map(|c| (c.n as f64, [c.l2, c.l1, c.rep][*which]))
                    .collect(),
                fit: Some(*fit),
            })
            .collect();
        loglog_svg("Uniform-in-model error versus n", "n", "mean error", &plotted)
    }
}

// ---------------------------------------------------------------------------
// SVG

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub fit: Option<SlopeFit>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// A self-contained SVG 1.1 document with log-scaled axes.
pub fn loglog_svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (80.0, 20.0, 40.0, 110.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| *x > 0.0 && *y > 0.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(1e-3);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = (y0.floor().min(y0 - 0.05), y1.ceil().max(y1 + 0.05));
    let sx = |x: f64| left + (x.log10() - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| top + (y1 - y.log10()) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    let (px0, px1, py0, py1) = (left, w - right, top, h - bottom);
    let _ = writeln!(s, r#"<rect x="{px0}" y="{py0}" width="{}" height="{}" fill="none" stroke="black"/>"#, px1 - px0, py1 - py0);
    for e in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let y = sy(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{px0}" y1="{y:.2}" x2="{px1}" y2="{y:.2}" stroke="#dddddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"#, px0 - 6.0, y + 4.0);
    }
    let mut xt: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).filter(|x| *x > 0.0).collect();
    xt.sort_by(f64::total_cmp);
    xt.dedup();
    for x in xt {
        let px = sx(x);
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{py0}" x2="{px:.2}" y2="{py1}" stroke="#eeeeee"/>"##);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{x}</text>"#, py1 + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (px0 + px1) / 2.0, py1 + 36.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (py0 + py1) / 2.0,
        escape(ylabel)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = ser.points.iter().copied().filter(|(x, y)| *x > 0.0 && *y > 0.0).collect();
        let line: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        for &(x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        if let (Some(fit), Some(first), Some(last)) = (ser.fit, pts.first(), pts.last()) {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="5,4"/>"#,
                sx(first.0),
                sy(fit.predict(first.0)),
                sx(last.0),
                sy(fit.predict(last.0))
            );
        }
        let ly = py1 + 56.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{px0}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, px0 + 24.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, px0 + 30.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

// ---------------------------------------------------------------------------
// Tail-bound violation frequencies

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailTheorem {
    /// Maximum of independent coordinate means; cap `3e^{−t}`.
    IndependentMax,
    /// `D_n(k)` and `RIP_n(k)` under independence; cap `6e^{−t}`.
    IndependentSparse,
    /// Maximum of dependent coordinate sums; cap `8e^{−t}`.
    DependentMax,
    /// `D_n(k)` and `RIP_n(k)` under functional dependence; cap `16e^{−t}`.
    DependentSparse,
}

impl TailTheorem {
    pub fn cap_factor(self) -> f64 {
        match self {
            TailTheorem::IndependentMax => 3.0,
            TailTheorem::IndependentSparse => 6.0,
            TailTheorem::DependentMax => 8.0,
            TailTheorem::DependentSparse => 16.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TailTheorem::IndependentMax => "independent_max",
            TailTheorem::IndependentSparse => "independent_sparse",
            TailTheorem::DependentMax => "dependent_max",
            TailTheorem::DependentSparse => "dependent_sparse",
        }
    }
}

fn default_t_grid() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}

fn default_nu() -> f64 {
    1.0
}

fn default_dep_reps() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    pub theorem: TailTheorem,
    pub n: usize,
    #[serde(default = "one")]
    pub k: usize,
    pub reps: usize,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    /// Decay exponent of the dependence-adjusted norms.
    #[serde(default = "default_nu")]
    pub nu: f64,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub seed: u64,
    /// Coupled replications for estimated dependence norms.
    #[serde(default = "default_dep_reps")]
    pub dep_reps: usize,
}

fn one() -> usize {
    1
}

impl TailConfig {
    /// Fifty iid standard Gaussian coordinates.
    pub fn independent_max_default() -> Self {
        Self {
            theorem: TailTheorem::IndependentMax,
            n: 200,
            k: 1,
            reps: 2000,
            t_grid: default_t_grid(),
            nu: 1.0,
            generator: GeneratorSpec::Independent(IndepSpec::standard_gaussian(50)),
            seed: 0,
            dep_reps: default_dep_reps(),
        }
    }

    /// Twenty coordinates of the geometric (ρ = 1/2) moving average.
    pub fn dependent_max_default() -> Self {
        Self {
            theorem: TailTheorem::DependentMax,
            n: 500,
            generator: GeneratorSpec::Causal(CausalSpec::geometric(20, 0.5)),
            ..Self::independent_max_default()
        }
    }

    /// Toeplitz Gaussian design with a linear response, `p = 10`, `k = 2`.
    pub fn independent_sparse_default() -> Self {
        let mut spec = IndepSpec::gaussian_toeplitz(10, 0.3);
        let b = match &spec.link {
            Link::LinearQuadratic { b, .. } | Link::Linear { b } => b.clone(),
        };
        spec.link = Link::Linear { b };
        Self {
            theorem: TailTheorem::IndependentSparse,
            n: 500,
            k: 2,
            generator: GeneratorSpec::Independent(spec),
            ..Self::independent_max_default()
        }
    }

    pub fn dependent_sparse_default() -> Self {
        Self {
            theorem: TailTheorem::DependentSparse,
            n: 500,
            k: 2,
            generator: GeneratorSpec::Causal(CausalSpec::geometric(10, 0.5)),
            ..Self::independent_max_default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.reps == 0 {
            return Err(Error::input("need n >= 2 and reps >= 1"));
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::input("t values must be finite and nonnegative"));
        }
        if !(self.nu > 0.0) {
            return Err(Error::input("nu must be positive"));
        }
        let p = self.generator.columns();
        if self.k == 0 || self.k > p {
            return Err(Error::input(format!("k must lie in 1..={p}")));
        }
        let independent = matches!(self.generator, GeneratorSpec::Independent(_));
        let wants_independent = matches!(self.theorem, TailTheorem::IndependentMax | TailTheorem::IndependentSparse);
        if independent != wants_independent {
            return Err(Error::input(format!("{} needs a {} generator", self.theorem.name(), if wants_independent { "independent" } else { "causal" })));
        }
        if let GeneratorSpec::Independent(s) = &self.generator {
            if s.intercept {
                return Err(Error::input("tail checks need mean-zero covariates; drop the intercept"));
            }
        }
        Ok(())
    }
}

/// Bound ingredients. Variance proxies are certified upper bounds (closed
/// form, or estimates plus four standard errors where noted).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailConstants {
    /// `Γ_{n,p}`, `‖{Z}‖_{2,ν}`, `Υ^Γ`, or `√Υ^Γ`-based proxy, by theorem.
    pub scale: f64,
    /// `Υ^Σ` (sparse theorems only).
    pub scale_rip: Option<f64>,
    /// Exact `sup_{θ ∈ Θ_k}` values of the two proxies where available
    /// (Gaussian designs); diagnostics only.
    pub scale_sup: Option<[f64; 2]>,
    /// `ψ_α`-type bound feeding the second-order diagnostic.
    pub k_bound: Option<f64>,
    pub alpha: f64,
    /// True when any ingredient is a Monte Carlo estimate.
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub t: f64,
    pub cap: f64,
    /// `cap + 3 √(cap(1 − cap)/reps)`.
    pub allowed: f64,
    pub violations: usize,
    pub frequency: f64,
    pub holds: bool,
    pub bound: f64,
    pub bound_rip: Option<f64>,
    /// Second-order term with `C_α = 1`; diagnostic only.
    pub second_term: Option<f64>,
    pub second_term_rip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub theorem: TailTheorem,
    pub n: usize,
    pub k: usize,
    pub reps: usize,
    pub constants: TailConstants,
    pub rows: Vec<TailRow>,
    /// Largest statistic seen, per bound.
    pub max_statistic: [f64; 2],
}

impl TailReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }

    /// Columns `theorem,t,cap,allowed,frequency,violations,reps,holds,bound,bound_rip,second_term,second_term_rip`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "theorem", "t", "cap", "allowed", "frequency", "violations", "reps", "holds", "bound", "bound_rip", "second_term", "second_term_rip",
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            w.write_record([
                self.theorem.name().to_string(),
                r.t.to_string(),
                r.cap.to_string(),
                r.allowed.to_string(),
                r.frequency.to_string(),
                r.violations.to_string(),
                self.reps.to_string(),
                r.holds.to_string(),
                r.bound.to_string(),
                opt(r.bound_rip),
                opt(r.second_term),
                opt(r.second_term_rip),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `max_j E[X_j^2]`, the `ψ_α` norm of one coordinate, and `α`.
fn independent_scales(spec: &IndepSpec) -> Result<(f64, f64, f64)> {
    let pop = population_independent(spec)?;
    let gamma = (0..spec.p).map(|j| pop.pair.sigma.get(j, j)).fold(0.0, f64::max);
    Ok(match &spec.design {
        // E exp(X²/K²) = (1 − 2σ²/K²)^{−1/2} = 2 at K² = 8σ²/3.
        DesignLaw::Gaussian { .. } => (gamma, (8.0 * gamma / 3.0).sqrt(), 2.0),
        // |X/scale|^α ~ Exp(1): E exp(|X/K|^α) = 2 at K = 2^{1/α} scale.
        DesignLaw::SubWeibull { alpha, scale } => (gamma, 2f64.powf(1.0 / alpha) * scale, *alpha),
    })
}

/// `(Υ^Γ, Υ^Σ)` upper bounds `k · max |Cov(X_a Y, X_l Y)|` and
/// `k² · max |Cov(X_a X_b, X_c X_d)|`, in closed form for a linear response.
pub fn certified_upsilon(spec: &IndepSpec, k: usize) -> Result<(f64, f64)> {
    spec.validate()?;
    let b = match &spec.link {
        Link::Linear { b } => b,
        Link::LinearQuadratic { b, c, .. } if *c == 0.0 => b,
        _ => return Err(Error::input("certified variance proxies need a linear response")),
    };
    if spec.intercept {
        return Err(Error::input("certified variance proxies need mean-zero covariates"));
    }
    let p = spec.p;
    let sd2 = match spec.noise {
        NoiseLaw::None => 0.0,
        NoiseLaw::Gaussian { sd } => sd * sd,
    };
    let (cov_xy, cov_xx) = match &spec.design {
        DesignLaw::Gaussian { sigma } => {
            let s = SymmetricMatrix::from_rows(sigma)?;
            let sb = s.matvec(b);
            let var_y = s.quad_form(b) + sd2;
            // Isserlis: Cov(AB, CD) = E[AC]E[BD] + E[AD]E[BC].
            let mut mxy: f64 = 0.0;
            for a in 0..p {
                for l in 0..p {
                    mxy = mxy.max((s.get(a, l) * var_y + sb[a] * sb[l]).abs());
                }
            }
            let mut mxx: f64 = 0.0;
            for a in 0..p {
                for bb in 0..p {
                    for c in 0..p {
                        for d in 0..p {
                            mxx = mxx.max((s.get(a, c) * s.get(bb, d) + s.get(a, d) * s.get(bb, c)).abs());
                        }
                    }
                }
            }
            (mxy, mxx)
        }
        DesignLaw::SubWeibull { alpha, scale } => {
            let m2 = scale.powi(2) * statrs::function::gamma::gamma(1.0 + 2.0 / alpha);
            let m4 = scale.powi(4) * statrs::function::gamma::gamma(1.0 + 4.0 / alpha);
            let b2: f64 = b.iter().map(|v| v * v).sum();
            let mut mxy: f64 = 0.0;
            for a in 0..p {
                // E[X_a² Y²] − (E[X_a Y])².
                mxy = mxy.max(b[a] * b[a] * (m4 - m2 * m2) + m2 * m2 * (b2 - b[a] * b[a]) + sd2 * m2);
                for l in 0..p {
                    if l != a {
                        mxy = mxy.max((b[a] * b[l]).abs() * m2 * m2);
                    }
                }
            }
            (mxy, (m4 - m2 * m2).max(m2 * m2))
        }
    };
    let kf = k as f64;
    Ok((kf * cov_xy, kf * kf * cov_xx))
}

/// `sup_{θ ∈ Θ_k} Var(θᵀX · Y)` and `sup Var((θᵀX)²)` for a Gaussian design
/// with linear response: by Isserlis these are sparse top eigenvalues of
/// `Var(Y)Σ + ccᵀ` (`c = Cov(X, Y)`) and `2 λ_max(k; Σ)²`.
pub fn exact_upsilon(spec: &IndepSpec, k: usize) -> Result<Option<[f64; 2]>> {
    let (DesignLaw::Gaussian { sigma }, Link::Linear { b }) = (&spec.design, &spec.link) else {
        return Ok(None);
    };
    let s = SymmetricMatrix::from_rows(sigma)?;
    let c = s.matvec(b);
    let sd2 = match spec.noise {
        NoiseLaw::None => 0.0,
        NoiseLaw::Gaussian { sd } => sd * sd,
    };
    let var_y = s.quad_form(b) + sd2;
    let g = SymmetricMatrix::from_fn(spec.p, |i, j| var_y * s.get(i, j) + c[i] * c[j]);
    let top = rip(k, &s)?.value;
    Ok(Some([rip(k, &g)?.value, 2.0 * top * top]))
}

/// `(E|N(0,1)|^r)^{1/r}`: the Gaussian coupled difference scales every
/// `δ_{s,2}` by this factor at order `r`.
fn gaussian_norm_ratio(r: f64) -> f64 {
    let m = 2f64.powf(r / 2.0) * statrs::function::gamma::gamma((r + 1.0) / 2.0) / PI.sqrt();
    m.powf(1.0 / r)
}

/// `max_j sup_m (m+1)^ν Σ_{s ≥ m} δ_{s,2,j}` for the covariates, exact.
pub fn analytic_covariate_norm(spec: &CausalSpec, nu: f64) -> Result<f64> {
    spec.validate()?;
    let horizon = spec.horizon();
    let mut best: f64 = 0.0;
    for j in 0..spec.p {
        let obs = crate::dependence::Observable::Coord { j };
        let deltas: Vec<f64> = (0..=horizon).map(|s| analytic_delta2(spec, &obs, s).unwrap_or(0.0)).collect();
        let mut tail = 0.0;
        for m in (0..=horizon).rev() {
            tail += deltas[m];
            best = best.max(((m + 1) as f64).powf(nu) * tail);
        }
    }
    Ok(best)
}

fn causal_alpha(spec: &CausalSpec) -> f64 {
    match spec.innovation {
        Innovation::SubWeibull { alpha } => alpha,
        Innovation::Gaussian | Innovation::Rademacher => 2.0,
    }
}

fn statistic(cfg: &TailConfig, seed: u64, pop: &RegressionPair, mean_x: &[f64]) -> Result<[f64; 2]> {
    let d = cfg.generator.generate(cfg.n, seed)?;
    let p = d.p();
    match cfg.theorem {
        TailTheorem::IndependentMax | TailTheorem::DependentMax => {
            let mut sums = vec![0.0; p];
            for i in 0..d.n() {
                for (s, (x, m)) in sums.iter_mut().zip(d.row(i).iter().zip(mean_x)) {
                    *s += x - m;
                }
            }
            let max = sums.iter().fold(0.0f64, |a, s| a.max(s.abs()));
            // Means for the independent statement, sums for the dependent one.
            let scale = if cfg.theorem == TailTheorem::IndependentMax { 1.0 / cfg.n as f64 } else { 1.0 };
            Ok([max * scale, 0.0])
        }
        TailTheorem::IndependentSparse | TailTheorem::DependentSparse => {
            let emp = empirical_pair(&d);
            let dd = dvec(cfg.k, &sub(&emp.gamma, &pop.gamma))?.value;
            let rr = rip(cfg.k, &emp.sigma.sub(&pop.sigma)?)?.value;
            Ok([dd, rr])
        }
    }
}

/// Frequencies of `{statistic > dominant term of the bound at t}`; each is
/// compared with `cap(t) + 3` binomial standard errors. The second-order
/// terms (unknown constants set to 1) are reported, never used for pass/fail.
pub fn tail_check(cfg: &TailConfig) -> Result<TailReport> {
    cfg.validate()?;
    let n = cfg.n as f64;
    let p = cfg.generator.columns();
    let kf = cfg.k as f64;
    let pf = p as f64;
    let (pop, mean_x) = {
        let pop = cfg.generator.population(cfg.n)?;
        (pop.pair, pop.mean_x)
    };

    let dep_cfg = DepConfig { reps: cfg.dep_reps, seed: cfg.seed, r_grid: vec![2.0, 3.0, 4.0, 6.0, 8.0], nu_grid: vec![0.0, cfg.nu], ..DepConfig::default() };
    type BoundFn = Box<dyn Fn(f64) -> (f64, Option<f64>, Option<f64>, Option<f64>)>;
    let (constants, bound_at): (TailConstants, BoundFn) = match (&cfg.theorem, &cfg.generator) {
        (TailTheorem::IndependentMax, GeneratorSpec::Independent(spec)) => {
            let (gamma, k_psi, alpha) = independent_scales(spec)?;
            let c = TailConstants { scale: gamma, scale_rip: None, scale_sup: None, k_bound: Some(k_psi), alpha, estimated: false };
            let f: BoundFn = Box::new(move |t| {
                let l = t + (2.0 * pf).ln();
                let second = k_psi * (2.0 * n).ln().powf(1.0 / alpha) * l.powf(1.0 / trunc1(alpha)) / n;
                (7.0 * (gamma * l / n).sqrt(), None, Some(second), None)
            });
            (c, f)
        }
        (TailTheorem::IndependentSparse, GeneratorSpec::Independent(spec)) => {
            let (ug, us) = certified_upsilon(spec, cfg.k)?;
            let (_, k_psi, alpha) = independent_scales(spec)?;
            let sup = exact_upsilon(spec, cfg.k)?;
            let c = TailConstants { scale: ug, scale_rip: Some(us), scale_sup: sup, k_bound: Some(k_psi), alpha, estimated: false };
            let f: BoundFn = Box::new(move |t| {
                let lg = t + kf * (3.0 * E * pf / kf).ln();
                let ls = t + kf * (5.0 * E * pf / kf).ln();
                let lead = k_psi * k_psi * (2.0 * n).ln().powf(2.0 / alpha) / n;
                let e = 1.0 / trunc1(alpha / 2.0);
                (
                    14.0 * (ug * lg / n).sqrt(),
                    Some(14.0 * (us * ls / n).sqrt()),
                    Some(lead * kf.sqrt() * lg.powf(e)),
                    Some(lead * kf * ls.powf(e)),
                )
            });
            (c, f)
        }
        (TailTheorem::DependentMax, GeneratorSpec::Causal(spec)) => {
            let z2 = analytic_covariate_norm(spec, cfg.nu)?;
            let alpha = causal_alpha(spec);
            let prof = profile(spec, &coordinates(spec.p)[..spec.p], &dep_cfg)?;
            let k_psi = match spec.innovation {
                // Coupled differences are Gaussian: every order is a fixed multiple of r = 2.
                Innovation::Gaussian => crate::dependence::R_GRID
                    .iter()
                    .map(|&r| r.powf(-1.0 / alpha) * gaussian_norm_ratio(r) * z2)
                    .fold(0.0, f64::max),
                _ => prof.k_bound(alpha, cfg.nu)?.value,
            };
            let bnu = b_nu(cfg.nu);
            let om = omega(cfg.n, cfg.nu);
            let s_a = shift(alpha);
            let c = TailConstants { scale: z2, scale_rip: None, scale_sup: None, k_bound: Some(k_psi), alpha, estimated: spec.innovation != Innovation::Gaussian };
            let f: BoundFn = Box::new(move |t| {
                let l = t + (pf + 1.0).ln();
                let second = k_psi * n.ln().powf(1.0 / s_a) * om * l.powf(1.0 / trunc1(s_a));
                (E * n.sqrt() * z2 * bnu * l.sqrt(), None, Some(second), None)
            });
            (c, f)
        }
        (TailTheorem::DependentSparse, GeneratorSpec::Causal(spec)) => {
            let prof = profile(spec, &coordinates(spec.p), &dep_cfg)?;
            let up = |e: Estimate| e.value + CHECK_SE * e.stderr;
            let (mut x40, mut x4n, mut mx) = (0.0f64, 0.0f64, 0.0f64);
            for j in 0..spec.p {
                x40 = x40.max(up(prof.norm(4.0, j, 0.0)?));
                x4n = x4n.max(up(prof.norm(4.0, j, cfg.nu)?));
                mx = mx.max(prof.mean_abs[j]);
            }
            let y40 = up(prof.norm(4.0, spec.p, 0.0)?);
            let y4n = up(prof.norm(4.0, spec.p, cfg.nu)?);
            let my = prof.mean_abs[spec.p];
            let rk = kf.sqrt();
            let sqrt_ug = rk * ((x40 + mx) * y4n + (y40 + my) * x4n);
            let sqrt_us = 2.0 * kf * (x40 + mx) * x4n;
            let alpha = causal_alpha(spec);
            let k_est = prof.k_bound(alpha, cfg.nu)?;
            let k_psi = up(k_est);
            let bnu = b_nu(cfg.nu);
            let om = omega(cfg.n, cfg.nu);
            let s_h = shift(alpha / 2.0);
            let c = TailConstants { scale: sqrt_ug * sqrt_ug, scale_rip: Some(sqrt_us * sqrt_us), scale_sup: None, k_bound: Some(k_psi), alpha, estimated: true };
            let f: BoundFn = Box::new(move |t| {
                let lg = t + kf * (3.0 * E * pf / kf).ln();
                let ls = t + kf * (5.0 * E * pf / kf).ln();
                let lead = k_psi * k_psi * n.ln().powf(1.0 / s_h) * om / n;
                let e = 1.0 / trunc1(s_h);
                (
                    2.0 * E * bnu * sqrt_ug * (lg / n).sqrt(),
                    Some(2.0 * E * bnu * sqrt_us * (ls / n).sqrt()),
                    Some(lead * rk * lg.powf(e)),
                    Some(lead * kf * ls.powf(e)),
                )
            });
            (c, f)
        }
        _ => unreachable!("validated"),
    };

    let stats: Vec<Result<[f64; 2]>> = map_indices(cfg.reps, |rep| {
        statistic(cfg, stream_key(cfg.seed, &[TAG_TAIL, rep as u64]), &pop, &mean_x)
    });
    let stats = stats.into_iter().collect::<Result<Vec<_>>>()?;
    let max_statistic = stats.iter().fold([0.0f64; 2], |m, s| [m[0].max(s[0]), m[1].max(s[1])]);
    let reps = cfg.reps as f64;
    let rows = cfg
        .t_grid
        .iter()
        .map(|&t| {
            let (bound, bound_rip, second_term, second_term_rip) = bound_at(t);
            let violations = stats
                .iter()
                .filter(|s| s[0] > bound || bound_rip.is_some_and(|b| s[1] > b))
                .count();
            let cap = cfg.theorem.cap_factor() * (-t).exp();
            let allowed = if cap < 1.0 { cap + 3.0 * (cap * (1.0 - cap) / reps).sqrt() } else { cap };
            let frequency = violations as f64 / reps;
            TailRow { t, cap, allowed, violations, frequency, holds: frequency <= allowed, bound, bound_rip, second_term, second_term_rip }
        })
        .collect();
    Ok(TailReport { theorem: cfg.theorem, n: cfg.n, k: cfg.k, reps: cfg.reps, constants, rows, max_statistic })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_sequence_is_symmetric() {
        let l = lambda_seq(1 << 7);
        assert_eq!(l.len(), 7);
        assert_eq!(l[0], l[6]);
        assert_eq!(l[2], l[4]);
        assert!((l[0] - 3.0 / (PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn loglog_fit_recovers_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!(f.stderr < 1e-12);
        assert!((f.predict(16.0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn gaussian_ratio_at_two_is_one() {
        assert!((gaussian_norm_ratio(2.0) - 1.0).abs() < 1e-12);
        assert!((gaussian_norm_ratio(4.0) - 3f64.powf(0.25)).abs() < 1e-12);
    }
}

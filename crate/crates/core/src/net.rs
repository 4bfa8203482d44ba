//! ε-nets of the `k`-sparse unit ball `Θ_k`, built support by support.
//!
//! Each support of size `s` carries the same `s`-dimensional ball net, so the
//! net size is `Σ_s C(p, s) · N_s` with `N_s ≤ (1 + 1/ε)^s`. Ball nets are
//! constructed to meet that cardinality:
//!
//! - `s = 1`: `⌈1/ε⌉` evenly spaced points, exact.
//! - `s = 2`: Voronoi minimax iteration on concentric rings. The covering
//!   radius is certified: every Voronoi cell is clipped to a polygon
//!   circumscribing the disk, and the farthest cell vertex bounds the
//!   distance from any point of the disk to its nearest center.
//! - `s ≥ 3`: farthest-point seeding plus minimax refinement on a sample
//!   pool; the radius is validated on fresh samples only.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, ModelIndex, SymmetricMatrix};
use crate::models::{binomial, ModelClass};
use crate::par::map_indices;
use crate::rng::SimRng;

/// Relative tolerance on certified radii.
const RADIUS_TOL: f64 = 1e-9;
/// Vertices of the polygon circumscribing the unit disk.
const POLYGON_SIDES: usize = 720;
const MAX_BALL_POINTS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NetMethod {
    Grid,
    Certified,
    Sampled,
}

/// A covering of the `dim`-dimensional unit ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallNet {
    pub dim: usize,
    pub eps: f64,
    pub points: Vec<Vec<f64>>,
    /// Certified (grid, planar) or sample-estimated (`dim ≥ 3`) covering radius.
    pub radius: f64,
    pub method: NetMethod,
}

/// `⌊(1 + 1/ε)^s⌋`.
pub fn ball_cap(s: usize, eps: f64) -> f64 {
    (1.0 + 1.0 / eps).powi(s as i32)
}

pub fn ball_net(dim: usize, eps: f64, seed: u64) -> Result<BallNet> {
    if dim == 0 {
        return Err(Error::input("ball dimension must be positive"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::input("eps must lie in (0, 1)"));
    }
    let cap = (ball_cap(dim, eps) + 1e-9).floor() as usize;
    if cap > MAX_BALL_POINTS {
        return Err(Error::input(format!("a {dim}-dimensional {eps}-net would need up to {cap} points")));
    }
    let net = match dim {
        1 => {
            let m = (1.0 / eps - 1e-12).ceil().max(1.0) as usize;
            let points = (0..m).map(|i| vec![-1.0 + (2 * i + 1) as f64 / m as f64]).collect();
            BallNet { dim, eps, points, radius: 1.0 / m as f64, method: NetMethod::Grid }
        }
        2 => planar_net(eps, cap)?,
        _ => sampled_net(dim, eps, cap, seed)?,
    };
    if net.points.len() > cap {
        return Err(Error::Domain(format!("ball net has {} points, above the bound {cap}", net.points.len())));
    }
    Ok(net)
}

// ---------------------------------------------------------------------------
// Planar certified nets

type P2 = [f64; 2];

fn dist(a: P2, b: P2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Keeps the part of `poly` with `a·x ≤ c`.
fn clip(poly: &[P2], a: P2, c: f64) -> Vec<P2> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let fp = a[0] * p[0] + a[1] * p[1] - c;
        let fq = a[0] * q[0] + a[1] * q[1] - c;
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fq < 0.0 && fp > 0.0) {
            let t = fp / (fp - fq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

fn voronoi_cells(centers: &[P2], disk: &[P2]) -> Vec<Vec<P2>> {
    map_indices(centers.len(), |i| {
        let ci = centers[i];
        let mut order: Vec<usize> = (0..centers.len()).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist(ci, centers[a]).total_cmp(&dist(ci, centers[b])));
        let mut poly = disk.to_vec();
        for j in order {
            let cj = centers[j];
            // Once the farthest vertex is closer than half the gap, the
            // remaining bisectors cannot cut.
            let reach = poly.iter().map(|&v| dist(ci, v)).fold(0.0, f64::max);
            if dist(ci, cj) > 2.0 * reach {
                break;
            }
            let a = [cj[0] - ci[0], cj[1] - ci[1]];
            let c = (cj[0] * cj[0] + cj[1] * cj[1] - ci[0] * ci[0] - ci[1] * ci[1]) / 2.0;
            poly = clip(&poly, a, c);
            if poly.is_empty() {
                break;
            }
        }
        poly
    })
}

/// Certified covering radius of the disk by `centers`.
pub fn planar_radius(centers: &[P2]) -> f64 {
    let disk = circumscribed_polygon();
    radius_from_cells(centers, &voronoi_cells(centers, &disk))
}

fn radius_from_cells(centers: &[P2], cells: &[Vec<P2>]) -> f64 {
    centers
        .iter()
        .zip(cells)
        .map(|(&c, cell)| cell.iter().map(|&v| dist(c, v)).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

fn circumscribed_polygon() -> Vec<P2> {
    let k = POLYGON_SIDES as f64;
    let r = 1.0 / (std::f64::consts::PI / k).cos();
    (0..POLYGON_SIDES)
        .map(|t| {
            let a = 2.0 * std::f64::consts::PI * t as f64 / k;
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

/// Welzl-style incremental minimal enclosing circle (center only).
fn enclosing_center(pts: &[P2]) -> P2 {
    let inside = |c: P2, r: f64, p: P2| dist(c, p) <= r * (1.0 + 1e-12) + 1e-15;
    let circ2 = |a: P2, b: P2| {
        let c = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        (c, dist(a, c))
    };
    let circ3 = |a: P2, b: P2, c: P2| {
        let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
        if d.abs() < 1e-14 {
            return [circ2(a, b), circ2(a, c), circ2(b, c)]
                .into_iter()
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("three candidates");
        }
        let (a2, b2, c2) = (a[0] * a[0] + a[1] * a[1], b[0] * b[0] + b[1] * b[1], c[0] * c[0] + c[1] * c[1]);
        let u = [
            (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d,
            (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d,
        ];
        (u, dist(a, u))
    };
    let mut c = (pts[0], 0.0);
    for i in 1..pts.len() {
        if inside(c.0, c.1, pts[i]) {
            continue;
        }
        c = (pts[i], 0.0);
        for j in 0..i {
            if inside(c.0, c.1, pts[j]) {
                continue;
            }
            c = circ2(pts[i], pts[j]);
            for k in 0..j {
                if !inside(c.0, c.1, pts[k]) {
                    c = circ3(pts[i], pts[j], pts[k]);
                }
            }
        }
    }
    c.0
}

/// Minimax (Chebyshev-center) Lloyd iteration; returns the best radius seen.
fn minimax_iterate(mut centers: Vec<P2>, target: f64, iters: usize) -> (f64, Vec<P2>) {
    let disk = circumscribed_polygon();
    let mut best = (f64::INFINITY, centers.clone());
    for _ in 0..=iters {
        let cells = voronoi_cells(&centers, &disk);
        let r = radius_from_cells(&centers, &cells);
        if r < best.0 {
            best = (r, centers.clone());
        }
        if best.0 <= target {
            break;
        }
        centers = centers
            .iter()
            .zip(&cells)
            .map(|(&c, cell)| {
                if cell.is_empty() {
                    return c;
                }
                let m = enclosing_center(cell);
                let norm = m[0].hypot(m[1]);
                if norm > 1.0 {
                    [m[0] / norm, m[1] / norm]
                } else {
                    m
                }
            })
            .collect();
    }
    best
}

/// Concentric rings, `counts[0]` points at the center ring; alternate rings
/// are rotated by half a step.
fn rings(counts: &[usize], radii: &[f64]) -> Vec<P2> {
    let mut out = Vec::new();
    for (t, (&m, &rho)) in counts.iter().zip(radii).enumerate() {
        let off = 0.5 * t as f64;
        for i in 0..m {
            let a = 2.0 * std::f64::consts::PI * (i as f64 + off) / m as f64;
            out.push([rho * a.cos(), rho * a.sin()]);
        }
    }
    out
}

/// Ring layouts with `n` points: one center point and ring sizes growing
/// linearly with the ring index.
fn ring_layouts(n: usize, eps: f64) -> Vec<(Vec<usize>, Vec<f64>)> {
    let mut out = Vec::new();
    let guess = (1.0 / (2.0 * eps)).round() as usize;
    for r in guess.saturating_sub(1).max(1)..=guess + 1 {
        let weight: usize = (1..=r).sum();
        let mut counts = vec![1];
        let mut left = n - 1;
        for t in 1..=r {
            let c = if t == r { left } else { ((n - 1) * t + weight / 2) / weight };
            let c = c.min(left);
            counts.push(c);
            left -= c;
        }
        if counts.iter().skip(1).any(|&c| c < 3) {
            continue;
        }
        for outer in [0.85, 0.8, 0.9] {
            // Ring t at outer · (t/r)^0.8: inner rings sit a little wider
            // than even spacing.
            let radii = (0..=r).map(|t| outer * (t as f64 / r as f64).powf(0.8)).collect();
            out.push((counts.clone(), radii));
        }
    }
    out
}

fn planar_net(eps: f64, cap: usize) -> Result<BallNet> {
    let target = eps * (1.0 - RADIUS_TOL);
    let mut best: Option<(f64, Vec<P2>)> = None;
    for (counts, radii) in ring_layouts(cap, eps) {
        let (r, pts) = minimax_iterate(rings(&counts, &radii), target, 400);
        if best.as_ref().is_none_or(|b| r < b.0) {
            best = Some((r, pts));
        }
        if best.as_ref().is_some_and(|b| b.0 <= target) {
            break;
        }
    }
    let (radius, pts) = best.ok_or_else(|| Error::Domain("no ring layout fits the cardinality bound".into()))?;
    if radius > target {
        return Err(Error::Domain(format!(
            "could not certify a planar {eps}-net with {cap} points (best radius {radius:.4})"
        )));
    }
    Ok(BallNet { dim: 2, eps, points: pts.iter().map(|p| p.to_vec()).collect(), radius, method: NetMethod::Certified })
}

// ---------------------------------------------------------------------------
// Higher-dimensional sampled nets

fn uniform_in_ball(rng: &mut SimRng, dim: usize) -> Vec<f64> {
    let mut v = unit_direction(rng, dim);
    let r = rng.uniform().powf(1.0 / dim as f64);
    v.iter_mut().for_each(|x| *x *= r);
    v
}

fn unit_direction(rng: &mut SimRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

fn sampled_net(dim: usize, eps: f64, cap: usize, seed: u64) -> Result<BallNet> {
    let mut rng = SimRng::new(seed, &[0x4E7, dim as u64, eps.to_bits()]);
    let pool_size = (400 * cap).clamp(20_000, 200_000);
    // Half the pool on the sphere, where covering is hardest.
    let pool: Vec<Vec<f64>> = (0..pool_size)
        .map(|i| if i % 2 == 0 { unit_direction(&mut rng, dim) } else { uniform_in_ball(&mut rng, dim) })
        .collect();

    // Farthest-point seeding from the origin.
    let mut centers = vec![vec![0.0; dim]];
    let mut d: Vec<f64> = pool.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < cap {
        let (far, _) = d.iter().enumerate().fold((0, -1.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let c = pool[far].clone();
        for (di, x) in d.iter_mut().zip(&pool) {
            *di = di.min(sq_dist(x, &c));
        }
        centers.push(c);
    }

    let mut best = (pool_radius(&centers, &pool), centers.clone());
    for _ in 0..40 {
        let assign: Vec<usize> = map_indices(pool.len(), |i| nearest(&centers, &pool[i]).0);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
        for (i, &a) in assign.iter().enumerate() {
            members[a].push(i);
        }
        centers = map_indices(centers.len(), |c| {
            let mut x = centers[c].clone();
            if members[c].is_empty() {
                return x;
            }
            // Bădoiu–Clarkson steps toward the farthest member.
            for t in 1..=60 {
                let far = members[c]
                    .iter()
                    .map(|&i| (i, sq_dist(&x, &pool[i])))
                    .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc })
                    .0;
                let step = 1.0 / (t as f64 + 1.0);
                for (xj, pj) in x.iter_mut().zip(&pool[far]) {
                    *xj += step * (pj - *xj);
                }
            }
            let n = dot(&x, &x).sqrt();
            if n > 1.0 {
                x.iter_mut().for_each(|v| *v /= n);
            }
            x
        });
        let r = pool_radius(&centers, &pool);
        if r < best.0 {
            best = (r, centers.clone());
        }
    }
    let (radius, points) = best;
    if radius > eps * 0.98 {
        return Err(Error::Domain(format!(
            "sampled {dim}-dimensional net reached radius {radius:.4} > {eps} with {cap} points"
        )));
    }
    Ok(BallNet { dim, eps, points, radius, method: NetMethod::Sampled })
}

fn pool_radius(centers: &[Vec<f64>], pool: &[Vec<f64>]) -> f64 {
    map_indices(pool.len(), |i| nearest(centers, &pool[i]).1).into_iter().fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Sparse nets

/// ε-net of `Θ_k ⊂ R^p`: ball nets of every size `s ≤ k`, embedded on every
/// support of that size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseNet {
    pub p: usize,
    pub k: usize,
    pub eps: f64,
    /// `balls[s − 1]` is the net used on supports of size `s`.
    pub balls: Vec<BallNet>,
}

pub fn build_net(p: usize, k: usize, eps: f64, seed: u64) -> Result<SparseNet> {
    ModelClass::up_to(p, k)?;
    let balls = (1..=k).map(|s| ball_net(s, eps, seed)).collect::<Result<Vec<_>>>()?;
    let net = SparseNet { p, k, eps, balls };
    net.check_cardinality()?;
    Ok(net)
}

impl SparseNet {
    pub fn len(&self) -> u128 {
        self.balls
            .iter()
            .enumerate()
            .map(|(i, b)| binomial(self.p, i + 1).unwrap_or(u128::MAX).saturating_mul(b.points.len() as u128))
            .fold(0u128, u128::saturating_add)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `Σ_{s ≤ k} C(p, s)(1 + 1/ε)^s`.
    pub fn cardinality_bound(&self) -> f64 {
        (1..=self.k).map(|s| binomial(self.p, s).map_or(f64::INFINITY, |c| c as f64) * ball_cap(s, self.eps)).sum()
    }

    /// `((1 + 1/ε) e p / k)^k`.
    pub fn closed_form_bound(&self) -> f64 {
        ((1.0 + 1.0 / self.eps) * std::f64::consts::E * self.p as f64 / self.k as f64).powi(self.k as i32)
    }

    /// `|net| ≤ Σ C(p, s)(1 + 1/ε)^s ≤ ((1 + 1/ε) e p / k)^k`; a failure is a
    /// construction bug.
    pub fn check_cardinality(&self) -> Result<()> {
        let (n, a, b) = (self.len() as f64, self.cardinality_bound(), self.closed_form_bound());
        if n <= a * (1.0 + 1e-12) && a <= b * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::Domain(format!("net cardinality chain fails: {n} <= {a} <= {b}")))
        }
    }

    /// Every net point as `(support, coordinates on the support)`.
    pub fn points(&self) -> impl Iterator<Item = (ModelIndex, &[f64])> + '_ {
        let class = ModelClass::up_to(self.p, self.k).expect("validated at construction");
        class.iter().flat_map(move |m| {
            let ball = &self.balls[m.len() - 1];
            ball.points.iter().map(move |b| (m.clone(), b.as_slice()))
        })
    }

    /// `max_{θ ∈ net} f(support, coordinates)`, parallel over supports.
    fn max_over<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&ModelIndex, &[f64]) -> f64 + Sync + Send,
    {
        let class = ModelClass::up_to(self.p, self.k)?;
        let best = class.par_argmax(|m| {
            let ball = &self.balls[m.len() - 1];
            Some(ball.points.iter().map(|b| f(m, b)).fold(f64::NEG_INFINITY, f64::max))
        })?;
        Ok(best.map_or(0.0, |b| b.0))
    }

    /// Dense CSV, one row per point: `support,coord_0..coord_{p−1}`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["support".to_string()];
        header.extend((0..self.p).map(|j| format!("theta{j}")));
        wr.write_record(&header)?;
        for (m, b) in self.points() {
            let mut rec = vec![m.to_string()];
            rec.extend(m.scatter(b, self.p).iter().map(f64::to_string));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `max_{θ ∈ N(1/2)} |θᵀv|`; by the net argument `D(k, v)` is at most twice this.
pub fn net_sup_gamma(net: &SparseNet, v: &[f64]) -> Result<f64> {
    if net.eps != 0.5 {
        return Err(Error::input("the vector discretization uses a 1/2-net"));
    }
    if v.len() != net.p {
        return Err(Error::DimensionMismatch { expected: net.p, got: v.len() });
    }
    net.max_over(|m, b| m.as_slice().iter().zip(b).map(|(&j, t)| t * v[j]).sum::<f64>().abs())
}

/// `max_{θ ∈ N(1/4)} |θᵀΔθ|`; `RIP(k, Δ)` is at most twice this.
pub fn net_sup_sigma(net: &SparseNet, delta: &SymmetricMatrix) -> Result<f64> {
    if net.eps != 0.25 {
        return Err(Error::input("the quadratic-form discretization uses a 1/4-net"));
    }
    if delta.dim() != net.p {
        return Err(Error::DimensionMismatch { expected: net.p, got: delta.dim() });
    }
    net.max_over(|m, b| {
        let sub = delta.submatrix(m).expect("support within dimension");
        sub.quad_form(b).abs()
    })
}

/// Covering check on random points of `Θ_k`: support uniform over the model
/// class, direction uniform, radius `U^{1/s}`. Distances are measured to net
/// points on the same support, which over-estimates the true distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub samples: usize,
    pub failures: usize,
    pub max_distance: f64,
}

pub fn validate_covering(net: &SparseNet, samples: usize, seed: u64) -> Result<CoverageReport> {
    let class = ModelClass::up_to(net.p, net.k)?;
    let total = class.count()?;
    let dists = map_indices(samples, |i| {
        let mut rng = SimRng::new(seed, &[0xC07E, i as u64]);
        let rank = ((rng.uniform() * total as f64) as u128).min(total - 1);
        let s = class.unrank(rank).expect("rank within count").len();
        let x = uniform_in_ball(&mut rng, s);
        nearest(&net.balls[s - 1].points, &x).1
    });
    let max_distance = dists.iter().cloned().fold(0.0, f64::max);
    let failures = dists.iter().filter(|&&d| d > net.eps * (1.0 + RADIUS_TOL)).count();
    Ok(CoverageReport { samples, failures, max_distance })
}

/// One random input to the discretization inequalities
/// `net ≤ exact ≤ 2 · net` for `D(k, v)` (1/2-net) and `RIP(k, Δ)` (1/4-net).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizationRow {
    pub trial: usize,
    pub d: f64,
    pub d_net: f64,
    pub rip: f64,
    pub rip_net: f64,
    pub holds: bool,
}

/// Gaussian `v` and symmetric Gaussian `Δ` per trial.
pub fn check_discretization(p: usize, k: usize, trials: usize, seed: u64) -> Result<Vec<DiscretizationRow>> {
    let half = build_net(p, k, 0.5, seed)?;
    let quarter = build_net(p, k, 0.25, seed)?;
    let le = |a: f64, b: f64| a <= b * (1.0 + 1e-12);
    (0..trials)
        .map(|trial| {
            let mut rng = SimRng::new(seed, &[0xD15C, trial as u64]);
            let v: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
            let mut delta = SymmetricMatrix::zeros(p);
            for i in 0..p {
                for j in 0..=i {
                    delta.set(i, j, rng.normal());
                }
            }
            let d = crate::norms::dvec(k, &v)?.value;
            let d_net = net_sup_gamma(&half, &v)?;
            let rip = crate::norms::rip(k, &delta)?.value;
            let rip_net = net_sup_sigma(&quarter, &delta)?;
            let holds = le(d_net, d) && le(d, 2.0 * d_net) && le(rip_net, rip) && le(rip, 2.0 * rip_net);
            Ok(DiscretizationRow { trial, d, d_net, rip, rip_net, holds })
        })
        .collect()
}

/// Columns follow [`DiscretizationRow`].
pub fn write_discretization_csv<W: Write>(rows: &[DiscretizationRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_net() {
        let n = ball_net(1, 0.25, 0).unwrap();
        assert_eq!(n.points, vec![vec![-0.75], vec![-0.25], vec![0.25], vec![0.75]]);
        assert_eq!(n.radius, 0.25);
    }

    #[test]
    fn hexagon_radius_is_certified() {
        // Six points on a ring of radius r plus the origin.
        let mut pts = rings(&[1, 6], &[0.0, 0.6]);
        let r = planar_radius(&pts);
        // The boundary point midway between two ring points is the farthest.
        let gap = dist([1.0, 0.0], [0.6 * (std::f64::consts::PI / 6.0).cos(), 0.6 * (std::f64::consts::PI / 6.0).sin()]);
        assert!(r >= gap - 1e-9);
        pts.pop();
        assert!(planar_radius(&pts) > r);
    }
}

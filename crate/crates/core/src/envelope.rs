//! Plurisubharmonic envelopes of toric weights.
//!
//! In log coordinates `t_j = log|z_j|` a toric function on the disk or the
//! bidisk is psh iff it is convex and nondecreasing in each `t_j`. The
//! envelope is therefore the largest convex, coordinatewise nondecreasing
//! minorant of `u(t) = V(e^{t_1}, …, e^{t_n})`, computed on a finite grid
//! by alternating a suffix-minimum pass with a lower convex hull.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::domains::{make_grid, Domain, Grid, GridMode, GridSpec, Point};
use crate::error::{Error, Result};
use crate::field::SampledField;
use crate::weights::{JointFn, Profile, PshFlag, Weight};

/// Samples `u(t)` of a toric weight on a product grid in log coordinates.
///
/// `values` hold `Σ γ_j t_j + b(e^t)` without the weight's constant shift,
/// which is kept in `offset` so that constant translations stay exact.
/// Below the first node of axis `j` the profile continues with slope
/// `slopes[j]` (constant when the slope is 0).
#[derive(Clone, Debug, PartialEq)]
pub struct LogProfile {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    pub offset: f64,
}

impl LogProfile {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 || slopes.len() != axes.len() {
            return Err(Error::Argument("log profiles need 1 or 2 axes with one slope each".into()));
        }
        for axis in &axes {
            if axis.is_empty() || axis.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Argument("log grid axes must be nonempty and strictly increasing".into()));
            }
        }
        let size: usize = axes.iter().map(Vec::len).product();
        if values.len() != size {
            return Err(Error::Argument(format!("profile has {} values for {size} nodes", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("profile values must be finite".into()));
        }
        if slopes.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::Argument("pole slopes must be finite and nonnegative".into()));
        }
        Ok(Self { axes, values, slopes, offset: 0.0 })
    }

    /// Sample a toric weight on the product of `axes`.
    pub fn sample(w: &Weight, axes: Vec<Vec<f64>>) -> Result<Self> {
        if !w.is_toric() {
            return Err(Error::EngineMismatch(format!("weight `{}` is not toric", w.name())));
        }
        if axes.len() != w.dim() {
            return Err(Error::Argument("log grid and weight dimensions differ".into()));
        }
        let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
        let size: usize = shape.iter().product();
        let values = (0..size)
            .map(|flat| {
                let t = unravel(&shape, flat).iter().enumerate().map(|(d, &i)| axes[d][i]).collect::<Vec<_>>();
                let r: Vec<f64> = t.iter().map(|x| x.exp()).collect();
                let b = w.profile_moduli(&r).expect("toric weight");
                b + w.poles().iter().zip(&t).map(|(g, x)| g * x).sum::<f64>()
            })
            .collect();
        let mut p = Self::new(axes, values, w.poles().to_vec())?;
        p.offset = w.shift();
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Node values including the offset.
    pub fn shifted_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v + self.offset).collect()
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self { values, ..self.clone() }
    }
}

fn unravel(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for d in (0..shape.len()).rev() {
        idx[d] = flat % shape[d];
        flat /= shape[d];
    }
    idx
}

/// Sample a toric weight on a log-radial grid.
pub fn to_log_profile(w: &Weight, grid: &Grid) -> Result<LogProfile> {
    if grid.spec.mode != GridMode::LogRadial {
        return Err(Error::Argument("to_log_profile needs a log-radial grid".into()));
    }
    LogProfile::sample(w, grid.axes.clone())
}

/// Largest coordinatewise nondecreasing minorant on the grid:
/// `ǔ(t) = min { u(s) : s >= t }`.
pub fn monotone_minorant(profile: &LogProfile) -> LogProfile {
    let shape = profile.shape();
    let mut v = profile.values.clone();
    match shape.len() {
        1 => {
            for i in (0..shape[0].saturating_sub(1)).rev() {
                v[i] = v[i].min(v[i + 1]);
            }
        }
        _ => {
            let (p, q) = (shape[0], shape[1]);
            for i in 0..p {
                for j in (0..q - 1).rev() {
                    v[i * q + j] = v[i * q + j].min(v[i * q + j + 1]);
                }
            }
            for i in (0..p - 1).rev() {
                for j in 0..q {
                    v[i * q + j] = v[i * q + j].min(v[(i + 1) * q + j]);
                }
            }
        }
    }
    profile.with_values(v)
}

/// Lower convex hull of the sampled graph, evaluated back on the grid.
///
/// Axes with a positive pole slope `γ_j` also carry the half-line
/// `t_j → −∞` of slope `γ_j`, so the hull stays compatible with the
/// continuation below the grid.
pub fn convex_envelope(profile: &LogProfile) -> Result<LogProfile> {
    if profile.axes.iter().any(|a| a.len() < 2) {
        return Err(Error::Argument("convex_envelope needs at least 2 grid points per axis".into()));
    }
    let rays: Vec<Option<f64>> = profile.slopes.iter().map(|&g| (g > 0.0).then_some(g)).collect();
    let values = match profile.dim() {
        1 => hull_1d(&profile.axes[0], &profile.values, rays[0]),
        _ => HullLp::new(&profile.axes, &profile.values, &rays).solve_all().0,
    };
    Ok(profile.with_values(values))
}

/// Monotone-chain lower hull in 1-D with an optional left ray of slope `γ`.
fn hull_1d(t: &[f64], u: &[f64], ray: Option<f64>) -> Vec<f64> {
    let n = t.len();
    let start = match ray {
        Some(g) => (0..n).fold(0, |best, i| if u[i] - g * t[i] <= u[best] - g * t[best] { i } else { best }),
        None => 0,
    };
    let mut hull: Vec<usize> = Vec::new();
    for i in start..n {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (t[a] - t[o]) * (u[i] - u[o]) - (u[a] - u[o]) * (t[i] - t[o]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = vec![0.0; n];
    if let Some(g) = ray {
        for i in 0..start {
            out[i] = u[start] + g * (t[i] - t[start]);
        }
    }
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let slope = (u[b] - u[a]) / (t[b] - t[a]);
        for i in a..b {
            out[i] = u[a] + slope * (t[i] - t[a]);
        }
    }
    out[hull[hull.len() - 1]] = u[hull[hull.len() - 1]];
    out.iter().zip(u).map(|(h, v)| h.min(*v)).collect()
}

/// Per-node linear program for the lower hull of a sampled graph:
///
/// `min Σ λ_i u_i − Σ_j γ_j μ_j` subject to `Σ λ_i = 1`,
/// `Σ λ_i x_i − Σ_j μ_j e_j = p`, `λ, μ >= 0`,
///
/// whose dual solution is a supporting affine function `y_0 + y·x` with
/// `y_j >= γ_j` on ray axes.
struct HullLp<'a> {
    axes: &'a [Vec<f64>],
    shape: Vec<usize>,
    values: &'a [f64],
    rays: Vec<usize>,
    ray_cost: Vec<f64>,
    tol: f64,
}

const DANTZIG_ITERS: usize = 100;
const MAX_PIVOTS: usize = 10_000;

impl<'a> HullLp<'a> {
    fn new(axes: &'a [Vec<f64>], values: &'a [f64], rays: &[Option<f64>]) -> Self {
        let shape = axes.iter().map(Vec::len).collect();
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let (rays, ray_cost) = rays.iter().enumerate().filter_map(|(j, g)| g.map(|g| (j, -g))).unzip();
        Self { axes, shape, values, rays, ray_cost, tol: 1e-12 * scale }
    }

    fn rows(&self) -> usize {
        self.axes.len() + 1
    }

    /// Column `c` with its cost taken relative to `base` on point columns.
    fn column(&self, c: usize, base: f64) -> ([f64; 3], f64) {
        let n = self.values.len();
        let mut a = [0.0; 3];
        if c < n {
            a[0] = 1.0;
            for (d, &i) in unravel(&self.shape, c).iter().enumerate() {
                a[d + 1] = self.axes[d][i];
            }
            (a, self.values[c] - base)
        } else {
            a[self.rays[c - n] + 1] = -1.0;
            (a, self.ray_cost[c - n])
        }
    }

    fn solve_all(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let out: Vec<(f64, Vec<f64>)> = (0..self.values.len()).into_par_iter().map(|p| self.solve_at(p)).collect();
        out.into_iter().unzip()
    }

    /// Hull value at node `p` and a supporting plane `[y_0, y_1, …]`.
    fn solve_at(&self, p: usize) -> (f64, Vec<f64>) {
        let r = self.rows();
        let idx = unravel(&self.shape, p);
        let mut basis = vec![p];
        for d in 0..self.axes.len() {
            let mut nb = idx.clone();
            nb[d] = if idx[d] + 1 < self.shape[d] { idx[d] + 1 } else { idx[d] - 1 };
            basis.push(ravel(&self.shape, &nb));
        }
        // costs relative to u_p keep trivially supported nodes exact
        let base = self.values[p];
        let (bp, _) = self.column(p, base);
        let b = &bp[..r];
        let total = self.values.len() + self.rays.len();
        let mut y = vec![0.0; r];
        let mut x_b = vec![0.0; r];
        for iter in 0..MAX_PIVOTS {
            let cols: Vec<([f64; 3], f64)> = basis.iter().map(|&c| self.column(c, base)).collect();
            let bmat: Vec<f64> = (0..r).flat_map(|i| (0..r).map(move |k| (i, k))).map(|(i, k)| cols[k].0[i]).collect();
            let bt: Vec<f64> = (0..r * r).map(|q| bmat[(q % r) * r + q / r]).collect();
            x_b = solve_dense(&bmat, b, r);
            let c_b: Vec<f64> = cols.iter().map(|c| c.1).collect();
            y = solve_dense(&bt, &c_b, r);
            let mut entering = None;
            let mut best = -self.tol;
            for c in 0..total {
                let (a, cost) = self.column(c, base);
                let d = cost - (0..r).map(|i| y[i] * a[i]).sum::<f64>();
                if d < best {
                    entering = Some(c);
                    if iter >= DANTZIG_ITERS {
                        break;
                    }
                    best = d;
                }
            }
            let Some(e) = entering else { break };
            let (ae, _) = self.column(e, base);
            let w = solve_dense(&bmat, &ae[..r], r);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..r {
                if w[i] > 1e-12 {
                    let theta = x_b[i].max(0.0) / w[i];
                    let better = match leave {
                        None => true,
                        Some((l, t)) => theta < t || (theta == t && basis[i] < basis[l]),
                    };
                    if better {
                        leave = Some((i, theta));
                    }
                }
            }
            let Some((l, _)) = leave else { break };
            basis[l] = e;
        }
        let rel: f64 = basis.iter().zip(&x_b).map(|(&c, &x)| self.column(c, base).1 * x).sum();
        y[0] += base;
        (base + rel.min(0.0), y)
    }
}

fn ravel(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (i, s)| acc * s + i)
}

/// Gaussian elimination with partial pivoting for a small dense system.
fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs())).unwrap();
        if p != k {
            for j in 0..n {
                m.swap(p * n + j, k * n + j);
            }
            x.swap(p, k);
        }
        let d = m[k * n + k];
        for i in k + 1..n {
            let f = m[i * n + k] / d;
            for j in k..n {
                m[i * n + j] -= f * m[k * n + j];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k * n + j] * x[j]).sum();
        x[k] = (x[k] - s) / m[k * n + k];
    }
    x
}

/// 1-D lower hull through the linear program; an independent check of the
/// monotone-chain routine.
pub fn convex_envelope_lp(profile: &LogProfile) -> Result<Vec<f64>> {
    if profile.axes.iter().any(|a| a.len() < 2) {
        return Err(Error::Argument("convex_envelope needs at least 2 grid points per axis".into()));
    }
    let rays: Vec<Option<f64>> = profile.slopes.iter().map(|&g| (g > 0.0).then_some(g)).collect();
    Ok(HullLp::new(&profile.axes, &profile.values, &rays).solve_all().0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvelopeSummary {
    pub iterations: usize,
    pub final_gap: f64,
    pub monotone_fixpoint: bool,
}

/// Envelope of a toric weight.
#[derive(Clone, Debug)]
pub struct Envelope {
    /// Fixpoint on the working log grid, which reaches `t = log R`.
    pub profile: LogProfile,
    /// Fixpoint restricted to the requested log-radial grid.
    pub field: SampledField,
    pub iterations: usize,
    pub final_gap: f64,
    pub monotone_fixpoint: bool,
    /// Supporting planes per node (2-D only).
    planes: Vec<Vec<f64>>,
}

impl Envelope {
    pub fn summary(&self) -> EnvelopeSummary {
        EnvelopeSummary {
            iterations: self.iterations,
            final_gap: self.final_gap,
            monotone_fixpoint: self.monotone_fixpoint,
        }
    }

    /// `Ṽ(z)`: piecewise linear in `t` (n = 1) or the maximum of the
    /// supporting planes (n = 2), continued below the grid with the pole
    /// slopes.
    pub fn value_at(&self, z: &Point) -> f64 {
        let t: Vec<f64> = z.moduli().iter().map(|r| r.ln()).collect();
        self.value_log(&t)
    }

    /// `Ṽ` at log-moduli `t` (entries may be −∞).
    pub fn value_log(&self, t: &[f64]) -> f64 {
        let p = &self.profile;
        let mut tail = 0.0;
        let mut clamped = Vec::with_capacity(t.len());
        for (d, &x) in t.iter().enumerate() {
            let axis = &p.axes[d];
            let lo = axis[0];
            let hi = axis[axis.len() - 1];
            if x < lo {
                if p.slopes[d] > 0.0 {
                    if x == f64::NEG_INFINITY {
                        return f64::NEG_INFINITY;
                    }
                    tail += p.slopes[d] * (x - lo);
                }
                clamped.push(lo);
            } else {
                clamped.push(x.min(hi));
            }
        }
        self.clamped_value(&clamped) + tail + p.offset
    }

    fn clamped_value(&self, x: &[f64]) -> f64 {
        let p = &self.profile;
        if x.len() == 1 {
            let axis = &p.axes[0];
            let i = axis.partition_point(|&a| a <= x[0]).clamp(1, axis.len() - 1) - 1;
            let frac = (x[0] - axis[i]) / (axis[i + 1] - axis[i]);
            p.values[i] + frac * (p.values[i + 1] - p.values[i])
        } else {
            self.planes
                .iter()
                .map(|y| y[0] + y[1] * x[0] + y[2] * x[1])
                .fold(f64::NEG_INFINITY, f64::max)
        }
    }

    /// Bound on `|Ṽ - Σ γ_j log|z_j||` over the domain.
    fn bounded_part_bound(&self) -> f64 {
        let p = &self.profile;
        let shape = p.shape();
        (0..p.values.len())
            .map(|flat| {
                let idx = unravel(&shape, flat);
                let pole: f64 = idx.iter().enumerate().map(|(d, &i)| p.slopes[d] * p.axes[d][i]).sum();
                (p.values[flat] - pole + p.offset).abs()
            })
            .fold(0.0, f64::max)
    }

    /// The envelope as a psh toric weight with the same pole coefficients.
    pub fn as_weight(&self, name: &str) -> Result<Weight> {
        let env = Arc::new(self.clone());
        let slopes = self.profile.slopes.clone();
        let axes_lo: Vec<f64> = self.profile.axes.iter().map(|a| a[0]).collect();
        let offset = self.profile.offset;
        let f: JointFn = Arc::new(move |r: &[f64]| {
            let t: Vec<f64> = r.iter().zip(&axes_lo).map(|(x, lo)| x.ln().max(*lo)).collect();
            let pole: f64 = t.iter().zip(&slopes).map(|(x, g)| g * x).sum();
            env.clamped_value(&t) - pole + offset
        });
        let bound = self.bounded_part_bound() * (1.0 + 1e-12) + 1e-12;
        let w = Weight::new(name, self.profile.slopes.clone(), Profile::Joint(f), bound, PshFlag::Yes)?;
        Ok(if self.profile.dim() == 1 { w.with_breaks(vec![self.kinks_1d()]) } else { w })
    }

    /// Moduli at which the 1-D piecewise linear profile changes slope.
    fn kinks_1d(&self) -> Vec<f64> {
        let (t, u) = (&self.profile.axes[0], &self.profile.values);
        let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        // the clamp below the first node is a kink too
        std::iter::once(0)
            .chain((1..t.len().saturating_sub(1)).filter(|&i| {
                let left = (u[i] - u[i - 1]) / (t[i] - t[i - 1]);
                let right = (u[i + 1] - u[i]) / (t[i + 1] - t[i]);
                (right - left).abs() > 1e-13 * scale
            }))
            .map(|i| t[i].exp())
            .collect()
    }
}

/// Working log axis: the requested nodes continued with the same spacing up
/// to, and including, `log R`.
fn working_axis(requested: &[f64], radius: f64) -> Vec<f64> {
    let t_max = radius.ln();
    let mut axis = requested.to_vec();
    let h = if requested.len() > 1 { requested[1] - requested[0] } else { t_max - requested[0] };
    let mut next = requested[requested.len() - 1] + h;
    while next < t_max - 1e-9 * h {
        axis.push(next);
        next += h;
    }
    if axis[axis.len() - 1] < t_max {
        axis.push(t_max);
    }
    axis
}

/// Envelope of a toric weight by alternating monotone minorants and convex
/// hulls in log coordinates until the sup-norm change drops below `tol`.
pub fn psh_envelope_toric(w: &Weight, domain: &Domain, spec: &GridSpec, tol: f64, max_iter: usize) -> Result<Envelope> {
    if spec.mode != GridMode::LogRadial {
        return Err(Error::Argument("the envelope oracle needs a log-radial grid".into()));
    }
    if !w.is_toric() {
        return Err(Error::EngineMismatch(format!("weight `{}` is not toric; no envelope oracle", w.name())));
    }
    if w.dim() != domain.dim() {
        return Err(Error::Argument("weight and domain dimensions differ".into()));
    }
    let grid = Arc::new(make_grid(domain, spec)?);
    let axes: Vec<Vec<f64>> =
        grid.axes.iter().enumerate().map(|(d, a)| working_axis(a, domain.radius(d))).collect();
    let mut u = LogProfile::sample(w, axes)?;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = convex_envelope(&monotone_minorant(&u))?;
        gap = next.values.iter().zip(&u.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = next;
        iterations += 1;
        if gap < tol {
            break;
        }
    }
    if !(gap < tol) {
        return Err(Error::Iteration { iterations, gap });
    }
    let monotone_fixpoint = monotone_minorant(&u)
        .values
        .iter()
        .zip(&u.values)
        .all(|(a, b)| (a - b).abs() < tol);
    let planes = if u.dim() == 2 {
        let rays: Vec<Option<f64>> = u.slopes.iter().map(|&g| Some(g)).collect();
        HullLp::new(&u.axes, &u.values, &rays).solve_all().1
    } else {
        Vec::new()
    };
    let shape = u.shape();
    let values = (0..grid.len())
        .map(|flat| {
            let idx = grid.unravel(flat);
            u.values[ravel(&shape, &idx)] + u.offset
        })
        .collect();
    let field = SampledField::new(grid, values)?;
    Ok(Envelope { profile: u, field, iterations, final_gap: gap, monotone_fixpoint, planes })
}

/// Outcome of a sub-mean-value test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubharmonicReport {
    /// Largest `f(c) − (circle average of f)`; −∞ when nothing was tested.
    pub max_violation: f64,
    pub tested: usize,
    /// Circles that leave the domain.
    pub skipped: usize,
}

/// Unit complex directions for circle tests: `e_1` in C, and `e_1`, `e_2`,
/// `(e_1 + e_2)/√2` in C².
pub fn default_directions(n: usize) -> Vec<Vec<Complex64>> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    if n == 1 {
        vec![vec![one]]
    } else {
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        vec![vec![one, zero], vec![zero, one], vec![s, s]]
    }
}

/// Number of angles in circle averages.
pub const CIRCLE_ANGLES: usize = 1024;

/// Sub-mean-value test of `f` on circles `c + ρ e^{iθ} v` for each centre,
/// radius and direction.
pub fn subharmonicity_check(
    f: &(dyn Fn(&Point) -> f64 + Sync),
    domain: &Domain,
    centers: &[Point],
    radii: &[f64],
) -> SubharmonicReport {
    let dirs = default_directions(domain.dim());
    let mut report = SubharmonicReport { max_violation: f64::NEG_INFINITY, tested: 0, skipped: 0 };
    for c in centers {
        for &rho in radii {
            for v in &dirs {
                let inside = c
                    .coords
                    .iter()
                    .zip(v)
                    .zip(domain.radii())
                    .all(|((z, d), r)| z.norm() + rho * d.norm() < *r);
                if !inside {
                    report.skipped += 1;
                    continue;
                }
                let avg = (0..CIRCLE_ANGLES)
                    .into_par_iter()
                    .map(|k| {
                        let e = Complex64::from_polar(rho, 2.0 * PI * k as f64 / CIRCLE_ANGLES as f64);
                        let q = Point::new(c.coords.iter().zip(v).map(|(z, d)| z + e * d).collect());
                        f(&q)
                    })
                    .sum::<f64>()
                    / CIRCLE_ANGLES as f64;
                let centre = f(c);
                let violation = if centre == f64::NEG_INFINITY { f64::NEG_INFINITY } else { centre - avg };
                report.max_violation = report.max_violation.max(violation);
                report.tested += 1;
            }
        }
    }
    report
}

/// [`subharmonicity_check`] on the interpolant of a sampled field.
pub fn subharmonicity_check_field(field: &SampledField, centers: &[Point], radii: &[f64]) -> SubharmonicReport {
    subharmonicity_check(&|z: &Point| field.interpolate(z), &field.grid.domain, centers, radii)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{catalog, WeightParams};

    fn profile_1d(t: Vec<f64>, u: Vec<f64>) -> LogProfile {
        LogProfile::new(vec![t], u, vec![0.0]).unwrap()
    }

    fn disk(name: &str) -> Weight {
        catalog(name, &WeightParams::default(), 1).unwrap()
    }

    fn linspace(a: f64, b: f64, p: usize) -> Vec<f64> {
        (0..p).map(|k| a + (b - a) * k as f64 / (p - 1) as f64).collect()
    }

    #[test]
    fn minorant_examples() {
        let p = profile_1d(vec![0.0, 1.0, 2.0], vec![3.0, 1.0, 2.0]);
        assert_eq!(monotone_minorant(&p).values, vec![1.0, 1.0, 2.0]);
        let inc = profile_1d(vec![0.0, 1.0, 2.0], vec![-1.0, 0.5, 2.0]);
        assert_eq!(monotone_minorant(&inc).values, inc.values);
        let t = linspace(-8.0, 0.0, 33);
        let u: Vec<f64> = t.iter().map(|x| -(2.0 * x).exp()).collect();
        assert!(monotone_minorant(&profile_1d(t, u)).values.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn hull_examples() {
        let bump = profile_1d(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]);
        assert_eq!(convex_envelope(&bump).unwrap().values, vec![0.0, 0.0, 0.0]);

        let t = linspace(-8.0, 0.0, 33);
        let convex: Vec<f64> = t.iter().map(|x| (2.0 * x).exp()).collect();
        let out = convex_envelope(&profile_1d(t.clone(), convex.clone())).unwrap();
        for (a, b) in out.values.iter().zip(&convex) {
            assert!((a - b).abs() < 1e-12);
        }

        let concave: Vec<f64> = t.iter().map(|x| -(2.0 * x).exp()).collect();
        let out = convex_envelope(&profile_1d(t.clone(), concave)).unwrap();
        let (a, b) = (-(-16.0f64).exp(), -1.0);
        for (x, v) in t.iter().zip(&out.values) {
            let chord = a + (b - a) * (x + 8.0) / 8.0;
            assert!((v - chord).abs() < 1e-12);
        }
    }

    #[test]
    fn hull_needs_two_points() {
        let p = profile_1d(vec![0.0], vec![1.0]);
        assert!(matches!(convex_envelope(&p), Err(Error::Argument(_))));
    }

    #[test]
    fn pole_ray_limits_the_slope() {
        // slope-1 pole with a bump at the left end: the hull may not be
        // flatter than the pole
        let t = vec![-2.0, -1.0, 0.0];
        let p = LogProfile::new(vec![t], vec![-1.0, -1.0, 0.0], vec![1.0]).unwrap();
        let out = convex_envelope(&p).unwrap();
        assert_eq!(out.values, vec![-2.0, -1.0, 0.0]);
        assert_eq!(convex_envelope_lp(&p).unwrap(), out.values);
    }

    #[test]
    fn log_radial_sampling() {
        let grid = make_grid(&Domain::unit_disk(), &GridSpec::log_radial(5, 0.05, -3.0)).unwrap();
        assert!(to_log_profile(&disk("zero"), &grid).unwrap().values.iter().all(|&v| v == 0.0));
        let pole = to_log_profile(&disk("log_pole"), &grid).unwrap();
        assert_eq!(pole.slopes, vec![1.0]);
        for (t, v) in grid.axes[0].iter().zip(&pole.values) {
            assert!((t - v).abs() < 1e-15);
        }
        let neg = to_log_profile(&disk("neg_abs_square"), &grid).unwrap();
        for (t, v) in grid.axes[0].iter().zip(&neg.values) {
            assert!((v + (2.0 * t).exp()).abs() < 1e-15);
        }
        let bump = catalog("angular_bump", &WeightParams::default(), 1).unwrap();
        assert!(matches!(to_log_profile(&bump, &grid), Err(Error::EngineMismatch(_))));
    }

    fn envelope(w: &Weight, domain: &Domain) -> Envelope {
        psh_envelope_toric(w, domain, &GridSpec::log_radial(24, 0.05, -6.0), 1e-9, 50).unwrap()
    }

    #[test]
    fn envelope_of_neg_abs_square_is_minus_one() {
        for domain in [Domain::unit_disk(), Domain::unit_polydisk()] {
            let w = catalog("neg_abs_square", &WeightParams::default(), domain.dim()).unwrap();
            let env = envelope(&w, &domain);
            let target = -(domain.dim() as f64);
            assert!(env.field.values.iter().all(|&v| v == target), "{:?}", env.field.values);
            assert!(env.monotone_fixpoint);
            assert!(env.iterations <= 50);
            let z = Point::real(&vec![0.3; domain.dim()]);
            assert!((env.value_at(&z) - target).abs() < 1e-12);
        }
    }

    #[test]
    fn psh_weights_are_their_own_envelope() {
        for name in ["zero", "log_pole", "abs_square"] {
            for domain in [Domain::unit_disk(), Domain::unit_polydisk()] {
                let w = catalog(name, &WeightParams::default(), domain.dim()).unwrap();
                let env = envelope(&w, &domain);
                for (p, v) in env.field.grid.points.iter().zip(&env.field.values) {
                    assert!((w.value(p) - v).abs() < 1e-12, "{name} n={} at {p}", domain.dim());
                }
            }
        }
    }

    #[test]
    fn envelope_value_at_poles_and_tails() {
        let env = envelope(&disk("log_pole"), &Domain::unit_disk());
        assert_eq!(env.value_at(&Point::real(&[0.0])), f64::NEG_INFINITY);
        assert!((env.value_at(&Point::real(&[1e-4])) - 1e-4f64.ln()).abs() < 1e-12);
        let zero = envelope(&disk("zero"), &Domain::unit_disk());
        assert_eq!(zero.value_at(&Point::real(&[0.0])), 0.0);
    }

    #[test]
    fn envelope_as_weight_round_trips() {
        let domain = Domain::unit_polydisk();
        let w = catalog("abs_square", &WeightParams::default(), 2).unwrap();
        let env = envelope(&w, &domain);
        let lifted = env.as_weight("env").unwrap();
        assert!(lifted.is_toric());
        for p in env.field.grid.points.iter().step_by(37) {
            assert!((lifted.value(p) - env.value_at(p)).abs() < 1e-12);
        }
        let pole = envelope(&disk("log_pole"), &Domain::unit_disk()).as_weight("p").unwrap();
        assert_eq!(pole.poles(), &[1.0]);
        assert!((pole.value(&Point::real(&[0.5])) - 0.5f64.ln()).abs() < 1e-12);
        assert!(pole.bounded_part(&Point::real(&[0.0])).abs() < 1e-12);
    }

    #[test]
    fn sub_mean_value_examples() {
        let domain = Domain::unit_disk();
        let c = [Point::real(&[0.0])];
        let sq = subharmonicity_check(&|z: &Point| z.coords[0].norm_sqr(), &domain, &c, &[0.5]);
        assert!(sq.max_violation <= 1e-6);
        let flat = subharmonicity_check(&|_: &Point| 2.5, &domain, &c, &[0.5]);
        assert!(flat.max_violation.abs() < 1e-14);
        let neg = subharmonicity_check(&|z: &Point| -z.coords[0].norm_sqr(), &domain, &c, &[0.5]);
        assert!(neg.max_violation >= 0.01);
        assert!((neg.max_violation - 0.25).abs() < 1e-12);
        let out = subharmonicity_check(&|_: &Point| 0.0, &domain, &[Point::real(&[0.8])], &[0.5]);
        assert_eq!((out.tested, out.skipped), (0, 1));
    }
}

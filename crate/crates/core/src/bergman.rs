//! Diagonal weighted Bergman kernels `K_{mV}(z)`.
//!
//! Two engines compute the extremal value
//! `sup { |f(z)|² : f holomorphic, ‖f‖_{mV} = 1 }` on a truncated monomial
//! space:
//!
//! * [`ToricKernel`] — for weights depending only on the moduli, monomials are
//!   orthogonal, so `K = Σ_α |z^α|² / ‖z^α‖²` with moments from [`MomentTable`].
//! * [`GramKernel`] — for arbitrary bounded parts on the disk, the full
//!   monomial Gram matrix is assembled by quadrature and inverted through a
//!   Jacobi-scaled, pivoted Cholesky factorization with relative pivot
//!   clipping. Clipped directions are dropped from the space, so the result
//!   is the kernel of a smaller space and still bounds the true `K` from below.
//!
//! Radial integrals `∫_0^R r^s g(r) dr` with `s = s0 + e` are computed after
//! the substitution `r = R u^{1/(s0+1)}`, which turns the leading power
//! (including the pole shift `-2mγ`) into a bounded integrand.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::domains::{Domain, Point};
use crate::error::{Error, Result};
use crate::quadrature::{max_rel_diff, refine_split, QuadSpec, Rule};
use crate::weights::{AxisFn, Profile, Weight};

/// Whether `z^α` has finite `‖·‖_{mV}` for the pole coefficients `γ`:
/// `α_j > m γ_j − 1` for every coordinate. The borderline exponent is excluded.
pub fn inclusion_test(gamma: &[f64], m: u32, alpha: &[usize]) -> bool {
    gamma
        .iter()
        .zip(alpha)
        .all(|(&g, &a)| a as f64 > m as f64 * g - 1.0)
}

/// Smallest degree admitted by [`inclusion_test`] on one axis.
pub fn first_included(gamma: f64, m: u32) -> usize {
    let mut a = (m as f64 * gamma - 1.0).floor().max(-1.0) as i64 + 1;
    while a > 0 && inclusion_test(&[gamma], m, &[(a - 1) as usize]) {
        a -= 1;
    }
    let mut a = a.max(0) as usize;
    while !inclusion_test(&[gamma], m, &[a]) {
        a += 1;
    }
    a
}

/// Default per-axis degree cap `max(60, 4·m·γ_max + 40)`.
pub fn default_degree(m: u32, gamma_max: f64) -> usize {
    60usize.max((4.0 * m as f64 * gamma_max + 40.0).ceil() as usize)
}

/// Truncated monomial basis: all `α` with `first_j <= α_j <= max_degree`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisSpec {
    pub max_degree: usize,
    pub first: Vec<usize>,
}

impl BasisSpec {
    pub fn new(gamma: &[f64], m: u32, max_degree: usize) -> Self {
        Self { max_degree, first: gamma.iter().map(|&g| first_included(g, m)).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.first.iter().any(|&a| a > self.max_degree)
    }

    pub fn axis_len(&self, axis: usize) -> usize {
        (self.max_degree + 1).saturating_sub(self.first[axis])
    }

    pub fn size(&self) -> usize {
        (0..self.first.len()).map(|j| self.axis_len(j)).product()
    }

    /// Included multi-indices in lexicographic order.
    pub fn included(&self) -> Vec<Vec<usize>> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut out = vec![Vec::new()];
        for &a in &self.first {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (a..=self.max_degree).map(move |k| {
                        let mut v = prefix.clone();
                        v.push(k);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

/// `r = R u^p` with `p = 1 / (s0 + 1)`, mapping `∫_0^R r^{s0+e} g dr` to
/// `R^{s0+e+1} p ∫_0^1 u^{e p} g(R u^p) du`.
#[derive(Clone, Copy, Debug)]
struct Substitution {
    radius: f64,
    s0: f64,
    p: f64,
}

impl Substitution {
    fn new(radius: f64, gamma: f64, m: u32, first: usize) -> Self {
        let s0 = 2.0 * first as f64 + 1.0 - 2.0 * m as f64 * gamma;
        Self { radius, s0, p: 1.0 / (s0 + 1.0) }
    }

    fn prefactor(&self, e: f64) -> f64 {
        self.radius.powf(self.s0 + e + 1.0) * self.p
    }

    fn r(&self, u: f64) -> f64 {
        self.radius * u.powf(self.p)
    }

    /// Images of radial breakpoints in the `u` variable.
    fn u_breaks(&self, breaks: &[f64]) -> Vec<f64> {
        breaks
            .iter()
            .filter(|&&b| b > 0.0 && b < self.radius)
            .map(|b| (b / self.radius).powf(1.0 / self.p))
            .collect()
    }
}

/// `‖z^α‖²_{mV}` for every α of a basis, without the weight's constant
/// shift (which enters as the exact factor `e^{-2m·shift}`).
#[derive(Clone, Debug)]
pub struct MomentTable {
    pub m: u32,
    pub basis: BasisSpec,
    pub quad_tol: f64,
    /// Refinement-difference estimate of the relative accuracy (0 when exact).
    pub achieved: f64,
    shift: f64,
    norms: Norms,
}

#[derive(Clone, Debug)]
enum Norms {
    /// Per-axis radial moments `n_j(k)`, `k = first_j..=N`; norm is the product.
    Separable(Vec<Vec<f64>>),
    /// Row-major `(α_1 - first_1, α_2 - first_2)` table.
    Joint { cols: usize, values: Vec<f64> },
}

impl MomentTable {
    pub fn new(weight: &Weight, domain: &Domain, m: u32, max_degree: usize, quad: &QuadSpec) -> Result<Self> {
        if m == 0 {
            return Err(Error::Argument("m must be a positive integer".into()));
        }
        if weight.dim() != domain.dim() {
            return Err(Error::Argument("weight and domain dimensions differ".into()));
        }
        let basis = BasisSpec::new(weight.poles(), m, max_degree);
        let n = domain.dim();
        let (norms, achieved) = match weight.profile() {
            Profile::Zero => {
                let axes = (0..n).map(|j| axis_moments(domain, weight, j, None, m, &basis, quad)).collect::<Result<Vec<_>>>()?;
                let achieved = axes.iter().map(|a| a.1).fold(0.0, f64::max);
                (Norms::Separable(axes.into_iter().map(|a| a.0).collect()), achieved)
            }
            Profile::Separable(fs) => {
                let axes = (0..n)
                    .map(|j| axis_moments(domain, weight, j, fs[j].as_ref(), m, &basis, quad))
                    .collect::<Result<Vec<_>>>()?;
                let achieved = axes.iter().map(|a| a.1).fold(0.0, f64::max);
                (Norms::Separable(axes.into_iter().map(|a| a.0).collect()), achieved)
            }
            Profile::Joint(f) => {
                if n != 2 {
                    let f = f.clone();
                    let g: AxisFn = Arc::new(move |r| f(&[r]));
                    let (v, a) = axis_moments(domain, weight, 0, Some(&g), m, &basis, quad)?;
                    (Norms::Separable(vec![v]), a)
                } else {
                    joint_moments(domain, weight, f, m, &basis, quad)?
                }
            }
            Profile::General(_) => {
                return Err(Error::EngineMismatch(format!(
                    "weight `{}` is not toric; use the Gram engine",
                    weight.name()
                )))
            }
        };
        Ok(Self { m, basis, quad_tol: quad.tol, achieved, shift: weight.shift(), norms })
    }

    /// `‖z^α‖²_{mV}` including the shift factor.
    pub fn norm(&self, alpha: &[usize]) -> Result<f64> {
        let inside = alpha.iter().zip(&self.basis.first).all(|(&a, &f)| a >= f && a <= self.basis.max_degree);
        if !inside {
            return Err(Error::ExcludedMonomial { alpha: alpha.to_vec(), m: self.m });
        }
        Ok(self.raw_norm(alpha) * (-2.0 * self.m as f64 * self.shift).exp())
    }

    fn raw_norm(&self, alpha: &[usize]) -> f64 {
        match &self.norms {
            Norms::Separable(axes) => axes
                .iter()
                .zip(alpha.iter().zip(&self.basis.first))
                .map(|(v, (&a, &f))| v[a - f])
                .product(),
            Norms::Joint { cols, values } => {
                let i = alpha[0] - self.basis.first[0];
                let j = alpha[1] - self.basis.first[1];
                values[i * cols + j]
            }
        }
    }
}

fn axis_moments(
    domain: &Domain,
    weight: &Weight,
    axis: usize,
    profile: Option<&AxisFn>,
    m: u32,
    basis: &BasisSpec,
    quad: &QuadSpec,
) -> Result<(Vec<f64>, f64)> {
    let first = basis.first[axis];
    let count = basis.axis_len(axis);
    let sub = Substitution::new(domain.radius(axis), weight.poles()[axis], m, first);
    let exps: Vec<f64> = (0..count).map(|k| 2.0 * k as f64).collect();
    let prefactors: Vec<f64> = exps.iter().map(|&e| 2.0 * PI * sub.prefactor(e)).collect();
    let Some(f) = profile else {
        // ∫_0^1 u^{e p} du in closed form
        let v = exps.iter().zip(&prefactors).map(|(&e, &c)| c / (e * sub.p + 1.0)).collect();
        return Ok((v, 0.0));
    };
    let mf = m as f64;
    let compute = |rule: &Rule| -> Vec<f64> {
        let mut acc = vec![0.0; count];
        for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
            let g = w * (-2.0 * mf * f(sub.r(u))).exp();
            let step = u.powf(2.0 * sub.p);
            let mut pw = 1.0;
            for a in acc.iter_mut() {
                *a += g * pw;
                pw *= step;
            }
        }
        acc.iter().zip(&prefactors).map(|(a, c)| a * c).collect()
    };
    let breaks = sub.u_breaks(weight.breaks(axis));
    let out = refine_split(quad, &breaks, compute, |a, b| max_rel_diff(a, b))?;
    Ok((out.value, out.achieved))
}

fn joint_moments(
    domain: &Domain,
    weight: &Weight,
    f: &Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    m: u32,
    basis: &BasisSpec,
    quad: &QuadSpec,
) -> Result<(Norms, f64)> {
    let subs: Vec<Substitution> = (0..2)
        .map(|j| Substitution::new(domain.radius(j), weight.poles()[j], m, basis.first[j]))
        .collect();
    let (k1, k2) = (basis.axis_len(0), basis.axis_len(1));
    let mf = m as f64;
    // tensor rules grow quadratically; cap the per-axis size
    let spec = QuadSpec { max_nodes: quad.max_nodes.min(2048), ..*quad };
    let compute = |rule: &Rule| -> Vec<f64> {
        let l = rule.len();
        let powers = |sub: &Substitution, count: usize| -> Vec<f64> {
            let mut out = vec![0.0; l * count];
            for (i, &u) in rule.nodes.iter().enumerate() {
                let step = u.powf(2.0 * sub.p);
                let mut pw = 1.0;
                for k in 0..count {
                    out[i * count + k] = pw;
                    pw *= step;
                }
            }
            out
        };
        let p1 = powers(&subs[0], k1);
        let p2 = powers(&subs[1], k2);
        let radii1: Vec<f64> = rule.nodes.iter().map(|&u| subs[0].r(u)).collect();
        let radii2: Vec<f64> = rule.nodes.iter().map(|&u| subs[1].r(u)).collect();
        let mut inner = vec![0.0; l * k2];
        for i in 0..l {
            for j in 0..l {
                let g = rule.weights[i] * rule.weights[j] * (-2.0 * mf * f(&[radii1[i], radii2[j]])).exp();
                for k in 0..k2 {
                    inner[i * k2 + k] += g * p2[j * k2 + k];
                }
            }
        }
        let mut out = vec![0.0; k1 * k2];
        for i in 0..l {
            for a in 0..k1 {
                let w = p1[i * k1 + a];
                for b in 0..k2 {
                    out[a * k2 + b] += w * inner[i * k2 + b];
                }
            }
        }
        for a in 0..k1 {
            for b in 0..k2 {
                out[a * k2 + b] *= 4.0 * PI * PI * subs[0].prefactor(2.0 * a as f64) * subs[1].prefactor(2.0 * b as f64);
            }
        }
        out
    };
    let mut breaks = subs[0].u_breaks(weight.breaks(0));
    breaks.extend(subs[1].u_breaks(weight.breaks(1)));
    let out = refine_split(&spec, &breaks, compute, |a, b| max_rel_diff(a, b))?;
    Ok((Norms::Joint { cols: k2, values: out.value }, out.achieved))
}

/// Condition flag attached to a kernel value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CondFlag {
    Ok,
    /// Every monomial up to the degree cap was excluded.
    EmptySpace,
    /// The Gram factorization dropped this many directions.
    Clipped(usize),
}

impl fmt::Display for CondFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CondFlag::Ok => write!(f, "ok"),
            CondFlag::EmptySpace => write!(f, "empty"),
            CondFlag::Clipped(k) => write!(f, "clipped:{k}"),
        }
    }
}

/// Diagonal kernel value with its truncation diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelValue {
    pub k: f64,
    /// `ln K`, kept separately so that constant shifts stay exact.
    pub log_k: f64,
    /// Estimated contribution of the omitted degrees relative to `K`.
    pub tail_ratio: f64,
    pub basis_size: usize,
    pub flag: CondFlag,
}

impl KernelValue {
    fn empty() -> Self {
        Self { k: 0.0, log_k: f64::NEG_INFINITY, tail_ratio: 0.0, basis_size: 0, flag: CondFlag::EmptySpace }
    }

    /// Relative tail (0 for an empty space).
    pub fn rel_tail(&self) -> f64 {
        self.tail_ratio
    }
}

/// A truncated weighted Bergman space with an explicit basis.
pub trait KernelEngine: Send + Sync {
    fn m(&self) -> u32;

    fn kernel(&self, z: &Point) -> Result<KernelValue>;

    /// Basis functions evaluated at `z`.
    fn basis_values(&self, z: &Point) -> Vec<Complex64>;

    /// `‖Σ x_k e_k‖²_{mV}`.
    fn norm_sq(&self, coeffs: &[Complex64]) -> f64;

    /// Coefficients of the (truncated) reproducing element at `z`.
    fn reproducing_coeffs(&self, z: &Point) -> Vec<Complex64>;
}

/// Toric engine: orthogonal monomials, `K = Σ |z^α|² / ‖z^α‖²`.
#[derive(Clone, Debug)]
pub struct ToricKernel {
    domain: Domain,
    table: MomentTable,
}

impl ToricKernel {
    pub fn new(weight: &Weight, domain: &Domain, m: u32, max_degree: usize, quad: &QuadSpec) -> Result<Self> {
        let table = MomentTable::new(weight, domain, m, max_degree, quad)?;
        Ok(Self { domain: domain.clone(), table })
    }

    pub fn table(&self) -> &MomentTable {
        &self.table
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.table.basis
    }

    fn check_point(&self, z: &Point) -> Result<()> {
        if !self.domain.contains(z) {
            return Err(Error::OutsideDomain { point: z.to_string() });
        }
        Ok(())
    }

    /// Per-axis term sequences `|z_j|^{2k} / n_j(k)` for separable tables,
    /// divided by the leading power `|z_j|^{2 first_j}`.
    fn axis_terms(&self, moduli: &[f64]) -> Vec<Vec<f64>> {
        match &self.table.norms {
            Norms::Separable(axes) => axes
                .iter()
                .enumerate()
                .map(|(j, norms)| {
                    let rho2 = moduli[j] * moduli[j];
                    let mut pw = 1.0;
                    norms
                        .iter()
                        .map(|n| {
                            let t = pw / n;
                            pw *= rho2;
                            t
                        })
                        .collect()
                })
                .collect(),
            Norms::Joint { .. } => unreachable!("joint tables have no per-axis terms"),
        }
    }
}

/// Geometric tail estimate from the last two terms of a series.
fn geometric_tail(terms: &[f64]) -> f64 {
    let n = terms.len();
    if n == 0 {
        return 0.0;
    }
    let last = terms[n - 1];
    if last == 0.0 {
        return 0.0;
    }
    if n < 2 || terms[n - 2] == 0.0 {
        return f64::INFINITY;
    }
    let ratio = last / terms[n - 2];
    if ratio >= 1.0 {
        f64::INFINITY
    } else {
        last * ratio / (1.0 - ratio)
    }
}

impl KernelEngine for ToricKernel {
    fn m(&self) -> u32 {
        self.table.m
    }

    fn kernel(&self, z: &Point) -> Result<KernelValue> {
        self.check_point(z)?;
        let basis = &self.table.basis;
        if basis.is_empty() {
            return Ok(KernelValue::empty());
        }
        let moduli = z.moduli();
        // leading powers stay in log form so that high degrees cannot underflow
        let log_lead: f64 = basis
            .first
            .iter()
            .zip(&moduli)
            .map(|(&f, r)| if f == 0 { 0.0 } else { 2.0 * f as f64 * r.ln() })
            .sum();
        let (raw, raw_tail) = match &self.table.norms {
            Norms::Separable(_) => {
                let terms = self.axis_terms(&moduli);
                let sums: Vec<f64> = terms.iter().map(|t| t.iter().sum()).collect();
                let tails: Vec<f64> = terms.iter().map(|t| geometric_tail(t)).collect();
                let k: f64 = sums.iter().product();
                let upper: f64 = sums.iter().zip(&tails).map(|(s, t)| s + t).product();
                (k, if upper.is_finite() { (upper - k).max(0.0) } else { f64::INFINITY })
            }
            Norms::Joint { cols, values } => {
                let rows = values.len() / cols;
                let r1 = moduli[0] * moduli[0];
                let r2 = moduli[1] * moduli[1];
                let mut row_sums = vec![0.0; rows];
                let mut col_sums = vec![0.0; *cols];
                let mut p1 = 1.0;
                for a in 0..rows {
                    let mut p2 = 1.0;
                    for b in 0..*cols {
                        let t = p1 * p2 / values[a * cols + b];
                        row_sums[a] += t;
                        col_sums[b] += t;
                        p2 *= r2;
                    }
                    p1 *= r1;
                }
                let k: f64 = row_sums.iter().sum();
                (k, geometric_tail(&row_sums) + geometric_tail(&col_sums))
            }
        };
        let log_k = raw.ln() + log_lead + 2.0 * self.table.m as f64 * self.table.shift;
        Ok(KernelValue {
            k: log_k.exp(),
            log_k,
            tail_ratio: if raw > 0.0 { raw_tail / raw } else { 0.0 },
            basis_size: basis.size(),
            flag: CondFlag::Ok,
        })
    }

    fn basis_values(&self, z: &Point) -> Vec<Complex64> {
        self.table
            .basis
            .included()
            .iter()
            .map(|alpha| alpha.iter().zip(&z.coords).map(|(&a, c)| c.powu(a as u32)).product())
            .collect()
    }

    fn norm_sq(&self, coeffs: &[Complex64]) -> f64 {
        self.table
            .basis
            .included()
            .iter()
            .zip(coeffs)
            .map(|(alpha, x)| x.norm_sqr() * self.table.norm(alpha).unwrap_or(f64::INFINITY))
            .sum()
    }

    fn reproducing_coeffs(&self, z: &Point) -> Vec<Complex64> {
        let values = self.basis_values(z);
        self.table
            .basis
            .included()
            .iter()
            .zip(values)
            .map(|(alpha, v)| v.conj() / self.table.norm(alpha).unwrap_or(f64::INFINITY))
            .collect()
    }
}

/// `‖z^α‖²_{mV}` for a toric weight.
pub fn monomial_norm(weight: &Weight, domain: &Domain, m: u32, alpha: &[usize], quad: &QuadSpec) -> Result<f64> {
    if !weight.is_toric() {
        return Err(Error::EngineMismatch(format!("weight `{}` is not toric", weight.name())));
    }
    if !inclusion_test(weight.poles(), m, alpha) {
        return Err(Error::ExcludedMonomial { alpha: alpha.to_vec(), m });
    }
    let max_degree = alpha.iter().copied().max().unwrap_or(0);
    MomentTable::new(weight, domain, m, max_degree, quad)?.norm(alpha)
}

/// `(K, tail)` by the toric engine at a single point.
pub fn kernel_diag_toric(
    weight: &Weight,
    domain: &Domain,
    m: u32,
    z: &Point,
    max_degree: usize,
    quad: &QuadSpec,
) -> Result<KernelValue> {
    ToricKernel::new(weight, domain, m, max_degree, quad)?.kernel(z)
}

/// Diagnostics of the Gram factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub basis_size: usize,
    pub rank: usize,
    /// Smallest retained pivot relative to the largest.
    pub min_pivot_ratio: f64,
    pub max_asymmetry: f64,
    pub quad_achieved: f64,
    pub warnings: Vec<String>,
}

/// Pivoted Cholesky factor `P^T A P ≈ L L^H` of a Hermitian PSD matrix.
#[derive(Clone, Debug)]
struct PivotedCholesky {
    n: usize,
    perm: Vec<usize>,
    rank: usize,
    /// Row-major n×n, only the first `rank` columns are meaningful.
    l: Vec<Complex64>,
    pivots: Vec<f64>,
}

/// Pivots below `-INDEFINITE_TOL × largest` mean the matrix is not PSD.
const INDEFINITE_TOL: f64 = 1e-8;

impl PivotedCholesky {
    fn factor(a: &[Complex64], n: usize, clip: f64) -> Result<Self> {
        let mut w = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::new();
        let mut largest = 0.0;
        let mut rank = 0;
        for k in 0..n {
            let (p, piv) = (k..n)
                .map(|i| (i, w[i * n + i].re))
                .fold((k, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
            if k == 0 {
                largest = piv;
                if !(largest > 0.0) {
                    return Err(Error::Conditioning(format!("largest pivot {largest:e} is not positive")));
                }
            }
            let lowest = (k..n).map(|i| (i, w[i * n + i].re)).fold((k, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
            if lowest.1 < -INDEFINITE_TOL * largest {
                return Err(Error::Conditioning(format!(
                    "matrix is indefinite: pivot {} of basis element {} has value {:e}",
                    k, perm[lowest.0], lowest.1
                )));
            }
            if piv < clip * largest {
                break;
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    w.swap(p * n + j, k * n + j);
                }
                for i in 0..n {
                    w.swap(i * n + p, i * n + k);
                }
            }
            let d = piv.sqrt();
            w[k * n + k] = Complex64::new(d, 0.0);
            for i in k + 1..n {
                w[i * n + k] /= d;
            }
            for i in k + 1..n {
                let lik = w[i * n + k];
                for j in k + 1..=i {
                    let v = lik * w[j * n + k].conj();
                    w[i * n + j] -= v;
                    w[j * n + i] = w[i * n + j].conj();
                }
            }
            pivots.push(piv);
            rank += 1;
        }
        Ok(Self { n, perm, rank, l: w, pivots })
    }

    /// `y = L^{-1} v_P` restricted to the retained pivots.
    fn forward(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut y: Vec<Complex64> = (0..self.rank).map(|i| v[self.perm[i]]).collect();
        for i in 0..self.rank {
            for k in 0..i {
                let t = self.l[i * n + k] * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[i * n + i].re;
        }
        y
    }

    /// `x = P L^{-H} y`, zero on clipped directions.
    fn backward(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..self.rank).rev() {
            for k in i + 1..self.rank {
                let t = self.l[k * n + i].conj() * x[k];
                x[i] -= t;
            }
            x[i] /= self.l[i * n + i].re;
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..self.rank {
            out[self.perm[i]] = x[i];
        }
        out
    }
}

/// Gram engine for general bounded parts on the disk.
#[derive(Clone, Debug)]
pub struct GramKernel {
    domain: Domain,
    m: u32,
    first: usize,
    size: usize,
    shift: f64,
    /// Row-major Gram matrix without the shift factor.
    gram: Vec<Complex64>,
    scale: Vec<f64>,
    factor: Option<PivotedCholesky>,
    report: ConditionReport,
}

/// Relative asymmetry accepted before factorization.
pub const HERMITIAN_TOL: f64 = 1e-12;

impl GramKernel {
    pub fn new(
        weight: &Weight,
        domain: &Domain,
        m: u32,
        max_degree: usize,
        quad: &QuadSpec,
        clip_threshold: f64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::Argument("m must be a positive integer".into()));
        }
        if domain.dim() != 1 || weight.dim() != 1 {
            return Err(Error::EngineMismatch("the Gram engine is implemented for n = 1".into()));
        }
        let gamma = weight.poles()[0];
        let first = first_included(gamma, m);
        let size = (max_degree + 1).saturating_sub(first);
        let mut report = ConditionReport {
            basis_size: size,
            rank: 0,
            min_pivot_ratio: 1.0,
            max_asymmetry: 0.0,
            quad_achieved: 0.0,
            warnings: Vec::new(),
        };
        if size == 0 {
            return Ok(Self {
                domain: domain.clone(),
                m,
                first,
                size,
                shift: weight.shift(),
                gram: Vec::new(),
                scale: Vec::new(),
                factor: None,
                report,
            });
        }
        let sub = Substitution::new(domain.radius(0), gamma, m, first);
        let angles = (2 * size + 64).next_power_of_two();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(angles);
        let mf = m as f64;
        let w = weight.clone();
        let compute = |rule: &Rule| -> Vec<Complex64> {
            let mut g = vec![Complex64::new(0.0, 0.0); size * size];
            let mut buf = vec![Complex64::new(0.0, 0.0); angles];
            let mut coef = vec![Complex64::new(0.0, 0.0); 2 * size - 1];
            let mut pw = vec![0.0; 2 * size - 1];
            let mut z = [Complex64::new(0.0, 0.0)];
            for (&u, &wt) in rule.nodes.iter().zip(&rule.weights) {
                let r = sub.r(u);
                for (l, b) in buf.iter_mut().enumerate() {
                    z[0] = Complex64::from_polar(r, 2.0 * PI * l as f64 / angles as f64);
                    *b = Complex64::new((-2.0 * mf * w.profile_value(&z)).exp(), 0.0);
                }
                fft.process(&mut buf);
                // c_d = (1/M) Σ_l E_l e^{i d θ_l} = X_{-d mod M} / M
                for (i, c) in coef.iter_mut().enumerate() {
                    let d = i as i64 - (size as i64 - 1);
                    *c = buf[(-d).rem_euclid(angles as i64) as usize] / angles as f64;
                }
                let step = u.powf(sub.p);
                let mut p = wt;
                for v in pw.iter_mut() {
                    *v = p;
                    p *= step;
                }
                for j in 0..size {
                    for k in 0..size {
                        // ∫ conj(z^{a+j}) z^{a+k} E: angular mode k - j
                        g[j * size + k] += coef[k + size - 1 - j] * pw[j + k];
                    }
                }
            }
            for j in 0..size {
                for k in 0..size {
                    g[j * size + k] *= 2.0 * PI * sub.prefactor((j + k) as f64);
                }
            }
            g
        };
        let entry_err = |a: &Vec<Complex64>, b: &Vec<Complex64>| -> f64 {
            let mut worst: f64 = 0.0;
            for j in 0..size {
                for k in 0..size {
                    let scale = (b[j * size + j].re * b[k * size + k].re).abs().sqrt();
                    if scale > 0.0 {
                        worst = worst.max((a[j * size + k] - b[j * size + k]).norm() / scale);
                    }
                }
            }
            worst
        };
        let breaks = sub.u_breaks(weight.breaks(0));
        let refined = refine_split(quad, &breaks, compute, entry_err)?;
        report.quad_achieved = refined.achieved;
        let mut gram = refined.value;

        let mut scale = Vec::with_capacity(size);
        for j in 0..size {
            let d = gram[j * size + j].re;
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Conditioning(format!("diagonal entry {j} is {d:e}")));
            }
            scale.push(1.0 / d.sqrt());
        }
        let mut asym: f64 = 0.0;
        for j in 0..size {
            for k in 0..size {
                let a = (gram[j * size + k] - gram[k * size + j].conj()).norm() * scale[j] * scale[k];
                asym = asym.max(a);
            }
        }
        report.max_asymmetry = asym;
        if asym > HERMITIAN_TOL {
            return Err(Error::Conditioning(format!("Gram matrix asymmetry {asym:e} exceeds {HERMITIAN_TOL:e}")));
        }
        for j in 0..size {
            gram[j * size + j].im = 0.0;
            for k in j + 1..size {
                let avg = 0.5 * (gram[j * size + k] + gram[k * size + j].conj());
                gram[j * size + k] = avg;
                gram[k * size + j] = avg.conj();
            }
        }
        let scaled: Vec<Complex64> = (0..size * size)
            .map(|idx| gram[idx] * scale[idx / size] * scale[idx % size])
            .collect();
        let factor = PivotedCholesky::factor(&scaled, size, clip_threshold)?;
        report.rank = factor.rank;
        report.min_pivot_ratio = factor.pivots.last().copied().unwrap_or(0.0) / factor.pivots[0];
        if factor.rank < size {
            report.warnings.push(format!(
                "pivot clipping removed {} of {} directions",
                size - factor.rank,
                size
            ));
        }
        Ok(Self { domain: domain.clone(), m, first, size, shift: weight.shift(), gram, scale, factor: Some(factor), report })
    }

    pub fn condition_report(&self) -> &ConditionReport {
        &self.report
    }

    pub fn first_degree(&self) -> usize {
        self.first
    }

    fn scaled_rhs(&self, z: &Point) -> Vec<Complex64> {
        self.basis_values(z)
            .iter()
            .zip(&self.scale)
            .map(|(b, s)| b.conj() * *s)
            .collect()
    }
}

impl KernelEngine for GramKernel {
    fn m(&self) -> u32 {
        self.m
    }

    fn kernel(&self, z: &Point) -> Result<KernelValue> {
        if !self.domain.contains(z) {
            return Err(Error::OutsideDomain { point: z.to_string() });
        }
        let Some(factor) = &self.factor else {
            return Ok(KernelValue::empty());
        };
        let y = factor.forward(&self.scaled_rhs(z));
        let raw: f64 = y.iter().map(|c| c.norm_sqr()).sum();
        let log_scale = 2.0 * self.m as f64 * self.shift;
        let log_k = raw.ln() + log_scale;
        let flag = if factor.rank < self.size { CondFlag::Clipped(self.size - factor.rank) } else { CondFlag::Ok };
        Ok(KernelValue { k: log_k.exp(), log_k, tail_ratio: 0.0, basis_size: factor.rank, flag })
    }

    fn basis_values(&self, z: &Point) -> Vec<Complex64> {
        let z0 = z.coords[0];
        let mut v = Vec::with_capacity(self.size);
        let mut p = z0.powu(self.first as u32);
        for _ in 0..self.size {
            v.push(p);
            p *= z0;
        }
        v
    }

    fn norm_sq(&self, x: &[Complex64]) -> f64 {
        let n = self.size;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                acc += x[j].conj() * self.gram[j * n + k] * x[k];
            }
        }
        acc.re * (-2.0 * self.m as f64 * self.shift).exp()
    }

    fn reproducing_coeffs(&self, z: &Point) -> Vec<Complex64> {
        let Some(factor) = &self.factor else {
            return Vec::new();
        };
        let y = factor.forward(&self.scaled_rhs(z));
        let x = factor.backward(&y);
        let e = (2.0 * self.m as f64 * self.shift).exp();
        x.iter().zip(&self.scale).map(|(c, s)| c * *s * e).collect()
    }
}

/// Result of [`extremal_witness_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WitnessReport {
    pub kernel: f64,
    /// Largest `|f(z)|² / ‖f‖²` over the random trials (0 for no trials).
    pub max_ratio: f64,
    /// Ratio attained by the reproducing element.
    pub witness_ratio: f64,
}

fn ratio(engine: &dyn KernelEngine, values: &[Complex64], coeffs: &[Complex64]) -> f64 {
    let f: Complex64 = values.iter().zip(coeffs).map(|(b, x)| b * x).sum();
    let norm = engine.norm_sq(coeffs);
    if norm > 0.0 {
        f.norm_sqr() / norm
    } else {
        0.0
    }
}

/// Draw `trials` seeded random elements of the truncated space and report
/// the largest `|f(z)|²/‖f‖²` next to the kernel value.
pub fn extremal_witness_check(engine: &dyn KernelEngine, z: &Point, trials: usize, seed: u64) -> Result<WitnessReport> {
    let kernel = engine.kernel(z)?.k;
    let values = engine.basis_values(z);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    for _ in 0..trials {
        let coeffs: Vec<Complex64> = (0..values.len())
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        max_ratio = max_ratio.max(ratio(engine, &values, &coeffs));
    }
    let witness = engine.reproducing_coeffs(z);
    let witness_ratio = if witness.is_empty() { 0.0 } else { ratio(engine, &values, &witness) };
    Ok(WitnessReport { kernel, max_ratio, witness_ratio })
}

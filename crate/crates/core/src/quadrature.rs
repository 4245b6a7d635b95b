//! Composite Gauss–Legendre rules on [0, 1] with dyadic grading toward
//! both endpoints, and a level-refinement driver for vector integrals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and P_{n-1}
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Quadrature rule on [0, 1].
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    /// Relative tolerance, estimated from successive refinement levels.
    pub tol: f64,
    /// Upper bound on the node count of a single 1-D rule.
    pub max_nodes: usize,
    /// Gauss–Legendre order per panel.
    pub order: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { tol: 1e-10, max_nodes: 1 << 14, order: 16 }
    }
}

/// Graded composite rule at refinement `level`.
///
/// Breakpoints `2^-k` and `1 - 2^-k`, `k = 1..L` with `L = 8 + 4·level`,
/// every panel split into `2^level` equal pieces carrying `order` nodes.
pub fn graded_rule(level: usize, order: usize) -> Rule {
    let depth = 8 + 4 * level;
    let mut breaks = vec![0.0];
    for k in (1..=depth).rev() {
        breaks.push(0.5f64.powi(k as i32));
    }
    for k in 2..=depth {
        breaks.push(1.0 - 0.5f64.powi(k as i32));
    }
    breaks.push(1.0);
    let (x, w) = gauss_legendre(order);
    let split = 1usize << level;
    let mut rule = Rule { nodes: Vec::new(), weights: Vec::new() };
    for pair in breaks.windows(2) {
        let width = (pair[1] - pair[0]) / split as f64;
        for s in 0..split {
            let a = pair[0] + s as f64 * width;
            for (xi, wi) in x.iter().zip(&w) {
                rule.nodes.push(a + 0.5 * width * (xi + 1.0));
                rule.weights.push(0.5 * width * wi);
            }
        }
    }
    rule
}

/// Graded rules on every piece of `[0, 1]` cut at `breaks`, concatenated.
///
/// Kinks of the integrand placed at breakpoints see endpoint grading on
/// both sides, which restores fast convergence for piecewise smooth data.
pub fn split_rule(level: usize, order: usize, breaks: &[f64]) -> Rule {
    let base = graded_rule(level, order);
    let mut cuts = vec![0.0];
    cuts.extend(breaks.iter().copied().filter(|b| *b > 0.0 && *b < 1.0));
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut rule = Rule { nodes: Vec::new(), weights: Vec::new() };
    for pair in cuts.windows(2) {
        let width = pair[1] - pair[0];
        rule.nodes.extend(base.nodes.iter().map(|x| pair[0] + width * x));
        rule.weights.extend(base.weights.iter().map(|w| width * w));
    }
    rule
}

pub fn rule_size(level: usize, order: usize) -> usize {
    2 * (8 + 4 * level) * (1 << level) * order
}

/// Result of a level-refined computation.
#[derive(Clone, Debug)]
pub struct Refined<T> {
    pub value: T,
    pub achieved: f64,
    pub nodes: usize,
}

/// Evaluate `compute` on successively refined rules until `error(prev, next)`
/// drops below `spec.tol`.
pub fn refine<T>(
    spec: &QuadSpec,
    compute: impl FnMut(&Rule) -> T,
    error: impl Fn(&T, &T) -> f64,
) -> Result<Refined<T>> {
    refine_split(spec, &[], compute, error)
}

/// [`refine`] on rules split at `breaks`; the node budget applies per piece.
pub fn refine_split<T>(
    spec: &QuadSpec,
    breaks: &[f64],
    mut compute: impl FnMut(&Rule) -> T,
    error: impl Fn(&T, &T) -> f64,
) -> Result<Refined<T>> {
    let mut level = 0;
    let mut prev = compute(&split_rule(level, spec.order, breaks));
    let mut achieved = f64::INFINITY;
    loop {
        level += 1;
        let size = rule_size(level, spec.order);
        if size > spec.max_nodes {
            return Err(Error::Accuracy { tol: spec.tol, achieved, nodes: rule_size(level - 1, spec.order) });
        }
        let rule = split_rule(level, spec.order, breaks);
        let next = compute(&rule);
        achieved = error(&prev, &next);
        if achieved <= spec.tol {
            return Ok(Refined { value: next, achieved, nodes: rule.len() });
        }
        prev = next;
    }
}

/// Largest relative difference between two vectors of positive magnitudes.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

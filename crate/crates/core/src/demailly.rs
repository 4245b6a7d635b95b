//! Demailly approximants `V_m = (1/2m) log K_{mV}`, the two-sided bounds
//! `V − C₁/m <= V_m <= esssup_{B(z,r)} V + (1/m) log(C₂/rⁿ)`, convergence
//! runs over an m-schedule, and the regularized limsup diagnostic Φ.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bergman::{default_degree, GramKernel, KernelEngine, KernelValue, ToricKernel};
use crate::domains::{Domain, Grid, Point};
use crate::envelope::Envelope;
use crate::error::{Error, Result};
use crate::field::{fmt_f64, SampledField};
use crate::quadrature::QuadSpec;
use crate::weights::{default_radii, usc_regularize, PshFlag, Weight};

/// `C₂ = sqrt(n!/πⁿ)`, so that `(1/2) log(1/Vol B(z,r)) = log(C₂/rⁿ)`.
pub fn c2(n: usize) -> f64 {
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    (fact / std::f64::consts::PI.powi(n as i32)).sqrt()
}

/// Absolute slack granted to the upper bound on top of the truncation tail.
pub const BOUND_TOL: f64 = 1e-9;

/// Numerical settings shared by kernel evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericSettings {
    pub quad: QuadSpec,
    pub clip_threshold: f64,
    /// Fixed per-axis degree cap; `None` starts from `max(60, 4mγ + 40)`
    /// and doubles until the relative tail drops below `tail_tol`.
    pub max_degree: Option<usize>,
    pub tail_tol: f64,
    pub degree_cap: usize,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self { quad: QuadSpec::default(), clip_threshold: 1e-12, max_degree: None, tail_tol: 1e-12, degree_cap: 2048 }
    }
}

impl NumericSettings {
    pub fn fixed(max_degree: usize) -> Self {
        Self { max_degree: Some(max_degree), ..Self::default() }
    }
}

/// `V_m(z)` with diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxValue {
    pub value: f64,
    /// Truncation tail in `V_m` units, `(1/2m) log(1 + tail/K)`.
    pub tail: f64,
    pub kernel: KernelValue,
    pub degree: usize,
}

/// A kernel engine for one `(V, m)` with its truncation chosen.
pub struct Approximator {
    m: u32,
    degree: usize,
    engine: Box<dyn KernelEngine>,
}

impl Approximator {
    /// Toric weights use orthogonal monomials, others the Gram engine.
    /// With an adaptive degree, `probes` are the points whose tails must
    /// fall below the tolerance.
    pub fn new(w: &Weight, domain: &Domain, m: u32, settings: &NumericSettings, probes: &[Point]) -> Result<Self> {
        let mut degree = settings.max_degree.unwrap_or_else(|| default_degree(m, w.max_pole()));
        if !w.is_toric() {
            let engine = GramKernel::new(w, domain, m, degree, &settings.quad, settings.clip_threshold)?;
            return Ok(Self { m, degree, engine: Box::new(engine) });
        }
        loop {
            let engine = ToricKernel::new(w, domain, m, degree, &settings.quad)?;
            let done = settings.max_degree.is_some() || degree >= settings.degree_cap || {
                let worst = probes
                    .par_iter()
                    .map(|z| engine.kernel(z).map(|k| k.rel_tail()))
                    .collect::<Result<Vec<f64>>>()?
                    .into_iter()
                    .fold(0.0, f64::max);
                worst <= settings.tail_tol
            };
            if done {
                return Ok(Self { m, degree, engine: Box::new(engine) });
            }
            degree = (2 * degree).min(settings.degree_cap);
        }
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn engine(&self) -> &dyn KernelEngine {
        self.engine.as_ref()
    }

    pub fn value(&self, z: &Point) -> Result<ApproxValue> {
        let kernel = self.engine.kernel(z)?;
        let two_m = 2.0 * self.m as f64;
        Ok(ApproxValue {
            value: kernel.log_k / two_m,
            tail: kernel.rel_tail().ln_1p() / two_m,
            kernel,
            degree: self.degree,
        })
    }
}

/// `V_m(z) = (1/2m) log K_{mV}(z)`; −∞ when the truncated space vanishes at `z`.
pub fn demailly_value(w: &Weight, domain: &Domain, m: u32, z: &Point, settings: &NumericSettings) -> Result<ApproxValue> {
    Approximator::new(w, domain, m, settings, std::slice::from_ref(z))?.value(z)
}

/// Default ball radius `min(dist(z, ∂Ω)/2, m^{-1/2})` for the upper bound.
pub fn default_bound_radius(domain: &Domain, m: u32, z: &Point) -> Result<f64> {
    Ok((0.5 * domain.dist_to_boundary(z)?).min(1.0 / (m as f64).sqrt()))
}

/// Signed slack `esssup_{B(z,r)} V + (1/m) log(C₂/rⁿ) − V_m`.
pub fn upper_bound_check(w: &Weight, domain: &Domain, m: u32, z: &Point, r: f64, v_m: f64) -> Result<f64> {
    let dist = domain.dist_to_boundary(z)?;
    if !(r > 0.0 && r < dist) {
        return Err(Error::Argument(format!("ball radius {r} must lie in (0, {dist})")));
    }
    if m == 0 {
        return Err(Error::Argument("m must be a positive integer".into()));
    }
    let n = domain.dim();
    let bound = w.esssup_ball(z, r) + (c2(n) / r.powi(n as i32)).ln() / m as f64;
    Ok(bound - v_m)
}

/// Scaled deficit `m (V(z) − V_m(z))`; −∞ on poles of `V`.
pub fn lower_bound_check(w: &Weight, domain: &Domain, m: u32, z: &Point, v_m: f64) -> Result<f64> {
    if w.psh() != PshFlag::Yes {
        return Err(Error::Contract(format!(
            "the lower bound is only asserted for psh weights; `{}` is not declared psh",
            w.name()
        )));
    }
    let v = crate::weights::eval_weight(w, domain, z)?;
    if v == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(m as f64 * (v - v_m))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub weight: String,
    pub m: u32,
    pub point_index: usize,
    pub point: Point,
    pub v_m: f64,
    /// Oracle value, NaN without an oracle.
    pub v_tilde: f64,
    /// `V_m − Ṽ`, or `V_m − V_{m'}` for the previous schedule entry `m'`
    /// without an oracle (NaN on the first entry).
    pub error: f64,
    pub tail: f64,
    /// `V_m − (V − C₁/m)` with the run's `C₁` estimate; NaN for non-psh weights.
    pub lower_slack: f64,
    pub upper_slack: f64,
    pub r_used: f64,
    /// `m (V − V_m)`; NaN for non-psh weights.
    pub deficit: f64,
    /// Exactly one of `V_m`, `Ṽ` is −∞.
    pub flagged: bool,
}

impl ConvergenceRow {
    pub fn upper_violated(&self) -> bool {
        self.upper_slack < -(self.tail + BOUND_TOL)
    }

    pub fn lower_violated(&self) -> bool {
        self.lower_slack < -BOUND_TOL
    }

    pub fn violated(&self) -> bool {
        self.flagged || self.upper_violated() || self.lower_violated()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub weight: String,
    pub max_error_at_mmax: f64,
    /// The per-m maximum of `|error|` never increases along the schedule.
    pub monotone: bool,
    /// Slope of the least-squares fit of `log max|error|` against `log m`.
    pub rate_exponent: f64,
    #[serde(rename = "C1_estimate")]
    pub c1_estimate: Option<f64>,
    /// Largest deficit over the top and bottom halves of the schedule.
    pub deficit_max_top: Option<f64>,
    pub deficit_max_bottom: Option<f64>,
    pub bounds_violations: usize,
    pub oracle: bool,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub weight: String,
    pub schedule: Vec<u32>,
    pub points: Vec<Point>,
    /// Sorted by point, then m.
    pub rows: Vec<ConvergenceRow>,
    pub summary: ConvergenceSummary,
}

fn validate_schedule(schedule: &[u32]) -> Result<()> {
    if schedule.is_empty() || schedule[0] == 0 || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("m-schedule must be nonempty, positive and strictly increasing".into()));
    }
    Ok(())
}

/// Evaluate `V_m` over a schedule and a point set, against the envelope
/// oracle when given, otherwise against the previous schedule entry.
pub fn converge_run(
    w: &Weight,
    domain: &Domain,
    schedule: &[u32],
    points: &[Point],
    settings: &NumericSettings,
    oracle: Option<&Envelope>,
) -> Result<ConvergenceReport> {
    validate_schedule(schedule)?;
    if points.is_empty() {
        return Err(Error::EmptyGrid("convergence run without points".into()));
    }
    for z in points {
        domain.dist_to_boundary(z)?;
    }
    let psh = w.psh() == PshFlag::Yes;
    let values: Vec<Vec<ApproxValue>> = schedule
        .iter()
        .map(|&m| {
            let approx = Approximator::new(w, domain, m, settings, points)?;
            points.par_iter().map(|z| approx.value(z)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(points.len() * schedule.len());
    for (pi, z) in points.iter().enumerate() {
        let v_tilde = oracle.map_or(f64::NAN, |env| env.value_at(z));
        for (k, &m) in schedule.iter().enumerate() {
            let av = values[k][pi];
            let v_m = av.value;
            let reference = if oracle.is_some() {
                v_tilde
            } else if k > 0 {
                values[k - 1][pi].value
            } else {
                f64::NAN
            };
            let both_poles = v_m == f64::NEG_INFINITY && reference == f64::NEG_INFINITY;
            let one_pole = (v_m == f64::NEG_INFINITY) != (reference == f64::NEG_INFINITY);
            let error = if both_poles { 0.0 } else { v_m - reference };
            let r_used = default_bound_radius(domain, m, z)?;
            let upper_slack = upper_bound_check(w, domain, m, z, r_used, v_m)?;
            let deficit = if psh { lower_bound_check(w, domain, m, z, v_m)? } else { f64::NAN };
            rows.push(ConvergenceRow {
                weight: w.name().to_string(),
                m,
                point_index: pi,
                point: z.clone(),
                v_m,
                v_tilde,
                error,
                tail: av.tail,
                lower_slack: f64::NAN,
                upper_slack,
                r_used,
                deficit,
                flagged: one_pole && !reference.is_nan(),
            });
        }
    }

    let half = schedule.len() / 2;
    let deficit_max = |top: bool| -> Option<f64> {
        psh.then(|| {
            rows.iter()
                .filter(|r| (schedule.iter().position(|&m| m == r.m).unwrap() >= half) == top)
                .map(|r| r.deficit)
                .fold(f64::NEG_INFINITY, f64::max)
        })
    };
    let deficit_max_top = deficit_max(true);
    let deficit_max_bottom = if half == 0 { deficit_max_top } else { deficit_max(false) };
    let c1_estimate = match (deficit_max_top, deficit_max_bottom) {
        (Some(a), Some(b)) => Some(a.max(b).max(0.0)),
        _ => None,
    };
    if let Some(c1) = c1_estimate {
        for r in &mut rows {
            r.lower_slack = if r.deficit == f64::NEG_INFINITY { f64::INFINITY } else { (c1 - r.deficit) / r.m as f64 };
        }
    }

    let per_m: Vec<f64> = schedule
        .iter()
        .map(|&m| {
            rows.iter()
                .filter(|r| r.m == m && r.error.is_finite())
                .map(|r| r.error.abs())
                .fold(f64::NAN, f64::max)
        })
        .collect();
    let tracked: Vec<f64> = per_m.iter().copied().filter(|e| !e.is_nan()).collect();
    let monotone = tracked.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
    let fit: Vec<(f64, f64)> = schedule
        .iter()
        .zip(&per_m)
        .filter(|(_, e)| e.is_finite() && **e > 0.0)
        .map(|(&m, e)| ((m as f64).ln(), e.ln()))
        .collect();
    let summary = ConvergenceSummary {
        weight: w.name().to_string(),
        max_error_at_mmax: *per_m.last().unwrap(),
        monotone,
        rate_exponent: slope(&fit),
        c1_estimate,
        deficit_max_top,
        deficit_max_bottom,
        bounds_violations: rows.iter().filter(|r| r.violated()).count(),
        oracle: oracle.is_some(),
    };
    Ok(ConvergenceReport { weight: w.name().to_string(), schedule: schedule.to_vec(), points: points.to_vec(), rows, summary })
}

/// Least-squares slope, NaN with fewer than two points.
fn slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

impl ConvergenceReport {
    pub fn csv_header(dim: usize) -> String {
        let mut cols = vec!["weight".to_string(), "m".to_string()];
        for j in 1..=dim {
            cols.push(format!("re_z{j}"));
            cols.push(format!("im_z{j}"));
        }
        cols.extend(
            ["V_m", "V_tilde", "error", "tail", "lower_slack", "upper_slack", "r_used"].map(String::from),
        );
        cols.join(",")
    }

    /// CSV rows without the header.
    pub fn write_rows<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.rows {
            let mut cols = vec![r.weight.clone(), r.m.to_string()];
            for c in &r.point.coords {
                cols.push(fmt_f64(c.re));
                cols.push(fmt_f64(c.im));
            }
            for v in [r.v_m, r.v_tilde, r.error, r.tail, r.lower_slack, r.upper_slack, r.r_used] {
                cols.push(fmt_f64(v));
            }
            writeln!(out, "{}", cols.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let dim = self.points.first().map_or(1, Point::dim);
        writeln!(out, "{}", Self::csv_header(dim))?;
        self.write_rows(out)
    }
}

/// Φ: the pointwise maximum of `V_m` over the top half of the schedule,
/// followed by the upper semi-continuous regularization.
pub fn limsup_regularized(report: &ConvergenceReport, grid: Arc<Grid>, radii: Option<&[f64]>) -> Result<SampledField> {
    if report.schedule.len() < 2 {
        return Err(Error::Argument("the limsup surrogate needs at least two values of m".into()));
    }
    if report.points != grid.points {
        return Err(Error::Argument("report points do not match the grid".into()));
    }
    let half = report.schedule.len() / 2;
    let top = &report.schedule[half..];
    let mut values = vec![f64::NEG_INFINITY; grid.len()];
    for r in report.rows.iter().filter(|r| top.contains(&r.m)) {
        values[r.point_index] = values[r.point_index].max(r.v_m);
    }
    let raw = SampledField::new(grid, values)?;
    let radii = radii.map_or_else(|| default_radii(&raw), <[f64]>::to_vec);
    usc_regularize(&raw, &radii)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{ball_volume, make_grid, GridSpec};
    use crate::weights::{catalog, WeightParams};
    use std::f64::consts::PI;

    fn disk(name: &str) -> Weight {
        catalog(name, &WeightParams::default(), 1).unwrap()
    }

    fn vm(w: &Weight, m: u32, x: f64) -> f64 {
        demailly_value(w, &Domain::unit_disk(), m, &Point::real(&[x]), &NumericSettings::default())
            .unwrap()
            .value
    }

    #[test]
    fn c2_matches_ball_volume() {
        for n in [1, 2] {
            for r in [0.1, 0.5, 1.0, 3.0] {
                let lhs = 0.5 * (1.0 / ball_volume(n, r).unwrap()).ln();
                assert!((lhs - (c2(n) / r.powi(n as i32)).ln()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn approximant_examples() {
        assert!((vm(&disk("zero"), 1, 0.0) - 0.5 * (1.0 / PI).ln()).abs() < 1e-12);
        let pole = vm(&disk("log_pole"), 2, 0.5);
        assert!((pole - 0.25 * (1.0 / (9.0 * PI)).ln()).abs() < 1e-10);
        assert!((pole - (0.5f64.ln() + 0.25 * (1.0 / (PI * 0.5625)).ln())).abs() < 1e-10);
        assert!((pole + 0.8354).abs() < 1e-4);
        let c = 0.7;
        let shifted = disk("zero").shifted(c);
        for m in [1, 3, 8] {
            assert!((vm(&shifted, m, 0.4) - vm(&disk("zero"), m, 0.4) - c).abs() < 1e-12);
        }
        assert!((vm(&disk("zero"), 64, 0.0).abs() - PI.ln() / 128.0).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_examples() {
        let domain = Domain::unit_disk();
        let zero = disk("zero");
        let origin = Point::real(&[0.0]);
        let slack = upper_bound_check(&zero, &domain, 4, &origin, 0.5, vm(&zero, 4, 0.0)).unwrap();
        let expected = 0.25 * ((1.0 / PI.sqrt()) / 0.5).ln() - vm(&zero, 4, 0.0);
        assert!((slack - expected).abs() < 1e-12 && slack >= 0.0);
        let pole = disk("log_pole");
        let z = Point::real(&[0.5]);
        for m in [1, 2, 4, 8] {
            assert!(upper_bound_check(&pole, &domain, m, &z, 0.25, vm(&pole, m, 0.5)).unwrap() >= 0.0);
        }
        assert!(matches!(upper_bound_check(&zero, &domain, 1, &z, 0.5, 0.0), Err(Error::Argument(_))));
        assert!(matches!(upper_bound_check(&zero, &domain, 1, &z, 0.0, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn lower_bound_examples() {
        let domain = Domain::unit_disk();
        let zero = disk("zero");
        let origin = Point::real(&[0.0]);
        let d = lower_bound_check(&zero, &domain, 1, &origin, vm(&zero, 1, 0.0)).unwrap();
        assert!((d - 0.5724).abs() < 1e-4);
        for m in [1, 2, 4] {
            let d = lower_bound_check(&zero, &domain, m, &origin, vm(&zero, m, 0.0)).unwrap();
            assert!((d - 0.5 * PI.ln()).abs() < 1e-12);
        }
        let pole = disk("log_pole");
        let z = Point::real(&[0.5]);
        let d = lower_bound_check(&pole, &domain, 2, &z, vm(&pole, 2, 0.5)).unwrap();
        assert!((d + 0.5 * (1.0 / (PI * 0.5625)).ln()).abs() < 1e-9);
        assert!((d - 0.2846).abs() < 1e-4);
        assert_eq!(lower_bound_check(&pole, &domain, 2, &origin, -1.0).unwrap(), f64::NEG_INFINITY);
        let neg = disk("neg_abs_square");
        assert!(matches!(lower_bound_check(&neg, &domain, 1, &origin, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_weight_run() {
        let domain = Domain::unit_disk();
        let pts: Vec<Point> = [0.0, 0.3, 0.6].iter().map(|&x| Point::real(&[x])).collect();
        let report = converge_run(&disk("zero"), &domain, &[1, 2, 4, 8], &pts, &NumericSettings::default(), None).unwrap();
        assert_eq!(report.rows.len(), 12);
        assert!(report.rows[0].error.is_nan());
        assert_eq!(report.summary.bounds_violations, 0);
        let c1 = report.summary.c1_estimate.unwrap();
        assert!((c1 - 0.5 * PI.ln()).abs() < 1e-9);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("weight,m,re_z1,im_z1,V_m,V_tilde,error,tail,lower_slack,upper_slack,r_used\n"));
        assert_eq!(text.lines().count(), 13);
    }

    #[test]
    fn limsup_surrogate_examples() {
        let domain = Domain::unit_disk();
        let grid = Arc::new(make_grid(&domain, &GridSpec::radial(20, 0.05)).unwrap());
        let schedule = [1, 2, 4, 8, 16, 32, 64];
        let settings = NumericSettings::default();

        // constant weight: Φ(0) is the largest-m term, lifted by at most the closing
        let zero = converge_run(&disk("zero"), &domain, &schedule, &grid.points, &settings, None).unwrap();
        let phi = limsup_regularized(&zero, grid.clone(), None).unwrap();
        assert!(phi.values[0].abs() <= PI.ln() / 128.0);

        // −|z|²: Φ >= V_64 everywhere; at the centre Φ is at least the closed-form V_8 bias
        let w = disk("neg_abs_square");
        let run = converge_run(&w, &domain, &schedule, &grid.points, &settings, None).unwrap();
        let phi = limsup_regularized(&run, grid.clone(), None).unwrap();
        for r in run.rows.iter().filter(|r| r.m == 64) {
            assert!(phi.values[r.point_index] >= r.v_m);
        }
        let v8_centre = (16.0f64.ln() - (PI * (16.0f64.exp() - 1.0)).ln()) / 16.0;
        assert!(phi.values[0] >= v8_centre);
        assert!((phi.values[0] + 1.0) < 0.11);

        assert!(matches!(
            limsup_regularized(&zero, Arc::new(make_grid(&domain, &GridSpec::radial(5, 0.05)).unwrap()), None),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn schedule_validation() {
        let domain = Domain::unit_disk();
        let pts = vec![Point::real(&[0.0])];
        let s = NumericSettings::default();
        assert!(converge_run(&disk("zero"), &domain, &[2, 1], &pts, &s, None).is_err());
        assert!(converge_run(&disk("zero"), &domain, &[], &pts, &s, None).is_err());
        assert!(converge_run(&disk("zero"), &domain, &[1], &[], &s, None).is_err());
    }

    #[test]
    fn gram_engine_is_used_for_non_toric_weights() {
        let bump = catalog("angular_bump", &WeightParams { epsilon: Some(0.0), ..Default::default() }, 1).unwrap();
        let z = Point::real(&[0.5]);
        let a = demailly_value(&bump, &Domain::unit_disk(), 2, &z, &NumericSettings::fixed(40)).unwrap();
        let b = demailly_value(&disk("zero"), &Domain::unit_disk(), 2, &z, &NumericSettings::fixed(40)).unwrap();
        assert!((a.value - b.value).abs() < 1e-8);
    }
}

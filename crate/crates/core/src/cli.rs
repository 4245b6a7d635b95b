//! Experiment configuration and the runner that writes CSV reports and a
//! JSON summary.
//!
//! A config is a TOML file:
//!
//! ```toml
//! seed = 42
//! schedule = [1, 2, 4, 8, 16, 32, 64]
//! checks = ["kernel", "envelope", "bounds", "converge", "phi"]
//!
//! [domain]
//! kind = "disk"
//!
//! [grid]
//! mode = "radial"
//! points_per_axis = 20
//!
//! [[weights]]
//! name = "log_pole"
//! gamma = [1.0]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bergman::extremal_witness_check;
use crate::demailly::{converge_run, limsup_regularized, Approximator, ConvergenceReport, NumericSettings};
use crate::domains::{make_grid, Domain, DomainKind, Grid, GridSpec, Point};
use crate::envelope::{psh_envelope_toric, subharmonicity_check, Envelope};
use crate::error::{Error, Result};
use crate::field::fmt_f64;
use crate::quadrature::QuadSpec;
use crate::weights::{catalog, default_radii, PshFlag, Weight, WeightParams, CATALOG_NAMES};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "DEMAILLY_LAB_OUT";

/// Sub-mean-value tolerance for envelopes.
const SUBHARMONIC_TOL: f64 = 1e-6;
/// Allowed growth of the deficit maximum from the bottom to the top half of
/// the schedule.
const DEFICIT_GROWTH: f64 = 0.05;
/// Slack for the domination check `Ṽ <= V`.
const DOMINATION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Kernel,
    Envelope,
    Bounds,
    Converge,
    Phi,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] =
        [CheckKind::Kernel, CheckKind::Envelope, CheckKind::Bounds, CheckKind::Converge, CheckKind::Phi];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Kernel => "kernel",
            CheckKind::Envelope => "envelope",
            CheckKind::Bounds => "bounds",
            CheckKind::Converge => "converge",
            CheckKind::Phi => "phi",
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        CheckKind::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown check `{s}` (expected one of kernel, envelope, bounds, converge, phi)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub kind: DomainKind,
    /// Defaults to unit radii.
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { kind: DomainKind::Disk, radii: None }
    }
}

impl DomainConfig {
    pub fn build(&self) -> Result<Domain> {
        let n = match self.kind {
            DomainKind::Disk => 1,
            DomainKind::Polydisk => 2,
        };
        Domain::new(self.kind, self.radii.clone().unwrap_or_else(|| vec![1.0; n]))
    }
}

/// A catalog weight with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    pub name: String,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    #[serde(default)]
    pub table: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub shift: Option<f64>,
}

impl WeightEntry {
    pub fn named(name: &str) -> Self {
        Self { name: name.into(), gamma: None, table: None, epsilon: None, shift: None }
    }

    pub fn params(&self) -> WeightParams {
        WeightParams {
            gamma: self.gamma.clone(),
            table: self.table.clone(),
            epsilon: self.epsilon,
            shift: self.shift,
        }
    }

    pub fn build(&self, dim: usize) -> Result<Weight> {
        catalog(&self.name, &self.params(), dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub quad_tol: f64,
    pub clip_threshold: f64,
    pub tail_tol: f64,
    /// Fixed per-axis degree; adaptive when absent.
    pub max_degree: Option<usize>,
    pub degree_cap: usize,
    pub envelope_tol: f64,
    pub envelope_max_iter: usize,
    /// Allowed `Φ − Ṽ` per complex dimension, at points at least
    /// `phi_margin` from the boundary. The finite limsup surrogate sits near
    /// `V_m` for the smallest `m` of the top half of the schedule, so this is
    /// well above the `V_{m_max}` error; for separable weights the bias adds
    /// over the coordinates.
    pub phi_tol: f64,
    pub phi_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let n = NumericSettings::default();
        Self {
            quad_tol: n.quad.tol,
            clip_threshold: n.clip_threshold,
            tail_tol: n.tail_tol,
            max_degree: None,
            degree_cap: n.degree_cap,
            envelope_tol: 1e-9,
            envelope_max_iter: 50,
            phi_tol: 0.25,
            phi_margin: 0.0,
        }
    }
}

fn default_schedule() -> Vec<u32> {
    vec![1, 2, 4, 8, 16, 32, 64]
}

fn default_checks() -> Vec<CheckKind> {
    CheckKind::ALL.to_vec()
}

fn default_envelope_grid() -> GridSpec {
    GridSpec::log_radial(40, 0.05, -8.0)
}

fn default_seed() -> u64 {
    42
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub domain: DomainConfig,
    /// Evaluation grid for kernels and approximants.
    #[serde(default)]
    pub grid: GridSpec,
    /// Log-coordinate grid of the envelope oracle.
    #[serde(default = "default_envelope_grid")]
    pub envelope_grid: GridSpec,
    #[serde(default)]
    pub weights: Vec<WeightEntry>,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<u32>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_checks")]
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: DomainConfig::default(),
            grid: GridSpec::default(),
            envelope_grid: default_envelope_grid(),
            weights: Vec::new(),
            schedule: default_schedule(),
            tolerances: Tolerances::default(),
            checks: default_checks(),
            out: None,
            seed: default_seed(),
        }
    }
}

impl ExperimentConfig {
    /// Parse and validate; the error message carries the TOML line and key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let domain = self.domain.build().map_err(|e| Error::Config(format!("domain: {e}")))?;
        for (i, w) in self.weights.iter().enumerate() {
            if !CATALOG_NAMES.contains(&w.name.as_str()) {
                return Err(Error::Config(format!(
                    "weights[{i}].name: unknown catalog weight `{}` (known: {})",
                    w.name,
                    CATALOG_NAMES.join(", ")
                )));
            }
            w.build(domain.dim()).map_err(|e| Error::Config(format!("weights[{i}] ({}): {e}", w.name)))?;
        }
        if self.schedule.is_empty() || self.schedule[0] == 0 || self.schedule.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Config("schedule: must be nonempty, positive and strictly increasing".into()));
        }
        let t = &self.tolerances;
        if !(t.phi_margin.is_finite() && t.phi_margin >= 0.0) {
            return Err(Error::Config(format!("tolerances.phi_margin: must be nonnegative, got {}", t.phi_margin)));
        }
        for (key, v) in [
            ("quad_tol", t.quad_tol),
            ("clip_threshold", t.clip_threshold),
            ("tail_tol", t.tail_tol),
            ("envelope_tol", t.envelope_tol),
            ("phi_tol", t.phi_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("tolerances.{key}: must be positive, got {v}")));
            }
        }
        if t.envelope_max_iter == 0 || t.degree_cap == 0 || t.max_degree == Some(0) {
            return Err(Error::Config("tolerances: iteration and degree limits must be positive".into()));
        }
        if self.checks.is_empty() {
            return Err(Error::Config("checks: at least one check is required".into()));
        }
        make_grid(&domain, &self.grid).map_err(|e| Error::Config(format!("grid: {e}")))?;
        Ok(())
    }

    pub fn settings(&self) -> NumericSettings {
        let t = &self.tolerances;
        NumericSettings {
            quad: QuadSpec { tol: t.quad_tol, ..QuadSpec::default() },
            clip_threshold: t.clip_threshold,
            max_degree: t.max_degree,
            tail_tol: t.tail_tol,
            degree_cap: t.degree_cap,
        }
    }
}

/// Parse a complex number: `0.5`, `-0.2i`, `0.3+0.4i`, `1e-3-2i`.
pub fn parse_complex(s: &str) -> std::result::Result<Complex64, String> {
    let t = s.trim().replace(' ', "");
    let bad = || format!("cannot parse `{s}` as a complex number");
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    // split at the last sign that is not part of an exponent or the leading sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    Ok(Complex64::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?))
}

/// Parse a point given as comma-separated complex coordinates.
pub fn parse_point(s: &str) -> std::result::Result<Point, String> {
    s.split(',').map(parse_complex).collect::<std::result::Result<Vec<_>, _>>().map(Point::new)
}

/// A numerical failure inside a check; the run continues.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub weight: String,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub check: CheckKind,
    pub csv: String,
    pub rows: usize,
    /// Number of nonconforming CSV rows.
    pub violations: usize,
    pub failures: Vec<Failure>,
    /// Per-weight summaries.
    pub weights: Vec<Value>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.failures.is_empty()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub domain: DomainConfig,
    pub schedule: Vec<u32>,
    pub checks: Vec<CheckReport>,
    pub total_violations: usize,
    pub failed_checks: Vec<CheckKind>,
}

impl RunSummary {
    /// 0 when every check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.failed_checks.is_empty())
    }
}

fn coord_header(dim: usize) -> Vec<String> {
    (1..=dim).flat_map(|j| [format!("re_z{j}"), format!("im_z{j}")]).collect()
}

fn coord_cols(z: &Point) -> Vec<String> {
    z.coords.iter().flat_map(|c| [fmt_f64(c.re), fmt_f64(c.im)]).collect()
}

pub fn kernel_csv_header(dim: usize) -> String {
    let mut cols = vec!["weight".to_string(), "m".to_string()];
    cols.extend(coord_header(dim));
    cols.extend(["K", "tail_estimate", "basis_size", "cond_flag"].map(String::from));
    cols.join(",")
}

pub fn approx_csv_header(dim: usize) -> String {
    let mut cols = vec!["weight".to_string(), "m".to_string()];
    cols.extend(coord_header(dim));
    cols.extend(["V_m", "tail", "degree"].map(String::from));
    cols.join(",")
}

pub fn field_csv_header(dim: usize) -> String {
    let mut cols = vec!["weight".to_string()];
    cols.extend(coord_header(dim));
    cols.push("value".into());
    cols.join(",")
}

fn phi_csv_header(dim: usize) -> String {
    let mut cols = vec!["weight".to_string()];
    cols.extend(coord_header(dim));
    cols.extend(["phi", "V_tilde", "error"].map(String::from));
    cols.join(",")
}

/// Kernel rows for one weight; the flag marks rows whose relative tail
/// exceeds `tail_tol` or whose value is not a finite nonnegative number.
pub fn kernel_rows(
    w: &Weight,
    domain: &Domain,
    schedule: &[u32],
    points: &[Point],
    settings: &NumericSettings,
) -> Result<Vec<(String, bool)>> {
    let mut out = Vec::new();
    for &m in schedule {
        let approx = Approximator::new(w, domain, m, settings, points)?;
        for z in points {
            let k = approx.value(z)?.kernel;
            let bad = !(k.k.is_finite() && k.k >= 0.0) || k.rel_tail() > settings.tail_tol;
            let mut cols = vec![w.name().to_string(), m.to_string()];
            cols.extend(coord_cols(z));
            cols.extend([fmt_f64(k.k), fmt_f64(k.rel_tail()), k.basis_size.to_string(), k.flag.to_string()]);
            out.push((cols.join(","), bad));
        }
    }
    Ok(out)
}

/// Approximant rows for one weight.
pub fn approx_rows(
    w: &Weight,
    domain: &Domain,
    schedule: &[u32],
    points: &[Point],
    settings: &NumericSettings,
) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for &m in schedule {
        let approx = Approximator::new(w, domain, m, settings, points)?;
        for z in points {
            let v = approx.value(z)?;
            let mut cols = vec![w.name().to_string(), m.to_string()];
            cols.extend(coord_cols(z));
            cols.extend([fmt_f64(v.value), fmt_f64(v.tail), v.degree.to_string()]);
            out.push(cols.join(","));
        }
    }
    Ok(out)
}

/// Envelope field rows; the flag marks domination failures `Ṽ > V`.
pub fn envelope_rows(w: &Weight, env: &Envelope) -> Vec<(String, bool)> {
    env.field
        .grid
        .points
        .iter()
        .zip(&env.field.values)
        .map(|(z, &v)| {
            let mut cols = vec![w.name().to_string()];
            cols.extend(coord_cols(z));
            cols.push(fmt_f64(v));
            (cols.join(","), v > w.value(z) + DOMINATION_TOL)
        })
        .collect()
}

/// Circle centres used for envelope spot checks: on the real axes of each
/// coordinate, away from the poles and the boundary.
fn spot_centres(domain: &Domain) -> Vec<Point> {
    [0.2, 0.35, 0.5]
        .iter()
        .map(|&s| Point::new(domain.radii().iter().map(|r| Complex64::new(s * r, 0.1 * r)).collect()))
        .collect()
}

struct Workspace<'a> {
    config: &'a ExperimentConfig,
    domain: Domain,
    grid: Arc<Grid>,
    settings: NumericSettings,
    weights: Vec<Weight>,
    envelopes: BTreeMap<usize, std::result::Result<Envelope, String>>,
    reports: BTreeMap<usize, std::result::Result<ConvergenceReport, String>>,
}

impl<'a> Workspace<'a> {
    fn new(config: &'a ExperimentConfig) -> Result<Self> {
        let domain = config.domain.build()?;
        let grid = Arc::new(make_grid(&domain, &config.grid)?);
        let weights = config.weights.iter().map(|w| w.build(domain.dim())).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            domain,
            grid,
            settings: config.settings(),
            weights,
            envelopes: BTreeMap::new(),
            reports: BTreeMap::new(),
        })
    }

    fn envelope(&mut self, i: usize) -> Option<std::result::Result<&Envelope, String>> {
        if !self.weights[i].is_toric() {
            return None;
        }
        if !self.envelopes.contains_key(&i) {
            let t = &self.config.tolerances;
            let env = psh_envelope_toric(
                &self.weights[i],
                &self.domain,
                &self.config.envelope_grid,
                t.envelope_tol,
                t.envelope_max_iter,
            )
            .map_err(|e| e.to_string());
            self.envelopes.insert(i, env);
        }
        Some(self.envelopes[&i].as_ref().map_err(Clone::clone))
    }

    fn report(&mut self, i: usize) -> std::result::Result<&ConvergenceReport, String> {
        if !self.reports.contains_key(&i) {
            let oracle = match self.envelope(i) {
                Some(Ok(env)) => Some(env.clone()),
                Some(Err(e)) => return Err(format!("envelope oracle: {e}")),
                None => None,
            };
            let report = converge_run(
                &self.weights[i],
                &self.domain,
                &self.config.schedule,
                &self.grid.points,
                &self.settings,
                oracle.as_ref(),
            )
            .map_err(|e| e.to_string());
            self.reports.insert(i, report);
        }
        self.reports[&i].as_ref().map_err(Clone::clone)
    }
}

struct Collected {
    header: String,
    rows: Vec<(String, bool)>,
    failures: Vec<Failure>,
    weights: Vec<Value>,
}

impl Collected {
    fn new(header: String) -> Self {
        Self { header, rows: Vec::new(), failures: Vec::new(), weights: Vec::new() }
    }

    fn fail(&mut self, weight: &str, message: impl Into<String>) {
        self.failures.push(Failure { weight: weight.into(), message: message.into() });
    }
}

fn run_kernel(ws: &mut Workspace, seed: u64) -> Collected {
    let mut c = Collected::new(kernel_csv_header(ws.domain.dim()));
    for w in &ws.weights {
        match kernel_rows(w, &ws.domain, &ws.config.schedule, &ws.grid.points, &ws.settings) {
            Ok(rows) => {
                let bad = rows.iter().filter(|r| r.1).count();
                c.rows.extend(rows);
                // extremal property at the smallest m and a mid-grid point:
                // no random element beats K
                let m = ws.config.schedule[0];
                let probe = &ws.grid.points[ws.grid.len() / 2];
                let witness = Approximator::new(w, &ws.domain, m, &ws.settings, std::slice::from_ref(probe))
                    .and_then(|a| extremal_witness_check(a.engine(), probe, 64, seed));
                match witness {
                    Ok(rep) => {
                        let ok = rep.max_ratio <= rep.kernel * (1.0 + 1e-9) + 1e-300
                            && (rep.witness_ratio - rep.kernel).abs() <= 1e-6 * rep.kernel.max(1e-300);
                        if !ok {
                            c.fail(w.name(), format!("extremal witness check failed: {rep:?}"));
                        }
                        c.weights.push(json!({
                            "weight": w.name(),
                            "violations": bad,
                            "witness": {"m": m, "kernel": rep.kernel, "max_random_ratio": rep.max_ratio, "witness_ratio": rep.witness_ratio},
                        }));
                    }
                    Err(e) => c.fail(w.name(), format!("extremal witness check: {e}")),
                }
            }
            Err(e) => c.fail(w.name(), e.to_string()),
        }
    }
    c
}

fn run_envelope(ws: &mut Workspace) -> Collected {
    let mut c = Collected::new(field_csv_header(ws.domain.dim()));
    let centres = spot_centres(&ws.domain);
    for i in 0..ws.weights.len() {
        let name = ws.weights[i].name().to_string();
        match ws.envelope(i) {
            None => c.weights.push(json!({"weight": name, "skipped": "the envelope oracle needs a toric weight"})),
            Some(Err(e)) => c.fail(&name, e),
            Some(Ok(env)) => {
                let env = env.clone();
                let rows = envelope_rows(&ws.weights[i], &env);
                let bad = rows.iter().filter(|r| r.1).count();
                let f = |z: &Point| env.value_at(z);
                let sub = subharmonicity_check(&f, &ws.domain, &centres, &[0.05, 0.15]);
                if sub.max_violation > SUBHARMONIC_TOL {
                    c.fail(&name, format!("sub-mean-value violation {:.3e}", sub.max_violation));
                }
                let s = env.summary();
                c.weights.push(json!({
                    "weight": name,
                    "iterations": s.iterations,
                    "final_gap": s.final_gap,
                    "monotone_fixpoint": s.monotone_fixpoint,
                    "violations": bad,
                    "sub_mean_value_violation": sub.max_violation,
                }));
                c.rows.extend(rows);
            }
        }
    }
    c
}

fn report_rows(report: &ConvergenceReport) -> Vec<(String, bool)> {
    let mut buf = Vec::new();
    report.write_rows(&mut buf).expect("writing to memory");
    String::from_utf8(buf)
        .expect("CSV is UTF-8")
        .lines()
        .zip(&report.rows)
        .map(|(line, r)| (line.to_string(), r.violated()))
        .collect()
}

fn run_bounds(ws: &mut Workspace) -> Collected {
    let mut c = Collected::new(ConvergenceReport::csv_header(ws.domain.dim()));
    for i in 0..ws.weights.len() {
        let w = &ws.weights[i];
        let name = w.name().to_string();
        if w.psh() != PshFlag::Yes {
            c.weights.push(json!({"weight": name, "skipped": "the lower bound needs a weight declared psh"}));
            continue;
        }
        match converge_run(w, &ws.domain, &ws.config.schedule, &ws.grid.points, &ws.settings, None) {
            Ok(report) => {
                let rows = report_rows(&report);
                let s = &report.summary;
                let (top, bottom) = (s.deficit_max_top.unwrap_or(f64::NAN), s.deficit_max_bottom.unwrap_or(f64::NAN));
                if !(top - bottom < DEFICIT_GROWTH * bottom.abs()) {
                    c.fail(&name, format!("deficit grows from {bottom:.6e} to {top:.6e} along the schedule"));
                }
                c.weights.push(json!({
                    "weight": name,
                    "C1_estimate": s.c1_estimate,
                    "deficit_max_top": s.deficit_max_top,
                    "deficit_max_bottom": s.deficit_max_bottom,
                    "bounds_violations": s.bounds_violations,
                    "violations": rows.iter().filter(|r| r.1).count(),
                }));
                c.rows.extend(rows);
            }
            Err(e) => c.fail(&name, e.to_string()),
        }
    }
    c
}

fn run_converge(ws: &mut Workspace) -> Collected {
    let mut c = Collected::new(ConvergenceReport::csv_header(ws.domain.dim()));
    for i in 0..ws.weights.len() {
        let name = ws.weights[i].name().to_string();
        match ws.report(i) {
            Ok(report) => {
                let rows = report_rows(report);
                let mut summary = serde_json::to_value(&report.summary).expect("summary serializes");
                summary["violations"] = json!(rows.iter().filter(|r| r.1).count());
                c.weights.push(summary);
                c.rows.extend(rows);
            }
            Err(e) => c.fail(&name, e),
        }
    }
    c
}

/// Φ against its contract: `Φ <= Ṽ + tol` where the oracle is finite (at
/// least `phi_margin` from the boundary) and `Φ >= V_{m_max} − tol`
/// everywhere, with `tol = n · phi_tol`. A closing at grid scale cannot
/// resolve the `r → 0` limit at a pole, so points whose pole coordinates lie
/// within the closing radius are counted separately instead.
fn run_phi(ws: &mut Workspace) -> Collected {
    let mut c = Collected::new(phi_csv_header(ws.domain.dim()));
    let tol = ws.config.tolerances.phi_tol * ws.domain.dim() as f64;
    let margin = ws.config.tolerances.phi_margin;
    let m_max = *ws.config.schedule.last().unwrap();
    for i in 0..ws.weights.len() {
        let name = ws.weights[i].name().to_string();
        let grid = ws.grid.clone();
        let domain = ws.domain.clone();
        let report = match ws.report(i) {
            Ok(r) => r.clone(),
            Err(e) => {
                c.fail(&name, e);
                continue;
            }
        };
        let oracle = report.summary.oracle;
        let phi = match limsup_regularized(&report, grid.clone(), None) {
            Ok(f) => f,
            Err(e) => {
                c.fail(&name, e.to_string());
                continue;
            }
        };
        let reach = *default_radii(&phi).last().unwrap() * (1.0 + 1e-9);
        let poles = ws.weights[i].poles().to_vec();
        let (mut bad, mut unresolved) = (0, 0);
        let mut worst = f64::NEG_INFINITY;
        for (pi, z) in grid.points.iter().enumerate() {
            let row = |m: u32| report.rows.iter().find(|r| r.point_index == pi && r.m == m);
            let v_tilde = row(m_max).map_or(f64::NAN, |r| r.v_tilde);
            let v_top = row(m_max).map_or(f64::NAN, |r| r.v_m);
            let p = phi.values[pi];
            let error = if p == f64::NEG_INFINITY && v_tilde == f64::NEG_INFINITY { 0.0 } else { p - v_tilde };
            let near_pole = poles.iter().zip(&z.coords).any(|(g, c)| *g > 0.0 && c.norm() <= reach);
            let assessed = oracle
                && !near_pole
                && v_tilde.is_finite()
                && domain.dist_to_boundary(z).map_or(false, |d| d >= margin);
            unresolved += usize::from(oracle && near_pole);
            if assessed {
                worst = worst.max(error);
            }
            let violated = (assessed && !(error <= tol)) || p < v_top - tol;
            bad += usize::from(violated);
            let mut cols = vec![name.clone()];
            cols.extend(coord_cols(z));
            cols.extend([fmt_f64(p), fmt_f64(v_tilde), fmt_f64(error)]);
            c.rows.push((cols.join(","), violated));
        }
        c.weights.push(json!({
            "weight": name,
            "oracle": oracle,
            "max_error": if worst.is_finite() { json!(worst) } else { Value::Null },
            "near_pole_points": unresolved,
            "violations": bad,
        }));
    }
    c
}

/// Resolve the output directory: flag, then environment, then config, then `out`.
pub fn output_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Run the configured checks (restricted to `only` when given), writing
/// `<check>.csv` files and `summary.json` into `out`.
pub fn run(config: &ExperimentConfig, out: &Path, only: Option<&[CheckKind]>, seed: u64) -> Result<RunSummary> {
    config.validate()?;
    if config.weights.is_empty() {
        return Err(Error::Config("weights: at least one weight is required".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let mut checks: Vec<CheckKind> = config.checks.clone();
    if let Some(only) = only {
        checks.retain(|c| only.contains(c));
    }
    checks.sort();
    checks.dedup();

    let mut ws = Workspace::new(config)?;
    let mut reports = Vec::new();
    for check in checks {
        let collected = match check {
            CheckKind::Kernel => run_kernel(&mut ws, seed),
            CheckKind::Envelope => run_envelope(&mut ws),
            CheckKind::Bounds => run_bounds(&mut ws),
            CheckKind::Converge => run_converge(&mut ws),
            CheckKind::Phi => run_phi(&mut ws),
        };
        let csv = format!("{check}.csv");
        let mut file = fs::File::create(out.join(&csv)).map_err(|e| Error::Io(format!("{csv}: {e}")))?;
        writeln!(file, "{}", collected.header)?;
        for (line, _) in &collected.rows {
            writeln!(file, "{line}")?;
        }
        reports.push(CheckReport {
            check,
            csv,
            rows: collected.rows.len(),
            violations: collected.rows.iter().filter(|r| r.1).count(),
            failures: collected.failures,
            weights: collected.weights,
        });
    }
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        seed,
        domain: config.domain.clone(),
        schedule: config.schedule.clone(),
        total_violations: reports.iter().map(|r| r.violations).sum(),
        failed_checks: reports.iter().filter(|r| !r.passed()).map(|r| r.check).collect(),
        checks: reports,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out.join("summary.json"), json + "\n")?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("0.5").unwrap(), Complex64::new(0.5, 0.0));
        assert_eq!(parse_complex("0.3+0.4i").unwrap(), Complex64::new(0.3, 0.4));
        assert_eq!(parse_complex("-0.2i").unwrap(), Complex64::new(0.0, -0.2));
        assert_eq!(parse_complex("1e-3-2i").unwrap(), Complex64::new(1e-3, -2.0));
        assert_eq!(parse_complex("-i").unwrap(), Complex64::new(0.0, -1.0));
        assert!(parse_complex("abc").is_err());
        assert_eq!(parse_point("0.1,0.2i").unwrap().coords.len(), 2);
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = ExperimentConfig::from_toml_str("[[weights]]\nname = \"zero\"\n").unwrap();
        assert_eq!(cfg.schedule, vec![1, 2, 4, 8, 16, 32, 64]);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.checks.len(), 5);

        let err = ExperimentConfig::from_toml_str("[[weights]]\nname = \"nope\"\n").unwrap_err();
        assert!(err.to_string().contains("unknown catalog weight `nope`"), "{err}");

        let err = ExperimentConfig::from_toml_str("[tolerances]\nquad_tol = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("tolerances.quad_tol"), "{err}");

        let err = ExperimentConfig::from_toml_str("seed = 1\n[grid]\nmode = \"spiral\"\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let err = ExperimentConfig::from_toml_str("colour = 1\n").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn check_names_round_trip() {
        for c in CheckKind::ALL {
            assert_eq!(c.name().parse::<CheckKind>().unwrap(), c);
        }
        assert!("plot".parse::<CheckKind>().is_err());
    }
}

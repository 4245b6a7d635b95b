//! Weights `V = Σ_j γ_j log|z_j| + b(z)` with a bounded part `b`, the test
//! catalog, and the discrete upper semi-continuous regularization V*.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domains::{Domain, Point};
use crate::error::{Error, Result};
use crate::field::SampledField;

pub type AxisFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type JointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GeneralFn = Arc<dyn Fn(&[Complex64]) -> f64 + Send + Sync>;

/// Bounded part of a weight, without its constant shift.
#[derive(Clone)]
pub enum Profile {
    Zero,
    /// `b(z) = Σ_j f_j(|z_j|)`; `None` entries are identically zero.
    Separable(Vec<Option<AxisFn>>),
    /// Toric but not separable: `b(z) = f(|z_1|, …, |z_n|)`.
    Joint(JointFn),
    /// Arbitrary (non-toric) bounded part.
    General(GeneralFn),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "Zero"),
            Profile::Separable(axes) => write!(
                f,
                "Separable({:?})",
                axes.iter().map(|a| a.is_some()).collect::<Vec<_>>()
            ),
            Profile::Joint(_) => write!(f, "Joint"),
            Profile::General(_) => write!(f, "General"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PshFlag {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Debug)]
pub struct Weight {
    name: String,
    poles: Vec<f64>,
    profile: Profile,
    shift: f64,
    bound: f64,
    psh: PshFlag,
    /// Moduli per axis where the bounded part may fail to be smooth.
    breaks: Vec<Vec<f64>>,
}

impl Weight {
    /// `bound` must dominate `|profile|` on Ω; the shift is added to it.
    pub fn new(
        name: impl Into<String>,
        poles: Vec<f64>,
        profile: Profile,
        bound: f64,
        psh: PshFlag,
    ) -> Result<Self> {
        if poles.is_empty() || poles.len() > 2 {
            return Err(Error::Argument(format!("weights live in C^1 or C^2, got {} poles", poles.len())));
        }
        if let Some(g) = poles.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::Argument(format!("pole coefficients must be nonnegative, got {g}")));
        }
        if let Profile::Separable(axes) = &profile {
            if axes.len() != poles.len() {
                return Err(Error::Argument("separable profile needs one entry per coordinate".into()));
            }
        }
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::Argument(format!("bound must be finite and nonnegative, got {bound}")));
        }
        let breaks = vec![Vec::new(); poles.len()];
        Ok(Self { name: name.into(), poles, profile, shift: 0.0, bound, psh, breaks })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.poles.len()
    }

    pub fn poles(&self) -> &[f64] {
        &self.poles
    }

    pub fn max_pole(&self) -> f64 {
        self.poles.iter().cloned().fold(0.0, f64::max)
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Constant added to the bounded part.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Bound B with `|bounded_part| <= B`.
    pub fn bound(&self) -> f64 {
        self.bound + self.shift.abs()
    }

    pub fn psh(&self) -> PshFlag {
        self.psh
    }

    pub fn is_toric(&self) -> bool {
        !matches!(self.profile, Profile::General(_))
    }

    /// Declare radial kinks of the bounded part, one list of moduli per axis.
    pub fn with_breaks(mut self, breaks: Vec<Vec<f64>>) -> Self {
        assert_eq!(breaks.len(), self.poles.len(), "one break list per axis");
        self.breaks = breaks;
        self
    }

    pub fn breaks(&self, axis: usize) -> &[f64] {
        &self.breaks[axis]
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// `V + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut w = self.clone();
        w.shift += c;
        w
    }

    /// Bounded part without the shift.
    pub fn profile_value(&self, z: &[Complex64]) -> f64 {
        match &self.profile {
            Profile::Zero => 0.0,
            Profile::Separable(axes) => axes
                .iter()
                .zip(z)
                .map(|(f, c)| f.as_ref().map_or(0.0, |f| f(c.norm())))
                .sum(),
            Profile::Joint(f) => {
                let moduli: Vec<f64> = z.iter().map(|c| c.norm()).collect();
                f(&moduli)
            }
            Profile::General(f) => f(z),
        }
    }

    /// Bounded part of a toric weight as a function of the moduli.
    pub fn profile_moduli(&self, r: &[f64]) -> Option<f64> {
        match &self.profile {
            Profile::Zero => Some(0.0),
            Profile::Separable(axes) => {
                Some(axes.iter().zip(r).map(|(f, &x)| f.as_ref().map_or(0.0, |f| f(x))).sum())
            }
            Profile::Joint(f) => Some(f(r)),
            Profile::General(_) => None,
        }
    }

    /// `bounded_part(z)`, shift included.
    pub fn bounded_part(&self, z: &Point) -> f64 {
        self.profile_value(&z.coords) + self.shift
    }

    /// `V(z)` without a membership check; −∞ exactly on pole axes.
    pub fn value(&self, z: &Point) -> f64 {
        let mut v = self.bounded_part(z);
        for (g, c) in self.poles.iter().zip(&z.coords) {
            if *g > 0.0 {
                let r = c.norm();
                if r == 0.0 {
                    return f64::NEG_INFINITY;
                }
                v += g * r.ln();
            }
        }
        v
    }

    /// `V` for a toric weight at given moduli.
    pub fn value_moduli(&self, r: &[f64]) -> Option<f64> {
        let mut v = self.profile_moduli(r)? + self.shift;
        for (g, &x) in self.poles.iter().zip(r) {
            if *g > 0.0 {
                if x == 0.0 {
                    return Some(f64::NEG_INFINITY);
                }
                v += g * x.ln();
            }
        }
        Some(v)
    }

    /// Grid approximation of `esssup_{B(z, r)} V`: the maximum over a polar
    /// sample of the ball with its centre removed.
    pub fn esssup_ball(&self, z: &Point, r: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let mut probe = z.clone();
        match z.dim() {
            1 => {
                let (rings, angles) = (24, 96);
                for k in 1..=rings {
                    let rho = r * k as f64 / rings as f64;
                    for l in 0..angles {
                        let th = 2.0 * PI * l as f64 / angles as f64;
                        probe.coords[0] = z.coords[0] + Complex64::from_polar(rho, th);
                        best = best.max(self.value(&probe));
                    }
                }
            }
            _ => {
                let (rings, tilts, angles) = (8, 5, 12);
                for k in 1..=rings {
                    let rho = r * k as f64 / rings as f64;
                    for s in 0..tilts {
                        let phi = 0.5 * PI * s as f64 / (tilts - 1) as f64;
                        for a in 0..angles {
                            for b in 0..angles {
                                let t1 = 2.0 * PI * a as f64 / angles as f64;
                                let t2 = 2.0 * PI * b as f64 / angles as f64;
                                probe.coords[0] = z.coords[0] + Complex64::from_polar(rho * phi.cos(), t1);
                                probe.coords[1] = z.coords[1] + Complex64::from_polar(rho * phi.sin(), t2);
                                best = best.max(self.value(&probe));
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

/// `V(z)` with a domain-membership check.
pub fn eval_weight(w: &Weight, domain: &Domain, z: &Point) -> Result<f64> {
    if w.dim() != domain.dim() {
        return Err(Error::Argument(format!(
            "weight in C^{} evaluated on a domain in C^{}",
            w.dim(),
            domain.dim()
        )));
    }
    if !domain.contains(z) {
        return Err(Error::OutsideDomain { point: z.to_string() });
    }
    Ok(w.value(z))
}

/// Catalog parameters; unused fields are ignored by entries that don't need them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightParams {
    pub gamma: Option<Vec<f64>>,
    /// `(r, value)` pairs, linear interpolation in `r`, constant beyond the ends.
    pub table: Option<Vec<[f64; 2]>>,
    pub epsilon: Option<f64>,
    pub shift: Option<f64>,
}

pub const CATALOG_NAMES: [&str; 6] =
    ["zero", "log_pole", "neg_abs_square", "abs_square", "radial_custom", "angular_bump"];

/// Build a catalog weight in C^`dim`.
pub fn catalog(name: &str, params: &WeightParams, dim: usize) -> Result<Weight> {
    if !(1..=2).contains(&dim) {
        return Err(Error::Argument(format!("catalog weights exist for n = 1, 2, got {dim}")));
    }
    let zeros = vec![0.0; dim];
    let square = |sign: f64| -> Profile {
        let f: AxisFn = Arc::new(move |r: f64| sign * r * r);
        Profile::Separable(vec![Some(f); dim])
    };
    let w = match name {
        "zero" => Weight::new(name, zeros, Profile::Zero, 0.0, PshFlag::Yes)?,
        "log_pole" => {
            let gamma = params.gamma.clone().unwrap_or_else(|| vec![1.0; dim]);
            let gamma = if gamma.len() == 1 && dim == 2 { vec![gamma[0]; 2] } else { gamma };
            if gamma.len() != dim {
                return Err(Error::Argument(format!("log_pole needs {dim} gamma values")));
            }
            Weight::new(name, gamma, Profile::Zero, 0.0, PshFlag::Yes)?
        }
        "neg_abs_square" => Weight::new(name, zeros, square(-1.0), dim as f64, PshFlag::No)?,
        "abs_square" => Weight::new(name, zeros, square(1.0), dim as f64, PshFlag::Yes)?,
        "radial_custom" => {
            let table = params
                .table
                .clone()
                .ok_or_else(|| Error::Argument("radial_custom needs a `table`".into()))?;
            if table.is_empty() || table.windows(2).any(|w| w[0][0] >= w[1][0]) {
                return Err(Error::Argument("radial_custom table must be nonempty with increasing r".into()));
            }
            if table.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
                return Err(Error::Argument("radial_custom table must be finite".into()));
            }
            let bound = table.iter().map(|p| p[1].abs()).fold(0.0, f64::max) * dim as f64;
            let knots: Vec<f64> = table.iter().map(|p| p[0]).collect();
            let table = Arc::new(table);
            let f: AxisFn = Arc::new(move |r| piecewise_linear(&table, r));
            Weight::new(name, zeros, Profile::Separable(vec![Some(f); dim]), bound, PshFlag::Unknown)?
                .with_breaks(vec![knots; dim])
        }
        "angular_bump" => {
            if dim != 1 {
                return Err(Error::Argument("angular_bump is defined on the disk only".into()));
            }
            let eps = params.epsilon.unwrap_or(0.5);
            if !eps.is_finite() {
                return Err(Error::Argument("angular_bump epsilon must be finite".into()));
            }
            // ε |z|² (1 + cos arg z) / 2 = ε (|z|² + |z| Re z) / 2
            let f: GeneralFn = Arc::new(move |z: &[Complex64]| {
                let z = z[0];
                0.5 * eps * (z.norm_sqr() + z.norm() * z.re)
            });
            Weight::new(name, zeros, Profile::General(f), eps.abs(), PshFlag::Unknown)?
        }
        other => return Err(Error::Catalog(other.to_string())),
    };
    Ok(match params.shift {
        Some(c) => w.shifted(c),
        None => w,
    })
}

fn piecewise_linear(table: &[[f64; 2]], r: f64) -> f64 {
    let n = table.len();
    if r <= table[0][0] {
        return table[0][1];
    }
    if r >= table[n - 1][0] {
        return table[n - 1][1];
    }
    let i = table.partition_point(|p| p[0] <= r) - 1;
    let [r0, v0] = table[i];
    let [r1, v1] = table[i + 1];
    v0 + (v1 - v0) * (r - r0) / (r1 - r0)
}

/// Tolerance for the single-point spike convention.
pub const SPIKE_TOL: f64 = 1e-9;

/// Default regularization radii `{8h, 4h, 2h}` for grid spacing `h`.
pub fn default_radii(field: &SampledField) -> Vec<f64> {
    let h = field.grid.max_spacing();
    vec![8.0 * h, 4.0 * h, 2.0 * h]
}

/// Discrete weakly upper semi-continuous regularization.
///
/// Two steps at the smallest radius `r`, with neighbourhoods taken in the
/// grid's native coordinates:
/// 1. a value exceeding every neighbour by more than `SPIKE_TOL` is replaced
///    by the neighbour max;
/// 2. a morphological closing (max over `B(a, r)` followed by min over
///    `B(a, r)`) fills dips too thin to carry measure at grid scale.
///
/// The cut leaves no spikes behind and a closing creates none, so the
/// composition is exactly idempotent. It is monotone up to `SPIKE_TOL`.
pub fn usc_regularize(field: &SampledField, radii: &[f64]) -> Result<SampledField> {
    let neighbours = usc_neighbourhoods(field, radii)?;
    let f = &field.values;
    let cut = spike_cut(f, &neighbours);
    let dilated: Vec<f64> = (0..f.len())
        .map(|a| neighbours[a].iter().map(|&q| cut[q]).fold(cut[a], f64::max))
        .collect();
    let closed: Vec<f64> = (0..f.len())
        .map(|a| neighbours[a].iter().map(|&q| dilated[q]).fold(dilated[a], f64::min))
        .collect();
    SampledField::new(field.grid.clone(), closed)
}

fn usc_neighbourhoods(field: &SampledField, radii: &[f64]) -> Result<Vec<Vec<usize>>> {
    if radii.is_empty() {
        return Err(Error::Argument("usc_regularize needs at least one radius".into()));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || radii.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Argument("radii must be positive and strictly decreasing".into()));
    }
    let r = *radii.last().unwrap();
    let h = field.grid.max_spacing();
    if r < 2.0 * h * (1.0 - 1e-12) {
        return Err(Error::Argument(format!("smallest radius {r} is below twice the grid spacing {h}")));
    }
    Ok(neighbourhoods(field, r))
}

fn neighbour_max(f: &[f64], nb: &[usize]) -> f64 {
    nb.iter().map(|&q| f[q]).fold(f64::NEG_INFINITY, f64::max)
}

fn is_spike(f: &[f64], nb: &[usize], a: usize) -> bool {
    !nb.is_empty() && f[a] > neighbour_max(f, nb) + SPIKE_TOL
}

fn spike_cut(f: &[f64], neighbours: &[Vec<usize>]) -> Vec<f64> {
    (0..f.len())
        .map(|a| if is_spike(f, &neighbours[a], a) { neighbour_max(f, &neighbours[a]) } else { f[a] })
        .collect()
}

/// Whether lowering the value at point `a` (by any amount) leaves
/// [`usc_regularize`] unchanged: every closed neighbourhood containing `a`
/// has another point at least as high as `a`, both before and after the
/// spike cut.
pub fn dip_is_invisible(field: &SampledField, radii: &[f64], a: usize) -> Result<bool> {
    let neighbours = usc_neighbourhoods(field, radii)?;
    let f = &field.values;
    let cut = spike_cut(f, &neighbours);
    if is_spike(f, &neighbours[a], a) {
        return Ok(false);
    }
    Ok(std::iter::once(a).chain(neighbours[a].iter().copied()).all(|b| {
        // the cut at b reads its open neighbourhood, the dilation the closed one
        let cut_unchanged = b == a || neighbours[b].iter().any(|&q| q != a && f[q] >= f[a]);
        let dilation_unchanged =
            std::iter::once(b).chain(neighbours[b].iter().copied()).any(|q| q != a && cut[q] >= cut[a]);
        cut_unchanged && dilation_unchanged
    }))
}

/// Whether raising the value at point `a` by more than [`SPIKE_TOL`] leaves
/// [`usc_regularize`] unchanged: `a` already sits at its neighbour max after
/// the cut and none of its neighbours is a cut spike.
pub fn spike_is_invisible(field: &SampledField, radii: &[f64], a: usize) -> Result<bool> {
    let neighbours = usc_neighbourhoods(field, radii)?;
    let f = &field.values;
    let cut = spike_cut(f, &neighbours);
    Ok(!neighbours[a].is_empty()
        && cut[a] == neighbour_max(f, &neighbours[a])
        && neighbours[a].iter().all(|&b| !is_spike(f, &neighbours[b], b)))
}

/// Grid neighbours (centre excluded) within native distance `r`.
fn neighbourhoods(field: &SampledField, r: f64) -> Vec<Vec<usize>> {
    let grid = &field.grid;
    let shape = grid.shape();
    let spacing = grid.spacing();
    let windows: Vec<usize> = spacing
        .iter()
        .map(|&h| if h > 0.0 { (r / h + 1e-9).floor() as usize } else { 0 })
        .collect();
    let r2 = r * r * (1.0 + 1e-12);
    (0..grid.len())
        .map(|a| {
            let ia = grid.unravel(a);
            let mut out = Vec::new();
            let mut offset: Vec<usize> = ia.iter().zip(&windows).map(|(&i, &w)| i.saturating_sub(w)).collect();
            let hi: Vec<usize> = ia
                .iter()
                .zip(&windows)
                .zip(&shape)
                .map(|((&i, &w), &s)| (i + w).min(s - 1))
                .collect();
            let lo = offset.clone();
            loop {
                if offset != ia {
                    let d2: f64 = offset
                        .iter()
                        .zip(&ia)
                        .enumerate()
                        .map(|(d, (&i, &j))| (grid.axes[d][i] - grid.axes[d][j]).powi(2))
                        .sum();
                    if d2 <= r2 {
                        out.push(grid.ravel(&offset));
                    }
                }
                let mut d = offset.len();
                loop {
                    if d == 0 {
                        return out;
                    }
                    d -= 1;
                    if offset[d] < hi[d] {
                        offset[d] += 1;
                        break;
                    }
                    offset[d] = lo[d];
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{make_grid, GridSpec};

    fn disk_catalog(name: &str) -> Weight {
        catalog(name, &WeightParams::default(), 1).unwrap()
    }

    #[test]
    fn pure_log_pole() {
        let w = disk_catalog("log_pole");
        let d = Domain::unit_disk();
        assert_eq!(eval_weight(&w, &d, &Point::real(&[0.5])).unwrap(), 0.5f64.ln());
        assert_eq!(eval_weight(&w, &d, &Point::real(&[0.0])).unwrap(), f64::NEG_INFINITY);
        assert!(eval_weight(&w, &d, &Point::real(&[1.0])).is_err());
    }

    #[test]
    fn neg_abs_square_value() {
        let w = disk_catalog("neg_abs_square");
        assert_eq!(w.value(&Point::real(&[0.5])), -0.25);
        assert_eq!(w.psh(), PshFlag::No);
        assert!(w.is_toric());
    }

    #[test]
    fn catalog_flags() {
        let zero = disk_catalog("zero");
        assert_eq!(zero.poles(), &[0.0]);
        assert_eq!(zero.psh(), PshFlag::Yes);
        assert_eq!(disk_catalog("log_pole").psh(), PshFlag::Yes);
        assert_eq!(disk_catalog("abs_square").psh(), PshFlag::Yes);
        assert!(!disk_catalog("angular_bump").is_toric());
        assert!(catalog("angular_bump", &WeightParams::default(), 2).is_err());
        assert!(matches!(catalog("nope", &WeightParams::default(), 1), Err(Error::Catalog(_))));
        assert!(catalog("radial_custom", &WeightParams::default(), 1).is_err());
    }

    #[test]
    fn bounded_part_respects_bound() {
        let params = WeightParams {
            table: Some(vec![[0.0, 0.2], [0.5, -0.4], [1.0, 0.1]]),
            epsilon: Some(0.7),
            ..Default::default()
        };
        let d = Domain::unit_disk();
        let g = make_grid(&d, &GridSpec::cartesian(15, 0.01)).unwrap();
        for name in CATALOG_NAMES {
            let w = catalog(name, &params, 1).unwrap();
            for p in &g.points {
                assert!(w.bounded_part(p).abs() <= w.bound() + 1e-15, "{name} at {p}");
                if w.poles()[0] == 0.0 {
                    assert!(w.value(p).is_finite());
                }
            }
        }
    }

    #[test]
    fn shift_moves_value() {
        let w = disk_catalog("abs_square").shifted(0.5);
        assert_eq!(w.value(&Point::real(&[0.5])), 0.75);
        assert_eq!(w.bound(), 1.5);
    }

    #[test]
    fn esssup_of_log_on_ball() {
        let w = disk_catalog("log_pole");
        let s = w.esssup_ball(&Point::real(&[0.5]), 0.25);
        assert!((s - 0.75f64.ln()).abs() < 1e-12);
    }

    fn radial_field(p: usize, f: impl Fn(f64) -> f64) -> SampledField {
        let g = Arc::new(make_grid(&Domain::unit_disk(), &GridSpec::radial(p, 0.05)).unwrap());
        SampledField::from_fn(g, |z| f(z.coords[0].re)).unwrap()
    }

    #[test]
    fn single_point_dip_is_invisible() {
        let mut f = radial_field(32, |_| 0.0);
        f.values[10] = -5.0;
        let out = usc_regularize(&f, &default_radii(&f)).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_point_spike_is_cut() {
        let mut f = radial_field(32, |_| 0.0);
        f.values[7] = 3.0;
        let out = usc_regularize(&f, &default_radii(&f)).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invisibility_classes() {
        let flat = radial_field(24, |_| 0.5);
        let radii = default_radii(&flat);
        for a in 0..flat.len() {
            assert!(dip_is_invisible(&flat, &radii, a).unwrap());
            assert!(spike_is_invisible(&flat, &radii, a).unwrap());
        }
        // strictly monotone data: the closing reads every value
        let falling = radial_field(24, |r| -r);
        assert!(!dip_is_invisible(&falling, &radii, 0).unwrap());
        assert!(!dip_is_invisible(&falling, &radii, 12).unwrap());
        let step = radial_field(24, |r| if r < 0.5 { 1.0 } else { 0.0 });
        assert!(dip_is_invisible(&step, &radii, 3).unwrap());
        assert!(dip_is_invisible(&step, &radii, 20).unwrap());
        let mut spiked = flat.clone();
        spiked.values[5] = 2.0;
        assert!(!dip_is_invisible(&spiked, &radii, 5).unwrap());
        assert!(!spike_is_invisible(&spiked, &radii, 6).unwrap());
    }

    #[test]
    fn step_keeps_its_thick_level_sets() {
        let f = radial_field(40, |r| if r < 0.5 { 1.0 } else { 0.0 });
        let out = usc_regularize(&f, &default_radii(&f)).unwrap();
        assert_eq!(out.values, f.values);
    }

    #[test]
    fn monotone_continuous_field_unchanged_away_from_edges() {
        let f = radial_field(40, |r| -r * r);
        let out = usc_regularize(&f, &default_radii(&f)).unwrap();
        for k in 1..f.len() - 2 {
            assert!((out.values[k] - f.values[k]).abs() <= 1e-9, "k = {k}");
        }
    }

    #[test]
    fn radii_validation() {
        let f = radial_field(10, |_| 0.0);
        let h = f.grid.max_spacing();
        assert!(usc_regularize(&f, &[]).is_err());
        assert!(usc_regularize(&f, &[2.0 * h, 4.0 * h]).is_err());
        assert!(usc_regularize(&f, &[h]).is_err());
    }

    #[test]
    fn neg_inf_dip_is_filled() {
        let mut f = radial_field(16, |_| 1.0);
        f.values[5] = f64::NEG_INFINITY;
        let out = usc_regularize(&f, &default_radii(&f)).unwrap();
        assert_eq!(out.values[5], 1.0);
    }
}

//! Model domains (unit disk, bidisk), evaluation grids and the Euclidean
//! geometry used by the kernel bounds.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Disk,
    Polydisk,
}

/// A disk in C (n = 1) or a polydisk in C² (n = 2), centred at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    radii: Vec<f64>,
}

impl Domain {
    pub fn new(kind: DomainKind, radii: Vec<f64>) -> Result<Self> {
        let n = match kind {
            DomainKind::Disk => 1,
            DomainKind::Polydisk => 2,
        };
        if radii.len() != n {
            return Err(Error::Domain(format!(
                "{kind:?} needs {n} radii, got {}",
                radii.len()
            )));
        }
        if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Domain(format!("radius must be positive, got {r}")));
        }
        Ok(Self { kind, radii })
    }

    pub fn unit_disk() -> Self {
        Self { kind: DomainKind::Disk, radii: vec![1.0] }
    }

    pub fn unit_polydisk() -> Self {
        Self { kind: DomainKind::Polydisk, radii: vec![1.0, 1.0] }
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    /// Complex dimension n.
    pub fn dim(&self) -> usize {
        self.radii.len()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn radius(&self, axis: usize) -> f64 {
        self.radii[axis]
    }

    pub fn contains(&self, z: &Point) -> bool {
        z.dim() == self.dim()
            && z.coords.iter().zip(&self.radii).all(|(c, r)| c.norm() < *r)
    }

    /// Distance from an interior point to ∂Ω; for the polydisk the minimum
    /// over coordinates of `radius_j - |z_j|`.
    pub fn dist_to_boundary(&self, z: &Point) -> Result<f64> {
        if !self.contains(z) {
            return Err(Error::OutsideDomain { point: z.to_string() });
        }
        Ok(z.coords
            .iter()
            .zip(&self.radii)
            .map(|(c, r)| r - c.norm())
            .fold(f64::INFINITY, f64::min))
    }
}

/// A point of Cⁿ.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub coords: Vec<Complex64>,
}

impl Point {
    pub fn new(coords: Vec<Complex64>) -> Self {
        Self { coords }
    }

    /// Point with real coordinates.
    pub fn real(xs: &[f64]) -> Self {
        Self { coords: xs.iter().map(|&x| Complex64::new(x, 0.0)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.norm()).collect()
    }

    /// Euclidean distance in C^n = R^{2n}.
    pub fn distance(&self, other: &Point) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}{:+}i", c.re, c.im)?;
        }
        write!(f, ")")
    }
}

/// Lebesgue volume of the real 2n-dimensional ball of radius `r`:
/// π^n r^{2n} / n!.
pub fn ball_volume(n: usize, r: f64) -> Result<f64> {
    if !(1..=2).contains(&n) {
        return Err(Error::Argument(format!("ball_volume supports n in {{1, 2}}, got {n}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Argument(format!("ball radius must be positive, got {r}")));
    }
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    Ok(PI.powi(n as i32) * r.powi(2 * n as i32) / factorial)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Moduli `k·h`, `h = (R - margin) / p`, on the positive real axis of each coordinate.
    Radial,
    /// Square lattice inscribed in the disk of radius `R - margin`, per coordinate.
    Cartesian,
    /// `t = log|z_j|` uniformly spaced on `[log_floor, log(R - margin)]`.
    LogRadial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub mode: GridMode,
    pub points_per_axis: usize,
    pub margin: f64,
    pub log_floor: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { mode: GridMode::Radial, points_per_axis: 20, margin: 0.05, log_floor: -8.0 }
    }
}

impl GridSpec {
    pub fn radial(points_per_axis: usize, margin: f64) -> Self {
        Self { mode: GridMode::Radial, points_per_axis, margin, ..Self::default() }
    }

    pub fn cartesian(points_per_axis: usize, margin: f64) -> Self {
        Self { mode: GridMode::Cartesian, points_per_axis, margin, ..Self::default() }
    }

    pub fn log_radial(points_per_axis: usize, margin: f64, log_floor: f64) -> Self {
        Self { mode: GridMode::LogRadial, points_per_axis, margin, log_floor }
    }
}

/// A structured product grid.
///
/// Every grid is a tensor product of 1-D `axes` expressed in its native
/// coordinates (moduli for radial grids, real/imaginary parts for cartesian
/// grids, log-moduli for log-radial grids). Points are stored in row-major
/// order, last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub domain: Domain,
    pub spec: GridSpec,
    pub axes: Vec<Vec<f64>>,
    pub points: Vec<Point>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Uniform spacing along each native axis (0 for single-node axes).
    pub fn spacing(&self) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| if a.len() > 1 { a[1] - a[0] } else { 0.0 })
            .collect()
    }

    /// Largest per-axis spacing.
    pub fn max_spacing(&self) -> f64 {
        self.spacing().into_iter().fold(0.0, f64::max)
    }

    /// Native coordinates of a point of Ω for this grid's mode.
    pub fn native_coords(&self, z: &Point) -> Vec<f64> {
        match self.spec.mode {
            GridMode::Radial => z.moduli(),
            GridMode::Cartesian => z.coords.iter().flat_map(|c| [c.re, c.im]).collect(),
            GridMode::LogRadial => z.moduli().into_iter().map(f64::ln).collect(),
        }
    }

    /// Multi-index of the flat point index.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for d in (0..shape.len()).rev() {
            idx[d] = flat % shape[d];
            flat /= shape[d];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let shape = self.shape();
        idx.iter().zip(&shape).fold(0, |acc, (i, s)| acc * s + i)
    }
}

fn linspace(a: f64, b: f64, p: usize) -> Vec<f64> {
    if p == 1 {
        return vec![a];
    }
    (0..p).map(|k| a + (b - a) * k as f64 / (p - 1) as f64).collect()
}

/// Deterministic evaluation grid inside Ω; every point keeps distance
/// at least `margin` from ∂Ω.
pub fn make_grid(domain: &Domain, spec: &GridSpec) -> Result<Grid> {
    if spec.points_per_axis == 0 {
        return Err(Error::EmptyGrid("points_per_axis must be positive".into()));
    }
    if !(spec.margin > 0.0 && spec.margin < 1.0) {
        return Err(Error::Argument(format!("margin must lie in (0, 1), got {}", spec.margin)));
    }
    if let Some(r) = domain.radii().iter().find(|r| spec.margin >= **r) {
        return Err(Error::EmptyGrid(format!("margin {} >= radius {r}", spec.margin)));
    }
    let p = spec.points_per_axis;
    let mut axes = Vec::new();
    for &radius in domain.radii() {
        let inner = radius - spec.margin;
        match spec.mode {
            GridMode::Radial => {
                let h = inner / p as f64;
                axes.push((0..p).map(|k| k as f64 * h).collect());
            }
            GridMode::Cartesian => {
                let half = inner / std::f64::consts::SQRT_2;
                let axis = if p == 1 { vec![0.0] } else { linspace(-half, half, p) };
                axes.push(axis.clone());
                axes.push(axis);
            }
            GridMode::LogRadial => {
                let t_max = inner.ln();
                if !(spec.log_floor < t_max) || p < 2 {
                    return Err(Error::EmptyGrid(format!(
                        "log-radial grid needs log_floor < {t_max} and at least 2 points"
                    )));
                }
                axes.push(linspace(spec.log_floor, t_max, p));
            }
        }
    }

    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = shape.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..total {
        let native: Vec<f64> = idx.iter().enumerate().map(|(d, &i)| axes[d][i]).collect();
        let coords = match spec.mode {
            GridMode::Radial => native.iter().map(|&r| Complex64::new(r, 0.0)).collect(),
            GridMode::Cartesian => native.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect(),
            GridMode::LogRadial => native.iter().map(|&t| Complex64::new(t.exp(), 0.0)).collect(),
        };
        points.push(Point::new(coords));
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(Grid { domain: domain.clone(), spec: *spec, axes, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_distance() {
        let disk = Domain::unit_disk();
        assert_eq!(disk.dist_to_boundary(&Point::real(&[0.0])).unwrap(), 1.0);
        assert_eq!(disk.dist_to_boundary(&Point::real(&[0.5])).unwrap(), 0.5);
        let bidisk = Domain::unit_polydisk();
        assert_eq!(bidisk.dist_to_boundary(&Point::real(&[0.5, 0.0])).unwrap(), 0.5);
        assert!(matches!(
            disk.dist_to_boundary(&Point::real(&[1.0])),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::new(DomainKind::Disk, vec![1.0, 1.0]).is_err());
        assert!(Domain::new(DomainKind::Polydisk, vec![1.0]).is_err());
        assert!(Domain::new(DomainKind::Disk, vec![0.0]).is_err());
        assert!(Domain::new(DomainKind::Polydisk, vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(1, 1.0).unwrap() - PI).abs() < 1e-15);
        assert!((ball_volume(2, 1.0).unwrap() - PI * PI / 2.0).abs() < 1e-14);
        assert!((ball_volume(1, 0.5).unwrap() - PI / 4.0).abs() < 1e-15);
        assert!(ball_volume(1, 0.0).is_err());
        assert!(ball_volume(3, 1.0).is_err());
    }

    #[test]
    fn radial_grid_example() {
        let g = make_grid(&Domain::unit_disk(), &GridSpec::radial(3, 0.25)).unwrap();
        let radii: Vec<f64> = g.points.iter().map(|p| p.coords[0].re).collect();
        assert_eq!(radii, vec![0.0, 0.25, 0.5]);
        assert!(g.points.iter().all(|p| p.coords[0].im == 0.0));
    }

    #[test]
    fn cartesian_grid_has_four_interior_points() {
        let d = Domain::unit_disk();
        let g = make_grid(&d, &GridSpec::cartesian(2, 0.05)).unwrap();
        assert_eq!(g.len(), 4);
        for p in &g.points {
            assert!(d.dist_to_boundary(p).unwrap() >= 0.05 - 1e-15);
        }
    }

    #[test]
    fn log_radial_bidisk_is_monotone() {
        let g = make_grid(&Domain::unit_polydisk(), &GridSpec::log_radial(6, 0.05, -3.0)).unwrap();
        assert_eq!(g.shape(), vec![6, 6]);
        for axis in &g.axes {
            assert_eq!(axis[0], -3.0);
            assert!(axis.windows(2).all(|w| w[0] < w[1]));
            assert!((axis[5] - 0.95f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn margin_too_large() {
        let d = Domain::new(DomainKind::Disk, vec![0.5]).unwrap();
        assert!(matches!(make_grid(&d, &GridSpec::radial(4, 0.6)), Err(Error::EmptyGrid(_))));
    }

    #[test]
    fn ravel_roundtrip() {
        let g = make_grid(&Domain::unit_polydisk(), &GridSpec::cartesian(3, 0.1)).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.ravel(&g.unravel(k)), k);
        }
    }
}

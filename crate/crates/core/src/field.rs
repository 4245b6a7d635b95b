//! Real fields (with −∞ allowed) sampled on a structured grid.

use std::io::Write;
use std::sync::Arc;

use crate::domains::{Grid, Point};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SampledField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Argument(format!(
                "field has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Argument("field values must be real or -inf".into()));
        }
        Ok(Self { grid, values })
    }

    /// Sample `f` at every grid point.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let values = grid.points.iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multilinear interpolation in the grid's native coordinates, clamped
    /// to the grid box.
    pub fn interpolate(&self, z: &Point) -> f64 {
        let x = self.grid.native_coords(z);
        let axes = &self.grid.axes;
        let mut cells = Vec::with_capacity(axes.len());
        for (d, axis) in axes.iter().enumerate() {
            cells.push(locate(axis, x[d]));
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; axes.len()];
        for corner in 0..(1usize << axes.len()) {
            let mut w = 1.0;
            for (d, &(i, frac)) in cells.iter().enumerate() {
                if corner >> d & 1 == 1 {
                    idx[d] = (i + 1).min(axes[d].len() - 1);
                    w *= frac;
                } else {
                    idx[d] = i;
                    w *= 1.0 - frac;
                }
            }
            if w == 0.0 {
                continue;
            }
            let v = self.values[self.grid.ravel(&idx)];
            if v == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            acc += w * v;
        }
        acc
    }

    /// CSV with columns `re(z_1), im(z_1), ..., value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.grid.domain.dim();
        let mut header: Vec<String> = Vec::new();
        for j in 1..=n {
            header.push(format!("re_z{j}"));
            header.push(format!("im_z{j}"));
        }
        header.push("value".into());
        writeln!(out, "{}", header.join(","))?;
        for (p, v) in self.grid.points.iter().zip(&self.values) {
            let mut cols: Vec<String> = p.coords.iter().flat_map(|c| [fmt_f64(c.re), fmt_f64(c.im)]).collect();
            cols.push(fmt_f64(*v));
            writeln!(out, "{}", cols.join(","))?;
        }
        Ok(())
    }
}

/// Cell index and fractional position of `x` on a sorted axis, clamped.
fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    if n == 1 || x.is_nan() || x <= axis[0] {
        return (0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 2, 1.0);
    }
    let i = axis.partition_point(|&a| a <= x) - 1;
    let frac = (x - axis[i]) / (axis[i + 1] - axis[i]);
    (i, frac)
}

/// Fixed float formatting for reports: 17 significant digits, `-inf`/`inf`/`nan` tokens.
pub fn fmt_f64(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{make_grid, Domain, GridSpec};

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let g = Arc::new(make_grid(&Domain::unit_disk(), &GridSpec::cartesian(5, 0.1)).unwrap());
        let f = SampledField::from_fn(g, |p| 2.0 * p.coords[0].re - p.coords[0].im + 0.5).unwrap();
        let z = Point::new(vec![num_complex::Complex64::new(0.1234, -0.321)]);
        assert!((f.interpolate(&z) - (2.0 * 0.1234 + 0.321 + 0.5)).abs() < 1e-14);
    }

    #[test]
    fn rejects_positive_infinity() {
        let g = Arc::new(make_grid(&Domain::unit_disk(), &GridSpec::radial(2, 0.1)).unwrap());
        assert!(SampledField::new(g.clone(), vec![0.0, f64::INFINITY]).is_err());
        assert!(SampledField::new(g, vec![0.0]).is_err());
    }

    #[test]
    fn csv_uses_inf_token() {
        let g = Arc::new(make_grid(&Domain::unit_disk(), &GridSpec::radial(2, 0.1)).unwrap());
        let f = SampledField::new(g, vec![f64::NEG_INFINITY, 1.0]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("re_z1,im_z1,value\n"));
        assert!(s.lines().nth(1).unwrap().ends_with(",-inf"));
    }
}

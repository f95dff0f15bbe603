//! Rectangular n-dimensional grids and fields sampled on them.
//!
//! Storage is row-major with the last axis fastest. Non-periodic axes include both end
//! points; periodic axes place `points` nodes on `[lower, upper)` and wrap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One axis of a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    #[serde(default)]
    pub periodic: bool,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, points: usize) -> Self {
        Self {
            lower,
            upper,
            points,
            periodic: false,
        }
    }

    pub fn periodic(lower: f64, upper: f64, points: usize) -> Self {
        Self {
            lower,
            upper,
            points,
            periodic: true,
        }
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.upper - self.lower) / self.points as f64
        } else {
            (self.upper - self.lower) / (self.points - 1) as f64
        }
    }

    pub fn coordinate(&self, index: usize) -> f64 {
        self.lower + index as f64 * self.spacing()
    }

    fn validate(&self, axis: usize) -> Result<()> {
        if self.points < 3 {
            return Err(Error::InvalidGrid(format!(
                "axis {axis} has {} points, at least 3 are required",
                self.points
            )));
        }
        if !(self.lower.is_finite() && self.upper.is_finite()) || self.upper <= self.lower {
            return Err(Error::InvalidGrid(format!(
                "axis {axis} has bounds [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// Location of a query point along one axis: the bracketing nodes and the fraction
/// of the way from `lo` to `hi`.
#[derive(Clone, Copy, Debug)]
struct AxisLocation {
    lo: usize,
    hi: usize,
    frac: f64,
    clamped: bool,
}

/// A value together with a flag telling whether the query had to be clamped onto the
/// grid boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe<T> {
    pub value: T,
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Axis>", into = "Vec<Axis>")]
pub struct Grid {
    axes: Vec<Axis>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl TryFrom<Vec<Axis>> for Grid {
    type Error = Error;

    fn try_from(axes: Vec<Axis>) -> Result<Self> {
        Grid::new(axes)
    }
}

impl From<Grid> for Vec<Axis> {
    fn from(grid: Grid) -> Self {
        grid.axes
    }
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidGrid("a grid needs at least one axis".into()));
        }
        for (i, axis) in axes.iter().enumerate() {
            axis.validate(i)?;
        }
        let len = axes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.points))
            .filter(|&n| n.checked_mul(std::mem::size_of::<f64>()).is_some_and(|b| b <= isize::MAX as usize))
            .ok_or_else(|| Error::InvalidGrid("total cell count overflows the address space".into()))?;
        let mut strides = vec![1; axes.len()];
        for i in (0..axes.len() - 1).rev() {
            strides[i] = strides[i + 1] * axes[i + 1].points;
        }
        let spacing = axes.iter().map(Axis::spacing).collect();
        Ok(Self {
            axes,
            spacing,
            strides,
            len,
        })
    }

    /// Grid with the same `points` on every axis of the box `[lower, upper]^dim`.
    pub fn uniform(dim: usize, lower: f64, upper: f64, points: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lower, upper, points); dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        let a = &self.axes[axis];
        (0..a.points).map(|i| a.coordinate(i)).collect()
    }

    pub fn flat_index(&self, multi_index: &[usize]) -> Result<usize> {
        if multi_index.len() != self.dim()
            || multi_index.iter().zip(&self.axes).any(|(&i, a)| i >= a.points)
        {
            return Err(Error::Index {
                index: multi_index.to_vec(),
                shape: self.shape(),
            });
        }
        Ok(multi_index.iter().zip(&self.strides).map(|(i, s)| i * s).sum())
    }

    pub fn multi_index(&self, flat: usize) -> Result<Vec<usize>> {
        if flat >= self.len {
            return Err(Error::Index {
                index: vec![flat],
                shape: self.shape(),
            });
        }
        Ok(self
            .strides
            .iter()
            .zip(&self.axes)
            .map(|(s, a)| (flat / s) % a.points)
            .collect())
    }

    pub fn state_of_index(&self, multi_index: &[usize]) -> Result<Vec<f64>> {
        self.flat_index(multi_index)?;
        Ok(multi_index
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.coordinate(i))
            .collect())
    }

    /// Calls `f(flat, multi_index, state)` for every node in storage order.
    pub fn for_each_node(&self, mut f: impl FnMut(usize, &[usize], &[f64])) {
        let dim = self.dim();
        let mut index = vec![0usize; dim];
        let mut state: Vec<f64> = self.axes.iter().map(|a| a.lower).collect();
        for flat in 0..self.len {
            f(flat, &index, &state);
            for ax in (0..dim).rev() {
                index[ax] += 1;
                if index[ax] < self.axes[ax].points {
                    state[ax] = self.axes[ax].coordinate(index[ax]);
                    break;
                }
                index[ax] = 0;
                state[ax] = self.axes[ax].lower;
            }
        }
    }

    /// Wraps periodic coordinates into `[lower, upper)` and clamps the rest into
    /// `[lower, upper]`.
    pub fn wrap_and_clamp(&self, x: &[f64]) -> Probe<Vec<f64>> {
        let mut clamped = false;
        let value = x
            .iter()
            .zip(&self.axes)
            .map(|(&xi, a)| {
                if a.periodic {
                    a.lower + (xi - a.lower).rem_euclid(a.upper - a.lower)
                } else if xi < a.lower || xi > a.upper || xi.is_nan() {
                    clamped = true;
                    xi.clamp(a.lower, a.upper)
                } else {
                    xi
                }
            })
            .collect();
        Probe { value, clamped }
    }

    fn locate(&self, axis: usize, x: f64) -> AxisLocation {
        let a = &self.axes[axis];
        let h = self.spacing[axis];
        if a.periodic {
            let period = a.upper - a.lower;
            let t = snap((x - a.lower).rem_euclid(period) / h);
            let mut lo = t.floor() as usize;
            let mut frac = t - lo as f64;
            if lo >= a.points {
                lo = 0;
                frac = 0.0;
            }
            AxisLocation {
                lo,
                hi: (lo + 1) % a.points,
                frac,
                clamped: false,
            }
        } else {
            let clamped = !(x >= a.lower && x <= a.upper);
            let xc = if x.is_nan() { a.lower } else { x.clamp(a.lower, a.upper) };
            let t = snap((xc - a.lower) / h);
            let lo = (t.floor() as usize).min(a.points - 2);
            AxisLocation {
                lo,
                hi: lo + 1,
                frac: (t - lo as f64).clamp(0.0, 1.0),
                clamped,
            }
        }
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "query has {} coordinates, grid has {} axes",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Backward and forward differences of `values` at node `flat` along `axis`, where
    /// `index` is the node's position on that axis.
    #[inline]
    pub(crate) fn axis_differences(
        &self,
        values: &[f64],
        flat: usize,
        index: usize,
        axis: usize,
    ) -> (f64, f64) {
        let a = &self.axes[axis];
        let n = a.points;
        let s = self.strides[axis];
        let h = self.spacing[axis];
        let v = values[flat];
        if a.periodic {
            let prev = if index == 0 { flat + (n - 1) * s } else { flat - s };
            let next = if index + 1 == n { flat - (n - 1) * s } else { flat + s };
            ((v - values[prev]) / h, (values[next] - v) / h)
        } else if index == 0 {
            // ghost node 2 V[0] - V[1]
            let d = (values[flat + s] - v) / h;
            (d, d)
        } else if index + 1 == n {
            let d = (v - values[flat - s]) / h;
            (d, d)
        } else {
            ((v - values[flat - s]) / h, (values[flat + s] - v) / h)
        }
    }
}

/// Rounds a fractional node position that is within rounding error of a node, so queries
/// at node coordinates reproduce node values exactly.
fn snap(t: f64) -> f64 {
    let r = t.round();
    if (t - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        t
    }
}

/// A real-valued function sampled at every node of a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr")]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct FieldRepr {
    grid: Grid,
    values: Vec<f64>,
}

impl TryFrom<FieldRepr> for ScalarField {
    type Error = Error;

    fn try_from(r: FieldRepr) -> Result<Self> {
        Self::new(r.grid, r.values)
    }
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        grid.for_each_node(|flat, _, x| values[flat] = f(x));
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, multi_index: &[usize]) -> Result<f64> {
        Ok(self.values[self.grid.flat_index(multi_index)?])
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn locate_all(&self, x: &[f64]) -> Result<(Vec<AxisLocation>, bool)> {
        self.grid.check_query(x)?;
        let locs: Vec<_> = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| self.grid.locate(i, xi))
            .collect();
        let clamped = locs.iter().any(|l| l.clamped);
        Ok((locs, clamped))
    }

    /// Multilinear interpolation over the `2^dim` corners surrounding `x`.
    pub fn interpolate(&self, x: &[f64]) -> Result<Probe<f64>> {
        let (locs, clamped) = self.locate_all(x)?;
        let strides = self.grid.strides();
        let mut value = 0.0;
        for corner in 0..1usize << locs.len() {
            let mut weight = 1.0;
            let mut flat = 0;
            for (ax, loc) in locs.iter().enumerate() {
                if corner >> ax & 1 == 1 {
                    weight *= loc.frac;
                    flat += loc.hi * strides[ax];
                } else {
                    weight *= 1.0 - loc.frac;
                    flat += loc.lo * strides[ax];
                }
            }
            if weight != 0.0 {
                value += weight * self.values[flat];
            }
        }
        Ok(Probe { value, clamped })
    }

    /// Backward (`D⁻`) and forward (`D⁺`) differences at a node along every axis.
    pub fn one_sided_derivatives(&self, multi_index: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let flat = self.grid.flat_index(multi_index)?;
        let (minus, plus) = (0..self.grid.dim())
            .map(|ax| {
                self.grid
                    .axis_differences(&self.values, flat, multi_index[ax], ax)
            })
            .unzip();
        Ok((minus, plus))
    }

    /// Central-difference gradient at the surrounding nodes, multilinearly interpolated
    /// to `x`.
    pub fn gradient_at(&self, x: &[f64]) -> Result<Probe<Vec<f64>>> {
        let (locs, clamped) = self.locate_all(x)?;
        let dim = locs.len();
        let strides = self.grid.strides();
        let mut grad = vec![0.0; dim];
        for corner in 0..1usize << dim {
            let mut weight = 1.0;
            let mut flat = 0;
            for (ax, loc) in locs.iter().enumerate() {
                if corner >> ax & 1 == 1 {
                    weight *= loc.frac;
                    flat += loc.hi * strides[ax];
                } else {
                    weight *= 1.0 - loc.frac;
                    flat += loc.lo * strides[ax];
                }
            }
            if weight == 0.0 {
                continue;
            }
            for (ax, g) in grad.iter_mut().enumerate() {
                let index = if corner >> ax & 1 == 1 { locs[ax].hi } else { locs[ax].lo };
                let (dm, dp) = self.grid.axis_differences(&self.values, flat, index, ax);
                *g += weight * 0.5 * (dm + dp);
            }
        }
        Ok(Probe {
            value: grad,
            clamped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(points: usize) -> Grid {
        Grid::new(vec![Axis::new(0.0, 1.0, points)]).unwrap()
    }

    #[test]
    fn state_of_index_examples() {
        let g = line(11);
        assert_eq!(g.state_of_index(&[0]).unwrap(), vec![0.0]);
        assert_eq!(g.state_of_index(&[10]).unwrap(), vec![1.0]);
        let g2 = Grid::uniform(2, 0.0, 1.0, 11).unwrap();
        assert_eq!(g2.state_of_index(&[5, 5]).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(g.state_of_index(&[11]), Err(Error::Index { .. })));
        assert!(g2.state_of_index(&[1]).is_err());
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(Grid::new(vec![Axis::new(0.0, 1.0, 2)]).is_err());
        assert!(Grid::new(vec![Axis::new(1.0, 1.0, 5)]).is_err());
        assert!(Grid::new(vec![]).is_err());
        assert!(Grid::new(vec![Axis::new(0.0, 1.0, usize::MAX / 2); 3]).is_err());
    }

    #[test]
    fn row_major_last_axis_fastest() {
        let g = Grid::new(vec![Axis::new(0.0, 1.0, 3), Axis::new(0.0, 1.0, 4)]).unwrap();
        assert_eq!(g.strides(), &[4, 1]);
        assert_eq!(g.flat_index(&[2, 1]).unwrap(), 9);
        assert_eq!(g.multi_index(9).unwrap(), vec![2, 1]);
        let mut seen = Vec::new();
        g.for_each_node(|flat, idx, x| {
            assert_eq!(g.flat_index(idx).unwrap(), flat);
            assert_eq!(g.state_of_index(idx).unwrap(), x.to_vec());
            seen.push(flat);
        });
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn interpolation_examples() {
        let g = line(11);
        let c = ScalarField::constant(g.clone(), 3.25);
        assert_eq!(c.interpolate(&[0.123]).unwrap().value, 3.25);
        let f = ScalarField::from_fn(g, |x| 2.0 * x[0]);
        assert!((f.interpolate(&[0.37]).unwrap().value - 0.74).abs() < 1e-12);

        let p = Grid::new(vec![Axis::periodic(0.0, 2.0 * PI, 36)]).unwrap();
        let s = ScalarField::from_fn(p, |x| x[0].sin() + 2.0);
        let a = s.interpolate(&[0.0]).unwrap().value;
        let b = s.interpolate(&[2.0 * PI]).unwrap().value;
        assert!((a - b).abs() < 1e-12);
        // between the last node and the wrapped first node
        let mid = s.interpolate(&[2.0 * PI - 0.5 * 2.0 * PI / 36.0]).unwrap().value;
        let last = s.values()[35];
        assert!((mid - 0.5 * (last + s.values()[0])).abs() < 1e-12);
    }

    #[test]
    fn interpolation_clamps_out_of_bounds() {
        let f = ScalarField::from_fn(line(11), |x| x[0]);
        let p = f.interpolate(&[1.5]).unwrap();
        assert!(p.clamped);
        assert_eq!(p.value, 1.0);
        let q = f.interpolate(&[1.0]).unwrap();
        assert!(!q.clamped);
        assert!(f.interpolate(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn one_sided_derivative_examples() {
        let g = Grid::new(vec![Axis::new(-1.0, 1.0, 21)]).unwrap();
        let lin = ScalarField::from_fn(g.clone(), |x| 3.0 * x[0]);
        for i in 0..21 {
            let (m, p) = lin.one_sided_derivatives(&[i]).unwrap();
            assert!((m[0] - 3.0).abs() < 1e-9 && (p[0] - 3.0).abs() < 1e-9, "node {i}");
        }
        let c = ScalarField::constant(g.clone(), -2.0);
        for i in [0, 7, 20] {
            assert_eq!(c.one_sided_derivatives(&[i]).unwrap(), (vec![0.0], vec![0.0]));
        }
        let abs = ScalarField::from_fn(g, |x| x[0].abs());
        let (m, p) = abs.one_sided_derivatives(&[10]).unwrap();
        assert!((m[0] + 1.0).abs() < 1e-12 && (p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_derivatives_wrap() {
        let g = Grid::new(vec![Axis::periodic(0.0, 2.0 * PI, 64)]).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0].sin());
        let (m, p) = f.one_sided_derivatives(&[0]).unwrap();
        assert!((0.5 * (m[0] + p[0]) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn gradient_examples() {
        let g = Grid::uniform(2, -1.0, 1.0, 41).unwrap();
        let fx = ScalarField::from_fn(g.clone(), |x| x[0]);
        let gr = fx.gradient_at(&[0.13, -0.71]).unwrap().value;
        assert!((gr[0] - 1.0).abs() < 1e-12 && gr[1].abs() < 1e-12);
        let c = ScalarField::constant(g.clone(), 1.0);
        assert_eq!(c.gradient_at(&[0.3, 0.3]).unwrap().value, vec![0.0, 0.0]);
        // oracle: closed-form gradient (2x, 2y)
        let q = ScalarField::from_fn(g.clone(), |x| x[0] * x[0] + x[1] * x[1]);
        let gr = q.gradient_at(&[0.5, -0.25]).unwrap().value;
        let h = g.spacing()[0];
        assert!((gr[0] - 1.0).abs() <= 2.0 * h * h, "{gr:?}");
        assert!((gr[1] + 0.5).abs() <= 2.0 * h * h, "{gr:?}");
    }

    #[test]
    fn gradient_converges_at_second_order() {
        let f = |x: &[f64]| (1.3 * x[0]).sin() * (0.7 * x[1]).cos() + 0.2 * x[0] * x[1];
        let df = |x: &[f64]| {
            [
                1.3 * (1.3 * x[0]).cos() * (0.7 * x[1]).cos() + 0.2 * x[1],
                -0.7 * (1.3 * x[0]).sin() * (0.7 * x[1]).sin() + 0.2 * x[0],
            ]
        };
        let max_err = |points: usize| {
            let field = ScalarField::from_fn(Grid::uniform(2, -1.0, 1.0, points).unwrap(), f);
            let mut err: f64 = 0.0;
            for i in 0..15 {
                for j in 0..15 {
                    let x = [-0.7 + 0.1 * i as f64 + 0.013, -0.7 + 0.1 * j as f64 + 0.029];
                    let g = field.gradient_at(&x).unwrap().value;
                    let e = df(&x);
                    err = err.max((g[0] - e[0]).abs()).max((g[1] - e[1]).abs());
                }
            }
            err
        };
        let coarse = max_err(21);
        let fine = max_err(41);
        assert!(coarse / fine >= 3.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn grid_serde_validates() {
        let g = Grid::uniform(2, -1.0, 1.0, 5).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: Grid = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Grid>(r#"[{"lower":0,"upper":1,"points":2}]"#).is_err());
    }
}

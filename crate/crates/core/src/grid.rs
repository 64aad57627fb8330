//! Uniform time and 1-D space grids with Dirichlet fields.
//!
//! A [`Field`] stores values at interior nodes only; both boundary nodes are
//! implicitly zero, so no operation can produce a field that violates the
//! boundary condition.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::expr::{Expression, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidInput(format!(
                "time grid needs T > s, got s={t0}, T={t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidInput("time grid needs n_steps >= 1".into()));
        }
        Ok(Self {
            t0,
            t_end,
            n_steps,
        })
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt()
    }

    /// Index of the node nearest to `s`, or an error if `s` is outside `[t0, T]`.
    pub fn nearest_index(&self, s: f64) -> Result<usize> {
        let tol = 1e-12 * (self.t_end - self.t0).max(1.0);
        if s < self.t0 - tol || s > self.t_end + tol {
            return Err(Error::OutOfRange(format!(
                "time {s} outside [{}, {}]",
                self.t0, self.t_end
            )));
        }
        let k = ((s - self.t0) / self.dt()).round() as usize;
        Ok(k.min(self.n_steps))
    }

    /// Grid time index of `s`; `s` must coincide with a node.
    pub fn exact_index(&self, s: f64) -> Result<usize> {
        let k = self.nearest_index(s)?;
        if (self.time(k) - s).abs() > 1e-9 * self.dt() {
            return Err(Error::InvalidInput(format!("time {s} is not a grid node")));
        }
        Ok(k)
    }

    /// Grid with `factor`-times larger steps over the same interval.
    pub fn coarsen(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(Error::InvalidInput(format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps
            )));
        }
        TimeGrid::new(self.t0, self.t_end, self.n_steps / factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    pub a: f64,
    pub b: f64,
    pub n_cells: usize,
}

impl SpaceGrid {
    pub fn new(a: f64, b: f64, n_cells: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput(format!(
                "space grid needs b > a, got ({a}, {b})"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidInput(
                "space grid needs at least 2 cells".into(),
            ));
        }
        Ok(Self { a, b, n_cells })
    }

    pub fn dx(&self) -> f64 {
        (self.b - self.a) / self.n_cells as f64
    }

    /// Coordinate of node `j`, `0 <= j <= n_cells`.
    pub fn node(&self, j: usize) -> f64 {
        self.a + j as f64 * self.dx()
    }

    pub fn n_interior(&self) -> usize {
        self.n_cells - 1
    }

    /// Interior node coordinates, `j = 1..n_cells-1`.
    pub fn interior(&self) -> impl Iterator<Item = f64> + '_ {
        (1..self.n_cells).map(move |j| self.node(j))
    }

    /// Open-interval membership.
    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }

    /// Halve `dx`.
    pub fn refined(&self) -> SpaceGrid {
        SpaceGrid {
            n_cells: self.n_cells * 2,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    H1Semi,
    Sup,
}

/// Grid function with implicit zero boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: SpaceGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: SpaceGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_interior()],
        }
    }

    pub fn from_values(grid: SpaceGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_interior() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} interior nodes",
                values.len(),
                grid.n_interior()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field entry {} is {}", j + 1, values[j])));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: SpaceGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values(grid, grid.interior().map(f).collect())
    }

    /// Sample an expression at interior nodes at time `t` and driver values `w`.
    pub fn sample(grid: SpaceGrid, e: &Expression, t: f64, w: &[f64]) -> Result<Self> {
        let values = grid
            .interior()
            .map(|x| e.eval(Point::new(x, t, w)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at node `j` including boundary nodes.
    pub fn at_node(&self, j: usize) -> f64 {
        if j == 0 || j >= self.grid.n_cells {
            0.0
        } else {
            self.values[j - 1]
        }
    }

    fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// Discrete `L2(D)` inner product `dx * sum f_j g_j`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(self.grid.dx() * s)
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        let dx = self.grid.dx();
        match kind {
            NormKind::L1 => dx * self.values.iter().map(|v| v.abs()).sum::<f64>(),
            NormKind::L2 => (dx * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt(),
            NormKind::H1Semi => {
                let s: f64 = (0..self.grid.n_cells)
                    .map(|j| {
                        let d = (self.at_node(j + 1) - self.at_node(j)) / dx;
                        d * d
                    })
                    .sum();
                (dx * s).sqrt()
            }
            NormKind::Sup => self.values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Piecewise-linear interpolation on the closed interval.
    pub fn interpolate(&self, x: f64) -> Result<f64> {
        let g = &self.grid;
        if !(x >= g.a && x <= g.b) {
            return Err(Error::OutOfRange(format!(
                "x={x} outside [{}, {}]",
                g.a, g.b
            )));
        }
        let s = (x - g.a) / g.dx();
        let j = (s.floor() as usize).min(g.n_cells - 1);
        let w = s - j as f64;
        if w == 0.0 {
            return Ok(self.at_node(j));
        }
        Ok((1.0 - w) * self.at_node(j) + w * self.at_node(j + 1))
    }

    pub fn scale(&self, alpha: f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        })
    }

    /// CSV rows `x,value` over all nodes including the boundary.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,value")?;
        for j in 0..=self.grid.n_cells {
            writeln!(out, "{:?},{:?}", self.grid.node(j), self.at_node(j))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(n: usize) -> SpaceGrid {
        SpaceGrid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn time_nodes() {
        let g = TimeGrid::new(0.0, 0.25, 400).unwrap();
        assert_eq!(g.time(3), 3.0 * g.dt());
        assert_eq!(g.exact_index(0.0).unwrap(), 0);
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(g.nearest_index(0.3).is_err());
        assert_eq!(g.coarsen(4).unwrap().n_steps, 100);
        assert!(g.coarsen(3).is_err());
    }

    #[test]
    fn inner_product_of_ones() {
        let g = unit(10);
        let ones = Field::from_fn(g, |_| 1.0).unwrap();
        assert!((ones.inner(&ones).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn disjoint_supports_are_orthogonal() {
        let g = unit(10);
        let f = Field::from_fn(g, |x| if x < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let h = Field::from_fn(g, |x| if x < 0.5 { 0.0 } else { 2.0 }).unwrap();
        assert_eq!(f.inner(&h).unwrap(), 0.0);
    }

    #[test]
    fn sine_modes_are_discretely_orthogonal() {
        let g = unit(1000);
        let f = Field::from_fn(g, |x| (PI * x).sin()).unwrap();
        let h = Field::from_fn(g, |x| (2.0 * PI * x).sin()).unwrap();
        assert!(f.inner(&h).unwrap().abs() <= 1e-3);
    }

    #[test]
    fn grid_mismatch() {
        let f = Field::zeros(unit(10));
        let h = Field::zeros(unit(20));
        assert!(matches!(f.inner(&h), Err(Error::GridMismatch(_))));
        assert!(Field::from_values(unit(10), vec![0.0; 3]).is_err());
        assert!(Field::from_values(unit(3), vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn norms() {
        let g = unit(10);
        let z = Field::zeros(g);
        for k in [NormKind::L1, NormKind::L2, NormKind::H1Semi, NormKind::Sup] {
            assert_eq!(z.norm(k), 0.0);
        }
        let c = Field::from_fn(g, |_| -3.0).unwrap();
        assert_eq!(c.norm(NormKind::Sup), 3.0);
        let s = Field::from_fn(unit(200), |x| (PI * x).sin()).unwrap();
        assert!((s.norm(NormKind::L2) - 0.5f64.sqrt()).abs() < 1e-3);
        // |sin(pi x)|_{H1 semi}^2 = pi^2/2
        assert!((s.norm(NormKind::H1Semi) - PI / 2f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn l2_refinement_is_second_order() {
        // x(1-x) vanishes at both ends, so the squared integrand has zero
        // end slopes and the rate can exceed two.
        let exact = (1.0f64 / 30.0).sqrt();
        let err = |n| {
            let f = Field::from_fn(unit(n), |x| x * (1.0 - x)).unwrap();
            (f.norm(NormKind::L2) - exact).abs()
        };
        let (e1, e2) = (err(20), err(40));
        let ratio = e1 / e2;
        assert!(ratio >= 3.5, "ratio {ratio}");
    }

    #[test]
    fn interpolation() {
        let g = unit(10);
        let f = Field::from_fn(g, |x| x * x + 1.0).unwrap();
        assert_eq!(f.interpolate(g.node(3)).unwrap(), f.values()[2]);
        assert_eq!(f.interpolate(0.0).unwrap(), 0.0);
        assert_eq!(f.interpolate(1.0).unwrap(), 0.0);
        let mid = 0.5 * (g.node(4) + g.node(5));
        let expect = 0.5 * (f.at_node(4) + f.at_node(5));
        assert!((f.interpolate(mid).unwrap() - expect).abs() < 1e-15);
        assert!(f.interpolate(1.5).is_err());
        assert!(f.interpolate(f64::NAN).is_err());
    }

    #[test]
    fn sampling_expressions() {
        let g = unit(4);
        let f = Field::sample(g, &parse_expr("x+t").unwrap(), 1.0, &[]).unwrap();
        assert_eq!(f.values(), &[1.25, 1.5, 1.75]);
        assert!(Field::sample(g, &parse_expr("1/(x-0.5)").unwrap(), 0.0, &[]).is_err());
    }

    #[test]
    fn csv_includes_boundary() {
        let f = Field::from_fn(unit(2), |_| 1.0).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,value\n0.0,0.0\n0.5,1.0\n1.0,0.0\n");
    }

    fn field_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn cauchy_schwarz((u, v) in field_pair()) {
            let g = unit(u.len() + 1);
            let f = Field::from_values(g, u).unwrap();
            let h = Field::from_values(g, v).unwrap();
            let lhs = f.inner(&h).unwrap().abs();
            let rhs = f.norm(NormKind::L2) * h.norm(NormKind::L2);
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn norms_are_homogeneous((u, _v) in field_pair(), alpha in -5.0f64..5.0) {
            let g = unit(u.len() + 1);
            let f = Field::from_values(g, u).unwrap();
            let s = f.scale(alpha);
            for k in [NormKind::L1, NormKind::L2, NormKind::H1Semi, NormKind::Sup] {
                let lhs = s.norm(k);
                let rhs = alpha.abs() * f.norm(k);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
            }
        }
    }
}

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tensor grid of `points_per_axis^dim` cells on a box. Nodes sit at cell
/// midpoints; an offset grid shifts them by half a cell toward `hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    points_per_axis: usize,
    offset: bool,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    points_per_axis: usize,
    #[serde(default)]
    offset: bool,
}

impl TryFrom<RawGrid> for Grid {
    type Error = Error;
    fn try_from(r: RawGrid) -> Result<Self> {
        Grid::new(r.lo, r.hi, r.points_per_axis, r.offset)
    }
}

impl From<Grid> for RawGrid {
    fn from(g: Grid) -> Self {
        RawGrid {
            lo: g.lo,
            hi: g.hi,
            points_per_axis: g.points_per_axis,
            offset: g.offset,
        }
    }
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points_per_axis: usize, offset: bool) -> Result<Self> {
        if lo.is_empty() {
            return Err(invalid("grid", "dimension must be at least 1"));
        }
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                what: "grid box",
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if points_per_axis == 0 {
            return Err(invalid("points_per_axis", "must be at least 1"));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && b > a))
        {
            return Err(invalid("grid box", "need finite lo < hi on every axis"));
        }
        let total = (points_per_axis as f64).powi(lo.len() as i32);
        if total > 1e9 {
            return Err(invalid(
                "points_per_axis",
                format!("{total:.3e} nodes is too many"),
            ));
        }
        Ok(Self {
            lo,
            hi,
            points_per_axis,
            offset,
        })
    }

    /// Box `[lo, hi]^dim`.
    pub fn cube(
        dim: usize,
        lo: f64,
        hi: f64,
        points_per_axis: usize,
        offset: bool,
    ) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], points_per_axis, offset)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn offset(&self) -> bool {
        self.offset
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.points_per_axis as f64
    }

    pub fn max_cell_width(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn min_cell_width(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Quadrature weight of every node.
    pub fn weight(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Position of node `i` along `axis`, in cells from `lo`.
    pub(crate) fn shift(&self) -> f64 {
        if self.offset {
            1.0
        } else {
            0.5
        }
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + (i as f64 + self.shift()) * self.spacing(axis)
    }

    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        (0..self.points_per_axis)
            .map(|i| self.axis_coord(axis, i))
            .collect()
    }

    /// Row-major multi-index of a flat node index; the last axis varies fastest.
    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        let n = self.points_per_axis;
        for a in (0..self.dim()).rev() {
            out[a] = idx % n;
            idx /= n;
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut mi = vec![0; self.dim()];
        self.multi_index(idx, &mut mi);
        mi.iter()
            .enumerate()
            .map(|(a, &i)| self.axis_coord(a, i))
            .collect()
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    /// Flat index of the node nearest to `x`, if `x` lies inside the box.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut idx = 0;
        for (a, &xa) in x.iter().enumerate() {
            if xa < self.lo[a] || xa > self.hi[a] {
                return None;
            }
            let t = ((xa - self.lo[a]) / self.spacing(a) - self.shift()).round();
            let i = t.clamp(0.0, (self.points_per_axis - 1) as f64) as usize;
            idx = idx * self.points_per_axis + i;
        }
        Some(idx)
    }
}

/// Complex samples on a grid, one per node in flat index order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                what: "grid function",
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let values = grid.nodes().map(|x| f(&x)).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `sum_j w |f_j|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.grid.weight() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `sum_j w u_j conj(v_j)`.
    pub fn inner(&self, other: &GridFunction) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                side: "inner product",
            });
        }
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| u * v.conj())
            .sum();
        Ok(s * self.grid.weight())
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * a).collect(),
        }
    }

    /// Norm restricted to nodes where `mask` holds.
    pub fn norm_where(&self, mask: impl Fn(&[f64]) -> bool) -> f64 {
        let s: f64 = self
            .grid
            .nodes()
            .zip(&self.values)
            .filter(|(x, _)| mask(x))
            .map(|(_, v)| v.norm_sqr())
            .sum();
        (s * self.grid.weight()).sqrt()
    }
}

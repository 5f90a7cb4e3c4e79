//! Single-layer Helmholtz potential of a smooth density on a plane in `R^3`,
//! evaluated by quadrature in the plane's own coordinates.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{householder_to_normal, OrthMatrix};
use crate::kernels::{cutoff_eval, CutoffSpec};
use crate::normlab::{decay_fit, DecayFitResult};
use crate::operators::Grid;

/// `e^{i lambda r} / (4 pi r)`, `r = |x - y|`.
pub fn green(x: &[f64; 3], y: &[f64; 3], lambda: f64) -> Result<Complex64> {
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::Singular {
            what: "green function",
        });
    }
    Ok(Complex64::from_polar(1.0 / (4.0 * PI * r), lambda * r))
}

fn dist(x: &[f64; 3], y: &[f64; 3]) -> f64 {
    ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
}

/// The plane `y . normal = 0` carrying the density `density(s, t) d sigma`,
/// where `(s, t)` are coordinates in the frame taking `e_3` to the normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlane", into = "RawPlane")]
pub struct PlaneSpec {
    normal: [f64; 3],
    density: CutoffSpec,
    frame: OrthMatrix,
}

#[derive(Serialize, Deserialize)]
struct RawPlane {
    normal: [f64; 3],
    density: CutoffSpec,
}

impl TryFrom<RawPlane> for PlaneSpec {
    type Error = Error;
    fn try_from(r: RawPlane) -> Result<Self> {
        PlaneSpec::new(r.normal, r.density)
    }
}

impl From<PlaneSpec> for RawPlane {
    fn from(p: PlaneSpec) -> Self {
        RawPlane {
            normal: p.normal,
            density: p.density,
        }
    }
}

impl PlaneSpec {
    pub fn new(normal: [f64; 3], density: CutoffSpec) -> Result<Self> {
        if let CutoffSpec::TensorBump(b) = &density {
            if b.dim() != 2 {
                return Err(Error::DimensionMismatch {
                    what: "plane density",
                    expected: 2,
                    found: b.dim(),
                });
            }
        }
        let frame = householder_to_normal(normal)?;
        Ok(Self {
            normal,
            density,
            frame,
        })
    }

    pub fn normal(&self) -> [f64; 3] {
        self.normal
    }

    pub fn density(&self) -> &CutoffSpec {
        &self.density
    }

    pub fn frame(&self) -> &OrthMatrix {
        &self.frame
    }

    pub fn signed_distance(&self, x: &[f64; 3]) -> f64 {
        x.iter().zip(&self.normal).map(|(a, b)| a * b).sum()
    }

    /// Point of the plane with in-plane coordinates `(s, t)`.
    pub fn embed(&self, s: f64, t: f64) -> [f64; 3] {
        self.frame.apply([s, t, 0.0])
    }
}

fn check_plane_grid(grid: &Grid, lambda: f64) -> Result<()> {
    if grid.dim() != 2 {
        return Err(Error::DimensionMismatch {
            what: "plane grid",
            expected: 2,
            found: grid.dim(),
        });
    }
    let h = grid.max_cell_width();
    // |x - y| is 1-Lipschitz in y.
    if lambda * h > FRAC_PI_2 * (1.0 + 1e-12) {
        return Err(Error::UnresolvedOscillation {
            product: lambda * h,
            limit: FRAC_PI_2,
            lambda,
            cell_width: h,
            lipschitz: 1.0,
        });
    }
    Ok(())
}

/// Quadrature nodes `(s, t)` with their density values, zeros dropped.
fn plane_samples(plane: &PlaneSpec, grid: &Grid) -> Vec<([f64; 2], f64)> {
    grid.nodes()
        .filter_map(|st| {
            let v = cutoff_eval(&plane.density, &st);
            (v != 0.0).then_some(([st[0], st[1]], v))
        })
        .collect()
}

/// Plane quadrature prepared once for many evaluation points.
#[derive(Debug, Clone)]
pub struct PlaneQuadrature {
    plane: PlaneSpec,
    lambda: f64,
    weight: f64,
    samples: Vec<([f64; 2], f64)>,
}

impl PlaneQuadrature {
    pub fn new(plane: &PlaneSpec, lambda: f64, grid: &Grid) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", "must be finite and >= 0"));
        }
        check_plane_grid(grid, lambda)?;
        Ok(Self {
            plane: plane.clone(),
            lambda,
            weight: grid.weight(),
            samples: plane_samples(plane, grid),
        })
    }

    /// Field at `x` by the reduction `|x - M(s,t,0)| = |M^T x - (s,t,0)|`.
    pub fn field(&self, x: &[f64; 3]) -> Result<Complex64> {
        let w = self.plane.frame.apply_transpose(*x);
        let mut acc = Complex64::new(0.0, 0.0);
        for (st, v) in &self.samples {
            let y = [st[0], st[1], 0.0];
            acc += green(&w, &y, self.lambda)? * *v;
        }
        Ok(acc * self.weight)
    }

    /// Same integral with the quadrature nodes embedded in `R^3`.
    pub fn field_direct(&self, x: &[f64; 3]) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (st, v) in &self.samples {
            let y = self.plane.embed(st[0], st[1]);
            acc += green(x, &y, self.lambda)? * *v;
        }
        Ok(acc * self.weight)
    }
}

pub fn field(x: &[f64; 3], plane: &PlaneSpec, lambda: f64, grid: &Grid) -> Result<Complex64> {
    PlaneQuadrature::new(plane, lambda, grid)?.field(x)
}

pub fn field_direct(
    x: &[f64; 3],
    plane: &PlaneSpec,
    lambda: f64,
    grid: &Grid,
) -> Result<Complex64> {
    PlaneQuadrature::new(plane, lambda, grid)?.field_direct(x)
}

/// Seven-point `Delta_h u + lambda^2 u` at `x`.
pub fn residual_of(
    u: impl Fn(&[f64; 3]) -> Result<Complex64>,
    x: &[f64; 3],
    lambda: f64,
    h: f64,
) -> Result<Complex64> {
    let c = u(x)?;
    let mut lap = Complex64::new(0.0, 0.0);
    for a in 0..3 {
        let mut p = *x;
        p[a] += h;
        let mut m = *x;
        m[a] -= h;
        lap += u(&p)? + u(&m)? - 2.0 * c;
    }
    Ok(lap / (h * h) + c * (lambda * lambda))
}

/// Helmholtz residual of the quadrature field at `x`, away from the plane.
pub fn pde_residual(
    plane: &PlaneSpec,
    x: &[f64; 3],
    lambda: f64,
    h_fd: f64,
    grid: &Grid,
) -> Result<Complex64> {
    if !(h_fd > 0.0) || lambda * h_fd > 0.05 * (1.0 + 1e-12) {
        return Err(invalid(
            "h_fd",
            format!(
                "need h_fd > 0 and lambda * h_fd <= 0.05, got {}",
                lambda * h_fd
            ),
        ));
    }
    let d = plane.signed_distance(x).abs();
    if d < 0.5 * (1.0 - 1e-12) {
        return Err(invalid(
            "x",
            format!("distance {d:.3} to the plane is below 0.5"),
        ));
    }
    let q = PlaneQuadrature::new(plane, lambda, grid)?;
    residual_of(|p| q.field(p), x, lambda, h_fd)
}

/// `|residual| / (lambda^2 |u| + floor)`.
pub fn relative_residual(residual: Complex64, u: Complex64, lambda: f64) -> f64 {
    residual.norm() / (lambda * lambda * u.norm() + 1e-300)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl ObservationBox {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        if (0..3).any(|a| !(hi[a] > lo[a])) {
            return Err(invalid("observation box", "need lo < hi on every axis"));
        }
        Ok(Self { lo, hi })
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.hi[a] - self.lo[a]).product()
    }

    fn corners(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..8).map(move |c| {
            std::array::from_fn(|a| {
                if c >> a & 1 == 1 {
                    self.hi[a]
                } else {
                    self.lo[a]
                }
            })
        })
    }

    /// Distance from the plane; zero when the box meets it.
    pub fn distance_to_plane(&self, plane: &PlaneSpec) -> f64 {
        let d: Vec<f64> = self.corners().map(|c| plane.signed_distance(&c)).collect();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo <= 0.0 && hi >= 0.0 {
            0.0
        } else {
            lo.abs().min(hi.abs())
        }
    }

    pub fn grid(&self, points_per_axis: usize) -> Result<Grid> {
        Grid::new(self.lo.to_vec(), self.hi.to_vec(), points_per_axis, false)
    }
}

/// `|u_lambda|_{L^2(D)}` by midpoint quadrature on a grid in `D`.
pub fn l2_norm_on_box(
    plane: &PlaneSpec,
    d: &ObservationBox,
    lambda: f64,
    plane_grid: &Grid,
    box_points: usize,
) -> Result<f64> {
    let q = PlaneQuadrature::new(plane, lambda, plane_grid)?;
    let g = d.grid(box_points)?;
    let vals: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let x = g.node(i);
            q.field(&[x[0], x[1], x[2]]).map(|u| u.norm_sqr())
        })
        .collect::<Result<_>>()?;
    Ok((g.weight() * vals.iter().sum::<f64>()).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HelmholtzDecay {
    pub norms: Vec<(f64, f64)>,
    pub fit: DecayFitResult,
}

/// Norms over `D` for each `lambda` and their log-log fit. `D` must stay at
/// distance at least `0.5` from the plane.
pub fn l2_decay_experiment(
    plane: &PlaneSpec,
    d: &ObservationBox,
    lambdas: &[f64],
    plane_grid: &Grid,
    box_points: usize,
) -> Result<HelmholtzDecay> {
    let dist = d.distance_to_plane(plane);
    if dist < 0.5 * (1.0 - 1e-12) {
        return Err(invalid(
            "observation box",
            format!("distance {dist:.3} to the plane is below 0.5"),
        ));
    }
    let norms = lambdas
        .iter()
        .map(|&l| Ok((l, l2_norm_on_box(plane, d, l, plane_grid, box_points)?)))
        .collect::<Result<Vec<_>>>()?;
    let fit = decay_fit(&norms)?;
    Ok(HelmholtzDecay { norms, fit })
}

//! Matrix-free quadrature discretizations of the singular oscillatory integral
//! operators, their exact discrete adjoints, the oscillating-surface family and
//! its maximal function.

mod dense;
mod fft;
mod grid;

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dense::{DenseOperator, LinearOperator};
pub use grid::{Grid, GridFunction};

use crate::error::{invalid, Error, Result};
use crate::geometry::{measure_weight, oscillate, surface_height, OscillationParams, SurfaceSpec};
use crate::kernels::{cutoff_eval, phi_annulus, radial_power, CutoffSpec, KernelSpec};
use crate::phase::{distance_power, PhaseSpec};

use dense::check_len;

const MAX_DIM: usize = 8;
const TABLE_CAP: usize = 1 << 25;

/// Where the output lives relative to the integration variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Integration over the graph of `surface` in `R^{n+1}`, output on `R^n` at
    /// height `x_last`; `z = (x - y, x_last - psi(y))`.
    Surface { surface: SurfaceSpec, x_last: f64 },
    /// Integration over `R^{n-1}` with `z = x - (y', 0)`. The output lives on
    /// `R^n`, or on `R^{n-1} x {0}` when `restricted`.
    Flat {
        #[serde(default)]
        restricted: bool,
    },
}

/// Optional factor in the base difference `d`: `Near` keeps
/// `1 - phi(lambda^beta d)`, `Far` keeps `phi(lambda^beta d)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Localization {
    #[default]
    Full,
    Near {
        beta: f64,
    },
    Far {
        beta: f64,
    },
}

/// `phi_0(x, y) = target(x) * source(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductCutoff {
    pub target: CutoffSpec,
    pub source: CutoffSpec,
}

impl ProductCutoff {
    pub fn unit() -> Self {
        Self {
            target: CutoffSpec::Unit,
            source: CutoffSpec::Unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub source: Grid,
    pub target: Grid,
    pub kernel: KernelSpec,
    pub phase: PhaseSpec,
    pub cutoff0: ProductCutoff,
    pub geometry: Geometry,
    #[serde(default)]
    pub localization: Localization,
    pub lambda: f64,
}

/// Precomputed translation-invariant part of the kernel on aligned grids.
#[derive(Debug, Clone)]
struct KernelTable {
    data: Vec<Complex64>,
    strides: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Prepared {
    matched: usize,
    extra_axis: bool,
    tgt_axes: Vec<Vec<f64>>,
    src_axes: Vec<Vec<f64>>,
    tgt_factor: Vec<f64>,
    src_factor: Vec<f64>,
    src_height: Vec<f64>,
    phase_tables: Option<Vec<Vec<Complex64>>>,
    kernel_table: Option<KernelTable>,
    window: Option<f64>,
}

/// How the quadrature sums are evaluated. `Fft` needs a kernel that depends
/// only on coordinate differences (flat geometry or a flat surface, aligned
/// grid spacings); `Auto` picks it when the estimated cost is lower.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyMethod {
    #[default]
    Auto,
    Direct,
    Fft,
}

#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    spec: OperatorSpec,
    prep: Prepared,
    method: ApplyMethod,
    toeplitz: Option<Arc<fft::ToeplitzPlan>>,
}

fn sup_abs(lo: f64, hi: f64) -> f64 {
    lo.abs().max(hi.abs())
}

fn min_gap(a: &[f64], b: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    let mut j = 0;
    for &x in a {
        while j + 1 < b.len() && b[j + 1] <= x {
            j += 1;
        }
        best = best.min((x - b[j]).abs());
        if j + 1 < b.len() {
            best = best.min((b[j + 1] - x).abs());
        }
    }
    best
}

/// Odometer over the row-major box `ranges`, calling `f(multi_index, flat)`
/// where `flat` uses `extent` points per axis.
#[inline]
fn for_each_in_box(ranges: &[(usize, usize)], extent: usize, mut f: impl FnMut(&[usize], usize)) {
    let k = ranges.len();
    if ranges.iter().any(|(a, b)| a >= b) {
        return;
    }
    let mut mi = [0usize; MAX_DIM];
    for a in 0..k {
        mi[a] = ranges[a].0;
    }
    if k == 1 {
        for i in ranges[0].0..ranges[0].1 {
            mi[0] = i;
            f(&mi[..1], i);
        }
        return;
    }
    loop {
        let mut flat = 0;
        for &v in &mi[..k] {
            flat = flat * extent + v;
        }
        f(&mi[..k], flat);
        let mut a = k;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            mi[a] += 1;
            if mi[a] < ranges[a].1 {
                break;
            }
            mi[a] = ranges[a].0;
        }
    }
}

impl DiscretizedOperator {
    pub fn new(spec: OperatorSpec) -> Result<Self> {
        Self::with_method(spec, ApplyMethod::Auto)
    }

    pub fn with_method(spec: OperatorSpec, method: ApplyMethod) -> Result<Self> {
        let prep = validate_and_prepare(&spec)?;
        let use_fft = match method {
            ApplyMethod::Direct => false,
            ApplyMethod::Fft => {
                if prep.kernel_table.is_none() {
                    return Err(invalid(
                        "apply method",
                        "the FFT path needs a difference kernel on aligned grids",
                    ));
                }
                true
            }
            ApplyMethod::Auto => prep.kernel_table.is_some() && fft_is_cheaper(&spec, &prep),
        };
        let toeplitz = use_fft.then(|| Arc::new(toeplitz_plan(&spec, &prep)));
        Ok(Self {
            spec,
            prep,
            method,
            toeplitz,
        })
    }

    /// True when applies go through the FFT path.
    pub fn uses_fft(&self) -> bool {
        self.toeplitz.is_some()
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    pub fn source_grid(&self) -> &Grid {
        &self.spec.source
    }

    pub fn target_grid(&self) -> &Grid {
        &self.spec.target
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.lambda = lambda;
        Self::with_method(spec, self.method)
    }

    pub fn with_localization(&self, localization: Localization) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.localization = localization;
        Self::with_method(spec, self.method)
    }

    pub fn with_surface(&self, surface: SurfaceSpec) -> Result<Self> {
        let mut spec = self.spec.clone();
        match &mut spec.geometry {
            Geometry::Surface { surface: s, .. } => *s = surface,
            Geometry::Flat { .. } => {
                return Err(invalid("geometry", "flat operators carry no surface"))
            }
        }
        Self::with_method(spec, self.method)
    }

    pub fn surface(&self) -> Option<&SurfaceSpec> {
        match &self.spec.geometry {
            Geometry::Surface { surface, .. } => Some(surface),
            Geometry::Flat { .. } => None,
        }
    }

    /// `lambda * h_max * lip` for the current grids.
    pub fn resolution_product(&self) -> f64 {
        resolution(&self.spec).0
    }

    fn target_multi(&self, i: usize, out: &mut [usize]) {
        self.spec.target.multi_index(i, out);
    }

    /// Kernel entry without the cutoff factors and quadrature weight.
    #[inline]
    fn core(&self, ti: &[usize], sj: &[usize], j: usize) -> Complex64 {
        let p = &self.prep;
        let k = p.matched;
        let ns = self.spec.source.points_per_axis();
        let mut c = if let Some(tab) = &p.kernel_table {
            let mut idx = 0;
            for a in 0..k {
                idx += (ti[a] + ns - 1 - sj[a]) * tab.strides[a];
            }
            if p.extra_axis {
                idx += ti[k];
            }
            tab.data[idx]
        } else {
            self.direct_core(ti, sj, j)
        };
        if let Some(pt) = &p.phase_tables {
            for a in 0..k {
                c *= pt[a][ti[a] * ns + sj[a]];
            }
        }
        c
    }

    fn direct_core(&self, ti: &[usize], sj: &[usize], j: usize) -> Complex64 {
        let p = &self.prep;
        let k = p.matched;
        let mut z = [0.0; MAX_DIM + 1];
        let mut d2 = 0.0;
        for a in 0..k {
            z[a] = p.tgt_axes[a][ti[a]] - p.src_axes[a][sj[a]];
            d2 += z[a] * z[a];
        }
        z[k] = match &self.spec.geometry {
            Geometry::Surface { x_last, .. } => x_last - p.src_height[j],
            Geometry::Flat { restricted: false } => p.tgt_axes[k][ti[k]],
            Geometry::Flat { restricted: true } => 0.0,
        };
        entry_from_difference(&self.spec, &z[..=k], d2)
    }

    fn source_window(&self, ti: &[usize], ranges: &mut [(usize, usize)]) {
        let p = &self.prep;
        let ns = self.spec.source.points_per_axis();
        for (a, r) in ranges.iter_mut().enumerate().take(p.matched) {
            *r = match p.window {
                Some(radius) => axis_window(&self.spec.source, a, p.tgt_axes[a][ti[a]], radius),
                None => (0, ns),
            };
        }
    }

    fn target_window(&self, sj: &[usize], ranges: &mut [(usize, usize)]) {
        let p = &self.prep;
        let nt = self.spec.target.points_per_axis();
        for (a, r) in ranges.iter_mut().enumerate() {
            *r = match p.window {
                Some(radius) if a < p.matched => {
                    axis_window(&self.spec.target, a, p.src_axes[a][sj[a]], radius)
                }
                _ => (0, nt),
            };
        }
    }

    fn forward_raw(&self, f: &[Complex64]) -> Vec<Complex64> {
        let p = &self.prep;
        let fs: Vec<Complex64> = f.iter().zip(&p.src_factor).map(|(v, s)| v * s).collect();
        let w = self.spec.source.weight();
        if let Some(plan) = &self.toeplitz {
            let mut out = plan.forward(&fs);
            for (o, t) in out.iter_mut().zip(&p.tgt_factor) {
                *o *= w * t;
            }
            return out;
        }
        let k = p.matched;
        let tdim = self.spec.target.dim();
        (0..self.spec.target.len())
            .into_par_iter()
            .map(|i| {
                let t = p.tgt_factor[i];
                if t == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let mut ti = [0usize; MAX_DIM];
                self.target_multi(i, &mut ti[..tdim]);
                let mut ranges = [(0usize, 0usize); MAX_DIM];
                self.source_window(&ti[..tdim], &mut ranges[..k]);
                let mut acc = Complex64::new(0.0, 0.0);
                let ns = self.spec.source.points_per_axis();
                for_each_in_box(&ranges[..k], ns, |sj, j| {
                    let v = fs[j];
                    if v.re != 0.0 || v.im != 0.0 {
                        acc += self.core(&ti[..tdim], sj, j) * v;
                    }
                });
                acc * (w * t)
            })
            .collect()
    }

    fn adjoint_raw(&self, g: &[Complex64]) -> Vec<Complex64> {
        let p = &self.prep;
        let gt: Vec<Complex64> = g.iter().zip(&p.tgt_factor).map(|(v, t)| v * t).collect();
        let w = self.spec.target.weight();
        if let Some(plan) = &self.toeplitz {
            let mut out = plan.adjoint(&gt);
            for (o, s) in out.iter_mut().zip(&p.src_factor) {
                *o *= w * s;
            }
            return out;
        }
        let k = p.matched;
        let tdim = self.spec.target.dim();
        let nt = self.spec.target.points_per_axis();
        (0..self.spec.source.len())
            .into_par_iter()
            .map(|j| {
                let s = p.src_factor[j];
                if s == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let mut sj = [0usize; MAX_DIM];
                self.spec.source.multi_index(j, &mut sj[..k]);
                let mut ranges = [(0usize, 0usize); MAX_DIM];
                self.target_window(&sj[..k], &mut ranges[..tdim]);
                let mut acc = Complex64::new(0.0, 0.0);
                for_each_in_box(&ranges[..tdim], nt, |ti, i| {
                    let v = gt[i];
                    if v.re != 0.0 || v.im != 0.0 {
                        acc += self.core(ti, &sj[..k], j).conj() * v;
                    }
                });
                acc * (w * s)
            })
            .collect()
    }
}

fn fft_is_cheaper(spec: &OperatorSpec, p: &Prepared) -> bool {
    let k = p.matched;
    let ns = spec.source.points_per_axis();
    let nt = spec.target.points_per_axis();
    let slices = if p.extra_axis { nt } else { 1 };
    let per_target: f64 = (0..k)
        .map(|a| match p.window {
            Some(r) => (2.0 * r / spec.source.spacing(a) + 3.0).min(ns as f64),
            None => ns as f64,
        })
        .product();
    let direct = spec.target.len() as f64 * per_target;
    fft::cost(k, ns, nt, slices) < direct
}

fn toeplitz_plan(spec: &OperatorSpec, p: &Prepared) -> fft::ToeplitzPlan {
    let tab = p.kernel_table.as_ref().expect("checked by the caller");
    let k = p.matched;
    let entry = |m: &[usize], l: usize| -> Complex64 {
        let idx: usize = (0..k).map(|a| m[a] * tab.strides[a]).sum::<usize>() + l;
        tab.data[idx]
    };
    let nt = spec.target.points_per_axis();
    fft::ToeplitzPlan::new(fft::PlanInput {
        k,
        ns: spec.source.points_per_axis(),
        nt,
        slices: if p.extra_axis { nt } else { 1 },
        entry: &entry,
        linear: p
            .phase_tables
            .as_ref()
            .map(|_| (spec.lambda, &p.tgt_axes[..k], &p.src_axes[..k])),
    })
}

fn axis_window(grid: &Grid, axis: usize, center: f64, radius: f64) -> (usize, usize) {
    let h = grid.spacing(axis);
    let n = grid.points_per_axis() as f64;
    let lo = ((center - radius - grid.lo()[axis]) / h - grid.shift()).floor() - 1.0;
    let hi = ((center + radius - grid.lo()[axis]) / h - grid.shift()).ceil() + 2.0;
    (lo.clamp(0.0, n) as usize, hi.clamp(0.0, n) as usize)
}

/// `K(z) L(d)`, times `e^{i lambda Phi}` for the fractional phase; the linear
/// phase comes from per-axis tables.
fn entry_from_difference(spec: &OperatorSpec, z: &[f64], d2: f64) -> Complex64 {
    let r2: f64 = z.iter().map(|v| v * v).sum();
    let kern = &spec.kernel;
    let mut mag = kern.amplitude() * radial_power(r2, kern.exponent());
    if let Some(w) = kern.angular_cutoff() {
        mag *= w.eval(z);
    }
    mag *= localization_factor(spec.localization, spec.lambda, d2);
    match spec.phase {
        PhaseSpec::FractionalDistance { gamma } => {
            Complex64::from_polar(mag, spec.lambda * distance_power(r2, gamma))
        }
        PhaseSpec::Linear => Complex64::new(mag, 0.0),
    }
}

#[inline]
fn localization_factor(loc: Localization, lambda: f64, d2: f64) -> f64 {
    match loc {
        Localization::Full => 1.0,
        Localization::Near { beta } => 1.0 - phi_annulus(lambda.powf(beta) * d2.sqrt()),
        Localization::Far { beta } => phi_annulus(lambda.powf(beta) * d2.sqrt()),
    }
}

/// Bound on the phase gradient over the boxes of `spec`. Does not depend on
/// the number of grid points.
pub fn phase_lipschitz(spec: &OperatorSpec) -> f64 {
    resolution(spec).2
}

/// Returns `(lambda * h * lip, h, lip)`.
fn resolution(spec: &OperatorSpec) -> (f64, f64, f64) {
    let s = &spec.source;
    let t = &spec.target;
    let k = s.dim();
    let h = s.max_cell_width().max(t.max_cell_width());
    let lip = match spec.phase {
        PhaseSpec::Linear => {
            let sx: f64 = (0..k).map(|a| sup_abs(t.lo()[a], t.hi()[a]).powi(2)).sum();
            let sy: f64 = (0..k).map(|a| sup_abs(s.lo()[a], s.hi()[a]).powi(2)).sum();
            sx.sqrt().max(sy.sqrt())
        }
        PhaseSpec::FractionalDistance { gamma } => {
            let mut d2: f64 = (0..k)
                .map(|a| {
                    let v = (t.hi()[a] - s.lo()[a])
                        .abs()
                        .max((s.hi()[a] - t.lo()[a]).abs());
                    v * v
                })
                .sum();
            if t.dim() > k {
                d2 += sup_abs(t.lo()[k], t.hi()[k]).powi(2);
            }
            gamma * d2.sqrt().powf(gamma - 1.0)
        }
    };
    (spec.lambda * h * lip, h, lip)
}

fn check_cutoff_dim(c: &CutoffSpec, dim: usize, side: &'static str) -> Result<()> {
    if let CutoffSpec::TensorBump(b) = c {
        if b.dim() != dim {
            return Err(Error::DimensionMismatch {
                what: side,
                expected: dim,
                found: b.dim(),
            });
        }
    }
    Ok(())
}

fn validate_and_prepare(spec: &OperatorSpec) -> Result<Prepared> {
    if !(spec.lambda >= 0.0 && spec.lambda.is_finite()) {
        return Err(invalid(
            "lambda",
            format!("{} must be finite and >= 0", spec.lambda),
        ));
    }
    spec.phase.validate()?;
    let s = &spec.source;
    let t = &spec.target;
    let k = s.dim();
    if k > MAX_DIM - 1 {
        return Err(invalid("source grid", "dimension too large"));
    }
    let extra_axis = matches!(spec.geometry, Geometry::Flat { restricted: false });
    let want_target = if extra_axis { k + 1 } else { k };
    if t.dim() != want_target {
        return Err(Error::DimensionMismatch {
            what: "target grid",
            expected: want_target,
            found: t.dim(),
        });
    }
    if spec.kernel.ambient_dim() != k + 1 {
        return Err(Error::DimensionMismatch {
            what: "kernel ambient dimension",
            expected: k + 1,
            found: spec.kernel.ambient_dim(),
        });
    }
    if let Geometry::Surface { surface, x_last } = &spec.geometry {
        if surface.dim_base() != k {
            return Err(Error::DimensionMismatch {
                what: "surface base",
                expected: k,
                found: surface.dim_base(),
            });
        }
        if !x_last.is_finite() {
            return Err(invalid("x_last", "must be finite"));
        }
        if spec.phase != PhaseSpec::Linear {
            return Err(invalid("phase", "surface operators use the linear phase"));
        }
    }
    check_cutoff_dim(&spec.cutoff0.target, t.dim(), "target cutoff")?;
    check_cutoff_dim(&spec.cutoff0.source, k, "source cutoff")?;
    let window = match spec.localization {
        Localization::Full => None,
        Localization::Near { beta } | Localization::Far { beta } => {
            if !(0.0..=1.0).contains(&beta) {
                return Err(invalid("beta", format!("{beta} is not in [0, 1]")));
            }
            if !(spec.lambda > 0.0) {
                return Err(invalid("lambda", "localized operators need lambda > 0"));
            }
            match spec.localization {
                Localization::Near { .. } => Some(2.0 * spec.lambda.powf(-beta)),
                _ => None,
            }
        }
    };

    let (product, cell_width, lipschitz) = resolution(spec);
    if product > FRAC_PI_2 * (1.0 + 1e-12) {
        return Err(Error::UnresolvedOscillation {
            product,
            limit: FRAC_PI_2,
            lambda: spec.lambda,
            cell_width,
            lipschitz,
        });
    }

    let tgt_axes: Vec<Vec<f64>> = (0..t.dim()).map(|a| t.axis_nodes(a)).collect();
    let src_axes: Vec<Vec<f64>> = (0..k).map(|a| s.axis_nodes(a)).collect();

    // Distance from the singular set, bounded below axis by axis.
    let mut gap2: f64 = (0..k)
        .map(|a| min_gap(&tgt_axes[a], &src_axes[a]).powi(2))
        .sum();
    match &spec.geometry {
        Geometry::Surface { surface, x_last } => {
            gap2 += (x_last.abs() - surface.sup_height()).max(0.0).powi(2)
        }
        Geometry::Flat { restricted: false } => {
            gap2 += tgt_axes[k]
                .iter()
                .map(|v| v.abs())
                .fold(f64::INFINITY, f64::min)
                .powi(2)
        }
        Geometry::Flat { restricted: true } => {}
    }
    let finest = (0..k)
        .map(|a| s.spacing(a).min(t.spacing(a)))
        .fold(f64::INFINITY, f64::min);
    let required = 0.5 * finest * (1.0 - 1e-9);
    if gap2.sqrt() < required {
        return Err(Error::NodesTooClose {
            distance: gap2.sqrt(),
            required,
        });
    }

    let tgt_factor: Vec<f64> = (0..t.len())
        .into_par_iter()
        .map(|i| cutoff_eval(&spec.cutoff0.target, &t.node(i)))
        .collect();
    let (src_factor, src_height): (Vec<f64>, Vec<f64>) = (0..s.len())
        .into_par_iter()
        .map(|j| {
            let y = s.node(j);
            let c = cutoff_eval(&spec.cutoff0.source, &y);
            match &spec.geometry {
                Geometry::Surface { surface, .. } => {
                    (c * measure_weight(surface, &y), surface_height(surface, &y))
                }
                Geometry::Flat { .. } => (c, 0.0),
            }
        })
        .unzip();

    let phase_tables = match spec.phase {
        PhaseSpec::Linear => Some(
            (0..k)
                .map(|a| {
                    let xs = &tgt_axes[a];
                    let ys = &src_axes[a];
                    xs.iter()
                        .flat_map(|x| ys.iter().map(move |y| Complex64::cis(spec.lambda * x * y)))
                        .collect()
                })
                .collect(),
        ),
        PhaseSpec::FractionalDistance { .. } => None,
    };

    let kernel_table = build_table(spec, &tgt_axes);

    Ok(Prepared {
        matched: k,
        extra_axis,
        tgt_axes,
        src_axes,
        tgt_factor,
        src_factor,
        src_height,
        phase_tables,
        kernel_table,
        window,
    })
}

fn build_table(spec: &OperatorSpec, tgt_axes: &[Vec<f64>]) -> Option<KernelTable> {
    let s = &spec.source;
    let t = &spec.target;
    let k = s.dim();
    let x_last = match &spec.geometry {
        Geometry::Surface { surface, x_last } if surface.is_flat() => Some(*x_last),
        Geometry::Surface { .. } => return None,
        Geometry::Flat { .. } => None,
    };
    for a in 0..k {
        let (ht, hs) = (t.spacing(a), s.spacing(a));
        if (ht - hs).abs() > 1e-12 * ht.max(hs) {
            return None;
        }
    }
    let ns = s.points_per_axis();
    let nt = t.points_per_axis();
    let span = nt + ns - 1;
    let extra = matches!(spec.geometry, Geometry::Flat { restricted: false });
    let last = if extra { nt } else { 1 };
    let total = span.checked_pow(k as u32)?.checked_mul(last)?;
    if total > TABLE_CAP {
        return None;
    }
    let mut strides = vec![0; k];
    let mut st = last;
    for a in (0..k).rev() {
        strides[a] = st;
        st *= span;
    }
    let base: Vec<f64> = (0..k).map(|a| t.lo()[a] - s.lo()[a]).collect();
    let dshift = t.shift() - s.shift();
    let data = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut z = [0.0; MAX_DIM + 1];
            let mut rem = idx;
            let l = rem % last;
            rem /= last;
            let mut d2 = 0.0;
            for a in (0..k).rev() {
                let m = rem % span;
                rem /= span;
                let delta = m as f64 - (ns - 1) as f64;
                z[a] = base[a] + (delta + dshift) * s.spacing(a);
                d2 += z[a] * z[a];
            }
            z[k] = match x_last {
                Some(v) => v,
                None if extra => tgt_axes[k][l],
                None => 0.0,
            };
            if z[..=k].iter().all(|v| *v == 0.0) {
                return Complex64::new(0.0, 0.0);
            }
            entry_from_difference(spec, &z[..=k], d2)
        })
        .collect();
    Some(KernelTable { data, strides })
}

impl LinearOperator for DiscretizedOperator {
    fn source_len(&self) -> usize {
        self.spec.source.len()
    }

    fn target_len(&self) -> usize {
        self.spec.target.len()
    }

    fn source_weight(&self) -> f64 {
        self.spec.source.weight()
    }

    fn target_weight(&self) -> f64 {
        self.spec.target.weight()
    }

    fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    fn forward(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len("forward input", self.source_len(), f)?;
        Ok(self.forward_raw(f))
    }

    fn adjoint(&self, g: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len("adjoint input", self.target_len(), g)?;
        Ok(self.adjoint_raw(g))
    }
}

pub fn apply_forward(op: &DiscretizedOperator, f: &GridFunction) -> Result<GridFunction> {
    if f.grid() != op.source_grid() {
        return Err(Error::GridMismatch { side: "source" });
    }
    GridFunction::new(op.target_grid().clone(), op.forward_raw(f.values()))
}

pub fn apply_adjoint(op: &DiscretizedOperator, g: &GridFunction) -> Result<GridFunction> {
    if g.grid() != op.target_grid() {
        return Err(Error::GridMismatch { side: "target" });
    }
    GridFunction::new(op.source_grid().clone(), op.adjoint_raw(g.values()))
}

/// The operator over the oscillated surface `(y, eps^g psi(y / eps))`.
pub fn oscillated(op: &DiscretizedOperator, p: OscillationParams) -> Result<DiscretizedOperator> {
    let surface = op
        .surface()
        .ok_or_else(|| invalid("geometry", "the oscillating family needs a surface"))?;
    op.with_surface(oscillate(surface, p))
}

pub fn apply_osc(
    op: &DiscretizedOperator,
    p: OscillationParams,
    f: &GridFunction,
) -> Result<GridFunction> {
    apply_forward(&oscillated(op, p)?, f)
}

/// `eps_i = 2^{-i/4}`, `i = 0..=k`.
pub fn geometric_eps_grid(k: usize) -> Vec<f64> {
    (0..=k).map(|i| 2f64.powf(-(i as f64) / 4.0)).collect()
}

/// Pointwise maximum of `|T^eps f|` over a finite set of `eps`.
#[derive(Debug, Clone)]
pub struct MaximalOperator {
    members: Vec<DiscretizedOperator>,
}

impl MaximalOperator {
    pub fn new(op: &DiscretizedOperator, gamma_osc: f64, eps_grid: &[f64]) -> Result<Self> {
        if eps_grid.is_empty() {
            return Err(Error::Empty { what: "eps grid" });
        }
        let members = eps_grid
            .iter()
            .map(|&e| oscillated(op, OscillationParams::new(e, gamma_osc)?))
            .collect::<Result<_>>()?;
        Ok(Self { members })
    }

    pub fn members(&self) -> &[DiscretizedOperator] {
        &self.members
    }

    pub fn source_grid(&self) -> &Grid {
        self.members[0].source_grid()
    }

    pub fn target_grid(&self) -> &Grid {
        self.members[0].target_grid()
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        let mut best = vec![0.0f64; self.target_grid().len()];
        for m in &self.members {
            let out = apply_forward(m, f)?;
            for (b, v) in best.iter_mut().zip(out.values()) {
                *b = b.max(v.norm());
            }
        }
        GridFunction::new(
            self.target_grid().clone(),
            best.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        )
    }
}

pub fn apply_maximal(
    op: &DiscretizedOperator,
    gamma_osc: f64,
    eps_grid: &[f64],
    f: &GridFunction,
) -> Result<GridFunction> {
    MaximalOperator::new(op, gamma_osc, eps_grid)?.apply(f)
}

/// Near part `A` (cutoff `1 - phi(lambda^beta d)`) and far part `B`.
pub fn split_ab(
    op: &DiscretizedOperator,
    beta: f64,
    f: &GridFunction,
) -> Result<(GridFunction, GridFunction)> {
    let near = op.with_localization(Localization::Near { beta })?;
    let far = op.with_localization(Localization::Far { beta })?;
    Ok((apply_forward(&near, f)?, apply_forward(&far, f)?))
}

//! Power-law singular kernels, smooth cutoffs and the dyadic decomposition
//! `K(z) = sum_k 2^{kp} psi(2^k z)` with `psi` supported in `1/2 <= |z| <= 2`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::norm_sq;

/// `f(t) / (f(t) + f(1 - t))` with `f(t) = exp(-1/t)` for `t > 0`: zero for
/// `t <= 0`, one for `t >= 1`, smooth in between.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Angular factor `omega(z)`, homogeneous of degree zero, vanishing where
/// `|z_n| / |z| <= c1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularCutoff {
    pub c1: f64,
}

impl AngularCutoff {
    fn upper(&self) -> f64 {
        (2.0 * self.c1).min(0.5 * (1.0 + self.c1))
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let r = norm_sq(z).sqrt();
        if r == 0.0 {
            return 0.0;
        }
        let zeta = z[z.len() - 1].abs() / r;
        smoothstep((zeta - self.c1) / (self.upper() - self.c1))
    }
}

/// `amplitude * |z|^{-exponent}` on `R^ambient_dim`, optionally times an
/// angular cutoff in the last coordinate.
///
/// The regularity gain is `m = ambient_dim - 1 - exponent` in both settings
/// used here: the surface setting (`z` in `R^{n+1}`, `p = n - m`) and the flat
/// setting (`z` in `R^n`, `p = n - 1 - m`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct KernelSpec {
    ambient_dim: usize,
    exponent: f64,
    amplitude: f64,
    angular_cutoff: Option<AngularCutoff>,
}

#[derive(Serialize, Deserialize)]
struct RawKernel {
    ambient_dim: usize,
    exponent: f64,
    #[serde(default = "unit")]
    amplitude: f64,
    #[serde(default)]
    angular_cutoff: Option<AngularCutoff>,
}

fn unit() -> f64 {
    1.0
}

impl TryFrom<RawKernel> for KernelSpec {
    type Error = Error;
    fn try_from(r: RawKernel) -> Result<Self> {
        let k = KernelSpec::power(r.ambient_dim, r.exponent)?.with_amplitude(r.amplitude)?;
        match r.angular_cutoff {
            Some(c) => k.with_angular_cutoff(c.c1),
            None => Ok(k),
        }
    }
}

impl From<KernelSpec> for RawKernel {
    fn from(k: KernelSpec) -> Self {
        RawKernel {
            ambient_dim: k.ambient_dim,
            exponent: k.exponent,
            amplitude: k.amplitude,
            angular_cutoff: k.angular_cutoff,
        }
    }
}

impl KernelSpec {
    pub fn power(ambient_dim: usize, exponent: f64) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(invalid("ambient_dim", "must be at least 1"));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(invalid("exponent", format!("{exponent} must be > 0")));
        }
        Ok(Self {
            ambient_dim,
            exponent,
            amplitude: 1.0,
            angular_cutoff: None,
        })
    }

    /// Kernel for the surface operator over a graph in `R^{n+1}`: `|z|^{-(n-m)}`
    /// with `0 <= m < n`.
    pub fn surface_setting(n: usize, m: f64) -> Result<Self> {
        if !(m >= 0.0 && m < n as f64) {
            return Err(invalid(
                "m",
                format!("surface setting needs 0 <= m < n = {n}"),
            ));
        }
        Self::power(n + 1, n as f64 - m)
    }

    /// Kernel for the flat operators on `R^n`: `|z|^{-(n-1-m)}` with
    /// `0 < m < n - 1`.
    pub fn flat_setting(n: usize, m: f64) -> Result<Self> {
        if n < 2 || !(m > 0.0 && m < (n - 1) as f64) {
            return Err(invalid(
                "m",
                format!(
                    "flat setting needs n >= 2, 0 < m < n - 1 = {}",
                    n.saturating_sub(1)
                ),
            ));
        }
        Self::power(n, (n - 1) as f64 - m)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(invalid("amplitude", "must be finite"));
        }
        self.amplitude = amplitude;
        Ok(self)
    }

    pub fn with_angular_cutoff(mut self, c1: f64) -> Result<Self> {
        if !(c1 > 0.0 && c1 < 1.0) {
            return Err(invalid("c1", format!("{c1} is not in (0, 1)")));
        }
        self.angular_cutoff = Some(AngularCutoff { c1 });
        Ok(self)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn m(&self) -> f64 {
        (self.ambient_dim - 1) as f64 - self.exponent
    }

    pub fn angular_cutoff(&self) -> Option<AngularCutoff> {
        self.angular_cutoff
    }

    /// Evaluation without the singularity check; `z` must be nonzero.
    #[inline]
    pub fn eval_unchecked(&self, z: &[f64]) -> f64 {
        let r2 = norm_sq(z);
        let mut v = self.amplitude * radial_power(r2, self.exponent);
        if let Some(w) = &self.angular_cutoff {
            v *= w.eval(z);
        }
        v
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                what: "kernel argument",
                expected: self.ambient_dim,
                found: z.len(),
            });
        }
        if z.iter().all(|c| *c == 0.0) {
            return Err(Error::Singular { what: "kernel" });
        }
        Ok(())
    }
}

/// `(r2)^{-p/2}` with the common exponents special-cased.
#[inline]
pub(crate) fn radial_power(r2: f64, p: f64) -> f64 {
    if p == 1.0 {
        1.0 / r2.sqrt()
    } else if p == 2.0 {
        1.0 / r2
    } else if p == 0.5 {
        1.0 / r2.sqrt().sqrt()
    } else {
        r2.powf(-0.5 * p)
    }
}

pub fn kernel_eval(k: &KernelSpec, z: &[f64]) -> Result<f64> {
    k.check(z)?;
    Ok(k.eval_unchecked(z))
}

/// `|D^alpha K(z)| * |z|^{p + |alpha|}`, derivatives by central differences with
/// step `1e-4 |z|`. Bounded uniformly in `z` exactly when the kernel obeys the
/// symbol-type estimates.
pub fn a2_ratio(k: &KernelSpec, z: &[f64], alpha: &[usize]) -> Result<f64> {
    k.check(z)?;
    if alpha.len() != z.len() {
        return Err(Error::DimensionMismatch {
            what: "multi-index",
            expected: z.len(),
            found: alpha.len(),
        });
    }
    let order: usize = alpha.iter().sum();
    if order > 2 {
        return Err(invalid("alpha", "only |alpha| <= 2 is supported"));
    }
    let r = norm_sq(z).sqrt();
    let h = 1e-4 * r;
    let f = |dz: &[(usize, f64)]| {
        let mut p = z.to_vec();
        for (i, d) in dz {
            p[*i] += d;
        }
        k.eval_unchecked(&p)
    };
    let axes: Vec<usize> = alpha
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| std::iter::repeat_n(i, a))
        .collect();
    let deriv = match axes.as_slice() {
        [] => f(&[]),
        [i] => (f(&[(*i, h)]) - f(&[(*i, -h)])) / (2.0 * h),
        [i, j] if i == j => (f(&[(*i, h)]) - 2.0 * f(&[]) + f(&[(*i, -h)])) / (h * h),
        [i, j] => {
            (f(&[(*i, h), (*j, h)]) - f(&[(*i, h), (*j, -h)]) - f(&[(*i, -h), (*j, h)])
                + f(&[(*i, -h), (*j, -h)]))
                / (4.0 * h * h)
        }
        _ => unreachable!(),
    };
    Ok(deriv.abs() * r.powf(k.exponent + order as f64))
}

/// Axis-aligned smooth bump: one on `|t_i - center_i| <= plateau_i`, zero on
/// `|t_i - center_i| >= plateau_i + transition_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensorBump", into = "RawTensorBump")]
pub struct TensorBump {
    center: Vec<f64>,
    plateau: Vec<f64>,
    transition: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTensorBump {
    center: Vec<f64>,
    plateau: Vec<f64>,
    transition: Vec<f64>,
}

impl TryFrom<RawTensorBump> for TensorBump {
    type Error = Error;
    fn try_from(r: RawTensorBump) -> Result<Self> {
        TensorBump::new(r.center, r.plateau, r.transition)
    }
}

impl From<TensorBump> for RawTensorBump {
    fn from(b: TensorBump) -> Self {
        RawTensorBump {
            center: b.center,
            plateau: b.plateau,
            transition: b.transition,
        }
    }
}

impl TensorBump {
    pub fn new(center: Vec<f64>, plateau: Vec<f64>, transition: Vec<f64>) -> Result<Self> {
        let d = center.len();
        if plateau.len() != d || transition.len() != d {
            return Err(Error::DimensionMismatch {
                what: "tensor bump",
                expected: d,
                found: plateau.len().min(transition.len()),
            });
        }
        if plateau.iter().any(|p| !(*p >= 0.0)) || transition.iter().any(|t| !(*t > 0.0)) {
            return Err(invalid(
                "tensor bump",
                "plateau >= 0 and transition > 0 required",
            ));
        }
        Ok(Self {
            center,
            plateau,
            transition,
        })
    }

    /// Same plateau and transition on every axis, centered at the origin.
    pub fn centered(dim: usize, plateau: f64, transition: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![plateau; dim], vec![transition; dim])
    }

    /// Smallest bump whose plateau contains the box `[lo, hi]`.
    pub fn covering(lo: &[f64], hi: &[f64], transition: f64) -> Result<Self> {
        let center = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let plateau = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect();
        Self::new(center, plateau, vec![transition; lo.len()])
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn support_radius(&self, axis: usize) -> f64 {
        self.plateau[axis] + self.transition[axis]
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        let mut v = 1.0;
        for i in 0..self.center.len() {
            let off = (t[i] - self.center[i]).abs() - self.plateau[i];
            v *= 1.0 - smoothstep(off / self.transition[i]);
            if v == 0.0 {
                break;
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CutoffSpec {
    /// Identically one.
    Unit,
    /// `eta`: one on `|y| <= 1`, zero on `|y| >= 2`.
    EtaShell,
    /// `phi`: zero on `|y| <= 1`, one on `|y| >= 2`.
    PhiAnnulus,
    /// Partition bump `phi` applied coordinatewise, `chi(t) = prod phi(t_i)`.
    PartitionBump,
    TensorBump(TensorBump),
}

pub fn eta_shell(r: f64) -> f64 {
    1.0 - smoothstep(r - 1.0)
}

pub fn phi_annulus(r: f64) -> f64 {
    smoothstep(r - 1.0)
}

pub fn cutoff_eval(c: &CutoffSpec, t: &[f64]) -> f64 {
    match c {
        CutoffSpec::Unit => 1.0,
        CutoffSpec::EtaShell => eta_shell(norm_sq(t).sqrt()),
        CutoffSpec::PhiAnnulus => phi_annulus(norm_sq(t).sqrt()),
        CutoffSpec::PartitionBump => t.iter().map(|&s| partition_bump(s)).product(),
        CutoffSpec::TensorBump(b) => b.eval(t),
    }
}

const MOLLIFIER_RADIUS: f64 = 0.1;

fn mollifier_shape(s: f64) -> f64 {
    let u = s / MOLLIFIER_RADIUS;
    let q = 1.0 - u * u;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

fn mollifier_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| {
        quadrature::double_exponential::integrate(
            mollifier_shape,
            -MOLLIFIER_RADIUS,
            MOLLIFIER_RADIUS,
            1e-15,
        )
        .integral
    })
}

/// Distribution function of the normalized mollifier.
fn mollifier_cdf(s: f64) -> f64 {
    if s <= -MOLLIFIER_RADIUS {
        return 0.0;
    }
    if s >= MOLLIFIER_RADIUS {
        return 1.0;
    }
    let tail = |a: f64, b: f64| {
        quadrature::double_exponential::integrate(mollifier_shape, a, b, 1e-15).integral
            / mollifier_mass()
    };
    if s <= 0.0 {
        tail(-MOLLIFIER_RADIUS, s)
    } else {
        1.0 - tail(s, MOLLIFIER_RADIUS)
    }
}

/// Indicator of `[-1/2, 1/2]` mollified at radius `1/10`; its integer
/// translates sum to one and its support is `[-3/5, 3/5]`.
pub fn partition_bump(t: f64) -> f64 {
    mollifier_cdf(t + 0.5) - mollifier_cdf(t - 0.5)
}

/// `chi_j(2^k t) = prod_i phi(2^k t_i - j_i)`.
pub fn partition_chi(k: i32, j: &[i64], t: &[f64]) -> f64 {
    let s = 2f64.powi(k);
    t.iter()
        .zip(j)
        .map(|(x, ji)| partition_bump(s * x - *ji as f64))
        .product()
}

/// `psi(z) = |z|^{-p} [eta(z) - eta(2z)]`, supported in `1/2 <= |z| <= 2`.
pub fn dyadic_piece(k: &KernelSpec, z: &[f64]) -> Result<f64> {
    k.check(z)?;
    let r = norm_sq(z).sqrt();
    let shell = eta_shell(r) - eta_shell(2.0 * r);
    if shell == 0.0 {
        return Ok(0.0);
    }
    Ok(k.eval_unchecked(z) * shell)
}

/// Nonzero terms `(k, 2^{kp} psi(2^k z))` of the dyadic series at `z`.
pub fn dyadic_terms(k: &KernelSpec, z: &[f64]) -> Result<Vec<(i32, f64)>> {
    k.check(z)?;
    let r = norm_sq(z).sqrt();
    let lo = (0.5 / r).log2().floor() as i32;
    let hi = (2.0 / r).log2().ceil() as i32;
    let mut out = Vec::with_capacity(3);
    let mut scaled = z.to_vec();
    for j in lo..=hi {
        let s = 2f64.powi(j);
        for (a, b) in scaled.iter_mut().zip(z) {
            *a = s * b;
        }
        let piece = dyadic_piece(k, &scaled)?;
        if piece != 0.0 {
            out.push((j, s.powf(k.exponent) * piece));
        }
    }
    Ok(out)
}

pub fn dyadic_reconstruct(k: &KernelSpec, z: &[f64]) -> Result<f64> {
    Ok(dyadic_terms(k, z)?.iter().map(|(_, v)| v).sum())
}

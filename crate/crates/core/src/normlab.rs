//! Operator-norm estimates, predicted and fitted decay exponents, and the
//! localized witness functions whose output ratios certify lower bounds.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{CutoffSpec, KernelSpec, TensorBump};
use crate::operators::{
    apply_forward, DiscretizedOperator, Geometry, Grid, GridFunction, LinearOperator, Localization,
    MaximalOperator, OperatorSpec, ProductCutoff,
};
use crate::phase::PhaseSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    PowerIteration,
    RandomLowerBound,
}

impl NormMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormMethod::PowerIteration => "power_iteration",
            NormMethod::RandomLowerBound => "random_lower_bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub lambda: f64,
    pub value: f64,
    pub method: NormMethod,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn weighted_norm(v: &[Complex64], w: f64) -> f64 {
    (w * v.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
}

pub(crate) fn random_complex(len: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
        .collect()
}

/// Power iteration on `T*T`. Returns the estimate and the last unit iterate,
/// which approximates the top right singular vector.
pub fn power_iteration<O: LinearOperator + ?Sized>(
    op: &O,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<(NormEstimate, Vec<Complex64>)> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(invalid("power iteration", "need tol > 0 and max_iter >= 1"));
    }
    let ws = op.source_weight();
    let wt = op.target_weight();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = random_complex(op.source_len(), &mut rng);
    let n0 = weighted_norm(&v, ws);
    v.iter_mut().for_each(|c| *c /= n0);
    let mut prev = f64::NAN;
    let mut sigma = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let u = op.forward(&v)?;
        sigma = weighted_norm(&u, wt);
        if sigma == 0.0 {
            return Ok((estimate(op.lambda(), 0.0, it, 0.0, true), v));
        }
        if prev.is_finite() {
            residual = (sigma - prev).abs() / sigma;
        }
        let w = op.adjoint(&u)?;
        let nw = weighted_norm(&w, ws);
        if nw == 0.0 {
            return Ok((estimate(op.lambda(), sigma, it, 0.0, true), v));
        }
        if residual < tol {
            return Ok((estimate(op.lambda(), sigma, it, residual, true), v));
        }
        v = w.into_iter().map(|c| c / nw).collect();
        prev = sigma;
    }
    Ok((estimate(op.lambda(), sigma, max_iter, residual, false), v))
}

fn estimate(
    lambda: f64,
    value: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
) -> NormEstimate {
    NormEstimate {
        lambda,
        value,
        method: NormMethod::PowerIteration,
        iterations,
        residual,
        converged,
    }
}

pub fn opnorm_power<O: LinearOperator + ?Sized>(
    op: &O,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<NormEstimate> {
    Ok(power_iteration(op, tol, max_iter, seed)?.0)
}

/// A possibly nonlinear map between grid functions whose norm ratio can be
/// sampled.
pub trait SublinearMap: Sync {
    fn source_grid(&self) -> &Grid;
    fn lambda(&self) -> f64;
    fn apply(&self, f: &GridFunction) -> Result<GridFunction>;
}

impl SublinearMap for DiscretizedOperator {
    fn source_grid(&self) -> &Grid {
        DiscretizedOperator::source_grid(self)
    }

    fn lambda(&self) -> f64 {
        DiscretizedOperator::lambda(self)
    }

    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        apply_forward(self, f)
    }
}

impl SublinearMap for MaximalOperator {
    fn source_grid(&self) -> &Grid {
        MaximalOperator::source_grid(self)
    }

    fn lambda(&self) -> f64 {
        self.members()[0].lambda()
    }

    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        MaximalOperator::apply(self, f)
    }
}

/// Largest `|A f| / |f|` over `trials` seeded random inputs and the given
/// candidates. Returns the estimate and the best input.
pub fn opnorm_lower_random(
    map: &dyn SublinearMap,
    trials: usize,
    seed: u64,
    candidates: &[GridFunction],
) -> Result<(NormEstimate, GridFunction)> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let grid = map.source_grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    let mut best_f = GridFunction::zeros(&grid);
    let mut try_one = |f: GridFunction| -> Result<()> {
        let nf = f.norm();
        if nf == 0.0 {
            return Ok(());
        }
        let r = map.apply(&f)?.norm() / nf;
        if r > best {
            best = r;
            best_f = f;
        }
        Ok(())
    };
    for _ in 0..trials {
        let f = GridFunction::new(grid.clone(), random_complex(grid.len(), &mut rng))?;
        try_one(f)?;
    }
    for c in candidates {
        if c.grid() != &grid {
            return Err(Error::GridMismatch { side: "source" });
        }
        try_one(c.clone())?;
    }
    Ok((
        NormEstimate {
            lambda: map.lambda(),
            value: best.max(0.0),
            method: NormMethod::RandomLowerBound,
            iterations: trials + candidates.len(),
            residual: 0.0,
            converged: true,
        },
        best_f,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Fixed surface, `1 <= m < n`.
    FixedSurface,
    /// Maximal operator over oscillating surfaces, `1 <= m < n`, `gamma > 3/2`.
    Maximal,
    /// Fractional distance phase, `gamma > 1`, `0 < m < n - 1`.
    NonlinearPhase,
    /// Distance phase `gamma = 1` with angular cutoff.
    DistancePhase,
    /// Linear phase into `R^n` via the `gamma = 2` identity.
    QuadraticFull,
    /// Linear phase restricted to `R^{n-1}`.
    QuadraticRestricted,
    /// Near part of the split, `m > 0`, `0 <= beta <= 1`.
    NearPart,
    /// Single-layer Helmholtz field on a domain away from the plane.
    HelmholtzField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentParams {
    pub n: usize,
    pub m: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl ExponentParams {
    pub fn new(n: usize, m: f64) -> Self {
        Self {
            n,
            m,
            gamma: None,
            beta: None,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub exponent: f64,
    /// True in the boundary case, where the rate carries an extra `log lambda`.
    pub log_factor: bool,
}

fn hyp(regime: &'static str, ok: bool, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Hypothesis {
            regime,
            reason: reason.to_string(),
        })
    }
}

const BOUNDARY_TOL: f64 = 1e-12;

/// Three-regime rate with threshold `t`: `first` below, `-alpha log` at, `-alpha` above.
fn three_regime(m: f64, t: f64, first: f64, alpha: f64) -> Prediction {
    if (m - t).abs() <= BOUNDARY_TOL {
        Prediction {
            exponent: -alpha,
            log_factor: true,
        }
    } else if m < t {
        Prediction {
            exponent: first,
            log_factor: false,
        }
    } else {
        Prediction {
            exponent: -alpha,
            log_factor: false,
        }
    }
}

pub fn predicted_exponent(regime: Regime, p: ExponentParams) -> Result<Prediction> {
    let n = p.n as f64;
    let m = p.m;
    let plain = |e: f64| Prediction {
        exponent: e,
        log_factor: false,
    };
    let alpha = (n - 1.0) / 2.0;
    match regime {
        Regime::FixedSurface => {
            hyp(
                "fixed surface",
                p.n >= 1 && (1.0..n).contains(&m),
                "need 1 <= m < n",
            )?;
            Ok(plain(-(m / 2.0) * n / (n + 1.0)))
        }
        Regime::Maximal => {
            hyp(
                "maximal",
                p.n >= 1 && (1.0..n).contains(&m),
                "need 1 <= m < n",
            )?;
            if let Some(g) = p.gamma {
                hyp("maximal", g > 1.5, "need gamma > 3/2")?;
            }
            Ok(plain(-(m / 2.0) * n / (n + 2.0)))
        }
        Regime::NonlinearPhase => {
            let g = p.gamma.ok_or_else(|| invalid("gamma", "required"))?;
            hyp("nonlinear phase", g > 1.0, "need gamma > 1")?;
            hyp(
                "nonlinear phase",
                p.n >= 2 && m > 0.0 && m < n - 1.0,
                "need 0 < m < n - 1",
            )?;
            Ok(three_regime(m, g * alpha - 0.5, -(m + 0.5) / g, alpha))
        }
        Regime::DistancePhase => {
            hyp(
                "distance phase",
                p.n >= 2 && m > 0.0 && m < n - 1.0,
                "need 0 < m < n - 1",
            )?;
            Ok(three_regime(m, n / 2.0 - 1.0, -(m + 0.5), alpha))
        }
        Regime::QuadraticFull => {
            hyp(
                "quadratic full",
                p.n >= 2 && m > 0.0 && m < n - 1.0,
                "need 0 < m < n - 1",
            )?;
            Ok(three_regime(m, n - 1.5, -(m / 2.0 + 0.25), alpha))
        }
        Regime::QuadraticRestricted => {
            hyp(
                "quadratic restricted",
                p.n >= 2 && m > 0.0 && m < n - 1.0,
                "need 0 < m < n - 1",
            )?;
            Ok(plain(-m / 2.0))
        }
        Regime::NearPart => {
            let b = p.beta.ok_or_else(|| invalid("beta", "required"))?;
            hyp(
                "near part",
                m > 0.0 && (0.0..=1.0).contains(&b),
                "need m > 0, 0 <= beta <= 1",
            )?;
            Ok(plain(-m * b))
        }
        Regime::HelmholtzField => Ok(plain(-1.0)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

/// Least-squares line through `(log lambda, log norm)`.
pub fn decay_fit(points: &[(f64, f64)]) -> Result<DecayFitResult> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            found: points.len(),
        });
    }
    for (i, &(l, v)) in points.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveNorm { index: i, value: v });
        }
        if !(l > 0.0 && l.is_finite()) || (i > 0 && l <= points[i - 1].0) {
            return Err(Error::UnorderedLambda { index: i });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(DecayFitResult {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

/// Balls `F` around `x0'` and `E` around `y0'`, both of radius
/// `c0 lambda^{-beta}`, with `y0' = x0' + separation * radius * e_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessSpec {
    pub x0_prime: Vec<f64>,
    pub c0: f64,
    pub beta: f64,
    #[serde(default = "default_separation")]
    pub separation_factor: f64,
    pub lambda: f64,
}

fn default_separation() -> f64 {
    100.0
}

/// Subset of the target grid on which the output norm is measured.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    All,
    /// `|x - center| <= radius`.
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `|x' - center| <= radius` and `0 <= x_n <= height`.
    Cylinder {
        center: Vec<f64>,
        radius: f64,
        height: f64,
    },
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        let dist2 = |c: &[f64]| -> f64 { c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum() };
        match self {
            Region::All => true,
            Region::Ball { center, radius } => dist2(center) <= radius * radius,
            Region::Cylinder {
                center,
                radius,
                height,
            } => {
                let xn = x[center.len()];
                dist2(center) <= radius * radius && (0.0..=*height).contains(&xn)
            }
        }
    }
}

impl WitnessSpec {
    pub fn new(x0_prime: Vec<f64>, c0: f64, beta: f64, lambda: f64) -> Result<Self> {
        let w = Self {
            x0_prime,
            c0,
            beta,
            separation_factor: default_separation(),
            lambda,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x0_prime.is_empty() {
            return Err(invalid("x0_prime", "needs at least one coordinate"));
        }
        if !(self.c0 > 0.0) {
            return Err(invalid("c0", "must be > 0"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid("beta", "must lie in (0, 1]"));
        }
        if !(self.lambda > 0.0) {
            return Err(invalid("lambda", "must be > 0"));
        }
        if !(self.separation_factor >= 0.0) {
            return Err(invalid("separation_factor", "must be >= 0"));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        self.c0 * self.lambda.powf(-self.beta)
    }

    pub fn y0_prime(&self) -> Vec<f64> {
        let mut y = self.x0_prime.clone();
        y[0] += self.separation_factor * self.radius();
        y
    }

    pub fn region_f(&self) -> Region {
        Region::Ball {
            center: self.x0_prime.clone(),
            radius: self.radius(),
        }
    }

    pub fn region_f1(&self) -> Region {
        Region::Cylinder {
            center: self.x0_prime.clone(),
            radius: self.radius(),
            height: self.radius(),
        }
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.dim() != self.x0_prime.len() {
            return Err(Error::DimensionMismatch {
                what: "witness grid",
                expected: self.x0_prime.len(),
                found: grid.dim(),
            });
        }
        let r = self.radius();
        let y0 = self.y0_prime();
        for (a, c) in y0.iter().enumerate() {
            if c - r < grid.lo()[a] || c + r > grid.hi()[a] {
                return Err(Error::OutsideGrid {
                    what: "witness ball E",
                });
            }
        }
        let cells = r / grid.max_cell_width();
        if cells < 4.0 {
            return Err(Error::UnderResolved {
                what: "witness ball E",
                cells,
                required: 4.0,
            });
        }
        Ok(())
    }

    fn in_e(&self, y: &[f64]) -> bool {
        let r = self.radius();
        let y0 = self.y0_prime();
        y.iter().zip(&y0).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= r * r
    }
}

/// `f(y') = e^{-i lambda x0' . y'} 1_E(y')`.
pub fn witness_linear(w: &WitnessSpec, grid: &Grid) -> Result<GridFunction> {
    w.validate()?;
    w.check_grid(grid)?;
    Ok(GridFunction::from_fn(grid, |y| {
        if w.in_e(y) {
            let ph: f64 = w.x0_prime.iter().zip(y).map(|(a, b)| a * b).sum();
            Complex64::cis(-w.lambda * ph)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// `f = 1_E`, valid for the distance phase with `beta = 1 / gamma`.
pub fn witness_nonlinear(w: &WitnessSpec, gamma: f64, grid: &Grid) -> Result<GridFunction> {
    w.validate()?;
    if (w.beta - 1.0 / gamma).abs() > 1e-12 {
        return Err(invalid(
            "beta",
            format!("{} must equal 1/gamma = {}", w.beta, 1.0 / gamma),
        ));
    }
    w.check_grid(grid)?;
    Ok(GridFunction::from_fn(grid, |y| {
        Complex64::new(if w.in_e(y) { 1.0 } else { 0.0 }, 0.0)
    }))
}

/// `|T f|_{region} / |f|`.
pub fn witness_ratio(op: &DiscretizedOperator, f: &GridFunction, region: &Region) -> Result<f64> {
    let nf = f.norm();
    if nf == 0.0 {
        return Err(Error::Empty {
            what: "witness input",
        });
    }
    let out = apply_forward(op, f)?;
    let num = match region {
        Region::All => out.norm(),
        r => out.norm_where(|x| r.contains(x)),
    };
    Ok(num / nf)
}

/// Which witness construction a local setup uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// Linear phase, output on `R^{n-1}`, measured on `F`.
    LinearRestricted,
    /// Linear phase, output on `R^n`, measured on `F x [0, r]`.
    LinearFull,
    /// Distance phase, output on `R^n`, measured on `F x [0, r]`.
    Nonlinear,
}

/// Operator on grids covering only `E` and the measurement region, with
/// `phi_0 = 1` on both.
#[derive(Debug, Clone)]
pub struct WitnessSetup {
    pub operator: DiscretizedOperator,
    pub input: GridFunction,
    pub region: Region,
}

impl WitnessSetup {
    pub fn ratio(&self) -> Result<f64> {
        witness_ratio(&self.operator, &self.input, &self.region)
    }
}

pub fn witness_setup(
    w: &WitnessSpec,
    kind: WitnessKind,
    kernel: &KernelSpec,
    phase: PhaseSpec,
    cells_per_radius: usize,
) -> Result<WitnessSetup> {
    w.validate()?;
    if cells_per_radius < 4 {
        return Err(Error::UnderResolved {
            what: "witness grid",
            cells: cells_per_radius as f64,
            required: 4.0,
        });
    }
    let r = w.radius();
    let k = w.x0_prime.len();
    let y0 = w.y0_prime();
    let n_src = 2 * cells_per_radius + 2;
    let src_half = r * n_src as f64 / (2 * cells_per_radius) as f64;
    let source = Grid::new(
        y0.iter().map(|c| c - src_half).collect(),
        y0.iter().map(|c| c + src_half).collect(),
        n_src,
        false,
    )?;
    let restricted = kind == WitnessKind::LinearRestricted;
    let n_tgt = 2 * cells_per_radius;
    let mut lo: Vec<f64> = w.x0_prime.iter().map(|c| c - r).collect();
    let mut hi: Vec<f64> = w.x0_prime.iter().map(|c| c + r).collect();
    if !restricted {
        lo.push(0.0);
        hi.push(r);
    }
    let target = Grid::new(lo.clone(), hi.clone(), n_tgt, true)?;
    let margin = 0.25 * r;
    let cutoff0 = ProductCutoff {
        target: CutoffSpec::TensorBump(TensorBump::covering(&lo, &hi, margin)?),
        source: CutoffSpec::TensorBump(TensorBump::covering(source.lo(), source.hi(), margin)?),
    };
    let input = match kind {
        WitnessKind::Nonlinear => {
            let gamma = match phase {
                PhaseSpec::FractionalDistance { gamma } => gamma,
                PhaseSpec::Linear => {
                    return Err(invalid(
                        "phase",
                        "the nonlinear witness needs the distance phase",
                    ))
                }
            };
            witness_nonlinear(w, gamma, &source)?
        }
        _ => {
            if phase != PhaseSpec::Linear {
                return Err(invalid(
                    "phase",
                    "the linear witness needs the linear phase",
                ));
            }
            witness_linear(w, &source)?
        }
    };
    let operator = DiscretizedOperator::new(OperatorSpec {
        source,
        target,
        kernel: kernel.clone(),
        phase,
        cutoff0,
        geometry: Geometry::Flat { restricted },
        localization: Localization::Full,
        lambda: w.lambda,
    })?;
    if operator.target_grid().dim() != k + usize::from(!restricted) {
        return Err(invalid("witness", "inconsistent dimensions"));
    }
    let region = if restricted {
        w.region_f()
    } else {
        w.region_f1()
    };
    Ok(WitnessSetup {
        operator,
        input,
        region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::DenseOperator;
    use rand::Rng;

    #[test]
    fn power_on_diagonal_and_zero() {
        let d: Vec<Complex64> = [2.0, 1.0, 0.5, -1.5]
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        let op = DenseOperator::diagonal(&d);
        let e = opnorm_power(&op, 1e-14, 500, 1).unwrap();
        assert!((e.value - 2.0).abs() < 1e-10, "{e:?}");
        assert!(e.converged);
        let z = DenseOperator::new(3, 3, vec![Complex64::new(0.0, 0.0); 9]).unwrap();
        let e = opnorm_power(&z, 1e-4, 10, 1).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn power_matches_dense_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 64;
        let entries: Vec<Complex64> = (0..n * n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let op = DenseOperator::new(n, n, entries.clone()).unwrap();
        let m = nalgebra::DMatrix::from_row_slice(n, n, &entries);
        let ata = m.adjoint() * &m;
        let eig = ata.symmetric_eigen();
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max).sqrt();
        let e = opnorm_power(&op, 1e-10, 5000, 2).unwrap();
        assert!(((e.value - top) / top).abs() < 1e-3, "{} vs {top}", e.value);
        let again = opnorm_power(&op, 1e-10, 5000, 2).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let entries: Vec<Complex64> = (0..400)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0))
            .collect();
        let op = DenseOperator::new(20, 20, entries).unwrap();
        let e = opnorm_power(&op, 1e-15, 2, 1).unwrap();
        assert!(!e.converged);
        assert_eq!(e.iterations, 2);
        assert!(e.residual > 1e-15);
    }

    #[test]
    fn predicted_examples() {
        let p = |r, n, m| {
            predicted_exponent(r, ExponentParams::new(n, m))
                .unwrap()
                .exponent
        };
        assert!((p(Regime::FixedSurface, 2, 1.0) + 1.0 / 3.0).abs() < 1e-15);
        assert!((p(Regime::Maximal, 2, 1.0) + 0.25).abs() < 1e-15);
        let t = predicted_exponent(
            Regime::NonlinearPhase,
            ExponentParams::new(3, 1.0).with_gamma(2.0),
        )
        .unwrap();
        assert_eq!(
            t,
            Prediction {
                exponent: -0.75,
                log_factor: false
            }
        );
        assert_eq!(p(Regime::DistancePhase, 3, 1.0), -1.0);
        assert_eq!(p(Regime::QuadraticRestricted, 2, 0.5), -0.25);
        assert_eq!(p(Regime::QuadraticFull, 3, 1.0), -0.75);
        let b = predicted_exponent(Regime::QuadraticFull, ExponentParams::new(2, 0.5)).unwrap();
        assert_eq!(
            b,
            Prediction {
                exponent: -0.5,
                log_factor: true
            }
        );
        let s = predicted_exponent(
            Regime::NonlinearPhase,
            ExponentParams::new(2, 0.25).with_gamma(2.0),
        )
        .unwrap();
        assert_eq!(s.exponent, -0.375);
        assert!(predicted_exponent(Regime::FixedSurface, ExponentParams::new(2, 2.0)).is_err());
        assert!(
            predicted_exponent(Regime::Maximal, ExponentParams::new(2, 1.0).with_gamma(1.2))
                .is_err()
        );
        assert!(predicted_exponent(
            Regime::NonlinearPhase,
            ExponentParams::new(2, 0.25).with_gamma(1.0)
        )
        .is_err());
        let a = predicted_exponent(Regime::NearPart, ExponentParams::new(2, 1.0).with_beta(0.5))
            .unwrap();
        assert_eq!(a.exponent, -0.5);
    }

    #[test]
    fn fit_examples() {
        let lam = [8.0, 16.0, 32.0, 64.0];
        let pts: Vec<(f64, f64)> = lam.iter().map(|&l| (l, 1.0 / l)).collect();
        let f = decay_fit(&pts).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        let pts: Vec<(f64, f64)> = lam.iter().map(|&l| (l, 3.0)).collect();
        let f = decay_fit(&pts).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.r_squared, 1.0);
        assert_eq!(decay_fit(&pts[..2]), Err(Error::TooFewPoints { found: 2 }));
        let bad = [(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)];
        assert!(matches!(
            decay_fit(&bad),
            Err(Error::NonPositiveNorm { index: 1, .. })
        ));
        let unordered = [(1.0, 1.0), (3.0, 1.0), (2.0, 1.0)];
        assert!(matches!(
            decay_fit(&unordered),
            Err(Error::UnorderedLambda { index: 2 })
        ));
    }

    #[test]
    fn fit_noisy_synthetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let pts: Vec<(f64, f64)> = (0..5)
                .map(|i| {
                    let l = 8.0 * 2f64.powi(i);
                    (l, l.powf(-0.5) * (1.0 + rng.random_range(-0.01..0.01)))
                })
                .collect();
            let f = decay_fit(&pts).unwrap();
            assert!((f.slope + 0.5).abs() < 0.02);
        }
    }

    proptest::proptest! {
        #[test]
        fn fit_exact_on_power_laws(e in -3.0..1.0f64, c in 0.01..100.0f64, l0 in 1.0..10.0f64) {
            let pts: Vec<(f64, f64)> = (0..4).map(|i| {
                let l = l0 * 2f64.powi(i);
                (l, c * l.powf(e))
            }).collect();
            let f = decay_fit(&pts).unwrap();
            proptest::prop_assert!((f.slope - e).abs() < 1e-12);
        }
    }

    #[test]
    fn witness_geometry() {
        let w = WitnessSpec::new(vec![0.0], 0.05, 0.5, 64.0).unwrap();
        let r = w.radius();
        assert!((r - 0.05 / 8.0).abs() < 1e-16);
        assert!(((w.y0_prime()[0] - w.x0_prime[0]) / r - 100.0).abs() < 1e-12);
        let y0 = w.y0_prime()[0];
        let grid = Grid::new(vec![y0 - 2.0 * r], vec![y0 + 2.0 * r], 64, false).unwrap();
        let f = witness_linear(&w, &grid).unwrap();
        for (y, v) in grid.nodes().zip(f.values()) {
            let m = v.norm();
            assert!(m == 0.0 || (m - 1.0).abs() < 1e-15);
            if (y[0] - y0).abs() > r {
                assert_eq!(m, 0.0);
            }
        }
        // 16 cells per radius; the discrete ball length is within 10% of 2r.
        assert!((f.norm_sq() - 2.0 * r).abs() < 0.1 * 2.0 * r);
        let coarse = Grid::new(vec![y0 - 2.0 * r], vec![y0 + 2.0 * r], 8, false).unwrap();
        assert!(matches!(
            witness_linear(&w, &coarse),
            Err(Error::UnderResolved { .. })
        ));
        let away = Grid::new(vec![-1.0], vec![0.0], 64, false).unwrap();
        assert!(matches!(
            witness_linear(&w, &away),
            Err(Error::OutsideGrid { .. })
        ));
    }

    #[test]
    fn nonlinear_witness_rules() {
        let w = WitnessSpec::new(vec![0.0, 0.0], 0.05, 0.5, 64.0).unwrap();
        assert!((w.radius() - 0.05 / 8.0).abs() < 1e-16);
        let y0 = w.y0_prime();
        let r = w.radius();
        let grid = Grid::new(
            vec![y0[0] - 1.5 * r, -1.5 * r],
            vec![y0[0] + 1.5 * r, 1.5 * r],
            48,
            false,
        )
        .unwrap();
        let f = witness_nonlinear(&w, 2.0, &grid).unwrap();
        assert!(f.values().iter().all(|v| v.re == 0.0 || v.re == 1.0));
        assert!(witness_nonlinear(&w, 3.0, &grid).is_err());
        // Ball area within 10%.
        assert!(
            (f.norm_sq() - std::f64::consts::PI * r * r).abs() < 0.1 * std::f64::consts::PI * r * r
        );
    }

    #[test]
    fn witness_setups_build() {
        let kernel = KernelSpec::flat_setting(2, 0.5).unwrap();
        let w = WitnessSpec::new(vec![0.0], 0.05, 0.5, 32.0).unwrap();
        for kind in [WitnessKind::LinearRestricted, WitnessKind::LinearFull] {
            let s = witness_setup(&w, kind, &kernel, PhaseSpec::Linear, 8).unwrap();
            let r = s.ratio().unwrap();
            assert!(r > 0.0 && r.is_finite());
        }
        let s = witness_setup(
            &w,
            WitnessKind::Nonlinear,
            &kernel,
            PhaseSpec::fractional(2.0).unwrap(),
            8,
        )
        .unwrap();
        assert!(s.ratio().unwrap() > 0.0);
        assert!(witness_setup(&w, WitnessKind::Nonlinear, &kernel, PhaseSpec::Linear, 8).is_err());
    }

    #[test]
    fn ratio_homogeneous_and_bounded() {
        let kernel = KernelSpec::flat_setting(2, 0.5).unwrap();
        let w = WitnessSpec::new(vec![0.0], 0.05, 0.5, 16.0).unwrap();
        let s = witness_setup(&w, WitnessKind::LinearFull, &kernel, PhaseSpec::Linear, 6).unwrap();
        let r = s.ratio().unwrap();
        let scaled = s.input.scaled(Complex64::new(-3.0, 2.0));
        let r2 = witness_ratio(&s.operator, &scaled, &s.region).unwrap();
        assert!((r - r2).abs() <= 1e-12 * r);
        let full = witness_ratio(&s.operator, &s.input, &Region::All).unwrap();
        assert!(r <= full + 1e-15);
        let norm = opnorm_power(&s.operator, 1e-10, 2000, 1).unwrap();
        assert!(full <= norm.value + 1e-6);
        assert!(witness_ratio(
            &s.operator,
            &GridFunction::zeros(s.operator.source_grid()),
            &Region::All
        )
        .is_err());
    }

    struct Identity(Grid);
    impl SublinearMap for Identity {
        fn source_grid(&self) -> &Grid {
            &self.0
        }
        fn lambda(&self) -> f64 {
            0.0
        }
        fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
            Ok(f.clone())
        }
    }

    struct Zero(Grid);
    impl SublinearMap for Zero {
        fn source_grid(&self) -> &Grid {
            &self.0
        }
        fn lambda(&self) -> f64 {
            0.0
        }
        fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
            Ok(GridFunction::zeros(f.grid()))
        }
    }

    #[test]
    fn lower_bound_examples() {
        let g = Grid::cube(2, 0.0, 1.0, 8, false).unwrap();
        let (e, _) = opnorm_lower_random(&Identity(g.clone()), 3, 1, &[]).unwrap();
        assert!(e.value >= 1.0 - 1e-12);
        let (e, _) = opnorm_lower_random(&Zero(g), 3, 1, &[]).unwrap();
        assert_eq!(e.value, 0.0);
        let kernel = KernelSpec::flat_setting(2, 0.5).unwrap();
        let w = WitnessSpec::new(vec![0.0], 0.05, 0.5, 16.0).unwrap();
        let s = witness_setup(&w, WitnessKind::LinearFull, &kernel, PhaseSpec::Linear, 6).unwrap();
        let upper = opnorm_power(&s.operator, 1e-10, 2000, 3).unwrap();
        let (low, _) = opnorm_lower_random(&s.operator, 10, 4, &[s.input.clone()]).unwrap();
        assert!(low.value <= upper.value + 1e-6);
    }
}

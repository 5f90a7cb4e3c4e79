//! Graph hypersurfaces `{(y, psi(y))}`, their area weights, the oscillating
//! family `eps^gamma psi(y / eps)`, and the reflection taking `e3` to a plane
//! normal.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Closed-form profile of a single surface term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Zero,
    /// `amplitude * prod_i sin(frequency_i * y_i)`
    SineProduct {
        amplitude: f64,
        frequency: Vec<f64>,
    },
    /// `amplitude * exp(-|y|^2 / (2 width^2))`
    GaussianBump {
        amplitude: f64,
        width: f64,
    },
}

impl Shape {
    fn height(&self, y: &[f64]) -> f64 {
        match self {
            Shape::Zero => 0.0,
            Shape::SineProduct {
                amplitude,
                frequency,
            } => {
                amplitude
                    * frequency
                        .iter()
                        .zip(y)
                        .map(|(f, t)| (f * t).sin())
                        .product::<f64>()
            }
            Shape::GaussianBump { amplitude, width } => {
                amplitude * (-norm_sq(y) / (2.0 * width * width)).exp()
            }
        }
    }

    fn gradient_into(&self, y: &[f64], out: &mut [f64]) {
        match self {
            Shape::Zero => out.iter_mut().for_each(|g| *g = 0.0),
            Shape::SineProduct {
                amplitude,
                frequency,
            } => {
                for k in 0..out.len() {
                    let mut v = amplitude * frequency[k] * (frequency[k] * y[k]).cos();
                    for i in (0..out.len()).filter(|&i| i != k) {
                        v *= (frequency[i] * y[i]).sin();
                    }
                    out[k] = v;
                }
            }
            Shape::GaussianBump { amplitude, width } => {
                let w2 = width * width;
                let h = amplitude * (-norm_sq(y) / (2.0 * w2)).exp();
                for (g, t) in out.iter_mut().zip(y) {
                    *g = -h * t / w2;
                }
            }
        }
    }

    fn is_null(&self) -> bool {
        match self {
            Shape::Zero => true,
            Shape::SineProduct {
                amplitude,
                frequency,
            } => *amplitude == 0.0 || frequency.iter().any(|f| *f == 0.0),
            Shape::GaussianBump { amplitude, .. } => *amplitude == 0.0,
        }
    }

    fn sup_height(&self) -> f64 {
        if self.is_null() {
            return 0.0;
        }
        match self {
            Shape::Zero => 0.0,
            Shape::SineProduct { amplitude, .. } | Shape::GaussianBump { amplitude, .. } => {
                amplitude.abs()
            }
        }
    }

    fn sup_gradient(&self) -> f64 {
        if self.is_null() {
            return 0.0;
        }
        match self {
            Shape::Zero => 0.0,
            // |grad|^2 is multilinear in cos^2(f_i y_i); its max sits at a
            // vertex with a single cosine equal to one.
            Shape::SineProduct {
                amplitude,
                frequency,
            } => amplitude.abs() * frequency.iter().fold(0.0_f64, |m, f| m.max(f.abs())),
            Shape::GaussianBump { amplitude, width } => amplitude.abs() / width * (-0.5_f64).exp(),
        }
    }

    /// Largest absolute Hessian entry.
    fn sup_hessian(&self) -> f64 {
        if self.is_null() {
            return 0.0;
        }
        match self {
            Shape::Zero => 0.0,
            Shape::SineProduct {
                amplitude,
                frequency,
            } => amplitude.abs() * frequency.iter().fold(0.0_f64, |m, f| m.max(f * f)),
            Shape::GaussianBump { amplitude, width } => amplitude.abs() / (width * width),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Shape::Zero => Ok(()),
            Shape::SineProduct {
                amplitude,
                frequency,
            } => {
                if frequency.len() != dim {
                    return Err(Error::DimensionMismatch {
                        what: "sine product frequencies",
                        expected: dim,
                        found: frequency.len(),
                    });
                }
                if !amplitude.is_finite() || frequency.iter().any(|f| !f.is_finite()) {
                    return Err(invalid("sine_product", "non-finite parameter"));
                }
                Ok(())
            }
            Shape::GaussianBump { amplitude, width } => {
                if !amplitude.is_finite() || !(*width > 0.0 && width.is_finite()) {
                    return Err(invalid(
                        "gaussian_bump",
                        "need finite amplitude and width > 0",
                    ));
                }
                Ok(())
            }
        }
    }
}

/// One additive term `height_scale * shape(y / length_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTerm {
    pub shape: Shape,
    #[serde(default = "one")]
    pub height_scale: f64,
    #[serde(default = "one")]
    pub length_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Graph hypersurface over `R^n` given as a sum of closed-form terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSurface", into = "RawSurface")]
pub struct SurfaceSpec {
    dim_base: usize,
    terms: Vec<SurfaceTerm>,
}

#[derive(Serialize, Deserialize)]
struct RawSurface {
    dim_base: usize,
    terms: Vec<SurfaceTerm>,
}

impl TryFrom<RawSurface> for SurfaceSpec {
    type Error = Error;
    fn try_from(raw: RawSurface) -> Result<Self> {
        SurfaceSpec::from_terms(raw.dim_base, raw.terms)
    }
}

impl From<SurfaceSpec> for RawSurface {
    fn from(s: SurfaceSpec) -> Self {
        RawSurface {
            dim_base: s.dim_base,
            terms: s.terms,
        }
    }
}

impl SurfaceSpec {
    pub fn from_terms(dim_base: usize, terms: Vec<SurfaceTerm>) -> Result<Self> {
        if dim_base == 0 {
            return Err(invalid("dim_base", "must be at least 1"));
        }
        for t in &terms {
            t.shape.validate(dim_base)?;
            if !(t.height_scale.is_finite() && t.length_scale > 0.0 && t.length_scale.is_finite()) {
                return Err(invalid(
                    "surface term",
                    "scales must be finite, length_scale > 0",
                ));
            }
        }
        Ok(Self { dim_base, terms })
    }

    pub fn new(dim_base: usize, shape: Shape) -> Result<Self> {
        Self::from_terms(
            dim_base,
            vec![SurfaceTerm {
                shape,
                height_scale: 1.0,
                length_scale: 1.0,
            }],
        )
    }

    pub fn zero(dim_base: usize) -> Result<Self> {
        Self::new(dim_base, Shape::Zero)
    }

    pub fn sine_product(amplitude: f64, frequency: Vec<f64>) -> Result<Self> {
        Self::new(
            frequency.len(),
            Shape::SineProduct {
                amplitude,
                frequency,
            },
        )
    }

    pub fn gaussian_bump(dim_base: usize, amplitude: f64, width: f64) -> Result<Self> {
        Self::new(dim_base, Shape::GaussianBump { amplitude, width })
    }

    /// Additive composition `psi_0 + psi_1`, the perturbed surface of a fixed
    /// base.
    pub fn sum(base: &SurfaceSpec, perturbation: &SurfaceSpec) -> Result<Self> {
        if base.dim_base != perturbation.dim_base {
            return Err(Error::DimensionMismatch {
                what: "surface sum",
                expected: base.dim_base,
                found: perturbation.dim_base,
            });
        }
        let mut terms = base.terms.clone();
        terms.extend(perturbation.terms.iter().cloned());
        Ok(Self {
            dim_base: base.dim_base,
            terms,
        })
    }

    pub fn dim_base(&self) -> usize {
        self.dim_base
    }

    pub fn terms(&self) -> &[SurfaceTerm] {
        &self.terms
    }

    pub fn is_flat(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.shape.is_null() || t.height_scale == 0.0)
    }

    /// `||psi||_inf`; exact for a single term, a triangle-inequality bound for sums.
    pub fn sup_height(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.height_scale.abs() * t.shape.sup_height())
            .sum()
    }

    /// `||grad psi||_inf`; exact for a single term, a bound for sums.
    pub fn sup_gradient(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.height_scale.abs() / t.length_scale * t.shape.sup_gradient())
            .sum()
    }

    /// Largest absolute Hessian entry (bound for sums).
    pub fn sup_hessian(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.height_scale.abs() / (t.length_scale * t.length_scale) * t.shape.sup_hessian()
            })
            .sum()
    }

    fn check_point(&self, y: &[f64]) {
        assert_eq!(y.len(), self.dim_base, "surface point has wrong dimension");
    }
}

pub fn surface_height(spec: &SurfaceSpec, y: &[f64]) -> f64 {
    spec.check_point(y);
    let mut scaled = vec![0.0; y.len()];
    spec.terms
        .iter()
        .map(|t| {
            for (s, v) in scaled.iter_mut().zip(y) {
                *s = v / t.length_scale;
            }
            t.height_scale * t.shape.height(&scaled)
        })
        .sum()
}

pub fn surface_gradient(spec: &SurfaceSpec, y: &[f64]) -> Vec<f64> {
    spec.check_point(y);
    let n = y.len();
    let mut grad = vec![0.0; n];
    let mut scaled = vec![0.0; n];
    let mut part = vec![0.0; n];
    for t in &spec.terms {
        for (s, v) in scaled.iter_mut().zip(y) {
            *s = v / t.length_scale;
        }
        t.shape.gradient_into(&scaled, &mut part);
        let c = t.height_scale / t.length_scale;
        for (g, p) in grad.iter_mut().zip(&part) {
            *g += c * p;
        }
    }
    grad
}

/// Area density `(1 + |grad psi|^2)^{1/2}` of the graph over `y`.
pub fn measure_weight(spec: &SurfaceSpec, y: &[f64]) -> f64 {
    (1.0 + norm_sq(&surface_gradient(spec, y))).sqrt()
}

/// Parameters of the oscillating family `eps^gamma psi(y / eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOsc")]
pub struct OscillationParams {
    epsilon: f64,
    gamma_osc: f64,
}

#[derive(Deserialize)]
struct RawOsc {
    epsilon: f64,
    gamma_osc: f64,
}

impl TryFrom<RawOsc> for OscillationParams {
    type Error = Error;
    fn try_from(r: RawOsc) -> Result<Self> {
        OscillationParams::new(r.epsilon, r.gamma_osc)
    }
}

impl OscillationParams {
    pub fn new(epsilon: f64, gamma_osc: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid("epsilon", format!("{epsilon} is not in (0, 1]")));
        }
        if !(gamma_osc > 1.5 && gamma_osc.is_finite()) {
            return Err(invalid("gamma_osc", format!("{gamma_osc} must exceed 3/2")));
        }
        Ok(Self { epsilon, gamma_osc })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma_osc(&self) -> f64 {
        self.gamma_osc
    }
}

/// Replace `psi` by `eps^gamma psi(y / eps)`.
pub fn oscillate(spec: &SurfaceSpec, p: OscillationParams) -> SurfaceSpec {
    let amp = p.epsilon.powf(p.gamma_osc);
    SurfaceSpec {
        dim_base: spec.dim_base,
        terms: spec
            .terms
            .iter()
            .map(|t| SurfaceTerm {
                shape: t.shape.clone(),
                height_scale: t.height_scale * amp,
                length_scale: t.length_scale * p.epsilon,
            })
            .collect(),
    }
}

/// Orthogonal 3x3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthMatrix {
    entries: [[f64; 3]; 3],
}

impl OrthMatrix {
    pub fn identity() -> Self {
        Self {
            entries: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.entries
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.entries;
        [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
    }

    pub fn apply_transpose(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.entries;
        [0, 1, 2].map(|c| m[0][c] * v[0] + m[1][c] * v[1] + m[2][c] * v[2])
    }

    /// `max_ij |(M^T M - I)_ij|`
    pub fn orthogonality_defect(&self) -> f64 {
        let m = &self.entries;
        let mut worst = 0.0_f64;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

const UNIT_TOL: f64 = 1e-12;

/// Orthogonal `M` with `M e3 = nu`: the identity for `nu = e3`, otherwise the
/// Householder reflection along `w = e3 - nu`.
pub fn householder_to_normal(nu: [f64; 3]) -> Result<OrthMatrix> {
    let len = norm_sq(&nu).sqrt();
    if !((len - 1.0).abs() <= UNIT_TOL) {
        return Err(invalid(
            "nu",
            format!("normal must be a unit vector, |nu| = {len}"),
        ));
    }
    let w = [-nu[0], -nu[1], 1.0 - nu[2]];
    let ww = norm_sq(&w);
    if ww == 0.0 {
        return Ok(OrthMatrix::identity());
    }
    let mut entries = [[0.0; 3]; 3];
    for (i, row) in entries.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            let delta = if i == j { 1.0 } else { 0.0 };
            *e = delta - 2.0 * w[i] * w[j] / ww;
        }
    }
    Ok(OrthMatrix { entries })
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn fd_gradient(spec: &SurfaceSpec, y: &[f64], h: f64) -> Vec<f64> {
        (0..y.len())
            .map(|k| {
                let mut p = y.to_vec();
                let mut m = y.to_vec();
                p[k] += h;
                m[k] -= h;
                (surface_height(spec, &p) - surface_height(spec, &m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn height_examples() {
        let z = SurfaceSpec::zero(2).unwrap();
        assert_eq!(surface_height(&z, &[0.3, -1.0]), 0.0);
        let s = SurfaceSpec::sine_product(1.0, vec![1.0, 1.0]).unwrap();
        assert!((surface_height(&s, &[FRAC_PI_2, FRAC_PI_2]) - 1.0).abs() < 1e-15);
        let g = SurfaceSpec::gaussian_bump(2, 2.0, 1.0).unwrap();
        assert_eq!(surface_height(&g, &[0.0, 0.0]), 2.0);
    }

    #[test]
    fn gradient_examples() {
        let z = SurfaceSpec::zero(3).unwrap();
        assert_eq!(surface_gradient(&z, &[1.0, 2.0, 3.0]), vec![0.0; 3]);
        let s = SurfaceSpec::sine_product(1.0, vec![1.0]).unwrap();
        assert_eq!(surface_gradient(&s, &[0.0]), vec![1.0]);
    }

    #[test]
    fn measure_weight_examples() {
        let z = SurfaceSpec::zero(2).unwrap();
        assert_eq!(measure_weight(&z, &[0.4, 0.1]), 1.0);
        let s = SurfaceSpec::sine_product(1.0, vec![1.0]).unwrap();
        assert!((measure_weight(&s, &[0.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn oscillate_examples() {
        let s = SurfaceSpec::sine_product(1.0, vec![1.0]).unwrap();
        let same = oscillate(&s, OscillationParams::new(1.0, 2.0).unwrap());
        for y in [-2.0, -0.3, 0.0, 0.7, 3.1] {
            assert_eq!(surface_height(&same, &[y]), surface_height(&s, &[y]));
            assert_eq!(surface_gradient(&same, &[y]), surface_gradient(&s, &[y]));
        }
        let half = oscillate(&s, OscillationParams::new(0.5, 2.0).unwrap());
        assert!(surface_height(&half, &[FRAC_PI_2]).abs() < 1e-16);
        assert!((half.sup_height() - 0.25).abs() < 1e-15);
        assert!((half.sup_gradient() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn oscillation_params_reject_out_of_range() {
        assert!(OscillationParams::new(0.0, 2.0).is_err());
        assert!(OscillationParams::new(1.5, 2.0).is_err());
        assert!(OscillationParams::new(0.5, 1.5).is_err());
        assert!(OscillationParams::new(1.0, 1.6).is_ok());
    }

    #[test]
    fn sup_norms_dominate_samples() {
        let specs = [
            SurfaceSpec::sine_product(0.7, vec![2.0, -3.0]).unwrap(),
            SurfaceSpec::gaussian_bump(2, -1.3, 0.4).unwrap(),
        ];
        for spec in &specs {
            let mut max_h = 0.0_f64;
            let mut max_g = 0.0_f64;
            for i in 0..200 {
                for j in 0..200 {
                    let y = [-2.0 + 0.02 * i as f64, -2.0 + 0.02 * j as f64];
                    max_h = max_h.max(surface_height(spec, &y).abs());
                    max_g = max_g.max(norm_sq(&surface_gradient(spec, &y)).sqrt());
                }
            }
            assert!(max_h <= spec.sup_height() + 1e-12);
            assert!(max_g <= spec.sup_gradient() + 1e-12);
            assert!(max_h > 0.97 * spec.sup_height());
            assert!(max_g > 0.97 * spec.sup_gradient());
        }
    }

    #[test]
    fn perturbed_surface_adds_heights() {
        let base = SurfaceSpec::gaussian_bump(1, 1.0, 0.5).unwrap();
        let wiggle = oscillate(
            &SurfaceSpec::sine_product(1.0, vec![1.0]).unwrap(),
            OscillationParams::new(0.25, 2.0).unwrap(),
        );
        let sum = SurfaceSpec::sum(&base, &wiggle).unwrap();
        for y in [-0.4, 0.1, 0.9] {
            let want = surface_height(&base, &[y]) + surface_height(&wiggle, &[y]);
            assert!((surface_height(&sum, &[y]) - want).abs() < 1e-15);
        }
        assert!(SurfaceSpec::sum(&base, &SurfaceSpec::zero(2).unwrap()).is_err());
    }

    #[test]
    fn householder_examples() {
        let id = householder_to_normal([0.0, 0.0, 1.0]).unwrap();
        assert_eq!(id, OrthMatrix::identity());
        let flip = householder_to_normal([0.0, 0.0, -1.0]).unwrap();
        assert_eq!(
            flip.entries(),
            &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]
        );
        let m = householder_to_normal([1.0, 0.0, 0.0]).unwrap();
        let e3 = m.apply([0.0, 0.0, 1.0]);
        assert!((e3[0] - 1.0).abs() < 1e-14 && e3[1].abs() < 1e-14 && e3[2].abs() < 1e-14);
        assert!(m.orthogonality_defect() < 1e-14);
        assert!(householder_to_normal([1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn serde_rejects_bad_surface() {
        let bad = r#"{"dim_base":2,"terms":[{"shape":{"kind":"sine_product","amplitude":1,"frequency":[1]}}]}"#;
        assert!(serde_json::from_str::<SurfaceSpec>(bad).is_err());
        let good = r#"{"dim_base":1,"terms":[{"shape":{"kind":"sine_product","amplitude":1,"frequency":[1]}}]}"#;
        let spec: SurfaceSpec = serde_json::from_str(good).unwrap();
        assert_eq!(spec, SurfaceSpec::sine_product(1.0, vec![1.0]).unwrap());
    }

    fn arb_spec() -> impl Strategy<Value = SurfaceSpec> {
        prop_oneof![
            (-2.0..2.0f64, -3.0..3.0f64, -3.0..3.0f64)
                .prop_map(|(a, f1, f2)| SurfaceSpec::sine_product(a, vec![f1, f2]).unwrap()),
            (-2.0..2.0f64, 0.3..2.0f64)
                .prop_map(|(a, w)| SurfaceSpec::gaussian_bump(2, a, w).unwrap()),
            Just(SurfaceSpec::zero(2).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gradient_matches_finite_differences(spec in arb_spec(), y1 in -PI..PI, y2 in -PI..PI) {
            let y = [y1, y2];
            let g = surface_gradient(&spec, &y);
            let fd = fd_gradient(&spec, &y, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }

        #[test]
        fn oscillated_gradient_matches_finite_differences(
            spec in arb_spec(), eps in 0.2..1.0f64, gamma in 1.6..3.0f64, y1 in -1.0..1.0f64, y2 in -1.0..1.0f64,
        ) {
            let osc = oscillate(&spec, OscillationParams::new(eps, gamma).unwrap());
            let y = [y1, y2];
            let g = surface_gradient(&osc, &y);
            let fd = fd_gradient(&osc, &y, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }

        #[test]
        fn weight_identity(spec in arb_spec(), y1 in -3.0..3.0f64, y2 in -3.0..3.0f64) {
            let y = [y1, y2];
            let w = measure_weight(&spec, &y);
            prop_assert!(w >= 1.0);
            let g2 = norm_sq(&surface_gradient(&spec, &y));
            prop_assert!((w * w - g2 - 1.0).abs() < 1e-12 * (1.0 + g2));
        }

        #[test]
        fn householder_is_orthogonal(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64) {
            let len = (a * a + b * b + c * c).sqrt();
            prop_assume!(len > 1e-3);
            let nu = [a / len, b / len, c / len];
            let m = householder_to_normal(nu).unwrap();
            prop_assert!(m.orthogonality_defect() < 1e-12);
            let e3 = m.apply([0.0, 0.0, 1.0]);
            let err = ((e3[0] - nu[0]).powi(2) + (e3[1] - nu[1]).powi(2) + (e3[2] - nu[2]).powi(2)).sqrt();
            prop_assert!(err < 1e-12);
        }
    }
}

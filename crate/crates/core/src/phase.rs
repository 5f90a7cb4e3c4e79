//! Phase functions and the mixed-Hessian nondegeneracy of the fractional
//! distance phase `|x - (y', 0)|^gamma`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseSpec {
    /// `x . y`, with the shorter argument padded by zeros.
    Linear,
    /// `|x - (y', 0)|^gamma`.
    FractionalDistance { gamma: f64 },
}

impl PhaseSpec {
    pub fn fractional(gamma: f64) -> Result<Self> {
        let p = PhaseSpec::FractionalDistance { gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PhaseSpec::Linear => Ok(()),
            PhaseSpec::FractionalDistance { gamma } if gamma >= 1.0 && gamma.is_finite() => Ok(()),
            PhaseSpec::FractionalDistance { gamma } => {
                Err(invalid("gamma", format!("{gamma} must be >= 1")))
            }
        }
    }
}

/// `d^gamma` for a squared distance `d2`.
#[inline]
pub(crate) fn distance_power(d2: f64, gamma: f64) -> f64 {
    if gamma == 2.0 {
        d2
    } else if gamma == 1.0 {
        d2.sqrt()
    } else {
        d2.powf(0.5 * gamma)
    }
}

pub fn phase_eval(p: &PhaseSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    p.validate()?;
    match *p {
        PhaseSpec::Linear => Ok(x.iter().zip(y).map(|(a, b)| a * b).sum()),
        PhaseSpec::FractionalDistance { gamma } => {
            if y.len() > x.len() {
                return Err(Error::DimensionMismatch {
                    what: "phase source point",
                    expected: x.len(),
                    found: y.len(),
                });
            }
            let d2: f64 = x
                .iter()
                .enumerate()
                .map(|(i, xi)| {
                    let d = xi - y.get(i).copied().unwrap_or(0.0);
                    d * d
                })
                .sum();
            if d2 == 0.0 && gamma < 2.0 {
                return Err(Error::Singular {
                    what: "fractional distance phase gradient",
                });
            }
            Ok(distance_power(d2, gamma))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianReport {
    pub det: f64,
    pub distance: f64,
    pub direction: Vec<f64>,
    pub gamma: f64,
    /// `-gamma d^{gamma - 2}`, the scalar multiplying the determinant's matrix.
    pub prefactor: f64,
}

/// Mixed Hessian determinant of `|xi - (y', 0)|^gamma` in `(y', xi')` at
/// `y' = x_prime`, normalized by its prefactor.
pub fn mixed_hessian_det(gamma: f64, x_prime: &[f64], xi: &[f64]) -> Result<HessianReport> {
    if xi.len() != x_prime.len() + 1 {
        return Err(Error::DimensionMismatch {
            what: "hessian point",
            expected: x_prime.len() + 1,
            found: xi.len(),
        });
    }
    let k = x_prime.len();
    let tangential: f64 = (0..k).map(|i| (xi[i] - x_prime[i]).powi(2)).sum();
    let normal = xi[k] * xi[k];
    let d2 = tangential + normal;
    if d2 == 0.0 {
        return Err(Error::Singular {
            what: "mixed hessian",
        });
    }
    let d = d2.sqrt();
    let a: Vec<f64> = (0..k).map(|i| (x_prime[i] - xi[i]) / d).collect();
    let a2: f64 = a.iter().map(|v| v * v).sum();
    let rank_one = 1.0 + (gamma - 2.0) * a2;
    let ratio = ((gamma - 1.0) * tangential + normal) / d2;
    if (rank_one - ratio).abs() > 1e-12 * rank_one.abs().max(1.0) {
        return Err(Error::Inconsistent {
            first: rank_one,
            second: ratio,
        });
    }
    Ok(HessianReport {
        det: rank_one,
        distance: d,
        direction: a,
        gamma,
        prefactor: -gamma * d.powf(gamma - 2.0),
    })
}

/// Determinant by LU with partial pivoting, for small dense matrices.
pub(crate) fn lu_det(mut m: Vec<f64>, k: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..k {
        let piv = (c..k)
            .max_by(|&i, &j| m[i * k + c].abs().total_cmp(&m[j * k + c].abs()))
            .unwrap();
        if m[piv * k + c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for j in 0..k {
                m.swap(c * k + j, piv * k + j);
            }
            det = -det;
        }
        let p = m[c * k + c];
        det *= p;
        for i in c + 1..k {
            let f = m[i * k + c] / p;
            for j in c..k {
                m[i * k + j] -= f * m[c * k + j];
            }
        }
    }
    det
}

/// `det(I + (gamma - 2) a a^T)` computed directly and by the rank-one formula.
pub fn sylvester_check(a: &[f64], gamma: f64) -> Result<(f64, f64)> {
    let k = a.len();
    if k > 8 {
        return Err(invalid("a", format!("length {k} exceeds 8")));
    }
    if k == 0 {
        return Ok((1.0, 1.0));
    }
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            m[i * k + j] = (gamma - 2.0) * a[i] * a[j] + if i == j { 1.0 } else { 0.0 };
        }
    }
    let direct = lu_det(m, k);
    let rank_one = 1.0 + (gamma - 2.0) * a.iter().map(|v| v * v).sum::<f64>();
    Ok((direct, rank_one))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NondegeneracyReport {
    pub min_det: f64,
    pub analytic_lower_bound: f64,
    pub samples: usize,
}

/// Random configurations with `1/2 <= d <= 2` in `R^n`, `n = dim`, and
/// `|xi_n| >= c1` when `gamma = 1`.
pub fn nondegeneracy_scan(
    gamma: f64,
    c1: f64,
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<NondegeneracyReport> {
    if samples == 0 {
        return Err(invalid("samples", "must be at least 1"));
    }
    if dim < 2 {
        return Err(invalid("dim", "need n >= 2"));
    }
    if gamma < 1.0 {
        return Err(invalid("gamma", format!("{gamma} must be >= 1")));
    }
    let degenerate_case = gamma == 1.0;
    if degenerate_case && !(c1 > 0.0 && c1 <= 0.5) {
        return Err(invalid("c1", "gamma = 1 needs 0 < c1 <= 1/2"));
    }
    let k = dim - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_prime = vec![0.0; k];
    let mut min_det = f64::INFINITY;
    for _ in 0..samples {
        let d = rng.random_range(0.5..=2.0);
        let xi_n = if degenerate_case {
            let mag = rng.random_range(c1..=d);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        } else {
            rng.random_range(-d..=d)
        };
        let rest = (d * d - xi_n * xi_n).max(0.0).sqrt();
        let mut dir: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len < 1e-9 {
            dir = vec![0.0; k];
            dir[0] = 1.0;
        } else {
            dir.iter_mut().for_each(|v| *v /= len);
        }
        let mut xi: Vec<f64> = dir.iter().map(|v| v * rest).collect();
        xi.push(xi_n);
        let rep = mixed_hessian_det(gamma, &x_prime, &xi)?;
        min_det = min_det.min(rep.det);
    }
    let analytic_lower_bound = if degenerate_case {
        c1 * c1 / 4.0
    } else {
        (gamma - 1.0).min(1.0)
    };
    Ok(NondegeneracyReport {
        min_det,
        analytic_lower_bound,
        samples,
    })
}

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Discrete operator between two weighted `l^2` spaces with uniform weights.
/// `adjoint` must be the adjoint for `<u, v> = w sum u_j conj(v_j)`.
pub trait LinearOperator: Sync {
    fn source_len(&self) -> usize;
    fn target_len(&self) -> usize;
    fn source_weight(&self) -> f64;
    fn target_weight(&self) -> f64;
    fn forward(&self, f: &[Complex64]) -> Result<Vec<Complex64>>;
    fn adjoint(&self, g: &[Complex64]) -> Result<Vec<Complex64>>;
    fn lambda(&self) -> f64 {
        0.0
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, v: &[Complex64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// Explicit row-major matrix acting as `(Af)_i = sum_j a_ij f_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
    source_weight: f64,
    target_weight: f64,
}

impl DenseOperator {
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "dense operator",
                expected: rows * cols,
                found: entries.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            entries,
            source_weight: 1.0,
            target_weight: 1.0,
        })
    }

    pub fn diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for (i, d) in diag.iter().enumerate() {
            entries[i * n + i] = *d;
        }
        Self::new(n, n, entries).unwrap()
    }

    pub fn with_weights(mut self, source: f64, target: f64) -> Self {
        self.source_weight = source;
        self.target_weight = target;
        self
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

impl LinearOperator for DenseOperator {
    fn source_len(&self) -> usize {
        self.cols
    }

    fn target_len(&self) -> usize {
        self.rows
    }

    fn source_weight(&self) -> f64 {
        self.source_weight
    }

    fn target_weight(&self) -> f64 {
        self.target_weight
    }

    fn forward(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len("dense forward input", self.cols, f)?;
        Ok(self
            .entries
            .chunks(self.cols)
            .map(|row| row.iter().zip(f).map(|(a, x)| a * x).sum())
            .collect())
    }

    fn adjoint(&self, g: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len("dense adjoint input", self.rows, g)?;
        let scale = self.target_weight / self.source_weight;
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (j, o) in out.iter_mut().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..self.rows {
                s += self.entries[i * self.cols + j].conj() * g[i];
            }
            *o = s * scale;
        }
        Ok(out)
    }
}

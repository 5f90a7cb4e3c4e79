//! Convolution form of operators whose kernel depends only on the difference
//! of the matched coordinates. The linear phase is split into two chirps and
//! a difference term, `x y = (x^2 + y^2 - (x - y)^2) / 2`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

pub(super) struct ToeplitzPlan {
    k: usize,
    ns: usize,
    nt: usize,
    /// Target slices along the unmatched axis, 1 when there is none.
    slices: usize,
    lens: Vec<usize>,
    total: usize,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    kernel_hat: Vec<Vec<Complex64>>,
    src_chirp: Option<Vec<Complex64>>,
    tgt_chirp: Option<Vec<Complex64>>,
}

impl std::fmt::Debug for ToeplitzPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToeplitzPlan")
            .field("lens", &self.lens)
            .field("slices", &self.slices)
            .finish()
    }
}

/// Smallest length `>= n` whose only prime factors are 2, 3 and 5.
fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Flat-index cost estimate of one apply.
pub(super) fn cost(k: usize, ns: usize, nt: usize, slices: usize) -> f64 {
    let l = fast_len(nt + ns - 1) as f64;
    let total = l.powi(k as i32);
    (slices + 1) as f64 * total * total.log2().max(1.0) * 2.0
}

fn row_major(idx: &[usize], lens: &[usize]) -> usize {
    idx.iter().zip(lens).fold(0, |acc, (i, n)| acc * n + i)
}

/// In-place multidimensional FFT of a row-major array.
fn fft_nd(data: &mut [Complex64], lens: &[usize], plans: &[Arc<dyn Fft<f64>>]) {
    let k = lens.len();
    for a in 0..k {
        let n = lens[a];
        let inner: usize = lens[a + 1..].iter().product();
        let plan = &plans[a];
        if inner == 1 {
            data.par_chunks_mut(n).for_each(|line| plan.process(line));
            continue;
        }
        let outer = data.len() / (n * inner);
        let lines: Vec<Vec<Complex64>> = (0..outer * inner)
            .into_par_iter()
            .map(|q| {
                let (o, i) = (q / inner, q % inner);
                let base = o * n * inner + i;
                let mut line: Vec<Complex64> = (0..n).map(|t| data[base + t * inner]).collect();
                plan.process(&mut line);
                line
            })
            .collect();
        for (q, line) in lines.into_iter().enumerate() {
            let (o, i) = (q / inner, q % inner);
            let base = o * n * inner + i;
            for (t, v) in line.into_iter().enumerate() {
                data[base + t * inner] = v;
            }
        }
    }
}

/// Calls `f(multi, flat)` for every point of an `n`-per-axis cube in `k`
/// dimensions, last axis fastest.
fn for_each_cube(k: usize, n: usize, mut f: impl FnMut(&[usize], usize)) {
    let mut mi = vec![0usize; k];
    let count = n.pow(k as u32);
    for flat in 0..count {
        let mut r = flat;
        for a in (0..k).rev() {
            mi[a] = r % n;
            r /= n;
        }
        f(&mi, flat);
    }
}

pub(super) struct PlanInput<'a> {
    pub k: usize,
    pub ns: usize,
    pub nt: usize,
    pub slices: usize,
    /// Entry at difference index `m` (per axis `ti - sj + ns - 1`) and slice `l`.
    pub entry: &'a (dyn Fn(&[usize], usize) -> Complex64 + Sync),
    /// Per-axis node coordinates, used for the chirps of the linear phase.
    pub linear: Option<(f64, &'a [Vec<f64>], &'a [Vec<f64>])>,
}

impl ToeplitzPlan {
    pub(super) fn new(input: PlanInput<'_>) -> Self {
        let PlanInput {
            k,
            ns,
            nt,
            slices,
            entry,
            linear,
        } = input;
        let span = nt + ns - 1;
        let lens = vec![fast_len(span); k];
        let total: usize = lens.iter().product();
        let mut planner = FftPlanner::<f64>::new();
        let forward: Vec<_> = lens.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse: Vec<_> = lens.iter().map(|&n| planner.plan_fft_inverse(n)).collect();

        // exp(-i lambda (x - y)^2 / 2) per axis and difference index.
        let diff_chirp: Option<Vec<Vec<Complex64>>> = linear.map(|(lambda, tgt, src)| {
            (0..k)
                .map(|a| {
                    (0..span)
                        .map(|m| {
                            let ti = m.saturating_sub(ns - 1);
                            let sj = ti + ns - 1 - m;
                            let d = tgt[a][ti] - src[a][sj];
                            Complex64::cis(-0.5 * lambda * d * d)
                        })
                        .collect()
                })
                .collect()
        });
        let kernel_hat: Vec<Vec<Complex64>> = (0..slices)
            .into_par_iter()
            .map(|l| {
                let mut buf = vec![Complex64::new(0.0, 0.0); total];
                for_each_cube(k, span, |m, _| {
                    let mut v = entry(m, l);
                    if let Some(dc) = &diff_chirp {
                        for a in 0..k {
                            v *= dc[a][m[a]];
                        }
                    }
                    buf[row_major(m, &lens)] = v;
                });
                fft_nd(&mut buf, &lens, &forward);
                buf
            })
            .collect();
        let chirp = |axes: &[Vec<f64>], lambda: f64, n: usize| -> Vec<Complex64> {
            let mut out = vec![Complex64::new(0.0, 0.0); n.pow(k as u32)];
            for_each_cube(k, n, |mi, flat| {
                let s: f64 = (0..k).map(|a| axes[a][mi[a]].powi(2)).sum();
                out[flat] = Complex64::cis(0.5 * lambda * s);
            });
            out
        };
        let (src_chirp, tgt_chirp) = match linear {
            Some((lambda, tgt, src)) => {
                (Some(chirp(src, lambda, ns)), Some(chirp(tgt, lambda, nt)))
            }
            None => (None, None),
        };
        Self {
            k,
            ns,
            nt,
            slices,
            lens,
            total,
            forward,
            inverse,
            kernel_hat,
            src_chirp,
            tgt_chirp,
        }
    }

    /// `sum_j G(i - j) f_j` over the target nodes, flat target order.
    pub(super) fn forward(&self, fs: &[Complex64]) -> Vec<Complex64> {
        let (k, ns, nt) = (self.k, self.ns, self.nt);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.total];
        for_each_cube(k, ns, |sj, j| {
            let mut v = fs[j];
            if let Some(c) = &self.src_chirp {
                v *= c[j];
            }
            buf[row_major(sj, &self.lens)] = v;
        });
        fft_nd(&mut buf, &self.lens, &self.forward);
        let scale = 1.0 / self.total as f64;
        let per_slice: Vec<Vec<Complex64>> = (0..self.slices)
            .into_par_iter()
            .map(|l| {
                let kh = &self.kernel_hat[l];
                let mut prod: Vec<Complex64> = buf.iter().zip(kh).map(|(a, b)| a * b).collect();
                fft_nd(&mut prod, &self.lens, &self.inverse);
                let mut out = vec![Complex64::new(0.0, 0.0); nt.pow(k as u32)];
                let mut pos = vec![0usize; k];
                for_each_cube(k, nt, |ti, flat| {
                    for a in 0..k {
                        pos[a] = ti[a] + ns - 1;
                    }
                    out[flat] = prod[row_major(&pos, &self.lens)] * scale;
                });
                out
            })
            .collect();
        let matched = nt.pow(k as u32);
        let mut out = vec![Complex64::new(0.0, 0.0); matched * self.slices];
        for (l, slice) in per_slice.into_iter().enumerate() {
            for (mflat, v) in slice.into_iter().enumerate() {
                let c = self
                    .tgt_chirp
                    .as_ref()
                    .map_or(Complex64::new(1.0, 0.0), |c| c[mflat]);
                out[mflat * self.slices + l] = v * c;
            }
        }
        out
    }

    /// `sum_i conj(G(i - j)) g_i` over the source nodes.
    pub(super) fn adjoint(&self, gt: &[Complex64]) -> Vec<Complex64> {
        let (k, ns, nt) = (self.k, self.ns, self.nt);
        let per_slice: Vec<Vec<Complex64>> = (0..self.slices)
            .into_par_iter()
            .map(|l| {
                let mut buf = vec![Complex64::new(0.0, 0.0); self.total];
                for_each_cube(k, nt, |ti, mflat| {
                    let mut v = gt[mflat * self.slices + l];
                    if let Some(c) = &self.tgt_chirp {
                        v *= c[mflat].conj();
                    }
                    buf[row_major(ti, &self.lens)] = v;
                });
                fft_nd(&mut buf, &self.lens, &self.forward);
                for (b, kh) in buf.iter_mut().zip(&self.kernel_hat[l]) {
                    *b *= kh.conj();
                }
                buf
            })
            .collect();
        let mut acc = vec![Complex64::new(0.0, 0.0); self.total];
        for slice in per_slice {
            for (a, v) in acc.iter_mut().zip(slice) {
                *a += v;
            }
        }
        fft_nd(&mut acc, &self.lens, &self.inverse);
        let scale = 1.0 / self.total as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); ns.pow(k as u32)];
        let mut pos = vec![0usize; k];
        for_each_cube(k, ns, |sj, j| {
            for a in 0..k {
                pos[a] = (sj[a] + self.lens[a] - (ns - 1)) % self.lens[a];
            }
            let mut v = acc[row_major(&pos, &self.lens)] * scale;
            if let Some(c) = &self.src_chirp {
                v *= c[j].conj();
            }
            out[j] = v;
        });
        out
    }
}

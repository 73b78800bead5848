//! Frequency fibres along the last lattice axis.
//!
//! When `B` commutes with the cyclic shift of the last axis (the `t` axis of a Heisenberg lattice
//! with a `t`-independent conformal factor, or any torus axis the factor does not depend on), the
//! space splits into the frequencies `l = 0..N`. On frequency `l`, `B` acts on functions
//! `f(p) e^{2 pi i l t / N}` by the `N^{dim-1}`-square Hermitian matrix
//! `B_l[p][q] = sum_t' B[(p,0),(q,t')] e^{2 pi i l t' / N}`. Frequencies `l` and `N - l` are
//! conjugate, so only `0..=N/2` are solved.

use faer::{c64, Mat, Side};

use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::sparse::CsrMatrix;

pub(crate) struct Fibers<'a> {
    b: &'a CsrMatrix,
    nt: usize,
    base: usize,
}

/// One eigenvalue of a fibre together with the real eigenvectors of `B` it accounts for: one for
/// `l = 0` or `l = N/2`, two (cosine and sine parts) otherwise.
pub(crate) struct FiberPair {
    pub value: f64,
    pub freq: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl<'a> Fibers<'a> {
    /// `None` unless every row is the cyclic `t`-shift of the row at `t = 0` to relative `1e-13`.
    pub fn detect(b: &'a CsrMatrix, nt: usize) -> Option<Self> {
        let n = b.nrows();
        if nt < 2 || n % nt != 0 || n == nt {
            return None;
        }
        let base = n / nt;
        let tol = 1e-13 * b.norm_inf().max(f64::MIN_POSITIVE);
        let ok = (0..base).all(|p| {
            let (c0, v0) = b.row(p * nt);
            (1..nt).all(|t| {
                let (c, v) = b.row(p * nt + t);
                if c.len() != c0.len() {
                    return false;
                }
                c0.iter().zip(v0).all(|(&col, &val)| {
                    let shifted = (col / nt) * nt + (col % nt + t) % nt;
                    let got = b.get(p * nt + t, shifted);
                    got != 0.0 && (got - val).abs() <= tol
                }) && v.iter().all(|x| x.is_finite())
            })
        });
        ok.then_some(Fibers { b, nt, base })
    }

    pub fn base(&self) -> usize {
        self.base
    }

    fn frequencies(&self) -> Vec<usize> {
        (0..=self.nt / 2).collect()
    }

    fn real_fiber(&self, l: usize) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.base, self.base);
        for p in 0..self.base {
            let (cols, vals) = self.b.row(p * self.nt);
            for (&c, &v) in cols.iter().zip(vals) {
                let sign = if l == 0 || (c % self.nt) % 2 == 0 { 1.0 } else { -1.0 };
                m[(p, c / self.nt)] += sign * v;
            }
        }
        m
    }

    fn complex_fiber(&self, l: usize) -> Mat<c64> {
        let nt = self.nt;
        let mut m = Mat::<c64>::zeros(self.base, self.base);
        for p in 0..self.base {
            let (cols, vals) = self.b.row(p * nt);
            for (&c, &v) in cols.iter().zip(vals) {
                let phase = phase(l, c % nt, nt);
                m[(p, c / nt)] += phase * v;
            }
        }
        m
    }

    /// Every eigenvalue of `B` with its frequency, ascending, conjugate pairs listed twice.
    pub fn values(&self, mode: Mode) -> Result<Vec<(f64, usize)>> {
        let freqs = self.frequencies();
        let per: Vec<Result<Vec<f64>>> = exec::map_range(mode, freqs.len(), |i| {
            let l = freqs[i];
            let fail = |e| Error::NoConvergence(format!("fibre {l} eigensolver: {e:?}"));
            if l == 0 || 2 * l == self.nt {
                self.real_fiber(l).self_adjoint_eigenvalues(Side::Lower).map_err(fail)
            } else {
                self.complex_fiber(l).self_adjoint_eigenvalues(Side::Lower).map_err(fail)
            }
        });
        let mut out = Vec::with_capacity(self.b.nrows());
        for (l, r) in freqs.iter().zip(per) {
            let copies = if *l == 0 || 2 * l == self.nt { 1 } else { 2 };
            for v in r? {
                for _ in 0..copies {
                    out.push((v, *l));
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(out)
    }

    /// Eigenpairs from the fibres `freqs`, keeping vectors for eigenvalues where `want` holds.
    pub fn solve<W>(&self, mode: Mode, freqs: &[usize], want: W) -> Result<Vec<FiberPair>>
    where
        W: Fn(f64) -> bool + Sync,
    {
        let per: Vec<Result<Vec<FiberPair>>> = exec::map_range(mode, freqs.len(), |i| self.solve_one(freqs[i], &want));
        let mut out = Vec::new();
        for r in per {
            out.extend(r?);
        }
        out.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.freq.cmp(&b.freq)));
        Ok(out)
    }

    fn solve_one<W: Fn(f64) -> bool>(&self, l: usize, want: &W) -> Result<Vec<FiberPair>> {
        let nt = self.nt;
        let real = l == 0 || 2 * l == nt;
        let fail = |e| Error::NoConvergence(format!("fibre {l} eigensolver: {e:?}"));
        if real {
            let m = self.real_fiber(l);
            let evd = m.self_adjoint_eigen(Side::Lower).map_err(fail)?;
            let s = evd.S().column_vector();
            let u = evd.U();
            let norm = 1.0 / (nt as f64).sqrt();
            Ok((0..self.base)
                .map(|j| {
                    let value = s[j];
                    let vectors = if want(value) {
                        let mut v = vec![0.0; self.base * nt];
                        for p in 0..self.base {
                            for t in 0..nt {
                                let sign = if l == 0 || t % 2 == 0 { 1.0 } else { -1.0 };
                                v[p * nt + t] = norm * sign * u[(p, j)];
                            }
                        }
                        vec![v]
                    } else {
                        Vec::new()
                    };
                    FiberPair { value, freq: l, vectors }
                })
                .collect())
        } else {
            let m = self.complex_fiber(l);
            let evd = m.self_adjoint_eigen(Side::Lower).map_err(fail)?;
            let s = evd.S().column_vector();
            let u = evd.U();
            let norm = (2.0 / nt as f64).sqrt();
            Ok((0..self.base)
                .map(|j| {
                    let value = s[j].re;
                    let vectors = if want(value) {
                        let mut re = vec![0.0; self.base * nt];
                        let mut im = vec![0.0; self.base * nt];
                        for p in 0..self.base {
                            let f = u[(p, j)];
                            for t in 0..nt {
                                let z = f * phase(l, t, nt);
                                re[p * nt + t] = norm * z.re;
                                im[p * nt + t] = norm * z.im;
                            }
                        }
                        vec![re, im]
                    } else {
                        Vec::new()
                    };
                    FiberPair { value, freq: l, vectors }
                })
                .collect())
        }
    }
}

fn phase(l: usize, t: usize, nt: usize) -> c64 {
    let a = 2.0 * std::f64::consts::PI * ((l * t) % nt) as f64 / nt as f64;
    c64::new(a.cos(), a.sin())
}

/// Expands fibre pairs into individual eigenvalues, in ascending order, with their vectors when
/// they were computed (both members of a conjugate pair share the eigenvalue).
pub(crate) fn expand(pairs: Vec<FiberPair>, nt: usize) -> Vec<(f64, Option<Vec<f64>>)> {
    let mut out = Vec::new();
    for pair in pairs {
        let copies = if pair.freq == 0 || 2 * pair.freq == nt { 1 } else { 2 };
        let mut vs = pair.vectors.into_iter();
        for _ in 0..copies {
            out.push((pair.value, vs.next()));
        }
    }
    out
}

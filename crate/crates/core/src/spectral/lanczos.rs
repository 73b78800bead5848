//! Block Lanczos with full reorthogonalisation and thick restarts.
//!
//! The basis is grown a block at a time from the images of the previous block, orthogonalised
//! twice against everything kept so far. Rayleigh-Ritz is done on the explicit projection
//! `V^T B V`, so restarts can keep any set of Ritz vectors: the lowest ones are retained together
//! with the residual block of the unconverged ones. Blocks let degenerate eigenvalues of
//! multiplicity up to the block size surface together.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{self, Mode};

#[derive(Clone, Debug, PartialEq)]
pub struct LanczosOptions {
    pub block: usize,
    pub max_basis: usize,
    /// Relative residual tolerance, scaled by the largest Ritz value magnitude.
    pub tol: f64,
    pub max_matvecs: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { block: 8, max_basis: 0, tol: 1e-10, max_matvecs: 400_000, seed: 0x5EED }
    }
}

pub(crate) struct LanczosOutput {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub matvecs: usize,
}

struct Basis {
    v: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm(x: &[f64]) -> f64 {
    exec::dot(Mode::default(), x, x).sqrt()
}

/// Lowest `k` eigenpairs of the symmetric operator `apply` on `R^n`.
pub(crate) fn lowest<F>(n: usize, k: usize, apply: F, opts: &LanczosOptions) -> Result<LanczosOutput>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("asked for {k} eigenpairs of an {n}-dimensional operator")));
    }
    let b = opts.block.clamp(1, n);
    let mut m = if opts.max_basis > 0 { opts.max_basis } else { (2 * k + 4 * b).max(48) };
    m = m.clamp((k + 2 * b).min(n), n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis = Basis { v: Vec::new(), w: Vec::new() };
    let mut matvecs = 0usize;

    let add = |basis: &mut Basis, cands: Vec<Vec<f64>>, matvecs: &mut usize| -> usize {
        let mut added = 0;
        for mut c in cands {
            let before = norm(&c);
            if before == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for q in &basis.v {
                    let a = exec::dot(Mode::default(), q, &c);
                    axpy(&mut c, -a, q);
                }
            }
            let after = norm(&c);
            if after <= 1e-10 * before || basis.v.len() >= n {
                continue;
            }
            c.iter_mut().for_each(|x| *x /= after);
            let w = apply(&c);
            *matvecs += 1;
            basis.v.push(c);
            basis.w.push(w);
            added += 1;
        }
        added
    };
    let random_block = |rng: &mut ChaCha8Rng, count: usize| -> Vec<Vec<f64>> {
        (0..count).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    };

    let init = random_block(&mut rng, b);
    add(&mut basis, init, &mut matvecs);
    let mut last_block = basis.v.len();

    loop {
        while basis.v.len() < m {
            let start = basis.v.len() - last_block;
            let cands: Vec<Vec<f64>> = basis.w[start..].to_vec();
            let mut added = add(&mut basis, cands, &mut matvecs);
            if added == 0 {
                if basis.v.len() >= n {
                    break;
                }
                let extra = random_block(&mut rng, b);
                added = add(&mut basis, extra, &mut matvecs);
                if added == 0 {
                    break;
                }
            }
            last_block = added;
        }
        let dim = basis.v.len();
        let h = Mat::<f64>::from_fn(dim, dim, |i, j| {
            0.5 * (exec::dot(Mode::default(), &basis.v[i], &basis.w[j])
                + exec::dot(Mode::default(), &basis.v[j], &basis.w[i]))
        });
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::NoConvergence(format!("projected eigenproblem: {e:?}")))?;
        let theta: Vec<f64> = evd.S().column_vector().iter().copied().collect();
        let y = evd.U();
        let keep = if dim >= n { k } else { (k + b).max(m / 2).min(dim.saturating_sub(b)).max(k) };
        let combine = |src: &Vec<Vec<f64>>, col: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (i, s) in src.iter().enumerate() {
                axpy(&mut out, y[(i, col)], s);
            }
            out
        };
        let xs: Vec<Vec<f64>> = (0..keep).map(|c| combine(&basis.v, c)).collect();
        let ws: Vec<Vec<f64>> = (0..keep).map(|c| combine(&basis.w, c)).collect();
        let scale = theta.iter().fold(0.0f64, |a, t| a.max(t.abs())).max(f64::MIN_POSITIVE);
        let tol_abs = opts.tol * scale;
        let mut resid_vecs = Vec::with_capacity(keep);
        let mut resid = Vec::with_capacity(keep);
        for c in 0..keep {
            let mut r = ws[c].clone();
            axpy(&mut r, -theta[c], &xs[c]);
            resid.push(norm(&r));
            resid_vecs.push(r);
        }
        let done = dim >= n || resid[..k].iter().all(|r| *r <= tol_abs);
        if done {
            return Ok(LanczosOutput {
                values: theta[..k].to_vec(),
                vectors: xs.into_iter().take(k).collect(),
                residuals: resid[..k].to_vec(),
                matvecs,
            });
        }
        if matvecs >= opts.max_matvecs {
            return Err(Error::NoConvergence(format!(
                "{matvecs} products, worst residual {:e} > {tol_abs:e}",
                resid[..k].iter().fold(0.0f64, |a, r| a.max(*r))
            )));
        }
        let unconverged: Vec<usize> = (0..keep).filter(|&c| resid[c] > tol_abs).take(b).collect();
        let next: Vec<Vec<f64>> = unconverged.iter().map(|&c| resid_vecs[c].clone()).collect();
        basis = Basis { v: xs, w: ws };
        let added = add(&mut basis, next, &mut matvecs);
        last_block = if added == 0 {
            let extra = random_block(&mut rng, b);
            add(&mut basis, extra, &mut matvecs)
        } else {
            added
        };
        if last_block == 0 {
            return Err(Error::NoConvergence("Krylov space exhausted before convergence".into()));
        }
    }
}

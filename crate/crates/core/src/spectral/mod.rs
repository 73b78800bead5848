//! Eigenvalues, inertia and kernels of assembled operators.
//!
//! Everything works on the symmetric form `B = M^{-1/2} S M^{-1/2}` of `A = M^{-1} S`.
//! Eigenvectors of `A` are returned as `M^{-1/2}`-images of those of `B`, so they are orthonormal
//! for the mass inner product.

mod fiber;
mod lanczos;
mod ldlt;

use faer::Side;
use serde::{Deserialize, Serialize};

pub use lanczos::LanczosOptions;
pub use ldlt::{ldlt_inertia, reverse_cuthill_mckee, Inertia};

use crate::error::{Error, Result};
use crate::exec::Mode;
use crate::geometry::GridFunction;
use crate::operators::OperatorMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Dense below `dense_limit` points; above it, frequency fibres along the last axis when the
    /// operator commutes with its shift and the fibres have at most `dense_limit` points, block
    /// Lanczos otherwise.
    Auto,
    Dense,
    Fiber,
    Lanczos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenOptions {
    pub solver: Solver,
    pub dense_limit: usize,
    pub vectors: bool,
    pub lanczos: LanczosOptions,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { solver: Solver::Auto, dense_limit: 2000, vectors: true, lanczos: LanczosOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    /// Ascending.
    pub values: Vec<f64>,
    /// Empty unless vectors were requested.
    pub vectors: Vec<GridFunction<f64>>,
    /// `||B w - lambda w||` per pair (zero for the dense path).
    pub residuals: Vec<f64>,
    pub solver: Solver,
    pub matvecs: usize,
}

enum Route<'a> {
    Dense,
    Fiber(fiber::Fibers<'a>),
    Lanczos,
}

fn route<'a>(op: &OperatorMatrix, b: &'a crate::sparse::CsrMatrix, opts: &EigenOptions) -> Result<Route<'a>> {
    let nt = op.lattice.points_per_axis();
    match opts.solver {
        Solver::Dense => Ok(Route::Dense),
        Solver::Lanczos => Ok(Route::Lanczos),
        Solver::Fiber => fiber::Fibers::detect(b, nt)
            .map(Route::Fiber)
            .ok_or_else(|| Error::Unsupported("operator does not commute with the last-axis shift".into())),
        Solver::Auto if op.len() <= opts.dense_limit => Ok(Route::Dense),
        Solver::Auto => Ok(match fiber::Fibers::detect(b, nt) {
            Some(f) if f.base() <= opts.dense_limit => Route::Fiber(f),
            _ => Route::Lanczos,
        }),
    }
}

fn fiber_low(op: &OperatorMatrix, f: &fiber::Fibers, k: usize, vectors: bool) -> Result<EigenResult> {
    let mode = Mode::default();
    let all = f.values(mode)?;
    let values: Vec<f64> = all[..k].iter().map(|v| v.0).collect();
    let vectors = if vectors {
        let thr = values[k - 1];
        let mut freqs: Vec<usize> = all[..k].iter().map(|v| v.1).collect();
        freqs.sort_unstable();
        freqs.dedup();
        let pairs = f.solve(mode, &freqs, |v| v <= thr)?;
        fiber::expand(pairs, op.lattice.points_per_axis())
            .into_iter()
            .filter_map(|(_, v)| v)
            .take(k)
            .map(|w| unscale(op, w))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(EigenResult { values, vectors, residuals: vec![0.0; k], solver: Solver::Fiber, matvecs: 0 })
}

fn unscale(op: &OperatorMatrix, w: Vec<f64>) -> Result<GridFunction<f64>> {
    let v = match &op.mass {
        None => w,
        Some(m) => w.iter().zip(m).map(|(x, mi)| x / mi.sqrt()).collect(),
    };
    GridFunction::new(op.lattice.clone(), v)
}

/// The `k` lowest eigenvalues of `A` (and eigenvectors if `opts.vectors`).
pub fn eigen_low_with(op: &OperatorMatrix, k: usize, opts: &EigenOptions) -> Result<EigenResult> {
    let n = op.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("requested {k} eigenpairs of a {n}-point operator")));
    }
    let b = op.symmetric_form();
    let route = route(op, &b, opts)?;
    if let Route::Fiber(f) = &route {
        return fiber_low(op, f, k, opts.vectors);
    }
    if let Route::Dense = route {
        let dense = b.to_dense();
        if opts.vectors {
            let evd = dense
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::NoConvergence(format!("dense eigensolver: {e:?}")))?;
            let s = evd.S().column_vector();
            let u = evd.U();
            let values: Vec<f64> = (0..k).map(|i| s[i]).collect();
            let vectors =
                (0..k).map(|c| unscale(op, (0..n).map(|r| u[(r, c)]).collect())).collect::<Result<Vec<_>>>()?;
            Ok(EigenResult { values, vectors, residuals: vec![0.0; k], solver: Solver::Dense, matvecs: 0 })
        } else {
            let vals = dense
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| Error::NoConvergence(format!("dense eigensolver: {e:?}")))?;
            Ok(EigenResult {
                values: vals[..k].to_vec(),
                vectors: Vec::new(),
                residuals: vec![0.0; k],
                solver: Solver::Dense,
                matvecs: 0,
            })
        }
    } else {
        let out = lanczos::lowest(n, k, |x| b.matvec(x), &opts.lanczos)?;
        let vectors = if opts.vectors {
            out.vectors.into_iter().map(|w| unscale(op, w)).collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(EigenResult {
            values: out.values,
            vectors,
            residuals: out.residuals,
            solver: Solver::Lanczos,
            matvecs: out.matvecs,
        })
    }
}

pub fn eigen_low(op: &OperatorMatrix, k: usize) -> Result<EigenResult> {
    eigen_low_with(op, k, &EigenOptions::default())
}

/// Every eigenvalue, dense. Intended for small lattices.
pub fn eigenvalues_all(op: &OperatorMatrix) -> Result<Vec<f64>> {
    op.symmetric_form()
        .to_dense()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::NoConvergence(format!("dense eigensolver: {e:?}")))
}

/// Number of eigenvalues of `A` below, at and above `sigma`, from the `LDL^T` pivots of
/// `S - sigma M`. If a pivot vanishes the shift is nudged by a relative `1e-10` (up and down, a few
/// times) before giving up.
pub fn inertia(op: &OperatorMatrix, sigma: f64) -> Result<Inertia> {
    let perm = reverse_cuthill_mckee(&op.stiffness);
    let scale = op.stiffness.norm_inf().max(sigma.abs());
    let mut last = Error::Breakdown { index: 0, pivot: 0.0 };
    for attempt in 0..7 {
        let delta = if attempt == 0 {
            0.0
        } else {
            let mag = 1e-10 * scale * f64::from(1u32 << ((attempt - 1) / 2));
            if attempt % 2 == 1 {
                mag
            } else {
                -mag
            }
        };
        match ldlt_inertia(&op.shifted_stiffness(sigma + delta), &perm, scale) {
            Ok(i) => return Ok(i),
            Err(e @ Error::Breakdown { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Tolerance for "numerically zero" eigenvalues from a pair of resolutions: ten times the
/// Richardson estimate `|lambda_fine - lambda_coarse| / (2^order - 1)` of the fine-grid error,
/// never below `floor`.
pub fn consistency_tolerance(coarse: f64, fine: f64, order: u32, floor: f64) -> f64 {
    let est = (fine - coarse).abs() / (f64::from(1u32 << order) - 1.0);
    (10.0 * est).max(floor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum KernelStatus {
    Certified,
    Indeterminate { reason: String },
}

#[derive(Clone, Debug)]
pub struct KernelResult {
    pub dim: usize,
    /// Mass-orthonormal basis of the numerical kernel.
    pub basis: Vec<GridFunction<f64>>,
    pub eigenvalues: Vec<f64>,
    pub gap_tol: f64,
    /// Smallest `|lambda|` outside the kernel (infinite if every eigenvalue is in it).
    pub nearest_outside: f64,
    pub status: KernelStatus,
}

/// Width of the exclusion annulus around the kernel threshold.
pub const KERNEL_GAP_FACTOR: f64 = 2.0;

/// Eigenvectors with `|lambda| < gap_tol`. The count is certified only if no eigenvalue lies in
/// `[gap_tol / 2, 2 gap_tol]`; otherwise the status is indeterminate.
pub fn numerical_kernel(op: &OperatorMatrix, gap_tol: f64) -> Result<KernelResult> {
    numerical_kernel_with(op, gap_tol, &EigenOptions::default())
}

pub fn numerical_kernel_with(op: &OperatorMatrix, gap_tol: f64, opts: &EigenOptions) -> Result<KernelResult> {
    if !(gap_tol > 0.0 && gap_tol.is_finite()) {
        return Err(Error::InvalidInput(format!("gap tolerance {gap_tol} must be positive")));
    }
    let n = op.len();
    let outer = KERNEL_GAP_FACTOR * gap_tol;
    let inner = gap_tol / KERNEL_GAP_FACTOR;
    let b = op.symmetric_form();
    let res = match route(op, &b, opts)? {
        Route::Dense => eigen_low_with(op, n, &EigenOptions { solver: Solver::Dense, ..opts.clone() })?,
        Route::Fiber(f) => {
            let mode = Mode::default();
            let all = f.values(mode)?;
            let mut freqs: Vec<usize> = all.iter().filter(|v| v.0.abs() < gap_tol).map(|v| v.1).collect();
            freqs.sort_unstable();
            freqs.dedup();
            let pairs = if opts.vectors { f.solve(mode, &freqs, |v| v.abs() < gap_tol)? } else { Vec::new() };
            let mut vectors = Vec::new();
            for (_, v) in fiber::expand(pairs, op.lattice.points_per_axis()) {
                if let Some(w) = v {
                    vectors.push(unscale(op, w)?);
                }
            }
            // Kernel vectors first so they line up with the kernel eigenvalues below.
            let mut values: Vec<f64> = all.iter().map(|v| v.0).collect();
            values.sort_by(|a, b| (a.abs() >= gap_tol).cmp(&(b.abs() >= gap_tol)).then(a.total_cmp(b)));
            EigenResult { values, vectors, residuals: Vec::new(), solver: Solver::Fiber, matvecs: 0 }
        }
        Route::Lanczos => {
            let mut k = 8.min(n);
            loop {
                let r = eigen_low_with(op, k, &EigenOptions { solver: Solver::Lanczos, ..opts.clone() })?;
                if *r.values.last().expect("k >= 1") >= outer || k == n {
                    break r;
                }
                if k >= 128 {
                    return Err(Error::NoConvergence(format!(
                        "more than {k} eigenvalues below {outer:e}; kernel search aborted"
                    )));
                }
                k = (2 * k).min(n);
            }
        }
    };
    let mut dim = 0;
    let mut basis = Vec::new();
    let mut eigenvalues = Vec::new();
    let mut nearest_outside = f64::INFINITY;
    let mut in_annulus = Vec::new();
    for (i, &lam) in res.values.iter().enumerate() {
        let a = lam.abs();
        if a < gap_tol {
            dim += 1;
            eigenvalues.push(lam);
            if let Some(v) = res.vectors.get(i) {
                basis.push(v.clone());
            }
        } else {
            nearest_outside = nearest_outside.min(a);
        }
        if (inner..=outer).contains(&a) {
            in_annulus.push(lam);
        }
    }
    let status = if in_annulus.is_empty() {
        KernelStatus::Certified
    } else {
        KernelStatus::Indeterminate { reason: format!("eigenvalues {in_annulus:?} fall in [{inner:e}, {outer:e}]") }
    };
    Ok(KernelResult { dim, basis, eigenvalues, gap_tol, nearest_outside, status })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    pub used: usize,
    pub excluded: usize,
}

/// Least-squares fit of `log N = slope log s + intercept` over samples with `N > 0`.
pub fn growth_fit(samples: &[(f64, u128)]) -> Result<GrowthFit> {
    let pts: Vec<(f64, f64)> =
        samples.iter().filter(|(s, c)| *c > 0 && *s > 0.0).map(|(s, c)| (s.ln(), (*c as f64).ln())).collect();
    let excluded = samples.len() - pts.len();
    if pts.len() < 2 {
        return Err(Error::InvalidInput(format!("{} usable samples, need at least 2", pts.len())));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("all usable samples share the same s".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum::<f64>() / m).sqrt();
    Ok(GrowthFit { slope, intercept, residual, used: pts.len(), excluded })
}

//! Conformal invariants built from null eigenvectors, Q-curvature, and the invariance battery.
//!
//! Under `g_hat = e^{2U} g` an operator of order `2k` transforms as
//! `P_hat = e^{-(n/2+k)U} P e^{(n/2-k)U}`, so kernel vectors are densities of weight `k - n/2`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::geometry::{
    build_lattice, same_lattice, transform_density, ConformalDensity, GridFunction, Lattice, ManifoldModel, ModelSpec,
    QuadratureWeights, TrigPolynomial, TrigTerm,
};
use crate::nodal::{default_epsilon, domain_integral, partition, partition_with_band};
use crate::operators::{
    assemble_paneitz, assemble_yamabe, assemble_yamabe_with, conformal_scalar_curvature, conjugated_operator,
    CurvatureConvention, OperatorMatrix,
};
use crate::spectral::{
    consistency_tolerance, eigen_low_with, numerical_kernel_with, EigenOptions, KernelResult, KernelStatus,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub quantity: String,
    pub value_g: f64,
    pub value_ghat: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl InvarianceReport {
    fn judged(quantity: String, value_g: f64, value_ghat: f64, discrepancy: f64, tolerance: f64) -> Self {
        let verdict = if discrepancy <= tolerance { Verdict::Pass } else { Verdict::Fail };
        InvarianceReport { quantity, value_g, value_ghat, discrepancy, tolerance, verdict, note: String::new() }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// Projective image `(u_1(p) : ... : u_m(p))` of each requested point, as a unit vector whose
/// first nonzero coordinate is positive. Points where every `u_j` vanishes are rejected.
pub fn phi_map(basis: &[GridFunction<f64>], points: &[usize]) -> Result<Vec<Vec<f64>>> {
    if basis.len() < 2 {
        return Err(Error::InvalidInput(format!("the projective map needs at least 2 functions, got {}", basis.len())));
    }
    for b in &basis[1..] {
        same_lattice(basis[0].lattice(), b.lattice())?;
    }
    points
        .iter()
        .map(|&p| {
            let mut v: Vec<f64> = basis.iter().map(|b| b.values()[p]).collect();
            if v.iter().all(|c| *c == 0.0) {
                return Err(Error::InvalidInput(format!("point {p} lies in the common zero set")));
            }
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            let sign = v.iter().find(|c| **c != 0.0).map_or(1.0, |c| c.signum());
            v.iter_mut().for_each(|c| *c *= sign / norm);
            Ok(v)
        })
        .collect()
}

/// Points where some `|u_j|` exceeds `eps * max_j ||u_j||_inf`.
pub fn phi_domain(basis: &[GridFunction<f64>], eps: f64) -> Vec<usize> {
    let scale = basis.iter().map(|b| b.max_abs()).fold(0.0, f64::max);
    (0..basis[0].len()).filter(|&p| basis.iter().any(|b| b.values()[p].abs() > eps * scale)).collect()
}

/// `int |u|^p dV` with `p = n / |w|` for a density of negative weight `w`.
pub fn lp_invariant(u: &ConformalDensity, weights: &QuadratureWeights) -> Result<f64> {
    if !(u.weight < 0.0) {
        return Err(Error::InvalidInput(format!("density weight {} must be negative", u.weight)));
    }
    same_lattice(u.values.lattice(), weights.lattice())?;
    let n = u.values.lattice().dim() as f64;
    let p = n / u.weight.abs();
    let vals = u.values.values();
    let w = weights.weights();
    Ok(exec::sum_range(Mode::default(), vals.len(), |i| vals[i].abs().powf(p) * w[i]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct QField {
    pub values: GridFunction<f64>,
    pub k: u32,
    pub metric: String,
}

fn check_subcritical(n: usize, k: u32) -> Result<()> {
    if 2 * k as usize >= n {
        return Err(Error::InvalidInput(format!("Q_k needs k < n/2; got k = {k}, n = {n}")));
    }
    Ok(())
}

/// `Q_k = 2/(n-2k) P_k(1)` from a directly assembled operator (`k = 1`: Yamabe for any model;
/// `k = 2`: Paneitz for bare models).
pub fn q_curvature(model: &ManifoldModel, lattice: &Lattice, k: u32) -> Result<QField> {
    check_subcritical(model.dim(), k)?;
    let p = match k {
        1 => assemble_yamabe(model, lattice)?,
        2 => assemble_paneitz(model, lattice)?,
        _ => return Err(Error::Unsupported(format!("no operator of order {}", 2 * k))),
    };
    q_from_operator(&p, k)
}

/// `Q_k` of `e^{2U} g` from the conjugated bare operator.
pub fn q_curvature_conjugated(p: &OperatorMatrix, upsilon: &GridFunction<f64>, k: u32) -> Result<QField> {
    check_subcritical(p.lattice.dim(), k)?;
    q_from_operator(&conjugated_operator(p, upsilon, k)?, k)
}

fn q_from_operator(p: &OperatorMatrix, k: u32) -> Result<QField> {
    let n = p.lattice.dim() as f64;
    let c = 2.0 / (n - 2.0 * f64::from(k));
    let one = vec![1.0; p.len()];
    let v: Vec<f64> = p.apply(&one).into_iter().map(|x| c * x).collect();
    Ok(QField { values: GridFunction::new(p.lattice.clone(), v)?, k, metric: p.metric.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QkOutcome {
    Realizable,
    NotByThisBasis,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignDiagnostic {
    pub min: f64,
    pub max: f64,
    pub near_zero: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QkVerdict {
    pub outcome: QkOutcome,
    pub diagnostics: Vec<SignDiagnostic>,
    /// Coefficients of a nowhere-vanishing combination, when one was found.
    pub witness: Option<Vec<f64>>,
    pub combinations_tested: usize,
    pub note: String,
}

/// Angular resolution of the coefficient search.
pub const QK_ANGLE_RESOLUTION: usize = 64;

/// Classification of one combination: nowhere small, a strict sign change, or neither.
#[derive(PartialEq)]
enum Shape {
    Definite,
    SignChange,
    Ambiguous,
}

fn classify(values: &[f64], eps: f64) -> Shape {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = eps * scale;
    let (mut pos, mut neg, mut small) = (false, false, false);
    for &v in values {
        if v.abs() < cut || v == 0.0 {
            small = true;
        } else if v > 0.0 {
            pos = true;
        } else {
            neg = true;
        }
    }
    if pos && neg {
        Shape::SignChange
    } else if small || scale == 0.0 {
        Shape::Ambiguous
    } else {
        Shape::Definite
    }
}

/// Unit vectors on the half sphere `S^{m-1}` from hyperspherical angles in `[0, pi)` at
/// `res` steps per angle.
fn sphere_grid(m: usize, res: usize) -> Vec<Vec<f64>> {
    let total = res.pow((m - 1) as u32);
    (0..total)
        .map(|mut code| {
            let mut c = vec![0.0; m];
            let mut sin_prod = 1.0;
            for ci in c.iter_mut().take(m - 1) {
                let a = PI * (code % res) as f64 / res as f64;
                code /= res;
                *ci = sin_prod * a.cos();
                sin_prod *= a.sin();
            }
            c[m - 1] = sin_prod;
            c
        })
        .collect()
}

/// Searches the span of a kernel basis for a nowhere-vanishing function.
pub fn zero_qk_criterion(basis: &[GridFunction<f64>], eps: f64) -> Result<QkVerdict> {
    if basis.is_empty() {
        return Ok(QkVerdict {
            outcome: QkOutcome::NotByThisBasis,
            diagnostics: Vec::new(),
            witness: None,
            combinations_tested: 0,
            note: "empty kernel: Q_k = 0 is impossible in this conformal class".into(),
        });
    }
    for b in &basis[1..] {
        same_lattice(basis[0].lattice(), b.lattice())?;
    }
    let diagnostics = basis
        .iter()
        .map(|b| {
            let cut = eps * b.max_abs();
            SignDiagnostic {
                min: b.min(),
                max: b.max(),
                near_zero: b.values().iter().filter(|v| v.abs() < cut).count(),
            }
        })
        .collect();
    let m = basis.len();
    let combos = if m == 1 { vec![vec![1.0]] } else { sphere_grid(m, QK_ANGLE_RESOLUTION) };
    let len = basis[0].len();
    let shapes = exec::map_range(Mode::default(), combos.len(), |ci| {
        let c = &combos[ci];
        let vals: Vec<f64> = (0..len).map(|p| basis.iter().zip(c).map(|(b, w)| w * b.values()[p]).sum()).collect();
        classify(&vals, eps)
    });
    let tested = combos.len();
    if let Some(i) = shapes.iter().position(|s| *s == Shape::Definite) {
        return Ok(QkVerdict {
            outcome: QkOutcome::Realizable,
            diagnostics,
            witness: Some(combos[i].clone()),
            combinations_tested: tested,
            note: "nowhere-vanishing kernel combination found".into(),
        });
    }
    let outcome = if shapes.iter().all(|s| *s == Shape::SignChange) {
        QkOutcome::NotByThisBasis
    } else {
        QkOutcome::Indeterminate
    };
    let note = match outcome {
        QkOutcome::NotByThisBasis => "every tested combination changes sign",
        _ => "some combinations touch the near-zero band without changing sign",
    };
    Ok(QkVerdict { outcome, diagnostics, witness: None, combinations_tested: tested, note: note.into() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orthogonality {
    pub integral: f64,
    pub normalizer: f64,
    /// `None` when `Q` vanishes identically.
    pub ratio: Option<f64>,
}

/// `I = int u_hat Q_hat dV_hat` and `int |u_hat| |Q_hat| dV_hat` for a kernel vector `u` of the bare
/// operator `p`, with `u_hat = e^{(k-n/2)U} u` and `Q_hat` from the conjugated operator.
pub fn orthogonality_constraint(
    u: &GridFunction<f64>,
    p: &OperatorMatrix,
    base_weights: &QuadratureWeights,
    upsilon: &GridFunction<f64>,
    k: u32,
) -> Result<Orthogonality> {
    same_lattice(u.lattice(), &p.lattice)?;
    let n = p.lattice.dim() as f64;
    let q = q_curvature_conjugated(p, upsilon, k)?;
    let dens = transform_density(&ConformalDensity::new(f64::from(k) - n / 2.0, u.clone()), upsilon)?;
    let w = base_weights.rescaled(upsilon)?;
    orthogonality_of(&dens.values, &q.values, &w)
}

/// The same pair for given `u_hat`, `v` and weights.
pub fn orthogonality_of(u: &GridFunction<f64>, v: &GridFunction<f64>, w: &QuadratureWeights) -> Result<Orthogonality> {
    same_lattice(u.lattice(), v.lattice())?;
    same_lattice(u.lattice(), w.lattice())?;
    let (uv, vv, ww) = (u.values(), v.values(), w.weights());
    let integral = exec::sum_range(Mode::default(), uv.len(), |i| uv[i] * vv[i] * ww[i]);
    let normalizer = exec::sum_range(Mode::default(), uv.len(), |i| (uv[i] * vv[i]).abs() * ww[i]);
    let ratio = (normalizer > 0.0).then(|| integral / normalizer);
    Ok(Orthogonality { integral, normalizer, ratio })
}

pub const BATTERY_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct BatteryConfig {
    pub model: ManifoldModel,
    pub points: usize,
    pub upsilons: Vec<TrigPolynomial>,
    pub k: u32,
    pub tol_scale: f64,
    pub convention: CurvatureConvention,
    pub eigen: EigenOptions,
    pub test_vectors: usize,
    pub seed: u64,
}

impl BatteryConfig {
    pub fn new(model: ManifoldModel, points: usize, upsilons: Vec<TrigPolynomial>) -> Self {
        BatteryConfig {
            model,
            points,
            upsilons,
            k: 1,
            tol_scale: 1.0,
            convention: CurvatureConvention::Standard,
            eigen: EigenOptions::default(),
            test_vectors: 10,
            seed: 0x5EED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatterySummary {
    pub pass: usize,
    pub fail: usize,
    pub indeterminate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub points: usize,
    pub k: u32,
    pub kernel_dimension: usize,
    pub reports: Vec<InvarianceReport>,
    pub skipped: Vec<String>,
    pub summary: BatterySummary,
}

impl BatteryReport {
    /// 0 all pass, 1 any failure, 3 indeterminate without failures.
    pub fn exit_code(&self) -> i32 {
        if self.summary.fail > 0 {
            1
        } else if self.summary.indeterminate > 0 {
            3
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Smooth test functions on the quotient: random trigonometric polynomials in the coordinates
/// that need no twist (all axes of a torus, the `x` and `y` axes of a Heisenberg quotient).
pub fn random_smooth_functions(
    model: &ManifoldModel,
    lattice: &Lattice,
    count: usize,
    seed: u64,
) -> Vec<GridFunction<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = model.dim();
    let free = match model.heisenberg_params() {
        Some((d, _)) => 2 * d,
        None => dim,
    };
    (0..count)
        .map(|_| {
            let terms = (0..4)
                .map(|_| {
                    let mut index = vec![0i32; dim];
                    for c in index.iter_mut().take(free) {
                        *c = rng.gen_range(-2..=2);
                    }
                    TrigTerm::new(index, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI))
                })
                .collect();
            TrigPolynomial::new(terms).sample(lattice)
        })
        .collect()
}

/// `max_f ||(A_direct - A_conj) f||_inf` over random smooth `f`, for the Yamabe operator of
/// `e^{2U} g` on an `n`-point lattice.
pub fn conjugation_error(
    model: &ManifoldModel,
    upsilon: &TrigPolynomial,
    n: usize,
    convention: CurvatureConvention,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let bare = model.bare();
    let lattice = build_lattice(&bare, n)?;
    let p = assemble_yamabe(&bare, &lattice)?;
    let conj = conjugated_operator(&p, &upsilon.sample(&lattice), 1)?;
    let direct = assemble_yamabe_with(&bare.clone().with_conformal_factor(upsilon.clone())?, &lattice, convention)?;
    let mut err: f64 = 0.0;
    for f in random_smooth_functions(&bare, &lattice, count, seed) {
        let a = direct.apply(f.values());
        let b = conj.apply(f.values());
        err = a.iter().zip(&b).fold(err, |e, (x, y)| e.max((x - y).abs()));
    }
    Ok(err)
}

fn bare_operator(model: &ManifoldModel, lattice: &Lattice, k: u32) -> Result<OperatorMatrix> {
    match k {
        1 => assemble_yamabe(model, lattice),
        2 => assemble_paneitz(model, lattice),
        _ => Err(Error::Unsupported(format!("no operator of order {}", 2 * k))),
    }
}

/// Eigenvalue of smallest magnitude among the lowest few.
fn nearest_zero(op: &OperatorMatrix, opts: &EigenOptions) -> Result<f64> {
    let k = 12.min(op.len());
    let mut o = opts.clone();
    o.vectors = false;
    let r = eigen_low_with(op, k, &o)?;
    Ok(r.values.into_iter().fold(f64::INFINITY, |b, v| if v.abs() < b.abs() { v } else { b }))
}

/// Kernel of `op` with its tolerance from the paired coarse operator.
pub fn kernel_with_refinement(
    fine: &OperatorMatrix,
    coarse: &OperatorMatrix,
    opts: &EigenOptions,
) -> Result<KernelResult> {
    let lf = nearest_zero(fine, opts)?;
    let lc = nearest_zero(coarse, opts)?;
    let floor = 1e-9 * fine.symmetric_form().norm_inf();
    let tol = consistency_tolerance(lc, lf, fine.stencil_order, floor);
    numerical_kernel_with(fine, tol, opts)
}

/// The `count` eigenvectors whose eigenvalues are closest to zero.
pub fn near_zero_vectors(op: &OperatorMatrix, count: usize, opts: &EigenOptions) -> Result<Vec<GridFunction<f64>>> {
    let k = (count + 12).min(op.len());
    let mut o = opts.clone();
    o.vectors = true;
    let r = eigen_low_with(op, k, &o)?;
    let mut idx: Vec<usize> = (0..r.values.len()).collect();
    idx.sort_by(|a, b| r.values[*a].abs().total_cmp(&r.values[*b].abs()));
    Ok(idx.into_iter().take(count).map(|i| r.vectors[i].clone()).collect())
}

fn kernel_verdict(k: &KernelResult) -> Verdict {
    match k.status {
        KernelStatus::Certified => Verdict::Pass,
        KernelStatus::Indeterminate { .. } => Verdict::Indeterminate,
    }
}

fn unit_max(u: &GridFunction<f64>) -> GridFunction<f64> {
    let m = u.max_abs();
    let (idx, _) =
        u.values().iter().enumerate().fold((0, 0.0), |b, (i, v)| if v.abs() > b.1 { (i, v.abs()) } else { b });
    let s = if u.values()[idx] < 0.0 { -1.0 } else { 1.0 };
    u.map(|v| s * v / m)
}

/// Runs every invariance check for each sampled conformal factor.
pub fn run_battery(cfg: &BatteryConfig) -> Result<BatteryReport> {
    let model = cfg.model.bare();
    let n = model.dim();
    let k = cfg.k;
    check_subcritical(n, k)?;
    if cfg.points < 8 || cfg.points % 4 != 0 {
        return Err(Error::Config(format!(
            "battery needs N divisible by 4 and >= 8 (paired N/2 runs), got {}",
            cfg.points
        )));
    }
    if !(cfg.tol_scale > 0.0) {
        return Err(Error::Config("tol_scale must be positive".into()));
    }
    let fine_l = build_lattice(&model, cfg.points)?;
    let coarse_l = build_lattice(&model, cfg.points / 2)?;
    let p_fine = bare_operator(&model, &fine_l, k)?;
    let p_coarse = bare_operator(&model, &coarse_l, k)?;
    let ker_g = kernel_with_refinement(&p_fine, &p_coarse, &cfg.eigen)?;
    let coarse_null = if ker_g.dim > 0 { near_zero_vectors(&p_coarse, 1, &cfg.eigen)? } else { Vec::new() };
    let w = f64::from(k) - n as f64 / 2.0;
    let weights_g = QuadratureWeights::for_model(&model, &fine_l)?;
    let weights_g_coarse = QuadratureWeights::for_model(&model, &coarse_l)?;
    let h2 = fine_l.spacing().powi(2);
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    let eps = default_epsilon(ker_g.eigenvalues.first().copied().unwrap_or(0.0), ker_g.nearest_outside);
    let basis_g: Vec<GridFunction<f64>> = ker_g.basis.iter().map(unit_max).collect();
    let qk_g = zero_qk_criterion(&basis_g, eps)?;
    let base_sign_g = basis_g.first().map(|u| partition(u, eps)).transpose()?;

    for (i, ups) in cfg.upsilons.iter().enumerate() {
        let tag = |q: &str| format!("{q}[{i}]");
        let ghat = model.clone().with_conformal_factor(ups.clone())?;
        let ups_f = ups.sample(&fine_l);
        let ups_c = ups.sample(&coarse_l);

        if k == 1 {
            let e_f = conjugation_error(&model, ups, cfg.points, cfg.convention, cfg.test_vectors, cfg.seed)?;
            let e_c = conjugation_error(&model, ups, cfg.points / 2, cfg.convention, cfg.test_vectors, cfg.seed)?;
            reports.push(
                InvarianceReport::judged(tag("conjugation_consistency"), e_c, e_f, e_f, cfg.tol_scale * e_c / 2.5)
                    .with_note("value_g: error at N/2, value_ghat: error at N; must shrink by 2.5 or more"),
            );
        } else {
            skipped.push(tag("conjugation_consistency: no direct assembly for this order"));
        }

        let conj_f = conjugated_operator(&p_fine, &ups_f, k)?;
        let conj_c = conjugated_operator(&p_coarse, &ups_c, k)?;
        let ker_h = kernel_with_refinement(&conj_f, &conj_c, &cfg.eigen)?;
        let mut r = InvarianceReport::judged(
            tag("kernel_dimension"),
            ker_g.dim as f64,
            ker_h.dim as f64,
            (ker_g.dim as f64 - ker_h.dim as f64).abs(),
            0.0,
        )
        .with_note(format!("gap tolerances {:e} / {:e}", ker_g.gap_tol, ker_h.gap_tol));
        if r.verdict == Verdict::Pass
            && (kernel_verdict(&ker_g) != Verdict::Pass || kernel_verdict(&ker_h) != Verdict::Pass)
        {
            r.verdict = Verdict::Indeterminate;
        }
        reports.push(r);

        let transformed: Vec<GridFunction<f64>> = basis_g
            .iter()
            .map(|u| transform_density(&ConformalDensity::new(w, u.clone()), &ups_f).map(|d| d.values))
            .collect::<Result<_>>()?;

        if let (Some(pg), Some(u_hat)) = (&base_sign_g, transformed.first()) {
            let ph = partition_with_band(u_hat, eps, &pg.band())?;
            let mismatched = pg.signs.iter().zip(&ph.signs).filter(|(a, b)| a != b).count()
                + pg.domain_of.iter().zip(&ph.domain_of).filter(|(a, b)| a != b).count();
            reports.push(
                InvarianceReport::judged(
                    tag("nodal_partition"),
                    pg.domain_count() as f64,
                    ph.domain_count() as f64,
                    mismatched as f64,
                    0.0,
                )
                .with_note("near-zero band of u_g carried over to u_ghat"),
            );
        }

        if basis_g.len() >= 2 {
            let pts = phi_domain(&basis_g, eps);
            let a = phi_map(&basis_g, &pts)?;
            let b = phi_map(&transformed, &pts)?;
            let diff =
                a.iter().zip(&b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max);
            let tol = cfg.tol_scale * 16.0 * f64::EPSILON * (basis_g.len() as f64).sqrt();
            reports.push(
                InvarianceReport::judged(tag("phi_map"), pts.len() as f64, pts.len() as f64, diff, tol)
                    .with_note("rounding-level bound on projective coordinates"),
            );
        } else {
            skipped.push(tag("phi_map: kernel dimension below 2"));
        }

        if let Some(u) = basis_g.first() {
            let dens = ConformalDensity::new(w, u.clone());
            let v_g = lp_invariant(&dens, &weights_g)?;
            let v_h = lp_invariant(&transform_density(&dens, &ups_f)?, &weights_g.rescaled(&ups_f)?)?;
            let rel = (v_h - v_g).abs() / v_g.abs().max(f64::MIN_POSITIVE);
            let quad = match coarse_null.first().map(unit_max) {
                Some(uc) => {
                    let vc = lp_invariant(&ConformalDensity::new(w, uc), &weights_g_coarse)?;
                    (v_g - vc).abs() / v_g.abs().max(f64::MIN_POSITIVE)
                }
                None => 0.0,
            };
            let tol = cfg.tol_scale * quad.max(64.0 * f64::EPSILON);
            reports.push(
                InvarianceReport::judged(tag("lp_invariant"), v_g, v_h, rel, tol)
                    .with_note("tolerance: relative N vs N/2 change of the invariant"),
            );

            let o_g = orthogonality_constraint(u, &p_fine, &weights_g, &GridFunction::constant(&fine_l, 0.0), k)?;
            let o_h = orthogonality_constraint(u, &p_fine, &weights_g, &ups_f, k)?;
            let au = p_fine.apply(u.values());
            let resid = au.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (p_fine.stiffness.norm_inf() * u.max_abs());
            let tol = cfg.tol_scale * (resid + h2);
            let disc = o_h.ratio.map_or(0.0, f64::abs);
            let mut r = InvarianceReport::judged(
                tag("orthogonality"),
                o_g.ratio.unwrap_or(0.0),
                o_h.ratio.unwrap_or(0.0),
                disc,
                tol,
            );
            if o_h.ratio.is_none() {
                r = r.with_note("Q vanishes identically: exact-zero case");
            }
            reports.push(r);

            if k == 1 {
                if let Some(pg) = &base_sign_g {
                    if pg.domain_count() >= 2 {
                        let r_g = conformal_scalar_curvature(&model, &fine_l, cfg.convention)?;
                        let r_h = conformal_scalar_curvature(&ghat, &fine_l, cfg.convention)?;
                        let u_hat = &transformed[0];
                        let ph = partition_with_band(u_hat, eps, &pg.band())?;
                        let w_h = QuadratureWeights::for_model(&ghat, &fine_l)?;
                        let worst = |part: &crate::nodal::NodalPartition,
                                     u: &GridFunction<f64>,
                                     r: &GridFunction<f64>,
                                     wts: &QuadratureWeights|
                         -> Result<(f64, f64)> {
                            let f = u.map(|v| v.abs()).mul(r)?;
                            let mut worst_int = f64::NEG_INFINITY;
                            let mut worst_min = f64::NEG_INFINITY;
                            for d in 0..part.domain_count() {
                                worst_int = worst_int.max(domain_integral(part, d, &f, wts)?.integral);
                                worst_min = worst_min.max(domain_integral(part, d, r, wts)?.min);
                            }
                            Ok((worst_int, worst_min))
                        };
                        let (ig, mg) = worst(pg, u, &r_g, &weights_g)?;
                        let (ih, mh) = worst(&ph, u_hat, &r_h, &w_h)?;
                        let ok = ig < 0.0 && ih < 0.0 && mg < 0.0 && mh < 0.0;
                        let mut r = InvarianceReport::judged(tag("scalar_curvature_sign"), ig, ih, ih.max(ig), 0.0);
                        r.verdict = if ok { Verdict::Pass } else { Verdict::Fail };
                        reports.push(r.with_note(format!("max over domains of min R: {mg:e} / {mh:e}")));
                    } else {
                        skipped.push(tag("scalar_curvature_sign: kernel vector has no nodal set"));
                    }
                }
            }
        }

        let basis_h: Vec<GridFunction<f64>> = ker_h.basis.iter().map(unit_max).collect();
        let eps_h = default_epsilon(ker_h.eigenvalues.first().copied().unwrap_or(0.0), ker_h.nearest_outside);
        let qk_h = zero_qk_criterion(&basis_h, eps_h)?;
        let code = |o: QkOutcome| match o {
            QkOutcome::Realizable => 1.0,
            QkOutcome::NotByThisBasis => 0.0,
            QkOutcome::Indeterminate => -1.0,
        };
        let mut r = InvarianceReport::judged(
            tag("zero_qk_verdict"),
            code(qk_g.outcome),
            code(qk_h.outcome),
            if qk_g.outcome == qk_h.outcome { 0.0 } else { 1.0 },
            0.0,
        )
        .with_note("1 realizable, 0 not by this basis, -1 indeterminate");
        if qk_g.outcome == QkOutcome::Indeterminate || qk_h.outcome == QkOutcome::Indeterminate {
            r.verdict = Verdict::Indeterminate;
        }
        reports.push(r);
    }

    let summary = BatterySummary {
        pass: reports.iter().filter(|r| r.verdict == Verdict::Pass).count(),
        fail: reports.iter().filter(|r| r.verdict == Verdict::Fail).count(),
        indeterminate: reports.iter().filter(|r| r.verdict == Verdict::Indeterminate).count(),
    };
    Ok(BatteryReport {
        schema_version: BATTERY_SCHEMA_VERSION,
        model: ModelSpec::from_model(&model, Some(cfg.points)),
        points: cfg.points,
        k,
        kernel_dimension: ker_g.dim,
        reports,
        skipped,
        summary,
    })
}

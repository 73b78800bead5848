//! Finite-difference assembly of the Laplacian, Yamabe and Paneitz operators.
//!
//! An assembled operator is a pair `(S, M)` with `S` symmetric and `M` a positive diagonal mass,
//! standing for `A = M^{-1} S`. `A` is self-adjoint for the weighted inner product `<u, M v>`,
//! which is the discrete `L^2(dV)` pairing up to the constant cell volume.
//!
//! The Laplacian is assembled in conservative form,
//!
//! ```text
//! Delta_{e^{2U} g} u = -e^{-nU} sum_F w_F F*( e^{(n-2)U} F u ),
//! ```
//!
//! with `e^{(n-2)U}` sampled at cell midpoints. Tori use plain 3-point differences on every axis.
//! On Heisenberg quotients `X_j` and `T` use 3-point differences (an `X_j` step across `x_j = 1`
//! shifts `t` by `-y_j`), while `Y_j` is discretised along its own flow: a step of length `h` in
//! `y_j` is paired with a shift `x_j h` in `t`, realised by trigonometric interpolation in `t`.
//! That keeps the stencil exactly symmetric and second-order accurate with the twisted
//! identification.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::geometry::{GridFunction, Lattice, ManifoldModel, ModelKind};
use crate::heisenberg::paneitz_coefficients;
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameField {
    /// `d/dx_a` on a torus.
    Axis(usize),
    X(usize),
    Y(usize),
    T,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    VectorField(FrameField),
    Laplacian,
    Yamabe,
    Paneitz,
    /// `e^{-(n/2+k)U} P e^{(n/2-k)U}` for a base operator `P` of order `2k`.
    Conjugated {
        base: Box<OperatorKind>,
        k: u32,
    },
}

impl OperatorKind {
    /// Half the order: 1 for Laplacian and Yamabe, 2 for Paneitz.
    pub fn half_order(&self) -> Option<u32> {
        match self {
            OperatorKind::Laplacian | OperatorKind::Yamabe => Some(1),
            OperatorKind::Paneitz => Some(2),
            OperatorKind::Conjugated { k, .. } => Some(*k),
            OperatorKind::VectorField(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub stiffness: CsrMatrix,
    /// Diagonal of `M`; `None` means the identity.
    pub mass: Option<Vec<f64>>,
    pub kind: OperatorKind,
    pub lattice: Lattice,
    /// Free-form description of the metric the operator was built for.
    pub metric: String,
    pub stencil_order: u32,
}

impl OperatorMatrix {
    pub fn len(&self) -> usize {
        self.stiffness.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mass_at(&self, i: usize) -> f64 {
        self.mass.as_ref().map_or(1.0, |m| m[i])
    }

    /// `A x = M^{-1} S x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.apply_with(Mode::default(), x)
    }

    pub fn apply_with(&self, mode: Mode, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.len()];
        self.stiffness.matvec_into(mode, x, &mut y);
        if let Some(m) = &self.mass {
            for (yi, mi) in y.iter_mut().zip(m) {
                *yi /= mi;
            }
        }
        y
    }

    pub fn apply_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        let re: Vec<f64> = x.iter().map(|z| z.re).collect();
        let im: Vec<f64> = x.iter().map(|z| z.im).collect();
        let (a, b) = (self.apply(&re), self.apply(&im));
        a.into_iter().zip(b).map(|(r, i)| Complex64::new(r, i)).collect()
    }

    pub fn apply_grid(&self, u: &GridFunction<f64>) -> Result<GridFunction<f64>> {
        crate::geometry::same_lattice(u.lattice(), &self.lattice)?;
        GridFunction::new(self.lattice.clone(), self.apply(u.values()))
    }

    /// `M^{-1/2} S M^{-1/2}`, similar to `A` and symmetric.
    pub fn symmetric_form(&self) -> CsrMatrix {
        match &self.mass {
            None => self.stiffness.clone(),
            Some(m) => {
                let r: Vec<f64> = m.iter().map(|v| 1.0 / v.sqrt()).collect();
                self.stiffness.scale(&r, &r)
            }
        }
    }

    /// `S - sigma M`. Its inertia equals the count of eigenvalues of `A` below, at and above
    /// `sigma`.
    pub fn shifted_stiffness(&self, sigma: f64) -> CsrMatrix {
        let m = match &self.mass {
            None => CsrMatrix::identity(self.len()),
            Some(m) => CsrMatrix::diagonal(m),
        };
        self.stiffness.add_scaled(&m, -sigma).expect("same shape")
    }

    /// Whether the stored stiffness is exactly symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.stiffness.max_asymmetry() == 0.0
    }
}

/// Sign convention for the rescaled scalar curvature. `FlippedLaplacian` is a deliberately wrong
/// formula used as a negative control.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CurvatureConvention {
    #[default]
    Standard,
    FlippedLaplacian,
}

struct Assembly<'a> {
    model: &'a ManifoldModel,
    lattice: &'a Lattice,
    n: usize,
    h: f64,
    weights: Vec<f64>,
    heis_d: Option<usize>,
    /// Per x-index `t`-shift kernels for the `Y_j` flow step.
    kernels: Vec<Vec<f64>>,
}

/// Kernel `K` with `(S f)(l) = sum_l' K[(l - l') mod N] f(l')` interpolating `f(t_l + delta)`
/// by the real trigonometric interpolant of degree `N/2`.
pub(crate) fn shift_kernel(n: usize, delta: f64) -> Vec<f64> {
    if delta == 0.0 {
        let mut k = vec![0.0; n];
        k[0] = 1.0;
        return k;
    }
    let nf = n as f64;
    let tau = std::f64::consts::TAU;
    (0..n)
        .map(|r| {
            let mut acc = 1.0;
            for m in 1..n / 2 {
                acc += 2.0 * (tau * m as f64 * (r as f64 / nf + delta)).cos();
            }
            let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (std::f64::consts::PI * nf * delta).cos();
            acc / nf
        })
        .collect()
}

impl<'a> Assembly<'a> {
    fn new(model: &'a ManifoldModel, lattice: &'a Lattice) -> Result<Self> {
        model.validate()?;
        if lattice.dim() != model.dim() {
            return Err(Error::LatticeMismatch("model and lattice dimensions differ".into()));
        }
        let heis_d = model.heisenberg_params().map(|(d, _)| d);
        if heis_d != lattice.heisenberg_d() {
            return Err(Error::LatticeMismatch("model and lattice identifications differ".into()));
        }
        let n = lattice.points_per_axis();
        let h = lattice.spacing();
        let kernels = match heis_d {
            Some(_) => (0..n).map(|i| shift_kernel(n, i as f64 * h * h)).collect(),
            None => Vec::new(),
        };
        Ok(Assembly { model, lattice, n, h, weights: model.frame_weights(), heis_d, kernels })
    }

    fn half_fwd(c: usize) -> f64 {
        c as f64 + 0.5
    }

    fn half_bwd(&self, c: usize) -> f64 {
        if c == 0 {
            self.n as f64 - 0.5
        } else {
            c as f64 - 0.5
        }
    }

    /// `e^{(n-2) U}` at the lattice point `c` with coordinate `axis` replaced by `half * h`.
    fn rho(&self, c: &[usize], axis: usize, half: f64) -> f64 {
        let ups = &self.model.conformal_factor;
        if ups.is_zero() {
            return 1.0;
        }
        let mut x: Vec<f64> = c.iter().map(|&ci| ci as f64 * self.h).collect();
        x[axis] = half * self.h;
        ((self.lattice.dim() as f64 - 2.0) * ups.value(&x)).exp()
    }

    fn is_y_axis(&self, axis: usize) -> Option<usize> {
        match self.heis_d {
            Some(d) if axis >= d && axis < 2 * d => Some(axis - d),
            _ => None,
        }
    }

    fn laplacian_row(&self, p: usize) -> Vec<(usize, f64)> {
        let dim = self.lattice.dim();
        let mut c = vec![0; dim];
        self.lattice.multi_index(p, &mut c);
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut row = Vec::with_capacity(2 * dim + 1);
        let mut diag = 0.0;
        for axis in 0..dim {
            let w = self.weights[axis] * inv_h2;
            let rp = self.rho(&c, axis, Self::half_fwd(c[axis]));
            let rm = self.rho(&c, axis, self.half_bwd(c[axis]));
            diag += w * (rp + rm);
            match self.is_y_axis(axis) {
                None => {
                    let mut q = c.clone();
                    self.lattice.step(&mut q, axis, true);
                    row.push((self.lattice.index_of(&q), -w * rp));
                    let mut q = c.clone();
                    self.lattice.step(&mut q, axis, false);
                    row.push((self.lattice.index_of(&q), -w * rm));
                }
                Some(j) => self.push_y_flow(&c, j, -w * rp, -w * rm, &mut row),
            }
        }
        row.push((p, diag));
        row
    }

    /// Adds `fwd * S_Y` and `bwd * S_Y^T` entries of row `c`.
    fn push_y_flow(&self, c: &[usize], j: usize, fwd: f64, bwd: f64, row: &mut Vec<(usize, f64)>) {
        let d = self.heis_d.expect("heisenberg");
        let n = self.n;
        let kern = &self.kernels[c[j]];
        let l = c[2 * d];
        let mut q = c.to_vec();
        q[2 * d] = 0;
        q[d + j] = (c[d + j] + 1) % n;
        let base_f = self.lattice.index_of(&q);
        q[d + j] = (c[d + j] + n - 1) % n;
        let base_b = self.lattice.index_of(&q);
        for lp in 0..n {
            let kf = kern[(l + n - lp) % n];
            if kf != 0.0 {
                row.push((base_f + lp, fwd * kf));
            }
            let kb = kern[(lp + n - l) % n];
            if kb != 0.0 {
                row.push((base_b + lp, bwd * kb));
            }
        }
    }

    fn mass(&self) -> Option<Vec<f64>> {
        let ups = &self.model.conformal_factor;
        if ups.is_zero() {
            return None;
        }
        let n = self.lattice.dim() as f64;
        Some(exec::map_range(Mode::default(), self.lattice.len(), |i| (n * ups.value(&self.lattice.coords(i))).exp()))
    }
}

fn metric_label(model: &ManifoldModel) -> String {
    model.describe()
}

/// Discrete frame field, antisymmetric central differences. `Y_j` differences along its flow.
pub fn assemble_vector_field(field: FrameField, lattice: &Lattice) -> Result<OperatorMatrix> {
    let n = lattice.points_per_axis();
    let h = lattice.spacing();
    let dim = lattice.dim();
    let heis = lattice.heisenberg_d();
    let axis_ok = |a: usize, limit: usize| {
        if a < limit {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("frame index {a} out of range")))
        }
    };
    let half = 1.0 / (2.0 * h);
    let rows: Vec<Vec<(usize, f64)>> = match (field, heis) {
        (FrameField::Axis(a), None) => {
            axis_ok(a, dim)?;
            exec::map_range(Mode::default(), lattice.len(), |p| {
                vec![(lattice.neighbor(p, a, true), half), (lattice.neighbor(p, a, false), -half)]
            })
        }
        (FrameField::X(j), Some(d)) => {
            axis_ok(j, d)?;
            exec::map_range(Mode::default(), lattice.len(), |p| {
                vec![(lattice.neighbor(p, j, true), half), (lattice.neighbor(p, j, false), -half)]
            })
        }
        (FrameField::T, Some(d)) => exec::map_range(Mode::default(), lattice.len(), |p| {
            vec![(lattice.neighbor(p, 2 * d, true), half), (lattice.neighbor(p, 2 * d, false), -half)]
        }),
        (FrameField::Y(j), Some(d)) => {
            axis_ok(j, d)?;
            let model = ManifoldModel::heisenberg(d, 1.0)?;
            let asm = Assembly::new(&model, lattice)?;
            exec::map_range(Mode::default(), lattice.len(), |p| {
                let mut c = vec![0; dim];
                lattice.multi_index(p, &mut c);
                let mut row = Vec::with_capacity(2 * n);
                asm.push_y_flow(&c, j, half, -half, &mut row);
                row
            })
        }
        (FrameField::Axis(_), Some(_)) => {
            return Err(Error::InvalidInput("coordinate axis fields are for tori; use X, Y, T".into()))
        }
        (_, None) => return Err(Error::InvalidInput("X_j, Y_j and T need a Heisenberg lattice".into())),
    };
    let m = lattice.len();
    Ok(OperatorMatrix {
        stiffness: CsrMatrix::from_rows(m, m, rows)?,
        mass: None,
        kind: OperatorKind::VectorField(field),
        lattice: lattice.clone(),
        metric: "frame".into(),
        stencil_order: 2,
    })
}

/// Positive Laplacian of the model's metric (including its conformal factor, if any).
pub fn assemble_laplacian(model: &ManifoldModel, lattice: &Lattice) -> Result<OperatorMatrix> {
    assemble_laplacian_with(Mode::default(), model, lattice)
}

pub fn assemble_laplacian_with(mode: Mode, model: &ManifoldModel, lattice: &Lattice) -> Result<OperatorMatrix> {
    let asm = Assembly::new(model, lattice)?;
    let rows = exec::map_range(mode, lattice.len(), |p| asm.laplacian_row(p));
    let m = lattice.len();
    Ok(OperatorMatrix {
        stiffness: CsrMatrix::from_rows(m, m, rows)?,
        mass: asm.mass(),
        kind: OperatorKind::Laplacian,
        lattice: lattice.clone(),
        metric: metric_label(model),
        stencil_order: 2,
    })
}

/// `c_n = (n-2) / (4(n-1))`.
pub fn yamabe_constant(n: usize) -> f64 {
    let n = n as f64;
    (n - 2.0) / (4.0 * (n - 1.0))
}

/// Scalar curvature of `e^{2U} g` sampled on the lattice, from the closed-form derivatives of
/// `U`:
///
/// ```text
/// R_hat = e^{-2U} ( R + 2(n-1) Delta U - (n-1)(n-2) |grad U|^2 ),   Delta >= 0.
/// ```
pub fn conformal_scalar_curvature(
    model: &ManifoldModel,
    lattice: &Lattice,
    convention: CurvatureConvention,
) -> Result<GridFunction<f64>> {
    model.validate()?;
    if lattice.dim() != model.dim() {
        return Err(Error::LatticeMismatch("model and lattice dimensions differ".into()));
    }
    let n = model.dim() as f64;
    let r0 = model.bare_scalar_curvature();
    let w = model.frame_weights();
    let ups = &model.conformal_factor;
    let sign = match convention {
        CurvatureConvention::Standard => 1.0,
        CurvatureConvention::FlippedLaplacian => -1.0,
    };
    Ok(GridFunction::sample(lattice, |x| {
        if ups.is_zero() {
            return r0;
        }
        let mut lap = 0.0;
        let mut grad2 = 0.0;
        for (a, wa) in w.iter().enumerate() {
            lap -= wa * ups.second_partial(x, a);
            let g = ups.partial(x, a);
            grad2 += wa * g * g;
        }
        (-2.0 * ups.value(x)).exp() * (r0 + sign * 2.0 * (n - 1.0) * lap - (n - 1.0) * (n - 2.0) * grad2)
    }))
}

/// Yamabe operator `Delta + c_n R` of the model's metric, assembled directly.
pub fn assemble_yamabe(model: &ManifoldModel, lattice: &Lattice) -> Result<OperatorMatrix> {
    assemble_yamabe_with(model, lattice, CurvatureConvention::Standard)
}

pub fn assemble_yamabe_with(
    model: &ManifoldModel,
    lattice: &Lattice,
    convention: CurvatureConvention,
) -> Result<OperatorMatrix> {
    let lap = assemble_laplacian(model, lattice)?;
    let cn = yamabe_constant(model.dim());
    let r = conformal_scalar_curvature(model, lattice, convention)?;
    let shift: Vec<f64> = (0..lap.len()).map(|i| cn * r.values()[i] * lap.mass_at(i)).collect();
    let stiffness = lap.stiffness.add_scaled(&CsrMatrix::diagonal(&shift), 1.0)?;
    Ok(OperatorMatrix { stiffness, kind: OperatorKind::Yamabe, ..lap })
}

/// `e^{-(n/2+k)U} P e^{(n/2-k)U}` for an operator of order `2k` and a sampled exponent `U`.
/// The result is stored as `(D S D, M e^{nU})` with `D = e^{(n/2-k)U}`, which keeps it symmetric.
pub fn conjugated_operator(p: &OperatorMatrix, upsilon: &GridFunction<f64>, k: u32) -> Result<OperatorMatrix> {
    crate::geometry::same_lattice(&p.lattice, upsilon.lattice())?;
    let n = p.lattice.dim() as f64;
    let kf = f64::from(k);
    let d2: Vec<f64> = upsilon.values().iter().map(|u| ((n / 2.0 - kf) * u).exp()).collect();
    let mass: Vec<f64> = upsilon.values().iter().enumerate().map(|(i, u)| p.mass_at(i) * (n * u).exp()).collect();
    Ok(OperatorMatrix {
        stiffness: p.stiffness.scale(&d2, &d2),
        mass: Some(mass),
        kind: OperatorKind::Conjugated { base: Box::new(p.kind.clone()), k },
        lattice: p.lattice.clone(),
        metric: format!("{} conjugated by e^(U)", p.metric),
        stencil_order: p.stencil_order,
    })
}

/// Positive 3-point `t`-Laplacian `-d^2/dt^2` (Heisenberg lattices only).
fn t_stiffness(lattice: &Lattice) -> Result<CsrMatrix> {
    let d =
        lattice.heisenberg_d().ok_or_else(|| Error::InvalidInput("t-Laplacian needs a Heisenberg lattice".into()))?;
    let inv_h2 = 1.0 / (lattice.spacing() * lattice.spacing());
    let rows = exec::map_range(Mode::default(), lattice.len(), |p| {
        vec![
            (p, 2.0 * inv_h2),
            (lattice.neighbor(p, 2 * d, true), -inv_h2),
            (lattice.neighbor(p, 2 * d, false), -inv_h2),
        ]
    });
    CsrMatrix::from_rows(lattice.len(), lattice.len(), rows)
}

/// Paneitz operator of the bare metric. On tori it is `Delta^2`. On Heisenberg quotients it is
///
/// ```text
/// P_2 = Delta^2 + A s^{2d+2} Delta + C s^2 T^2 + B s^{4d+4}
/// ```
///
/// with the coefficients of [`paneitz_coefficients`], `T^2` discretised by the 3-point stencil.
pub fn assemble_paneitz(model: &ManifoldModel, lattice: &Lattice) -> Result<OperatorMatrix> {
    if !model.conformal_factor.is_zero() {
        return Err(Error::Unsupported(
            "Paneitz is assembled for the bare metric; use conjugated_operator for e^(2U) g".into(),
        ));
    }
    let lap = assemble_laplacian(model, lattice)?;
    let l2 = lap.stiffness.mul(&lap.stiffness)?;
    let stiffness = match model.kind {
        ModelKind::FlatTorus { .. } => l2,
        ModelKind::Heisenberg { d, s } => {
            let c = paneitz_coefficients(d);
            let a = c.a * s.powi(2 * d as i32 + 2);
            let cc = c.c * s * s;
            let b = c.b * s.powi(4 * d as i32 + 4);
            let kt = t_stiffness(lattice)?;
            l2.add_scaled(&lap.stiffness, a)?
                .add_scaled(&kt, -cc)?
                .add_scaled(&CsrMatrix::identity(lattice.len()), b)?
        }
    };
    Ok(OperatorMatrix { stiffness, kind: OperatorKind::Paneitz, stencil_order: 2, ..lap })
}

/// Dispatches on [`OperatorKind`] for the three geometric operators.
pub fn assemble(kind: &OperatorKind, model: &ManifoldModel, lattice: &Lattice) -> Result<OperatorMatrix> {
    match kind {
        OperatorKind::Laplacian => assemble_laplacian(model, lattice),
        OperatorKind::Yamabe => assemble_yamabe(model, lattice),
        OperatorKind::Paneitz => assemble_paneitz(model, lattice),
        other => Err(Error::Unsupported(format!("cannot assemble {other:?} directly"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_lattice, TrigPolynomial, TrigTerm};
    use std::f64::consts::PI;

    fn heis(d: usize, s: f64, n: usize) -> (ManifoldModel, Lattice) {
        let m = ManifoldModel::heisenberg(d, s).unwrap();
        let l = build_lattice(&m, n).unwrap();
        (m, l)
    }

    fn ups3() -> TrigPolynomial {
        TrigPolynomial::new(vec![TrigTerm::new(vec![1, 0, 0], 0.3, 0.2), TrigTerm::new(vec![1, -1, 0], 0.2, 0.0)])
    }

    #[test]
    fn t_on_plane_wave_is_exact_central_difference() {
        let (_, l) = heis(1, 1.0, 8);
        let t = assemble_vector_field(FrameField::T, &l).unwrap();
        let u: Vec<Complex64> = (0..l.len()).map(|i| Complex64::from_polar(1.0, 2.0 * PI * l.coords(i)[2])).collect();
        let tu = t.apply_complex(&u);
        let h = l.spacing();
        let expect = Complex64::new(0.0, (2.0 * PI * h).sin() / h);
        for (a, b) in tu.iter().zip(&u) {
            assert!((a - expect * b).norm() < 1e-12);
        }
    }

    #[test]
    fn frame_fields_are_antisymmetric() {
        let (_, l) = heis(2, 1.0, 4);
        for f in [FrameField::X(0), FrameField::X(1), FrameField::Y(0), FrameField::Y(1), FrameField::T] {
            assert_eq!(assemble_vector_field(f, &l).unwrap().stiffness.max_antisymmetry(), 0.0, "{f:?}");
        }
        let tl = build_lattice(&ManifoldModel::torus(2).unwrap(), 6).unwrap();
        assert_eq!(assemble_vector_field(FrameField::Axis(1), &tl).unwrap().stiffness.max_antisymmetry(), 0.0);
        assert!(assemble_vector_field(FrameField::T, &tl).is_err());
        assert!(assemble_vector_field(FrameField::Axis(0), &l).is_err());
        assert!(assemble_vector_field(FrameField::Y(2), &l).is_err());
    }

    #[test]
    fn y_field_follows_the_flow_on_quotient_functions() {
        // u = cos(2 pi y) is t-independent, so Y u = du/dy to second order.
        let (_, l) = heis(1, 1.0, 16);
        let y = assemble_vector_field(FrameField::Y(0), &l).unwrap();
        let u = GridFunction::sample(&l, |x| (2.0 * PI * x[1]).cos());
        let yu = y.apply(u.values());
        let h = l.spacing();
        for (i, v) in yu.iter().enumerate() {
            let x = l.coords(i);
            let exact = -(2.0 * PI * h).sin() / h * (2.0 * PI * x[1]).sin();
            assert!((v - exact).abs() < 1e-10, "{v} {exact}");
        }
    }

    #[test]
    fn shift_kernel_interpolates_trig_polynomials() {
        let n = 8;
        let k = shift_kernel(n, 0.037);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let f = |t: f64| (2.0 * PI * t).cos() + 0.5 * (6.0 * PI * t + 0.4).sin();
        for l in 0..n {
            let v: f64 = (0..n).map(|lp| k[(l + n - lp) % n] * f(lp as f64 / n as f64)).sum();
            assert!((v - f(l as f64 / n as f64 + 0.037)).abs() < 1e-13);
        }
    }

    #[test]
    fn laplacians_are_exactly_symmetric_and_kill_constants() {
        let (m, l) = heis(1, 1.7, 8);
        let with_ups = m.clone().with_conformal_factor(ups3()).unwrap();
        let torus = ManifoldModel::torus_with_periods(vec![1.0, 2.0, 0.5]).unwrap();
        let tl = build_lattice(&torus, 6).unwrap();
        let torus_u = torus.clone().with_conformal_factor(ups3()).unwrap();
        for (model, lat) in [(&m, &l), (&with_ups, &l), (&torus, &tl), (&torus_u, &tl)] {
            let op = assemble_laplacian(model, lat).unwrap();
            assert!(op.is_symmetric());
            assert_eq!(op.stiffness.max_asymmetry(), 0.0);
            let ones = vec![1.0; op.len()];
            assert!(op.apply(&ones).iter().all(|v| v.abs() < 1e-9 * op.stiffness.norm_inf()));
        }
    }

    #[test]
    fn torus_spectrum_matches_discrete_symbol() {
        let model = ManifoldModel::torus_with_periods(vec![1.0, 2.0]).unwrap();
        let n = 8;
        let l = build_lattice(&model, n).unwrap();
        let dense = assemble_laplacian(&model, &l).unwrap().stiffness.to_dense();
        let evals = dense.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        let h = 1.0 / n as f64;
        let sym = |k: usize, len: f64| 4.0 / (h * h * len * len) * (PI * k as f64 * h).sin().powi(2);
        let mut oracle: Vec<f64> =
            (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| sym(a, 1.0) + sym(b, 2.0)).collect();
        oracle.sort_by(f64::total_cmp);
        for (a, b) in evals.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10 * b.max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn conformal_scalar_curvature_matches_yamabe_equation() {
        // R_hat = phi^{-(n+2)/(n-2)} (4(n-1)/(n-2) Delta phi + R phi) with phi = e^{(n-2)U/2},
        // Delta phi from nested central differences of the frame derivatives.
        let (m, l) = heis(1, 1.3, 4);
        let model = m.with_conformal_factor(ups3()).unwrap();
        let r = conformal_scalar_curvature(&model, &l, CurvatureConvention::Standard).unwrap();
        let n = 3.0;
        let s: f64 = 1.3;
        let phi = |x: &[f64]| ((n - 2.0) / 2.0 * ups3().value(x)).exp();
        let e = 1e-4;
        for idx in 0..l.len() {
            let x = l.coords(idx);
            let d2 = |a: usize| {
                let mut p = x.clone();
                let mut q = x.clone();
                p[a] += e;
                q[a] -= e;
                (phi(&p) - 2.0 * phi(&x) + phi(&q)) / (e * e)
            };
            // Y = d/dy + x d/dt and U is t-independent, so Y^2 phi = d^2 phi / dy^2.
            let lap = -(d2(0) + s * s * d2(1));
            let r0 = -0.5 * s.powi(4);
            let oracle = phi(&x).powf(-(n + 2.0) / (n - 2.0)) * (4.0 * (n - 1.0) / (n - 2.0) * lap + r0 * phi(&x));
            assert!((r.values()[idx] - oracle).abs() < 1e-5 * oracle.abs().max(1.0), "{} {oracle}", r.values()[idx]);
        }
    }

    #[test]
    fn zero_conformal_factor_is_bitwise_bare() {
        let (m, l) = heis(1, 2.0, 6);
        let p = assemble_yamabe(&m, &l).unwrap();
        let c = conjugated_operator(&p, &GridFunction::constant(&l, 0.0), 1).unwrap();
        assert_eq!(c.stiffness, p.stiffness);
        assert!(c.mass.unwrap().iter().all(|v| *v == 1.0));
        let zero = m.clone().with_conformal_factor(TrigPolynomial::zero()).unwrap();
        assert_eq!(assemble_yamabe(&zero, &l).unwrap().stiffness, p.stiffness);
    }

    #[test]
    fn heisenberg_yamabe_on_constants_is_cn_r() {
        let s = 1.9;
        let (m, l) = heis(1, s, 6);
        let p = assemble_yamabe(&m, &l).unwrap();
        let out = p.apply(&vec![1.0; l.len()]);
        let expect = yamabe_constant(3) * (-0.5 * s.powi(4));
        assert!(out.iter().all(|v| (v - expect).abs() < 1e-10 * expect.abs()));
        assert_eq!(yamabe_constant(3), 0.125);
    }

    #[test]
    fn paneitz_on_constants_is_the_zero_order_term() {
        for d in 1..=2 {
            let s = 1.2;
            let (m, l) = heis(d, s, 4);
            let p = assemble_paneitz(&m, &l).unwrap();
            assert!(p.is_symmetric());
            let b = paneitz_coefficients(d).b * s.powi(4 * d as i32 + 4);
            let out = p.apply(&vec![1.0; l.len()]);
            assert!(out.iter().all(|v| (v - b).abs() < 1e-9 * p.stiffness.norm_inf()), "d={d}");
        }
        let (m, _) = heis(1, 1.0, 4);
        let with_ups = m.with_conformal_factor(TrigPolynomial::cosine(3, 0, 0.1)).unwrap();
        let l = build_lattice(&with_ups, 4).unwrap();
        assert!(assemble_paneitz(&with_ups, &l).is_err());
    }

    #[test]
    fn paneitz_on_a_torus_is_laplacian_squared() {
        let model = ManifoldModel::torus(2).unwrap();
        let l = build_lattice(&model, 6).unwrap();
        let lap = assemble_laplacian(&model, &l).unwrap();
        let p = assemble(&OperatorKind::Paneitz, &model, &l).unwrap();
        let u = GridFunction::sample(&l, |x| (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos());
        let twice = lap.apply(&lap.apply(u.values()));
        for (a, b) in p.apply(u.values()).iter().zip(&twice) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(OperatorKind::Paneitz.half_order(), Some(2));
        assert!(assemble(&OperatorKind::VectorField(FrameField::T), &model, &l).is_err());
    }

    #[test]
    fn conjugation_inverts() {
        let (m, l) = heis(1, 1.5, 6);
        let p = assemble_yamabe(&m, &l).unwrap();
        let u = ups3().sample(&l);
        let back = conjugated_operator(&conjugated_operator(&p, &u, 1).unwrap(), &u.map(|v| -v), 1).unwrap();
        for (i, j, v) in p.stiffness.triplets() {
            assert!((back.stiffness.get(i, j) - v).abs() < 1e-12 * v.abs().max(1.0));
        }
        assert!(back.mass.unwrap().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn flipped_convention_breaks_covariance() {
        let model = ManifoldModel::torus(3).unwrap();
        let ups = TrigPolynomial::cosine(3, 0, 0.1);
        let lat = build_lattice(&model, 12).unwrap();
        let p = assemble_yamabe(&model, &lat).unwrap();
        let conj = conjugated_operator(&p, &ups.sample(&lat), 1).unwrap();
        let ghat = model.clone().with_conformal_factor(ups).unwrap();
        let err = |conv| {
            let direct = assemble_yamabe_with(&ghat, &lat, conv).unwrap();
            let f = vec![1.0; lat.len()];
            direct.apply(&f).iter().zip(conj.apply(&f)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let good = err(CurvatureConvention::Standard);
        let bad = err(CurvatureConvention::FlippedLaplacian);
        assert!(bad > 10.0 * good, "{good} {bad}");
    }
}

//! Models, lattices and quadrature.
//!
//! Both model families live on the unit cube `[0,1)^n`. Flat tori carry periods `L_a` through the
//! metric `g = sum L_a^2 dx_a^2`. Heisenberg quotients use coordinates `(x_1..x_d, y_1..y_d, t)`
//! with the identifications
//!
//! ```text
//! (x + e_j, y, t + y_j) ~ (x, y, t),   (x, y + e_j, t) ~ (x, y, t),   (x, y, t + 1) ~ (x, y, t)
//! ```
//!
//! and the left-invariant metric `g_s` that makes `{X_j, s Y_j, s^{-d} T}` orthonormal, where
//! `X_j = d/dx_j`, `Y_j = d/dy_j + x_j d/dt`, `T = d/dt`. Its volume form is `dx dy dt`.
//!
//! Lattice axes are ordered `x_1..x_d, y_1..y_d, t` for Heisenberg models and `x_1..x_n` for
//! tori. Flat indices are row-major with the last axis fastest.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Mode};

/// One term `amplitude * cos(2 pi <index, x> + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub index: Vec<i32>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl TrigTerm {
    pub fn new(index: Vec<i32>, amplitude: f64, phase: f64) -> Self {
        TrigTerm { index, amplitude, phase }
    }

    fn angle(&self, x: &[f64]) -> f64 {
        let mut a = self.phase;
        for (k, xi) in self.index.iter().zip(x) {
            a += 2.0 * PI * f64::from(*k) * xi;
        }
        a
    }
}

/// A real trigonometric polynomial on the cube. An empty polynomial is the zero function.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrigPolynomial {
    pub terms: Vec<TrigTerm>,
}

impl TrigPolynomial {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        TrigPolynomial { terms }
    }

    pub fn zero() -> Self {
        TrigPolynomial::default()
    }

    /// `amplitude * cos(2 pi x_axis)` in `dim` variables.
    pub fn cosine(dim: usize, axis: usize, amplitude: f64) -> Self {
        let mut index = vec![0; dim];
        index[axis] = 1;
        TrigPolynomial::new(vec![TrigTerm::new(index, amplitude, 0.0)])
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.amplitude * t.angle(x).cos()).sum()
    }

    /// First partial derivative along `axis`.
    pub fn partial(&self, x: &[f64], axis: usize) -> f64 {
        self.terms.iter().map(|t| -t.amplitude * 2.0 * PI * f64::from(t.index[axis]) * t.angle(x).sin()).sum()
    }

    /// Second partial derivative along `axis`.
    pub fn second_partial(&self, x: &[f64], axis: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let w = 2.0 * PI * f64::from(t.index[axis]);
                -t.amplitude * w * w * t.angle(x).cos()
            })
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        TrigPolynomial::new(
            self.terms.iter().map(|t| TrigTerm::new(t.index.clone(), c * t.amplitude, t.phase)).collect(),
        )
    }

    /// Largest absolute value the polynomial can take (sum of amplitudes).
    pub fn amplitude_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude.abs()).sum()
    }

    pub fn sample(&self, lattice: &Lattice) -> GridFunction<f64> {
        GridFunction::sample(lattice, |x| self.value(x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    FlatTorus { periods: Vec<f64> },
    Heisenberg { d: usize, s: f64 },
}

/// A closed manifold together with an optional conformal exponent `Upsilon`
/// (the metric is `e^{2 Upsilon} g`). The zero polynomial means the bare metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub kind: ModelKind,
    pub conformal_factor: TrigPolynomial,
}

impl ManifoldModel {
    /// The unit flat torus `R^n / Z^n`.
    pub fn torus(n: usize) -> Result<Self> {
        Self::torus_with_periods(vec![1.0; n])
    }

    pub fn torus_with_periods(periods: Vec<f64>) -> Result<Self> {
        let m = ManifoldModel { kind: ModelKind::FlatTorus { periods }, conformal_factor: TrigPolynomial::zero() };
        m.validate()?;
        Ok(m)
    }

    pub fn heisenberg(d: usize, s: f64) -> Result<Self> {
        let m = ManifoldModel { kind: ModelKind::Heisenberg { d, s }, conformal_factor: TrigPolynomial::zero() };
        m.validate()?;
        Ok(m)
    }

    pub fn with_conformal_factor(mut self, upsilon: TrigPolynomial) -> Result<Self> {
        self.conformal_factor = upsilon;
        self.validate()?;
        Ok(self)
    }

    /// Same manifold with the bare metric.
    pub fn bare(&self) -> Self {
        ManifoldModel { kind: self.kind.clone(), conformal_factor: TrigPolynomial::zero() }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::FlatTorus { periods } => periods.len(),
            ModelKind::Heisenberg { d, .. } => 2 * d + 1,
        }
    }

    pub fn heisenberg_params(&self) -> Option<(usize, f64)> {
        match self.kind {
            ModelKind::Heisenberg { d, s } => Some((d, s)),
            ModelKind::FlatTorus { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ModelKind::FlatTorus { periods } => {
                if periods.len() < 2 {
                    return Err(Error::InvalidModel(format!(
                        "torus dimension must be at least 2, got {}",
                        periods.len()
                    )));
                }
                if let Some(p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                    return Err(Error::InvalidModel(format!("torus period {p} is not positive")));
                }
            }
            ModelKind::Heisenberg { d, s } => {
                if *d < 1 {
                    return Err(Error::InvalidModel("Heisenberg d must be at least 1".into()));
                }
                if !(s.is_finite() && *s > 0.0) {
                    return Err(Error::InvalidModel(format!("Heisenberg s = {s} is not positive")));
                }
            }
        }
        let n = self.dim();
        for term in &self.conformal_factor.terms {
            if term.index.len() != n {
                return Err(Error::InvalidModel(format!(
                    "conformal factor term has {} indices, manifold dimension is {n}",
                    term.index.len()
                )));
            }
            if !term.amplitude.is_finite() || !term.phase.is_finite() {
                return Err(Error::InvalidModel("conformal factor term is not finite".into()));
            }
            if let ModelKind::Heisenberg { d, .. } = self.kind {
                if term.index[2 * d] != 0 && term.amplitude != 0.0 {
                    return Err(Error::InvalidModel(
                        "Heisenberg conformal factor must not depend on t: a nonzero t-frequency \
                         does not descend to the quotient"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Scalar curvature of the bare metric (constant for both families).
    pub fn bare_scalar_curvature(&self) -> f64 {
        match self.kind {
            ModelKind::FlatTorus { .. } => 0.0,
            ModelKind::Heisenberg { d, s } => -(d as f64) / 2.0 * s.powi(2 * d as i32 + 2),
        }
    }

    /// Riemannian volume of the bare metric.
    pub fn bare_volume(&self) -> f64 {
        match &self.kind {
            ModelKind::FlatTorus { periods } => periods.iter().product(),
            ModelKind::Heisenberg { .. } => 1.0,
        }
    }

    /// Squared frame weights `w_a` with `Delta = -sum_a w_a F_a^2` for the coordinate frame
    /// fields `F_a` (`d/dx_a` on tori, `X_j, Y_j, T` on Heisenberg).
    pub fn frame_weights(&self) -> Vec<f64> {
        match &self.kind {
            ModelKind::FlatTorus { periods } => periods.iter().map(|l| 1.0 / (l * l)).collect(),
            ModelKind::Heisenberg { d, s } => {
                let mut w = vec![1.0; *d];
                w.extend(std::iter::repeat_n(s * s, *d));
                w.push(s.powi(-2 * *d as i32));
                w
            }
        }
    }

    pub fn describe(&self) -> String {
        let base = match &self.kind {
            ModelKind::FlatTorus { periods } => format!("torus(periods={periods:?})"),
            ModelKind::Heisenberg { d, s } => format!("heisenberg(d={d}, s={s:.17e})"),
        };
        if self.conformal_factor.is_zero() {
            base
        } else {
            format!("{base} with e^(2U), U = {} terms", self.conformal_factor.terms.len())
        }
    }
}

/// How the faces of the fundamental cube are glued.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Identification {
    Periodic,
    HeisenbergTwisted { d: usize },
}

/// The uniform grid `{ c / N : 0 <= c < N }^dim` with its identification.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    n: usize,
    dim: usize,
    ident: Identification,
}

/// Builds the lattice for a model. `n` must be even and at least 4.
pub fn build_lattice(model: &ManifoldModel, n: usize) -> Result<Lattice> {
    model.validate()?;
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidLattice(format!("N must be even and >= 4, got {n}")));
    }
    let dim = model.dim();
    if (n as f64).powi(dim as i32) > 1.0e9 {
        return Err(Error::InvalidLattice(format!("N^{dim} points with N = {n} is too many")));
    }
    let ident = match model.kind {
        ModelKind::FlatTorus { .. } => Identification::Periodic,
        ModelKind::Heisenberg { d, .. } => Identification::HeisenbergTwisted { d },
    };
    Ok(Lattice { n, dim, ident })
}

impl Lattice {
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn identification(&self) -> Identification {
        self.ident
    }

    /// `Some(d)` for Heisenberg lattices.
    pub fn heisenberg_d(&self) -> Option<usize> {
        match self.ident {
            Identification::HeisenbergTwisted { d } => Some(d),
            Identification::Periodic => None,
        }
    }

    pub fn axis_labels(&self) -> Vec<String> {
        match self.ident {
            Identification::Periodic => (1..=self.dim).map(|a| format!("x{a}")).collect(),
            Identification::HeisenbergTwisted { d } => (1..=d)
                .map(|j| format!("x{j}"))
                .chain((1..=d).map(|j| format!("y{j}")))
                .chain(std::iter::once("t".to_string()))
                .collect(),
        }
    }

    /// Stride of `axis` in the flat index.
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, idx: usize, out: &mut [usize]) {
        let mut r = idx;
        for a in (0..self.dim).rev() {
            out[a] = r % self.n;
            r /= self.n;
        }
    }

    pub fn index_of(&self, c: &[usize]) -> usize {
        c.iter().fold(0, |acc, &ci| acc * self.n + ci)
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut c = vec![0; self.dim];
        self.multi_index(idx, &mut c);
        let h = self.spacing();
        c.iter().map(|&ci| ci as f64 * h).collect()
    }

    /// Neighbouring lattice point one step along `axis`, applying the identification at the
    /// boundary. For Heisenberg `x_j` steps the wrap shifts `t` by `-+ y_j`.
    pub fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> usize {
        let mut c = vec![0; self.dim];
        self.multi_index(idx, &mut c);
        self.step(&mut c, axis, forward);
        self.index_of(&c)
    }

    /// In-place version of [`Lattice::neighbor`] on a multi-index.
    pub fn step(&self, c: &mut [usize], axis: usize, forward: bool) {
        let n = self.n;
        if forward {
            if c[axis] + 1 == n {
                c[axis] = 0;
                if let Identification::HeisenbergTwisted { d } = self.ident {
                    if axis < d {
                        let t = 2 * d;
                        c[t] = (c[t] + n - c[d + axis]) % n;
                    }
                }
            } else {
                c[axis] += 1;
            }
        } else if c[axis] == 0 {
            c[axis] = n - 1;
            if let Identification::HeisenbergTwisted { d } = self.ident {
                if axis < d {
                    let t = 2 * d;
                    c[t] = (c[t] + c[d + axis]) % n;
                }
            }
        } else {
            c[axis] -= 1;
        }
    }

    /// Images of `p` under the generators of the deck group. Used to check that a function is
    /// well defined on the quotient.
    pub fn generator_images(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        match self.ident {
            Identification::Periodic => {
                for a in 0..self.dim {
                    let mut q = p.to_vec();
                    q[a] += 1.0;
                    out.push(q);
                }
            }
            Identification::HeisenbergTwisted { d } => {
                for j in 0..d {
                    let mut q = p.to_vec();
                    q[j] += 1.0;
                    q[2 * d] += p[d + j];
                    out.push(q);
                    let mut q = p.to_vec();
                    q[d + j] += 1.0;
                    out.push(q);
                }
                let mut q = p.to_vec();
                q[2 * d] += 1.0;
                out.push(q);
            }
        }
        out
    }

    /// `max |f(g p) - f(p)| / max |f(p)|` over lattice points `p` and generators `g`.
    pub fn quotient_residual<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for idx in 0..self.len() {
            let p = self.coords(idx);
            let fp = f(&p);
            den = den.max(fp.norm());
            for q in self.generator_images(&p) {
                num = num.max((f(&q) - fp).norm());
            }
        }
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

/// Values on the points of a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T = f64> {
    lattice: Lattice,
    values: Vec<T>,
}

impl<T> GridFunction<T> {
    pub fn new(lattice: Lattice, values: Vec<T>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::LatticeMismatch(format!(
                "{} values for a lattice with {} points",
                values.len(),
                lattice.len()
            )));
        }
        Ok(GridFunction { lattice, values })
    }

    pub fn sample<F>(lattice: &Lattice, f: F) -> Self
    where
        F: Fn(&[f64]) -> T + Sync + Send,
        T: Send,
    {
        let values = exec::map_range(Mode::default(), lattice.len(), |i| f(&lattice.coords(i)));
        GridFunction { lattice: lattice.clone(), values }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<U, F: Fn(&T) -> U>(&self, f: F) -> GridFunction<U> {
        GridFunction { lattice: self.lattice.clone(), values: self.values.iter().map(f).collect() }
    }
}

impl GridFunction<f64> {
    pub fn constant(lattice: &Lattice, c: f64) -> Self {
        GridFunction { lattice: lattice.clone(), values: vec![c; lattice.len()] }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &GridFunction<f64>) -> Result<GridFunction<f64>> {
        same_lattice(&self.lattice, &other.lattice)?;
        Ok(GridFunction {
            lattice: self.lattice.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }
}

impl GridFunction<Complex64> {
    pub fn re(&self) -> GridFunction<f64> {
        self.map(|z| z.re)
    }

    pub fn im(&self) -> GridFunction<f64> {
        self.map(|z| z.im)
    }

    pub fn modulus(&self) -> GridFunction<f64> {
        self.map(|z| z.norm())
    }

    pub fn conj(&self) -> GridFunction<Complex64> {
        self.map(|z| z.conj())
    }
}

pub(crate) fn same_lattice(a: &Lattice, b: &Lattice) -> Result<()> {
    if a != b {
        return Err(Error::LatticeMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// A density of conformal weight `w`: under `g -> e^{2 Upsilon} g` its values become
/// `e^{w Upsilon} u`. `log_factor` accumulates the total `Upsilon` applied so far.
#[derive(Clone, Debug, PartialEq)]
pub struct ConformalDensity {
    pub weight: f64,
    pub values: GridFunction<f64>,
    pub log_factor: GridFunction<f64>,
}

impl ConformalDensity {
    /// A density expressed in the bare metric.
    pub fn new(weight: f64, values: GridFunction<f64>) -> Self {
        let log_factor = GridFunction::constant(values.lattice(), 0.0);
        ConformalDensity { weight, values, log_factor }
    }
}

/// Rescales a density by `e^{w Upsilon}`.
pub fn transform_density(u: &ConformalDensity, upsilon: &GridFunction<f64>) -> Result<ConformalDensity> {
    same_lattice(u.values.lattice(), upsilon.lattice())?;
    let w = u.weight;
    let values: Vec<f64> = u.values.values().iter().zip(upsilon.values()).map(|(v, y)| (w * y).exp() * v).collect();
    let log: Vec<f64> = u.log_factor.values().iter().zip(upsilon.values()).map(|(a, b)| a + b).collect();
    Ok(ConformalDensity {
        weight: w,
        values: GridFunction::new(upsilon.lattice().clone(), values)?,
        log_factor: GridFunction::new(upsilon.lattice().clone(), log)?,
    })
}

/// Rectangle-rule weights `h^n * vol * e^{n Upsilon(p)}`. Spectrally accurate for smooth
/// periodic integrands.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureWeights {
    lattice: Lattice,
    weights: Vec<f64>,
}

impl QuadratureWeights {
    /// Weights of the model's metric, including its conformal factor.
    pub fn for_model(model: &ManifoldModel, lattice: &Lattice) -> Result<Self> {
        if lattice.dim() != model.dim() {
            return Err(Error::LatticeMismatch("model and lattice dimensions differ".into()));
        }
        let base = model.bare_volume() / lattice.len() as f64;
        let n = model.dim() as f64;
        let ups = &model.conformal_factor;
        let weights = if ups.is_zero() {
            vec![base; lattice.len()]
        } else {
            exec::map_range(Mode::default(), lattice.len(), |i| base * (n * ups.value(&lattice.coords(i))).exp())
        };
        Ok(QuadratureWeights { lattice: lattice.clone(), weights })
    }

    /// Weights rescaled by `e^{n Upsilon}` for a sampled exponent.
    pub fn rescaled(&self, upsilon: &GridFunction<f64>) -> Result<Self> {
        same_lattice(&self.lattice, upsilon.lattice())?;
        let n = self.lattice.dim() as f64;
        Ok(QuadratureWeights {
            lattice: self.lattice.clone(),
            weights: self.weights.iter().zip(upsilon.values()).map(|(w, y)| w * (n * y).exp()).collect(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn total(&self) -> f64 {
        exec::sum_range(Mode::default(), self.weights.len(), |i| self.weights[i])
    }
}

/// `sum_p w_p f(p)`.
pub fn integrate(f: &GridFunction<f64>, w: &QuadratureWeights) -> Result<f64> {
    integrate_with(Mode::default(), f, w)
}

pub fn integrate_with(mode: Mode, f: &GridFunction<f64>, w: &QuadratureWeights) -> Result<f64> {
    same_lattice(f.lattice(), &w.lattice)?;
    Ok(exec::dot(mode, f.values(), &w.weights))
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Torus,
    Heisenberg,
}

/// The on-disk TOML description of a model.
///
/// ```toml
/// schema_version = 1
/// kind = "heisenberg"
/// d = 1
/// s = 4.739518907443817
/// N = 16
///
/// [[upsilon]]
/// index = [1, 0, 0]
/// amplitude = 0.1
/// phase = 0.0
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub schema_version: u32,
    pub kind: ModelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub upsilon: Vec<TrigTerm>,
}

impl ModelSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if spec.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported model schema_version {} (expected {MODEL_SCHEMA_VERSION})",
                spec.schema_version
            )));
        }
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_model(model: &ManifoldModel, points: Option<usize>) -> Self {
        let mut spec = ModelSpec {
            schema_version: MODEL_SCHEMA_VERSION,
            kind: ModelFamily::Torus,
            n: None,
            periods: None,
            d: None,
            s: None,
            points,
            upsilon: model.conformal_factor.terms.clone(),
        };
        match &model.kind {
            ModelKind::FlatTorus { periods } => {
                spec.n = Some(periods.len());
                if periods.iter().any(|p| *p != 1.0) {
                    spec.periods = Some(periods.clone());
                }
            }
            ModelKind::Heisenberg { d, s } => {
                spec.kind = ModelFamily::Heisenberg;
                spec.d = Some(*d);
                spec.s = Some(*s);
            }
        }
        spec
    }

    pub fn to_model(&self) -> Result<ManifoldModel> {
        let model = match self.kind {
            ModelFamily::Torus => {
                let periods = match (&self.periods, self.n) {
                    (Some(p), Some(n)) if p.len() != n => {
                        return Err(Error::Config(format!("n = {n} but {} periods given", p.len())))
                    }
                    (Some(p), _) => p.clone(),
                    (None, Some(n)) => vec![1.0; n],
                    (None, None) => return Err(Error::Config("torus model needs n or periods".into())),
                };
                ManifoldModel::torus_with_periods(periods)?
            }
            ModelFamily::Heisenberg => {
                let d = self.d.ok_or_else(|| Error::Config("heisenberg model needs d".into()))?;
                let s = self.s.ok_or_else(|| Error::Config("heisenberg model needs s".into()))?;
                ManifoldModel::heisenberg(d, s)?
            }
        };
        model.with_conformal_factor(TrigPolynomial::new(self.upsilon.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn heis(d: usize, n: usize) -> Lattice {
        build_lattice(&ManifoldModel::heisenberg(d, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn lattice_rejects_bad_sizes() {
        let m = ManifoldModel::torus(2).unwrap();
        assert!(build_lattice(&m, 5).is_err());
        assert!(build_lattice(&m, 2).is_err());
        assert!(build_lattice(&m, 4).is_ok());
        assert!(build_lattice(&ManifoldModel::torus(3).unwrap(), 1002).is_err());
    }

    #[test]
    fn models_are_validated() {
        assert!(ManifoldModel::torus(1).is_err());
        assert!(ManifoldModel::torus_with_periods(vec![1.0, -2.0]).is_err());
        assert!(ManifoldModel::heisenberg(0, 1.0).is_err());
        assert!(ManifoldModel::heisenberg(1, 0.0).is_err());
        let h = ManifoldModel::heisenberg(1, 2.0).unwrap();
        let t_dependent = TrigPolynomial::new(vec![TrigTerm::new(vec![0, 0, 1], 0.1, 0.0)]);
        assert!(h.clone().with_conformal_factor(t_dependent).is_err());
        assert!(h.clone().with_conformal_factor(TrigPolynomial::cosine(2, 0, 0.1)).is_err());
        assert!(h.with_conformal_factor(TrigPolynomial::cosine(3, 1, 0.1)).is_ok());
    }

    #[test]
    fn heisenberg_constants() {
        let h = ManifoldModel::heisenberg(2, 1.5).unwrap();
        assert_eq!(h.dim(), 5);
        assert_eq!(h.frame_weights(), vec![1.0, 1.0, 2.25, 2.25, 1.5f64.powi(-4)]);
        assert_eq!(h.bare_scalar_curvature(), -1.5f64.powi(6));
        assert_eq!(heis(2, 4).axis_labels(), ["x1", "x2", "y1", "y2", "t"]);
    }

    #[test]
    fn twisted_wrap_shifts_t() {
        let l = heis(1, 8);
        // (x, y, t) = (7, 3, 1) -> (0, 3, 1 - 3)
        let p = l.index_of(&[7, 3, 1]);
        let q = l.neighbor(p, 0, true);
        assert_eq!(q, l.index_of(&[0, 3, 6]));
        assert_eq!(l.neighbor(q, 0, false), p);
        // y and t wraps are plain
        assert_eq!(l.neighbor(l.index_of(&[2, 7, 5]), 1, true), l.index_of(&[2, 0, 5]));
        assert_eq!(l.neighbor(l.index_of(&[2, 3, 7]), 2, true), l.index_of(&[2, 3, 0]));
        assert_eq!(l.stride(2), 1);
        assert_eq!(l.stride(0), 64);
    }

    #[test]
    fn plane_wave_in_t_is_not_on_the_quotient() {
        let l = heis(1, 8);
        let bad = l.quotient_residual(|p| Complex64::from_polar(1.0, 2.0 * PI * p[2]));
        assert!(bad > 0.5, "{bad}");
        let good = l.quotient_residual(|p| Complex64::new((2.0 * PI * p[1]).cos(), 0.0));
        assert!(good < 1e-12, "{good}");
    }

    #[test]
    fn trig_derivatives_match_differences() {
        let f = TrigPolynomial::new(vec![TrigTerm::new(vec![1, 2], 0.7, 0.3), TrigTerm::new(vec![-1, 1], 0.2, 1.1)]);
        let x = [0.31, 0.77];
        let e = 1e-5;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += e;
            xm[a] -= e;
            let d1 = (f.value(&xp) - f.value(&xm)) / (2.0 * e);
            let d2 = (f.value(&xp) - 2.0 * f.value(&x) + f.value(&xm)) / (e * e);
            assert!((d1 - f.partial(&x, a)).abs() < 1e-7);
            assert!((d2 - f.second_partial(&x, a)).abs() < 1e-3);
        }
        assert!((f.amplitude_bound() - 0.9).abs() < 1e-15);
        assert_eq!(f.scaled(2.0).value(&x), 2.0 * f.value(&x));
    }

    #[test]
    fn quadrature_volume_and_conformal_volume() {
        let m = ManifoldModel::torus_with_periods(vec![2.0, 3.0]).unwrap();
        let l = build_lattice(&m, 16).unwrap();
        let w = QuadratureWeights::for_model(&m, &l).unwrap();
        assert!((w.total() - 6.0).abs() < 1e-12);
        // int e^{2 a cos 2 pi x} dx = I_0(2a); the rectangle rule is spectrally accurate.
        let a = 0.3;
        let ups = TrigPolynomial::cosine(2, 0, a);
        let i0 = |z: f64| {
            (0..30).map(|k| (z / 2.0).powi(2 * k) / (1..=k).map(|j| (j * j) as f64).product::<f64>()).sum::<f64>()
        };
        let r = w.rescaled(&ups.sample(&l)).unwrap();
        assert!((r.total() - 6.0 * i0(2.0 * a)).abs() < 1e-12);
        let direct = QuadratureWeights::for_model(&m.clone().with_conformal_factor(ups).unwrap(), &l).unwrap();
        assert!((direct.total() - r.total()).abs() < 1e-12);
    }

    #[test]
    fn grid_function_length_is_checked() {
        let l = heis(1, 4);
        assert!(GridFunction::new(l.clone(), vec![0.0; 63]).is_err());
        let f = GridFunction::sample(&l, |x| x[0] - x[2]);
        assert_eq!(f.max(), 0.75);
        assert_eq!(f.min(), -0.75);
        let g = GridFunction::<f64>::constant(&heis(1, 6), 1.0);
        assert!(f.mul(&g).is_err());
    }

    #[test]
    fn model_toml_round_trip() {
        let text = "schema_version = 1\nkind = \"heisenberg\"\nd = 1\ns = 4.739518907443817\nN = 16\n\n\
                    [[upsilon]]\nindex = [1, 0, 0]\namplitude = 0.1\n";
        let spec = ModelSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.points, Some(16));
        let model = spec.to_model().unwrap();
        assert_eq!(model.heisenberg_params(), Some((1, 4.739518907443817)));
        let back = ModelSpec::from_toml_str(&spec.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(ModelSpec::from_model(&model, Some(16)), spec);
    }

    #[test]
    fn model_toml_errors() {
        assert!(matches!(
            ModelSpec::from_toml_str("schema_version = 2\nkind = \"torus\"\nn = 3\n"),
            Err(Error::Config(_))
        ));
        assert!(ModelSpec::from_toml_str("schema_version = 1\nkind = \"torus\"\nn = 3\nbogus = 1\n").is_err());
        let no_n = ModelSpec::from_toml_str("schema_version = 1\nkind = \"torus\"\n").unwrap();
        assert!(no_n.to_model().is_err());
        let mismatch =
            ModelSpec::from_toml_str("schema_version = 1\nkind = \"torus\"\nn = 3\nperiods = [1.0, 2.0]\n").unwrap();
        assert!(mismatch.to_model().is_err());
    }

    proptest! {
        #[test]
        fn index_round_trip(d in 1usize..3, idx in 0usize..4096) {
            let l = heis(d, 4);
            let i = idx % l.len();
            let mut c = vec![0; l.dim()];
            l.multi_index(i, &mut c);
            prop_assert_eq!(l.index_of(&c), i);
        }

        #[test]
        fn steps_are_invertible(d in 1usize..3, idx in 0usize..4096, axis in 0usize..5) {
            let l = heis(d, 4);
            let i = idx % l.len();
            let a = axis % l.dim();
            prop_assert_eq!(l.neighbor(l.neighbor(i, a, true), a, false), i);
            prop_assert_eq!(l.neighbor(l.neighbor(i, a, false), a, true), i);
        }

        #[test]
        fn density_transforms_compose(a in -1.0f64..1.0, b in -1.0f64..1.0, w in -3.0f64..-0.5) {
            let l = build_lattice(&ManifoldModel::torus(2).unwrap(), 8).unwrap();
            let u = GridFunction::sample(&l, |x| (2.0 * PI * x[0]).sin() + 0.3);
            let ua = TrigPolynomial::cosine(2, 0, a).sample(&l);
            let ub = TrigPolynomial::cosine(2, 1, b).sample(&l);
            let sum = GridFunction::new(l.clone(), ua.values().iter().zip(ub.values()).map(|(x, y)| x + y).collect()).unwrap();
            let d0 = ConformalDensity::new(w, u);
            let two = transform_density(&transform_density(&d0, &ua).unwrap(), &ub).unwrap();
            let one = transform_density(&d0, &sum).unwrap();
            for (x, y) in two.values.values().iter().zip(one.values.values()) {
                prop_assert!((x - y).abs() <= 1e-14 * y.abs().max(1.0));
            }
            prop_assert_eq!(two.log_factor, sum);
        }

        #[test]
        fn integration_modes_agree_bitwise(seed in 0u64..1000) {
            let l = build_lattice(&ManifoldModel::torus(3).unwrap(), 20).unwrap();
            let f = GridFunction::sample(&l, |x| ((seed as f64) * x[0] + x[1] * x[2]).sin());
            let w = QuadratureWeights::for_model(&ManifoldModel::torus(3).unwrap(), &l).unwrap();
            let vals: Vec<u64> = Mode::all().into_iter().map(|m| integrate_with(m, &f, &w).unwrap().to_bits()).collect();
            prop_assert!(vals.windows(2).all(|p| p[0] == p[1]));
        }
    }
}

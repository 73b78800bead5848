//! Nodal sets and nodal domains on lattices.
//!
//! Points with `|u| < eps * max|u|` form the near-zero band and belong to no domain. The remaining
//! points are grouped into maximal connected same-sign sets under face adjacency (two neighbours
//! per axis, twisted wraps included).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{same_lattice, GridFunction, Lattice, QuadratureWeights};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    NearZero,
    Positive,
}

impl Sign {
    pub fn symbol(self) -> char {
        match self {
            Sign::Negative => '-',
            Sign::NearZero => '0',
            Sign::Positive => '+',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodalDomain {
    pub sign: Sign,
    /// Ascending flat indices.
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodalPartition {
    pub lattice: Lattice,
    pub epsilon: f64,
    pub signs: Vec<Sign>,
    /// Domain id per point; `None` on the near-zero band.
    pub domain_of: Vec<Option<usize>>,
    /// Ordered by smallest member.
    pub domains: Vec<NodalDomain>,
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// `clamp(10 |lambda| / gap, 1e-8, 1e-2)`: the relative near-zero threshold for an approximate
/// kernel vector with eigenvalue `lambda` and distance `gap` to the rest of the spectrum.
pub fn default_epsilon(eigenvalue: f64, gap: f64) -> f64 {
    if !(gap > 0.0) {
        return 1e-2;
    }
    (10.0 * eigenvalue.abs() / gap).clamp(1e-8, 1e-2)
}

/// Nodal partition of a real grid function.
pub fn partition(u: &GridFunction<f64>, epsilon: f64) -> Result<NodalPartition> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidInput(format!("epsilon {epsilon} must be nonnegative")));
    }
    let cut = epsilon * u.max_abs();
    let band: Vec<bool> = u.values().iter().map(|&v| v.abs() < cut || v == 0.0).collect();
    partition_with_band(u, epsilon, &band)
}

/// Nodal partition with a prescribed near-zero band (exact zeros are always in it). Used to carry
/// the band of `u_g` over to `u_ghat`, where a relative cut would move it.
pub fn partition_with_band(u: &GridFunction<f64>, epsilon: f64, band: &[bool]) -> Result<NodalPartition> {
    if band.len() != u.len() {
        return Err(Error::LatticeMismatch(format!("band has {} entries for {} points", band.len(), u.len())));
    }
    let lattice = u.lattice().clone();
    let vals = u.values();
    let signs: Vec<Sign> = vals
        .iter()
        .zip(band)
        .map(|(&v, &b)| {
            if b || v == 0.0 {
                Sign::NearZero
            } else if v > 0.0 {
                Sign::Positive
            } else {
                Sign::Negative
            }
        })
        .collect();
    if signs.iter().all(|s| *s == Sign::NearZero) {
        return Err(Error::InvalidInput("function vanishes at tolerance".into()));
    }
    let n = vals.len();
    let mut dsu = DisjointSets::new(n);
    let mut c = vec![0; lattice.dim()];
    let mut q = vec![0; lattice.dim()];
    for p in 0..n {
        if signs[p] == Sign::NearZero {
            continue;
        }
        lattice.multi_index(p, &mut c);
        for axis in 0..lattice.dim() {
            q.copy_from_slice(&c);
            lattice.step(&mut q, axis, true);
            let qi = lattice.index_of(&q);
            if signs[qi] == signs[p] {
                dsu.union(p, qi);
            }
        }
    }
    let mut root_to_domain = vec![usize::MAX; n];
    let mut domain_of = vec![None; n];
    let mut domains: Vec<NodalDomain> = Vec::new();
    for p in 0..n {
        if signs[p] == Sign::NearZero {
            continue;
        }
        let r = dsu.find(p);
        if root_to_domain[r] == usize::MAX {
            root_to_domain[r] = domains.len();
            domains.push(NodalDomain { sign: signs[p], members: Vec::new() });
        }
        let id = root_to_domain[r];
        domains[id].members.push(p);
        domain_of[p] = Some(id);
    }
    Ok(NodalPartition { lattice, epsilon, signs, domain_of, domains })
}

impl NodalPartition {
    pub fn domain_count(&self) -> usize {
        self.domains.len()
    }

    pub fn band(&self) -> Vec<bool> {
        self.signs.iter().map(|s| *s == Sign::NearZero).collect()
    }

    pub fn near_zero_points(&self) -> Vec<usize> {
        (0..self.signs.len()).filter(|&p| self.signs[p] == Sign::NearZero).collect()
    }

    /// Same signs and same domain decomposition (domain ids are canonical, so equality of the
    /// id vectors is equality of the decompositions).
    pub fn same_structure(&self, other: &NodalPartition) -> bool {
        self.lattice == other.lattice && self.signs == other.signs && self.domain_of == other.domain_of
    }

    pub const CSV_HEADER_PREFIX: &'static str = "point";

    /// `point,<axis labels>,sign,domain` with 17 significant digits; the domain column is `-1` on
    /// the near-zero band.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("point,");
        out.push_str(&self.lattice.axis_labels().join(","));
        out.push_str(",sign,domain\n");
        for p in 0..self.signs.len() {
            let _ = write!(out, "{p}");
            for x in self.lattice.coords(p) {
                let _ = write!(out, ",{x:.16e}");
            }
            let dom = self.domain_of[p].map_or(-1, |d| d as i64);
            let _ = writeln!(out, ",{},{dom}", self.signs[p].symbol());
        }
        out
    }
}

/// Max-norm distance on the unit torus (each coordinate periodic).
pub fn periodic_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let r = (x - y).rem_euclid(1.0);
            r.min(1.0 - r)
        })
        .fold(0.0, f64::max)
}

/// Two-sided distance between the near-zero band and the lattice points where `predicted` holds:
/// the larger of the two directed Hausdorff distances in the periodic max norm.
pub fn nodal_set_distance<P>(part: &NodalPartition, predicted: P) -> Result<f64>
where
    P: Fn(&[f64]) -> bool,
{
    let band: Vec<Vec<f64>> = part.near_zero_points().into_iter().map(|p| part.lattice.coords(p)).collect();
    if band.is_empty() {
        return Err(Error::InvalidInput("empty near-zero band".into()));
    }
    let pred: Vec<Vec<f64>> =
        (0..part.lattice.len()).map(|p| part.lattice.coords(p)).filter(|x| predicted(x)).collect();
    if pred.is_empty() {
        return Err(Error::InvalidInput("predicted set has no lattice points".into()));
    }
    let directed = |from: &[Vec<f64>], to: &[Vec<f64>]| {
        from.iter()
            .map(|a| to.iter().map(|b| periodic_distance(a, b)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Ok(directed(&band, &pred).max(directed(&pred, &band)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainIntegral {
    pub integral: f64,
    pub min: f64,
}

/// `sum_{p in domain} f(p) w(p)` together with `min_{p in domain} f(p)`.
pub fn domain_integral(
    part: &NodalPartition,
    domain: usize,
    f: &GridFunction<f64>,
    weights: &QuadratureWeights,
) -> Result<DomainIntegral> {
    same_lattice(&part.lattice, f.lattice())?;
    same_lattice(&part.lattice, weights.lattice())?;
    let dom = part
        .domains
        .get(domain)
        .ok_or_else(|| Error::InvalidInput(format!("domain {domain} out of range ({})", part.domains.len())))?;
    let mut integral = 0.0;
    let mut min = f64::INFINITY;
    for &p in &dom.members {
        let v = f.values()[p];
        integral += v * weights.weights()[p];
        min = min.min(v);
    }
    Ok(DomainIntegral { integral, min })
}

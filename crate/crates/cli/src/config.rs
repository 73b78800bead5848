//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use gjms_core::geometry::{ManifoldModel, ModelFamily, ModelSpec, TrigPolynomial, TrigTerm, MODEL_SCHEMA_VERSION};
use gjms_core::heisenberg::{critical_s, AnalyticOperator};
use gjms_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::args::{Common, Op};

/// Everything a run needs. `--config` files use this layout:
///
/// ```toml
/// op = "yamabe"
/// s_sweep = [5.0, 10.0, 20.0, 40.0]
///
/// [model]
/// schema_version = 1
/// kind = "heisenberg"
/// d = 1
/// s = 1.0
/// N = 12
///
/// [[upsilons]]
/// terms = [{ index = [1, 0, 0], amplitude = 0.1 }]
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    pub op: Option<Op>,
    pub k: Option<u32>,
    pub s_sweep: Option<Vec<f64>>,
    pub cutoff: Option<f64>,
    pub count: Option<usize>,
    pub tol_scale: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub upsilons: Vec<UpsilonSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsilonSample {
    pub terms: Vec<TrigTerm>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Flags win over the file.
    pub fn overlay(mut self, c: &Common) -> Result<Self> {
        if let Some(m) = &c.model {
            self.model = Some(model_from_flags(m, c, self.model.take())?);
        } else if let Some(spec) = self.model.as_mut() {
            if let Some(n) = c.points {
                spec.points = Some(n);
            }
        }
        if c.op.is_some() {
            self.op = c.op;
        }
        if c.k.is_some() {
            self.k = c.k;
        }
        if let Some(sw) = &c.s_sweep {
            self.s_sweep = Some(sw.clone());
        }
        if c.cutoff.is_some() {
            self.cutoff = c.cutoff;
        }
        if c.count.is_some() {
            self.count = c.count;
        }
        if c.tol_scale.is_some() {
            self.tol_scale = c.tol_scale;
        }
        if c.seed.is_some() {
            self.seed = c.seed;
        }
        if c.out.is_some() {
            self.out.clone_from(&c.out);
        }
        Ok(self)
    }

    pub fn spec(&self) -> Result<&ModelSpec> {
        self.model.as_ref().ok_or_else(|| Error::Config("no model given (use --model or a [model] table)".into()))
    }

    /// The model including its conformal factor, validated.
    pub fn model(&self) -> Result<ManifoldModel> {
        self.spec()?.to_model()
    }

    pub fn points(&self) -> Result<usize> {
        self.spec()?.points.ok_or_else(|| Error::Config("no resolution given (use --N or model.N)".into()))
    }

    pub fn op(&self) -> Op {
        self.op.unwrap_or(Op::Yamabe)
    }

    pub fn upsilon_samples(&self, model: &ManifoldModel) -> Vec<TrigPolynomial> {
        if !self.upsilons.is_empty() {
            return self.upsilons.iter().map(|u| TrigPolynomial::new(u.terms.clone())).collect();
        }
        let dim = model.dim();
        let mut xy = vec![0; dim];
        xy[0] = 1;
        xy[1] = 1;
        vec![
            TrigPolynomial::cosine(dim, 0, 0.1),
            TrigPolynomial::cosine(dim, 1, 0.3),
            TrigPolynomial::new(vec![TrigTerm::new(xy, 0.5, 0.0)]),
        ]
    }
}

fn model_from_flags(kind: &str, c: &Common, previous: Option<ModelSpec>) -> Result<ModelSpec> {
    let path = Path::new(kind);
    if path.extension().is_some_and(|e| e == "toml") {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{kind}: {e}")))?;
        let mut spec = ModelSpec::from_toml_str(&text)?;
        if c.points.is_some() {
            spec.points = c.points;
        }
        return Ok(spec);
    }
    let upsilon = previous.map(|p| p.upsilon).unwrap_or_default();
    let base = ModelSpec {
        schema_version: MODEL_SCHEMA_VERSION,
        kind: ModelFamily::Torus,
        n: None,
        periods: None,
        d: None,
        s: None,
        points: c.points,
        upsilon,
    };
    match kind {
        "torus" => Ok(ModelSpec { n: Some(c.n.ok_or_else(|| Error::Config("torus needs --n".into()))?), ..base }),
        "heis" | "heisenberg" => {
            let d = c.d.ok_or_else(|| Error::Config("heisenberg needs --d".into()))?;
            // negcount takes s from the sweep, so a missing --s only fails once a model is built.
            let s = match c.s.as_deref() {
                None => None,
                Some("critical") => Some(critical_s(d)),
                Some(v) => Some(v.parse().map_err(|_| Error::Config(format!("--s: not a number: {v}")))?),
            };
            Ok(ModelSpec { kind: ModelFamily::Heisenberg, d: Some(d), s, ..base })
        }
        other => Err(Error::Config(format!("unknown model {other:?} (torus, heis, or a .toml file)"))),
    }
}

pub fn analytic_op(op: Op) -> AnalyticOperator {
    match op {
        Op::Delta => AnalyticOperator::Delta,
        Op::Yamabe => AnalyticOperator::Yamabe,
        Op::Paneitz => AnalyticOperator::Paneitz,
    }
}

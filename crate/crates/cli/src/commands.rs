use std::fmt::Write as _;

use gjms_core::conformal::{kernel_with_refinement, run_battery, zero_qk_criterion, BatteryConfig, QkOutcome};
use gjms_core::exec::Mode;
use gjms_core::geometry::{build_lattice, ManifoldModel};
use gjms_core::heisenberg::{enumerate_spectrum, negative_count_sweep, null_eigenvectors, SpectralResolution};
use gjms_core::nodal::{default_epsilon, partition};
use gjms_core::operators::{assemble_laplacian, assemble_paneitz, assemble_yamabe, yamabe_constant, OperatorMatrix};
use gjms_core::spectral::{
    eigen_low_with, eigenvalues_all, growth_fit, inertia, EigenOptions, KernelResult, KernelStatus,
};
use gjms_core::{Error, Result};
use serde_json::json;

use crate::args::Op;
use crate::config::{analytic_op, RunConfig};

/// Largest lattice solved densely in full by `spectrum --grid`.
const FULL_SPECTRUM_LIMIT: usize = 5000;

pub struct Output {
    pub text: String,
    pub code: i32,
    /// Short human-readable summary for stderr.
    pub summary: Option<String>,
}

impl Output {
    fn ok(text: String) -> Self {
        Output { text, code: 0, summary: None }
    }
}

fn assemble(op: Op, model: &ManifoldModel, n: usize) -> Result<OperatorMatrix> {
    let l = build_lattice(model, n)?;
    match op {
        Op::Delta => assemble_laplacian(model, &l),
        Op::Yamabe => assemble_yamabe(model, &l),
        Op::Paneitz => assemble_paneitz(model, &l),
    }
}

pub fn spectrum(cfg: &RunConfig, analytic: bool, grid: bool) -> Result<Output> {
    let spec = cfg.spec()?;
    let use_grid = grid || (!analytic && spec.points.is_some());
    let model = cfg.model()?;
    if !use_grid {
        let (d, s) = model
            .heisenberg_params()
            .ok_or_else(|| Error::Config("the analytic spectrum is only available for Heisenberg models".into()))?;
        if !model.conformal_factor.is_zero() {
            return Err(Error::Config("the analytic spectrum needs a model without conformal factor".into()));
        }
        let cutoff = cfg.cutoff.ok_or_else(|| Error::Config("--analytic needs --cutoff".into()))?;
        return Ok(Output::ok(enumerate_spectrum(analytic_op(cfg.op()), d, s, cutoff)?.to_csv()));
    }
    let op = cfg.op();
    let p = assemble(op, &model, cfg.points()?)?;
    let mut values = if p.len() <= FULL_SPECTRUM_LIMIT {
        eigenvalues_all(&p)?
    } else {
        let k = cfg.count.unwrap_or(64).min(p.len());
        eigen_low_with(&p, k, &EigenOptions { vectors: false, ..EigenOptions::default() })?.values
    };
    if let Some(c) = cfg.cutoff {
        values.retain(|v| *v <= c);
    }
    // Laplace eigenvalue behind each row, when the shift is a known constant.
    let shift = match op {
        Op::Delta => Some(0.0),
        Op::Yamabe if model.conformal_factor.is_zero() => {
            Some(yamabe_constant(model.dim()) * model.bare_scalar_curvature())
        }
        _ => None,
    };
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut out = String::new();
    out.push_str(SpectralResolution::CSV_HEADER);
    out.push('\n');
    let mut i = 0;
    while i < values.len() {
        let mut j = i + 1;
        while j < values.len() && values[j] - values[j - 1] <= 1e-9 * scale {
            j += 1;
        }
        let v = values[i..j].iter().sum::<f64>() / (j - i) as f64;
        let delta = shift.map_or(String::new(), |c| format!("{:.16e}", v - c));
        let _ = writeln!(out, "grid,k={i}..{},{delta},{v:.16e},{}", j - 1, j - i);
        i = j;
    }
    Ok(Output::ok(out))
}

pub fn negcount(cfg: &RunConfig, grid: bool) -> Result<Output> {
    let sweep = cfg.s_sweep.clone().unwrap_or_default();
    if sweep.is_empty() {
        return Err(Error::Config("negcount needs a nonempty --s-sweep".into()));
    }
    if sweep.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Config("s values must be positive and finite".into()));
    }
    let spec = cfg.spec()?;
    let d = spec.d.ok_or_else(|| Error::Config("negcount needs a Heisenberg model (--model heis --d ...)".into()))?;
    let op = cfg.op();
    let counts: Vec<(f64, u128)> = if grid {
        let n = cfg.points()?;
        sweep
            .iter()
            .map(|&s| {
                let m = ManifoldModel::heisenberg(d, s)?;
                Ok((s, inertia(&assemble(op, &m, n)?, 0.0)?.negative as u128))
            })
            .collect::<Result<_>>()?
    } else {
        negative_count_sweep(Mode::default(), analytic_op(op), d, &sweep)?
    };
    let mut out = String::from("s,negative_count\n");
    for (s, c) in &counts {
        let _ = writeln!(out, "{s:.16e},{c}");
    }
    let fit = growth_fit(&counts).ok();
    let increasing = counts.windows(2).all(|w| w[1].1 > w[0].1);
    let (check, pass) = match (op, d) {
        (Op::Yamabe, 1) => {
            let slope = fit.as_ref().map(|f| f.slope);
            ("slope in [2.7, 3.3]", slope.is_some_and(|s| (2.7..=3.3).contains(&s)))
        }
        (Op::Paneitz, _) => ("strictly increasing", increasing),
        _ => ("none", true),
    };
    let summary = json!({
        "slope": fit.as_ref().map(|f| f.slope),
        "intercept": fit.as_ref().map(|f| f.intercept),
        "strictly_increasing": increasing,
        "check": check,
        "pass": pass,
    });
    Ok(Output { text: out, code: if pass { 0 } else { 1 }, summary: Some(summary.to_string()) })
}

pub fn battery(cfg: &RunConfig) -> Result<Output> {
    let model = cfg.model()?;
    let upsilons = if cfg.upsilons.is_empty() && !model.conformal_factor.is_zero() {
        vec![model.conformal_factor.clone()]
    } else {
        cfg.upsilon_samples(&model)
    };
    let mut b = BatteryConfig::new(model.bare(), cfg.points()?, upsilons);
    b.k = cfg.k.unwrap_or(1);
    if let Some(t) = cfg.tol_scale {
        b.tol_scale = t;
    }
    if let Some(s) = cfg.seed {
        b.seed = s;
    }
    let r = run_battery(&b)?;
    let summary =
        format!("{} pass, {} fail, {} indeterminate", r.summary.pass, r.summary.fail, r.summary.indeterminate);
    Ok(Output { text: r.to_json() + "\n", code: r.exit_code(), summary: Some(summary) })
}

fn kernel(cfg: &RunConfig) -> Result<KernelResult> {
    let model = cfg.model()?;
    let n = cfg.points()?;
    if n < 4 || n % 2 != 0 {
        return Err(Error::Config(format!("kernel runs pair N with N/2; N must be even and >= 4, got {n}")));
    }
    let op = match cfg.k.unwrap_or(1) {
        1 => Op::Yamabe,
        2 => Op::Paneitz,
        k => return Err(Error::Config(format!("no operator with k = {k}"))),
    };
    let fine = assemble(op, &model, n)?;
    let coarse = assemble(op, &model, n / 2)?;
    kernel_with_refinement(&fine, &coarse, &EigenOptions::default())
}

pub fn nullvec(cfg: &RunConfig, analytic: bool, index: usize) -> Result<Output> {
    if analytic {
        let model = cfg.model()?;
        let (d, _) =
            model.heisenberg_params().ok_or_else(|| Error::Config("--analytic needs a Heisenberg model".into()))?;
        let l = build_lattice(&model, cfg.points()?)?;
        let u = null_eigenvectors(d, &l)?.plus.re();
        return Ok(Output::ok(partition(&u, 1e-6)?.to_csv()));
    }
    let k = kernel(cfg)?;
    let code = if k.status == KernelStatus::Certified { 0 } else { 3 };
    if k.basis.is_empty() {
        return Ok(Output {
            text: String::new(),
            code: if code == 0 { 1 } else { code },
            summary: Some("empty kernel".into()),
        });
    }
    let u = k
        .basis
        .get(index)
        .ok_or_else(|| Error::Config(format!("--vector {index} but the kernel has dimension {}", k.dim)))?;
    let eps = default_epsilon(k.eigenvalues[index], k.nearest_outside);
    let part = partition(u, eps)?;
    let summary = format!("kernel dimension {}, {} nodal domains, epsilon {eps:e}", k.dim, part.domain_count());
    Ok(Output { text: part.to_csv(), code, summary: Some(summary) })
}

pub fn qk(cfg: &RunConfig) -> Result<Output> {
    let k = kernel(cfg)?;
    let eps = default_epsilon(k.eigenvalues.first().copied().unwrap_or(0.0), k.nearest_outside);
    let v = zero_qk_criterion(&k.basis, eps)?;
    let certified = k.status == KernelStatus::Certified;
    let code = if !certified || v.outcome == QkOutcome::Indeterminate { 3 } else { 0 };
    let report = json!({
        "schema_version": 1,
        "kernel_dimension": k.dim,
        "kernel_status": k.status,
        "gap_tol": k.gap_tol,
        "epsilon": eps,
        "verdict": v,
    });
    let text = serde_json::to_string_pretty(&report).expect("verdict serialises") + "\n";
    Ok(Output { text, code, summary: None })
}

pub fn export_matrix(cfg: &RunConfig) -> Result<Output> {
    let p = assemble(cfg.op(), &cfg.model()?, cfg.points()?)?;
    let mut buf = Vec::new();
    p.symmetric_form().write_triplets(&mut buf)?;
    Ok(Output::ok(String::from_utf8(buf).expect("ascii")))
}

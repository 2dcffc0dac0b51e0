//! Command implementations. Each returns a [`Report`].

use std::path::{Path, PathBuf};

use scale_evolve::logistic::{
    build_discrete_operators, check_g, continuum_bounds, evolve_hierarchy, logistic_system, GSampler, Hierarchy, LogisticOptions,
    LogisticParams,
};
use scale_evolve::ode_system::{build_system, truncation_study, OdeModel};
use scale_evolve::ovcyannikov::{
    backward_evolve, dual_evolve, forward_evolve, stability_compare, EvolutionResult, EvolutionSystem, EvolveOptions,
};
use scale_evolve::{operator_norm_graded, DualVector, MajorantM, ScaleVector};

use crate::config::{load_model, Model};
use crate::error::CliError;
use crate::report::{obj, Json, ObjBuilder, Report};

/// Numeric options shared by all commands.
#[derive(Debug, Clone)]
pub struct Numerics {
    pub tol: f64,
    pub panels: usize,
    pub rho_max: f64,
    pub seed: u64,
}

impl Numerics {
    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            tol: self.tol,
            panels: self.panels,
            rho_max: self.rho_max,
            max_panels: (2 * self.panels).max(EvolveOptions::default().max_panels),
            ..Default::default()
        }
    }
}

/// Scale pair and time window of a run.
#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub s: f64,
    pub t: f64,
}

fn ode(model: &Path) -> Result<(OdeModel, ScaleVector), CliError> {
    match load_model(model)? {
        Model::Ode { model, initial } => Ok((model, initial)),
        Model::Logistic { .. } => Err(CliError::Usage(format!("{} is a logistic model; this command needs kind = \"ode\"", model.display()))),
    }
}

fn logistic(model: &Path) -> Result<(LogisticParams, usize, Hierarchy), CliError> {
    match load_model(model)? {
        Model::Logistic { params, n_max, initial } => Ok((params, n_max, initial)),
        Model::Ode { .. } => Err(CliError::Usage(format!("{} is an ode model; this command needs kind = \"logistic\"", model.display()))),
    }
}

fn header(command: &str, model: Option<&Path>, num: &Numerics) -> ObjBuilder {
    obj()
        .field("command", command)
        .field("model", model.map(|p| p.display().to_string()))
        .field("seed", num.seed)
}

fn window_json(w: &Window) -> Json {
    obj().field("alpha", w.alpha).field("alpha_prime", w.alpha_prime).field("s", w.s).field("t", w.t).build()
}

pub fn majorant_json(m: &MajorantM) -> Json {
    obj()
        .field("alpha_star", m.alpha_star)
        .field("safety", m.safety)
        .field("knots", Json::Arr(m.knots.iter().map(|&(a, v)| Json::from(vec![a, v])).collect()))
        .build()
}

/// `K`, the fitted `M` and `T(α', α)`.
pub fn certificate(sys: &EvolutionSystem, alpha_prime: f64, alpha: f64) -> Result<Json, CliError> {
    Ok(obj()
        .field("k_bound", sys.horizon.k_bound)
        .field("majorant", majorant_json(&sys.horizon.majorant))
        .field("m_alpha", sys.horizon.majorant.eval(alpha)?)
        .field("horizon", sys.existence_time(alpha_prime, alpha)?)
        .build())
}

pub fn budget(r: &EvolutionResult) -> Json {
    obj()
        .field("n_terms", r.n_terms)
        .field("panels", r.panels)
        .field("rho", r.rho)
        .field("series_tail", r.series_tail)
        .field("quad_error", r.quad_error)
        .field("input_tail", r.input_tail)
        .field("total", r.total_error())
        .build()
}

fn vector_table(v: &[f64]) -> (Vec<String>, Vec<Vec<String>>) {
    let rows = v.iter().enumerate().map(|(n, x)| vec![n.to_string(), crate::report::fmt_float(*x)]).collect();
    (vec!["n".into(), "value".into()], rows)
}

pub fn horizon(model: &Path, alpha: f64, alpha_prime: f64, tau: f64, num: &Numerics) -> Result<Report, CliError> {
    let (cert, alpha_star) = match load_model(model)? {
        Model::Ode { model: m, .. } => (certificate(&build_system(&m, alpha, alpha_prime, tau)?, alpha_prime, alpha)?, m.alpha_star),
        Model::Logistic { params, n_max, .. } => {
            let ls = logistic_system(&params, n_max, alpha, alpha_prime, tau, 1.1)?;
            (certificate(&ls.system, alpha_prime, alpha)?, ls.alpha_star)
        }
    };
    let h = cert.get("horizon").cloned().unwrap_or(Json::Null);
    Ok(Report::json(
        header("horizon", Some(model), num)
            .field("alpha", alpha)
            .field("alpha_prime", alpha_prime)
            .field("alpha_star", alpha_star)
            .field("certified_span", tau)
            .field("horizon", h)
            .field("certificate", cert)
            .build(),
    ))
}

pub fn solve(model: &Path, w: Window, backward: bool, num: &Numerics) -> Result<Report, CliError> {
    let (m, x) = ode(model)?;
    let sys = build_system(&m, w.alpha, w.alpha_prime, (w.t - w.s).max(0.0))?;
    let opts = num.evolve_options();
    let r = if backward {
        backward_evolve(&sys, &x, w.s, w.t, w.alpha, w.alpha_prime, &opts)?
    } else {
        forward_evolve(&sys, &x, w.s, w.t, w.alpha, w.alpha_prime, &opts)?
    };
    let json = header(if backward { "backward" } else { "solve" }, Some(model), num)
        .field("window", window_json(&w))
        .field("certificate", certificate(&sys, w.alpha_prime, w.alpha)?)
        .field("budget", budget(&r))
        .field("norm_alpha_prime", r.value.norm(w.alpha_prime)?)
        .field("value", r.value.entries().to_vec())
        .build();
    Ok(Report { json, table: Some(vector_table(r.value.entries())) })
}

pub fn dual(model: &Path, w: Window, num: &Numerics) -> Result<Report, CliError> {
    let (m, x) = ode(model)?;
    let sys = build_system(&m, w.alpha, w.alpha_prime, (w.t - w.s).max(0.0))?;
    let ell = DualVector::new(x.entries().to_vec())?;
    let r = dual_evolve(&sys, &ell, w.s, w.t, w.alpha, w.alpha_prime, &num.evolve_options(), None)?;
    let json = header("dual", Some(model), num)
        .field("window", window_json(&w))
        .field("certificate", certificate(&sys, w.alpha_prime, w.alpha)?)
        .field(
            "budget",
            obj()
                .field("n_terms", r.plan.n_terms)
                .field("panels", r.plan.panels)
                .field("rho", r.rho)
                .field("series_tail", r.series_tail)
                .field("quad_error", r.quad_error)
                .field("total", r.total_error()),
        )
        .field("value", r.value.entries().to_vec())
        .build();
    Ok(Report { json, table: Some(vector_table(r.value.entries())) })
}

pub fn stability(model: &Path, other: &Path, w: Window, num: &Numerics) -> Result<Report, CliError> {
    let (m1, x) = ode(model)?;
    let (m2, _) = ode(other)?;
    let tau = (w.t - w.s).max(0.0);
    let s1 = build_system(&m1, w.alpha, w.alpha_prime, tau)?;
    let s2 = build_system(&m2, w.alpha, w.alpha_prime, tau)?;
    let d = w.alpha - w.alpha_prime;
    let chain = [w.alpha_prime, w.alpha_prime + d / 3.0, w.alpha_prime + 2.0 * d / 3.0, w.alpha];
    let r = stability_compare(&s1, &s2, &x, w.s, w.t, chain, &num.evolve_options())?;
    Ok(Report::json(
        header("stability", Some(model), num)
            .field("other", other.display().to_string())
            .field("window", window_json(&w))
            .field("alpha_chain", chain.to_vec())
            .field("certificate", certificate(&s1, w.alpha_prime, w.alpha)?)
            .field("other_certificate", certificate(&s2, w.alpha_prime, w.alpha)?)
            .field("measured", r.measured)
            .field("bound", r.bound)
            .field("budget", r.budget)
            .field("within_bound", r.measured <= r.bound + r.budget)
            .build(),
    ))
}

pub fn study(model: &Path, w: Window, n_list: &[usize], num: &Numerics) -> Result<Report, CliError> {
    let (m, x) = ode(model)?;
    let rep = truncation_study(&m, &x, w.alpha, w.alpha_prime, w.t, n_list, &num.evolve_options())?;
    let rows: Vec<Vec<String>> = rep.rows.iter().map(|r| vec![r.n.to_string(), crate::report::fmt_float(r.error)]).collect();
    let json = header("truncation-study", Some(model), num)
        .field("window", window_json(&Window { s: 0.0, ..w }))
        .field("n_ref", rep.n_ref)
        .field("panels", rep.panels)
        .field("n_terms", rep.n_terms)
        .field("monotone", rep.monotone)
        .field(
            "rows",
            Json::Arr(rep.rows.iter().map(|r| obj().field("n", r.n).field("e_n", r.error).build()).collect()),
        )
        .build();
    Ok(Report { json, table: Some((vec!["N".into(), "e_N".into()], rows)) })
}

pub fn logistic_check_g(model: &Path, sample_size: usize, samples: usize, num: &Numerics) -> Result<Report, CliError> {
    let (p, _, _) = logistic(model)?;
    let sampler = GSampler { n_max: sample_size, samples, seed: num.seed };
    let r = check_g(&p, &sampler)?;
    Ok(Report::json(
        header("logistic-check-g", Some(model), num)
            .field("theta", p.theta)
            .field("b", p.b)
            .field("max_points", sample_size)
            .field("samples", r.samples)
            .field("min_margin", r.min_margin)
            .field("worst", r.worst.clone())
            .field("pass", r.pass)
            .field("pair_min", r.pair_min)
            .field("worst_pair", r.worst_pair.to_vec())
            .field("pair_pass", r.pair_pass)
            .build(),
    ))
}

pub fn logistic_bounds(model: &Path, alpha: f64, alpha_prime: f64, num: &Numerics) -> Result<Report, CliError> {
    let (p, n_max, _) = logistic(model)?;
    let b = continuum_bounds(&p, alpha, alpha_prime)?;
    let ops = build_discrete_operators(&p, n_max)?;
    let g = ops.basis.grading();
    let l0 = operator_norm_graded(&ops.lhat0, &g, alpha, alpha_prime)?;
    let l1 = operator_norm_graded(&ops.lhat1, &g, alpha, alpha_prime)?;
    Ok(Report::json(
        header("logistic-bounds", Some(model), num)
            .field("alpha", alpha)
            .field("alpha_prime", alpha_prime)
            .field("n_max", n_max)
            .field("bound_l0", b.l0)
            .field("bound_l1", b.l1)
            .field("bound_l1_shifted", b.l1_shifted)
            .field("measured_l0", l0)
            .field("measured_l1", l1)
            .field("l0_within_bound", l0 <= b.l0)
            .field("l1_within_bound", l1 <= b.l1)
            .build(),
    ))
}

pub fn logistic_evolve(model: &Path, w: Window, defect_tol: f64, num: &Numerics) -> Result<Report, CliError> {
    let (p, n_max, h0) = logistic(model)?;
    if w.s != 0.0 {
        return Err(CliError::Usage("logistic evolve starts at s = 0".into()));
    }
    let opts = LogisticOptions { evolve: num.evolve_options(), defect_tol, ..Default::default() };
    let r = evolve_hierarchy(&p, &h0, w.t, w.alpha, w.alpha_prime, &opts)?;
    let ls = logistic_system(&p, n_max, w.alpha, w.alpha_prime, w.t, opts.safety)?;
    let basis = &ls.ops.basis;
    let coords = basis.flatten(&r.value)?;
    let rows = (0..basis.len())
        .map(|i| {
            let cells: Vec<String> = basis.rep(i).iter().map(|c| c.to_string()).collect();
            vec![basis.level(i).to_string(), cells.join(" "), crate::report::fmt_float(coords[i])]
        })
        .collect();
    let json = header("logistic-evolve", Some(model), num)
        .field("window", window_json(&w))
        .field("hierarchy", match r.value.kind {
            scale_evolve::logistic::HierarchyKind::Quasiobservable => "quasiobservable",
            scale_evolve::logistic::HierarchyKind::Correlation => "correlation",
        })
        .field("alpha_star", ls.alpha_star)
        .field("certificate", certificate(&ls.system, w.alpha_prime, w.alpha)?)
        .field(
            "budget",
            obj()
                .field("n_terms", r.plan.n_terms)
                .field("panels", r.plan.panels)
                .field("rho", r.rho)
                .field("total", r.error_bound)
                .field("closure_defect", r.closure_defect)
                .field("reads_above_top", r.reads_above_top),
        )
        .field("levels", Json::Arr(r.value.comps.iter().map(|c| Json::from(c.clone())).collect()))
        .build();
    Ok(Report { json, table: Some((vec!["n".into(), "cells".into(), "value".into()], rows)) })
}

/// Resolves a model path argument.
pub fn require_model(model: &Option<PathBuf>) -> Result<&Path, CliError> {
    model.as_deref().ok_or_else(|| CliError::Usage("--model is required for this command".into()))
}

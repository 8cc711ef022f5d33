//! One function per subcommand; each builds a [`Report`] per threshold.

use ma1_core::montecarlo;
use ma1_core::negrho::{self, DeltaGammaExpansion};
use ma1_core::recurrence::{self, Recurrence, VSequence};
use ma1_core::series;
use ma1_core::spectral::{self, DiscreteOperator, SpectralData};
use ma1_core::{c64, Ma1Problem};
use serde_json::{Map, Value};

use crate::config::{CommandKind, Format, Route, RunConfig};
use crate::report::{self, json_complex, json_num, Report};
use crate::CliError;

/// Rendered output plus any tolerance violations found by `compare`.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub text: String,
    pub plot_data: Option<String>,
    pub violations: Vec<String>,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut reports = Vec::new();
    let mut violations = Vec::new();
    for x in cfg.xs.values() {
        let r = match cfg.command {
            CommandKind::Exact => cmd_exact(cfg, x)?,
            CommandKind::Spectral => cmd_spectral(cfg, x)?,
            CommandKind::SeriesEigen => cmd_series(cfg, x)?,
            CommandKind::Mc => cmd_mc(cfg, x)?,
            CommandKind::Compare => {
                let (r, v) = cmd_compare(cfg, x)?;
                violations.extend(v);
                r
            }
        };
        reports.push(r);
    }
    let sweep = cfg.xs.is_grid();
    let text = match cfg.format {
        Format::Csv => report::render_csv(&reports, sweep),
        Format::Json => report::render_json(header(cfg), &reports, sweep),
    };
    let plot_data = cfg
        .emit_plot_data
        .as_ref()
        .map(|_| report::render_plot_data(&reports, sweep));
    Ok(Outcome {
        text,
        plot_data,
        violations,
    })
}

fn header(cfg: &RunConfig) -> Map<String, Value> {
    let mut h = Map::new();
    h.insert("command".into(), Value::from(cfg.command.name()));
    h.insert("model".into(), Value::from(cfg.model.to_string()));
    h.insert("rho".into(), json_num(cfg.rho));
    let mut g = Map::new();
    g.insert("panels".into(), Value::from(cfg.grid.panels as u64));
    g.insert("order".into(), Value::from(cfg.grid.order as u64));
    g.insert("tail_eps".into(), json_num(cfg.grid.tail_eps));
    h.insert("grid".into(), Value::Object(g));
    if matches!(cfg.command, CommandKind::Mc | CommandKind::Compare)
        || cfg.compare.contains(&Route::Mc)
    {
        h.insert("paths".into(), Value::from(cfg.paths));
        h.insert("seed".into(), Value::from(cfg.seed));
    }
    h
}

fn problem(cfg: &RunConfig, x: f64) -> Result<Ma1Problem, CliError> {
    Ok(Ma1Problem::new(cfg.rho, x, cfg.model)?)
}

fn complex_list(v: &[c64]) -> Value {
    Value::Array(v.iter().map(|z| json_complex(z.re, z.im)).collect())
}

fn iid_column(cfg: &RunConfig, x: f64) -> Vec<f64> {
    (0..=cfg.n_max)
        .map(|n| recurrence::u_iid_reference(&cfg.model, x, n))
        .collect()
}

fn cmd_exact(cfg: &RunConfig, x: f64) -> Result<Report, CliError> {
    let mut r = Report::new(x);
    if cfg.rho == 0.0 {
        r.push_u("u_iid", iid_column(cfg, x));
        r.footer.push("rho = 0: i.i.d. reference F(x)^n only".into());
        return Ok(r);
    }
    let rec = Recurrence::new(problem(cfg, x)?, cfg.grid)?;
    let exact = rec.u_exact(cfg.n_max)?;
    r.push_u("u_rec", exact.u);
    r.push_aux("err_rec", exact.err.unwrap_or_default());
    if cfg.rho < 0.0 {
        let v = rec.compute_v(cfg.n_max + 1);
        r.push_u("u_bell", recurrence::bell_u(&v, cfg.n_max)?.u);
        let gap = max_abs_diff(r.column("u_rec").unwrap(), r.column("u_bell").unwrap());
        r.footer.push(format!("max |u_rec - u_bell| = {gap:e}"));
    }
    if cfg.iid_reference {
        r.push_u("u_iid", iid_column(cfg, x));
    }
    Ok(r)
}

fn spectral_data(cfg: &RunConfig, op: &DiscreteOperator) -> Result<SpectralData, CliError> {
    Ok(spectral::eigendecompose(op, cfg.modes.min(op.dim()))?)
}

fn cmd_spectral(cfg: &RunConfig, x: f64) -> Result<Report, CliError> {
    let p = problem(cfg, x)?;
    let op = DiscreteOperator::new(&p, &cfg.grid)?;
    let spec = spectral_data(cfg, &op)?;
    let (beta, b) = spectral::beta_weights(&spec);
    let mut r = Report::new(x);
    r.extra.insert("nu".into(), complex_list(&spec.nu));
    r.extra.insert("beta".into(), complex_list(&beta));
    r.extra.insert("B".into(), json_complex(b.re, b.im));
    r.extra.insert("norm2sq".into(), json_num(op.norm2sq));
    r.extra.insert("biorthogonality_error".into(), json_num(spec.diag.biorth_error));
    r.extra.insert("multiplicity".into(), Value::from(spec.multiplicity as u64));
    if cfg.rho > 0.0 {
        let u = spectral::u_spectral_pos(&spec, cfg.n_max)?;
        let asym: Vec<_> = (0..=cfg.n_max).map(|n| spectral::u_asymptotic_pos(&spec, n)).collect();
        r.push_u("u", u.u);
        r.push_u("asymptotic", asym.iter().map(|a| a.value).collect());
        r.extra.insert("gap".into(), json_num(asym[0].gap));
        r.footer.extend(u.meta.notes);
    } else {
        let dg = negrho::delta_gamma(&op)?;
        let u = negrho::u_delta_gamma(&dg, cfg.n_max)?;
        let asym: Vec<_> = (0..=cfg.n_max).map(|n| negrho::u_asymptotic_neg(&dg, n)).collect();
        r.push_u("u", u.u);
        r.push_u("asymptotic", asym.iter().map(|a| a.value).collect());
        r.extra.insert("gap".into(), json_num(asym[0].gap));
        let k = cfg.modes.min(dg.delta.len());
        r.extra.insert("delta".into(), complex_list(&dg.delta[..k]));
        r.extra.insert("gamma".into(), complex_list(&dg.gamma[..k]));
        r.footer.extend(u.meta.notes);
    }
    for route in &cfg.compare {
        match route {
            Route::Exact => {
                let e = Recurrence::new(p, cfg.grid)?.u_exact(cfg.n_max)?;
                let d = max_abs_diff(r.column("u").unwrap(), &e.u);
                r.push_u("u_exact", e.u);
                r.footer.push(format!("max |u - u_exact| = {d:e}"));
            }
            Route::Mc => {
                let mc = montecarlo::estimate_curve(&p, cfg.n_max, cfg.paths, cfg.seed)?;
                let se = mc.err.unwrap_or_default();
                let z = max_z(r.column("u").unwrap(), &mc.u, &se);
                let d = max_abs_diff(r.column("u").unwrap(), &mc.u);
                r.push_u("u_mc", mc.u);
                r.push_aux("mc_se", se);
                r.footer.push(format!("max |u - u_mc| = {d:e} (max {z:.3} standard errors)"));
            }
            other => {
                return Err(CliError::Usage(format!(
                    "--compare accepts exact and mc, got {}",
                    other.name()
                )))
            }
        }
    }
    Ok(r)
}

fn cmd_series(cfg: &RunConfig, x: f64) -> Result<Report, CliError> {
    let p = problem(cfg, x)?;
    let ev = series::eigenvalues_from_series(&p, cfg.series_order)?;
    let mut r = Report::new(x);
    r.index = Some("k");
    r.push_aux("nu_re", ev.roots.iter().map(|z| z.re).collect());
    r.push_aux("nu_im", ev.roots.iter().map(|z| z.im).collect());
    let stable: Vec<f64> = ev
        .roots
        .iter()
        .map(|z| ev.stable.iter().any(|s| s == z) as u8 as f64)
        .collect();
    r.push_aux("stable", stable);
    r.extra.insert("roots".into(), complex_list(&ev.roots));
    r.extra.insert("stable".into(), complex_list(&ev.stable));
    r.extra.insert("order".into(), Value::from(ev.order as u64));
    let q = series::build_q(&p, cfg.series_order)?;
    let trust = series::right_eigenfunction_series(&q, ev.stable[0], &[0.0]).map(|f| f.trust_radius);
    match trust {
        Ok(t) => {
            r.extra.insert("trust_radius".into(), json_num(t));
            r.footer.push(format!("trust radius of the dominant right eigenfunction series: {t}"));
        }
        Err(e) => {
            r.extra.insert("trust_radius".into(), Value::Null);
            r.footer.push(format!("right eigenfunction series unavailable: {e}"));
        }
    }
    let op = DiscreteOperator::new(&p, &cfg.grid)?;
    let nu1 = spectral::power_iteration(&op, &op.sampled_cdf(), 500).map(|pr| pr.nu);
    if let Ok(nu1) = nu1 {
        r.extra.insert("nu1_nystrom".into(), json_num(nu1));
        let d = ev.stable.iter().map(|s| (s - nu1).norm()).fold(f64::INFINITY, f64::min);
        r.footer.push(format!("Nystrom nu_1 = {nu1}; nearest stable root is {d:e} away"));
    }
    Ok(r)
}

fn cmd_mc(cfg: &RunConfig, x: f64) -> Result<Report, CliError> {
    let p = problem(cfg, x)?;
    let mc = montecarlo::estimate_curve(&p, cfg.n_max, cfg.paths, cfg.seed)?;
    let mut r = Report::new(x);
    r.push_u("u_mc", mc.u);
    r.push_aux("se", mc.err.unwrap_or_default());
    r.footer.extend(mc.meta.notes);
    Ok(r)
}

/// `u_0..=u_n` by the determinant-series route on the operator's grid.
fn determinant_route(op: &DiscreteOperator, v: &VSequence, n_max: usize) -> Result<Vec<f64>, CliError> {
    let p = spectral::power_sums_trace(op, n_max + 1);
    let d = spectral::determinant_coefficients(&p);
    Ok(spectral::u_via_determinant_series(&d, v, n_max)?.u.u)
}

fn spectral_route(cfg: &RunConfig, op: &DiscreteOperator) -> Result<Vec<f64>, CliError> {
    if cfg.rho > 0.0 {
        Ok(spectral::u_spectral_pos(&spectral_data(cfg, op)?, cfg.n_max)?.u)
    } else {
        let dg: DeltaGammaExpansion = negrho::delta_gamma(op)?;
        Ok(negrho::u_delta_gamma(&dg, cfg.n_max)?.u)
    }
}

fn cmd_compare(cfg: &RunConfig, x: f64) -> Result<(Report, Vec<String>), CliError> {
    let p = problem(cfg, x)?;
    let rec = Recurrence::new(p, cfg.grid)?;
    let v = rec.compute_v(cfg.n_max + 1);
    let needs_op = cfg.methods.iter().any(|m| matches!(m, Route::Spectral | Route::Determinant));
    let op = if needs_op {
        Some(DiscreteOperator::new(&p, &cfg.grid)?)
    } else {
        None
    };
    let mut r = Report::new(x);
    let mut mc: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut seen = Vec::new();
    for m in &cfg.methods {
        if seen.contains(m) {
            continue;
        }
        seen.push(*m);
        let name = format!("u_{}", m.name());
        match m {
            Route::Exact => r.push_u(&name, rec.u_exact(cfg.n_max)?.u),
            Route::Bell | Route::Determinant if cfg.rho > 0.0 => {
                r.footer.push(format!("{} route applies to rho < 0 only; skipped", m.name()));
            }
            Route::Bell => r.push_u(&name, recurrence::bell_u(&v, cfg.n_max)?.u),
            Route::Determinant => r.push_u(&name, determinant_route(op.as_ref().unwrap(), &v, cfg.n_max)?),
            Route::Spectral => r.push_u(&name, spectral_route(cfg, op.as_ref().unwrap())?),
            Route::Mc => {
                let est = montecarlo::estimate_curve(&p, cfg.n_max, cfg.paths, cfg.seed)?;
                mc = Some((est.u, est.err.unwrap_or_default()));
            }
        }
    }
    let det: Vec<(String, Vec<f64>)> = r
        .columns
        .iter()
        .map(|c| (c.name.clone(), c.values.clone()))
        .collect();
    let mut violations = Vec::new();
    for a in 0..det.len() {
        for b in a + 1..det.len() {
            let bad: Vec<usize> = (0..=cfg.n_max)
                .filter(|&n| (det[a].1[n] - det[b].1[n]).abs() > cfg.tol)
                .collect();
            let d = max_abs_diff(&det[a].1, &det[b].1);
            r.footer.push(format!("max |{} - {}| = {d:e}", det[a].0, det[b].0));
            if !bad.is_empty() {
                violations.push(format!("x = {x}: {} vs {} exceed {:e} at n = {:?}", det[a].0, det[b].0, cfg.tol, bad));
            }
        }
    }
    if let Some((u_mc, se)) = mc {
        for (name, u) in &det {
            // Monte Carlo is judged by 4-standard-error bands, not --tol.
            let bad: Vec<usize> = (1..=cfg.n_max)
                .filter(|&n| (u[n] - u_mc[n]).abs() > 4.0 * se[n].max(f64::MIN_POSITIVE))
                .collect();
            r.footer.push(format!("max |{name} - u_mc| = {:.3} standard errors", max_z(u, &u_mc, &se)));
            if !bad.is_empty() {
                violations.push(format!("x = {x}: {name} vs u_mc outside 4 standard errors at n = {bad:?}"));
            }
        }
        r.push_u("u_mc", u_mc);
        r.push_aux("mc_se", se);
    }
    Ok((r, violations))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_z(u: &[f64], mc: &[f64], se: &[f64]) -> f64 {
    (1..u.len().min(mc.len()))
        .filter(|&n| se[n] > 0.0)
        .map(|n| (u[n] - mc[n]).abs() / se[n])
        .fold(0.0, f64::max)
}

//! The four subcommands. Each writes its files into `out` and returns a
//! short text report.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use vapor_kinetics::ale::SemiclassicalSolution;
use vapor_kinetics::ee::{grid_moments, integrate_ee, EeParams};
use vapor_kinetics::grid::GridField;
use vapor_kinetics::refpde::{self, l2_error};
use vapor_kinetics::relax::{self, bifurcation_index, classify, validity_margin, RelaxParams};

use crate::config::{InitialField, PdeSection, ScenarioConfig};
use crate::svg::LinePlot;
use crate::CliError;

fn time_grid(horizon: f64, samples: usize) -> Vec<f64> {
    (0..=samples).map(|i| horizon * i as f64 / samples as f64).collect()
}

fn write_svg(out: &Path, name: &str, plot: LinePlot<'_>) -> Result<(), CliError> {
    std::fs::write(out.join(name), plot.render())?;
    Ok(())
}

fn scenario_name(cfg: &ScenarioConfig) -> &str {
    cfg.name.as_deref().unwrap_or("scenario")
}

/// `sigma.csv` with `t, sigma, I, validity_margin`, `sigma.svg`, and the
/// classification.
pub fn relax(cfg: &ScenarioConfig, out: &Path) -> Result<String, CliError> {
    let p = &cfg.params;
    let times = time_grid(cfg.time.horizon, cfg.time.samples);
    let sigma = times
        .iter()
        .map(|&t| relax::sigma_closed(t, p))
        .collect::<Result<Vec<f64>, _>>()?;
    let i_value = bifurcation_index(p);
    let margin = validity_margin(p);
    let mut w = csv::Writer::from_path(out.join("sigma.csv"))?;
    w.write_record(["t", "sigma", "I", "validity_margin"])?;
    for (t, s) in times.iter().zip(&sigma) {
        w.write_record([t.to_string(), s.to_string(), i_value.to_string(), margin.to_string()])?;
    }
    w.flush()?;
    if cfg.figures {
        let title = format!("{}: sigma(t)", scenario_name(cfg));
        write_svg(out, "sigma.svg", LinePlot { title: &title, x_label: "t", y_label: "sigma", xs: &times, ys: &sigma })?;
    }
    let c = classify(p, cfg.time.horizon, cfg.time.samples)?;
    let mut report = format!("classification: {:?}\nI = {}\nvalidity margin = {margin}\n", c.variant, c.i_value);
    if !c.extrema_times.is_empty() {
        let ts: Vec<String> = c.extrema_times.iter().map(|t| format!("{t:.4}")).collect();
        let _ = writeln!(report, "extrema at t = {}", ts.join(", "));
    }
    Ok(report)
}

/// `moments.csv` from the moment system.
pub fn ee(cfg: &ScenarioConfig, out: &Path) -> Result<String, CliError> {
    let p = &cfg.params;
    let model = p.model();
    let params = EeParams { d: p.d, kappa: p.kappa, model: &model };
    let times = time_grid(cfg.time.horizon, cfg.time.samples);
    let traj = integrate_ee(&p.initial_moments(), &times, &params, &cfg.ee.control())?;
    traj.write_csv(File::create(out.join("moments.csv"))?)?;
    if cfg.figures {
        let sigma: Vec<f64> = traj.states.iter().map(|s| s.sigma).collect();
        let title = format!("{}: moment-system sigma(t)", scenario_name(cfg));
        write_svg(out, "moments.svg", LinePlot { title: &title, x_label: "t", y_label: "sigma", xs: &times, ys: &sigma })?;
    }
    let last = traj.states.last().expect("non-empty trajectory");
    Ok(format!(
        "sigma({}) = {}\nalpha2_11({}) = {}\n",
        cfg.time.horizon, last.sigma, cfg.time.horizon, last.alpha2[(0, 0)]
    ))
}

fn initial_field(section: &PdeSection, p: &RelaxParams) -> Result<GridField, CliError> {
    let (n, l) = (section.grid, section.length);
    let field = match section.initial {
        InitialField::Gaussian => p.initial_data().sample(n, n, l, l),
        InitialField::Zero => GridField::zeros(n, n, l, l),
    };
    field.map_err(|e| CliError::Config(e.to_string()))
}

/// Snapshots under `snapshots/` and `pde_moments.csv`.
pub fn pde(cfg: &ScenarioConfig, out: &Path) -> Result<String, CliError> {
    let section = cfg.pde()?;
    let p = &cfg.params;
    let solver = section.solver_config(p, section.n_steps);
    let phi = initial_field(section, p)?;
    let res = refpde::run(&solver, &phi)?;
    let dir = out.join("snapshots");
    for (k, snap) in res.snapshots.iter().enumerate() {
        refpde::write_snapshot(&dir, &format!("snap_{k:05}"), &snap.field, snap.t)?;
    }
    refpde::write_moments_csv(&res.moments, File::create(out.join("pde_moments.csv"))?)?;
    if cfg.figures {
        let ts: Vec<f64> = res.moments.iter().map(|m| m.t).collect();
        let sigma: Vec<f64> = res.moments.iter().map(|m| m.sigma).collect();
        let title = format!("{}: reference sigma(t)", scenario_name(cfg));
        write_svg(out, "pde_sigma.svg", LinePlot { title: &title, x_label: "t", y_label: "sigma", xs: &ts, ys: &sigma })?;
    }
    let last = res.moments.last().expect("initial moments are always recorded");
    Ok(format!(
        "{} snapshots, horizon {}\nsigma({}) = {}\nmin/max ratio = {:e}\nboundary/peak = {:e}\n",
        res.snapshots.len(),
        solver.horizon(),
        last.t,
        last.sigma,
        res.min_ratio,
        res.boundary_ratio
    ))
}

/// Result of one `D` in a comparison.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub d: f64,
    pub l2_error: Option<f64>,
    pub count_error_packet: Option<f64>,
    pub count_error_moments: Option<f64>,
    pub status: String,
}

fn compare_one(cfg: &ScenarioConfig, section: &PdeSection, d: f64, t: f64) -> Result<CompareRow, CliError> {
    let p = cfg.params.with_diffusion(d)?;
    let n_steps = (t / section.dt).round() as usize;
    if n_steps == 0 || ((n_steps as f64 * section.dt) - t).abs() > 1e-9 * t {
        return Err(CliError::Config(format!("compare.t = {t} is not a multiple of pde.dt = {}", section.dt)));
    }
    let solver = refpde::PdeConfig { snapshot_stride: n_steps, ..section.solver_config(&p, n_steps) };
    let phi = initial_field(section, &p)?;
    let failed = |status: String| CompareRow {
        d,
        l2_error: None,
        count_error_packet: None,
        count_error_moments: None,
        status,
    };
    let reference = match refpde::run(&solver, &phi) {
        Ok(r) => r.final_field().clone(),
        Err(e @ refpde::PdeError::Config(_)) => return Err(e.into()),
        Err(e) => return Ok(failed(format!("reference run failed: {e}"))),
    };
    let step = (t / 1000.0).min(1e-3);
    let (sol, traj) = match SemiclassicalSolution::from_moment_system(&p, t, step, &cfg.ee.control()) {
        Ok(v) => v,
        Err(e) => return Ok(failed(format!("no semiclassical solution: {e}"))),
    };
    let packet = match sol.packet(t) {
        Ok(v) => v,
        Err(e) => return Ok(failed(format!("no semiclassical solution: {e}"))),
    };
    let (n, l) = (section.grid, section.length);
    let approx = GridField::from_fn(n, n, l, l, |x, y| packet.value(&[x, y])).map_err(|e| CliError::Config(e.to_string()))?;
    let sigma_ref = grid_moments(&reference)?.sigma;
    let sigma_ee = traj.states.last().expect("non-empty trajectory").sigma;
    let rel = |a: f64| (a - sigma_ref).abs() / sigma_ref;
    Ok(CompareRow {
        d,
        l2_error: Some(l2_error(&approx, &reference)?),
        count_error_packet: Some(rel(packet.mass())),
        count_error_moments: Some(rel(sigma_ee)),
        status: "ok".into(),
    })
}

/// Least-squares slope of `ln error` against `ln D`; `None` when fewer
/// than two distinct `D` have errors.
pub fn fitted_order(rows: &[CompareRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.l2_error.filter(|e| *e > 0.0).map(|e| (r.d.ln(), e.ln())))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-24 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `compare.csv` with per-`D` errors and the fitted order. Fails with
/// exit code 3 when a gate is missed.
pub fn compare(cfg: &ScenarioConfig, out: &Path) -> Result<String, CliError> {
    let section = cfg.pde()?;
    let cmp = cfg
        .compare
        .as_ref()
        .ok_or_else(|| CliError::Config("the scenario has no compare section".into()))?;
    let rows = cmp
        .d_values
        .par_iter()
        .map(|&d| compare_one(cfg, section, d, cmp.t))
        .collect::<Result<Vec<_>, _>>()?;
    let order = fitted_order(&rows);

    let mut w = csv::Writer::from_path(out.join("compare.csv"))?;
    w.write_record(["D", "l2_error", "count_error_packet", "count_error_moments", "fitted_order", "status"])?;
    for r in &rows {
        w.write_record([
            r.d.to_string(),
            cell(r.l2_error),
            cell(r.count_error_packet),
            cell(r.count_error_moments),
            cell(order),
            r.status.clone(),
        ])?;
    }
    w.flush()?;

    let mut report = String::new();
    for r in &rows {
        match r.l2_error {
            Some(e) => {
                let _ = writeln!(
                    report,
                    "D = {}: L2 error {e:.4e}, count error {:.2}% (packet), {:.2}% (moments)",
                    r.d,
                    100.0 * r.count_error_packet.unwrap_or(f64::NAN),
                    100.0 * r.count_error_moments.unwrap_or(f64::NAN)
                );
            }
            None => {
                let _ = writeln!(report, "D = {}: {}", r.d, r.status);
            }
        }
    }
    match order {
        Some(o) => {
            let _ = writeln!(report, "fitted order = {o:.3}");
        }
        None => report.push_str("fitted order undefined (fewer than two distinct D with errors)\n"),
    }

    let mut reasons = Vec::new();
    if rows.iter().any(|r| r.l2_error.is_none()) {
        reasons.push("some D have no comparison".to_string());
    }
    match order {
        Some(o) if o >= cmp.min_order => {}
        Some(o) => reasons.push(format!("order {o:.3} below {}", cmp.min_order)),
        None => reasons.push("order undefined".into()),
    }
    let smallest = rows.iter().min_by(|a, b| a.d.total_cmp(&b.d)).expect("at least two rows");
    match smallest.count_error_packet {
        Some(e) if e <= cmp.max_count_error => {}
        Some(e) => reasons.push(format!(
            "count error {:.2}% at D = {} above {}%",
            100.0 * e,
            smallest.d,
            100.0 * cmp.max_count_error
        )),
        None => {}
    }
    if reasons.is_empty() {
        Ok(report)
    } else {
        Err(CliError::Threshold { report, reason: reasons.join("; ") })
    }
}

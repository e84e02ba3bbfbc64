//! One runner per task. Each returns the numeric payload for `result.json`
//! and an optional plot-ready CSV.

use std::fmt::Write as _;

use ajsim_core::analysis::{
    convergence_in_probability, moment_curve, occupancy_search, pathwise_log_ratio,
    poisson_integral_inequality_check, positivity_diagnostics, terminal_values,
    time_average_exponent, time_avg_moment,
};
use ajsim_core::ensemble::map_reduce;
use ajsim_core::finance::{
    barrier_option_price, barrier_price_from_extremes, bond_price, path_extremes,
    BarrierOptionSpec, BondSpec,
};
use ajsim_core::io::{write_path_ensemble, write_paths_csv};
use ajsim_core::stats::MomentAccumulator;
use ajsim_core::{generate_noise, regime_check, simulate_path, EstimateWithCI};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Task};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutput {
    pub estimator: &'static str,
    pub result: Value,
    pub csv: Option<String>,
    /// Contents of `paths.bin`.
    pub binary: Option<Vec<u8>>,
}

impl TaskOutput {
    fn new(estimator: &'static str, result: Value, csv: Option<String>) -> Self {
        Self {
            estimator,
            result,
            csv,
            binary: None,
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize to JSON")
}

const ESTIMATE_HEADER: &str = "point,std_error,ci_low,ci_high";

fn estimate_cols(e: &EstimateWithCI) -> String {
    format!("{},{},{},{}", e.point, e.std_error, e.ci_low, e.ci_high)
}

/// Runs `task`, appending one log line per convergence level to `log`.
pub fn run_task(cfg: &ExperimentConfig, task: Task, log: &mut Vec<String>) -> Result<TaskOutput> {
    match task {
        Task::Simulate => simulate(cfg),
        Task::Moments => moments(cfg),
        Task::Occupancy => occupancy(cfg),
        Task::Asymptotics => asymptotics(cfg),
        Task::Lemma22 => lemma22(cfg),
        Task::Converge => converge(cfg, log),
        Task::Bond => bond(cfg),
        Task::Barrier => barrier(cfg),
    }
}

fn simulate(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let p = &cfg.model;
    let grid = cfg.sim_grid()?;
    let (n, seed) = (cfg.ensemble.n_paths, cfg.ensemble.seed);
    let sc = cfg.simulate_cfg();
    let n_export = sc.export_paths.unwrap_or(n).min(n);

    let exported = map_reduce(
        n_export,
        Vec::new,
        |v, i| {
            let noise = generate_noise(grid, p.lambda, seed, i as u64);
            let path = simulate_path(p, &noise).expect("noise uses the model intensity");
            v.push((noise, path));
        },
        |a, b| a.extend(b),
    );
    let diagnostics = positivity_diagnostics(p, grid, n, seed);
    let terminal = terminal_values(p, grid, n, seed);
    let mut acc = MomentAccumulator::new();
    terminal.values.iter().for_each(|&y| acc.push(y));

    let mut csv = Vec::new();
    let paths: Vec<_> = exported.iter().map(|(_, path)| path.clone()).collect();
    write_paths_csv(&mut csv, &paths)?;
    let binary = if sc.binary {
        let mut buf = Vec::new();
        write_path_ensemble(&mut buf, &exported)?;
        Some(buf)
    } else {
        None
    };
    let result = json!({
        "terminal_mean": to_value(&acc.estimate(terminal.n_excluded)),
        "diagnostics": to_value(&diagnostics),
        "exported_paths": n_export,
    });
    Ok(TaskOutput {
        binary,
        ..TaskOutput::new(
            "simulate_path",
            result,
            Some(String::from_utf8(csv).expect("CSV is ASCII")),
        )
    })
}

fn moments(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let p = &cfg.model;
    let grid = cfg.sim_grid()?;
    let (n, seed) = (cfg.ensemble.n_paths, cfg.ensemble.seed);
    let m = cfg.moments_cfg()?;
    let curve = moment_curve(p, m.p, grid, n, seed)?;
    let max_node = curve
        .nodes
        .iter()
        .copied()
        .max_by(|a, b| a.point.total_cmp(&b.point))
        .expect("grid has nodes");
    let worst = curve.worst_excess(p.y0, 4.0);

    let mut exponents: Vec<f64> = m.time_average.clone().unwrap_or_default();
    if let Some(theta) = m.theta {
        exponents.push(time_average_exponent(p, theta));
    }
    let time_average = if exponents.is_empty() {
        Value::Null
    } else {
        json!({
            "exponents": exponents,
            "estimate": to_value(&time_avg_moment(p, &exponents, grid, n, seed)?),
        })
    };

    let mut csv = format!("t,{ESTIMATE_HEADER}\n");
    for (t, e) in curve.times.iter().zip(&curve.nodes) {
        writeln!(csv, "{t},{}", estimate_cols(e)).expect("write to String");
    }
    let result = json!({
        "p": m.p,
        "plateau": curve.plateau(),
        "worst_excess_4se": worst,
        "bounded": worst <= 0.0,
        "terminal": to_value(curve.nodes.last().expect("grid has nodes")),
        "max_node": to_value(&max_node),
        "n_paths": curve.n_paths,
        "n_excluded": curve.n_excluded,
        "negative_path_fraction": curve.negative_path_fraction,
        "warnings": curve.warnings,
        "regime": to_value(&regime_check(p, m.p.max(2.0))),
        "time_average": time_average,
    });
    Ok(TaskOutput::new("moment_curve", result, Some(csv)))
}

fn occupancy(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let grid = cfg.sim_grid()?;
    let o = cfg.occupancy_cfg();
    let (n, seed) = (cfg.ensemble.n_paths, cfg.ensemble.seed);
    let search = occupancy_search(&cfg.model, grid, n, seed, o.epsilon, o.max_doublings)?;
    let at_n1 = match o.n1 {
        Some(n1) => to_value(&terminal_values(&cfg.model, grid, n, seed).occupancy(n1)?),
        None => Value::Null,
    };
    let mut csv = format!("n1,{ESTIMATE_HEADER}\n");
    for (n1, e) in &search.levels {
        writeln!(csv, "{n1},{}", estimate_cols(e)).expect("write to String");
    }
    let result = json!({
        "search": to_value(&search),
        "at_n1": at_n1,
    });
    Ok(TaskOutput::new("occupancy_probability", result, Some(csv)))
}

fn asymptotics(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let grid = cfg.sim_grid()?;
    let s = pathwise_log_ratio(
        &cfg.model,
        grid.horizon(),
        grid.dt(),
        cfg.ensemble.n_paths,
        cfg.ensemble.seed,
    )?;
    let mut csv = String::from("t,mean_ratio\n");
    for (t, r) in s.sample_times.iter().zip(&s.mean_ratio) {
        writeln!(csv, "{t},{r}").expect("write to String");
    }
    Ok(TaskOutput::new(
        "pathwise_log_ratio",
        to_value(&s),
        Some(csv),
    ))
}

fn lemma22(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let l = cfg.lemma22_cfg();
    let lambdas = l.lambdas.unwrap_or_else(|| vec![cfg.model.lambda]);
    let horizons = l.horizons.unwrap_or_else(|| vec![cfg.grid.horizon]);
    let mut checks = Vec::new();
    let mut csv =
        String::from("lambda,horizon,integrand,inequality,lhs,lhs_se,rhs,margin,passes\n");
    for &lambda in &lambdas {
        for &horizon in &horizons {
            let c = poisson_integral_inequality_check(
                lambda,
                horizon,
                cfg.ensemble.n_paths,
                cfg.ensemble.seed,
            )?;
            for r in &c.rows {
                writeln!(
                    csv,
                    "{lambda},{horizon},{},{},{},{},{},{},{}",
                    to_value(&r.integrand).as_str().expect("unit variant"),
                    to_value(&r.inequality).as_str().expect("unit variant"),
                    r.lhs.point,
                    r.lhs.std_error,
                    r.rhs,
                    r.margin,
                    r.passes
                )
                .expect("write to String");
            }
            checks.push(c);
        }
    }
    let result = json!({
        "all_pass": checks.iter().all(|c| c.passes),
        "checks": to_value(&checks),
    });
    Ok(TaskOutput::new(
        "poisson_integral_inequality_check",
        result,
        Some(csv),
    ))
}

fn converge(cfg: &ExperimentConfig, log: &mut Vec<String>) -> Result<TaskOutput> {
    let c = cfg.converge_cfg()?;
    let steps = cfg.level_steps()?;
    let r = convergence_in_probability(
        &cfg.model,
        cfg.grid.horizon,
        c.xi,
        &steps,
        c.ref_refine_log2,
        cfg.ensemble.n_paths,
        cfg.ensemble.seed,
    )?;
    let mut csv = String::from(
        "dt,n_steps,exceedance,exceedance_ci_low,exceedance_ci_high,mean_sup_sq,interp_exceedance,interp_mean_sup_sq,cont_exceedance,cont_mean_sup_sq,n_overflow\n",
    );
    for l in &r.levels {
        log.push(format!(
            "level dt={} steps={} exceedance={:.4} [{:.4}, {:.4}] mean_sup_sq={:.3e} cont_exceedance={:.4} overflow={}",
            l.dt,
            l.n_steps,
            l.exceedance.point,
            l.exceedance.ci_low,
            l.exceedance.ci_high,
            l.mean_sup_sq.point,
            l.cont_exceedance.point,
            l.n_overflow
        ));
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            l.dt,
            l.n_steps,
            l.exceedance.point,
            l.exceedance.ci_low,
            l.exceedance.ci_high,
            l.mean_sup_sq.point,
            l.interp_exceedance.point,
            l.interp_mean_sup_sq.point,
            l.cont_exceedance.point,
            l.cont_mean_sup_sq.point,
            l.n_overflow
        )
        .expect("write to String");
    }
    Ok(TaskOutput::new(
        "convergence_in_probability",
        to_value(&r),
        Some(csv),
    ))
}

fn ladder_csv(rows: &[(&str, f64, EstimateWithCI)]) -> String {
    let mut csv = format!("ladder,x,{ESTIMATE_HEADER}\n");
    for (kind, x, e) in rows {
        writeln!(csv, "{kind},{x},{}", estimate_cols(e)).expect("write to String");
    }
    csv
}

fn bond(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let grid = cfg.sim_grid()?;
    let spec = BondSpec::new(grid.horizon())?;
    let (n, seed) = (cfg.ensemble.n_paths, cfg.ensemble.seed);
    let main = bond_price(&cfg.model, &spec, grid, n, seed)?;
    let mut rows = vec![("dt", grid.dt(), main)];
    let mut ladder = Vec::new();
    for g in cfg.ladder_grids(cfg.bond_cfg().dt_ladder.as_deref(), "bond.dt_ladder")? {
        let e = bond_price(&cfg.model, &spec, g, n, seed)?;
        rows.push(("dt", g.dt(), e));
        ladder.push(json!({ "dt": g.dt(), "estimate": to_value(&e) }));
    }
    let result = json!({
        "maturity": spec.maturity,
        "estimate": to_value(&main),
        "dt_ladder": ladder,
    });
    Ok(TaskOutput::new(
        "bond_price",
        result,
        Some(ladder_csv(&rows)),
    ))
}

fn barrier(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let grid = cfg.sim_grid()?;
    let b = cfg.barrier_cfg()?;
    let spec = BarrierOptionSpec::new(b.strike, b.barrier, grid.horizon())?;
    let (n, seed) = (cfg.ensemble.n_paths, cfg.ensemble.seed);
    let ensemble = path_extremes(&cfg.model, grid, n, seed);
    let main = barrier_price_from_extremes(&ensemble, spec.strike, spec.barrier);
    let mut rows = vec![("strike", spec.strike, main)];
    let mut by_strike = Vec::new();
    for &k in b.strikes.iter().flatten() {
        let e = barrier_price_from_extremes(&ensemble, k, spec.barrier);
        rows.push(("strike", k, e));
        by_strike.push(json!({ "strike": k, "estimate": to_value(&e) }));
    }
    let mut by_dt = Vec::new();
    for g in cfg.ladder_grids(b.dt_ladder.as_deref(), "barrier.dt_ladder")? {
        let e = barrier_option_price(&cfg.model, &spec, g, n, seed)?;
        rows.push(("dt", g.dt(), e));
        by_dt.push(json!({ "dt": g.dt(), "estimate": to_value(&e) }));
    }
    let result = json!({
        "spec": to_value(&spec),
        "estimate": to_value(&main),
        "strike_ladder": by_strike,
        "dt_ladder": by_dt,
    });
    Ok(TaskOutput::new(
        "barrier_option_price",
        result,
        Some(ladder_csv(&rows)),
    ))
}

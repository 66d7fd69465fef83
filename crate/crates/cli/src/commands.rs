//! Command bodies: run the computation, write its artifacts and a manifest into the output directory.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tcforge::exec::{map_indexed, Strategy};
use tcforge::fluctuations::{
    coherent_covariance, integrate_with_frame, pack_upper, FrameGenerator,
};
use tcforge::gaussian_info::{correlation_series, CorrelationReport};
use tcforge::io::TRAJECTORY_HEADER;
use tcforge::io::{covariance_header, fmt_f64, fmt_opt, upper4, write_json_atomic, Table};
use tcforge::meanfield::integrate;
use tcforge::oracle::{convergence_report, evolve, oracle_table};
use tcforge::phasescan::{multistability_scan, sweep};
use tcforge::thermo::{battery_summary, thermo_series, BatterySummary, ThermoRecord};

use crate::config::*;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config).map_err(tcforge::Error::from)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    code_version: &'static str,
    config_hash: String,
    seed: u64,
    grid: Value,
    config: &'a C,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_points: Option<usize>,
}

fn write_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    config: &C,
    seed: u64,
    grid: Value,
    mut outputs: Vec<String>,
    failed_points: Option<usize>,
) -> Result<Vec<String>> {
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        command,
        code_version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(config)?,
        seed,
        grid,
        config,
        outputs: outputs.clone(),
        failed_points,
    };
    write_json_atomic(&out.join("manifest.json"), &manifest)?;
    Ok(outputs)
}

fn thermo_cells(r: &ThermoRecord) -> [String; 6] {
    [
        fmt_f64(r.q_dot_1),
        fmt_f64(r.q_dot_2),
        fmt_f64(r.w_dot),
        fmt_f64(r.stored),
        fmt_opt(r.efficiency),
        fmt_f64(r.phi_dot),
    ]
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> Result<Vec<String>> {
    let p = &cfg.params;
    let m0 = cfg.initial.state(cfg.seed, 0);
    let (traj, fluct) = if cfg.with_fluctuations {
        let run = integrate_with_frame(
            &m0,
            &coherent_covariance(&m0)?,
            p,
            &cfg.grid,
            FrameGenerator::TwistFree,
        )?;
        let corr = correlation_series(&run)?;
        (run.trajectory.clone(), Some((run, corr)))
    } else {
        (integrate(&m0, p, &cfg.grid)?, None)
    };
    let records = thermo_series(&traj, cfg.storage)?;

    let mut header: Vec<&str> = TRAJECTORY_HEADER.to_vec();
    header.extend(ThermoRecord::HEADER);
    if fluct.is_some() {
        header.extend(CorrelationReport::HEADER);
    }
    let mut table = Table::new(&header);
    for (k, (t, m)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row = vec![fmt_f64(*t)];
        row.extend(m.iter().map(|x| fmt_f64(*x)));
        row.extend(thermo_cells(&records[k]));
        if let Some((_, corr)) = &fluct {
            row.extend(corr[k].row().iter().map(|x| fmt_f64(*x)));
        }
        table.push(row);
    }
    table.write(&out.join("trajectory.csv"))?;
    let mut outputs = vec!["trajectory.csv".to_string()];

    if let Some((run, _)) = &fluct {
        let mut cov = Table::new(&covariance_header());
        for k in 0..run.trajectory.len() {
            let rot = run
                .rotated(k)
                .ok_or_else(|| tcforge::Error::Manifold("run carries no frame".into()))?;
            let mut row = vec![run.trajectory.times[k]];
            row.extend(pack_upper(&run.covariances[k]));
            row.extend(upper4(&rot.sigma2()));
            cov.push_numbers(&row);
        }
        cov.write(&out.join("covariance.csv"))?;
        outputs.push("covariance.csv".into());
    }
    write_manifest(
        out,
        "simulate",
        cfg,
        cfg.seed,
        json!({ "time": cfg.grid }),
        outputs,
        None,
    )
}

pub fn sweep_cmd(cfg: &SweepConfig, out: &Path) -> Result<(Vec<String>, usize)> {
    let spec = &cfg.0;
    let result = sweep(spec, Strategy::Parallel)?;
    result.table().write(&out.join("sweep.csv"))?;
    let failures = result.failures();
    let grid = json!({ "axis1": spec.axis1, "axis2": spec.axis2, "time": spec.grid });
    let outputs = write_manifest(
        out,
        "sweep",
        cfg,
        spec.seed,
        grid,
        vec!["sweep.csv".into()],
        Some(failures),
    )?;
    Ok((outputs, failures))
}

#[derive(Serialize)]
struct BatteryRun {
    j: f64,
    #[serde(flatten)]
    summary: BatterySummary,
    /// Time intervals where the cumulative work input is not positive.
    eta_undefined: Vec<[f64; 2]>,
}

fn undefined_intervals(records: &[ThermoRecord]) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    let mut last = 0.0;
    for r in records {
        match (r.efficiency, open) {
            (None, None) => open = Some(r.t),
            (Some(_), Some(start)) => {
                out.push([start, last]);
                open = None;
            }
            _ => {}
        }
        last = r.t;
    }
    if let Some(start) = open {
        out.push([start, last]);
    }
    out
}

pub fn battery(cfg: &BatteryConfig, out: &Path) -> Result<Vec<String>> {
    cfg.validate()?;
    let js = if cfg.j_values.is_empty() {
        vec![cfg.params.j_xy]
    } else {
        cfg.j_values.clone()
    };
    let m0 = cfg.initial.state(cfg.seed, 0);
    let runs = map_indexed(js.len(), Strategy::Parallel, |k| -> Result<_> {
        let mut p = cfg.params;
        p.j_xy = js[k];
        let traj = integrate(&m0, &p, &cfg.grid)?;
        let records = thermo_series(&traj, cfg.storage)?;
        let summary = battery_summary(&records, cfg.window_fraction)?;
        Ok((records, summary))
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut header = vec!["t".to_string()];
    for j in &js {
        header.push(format!("E_J{j}"));
        header.push(format!("eta_J{j}"));
    }
    let mut table = Table::new(&header);
    for k in 0..runs[0].0.len() {
        let mut row = vec![fmt_f64(runs[0].0[k].t)];
        for (records, _) in &runs {
            row.push(fmt_f64(records[k].stored));
            row.push(fmt_opt(records[k].efficiency));
        }
        table.push(row);
    }
    table.write(&out.join("battery.csv"))?;
    let summary: Vec<BatteryRun> = js
        .iter()
        .zip(&runs)
        .map(|(j, (records, s))| BatteryRun {
            j: *j,
            summary: *s,
            eta_undefined: undefined_intervals(records),
        })
        .collect();
    write_json_atomic(&out.join("battery.json"), &json!({ "runs": summary }))?;
    write_manifest(
        out,
        "battery",
        cfg,
        cfg.seed,
        json!({ "time": cfg.grid }),
        vec!["battery.csv".into(), "battery.json".into()],
        None,
    )
}

pub fn oracle(cfg: &OracleConfig, out: &Path) -> Result<Vec<String>> {
    cfg.validate()?;
    let report = convergence_report(
        &cfg.params,
        &cfg.n_list,
        &cfg.grid,
        &cfg.options,
        Strategy::Parallel,
    )?;
    let mut table = Table::new(&["N", "mz_error", "m_error", "covariance_error", "heat_error"]);
    for r in &report.rows {
        table.push(vec![
            r.n.to_string(),
            fmt_f64(r.mz_error),
            fmt_f64(r.m_error),
            fmt_f64(r.covariance_error),
            fmt_f64(r.heat_error),
        ]);
    }
    table.write(&out.join("convergence.csv"))?;
    write_json_atomic(&out.join("convergence.json"), &report)?;
    let mut outputs = vec!["convergence.csv".to_string(), "convergence.json".into()];
    if cfg.trajectories {
        let runs = map_indexed(cfg.n_list.len(), Strategy::Parallel, |k| {
            evolve(None, &cfg.params, cfg.n_list[k], &cfg.grid, &cfg.options)
        });
        for run in runs {
            let run = run?;
            let name = format!("oracle_N{}.csv", run.n);
            oracle_table(&run).write(&out.join(&name))?;
            outputs.push(name);
        }
    }
    write_manifest(
        out,
        "oracle",
        cfg,
        cfg.seed,
        json!({ "time": cfg.grid, "n_list": cfg.n_list }),
        outputs,
        None,
    )
}

pub fn multistability(cfg: &MultistabilityConfig, out: &Path) -> Result<Vec<String>> {
    cfg.validate()?;
    let (v1, v2) = (cfg.axis1.values(), cfg.axis2.values());
    let n = v1.len() * v2.len();
    let points = map_indexed(n, Strategy::Parallel, |index| -> Result<_> {
        let (a, b) = (v1[index / v2.len()], v2[index % v2.len()]);
        let mut p = cfg.params;
        cfg.axis1.param.apply(&mut p, a);
        cfg.axis2.param.apply(&mut p, b);
        let r = multistability_scan(&p, &cfg.options, cfg.seed, index as u64, Strategy::Parallel)?;
        Ok((a, b, r))
    });
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["param1", "param2", "sigma"]);
    for (a, b, r) in &points {
        table.push_numbers(&[*a, *b, r.sigma]);
    }
    table.write(&out.join("multistability.csv"))?;
    let detail: Vec<Value> = points
        .iter()
        .map(|(a, b, r)| json!({ "param1": a, "param2": b, "sigma": r.sigma, "averages": r.averages }))
        .collect();
    write_json_atomic(
        &out.join("multistability.json"),
        &json!({ "points": detail }),
    )?;
    write_manifest(
        out,
        "multistability",
        cfg,
        cfg.seed,
        json!({ "axis1": cfg.axis1, "axis2": cfg.axis2, "options": cfg.options }),
        vec!["multistability.csv".into(), "multistability.json".into()],
        None,
    )
}

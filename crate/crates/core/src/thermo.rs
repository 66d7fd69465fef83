//! Heat, work, stored energy and efficiency along mean-field trajectories.
//!
//! All quantities are per atom. Energies carry the scale `omega_at` (system) or
//! `nu` (bath quanta).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::{rhs_full, Trajectory};
use crate::model::{CovarianceState, MeanFieldState, ModelParams, INV_SQRT2, SQRT2};

/// Extensive heat rates `-kappa nu (m_x^2 + m_y^2)` of both ensembles.
pub fn heat_rate_mf(m: &MeanFieldState, p: &ModelParams) -> [f64; 2] {
    let q = |j: usize| -p.kappa * p.nu * (m[3 * j] * m[3 * j] + m[3 * j + 1] * m[3 * j + 1]);
    [q(0), q(1)]
}

/// Intensive correction to the heat rates from the fluctuation covariance.
pub fn heat_rate_sub(m: &MeanFieldState, g: &CovarianceState, p: &ModelParams) -> [f64; 2] {
    let q = |j: usize| {
        let n = p.occupation(j);
        -p.kappa
            * p.nu
            * (g[(3 * j, 3 * j)]
                + g[(3 * j + 1, 3 * j + 1)]
                + SQRT2 * m[3 * j + 2] * (2.0 * n + 1.0))
    };
    [q(0), q(1)]
}

/// Work delivered by each laser.
pub fn laser_work_rate(m: &MeanFieldState, p: &ModelParams) -> [f64; 2] {
    let w = |j: usize| -p.omega_las * p.omega(j) * SQRT2 * m[3 * j + 1];
    [w(0), w(1)]
}

/// Bare atomic energy of both ensembles.
pub fn internal_energy(m: &MeanFieldState, p: &ModelParams) -> f64 {
    p.omega_at * INV_SQRT2 * (m[2] + m[5])
}

/// Time derivative of [`internal_energy`] along the mean-field flow.
pub fn internal_energy_rate(m: &MeanFieldState, p: &ModelParams) -> f64 {
    let dm = rhs_full(m, p);
    p.omega_at * INV_SQRT2 * (dm[2] + dm[5])
}

/// Total work input from the first law, `u_dot - q_dot`.
pub fn work_rate_first_law(m: &MeanFieldState, p: &ModelParams) -> f64 {
    let [q1, q2] = heat_rate_mf(m, p);
    internal_energy_rate(m, p) - q1 - q2
}

/// Which ensembles count as the battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageRef {
    Both,
    First,
}

pub fn stored_energy(
    m: &MeanFieldState,
    m0: &MeanFieldState,
    p: &ModelParams,
    storage: StorageRef,
) -> f64 {
    let first = m[2] - m0[2];
    let dz = match storage {
        StorageRef::Both => first + m[5] - m0[5],
        StorageRef::First => first,
    };
    p.omega_at * INV_SQRT2 * dz
}

/// Entropy flux `sum_j beta_j q_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyFlux {
    pub value: f64,
    /// Some bath is at zero temperature, so its inverse temperature is infinite.
    pub zero_temperature: bool,
}

/// Inverse temperature from the occupation, `beta nu = ln(1 + 1/n)`.
pub fn inverse_temperature(n: f64, nu: f64) -> f64 {
    if n <= 0.0 {
        f64::INFINITY
    } else {
        (1.0 / n).ln_1p() / nu
    }
}

pub fn entropy_flux(q: [f64; 2], p: &ModelParams) -> EntropyFlux {
    let mut value = 0.0;
    let mut zero_temperature = false;
    for (j, qj) in q.into_iter().enumerate() {
        let n = p.occupation(j);
        if n <= 0.0 {
            zero_temperature = true;
            if qj != 0.0 {
                value += f64::INFINITY.copysign(qj);
            }
        } else {
            value += inverse_temperature(n, p.nu) * qj;
        }
    }
    EntropyFlux {
        value,
        zero_temperature,
    }
}

/// Trapezoidal mean of a uniform series over its trailing `window_fraction`.
pub fn time_average(series: &[f64], dt: f64, window_fraction: f64) -> Result<f64> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::param("window_fraction", "must lie in (0, 1]"));
    }
    let n = series.len();
    let keep = ((n as f64) * window_fraction).round() as usize;
    if keep < 2 || !(dt > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "averaging window holds {keep} samples, need at least 2"
        )));
    }
    let tail = &series[n - keep..];
    let inner: f64 = tail[1..keep - 1].iter().sum();
    let integral = dt * (inner + 0.5 * (tail[0] + tail[keep - 1]));
    Ok(integral / (dt * (keep - 1) as f64))
}

/// Trapezoidal mean over the largest whole number of `period`s inside the trailing window.
///
/// Falls back to [`time_average`] when the window holds less than one period.
pub fn cycle_average(series: &[f64], dt: f64, window_fraction: f64, period: f64) -> Result<f64> {
    let plain = time_average(series, dt, window_fraction)?;
    if !(period > 0.0 && period.is_finite()) {
        return Ok(plain);
    }
    let keep = ((series.len() as f64) * window_fraction).round() as usize;
    let cycles = ((keep - 1) as f64 * dt / period).floor();
    let steps = (cycles * period / dt).round() as usize;
    if cycles < 1.0 || steps < 1 {
        return Ok(plain);
    }
    let tail = &series[series.len() - steps - 1..];
    time_average(tail, dt, 1.0)
}

/// Cumulative trapezoidal integral, starting at zero.
pub fn cumulative_integral(series: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (i, v) in series.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * dt * (series[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Efficiency denominators at or below this are treated as no net work input.
const EFFICIENCY_FLOOR: f64 = 1e-12;

/// `stored / (delta_u - integral of q)`; zero where nothing is stored, undefined where
/// the work input is not positive.
pub fn efficiency(stored: &[f64], delta_u: &[f64], heat_integral: &[f64]) -> Vec<Option<f64>> {
    stored
        .iter()
        .zip(delta_u)
        .zip(heat_integral)
        .map(|((e, du), qi)| {
            let input = du - qi;
            if *e == 0.0 {
                Some(0.0)
            } else {
                (input > EFFICIENCY_FLOOR).then(|| e / input)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermoRecord {
    pub t: f64,
    pub q_dot_1: f64,
    pub q_dot_2: f64,
    pub w_dot: f64,
    pub u_s: f64,
    pub stored: f64,
    pub efficiency: Option<f64>,
    pub phi_dot: f64,
}

impl ThermoRecord {
    pub const HEADER: [&'static str; 6] = ["qdot1", "qdot2", "wdot", "E", "eta", "phidot"];
}

/// Thermodynamic bookkeeping at every sample of a trajectory.
pub fn thermo_series(traj: &Trajectory, storage: StorageRef) -> Result<Vec<ThermoRecord>> {
    traj.check_uniform()?;
    let p = &traj.params;
    let m0 = traj.states[0];
    let u0 = internal_energy(&m0, p);
    let heats: Vec<[f64; 2]> = traj.states.iter().map(|m| heat_rate_mf(m, p)).collect();
    let total: Vec<f64> = heats.iter().map(|q| q[0] + q[1]).collect();
    let heat_integral = cumulative_integral(&total, traj.dt());
    let stored: Vec<f64> = traj
        .states
        .iter()
        .map(|m| stored_energy(m, &m0, p, storage))
        .collect();
    let delta_u: Vec<f64> = traj
        .states
        .iter()
        .map(|m| internal_energy(m, p) - u0)
        .collect();
    let eta = efficiency(&stored, &delta_u, &heat_integral);
    Ok(traj
        .states
        .iter()
        .enumerate()
        .map(|(k, m)| ThermoRecord {
            t: traj.times[k],
            q_dot_1: heats[k][0],
            q_dot_2: heats[k][1],
            w_dot: internal_energy_rate(m, p) - total[k],
            u_s: internal_energy(m, p),
            stored: stored[k],
            efficiency: eta[k],
            phi_dot: entropy_flux(heats[k], p).value,
        })
        .collect())
}

/// Headline numbers of a charging run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatterySummary {
    #[serde(rename = "E_bar")]
    pub e_bar: f64,
    #[serde(rename = "E_max")]
    pub e_max: f64,
    #[serde(rename = "t_Emax")]
    pub t_e_max: f64,
    pub eta_max: Option<f64>,
    pub t_etamax: Option<f64>,
}

pub fn battery_summary(records: &[ThermoRecord], window_fraction: f64) -> Result<BatterySummary> {
    if records.len() < 2 {
        return Err(Error::InvalidGrid(
            "battery summary needs at least 2 samples".into(),
        ));
    }
    let dt = records[1].t - records[0].t;
    let stored: Vec<f64> = records.iter().map(|r| r.stored).collect();
    let e_bar = time_average(&stored, dt, window_fraction)?;
    let (mut e_max, mut t_e_max) = (f64::NEG_INFINITY, records[0].t);
    let mut eta_best: Option<(f64, f64)> = None;
    for r in records {
        if r.stored > e_max {
            e_max = r.stored;
            t_e_max = r.t;
        }
        if let Some(e) = r.efficiency {
            if eta_best.is_none_or(|(b, _)| e > b) {
                eta_best = Some((e, r.t));
            }
        }
    }
    Ok(BatterySummary {
        e_bar,
        e_max,
        t_e_max,
        eta_max: eta_best.map(|b| b.0),
        t_etamax: eta_best.map(|b| b.1),
    })
}

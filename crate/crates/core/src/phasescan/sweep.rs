//! Two-axis parameter sweeps evaluated point by point.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{classify, multistability_scan, point_rng, random_initial_state, ClassifyOptions};
use super::{MultistabilityOptions, PhaseLabel};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Strategy};
use crate::fluctuations::{coherent_covariance, integrate_with_frame, FrameGenerator};
use crate::gaussian_info::{correlation_series, CorrelationReport};
use crate::io::{fmt_f64, fmt_opt, Table};
use crate::meanfield::integrate;
use crate::model::{MeanFieldState, ModelParams, SimGrid, GROUND};
use crate::thermo::{thermo_series, time_average, StorageRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    J,
    Jz,
    /// `J`, with `J + Jz` held at its value in the base parameters.
    JFixedSum,
    /// Both drive amplitudes.
    Omega,
    Omega1,
    Omega2,
    /// Both bath occupations.
    N,
    N1,
    N2,
    Delta,
    Kappa,
}

impl SweepParam {
    pub fn apply(&self, p: &mut ModelParams, v: f64) {
        match self {
            SweepParam::J => p.j_xy = v,
            SweepParam::Jz => p.j_z = v,
            SweepParam::JFixedSum => {
                p.j_z += p.j_xy - v;
                p.j_xy = v;
            }
            SweepParam::Omega => {
                p.omega1 = v;
                p.omega2 = v;
            }
            SweepParam::Omega1 => p.omega1 = v,
            SweepParam::Omega2 => p.omega2 = v,
            SweepParam::N => {
                p.n1 = v;
                p.n2 = v;
            }
            SweepParam::N1 => p.n1 = v,
            SweepParam::N2 => p.n2 = v,
            SweepParam::Delta => *p = p.with_detuning(v),
            SweepParam::Kappa => p.kappa = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: SweepParam,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn fixed(param: SweepParam, v: f64) -> Self {
        Axis {
            param,
            min: v,
            max: v,
            points: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::InvalidGrid("axis needs at least one point".into()));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::InvalidGrid(format!(
                "axis range [{}, {}] is invalid",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.max
                } else {
                    self.min + step * i as f64
                }
            })
            .collect()
    }

    pub fn step(&self) -> f64 {
        if self.points < 2 {
            0.0
        } else {
            (self.max - self.min) / (self.points - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    #[default]
    Ground,
    State {
        m: MeanFieldState,
    },
    /// Uniform on the Bloch spheres, drawn from the point's seeded stream.
    Random,
}

impl InitialCondition {
    pub fn state(&self, seed: u64, stream: u64) -> MeanFieldState {
        match self {
            InitialCondition::Ground => GROUND,
            InitialCondition::State { m } => *m,
            InitialCondition::Random => random_initial_state(&mut point_rng(seed, stream)),
        }
    }
}

fn half() -> f64 {
    0.5
}

fn whole() -> f64 {
    1.0
}

fn both() -> StorageRef {
    StorageRef::Both
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ModelParams,
    pub axis1: Axis,
    pub axis2: Axis,
    pub grid: SimGrid,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default = "both")]
    pub storage: StorageRef,
    #[serde(default)]
    pub classify: ClassifyOptions,
    /// Trailing fraction of the run over which the work rate is averaged.
    #[serde(default = "half")]
    pub work_window: f64,
    /// Trailing fraction of the run over which the stored energy is averaged.
    #[serde(default = "whole")]
    pub energy_window: f64,
    #[serde(default)]
    pub multistability: Option<MultistabilityOptions>,
    /// Grid of the covariance run used for correlation averages over its second half.
    #[serde(default)]
    pub correlations: Option<SimGrid>,
    #[serde(default)]
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(base: ModelParams, axis1: Axis, axis2: Axis, grid: SimGrid) -> Self {
        SweepSpec {
            base,
            axis1,
            axis2,
            grid,
            initial: InitialCondition::Ground,
            storage: StorageRef::Both,
            classify: ClassifyOptions::default(),
            work_window: 0.5,
            energy_window: 1.0,
            multistability: None,
            correlations: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.axis1.validate()?;
        self.axis2.validate()?;
        self.grid.validate()?;
        if !(self.work_window > 0.0 && self.work_window <= 1.0) {
            return Err(Error::param("work_window", "must lie in (0, 1]"));
        }
        if !(self.energy_window > 0.0 && self.energy_window <= 1.0) {
            return Err(Error::param("energy_window", "must lie in (0, 1]"));
        }
        if let Some(m) = &self.multistability {
            m.validate()?;
        }
        if let Some(g) = &self.correlations {
            g.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axis1.points * self.axis2.points
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameters and axis values of point `index` (axis 1 outer).
    pub fn point(&self, index: usize) -> (ModelParams, f64, f64) {
        let (i1, i2) = (index / self.axis2.points, index % self.axis2.points);
        let (v1, v2) = (self.axis1.values()[i1], self.axis2.values()[i2]);
        let mut p = self.base;
        self.axis1.param.apply(&mut p, v1);
        self.axis2.param.apply(&mut p, v2);
        (p, v1, v2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationAverages {
    pub entropy_total: f64,
    pub entropy_a: f64,
    pub entropy_b: f64,
    pub mutual_information: f64,
    pub discord: f64,
    pub classical: f64,
    pub negativity: f64,
}

impl CorrelationAverages {
    /// Trapezoidal means of a uniform correlation series over its trailing `fraction`.
    pub fn from_series(series: &[CorrelationReport], dt: f64, fraction: f64) -> Result<Self> {
        let avg = |f: fn(&CorrelationReport) -> f64| {
            let v: Vec<f64> = series.iter().map(f).collect();
            time_average(&v, dt, fraction)
        };
        Ok(CorrelationAverages {
            entropy_total: avg(|r| r.entropy_total)?,
            entropy_a: avg(|r| r.entropy_a)?,
            entropy_b: avg(|r| r.entropy_b)?,
            mutual_information: avg(|r| r.mutual_information)?,
            discord: avg(|r| r.discord)?,
            classical: avg(|r| r.classical)?,
            negativity: avg(|r| r.negativity)?,
        })
    }

    pub fn row(&self) -> [f64; 7] {
        [
            self.entropy_total,
            self.entropy_a,
            self.entropy_b,
            self.mutual_information,
            self.discord,
            self.classical,
            self.negativity,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub param1: f64,
    pub param2: f64,
    pub label: Option<PhaseLabel>,
    pub wbar: Option<f64>,
    pub ebar: Option<f64>,
    pub sigma: Option<f64>,
    pub correlations: Option<CorrelationAverages>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }
}

struct Evaluated {
    label: PhaseLabel,
    wbar: f64,
    ebar: f64,
    sigma: Option<f64>,
    correlations: Option<CorrelationAverages>,
}

fn evaluate(spec: &SweepSpec, index: usize, p: &ModelParams) -> Result<Evaluated> {
    p.validate()?;
    let m0 = spec.initial.state(spec.seed, index as u64);
    let traj = integrate(&m0, p, &spec.grid)?;
    let label = classify(&traj, &spec.classify)?;
    let records = thermo_series(&traj, spec.storage)?;
    let w: Vec<f64> = records.iter().map(|r| r.w_dot).collect();
    let e: Vec<f64> = records.iter().map(|r| r.stored).collect();
    let wbar = time_average(&w, traj.dt(), spec.work_window)?;
    let ebar = time_average(&e, traj.dt(), spec.energy_window)?;
    let sigma = match &spec.multistability {
        Some(opts) => {
            Some(multistability_scan(p, opts, spec.seed, index as u64, Strategy::Sequential)?.sigma)
        }
        None => None,
    };
    let correlations = match &spec.correlations {
        Some(grid) => {
            let run = integrate_with_frame(
                &m0,
                &coherent_covariance(&m0)?,
                p,
                grid,
                FrameGenerator::TwistFree,
            )?;
            let series = correlation_series(&run)?;
            Some(CorrelationAverages::from_series(
                &series,
                run.trajectory.dt(),
                0.5,
            )?)
        }
        None => None,
    };
    Ok(Evaluated {
        label,
        wbar,
        ebar,
        sigma,
        correlations,
    })
}

/// Evaluates every grid point; failures are recorded per point and do not stop the sweep.
pub fn sweep(spec: &SweepSpec, strategy: Strategy) -> Result<SweepResult> {
    spec.validate()?;
    let points = map_indexed(spec.len(), strategy, |index| {
        let (p, v1, v2) = spec.point(index);
        let mut out = SweepPoint {
            index,
            param1: v1,
            param2: v2,
            label: None,
            wbar: None,
            ebar: None,
            sigma: None,
            correlations: None,
            error: None,
        };
        match evaluate(spec, index, &p) {
            Ok(ev) => {
                out.label = Some(ev.label);
                out.wbar = Some(ev.wbar);
                out.ebar = Some(ev.ebar);
                out.sigma = ev.sigma;
                out.correlations = ev.correlations;
            }
            Err(e) => out.error = Some(e.to_string()),
        }
        out
    });
    Ok(SweepResult {
        spec: spec.clone(),
        points,
    })
}

pub const SWEEP_HEADER: [&str; 17] = [
    "param1",
    "param2",
    "label",
    "wbar",
    "Ebar",
    "sigma",
    "amplitude",
    "omega_dom",
    "peaks",
    "S",
    "SA",
    "SB",
    "I",
    "D",
    "Jcl",
    "N",
    "error",
];

impl SweepResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&SWEEP_HEADER);
        for pt in &self.points {
            let mut row = vec![fmt_f64(pt.param1), fmt_f64(pt.param2)];
            row.push(
                pt.label
                    .map(|l| l.kind.as_str().to_string())
                    .unwrap_or_else(|| "error".into()),
            );
            row.push(fmt_opt(pt.wbar));
            row.push(fmt_opt(pt.ebar));
            row.push(fmt_opt(pt.sigma));
            row.push(fmt_opt(pt.label.map(|l| l.metrics.amplitude)));
            row.push(fmt_opt(pt.label.and_then(|l| l.metrics.dominant_omega)));
            row.push(
                pt.label
                    .map(|l| l.metrics.peak_count.to_string())
                    .unwrap_or_default(),
            );
            match &pt.correlations {
                Some(c) => row.extend(c.row().iter().map(|x| fmt_f64(*x))),
                None => row.extend(std::iter::repeat_n(String::new(), 7)),
            }
            row.push(pt.error.clone().unwrap_or_default());
            t.push(row);
        }
        t
    }
}

pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    result.table().write(path)
}

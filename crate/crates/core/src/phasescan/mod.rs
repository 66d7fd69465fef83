//! Trajectory classification, spectra, parameter sweeps, multistability and branch following.

mod spectrum;
mod sweep;

pub use spectrum::{fourier_spectrum, spectrum_of, Peak, Spectrum};
pub use sweep::{
    sweep, write_sweep_csv, Axis, CorrelationAverages, InitialCondition, SweepParam, SweepPoint,
    SweepResult, SweepSpec,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Strategy};
use crate::meanfield::{integrate, lift_setup2, stationary_setup1, stationary_setup2, Trajectory};
use crate::model::{MeanFieldState, ModelParams, SimGrid, INV_SQRT2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Stationary,
    LimitCycle,
    QuasiPeriodic,
    Undetermined,
}

impl PhaseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseKind::Stationary => "stationary",
            PhaseKind::LimitCycle => "limit_cycle",
            PhaseKind::QuasiPeriodic => "quasi_periodic",
            PhaseKind::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseMetrics {
    /// Largest half peak-to-peak excursion over the tail, across components.
    pub amplitude: f64,
    /// Largest standard deviation over the tail, across components.
    pub tail_std: f64,
    /// Angular frequency of the strongest spectral peak.
    pub dominant_omega: Option<f64>,
    pub peak_count: usize,
    /// Every spectral peak is an integer multiple of the lowest one.
    pub commensurate: bool,
    /// Relative loss of oscillation amplitude from the first to the second half of the tail.
    pub residual_drift: f64,
    /// Distance of the final state to the nearest stable closed-form fixed point, when one exists.
    pub closed_form_distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseLabel {
    pub kind: PhaseKind,
    pub metrics: PhaseMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    pub tail_fraction: f64,
    pub stationary_std: f64,
    pub peak_threshold: f64,
    pub max_peaks: usize,
    pub harmonic_tol: f64,
    /// Amplitude loss across the tail above which the record is treated as still relaxing.
    pub max_drift: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            tail_fraction: 0.5,
            stationary_std: 1e-6,
            peak_threshold: 0.01,
            max_peaks: 12,
            harmonic_tol: 1e-3,
            max_drift: 0.1,
        }
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

fn half_range(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    0.5 * (hi - lo)
}

fn closed_form_distance(m: &MeanFieldState, p: &ModelParams) -> Option<f64> {
    let mut points = Vec::new();
    if let Ok(pts) = stationary_setup1(p) {
        points.extend(pts);
    }
    if let Ok(pts) = stationary_setup2(p) {
        points.extend(pts);
    }
    points
        .iter()
        .filter(|pt| pt.stable())
        .map(|pt| {
            pt.m.iter()
                .zip(m)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .min_by(|a, b| a.total_cmp(b))
}

/// True when every peak sits on an integer multiple of the lowest one.
fn harmonic(peaks: &[Peak], tol: f64) -> bool {
    let Some(base) = peaks.iter().map(|p| p.omega).min_by(|a, b| a.total_cmp(b)) else {
        return true;
    };
    peaks.iter().all(|p| {
        let r = p.omega / base;
        (r - r.round()).abs() <= tol
    })
}

/// Labels the long-time behavior of a trajectory from the statistics and spectrum of its tail.
pub fn classify(traj: &Trajectory, opts: &ClassifyOptions) -> Result<PhaseLabel> {
    traj.check_uniform()?;
    let start = traj.tail_start(opts.tail_fraction);
    if traj.len() - start < 16 {
        return Err(Error::InvalidGrid(
            "classification tail holds fewer than 16 samples".into(),
        ));
    }
    let tail = &traj.states[start..];
    let mid = tail.len() / 2;
    let mut tail_std = 0.0;
    let mut amplitude = 0.0;
    let mut widest = 0;
    let (mut a1, mut a2) = (0.0f64, 0.0f64);
    for c in 0..6 {
        let v: Vec<f64> = tail.iter().map(|m| m[c]).collect();
        let s = std_dev(&v);
        if s > tail_std {
            tail_std = s;
            widest = c;
        }
        amplitude = f64::max(amplitude, half_range(&v));
        a1 = a1.max(half_range(&v[..mid]));
        a2 = a2.max(half_range(&v[mid..]));
    }
    let residual_drift = if a1 > 0.0 { (a1 - a2) / a1 } else { 0.0 };
    let mut metrics = PhaseMetrics {
        amplitude,
        tail_std,
        dominant_omega: None,
        peak_count: 0,
        commensurate: true,
        residual_drift,
        closed_form_distance: None,
    };
    if tail_std < opts.stationary_std {
        metrics.closed_form_distance = closed_form_distance(traj.last(), &traj.params);
        return Ok(PhaseLabel {
            kind: PhaseKind::Stationary,
            metrics,
        });
    }
    let spectrum = fourier_spectrum(traj, widest, opts.tail_fraction)?;
    let peaks = spectrum.peaks(opts.peak_threshold);
    metrics.dominant_omega = peaks.first().map(|p| p.omega);
    metrics.peak_count = peaks.len();
    metrics.commensurate = harmonic(&peaks, opts.harmonic_tol);
    // a comb too dense to count as a limit cycle is reported as quasi-periodic even when commensurate
    let kind = if residual_drift > opts.max_drift || peaks.is_empty() {
        PhaseKind::Undetermined
    } else if metrics.commensurate && peaks.len() <= opts.max_peaks {
        PhaseKind::LimitCycle
    } else {
        PhaseKind::QuasiPeriodic
    };
    Ok(PhaseLabel { kind, metrics })
}

/// Fraction of neighboring label pairs within `half_width` points that switch between
/// stationary and oscillating.
pub fn label_alternation(labels: &[PhaseKind], half_width: usize) -> Vec<f64> {
    let osc: Vec<bool> = labels.iter().map(|k| *k != PhaseKind::Stationary).collect();
    (0..labels.len())
        .map(|i| {
            let lo = i.saturating_sub(half_width);
            let hi = (i + half_width).min(labels.len().saturating_sub(1));
            if hi <= lo {
                return 0.0;
            }
            let flips = (lo..hi).filter(|&k| osc[k] != osc[k + 1]).count();
            flips as f64 / (hi - lo) as f64
        })
        .collect()
}

/// Uniform point on the product of two Bloch spheres of radius `1/sqrt(2)`.
pub fn random_initial_state<R: Rng + ?Sized>(rng: &mut R) -> MeanFieldState {
    let mut m = [0.0; 6];
    for j in 0..2 {
        let z: f64 = rng.random_range(-1.0..=1.0);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let r = (1.0 - z * z).max(0.0).sqrt();
        m[3 * j] = INV_SQRT2 * r * phi.cos();
        m[3 * j + 1] = INV_SQRT2 * r * phi.sin();
        m[3 * j + 2] = INV_SQRT2 * z;
    }
    m
}

/// Generator for the random starts of grid point `stream`.
pub fn point_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Distribution of the random starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartSampling {
    /// Uniform on both Bloch spheres.
    #[default]
    BlochSpheres,
    /// Uniform phases on the invariant plane pair of the seeding configuration.
    PhaseManifold,
}

impl StartSampling {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> MeanFieldState {
        match self {
            StartSampling::BlochSpheres => random_initial_state(rng),
            StartSampling::PhaseManifold => {
                let f1 = rng.random_range(0.0..std::f64::consts::TAU);
                let f2 = rng.random_range(0.0..std::f64::consts::TAU);
                lift_setup2(&[f1, f2])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultistabilityOptions {
    pub n_trials: usize,
    pub sampling: StartSampling,
    pub t_start: f64,
    pub t_end: f64,
    pub dt_out: f64,
    /// Component whose time average is compared across starts.
    pub component: usize,
}

impl Default for MultistabilityOptions {
    fn default() -> Self {
        MultistabilityOptions {
            n_trials: 20,
            sampling: StartSampling::BlochSpheres,
            t_start: 180.0,
            t_end: 200.0,
            dt_out: 0.05,
            component: 5,
        }
    }
}

impl MultistabilityOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 2 {
            return Err(Error::param("n_trials", "need at least 2 trials"));
        }
        if !(self.t_start >= 0.0 && self.t_end > self.t_start) {
            return Err(Error::param("t_start", "need 0 <= t_start < t_end"));
        }
        if !(self.dt_out > 0.0 && self.dt_out <= self.t_end - self.t_start) {
            return Err(Error::param(
                "dt_out",
                "must be positive and fit the averaging window",
            ));
        }
        if self.component >= 6 {
            return Err(Error::param("component", "must be in 0..6"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultistabilityResult {
    /// Population variance of the per-start time averages.
    pub sigma: f64,
    pub averages: Vec<f64>,
}

/// Variance across starts of the windowed time average of one component.
pub fn multistability_from_states(
    p: &ModelParams,
    starts: &[MeanFieldState],
    opts: &MultistabilityOptions,
    strategy: Strategy,
) -> Result<MultistabilityResult> {
    opts.validate()?;
    let grid = SimGrid::new(opts.t_end, opts.dt_out);
    let runs = map_indexed(starts.len(), strategy, |k| -> Result<f64> {
        let traj = integrate(&starts[k], p, &grid)?;
        let first = traj
            .times
            .iter()
            .position(|t| *t >= opts.t_start - 1e-9)
            .unwrap_or(0);
        let v: Vec<f64> = traj.states[first..]
            .iter()
            .map(|m| m[opts.component])
            .collect();
        crate::thermo::time_average(&v, traj.dt(), 1.0)
    });
    let averages = runs.into_iter().collect::<Result<Vec<f64>>>()?;
    let n = averages.len() as f64;
    let mean = averages.iter().sum::<f64>() / n;
    let sigma = averages
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / n;
    Ok(MultistabilityResult { sigma, averages })
}

/// Multistability indicator from `opts.n_trials` seeded random starts.
pub fn multistability_scan(
    p: &ModelParams,
    opts: &MultistabilityOptions,
    seed: u64,
    stream: u64,
    strategy: Strategy,
) -> Result<MultistabilityResult> {
    opts.validate()?;
    let mut rng = point_rng(seed, stream);
    let starts: Vec<MeanFieldState> = (0..opts.n_trials)
        .map(|_| opts.sampling.draw(&mut rng))
        .collect();
    multistability_from_states(p, &starts, opts, strategy)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FollowStep {
    pub params: ModelParams,
    pub final_state: MeanFieldState,
    pub label: PhaseLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FollowResult {
    pub steps: Vec<FollowStep>,
    /// First step whose stationarity differs from the starting branch.
    pub switch_index: Option<usize>,
}

impl FollowResult {
    pub fn switch_params(&self) -> Option<&ModelParams> {
        self.switch_index.map(|k| &self.steps[k].params)
    }
}

/// Integrates along a parameter path, seeding each step with the previous final state.
pub fn adiabatic_follow(
    path: &[ModelParams],
    m0: &MeanFieldState,
    grid: &SimGrid,
    opts: &ClassifyOptions,
) -> Result<FollowResult> {
    let mut state = *m0;
    let mut steps = Vec::with_capacity(path.len());
    for p in path {
        let traj = integrate(&state, p, grid)?;
        let label = classify(&traj, opts)?;
        state = *traj.last();
        steps.push(FollowStep {
            params: *p,
            final_state: state,
            label,
        });
    }
    let is_stat = |s: &FollowStep| s.label.kind == PhaseKind::Stationary;
    let switch_index = steps.first().and_then(|s0| {
        let start = is_stat(s0);
        steps
            .iter()
            .position(|s| is_stat(s) != start && s.label.kind != PhaseKind::Undetermined)
    });
    Ok(FollowResult {
        steps,
        switch_index,
    })
}

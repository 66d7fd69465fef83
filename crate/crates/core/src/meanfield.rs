//! Mean-field dynamics of the two coupled collective spins.

use nalgebra::Matrix6;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_state, MeanFieldState, ModelParams, SimGrid, INV_SQRT2, SQRT2};
use crate::ode::{integrate_sampled, Dop853Options, OdeSystem};

/// Real parts below this magnitude count as marginal.
pub const ZERO_THRESHOLD: f64 = 1e-8;

/// Uniformly sampled mean-field solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub params: ModelParams,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|m| m[k]).collect()
    }

    pub fn last(&self) -> &MeanFieldState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Index of the first sample in the trailing `fraction` of the record.
    pub fn tail_start(&self, fraction: f64) -> usize {
        let n = self.len();
        let keep = ((n as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
        n - keep.clamp(1.min(n), n)
    }

    /// Checks that the sampling is uniform to relative precision `1e-9`.
    pub fn check_uniform(&self) -> Result<()> {
        let dt = self.dt();
        if self.len() < 2 || !(dt > 0.0) {
            return Err(Error::NonUniform);
        }
        let t0 = self.times[0];
        for (i, t) in self.times.iter().enumerate() {
            if (t - (t0 + i as f64 * dt)).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(Error::NonUniform);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPoint {
    pub m: MeanFieldState,
    pub stability: Stability,
    pub jacobian_eigs: [Complex64; 6],
    /// Eigenvalues with `|Re| < ZERO_THRESHOLD`, which include the conserved Bloch norms.
    pub marginal_modes: usize,
}

impl StationaryPoint {
    pub fn stable(&self) -> bool {
        self.stability == Stability::Stable
    }

    fn classify(m: MeanFieldState, p: &ModelParams) -> Self {
        let eigs = jacobian(&m, p).complex_eigenvalues();
        let mut jacobian_eigs = [Complex64::new(0.0, 0.0); 6];
        for (dst, src) in jacobian_eigs.iter_mut().zip(eigs.iter()) {
            *dst = *src;
        }
        let marginal_modes = jacobian_eigs
            .iter()
            .filter(|z| z.re.abs() < ZERO_THRESHOLD)
            .count();
        let max_re = jacobian_eigs
            .iter()
            .filter(|z| z.re.abs() >= ZERO_THRESHOLD)
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let stability = if max_re > 0.0 {
            Stability::Unstable
        } else if marginal_modes > 2 {
            Stability::Marginal
        } else {
            Stability::Stable
        };
        StationaryPoint {
            m,
            stability,
            jacobian_eigs,
            marginal_modes,
        }
    }
}

/// Block offsets `(self, other)` for each ensemble.
const BLOCKS: [(usize, usize); 2] = [(0, 3), (3, 0)];

/// Full six-dimensional mean-field vector field.
pub fn rhs_full(m: &MeanFieldState, p: &ModelParams) -> [f64; 6] {
    let (a, b, k, d) = (p.j_xy * SQRT2, p.j_z * SQRT2, p.kappa * SQRT2, p.delta());
    let mut out = [0.0; 6];
    for (j, &(o, q)) in BLOCKS.iter().enumerate() {
        let (x, y, z) = (m[o], m[o + 1], m[o + 2]);
        let (xo, yo, zo) = (m[q], m[q + 1], m[q + 2]);
        let w = p.omega(j);
        out[o] = -b * y * zo + a * yo * z - d * y + k * x * z;
        out[o + 1] = -a * z * xo + b * x * zo - w * z + d * x + k * y * z;
        out[o + 2] = a * (y * xo - yo * x) + w * y - k * (x * x + y * y);
    }
    out
}

/// Analytic Jacobian of [`rhs_full`].
pub fn jacobian(m: &MeanFieldState, p: &ModelParams) -> Matrix6<f64> {
    let (a, b, k, d) = (p.j_xy * SQRT2, p.j_z * SQRT2, p.kappa * SQRT2, p.delta());
    let mut jac = Matrix6::zeros();
    for (j, &(o, q)) in BLOCKS.iter().enumerate() {
        let (x, y, z) = (m[o], m[o + 1], m[o + 2]);
        let (xo, yo, zo) = (m[q], m[q + 1], m[q + 2]);
        let w = p.omega(j);
        jac[(o, o)] = k * z;
        jac[(o, o + 1)] = -b * zo - d;
        jac[(o, o + 2)] = a * yo + k * x;
        jac[(o, q + 1)] = a * z;
        jac[(o, q + 2)] = -b * y;

        jac[(o + 1, o)] = b * zo + d;
        jac[(o + 1, o + 1)] = k * z;
        jac[(o + 1, o + 2)] = -a * xo - w + k * y;
        jac[(o + 1, q)] = -a * z;
        jac[(o + 1, q + 2)] = b * x;

        jac[(o + 2, o)] = -a * yo - 2.0 * k * x;
        jac[(o + 2, o + 1)] = a * xo + w - 2.0 * k * y;
        jac[(o + 2, q)] = a * y;
        jac[(o + 2, q + 1)] = -a * x;
    }
    jac
}

fn require_setup1(p: &ModelParams) -> Result<()> {
    if p.delta() != 0.0 || p.omega1 != p.omega2 {
        return Err(Error::Manifold(
            "the symmetric reduction needs delta = 0 and Omega1 = Omega2".into(),
        ));
    }
    Ok(())
}

fn require_setup2(p: &ModelParams) -> Result<()> {
    if p.delta() != 0.0 || p.j_z != 0.0 || p.omega1 != 0.0 {
        return Err(Error::Manifold(
            "the phase reduction needs delta = 0, Jz = 0 and Omega1 = 0".into(),
        ));
    }
    Ok(())
}

/// Reduced dynamics on the symmetric manifold (both ensembles equal).
pub fn rhs_setup1(m3: &[f64; 3], p: &ModelParams) -> Result<[f64; 3]> {
    require_setup1(p)?;
    let (x, y, z) = (m3[0], m3[1], m3[2]);
    let (g, k, w) = ((p.j_xy - p.j_z) * SQRT2, p.kappa * SQRT2, p.omega1);
    Ok([
        g * y * z + k * x * z,
        -g * x * z + k * y * z - w * z,
        -k * (x * x + y * y) + w * y,
    ])
}

/// Phase dynamics of the seeding configuration; `f[0]` is the battery, `f[1]` the charger.
pub fn rhs_setup2(f: &[f64; 2], p: &ModelParams) -> Result<[f64; 2]> {
    require_setup2(p)?;
    let (s1, s2) = (f[0].sin(), f[1].sin());
    Ok([
        -p.j_xy * s2 - p.kappa * s1,
        p.j_xy * s1 - p.kappa * s2 - p.omega2,
    ])
}

/// Maps the two phases onto magnetizations: battery in the x-z plane, charger in the y-z plane.
pub fn lift_setup2(f: &[f64; 2]) -> MeanFieldState {
    let m0 = -INV_SQRT2;
    [
        m0 * f[0].sin(),
        0.0,
        m0 * f[0].cos(),
        0.0,
        m0 * f[1].sin(),
        m0 * f[1].cos(),
    ]
}

struct MeanFieldSystem<'a>(&'a ModelParams);

impl OdeSystem for MeanFieldSystem<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let m: &MeanFieldState = y.try_into().expect("six components");
        dy.copy_from_slice(&rhs_full(m, self.0));
    }
}

pub(crate) fn options(grid: &SimGrid) -> Dop853Options {
    Dop853Options::with_tolerances(grid.rtol, grid.atol)
}

/// Integrates the full mean-field system and samples it on the uniform output grid.
pub fn integrate(m0: &MeanFieldState, p: &ModelParams, grid: &SimGrid) -> Result<Trajectory> {
    p.validate()?;
    grid.validate()?;
    check_state(m0)?;
    let times = grid.times();
    let mut states = Vec::with_capacity(times.len());
    integrate_sampled(&MeanFieldSystem(p), m0, &times, options(grid), |_, _, y| {
        states.push(y.try_into().expect("six components"));
        Ok(())
    })?;
    Ok(Trajectory {
        times,
        states,
        params: *p,
    })
}

/// Integrates without storing samples and returns the state at `grid.t1`.
pub fn integrate_final(
    m0: &MeanFieldState,
    p: &ModelParams,
    grid: &SimGrid,
) -> Result<MeanFieldState> {
    p.validate()?;
    grid.validate()?;
    check_state(m0)?;
    let y = crate::ode::integrate_to(&MeanFieldSystem(p), m0, grid.t0, grid.t1, options(grid))?;
    Ok(y.try_into().expect("six components"))
}

fn lambdas(p: &ModelParams) -> (Complex64, Complex64) {
    let g = p.j_xy - p.j_z;
    (
        SQRT2 * Complex64::new(p.kappa, g),
        SQRT2 * Complex64::new(p.kappa, -g),
    )
}

fn gamma_log_args(m3: &[f64; 3], p: &ModelParams) -> (Complex64, Complex64) {
    let (lp, lm) = lambdas(p);
    let i = Complex64::i();
    let eta_p = (i * m3[0] + m3[1]) * INV_SQRT2;
    let eta_m = (-i * m3[0] + m3[1]) * INV_SQRT2;
    let w = p.omega1 * INV_SQRT2;
    // adding +0 maps a signed-zero imaginary part onto the upper side of the cut
    let zero = Complex64::new(0.0, 0.0);
    (lp * eta_p - w + zero, lm * eta_m - w + zero)
}

fn gamma_from_logs(p: &ModelParams, log1: Complex64, log2: Complex64) -> Complex64 {
    let (lp, lm) = lambdas(p);
    Complex64::i() * (lm * log1 - lp * log2)
}

const LOG_EPS: f64 = 1e-14;

/// Conserved quantity of the symmetric dynamics, principal branch of both logarithms.
pub fn conserved_gamma(m3: &[f64; 3], p: &ModelParams) -> Result<Complex64> {
    require_setup1(p)?;
    let (z1, z2) = gamma_log_args(m3, p);
    if z1.norm() < LOG_EPS || z2.norm() < LOG_EPS {
        return Err(Error::Singular(
            "logarithm argument of Gamma vanishes".into(),
        ));
    }
    Ok(gamma_from_logs(p, z1.ln(), z2.ln()))
}

/// Evaluates Gamma along a trajectory, continuing both logarithms across branch cuts.
#[derive(Debug, Clone)]
pub struct GammaTracker {
    p: ModelParams,
    args: Option<(f64, f64)>,
}

fn unwrap_phase(prev: f64, principal: f64) -> f64 {
    use std::f64::consts::TAU;
    prev + (principal - prev + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI
}

impl GammaTracker {
    pub fn new(p: &ModelParams) -> Result<Self> {
        require_setup1(p)?;
        Ok(GammaTracker { p: *p, args: None })
    }

    pub fn push(&mut self, m3: &[f64; 3]) -> Result<Complex64> {
        let (z1, z2) = gamma_log_args(m3, &self.p);
        if z1.norm() < LOG_EPS || z2.norm() < LOG_EPS {
            return Err(Error::Singular(
                "logarithm argument of Gamma vanishes".into(),
            ));
        }
        let (a1, a2) = match self.args {
            None => (z1.arg(), z2.arg()),
            Some((p1, p2)) => (unwrap_phase(p1, z1.arg()), unwrap_phase(p2, z2.arg())),
        };
        self.args = Some((a1, a2));
        let log1 = Complex64::new(z1.norm().ln(), a1);
        let log2 = Complex64::new(z2.norm().ln(), a2);
        Ok(gamma_from_logs(&self.p, log1, log2))
    }
}

/// Closed-form fixed points of the symmetric dynamics (both ensembles equal).
pub fn stationary_setup1(p: &ModelParams) -> Result<Vec<StationaryPoint>> {
    require_setup1(p)?;
    let g = p.j_z - p.j_xy;
    let x2 = g * g + p.kappa * p.kappa;
    let w = p.omega1;
    let disc = 1.0 - w * w / x2;
    let mx = INV_SQRT2 * w * g / x2;
    let my = INV_SQRT2 * p.kappa * w / x2;
    let build = |mz: f64| StationaryPoint::classify([mx, my, mz, mx, my, mz], p);
    if disc < -1e-14 {
        return Ok(Vec::new());
    }
    if disc.abs() <= 1e-14 {
        let mut pt = build(0.0);
        pt.stability = Stability::Marginal;
        return Ok(vec![pt]);
    }
    let mz = INV_SQRT2 * disc.sqrt();
    Ok(vec![build(-mz), build(mz)])
}

/// Closed-form fixed points of the seeding configuration.
///
/// Stability comes from the two-dimensional phase Jacobian; the six eigenvalues of the
/// full system are reported alongside.
pub fn stationary_setup2(p: &ModelParams) -> Result<Vec<StationaryPoint>> {
    require_setup2(p)?;
    let (j, k, w) = (p.j_xy, p.kappa, p.omega2);
    let x2 = j * j + k * k;
    let (s1, s2) = (j * w / x2, -k * w / x2);
    if s1.abs() > 1.0 || s2.abs() > 1.0 {
        return Ok(Vec::new());
    }
    let (c1, c2) = (
        (1.0 - s1 * s1).max(0.0).sqrt(),
        (1.0 - s2 * s2).max(0.0).sqrt(),
    );
    let mut out = Vec::new();
    for (sg1, sg2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let (cf1, cf2) = (sg1 * c1, sg2 * c2);
        if (sg1 < 0.0 && c1 == 0.0) || (sg2 < 0.0 && c2 == 0.0) {
            continue;
        }
        let m0 = -INV_SQRT2;
        let m = [m0 * s1, 0.0, m0 * cf1, 0.0, m0 * s2, m0 * cf2];
        let mut pt = StationaryPoint::classify(m, p);
        // phase Jacobian [[-k c1, -J c2], [J c1, -k c2]]
        let tr = -k * (cf1 + cf2);
        let det = cf1 * cf2 * x2;
        pt.stability = if det.abs() < ZERO_THRESHOLD || (det > 0.0 && tr.abs() < ZERO_THRESHOLD) {
            Stability::Marginal
        } else if det > 0.0 && tr < 0.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        };
        out.push(pt);
    }
    Ok(out)
}

/// Coupling above which the seeding configuration always has a stationary solution.
pub fn critical_coupling_setup2(omega: f64, kappa: f64) -> Option<f64> {
    let b1 = (omega >= kappa).then(|| (omega * kappa - kappa * kappa).sqrt());
    let b2 = (omega >= 2.0 * kappa)
        .then(|| (omega + (omega * omega - 4.0 * kappa * kappa).sqrt()) / 2.0);
    match (b1, b2) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

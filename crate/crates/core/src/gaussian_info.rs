//! Entropies and correlation measures of two-mode Gaussian states.
//!
//! All functions take `sigma2 = 2 G_bar` on `(x1, p1, x2, p2)`, so the vacuum is
//! the identity and physical states have symplectic eigenvalues `>= 1`.
//! Logarithms are natural.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluctuations::FluctuationRun;

/// Tolerance below 1 accepted on determinants and symplectic eigenvalues; covers
/// the global error of integrated covariances.
pub const PHYS_TOL: f64 = 1e-7;

/// Symplectic eigenvalues within this of 1 mark a pure state.
const PURE_STATE_TOL: f64 = 1e-9;

/// Entropy-function arguments closer than this to 1 are treated as pure.
const PURE_EPS: f64 = 1e-12;

/// Largest negative discord or classical correlation attributed to round-off.
const NEGATIVE_TOL: f64 = 1e-7;

/// Below this `c_beta - 1` the closed-form E_min divides round-off by a vanishing square.
const NEAR_VACUUM: f64 = 1e-5;

/// Off-diagonal determinants smaller than this (relative) mark a product state.
const PRODUCT_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeCovariance {
    pub sigma2: Matrix4<f64>,
}

impl TwoModeCovariance {
    pub fn new(sigma2: Matrix4<f64>) -> Result<Self> {
        let asym = (sigma2 - sigma2.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + sigma2.abs().max()) {
            return Err(Error::Unphysical(format!(
                "covariance not symmetric (defect {asym:e})"
            )));
        }
        Ok(TwoModeCovariance {
            sigma2: (sigma2 + sigma2.transpose()) * 0.5,
        })
    }

    pub fn alpha(&self) -> Matrix2<f64> {
        self.sigma2.fixed_view::<2, 2>(0, 0).into()
    }

    pub fn beta(&self) -> Matrix2<f64> {
        self.sigma2.fixed_view::<2, 2>(2, 2).into()
    }

    pub fn gamma(&self) -> Matrix2<f64> {
        self.sigma2.fixed_view::<2, 2>(0, 2).into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Invariants {
    pub c_alpha: f64,
    pub c_beta: f64,
    pub c_gamma: f64,
    pub c_delta: f64,
    /// `c_alpha + c_beta + 2 c_gamma`.
    pub delta_sum: f64,
}

pub fn symplectic_invariants(sigma2: &Matrix4<f64>) -> Invariants {
    let cm = TwoModeCovariance { sigma2: *sigma2 };
    let c_alpha = cm.alpha().determinant();
    let c_beta = cm.beta().determinant();
    let c_gamma = cm.gamma().determinant();
    let c_delta = sigma2.determinant();
    Invariants {
        c_alpha,
        c_beta,
        c_gamma,
        c_delta,
        delta_sum: c_alpha + c_beta + 2.0 * c_gamma,
    }
}

/// Symplectic spectrum as singular values of `sigma^(1/2) Omega sigma^(1/2)`.
///
/// The invariant closed form loses half the digits at the double root of pure states.
fn symplectic_spectrum(sigma2: &Matrix4<f64>) -> Result<(f64, f64)> {
    let eig = SymmetricEigen::new(*sigma2);
    let scale = eig.eigenvalues.abs().max().max(1.0);
    if eig.eigenvalues.min() < -PHYS_TOL * scale {
        return Err(Error::Unphysical(format!(
            "covariance not positive ({:e})",
            eig.eigenvalues.min()
        )));
    }
    let root_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root = eig.eigenvectors * Matrix4::from_diagonal(&root_vals) * eig.eigenvectors.transpose();
    let mut omega = Matrix4::zeros();
    omega[(0, 1)] = 1.0;
    omega[(1, 0)] = -1.0;
    omega[(2, 3)] = 1.0;
    omega[(3, 2)] = -1.0;
    let sv = (root * omega * root).singular_values();
    let mut v: Vec<f64> = sv.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(((v[0] + v[1]) / 2.0, (v[2] + v[3]) / 2.0))
}

fn partial_transpose(sigma2: &Matrix4<f64>) -> Matrix4<f64> {
    let t = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 1.0, -1.0));
    t * sigma2 * t
}

/// `(lambda_plus, lambda_minus)` of the covariance.
pub fn symplectic_eigenvalues(sigma2: &Matrix4<f64>) -> Result<(f64, f64)> {
    let (hi, lo) = symplectic_spectrum(sigma2)?;
    if lo < 1.0 - PHYS_TOL {
        return Err(Error::Unphysical(format!("symplectic eigenvalue {lo} < 1")));
    }
    let lo = lo.max(1.0);
    Ok((hi.max(lo), lo))
}

/// Von Neumann entropy of a single mode with symplectic eigenvalue `x`.
pub fn entropy_f(x: f64) -> Result<f64> {
    if !(x >= 1.0 - PHYS_TOL) {
        return Err(Error::Unphysical(format!("entropy argument {x} < 1")));
    }
    if x - 1.0 <= PURE_EPS {
        return Ok(0.0);
    }
    let a = (x + 1.0) / 2.0;
    let b = (x - 1.0) / 2.0;
    Ok(a * a.ln() - b * b.ln())
}

fn sqrt_det(c: f64, what: &str) -> Result<f64> {
    sqrt_det_tol(c, what, PHYS_TOL)
}

fn sqrt_det_tol(c: f64, what: &str, tol: f64) -> Result<f64> {
    if c < 1.0 - tol {
        return Err(Error::Unphysical(format!("{what} = {c} < 1")));
    }
    Ok(c.max(1.0).sqrt())
}

/// `(S_total, S_A, S_B)`.
pub fn entropies(sigma2: &Matrix4<f64>) -> Result<(f64, f64, f64)> {
    let inv = symplectic_invariants(sigma2);
    let (hi, lo) = symplectic_eigenvalues(sigma2)?;
    let s = entropy_f(hi)? + entropy_f(lo)?;
    Ok((
        s,
        entropy_f(sqrt_det(inv.c_alpha, "det alpha")?)?,
        entropy_f(sqrt_det(inv.c_beta, "det beta")?)?,
    ))
}

fn e_min_first(inv: &Invariants) -> f64 {
    let (a, b, c, d) = (inv.c_alpha, inv.c_beta, inv.c_gamma, inv.c_delta);
    let inner = (c * c + (b - 1.0) * (d - a)).max(0.0);
    (2.0 * c * c + (b - 1.0) * (d - a) + 2.0 * c.abs() * inner.sqrt()) / ((b - 1.0) * (b - 1.0))
}

fn e_min_second(inv: &Invariants) -> f64 {
    let (a, b, c, d) = (inv.c_alpha, inv.c_beta, inv.c_gamma, inv.c_delta);
    let inner = (c.powi(4) + (d - a * b).powi(2) - 2.0 * c * c * (a * b + d)).max(0.0);
    (a * b - c * c + d - inner.sqrt()) / (2.0 * b)
}

/// Minimal conditional determinant of mode A after a Gaussian measurement on B.
///
/// Returns the value and, near the branch boundary, the gap between the two branch formulas.
pub fn e_min(inv: &Invariants) -> Result<(f64, Option<f64>)> {
    let (a, b, c, d) = (inv.c_alpha, inv.c_beta, inv.c_gamma, inv.c_delta);
    if c.abs() <= PRODUCT_EPS * (1.0 + a.abs() + b.abs()) {
        return Ok((a, None));
    }
    let lhs = (d - a * b).powi(2);
    let rhs = (1.0 + b) * c * c * (a + d);
    let first = lhs <= rhs;
    if first && b == 1.0 {
        return Err(Error::Singular("c_beta = 1 with correlated modes".into()));
    }
    let value = if first {
        e_min_first(inv)
    } else {
        e_min_second(inv)
    };
    let near = (lhs - rhs).abs() <= 1e-6 * (lhs.abs() + rhs.abs()).max(1e-300);
    let gap = (near && b != 1.0).then(|| (e_min_first(inv) - e_min_second(inv)).abs());
    Ok((value, gap))
}

/// E_min by direct minimization over pure Gaussian measurements on mode B.
///
/// Well conditioned when mode B is close to vacuum, where the closed form is not.
pub fn e_min_numeric(sigma2: &Matrix4<f64>) -> f64 {
    let cov = TwoModeCovariance {
        sigma2: (sigma2 + sigma2.transpose()) * 0.5,
    };
    let (alpha, beta, gamma) = (cov.alpha(), cov.beta(), cov.gamma());
    let adj_beta = Matrix2::new(beta[(1, 1)], -beta[(0, 1)], -beta[(1, 0)], beta[(0, 0)]);
    // measurement covariance e^{2s} R diag(1, u) R^T with u = e^{-4s}; u = 0 is homodyne
    let conditional = |theta: f64, u: f64| {
        let rot = Matrix2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos());
        let m = rot * Matrix2::new(1.0, 0.0, 0.0, u) * rot.transpose();
        let adj_m = rot * Matrix2::new(u, 0.0, 0.0, 1.0) * rot.transpose();
        let w = u.sqrt();
        let den = w * beta.determinant() + (adj_beta * m).trace() + w;
        let inv = (adj_beta * w + adj_m) / den;
        (alpha - gamma * inv * gamma.transpose()).determinant()
    };
    let d_theta = std::f64::consts::PI / 72.0;
    let mut best = (0.0, 0.0, f64::INFINITY);
    for i in 0..72 {
        for k in 0..=20 {
            let (th, u) = (i as f64 * d_theta, 0.05 * k as f64);
            let v = conditional(th, u);
            if v < best.2 {
                best = (th, u, v);
            }
        }
    }
    // pattern search from the best grid point
    let (mut th, mut u, mut v) = best;
    let (mut h_th, mut h_u) = (d_theta, 0.05);
    for _ in 0..10_000 {
        if h_th < 1e-10 {
            break;
        }
        let mut moved = false;
        for (a, b) in [(h_th, 0.0), (-h_th, 0.0), (0.0, h_u), (0.0, -h_u)] {
            let cand = (u + b).clamp(0.0, 1.0);
            let w = conditional(th + a, cand);
            if w < v {
                (th, u, v) = (th + a, cand, w);
                moved = true;
            }
        }
        if !moved {
            h_th *= 0.5;
            h_u *= 0.5;
        }
    }
    v
}

/// `(discord, classical)` for a Gaussian measurement on mode B.
pub fn discord_and_classical(sigma2: &Matrix4<f64>) -> Result<(f64, f64)> {
    Ok(discord_parts(sigma2)?.0)
}

fn discord_parts(sigma2: &Matrix4<f64>) -> Result<((f64, f64), Option<f64>)> {
    let inv = symplectic_invariants(sigma2);
    let (hi, lo) = symplectic_eigenvalues(sigma2)?;
    // a measurement on a pure state leaves a pure conditional state
    let pure = hi - 1.0 <= PURE_STATE_TOL && lo - 1.0 <= PURE_STATE_TOL;
    let (em, gap) = if pure {
        (1.0, None)
    } else if inv.c_beta - 1.0 < NEAR_VACUUM {
        (e_min_numeric(sigma2), None)
    } else {
        e_min(&inv)?
    };
    // the branch formulas take square roots near double roots, so they carry ~sqrt(eps) error
    let f_em = entropy_f(sqrt_det_tol(em, "E_min", 1e-6)?)?;
    let f_a = entropy_f(sqrt_det(inv.c_alpha, "det alpha")?)?;
    let f_b = entropy_f(sqrt_det(inv.c_beta, "det beta")?)?;
    let mut discord = f_b - entropy_f(hi)? - entropy_f(lo)? + f_em;
    let mut classical = f_a - f_em;
    // a small negative part is moved to the other term so that the two still sum to the mutual information
    for (v, what) in [(discord, "discord"), (classical, "classical correlation")] {
        if v < -NEGATIVE_TOL {
            return Err(Error::Unphysical(format!("{what} = {v:e} < 0")));
        }
    }
    if discord < 0.0 {
        classical += discord;
        discord = 0.0;
    }
    if classical < 0.0 {
        discord += classical;
        classical = 0.0;
    }
    Ok(((discord.max(0.0), classical.max(0.0)), gap))
}

/// Logarithmic negativity from the partially transposed covariance.
pub fn log_negativity(sigma2: &Matrix4<f64>) -> Result<f64> {
    symplectic_eigenvalues(sigma2)?;
    let (_, lo) = symplectic_spectrum(&partial_transpose(sigma2))?;
    if lo <= 0.0 {
        return Err(Error::Unphysical(
            "vanishing partially transposed eigenvalue".into(),
        ));
    }
    Ok((-lo.ln()).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub entropy_total: f64,
    pub entropy_a: f64,
    pub entropy_b: f64,
    pub mutual_information: f64,
    pub discord: f64,
    pub classical: f64,
    pub negativity: f64,
    /// Disagreement of the two minimization branches when the state sits near their boundary.
    pub branch_gap: Option<f64>,
}

impl CorrelationReport {
    pub const HEADER: [&'static str; 7] = ["S", "SA", "SB", "I", "D", "Jcl", "N"];

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

pub fn correlations(sigma2: &Matrix4<f64>) -> Result<CorrelationReport> {
    let cm = TwoModeCovariance::new(*sigma2)?;
    let (s, sa, sb) = entropies(&cm.sigma2)?;
    let ((discord, classical), branch_gap) = discord_parts(&cm.sigma2)?;
    let mutual = sa + sb - s;
    if mutual < -NEGATIVE_TOL {
        return Err(Error::Unphysical(format!(
            "mutual information = {mutual:e} < 0"
        )));
    }
    Ok(CorrelationReport {
        entropy_total: s,
        entropy_a: sa,
        entropy_b: sb,
        mutual_information: mutual.max(0.0),
        discord,
        classical,
        negativity: log_negativity(&cm.sigma2)?,
        branch_gap,
    })
}

/// Correlation measures at every sample of a run that carries its co-moving frame.
pub fn correlation_series(run: &FluctuationRun) -> Result<Vec<CorrelationReport>> {
    (0..run.trajectory.len())
        .map(|k| {
            let rc = run
                .rotated(k)
                .ok_or_else(|| Error::Manifold("run was integrated without its frame".into()))?;
            correlations(&rc.sigma2())
        })
        .collect()
}

/// Single-mode symplectic matrix: rotation, squeeze, rotation.
pub fn local_symplectic(theta: f64, r: f64, phi: f64) -> Matrix2<f64> {
    let rot = |a: f64| Matrix2::new(a.cos(), -a.sin(), a.sin(), a.cos());
    rot(theta) * Matrix2::new(r.exp(), 0.0, 0.0, (-r).exp()) * rot(phi)
}

/// Two-mode squeezed vacuum with squeezing `r`.
pub fn two_mode_squeezed(r: f64) -> Matrix4<f64> {
    let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
    Matrix4::new(
        c, 0.0, s, 0.0, 0.0, c, 0.0, -s, s, 0.0, c, 0.0, 0.0, -s, 0.0, c,
    )
}

/// Random physical two-mode covariance: thermal symplectic spectrum dressed by local
/// operations, a beam splitter and a two-mode squeezer. `pure` forces the vacuum spectrum.
pub fn random_physical<R: Rng + ?Sized>(rng: &mut R, pure: bool) -> Matrix4<f64> {
    let (n1, n2) = if pure {
        (1.0, 1.0)
    } else {
        (
            1.0 + 3.0 * rng.random::<f64>(),
            1.0 + 3.0 * rng.random::<f64>(),
        )
    };
    let base = Matrix4::from_diagonal(&nalgebra::Vector4::new(n1, n1, n2, n2));
    let local = |rng: &mut R| {
        let a = local_symplectic(
            rng.random::<f64>() * 6.3,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() * 6.3,
        );
        let b = local_symplectic(
            rng.random::<f64>() * 6.3,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() * 6.3,
        );
        let mut s = Matrix4::zeros();
        s.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
        s.fixed_view_mut::<2, 2>(2, 2).copy_from(&b);
        s
    };
    let th = rng.random::<f64>() * 3.1;
    let (ct, st) = (th.cos(), th.sin());
    let bs = Matrix4::new(
        ct, 0.0, st, 0.0, 0.0, ct, 0.0, st, -st, 0.0, ct, 0.0, 0.0, -st, 0.0, ct,
    );
    let r = 0.8 * rng.random::<f64>();
    let (ch, sh) = (r.cosh(), r.sinh());
    let tms = Matrix4::new(
        ch, 0.0, sh, 0.0, 0.0, ch, 0.0, -sh, sh, 0.0, ch, 0.0, 0.0, -sh, 0.0, ch,
    );
    let s = local(rng) * tms * bs * local(rng);
    let out = s * base * s.transpose();
    (out + out.transpose()) * 0.5
}

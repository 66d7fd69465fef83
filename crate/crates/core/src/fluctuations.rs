//! Gaussian quantum fluctuations around the mean field.
//!
//! The covariance `G` obeys the Lyapunov equation `G' = P G + G P^T - s A s`
//! with `P = D + C + s B` built from the instantaneous magnetization. The
//! co-moving rotation `R(t)` maps `G` to the bosonic frame, where the
//! transverse directions of each ensemble form a canonical `(x, p)` pair.

use nalgebra::{Matrix3, Matrix4, Matrix6};

use crate::error::{Error, Result};
use crate::meanfield::{options, rhs_full, Trajectory};
use crate::model::{
    check_state, coupling_matrix, cross_matrix, dissipation_matrices, field_vector,
    symplectic_of_state, CovarianceState, MeanFieldState, ModelParams, SimGrid, SQRT2,
};
use crate::ode::{integrate_sampled, OdeSystem};

/// Indices of `(x1, p1, x2, p2)` inside the rotated 6x6 covariance.
pub const BOSONIC: [usize; 4] = [0, 1, 3, 4];

/// Upper-triangle index pairs in row-major order.
pub const UPPER: [(usize, usize); 21] = {
    let mut out = [(0, 0); 21];
    let mut k = 0;
    let mut i = 0;
    while i < 6 {
        let mut j = i;
        while j < 6 {
            out[k] = (i, j);
            k += 1;
            j += 1;
        }
        i += 1;
    }
    out
};

#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrices {
    pub d_l: Matrix6<f64>,
    pub d_m: Matrix6<f64>,
    pub d_b: Matrix6<f64>,
    pub c: Matrix6<f64>,
    pub s: Matrix6<f64>,
    pub p_total: Matrix6<f64>,
}

impl DriftMatrices {
    /// Mean-field generator `D = D^L + D^M + D^B`, with `m' = D m`.
    pub fn d(&self) -> Matrix6<f64> {
        self.d_l + self.d_m + self.d_b
    }
}

fn set_block(target: &mut Matrix6<f64>, o: usize, blk: &Matrix3<f64>) {
    target.fixed_view_mut::<3, 3>(o, o).copy_from(blk);
}

/// Drift matrices at magnetization `m`.
///
/// Each `D` term is block diagonal and antisymmetric: `D^L` rotates about the local
/// field `(Omega_j, 0, delta)`, `D^M` about the coupling-weighted partner magnetization
/// and `D^B` about `sqrt2 kappa (-m_y, m_x, 0)`.
pub fn drift(m: &MeanFieldState, p: &ModelParams) -> DriftMatrices {
    let h = field_vector(p);
    let mm = coupling_matrix(p);
    let (_, b) = dissipation_matrices(p);
    let s = symplectic_of_state(m);
    let (mut d_l, mut d_m, mut d_b) = (Matrix6::zeros(), Matrix6::zeros(), Matrix6::zeros());
    for (o, q) in [(0usize, 3usize), (3, 0)] {
        set_block(&mut d_l, o, &cross_matrix([h[o], h[o + 1], h[o + 2]]));
        let a = [p.j_xy * m[q], p.j_xy * m[q + 1], p.j_z * m[q + 2]];
        set_block(&mut d_m, o, &(SQRT2 * cross_matrix(a)));
        let w = [-SQRT2 * p.kappa * m[o + 1], SQRT2 * p.kappa * m[o], 0.0];
        set_block(&mut d_b, o, &cross_matrix(w));
    }
    let c = s * (mm + mm.transpose());
    let p_total = d_l + d_m + d_b + c + s * b;
    DriftMatrices {
        d_l,
        d_m,
        d_b,
        c,
        s,
        p_total,
    }
}

/// Right-hand side of the Lyapunov equation, symmetrized.
pub fn lyapunov_rhs(g: &CovarianceState, m: &MeanFieldState, p: &ModelParams) -> CovarianceState {
    let dr = drift(m, p);
    let (a, _) = dissipation_matrices(p);
    let pg = dr.p_total * g;
    let out = pg + pg.transpose() - dr.s * a * dr.s;
    (out + out.transpose()) * 0.5
}

/// Covariance of two ensembles fully polarized down.
pub fn initial_covariance_ground() -> CovarianceState {
    Matrix6::from_diagonal(&nalgebra::Vector6::new(0.5, 0.5, 0.0, 0.5, 0.5, 0.0))
}

/// Covariance of a product of spin coherent states pointing along each ensemble's `m`.
pub fn coherent_covariance(m: &MeanFieldState) -> Result<CovarianceState> {
    let mut g = Matrix6::zeros();
    for j in 0..2 {
        let v = nalgebra::Vector3::new(m[3 * j], m[3 * j + 1], m[3 * j + 2]);
        let norm = v.norm();
        if !(norm > 0.0) {
            return Err(Error::Manifold(format!(
                "ensemble {} has zero magnetization",
                j + 1
            )));
        }
        let n = v / norm;
        let block = (Matrix3::identity() - n * n.transpose()) * 0.5;
        g.fixed_view_mut::<3, 3>(3 * j, 3 * j).copy_from(&block);
    }
    Ok(g)
}

pub fn pack_upper(g: &CovarianceState) -> [f64; 21] {
    let mut out = [0.0; 21];
    for (k, &(i, j)) in UPPER.iter().enumerate() {
        out[k] = g[(i, j)];
    }
    out
}

pub fn unpack_upper(v: &[f64]) -> CovarianceState {
    let mut g = Matrix6::zeros();
    for (k, &(i, j)) in UPPER.iter().enumerate() {
        g[(i, j)] = v[k];
        g[(j, i)] = v[k];
    }
    g
}

/// Generator of the co-moving frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameGenerator {
    /// `R' = D R`: rotates with the full mean-field generator, including the spin
    /// about the magnetization axis produced by the coupling.
    Full,
    /// `R' = [w]x R` with `w = m x m' / |m|^2` per ensemble: the minimal rotation that
    /// carries the magnetization, without spin about its own axis.
    #[default]
    TwistFree,
}

/// Block-diagonal angular-velocity matrix of the chosen frame.
pub fn frame_generator(kind: FrameGenerator, m: &MeanFieldState, p: &ModelParams) -> Matrix6<f64> {
    match kind {
        FrameGenerator::Full => drift(m, p).d(),
        FrameGenerator::TwistFree => {
            let dm = rhs_full(m, p);
            let mut out = Matrix6::zeros();
            for o in [0, 3] {
                let v = [m[o], m[o + 1], m[o + 2]];
                let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                if n2 < 1e-300 {
                    continue;
                }
                let w = [
                    (v[1] * dm[o + 2] - v[2] * dm[o + 1]) / n2,
                    (v[2] * dm[o] - v[0] * dm[o + 2]) / n2,
                    (v[0] * dm[o + 1] - v[1] * dm[o]) / n2,
                ];
                set_block(&mut out, o, &cross_matrix(w));
            }
            out
        }
    }
}

/// Minimal rotation taking unit vector `a` onto unit vector `b`.
fn rotation_between(a: [f64; 3], b: [f64; 3]) -> Matrix3<f64> {
    let k = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let c = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    if c < -1.0 + 1e-12 {
        // antiparallel: half turn about any axis orthogonal to `a`
        let axis = if a[0].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let mut u = nalgebra::Vector3::new(
            axis[1] * a[2] - axis[2] * a[1],
            axis[2] * a[0] - axis[0] * a[2],
            axis[0] * a[1] - axis[1] * a[0],
        );
        u.normalize_mut();
        return 2.0 * u * u.transpose() - Matrix3::identity();
    }
    let kx = cross_matrix(k);
    Matrix3::identity() + kx + kx * kx / (1.0 + c)
}

/// Constant block rotation whose third column points along each ensemble's magnetization.
///
/// For the ground state this is `diag(1, -1, -1)` per block, which brings the
/// commutator form to `[[0, 1], [-1, 0]]` on `(x, p)`.
pub fn canonical_gauge(m: &MeanFieldState) -> Result<Matrix6<f64>> {
    let mut out = Matrix6::zeros();
    for o in [0, 3] {
        let n = (m[o] * m[o] + m[o + 1] * m[o + 1] + m[o + 2] * m[o + 2]).sqrt();
        if n < 1e-12 {
            return Err(Error::Singular(
                "the bosonic frame needs a nonzero magnetization".into(),
            ));
        }
        let u = [m[o] / n, m[o + 1] / n, m[o + 2] / n];
        let flip = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, -1.0, -1.0));
        set_block(&mut out, o, &(rotation_between([0.0, 0.0, -1.0], u) * flip));
    }
    Ok(out)
}

/// The canonical commutator form on `(x1, p1, x2, p2)`.
pub fn sigma_canonical() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0,
    )
}

fn bosonic_block(mat: &Matrix6<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| mat[(BOSONIC[i], BOSONIC[j])])
}

/// Covariance expressed in the co-moving frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedCovariance {
    pub g_bar: Matrix6<f64>,
    pub r: Matrix6<f64>,
    /// `R^T s R` restricted to `(x1, p1, x2, p2)`.
    pub sigma_bosonic: Matrix4<f64>,
}

impl RotatedCovariance {
    pub fn new(g: &CovarianceState, r: &Matrix6<f64>, m: &MeanFieldState) -> Self {
        let g_bar = r.transpose() * g * r;
        let g_bar = (g_bar + g_bar.transpose()) * 0.5;
        let sig = r.transpose() * symplectic_of_state(m) * r;
        RotatedCovariance {
            g_bar,
            r: *r,
            sigma_bosonic: bosonic_block(&sig),
        }
    }

    /// `2 G_bar` on `(x1, p1, x2, p2)`, the input of the Gaussian-information routines.
    pub fn sigma2(&self) -> Matrix4<f64> {
        bosonic_block(&self.g_bar) * 2.0
    }

    /// Largest deviation of the rotated commutator form from the canonical one.
    pub fn canonical_error(&self) -> f64 {
        (self.sigma_bosonic - sigma_canonical()).abs().max()
    }
}

/// Sampled output of a joint mean-field and covariance integration.
#[derive(Debug, Clone)]
pub struct FluctuationRun {
    pub trajectory: Trajectory,
    pub covariances: Vec<CovarianceState>,
    /// Frame rotation per sample, gauge included, when requested.
    pub rotations: Option<Vec<Matrix6<f64>>>,
}

impl FluctuationRun {
    pub fn rotated(&self, k: usize) -> Option<RotatedCovariance> {
        let r = self.rotations.as_ref()?.get(k)?;
        Some(RotatedCovariance::new(
            &self.covariances[k],
            r,
            &self.trajectory.states[k],
        ))
    }
}

struct JointSystem<'a> {
    p: &'a ModelParams,
    a: Matrix6<f64>,
    frame: Option<FrameGenerator>,
    with_cov: bool,
}

impl OdeSystem for JointSystem<'_> {
    fn dim(&self) -> usize {
        6 + if self.with_cov { 21 } else { 0 } + if self.frame.is_some() { 36 } else { 0 }
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let m: MeanFieldState = y[..6].try_into().expect("six components");
        let dm = rhs_full(&m, self.p);
        dy[..6].copy_from_slice(&dm);
        let mut off = 6;
        if self.with_cov {
            let g = unpack_upper(&y[6..27]);
            let dr = drift(&m, self.p);
            let pg = dr.p_total * g;
            let dg = pg + pg.transpose() - dr.s * self.a * dr.s;
            for (k, &(i, j)) in UPPER.iter().enumerate() {
                dy[6 + k] = dg[(i, j)];
            }
            off = 27;
        }
        if let Some(kind) = self.frame {
            let r = Matrix6::from_column_slice(&y[off..off + 36]);
            let dr = frame_generator(kind, &m, self.p) * r;
            dy[off..off + 36].copy_from_slice(dr.as_slice());
        }
    }
}

fn run_joint(
    m0: &MeanFieldState,
    g0: Option<&CovarianceState>,
    p: &ModelParams,
    grid: &SimGrid,
    frame: Option<(FrameGenerator, Matrix6<f64>)>,
) -> Result<(Trajectory, Vec<CovarianceState>, Option<Vec<Matrix6<f64>>>)> {
    p.validate()?;
    grid.validate()?;
    check_state(m0)?;
    let (a, _) = dissipation_matrices(p);
    let sys = JointSystem {
        p,
        a,
        frame: frame.map(|f| f.0),
        with_cov: g0.is_some(),
    };
    let mut y0 = m0.to_vec();
    if let Some(g) = g0 {
        if (g - g.transpose()).abs().max() > 0.0 {
            return Err(Error::InvalidParams {
                field: "g0",
                reason: "covariance must be symmetric".into(),
            });
        }
        y0.extend_from_slice(&pack_upper(g));
    }
    if frame.is_some() {
        y0.extend_from_slice(Matrix6::<f64>::identity().as_slice());
    }
    let times = grid.times();
    let mut states = Vec::with_capacity(times.len());
    let mut covs = Vec::new();
    let mut rots = Vec::new();
    let roff = if g0.is_some() { 27 } else { 6 };
    integrate_sampled(&sys, &y0, &times, options(grid), |_, _, y| {
        states.push(y[..6].try_into().expect("six components"));
        if g0.is_some() {
            covs.push(unpack_upper(&y[6..27]));
        }
        if let Some((_, gauge)) = frame {
            rots.push(Matrix6::from_column_slice(&y[roff..roff + 36]) * gauge);
        }
        Ok(())
    })?;
    let trajectory = Trajectory {
        times,
        states,
        params: *p,
    };
    Ok((trajectory, covs, frame.map(|_| rots)))
}

/// Integrates the mean field together with the 21 independent covariance entries.
pub fn integrate_joint(
    m0: &MeanFieldState,
    g0: &CovarianceState,
    p: &ModelParams,
    grid: &SimGrid,
) -> Result<FluctuationRun> {
    let (trajectory, covariances, _) = run_joint(m0, Some(g0), p, grid, None)?;
    Ok(FluctuationRun {
        trajectory,
        covariances,
        rotations: None,
    })
}

/// Joint integration that also carries the co-moving frame, gauged so that the
/// commutator form is canonical at `t0`.
pub fn integrate_with_frame(
    m0: &MeanFieldState,
    g0: &CovarianceState,
    p: &ModelParams,
    grid: &SimGrid,
    kind: FrameGenerator,
) -> Result<FluctuationRun> {
    integrate_with_frame_gauged(m0, g0, p, grid, kind, &canonical_gauge(m0)?)
}

/// As [`integrate_with_frame`], with an explicit constant gauge `R(t0)`.
pub fn integrate_with_frame_gauged(
    m0: &MeanFieldState,
    g0: &CovarianceState,
    p: &ModelParams,
    grid: &SimGrid,
    kind: FrameGenerator,
    gauge: &Matrix6<f64>,
) -> Result<FluctuationRun> {
    let gauge = *gauge;
    let (trajectory, covariances, rotations) =
        run_joint(m0, Some(g0), p, grid, Some((kind, gauge)))?;
    Ok(FluctuationRun {
        trajectory,
        covariances,
        rotations,
    })
}

/// Re-integrates the trajectory's initial condition and returns the frame rotation
/// per sample, starting from `R(0) = I`.
pub fn rotation_numeric(traj: &Trajectory, kind: FrameGenerator) -> Result<Vec<Matrix6<f64>>> {
    traj.check_uniform()?;
    let grid = SimGrid::new(traj.times[traj.len() - 1], traj.dt());
    let grid = SimGrid {
        t0: traj.times[0],
        ..grid
    };
    let (_, _, rots) = run_joint(
        &traj.states[0],
        None,
        &traj.params,
        &grid,
        Some((kind, Matrix6::identity())),
    )?;
    Ok(rots.expect("frame requested"))
}

const MANIFOLD_TOL: f64 = 1e-8;

fn block_into(out: &mut Matrix6<f64>, o: usize, rows: [[f64; 3]; 3]) {
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[(o + i, o + j)] = *v;
        }
    }
}

/// Rotation about x carrying a magnetization confined to the y-z plane.
fn x_rotation(my: f64, mz: f64) -> [[f64; 3]; 3] {
    [
        [1.0, 0.0, 0.0],
        [0.0, SQRT2 * mz, SQRT2 * my],
        [0.0, -SQRT2 * my, SQRT2 * mz],
    ]
}

/// Rotation about y carrying a magnetization confined to the x-z plane, with the
/// out-of-plane direction as the first (position-like) axis.
fn y_rotation(mx: f64, mz: f64) -> [[f64; 3]; 3] {
    [
        [0.0, -SQRT2 * mz, SQRT2 * mx],
        [1.0, 0.0, 0.0],
        [0.0, SQRT2 * mx, SQRT2 * mz],
    ]
}

/// Closed-form frame for identical ensembles moving in the y-z plane (`J = Jz`, ground start).
pub fn rotation_setup1_analytic(m: &MeanFieldState) -> Result<Matrix6<f64>> {
    if m[0].abs() >= MANIFOLD_TOL || m[3].abs() >= MANIFOLD_TOL {
        return Err(Error::Manifold(
            "analytic frame needs m_x = 0 in both ensembles".into(),
        ));
    }
    let mut r = Matrix6::zeros();
    block_into(&mut r, 0, x_rotation(m[1], m[2]));
    block_into(&mut r, 3, x_rotation(m[4], m[5]));
    Ok(r)
}

/// Closed-form frame for the seeding configuration: battery in the x-z plane, charger in the y-z plane.
pub fn rotation_setup2_analytic(m: &MeanFieldState) -> Result<Matrix6<f64>> {
    if m[1].abs() >= MANIFOLD_TOL || m[3].abs() >= MANIFOLD_TOL {
        return Err(Error::Manifold(
            "analytic frame needs m_y1 = m_x2 = 0".into(),
        ));
    }
    let mut r = Matrix6::zeros();
    block_into(&mut r, 0, y_rotation(m[0], m[2]));
    block_into(&mut r, 3, x_rotation(m[4], m[5]));
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setup {
    One,
    Two,
}

/// Coefficients `(c_xx, c_pp)` of the exchange Hamiltonian between the two bosonic modes.
///
/// Setup 1 (`J = Jz`) gives `(J, J)`; setup 2 gives `(J sqrt2 m_z2, J sqrt2 m_z1)`.
/// [`effective_hamiltonian_matrix`] places them in the analytic frame.
pub fn effective_fluctuation_hamiltonian(
    setup: Setup,
    m: &MeanFieldState,
    p: &ModelParams,
) -> Result<(f64, f64)> {
    match setup {
        Setup::One => {
            rotation_setup1_analytic(m)?;
            if p.j_xy != p.j_z {
                return Err(Error::Manifold(
                    "setup-1 effective Hamiltonian requires J = Jz".into(),
                ));
            }
            Ok((p.j_xy, p.j_xy))
        }
        Setup::Two => {
            rotation_setup2_analytic(m)?;
            Ok((p.j_xy * SQRT2 * m[5], p.j_xy * SQRT2 * m[2]))
        }
    }
}

/// Quadratic form `H` (with `H_f = r^T H r / 2`, `r = (x1, p1, x2, p2)`) in the twist-free analytic frame.
///
/// Setup 1: `c_xx x1 x2 + c_pp p1 p2 - (J/2) sum_j (x_j^2 + p_j^2)`; the local term is the
/// frame's missing spin about the magnetization and commutes with the exchange.
/// Setup 2: `c_xx x1 p2 - c_pp p1 x2`, the exchange written with the charger's quadrature
/// pair turned by a quarter period so that both jump operators keep the form `x - i sqrt2 m_z p`.
pub fn effective_hamiltonian_matrix(
    setup: Setup,
    m: &MeanFieldState,
    p: &ModelParams,
) -> Result<Matrix4<f64>> {
    let (cxx, cpp) = effective_fluctuation_hamiltonian(setup, m, p)?;
    let mut h = Matrix4::zeros();
    let mut put = |i: usize, j: usize, v: f64| {
        h[(i, j)] = v;
        h[(j, i)] = v;
    };
    match setup {
        Setup::One => {
            put(0, 2, cxx);
            put(1, 3, cpp);
            for k in 0..4 {
                h[(k, k)] = -p.j_xy;
            }
        }
        Setup::Two => {
            put(0, 3, cxx);
            put(1, 2, -cpp);
        }
    }
    Ok(h)
}

/// Drift and diffusion of the bosonic covariance generated by the quadratic form `h`
/// and the local jumps `sqrt(kappa (1 + n_j)) V_j`, `sqrt(kappa n_j) V_j^dag` with
/// `V_j = x_j - i sqrt2 m_z p_j`.
///
/// Returns `(A, D)` with `G_bar' = A G_bar + G_bar A^T + D` on `(x1, p1, x2, p2)`.
pub fn effective_generator(
    h: &Matrix4<f64>,
    mz: [f64; 2],
    p: &ModelParams,
) -> (Matrix4<f64>, Matrix4<f64>) {
    use num_complex::Complex64;
    let mut re = Matrix4::zeros();
    let mut im = Matrix4::zeros();
    for j in 0..2 {
        let o = 2 * j;
        let v = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, -SQRT2 * mz[j]),
        ];
        let n = p.occupation(j);
        for (rate, conj) in [(p.kappa * (1.0 + n), false), (p.kappa * n, true)] {
            let c = if conj { [v[0].conj(), v[1].conj()] } else { v };
            for a in 0..2 {
                for b in 0..2 {
                    let z = rate * c[a] * c[b].conj();
                    re[(o + a, o + b)] += z.re;
                    im[(o + a, o + b)] += z.im;
                }
            }
        }
    }
    let om = sigma_canonical();
    (om * (h - im), om * re * om.transpose())
}

/// Drift and diffusion of the bosonic block of `G_bar` obtained by transforming the
/// Lyapunov generator into the frame `r` rotating with angular velocity `w_frame`.
///
/// Returns `(A, D)` with `G_bar' = A G_bar + G_bar A^T + D` on the bosonic block,
/// together with the largest feed from the bosonic block into the longitudinal
/// directions (zero for the twist-free frame, which keeps the bosonic block closed).
pub fn rotated_generator(
    m: &MeanFieldState,
    p: &ModelParams,
    r: &Matrix6<f64>,
    w_frame: &Matrix6<f64>,
) -> (Matrix4<f64>, Matrix4<f64>, f64) {
    let dr = drift(m, p);
    let (a, _) = dissipation_matrices(p);
    let pbar = r.transpose() * (dr.p_total - w_frame) * r;
    let dbar = -(r.transpose() * dr.s * a * dr.s * r);
    let leak = BOSONIC
        .iter()
        .flat_map(|&i| [2usize, 5].map(|w| pbar[(w, i)].abs()))
        .fold(0.0, f64::max);
    (bosonic_block(&pbar), bosonic_block(&dbar), leak)
}

/// Integrates the bosonic-frame covariance directly, using the closed-form frame of `setup`.
pub fn integrate_rotated_direct(
    m0: &MeanFieldState,
    gbar0: &CovarianceState,
    p: &ModelParams,
    grid: &SimGrid,
    setup: Setup,
) -> Result<(Trajectory, Vec<CovarianceState>)> {
    struct Rotated<'a> {
        p: &'a ModelParams,
        a: Matrix6<f64>,
        setup: Setup,
    }
    impl OdeSystem for Rotated<'_> {
        fn dim(&self) -> usize {
            27
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            let m: MeanFieldState = y[..6].try_into().expect("six components");
            dy[..6].copy_from_slice(&rhs_full(&m, self.p));
            // off-manifold drift is numerical noise here; project it out of the frame
            let mut mm = m;
            match self.setup {
                Setup::One => {
                    mm[0] = 0.0;
                    mm[3] = 0.0;
                }
                Setup::Two => {
                    mm[1] = 0.0;
                    mm[3] = 0.0;
                }
            }
            let r = match self.setup {
                Setup::One => rotation_setup1_analytic(&mm),
                Setup::Two => rotation_setup2_analytic(&mm),
            }
            .expect("projected onto the manifold");
            let w = frame_generator(FrameGenerator::TwistFree, &m, self.p);
            let dr = drift(&m, self.p);
            let pbar = r.transpose() * (dr.p_total - w) * r;
            let g = unpack_upper(&y[6..27]);
            let pg = pbar * g;
            let dg = pg + pg.transpose() - r.transpose() * dr.s * self.a * dr.s * r;
            for (k, &(i, j)) in UPPER.iter().enumerate() {
                dy[6 + k] = dg[(i, j)];
            }
        }
    }
    p.validate()?;
    grid.validate()?;
    match setup {
        Setup::One => rotation_setup1_analytic(m0)?,
        Setup::Two => rotation_setup2_analytic(m0)?,
    };
    let (a, _) = dissipation_matrices(p);
    let sys = Rotated { p, a, setup };
    let mut y0 = m0.to_vec();
    y0.extend_from_slice(&pack_upper(gbar0));
    let times = grid.times();
    let mut states = Vec::with_capacity(times.len());
    let mut covs = Vec::with_capacity(times.len());
    integrate_sampled(&sys, &y0, &times, options(grid), |_, _, y| {
        states.push(y[..6].try_into().expect("six components"));
        covs.push(unpack_upper(&y[6..27]));
        Ok(())
    })?;
    Ok((
        Trajectory {
            times,
            states,
            params: *p,
        },
        covs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GROUND, INV_SQRT2};

    fn params() -> ModelParams {
        ModelParams {
            omega1: 1.3,
            omega2: 0.4,
            j_xy: 0.8,
            j_z: -0.6,
            ..ModelParams::default()
        }
        .with_detuning(0.25)
        .with_temperatures(0.3, 0.1)
    }

    #[test]
    fn generator_reproduces_vector_field() {
        let p = params();
        let m = [0.1, -0.3, 0.2, 0.4, 0.1, -0.3];
        let dm = drift(&m, &p).d() * nalgebra::Vector6::from_row_slice(&m);
        let f = rhs_full(&m, &p);
        for k in 0..6 {
            assert!((dm[k] - f[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn lyapunov_drift_is_the_jacobian() {
        let p = params();
        let m = [0.1, -0.3, 0.2, 0.4, 0.1, -0.3];
        let jac = crate::meanfield::jacobian(&m, &p);
        assert!((drift(&m, &p).p_total - jac).abs().max() < 1e-14);
    }

    #[test]
    fn vanishing_terms() {
        let mut p = params();
        p.omega1 = 0.0;
        p.omega2 = 0.0;
        p.omega_las = p.omega_at;
        assert_eq!(drift(&GROUND, &p).d_l, Matrix6::zeros());
        let q = ModelParams::setup1(1.0, 0.0, 0.0);
        let d = drift(&[0.1, 0.2, -0.3, 0.0, 0.1, 0.2], &q);
        assert_eq!(d.d_m, Matrix6::zeros());
        assert_eq!(d.c, Matrix6::zeros());
    }

    #[test]
    fn lyapunov_ground_examples() {
        let p = ModelParams::setup1(0.0, 0.0, 0.0);
        let dg = lyapunov_rhs(&Matrix6::zeros(), &GROUND, &p);
        let expect = Matrix6::from_diagonal(&nalgebra::Vector6::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.0));
        assert!((dg - expect).abs().max() < 1e-14);
        assert!(
            lyapunov_rhs(&initial_covariance_ground(), &GROUND, &p)
                .abs()
                .max()
                < 1e-14
        );
        let g = Matrix6::from_fn(|i, j| 0.1 * (i + 2 * j) as f64);
        let g = g + g.transpose();
        let out = lyapunov_rhs(&g, &[0.1, 0.2, -0.3, 0.0, 0.1, 0.2], &params());
        assert_eq!(out, out.transpose());
    }

    #[test]
    fn gauge_of_ground_state() {
        let r = canonical_gauge(&GROUND).unwrap();
        let e = Matrix6::from_diagonal(&nalgebra::Vector6::new(1.0, -1.0, -1.0, 1.0, -1.0, -1.0));
        assert!((r - e).abs().max() < 1e-15);
        let rc = RotatedCovariance::new(&initial_covariance_ground(), &r, &GROUND);
        assert!(rc.canonical_error() < 1e-15);
        assert!((rc.sigma2() - Matrix4::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn gauge_handles_north_pole() {
        let m = [0.0, 0.0, INV_SQRT2, 0.0, 0.3, 0.2];
        let r = canonical_gauge(&m).unwrap();
        let rc = RotatedCovariance::new(&Matrix6::zeros(), &r, &m);
        assert!(rc
            .sigma_bosonic
            .fixed_view::<2, 2>(0, 0)
            .iter()
            .zip([0.0, -1.0, 1.0, 0.0])
            .all(|(a, b)| (a - b).abs() < 1e-12));
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_rotation_at_ground() {
        let r = rotation_setup1_analytic(&GROUND).unwrap();
        assert!((r - canonical_gauge(&GROUND).unwrap()).abs().max() < 1e-15);
        assert!(rotation_setup1_analytic(&[0.1, 0.0, -0.5, 0.0, 0.0, -0.5]).is_err());
        let r2 = rotation_setup2_analytic(&GROUND).unwrap();
        let rc = RotatedCovariance::new(&Matrix6::zeros(), &r2, &GROUND);
        assert!(rc.canonical_error() < 1e-15);
    }

    #[test]
    fn effective_coefficients() {
        let p = ModelParams::setup1(2.0, 2.0, 2.0);
        assert_eq!(
            effective_fluctuation_hamiltonian(Setup::One, &GROUND, &p).unwrap(),
            (2.0, 2.0)
        );
        let q = ModelParams::setup2(2.5, 1.5);
        let (a, b) = effective_fluctuation_hamiltonian(Setup::Two, &GROUND, &q).unwrap();
        assert!((a + 1.5).abs() < 1e-15 && (b + 1.5).abs() < 1e-15);
        let z =
            effective_fluctuation_hamiltonian(Setup::Two, &GROUND, &ModelParams::setup2(2.5, 0.0))
                .unwrap();
        assert_eq!(z, (0.0, 0.0));
    }

    #[test]
    fn upper_packing_roundtrip() {
        let g = Matrix6::from_fn(|i, j| (i * 7 + j * 7 + i * j) as f64);
        assert_eq!(unpack_upper(&pack_upper(&g)), g);
        assert_eq!(UPPER[20], (5, 5));
        assert_eq!(UPPER[1], (0, 1));
    }
}

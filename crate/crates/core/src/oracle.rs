//! Exact finite-N master-equation evolution in the symmetric sector of both ensembles.
//!
//! Each ensemble of `N` atoms lives in the `N + 1` dimensional spin-`N/2` space,
//! with collective operators normalized as `S_a = sum_m sigma_a / sqrt(2)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Strategy};
use crate::fluctuations::{coherent_covariance, integrate_joint};
use crate::meanfield::integrate;
use crate::model::{CovarianceState, MeanFieldState, ModelParams, SimGrid, INV_SQRT2, SQRT2};
use crate::ode::{integrate_sampled, Dop853Options, OdeSystem};
use crate::thermo::{heat_rate_mf, heat_rate_sub};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Working vectors the integrator holds per state, used for the memory estimate.
const SOLVER_VECTORS: u64 = 24;

/// Collective spin operators of one ensemble with `S = (1/sqrt 2) sum sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveOps {
    pub n: usize,
    pub sx: DMatrix<Complex64>,
    pub sy: DMatrix<Complex64>,
    pub sz: DMatrix<Complex64>,
    pub sp: DMatrix<Complex64>,
    pub sm: DMatrix<Complex64>,
}

impl CollectiveOps {
    /// Basis index `k` holds `k` excitations above the all-down state.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        let d = n + 1;
        let s = n as f64 / 2.0;
        let mut sz = DMatrix::zeros(d, d);
        let mut sp = DMatrix::zeros(d, d);
        for k in 0..d {
            let m = k as f64 - s;
            sz[(k, k)] = Complex64::new(SQRT2 * m, 0.0);
            if k + 1 < d {
                let amp = (s * (s + 1.0) - m * (m + 1.0)).sqrt();
                sp[(k + 1, k)] = Complex64::new(SQRT2 * amp, 0.0);
            }
        }
        let sm = sp.adjoint();
        let sx = (&sp + &sm) * Complex64::new(0.5, 0.0);
        let sy = (&sp - &sm) * Complex64::new(0.0, -0.5);
        Ok(CollectiveOps {
            n,
            sx,
            sy,
            sz,
            sp,
            sm,
        })
    }

    /// Pure spin-coherent state pointing along `bloch`, a vector of length `1/sqrt(2)`.
    pub fn coherent_state(&self, bloch: [f64; 3]) -> Result<Vec<Complex64>> {
        let r = (bloch[0].powi(2) + bloch[1].powi(2) + bloch[2].powi(2)).sqrt() * SQRT2;
        if (r - 1.0).abs() > 1e-9 {
            return Err(Error::Manifold(format!(
                "coherent states need |m| = 1/sqrt(2), got {}",
                r * INV_SQRT2
            )));
        }
        // polar angle measured from the all-down pole
        let theta = (-bloch[2] * SQRT2).clamp(-1.0, 1.0).acos();
        let phi = bloch[1].atan2(bloch[0]);
        let (c, s) = ((0.5 * theta).cos(), (0.5 * theta).sin());
        let n = self.n;
        let mut binom = 1.0;
        Ok((0..=n)
            .map(|k| {
                if k > 0 {
                    binom *= (n + 1 - k) as f64 / k as f64;
                }
                let amp = binom.sqrt() * c.powi((n - k) as i32) * s.powi(k as i32);
                Complex64::from_polar(amp, -(k as f64) * phi)
            })
            .collect())
    }
}

/// Row-wise sparse complex matrix.
#[derive(Debug, Clone)]
struct Sparse {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl Sparse {
    fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != ZERO)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        Sparse { rows }
    }

    /// `out = A X` for a row-major square `X`.
    fn mul(&self, x: &[Complex64], out: &mut [Complex64]) {
        let d = self.rows.len();
        out.fill(ZERO);
        for (i, row) in self.rows.iter().enumerate() {
            let dst = &mut out[i * d..(i + 1) * d];
            for &(k, a) in row {
                for (o, v) in dst.iter_mut().zip(&x[k * d..(k + 1) * d]) {
                    *o += a * v;
                }
            }
        }
    }

    /// `Tr(A X)`.
    fn trace_with(&self, x: &[Complex64]) -> Complex64 {
        let d = self.rows.len();
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .map(|&(k, a)| a * x[k * d + i])
                    .sum::<Complex64>()
            })
            .sum()
    }
}

fn adjoint_in_place(x: &[Complex64], out: &mut [Complex64], d: usize) {
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = x[i * d + j].conj();
        }
    }
}

/// Both ensembles' collective operators on the product space, first ensemble outer.
#[derive(Debug, Clone)]
struct ProductOps {
    /// `S_x, S_y, S_z` of ensemble 1 then ensemble 2.
    spins: [Sparse; 6],
}

impl ProductOps {
    fn new(ops: &CollectiveOps) -> Self {
        let id = DMatrix::<Complex64>::identity(ops.n + 1, ops.n + 1);
        let lift = |m: &DMatrix<Complex64>, first: bool| {
            if first {
                m.kronecker(&id)
            } else {
                id.kronecker(m)
            }
        };
        let spins = [
            Sparse::from_dense(&lift(&ops.sx, true)),
            Sparse::from_dense(&lift(&ops.sy, true)),
            Sparse::from_dense(&lift(&ops.sz, true)),
            Sparse::from_dense(&lift(&ops.sx, false)),
            Sparse::from_dense(&lift(&ops.sy, false)),
            Sparse::from_dense(&lift(&ops.sz, false)),
        ];
        ProductOps { spins }
    }
}

/// Matrix-free Lindblad generator.
pub struct Liouvillian {
    n: usize,
    dim: usize,
    /// `H - (i/2) sum L^dag L`.
    effective: Sparse,
    jumps: Vec<Sparse>,
    product: ProductOps,
}

impl Liouvillian {
    pub fn new(p: &ModelParams, n: usize) -> Result<Self> {
        p.validate()?;
        let ops = CollectiveOps::new(n)?;
        let id = DMatrix::<Complex64>::identity(n + 1, n + 1);
        let one = |m: &DMatrix<Complex64>| m.kronecker(&id);
        let two = |m: &DMatrix<Complex64>| id.kronecker(m);
        let c = |x: f64| Complex64::new(x, 0.0);
        let nf = n as f64;
        let mut h = one(&ops.sx) * c(p.omega1 * INV_SQRT2)
            + two(&ops.sx) * c(p.omega2 * INV_SQRT2)
            + (one(&ops.sz) + two(&ops.sz)) * c(p.delta() * INV_SQRT2);
        h += (one(&ops.sx) * two(&ops.sx) + one(&ops.sy) * two(&ops.sy)) * c(p.j_xy / nf);
        h += one(&ops.sz) * two(&ops.sz) * c(p.j_z / nf);
        let mut jumps = Vec::new();
        let mut decay = DMatrix::<Complex64>::zeros(h.nrows(), h.ncols());
        for j in 0..2 {
            let occ = p.occupation(j);
            let lift = |m: &DMatrix<Complex64>| if j == 0 { one(m) } else { two(m) };
            for (rate, op) in [
                (p.kappa * occ / nf, &ops.sp),
                (p.kappa * (1.0 + occ) / nf, &ops.sm),
            ] {
                if rate > 0.0 {
                    let l = lift(op) * c(rate.sqrt());
                    decay += l.adjoint() * &l;
                    jumps.push(Sparse::from_dense(&l));
                }
            }
        }
        let effective = h - decay * Complex64::new(0.0, 0.5);
        Ok(Liouvillian {
            n,
            dim: (n + 1) * (n + 1),
            effective: Sparse::from_dense(&effective),
            jumps,
            product: ProductOps::new(&ops),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Hilbert-space dimension of the product of both symmetric sectors.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L[rho]` for a Hermitian, row-major `rho`.
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        let mut a = vec![ZERO; d * d];
        let mut b = vec![ZERO; d * d];
        self.effective.mul(rho, &mut a);
        for v in a.iter_mut() {
            *v *= -I;
        }
        adjoint_in_place(&a, &mut b, d);
        for ((o, x), y) in out.iter_mut().zip(&a).zip(&b) {
            *o = x + y;
        }
        for l in &self.jumps {
            // L rho L^dag = L (L rho)^dag for Hermitian rho
            l.mul(rho, &mut a);
            adjoint_in_place(&a, &mut b, d);
            l.mul(&b, &mut a);
            for (o, x) in out.iter_mut().zip(&a) {
                *o += x;
            }
        }
        adjoint_in_place(out, &mut b, d);
        for (o, y) in out.iter_mut().zip(&b) {
            *o = 0.5 * (*o + y);
        }
    }
}

impl OdeSystem for Liouvillian {
    fn dim(&self) -> usize {
        2 * self.dim * self.dim
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let rho = unpack(y);
        let mut out = vec![ZERO; rho.len()];
        self.apply(&rho, &mut out);
        pack_into(&out, dy);
    }
}

fn unpack(y: &[f64]) -> Vec<Complex64> {
    y.chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect()
}

fn pack_into(x: &[Complex64], y: &mut [f64]) {
    for (c, v) in y.chunks_exact_mut(2).zip(x) {
        c[0] = v.re;
        c[1] = v.im;
    }
}

/// Row-major density matrix of the pure product state of two spin-coherent states.
pub fn coherent_density(m: &MeanFieldState, n: usize) -> Result<Vec<Complex64>> {
    let ops = CollectiveOps::new(n)?;
    let a = ops.coherent_state([m[0], m[1], m[2]])?;
    let b = ops.coherent_state([m[3], m[4], m[5]])?;
    let psi: Vec<Complex64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| x * y))
        .collect();
    let d = psi.len();
    let mut rho = vec![ZERO; d * d];
    for i in 0..d {
        for j in 0..d {
            rho[i * d + j] = psi[i] * psi[j].conj();
        }
    }
    Ok(rho)
}

/// Mean magnetizations, connected covariance and heat currents of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleObservables {
    /// `<S_a> / N`.
    pub m: MeanFieldState,
    /// `N (<{S_a, S_b}>/2 / N^2 - m_a m_b)`, comparable with the fluctuation covariance.
    pub covariance: CovarianceState,
    /// Extensive heat currents of both baths.
    pub heat: [f64; 2],
    pub trace: f64,
}

pub fn observables(rho: &[Complex64], lv: &Liouvillian, p: &ModelParams) -> OracleObservables {
    let d = lv.dim;
    let nf = lv.n as f64;
    let ops = &lv.product.spins;
    let trace: f64 = (0..d).map(|i| rho[i * d + i].re).sum();
    let mut m = [0.0; 6];
    for (a, op) in ops.iter().enumerate() {
        m[a] = op.trace_with(rho).re / nf;
    }
    let mut second = CovarianceState::zeros();
    let mut buf = vec![ZERO; d * d];
    for b in 0..6 {
        ops[b].mul(rho, &mut buf);
        for a in 0..=b {
            // Re Tr(A B rho) is the symmetrized moment for Hermitian A, B
            let v = ops[a].trace_with(&buf).re;
            second[(a, b)] = v;
            second[(b, a)] = v;
        }
    }
    let mut covariance = CovarianceState::zeros();
    for a in 0..6 {
        for b in 0..6 {
            covariance[(a, b)] = nf * (second[(a, b)] / (nf * nf) - m[a] * m[b]);
        }
    }
    let heat = [0, 1].map(|j| {
        let o = 3 * j;
        let occ = p.occupation(j);
        -p.kappa * p.nu / nf
            * (second[(o, o)] + second[(o + 1, o + 1)] + SQRT2 * (2.0 * occ + 1.0) * m[o + 2] * nf)
    });
    OracleObservables {
        m,
        covariance,
        heat,
        trace,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    /// Upper bound on the estimated integrator memory.
    pub memory_cap_bytes: u64,
    /// Check the smallest eigenvalue of rho at every this many samples; 0 disables.
    pub positivity_every: usize,
    pub positivity_tol: f64,
    pub trace_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            memory_cap_bytes: 1 << 30,
            positivity_every: 10,
            positivity_tol: 1e-8,
            trace_tol: 1e-10,
        }
    }
}

/// Integrator memory in bytes for `n` atoms per ensemble.
pub fn memory_estimate(n: usize) -> u64 {
    let d = (n as u64 + 1).pow(2);
    d * d * 16 * SOLVER_VECTORS
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub n: usize,
    pub times: Vec<f64>,
    pub samples: Vec<OracleObservables>,
    pub final_rho: Vec<Complex64>,
    pub max_trace_error: f64,
    /// Smallest eigenvalue seen at the spot checks.
    pub min_eigenvalue: Option<f64>,
}

fn min_eigenvalue(rho: &[Complex64], d: usize) -> f64 {
    let m = DMatrix::from_row_slice(d, d, rho);
    SymmetricEigen::new(m).eigenvalues.min()
}

/// Evolves `rho0` over `grid`; `None` starts from both ensembles fully down.
pub fn evolve(
    rho0: Option<&[Complex64]>,
    p: &ModelParams,
    n: usize,
    grid: &SimGrid,
    opts: &OracleOptions,
) -> Result<OracleRun> {
    grid.validate()?;
    let need = memory_estimate(n);
    if need > opts.memory_cap_bytes {
        return Err(Error::ResourceCap(format!(
            "N = {n} needs about {need} bytes, cap is {}",
            opts.memory_cap_bytes
        )));
    }
    let lv = Liouvillian::new(p, n)?;
    let d = lv.dim;
    let rho0 = match rho0 {
        Some(r) if r.len() == d * d => r.to_vec(),
        Some(r) => {
            return Err(Error::param(
                "rho0",
                format!("expected {} entries, got {}", d * d, r.len()),
            ))
        }
        None => {
            let mut r = vec![ZERO; d * d];
            r[0] = Complex64::new(1.0, 0.0);
            r
        }
    };
    let mut y0 = vec![0.0; 2 * d * d];
    pack_into(&rho0, &mut y0);
    let times = grid.times();
    let mut samples = Vec::with_capacity(times.len());
    let mut final_rho = rho0.clone();
    let mut max_trace_error: f64 = 0.0;
    let mut min_eig: Option<f64> = None;
    // entrywise errors move eigenvalues by up to d times as much
    let ode = Dop853Options::with_tolerances(grid.rtol, grid.atol / d as f64);
    let last = times.len() - 1;
    integrate_sampled(&lv, &y0, &times, ode, |k, t, y| {
        let rho = unpack(y);
        let obs = observables(&rho, &lv, p);
        let err = (obs.trace - 1.0).abs();
        max_trace_error = max_trace_error.max(err);
        if err > opts.trace_tol {
            return Err(Error::Unphysical(format!(
                "trace deviates by {err:e} at t = {t}"
            )));
        }
        if opts.positivity_every > 0 && (k % opts.positivity_every == 0 || k == last) {
            let e = min_eigenvalue(&rho, d);
            min_eig = Some(min_eig.map_or(e, |x| x.min(e)));
            if e < -opts.positivity_tol {
                return Err(Error::Unphysical(format!(
                    "density matrix eigenvalue {e:e} at t = {t}"
                )));
            }
        }
        samples.push(obs);
        if k == last {
            final_rho = rho;
        }
        Ok(())
    })?;
    Ok(OracleRun {
        n,
        times,
        samples,
        final_rho,
        max_trace_error,
        min_eigenvalue: min_eig,
    })
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::param("fit", "needs at least two paired points"));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Singular("fit abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Sup over time and both ensembles of `|m_z^exact - m_z^mf|`.
    pub mz_error: f64,
    /// Sup over time of all magnetization components.
    pub m_error: f64,
    /// Sup-norm covariance mismatch relative to the sup norm of the fluctuation covariance.
    pub covariance_error: f64,
    /// Sup over time of `|Q_exact/N - (q_mf + Q_sub/N)|`, summed over baths.
    pub heat_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// `mz_error` strictly decreases along the list.
    pub monotone: bool,
    /// `mz_error` against `1/N`.
    pub fit: Option<LinearFit>,
}

/// Compares exact evolutions from the ground state with the mean field and its
/// fluctuations for every `N` in `n_list`.
pub fn convergence_report(
    p: &ModelParams,
    n_list: &[usize],
    grid: &SimGrid,
    opts: &OracleOptions,
    strategy: Strategy,
) -> Result<ConvergenceReport> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("n_list", "must be strictly ascending"));
    }
    let m0 = crate::model::GROUND;
    let traj = integrate(&m0, p, grid)?;
    let fl = integrate_joint(&m0, &coherent_covariance(&m0)?, p, grid)?;
    let runs = map_indexed(n_list.len(), strategy, |i| {
        evolve(None, p, n_list[i], grid, opts)
    });
    let mut rows = Vec::with_capacity(n_list.len());
    for (run, &n) in runs.into_iter().zip(n_list) {
        let run = run?;
        let nf = n as f64;
        let mut row = ConvergenceRow {
            n,
            mz_error: 0.0,
            m_error: 0.0,
            covariance_error: 0.0,
            heat_error: 0.0,
        };
        let mut cov_scale: f64 = 0.0;
        let mut cov_diff: f64 = 0.0;
        for (k, obs) in run.samples.iter().enumerate() {
            let mf = &traj.states[k];
            for a in 0..6 {
                let e = (obs.m[a] - mf[a]).abs();
                row.m_error = row.m_error.max(e);
                if a % 3 == 2 {
                    row.mz_error = row.mz_error.max(e);
                }
            }
            let g = &fl.covariances[k];
            cov_scale = cov_scale.max(g.abs().max());
            cov_diff = cov_diff.max((obs.covariance - g).abs().max());
            let q_mf = heat_rate_mf(mf, p);
            let q_sub = heat_rate_sub(mf, g, p);
            let e: f64 = (0..2)
                .map(|j| (obs.heat[j] / nf - (q_mf[j] + q_sub[j] / nf)).abs())
                .sum();
            row.heat_error = row.heat_error.max(e);
        }
        row.covariance_error = if cov_scale > 0.0 {
            cov_diff / cov_scale
        } else {
            cov_diff
        };
        rows.push(row);
    }
    let monotone = rows.windows(2).all(|w| w[1].mz_error < w[0].mz_error);
    let fit = if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| 1.0 / r.n as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.mz_error).collect();
        Some(linear_fit(&x, &y)?)
    } else {
        None
    };
    Ok(ConvergenceReport {
        rows,
        monotone,
        fit,
    })
}

/// Trajectory table rows `t, m..., N` for an oracle run.
pub fn oracle_table(run: &OracleRun) -> crate::io::Table {
    let mut header: Vec<&str> = crate::io::TRAJECTORY_HEADER.to_vec();
    header.push("N");
    let mut table = crate::io::Table::new(&header);
    for (t, obs) in run.times.iter().zip(&run.samples) {
        let mut cells = vec![crate::io::fmt_f64(*t)];
        cells.extend(obs.m.iter().map(|x| crate::io::fmt_f64(*x)));
        cells.push(run.n.to_string());
        table.push(cells);
    }
    table
}

//! Adaptive explicit Runge-Kutta integration (DOP853) with dense output.
//!
//! The stepper follows Hairer's DOP853: an 8th-order propagator with a
//! combined 5th/3rd-order error estimate and a 7th-order continuous extension
//! used to sample the solution on arbitrary output grids.

mod tableau;

use crate::error::{Error, Result};
use tableau::{A, B, C, D, E3, E5, N_STAGES, N_STAGES_EXTENDED};

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERR_EXPONENT: f64 = -1.0 / 8.0;

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct Dop853Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub first_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for Dop853Options {
    fn default() -> Self {
        Dop853Options {
            rtol: 1e-10,
            atol: 1e-10,
            max_step: f64::INFINITY,
            first_step: None,
            max_steps: 50_000_000,
        }
    }
}

impl Dop853Options {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Dop853Options {
            rtol,
            atol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt()
}

/// DOP853 stepper holding the current state and the interpolant of the last step.
pub struct Dop853<'a, S: OdeSystem> {
    sys: &'a S,
    opts: Dop853Options,
    n: usize,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    h: f64,
    last_h: f64,
    t_old: f64,
    y_old: Vec<f64>,
    k: Vec<Vec<f64>>,
    dense: Vec<Vec<f64>>,
    dense_ready: bool,
    scratch: Vec<f64>,
    y_new: Vec<f64>,
    f_new: Vec<f64>,
    pub stats: Stats,
}

impl<'a, S: OdeSystem> Dop853<'a, S> {
    pub fn new(sys: &'a S, t0: f64, y0: &[f64], opts: Dop853Options) -> Result<Self> {
        let n = sys.dim();
        if y0.len() != n {
            return Err(Error::InvalidGrid(format!(
                "initial state has length {}, system has {n}",
                y0.len()
            )));
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t0 });
        }
        let mut f = vec![0.0; n];
        sys.rhs(t0, y0, &mut f);
        let mut s = Dop853 {
            sys,
            opts,
            n,
            t: t0,
            y: y0.to_vec(),
            f,
            h: 0.0,
            last_h: 0.0,
            t_old: t0,
            y_old: y0.to_vec(),
            k: vec![vec![0.0; n]; N_STAGES_EXTENDED],
            dense: vec![vec![0.0; n]; 7],
            dense_ready: false,
            scratch: vec![0.0; n],
            y_new: vec![0.0; n],
            f_new: vec![0.0; n],
            stats: Stats {
                evaluations: 1,
                ..Default::default()
            },
        };
        s.h = match opts.first_step {
            Some(h) => h,
            None => s.initial_step(),
        }
        .min(opts.max_step);
        Ok(s)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    fn initial_step(&mut self) -> f64 {
        let (rtol, atol, n) = (self.opts.rtol, self.opts.atol, self.n);
        let scale: Vec<f64> = self.y.iter().map(|v| atol + v.abs() * rtol).collect();
        let d0 = rms(self.y.iter().zip(&scale).map(|(v, s)| v / s), n);
        let d1 = rms(self.f.iter().zip(&scale).map(|(v, s)| v / s), n);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        for i in 0..n {
            self.scratch[i] = self.y[i] + h0 * self.f[i];
        }
        self.sys.rhs(self.t + h0, &self.scratch, &mut self.f_new);
        self.stats.evaluations += 1;
        let d2 = rms(
            self.f_new
                .iter()
                .zip(&self.f)
                .zip(&scale)
                .map(|((a, b), s)| (a - b) / s),
            n,
        ) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1)
    }

    /// Runs the stages of one step of size `h`, leaving the proposal in `y_new`/`f_new`.
    fn rk_step(&mut self, h: f64) {
        let n = self.n;
        self.k[0].copy_from_slice(&self.f);
        for s in 1..N_STAGES {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += a * self.k[j][i];
                    }
                }
                self.scratch[i] = self.y[i] + h * acc;
            }
            self.sys
                .rhs(self.t + C[s] * h, &self.scratch, &mut self.k[s]);
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (j, b) in B.iter().enumerate() {
                if *b != 0.0 {
                    acc += b * self.k[j][i];
                }
            }
            self.y_new[i] = self.y[i] + h * acc;
        }
        self.sys.rhs(self.t + h, &self.y_new, &mut self.f_new);
        self.k[N_STAGES].copy_from_slice(&self.f_new);
        self.stats.evaluations += N_STAGES;
    }

    fn error_norm(&self, h: f64) -> f64 {
        let (rtol, atol, n) = (self.opts.rtol, self.opts.atol, self.n);
        let mut e5 = 0.0;
        let mut e3 = 0.0;
        for i in 0..n {
            let scale = atol + self.y[i].abs().max(self.y_new[i].abs()) * rtol;
            let mut a5 = 0.0;
            let mut a3 = 0.0;
            for j in 0..=N_STAGES {
                a5 += E5[j] * self.k[j][i];
                a3 += E3[j] * self.k[j][i];
            }
            e5 += (a5 / scale).powi(2);
            e3 += (a3 / scale).powi(2);
        }
        if e5 == 0.0 && e3 == 0.0 {
            return 0.0;
        }
        let denom = e5 + 0.01 * e3;
        h.abs() * e5 / (denom * n as f64).sqrt()
    }

    /// Takes one accepted step, never stepping past `t_bound`.
    pub fn step(&mut self, t_bound: f64) -> Result<()> {
        let min_step = 10.0 * (self.t.next_up() - self.t).abs();
        let mut h = self.h.min(self.opts.max_step).max(min_step);
        let mut rejected = false;
        loop {
            if h < min_step {
                return Err(Error::StepUnderflow { t: self.t });
            }
            if self.t + h > t_bound {
                h = t_bound - self.t;
            }
            self.rk_step(h);
            let err = self.error_norm(h);
            if !err.is_finite() || self.y_new.iter().any(|v| !v.is_finite()) {
                self.stats.rejected += 1;
                h *= MIN_FACTOR;
                rejected = true;
                if self.stats.rejected > self.opts.max_steps {
                    return Err(Error::NonFinite { t: self.t });
                }
                continue;
            }
            if err < 1.0 {
                let mut factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(ERR_EXPONENT)).min(MAX_FACTOR)
                };
                if rejected {
                    factor = factor.min(1.0);
                }
                self.t_old = self.t;
                self.y_old.copy_from_slice(&self.y);
                let t_new = if self.t + h >= t_bound {
                    t_bound
                } else {
                    self.t + h
                };
                self.t = t_new;
                std::mem::swap(&mut self.y, &mut self.y_new);
                std::mem::swap(&mut self.f, &mut self.f_new);
                self.h = h * factor;
                self.last_h = h;
                self.dense_ready = false;
                self.stats.accepted += 1;
                if self.stats.accepted > self.opts.max_steps {
                    return Err(Error::TooManySteps { t: self.t });
                }
                return Ok(());
            }
            h *= (SAFETY * err.powf(ERR_EXPONENT)).max(MIN_FACTOR);
            rejected = true;
            self.stats.rejected += 1;
        }
    }

    /// Builds the continuous extension of the last accepted step.
    fn prepare_dense(&mut self) {
        if self.dense_ready {
            return;
        }
        let (n, h) = (self.n, self.last_h);
        for s in N_STAGES + 1..N_STAGES_EXTENDED {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += a * self.k[j][i];
                    }
                }
                self.scratch[i] = self.y_old[i] + h * acc;
            }
            self.sys
                .rhs(self.t_old + C[s] * h, &self.scratch, &mut self.k[s]);
        }
        self.stats.evaluations += N_STAGES_EXTENDED - N_STAGES - 1;
        for i in 0..n {
            let dy = self.y[i] - self.y_old[i];
            let f_old = self.k[0][i];
            self.dense[0][i] = dy;
            self.dense[1][i] = h * f_old - dy;
            self.dense[2][i] = 2.0 * dy - h * (self.f[i] + f_old);
            for (r, drow) in D.iter().enumerate() {
                let mut acc = 0.0;
                for (j, d) in drow.iter().enumerate() {
                    acc += d * self.k[j][i];
                }
                self.dense[3 + r][i] = h * acc;
            }
        }
        self.dense_ready = true;
    }

    /// Evaluates the interpolant at `t` inside the last accepted step.
    pub fn dense_output(&mut self, t: f64, out: &mut [f64]) {
        if t == self.t {
            out.copy_from_slice(&self.y);
            return;
        }
        self.prepare_dense();
        let x = (t - self.t_old) / self.last_h;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (idx, row) in self.dense.iter().rev().enumerate() {
            let w = if idx % 2 == 0 { x } else { 1.0 - x };
            for i in 0..self.n {
                out[i] = (out[i] + row[i]) * w;
            }
        }
        for i in 0..self.n {
            out[i] += self.y_old[i];
        }
    }
}

/// Integrates `sys` from `times[0]` and reports the state at every entry of `times`.
///
/// `times` must be non-decreasing. The callback receives the sample index, time and state.
pub fn integrate_sampled<S, F>(
    sys: &S,
    y0: &[f64],
    times: &[f64],
    opts: Dop853Options,
    mut observe: F,
) -> Result<Stats>
where
    S: OdeSystem,
    F: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    let Some(&t0) = times.first() else {
        return Ok(Stats::default());
    };
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidGrid(
            "sample times must be non-decreasing".into(),
        ));
    }
    let t_end = *times.last().unwrap();
    let mut st = Dop853::new(sys, t0, y0, opts)?;
    let mut buf = vec![0.0; st.n];
    let mut next = 0;
    while next < times.len() && times[next] <= t0 {
        observe(next, times[next], y0)?;
        next += 1;
    }
    while next < times.len() {
        st.step(t_end)?;
        while next < times.len() && times[next] <= st.t {
            st.dense_output(times[next], &mut buf);
            observe(next, times[next], &buf)?;
            next += 1;
        }
    }
    Ok(st.stats)
}

/// Integrates to `t1` and returns the final state.
pub fn integrate_to<S: OdeSystem>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    t1: f64,
    opts: Dop853Options,
) -> Result<Vec<f64>> {
    let mut out = y0.to_vec();
    integrate_sampled(sys, y0, &[t0, t1], opts, |_, _, y| {
        out.copy_from_slice(y);
        Ok(())
    })?;
    Ok(out)
}

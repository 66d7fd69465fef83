use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use tcforge::exec::Strategy;
use tcforge::model::{ModelParams, SimGrid, GROUND, INV_SQRT2};
use tcforge::oracle::*;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn pauli() -> [DMatrix<Complex64>; 3] {
    let z = c(0.0);
    let i = Complex64::new(0.0, 1.0);
    [
        DMatrix::from_row_slice(2, 2, &[z, c(1.0), c(1.0), z]),
        DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        DMatrix::from_row_slice(2, 2, &[c(1.0), z, z, c(-1.0)]),
    ]
}

/// Column-stacked Lindblad superoperator of two coupled qubits built from Pauli matrices.
fn two_qubit_superoperator(p: &ModelParams) -> DMatrix<Complex64> {
    let id2 = DMatrix::<Complex64>::identity(2, 2);
    let [x, y, z] = pauli();
    // a single atom has S = sigma / sqrt(2), and in the product basis the first qubit is outer
    let s = |m: &DMatrix<Complex64>, first: bool| {
        let m = m * c(INV_SQRT2);
        if first {
            m.kronecker(&id2)
        } else {
            id2.kronecker(&m)
        }
    };
    let h = s(&x, true) * c(p.omega1 * INV_SQRT2)
        + s(&x, false) * c(p.omega2 * INV_SQRT2)
        + (s(&z, true) + s(&z, false)) * c(p.delta() * INV_SQRT2)
        + (s(&x, true) * s(&x, false) + s(&y, true) * s(&y, false)) * c(p.j_xy)
        + s(&z, true) * s(&z, false) * c(p.j_z);
    let id4 = DMatrix::<Complex64>::identity(4, 4);
    // vec(A rho B) = (B^T kron A) vec(rho)
    let left = |a: &DMatrix<Complex64>| id4.kronecker(a);
    let right = |b: &DMatrix<Complex64>| b.transpose().kronecker(&id4);
    let i = Complex64::new(0.0, 1.0);
    let mut sup = (left(&h) - right(&h)) * (-i);
    for (j, first) in [(0usize, true), (1, false)] {
        let n = p.occupation(j);
        let lower = (s(&x, first) - s(&y, first) * i) * c(1.0);
        let raise = lower.adjoint();
        for (rate, l) in [(p.kappa * (1.0 + n), lower), (p.kappa * n, raise)] {
            let l = l * c(rate.sqrt());
            let ld = l.adjoint();
            let ldl = &ld * &l;
            sup += left(&l) * right(&ld) - (left(&ldl) + right(&ldl)) * c(0.5);
        }
    }
    sup
}

#[test]
fn single_atoms_match_an_independent_two_qubit_model() {
    let p = ModelParams::setup1(1.3, 0.7, 0.4).with_temperatures(0.2, 0.05);
    let grid = SimGrid::new(3.0, 0.5).with_tolerances(1e-12, 1e-12);
    let run = evolve(None, &p, 1, &grid, &OracleOptions::default()).unwrap();
    let sup = two_qubit_superoperator(&p);
    let id2 = DMatrix::<Complex64>::identity(2, 2);
    let spins: Vec<DMatrix<Complex64>> = [true, false]
        .into_iter()
        .flat_map(|first| {
            pauli().map(|m| {
                let m = m * c(INV_SQRT2);
                if first {
                    m.kronecker(&id2)
                } else {
                    id2.kronecker(&m)
                }
            })
        })
        .collect();
    // Pauli index 0 is spin up; both atoms start down
    let mut rho0 = DVector::<Complex64>::zeros(16);
    rho0[15] = c(1.0);
    let mut last = DMatrix::<Complex64>::zeros(4, 4);
    for (k, t) in run.times.iter().enumerate() {
        let v = (&sup * c(*t)).exp() * &rho0;
        let rho = DMatrix::from_column_slice(4, 4, v.as_slice());
        for (a, s) in spins.iter().enumerate() {
            let m = (s * &rho).trace().re;
            assert!(
                (m - run.samples[k].m[a]).abs() < 1e-9,
                "t = {t}, component {a}"
            );
        }
        last = rho;
    }
    // the oracle counts excitations, so its basis is the Pauli basis reversed
    for e in 0..16 {
        let (r, col) = (e / 4, e % 4);
        assert!((run.final_rho[e] - last[(3 - r, 3 - col)]).norm() < 1e-9);
    }
}

#[test]
fn relaxation_without_drive_returns_the_bare_energy_as_heat() {
    let p = ModelParams::setup1(0.0, 0.8, 0.3);
    let n = 4;
    let m0 = [INV_SQRT2, 0.0, 0.0, 0.0, 0.0, INV_SQRT2];
    let rho0 = coherent_density(&m0, n).unwrap();
    let grid = SimGrid::new(30.0, 0.01);
    let run = evolve(Some(&rho0), &p, n, &grid, &OracleOptions::default()).unwrap();
    let last = run.samples.last().unwrap();
    for a in 0..6 {
        assert!((last.m[a] - GROUND[a]).abs() < 1e-6, "{:?}", last.m);
    }
    // heat leaving both baths equals the drop of the bare atomic energy
    let nf = n as f64;
    let bare = |m: &[f64; 6]| p.omega_at * INV_SQRT2 * nf * (m[2] + m[5]);
    let heat: Vec<f64> = run.samples.iter().map(|s| s.heat[0] + s.heat[1]).collect();
    let integral: f64 = heat.windows(2).map(|w| 0.5 * 0.01 * (w[0] + w[1])).sum();
    let du = bare(&last.m) - bare(&run.samples[0].m);
    assert!(
        (integral * p.omega_at / p.nu - du).abs() < 1e-3 * du.abs(),
        "{integral} {du}"
    );
}

#[test]
fn error_shrinks_with_ensemble_size() {
    let p = ModelParams::setup1(0.5, 1.0, 3.0);
    let grid = SimGrid::new(5.0, 0.05);
    let r = convergence_report(
        &p,
        &[4, 8, 12],
        &grid,
        &OracleOptions::default(),
        Strategy::Parallel,
    )
    .unwrap();
    assert!(r.monotone);
    assert!(r.rows[2].mz_error < r.rows[0].mz_error);
    assert!(r.fit.unwrap().r_squared > 0.9);
    assert!(r.rows.windows(2).all(|w| w[1].heat_error < w[0].heat_error));
}

#[test]
fn finite_ensembles_stay_correlated_at_equal_couplings() {
    let p = ModelParams::setup1(2.0, 2.0, 2.0);
    let run = evolve(
        None,
        &p,
        6,
        &SimGrid::new(3.0, 0.1),
        &OracleOptions::default(),
    )
    .unwrap();
    let cross = run
        .samples
        .iter()
        .map(|s| s.covariance.fixed_view::<3, 3>(0, 3).abs().max())
        .fold(0.0, f64::max);
    assert!(cross > 1e-3, "{cross}");
}

#[test]
fn oracle_table_has_an_n_column() {
    let p = ModelParams::setup1(2.0, 1.0, 1.0);
    let run = evolve(
        None,
        &p,
        2,
        &SimGrid::new(0.2, 0.1),
        &OracleOptions::default(),
    )
    .unwrap();
    let bytes = oracle_table(&run).to_bytes().unwrap();
    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,mx1,my1,mz1,mx2,my2,mz2,N");
    assert_eq!(lines.count(), 3);
    assert!(text.lines().nth(1).unwrap().ends_with(",2"));
}

//! Parameters, state containers and the constant matrices of the model.
//!
//! Every 6-vector and 6x6 matrix in the crate is indexed
//! `[x1, y1, z1, x2, y2, z2]`.

use nalgebra::{Matrix3, Matrix6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnetization vector `m = <S>/N` of both ensembles.
pub type MeanFieldState = [f64; 6];

/// Symmetrized second moments of the fluctuation operators.
pub type CovarianceState = Matrix6<f64>;

pub const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;
pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Both ensembles fully polarized down.
pub const GROUND: MeanFieldState = [0.0, 0.0, -INV_SQRT2, 0.0, 0.0, -INV_SQRT2];

/// Physical constants of the coupled two-ensemble model, in units where `kappa` sets the rate scale.
///
/// The detuning is derived as `omega_at - omega_las` and never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc")]
pub struct ModelParams {
    pub omega1: f64,
    pub omega2: f64,
    pub j_xy: f64,
    pub j_z: f64,
    pub kappa: f64,
    pub n1: f64,
    pub n2: f64,
    pub nu: f64,
    pub omega_at: f64,
    pub omega_las: f64,
}

/// Wire format: either `omega_las` or `delta` may be given, never both.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    omega1: f64,
    omega2: f64,
    j_xy: f64,
    j_z: f64,
    #[serde(default = "one")]
    kappa: f64,
    #[serde(default)]
    n1: f64,
    #[serde(default)]
    n2: f64,
    #[serde(default = "one")]
    nu: f64,
    #[serde(default = "one")]
    omega_at: f64,
    omega_las: Option<f64>,
    delta: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<ParamsDoc> for ModelParams {
    type Error = Error;

    fn try_from(d: ParamsDoc) -> Result<Self> {
        let omega_las = match (d.omega_las, d.delta) {
            (Some(_), Some(_)) => {
                return Err(Error::param(
                    "delta",
                    "give either omega_las or delta, not both",
                ))
            }
            (Some(w), None) => w,
            (None, Some(delta)) => d.omega_at - delta,
            (None, None) => d.omega_at,
        };
        let p = ModelParams {
            omega1: d.omega1,
            omega2: d.omega2,
            j_xy: d.j_xy,
            j_z: d.j_z,
            kappa: d.kappa,
            n1: d.n1,
            n2: d.n2,
            nu: d.nu,
            omega_at: d.omega_at,
            omega_las,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::setup1(2.0, 0.0, 0.0)
    }
}

impl ModelParams {
    /// Two identically driven ensembles at zero temperature and zero detuning.
    pub fn setup1(omega: f64, j_xy: f64, j_z: f64) -> Self {
        ModelParams {
            omega1: omega,
            omega2: omega,
            j_xy,
            j_z,
            kappa: 1.0,
            n1: 0.0,
            n2: 0.0,
            nu: 1.0,
            omega_at: 1.0,
            omega_las: 1.0,
        }
    }

    /// Undriven battery (ensemble 1) coupled through `J` to a driven charger (ensemble 2).
    pub fn setup2(omega: f64, j_xy: f64) -> Self {
        ModelParams {
            omega1: 0.0,
            omega2: omega,
            ..Self::setup1(0.0, j_xy, 0.0)
        }
    }

    pub fn with_temperatures(mut self, n1: f64, n2: f64) -> Self {
        self.n1 = n1;
        self.n2 = n2;
        self
    }

    pub fn with_detuning(mut self, delta: f64) -> Self {
        self.omega_las = self.omega_at - delta;
        self
    }

    pub fn delta(&self) -> f64 {
        self.omega_at - self.omega_las
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("j_xy", self.j_xy),
            ("j_z", self.j_z),
            ("kappa", self.kappa),
            ("n1", self.n1),
            ("n2", self.n2),
            ("nu", self.nu),
            ("omega_at", self.omega_at),
            ("omega_las", self.omega_las),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.kappa <= 0.0 {
            return Err(Error::param("kappa", "must be positive"));
        }
        if self.n1 < 0.0 {
            return Err(Error::param("n1", "must be non-negative"));
        }
        if self.n2 < 0.0 {
            return Err(Error::param("n2", "must be non-negative"));
        }
        Ok(())
    }

    pub fn omega(&self, ensemble: usize) -> f64 {
        if ensemble == 0 {
            self.omega1
        } else {
            self.omega2
        }
    }

    pub fn occupation(&self, ensemble: usize) -> f64 {
        if ensemble == 0 {
            self.n1
        } else {
            self.n2
        }
    }
}

/// Integration window, output spacing and tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimGrid {
    pub t0: f64,
    pub t1: f64,
    pub dt_out: f64,
    #[serde(default = "default_tol")]
    pub rtol: f64,
    #[serde(default = "default_tol")]
    pub atol: f64,
}

fn default_tol() -> f64 {
    1e-10
}

impl SimGrid {
    pub fn new(t1: f64, dt_out: f64) -> Self {
        SimGrid {
            t0: 0.0,
            t1,
            dt_out,
            rtol: 1e-10,
            atol: 1e-10,
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t1 > self.t0) {
            return Err(Error::InvalidGrid(format!(
                "need t1 > t0, got [{}, {}]",
                self.t0, self.t1
            )));
        }
        if !(self.dt_out > 0.0) {
            return Err(Error::InvalidGrid("dt_out must be positive".into()));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidGrid("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Number of output samples including both endpoints.
    pub fn len(&self) -> usize {
        ((self.t1 - self.t0) / self.dt_out + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.t0 + i as f64 * self.dt_out)
            .collect()
    }
}

/// Coupling matrix with `J/2` on the (x,x) and (y,y) cross slots and `Jz/2` on (z,z).
pub fn coupling_matrix(p: &ModelParams) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    for (k, v) in [(0, p.j_xy / 2.0), (1, p.j_xy / 2.0), (2, p.j_z / 2.0)] {
        m[(k, k + 3)] = v;
        m[(k + 3, k)] = v;
    }
    m
}

/// Local field `h = [Omega1, 0, delta, Omega2, 0, delta]`.
pub fn field_vector(p: &ModelParams) -> [f64; 6] {
    let d = p.delta();
    [p.omega1, 0.0, d, p.omega2, 0.0, d]
}

/// Block-diagonal dissipation matrices `(A, B)`.
pub fn dissipation_matrices(p: &ModelParams) -> (Matrix6<f64>, Matrix6<f64>) {
    let mut a = Matrix6::zeros();
    let mut b = Matrix6::zeros();
    for j in 0..2 {
        let o = 3 * j;
        let diag = p.kappa * (2.0 * p.occupation(j) + 1.0);
        a[(o, o)] = diag;
        a[(o + 1, o + 1)] = diag;
        b[(o, o + 1)] = -p.kappa;
        b[(o + 1, o)] = p.kappa;
    }
    (a, b)
}

/// `[v]x`, the matrix with `[v]x w = v x w`.
pub fn cross_matrix(v: [f64; 3]) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Commutator form `s_ab = sqrt2 eps_abc m_c`, block diagonal over ensembles.
pub fn symplectic_of_state(m: &MeanFieldState) -> Matrix6<f64> {
    let mut s = Matrix6::zeros();
    for j in 0..2 {
        let o = 3 * j;
        // [-v]x has (0,1) entry v_z, (0,2) entry -v_y, (1,2) entry v_x
        let blk = -SQRT2 * cross_matrix([m[o], m[o + 1], m[o + 2]]);
        s.fixed_view_mut::<3, 3>(o, o).copy_from(&blk);
    }
    s
}

/// Euclidean norm of each ensemble's Bloch vector.
pub fn bloch_norms(m: &MeanFieldState) -> [f64; 2] {
    let n = |o: usize| (m[o] * m[o] + m[o + 1] * m[o + 1] + m[o + 2] * m[o + 2]).sqrt();
    [n(0), n(3)]
}

/// Checks that each Bloch vector lies inside the sphere of radius `1/sqrt2`.
pub fn check_state(m: &MeanFieldState) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Manifold("non-finite magnetization".into()));
    }
    for (j, r) in bloch_norms(m).into_iter().enumerate() {
        if r > INV_SQRT2 + 1e-9 {
            return Err(Error::Manifold(format!(
                "Bloch norm of ensemble {} is {r} > 1/sqrt2",
                j + 1
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_matrix_entries() {
        let mut p = ModelParams::setup1(0.0, 2.0, 1.0);
        let m = coupling_matrix(&p);
        assert_eq!(m[(0, 3)], 1.0);
        assert_eq!(m[(4, 1)], 1.0);
        assert_eq!(m[(2, 5)], 0.5);
        assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 6);
        assert_eq!(m, m.transpose());
        p.j_xy = 0.0;
        p.j_z = 0.0;
        assert_eq!(coupling_matrix(&p), Matrix6::zeros());
    }

    #[test]
    fn field_vector_orderings() {
        assert_eq!(
            field_vector(&ModelParams::setup1(2.0, 0.0, 0.0)),
            [2.0, 0.0, 0.0, 2.0, 0.0, 0.0]
        );
        let mut p = ModelParams::setup2(0.0, 1.0);
        p.omega1 = 2.5;
        assert_eq!(field_vector(&p), [2.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(field_vector(&ModelParams::setup1(0.0, 1.0, 1.0)), [0.0; 6]);
    }

    #[test]
    fn dissipation_blocks() {
        let (a, b) = dissipation_matrices(&ModelParams::setup1(0.0, 0.0, 0.0));
        assert_eq!(
            a,
            Matrix6::from_diagonal(&nalgebra::Vector6::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.0))
        );
        assert_eq!(b + b.transpose(), Matrix6::zeros());
        let (a, _) =
            dissipation_matrices(&ModelParams::setup1(0.0, 0.0, 0.0).with_temperatures(1.0, 0.0));
        assert_eq!(
            (a[(0, 0)], a[(1, 1)], a[(2, 2)], a[(3, 3)]),
            (3.0, 3.0, 0.0, 1.0)
        );
    }

    #[test]
    fn symplectic_ground_and_zero() {
        let s = symplectic_of_state(&GROUND);
        for o in [0, 3] {
            assert!((s[(o, o + 1)] + 1.0).abs() < 1e-15);
            assert!((s[(o + 1, o)] - 1.0).abs() < 1e-15);
        }
        assert_eq!(s.iter().filter(|v| v.abs() > 1e-15).count(), 4);
        assert_eq!(symplectic_of_state(&[0.0; 6]), Matrix6::zeros());
    }

    #[test]
    fn symplectic_slots() {
        let m = [0.1, 0.2, 0.3, -0.1, 0.05, 0.4];
        let s = symplectic_of_state(&m);
        assert!((s[(0, 1)] - SQRT2 * 0.3).abs() < 1e-15);
        assert!((s[(1, 2)] - SQRT2 * 0.1).abs() < 1e-15);
        assert!((s[(2, 0)] - SQRT2 * 0.2).abs() < 1e-15);
        assert!((s[(3, 4)] - SQRT2 * 0.4).abs() < 1e-15);
        assert_eq!(s, -s.transpose());
    }

    #[test]
    fn params_json_roundtrip_and_unknown_key() {
        let p = ModelParams::setup2(2.5, 2.1).with_temperatures(0.3, 0.0);
        let s = serde_json::to_string(&p).unwrap();
        let q: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        let bad = s.replace("\"j_z\"", "\"jz\"");
        assert!(serde_json::from_str::<ModelParams>(&bad).is_err());
        let q: ModelParams = serde_json::from_str(
            r#"{"omega1":1,"omega2":1,"j_xy":0,"j_z":0,"delta":0.5,"omega_at":3}"#,
        )
        .unwrap();
        assert!((q.delta() - 0.5).abs() < 1e-15);
        assert!((q.omega_las - 2.5).abs() < 1e-15);
        assert!(serde_json::from_str::<ModelParams>(
            r#"{"omega1":1,"omega2":1,"j_xy":0,"j_z":0,"kappa":-1}"#
        )
        .is_err());
    }

    #[test]
    fn grid_length() {
        assert_eq!(SimGrid::new(10.0, 0.01).len(), 1001);
        assert_eq!(SimGrid::new(1.0, 0.3).len(), 4);
        assert!(SimGrid {
            t0: 1.0,
            t1: 1.0,
            dt_out: 0.1,
            rtol: 1e-9,
            atol: 1e-9
        }
        .validate()
        .is_err());
    }
}

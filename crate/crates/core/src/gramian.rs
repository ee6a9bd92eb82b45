//! Empirical differential Gramians, residuals of the differential
//! Lyapunov/Riccati equations, and positive-definiteness scans.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{jacobian, matrix_field_directional, Field, MatrixField};
use crate::error::{Error, Result};
use crate::integrate::{improper_integral, variational_rhs, Direction, ImproperOptions};
use crate::linalg::symmetric_eigenvalues;
use crate::sampling::{fmt_f64, Region};
use crate::systems::{ClosedLoop, Drift, SystemModel};

#[derive(Debug, Clone)]
pub struct GramianResult {
    pub matrix: DMatrix<f64>,
    pub truncation_error: f64,
    pub horizon: f64,
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `int (C Phi)^T (C Phi) dt` with `C = dout/dx` along the flow of `field`.
fn flow_gramian<F: Field, O: Field>(
    field: &F,
    output: &O,
    x: &[f64],
    direction: Direction,
    opts: &ImproperOptions,
) -> Result<GramianResult> {
    let n = x.len();
    let mut y0 = x.to_vec();
    y0.extend_from_slice(DMatrix::<f64>::identity(n, n).as_slice());
    let rhs = variational_rhs(field);
    let integrand = |_t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let c = jacobian(output, &y[..n])?;
        let phi = DMatrix::from_column_slice(n, n, &y[n..]);
        let cphi = c * phi;
        out.copy_from_slice((cphi.transpose() * &cphi).as_slice());
        Ok(())
    };
    let r = improper_integral(&rhs, &y0, &integrand, n * n, direction, opts)?;
    Ok(GramianResult {
        matrix: symmetrize(DMatrix::from_column_slice(n, n, &r.value)),
        truncation_error: r.abs_error_estimate,
        horizon: r.truncation_horizon,
    })
}

/// `Q(x) = int_0^inf (dh/dx Phi)^T (dh/dx Phi) dt` along the zero-input flow.
pub fn empirical_obs_gramian(
    sys: &SystemModel,
    x: &[f64],
    opts: &ImproperOptions,
) -> Result<GramianResult> {
    check_point(sys, x)?;
    flow_gramian(&Drift(sys), sys.h(), x, Direction::Forward, opts)
}

/// `R(x) = int_{-inf}^0 (dk/dx Phi_k)^T (dk/dx Phi_k) dt` along the closed loop.
pub fn empirical_ctrl_gramian(
    sys: &SystemModel,
    x: &[f64],
    opts: &ImproperOptions,
) -> Result<GramianResult> {
    check_point(sys, x)?;
    let k = sys.feedback_law()?;
    flow_gramian(&ClosedLoop(sys), k, x, Direction::Backward, opts)
}

fn check_point(sys: &SystemModel, x: &[f64]) -> Result<()> {
    if x.len() != sys.n() {
        return Err(Error::Dimension(format!(
            "point has {} entries, system has n = {}",
            x.len(),
            sys.n()
        )));
    }
    Ok(())
}

type MatrixFn<'a> = dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Sync + 'a;

/// A state-dependent square matrix: either an expression field (exact
/// derivatives) or a pointwise numeric map (central differences).
pub enum MatrixSource<'a> {
    Expr(MatrixField),
    Numeric(Box<MatrixFn<'a>>),
}

/// Step of the central differences for numeric matrix fields.
pub const NUMERIC_STEP: f64 = 1e-4;

impl MatrixSource<'_> {
    pub fn value(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            MatrixSource::Expr(m) => m.eval_matrix(x),
            MatrixSource::Numeric(f) => f(x),
        }
    }

    /// `sum_i dM/dx_i v_i`.
    pub fn directional(&self, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            MatrixSource::Expr(m) => matrix_field_directional(m, x, v),
            MatrixSource::Numeric(f) => {
                let central = |h: f64| -> Result<DMatrix<f64>> {
                    let plus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
                    let minus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
                    Ok((f(&plus)? - f(&minus)?) / (2.0 * h))
                };
                let coarse = central(NUMERIC_STEP)?;
                let fine = central(NUMERIC_STEP / 2.0)?;
                Ok((&fine * 4.0 - coarse) / 3.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationId {
    /// `dQ[f] + Q df + df^T Q + dh^T dh = 0`.
    ObsLyapunov,
    /// `dR[f+gk] + R dF + dF^T R - dk^T dk = 0`, `F = f + gk` (full Jacobian).
    Riccati,
    /// `dk - g^T R = 0`.
    RiccatiGain,
    /// `-dP[f+gk] + P J^T + J P + g g^T = 0`, `J` the frozen-input Jacobian.
    CtrlLyapunov,
    /// `dk P - g^T = 0`.
    CtrlGain,
    /// `-dP[f] + P df^T + df P + g g^T = 0`.
    OpenLyapunov,
}

#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub equation: EquationId,
    pub residual: DMatrix<f64>,
    pub frobenius_norm: f64,
}

impl ResidualReport {
    fn new(equation: EquationId, residual: DMatrix<f64>) -> Self {
        let frobenius_norm = residual.norm();
        ResidualReport {
            equation,
            residual,
            frobenius_norm,
        }
    }
}

fn check_square(m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "matrix field must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn lyap_residual_obs(
    sys: &SystemModel,
    q: &MatrixSource<'_>,
    x: &[f64],
) -> Result<ResidualReport> {
    let qx = q.value(x)?;
    check_square(&qx, sys.n())?;
    let f = sys.f().eval_f64(x)?;
    let jf = sys.jac_f(x)?;
    let jh = sys.jac_h(x)?;
    let res = q.directional(x, &f)? + &qx * &jf + jf.transpose() * &qx + jh.transpose() * jh;
    Ok(ResidualReport::new(EquationId::ObsLyapunov, res))
}

/// Residuals of the Riccati equation and of its gain relation.
pub fn riccati_residual(
    sys: &SystemModel,
    r: &MatrixSource<'_>,
    x: &[f64],
) -> Result<(ResidualReport, ResidualReport)> {
    let rx = r.value(x)?;
    check_square(&rx, sys.n())?;
    let drift = sys.closed_loop(x)?;
    let jcl = sys.closed_loop_jacobian(x)?;
    let jk = sys.jac_k(x)?;
    let g = sys.g_matrix(x)?;
    let main = r.directional(x, &drift)? + &rx * &jcl + jcl.transpose() * &rx
        - jk.transpose() * &jk;
    let gain = jk - g.transpose() * rx;
    Ok((
        ResidualReport::new(EquationId::Riccati, main),
        ResidualReport::new(EquationId::RiccatiGain, gain),
    ))
}

/// Residuals of the controllability Lyapunov equation (frozen-input Jacobian)
/// and of its gain relation.
pub fn lyap_residual_ctrl(
    sys: &SystemModel,
    p: &MatrixSource<'_>,
    x: &[f64],
) -> Result<(ResidualReport, ResidualReport)> {
    let px = p.value(x)?;
    check_square(&px, sys.n())?;
    let drift = sys.closed_loop(x)?;
    let jfr = sys.frozen_jacobian(x)?;
    let jk = sys.jac_k(x)?;
    let g = sys.g_matrix(x)?;
    let main = -p.directional(x, &drift)? + &px * jfr.transpose() + &jfr * &px + &g * g.transpose();
    let gain = jk * px - g.transpose();
    Ok((
        ResidualReport::new(EquationId::CtrlLyapunov, main),
        ResidualReport::new(EquationId::CtrlGain, gain),
    ))
}

pub fn lyap_residual_open(
    sys: &SystemModel,
    p: &MatrixSource<'_>,
    x: &[f64],
) -> Result<ResidualReport> {
    let px = p.value(x)?;
    check_square(&px, sys.n())?;
    let f = sys.f().eval_f64(x)?;
    let jf = sys.jac_f(x)?;
    let g = sys.g_matrix(x)?;
    let res = -p.directional(x, &f)? + &px * jf.transpose() + &jf * &px + &g * g.transpose();
    Ok(ResidualReport::new(EquationId::OpenLyapunov, res))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanPoint {
    pub x: Vec<f64>,
    pub min_eig: f64,
    pub det: f64,
    /// `ok`, `indefinite`, or the evaluation error.
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PdScan {
    pub region: Region,
    pub shape: Vec<usize>,
    pub points: Vec<ScanPoint>,
}

impl PdScan {
    pub fn all_positive(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.status == "ok" && p.min_eig > 0.0 && p.det > 0.0)
    }

    pub fn failures(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.status != "ok" && p.status != "indefinite")
            .count()
    }

    /// Columns `x1..xn,min_eig,det,status`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 1..=self.region.dim() {
            let _ = write!(out, "x{i},");
        }
        out.push_str("min_eig,det,status\n");
        for p in &self.points {
            for v in &p.x {
                out.push_str(&fmt_f64(*v));
                out.push(',');
            }
            let status = p.status.replace([',', '\n'], ";");
            let _ = writeln!(out, "{},{},{}", fmt_f64(p.min_eig), fmt_f64(p.det), status);
        }
        out
    }
}

/// Runs `f` on a dedicated pool of `jobs` threads, or the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Minimum eigenvalue and determinant of a symmetric matrix field over an
/// inclusive grid. Per-point failures are recorded and the scan continues.
pub fn pd_scan(
    field: &MatrixFn<'_>,
    region: &Region,
    shape: &[usize],
    jobs: Option<usize>,
) -> Result<PdScan> {
    let grid = region.grid(shape)?;
    let points = with_jobs(jobs, || {
        grid.par_iter()
            .map(|x| match field(x) {
                Ok(m) if m.is_square() => {
                    let eig = symmetric_eigenvalues(&m);
                    let min_eig = eig.first().copied().unwrap_or(f64::NAN);
                    let det = m.determinant();
                    let status = if min_eig > 0.0 && det > 0.0 { "ok" } else { "indefinite" };
                    ScanPoint {
                        x: x.clone(),
                        min_eig,
                        det,
                        status: status.into(),
                    }
                }
                Ok(m) => ScanPoint {
                    x: x.clone(),
                    min_eig: f64::NAN,
                    det: f64::NAN,
                    status: format!("error: non-square {}x{} matrix", m.nrows(), m.ncols()),
                },
                Err(e) => ScanPoint {
                    x: x.clone(),
                    min_eig: f64::NAN,
                    det: f64::NAN,
                    status: format!("error: {e}"),
                },
            })
            .collect()
    })?;
    Ok(PdScan {
        region: region.clone(),
        shape: shape.to_vec(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_lyapunov;
    use crate::systems::registry;

    fn certificate(sys: &SystemModel, which: char) -> MatrixSource<'static> {
        let c = sys.certificates();
        let m = match which {
            'P' => c.p.clone(),
            'Q' => c.q.clone(),
            _ => c.r.clone(),
        };
        MatrixSource::Expr(m.unwrap())
    }

    #[test]
    fn scalar_gramians() {
        let sys = registry("linear_scalar").unwrap();
        let opts = ImproperOptions::default();
        let q = empirical_obs_gramian(&sys, &[0.4], &opts).unwrap();
        assert!((q.matrix[(0, 0)] - 0.5).abs() < 1e-8);
        let r = empirical_ctrl_gramian(&sys, &[0.4], &opts).unwrap();
        assert!((r.matrix[(0, 0)] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn two_state_gramian_matches_lyapunov_solve() {
        let sys = registry("linear_2x2").unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let want = solve_lyapunov(&a.transpose(), &(c.transpose() * c)).unwrap();
        let q = empirical_obs_gramian(&sys, &[0.3, 0.1], &ImproperOptions::default()).unwrap();
        assert!((q.matrix - want).norm() < 1e-7);
    }

    #[test]
    fn zero_feedback_gives_zero_ctrl_gramian() {
        let sys = registry("linear_scalar").unwrap();
        let zero = crate::calculus::VectorField::parse(1, &["0"]).unwrap();
        let sys = sys.with_feedback(zero).unwrap();
        let r = empirical_ctrl_gramian(&sys, &[0.1], &ImproperOptions::default()).unwrap();
        assert_eq!(r.matrix[(0, 0)], 0.0);
    }

    #[test]
    fn scalar_residuals_vanish() {
        let sys = registry("linear_scalar").unwrap();
        let x = [0.7];
        assert!(lyap_residual_obs(&sys, &certificate(&sys, 'Q'), &x).unwrap().frobenius_norm < 1e-15);
        let (a, b) = riccati_residual(&sys, &certificate(&sys, 'R'), &x).unwrap();
        assert!(a.frobenius_norm < 1e-14 && b.frobenius_norm < 1e-14);
        let (a, b) = lyap_residual_ctrl(&sys, &certificate(&sys, 'P'), &x).unwrap();
        assert!(a.frobenius_norm < 1e-15 && b.frobenius_norm < 1e-15);
        assert!(lyap_residual_open(&sys, &certificate(&sys, 'P'), &x).unwrap().frobenius_norm < 1e-15);
    }

    #[test]
    fn zero_fields_leave_forcing_terms() {
        let sys = registry("paper_sec5").unwrap();
        let zero = MatrixSource::Expr(MatrixField::constant(2, &DMatrix::zeros(2, 2)));
        let x = [0.2, -0.1];
        let r = lyap_residual_obs(&sys, &zero, &x).unwrap();
        let jh = sys.jac_h(&x).unwrap();
        assert_eq!(r.residual, jh.transpose() * jh);
        let g = sys.g_matrix(&x).unwrap();
        let (main, _) = lyap_residual_ctrl(&sys, &zero, &x).unwrap();
        assert_eq!(main.residual, &g * g.transpose());
        let open = lyap_residual_open(&sys, &zero, &x).unwrap();
        assert_eq!(open.residual, &g * g.transpose());
        let (_, gain) = riccati_residual(&sys, &zero, &x).unwrap();
        assert_eq!(gain.residual, sys.jac_k(&x).unwrap());
    }

    #[test]
    fn example_certificates_are_exact() {
        let sys = registry("paper_sec5").unwrap();
        let region = Region::cube(2, 0.5);
        for x in region.grid(&[5, 5]).unwrap() {
            let (a, b) = lyap_residual_ctrl(&sys, &certificate(&sys, 'P'), &x).unwrap();
            assert!(a.frobenius_norm <= 1e-12 && b.frobenius_norm <= 1e-12);
            let (a, b) = riccati_residual(&sys, &certificate(&sys, 'R'), &x).unwrap();
            assert!(a.frobenius_norm <= 1e-12 && b.frobenius_norm <= 1e-12);
        }
    }

    #[test]
    fn numeric_directional_matches_exact() {
        let m = MatrixField::parse(2, 2, 2, &["x1^3", "x1*x2", "x1*x2", "x2^2 - x1"]).unwrap();
        let exact = MatrixSource::Expr(m.clone());
        let numeric = MatrixSource::Numeric(Box::new(move |x: &[f64]| m.eval_matrix(x)));
        let (x, v) = ([0.3, -0.7], [1.0, 2.0]);
        let d = exact.directional(&x, &v).unwrap() - numeric.directional(&x, &v).unwrap();
        assert!(d.norm() < 1e-12, "{d}");
    }

    #[test]
    fn scans() {
        let id = |_: &[f64]| Ok(DMatrix::identity(2, 2));
        let scan = pd_scan(&id, &Region::cube(2, 1.0), &[3, 3], Some(2)).unwrap();
        assert!(scan.points.iter().all(|p| p.min_eig == 1.0 && p.det == 1.0));
        assert!(scan.all_positive());
        let diag = |x: &[f64]| Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![x[0], 1.0])));
        let scan = pd_scan(&diag, &Region::cube(2, 1.0), &[5, 2], None).unwrap();
        for p in &scan.points {
            assert_eq!(p.min_eig < 0.0, p.x[0] < 0.0);
        }
        let csv = scan.to_csv();
        assert!(csv.starts_with("x1,x2,min_eig,det,status\n"));
        assert_eq!(csv.lines().count(), 11);
        let failing = |x: &[f64]| {
            if x[0] > 0.0 {
                Err(Error::Invalid("boom".into()))
            } else {
                Ok(DMatrix::identity(1, 1))
            }
        };
        let scan = pd_scan(&failing, &Region::cube(1, 1.0), &[3], None).unwrap();
        assert_eq!(scan.failures(), 1);
    }
}

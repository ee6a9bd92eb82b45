//! Built-in example systems with their closed-form certificates.

use nalgebra::DMatrix;

use super::model::{Certificates, SystemModel};
use crate::calculus::{MatrixField, VectorField};
use crate::error::{Error, Result};
use crate::expr::{parse_system_spec, BinOp, Expr};
use crate::linalg::solve_lyapunov;

pub const REGISTRY_NAMES: [&str; 3] = ["paper_sec5", "linear_scalar", "linear_2x2"];

const PAPER_SEC5: &str = include_str!("../../data/paper_sec5.json");

pub fn registry(name: &str) -> Result<SystemModel> {
    match name {
        "paper_sec5" => SystemModel::from_spec(name, &parse_system_spec(PAPER_SEC5)?),
        "linear_scalar" => linear_system(
            name,
            &DMatrix::from_element(1, 1, -1.0),
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::from_element(1, 1, 1.0),
        ),
        "linear_2x2" => linear_system(
            name,
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]),
            &DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            &DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        ),
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

fn coefficient(v: f64) -> Expr {
    if v < 0.0 {
        Expr::Neg(Box::new(Expr::Const(-v)))
    } else {
        Expr::Const(v)
    }
}

/// `sum_j c_j x_j`, skipping zero coefficients.
fn linear_form(coeffs: impl IntoIterator<Item = f64>) -> Expr {
    coeffs
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c != 0.0)
        .map(|(j, c)| {
            if c == 1.0 {
                Expr::Var(j)
            } else {
                Expr::binary(BinOp::Mul, coefficient(c), Expr::Var(j))
            }
        })
        .reduce(|acc, term| Expr::binary(BinOp::Add, acc, term))
        .unwrap_or(Expr::Const(0.0))
}

/// Linear system `x' = A x + B u`, `y = C x` for Hurwitz `A`.
///
/// Certificates come from the algebraic Lyapunov equations: `P` solves
/// `A P + P A^T + B B^T = 0`, `Q` solves `A^T Q + Q A + C^T C = 0`,
/// `R = P^{-1}`, and the feedback is `k(x) = B^T R x`.
pub fn linear_system(
    name: &str,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<SystemModel> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension("inconsistent (A, B, C) shapes".into()));
    }
    let f = VectorField::new(
        n,
        (0..n)
            .map(|i| linear_form(a.row(i).iter().copied()))
            .collect(),
    )?;
    let g = MatrixField::constant(n, b);
    let h = VectorField::new(
        n,
        (0..c.nrows())
            .map(|i| linear_form(c.row(i).iter().copied()))
            .collect(),
    )?;

    let p = solve_lyapunov(a, &(b * b.transpose()))?;
    let q = solve_lyapunov(&a.transpose(), &(c.transpose() * c))?;
    let r = p
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Invalid(format!("{name}: (A, B) is not controllable")))?;
    let r = (&r + r.transpose()) * 0.5;
    let gain = b.transpose() * &r;
    let k = VectorField::new(
        n,
        (0..gain.nrows())
            .map(|i| linear_form(gain.row(i).iter().copied()))
            .collect(),
    )?;

    Ok(
        SystemModel::new(name, f, g, h, Some(k))?.with_certificates(Certificates {
            p: Some(MatrixField::constant(n, &p)),
            q: Some(MatrixField::constant(n, &q)),
            r: Some(MatrixField::constant(n, &r)),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::Field;

    #[test]
    fn paper_example_dimensions_and_values() {
        let sys = registry("paper_sec5").unwrap();
        assert_eq!((sys.n(), sys.m(), sys.p()), (2, 1, 1));
        assert_eq!(sys.f().eval_f64(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(sys.g().eval_f64(&[0.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        let p = sys.certificates().p.as_ref().unwrap();
        assert_eq!(p.eval_matrix(&[0.2, 0.1]).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(sys.k().unwrap().eval_f64(&[1.0, 2.0]).unwrap(), vec![3.5]);
    }

    #[test]
    fn linear_scalar_certificates() {
        let sys = registry("linear_scalar").unwrap();
        let c = sys.certificates();
        let at = [0.7];
        assert!((c.q.as_ref().unwrap().eval_matrix(&at).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((c.p.as_ref().unwrap().eval_matrix(&at).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((c.r.as_ref().unwrap().eval_matrix(&at).unwrap()[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((sys.k().unwrap().eval_f64(&[1.0]).unwrap()[0] - 2.0).abs() < 1e-15);
        assert_eq!(sys.f().eval_f64(&[3.0]).unwrap(), vec![-3.0]);
    }

    #[test]
    fn linear_2x2_certificates() {
        let sys = registry("linear_2x2").unwrap();
        let c = sys.certificates();
        let x = [0.0, 0.0];
        let q = c.q.as_ref().unwrap().eval_matrix(&x).unwrap();
        let q_want = DMatrix::from_row_slice(2, 2, &[11.0 / 12.0, 0.25, 0.25, 1.0 / 12.0]);
        assert!((q - q_want).norm() < 1e-14);
        let r = c.r.as_ref().unwrap().eval_matrix(&x).unwrap();
        assert!((r - DMatrix::from_row_slice(2, 2, &[12.0, 0.0, 0.0, 6.0])).norm() < 1e-12);
        let k = sys.k().unwrap().eval_f64(&[0.0, 1.0]).unwrap();
        assert!((k[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(registry("nope"), Err(Error::UnknownSystem(n)) if n == "nope"));
    }
}

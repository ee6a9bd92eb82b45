//! Exact derivatives of polynomial/rational fields: Jacobians, Lie derivatives,
//! directional derivatives of matrix fields, and the two bracket recursions.

mod dual;
mod field;
mod jet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::systems::SystemModel;

pub use dual::Dual;
pub use field::{Field, MatrixField, VectorField};
pub use jet::{Jet, JetSpace};

fn seed<S: Scalar>(x: &[S]) -> Vec<Dual<S>> {
    let n = x.len();
    x.iter()
        .enumerate()
        .map(|(i, v)| Dual::variable(v.clone(), i, n))
        .collect()
}

/// Jacobian rows `dF_a/dx_b` with entries in `S` (so nesting gives higher derivatives).
pub fn jacobian_over<S: Scalar, F: Field>(field: &F, x: &[S]) -> Result<Vec<Vec<S>>> {
    let n = x.len();
    let out = field.eval(&seed(x))?;
    Ok(out
        .into_iter()
        .map(|d| (0..n).map(|b| d.derivative(b)).collect())
        .collect())
}

pub fn jacobian<F: Field>(field: &F, x: &[f64]) -> Result<DMatrix<f64>> {
    let rows = jacobian_over(field, x)?;
    let n = x.len();
    Ok(DMatrix::from_fn(rows.len(), n, |a, b| rows[a][b]))
}

/// Value and directional derivative `(F(x), DF(x) v)` in one dual pass.
pub fn directional<F: Field>(field: &F, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let seeded: Vec<Dual> = x
        .iter()
        .zip(v)
        .map(|(a, b)| Dual::with_tangent(*a, vec![*b]))
        .collect();
    let out = field.eval(&seeded)?;
    Ok(out.into_iter().map(|d| (d.re, d.derivative(0))).unzip())
}

/// `d(f + g u)/dx` with `u` held at `k(x)`, entries in `S`.
pub fn frozen_jacobian_over<S: Scalar>(sys: &SystemModel, x: &[S]) -> Result<Vec<Vec<S>>> {
    let u = sys.feedback_law()?.eval(x)?;
    let lifted: Vec<Dual<S>> = u.into_iter().map(Dual::constant).collect();
    let xd = seed(x);
    let value = sys.controlled(&xd, &lifted)?;
    let n = x.len();
    Ok(value
        .into_iter()
        .map(|d| (0..n).map(|b| d.derivative(b)).collect())
        .collect())
}

fn mat_vec<S: Scalar>(m: &[Vec<S>], v: &[S]) -> Vec<S> {
    m.iter()
        .map(|row| {
            row.iter()
                .zip(v)
                .fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
        })
        .collect()
}

fn check_square<F: Field>(v: &F, n: usize) -> Result<()> {
    if v.dim_in() != n || v.dim_out() != n {
        return Err(Error::Dimension(format!(
            "bracket operand must map R^{n} to R^{n}, got R^{} -> R^{}",
            v.dim_in(),
            v.dim_out()
        )));
    }
    Ok(())
}

/// Modified closed-loop bracket `dV/dx (f + g k) - d(f + g u)/dx|_{u=k} V`.
///
/// The second Jacobian treats `u` as frozen, so no `dk/dx` terms appear.
pub fn ad_closed_loop<V: Field>(sys: &SystemModel, v: &V, x: &[f64]) -> Result<Vec<f64>> {
    check_square(v, sys.n())?;
    closed_loop_bracket_over(sys, v, x)
}

fn closed_loop_bracket_over<S: Scalar, V: Field>(
    sys: &SystemModel,
    v: &V,
    x: &[S],
) -> Result<Vec<S>> {
    let dv = jacobian_over(v, x)?;
    let vx = v.eval(x)?;
    let drift = sys.closed_loop(x)?;
    let frozen = frozen_jacobian_over(sys, x)?;
    let a = mat_vec(&dv, &drift);
    let b = mat_vec(&frozen, &vx);
    Ok(a.into_iter().zip(b).map(|(p, q)| p - q).collect())
}

/// Standard Lie bracket `ad_f V = dV/dx f - df/dx V`.
pub fn ad_standard<F: Field, V: Field>(f: &F, v: &V, x: &[f64]) -> Result<Vec<f64>> {
    check_square(f, x.len())?;
    check_square(v, x.len())?;
    standard_bracket_over(f, v, x)
}

fn standard_bracket_over<S: Scalar, F: Field, V: Field>(f: &F, v: &V, x: &[S]) -> Result<Vec<S>> {
    let dv = jacobian_over(v, x)?;
    let df = jacobian_over(f, x)?;
    let fx = f.eval(x)?;
    let vx = v.eval(x)?;
    let a = mat_vec(&dv, &fx);
    let b = mat_vec(&df, &vx);
    Ok(a.into_iter().zip(b).map(|(p, q)| p - q).collect())
}

/// `x -> ad_{f+gu|k} V(x)` as a field, so the bracket can be iterated.
pub struct ClosedLoopBracket<'a, V> {
    pub sys: &'a SystemModel,
    pub inner: V,
}

impl<V: Field> Field for ClosedLoopBracket<'_, V> {
    fn dim_in(&self) -> usize {
        self.sys.n()
    }
    fn dim_out(&self) -> usize {
        self.sys.n()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        closed_loop_bracket_over(self.sys, &self.inner, x)
    }
}

/// `x -> ad_f V(x)` as a field.
pub struct StandardBracket<F, V> {
    pub f: F,
    pub inner: V,
}

impl<F: Field, V: Field> Field for StandardBracket<F, V> {
    fn dim_in(&self) -> usize {
        self.f.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.f.dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        standard_bracket_over(&self.f, &self.inner, x)
    }
}

/// `L_f h(x)` and its gradient row, via nested duals.
pub fn lie_derivative_scalar<F: Field, H: Field>(
    f: &F,
    h: &H,
    x: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if h.dim_out() != 1 {
        return Err(Error::Dimension(format!(
            "Lie derivative needs a scalar output, got dimension {}",
            h.dim_out()
        )));
    }
    let n = x.len();
    let outer = seed(x);
    let dh = jacobian_over(h, &outer)?;
    let fx = f.eval(&outer)?;
    let lfh = dh[0]
        .iter()
        .zip(&fx)
        .fold(Dual::from_f64(0.0), |acc, (a, b)| {
            acc + a.clone() * b.clone()
        });
    let grad = (0..n).map(|i| lfh.derivative(i)).collect();
    Ok((lfh.re, grad))
}

/// `sum_i dM/dx_i v_i`, exact.
pub fn matrix_field_directional(m: &MatrixField, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    if v.len() != x.len() {
        return Err(Error::Dimension(
            "direction and point differ in length".into(),
        ));
    }
    let xd: Vec<Dual<f64>> = x
        .iter()
        .zip(v)
        .map(|(xi, vi)| Dual::with_tangent(*xi, vec![*vi]))
        .collect();
    let flat = m.eval(&xd)?;
    Ok(DMatrix::from_fn(m.rows(), m.cols(), |i, j| {
        flat[i * m.cols() + j].derivative(0)
    }))
}

fn jets_for(sys: &SystemModel, x: &[f64], order: usize) -> Result<Vec<Jet>> {
    if x.len() != sys.n() {
        return Err(Error::Dimension(format!(
            "point has {} coordinates, system has n = {}",
            x.len(),
            sys.n()
        )));
    }
    Ok(JetSpace::new(sys.n(), order)?.variables(x))
}

fn jet_bracket(vjet: &[Jet], drift: &[Jet], frozen: &[Vec<Jet>]) -> Vec<Jet> {
    let n = vjet.len();
    (0..n)
        .map(|a| {
            let mut acc = Jet::constant(0.0);
            for b in 0..n {
                acc = acc + vjet[a].derivative(b) * drift[b].clone();
                acc = acc - frozen[a][b].clone() * vjet[b].clone();
            }
            acc
        })
        .collect()
}

/// `[ad^0 g_j, ..., ad^depth g_j]` for every input column `j`, closed-loop bracket.
/// Result is indexed `[level][input] -> vector`.
pub fn closed_loop_bracket_sequence(
    sys: &SystemModel,
    x: &[f64],
    depth: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let xs = jets_for(sys, x, depth)?;
    let n = sys.n();
    let drift = sys.closed_loop(&xs)?;
    let u = sys.feedback_law()?.eval(&xs)?;
    let fjac: Vec<Vec<Jet>> = {
        let f = sys.f().eval(&xs)?;
        f.iter()
            .map(|fa| (0..n).map(|b| fa.derivative(b)).collect())
            .collect()
    };
    let g = sys.g().eval(&xs)?;
    let m = sys.m();
    let frozen: Vec<Vec<Jet>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    let mut acc = fjac[a][b].clone();
                    for j in 0..m {
                        acc = acc + g[a * m + j].derivative(b) * u[j].clone();
                    }
                    acc
                })
                .collect()
        })
        .collect();
    bracket_levels(&g, n, m, depth, |v| jet_bracket(v, &drift, &frozen))
}

/// `[g_j, ad_f g_j, ..., ad_f^depth g_j]`, standard bracket.
pub fn standard_bracket_sequence(
    sys: &SystemModel,
    x: &[f64],
    depth: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let xs = jets_for(sys, x, depth)?;
    let n = sys.n();
    let m = sys.m();
    let f = sys.f().eval(&xs)?;
    let fjac: Vec<Vec<Jet>> = f
        .iter()
        .map(|fa| (0..n).map(|b| fa.derivative(b)).collect())
        .collect();
    let g = sys.g().eval(&xs)?;
    bracket_levels(&g, n, m, depth, |v| jet_bracket(v, &f, &fjac))
}

fn bracket_levels(
    g: &[Jet],
    n: usize,
    m: usize,
    depth: usize,
    step: impl Fn(&[Jet]) -> Vec<Jet>,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut current: Vec<Vec<Jet>> = (0..m)
        .map(|j| (0..n).map(|a| g[a * m + j].clone()).collect())
        .collect();
    let mut levels = Vec::with_capacity(depth + 1);
    for level in 0..=depth {
        levels.push(
            current
                .iter()
                .map(|v| v.iter().map(Jet::value).collect())
                .collect(),
        );
        if level < depth {
            current = current.iter().map(|v| step(v)).collect();
        }
    }
    Ok(levels)
}

/// Gradient rows of `L_f^i h_j` for `i = 0..=depth`, indexed `[level][output] -> row`.
pub fn lie_derivative_gradients(
    sys: &SystemModel,
    x: &[f64],
    depth: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let xs = jets_for(sys, x, depth + 1)?;
    let n = sys.n();
    let f = sys.f().eval(&xs)?;
    let mut current = sys.h().eval(&xs)?;
    let mut levels = Vec::with_capacity(depth + 1);
    for level in 0..=depth {
        levels.push(
            current
                .iter()
                .map(|l| (0..n).map(|b| l.gradient_entry(b)).collect())
                .collect(),
        );
        if level < depth {
            current = current
                .iter()
                .map(|l| {
                    (0..n).fold(Jet::constant(0.0), |acc, b| {
                        acc + l.derivative(b) * f[b].clone()
                    })
                })
                .collect();
        }
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::registry;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn drift_jacobian_at_origin() {
        let sys = registry("paper_sec5").unwrap();
        let j = jacobian(sys.f(), &[0.0, 0.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[-0.5, -1.0, 0.0, -0.5]));
    }

    #[test]
    fn output_jacobian_is_constant() {
        let sys = registry("paper_sec5").unwrap();
        for x in [[0.0, 0.0], [0.7, -2.0]] {
            let j = jacobian(sys.h(), &x).unwrap();
            assert_eq!(j, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        }
    }

    #[test]
    fn constant_field_has_zero_jacobian() {
        let c = VectorField::parse(3, &["2", "-1/3"]).unwrap();
        let j = jacobian(&c, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(j, DMatrix::zeros(2, 3));
    }

    #[test]
    fn closed_loop_bracket_values() {
        let sys = registry("paper_sec5").unwrap();
        let g = sys.input_column(0);
        let ad1 = ad_closed_loop(&sys, &g, &[0.0, 0.0]).unwrap();
        assert!(close(ad1[0], 1.5, 1e-15) && close(ad1[1], 0.5, 1e-15));

        let once = ClosedLoopBracket {
            sys: &sys,
            inner: &g,
        };
        let ad2 = ad_closed_loop(&sys, &once, &[0.0, 0.0]).unwrap();
        assert!(close(ad2[0], 1.25, 1e-15) && close(ad2[1], 0.25, 1e-15));

        // recursion closed form: 3/2 + 3 x1 + 2 x1^2 + 2 x1^3 / 3
        let at_one = ad_closed_loop(&sys, &g, &[1.0, 0.0]).unwrap();
        assert!(close(at_one[0], 43.0 / 6.0, 1e-14) && close(at_one[1], 0.5, 1e-15));
    }

    #[test]
    fn closed_loop_requires_feedback() {
        let sys = registry("paper_sec5").unwrap().without_feedback();
        let g = sys.input_column(0);
        assert!(matches!(
            ad_closed_loop(&sys, &g, &[0.0, 0.0]),
            Err(Error::MissingFeedback(_))
        ));
    }

    #[test]
    fn jet_sequence_matches_dual_iteration() {
        let sys = registry("paper_sec5").unwrap();
        let g = sys.input_column(0);
        let once = ClosedLoopBracket {
            sys: &sys,
            inner: &g,
        };
        for x in [[0.3, -0.2], [-0.9, 0.5], [1.0, 1.0]] {
            let seq = closed_loop_bracket_sequence(&sys, &x, 2).unwrap();
            let ad1 = ad_closed_loop(&sys, &g, &x).unwrap();
            let ad2 = ad_closed_loop(&sys, &once, &x).unwrap();
            for a in 0..2 {
                assert!(close(seq[1][0][a], ad1[a], 1e-12));
                assert!(close(seq[2][0][a], ad2[a], 1e-12));
            }
        }
    }

    #[test]
    fn standard_bracket_linear() {
        // f = A x, V = b: ad_f b = -A b
        let f = VectorField::parse(2, &["x2", "-2*x1 - 3*x2"]).unwrap();
        let b = VectorField::parse(2, &["0", "1"]).unwrap();
        let ad = ad_standard(&f, &b, &[0.4, -1.2]).unwrap();
        assert_eq!(ad, vec![-1.0, 3.0]);
    }

    #[test]
    fn standard_bracket_with_itself_vanishes() {
        let f = VectorField::parse(2, &["x1*x2 - x1^3", "x1 + x2^2"]).unwrap();
        let ad = ad_standard(&f, &f, &[0.3, -0.7]).unwrap();
        assert!(ad.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn standard_bracket_scalar() {
        let f = VectorField::parse(1, &["-x1"]).unwrap();
        let g = VectorField::parse(1, &["1"]).unwrap();
        assert_eq!(ad_standard(&f, &g, &[0.25]).unwrap(), vec![1.0]);
    }

    #[test]
    fn lie_derivative_rows() {
        let sys = registry("paper_sec5").unwrap();
        let (value, grad) = lie_derivative_scalar(sys.f(), sys.h(), &[0.0, 0.0]).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(grad, vec![-0.5, -1.0]);
        let (_, grad) = lie_derivative_scalar(sys.f(), sys.h(), &[-1.0, 0.0]).unwrap();
        assert!(close(grad[0], 0.5, 1e-15) && close(grad[1], 0.0, 1e-15));
    }

    #[test]
    fn lie_derivative_of_constant() {
        let f = VectorField::parse(2, &["x2", "x1^2"]).unwrap();
        let h = VectorField::parse(2, &["4"]).unwrap();
        assert_eq!(
            lie_derivative_scalar(&f, &h, &[1.0, 2.0]).unwrap(),
            (0.0, vec![0.0, 0.0])
        );
    }

    #[test]
    fn lie_gradients_match_nested_duals() {
        let sys = registry("paper_sec5").unwrap();
        for x in [[0.2, 0.1], [-1.0, 0.3], [0.5, -0.5]] {
            let levels = lie_derivative_gradients(&sys, &x, 1).unwrap();
            let (_, grad) = lie_derivative_scalar(sys.f(), sys.h(), &x).unwrap();
            assert_eq!(levels[0][0], vec![1.0, 0.0]);
            for b in 0..2 {
                assert!(close(levels[1][0][b], grad[b], 1e-13));
            }
        }
    }

    #[test]
    fn matrix_directional() {
        let p = MatrixField::identity(2);
        assert_eq!(
            matrix_field_directional(&p, &[0.3, 0.1], &[1.0, -2.0]).unwrap(),
            DMatrix::zeros(2, 2)
        );
        let m = MatrixField::parse(2, 2, 2, &["x1^2", "0", "0", "x2"]).unwrap();
        let d = matrix_field_directional(&m, &[1.5, -0.5], &[1.0, 0.0]).unwrap();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]));
        let v = [0.3, -0.8];
        let v2 = [0.6, -1.6];
        let d1 = matrix_field_directional(&m, &[1.5, -0.5], &v).unwrap();
        let d2 = matrix_field_directional(&m, &[1.5, -0.5], &v2).unwrap();
        assert!((d2 - d1 * 2.0).norm() < 1e-15);
    }
}

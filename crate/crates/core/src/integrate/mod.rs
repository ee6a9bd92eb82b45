//! Adaptive ODE integration, flow Jacobians and quadrature.

mod improper;
mod ode;
mod quadrature;

use nalgebra::DMatrix;

use crate::calculus::{jacobian, Field};
use crate::error::{Error, Result};

pub use improper::{
    fit_exponential, improper_integral, improper_time_integral, Direction, ImproperOptions,
    ImproperResult,
};
pub use ode::{integrate_backward, integrate_ivp, OdeOptions, Rhs, Solver, Trajectory};
pub use quadrature::{gauss_legendre, gauss_legendre_on, quadrature_finite, QuadratureResult};

/// `Phi(t) = d phi(t, x0) / d x0` on the integration grid.
#[derive(Debug, Clone)]
pub struct FlowJacobian {
    n: usize,
    traj: Trajectory,
}

impl FlowJacobian {
    pub fn times(&self) -> &[f64] {
        self.traj.times()
    }

    pub fn matrices(&self) -> Vec<DMatrix<f64>> {
        self.traj
            .states()
            .iter()
            .map(|s| DMatrix::from_column_slice(self.n, self.n, s))
            .collect()
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.n, &self.traj.eval(t))
    }

    pub fn last(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.n, self.traj.last_state())
    }
}

/// Right-hand side of `(x, Phi)` with `Phi' = J(x) Phi`, `Phi` stored column-major.
pub fn variational_rhs<F: Field>(field: &F) -> impl Fn(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    let n = field.dim_in();
    move |_t, y, out| {
        let x = &y[..n];
        out[..n].copy_from_slice(&field.eval_f64(x)?);
        let j = jacobian(field, x)?;
        let phi = DMatrix::from_column_slice(n, n, &y[n..n + n * n]);
        out[n..n + n * n].copy_from_slice((j * phi).as_slice());
        Ok(())
    }
}

/// Co-integrates the state and the matrix variational equation from `Phi(t0) = I`.
pub fn flow_with_jacobian<F: Field>(
    field: &F,
    x0: &[f64],
    t_span: (f64, f64),
    opts: OdeOptions,
) -> Result<(Trajectory, FlowJacobian)> {
    let n = x0.len();
    if field.dim_in() != n || field.dim_out() != n {
        return Err(Error::Dimension(format!(
            "flow needs a field on R^{n}, got R^{} -> R^{}",
            field.dim_in(),
            field.dim_out()
        )));
    }
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(DMatrix::<f64>::identity(n, n).as_slice());
    let rhs = variational_rhs(field);
    let traj = integrate_ivp(&rhs, &y0, t_span, opts)?;
    Ok((
        traj.project(0..n),
        FlowJacobian {
            n,
            traj: traj.project(n..n + n * n),
        },
    ))
}

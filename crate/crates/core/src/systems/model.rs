use nalgebra::DMatrix;

use crate::calculus::{jacobian, Field, MatrixField, VectorField};
use crate::error::{Error, Result};
use crate::expr::SystemSpec;
use crate::scalar::Scalar;

/// Known closed-form solutions shipped with a system (candidate matrix fields).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Certificates {
    /// Solution of the controllability Lyapunov equation (inverse of `r`).
    pub p: Option<MatrixField>,
    /// Observability Gramian field.
    pub q: Option<MatrixField>,
    /// Solution of the differential Riccati equation.
    pub r: Option<MatrixField>,
}

/// Control-affine system `x' = f(x) + g(x) u`, `y = h(x)`, optionally with a
/// feedback law `u = k(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    name: String,
    n: usize,
    m: usize,
    p: usize,
    f: VectorField,
    g: MatrixField,
    h: VectorField,
    k: Option<VectorField>,
    certificates: Certificates,
}

impl SystemModel {
    pub fn new(
        name: impl Into<String>,
        f: VectorField,
        g: MatrixField,
        h: VectorField,
        k: Option<VectorField>,
    ) -> Result<Self> {
        let n = f.dim_out();
        if f.dim_in() != n {
            return Err(Error::Dimension(format!(
                "f must map R^n to R^n, got R^{} -> R^{n}",
                f.dim_in()
            )));
        }
        if g.rows() != n || g.dim_in() != n {
            return Err(Error::Dimension(format!(
                "g must be an {n}-row field on R^{n}, got {} rows on R^{}",
                g.rows(),
                g.dim_in()
            )));
        }
        if h.dim_in() != n {
            return Err(Error::Dimension(format!("h must be defined on R^{n}")));
        }
        let m = g.cols();
        if let Some(k) = &k {
            if k.dim_in() != n || k.dim_out() != m {
                return Err(Error::Dimension(format!(
                    "k must map R^{n} to R^{m}, got R^{} -> R^{}",
                    k.dim_in(),
                    k.dim_out()
                )));
            }
        }
        Ok(SystemModel {
            name: name.into(),
            n,
            m,
            p: h.dim_out(),
            f,
            g,
            h,
            k,
            certificates: Certificates::default(),
        })
    }

    pub fn from_spec(name: impl Into<String>, spec: &SystemSpec) -> Result<Self> {
        let n = spec.n;
        let f = VectorField::new(n, spec.f.clone())?;
        let g = MatrixField::new(n, n, spec.m, spec.g.clone())?;
        let h = VectorField::new(n, spec.h.clone())?;
        let k = spec.k.clone().map(|k| VectorField::new(n, k)).transpose()?;
        let mut sys = SystemModel::new(name, f, g, h, k)?;
        let field = |key: &str| {
            spec.fields
                .get(key)
                .map(|e| MatrixField::new(n, n, n, e.clone()))
                .transpose()
        };
        sys.certificates = Certificates {
            p: field("P")?,
            q: field("Q")?,
            r: field("R")?,
        };
        Ok(sys)
    }

    pub fn with_certificates(mut self, certificates: Certificates) -> Self {
        self.certificates = certificates;
        self
    }

    pub fn with_feedback(mut self, k: VectorField) -> Result<Self> {
        if k.dim_in() != self.n || k.dim_out() != self.m {
            return Err(Error::Dimension("feedback has wrong dimensions".into()));
        }
        self.k = Some(k);
        Ok(self)
    }

    pub fn without_feedback(mut self) -> Self {
        self.k = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn f(&self) -> &VectorField {
        &self.f
    }

    pub fn g(&self) -> &MatrixField {
        &self.g
    }

    pub fn h(&self) -> &VectorField {
        &self.h
    }

    pub fn k(&self) -> Option<&VectorField> {
        self.k.as_ref()
    }

    pub fn certificates(&self) -> &Certificates {
        &self.certificates
    }

    pub fn feedback_law(&self) -> Result<&VectorField> {
        self.k
            .as_ref()
            .ok_or_else(|| Error::MissingFeedback(self.name.clone()))
    }

    /// Column `j` of `g` as a vector field.
    pub fn input_column(&self, j: usize) -> VectorField {
        let exprs = (0..self.n)
            .map(|a| self.g.exprs()[a * self.m + j].clone())
            .collect();
        VectorField::new(self.n, exprs).expect("column of a validated field")
    }

    /// `f(x) + g(x) u`.
    pub fn controlled<S: Scalar>(&self, x: &[S], u: &[S]) -> Result<Vec<S>> {
        let mut out = self.f.eval(x)?;
        let g = self.g.eval(x)?;
        for (a, slot) in out.iter_mut().enumerate() {
            for (j, uj) in u.iter().enumerate() {
                *slot = slot.clone() + g[a * self.m + j].clone() * uj.clone();
            }
        }
        Ok(out)
    }

    /// `f(x) + g(x) k(x)`.
    pub fn closed_loop<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let u = self.feedback_law()?.eval(x)?;
        self.controlled(x, &u)
    }

    pub fn g_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.g.eval_matrix(x)
    }

    pub fn jac_f(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        jacobian(&self.f, x)
    }

    pub fn jac_h(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        jacobian(&self.h, x)
    }

    pub fn jac_k(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        jacobian(self.feedback_law()?, x)
    }

    /// `df/dx + sum_j dg_j/dx u_j` at a fixed input value.
    pub fn input_jacobian(&self, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
        let field = Controlled { sys: self, u };
        jacobian(&field, x)
    }

    /// Frozen-input Jacobian `d(f + g u)/dx` at `u = k(x)`.
    pub fn frozen_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let u = self.feedback_law()?.eval(x)?;
        self.input_jacobian(x, &u)
    }

    /// Full closed-loop Jacobian `d(f + g k)/dx`, including `dk/dx`.
    pub fn closed_loop_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        jacobian(&ClosedLoop(self), x)
    }
}

struct Controlled<'a> {
    sys: &'a SystemModel,
    u: &'a [f64],
}

impl Field for Controlled<'_> {
    fn dim_in(&self) -> usize {
        self.sys.n
    }
    fn dim_out(&self) -> usize {
        self.sys.n
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let u: Vec<S> = self.u.iter().map(|v| S::from_f64(*v)).collect();
        self.sys.controlled(x, &u)
    }
}

/// Open-loop drift `x -> f(x)`.
pub struct Drift<'a>(pub &'a SystemModel);

impl Field for Drift<'_> {
    fn dim_in(&self) -> usize {
        self.0.n
    }
    fn dim_out(&self) -> usize {
        self.0.n
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.0.f.eval(x)
    }
}

/// Closed-loop vector field `x -> f(x) + g(x) k(x)`.
pub struct ClosedLoop<'a>(pub &'a SystemModel);

impl Field for ClosedLoop<'_> {
    fn dim_in(&self) -> usize {
        self.0.n
    }
    fn dim_out(&self) -> usize {
        self.0.n
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.0.closed_loop(x)
    }
}

/// Time-reversed field `x -> -F(x)`.
pub struct Reversed<F>(pub F);

impl<F: Field> Field for Reversed<F> {
    fn dim_in(&self) -> usize {
        self.0.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.0.dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        Ok(self.0.eval(x)?.into_iter().map(|v| -v).collect())
    }
}

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr};
use crate::scalar::Scalar;

/// A map `R^n -> R^k` that can be evaluated over any [`Scalar`].
pub trait Field: Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>>;

    fn eval_f64(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval(x)
    }
}

impl<F: Field> Field for &F {
    fn dim_in(&self) -> usize {
        (*self).dim_in()
    }
    fn dim_out(&self) -> usize {
        (*self).dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        (*self).eval(x)
    }
}

fn check_arity(exprs: &[Expr], dim_in: usize) -> Result<()> {
    if let Some(e) = exprs.iter().find(|e| e.arity() > dim_in) {
        return Err(Error::Dimension(format!(
            "expression `{e}` references x{} but the field has {dim_in} inputs",
            e.arity()
        )));
    }
    Ok(())
}

/// Expression-backed vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    dim_in: usize,
    exprs: Vec<Expr>,
}

impl VectorField {
    pub fn new(dim_in: usize, exprs: Vec<Expr>) -> Result<Self> {
        check_arity(&exprs, dim_in)?;
        Ok(VectorField { dim_in, exprs })
    }

    pub fn parse(dim_in: usize, texts: &[&str]) -> Result<Self> {
        let exprs = texts
            .iter()
            .map(|t| parse_expression(t).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim_in, exprs)
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    /// True when every component is the literal zero.
    pub fn is_identically_zero(&self) -> bool {
        self.exprs.iter().all(Expr::is_zero)
    }
}

impl Field for VectorField {
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.exprs.len()
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.dim_in {
            return Err(Error::Dimension(format!(
                "field expects {} inputs, got {}",
                self.dim_in,
                x.len()
            )));
        }
        self.exprs
            .iter()
            .map(|e| e.eval(x).map_err(Error::from))
            .collect()
    }
}

/// Expression-backed matrix field, stored row-major. As a [`Field`] its output
/// is the row-major flattening.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    rows: usize,
    cols: usize,
    inner: VectorField,
}

impl MatrixField {
    pub fn new(dim_in: usize, rows: usize, cols: usize, exprs: Vec<Expr>) -> Result<Self> {
        if exprs.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix field {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                exprs.len()
            )));
        }
        Ok(MatrixField {
            rows,
            cols,
            inner: VectorField::new(dim_in, exprs)?,
        })
    }

    pub fn parse(dim_in: usize, rows: usize, cols: usize, texts: &[&str]) -> Result<Self> {
        let inner = VectorField::parse(dim_in, texts)?;
        Self::new(dim_in, rows, cols, inner.exprs)
    }

    pub fn constant(dim_in: usize, m: &DMatrix<f64>) -> Self {
        let exprs = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| {
                let v = m[(i, j)];
                if v < 0.0 {
                    Expr::Neg(Box::new(Expr::Const(-v)))
                } else {
                    Expr::Const(v)
                }
            })
            .collect();
        MatrixField {
            rows: m.nrows(),
            cols: m.ncols(),
            inner: VectorField { dim_in, exprs },
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(n, &DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn exprs(&self) -> &[Expr] {
        self.inner.exprs()
    }

    pub fn eval_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let flat = self.inner.eval(x)?;
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &flat))
    }
}

impl Field for MatrixField {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn dim_out(&self) -> usize {
        self.rows * self.cols
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.inner.eval(x)
    }
}

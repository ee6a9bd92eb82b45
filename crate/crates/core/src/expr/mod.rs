//! Polynomial/rational expressions over positional variables `x1..xn`.
//!
//! Expressions are parsed once and evaluated over any [`Scalar`], so the same
//! AST yields values, exact first derivatives (duals) and higher-order Taylor
//! coefficients (jets).

mod parse;
mod spec;

use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

pub use parse::{parse_expression, ParseError, ParseErrorKind};
pub use spec::{parse_system_spec, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// Expression tree. Variables are stored zero-based (`x1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Pow(Box<Expr>, u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("variable x{index} is not bound (only {bound} values supplied)")]
    UnboundVariable { index: usize, bound: usize },
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn var(index: usize) -> Self {
        Expr::Var(index)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// Number of variables the expression needs, i.e. one past the largest index.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(e) | Expr::Pow(e, _) => e.arity(),
            Expr::Binary { lhs, rhs, .. } => lhs.arity().max(rhs.arity()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn eval<S: Scalar>(&self, vars: &[S]) -> Result<S, EvalError> {
        match self {
            Expr::Const(c) => Ok(S::from_f64(*c)),
            Expr::Var(i) => vars.get(*i).cloned().ok_or(EvalError::UnboundVariable {
                index: i + 1,
                bound: vars.len(),
            }),
            Expr::Neg(e) => Ok(-e.eval(vars)?),
            Expr::Pow(base, exp) => Ok(base.eval(vars)?.powi(*exp)),
            Expr::Binary { op, lhs, rhs } => {
                let a = lhs.eval(vars)?;
                let b = rhs.eval(vars)?;
                Ok(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b.real() == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                })
            }
        }
    }

    fn write_operand(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Prints with the minimal parentheses needed to re-parse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.write_operand(f, matches!(**e, Expr::Binary { .. }))
            }
            Expr::Pow(base, exp) => {
                let bare = matches!(**base, Expr::Var(_))
                    || matches!(**base, Expr::Const(c) if c >= 0.0 && !c.is_sign_negative());
                base.write_operand(f, !bare)?;
                write!(f, "^{exp}")
            }
            Expr::Binary { op, lhs, rhs } => {
                let lhs_parens = matches!(**lhs, Expr::Binary { op: inner, .. } if inner.precedence() < op.precedence());
                let rhs_parens = matches!(**rhs, Expr::Binary { op: inner, .. } if inner.precedence() <= op.precedence());
                lhs.write_operand(f, lhs_parens)?;
                write!(f, " {} ", op.symbol())?;
                rhs.write_operand(f, rhs_parens)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::Dual;

    #[test]
    fn feedback_expression_value() {
        let e = parse_expression("x1 + x1^2/2 + x2").unwrap();
        assert_eq!(e.eval(&[1.0, 2.0]).unwrap(), 3.5);
    }

    #[test]
    fn zero_constant() {
        let e = parse_expression("0").unwrap();
        assert!(e.is_zero());
        assert_eq!(e.eval(&[7.0, -3.0]).unwrap(), 0.0);
    }

    #[test]
    fn cubic_over_three() {
        let e = parse_expression("x1^3/3").unwrap();
        assert_eq!(e.eval(&[3.0]).unwrap(), 9.0);
    }

    #[test]
    fn dual_identity() {
        let e = parse_expression("x1").unwrap();
        let out = e.eval(&[Dual::variable(2.0, 0, 1)]).unwrap();
        assert_eq!(out.re, 2.0);
        assert_eq!(out.derivative(0), 1.0);
    }

    #[test]
    fn dual_product_rule() {
        let e = parse_expression("x1*x2").unwrap();
        let x1 = Dual::constant(1.0);
        let x2 = Dual::variable(1.0, 0, 1);
        let out = e.eval(&[x1, x2]).unwrap();
        assert_eq!(out.re, 1.0);
        assert_eq!(out.derivative(0), 1.0);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = parse_expression("1/(x1 - 1)").unwrap();
        assert_eq!(e.eval(&[1.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn unbound_variable() {
        let e = parse_expression("x3").unwrap();
        assert!(matches!(
            e.eval(&[1.0, 2.0]),
            Err(EvalError::UnboundVariable { index: 3, bound: 2 })
        ));
        assert_eq!(e.arity(), 3);
    }

    #[test]
    fn precedence() {
        let cases = [
            ("1 + 2*3", 7.0),
            ("-2^2", -4.0),
            ("(-2)^2", 4.0),
            ("8/4/2", 1.0),
            ("5 - 3 - 1", 1.0),
            ("2*-3", -6.0),
            ("x1^2^3", 2f64.powi(6)),
        ];
        for (text, want) in cases {
            let got = parse_expression(text).unwrap().eval(&[2.0]).unwrap();
            assert_eq!(got, want, "{text}");
        }
    }

    #[test]
    fn display_reparses() {
        for text in [
            "x1 - (x2 - 3)",
            "-(x1 + x2)^2",
            "x1/(x2*x1)",
            "--x1",
            "0.1*x1^3 - x2/7",
            "(x1 - x2)^0",
        ] {
            let e = parse_expression(text).unwrap();
            let again = parse_expression(&e.to_string()).unwrap();
            assert_eq!(e, again, "{text} -> {e}");
        }
    }
}

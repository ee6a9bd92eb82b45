//! Number types that expressions and vector fields can be evaluated over.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Field-like arithmetic over plain reals, dual numbers, nested duals and jets.
///
/// Only the ring operations plus division are required: every field in this
/// crate is a rational function of the state.
pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;

    /// Real part (the value with every infinitesimal dropped).
    fn real(&self) -> f64;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// Integer power by repeated squaring; exact for dual arithmetic.
    fn powi(&self, exp: u32) -> Self {
        let mut result = Self::one();
        let mut base = self.clone();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                result = result * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        result
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn real(&self) -> f64 {
        *self
    }

    fn powi(&self, exp: u32) -> Self {
        f64::powi(*self, exp as i32)
    }
}

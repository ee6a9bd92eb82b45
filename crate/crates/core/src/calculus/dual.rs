use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Scalar;

/// Forward-mode dual number with any number of tangent directions.
///
/// `eps` may be shorter than the number of directions in use; missing entries
/// are zero, so constants carry no allocation. Nesting (`Dual<Dual<f64>>`)
/// gives exact second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual<T = f64> {
    pub re: T,
    pub eps: Vec<T>,
}

impl<T: Scalar> Dual<T> {
    pub fn constant(re: T) -> Self {
        Dual {
            re,
            eps: Vec::new(),
        }
    }

    /// Value seeded with a unit tangent in direction `index` out of `dirs`.
    pub fn variable(re: T, index: usize, dirs: usize) -> Self {
        let mut eps = vec![T::zero(); dirs];
        eps[index] = T::one();
        Dual { re, eps }
    }

    pub fn with_tangent(re: T, eps: Vec<T>) -> Self {
        Dual { re, eps }
    }

    pub fn derivative(&self, index: usize) -> T {
        self.eps.get(index).cloned().unwrap_or_else(T::zero)
    }

    fn zip(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
        let len = a.len().max(b.len());
        (0..len)
            .map(|i| {
                let x = a.get(i).cloned().unwrap_or_else(T::zero);
                let y = b.get(i).cloned().unwrap_or_else(T::zero);
                f(x, y)
            })
            .collect()
    }

    fn scale(v: &[T], s: &T) -> Vec<T> {
        v.iter().map(|e| e.clone() * s.clone()).collect()
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let eps = Self::zip(&self.eps, &rhs.eps, |a, b| a + b);
        Dual {
            re: self.re + rhs.re,
            eps,
        }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let eps = Self::zip(&self.eps, &rhs.eps, |a, b| a - b);
        Dual {
            re: self.re - rhs.re,
            eps,
        }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let eps = match (self.eps.is_empty(), rhs.eps.is_empty()) {
            (true, true) => Vec::new(),
            (true, false) => Self::scale(&rhs.eps, &self.re),
            (false, true) => Self::scale(&self.eps, &rhs.re),
            (false, false) => Self::zip(&self.eps, &rhs.eps, |da, db| {
                self.re.clone() * db + rhs.re.clone() * da
            }),
        };
        Dual {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let re = self.re.clone() / rhs.re.clone();
        let eps = if rhs.eps.is_empty() {
            self.eps
                .iter()
                .map(|d| d.clone() / rhs.re.clone())
                .collect()
        } else {
            let denom = rhs.re.clone() * rhs.re.clone();
            Self::zip(&self.eps, &rhs.eps, |da, db| {
                (da * rhs.re.clone() - self.re.clone() * db) / denom.clone()
            })
        };
        Dual { re, eps }
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual {
            re: -self.re,
            eps: self.eps.into_iter().map(|e| -e).collect(),
        }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }

    fn real(&self) -> f64 {
        self.re.real()
    }
}

//! Truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] stores every Taylor coefficient of a function up to a total degree.
//! Differentiating a jet is exact and lowers its valid degree by one, which is
//! what iterated brackets and iterated Lie derivatives need at runtime depth.

use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_MONOMIALS: usize = 250_000;

/// Monomial layout shared by all jets of one computation.
#[derive(Debug)]
pub struct JetSpace {
    nvars: usize,
    order: usize,
    degree: Vec<usize>,
    /// `(i, j, k)`: monomial i times monomial j is monomial k.
    products: Vec<(usize, usize, usize)>,
    /// `deriv[v][a] = Some((b, factor))`: d/dx_v of monomial b contributes `factor` to monomial a.
    deriv: Vec<Vec<Option<(usize, f64)>>>,
    unit: Vec<usize>,
}

impl JetSpace {
    pub fn new(nvars: usize, order: usize) -> Result<Arc<Self>> {
        let mut exps: Vec<Vec<u32>> = Vec::new();
        for d in 0..=order {
            let mut current = vec![0u32; nvars];
            push_degree(&mut exps, &mut current, 0, d as u32);
            if exps.len() > MAX_MONOMIALS {
                return Err(Error::Invalid(format!(
                    "Taylor expansion with {nvars} variables to order {order} is too large"
                )));
            }
        }
        let index: HashMap<Vec<u32>, usize> = exps
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, e)| (e, i))
            .collect();
        let degree: Vec<usize> = exps
            .iter()
            .map(|e| e.iter().sum::<u32>() as usize)
            .collect();

        let mut products = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if degree[i] + degree[j] <= order {
                    let sum: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                    products.push((i, j, index[&sum]));
                }
            }
        }

        let deriv = (0..nvars)
            .map(|v| {
                exps.iter()
                    .map(|a| {
                        let mut up = a.clone();
                        up[v] += 1;
                        index.get(&up).map(|&b| (b, up[v] as f64))
                    })
                    .collect()
            })
            .collect();

        let unit = (0..nvars)
            .map(|v| {
                let mut e = vec![0u32; nvars];
                e[v] = 1;
                index.get(&e).copied().unwrap_or(usize::MAX)
            })
            .collect();

        Ok(Arc::new(JetSpace {
            nvars,
            order,
            degree,
            products,
            deriv,
            unit,
        }))
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    /// Jets of the coordinate functions expanded around `x`.
    pub fn variables(self: &Arc<Self>, x: &[f64]) -> Vec<Jet> {
        (0..self.nvars)
            .map(|v| {
                let mut c = vec![0.0; self.len()];
                c[0] = x[v];
                if self.order >= 1 {
                    c[self.unit[v]] = 1.0;
                }
                Jet {
                    space: Some(self.clone()),
                    order: self.order,
                    c,
                }
            })
            .collect()
    }
}

fn push_degree(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, var: usize, left: u32) {
    if var + 1 == current.len() {
        current[var] = left;
        out.push(current.clone());
        current[var] = 0;
        return;
    }
    if current.is_empty() {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for take in (0..=left).rev() {
        current[var] = take;
        push_degree(out, current, var + 1, left - take);
    }
    current[var] = 0;
}

#[derive(Debug, Clone)]
pub struct Jet {
    space: Option<Arc<JetSpace>>,
    /// Coefficients above this total degree are not meaningful and kept at zero.
    order: usize,
    c: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet {
            space: None,
            order: usize::MAX,
            c: vec![v],
        }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn valid_order(&self) -> usize {
        self.order
    }

    /// First partial derivative at the expansion point.
    pub fn gradient_entry(&self, var: usize) -> f64 {
        match &self.space {
            Some(s) if self.order >= 1 => self.c[s.unit[var]],
            _ => 0.0,
        }
    }

    /// Exact partial derivative as a jet of one lower valid order.
    pub fn derivative(&self, var: usize) -> Jet {
        let Some(space) = &self.space else {
            return Jet::constant(0.0);
        };
        let order = self.order.saturating_sub(1).min(space.order);
        let mut c = vec![0.0; space.len()];
        if self.order >= 1 {
            for (a, slot) in c.iter_mut().enumerate() {
                if space.degree[a] > order {
                    continue;
                }
                if let Some((b, factor)) = space.deriv[var][a] {
                    *slot = factor * self.c[b];
                }
            }
        }
        Jet {
            space: Some(space.clone()),
            order,
            c,
        }
    }

    fn space_of(a: &Jet, b: &Jet) -> Option<Arc<JetSpace>> {
        a.space.clone().or_else(|| b.space.clone())
    }

    fn full(&self, space: &Arc<JetSpace>) -> Vec<f64> {
        if self.space.is_some() {
            self.c.clone()
        } else {
            let mut c = vec![0.0; space.len()];
            c[0] = self.c[0];
            c
        }
    }

    fn truncate(space: &JetSpace, order: usize, c: &mut [f64]) {
        for (a, v) in c.iter_mut().enumerate() {
            if space.degree[a] > order {
                *v = 0.0;
            }
        }
    }

    fn combine(self, rhs: Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        match Self::space_of(&self, &rhs) {
            None => Jet::constant(f(self.c[0], rhs.c[0])),
            Some(space) => {
                let order = self.order.min(rhs.order).min(space.order);
                let a = self.full(&space);
                let b = rhs.full(&space);
                let mut c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| f(*x, *y)).collect();
                Self::truncate(&space, order, &mut c);
                Jet {
                    space: Some(space),
                    order,
                    c,
                }
            }
        }
    }

    fn reciprocal(&self) -> Jet {
        let Some(space) = &self.space else {
            return Jet::constant(1.0 / self.c[0]);
        };
        // 1/(b0 + r) = (1/b0) * sum_k (-r/b0)^k, r nilpotent of index order+1
        let b0 = self.c[0];
        let mut ratio = self.clone();
        ratio.c[0] = 0.0;
        for v in ratio.c.iter_mut() {
            *v = -*v / b0;
        }
        let order = self.order.min(space.order);
        let mut sum = Jet::constant(1.0);
        let mut power = Jet::constant(1.0);
        for _ in 0..order {
            power = power * ratio.clone();
            sum = sum + power.clone();
        }
        let mut out = sum * Jet::constant(1.0 / b0);
        out.order = out.order.min(order);
        if out.space.is_none() {
            let mut c = vec![0.0; space.len()];
            c[0] = out.c[0];
            out = Jet {
                space: Some(space.clone()),
                order,
                c,
            };
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        self.combine(rhs, |a, b| a + b)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self.combine(rhs, |a, b| a - b)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let Some(space) = Self::space_of(&self, &rhs) else {
            return Jet::constant(self.c[0] * rhs.c[0]);
        };
        let order = self.order.min(rhs.order).min(space.order);
        let mut c = vec![0.0; space.len()];
        match (&self.space, &rhs.space) {
            (None, _) => {
                for (o, v) in c.iter_mut().zip(&rhs.c) {
                    *o = self.c[0] * v;
                }
            }
            (_, None) => {
                for (o, v) in c.iter_mut().zip(&self.c) {
                    *o = rhs.c[0] * v;
                }
            }
            _ => {
                for &(i, j, k) in &space.products {
                    if space.degree[k] <= order {
                        c[k] += self.c[i] * rhs.c[j];
                    }
                }
            }
        }
        Self::truncate(&space, order, &mut c);
        Jet {
            space: Some(space),
            order,
            c,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        if rhs.space.is_none() {
            let d = rhs.c[0];
            let mut out = self;
            for v in out.c.iter_mut() {
                *v /= d;
            }
            return out;
        }
        self * rhs.reciprocal()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for v in self.c.iter_mut() {
            *v = -*v;
        }
        self
    }
}

impl Scalar for Jet {
    fn from_f64(v: f64) -> Self {
        Jet::constant(v)
    }

    fn real(&self) -> f64 {
        self.c[0]
    }
}

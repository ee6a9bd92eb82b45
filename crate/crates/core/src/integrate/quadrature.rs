use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    /// Final horizon for improper integrals.
    pub truncation_horizon: Option<f64>,
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=order {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss–Legendre order must be positive");
    if order == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(order, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(order, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    (nodes, weights)
}

/// Nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_on(a: f64, b: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(order);
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    (
        nodes.iter().map(|x| mid + half * x).collect(),
        weights.iter().map(|w| half * w).collect(),
    )
}

/// Gauss–Legendre of the given order; the error estimate is the difference to
/// the rule of twice the order.
pub fn quadrature_finite(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    interval: (f64, f64),
    order: usize,
) -> Result<QuadratureResult> {
    if order == 0 {
        return Err(Error::Invalid("quadrature order must be positive".into()));
    }
    let (a, b) = interval;
    let mut rule = |ord: usize| -> Result<f64> {
        let (nodes, weights) = gauss_legendre_on(a, b, ord);
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            acc += w * f(*x)?;
        }
        Ok(acc)
    };
    let value = rule(order)?;
    let refined = rule(2 * order)?;
    Ok(QuadratureResult {
        value,
        abs_error_estimate: (refined - value).abs(),
        truncation_horizon: None,
    })
}

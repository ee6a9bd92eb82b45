//! Differential and incremental controllability/observability energies by
//! simulation plus improper quadrature, path integrals along line segments,
//! and the `s -> 0` quadratic limits.

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{directional, Field};
use crate::error::{Error, Result};
use crate::integrate::{
    gauss_legendre_on, improper_integral, Direction, ImproperOptions, Trajectory,
};
use crate::systems::{
    closed_loop_prolonged, prolong, two_copy_offset, AugmentedField, InputSignal, SystemModel,
    VariationalInput,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyKind {
    DiffObservability,
    IncrObservability,
    DiffControllability,
    IncrControllability,
    PathIntegral,
    QuadraticLimit,
    Custom,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyValue {
    pub value: f64,
    pub error_estimate: f64,
    /// Longest simulated horizon behind the value.
    pub horizon: f64,
    pub kind: EnergyKind,
    /// Stacked state of the simulation in original time (empty for composites).
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl EnergyValue {
    fn zero(kind: EnergyKind) -> Self {
        EnergyValue {
            value: 0.0,
            error_estimate: 0.0,
            horizon: 0.0,
            kind,
            trajectory: None,
        }
    }
}

/// Segment `gamma(s) = x0 + s (x1 - x0)`, `s` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinePath {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
}

impl LinePath {
    pub fn new(x0: &[f64], x1: &[f64]) -> Result<Self> {
        if x0.len() != x1.len() {
            return Err(Error::Dimension("path endpoints differ in dimension".into()));
        }
        Ok(LinePath {
            x0: x0.to_vec(),
            x1: x1.to_vec(),
        })
    }

    /// `x0 + s dx0`, `s` in `[0, 1]`.
    pub fn from_tangent(x0: &[f64], dx0: &[f64]) -> Result<Self> {
        let x1: Vec<f64> = x0.iter().zip(dx0).map(|(a, b)| a + b).collect();
        LinePath::new(x0, &x1)
    }

    pub fn point(&self, s: f64) -> Vec<f64> {
        self.x0
            .iter()
            .zip(&self.x1)
            .map(|(a, b)| a + s * (b - a))
            .collect()
    }

    pub fn tangent(&self) -> Vec<f64> {
        self.x1.iter().zip(&self.x0).map(|(b, a)| b - a).collect()
    }
}

fn check_point(sys: &SystemModel, v: &[f64], what: &str) -> Result<()> {
    if v.len() != sys.n() {
        return Err(Error::Dimension(format!(
            "{what} has {} entries, system has n = {}",
            v.len(),
            sys.n()
        )));
    }
    Ok(())
}

fn half_square(v: &[f64]) -> f64 {
    0.5 * v.iter().map(|a| a * a).sum::<f64>()
}

fn run(
    field: &AugmentedField<'_>,
    y0: &[f64],
    integrand: &(dyn Fn(f64, &[f64]) -> Result<f64> + '_),
    direction: Direction,
    opts: &ImproperOptions,
    kind: EnergyKind,
) -> Result<EnergyValue> {
    let dynamics = |t: f64, y: &[f64], out: &mut [f64]| field.eval(t, y, out);
    let quad = |t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        out[0] = integrand(t, y)?;
        Ok(())
    };
    let r = improper_integral(&dynamics, y0, &quad, 1, direction, opts)?;
    Ok(EnergyValue {
        value: r.value[0],
        error_estimate: r.abs_error_estimate,
        horizon: r.truncation_horizon,
        kind,
        trajectory: Some(r.trajectory),
    })
}

/// `1/2 int_0^inf |dy|^2 dt` along the zero-input prolonged flow.
pub fn diff_observability(
    sys: &SystemModel,
    x0: &[f64],
    dx0: &[f64],
    opts: &ImproperOptions,
) -> Result<EnergyValue> {
    check_point(sys, x0, "x0")?;
    check_point(sys, dx0, "dx0")?;
    let n = sys.n();
    let field = prolong(sys, InputSignal::Zero, VariationalInput::Zero);
    let integrand = |_t: f64, y: &[f64]| -> Result<f64> {
        Ok(half_square(&directional(sys.h(), &y[..n], &y[n..])?.1))
    };
    run(
        &field,
        &[x0, dx0].concat(),
        &integrand,
        Direction::Forward,
        opts,
        EnergyKind::DiffObservability,
    )
}

/// `1/2 int_0^inf |y' - y|^2 dt` for two zero-input trajectories.
pub fn incr_observability(
    sys: &SystemModel,
    x0: &[f64],
    x0p: &[f64],
    opts: &ImproperOptions,
) -> Result<EnergyValue> {
    check_point(sys, x0, "x0")?;
    check_point(sys, x0p, "x0'")?;
    let n = sys.n();
    let field = two_copy_offset(sys, InputSignal::Zero, InputSignal::Zero);
    let e0: Vec<f64> = x0p.iter().zip(x0).map(|(a, b)| a - b).collect();
    let integrand = |_t: f64, y: &[f64]| -> Result<f64> {
        let xp: Vec<f64> = (0..n).map(|i| y[i] + y[n + i]).collect();
        let (a, b) = (sys.h().eval_f64(&y[..n])?, sys.h().eval_f64(&xp)?);
        let d: Vec<f64> = b.iter().zip(&a).map(|(p, q)| p - q).collect();
        Ok(half_square(&d))
    };
    run(
        &field,
        &[x0, &e0].concat(),
        &integrand,
        Direction::Forward,
        opts,
        EnergyKind::IncrObservability,
    )
}

/// `1/2 int_{-inf}^0 |(dk/dx) dx|^2 dt` along the closed-loop prolonged flow
/// ending at `(x0, dx0)`: the controllability energy under `u = k(x)`.
pub fn diff_controllability_fb(
    sys: &SystemModel,
    x0: &[f64],
    dx0: &[f64],
    opts: &ImproperOptions,
) -> Result<EnergyValue> {
    check_point(sys, x0, "x0")?;
    check_point(sys, dx0, "dx0")?;
    let n = sys.n();
    let field = closed_loop_prolonged(sys)?;
    let k = sys.feedback_law()?;
    let integrand = |_t: f64, y: &[f64]| -> Result<f64> {
        Ok(half_square(&directional(k, &y[..n], &y[n..])?.1))
    };
    run(
        &field,
        &[x0, dx0].concat(),
        &integrand,
        Direction::Backward,
        opts,
        EnergyKind::DiffControllability,
    )
}

/// `1/2 int_{-inf}^0 |k(x'(t)) - k(x(t))|^2 dt` for two closed-loop
/// trajectories ending at `x0` and `x0'`.
pub fn incr_controllability_fb(
    sys: &SystemModel,
    x0: &[f64],
    x0p: &[f64],
    opts: &ImproperOptions,
) -> Result<EnergyValue> {
    check_point(sys, x0, "x0")?;
    check_point(sys, x0p, "x0'")?;
    let n = sys.n();
    let k = sys.feedback_law()?;
    let field = two_copy_offset(sys, InputSignal::Feedback, InputSignal::Feedback);
    let e0: Vec<f64> = x0p.iter().zip(x0).map(|(a, b)| a - b).collect();
    let integrand = |_t: f64, y: &[f64]| -> Result<f64> {
        let xp: Vec<f64> = (0..n).map(|i| y[i] + y[n + i]).collect();
        let (a, b) = (k.eval_f64(&y[..n])?, k.eval_f64(&xp)?);
        let d: Vec<f64> = b.iter().zip(&a).map(|(p, q)| p - q).collect();
        Ok(half_square(&d))
    };
    run(
        &field,
        &[x0, &e0].concat(),
        &integrand,
        Direction::Backward,
        opts,
        EnergyKind::IncrControllability,
    )
}

/// Energy functional of a point and a tangent.
pub type PointEnergy<'a> = dyn Fn(&[f64], &[f64]) -> Result<EnergyValue> + Sync + 'a;

pub const DEFAULT_GL_ORDER: usize = 8;

/// `int_0^1 E(gamma(s), gamma'(s)) ds` by Gauss–Legendre. Nodes are evaluated
/// in parallel; the result is the order-`2 gl_order` rule.
pub fn path_energy_integral(
    energy: &PointEnergy<'_>,
    path: &LinePath,
    gl_order: usize,
) -> Result<EnergyValue> {
    if gl_order == 0 {
        return Err(Error::Invalid("quadrature order must be positive".into()));
    }
    let tangent = path.tangent();
    if tangent.iter().all(|v| *v == 0.0) {
        return Ok(EnergyValue::zero(EnergyKind::PathIntegral));
    }
    let rule = |order: usize| -> Result<(f64, f64, f64)> {
        let (nodes, weights) = gauss_legendre_on(0.0, 1.0, order);
        let values: Vec<EnergyValue> = nodes
            .par_iter()
            .map(|s| energy(&path.point(*s), &tangent))
            .collect::<Result<_>>()?;
        let value = values.iter().zip(&weights).map(|(e, w)| w * e.value).sum();
        let err = values
            .iter()
            .zip(&weights)
            .map(|(e, w)| w * e.error_estimate)
            .sum();
        let horizon = values.iter().map(|e| e.horizon).fold(0.0, f64::max);
        Ok((value, err, horizon))
    };
    let (coarse, _, _) = rule(gl_order)?;
    let (fine, inner_err, horizon) = rule(2 * gl_order)?;
    Ok(EnergyValue {
        value: fine,
        error_estimate: (fine - coarse).abs() + inner_err,
        horizon,
        kind: EnergyKind::PathIntegral,
        trajectory: None,
    })
}

pub const DEFAULT_LADDER: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

#[derive(Debug, Clone, Serialize)]
pub struct LadderEntry {
    pub s: f64,
    pub energy: f64,
    pub ratio: f64,
    pub ratio_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadraticLimit {
    pub limit: f64,
    /// Spread of the last two extrapolants plus the propagated ladder error.
    pub error_estimate: f64,
    pub spread: f64,
    pub table: Vec<LadderEntry>,
    /// Quadratic extrapolants to `s = 0` from consecutive triples of the ladder.
    pub extrapolants: Vec<f64>,
    pub horizon: f64,
}

/// Value at 0 of the quadratic through three points, and the sum of the
/// absolute Lagrange weights (error amplification).
fn extrapolate_to_zero(pts: &[(f64, f64)]) -> (f64, f64) {
    let mut value = 0.0;
    let mut amplification = 0.0;
    for (i, (si, ri)) in pts.iter().enumerate() {
        let mut w = 1.0;
        for (j, (sj, _)) in pts.iter().enumerate() {
            if i != j {
                w *= (0.0 - sj) / (si - sj);
            }
        }
        value += w * ri;
        amplification += w.abs();
    }
    (value, amplification)
}

/// Evaluates `E(s) / s^2` on a decreasing ladder of `s` and extrapolates to
/// `s = 0`. `energy_at(s, opts)` receives improper-integral options already
/// scaled by `s^2`.
pub fn quadratic_limit(
    energy_at: &(dyn Fn(f64, &ImproperOptions) -> Result<EnergyValue> + Sync + '_),
    ladder: &[f64],
    opts: &ImproperOptions,
    tol: f64,
) -> Result<QuadraticLimit> {
    if ladder.len() < 3 {
        return Err(Error::Invalid(
            "quadratic limit needs at least three ladder points".into(),
        ));
    }
    if ladder.iter().any(|s| *s <= 0.0) {
        return Err(Error::Invalid("ladder entries must be positive".into()));
    }
    let table: Vec<(LadderEntry, f64)> = ladder
        .par_iter()
        .map(|&s| {
            let s2 = s * s;
            let mut inner = *opts;
            inner.tol = opts.tol * s2;
            inner.ode.atol = opts.ode.atol * s2;
            let e = energy_at(s, &inner)?;
            Ok((
                LadderEntry {
                    s,
                    energy: e.value,
                    ratio: e.value / s2,
                    ratio_error: e.error_estimate / s2,
                },
                e.horizon,
            ))
        })
        .collect::<Result<_>>()?;
    let horizon = table.iter().map(|t| t.1).fold(0.0, f64::max);
    let table: Vec<LadderEntry> = table.into_iter().map(|t| t.0).collect();

    let mut extrapolants = Vec::new();
    let mut propagated = 0.0;
    for w in table.windows(3) {
        let pts: Vec<(f64, f64)> = w.iter().map(|e| (e.s, e.ratio)).collect();
        let (value, amp) = extrapolate_to_zero(&pts);
        extrapolants.push(value);
        propagated = amp * w.iter().map(|e| e.ratio_error).fold(0.0, f64::max);
    }
    let limit = *extrapolants.last().expect("at least one triple");
    let spread = if extrapolants.len() >= 2 {
        (extrapolants[extrapolants.len() - 1] - extrapolants[extrapolants.len() - 2]).abs()
    } else {
        0.0
    };
    if spread > tol * limit.abs().max(1.0) {
        return Err(Error::NonConvergent { spread, tol });
    }
    Ok(QuadraticLimit {
        limit,
        error_estimate: spread + propagated,
        spread,
        table,
        extrapolants,
        horizon,
    })
}

/// `lim_{s->0} E_iO(x0 + s dx0, x0) / s^2`.
pub fn incr_observability_limit(
    sys: &SystemModel,
    x0: &[f64],
    dx0: &[f64],
    ladder: &[f64],
    opts: &ImproperOptions,
    tol: f64,
) -> Result<QuadraticLimit> {
    check_point(sys, dx0, "dx0")?;
    let energy = |s: f64, inner: &ImproperOptions| {
        let xs: Vec<f64> = x0.iter().zip(dx0).map(|(a, b)| a + s * b).collect();
        incr_observability(sys, &xs, x0, inner)
    };
    quadratic_limit(&energy, ladder, opts, tol)
}

/// `lim_{s->0} E_iC(x0, x0 + s dx0) / s^2` under `u = k(x)`.
pub fn incr_controllability_limit(
    sys: &SystemModel,
    x0: &[f64],
    dx0: &[f64],
    ladder: &[f64],
    opts: &ImproperOptions,
    tol: f64,
) -> Result<QuadraticLimit> {
    check_point(sys, dx0, "dx0")?;
    let energy = |s: f64, inner: &ImproperOptions| {
        let xs: Vec<f64> = x0.iter().zip(dx0).map(|(a, b)| a + s * b).collect();
        incr_controllability_fb(sys, x0, &xs, inner)
    };
    quadratic_limit(&energy, ladder, opts, tol)
}

//! Integrals over `[0, inf)` or `(-inf, 0]` of functionals of a trajectory,
//! truncated by horizon doubling with an exponential tail estimate.

use serde::{Deserialize, Serialize};

use super::ode::{OdeOptions, Rhs, Solver, Trajectory};
use super::quadrature::QuadratureResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImproperOptions {
    /// Accepted size of the estimated tail beyond the final horizon.
    pub tol: f64,
    pub initial_horizon: f64,
    pub max_doublings: usize,
    pub ode: OdeOptions,
}

impl Default for ImproperOptions {
    fn default() -> Self {
        ImproperOptions {
            tol: 1e-8,
            initial_horizon: 20.0,
            max_doublings: 6,
            ode: OdeOptions::default(),
        }
    }
}

impl ImproperOptions {
    /// Options for an absolute accuracy target `tol`: the ODE tolerances follow
    /// (`rtol = tol / 10`, `atol = rtol / 1000`, clamped to `[1e-14, 1e-6]`) so
    /// that tightening `tol` also tightens the trajectory error.
    pub fn with_tol(tol: f64) -> Self {
        let rtol = (tol / 10.0).clamp(1e-14, 1e-6);
        ImproperOptions {
            tol,
            ode: OdeOptions {
                rtol,
                atol: rtol * 1e-3,
                ..OdeOptions::default()
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImproperResult {
    pub value: Vec<f64>,
    pub abs_error_estimate: f64,
    pub tail_estimate: f64,
    /// Length of the integrated interval.
    pub truncation_horizon: f64,
    /// State part of the trajectory, in original time.
    pub trajectory: Trajectory,
}

/// Least-squares fit `log v(t) ~ log c - rate * t` over the upper envelope of
/// `values` (running maximum from the right), ignoring non-positive samples.
///
/// Returns `None` when fewer than three samples are positive.
pub fn fit_exponential(times: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    let mut envelope = values.to_vec();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&envelope)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let len = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((ml - slope * mt, -slope))
}

const TAIL_SAMPLES: usize = 41;

/// Tail beyond `horizon` of an integrand whose norm is sampled on
/// `[horizon/2, horizon]`.
fn tail_estimate(times: &[f64], norms: &[f64], horizon: f64) -> f64 {
    if norms.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    match fit_exponential(times, norms) {
        Some((log_c, rate)) if rate > 0.0 => (log_c - rate * horizon).exp() / rate,
        Some(_) => f64::INFINITY,
        // too few positive samples to fit: bound by the largest sample times the window
        None => norms.iter().cloned().fold(0.0, f64::max) * horizon / 2.0,
    }
}

/// Integrates `dynamics` from `x0` in `direction` together with
/// `int integrand(t, x(t)) dt` (componentwise, `q` components), doubling the
/// horizon until the fitted tail of the integrand norm drops below `opts.tol`.
///
/// Both callbacks take original time `t` (negative for backward runs).
pub fn improper_integral(
    dynamics: &Rhs<'_>,
    x0: &[f64],
    integrand: &(dyn Fn(f64, &[f64], &mut [f64]) -> Result<()> + '_),
    q: usize,
    direction: Direction,
    opts: &ImproperOptions,
) -> Result<ImproperResult> {
    let n = x0.len();
    let s = direction.sign();
    let rhs = |tau: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let t = s * tau;
        let (x, _) = y.split_at(n);
        let (dx, dq) = out.split_at_mut(n);
        dynamics(t, x, dx)?;
        if s < 0.0 {
            for v in dx.iter_mut() {
                *v = -*v;
            }
        }
        integrand(t, x, dq)
    };
    let mut y0 = x0.to_vec();
    y0.resize(n + q, 0.0);
    let mut solver = Solver::new(&rhs, 0.0, &y0, opts.ode).map_err(|e| relabel(e, s))?;

    let mut horizon = opts.initial_horizon;
    let mut buf = vec![0.0; q];
    for doubling in 0..=opts.max_doublings {
        solver.advance_to(horizon).map_err(|e| relabel(e, s))?;
        let traj = solver.trajectory();
        let mut times = Vec::with_capacity(TAIL_SAMPLES);
        let mut norms = Vec::with_capacity(TAIL_SAMPLES);
        for j in 0..TAIL_SAMPLES {
            let tau = horizon * (0.5 + 0.5 * j as f64 / (TAIL_SAMPLES - 1) as f64);
            let y = traj.eval(tau);
            integrand(s * tau, &y[..n], &mut buf)?;
            times.push(tau);
            norms.push(buf.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        let tail = tail_estimate(&times, &norms, horizon);
        if tail <= opts.tol {
            let value = solver.state()[n..].to_vec();
            let norm = value.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ode_err = 10.0 * (opts.ode.rtol * norm + opts.ode.atol);
            let mut states = traj.project(0..n);
            if s < 0.0 {
                states = states.time_reversed();
            }
            return Ok(ImproperResult {
                value,
                abs_error_estimate: tail + ode_err,
                tail_estimate: tail,
                truncation_horizon: horizon,
                trajectory: states,
            });
        }
        if doubling == opts.max_doublings {
            return Err(Error::Divergence { horizon, tail });
        }
        horizon *= 2.0;
    }
    unreachable!("loop returns on its last iteration")
}

fn relabel(e: Error, sign: f64) -> Error {
    match e {
        Error::BlowUp { time, limit } => Error::BlowUp {
            time: sign * time,
            limit,
        },
        Error::StepUnderflow { time, step } => Error::StepUnderflow {
            time: sign * time,
            step,
        },
        other => other,
    }
}

/// `int_0^inf v(t) dt` (forward) or `int_{-inf}^0 v(t) dt` (backward) of a
/// scalar function of time.
pub fn improper_time_integral(
    integrand: &(dyn Fn(f64) -> Result<f64> + '_),
    direction: Direction,
    opts: &ImproperOptions,
) -> Result<QuadratureResult> {
    let none = |_t: f64, _x: &[f64], _out: &mut [f64]| Ok(());
    let f = |t: f64, _x: &[f64], out: &mut [f64]| -> Result<()> {
        out[0] = integrand(t)?;
        Ok(())
    };
    let r = improper_integral(&none, &[], &f, 1, direction, opts)?;
    Ok(QuadratureResult {
        value: r.value[0],
        abs_error_estimate: r.abs_error_estimate,
        truncation_horizon: Some(r.truncation_horizon),
    })
}

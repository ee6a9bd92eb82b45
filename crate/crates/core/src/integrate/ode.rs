//! Dormand–Prince 5(4) with cubic Hermite dense output.

use serde::Serialize;

use crate::error::{Error, Result};

/// Right-hand side `dy/dt = F(t, y)` written into the output slice.
pub type Rhs<'a> = dyn Fn(f64, &[f64], &mut [f64]) -> Result<()> + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// A state norm above this is reported as finite-time escape.
    pub blowup_norm: f64,
    pub h_max: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 2_000_000,
            blowup_norm: 1e12,
            h_max: None,
        }
    }
}

/// Accepted grid points with derivatives; dense evaluation by cubic Hermite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(dim: usize) -> Self {
        Trajectory {
            dim,
            times: Vec::new(),
            states: Vec::new(),
            derivs: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, t: f64, y: &[f64], dy: &[f64]) {
        self.times.push(t);
        self.states.push(y.to_vec());
        self.derivs.push(dy.to_vec());
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn derivs(&self) -> &[Vec<f64>] {
        &self.derivs
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("non-empty trajectory")
    }

    /// State at an arbitrary time inside the span. Times outside are clamped.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let th = (t - t0) / h;
        let (y0, y1) = (&self.states[i], &self.states[i + 1]);
        let (f0, f1) = (&self.derivs[i], &self.derivs[i + 1]);
        let h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th);
        let h10 = th * (1.0 - th) * (1.0 - th);
        let h01 = th * th * (3.0 - 2.0 * th);
        let h11 = th * th * (th - 1.0);
        (0..self.dim)
            .map(|k| h00 * y0[k] + h10 * h * f0[k] + h01 * y1[k] + h11 * h * f1[k])
            .collect()
    }

    /// Keeps only components `range` of each state.
    pub fn project(&self, range: std::ops::Range<usize>) -> Trajectory {
        Trajectory {
            dim: range.len(),
            times: self.times.clone(),
            states: self
                .states
                .iter()
                .map(|s| s[range.clone()].to_vec())
                .collect(),
            derivs: self
                .derivs
                .iter()
                .map(|s| s[range.clone()].to_vec())
                .collect(),
        }
    }

    /// Relabels a trajectory integrated in `tau = -t` back to original time `t`.
    pub fn time_reversed(&self) -> Trajectory {
        Trajectory {
            dim: self.dim,
            times: self.times.iter().rev().map(|t| -t).collect(),
            states: self.states.iter().rev().cloned().collect(),
            derivs: self
                .derivs
                .iter()
                .rev()
                .map(|d| d.iter().map(|v| -v).collect())
                .collect(),
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Incremental adaptive integrator; can be advanced repeatedly.
pub struct Solver<'a> {
    rhs: &'a Rhs<'a>,
    opts: OdeOptions,
    t: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
    h: f64,
    steps: usize,
    traj: Trajectory,
    k: [Vec<f64>; 7],
    scratch: Vec<f64>,
}

fn rms_scaled(v: &[f64], y: &[f64], atol: f64, rtol: f64) -> f64 {
    let sum: f64 = v
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let s = a / (atol + rtol * b.abs());
            s * s
        })
        .sum();
    (sum / v.len().max(1) as f64).sqrt()
}

impl<'a> Solver<'a> {
    pub fn new(rhs: &'a Rhs<'a>, t0: f64, y0: &[f64], opts: OdeOptions) -> Result<Self> {
        let dim = y0.len();
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("initial state is not finite".into()));
        }
        let mut dy = vec![0.0; dim];
        rhs(t0, y0, &mut dy)?;
        let mut traj = Trajectory::new(dim);
        traj.push(t0, y0, &dy);
        let mut solver = Solver {
            rhs,
            opts,
            t: t0,
            y: y0.to_vec(),
            dy,
            h: 0.0,
            steps: 0,
            traj,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            scratch: vec![0.0; dim],
        };
        solver.h = solver.initial_step()?;
        Ok(solver)
    }

    fn initial_step(&mut self) -> Result<f64> {
        let (atol, rtol) = (self.opts.atol, self.opts.rtol);
        if self.y.is_empty() {
            return Ok(1.0);
        }
        let d0 = rms_scaled(&self.y, &self.y, atol, rtol);
        let d1 = rms_scaled(&self.dy, &self.y, atol, rtol);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let y1: Vec<f64> = self
            .y
            .iter()
            .zip(&self.dy)
            .map(|(y, f)| y + h0 * f)
            .collect();
        let mut f1 = vec![0.0; self.y.len()];
        (self.rhs)(self.t + h0, &y1, &mut f1)?;
        let diff: Vec<f64> = f1.iter().zip(&self.dy).map(|(a, b)| a - b).collect();
        let d2 = rms_scaled(&diff, &self.y, atol, rtol) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1))
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.traj
    }

    /// Integrates from the current time up to exactly `tf`.
    pub fn advance_to(&mut self, tf: f64) -> Result<()> {
        let dim = self.y.len();
        if tf <= self.t {
            return Ok(());
        }
        if dim == 0 {
            self.t = tf;
            self.traj.push(tf, &[], &[]);
            return Ok(());
        }
        let (atol, rtol) = (self.opts.atol, self.opts.rtol);
        let mut y_new = vec![0.0; dim];
        let mut err = vec![0.0; dim];
        let mut rejected = false;
        while self.t < tf {
            if self.steps >= self.opts.max_steps {
                return Err(Error::TooManySteps(self.opts.max_steps));
            }
            let mut h = self.h;
            if let Some(hmax) = self.opts.h_max {
                h = h.min(hmax);
            }
            let last = self.t + h >= tf;
            if last {
                h = tf - self.t;
            }
            let min_h = 16.0 * f64::EPSILON * self.t.abs().max(1.0);
            if h < min_h && !last {
                return Err(Error::StepUnderflow {
                    time: self.t,
                    step: h,
                });
            }

            self.k[0].copy_from_slice(&self.dy);
            let mut finite = true;
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = self.y[i];
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        acc += h * a * self.k[j][i];
                    }
                    self.scratch[i] = acc;
                }
                let (head, tail) = self.k.split_at_mut(s);
                let _ = head;
                (self.rhs)(self.t + C[s] * h, &self.scratch, &mut tail[0])?;
                if tail[0].iter().any(|v| !v.is_finite()) {
                    finite = false;
                    break;
                }
            }
            self.steps += 1;
            if !finite {
                self.h = h * 0.25;
                rejected = true;
                continue;
            }
            // stage 7 argument is the 5th-order solution (FSAL)
            y_new.copy_from_slice(&self.scratch);
            for i in 0..dim {
                err[i] = h * E.iter().zip(&self.k).map(|(e, k)| e * k[i]).sum::<f64>();
            }
            let scale_sum: f64 = (0..dim)
                .map(|i| {
                    let sc = atol + rtol * self.y[i].abs().max(y_new[i].abs());
                    (err[i] / sc).powi(2)
                })
                .sum();
            let e = (scale_sum / dim as f64).sqrt();
            if !e.is_finite() {
                self.h = h * 0.25;
                rejected = true;
                continue;
            }
            if e <= 1.0 {
                self.t = if last { tf } else { self.t + h };
                self.y.copy_from_slice(&y_new);
                self.dy.copy_from_slice(&self.k[6]);
                self.traj.push(self.t, &self.y, &self.dy);
                let norm = self.y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > self.opts.blowup_norm {
                    return Err(Error::BlowUp {
                        time: self.t,
                        limit: self.opts.blowup_norm,
                    });
                }
                let mut fac = 0.9 * e.max(1e-10).powf(-0.2);
                fac = fac.clamp(0.2, 5.0);
                if rejected {
                    fac = fac.min(1.0);
                }
                rejected = false;
                if !last {
                    self.h = h * fac;
                }
            } else {
                let fac = (0.9 * e.powf(-0.2)).max(0.2);
                self.h = h * fac;
                rejected = true;
            }
        }
        Ok(())
    }
}

pub fn integrate_ivp(
    rhs: &Rhs<'_>,
    x0: &[f64],
    t_span: (f64, f64),
    opts: OdeOptions,
) -> Result<Trajectory> {
    let (t0, tf) = t_span;
    if tf <= t0 {
        return Err(Error::Invalid(format!("empty time span [{t0}, {tf}]")));
    }
    let mut solver = Solver::new(rhs, t0, x0, opts)?;
    solver.advance_to(tf)?;
    Ok(solver.into_trajectory())
}

/// Solution on `[-duration, 0]` ending at `x0`, in original (negative) time.
pub fn integrate_backward(
    rhs: &Rhs<'_>,
    x0: &[f64],
    duration: f64,
    opts: OdeOptions,
) -> Result<Trajectory> {
    let reversed = |tau: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        rhs(-tau, y, out)?;
        for v in out.iter_mut() {
            *v = -*v;
        }
        Ok(())
    };
    let traj = integrate_ivp(&reversed, x0, (0.0, duration), opts).map_err(|e| match e {
        Error::BlowUp { time, limit } => Error::BlowUp { time: -time, limit },
        Error::StepUnderflow { time, step } => Error::StepUnderflow { time: -time, step },
        other => other,
    })?;
    Ok(traj.time_reversed())
}

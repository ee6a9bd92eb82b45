//! Derived systems on stacked states: prolongation, closed-loop prolongation,
//! two copies, and the two dual variational systems.

use std::ops::Range;
use std::sync::Arc;

use super::model::{ClosedLoop, Drift, SystemModel};
use crate::calculus::{directional, Dual, Field};
use crate::error::{Error, Result};
use crate::integrate::{integrate_ivp, OdeOptions, Trajectory};

type SignalFn = dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync;
type VariationFn = dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync;
type RhsFn<'a> = dyn Fn(f64, &[f64], &mut [f64]) -> Result<()> + Send + Sync + 'a;
type ObsFn<'a> = dyn Fn(f64, &[f64]) -> Result<Vec<f64>> + Send + Sync + 'a;

/// Input `u(t)` as a function of time and the state of the copy it drives.
#[derive(Clone, Default)]
pub enum InputSignal {
    #[default]
    Zero,
    /// `u = k(x)` along the copy's own trajectory.
    Feedback,
    Custom(Arc<SignalFn>),
}

/// Input variation `du(t)` given `(t, x, dx)`.
#[derive(Clone, Default)]
pub enum VariationalInput {
    #[default]
    Zero,
    /// `du = (dk/dx) dx`.
    FeedbackDifferential,
    Custom(Arc<VariationFn>),
}

impl InputSignal {
    fn eval(&self, sys: &SystemModel, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            InputSignal::Zero => Ok(vec![0.0; sys.m()]),
            InputSignal::Feedback => sys.feedback_law()?.eval(x),
            InputSignal::Custom(f) => {
                let u = f(t, x);
                check_len(&u, sys.m(), "input signal")?;
                Ok(u)
            }
        }
    }
}

impl VariationalInput {
    fn eval(&self, sys: &SystemModel, t: f64, x: &[f64], dx: &[f64]) -> Result<Vec<f64>> {
        match self {
            VariationalInput::Zero => Ok(vec![0.0; sys.m()]),
            VariationalInput::FeedbackDifferential => {
                Ok(directional(sys.feedback_law()?, x, dx)?.1)
            }
            VariationalInput::Custom(f) => {
                let du = f(t, x, dx);
                check_len(&du, sys.m(), "input variation")?;
                Ok(du)
            }
        }
    }
}

fn check_len(v: &[f64], want: usize, what: &str) -> Result<()> {
    if v.len() != want {
        return Err(Error::Dimension(format!(
            "{what} returned {} entries, expected {want}",
            v.len()
        )));
    }
    Ok(())
}

/// Named slice of a stacked state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub name: &'static str,
    pub range: Range<usize>,
}

struct Observation<'a> {
    name: &'static str,
    map: Box<ObsFn<'a>>,
}

/// Vector field on a stacked state with named slices and observation maps.
pub struct AugmentedField<'a> {
    dim: usize,
    layout: Vec<Slot>,
    rhs: Box<RhsFn<'a>>,
    observations: Vec<Observation<'a>>,
}

impl<'a> AugmentedField<'a> {
    fn new(layout: &[(&'static str, usize)], rhs: Box<RhsFn<'a>>) -> Self {
        let mut start = 0;
        let layout = layout
            .iter()
            .map(|&(name, len)| {
                let slot = Slot {
                    name,
                    range: start..start + len,
                };
                start += len;
                slot
            })
            .collect();
        AugmentedField {
            dim: start,
            layout,
            rhs,
            observations: Vec::new(),
        }
    }

    fn observe_with(mut self, name: &'static str, map: Box<ObsFn<'a>>) -> Self {
        self.observations.push(Observation { name, map });
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> &[Slot] {
        &self.layout
    }

    pub fn slot(&self, name: &str) -> Option<Range<usize>> {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.range.clone())
    }

    pub fn observation_names(&self) -> Vec<&'static str> {
        self.observations.iter().map(|o| o.name).collect()
    }

    pub fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        (self.rhs)(t, y, out)
    }

    pub fn observe(&self, name: &str, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let obs = self
            .observations
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| Error::Invalid(format!("no observation named `{name}`")))?;
        (obs.map)(t, y)
    }

    /// Stacks the given blocks in layout order.
    pub fn stack(&self, blocks: &[&[f64]]) -> Result<Vec<f64>> {
        if blocks.len() != self.layout.len()
            || blocks
                .iter()
                .zip(&self.layout)
                .any(|(b, s)| b.len() != s.range.len())
        {
            return Err(Error::Dimension(
                "initial blocks do not match the layout".into(),
            ));
        }
        Ok(blocks.concat())
    }

    pub fn simulate(&self, y0: &[f64], t_span: (f64, f64), opts: OdeOptions) -> Result<Trajectory> {
        if y0.len() != self.dim {
            return Err(Error::Dimension(format!(
                "initial state has {} entries, field has dimension {}",
                y0.len(),
                self.dim
            )));
        }
        integrate_ivp(&|t, y, out| self.eval(t, y, out), y0, t_span, opts)
    }
}

fn add_gu(out: &mut [f64], g: &[f64], u: &[f64], m: usize) {
    for (a, slot) in out.iter_mut().enumerate() {
        for (j, uj) in u.iter().enumerate() {
            *slot += g[a * m + j] * uj;
        }
    }
}

/// `g(x)^T v`.
fn gt_times(sys: &SystemModel, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let g = sys.g().eval_f64(x)?;
    let m = sys.m();
    Ok((0..m)
        .map(|j| (0..sys.n()).map(|a| g[a * m + j] * v[a]).sum())
        .collect())
}

/// `(x, dx)` with `x' = f + g u`, `dx' = (df/dx + sum_j dg_j/dx u_j) dx + g du`.
/// Observations: `y`, `dy`.
pub fn prolong<'a>(
    sys: &'a SystemModel,
    u: InputSignal,
    du: VariationalInput,
) -> AugmentedField<'a> {
    let n = sys.n();
    let m = sys.m();
    let rhs = move |t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let (x, dx) = y.split_at(n);
        let uv = u.eval(sys, t, x)?;
        let duv = du.eval(sys, t, x, dx)?;
        let seeded: Vec<Dual> = x
            .iter()
            .zip(dx)
            .map(|(a, b)| Dual::with_tangent(*a, vec![*b]))
            .collect();
        let lifted: Vec<Dual> = uv.iter().map(|v| Dual::constant(*v)).collect();
        let fx = sys.controlled(&seeded, &lifted)?;
        for (i, d) in fx.iter().enumerate() {
            out[i] = d.re;
            out[n + i] = d.derivative(0);
        }
        let g = sys.g().eval_f64(x)?;
        add_gu(&mut out[n..], &g, &duv, m);
        Ok(())
    };
    AugmentedField::new(&[("x", n), ("dx", n)], Box::new(rhs))
        .observe_with("y", Box::new(move |_, y| sys.h().eval_f64(&y[..n])))
        .observe_with(
            "dy",
            Box::new(move |_, y| Ok(directional(sys.h(), &y[..n], &y[n..2 * n])?.1)),
        )
}

/// `(x, dx)` with `x' = f + g k`, `dx' = d(f + g k)/dx dx` (full Jacobian).
/// Observations: `y`, `dy`, `kdx = (dk/dx) dx`.
pub fn closed_loop_prolonged(sys: &SystemModel) -> Result<AugmentedField<'_>> {
    sys.feedback_law()?;
    let n = sys.n();
    let rhs = move |_t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let (value, tangent) = directional(&ClosedLoop(sys), &y[..n], &y[n..])?;
        out[..n].copy_from_slice(&value);
        out[n..].copy_from_slice(&tangent);
        Ok(())
    };
    Ok(AugmentedField::new(&[("x", n), ("dx", n)], Box::new(rhs))
        .observe_with("y", Box::new(move |_, y| sys.h().eval_f64(&y[..n])))
        .observe_with(
            "dy",
            Box::new(move |_, y| Ok(directional(sys.h(), &y[..n], &y[n..2 * n])?.1)),
        )
        .observe_with(
            "kdx",
            Box::new(move |_, y| Ok(directional(sys.feedback_law()?, &y[..n], &y[n..2 * n])?.1)),
        ))
}

/// `(x, xp)`: two copies driven by `u` and `up`. Observations: `y`, `yp`.
pub fn two_copy<'a>(sys: &'a SystemModel, u: InputSignal, up: InputSignal) -> AugmentedField<'a> {
    let n = sys.n();
    let rhs = move |t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let (x, xp) = y.split_at(n);
        let a = sys.controlled(x, &u.eval(sys, t, x)?)?;
        let b = sys.controlled(xp, &up.eval(sys, t, xp)?)?;
        out[..n].copy_from_slice(&a);
        out[n..].copy_from_slice(&b);
        Ok(())
    };
    AugmentedField::new(&[("x", n), ("xp", n)], Box::new(rhs))
        .observe_with("y", Box::new(move |_, y| sys.h().eval_f64(&y[..n])))
        .observe_with("yp", Box::new(move |_, y| sys.h().eval_f64(&y[n..2 * n])))
}

/// `(x, e)` with `e = xp - x`: the two copies in offset coordinates,
/// `e' = F_up(x + e) - F_u(x)`. Observations: `y`, `yp`.
pub fn two_copy_offset<'a>(
    sys: &'a SystemModel,
    u: InputSignal,
    up: InputSignal,
) -> AugmentedField<'a> {
    let n = sys.n();
    let rhs = move |t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let (x, e) = y.split_at(n);
        let xp: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + b).collect();
        let a = sys.controlled(x, &u.eval(sys, t, x)?)?;
        let b = sys.controlled(&xp, &up.eval(sys, t, &xp)?)?;
        for i in 0..n {
            out[i] = a[i];
            out[n + i] = b[i] - a[i];
        }
        Ok(())
    };
    AugmentedField::new(&[("x", n), ("e", n)], Box::new(rhs))
        .observe_with("y", Box::new(move |_, y| sys.h().eval_f64(&y[..n])))
        .observe_with(
            "yp",
            Box::new(move |_, y| {
                let xp: Vec<f64> = (0..n).map(|i| y[i] + y[n + i]).collect();
                sys.h().eval_f64(&xp)
            }),
        )
}

/// `(x, dp)` with `x' = -(f + g k)`, `dp' = (d(f + g u)/dx |_{u = k})^T dp`.
/// Observation: `dz = g^T dp`.
pub fn dual_closed_loop(sys: &SystemModel) -> Result<AugmentedField<'_>> {
    sys.feedback_law()?;
    let n = sys.n();
    let rhs = move |_t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let (x, dp) = y.split_at(n);
        let u = sys.feedback_law()?.eval(x)?;
        let seeded: Vec<Dual> = x
            .iter()
            .enumerate()
            .map(|(i, v)| Dual::variable(*v, i, n))
            .collect();
        let lifted: Vec<Dual> = u.iter().map(|v| Dual::constant(*v)).collect();
        let rows = sys.controlled(&seeded, &lifted)?;
        for (i, d) in rows.iter().enumerate() {
            out[i] = -d.re;
        }
        for b in 0..n {
            out[n + b] = rows.iter().zip(dp).map(|(d, p)| d.derivative(b) * p).sum();
        }
        Ok(())
    };
    Ok(
        AugmentedField::new(&[("x", n), ("dp", n)], Box::new(rhs)).observe_with(
            "dz",
            Box::new(move |_, y| gt_times(sys, &y[..n], &y[n..2 * n])),
        ),
    )
}

/// `(x, dp)` with `x' = -f`, `dp' = (df/dx)^T dp`. Observation: `dz = g^T dp`.
pub fn dual_open(sys: &SystemModel) -> AugmentedField<'_> {
    let n = sys.n();
    let rhs = move |_t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let (x, dp) = y.split_at(n);
        let seeded: Vec<Dual> = x
            .iter()
            .enumerate()
            .map(|(i, v)| Dual::variable(*v, i, n))
            .collect();
        let rows = Drift(sys).eval(&seeded)?;
        for (i, d) in rows.iter().enumerate() {
            out[i] = -d.re;
        }
        for b in 0..n {
            out[n + b] = rows.iter().zip(dp).map(|(d, p)| d.derivative(b) * p).sum();
        }
        Ok(())
    };
    AugmentedField::new(&[("x", n), ("dp", n)], Box::new(rhs)).observe_with(
        "dz",
        Box::new(move |_, y| gt_times(sys, &y[..n], &y[n..2 * n])),
    )
}

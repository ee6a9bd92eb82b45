//! Sample-based checks of the energy inequalities and of the structural
//! implications between convergence, detectability/reachability rank and
//! positive definiteness. Reports carry margins and error budgets.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{
    diff_controllability_fb, diff_observability, incr_controllability_fb,
    incr_controllability_limit, incr_observability, incr_observability_limit,
    path_energy_integral, EnergyValue, LinePath, DEFAULT_GL_ORDER, DEFAULT_LADDER,
};
use crate::error::{Error, Result};
use crate::gramian::{with_jobs, MatrixSource};
use crate::integrate::{Direction, ImproperOptions, OdeOptions, Trajectory};
use crate::linalg::symmetric_eigenvalues;
use crate::rank::{ctrl_bracket_matrix, default_depth, obs_codistribution};
use crate::sampling::Region;
use crate::systems::{dual_closed_loop, prolong, InputSignal, SystemModel, VariationalInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremId {
    Thm1,
    Thm2,
    Thm3,
    Thm4,
    Thm5,
    Cor7,
}

impl TheoremId {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "thm1" => TheoremId::Thm1,
            "thm2" => TheoremId::Thm2,
            "thm3" => TheoremId::Thm3,
            "thm4" => TheoremId::Thm4,
            "thm5" => TheoremId::Thm5,
            "cor7" => TheoremId::Cor7,
            other => return Err(Error::Invalid(format!("unknown theorem `{other}`"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TheoremId::Thm1 => "thm1",
            TheoremId::Thm2 => "thm2",
            TheoremId::Thm3 => "thm3",
            TheoremId::Thm4 => "thm4",
            TheoremId::Thm5 => "thm5",
            TheoremId::Cor7 => "cor7",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// `lhs >= rhs` up to the budget.
    AtLeast,
    /// `|lhs - rhs| <= budget + eq_tol`.
    Equal,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub index: usize,
    pub label: String,
    pub inputs: BTreeMap<String, Vec<f64>>,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub budget: f64,
    /// Why the sample could not be evaluated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Sample {
    fn status(&self, eq_tol: f64) -> Verdict {
        if self.error.is_some() {
            return Verdict::Inconclusive;
        }
        let ok = match self.relation {
            Relation::AtLeast => self.margin >= -self.budget,
            Relation::Equal => self.margin.abs() <= self.budget + eq_tol,
        };
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayEstimate {
    pub label: String,
    pub c: f64,
    pub lambda: f64,
    pub fit_window: (f64, f64),
    /// RMS error of the log-linear fit.
    pub residual: f64,
    /// Set when the fitted rate is not positive: decay is not witnessed.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImplicationStatus {
    /// Both antecedents and the consequent hold on the samples.
    Witnessed,
    /// Both antecedents hold but the consequent fails.
    Refuted,
    /// An antecedent does not hold, so nothing is asserted.
    Vacuous,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Implication {
    pub antecedents: [String; 2],
    pub consequent: String,
    pub status: ImplicationStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub theorem: TheoremId,
    pub verdict: Verdict,
    pub samples: Vec<Sample>,
    pub decay_fits: Vec<DecayEstimate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<ItemOutcome>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub implications: Vec<Implication>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ItemOutcome {
    pub item: String,
    pub verdict: Verdict,
}

impl Report {
    fn assemble(
        theorem: TheoremId,
        samples: Vec<Sample>,
        decay_fits: Vec<DecayEstimate>,
        notes: Vec<String>,
        eq_tol: f64,
    ) -> Self {
        let verdict = overall(&samples, &decay_fits, eq_tol);
        Report {
            theorem,
            verdict,
            samples,
            decay_fits,
            items: Vec::new(),
            implications: Vec::new(),
            notes,
        }
    }

    pub fn max_abs_margin(&self) -> f64 {
        self.samples.iter().map(|s| s.margin.abs()).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Fail if any sample fails; otherwise inconclusive if any sample could not
/// be evaluated or a decay fit is flagged; otherwise pass.
fn overall(samples: &[Sample], fits: &[DecayEstimate], eq_tol: f64) -> Verdict {
    let statuses: Vec<Verdict> = samples.iter().map(|s| s.status(eq_tol)).collect();
    if statuses.contains(&Verdict::Fail) {
        Verdict::Fail
    } else if statuses.contains(&Verdict::Inconclusive) || fits.iter().any(|f| f.flagged) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub improper: ImproperOptions,
    pub gl_order: usize,
    pub ladder: Vec<f64>,
    /// Accepted spread of the last two Richardson extrapolants (relative to max(1, |limit|)).
    pub limit_tol: f64,
    /// Slack added to budgets for equality checks.
    pub eq_tol: f64,
    /// Horizon of the simulations behind decay fits.
    pub decay_horizon: f64,
    /// Grid points per axis for rank and definiteness scans.
    pub grid_per_axis: usize,
    pub depth: Option<usize>,
    pub jobs: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            improper: ImproperOptions::default(),
            gl_order: DEFAULT_GL_ORDER,
            ladder: DEFAULT_LADDER.to_vec(),
            limit_tol: 1e-3,
            eq_tol: 1e-4,
            decay_horizon: 20.0,
            grid_per_axis: 11,
            depth: None,
            jobs: None,
        }
    }
}

/// Least-squares fit of `log|signal|` on the final half of the horizon.
///
/// Forward: `|s(t)| ~ c e^{-lambda t}`. Backward (times `<= 0`):
/// `|s(t)| ~ c e^{lambda t}`.
pub fn fit_decay(times: &[f64], values: &[f64], direction: Direction) -> Result<DecayEstimate> {
    if times.len() != values.len() || times.len() < 10 {
        return Err(Error::DecayFit("need at least 10 samples".into()));
    }
    if values.iter().any(|v| !(v.abs() > 0.0) || !v.is_finite()) {
        return Err(Error::DecayFit("signal must be nonzero and finite".into()));
    }
    let logs: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    let len = times.len() as f64;
    let mt = times.iter().sum::<f64>() / len;
    let ml = logs.iter().sum::<f64>() / len;
    let sxx: f64 = times.iter().map(|t| (t - mt).powi(2)).sum();
    let sxy: f64 = times.iter().zip(&logs).map(|(t, l)| (t - mt) * (l - ml)).sum();
    if sxx == 0.0 {
        return Err(Error::DecayFit("degenerate time window".into()));
    }
    let slope = sxy / sxx;
    let intercept = ml - slope * mt;
    let residual = (times
        .iter()
        .zip(&logs)
        .map(|(t, l)| (l - intercept - slope * t).powi(2))
        .sum::<f64>()
        / len)
        .sqrt();
    let lambda = match direction {
        Direction::Forward => -slope,
        Direction::Backward => slope,
    };
    Ok(DecayEstimate {
        label: String::new(),
        c: intercept.exp(),
        lambda,
        fit_window: (times[0], times[times.len() - 1]),
        residual,
        flagged: lambda <= 0.0,
    })
}

const FIT_SAMPLES: usize = 41;

/// Samples `signal` on the final half of `[0, horizon]` (or of `[-horizon, 0]`)
/// of a trajectory and fits the decay.
pub fn fit_trajectory_decay(
    traj: &Trajectory,
    signal: impl Fn(&[f64]) -> f64,
    direction: Direction,
    horizon: f64,
) -> Result<DecayEstimate> {
    let (a, b) = match direction {
        Direction::Forward => (0.5 * horizon, horizon),
        Direction::Backward => (-horizon, -0.5 * horizon),
    };
    if traj.t_start() > a + 1e-12 || traj.t_end() < b - 1e-12 {
        return Err(Error::DecayFit(format!(
            "trajectory [{}, {}] does not cover the fit window [{a}, {b}]",
            traj.t_start(),
            traj.t_end()
        )));
    }
    let times: Vec<f64> = (0..FIT_SAMPLES)
        .map(|j| a + (b - a) * j as f64 / (FIT_SAMPLES - 1) as f64)
        .collect();
    let values: Vec<f64> = times.iter().map(|t| signal(&traj.eval(*t))).collect();
    fit_decay(&times, &values, direction)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn sample_error(index: usize, label: &str, inputs: BTreeMap<String, Vec<f64>>, relation: Relation, e: &Error) -> Sample {
    Sample {
        index,
        label: label.into(),
        inputs,
        relation,
        lhs: f64::NAN,
        rhs: f64::NAN,
        margin: f64::NAN,
        budget: f64::NAN,
        error: Some(e.to_string()),
    }
}

fn sample_from(
    index: usize,
    label: &str,
    inputs: BTreeMap<String, Vec<f64>>,
    relation: Relation,
    lhs: f64,
    rhs: f64,
    budget: f64,
) -> Sample {
    Sample {
        index,
        label: label.into(),
        inputs,
        relation,
        lhs,
        rhs,
        margin: lhs - rhs,
        budget,
        error: None,
    }
}

fn inputs(pairs: &[(&str, &[f64])]) -> BTreeMap<String, Vec<f64>> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect()
}

/// Decay of the offset `|x' - x|` or tangent `|dx|` stored in the second half
/// of a stacked energy trajectory.
fn energy_decay(
    e: &EnergyValue,
    n: usize,
    direction: Direction,
    opts: &VerifyOptions,
    label: String,
) -> Option<Result<DecayEstimate>> {
    let traj = e.trajectory.as_ref()?;
    let horizon = opts.decay_horizon.min(e.horizon);
    Some(
        fit_trajectory_decay(traj, |y| norm(&y[n..2 * n]), direction, horizon).map(|mut d| {
            d.label = label;
            d
        }),
    )
}

type PairOutcome = (Sample, Option<DecayEstimate>, Option<String>);

fn collect(outcomes: Vec<PairOutcome>) -> (Vec<Sample>, Vec<DecayEstimate>, Vec<String>) {
    let mut samples = Vec::new();
    let mut fits = Vec::new();
    let mut notes = Vec::new();
    for (s, d, note) in outcomes {
        samples.push(s);
        fits.extend(d);
        notes.extend(note);
    }
    (samples, fits, notes)
}

fn check_pairs(
    sys: &SystemModel,
    pairs: &[(Vec<f64>, Vec<f64>)],
    opts: &VerifyOptions,
    path_energy: &(dyn Fn(&[f64], &[f64]) -> Result<EnergyValue> + Sync),
    incremental: &(dyn Fn(&[f64], &[f64]) -> Result<EnergyValue> + Sync),
    direction: Direction,
) -> Result<Vec<PairOutcome>> {
    let n = sys.n();
    with_jobs(opts.jobs, || {
        pairs
            .par_iter()
            .enumerate()
            .map(|(i, (x0, x1))| {
                let inp = inputs(&[("x0", x0), ("x0p", x1)]);
                let run = || -> Result<(EnergyValue, EnergyValue)> {
                    let path = LinePath::new(x0, x1)?;
                    let lhs = path_energy_integral(path_energy, &path, opts.gl_order)?;
                    let rhs = incremental(x0, x1)?;
                    Ok((lhs, rhs))
                };
                match run() {
                    Ok((lhs, rhs)) => {
                        let sample = sample_from(
                            i,
                            "path_vs_incremental",
                            inp,
                            Relation::AtLeast,
                            lhs.value,
                            rhs.value,
                            lhs.error_estimate + rhs.error_estimate,
                        );
                        let (fit, note) = decay_or_note(&rhs, n, direction, opts, i, x0 == x1);
                        (sample, fit, note)
                    }
                    Err(e) => (
                        sample_error(i, "path_vs_incremental", inp, Relation::AtLeast, &e),
                        None,
                        Some(format!("sample {i}: hypothesis check failed: {e}")),
                    ),
                }
            })
            .collect()
    })
}

fn decay_or_note(
    e: &EnergyValue,
    n: usize,
    direction: Direction,
    opts: &VerifyOptions,
    index: usize,
    trivial: bool,
) -> (Option<DecayEstimate>, Option<String>) {
    if trivial {
        return (None, None);
    }
    match energy_decay(e, n, direction, opts, format!("sample {index}")) {
        Some(Ok(d)) => (Some(d), None),
        Some(Err(err)) => (None, Some(format!("sample {index}: decay fit skipped: {err}"))),
        None => (None, None),
    }
}

/// Path integral of the differential controllability energy versus the
/// incremental one, both under `u = k(x)`.
pub fn check_thm1(
    sys: &SystemModel,
    pairs: &[(Vec<f64>, Vec<f64>)],
    opts: &VerifyOptions,
) -> Result<Report> {
    sys.feedback_law()?;
    let imp = opts.improper;
    let diff = |x: &[f64], v: &[f64]| diff_controllability_fb(sys, x, v, &imp);
    let incr = |a: &[f64], b: &[f64]| incr_controllability_fb(sys, a, b, &imp);
    let outcomes = check_pairs(sys, pairs, opts, &diff, &incr, Direction::Backward)?;
    let (samples, fits, mut notes) = collect(outcomes);
    notes.push("lhs: path integral of the differential controllability energy along the segment; rhs: incremental controllability energy".into());
    Ok(Report::assemble(TheoremId::Thm1, samples, fits, notes, opts.eq_tol))
}

/// Path integral of the differential observability energy versus the
/// incremental one.
pub fn check_thm3(
    sys: &SystemModel,
    pairs: &[(Vec<f64>, Vec<f64>)],
    opts: &VerifyOptions,
) -> Result<Report> {
    let imp = opts.improper;
    let diff = |x: &[f64], v: &[f64]| diff_observability(sys, x, v, &imp);
    let incr = |a: &[f64], b: &[f64]| incr_observability(sys, a, b, &imp);
    let outcomes = check_pairs(sys, pairs, opts, &diff, &incr, Direction::Forward)?;
    let (samples, fits, mut notes) = collect(outcomes);
    notes.push("lhs: path integral of the differential observability energy along the segment; rhs: incremental observability energy".into());
    Ok(Report::assemble(TheoremId::Thm3, samples, fits, notes, opts.eq_tol))
}

fn check_limits(
    sys: &SystemModel,
    samples: &[(Vec<f64>, Vec<f64>)],
    opts: &VerifyOptions,
    relation: Relation,
    limit: &(dyn Fn(&[f64], &[f64]) -> Result<crate::energy::QuadraticLimit> + Sync),
    differential: &(dyn Fn(&[f64], &[f64]) -> Result<EnergyValue> + Sync),
    direction: Direction,
) -> Result<Vec<PairOutcome>> {
    let n = sys.n();
    with_jobs(opts.jobs, || {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, (x0, dx0))| {
                let inp = inputs(&[("x0", x0), ("dx0", dx0)]);
                let trivial = dx0.iter().all(|v| *v == 0.0);
                let run = || -> Result<(f64, f64, EnergyValue)> {
                    let rhs = differential(x0, dx0)?;
                    if trivial {
                        return Ok((0.0, 0.0, rhs));
                    }
                    let lim = limit(x0, dx0)?;
                    Ok((lim.limit, lim.error_estimate, rhs))
                };
                match run() {
                    Ok((lhs, lhs_err, rhs)) => {
                        let sample = sample_from(
                            i,
                            "quadratic_limit_vs_differential",
                            inp,
                            relation,
                            lhs,
                            rhs.value,
                            lhs_err + rhs.error_estimate,
                        );
                        let (fit, note) = decay_or_note(&rhs, n, direction, opts, i, trivial);
                        (sample, fit, note)
                    }
                    Err(e) => (
                        sample_error(i, "quadratic_limit_vs_differential", inp, relation, &e),
                        None,
                        Some(format!("sample {i}: {e}")),
                    ),
                }
            })
            .collect()
    })
}

/// `lim E_iC(x0, x0 + s dx0) / s^2` versus the differential controllability
/// energy. With a registered `R` or `P` certificate, equality is asserted.
pub fn check_thm2(
    sys: &SystemModel,
    samples: &[(Vec<f64>, Vec<f64>)],
    opts: &VerifyOptions,
) -> Result<Report> {
    sys.feedback_law()?;
    let imp = opts.improper;
    let certified = sys.certificates().r.is_some() || sys.certificates().p.is_some();
    let relation = if certified { Relation::Equal } else { Relation::AtLeast };
    let limit = |x: &[f64], v: &[f64]| {
        incr_controllability_limit(sys, x, v, &opts.ladder, &imp, opts.limit_tol)
    };
    let diff = |x: &[f64], v: &[f64]| diff_controllability_fb(sys, x, v, &imp);
    let outcomes = check_limits(sys, samples, opts, relation, &limit, &diff, Direction::Backward)?;
    let (samples, fits, mut notes) = collect(outcomes);
    notes.push(if certified {
        "certificate registered: equality of the quadratic limit and the differential energy is asserted".into()
    } else {
        "no certificate: only the upper bound is asserted; the reported margin is the gap".into()
    });
    Ok(Report::assemble(TheoremId::Thm2, samples, fits, notes, opts.eq_tol))
}

/// `lim E_iO(x0 + s dx0, x0) / s^2 = E_dO(x0, dx0)`.
pub fn check_thm4(
    sys: &SystemModel,
    samples: &[(Vec<f64>, Vec<f64>)],
    opts: &VerifyOptions,
) -> Result<Report> {
    let imp = opts.improper;
    let limit = |x: &[f64], v: &[f64]| {
        incr_observability_limit(sys, x, v, &opts.ladder, &imp, opts.limit_tol)
    };
    let diff = |x: &[f64], v: &[f64]| diff_observability(sys, x, v, &imp);
    let outcomes = check_limits(sys, samples, opts, Relation::Equal, &limit, &diff, Direction::Forward)?;
    let (samples, fits, notes) = collect(outcomes);
    Ok(Report::assemble(TheoremId::Thm4, samples, fits, notes, opts.eq_tol))
}

fn item_verdict(samples: &[Sample], fits: &[DecayEstimate], label_prefix: &str, eq_tol: f64) -> Verdict {
    let own: Vec<Sample> = samples
        .iter()
        .filter(|s| s.label.starts_with(label_prefix))
        .cloned()
        .collect();
    let own_fits: Vec<DecayEstimate> = fits
        .iter()
        .filter(|f| f.label.starts_with(label_prefix))
        .cloned()
        .collect();
    if own.is_empty() {
        return Verdict::Inconclusive;
    }
    overall(&own, &own_fits, eq_tol)
}

fn implications(verdicts: [Verdict; 3]) -> Vec<Implication> {
    let name = |i: usize| format!("item{}", i + 1);
    [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
        .iter()
        .map(|&(a, b, c)| {
            let status = if verdicts[a] == Verdict::Pass && verdicts[b] == Verdict::Pass {
                match verdicts[c] {
                    Verdict::Pass => ImplicationStatus::Witnessed,
                    Verdict::Fail => ImplicationStatus::Refuted,
                    Verdict::Inconclusive => ImplicationStatus::Inconclusive,
                }
            } else {
                ImplicationStatus::Vacuous
            };
            Implication {
                antecedents: [name(a), name(b)],
                consequent: name(c),
                status,
            }
        })
        .collect()
}

/// Smallest rate accepted as witnessed exponential convergence.
const MIN_RATE: f64 = 1e-6;
/// Smallest eigenvalue accepted as positive definite.
const MIN_EIG: f64 = 1e-9;

struct Structural<'a> {
    sys: &'a SystemModel,
    region: &'a Region,
    opts: &'a VerifyOptions,
    points: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Structural<'_> {
    fn grid(&self) -> Result<Vec<Vec<f64>>> {
        self.region.grid(&vec![self.opts.grid_per_axis; self.region.dim()])
    }

    /// Item 1: decay of the variational state started from each sample.
    fn convergence(
        &self,
        simulate: &(dyn Fn(&[f64], &[f64]) -> Result<Trajectory> + Sync),
        signal_name: &str,
    ) -> Result<(Vec<Sample>, Vec<DecayEstimate>, Vec<String>)> {
        let n = self.sys.n();
        let horizon = self.opts.decay_horizon;
        let outcomes: Vec<PairOutcome> = with_jobs(self.opts.jobs, || {
            self.points
                .par_iter()
                .enumerate()
                .map(|(i, (x0, v0))| {
                    let inp = inputs(&[("x0", x0), (signal_name, v0)]);
                    let fit = simulate(x0, v0).and_then(|traj| {
                        fit_trajectory_decay(&traj, |y| norm(&y[n..2 * n]), Direction::Forward, horizon)
                    });
                    match fit {
                        Ok(mut d) => {
                            d.label = format!("item1 sample {i}");
                            let s = sample_from(i, "item1", inp, Relation::AtLeast, d.lambda, MIN_RATE, 0.0);
                            (s, Some(d), None)
                        }
                        Err(e) => (
                            sample_error(i, "item1", inp, Relation::AtLeast, &e),
                            None,
                            Some(format!("item1 sample {i}: {e}")),
                        ),
                    }
                })
                .collect()
        })?;
        Ok(collect(outcomes))
    }

    /// Item 2: minimum rank over the region grid.
    fn rank_item(
        &self,
        rank_at: &(dyn Fn(&[f64]) -> Result<usize> + Sync),
        index: usize,
    ) -> Result<Sample> {
        let grid = self.grid()?;
        let ranks: Result<Vec<usize>> = with_jobs(self.opts.jobs, || grid.par_iter().map(|x| rank_at(x)).collect())?;
        let inp = inputs(&[("region_lo", &self.region.lo), ("region_hi", &self.region.hi)]);
        Ok(match ranks {
            Ok(r) => {
                let min = r.iter().copied().min().unwrap_or(0);
                sample_from(index, "item2", inp, Relation::AtLeast, min as f64, self.sys.n() as f64, 0.0)
            }
            Err(e) => sample_error(index, "item2", inp, Relation::AtLeast, &e),
        })
    }

    /// Item 3: minimum eigenvalue of the matrix field over the region grid.
    fn definiteness(&self, m: &MatrixSource<'_>, index: usize) -> Result<Sample> {
        let grid = self.grid()?;
        let eigs: Result<Vec<f64>> = with_jobs(self.opts.jobs, || {
            grid.par_iter()
                .map(|x| Ok(symmetric_eigenvalues(&m.value(x)?)[0]))
                .collect()
        })?;
        let inp = inputs(&[("region_lo", &self.region.lo), ("region_hi", &self.region.hi)]);
        Ok(match eigs {
            Ok(e) => {
                let min = e.iter().copied().fold(f64::INFINITY, f64::min);
                sample_from(index, "item3", inp, Relation::AtLeast, min, MIN_EIG, 0.0)
            }
            Err(e) => sample_error(index, "item3", inp, Relation::AtLeast, &e),
        })
    }
}

fn sample_points(region: &Region, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut sampler = region.sampler(seed);
    (0..count)
        .map(|_| {
            let x = sampler.point();
            let mut v = sampler.direction();
            let len = norm(&v);
            if len > 0.0 {
                v.iter_mut().for_each(|a| *a /= len);
            }
            (x, v)
        })
        .collect()
}

fn finish_structural(
    theorem: TheoremId,
    mut samples: Vec<Sample>,
    fits: Vec<DecayEstimate>,
    notes: Vec<String>,
    eq_tol: f64,
) -> Report {
    for (i, s) in samples.iter_mut().enumerate() {
        s.index = i;
    }
    let verdicts = [
        item_verdict(&samples, &fits, "item1", eq_tol),
        item_verdict(&samples, &fits, "item2", eq_tol),
        item_verdict(&samples, &fits, "item3", eq_tol),
    ];
    let mut report = Report::assemble(theorem, samples, fits, notes, eq_tol);
    report.items = verdicts
        .iter()
        .enumerate()
        .map(|(i, v)| ItemOutcome {
            item: format!("item{}", i + 1),
            verdict: *v,
        })
        .collect();
    report.implications = implications(verdicts);
    report
}

/// Variational convergence, observability rank and positive definiteness of
/// `Q` with the energy identity `E_dO = 1/2 |dx|^2_Q`, on a region.
pub fn check_thm5(
    sys: &SystemModel,
    q: &MatrixSource<'_>,
    region: &Region,
    count: usize,
    seed: u64,
    opts: &VerifyOptions,
) -> Result<Report> {
    if region.dim() != sys.n() {
        return Err(Error::Dimension("region dimension differs from the state dimension".into()));
    }
    let st = Structural {
        sys,
        region,
        opts,
        points: sample_points(region, count, seed),
    };
    let ode = opts.improper.ode;
    let horizon = opts.decay_horizon;
    let field = prolong(sys, InputSignal::Zero, VariationalInput::Zero);
    let simulate = |x0: &[f64], v0: &[f64]| simulate_stacked(&|t, y, o| field.eval(t, y, o), x0, v0, horizon, ode);
    let (mut samples, fits, mut notes) = st.convergence(&simulate, "dx0")?;

    let depth = opts.depth.unwrap_or_else(|| default_depth(sys.n()));
    samples.push(st.rank_item(&|x| Ok(obs_codistribution(sys, x, depth)?.rank), 0)?);
    samples.push(st.definiteness(q, 0)?);

    let imp = opts.improper;
    let energy: Vec<Sample> = with_jobs(opts.jobs, || {
        st.points
            .par_iter()
            .enumerate()
            .map(|(i, (x0, v0))| {
                let inp = inputs(&[("x0", x0), ("dx0", v0)]);
                let run = || -> Result<Sample> {
                    let e = diff_observability(sys, x0, v0, &imp)?;
                    let qx = q.value(x0)?;
                    let v = nalgebra::DVector::from_column_slice(v0);
                    let quad = 0.5 * (v.transpose() * qx * &v)[(0, 0)];
                    Ok(sample_from(i, "item3 energy", inp.clone(), Relation::Equal, quad, e.value, e.error_estimate))
                };
                run().unwrap_or_else(|e| sample_error(i, "item3 energy", inp, Relation::Equal, &e))
            })
            .collect()
    })?;
    samples.extend(energy);
    notes.push("item 2 is checked through the rank of the observability codistribution on the region grid".into());
    notes.push("Q is assumed to be the unique symmetric solution of the Lyapunov equation; uniqueness is not checked".into());
    Ok(finish_structural(TheoremId::Thm5, samples, fits, notes, opts.eq_tol))
}

/// Convergence of the dual closed-loop system, bracket rank and positive
/// definiteness of `P` on a region.
pub fn check_cor7(
    sys: &SystemModel,
    p: &MatrixSource<'_>,
    region: &Region,
    count: usize,
    seed: u64,
    opts: &VerifyOptions,
) -> Result<Report> {
    if region.dim() != sys.n() {
        return Err(Error::Dimension("region dimension differs from the state dimension".into()));
    }
    let field = dual_closed_loop(sys)?;
    let st = Structural {
        sys,
        region,
        opts,
        points: sample_points(region, count, seed),
    };
    let ode = opts.improper.ode;
    let horizon = opts.decay_horizon;
    let simulate = |x0: &[f64], v0: &[f64]| simulate_stacked(&|t, y, o| field.eval(t, y, o), x0, v0, horizon, ode);
    let (mut samples, fits, mut notes) = st.convergence(&simulate, "dp0")?;

    let depth = opts.depth.unwrap_or_else(|| default_depth(sys.n()));
    samples.push(st.rank_item(&|x| Ok(ctrl_bracket_matrix(sys, x, depth)?.rank), 0)?);
    samples.push(st.definiteness(p, 0)?);
    notes.push("item 2 is checked through the rank of the closed-loop bracket matrix on the region grid".into());
    Ok(finish_structural(TheoremId::Cor7, samples, fits, notes, opts.eq_tol))
}

fn simulate_stacked(
    rhs: &crate::integrate::Rhs<'_>,
    x0: &[f64],
    v0: &[f64],
    horizon: f64,
    ode: OdeOptions,
) -> Result<Trajectory> {
    crate::integrate::integrate_ivp(rhs, &[x0, v0].concat(), (0.0, horizon), ode)
}

/// `count` pairs of points drawn uniformly from the region.
pub fn random_pairs(region: &Region, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut s = region.sampler(seed);
    (0..count).map(|_| (s.point(), s.point())).collect()
}

/// `count` base points in the region with unit tangents.
pub fn random_tangents(region: &Region, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    sample_points(region, count, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{MatrixField, VectorField};
    use crate::systems::registry;

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let v: Vec<f64> = t.iter().map(|t| (-2.0 * t).exp()).collect();
        let d = fit_decay(&t, &v, Direction::Forward).unwrap();
        assert!((d.lambda - 2.0).abs() < 1e-12 && (d.c - 1.0).abs() < 1e-12);
        assert!(d.residual < 1e-12 && !d.flagged);
        let flat = fit_decay(&t, &vec![1.0; 20], Direction::Forward).unwrap();
        assert!(flat.lambda.abs() < 1e-12 && flat.flagged);
        assert!(fit_decay(&t, &vec![0.0; 20], Direction::Forward).is_err());
        assert!(fit_decay(&t[..5], &v[..5], Direction::Forward).is_err());
    }

    #[test]
    fn backward_fit_sign() {
        let t: Vec<f64> = (0..20).map(|i| -10.0 + i as f64 * 0.25).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (0.5 * t).exp()).collect();
        let d = fit_decay(&t, &v, Direction::Backward).unwrap();
        assert!((d.lambda - 0.5).abs() < 1e-12);
    }

    #[test]
    fn verdict_rules() {
        let s = |relation, margin: f64, budget| Sample {
            index: 0,
            label: "x".into(),
            inputs: BTreeMap::new(),
            relation,
            lhs: margin,
            rhs: 0.0,
            margin,
            budget,
            error: None,
        };
        assert_eq!(overall(&[s(Relation::AtLeast, -1e-9, 1e-8)], &[], 0.0), Verdict::Pass);
        assert_eq!(overall(&[s(Relation::AtLeast, -1e-7, 1e-8)], &[], 0.0), Verdict::Fail);
        assert_eq!(overall(&[s(Relation::Equal, 1e-5, 0.0)], &[], 1e-4), Verdict::Pass);
        assert_eq!(overall(&[s(Relation::Equal, 1e-3, 0.0)], &[], 1e-4), Verdict::Fail);
        let mut bad = s(Relation::AtLeast, 0.0, 0.0);
        bad.error = Some("diverged".into());
        assert_eq!(overall(&[bad.clone()], &[], 0.0), Verdict::Inconclusive);
        assert_eq!(overall(&[bad, s(Relation::AtLeast, -1.0, 0.0)], &[], 0.0), Verdict::Fail);
    }

    #[test]
    fn implication_table() {
        use Verdict::*;
        let st = |v| implications(v).iter().map(|i| i.status).collect::<Vec<_>>();
        assert_eq!(st([Pass, Pass, Pass]), vec![ImplicationStatus::Witnessed; 3]);
        assert_eq!(
            st([Pass, Pass, Fail]),
            vec![ImplicationStatus::Refuted, ImplicationStatus::Vacuous, ImplicationStatus::Vacuous]
        );
    }

    #[test]
    fn scalar_inequalities_are_equalities() {
        let sys = registry("linear_scalar").unwrap();
        let opts = VerifyOptions::default();
        let pairs = vec![(vec![0.0], vec![0.6]), (vec![0.2], vec![0.2])];
        let r1 = check_thm1(&sys, &pairs, &opts).unwrap();
        assert_eq!(r1.verdict, Verdict::Pass, "{}", r1.to_json());
        assert!((r1.samples[0].lhs - 0.36).abs() < 1e-8);
        assert!(r1.max_abs_margin() < 1e-8);
        let r3 = check_thm3(&sys, &pairs, &opts).unwrap();
        assert_eq!(r3.verdict, Verdict::Pass);
        assert!(r3.max_abs_margin() < 1e-8);
        let tangents = vec![(vec![0.1], vec![1.0]), (vec![0.1], vec![0.0])];
        let r2 = check_thm2(&sys, &tangents, &opts).unwrap();
        assert_eq!(r2.verdict, Verdict::Pass, "{}", r2.to_json());
        let r4 = check_thm4(&sys, &tangents, &opts).unwrap();
        assert_eq!(r4.verdict, Verdict::Pass, "{}", r4.to_json());
    }

    #[test]
    fn scalar_structural_checks() {
        let sys = registry("linear_scalar").unwrap();
        let region = Region::cube(1, 0.5);
        let opts = VerifyOptions::default();
        let q = MatrixSource::Expr(sys.certificates().q.clone().unwrap());
        let r = check_thm5(&sys, &q, &region, 4, 1, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.to_json());
        assert!(r.implications.iter().all(|i| i.status == ImplicationStatus::Witnessed));
        let p = MatrixSource::Expr(sys.certificates().p.clone().unwrap());
        let r = check_cor7(&sys, &p, &region, 4, 1, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.to_json());
    }

    #[test]
    fn unobservable_system_fails_detectability() {
        let f = VectorField::parse(1, &["-x1"]).unwrap();
        let g = MatrixField::parse(1, 1, 1, &["1"]).unwrap();
        let h = VectorField::parse(1, &["0"]).unwrap();
        let sys = SystemModel::new("blind", f, g, h, None).unwrap();
        let zero = MatrixSource::Expr(MatrixField::parse(1, 1, 1, &["0"]).unwrap());
        let r = check_thm5(&sys, &zero, &Region::cube(1, 0.5), 3, 2, &VerifyOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.items[1].verdict, Verdict::Fail);
        assert_eq!(r.items[2].verdict, Verdict::Fail);
        let json = r.to_json();
        assert!(json.contains("\"theorem\": \"thm5\""));
    }
}

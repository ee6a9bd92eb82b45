//! Argument grammar and command dispatch for the `diffbal` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use diffbal::energy::{
    diff_controllability_fb, diff_observability, incr_controllability_fb,
    incr_controllability_limit, incr_observability, incr_observability_limit, DEFAULT_LADDER,
};
use diffbal::expr::parse_system_spec;
use diffbal::gramian::{
    empirical_ctrl_gramian, empirical_obs_gramian, lyap_residual_ctrl, lyap_residual_obs,
    lyap_residual_open, pd_scan, riccati_residual, GramianResult, MatrixSource,
};
use diffbal::integrate::{ImproperOptions, Trajectory};
use diffbal::plot::{emit_plot_script, slot_columns, trajectory_csv, PlotKind};
use diffbal::rank::{default_depth, rank_sweep, rank_sweep_csv, RankKind};
use diffbal::sampling::{fmt_f64, parse_shape, Region};
use diffbal::systems::{
    closed_loop_prolonged, dual_closed_loop, dual_open, prolong, registry, two_copy,
    AugmentedField, InputSignal, SystemModel, VariationalInput,
};
use diffbal::verify::{
    check_cor7, check_thm1, check_thm2, check_thm3, check_thm4, check_thm5, random_pairs,
    random_tangents, Report, TheoremId, VerifyOptions,
};
use diffbal::{Error, Result};

/// Comma-separated vector argument. Aliased so clap parses it as one value.
type Coords = Vec<f64>;
/// Grid shape such as `21x21`.
type Shape = Vec<usize>;

const MAIN_EXAMPLES: &str = "\
Examples:
  diffbal example --out out
  diffbal simulate --system paper_sec5 --mode dual-closed-loop --x0 0.1,0.1 --dp0 1,0 --tf 10
  diffbal pd-scan --system paper_sec5 --field empirical-Q --region -0.3,0.3,-0.3,0.3 --grid 21x21
  diffbal verify --system paper_sec5 --theorem cor7 --region -0.5,0.5,-0.5,0.5";

#[derive(Debug, Parser)]
#[command(name = "diffbal", version, about = "Differential and incremental energy analysis of control-affine systems", after_help = MAIN_EXAMPLES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a prolonged, dual or two-copy system and write trajectory.csv.
    #[command(after_help = "\
Examples:
  diffbal simulate --system paper_sec5 --mode dual-closed-loop --x0 0.1,0.1 --dp0 1,0 --tf 10
  diffbal simulate --system paper_sec5 --mode prolonged --x0 0.1,0.1 --dx0 1,0 --tf 10
  diffbal simulate --system linear_2x2 --mode two-copy --x0 0.5,0 --x0p 0,0.5 --tf 5")]
    Simulate(SimulateArgs),
    /// Evaluate one energy function and write energy.json.
    #[command(after_help = "\
Examples:
  diffbal energy --system paper_sec5 --kind diff-obs --x0 0.1,0.1 --dx0 1,0
  diffbal energy --system paper_sec5 --kind incr-ctrl --x0 0,0 --x0p 0.1,-0.1
  diffbal energy --system paper_sec5 --kind limit-obs --x0 0.05,0 --dx0 0,1")]
    Energy(EnergyArgs),
    /// Empirical observability or controllability Gramian at a point.
    #[command(after_help = "\
Examples:
  diffbal gramian --system paper_sec5 --which obs --x 0.1,-0.2
  diffbal gramian --system linear_2x2 --which ctrl --x 0,0 --tol 1e-10")]
    Gramian(GramianArgs),
    /// Residuals of a Lyapunov/Riccati equation over a grid (residual.csv).
    #[command(after_help = "\
Examples:
  diffbal residual --system paper_sec5 --equation riccati --field R --region -0.5,0.5,-0.5,0.5 --grid 5x5
  diffbal residual --system paper_sec5 --equation obs-lyapunov --field empirical-Q --region -0.2,0.2,-0.2,0.2 --grid 3x3")]
    Residual(ResidualArgs),
    /// Numeric rank of bracket or codistribution matrices over a grid (rank.csv).
    #[command(after_help = "\
Examples:
  diffbal rank --system paper_sec5 --kind ctrl-bracket --region -1,1,-1,1 --grid 21x21 --depth 2
  diffbal rank --system paper_sec5 --kind obs-codistribution --region -2,0,-1,1 --grid 21x21 --depth 1")]
    Rank(RankArgs),
    /// Minimum eigenvalue and determinant of a matrix field over a grid (scan.csv).
    #[command(name = "pd-scan", after_help = "\
Examples:
  diffbal pd-scan --system paper_sec5 --field empirical-Q --region -0.3,0.3,-0.3,0.3 --grid 21x21
  diffbal pd-scan --system paper_sec5 --field P --region -1,1,-1,1 --grid 11x11")]
    PdScan(PdScanArgs),
    /// Sample-based check of one theorem (report.json).
    #[command(after_help = "\
Examples:
  diffbal verify --system paper_sec5 --theorem cor7 --region -0.5,0.5,-0.5,0.5
  diffbal verify --system paper_sec5 --theorem thm3 --region -0.1,0.1,-0.1,0.1 --samples 10 --seed 7
  diffbal verify --system linear_2x2 --theorem thm4 --region -1,1,-1,1 --tol 1e-10")]
    Verify(VerifyArgs),
    /// Reproduce the worked two-state example: trajectories, Gramian scan, ranks and reports.
    #[command(after_help = "\
Examples:
  diffbal example --out out
  diffbal example --out out --jobs 4 --grid 11x11")]
    Example(ExampleArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["system", "spec"])))]
pub struct SystemArgs {
    /// Built-in system: paper_sec5, linear_scalar, linear_2x2.
    #[arg(long)]
    pub system: Option<String>,
    /// JSON system description.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for grid scans (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Improper-integral accuracy; ODE tolerances follow it.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Override the ODE relative tolerance.
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Override the ODE absolute tolerance.
    #[arg(long)]
    pub atol: Option<f64>,
}

impl CommonArgs {
    fn improper(&self) -> ImproperOptions {
        let mut o = ImproperOptions::with_tol(self.tol);
        if let Some(r) = self.rtol {
            o.ode.rtol = r;
        }
        if let Some(a) = self.atol {
            o.ode.atol = a;
        }
        o
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Prolonged,
    ClosedLoopProlonged,
    DualClosedLoop,
    DualOpen,
    TwoCopy,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub mode: SimMode,
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub x0: Coords,
    /// Initial tangent (prolonged modes).
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub dx0: Option<Coords>,
    /// Initial costate (dual modes).
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub dp0: Option<Coords>,
    /// Second initial state (two-copy mode).
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub x0p: Option<Coords>,
    #[arg(long, default_value_t = 10.0)]
    pub tf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnergyKindArg {
    DiffObs,
    IncrObs,
    DiffCtrl,
    IncrCtrl,
    /// `lim E_iO(x0, x0 + s dx0) / s^2` by Richardson extrapolation.
    LimitObs,
    /// `lim E_iC(x0, x0 + s dx0) / s^2` by Richardson extrapolation.
    LimitCtrl,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub kind: EnergyKindArg,
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub x0: Coords,
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub dx0: Option<Coords>,
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub x0p: Option<Coords>,
    /// Spread tolerance of the Richardson table.
    #[arg(long, default_value_t = 1e-3)]
    pub limit_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GramianKind {
    Obs,
    Ctrl,
}

#[derive(Debug, Args)]
pub struct GramianArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub which: GramianKind,
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub x: Coords,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EquationArg {
    ObsLyapunov,
    Riccati,
    CtrlLyapunov,
    OpenLyapunov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldArg {
    #[value(name = "P")]
    P,
    #[value(name = "Q")]
    Q,
    #[value(name = "R")]
    R,
    #[value(name = "empirical-Q")]
    EmpiricalQ,
    #[value(name = "empirical-R")]
    EmpiricalR,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Box `lo1,hi1,lo2,hi2,...`.
    #[arg(long, value_parser = parse_region, allow_hyphen_values = true)]
    pub region: Region,
    /// Points per axis, e.g. `21x21`.
    #[arg(long, value_parser = parse_grid, default_value = "21x21")]
    pub grid: Shape,
}

#[derive(Debug, Args)]
pub struct ResidualArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum)]
    pub equation: EquationArg,
    #[arg(long, value_enum)]
    pub field: FieldArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankKindArg {
    CtrlBracket,
    StrongAccess,
    ObsCodistribution,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum)]
    pub kind: RankKindArg,
    /// Highest bracket or Lie-derivative order (default 2n - 1).
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PdScanArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum)]
    pub field: FieldArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TheoremArg {
    Thm1,
    Thm2,
    Thm3,
    Thm4,
    Thm5,
    Cor7,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub theorem: TheoremArg,
    #[arg(long, value_parser = parse_region, allow_hyphen_values = true)]
    pub region: Region,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Matrix field for thm5 (default Q, else empirical-Q) or cor7 (default P).
    #[arg(long, value_enum)]
    pub field: Option<FieldArg>,
    /// Grid points per axis for the rank and definiteness items.
    #[arg(long, default_value_t = 11)]
    pub grid_per_axis: usize,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub limit_tol: f64,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Grid of the Gramian scan.
    #[arg(long, value_parser = parse_grid, default_value = "21x21")]
    pub grid: Shape,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

/// Why a command did not complete.
#[derive(Debug)]
pub enum Failure {
    /// Bad or missing arguments that the parser cannot catch alone.
    Usage(String),
    /// The analysis itself failed.
    Analysis(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Analysis(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownSystem(_) => Failure::Usage(e.to_string()),
            e => Failure::Analysis(e),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Analysis(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for Failure {}

type Outcome = std::result::Result<String, Failure>;

fn parse_vector(s: &str) -> std::result::Result<Coords, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect()
}

fn parse_region(s: &str) -> std::result::Result<Region, String> {
    Region::parse(s).map_err(|e| e.to_string())
}

fn parse_grid(s: &str) -> std::result::Result<Shape, String> {
    parse_shape(s).map_err(|e| e.to_string())
}

/// Example invocations listed in the help text of every command, without the
/// leading program name.
pub fn help_examples() -> Vec<Vec<String>> {
    use clap::CommandFactory;
    let mut cmd = Cli::command();
    let mut texts = vec![cmd.render_long_help().to_string()];
    for sub in cmd.get_subcommands_mut() {
        texts.push(sub.render_long_help().to_string());
    }
    texts
        .iter()
        .flat_map(|t| t.lines().map(str::trim).filter(|l| l.starts_with("diffbal ")).map(String::from).collect::<Vec<_>>())
        .map(|l| l.split_whitespace().skip(1).map(String::from).collect())
        .collect()
}

fn load_system(args: &SystemArgs) -> Result<SystemModel> {
    match (&args.system, &args.spec) {
        (Some(name), None) => registry(name),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
            let name = path.file_stem().map_or("spec".into(), |s| s.to_string_lossy().into_owned());
            SystemModel::from_spec(name, &parse_system_spec(&text)?)
        }
        _ => Err(Error::Invalid("give exactly one of --system and --spec".into())),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn vector_arg(v: &Option<Coords>, flag: &str) -> std::result::Result<Vec<f64>, Failure> {
    v.clone()
        .ok_or_else(|| Failure::Usage(format!("this mode needs --{flag}")))
}

fn matrix_rows(g: &GramianResult) -> Vec<Vec<f64>> {
    let m = &g.matrix;
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn field_source<'a>(
    sys: &'a SystemModel,
    field: FieldArg,
    opts: ImproperOptions,
) -> Result<MatrixSource<'a>> {
    let cert = |m: &Option<diffbal::calculus::MatrixField>, name: &str| {
        m.clone().map(MatrixSource::Expr).ok_or_else(|| {
            Error::Invalid(format!("system `{}` has no {name} certificate", sys.name()))
        })
    };
    let c = sys.certificates();
    match field {
        FieldArg::P => cert(&c.p, "P"),
        FieldArg::Q => cert(&c.q, "Q"),
        FieldArg::R => cert(&c.r, "R"),
        FieldArg::EmpiricalQ => Ok(MatrixSource::Numeric(Box::new(move |x: &[f64]| {
            Ok(empirical_obs_gramian(sys, x, &opts)?.matrix)
        }))),
        FieldArg::EmpiricalR => {
            sys.feedback_law()?;
            Ok(MatrixSource::Numeric(Box::new(move |x: &[f64]| {
                Ok(empirical_ctrl_gramian(sys, x, &opts)?.matrix)
            })))
        }
    }
}

fn save_trajectory(dir: &Path, name: &str, field: &AugmentedField<'_>, traj: &Trajectory) -> Result<PathBuf> {
    let csv = write(dir, name, &trajectory_csv(traj, &slot_columns(field))?)?;
    emit_plot_script(&csv, PlotKind::Timeseries)?;
    Ok(csv)
}

fn check_len(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!("{what} has {} entries, system has n = {n}", v.len())));
    }
    Ok(())
}

fn check_region(region: &Region, n: usize) -> Result<()> {
    if region.dim() != n {
        return Err(Error::Dimension(format!("region has dimension {}, system has n = {n}", region.dim())));
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Outcome {
    let sys = load_system(&a.system)?;
    let n = sys.n();
    check_len(&a.x0, n, "--x0")?;
    if !(a.tf > 0.0) {
        return Err(Failure::Usage("--tf must be positive".into()));
    }
    let (field, second) = match a.mode {
        SimMode::Prolonged => (
            prolong(&sys, InputSignal::Zero, VariationalInput::Zero),
            vector_arg(&a.dx0, "dx0")?,
        ),
        SimMode::ClosedLoopProlonged => (closed_loop_prolonged(&sys)?, vector_arg(&a.dx0, "dx0")?),
        SimMode::DualClosedLoop => (dual_closed_loop(&sys)?, vector_arg(&a.dp0, "dp0")?),
        SimMode::DualOpen => (dual_open(&sys), vector_arg(&a.dp0, "dp0")?),
        SimMode::TwoCopy => (
            two_copy(&sys, InputSignal::Zero, InputSignal::Zero),
            vector_arg(&a.x0p, "x0p")?,
        ),
    };
    check_len(&second, n, "second initial vector")?;
    let traj = field.simulate(&[a.x0.as_slice(), &second].concat(), (0.0, a.tf), a.common.improper().ode)?;
    prepare_out(&a.common.out)?;
    let csv = save_trajectory(&a.common.out, "trajectory.csv", &field, &traj)?;
    Ok(format!("wrote {} ({} rows)", csv.display(), traj.len()))
}

fn energy(a: &EnergyArgs) -> Outcome {
    let sys = load_system(&a.system)?;
    check_len(&a.x0, sys.n(), "--x0")?;
    let opts = a.common.improper();
    let doc = match a.kind {
        EnergyKindArg::DiffObs | EnergyKindArg::DiffCtrl | EnergyKindArg::IncrObs | EnergyKindArg::IncrCtrl => {
            let e = match a.kind {
                EnergyKindArg::DiffObs => diff_observability(&sys, &a.x0, &vector_arg(&a.dx0, "dx0")?, &opts)?,
                EnergyKindArg::DiffCtrl => diff_controllability_fb(&sys, &a.x0, &vector_arg(&a.dx0, "dx0")?, &opts)?,
                EnergyKindArg::IncrObs => incr_observability(&sys, &a.x0, &vector_arg(&a.x0p, "x0p")?, &opts)?,
                _ => incr_controllability_fb(&sys, &a.x0, &vector_arg(&a.x0p, "x0p")?, &opts)?,
            };
            json!({
                "kind": a.kind.to_possible_value().map(|v| v.get_name().to_string()),
                "value": e.value,
                "error_estimate": e.error_estimate,
                "horizon": e.horizon,
            })
        }
        EnergyKindArg::LimitObs | EnergyKindArg::LimitCtrl => {
            let dx0 = vector_arg(&a.dx0, "dx0")?;
            let lim = if a.kind == EnergyKindArg::LimitObs {
                incr_observability_limit(&sys, &a.x0, &dx0, &DEFAULT_LADDER, &opts, a.limit_tol)?
            } else {
                incr_controllability_limit(&sys, &a.x0, &dx0, &DEFAULT_LADDER, &opts, a.limit_tol)?
            };
            json!({
                "kind": a.kind.to_possible_value().map(|v| v.get_name().to_string()),
                "value": lim.limit,
                "error_estimate": lim.error_estimate,
                "spread": lim.spread,
                "extrapolants": lim.extrapolants,
                "table": lim.table,
                "horizon": lim.horizon,
            })
        }
    };
    prepare_out(&a.common.out)?;
    let text = serde_json::to_string_pretty(&doc).map_err(Error::from)?;
    write(&a.common.out, "energy.json", &text)?;
    Ok(text)
}

fn gramian(a: &GramianArgs) -> Outcome {
    let sys = load_system(&a.system)?;
    let opts = a.common.improper();
    let g = match a.which {
        GramianKind::Obs => empirical_obs_gramian(&sys, &a.x, &opts)?,
        GramianKind::Ctrl => empirical_ctrl_gramian(&sys, &a.x, &opts)?,
    };
    let doc = json!({
        "which": format!("{:?}", a.which).to_lowercase(),
        "x": a.x,
        "matrix": matrix_rows(&g),
        "truncation_error": g.truncation_error,
        "horizon": g.horizon,
    });
    prepare_out(&a.common.out)?;
    let text = serde_json::to_string_pretty(&doc).map_err(Error::from)?;
    write(&a.common.out, "gramian.json", &text)?;
    Ok(text)
}

fn residual(a: &ResidualArgs) -> Outcome {
    let sys = load_system(&a.system)?;
    let source = field_source(&sys, a.field, a.common.improper())?;
    let grid = a.grid.region.grid(&a.grid.grid)?;
    check_region(&a.grid.region, sys.n())?;
    let mut csv = String::new();
    for i in 1..=sys.n() {
        let _ = write!(csv, "x{i},");
    }
    csv.push_str("residual_norm,gain_residual_norm\n");
    let mut worst: f64 = 0.0;
    for x in &grid {
        let (main, gain) = match a.equation {
            EquationArg::ObsLyapunov => (lyap_residual_obs(&sys, &source, x)?.frobenius_norm, f64::NAN),
            EquationArg::OpenLyapunov => (lyap_residual_open(&sys, &source, x)?.frobenius_norm, f64::NAN),
            EquationArg::Riccati => {
                let (m, g) = riccati_residual(&sys, &source, x)?;
                (m.frobenius_norm, g.frobenius_norm)
            }
            EquationArg::CtrlLyapunov => {
                let (m, g) = lyap_residual_ctrl(&sys, &source, x)?;
                (m.frobenius_norm, g.frobenius_norm)
            }
        };
        worst = worst.max(main).max(if gain.is_nan() { 0.0 } else { gain });
        for v in x {
            csv.push_str(&fmt_f64(*v));
            csv.push(',');
        }
        let _ = writeln!(csv, "{},{}", fmt_f64(main), fmt_f64(gain));
    }
    prepare_out(&a.common.out)?;
    let path = write(&a.common.out, "residual.csv", &csv)?;
    Ok(format!("wrote {}; max Frobenius residual {:e} over {} points", path.display(), worst, grid.len()))
}

fn rank(a: &RankArgs) -> Outcome {
    let sys = load_system(&a.system)?;
    let kind = match a.kind {
        RankKindArg::CtrlBracket => RankKind::CtrlBracket,
        RankKindArg::StrongAccess => RankKind::StrongAccess,
        RankKindArg::ObsCodistribution => RankKind::ObsCodistribution,
    };
    check_region(&a.grid.region, sys.n())?;
    let depth = a.depth.unwrap_or_else(|| default_depth(sys.n()));
    let points = rank_sweep(&sys, kind, &a.grid.region, &a.grid.grid, depth, a.common.jobs)?;
    prepare_out(&a.common.out)?;
    let path = write(&a.common.out, "rank.csv", &rank_sweep_csv(&points))?;
    if sys.n() == 2 {
        emit_plot_script(&path, PlotKind::Heatmap)?;
    }
    let min = points.iter().map(|p| p.rank).min().unwrap_or(0);
    let deficient = points.iter().filter(|p| p.rank < sys.n()).count();
    Ok(format!(
        "wrote {}; minimum rank {min} of n = {}; {deficient} of {} points rank-deficient",
        path.display(),
        sys.n(),
        points.len()
    ))
}

fn pd_scan_cmd(a: &PdScanArgs) -> Outcome {
    let sys = load_system(&a.system)?;
    check_region(&a.grid.region, sys.n())?;
    let source = field_source(&sys, a.field, a.common.improper())?;
    let f = |x: &[f64]| source.value(x);
    let scan = pd_scan(&f, &a.grid.region, &a.grid.grid, a.common.jobs)?;
    prepare_out(&a.common.out)?;
    let path = write(&a.common.out, "scan.csv", &scan.to_csv())?;
    if sys.n() == 2 {
        emit_plot_script(&path, PlotKind::Heatmap)?;
    }
    let positive = scan.points.iter().filter(|p| p.status == "ok").count();
    Ok(format!(
        "wrote {}; {positive} of {} points positive definite, {} evaluation failures",
        path.display(),
        scan.points.len(),
        scan.failures()
    ))
}

fn run_verify(
    sys: &SystemModel,
    theorem: TheoremId,
    region: &Region,
    samples: usize,
    seed: u64,
    field: Option<FieldArg>,
    opts: &VerifyOptions,
) -> Result<Report> {
    check_region(region, sys.n())?;
    match theorem {
        TheoremId::Thm1 => check_thm1(sys, &random_pairs(region, samples, seed), opts),
        TheoremId::Thm3 => check_thm3(sys, &random_pairs(region, samples, seed), opts),
        TheoremId::Thm2 => check_thm2(sys, &random_tangents(region, samples, seed), opts),
        TheoremId::Thm4 => check_thm4(sys, &random_tangents(region, samples, seed), opts),
        TheoremId::Thm5 => {
            let choice = field.unwrap_or(if sys.certificates().q.is_some() {
                FieldArg::Q
            } else {
                FieldArg::EmpiricalQ
            });
            let q = field_source(sys, choice, opts.improper)?;
            check_thm5(sys, &q, region, samples, seed, opts)
        }
        TheoremId::Cor7 => {
            let p = field_source(sys, field.unwrap_or(FieldArg::P), opts.improper)?;
            check_cor7(sys, &p, region, samples, seed, opts)
        }
    }
}

fn theorem_id(t: TheoremArg) -> TheoremId {
    match t {
        TheoremArg::Thm1 => TheoremId::Thm1,
        TheoremArg::Thm2 => TheoremId::Thm2,
        TheoremArg::Thm3 => TheoremId::Thm3,
        TheoremArg::Thm4 => TheoremId::Thm4,
        TheoremArg::Thm5 => TheoremId::Thm5,
        TheoremArg::Cor7 => TheoremId::Cor7,
    }
}

fn verify(a: &VerifyArgs) -> Outcome {
    let sys = load_system(&a.system)?;
    let opts = VerifyOptions {
        improper: a.common.improper(),
        limit_tol: a.limit_tol,
        grid_per_axis: a.grid_per_axis,
        depth: a.depth,
        jobs: a.common.jobs,
        ..VerifyOptions::default()
    };
    let report = run_verify(&sys, theorem_id(a.theorem), &a.region, a.samples, a.seed, a.field, &opts)?;
    prepare_out(&a.common.out)?;
    let path = write(&a.common.out, "report.json", &report.to_json())?;
    Ok(format!(
        "{}: {:?} ({} samples); wrote {}",
        report.theorem.name(),
        report.verdict,
        report.samples.len(),
        path.display()
    ))
}

fn example(a: &ExampleArgs) -> Outcome {
    let sys = registry("paper_sec5")?;
    let out = &a.common.out;
    prepare_out(out)?;
    let imp = a.common.improper();
    let mut lines = Vec::new();

    let dual = dual_closed_loop(&sys)?;
    let traj = dual.simulate(&[0.1, 0.1, 1.0, 0.0], (0.0, 10.0), imp.ode)?;
    let p = save_trajectory(out, "dual_closed_loop.csv", &dual, &traj)?;
    lines.push(format!("dual closed-loop costate from (0.1, 0.1), (1, 0): {}", p.display()));

    let prol = prolong(&sys, InputSignal::Zero, VariationalInput::Zero);
    let traj = prol.simulate(&[0.1, 0.1, 1.0, 0.0], (0.0, 10.0), imp.ode)?;
    let p = save_trajectory(out, "prolonged.csv", &prol, &traj)?;
    lines.push(format!("prolonged tangent from (0.1, 0.1), (1, 0): {}", p.display()));

    let q = |x: &[f64]| Ok(empirical_obs_gramian(&sys, x, &imp)?.matrix);
    let scan = pd_scan(&q, &Region::cube(2, 0.3), &a.grid, a.common.jobs)?;
    let p = write(out, "gramian_scan.csv", &scan.to_csv())?;
    emit_plot_script(&p, PlotKind::Heatmap)?;
    lines.push(format!(
        "empirical observability Gramian on [-0.3, 0.3]^2: positive definite everywhere: {} ({})",
        scan.all_positive(),
        p.display()
    ));

    let ctrl = rank_sweep(&sys, RankKind::CtrlBracket, &Region::cube(2, 1.0), &[21, 21], 2, a.common.jobs)?;
    let p = write(out, "ctrl_bracket_rank.csv", &rank_sweep_csv(&ctrl))?;
    emit_plot_script(&p, PlotKind::Heatmap)?;
    lines.push(format!(
        "closed-loop bracket rank on [-1, 1]^2: minimum {} ({})",
        ctrl.iter().map(|r| r.rank).min().unwrap_or(0),
        p.display()
    ));
    let obs = rank_sweep(&sys, RankKind::ObsCodistribution, &Region::new(vec![-2.0, -1.0], vec![0.0, 1.0])?, &[21, 21], 1, a.common.jobs)?;
    let p = write(out, "obs_codistribution_rank.csv", &rank_sweep_csv(&obs))?;
    emit_plot_script(&p, PlotKind::Heatmap)?;
    let drops: Vec<f64> = obs.iter().filter(|r| r.rank < 2).map(|r| r.x[0]).collect();
    lines.push(format!(
        "observability codistribution rank drops at {} points, all with x1 = -1: {} ({})",
        drops.len(),
        drops.iter().all(|x| (x + 1.0).abs() < 1e-12),
        p.display()
    ));

    let opts = VerifyOptions {
        improper: imp,
        jobs: a.common.jobs,
        ..VerifyOptions::default()
    };
    let small = Region::cube(2, 0.1);
    for (theorem, region) in [
        (TheoremId::Thm1, &small),
        (TheoremId::Thm3, &small),
        (TheoremId::Thm4, &small),
        (TheoremId::Cor7, &Region::cube(2, 0.5)),
    ] {
        let report = run_verify(&sys, theorem, region, 10, a.seed, None, &opts)?;
        let p = write(out, &format!("report_{}.json", theorem.name()), &report.to_json())?;
        lines.push(format!("{}: {:?} ({})", theorem.name(), report.verdict, p.display()));
    }
    Ok(lines.join("\n"))
}

/// Runs a parsed command and returns the summary printed on success.
pub fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Energy(a) => energy(a),
        Command::Gramian(a) => gramian(a),
        Command::Residual(a) => residual(a),
        Command::Rank(a) => rank(a),
        Command::PdScan(a) => pd_scan_cmd(a),
        Command::Verify(a) => verify(a),
        Command::Example(a) => example(a),
    }
}

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpscale_core::accounting::BudgetAxis;
use dpscale_core::grid::{synth_grid, MeasurementGrid, DEFAULT_WINDOW};
use dpscale_core::lawfit::{
    fit_parametric, FitFilters, FitObjective, FitOptions, FitRow, FittedLaw, InterpolatedLaw, LawDocument, LawForm,
};
use dpscale_core::planner::{default_baselines, Baseline, SavingsGrid, SweepAxis, DEFAULT_LATTICE_DENSITY, DEFAULT_NEAR_OPTIMAL};
use dpscale_core::{GridState, DEFAULT_DELTA, DEFAULT_SEQ_LEN};
use dpscale_cli::formats::{emit, grid_csv, load_law, plot_csv, read_grid, read_json, to_json};
use dpscale_cli::manifest::{DefaultBudgets, WorkspaceManifest};
use dpscale_cli::reports::{
    baselines_report, calibrate, law_info, parse_budget_axis, parse_count, parse_sweep_axis, plan, plan_saturated,
    sweep_plots, sweep_report, table_csv, vector_field_report, BaselineRequest, BatchingChoice, CalibrateRequest,
    LogGrid, PlanRequest, SweepRequest, VectorFieldRequest, DEFAULT_TOLERANCE,
};
use dpscale_cli::service::{self, default_exponents, ServiceConfig};
use dpscale_cli::CliError;

#[derive(Parser)]
#[command(name = "dpscale", version, about = "Compute, privacy and data budget planning for DP training")]
struct Cli {
    /// Workspace manifest naming laws, grids and default budgets.
    #[arg(long, global = true, env = "DPSCALE_WORKSPACE")]
    workspace: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the noise-batch ratio to a privacy budget.
    Calibrate(CalibrateArgs),
    /// Sample a measurement grid from a parametric law.
    Synth(SynthArgs),
    /// Rolling average, learning-rate minimum and isotonic regression.
    Clean(CleanArgs),
    /// Extend a cleaned grid to more iterations with per-series power laws.
    Extrapolate(ExtrapolateArgs),
    /// Build the log-space interpolating law from a cleaned grid.
    FitInterp(FitInterpArgs),
    /// Fit a parametric law by robust regression.
    FitParametric(FitParametricArgs),
    /// Compute-optimal configuration for given budgets.
    Plan(PlanArgs),
    /// Optimal configurations across one budget.
    Sweep(SweepArgs),
    /// Marginal effect of doubling budgets on the noise-batch ratio.
    VectorField(VectorFieldArgs),
    /// Fixed baseline configurations against the compute-optimal one.
    Baselines(BaselinesArgs),
    /// Print a law's kind, domain and provenance.
    Law(LawArgs),
    /// Validate the workspace manifest.
    Workspace,
    /// Serve the JSON API.
    Serve(ServeArgs),
}

fn count(s: &str) -> Result<u64, String> {
    parse_count(s)
}

/// `lo:hi` pair of reals.
fn real_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected LO:HI")?;
    Ok((a.parse().map_err(|_| "bad LO")?, b.parse().map_err(|_| "bad HI")?))
}

fn int_pair(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(':').ok_or("expected LO:HI")?;
    Ok((a.parse().map_err(|_| "bad LO")?, b.parse().map_err(|_| "bad HI")?))
}

fn log_grid(s: &str) -> Result<LogGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [from, to, points] = parts[..] else { return Err("expected FROM:TO:POINTS".into()) };
    Ok(LogGrid {
        from: from.parse().map_err(|_| "bad FROM")?,
        to: to.parse().map_err(|_| "bad TO")?,
        points: points.parse().map_err(|_| "bad POINTS")?,
    })
}

#[derive(Clone)]
struct IterationAxis(Vec<u64>);

/// Comma list of counts, or `start:stop:step`.
fn iteration_axis(s: &str) -> Result<IterationAxis, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if let [a, b, step] = parts[..] {
        let (a, b, step) = (count(a)?, count(b)?, count(step)?);
        if step == 0 || a > b {
            return Err("need START <= STOP and STEP > 0".into());
        }
        return Ok(IterationAxis((a..=b).step_by(step as usize).collect()));
    }
    s.split(',').map(|v| count(v.trim())).collect::<Result<_, _>>().map(IterationAxis)
}

#[derive(Args)]
struct Out {
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long, env = "DPSCALE_DELTA")]
    delta: Option<f64>,
    /// Data budget N (individuals).
    #[arg(long, value_parser = count)]
    data: u64,
    /// Expected batch size B.
    #[arg(long)]
    batch: f64,
    /// Training steps T.
    #[arg(long, value_parser = count)]
    steps: u64,
    #[arg(long, value_enum, default_value = "both")]
    batching: BatchingChoice,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct SynthArgs {
    /// Parametric law document, or builtin:l1 / builtin:l2.
    #[arg(long)]
    law: String,
    #[arg(long, value_delimiter = ',', value_parser = count, required = true)]
    model_params: Vec<u64>,
    /// Comma list or START:STOP:STEP.
    #[arg(long, value_parser = iteration_axis)]
    iterations: IterationAxis,
    #[arg(long, value_delimiter = ',', required = true)]
    nbr: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct CleanArgs {
    /// Grid CSV or grid JSON.
    #[arg(long)]
    input: String,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct ExtrapolateArgs {
    #[arg(long)]
    input: String,
    /// Target iteration counts.
    #[arg(long, value_delimiter = ',', value_parser = count, required = true)]
    to: Vec<u64>,
    #[arg(long, value_parser = real_pair, default_value = "16000:128000")]
    fit_range: (f64, f64),
    /// Also write the per-series power-law fits here.
    #[arg(long)]
    fits: Option<PathBuf>,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct FitInterpArgs {
    #[arg(long)]
    input: String,
    #[command(flatten)]
    out: Out,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    L1,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Raw,
    Log,
}

#[derive(Args)]
struct FitParametricArgs {
    /// Grid CSV or grid JSON; every cell becomes a fitting row.
    #[arg(long)]
    input: String,
    #[arg(long, value_enum, default_value = "l2")]
    form: FormArg,
    #[arg(long, default_value_t = 1e-3)]
    huber_delta: f64,
    #[arg(long, value_enum, default_value = "raw")]
    objective: ObjectiveArg,
    #[arg(long, default_value_t = 32)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    min_iterations: Option<f64>,
    #[arg(long)]
    min_nbr: Option<f64>,
    #[arg(long)]
    max_loss: Option<f64>,
    /// Keep every row regardless of the default filters.
    #[arg(long)]
    no_filters: bool,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct BudgetArgs {
    /// Law document path, workspace law name, or builtin:l1 / builtin:l2.
    #[arg(long)]
    law: Option<String>,
    #[arg(long, env = "DPSCALE_DELTA")]
    delta: Option<f64>,
    #[arg(long)]
    seq_len: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_LATTICE_DENSITY)]
    lattice_density: u32,
    #[arg(long, default_value_t = DEFAULT_NEAR_OPTIMAL)]
    near_optimal: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanFormat {
    Json,
    Table,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    budgets: BudgetArgs,
    #[arg(long)]
    compute: Option<f64>,
    /// ε values; `inf` plans non-private training.
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = count)]
    data: Vec<u64>,
    /// Pick the compute as the critical compute of this FROM:TO:POINTS grid.
    #[arg(long, value_parser = log_grid, conflicts_with = "compute")]
    saturate: Option<LogGrid>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: PlanFormat,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    budgets: BudgetArgs,
    #[arg(long, value_parser = parse_sweep_axis)]
    axis: SweepAxis,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long, default_value_t = 9)]
    points: usize,
    #[arg(long)]
    compute: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_parser = count)]
    data: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Directory for plot CSVs, one per series.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct VectorFieldArgs {
    #[arg(long, value_parser = parse_budget_axis)]
    x: BudgetAxis,
    #[arg(long, value_parser = parse_budget_axis)]
    y: BudgetAxis,
    /// Base-2 exponent range LO:HI of the x axis.
    #[arg(long, value_parser = int_pair, allow_hyphen_values = true)]
    x_exponents: Option<(i32, i32)>,
    #[arg(long, value_parser = int_pair, allow_hyphen_values = true)]
    y_exponents: Option<(i32, i32)>,
    #[arg(long, default_value_t = 4.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 65536.0)]
    batch: f64,
    #[arg(long, default_value_t = 16_777_216.0)]
    data: f64,
    #[arg(long, value_parser = count, default_value = "16000")]
    steps: u64,
    #[arg(long, env = "DPSCALE_DELTA")]
    delta: Option<f64>,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct BaselinesArgs {
    #[arg(long)]
    law: Option<String>,
    /// JSON list of {name, model_params, batch_size, iterations}; the
    /// built-in BERT configurations when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = count, default_value = "10000000")]
    data: u64,
    #[arg(long, env = "DPSCALE_DELTA")]
    delta: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    epsilons: Vec<f64>,
    #[arg(long)]
    seq_len: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_LATTICE_DENSITY)]
    lattice_density: u32,
    #[arg(long, default_value_t = 4)]
    savings_density: u32,
    #[arg(long, default_value_t = 3)]
    savings_decades: u32,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct LawArgs {
    #[arg(long)]
    law: Option<String>,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "DPSCALE_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long)]
    law: Option<String>,
    /// Allow cross-origin requests.
    #[arg(long)]
    cors: bool,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long, env = "DPSCALE_DELTA")]
    delta: Option<f64>,
}

/// Workspace context: defaults and name resolution.
struct Context {
    manifest: Option<WorkspaceManifest>,
}

impl Context {
    fn defaults(&self) -> DefaultBudgets {
        self.manifest.as_ref().map(|m| m.defaults.clone()).unwrap_or_default()
    }

    fn delta(&self, flag: Option<f64>) -> f64 {
        flag.or(self.defaults().delta).unwrap_or(DEFAULT_DELTA)
    }

    fn seq_len(&self, flag: Option<f64>) -> f64 {
        flag.or(self.defaults().seq_len).unwrap_or(DEFAULT_SEQ_LEN)
    }

    fn law(&self, flag: Option<&str>) -> Result<LawDocument, CliError> {
        let name = flag.ok_or_else(|| CliError::invalid("law", "required"))?;
        match self.manifest.as_ref().and_then(|m| m.law(name)) {
            Some(path) => load_law(&path.to_string_lossy()),
            None => load_law(name),
        }
    }

    fn grid(&self, name: &str) -> Result<MeasurementGrid, CliError> {
        match self.manifest.as_ref().and_then(|m| m.grid(name)) {
            Some(path) => read_grid(&path),
            None => read_grid(Path::new(name)),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let manifest = cli.workspace.as_deref().map(WorkspaceManifest::load).transpose()?;
    let ctx = Context { manifest };
    match cli.command {
        Command::Calibrate(a) => {
            let req = CalibrateRequest {
                epsilon: a.epsilon,
                delta: ctx.delta(a.delta),
                data: a.data,
                batch: a.batch,
                steps: a.steps,
                batching: a.batching,
            };
            emit(a.out.out.as_deref(), &to_json(&calibrate(&req)?))
        }
        Command::Synth(a) => {
            let doc = ctx.law(Some(&a.law))?;
            let FittedLaw::Parametric(law) = doc.law else {
                return Err(CliError::invalid("law", "synth needs a parametric law"));
            };
            let grid = synth_grid(&law, (&a.model_params, &a.iterations.0, &a.nbr), a.noise_sd, a.seed)?;
            emit(a.out.out.as_deref(), &grid_csv(&grid.measurements()))
        }
        Command::Clean(a) => {
            let grid = ctx.grid(&a.input)?;
            // cleaning is a no-op on grids that are already cleaned
            let cleaned = if grid.state() >= GridState::Monotone { grid } else { grid.clean(a.window)? };
            emit(a.out.out.as_deref(), &to_json(&cleaned))
        }
        Command::Extrapolate(a) => {
            let grid = ctx.grid(&a.input)?;
            let x = grid.extrapolate(&a.to, a.fit_range)?;
            if let Some(p) = &a.fits {
                emit(Some(p), &to_json(&x.fits))?;
            }
            emit(a.out.out.as_deref(), &to_json(&x.grid))
        }
        Command::FitInterp(a) => {
            let grid = ctx.grid(&a.input)?;
            let law = InterpolatedLaw::from_grid(&grid)?;
            emit(a.out.out.as_deref(), &to_json(&LawDocument::new(FittedLaw::Interp(law))))
        }
        Command::FitParametric(a) => fit_parametric_cmd(&ctx, a),
        Command::Plan(a) => plan_cmd(&ctx, a),
        Command::Sweep(a) => sweep_cmd(&ctx, a),
        Command::VectorField(a) => {
            let req = VectorFieldRequest {
                x: a.x,
                y: a.y,
                x_exponents: a.x_exponents.unwrap_or(default_exponents(a.x)),
                y_exponents: a.y_exponents.unwrap_or(default_exponents(a.y)),
                epsilon: a.epsilon,
                batch: a.batch,
                data: a.data,
                steps: a.steps,
                delta: ctx.delta(a.delta),
            };
            emit(a.out.out.as_deref(), &to_json(&vector_field_report(&req)?))
        }
        Command::Baselines(a) => {
            let doc = ctx.law(a.law.as_deref())?;
            let baselines: Vec<Baseline> = match &a.config {
                Some(p) => read_json(p)?,
                None => default_baselines(),
            };
            let req = BaselineRequest {
                baselines,
                data: a.data,
                delta: ctx.delta(a.delta),
                epsilons: a.epsilons,
                seq_len: ctx.seq_len(a.seq_len),
                lattice_density: a.lattice_density,
                savings: SavingsGrid { density: a.savings_density, decades: a.savings_decades },
            };
            emit(a.out.out.as_deref(), &to_json(&baselines_report(&req, &doc.law)?))
        }
        Command::Law(a) => {
            let doc = ctx.law(a.law.as_deref())?;
            emit(a.out.out.as_deref(), &to_json(&law_info(&doc)))
        }
        Command::Workspace => match &ctx.manifest {
            Some(m) => {
                println!("workspace ok: {} laws, {} grids", m.laws.len(), m.grids.len());
                Ok(())
            }
            None => Err(CliError::invalid("workspace", "pass --workspace or set DPSCALE_WORKSPACE")),
        },
        Command::Serve(a) => {
            let law = a.law.as_deref().map(|l| ctx.law(Some(l))).transpose()?;
            let config = ServiceConfig {
                law,
                default_delta: ctx.delta(a.delta),
                timeout: Duration::from_secs(a.timeout_secs),
                cors: a.cors,
            };
            let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io { path: "<runtime>".into(), source })?;
            runtime
                .block_on(service::serve(SocketAddr::new(a.host, a.port), config))
                .map_err(|source| CliError::Io { path: format!("{}:{}", a.host, a.port).into(), source })
        }
    }
}

fn fit_parametric_cmd(ctx: &Context, a: FitParametricArgs) -> Result<(), CliError> {
    let grid = ctx.grid(&a.input)?;
    let rows: Vec<FitRow> = grid
        .measurements()
        .into_iter()
        .map(|r| FitRow { m: r.model_params as f64, t: r.iterations as f64, nbr: r.noise_batch_ratio, loss: r.loss })
        .collect();
    let form = match a.form {
        FormArg::L1 => LawForm::L1,
        FormArg::L2 => LawForm::L2,
    };
    let mut options = FitOptions::new(form);
    options.huber_delta = a.huber_delta;
    options.objective = match a.objective {
        ObjectiveArg::Raw => FitObjective::RawLoss,
        ObjectiveArg::Log => FitObjective::LogLoss,
    };
    options.starts = a.starts;
    options.seed = a.seed;
    let defaults = if a.no_filters { FitFilters::NONE } else { FitFilters::default() };
    options.filters = FitFilters {
        min_iterations: a.min_iterations.or(defaults.min_iterations),
        min_nbr: a.min_nbr.or(defaults.min_nbr),
        max_loss: a.max_loss.or(defaults.max_loss),
    };
    let law = fit_parametric(&rows, &options)?;
    emit(a.out.out.as_deref(), &to_json(&LawDocument::new(FittedLaw::Parametric(law))))
}

fn plan_cmd(ctx: &Context, a: PlanArgs) -> Result<(), CliError> {
    let defaults = ctx.defaults();
    let doc = ctx.law(a.budgets.law.as_deref())?;
    let epsilons: Vec<Option<f64>> = if a.epsilon.is_empty() {
        vec![defaults.epsilon]
    } else {
        a.epsilon.iter().map(|&e| (e != f64::INFINITY).then_some(e)).collect()
    };
    let datas = if a.data.is_empty() {
        vec![defaults.data.ok_or_else(|| CliError::invalid("data", "required"))?]
    } else {
        a.data.clone()
    };
    if matches!(a.format, PlanFormat::Json) && epsilons.len() * datas.len() > 1 {
        return Err(CliError::invalid("format", "several budgets need --format table"));
    }
    let compute = match (a.compute.or(defaults.compute), a.saturate) {
        (_, Some(_)) => f64::NAN,
        (Some(c), None) => c,
        (None, None) => return Err(CliError::invalid("compute", "required (or pass --saturate)")),
    };
    let mut reports = Vec::new();
    for &data in &datas {
        for &epsilon in &epsilons {
            let req = PlanRequest {
                compute,
                epsilon,
                delta: ctx.delta(a.budgets.delta),
                data,
                seq_len: ctx.seq_len(a.budgets.seq_len),
                lattice_density: a.budgets.lattice_density,
                near_optimal: a.budgets.near_optimal,
            };
            reports.push(match a.saturate {
                Some(grid) => plan_saturated(&req, grid, a.tolerance, &doc.law)?,
                None => plan(&req, &doc.law)?,
            });
        }
    }
    let text = match a.format {
        PlanFormat::Json => to_json(&reports[0]),
        PlanFormat::Table => table_csv(&reports.iter().map(|r| r.row.clone()).collect::<Vec<_>>()),
    };
    emit(a.out.out.as_deref(), &text)
}

fn sweep_cmd(ctx: &Context, a: SweepArgs) -> Result<(), CliError> {
    let defaults = ctx.defaults();
    let doc = ctx.law(a.budgets.law.as_deref())?;
    let req = SweepRequest {
        axis: a.axis,
        grid: LogGrid { from: a.from, to: a.to, points: a.points },
        compute: a.compute.or(defaults.compute),
        epsilon: a.epsilon.or(defaults.epsilon).filter(|&e| e != f64::INFINITY),
        delta: ctx.delta(a.budgets.delta),
        data: a.data.or(defaults.data),
        seq_len: ctx.seq_len(a.budgets.seq_len),
        lattice_density: a.budgets.lattice_density,
        near_optimal: a.budgets.near_optimal,
        tolerance: a.tolerance,
    };
    let report = sweep_report(&req, &doc.law)?;
    if let Some(dir) = &a.plot_dir {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
        for (name, rows) in sweep_plots(&report) {
            emit(Some(&dir.join(format!("{name}.csv"))), &plot_csv(&rows))?;
        }
    }
    emit(a.out.out.as_deref(), &to_json(&report))
}

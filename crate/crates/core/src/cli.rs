//! The `sit` command line.
//!
//! Every command writes a CSV into `--out` (default `.`) and, with `--plot`,
//! an SVG next to it. Exit status is 0 on success, 1 when the problem is
//! infeasible or a solve fails, 2 on bad usage or configuration.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{load_config, parse_override, ParamConfig};
use crate::error::{Error, Result};
use crate::integrator::{integrate, ControlSchedule, Tolerance, Trajectory};
use crate::model::{equilibria_and_stability, FullState, ModelKind, ReducedState, Stability};
use crate::optimizer::{
    solve_budget_dual_with, solve_direct_with, DirectOptions, OptimizationResult, Status,
};
use crate::params::Params;
use crate::planner::{plan_full_model, plan_release_with, Objective, ProblemSpec};
use crate::report::{
    format_number, render_plot, trajectory_panels, trajectory_table, Marker, Panel, Series, Table,
};
use crate::sweep::{linear_grid, sweep, sweep_table, SweepSetup};

#[derive(Debug, Parser)]
#[command(name = "sit", version, about = "Sterile-male release planning for mosquito populations")]
struct Cli {
    /// TOML parameter file.
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,
    /// Override one parameter, e.g. `--set nu_E=0.25`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Also write SVG figures.
    #[arg(long, global = true)]
    plot: bool,
    /// Relative integration tolerance.
    #[arg(long = "tol-rel", global = true)]
    tol_rel: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Equilibria, R0, U* and eigenvalues.
    Equilibria {
        /// Constant release rate.
        #[arg(long, default_value_t = 0.0)]
        u: f64,
    },
    /// Open-loop simulation from the persistence equilibrium.
    Simulate {
        #[arg(long = "T", default_value_t = 70.0)]
        horizon: f64,
        /// `off`, `const:R` or `pulse:R:PERIOD:WIDTH`.
        #[arg(long, default_value = "off")]
        u: String,
        #[arg(long, value_enum, default_value_t = ModelArg::Reduced)]
        model: ModelArg,
    },
    /// Minimal release reaching the target at T.
    Plan(ProblemArgs),
    /// Direct optimizer on a piecewise-constant grid.
    Optimize {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::L1)]
        objective: ObjectiveArg,
    },
    /// Fewest terminal females under a release budget.
    Dual {
        #[arg(long = "T", default_value_t = 200.0)]
        horizon: f64,
        #[arg(long = "Ubar", default_value_t = 5000.0)]
        u_bar: f64,
        /// Total release budget.
        #[arg(long)]
        budget: f64,
        #[arg(long, value_enum, default_value_t = ModelArg::Reduced)]
        model: ModelArg,
        #[arg(long, default_value_t = 300)]
        grid: usize,
    },
    /// Planner and direct solutions over a grid of `nu_E` values.
    Sweep {
        #[arg(long = "T", default_value_t = 200.0)]
        horizon: f64,
        #[arg(long = "Ubar", default_value_t = 5000.0)]
        u_bar: f64,
        #[arg(long = "eps-frac", default_value_t = 0.25)]
        eps_frac: f64,
        #[arg(long, default_value_t = 300)]
        grid: usize,
        /// Explicit comma-separated values; overrides the range.
        #[arg(long = "nu", value_delimiter = ',')]
        nu: Vec<f64>,
        #[arg(long = "nu-min", default_value_t = 0.005)]
        nu_min: f64,
        #[arg(long = "nu-max", default_value_t = 0.25)]
        nu_max: f64,
        #[arg(long, default_value_t = 3)]
        points: usize,
        /// Leave out the full-model column.
        #[arg(long = "skip-full")]
        skip_full: bool,
    },
    /// Direct solutions of the reduced and full problems side by side.
    CompareModels(ProblemArgs),
}

#[derive(Debug, Args)]
struct ProblemArgs {
    #[arg(long = "T", default_value_t = 200.0)]
    horizon: f64,
    #[arg(long = "Ubar", default_value_t = 5000.0)]
    u_bar: f64,
    /// Target as a fraction of the equilibrium female level.
    #[arg(long = "eps-frac", conflicts_with = "eps")]
    eps_frac: Option<f64>,
    /// Absolute target.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModelArg::Reduced)]
    model: ModelArg,
    #[arg(long, default_value_t = 300)]
    grid: usize,
}

impl ProblemArgs {
    fn spec(&self, p: &Params) -> ProblemSpec {
        let eps = match (self.eps, self.eps_frac) {
            (Some(e), _) => e,
            (None, Some(f)) => f * p.f_bar(),
            (None, None) => 0.25 * p.f_bar(),
        };
        ProblemSpec::new(self.horizon, self.u_bar, eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Reduced,
    Full,
    Both,
}

impl ModelArg {
    fn single(self) -> Result<ModelKind> {
        match self {
            ModelArg::Reduced => Ok(ModelKind::Reduced),
            ModelArg::Full => Ok(ModelKind::Full),
            ModelArg::Both => Err(Error::Config(
                "--model both is only available for simulate".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    L1,
    L2,
}

/// Parses `off`, `const:R` or `pulse:R:PERIOD:WIDTH` into a schedule on
/// `[0, horizon]`.
pub fn parse_control(s: &str, horizon: f64) -> Result<ControlSchedule> {
    let bad = || Error::Config(format!("bad control `{s}`; use off, const:R or pulse:R:PERIOD:WIDTH"));
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
    match parts.as_slice() {
        ["off"] => ControlSchedule::off(horizon),
        ["const", r] => ControlSchedule::constant(num(r)?, horizon),
        ["pulse", r, period, width] => {
            ControlSchedule::pulses(num(r)?, num(period)?, num(width)?, horizon)
        }
        _ => Err(bad()),
    }
}

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidParameter { .. }
        | Error::HypothesisViolation(_)
        | Error::InvalidSchedule(_) => 2,
        _ => 1,
    }
}

/// Runs the command line and returns the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Ctx {
    config: ParamConfig,
    params: Params,
    tol: Tolerance,
    out: PathBuf,
    plot: bool,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, table: &Table, name: &str) -> Result<()> {
        let path = self.path(name);
        table.write(&path)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn plot(&self, panels: &[Panel], name: &str) -> Result<()> {
        if self.plot {
            let path = self.path(name);
            render_plot(panels, &path)?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<()> {
    let overrides = cli
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>>>()?;
    let config = load_config(cli.params.as_deref(), &overrides)?;
    let params = config.params()?;
    let tol = match cli.tol_rel {
        Some(rel) => {
            let t = Tolerance::scaled(rel, params.e_bar().max(params.f_bar()));
            if !(rel >= 1e-12 && rel < 1.0) {
                return Err(Error::Config(format!("--tol-rel {rel} outside [1e-12, 1)")));
            }
            t
        }
        None => Tolerance::for_params(&params),
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| {
        Error::Config(format!("cannot create output directory {}: {e}", cli.out.display()))
    })?;
    let ctx = Ctx {
        config,
        params,
        tol,
        out: cli.out.clone(),
        plot: cli.plot,
    };
    match &cli.command {
        Command::Equilibria { u } => equilibria(&ctx, *u),
        Command::Simulate { horizon, u, model } => simulate(&ctx, *horizon, u, *model),
        Command::Plan(a) => plan(&ctx, a),
        Command::Optimize { problem, objective } => optimize(&ctx, problem, *objective),
        Command::Dual {
            horizon,
            u_bar,
            budget,
            model,
            grid,
        } => dual(&ctx, *horizon, *u_bar, *budget, model.single()?, *grid),
        Command::Sweep {
            horizon,
            u_bar,
            eps_frac,
            grid,
            nu,
            nu_min,
            nu_max,
            points,
            skip_full,
        } => {
            let grid_nu = if nu.is_empty() {
                linear_grid(*nu_min, *nu_max, *points).map_err(|e| Error::Config(e.to_string()))?
            } else {
                nu.clone()
            };
            let setup = SweepSetup {
                horizon: *horizon,
                u_bar: *u_bar,
                eps_frac: *eps_frac,
                grid: *grid,
                skip_full: *skip_full,
            };
            run_sweep(&ctx, &grid_nu, &setup)
        }
        Command::CompareModels(a) => compare_models(&ctx, a),
    }
}

fn equilibria(ctx: &Ctx, u: f64) -> Result<()> {
    let p = &ctx.params;
    println!("R0 = {}", format_number(p.offspring_number()));
    println!("U* = {}", format_number(p.u_star()));
    println!("K = {}", format_number(p.k));
    println!(
        "E_bar = {}  M_bar = {}  F_bar = {}",
        format_number(p.e_bar()),
        format_number(p.m_bar()),
        format_number(p.f_bar())
    );
    println!("equilibria at u = {}:", format_number(u));
    let eqs = equilibria_and_stability(p, u)?;
    let mut table = Table::new(&["E", "M", "F", "Ms", "max_real_eigenvalue", "stable"]);
    for eq in &eqs {
        let s = eq.state;
        let max_re = eq.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let eig: Vec<String> = eq
            .eigenvalues
            .iter()
            .map(|z| {
                if z.im == 0.0 {
                    format_number(z.re)
                } else {
                    format!("{}{:+}i", format_number(z.re), format_number(z.im))
                }
            })
            .collect();
        println!(
            "  (E, M, F, Ms) = ({}, {}, {}, {})  {:?}  eigenvalues [{}]",
            format_number(s.e),
            format_number(s.m),
            format_number(s.f),
            format_number(s.ms),
            eq.stability,
            eig.join(", ")
        );
        let stable = if eq.stability == Stability::Stable { 1.0 } else { 0.0 };
        table.push(vec![s.e, s.m, s.f, s.ms, max_re, stable]);
    }
    ctx.write(&table, "equilibria.csv")
}

fn initial_state(model: ModelKind, p: &Params) -> Vec<f64> {
    match model {
        ModelKind::Reduced => ReducedState::equilibrium(p).to_array().to_vec(),
        ModelKind::Full => FullState::equilibrium(p).to_array().to_vec(),
    }
}

fn simulate_one(ctx: &Ctx, model: ModelKind, u: &ControlSchedule, horizon: f64) -> Result<Trajectory> {
    let p = &ctx.params;
    integrate(model, p, &initial_state(model, p), u, (0.0, horizon), ctx.tol)
}

/// Relative sup-norm gap between the female curves of two runs, sampled
/// every 0.01 day.
pub fn female_gap(reduced: &Trajectory, full: &Trajectory) -> Result<f64> {
    let end = reduced.end().min(full.end());
    let n = (end / 0.01).ceil() as usize;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..=n {
        let t = (i as f64 * 0.01).min(end);
        let a = reduced.females(t)?;
        let b = full.females(t)?;
        num = num.max((a - b).abs());
        den = den.max(b.abs());
    }
    Ok(if den > 0.0 { num / den } else { num })
}

fn simulate(ctx: &Ctx, horizon: f64, u: &str, model: ModelArg) -> Result<()> {
    let u = parse_control(u, horizon)?;
    if model != ModelArg::Both {
        let model = model.single()?;
        let tr = simulate_one(ctx, model, &u, horizon)?;
        println!(
            "F(T) = {}  released = {}",
            format_number(tr.females(horizon)?),
            format_number(u.integral())
        );
        ctx.write(&trajectory_table(&tr)?, "simulate.csv")?;
        return ctx.plot(&trajectory_panels(&tr, "Simulation", None, None)?, "simulate.svg");
    }
    let red = simulate_one(ctx, ModelKind::Reduced, &u, horizon)?;
    let full = simulate_one(ctx, ModelKind::Full, &u, horizon)?;
    let gap = female_gap(&red, &full)?;
    println!("relative sup-norm gap of F (reduced vs full) = {}", format_number(gap));
    let mut table = Table::new(&["t", "F_reduced", "F_full", "u"]);
    for t in crate::report::export_times(&red) {
        table.push(vec![t, red.females(t)?, full.females(t)?, u.eval(t)]);
    }
    ctx.write(&table, "simulate_both.csv")?;
    let pts = |tr: &Trajectory| -> Result<Vec<(f64, f64)>> {
        crate::report::export_times(tr)
            .into_iter()
            .map(|t| Ok((t, tr.females(t)?)))
            .collect()
    };
    let panel = Panel::new("Reduced and full models", "t (days)", "F")
        .series(Series::new("reduced", pts(&red)?))
        .series(Series::new("full", pts(&full)?));
    ctx.plot(&[panel], "simulate_both.svg")
}

fn print_direct(r: &OptimizationResult) {
    let status = match r.status {
        Status::Converged => "converged",
        Status::MaxIterations => "max iterations",
    };
    let target = match r.objective {
        Objective::TerminalBudget(c) => format!("budget = {}", format_number(c)),
        _ => format!("eps = {}", format_number(r.epsilon)),
    };
    println!(
        "{} {:?}: J = {}  F(T) = {}  {target}  lambda = {}  ({status}, {} outer iterations)",
        r.model.name(),
        r.objective,
        format_number(r.j),
        format_number(r.f_terminal),
        format_number(r.lambda),
        r.history.len()
    );
    println!("released = {}  T_opt = {}", format_number(r.released()), format_number(crate::sweep::direct_active_duration(r)));
    if let Some(s) = &r.switching {
        let pattern: Vec<String> = s
            .pattern
            .iter()
            .map(|(c, a, b)| format!("{c:?}[{}, {}]", format_number(*a), format_number(*b)))
            .collect();
        println!(
            "structure: {}  mismatched cells: {}",
            pattern.join(" "),
            s.mismatched.len()
        );
    }
}

fn direct_opts(ctx: &Ctx, grid: usize) -> DirectOptions {
    let mut o = DirectOptions::new(&ctx.params).with_grid(grid);
    o.tol = ctx.tol;
    o
}

fn write_direct(ctx: &Ctx, r: &OptimizationResult, stem: &str) -> Result<()> {
    ctx.write(&trajectory_table(&r.trajectory)?, &format!("{stem}.csv"))?;
    let eps = match r.objective {
        Objective::TerminalBudget(_) => None,
        _ => Some(r.epsilon),
    };
    ctx.plot(
        &trajectory_panels(&r.trajectory, &format!("{} model", r.model.name()), eps, Some(r.u_bar))?,
        &format!("{stem}.svg"),
    )
}

fn plan(ctx: &Ctx, a: &ProblemArgs) -> Result<()> {
    let p = &ctx.params;
    let spec = a.spec(p);
    match a.model.single()? {
        ModelKind::Reduced => {
            let r = plan_release_with(p, &spec, ctx.tol)?;
            println!(
                "J = {}  T_opt = {}  t0 = {}  t1 = {}",
                format_number(r.j),
                format_number(r.active_duration()),
                format_number(r.t0),
                format_number(r.t1)
            );
            println!(
                "F(T) = {}  eps = {}  tau1 = {}  tau2 = {}  iterations = {}",
                format_number(r.f_terminal),
                format_number(spec.epsilon),
                format_number(r.tau1),
                format_number(r.tau2),
                r.iterations
            );
            if r.diagnostics.bound_exceeded {
                eprintln!(
                    "warning: singular rate peaks at {} above U_bar = {}",
                    format_number(r.diagnostics.max_rate),
                    format_number(spec.u_bar)
                );
            }
            ctx.write(&trajectory_table(&r.trajectory)?, "plan.csv")?;
            ctx.plot(
                &trajectory_panels(&r.trajectory, "Planned release", Some(spec.epsilon), Some(spec.u_bar))?,
                "plan.svg",
            )
        }
        ModelKind::Full => {
            eprintln!("note: the full model is planned with the direct optimizer");
            let r = plan_full_model(p, &spec, a.grid)?;
            print_direct(&r);
            write_direct(ctx, &r, "plan")
        }
    }
}

fn optimize(ctx: &Ctx, a: &ProblemArgs, objective: ObjectiveArg) -> Result<()> {
    let p = &ctx.params;
    let objective = match objective {
        ObjectiveArg::L1 => Objective::L1,
        ObjectiveArg::L2 => Objective::L2,
    };
    let spec = a.spec(p).with_model(a.model.single()?).with_objective(objective);
    let r = solve_direct_with(p, &spec, &direct_opts(ctx, a.grid))?;
    print_direct(&r);
    if objective == Objective::L2 {
        println!("u(T) estimate = {}", format_number(r.terminal_rate()));
    }
    write_direct(ctx, &r, "optimize")
}

fn dual(ctx: &Ctx, horizon: f64, u_bar: f64, budget: f64, model: ModelKind, grid: usize) -> Result<()> {
    let r = solve_budget_dual_with(&ctx.params, model, horizon, u_bar, budget, &direct_opts(ctx, grid))?;
    print_direct(&r);
    write_direct(ctx, &r, "dual")
}

fn run_sweep(ctx: &Ctx, nu: &[f64], setup: &SweepSetup) -> Result<()> {
    let rows = sweep(&ctx.config, nu, setup);
    for r in &rows {
        println!(
            "nu_E = {}  J_plan = {}  J_direct_reduced = {}  J_direct_full = {}",
            format_number(r.nu_e),
            format_number(r.j_plan),
            format_number(r.j_direct_reduced),
            format_number(r.j_direct_full)
        );
        for e in &r.errors {
            eprintln!("  nu_E = {}: {e}", format_number(r.nu_e));
        }
    }
    ctx.write(&sweep_table(&rows), "sweep.csv")?;
    if ctx.plot {
        let col = |f: fn(&crate::sweep::SweepRow) -> f64| -> Vec<(f64, f64)> {
            rows.iter().map(|r| (r.nu_e, f(r))).collect()
        };
        let panel = Panel::new("Total release against nu_E", "nu_E", "J")
            .series(Series::new("planner", col(|r| r.j_plan)))
            .series(Series::new("direct reduced", col(|r| r.j_direct_reduced)))
            .series(Series::new("direct full", col(|r| r.j_direct_full)));
        ctx.plot(&[panel], "sweep.svg")?;
    }
    if rows.iter().all(|r| r.j_plan.is_nan() && r.j_direct_reduced.is_nan()) {
        return Err(Error::Infeasible("every sweep row failed".into()));
    }
    Ok(())
}

fn compare_models(ctx: &Ctx, a: &ProblemArgs) -> Result<()> {
    let p = &ctx.params;
    let spec = a.spec(p);
    let opts = direct_opts(ctx, a.grid);
    let red = solve_direct_with(p, &spec.with_model(ModelKind::Reduced), &opts)?;
    let full = solve_direct_with(p, &spec.with_model(ModelKind::Full), &opts)?;
    print_direct(&red);
    print_direct(&full);
    println!(
        "relative difference in J = {}",
        format_number((full.j - red.j) / red.j)
    );
    let h = red.cell_width();
    let mut table = Table::new(&["t", "u_reduced", "u_full", "F_reduced", "F_full"]);
    for i in 0..red.control.len() {
        let t = (i as f64 + 0.5) * h;
        table.push(vec![
            t,
            red.control[i],
            full.control[i],
            red.trajectory.females(t)?,
            full.trajectory.females(t)?,
        ]);
    }
    ctx.write(&table, "compare_models.csv")?;
    if ctx.plot {
        let u = |r: &OptimizationResult| -> Vec<(f64, f64)> {
            r.control
                .iter()
                .enumerate()
                .flat_map(|(i, &v)| [(i as f64 * h, v), ((i + 1) as f64 * h, v)])
                .collect()
        };
        let panel = Panel::new("Optimal releases", "t (days)", "u (per day)")
            .series(Series::new("reduced", u(&red)))
            .series(Series::new("full", u(&full)))
            .marker(Marker::new(format!("U_bar = {}", format_number(spec.u_bar)), spec.u_bar));
        ctx.plot(&[panel], "compare_models.svg")?;
    }
    Ok(())
}

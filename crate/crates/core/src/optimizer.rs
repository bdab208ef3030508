//! Direct optimization over piecewise-constant releases.
//!
//! The terminal constraint `F(T) <= eps` is handled by an augmented
//! Lagrangian; each subproblem is solved by a spectral projected gradient
//! method on the box `[0, U_bar]^N` with a nonmonotone backtracking line
//! search. Gradients come from the adjoint systems.

use nalgebra::{DMatrix, DVector};

use crate::adjoint::{adjoint_solve, forward_from_equilibrium, AdjointTrajectory};
use crate::error::{Error, Result};
use crate::integrator::{ControlSchedule, Tolerance, Trajectory};
use crate::model::ModelKind;
use crate::params::Params;
use crate::planner::{minimal_time, Objective, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectOptions {
    /// Number of control cells.
    pub grid: usize,
    pub tol: Tolerance,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Projected-gradient tolerance relative to the objective gradient
    /// scale of one cell.
    pub pg_tol: f64,
    /// Constraint tolerance relative to `eps`.
    pub feas_tol: f64,
}

impl DirectOptions {
    pub fn new(p: &Params) -> Self {
        DirectOptions {
            grid: 300,
            tol: Tolerance::for_params(p),
            max_outer: 20,
            max_inner: 400,
            pg_tol: 1e-6,
            feas_tol: 1e-6,
        }
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    /// Iteration limits were hit; the last iterate is returned.
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub outer: usize,
    pub inner_iterations: usize,
    pub objective: f64,
    pub f_terminal: f64,
    pub lambda: f64,
    pub rho: f64,
    /// Infinity norm of the scaled projected gradient.
    pub pg_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Off,
    Interior,
    Saturated,
}

/// Cell classification against the switching function.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingReport {
    pub classes: Vec<CellClass>,
    /// Switching function per cell, divided by its range.
    pub sigma: Vec<f64>,
    /// Start of the first cell with positive release.
    pub t0: f64,
    /// End of the last cell with positive release.
    pub t1: f64,
    /// Cells whose class contradicts the sign of `sigma`.
    pub mismatched: Vec<usize>,
    pub trailing_off: bool,
    /// The multiplier is positive, i.e. the terminal constraint binds.
    pub constraint_active: bool,
    /// Maximal runs of equal class as `(class, start, end)`.
    pub pattern: Vec<(CellClass, f64, f64)>,
}

impl SwitchingReport {
    pub fn classes_only(&self) -> Vec<CellClass> {
        self.pattern.iter().map(|p| p.0).collect()
    }

    /// Off, then interior, then off.
    pub fn is_off_singular_off(&self) -> bool {
        self.classes_only() == [CellClass::Off, CellClass::Interior, CellClass::Off]
    }

    pub fn mismatch_fraction(&self) -> f64 {
        self.mismatched.len() as f64 / self.classes.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub model: ModelKind,
    pub objective: Objective,
    pub horizon: f64,
    pub u_bar: f64,
    pub epsilon: f64,
    /// Release rate per cell.
    pub control: Vec<f64>,
    /// Objective value: `int u`, `int u^2` or `F(T)`.
    pub j: f64,
    pub f_terminal: f64,
    /// Multiplier of the terminal constraint (or of the budget).
    pub lambda: f64,
    pub status: Status,
    pub history: Vec<IterationRecord>,
    pub switching: Option<SwitchingReport>,
    pub trajectory: Trajectory,
}

impl OptimizationResult {
    pub fn schedule(&self) -> Result<ControlSchedule> {
        ControlSchedule::piecewise_constant(&self.control, self.horizon)
    }

    pub fn cell_width(&self) -> f64 {
        self.horizon / self.control.len() as f64
    }

    /// Total release `int u`.
    pub fn released(&self) -> f64 {
        self.control.iter().sum::<f64>() * self.cell_width()
    }

    pub fn adjoint(&self, p: &Params, tol: Tolerance) -> Result<AdjointTrajectory> {
        adjoint_solve(p, &self.trajectory, tol)
    }

    /// Release rate at `T`: endpoint value of the cubic whose averages over
    /// the last four cells equal the cell values.
    pub fn terminal_rate(&self) -> f64 {
        let n = self.control.len();
        let k = n.min(4);
        // cells counted backwards from T, in units of the cell width
        let a = DMatrix::from_fn(k, k, |j, m| {
            let (j, m) = (j as f64, m as i32);
            ((j + 1.0).powi(m + 1) - j.powi(m + 1)) / (m + 1) as f64
        });
        let b = DVector::from_fn(k, |j, _| self.control[n - 1 - j]);
        match a.lu().solve(&b) {
            Some(c) => c[0],
            None => self.control[n - 1],
        }
    }
}

/// Objective and gradient of the scaled problem at one control.
struct Eval {
    f_terminal: f64,
    /// `d F(T) / d u_i` per cell.
    grad_f: Vec<f64>,
    trajectory: Trajectory,
}

struct Problem<'a> {
    p: &'a Params,
    model: ModelKind,
    horizon: f64,
    u_bar: f64,
    n: usize,
    tol: Tolerance,
}

impl Problem<'_> {
    fn cell(&self) -> f64 {
        self.horizon / self.n as f64
    }

    fn eval(&self, x: &[f64]) -> Result<Eval> {
        let u: Vec<f64> = x.iter().map(|v| v * self.u_bar).collect();
        let sched = ControlSchedule::piecewise_constant(&u, self.horizon)?;
        let fw = forward_from_equilibrium(self.model, self.p, &sched, self.tol)?;
        let adj = adjoint_solve(self.p, &fw, self.tol)?;
        let grad_f = adj.cell_integrals(&sched.breakpoints())?;
        Ok(Eval {
            f_terminal: fw.terminal()[self.model.female_index()],
            grad_f,
            trajectory: fw,
        })
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of one spectral projected gradient solve.
struct SpgOut {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    pg_norm: f64,
    /// Stopped because no descent direction was left at rounding level.
    stationary: bool,
}

/// Minimizes `fun` over the set described by `project`, stopping when the
/// infinity norm of `P(x - g) - x` is at most `pg_tol`.
fn spg<F, P>(x0: Vec<f64>, mut fun: F, project: P, pg_tol: f64, max_iter: usize) -> Result<SpgOut>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    P: Fn(&mut [f64]),
{
    const MEMORY: usize = 10;
    const GAMMA: f64 = 1e-4;
    let (a_min, a_max) = (1e-12, 1e12);
    let mut x = x0;
    project(&mut x);
    let (mut f, mut g) = fun(&x)?;
    let pg = |x: &[f64], g: &[f64]| {
        let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
        project(&mut y);
        y.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<f64>>()
    };
    let mut pg_norm = inf_norm(&pg(&x, &g));
    let mut alpha = (1.0 / pg_norm.max(1e-300)).clamp(a_min, a_max);
    let mut recent = vec![f];
    let mut it = 0;
    let mut stationary = false;
    while it < max_iter && pg_norm > pg_tol {
        it += 1;
        let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
        project(&mut trial);
        let d: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let gd = dot(&g, &d);
        if gd >= 0.0 {
            log::trace!("spg: no descent direction at iteration {it}");
            stationary = true;
            break;
        }
        let f_ref = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut lam = 1.0;
        let accepted = loop {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + lam * b).collect();
            let (ft, gt) = fun(&xt)?;
            if ft <= f_ref + GAMMA * lam * gd {
                break Some((xt, ft, gt));
            }
            let q = -0.5 * lam * lam * gd / (ft - f - lam * gd);
            lam = if q >= 0.1 * lam && q <= 0.5 * lam { q } else { 0.5 * lam };
            if lam < 1e-12 {
                break None;
            }
        };
        let Some((xt, ft, gt)) = accepted else {
            log::trace!("spg: line search failed at iteration {it}");
            break;
        };
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        alpha = if sy <= 0.0 {
            a_max
        } else {
            (dot(&s, &s) / sy).clamp(a_min, a_max)
        };
        x = xt;
        f = ft;
        g = gt;
        recent.push(f);
        if recent.len() > MEMORY {
            recent.remove(0);
        }
        pg_norm = inf_norm(&pg(&x, &g));
    }
    Ok(SpgOut {
        x,
        value: f,
        iterations: it,
        pg_norm,
        stationary,
    })
}

fn clip_unit(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Projection onto `{x in [0, 1]^n : sum x <= cap}`: `clip(x - theta)` with
/// the smallest `theta >= 0` meeting the budget, found by bisection.
fn project_box_budget(x: &mut [f64], cap: f64) {
    let mass = |th: f64| x.iter().map(|v| (v - th).clamp(0.0, 1.0)).sum::<f64>();
    let theta = if mass(0.0) <= cap {
        0.0
    } else if cap <= 0.0 {
        f64::INFINITY
    } else {
        // mass(lo) > cap >= mass(hi)
        let (mut lo, mut hi) = (0.0, x.iter().copied().fold(0.0, f64::max));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if mass(mid) > cap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    for v in x.iter_mut() {
        *v = if theta.is_finite() { (*v - theta).clamp(0.0, 1.0) } else { 0.0 };
    }
}

fn check_feasible(p: &Params, spec: &ProblemSpec, tol: Tolerance) -> Result<()> {
    let t_min = match spec.model {
        ModelKind::Reduced => match minimal_time(p, spec.u_bar, spec.epsilon) {
            Ok(t) => t,
            Err(Error::NotReached { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        },
        ModelKind::Full => {
            let u = ControlSchedule::constant(spec.u_bar, spec.horizon)?;
            let fw = forward_from_equilibrium(ModelKind::Full, p, &u, tol)?;
            if fw.terminal()[2] <= spec.epsilon {
                spec.horizon
            } else {
                f64::INFINITY
            }
        }
    };
    if t_min > spec.horizon {
        return Err(Error::Infeasible(format!(
            "constant release at U_bar = {} does not bring F to {} within T = {}",
            spec.u_bar, spec.epsilon, spec.horizon
        )));
    }
    Ok(())
}

/// Minimizes `int u` (or `int u^2`) under `F(T) <= eps`, `0 <= u <= U_bar`
/// on `grid` cells.
pub fn solve_direct(p: &Params, spec: &ProblemSpec, grid: usize) -> Result<OptimizationResult> {
    solve_direct_with(p, spec, &DirectOptions::new(p).with_grid(grid))
}

pub fn solve_direct_with(
    p: &Params,
    spec: &ProblemSpec,
    opts: &DirectOptions,
) -> Result<OptimizationResult> {
    spec.validate(p)?;
    let squared = match spec.objective {
        Objective::L1 => false,
        Objective::L2 => true,
        Objective::TerminalBudget(c) => {
            return solve_budget_dual_with(p, spec.model, spec.horizon, spec.u_bar, c, opts)
        }
    };
    if opts.grid < 50 {
        return Err(Error::InvalidParameter {
            name: "grid",
            value: opts.grid as f64,
            reason: "at least 50 cells are required",
        });
    }
    check_feasible(p, spec, opts.tol)?;
    let prob = Problem {
        p,
        model: spec.model,
        horizon: spec.horizon,
        u_bar: spec.u_bar,
        n: opts.grid,
        tol: opts.tol,
    };
    let n = opts.grid;
    let h = prob.cell();
    let eps = spec.epsilon;
    // J_s = J / j_scale with x = u / U_bar; c_s = (F(T) - eps) / eps
    let j_scale = if squared {
        spec.u_bar * spec.u_bar * spec.horizon
    } else {
        spec.u_bar * spec.horizon
    };
    let obj = |x: &[f64]| -> (f64, Vec<f64>) {
        if squared {
            (
                x.iter().map(|v| v * v).sum::<f64>() * h / spec.horizon,
                x.iter().map(|v| 2.0 * v * h / spec.horizon).collect(),
            )
        } else {
            (
                x.iter().sum::<f64>() * h / spec.horizon,
                vec![h / spec.horizon; x.len()],
            )
        }
    };
    let grad_scale = h / spec.horizon;
    let c0 = (p.f_bar() - eps) / eps;
    let mut rho = 1.0 / c0;
    let mut lam = 0.0;
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    let mut status = Status::MaxIterations;
    let mut prev_violation = f64::INFINITY;
    let mut last: Option<Eval> = None;
    for outer in 0..opts.max_outer {
        let inner_tol = (grad_scale * 1e-2 * 0.1f64.powi(outer as i32)).max(opts.pg_tol * grad_scale);
        let out = spg(
            x.clone(),
            |xs| {
                let e = prob.eval(xs)?;
                let c = (e.f_terminal - eps) / eps;
                let (jv, jg) = obj(xs);
                let shifted = (lam + rho * c).max(0.0);
                let val = jv + 0.5 * (shifted * shifted - lam * lam) / rho;
                let g: Vec<f64> = jg
                    .iter()
                    .zip(&e.grad_f)
                    .map(|(a, b)| a + shifted * b * spec.u_bar / eps)
                    .collect();
                Ok((val, g))
            },
            clip_unit,
            inner_tol,
            opts.max_inner,
        )?;
        x = out.x;
        let e = prob.eval(&x)?;
        let c = (e.f_terminal - eps) / eps;
        let violation = c.max(-lam / rho).abs();
        let (jv, jg) = obj(&x);
        let lam_next = (lam + rho * c).max(0.0);
        // projected gradient of the Lagrangian at the updated multiplier
        let lag_grad: Vec<f64> = jg
            .iter()
            .zip(&e.grad_f)
            .map(|(a, b)| a + lam_next * b * spec.u_bar / eps)
            .collect();
        let pg_lag = {
            let mut y: Vec<f64> = x.iter().zip(&lag_grad).map(|(a, b)| a - b).collect();
            clip_unit(&mut y);
            inf_norm(&y.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        history.push(IterationRecord {
            outer,
            inner_iterations: out.iterations,
            objective: jv * j_scale,
            f_terminal: e.f_terminal,
            lambda: lam_next * j_scale / eps,
            rho,
            pg_norm: pg_lag / grad_scale,
        });
        log::debug!(
            "outer {outer}: J = {:.6e}, F(T) = {:.6e}, lambda = {:.4e}, rho = {rho:.2e}, pg = {:.2e}, inner = {}, spg value = {:.6e}",
            jv * j_scale,
            e.f_terminal,
            lam_next * j_scale / eps,
            pg_lag / grad_scale,
            out.iterations,
            out.value
        );
        lam = lam_next;
        last = Some(e);
        if violation <= opts.feas_tol && pg_lag <= opts.pg_tol * grad_scale {
            status = Status::Converged;
            break;
        }
        if violation > 0.25 * prev_violation {
            rho *= 10.0;
        }
        prev_violation = violation;
    }
    let e = last.expect("at least one outer iteration");
    let control: Vec<f64> = x.iter().map(|v| v * spec.u_bar).collect();
    let j = if squared {
        control.iter().map(|u| u * u).sum::<f64>() * h
    } else {
        control.iter().sum::<f64>() * h
    };
    let lambda = lam * j_scale / eps;
    let mut result = OptimizationResult {
        model: spec.model,
        objective: spec.objective,
        horizon: spec.horizon,
        u_bar: spec.u_bar,
        epsilon: eps,
        control,
        j,
        f_terminal: e.f_terminal,
        lambda,
        status,
        history,
        switching: None,
        trajectory: e.trajectory,
    };
    let adj = result.adjoint(p, opts.tol)?;
    result.switching = Some(switching_report(&result, &adj)?);
    if status == Status::MaxIterations {
        log::warn!("direct solve stopped at the iteration limit; returning the last iterate");
    }
    Ok(result)
}

/// Minimizes `F(T)` under the budget `int u <= budget`, `0 <= u <= U_bar`.
pub fn solve_budget_dual(
    p: &Params,
    horizon: f64,
    u_bar: f64,
    budget: f64,
) -> Result<OptimizationResult> {
    solve_budget_dual_with(p, ModelKind::Reduced, horizon, u_bar, budget, &DirectOptions::new(p))
}

pub fn solve_budget_dual_with(
    p: &Params,
    model: ModelKind,
    horizon: f64,
    u_bar: f64,
    budget: f64,
    opts: &DirectOptions,
) -> Result<OptimizationResult> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "budget",
            value: budget,
            reason: "budget must be finite and non-negative",
        });
    }
    if !(horizon > 0.0 && u_bar > 0.0) {
        return Err(Error::InvalidParameter {
            name: "U_bar",
            value: u_bar,
            reason: "horizon and maximal rate must be positive",
        });
    }
    let prob = Problem {
        p,
        model,
        horizon,
        u_bar,
        n: opts.grid,
        tol: opts.tol,
    };
    let n = opts.grid;
    let h = prob.cell();
    let f_scale = p.f_bar();
    // scaled budget: sum x <= budget / (U_bar h)
    let cap = budget / (u_bar * h);
    let project = |x: &mut [f64]| project_box_budget(x, cap);
    let x0 = vec![(cap / n as f64).min(1.0); n];
    // gradient of one cell when a released male removes 1e-3 females
    let grad_scale = u_bar * h * 1e-3 / f_scale;
    let out = spg(
        x0,
        |xs| {
            let e = prob.eval(xs)?;
            Ok((
                e.f_terminal / f_scale,
                e.grad_f.iter().map(|g| g * u_bar / f_scale).collect(),
            ))
        },
        project,
        opts.pg_tol * grad_scale,
        opts.max_inner * opts.max_outer,
    )?;
    let e = prob.eval(&out.x)?;
    let control: Vec<f64> = out.x.iter().map(|v| v * u_bar).collect();
    // budget multiplier from cells strictly inside the box
    let (mut num, mut cnt) = (0.0, 0usize);
    for (i, u) in control.iter().enumerate() {
        if *u > 1e-6 * u_bar && *u < (1.0 - 1e-6) * u_bar {
            num += -e.grad_f[i] / h;
            cnt += 1;
        }
    }
    let lambda = if cnt > 0 { num / cnt as f64 } else { 0.0 };
    let status = if out.pg_norm <= opts.pg_tol * grad_scale || out.stationary {
        Status::Converged
    } else {
        Status::MaxIterations
    };
    Ok(OptimizationResult {
        model,
        objective: Objective::TerminalBudget(budget),
        horizon,
        u_bar,
        epsilon: f64::NAN,
        control,
        j: e.f_terminal,
        f_terminal: e.f_terminal,
        lambda,
        status,
        history: vec![IterationRecord {
            outer: 0,
            inner_iterations: out.iterations,
            objective: e.f_terminal,
            f_terminal: e.f_terminal,
            lambda,
            rho: 0.0,
            pg_norm: out.pg_norm / grad_scale,
        }],
        switching: None,
        trajectory: e.trajectory,
    })
}

fn classify(u: f64, u_bar: f64) -> CellClass {
    if u <= 1e-6 * u_bar {
        CellClass::Off
    } else if u >= (1.0 - 1e-6) * u_bar {
        CellClass::Saturated
    } else {
        CellClass::Interior
    }
}

/// Switching function per cell and its consistency with the control,
/// without failing on mismatches.
pub fn switching_report(
    result: &OptimizationResult,
    adjoint: &AdjointTrajectory,
) -> Result<SwitchingReport> {
    let n = result.control.len();
    let h = result.cell_width();
    let edges: Vec<f64> = (0..=n)
        .map(|i| if i == n { result.horizon } else { i as f64 * h })
        .collect();
    let sens = adjoint.cell_integrals(&edges)?;
    let raw: Vec<f64> = match result.objective {
        Objective::L1 => sens.iter().map(|s| 1.0 + result.lambda * s / h).collect(),
        Objective::L2 => sens
            .iter()
            .zip(&result.control)
            .map(|(s, u)| 2.0 * u + result.lambda * s / h)
            .collect(),
        Objective::TerminalBudget(_) => sens.iter().map(|s| s / h + result.lambda).collect(),
    };
    // normalize by the range, but never below the size of the objective
    // gradient, which is what an all-interior L2 solution drives to zero
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let natural = match result.objective {
        Objective::L1 => 1.0,
        Objective::L2 => 2.0 * result.control.iter().copied().fold(0.0, f64::max),
        Objective::TerminalBudget(_) => sens.iter().fold(0.0, |m: f64, s| m.max((s / h).abs())),
    };
    let range = (hi - lo).max(natural);
    let range = if range > 0.0 { range } else { 1.0 };
    let sigma: Vec<f64> = raw.iter().map(|v| v / range).collect();
    let classes: Vec<CellClass> = result.control.iter().map(|u| classify(*u, result.u_bar)).collect();
    let tol = 1e-3;
    let mismatched = classes
        .iter()
        .zip(&sigma)
        .enumerate()
        .filter(|(_, (c, s))| match c {
            CellClass::Off => **s < -tol,
            CellClass::Interior => s.abs() > tol,
            CellClass::Saturated => **s > tol,
        })
        .map(|(i, _)| i)
        .collect();
    let mut pattern: Vec<(CellClass, f64, f64)> = Vec::new();
    for (i, c) in classes.iter().enumerate() {
        match pattern.last_mut() {
            Some(last) if last.0 == *c => last.2 = edges[i + 1],
            _ => pattern.push((*c, edges[i], edges[i + 1])),
        }
    }
    let first_on = classes.iter().position(|c| *c != CellClass::Off);
    let last_on = classes.iter().rposition(|c| *c != CellClass::Off);
    let (t0, t1) = match (first_on, last_on) {
        (Some(a), Some(b)) => (edges[a], edges[b + 1]),
        _ => (result.horizon, result.horizon),
    };
    Ok(SwitchingReport {
        classes: classes.clone(),
        sigma,
        t0,
        t1,
        mismatched,
        trailing_off: classes.last() == Some(&CellClass::Off),
        constraint_active: result.lambda > 0.0,
        pattern,
    })
}

/// Like [`switching_report`], but fails with the offending cells when the
/// control contradicts the switching function or does not end with an
/// off segment.
pub fn verify_switching(
    result: &OptimizationResult,
    adjoint: &AdjointTrajectory,
) -> Result<SwitchingReport> {
    let report = switching_report(result, adjoint)?;
    if !report.mismatched.is_empty() || !report.trailing_off {
        let mut cells = report.mismatched.clone();
        if !report.trailing_off {
            cells.push(report.classes.len() - 1);
        }
        return Err(Error::StructureMismatch {
            count: cells.len(),
            cells,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_projection_is_exact() {
        let mut x = vec![0.9, 0.5, 0.1, 1.7, -0.3];
        project_box_budget(&mut x, 1.5);
        let s: f64 = x.iter().sum();
        assert!((s - 1.5).abs() < 1e-12);
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        // shift structure: surviving differences are preserved
        assert!(((x[0] - x[1]) - 0.4).abs() < 1e-12);
        let mut y = vec![0.2, 0.3];
        project_box_budget(&mut y, 1.0);
        assert_eq!(y, vec![0.2, 0.3]);
    }

    #[test]
    fn spg_solves_box_quadratic() {
        let target = [0.3, -1.0, 2.0, 0.7];
        let out = spg(
            vec![0.5; 4],
            |x| {
                Ok((
                    x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum(),
                    x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect(),
                ))
            },
            clip_unit,
            1e-12,
            100,
        )
        .unwrap();
        let expect = [0.3, 0.0, 1.0, 0.7];
        for (a, b) in out.x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_budget_releases_nothing() {
        let p = Params::reference(0.05).unwrap();
        let opts = DirectOptions::new(&p).with_grid(50);
        let r = solve_budget_dual_with(&p, ModelKind::Reduced, 100.0, 5000.0, 0.0, &opts).unwrap();
        assert!(r.control.iter().all(|u| *u == 0.0));
        assert!((r.f_terminal - p.f_bar()).abs() < 1e-6 * p.f_bar());
    }
}

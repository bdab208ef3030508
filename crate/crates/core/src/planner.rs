//! Release planning for the reduced model by bisection on the duration of
//! the singular feedback, followed by a time shift that puts the minimum of
//! `F` exactly at the horizon.

use crate::error::{Error, Result};
use crate::integrator::{
    integrate_reduced, locate_event, ControlKind, ControlSchedule, Segment, Tolerance, Trajectory,
};
use crate::model::{ModelKind, ReducedState};
use crate::optimizer::{solve_direct, OptimizationResult};
use crate::params::Params;
use crate::singular::{integrate_closed_loop, ClosedLoopRun};

/// What is minimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Total number of released males, `int u`.
    L1,
    /// `int u^2`.
    L2,
    /// Terminal females `F(T)` under a release budget `int u <= C`.
    TerminalBudget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub horizon: f64,
    pub u_bar: f64,
    pub epsilon: f64,
    pub model: ModelKind,
    pub objective: Objective,
}

impl ProblemSpec {
    /// Reduced-model L1 problem.
    pub fn new(horizon: f64, u_bar: f64, epsilon: f64) -> Self {
        ProblemSpec {
            horizon,
            u_bar,
            epsilon,
            model: ModelKind::Reduced,
            objective: Objective::L1,
        }
    }

    /// `T = 200`, `U_bar = 5000`, `eps = F_bar / 4`.
    pub fn reference(p: &Params) -> Self {
        Self::new(200.0, 5000.0, 0.25 * p.f_bar())
    }

    pub fn with_model(mut self, model: ModelKind) -> Self {
        self.model = model;
        self
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    pub fn validate(&self, p: &Params) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "T",
                value: self.horizon,
                reason: "horizon must be positive",
            });
        }
        if !(self.u_bar > 0.0 && self.u_bar.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "U_bar",
                value: self.u_bar,
                reason: "maximal release rate must be positive",
            });
        }
        if !(self.epsilon > 0.0 && self.epsilon < p.f_bar()) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                value: self.epsilon,
                reason: "target must lie strictly between 0 and F_bar",
            });
        }
        if let Objective::TerminalBudget(c) = self.objective {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "budget",
                    value: c,
                    reason: "budget must be finite and non-negative",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanDiagnostics {
    /// The feedback formula went negative on the selected run.
    pub negative_rate: bool,
    /// The feedback needed more than `U_bar`.
    pub bound_exceeded: bool,
    /// `|F_min - eps|` of the selected run.
    pub residual: f64,
    /// Largest sampled feedback rate.
    pub max_rate: f64,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub schedule: ControlSchedule,
    /// Release starts.
    pub t0: f64,
    /// Release stops.
    pub t1: f64,
    /// Total release `int u`.
    pub j: f64,
    /// `F(T)` from replaying `schedule` open loop.
    pub f_terminal: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub iterations: usize,
    pub diagnostics: PlanDiagnostics,
    /// Open-loop replay of `schedule` on `[0, T]`.
    pub trajectory: Trajectory,
}

impl PlanResult {
    /// Length of the active window `T - t0`.
    pub fn active_duration(&self) -> f64 {
        self.schedule.horizon() - self.t0
    }
}

/// Default cap for the minimum search: four horizons.
fn search_cap(horizon: f64) -> f64 {
    4.0 * horizon.max(1.0)
}

/// Minimum of `F` reached by the closed loop with feedback on `(0, tau1)`.
pub fn psi(p: &Params, tau1: f64, t_cap: f64, tol: Tolerance) -> Result<f64> {
    Ok(integrate_closed_loop(p, tau1, t_cap, tol)?.f_min)
}

/// Optimal release for the reduced L1 problem.
///
/// Bisects `tau1` on `[0, T]` until the closed-loop minimum matches `eps`
/// to `1e-6` relative (at most 60 halvings), then shifts the feedback so
/// the minimum falls at `T`.
pub fn plan_release(p: &Params, spec: &ProblemSpec) -> Result<PlanResult> {
    plan_release_with(p, spec, Tolerance::for_params(p))
}

pub fn plan_release_with(p: &Params, spec: &ProblemSpec, tol: Tolerance) -> Result<PlanResult> {
    spec.validate(p)?;
    if spec.model != ModelKind::Reduced || spec.objective != Objective::L1 {
        return Err(Error::DomainError(
            "the bisection planner handles the reduced L1 problem only".into(),
        ));
    }
    let (horizon, eps) = (spec.horizon, spec.epsilon);
    let cap = search_cap(horizon);
    let at_full = integrate_closed_loop(p, horizon, cap, tol)?;
    if at_full.f_min > eps {
        return Err(Error::InfeasibleHorizon {
            horizon,
            reason: format!(
                "feedback over the whole horizon only reaches F = {:.6e} > eps = {:.6e}",
                at_full.f_min, eps
            ),
        });
    }
    let mut lo = 0.0;
    let mut hi = horizon;
    let mut best: ClosedLoopRun = at_full;
    let mut iterations = 0;
    if (best.f_min - eps).abs() > 1e-6 * eps {
        for _ in 0..60 {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            let run = integrate_closed_loop(p, mid, cap, tol)?;
            let hit = (run.f_min - eps).abs() <= 1e-6 * eps;
            if run.f_min > eps {
                lo = mid;
            } else {
                hi = mid;
            }
            debug_assert!(lo < hi);
            if run.f_min <= eps || hit {
                best = run;
            }
            if hit {
                break;
            }
        }
    }
    log::debug!(
        "bisection: tau1 = {:.6}, tau2 = {:.6}, F_min = {:.6e} after {iterations} halvings",
        best.tau1,
        best.tau2,
        best.f_min
    );
    let diagnostics = PlanDiagnostics {
        negative_rate: best.negative_rate,
        bound_exceeded: best.bound_exceeded(spec.u_bar),
        residual: (best.f_min - eps).abs(),
        max_rate: best.max_rate(),
    };
    if diagnostics.negative_rate {
        return Err(Error::StructureViolation(format!(
            "singular feedback became negative on (0, {})",
            best.tau1
        )));
    }
    if diagnostics.bound_exceeded {
        log::warn!(
            "singular feedback peaks at {:.1} > U_bar = {:.1}; the bound is not large enough for an interior arc",
            diagnostics.max_rate,
            spec.u_bar
        );
    }
    let schedule = match assemble_control(&best, horizon) {
        Ok(s) => s,
        Err(Error::ShiftOverflow { tau2, horizon }) => {
            return Err(Error::InfeasibleHorizon {
                horizon,
                reason: format!("minimum of F occurs at tau2 = {tau2:.3} after the horizon"),
            })
        }
        Err(e) => return Err(e),
    };
    let t0 = horizon - best.tau2;
    let t1 = (t0 + best.tau1).min(horizon);
    let trajectory = integrate_reduced(
        p,
        ReducedState::equilibrium(p),
        &schedule,
        (0.0, horizon),
        tol,
    )?;
    let f_terminal = trajectory.terminal()[0];
    Ok(PlanResult {
        j: schedule.integral(),
        schedule,
        t0,
        t1,
        f_terminal,
        tau1: best.tau1,
        tau2: best.tau2,
        iterations,
        diagnostics,
        trajectory,
    })
}

/// Shifts the feedback of `run` so that its minimum lands at `horizon`:
/// no release on `(0, T - tau2)`, then the recorded feedback, then nothing.
pub fn assemble_control(run: &ClosedLoopRun, horizon: f64) -> Result<ControlSchedule> {
    if run.tau2 > horizon {
        return Err(Error::ShiftOverflow {
            tau2: run.tau2,
            horizon,
        });
    }
    let t0 = horizon - run.tau2;
    let mut segs = Vec::new();
    if t0 > 0.0 {
        segs.push(Segment::new(0.0, t0, ControlKind::Off));
    }
    let mut t1 = t0 + run.tau1;
    if run.tau1 > 0.0 {
        if t1 > horizon {
            t1 = horizon;
        }
        let times = run.u_times.iter().map(|s| t0 + s).collect();
        segs.push(Segment::new(
            t0,
            t1,
            ControlKind::Sampled {
                times,
                rates: run.u_series.clone(),
            },
        ));
    }
    if horizon > t1 {
        segs.push(Segment::new(t1, horizon, ControlKind::Off));
    }
    ControlSchedule::new(segs)
}

/// Plans a release for the full model with the direct optimizer on `grid`
/// cells. The bisection planner relies on structure established for the
/// reduced model only.
pub fn plan_full_model(p: &Params, spec: &ProblemSpec, grid: usize) -> Result<OptimizationResult> {
    log::warn!(
        "full-model planning uses the direct optimizer; the bisection planner applies to the reduced model"
    );
    solve_direct(p, &spec.with_model(ModelKind::Full), grid)
}

/// First time at which constant release `u_bar` from the persistence
/// equilibrium brings `F` down to `eps`.
pub fn minimal_time(p: &Params, u_bar: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: eps,
            reason: "target must be positive",
        });
    }
    if eps >= p.f_bar() {
        return Ok(0.0);
    }
    let cap = 100.0 / p.delta_f * (p.f_bar() / eps).ln();
    let u = ControlSchedule::constant(u_bar, cap)?;
    let s0 = ReducedState::equilibrium(p).to_array();
    let ev = locate_event(
        ModelKind::Reduced,
        p,
        &s0,
        &u,
        |_, y| y[0] - eps,
        (0.0, cap),
        Tolerance::for_params(p),
    )?;
    match ev {
        Some((t, _)) => Ok(t),
        None => Err(Error::NotReached { target: eps, cap }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::singular::integrate_closed_loop;

    fn reference() -> Params {
        Params::reference(0.05).unwrap()
    }

    #[test]
    fn psi_at_zero_is_equilibrium() {
        let p = reference();
        assert_eq!(psi(&p, 0.0, 100.0, Tolerance::for_params(&p)).unwrap(), p.f_bar());
    }

    #[test]
    fn unshifted_when_minimum_at_horizon() {
        let p = reference();
        let run = integrate_closed_loop(&p, 40.0, 800.0, Tolerance::for_params(&p)).unwrap();
        let u = assemble_control(&run, run.tau2).unwrap();
        assert_eq!(u.segments()[0].start, 0.0);
        assert!(matches!(u.segments()[0].kind, ControlKind::Sampled { .. }));
        let rel = (u.integral() - run.released()).abs() / run.released();
        assert!(rel <= 1e-9);
        assert!(matches!(
            assemble_control(&run, run.tau2 - 1.0),
            Err(Error::ShiftOverflow { .. })
        ));
    }

    #[test]
    fn shifted_schedule_is_off_outside_window() {
        let p = reference();
        let run = integrate_closed_loop(&p, 40.0, 800.0, Tolerance::for_params(&p)).unwrap();
        let horizon = run.tau2 + 25.0;
        let u = assemble_control(&run, horizon).unwrap();
        let (t0, t1) = (25.0, 25.0 + run.tau1);
        assert_eq!(u.eval(0.5 * t0), 0.0);
        assert_eq!(u.eval(t1 + 0.5 * (horizon - t1)), 0.0);
        let s = 10.005;
        let expect = run.u_series[1000] + 0.5 * (run.u_series[1001] - run.u_series[1000]);
        assert!((u.eval(t0 + s) - expect).abs() < 1e-9 * expect.max(1.0));
    }

    #[test]
    fn minimal_time_edge_cases() {
        let p = reference();
        assert_eq!(minimal_time(&p, 5000.0, p.f_bar()).unwrap(), 0.0);
        let eps = 0.25 * p.f_bar();
        let times: Vec<f64> = [20_000.0, 40_000.0, 80_000.0]
            .iter()
            .map(|&u| minimal_time(&p, u, eps).unwrap())
            .collect();
        assert!(times[0] > times[1] && times[1] > times[2]);
    }

    #[test]
    fn minimal_time_blocked_below_critical_rate() {
        let p = reference();
        let u = 0.5 * p.u_star();
        let eggs = crate::model::positive_equilibrium_eggs(&p, u);
        let big = eggs[1];
        let m = (1.0 - p.nu) * p.nu_e * big / p.delta_m;
        let ms = u / p.delta_s;
        let f_eq = p.nu * p.nu_e * big * m / (p.delta_f * (m + p.gamma_s * ms));
        assert!(matches!(
            minimal_time(&p, u, 0.5 * f_eq),
            Err(Error::NotReached { .. })
        ));
    }
}

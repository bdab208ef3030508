//! Singular-arc feedback law and the closed-loop runs that drive the
//! release planner.

use crate::error::{Error, Result};
use crate::integrator::{
    dopri5, invariant_checker, ControlKind, ControlSchedule, Crossing, Segment, Tolerance,
    Trajectory,
};
use crate::model::{f_partials, female_growth, ModelKind, ReducedState};
use crate::params::Params;

/// Sampling step of the recorded feedback rate, in days.
pub const SAMPLE_STEP: f64 = 0.01;

/// Release rate that keeps the switching function identically zero, as a
/// feedback of the reduced state.
pub fn singular_rate(f: f64, ms: f64, p: &Params) -> Result<f64> {
    let d = f_partials(f, ms, p)?;
    Ok((d.df_dms * d.df_df + p.delta_s * ms * d.d2f_dms2 - d.f * d.d2f_dms_df) / d.d2f_dms2)
}

/// Feedback rate clamped at zero; zero when no females are left.
fn clamped_rate(f: f64, ms: f64, p: &Params) -> f64 {
    if f > 0.0 {
        singular_rate(f, ms, p).map_or(0.0, |u| u.max(0.0))
    } else {
        0.0
    }
}

/// Reduced model started at the persistence equilibrium, driven by the
/// singular feedback on `(0, tau1)` and left alone afterwards.
#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub tau1: f64,
    pub trajectory: Trajectory,
    /// Sample times on `[0, tau1]`, spaced at most [`SAMPLE_STEP`].
    pub u_times: Vec<f64>,
    /// Feedback rate at `u_times`, clamped at zero.
    pub u_series: Vec<f64>,
    /// Time of the first local minimum of `F`.
    pub tau2: f64,
    pub f_min: f64,
    /// The unclamped feedback formula went negative somewhere on `[0, tau1]`.
    pub negative_rate: bool,
}

impl ClosedLoopRun {
    /// Total release `int_0^tau1 u` by the trapezoid rule on the samples.
    pub fn released(&self) -> f64 {
        self.u_times
            .windows(2)
            .zip(self.u_series.windows(2))
            .map(|(t, u)| 0.5 * (t[1] - t[0]) * (u[0] + u[1]))
            .sum()
    }

    pub fn max_rate(&self) -> f64 {
        self.u_series.iter().copied().fold(0.0, f64::max)
    }

    /// The feedback needed more than `u_bar` at some sample.
    pub fn bound_exceeded(&self, u_bar: f64) -> bool {
        self.max_rate() > u_bar
    }

    /// Whether `F' <= tol` on mesh points before `tau2` and `F' >= -tol`
    /// after it.
    pub fn is_unimodal(&self, p: &Params, tol: f64) -> bool {
        let tr = &self.trajectory;
        (0..tr.mesh().len()).all(|i| {
            let t = tr.mesh()[i];
            let y = tr.mesh_state(i);
            let fp = female_growth(y[0], y[1], p);
            if t < self.tau2 {
                fp <= tol
            } else if t > self.tau2 {
                fp >= -tol
            } else {
                true
            }
        })
    }
}

fn sample_grid(tau1: f64) -> Vec<f64> {
    let n = ((tau1 / SAMPLE_STEP).ceil() as usize).max(1);
    let mut g: Vec<f64> = (0..n).map(|i| tau1 * i as f64 / n as f64).collect();
    g.push(tau1);
    g
}

fn run_once(p: &Params, tau1: f64, t_cap: f64, tol: Tolerance) -> Result<Trajectory> {
    let y0 = ReducedState::equilibrium(p).to_array();
    let knots: Vec<f64> = if tau1 > 0.0 && tau1 < t_cap {
        vec![0.0, tau1, t_cap]
    } else if tau1 > 0.0 {
        vec![0.0, t_cap]
    } else {
        vec![0.0, 0.0, t_cap]
    };
    let ds = p.delta_s;
    let dense = dopri5(
        |k, _t, y: &[f64; 2]| {
            let (f, ms) = (y[0].max(0.0), y[1].max(0.0));
            let u = if k == 0 { clamped_rate(f, ms, p) } else { 0.0 };
            [female_growth(f, ms, p), u - ds * y[1]]
        },
        invariant_checker(ModelKind::Reduced, p, &y0),
        y0,
        &knots,
        tol,
    )?;
    // placeholder schedule; replaced by the sampled feedback below
    let control = ControlSchedule::off(t_cap)?;
    Ok(Trajectory::from_parts(ModelKind::Reduced, dense, control))
}

/// Runs the closed loop with feedback on `(0, tau1)` and locates the first
/// minimum of `F`. The search horizon `t_cap` is doubled up to four times
/// when `F` is still decreasing at the cap.
pub fn integrate_closed_loop(
    p: &Params,
    tau1: f64,
    t_cap: f64,
    tol: Tolerance,
) -> Result<ClosedLoopRun> {
    if !(tau1 >= 0.0 && tau1.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "tau1",
            value: tau1,
            reason: "feedback duration must be finite and non-negative",
        });
    }
    if !(t_cap >= tau1 && t_cap > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_cap",
            value: t_cap,
            reason: "search cap must be positive and at least tau1",
        });
    }
    let f_bar = p.f_bar();
    let band = 1e-12 * f_bar;
    let mut cap = t_cap;
    let max_cap = 16.0 * t_cap;
    loop {
        let raw = run_once(p, tau1, cap, tol)?;
        let minimum = if tau1 == 0.0 {
            Some((0.0, raw.mesh_state(0).to_vec()))
        } else {
            raw.find_crossing(|_, y| female_growth(y[0], y[1], p), Crossing::Rising, band)?
        };
        match minimum {
            Some((tau2, y)) => {
                let u_times = sample_grid(tau1);
                let mut negative_rate = false;
                let mut u_series = Vec::with_capacity(u_times.len());
                for &t in &u_times {
                    let s = raw.sample(t)?;
                    let u = if s[0] > 0.0 { singular_rate(s[0], s[1], p)? } else { 0.0 };
                    negative_rate |= u < 0.0;
                    u_series.push(u.max(0.0));
                }
                let control = feedback_schedule(&u_times, &u_series, tau1, cap)?;
                let trajectory = Trajectory::from_parts(ModelKind::Reduced, raw.dense().clone(), control);
                return Ok(ClosedLoopRun {
                    tau1,
                    trajectory,
                    u_times,
                    u_series,
                    tau2,
                    f_min: y[0],
                    negative_rate,
                });
            }
            None if cap < max_cap => {
                log::debug!("no minimum of F before t = {cap}; doubling the search horizon");
                cap *= 2.0;
            }
            None => return Err(Error::NoMinimum { cap }),
        }
    }
}

/// Sampled feedback on `[0, tau1]` followed by no release up to `horizon`.
fn feedback_schedule(times: &[f64], rates: &[f64], tau1: f64, horizon: f64) -> Result<ControlSchedule> {
    let mut segs = Vec::new();
    if tau1 > 0.0 {
        segs.push(Segment::new(
            0.0,
            tau1,
            ControlKind::Sampled {
                times: times.to_vec(),
                rates: rates.to_vec(),
            },
        ));
    }
    if horizon > tau1 {
        segs.push(Segment::new(tau1, horizon, ControlKind::Off));
    }
    ControlSchedule::new(segs)
}

/// Reduced model under the singular feedback for all of `[0, t_end]`,
/// started at the persistence equilibrium.
pub fn integrate_feedback(p: &Params, t_end: f64, tol: Tolerance) -> Result<Trajectory> {
    let raw = run_once(p, t_end, t_end, tol)?;
    let times = sample_grid(t_end);
    let mut rates = Vec::with_capacity(times.len());
    for &t in &times {
        let s = raw.sample(t)?;
        rates.push(clamped_rate(s[0], s[1], p));
    }
    let control = feedback_schedule(&times, &rates, t_end, t_end)?;
    Ok(Trajectory::from_parts(ModelKind::Reduced, raw.dense().clone(), control))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Params {
        Params::reference(0.05).unwrap()
    }

    #[test]
    fn no_feedback_keeps_equilibrium() {
        let p = reference();
        let run = integrate_closed_loop(&p, 0.0, 100.0, Tolerance::for_params(&p)).unwrap();
        assert_eq!(run.tau2, 0.0);
        assert_eq!(run.f_min, p.f_bar());
        assert_eq!(run.released(), 0.0);
    }

    #[test]
    fn longer_feedback_reaches_lower() {
        let p = reference();
        let tol = Tolerance::for_params(&p);
        let a = integrate_closed_loop(&p, 30.0, 800.0, tol).unwrap();
        let b = integrate_closed_loop(&p, 60.0, 800.0, tol).unwrap();
        assert!(b.f_min < a.f_min && a.f_min < p.f_bar());
        assert!(a.tau2 >= a.tau1 && b.tau2 >= b.tau1);
        assert!(!a.negative_rate && !b.negative_rate);
        let fp = female_growth(b.f_min, b.trajectory.sample(b.tau2).unwrap()[1], &p);
        assert!(fp.abs() <= 1e-10 * p.f_bar(), "F'(tau2) = {fp}");
        assert!(b.is_unimodal(&p, 1e-9 * p.f_bar()));
    }

    #[test]
    fn rate_at_equilibrium_is_positive() {
        let p = reference();
        let u = singular_rate(p.f_bar(), 0.0, &p).unwrap();
        assert!(u > 0.0 && u < p.u_star());
    }

    #[test]
    fn permanent_feedback_drives_females_down() {
        let p = reference();
        let tr = integrate_feedback(&p, 300.0, Tolerance::for_params(&p)).unwrap();
        let fs = tr.females_at_mesh();
        assert!(fs.windows(2).all(|w| w[1] <= w[0] + 1e-9 * p.f_bar()));
        assert!(*fs.last().unwrap() < 0.25 * p.f_bar());
    }
}

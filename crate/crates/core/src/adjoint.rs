//! Adjoint systems of both models for the terminal female level `F(T)`.
//!
//! For the reduced model the adjoint `(Q, R)` solves
//!
//! ```text
//! -Q' = f_F Q,          Q(T) = 1
//! -R' = f_Ms Q - delta_s R,   R(T) = 0
//! ```
//!
//! and `R(t)` is the sensitivity of `F(T)` to a release at time `t`. For the
//! full model `(P, Q, R, S)` solves `-y' = J^T y` with `y(T) = (0, 0, 1, 0)`
//! and `S` plays that role.
//!
//! Both systems are integrated backwards in time together with a running
//! integral of the release sensitivity, so the integral over any interval
//! whose ends are mesh points is exact up to the integration tolerance.

use crate::error::{Error, Result};
use crate::integrator::{dopri5, ControlSchedule, DenseOutput, Tolerance, Trajectory};
use crate::model::{f_partials, jacobian_full, FullState, ModelKind};
use crate::params::Params;

/// Dense adjoint on `[0, T]`.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    model: ModelKind,
    horizon: f64,
    /// Stored in reversed time `s = T - t`; last component is
    /// `W(s) = int_{T-s}^T (release sensitivity)`.
    dense: DenseOutput,
}

impl AdjointTrajectory {
    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Adjoint components at `t`: `(Q, R)` or `(P, Q, R, S)`.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        let mut y = self.dense.sample(self.horizon - t)?;
        y.pop();
        Ok(y)
    }

    /// Terminal values as stored.
    pub fn terminal(&self) -> Vec<f64> {
        let mut y = self.dense.state_at_mesh(0).to_vec();
        y.pop();
        y
    }

    /// Sensitivity of `F(T)` to a unit release rate at `t` (`R` or `S`).
    pub fn release_sensitivity(&self, t: f64) -> Result<f64> {
        let y = self.sample(t)?;
        Ok(*y.last().unwrap())
    }

    fn running(&self, t: f64) -> Result<f64> {
        let y = self.dense.sample(self.horizon - t)?;
        Ok(*y.last().unwrap())
    }

    /// `int_a^b` of the release sensitivity.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.running(a)? - self.running(b)?)
    }

    /// Integrals of the release sensitivity over consecutive intervals
    /// `[edges[i], edges[i+1]]`.
    pub fn cell_integrals(&self, edges: &[f64]) -> Result<Vec<f64>> {
        let w: Vec<f64> = edges.iter().map(|&t| self.running(t)).collect::<Result<_>>()?;
        Ok(w.windows(2).map(|p| p[0] - p[1]).collect())
    }

    /// Accepted mesh in forward time, increasing.
    pub fn mesh(&self) -> Vec<f64> {
        self.dense.times().iter().rev().map(|s| self.horizon - s).collect()
    }
}

/// Integrates the adjoint of `forward` backwards from its end time.
pub fn adjoint_solve(p: &Params, forward: &Trajectory, tol: Tolerance) -> Result<AdjointTrajectory> {
    if forward.start() != 0.0 {
        return Err(Error::DomainError(format!(
            "forward trajectory must start at 0, starts at {}",
            forward.start()
        )));
    }
    let horizon = forward.end();
    let knots = reversed_knots(forward.control(), horizon);
    let tol = Tolerance::new(tol.rel, 1e-12);
    let no_check = |_: f64, _: &[f64; 3]| Ok(());
    let dense = match forward.model() {
        ModelKind::Reduced => {
            let mut failure: Option<Error> = None;
            let d = dopri5(
                |_, s, y: &[f64; 3]| {
                    let x = forward.sample(horizon - s).unwrap_or_else(|_| vec![0.0, 0.0]);
                    let d = match f_partials(x[0], x[1].max(0.0), p) {
                        Ok(d) => d,
                        Err(e) => {
                            failure.get_or_insert(e);
                            return [0.0; 3];
                        }
                    };
                    [d.df_df * y[0], d.df_dms * y[0] - p.delta_s * y[1], y[1]]
                },
                no_check,
                [1.0, 0.0, 0.0],
                &knots,
                tol,
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            d
        }
        ModelKind::Full => dopri5(
            |_, s, y: &[f64; 5]| {
                let x = forward.sample(horizon - s).unwrap_or_else(|_| vec![0.0; 4]);
                let st = FullState::new(x[0].max(0.0), x[1].max(0.0), x[2].max(0.0), x[3].max(0.0));
                let j = jacobian_full(st, p);
                let mut out = [0.0; 5];
                for r in 0..4 {
                    out[r] = (0..4).map(|c| j[(c, r)] * y[c]).sum();
                }
                out[4] = y[3];
                out
            },
            |_: f64, _: &[f64; 5]| Ok(()),
            [0.0, 0.0, 1.0, 0.0, 0.0],
            &knots,
            tol,
        )?,
    };
    Ok(AdjointTrajectory {
        model: forward.model(),
        horizon,
        dense,
    })
}

fn reversed_knots(u: &ControlSchedule, horizon: f64) -> Vec<f64> {
    let mut k: Vec<f64> = u
        .breakpoints()
        .into_iter()
        .filter(|&t| t < horizon)
        .map(|t| horizon - t)
        .collect();
    k.push(0.0);
    k.reverse();
    k.dedup();
    if k.len() == 1 {
        k.push(horizon);
    }
    k
}

/// Gradient of `F(T)` with respect to the cell values of a piecewise
/// constant release on `u_grid.len()` equal cells of `[0, T]`, started at
/// the persistence equilibrium. Cell `i` gets the integral of the release
/// sensitivity over that cell. Also returns `F(T)`.
pub fn gradient_terminal(
    model: ModelKind,
    p: &Params,
    u_grid: &[f64],
    horizon: f64,
    tol: Tolerance,
) -> Result<(f64, Vec<f64>)> {
    let u = ControlSchedule::piecewise_constant(u_grid, horizon)?;
    let forward = forward_from_equilibrium(model, p, &u, tol)?;
    let adj = adjoint_solve(p, &forward, tol)?;
    let grad = adj.cell_integrals(&u.breakpoints())?;
    Ok((forward.terminal()[model.female_index()], grad))
}

/// Forward solve on `[0, T]` from the persistence equilibrium.
pub fn forward_from_equilibrium(
    model: ModelKind,
    p: &Params,
    u: &ControlSchedule,
    tol: Tolerance,
) -> Result<Trajectory> {
    let s0: Vec<f64> = match model {
        ModelKind::Reduced => vec![p.f_bar(), 0.0],
        ModelKind::Full => FullState::equilibrium(p).to_array().to_vec(),
    };
    crate::integrator::integrate(model, p, &s0, u, (0.0, u.horizon()), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> Params {
        Params::reference(0.05).unwrap()
    }

    #[test]
    fn reduced_adjoint_at_equilibrium_is_exponential() {
        let p = reference();
        let horizon = 50.0;
        let u = ControlSchedule::off(horizon).unwrap();
        let tol = Tolerance::for_params(&p);
        let fw = forward_from_equilibrium(ModelKind::Reduced, &p, &u, tol).unwrap();
        let adj = adjoint_solve(&p, &fw, tol).unwrap();
        assert_eq!(adj.terminal(), vec![1.0, 0.0]);
        let rate = p.delta_f * (1.0 / p.offspring_number() - 1.0);
        for t in [0.0, 10.0, 42.0] {
            assert_relative_eq!(
                adj.sample(t).unwrap()[0],
                (rate * (horizon - t)).exp(),
                max_relative = 1e-7
            );
        }
        for t in [0.0, 10.0, 49.9] {
            assert!(adj.release_sensitivity(t).unwrap() < 0.0);
        }
    }

    #[test]
    fn full_adjoint_terminal_and_sign() {
        let p = reference();
        let u = ControlSchedule::constant(2000.0, 20.0).unwrap();
        let tol = Tolerance::for_params(&p);
        let fw = forward_from_equilibrium(ModelKind::Full, &p, &u, tol).unwrap();
        let adj = adjoint_solve(&p, &fw, tol).unwrap();
        assert_eq!(adj.terminal(), vec![0.0, 0.0, 1.0, 0.0]);
        assert!(adj.release_sensitivity(19.0).unwrap() < 0.0);
    }

    #[test]
    fn cell_gradient_matches_central_difference() {
        let p = reference();
        let tol = Tolerance::new(1e-12, 1e-12 * p.e_bar());
        let n = 20;
        let horizon = 40.0;
        let base: Vec<f64> = (0..n).map(|i| 1000.0 + 100.0 * i as f64).collect();
        for model in [ModelKind::Reduced, ModelKind::Full] {
            let (_, g) = gradient_terminal(model, &p, &base, horizon, tol).unwrap();
            for &i in &[0usize, 7, 19] {
                let h = 5.0;
                let mut up = base.clone();
                up[i] += h;
                let mut dn = base.clone();
                dn[i] -= h;
                let fp = gradient_terminal(model, &p, &up, horizon, tol).unwrap().0;
                let fm = gradient_terminal(model, &p, &dn, horizon, tol).unwrap().0;
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    ((g[i] - fd) / fd).abs() < 1e-4,
                    "{model:?} cell {i}: adjoint {} vs fd {fd}",
                    g[i]
                );
            }
        }
    }
}

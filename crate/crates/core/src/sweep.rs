//! Parameter sweeps over the egg-hatching rate `nu_E`.
//!
//! Each row solves the reduced problem with the bisection planner and with
//! the direct optimizer, and the full problem with the direct optimizer.
//! Rows run in parallel. A failing method leaves `NaN` in its columns and
//! the message in [`SweepRow::errors`].

use rayon::prelude::*;

use crate::config::ParamConfig;
use crate::error::Result;
use crate::model::ModelKind;
use crate::optimizer::{solve_direct_with, DirectOptions, OptimizationResult};
use crate::planner::{plan_release, ProblemSpec};
use crate::report::Table;

pub const SWEEP_HEADER: [&str; 7] = [
    "nu_E",
    "J_plan",
    "T_opt_plan",
    "J_direct_reduced",
    "T_opt_direct_reduced",
    "J_direct_full",
    "T_opt_direct_full",
];

/// Horizon, bound and target as a fraction of `F_bar`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSetup {
    pub horizon: f64,
    pub u_bar: f64,
    pub eps_frac: f64,
    pub grid: usize,
    /// Skip the full-model column (its solves dominate the run time).
    pub skip_full: bool,
}

impl Default for SweepSetup {
    fn default() -> Self {
        SweepSetup {
            horizon: 200.0,
            u_bar: 5000.0,
            eps_frac: 0.25,
            grid: 300,
            skip_full: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub nu_e: f64,
    pub j_plan: f64,
    pub t_opt_plan: f64,
    pub j_direct_reduced: f64,
    pub t_opt_direct_reduced: f64,
    pub j_direct_full: f64,
    pub t_opt_direct_full: f64,
    pub errors: Vec<String>,
}

impl SweepRow {
    pub fn values(&self) -> Vec<f64> {
        vec![
            self.nu_e,
            self.j_plan,
            self.t_opt_plan,
            self.j_direct_reduced,
            self.t_opt_direct_reduced,
            self.j_direct_full,
            self.t_opt_direct_full,
        ]
    }
}

/// `T - t0` with `t0` the left edge of the first cell carrying release.
pub fn direct_active_duration(r: &OptimizationResult) -> f64 {
    let h = r.cell_width();
    let first = r.control.iter().position(|&u| u > 1e-6 * r.u_bar);
    match first {
        Some(i) => r.horizon - i as f64 * h,
        None => 0.0,
    }
}

fn run_row(base: &ParamConfig, nu_e: f64, setup: &SweepSetup) -> SweepRow {
    let mut row = SweepRow {
        nu_e,
        j_plan: f64::NAN,
        t_opt_plan: f64::NAN,
        j_direct_reduced: f64::NAN,
        t_opt_direct_reduced: f64::NAN,
        j_direct_full: f64::NAN,
        t_opt_direct_full: f64::NAN,
        errors: Vec::new(),
    };
    let p = match base.with_nu_e(nu_e).params() {
        Ok(p) => p,
        Err(e) => {
            row.errors.push(format!("params: {e}"));
            return row;
        }
    };
    let spec = ProblemSpec::new(setup.horizon, setup.u_bar, setup.eps_frac * p.f_bar());
    match plan_release(&p, &spec) {
        Ok(r) => {
            row.j_plan = r.j;
            row.t_opt_plan = r.active_duration();
        }
        Err(e) => row.errors.push(format!("plan: {e}")),
    }
    let opts = DirectOptions::new(&p).with_grid(setup.grid);
    let mut models = vec![ModelKind::Reduced];
    if !setup.skip_full {
        models.push(ModelKind::Full);
    }
    for model in models {
        match solve_direct_with(&p, &spec.with_model(model), &opts) {
            Ok(r) => {
                let (j, t) = (r.j, direct_active_duration(&r));
                match model {
                    ModelKind::Reduced => {
                        row.j_direct_reduced = j;
                        row.t_opt_direct_reduced = t;
                    }
                    ModelKind::Full => {
                        row.j_direct_full = j;
                        row.t_opt_direct_full = t;
                    }
                }
            }
            Err(e) => row.errors.push(format!("direct {}: {e}", model.name())),
        }
    }
    row
}

/// Solves every row of the grid; never fails as a whole.
pub fn sweep(base: &ParamConfig, nu_grid: &[f64], setup: &SweepSetup) -> Vec<SweepRow> {
    nu_grid
        .par_iter()
        .map(|&nu| run_row(base, nu, setup))
        .collect()
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&SWEEP_HEADER);
    for r in rows {
        t.push(r.values());
    }
    t
}

/// `n` points spread evenly over `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(lo <= hi) {
        return Err(crate::error::Error::DomainError(format!(
            "bad grid [{lo}, {hi}] with {n} points"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failing_rows_do_not_stop_the_sweep() {
        let setup = SweepSetup {
            horizon: 60.0,
            skip_full: true,
            grid: 60,
            ..Default::default()
        };
        let rows = sweep(&ParamConfig::default(), &[-1.0, 0.05], &setup);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].j_plan.is_nan() && !rows[0].errors.is_empty());
        // T = 60 is too short at the reference rates
        assert!(rows[1].j_plan.is_nan());
        assert!(rows[1].errors.iter().any(|e| e.starts_with("plan")));
        let csv = sweep_table(&rows).to_csv().unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("nan"));
    }

    #[test]
    fn grid_endpoints() {
        let g = linear_grid(0.005, 0.25, 3).unwrap();
        assert_eq!(g, vec![0.005, 0.1275, 0.25]);
        assert!(linear_grid(1.0, 0.0, 3).is_err());
    }
}

//! Release planning for the sterile insect technique.
//!
//! Two compartmental mosquito models are provided: a full one with eggs,
//! wild males, fertilized females and sterile males, and a reduced one
//! keeping only the females and the sterile males. On top of them sit
//!
//! * an adaptive Dormand-Prince integrator with dense output and event
//!   location ([`integrator`]),
//! * the singular release feedback of the optimal arc
//!   ([`singular`]),
//! * a bisection planner for the least total release bringing the females
//!   to a target at a fixed horizon ([`planner`]),
//! * an adjoint-gradient optimizer for the same problem on a grid, with
//!   quadratic cost and budget-constrained variants ([`optimizer`]),
//! * CSV/SVG output, parameter files, sweeps and the `sit` command line.
//!
//! The examples walk through each piece:
//!
//! ```bash
//! cargo run --example equilibria
//! cargo run --release --example simulate_models
//! cargo run --release --example plan_release
//! cargo run --release --example direct_optimizer
//! cargo run --release --example budget_dual
//! cargo run --release --example l2_release
//! cargo run --release --example nu_e_sweep
//! cargo run --release --example feedback_stabilization
//! ```
//!
//! ```
//! use sit_control::{plan_release, Params, ProblemSpec};
//!
//! let p = Params::reference(0.05).unwrap();
//! let plan = plan_release(&p, &ProblemSpec::reference(&p)).unwrap();
//! assert!(plan.t0 > 0.0 && plan.t1 < 200.0);
//! ```

pub mod adjoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod integrator;
pub mod model;
pub mod optimizer;
pub mod params;
pub mod planner;
pub mod report;
pub mod singular;
pub mod sweep;

pub use error::{Error, Result};
pub use integrator::{ControlSchedule, Tolerance, Trajectory};
pub use model::ModelKind;
pub use optimizer::{solve_budget_dual, solve_direct, OptimizationResult};
pub use params::Params;
pub use planner::{plan_release, Objective, ProblemSpec};

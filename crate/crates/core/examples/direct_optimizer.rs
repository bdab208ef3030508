//! Adjoint-gradient optimizer on a 300-cell grid for both models, with the
//! switching-function check of the result.
//!
//! ```bash
//! cargo run --release --example direct_optimizer
//! ```

use sit_control::model::ModelKind;
use sit_control::optimizer::{solve_direct, verify_switching};
use sit_control::params::Params;
use sit_control::planner::ProblemSpec;
use sit_control::integrator::Tolerance;

fn main() -> sit_control::Result<()> {
    env_logger::init();
    let p = Params::reference(0.05)?;
    for model in [ModelKind::Reduced, ModelKind::Full] {
        let spec = ProblemSpec::reference(&p).with_model(model);
        let r = solve_direct(&p, &spec, 300)?;
        println!("{} model: J = {:.5e}  F(T) = {:.3}  lambda = {:.3}  {:?}",
            model.name(), r.j, r.f_terminal, r.lambda, r.status);
        for h in &r.history {
            println!("  outer {:2}  inner {:4}  J = {:.6e}  F(T) = {:9.3}  rho = {:.2e}",
                h.outer, h.inner_iterations, h.objective, h.f_terminal, h.rho);
        }
        let adj = r.adjoint(&p, Tolerance::for_params(&p))?;
        let report = verify_switching(&r, &adj)?;
        for (class, a, b) in &report.pattern {
            println!("  {class:?} on [{a:.1}, {b:.1}]");
        }
    }
    Ok(())
}

//! Cheapest release bringing the wild females to a quarter of their
//! equilibrium at day 200, by bisection on the feedback switch-off time.
//!
//! ```bash
//! cargo run --release --example plan_release
//! ```

use sit_control::params::Params;
use sit_control::planner::{plan_release, psi, ProblemSpec};
use sit_control::integrator::Tolerance;

fn main() -> sit_control::Result<()> {
    env_logger::init();
    let p = Params::reference(0.05)?;
    let spec = ProblemSpec::reference(&p);
    let tol = Tolerance::for_params(&p);

    // minimum female level against the feedback duration
    println!("tau1     psi(tau1)");
    for tau1 in [0.0, 25.0, 50.0, 75.0, 100.0, 125.0] {
        println!("{tau1:5.0} {:12.1}", psi(&p, tau1, 4.0 * spec.horizon, tol)?);
    }

    let plan = plan_release(&p, &spec)?;
    println!("\neps = {:.2}", spec.epsilon);
    println!("release on [{:.2}, {:.2}], total {:.4e}", plan.t0, plan.t1, plan.j);
    println!("active duration {:.2} days", plan.active_duration());
    println!("F(T) = {:.3} after {} bisection steps", plan.f_terminal, plan.iterations);
    println!("peak rate {:.1} (bound {})", plan.diagnostics.max_rate, spec.u_bar);

    let short = ProblemSpec::new(60.0, spec.u_bar, spec.epsilon);
    if let Err(e) = plan_release(&p, &short) {
        println!("\nT = 60: {e}");
    }
    Ok(())
}

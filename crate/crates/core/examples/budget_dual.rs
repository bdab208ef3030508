//! Round trip between the two problems: the least release reaching `eps`
//! and the fewest females reachable with that release as a budget.
//!
//! ```bash
//! cargo run --release --example budget_dual
//! ```

use sit_control::optimizer::{solve_budget_dual, solve_direct};
use sit_control::params::Params;
use sit_control::planner::ProblemSpec;

fn main() -> sit_control::Result<()> {
    let p = Params::reference(0.05)?;
    let spec = ProblemSpec::reference(&p);
    let primal = solve_direct(&p, &spec, 300)?;
    println!("primal: J = {:.6e} reaching F(T) = {:.3}", primal.j, primal.f_terminal);

    let dual = solve_budget_dual(&p, spec.horizon, spec.u_bar, primal.j)?;
    println!("dual:   budget {:.6e} gives F(T) = {:.3} (eps = {:.3})", primal.j, dual.f_terminal, spec.epsilon);

    // and back: the dual optimum as target
    let back = solve_direct(&p, &ProblemSpec::new(spec.horizon, spec.u_bar, dual.f_terminal), 300)?;
    println!("back:   J = {:.6e}", back.j);

    for frac in [0.8, 0.9, 1.1] {
        let d = solve_budget_dual(&p, spec.horizon, spec.u_bar, frac * primal.j)?;
        println!("budget x{frac}: F(T) = {:.1}", d.f_terminal);
    }
    Ok(())
}

//! Quadratic release cost. The optimum has no off arc and its rate falls
//! to zero at the horizon.
//!
//! ```bash
//! cargo run --release --example l2_release
//! ```

use sit_control::params::Params;
use sit_control::planner::{Objective, ProblemSpec};
use sit_control::optimizer::solve_direct;

fn main() -> sit_control::Result<()> {
    let p = Params::reference(0.05)?;
    let spec = ProblemSpec::new(200.0, 4000.0, 0.25 * p.f_bar()).with_objective(Objective::L2);
    let r = solve_direct(&p, &spec, 300)?;
    println!("int u^2 = {:.5e}  int u = {:.5e}  F(T) = {:.3}", r.j, r.released(), r.f_terminal);
    println!("min rate {:.2}  u(T) ~ {:.3}",
        r.control.iter().copied().fold(f64::INFINITY, f64::min), r.terminal_rate());
    let h = r.cell_width();
    for (i, u) in r.control.iter().enumerate().step_by(30) {
        println!("t = {:6.1}  u = {u:8.2}", (i as f64 + 0.5) * h);
    }
    if let Some(s) = &r.switching {
        println!("cells contradicting the switching function: {}", s.mismatched.len());
    }
    Ok(())
}

//! Reduced against full model under a constant and a pulsed release,
//! starting from the persistence equilibrium.
//!
//! ```bash
//! cargo run --release --example simulate_models
//! ```

use sit_control::integrator::{integrate_full, integrate_reduced, ControlSchedule, Tolerance};
use sit_control::model::{FullState, ReducedState};
use sit_control::params::Params;

fn main() -> sit_control::Result<()> {
    let p = Params::reference(0.05)?;
    let tol = Tolerance::for_params(&p);
    let horizon = 70.0;
    let runs = [
        ("constant 15000", ControlSchedule::constant(15000.0, horizon)?),
        ("pulses 20000 every 10 days", ControlSchedule::pulses(20000.0, 10.0, 1.0, horizon)?),
    ];
    for (name, u) in runs {
        let red = integrate_reduced(&p, ReducedState::equilibrium(&p), &u, (0.0, horizon), tol)?;
        let full = integrate_full(&p, FullState::equilibrium(&p), &u, (0.0, horizon), tol)?;
        println!("{name}: released {:.0}", u.integral());
        println!("   t    F reduced     F full");
        let mut gap = 0.0f64;
        for k in 0..=700 {
            let t = k as f64 * 0.1;
            let (a, b) = (red.females(t)?, full.females(t)?);
            gap = gap.max((a - b).abs() / p.f_bar());
            if k % 100 == 0 {
                println!("{t:5.0} {a:12.2} {b:10.2}");
            }
        }
        println!("max |F_reduced - F_full| / F_bar = {gap:.2e}\n");
    }
    Ok(())
}

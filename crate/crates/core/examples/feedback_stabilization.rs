//! Releases following the singular feedback from the persistence
//! equilibrium. Switched off at `tau1`, the females keep falling for a few
//! days on the sterile males already out, then recover.
//!
//! ```bash
//! cargo run --release --example feedback_stabilization
//! ```

use sit_control::integrator::Tolerance;
use sit_control::params::Params;
use sit_control::singular::{integrate_closed_loop, integrate_feedback};

fn main() -> sit_control::Result<()> {
    let p = Params::reference(0.05)?;
    let tol = Tolerance::for_params(&p);

    let tr = integrate_feedback(&p, 150.0, tol)?;
    for t in [0.0, 50.0, 100.0, 150.0] {
        let s = tr.sample_reduced(t)?;
        println!("t = {t:5.0}  F = {:9.2}  Ms = {:9.1}  u = {:8.1}", s.f, s.ms, tr.control_at(t));
    }

    for tau1 in [20.0, 60.0, 100.0] {
        let run = integrate_closed_loop(&p, tau1, 800.0, tol)?;
        println!(
            "tau1 = {tau1:5.0}: released {:.4e}, F reaches {:.1} at t = {:.2}, unimodal: {}",
            run.released(), run.f_min, run.tau2, run.is_unimodal(&p, 1e-6)
        );
    }
    Ok(())
}

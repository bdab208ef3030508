//! Equilibria of the full model at the reference rates, with and without
//! releases, and the extinction threshold `U*`.
//!
//! ```bash
//! cargo run --example equilibria
//! ```

use sit_control::model::{equilibria_and_stability, positive_equilibrium_eggs};
use sit_control::params::Params;

fn main() -> sit_control::Result<()> {
    let p = Params::reference(0.05)?;
    let d = p.derive();
    println!("R0 = {:.3}  K = {:.1}", p.offspring_number(), p.k);
    println!("E_bar = {:.1}  M_bar = {:.1}  F_bar = {:.1}", d.e_bar, d.m_bar, d.f_bar);
    println!("U* = {:.1}", d.u_star);

    for frac in [0.0, 0.5, 0.9, 1.05] {
        let u = frac * d.u_star;
        println!("\nu = {u:.1} ({frac} U*)");
        for eq in equilibria_and_stability(&p, u)? {
            let s = eq.state;
            let re: Vec<String> = eq.eigenvalues.iter().map(|z| format!("{:.4}", z.re)).collect();
            println!(
                "  E = {:9.1}  M = {:8.1}  F = {:8.1}  Ms = {:9.1}  {:?}  Re(eig) = [{}]",
                s.e, s.m, s.f, s.ms, eq.stability, re.join(", ")
            );
        }
        // egg levels of the positive equilibria, empty past the threshold
        println!("  positive egg roots: {:?}", positive_equilibrium_eggs(&p, u));
    }
    Ok(())
}

//! Total release against the hatching rate `nu_E`, planner and direct
//! optimizer side by side. Writes `nu_e_sweep.csv` in the working
//! directory.
//!
//! ```bash
//! cargo run --release --example nu_e_sweep -- 7
//! ```

use std::path::Path;

use sit_control::config::ParamConfig;
use sit_control::sweep::{linear_grid, sweep, sweep_table, SweepSetup};

fn main() -> sit_control::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let grid = linear_grid(0.005, 0.25, n)?;
    let setup = SweepSetup { skip_full: true, ..Default::default() };
    let rows = sweep(&ParamConfig::default(), &grid, &setup);
    println!(" nu_E      J_plan   T_opt   J_direct");
    for r in &rows {
        println!("{:.4} {:11.4e} {:7.2} {:10.4e}", r.nu_e, r.j_plan, r.t_opt_plan, r.j_direct_reduced);
        for e in &r.errors {
            println!("  {e}");
        }
    }
    sweep_table(&rows).write(Path::new("nu_e_sweep.csv"))
}

//! Certified bounds for the step datum at t = 1, three step sizes.

use fbp_lab::sandwich::run_sandwich;
use fbp_lab::{Grid1D, InitialCondition};

fn main() -> fbp_lab::Result<()> {
    let grid = Grid1D::with_spacing(-8.0, 12.0, 0.01)?;
    let ic = InitialCondition::step(0.0);
    println!("{:>8} {:>12} {:>12} pass", "delta", "gap_L1", "bound");
    for delta in [0.04, 0.02, 0.01] {
        let pair = run_sandwich(&ic, &grid, delta, (1.0 / delta).round() as usize, 1.0)?;
        let c = pair.certificate();
        println!("{:>8} {:>12.4e} {:>12.4e} {}", c.delta, c.gap_l1, c.bound_l1, c.pass);
    }
    Ok(())
}

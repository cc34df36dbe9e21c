//! Semigroup restart, comparison and translation on one small grid.

use fbp_lab::diagnostics::{comparison_check, semigroup_check, shift_ic, translation_check};
use fbp_lab::{Grid1D, InitialCondition};

fn main() -> fbp_lab::Result<()> {
    let grid = Grid1D::with_spacing(-6.0, 10.0, 0.02)?;
    let ic = InitialCondition::exponential(1.0)?;
    println!("{}", semigroup_check(&ic, &grid, 0.5, 0.5, 0.01, 1.0)?.report.line());
    for r in comparison_check(&ic, &shift_ic(&ic, 0.3)?, &grid, 0.5, 0.01, 32)? {
        println!("{}", r.line());
    }
    println!(
        "{}",
        translation_check(&shift_ic(&ic, 0.01)?, &grid, 9, 0.01, 20)?.line()
    );
    Ok(())
}

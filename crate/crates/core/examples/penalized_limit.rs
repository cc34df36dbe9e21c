//! u_n increases to the free boundary solution; compare with the sandwich.

use fbp_lab::kpp::{check_uchiyama, limit_u, max_stable_dt};
use fbp_lab::sandwich::run_sandwich;
use fbp_lab::{Grid1D, InitialCondition};

fn main() -> fbp_lab::Result<()> {
    let grid = Grid1D::with_spacing(-8.0, 12.0, 0.02)?;
    let ic = InitialCondition::step(0.0);
    let est = limit_u(&ic, &grid, 1.0, &[16, 32, 64, 128], max_stable_dt(grid.dx()))?;
    println!("increments between exponents: {:?}", est.increments);
    for p in &est.profiles {
        println!("{}", check_uchiyama(p, 1.0)?.line());
    }
    let pair = run_sandwich(&ic, &grid, 0.01, 100, 1.0)?;
    for x in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        println!(
            "x={x:5.2}  lower={:.5}  u_128={:.5}  upper={:.5}",
            pair.lower.eval(x),
            est.profile.eval(x),
            pair.upper.eval(x)
        );
    }
    Ok(())
}

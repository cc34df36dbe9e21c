//! ∫ e^{-ε²s + (1-ε)(μ_s - 2s)} ds = 1 for the step datum, on a coarse grid.

use fbp_lab::diagnostics::moment_identity_from_start;
use fbp_lab::InitialCondition;

fn main() -> fbp_lab::Result<()> {
    let ic = InitialCondition::step(0.0);
    for (dx, delta) in [(0.04, 0.016), (0.02, 0.004)] {
        let (m, _) = moment_identity_from_start(&ic, 0.5, 50.0, dx, delta)?;
        println!(
            "dx={dx} delta={delta}: integral {:.5}, |lhs - rhs| {:.2e}",
            m.rhs,
            m.residual()
        );
    }
    Ok(())
}

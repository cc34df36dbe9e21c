//! Stopped Brownian paths against the sandwich midpoint.

use fbp_lab::boundary::DEFAULT_THETA;
use fbp_lab::feynman_kac::{estimate_u, MCConfig};
use fbp_lab::sandwich::{midpoint_solution, run_with_boundary};
use fbp_lab::{Grid1D, InitialCondition};

fn main() -> fbp_lab::Result<()> {
    let grid = Grid1D::with_spacing(-8.0, 12.0, 0.01)?;
    let ic = InitialCondition::step(0.0);
    let run = run_with_boundary(&ic, &grid, 0.01, 100, 1.0, DEFAULT_THETA)?;
    let mid = midpoint_solution(&run.pair)?.profile;
    for x in [0.5, 1.0, 2.0] {
        let cfg = MCConfig {
            paths: 20_000,
            h: 1e-3,
            seed: 1,
            probe: (x, 1.0),
        };
        let est = estimate_u(&cfg, &run.boundary, &ic)?;
        println!(
            "x={x}: MC {:.4} ± {:.4} (stopped {:.1}%), midpoint {:.4} ± {:.4}",
            est.mean,
            est.stderr,
            100.0 * est.hit_fraction,
            mid.eval(x),
            run.pair.radius_at(x)
        );
    }
    Ok(())
}

//! The plateau edge of the upper iterates, checked against the increment
//! bound, and the flat exit at the boundary.

use fbp_lab::boundary::{check_increments, check_neumann, extract_mu, DEFAULT_THETA};
use fbp_lab::sandwich::{midpoint_solution, run_with_boundary};
use fbp_lab::{Grid1D, InitialCondition};

fn main() -> fbp_lab::Result<()> {
    let grid = Grid1D::with_spacing(-8.0, 14.0, 0.01)?;
    let run = run_with_boundary(&InitialCondition::step(0.0), &grid, 0.01, 200, 1.0, DEFAULT_THETA)?;
    let b = &run.boundary;
    for k in (0..b.len()).step_by(25) {
        println!("t={:.2}  mu={:+.4}", b.times[k], b.mu[k]);
    }
    println!("{}", check_increments(b, 4.0 * grid.dx()).line());
    let mid = midpoint_solution(&run.pair)?.profile;
    println!("{}", check_neumann(&mid, &extract_mu(&mid, DEFAULT_THETA)?).line());
    Ok(())
}

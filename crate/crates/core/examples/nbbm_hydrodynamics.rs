//! Empirical tails of N-BBM approach u as N grows.

use fbp_lab::nbbm::{empirical_tail, evolve, init_ensemble, sup_gap, Density};
use fbp_lab::sandwich::{midpoint_solution, run_sandwich};
use fbp_lab::Grid1D;

fn main() -> fbp_lab::Result<()> {
    let phi = Density::Uniform { a: 0.0, b: 1.0 };
    let grid = Grid1D::with_spacing(-8.0, 12.0, 0.01)?;
    let pair = run_sandwich(&phi.to_initial_condition()?, &grid, 0.01, 100, 1.0)?;
    let u = midpoint_solution(&pair)?.profile;
    let a_grid: Vec<f64> = (0..=800).map(|k| -3.0 + 0.01 * k as f64).collect();
    for n in [1000, 4000, 16000] {
        let gaps: Vec<f64> = (0..4)
            .map(|seed| {
                let e = evolve(&init_ensemble(&phi, n, seed)?, 1.0)?;
                Ok(sup_gap(&empirical_tail(&e, &a_grid), &u))
            })
            .collect::<fbp_lab::Result<_>>()?;
        println!(
            "N={n:6}  mean sup gap {:.4}",
            gaps.iter().sum::<f64>() / gaps.len() as f64
        );
    }
    Ok(())
}

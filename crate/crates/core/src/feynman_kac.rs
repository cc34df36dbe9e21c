//! Monte Carlo estimates of `u(x,t)` from Brownian paths, as a cross-check of
//! the deterministic solvers.
//!
//! For the free boundary problem the path is stopped when it first meets the
//! time-reversed boundary, `τ = inf{s : B_s <= μ_{t-s}} ∧ t`, and
//! `u(x,t) = E_x[e^τ 1{τ<t} + e^t v(B_t) 1{τ=t}]`. For the penalized equation
//! the weight is `exp ∫ (1 - u_n^{n-1}(B_s, t-s)) ds` and nothing is stopped.
//!
//! Crossings are checked at the Euler grid points only, which biases the
//! stopped estimate by `O(sqrt h)`. Path `i` draws from its own ChaCha8
//! stream `(seed, i)`, so results do not depend on the number of threads and
//! probes sharing a seed use common random numbers.

use crate::error::{FbpError, Result};
use crate::grid::{sample_ic, BoundaryPath, InitialCondition, Profile, SolutionField};
use crate::heat::BM_VARIANCE_RATE;
use crate::kpp::penalty_power;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MIN_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub paths: usize,
    pub h: f64,
    pub seed: u64,
    /// `(x, t)`.
    pub probe: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub x: f64,
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub h: f64,
    pub seed: u64,
    /// Fraction of paths stopped before `t`.
    pub hit_fraction: f64,
}

impl MCEstimate {
    /// `|mean - value| <= k stderr + slack`.
    pub fn agrees_with(&self, value: f64, k: f64, slack: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr + slack
    }
}

/// Where stopped paths are stopped.
#[derive(Debug, Clone, Copy)]
pub enum Barrier<'a> {
    /// No boundary (`μ = -∞`); every path runs to `t`.
    None,
    Path(&'a BoundaryPath),
}

fn check_config(cfg: &MCConfig) -> Result<usize> {
    if cfg.paths < MIN_PATHS {
        return Err(FbpError::Precondition(format!(
            "need at least {MIN_PATHS} paths, got {}",
            cfg.paths
        )));
    }
    let (x, t) = cfg.probe;
    if !(t > 0.0) || !x.is_finite() {
        return Err(FbpError::Domain(format!("probe ({x}, {t}) invalid")));
    }
    if !(cfg.h > 0.0 && cfg.h <= t) {
        return Err(FbpError::Domain(format!("Euler step {} not in (0, t]", cfg.h)));
    }
    Ok(((t / cfg.h).round() as usize).max(1))
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn summarize(cfg: &MCConfig, h: f64, results: &[(f64, bool)]) -> MCEstimate {
    let m = results.len() as f64;
    let mean = results.iter().map(|r| r.0).sum::<f64>() / m;
    let var = results.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let hits = results.iter().filter(|r| r.1).count() as f64;
    MCEstimate {
        x: cfg.probe.0,
        t: cfg.probe.1,
        mean,
        stderr: (var / m).sqrt(),
        m: results.len(),
        h,
        seed: cfg.seed,
        hit_fraction: hits / m,
    }
}

/// Stopped-path estimate of the free boundary solution.
pub fn estimate_u(cfg: &MCConfig, boundary: &BoundaryPath, ic: &InitialCondition) -> Result<MCEstimate> {
    estimate_u_with(cfg, Barrier::Path(boundary), ic)
}

pub fn estimate_u_with(cfg: &MCConfig, barrier: Barrier<'_>, ic: &InitialCondition) -> Result<MCEstimate> {
    let steps = check_config(cfg)?;
    let (x, t) = cfg.probe;
    let h = t / steps as f64;
    // barrier[k] = μ_{t - k h}: the boundary the path meets at step k.
    let levels: Vec<f64> = match barrier {
        Barrier::None => vec![f64::NEG_INFINITY; steps + 1],
        Barrier::Path(b) => {
            if b.times[0] > 0.0 || b.t_end() < t - 1e-12 {
                return Err(FbpError::Precondition(format!(
                    "boundary covers [{}, {}], probe needs [0, {t}]",
                    b.times[0],
                    b.t_end()
                )));
            }
            let spacing = b.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            if cfg.h > spacing * (1.0 + 1e-9) {
                return Err(FbpError::Precondition(format!(
                    "Euler step {} coarser than the boundary sampling {spacing}",
                    cfg.h
                )));
            }
            (0..=steps)
                .map(|k| b.mu_at((t - k as f64 * h).max(0.0)).expect("covered"))
                .collect()
        }
    };
    if !(x > levels[0]) {
        return Err(FbpError::Precondition(format!(
            "probe x={x} is not right of the boundary μ_t={}",
            levels[0]
        )));
    }
    let scale = (BM_VARIANCE_RATE * h).sqrt();
    let growth = t.exp();
    let results: Vec<(f64, bool)> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i);
            let mut b = x;
            for (k, &level) in levels.iter().enumerate().skip(1) {
                let z: f64 = rng.sample(StandardNormal);
                b += scale * z;
                if k < steps && b <= level {
                    return ((k as f64 * h).exp(), true);
                }
            }
            (growth * ic.eval(b), false)
        })
        .collect();
    Ok(summarize(cfg, h, &results))
}

/// Space-time interpolation of a penalized solution, with the initial datum
/// at `t = 0`.
struct FieldLookup {
    times: Vec<f64>,
    profiles: Vec<Profile>,
}

impl FieldLookup {
    fn new(ic: &InitialCondition, field: &SolutionField) -> Result<Self> {
        let first = field
            .profiles
            .first()
            .ok_or_else(|| FbpError::Precondition("empty solution field".into()))?;
        let mut times = vec![0.0];
        let mut profiles = vec![sample_ic(ic, &first.grid)?];
        times.extend_from_slice(&field.times);
        profiles.extend(field.profiles.iter().cloned());
        Ok(Self { times, profiles })
    }

    fn eval(&self, x: f64, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.profiles[0].eval(x);
        }
        if k == self.times.len() {
            return self.profiles[k - 1].eval(x);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        (1.0 - w) * self.profiles[k - 1].eval(x) + w * self.profiles[k].eval(x)
    }
}

/// Estimate of `u_n(x,t)` from `v(B_t) exp ∫₀ᵗ (1 - u_n^{n-1}(B_s, t-s)) ds`
/// with `u_n` read from `field` (trapezoid rule in `s`).
pub fn estimate_un(
    cfg: &MCConfig,
    ic: &InitialCondition,
    n_exponent: u32,
    field: &SolutionField,
) -> Result<MCEstimate> {
    let steps = check_config(cfg)?;
    let (x, t) = cfg.probe;
    if n_exponent < 2 {
        return Err(FbpError::Domain(format!("penalty exponent {n_exponent} must be >= 2")));
    }
    let t_end = *field
        .times
        .last()
        .ok_or_else(|| FbpError::Precondition("empty field".into()))?;
    if t_end < t - 1e-12 {
        return Err(FbpError::Precondition(format!(
            "field ends at {t_end}, probe needs [0, {t}]"
        )));
    }
    let lookup = FieldLookup::new(ic, field)?;
    let h = t / steps as f64;
    let scale = (BM_VARIANCE_RATE * h).sqrt();
    let rate = |y: f64, s: f64| 1.0 - penalty_power(lookup.eval(y, (t - s).max(0.0)), n_exponent - 1);
    let results: Vec<(f64, bool)> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i);
            let mut b = x;
            let mut prev = rate(b, 0.0);
            let mut exponent = 0.0;
            for k in 1..=steps {
                let z: f64 = rng.sample(StandardNormal);
                b += scale * z;
                let cur = rate(b, k as f64 * h);
                exponent += 0.5 * h * (prev + cur);
                prev = cur;
            }
            (ic.eval(b) * exponent.exp(), false)
        })
        .collect();
    Ok(summarize(cfg, h, &results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::heat::apply_g;
    use crate::kpp::{max_stable_dt, solve_un_at};

    fn constant_ic(c: f64) -> InitialCondition {
        let g = Grid1D::with_spacing(-50.0, 50.0, 1.0).unwrap();
        InitialCondition::tabulated(Profile::constant(g, c).unwrap(), None)
    }

    fn cfg(paths: usize, h: f64, x: f64, t: f64) -> MCConfig {
        MCConfig {
            paths,
            h,
            seed: 7,
            probe: (x, t),
        }
    }

    #[test]
    fn no_boundary_constant_datum_is_deterministic() {
        let est = estimate_u_with(&cfg(200, 0.05, 0.0, 1.0), Barrier::None, &constant_ic(0.5)).unwrap();
        assert!((est.mean - 0.5 * 1f64.exp()).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
        assert_eq!(est.hit_fraction, 0.0);
    }

    #[test]
    fn far_from_boundary_is_grown_heat_solution() {
        let ic = InitialCondition::step(0.0);
        let mu = vec![-10.0; 3];
        let path = BoundaryPath::new(
            vec![0.0, 0.05, 0.1],
            mu.clone(),
            mu.iter().map(|m| m - 0.01).collect(),
            mu.iter().map(|m| m + 0.01).collect(),
            0.01,
        )
        .unwrap();
        let (x, t) = (0.3, 0.1);
        let est = estimate_u(&cfg(20_000, 0.005, x, t), &path, &ic).unwrap();
        assert!(est.hit_fraction < 1e-3);
        let g = Grid1D::with_spacing(-3.0, 3.0, 0.005).unwrap();
        let heat = apply_g(&sample_ic(&ic, &g).unwrap(), t).unwrap().eval(x);
        assert!(
            est.agrees_with(t.exp() * heat, 4.0, 2e-3),
            "{} vs {}",
            est.mean,
            t.exp() * heat
        );
    }

    #[test]
    fn seeds_reproduce_and_payoffs_are_bounded() {
        let ic = InitialCondition::step(0.0);
        let path = BoundaryPath::new(
            vec![0.0, 0.5],
            vec![0.0, -0.2],
            vec![-0.01, -0.21],
            vec![0.01, -0.19],
            0.01,
        )
        .unwrap();
        let c = cfg(500, 0.01, 0.5, 0.5);
        let a = estimate_u(&c, &path, &ic).unwrap();
        let b = estimate_u(&c, &path, &ic).unwrap();
        assert_eq!(a, b);
        assert!(a.mean >= 0.0 && a.mean <= 0.5f64.exp());
        assert!(a.hit_fraction > 0.0);
    }

    #[test]
    fn refusals() {
        let ic = InitialCondition::step(0.0);
        let path = BoundaryPath::new(vec![0.0, 0.5], vec![0.0, 0.0], vec![-0.01; 2], vec![0.01; 2], 0.01).unwrap();
        assert!(estimate_u(&cfg(500, 0.01, 0.0, 0.5), &path, &ic).is_err());
        assert!(estimate_u(&cfg(500, 0.01, 1.0, 0.8), &path, &ic).is_err());
        assert!(estimate_u(&cfg(50, 0.01, 1.0, 0.5), &path, &ic).is_err());
        assert!(estimate_u(&cfg(500, 0.6, 1.0, 0.5), &path, &ic).is_err());
    }

    #[test]
    fn penalized_payoff_limits() {
        let g = Grid1D::with_spacing(-5.0, 5.0, 0.1).unwrap();
        let ones = InitialCondition::tabulated(Profile::constant(g, 1.0).unwrap(), None);
        let field = SolutionField::new(vec![1.0], vec![Profile::constant(g, 1.0).unwrap()]).unwrap();
        let est = estimate_un(&cfg(200, 0.05, 0.0, 1.0), &ones, 3, &field).unwrap();
        assert!((est.mean - 1.0).abs() < 1e-12);

        let half = InitialCondition::tabulated(Profile::constant(g, 0.5).unwrap(), None);
        let z = Profile::constant(g, 0.0).unwrap();
        let zero = SolutionField::new(vec![0.001, 1.0], vec![z.clone(), z]).unwrap();
        let est = estimate_un(&cfg(200, 0.05, 0.0, 1.0), &half, 3, &zero).unwrap();
        // u_n = 0 along the path except at s = t, where the datum 0.5 enters
        // the trapezoid.
        let expected = 0.5 * (1.0 - 0.05 * 0.5 * 0.25f64).exp();
        assert!((est.mean - expected).abs() < 1e-9, "{}", est.mean);
    }

    #[test]
    fn penalized_estimate_matches_pde_solver() {
        let dx = 0.05;
        let g = Grid1D::with_spacing(-8.0, 8.0, dx).unwrap();
        let ic = InitialCondition::step(0.0);
        let t = 0.5;
        let times: Vec<f64> = (1..=50).map(|k| k as f64 * 0.01).collect();
        let run = solve_un_at(&ic, &g, 2, &times, max_stable_dt(dx)).unwrap();
        let target = run.field.final_profile().unwrap().eval(0.0);
        let est = estimate_un(&cfg(4000, 0.005, 0.0, t), &ic, 2, &run.field).unwrap();
        assert!(
            est.agrees_with(target, 3.0, 0.01),
            "{} ± {} vs {target}",
            est.mean,
            est.stderr
        );
    }
}

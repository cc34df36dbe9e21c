//! Explicit finite differences for the penalized Fisher-KPP equations
//! `∂_t u_n = ∂²_x u_n + u_n - u_n^n`, whose solutions increase in `n` to the
//! free boundary solution.
//!
//! The scheme `u <- u + dt (Δ_h u + u - u^n)` with `dt <= 0.4 dx²` is monotone
//! for every exponent used here, so comparison in the initial data and in `n`
//! hold exactly at the discrete level. Ghost values outside the window are the
//! profile's tail constants.

use crate::error::{FbpError, Result};
use crate::grid::{check_monotone, sample_ic, Grid1D, InitialCondition, Profile, SolutionField};
use crate::report::Report;
use crate::sandwich::{run_sandwich, SandwichPair};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Stability cap `dt <= CFL * dx²`.
pub const CFL: f64 = 0.4;

/// Overshoot of `[0,1]` tolerated (and clamped) after a step.
const OVERSHOOT: f64 = 1e-12;

/// `u^n` as `exp(n ln u)`, exact at 0 and 1.
#[inline]
pub fn penalty_power(u: f64, n: u32) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (n as f64 * u.ln()).exp()
    }
}

pub fn max_stable_dt(dx: f64) -> f64 {
    CFL * dx * dx
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedRun {
    pub n_exponent: u32,
    pub grid: Grid1D,
    pub dt: f64,
    pub field: SolutionField,
}

fn check_step_args(grid: &Grid1D, n_exponent: u32, dt: f64) -> Result<()> {
    if n_exponent < 2 {
        return Err(FbpError::Domain(format!("penalty exponent {n_exponent} must be >= 2")));
    }
    let limit = max_stable_dt(grid.dx());
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(FbpError::Unstable { dt, limit });
    }
    Ok(())
}

fn step_values(u: &[f64], lt: f64, rt: f64, dx: f64, n_exponent: u32, dt: f64) -> Result<Vec<f64>> {
    let m = u.len();
    let r = dt / (dx * dx);
    let out: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let left = if i == 0 { lt } else { u[i - 1] };
            let right = if i + 1 == m { rt } else { u[i + 1] };
            let c = u[i];
            c + r * (left - 2.0 * c + right) + dt * (c - penalty_power(c, n_exponent))
        })
        .collect();
    if let Some(i) = out.iter().position(|&v| !(-OVERSHOOT..=1.0 + OVERSHOOT).contains(&v)) {
        return Err(FbpError::Numerical(format!("value {} at index {i} left [0,1]", out[i])));
    }
    Ok(out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// One explicit Euler step.
pub fn fkpp_step(p: &Profile, n_exponent: u32, dt: f64) -> Result<Profile> {
    check_step_args(&p.grid, n_exponent, dt)?;
    let values = step_values(&p.values, p.left_tail, p.right_tail, p.grid.dx(), n_exponent, dt)?;
    Profile::new(p.grid, values, p.left_tail, p.right_tail)
}

/// Solves to `t_final` and records only the final profile.
pub fn solve_un(ic: &InitialCondition, grid: &Grid1D, n_exponent: u32, t_final: f64, dt: f64) -> Result<SolutionField> {
    Ok(solve_un_at(ic, grid, n_exponent, &[t_final], dt)?.field)
}

/// Solves up to the last of `times` and records a profile at each of them.
///
/// The step is shrunk so that `t_final` is hit exactly; the other output
/// times are rounded to the nearest step and recorded at that step's time.
pub fn solve_un_at(
    ic: &InitialCondition,
    grid: &Grid1D,
    n_exponent: u32,
    times: &[f64],
    dt: f64,
) -> Result<PenalizedRun> {
    let v = sample_ic(ic, grid)?;
    solve_from(&v, n_exponent, times, dt)
}

/// As [`solve_un_at`] from an already sampled initial profile.
pub fn solve_from(v: &Profile, n_exponent: u32, times: &[f64], dt: f64) -> Result<PenalizedRun> {
    check_step_args(&v.grid, n_exponent, dt)?;
    let t_final = *times
        .last()
        .ok_or_else(|| FbpError::Precondition("no output times".into()))?;
    if times.iter().any(|&t| !(t > 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FbpError::Precondition(
            "output times must be positive and increasing".into(),
        ));
    }
    let steps = (t_final / dt).ceil() as usize;
    let dt = t_final / steps as f64;
    let mut wanted: Vec<usize> = times
        .iter()
        .map(|&t| ((t / dt).round() as usize).clamp(1, steps))
        .collect();
    wanted.dedup();
    let dx = v.grid.dx();
    let (lt, rt) = (v.left_tail, v.right_tail);
    let mut u = v.values.clone();
    let mut out_t = Vec::with_capacity(wanted.len());
    let mut out_p = Vec::with_capacity(wanted.len());
    let mut next = 0;
    for k in 1..=steps {
        u = step_values(&u, lt, rt, dx, n_exponent, dt)?;
        if next < wanted.len() && wanted[next] == k {
            out_t.push(k as f64 * dt);
            out_p.push(Profile::new(v.grid, u.clone(), lt, rt)?);
            next += 1;
        }
    }
    Ok(PenalizedRun {
        n_exponent,
        grid: v.grid,
        dt,
        field: SolutionField::new(out_t, out_p)?,
    })
}

/// Result of running a schedule of increasing exponents.
#[derive(Debug, Clone)]
pub struct LimitEstimate {
    /// Final profile of the largest exponent.
    pub profile: Profile,
    pub schedule: Vec<u32>,
    /// Final profiles for each exponent in the schedule.
    pub profiles: Vec<Profile>,
    /// `max_x (u_{n_{k+1}} - u_{n_k})` for each consecutive pair.
    pub increments: Vec<f64>,
}

impl LimitEstimate {
    /// Largest pointwise increment of the last doubling.
    pub fn saturation(&self) -> f64 {
        self.increments.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Tolerance on `u_{2n} >= u_n` before a decrease counts as a comparison
/// failure.
pub const MONOTONE_IN_N_TOL: f64 = 1e-10;

pub fn limit_u(ic: &InitialCondition, grid: &Grid1D, t_final: f64, schedule: &[u32], dt: f64) -> Result<LimitEstimate> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FbpError::Precondition(
            "schedule must be non-empty and increasing".into(),
        ));
    }
    let profiles = schedule
        .iter()
        .map(|&n| solve_un(ic, grid, n, t_final, dt).map(|f| f.final_profile().cloned().expect("one output time")))
        .collect::<Result<Vec<_>>>()?;
    let mut increments = Vec::with_capacity(profiles.len().saturating_sub(1));
    for (k, w) in profiles.windows(2).enumerate() {
        let mut max_inc = f64::NEG_INFINITY;
        for (i, (a, b)) in w[0].values.iter().zip(&w[1].values).enumerate() {
            if *b < *a - MONOTONE_IN_N_TOL {
                return Err(FbpError::Numerical(format!(
                    "u_{} < u_{} at x={} ({b} < {a})",
                    schedule[k + 1],
                    schedule[k],
                    grid.x(i)
                )));
            }
            max_inc = max_inc.max(b - a);
        }
        increments.push(max_inc);
    }
    Ok(LimitEstimate {
        profile: profiles.last().unwrap().clone(),
        schedule: schedule.to_vec(),
        profiles,
        increments,
    })
}

/// `1/sqrt(πt) + sqrt(8/π)`.
pub fn uchiyama_bound(t: f64) -> f64 {
    1.0 / (PI * t).sqrt() + (8.0 / PI).sqrt()
}

/// Largest absolute one-cell slope of a profile.
pub fn max_slope(p: &Profile) -> f64 {
    let dx = p.grid.dx();
    p.values
        .windows(2)
        .map(|w| ((w[1] - w[0]) / dx).abs())
        .fold(0.0, f64::max)
}

/// Gradient bound `|∂_x u_n| <= 1/sqrt(πt) + sqrt(8/π)` with slack `10 dx`.
pub fn check_uchiyama(p: &Profile, t: f64) -> Result<Report> {
    if !(t > 0.0) {
        return Err(FbpError::Domain(format!("t must be positive, got {t}")));
    }
    let bound = uchiyama_bound(t) + 10.0 * p.grid.dx();
    Ok(Report::upper("uchiyama_gradient", max_slope(p), bound).with_detail(format!("t={t}")))
}

/// Values `u_n(x,t)` and `u_n(x,t)^n` along a schedule at a point inside the
/// plateau.
#[derive(Debug, Clone)]
pub struct InteriorPowerReport {
    pub x: f64,
    pub t: f64,
    pub schedule: Vec<u32>,
    pub u: Vec<f64>,
    pub u_pow: Vec<f64>,
    pub eventually_increasing: bool,
}

impl InteriorPowerReport {
    pub fn last(&self) -> f64 {
        *self.u_pow.last().unwrap()
    }

    pub fn report(&self, threshold: f64) -> Report {
        Report::new(
            "unn_interior",
            self.last(),
            threshold,
            self.last() >= threshold && self.eventually_increasing,
        )
        .with_detail(format!(
            "x={}, t={}, trend increasing: {}",
            self.x, self.t, self.eventually_increasing
        ))
    }
}

/// Checks that `u_n^n -> 1` at an interior plateau point. Interiority is
/// established first from `sandwich`: its lower profile must be on the
/// plateau (`>= 1 - θ`) within `radius` of `x`.
pub fn check_unn_interior(
    ic: &InitialCondition,
    grid: &Grid1D,
    point: (f64, f64),
    schedule: &[u32],
    dt: f64,
    sandwich: &SandwichPair,
    radius: f64,
) -> Result<InteriorPowerReport> {
    let (x, t) = point;
    if (sandwich.time() - t).abs() > 1e-9 {
        return Err(FbpError::Precondition(format!(
            "sandwich pair is at t={}, probe at t={t}",
            sandwich.time()
        )));
    }
    let theta = crate::boundary::DEFAULT_THETA;
    let lower = &sandwich.lower;
    let lg = lower.grid;
    let on_plateau = lg
        .points()
        .zip(&lower.values)
        .filter(|(y, _)| (y - x).abs() <= radius)
        .all(|(_, &v)| v >= 1.0 - theta);
    if !on_plateau || x - radius < lg.x_min() {
        return Err(FbpError::Precondition(format!(
            "({x}, {t}) not verified inside the plateau"
        )));
    }
    let mut u = Vec::with_capacity(schedule.len());
    let mut u_pow = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let f = solve_un(ic, grid, n, t, dt)?;
        let val = f.final_profile().unwrap().eval(x);
        u.push(val);
        u_pow.push(penalty_power(val, n));
    }
    let half = u_pow.len() / 2;
    let eventually_increasing = u_pow[half..].windows(2).all(|w| w[1] >= w[0]);
    Ok(InteriorPowerReport {
        x,
        t,
        schedule: schedule.to_vec(),
        u,
        u_pow,
        eventually_increasing,
    })
}

/// Sandwich pair at `t` for the interiority precondition of
/// [`check_unn_interior`].
pub fn plateau_witness(ic: &InitialCondition, grid: &Grid1D, t: f64, delta: f64) -> Result<SandwichPair> {
    let n = (t / delta).round() as usize;
    run_sandwich(ic, grid, t / n as f64, n, 1.0)
}

/// True when every recorded profile is non-increasing.
pub fn field_is_monotone(field: &SolutionField) -> bool {
    field.profiles.iter().all(check_monotone)
}

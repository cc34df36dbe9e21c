//! Two-sided operator-splitting bounds on the free boundary solution.
//!
//! With `L = e^δ G_δ C_{e^{-δ}}` and `U = C_1 e^δ G_δ`, the iterates
//! `Lⁿ v` and `Uⁿ v⁺` bracket `u(·, nδ)`, and on `[-A, A]` their L¹ gap is at
//! most `4A(1 + e^{δn})(e^δ - 1)`. `v⁺` widens the plateau of `v` by `δ`.
//!
//! Both operators are monotone in floating point (see [`crate::heat`]), so
//! `lower <= upper` holds exactly at every step and is asserted as such.

use crate::boundary::extract_mu_at;
use crate::error::{FbpError, Result};
use crate::grid::{sample_ic, BoundaryPath, Grid1D, InitialCondition, Profile};
use crate::heat::{HeatOperator, BM_VARIANCE_RATE};
use serde::{Deserialize, Serialize};

/// Margin, in standard deviations of the total diffusion `sqrt(2nδ)`, that the
/// window must leave beyond `[-A, A]`.
pub const WINDOW_SIGMAS: f64 = 6.0;

/// Lower and upper iterates after `n` steps of size `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichPair {
    pub lower: Profile,
    pub upper: Profile,
    pub delta: f64,
    pub n: usize,
    pub half_width: f64,
    /// Trapezoid value of `∫_{-A}^{A} (upper - lower)`.
    pub gap_l1: f64,
    /// `4A(1 + e^{δn})(e^δ - 1)`.
    pub bound_l1: f64,
}

impl SandwichPair {
    pub fn time(&self) -> f64 {
        self.delta * self.n as f64
    }

    /// `gap_l1 <= bound_l1 + 10 dx`.
    pub fn certified(&self) -> bool {
        self.gap_l1 <= self.bound_l1 + 10.0 * self.lower.grid.dx()
    }

    pub fn certificate(&self) -> Certificate {
        Certificate {
            delta: self.delta,
            n: self.n,
            a: self.half_width,
            gap_l1: self.gap_l1,
            bound_l1: self.bound_l1,
            pass: self.certified(),
        }
    }

    /// Pointwise half-gap at `x`.
    pub fn radius_at(&self, x: f64) -> f64 {
        0.5 * (self.upper.eval(x) - self.lower.eval(x))
    }
}

/// Serialized form of the L¹ gap certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub delta: f64,
    pub n: usize,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "gap_L1")]
    pub gap_l1: f64,
    #[serde(rename = "bound_L1")]
    pub bound_l1: f64,
    pub pass: bool,
}

/// `4A(1 + e^{δn})(e^δ - 1)`.
pub fn gap_bound(delta: f64, n: usize, half_width: f64) -> f64 {
    4.0 * half_width * (1.0 + (delta * n as f64).exp()) * delta.exp_m1()
}

/// Initial datum for the upper iterates: `v` with its plateau pushed right by
/// `δ`, or, when `v` has no plateau, set to 1 wherever `v > 1 - δ`.
pub fn make_v_plus(ic: &InitialCondition, grid: &Grid1D, delta: f64) -> Result<Profile> {
    if !(delta > 0.0) {
        return Err(FbpError::Domain(format!("delta must be positive, got {delta}")));
    }
    ic.require_valid_fbp_datum()?;
    let v = sample_ic(ic, grid)?;
    let values = if ic.mu0.is_finite() {
        let edge = ic.mu0 + delta;
        grid.points()
            .zip(&v.values)
            .map(|(x, &vx)| if x < edge { 1.0 } else { vx })
            .collect()
    } else if ic.mu0 == f64::NEG_INFINITY {
        v.values
            .iter()
            .map(|&vx| if vx > 1.0 - delta { 1.0 } else { vx })
            .collect()
    } else {
        return Err(FbpError::Precondition("initial condition never drops below 1".into()));
    };
    Profile::new(*grid, values, 1.0, v.right_tail)
}

/// One step of each operator for a fixed `δ` and grid spacing.
#[derive(Debug, Clone)]
pub struct SandwichStepper {
    heat: HeatOperator,
    delta: f64,
    growth: f64,
    cut: f64,
}

impl SandwichStepper {
    pub fn new(dx: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(FbpError::Domain(format!("delta must be positive, got {delta}")));
        }
        Ok(Self {
            heat: HeatOperator::for_time(dx, delta)?,
            delta,
            growth: delta.exp(),
            cut: (-delta).exp(),
        })
    }

    /// As [`SandwichStepper::new`] with [`HeatOperator::compensated`].
    pub fn compensated(dx: f64, delta: f64) -> Result<Self> {
        let mut s = Self::new(dx, delta)?;
        s.heat = HeatOperator::compensated(dx, delta)?;
        Ok(s)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `e^δ G_δ C_{e^{-δ}} f`. The product `e^δ · e^{-δ}` rounds to within two
    /// ulps of 1 on either side, so results that close are set to exactly 1.
    pub fn lower(&self, p: &Profile) -> Profile {
        let cut: Vec<f64> = p.values.iter().map(|&v| v.min(self.cut)).collect();
        let lt = p.left_tail.min(self.cut);
        let rt = p.right_tail.min(self.cut);
        let mut out = self.heat.apply_values(&p.grid, &cut, lt, rt);
        out.iter_mut().for_each(|v| *v = cap_at_one(*v * self.growth));
        Profile::raw(p.grid, out, cap_at_one(lt * self.growth), cap_at_one(rt * self.growth))
    }

    /// `C_1 e^δ G_δ f`.
    pub fn upper(&self, p: &Profile) -> Profile {
        let mut out = self.heat.apply_values(&p.grid, &p.values, p.left_tail, p.right_tail);
        out.iter_mut().for_each(|v| *v = cap_at_one(*v * self.growth));
        Profile::raw(
            p.grid,
            out,
            cap_at_one(p.left_tail * self.growth),
            cap_at_one(p.right_tail * self.growth),
        )
    }
}

#[inline]
fn cap_at_one(v: f64) -> f64 {
    if v >= 1.0 - 2.0 * f64::EPSILON {
        1.0
    } else {
        v
    }
}

pub fn lower_step(p: &Profile, delta: f64) -> Result<Profile> {
    Ok(SandwichStepper::new(p.grid.dx(), delta)?.lower(p))
}

pub fn upper_step(p: &Profile, delta: f64) -> Result<Profile> {
    Ok(SandwichStepper::new(p.grid.dx(), delta)?.upper(p))
}

/// Smallest window the run needs: `A` plus six standard deviations of the
/// total diffusion on each side. On the left the margin is waived when `v`
/// is its plateau value 1 at the window edge (the solution stays 1 there);
/// [`run_sandwich`] then checks at every step that it actually does.
pub fn required_window(ic: &InitialCondition, grid: &Grid1D, total_time: f64, half_width: f64) -> (f64, f64) {
    let margin = WINDOW_SIGMAS * (BM_VARIANCE_RATE * total_time).sqrt();
    let left_plateau = ic.monotone && ic.tails().0 == 1.0 && ic.eval(grid.x_min()) == 1.0;
    let lo = if left_plateau {
        -half_width
    } else {
        -half_width - margin
    };
    (lo, half_width + margin)
}

/// Configuration of a sandwich run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichConfig {
    pub delta: f64,
    pub steps: usize,
    pub half_width: f64,
    /// Keep a snapshot every this many steps (0: only the final pair).
    pub record_every: usize,
}

/// A run's final pair and the snapshots recorded along the way.
#[derive(Debug, Clone)]
pub struct SandwichRun {
    pub pair: SandwichPair,
    /// `(n, lower, upper)` at the recorded step counts, including `n = 0`
    /// when recording is enabled.
    pub snapshots: Vec<(usize, Profile, Profile)>,
}

impl SandwichRun {
    /// Midpoint profiles at the recorded positive times.
    pub fn midpoint_field(&self) -> Result<crate::grid::SolutionField> {
        let mut times = Vec::new();
        let mut profiles = Vec::new();
        for (n, lo, up) in &self.snapshots {
            if *n == 0 {
                continue;
            }
            times.push(*n as f64 * self.pair.delta);
            profiles.push(midpoint_of(lo, up)?);
        }
        crate::grid::SolutionField::new(times, profiles)
    }
}

fn l1_gap(lower: &Profile, upper: &Profile, half_width: f64) -> f64 {
    let diff: Vec<f64> = upper.values.iter().zip(&lower.values).map(|(u, l)| u - l).collect();
    Profile::raw(
        lower.grid,
        diff,
        upper.left_tail - lower.left_tail,
        upper.right_tail - lower.right_tail,
    )
    .integrate(-half_width, half_width)
}

fn check_order(lower: &Profile, upper: &Profile, n: usize) -> Result<()> {
    if let Some(i) = lower.values.iter().zip(&upper.values).position(|(l, u)| l > u) {
        return Err(FbpError::Numerical(format!(
            "lower exceeds upper at index {i} after {n} steps ({} > {})",
            lower.values[i], upper.values[i]
        )));
    }
    Ok(())
}

pub fn run_sandwich(
    ic: &InitialCondition,
    grid: &Grid1D,
    delta: f64,
    n: usize,
    half_width: f64,
) -> Result<SandwichPair> {
    let cfg = SandwichConfig {
        delta,
        steps: n,
        half_width,
        record_every: 0,
    };
    Ok(run_sandwich_recorded(ic, grid, &cfg)?.pair)
}

pub fn run_sandwich_recorded(ic: &InitialCondition, grid: &Grid1D, cfg: &SandwichConfig) -> Result<SandwichRun> {
    let every = cfg.record_every;
    let steps = cfg.steps;
    run_sandwich_where(ic, grid, cfg.delta, steps, cfg.half_width, |k| {
        every > 0 && (k % every == 0 || k == steps)
    })
}

/// Runs the iterates, calling `observe(k, lower, upper)` after every step
/// `k = 0..=steps`. An error from `observe` aborts the run.
pub fn run_sandwich_observed(
    ic: &InitialCondition,
    grid: &Grid1D,
    delta: f64,
    steps: usize,
    half_width: f64,
    observe: impl FnMut(usize, &Profile, &Profile) -> Result<()>,
) -> Result<SandwichPair> {
    sandwich_loop(ic, grid, delta, steps, half_width, false, observe)
}

/// As [`run_sandwich_recorded`] with snapshots at the given step counts.
pub fn run_sandwich_at_steps(
    ic: &InitialCondition,
    grid: &Grid1D,
    delta: f64,
    steps: usize,
    half_width: f64,
    record: &[usize],
) -> Result<SandwichRun> {
    run_sandwich_where(ic, grid, delta, steps, half_width, |k| record.contains(&k))
}

/// A run together with the boundary of its upper iterates at every step.
#[derive(Debug, Clone)]
pub struct TrackedRun {
    pub pair: SandwichPair,
    /// `μ_0` of the datum at `t = 0` (when finite), then the `1 - θ` crossing
    /// of the upper iterate at each `t = kδ`. The upper plateau contains the
    /// true one, so these samples lie to the right of `μ_t`.
    pub boundary: BoundaryPath,
    /// Steps whose crossing was outside the window and are missing.
    pub dropped: usize,
}

pub fn run_with_boundary(
    ic: &InitialCondition,
    grid: &Grid1D,
    delta: f64,
    steps: usize,
    half_width: f64,
    theta: f64,
) -> Result<TrackedRun> {
    let dx = grid.dx();
    let (mut t, mut mu, mut lo, mut hi) = (vec![], vec![], vec![], vec![]);
    let mut dropped = 0;
    let pair = sandwich_loop(ic, grid, delta, steps, half_width, false, |k, _, up| {
        if k == 0 {
            // The upper datum is v moved right by δ; v's own boundary is known.
            if ic.mu0.is_finite() {
                t.push(0.0);
                mu.push(ic.mu0);
                lo.push(ic.mu0 - dx);
                hi.push(ic.mu0 + dx);
            }
            return Ok(());
        }
        let tk = k as f64 * delta;
        let est = extract_mu_at(up, theta, tk, "upper")?;
        if est.is_interior() {
            t.push(tk);
            mu.push(est.mu_hat);
            lo.push(est.lo);
            hi.push(est.hi);
        } else {
            dropped += 1;
        }
        Ok(())
    })?;
    Ok(TrackedRun {
        pair,
        boundary: BoundaryPath::new(t, mu, lo, hi, dx)?,
        dropped,
    })
}

fn run_sandwich_where(
    ic: &InitialCondition,
    grid: &Grid1D,
    delta: f64,
    steps: usize,
    half_width: f64,
    keep: impl Fn(usize) -> bool,
) -> Result<SandwichRun> {
    sandwich_where(ic, grid, delta, steps, half_width, false, keep)
}

/// As [`run_sandwich_at_steps`] with [`SandwichStepper::compensated`]: each
/// step then adds variance `2δ` exactly instead of `2δ + dx²/6`, so the run
/// tracks the equation when `δ` is small against `dx²`. The iterates are no
/// longer the certified ones; the gap is still reported.
pub fn run_compensated_at_steps(
    ic: &InitialCondition,
    grid: &Grid1D,
    delta: f64,
    steps: usize,
    half_width: f64,
    record: &[usize],
) -> Result<SandwichRun> {
    sandwich_where(ic, grid, delta, steps, half_width, true, |k| record.contains(&k))
}

fn sandwich_where(
    ic: &InitialCondition,
    grid: &Grid1D,
    delta: f64,
    steps: usize,
    half_width: f64,
    compensate: bool,
    keep: impl Fn(usize) -> bool,
) -> Result<SandwichRun> {
    let mut snapshots = Vec::new();
    let pair = sandwich_loop(ic, grid, delta, steps, half_width, compensate, |k, lo, up| {
        if keep(k) {
            snapshots.push((k, lo.clone(), up.clone()));
        }
        Ok(())
    })?;
    Ok(SandwichRun { pair, snapshots })
}

fn sandwich_loop(
    ic: &InitialCondition,
    grid: &Grid1D,
    delta: f64,
    steps: usize,
    half_width: f64,
    compensate: bool,
    mut observe: impl FnMut(usize, &Profile, &Profile) -> Result<()>,
) -> Result<SandwichPair> {
    if !(half_width >= 0.5) {
        return Err(FbpError::Precondition(format!(
            "half-width A = {half_width} must be at least 1/2"
        )));
    }
    let total = delta * steps as f64;
    let (need_lo, need_hi) = required_window(ic, grid, total, half_width);
    if grid.x_min() > need_lo || grid.x_max() < need_hi {
        return Err(FbpError::WindowTooSmall {
            need_lo,
            need_hi,
            have_lo: grid.x_min(),
            have_hi: grid.x_max(),
        });
    }
    let left_plateau = need_lo == -half_width;
    let stepper = if compensate {
        SandwichStepper::compensated(grid.dx(), delta)?
    } else {
        SandwichStepper::new(grid.dx(), delta)?
    };
    let mut lower = sample_ic(ic, grid)?;
    let mut upper = make_v_plus(ic, grid, delta)?;
    check_order(&lower, &upper, 0)?;
    observe(0, &lower, &upper)?;
    for k in 1..=steps {
        lower = stepper.lower(&lower);
        upper = stepper.upper(&upper);
        check_order(&lower, &upper, k)?;
        if left_plateau && lower.values[0] < 1.0 - 1e-9 {
            return Err(FbpError::WindowTooSmall {
                need_lo: need_lo - WINDOW_SIGMAS * (BM_VARIANCE_RATE * total).sqrt(),
                need_hi,
                have_lo: grid.x_min(),
                have_hi: grid.x_max(),
            });
        }
        observe(k, &lower, &upper)?;
    }
    let gap_l1 = l1_gap(&lower, &upper, half_width);
    let lower = Profile::new(lower.grid, lower.values, lower.left_tail, lower.right_tail)?;
    let upper = Profile::new(upper.grid, upper.values, upper.left_tail, upper.right_tail)?;
    Ok(SandwichPair {
        lower,
        upper,
        delta,
        n: steps,
        half_width,
        gap_l1,
        bound_l1: gap_bound(delta, steps, half_width),
    })
}

/// Point estimate between the certified bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Midpoint {
    pub profile: Profile,
    /// `(upper - lower)/2` at each grid point.
    pub radius: Vec<f64>,
}

fn midpoint_of(lower: &Profile, upper: &Profile) -> Result<Profile> {
    let values = lower
        .values
        .iter()
        .zip(&upper.values)
        .map(|(l, u)| 0.5 * (l + u))
        .collect();
    Profile::new(
        lower.grid,
        values,
        0.5 * (lower.left_tail + upper.left_tail),
        0.5 * (lower.right_tail + upper.right_tail),
    )
}

pub fn midpoint_solution(sp: &SandwichPair) -> Result<Midpoint> {
    let profile = midpoint_of(&sp.lower, &sp.upper)?;
    let radius = sp
        .upper
        .values
        .iter()
        .zip(&sp.lower.values)
        .map(|(u, l)| 0.5 * (u - l))
        .collect();
    Ok(Midpoint { profile, radius })
}

/// Boundary samples of a run whose window follows the front.
#[derive(Debug, Clone)]
pub struct ComovingRun {
    pub delta: f64,
    /// `t_k = kδ` for the recorded steps, starting at 0.
    pub times: Vec<f64>,
    /// Crossing of `1 - θ` by the lower iterate.
    pub mu_lower: Vec<f64>,
    /// Crossing of `1 - θ` by the upper iterate.
    pub mu_upper: Vec<f64>,
    /// Final pair on the final window. Its certificate is not meaningful on
    /// long horizons and is not computed.
    pub lower: Profile,
    pub upper: Profile,
}

impl ComovingRun {
    fn path(&self, mu: &[f64], dx: f64) -> Result<BoundaryPath> {
        let lo = mu.iter().map(|m| m - dx).collect();
        let hi = mu.iter().map(|m| m + dx).collect();
        BoundaryPath::new(self.times.clone(), mu.to_vec(), lo, hi, dx)
    }

    pub fn lower_path(&self) -> Result<BoundaryPath> {
        self.path(&self.mu_lower, self.lower.grid.dx())
    }

    pub fn upper_path(&self) -> Result<BoundaryPath> {
        self.path(&self.mu_upper, self.lower.grid.dx())
    }

    /// Average of the two crossings.
    pub fn mid_path(&self) -> Result<BoundaryPath> {
        let mu: Vec<f64> = self
            .mu_lower
            .iter()
            .zip(&self.mu_upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        self.path(&mu, self.lower.grid.dx())
    }
}

/// Window placement for [`run_comoving`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComovingConfig {
    pub dx: f64,
    pub delta: f64,
    pub steps: usize,
    /// Plateau kept left of the lower crossing.
    pub behind: f64,
    /// Room kept right of the upper crossing.
    pub ahead: f64,
    pub theta: f64,
    pub record_every: usize,
    /// Use the variance-compensated heat operator.
    pub compensate: bool,
}

/// Runs both iterates on a window `[μ - behind, μ + ahead]` that is moved
/// right by whole cells as the front advances. Cells dropped on the left must
/// be exactly 1 in both iterates; cells appended on the right take the right
/// tail value, which is accurate when `ahead` is many decay lengths.
pub fn run_comoving(ic: &InitialCondition, cfg: &ComovingConfig) -> Result<ComovingRun> {
    let ComovingConfig {
        dx,
        delta,
        steps,
        behind,
        ahead,
        theta,
        record_every,
        compensate,
    } = *cfg;
    ic.require_valid_fbp_datum()?;
    if !ic.mu0.is_finite() {
        return Err(FbpError::Precondition(
            "a co-moving run needs a finite initial boundary".into(),
        ));
    }
    if !(behind >= 1.0 && ahead >= 4.0) {
        return Err(FbpError::Precondition(format!(
            "window margins behind={behind}, ahead={ahead} too small"
        )));
    }
    let start = ic.mu0 - behind;
    let grid = Grid1D::with_spacing(start, ic.mu0 + ahead, dx)?;
    let stepper = if compensate {
        SandwichStepper::compensated(dx, delta)?
    } else {
        SandwichStepper::new(dx, delta)?
    };
    let mut lower = sample_ic(ic, &grid)?;
    let mut upper = make_v_plus(ic, &grid, delta)?;
    let keep = (behind / dx).round() as usize;
    let record_every = record_every.max(1);
    let mut times = vec![0.0];
    let mut mu_lower = vec![ic.mu0];
    let mut mu_upper = vec![ic.mu0];
    for k in 1..=steps {
        lower = stepper.lower(&lower);
        upper = stepper.upper(&upper);
        check_order(&lower, &upper, k)?;
        if lower.values[0] < 1.0 - 1e-9 {
            return Err(FbpError::WindowTooSmall {
                need_lo: lower.grid.x_min() - behind,
                need_hi: lower.grid.x_max(),
                have_lo: lower.grid.x_min(),
                have_hi: lower.grid.x_max(),
            });
        }
        let lo_est = extract_mu_at(&lower, theta, k as f64 * delta, "lower")?;
        let up_est = extract_mu_at(&upper, theta, k as f64 * delta, "upper")?;
        if !lo_est.is_interior() || !up_est.is_interior() {
            return Err(FbpError::Numerical(format!("front left the window at step {k}")));
        }
        if k % record_every == 0 || k == steps {
            times.push(k as f64 * delta);
            mu_lower.push(lo_est.mu_hat);
            mu_upper.push(up_est.mu_hat);
        }
        let first = lower.grid.nearest(lo_est.lo);
        if first > keep + 8 {
            // Upper dominates lower, so these cells are 1 in both.
            let ones = lower.values.iter().take_while(|&&v| v == 1.0).count();
            let s = (first - keep).min(ones);
            if s > 0 {
                lower = shift_window(&lower, s);
                upper = shift_window(&upper, s);
            }
        }
    }
    Ok(ComovingRun {
        delta,
        times,
        mu_lower,
        mu_upper,
        lower: Profile::new(lower.grid, lower.values, lower.left_tail, lower.right_tail)?,
        upper: Profile::new(upper.grid, upper.values, upper.left_tail, upper.right_tail)?,
    })
}

fn shift_window(p: &Profile, s: usize) -> Profile {
    let mut values = p.values[s..].to_vec();
    values.resize(p.values.len(), p.right_tail);
    Profile::raw(p.grid.shifted(s as i64), values, p.left_tail, p.right_tail)
}

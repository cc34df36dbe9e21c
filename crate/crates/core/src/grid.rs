//! Value types shared by every solver: the uniform grid, sampled profiles with
//! constant tails, initial conditions, solution fields and boundary paths.
//!
//! Everything here is immutable once built.

use crate::error::{FbpError, Result};
use serde::{Deserialize, Serialize};

/// Inputs may exceed `[0,1]` by this much and are clamped; anything further
/// out is treated as bad data.
pub const CLAMP_SLACK: f64 = 1e-12;

/// Uniform grid `x_min + i*dx`, `i = 0..m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_min: f64,
    dx: f64,
    m: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, m: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(FbpError::InvalidGrid("non-finite bounds".into()));
        }
        if x_min >= x_max {
            return Err(FbpError::InvalidGrid(format!("x_min {x_min} >= x_max {x_max}")));
        }
        if m < 2 {
            return Err(FbpError::InvalidGrid(format!("need at least 2 points, got {m}")));
        }
        Ok(Self {
            x_min,
            dx: (x_max - x_min) / (m - 1) as f64,
            m,
        })
    }

    /// Grid with spacing as close to `dx` as possible that starts at `x_min`
    /// and reaches at least `x_max`.
    pub fn with_spacing(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(FbpError::InvalidGrid(format!("spacing {dx} must be positive")));
        }
        if x_min >= x_max {
            return Err(FbpError::InvalidGrid(format!("x_min {x_min} >= x_max {x_max}")));
        }
        let cells = ((x_max - x_min) / dx - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            x_min,
            dx,
            m: cells + 1,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.m - 1)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(|i| self.x(i))
    }

    /// The same grid moved right by `k` cells (left for negative `k`).
    pub fn shifted(&self, k: i64) -> Self {
        Self {
            x_min: self.x_min + k as f64 * self.dx,
            ..*self
        }
    }

    /// Cell containing `x` and the fractional position inside it, or `None`
    /// outside the window.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !(x >= self.x_min && x <= self.x_max()) {
            return None;
        }
        let s = (x - self.x_min) / self.dx;
        let j = (s.floor() as usize).min(self.m - 2);
        Some((j, s - j as f64))
    }

    /// Index of the grid point nearest to `x`, clamped to the window.
    pub fn nearest(&self, x: f64) -> usize {
        let s = ((x - self.x_min) / self.dx).round();
        s.clamp(0.0, (self.m - 1) as f64) as usize
    }
}

/// A function on the line sampled on a grid, constant beyond the window.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub left_tail: f64,
    pub right_tail: f64,
}

fn clamp_unit(index: usize, value: f64) -> Result<f64> {
    if !value.is_finite() || !(-CLAMP_SLACK..=1.0 + CLAMP_SLACK).contains(&value) {
        return Err(FbpError::OutOfRange { index, value });
    }
    Ok(value.clamp(0.0, 1.0))
}

impl Profile {
    /// Builds a profile with values and tails in `[0,1]` (see [`CLAMP_SLACK`]).
    pub fn new(grid: Grid1D, values: Vec<f64>, left_tail: f64, right_tail: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FbpError::InvalidGrid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| clamp_unit(i, v))
            .collect::<Result<Vec<_>>>()?;
        let left_tail = clamp_unit(usize::MAX, left_tail)?;
        let right_tail = clamp_unit(usize::MAX, right_tail)?;
        Ok(Self {
            grid,
            values,
            left_tail,
            right_tail,
        })
    }

    pub fn constant(grid: Grid1D, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()], c, c)
    }

    /// No range validation; used for intermediate fields such as `e^δ G f`
    /// before the cut.
    pub(crate) fn raw(grid: Grid1D, values: Vec<f64>, left_tail: f64, right_tail: f64) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid,
            values,
            left_tail,
            right_tail,
        }
    }

    /// Piecewise-linear interpolant inside the window, tail constants outside.
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.grid.x_min() {
            return self.left_tail;
        }
        if x > self.grid.x_max() {
            return self.right_tail;
        }
        match self.grid.locate(x) {
            Some((j, w)) => (1.0 - w) * self.values[j] + w * self.values[j + 1],
            None => self.right_tail,
        }
    }

    /// Trapezoid integral of the interpolant over `[a, b]` (clipped to the
    /// window; tails contribute exactly outside it).
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let g = &self.grid;
        let mut total = 0.0;
        if a < g.x_min() {
            total += self.left_tail * (b.min(g.x_min()) - a);
        }
        if b > g.x_max() {
            total += self.right_tail * (b - a.max(g.x_max()));
        }
        let lo = a.max(g.x_min());
        let hi = b.min(g.x_max());
        if hi <= lo {
            return total;
        }
        // Breakpoints: lo, interior grid points, hi.
        let first = ((lo - g.x_min()) / g.dx()).floor() as usize + 1;
        let mut prev_x = lo;
        let mut prev_v = self.eval(lo);
        let mut i = first;
        while i < g.len() && g.x(i) < hi {
            let xi = g.x(i);
            let vi = self.values[i];
            total += 0.5 * (prev_v + vi) * (xi - prev_x);
            prev_x = xi;
            prev_v = vi;
            i += 1;
        }
        total += 0.5 * (prev_v + self.eval(hi)) * (hi - prev_x);
        total
    }

    /// Pointwise sup-distance on the grid points of `self`.
    pub fn sup_distance(&self, other: &Profile) -> f64 {
        self.grid
            .points()
            .zip(&self.values)
            .map(|(x, v)| (v - other.eval(x)).abs())
            .fold(0.0, f64::max)
    }
}

/// True iff the profile values are non-increasing (exact comparison).
pub fn check_monotone(p: &Profile) -> bool {
    check_monotone_within(p, 0.0)
}

/// True iff no value exceeds its left neighbour by more than `tol`.
pub fn check_monotone_within(p: &Profile, tol: f64) -> bool {
    p.values.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Shape of an initial condition.
#[derive(Debug, Clone, PartialEq)]
pub enum IcKind {
    /// `v = 1{x <= x0}`.
    Step { x0: f64 },
    /// `v = min(1, exp(-rate (x - x0)))`.
    Exponential { rate: f64, x0: f64 },
    /// Piecewise-linear interpolant of tabulated data.
    Tabulated(Profile),
}

/// Initial datum `v` with the metadata downstream checks need.
///
/// `mu0 = inf{x : v(x) < 1}` may be `-inf`. `gamma` is the exponential-moment
/// abscissa `sup{r : ∫ v e^{rx} < ∞}`; `None` means unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub kind: IcKind,
    pub mu0: f64,
    pub gamma: Option<f64>,
    pub monotone: bool,
}

impl InitialCondition {
    pub fn step(x0: f64) -> Self {
        Self {
            kind: IcKind::Step { x0 },
            mu0: x0,
            gamma: Some(f64::INFINITY),
            monotone: true,
        }
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::exponential_at(rate, 0.0)
    }

    pub fn exponential_at(rate: f64, x0: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(FbpError::Domain(format!("exponential rate {rate} must be positive")));
        }
        Ok(Self {
            kind: IcKind::Exponential { rate, x0 },
            mu0: x0,
            gamma: Some(rate),
            monotone: true,
        })
    }

    /// Tabulated datum. `mu0` is read off the data: the left end of the first
    /// cell where the interpolant drops below 1, or `-inf` if the data start
    /// below 1.
    pub fn tabulated(profile: Profile, gamma: Option<f64>) -> Self {
        let monotone = check_monotone(&profile)
            && profile.left_tail >= profile.values[0]
            && profile.right_tail <= *profile.values.last().unwrap();
        // Data that start below 1 are read as only approaching 1 at -inf.
        let mu0 = match profile.values.iter().position(|&v| v < 1.0) {
            None => f64::INFINITY,
            Some(0) => f64::NEG_INFINITY,
            Some(k) => profile.grid.x(k - 1),
        };
        Self {
            kind: IcKind::Tabulated(profile),
            mu0,
            gamma,
            monotone,
        }
    }

    /// Overrides `mu0`, e.g. for a tabulated datum that only approaches 1
    /// asymptotically but whose window starts inside the plateau.
    pub fn with_mu0(mut self, mu0: f64) -> Self {
        self.mu0 = mu0;
        self
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            IcKind::Step { x0 } => {
                if x <= *x0 {
                    1.0
                } else {
                    0.0
                }
            }
            IcKind::Exponential { rate, x0 } => (-rate * (x - x0)).exp().min(1.0),
            IcKind::Tabulated(p) => p.eval(x),
        }
    }

    pub fn tails(&self) -> (f64, f64) {
        match &self.kind {
            IcKind::Step { .. } | IcKind::Exponential { .. } => (1.0, 0.0),
            IcKind::Tabulated(p) => (p.left_tail, p.right_tail),
        }
    }

    /// Checks the hypotheses on `v` used by the free boundary theory:
    /// non-increasing with limits 1 at `-inf` and 0 at `+inf`.
    pub fn require_valid_fbp_datum(&self) -> Result<()> {
        if !self.monotone {
            return Err(FbpError::NotMonotone);
        }
        let (l, r) = self.tails();
        if l != 1.0 || r != 0.0 {
            return Err(FbpError::Precondition(format!(
                "initial condition must tend to 1 at -inf and 0 at +inf (tails {l}, {r})"
            )));
        }
        Ok(())
    }
}

/// Samples the initial condition at the grid points.
///
/// Tabulated data extend past their own window only where they are already
/// equal to the tail constant there.
pub fn sample_ic(ic: &InitialCondition, grid: &Grid1D) -> Result<Profile> {
    let (left_tail, right_tail) = ic.tails();
    if let IcKind::Tabulated(p) = &ic.kind {
        let eps = 1e-9 * p.grid.dx();
        let left_ok = grid.x_min() >= p.grid.x_min() - eps || p.values[0] == p.left_tail;
        let right_ok = grid.x_max() <= p.grid.x_max() + eps || *p.values.last().unwrap() == p.right_tail;
        if !(left_ok && right_ok) {
            return Err(FbpError::NotCovered {
                need_lo: grid.x_min(),
                need_hi: grid.x_max(),
                have_lo: p.grid.x_min(),
                have_hi: p.grid.x_max(),
            });
        }
    }
    let values = grid.points().map(|x| ic.eval(x)).collect();
    Profile::new(*grid, values, left_tail, right_tail)
}

/// Profiles of one solution at increasing positive times.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub times: Vec<f64>,
    pub profiles: Vec<Profile>,
}

impl SolutionField {
    pub fn new(times: Vec<f64>, profiles: Vec<Profile>) -> Result<Self> {
        if times.len() != profiles.len() {
            return Err(FbpError::Precondition("times and profiles differ in length".into()));
        }
        if times.iter().any(|&t| !(t > 0.0)) {
            return Err(FbpError::Precondition("solution times must be positive".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FbpError::Precondition("solution times must increase strictly".into()));
        }
        Ok(Self { times, profiles })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Profile recorded closest to `t`, with its time.
    pub fn nearest(&self, t: f64) -> Option<(f64, &Profile)> {
        self.times
            .iter()
            .zip(&self.profiles)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(&t, p)| (t, p))
    }

    pub fn final_profile(&self) -> Option<&Profile> {
        self.profiles.last()
    }
}

/// Free boundary estimates at sampled times, with brackets.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPath {
    pub times: Vec<f64>,
    pub mu: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Spacing of the grid the estimates came from.
    pub dx: f64,
}

impl BoundaryPath {
    pub fn new(times: Vec<f64>, mu: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>, dx: f64) -> Result<Self> {
        let n = times.len();
        if mu.len() != n || lo.len() != n || hi.len() != n {
            return Err(FbpError::Precondition("boundary arrays differ in length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FbpError::Precondition("boundary times must increase strictly".into()));
        }
        for k in 0..n {
            if !(lo[k] <= mu[k] && mu[k] <= hi[k]) {
                return Err(FbpError::Precondition(format!(
                    "bracket [{}, {}] does not contain mu {} at t={}",
                    lo[k], hi[k], mu[k], times[k]
                )));
            }
            if times[k] > 0.0 && !mu[k].is_finite() {
                return Err(FbpError::Precondition(format!("mu not finite at t={}", times[k])));
            }
            if hi[k] - lo[k] > 2.0 * dx * (1.0 + 1e-9) {
                return Err(FbpError::Precondition(format!(
                    "bracket width {} exceeds 2dx at t={}",
                    hi[k] - lo[k],
                    times[k]
                )));
            }
        }
        Ok(Self { times, mu, lo, hi, dx })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&f64::NEG_INFINITY)
    }

    /// Linear interpolation in time; `None` outside the sampled range.
    pub fn mu_at(&self, t: f64) -> Option<f64> {
        let n = self.times.len();
        if n == 0 || t < self.times[0] || t > self.times[n - 1] {
            return None;
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Some(self.mu[0]);
        }
        if k >= n {
            return Some(self.mu[n - 1]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Some((1.0 - w) * self.mu[k - 1] + w * self.mu[k])
    }

    /// Bracket upper end, interpolated in time like [`BoundaryPath::mu_at`].
    pub fn hi_at(&self, t: f64) -> Option<f64> {
        let n = self.times.len();
        if n == 0 || t < self.times[0] || t > self.times[n - 1] {
            return None;
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Some(self.hi[0]);
        }
        if k >= n {
            return Some(self.hi[n - 1]);
        }
        let w = (t - self.times[k - 1]) / (self.times[k] - self.times[k - 1]);
        Some((1.0 - w) * self.hi[k - 1] + w * self.hi[k])
    }
}

//! Residual checks of the identities a free boundary solution satisfies:
//! the Duhamel form `u = p_t * v + ∫₀ᵗ p_r * u*(·, t-r) dr`, the heat
//! equation with growth on `{u < 1}`, the moment identity relating the
//! profile to the boundary path, the semigroup property, comparison and
//! translation equivariance.

use crate::error::{FbpError, Result};
use crate::grid::{sample_ic, BoundaryPath, Grid1D, InitialCondition, Profile, SolutionField};
use crate::heat::{apply_g, heat_kernel, BM_VARIANCE_RATE};
use crate::kpp::{max_stable_dt, solve_un};
use crate::report::Report;
use crate::sandwich::{midpoint_solution, run_sandwich, SandwichPair};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fewest time slices accepted by [`duhamel_residual`].
pub const MIN_SLICES: usize = 32;

/// Probes closer than this many cells to the boundary bracket are excluded
/// from [`pde_residual_on_s`].
pub const PDE_PROBE_CELLS: f64 = 5.0;

/// `log2` ratios of successive residuals; all positive means strictly
/// decreasing.
pub fn refinement_orders(residuals: &[f64]) -> Vec<f64> {
    residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

pub fn is_decreasing(residuals: &[f64]) -> bool {
    residuals.windows(2).all(|w| w[1] < w[0])
}

/// `u*`: the profile with its plateau `x <= μ` set to 0, plus the mass the
/// piecewise-linear interpolant misses in the cell containing `μ` and that
/// cell's midpoint.
fn zero_plateau(p: &Profile, mu: f64) -> (Profile, f64, f64) {
    let g = p.grid;
    let dx = g.dx();
    let mut values = p.values.clone();
    let mut correction = (0.0, 0.0);
    match g.locate(mu) {
        Some((k, frac)) => {
            values[..=k].iter_mut().for_each(|v| *v = 0.0);
            // Exact: ∫ over (μ, x_{k+1}] of the interpolant of (u_k, u_{k+1}).
            // Used: the ramp from 0 at x_k to u_{k+1}.
            let (a, b) = (p.values[k], p.values[k + 1]);
            let at_mu = a + frac * (b - a);
            let exact = 0.5 * (1.0 - frac) * dx * (at_mu + b);
            let used = 0.5 * dx * b;
            correction = (exact - used, g.x(k) + 0.5 * dx);
        }
        None if mu >= g.x_max() => values.iter_mut().for_each(|v| *v = 0.0),
        None => {}
    }
    let out = Profile::new(g, values, 0.0, p.right_tail).expect("zeroing keeps values in [0,1]");
    (out, correction.0, correction.1)
}

/// Report of the Duhamel identity at a set of probes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DuhamelResidual {
    pub t: f64,
    pub slices: usize,
    pub probes: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl DuhamelResidual {
    pub fn max(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn report(&self, bound: f64) -> Report {
        Report::upper("duhamel_residual", self.max(), bound)
            .with_detail(format!("t={}, {} slices", self.t, self.slices))
    }
}

/// Evaluates `|u - p_t*v - ∫₀ᵗ p_r*u*(·,t-r) dr|` at `probes`, with `u` and
/// the slices `u(·, t-r)` read from `field` and the plateau cut at the
/// boundary path. The r-integral is a trapezoid rule in `q = sqrt(r)` over
/// `slices` nodes `r_j = t (j/J)²`, each snapped to the nearest recorded
/// time; `r = t` uses the initial datum.
pub fn duhamel_residual(
    field: &SolutionField,
    ic: &InitialCondition,
    boundary: &BoundaryPath,
    t: f64,
    probes: &[f64],
    slices: usize,
) -> Result<DuhamelResidual> {
    if slices < MIN_SLICES {
        return Err(FbpError::Precondition(format!(
            "{slices} slices requested, at least {MIN_SLICES} needed"
        )));
    }
    let (t_found, u_t) = field
        .nearest(t)
        .ok_or_else(|| FbpError::Precondition("empty field".into()))?;
    if (t_found - t).abs() > 1e-9 {
        return Err(FbpError::Precondition(format!("field has no profile at t={t}")));
    }
    if boundary.times[0] > 0.0 || boundary.t_end() < t - 1e-9 {
        return Err(FbpError::Precondition("boundary path does not cover [0, t]".into()));
    }
    // Slice times s = t - r; None is the initial datum.
    let mut nodes: Vec<(f64, Option<usize>)> = Vec::with_capacity(slices + 1);
    for j in 0..slices {
        let target = t - t * (j as f64 / slices as f64).powi(2);
        let k = field
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .map(|(k, _)| k)
            .unwrap();
        if field.times[k] > t + 1e-9 {
            continue;
        }
        let r = (t - field.times[k]).max(0.0);
        if nodes.last().is_none_or(|n| r > n.0 + 1e-12) {
            nodes.push((r, Some(k)));
        }
    }
    nodes.push((t, None));
    if nodes.len() < MIN_SLICES + 1 {
        return Err(FbpError::Precondition(format!(
            "field resolves only {} distinct slices, at least {MIN_SLICES} needed",
            nodes.len() - 1
        )));
    }
    let grid = u_t.grid;
    let v = sample_ic(ic, &grid)?;
    let v_star = Profile::new(
        grid,
        v.values.iter().map(|&x| if x < 1.0 { x } else { 0.0 }).collect(),
        0.0,
        v.right_tail,
    )?;
    // q * (p_r * u*)(probes) at each node, times 2 from dr = 2q dq.
    let integrands: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&(r, k)| -> Result<Vec<f64>> {
            if r == 0.0 {
                return Ok(vec![0.0; probes.len()]);
            }
            let (star, mass, at) = match k {
                Some(k) => {
                    let s = field.times[k];
                    let mu = boundary.mu_at(s).expect("covered");
                    zero_plateau(&field.profiles[k], mu)
                }
                None => (v_star.clone(), 0.0, 0.0),
            };
            let spread = apply_g(&star, r)?;
            let q = r.sqrt();
            probes
                .iter()
                .map(|&x| {
                    let corr = if mass != 0.0 {
                        mass * heat_kernel(r, x - at)?
                    } else {
                        0.0
                    };
                    Ok(2.0 * q * (spread.eval(x) + corr))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let heat = apply_g(&v, t)?;
    let residuals = probes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut integral = 0.0;
            for j in 1..nodes.len() {
                let dq = nodes[j].0.sqrt() - nodes[j - 1].0.sqrt();
                integral += 0.5 * dq * (integrands[j][i] + integrands[j - 1][i]);
            }
            (u_t.eval(x) - heat.eval(x) - integral).abs()
        })
        .collect();
    Ok(DuhamelResidual {
        t,
        slices: nodes.len() - 1,
        probes: probes.to_vec(),
        residuals,
    })
}

/// `∂_t u - ∂²_x u - u` by centred differences at a recorded time `t_k` that
/// has recorded neighbours on both sides.
pub fn pde_residual_at(field: &SolutionField, x: f64, k: usize) -> Result<f64> {
    if k == 0 || k + 1 >= field.len() {
        return Err(FbpError::Precondition(
            "time index needs neighbours on both sides".into(),
        ));
    }
    let (t0, t1, t2) = (field.times[k - 1], field.times[k], field.times[k + 1]);
    let (p0, p1, p2) = (&field.profiles[k - 1], &field.profiles[k], &field.profiles[k + 1]);
    let dx = p1.grid.dx();
    let (a, b) = (t1 - t0, t2 - t1);
    // Three-point derivative on a possibly uneven time grid.
    let ut = -b / (a * (a + b)) * p0.eval(x) + (b - a) / (a * b) * p1.eval(x) + a / (b * (a + b)) * p2.eval(x);
    let uxx = (p1.eval(x - dx) - 2.0 * p1.eval(x) + p1.eval(x + dx)) / (dx * dx);
    Ok(ut - uxx - p1.eval(x))
}

/// Largest equation residual over probes `x` at the recorded time nearest
/// `t`. Probes within [`PDE_PROBE_CELLS`] cells of the boundary bracket, or
/// left of it, are refused.
pub fn pde_residual_on_s(
    field: &SolutionField,
    boundary: &BoundaryPath,
    t: f64,
    probes: &[f64],
    bound: f64,
) -> Result<Report> {
    let k = field
        .times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map(|(k, _)| k)
        .ok_or_else(|| FbpError::Precondition("empty field".into()))?;
    let tk = field.times[k];
    let dx = field.profiles[k].grid.dx();
    let hi = boundary
        .hi_at(tk)
        .ok_or_else(|| FbpError::Precondition(format!("boundary does not cover t={tk}")))?;
    if let Some(&x) = probes.iter().find(|&&x| x < hi + PDE_PROBE_CELLS * dx) {
        return Err(FbpError::Precondition(format!(
            "probe {x} within {PDE_PROBE_CELLS} cells of the boundary bracket {hi}"
        )));
    }
    let worst = probes
        .iter()
        .map(|&x| pde_residual_at(field, x, k).map(f64::abs))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Report::upper("pde_residual_on_S", worst, bound).with_detail(format!("t={tk}")))
}

/// Both sides of the moment identity and the truncation accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentIdentity {
    pub t: f64,
    pub r: f64,
    pub s_max: f64,
    /// `1 + r ∫₀^∞ u(μ_t + x, t) e^{rx} dx`.
    pub lhs: f64,
    /// `∫₀^{s_max} e^{r(μ_{t+s} - μ_t) - (1+r²)s} ds`.
    pub rhs: f64,
    /// Bound on the part of the left integral beyond the profile window.
    pub lhs_tail: f64,
    /// Estimate of the right integral beyond `s_max`, assuming the boundary
    /// moves no faster than speed 2 from there on.
    pub rhs_tail: f64,
    pub integrand_at_horizon: f64,
}

impl MomentIdentity {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn report(&self, tolerance: f64) -> Report {
        Report::upper(
            "moment_identity",
            self.residual(),
            tolerance + self.lhs_tail + self.rhs_tail,
        )
        .with_detail(format!(
            "t={}, r={}, S_max={}, lhs={:.6}, rhs={:.6}",
            self.t, self.r, self.s_max, self.lhs, self.rhs
        ))
    }
}

/// Largest integrand accepted at the horizon.
pub const HORIZON_INTEGRAND: f64 = 1e-6;

/// `e^t (p_t * v)(x)`, the growth bound on `u(x,t)`.
fn growth_bound(ic: &InitialCondition, t: f64, x: f64) -> f64 {
    if t == 0.0 {
        return ic.eval(x);
    }
    // Simpson in z over [-12, 12] for E v(x + sqrt(2t) Z).
    let n = 480;
    let h = 24.0 / n as f64;
    let s = (BM_VARIANCE_RATE * t).sqrt();
    let mut acc = 0.0;
    for k in 0..=n {
        let z = -12.0 + k as f64 * h;
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * ic.eval(x + s * z) * (-0.5 * z * z).exp();
    }
    t.exp() * acc * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}

fn check_exponent(ic: &InitialCondition, r: f64) -> Result<()> {
    let gamma = ic.gamma.ok_or_else(|| {
        FbpError::Precondition("exponential-moment abscissa unknown; moment identity disabled".into())
    })?;
    let cap = gamma.min(1.0);
    if !(r >= 0.0 && r < cap) {
        return Err(FbpError::Precondition(format!("r={r} must lie in [0, {cap})")));
    }
    Ok(())
}

/// Checks the moment identity for the solution at time `t` with exponent
/// `r < min(γ, 1)`. `boundary` must cover `[t, t + s_max]`, and the right
/// integrand must have dropped below [`HORIZON_INTEGRAND`] by `s_max`.
pub fn magic_identity(
    boundary: &BoundaryPath,
    u_profile: &Profile,
    ic: &InitialCondition,
    t: f64,
    r: f64,
    s_max: f64,
) -> Result<MomentIdentity> {
    check_exponent(ic, r)?;
    if boundary.times[0] > t + 1e-12 || boundary.t_end() < t + s_max - 1e-9 {
        return Err(FbpError::Precondition(format!(
            "boundary covers [{}, {}], identity needs [{t}, {}]",
            boundary.times[0],
            boundary.t_end(),
            t + s_max
        )));
    }
    let mu_t = boundary.mu_at(t).expect("covered");
    let decay = 1.0 + r * r;
    let f = |s: f64, mu: f64| (r * (mu - mu_t) - decay * s).exp();
    // Right side over the recorded samples in [t, t + s_max].
    let mut knots: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for (&tk, &mk) in boundary.times.iter().zip(&boundary.mu) {
        let s = tk - t;
        if s > 1e-12 && s < s_max - 1e-12 {
            knots.push((s, f(s, mk)));
        }
    }
    let at_horizon = f(s_max, boundary.mu_at(t + s_max).expect("covered"));
    knots.push((s_max, at_horizon));
    let rhs: f64 = knots
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    let tail_rate = (1.0 - r).powi(2);
    if at_horizon >= HORIZON_INTEGRAND {
        let suggest = if tail_rate > 0.0 {
            s_max + (at_horizon / HORIZON_INTEGRAND).ln() / tail_rate
        } else {
            f64::INFINITY
        };
        return Err(FbpError::Precondition(format!(
            "integrand {at_horizon:.3e} at S_max={s_max} is not below {HORIZON_INTEGRAND:e}; try S_max >= {suggest:.1}"
        )));
    }
    let rhs_tail = at_horizon / tail_rate;
    // Left side: trapezoid on the window, analytic growth bound beyond it.
    let g = u_profile.grid;
    let x_end = g.x_max();
    let lhs_window = if mu_t < x_end {
        let weighted: Vec<f64> = g
            .points()
            .zip(&u_profile.values)
            .map(|(x, &u)| if x >= mu_t { u * (r * (x - mu_t)).exp() } else { 0.0 })
            .collect();
        let start = g.locate(mu_t).map(|(k, _)| k + 1).unwrap_or(0);
        let mut acc = 0.0;
        if start > 0 && start < g.len() {
            let at_mu = u_profile.eval(mu_t);
            acc += 0.5 * (g.x(start) - mu_t) * (at_mu + weighted[start]);
        }
        for k in start.max(1)..g.len() {
            if k > start {
                acc += 0.5 * g.dx() * (weighted[k - 1] + weighted[k]);
            }
        }
        acc
    } else {
        0.0
    };
    let lhs_tail = if r == 0.0 {
        0.0
    } else {
        let from = x_end.max(mu_t);
        let integrand = |x: f64| growth_bound(ic, t, x) * (r * (x - mu_t)).exp();
        let mut acc = 0.0;
        let step = 0.25;
        let mut a = from;
        loop {
            let piece = 0.5 * step * (integrand(a) + integrand(a + step));
            acc += piece;
            a += step;
            if piece < 1e-15 * acc.max(1e-300) || a > from + 1e4 {
                break;
            }
        }
        r * acc
    };
    Ok(MomentIdentity {
        t,
        r,
        s_max,
        lhs: 1.0 + r * lhs_window,
        rhs,
        lhs_tail,
        rhs_tail,
        integrand_at_horizon: at_horizon,
    })
}

/// Spacing of the grid the datum is sampled on for the left side at `t = 0`.
const START_PROFILE_DX: f64 = 1e-4;

/// The moment identity at `t = 0`, with the boundary from a co-moving,
/// variance-compensated run of the upper iterates over `[0, s_max]`. The
/// sample at `t = 0` is replaced by `μ_0` itself.
pub fn moment_identity_from_start(
    ic: &InitialCondition,
    r: f64,
    s_max: f64,
    dx: f64,
    delta: f64,
) -> Result<(MomentIdentity, BoundaryPath)> {
    check_exponent(ic, r)?;
    if !ic.mu0.is_finite() {
        return Err(FbpError::Precondition("the co-moving run needs a finite μ_0".into()));
    }
    let steps = (s_max / delta).round() as usize;
    let cfg = crate::sandwich::ComovingConfig {
        dx,
        delta,
        steps,
        behind: 2.0,
        ahead: 25.0,
        theta: crate::boundary::DEFAULT_THETA,
        record_every: 1,
        compensate: true,
    };
    let run = crate::sandwich::run_comoving(ic, &cfg)?;
    let mut path = run.upper_path()?;
    path.mu[0] = ic.mu0;
    path.lo[0] = ic.mu0 - dx;
    path.hi[0] = ic.mu0 + dx;
    let g = Grid1D::with_spacing(ic.mu0 - 1.0, ic.mu0 + 40.0, START_PROFILE_DX)?;
    let v = sample_ic(ic, &g)?;
    Ok((magic_identity(&path, &v, ic, 0.0, r, steps as f64 * delta)?, path))
}

/// Direct and restarted runs for the semigroup property.
#[derive(Debug, Clone)]
pub struct SemigroupCheck {
    pub sup_difference: f64,
    /// Worst `sup_difference` budget violation margin (budget minus difference).
    pub margin: f64,
    pub report: Report,
}

/// Makes a profile non-increasing by a running minimum. Only removes
/// rounding-level increases.
fn running_min(p: &Profile) -> Result<Profile> {
    let mut v = p.values.clone();
    for i in 1..v.len() {
        if v[i] > v[i - 1] {
            if v[i] - v[i - 1] > 1e-12 {
                return Err(FbpError::NotMonotone);
            }
            v[i] = v[i - 1];
        }
    }
    Profile::new(p.grid, v, p.left_tail, p.right_tail)
}

/// Solves to `t0 + t` directly and by restarting from the midpoint at `t0`.
/// The sup difference on `[-A, A]` must stay within the two pointwise radii
/// at the end, plus `e^t` times the restart datum's largest radius, plus the
/// slack `10 dx` used by the certificate.
pub fn semigroup_check(
    ic: &InitialCondition,
    grid: &Grid1D,
    t0: f64,
    t: f64,
    delta: f64,
    half_width: f64,
) -> Result<SemigroupCheck> {
    if !(t0 >= 0.0 && t > 0.0) {
        return Err(FbpError::Domain(format!("need t0 >= 0 and t > 0, got {t0}, {t}")));
    }
    let steps = |s: f64| (s / delta).round() as usize;
    let direct = run_sandwich(ic, grid, delta, steps(t0 + t), half_width)?;
    let (restart, start_radius) = if steps(t0) == 0 {
        (direct.clone(), 0.0)
    } else {
        let first = run_sandwich(ic, grid, delta, steps(t0), half_width)?;
        let mid = midpoint_solution(&first)?;
        let start_radius = window_max(grid, &mid.radius, half_width + 6.0 * (2.0 * t).sqrt());
        let restart_ic = InitialCondition::tabulated(running_min(&mid.profile)?, ic.gamma);
        (
            run_sandwich(&restart_ic, grid, delta, steps(t), half_width)?,
            start_radius,
        )
    };
    let (a, b) = (midpoint_solution(&direct)?, midpoint_solution(&restart)?);
    let slack = 10.0 * grid.dx();
    let mut worst_diff: f64 = 0.0;
    let mut margin = f64::INFINITY;
    for (i, x) in grid.points().enumerate() {
        if x.abs() > half_width {
            continue;
        }
        let d = (a.profile.values[i] - b.profile.values[i]).abs();
        let budget = a.radius[i] + b.radius[i] + t.exp() * start_radius + slack;
        worst_diff = worst_diff.max(d);
        margin = margin.min(budget - d);
    }
    let report = Report::new("semigroup_restart", worst_diff, worst_diff + margin, margin >= 0.0)
        .with_detail(format!("t0={t0}, t={t}, delta={delta}"));
    Ok(SemigroupCheck {
        sup_difference: worst_diff,
        margin,
        report,
    })
}

fn window_max(grid: &Grid1D, values: &[f64], half_width: f64) -> f64 {
    grid.points()
        .zip(values)
        .filter(|(x, _)| x.abs() <= half_width)
        .map(|(_, &v)| v)
        .fold(0.0, f64::max)
}

/// Largest amount by which `a` exceeds `b` pointwise.
fn excess(a: &Profile, b: &Profile) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| x - y).fold(0.0, f64::max)
}

/// Runs both solvers on `ic1 <= ic2` and checks the outputs stay ordered
/// within `1e-12`, and the boundaries of the upper iterates within `2 dx`.
pub fn comparison_check(
    ic1: &InitialCondition,
    ic2: &InitialCondition,
    grid: &Grid1D,
    t: f64,
    delta: f64,
    n_exponent: u32,
) -> Result<Vec<Report>> {
    let (v1, v2) = (sample_ic(ic1, grid)?, sample_ic(ic2, grid)?);
    if excess(&v1, &v2) > 0.0 || v1.left_tail > v2.left_tail || v1.right_tail > v2.right_tail {
        return Err(FbpError::Precondition("initial conditions are not ordered".into()));
    }
    let steps = (t / delta).round() as usize;
    let half_width = 1.0;
    let s1 = run_sandwich(ic1, grid, delta, steps, half_width)?;
    let s2 = run_sandwich(ic2, grid, delta, steps, half_width)?;
    let dt = max_stable_dt(grid.dx());
    let u1 = solve_un(ic1, grid, n_exponent, t, dt)?;
    let u2 = solve_un(ic2, grid, n_exponent, t, dt)?;
    let tol = 1e-12;
    let mut out = vec![
        Report::upper("comparison_lower", excess(&s1.lower, &s2.lower), tol),
        Report::upper("comparison_upper", excess(&s1.upper, &s2.upper), tol),
        Report::upper(
            "comparison_penalized",
            excess(u1.final_profile().unwrap(), u2.final_profile().unwrap()),
            tol,
        )
        .with_detail(format!("n={n_exponent}")),
    ];
    let theta = crate::boundary::DEFAULT_THETA;
    let m1 = crate::boundary::extract_mu(&s1.upper, theta)?;
    let m2 = crate::boundary::extract_mu(&s2.upper, theta)?;
    out.push(
        Report::upper("comparison_boundary", m1.mu_hat - m2.mu_hat, 2.0 * grid.dx())
            .with_detail(format!("mu1={:.6}, mu2={:.6}", m1.mu_hat, m2.mu_hat)),
    );
    Ok(out)
}

/// A shifted copy of an initial condition.
pub fn shift_ic(ic: &InitialCondition, by: f64) -> Result<InitialCondition> {
    use crate::grid::IcKind;
    Ok(match &ic.kind {
        IcKind::Step { x0 } => InitialCondition::step(x0 + by),
        IcKind::Exponential { rate, x0 } => InitialCondition::exponential_at(*rate, x0 + by)?,
        IcKind::Tabulated(p) => {
            let g = p.grid;
            let shifted = Grid1D::new(g.x_min() + by, g.x_max() + by, g.len())?;
            InitialCondition::tabulated(
                Profile::new(shifted, p.values.clone(), p.left_tail, p.right_tail)?,
                ic.gamma,
            )
        }
    })
}

/// Sandwich iterates for `ic` on `grid` and for `ic` moved by `k` cells on
/// the moved grid must coincide value by value.
pub fn translation_check(ic: &InitialCondition, grid: &Grid1D, k: i64, delta: f64, steps: usize) -> Result<Report> {
    let moved = grid.shifted(k);
    let moved_ic = shift_ic(ic, k as f64 * grid.dx())?;
    // A jump sitting on a node can land on either side of it after the
    // shift, by rounding; then the two problems differ from the start.
    let start = |ic: &InitialCondition, g: &Grid1D| -> Result<Vec<f64>> {
        let mut v = sample_ic(ic, g)?.values;
        v.extend(crate::sandwich::make_v_plus(ic, g, delta)?.values);
        Ok(v)
    };
    let d0 = start(ic, grid)?
        .iter()
        .zip(&start(&moved_ic, &moved)?)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if d0 > 1e-12 {
        return Err(FbpError::Precondition(format!(
            "shifted data differ by {d0:.3e} before any step; a jump sits on a grid node"
        )));
    }
    let a = run_sandwich(ic, grid, delta, steps, 1.0)?;
    let b = run_sandwich(&moved_ic, &moved, delta, steps, 1.0)?;
    let diff = |p: &SandwichPair, q: &SandwichPair| {
        p.lower
            .values
            .iter()
            .zip(&q.lower.values)
            .chain(p.upper.values.iter().zip(&q.upper.values))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    Ok(Report::upper("translation_equivariance", diff(&a, &b), 1e-12).with_detail(format!("shift={k} cells")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandwich::{run_sandwich_recorded, SandwichConfig};

    fn zero_ic(g: Grid1D) -> InitialCondition {
        InitialCondition::tabulated(Profile::constant(g, 0.0).unwrap(), Some(f64::INFINITY))
    }

    fn flat_path(t_end: f64, mu: f64) -> BoundaryPath {
        BoundaryPath::new(
            vec![0.0, t_end],
            vec![mu; 2],
            vec![mu - 0.01; 2],
            vec![mu + 0.01; 2],
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn orders() {
        let o = refinement_orders(&[4e-3, 1e-3, 2.5e-4]);
        assert!((o[0] - 2.0).abs() < 1e-12 && (o[1] - 2.0).abs() < 1e-12);
        assert!(is_decreasing(&[3.0, 2.0, 1.0]) && !is_decreasing(&[1.0, 1.0]));
    }

    #[test]
    fn duhamel_of_zero() {
        let g = Grid1D::with_spacing(-5.0, 5.0, 0.05).unwrap();
        let times: Vec<f64> = (1..=1024).map(|k| k as f64 / 1024.0).collect();
        let z = Profile::constant(g, 0.0).unwrap();
        let field = SolutionField::new(times, vec![z; 1024]).unwrap();
        let res = duhamel_residual(&field, &zero_ic(g), &flat_path(1.0, -100.0), 1.0, &[0.0, 1.0], 32).unwrap();
        assert_eq!(res.max(), 0.0);
        assert!(duhamel_residual(&field, &zero_ic(g), &flat_path(1.0, -100.0), 1.0, &[0.0], 16).is_err());
    }

    #[test]
    fn duhamel_without_plateau() {
        // v small and boundary far left: u solves the linear equation, and the
        // heat part is exact, so the residual is quadrature error.
        let dx = 0.02;
        let g = Grid1D::with_spacing(-10.0, 10.0, dx).unwrap();
        let c = 0.01;
        let bump = Profile::new(g, g.points().map(|x| c * (-x * x).exp()).collect(), 0.0, 0.0).unwrap();
        let ic = InitialCondition::tabulated(bump.clone(), Some(f64::INFINITY));
        let t = 0.5;
        // Recorded exactly at the slice times of the finer rule.
        let times: Vec<f64> = (0..64).rev().map(|j| t - t * (j as f64 / 64.0).powi(2)).collect();
        let profiles = times
            .iter()
            .map(|&s| {
                let mut p = apply_g(&bump, s).unwrap();
                p.values.iter_mut().for_each(|v| *v *= s.exp());
                p
            })
            .collect();
        let field = SolutionField::new(times, profiles).unwrap();
        let path = flat_path(t, -50.0);
        let coarse = duhamel_residual(&field, &ic, &path, t, &[-0.5, 0.0, 0.7], 32)
            .unwrap()
            .max();
        let fine = duhamel_residual(&field, &ic, &path, t, &[-0.5, 0.0, 0.7], 64)
            .unwrap()
            .max();
        assert!(coarse < 1e-5 && fine < coarse, "{coarse} {fine}");
    }

    #[test]
    fn plateau_residual_is_minus_one() {
        let dx = 0.05;
        let g = Grid1D::with_spacing(-8.0, 10.0, dx).unwrap();
        let cfg = SandwichConfig {
            delta: 0.01,
            steps: 50,
            half_width: 1.0,
            record_every: 1,
        };
        let run = run_sandwich_recorded(&InitialCondition::step(0.0), &g, &cfg).unwrap();
        let field = run.midpoint_field().unwrap();
        let r = pde_residual_at(&field, -4.0, 20).unwrap();
        assert!((r + 1.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn linear_solution_has_small_pde_residual() {
        // e^t p_t * v solves the equation exactly in the continuum.
        let dx = 0.02;
        let g = Grid1D::with_spacing(-10.0, 10.0, dx).unwrap();
        let bump = Profile::new(g, g.points().map(|x| 0.01 * (-x * x).exp()).collect(), 0.0, 0.0).unwrap();
        let times: Vec<f64> = (1..=40).map(|k| 0.5 + 0.001 * k as f64).collect();
        let profiles = times
            .iter()
            .map(|&s| {
                let mut p = apply_g(&bump, s).unwrap();
                p.values.iter_mut().for_each(|v| *v *= s.exp());
                p
            })
            .collect();
        let field = SolutionField::new(times, profiles).unwrap();
        let r = pde_residual_on_s(&field, &flat_path(1.0, -50.0), 0.52, &[-0.5, 0.0, 0.4], 1e-5).unwrap();
        assert!(r.pass, "{}", r.observed);
        assert!(pde_residual_on_s(&field, &flat_path(1.0, 0.0), 0.52, &[0.05], 1.0).is_err());
    }

    #[test]
    fn moment_identity_degenerate_exponent() {
        let mu: Vec<f64> = (0..=400).map(|k| 0.05 * k as f64 * 2.0).collect();
        let times: Vec<f64> = (0..=400).map(|k| 0.05 * k as f64).collect();
        let lo = mu.iter().map(|m| m - 0.01).collect();
        let hi = mu.iter().map(|m| m + 0.01).collect();
        let path = BoundaryPath::new(times, mu, lo, hi, 0.01).unwrap();
        let ic = InitialCondition::step(0.0);
        let g = Grid1D::with_spacing(-2.0, 2.0, 0.01).unwrap();
        let v = sample_ic(&ic, &g).unwrap();
        let m = magic_identity(&path, &v, &ic, 0.0, 0.0, 19.0).unwrap();
        assert_eq!(m.lhs, 1.0);
        // Trapezoid error h²/12 on e^{-s}.
        assert!((m.rhs - (1.0 - (-19f64).exp())).abs() < 3e-4, "{}", m.rhs);
        assert!(m.residual() < m.rhs_tail + 3e-4);
        // The horizon refusal and the exponent range.
        assert!(magic_identity(&path, &v, &ic, 0.0, 0.0, 5.0).is_err());
        assert!(magic_identity(&path, &v, &ic, 0.0, 1.0, 19.0).is_err());
        let untyped = InitialCondition::tabulated(v.clone(), None);
        assert!(magic_identity(&path, &v, &untyped, 0.0, 0.5, 19.0).is_err());
    }

    #[test]
    fn semigroup_trivial_restart() {
        let g = Grid1D::with_spacing(-4.0, 8.0, 0.02).unwrap();
        let c = semigroup_check(&InitialCondition::step(0.0), &g, 0.0, 0.2, 0.01, 1.0).unwrap();
        assert_eq!(c.sup_difference, 0.0);
        let z = semigroup_check(&zero_ic(g), &g, 0.1, 0.1, 0.01, 1.0);
        // v = 0 has left tail 0, which the scheme does not accept as a datum.
        assert!(z.is_err());
    }

    #[test]
    fn comparison_and_translation() {
        let g = Grid1D::with_spacing(-6.0, 10.0, 0.02).unwrap();
        let a = InitialCondition::step(0.0);
        let reports = comparison_check(&a, &a, &g, 0.2, 0.01, 4).unwrap();
        assert!(reports.iter().all(|r| r.pass && r.observed <= 0.0));
        let b = InitialCondition::step(1.0);
        assert!(comparison_check(&b, &a, &g, 0.2, 0.01, 4).is_err());
        let reports = comparison_check(&a, &b, &g, 0.2, 0.01, 4).unwrap();
        assert!(reports.iter().all(|r| r.pass), "{reports:?}");
        let r = translation_check(&InitialCondition::step(0.01), &g, 13, 0.01, 20).unwrap();
        // On this grid the node at 0 and its shifted copy round differently.
        let g2 = Grid1D::with_spacing(-8.0, 12.0, 0.01).unwrap();
        assert!(matches!(
            translation_check(&InitialCondition::step(0.0), &g2, 7, 0.01, 20),
            Err(FbpError::Precondition(_))
        ));
        assert!(r.pass, "{}", r.observed);
    }
}

//! Free boundary extraction `μ_t = inf{x : u(x,t) < 1}` from sampled profiles,
//! and the structural checks the boundary must pass: finiteness, bounded
//! leftward increments, the Neumann condition and the density normalization.

use crate::error::{FbpError, Result};
use crate::grid::{check_monotone_within, BoundaryPath, Profile, SolutionField};
use crate::report::Report;
use serde::{Deserialize, Serialize};

/// Default plateau threshold: values `>= 1 - θ` count as on the plateau.
pub const DEFAULT_THETA: f64 = 1e-6;

/// Rounding-level increases tolerated in profiles handed to [`extract_mu`].
/// Heat rows that touch a window edge are renormalized separately and can
/// differ from their neighbours by a few ulps.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Default constant of the continuity flag `C sqrt(Δt) + 2dx`.
pub const DEFAULT_JUMP_CONSTANT: f64 = 10.0;

/// Default constant of the Neumann slope tolerance `κ(dx) = C sqrt(dx)`.
pub const DEFAULT_SLOPE_CONSTANT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryStatus {
    Interior,
    /// No value reaches the plateau: `μ` lies left of the window.
    BelowWindow,
    /// The whole window is on the plateau: `μ` lies right of it.
    AboveWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEstimate {
    pub t: f64,
    pub mu_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub status: BoundaryStatus,
    pub source: String,
}

impl BoundaryEstimate {
    pub fn is_interior(&self) -> bool {
        self.status == BoundaryStatus::Interior
    }
}

/// Locates the `1 - θ` crossing of a non-increasing profile.
pub fn extract_mu(p: &Profile, theta: f64) -> Result<BoundaryEstimate> {
    extract_mu_at(p, theta, f64::NAN, "")
}

pub fn extract_mu_at(p: &Profile, theta: f64, t: f64, source: &str) -> Result<BoundaryEstimate> {
    if !(theta > 0.0 && theta <= 0.1) {
        return Err(FbpError::Domain(format!("plateau threshold {theta} not in (0, 0.1]")));
    }
    if !check_monotone_within(p, MONOTONE_SLACK) {
        return Err(FbpError::NotMonotone);
    }
    let level = 1.0 - theta;
    let g = &p.grid;
    let source = source.to_string();
    let Some(k) = p.values.iter().rposition(|&v| v >= level) else {
        return Ok(BoundaryEstimate {
            t,
            mu_hat: f64::NEG_INFINITY,
            lo: f64::NEG_INFINITY,
            hi: g.x_min(),
            status: BoundaryStatus::BelowWindow,
            source,
        });
    };
    if k == g.len() - 1 {
        return Ok(BoundaryEstimate {
            t,
            mu_hat: f64::INFINITY,
            lo: g.x_max(),
            hi: f64::INFINITY,
            status: BoundaryStatus::AboveWindow,
            source,
        });
    }
    let (a, b) = (p.values[k], p.values[k + 1]);
    let frac = ((a - level) / (a - b)).clamp(0.0, 1.0);
    Ok(BoundaryEstimate {
        t,
        mu_hat: g.x(k) + frac * g.dx(),
        lo: g.x(k),
        hi: g.x(k + 1),
        status: BoundaryStatus::Interior,
        source,
    })
}

/// Boundary path of a solution field, with the times whose jump from the
/// previous sample exceeds `C sqrt(Δt) + 2dx`.
#[derive(Debug, Clone)]
pub struct TrackedPath {
    pub path: BoundaryPath,
    pub suspect_jumps: Vec<f64>,
}

pub fn track_path(field: &SolutionField, theta: f64) -> Result<TrackedPath> {
    track_path_with(field, theta, DEFAULT_JUMP_CONSTANT, None)
}

/// As [`track_path`], optionally prepending a known initial boundary
/// `(0, μ_0)`.
pub fn track_path_with(field: &SolutionField, theta: f64, jump_constant: f64, mu0: Option<f64>) -> Result<TrackedPath> {
    let dx = field
        .profiles
        .first()
        .map(|p| p.grid.dx())
        .ok_or_else(|| FbpError::Precondition("empty solution field".into()))?;
    let mut times = Vec::with_capacity(field.len() + 1);
    let mut mu = Vec::with_capacity(field.len() + 1);
    let mut lo = Vec::with_capacity(field.len() + 1);
    let mut hi = Vec::with_capacity(field.len() + 1);
    if let Some(m0) = mu0.filter(|m| m.is_finite()) {
        times.push(0.0);
        mu.push(m0);
        lo.push(m0);
        hi.push(m0);
    }
    for (&t, p) in field.times.iter().zip(&field.profiles) {
        let est = extract_mu_at(p, theta, t, "field")?;
        if !est.is_interior() {
            return Err(FbpError::Precondition(format!(
                "boundary outside the window at t={t} ({:?})",
                est.status
            )));
        }
        times.push(t);
        mu.push(est.mu_hat);
        lo.push(est.lo);
        hi.push(est.hi);
    }
    let mut suspect_jumps = Vec::new();
    for k in 1..times.len() {
        let allowed = jump_constant * (times[k] - times[k - 1]).sqrt() + 2.0 * dx;
        if (mu[k] - mu[k - 1]).abs() > allowed {
            suspect_jumps.push(times[k]);
        }
    }
    Ok(TrackedPath {
        path: BoundaryPath::new(times, mu, lo, hi, dx)?,
        suspect_jumps,
    })
}

/// Worst violation of `μ_{t+ε} - μ_t >= -ε^{1/3} - slack` over all sampled
/// pairs with `t > 0`. Reported as `observed = max(-(Δμ + ε^{1/3}))`,
/// bound = slack.
///
/// A sample at `t = 0` is skipped: from a datum with a jump the boundary
/// leaves faster than `ε^{1/3}`.
pub fn check_increments(path: &BoundaryPath, slack: f64) -> Report {
    let n = path.len();
    let first = path.times.partition_point(|&t| t <= 0.0);
    let mut worst = f64::NEG_INFINITY;
    let mut at = (0.0, 0.0);
    for i in first..n {
        for j in i + 1..n {
            let eps = path.times[j] - path.times[i];
            let v = -(path.mu[j] - path.mu[i] + eps.cbrt());
            if v > worst {
                worst = v;
                at = (path.times[i], path.times[j]);
            }
        }
    }
    Report::upper("boundary_increments", worst, slack).with_detail(format!(
        "{} samples, worst pair t=({:.4}, {:.4})",
        n - first,
        at.0,
        at.1
    ))
}

/// One-sided slope `(p(μ̂ + dx) - p(μ̂))/dx` and the tolerance `C sqrt(dx)`.
pub fn neumann_slope(p: &Profile, est: &BoundaryEstimate) -> f64 {
    let dx = p.grid.dx();
    (p.eval(est.mu_hat + dx) - p.eval(est.mu_hat)) / dx
}

pub fn check_neumann(p: &Profile, est: &BoundaryEstimate) -> Report {
    check_neumann_with(p, est, DEFAULT_SLOPE_CONSTANT)
}

pub fn check_neumann_with(p: &Profile, est: &BoundaryEstimate, slope_constant: f64) -> Report {
    let kappa = slope_constant * p.grid.dx().sqrt();
    if !est.is_interior() {
        return Report::new("neumann", f64::NAN, kappa, false).with_detail("boundary outside window");
    }
    let slope = neumann_slope(p, est);
    Report::upper("neumann", slope.abs(), kappa).with_detail(format!("slope {slope:.4e}"))
}

/// Checks `ρ = -∂_x u` for a profile started from a probability measure:
/// `ρ >= 0`, `ρ(μ̂) ≈ 0` and `∫_{μ̂}^∞ ρ = 1`.
pub fn check_density(p: &Profile, est: &BoundaryEstimate) -> Vec<Report> {
    let g = &p.grid;
    let dx = g.dx();
    let rho: Vec<f64> = p.values.windows(2).map(|w| (w[0] - w[1]) / dx).collect();
    let min_rho = rho.iter().cloned().fold(f64::INFINITY, f64::min);
    let kappa = DEFAULT_SLOPE_CONSTANT * dx.sqrt();
    let mut out = vec![Report::upper("density_nonnegative", -min_rho, 1e-12)];
    if !est.is_interior() {
        out.push(Report::new("density_at_boundary", f64::NAN, kappa, false));
        out.push(Report::new("density_mass", f64::NAN, 1e-3, false));
        return out;
    }
    out.push(Report::upper("density_at_boundary", neumann_slope(p, est).abs(), kappa));
    // ∫_{μ̂}^{x_max} ρ telescopes to p(μ̂) - p(x_max); the mass beyond the
    // window is p(x_max) - right_tail.
    let inside = p.eval(est.mu_hat) - p.values[g.len() - 1];
    let window_tail = (p.values[g.len() - 1] - p.right_tail).abs();
    let mass = inside + (p.values[g.len() - 1] - p.right_tail);
    out.push(
        Report::upper("density_mass", (mass - 1.0).abs(), 1e-3 + window_tail).with_detail(format!("mass {mass:.6}")),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_ic, Grid1D, InitialCondition};

    #[test]
    fn step_boundary_at_jump() {
        let g = Grid1D::with_spacing(-1.0, 1.0, 0.01).unwrap();
        let p = sample_ic(&InitialCondition::step(0.0), &g).unwrap();
        let e = extract_mu(&p, DEFAULT_THETA).unwrap();
        assert!(e.is_interior());
        assert!(e.mu_hat.abs() < 1e-6);
        assert!(e.lo >= -0.01 - 1e-12 && e.hi <= 0.01 + 1e-12);
    }

    #[test]
    fn sentinels() {
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        let one = Profile::constant(g, 1.0).unwrap();
        let e = extract_mu(&one, DEFAULT_THETA).unwrap();
        assert_eq!(e.status, BoundaryStatus::AboveWindow);
        let low = Profile::constant(g, 0.5).unwrap();
        let e = extract_mu(&low, DEFAULT_THETA).unwrap();
        assert_eq!(e.status, BoundaryStatus::BelowWindow);
        assert_eq!(e.lo, f64::NEG_INFINITY);
        assert_eq!(e.hi, 0.0);
        assert!(extract_mu(&low, 0.0).is_err());
        let bump = Profile::new(g, (0..11).map(|i| if i == 5 { 1.0 } else { 0.0 }).collect(), 0.0, 0.0).unwrap();
        assert!(matches!(extract_mu(&bump, DEFAULT_THETA), Err(FbpError::NotMonotone)));
    }

    #[test]
    fn ordered_profiles_give_ordered_boundaries() {
        let g = Grid1D::with_spacing(-2.0, 2.0, 0.01).unwrap();
        let lo = Profile::new(
            g,
            g.points()
                .map(|x| (1.0 - (x + 0.3).max(0.0).powi(2)).max(0.0))
                .collect(),
            1.0,
            0.0,
        )
        .unwrap();
        let up = Profile::new(
            g,
            g.points()
                .map(|x| (1.0 - (x - 0.2).max(0.0).powi(2)).max(0.0))
                .collect(),
            1.0,
            0.0,
        )
        .unwrap();
        let (a, b) = (extract_mu(&lo, 1e-6).unwrap(), extract_mu(&up, 1e-6).unwrap());
        assert!(a.mu_hat <= b.mu_hat);
    }

    fn cap(g: Grid1D, mu: f64) -> Profile {
        // C¹ contact: 1 on the left, 1 - (x-μ)² after, floored at 0.
        Profile::new(
            g,
            g.points().map(|x| (1.0 - (x - mu).max(0.0).powi(2)).max(0.0)).collect(),
            1.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn neumann_detects_smooth_and_kinked_contacts() {
        let mut slopes = Vec::new();
        for dx in [0.02, 0.01, 0.005] {
            let g = Grid1D::with_spacing(-2.0, 2.0, dx).unwrap();
            let p = cap(g, 0.1234);
            let e = extract_mu(&p, DEFAULT_THETA).unwrap();
            let r = check_neumann(&p, &e);
            assert!(r.pass, "{r:?}");
            slopes.push(r.observed);
        }
        assert!(slopes[0] > slopes[1] && slopes[1] > slopes[2]);

        let g = Grid1D::with_spacing(-2.0, 2.0, 0.01).unwrap();
        let kink = Profile::new(
            g,
            g.points()
                .map(|x| if x <= 0.0 { 1.0 } else { (1.0 - x).max(0.0) })
                .collect(),
            1.0,
            0.0,
        )
        .unwrap();
        let e = extract_mu(&kink, DEFAULT_THETA).unwrap();
        let r = check_neumann(&kink, &e);
        assert!(!r.pass);
        assert!((r.observed - 1.0).abs() < 1e-3);
    }

    #[test]
    fn density_of_smooth_cap() {
        let g = Grid1D::with_spacing(-2.0, 3.0, 0.01).unwrap();
        let p = cap(g, 0.0);
        let e = extract_mu(&p, DEFAULT_THETA).unwrap();
        let reports = check_density(&p, &e);
        assert!(reports.iter().all(|r| r.pass), "{reports:?}");
    }

    #[test]
    fn tracking_constant_field() {
        let g = Grid1D::with_spacing(-2.0, 2.0, 0.01).unwrap();
        let p = cap(g, 0.3);
        let field = SolutionField::new(vec![0.1, 0.2, 0.3], vec![p.clone(), p.clone(), p]).unwrap();
        let tp = track_path(&field, DEFAULT_THETA).unwrap();
        assert!(tp.path.mu.windows(2).all(|w| w[0] == w[1]));
        assert!(tp.suspect_jumps.is_empty());
        assert!(check_increments(&tp.path, 0.04).pass);

        let far = cap(g, -1.5);
        let near = cap(g, 1.5);
        let jumpy = SolutionField::new(vec![0.1, 0.11], vec![far, near]).unwrap();
        let tp = track_path(&jumpy, DEFAULT_THETA).unwrap();
        assert_eq!(tp.suspect_jumps, vec![0.11]);
    }

    #[test]
    fn increment_check_flags_leftward_jumps() {
        let path = BoundaryPath::new(
            vec![0.1, 0.2],
            vec![0.0, -1.0],
            vec![-0.005, -1.005],
            vec![0.005, -0.995],
            0.01,
        )
        .unwrap();
        let r = check_increments(&path, 0.04);
        assert!(!r.pass);
        assert!((r.observed - (1.0 - 0.1f64.cbrt())).abs() < 1e-12);
    }
}

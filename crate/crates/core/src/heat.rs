//! The heat kernel `p_t(x) = exp(-x²/4t)/sqrt(4πt)` (Brownian motion with
//! `Var B_t = 2t`), the convolution operator `G_t f = p_t * f` on profiles, and
//! the cut `C_m f = min(f, m)`.
//!
//! `G_t` integrates the kernel exactly against the piecewise-linear interpolant
//! of the profile inside the window and against the tail constants outside it.
//! Every row of the discrete operator has nonnegative weights summing to 1 and
//! the result is clamped to the hull of the values it averages, so the
//! operator maps constants to themselves bit-exactly and is monotone in
//! floating point: `f <= g` implies `G f <= G g` with no rounding exceptions.

use crate::error::{FbpError, Result};
use crate::grid::{Grid1D, Profile};
use rayon::prelude::*;
use std::collections::VecDeque;
use std::f64::consts::PI;

/// Variance per unit time of the underlying Brownian motion. The generator is
/// `∂²_x` with no factor one half.
pub const BM_VARIANCE_RATE: f64 = 2.0;

/// Default kernel truncation, in standard deviations `sqrt(2t)`. The dropped
/// mass is `erfc(8/√2) ≈ 1.2e-15`.
pub const DEFAULT_TRUNCATION: f64 = 8.0;

pub fn heat_kernel(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(FbpError::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(kernel(t, x))
}

#[inline]
fn kernel(t: f64, x: f64) -> f64 {
    (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

/// `∫_a^b p_t(z) dz`, evaluated on the side of zero where erfc does not cancel.
pub fn gaussian_mass(t: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let s = 2.0 * t.sqrt();
    if a >= 0.0 {
        0.5 * (libm::erfc(a / s) - libm::erfc(b / s))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b / s) - libm::erfc(-a / s))
    } else {
        0.5 * (libm::erf(b / s) - libm::erf(a / s))
    }
}

/// `∫_a^∞ p_t(z) dz`.
pub fn gaussian_upper_tail(t: f64, a: f64) -> f64 {
    0.5 * libm::erfc(a / (2.0 * t.sqrt()))
}

/// Scale and truncation of a discrete heat kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub t: f64,
    pub truncation_radius: f64,
}

impl KernelSpec {
    pub fn new(t: f64, truncation_radius: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(FbpError::Domain(format!("kernel time must be positive, got {t}")));
        }
        if !(truncation_radius >= 6.0) {
            return Err(FbpError::Domain(format!(
                "truncation radius {truncation_radius} below 6 standard deviations"
            )));
        }
        Ok(Self { t, truncation_radius })
    }

    pub fn with_default_truncation(t: f64) -> Result<Self> {
        Self::new(t, DEFAULT_TRUNCATION)
    }

    /// Kernel standard deviation `sqrt(2t)`.
    pub fn std_dev(&self) -> f64 {
        (BM_VARIANCE_RATE * self.t).sqrt()
    }
}

/// Precomputed discrete `G_t` for grids of a fixed spacing.
#[derive(Debug, Clone)]
pub struct HeatOperator {
    spec: KernelSpec,
    dx: f64,
    /// Half-width of the band in cells.
    band: usize,
    /// Weight of the left node of the cell at offset `d = i - c`,
    /// stored at `d + band - 1` for `d in 1-band..=band`.
    cell_left: Vec<f64>,
    /// Weight of the right node of the same cell.
    cell_right: Vec<f64>,
    /// Normalized node weights for rows whose band lies inside the window,
    /// index `k + band` for node offset `k = i - j in -band..=band`.
    interior: Vec<f64>,
}

impl HeatOperator {
    pub fn new(dx: f64, spec: KernelSpec) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(FbpError::Domain(format!("grid spacing must be positive, got {dx}")));
        }
        let t = spec.t;
        let radius = spec.truncation_radius * spec.std_dev();
        let band = ((radius / dx).ceil() as usize).max(1);
        let mut cell_left = Vec::with_capacity(2 * band);
        let mut cell_right = Vec::with_capacity(2 * band);
        for d in (1 - band as i64)..=(band as i64) {
            let za = (d - 1) as f64 * dx;
            let zb = d as f64 * dx;
            let m0 = gaussian_mass(t, za, zb);
            // ∫ z p_t(z) dz = 2t (p_t(za) - p_t(zb))
            let m1 = 2.0 * t * (kernel(t, za) - kernel(t, zb));
            let left = m1 / dx - (d - 1) as f64 * m0;
            let right = d as f64 * m0 - m1 / dx;
            cell_left.push(left.max(0.0));
            cell_right.push(right.max(0.0));
        }
        let mut interior = vec![0.0; 2 * band + 1];
        for k in -(band as i64)..=(band as i64) {
            // Node j = i - k is the left node of the cell with d = k and the
            // right node of the cell with d = k + 1.
            let mut w = 0.0;
            if k >= 1 - band as i64 && k <= band as i64 {
                w += cell_left[(k + band as i64 - 1) as usize];
            }
            if k + 1 >= 1 - band as i64 && k < band as i64 {
                w += cell_right[(k + band as i64) as usize];
            }
            interior[(k + band as i64) as usize] = w;
        }
        let total: f64 = interior.iter().sum();
        interior.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            spec,
            dx,
            band,
            cell_left,
            cell_right,
            interior,
        })
    }

    pub fn for_time(dx: f64, t: f64) -> Result<Self> {
        Self::new(dx, KernelSpec::with_default_truncation(t)?)
    }

    /// `G_t` built with the kernel time reduced by `dx²/12`. Integrating
    /// against the linear interpolant adds the hat function's variance
    /// `dx²/6` to every application; over many short steps that shows up as
    /// a diffusivity of `1 + dx²/(12t)`. The compensated operator has the
    /// right second moment at the cost of no longer being `p_t` on the
    /// interpolant.
    pub fn compensated(dx: f64, t: f64) -> Result<Self> {
        let reduced = t - dx * dx / 12.0;
        if !(reduced >= 0.5 * t) {
            return Err(FbpError::Domain(format!(
                "dx={dx} too coarse to compensate a kernel of time {t}"
            )));
        }
        Self::new(dx, KernelSpec::with_default_truncation(reduced)?)
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn band(&self) -> usize {
        self.band
    }

    fn check_grid(&self, grid: &Grid1D) -> Result<()> {
        if (grid.dx() - self.dx).abs() > 1e-12 * self.dx {
            return Err(FbpError::Domain(format!(
                "operator built for dx={} applied to grid with dx={}",
                self.dx,
                grid.dx()
            )));
        }
        Ok(())
    }

    /// Applies `G_t`. Output tails equal input tails.
    pub fn apply(&self, p: &Profile) -> Result<Profile> {
        self.check_grid(&p.grid)?;
        let values = self.apply_values(&p.grid, &p.values, p.left_tail, p.right_tail);
        Ok(Profile::raw(p.grid, values, p.left_tail, p.right_tail))
    }

    pub(crate) fn apply_values(&self, grid: &Grid1D, f: &[f64], lt: f64, rt: f64) -> Vec<f64> {
        let m = f.len();
        let band = self.band;
        let (lo, hi) = window_hull(f, band);
        let x_min = grid.x_min();
        let x_max = grid.x_max();
        let t = self.spec.t;
        (0..m)
            .into_par_iter()
            .map(|i| {
                let touches_left = i < band;
                // Rows whose band runs past an edge pick up the exact tail
                // mass there; inner rows use the shared stencil.
                let touches_right = i + band >= m;
                let mut vmin = lo[i];
                let mut vmax = hi[i];
                if touches_left {
                    vmin = vmin.min(lt);
                    vmax = vmax.max(lt);
                }
                if touches_right {
                    vmin = vmin.min(rt);
                    vmax = vmax.max(rt);
                }
                if vmin == vmax {
                    return vmin;
                }
                let raw = if !touches_left && !touches_right {
                    let mut acc = 0.0;
                    let base = i - band;
                    for (w, v) in self.interior.iter().rev().zip(&f[base..=i + band]) {
                        acc += w * v;
                    }
                    acc
                } else {
                    let c_lo = i.saturating_sub(band);
                    let c_hi = (i + band).min(m - 1);
                    let mut acc = 0.0;
                    let mut wsum = 0.0;
                    for c in c_lo..c_hi {
                        let d = i as i64 - c as i64;
                        let idx = (d + band as i64 - 1) as usize;
                        let (wl, wr) = (self.cell_left[idx], self.cell_right[idx]);
                        acc += wl * f[c] + wr * f[c + 1];
                        wsum += wl + wr;
                    }
                    let xi = grid.x(i);
                    if touches_left {
                        let w = gaussian_upper_tail(t, xi - x_min);
                        acc += w * lt;
                        wsum += w;
                    }
                    if touches_right {
                        let w = gaussian_upper_tail(t, x_max - xi);
                        acc += w * rt;
                        wsum += w;
                    }
                    acc / wsum
                };
                raw.clamp(vmin, vmax)
            })
            .collect()
    }
}

/// Sliding min and max of `f` over `[i - band, i + band]` (clipped).
fn window_hull(f: &[f64], band: usize) -> (Vec<f64>, Vec<f64>) {
    let m = f.len();
    let mut lo = vec![0.0; m];
    let mut hi = vec![0.0; m];
    let mut qmin: VecDeque<usize> = VecDeque::new();
    let mut qmax: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..m {
        let right = (i + band).min(m - 1);
        while next <= right {
            while qmin.back().is_some_and(|&j| f[j] >= f[next]) {
                qmin.pop_back();
            }
            qmin.push_back(next);
            while qmax.back().is_some_and(|&j| f[j] <= f[next]) {
                qmax.pop_back();
            }
            qmax.push_back(next);
            next += 1;
        }
        let left = i.saturating_sub(band);
        while qmin.front().is_some_and(|&j| j < left) {
            qmin.pop_front();
        }
        while qmax.front().is_some_and(|&j| j < left) {
            qmax.pop_front();
        }
        lo[i] = f[*qmin.front().unwrap()];
        hi[i] = f[*qmax.front().unwrap()];
    }
    (lo, hi)
}

/// `G_t p` with the default truncation.
pub fn apply_g(p: &Profile, t: f64) -> Result<Profile> {
    HeatOperator::for_time(p.grid.dx(), t)?.apply(p)
}

/// `C_m p = min(p, m)`, applied to values and tails.
pub fn apply_cut(p: &Profile, m: f64) -> Result<Profile> {
    if !(m > 0.0) {
        return Err(FbpError::Domain(format!("cut level must be positive, got {m}")));
    }
    Ok(Profile::raw(
        p.grid,
        p.values.iter().map(|&v| v.min(m)).collect(),
        p.left_tail.min(m),
        p.right_tail.min(m),
    ))
}

/// Multiplies values and tails by `c`.
pub fn scale(p: &Profile, c: f64) -> Profile {
    Profile::raw(
        p.grid,
        p.values.iter().map(|&v| v * c).collect(),
        p.left_tail * c,
        p.right_tail * c,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_ic, InitialCondition};
    use proptest::prelude::*;

    fn step_profile(dx: f64, x0: f64, x1: f64) -> Profile {
        let g = Grid1D::with_spacing(x0, x1, dx).unwrap();
        sample_ic(&InitialCondition::step(0.0), &g).unwrap()
    }

    #[test]
    fn kernel_closed_form() {
        let v = heat_kernel(1.0, 0.0).unwrap();
        assert!((v - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-16);
        assert!((v - 0.282_094_8).abs() < 1e-7);
        for &x in &[0.3, 1.7, 4.0] {
            assert_eq!(heat_kernel(0.7, x).unwrap(), heat_kernel(0.7, -x).unwrap());
        }
        assert!(heat_kernel(0.0, 1.0).is_err());
        assert!(heat_kernel(-1.0, 1.0).is_err());
    }

    #[test]
    fn kernel_normalized() {
        // Composite Simpson on [-40, 40] for t = 1.
        let n = 80_000;
        let h = 80.0 / n as f64;
        let mut s = kernel(1.0, -40.0) + kernel(1.0, 40.0);
        for k in 1..n {
            let x = -40.0 + k as f64 * h;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * kernel(1.0, x);
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-12);
        assert!((gaussian_mass(1.0, -40.0, 40.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constants_are_preserved_exactly() {
        let g = Grid1D::with_spacing(-3.0, 3.0, 0.01).unwrap();
        for &c in &[0.0, 0.3, 1.0, 0.123_456_789] {
            let p = Profile::constant(g, c).unwrap();
            let out = apply_g(&p, 0.05).unwrap();
            assert!(out.values.iter().all(|&v| v == c));
            assert_eq!((out.left_tail, out.right_tail), (c, c));
        }
    }

    #[test]
    fn step_half_mass_at_jump() {
        // The sampled step jumps over [0, dx]; its interpolant is the step
        // shifted by dx/2 up to O(dx²).
        let dx = 0.001;
        let p = step_profile(dx, -5.0, 5.0);
        let out = apply_g(&p, 1.0).unwrap();
        let i = p.grid.nearest(0.0);
        let shift = 0.5 * dx * kernel(1.0, 0.0);
        assert!((out.values[i] - 0.5 - shift).abs() < 1e-6);
    }

    #[test]
    fn step_tail_value_matches_quadrature() {
        // Oracle: ∫_{-∞}^{0} p_δ(x - y) dy at x = 2√δ by Simpson on a fine mesh.
        let delta: f64 = 0.01;
        let x = 2.0 * delta.sqrt();
        let n = 200_000;
        let a = -10.0;
        let h = (0.0 - a) / n as f64;
        let f = |y: f64| kernel(delta, x - y);
        let mut s = f(a) + f(0.0);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
        }
        let oracle = s * h / 3.0;
        assert!((oracle - 0.078_649_603_525_143_2).abs() < 1e-10);
        assert!((oracle - 0.5 * libm::erfc(1.0)).abs() < 1e-12);

        // Place the jump at a cell midpoint so the interpolant is symmetric
        // about zero: values 1 at x <= -dx/2, 0 at x >= dx/2.
        let dx = 0.0005;
        let g = Grid1D::with_spacing(-3.0 - dx / 2.0, 3.0, dx).unwrap();
        let p = sample_ic(&InitialCondition::step(0.0), &g).unwrap();
        let out = apply_g(&p, delta).unwrap();
        assert!((out.eval(x) - oracle).abs() < 2e-5);
    }

    #[test]
    fn cut_examples() {
        let g = Grid1D::new(0.0, 1.0, 4).unwrap();
        let p = Profile::constant(g, 0.7).unwrap();
        let c = apply_cut(&p, 0.5).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.5));
        assert_eq!(c.left_tail, 0.5);
        let q = Profile::new(g, vec![1.0, 0.6, 0.2, 0.0], 1.0, 0.0).unwrap();
        assert_eq!(apply_cut(&q, 1.0).unwrap(), q);
        let once = apply_cut(&q, 0.4).unwrap();
        assert_eq!(apply_cut(&once, 0.4).unwrap(), once);
        assert!(apply_cut(&q, 0.0).is_err());
        assert!(apply_g(&q, 0.0).is_err());
    }

    #[test]
    fn compensated_rows_have_the_target_variance() {
        let (dx, t) = (0.02, 0.001);
        let second_moment = |op: &HeatOperator| {
            let b = op.band() as f64;
            op.interior
                .iter()
                .enumerate()
                .map(|(k, w)| w * ((k as f64 - b) * dx).powi(2))
                .sum::<f64>()
        };
        let plain = second_moment(&HeatOperator::for_time(dx, t).unwrap());
        let comp = second_moment(&HeatOperator::compensated(dx, t).unwrap());
        assert!((plain - (2.0 * t + dx * dx / 6.0)).abs() < 1e-9, "{plain}");
        assert!((comp - 2.0 * t).abs() < 1e-9, "{comp}");
        assert!(HeatOperator::compensated(0.1, 0.001).is_err());
    }

    #[test]
    fn rows_sum_to_one() {
        let op = HeatOperator::for_time(0.01, 0.02).unwrap();
        let s: f64 = op.interior.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(op.interior.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn window_hull_matches_brute_force() {
        let f: Vec<f64> = (0..57).map(|i| ((i * 37) % 11) as f64).collect();
        for band in [1, 3, 10, 80] {
            let (lo, hi) = window_hull(&f, band);
            for i in 0..f.len() {
                let a = i.saturating_sub(band);
                let b = (i + band).min(f.len() - 1);
                let mn = f[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
                let mx = f[a..=b].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!((lo[i], hi[i]), (mn, mx));
            }
        }
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 40..120).prop_map(|v| {
            let f: Vec<f64> = v.iter().map(|(a, b)| a.min(*b)).collect();
            let g: Vec<f64> = v.iter().map(|(a, b)| a.max(*b)).collect();
            (f, g)
        })
    }

    proptest! {
        #[test]
        fn heat_is_monotone_and_contractive((f, g) in arb_pair(), t in 0.0005f64..0.05) {
            let grid = Grid1D::new(0.0, 0.05 * (f.len() - 1) as f64, f.len()).unwrap();
            let pf = Profile::new(grid, f.clone(), f[0], *f.last().unwrap()).unwrap();
            let pg = Profile::new(grid, g.clone(), g[0].max(f[0]), g.last().unwrap().max(*f.last().unwrap())).unwrap();
            let op = HeatOperator::for_time(grid.dx(), t).unwrap();
            let gf = op.apply(&pf).unwrap();
            let gg = op.apply(&pg).unwrap();
            for (a, b) in gf.values.iter().zip(&gg.values) {
                prop_assert!(a <= b);
            }
            let input_gap = f.iter().zip(&g).map(|(a, b)| b - a).fold(0.0, f64::max)
                .max(pg.left_tail - pf.left_tail).max(pg.right_tail - pf.right_tail);
            let output_gap = gf.values.iter().zip(&gg.values).map(|(a, b)| b - a).fold(0.0, f64::max);
            prop_assert!(output_gap <= input_gap + 1e-15);
            for m in [0.2, 0.5, 0.9] {
                let cf = apply_cut(&pf, m).unwrap();
                let cg = apply_cut(&pg, m).unwrap();
                for (a, b) in cf.values.iter().zip(&cg.values) {
                    prop_assert!(a <= b);
                }
            }
        }

        #[test]
        fn cut_commutes_with_exponential_growth(f in prop::collection::vec(0.0f64..1.0, 1..64), delta in 0.001f64..0.5) {
            let grid = Grid1D::new(0.0, 1.0, f.len().max(2)).unwrap();
            let mut vals = f.clone();
            vals.resize(grid.len(), 0.0);
            let p = Profile::new(grid, vals, 1.0, 0.0).unwrap();
            let lhs = apply_cut(&scale(&p, delta.exp()), 1.0).unwrap();
            let rhs = scale(&apply_cut(&p, (-delta).exp()).unwrap(), delta.exp());
            for (a, b) in lhs.values.iter().zip(&rhs.values) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON);
            }
        }
    }
}

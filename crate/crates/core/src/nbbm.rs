//! Branching Brownian motion with selection (N-BBM): `N` particles move as
//! Brownian motions (`Var = 2t`), each branches at rate 1, and every birth
//! removes the leftmost particle. The fraction of particles right of `a`
//! approximates `u(a,t)` for the datum `v(x) = ∫_x^∞ φ`.

use crate::error::{FbpError, Result};
use crate::grid::{Grid1D, InitialCondition, Profile};
use crate::heat::BM_VARIANCE_RATE;
use crate::report::Report;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

/// Density of the initial particle positions.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Uniform {
        a: f64,
        b: f64,
    },
    /// `rate e^{-rate (x - x0)}` on `[x0, ∞)`.
    Exponential {
        rate: f64,
        x0: f64,
    },
    /// Piecewise constant on equal-width bins starting at `x0`.
    Histogram {
        x0: f64,
        width: f64,
        weights: Vec<f64>,
    },
}

impl Density {
    /// Checks boundedness and unit mass.
    pub fn validate(&self) -> Result<()> {
        match self {
            Density::Uniform { a, b } if a.is_finite() && b.is_finite() && a < b => Ok(()),
            Density::Uniform { a, b } => Err(FbpError::Domain(format!("uniform on [{a}, {b}]"))),
            Density::Exponential { rate, x0 } if *rate > 0.0 && rate.is_finite() && x0.is_finite() => Ok(()),
            Density::Exponential { rate, .. } => Err(FbpError::Domain(format!("exponential rate {rate}"))),
            Density::Histogram { x0, width, weights } => {
                if weights.is_empty() || !(*width > 0.0) || !x0.is_finite() {
                    return Err(FbpError::Domain("empty histogram".into()));
                }
                if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                    return Err(FbpError::Domain(
                        "histogram weights must be finite and nonnegative".into(),
                    ));
                }
                let mass: f64 = weights.iter().sum::<f64>() * width;
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(FbpError::Precondition(format!("density has mass {mass}, not 1")));
                }
                Ok(())
            }
        }
    }

    /// Inverse CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Density::Uniform { a, b } => a + (b - a) * p,
            Density::Exponential { rate, x0 } => x0 - (-p).ln_1p() / rate,
            Density::Histogram { x0, width, weights } => {
                let mut acc = 0.0;
                for (k, &w) in weights.iter().enumerate() {
                    let mass = w * width;
                    if p <= acc + mass && mass > 0.0 {
                        return x0 + width * (k as f64 + (p - acc) / mass);
                    }
                    acc += mass;
                }
                x0 + width * weights.len() as f64
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail(x)
    }

    /// `∫_x^∞ φ`.
    pub fn tail(&self, x: f64) -> f64 {
        match self {
            Density::Uniform { a, b } => ((b - x) / (b - a)).clamp(0.0, 1.0),
            Density::Exponential { rate, x0 } => (-rate * (x - x0)).exp().min(1.0),
            Density::Histogram { x0, width, weights } => {
                let mut above = 0.0;
                for (k, &w) in weights.iter().enumerate() {
                    let lo = x0 + k as f64 * width;
                    let hi = lo + width;
                    above += w * (hi - x.max(lo)).clamp(0.0, *width);
                }
                above.clamp(0.0, 1.0)
            }
        }
    }

    /// The datum `v(x) = ∫_x^∞ φ` of the free boundary problem.
    pub fn to_initial_condition(&self) -> Result<InitialCondition> {
        self.validate()?;
        match self {
            Density::Uniform { a, b } => {
                let g = Grid1D::new(*a, *b, 2)?;
                let p = Profile::new(g, vec![1.0, 0.0], 1.0, 0.0)?;
                Ok(InitialCondition::tabulated(p, Some(f64::INFINITY)))
            }
            Density::Exponential { rate, x0 } => InitialCondition::exponential_at(*rate, *x0),
            Density::Histogram { x0, width, weights } => {
                let m = weights.len() + 1;
                let g = Grid1D::new(*x0, x0 + width * weights.len() as f64, m)?;
                let values = (0..m).map(|i| self.tail(g.x(i))).collect();
                let p = Profile::new(g, values, 1.0, 0.0)?;
                Ok(InitialCondition::tabulated(p, Some(f64::INFINITY)))
            }
        }
    }
}

/// Particle positions at time `t`, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: Vec<f64>,
    pub t: f64,
    pub seed: u64,
    /// Branch events so far.
    pub events: u64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` i.i.d. draws from `phi`, sorted.
pub fn init_ensemble(phi: &Density, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    phi.validate()?;
    if n == 0 {
        return Err(FbpError::Domain("population must be positive".into()));
    }
    let mut rng = rng_for(seed, 0);
    let mut positions: Vec<f64> = (0..n).map(|_| phi.quantile(rng.random::<f64>())).collect();
    positions.sort_by(f64::total_cmp);
    Ok(ParticleEnsemble {
        positions,
        t: 0.0,
        seed,
        events: 0,
    })
}

fn diffuse(positions: &mut [f64], dt: f64, rng: &mut ChaCha8Rng) {
    let scale = (BM_VARIANCE_RATE * dt).sqrt();
    for x in positions.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x += scale * z;
    }
}

/// Runs the selection dynamics to `t_final`.
///
/// Positions are kept unsorted while running: every inter-event interval
/// moves all particles anyway, so finding the minimum by a scan costs no more
/// than keeping the order would.
pub fn evolve(e: &ParticleEnsemble, t_final: f64) -> Result<ParticleEnsemble> {
    if !(t_final > e.t) {
        return Err(FbpError::Precondition(format!(
            "t_final {t_final} not after current time {}",
            e.t
        )));
    }
    let n = e.len();
    let clock = Exp::new(n as f64).map_err(|err| FbpError::Domain(err.to_string()))?;
    // Stream 0 drew the initial positions; later segments of the same
    // lineage start from the event count so restarts do not reuse numbers.
    let mut rng = rng_for(e.seed, 1 + e.events);
    let mut x = e.positions.clone();
    let mut t = e.t;
    let mut events = e.events;
    loop {
        let wait = clock.sample(&mut rng);
        if t + wait >= t_final {
            diffuse(&mut x, t_final - t, &mut rng);
            break;
        }
        diffuse(&mut x, wait, &mut rng);
        t += wait;
        let parent = rng.random_range(0..n);
        x.push(x[parent]);
        let argmin = x
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty");
        x.swap_remove(argmin);
        events += 1;
    }
    x.sort_by(f64::total_cmp);
    Ok(ParticleEnsemble {
        positions: x,
        t: t_final,
        seed: e.seed,
        events,
    })
}

/// Branching Brownian motion without selection, started from the same
/// positions; the population grows like `N e^t`.
pub fn evolve_free(e: &ParticleEnsemble, t_final: f64) -> Result<ParticleEnsemble> {
    if !(t_final > e.t) {
        return Err(FbpError::Precondition(format!(
            "t_final {t_final} not after current time {}",
            e.t
        )));
    }
    let mut rng = rng_for(e.seed, u64::MAX - e.events);
    let mut x = e.positions.clone();
    let mut t = e.t;
    let mut events = e.events;
    loop {
        let clock = Exp::new(x.len() as f64).map_err(|err| FbpError::Domain(err.to_string()))?;
        let wait = clock.sample(&mut rng);
        if t + wait >= t_final {
            diffuse(&mut x, t_final - t, &mut rng);
            break;
        }
        diffuse(&mut x, wait, &mut rng);
        t += wait;
        let parent = rng.random_range(0..x.len());
        x.push(x[parent]);
        events += 1;
    }
    x.sort_by(f64::total_cmp);
    Ok(ParticleEnsemble {
        positions: x,
        t: t_final,
        seed: e.seed,
        events,
    })
}

/// `π_t[a, ∞)` on a grid of `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTail {
    pub t: f64,
    pub n: usize,
    pub a_grid: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn empirical_tail(e: &ParticleEnsemble, a_grid: &[f64]) -> EmpiricalTail {
    let n = e.len();
    let values = a_grid
        .iter()
        .map(|&a| (n - e.positions.partition_point(|&x| x < a)) as f64 / n as f64)
        .collect();
    EmpiricalTail {
        t: e.t,
        n,
        a_grid: a_grid.to_vec(),
        values,
    }
}

/// `2 sqrt(ln N / N)`.
pub fn sampling_tolerance(n: usize) -> f64 {
    let n = n as f64;
    2.0 * (n.ln() / n).sqrt()
}

/// 99% Kolmogorov-Smirnov quantile `1.63/sqrt(N)`.
pub fn ks_quantile_99(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Largest `|π[a,∞) - cdf tail|` over the sample points.
pub fn ks_distance(sorted: &[f64], tail: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - tail(x);
            ((i + 1) as f64 / n - f).abs().max((f - i as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Sup gap between an empirical tail and a profile of `u` at the same time.
/// Passes when it is within the sampling tolerance plus `radius`, the error
/// radius of the profile.
pub fn compare_to_u(tail: &EmpiricalTail, u: &Profile, u_time: f64, radius: f64) -> Result<Report> {
    if (tail.t - u_time).abs() > 1e-9 {
        return Err(FbpError::Precondition(format!(
            "tail at t={} compared with profile at t={u_time}",
            tail.t
        )));
    }
    let gap = sup_gap(tail, u);
    let bound = sampling_tolerance(tail.n) + radius;
    Ok(Report::upper("nbbm_hydrodynamic_gap", gap, bound).with_detail(format!("N={}, t={}", tail.n, tail.t)))
}

pub fn sup_gap(tail: &EmpiricalTail, u: &Profile) -> f64 {
    tail.a_grid
        .iter()
        .zip(&tail.values)
        .map(|(&a, &p)| (p - u.eval(a)).abs())
        .fold(0.0, f64::max)
}

/// Metadata written next to each replica's tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaManifest {
    #[serde(rename = "N")]
    pub n: usize,
    pub t: f64,
    pub seed: u64,
    pub events: u64,
    pub wall_time: f64,
}

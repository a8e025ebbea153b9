//! Seeded Monte Carlo: the skeleton branching diffusion under the
//! w-transformed motion, the N-particle superprocess approximation for
//! quadratic mechanisms, their martingales, the extremal statistic, and the
//! Cox dressing of a measure state.
//!
//! Branch clocks use Lewis-Shedler thinning against the global rate bound,
//! which is equivalent in law to per-particle exponential budgets consumed at
//! the spatially varying rate. Where the motion is driftless (flat w, or the
//! superprocess's plain Brownian particles) positions advance by exact
//! Gaussian increments between candidate times.

use crate::error::CoreError;
use crate::grid::GridFunction;
use crate::mechanism::{BranchingMechanism, OffspringLaw};
use crate::spectral::SpectralData;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

/// Unit-weight skeleton particles.
#[derive(Debug, Clone, Default)]
pub struct PointConfiguration {
    pub positions: Vec<f64>,
}

impl PointConfiguration {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Number of particles in [a, b].
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        self.positions.iter().filter(|&&x| x >= a && x <= b).count()
    }
}

/// Finite atomic measure: positions with strictly positive masses.
#[derive(Debug, Clone)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self, CoreError> {
        for &(x, m) in &atoms {
            if !x.is_finite() || !m.is_finite() || m <= 0.0 {
                return Err(CoreError::Domain(format!(
                    "atomic measure needs finite positions and positive masses, got ({x}, {m})"
                )));
            }
        }
        Ok(AtomicMeasure { atoms })
    }

    pub fn dirac(x: f64) -> Self {
        AtomicMeasure { atoms: vec![(x, 1.0)] }
    }

    pub fn empty() -> Self {
        AtomicMeasure { atoms: Vec::new() }
    }

    /// Equal-mass atoms at the given positions (the N-particle state).
    pub fn from_particles(positions: &[f64], particle_mass: f64) -> Self {
        AtomicMeasure { atoms: positions.iter().map(|&x| (x, particle_mass)).collect() }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, m)| m).sum()
    }

    /// Mass carried by atoms inside [a, b].
    pub fn mass_in(&self, a: f64, b: f64) -> f64 {
        self.atoms.iter().filter(|(x, _)| *x >= a && *x <= b).map(|(_, m)| m).sum()
    }

    /// ⟨f, μ⟩ with every atom required to sit on the grid; negative
    /// interpolated values (solver undershoot) are clamped to zero.
    pub fn integrate_checked(&self, f: &GridFunction) -> Result<f64, CoreError> {
        let mut acc = 0.0;
        for &(x, m) in &self.atoms {
            acc += m * f.interpolate(x)?.max(0.0);
        }
        Ok(acc)
    }
}

/// Monte Carlo configuration.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    /// Euler-Maruyama step for drifted motion and the superprocess step.
    pub dt_sde: f64,
    pub seed: u64,
    pub trials: usize,
    pub population_cap: usize,
    /// Mass granularity of the superprocess approximation (particle mass 1/N).
    pub n_particles: usize,
    /// Escalate any boundary reflection into an error.
    pub strict: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_sde: 1e-3,
            seed: 7,
            trials: 1000,
            population_cap: 500_000,
            n_particles: 1000,
            strict: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.dt_sde > 0.0) {
            return Err(CoreError::Domain("dt_sde must be positive".into()));
        }
        if self.n_particles == 0 {
            return Err(CoreError::Domain("n_particles must be positive".into()));
        }
        Ok(())
    }

    /// Guard that the cap leaves ~10x headroom over the expected population.
    pub fn check_cap_headroom(&self, expected_population: f64) -> Result<(), CoreError> {
        if (self.population_cap as f64) < 10.0 * expected_population {
            return Err(CoreError::Domain(format!(
                "population cap {} below 10x expected population {expected_population:.1}",
                self.population_cap
            )));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based stream derivation: (seed, experiment tag, trial index) maps
/// injectively into the generator seed, giving statistically independent
/// streams that are reproducible per (seed, trial).
pub fn stream_rng(seed: u64, tag: u64, trial: u64) -> SmallRng {
    SmallRng::seed_from_u64(seed ^ splitmix64((tag << 40) ^ trial))
}

/// Runs independent trials (serially or work-stolen), merging results in trial
/// order so reductions are deterministic regardless of thread count.
pub fn run_trials<T, F>(cfg: &SimConfig, tag: u64, f: F) -> Result<Vec<T>, CoreError>
where
    T: Send,
    F: Fn(usize, &mut SmallRng) -> Result<T, CoreError> + Sync,
{
    (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(cfg.seed, tag, trial as u64);
            f(trial, &mut rng)
        })
        .collect()
}

/// The w-transformed motion: drift w'(x)/w(x), reflected at ±L (reflection is
/// counted; it must not happen in a valid run).
#[derive(Debug, Clone)]
pub struct WMotion {
    drift: GridFunction,
    barrier: f64,
    drift_free: bool,
}

impl WMotion {
    pub fn new(w: &GridFunction) -> Result<Self, CoreError> {
        if w.values().iter().any(|&v| v <= 0.0) {
            return Err(CoreError::Domain("w-transformed motion needs w > 0".into()));
        }
        let dw = w.derivative();
        let drift = dw.zip_with(w, |d, v| d / v);
        let drift_free = drift.sup_norm() < 1e-10;
        Ok(WMotion { drift, barrier: w.grid().half_width(), drift_free })
    }

    pub fn is_drift_free(&self) -> bool {
        self.drift_free
    }

    pub fn barrier(&self) -> f64 {
        self.barrier
    }

    #[inline]
    fn drift_at(&self, x: f64) -> f64 {
        if self.drift_free || !self.drift.grid().contains(x) {
            0.0
        } else {
            self.drift.interpolate_unchecked(x)
        }
    }

    #[inline]
    fn reflect(&self, mut x: f64, reflections: &mut usize) -> f64 {
        while x.abs() > self.barrier {
            x = if x > 0.0 { 2.0 * self.barrier - x } else { -2.0 * self.barrier - x };
            *reflections += 1;
        }
        x
    }

    /// One Euler-Maruyama step; returns the new position and counts any
    /// boundary reflection.
    pub fn step(&self, pos: f64, dt: f64, rng: &mut SmallRng, reflections: &mut usize) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let x = pos + self.drift_at(pos) * dt + dt.sqrt() * z;
        self.reflect(x, reflections)
    }

    /// Advance over an interval: a single exact Gaussian jump when driftless,
    /// otherwise Euler substeps of at most dt_sde.
    fn advance(
        &self,
        mut pos: f64,
        interval: f64,
        dt_sde: f64,
        rng: &mut SmallRng,
        reflections: &mut usize,
    ) -> f64 {
        if interval <= 0.0 {
            return pos;
        }
        if self.drift_free {
            let z: f64 = StandardNormal.sample(rng);
            return self.reflect(pos + interval.sqrt() * z, reflections);
        }
        let substeps = (interval / dt_sde).ceil().max(1.0) as usize;
        let h = interval / substeps as f64;
        for _ in 0..substeps {
            pos = self.step(pos, h, rng, reflections);
        }
        pos
    }
}

/// Spec-named wrapper for one drifted step.
pub fn step_w_motion(pos: f64, dt: f64, motion: &WMotion, rng: &mut SmallRng) -> (f64, usize) {
    let mut reflections = 0;
    let new = motion.step(pos, dt, rng, &mut reflections);
    (new, reflections)
}

/// Poisson dressing with intensity w·μ: for each atom (x, m), Poisson(w(x)·m)
/// unit points at x. Used both for the skeleton's initial state and the Cox
/// coupling of a superprocess state.
fn poisson_dress(
    mu: &AtomicMeasure,
    w: &GridFunction,
    rng: &mut SmallRng,
) -> PointConfiguration {
    let mut positions = Vec::new();
    for &(x, m) in mu.atoms() {
        let intensity = w.interpolate_unchecked(x).max(0.0) * m;
        if intensity > 0.0 {
            let k = Poisson::new(intensity).expect("positive intensity").sample(rng) as usize;
            positions.extend(std::iter::repeat(x).take(k));
        }
    }
    PointConfiguration { positions }
}

/// Z_0: Poisson point process with intensity w(x)μ(dx).
pub fn sample_initial_skeleton(
    mu: &AtomicMeasure,
    w: &GridFunction,
    rng: &mut SmallRng,
) -> PointConfiguration {
    poisson_dress(mu, w, rng)
}

/// Cox dressing of a measure state: Poisson points with intensity w·X̂_t.
pub fn cox_coupling_sample(
    xmeas: &AtomicMeasure,
    w: &GridFunction,
    rng: &mut SmallRng,
) -> PointConfiguration {
    poisson_dress(xmeas, w, rng)
}

/// Result of one skeleton trial: configurations at the requested snapshot
/// times plus the boundary-reflection count (must be zero in valid runs).
#[derive(Debug, Clone)]
pub struct SkeletonPath {
    pub snapshots: Vec<PointConfiguration>,
    pub reflections: usize,
}

/// Event-driven skeleton simulation from an explicit starting configuration:
/// candidate branch times arrive at the global bound q_max and are accepted
/// with probability q(x)/q_max; accepted events replace the particle by k ~
/// p_k(x) children at the same position.
pub fn simulate_skeleton_from(
    initial: &PointConfiguration,
    snapshot_times: &[f64],
    w: &GridFunction,
    offspring: &OffspringLaw,
    cfg: &SimConfig,
    rng: &mut SmallRng,
) -> Result<SkeletonPath, CoreError> {
    cfg.validate()?;
    if snapshot_times.windows(2).any(|p| p[1] <= p[0]) || snapshot_times.is_empty() {
        return Err(CoreError::Domain("snapshot times must be strictly increasing".into()));
    }
    let t_end = *snapshot_times.last().unwrap();
    let motion = WMotion::new(w)?;
    let q_max = offspring.max_rate() * (1.0 + 1e-12);
    let mut snapshots: Vec<Vec<f64>> = vec![Vec::new(); snapshot_times.len()];
    let mut reflections = 0usize;
    let mut processed = 0usize;

    // Depth-first over the genealogy: (birth time, position).
    let mut stack: Vec<(f64, f64)> = initial.positions.iter().map(|&x| (0.0, x)).collect();
    stack.reverse();
    while let Some((mut t, mut x)) = stack.pop() {
        processed += 1;
        if processed > cfg.population_cap {
            return Err(CoreError::Explosion {
                t_reached: t,
                population: processed,
                cap: cfg.population_cap,
            });
        }
        let mut snap_idx = snapshot_times.partition_point(|&s| s <= t);
        'life: loop {
            let wait = if q_max > 0.0 {
                let e: f64 = rand_distr::Exp1.sample(rng);
                e / q_max
            } else {
                f64::INFINITY
            };
            let t_cand = t + wait;
            while snap_idx < snapshot_times.len() && snapshot_times[snap_idx] <= t_cand {
                let s = snapshot_times[snap_idx];
                x = motion.advance(x, s - t, cfg.dt_sde, rng, &mut reflections);
                t = s;
                snapshots[snap_idx].push(x);
                snap_idx += 1;
            }
            if t_cand >= t_end {
                break 'life;
            }
            x = motion.advance(x, t_cand - t, cfg.dt_sde, rng, &mut reflections);
            t = t_cand;
            let accept: f64 = rng.random();
            if accept * q_max < offspring.rate_at(x) {
                let ku: f64 = rng.random();
                let k = offspring.sample_count(x, ku);
                for _ in 1..k {
                    stack.push((t, x));
                }
                // Continue this path as the first child.
                continue 'life;
            }
        }
    }

    if cfg.strict && reflections > 0 {
        return Err(CoreError::Precision(format!(
            "{reflections} boundary reflections in strict mode (domain too small)"
        )));
    }
    Ok(SkeletonPath {
        snapshots: snapshots.into_iter().map(|positions| PointConfiguration { positions }).collect(),
        reflections,
    })
}

/// Skeleton simulation under P_μ: Poisson-dressed start, then
/// [`simulate_skeleton_from`].
pub fn simulate_skeleton(
    mu: &AtomicMeasure,
    snapshot_times: &[f64],
    w: &GridFunction,
    offspring: &OffspringLaw,
    cfg: &SimConfig,
    rng: &mut SmallRng,
) -> Result<SkeletonPath, CoreError> {
    let initial = sample_initial_skeleton(mu, w, rng);
    simulate_skeleton_from(&initial, snapshot_times, w, offspring, cfg, rng)
}

/// Result of one superprocess trial.
#[derive(Debug, Clone)]
pub struct SuperPath {
    pub snapshots: Vec<AtomicMeasure>,
    pub particle_mass: f64,
}

/// Exact one-step transition of the linear birth-death process (birth rate
/// `lb`, death rate `ld`) started from one particle: extinct with probability
/// `p0`, else geometric with parameter `geo`.
#[inline]
fn birth_death_params(lb: f64, ld: f64, dt: f64) -> (f64, f64) {
    if lb <= 0.0 {
        return (1.0 - (-ld * dt).exp(), 0.0);
    }
    if (lb - ld).abs() < 1e-12 * lb.max(ld) {
        let a = lb * dt / (1.0 + lb * dt);
        return (a, a);
    }
    let theta = ((lb - ld) * dt).exp();
    let denom = lb * theta - ld;
    ((ld * (theta - 1.0)) / denom, (lb * (theta - 1.0)) / denom)
}

/// N-particle superprocess approximation for quadratic mechanisms: mass-1/N
/// Brownian particles branching binarily at rate ρ_N(x) = 2Nα(x) + |β(x)| with
/// p₂ = ½ + β/(2ρ_N), p₀ = ½ - β/(2ρ_N). Stepping is exact per step for the
/// branching given the frozen step-start rates (linear birth-death transition
/// law); offspring are placed at the parent's step position.
pub fn simulate_superprocess(
    mu: &AtomicMeasure,
    snapshot_times: &[f64],
    mech: &BranchingMechanism,
    cfg: &SimConfig,
    rng: &mut SmallRng,
) -> Result<SuperPath, CoreError> {
    cfg.validate()?;
    if !mech.is_quadratic() {
        return Err(CoreError::UnsupportedMechanism(
            "the N-particle Monte Carlo path supports quadratic mechanisms only".into(),
        ));
    }
    if snapshot_times.windows(2).any(|p| p[1] <= p[0]) || snapshot_times.is_empty() {
        return Err(CoreError::Domain("snapshot times must be strictly increasing".into()));
    }
    let n = cfg.n_particles as f64;
    let mass = 1.0 / n;
    let t_end = *snapshot_times.last().unwrap();
    let steps = (t_end / cfg.dt_sde).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;

    let mut positions: Vec<f64> = Vec::new();
    for &(x, m) in mu.atoms() {
        let count = (m * n).round() as usize;
        positions.extend(std::iter::repeat(x).take(count));
    }
    let mut spawned: Vec<f64> = Vec::new();
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    let mut snap_idx = 0usize;
    while snap_idx < snapshot_times.len() && snapshot_times[snap_idx] <= 1e-12 {
        snapshots.push(AtomicMeasure::from_particles(&positions, mass));
        snap_idx += 1;
    }

    let sqrt_dt = dt.sqrt();
    for step in 0..steps {
        spawned.clear();
        let mut idx = 0usize;
        while idx < positions.len() {
            let z: f64 = StandardNormal.sample(rng);
            let x = positions[idx] + sqrt_dt * z;
            let beta = mech.beta().eval(x);
            let rho = 2.0 * n * mech.alpha().eval(x) + beta.abs();
            if rho <= 0.0 {
                positions[idx] = x;
                idx += 1;
                continue;
            }
            let lb = 0.5 * (rho + beta);
            let ld = 0.5 * (rho - beta);
            let (p_extinct, geo) = birth_death_params(lb, ld, dt);
            let u: f64 = rng.random();
            if u < p_extinct {
                positions.swap_remove(idx);
                continue;
            }
            let extra = if geo > 0.0 {
                let g: f64 = rng.random();
                // K - 1 with K geometric(1-geo) on {1,2,...}.
                (g.ln() / geo.ln()).floor().max(0.0) as usize
            } else {
                0
            };
            positions[idx] = x;
            for _ in 0..extra {
                spawned.push(x);
            }
            idx += 1;
        }
        positions.append(&mut spawned);
        if positions.len() > cfg.population_cap {
            return Err(CoreError::Explosion {
                t_reached: (step + 1) as f64 * dt,
                population: positions.len(),
                cap: cfg.population_cap,
            });
        }
        let now = (step + 1) as f64 * dt;
        while snap_idx < snapshot_times.len() && snapshot_times[snap_idx] <= now + 1e-9 {
            snapshots.push(AtomicMeasure::from_particles(&positions, mass));
            snap_idx += 1;
        }
    }
    Ok(SuperPath { snapshots, particle_mass: mass })
}

/// Skeleton additive martingale W^{h/w}_t(Z) = e^{-λ₁ t} Σ_u h(z_u)/w(z_u),
/// with h extended by its exact exponential tails beyond the grid and w by its
/// flat tail values.
pub fn martingale_skeleton(z: &PointConfiguration, t: f64, spec: &SpectralData, w: &GridFunction) -> f64 {
    let weight = (-spec.lambda1 * t).exp();
    weight
        * z.positions
            .iter()
            .map(|&x| spec.h_at(x) / w.interpolate_unchecked(x))
            .sum::<f64>()
}

/// Superprocess martingale W^h_t(X) = e^{-λ₁ t} ⟨h, X_t⟩.
pub fn martingale_super(xmeas: &AtomicMeasure, t: f64, spec: &SpectralData) -> f64 {
    let weight = (-spec.lambda1 * t).exp();
    weight * xmeas.atoms().iter().map(|&(x, m)| m * spec.h_at(x)).sum::<f64>()
}

/// Centered maximum max Z_t - √(λ₁/2)·t; `None` when the configuration is
/// empty (callers filter extinct trials).
pub fn max_statistic(z: &PointConfiguration, t: f64, spec: &SpectralData) -> Option<f64> {
    z.positions
        .iter()
        .cloned()
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |m| m.max(x))))
        .map(|m| m - spec.critical_speed() * t)
}

//! Monte Carlo and PDE engines as mutual oracles: the exact moment formulas
//! against sampled skeleton/superprocess statistics, the w-transformed motion
//! against its Feynman-Kac representation, and the Cox dressing against the
//! directly simulated skeleton.

use sbm_core::feynman_kac::{mean_mass, semigroup_apply, skeleton_mean, skeleton_second_moment, var_mass, FkConfig};
use sbm_core::grid::{Grid, GridFunction};
use sbm_core::loglaplace::martingale_w;
use sbm_core::mechanism::{BranchingMechanism, Profile};
use sbm_core::particle::{
    cox_coupling_sample, martingale_skeleton, martingale_super, run_trials, sample_initial_skeleton,
    simulate_skeleton_from, simulate_superprocess, step_w_motion, AtomicMeasure,
    PointConfiguration, SimConfig, WMotion,
};
use sbm_core::spectral::SpectralData;

fn square_well() -> BranchingMechanism {
    BranchingMechanism::quadratic(
        Profile::IndicatorBox { half_width: 1.0, height: 1.0 },
        Profile::IndicatorBox { half_width: 1.0, height: 0.5 },
    )
    .unwrap()
}

fn asymmetric() -> BranchingMechanism {
    BranchingMechanism::quadratic(
        Profile::IndicatorBox { half_width: 1.0, height: 1.0 },
        Profile::Tabulated { xs: vec![-1.0, -0.2, 0.3, 1.5], values: vec![0.55, 0.4, 0.7, 0.3] },
    )
    .unwrap()
}

fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Standard error of the sample variance via the fourth central moment.
fn var_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = samples.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (m2 * n / (n - 1.0), ((m4 - m2 * m2).max(0.0) / n).sqrt())
}

#[test]
fn skeleton_mean_and_second_moment_match_formulas() {
    let grid = Grid::new(12.0, 2401).unwrap();
    let mech = square_well();
    let beta = mech.beta_field(grid);
    let cfg = FkConfig::default();
    let w = martingale_w(&mech, &grid, &cfg).unwrap();
    let law = mech.derive_offspring(&w.w).unwrap();
    let f = grid.cell_averaged_indicator(&[(-1.5, 1.5)]);

    let sim = SimConfig { trials: 10_000, seed: 41, ..Default::default() };
    let start = PointConfiguration { positions: vec![0.0] };
    let times = [2.0, 3.0];
    let results = run_trials(&sim, 10, |_, rng| {
        let path = simulate_skeleton_from(&start, &times, &w.w, &law, &sim, rng)?;
        Ok(path
            .snapshots
            .iter()
            .map(|snap| snap.count_in(-1.5, 1.5) as f64)
            .collect::<Vec<_>>())
    })
    .unwrap();

    for (k, &t) in times.iter().enumerate() {
        let samples: Vec<f64> = results.iter().map(|r| r[k]).collect();
        let (mc_mean, se_mean) = mean_se(&samples);
        let exact_mean = skeleton_mean(0.0, &f, t, &w.w, &beta, &cfg).unwrap();
        assert!(
            (mc_mean - exact_mean).abs() < 3.0 * se_mean,
            "mean t={t}: mc {mc_mean} vs {exact_mean} (se {se_mean})"
        );
        let sq: Vec<f64> = samples.iter().map(|v| v * v).collect();
        let (mc_m2, se_m2) = mean_se(&sq);
        let exact_m2 = skeleton_second_moment(0.0, &f, t, &w.w, &mech, &beta, &cfg).unwrap();
        assert!(
            (mc_m2 - exact_m2).abs() < 5.0 * se_m2,
            "second moment t={t}: mc {mc_m2} vs {exact_m2} (se {se_m2})"
        );
    }
}

#[test]
fn skeleton_population_mean_under_poisson_start() {
    // Under P_mu, E<1, Z_t> = <P^beta_t w, mu>.
    let grid = Grid::new(12.0, 2401).unwrap();
    let mech = square_well();
    let beta = mech.beta_field(grid);
    let cfg = FkConfig::default();
    let w = martingale_w(&mech, &grid, &cfg).unwrap();
    let law = mech.derive_offspring(&w.w).unwrap();
    let mu = AtomicMeasure::dirac(0.0);
    let t = 3.0;
    let exact = mean_mass(&mu, &w.w, t, &beta, &cfg).unwrap();

    let sim = SimConfig { trials: 10_000, seed: 42, ..Default::default() };
    let counts = run_trials(&sim, 11, |_, rng| {
        let z0 = sample_initial_skeleton(&mu, &w.w, rng);
        let path = simulate_skeleton_from(&z0, &[t], &w.w, &law, &sim, rng)?;
        Ok(path.snapshots[0].len() as f64)
    })
    .unwrap();
    let (mc, se) = mean_se(&counts);
    assert!((mc - exact).abs() < 3.0 * se, "population mean {mc} vs {exact} (se {se})");
}

#[test]
fn skeleton_martingale_mean_is_flat_and_eventually_positive() {
    let grid = Grid::new(12.0, 2401).unwrap();
    let mech = square_well();
    let beta = mech.beta_field(grid);
    let cfg = FkConfig::default();
    let spec = SpectralData::compute(&beta).unwrap();
    let w = martingale_w(&mech, &grid, &cfg).unwrap();
    let law = mech.derive_offspring(&w.w).unwrap();
    let mu = AtomicMeasure::dirac(0.0);
    let times = [1.0, 2.0, 3.0];
    let expect = spec.h.interpolate(0.0).unwrap(); // E W^{h/w}_t = <h, mu>

    let sim = SimConfig { trials: 10_000, seed: 43, ..Default::default() };
    let results = run_trials(&sim, 12, |_, rng| {
        let z0 = sample_initial_skeleton(&mu, &w.w, rng);
        let path = simulate_skeleton_from(&z0, &times, &w.w, &law, &sim, rng)?;
        Ok(times
            .iter()
            .zip(&path.snapshots)
            .map(|(&t, z)| martingale_skeleton(z, t, &spec, &w.w))
            .collect::<Vec<_>>())
    })
    .unwrap();
    for (k, &t) in times.iter().enumerate() {
        let vals: Vec<f64> = results.iter().map(|r| r[k]).collect();
        let (mc, se) = mean_se(&vals);
        assert!((mc - expect).abs() < 3.0 * se, "martingale mean at t={t}: {mc} vs {expect}");
    }

    // Long-run positivity: started from one particle, the additive martingale
    // stays positive in essentially every trial (the skeleton never dies).
    let sim_pos = SimConfig { trials: 1000, seed: 44, ..Default::default() };
    let start = PointConfiguration { positions: vec![0.0] };
    let survived = run_trials(&sim_pos, 13, |_, rng| {
        let path = simulate_skeleton_from(&start, &[12.0], &w.w, &law, &sim_pos, rng)?;
        Ok(martingale_skeleton(&path.snapshots[0], 12.0, &spec, &w.w) > 0.0)
    })
    .unwrap();
    let frac = survived.iter().filter(|&&s| s).count() as f64 / survived.len() as f64;
    assert!(frac >= 0.99, "positivity fraction {frac}");
}

#[test]
fn w_motion_weak_accuracy_against_feynman_kac() {
    // E[phi(B^w_t)] = (1/w(x)) * FK evolution of w*phi under the potential
    // -psi(.,w)/w, by the definition of the transformed measure.
    let grid = Grid::new(12.0, 2401).unwrap();
    let mech = asymmetric();
    let cfg = FkConfig::default();
    let w = martingale_w(&mech, &grid, &cfg).unwrap();
    let motion = WMotion::new(&w.w).unwrap();
    assert!(!motion.is_drift_free());

    let phi = |x: f64| (-(x - 0.8) * (x - 0.8)).exp();
    let x0 = 0.3;
    let t = 1.0;
    let potential = {
        let dx = grid.spacing();
        grid.sample(|x| {
            let wv = w.w.interpolate_unchecked(x);
            -mech.psi_unchecked(x, wv) / wv
                + 0.0 * dx // keep closure shape uniform
        })
    };
    let wphi = w.w.zip_with(&grid.sample(phi), |a, b| a * b);
    let exact = semigroup_apply(&potential, &wphi, t, &cfg).unwrap().interpolate(x0).unwrap()
        / w.w.interpolate(x0).unwrap();

    let paths = 120_000usize;
    let dt = 1e-3;
    let sim = SimConfig { trials: paths, seed: 45, dt_sde: dt, ..Default::default() };
    let vals = run_trials(&sim, 14, |_, rng| {
        let mut pos = x0;
        let steps = (t / dt).round() as usize;
        for _ in 0..steps {
            pos = step_w_motion(pos, dt, &motion, rng).0;
        }
        Ok(phi(pos))
    })
    .unwrap();
    let (mc, se) = mean_se(&vals);
    assert!(
        (mc - exact).abs() < 3.0 * se + 2e-3,
        "weak accuracy: mc {mc} vs fk {exact} (se {se})"
    );
}

#[test]
fn w_motion_weak_error_halves_with_dt() {
    // First-order weak convergence: error against the PDE reference roughly
    // halves from dt to dt/2. Coarse steps keep the bias above the noise.
    let grid = Grid::new(12.0, 2401).unwrap();
    let mech = asymmetric();
    let cfg = FkConfig::default();
    let w = martingale_w(&mech, &grid, &cfg).unwrap();
    let motion = WMotion::new(&w.w).unwrap();
    let phi = |x: f64| 1.0 / (1.0 + (x - 1.2) * (x - 1.2));
    let x0 = 0.0;
    let t = 2.0;
    let potential = grid.sample(|x| {
        let wv = w.w.interpolate_unchecked(x);
        -mech.psi_unchecked(x, wv) / wv
    });
    let wphi = w.w.zip_with(&grid.sample(phi), |a, b| a * b);
    let exact = semigroup_apply(&potential, &wphi, t, &cfg).unwrap().interpolate(x0).unwrap()
        / w.w.interpolate(x0).unwrap();

    let run = |dt: f64, seed: u64| {
        let sim = SimConfig { trials: 400_000, seed, dt_sde: dt, ..Default::default() };
        let vals = run_trials(&sim, 15, |_, rng| {
            let mut pos = x0;
            let steps = (t / dt).round() as usize;
            for _ in 0..steps {
                pos = step_w_motion(pos, dt, &motion, rng).0;
            }
            Ok(phi(pos))
        })
        .unwrap();
        mean_se(&vals)
    };
    let (coarse, se1) = run(0.25, 46);
    let (fine, se2) = run(0.125, 46);
    let err_coarse = (coarse - exact).abs();
    let err_fine = (fine - exact).abs();
    assert!(err_coarse > 5.0 * se1, "coarse bias {err_coarse} not resolved above noise {se1}");
    let ratio = err_coarse / err_fine.max(3.0 * se2);
    assert!(
        (1.2..=4.5).contains(&ratio),
        "weak error ratio {ratio} (coarse {err_coarse}, fine {err_fine})"
    );
}

#[test]
fn superprocess_moments_match_mean_and_variance_formulas() {
    let grid = Grid::new(12.0, 2401).unwrap();
    let mech = square_well();
    let beta = mech.beta_field(grid);
    let cfg = FkConfig::default();
    let mu = AtomicMeasure::dirac(0.0);
    let f = grid.sample(|x| (-0.5 * x * x).exp());
    let t = 2.0;
    let exact_mean = mean_mass(&mu, &f, t, &beta, &cfg).unwrap();
    let exact_var = var_mass(&mu, &f, t, &mech, &beta, &cfg).unwrap();

    let sim = SimConfig {
        trials: 4000,
        seed: 47,
        n_particles: 1000,
        dt_sde: 5e-3,
        ..Default::default()
    };
    let vals = run_trials(&sim, 16, |_, rng| {
        let path = simulate_superprocess(&mu, &[t], &mech, &sim, rng)?;
        let snap = &path.snapshots[0];
        Ok(snap.atoms().iter().map(|&(x, m)| m * f.interpolate_unchecked(x)).sum::<f64>())
    })
    .unwrap();
    let (mc_mean, se_mean) = mean_se(&vals);
    assert!(
        (mc_mean - exact_mean).abs() < 3.0 * se_mean,
        "mean: {mc_mean} vs {exact_mean} (se {se_mean})"
    );
    let (mc_var, se_var) = var_se(&vals);
    // The 1/N branching granularity adds gamma-weighted noise on top of the
    // continuum variance; at N = 1000 it sits inside the 5 SE band.
    assert!(
        (mc_var - exact_var).abs() < 5.0 * se_var,
        "variance: {mc_var} vs {exact_var} (se {se_var})"
    );
}

#[test]
fn superprocess_martingale_mean_is_flat() {
    let grid = Grid::new(12.0, 2401).unwrap();
    let mech = square_well();
    let beta = mech.beta_field(grid);
    let spec = SpectralData::compute(&beta).unwrap();
    let mu = AtomicMeasure::dirac(0.0);
    let times = [1.0, 2.0, 3.0];
    let expect = spec.h.interpolate(0.0).unwrap();
    let sim = SimConfig {
        trials: 3000,
        seed: 48,
        n_particles: 500,
        dt_sde: 5e-3,
        ..Default::default()
    };
    let results = run_trials(&sim, 17, |_, rng| {
        let path = simulate_superprocess(&mu, &times, &mech, &sim, rng)?;
        Ok(times
            .iter()
            .zip(&path.snapshots)
            .map(|(&t, snap)| martingale_super(snap, t, &spec))
            .collect::<Vec<_>>())
    })
    .unwrap();
    let mut second_moments = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let vals: Vec<f64> = results.iter().map(|r| r[k]).collect();
        let (mc, se) = mean_se(&vals);
        assert!((mc - expect).abs() < 3.0 * se, "martingale mean at t={t}: {mc} vs {expect}");
        second_moments.push(vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64);
    }
    // L² boundedness probe: sample second moments are nondecreasing in t up
    // to noise (bounded martingale in L²).
    assert!(second_moments[2] >= second_moments[0] - 0.05);
}

#[test]
fn superprocess_offspring_logic_reduces_to_signed_beta_without_alpha() {
    // On a region where alpha = 0 and beta > 0 the branching is pure binary
    // birth at rate beta: total mass grows like e^{beta t} there. Use a
    // mechanism with alpha supported away from the test box.
    let mech = BranchingMechanism::quadratic(
        Profile::IndicatorBox { half_width: 4.0, height: 0.3 },
        Profile::Tabulated { xs: vec![6.0, 7.0], values: vec![0.2, 0.2] },
    )
    .unwrap();
    // Start far from the alpha bump: short horizon so mass stays in |x| < 5.
    let mu = AtomicMeasure::dirac(0.0);
    let t = 0.5;
    let sim = SimConfig {
        trials: 4000,
        seed: 49,
        n_particles: 200,
        dt_sde: 2e-3,
        ..Default::default()
    };
    let masses = run_trials(&sim, 18, |_, rng| {
        let path = simulate_superprocess(&mu, &[t], &mech, &sim, rng)?;
        Ok(path.snapshots[0].total_mass())
    })
    .unwrap();
    let (mc, se) = mean_se(&masses);
    // Mean offspring per event is 1 + beta/rho_N; expected mass is e^{0.3 t}
    // up to the O(1e-4) probability of reaching the alpha bump.
    let expect = (0.3f64 * t).exp();
    assert!((mc - expect).abs() < 3.0 * se + 1e-3, "mass {mc} vs {expect} (se {se})");
}

#[test]
fn cox_dressing_matches_direct_skeleton_counts() {
    // Prop 4.1(iii) at the level of window-count laws: Poisson-dressed X^N_t
    // versus the directly simulated skeleton, t = 2, window [-1, 1].
    let grid = Grid::new(12.0, 2401).unwrap();
    let mech = square_well();
    let cfg = FkConfig::default();
    let w = martingale_w(&mech, &grid, &cfg).unwrap();
    let law = mech.derive_offspring(&w.w).unwrap();
    let mu = AtomicMeasure::dirac(0.0);
    let t = 2.0;
    let window = (-1.0, 1.0);

    let sim_super = SimConfig {
        trials: 1500,
        seed: 50,
        n_particles: 400,
        dt_sde: 5e-3,
        ..Default::default()
    };
    let dressed = run_trials(&sim_super, 19, |_, rng| {
        let path = simulate_superprocess(&mu, &[t], &mech, &sim_super, rng)?;
        let z = cox_coupling_sample(&path.snapshots[0], &w.w, rng);
        Ok(z.count_in(window.0, window.1) as f64)
    })
    .unwrap();

    let sim_skel = SimConfig { trials: 20_000, seed: 51, ..Default::default() };
    let direct = run_trials(&sim_skel, 20, |_, rng| {
        let z0 = sample_initial_skeleton(&mu, &w.w, rng);
        let path = simulate_skeleton_from(&z0, &[t], &w.w, &law, &sim_skel, rng)?;
        Ok(path.snapshots[0].count_in(window.0, window.1) as f64)
    })
    .unwrap();

    let (m_a, se_a) = mean_se(&dressed);
    let (m_b, se_b) = mean_se(&direct);
    let z_mean = (m_a - m_b) / se_a.hypot(se_b);
    assert!(z_mean.abs() <= 3.0, "mean z = {z_mean} ({m_a} vs {m_b})");

    let (v_a, vse_a) = var_se(&dressed);
    let (v_b, vse_b) = var_se(&direct);
    let z_var = (v_a - v_b) / vse_a.hypot(vse_b);
    assert!(z_var.abs() <= 3.0, "variance z = {z_var} ({v_a} vs {v_b})");
}

#[test]
fn window_occupancy_orders_like_the_limit_law() {
    // At the critical frontier with s(t) = 2, A = (0,1):
    // P(count >= 2) << P(count = 1) << P(count = 0), and P(=1) tracks
    // w- eta-(A) (h/w)(0) Theta(t) within a loose band.
    let grid = Grid::new(12.0, 2401).unwrap();
    let mech = square_well();
    let beta = mech.beta_field(grid);
    let cfg = FkConfig::default();
    let spec = SpectralData::compute(&beta).unwrap();
    let w = martingale_w(&mech, &grid, &cfg).unwrap();
    let law = mech.derive_offspring(&w.w).unwrap();

    let t = 12.0;
    let s_t = 2.0;
    let r_t = spec.critical_speed() * t;
    let (a0, a1) = (r_t, r_t + 1.0);
    let start = PointConfiguration { positions: vec![0.0] };
    let sim = SimConfig { trials: 20_000, seed: 52, ..Default::default() };
    let counts = run_trials(&sim, 21, |_, rng| {
        let path = simulate_skeleton_from(&start, &[t - s_t], &w.w, &law, &sim, rng)?;
        Ok(path.snapshots[0].count_in(a0, a1))
    })
    .unwrap();
    let n = counts.len() as f64;
    let p0 = counts.iter().filter(|&&c| c == 0).count() as f64 / n;
    let p1 = counts.iter().filter(|&&c| c == 1).count() as f64 / n;
    let p2 = counts.iter().filter(|&&c| c >= 2).count() as f64 / n;
    assert!(p2 < p1 && p1 < p0, "ordering broken: p0={p0} p1={p1} p2={p2}");

    let kappa = spec.kappa();
    let eta_a = spec.c_minus * (1.0 - (-kappa).exp()) / kappa;
    let theta_t = (-spec.lambda1 * s_t).exp();
    let predict = w.w_minus * eta_a * spec.h.interpolate(0.0).unwrap()
        / w.at(0.0)
        * theta_t;
    let ratio = p1 / predict;
    assert!((0.7..=1.3).contains(&ratio), "occupancy ratio {ratio} (p1 {p1} vs {predict})");
}

#[test]
fn far_spread_is_rare_between_critical_and_linear_speeds() {
    // For delta strictly between sqrt(lambda1/2) and sqrt(2 lambda1) the
    // skeleton stays inside (-delta t, delta t) with probability -> 1.
    let grid = Grid::new(12.0, 2401).unwrap();
    let mech = square_well();
    let beta = mech.beta_field(grid);
    let cfg = FkConfig::default();
    let spec = SpectralData::compute(&beta).unwrap();
    let w = martingale_w(&mech, &grid, &cfg).unwrap();
    let law = mech.derive_offspring(&w.w).unwrap();
    let delta = 0.8; // between 0.549 and 1.099
    let t = 12.0;
    let start = PointConfiguration { positions: vec![0.0] };
    let sim = SimConfig { trials: 2000, seed: 53, ..Default::default() };
    let contained = run_trials(&sim, 22, |_, rng| {
        let path = simulate_skeleton_from(&start, &[t], &w.w, &law, &sim, rng)?;
        Ok(path.snapshots[0].positions.iter().all(|&x| x.abs() < delta * t))
    })
    .unwrap();
    let frac = contained.iter().filter(|&&c| c).count() as f64 / contained.len() as f64;
    assert!(frac > 0.9, "containment fraction {frac} at delta={delta}");
    let _ = spec;
}

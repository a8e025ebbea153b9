//! The nonlinear engine: Strang-split integration of the log-Laplace equation
//! ∂u/∂t = ½u″ + βu - ψ₀(x,u) (diffusion-with-potential half-steps around an
//! implicit pointwise reaction step), exact Laplace functionals of the
//! superprocess, the martingale function w by two independent routes, the
//! Laplace transform of the martingale limit, and the two sides of the
//! critical-frontier limit theorems.

use crate::error::CoreError;
use crate::feynman_kac::{Boundary, FkConfig, Propagator};
use crate::grid::{Grid, GridFunction};
use crate::mechanism::BranchingMechanism;
use crate::particle::AtomicMeasure;
use crate::spectral::SpectralData;

/// Per-node tables of the reaction data so the hot loop avoids profile
/// evaluations.
struct ReactionTable {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    /// (jump size, per-node rates) per atom.
    jumps: Vec<(f64, Vec<f64>)>,
}

impl ReactionTable {
    fn new(mech: &BranchingMechanism, grid: &Grid) -> Self {
        let dx = grid.spacing();
        let beta = grid.nodes().map(|x| mech.beta().cell_average(x, dx)).collect();
        let alpha = grid.nodes().map(|x| mech.alpha().cell_average(x, dx)).collect();
        let jumps = mech
            .jumps()
            .iter()
            .map(|j| (j.size, grid.nodes().map(|x| j.rate.cell_average(x, dx)).collect()))
            .collect();
        ReactionTable { beta, alpha, jumps }
    }

    #[inline]
    fn psi0(&self, i: usize, v: f64) -> f64 {
        let mut out = self.alpha[i] * v * v;
        for (size, rates) in &self.jumps {
            let r = rates[i];
            if r != 0.0 {
                let lu = v * size;
                out += r * ((-lu).exp() - 1.0 + lu);
            }
        }
        out
    }

    #[inline]
    fn psi0_prime(&self, i: usize, v: f64) -> f64 {
        let mut out = 2.0 * self.alpha[i] * v;
        for (size, rates) in &self.jumps {
            let r = rates[i];
            if r != 0.0 {
                out += r * size * (1.0 - (-v * size).exp());
            }
        }
        out
    }

    /// Full ψ(x_i, v) = -β v + ψ₀.
    #[inline]
    fn psi(&self, i: usize, v: f64) -> f64 {
        -self.beta[i] * v + self.psi0(i, v)
    }

    /// ∂ψ/∂λ at (x_i, v).
    #[inline]
    fn psi_prime(&self, i: usize, v: f64) -> f64 {
        -self.beta[i] + self.psi0_prime(i, v)
    }
}

/// One implicit reaction step of u̇ = -ψ(x, u): trapezoidal when mild,
/// backward Euler when stiff (large positive data). ψ is convex in u with
/// ∂ψ/∂λ ≥ -‖β‖∞, so for dt‖β‖∞ < 1 the per-node function is strictly
/// increasing and Newton converges globally onto the unique nonnegative root.
fn reaction_step(table: &ReactionTable, dt: f64, u: &mut [f64]) -> Result<(), CoreError> {
    for (i, ui) in u.iter_mut().enumerate() {
        let v0 = (*ui).max(0.0);
        if v0 == 0.0 {
            *ui = 0.0;
            continue;
        }
        let stiff = 0.5 * dt * table.psi_prime(i, v0) > 1.0;
        let (c, rhs) = if stiff {
            (dt, v0)
        } else {
            (0.5 * dt, v0 - 0.5 * dt * table.psi(i, v0))
        };
        let (c, rhs) = if rhs <= 0.0 {
            // Extremely stiff trapezoid would need a negative root; fall back
            // to backward Euler for this node.
            (dt, v0)
        } else {
            (c, rhs)
        };
        let mut v = v0;
        let mut converged = false;
        for _ in 0..100 {
            let f = v + c * table.psi(i, v) - rhs;
            let fp = 1.0 + c * table.psi_prime(i, v);
            let step = f / fp;
            v -= step;
            if v < 0.0 {
                v = 0.0;
            }
            if step.abs() <= 1e-14 * v.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(CoreError::Convergence(format!(
                "reaction Newton stalled at node {i} (u = {v0})"
            )));
        }
        *ui = v.max(0.0);
    }
    Ok(())
}

fn march_nonlinear(
    mech: &BranchingMechanism,
    f: &GridFunction,
    t: f64,
    cfg: &FkConfig,
    boundary: Boundary,
    rannacher_steps: usize,
) -> Result<GridFunction, CoreError> {
    cfg.validate(f.grid())?;
    if f.values().iter().any(|&v| v < 0.0) {
        return Err(CoreError::Domain("log-Laplace data must be nonnegative".into()));
    }
    if t < 0.0 {
        return Err(CoreError::Domain(format!("time must be >= 0, got {t}")));
    }
    let grid = *f.grid();
    let mut u = f.clone();
    if t <= 1e-12 {
        return Ok(u);
    }
    // The diffusion half-steps carry no potential: the reaction step applies
    // the whole of ψ (including the -βλ part), so a mechanism whose flat
    // solution kills ψ pointwise is an exact fixed point of the split map.
    let zero_potential = GridFunction::zeros(grid);
    let table = ReactionTable::new(mech, &grid);
    let steps = (t / cfg.dt).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut cn_half = Propagator::new(&zero_potential, 0.5 * dt, boundary);
    let mut be_quarter = Propagator::new(&zero_potential, 0.25 * dt, boundary);
    for k in 0..steps {
        let smooth_start = k >= rannacher_steps;
        if smooth_start {
            cn_half.step_cn(u.values_mut());
        } else {
            be_quarter.step_be(u.values_mut());
            be_quarter.step_be(u.values_mut());
        }
        reaction_step(&table, dt, u.values_mut())?;
        if smooth_start {
            cn_half.step_cn(u.values_mut());
        } else {
            be_quarter.step_be(u.values_mut());
            be_quarter.step_be(u.values_mut());
        }
    }
    if u.values().iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Precision("non-finite log-Laplace state".into()));
    }
    Ok(u)
}

/// u_f(t,·): the unique nonnegative solution of the log-Laplace equation with
/// initial data f ≥ 0, absorbing at ±L.
pub fn solve_u(
    mech: &BranchingMechanism,
    f: &GridFunction,
    t: f64,
    cfg: &FkConfig,
) -> Result<GridFunction, CoreError> {
    march_nonlinear(mech, f, t, cfg, Boundary::Absorbing, cfg.rannacher_steps)
}

/// P_μ[e^{-⟨f, X_t⟩}] = e^{-⟨u_f(t,·), μ⟩}.
pub fn laplace_functional(
    mu: &AtomicMeasure,
    f: &GridFunction,
    t: f64,
    mech: &BranchingMechanism,
    cfg: &FkConfig,
) -> Result<f64, CoreError> {
    let u = solve_u(mech, f, t, cfg)?;
    Ok((-mu.integrate_checked(&u)?).exp())
}

/// The martingale function w: positive bounded solution of ½w″ = ψ(x, w) with
/// flat tails, carrying the tail levels and the flat-tail radius.
#[derive(Debug, Clone)]
pub struct MartingaleFunctionW {
    /// w on the caller's grid (constant-extended beyond the solve window).
    pub w: GridFunction,
    /// Flat level as x → -∞.
    pub w_plus: f64,
    /// Flat level as x → +∞.
    pub w_minus: f64,
    /// Smallest radius beyond which |w'| < 1e-8.
    pub flat_radius: f64,
    /// Sup-norm disagreement between the Newton and flow routes.
    pub route_gap: f64,
    /// Sup-norm residual of ½w″ - ψ(·, w) on the solve window.
    pub ode_residual: f64,
}

impl MartingaleFunctionW {
    /// w extended by its flat tails (what interpolation clamping gives).
    pub fn at(&self, x: f64) -> f64 {
        self.w.interpolate_unchecked(x)
    }

    /// ⟨w, μ⟩ for an atomic measure.
    pub fn pair(&self, mu: &AtomicMeasure) -> f64 {
        mu.atoms().iter().map(|&(x, m)| m * self.at(x)).sum()
    }
}

/// Stationary-equation residual F(w) = ½D₂w - ψ(·,w) with mirror (Neumann)
/// ghosts at the window ends.
fn stationary_residual(table: &ReactionTable, dx: f64, w: &[f64], out: &mut [f64]) {
    let n = w.len();
    let inv = 1.0 / (dx * dx);
    for i in 0..n {
        let left = if i > 0 { w[i - 1] } else { w[1] };
        let right = if i + 1 < n { w[i + 1] } else { w[n - 2] };
        out[i] = 0.5 * inv * (left - 2.0 * w[i] + right) - table.psi(i, w[i]);
    }
}

/// Solves the Neumann tridiagonal system J δ = rhs in place.
fn solve_neumann_tridiag(
    diag: &[f64],
    off: f64,
    edge: f64,
    rhs: &mut [f64],
    scratch: &mut [f64],
) {
    let n = diag.len();
    scratch[0] = edge / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let sub = if i == n - 1 { edge } else { off };
        let sup = if i == n - 1 { 0.0 } else { off };
        let m = 1.0 / (diag[i] - sub * scratch[i - 1]);
        scratch[i] = sup * m;
        rhs[i] = (rhs[i] - sub * rhs[i - 1]) * m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

/// Damped Newton on the stationary system with Neumann rows. The residual
/// floor is set by rounding at the 1/dx² stiffness scale, a few orders below
/// the 1e-6 residual invariant carried by the result.
fn newton_route(
    table: &ReactionTable,
    dx: f64,
    start: f64,
    n: usize,
) -> Result<Vec<f64>, CoreError> {
    let mut w = vec![start; n];
    let mut residual = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let inv = 1.0 / (dx * dx);
    let floor = 40.0 * f64::EPSILON * inv * start.max(1.0);
    stationary_residual(table, dx, &w, &mut residual);
    // Merit: sum of squares, for which the Newton direction is always descent.
    let merit = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut fnorm = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut msq = merit(&residual);
    for _ in 0..200 {
        if fnorm < floor.max(1e-11) {
            return Ok(w);
        }
        for i in 0..n {
            diag[i] = -inv - table.psi_prime(i, w[i]);
        }
        let mut delta: Vec<f64> = residual.iter().map(|v| -v).collect();
        solve_neumann_tridiag(&diag, 0.5 * inv, inv, &mut delta, &mut scratch);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let trial: Vec<f64> = w.iter().zip(&delta).map(|(&wv, &d)| wv + lambda * d).collect();
            if trial.iter().all(|&v| v > 0.0) {
                stationary_residual(table, dx, &trial, &mut residual);
                let trial_msq = merit(&residual);
                if trial_msq < msq {
                    w = trial;
                    msq = trial_msq;
                    fnorm = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // The merit can no longer improve; accept if at the rounding floor.
            if fnorm < 1e-9 {
                return Ok(w);
            }
            return Err(CoreError::Convergence(format!(
                "stationary Newton line search stalled at ||F|| = {fnorm:.3e}"
            )));
        }
    }
    Err(CoreError::Convergence(format!("stationary Newton stopped at ||F|| = {fnorm:.3e}")))
}

/// Backward-Euler pseudo-transient flow of ∂u = ½u″ - ψ(x,u) on the Neumann
/// window: every implicit step solves its nonlinear system by damped Newton,
/// and the step ramps up as the state settles, so the fixed point is the
/// discrete stationary system itself regardless of the step size.
fn flow_route(
    table: &ReactionTable,
    dx: f64,
    start: f64,
    n: usize,
) -> Result<Vec<f64>, CoreError> {
    let mut u = vec![start; n];
    let inv = 1.0 / (dx * dx);
    let mut residual = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut dt = 0.05;
    let mut elapsed = 0.0;
    let mut window_start = u.clone();
    let mut window_elapsed = 0.0;
    while elapsed < 2000.0 {
        // One backward-Euler step: G(v) = v - u - dt(½D₂v - ψ(v)) = 0.
        let mut v = u.clone();
        let mut ok = false;
        for _ in 0..50 {
            stationary_residual(table, dx, &v, &mut residual);
            let mut g_norm = 0.0f64;
            let mut rhs: Vec<f64> = Vec::with_capacity(n);
            for i in 0..n {
                let g = v[i] - u[i] - dt * residual[i];
                g_norm = g_norm.max(g.abs());
                rhs.push(-g);
            }
            if g_norm < 1e-12 * (1.0 + start) {
                ok = true;
                break;
            }
            for i in 0..n {
                diag[i] = 1.0 + dt * (inv + table.psi_prime(i, v[i]));
            }
            // J = I - dt(½D₂ - ψ') with Neumann off-diagonals scaled by -dt.
            solve_neumann_tridiag(&diag, -0.5 * dt * inv, -dt * inv, &mut rhs, &mut scratch);
            for i in 0..n {
                v[i] += rhs[i];
                if v[i] < 0.0 {
                    v[i] = 1e-12;
                }
            }
        }
        if !ok {
            dt *= 0.5;
            if dt < 1e-6 {
                return Err(CoreError::Convergence("implicit flow step kept failing".into()));
            }
            continue;
        }
        u = v;
        elapsed += dt;
        window_elapsed += dt;
        dt = (dt * 1.3).min(5.0);
        if window_elapsed >= 1.0 {
            let moved = u
                .iter()
                .zip(&window_start)
                .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()))
                / window_elapsed;
            if moved < 1e-9 {
                return Ok(u);
            }
            window_start = u.clone();
            window_elapsed = 0.0;
        }
    }
    Err(CoreError::Convergence("log-Laplace flow did not reach a stationary state".into()))
}

/// Computes w by (a) damped Newton on ½w″ = ψ(x,w) with zero-derivative
/// far-field rows, and (b) long-time flow of the log-Laplace equation from a
/// large constant, both on a Neumann window of radius support+4 sharing the
/// caller's spacing; the two must agree to 1e-4 (the acceptance gate checks
/// 1e-5). The Newton solution is returned, constant-extended to the caller's
/// grid.
pub fn martingale_w(
    mech: &BranchingMechanism,
    grid: &Grid,
    cfg: &FkConfig,
) -> Result<MartingaleFunctionW, CoreError> {
    let dx = grid.spacing();
    let supp = mech.support_radius();
    if grid.half_width() <= supp + 1.0 {
        return Err(CoreError::Domain(format!(
            "grid half-width {} too small for mechanism support {supp}",
            grid.half_width()
        )));
    }
    let half_nodes = (((supp + 4.0).min(grid.half_width()) / dx).ceil() as usize).max(2);
    let half_nodes = half_nodes.min(grid.center());
    let wgrid = Grid::new(half_nodes as f64 * dx, 2 * half_nodes + 1)?;
    let table = ReactionTable::new(mech, &wgrid);

    // Initial level: 10·max(1, ||β⁺||∞ / min positive γ), the "flow from
    // above" guess; min positive γ is taken over nodes carrying at least
    // 1e-3 of the peak so vanishing support edges don't blow it up.
    let beta_plus = wgrid.nodes().map(|x| mech.beta().eval(x)).fold(0.0f64, |m, b| m.max(b));
    let gammas: Vec<f64> = wgrid.nodes().map(|x| mech.eval_gamma(x)).collect();
    let gamma_peak = gammas.iter().fold(0.0f64, |m, &g| m.max(g));
    let gamma_floor = gammas
        .iter()
        .filter(|&&g| g > 1e-3 * gamma_peak)
        .fold(f64::INFINITY, |m, &g| m.min(g));
    let mut start = 10.0 * (beta_plus / gamma_floor).max(1.0);

    for attempt in 0..3 {
        let w_newton = match newton_route(&table, dx, start, wgrid.len()) {
            Ok(w) => w,
            Err(_) if attempt < 2 => {
                start *= 2.0;
                continue;
            }
            Err(e) => return Err(e),
        };
        if w_newton.iter().fold(0.0f64, |m, &v| m.max(v)) < 1e-4 {
            start *= 2.0;
            continue;
        }

        // Route (b): implicit flow from the constant until successive
        // unit-time states agree to 1e-9 in sup norm.
        let flow = flow_route(&table, dx, start, wgrid.len())?;
        let flow_sup = flow.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if flow_sup < 1e-4 {
            return Err(CoreError::Degenerate(
                "flow collapsed onto the trivial zero solution; retry from a larger guess".into(),
            ));
        }
        let w_fn = GridFunction::new(wgrid, w_newton.clone())?;
        let route_gap = w_fn
            .values()
            .iter()
            .zip(&flow)
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
        if route_gap > 1e-4 {
            return Err(CoreError::Consistency(format!(
                "w routes disagree by {route_gap:.3e} (sup norm)"
            )));
        }

        // Residual of the stationary equation on the window.
        let mut res = vec![0.0; wgrid.len()];
        stationary_residual(&table, dx, &w_newton, &mut res);
        let ode_residual = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        // Extend to the caller's grid by the flat tail constants.
        let w_plus = w_newton[0];
        let w_minus = *w_newton.last().unwrap();
        let extended = grid.sample(|x| {
            if x < -wgrid.half_width() {
                w_plus
            } else if x > wgrid.half_width() {
                w_minus
            } else {
                w_fn.interpolate_unchecked(x)
            }
        });
        let dw = extended.derivative();
        let mut flat_radius = 0.0f64;
        for (i, x) in grid.nodes().enumerate() {
            if dw.values()[i].abs() >= 1e-8 {
                flat_radius = flat_radius.max(x.abs());
            }
        }
        return Ok(MartingaleFunctionW {
            w: extended,
            w_plus,
            w_minus,
            flat_radius,
            route_gap,
            ode_residual,
        });
    }
    Err(CoreError::Degenerate("w computation kept collapsing onto zero".into()))
}

/// Result of the horizon-doubled Laplace transform of the martingale limit.
#[derive(Debug, Clone, Copy)]
pub struct WhInftyLaplace {
    pub value: f64,
    pub horizon: f64,
    /// |value(T) - value(2T)| at the accepted horizon.
    pub certificate: f64,
}

/// E_μ[e^{-θ W^h_∞}] ≈ P_μ[e^{-⟨θ e^{-λ₁T} h, X_T⟩}], horizon-doubled until
/// the value moves by < 1e-4.
pub fn wh_infty_laplace(
    mu: &AtomicMeasure,
    theta: f64,
    horizon: f64,
    spec: &SpectralData,
    mech: &BranchingMechanism,
    cfg: &FkConfig,
) -> Result<WhInftyLaplace, CoreError> {
    if theta < 0.0 {
        return Err(CoreError::Domain(format!("theta must be >= 0, got {theta}")));
    }
    if theta == 0.0 {
        return Ok(WhInftyLaplace { value: 1.0, horizon, certificate: 0.0 });
    }
    let value_at = |t: f64| -> Result<f64, CoreError> {
        let data = spec.h.map(|h| theta * (-spec.lambda1 * t).exp() * h);
        laplace_functional(mu, &data, t, mech, cfg)
    };
    let mut t = horizon;
    let mut v = value_at(t)?;
    let t_max = horizon * 8.0;
    loop {
        let v2 = value_at(2.0 * t)?;
        let gap = (v - v2).abs();
        if gap < 1e-4 {
            return Ok(WhInftyLaplace { value: v2, horizon: 2.0 * t, certificate: gap });
        }
        t *= 2.0;
        v = v2;
        if t > t_max {
            return Err(CoreError::Horizon(format!(
                "Laplace transform still moving by {gap:.3e} at horizon {t}"
            )));
        }
    }
}

/// Which travelling frontier a window follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frontier {
    /// Window rides +√(λ₁/2)·t; the limit intensity is η₋ = C₋e^{-√(2λ₁)x}dx.
    Right,
    /// Window rides -√(λ₁/2)·t; the limit intensity is η₊ = C₊e^{+√(2λ₁)x}dx.
    Left,
}

/// ⟨1_A, η_±⟩ for a union of intervals: the frontier-weighted exponential mass
/// of the window.
pub fn eta_pairing(spec: &SpectralData, frontier: Frontier, window: &[(f64, f64)]) -> f64 {
    let kappa = spec.kappa();
    window
        .iter()
        .map(|&(a, b)| match frontier {
            Frontier::Right => spec.c_minus * ((-kappa * a).exp() - (-kappa * b).exp()) / kappa,
            Frontier::Left => spec.c_plus * ((kappa * b).exp() - (kappa * a).exp()) / kappa,
        })
        .sum()
}

/// Both sides of the critical-frontier convergence for an indicator window:
/// lhs = P_μ[e^{-⟨1_A, X_t ∓ √(λ₁/2)t⟩}] (window shifted onto the frontier),
/// rhs = E_μ[e^{-⟨1_A, η_±⟩ W^h_∞}]. The two agree in the t → ∞ limit.
#[allow(clippy::too_many_arguments)]
pub fn theorem2_pair(
    mu: &AtomicMeasure,
    window: &[(f64, f64)],
    t: f64,
    frontier: Frontier,
    spec: &SpectralData,
    mech: &BranchingMechanism,
    cfg: &FkConfig,
    horizon: f64,
) -> Result<(f64, f64), CoreError> {
    let grid = spec.h.grid();
    let shift = spec.critical_speed() * t;
    let shifted: Vec<(f64, f64)> = window
        .iter()
        .map(|&(a, b)| match frontier {
            Frontier::Right => (a + shift, b + shift),
            Frontier::Left => (a - shift, b - shift),
        })
        .collect();
    let reach = shifted.iter().fold(0.0f64, |m, &(a, b)| m.max(a.abs()).max(b.abs()));
    if reach + 1.0 >= grid.half_width() {
        return Err(CoreError::Domain(format!(
            "shifted window reaches {reach}, too close to the grid edge {}",
            grid.half_width()
        )));
    }
    let f = grid.cell_averaged_indicator(&shifted);
    let lhs = laplace_functional(mu, &f, t, mech, cfg)?;
    let theta = eta_pairing(spec, frontier, window);
    let rhs = wh_infty_laplace(mu, theta, horizon, spec, mech, cfg)?.value;
    Ok((lhs, rhs))
}

/// Both sides of the critical-window mass convergence:
/// lhs = P_μ[e^{-λ 𝒳^{δ_c t}_t}], rhs = E_μ[e^{-λ (C₊+C₋)/√(2λ₁) · W^h_∞}].
pub fn theorem3_pair(
    mu: &AtomicMeasure,
    lam: f64,
    t: f64,
    spec: &SpectralData,
    mech: &BranchingMechanism,
    cfg: &FkConfig,
    horizon: f64,
) -> Result<(f64, f64), CoreError> {
    if lam < 0.0 {
        return Err(CoreError::Domain(format!("lambda must be >= 0, got {lam}")));
    }
    if lam == 0.0 {
        return Ok((1.0, 1.0));
    }
    let grid = spec.h.grid();
    let radius = spec.critical_speed() * t;
    if radius + 1.0 >= grid.half_width() {
        return Err(CoreError::Domain(format!(
            "critical window radius {radius} too close to the grid edge"
        )));
    }
    let l = grid.half_width();
    let ind = grid.cell_averaged_indicator(&[(-l, -radius), (radius, l)]);
    let lhs = laplace_functional(mu, &ind.map(|v| lam * v), t, mech, cfg)?;
    let theta = lam * (spec.c_plus + spec.c_minus) / spec.kappa();
    let rhs = wh_infty_laplace(mu, theta, horizon, spec, mech, cfg)?.value;
    Ok((lhs, rhs))
}

/// P_μ(max X_t > z) ≈ 1 - P_μ[e^{-λ⟨1_{(z,∞)}, X_t⟩}] at λ = 1e6, with a
/// saturation cross-check at λ = 1e7.
pub fn max_support_tail(
    mu: &AtomicMeasure,
    z: f64,
    t: f64,
    mech: &BranchingMechanism,
    grid: &Grid,
    cfg: &FkConfig,
) -> Result<f64, CoreError> {
    let l = grid.half_width();
    if z + 2.0 >= l {
        return Err(CoreError::Domain(format!("probe z = {z} too close to the grid edge {l}")));
    }
    let ind = grid.cell_averaged_indicator(&[(z, l)]);
    let at = |lam: f64| -> Result<f64, CoreError> {
        Ok(1.0 - laplace_functional(mu, &ind.map(|v| lam * v), t, mech, cfg)?)
    };
    let v6 = at(1e6)?;
    let v7 = at(1e7)?;
    if (v6 - v7).abs() > 1e-3 {
        return Err(CoreError::Precision(format!(
            "max-support probe not saturated in lambda: {v6} vs {v7}"
        )));
    }
    Ok(v7)
}

//! The linear engine: Crank-Nicolson integration of ∂u/∂t = ½u″ + βu with
//! absorbing boundaries, moving-window tail masses, the sharp tail ratio, and
//! the exact first/second moments of the superprocess and its skeleton.

use crate::error::CoreError;
use crate::grid::{Grid, GridFunction};
use crate::mechanism::BranchingMechanism;
use crate::particle::AtomicMeasure;
use crate::spectral::SpectralData;

/// Crank-Nicolson configuration. The scheme weight is fixed at ½ and the
/// boundary is absorbing at ±L; `dt` is an accuracy guard (the scheme is
/// unconditionally stable), `dt_outer` steps the outer time-quadrature of the
/// variance formulas.
#[derive(Debug, Clone, Copy)]
pub struct FkConfig {
    pub dt: f64,
    pub dt_outer: f64,
    /// Number of initial steps replaced by pairs of backward-Euler half-steps
    /// to damp ringing on discontinuous data.
    pub rannacher_steps: usize,
}

impl Default for FkConfig {
    fn default() -> Self {
        FkConfig { dt: 1e-3, dt_outer: 0.05, rannacher_steps: 2 }
    }
}

impl FkConfig {
    pub fn with_dt(dt: f64) -> Self {
        FkConfig { dt, ..Default::default() }
    }

    pub fn validate(&self, grid: &Grid) -> Result<(), CoreError> {
        if !(self.dt > 0.0) {
            return Err(CoreError::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if self.dt > grid.spacing() + 1e-15 {
            return Err(CoreError::Domain(format!(
                "accuracy guard dt <= dx violated: dt = {}, dx = {}",
                self.dt,
                grid.spacing()
            )));
        }
        if !(self.dt_outer > 0.0) {
            return Err(CoreError::Domain("dt_outer must be positive".into()));
        }
        Ok(())
    }
}

/// Constant-coefficient tridiagonal system with precomputed Thomas factors.
struct FactoredTridiag {
    sub: Vec<f64>,
    cstar: Vec<f64>,
    m: Vec<f64>,
}

impl FactoredTridiag {
    fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Self {
        let n = diag.len();
        let mut cstar = vec![0.0; n];
        let mut m = vec![0.0; n];
        m[0] = 1.0 / diag[0];
        cstar[0] = sup[0] * m[0];
        for i in 1..n {
            m[i] = 1.0 / (diag[i] - sub[i] * cstar[i - 1]);
            cstar[i] = sup[i] * m[i];
        }
        FactoredTridiag { sub, cstar, m }
    }

    #[inline]
    fn solve(&self, d: &mut [f64]) {
        let n = d.len();
        d[0] *= self.m[0];
        for i in 1..n {
            d[i] = (d[i] - self.sub[i] * d[i - 1]) * self.m[i];
        }
        for i in (0..n - 1).rev() {
            d[i] -= self.cstar[i] * d[i + 1];
        }
    }
}

/// Boundary handling of the one-step propagators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Boundary {
    /// Dirichlet zero at ±L.
    Absorbing,
    /// Zero-derivative (mirror ghost) at ±L.
    Reflecting,
}

/// One-step propagator for ∂u/∂t = ½u″ + Vu at a fixed step.
pub(crate) struct Propagator {
    cn_lhs: FactoredTridiag,
    be_lhs: FactoredTridiag,
    rhs_sub: Vec<f64>,
    rhs_diag: Vec<f64>,
    rhs_sup: Vec<f64>,
    boundary: Boundary,
    buf: Vec<f64>,
}

impl Propagator {
    pub(crate) fn new(potential: &GridFunction, dt: f64, boundary: Boundary) -> Self {
        let grid = potential.grid();
        let n = grid.len();
        let inv = 1.0 / grid.spacing().powi(2);
        // A = ½D₂ + diag(V): off-diagonals inv/2, diagonal -inv + V.
        let mut a_sub = vec![0.5 * inv; n];
        let mut a_sup = vec![0.5 * inv; n];
        let a_diag: Vec<f64> = potential.values().iter().map(|v| -inv + v).collect();
        a_sub[0] = 0.0;
        a_sup[n - 1] = 0.0;
        match boundary {
            Boundary::Absorbing => {}
            Boundary::Reflecting => {
                // Mirror ghost doubles the inward off-diagonal.
                a_sup[0] = inv;
                a_sub[n - 1] = inv;
            }
        }

        let assemble = |scale: f64, shift: f64| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            let sub: Vec<f64> = a_sub.iter().map(|v| scale * v).collect();
            let sup: Vec<f64> = a_sup.iter().map(|v| scale * v).collect();
            let diag: Vec<f64> = a_diag.iter().map(|v| shift + scale * v).collect();
            (sub, diag, sup)
        };

        let (mut ls, mut ld, mut lu) = assemble(-0.5 * dt, 1.0);
        let (mut bs, mut bd, mut bu) = assemble(-dt, 1.0);
        let (mut rs, mut rd, mut ru) = assemble(0.5 * dt, 1.0);
        if boundary == Boundary::Absorbing {
            // Identity rows keep the boundary pinned at zero.
            for (s, d, u) in [(&mut ls, &mut ld, &mut lu), (&mut bs, &mut bd, &mut bu), (&mut rs, &mut rd, &mut ru)]
            {
                s[0] = 0.0;
                u[0] = 0.0;
                d[0] = 1.0;
                s[n - 1] = 0.0;
                u[n - 1] = 0.0;
                d[n - 1] = 1.0;
            }
        }

        Propagator {
            cn_lhs: FactoredTridiag::new(ls, ld, lu),
            be_lhs: FactoredTridiag::new(bs, bd, bu),
            rhs_sub: rs,
            rhs_diag: rd,
            rhs_sup: ru,
            boundary,
            buf: vec![0.0; n],
        }
    }

    fn apply_rhs(&mut self, u: &[f64]) {
        let n = u.len();
        self.buf[0] = self.rhs_diag[0] * u[0] + self.rhs_sup[0] * u[1];
        for i in 1..n - 1 {
            self.buf[i] =
                self.rhs_sub[i] * u[i - 1] + self.rhs_diag[i] * u[i] + self.rhs_sup[i] * u[i + 1];
        }
        self.buf[n - 1] = self.rhs_sub[n - 1] * u[n - 2] + self.rhs_diag[n - 1] * u[n - 1];
    }

    fn pin_boundary(&self, u: &mut [f64]) {
        if self.boundary == Boundary::Absorbing {
            let n = u.len();
            u[0] = 0.0;
            u[n - 1] = 0.0;
        }
    }

    /// One Crank-Nicolson step in place.
    pub(crate) fn step_cn(&mut self, u: &mut [f64]) {
        self.apply_rhs(u);
        u.copy_from_slice(&self.buf);
        self.pin_boundary(u);
        self.cn_lhs.solve(u);
        self.pin_boundary(u);
    }

    /// One backward-Euler step at the same dt (used pairwise at half steps by
    /// the Rannacher startup, so construct with dt/2 for that purpose).
    pub(crate) fn step_be(&mut self, u: &mut [f64]) {
        self.pin_boundary(u);
        self.be_lhs.solve(u);
        self.pin_boundary(u);
    }
}

fn blow_up_check(u: &[f64]) -> Result<(), CoreError> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Precision(
            "non-finite values while stepping the semigroup (mis-configured run?)".into(),
        ));
    }
    Ok(())
}

/// Internal marching core shared by all public semigroup entry points: steps
/// `f` for total time `t` and invokes `on_snapshot` at the requested times
/// (which must be sorted; `t` itself need not be listed).
fn march(
    beta: &GridFunction,
    f: &GridFunction,
    t: f64,
    cfg: &FkConfig,
    boundary: Boundary,
    snapshots: &[f64],
    mut on_snapshot: impl FnMut(f64, &GridFunction),
) -> Result<GridFunction, CoreError> {
    cfg.validate(f.grid())?;
    if t < 0.0 {
        return Err(CoreError::Domain(format!("semigroup time must be >= 0, got {t}")));
    }
    assert_eq!(beta.grid(), f.grid(), "potential and data live on different grids");
    let mut u = f.clone();
    let mut next_snap = 0usize;
    while next_snap < snapshots.len() && snapshots[next_snap] <= 1e-12 {
        on_snapshot(0.0, &u);
        next_snap += 1;
    }
    if t <= 1e-12 {
        return Ok(u);
    }
    let steps = (t / cfg.dt).ceil().max(1.0) as usize;
    let dt_eff = t / steps as f64;
    let mut cn = Propagator::new(beta, dt_eff, boundary);
    let mut be_half = Propagator::new(beta, 0.5 * dt_eff, boundary);
    for k in 0..steps {
        if k < cfg.rannacher_steps {
            be_half.step_be(u.values_mut());
            be_half.step_be(u.values_mut());
        } else {
            cn.step_cn(u.values_mut());
        }
        let now = (k + 1) as f64 * dt_eff;
        while next_snap < snapshots.len() && snapshots[next_snap] <= now + 1e-9 {
            on_snapshot(now, &u);
            next_snap += 1;
        }
    }
    blow_up_check(u.values())?;
    Ok(u)
}

/// P^β_t f: solves ∂u/∂t = ½u″ + βu from u(0) = f and returns u(t,·).
pub fn semigroup_apply(
    beta: &GridFunction,
    f: &GridFunction,
    t: f64,
    cfg: &FkConfig,
) -> Result<GridFunction, CoreError> {
    march(beta, f, t, cfg, Boundary::Absorbing, &[], |_, _| {})
}

/// Like [`semigroup_apply`] but also hands back the state at the requested
/// intermediate times (sorted ascending).
pub fn semigroup_snapshots(
    beta: &GridFunction,
    f: &GridFunction,
    times: &[f64],
    cfg: &FkConfig,
) -> Result<Vec<GridFunction>, CoreError> {
    let t_end = times.last().copied().unwrap_or(0.0);
    let mut out = Vec::with_capacity(times.len());
    march(beta, f, t_end, cfg, Boundary::Absorbing, times, |_, u| out.push(u.clone()))?;
    Ok(out)
}

/// Halves dt until the observable at `probe_x` moves by less than `tol`
/// between refinements; returns the converged field and the dt used.
pub fn semigroup_apply_converged(
    beta: &GridFunction,
    f: &GridFunction,
    t: f64,
    cfg: &FkConfig,
    probe_x: f64,
    tol: f64,
) -> Result<(GridFunction, f64), CoreError> {
    let mut dt = cfg.dt;
    let mut prev = semigroup_apply(beta, f, t, &FkConfig { dt, ..*cfg })?;
    for _ in 0..6 {
        dt *= 0.5;
        let next = semigroup_apply(beta, f, t, &FkConfig { dt, ..*cfg })?;
        let moved = (next.interpolate(probe_x)? - prev.interpolate(probe_x)?).abs();
        if moved < tol {
            return Ok((next, dt));
        }
        prev = next;
    }
    Err(CoreError::Convergence(format!("observable still moving at dt = {dt}")))
}

/// Approximate forward density of the β-weighted motion started at `x0`:
/// the Gaussian N(x0, t0) short-time kernel scaled by e^{β(x0) t0}, marched to
/// each requested time. One march serves every moving window, which is how the
/// phase-transition sweep stays cheap.
pub fn density_snapshots(
    beta: &GridFunction,
    x0: f64,
    times: &[f64],
    cfg: &FkConfig,
) -> Result<Vec<GridFunction>, CoreError> {
    let grid = *beta.grid();
    if !grid.contains(x0) {
        return Err(CoreError::Domain(format!("source x0 = {x0} outside the grid")));
    }
    let t0 = (10.0 * grid.spacing()).powi(2).max(4.0 * cfg.dt);
    let weight = (beta.interpolate(x0)? * t0).exp();
    let norm = weight / (2.0 * std::f64::consts::PI * t0).sqrt();
    let seed = grid.sample(|x| norm * (-(x - x0) * (x - x0) / (2.0 * t0)).exp());
    if times.iter().any(|&t| t < t0) {
        return Err(CoreError::Domain(format!("density snapshots need t >= t0 = {t0}")));
    }
    let shifted: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let mut out = Vec::with_capacity(times.len());
    march(beta, &seed, *shifted.last().unwrap_or(&0.0), cfg, Boundary::Absorbing, &shifted, |_, u| {
        out.push(u.clone())
    })?;
    Ok(out)
}

/// Which side(s) of the line a moving window occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaSet {
    /// Θ = {+1}: the window R(t) + A on the right.
    Right,
    /// Θ = {-1}: its mirror image on the left.
    Left,
    /// Θ = {±1}: both.
    Both,
}

/// Sublinear centering correction a(t) in R(t) = δt + a(t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftCorrection {
    Zero,
    Constant(f64),
    /// a(t) = c·ln(1 + t)
    LogFactor(f64),
}

impl DriftCorrection {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            DriftCorrection::Zero => 0.0,
            DriftCorrection::Constant(c) => *c,
            DriftCorrection::LogFactor(c) => c * (1.0 + t).ln(),
        }
    }
}

/// Moving-window query: symmetric two-sided {|y| >= R(t)} or a one-sided
/// window set R(t) + A with A a finite union of left-bounded intervals
/// (right endpoints may be +∞).
#[derive(Debug, Clone)]
pub struct TailQuery {
    pub delta: f64,
    pub drift_correction: DriftCorrection,
    pub theta: ThetaSet,
    /// The window set A; `TailQuery::two_sided` uses A = (0, ∞) with Θ = ±1.
    pub window: Vec<(f64, f64)>,
}

impl TailQuery {
    /// {|y| >= R(t)}.
    pub fn two_sided(delta: f64) -> Self {
        TailQuery {
            delta,
            drift_correction: DriftCorrection::Zero,
            theta: ThetaSet::Both,
            window: vec![(0.0, f64::INFINITY)],
        }
    }

    pub fn one_sided(delta: f64, theta: ThetaSet, window: Vec<(f64, f64)>) -> Self {
        TailQuery { delta, drift_correction: DriftCorrection::Zero, theta, window }
    }

    pub fn radius(&self, t: f64) -> f64 {
        self.delta * t + self.drift_correction.eval(t)
    }

    fn validate(&self) -> Result<(), CoreError> {
        if self.window.is_empty() {
            return Err(CoreError::Domain("empty window set".into()));
        }
        for &(a, b) in &self.window {
            if !a.is_finite() || !(b > a) {
                return Err(CoreError::Domain(format!(
                    "window interval ({a}, {b}) must have a finite left end and b > a"
                )));
            }
        }
        Ok(())
    }

    /// η(A) = ∫_A e^{-κ y} dy in closed form.
    pub fn eta(&self, kappa: f64) -> f64 {
        self.window
            .iter()
            .map(|&(a, b)| {
                let upper = if b.is_finite() { (-kappa * b).exp() } else { 0.0 };
                ((-kappa * a).exp() - upper) / kappa
            })
            .sum()
    }

    /// Cell-averaged indicator of C_Θ(R(t), A) on the grid. Errors if the
    /// window starts outside the grid.
    pub fn indicator(&self, grid: &Grid, t: f64) -> Result<GridFunction, CoreError> {
        self.validate()?;
        let r = self.radius(t);
        let l = grid.half_width();
        let inf_a = self.window.iter().map(|w| w.0).fold(f64::INFINITY, f64::min);
        if r + inf_a >= l {
            return Err(CoreError::Domain(format!(
                "window start R(t) + inf A = {} is outside the grid (L = {l})",
                r + inf_a
            )));
        }
        let mut intervals = Vec::new();
        let clip = |a: f64, b: f64| (a.max(-l), b.min(l));
        if matches!(self.theta, ThetaSet::Right | ThetaSet::Both) {
            for &(a, b) in &self.window {
                intervals.push(clip(r + a, if b.is_finite() { r + b } else { l }));
            }
        }
        if matches!(self.theta, ThetaSet::Left | ThetaSet::Both) {
            for &(a, b) in &self.window {
                intervals.push(clip(if b.is_finite() { -r - b } else { -l }, -r - a));
            }
        }
        Ok(grid.cell_averaged_indicator(&intervals))
    }
}

/// π^{R(t)}_t(x) (or its one-sided window variant): expectation of e_β(t) on
/// the event that the motion ends in the moving window, computed by evolving
/// the cell-averaged indicator. Reported values are clamped at zero.
pub fn tail_mass(
    beta: &GridFunction,
    query: &TailQuery,
    t: f64,
    x: f64,
    cfg: &FkConfig,
) -> Result<f64, CoreError> {
    if !(t > 0.0) {
        return Err(CoreError::Domain(format!("tail mass needs t > 0, got {t}")));
    }
    let ind = query.indicator(beta.grid(), t)?;
    let evolved = semigroup_apply(beta, &ind, t, cfg)?;
    Ok(evolved.interpolate(x)?.max(0.0))
}

/// Number of nodes at which a reported observable had to be clamped from a
/// negative undershoot of magnitude above 1e-12.
pub fn clamp_events(field: &GridFunction) -> usize {
    field.values().iter().filter(|&&v| v < -1e-12).count()
}

/// Ratio of Lemma 2.2: tail mass at horizon t-s over its sharp asymptote
/// C_Θ η(A) h(x) e^{λ₁(t-s) - √(2λ₁) R(t)}; approaches 1 as t grows.
pub fn sharp_tail_ratio(
    spec: &SpectralData,
    beta: &GridFunction,
    query: &TailQuery,
    t: f64,
    s: f64,
    x: f64,
    cfg: &FkConfig,
) -> Result<f64, CoreError> {
    let kappa = spec.kappa();
    if !(query.delta > 0.0 && query.delta < kappa) {
        return Err(CoreError::Domain(format!(
            "sharp ratio needs delta in (0, sqrt(2 lambda1)) = (0, {kappa}), got {}",
            query.delta
        )));
    }
    if !(s >= 0.0) || s / t >= 1.0 - query.delta / kappa {
        return Err(CoreError::Domain(format!(
            "time offset s = {s} violates s/t < 1 - delta/sqrt(2 lambda1)"
        )));
    }
    let c_theta = match query.theta {
        ThetaSet::Right => spec.c_minus,
        ThetaSet::Left => spec.c_plus,
        ThetaSet::Both => spec.c_plus + spec.c_minus,
    };
    let ind = query.indicator(beta.grid(), t)?;
    let evolved = semigroup_apply(beta, &ind, t - s, cfg)?;
    let numerator = evolved.interpolate(x)?.max(0.0);
    let denom = c_theta
        * query.eta(kappa)
        * spec.h_at(x)
        * (spec.lambda1 * (t - s) - kappa * query.radius(t)).exp();
    Ok(numerator / denom)
}

/// ⟨P^β_t f, μ⟩: first moment of ⟨f, X_t⟩ under P_μ.
pub fn mean_mass(
    mu: &AtomicMeasure,
    f: &GridFunction,
    t: f64,
    beta: &GridFunction,
    cfg: &FkConfig,
) -> Result<f64, CoreError> {
    let evolved = semigroup_apply(beta, f, t, cfg)?;
    mu.integrate_checked(&evolved)
}

/// Shared core of the variance formulas:
/// ∫₀ᵗ P^β_s [2γ (P^β_{t-s} g)²](x-evaluation) ds by trapezoid in s at step
/// dt_outer, with the inner semigroups on the solver grid.
fn variance_integral(
    g: &GridFunction,
    t: f64,
    mech: &BranchingMechanism,
    beta: &GridFunction,
    cfg: &FkConfig,
    eval: impl Fn(&GridFunction) -> Result<f64, CoreError>,
) -> Result<f64, CoreError> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let grid = *g.grid();
    let m = (t / cfg.dt_outer).ceil().max(1.0) as usize;
    let ds = t / m as f64;
    let gamma = mech.gamma_field(grid);
    // Snapshots of P^β_τ g at τ = j·ds, j = 0..m.
    let times: Vec<f64> = (0..=m).map(|j| j as f64 * ds).collect();
    let snaps = semigroup_snapshots(beta, g, &times, cfg)?;
    let mut total = 0.0;
    for (j, s) in times.iter().enumerate() {
        let inner = &snaps[m - j]; // P^β_{t-s} g
        let integrand = gamma.zip_with(inner, |gm, v| 2.0 * gm * v * v);
        let outer = semigroup_apply(beta, &integrand, *s, cfg)?;
        let weight = if j == 0 || j == m { 0.5 } else { 1.0 };
        total += weight * ds * eval(&outer)?;
    }
    Ok(total)
}

/// Var_μ(⟨f, X_t⟩) = ∫₀ᵗ ⟨P^β_s(2γ(P^β_{t-s}f)²), μ⟩ ds.
pub fn var_mass(
    mu: &AtomicMeasure,
    f: &GridFunction,
    t: f64,
    mech: &BranchingMechanism,
    beta: &GridFunction,
    cfg: &FkConfig,
) -> Result<f64, CoreError> {
    variance_integral(f, t, mech, beta, cfg, |field| mu.integrate_checked(field))
}

/// Single-ancestor skeleton mean: E_{δ_x}⟨f, Z_t⟩ = (1/w(x)) P^β_t(w f)(x).
pub fn skeleton_mean(
    x: f64,
    f: &GridFunction,
    t: f64,
    w: &GridFunction,
    beta: &GridFunction,
    cfg: &FkConfig,
) -> Result<f64, CoreError> {
    if w.values().iter().any(|&v| v <= 0.0) {
        return Err(CoreError::Domain("skeleton mean needs w > 0".into()));
    }
    let wf = w.zip_with(f, |a, b| a * b);
    let evolved = semigroup_apply(beta, &wf, t, cfg)?;
    Ok(evolved.interpolate(x)?.max(0.0) / w.interpolate(x)?)
}

/// Single-ancestor skeleton second moment:
/// (1/w) P^β_t(w f²)(x) + (1/w) ∫₀ᵗ P^β_s[2γ(P^β_{t-s}(w f))²](x) ds.
pub fn skeleton_second_moment(
    x: f64,
    f: &GridFunction,
    t: f64,
    w: &GridFunction,
    mech: &BranchingMechanism,
    beta: &GridFunction,
    cfg: &FkConfig,
) -> Result<f64, CoreError> {
    if w.values().iter().any(|&v| v <= 0.0) {
        return Err(CoreError::Domain("skeleton moment needs w > 0".into()));
    }
    let wx = w.interpolate(x)?;
    let wf2 = w.zip_with(f, |a, b| a * b * b);
    let first = semigroup_apply(beta, &wf2, t, cfg)?.interpolate(x)?.max(0.0) / wx;
    let wf = w.zip_with(f, |a, b| a * b);
    let second =
        variance_integral(&wf, t, mech, beta, cfg, |field| Ok(field.interpolate(x)?.max(0.0)))? / wx;
    Ok(first + second)
}

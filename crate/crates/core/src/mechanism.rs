//! The spatially dependent branching mechanism
//!
//! ψ(x,λ) = -β(x)λ + α(x)λ² + Σ_i r_i(x)(e^{-λu_i} - 1 + λu_i)
//!
//! with compactly supported profiles and a finite-atom jump kernel, plus the
//! derivation of the skeleton's local offspring law from ψ and the martingale
//! function w.

use crate::error::CoreError;
use crate::grid::{Grid, GridFunction};
use std::collections::BTreeMap;

/// Maximum offspring count kept when extracting the generating-function
/// coefficients; the tail defect is checked against [`MASS_DEFECT_TOL`].
pub const OFFSPRING_KMAX: usize = 20;
/// Allowed truncation defect 1 - Σ p_k of the extracted offspring law.
pub const MASS_DEFECT_TOL: f64 = 1e-8;

/// Compactly supported scalar profile on the line.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// height · 1_{[-a, a]}(x)
    IndicatorBox { half_width: f64, height: f64 },
    /// height · exp(1 - a²/(a² - x²)) inside (-a, a), zero outside
    SmoothBump { half_width: f64, height: f64 },
    /// Piecewise-linear table, zero outside the tabulated range
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
}

impl Profile {
    pub fn validate(&self) -> Result<(), CoreError> {
        match self {
            Profile::IndicatorBox { half_width, .. } | Profile::SmoothBump { half_width, .. } => {
                if !(*half_width > 0.0) || !half_width.is_finite() {
                    return Err(CoreError::Domain(format!(
                        "profile half-width must be positive and finite, got {half_width}"
                    )));
                }
            }
            Profile::Tabulated { xs, values } => {
                if xs.len() != values.len() || xs.len() < 2 {
                    return Err(CoreError::Domain(
                        "tabulated profile needs >= 2 matching (x, value) pairs".into(),
                    ));
                }
                if xs.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(CoreError::Domain("tabulated profile abscissae must increase".into()));
                }
                if xs.iter().chain(values.iter()).any(|v| !v.is_finite()) {
                    return Err(CoreError::Domain("tabulated profile has non-finite entries".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::IndicatorBox { half_width, height } => {
                if x.abs() <= *half_width {
                    *height
                } else {
                    0.0
                }
            }
            Profile::SmoothBump { half_width, height } => {
                let a2 = half_width * half_width;
                if x.abs() < *half_width {
                    height * (1.0 - a2 / (a2 - x * x)).exp()
                } else {
                    0.0
                }
            }
            Profile::Tabulated { xs, values } => {
                if x < xs[0] || x > *xs.last().unwrap() {
                    return 0.0;
                }
                let i = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
                    Ok(i) => return values[i],
                    Err(i) => i,
                };
                let (x0, x1) = (xs[i - 1], xs[i]);
                let frac = (x - x0) / (x1 - x0);
                values[i - 1] + frac * (values[i] - values[i - 1])
            }
        }
    }

    /// Radius beyond which the profile vanishes identically.
    pub fn support_radius(&self) -> f64 {
        match self {
            Profile::IndicatorBox { half_width, .. } | Profile::SmoothBump { half_width, .. } => {
                *half_width
            }
            Profile::Tabulated { xs, .. } => xs[0].abs().max(xs.last().unwrap().abs()),
        }
    }

    fn is_nonnegative(&self) -> bool {
        match self {
            Profile::IndicatorBox { height, .. } | Profile::SmoothBump { height, .. } => {
                *height >= 0.0
            }
            Profile::Tabulated { values, .. } => values.iter().all(|v| *v >= 0.0),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Profile::IndicatorBox { height, .. } | Profile::SmoothBump { height, .. } => {
                *height == 0.0
            }
            Profile::Tabulated { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    /// Zero profile, handy for mechanisms without a quadratic or drift part.
    pub fn zero() -> Profile {
        Profile::IndicatorBox { half_width: 1.0, height: 0.0 }
    }

    /// Mean of the profile over the dual cell [x - dx/2, x + dx/2]. Grid
    /// fields are built from cell averages so that box edges falling between
    /// nodes do not quantize the effective support width (which would cost a
    /// first-order eigenvalue bias).
    pub fn cell_average(&self, x: f64, dx: f64) -> f64 {
        match self {
            Profile::IndicatorBox { half_width, height } => {
                let lo = (x - 0.5 * dx).max(-half_width);
                let hi = (x + 0.5 * dx).min(*half_width);
                if hi > lo {
                    height * (hi - lo) / dx
                } else {
                    0.0
                }
            }
            // Simpson on the cell is plenty for the smooth and piecewise
            // linear kinds.
            _ => {
                let (a, b) = (x - 0.5 * dx, x + 0.5 * dx);
                (self.eval(a) + 4.0 * self.eval(x) + self.eval(b)) / 6.0
            }
        }
    }

    /// Samples the cell-averaged profile on a grid.
    pub fn field(&self, grid: Grid) -> GridFunction {
        let dx = grid.spacing();
        grid.sample(|x| self.cell_average(x, dx))
    }
}

/// One atom of the jump kernel: jumps of fixed mass `size` arriving at the
/// spatially varying rate `rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpAtom {
    pub size: f64,
    pub rate: Profile,
}

impl JumpAtom {
    pub fn new(size: f64, rate: Profile) -> Result<Self, CoreError> {
        if !(size > 0.0) || !size.is_finite() {
            return Err(CoreError::Domain(format!("jump size must be positive, got {size}")));
        }
        rate.validate()?;
        if !rate.is_nonnegative() {
            return Err(CoreError::Domain("jump rate profile must be nonnegative".into()));
        }
        Ok(JumpAtom { size, rate })
    }
}

/// ψ(x,λ) with drift profile β, quadratic profile α, and finitely many jump
/// atoms. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingMechanism {
    beta: Profile,
    alpha: Profile,
    jumps: Vec<JumpAtom>,
}

impl BranchingMechanism {
    pub fn new(beta: Profile, alpha: Profile, jumps: Vec<JumpAtom>) -> Result<Self, CoreError> {
        beta.validate()?;
        alpha.validate()?;
        if !alpha.is_nonnegative() {
            return Err(CoreError::Domain("alpha profile must be nonnegative".into()));
        }
        let mech = BranchingMechanism { beta, alpha, jumps };
        if mech.alpha.is_zero() && mech.jumps.iter().all(|j| j.rate.is_zero()) {
            return Err(CoreError::Domain(
                "gamma = alpha + jump second moments must not vanish identically".into(),
            ));
        }
        Ok(mech)
    }

    /// Quadratic mechanism -βλ + αλ² (empty jump kernel).
    pub fn quadratic(beta: Profile, alpha: Profile) -> Result<Self, CoreError> {
        Self::new(beta, alpha, Vec::new())
    }

    pub fn beta(&self) -> &Profile {
        &self.beta
    }

    pub fn alpha(&self) -> &Profile {
        &self.alpha
    }

    pub fn jumps(&self) -> &[JumpAtom] {
        &self.jumps
    }

    pub fn is_quadratic(&self) -> bool {
        self.jumps.is_empty()
    }

    /// Radius beyond which ψ(x,·) vanishes identically.
    pub fn support_radius(&self) -> f64 {
        let mut r = self.beta.support_radius().max(self.alpha.support_radius());
        for j in &self.jumps {
            r = r.max(j.rate.support_radius());
        }
        r
    }

    /// ψ(x,λ); exactly zero at λ = 0 and outside the supports.
    pub fn eval_psi(&self, x: f64, lam: f64) -> Result<f64, CoreError> {
        if lam < 0.0 {
            return Err(CoreError::Domain(format!("psi requires lambda >= 0, got {lam}")));
        }
        Ok(self.psi_unchecked(x, lam))
    }

    /// ψ without the sign check; also the analytic continuation the implicit
    /// reaction solver may probe transiently.
    #[inline]
    pub fn psi_unchecked(&self, x: f64, lam: f64) -> f64 {
        let mut v = -self.beta.eval(x) * lam + self.alpha.eval(x) * lam * lam;
        for j in &self.jumps {
            let r = j.rate.eval(x);
            if r != 0.0 {
                let lu = lam * j.size;
                v += r * ((-lu).exp() - 1.0 + lu);
            }
        }
        v
    }

    /// ψ₀(x,λ) = ψ(x,λ) + β(x)λ, the nonnegative part used by the split
    /// reaction step (αλ² plus the jump integrand).
    #[inline]
    pub fn psi0(&self, x: f64, lam: f64) -> f64 {
        let mut v = self.alpha.eval(x) * lam * lam;
        for j in &self.jumps {
            let r = j.rate.eval(x);
            if r != 0.0 {
                let lu = lam * j.size;
                v += r * ((-lu).exp() - 1.0 + lu);
            }
        }
        v
    }

    /// ∂ψ₀/∂λ, used by the Newton reaction step.
    #[inline]
    pub fn psi0_prime(&self, x: f64, lam: f64) -> f64 {
        let mut v = 2.0 * self.alpha.eval(x) * lam;
        for j in &self.jumps {
            let r = j.rate.eval(x);
            if r != 0.0 {
                v += r * j.size * (1.0 - (-lam * j.size).exp());
            }
        }
        v
    }

    /// γ(x) = α(x) + ½ Σ_i r_i(x) u_i², the local variance weight.
    pub fn eval_gamma(&self, x: f64) -> f64 {
        let mut g = self.alpha.eval(x);
        for j in &self.jumps {
            g += 0.5 * j.rate.eval(x) * j.size * j.size;
        }
        g
    }

    /// Cell-averaged γ on a grid (the variance quadrature weight).
    pub fn gamma_field(&self, grid: Grid) -> GridFunction {
        let dx = grid.spacing();
        let mut g = self.alpha.field(grid);
        for j in &self.jumps {
            let half_u2 = 0.5 * j.size * j.size;
            for (i, x) in grid.nodes().enumerate() {
                g.values_mut()[i] += half_u2 * j.rate.cell_average(x, dx);
            }
        }
        g
    }

    /// Cell-averaged β on a grid (the solver potential).
    pub fn beta_field(&self, grid: Grid) -> GridFunction {
        self.beta.field(grid)
    }

    /// The skeleton's branch-rate/offspring generating data. With G(x,s) =
    /// (1/w)[ψ(x, w(1-s)) - (1-s)ψ(x,w)] = q(x) Σ_{k>=2} p_k(x)(s^k - s), the
    /// s-Taylor coefficients give q = Σ_{k>=2} g_k and p_k = g_k/q:
    /// the quadratic part contributes αw to g_2 and each jump atom contributes
    /// (r/w) e^{-wu} (wu)^k / k! to g_k.
    pub fn derive_offspring(&self, w: &GridFunction) -> Result<OffspringLaw, CoreError> {
        let grid = *w.grid();
        let n = grid.len();
        if w.values().iter().any(|&v| v <= 0.0) {
            return Err(CoreError::Domain("offspring derivation requires w > 0 on the grid".into()));
        }

        let mut q = vec![0.0; n];
        let mut coeffs: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut worst_defect = 0.0f64;

        for (i, x) in grid.nodes().enumerate() {
            let wv = w.values()[i];
            let mut g = [0.0f64; OFFSPRING_KMAX + 1];
            g[2] = self.alpha.eval(x) * wv;
            for j in &self.jumps {
                let r = j.rate.eval(x);
                if r == 0.0 {
                    continue;
                }
                let wu = wv * j.size;
                let scale = r / wv * (-wu).exp();
                let mut term = scale * wu * wu / 2.0;
                for (k, slot) in g.iter_mut().enumerate().take(OFFSPRING_KMAX + 1).skip(2) {
                    *slot += term;
                    term *= wu / (k + 1) as f64;
                }
            }
            for (k, &gk) in g.iter().enumerate().skip(2) {
                if gk < -1e-12 {
                    return Err(CoreError::MechanismInconsistency(format!(
                        "negative Taylor coefficient g_{k} = {gk} at x = {x}"
                    )));
                }
            }
            // Exact branch rate -g_1 from the generating function; the
            // truncated sum must recover it up to the allowed defect.
            let mut q_exact = self.alpha.eval(x) * wv;
            for j in &self.jumps {
                let r = j.rate.eval(x);
                if r != 0.0 {
                    let wu = wv * j.size;
                    q_exact += r / wv * (1.0 - (-wu).exp() * (1.0 + wu));
                }
            }
            let q_trunc: f64 = g[2..].iter().sum();
            if q_exact > 0.0 {
                let defect = (q_exact - q_trunc) / q_exact;
                worst_defect = worst_defect.max(defect);
                if defect > MASS_DEFECT_TOL {
                    return Err(CoreError::MechanismInconsistency(format!(
                        "offspring mass defect {defect:.3e} at x = {x} exceeds {MASS_DEFECT_TOL}"
                    )));
                }
            }
            q[i] = q_exact;
            for (k, &gk) in g.iter().enumerate().skip(2) {
                if gk > 0.0 {
                    coeffs.entry(k).or_insert_with(|| vec![0.0; n])[i] = gk / q_exact.max(f64::MIN_POSITIVE);
                }
            }
        }

        let p = coeffs
            .into_iter()
            .map(|(k, v)| (k, GridFunction::new(grid, v).expect("finite p_k")))
            .collect();
        Ok(OffspringLaw {
            q: GridFunction::new(grid, q).expect("finite q"),
            p,
            mass_defect: worst_defect,
        })
    }
}

/// Local offspring law of the skeleton: branch rate q(x) and offspring-count
/// probabilities p_k(x), k >= 2.
#[derive(Debug, Clone)]
pub struct OffspringLaw {
    q: GridFunction,
    p: BTreeMap<usize, GridFunction>,
    mass_defect: f64,
}

impl OffspringLaw {
    pub fn branch_rate(&self) -> &GridFunction {
        &self.q
    }

    pub fn probabilities(&self) -> &BTreeMap<usize, GridFunction> {
        &self.p
    }

    pub fn mass_defect(&self) -> f64 {
        self.mass_defect
    }

    pub fn max_rate(&self) -> f64 {
        self.q.values().iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// Branch rate at an off-node position (zero outside the grid, where the
    /// mechanism has no support).
    #[inline]
    pub fn rate_at(&self, x: f64) -> f64 {
        if !self.q.grid().contains(x) {
            return 0.0;
        }
        self.q.interpolate_unchecked(x).max(0.0)
    }

    /// Mean number of offspring minus one at x, Σ (k-1) p_k(x).
    pub fn mean_excess(&self, x: f64) -> f64 {
        self.p
            .iter()
            .map(|(k, pk)| (*k as f64 - 1.0) * pk.interpolate_unchecked(x))
            .sum()
    }

    /// Draws an offspring count at position x from the interpolated law.
    pub fn sample_count(&self, x: f64, u: f64) -> usize {
        if self.p.len() == 1 {
            return *self.p.keys().next().unwrap();
        }
        let mut weights: Vec<(usize, f64)> = self
            .p
            .iter()
            .map(|(k, pk)| (*k, pk.interpolate_unchecked(x).max(0.0)))
            .collect();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return 2;
        }
        let mut acc = 0.0;
        for (k, wgt) in &mut weights {
            acc += *wgt / total;
            if u <= acc {
                return *k;
            }
        }
        weights.last().map(|(k, _)| *k).unwrap_or(2)
    }
}

/// A test-only offspring law with q ≡ 0 (no branching); used to check that the
/// skeleton population stays frozen without branch events.
pub fn silent_offspring(grid: Grid) -> OffspringLaw {
    let mut p = BTreeMap::new();
    p.insert(2, GridFunction::constant(grid, 1.0));
    OffspringLaw { q: GridFunction::zeros(grid), p, mass_defect: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn box_profile(a: f64, b: f64) -> Profile {
        Profile::IndicatorBox { half_width: a, height: b }
    }

    fn square_well() -> BranchingMechanism {
        BranchingMechanism::quadratic(box_profile(1.0, 1.0), box_profile(1.0, 0.5)).unwrap()
    }

    #[test]
    fn psi_matches_direct_substitution() {
        let m = square_well();
        // -βλ + αλ² at x = 0, λ = 2: -2 + 2 = 0
        assert_eq!(m.eval_psi(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(m.eval_psi(0.0, 0.0).unwrap(), 0.0);
        // single atom u = 1, r = 1, β = α = 0 at λ = 1: e^{-1}
        let jump = BranchingMechanism::new(
            Profile::zero(),
            Profile::zero(),
            vec![JumpAtom::new(1.0, box_profile(1.0, 1.0)).unwrap()],
        )
        .unwrap();
        let v = jump.eval_psi(0.0, 1.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn psi_rejects_negative_lambda() {
        assert!(square_well().eval_psi(0.0, -0.1).is_err());
    }

    #[test]
    fn gamma_adds_half_second_moment_of_jumps() {
        let m = BranchingMechanism::new(
            box_profile(1.0, 1.0),
            box_profile(1.0, 0.5),
            vec![JumpAtom::new(1.0, box_profile(1.0, 1.0)).unwrap()],
        )
        .unwrap();
        assert!((m.eval_gamma(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(m.eval_gamma(5.0), 0.0);
        // no jumps: gamma = alpha pointwise
        let q = square_well();
        for x in [-0.9, 0.0, 0.3, 2.0] {
            assert_eq!(q.eval_gamma(x), q.alpha().eval(x));
        }
    }

    #[test]
    fn quadratic_mechanism_has_pure_binary_offspring() {
        let m = square_well();
        let grid = Grid::new(4.0, 401).unwrap();
        let w = grid.sample(|_| 2.0);
        let law = m.derive_offspring(&w).unwrap();
        // G(x,s) = αw(s² - s): q = αw, p_2 ≡ 1
        for (i, x) in grid.nodes().enumerate() {
            let expect = m.alpha().eval(x) * 2.0;
            assert!((law.branch_rate().values()[i] - expect).abs() < 1e-12);
            if expect > 0.0 {
                assert!((law.probabilities()[&2].values()[i] - 1.0).abs() < 1e-12);
            }
        }
        assert!(law.mass_defect() < 1e-15);
    }

    #[test]
    fn generating_function_vanishes_at_both_ends() {
        // G(x,0) = 0 and G(x,1) = 0 for the assembled q, p_k: evaluate
        // q Σ p_k (s^k - s) at s = 0 and s = 1.
        let m = BranchingMechanism::new(
            box_profile(1.0, 0.4),
            box_profile(1.0, 0.3),
            vec![JumpAtom::new(0.7, box_profile(1.5, 0.8)).unwrap()],
        )
        .unwrap();
        let grid = Grid::new(4.0, 201).unwrap();
        let w = grid.sample(|x| 1.5 + 0.1 * (x / 4.0).cos());
        let law = m.derive_offspring(&w).unwrap();
        for s in [0.0f64, 1.0] {
            for i in 0..grid.len() {
                let g: f64 = law
                    .probabilities()
                    .iter()
                    .map(|(k, p)| p.values()[i] * (s.powi(*k as i32) - s))
                    .sum::<f64>()
                    * law.branch_rate().values()[i];
                assert!(g.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn offspring_coefficients_match_finite_difference_taylor() {
        // Oracle: central finite differences (Richardson-extrapolated) of the
        // exact generating function G(x,s) in s at 0, at 20 grid points. G is
        // analytic in s, so negative s is legal in the stencils.
        let u = 0.8;
        let m = BranchingMechanism::new(
            box_profile(1.0, 0.2),
            box_profile(1.0, 0.25),
            vec![JumpAtom::new(u, box_profile(1.2, 0.9)).unwrap()],
        )
        .unwrap();
        let grid = Grid::new(3.0, 301).unwrap();
        let w = grid.sample(|x| 1.2 + 0.2 * (-x * x).exp());
        let law = m.derive_offspring(&w).unwrap();

        let g_of = |x: f64, s: f64| {
            let wv = w.interpolate(x).unwrap();
            (m.psi_unchecked(x, wv * (1.0 - s)) - (1.0 - s) * m.psi_unchecked(x, wv)) / wv
        };
        // O(h^4) central stencils for the first three derivatives at 0.
        let d1 = |x: f64, h: f64| {
            (-g_of(x, 2.0 * h) + 8.0 * g_of(x, h) - 8.0 * g_of(x, -h) + g_of(x, -2.0 * h))
                / (12.0 * h)
        };
        let d2 = |x: f64, h: f64| {
            (-g_of(x, 2.0 * h) + 16.0 * g_of(x, h) - 30.0 * g_of(x, 0.0) + 16.0 * g_of(x, -h)
                - g_of(x, -2.0 * h))
                / (12.0 * h * h)
        };
        let d3 = |x: f64, h: f64| {
            (g_of(x, 2.0 * h) - 2.0 * g_of(x, h) + 2.0 * g_of(x, -h) - g_of(x, -2.0 * h))
                / (2.0 * h * h * h)
        };
        let h = 0.05;
        for step in 0..20 {
            let x = -1.1 + 0.11 * step as f64;
            let q = law.branch_rate().interpolate(x).unwrap();
            let scale = q.max(1e-3);
            // g_1 = -q.
            assert!((d1(x, h) + q).abs() < 1e-6 * scale, "q mismatch at x={x}");
            let g2 = law.probabilities()[&2].interpolate(x).unwrap() * q;
            assert!((0.5 * d2(x, h) - g2).abs() < 1e-6 * scale, "g_2 mismatch at x={x}");
            let g3 = law
                .probabilities()
                .get(&3)
                .map(|p| p.interpolate(x).unwrap() * q)
                .unwrap_or(0.0);
            // The five-point third-derivative stencil is O(h²); one Richardson
            // halving lifts it to O(h⁴).
            let fd3 = (4.0 * d3(x, 0.5 * h) - d3(x, h)) / 3.0 / 6.0;
            assert!(
                (fd3 - g3).abs() < 1e-6 * scale,
                "g_3 mismatch at x={x}: fd {fd3} vs {g3}"
            );
        }
    }

    #[test]
    fn derive_offspring_rejects_nonpositive_w() {
        let grid = Grid::new(2.0, 101).unwrap();
        let w = grid.sample(|x| x); // crosses zero
        assert!(square_well().derive_offspring(&w).is_err());
    }

    #[test]
    fn psi0_is_nonnegative_and_matches_decomposition() {
        let m = BranchingMechanism::new(
            box_profile(1.0, -0.5),
            box_profile(1.0, 0.3),
            vec![JumpAtom::new(1.3, box_profile(0.8, 0.6)).unwrap()],
        )
        .unwrap();
        for x in [-0.9, -0.2, 0.0, 0.5, 1.4] {
            for lam in [0.0, 0.1, 1.0, 7.0] {
                let psi0 = m.psi0(x, lam);
                assert!(psi0 >= 0.0);
                let direct = m.eval_psi(x, lam).unwrap() + m.beta().eval(x) * lam;
                assert!((psi0 - direct).abs() < 1e-12 * (1.0 + psi0));
            }
        }
    }

    proptest! {
        #[test]
        fn offspring_probabilities_sum_to_one(u in 0.3f64..2.0, r in 0.1f64..1.5, a in 0.05f64..0.8) {
            let m = BranchingMechanism::new(
                box_profile(1.0, 0.5),
                box_profile(1.0, a),
                vec![JumpAtom::new(u, box_profile(1.0, r)).unwrap()],
            ).unwrap();
            let grid = Grid::new(3.0, 151).unwrap();
            let w = grid.sample(|_| 1.7);
            let law = m.derive_offspring(&w).unwrap();
            for i in 0..grid.len() {
                let q = law.branch_rate().values()[i];
                if q > 0.0 {
                    let total: f64 = law.probabilities().values().map(|p| p.values()[i]).sum();
                    prop_assert!((total - 1.0).abs() < 1e-10);
                    for p in law.probabilities().values() {
                        prop_assert!(p.values()[i] >= -1e-12);
                    }
                }
            }
        }

        #[test]
        fn psi_is_convex_in_lambda_for_nonpositive_beta(l1 in 0.0f64..3.0, l2 in 0.0f64..3.0) {
            let m = BranchingMechanism::new(
                box_profile(1.0, -0.7),
                box_profile(1.0, 0.4),
                vec![JumpAtom::new(0.9, box_profile(1.0, 0.5)).unwrap()],
            ).unwrap();
            let mid = 0.5 * (l1 + l2);
            let lhs = m.eval_psi(0.3, mid).unwrap();
            let rhs = 0.5 * (m.eval_psi(0.3, l1).unwrap() + m.eval_psi(0.3, l2).unwrap());
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}

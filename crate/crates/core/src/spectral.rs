//! Analytic layer for Gamma lifetimes with binary splitting.
//!
//! Everything here is a pure function of the lifetime law. The eigenvalues
//! are the roots of `Lg(ρ) = 1/2`, which for `Γ(k, θ)` are explicit:
//! `ρ_l = (2^{1/k} e^{2πil/k} - 1)/θ` for `l ∈ ⟦-⌈k/2⌉+1, ⌊k/2⌋⟧`.

use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quad::adaptive;
use crate::special::{gamma_q, ln_gamma, ln_gamma_q};
use crate::{Error, Result};

/// Tolerance on `|k - k_c|` under which a shape is classified critical.
pub const CRITICAL_TOLERANCE: f64 = 1e-9;

/// Lifetime law `Γ(k, θ)` with `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLifetime {
    k: f64,
    theta: f64,
}

impl GammaLifetime {
    pub fn new(k: f64, theta: f64) -> Result<Self> {
        if !(k >= 1.0) || !k.is_finite() {
            return Err(Error::domain("k", k));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::domain("theta", theta));
        }
        Ok(GammaLifetime { k, theta })
    }

    /// The law with shape `k` whose Malthusian rate is `alpha`.
    pub fn with_alpha(k: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::domain("alpha", alpha));
        }
        Self::new(k, libm::expm1(LN_2 / k) / alpha)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mean(&self) -> f64 {
        self.k * self.theta
    }

    pub fn sd(&self) -> f64 {
        self.k.sqrt() * self.theta
    }

    pub fn cv(&self) -> f64 {
        1.0 / self.k.sqrt()
    }

    /// `ln g(t)` for `t > 0`.
    pub fn ln_density(&self, t: f64) -> f64 {
        (self.k - 1.0) * t.ln() - t / self.theta - ln_gamma(self.k) - self.k * self.theta.ln()
    }

    /// Density `g(t) = t^{k-1} e^{-t/θ} / (Γ(k) θ^k)`.
    pub fn density(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::domain("t", t));
        }
        Ok(self.density_unchecked(t))
    }

    pub(crate) fn density_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return if self.k == 1.0 { 1.0 / self.theta } else { 0.0 };
        }
        self.ln_density(t).exp()
    }

    /// `1 - G(a)`.
    pub fn survival(&self, a: f64) -> Result<f64> {
        if !(a >= 0.0) {
            return Err(Error::domain("a", a));
        }
        Ok(gamma_q(self.k, a / self.theta))
    }

    /// `ln(1 - G(a))`, finite deep into the tail.
    pub fn ln_survival(&self, a: f64) -> f64 {
        ln_gamma_q(self.k, a.max(0.0) / self.theta)
    }

    /// `Lg(ρ) = (1 + ρθ)^{-k}` on the principal branch.
    pub fn laplace(&self, rho: Complex64) -> Result<Complex64> {
        let base = Complex64::new(1.0, 0.0) + rho * self.theta;
        if base.norm() == 0.0 {
            return Err(Error::Pole);
        }
        Ok(base.powf(-self.k))
    }

    /// Malthusian parameter `α = (2^{1/k} - 1)/θ`.
    pub fn malthusian_alpha(&self) -> f64 {
        libm::expm1(LN_2 / self.k) / self.theta
    }

    /// All roots of `Lg(ρ) = 1/2`, ordered by index `l`.
    pub fn eigenvalue_set(&self) -> Vec<Complex64> {
        mode_indices(self.k)
            .map(|l| (root_base(self.k, l) - 1.0) / self.theta)
            .collect()
    }

    /// `λ + iτ`, the root with the largest real part below `α` (`l = 1`).
    pub fn second_eigenvalue(&self) -> Result<Complex64> {
        if self.k < 2.0 {
            return Err(Error::NoSubdominantEigenvalue { k: self.k });
        }
        let c = 2f64.powf(1.0 / self.k);
        let phase = 2.0 * PI / self.k;
        // sin(π) is not exactly zero in floating point
        let tau = if self.k == 2.0 { 0.0 } else { c * phase.sin() / self.theta };
        Ok(Complex64::new((c * phase.cos() - 1.0) / self.theta, tau))
    }

    pub fn spectral_data(&self) -> SpectralData {
        let alpha = self.malthusian_alpha();
        let (lambda, tau) = match self.second_eigenvalue() {
            Ok(z) => (Some(z.re), Some(z.im)),
            Err(_) => (None, None),
        };
        SpectralData {
            alpha,
            lambda,
            tau,
            regime: classify_regime_unchecked(self.k),
        }
    }

    /// Closed-form mean approximation for this law.
    pub fn mean_approx(&self) -> MeanApprox {
        MeanApprox::new(self)
    }

    /// Exact renewal mean, including the branch-cut term for non-integer `k`.
    pub fn renewal_mean(&self) -> Result<RenewalMean> {
        RenewalMean::new(self)
    }

    /// Stationary age density `p(a) = 2α e^{-αa} (1 - G(a))`.
    pub fn stationary_age_density(&self, a: f64) -> Result<f64> {
        if !(a >= 0.0) {
            return Err(Error::domain("a", a));
        }
        let alpha = self.malthusian_alpha();
        Ok(2.0 * alpha * (-alpha * a + self.ln_survival(a)).exp())
    }
}

/// Spectral summary of a law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub alpha: f64,
    /// Absent for `k < 2`, where `α` is the only root.
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub regime: Regime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Gaussian,
    Critical,
    Oscillating,
}

fn mode_indices(k: f64) -> impl Iterator<Item = i64> {
    let lo = -((k / 2.0).ceil() as i64) + 1;
    let hi = (k / 2.0).floor() as i64;
    lo..=hi
}

/// `2^{1/k} e^{2πil/k}`.
fn root_base(k: f64, l: i64) -> Complex64 {
    Complex64::from_polar(2f64.powf(1.0 / k), 2.0 * PI * l as f64 / k)
}

fn threshold_gap(k: f64) -> f64 {
    (2.0 * PI / k).cos() - 0.5 * (2f64.powf(-1.0 / k) + 1.0)
}

/// The shape `k_c ≈ 57.24` separating the Gaussian and oscillating regimes.
pub fn critical_shape() -> f64 {
    let (mut lo, mut hi) = (10.0_f64, 100.0_f64);
    debug_assert!(threshold_gap(lo) < 0.0 && threshold_gap(hi) > 0.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if threshold_gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn classify_regime(k: f64) -> Result<Regime> {
    if !(k >= 1.0) {
        return Err(Error::domain("k", k));
    }
    Ok(classify_regime_unchecked(k))
}

fn classify_regime_unchecked(k: f64) -> Regime {
    let kc = critical_shape();
    if (k - kc).abs() <= CRITICAL_TOLERANCE {
        Regime::Critical
    } else if k < kc {
        Regime::Gaussian
    } else {
        Regime::Oscillating
    }
}

/// `q(cv) = lim Var(N_t)/E[N_t]^2` as a function of the lifetime CV.
pub fn var_ratio_q(cv: f64) -> Result<f64> {
    if !(cv > 0.0) {
        return Err(Error::domain("cv", cv));
    }
    let x2 = cv * cv;
    let b = ((x2 + 1.0).exp2() - 1.0).powf(-1.0 / x2);
    Ok((4.0 * b - 1.0) / (1.0 - 2.0 * b))
}

/// One exponential mode `coef · e^{rate·t}` of the mean approximation.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    /// Root index `l`; `l = 0` is the Malthusian mode.
    pub index: i64,
    pub coef: Complex64,
    pub rate: Complex64,
}

/// `Ē[N_t] = Σ_l z_l / (2k (z_l - 1)) · exp((z_l - 1) t / θ)`, exact for
/// integer `k` and accurate up to `O(e^{ϑt})`, `ϑ < 0`, otherwise.
#[derive(Debug, Clone)]
pub struct MeanApprox {
    alpha: f64,
    modes: Vec<Mode>,
}

const IMAG_TOLERANCE: f64 = 1e-9;

impl MeanApprox {
    pub fn new(law: &GammaLifetime) -> Self {
        let k = law.k();
        let modes = mode_indices(k)
            .map(|l| {
                let z = root_base(k, l);
                Mode {
                    index: l,
                    coef: z / ((z - 1.0) * (2.0 * k)),
                    rate: (z - 1.0) / law.theta(),
                }
            })
            .collect();
        MeanApprox {
            alpha: law.malthusian_alpha(),
            modes,
        }
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn sum(&self, t: f64) -> Complex64 {
        self.modes
            .iter()
            .map(|m| m.coef * (m.rate * t).exp())
            .sum()
    }

    /// Evaluate, failing if the imaginary residue is not negligible.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::domain("t", t));
        }
        let s = self.sum(t);
        if s.im.abs() > IMAG_TOLERANCE * s.re.abs().max(1.0) {
            return Err(Error::NumericConsistency(alloc::format!(
                "mean approximation imaginary residue {} at t = {t}",
                s.im
            )));
        }
        Ok(s.re)
    }

    /// Real part of the sum, without the residue check.
    pub fn value(&self, t: f64) -> f64 {
        self.sum(t).re
    }

    /// `h^{(δ)}(y) = Ē[N_{y+δ}] - e^{αδ} Ē[N_y]` for `y ≥ 0`, zero for `y < 0`.
    ///
    /// The `α` mode cancels exactly, so it is left out of the sum.
    pub fn h_delta(&self, y: f64, delta: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        let growth = (self.alpha * delta).exp();
        self.modes
            .iter()
            .filter(|m| m.index != 0)
            .map(|m| m.coef * ((m.rate * delta).exp() - growth) * (m.rate * y).exp())
            .sum::<Complex64>()
            .re
    }
}

/// Free-function forms mirroring the per-law methods.
pub fn mean_approx(law: &GammaLifetime, t: f64) -> Result<f64> {
    MeanApprox::new(law).eval(t)
}

pub fn h_delta(law: &GammaLifetime, y: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::domain("delta", delta));
    }
    Ok(MeanApprox::new(law).h_delta(y, delta))
}

/// Exact renewal mean `Ē[N_t]`: the eigenvalue sum plus, for non-integer `k`,
/// the contribution of the branch cut of `(1 + θs)^{-k}` along
/// `s < -1/θ`,
///
/// `c(t) = (1/2π) ∫_0^∞ Im[q/(q - 2)] e^{-(1+u)t/θ} / (1 + u) du`,
/// `q = u^k e^{iπk}`.
///
/// The cut term decays like `e^{-t/θ}` and is tabulated up to where it falls
/// below `1e-17`. Without it the mean jumps whenever `k` crosses an even
/// integer and a root pair enters the principal branch.
#[derive(Debug, Clone)]
pub struct RenewalMean {
    approx: MeanApprox,
    cut: Option<CutTable>,
}

#[derive(Debug, Clone)]
struct CutTable {
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

const CUT_STEPS_PER_THETA: f64 = 64.0;
const CUT_SPAN_THETAS: f64 = 40.0;

impl CutTable {
    fn new(k: f64, theta: f64) -> Result<Self> {
        let step = theta / CUT_STEPS_PER_THETA;
        let n = (CUT_SPAN_THETAS * CUT_STEPS_PER_THETA) as usize + 1;
        let mut values = (0..n).map(|i| cut_integral(k, theta, i as f64 * step)).collect::<Result<Vec<_>>>()?;
        values.push(0.0);
        // slopes in units of the step, by finite differences
        let last = values.len() - 1;
        let slopes = (0..=last)
            .map(|i| match i {
                0 => -1.5 * values[0] + 2.0 * values[1] - 0.5 * values[2],
                i if i == last => 0.0,
                i => 0.5 * (values[i + 1] - values[i - 1]),
            })
            .collect();
        Ok(CutTable { step, values, slopes })
    }

    /// Value and derivative.
    fn eval(&self, t: f64) -> (f64, f64) {
        let s = t / self.step;
        if s >= (self.values.len() - 1) as f64 {
            return (0.0, 0.0);
        }
        let i = s as usize;
        let x = s - i as f64;
        let (p0, p1, m0, m1) = (self.values[i], self.values[i + 1], self.slopes[i], self.slopes[i + 1]);
        let (x2, x3) = (x * x, x * x * x);
        let v = (2.0 * x3 - 3.0 * x2 + 1.0) * p0 + (x3 - 2.0 * x2 + x) * m0 + (3.0 * x2 - 2.0 * x3) * p1 + (x3 - x2) * m1;
        let d = (6.0 * x2 - 6.0 * x) * p0 + (3.0 * x2 - 4.0 * x + 1.0) * m0 + (6.0 * x - 6.0 * x2) * p1 + (3.0 * x2 - 2.0 * x) * m1;
        (v, d / self.step)
    }
}

/// `c(t)` by adaptive quadrature, split at the near-pole `u = 2^{1/k}`.
fn cut_integral(k: f64, theta: f64, t: f64) -> Result<f64> {
    let phase = Complex64::from_polar(1.0, PI * k);
    let f = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let q = phase * (k * u.ln()).exp();
        (q / (q - 2.0)).im * (-(1.0 + u) * t / theta).exp() / (1.0 + u)
    };
    let u0 = 2f64.powf(1.0 / k);
    let tail = |v: f64| if v <= 0.0 { 0.0 } else { f(2.0 * u0 / v) * 2.0 * u0 / (v * v) };
    let total = adaptive(f, 0.0, u0, 1e-11, 1e-17)? + adaptive(f, u0, 2.0 * u0, 1e-11, 1e-17)?
        + adaptive(tail, 0.0, 1.0, 1e-11, 1e-17)?;
    Ok(total / (2.0 * PI))
}

impl RenewalMean {
    pub fn new(law: &GammaLifetime) -> Result<Self> {
        let k = law.k();
        let cut = if (k - k.round()).abs() < 1e-12 { None } else { Some(CutTable::new(k, law.theta())?) };
        Ok(RenewalMean { approx: law.mean_approx(), cut })
    }

    pub fn approx(&self) -> &MeanApprox {
        &self.approx
    }

    /// Branch-cut term and its derivative; zero for integer `k`.
    pub fn cut(&self, t: f64) -> (f64, f64) {
        match &self.cut {
            Some(c) if t >= 0.0 => c.eval(t),
            _ => (0.0, 0.0),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.approx.value(t) + self.cut(t).0
    }

    pub fn h_delta(&self, y: f64, delta: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        let growth = (self.approx.alpha() * delta).exp();
        self.approx.h_delta(y, delta) + self.cut(y + delta).0 - growth * self.cut(y).0
    }
}

/// `δ = c · ln 2 / α`.
pub fn doubling_delta(alpha: f64, factor: f64) -> f64 {
    factor * LN_2 / alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn renewal_mean_starts_at_one() {
        for k in [1.5, 2.1, 2.5, 3.3, 7.9, 35.5, 56.1] {
            let m = GammaLifetime::new(k, 0.8).unwrap().renewal_mean().unwrap();
            assert!((m.value(0.0) - 1.0).abs() < 1e-9, "k={k}: {}", m.value(0.0));
        }
        let m = GammaLifetime::new(4.0, 1.0).unwrap().renewal_mean().unwrap();
        assert_eq!(m.cut(0.3), (0.0, 0.0));
    }

    #[test]
    fn renewal_mean_matches_direct_quadrature() {
        // mpmath reference values of Ē[N_t] at θ = 1
        for (k, t, want) in [(1.5, 0.5, 1.2298908771029804), (2.1, 2.0, 1.852611278951949), (3.3, 0.5, 1.0078515119354152)] {
            let m = GammaLifetime::new(k, 1.0).unwrap().renewal_mean().unwrap();
            assert!((m.value(t) - want).abs() < 1e-8, "k={k} t={t}: {}", m.value(t));
        }
    }

    #[test]
    fn renewal_mean_is_continuous_across_even_shapes() {
        // the plain eigenvalue sum jumps at k = 2, the renewal mean does not
        let at = |k: f64| GammaLifetime::new(k, 1.0).unwrap().renewal_mean().unwrap().value(1.0);
        let (lo, mid, hi) = (at(2.0 - 1e-4), at(2.0), at(2.0 + 1e-4));
        assert!((lo - mid).abs() < 1e-4 && (hi - mid).abs() < 1e-4, "{lo} {mid} {hi}");
        let approx = |k: f64| mean_approx(&GammaLifetime::new(k, 1.0).unwrap(), 1.0).unwrap();
        assert!((approx(2.0 - 1e-4) - approx(2.0 + 1e-4)).abs() > 1e-2);
    }

    fn law(k: f64, theta: f64) -> GammaLifetime {
        GammaLifetime::new(k, theta).unwrap()
    }

    #[test]
    fn rejects_invalid_laws() {
        assert!(GammaLifetime::new(0.5, 1.0).is_err());
        assert!(GammaLifetime::new(2.0, 0.0).is_err());
        assert!(GammaLifetime::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn density_examples() {
        assert_relative_eq!(law(1.0, 1.0).density(0.0).unwrap(), 1.0);
        assert_relative_eq!(law(1.0, 1.0).density(LN_2).unwrap(), 0.5, epsilon = 1e-15);
        let g = law(2.0, 1.0);
        assert_relative_eq!(g.density(1.0).unwrap(), (-1f64).exp(), epsilon = 1e-15);
        assert!(g.density(-1.0).is_err());
        // the density is the derivative of the CDF
        let h = 1e-5;
        let fd = (g.survival(1.0 - h).unwrap() - g.survival(1.0 + h).unwrap()) / (2.0 * h);
        assert_relative_eq!(fd, 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn density_integrates_to_one() {
        for &(k, th) in &[(1.0, 1.0), (2.5, 0.7), (35.0, 1.0)] {
            let g = law(k, th);
            let v = adaptive(|t| g.density_unchecked(t), 0.0, k * th * 10.0 + 50.0 * th, 1e-12, 0.0)
                .unwrap();
            assert_relative_eq!(v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn survival_examples() {
        assert_eq!(law(7.0, 2.0).survival(0.0).unwrap(), 1.0);
        assert_relative_eq!(law(1.0, 1.0).survival(LN_2).unwrap(), 0.5, epsilon = 1e-14);
        let g = law(2.0, 1.0);
        assert_relative_eq!(g.survival(1.0).unwrap(), 2.0 * (-1f64).exp(), epsilon = 1e-14);
        // 1 - ∫_0^1 g
        let q = 1.0 - adaptive(|t| g.density_unchecked(t), 0.0, 1.0, 1e-13, 0.0).unwrap();
        assert_relative_eq!(g.survival(1.0).unwrap(), q, epsilon = 1e-12);
        assert!(g.survival(-0.1).is_err());
    }

    #[test]
    fn laplace_examples() {
        let one = Complex64::new(1.0, 0.0);
        assert_relative_eq!(law(1.0, 1.0).laplace(one).unwrap().re, 0.5, epsilon = 1e-15);
        let g35 = law(35.0, 1.0);
        let a = Complex64::new(g35.malthusian_alpha(), 0.0);
        assert!((g35.laplace(a).unwrap() - 0.5).norm() < 1e-12);
        let v = law(2.0, 1.0).laplace(Complex64::new(0.0, 1.0)).unwrap();
        assert!((v - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        // numeric Laplace integral ∫ e^{-it} t e^{-t} dt
        let g = law(2.0, 1.0);
        let re = adaptive(|t| t.cos() * g.density_unchecked(t), 0.0, 60.0, 1e-12, 1e-14).unwrap();
        let im = adaptive(|t| -t.sin() * g.density_unchecked(t), 0.0, 60.0, 1e-12, 1e-14).unwrap();
        assert!((Complex64::new(re, im) - v).norm() < 1e-10);
        assert_eq!(law(3.0, 2.0).laplace(Complex64::new(-0.5, 0.0)), Err(Error::Pole));
    }

    #[test]
    fn alpha_examples() {
        assert_relative_eq!(law(1.0, 1.0).malthusian_alpha(), 1.0);
        // 2^{1/35} - 1 = e^{ln2/35} - 1 evaluated with expm1
        let a35 = libm::expm1(LN_2 / 35.0);
        assert_relative_eq!(law(35.0, 1.0).malthusian_alpha(), a35, max_relative = 1e-13);
        assert!((a35 - 0.0200018).abs() < 5e-7);
        let a70 = libm::expm1(LN_2 / 70.0);
        assert!((law(70.0, 1.0).malthusian_alpha() - 0.0099508).abs() < 5e-7);
        assert_relative_eq!(law(70.0, 1.0).malthusian_alpha(), a70, max_relative = 1e-12);
    }

    #[test]
    fn second_eigenvalue_examples() {
        let z = law(70.0, 1.0).second_eigenvalue().unwrap();
        assert!((z.re - 0.0058853).abs() < 5e-7);
        assert!((z.im - 0.0905313).abs() < 5e-7);
        assert!((law(70.0, 1.0).laplace(z).unwrap() - 0.5).norm() < 1e-10);
        let z2 = law(2.0, 1.0).second_eigenvalue().unwrap();
        assert_relative_eq!(z2.re, -(2f64.sqrt() + 1.0), epsilon = 1e-14);
        assert_eq!(z2.im, 0.0);
        let z4 = law(4.0, 1.0).second_eigenvalue().unwrap();
        assert!((z4.re + 1.0).abs() < 1e-14);
        assert_relative_eq!(z4.im, 2f64.powf(0.25), epsilon = 1e-14);
        assert!(matches!(
            law(1.5, 1.0).second_eigenvalue(),
            Err(Error::NoSubdominantEigenvalue { .. })
        ));
    }

    #[test]
    fn eigenvalue_set_examples() {
        let s1 = law(1.0, 1.0).eigenvalue_set();
        assert_eq!(s1.len(), 1);
        assert_relative_eq!(s1[0].re, 1.0);
        let s2 = law(2.0, 1.0).eigenvalue_set();
        assert_eq!(s2.len(), 2);
        assert_relative_eq!(s2[0].re, 2f64.sqrt() - 1.0, epsilon = 1e-14);
        assert_relative_eq!(s2[1].re, -2f64.sqrt() - 1.0, epsilon = 1e-14);
        let s4 = law(4.0, 1.0).eigenvalue_set();
        assert_eq!(s4.len(), 4);
        let max = s4.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert_relative_eq!(max, 2f64.powf(0.25) - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn critical_shape_values() {
        let kc = critical_shape();
        assert!((kc - 57.24).abs() < 0.01, "{kc}");
        assert!((1.0 / kc.sqrt() - 0.1322).abs() < 0.0005);
        let f = |k: f64| 2.0 * (2.0 * PI / k).cos() - 2f64.powf(-1.0 / k) - 1.0;
        assert!(f(50.0) < 0.0 && 0.0 < f(70.0));
    }

    #[test]
    fn regime_examples() {
        assert_eq!(classify_regime(35.0).unwrap(), Regime::Gaussian);
        assert_eq!(classify_regime(70.0).unwrap(), Regime::Oscillating);
        assert_eq!(classify_regime(critical_shape()).unwrap(), Regime::Critical);
        assert!(classify_regime(0.9).is_err());
    }

    #[test]
    fn regime_matches_spectral_gap_sweep() {
        let kc = critical_shape();
        let mut k = 2.0;
        while k <= 100.0 {
            if (k - kc).abs() >= 0.01 {
                let sd = law(k, 1.0).spectral_data();
                let gaussian = sd.lambda.unwrap() < sd.alpha / 2.0;
                assert_eq!(gaussian, sd.regime == Regime::Gaussian, "k = {k}");
            }
            k += 0.5;
        }
    }

    #[test]
    fn mean_approx_examples() {
        let m = law(1.0, 1.0).mean_approx();
        for i in 0..=100 {
            let t = i as f64 * 0.1;
            assert_relative_eq!(m.eval(t).unwrap(), t.exp(), max_relative = 1e-12);
        }
        for k in 1..=10 {
            let v = law(k as f64, 1.3).mean_approx().eval(0.0).unwrap();
            assert!((v - 1.0).abs() < 1e-9, "k={k}: {v}");
        }
        assert!(law(3.0, 1.0).mean_approx().eval(-1.0).is_err());
    }

    /// Renewal equation `m(t) = 1 - G(t) + 2∫_0^t m(t-s) g(s) ds` solved on a
    /// fine grid by the trapezoid rule on the CDF increments.
    fn renewal_mean(g: &GammaLifetime, horizon: f64, n: usize) -> Vec<f64> {
        let h = horizon / n as f64;
        let cdf: Vec<f64> = (0..=n).map(|i| 1.0 - g.survival(i as f64 * h).unwrap()).collect();
        let mut m = alloc::vec![1.0; n + 1];
        for i in 1..=n {
            let mut s = 0.5 * m[i - 1] * (cdf[1] - cdf[0]);
            for j in 2..=i {
                s += 0.5 * (m[i - j] + m[i - j + 1]) * (cdf[j] - cdf[j - 1]);
            }
            m[i] = (1.0 - cdf[i] + 2.0 * s) / (1.0 - (cdf[1] - cdf[0]));
        }
        m
    }

    #[test]
    fn mean_approx_matches_renewal_equation() {
        for &k in &[3.0, 18.75] {
            let g = GammaLifetime::with_alpha(k, 1.0).unwrap();
            let n = 1500;
            let horizon = 3.0 * LN_2;
            let m = renewal_mean(&g, horizon, n);
            let approx = g.mean_approx();
            for i in (n / 3..=n).step_by(100) {
                let t = i as f64 * horizon / n as f64;
                assert_relative_eq!(approx.value(t), m[i], max_relative = 2e-3);
            }
        }
    }

    #[test]
    fn h_delta_examples() {
        let g1 = law(1.0, 1.0);
        assert_eq!(h_delta(&g1, -1.0, 1.0).unwrap(), 0.0);
        assert!(h_delta(&g1, 3.0, 1.0).unwrap().abs() < 1e-12);
        let g = law(35.0, 1.0);
        let alpha = g.malthusian_alpha();
        let delta = LN_2 / alpha;
        let m = g.mean_approx();
        let h0 = m.h_delta(0.0, delta).abs();
        assert!(h0 < (m.value(delta) - (alpha * delta).exp()).abs() + 1e-12);
        // the envelope grows like e^{λy}, slower than the mean
        let lam = g.second_eigenvalue().unwrap().re;
        let env = |y: f64| (0..50).map(|i| m.h_delta(y + i as f64, delta).abs()).fold(0.0, f64::max);
        let (e1, e2) = (env(100.0), env(600.0));
        assert!(((e2 / e1).ln() / 500.0 - lam).abs() < 2e-3);
        assert!(lam < alpha);
    }

    #[test]
    fn stationary_age_density_examples() {
        let g = law(1.0, 1.0);
        for &a in &[0.0, 0.5, 3.0] {
            assert_relative_eq!(g.stationary_age_density(a).unwrap(), 2.0 * (-2.0 * a).exp(), max_relative = 1e-12);
        }
        for &(k, th) in &[(1.0, 1.0), (7.5, 0.3), (35.0, 1.0), (57.0, 0.02)] {
            let g = law(k, th);
            let alpha = g.malthusian_alpha();
            assert_relative_eq!(g.stationary_age_density(0.0).unwrap(), 2.0 * alpha, max_relative = 1e-14);
            let upper = 40.0 / alpha;
            let v = adaptive(|a| g.stationary_age_density(a).unwrap(), 0.0, upper, 1e-10, 0.0).unwrap();
            assert!((v - 1.0).abs() < 1e-6, "k={k}: {v}");
        }
        assert!(g.stationary_age_density(-1.0).is_err());
    }

    #[test]
    fn var_ratio_examples() {
        assert_relative_eq!(var_ratio_q(1.0).unwrap(), 1.0, epsilon = 1e-14);
        let q = var_ratio_q(1.0 / 35f64.sqrt()).unwrap();
        assert!(q > 0.0 && q < 1.0);
        assert!(var_ratio_q(0.05).unwrap() < var_ratio_q(0.1).unwrap());
        assert!(var_ratio_q(0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn alpha_solves_characteristic_equation(k in 1.0f64..400.0, theta in 0.01f64..10.0) {
                let g = law(k, theta);
                let a = Complex64::new(g.malthusian_alpha(), 0.0);
                prop_assert!((g.laplace(a).unwrap() - 0.5).norm() < 1e-12);
            }

            #[test]
            fn eigenvalues_are_roots(k in 1.0f64..200.0, theta in 0.05f64..5.0) {
                let g = law(k, theta);
                let alpha = g.malthusian_alpha();
                for rho in g.eigenvalue_set() {
                    prop_assert!((g.laplace(rho).unwrap() - 0.5).norm() < 1e-10);
                    let is_alpha = (rho.re - alpha).abs() < 1e-14 && rho.im.abs() < 1e-14;
                    prop_assert!(rho.re < alpha || is_alpha);
                }
            }

            #[test]
            fn laplace_conjugate_symmetry(re in -0.5f64..10.0, im in -10.0f64..10.0, k in 1.0f64..60.0) {
                let g = law(k, 1.0);
                let rho = Complex64::new(re, im);
                let a = g.laplace(rho.conj()).unwrap();
                let b = g.laplace(rho).unwrap().conj();
                prop_assert!((a - b).norm() <= 1e-14 * b.norm().max(1e-300));
            }

            #[test]
            fn survival_monotone(k in 1.0f64..100.0, a in 0.0f64..200.0, d in 0.0f64..5.0) {
                let g = law(k, 1.0);
                let s1 = g.survival(a).unwrap();
                let s2 = g.survival(a + d).unwrap();
                prop_assert!(s2 <= s1 + 1e-15 && s1 <= 1.0);
            }
        }
    }
}

//! Limiting variance `σ_δ² = σ_X² + 2α σ_Y²` of the normalized residual
//! `R_t^δ / √N_t` in the Gaussian regime, and the k-grid built from it.
//!
//! `σ_X² = ∫ Var_a(N_δ) p(a) da` is estimated by Monte Carlo at Gauss-Legendre
//! age nodes. `σ_Y² = ∫ Var_ζ φ(x, ζ) e^{-αx} dx` uses composite
//! Gauss-Legendre panels in `x`, Monte-Carlo draws of `ζ ~ Γ(k, θ)`, the
//! integral equation for `E_x[N_δ]` and a tabulated `h^{(δ)}`.
//!
//! The `x` integral is truncated at a horizon `X/α` (default `X = 7`,
//! roughly where counts capped at a few thousand cells are observed). The
//! untruncated integral grows without bound as `k → k_c`, while residuals
//! measured at finite times only see ages up to the observation time.
//!
//! Random streams are keyed by node and sample index only, never by `k`, so
//! neighbouring grid nodes share their random numbers and the grid is smooth
//! in `k`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::quad::{adaptive, composite, GaussLegendre};
use crate::rng::stream;
use crate::sampling::GammaSampler;
use crate::sim::{count_after, Welford};
use crate::spectral::{critical_shape, GammaLifetime, RenewalMean};
use crate::{Error, Result};

/// Mass of `p` left out of the age integral.
pub const TAIL_MASS: f64 = 1e-8;
/// Default `x` horizon in units of `1/α`.
pub const DEFAULT_X_HORIZON: f64 = 7.0;
pub const QUADRATURE_DESC: &str = "age: Gauss-Legendre on [0,a_max], p-tail<1e-8; \
x: composite Gauss-Legendre 8/6 on [0,x_horizon/alpha]; \
E_x[N_delta]: adaptive GK15 rel 1e-8";

const TAG_X: u64 = 0x5849;
const TAG_Y: u64 = 0x5959;
const Y_BATCHES: usize = 16;
const RESIDUAL_TABLE: usize = 4096;

/// Monte-Carlo budgets of one grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBudgets {
    pub mc_per_node: usize,
    pub mc_zeta: usize,
    pub age_nodes: usize,
    /// Upper end of the `x` integral in units of `1/α`.
    pub x_horizon: f64,
}

impl Default for GridBudgets {
    fn default() -> Self {
        GridBudgets {
            mc_per_node: 100_000,
            mc_zeta: 100_000,
            age_nodes: 64,
            x_horizon: DEFAULT_X_HORIZON,
        }
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// `E_a[N_δ]` from the renewal integral equation with the exact renewal mean
/// inside.
pub fn cond_mean_age(law: &GammaLifetime, a: f64, delta: f64) -> Result<f64> {
    cond_mean_age_with(law, &law.renewal_mean()?, a, delta)
}

fn cond_mean_age_with(law: &GammaLifetime, mean: &RenewalMean, a: f64, delta: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::domain("age", a));
    }
    if !(delta > 0.0) {
        return Err(Error::domain("delta", delta));
    }
    let ln_s = law.ln_survival(a);
    if ln_s <= -700.0 {
        return Err(Error::UnsupportedAge { age: a });
    }
    let stay = (law.ln_survival(a + delta) - ln_s).exp();
    let hazard = |s: f64| {
        let t = a + s;
        if t <= 0.0 {
            return law.density_unchecked(0.0);
        }
        (law.ln_density(t) - ln_s).exp()
    };
    // split at the conditional density peak so the adaptive rule sees it
    let mode = ((law.k() - 1.0) * law.theta() - a).clamp(0.0, delta);
    let f = |s: f64| 2.0 * mean.value(delta - s) * hazard(s);
    let mut total = stay;
    for (lo, hi) in [(0.0, mode), (mode, delta)] {
        if hi > lo {
            total += adaptive(f, lo, hi, 1e-8, 1e-14)?;
        }
    }
    Ok(total)
}

/// Integration limit `A` with `2 (1 - G(A)) e^{-αA} = TAIL_MASS`, which bounds
/// the `p`-mass beyond `A`.
pub fn age_cutoff(law: &GammaLifetime) -> f64 {
    let alpha = law.malthusian_alpha();
    let f = |a: f64| LN_2 + law.ln_survival(a) - alpha * a - TAIL_MASS.ln();
    let (mut lo, mut hi) = (0.0, law.mean() + law.sd());
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

/// Inverse CDF of the residual lifetime at age `a`, restricted to `[0, δ]`
/// and tabulated on a uniform grid (piecewise-linear CDF).
struct ResidualTable {
    cdf: Vec<f64>,
    step: f64,
}

impl ResidualTable {
    fn new(law: &GammaLifetime, a: f64, horizon: f64) -> Result<Self> {
        let ln_s = law.ln_survival(a);
        if ln_s <= -700.0 {
            return Err(Error::UnsupportedAge { age: a });
        }
        let step = horizon / RESIDUAL_TABLE as f64;
        let cdf = (0..=RESIDUAL_TABLE)
            .map(|i| -libm::expm1(law.ln_survival(a + i as f64 * step) - ln_s))
            .collect();
        Ok(ResidualTable { cdf, step })
    }

    fn division_probability(&self) -> f64 {
        self.cdf[RESIDUAL_TABLE]
    }

    /// First division time if it falls within the horizon.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        let u: f64 = rng.random();
        if u >= self.division_probability() {
            return None;
        }
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, RESIDUAL_TABLE) - 1;
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        Some((i as f64 + frac) * self.step)
    }
}

/// `σ_X² = ∫ Var_a(N_δ) p(a) da`.
pub fn sigma_x(law: &GammaLifetime, delta: f64, mc_per_node: usize, age_nodes: usize, seed: u64) -> Result<Estimate> {
    if mc_per_node < 4 || age_nodes == 0 {
        return Err(Error::InvalidConfig("sigma_x needs ≥ 4 samples and ≥ 1 age node".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::domain("delta", delta));
    }
    let a_max = age_cutoff(law);
    let sampler = GammaSampler::new(law);
    let rule = GaussLegendre::new(age_nodes);
    let mut stack = Vec::new();
    let (mut value, mut var) = (0.0, 0.0);
    for (i, (a, w)) in rule.mapped(0.0, a_max).enumerate() {
        let table = ResidualTable::new(law, a, delta)?;
        let mut acc = Welford::default();
        for j in 0..mc_per_node {
            let mut rng = stream(seed, &[TAG_X, i as u64, j as u64]);
            let first = table.sample(&mut rng);
            acc.push(count_after(&mut rng, &sampler, first, delta, &mut stack) as f64);
        }
        let weight = w * law.stationary_age_density(a)?;
        value += weight * acc.variance();
        var += (weight * acc.variance_se()).powi(2);
    }
    Ok(Estimate { value, se: var.sqrt() })
}

/// `h^{(δ)}` on a uniform grid with cubic Hermite interpolation.
struct HTable {
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HTable {
    fn new(renewal: &RenewalMean, delta: f64, y_max: f64, step: f64) -> Self {
        let mean = renewal.approx();
        let growth = (mean.alpha() * delta).exp();
        // conjugate pairs (l, -l) collapse to twice the real part of l > 0
        let has = |l: i64| mean.modes().iter().any(|m| m.index == l);
        let terms: Vec<(Complex64, Complex64)> = mean
            .modes()
            .iter()
            .filter(|m| m.index > 0 || (m.index < 0 && !has(-m.index)))
            .map(|m| {
                let pair = if has(-m.index) { 2.0 } else { 1.0 };
                (m.coef * ((m.rate * delta).exp() - growth) * pair, m.rate)
            })
            .collect();
        let n = (y_max / step).ceil() as usize + 2;
        let mut values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        for i in 0..n {
            let y = i as f64 * step;
            let (mut v, mut d) = (0.0, 0.0);
            for &(c, r) in &terms {
                let e = c * (r * y).exp();
                v += e.re;
                d += (e * r).re;
            }
            let ((c1, d1), (c0, d0)) = (renewal.cut(y + delta), renewal.cut(y));
            v += c1 - growth * c0;
            d += d1 - growth * d0;
            values.push(v);
            slopes.push(d * step);
        }
        HTable { step, values, slopes }
    }

    #[inline]
    fn eval(&self, y: f64) -> f64 {
        let s = y / self.step;
        let i = (s as usize).min(self.values.len() - 2);
        let t = s - i as f64;
        let (p0, p1, m0, m1) = (self.values[i], self.values[i + 1], self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (3.0 * t2 - 2.0 * t3) * p1 + (t3 - t2) * m1
    }
}

fn x_nodes(law: &GammaLifetime, x_max: f64) -> Vec<(f64, f64)> {
    let alpha = law.malthusian_alpha();
    let tau = law.second_eigenvalue().map(|z| z.im.abs()).unwrap_or(0.0);
    let body_end = (law.mean() + 10.0 * law.sd()).min(x_max);
    let mut body_w = 0.5 * law.sd();
    let mut tail_w = 0.5 / alpha;
    if tau > 0.0 {
        body_w = body_w.min(PI / (4.0 * tau));
        tail_w = tail_w.min(PI / (2.0 * tau));
    }
    let breaks = |lo: f64, hi: f64, w: f64| {
        let n = ((hi - lo) / w).ceil().max(1.0) as usize;
        (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect::<Vec<_>>()
    };
    let mut nodes = composite(&GaussLegendre::new(8), &breaks(0.0, body_end, body_w));
    if x_max > body_end {
        nodes.extend(composite(&GaussLegendre::new(6), &breaks(body_end, x_max, tail_w)));
    }
    nodes
}

/// `σ_Y² = ∫ Var_ζ φ(x, ζ) e^{-αx} dx` with standard error from batch means.
pub fn sigma_y(law: &GammaLifetime, delta: f64, mc_zeta: usize, x_horizon: f64, seed: u64) -> Result<Estimate> {
    if mc_zeta < 2 * Y_BATCHES {
        return Err(Error::InvalidConfig(format!("sigma_y needs ≥ {} samples", 2 * Y_BATCHES)));
    }
    if !(delta > 0.0) {
        return Err(Error::domain("delta", delta));
    }
    if !(x_horizon > 0.0) {
        return Err(Error::domain("x_horizon", x_horizon));
    }
    let alpha = law.malthusian_alpha();
    let growth = (alpha * delta).exp();
    let mean = law.renewal_mean()?;
    let x_max = x_horizon / alpha;
    let nodes = x_nodes(law, x_max);

    let sampler = GammaSampler::new(law);
    let zetas: Vec<f64> = (0..mc_zeta)
        .map(|j| sampler.sample(&mut stream(seed, &[TAG_Y, j as u64])))
        .collect();
    let zeta_max = zetas.iter().copied().fold(0.0, f64::max);

    // e^{-αx/2} folds the weight into φ so its variance carries e^{-αx}
    let scale: Vec<f64> = nodes.iter().map(|&(x, _)| (-0.5 * alpha * x).exp()).collect();
    let alive: Vec<f64> = nodes
        .iter()
        .zip(&scale)
        .map(|(&(x, _), &s)| {
            if x < zeta_max {
                Ok((cond_mean_age_with(law, &mean, x, delta)? - growth) * s)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<_>>()?;
    let step = (law.theta() / 4.0).max(x_max / 4e6);
    let h = HTable::new(&mean, delta, x_max, step);

    let n_x = nodes.len();
    let per_batch = mc_zeta / Y_BATCHES;
    let mut sum = vec![0.0; n_x * Y_BATCHES];
    let mut sum2 = vec![0.0; n_x * Y_BATCHES];
    let mut counts = [0usize; Y_BATCHES];
    for (j, &z) in zetas.iter().enumerate() {
        let b = (j / per_batch).min(Y_BATCHES - 1);
        counts[b] += 1;
        let (s1, s2) = (&mut sum[b * n_x..(b + 1) * n_x], &mut sum2[b * n_x..(b + 1) * n_x]);
        for i in 0..n_x {
            let x = nodes[i].0;
            // shifted by the no-division value to keep the sums well conditioned
            let v = if x < z { 0.0 } else { 2.0 * h.eval(x - z) * scale[i] - alive[i] };
            s1[i] += v;
            s2[i] += v * v;
        }
    }

    let integrate = |batches: &[usize]| -> f64 {
        let n: f64 = batches.iter().map(|&b| counts[b] as f64).sum();
        (0..n_x)
            .map(|i| {
                let (s1, s2) = batches
                    .iter()
                    .fold((0.0, 0.0), |(a, c), &b| (a + sum[b * n_x + i], c + sum2[b * n_x + i]));
                let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
                nodes[i].1 * var
            })
            .sum()
    };
    let all: Vec<usize> = (0..Y_BATCHES).collect();
    let value = integrate(&all);
    let mut batch = Welford::default();
    for b in 0..Y_BATCHES {
        batch.push(integrate(&[b]));
    }
    Ok(Estimate {
        value,
        se: (batch.variance() / Y_BATCHES as f64).sqrt(),
    })
}

/// One assembled value `σ² = σ_X² + 2α σ_Y²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaValue {
    pub sigma2: f64,
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    pub se: f64,
    pub se_x: f64,
    pub se_y: f64,
    pub x_max: f64,
}

pub fn sigma_total(law: &GammaLifetime, delta: f64, budgets: &GridBudgets, seed: u64) -> Result<SigmaValue> {
    let x = sigma_x(law, delta, budgets.mc_per_node, budgets.age_nodes, seed)?;
    let y = sigma_y(law, delta, budgets.mc_zeta, budgets.x_horizon, seed)?;
    let alpha = law.malthusian_alpha();
    Ok(SigmaValue {
        sigma2: x.value + 2.0 * alpha * y.value,
        sigma2_x: x.value,
        sigma2_y: y.value,
        se: (x.se * x.se + (2.0 * alpha * y.se).powi(2)).sqrt(),
        se_x: x.se,
        se_y: y.se,
        x_max: budgets.x_horizon / alpha,
    })
}

/// Closed-form limiting variance at the critical shape.
pub fn critical_sigma(law: &GammaLifetime, delta: f64) -> Result<f64> {
    let kc = critical_shape();
    if (law.k() - kc).abs() > 1e-6 {
        return Err(Error::domain("k (critical_sigma needs k = k_c)", law.k()));
    }
    if !(delta > 0.0) {
        return Err(Error::domain("delta", delta));
    }
    let k = law.k();
    let alpha = law.malthusian_alpha();
    let rho = law.second_eigenvalue()?;
    let (c1, c2) = ((1.0 / k).exp2(), (2.0 / k).exp2());
    let gap = (rho * delta).exp() - (alpha * delta).exp();
    Ok(alpha / (k * k) * (c2 / (c2 - c1)) * gap.norm_sqr())
}

/// `𝔾_p = {1 + p l : 0 ≤ l < ⌊(k_c - 1)/p⌋}`.
pub fn grid_k_values(mesh: f64) -> Result<Vec<f64>> {
    if !(mesh > 0.0) || !mesh.is_finite() {
        return Err(Error::domain("mesh", mesh));
    }
    let n = ((critical_shape() - 1.0) / mesh).floor() as usize;
    if n == 0 {
        return Err(Error::domain("mesh (no grid node below k_c)", mesh));
    }
    Ok((0..n).map(|l| 1.0 + mesh * l as f64).collect())
}

/// A node of the table: law `Γ(k, θ)` with `α` fixed, `δ = c ln 2 / α`.
pub fn build_node(k: f64, alpha: f64, delta_factor: f64, budgets: &GridBudgets, seed: u64) -> Result<SigmaValue> {
    let law = GammaLifetime::with_alpha(k, alpha)?;
    sigma_total(&law, delta_factor * LN_2 / alpha, budgets, seed)
}

/// Tabulated `σ̄_δ²(k)` at fixed `α` and `δ = c ln 2 / α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaGrid {
    pub mesh: f64,
    pub alpha: f64,
    pub delta_factor: f64,
    pub budgets: GridBudgets,
    pub seed: u64,
    pub quadrature: String,
    pub k_values: Vec<f64>,
    pub nodes: Vec<SigmaValue>,
}

impl SigmaGrid {
    /// Assemble a grid from independently computed nodes, rejecting it if
    /// any node failed or broke the table invariants.
    pub fn assemble(
        mesh: f64,
        alpha: f64,
        delta_factor: f64,
        budgets: GridBudgets,
        seed: u64,
        k_values: Vec<f64>,
        results: Vec<Result<SigmaValue>>,
    ) -> Result<Self> {
        let mut failures = Vec::new();
        let mut nodes = Vec::with_capacity(results.len());
        for (k, r) in k_values.iter().zip(results) {
            match r {
                Ok(v) => nodes.push(v),
                Err(e) => failures.push(format!("k={k}: {e}")),
            }
        }
        if !failures.is_empty() {
            return Err(Error::GridRejected(failures.join("; ")));
        }
        let grid = SigmaGrid {
            mesh,
            alpha,
            delta_factor,
            budgets,
            seed,
            quadrature: QUADRATURE_DESC.into(),
            k_values,
            nodes,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_values.len() != self.nodes.len() || self.k_values.is_empty() {
            return Err(Error::GridRejected("node count mismatch".into()));
        }
        if self.k_values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::GridRejected("k values not strictly increasing".into()));
        }
        if self.k_values.last().is_some_and(|&k| k >= critical_shape()) {
            return Err(Error::GridRejected("k values must stay below k_c".into()));
        }
        for (k, n) in self.k_values.iter().zip(&self.nodes) {
            if !(n.sigma2 > 0.0) || !n.sigma2.is_finite() || n.sigma2_x < 0.0 || n.sigma2_y < 0.0 {
                return Err(Error::GridRejected(format!("non-positive value at k={k}")));
            }
            let sum = n.sigma2_x + 2.0 * self.alpha * n.sigma2_y;
            if (sum - n.sigma2).abs() > 1e-12 * n.sigma2 {
                return Err(Error::GridRejected(format!("σ² ≠ σ_X² + 2ασ_Y² at k={k}")));
            }
        }
        Ok(())
    }

    pub fn sigma2(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.sigma2).collect()
    }

    pub fn k_range(&self) -> (f64, f64) {
        (self.k_values[0], self.k_values[self.k_values.len() - 1])
    }

    /// Piecewise-linear interpolation of `σ̄²`.
    pub fn lookup(&self, k: f64) -> Result<f64> {
        let (lo, hi) = self.k_range();
        if !(k >= lo && k <= hi) {
            return Err(Error::OutOfGridRange { k, lo, hi });
        }
        let i = self.k_values.partition_point(|&x| x <= k);
        if i == 0 || self.k_values[i - 1] == k {
            return Ok(self.nodes[i.max(1) - 1].sigma2);
        }
        let (k0, k1) = (self.k_values[i - 1], self.k_values[i]);
        let (v0, v1) = (self.nodes[i - 1].sigma2, self.nodes[i].sigma2);
        let t = (k - k0) / (k1 - k0);
        Ok(v0 + t * (v1 - v0))
    }

    /// Largest `|σ²_{i+1} / σ²_i - 1|` over adjacent nodes.
    pub fn max_relative_jump(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| (w[1].sigma2 / w[0].sigma2 - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Strict monotonicity (either direction) over the whole grid.
    pub fn is_strictly_monotone(&self) -> bool {
        let v = self.sigma2();
        v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
    }

    /// Index pairs `(i, i+1)` where the grid breaks its overall trend.
    pub fn monotonicity_breaks(&self) -> Vec<usize> {
        let v = self.sigma2();
        let falling = v.last() < v.first();
        (0..v.len().saturating_sub(1))
            .filter(|&i| if falling { v[i + 1] >= v[i] } else { v[i + 1] <= v[i] })
            .collect()
    }
}

/// Sequential grid build; the `branchfit` crate runs nodes in parallel.
pub fn build_grid(mesh: f64, alpha: f64, delta_factor: f64, budgets: GridBudgets, seed: u64) -> Result<SigmaGrid> {
    let k_values = grid_k_values(mesh)?;
    build_grid_at(k_values, mesh, alpha, delta_factor, budgets, seed)
}

/// Grid on explicit nodes (all below `k_c`).
pub fn build_grid_at(
    k_values: Vec<f64>,
    mesh: f64,
    alpha: f64,
    delta_factor: f64,
    budgets: GridBudgets,
    seed: u64,
) -> Result<SigmaGrid> {
    let results = k_values
        .iter()
        .map(|&k| build_node(k, alpha, delta_factor, &budgets, seed))
        .collect();
    SigmaGrid::assemble(mesh, alpha, delta_factor, budgets, seed, k_values, results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::moments_from_age;

    fn law(k: f64, theta: f64) -> GammaLifetime {
        GammaLifetime::new(k, theta).unwrap()
    }

    fn small() -> GridBudgets {
        GridBudgets {
            mc_per_node: 20_000,
            mc_zeta: 20_000,
            age_nodes: 24,
            x_horizon: DEFAULT_X_HORIZON,
        }
    }

    #[test]
    fn cond_mean_memoryless() {
        let g = law(1.0, 1.0);
        for &a in &[0.0, 1.0, 5.0] {
            assert!((cond_mean_age(&g, a, LN_2).unwrap() - 2.0).abs() < 1e-7);
        }
        let g = law(7.0, 0.4);
        assert!((cond_mean_age(&g, 1.3, 1e-9).unwrap() - 1.0).abs() < 1e-6);
        assert!(cond_mean_age(&g, 1.3, 0.0).is_err());
    }

    #[test]
    fn cond_mean_matches_monte_carlo() {
        let g = law(20.0, 1.0);
        let delta = LN_2 / g.malthusian_alpha();
        let a = g.mean() / 2.0;
        let exact = cond_mean_age(&g, a, delta).unwrap();
        let mut rng = stream(77, &[]);
        let n = 100_000;
        let (m, v) = moments_from_age(&g, a, delta, n, &mut rng).unwrap();
        let se = (v / n as f64).sqrt();
        assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} (se {se})");
        assert!(exact >= 1.0);
    }

    #[test]
    fn residual_table_matches_exact_probability() {
        let g = law(12.0, 0.5);
        let t = ResidualTable::new(&g, 4.0, 3.0).unwrap();
        let exact = 1.0 - g.survival(7.0).unwrap() / g.survival(4.0).unwrap();
        assert!((t.division_probability() - exact).abs() < 1e-12);
    }

    #[test]
    fn h_table_interpolates() {
        for k in [30.0, 30.5] {
            let g = law(k, 1.0);
            let m = g.renewal_mean().unwrap();
            let delta = LN_2 / g.malthusian_alpha();
            let t = HTable::new(&m, delta, 200.0, g.theta() / 4.0);
            for &y in &[0.0, 0.37, 3.3, 29.9, 71.123, 199.0] {
                let exact = m.h_delta(y, delta);
                let scale = (m.approx().alpha() * y / 2.0).exp();
                assert!((t.eval(y) - exact).abs() < 1e-5 * scale, "k={k} y={y}");
            }
        }
    }

    #[test]
    fn exponential_degeneracy() {
        let g = law(1.0, 1.0);
        let y = sigma_y(&g, LN_2, 1000, 7.0, 1).unwrap();
        assert!(y.value.abs() < 1e-12);
        let s = sigma_total(&g, LN_2, &small(), 3).unwrap();
        assert!((s.sigma2 / 2.0 - 1.0).abs() < 0.05, "{}", s.sigma2);
        assert_eq!(s.sigma2, s.sigma2_x + 2.0 * g.malthusian_alpha() * s.sigma2_y);
    }

    #[test]
    fn vanishing_step() {
        let g = law(10.0, 0.1);
        let x = sigma_x(&g, 1e-7, 2000, 8, 1).unwrap();
        let y = sigma_y(&g, 1e-7, 2000, 7.0, 1).unwrap();
        assert!(x.value < 1e-4 && y.value < 1e-8, "{x:?} {y:?}");
    }

    #[test]
    fn step_convention_reduces_y_part() {
        for &k in &[20.0, 35.0, 50.0] {
            let g = GammaLifetime::with_alpha(k, 1.0).unwrap();
            let full = sigma_y(&g, LN_2, 20_000, 7.0, 5).unwrap();
            let half = sigma_y(&g, LN_2 / 2.0, 20_000, 7.0, 5).unwrap();
            assert!(full.value < half.value, "k={k}: {full:?} vs {half:?}");
        }
    }

    #[test]
    fn critical_formula() {
        let kc = critical_shape();
        let g = GammaLifetime::with_alpha(kc, 1.0).unwrap();
        let full = critical_sigma(&g, LN_2).unwrap();
        let half = critical_sigma(&g, LN_2 / 2.0).unwrap();
        assert!(full > 0.0 && half > full);
        let g3 = GammaLifetime::with_alpha(kc, 3.0).unwrap();
        assert!((critical_sigma(&g3, LN_2 / 3.0).unwrap() / full - 3.0).abs() < 1e-9);
        assert!(critical_sigma(&law(30.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn grid_nodes() {
        let g = grid_k_values(0.1).unwrap();
        assert_eq!(g.len(), 562);
        assert!((g[561] - 57.1).abs() < 1e-9);
        assert_eq!(grid_k_values(0.05).unwrap().len(), 1124);
        assert_eq!(grid_k_values(0.5).unwrap().len(), 112);
        assert!(grid_k_values(0.0).is_err());
    }

    fn toy_grid(values: &[f64]) -> SigmaGrid {
        let k_values: Vec<f64> = (0..values.len()).map(|i| 1.0 + i as f64).collect();
        let nodes = values
            .iter()
            .map(|&v| Ok(SigmaValue {
                sigma2: v,
                sigma2_x: v,
                sigma2_y: 0.0,
                se: 0.0,
                se_x: 0.0,
                se_y: 0.0,
                x_max: 1.0,
            }))
            .collect();
        SigmaGrid::assemble(1.0, 1.0, 1.0, GridBudgets::default(), 0, k_values, nodes).unwrap()
    }

    #[test]
    fn lookup_is_linear() {
        let g = toy_grid(&[2.0, 1.5, 1.0, 0.9]);
        assert_eq!(g.lookup(2.0).unwrap(), 1.5);
        assert_eq!(g.lookup(4.0).unwrap(), 0.9);
        assert!((g.lookup(2.5).unwrap() - 1.25).abs() < 1e-15);
        assert!(matches!(g.lookup(4.5), Err(Error::OutOfGridRange { .. })));
        assert!(g.is_strictly_monotone());
        assert!(g.monotonicity_breaks().is_empty());
        assert!((g.max_relative_jump() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn failed_nodes_reject_grid() {
        let r = SigmaGrid::assemble(
            1.0,
            1.0,
            1.0,
            GridBudgets::default(),
            0,
            alloc::vec![1.0, 2.0],
            alloc::vec![Err(Error::Pole), Err(Error::Pole)],
        );
        assert!(matches!(r, Err(Error::GridRejected(_))));
    }

    #[test]
    fn node_is_reproducible() {
        let b = GridBudgets {
            mc_per_node: 2000,
            mc_zeta: 2000,
            age_nodes: 8,
            x_horizon: DEFAULT_X_HORIZON,
        };
        let a = build_node(12.0, 1.0, 1.0, &b, 4).unwrap();
        assert_eq!(a, build_node(12.0, 1.0, 1.0, &b, 4).unwrap());
        assert_ne!(a, build_node(12.0, 1.0, 1.0, &b, 5).unwrap());
    }
}

//! Estimation of `(k, θ)` from population counts on a uniform time grid.
//!
//! 1. `α̂` is the mean of per-trajectory OLS slopes of `ln N_t`.
//! 2. The residual variance `Var(N_{t+δ₁} - e^{α̂δ₁} N_t)` at `δ₁ ≈ ln 2/(2α̂)`
//!    grows like `e^{2λ̂t}`; comparing `2λ̂` with `α̂` picks the regime.
//! 3. Gaussian regime: match the normalized residual variance at
//!    `δ₂ ≈ ln 2/α̂` against a [`SigmaGrid`]. Oscillating regime: solve the
//!    eigenvalue relation for `k`. Both enforce `(2^{1/k̂} - 1)/θ̂ = α̂`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};
use serde::{Deserialize, Serialize};

use crate::regression::{ols, LineFit};
use crate::sigma::SigmaGrid;
use crate::sim::Ensemble;
use crate::spectral::critical_shape;
use crate::{Error, Result};

pub const DEFAULT_START_COUNT: f64 = 50.0;
pub const DEFAULT_THRESHOLD: f64 = 0.10;
pub const DEFAULT_K_MAX: f64 = 1e4;
/// Oscillating estimates closer than this to `k_c` are flagged.
pub const BOUNDARY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountMode {
    Absolute,
    /// Counts known only up to an unknown scale factor (e.g. fluorescence).
    Proportional,
}

/// Counts of `n_data` trajectories at times `t0 + iΔ`, `i = 0..=I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub grid_step: f64,
    pub t0: f64,
    pub counts: Vec<Vec<f64>>,
    pub valid: Vec<Vec<bool>>,
    pub units: String,
    pub count_mode: CountMode,
}

impl Dataset {
    /// A fully observed dataset.
    pub fn new(grid_step: f64, counts: Vec<Vec<f64>>, count_mode: CountMode) -> Result<Self> {
        let valid = counts.iter().map(|r| alloc::vec![true; r.len()]).collect();
        Self::with_mask(grid_step, 0.0, counts, valid, String::new(), count_mode)
    }

    pub fn with_mask(
        grid_step: f64,
        t0: f64,
        counts: Vec<Vec<f64>>,
        valid: Vec<Vec<bool>>,
        units: String,
        count_mode: CountMode,
    ) -> Result<Self> {
        let ds = Dataset {
            grid_step,
            t0,
            counts,
            valid,
            units,
            count_mode,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Counts of a simulated ensemble; post-cap entries are masked and zeroed.
    pub fn from_ensemble(ens: &Ensemble) -> Result<Self> {
        let counts = ens
            .trajectories
            .iter()
            .map(|t| {
                t.counts
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| if t.is_valid(i) { c as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        let valid = ens
            .trajectories
            .iter()
            .map(|t| (0..t.counts.len()).map(|i| t.is_valid(i)).collect())
            .collect();
        Self::with_mask(
            ens.config.grid_step,
            0.0,
            counts,
            valid,
            "cells".into(),
            CountMode::Absolute,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0) || !self.grid_step.is_finite() {
            return Err(Error::InvalidConfig(format!("grid step {} must be > 0", self.grid_step)));
        }
        let width = self.counts.first().map_or(0, Vec::len);
        if self.counts.is_empty() || width < 2 {
            return Err(Error::InvalidConfig("dataset needs ≥ 1 trajectory and ≥ 2 times".into()));
        }
        if self.valid.len() != self.counts.len() {
            return Err(Error::InvalidConfig("mask shape differs from counts".into()));
        }
        for (row, (c, v)) in self.counts.iter().zip(&self.valid).enumerate() {
            if c.len() != width || v.len() != width {
                return Err(Error::InvalidConfig(format!("ragged row {row}")));
            }
            for (col, (&x, _)) in c.iter().zip(v).enumerate().filter(|(_, (_, &ok))| ok) {
                if !(x > 0.0) || !x.is_finite() {
                    return Err(Error::NonPositiveCount { row, col, value: x });
                }
                if self.count_mode == CountMode::Absolute && (x - x.round()).abs() > 1e-9 {
                    return Err(Error::InvalidConfig(format!(
                        "non-integer count {x} at trajectory {row}, index {col} in absolute mode"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_data(&self) -> usize {
        self.counts.len()
    }

    pub fn n_times(&self) -> usize {
        self.counts[0].len()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.grid_step
    }

    /// Last index of each row before its masked suffix.
    fn last_valid(&self, row: usize) -> Option<usize> {
        self.valid[row].iter().rposition(|&v| v)
    }

    /// Last index observed in every trajectory before any masked suffix.
    pub fn common_end(&self) -> Option<usize> {
        (0..self.n_data()).map(|r| self.last_valid(r)).min().flatten()
    }

    /// First index where the mean of the valid counts reaches `floor`.
    pub fn first_index_above(&self, floor: f64) -> Option<usize> {
        (0..self.n_times()).find(|&i| {
            let (mut s, mut n) = (0.0, 0usize);
            for (c, v) in self.counts.iter().zip(&self.valid) {
                if v[i] {
                    s += c[i];
                    n += 1;
                }
            }
            n > 0 && s / n as f64 >= floor
        })
    }

    /// Copy with every count multiplied by `c`.
    pub fn scaled_counts(&self, c: f64) -> Self {
        let mut ds = self.clone();
        ds.counts.iter_mut().flatten().for_each(|x| *x *= c);
        ds
    }

    /// Copy with the time axis multiplied by `s`.
    pub fn rescaled_time(&self, s: f64) -> Self {
        let mut ds = self.clone();
        ds.grid_step *= s;
        ds.t0 *= s;
        ds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha_hat: f64,
    pub per_trajectory_slopes: Vec<f64>,
    pub mean_r2: f64,
    /// Grid indices `(first, last)` of the regression window.
    pub window: (usize, usize),
}

/// Default α window: from the first index whose mean count is at least
/// `start_count` to the last observed index.
pub fn default_window(ds: &Dataset, start_count: f64) -> Result<(usize, usize)> {
    let first = ds
        .first_index_above(start_count)
        .ok_or_else(|| Error::EmptyWindow(format!("mean count never reaches {start_count}")))?;
    let last = (0..ds.n_data())
        .filter_map(|r| ds.last_valid(r))
        .max()
        .ok_or_else(|| Error::EmptyWindow("no valid entries".into()))?;
    if last <= first {
        return Err(Error::EmptyWindow(format!("window [{first}, {last}] has fewer than 2 times")));
    }
    Ok((first, last))
}

/// Per-trajectory OLS of `ln N_t` on `t` over the window, averaged.
pub fn estimate_alpha(ds: &Dataset, window: (usize, usize)) -> Result<AlphaEstimate> {
    let (first, last) = window;
    let last = last.min(ds.n_times() - 1);
    let mut slopes = Vec::with_capacity(ds.n_data());
    let mut r2 = 0.0;
    for (row, (c, v)) in ds.counts.iter().zip(&ds.valid).enumerate() {
        let idx: Vec<usize> = (first..=last).filter(|&i| v[i]).collect();
        if let Some(&col) = idx.iter().find(|&&i| !(c[i] > 0.0)) {
            return Err(Error::NonPositiveCount { row, col, value: c[col] });
        }
        let fit = ols(idx.iter().map(|&i| (ds.time(i), c[i].ln())))
            .ok_or_else(|| Error::EmptyWindow(format!("trajectory {row} has < 2 points in [{first}, {last}]")))?;
        slopes.push(fit.slope);
        r2 += fit.r2;
    }
    let n = slopes.len() as f64;
    Ok(AlphaEstimate {
        alpha_hat: slopes.iter().sum::<f64>() / n,
        per_trajectory_slopes: slopes,
        mean_r2: r2 / n,
        window: (first, last),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaTarget {
    /// `ln 2 / (2α̂)`
    Half,
    /// `ln 2 / α̂`
    Full,
}

/// Number of grid steps `i ≥ 1` with `iΔ` closest to the target; ties go to
/// the smaller `i`.
pub fn pick_delta(grid_step: f64, alpha_hat: f64, target: DeltaTarget) -> Result<usize> {
    if !(alpha_hat > 0.0) {
        return Err(Error::domain("alpha_hat", alpha_hat));
    }
    let goal = match target {
        DeltaTarget::Half => LN_2 / (2.0 * alpha_hat),
        DeltaTarget::Full => LN_2 / alpha_hat,
    };
    let lo = ((goal / grid_step).floor() as usize).max(1);
    let dist = |i: usize| (i as f64 * grid_step - goal).abs();
    Ok(if dist(lo + 1) < dist(lo) { lo + 1 } else { lo })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSeries {
    pub delta: f64,
    pub n_delta: usize,
    pub normalized: bool,
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub variances: Vec<f64>,
    pub n_used: Vec<usize>,
}

/// Empirical variance (1/n) across trajectories of
/// `N_{t+δ} - e^{α̂δ} N_t`, optionally divided by `√N_t`, for grid indices
/// `first ..= last` with `t + δ` also valid.
pub fn residual_variance_curve(
    ds: &Dataset,
    alpha_hat: f64,
    n_delta: usize,
    normalized: bool,
    indices: (usize, usize),
) -> Result<FluctuationSeries> {
    if n_delta == 0 {
        return Err(Error::InvalidConfig("delta must be ≥ 1 grid step".into()));
    }
    let delta = n_delta as f64 * ds.grid_step;
    let growth = (alpha_hat * delta).exp();
    let (first, last) = indices;
    let last = last.min(ds.n_times().saturating_sub(n_delta + 1));
    if ds.n_times() <= n_delta || first > last {
        return Err(Error::EmptyWindow(format!("no time in [{first}, {last}] with t+δ on the grid")));
    }
    let mut series = FluctuationSeries {
        delta,
        n_delta,
        normalized,
        indices: Vec::new(),
        times: Vec::new(),
        variances: Vec::new(),
        n_used: Vec::new(),
    };
    let mut r = Vec::with_capacity(ds.n_data());
    for i in first..=last {
        r.clear();
        for (c, v) in ds.counts.iter().zip(&ds.valid) {
            if v[i] && v[i + n_delta] {
                let res = c[i + n_delta] - growth * c[i];
                r.push(if normalized { res / c[i].sqrt() } else { res });
            }
        }
        if r.len() < 2 {
            return Err(Error::InsufficientTrajectories { index: i, n: r.len() });
        }
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        series.indices.push(i);
        series.times.push(ds.time(i));
        series.variances.push(var);
        series.n_used.push(r.len());
    }
    Ok(series)
}

/// Indices for a residual curve: the α window start up to the last index
/// observed in every trajectory, minus the step.
pub fn fluctuation_window(ds: &Dataset, first: usize, n_delta: usize) -> Result<(usize, usize)> {
    let end = ds.common_end().ok_or_else(|| Error::EmptyWindow("no common valid range".into()))?;
    match end.checked_sub(n_delta) {
        Some(last) if last > first => Ok((first, last)),
        _ => Err(Error::EmptyWindow(format!(
            "common range ends at {end}, too early for a step of {n_delta} after {first}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub lambda_hat: f64,
    pub r2: f64,
    pub intercept: f64,
}

/// Slope of `½ ln Var` against time over the whole series.
pub fn estimate_lambda(series: &FluctuationSeries) -> Result<LambdaEstimate> {
    if let Some(p) = series.variances.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveVariance { index: series.indices[p] });
    }
    let fit: LineFit = ols(series.times.iter().zip(&series.variances).map(|(&t, &v)| (t, 0.5 * v.ln())))
        .ok_or_else(|| Error::EmptyWindow("variance curve has < 2 points".into()))?;
    Ok(LambdaEstimate {
        lambda_hat: fit.slope,
        r2: fit.r2,
        intercept: fit.intercept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitRegime {
    Gaussian,
    Oscillating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeDecision {
    pub lambda_hat: f64,
    pub ratio: f64,
    pub threshold: f64,
    pub regime: FitRegime,
}

/// Gaussian iff `|2λ̂ - α̂| / α̂ < threshold`.
pub fn detect_regime(alpha_hat: f64, lambda_hat: f64, threshold: f64) -> Result<RegimeDecision> {
    if !(alpha_hat > 0.0) {
        return Err(Error::domain("alpha_hat", alpha_hat));
    }
    let ratio = (2.0 * lambda_hat - alpha_hat).abs() / alpha_hat;
    Ok(RegimeDecision {
        lambda_hat,
        ratio,
        threshold,
        regime: if ratio < threshold { FitRegime::Gaussian } else { FitRegime::Oscillating },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub k_hat: f64,
    pub theta_hat: f64,
    pub mu_hat: f64,
    pub cv_hat: f64,
    pub alpha_hat: f64,
    pub regime_used: FitRegime,
    /// `|lookup(k̂) - target|` (Gaussian) or `|r(k̂) - λ̂/α̂|` (oscillating).
    pub residual: f64,
    /// Gaussian target statistic, if any.
    pub target: Option<f64>,
    /// The oscillating solve landed next to `k_c`.
    pub boundary: bool,
}

fn theta_from(k: f64, alpha_hat: f64) -> f64 {
    libm::expm1(LN_2 / k) / alpha_hat
}

fn estimate(k: f64, alpha_hat: f64, regime: FitRegime, residual: f64, target: Option<f64>) -> ParamEstimate {
    let theta = theta_from(k, alpha_hat);
    ParamEstimate {
        k_hat: k,
        theta_hat: theta,
        mu_hat: k * theta,
        cv_hat: 1.0 / k.sqrt(),
        alpha_hat,
        regime_used: regime,
        residual,
        target,
        boundary: false,
    }
}

/// `k̂ = argmin |lookup(k) - target|` over a sweep with four points per grid
/// cell; ties go to the smaller `k`.
pub fn k_from_target(grid: &SigmaGrid, target: f64) -> Result<(f64, f64)> {
    let values = grid.sigma2();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(target >= lo && target <= hi) {
        return Err(Error::Extrapolation { target, lo, hi });
    }
    let ks = &grid.k_values;
    let mut best = (ks[0], f64::INFINITY);
    let mut consider = |k: f64| -> Result<()> {
        let d = (grid.lookup(k)? - target).abs();
        if d < best.1 {
            best = (k, d);
        }
        Ok(())
    };
    for w in ks.windows(2) {
        for s in 0..4 {
            consider(w[0] + (w[1] - w[0]) * s as f64 / 4.0)?;
        }
    }
    consider(ks[ks.len() - 1])?;
    Ok(best)
}

/// Gaussian target: mean over the curve of the residual variance.
pub fn gaussian_target(series: &FluctuationSeries) -> f64 {
    series.variances.iter().sum::<f64>() / series.variances.len() as f64
}

/// Gaussian-regime estimator on a prepared `δ₂` residual curve.
pub fn infer_gaussian(
    ds: &Dataset,
    grid: &SigmaGrid,
    alpha_hat: f64,
    series: &FluctuationSeries,
) -> Result<ParamEstimate> {
    if ds.count_mode == CountMode::Proportional {
        return Err(Error::ProportionalGaussian);
    }
    let target = gaussian_target(series);
    let (k, residual) = k_from_target(grid, target)?;
    Ok(estimate(k, alpha_hat, FitRegime::Gaussian, residual, Some(target)))
}

/// `r(k) = (2^{1/k} cos(2π/k) - 1) / (2^{1/k} - 1) = λ/α`, free of `θ`.
pub fn eigen_ratio(k: f64) -> f64 {
    let c = (1.0 / k).exp2();
    (c * (2.0 * PI / k).cos() - 1.0) / libm::expm1(LN_2 / k)
}

/// Oscillating-regime estimator: solve `r(k) = λ̂/α̂` on `(k_c, k_max]`.
pub fn infer_oscillating(alpha_hat: f64, lambda_hat: f64, k_max: f64) -> Result<ParamEstimate> {
    if !(alpha_hat > 0.0) {
        return Err(Error::domain("alpha_hat", alpha_hat));
    }
    let kc = critical_shape();
    let ratio = lambda_hat / alpha_hat;
    let f = |k: f64| eigen_ratio(k) - ratio;
    let (rlo, rhi) = (eigen_ratio(kc), eigen_ratio(k_max));
    if !(ratio > rlo.min(rhi) && ratio <= rlo.max(rhi)) {
        return Err(Error::RatioOutOfRange { ratio, lo: rlo, hi: rhi });
    }
    let k = if f(kc).signum() != f(k_max).signum() {
        // bisect to full precision so rescaled inputs give identical answers
        let (mut lo, mut hi) = (kc, k_max);
        let neg_lo = f(lo) < 0.0;
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break mid;
            }
            if (f(mid) < 0.0) == neg_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    } else {
        let n = 100_000;
        (0..=n)
            .map(|i| kc * (k_max / kc).powf(i as f64 / n as f64))
            .map(|k| (k, f(k).abs()))
            .fold((kc, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
            .0
    };
    let mut est = estimate(k, alpha_hat, FitRegime::Oscillating, f(k).abs(), None);
    est.boundary = (k - kc).abs() <= BOUNDARY_TOLERANCE;
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub start_count: f64,
    pub regime_threshold: f64,
    /// Divide residuals by `√N_t` in the Gaussian target.
    pub normalized_target: bool,
    pub k_max: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            start_count: DEFAULT_START_COUNT,
            regime_threshold: DEFAULT_THRESHOLD,
            normalized_target: true,
            k_max: DEFAULT_K_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Estimated(ParamEstimate),
    /// Gaussian regime detected but no grid was supplied.
    GridRequired,
    /// Gaussian regime detected on proportional counts.
    ProportionalCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub alpha: AlphaEstimate,
    pub delta1: f64,
    pub delta2: f64,
    pub regime_curve: FluctuationSeries,
    pub lambda: LambdaEstimate,
    pub regime: RegimeDecision,
    pub gaussian_curve: Option<FluctuationSeries>,
    pub outcome: Outcome,
    pub warnings: Vec<String>,
}

impl PipelineReport {
    pub fn estimate(&self) -> Option<&ParamEstimate> {
        match &self.outcome {
            Outcome::Estimated(e) => Some(e),
            _ => None,
        }
    }
}

/// The full pipeline; errors carry the name of the failing stage.
pub fn run_pipeline(ds: &Dataset, grid: Option<&SigmaGrid>, cfg: &PipelineConfig) -> Result<PipelineReport> {
    ds.validate().map_err(|e| e.at_stage("input"))?;
    let window = default_window(ds, cfg.start_count).map_err(|e| e.at_stage("alpha"))?;
    let alpha = estimate_alpha(ds, window).map_err(|e| e.at_stage("alpha"))?;
    let a = alpha.alpha_hat;
    let n1 = pick_delta(ds.grid_step, a, DeltaTarget::Half).map_err(|e| e.at_stage("delta"))?;
    let n2 = pick_delta(ds.grid_step, a, DeltaTarget::Full).map_err(|e| e.at_stage("delta"))?;
    let w1 = fluctuation_window(ds, window.0, n1).map_err(|e| e.at_stage("fluctuation"))?;
    let curve = residual_variance_curve(ds, a, n1, false, w1).map_err(|e| e.at_stage("fluctuation"))?;
    let lambda = estimate_lambda(&curve).map_err(|e| e.at_stage("lambda"))?;
    let regime = detect_regime(a, lambda.lambda_hat, cfg.regime_threshold).map_err(|e| e.at_stage("regime"))?;
    let mut warnings = Vec::new();
    let mut gaussian_curve = None;
    let outcome = match regime.regime {
        FitRegime::Oscillating => {
            let e = infer_oscillating(a, lambda.lambda_hat, cfg.k_max).map_err(|e| e.at_stage("estimate"))?;
            if e.boundary {
                warnings.push(format!(
                    "k̂ = {} is within {BOUNDARY_TOLERANCE} of k_c; inference at the critical point is unsupported",
                    e.k_hat
                ));
            }
            Outcome::Estimated(e)
        }
        FitRegime::Gaussian if ds.count_mode == CountMode::Proportional => {
            warnings.push("cannot estimate in Gaussian regime from proportional counts".into());
            Outcome::ProportionalCounts
        }
        FitRegime::Gaussian => match grid {
            None => {
                warnings.push("Gaussian regime estimation requires a sigma grid".into());
                Outcome::GridRequired
            }
            Some(grid) => {
                let w2 = fluctuation_window(ds, window.0, n2).map_err(|e| e.at_stage("estimate"))?;
                let series = residual_variance_curve(ds, a, n2, cfg.normalized_target, w2)
                    .map_err(|e| e.at_stage("estimate"))?;
                if !cfg.normalized_target {
                    warnings.push("unnormalized Gaussian target: compared with a grid of normalized variances".into());
                }
                let e = infer_gaussian(ds, grid, a, &series).map_err(|e| e.at_stage("estimate"))?;
                gaussian_curve = Some(series);
                Outcome::Estimated(e)
            }
        },
    };
    Ok(PipelineReport {
        config: *cfg,
        alpha,
        delta1: n1 as f64 * ds.grid_step,
        delta2: n2 as f64 * ds.grid_step,
        regime_curve: curve,
        lambda,
        regime,
        gaussian_curve,
        outcome,
        warnings,
    })
}

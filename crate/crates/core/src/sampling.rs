//! Lifetime variates.
//!
//! Fresh lifetimes use the Marsaglia-Tsang squeeze/rejection method, valid
//! for every shape `k ≥ 1`. Residual lifetimes of an individual already aged
//! `a` are drawn by inverting the conditional CDF
//! `1 - (1 - G(a+x))/(1 - G(a))` with a safeguarded Newton iteration on the
//! log-survival, which is concave for `k ≥ 1`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::spectral::GammaLifetime;
use crate::{Error, Result};

/// Log-survival below which the conditional law is considered unsupported.
const MIN_LN_SURVIVAL: f64 = -700.0;

#[derive(Debug, Clone, Copy)]
pub struct GammaSampler {
    theta: f64,
    d: f64,
    c: f64,
}

impl GammaSampler {
    pub fn new(law: &GammaLifetime) -> Self {
        let d = law.k() - 1.0 / 3.0;
        GammaSampler {
            theta: law.theta(),
            d,
            c: 1.0 / (9.0 * d).sqrt(),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let (x, v) = loop {
                let x: f64 = rng.sample(StandardNormal);
                let v = 1.0 + self.c * x;
                if v > 0.0 {
                    break (x, v * v * v);
                }
            };
            let u: f64 = rng.random();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + self.d * (1.0 - v + v.ln()) {
                return self.theta * self.d * v;
            }
        }
    }
}

pub fn sample_lifetime<R: Rng + ?Sized>(rng: &mut R, law: &GammaLifetime) -> f64 {
    GammaSampler::new(law).sample(rng)
}

/// Residual lifetime sampler for a fixed law and current age.
#[derive(Debug, Clone, Copy)]
pub struct ResidualSampler {
    law: GammaLifetime,
    age: f64,
    ln_surv_age: f64,
}

impl ResidualSampler {
    pub fn new(law: &GammaLifetime, age: f64) -> Result<Self> {
        if !(age >= 0.0) {
            return Err(Error::domain("age", age));
        }
        let ln_surv_age = law.ln_survival(age);
        if !(ln_surv_age > MIN_LN_SURVIVAL) {
            return Err(Error::UnsupportedAge { age });
        }
        Ok(ResidualSampler {
            law: *law,
            age,
            ln_surv_age,
        })
    }

    pub fn age(&self) -> f64 {
        self.age
    }

    /// Probability that the individual divides within `horizon`.
    pub fn division_probability(&self, horizon: f64) -> f64 {
        -libm::expm1(self.law.ln_survival(self.age + horizon) - self.ln_surv_age)
    }

    /// Conditional quantile: the residual `x` with `P(residual ≤ x) = u`.
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let target = (-u).ln_1p() + self.ln_surv_age;
        let f = |x: f64| self.law.ln_survival(self.age + x) - target;
        let scale = self.law.theta().max(self.law.sd());
        // bracket: f(lo) ≥ 0 ≥ f(hi)
        let mut lo = 0.0;
        let mut hi = scale;
        while f(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        let mut x = hi;
        for _ in 0..100 {
            let fx = f(x);
            if fx > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let t = self.age + x;
            let hazard = (self.law.ln_density(t) - self.law.ln_survival(t)).exp();
            let mut next = x + fx / hazard;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let step = (next - x).abs();
            x = next;
            if step <= 1e-13 * scale.max(x) || hi - lo <= 1e-13 * scale.max(x) {
                break;
            }
        }
        x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    /// Draw a residual only when it falls within `horizon`; `None` otherwise.
    /// Consumes exactly one uniform either way.
    pub fn sample_within<R: Rng + ?Sized>(&self, rng: &mut R, horizon: f64, p_div: f64) -> Option<f64> {
        let u: f64 = rng.random();
        if u < p_div {
            Some(self.quantile(u).min(horizon))
        } else {
            None
        }
    }
}

pub fn sample_residual_lifetime<R: Rng + ?Sized>(
    rng: &mut R,
    law: &GammaLifetime,
    age: f64,
) -> Result<f64> {
    if age == 0.0 {
        return Ok(sample_lifetime(rng, law));
    }
    Ok(ResidualSampler::new(law, age)?.sample(rng))
}

//! Event-driven simulation of Bellman-Harris populations.
//!
//! Each live individual is an entry `(division time, birth time)` in a
//! min-priority queue. Popping the earliest division replaces the parent by
//! [`OFFSPRING`] newborns with fresh lifetimes. Counts are read at the grid
//! times `iΔ`, `i = 0..=I`.
//!
//! The offspring number is the only place binary splitting is encoded; a
//! general reproduction law would replace the constant by a draw per event.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::sampling::{GammaSampler, ResidualSampler};
use crate::spectral::GammaLifetime;
use crate::{Error, Result};

pub const OFFSPRING: usize = 2;
pub const DEFAULT_SAFETY_CAP: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub grid_step: f64,
    /// Index of the last grid time; `I + 1` counts are recorded.
    pub n_grid: usize,
    pub pop_cap: Option<usize>,
    /// `(count, age)` groups of founders.
    pub initial: Vec<(usize, f64)>,
    pub safety_cap: usize,
}

impl SimConfig {
    pub fn new(seed: u64, grid_step: f64, n_grid: usize) -> Self {
        SimConfig {
            seed,
            grid_step,
            n_grid,
            pop_cap: None,
            initial: alloc::vec![(1, 0.0)],
            safety_cap: DEFAULT_SAFETY_CAP,
        }
    }

    pub fn with_pop_cap(mut self, cap: usize) -> Self {
        self.pop_cap = Some(cap);
        self
    }

    pub fn initial_count(&self) -> usize {
        self.initial.iter().map(|&(n, _)| n).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0) || !self.grid_step.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!("grid step {} must be > 0", self.grid_step)));
        }
        if self.n_grid < 2 {
            return Err(Error::InvalidConfig(alloc::format!("n_grid {} must be ≥ 2", self.n_grid)));
        }
        if self.initial_count() == 0 {
            return Err(Error::InvalidConfig("initial population is empty".into()));
        }
        if let Some(&(_, a)) = self.initial.iter().find(|&&(_, a)| !(a >= 0.0)) {
            return Err(Error::domain("initial age", a));
        }
        if self.pop_cap == Some(0) {
            return Err(Error::InvalidConfig("pop_cap must be positive".into()));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_grid).map(|i| i as f64 * self.grid_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub counts: Vec<u64>,
    /// First grid index at or after the time the population reached the cap.
    pub truncated_at: Option<usize>,
}

impl Trajectory {
    pub fn is_valid(&self, i: usize) -> bool {
        self.truncated_at.is_none_or(|t| i < t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub config: SimConfig,
    pub law: GammaLifetime,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, Clone, Copy)]
struct Individual {
    division: f64,
    birth: f64,
}

impl PartialEq for Individual {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Individual {}
impl PartialOrd for Individual {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Individual {
    // reversed: BinaryHeap pops the earliest division first
    fn cmp(&self, other: &Self) -> Ordering {
        other.division.total_cmp(&self.division)
    }
}

/// A live population advanced event by event.
pub struct Population<R> {
    sampler: GammaSampler,
    queue: BinaryHeap<Individual>,
    now: f64,
    rng: R,
    safety_cap: usize,
}

impl<R: Rng> Population<R> {
    pub fn new(law: &GammaLifetime, initial: &[(usize, f64)], mut rng: R) -> Result<Self> {
        let sampler = GammaSampler::new(law);
        let mut queue = BinaryHeap::new();
        for &(n, age) in initial {
            let residual = if age > 0.0 { Some(ResidualSampler::new(law, age)?) } else { None };
            for _ in 0..n {
                let life = match &residual {
                    Some(r) => r.sample(&mut rng),
                    None => sampler.sample(&mut rng),
                };
                queue.push(Individual { division: life, birth: -age });
            }
        }
        Ok(Population {
            sampler,
            queue,
            now: 0.0,
            rng,
            safety_cap: DEFAULT_SAFETY_CAP,
        })
    }

    pub fn with_safety_cap(mut self, cap: usize) -> Self {
        self.safety_cap = cap;
        self
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Process every division at or before `t`, stopping early once the
    /// population reaches `stop_at`. Returns `true` if it stopped early.
    pub fn advance_to(&mut self, t: f64, stop_at: Option<usize>) -> Result<bool> {
        while let Some(next) = self.queue.peek().copied() {
            if next.division > t {
                break;
            }
            self.queue.pop();
            self.now = next.division;
            for _ in 0..OFFSPRING {
                let life = self.sampler.sample(&mut self.rng);
                self.queue.push(Individual {
                    division: next.division + life,
                    birth: next.division,
                });
            }
            if self.queue.len() > self.safety_cap {
                return Err(Error::PopulationOverflow { cap: self.safety_cap });
            }
            if stop_at.is_some_and(|cap| self.queue.len() >= cap) {
                return Ok(true);
            }
        }
        self.now = t;
        Ok(false)
    }

    /// Ages of the live individuals at the current time.
    pub fn ages(&self) -> Vec<f64> {
        self.queue.iter().map(|i| self.now - i.birth).collect()
    }
}

pub fn simulate_trajectory(cfg: &SimConfig, law: &GammaLifetime, replicate: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let rng = stream(cfg.seed, &[replicate]);
    let mut pop = Population::new(law, &cfg.initial, rng)?.with_safety_cap(cfg.safety_cap);
    let times = cfg.times();
    let mut counts = Vec::with_capacity(times.len());
    let mut truncated_at = None;
    for (i, &t) in times.iter().enumerate() {
        if pop.advance_to(t, if i == 0 { None } else { cfg.pop_cap })? {
            truncated_at = Some(i);
            break;
        }
        counts.push(pop.len() as u64);
    }
    let last = pop.len() as u64;
    counts.resize(times.len(), last);
    Ok(Trajectory { times, counts, truncated_at })
}

/// Sequential ensemble; replicate `j` uses the stream `(seed, j)`.
pub fn simulate_ensemble(cfg: &SimConfig, law: &GammaLifetime, n_data: usize) -> Result<Ensemble> {
    if n_data == 0 {
        return Err(Error::InvalidConfig("n_data must be ≥ 1".into()));
    }
    let trajectories = (0..n_data)
        .map(|j| {
            simulate_trajectory(cfg, law, j as u64).map_err(|e| Error::Replicate {
                index: j,
                source: alloc::boxed::Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        config: cfg.clone(),
        law: *law,
        trajectories,
    })
}

/// `N_δ` for a process started from one individual whose first division
/// happens at `first` (`None`: after `delta`).
pub fn count_after<R: Rng + ?Sized>(
    rng: &mut R,
    sampler: &GammaSampler,
    first: Option<f64>,
    delta: f64,
    stack: &mut Vec<f64>,
) -> u64 {
    let Some(t1) = first.filter(|&t| t <= delta) else {
        return 1;
    };
    stack.clear();
    stack.push(delta - t1);
    stack.push(delta - t1);
    let mut n = 0;
    while let Some(r) = stack.pop() {
        let life = sampler.sample(rng);
        if life > r {
            n += 1;
        } else {
            stack.push(r - life);
            stack.push(r - life);
        }
    }
    n
}

/// Sample mean and unbiased variance of `N_δ` from one individual of age `age`.
pub fn moments_from_age<R: Rng + ?Sized>(
    law: &GammaLifetime,
    age: f64,
    delta: f64,
    n_mc: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_mc < 2 {
        return Err(Error::InvalidConfig("n_mc must be ≥ 2".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::domain("delta", delta));
    }
    let residual = ResidualSampler::new(law, age)?;
    let sampler = GammaSampler::new(law);
    let p_div = residual.division_probability(delta);
    let mut stack = Vec::new();
    let mut acc = Welford::default();
    for _ in 0..n_mc {
        let first = residual.sample_within(rng, delta, p_div);
        acc.push(count_after(rng, &sampler, first, delta, &mut stack) as f64);
    }
    Ok((acc.mean(), acc.variance()))
}

/// Running mean and central moments up to order four.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let t1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += t1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += t1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += t1;
    }

    pub fn count(&self) -> f64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n > 1.0 {
            self.m2 / (self.n - 1.0)
        } else {
            0.0
        }
    }

    /// Large-sample standard error of [`Self::variance`].
    pub fn variance_se(&self) -> f64 {
        if self.n < 4.0 {
            return f64::INFINITY;
        }
        let s2 = self.m2 / self.n;
        let mu4 = self.m4 / self.n;
        ((mu4 - s2 * s2 * (self.n - 3.0) / (self.n - 1.0)).max(0.0) / self.n).sqrt()
    }
}

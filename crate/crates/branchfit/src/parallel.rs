//! Rayon drivers for ensembles and sigma grids. Results are collected in
//! index order, so output does not depend on the thread count.

use std::sync::atomic::{AtomicUsize, Ordering};

use branchfit_core::sigma::{build_node, grid_k_values, GridBudgets, SigmaGrid};
use branchfit_core::sim::{simulate_trajectory, Ensemble, SimConfig};
use branchfit_core::{Error, GammaLifetime, Result};
use rayon::prelude::*;

pub const THREADS_ENV: &str = "BRANCHFIT_THREADS";

/// Thread count from `BRANCHFIT_THREADS`, else the available parallelism.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool(threads: Option<usize>) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or_else(default_threads))
        .build()
        .expect("thread pool")
}

pub fn simulate_ensemble(cfg: &SimConfig, law: &GammaLifetime, n_data: usize, threads: Option<usize>) -> Result<Ensemble> {
    if n_data == 0 {
        return Err(Error::InvalidConfig("n_data must be ≥ 1".into()));
    }
    cfg.validate()?;
    let trajectories = pool(threads).install(|| {
        (0..n_data)
            .into_par_iter()
            .map(|j| {
                simulate_trajectory(cfg, law, j as u64).map_err(|e| Error::Replicate {
                    index: j,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Ensemble {
        config: cfg.clone(),
        law: *law,
        trajectories,
    })
}

/// Called with `(done, total)` after each node.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

#[allow(clippy::too_many_arguments)]
pub fn build_grid_at(
    k_values: Vec<f64>,
    mesh: f64,
    alpha: f64,
    delta_factor: f64,
    budgets: GridBudgets,
    seed: u64,
    threads: Option<usize>,
    progress: Option<Progress<'_>>,
) -> Result<SigmaGrid> {
    let done = AtomicUsize::new(0);
    let total = k_values.len();
    let results = pool(threads).install(|| {
        k_values
            .par_iter()
            .map(|&k| {
                let r = build_node(k, alpha, delta_factor, &budgets, seed);
                let d = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(p) = progress {
                    p(d, total);
                }
                r
            })
            .collect()
    });
    SigmaGrid::assemble(mesh, alpha, delta_factor, budgets, seed, k_values, results)
}

pub fn build_grid(
    mesh: f64,
    alpha: f64,
    delta_factor: f64,
    budgets: GridBudgets,
    seed: u64,
    threads: Option<usize>,
    progress: Option<Progress<'_>>,
) -> Result<SigmaGrid> {
    build_grid_at(grid_k_values(mesh)?, mesh, alpha, delta_factor, budgets, seed, threads, progress)
}

//! Fast invariant checks bundled with the binary.

use std::f64::consts::LN_2;
use std::path::Path;

use branchfit_core::inference::{eigen_ratio, infer_oscillating, DEFAULT_K_MAX};
use branchfit_core::quad::adaptive;
use branchfit_core::sim::SimConfig;
use branchfit_core::spectral::critical_shape;
use branchfit_core::GammaLifetime;
use branchfit_core::Complex64;

use crate::{gridfile, parallel};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn spectral() -> Check {
    let mut worst: f64 = 0.0;
    for &k in &[1.0, 2.0, 4.0, 35.0, 70.0, 200.5] {
        let g = GammaLifetime::new(k, 1.0).unwrap();
        let a = g.malthusian_alpha();
        worst = worst.max((g.laplace(Complex64::new(a, 0.0)).unwrap() - 0.5).norm());
        for z in g.eigenvalue_set() {
            worst = worst.max((g.laplace(z).unwrap() - 0.5).norm());
        }
    }
    check("eigenvalue identities", worst < 1e-10, format!("max |Lg(ρ) - 1/2| = {worst:.2e}"))
}

fn critical() -> Check {
    let kc = critical_shape();
    let ok = (kc - 57.24).abs() < 0.01 && (1.0 / kc.sqrt() - 0.1322).abs() < 5e-4;
    check("critical shape", ok, format!("k_c = {kc:.7}, cv = {:.6}", 1.0 / kc.sqrt()))
}

fn mean_formula() -> Check {
    let mut worst: f64 = 0.0;
    for k in 1..=10 {
        let m = GammaLifetime::new(k as f64, 0.7).unwrap().mean_approx();
        worst = worst.max((m.eval(0.0).unwrap() - 1.0).abs());
    }
    let m = GammaLifetime::new(1.0, 2.0).unwrap().mean_approx();
    for &t in &[0.5, 3.0, 10.0] {
        worst = worst.max((m.eval(t).unwrap() / (t / 2.0).exp() - 1.0).abs());
    }
    check("closed-form mean", worst < 1e-9, format!("max deviation {worst:.2e}"))
}

fn age_density() -> Check {
    let g = GammaLifetime::new(35.0, 1.0).unwrap();
    let total = adaptive(|a| g.stationary_age_density(a).unwrap(), 0.0, 200.0, 1e-10, 1e-14).unwrap_or(f64::NAN);
    check("age density normalization", (total - 1.0).abs() < 1e-6, format!("∫p = {total:.9}"))
}

fn round_trip() -> Check {
    let c = (1.0f64 / 70.0).exp2();
    let r = infer_oscillating(c - 1.0, c * (2.0 * std::f64::consts::PI / 70.0).cos() - 1.0, DEFAULT_K_MAX);
    match r {
        Ok(e) => check(
            "oscillating round trip",
            (e.k_hat - 70.0).abs() < 1e-6 && (e.theta_hat - 1.0).abs() < 1e-8,
            format!("k̂ = {:.9}, θ̂ = {:.10}", e.k_hat, e.theta_hat),
        ),
        Err(e) => check("oscillating round trip", false, e.to_string()),
    }
}

fn ratio_monotone() -> Check {
    let kc = critical_shape();
    let ok = (1..500).all(|i| {
        let k0 = kc * 1.01f64.powi(i - 1);
        eigen_ratio(k0 * 1.01) > eigen_ratio(k0)
    });
    check("eigen ratio monotone above k_c", ok, String::new())
}

/// Exponential lifetimes: `Var(R_t^δ) / E[N_t] → e^{2δ} - e^{δ} = 2` at `δ = ln 2`.
fn exponential_oracle() -> Check {
    let law = GammaLifetime::new(1.0, 1.0).unwrap();
    let cfg = SimConfig::new(2024, LN_2, 11);
    let n = 2000;
    let ens = match parallel::simulate_ensemble(&cfg, &law, n, None) {
        Ok(e) => e,
        Err(e) => return check("exponential oracle", false, e.to_string()),
    };
    let i = 10;
    let r: Vec<f64> = ens
        .trajectories
        .iter()
        .map(|t| t.counts[i + 1] as f64 - 2.0 * t.counts[i] as f64)
        .collect();
    let m = r.iter().sum::<f64>() / n as f64;
    let var = r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
    let ratio = var / (i as f64 * LN_2).exp();
    check("exponential oracle", (ratio / 2.0 - 1.0).abs() < 0.1, format!("Var/E[N] = {ratio:.4}"))
}

fn grid(path: &Path) -> Check {
    match gridfile::load(path) {
        Ok(g) => {
            let mono = g.is_strictly_monotone();
            let jump = g.max_relative_jump();
            check(
                "sigma grid",
                mono && jump < 0.2,
                format!("{} nodes, monotone = {mono}, max jump = {jump:.3}", g.k_values.len()),
            )
        }
        Err(e) => check("sigma grid", false, e.to_string()),
    }
}

pub fn run(grid_file: Option<&Path>) -> Vec<Check> {
    let mut out = vec![
        spectral(),
        critical(),
        mean_formula(),
        age_density(),
        round_trip(),
        ratio_monotone(),
        exponential_oracle(),
    ];
    if let Some(p) = grid_file {
        out.push(grid(p));
    }
    out
}

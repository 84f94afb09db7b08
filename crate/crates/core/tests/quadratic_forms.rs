//! Monte Carlo checks of the limiting quadratic-form covariance.

use asymspec::harness::{centered_quadratic_form, run_trials, RunOptions};
use asymspec::model::{ExperimentConfig, VarianceProfile};
use asymspec::sampler::noise_pair;
use asymspec::theory::{qf_covariance, KernelPath, QfKind, QfSlots};

fn e(k: usize, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[k] = 1.0;
    v
}

/// `n · Var(uᵀ(X1X2ᵀ - z)⁻¹v + uᵀv/z)` over independent noise draws.
fn empirical(p: usize, n: usize, z: f64, u: &[f64], v: &[f64], trials: usize, seed: u64) -> f64 {
    let config = ExperimentConfig::null(p, n, trials, seed);
    let vals = run_trials(trials, RunOptions::default(), |t| {
        let (x1, x2) = noise_pair(&config, t)?;
        centered_quadratic_form(&x1.matmul_transpose(&x2)?, z, u, v)
    })
    .unwrap();
    let m = vals.iter().sum::<f64>() / trials as f64;
    n as f64 * vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (trials - 1) as f64
}

#[test]
fn diagonal_form_variance_matches_kernel_formula() {
    let (p, n, z) = (80, 200, 2.25);
    let u = e(0, p);
    let slots = QfSlots { x_i: &u, y_i: &u, x_j: &u, y_j: &u };
    let profile = VarianceProfile::ones(p, n);
    let pred = qf_covariance(&profile, z, QfKind::A, slots, KernelPath::Dense).unwrap();
    let c = p as f64 / n as f64;
    assert!((pred - 1.0 / (z.powi(4) * (1.0 - c / (z * z)))).abs() < 1e-12);
    let emp = empirical(p, n, z, &u, &u, 800, 5);
    assert!((emp / pred - 1.0).abs() < 0.2, "empirical {emp} vs predicted {pred}");
}

#[test]
fn off_diagonal_form_variance_matches_kernel_formula() {
    let (p, n, z) = (80, 200, 2.0);
    let (u, v) = (e(0, p), e(1, p));
    let slots = QfSlots { x_i: &u, y_i: &v, x_j: &u, y_j: &v };
    let profile = VarianceProfile::ones(p, n);
    let pred = qf_covariance(&profile, z, QfKind::A, slots, KernelPath::ShermanMorrison).unwrap();
    let emp = empirical(p, n, z, &u, &v, 800, 9);
    assert!((emp / pred - 1.0).abs() < 0.2, "empirical {emp} vs predicted {pred}");
}

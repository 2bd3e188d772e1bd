//! Built-in verification suites runnable from the CLI: Monte-Carlo checks of
//! the sphere-sampler moments against their closed forms, and the alternating
//! fit against the brute-force oracle on small random instances.

use crate::lowrank::{brute_force_factored_erm, fit_factored_erm, FitOptions, PooledBatch};
use crate::numerics::{dot, sample_gaussian, sample_sphere, Mat, Rng};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Closed-form sphere moments `E[x₁^p]` for p = 2, 4, 6.
pub fn sphere_moment_target(d: usize, power: u32) -> f64 {
    let df = d as f64;
    match power {
        2 => 1.0 / df,
        4 => 3.0 / (df * (df + 2.0)),
        6 => 15.0 / (df * (df + 2.0) * (df + 4.0)),
        _ => panic!("only even powers 2, 4, 6 are tabulated"),
    }
}

/// Monte-Carlo estimate of `E[x₁^p]` with its empirical standard error.
pub fn estimate_sphere_moment(d: usize, power: u32, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = Rng::new(seed);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..draws {
        let x = sample_sphere(d, 1.0, &mut rng).expect("valid arguments");
        let v = x[0].powi(power as i32);
        sum += v;
        sumsq += v * v;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Sphere-moment suite: `E[x₁²]`, `E[x₁⁴]`, `E[x₁⁶]` for d ∈ {2, 5, 10},
/// each within 3 standard errors over `draws` samples.
pub fn moment_suite(draws: usize, seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (i, &d) in [2usize, 5, 10].iter().enumerate() {
        for (j, &power) in [2u32, 4, 6].iter().enumerate() {
            let (estimate, se) = estimate_sphere_moment(d, power, draws, seed + (i * 3 + j) as u64);
            let target = sphere_moment_target(d, power);
            let passed = (estimate - target).abs() <= 3.0 * se;
            out.push(CheckResult {
                name: format!("sphere moment E[x1^{power}] at d={d}"),
                passed,
                detail: format!("estimate {estimate:.6e}, target {target:.6e}, se {se:.2e}"),
            });
        }
    }
    out
}

/// Fit-vs-oracle suite on random small instances (d ≤ 3, k = 1).
pub fn als_oracle_suite(instances: usize, seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut rng = Rng::new(seed);
    for trial in 0..instances {
        let d = 2 + trial % 2;
        let t_count = 1 + trial % 3;
        let samples = 10 + 2 * (trial % 11);
        let chol = Mat::identity(d);
        let mut batch = PooledBatch::new(d, t_count);
        for t in 0..t_count {
            let theta: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            for _ in 0..samples {
                let x = sample_gaussian(&vec![0.0; d], &chol, &mut rng).expect("valid shapes");
                let r = dot(&x, &theta) + 0.5 * rng.standard_normal();
                batch.push_sample(t, &x, r).expect("valid sample");
            }
        }
        let brute = brute_force_factored_erm(&batch, 1, 10_000);
        let fit = fit_factored_erm(
            &batch,
            1,
            &Rng::new(seed ^ trial as u64),
            FitOptions {
                restarts: 8,
                ..FitOptions::default()
            },
        );
        let (passed, detail) = match (&brute, &fit) {
            (Ok((_, brute_loss)), Ok((_, report))) => {
                let ok = report.loss <= brute_loss + 1e-4 * (1.0 + brute_loss);
                (
                    ok,
                    format!(
                        "fit loss {:.6e}, oracle loss {:.6e}",
                        report.loss, brute_loss
                    ),
                )
            }
            _ => (false, "solver returned an error".to_string()),
        };
        out.push(CheckResult {
            name: format!("factored fit vs grid oracle #{trial} (d={d}, T={t_count})"),
            passed,
            detail,
        });
    }
    out
}

/// Full self-test as exposed by the CLI.
pub fn selftest() -> SelftestReport {
    let mut checks = moment_suite(1_000_000, 20_240_601);
    checks.extend(als_oracle_suite(10, 42));
    SelftestReport { checks }
}

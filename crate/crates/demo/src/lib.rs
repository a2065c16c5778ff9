//! Browser bindings for three interactive views: the finite-time bound as a
//! function of the regularization level, the variance profile `f(λ)` with its
//! minimizer, and the risk of uniform, geometric and tail averages along one
//! simulated SGD run.
//!
//! Every instance here is diagonal with spectrum `s_i = i^(-decay)`,
//! `w* = ones/√d` and `w_0 = 0`, and uses the largest admissible stepsize
//! `η = 1/(2R²)`. Results are flat `Float64Array`s of fixed-width records.

use geoavg::averaging::{average, AveragingScheme};
use geoavg::experiment::lambda_for_level;
use geoavg::problem::{make_instance, moment_constants, sample_stream};
use geoavg::risk::{
    excess_risk, find_lambda_star_spectrum, theorem1_bound, variance_profile_spectrum, BoundInputs,
};
use geoavg::sgd::run;
use geoavg::{CovariateLaw, ProblemInstance, SgdConfig, Vector};
use wasm_bindgen::prelude::*;

const MAX_DIM: usize = 200;
const MAX_N: usize = 200_000;

fn spectrum(d: usize, decay: f64) -> Vec<f64> {
    (1..=d).map(|i| (i as f64).powf(-decay)).collect()
}

fn instance(d: usize, decay: f64, sigma: f64) -> Result<ProblemInstance, String> {
    if d == 0 || d > MAX_DIM {
        return Err(format!("dimension must be in 1..={MAX_DIM}"));
    }
    if !(0.0..=4.0).contains(&decay) {
        return Err("decay must be in [0, 4]".into());
    }
    let w_star = vec![1.0 / (d as f64).sqrt(); d];
    make_instance(
        d,
        &spectrum(d, decay),
        &w_star,
        sigma,
        CovariateLaw::Gaussian,
        None,
    )
    .map_err(|e| e.to_string())
}

fn check_n(n: usize) -> Result<(), String> {
    if n == 0 || n > MAX_N {
        return Err(format!("n must be in 1..={MAX_N}"));
    }
    Ok(())
}

fn eta_max(inst: &ProblemInstance) -> Result<f64, String> {
    let r2 = moment_constants(inst).map_err(|e| e.to_string())?.r_squared;
    Ok(1.0 / (2.0 * r2))
}

/// Records `[c, bound, variance, bias1, bias2]` for `points` levels
/// `c = γλ(n+1)` spaced logarithmically over `[0.01, n/2]`, preceded by `c = 0`.
pub fn bound_curve_records(
    d: usize,
    decay: f64,
    sigma: f64,
    n: usize,
    points: usize,
) -> Result<Vec<f64>, String> {
    check_n(n)?;
    let inst = instance(d, decay, sigma)?;
    let eta = eta_max(&inst)?;
    let (lo, hi) = (0.01f64.ln(), (n as f64 / 2.0).max(0.02).ln());
    let mut levels = vec![0.0];
    let steps = points.clamp(2, 400);
    levels.extend((0..steps).map(|k| (lo + (hi - lo) * k as f64 / (steps - 1) as f64).exp()));
    let mut out = Vec::with_capacity(5 * levels.len());
    for c in levels {
        let lambda = lambda_for_level(eta, c, n);
        let inputs = BoundInputs::from_eta(&inst, eta, lambda, n, Vector::zeros(d))
            .map_err(|e| e.to_string())?;
        let r = theorem1_bound(&inputs).map_err(|e| e.to_string())?;
        out.extend([
            c,
            r.bound_total,
            r.variance_term,
            r.bias_term_1,
            r.bias_term_2,
        ]);
    }
    Ok(out)
}

/// Records `[λ, f(λ)]` on a uniform grid over `[0, s_1]`.
pub fn variance_curve_records(
    d: usize,
    decay: f64,
    gamma: f64,
    n: usize,
    points: usize,
) -> Result<Vec<f64>, String> {
    check_n(n)?;
    instance(d, decay, 0.0)?;
    let s = spectrum(d, decay);
    let steps = points.clamp(2, 2000);
    let mut out = Vec::with_capacity(2 * steps);
    for k in 0..steps {
        let lambda = s[0] * k as f64 / (steps - 1) as f64;
        out.extend([lambda, variance_profile_spectrum(&s, gamma, n, lambda).0]);
    }
    Ok(out)
}

/// `[λ*, f(λ*), f(0)]`, with `λ* = NaN` when regularization does not help.
pub fn lambda_star_record(d: usize, decay: f64, gamma: f64, n: usize) -> Result<Vec<f64>, String> {
    check_n(n)?;
    instance(d, decay, 0.0)?;
    let s = spectrum(d, decay);
    let f0 = variance_profile_spectrum(&s, gamma, n, 0.0).0;
    Ok(match find_lambda_star_spectrum(&s, gamma, n) {
        Some(l) => vec![l, variance_profile_spectrum(&s, gamma, n, l).0, f0],
        None => vec![f64::NAN, f64::NAN, f0],
    })
}

/// One plain SGD run of length `n`; records `[t, uniform, geometric, tail]`
/// with the excess risk of each average of `w_0..w_t` at `horizons` evenly
/// spaced values of `t`. The geometric average uses `ρ = 1 − γλ` for
/// `λ = lambda_level/(γ(n+1))`; the tail average starts at `t/2`.
pub fn simulate_records(
    d: usize,
    decay: f64,
    sigma: f64,
    n: usize,
    lambda_level: f64,
    horizons: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    check_n(n)?;
    let inst = instance(d, decay, sigma)?;
    let eta = eta_max(&inst)?;
    if !(lambda_level > 0.0 && lambda_level < (n + 1) as f64) {
        return Err("level must be in (0, n+1)".into());
    }
    let lambda = lambda_for_level(eta, lambda_level, n);
    let gamma = eta / (1.0 + eta * lambda);
    let rho = 1.0 - gamma * lambda;
    let trace = run(
        sample_stream(&inst, n, seed),
        &SgdConfig::plain(eta),
        d,
        None,
        "demo",
    )
    .map_err(|e| e.to_string())?;
    let steps = horizons.clamp(1, 200);
    let mut out = Vec::with_capacity(4 * steps);
    for k in 1..=steps {
        let t = (n * k / steps).max(1);
        let prefix = trace.iterates.slice(0..t + 1).map_err(|e| e.to_string())?;
        let mut row = vec![t as f64];
        for scheme in [
            AveragingScheme::Uniform,
            AveragingScheme::Geometric { rho },
            AveragingScheme::Tail { tau: t / 2 },
        ] {
            let w = average(&prefix, &scheme).map_err(|e| e.to_string())?;
            row.push(excess_risk(&w, &inst).map_err(|e| e.to_string())?);
        }
        out.extend(row);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn bound_curve(
    d: usize,
    decay: f64,
    sigma: f64,
    n: usize,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    bound_curve_records(d, decay, sigma, n, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn variance_curve(
    d: usize,
    decay: f64,
    gamma: f64,
    n: usize,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    variance_curve_records(d, decay, gamma, n, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn lambda_star(d: usize, decay: f64, gamma: f64, n: usize) -> Result<Vec<f64>, JsError> {
    lambda_star_record(d, decay, gamma, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(
    d: usize,
    decay: f64,
    sigma: f64,
    n: usize,
    lambda_level: f64,
    horizons: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    simulate_records(d, decay, sigma, n, lambda_level, horizons, seed as u64)
        .map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_curve_shape_and_sum() {
        let r = bound_curve_records(10, 1.0, 0.5, 1000, 20).unwrap();
        assert_eq!(r.len(), 5 * 21);
        assert_eq!(r[0], 0.0);
        for rec in r.chunks(5) {
            assert!((rec[1] - rec[2] - rec[3] - rec[4]).abs() <= 1e-12 * rec[1]);
        }
    }

    #[test]
    fn variance_curve_starts_at_d_over_n() {
        let r = variance_curve_records(10, 2.0, 0.1, 50, 11).unwrap();
        assert_eq!(r.len(), 22);
        assert!((r[1] - 10.0 / 50.0).abs() < 1e-15);
        assert!((r[20] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_star_present_and_absent() {
        let ill = lambda_star_record(10, 2.0, 0.1, 50).unwrap();
        assert!(ill[1] < ill[2]);
        let flat = lambda_star_record(10, 0.0, 0.1, 1000).unwrap();
        assert!(flat[0].is_nan());
    }

    #[test]
    fn simulate_is_deterministic() {
        let a = simulate_records(5, 1.0, 0.5, 400, 2.0, 8, 3).unwrap();
        let b = simulate_records(5, 1.0, 0.5, 400, 2.0, 8, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        assert_eq!(a[28], 400.0);
        assert!(a.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(bound_curve_records(0, 1.0, 0.5, 100, 5).is_err());
        assert!(variance_curve_records(5, 1.0, 0.1, 0, 5).is_err());
        assert!(simulate_records(5, 1.0, 0.5, 100, 200.0, 4, 1).is_err());
    }
}

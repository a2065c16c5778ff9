//! Closed-form quantities of the population problem: ridge solutions,
//! excess risk, finite-time excess-risk bounds for geometric averaging, the
//! variance profile that decides when `λ > 0` helps, and numerical checks
//! that averaged plain SGD and Tikhonov-regularized SGD agree in expectation.
//!
//! Spectral functionals are evaluated per eigenvalue on the stored spectrum.
//!
//! Expected-iterate indexing used by the equivalence checks: `E[w_t]` and
//! `E[ŵ_t]` denote the closed-form sums `η Σ_{k=0}^t (I − ηΣ)^k E[xy]` and
//! `γ Σ_{k=0}^t (I − γΣ − γλI)^k E[xy]`, i.e. the one-step recursions
//! started from zero and advanced by `t + 1` steps. Under this indexing the
//! limit of the geometric average is `(η/γ)(Σ + λI)⁻¹E[xy]` and the exact
//! finite-`t` relation is
//! `E[ŵ_t] = (γ/η)[(1 − ρ^{t+1}) E[w̃_t] + ρ^{t+1} E[w_t]]`, `ρ = 1 − γλ`.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::averaging::OnlineAverageState;
use crate::error::{GeoAvgError, Result};
use crate::problem::{moment_constants, MomentConstants, ProblemInstance};
use crate::sgd::ExpectedIterates;
use crate::spectral::SpectralMatrix;
use crate::{Matrix, Vector};

/// Relative slack for stepsize preconditions that are often set to equality.
const PRECONDITION_SLACK: f64 = 1e-12;

/// `(Σ + λI)⁻¹ E[xy]`.
pub fn ridge_solution(sigma: &SpectralMatrix, exy: &Vector, lambda: f64) -> Result<Vector> {
    if exy.len() != sigma.dim() {
        return Err(GeoAvgError::DimensionMismatch {
            expected: sigma.dim(),
            found: exy.len(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(GeoAvgError::Range(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    if lambda == 0.0 && !(sigma.smallest() > 0.0) {
        return Err(GeoAvgError::Singular);
    }
    Ok(sigma.apply_fn(exy, |s| 1.0 / (s + lambda)))
}

/// `Δ(w) = (w − w*)ᵀ Σ (w − w*)`.
pub fn excess_risk(w: &Vector, instance: &ProblemInstance) -> Result<f64> {
    if w.len() != instance.dim() {
        return Err(GeoAvgError::DimensionMismatch {
            expected: instance.dim(),
            found: w.len(),
        });
    }
    let diff = w - instance.w_star();
    Ok(instance.covariance().quad_form_fn(&diff, |s| s).max(0.0))
}

/// Parameters of a bound evaluation, with `η = γ / (1 − γλ)`.
#[derive(Debug, Clone)]
pub struct BoundInputs<'a> {
    pub instance: &'a ProblemInstance,
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub n: usize,
    pub w0: Vector,
    pub moments: MomentConstants,
}

impl<'a> BoundInputs<'a> {
    /// From the SGD stepsize `η`; `γ = η / (1 + ηλ)`.
    pub fn from_eta(
        instance: &'a ProblemInstance,
        eta: f64,
        lambda: f64,
        n: usize,
        w0: Vector,
    ) -> Result<Self> {
        Self::build(instance, eta, eta / (1.0 + eta * lambda), lambda, n, w0)
    }

    /// From the regularized stepsize `γ`; `η = γ / (1 − γλ)`.
    pub fn from_gamma(
        instance: &'a ProblemInstance,
        gamma: f64,
        lambda: f64,
        n: usize,
        w0: Vector,
    ) -> Result<Self> {
        if !(gamma * lambda < 1.0) {
            return Err(GeoAvgError::Range(format!(
                "gamma * lambda = {} must be below 1",
                gamma * lambda
            )));
        }
        Self::build(
            instance,
            gamma / (1.0 - gamma * lambda),
            gamma,
            lambda,
            n,
            w0,
        )
    }

    fn build(
        instance: &'a ProblemInstance,
        eta: f64,
        gamma: f64,
        lambda: f64,
        n: usize,
        w0: Vector,
    ) -> Result<Self> {
        if w0.len() != instance.dim() {
            return Err(GeoAvgError::DimensionMismatch {
                expected: instance.dim(),
                found: w0.len(),
            });
        }
        if !(eta > 0.0) || !(lambda >= 0.0) {
            return Err(GeoAvgError::Range(format!(
                "need eta > 0 and lambda >= 0, got {eta}, {lambda}"
            )));
        }
        Ok(Self {
            instance,
            eta,
            gamma,
            lambda,
            n,
            moments: moment_constants(instance)?,
            w0,
        })
    }

    pub fn gamma_lambda(&self) -> f64 {
        self.gamma * self.lambda
    }

    /// Initial error in eigen-coordinates, `Bᵀ(w0 − w*)`.
    fn initial_error(&self) -> Vector {
        self.instance
            .covariance()
            .to_eigen(&(&self.w0 - self.instance.w_star()))
    }

    fn check_consistent(&self) -> Result<()> {
        let implied = self.gamma / (1.0 - self.gamma_lambda());
        if !(self.gamma_lambda() < 1.0) || (implied - self.eta).abs() > 1e-12 * self.eta {
            return Err(GeoAvgError::BoundInapplicable(format!(
                "stepsizes are inconsistent: eta = {}, gamma = {}, lambda = {}",
                self.eta, self.gamma, self.lambda
            )));
        }
        Ok(())
    }

    fn check_lambda_range(&self) -> Result<()> {
        if self.lambda < 0.0 || self.eta * self.lambda >= 1.0 {
            return Err(GeoAvgError::BoundInapplicable(format!(
                "lambda = {} outside [0, 1/eta) = [0, {})",
                self.lambda,
                1.0 / self.eta
            )));
        }
        Ok(())
    }
}

/// Bound terms, optionally paired with a Monte Carlo estimate of the
/// expected excess risk they bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
    pub n: usize,
    pub excess_risk: Option<f64>,
    pub stderr: Option<f64>,
    pub variance_term: f64,
    pub bias_term_1: f64,
    pub bias_term_2: f64,
    pub bound_total: f64,
    pub satisfied: Option<bool>,
}

/// Column order of the comparison-table CSV.
pub const REPORT_CSV_HEADER: &str =
    "lambda,gamma,n,excess_risk_mc,stderr,bound_total,variance_term,bias_term_1,bias_term_2,satisfied";

impl RiskReport {
    fn from_terms(
        inputs: &BoundInputs<'_>,
        variance_term: f64,
        bias_term_1: f64,
        bias_term_2: f64,
    ) -> Self {
        Self {
            lambda: inputs.lambda,
            gamma: inputs.gamma,
            eta: inputs.eta,
            n: inputs.n,
            excess_risk: None,
            stderr: None,
            variance_term,
            bias_term_1,
            bias_term_2,
            bound_total: variance_term + bias_term_1 + bias_term_2,
            satisfied: None,
        }
    }

    /// Attaches an estimate; the check is one-sided: `mean ≤ bound + 3·stderr`.
    pub fn with_estimate(mut self, mean: f64, stderr: f64) -> Self {
        self.excess_risk = Some(mean);
        self.stderr = Some(stderr);
        self.satisfied = Some(mean <= self.bound_total + 3.0 * stderr);
        self
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.lambda,
            self.gamma,
            self.n,
            opt(self.excess_risk),
            opt(self.stderr),
            self.bound_total,
            self.variance_term,
            self.bias_term_1,
            self.bias_term_2,
            self.satisfied.map(|b| b.to_string()).unwrap_or_default()
        )
    }
}

/// The finite-time bound on `E[Δ(w̃_n)]` for geometric averaging with
/// `ρ = 1 − γλ` over plain SGD with stepsize `η`. Requires `η ≤ 1/(2R²)` and
/// `λ ∈ [0, 1/η)`.
pub fn theorem1_bound(inputs: &BoundInputs<'_>) -> Result<RiskReport> {
    inputs.check_consistent()?;
    inputs.check_lambda_range()?;
    let r2 = inputs.moments.r_squared;
    if inputs.eta > (1.0 + PRECONDITION_SLACK) / (2.0 * r2) {
        return Err(GeoAvgError::BoundInapplicable(format!(
            "eta = {} exceeds 1/(2R^2) = {}",
            inputs.eta,
            1.0 / (2.0 * r2)
        )));
    }
    let cov = inputs.instance.covariance();
    let (gamma, lambda) = (inputs.gamma, inputs.lambda);
    let gl = inputs.gamma_lambda();
    let m = inputs.n as f64 + 1.0;
    let sigma2 = inputs.moments.sigma_squared;

    let effective_dim = cov.trace_fn(|s| (s / (s + lambda)).powi(2));
    let averaging_factor = gl / (2.0 - gl) + 2.0 / ((2.0 - gl) * m);
    let variance =
        4.0 / (1.0 - gl) * averaging_factor * sigma2 * effective_dim / (2.0 - inputs.eta * r2);

    let e = inputs.initial_error();
    let lead = (lambda + 1.0 / (gamma * m)).powi(2);
    let half = 0.5 * lambda;
    let weighted_sq: f64 = e
        .iter()
        .zip(cov.eigenvalues().iter())
        .map(|(&c, &s)| s * c * c / ((s + half) * (s + half)))
        .sum();
    let bias1 = 2.0 * lead * weighted_sq;
    let dof = cov.trace_fn(|s| s / (s + lambda));
    let inv_half: f64 = e
        .iter()
        .zip(cov.eigenvalues().iter())
        .map(|(&c, &s)| c * c / (s + half))
        .sum();
    let bias2 = lead * dof * inv_half;
    Ok(RiskReport::from_terms(inputs, variance, bias1, bias2))
}

/// Reference bound for regularized averaged SGD, evaluated as printed:
/// `σ² tr(Σ²(Σ+λI)⁻²)/n + (λ + 1/(ηn))² ‖Σ^{1/2}(Σ+λI)⁻¹(w0 − w*)‖`.
/// Used for side-by-side tables only.
pub fn dfb_reference_bound(inputs: &BoundInputs<'_>) -> Result<f64> {
    if inputs.n == 0 {
        return Err(GeoAvgError::Range("reference bound needs n >= 1".into()));
    }
    let cov = inputs.instance.covariance();
    let lambda = inputs.lambda;
    let n = inputs.n as f64;
    let variance = inputs.moments.sigma_squared * cov.trace_fn(|s| (s / (s + lambda)).powi(2)) / n;
    let e = inputs.initial_error();
    let norm_sq: f64 = e
        .iter()
        .zip(cov.eigenvalues().iter())
        .map(|(&c, &s)| s * c * c / ((s + lambda) * (s + lambda)))
        .sum();
    Ok(variance + (lambda + 1.0 / (inputs.eta * n)).powi(2) * norm_sq.sqrt())
}

/// Smallest `τ²` with `V ⪯ τ² Σ`, after checking `V` is symmetric PSD.
pub fn noise_domination(instance: &ProblemInstance, v: &Matrix) -> Result<f64> {
    let d = instance.dim();
    if v.nrows() != d || v.ncols() != d {
        return Err(GeoAvgError::DimensionMismatch {
            expected: d,
            found: v.nrows(),
        });
    }
    let scale = v.amax().max(f64::MIN_POSITIVE);
    if (v - v.transpose()).amax() > 1e-10 * scale {
        return Err(GeoAvgError::InvalidNoise("matrix is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(v.clone());
    if eig.eigenvalues.min() < -1e-10 * scale {
        return Err(GeoAvgError::InvalidNoise(format!(
            "matrix is not positive semidefinite (eigenvalue {:e})",
            eig.eigenvalues.min()
        )));
    }
    let cov = instance.covariance();
    let b = cov.basis();
    let inv_sqrt = cov.eigenvalues().map(|s| 1.0 / s.sqrt());
    let whitened = Matrix::from_fn(d, d, |i, j| inv_sqrt[i] * inv_sqrt[j])
        .component_mul(&(b.transpose() * v * b));
    Ok(SymmetricEigen::new(whitened).eigenvalues.max().max(0.0))
}

/// Terms of the additive-noise bound: variance
/// `(η/γ)² (γλ/(2−γλ) + 2/((2−γλ)(n+1))) tr(Σ(Σ+λI)⁻²V)` and bias
/// `(λ + 1/(γ(n+1)))² ‖Σ^{1/2}(Σ+λI)⁻¹(w0 − w*)‖²`. Reported as a
/// [`RiskReport`] with `bias_term_2 = 0`.
pub fn additive_report(inputs: &BoundInputs<'_>, v: &Matrix) -> Result<RiskReport> {
    inputs.check_consistent()?;
    inputs.check_lambda_range()?;
    noise_domination(inputs.instance, v)?;
    let cov = inputs.instance.covariance();
    if inputs.eta * cov.largest() > 1.0 + PRECONDITION_SLACK {
        return Err(GeoAvgError::BoundInapplicable(format!(
            "eta = {} exceeds 1/s_1 = {}",
            inputs.eta,
            1.0 / cov.largest()
        )));
    }
    let (gamma, lambda) = (inputs.gamma, inputs.lambda);
    let gl = inputs.gamma_lambda();
    let m = inputs.n as f64 + 1.0;
    let rotated = cov.basis().transpose() * v * cov.basis();
    let weighted_trace: f64 = cov
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &s)| s / ((s + lambda) * (s + lambda)) * rotated[(i, i)])
        .sum();
    let variance =
        (inputs.eta / gamma).powi(2) * (gl / (2.0 - gl) + 2.0 / ((2.0 - gl) * m)) * weighted_trace;
    let e = inputs.initial_error();
    let norm_sq: f64 = e
        .iter()
        .zip(cov.eigenvalues().iter())
        .map(|(&c, &s)| s * c * c / ((s + lambda) * (s + lambda)))
        .sum();
    let bias = (lambda + 1.0 / (gamma * m)).powi(2) * norm_sq;
    Ok(RiskReport::from_terms(inputs, variance, bias, 0.0))
}

pub fn additive_bound(inputs: &BoundInputs<'_>, v: &Matrix) -> Result<f64> {
    Ok(additive_report(inputs, v)?.bound_total)
}

/// `f(λ) = (γλ/2 + 1/n) Σ s_i²/(s_i+λ)²` and its derivative.
pub fn variance_profile(
    instance: &ProblemInstance,
    gamma: f64,
    n: usize,
    lambda: f64,
) -> (f64, f64) {
    variance_profile_spectrum(instance.spectrum().as_slice(), gamma, n, lambda)
}

pub fn variance_profile_spectrum(
    spectrum: &[f64],
    gamma: f64,
    n: usize,
    lambda: f64,
) -> (f64, f64) {
    let lead = 0.5 * gamma * lambda + 1.0 / n as f64;
    let mut sq = 0.0;
    let mut cube = 0.0;
    for &s in spectrum {
        let r = s / (s + lambda);
        sq += r * r;
        cube += r * r / (s + lambda);
    }
    (lead * sq, 0.5 * gamma * sq - 2.0 * lead * cube)
}

/// A level `λ* ∈ (0, s₁]` with `f(λ*) < f(0) = d/n`, searched only when
/// `f′(0) = γd/2 − 2 tr(Σ⁻¹)/n < 0`: coarse log-spaced bracket followed by
/// golden-section refinement.
pub fn find_lambda_star(instance: &ProblemInstance, gamma: f64, n: usize) -> Option<f64> {
    find_lambda_star_spectrum(instance.spectrum().as_slice(), gamma, n)
}

pub fn find_lambda_star_spectrum(spectrum: &[f64], gamma: f64, n: usize) -> Option<f64> {
    let f = |l: f64| variance_profile_spectrum(spectrum, gamma, n, l).0;
    let (f0, slope0) = variance_profile_spectrum(spectrum, gamma, n, 0.0);
    if !(slope0 < 0.0) {
        return None;
    }
    let upper = spectrum.iter().cloned().fold(0.0, f64::max);
    const GRID: usize = 64;
    let mut grid = vec![0.0];
    grid.extend((0..=GRID).map(|k| upper * 10f64.powf(-8.0 * (GRID - k) as f64 / GRID as f64)));
    let values: Vec<f64> = grid.iter().map(|&l| f(l)).collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("nonempty grid");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (mut a, mut b) = (lo, hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * upper {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut star = 0.5 * (a + b);
    if values[best] < f(star) {
        star = grid[best];
    }
    (star > 0.0 && f(star) < f0).then_some(star)
}

/// Outcome of the infinite-horizon equivalence check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub steps: usize,
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// `‖E[ŵ_T] − (Σ+λI)⁻¹E[xy]‖`.
    pub residual_regularized: f64,
    /// `‖(γ/η) E[w̃_T] − (Σ+λI)⁻¹E[xy]‖`.
    pub residual_averaged: f64,
    /// Asymptotic decay factor of both residuals, `max(1−γλ, 1−γs_d−γλ)`.
    pub decay_bound: f64,
}

fn closed_form_sequences<'a>(
    instance: &'a ProblemInstance,
    gamma: f64,
    lambda: f64,
) -> Result<(ExpectedIterates<'a>, ExpectedIterates<'a>, f64)> {
    if !(gamma > 0.0) || !(lambda >= 0.0) || !(gamma * lambda < 1.0) {
        return Err(GeoAvgError::Range(format!(
            "need gamma > 0, lambda >= 0 and gamma * lambda < 1, got {gamma}, {lambda}"
        )));
    }
    let eta = gamma / (1.0 - gamma * lambda);
    let zero = Vector::zeros(instance.dim());
    // Closed-form indexing: drop the zero starting point.
    let mut w = ExpectedIterates::from_step(instance, eta, 0.0, &zero);
    let mut w_hat = ExpectedIterates::from_step(instance, gamma, lambda, &zero);
    w.next();
    w_hat.next();
    Ok((w, w_hat, eta))
}

/// Residual pair `(‖E[ŵ_t] − r‖, ‖(γ/η)E[w̃_t] − r‖)` for `t = 0 … max_t`,
/// `r = (Σ+λI)⁻¹E[xy]`.
pub fn limit_residual_series(
    instance: &ProblemInstance,
    gamma: f64,
    lambda: f64,
    max_t: usize,
) -> Result<Vec<(f64, f64)>> {
    let (w, w_hat, eta) = closed_form_sequences(instance, gamma, lambda)?;
    let ridge = ridge_solution(instance.covariance(), &instance.exy(), lambda)?;
    let rho = 1.0 - gamma * lambda;
    let mut avg = OnlineAverageState::new(instance.dim());
    let mut out = Vec::with_capacity(max_t + 1);
    for (wt, wh) in w.zip(w_hat).take(max_t + 1) {
        avg.update(wt.as_slice(), rho);
        let r_reg = (wh - &ridge).norm();
        let r_avg = (&avg.current * (gamma / eta) - &ridge).norm();
        out.push((r_reg, r_avg));
    }
    Ok(out)
}

/// Iterates both expected recursions for `max_t` steps and checks that
/// `E[ŵ_T]` and `(γ/η)E[w̃_T]` reach the ridge solution within `tol`.
pub fn verify_limit_equivalence(
    instance: &ProblemInstance,
    gamma: f64,
    lambda: f64,
    tol: f64,
    max_t: usize,
) -> Result<LimitReport> {
    let b2 = instance.covariance().largest();
    if gamma > (1.0 + PRECONDITION_SLACK) / b2 {
        return Err(GeoAvgError::Range(format!(
            "gamma = {gamma} exceeds 1/B^2 = {}",
            1.0 / b2
        )));
    }
    let series = limit_residual_series(instance, gamma, lambda, max_t)?;
    let &(residual_regularized, residual_averaged) = series.last().expect("max_t + 1 entries");
    let rho = 1.0 - gamma * lambda;
    let report = LimitReport {
        steps: max_t,
        eta: gamma / rho,
        gamma,
        lambda,
        residual_regularized,
        residual_averaged,
        decay_bound: rho.max(1.0 - gamma * instance.covariance().smallest() - gamma * lambda),
    };
    let worst = residual_regularized.max(residual_averaged);
    if !(worst <= tol) {
        return Err(GeoAvgError::Convergence {
            steps: max_t,
            residual: worst,
            tol,
        });
    }
    Ok(report)
}

/// Residuals of the finite-horizon relation at one `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteResidual {
    pub t: usize,
    /// `‖E[ŵ_t] − (γ/η)(1 − ρ^t) E[w̃_t]‖`.
    pub r_paper: f64,
    /// `‖E[ŵ_t] − (γ/η)[(1 − ρ^{t+1})E[w̃_t] + ρ^{t+1}E[w_t]]‖`.
    pub r_exact: f64,
}

pub fn finite_equivalence_series(
    instance: &ProblemInstance,
    gamma: f64,
    lambda: f64,
    max_t: usize,
) -> Result<Vec<FiniteResidual>> {
    let (w, w_hat, eta) = closed_form_sequences(instance, gamma, lambda)?;
    let rho = 1.0 - gamma * lambda;
    let ratio = gamma / eta;
    let log_rho = (-gamma * lambda).ln_1p();
    let mut avg = OnlineAverageState::new(instance.dim());
    let mut out = Vec::with_capacity(max_t + 1);
    for (t, (wt, wh)) in w.zip(w_hat).take(max_t + 1).enumerate() {
        avg.update(wt.as_slice(), rho);
        let rho_t = (t as f64 * log_rho).exp();
        let rho_t1 = rho_t * rho;
        let printed = &avg.current * (ratio * (1.0 - rho_t));
        let corrected = (&avg.current * (1.0 - rho_t1) + &wt * rho_t1) * ratio;
        out.push(FiniteResidual {
            t,
            r_paper: (&wh - printed).norm(),
            r_exact: (&wh - corrected).norm(),
        });
    }
    Ok(out)
}

pub fn verify_finite_equivalence(
    instance: &ProblemInstance,
    gamma: f64,
    lambda: f64,
    t: usize,
) -> Result<FiniteResidual> {
    Ok(*finite_equivalence_series(instance, gamma, lambda, t)?
        .last()
        .expect("t + 1 entries"))
}

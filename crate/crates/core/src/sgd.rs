//! The SGD recursions for least squares and their expected-iterate
//! counterparts.
//!
//! * plain: `w_t = w_{t-1} − η (x_t⟨x_t, w_{t-1}⟩ − x_t y_t)`
//! * Tikhonov: `ŵ_t = ŵ_{t-1} − γ (x_t⟨x_t, ŵ_{t-1}⟩ − x_t y_t + λ ŵ_{t-1})`
//! * additive noise: `w_t = w_{t-1} − η (Σ w_{t-1} − x_t y_t + λ w_{t-1})`,
//!   which needs the true covariance and is only used for verification.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GeoAvgError, Result};
use crate::problem::{ProblemInstance, Sample};
use crate::spectral::SpectralMatrix;
use crate::trace::Iterates;
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgdMode {
    Plain,
    Tikhonov,
    AdditiveNoisePlain,
    AdditiveNoiseReg,
}

impl std::str::FromStr for SgdMode {
    type Err = GeoAvgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Self::Plain),
            "tikhonov" => Ok(Self::Tikhonov),
            "additive_noise_plain" => Ok(Self::AdditiveNoisePlain),
            "additive_noise_reg" => Ok(Self::AdditiveNoiseReg),
            other => Err(GeoAvgError::Config(format!("unknown SGD mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub eta: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_mode")]
    pub mode: SgdMode,
    /// Initial point; empty means the zero vector.
    #[serde(default)]
    pub w0: Vec<f64>,
}

fn default_mode() -> SgdMode {
    SgdMode::Plain
}

impl SgdConfig {
    pub fn plain(eta: f64) -> Self {
        Self {
            eta,
            lambda: 0.0,
            mode: SgdMode::Plain,
            w0: Vec::new(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_mode(mut self, mode: SgdMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_w0(mut self, w0: &[f64]) -> Self {
        self.w0 = w0.to_vec();
        self
    }

    /// Regularized stepsize `γ = η / (1 + ηλ)`, the inverse of
    /// `η = γ / (1 − γλ)`.
    pub fn gamma(&self) -> f64 {
        self.eta / (1.0 + self.eta * self.lambda)
    }

    pub fn initial_point(&self, dim: usize) -> Result<Vector> {
        if self.w0.is_empty() {
            return Ok(Vector::zeros(dim));
        }
        if self.w0.len() != dim {
            return Err(GeoAvgError::DimensionMismatch {
                expected: dim,
                found: self.w0.len(),
            });
        }
        Ok(Vector::from_column_slice(&self.w0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(GeoAvgError::Range(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.lambda >= 0.0) || !(self.eta * self.lambda < 1.0) {
            return Err(GeoAvgError::Range(format!(
                "lambda must lie in [0, 1/eta) = [0, {}), got {}",
                1.0 / self.eta,
                self.lambda
            )));
        }
        if self.w0.iter().any(|v| !v.is_finite()) {
            return Err(GeoAvgError::Range("w0 has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Stored iterates `w_0 … w_n` plus what produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    pub iterates: Iterates,
    pub config: SgdConfig,
    pub source: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceSidecar {
    config: SgdConfig,
    source: String,
    dim: usize,
    len: usize,
}

impl IterateTrace {
    /// Writes `<prefix>.csv` (one iterate per row) and `<prefix>.json`
    /// (configuration sidecar). Returns both paths.
    pub fn save(&self, prefix: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let (csv_path, json_path) = sidecar_paths(prefix.as_ref());
        self.iterates.write_csv(File::create(&csv_path)?)?;
        let sidecar = TraceSidecar {
            config: self.config.clone(),
            source: self.source.clone(),
            dim: self.iterates.dim(),
            len: self.iterates.len(),
        };
        serde_json::to_writer_pretty(File::create(&json_path)?, &sidecar)?;
        Ok((csv_path, json_path))
    }

    pub fn load(prefix: impl AsRef<Path>) -> Result<Self> {
        let (csv_path, json_path) = sidecar_paths(prefix.as_ref());
        let sidecar: TraceSidecar = serde_json::from_reader(File::open(json_path)?)?;
        let iterates = Iterates::read_csv(File::open(csv_path)?)?;
        if iterates.dim() != sidecar.dim || iterates.len() != sidecar.len {
            return Err(GeoAvgError::Config(format!(
                "trace file has {}x{} values but sidecar declares {}x{}",
                iterates.len(),
                iterates.dim(),
                sidecar.len,
                sidecar.dim
            )));
        }
        Ok(Self {
            iterates,
            config: sidecar.config,
            source: sidecar.source,
        })
    }
}

fn sidecar_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let base = prefix.as_os_str().to_string_lossy().into_owned();
    (
        PathBuf::from(format!("{base}.csv")),
        PathBuf::from(format!("{base}.json")),
    )
}

fn check_dim(w: &Vector, sample: &Sample) -> Result<()> {
    if sample.x.len() != w.len() {
        return Err(GeoAvgError::DimensionMismatch {
            expected: w.len(),
            found: sample.x.len(),
        });
    }
    Ok(())
}

fn check_finite(w: &Vector, step: usize) -> Result<()> {
    if w.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GeoAvgError::Divergence { step })
    }
}

// Shared kernel: w ← shrink·w − step·x·(⟨x, w⟩ − y). With shrink = 1 this is
// the plain update, so Tikhonov at λ = 0 reproduces it bit for bit.
fn least_squares_update(w: &mut Vector, x: &Vector, y: f64, step: f64, shrink: f64) {
    let residual = x.dot(w) - y;
    if shrink == 1.0 {
        w.axpy(-step * residual, x, 1.0);
    } else {
        w.axpy(-step * residual, x, shrink);
    }
}

fn additive_update(
    w: &mut Vector,
    sample: &Sample,
    covariance: &SpectralMatrix,
    eta: f64,
    lambda: f64,
) {
    let sw = covariance.mul_vec(w);
    // w − η(Σw − xy + λw)
    w.axpy(-eta, &sw, 1.0 - eta * lambda);
    w.axpy(eta * sample.y, &sample.x, 1.0);
}

pub fn sgd_step(w_prev: &Vector, sample: &Sample, eta: f64) -> Result<Vector> {
    check_dim(w_prev, sample)?;
    let mut w = w_prev.clone();
    least_squares_update(&mut w, &sample.x, sample.y, eta, 1.0);
    check_finite(&w, 1)?;
    Ok(w)
}

pub fn tikhonov_sgd_step(
    w_prev: &Vector,
    sample: &Sample,
    gamma: f64,
    lambda: f64,
) -> Result<Vector> {
    check_dim(w_prev, sample)?;
    if !(gamma * lambda < 1.0) {
        return Err(GeoAvgError::Range(format!(
            "gamma * lambda must be below 1, got {}",
            gamma * lambda
        )));
    }
    let mut w = w_prev.clone();
    least_squares_update(&mut w, &sample.x, sample.y, gamma, 1.0 - gamma * lambda);
    check_finite(&w, 1)?;
    Ok(w)
}

pub fn additive_noise_step(
    w_prev: &Vector,
    sample: &Sample,
    instance: &ProblemInstance,
    eta: f64,
    lambda: f64,
) -> Result<Vector> {
    check_dim(w_prev, sample)?;
    if instance.dim() != w_prev.len() {
        return Err(GeoAvgError::DimensionMismatch {
            expected: instance.dim(),
            found: w_prev.len(),
        });
    }
    let mut w = w_prev.clone();
    additive_update(&mut w, sample, instance.covariance(), eta, lambda);
    check_finite(&w, 1)?;
    Ok(w)
}

/// Runs one pass over `samples` and records every iterate, `w_0` included.
/// The additive-noise modes need the true covariance.
pub fn run<I>(
    samples: I,
    config: &SgdConfig,
    dim: usize,
    covariance: Option<&SpectralMatrix>,
    source: &str,
) -> Result<IterateTrace>
where
    I: IntoIterator<Item = Sample>,
{
    config.validate()?;
    let mut w = config.initial_point(dim)?;
    let samples = samples.into_iter();
    let mut iterates = Iterates::with_capacity(dim, samples.size_hint().0 + 1);
    iterates.push(w.as_slice())?;
    let gamma = config.gamma();
    let cov = match config.mode {
        SgdMode::AdditiveNoisePlain | SgdMode::AdditiveNoiseReg => {
            let cov = covariance.ok_or_else(|| {
                GeoAvgError::Config("additive-noise modes need the true covariance".into())
            })?;
            if cov.dim() != dim {
                return Err(GeoAvgError::DimensionMismatch {
                    expected: dim,
                    found: cov.dim(),
                });
            }
            Some(cov)
        }
        _ => None,
    };
    for (idx, sample) in samples.enumerate() {
        let step = idx + 1;
        check_dim(&w, &sample)?;
        match config.mode {
            SgdMode::Plain => least_squares_update(&mut w, &sample.x, sample.y, config.eta, 1.0),
            SgdMode::Tikhonov => least_squares_update(
                &mut w,
                &sample.x,
                sample.y,
                gamma,
                1.0 - gamma * config.lambda,
            ),
            SgdMode::AdditiveNoisePlain => {
                additive_update(&mut w, &sample, cov.expect("checked"), config.eta, 0.0)
            }
            SgdMode::AdditiveNoiseReg => additive_update(
                &mut w,
                &sample,
                cov.expect("checked"),
                config.eta,
                config.lambda,
            ),
        }
        check_finite(&w, step)?;
        iterates.push(w.as_slice())?;
    }
    Ok(IterateTrace {
        iterates,
        config: config.clone(),
        source: source.to_string(),
    })
}

/// Deterministic sequence of expected iterates `E[w_0], E[w_1], …` obtained
/// from the one-step recursion `E[w_t] = A E[w_{t-1}] + step · E[xy]` with
/// `A = (1 − step·λ_eff) I − step·Σ`. Evaluated coordinate-wise in the
/// eigenbasis of Σ.
pub struct ExpectedIterates<'a> {
    instance: &'a ProblemInstance,
    coords: Vector,
    contraction: Vector,
    drive: Vector,
    next_t: usize,
}

impl<'a> ExpectedIterates<'a> {
    pub fn new(instance: &'a ProblemInstance, config: &SgdConfig) -> Result<Self> {
        config.validate()?;
        let w0 = config.initial_point(instance.dim())?;
        let (step, reg) = match config.mode {
            SgdMode::Plain | SgdMode::AdditiveNoisePlain => (config.eta, 0.0),
            SgdMode::Tikhonov => (config.gamma(), config.lambda),
            SgdMode::AdditiveNoiseReg => (config.eta, config.lambda),
        };
        Ok(Self::from_step(instance, step, reg, &w0))
    }

    /// `w ← (I − αΣ − αμI) w + α E[xy]` from `w0`, without the stepsize
    /// invariants of [`SgdConfig`].
    pub fn from_step(instance: &'a ProblemInstance, step: f64, reg: f64, w0: &Vector) -> Self {
        let cov = instance.covariance();
        let contraction = cov.eigenvalues().map(|s| 1.0 - step * s - step * reg);
        let drive = cov.to_eigen(&instance.exy()) * step;
        Self {
            instance,
            coords: cov.to_eigen(w0),
            contraction,
            drive,
            next_t: 0,
        }
    }
}

impl Iterator for ExpectedIterates<'_> {
    type Item = Vector;

    fn next(&mut self) -> Option<Vector> {
        if self.next_t > 0 {
            for i in 0..self.coords.len() {
                self.coords[i] = self.contraction[i] * self.coords[i] + self.drive[i];
            }
        }
        self.next_t += 1;
        Some(self.instance.covariance().from_eigen(&self.coords))
    }
}

/// `E[w_t]` (plain and additive modes) or `E[ŵ_t]` (Tikhonov mode) with
/// `E[xy] = Σ w*`.
pub fn expected_iterate(
    t: usize,
    instance: &ProblemInstance,
    config: &SgdConfig,
) -> Result<Vector> {
    Ok(ExpectedIterates::new(instance, config)?
        .nth(t)
        .expect("expected-iterate sequence is infinite"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_instance, sample_stream, CovariateLaw};
    use crate::Matrix;

    fn sample(x: &[f64], y: f64) -> Sample {
        Sample {
            x: Vector::from_column_slice(x),
            y,
        }
    }

    fn test_instance(seed: Option<u64>) -> ProblemInstance {
        make_instance(
            3,
            &[1.0, 0.5, 0.2],
            &[1.0, -0.5, 2.0],
            0.3,
            CovariateLaw::Gaussian,
            seed,
        )
        .unwrap()
    }

    // Central finite differences of a scalar objective.
    fn fd_gradient(f: impl Fn(&Vector) -> f64, w: &Vector) -> Vector {
        let h = 1e-6;
        Vector::from_fn(w.len(), |i, _| {
            let mut p = w.clone();
            let mut m = w.clone();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
    }

    #[test]
    fn zero_stepsize_is_identity() {
        let w = Vector::from_vec(vec![1.0, 2.0]);
        let s = sample(&[0.3, -0.1], 4.0);
        assert_eq!(sgd_step(&w, &s, 0.0).unwrap(), w);
    }

    #[test]
    fn single_step_arithmetic() {
        let w = sgd_step(&Vector::zeros(2), &sample(&[1.0, 0.0], 2.0), 0.1).unwrap();
        assert!((w[0] - 0.2).abs() < 1e-15);
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn step_matches_finite_difference_gradient() {
        let w = Vector::from_vec(vec![0.3, -1.2, 0.7]);
        let s = sample(&[0.5, 1.5, -0.4], 0.9);
        let loss = |v: &Vector| 0.5 * (v.dot(&s.x) - s.y).powi(2);
        let g = fd_gradient(loss, &w);
        let eta = 0.05;
        let stepped = sgd_step(&w, &s, eta).unwrap();
        assert!((stepped - (&w - g * eta)).amax() < 1e-6);

        let (gamma, lambda) = (0.05, 0.8);
        let reg_loss =
            |v: &Vector| 0.5 * (v.dot(&s.x) - s.y).powi(2) + 0.5 * lambda * v.norm_squared();
        let g = fd_gradient(reg_loss, &w);
        let stepped = tikhonov_sgd_step(&w, &s, gamma, lambda).unwrap();
        assert!((stepped - (&w - g * gamma)).amax() < 1e-6);
    }

    #[test]
    fn tikhonov_reductions() {
        let w = Vector::from_vec(vec![0.3, -1.2]);
        let s = sample(&[0.5, 1.5], 0.9);
        assert_eq!(
            tikhonov_sgd_step(&w, &s, 0.1, 0.0).unwrap(),
            sgd_step(&w, &s, 0.1).unwrap()
        );
        let shrunk = tikhonov_sgd_step(&w, &sample(&[0.0, 0.0], 0.0), 0.1, 2.0).unwrap();
        assert!((shrunk - &w * 0.8).amax() < 1e-15);
        assert!(tikhonov_sgd_step(&w, &s, 0.5, 2.0).is_err());
    }

    #[test]
    fn divergence_reports_step() {
        let inst = test_instance(None);
        let config = SgdConfig::plain(50.0);
        let err = run(sample_stream(&inst, 2000, 1), &config, 3, None, "t").unwrap_err();
        match err {
            GeoAvgError::Divergence { step } => assert!(step > 1 && step <= 2000),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn additive_step_fixed_point_and_zero_step() {
        let inst = test_instance(Some(4));
        let w_star = inst.w_star().clone();
        // x y replaced by its mean Σ w*: take x = Σw*, y = 1.
        let s = Sample {
            x: inst.exy(),
            y: 1.0,
        };
        let next = additive_noise_step(&w_star, &s, &inst, 0.1, 0.0).unwrap();
        assert!((next - &w_star).amax() < 1e-14);
        let w = Vector::from_vec(vec![0.1, 0.2, 0.3]);
        assert_eq!(additive_noise_step(&w, &s, &inst, 0.0, 0.5).unwrap(), w);
    }

    #[test]
    fn additive_step_mean_matches_expectation() {
        let inst = test_instance(Some(5));
        let (eta, lambda) = (0.2, 0.5);
        let w_prev = Vector::from_vec(vec![0.5, 0.5, -0.5]);
        let n = 100_000;
        let mut sum = Vector::zeros(3);
        let mut sum_sq = Vector::zeros(3);
        for s in sample_stream(&inst, n, 17) {
            let w = additive_noise_step(&w_prev, &s, &inst, eta, lambda).unwrap();
            sum_sq += w.component_mul(&w);
            sum += w;
        }
        let mean = &sum / n as f64;
        let var = &sum_sq / n as f64 - mean.component_mul(&mean);
        let sigma = inst.covariance().dense();
        let expected = &w_prev * (1.0 - eta * lambda) - &sigma * &w_prev * eta + inst.exy() * eta;
        for i in 0..3 {
            let se = (var[i] / n as f64).sqrt();
            assert!((mean[i] - expected[i]).abs() <= 3.0 * se, "coordinate {i}");
        }
    }

    #[test]
    fn run_lengths_and_composition() {
        let inst = test_instance(Some(2));
        let config = SgdConfig::plain(0.1).with_w0(&[0.5, 0.0, -0.5]);
        let empty = run(Vec::new(), &config, 3, None, "empty").unwrap();
        assert_eq!(empty.iterates.len(), 1);
        assert_eq!(empty.iterates.row(0), &[0.5, 0.0, -0.5]);

        let data: Vec<Sample> = sample_stream(&inst, 3, 8).collect();
        let trace = run(data.clone(), &config, 3, None, "t").unwrap();
        let mut w = config.initial_point(3).unwrap();
        for (t, s) in data.iter().enumerate() {
            w = sgd_step(&w, s, 0.1).unwrap();
            assert_eq!(trace.iterates.row(t + 1), w.as_slice());
        }
    }

    #[test]
    fn run_matches_product_expansion() {
        // w_t − w* = M_{0,t}(w_0 − w*) + η Σ_j M_{j,t} ε_j x_j with
        // M_{i,j} = Π_{k=i+1}^{j} (I − η x_k x_kᵀ).
        let inst = test_instance(Some(6));
        let eta = 0.15;
        let w0 = [0.2, -0.3, 0.4];
        let data: Vec<Sample> = sample_stream(&inst, 5, 31).collect();
        let trace = run(
            data.clone(),
            &SgdConfig::plain(eta).with_w0(&w0),
            3,
            None,
            "t",
        )
        .unwrap();
        let w_star = inst.w_star();
        let m = |i: usize, j: usize| {
            let mut acc = Matrix::identity(3, 3);
            for k in (i + 1)..=j {
                let x = &data[k - 1].x;
                acc = (Matrix::identity(3, 3) - x * x.transpose() * eta) * acc;
            }
            acc
        };
        for t in 0..=5 {
            let mut expansion = m(0, t) * (Vector::from_column_slice(&w0) - w_star);
            for j in 1..=t {
                let eps = data[j - 1].y - data[j - 1].x.dot(w_star);
                expansion += m(j, t) * &data[j - 1].x * (eta * eps);
            }
            let direct = trace.iterates.vector(t) - w_star;
            assert!((direct - expansion).amax() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn tikhonov_mode_at_zero_lambda_is_bitwise_plain() {
        let inst = test_instance(Some(3));
        let plain = run(
            sample_stream(&inst, 500, 4),
            &SgdConfig::plain(0.1),
            3,
            None,
            "p",
        )
        .unwrap();
        let tik = run(
            sample_stream(&inst, 500, 4),
            &SgdConfig::plain(0.1).with_mode(SgdMode::Tikhonov),
            3,
            None,
            "t",
        )
        .unwrap();
        for (a, b) in plain.iterates.rows().zip(tik.iterates.rows()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn expected_iterate_small_cases() {
        let inst = test_instance(Some(1));
        let config = SgdConfig::plain(0.1).with_w0(&[1.0, 2.0, 3.0]);
        let e0 = expected_iterate(0, &inst, &config).unwrap();
        assert!((e0 - Vector::from_vec(vec![1.0, 2.0, 3.0])).amax() < 1e-14);
        let e1 = expected_iterate(1, &inst, &SgdConfig::plain(0.1)).unwrap();
        assert!((e1 - inst.exy() * 0.1).amax() < 1e-14);
    }

    #[test]
    fn expected_iterate_matches_geometric_series() {
        let inst = test_instance(None);
        let (eta, lambda) = (0.3, 0.4);
        let t = 50;
        for mode in [SgdMode::Plain, SgdMode::Tikhonov] {
            let config = SgdConfig::plain(eta).with_lambda(lambda).with_mode(mode);
            let (step, reg) = match mode {
                SgdMode::Tikhonov => (config.gamma(), lambda),
                _ => (eta, 0.0),
            };
            let got = expected_iterate(t, &inst, &config).unwrap();
            for i in 0..3 {
                let s = inst.spectrum()[i];
                let b = s * inst.w_star()[i];
                let q: f64 = 1.0 - step * s - step * reg;
                // step · b · Σ_{k=0}^{t-1} q^k
                let closed = step * b * (1.0 - q.powi(t as i32)) / (1.0 - q);
                assert!((got[i] - closed).abs() < 1e-12, "{mode:?} coordinate {i}");
            }
        }
    }

    #[test]
    fn expected_recursion_contracts() {
        let inst = test_instance(Some(9));
        let config = SgdConfig::plain(0.9);
        let target = inst.w_star().clone();
        let mut prev = f64::INFINITY;
        for w in ExpectedIterates::new(&inst, &config).unwrap().take(300) {
            let d = (w - &target).norm();
            assert!(d <= prev + 1e-15);
            prev = d;
        }
    }

    #[test]
    fn monte_carlo_mean_matches_expected_iterate() {
        let inst = test_instance(Some(10));
        let config = SgdConfig::plain(0.2);
        let (n, reps) = (100, 2000);
        let mut sum = Vector::zeros(3);
        let mut sum_sq = Vector::zeros(3);
        for r in 0..reps {
            let trace = run(sample_stream(&inst, n, 1000 + r), &config, 3, None, "mc").unwrap();
            let w = trace.iterates.vector(n);
            sum_sq += w.component_mul(&w);
            sum += w;
        }
        let mean = &sum / reps as f64;
        let var = (&sum_sq / reps as f64 - mean.component_mul(&mean))
            * (reps as f64 / (reps as f64 - 1.0));
        let expected = expected_iterate(n, &inst, &config).unwrap();
        for i in 0..3 {
            let se = (var[i] / reps as f64).sqrt();
            assert!((mean[i] - expected[i]).abs() <= 3.0 * se, "coordinate {i}");
        }
    }

    #[test]
    fn trace_save_load_round_trip() {
        let inst = test_instance(Some(11));
        let trace = run(
            sample_stream(&inst, 20, 2),
            &SgdConfig::plain(0.1),
            3,
            None,
            "syn",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("trace");
        trace.save(&prefix).unwrap();
        assert_eq!(IterateTrace::load(&prefix).unwrap(), trace);
    }

    #[test]
    fn config_validation() {
        assert!(SgdConfig::plain(0.0).validate().is_err());
        assert!(SgdConfig::plain(0.5).with_lambda(2.0).validate().is_err());
        assert!(SgdConfig::plain(0.5).with_lambda(1.9).validate().is_ok());
        let c = SgdConfig::plain(0.5).with_lambda(1.0);
        assert!((c.gamma() * (1.0 + 0.5) - 0.5).abs() < 1e-15);
        assert!(c.gamma() * c.lambda < 1.0);
    }
}

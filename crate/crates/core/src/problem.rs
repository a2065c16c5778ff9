//! Population least-squares problems and the data streams drawn from them.
//!
//! An instance is `y = ⟨w*, x⟩ + ε` with `E[x xᵀ] = Σ` and `ε ~ N(0, σ²)`
//! independent of `x`. Σ is kept in spectral form (see [`SpectralMatrix`]).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GeoAvgError, Result};
use crate::spectral::SpectralMatrix;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLaw {
    /// `x = B diag(√s) z` with `z` standard normal.
    Gaussian,
    /// `x = B diag(√s) r` with `r` a Rademacher sign vector, so that
    /// `‖x‖² = tr Σ` almost surely.
    ScaledRademacher,
}

impl std::str::FromStr for CovariateLaw {
    type Err = GeoAvgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "scaled_rademacher" => Ok(Self::ScaledRademacher),
            other => Err(GeoAvgError::UnsupportedLaw(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    covariance: SpectralMatrix,
    w_star: Vector,
    noise_sigma: f64,
    covariate_law: CovariateLaw,
    basis_seed: Option<u64>,
}

/// Assumption constants of an instance: `E[‖x‖² x⊗x] ⪯ R² Σ`, `Σ ⪯ B² I`
/// and the residual bound `E[ε² x⊗x] ⪯ σ² Σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConstants {
    pub r_squared: f64,
    pub b_squared: f64,
    pub sigma_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vector,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Where the samples came from, e.g. `synthetic:seed=7` or a file path.
    pub source: String,
}

/// Builds an instance. With `basis_seed` the eigenbasis is a reproducible
/// Haar-random orthonormal matrix, otherwise the identity.
pub fn make_instance(
    dim: usize,
    spectrum: &[f64],
    w_star: &[f64],
    noise_sigma: f64,
    covariate_law: CovariateLaw,
    basis_seed: Option<u64>,
) -> Result<ProblemInstance> {
    if dim == 0 {
        return Err(GeoAvgError::InvalidSpectrum(
            "dimension must be at least 1".into(),
        ));
    }
    if spectrum.len() != dim {
        return Err(GeoAvgError::DimensionMismatch {
            expected: dim,
            found: spectrum.len(),
        });
    }
    if w_star.len() != dim {
        return Err(GeoAvgError::DimensionMismatch {
            expected: dim,
            found: w_star.len(),
        });
    }
    if let Some(i) = spectrum.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(GeoAvgError::InvalidSpectrum(format!(
            "eigenvalue {i} is {} but must be positive",
            spectrum[i]
        )));
    }
    let basis = match basis_seed {
        Some(seed) => random_orthonormal(dim, seed),
        None => Matrix::identity(dim, dim),
    };
    let covariance = SpectralMatrix::new(Vector::from_column_slice(spectrum), basis)?;
    ProblemInstance::from_parts(
        covariance,
        Vector::from_column_slice(w_star),
        noise_sigma,
        covariate_law,
        basis_seed,
    )
}

/// Haar-distributed orthonormal matrix from the QR factorization of a
/// Gaussian matrix, with the sign of `R`'s diagonal folded into `Q`.
pub fn random_orthonormal(dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Matrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl ProblemInstance {
    pub fn from_parts(
        covariance: SpectralMatrix,
        w_star: Vector,
        noise_sigma: f64,
        covariate_law: CovariateLaw,
        basis_seed: Option<u64>,
    ) -> Result<Self> {
        if w_star.len() != covariance.dim() {
            return Err(GeoAvgError::DimensionMismatch {
                expected: covariance.dim(),
                found: w_star.len(),
            });
        }
        if !(covariance.smallest() > 0.0) {
            return Err(GeoAvgError::InvalidSpectrum(
                "covariance must be positive definite".into(),
            ));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(GeoAvgError::Range(format!("noise_sigma = {noise_sigma}")));
        }
        if w_star.iter().any(|v| !v.is_finite()) {
            return Err(GeoAvgError::Range("w_star has non-finite entries".into()));
        }
        Ok(Self {
            covariance,
            w_star,
            noise_sigma,
            covariate_law,
            basis_seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn covariance(&self) -> &SpectralMatrix {
        &self.covariance
    }

    pub fn spectrum(&self) -> &Vector {
        self.covariance.eigenvalues()
    }

    pub fn w_star(&self) -> &Vector {
        &self.w_star
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn covariate_law(&self) -> CovariateLaw {
        self.covariate_law
    }

    pub fn basis_seed(&self) -> Option<u64> {
        self.basis_seed
    }

    /// `E[x y] = Σ w*` for the well-specified model.
    pub fn exy(&self) -> Vector {
        self.covariance.mul_vec(&self.w_star)
    }

    /// Exact `E[‖x‖² x⊗x]`.
    pub fn fourth_moment(&self) -> Matrix {
        let sigma = self.covariance.dense();
        let tr = self.covariance.trace();
        match self.covariate_law {
            CovariateLaw::Gaussian => &sigma * tr + (&sigma * &sigma) * 2.0,
            CovariateLaw::ScaledRademacher => sigma * tr,
        }
    }

    /// Exact covariance `V = E[ξ⊗ξ]` of the gradient noise `ξ = x y − E[x y]`
    /// seen by the additive-noise recursion.
    pub fn gradient_noise_covariance(&self) -> Matrix {
        let sigma = self.covariance.dense();
        let sw = self.exy();
        let energy = self.w_star.dot(&sw);
        let s2 = self.noise_sigma * self.noise_sigma;
        let mut v = &sigma * (energy + s2) + &sw * sw.transpose();
        if self.covariate_law == CovariateLaw::ScaledRademacher {
            // E[r_i⁴] = 1 instead of 3: drop twice the diagonal of a aᵀ in r-coordinates.
            let scale = self.covariance.eigenvalues().map(f64::sqrt);
            let b = self.covariance.basis();
            let a = self.covariance.to_eigen(&self.w_star).component_mul(&scale);
            let a_mat = Matrix::from_fn(self.dim(), self.dim(), |i, j| b[(i, j)] * scale[j]);
            let diag = Matrix::from_diagonal(&a.map(|v| v * v));
            v -= (&a_mat * diag * a_mat.transpose()) * 2.0;
        }
        v
    }

    pub fn to_spec(&self) -> InstanceSpec {
        let basis = if self.basis_seed.is_none()
            && self.covariance.basis() != &Matrix::identity(self.dim(), self.dim())
        {
            let b = self.covariance.basis();
            Some(
                (0..self.dim())
                    .map(|i| b.row(i).iter().copied().collect())
                    .collect(),
            )
        } else {
            None
        };
        InstanceSpec {
            dim: self.dim(),
            spectrum: self.spectrum().iter().copied().collect(),
            basis,
            w_star: self.w_star.iter().copied().collect(),
            noise_sigma: self.noise_sigma,
            covariate_law: self.covariate_law,
            seed: self.basis_seed,
        }
    }
}

/// JSON form of an instance. `seed` drives the random basis; an explicit
/// `basis` (rows) takes precedence and must be orthonormal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub dim: usize,
    pub spectrum: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
    pub w_star: Vec<f64>,
    pub noise_sigma: f64,
    #[serde(default = "default_law")]
    pub covariate_law: CovariateLaw,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_law() -> CovariateLaw {
    CovariateLaw::Gaussian
}

impl InstanceSpec {
    pub fn build(&self) -> Result<ProblemInstance> {
        match &self.basis {
            None => make_instance(
                self.dim,
                &self.spectrum,
                &self.w_star,
                self.noise_sigma,
                self.covariate_law,
                self.seed,
            ),
            Some(rows) => {
                if rows.len() != self.dim || rows.iter().any(|r| r.len() != self.dim) {
                    return Err(GeoAvgError::DimensionMismatch {
                        expected: self.dim,
                        found: rows.len(),
                    });
                }
                if self.spectrum.len() != self.dim {
                    return Err(GeoAvgError::DimensionMismatch {
                        expected: self.dim,
                        found: self.spectrum.len(),
                    });
                }
                if let Some(i) = self.spectrum.iter().position(|&s| !(s > 0.0)) {
                    return Err(GeoAvgError::InvalidSpectrum(format!(
                        "eigenvalue {i} is {} but must be positive",
                        self.spectrum[i]
                    )));
                }
                let basis = Matrix::from_fn(self.dim, self.dim, |i, j| rows[i][j]);
                let cov = SpectralMatrix::new(Vector::from_column_slice(&self.spectrum), basis)?;
                ProblemInstance::from_parts(
                    cov,
                    Vector::from_column_slice(&self.w_star),
                    self.noise_sigma,
                    self.covariate_law,
                    None,
                )
            }
        }
    }
}

/// Assumption constants. For Gaussian covariates
/// `E[‖x‖² x⊗x] = tr(Σ) Σ + 2Σ² ⪯ (tr Σ + 2 s₁) Σ`; for scaled Rademacher
/// covariates `‖x‖² = tr Σ` almost surely.
pub fn moment_constants(instance: &ProblemInstance) -> Result<MomentConstants> {
    let cov = instance.covariance();
    let r_squared = match instance.covariate_law() {
        CovariateLaw::Gaussian => cov.trace() + 2.0 * cov.largest(),
        CovariateLaw::ScaledRademacher => cov.trace(),
    };
    Ok(MomentConstants {
        r_squared,
        b_squared: cov.largest(),
        sigma_squared: instance.noise_sigma() * instance.noise_sigma(),
    })
}

/// Deterministic i.i.d. stream of `n` samples from `instance`.
pub struct SampleStream<'a> {
    instance: &'a ProblemInstance,
    rng: ChaCha8Rng,
    scale: Vector,
    remaining: usize,
    seed: u64,
}

pub fn sample_stream(instance: &ProblemInstance, n: usize, seed: u64) -> SampleStream<'_> {
    SampleStream {
        instance,
        rng: ChaCha8Rng::seed_from_u64(seed),
        scale: instance.spectrum().map(f64::sqrt),
        remaining: n,
        seed,
    }
}

impl SampleStream<'_> {
    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn into_dataset(self) -> Dataset {
        let source = format!("synthetic:seed={}", self.seed);
        Dataset {
            samples: self.collect(),
            source,
        }
    }
}

impl Iterator for SampleStream<'_> {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let d = self.instance.dim();
        let mut coords = Vector::zeros(d);
        for i in 0..d {
            let z: f64 = match self.instance.covariate_law {
                CovariateLaw::Gaussian => StandardNormal.sample(&mut self.rng),
                CovariateLaw::ScaledRademacher => {
                    if self.rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            coords[i] = self.scale[i] * z;
        }
        let x = self.instance.covariance.from_eigen(&coords);
        let eps: f64 = if self.instance.noise_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            self.instance.noise_sigma * z
        } else {
            0.0
        };
        let y = self.instance.w_star.dot(&x) + eps;
        Some(Sample { x, y })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.x.len())
    }

    /// Mean squared prediction error `(1/m) Σ (⟨w, x⟩ − y)²`.
    pub fn mean_squared_error(&self, w: &Vector) -> Result<f64> {
        let d = self.dim().ok_or(GeoAvgError::EmptyDataset)?;
        if w.len() != d {
            return Err(GeoAvgError::DimensionMismatch {
                expected: d,
                found: w.len(),
            });
        }
        let total: f64 = self
            .samples
            .iter()
            .map(|s| {
                let r = s.x.dot(w) - s.y;
                r * r
            })
            .sum();
        Ok(total / self.len() as f64)
    }
}

/// Reads a features-then-label CSV. A first row made only of non-numeric
/// cells is treated as a header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut ds = read_csv(BufReader::new(file))?;
    ds.source = path.display().to_string();
    Ok(ds)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(reader);
    let mut samples = Vec::new();
    let mut width = None;
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record?;
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if idx == 0 && record.iter().all(|c| c.trim().parse::<f64>().is_err()) {
            continue;
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.trim().parse::<f64>().map_err(|_| GeoAvgError::Parse {
                    row,
                    message: format!("column {} is not a number: {cell:?}", col + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() < 2 {
            return Err(GeoAvgError::Parse {
                row,
                message: "need at least one feature and a label".into(),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(GeoAvgError::Parse {
                    row,
                    message: format!("expected {w} columns, found {}", values.len()),
                })
            }
            _ => {}
        }
        let (label, features) = values.split_last().expect("nonempty row");
        samples.push(Sample {
            x: Vector::from_column_slice(features),
            y: *label,
        });
    }
    if samples.is_empty() {
        return Err(GeoAvgError::EmptyDataset);
    }
    Ok(Dataset {
        samples,
        source: "csv".into(),
    })
}

/// Writes the dataset with shortest round-trip float formatting, so
/// reloading reproduces every value exactly.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for s in &dataset.samples {
        let mut line = String::new();
        for v in s.x.iter() {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&format!("{}\n", s.y));
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, File::create(path)?)
}

/// `Σ̂ = (1/n) Σ x x ᵀ` and `ê = (1/n) Σ x y`.
pub fn empirical_moments(dataset: &Dataset) -> Result<(Matrix, Vector)> {
    let d = dataset.dim().ok_or(GeoAvgError::EmptyDataset)?;
    let mut sigma = Matrix::zeros(d, d);
    let mut exy = Vector::zeros(d);
    for s in &dataset.samples {
        if s.x.len() != d {
            return Err(GeoAvgError::DimensionMismatch {
                expected: d,
                found: s.x.len(),
            });
        }
        sigma.ger(1.0, &s.x, &s.x, 1.0);
        exy.axpy(s.y, &s.x, 1.0);
    }
    let n = dataset.len() as f64;
    Ok((sigma / n, exy / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inverse_square_spectrum(d: usize) -> Vec<f64> {
        (1..=d).map(|i| 1.0 / (i * i) as f64).collect()
    }

    #[test]
    fn identity_instance() {
        let inst = make_instance(
            2,
            &[1.0, 1.0],
            &[0.0, 0.0],
            0.0,
            CovariateLaw::Gaussian,
            None,
        )
        .unwrap();
        assert_eq!(inst.covariance().dense(), Matrix::identity(2, 2));
    }

    #[test]
    fn random_basis_preserves_spectrum() {
        let inst = make_instance(
            3,
            &[3.0, 2.0, 1.0],
            &[0.0; 3],
            0.0,
            CovariateLaw::Gaussian,
            Some(7),
        )
        .unwrap();
        let back = SpectralMatrix::from_symmetric(&inst.covariance().dense()).unwrap();
        for (a, b) in back.eigenvalues().iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_of_inverse_square_spectrum() {
        let spec = inverse_square_spectrum(5);
        let inst =
            make_instance(5, &spec, &[0.0; 5], 0.0, CovariateLaw::Gaussian, Some(1)).unwrap();
        // 1 + 1/4 + 1/9 + 1/16 + 1/25
        let oracle = 5269.0 / 3600.0;
        assert!((inst.covariance().dense().trace() - oracle).abs() < 1e-12);
        assert!((oracle - 1.4636).abs() < 1e-4);
    }

    #[test]
    fn make_instance_errors() {
        assert!(matches!(
            make_instance(2, &[1.0, 0.0], &[0.0; 2], 0.0, CovariateLaw::Gaussian, None),
            Err(GeoAvgError::InvalidSpectrum(_))
        ));
        assert!(matches!(
            make_instance(1, &[0.0], &[0.0], 0.0, CovariateLaw::Gaussian, None),
            Err(GeoAvgError::InvalidSpectrum(_))
        ));
        assert!(matches!(
            make_instance(3, &[1.0, 1.0], &[0.0; 3], 0.0, CovariateLaw::Gaussian, None),
            Err(GeoAvgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn moment_constants_gaussian() {
        let inst =
            make_instance(2, &[1.0, 1.0], &[0.0; 2], 0.3, CovariateLaw::Gaussian, None).unwrap();
        let m = moment_constants(&inst).unwrap();
        assert_eq!(m.r_squared, 4.0);
        assert_eq!(m.b_squared, 1.0);
        assert!((m.sigma_squared - 0.09).abs() < 1e-15);

        let inst =
            make_instance(2, &[3.0, 1.0], &[0.0; 2], 0.0, CovariateLaw::Gaussian, None).unwrap();
        let m = moment_constants(&inst).unwrap();
        assert_eq!(m.r_squared, 10.0);
        assert_eq!(m.b_squared, 3.0);
    }

    #[test]
    fn law_parsing() {
        assert_eq!(
            "gaussian".parse::<CovariateLaw>().unwrap(),
            CovariateLaw::Gaussian
        );
        assert!(matches!(
            "cauchy".parse::<CovariateLaw>(),
            Err(GeoAvgError::UnsupportedLaw(_))
        ));
    }

    #[test]
    fn noiseless_stream_is_exact() {
        let inst = make_instance(
            3,
            &[2.0, 1.0, 0.5],
            &[1.0, -2.0, 0.5],
            0.0,
            CovariateLaw::Gaussian,
            Some(3),
        )
        .unwrap();
        for s in sample_stream(&inst, 100, 11) {
            assert_eq!(s.y, inst.w_star().dot(&s.x));
        }
    }

    #[test]
    fn stream_is_deterministic() {
        let inst = make_instance(
            2,
            &[2.0, 1.0],
            &[1.0, 1.0],
            0.5,
            CovariateLaw::ScaledRademacher,
            Some(2),
        )
        .unwrap();
        let a = sample_stream(&inst, 50, 99).into_dataset();
        let b = sample_stream(&inst, 50, 99).into_dataset();
        assert_eq!(a, b);
        let c = sample_stream(&inst, 50, 100).into_dataset();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn empirical_covariance_converges() {
        let inst =
            make_instance(2, &[2.0, 1.0], &[0.0; 2], 0.0, CovariateLaw::Gaussian, None).unwrap();
        let ds = sample_stream(&inst, 100_000, 5).into_dataset();
        let (sigma, _) = empirical_moments(&ds).unwrap();
        let target = inst.covariance().dense();
        assert!((sigma - target).amax() < 0.05);
    }

    #[test]
    fn rademacher_norm_is_constant() {
        let inst = make_instance(
            3,
            &[3.0, 2.0, 1.0],
            &[0.0; 3],
            0.0,
            CovariateLaw::ScaledRademacher,
            Some(4),
        )
        .unwrap();
        for s in sample_stream(&inst, 20, 1) {
            assert!((s.x.norm_squared() - 6.0).abs() < 1e-12);
        }
        assert_eq!(moment_constants(&inst).unwrap().r_squared, 6.0);
    }

    #[test]
    fn csv_basic_format() {
        let ds = read_csv("1,2,3\n4,5,6".as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), Some(2));
        assert_eq!(ds.samples[0].y, 3.0);
        assert_eq!(ds.samples[1].y, 6.0);
        assert_eq!(ds.samples[1].x.as_slice(), &[4.0, 5.0]);
    }

    #[test]
    fn csv_header_is_skipped() {
        let ds = read_csv("x0,x1,y\n1,2,3\n".as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            read_csv("".as_bytes()),
            Err(GeoAvgError::EmptyDataset)
        ));
        match read_csv("1,2,3\n4,5\n".as_bytes()) {
            Err(GeoAvgError::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        match read_csv("1,2,3\n4,abc,6\n".as_bytes()) {
            Err(GeoAvgError::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let inst = make_instance(
            3,
            &[1.0, 0.5, 0.1],
            &[0.3, 0.2, 0.1],
            0.7,
            CovariateLaw::Gaussian,
            Some(9),
        )
        .unwrap();
        let ds = sample_stream(&inst, 200, 3).into_dataset();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), ds.len());
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            assert!((&a.x - &b.x).amax() <= 1e-15);
            assert!((a.y - b.y).abs() <= 1e-15);
        }
    }

    #[test]
    fn empirical_moments_single_and_duplicate() {
        let single = Dataset {
            samples: vec![Sample {
                x: Vector::from_vec(vec![1.0, 0.0]),
                y: 2.0,
            }],
            source: "test".into(),
        };
        let (s, e) = empirical_moments(&single).unwrap();
        assert_eq!(s, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(e.as_slice(), &[2.0, 0.0]);
        let mut dup = single.clone();
        dup.samples.push(single.samples[0].clone());
        assert_eq!(empirical_moments(&dup).unwrap(), (s, e));
        let empty = Dataset {
            samples: vec![],
            source: "test".into(),
        };
        assert!(matches!(
            empirical_moments(&empty),
            Err(GeoAvgError::EmptyDataset)
        ));
    }

    #[test]
    fn empirical_moments_match_naive_loops() {
        let inst = make_instance(
            4,
            &[2.0, 1.0, 0.5, 0.25],
            &[1.0, 0.0, -1.0, 0.5],
            0.2,
            CovariateLaw::Gaussian,
            Some(8),
        )
        .unwrap();
        let ds = sample_stream(&inst, 1000, 21).into_dataset();
        let (sigma, exy) = empirical_moments(&ds).unwrap();
        for i in 0..4 {
            let mut acc = 0.0;
            for s in &ds.samples {
                acc += s.x[i] * s.y;
            }
            assert!((exy[i] - acc / 1000.0).abs() < 1e-12);
            for j in 0..4 {
                let mut acc = 0.0;
                for s in &ds.samples {
                    acc += s.x[i] * s.x[j];
                }
                assert!((sigma[(i, j)] - acc / 1000.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let inst = make_instance(
            2,
            &[2.0, 1.0],
            &[1.0, -1.0],
            0.5,
            CovariateLaw::Gaussian,
            Some(12),
        )
        .unwrap();
        let json = serde_json::to_string(&inst.to_spec()).unwrap();
        let back: InstanceSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.build().unwrap(), inst);
    }

    #[test]
    fn explicit_basis_spec() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let spec = InstanceSpec {
            dim: 2,
            spectrum: vec![2.0, 1.0],
            basis: Some(vec![vec![c, -c], vec![c, c]]),
            w_star: vec![1.0, 0.0],
            noise_sigma: 0.0,
            covariate_law: CovariateLaw::Gaussian,
            seed: None,
        };
        let inst = spec.build().unwrap();
        let dense = inst.covariance().dense();
        assert!((dense[(0, 1)] - 0.5).abs() < 1e-12);
        assert_eq!(inst.to_spec().build().unwrap(), inst);
    }
}

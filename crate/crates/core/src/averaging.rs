//! Iterate averaging over a stored trace.
//!
//! Three schemes are supported: the uniform Polyak–Ruppert mean, the
//! geometric average `Σ ρ^t w_t / Σ ρ^t`, and the tail mean of `w_τ … w_n`.
//! The geometric average also comes in a streaming form
//! ([`OnlineAverageState`]) and a sharded form ([`PartialGeometricSum`] plus
//! [`parallel_geometric_combine`]).
//!
//! The discount is always passed as `ρ`. Use [`rho_from_gamma`] for the
//! `ρ = 1 − γλ` convention of the excess-risk analysis and [`rho_from_eta`]
//! for `ρ = 1 − ηλ`.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GeoAvgError, Result};
use crate::trace::Iterates;
use crate::Vector;

/// `P(G > n)` allowed by [`geometric_stopping_sample`].
pub const STOPPING_TAIL_MASS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AveragingScheme {
    Uniform,
    Geometric { rho: f64 },
    Tail { tau: usize },
}

impl AveragingScheme {
    pub fn validate(&self, last_index: usize) -> Result<()> {
        match *self {
            AveragingScheme::Uniform => Ok(()),
            AveragingScheme::Geometric { rho } => check_rho(rho),
            AveragingScheme::Tail { tau } if tau > last_index => {
                Err(GeoAvgError::IndexOutOfRange {
                    index: tau,
                    last: last_index,
                })
            }
            AveragingScheme::Tail { .. } => Ok(()),
        }
    }

    /// Normalized weights over `w_0 … w_n`.
    pub fn weights(&self, last_index: usize) -> Result<Vec<f64>> {
        self.validate(last_index)?;
        let len = last_index + 1;
        let raw: Vec<f64> = match *self {
            AveragingScheme::Uniform => vec![1.0; len],
            AveragingScheme::Geometric { rho } => (0..len).map(|t| discount(rho, t)).collect(),
            AveragingScheme::Tail { tau } => {
                (0..len).map(|t| if t >= tau { 1.0 } else { 0.0 }).collect()
            }
        };
        let mass: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|w| w / mass).collect())
    }
}

pub fn rho_from_eta(eta: f64, lambda: f64) -> f64 {
    1.0 - eta * lambda
}

pub fn rho_from_gamma(gamma: f64, lambda: f64) -> f64 {
    1.0 - gamma * lambda
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(GeoAvgError::Range(format!(
            "discount must lie in (0, 1], got {rho}"
        )))
    }
}

fn check_gamma_lambda(gl: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero {
        (0.0..1.0).contains(&gl)
    } else {
        gl > 0.0 && gl < 1.0
    };
    if ok {
        Ok(())
    } else {
        Err(GeoAvgError::Range(format!(
            "gamma * lambda = {gl} outside the admissible range"
        )))
    }
}

#[inline]
fn discount(rho: f64, t: usize) -> f64 {
    rho.powf(t as f64)
}

/// Neumaier-compensated running sum of vectors.
#[derive(Debug, Clone)]
struct CompensatedSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedSum {
    fn new(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            comp: vec![0.0; dim],
        }
    }

    #[inline]
    fn add_scaled(&mut self, weight: f64, row: &[f64]) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(row) {
            neumaier(s, c, weight * v);
        }
    }

    #[inline]
    fn add_scaled_diff(&mut self, weight: f64, row: &[f64], anchor: &[f64]) {
        for (((s, c), &v), &a) in self
            .sum
            .iter_mut()
            .zip(self.comp.iter_mut())
            .zip(row)
            .zip(anchor)
        {
            neumaier(s, c, weight * (v - a));
        }
    }

    fn value(&self) -> Vector {
        Vector::from_iterator(
            self.sum.len(),
            self.sum.iter().zip(&self.comp).map(|(s, c)| s + c),
        )
    }
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Running geometric sum `Σ ρ^{t−offset} (w_t − w_offset)` over consecutive
/// iterates, with compensated accumulation. Centering at the first iterate
/// keeps the sums small and makes the average of a constant run exact.
#[derive(Debug, Clone)]
pub(crate) struct GeometricAccumulator {
    rho: f64,
    offset: usize,
    count: usize,
    anchor: Vec<f64>,
    sum: CompensatedSum,
    mass: f64,
    mass_comp: f64,
}

impl GeometricAccumulator {
    pub(crate) fn new(dim: usize, rho: f64, offset: usize) -> Self {
        Self {
            rho,
            offset,
            count: 0,
            anchor: vec![0.0; dim],
            sum: CompensatedSum::new(dim),
            mass: 0.0,
            mass_comp: 0.0,
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, row: &[f64]) {
        if self.count == 0 {
            self.anchor.copy_from_slice(row);
        }
        let w = discount(self.rho, self.count);
        self.sum.add_scaled_diff(w, row, &self.anchor);
        neumaier(&mut self.mass, &mut self.mass_comp, w);
        self.count += 1;
    }

    fn mass(&self) -> f64 {
        self.mass + self.mass_comp
    }

    pub(crate) fn average(&self) -> Vector {
        let mass = self.mass();
        let centered = self.sum.value();
        Vector::from_iterator(
            self.anchor.len(),
            self.anchor
                .iter()
                .zip(centered.iter())
                .map(|(a, s)| a + s / mass),
        )
    }

    pub(crate) fn into_partial(self) -> PartialGeometricSum {
        PartialGeometricSum {
            offset: self.offset,
            len: self.count,
            weight_mass: self.mass(),
            weighted_sum: self.sum.value(),
            anchor: Vector::from_vec(self.anchor),
        }
    }
}

/// Averages a trace `w_0 … w_n` under `scheme`.
pub fn average(iterates: &Iterates, scheme: &AveragingScheme) -> Result<Vector> {
    let last = iterates.last_index()?;
    scheme.validate(last)?;
    // Uniform and tail(0) run the geometric kernel with unit weights, so all
    // three reductions produce identical bits.
    let (rho, start) = match *scheme {
        AveragingScheme::Uniform => (1.0, 0),
        AveragingScheme::Geometric { rho } => (rho, 0),
        AveragingScheme::Tail { tau } => (1.0, tau),
    };
    let mut acc = GeometricAccumulator::new(iterates.dim(), rho, start);
    for t in start..=last {
        acc.push(iterates.row(t));
    }
    Ok(acc.average())
}

/// Streaming geometric average. After absorbing `w_0 … w_t` the state holds
/// the same value as the batch average, without ever forming `ρ^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineAverageState {
    pub current: Vector,
    /// Blend `a_t = ρ^t / Σ_{k≤t} ρ^k` used for the most recent update.
    pub blend: f64,
    /// Number of iterates absorbed so far.
    pub step: usize,
}

impl OnlineAverageState {
    pub fn new(dim: usize) -> Self {
        Self {
            current: Vector::zeros(dim),
            blend: 1.0,
            step: 0,
        }
    }

    /// `a_t = ρ a_{t−1} / (1 + ρ a_{t−1})`, `current ← (1 − a_t) current + a_t w_t`.
    pub fn update(&mut self, w: &[f64], rho: f64) {
        if self.step == 0 {
            self.blend = 1.0;
            self.current.copy_from_slice(w);
        } else {
            let prev = rho * self.blend;
            self.blend = prev / (1.0 + prev);
            let a = self.blend;
            for (c, &v) in self.current.iter_mut().zip(w) {
                *c += a * (v - *c);
            }
        }
        self.step += 1;
    }
}

pub fn online_update(mut state: OnlineAverageState, w: &[f64], rho: f64) -> OnlineAverageState {
    state.update(w, rho);
    state
}

/// `c_n = (Σ_{t=0}^n (1−γλ)^t)⁻¹`.
pub fn normalizer_c(n: usize, gamma_lambda: f64) -> Result<f64> {
    check_gamma_lambda(gamma_lambda, true)?;
    if gamma_lambda == 0.0 {
        return Ok(1.0 / (n as f64 + 1.0));
    }
    // Same rounded ρ as the averaging weights.
    let rho = 1.0 - gamma_lambda;
    Ok((1.0 - rho) / -((n as f64 + 1.0) * rho.ln()).exp_m1())
}

/// `Σ_{t=1}^n (1−γλ)^{2t}`.
pub fn discounted_square_mass(n: usize, gamma_lambda: f64) -> Result<f64> {
    check_gamma_lambda(gamma_lambda, true)?;
    if gamma_lambda == 0.0 {
        return Ok(n as f64);
    }
    let rho = 1.0 - gamma_lambda;
    let log_rho2 = 2.0 * (-gamma_lambda).ln_1p();
    Ok(rho * rho * -(n as f64 * log_rho2).exp_m1() / (gamma_lambda * (2.0 - gamma_lambda)))
}

/// Right-hand sides of the two `c_n` inequalities:
/// `c_n² ≤ (γλ + 1/(n+1))²` and
/// `c_n² Σ_{t=1}^n ρ^{2t} ≤ γλ/(2−γλ) + 2/((2−γλ)(n+1))`.
pub fn c_bounds(n: usize, gamma_lambda: f64) -> Result<(f64, f64)> {
    if n < 1 {
        return Err(GeoAvgError::Range("c_n bounds need n >= 1".into()));
    }
    check_gamma_lambda(gamma_lambda, false)?;
    let m = n as f64 + 1.0;
    let bound1 = (gamma_lambda + 1.0 / m).powi(2);
    let bound2 = gamma_lambda / (2.0 - gamma_lambda) + 2.0 / ((2.0 - gamma_lambda) * m);
    Ok((bound1, bound2))
}

/// Geometric sum over one contiguous batch of iterates, with weights
/// relative to the batch start and iterates centered at the batch's first
/// iterate: `Σ_{t∈batch} ρ^{t−offset} (w_t − anchor)`, `anchor = w_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialGeometricSum {
    pub offset: usize,
    pub len: usize,
    pub weight_mass: f64,
    pub weighted_sum: Vector,
    pub anchor: Vector,
}

impl PartialGeometricSum {
    /// Uncentered sum `Σ ρ^{t−offset} w_t`.
    pub fn raw_sum(&self) -> Vector {
        &self.weighted_sum + &self.anchor * self.weight_mass
    }
}

pub fn partial_geometric_sum(
    iterates: &Iterates,
    range: Range<usize>,
    rho: f64,
) -> Result<PartialGeometricSum> {
    check_rho(rho)?;
    if range.is_empty() {
        return Err(GeoAvgError::Partition("empty batch".into()));
    }
    if range.end > iterates.len() {
        return Err(GeoAvgError::IndexOutOfRange {
            index: range.end - 1,
            last: iterates.last_index()?,
        });
    }
    let mut acc = GeometricAccumulator::new(iterates.dim(), rho, range.start);
    for t in range {
        acc.push(iterates.row(t));
    }
    Ok(acc.into_partial())
}

/// Contiguous batch ranges of at most `batch_len` iterates covering `0..len`.
pub fn batch_ranges(len: usize, batch_len: usize) -> Vec<Range<usize>> {
    let batch_len = batch_len.max(1);
    (0..len)
        .step_by(batch_len)
        .map(|s| s..(s + batch_len).min(len))
        .collect()
}

/// `K` nearly equal contiguous batches covering `0..len`.
pub fn split_ranges(len: usize, k: usize) -> Vec<Range<usize>> {
    let k = k.clamp(1, len.max(1));
    let base = len / k;
    let extra = len % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        out.push(start..start + size);
        start += size;
    }
    out
}

/// Combines per-batch sums into the full geometric average:
/// `Σ_k ρ^{offset_k} S_k / Σ_k ρ^{offset_k} m_k`, re-centered at the first
/// batch's anchor. Batches must be in order, contiguous, disjoint and start
/// at index 0. The reduction runs in batch order, so the result depends only
/// on the partition.
pub fn parallel_geometric_combine(partials: &[PartialGeometricSum], rho: f64) -> Result<Vector> {
    check_rho(rho)?;
    let first = partials
        .first()
        .ok_or_else(|| GeoAvgError::Partition("no batches".into()))?;
    let dim = first.weighted_sum.len();
    let anchor = &first.anchor;
    let mut expected = 0;
    let mut num = CompensatedSum::new(dim);
    let (mut den, mut den_comp) = (0.0, 0.0);
    for (k, p) in partials.iter().enumerate() {
        if p.offset != expected {
            return Err(GeoAvgError::Partition(format!(
                "batch {k} starts at {} but previous coverage ends at {expected}",
                p.offset
            )));
        }
        if p.len == 0 {
            return Err(GeoAvgError::Partition(format!("batch {k} is empty")));
        }
        if p.weighted_sum.len() != dim || p.anchor.len() != dim {
            return Err(GeoAvgError::DimensionMismatch {
                expected: dim,
                found: p.weighted_sum.len(),
            });
        }
        let scale = discount(rho, p.offset);
        num.add_scaled(scale, p.weighted_sum.as_slice());
        if k > 0 {
            num.add_scaled_diff(
                scale * p.weight_mass,
                p.anchor.as_slice(),
                anchor.as_slice(),
            );
        }
        neumaier(&mut den, &mut den_comp, scale * p.weight_mass);
        expected += p.len;
    }
    let mass = den + den_comp;
    let centered = num.value();
    Ok(Vector::from_iterator(
        dim,
        anchor
            .iter()
            .zip(centered.iter())
            .map(|(a, s)| a + s / mass),
    ))
}

/// Smallest trace length (number of iterates) for which `P(G > n)` is below
/// [`STOPPING_TAIL_MASS`].
pub fn required_stopping_length(gamma_lambda: f64) -> Result<usize> {
    check_gamma_lambda(gamma_lambda, false)?;
    let k = (STOPPING_TAIL_MASS.ln() / (-gamma_lambda).ln_1p()).ceil();
    Ok(k as usize + 1)
}

/// Draws `G` with `P(G = k) = γλ (1−γλ)^k`, `k = 0, 1, …`.
pub fn sample_geometric<R: Rng + ?Sized>(gamma_lambda: f64, rng: &mut R) -> usize {
    let u = 1.0 - rng.random::<f64>();
    let g = (u.ln() / (-gamma_lambda).ln_1p()).floor();
    if g >= usize::MAX as f64 {
        usize::MAX
    } else {
        g as usize
    }
}

/// Probabilistic early stopping: returns `w_G` for a geometric `G`. Its
/// expectation is the geometric average of the trace with `ρ = 1 − γλ`
/// taken to infinity. The rare draw beyond the trace end (probability
/// below [`STOPPING_TAIL_MASS`]) returns the last iterate.
pub fn geometric_stopping_sample<R: Rng + ?Sized>(
    iterates: &Iterates,
    gamma_lambda: f64,
    rng: &mut R,
) -> Result<Vector> {
    let required = required_stopping_length(gamma_lambda)?;
    if iterates.len() < required {
        return Err(GeoAvgError::Truncation {
            required,
            available: iterates.len(),
        });
    }
    let g = sample_geometric(gamma_lambda, rng).min(iterates.len() - 1);
    Ok(iterates.vector(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{ToPrimitive, Zero};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_trace(n: usize, dim: usize, seed: u64) -> Iterates {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut it = Iterates::with_capacity(dim, n + 1);
        let mut w = vec![0.0; dim];
        for _ in 0..=n {
            for v in w.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = 0.9 * *v + z;
            }
            it.push(&w).unwrap();
        }
        it
    }

    // Σ_{t=0}^n ρ^t by Kahan–Babuška summation of independently powered terms.
    fn oracle_mass(n: usize, rho: f64) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for t in 0..=n {
            let x = rho.powf(t as f64);
            let s = sum + x;
            comp += if sum.abs() >= x {
                (sum - s) + x
            } else {
                (x - s) + sum
            };
            sum = s;
        }
        sum + comp
    }

    fn rel_err(a: &Vector, b: &Vector) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn two_term_arithmetic() {
        let it = Iterates::from_rows(&[[0.0], [3.0]]).unwrap();
        let avg = average(&it, &AveragingScheme::Geometric { rho: 0.5 }).unwrap();
        assert!((avg[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reductions_are_exact() {
        let it = random_trace(300, 3, 1);
        let u = average(&it, &AveragingScheme::Uniform).unwrap();
        let g = average(&it, &AveragingScheme::Geometric { rho: 1.0 }).unwrap();
        let t = average(&it, &AveragingScheme::Tail { tau: 0 }).unwrap();
        assert_eq!(u, g);
        assert_eq!(u, t);
        let mut naive = Vector::zeros(3);
        for t in 0..it.len() {
            naive += it.vector(t);
        }
        assert!(rel_err(&u, &(naive / it.len() as f64)) < 1e-14);
    }

    #[test]
    fn constant_trace_averages_exactly() {
        let row = [0.1, -1.0 / 3.0, 7.25e-3];
        let it = Iterates::from_rows(&vec![row; 500]).unwrap();
        let expected = Vector::from_column_slice(&row);
        for scheme in [
            AveragingScheme::Uniform,
            AveragingScheme::Geometric { rho: 0.97 },
            AveragingScheme::Tail { tau: 123 },
        ] {
            assert_eq!(average(&it, &scheme).unwrap(), expected);
        }
        let parts: Vec<_> = split_ranges(500, 7)
            .into_iter()
            .map(|r| partial_geometric_sum(&it, r, 0.97).unwrap())
            .collect();
        assert_eq!(parallel_geometric_combine(&parts, 0.97).unwrap(), expected);
    }

    #[test]
    fn tail_edge_cases() {
        let it = random_trace(10, 2, 2);
        assert_eq!(
            average(&it, &AveragingScheme::Tail { tau: 10 }).unwrap(),
            it.vector(10)
        );
        assert!(matches!(
            average(&it, &AveragingScheme::Tail { tau: 11 }),
            Err(GeoAvgError::IndexOutOfRange {
                index: 11,
                last: 10
            })
        ));
        assert!(matches!(
            average(&Iterates::new(2), &AveragingScheme::Uniform),
            Err(GeoAvgError::EmptyTrace)
        ));
    }

    #[test]
    fn geometric_matches_exact_rational_oracle() {
        let it = random_trace(200, 4, 3);
        let rho = 0.9;
        let got = average(&it, &AveragingScheme::Geometric { rho }).unwrap();
        let r = BigRational::from_float(rho).unwrap();
        let mut weight = BigRational::from_integer(BigInt::from(1));
        let mut mass = BigRational::zero();
        let mut sums = vec![BigRational::zero(); 4];
        for t in 0..it.len() {
            for (s, &v) in sums.iter_mut().zip(it.row(t)) {
                *s += &weight * BigRational::from_float(v).unwrap();
            }
            mass += &weight;
            weight *= &r;
        }
        let oracle = Vector::from_iterator(4, sums.iter().map(|s| (s / &mass).to_f64().unwrap()));
        assert!(rel_err(&got, &oracle) < 1e-12);
    }

    #[test]
    fn online_initialization_and_harmonic_blend() {
        let it = random_trace(50, 2, 4);
        let mut st = OnlineAverageState::new(2);
        st.update(it.row(0), 0.7);
        assert_eq!(st.current, it.vector(0));
        assert_eq!(st.blend, 1.0);
        let mut st = OnlineAverageState::new(2);
        for t in 0..it.len() {
            st = online_update(st, it.row(t), 1.0);
            assert!((st.blend - 1.0 / (t as f64 + 1.0)).abs() < 1e-15);
        }
        let u = average(&it, &AveragingScheme::Uniform).unwrap();
        assert!(rel_err(&st.current, &u) < 1e-13);
    }

    #[test]
    fn online_matches_batch_long_run() {
        let it = random_trace(10_000, 3, 5);
        let rho = 0.999;
        let mut st = OnlineAverageState::new(3);
        for row in it.rows() {
            st.update(row, rho);
        }
        let batch = average(&it, &AveragingScheme::Geometric { rho }).unwrap();
        assert!(rel_err(&st.current, &batch) < 1e-10);
    }

    #[test]
    fn normalizer_values() {
        assert_eq!(normalizer_c(0, 0.3).unwrap(), 1.0);
        assert!((normalizer_c(1, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(normalizer_c(9, 0.0).unwrap(), 0.1);
        assert!(normalizer_c(3, 1.0).is_err());
        assert!(normalizer_c(3, -0.1).is_err());
        for &(n, gl) in &[
            (0usize, 0.1),
            (5, 0.01),
            (1000, 0.3),
            (10_000, 1e-4),
            (100_000, 1e-5),
        ] {
            let rho: f64 = 1.0 - gl;
            let err = (normalizer_c(n, gl).unwrap() * oracle_mass(n, rho) - 1.0).abs();
            assert!(err < 1e-14, "n = {n}, gl = {gl}: {err:e}");
        }
    }

    #[test]
    fn c_bounds_plug_in() {
        let (b1, _) = c_bounds(9, 0.1).unwrap();
        assert!((b1 - 0.04).abs() < 1e-15);
        assert!(c_bounds(0, 0.1).is_err());
        assert!(c_bounds(5, 0.0).is_err());
    }

    #[test]
    fn square_mass_matches_direct_sum() {
        for &(n, gl) in &[(1usize, 0.5), (10, 0.1), (500, 0.01)] {
            let rho: f64 = 1.0 - gl;
            let direct: f64 = (1..=n).map(|t| rho.powi(2 * t as i32)).sum();
            assert!(
                (discounted_square_mass(n, gl).unwrap() - direct).abs() < 1e-12 * direct.max(1.0)
            );
        }
    }

    #[test]
    fn combine_single_and_singleton_batches() {
        let it = random_trace(100, 2, 6);
        let rho = 0.95;
        let serial = average(&it, &AveragingScheme::Geometric { rho }).unwrap();
        let one = [partial_geometric_sum(&it, 0..it.len(), rho).unwrap()];
        assert_eq!(parallel_geometric_combine(&one, rho).unwrap(), serial);
        let singles: Vec<_> = (0..it.len())
            .map(|t| partial_geometric_sum(&it, t..t + 1, rho).unwrap())
            .collect();
        assert!(rel_err(&parallel_geometric_combine(&singles, rho).unwrap(), &serial) < 1e-12);
        let uneven = [0..3, 3..10, 10..11, 11..40, 40..41, 41..77, 77..101];
        let parts: Vec<_> = uneven
            .iter()
            .map(|r| partial_geometric_sum(&it, r.clone(), rho).unwrap())
            .collect();
        assert!(rel_err(&parallel_geometric_combine(&parts, rho).unwrap(), &serial) < 1e-12);
    }

    #[test]
    fn combine_rejects_gaps_and_overlaps() {
        let it = random_trace(20, 2, 7);
        let p = |r: Range<usize>| partial_geometric_sum(&it, r, 0.9).unwrap();
        assert!(matches!(
            parallel_geometric_combine(&[p(0..5), p(6..21)], 0.9),
            Err(GeoAvgError::Partition(_))
        ));
        assert!(matches!(
            parallel_geometric_combine(&[p(0..5), p(4..21)], 0.9),
            Err(GeoAvgError::Partition(_))
        ));
        assert!(matches!(
            parallel_geometric_combine(&[p(1..21)], 0.9),
            Err(GeoAvgError::Partition(_))
        ));
        assert!(parallel_geometric_combine(&[], 0.9).is_err());
    }

    #[test]
    fn split_and_batch_ranges_cover() {
        for (len, k) in [(101, 7), (10, 10), (10, 3), (5, 1)] {
            let r = split_ranges(len, k);
            assert_eq!(r.len(), k);
            assert_eq!(r[0].start, 0);
            assert_eq!(r.last().unwrap().end, len);
            assert!(r.windows(2).all(|w| w[0].end == w[1].start));
        }
        let b = batch_ranges(10, 4);
        assert_eq!(b, vec![0..4, 4..8, 8..10]);
    }

    #[test]
    fn stopping_degenerate_and_truncation() {
        let it = random_trace(100, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // γλ close to 1: w_0 with overwhelming probability.
        for _ in 0..100 {
            assert_eq!(
                geometric_stopping_sample(&it, 1.0 - 1e-12, &mut rng).unwrap(),
                it.vector(0)
            );
        }
        match geometric_stopping_sample(&it, 0.01, &mut rng) {
            Err(GeoAvgError::Truncation {
                required,
                available,
            }) => {
                assert_eq!(available, 101);
                assert!(required > 1800 && required <= 2001);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn geometric_draws_pass_chi_square() {
        let gl = 0.1;
        let draws = 100_000;
        let bins = 20;
        let mut counts = vec![0usize; bins + 1];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..draws {
            let g = sample_geometric(gl, &mut rng);
            counts[g.min(bins)] += 1;
        }
        let rho: f64 = 1.0 - gl;
        let mut stat = 0.0;
        for (k, &c) in counts.iter().enumerate() {
            let p = if k < bins {
                gl * rho.powi(k as i32)
            } else {
                rho.powi(bins as i32)
            };
            let e = p * draws as f64;
            stat += (c as f64 - e).powi(2) / e;
        }
        // 99th percentile of chi-square with 20 degrees of freedom.
        assert!(stat < 37.566, "chi-square statistic {stat}");
    }

    #[test]
    fn scheme_json_shape() {
        let s: AveragingScheme =
            serde_json::from_str(r#"{"kind": "geometric", "rho": 0.995}"#).unwrap();
        assert_eq!(s, AveragingScheme::Geometric { rho: 0.995 });
        let t: AveragingScheme = serde_json::from_str(r#"{"kind": "tail", "tau": 12}"#).unwrap();
        assert_eq!(t, AveragingScheme::Tail { tau: 12 });
        assert_eq!(
            serde_json::to_string(&AveragingScheme::Uniform).unwrap(),
            r#"{"kind":"uniform"}"#
        );
        assert!(AveragingScheme::Geometric { rho: 0.0 }.validate(3).is_err());
        assert!(AveragingScheme::Geometric { rho: 1.5 }.validate(3).is_err());
    }

    proptest! {
        #[test]
        fn weights_are_convex(n in 0usize..200, rho in 0.01f64..=1.0, tau_frac in 0.0f64..=1.0) {
            let tau = ((n as f64) * tau_frac) as usize;
            for scheme in [
                AveragingScheme::Uniform,
                AveragingScheme::Geometric { rho },
                AveragingScheme::Tail { tau },
            ] {
                let w = scheme.weights(n).unwrap();
                prop_assert!(w.iter().all(|&x| x >= 0.0));
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn scalar_average_lies_between_extremes(
            values in prop::collection::vec(-1e3f64..1e3, 1..100),
            rho in 0.01f64..=1.0,
        ) {
            let rows: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
            let it = Iterates::from_rows(&rows).unwrap();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            for scheme in [AveragingScheme::Uniform, AveragingScheme::Geometric { rho }] {
                let a = average(&it, &scheme).unwrap()[0];
                prop_assert!(a >= lo - tol && a <= hi + tol);
            }
        }

        #[test]
        fn streaming_batch_and_combine_agree(
            n in 1usize..600,
            rho in 0.5f64..=1.0,
            k in 1usize..20,
            seed in 0u64..1000,
        ) {
            let it = random_trace(n, 3, seed);
            let batch = average(&it, &AveragingScheme::Geometric { rho }).unwrap();
            let mut st = OnlineAverageState::new(3);
            for row in it.rows() {
                st.update(row, rho);
            }
            prop_assert!(rel_err(&st.current, &batch) < 1e-10);
            let parts: Vec<_> = split_ranges(it.len(), k)
                .into_iter()
                .map(|r| partial_geometric_sum(&it, r, rho).unwrap())
                .collect();
            prop_assert!(rel_err(&parallel_geometric_combine(&parts, rho).unwrap(), &batch) < 1e-12);
        }

        #[test]
        fn normalizer_identity(n in 0usize..5000, gl in 0.0f64..0.99) {
            let c = normalizer_c(n, gl).unwrap();
            prop_assert!((c * oracle_mass(n, 1.0 - gl) - 1.0).abs() < 1e-14);
        }
    }
}

//! Monte Carlo harness behind the `geoavg` binary.
//!
//! Every command is a pure function of its configuration and master seed.
//! Replicate `r` draws its data from `replicate_seed(seed, r)`, replicates run
//! on a rayon pool, and results are reduced in replicate order, so output
//! bytes do not depend on the number of threads.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{
    average, batch_ranges, c_bounds, discounted_square_mass, normalizer_c,
    parallel_geometric_combine, partial_geometric_sum, split_ranges, AveragingScheme,
};
use crate::error::{GeoAvgError, Result};
use crate::problem::{
    load_csv, make_instance, moment_constants, sample_stream, save_csv, CovariateLaw, Dataset,
    InstanceSpec, ProblemInstance,
};
use crate::regpath::{geometric_path, parallel_path, select, tail_path, PathKey, PathResult};
use crate::risk::{
    additive_report, excess_risk, find_lambda_star, finite_equivalence_series,
    limit_residual_series, theorem1_bound, variance_profile, BoundInputs, RiskReport,
    REPORT_CSV_HEADER,
};
use crate::sgd::{run, IterateTrace, SgdConfig, SgdMode};
use crate::trace::Iterates;
use crate::Vector;

/// Caps the number of worker threads of every command.
pub const THREADS_ENV: &str = "GEOAVG_THREADS";

/// Shard length used by `path`; fixed so the reduction order, and therefore
/// the output, does not depend on the worker count.
pub const PATH_SHARD_LEN: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub sgd: SgdConfig,
    #[serde(default = "default_scheme")]
    pub scheme: AveragingScheme,
    /// Number of SGD steps; traces hold `n + 1` iterates.
    pub n: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_csv: Option<String>,
    /// Size of the synthetic validation set when no file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schemes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<usize>,
}

fn default_scheme() -> AveragingScheme {
    AveragingScheme::Uniform
}

fn default_reps() -> usize {
    1
}

fn default_output() -> String {
    "geoavg".into()
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)
            .map_err(|e| GeoAvgError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_reader(file)
            .map_err(|e| GeoAvgError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks the configuration and builds the instance it describes.
    pub fn validate(&self) -> Result<ProblemInstance> {
        if self.reps == 0 {
            return Err(GeoAvgError::Config("reps must be at least 1".into()));
        }
        let instance = self.instance.build()?;
        self.sgd.validate()?;
        self.sgd.initial_point(instance.dim())?;
        self.scheme.validate(self.n)?;
        Ok(instance)
    }
}

/// Mean and standard error of replicate excess risks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRiskEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
}

impl McRiskEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let reps = values.len();
        let mean = values.iter().sum::<f64>() / reps as f64;
        let stderr = if reps > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (reps - 1) as f64 / reps as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, reps }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index`: `splitmix64(splitmix64(master) ^ index)`.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index)
}

/// Value of `GEOAVG_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(GeoAvgError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

/// Requested worker count (default: available cores), capped by
/// `GEOAVG_THREADS`.
pub fn effective_workers(requested: Option<usize>) -> Result<usize> {
    let base =
        requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let capped = match thread_cap()? {
        Some(cap) => base.min(cap),
        None => base,
    };
    Ok(capped.max(1))
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| GeoAvgError::Config(format!("thread pool: {e}")))
}

/// One SGD pass of `n` steps on a fresh stream.
pub fn simulate(
    instance: &ProblemInstance,
    sgd: &SgdConfig,
    n: usize,
    seed: u64,
) -> Result<IterateTrace> {
    let cov = matches!(
        sgd.mode,
        SgdMode::AdditiveNoisePlain | SgdMode::AdditiveNoiseReg
    )
    .then(|| instance.covariance());
    run(
        sample_stream(instance, n, seed),
        sgd,
        instance.dim(),
        cov,
        &format!("synthetic:seed={seed}"),
    )
}

/// `λ` with `γλ = c/(n+1)` for SGD stepsize `η`, where `γ = η/(1+ηλ)`.
pub fn lambda_for_level(eta: f64, c: f64, n: usize) -> f64 {
    c / (eta * (n as f64 + 1.0 - c))
}

/// `λ` whose discount `ρ = 1 − γλ`, `γ = η/(1+ηλ)`, equals `rho`.
pub fn lambda_for_rho(eta: f64, rho: f64) -> f64 {
    (1.0 - rho) / (rho * eta)
}

fn bound_report(
    instance: &ProblemInstance,
    sgd: &SgdConfig,
    lambda: f64,
    n: usize,
) -> Result<RiskReport> {
    let w0 = sgd.initial_point(instance.dim())?;
    let inputs = BoundInputs::from_eta(instance, sgd.eta, lambda, n, w0)?;
    match sgd.mode {
        SgdMode::Plain => theorem1_bound(&inputs),
        SgdMode::AdditiveNoisePlain => {
            additive_report(&inputs, &instance.gradient_noise_covariance())
        }
        other => Err(GeoAvgError::BoundInapplicable(format!(
            "no excess-risk bound for {other:?} iterates; use plain or additive_noise_plain"
        ))),
    }
}

/// Monte Carlo excess risk of the geometric averages at levels
/// `γλ = c/(n+1)` for each `c` in `levels`, paired with the matching bound.
/// One SGD pass per replicate serves every level.
pub fn bound_check(
    instance: &ProblemInstance,
    sgd: &SgdConfig,
    n: usize,
    levels: &[f64],
    reps: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<RiskReport>> {
    let lambdas: Vec<f64> = levels
        .iter()
        .map(|&c| lambda_for_level(sgd.eta, c, n))
        .collect();
    let rhos: Vec<f64> = lambdas
        .iter()
        .map(|&l| 1.0 - sgd.eta / (1.0 + sgd.eta * l) * l)
        .collect();
    let per_rep: Vec<Vec<f64>> = thread_pool(workers)?.install(|| {
        (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let trace = simulate(instance, sgd, n, replicate_seed(seed, r))?;
                rhos.iter()
                    .map(|&rho| {
                        excess_risk(
                            &average(&trace.iterates, &AveragingScheme::Geometric { rho })?,
                            instance,
                        )
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    lambdas
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let values: Vec<f64> = per_rep.iter().map(|v| v[j]).collect();
            let est = McRiskEstimate::from_values(&values);
            Ok(bound_report(instance, sgd, l, n)?.with_estimate(est.mean, est.stderr))
        })
        .collect()
}

// ---------------------------------------------------------------- run

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub estimate: McRiskEstimate,
    pub report: Option<RiskReport>,
    /// Why no bound was attached, when none was.
    pub bound_error: Option<String>,
}

impl RunOutcome {
    pub fn csv(&self, n: usize) -> String {
        let row = match &self.report {
            Some(r) => r.csv_row(),
            None => format!(",,{n},{},{},,,,,", self.estimate.mean, self.estimate.stderr),
        };
        format!("{REPORT_CSV_HEADER}\n{row}\n")
    }
}

/// Mean excess risk of `config.scheme` over `config.reps` replicates, with
/// the finite-time bound for plain geometric/uniform averaging (or its
/// additive-noise counterpart) when it applies.
pub fn cmd_run(config: &ExperimentConfig, workers: usize) -> Result<RunOutcome> {
    let instance = config.validate()?;
    let values: Vec<f64> = thread_pool(workers)?.install(|| {
        (0..config.reps as u64)
            .into_par_iter()
            .map(|r| {
                let trace = simulate(
                    &instance,
                    &config.sgd,
                    config.n,
                    replicate_seed(config.seed, r),
                )?;
                excess_risk(&average(&trace.iterates, &config.scheme)?, &instance)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let estimate = McRiskEstimate::from_values(&values);
    let lambda = match config.scheme {
        AveragingScheme::Uniform => Ok(0.0),
        AveragingScheme::Geometric { rho } => Ok(lambda_for_rho(config.sgd.eta, rho)),
        AveragingScheme::Tail { .. } => Err(GeoAvgError::BoundInapplicable(
            "no excess-risk bound for tail averaging".into(),
        )),
    };
    let report = lambda.and_then(|l| bound_report(&instance, &config.sgd, l, config.n));
    Ok(match report {
        Ok(r) => RunOutcome {
            report: Some(r.with_estimate(estimate.mean, estimate.stderr)),
            estimate,
            bound_error: None,
        },
        Err(GeoAvgError::BoundInapplicable(msg)) => RunOutcome {
            estimate,
            report: None,
            bound_error: Some(msg),
        },
        Err(e) => return Err(e),
    })
}

fn out_path(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}{suffix}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    outcome: &'a RunOutcome,
}

/// Writes `<out>.csv` (one report row) and `<out>.json`.
pub fn write_run(config: &ExperimentConfig, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    let csv = out_path(&config.output, ".csv");
    std::fs::write(&csv, outcome.csv(config.n))?;
    let json = out_path(&config.output, ".json");
    write_json(&json, &RunSummary { config, outcome })?;
    Ok(vec![csv, json])
}

// ---------------------------------------------------------------- verify

pub const VERIFY_SUITES: [&str; 6] = ["prop1", "prop2", "prop3", "lemma1", "parallel", "additive"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub checks: Vec<Check>,
    /// Plain-text tables printed before the check lines.
    pub tables: Vec<String>,
}

impl VerifyReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.into(),
            checks: Vec::new(),
            tables: Vec::new(),
        }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for t in &self.tables {
            s.push_str(t);
            s.push('\n');
        }
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            s.push_str(&format!("{tag} {}/{}: {}\n", self.suite, c.name, c.detail));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    pub reps: Option<usize>,
    pub seed: u64,
    pub workers: usize,
}

/// `Σ = diag(1, 0.5, 0.25, 0.1, 0.01)`, `w* = 1`, noiseless.
pub fn limit_check_instance() -> ProblemInstance {
    make_instance(
        5,
        &[1.0, 0.5, 0.25, 0.1, 0.01],
        &[1.0; 5],
        0.0,
        CovariateLaw::Gaussian,
        None,
    )
    .expect("valid default instance")
}

/// Scalar instance with `s = 1`, `E[xy] = 1`.
pub fn scalar_check_instance() -> ProblemInstance {
    make_instance(1, &[1.0], &[1.0], 0.0, CovariateLaw::Gaussian, None)
        .expect("valid default instance")
}

/// `d = 10`, `s_i = 1/i`, `w* = 1/√d`, `σ = 0.5`, Gaussian covariates.
pub fn bound_check_instance() -> ProblemInstance {
    let d = 10;
    let spectrum: Vec<f64> = (1..=d).map(|i| 1.0 / i as f64).collect();
    let w_star = vec![1.0 / (d as f64).sqrt(); d];
    make_instance(d, &spectrum, &w_star, 0.5, CovariateLaw::Gaussian, None)
        .expect("valid default instance")
}

/// `d = 10`, `s_i = 1/i²`.
pub fn ill_conditioned_instance() -> ProblemInstance {
    let d = 10;
    let spectrum: Vec<f64> = (1..=d).map(|i| 1.0 / (i * i) as f64).collect();
    make_instance(
        d,
        &spectrum,
        &vec![1.0; d],
        1.0,
        CovariateLaw::Gaussian,
        None,
    )
    .expect("valid default instance")
}

/// Log-spaced integers in `[lo, hi]`, deduplicated.
pub fn log_grid_usize(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    out
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Runs one verification suite with its fixed default grid.
pub fn cmd_verify(suite: &str, opts: &VerifyOptions) -> Result<VerifyReport> {
    let workers = opts.workers.max(1);
    match suite {
        "prop1" => verify_prop1(),
        "prop2" => verify_prop2(),
        "prop3" => Ok(verify_prop3()),
        "lemma1" => verify_lemma1(),
        "parallel" => verify_parallel(opts.seed, workers),
        "additive" => verify_additive(opts.reps.unwrap_or(500), opts.seed, workers),
        other => Err(GeoAvgError::Config(format!(
            "unknown suite {other:?}; expected one of {}",
            VERIFY_SUITES.join(", ")
        ))),
    }
}

fn verify_prop1() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("prop1");
    let inst = limit_check_instance();
    let (gamma, lambda, steps) = (0.1, 0.5, 10_000);
    let series = limit_residual_series(&inst, gamma, lambda, steps)?;
    let mut table = String::from("t,residual_regularized,residual_averaged\n");
    for t in [0, 10, 100, 1000, steps] {
        table.push_str(&format!("{t},{:e},{:e}\n", series[t].0, series[t].1));
    }
    rep.tables.push(table);
    let (r_reg, r_avg) = series[steps];
    rep.check(
        "regularized_limit",
        r_reg <= 1e-8,
        format!("{r_reg:e} <= 1e-8"),
    );
    rep.check(
        "averaged_limit",
        r_avg <= 1e-8,
        format!("{r_avg:e} <= 1e-8"),
    );
    Ok(rep)
}

/// Largest `r(t+1)/r(t) − ρ` over `t ≥ from` where both residuals stay
/// above `floor` (below it they are rounding noise).
pub fn max_ratio_excess(
    residuals: &[f64],
    rho: f64,
    from: usize,
    floor: f64,
) -> Option<(usize, f64)> {
    (from..residuals.len().saturating_sub(1))
        .filter(|&t| residuals[t] > floor && residuals[t + 1] > floor)
        .map(|t| (t, residuals[t + 1] / residuals[t] - rho))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Residuals below this are treated as rounding noise in ratio checks.
pub const RATIO_NOISE_FLOOR: f64 = 1e-12;

fn verify_prop2() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("prop2");
    let inst = scalar_check_instance();
    let gamma = 0.1;
    for gl in [0.01, 0.1, 0.5] {
        let series = finite_equivalence_series(&inst, gamma, gl / gamma, 1000)?;
        let rho = 1.0 - gl;
        let mut table = format!("gamma_lambda={gl}\nt,r_paper,r_exact\n");
        for t in [0, 1, 2, 5, 10, 20, 50, 100, 500, 1000] {
            table.push_str(&format!(
                "{t},{:e},{:e}\n",
                series[t].r_paper, series[t].r_exact
            ));
        }
        rep.tables.push(table);
        let worst = series.iter().map(|r| r.r_exact).fold(0.0, f64::max);
        rep.check(
            format!("gl={gl}/r_exact"),
            worst <= 1e-10,
            format!("max {worst:e} <= 1e-10"),
        );
        let printed: Vec<f64> = series.iter().map(|r| r.r_paper).collect();
        match max_ratio_excess(&printed, rho, 5, RATIO_NOISE_FLOOR) {
            Some((t, excess)) => rep.check(
                format!("gl={gl}/r_paper_ratio"),
                excess <= 1e-6,
                format!("max r(t+1)/r(t) - rho = {excess:e} at t={t}, limit 1e-6"),
            ),
            None => rep.check(
                format!("gl={gl}/r_paper_ratio"),
                true,
                "residual below noise floor",
            ),
        }
    }
    Ok(rep)
}

fn verify_prop3() -> VerifyReport {
    let mut rep = VerifyReport::new("prop3");
    let ill = ill_conditioned_instance();
    let (gamma, n) = (0.1, 50);
    match find_lambda_star(&ill, gamma, n) {
        Some(l) => {
            let f = variance_profile(&ill, gamma, n, l).0;
            rep.check(
                "ill_conditioned",
                f < 0.2,
                format!("lambda*={l:e}, f(lambda*)={f:e} < d/n=0.2"),
            );
        }
        None => rep.check("ill_conditioned", false, "no lambda* found"),
    }
    let ident = make_instance(
        10,
        &[1.0; 10],
        &[0.0; 10],
        1.0,
        CovariateLaw::Gaussian,
        None,
    )
    .expect("valid");
    for n in [400, 1000, 10_000] {
        let found = find_lambda_star(&ident, gamma, n);
        rep.check(
            format!("identity_n={n}"),
            found.is_none(),
            format!("lambda* = {found:?}, expected none"),
        );
    }
    rep
}

fn verify_lemma1() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("lemma1");
    let ns = log_grid_usize(1, 10_000, 60);
    let gls = log_grid(1e-4, 0.5, 60);
    let (mut margin1, mut margin2) = (f64::INFINITY, f64::INFINITY);
    for &n in &ns {
        for &gl in &gls {
            let c = normalizer_c(n, gl)?;
            let (b1, b2) = c_bounds(n, gl)?;
            margin1 = margin1.min(b1 - c * c);
            margin2 = margin2.min(b2 - c * c * discounted_square_mass(n, gl)?);
        }
    }
    let cells = ns.len() * gls.len();
    rep.check(
        "c_squared",
        margin1 >= 0.0,
        format!("min margin {margin1:e} over {cells} cells"),
    );
    rep.check(
        "c_squared_mass",
        margin2 >= 0.0,
        format!("min margin {margin2:e} over {cells} cells"),
    );
    Ok(rep)
}

fn relative_error(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn verify_parallel(seed: u64, workers: usize) -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("parallel");
    let inst = bound_check_instance();
    let eta = 1.0 / (2.0 * moment_constants(&inst)?.r_squared);
    let n = 1000;
    let trace = simulate(&inst, &SgdConfig::plain(eta), n, replicate_seed(seed, 0))?;
    let it = &trace.iterates;
    for rho in [0.9, 0.99, 0.999] {
        let serial = average(it, &AveragingScheme::Geometric { rho })?;
        for k in [1, 2, 7, 16, n + 1] {
            let parts = split_ranges(n + 1, k)
                .into_iter()
                .map(|r| partial_geometric_sum(it, r, rho))
                .collect::<Result<Vec<_>>>()?;
            let err = relative_error(&parallel_geometric_combine(&parts, rho)?, &serial);
            rep.check(
                format!("rho={rho}/K={k}"),
                err <= 1e-12,
                format!("relative error {err:e} <= 1e-12"),
            );
        }
    }
    let grid = [0.0, 0.01, 0.1, 1.0];
    let shards = batch_ranges(n + 1, 64);
    let reference = parallel_path(it, &shards, eta, &grid, 1)?;
    let serial = geometric_path(it, eta, &grid)?;
    let worst = reference
        .iter()
        .zip(&serial)
        .map(|(a, b)| relative_error(&a.solution, &b.solution))
        .fold(0.0, f64::max);
    rep.check(
        "path_vs_serial",
        worst <= 1e-12,
        format!("relative error {worst:e} <= 1e-12"),
    );
    for w in [2, 4, 8, workers] {
        let same = parallel_path(it, &shards, eta, &grid, w)? == reference;
        rep.check(format!("path_workers={w}"), same, "identical to one worker");
    }
    Ok(rep)
}

fn verify_additive(reps: usize, seed: u64, workers: usize) -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("additive");
    let inst = bound_check_instance();
    let eta = 1.0 / (2.0 * moment_constants(&inst)?.r_squared);
    let sgd = SgdConfig::plain(eta).with_mode(SgdMode::AdditiveNoisePlain);
    for r in bound_check(&inst, &sgd, 1000, &[0.0, 1.0], reps, seed, workers)? {
        rep.check(
            format!("lambda={:.6}", r.lambda),
            r.satisfied == Some(true),
            format!(
                "mc {:e} +- {:e} vs bound {:e}",
                r.excess_risk.unwrap_or(f64::NAN),
                r.stderr.unwrap_or(f64::NAN),
                r.bound_total
            ),
        );
    }
    Ok(rep)
}

// ---------------------------------------------------------------- path

#[derive(Debug, Clone, PartialEq)]
pub enum PathGrid {
    Lambda(Vec<f64>),
    Tau(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub trace_id: String,
    pub gamma: f64,
    pub n: usize,
    pub key_kind: String,
    pub selected_key: f64,
    pub selected_validation_error: f64,
    pub entries: usize,
    pub validation_source: String,
}

/// One SGD pass, stored as `<out>_trace.{csv,json}`; the path over `grid`
/// is scored on validation data and written to `<out>_path.{csv,json}`.
/// Geometric keys use `ρ = 1 − ηλ` with the pass's stepsize `η`.
pub fn cmd_path(
    config: &ExperimentConfig,
    grid: Option<PathGrid>,
    validation: Option<&Path>,
    workers: usize,
) -> Result<(PathResult, PathSummary)> {
    let instance = config.validate()?;
    let grid = match grid {
        Some(g) => g,
        None => match (&config.lambda_grid, &config.tau_grid) {
            (Some(l), None) => PathGrid::Lambda(l.clone()),
            (None, Some(t)) => PathGrid::Tau(t.clone()),
            _ => {
                return Err(GeoAvgError::Config(
                    "path needs exactly one of lambda_grid or tau_grid".into(),
                ))
            }
        },
    };
    let train_seed = replicate_seed(config.seed, 0);
    let trace = simulate(&instance, &config.sgd, config.n, train_seed)?;
    trace.save(out_path(&config.output, "_trace"))?;

    let validation_file = validation
        .map(Path::to_path_buf)
        .or_else(|| config.validation_csv.as_ref().map(PathBuf::from));
    let validation: Dataset = match validation_file {
        Some(p) => load_csv(p)?,
        None => sample_stream(
            &instance,
            config.validation_size.unwrap_or(config.n.max(1)),
            replicate_seed(config.seed, 1),
        )
        .into_dataset(),
    };
    if validation.dim() != Some(instance.dim()) {
        return Err(GeoAvgError::DimensionMismatch {
            expected: instance.dim(),
            found: validation.dim().unwrap_or(0),
        });
    }
    let gamma = config.sgd.eta;
    let points = match &grid {
        PathGrid::Lambda(l) => {
            let shards = batch_ranges(trace.iterates.len(), PATH_SHARD_LEN);
            parallel_path(&trace.iterates, &shards, gamma, l, workers)?
        }
        PathGrid::Tau(t) => tail_path(&trace.iterates, t)?,
    };
    let result = select(points, &validation, &trace.source)?;
    let chosen = result.selected();
    let summary = PathSummary {
        trace_id: trace.source.clone(),
        gamma,
        n: config.n,
        key_kind: chosen.key.kind().into(),
        selected_key: chosen.key.value(),
        selected_validation_error: chosen.validation_error,
        entries: result.entries.len(),
        validation_source: validation.source.clone(),
    };
    result.write_csv(File::create(out_path(&config.output, "_path.csv"))?)?;
    write_json(&out_path(&config.output, "_path.json"), &summary)?;
    Ok((result, summary))
}

// ---------------------------------------------------------------- compare

/// Averaging scheme as given on the command line, resolved per horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeSpec {
    Uniform,
    GeometricRho(f64),
    /// `ρ = 1 − ηλ`.
    GeometricLambda(f64),
    /// `λ*` from the variance profile at each horizon; uniform when none.
    GeometricLambdaStar,
    TailTau(usize),
    /// `τ = ⌊frac · n⌋`.
    TailFrac(f64),
}

impl std::str::FromStr for SchemeSpec {
    type Err = GeoAvgError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || GeoAvgError::Config(format!("cannot parse scheme {s:?}"));
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let kv = arg.map(|a| a.split_once('=').ok_or_else(bad)).transpose()?;
        match (kind, kv) {
            ("uniform", None) => Ok(Self::Uniform),
            ("geometric", Some(("rho", v))) => v.parse().map(Self::GeometricRho).map_err(|_| bad()),
            ("geometric", Some(("lambda", "star"))) => Ok(Self::GeometricLambdaStar),
            ("geometric", Some(("lambda", v))) => {
                v.parse().map(Self::GeometricLambda).map_err(|_| bad())
            }
            ("tail", Some(("tau", v))) => v.parse().map(Self::TailTau).map_err(|_| bad()),
            ("tail", Some(("frac", v))) => v.parse().map(Self::TailFrac).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl SchemeSpec {
    pub fn resolve(
        &self,
        n: usize,
        eta: f64,
        instance: &ProblemInstance,
    ) -> Result<AveragingScheme> {
        let scheme = match *self {
            Self::Uniform => AveragingScheme::Uniform,
            Self::GeometricRho(rho) => AveragingScheme::Geometric { rho },
            Self::GeometricLambda(l) => AveragingScheme::Geometric { rho: 1.0 - eta * l },
            Self::GeometricLambdaStar => match find_lambda_star(instance, eta, n.max(1)) {
                Some(l) => AveragingScheme::Geometric { rho: 1.0 - eta * l },
                None => AveragingScheme::Uniform,
            },
            Self::TailTau(tau) => AveragingScheme::Tail { tau },
            Self::TailFrac(f) => {
                if !(0.0..=1.0).contains(&f) {
                    return Err(GeoAvgError::Config(format!(
                        "tail fraction {f} outside [0, 1]"
                    )));
                }
                AveragingScheme::Tail {
                    tau: (f * n as f64).floor() as usize,
                }
            }
        };
        scheme.validate(n)?;
        Ok(scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareResult {
    pub labels: Vec<String>,
    pub horizons: Vec<usize>,
    /// `[horizon][scheme]`.
    pub estimates: Vec<Vec<McRiskEstimate>>,
    /// `[replicate][horizon][scheme]` excess risks.
    #[serde(skip)]
    pub per_replicate: Vec<Vec<Vec<f64>>>,
}

/// Excess risk of each scheme at each horizon, all schemes evaluated on the
/// same replicate streams (common random numbers). Horizon `n` uses the
/// first `n` steps of one pass of `max(horizons)` steps.
pub fn cmd_compare(
    config: &ExperimentConfig,
    labels: &[String],
    horizons: &[usize],
    workers: usize,
) -> Result<CompareResult> {
    let instance = config.validate()?;
    if labels.len() < 2 {
        return Err(GeoAvgError::Config(
            "compare needs at least two schemes".into(),
        ));
    }
    let specs = labels
        .iter()
        .map(|l| l.parse())
        .collect::<Result<Vec<SchemeSpec>>>()?;
    let horizons: Vec<usize> = if horizons.is_empty() {
        vec![config.n]
    } else {
        horizons.to_vec()
    };
    let longest = *horizons.iter().max().expect("nonempty");
    let schemes: Vec<Vec<AveragingScheme>> = horizons
        .iter()
        .map(|&n| {
            specs
                .iter()
                .map(|s| s.resolve(n, config.sgd.eta, &instance))
                .collect()
        })
        .collect::<Result<_>>()?;
    let per_replicate: Vec<Vec<Vec<f64>>> = thread_pool(workers)?.install(|| {
        (0..config.reps as u64)
            .into_par_iter()
            .map(|r| {
                let trace = simulate(
                    &instance,
                    &config.sgd,
                    longest,
                    replicate_seed(config.seed, r),
                )?;
                horizons
                    .iter()
                    .zip(&schemes)
                    .map(|(&n, row)| {
                        let prefix: Iterates = trace.iterates.slice(0..n + 1)?;
                        row.iter()
                            .map(|s| excess_risk(&average(&prefix, s)?, &instance))
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let estimates = (0..horizons.len())
        .map(|h| {
            (0..labels.len())
                .map(|s| {
                    let v: Vec<f64> = per_replicate.iter().map(|rep| rep[h][s]).collect();
                    McRiskEstimate::from_values(&v)
                })
                .collect()
        })
        .collect();
    Ok(CompareResult {
        labels: labels.to_vec(),
        horizons,
        estimates,
        per_replicate,
    })
}

/// Writes `<out>_compare.csv` (columns `n, <scheme>_mean, <scheme>_stderr …`),
/// `<out>_compare_reps.csv` (`replicate, n, <scheme> …`) and
/// `<out>_compare.json`.
pub fn write_compare(prefix: &str, result: &CompareResult) -> Result<Vec<PathBuf>> {
    let wide = out_path(prefix, "_compare.csv");
    let mut w = csv::Writer::from_path(&wide)?;
    let mut header = vec!["n".to_string()];
    for l in &result.labels {
        header.push(format!("{l}_mean"));
        header.push(format!("{l}_stderr"));
    }
    w.write_record(&header)?;
    for (h, &n) in result.horizons.iter().enumerate() {
        let mut row = vec![n.to_string()];
        for e in &result.estimates[h] {
            row.push(format!("{}", e.mean));
            row.push(format!("{}", e.stderr));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let reps = out_path(prefix, "_compare_reps.csv");
    let mut w = csv::Writer::from_path(&reps)?;
    let mut header = vec!["replicate".to_string(), "n".to_string()];
    header.extend(result.labels.iter().cloned());
    w.write_record(&header)?;
    for (r, rep) in result.per_replicate.iter().enumerate() {
        for (h, &n) in result.horizons.iter().enumerate() {
            let mut row = vec![r.to_string(), n.to_string()];
            row.extend(rep[h].iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let json = out_path(prefix, "_compare.json");
    write_json(&json, result)?;
    Ok(vec![wide, reps, json])
}

// ---------------------------------------------------------------- synth

/// Writes `config.n` samples to `<out>.csv`. The stream is the one `path`
/// trains on for the same configuration.
pub fn cmd_synth(config: &ExperimentConfig) -> Result<(PathBuf, Dataset)> {
    let instance = config.validate()?;
    let data = sample_stream(&instance, config.n, replicate_seed(config.seed, 0)).into_dataset();
    let path = out_path(&config.output, ".csv");
    save_csv(&data, &path)?;
    Ok((path, data))
}

/// The path key of a selected entry, for reporting.
pub fn describe_key(key: &PathKey) -> String {
    format!("{}={}", key.kind(), key.value())
}

//! Seeded Monte-Carlo experiments.
//!
//! A run sweeps the configured sparsities, draws `trials` instances per
//! sparsity and hands every instance to every algorithm, so algorithms are
//! compared on identical data. Instance seeds are SHA-256 digests of
//! `(master_seed, sparsity, trial)`; per-trial rows are sorted by
//! `(algorithm, sparsity, trial)` before output, so the trial CSV is
//! independent of the worker count.

mod model;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{baseline_recover, BaselineKind, BaselineSpec};
use crate::ensembles::{
    gen_matrix, read_matrix_csv, rng_from_seed, MatrixEnsemble, ProblemInstance, SignalDistribution, SnrDb,
};
use crate::error::{Error, Result};
use crate::linalg::{IndexSet, Scalar, ScalarField};
use crate::ridge::{eta2_for, SblConfig};
use crate::scorers::{train_scorer, CorrelationScorer, IndexScorer, MlpScorer, TrainConfig};
use crate::treesearch::{epsilon_bar, tsn, TsnParams};

pub use model::{load_model, model_from_json, model_to_json, persist_model, FORMAT_VERSION};

/// Reads a JSON or TOML document (TOML when the extension is `.toml`),
/// reporting the field path of any mismatch.
pub fn load_document<C: DeserializeOwned>(path: impl AsRef<Path>) -> Result<C> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display();
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        let value: toml::Value = toml::from_str(&text).map_err(|e| Error::config(format!("{file}"), e.to_string()))?;
        serde_path_to_error::deserialize(value)
            .map_err(|e| Error::config(format!("{file}: {}", e.path()), e.inner().to_string()))
    } else {
        let mut de = serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(&mut de)
            .map_err(|e| Error::config(format!("{file}: {}", e.path()), e.inner().to_string()))
    }
}

fn resolve(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

/// Where the sensing matrix of each trial comes from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum MatrixSource {
    /// A fresh matrix per trial, drawn from the trial seed.
    #[default]
    Resample,
    /// One matrix for the whole run, drawn from `seed`.
    Fixed { seed: u64 },
    /// One matrix read from a CSV file.
    File { path: PathBuf },
}

impl MatrixSource {
    fn is_fixed(&self) -> bool {
        !matches!(self, MatrixSource::Resample)
    }

    fn load<T: Scalar>(&self, ensemble: &MatrixEnsemble, base: Option<&Path>) -> Result<Option<DMatrix<T>>> {
        match self {
            MatrixSource::Resample => Ok(None),
            MatrixSource::Fixed { seed } => Ok(Some(gen_matrix(ensemble, &mut rng_from_seed(*seed))?)),
            MatrixSource::File { path } => {
                let phi: DMatrix<T> = read_matrix_csv(resolve(base, path))?.into_typed()?;
                if phi.shape() != (ensemble.m, ensemble.n) {
                    return Err(Error::config(
                        "matrix.path",
                        format!("matrix is {:?}, ensemble says {}x{}", phi.shape(), ensemble.m, ensemble.n),
                    ));
                }
                Ok(Some(phi))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ScorerRef {
    #[default]
    Correlation,
    Model { path: PathBuf },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TsnPreset {
    #[default]
    Tau1,
    Tau2,
    Tau3,
}

/// Tree-search settings; unset fields fall back to the preset, and an unset
/// `epsilon` means the per-instance bound `max(‖y‖·10^(−snr/20), 1e−5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsnSpec {
    pub k: usize,
    #[serde(default)]
    pub preset: TsnPreset,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub z: Option<usize>,
    #[serde(default)]
    pub stage_depths: Option<Vec<usize>>,
    #[serde(default)]
    pub stage_widths: Option<Vec<usize>>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub scorer: ScorerRef,
    /// Run with `k = s` and return the `k`-support without thresholding.
    #[serde(default)]
    pub known_sparsity: bool,
    #[serde(default)]
    pub ridge_max_iter: Option<usize>,
}

impl TsnSpec {
    pub fn new(k: usize) -> Self {
        TsnSpec {
            k,
            preset: TsnPreset::Tau1,
            q: None,
            z: None,
            stage_depths: None,
            stage_widths: None,
            t_max: None,
            epsilon: None,
            scorer: ScorerRef::Correlation,
            known_sparsity: false,
            ridge_max_iter: None,
        }
    }

    /// Concrete parameters for an `m`-row problem, searching for `k` indices.
    pub fn params(&self, m: usize, k: usize, epsilon: f64) -> TsnParams {
        let mut p = match self.preset {
            TsnPreset::Tau1 => TsnParams::tau1(m, epsilon),
            TsnPreset::Tau2 => TsnParams::tau2(m, epsilon),
            TsnPreset::Tau3 => TsnParams::tau3(m, epsilon),
        };
        if let Some(q) = self.q {
            p.q = q;
        }
        if let Some(z) = self.z {
            p.z = z;
        }
        if let Some(d) = &self.stage_depths {
            p.stage_depths = d.clone();
        }
        if let Some(w) = &self.stage_widths {
            p.stage_widths = w.clone();
        }
        if let Some(t) = self.t_max {
            p.t_max = t;
        }
        p.known_sparsity = self.known_sparsity;
        if self.known_sparsity {
            truncate_stages(&mut p, k);
        }
        p
    }

    fn k_for(&self, s: usize) -> usize {
        if self.known_sparsity {
            s
        } else {
            self.k
        }
    }
}

/// Shortens the stage schedule so its depths sum to at most `k`.
pub fn truncate_stages(p: &mut TsnParams, k: usize) {
    let mut left = k;
    let mut depths = Vec::new();
    let mut widths = Vec::new();
    for (&d, &w) in p.stage_depths.iter().zip(&p.stage_widths) {
        if left == 0 {
            break;
        }
        depths.push(d.min(left));
        widths.push(w);
        left -= d.min(left);
    }
    p.stage_depths = depths;
    p.stage_widths = widths;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Baseline(BaselineSpec),
    Tsn(TsnSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub name: String,
    #[serde(flatten)]
    pub method: Method,
}

fn default_exact_tol() -> f64 {
    1e-6
}

fn noiseless() -> SnrDb {
    SnrDb::NOISELESS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ensemble: MatrixEnsemble,
    /// Defaults to the symmetric interval distribution of the ensemble's field.
    #[serde(default)]
    pub distribution: Option<SignalDistribution>,
    pub sparsity: Vec<usize>,
    #[serde(default = "noiseless")]
    pub snr_db: SnrDb,
    pub trials: usize,
    pub master_seed: u64,
    pub algorithms: Vec<AlgorithmConfig>,
    #[serde(default = "default_exact_tol")]
    pub exact_tol: f64,
    #[serde(default)]
    pub matrix: MatrixSource,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn distribution(&self) -> SignalDistribution {
        self.distribution
            .unwrap_or_else(|| SignalDistribution::symmetric_for(self.ensemble.kind.field()))
    }

    /// Checks every field that can be checked without touching the disk.
    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.ensemble.m, self.ensemble.n);
        self.ensemble.validate().map_err(|e| Error::config("ensemble", e.to_string()))?;
        let dist = self.distribution();
        dist.validate().map_err(|e| Error::config("distribution", e.to_string()))?;
        if dist.kind.field() != self.ensemble.kind.field() {
            return Err(Error::config(
                "distribution.kind",
                format!("{} signal on a {} ensemble", dist.kind.field(), self.ensemble.kind.field()),
            ));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.sparsity.is_empty() {
            return Err(Error::config("sparsity", "needs at least one value"));
        }
        if let Some((i, s)) = self.sparsity.iter().enumerate().find(|(_, &s)| s > n) {
            return Err(Error::config(format!("sparsity[{i}]"), format!("{s} exceeds n = {n}")));
        }
        if !(self.exact_tol >= 0.0) {
            return Err(Error::config("exact_tol", "must be nonnegative"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "needs at least one entry"));
        }
        for (i, alg) in self.algorithms.iter().enumerate() {
            let at = |field: &str| format!("algorithms[{i}].{field}");
            if self.algorithms[..i].iter().any(|a| a.name == alg.name) {
                return Err(Error::config(at("name"), format!("duplicate name `{}`", alg.name)));
            }
            for &s in self.sparsity.iter().filter(|&&s| s > 0) {
                match &alg.method {
                    Method::Baseline(spec) => {
                        let spec = BaselineSpec { sparsity: s, ..spec.clone() };
                        spec.validate(m, n).map_err(|e| Error::config(at("kind"), e.to_string()))?;
                    }
                    Method::Tsn(spec) => {
                        let k = spec.k_for(s);
                        spec.params(m, k, 0.0)
                            .validate(k, m, n)
                            .map_err(|e| Error::config(at("k"), e.to_string()))?;
                    }
                }
            }
            if let Method::Tsn(TsnSpec {
                scorer: ScorerRef::Model { .. },
                ..
            }) = &alg.method
            {
                if !self.matrix.is_fixed() {
                    return Err(Error::config(
                        at("scorer"),
                        "a trained scorer needs a fixed matrix (matrix.mode = fixed or file)",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Instance seed for one `(sparsity, trial)` cell entry.
pub fn derive_seed(master_seed: u64, sparsity: usize, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((sparsity as u64).to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Short digest of `(Φ, x0, w)` used to confirm that paired trials saw the same data.
pub fn instance_checksum<T: Scalar>(inst: &ProblemInstance<T>) -> String {
    let mut h = Sha256::new();
    for v in inst.phi.iter().chain(inst.x0.iter()).chain(inst.noise.iter()) {
        let (re, im) = v.parts();
        h.update(re.to_le_bytes());
        h.update(im.to_le_bytes());
    }
    let digest = h.finalize();
    let mut out = String::with_capacity(16);
    for b in &digest[..8] {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub algorithm: String,
    pub sparsity: usize,
    pub trial: usize,
    pub seed: u64,
    pub instance_checksum: String,
    pub exact_recovery: bool,
    pub rel_error: f64,
    pub noise_bound_success: bool,
    pub support_overlap: f64,
    pub support_size: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub sparsity: usize,
    pub snr_db: SnrDb,
    pub mean_rel_error: f64,
    pub recovery_rate: f64,
    pub noise_bound_rate: f64,
    pub mean_overlap: f64,
    pub mean_wall_seconds: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub trials: Vec<TrialRow>,
    pub summary: Vec<SummaryRow>,
}

enum Prepared<T: Scalar> {
    Baseline(BaselineSpec),
    Tsn {
        spec: TsnSpec,
        scorer: Box<dyn IndexScorer<T>>,
    },
}

fn load_scorer<T: Scalar>(
    scorer: &ScorerRef,
    base: Option<&Path>,
    m: usize,
    n: usize,
    at: &str,
) -> Result<Box<dyn IndexScorer<T>>> {
    match scorer {
        ScorerRef::Correlation => Ok(Box::new(CorrelationScorer)),
        ScorerRef::Model { path } => {
            let model = load_model(resolve(base, path))?;
            if model.field() != T::FIELD || model.m() != m || model.n() != n {
                return Err(Error::config(
                    at,
                    format!(
                        "model is a {} {}x{} scorer, experiment needs {} {m}x{n}",
                        model.field(),
                        model.m(),
                        model.n(),
                        T::FIELD
                    ),
                ));
            }
            Ok(Box::new(model))
        }
    }
}

/// Estimate and support produced by one algorithm on one instance.
fn recover<T: Scalar>(
    alg: &Prepared<T>,
    inst: &ProblemInstance<T>,
    s: usize,
    dist: &SignalDistribution,
) -> Result<(IndexSet, DVector<T>)> {
    let (m, n) = inst.phi.shape();
    let eps = epsilon_bar(&inst.y, inst.snr);
    match alg {
        Prepared::Baseline(spec) => {
            if s == 0 {
                return Ok((IndexSet::empty(), DVector::zeros(n)));
            }
            let mut spec = spec.clone();
            spec.sparsity = s;
            spec.epsilon.get_or_insert(eps);
            if spec.kind == BaselineKind::Sbl && spec.eta2.is_none() {
                spec.eta2 = Some(eta2_for(&inst.y, inst.snr));
            }
            let out = baseline_recover(&spec, &inst.y, &inst.phi)?;
            Ok((out.support, out.signal))
        }
        Prepared::Tsn { spec, scorer } => {
            let k = spec.k_for(s);
            if k == 0 {
                return Ok((IndexSet::empty(), DVector::zeros(n)));
            }
            let params = spec.params(m, k, spec.epsilon.unwrap_or(eps));
            let mut ridge = SblConfig::for_measurement(&inst.y, inst.snr);
            if let Some(it) = spec.ridge_max_iter {
                ridge.max_iter = it;
            }
            let out = tsn(&inst.y, &inst.phi, k, &params, scorer.as_ref(), ridge, dist.min_magnitude())?;
            Ok((out.support_estimate, out.signal_estimate))
        }
    }
}

fn metrics<T: Scalar>(
    inst: &ProblemInstance<T>,
    support: &IndexSet,
    x_hat: &DVector<T>,
    exact_tol: f64,
) -> (bool, f64, bool, f64) {
    let x0_norm = inst.x0.norm();
    let err = (x_hat - &inst.x0).norm();
    let rel_error = if x0_norm > 0.0 { err / x0_norm } else { x_hat.norm() };
    let exact = if inst.support.is_empty() {
        x_hat.norm() == 0.0
    } else {
        rel_error <= exact_tol
    };
    let fit_gap = (&inst.phi * (x_hat - &inst.x0)).norm();
    // Rounding slack so that exact fits count in noiseless runs.
    let slack = 1e-12 * inst.y.norm().max(1.0);
    let noise_bound = fit_gap <= inst.noise.norm() + slack;
    let overlap = inst.support.intersection_len(support) as f64 / inst.support.len().max(1) as f64;
    (exact, rel_error, noise_bound, overlap)
}

fn run_typed<T: Scalar>(config: &ExperimentConfig, base: Option<&Path>) -> Result<ExperimentOutput> {
    let ensemble = &config.ensemble;
    let (m, n) = (ensemble.m, ensemble.n);
    let dist = config.distribution();
    let fixed: Option<DMatrix<T>> = config.matrix.load(ensemble, base)?;

    let prepared: Vec<Prepared<T>> = config
        .algorithms
        .iter()
        .enumerate()
        .map(|(i, a)| match &a.method {
            Method::Baseline(spec) => Ok(Prepared::Baseline(spec.clone())),
            Method::Tsn(spec) => Ok(Prepared::Tsn {
                spec: spec.clone(),
                scorer: load_scorer(&spec.scorer, base, m, n, &format!("algorithms[{i}].scorer"))?,
            }),
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = config
        .sparsity
        .iter()
        .flat_map(|&s| (0..config.trials).map(move |t| (s, t)))
        .collect();

    let work = || -> Result<Vec<Vec<TrialRow>>> {
        jobs.par_iter()
            .map(|&(s, trial)| {
                let seed = derive_seed(config.master_seed, s, trial);
                let inst = match &fixed {
                    Some(phi) => ProblemInstance::with_matrix(phi.clone(), &dist, s, config.snr_db, seed)?,
                    None => ProblemInstance::generate(ensemble, &dist, s, config.snr_db, seed)?,
                };
                let checksum = instance_checksum(&inst);
                prepared
                    .iter()
                    .zip(&config.algorithms)
                    .map(|(alg, cfg)| {
                        let start = Instant::now();
                        let (support, x_hat) = recover(alg, &inst, s, &dist)?;
                        let wall_seconds = start.elapsed().as_secs_f64();
                        let (exact, rel_error, noise_bound, overlap) = metrics(&inst, &support, &x_hat, config.exact_tol);
                        Ok(TrialRow {
                            algorithm: cfg.name.clone(),
                            sparsity: s,
                            trial,
                            seed,
                            instance_checksum: checksum.clone(),
                            exact_recovery: exact,
                            rel_error,
                            noise_bound_success: noise_bound,
                            support_overlap: overlap,
                            support_size: support.len(),
                            wall_seconds,
                        })
                    })
                    .collect()
            })
            .collect()
    };
    let nested = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    let rank = |name: &str| config.algorithms.iter().position(|a| a.name == name).unwrap_or(usize::MAX);
    let mut trials: Vec<TrialRow> = nested.into_iter().flatten().collect();
    trials.sort_by(|a, b| {
        (rank(&a.algorithm), a.sparsity, a.trial).cmp(&(rank(&b.algorithm), b.sparsity, b.trial))
    });
    let summary = summarize(&trials, config.snr_db);
    Ok(ExperimentOutput { trials, summary })
}

/// Runs an experiment. Relative paths inside the config resolve against `base`.
pub fn run_experiment(config: &ExperimentConfig, base: Option<&Path>) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.ensemble.kind.field() {
        ScalarField::Real => run_typed::<f64>(config, base),
        ScalarField::Complex => run_typed::<Complex64>(config, base),
    }
}

/// Per-(algorithm, sparsity) means, in the order cells first appear.
pub fn summarize(trials: &[TrialRow], snr_db: SnrDb) -> Vec<SummaryRow> {
    let mut cells: Vec<(String, usize, Vec<&TrialRow>)> = Vec::new();
    for row in trials {
        match cells.iter_mut().find(|(a, s, _)| a == &row.algorithm && *s == row.sparsity) {
            Some(cell) => cell.2.push(row),
            None => cells.push((row.algorithm.clone(), row.sparsity, vec![row])),
        }
    }
    cells
        .into_iter()
        .map(|(algorithm, sparsity, rows)| {
            let count = rows.len() as f64;
            let mean = |f: &dyn Fn(&TrialRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / count;
            SummaryRow {
                algorithm,
                sparsity,
                snr_db,
                mean_rel_error: mean(&|r| r.rel_error),
                recovery_rate: mean(&|r| f64::from(u8::from(r.exact_recovery))),
                noise_bound_rate: mean(&|r| f64::from(u8::from(r.noise_bound_success))),
                mean_overlap: mean(&|r| r.support_overlap),
                mean_wall_seconds: mean(&|r| r.wall_seconds),
                trials: rows.len(),
            }
        })
        .collect()
}

/// Largest `s` whose recovery rate, and that of every smaller sparsity in
/// the table, is at least 0.95. A missing sparsity ends the run; `s = 0`
/// rows are ignored.
pub fn summarize_s95(rates: &[(usize, f64)]) -> Result<usize> {
    if rates.is_empty() {
        return Err(Error::invalid("no summary rows to summarize"));
    }
    let mut sorted: Vec<(usize, f64)> = rates.iter().copied().filter(|(s, _)| *s > 0).collect();
    sorted.sort_by_key(|(s, _)| *s);
    let mut best = 0;
    for (s, rate) in sorted {
        if s != best + 1 || rate < 0.95 {
            break;
        }
        best = s;
    }
    Ok(best)
}

/// `s_0.95` for every algorithm in a summary table, in order of appearance.
pub fn s95_table(summary: &[SummaryRow]) -> Result<Vec<(String, usize)>> {
    let mut names: Vec<&str> = Vec::new();
    for row in summary {
        if !names.contains(&row.algorithm.as_str()) {
            names.push(&row.algorithm);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let rates: Vec<(usize, f64)> = summary
                .iter()
                .filter(|r| r.algorithm == name)
                .map(|r| (r.sparsity, r.recovery_rate))
                .collect();
            Ok((name.to_string(), summarize_s95(&rates)?))
        })
        .collect()
}

pub fn rows_to_csv<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_rows<R: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub format_version: u64,
    pub library_version: &'static str,
    pub started: String,
    pub finished: String,
    pub trial_rows: usize,
    pub summary_rows: usize,
    pub config: &'a ExperimentConfig,
}

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Runs `config` and writes the trial table, summary and manifest into `out_dir`.
pub fn run_to_dir(config: &ExperimentConfig, base: Option<&Path>, out_dir: &Path) -> Result<ExperimentOutput> {
    let started = chrono::Utc::now();
    let output = run_experiment(config, base)?;
    let finished = chrono::Utc::now();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, text: String| {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    write(TRIALS_FILE, rows_to_csv(&output.trials)?)?;
    write(SUMMARY_FILE, rows_to_csv(&output.summary)?)?;
    let manifest = RunManifest {
        format_version: 1,
        library_version: env!("CARGO_PKG_VERSION"),
        started: started.to_rfc3339(),
        finished: finished.to_rfc3339(),
        trial_rows: output.trials.len(),
        summary_rows: output.summary.len(),
        config,
    };
    write(MANIFEST_FILE, serde_json::to_string_pretty(&manifest)?)?;
    Ok(output)
}

/// Settings for training a scorer on one fixed matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainScorerConfig {
    pub ensemble: MatrixEnsemble,
    pub matrix: MatrixSource,
    #[serde(default)]
    pub distribution: Option<SignalDistribution>,
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

impl TrainScorerConfig {
    pub fn distribution(&self) -> SignalDistribution {
        self.distribution
            .unwrap_or_else(|| SignalDistribution::symmetric_for(self.ensemble.kind.field()))
    }
}

fn train_typed<T: Scalar>(config: &TrainScorerConfig, base: Option<&Path>) -> Result<MlpScorer> {
    let phi: DMatrix<T> = config
        .matrix
        .load(&config.ensemble, base)?
        .ok_or_else(|| Error::config("matrix.mode", "training needs a fixed matrix"))?;
    train_scorer(&phi, &config.train, &config.distribution(), &mut rng_from_seed(config.seed))
}

pub fn train_from_config(config: &TrainScorerConfig, base: Option<&Path>) -> Result<MlpScorer> {
    config.ensemble.validate().map_err(|e| Error::config("ensemble", e.to_string()))?;
    config
        .train
        .validate(config.ensemble.n)?;
    match config.ensemble.kind.field() {
        ScalarField::Real => train_typed::<f64>(config, base),
        ScalarField::Complex => train_typed::<Complex64>(config, base),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::EnsembleKind;

    fn config() -> ExperimentConfig {
        ExperimentConfig {
            ensemble: MatrixEnsemble::new(EnsembleKind::GaussianReal, 12, 30).unwrap(),
            distribution: None,
            sparsity: vec![1, 2, 3],
            snr_db: SnrDb::NOISELESS,
            trials: 4,
            master_seed: 9,
            algorithms: vec![
                AlgorithmConfig {
                    name: "omp".into(),
                    method: Method::Baseline(BaselineSpec::new(BaselineKind::Omp, 0)),
                },
                AlgorithmConfig {
                    name: "tsn".into(),
                    method: Method::Tsn(TsnSpec::new(5)),
                },
            ],
            exact_tol: 1e-6,
            matrix: MatrixSource::Resample,
            workers: Some(2),
        }
    }

    #[test]
    fn s95_examples() {
        assert_eq!(summarize_s95(&[(1, 1.0), (2, 0.96), (3, 0.90)]).unwrap(), 2);
        assert_eq!(summarize_s95(&[(1, 0.5), (2, 0.4)]).unwrap(), 0);
        assert_eq!(summarize_s95(&[(1, 1.0), (2, 0.90), (3, 0.97)]).unwrap(), 1);
        assert!(summarize_s95(&[]).is_err());
    }

    #[test]
    fn rows_are_paired_and_ordered() {
        let out = run_experiment(&config(), None).unwrap();
        assert_eq!(out.trials.len(), 2 * 3 * 4);
        let (omp, tsn) = out.trials.split_at(12);
        for (a, b) in omp.iter().zip(tsn) {
            assert_eq!((a.sparsity, a.trial, &a.instance_checksum), (b.sparsity, b.trial, &b.instance_checksum));
        }
        assert_eq!(out.summary.len(), 6);
        assert!(out.summary.iter().all(|r| r.trials == 4));
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut c = config();
        c.algorithms[1].name = "omp".into();
        match c.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "algorithms[1].name"),
            other => panic!("{other:?}"),
        }
        let mut c = config();
        c.algorithms[1].method = Method::Tsn(TsnSpec {
            scorer: ScorerRef::Model { path: "m.json".into() },
            ..TsnSpec::new(5)
        });
        assert!(matches!(c.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn json_and_toml_configs_parse() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("c.json");
        fs::write(&json, serde_json::to_string(&config()).unwrap()).unwrap();
        assert_eq!(load_document::<ExperimentConfig>(&json).unwrap(), config());

        let toml_path = dir.path().join("c.toml");
        fs::write(
            &toml_path,
            r#"
sparsity = [1, 2]
snr_db = "inf"
trials = 3
master_seed = 1

[ensemble]
kind = "gaussian-real"
m = 12
n = 30

[[algorithms]]
name = "gomp"
method = "baseline"
kind = "gomp"

[[algorithms]]
name = "tsn"
method = "tsn"
k = 5
preset = "tau2"
"#,
        )
        .unwrap();
        let c: ExperimentConfig = load_document(&toml_path).unwrap();
        assert_eq!(c.algorithms.len(), 2);
        assert!(c.snr_db.is_noiseless());

        fs::write(&json, r#"{"ensemble": {"kind": "gaussian-real", "m": "x", "n": 3}}"#).unwrap();
        match load_document::<ExperimentConfig>(&json) {
            Err(Error::Config { path, .. }) => assert!(path.ends_with("ensemble.m"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn known_sparsity_truncates_stages() {
        let spec = TsnSpec {
            known_sparsity: true,
            ..TsnSpec::new(9)
        };
        let p = spec.params(20, 2, 1e-5);
        assert_eq!(p.stage_depths, vec![2]);
        assert_eq!(p.stage_widths, vec![60]);
    }
}

//! Random problem generation: sensing matrices, sparse signals, measurement
//! noise and scorer training data.
//!
//! Every generator takes an explicit RNG so callers control seeding. The
//! standard generator is [`ChaCha8Rng`], whose stream is stable across
//! platforms and crate versions.

mod csv_io;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{check_field, IndexSet, Scalar, ScalarField};

pub use csv_io::{
    read_matrix_csv, read_metadata, read_vector_csv, write_matrix_csv, write_metadata,
    write_vector_csv, InstanceMetadata, SensingMatrix, SensingVector,
};

pub type Rng64 = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Signal-to-noise ratio in decibels; `+inf` means noiseless.
///
/// Serialized as a number, or as the string `"inf"` for the noiseless case.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrDb(pub f64);

impl SnrDb {
    pub const NOISELESS: SnrDb = SnrDb(f64::INFINITY);

    pub fn is_noiseless(self) -> bool {
        self.0 == f64::INFINITY
    }

    /// `10^(−snr/20)`, the noise-to-signal amplitude ratio (0 when noiseless).
    pub fn amplitude_ratio(self) -> f64 {
        if self.is_noiseless() {
            0.0
        } else {
            10f64.powf(-self.0 / 20.0)
        }
    }

    /// `10^(−snr/10)`, the noise-to-signal power ratio.
    pub fn power_ratio(self) -> f64 {
        let a = self.amplitude_ratio();
        a * a
    }
}

impl fmt::Display for SnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_noiseless() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for SnrDb {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "noiseless" => Ok(SnrDb::NOISELESS),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| !v.is_nan() && *v != f64::NEG_INFINITY)
                .map(SnrDb)
                .ok_or_else(|| Error::invalid(format!("invalid SNR `{s}`"))),
        }
    }
}

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(SnrDb(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    GaussianReal,
    GaussianComplex,
    PartialDft,
    CorrelatedComplex,
}

impl EnsembleKind {
    pub fn field(self) -> ScalarField {
        match self {
            EnsembleKind::GaussianReal => ScalarField::Real,
            _ => ScalarField::Complex,
        }
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("unknown ensemble `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixEnsemble {
    pub kind: EnsembleKind,
    pub m: usize,
    pub n: usize,
}

impl MatrixEnsemble {
    pub fn new(kind: EnsembleKind, m: usize, n: usize) -> Result<Self> {
        let e = MatrixEnsemble { kind, m, n };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if self.kind == EnsembleKind::PartialDft && self.m > self.n {
            return Err(Error::invalid(format!(
                "partial DFT needs m <= n, got m={} n={}",
                self.m, self.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    SymmetricInterval,
    NonNegativeInterval,
    ComplexSymmetric,
    ComplexNonNegative,
}

impl SignalKind {
    pub fn field(self) -> ScalarField {
        match self {
            SignalKind::SymmetricInterval | SignalKind::NonNegativeInterval => ScalarField::Real,
            _ => ScalarField::Complex,
        }
    }

    fn symmetric(self) -> bool {
        matches!(self, SignalKind::SymmetricInterval | SignalKind::ComplexSymmetric)
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("unknown signal distribution `{s}`")))
    }
}

/// Nonzero magnitudes are uniform on `[min_mag, max_mag]`, optionally with a
/// random sign; complex kinds apply the rule to each part independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalDistribution {
    pub kind: SignalKind,
    #[serde(default = "default_min_mag")]
    pub min_mag: f64,
    #[serde(default = "default_max_mag")]
    pub max_mag: f64,
}

fn default_min_mag() -> f64 {
    0.1
}

fn default_max_mag() -> f64 {
    1.0
}

impl SignalDistribution {
    pub fn new(kind: SignalKind) -> Self {
        SignalDistribution {
            kind,
            min_mag: default_min_mag(),
            max_mag: default_max_mag(),
        }
    }

    /// Default distribution matching the field of an ensemble.
    pub fn symmetric_for(field: ScalarField) -> Self {
        match field {
            ScalarField::Real => Self::new(SignalKind::SymmetricInterval),
            ScalarField::Complex => Self::new(SignalKind::ComplexSymmetric),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_mag > 0.0 && self.min_mag < self.max_mag && self.max_mag.is_finite()) {
            return Err(Error::invalid(format!(
                "signal magnitudes need 0 < min < max, got [{}, {}]",
                self.min_mag, self.max_mag
            )));
        }
        Ok(())
    }

    /// Smallest possible modulus of a nonzero entry (complex kinds draw both
    /// parts from the interval, so the bound is `√2·min_mag`).
    pub fn min_magnitude(&self) -> f64 {
        match self.kind.field() {
            ScalarField::Real => self.min_mag,
            ScalarField::Complex => std::f64::consts::SQRT_2 * self.min_mag,
        }
    }

    fn sample_part<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mag = rng.random_range(self.min_mag..=self.max_mag);
        if self.kind.symmetric() && rng.random::<bool>() {
            -mag
        } else {
            mag
        }
    }

    fn sample_entry<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self.kind.field() {
            ScalarField::Real => T::from_parts(self.sample_part(rng), 0.0),
            ScalarField::Complex => {
                let re = self.sample_part(rng);
                let im = self.sample_part(rng);
                T::from_parts(re, im)
            }
        }
    }
}

/// The four factor families of the correlated-column ensemble, each `n` long.
#[derive(Debug, Clone)]
pub struct CorrelatedFactors {
    /// `p1[z]`, `p2[z]`: length `m`.
    pub p1: Vec<DVector<f64>>,
    pub p2: Vec<DVector<f64>>,
    /// `q1[z]`, `q2[z]`: length `n`.
    pub q1: Vec<DVector<f64>>,
    pub q2: Vec<DVector<f64>>,
}

impl CorrelatedFactors {
    /// Draws, for `z = 1..n` in order, `p1_z`, `q1_z`, `p2_z`, `q2_z`.
    pub fn sample<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Self {
        let mut f = CorrelatedFactors {
            p1: Vec::with_capacity(n),
            p2: Vec::with_capacity(n),
            q1: Vec::with_capacity(n),
            q2: Vec::with_capacity(n),
        };
        let gauss = |len: usize, rng: &mut R| DVector::from_fn(len, |_, _| f64::standard_normal(rng));
        for _ in 0..n {
            f.p1.push(gauss(m, rng));
            f.q1.push(gauss(n, rng));
            f.p2.push(gauss(m, rng));
            f.q2.push(gauss(n, rng));
        }
        f
    }

    /// `Σ_z z⁻² (p1_z q1_zᵀ + i·p2_z q2_zᵀ)`, before column normalization.
    pub fn assemble(&self) -> DMatrix<Complex64> {
        let m = self.p1.first().map_or(0, |p| p.len());
        let n = self.q1.first().map_or(0, |q| q.len());
        let mut re = DMatrix::<f64>::zeros(m, n);
        let mut im = DMatrix::<f64>::zeros(m, n);
        for z in 0..self.p1.len() {
            let w = 1.0 / ((z + 1) as f64).powi(2);
            re.ger(w, &self.p1[z], &self.q1[z], 1.0);
            im.ger(w, &self.p2[z], &self.q2[z], 1.0);
        }
        DMatrix::from_fn(m, n, |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
    }
}

pub fn normalize_columns<T: Scalar>(phi: &mut DMatrix<T>) {
    for mut col in phi.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col.unscale_mut(norm);
        }
    }
}

/// Draws a sensing matrix with unit-norm columns.
pub fn gen_matrix<T: Scalar, R: Rng + ?Sized>(
    ensemble: &MatrixEnsemble,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    ensemble.validate()?;
    check_field::<T>(ensemble.kind.field())?;
    let (m, n) = (ensemble.m, ensemble.n);
    let mut phi = match ensemble.kind {
        EnsembleKind::GaussianReal | EnsembleKind::GaussianComplex => {
            DMatrix::from_fn(m, n, |_, _| T::standard_normal(rng))
        }
        EnsembleKind::PartialDft => {
            let mut rows = sample(rng, n, m).into_vec();
            rows.sort_unstable();
            DMatrix::from_fn(m, n, |i, j| {
                let angle = -2.0 * PI * ((rows[i] * j) % n) as f64 / n as f64;
                T::from_parts(angle.cos(), angle.sin())
            })
        }
        EnsembleKind::CorrelatedComplex => {
            let raw = CorrelatedFactors::sample(m, n, rng).assemble();
            raw.map(|c| T::from_parts(c.re, c.im))
        }
    };
    normalize_columns(&mut phi);
    Ok(phi)
}

/// Draws an `s`-sparse signal of length `n` and its support.
pub fn gen_signal<T: Scalar, R: Rng + ?Sized>(
    dist: &SignalDistribution,
    n: usize,
    s: usize,
    rng: &mut R,
) -> Result<(DVector<T>, IndexSet)> {
    dist.validate()?;
    check_field::<T>(dist.kind.field())?;
    if s > n {
        return Err(Error::invalid(format!("sparsity {s} exceeds dimension {n}")));
    }
    let support = IndexSet::new(sample(rng, n, s).into_vec());
    let mut x = DVector::zeros(n);
    for j in support.iter() {
        x[j] = dist.sample_entry(rng);
    }
    Ok((x, support))
}

/// Adds i.i.d. noise with per-entry variance `‖Φx0‖² / (m·10^(snr/10))`.
/// Returns `(y, w)`.
pub fn measure<T: Scalar, R: Rng + ?Sized>(
    phi: &DMatrix<T>,
    x0: &DVector<T>,
    snr: SnrDb,
    rng: &mut R,
) -> Result<(DVector<T>, DVector<T>)> {
    if phi.ncols() != x0.len() {
        return Err(Error::dims(format!(
            "matrix has {} columns but signal has length {}",
            phi.ncols(),
            x0.len()
        )));
    }
    let clean = phi * x0;
    let m = clean.len();
    let variance = clean.norm_squared() * snr.power_ratio() / m as f64;
    let w = if variance > 0.0 {
        let sigma = variance.sqrt();
        DVector::from_fn(m, |_, _| T::standard_normal(rng).scale(sigma))
    } else {
        DVector::zeros(m)
    };
    Ok((&clean + &w, w))
}

/// Uniform draw from the unit sphere in `T^m`.
pub fn unit_sphere<T: Scalar, R: Rng + ?Sized>(m: usize, rng: &mut R) -> DVector<T> {
    loop {
        let v = DVector::from_fn(m, |_, _| T::standard_normal(rng));
        let norm = v.norm();
        if norm > 0.0 {
            return v.unscale(norm);
        }
    }
}

/// A fully specified recovery problem `y = Φx0 + w`.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T: Scalar> {
    pub phi: DMatrix<T>,
    pub x0: DVector<T>,
    pub support: IndexSet,
    pub noise: DVector<T>,
    pub y: DVector<T>,
    pub snr: SnrDb,
    pub seed: u64,
}

impl<T: Scalar> ProblemInstance<T> {
    /// Draws matrix, signal and noise from one generator seeded with `seed`.
    pub fn generate(
        ensemble: &MatrixEnsemble,
        dist: &SignalDistribution,
        s: usize,
        snr: SnrDb,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let phi = gen_matrix(ensemble, &mut rng)?;
        Self::draw(phi, dist, s, snr, seed, &mut rng)
    }

    /// Draws signal and noise for a fixed matrix.
    pub fn with_matrix(
        phi: DMatrix<T>,
        dist: &SignalDistribution,
        s: usize,
        snr: SnrDb,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        Self::draw(phi, dist, s, snr, seed, &mut rng)
    }

    fn draw(
        phi: DMatrix<T>,
        dist: &SignalDistribution,
        s: usize,
        snr: SnrDb,
        seed: u64,
        rng: &mut Rng64,
    ) -> Result<Self> {
        let (x0, support) = gen_signal(dist, phi.ncols(), s, rng)?;
        let (y, noise) = measure(&phi, &x0, snr, rng)?;
        Ok(ProblemInstance {
            phi,
            x0,
            support,
            noise,
            y,
            snr,
            seed,
        })
    }

    pub fn m(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSample<T: Scalar> {
    pub y: DVector<T>,
    pub support: IndexSet,
}

/// One epoch of scorer training data: sparsity uniform on `k1..=k2`, signal
/// from `dist`, and a perturbation of radius `α·‖Φx‖·10^(−snr/20)` with
/// `α ~ U[0, 1]` in a uniformly random direction.
pub fn gen_training_set<T: Scalar, R: Rng + ?Sized>(
    phi: &DMatrix<T>,
    k1: usize,
    k2: usize,
    snr: SnrDb,
    dist: &SignalDistribution,
    count: usize,
    rng: &mut R,
) -> Result<Vec<TrainingSample<T>>> {
    let n = phi.ncols();
    if k1 == 0 || k1 > k2 || k2 > n {
        return Err(Error::invalid(format!(
            "invalid sparsity range {k1}..={k2} for n={n}"
        )));
    }
    let ratio = snr.amplitude_ratio();
    (0..count)
        .map(|_| {
            let s = rng.random_range(k1..=k2);
            let (x, support) = gen_signal::<T, R>(dist, n, s, rng)?;
            let clean = phi * &x;
            let alpha: f64 = rng.random_range(0.0..=1.0);
            let direction: DVector<T> = unit_sphere(phi.nrows(), rng);
            let radius = alpha * clean.norm() * ratio;
            let y = if radius > 0.0 {
                clean + direction.scale(radius)
            } else {
                clean
            };
            Ok(TrainingSample { y, support })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_dft_entries_have_equal_modulus() {
        let e = MatrixEnsemble::new(EnsembleKind::PartialDft, 4, 8).unwrap();
        let phi: DMatrix<Complex64> = gen_matrix(&e, &mut rng_from_seed(1)).unwrap();
        for v in phi.iter() {
            assert!((v.norm() - 0.5).abs() < 1e-12);
        }
        for c in phi.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_dft_rows_are_distinct_dft_rows() {
        let e = MatrixEnsemble::new(EnsembleKind::PartialDft, 5, 12).unwrap();
        let phi: DMatrix<Complex64> = gen_matrix(&e, &mut rng_from_seed(2)).unwrap();
        let scale = (5f64).sqrt();
        let mut freqs = Vec::new();
        for i in 0..5 {
            // Column 1 of row with frequency k is exp(-2πik/n)/√m.
            let c = phi[(i, 1)] * scale;
            let k = ((-c.arg()) * 12.0 / (2.0 * PI)).round().rem_euclid(12.0) as usize;
            for j in 0..12 {
                let angle = -2.0 * PI * ((k * j) % 12) as f64 / 12.0;
                let expect = Complex64::new(angle.cos(), angle.sin()) / scale;
                assert!((phi[(i, j)] - expect).norm() < 1e-12);
            }
            freqs.push(k);
        }
        freqs.dedup();
        assert_eq!(freqs.len(), 5);
    }

    #[test]
    fn partial_dft_rejects_tall_matrix() {
        assert!(MatrixEnsemble::new(EnsembleKind::PartialDft, 9, 8).is_err());
    }

    #[test]
    fn gaussian_columns_are_normalized() {
        let e = MatrixEnsemble::new(EnsembleKind::GaussianReal, 20, 100).unwrap();
        let phi: DMatrix<f64> = gen_matrix(&e, &mut rng_from_seed(3)).unwrap();
        for c in phi.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn field_mismatch_is_reported() {
        let e = MatrixEnsemble::new(EnsembleKind::GaussianComplex, 4, 6).unwrap();
        let err = gen_matrix::<f64, _>(&e, &mut rng_from_seed(0)).unwrap_err();
        assert!(matches!(err, Error::FieldMismatch { .. }));
    }

    #[test]
    fn signal_magnitudes_respect_interval() {
        let dist = SignalDistribution::new(SignalKind::SymmetricInterval);
        let mut rng = rng_from_seed(4);
        for _ in 0..200 {
            let (x, omega) = gen_signal::<f64, _>(&dist, 30, 3, &mut rng).unwrap();
            assert_eq!(omega.len(), 3);
            let nonzero: Vec<usize> = (0..30).filter(|&i| x[i] != 0.0).collect();
            assert_eq!(nonzero, omega.as_slice());
            for j in omega.iter() {
                assert!((0.1..=1.0).contains(&x[j].abs()));
            }
        }
    }

    #[test]
    fn empty_signal() {
        let dist = SignalDistribution::new(SignalKind::SymmetricInterval);
        let (x, omega) = gen_signal::<f64, _>(&dist, 10, 0, &mut rng_from_seed(5)).unwrap();
        assert!(omega.is_empty());
        assert_eq!(x.norm(), 0.0);
        assert!(gen_signal::<f64, _>(&dist, 10, 11, &mut rng_from_seed(5)).is_err());
    }

    #[test]
    fn complex_nonnegative_parts() {
        let dist = SignalDistribution::new(SignalKind::ComplexNonNegative);
        let (x, omega) = gen_signal::<Complex64, _>(&dist, 40, 6, &mut rng_from_seed(6)).unwrap();
        for j in omega.iter() {
            assert!((0.1..=1.0).contains(&x[j].re));
            assert!((0.1..=1.0).contains(&x[j].im));
        }
    }

    #[test]
    fn noiseless_measurement() {
        let e = MatrixEnsemble::new(EnsembleKind::GaussianReal, 6, 10).unwrap();
        let inst =
            ProblemInstance::<f64>::generate(&e, &SignalDistribution::new(SignalKind::SymmetricInterval), 2, SnrDb::NOISELESS, 7)
                .unwrap();
        assert_eq!(inst.noise.norm(), 0.0);
        assert_eq!(inst.y, &inst.phi * &inst.x0);
    }

    #[test]
    fn instance_is_reproducible() {
        let e = MatrixEnsemble::new(EnsembleKind::CorrelatedComplex, 5, 9).unwrap();
        let d = SignalDistribution::new(SignalKind::ComplexSymmetric);
        let a = ProblemInstance::<Complex64>::generate(&e, &d, 3, SnrDb(10.0), 99).unwrap();
        let b = ProblemInstance::<Complex64>::generate(&e, &d, 3, SnrDb(10.0), 99).unwrap();
        assert_eq!(a.phi, b.phi);
        assert_eq!(a.x0, b.x0);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn snr_parsing() {
        assert!("inf".parse::<SnrDb>().unwrap().is_noiseless());
        assert_eq!("5".parse::<SnrDb>().unwrap(), SnrDb(5.0));
        assert!("x".parse::<SnrDb>().is_err());
        let v: SnrDb = serde_json::from_str("\"inf\"").unwrap();
        assert!(v.is_noiseless());
        assert_eq!(serde_json::to_string(&SnrDb(3.5)).unwrap(), "3.5");
        assert_eq!(serde_json::to_string(&SnrDb::NOISELESS).unwrap(), "\"inf\"");
    }

    #[test]
    fn training_sparsity_range_is_validated() {
        let phi = DMatrix::<f64>::identity(4, 6);
        let d = SignalDistribution::new(SignalKind::SymmetricInterval);
        let mut rng = rng_from_seed(0);
        assert!(gen_training_set(&phi, 0, 2, SnrDb::NOISELESS, &d, 5, &mut rng).is_err());
        assert!(gen_training_set(&phi, 3, 2, SnrDb::NOISELESS, &d, 5, &mut rng).is_err());
        assert!(gen_training_set(&phi, 1, 7, SnrDb::NOISELESS, &d, 5, &mut rng).is_err());
    }
}

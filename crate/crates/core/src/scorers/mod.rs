//! Index scorers map a residual vector to a probability vector over the
//! columns of the sensing matrix. The tree search ranks candidate indices by
//! these scores, so any scorer can drive it.

mod mlp;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::ensembles::{gen_signal, measure, SignalDistribution, SnrDb};
use crate::error::{Error, Result};
use crate::linalg::{check_rows, correlations, top_l, IndexSet, Scalar};

pub use mlp::{
    default_schedule, train_scorer, Activation, DenseLayer, LearningRateStage, MlpScorer,
    TrainConfig, TrainingRecord,
};

pub trait IndexScorer<T: Scalar>: Send + Sync {
    /// Probability vector of length `n`; entries are nonnegative and sum to one.
    fn score(&self, phi: &DMatrix<T>, residual: &DVector<T>) -> Result<Vec<f64>>;
}

impl<T: Scalar, S: IndexScorer<T> + ?Sized> IndexScorer<T> for &S {
    fn score(&self, phi: &DMatrix<T>, residual: &DVector<T>) -> Result<Vec<f64>> {
        (**self).score(phi, residual)
    }
}

impl<T: Scalar, S: IndexScorer<T> + ?Sized> IndexScorer<T> for Box<S> {
    fn score(&self, phi: &DMatrix<T>, residual: &DVector<T>) -> Result<Vec<f64>> {
        (**self).score(phi, residual)
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Normalized absolute correlations `|Φ* r| / Σ|Φ* r|`; the OMP selection rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct CorrelationScorer;

impl<T: Scalar> IndexScorer<T> for CorrelationScorer {
    fn score(&self, phi: &DMatrix<T>, residual: &DVector<T>) -> Result<Vec<f64>> {
        check_rows(phi, residual)?;
        let mags: Vec<f64> = correlations(phi, residual).iter().map(|c| c.modulus()).collect();
        let total: f64 = mags.iter().sum();
        if total > 0.0 && total.is_finite() {
            Ok(mags.into_iter().map(|v| v / total).collect())
        } else {
            Ok(uniform(phi.ncols()))
        }
    }
}

/// Puts uniform mass on a known support regardless of the residual. Useful as
/// an upper bound on what a learned scorer can achieve.
#[derive(Debug, Clone)]
pub struct SupportOracle {
    support: IndexSet,
}

impl SupportOracle {
    pub fn new(support: IndexSet) -> Self {
        SupportOracle { support }
    }
}

impl<T: Scalar> IndexScorer<T> for SupportOracle {
    fn score(&self, phi: &DMatrix<T>, residual: &DVector<T>) -> Result<Vec<f64>> {
        check_rows(phi, residual)?;
        let n = phi.ncols();
        if self.support.is_empty() {
            return Ok(uniform(n));
        }
        if self.support.max_index().is_some_and(|j| j >= n) {
            return Err(Error::dims("oracle support exceeds matrix width"));
        }
        let mut v = vec![0.0; n];
        let w = 1.0 / self.support.len() as f64;
        for j in self.support.iter() {
            v[j] = w;
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Mean of `|Ω ∩ Σ| / |Ω|`.
    pub mean_overlap: f64,
    /// Fraction of trials with `Ω ⊆ Σ`.
    pub containment_rate: f64,
    pub trials: usize,
}

/// Draws `trials` fresh `s`-sparse instances on the fixed matrix `phi`, takes
/// the top-`v` scored indices of each measurement and reports how much of the
/// true support they capture.
#[allow(clippy::too_many_arguments)]
pub fn eval_scorer<T: Scalar, S: IndexScorer<T> + ?Sized, R: Rng + ?Sized>(
    scorer: &S,
    phi: &DMatrix<T>,
    dist: &SignalDistribution,
    s: usize,
    v: usize,
    trials: usize,
    snr: SnrDb,
    rng: &mut R,
) -> Result<EvalReport> {
    let n = phi.ncols();
    if s == 0 || v == 0 || v > n {
        return Err(Error::invalid(format!(
            "evaluation needs s >= 1 and 1 <= v <= n, got s={s} v={v} n={n}"
        )));
    }
    let mut overlap = 0.0;
    let mut contained = 0usize;
    for _ in 0..trials {
        let (x, omega) = gen_signal::<T, R>(dist, n, s, rng)?;
        let (y, _) = measure(phi, &x, snr, rng)?;
        let scores = scorer.score(phi, &y)?;
        let sigma = top_l(&scores, v, &IndexSet::empty())?;
        let hit = omega.intersection_len(&sigma);
        overlap += hit as f64 / omega.len() as f64;
        if hit == omega.len() {
            contained += 1;
        }
    }
    let t = trials.max(1) as f64;
    Ok(EvalReport {
        mean_overlap: overlap / t,
        containment_rate: contained as f64 / t,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{gen_matrix, rng_from_seed, EnsembleKind, MatrixEnsemble, SignalKind};
    use num_complex::Complex64;
    use std::collections::VecDeque;
    use std::sync::Mutex;

    #[test]
    fn correlation_on_identity() {
        let phi = DMatrix::<f64>::identity(3, 3);
        let r = DVector::from_vec(vec![0.0, 2.0, 1.0]);
        let v = CorrelationScorer.score(&phi, &r).unwrap();
        assert_eq!(v, vec![0.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(top_l(&v, 1, &IndexSet::empty()).unwrap().to_one_based(), vec![2]);
    }

    #[test]
    fn correlation_zero_residual_is_uniform() {
        let phi = DMatrix::<f64>::identity(3, 4);
        let v = CorrelationScorer.score(&phi, &DVector::zeros(3)).unwrap();
        assert_eq!(v, vec![0.25; 4]);
    }

    #[test]
    fn correlation_is_scale_invariant_complex() {
        let e = MatrixEnsemble::new(EnsembleKind::GaussianComplex, 6, 15).unwrap();
        let mut rng = rng_from_seed(3);
        let phi: DMatrix<Complex64> = gen_matrix(&e, &mut rng).unwrap();
        let r = DVector::from_fn(6, |_, _| Complex64::standard_normal(&mut rng));
        let a = CorrelationScorer.score(&phi, &r).unwrap();
        let b = CorrelationScorer.score(&phi, &(r.scale(5.0))).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn correlation_rejects_wrong_length() {
        let phi = DMatrix::<f64>::identity(3, 3);
        assert!(CorrelationScorer.score(&phi, &DVector::zeros(4)).is_err());
    }

    /// Serves supports in the order the evaluation loop draws them.
    struct ReplayOracle(Mutex<VecDeque<IndexSet>>);

    impl IndexScorer<f64> for ReplayOracle {
        fn score(&self, phi: &DMatrix<f64>, r: &DVector<f64>) -> Result<Vec<f64>> {
            let support = self.0.lock().unwrap().pop_front().unwrap();
            SupportOracle::new(support).score(phi, r)
        }
    }

    struct RandomScorer(Mutex<crate::ensembles::Rng64>);

    impl IndexScorer<f64> for RandomScorer {
        fn score(&self, phi: &DMatrix<f64>, _r: &DVector<f64>) -> Result<Vec<f64>> {
            let mut rng = self.0.lock().unwrap();
            let raw: Vec<f64> = (0..phi.ncols()).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            Ok(raw.into_iter().map(|x| x / total).collect())
        }
    }

    fn setup() -> (DMatrix<f64>, SignalDistribution) {
        let e = MatrixEnsemble::new(EnsembleKind::GaussianReal, 20, 100).unwrap();
        (
            gen_matrix(&e, &mut rng_from_seed(12)).unwrap(),
            SignalDistribution::new(SignalKind::SymmetricInterval),
        )
    }

    #[test]
    fn oracle_scorer_has_full_overlap() {
        let (phi, dist) = setup();
        let s = 4;
        let mut replay = rng_from_seed(77);
        let mut supports = VecDeque::new();
        for _ in 0..50 {
            let (x, omega) = gen_signal::<f64, _>(&dist, 100, s, &mut replay).unwrap();
            measure(&phi, &x, SnrDb(10.0), &mut replay).unwrap();
            supports.push_back(omega);
        }
        let oracle = ReplayOracle(Mutex::new(supports));
        let report = eval_scorer(
            &oracle,
            &phi,
            &dist,
            s,
            s,
            50,
            SnrDb(10.0),
            &mut rng_from_seed(77),
        )
        .unwrap();
        assert_eq!(report.mean_overlap, 1.0);
        assert_eq!(report.containment_rate, 1.0);
    }

    #[test]
    fn random_scorer_matches_hypergeometric_mean() {
        let (phi, dist) = setup();
        let (m, n, s, trials) = (20usize, 100usize, 4usize, 10_000usize);
        let scorer = RandomScorer(Mutex::new(rng_from_seed(5)));
        let report = eval_scorer(
            &scorer,
            &phi,
            &dist,
            s,
            m - 1,
            trials,
            SnrDb::NOISELESS,
            &mut rng_from_seed(6),
        )
        .unwrap();
        // |Ω ∩ Σ| is hypergeometric(N=n, K=v, draws=s); overlap = that / s.
        let p = (m - 1) as f64 / n as f64;
        let var_hits = s as f64 * p * (1.0 - p) * (n - s) as f64 / (n - 1) as f64;
        let sd_mean = (var_hits / (s * s) as f64 / trials as f64).sqrt();
        assert!(
            (report.mean_overlap - p).abs() < 3.0 * sd_mean,
            "overlap {} vs {p} (sd {sd_mean})",
            report.mean_overlap
        );
    }

    #[test]
    fn eval_validates_arguments() {
        let (phi, dist) = setup();
        let mut rng = rng_from_seed(0);
        assert!(eval_scorer(&CorrelationScorer, &phi, &dist, 0, 3, 1, SnrDb::NOISELESS, &mut rng).is_err());
        assert!(eval_scorer(&CorrelationScorer, &phi, &dist, 2, 101, 1, SnrDb::NOISELESS, &mut rng).is_err());
    }
}

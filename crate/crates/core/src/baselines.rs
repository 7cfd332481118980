//! Classical recovery algorithms used as reference points: OMP, gOMP, subspace
//! pursuit, CoSaMP, iterative hard thresholding, depth-first multipath
//! matching pursuit and full-matrix SBL. Each one ends with a least-squares
//! fit on its final support.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    check_rows, correlations, least_squares, residual_project, top_l, top_l_ranked, IndexSet,
    ProjectionBasis, Scalar,
};
use crate::ridge::{sbl_ridge, SblConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Omp,
    Gomp,
    Sp,
    Cosamp,
    Iht,
    MmpDf,
    Sbl,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "omp" => Ok(BaselineKind::Omp),
            "gomp" => Ok(BaselineKind::Gomp),
            "sp" => Ok(BaselineKind::Sp),
            "cosamp" => Ok(BaselineKind::Cosamp),
            "iht" => Ok(BaselineKind::Iht),
            "mmp-df" | "mmp" => Ok(BaselineKind::MmpDf),
            "sbl" => Ok(BaselineKind::Sbl),
            other => Err(Error::invalid(format!("unknown baseline `{other}`"))),
        }
    }
}

fn default_per_iteration() -> usize {
    3
}

fn default_expansion() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    /// Target sparsity `s`; filled in per cell by the experiment runner.
    #[serde(default)]
    pub sparsity: usize,
    /// Indices added per gOMP iteration.
    #[serde(default = "default_per_iteration")]
    pub per_iteration: usize,
    /// Children per MMP node.
    #[serde(default = "default_expansion")]
    pub expansion: usize,
    /// MMP cap on distinct full-length paths; `None` means `L^s`.
    #[serde(default)]
    pub n_max: Option<usize>,
    /// Iteration cap; `None` picks 50 (SP, CoSaMP), 300 (IHT, SBL).
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Residual bound that ends MMP and gOMP early; `None` means `1e-5`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Noise parameter for SBL; `None` means `1e-4`.
    #[serde(default)]
    pub eta2: Option<f64>,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind, sparsity: usize) -> Self {
        BaselineSpec {
            kind,
            sparsity,
            per_iteration: default_per_iteration(),
            expansion: default_expansion(),
            n_max: None,
            max_iter: None,
            epsilon: None,
            eta2: None,
        }
    }

    /// MMP with the exhaustive path budget `L^s`.
    pub fn mmp_full(sparsity: usize) -> Self {
        BaselineSpec::new(BaselineKind::MmpDf, sparsity)
    }

    /// MMP with at most 500 paths.
    pub fn mmp_truncated(sparsity: usize) -> Self {
        BaselineSpec {
            n_max: Some(500),
            ..BaselineSpec::new(BaselineKind::MmpDf, sparsity)
        }
    }

    pub fn iteration_cap(&self) -> usize {
        self.max_iter.unwrap_or(match self.kind {
            BaselineKind::Sp | BaselineKind::Cosamp => 50,
            BaselineKind::Iht | BaselineKind::Sbl => 300,
            _ => self.sparsity,
        })
    }

    pub fn path_cap(&self) -> usize {
        self.n_max
            .unwrap_or_else(|| self.expansion.saturating_pow(self.sparsity.min(u32::MAX as usize) as u32))
    }

    pub fn residual_bound(&self) -> f64 {
        self.epsilon.unwrap_or(1e-5)
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let s = self.sparsity;
        if s == 0 || s > n {
            return Err(Error::invalid(format!("sparsity must lie in 1..={n}, got {s}")));
        }
        if self.per_iteration == 0 || self.expansion == 0 {
            return Err(Error::invalid("per_iteration and expansion must be at least 1"));
        }
        if !(self.residual_bound() >= 0.0) {
            return Err(Error::invalid(format!("epsilon must be nonnegative, got {}", self.residual_bound())));
        }
        match self.kind {
            BaselineKind::Omp | BaselineKind::MmpDf if s >= m => Err(Error::invalid(format!(
                "{:?} needs s < m, got s={s} m={m}",
                self.kind
            ))),
            BaselineKind::Sp if 2 * s > n || s > m => {
                Err(Error::invalid(format!("SP needs 2s <= n and s <= m, got s={s}")))
            }
            BaselineKind::Cosamp if 3 * s > n || 3 * s > m => Err(Error::invalid(format!(
                "CoSaMP needs 3s <= min(m, n), got s={s}"
            ))),
            BaselineKind::Gomp if s > m => Err(Error::invalid(format!("gOMP needs s <= m, got s={s}"))),
            BaselineKind::Gomp if m / self.per_iteration == 0 => {
                Err(Error::invalid("gOMP selects more indices per step than rows"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOutput<T: Scalar> {
    pub support: IndexSet,
    pub signal: DVector<T>,
    pub residual_norm: f64,
    /// Iterations, or distinct full paths for MMP.
    pub iterations: usize,
}

fn finish<T: Scalar>(
    phi: &DMatrix<T>,
    y: &DVector<T>,
    support: IndexSet,
    iterations: usize,
) -> Result<RecoveryOutput<T>> {
    let ls = least_squares(phi, &support, y)?;
    Ok(RecoveryOutput {
        signal: ls.embed(&support, phi.ncols()),
        residual_norm: ls.residual_norm,
        support,
        iterations,
    })
}

fn magnitudes<T: Scalar>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|c| c.modulus()).collect()
}

/// Greedy OMP selection order: each step adds the column most correlated
/// with the current residual. Also returns the residual norm after each step.
pub fn omp_path<T: Scalar>(phi: &DMatrix<T>, y: &DVector<T>, steps: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    check_rows(phi, y)?;
    if steps > phi.ncols() {
        return Err(Error::invalid(format!("cannot take {steps} OMP steps on {} columns", phi.ncols())));
    }
    let mut basis = ProjectionBasis::empty();
    let mut chosen = IndexSet::empty();
    let mut order = Vec::with_capacity(steps);
    let mut norms = Vec::with_capacity(steps);
    let mut r = y.clone();
    for _ in 0..steps {
        let j = top_l_ranked(&magnitudes(&correlations(phi, &r)), 1, &chosen)?[0];
        basis.extend(phi, j);
        chosen = chosen.with(j);
        order.push(j);
        r = basis.residual(y);
        norms.push(r.norm());
    }
    Ok((order, norms))
}

pub fn omp<T: Scalar>(phi: &DMatrix<T>, y: &DVector<T>, s: usize) -> Result<RecoveryOutput<T>> {
    let (order, _) = omp_path(phi, y, s)?;
    finish(phi, y, IndexSet::new(order), s)
}

pub fn gomp<T: Scalar>(
    phi: &DMatrix<T>,
    y: &DVector<T>,
    s: usize,
    per_iteration: usize,
    epsilon: f64,
) -> Result<RecoveryOutput<T>> {
    let (m, n) = phi.shape();
    let rounds = s.min(m / per_iteration);
    let mut chosen = IndexSet::empty();
    let mut r = y.clone();
    let mut iterations = 0;
    for _ in 0..rounds {
        if r.norm() <= epsilon {
            break;
        }
        let take = per_iteration.min(n - chosen.len());
        let picks = top_l_ranked(&magnitudes(&correlations(phi, &r)), take, &chosen)?;
        chosen = chosen.union(&IndexSet::new(picks));
        r = residual_project(phi, &chosen, y)?.0;
        iterations += 1;
    }
    let support = if chosen.len() > s {
        let fit = least_squares(phi, &chosen, y)?;
        let local = top_l(fit.coeffs.as_slice(), s, &IndexSet::empty())?;
        IndexSet::new(local.iter().map(|i| chosen.as_slice()[i]).collect())
    } else {
        chosen
    };
    finish(phi, y, support, iterations)
}

/// `s` indices of the largest `|coeffs|`, mapped back through `set`.
fn prune_to<T: Scalar>(coeffs: &DVector<T>, set: &IndexSet, s: usize) -> Result<IndexSet> {
    let local = top_l(coeffs.as_slice(), s, &IndexSet::empty())?;
    Ok(IndexSet::new(local.iter().map(|i| set.as_slice()[i]).collect()))
}

const STAGNATION: f64 = 1e-12;

pub fn subspace_pursuit<T: Scalar>(
    phi: &DMatrix<T>,
    y: &DVector<T>,
    s: usize,
    max_iter: usize,
) -> Result<RecoveryOutput<T>> {
    let mut support = top_l(correlations(phi, y).as_slice(), s, &IndexSet::empty())?;
    let mut ls = least_squares(phi, &support, y)?;
    let mut r = y - crate::linalg::submatrix(phi, &support) * &ls.coeffs;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let extra = top_l(correlations(phi, &r).as_slice(), s, &support)?;
        let merged = support.union(&extra);
        let fit = least_squares(phi, &merged, y)?;
        let candidate = prune_to(&fit.coeffs, &merged, s)?;
        let next = least_squares(phi, &candidate, y)?;
        if next.residual_norm >= ls.residual_norm {
            break;
        }
        let improvement = ls.residual_norm - next.residual_norm;
        r = y - crate::linalg::submatrix(phi, &candidate) * &next.coeffs;
        support = candidate;
        ls = next;
        if improvement < STAGNATION {
            break;
        }
    }
    finish(phi, y, support, iterations)
}

pub fn cosamp<T: Scalar>(
    phi: &DMatrix<T>,
    y: &DVector<T>,
    s: usize,
    max_iter: usize,
) -> Result<RecoveryOutput<T>> {
    let mut support = IndexSet::empty();
    let mut r = y.clone();
    let mut r_norm = y.norm();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let proxy = top_l(correlations(phi, &r).as_slice(), 2 * s, &IndexSet::empty())?;
        let merged = proxy.union(&support);
        let fit = least_squares(phi, &merged, y)?;
        let candidate = prune_to(&fit.coeffs, &merged, s)?;
        let next = least_squares(phi, &candidate, y)?;
        let improvement = r_norm - next.residual_norm;
        if !support.is_empty() && improvement <= 0.0 {
            break;
        }
        r = y - crate::linalg::submatrix(phi, &candidate) * &next.coeffs;
        r_norm = next.residual_norm;
        support = candidate;
        if improvement < STAGNATION || r_norm <= STAGNATION * y.norm() {
            break;
        }
    }
    finish(phi, y, support, iterations)
}

/// Keeps the `s` largest entries of `x`, zeroing the rest.
fn hard_threshold<T: Scalar>(x: &DVector<T>, s: usize) -> Result<(DVector<T>, IndexSet)> {
    let keep = top_l(x.as_slice(), s, &IndexSet::empty())?;
    let mut out = DVector::zeros(x.len());
    for j in keep.iter() {
        out[j] = x[j];
    }
    Ok((out, keep))
}

/// Stops on stagnation, at the cap, or when the iterate stops being finite;
/// in the last case the support of the last finite iterate is kept.
pub fn iht<T: Scalar>(
    phi: &DMatrix<T>,
    y: &DVector<T>,
    s: usize,
    max_iter: usize,
) -> Result<RecoveryOutput<T>> {
    let mut x = DVector::<T>::zeros(phi.ncols());
    let mut support = IndexSet::empty();
    let mut r_norm = y.norm();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let r = y - phi * &x;
        let step = &x + phi.ad_mul(&r);
        if step.iter().any(|v| !v.modulus().is_finite()) {
            break;
        }
        let (next, keep) = hard_threshold(&step, s)?;
        let next_norm = (y - phi * &next).norm();
        if !next_norm.is_finite() {
            break;
        }
        x = next;
        support = keep;
        let stalled = (r_norm - next_norm).abs() < STAGNATION;
        r_norm = next_norm;
        if stalled {
            break;
        }
    }
    finish(phi, y, support, iterations)
}

pub fn sbl<T: Scalar>(
    phi: &DMatrix<T>,
    y: &DVector<T>,
    s: usize,
    eta2: f64,
    max_iter: usize,
) -> Result<RecoveryOutput<T>> {
    let full = IndexSet::full(phi.ncols());
    let cfg = SblConfig {
        eta2,
        max_iter,
        ..SblConfig::default()
    };
    let sol = sbl_ridge(phi, &full, y, &cfg)?;
    let support = top_l(sol.coeffs.as_slice(), s, &IndexSet::empty())?;
    finish(phi, y, support, max_iter)
}

struct MmpSearch<'a, T: Scalar> {
    phi: &'a DMatrix<T>,
    y: &'a DVector<T>,
    s: usize,
    expansion: usize,
    n_max: usize,
    epsilon: f64,
    visited: HashSet<IndexSet>,
    leaves: usize,
    best: Option<(f64, IndexSet)>,
    done: bool,
}

impl<T: Scalar> MmpSearch<'_, T> {
    fn visit(&mut self, path: IndexSet) -> Result<()> {
        if self.done || !self.visited.insert(path.clone()) {
            return Ok(());
        }
        let (r, _) = residual_project(self.phi, &path, self.y)?;
        if path.len() == self.s {
            let norm = r.norm();
            self.leaves += 1;
            if self.best.as_ref().is_none_or(|(b, _)| norm < *b) {
                self.best = Some((norm, path));
            }
            if norm <= self.epsilon || self.leaves >= self.n_max {
                self.done = true;
            }
            return Ok(());
        }
        let width = self.expansion.min(self.phi.ncols() - path.len());
        let children = top_l_ranked(&magnitudes(&correlations(self.phi, &r)), width, &path)?;
        for j in children {
            self.visit(path.with(j))?;
            if self.done {
                break;
            }
        }
        Ok(())
    }
}

/// Depth-first multipath matching pursuit.
///
/// Each node spawns the `expansion` indices most correlated with its residual,
/// explored in rank order; a support reached twice is searched once. Stops at
/// the first full-length path with residual `<= epsilon` or after `n_max`
/// distinct full-length paths, returning the best one seen.
pub fn mmp_df<T: Scalar>(
    phi: &DMatrix<T>,
    y: &DVector<T>,
    s: usize,
    expansion: usize,
    n_max: usize,
    epsilon: f64,
) -> Result<RecoveryOutput<T>> {
    check_rows(phi, y)?;
    if s == 0 || s >= phi.nrows() || expansion == 0 || n_max == 0 {
        return Err(Error::invalid(format!(
            "MMP needs 1 <= s < m and positive L, nMax; got s={s} L={expansion} nMax={n_max}"
        )));
    }
    let mut search = MmpSearch {
        phi,
        y,
        s,
        expansion,
        n_max,
        epsilon,
        visited: HashSet::new(),
        leaves: 0,
        best: None,
        done: false,
    };
    search.visit(IndexSet::empty())?;
    let (_, support) = search.best.expect("the first descent always reaches full length");
    finish(phi, y, support, search.leaves)
}

pub fn baseline_recover<T: Scalar>(
    spec: &BaselineSpec,
    y: &DVector<T>,
    phi: &DMatrix<T>,
) -> Result<RecoveryOutput<T>> {
    check_rows(phi, y)?;
    let (m, n) = phi.shape();
    spec.validate(m, n)?;
    let s = spec.sparsity;
    match spec.kind {
        BaselineKind::Omp => omp(phi, y, s),
        BaselineKind::Gomp => gomp(phi, y, s, spec.per_iteration, spec.residual_bound()),
        BaselineKind::Sp => subspace_pursuit(phi, y, s, spec.iteration_cap()),
        BaselineKind::Cosamp => cosamp(phi, y, s, spec.iteration_cap()),
        BaselineKind::Iht => iht(phi, y, s, spec.iteration_cap()),
        BaselineKind::MmpDf => mmp_df(phi, y, s, spec.expansion, spec.path_cap(), spec.residual_bound()),
        BaselineKind::Sbl => sbl(phi, y, s, spec.eta2.unwrap_or(1e-4), spec.iteration_cap()),
    }
}

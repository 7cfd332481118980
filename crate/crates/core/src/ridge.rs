//! Sparse Bayesian ridge regression on a column subset.
//!
//! The prior is `x_i ~ N(0, γ_i)` with fixed noise variance `η²`. Each EM step
//! computes the posterior `N(μ, Σ)` and sets `γ_i ← |μ_i|² + Σ_ii`. The cost
//! `log|η²I + Φ D(γ) Φ*| + y*(η²I + Φ D(γ) Φ*)⁻¹ y` never increases under these
//! steps, which the solver records.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensembles::SnrDb;
use crate::error::{Error, Result};
use crate::linalg::{check_columns, check_rows, least_squares, submatrix, top_l, IndexSet, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SblConfig {
    pub eta2: f64,
    pub max_iter: usize,
    pub gamma_init: f64,
    pub gamma_floor: f64,
    /// Skip the Bayesian step and solve plain least squares.
    pub noiseless: bool,
}

impl Default for SblConfig {
    fn default() -> Self {
        SblConfig {
            eta2: 1e-4,
            max_iter: 10,
            gamma_init: 1.0,
            gamma_floor: 1e-12,
            noiseless: false,
        }
    }
}

impl SblConfig {
    pub fn noiseless() -> Self {
        SblConfig {
            noiseless: true,
            ..SblConfig::default()
        }
    }

    /// Regularization tied to the measurement: `η² = max((‖y‖·10^(−snr/20))²/m, 1e−4)`,
    /// or the least-squares path when the SNR is infinite.
    pub fn for_measurement<T: Scalar>(y: &DVector<T>, snr: SnrDb) -> Self {
        if snr.is_noiseless() {
            return SblConfig::noiseless();
        }
        SblConfig {
            eta2: eta2_for(y, snr),
            ..SblConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.noiseless {
            return Ok(());
        }
        if !(self.eta2 > 0.0 && self.eta2.is_finite()) {
            return Err(Error::invalid(format!("eta2 must be positive, got {}", self.eta2)));
        }
        if !(self.gamma_floor > 0.0 && self.gamma_init >= self.gamma_floor && self.gamma_init.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < gamma_floor <= gamma_init, got floor {} init {}",
                self.gamma_floor, self.gamma_init
            )));
        }
        Ok(())
    }
}

pub fn eta2_for<T: Scalar>(y: &DVector<T>, snr: SnrDb) -> f64 {
    let noise = y.norm() * snr.amplitude_ratio();
    (noise * noise / y.len().max(1) as f64).max(1e-4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution<T: Scalar> {
    pub support: IndexSet,
    pub coeffs: DVector<T>,
    pub gamma: Vec<f64>,
    /// Cost of every `γ` visited, including the final one.
    pub cost_trace: Vec<f64>,
}

impl<T: Scalar> RidgeSolution<T> {
    pub fn embed(&self, n: usize) -> DVector<T> {
        crate::linalg::embed(&self.coeffs, &self.support, n)
    }
}

struct Posterior<T: Scalar> {
    mean: DVector<T>,
    var_diag: Vec<f64>,
    cost: f64,
}

fn failure(support: &IndexSet, iteration: usize, detail: &str) -> Error {
    Error::NumericFailure {
        support: support.clone(),
        iteration,
        detail: detail.to_string(),
    }
}

/// Posterior through the `a × a` system `A = Φ*Φ + η² D⁻¹`; suits `a ≤ m`.
fn posterior_narrow<T: Scalar>(
    a_mat: &DMatrix<T>,
    y: &DVector<T>,
    gamma: &[f64],
    eta2: f64,
) -> Option<Posterior<T>> {
    let (m, a) = a_mat.shape();
    let mut sys = a_mat.ad_mul(a_mat);
    for (i, g) in gamma.iter().enumerate() {
        sys[(i, i)] += T::from_real(eta2 / g);
    }
    let chol = sys.cholesky()?;
    let mean = chol.solve(&a_mat.ad_mul(y));
    let inv = chol.inverse();
    let var_diag: Vec<f64> = (0..a).map(|i| eta2 * inv[(i, i)].real()).collect();

    // log|C| = (m − a) log η² + Σ log γ + log|A|
    let log_det_sys: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.real().ln()).sum::<f64>();
    let log_det = (m as f64 - a as f64) * eta2.ln() + gamma.iter().map(|g| g.ln()).sum::<f64>() + log_det_sys;
    // y*C⁻¹y = ‖y − Φμ‖²/η² + μ* D⁻¹ μ
    let fit = (y - a_mat * &mean).norm_squared() / eta2;
    let prior: f64 = mean.iter().zip(gamma).map(|(v, g)| v.modulus_squared() / g).sum();
    let cost = log_det + fit + prior;
    cost.is_finite().then_some(Posterior { mean, var_diag, cost })
}

/// Posterior through the `m × m` covariance `C = η²I + Φ D Φ*`; suits `a > m`.
fn posterior_wide<T: Scalar>(
    a_mat: &DMatrix<T>,
    y: &DVector<T>,
    gamma: &[f64],
    eta2: f64,
) -> Option<Posterior<T>> {
    let (m, a) = a_mat.shape();
    let mut scaled = a_mat.clone();
    for (j, g) in gamma.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*g);
    }
    let mut c = &scaled * a_mat.adjoint();
    for i in 0..m {
        c[(i, i)] += T::from_real(eta2);
    }
    let chol = c.cholesky()?;
    let cy = chol.solve(y);
    let c_phi = chol.solve(a_mat);
    let mean = DVector::from_fn(a, |i, _| T::from_real(gamma[i]) * a_mat.column(i).dotc(&cy));
    let var_diag: Vec<f64> = (0..a)
        .map(|i| gamma[i] - gamma[i] * gamma[i] * a_mat.column(i).dotc(&c_phi.column(i)).real())
        .collect();
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.real().ln()).sum::<f64>();
    let cost = log_det + y.dotc(&cy).real();
    cost.is_finite().then_some(Posterior { mean, var_diag, cost })
}

fn posterior<T: Scalar>(a_mat: &DMatrix<T>, y: &DVector<T>, gamma: &[f64], eta2: f64) -> Option<Posterior<T>> {
    if a_mat.ncols() <= a_mat.nrows() {
        posterior_narrow(a_mat, y, gamma, eta2)
    } else {
        posterior_wide(a_mat, y, gamma, eta2)
    }
}

/// Ridge estimate on the columns `psi` of `phi`.
pub fn sbl_ridge<T: Scalar>(
    phi: &DMatrix<T>,
    psi: &IndexSet,
    y: &DVector<T>,
    config: &SblConfig,
) -> Result<RidgeSolution<T>> {
    check_columns(phi, psi)?;
    check_rows(phi, y)?;
    config.validate()?;
    if psi.is_empty() {
        return Err(Error::invalid("ridge support must be nonempty"));
    }
    let a = psi.len();
    if config.noiseless {
        let ls = least_squares(phi, psi, y)?;
        return Ok(RidgeSolution {
            support: psi.clone(),
            coeffs: ls.coeffs,
            gamma: vec![config.gamma_init; a],
            cost_trace: Vec::new(),
        });
    }

    let a_mat = submatrix(phi, psi);
    let mut gamma = vec![config.gamma_init; a];
    let mut cost_trace = Vec::with_capacity(config.max_iter + 1);
    let mut iteration = 0;
    loop {
        let post = posterior(&a_mat, y, &gamma, config.eta2)
            .ok_or_else(|| failure(psi, iteration, "ridge system is not positive definite"))?;
        cost_trace.push(post.cost);
        if iteration == config.max_iter {
            return Ok(RidgeSolution {
                support: psi.clone(),
                coeffs: post.mean,
                gamma,
                cost_trace,
            });
        }
        for (i, g) in gamma.iter_mut().enumerate() {
            let next = post.mean[i].modulus_squared() + post.var_diag[i];
            *g = if next.is_finite() { next.max(config.gamma_floor) } else { f64::NAN };
        }
        if gamma.iter().any(|g| g.is_nan()) {
            return Err(failure(psi, iteration + 1, "variance update is not finite"));
        }
        iteration += 1;
    }
}

/// The `k` members of the solution's support with the largest `|coeff|`.
pub fn k_support_select<T: Scalar>(solution: &RidgeSolution<T>, k: usize) -> Result<IndexSet> {
    if k > solution.support.len() {
        return Err(Error::invalid(format!(
            "cannot keep {k} of {} ridge coefficients",
            solution.support.len()
        )));
    }
    let local = top_l(solution.coeffs.as_slice(), k, &IndexSet::empty())?;
    let s = solution.support.as_slice();
    Ok(IndexSet::new(local.iter().map(|i| s[i]).collect()))
}

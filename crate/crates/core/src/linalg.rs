//! Dense kernels shared by every solver: index sets, top-`l` selection,
//! orthogonal residual projections and least squares.
//!
//! All routines are generic over [`Scalar`], which is implemented for `f64`
//! and `Complex64`. Column indices are 0-based in the Rust API; [`IndexSet`]
//! renders and (de)serializes them 1-based, which is what every file format
//! and the command line use.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative norm below which a newly orthogonalized column counts as dependent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarField {
    Real,
    Complex,
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Real => f.write_str("real"),
            ScalarField::Complex => f.write_str("complex"),
        }
    }
}

/// Element type of sensing matrices, signals and measurements.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + fmt::Debug + 'static {
    const FIELD: ScalarField;

    /// Builds a scalar from real and imaginary parts. The real field drops `im`.
    fn from_parts(re: f64, im: f64) -> Self;

    /// Standard normal draw with unit total variance (complex: circular, 1/2 per part).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn parts(self) -> (f64, f64) {
        (self.real(), self.imaginary())
    }
}

impl Scalar for f64 {
    const FIELD: ScalarField = ScalarField::Real;

    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Scalar for Complex64 {
    const FIELD: ScalarField = ScalarField::Complex;

    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}

pub(crate) fn check_field<T: Scalar>(expected: ScalarField) -> Result<()> {
    if T::FIELD == expected {
        Ok(())
    } else {
        Err(Error::FieldMismatch {
            expected,
            found: T::FIELD,
        })
    }
}

/// Sorted, duplicate-free set of column indices (0-based).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    /// Sorts and removes duplicates.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        IndexSet(indices)
    }

    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::invalid("1-based index set contains 0"));
        }
        Ok(Self::new(indices.iter().map(|i| i - 1).collect()))
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub fn full(n: usize) -> Self {
        IndexSet((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn with(&self, index: usize) -> Self {
        let mut out = self.clone();
        if let Err(pos) = out.0.binary_search(&index) {
            out.0.insert(pos, index);
        }
        out
    }

    pub fn union(&self, other: &IndexSet) -> Self {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Self::new(v)
    }

    pub fn intersection_len(&self, other: &IndexSet) -> usize {
        self.iter().filter(|&i| other.contains(i)).count()
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn difference(&self, other: &IndexSet) -> Self {
        IndexSet(self.iter().filter(|&i| !other.contains(i)).collect())
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", i + 1)?;
        }
        f.write_str("}")
    }
}

impl Serialize for IndexSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IndexSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<usize>::deserialize(deserializer)?;
        IndexSet::from_one_based(&raw).map_err(serde::de::Error::custom)
    }
}

/// Order by decreasing magnitude, ties toward the smaller index.
fn by_magnitude(mags: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        mags[b]
            .partial_cmp(&mags[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// Indices of the `l` largest magnitudes of `v` outside `exclude`, sorted.
pub fn top_l<T: Scalar>(v: &[T], l: usize, exclude: &IndexSet) -> Result<IndexSet> {
    let mags: Vec<f64> = v.iter().map(|x| x.modulus()).collect();
    top_l_ranked(&mags, l, exclude).map(IndexSet::new)
}

/// Like [`top_l`] on precomputed magnitudes, but keeps the rank order
/// (largest first) instead of sorting by index.
pub fn top_l_ranked(mags: &[f64], l: usize, exclude: &IndexSet) -> Result<Vec<usize>> {
    let mut candidates: Vec<usize> = (0..mags.len()).filter(|&i| !exclude.contains(i)).collect();
    if l > candidates.len() {
        return Err(Error::invalid(format!(
            "cannot select {l} indices from {} available",
            candidates.len()
        )));
    }
    if l == 0 {
        return Ok(Vec::new());
    }
    let cmp = by_magnitude(mags);
    if l < candidates.len() {
        candidates.select_nth_unstable_by(l - 1, &cmp);
        candidates.truncate(l);
    }
    candidates.sort_unstable_by(&cmp);
    Ok(candidates)
}

pub fn norm<T: Scalar>(v: &DVector<T>) -> f64 {
    v.norm()
}

/// Orthonormal basis of `range(Φ_Γ)` built column by column with classical
/// Gram-Schmidt and one re-orthogonalization pass.
#[derive(Debug, Clone)]
pub struct ProjectionBasis<T: Scalar> {
    base: IndexSet,
    columns: Vec<DVector<T>>,
}

impl<T: Scalar> ProjectionBasis<T> {
    pub fn empty() -> Self {
        ProjectionBasis {
            base: IndexSet::empty(),
            columns: Vec::new(),
        }
    }

    pub fn new(phi: &DMatrix<T>, set: &IndexSet) -> Self {
        let mut basis = Self::empty();
        for j in set.iter() {
            basis.extend(phi, j);
        }
        basis
    }

    pub fn base_set(&self) -> &IndexSet {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[DVector<T>] {
        &self.columns
    }

    /// Orthogonalizes `v` against the basis in place (two passes) and returns
    /// the projection coefficients.
    fn orthogonalize(&self, v: &mut DVector<T>) -> Vec<T> {
        let mut coeffs = vec![T::zero(); self.columns.len()];
        for _pass in 0..2 {
            for (c, q) in coeffs.iter_mut().zip(&self.columns) {
                let h = q.dotc(v);
                v.axpy(-h, q, T::one());
                *c += h;
            }
        }
        coeffs
    }

    /// Adds column `j` of `phi` to the base set. Returns `false` when the column
    /// is numerically dependent on the current basis (it still joins the base
    /// set but contributes no direction).
    pub fn extend(&mut self, phi: &DMatrix<T>, j: usize) -> bool {
        self.extend_with_coeffs(phi, j).1
    }

    fn extend_with_coeffs(&mut self, phi: &DMatrix<T>, j: usize) -> (Vec<T>, bool, f64) {
        let mut v: DVector<T> = phi.column(j).into_owned();
        let original = v.norm();
        let coeffs = self.orthogonalize(&mut v);
        let remaining = v.norm();
        self.base = self.base.with(j);
        if original == 0.0 || remaining <= RANK_TOL * original {
            return (coeffs, false, remaining);
        }
        v.unscale_mut(remaining);
        self.columns.push(v);
        (coeffs, true, remaining)
    }

    pub fn project(&self, y: &DVector<T>) -> DVector<T> {
        let mut p = DVector::zeros(y.len());
        for q in &self.columns {
            p.axpy(q.dotc(y), q, T::one());
        }
        p
    }

    /// `y` minus its orthogonal projection onto the span of the basis.
    pub fn residual(&self, y: &DVector<T>) -> DVector<T> {
        let mut r = y.clone();
        self.orthogonalize(&mut r);
        r
    }
}

/// Component of `y` orthogonal to `range(Φ_Γ)`, plus the basis that produced it.
pub fn residual_project<T: Scalar>(
    phi: &DMatrix<T>,
    gamma: &IndexSet,
    y: &DVector<T>,
) -> Result<(DVector<T>, ProjectionBasis<T>)> {
    check_columns(phi, gamma)?;
    check_rows(phi, y)?;
    let basis = ProjectionBasis::new(phi, gamma);
    Ok((basis.residual(y), basis))
}

#[derive(Debug, Clone)]
pub struct LeastSquares<T: Scalar> {
    pub coeffs: DVector<T>,
    pub residual_norm: f64,
}

impl<T: Scalar> LeastSquares<T> {
    /// Scatters the coefficients into a length-`n` vector supported on `set`.
    pub fn embed(&self, set: &IndexSet, n: usize) -> DVector<T> {
        embed(&self.coeffs, set, n)
    }
}

pub fn embed<T: Scalar>(coeffs: &DVector<T>, set: &IndexSet, n: usize) -> DVector<T> {
    let mut x = DVector::zeros(n);
    for (c, j) in coeffs.iter().zip(set.iter()) {
        x[j] = *c;
    }
    x
}

pub fn submatrix<T: Scalar>(phi: &DMatrix<T>, set: &IndexSet) -> DMatrix<T> {
    phi.select_columns(set.as_slice())
}

/// Minimizer of `‖Φ_J c − y‖`; the minimum-norm one when `Φ_J` is rank deficient.
pub fn least_squares<T: Scalar>(
    phi: &DMatrix<T>,
    set: &IndexSet,
    y: &DVector<T>,
) -> Result<LeastSquares<T>> {
    check_columns(phi, set)?;
    check_rows(phi, y)?;
    let a = set.len();
    if a == 0 {
        return Ok(LeastSquares {
            coeffs: DVector::zeros(0),
            residual_norm: y.norm(),
        });
    }

    let mut basis = ProjectionBasis::empty();
    let mut r = DMatrix::<T>::zeros(a, a);
    let mut full_rank = true;
    for (col, j) in set.iter().enumerate() {
        let (coeffs, independent, diag) = basis.extend_with_coeffs(phi, j);
        if !independent {
            full_rank = false;
            break;
        }
        for (row, c) in coeffs.into_iter().enumerate() {
            r[(row, col)] = c;
        }
        r[(col, col)] = T::from_real(diag);
    }

    let coeffs = if full_rank {
        let qty = DVector::from_iterator(a, basis.columns().iter().map(|q| q.dotc(y)));
        back_substitute(&r, qty)
    } else {
        min_norm_solve(&submatrix(phi, set), y)
    };
    let residual_norm = if full_rank {
        basis.residual(y).norm()
    } else {
        (y - submatrix(phi, set) * &coeffs).norm()
    };
    Ok(LeastSquares {
        coeffs,
        residual_norm,
    })
}

/// `min_c ‖Φ_J c − y‖` without the coefficients.
pub fn residual_norm<T: Scalar>(phi: &DMatrix<T>, set: &IndexSet, y: &DVector<T>) -> Result<f64> {
    Ok(residual_project(phi, set, y)?.0.norm())
}

fn back_substitute<T: Scalar>(r: &DMatrix<T>, mut b: DVector<T>) -> DVector<T> {
    let a = b.len();
    for i in (0..a).rev() {
        let mut acc = b[i];
        for j in i + 1..a {
            acc -= r[(i, j)] * b[j];
        }
        b[i] = acc / r[(i, i)];
    }
    b
}

/// Pseudo-inverse solve through a singular value decomposition.
fn min_norm_solve<T: Scalar>(a: &DMatrix<T>, y: &DVector<T>) -> DVector<T> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    svd.solve(y, tol)
        .expect("both singular vector sets were requested")
}

pub(crate) fn check_columns<T: Scalar>(phi: &DMatrix<T>, set: &IndexSet) -> Result<()> {
    match set.max_index() {
        Some(j) if j >= phi.ncols() => Err(Error::invalid(format!(
            "column index {} out of range for {} columns",
            j + 1,
            phi.ncols()
        ))),
        _ => Ok(()),
    }
}

pub(crate) fn check_rows<T: Scalar>(phi: &DMatrix<T>, y: &DVector<T>) -> Result<()> {
    if phi.nrows() != y.len() {
        return Err(Error::dims(format!(
            "matrix has {} rows but vector has length {}",
            phi.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// `Φ* r`.
pub fn correlations<T: Scalar>(phi: &DMatrix<T>, r: &DVector<T>) -> DVector<T> {
    phi.ad_mul(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| f64::standard_normal(&mut rng))
    }

    fn set(one_based: &[usize]) -> IndexSet {
        IndexSet::from_one_based(one_based).unwrap()
    }

    #[test]
    fn top_l_breaks_ties_toward_smaller_index() {
        let v = [0.1, 0.5, 0.2, 0.2];
        assert_eq!(top_l(&v, 2, &IndexSet::empty()).unwrap(), set(&[2, 3]));
    }

    #[test]
    fn top_l_uses_absolute_value() {
        let v = [-3.0, 1.0, 2.0];
        assert_eq!(top_l(&v, 1, &IndexSet::empty()).unwrap(), set(&[1]));
    }

    #[test]
    fn top_l_respects_exclusion() {
        let v = [0.4, 0.3, 0.2, 0.1];
        assert_eq!(top_l(&v, 2, &set(&[1])).unwrap(), set(&[2, 3]));
    }

    #[test]
    fn top_l_rejects_oversized_request() {
        let v = [1.0, 2.0, 3.0];
        assert!(matches!(
            top_l(&v, 3, &set(&[2])),
            Err(Error::InvalidArgument(_))
        ));
        assert!(top_l(&v, 0, &IndexSet::empty()).unwrap().is_empty());
    }

    #[test]
    fn index_set_renders_one_based() {
        let s = IndexSet::new(vec![4, 0, 4, 2]);
        assert_eq!(s.as_slice(), &[0, 2, 4]);
        assert_eq!(s.to_string(), "{1, 3, 5}");
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,3,5]");
        let back: IndexSet = serde_json::from_str("[5,1,3]").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<IndexSet>("[0,1]").is_err());
    }

    #[test]
    fn empty_projection_is_identity() {
        let phi = gaussian(5, 8, 1);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        let (r, basis) = residual_project(&phi, &IndexSet::empty(), &y).unwrap();
        assert_eq!(r, y);
        assert_eq!(basis.rank(), 0);
    }

    #[test]
    fn coordinate_projection() {
        let phi = DMatrix::<f64>::identity(2, 2);
        let y = DVector::from_vec(vec![3.0, 4.0]);
        let (r, _) = residual_project(&phi, &set(&[1]), &y).unwrap();
        assert!((r[0]).abs() < 1e-15);
        assert!((r[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn member_of_range_projects_to_zero() {
        let phi = gaussian(10, 15, 2);
        let gamma = set(&[2, 7, 11]);
        let y = &phi.column(1) * 0.7 - &phi.column(10) * 1.3 + &phi.column(6) * 0.2;
        let (r, _) = residual_project(&phi, &gamma, &y).unwrap();
        assert!(r.norm() <= 1e-10 * y.norm());
    }

    #[test]
    fn dependent_columns_are_skipped() {
        let mut phi = gaussian(6, 4, 3);
        let c = phi.column(0) * 2.0 - phi.column(1);
        phi.set_column(2, &c);
        let basis = ProjectionBasis::new(&phi, &IndexSet::full(4));
        assert_eq!(basis.rank(), 3);
        assert_eq!(basis.base_set().len(), 4);
        for (i, a) in basis.columns().iter().enumerate() {
            for (j, b) in basis.columns().iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((a.dot(b) - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn orthonormal_least_squares() {
        let q = gaussian(7, 3, 4).qr().q();
        let y = DVector::from_fn(7, |i, _| (i as f64).sin());
        let ls = least_squares(&q, &IndexSet::full(3), &y).unwrap();
        let expect = q.transpose() * &y;
        assert!((&ls.coeffs - &expect).norm() < 1e-12);
        let resid = (&y - &q * &expect).norm();
        assert!((ls.residual_norm - resid).abs() < 1e-12);
    }

    #[test]
    fn square_invertible_solve_is_exact() {
        let phi = gaussian(6, 6, 5);
        let y = DVector::from_fn(6, |i, _| 1.0 + i as f64);
        let ls = least_squares(&phi, &IndexSet::full(6), &y).unwrap();
        assert!(ls.residual_norm <= 1e-10 * y.norm());
    }

    #[test]
    fn noiseless_support_recovers_signal() {
        // 8x20 Gaussian with three active columns.
        let phi = gaussian(8, 20, 6);
        let omega = set(&[3, 9, 17]);
        let mut x0 = DVector::zeros(20);
        x0[2] = 0.8;
        x0[8] = -0.35;
        x0[16] = 0.51;
        let y = &phi * &x0;
        let ls = least_squares(&phi, &omega, &y).unwrap();
        let x = ls.embed(&omega, 20);
        assert!((&x - &x0).norm() <= 1e-10 * x0.norm());
    }

    #[test]
    fn rank_deficient_least_squares_is_minimum_norm() {
        let mut phi = gaussian(6, 3, 7);
        let c = phi.column(0).into_owned();
        phi.set_column(1, &c);
        let y = DVector::from_fn(6, |i, _| (i as f64 * 0.3).cos());
        let ls = least_squares(&phi, &IndexSet::full(3), &y).unwrap();
        // Duplicated columns share their weight equally in the minimum-norm solution.
        assert!((ls.coeffs[0] - ls.coeffs[1]).abs() < 1e-10);
        let pinv = phi.clone().pseudo_inverse(1e-12).unwrap() * &y;
        assert!((&ls.coeffs - &pinv).norm() < 1e-9);
    }

    #[test]
    fn complex_projection_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let phi = DMatrix::from_fn(6, 9, |_, _| Complex64::standard_normal(&mut rng));
        let y = DVector::from_fn(6, |_, _| Complex64::standard_normal(&mut rng));
        let gamma = set(&[1, 4, 5]);
        let (r, _) = residual_project(&phi, &gamma, &y).unwrap();
        for j in gamma.iter() {
            assert!(phi.column(j).dotc(&r).norm() < 1e-10 * y.norm());
        }
        let ls = least_squares(&phi, &gamma, &y).unwrap();
        assert!((ls.residual_norm - r.norm()).abs() < 1e-9 * r.norm());
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let phi = gaussian(3, 4, 9);
        let y = DVector::zeros(3);
        assert!(residual_project(&phi, &set(&[5]), &y).is_err());
        assert!(least_squares(&phi, &set(&[1]), &DVector::zeros(2)).is_err());
    }
}

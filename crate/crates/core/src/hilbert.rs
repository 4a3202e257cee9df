//! Dense complex vectors and matrices for small tensor-product state spaces.
//!
//! Every space handled here is tiny (12 dimensions for the three-path
//! interferometer, at most a few hundred for the generalized N-path device),
//! so storage is a flat row-major `Vec<Complex64>` and the operations are
//! written directly. The matrix exponential exists purely as a verification
//! oracle for the closed-form interaction operators; production code paths
//! never call it.

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Hard cap on the dimension a tensor product may produce.
pub const MAX_TENSOR_DIM: usize = 4096;

/// Taylor terms allowed before `expm` gives up.
const EXPM_MAX_TERMS: usize = 300;

#[derive(Debug, Error, PartialEq)]
pub enum HilbertError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("tensor product dimension {0} exceeds cap {MAX_TENSOR_DIM}")]
    DimTooLarge(usize),
    #[error("matrix exponential tolerance {0:e} outside (0, 1e-6]")]
    BadTolerance(f64),
    #[error("matrix exponential Taylor series did not converge in {EXPM_MAX_TERMS} terms")]
    ExpmDivergence,
    #[error("non-finite amplitude at flat index {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, HilbertError>;

/// State vector over a composite basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CVec {
    amps: Vec<C64>,
}

impl CVec {
    /// Wraps raw amplitudes, rejecting NaN/inf entries.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if let Some(k) = amps.iter().position(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(HilbertError::NonFinite(k));
        }
        Ok(Self { amps })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { amps: vec![C64::new(0.0, 0.0); dim] }
    }

    /// Computational basis vector `|k>`.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index {k} out of range for dim {dim}");
        let mut v = Self::zeros(dim);
        v.amps[k] = C64::new(1.0, 0.0);
        v
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amp(&self, k: usize) -> C64 {
        self.amps[k]
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn set(&mut self, k: usize, value: C64) {
        self.amps[k] = value;
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { amps: self.amps.iter().map(|a| a * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Tensor product `self (x) other`; the left factor owns the most
    /// significant part of the composite index.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let dim = self.dim() * other.dim();
        if dim > MAX_TENSOR_DIM {
            return Err(HilbertError::DimTooLarge(dim));
        }
        let mut amps = Vec::with_capacity(dim);
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(Self { amps })
    }
}

/// `<bra|ket>`; the bra argument is conjugated here, so both arguments are
/// plain ket vectors.
pub fn inner(bra: &CVec, ket: &CVec) -> Result<C64> {
    check_dims(bra.dim(), ket.dim())?;
    Ok(bra
        .amps
        .iter()
        .zip(&ket.amps)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    dim: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            m.data[k * dim + k] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn add_to(&mut self, row: usize, col: usize, value: C64) {
        self.data[row * self.dim + col] += value;
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|a| a * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out.data[c * self.dim + r] = self.at(r, c).conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim, other.dim)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] += a * other.data[k * n + c];
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, v: &CVec) -> Result<CVec> {
        check_dims(self.dim, v.dim())?;
        let n = self.dim;
        let mut out = CVec::zeros(n);
        for r in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..n {
                acc += self.data[r * n + c] * v.amps[c];
            }
            out.amps[r] = acc;
        }
        Ok(out)
    }

    /// Tensor product `self (x) other`, same index convention as
    /// [`CVec::tensor`].
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let dim = self.dim * other.dim;
        if dim > MAX_TENSOR_DIM {
            return Err(HilbertError::DimTooLarge(dim));
        }
        let mut out = Self::zeros(dim);
        let (da, db) = (self.dim, other.dim);
        for ra in 0..da {
            for ca in 0..da {
                let a = self.at(ra, ca);
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for rb in 0..db {
                    for cb in 0..db {
                        out.set(ra * db + rb, ca * db + cb, a * other.at(rb, cb));
                    }
                }
            }
        }
        Ok(out)
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute row sum; cheap upper bound used to pick the
    /// scaling exponent in [`expm`].
    fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.at(r, c).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Matrix exponential by Taylor series with scaling and squaring.
///
/// Verification oracle only: when the norm exceeds 1 the argument is scaled
/// by 2^-s, summed until the term norm drops below `tol`, then squared s
/// times. Tolerance must lie in (0, 1e-6].
pub fn expm(m: &CMat, tol: f64) -> Result<CMat> {
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(HilbertError::BadTolerance(tol));
    }
    let norm = m.inf_norm();
    let s = if norm > 1.0 { norm.log2().ceil() as u32 } else { 0 };
    let scaled = m.scale(C64::new(1.0 / f64::powi(2.0, s as i32), 0.0));

    let mut sum = CMat::identity(m.dim);
    let mut term = CMat::identity(m.dim);
    let mut converged = false;
    for k in 1..=EXPM_MAX_TERMS {
        term = term.matmul(&scaled)?.scale(C64::new(1.0 / k as f64, 0.0));
        sum = sum.add(&term)?;
        if term.max_abs() < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(HilbertError::ExpmDivergence);
    }
    for _ in 0..s {
        sum = sum.matmul(&sum)?;
    }
    Ok(sum)
}

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(HilbertError::DimMismatch { left, right })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// sigma_x on a 2-dimensional factor.
    fn sigma_x() -> CMat {
        let mut m = CMat::zeros(2);
        m.set(0, 1, c(1.0, 0.0));
        m.set(1, 0, c(1.0, 0.0));
        m
    }

    #[test]
    fn tensor_vec_follows_composite_index_arithmetic() {
        // Oracle: index(i, j) = i * dim_b + j, checked entry by entry.
        let a = CVec::new(vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 0.5)]).unwrap();
        let b = CVec::new(vec![c(0.5, 0.0), c(0.0, -1.0)]).unwrap();
        let t = a.tensor(&b).unwrap();
        assert_eq!(t.dim(), 6);
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(t.amp(i * 2 + j), a.amp(i) * b.amp(j));
            }
        }
    }

    #[test]
    fn tensor_spin_flip_moves_basis_index_by_two() {
        // I3 (x) sigma_x (x) I2 on |path 0, spin 0, energy 0> flips only the
        // spin slot: composite index 0 -> (0*2 + 1)*2 + 0 = 2.
        let op = CMat::identity(3)
            .tensor(&sigma_x())
            .unwrap()
            .tensor(&CMat::identity(2))
            .unwrap();
        let out = op.apply(&CVec::basis(12, 0)).unwrap();
        for k in 0..12 {
            let expect = if k == 2 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(out.amp(k).re, expect, epsilon = 0.0);
            assert_abs_diff_eq!(out.amp(k).im, 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn tensor_rejects_dimension_blowup() {
        let big = CMat::identity(70);
        assert_eq!(
            big.tensor(&CMat::identity(70)).unwrap_err(),
            HilbertError::DimTooLarge(4900)
        );
    }

    #[test]
    fn inner_mismatched_dims_is_an_error() {
        let a = CVec::zeros(3);
        let b = CVec::zeros(4);
        assert_eq!(
            inner(&a, &b).unwrap_err(),
            HilbertError::DimMismatch { left: 3, right: 4 }
        );
    }

    #[test]
    fn inner_conjugate_symmetry() {
        let a = CVec::new(vec![c(0.3, -0.2), c(1.0, 0.7), c(-0.4, 0.1)]).unwrap();
        let b = CVec::new(vec![c(-0.8, 0.05), c(0.2, 0.2), c(0.9, -1.1)]).unwrap();
        let ab = inner(&a, &b).unwrap();
        let ba = inner(&b, &a).unwrap();
        assert_abs_diff_eq!(ab.re, ba.re, epsilon = 1e-15);
        assert_abs_diff_eq!(ab.im, -ba.im, epsilon = 1e-15);
    }

    #[test]
    fn dagger_is_an_involution_bit_for_bit() {
        let mut m = CMat::zeros(3);
        for r in 0..3 {
            for cc in 0..3 {
                m.set(r, cc, c(r as f64 - 1.0, 0.25 * cc as f64));
            }
        }
        assert_eq!(m.dagger().dagger(), m);
    }

    #[test]
    fn expm_zero_matrix_is_identity() {
        let e = expm(&CMat::zeros(4), 1e-12).unwrap();
        assert_eq!(e, CMat::identity(4));
    }

    #[test]
    fn expm_rejects_bad_tolerance() {
        assert_eq!(expm(&CMat::zeros(2), 0.0).unwrap_err(), HilbertError::BadTolerance(0.0));
        assert_eq!(expm(&CMat::zeros(2), 1e-3).unwrap_err(), HilbertError::BadTolerance(1e-3));
    }

    #[test]
    fn expm_matches_closed_form_single_qubit_rotation() {
        // Frozen oracle: exp(-i (alpha/2) sigma_x) = cos(alpha/2) I
        // - i sin(alpha/2) sigma_x, written out by hand for alpha = pi/9.
        let alpha = std::f64::consts::PI / 9.0;
        let gen = sigma_x().scale(c(0.0, -alpha / 2.0));
        let e = expm(&gen, 1e-13).unwrap();
        let (cos_h, sin_h) = ((alpha / 2.0).cos(), (alpha / 2.0).sin());
        assert_abs_diff_eq!(e.at(0, 0).re, cos_h, epsilon = 1e-12);
        assert_abs_diff_eq!(e.at(0, 0).im, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.at(0, 1).im, -sin_h, epsilon = 1e-12);
        assert_abs_diff_eq!(e.at(1, 0).im, -sin_h, epsilon = 1e-12);
        assert_abs_diff_eq!(e.at(1, 1).re, cos_h, epsilon = 1e-12);
    }

    #[test]
    fn expm_handles_norm_above_one_via_scaling() {
        // exp(-i theta sigma_x) with theta large enough to force scaling.
        let theta = 5.0;
        let e = expm(&sigma_x().scale(c(0.0, -theta)), 1e-12).unwrap();
        assert_abs_diff_eq!(e.at(0, 0).re, theta.cos(), epsilon = 1e-10);
        assert_abs_diff_eq!(e.at(0, 1).im, -theta.sin(), epsilon = 1e-10);
    }

    fn random_hermitian(dim: usize, vals: &[f64]) -> CMat {
        let mut m = CMat::zeros(dim);
        let mut it = vals.iter().cycle();
        let mut next = || *it.next().unwrap();
        for r in 0..dim {
            for cc in r..dim {
                if r == cc {
                    m.set(r, cc, c(next(), 0.0));
                } else {
                    let v = c(next(), next());
                    m.set(r, cc, v);
                    m.set(cc, r, v.conj());
                }
            }
        }
        m
    }

    proptest! {
        #[test]
        fn unitaries_from_expm_preserve_norm(
            vals in prop::collection::vec(-1.0f64..1.0, 16),
            amps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4),
        ) {
            let h = random_hermitian(4, &vals);
            // exp(-i H) is unitary for Hermitian H.
            let u = expm(&h.scale(c(0.0, -1.0)), 1e-12).unwrap();
            let v = CVec::new(amps.iter().map(|&(re, im)| c(re, im)).collect()).unwrap();
            let uv = u.apply(&v).unwrap();
            prop_assert!((uv.norm() - v.norm()).abs() < 1e-10);
        }

        #[test]
        fn tensor_is_associative(
            a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2),
            b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3),
            d in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2),
        ) {
            let mk = |xs: &[(f64, f64)]| {
                CVec::new(xs.iter().map(|&(re, im)| c(re, im)).collect()).unwrap()
            };
            let (va, vb, vd) = (mk(&a), mk(&b), mk(&d));
            let left = va.tensor(&vb).unwrap().tensor(&vd).unwrap();
            let right = va.tensor(&vb.tensor(&vd).unwrap()).unwrap();
            for k in 0..left.dim() {
                prop_assert!((left.amp(k) - right.amp(k)).norm() < 1e-15);
            }
        }
    }
}

//! Generalized N-path device: one reference path plus N-1 marker properties,
//! property p flipped in path p+1.
//!
//! Basis layout follows the three-path convention: the composite index is
//! `path * 2^(N-1) + mask`, where bit `N-1-p` of `mask` records whether
//! property p (1-based) is flipped away from its reference value. Paths and
//! properties are 1-based in this API, matching how the device is usually
//! described.

use thiserror::Error;

use crate::hilbert::{inner, CMat, CVec, C64};
use crate::model::{OperatorTag, WeakValue};

/// State dimension grows as N * 2^(N-1); 6 paths (192 dimensions) is plenty
/// for anything this models.
pub const MAX_PATHS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum PanError {
    #[error("path count {0} outside 2..={MAX_PATHS}")]
    BadPathCount(usize),
    #[error("expected {expect} path phases, got {got}")]
    BadPhaseCount { expect: usize, got: usize },
    #[error("property index {property} outside 1..={max} for {n} paths")]
    BadProperty { property: usize, max: usize, n: usize },
    #[error("path index {path} outside 1..={n}")]
    BadPath { path: usize, n: usize },
    #[error("strength {0} outside its valid range")]
    BadStrength(f64),
}

pub fn dim(n: usize) -> usize {
    n * (1 << (n - 1))
}

fn check_n(n: usize) -> Result<(), PanError> {
    if (2..=MAX_PATHS).contains(&n) {
        Ok(())
    } else {
        Err(PanError::BadPathCount(n))
    }
}

fn check_phases(n: usize, chis: &[f64]) -> Result<(), PanError> {
    if chis.len() == n {
        Ok(())
    } else {
        Err(PanError::BadPhaseCount { expect: n, got: chis.len() })
    }
}

fn check_property(n: usize, p: usize) -> Result<(), PanError> {
    if (1..n).contains(&p) {
        Ok(())
    } else {
        Err(PanError::BadProperty { property: p, max: n - 1, n })
    }
}

fn check_path(n: usize, j: usize) -> Result<(), PanError> {
    if (1..=n).contains(&j) {
        Ok(())
    } else {
        Err(PanError::BadPath { path: j, n })
    }
}

fn property_bit(n: usize, p: usize) -> usize {
    1 << (n - 1 - p)
}

fn index(n: usize, path0: usize, mask: usize) -> usize {
    path0 * (1 << (n - 1)) + mask
}

/// Pre- and postselected states. The preselection flips property p in path
/// p+1 (reference path 1 untouched); the postselection analyzes every path
/// back onto the all-reference property state with phase chis[k] on path k+1.
pub fn states(n: usize, chis: &[f64]) -> Result<(CVec, CVec), PanError> {
    check_n(n)?;
    check_phases(n, chis)?;
    let amp = 1.0 / (n as f64).sqrt();
    let mut pre = CVec::zeros(dim(n));
    let mut post = CVec::zeros(dim(n));
    for path0 in 0..n {
        let mask = if path0 == 0 { 0 } else { property_bit(n, path0) };
        pre.set(index(n, path0, mask), C64::new(amp, 0.0));
        post.set(index(n, path0, 0), C64::from_polar(amp, chis[path0]));
    }
    Ok((pre, post))
}

/// Closed-form weak rotation of property p inside path j:
/// 1 - (1 - cos(alpha/2)) P_j - i sin(alpha/2) X_p P_j.
pub fn operator(n: usize, p: usize, j: usize, alpha: f64) -> Result<CMat, PanError> {
    check_n(n)?;
    check_property(n, p)?;
    check_path(n, j)?;
    if !alpha.is_finite() || !(0.0..std::f64::consts::TAU).contains(&alpha) {
        return Err(PanError::BadStrength(alpha));
    }
    let half = alpha / 2.0;
    let (diag, flip) = (C64::new(half.cos(), 0.0), C64::new(0.0, -half.sin()));
    let bit = property_bit(n, p);
    let mut m = CMat::identity(dim(n));
    for mask in 0..(1 << (n - 1)) {
        let col = index(n, j - 1, mask);
        m.set(col, col, diag);
        m.set(index(n, j - 1, mask ^ bit), col, flip);
    }
    Ok(m)
}

/// Hermitian generator X_p P_j for the matrix-exponential oracle:
/// [`operator`] must equal exp(-i (alpha/2) X_p P_j).
pub fn rotation_generator(n: usize, p: usize, j: usize) -> Result<CMat, PanError> {
    check_n(n)?;
    check_property(n, p)?;
    check_path(n, j)?;
    let bit = property_bit(n, p);
    let mut m = CMat::zeros(dim(n));
    for mask in 0..(1 << (n - 1)) {
        m.set(index(n, j - 1, mask ^ bit), index(n, j - 1, mask), C64::new(1.0, 0.0));
    }
    Ok(m)
}

/// Detected intensity from direct state propagation.
pub fn intensity(n: usize, p: usize, j: usize, alpha: f64, chis: &[f64]) -> Result<f64, PanError> {
    let (pre, post) = states(n, chis)?;
    let op = operator(n, p, j, alpha)?;
    let out = op.apply(&pre).expect("dimensions fixed by construction");
    Ok(inner(&post, &out).expect("dimensions fixed by construction").norm_sqr())
}

/// Detected intensity from the closed form
/// (1/N^2) [1 + 2 d_{j,p+1} sin(a/2) sin(chi_1 - chi_{p+1})
///            + d_{j,p+1} sin^2(a/2) - d_{j,1} sin^2(a/2)].
///
/// The fringe phase is the phase of the path carrying the flipped property
/// (path p+1); reading it as the reference-path phase would zero the cross
/// term and disagree with propagation.
pub fn intensity_closed(
    n: usize,
    p: usize,
    j: usize,
    alpha: f64,
    chis: &[f64],
) -> Result<f64, PanError> {
    check_n(n)?;
    check_property(n, p)?;
    check_path(n, j)?;
    check_phases(n, chis)?;
    if !alpha.is_finite() || !(0.0..std::f64::consts::TAU).contains(&alpha) {
        return Err(PanError::BadStrength(alpha));
    }
    let s = (alpha / 2.0).sin();
    let mut bracket = 1.0;
    if j == p + 1 {
        bracket += 2.0 * s * (chis[0] - chis[p]).sin() + s * s;
    }
    if j == 1 {
        bracket -= s * s;
    }
    Ok(bracket / (n * n) as f64)
}

/// Attenuation of one path by the absorbed fraction `absorption`; only the
/// reference path changes the detected intensity, linearly in the mean.
pub fn absorber_intensity(
    n: usize,
    absorption: f64,
    j: usize,
    chis: &[f64],
) -> Result<f64, PanError> {
    check_n(n)?;
    check_path(n, j)?;
    if !absorption.is_finite() || !(0.0..=1.0).contains(&absorption) {
        return Err(PanError::BadStrength(absorption));
    }
    let (pre, post) = states(n, chis)?;
    let keep = C64::new((1.0 - absorption).sqrt() - 1.0, 0.0);
    let mut op = CMat::identity(dim(n));
    for mask in 0..(1 << (n - 1)) {
        let k = index(n, j - 1, mask);
        op.add_to(k, k, keep);
    }
    let out = op.apply(&pre).expect("dimensions fixed by construction");
    Ok(inner(&post, &out).expect("dimensions fixed by construction").norm_sqr())
}

/// Weak value of the property-p flip in path j:
/// d_{j,p+1} exp(i (chi_1 - chi_{p+1})), computed numerically.
pub fn weak_value(n: usize, p: usize, j: usize, chis: &[f64]) -> Result<WeakValue, PanError> {
    let (pre, post) = states(n, chis)?;
    check_property(n, p)?;
    check_path(n, j)?;
    let op = rotation_generator(n, p, j)?;
    let denom = inner(&post, &pre).expect("dimensions fixed by construction");
    let numer = inner(
        &post,
        &op.apply(&pre).expect("dimensions fixed by construction"),
    )
    .expect("dimensions fixed by construction");
    Ok(WeakValue {
        value: numer / denom,
        tag: OperatorTag::Pan { property: p, path: j },
        energy_selected: false,
    })
}

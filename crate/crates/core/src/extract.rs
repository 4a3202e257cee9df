//! Weak-value extraction from fitted fringes: coherent subtraction of the
//! preparation fringe from the weak-interaction fringe, normalization by the
//! empty-device contrast and interaction strength, the mean-count route for
//! absorbers, and assembly of the nine-cell matrix with its row and column
//! sums.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::FitResult;
use crate::model::{InteractionKind, OperatorTag, Path};

/// Relative frequency agreement required between paired fits; both sides of
/// a subtraction must describe the same fringe.
const OMEGA_MATCH_REL: f64 = 1e-9;
/// Below this amplitude the signal direction is unconstrained and error
/// propagation through the subtraction formula is singular.
const AMPLITUDE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("fits disagree on frequency ({weak} vs {prep}); refit with a shared omega")]
    OmegaMismatch { weak: f64, prep: f64 },
    #[error("{what} = {value} must be positive to normalize a weak value")]
    BadInput { what: &'static str, value: f64 },
    #[error("expected {expect} cells in interaction-kind major order, got {got}")]
    WrongCellCount { expect: usize, got: usize },
}

/// A value with its one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValErr {
    pub value: f64,
    pub error: f64,
}

impl ValErr {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    /// Exact value with zero uncertainty.
    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }
}

/// Result of subtracting the preparation fringe phasor from the
/// weak-interaction fringe phasor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalDecomposition {
    pub b_weak: ValErr,
    pub b_prep: ValErr,
    /// Phase of the weak fringe relative to the preparation fringe.
    pub delta_phi: f64,
    /// Amplitude genuinely created by the weak interaction.
    pub b_signal: ValErr,
}

/// Separates the interaction-created fringe from the preparation leakage.
/// Both fringes oscillate at the same frequency, so they add as phasors and
/// the signal amplitude follows from the law of cosines:
/// b_s^2 = b_w^2 + b_p^2 - 2 b_w b_p cos(dphi).
pub fn decompose_signal(
    weak: &FitResult,
    prep: &FitResult,
) -> Result<SignalDecomposition, ExtractError> {
    let scale = weak.omega.abs().max(prep.omega.abs()).max(1e-300);
    if (weak.omega - prep.omega).abs() > OMEGA_MATCH_REL * scale {
        return Err(ExtractError::OmegaMismatch { weak: weak.omega, prep: prep.omega });
    }
    let (bw, bp) = (weak.b, prep.b);
    let dphi = weak.phi - prep.phi;
    let cos = dphi.cos();
    let sin = dphi.sin();
    let bs = (bw * bw + bp * bp - 2.0 * bw * bp * cos).max(0.0).sqrt();
    let error = if bs < AMPLITUDE_FLOOR {
        // Complete cancellation: the residual is bounded by the larger of
        // the two amplitude uncertainties.
        weak.d_b.max(prep.d_b)
    } else {
        let t_bw = (bw - bp * cos) * weak.d_b;
        let t_bp = (bp - bw * cos) * prep.d_b;
        let t_phi = (bw * bp * sin).powi(2) * (weak.d_phi.powi(2) + prep.d_phi.powi(2));
        (t_bw * t_bw + t_bp * t_bp + t_phi).sqrt() / bs
    };
    Ok(SignalDecomposition {
        b_weak: ValErr::new(bw, weak.d_b),
        b_prep: ValErr::new(bp, prep.d_b),
        delta_phi: dphi,
        b_signal: ValErr::new(bs, error),
    })
}

fn require_positive(what: &'static str, v: ValErr) -> Result<(), ExtractError> {
    if !v.value.is_finite() || v.value <= 0.0 {
        return Err(ExtractError::BadInput { what, value: v.value });
    }
    Ok(())
}

/// Magnitude of a rotation weak value from the signal amplitude:
/// |wv| = (b_signal / i0_prep) / (c_empty alpha).
///
/// The error combines the signal, mean-level, contrast, and strength
/// uncertainties in the non-singular form that stays finite at zero signal.
pub fn extract_rotation_wv(
    dec: &SignalDecomposition,
    i0_prep: ValErr,
    c_empty: ValErr,
    alpha: ValErr,
) -> Result<ValErr, ExtractError> {
    require_positive("i0_prep", i0_prep)?;
    require_positive("c_empty", c_empty)?;
    require_positive("alpha", alpha)?;
    let norm = i0_prep.value * c_empty.value * alpha.value;
    let bs = dec.b_signal.value;
    let var = dec.b_signal.error.powi(2)
        + (bs * i0_prep.error / i0_prep.value).powi(2)
        + (bs * c_empty.error / c_empty.value).powi(2)
        + (bs * alpha.error / alpha.value).powi(2);
    Ok(ValErr::new(bs / norm, var.sqrt() / norm))
}

/// Path weak value from mean count levels: wv = (1 - i0_weak / i0_prep) / A,
/// signed (over-transmission comes out negative).
pub fn extract_absorber_wv(
    i0_weak: ValErr,
    i0_prep: ValErr,
    absorption: ValErr,
) -> Result<ValErr, ExtractError> {
    require_positive("i0_prep", i0_prep)?;
    require_positive("absorption", absorption)?;
    if !i0_weak.value.is_finite() || i0_weak.value < 0.0 {
        return Err(ExtractError::BadInput { what: "i0_weak", value: i0_weak.value });
    }
    let ratio = i0_weak.value / i0_prep.value;
    let drop = 1.0 - ratio;
    let a = absorption.value;
    let var = (drop * absorption.error / a).powi(2)
        + (i0_weak.value * i0_prep.error / i0_prep.value.powi(2)).powi(2)
        + (i0_weak.error / i0_prep.value).powi(2);
    Ok(ValErr::new(drop / a, var.sqrt() / a))
}

/// One extracted matrix cell, tagged by the observable it measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub tag: OperatorTag,
    pub wv: ValErr,
}

/// The nine-cell weak-value matrix with quadrature row and column sums and
/// per-cell consistency against the ideal identity pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WvMatrix {
    /// Rows: spin rotation, absorber, energy rotation; columns: paths.
    pub cells: [[ValErr; 3]; 3],
    pub row_sums: [ValErr; 3],
    pub col_sums: [ValErr; 3],
    /// Whether each cell agrees with the ideal identity within three sigma.
    pub identity_within_3sigma: [[bool; 3]; 3],
}

fn quadrature_sum(terms: impl IntoIterator<Item = ValErr>) -> ValErr {
    let mut value = 0.0;
    let mut var = 0.0;
    for t in terms {
        value += t.value;
        var += t.error * t.error;
    }
    ValErr::new(value, var.sqrt())
}

/// Assembles nine cells (interaction-kind major, path minor) into the
/// matrix. Cell errors are treated as independent measurements.
pub fn assemble_wv_matrix(results: &[ExtractionResult]) -> Result<WvMatrix, ExtractError> {
    if results.len() != 9 {
        return Err(ExtractError::WrongCellCount { expect: 9, got: results.len() });
    }
    let mut cells = [[ValErr::exact(0.0); 3]; 3];
    for (i, r) in results.iter().enumerate() {
        cells[i / 3][i % 3] = r.wv;
    }
    let row_sums = std::array::from_fn(|r| quadrature_sum(cells[r]));
    let col_sums = std::array::from_fn(|c| quadrature_sum((0..3).map(|r| cells[r][c])));
    let identity_within_3sigma = std::array::from_fn(|r| {
        std::array::from_fn(|c| {
            let ideal = if r == c { 1.0 } else { 0.0 };
            (cells[r][c].value - ideal).abs() <= 3.0 * cells[r][c].error
        })
    });
    Ok(WvMatrix { cells, row_sums, col_sums, identity_within_3sigma })
}

/// Direction the mean count level should move when a marker is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftDirection {
    Raised,
    Lowered,
    Flat,
}

/// Mean-level comparison for one cell: measured on/off ratio against the
/// factor the exact model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCell {
    pub kind: InteractionKind,
    pub path: Path,
    pub ratio: ValErr,
    pub expected_factor: f64,
    pub shift: ShiftDirection,
}

/// Predicted mean-level factor for a marker of the given kind and path:
/// rotations raise the outer-path means by 1 + alpha^2/4 (a rotated-in
/// spin-up component) and lower the reference path by 1 - alpha^2/4; the
/// absorber removes a fraction A of the reference and nothing elsewhere.
pub fn expected_mean_factor(kind: InteractionKind, path: Path, alpha: f64, absorption: f64) -> f64 {
    match (kind, path) {
        (InteractionKind::Absorber, Path::II) => 1.0 - absorption,
        (InteractionKind::Absorber, _) => 1.0,
        (_, Path::II) => 1.0 - alpha * alpha / 4.0,
        (_, _) => 1.0 + alpha * alpha / 4.0,
    }
}

/// Ratio of fitted mean levels, weak over preparation, for the nine cells
/// in interaction-kind major order.
pub fn mean_intensity_analysis(
    weak_fits: &[FitResult],
    prep_fits: &[FitResult],
    alpha: f64,
    absorption: f64,
) -> Result<Vec<MeanCell>, ExtractError> {
    if weak_fits.len() != 9 || prep_fits.len() != 9 {
        return Err(ExtractError::WrongCellCount {
            expect: 9,
            got: weak_fits.len().min(prep_fits.len()),
        });
    }
    let kinds = [InteractionKind::Dc, InteractionKind::Absorber, InteractionKind::Rf];
    let mut out = Vec::with_capacity(9);
    for (i, (w, p)) in weak_fits.iter().zip(prep_fits).enumerate() {
        let kind = kinds[i / 3];
        let path = Path::ALL[i % 3];
        require_positive("i0_prep", ValErr::new(p.i0, p.d_i0))?;
        let ratio = w.i0 / p.i0;
        let err = ((w.d_i0 / p.i0).powi(2) + (w.i0 * p.d_i0 / (p.i0 * p.i0)).powi(2)).sqrt();
        let expected = expected_mean_factor(kind, path, alpha, absorption);
        let shift = if expected > 1.0 {
            ShiftDirection::Raised
        } else if expected < 1.0 {
            ShiftDirection::Lowered
        } else {
            ShiftDirection::Flat
        };
        out.push(MeanCell {
            kind,
            path,
            ratio: ValErr::new(ratio, err),
            expected_factor: expected,
            shift,
        });
    }
    Ok(out)
}

//! Three-path interferometer model: pre/postselected states, closed-form
//! interaction operators, exact detected intensities, and weak values.
//!
//! The state space is path (x) spin (x) energy with composite basis index
//! `((path * 2) + spin) * 2 + energy`; path 0..2 maps to beams I..III, spin 0
//! is up, energy 0 is the unshifted sideband E0 and energy 1 the shifted one
//! E'. All phases are stored on kets; bras are conjugated at inner-product
//! time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{inner, CMat, CVec, C64};

pub const N_PATHS: usize = 3;
/// 3 paths x 2 spin x 2 energy.
pub const DIM: usize = 12;

pub(crate) const INV_SQRT3: f64 = 0.577_350_269_189_625_8;
/// Postselected overlaps smaller than this make a weak value meaningless.
const OVERLAP_FLOOR: f64 = 1e-14;
/// Gram-matrix tolerance for completeness-basis validation.
const ORTHONORMALITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{kind:?} strength {value} outside its valid range")]
    BadStrength { kind: InteractionKind, value: f64 },
    #[error("postselected overlap magnitude below {OVERLAP_FLOOR:e}; weak value undefined")]
    VanishingOverlap,
    #[error("completeness basis must contain {DIM} vectors of dimension {DIM}, got {got}")]
    WrongBasisShape { got: usize },
    #[error("completeness basis fails orthonormality at Gram entry ({row},{col}) by {deviation:e}")]
    NonOrthonormalBasis { row: usize, col: usize, deviation: f64 },
    #[error("operator tag {0:?} needs the N-path interface, not the three-path one")]
    NPathTag(OperatorTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Path {
    I,
    II,
    III,
}

impl Path {
    pub const ALL: [Path; 3] = [Path::I, Path::II, Path::III];

    pub fn index(self) -> usize {
        match self {
            Path::I => 0,
            Path::II => 1,
            Path::III => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Path::I => "I",
            Path::II => "II",
            Path::III => "III",
        }
    }
}

impl std::str::FromStr for Path {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" | "i" | "1" => Ok(Path::I),
            "II" | "ii" | "2" => Ok(Path::II),
            "III" | "iii" | "3" => Ok(Path::III),
            other => Err(format!("unknown path label {other:?} (expected I, II, or III)")),
        }
    }
}

impl std::fmt::Display for Path {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spin {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Energy {
    E0,
    EPrime,
}

/// Composite basis index; the path slot is most significant.
pub fn basis_index(path: Path, spin: Spin, energy: Energy) -> usize {
    (path.index() * 2 + spin as usize) * 2 + energy as usize
}

/// Phase-shifter settings of the three-path device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chi1: f64,
    pub chi2: f64,
}

impl Selection {
    pub fn new(chi1: f64, chi2: f64) -> Self {
        Self { chi1, chi2 }
    }

    /// Ket phases the postselected state carries on paths I..III.
    pub fn path_phases(self) -> [f64; 3] {
        [
            self.chi2 - self.chi1,
            self.chi1 + self.chi2,
            self.chi1 - self.chi2,
        ]
    }
}

impl Default for Selection {
    fn default() -> Self {
        Self { chi1: 0.0, chi2: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    /// Static-field spin rotation; preserves the energy sideband.
    Dc,
    /// Resonant spin rotation; flips spin and energy sideband together.
    Rf,
    /// Partial attenuation of one path.
    Absorber,
}

impl InteractionKind {
    pub fn label(self) -> &'static str {
        match self {
            InteractionKind::Dc => "dc",
            InteractionKind::Rf => "rf",
            InteractionKind::Absorber => "abs",
        }
    }
}

/// A single marker interaction placed in one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    kind: InteractionKind,
    path: Path,
    strength: f64,
}

impl Interaction {
    /// Rotation strength is an angle in [0, 2pi); absorber strength is the
    /// absorbed fraction in [0, 1].
    pub fn new(kind: InteractionKind, path: Path, strength: f64) -> Result<Self, ModelError> {
        let ok = match kind {
            InteractionKind::Dc | InteractionKind::Rf => {
                strength.is_finite() && (0.0..std::f64::consts::TAU).contains(&strength)
            }
            InteractionKind::Absorber => strength.is_finite() && (0.0..=1.0).contains(&strength),
        };
        if ok {
            Ok(Self { kind, path, strength })
        } else {
            Err(ModelError::BadStrength { kind, value: strength })
        }
    }

    pub fn dc(path: Path, alpha: f64) -> Result<Self, ModelError> {
        Self::new(InteractionKind::Dc, path, alpha)
    }

    pub fn rf(path: Path, alpha: f64) -> Result<Self, ModelError> {
        Self::new(InteractionKind::Rf, path, alpha)
    }

    pub fn absorber(path: Path, absorption: f64) -> Result<Self, ModelError> {
        Self::new(InteractionKind::Absorber, path, absorption)
    }

    pub fn kind(self) -> InteractionKind {
        self.kind
    }

    pub fn path(self) -> Path {
        self.path
    }

    pub fn strength(self) -> f64 {
        self.strength
    }

    /// Same interaction with the rotation angle scaled (coil efficiency);
    /// absorbers are returned unchanged.
    pub fn with_efficiency(self, efficiency: f64) -> Result<Self, ModelError> {
        match self.kind {
            InteractionKind::Absorber => Ok(self),
            _ => Self::new(self.kind, self.path, self.strength * efficiency),
        }
    }
}

/// Preselected state: spin flipped in path I (energy preserved) and path III
/// (energy shifted), reference path II untouched.
pub fn preselection() -> CVec {
    let mut v = CVec::zeros(DIM);
    let a = C64::new(INV_SQRT3, 0.0);
    v.set(basis_index(Path::I, Spin::Down, Energy::E0), a);
    v.set(basis_index(Path::II, Spin::Up, Energy::E0), a);
    v.set(basis_index(Path::III, Spin::Down, Energy::EPrime), a);
    v
}

/// Preselection with both flips under-rotated to pi - leak_angle, the
/// physical model of preparation leakage. Residual spin-up amplitude
/// sin(leak/2) stays in paths I and III and beats against the reference.
///
/// The flip coils rotate about the axis that keeps amplitudes real, so the
/// leak-free limit is exactly the canonical preselection and the residual
/// sits in quadrature with what the weak rotations later create.
pub fn preselection_leaked(leak_angle: f64) -> CVec {
    let half = (std::f64::consts::PI - leak_angle) / 2.0;
    let stay = C64::new(half.cos() * INV_SQRT3, 0.0);
    let flip = C64::new(half.sin() * INV_SQRT3, 0.0);
    let mut v = CVec::zeros(DIM);
    v.set(basis_index(Path::I, Spin::Up, Energy::E0), stay);
    v.set(basis_index(Path::I, Spin::Down, Energy::E0), flip);
    v.set(basis_index(Path::II, Spin::Up, Energy::E0), C64::new(INV_SQRT3, 0.0));
    v.set(basis_index(Path::III, Spin::Up, Energy::E0), stay);
    v.set(basis_index(Path::III, Spin::Down, Energy::EPrime), flip);
    v
}

/// Energy window selected together with the spin-up postselection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergySelect {
    E0,
    EPrime,
    /// No energy leg: returns the 6-dimensional path (x) spin vector.
    None,
}

/// Spin-up postselected analyzer state with per-path phases from `sel`.
pub fn postselection(sel: Selection, energy: EnergySelect) -> CVec {
    let phases = sel.path_phases();
    let dim = if energy == EnergySelect::None { 6 } else { DIM };
    let mut v = CVec::zeros(dim);
    for path in Path::ALL {
        let amp = C64::from_polar(INV_SQRT3, phases[path.index()]);
        let k = match energy {
            EnergySelect::E0 => basis_index(path, Spin::Up, Energy::E0),
            EnergySelect::EPrime => basis_index(path, Spin::Up, Energy::EPrime),
            EnergySelect::None => path.index() * 2,
        };
        v.set(k, amp);
    }
    v
}

/// Projector onto one path, acting on the full 12-dimensional space.
pub fn path_projector(path: Path) -> CMat {
    let mut m = CMat::zeros(DIM);
    for k in 0..4 {
        let idx = path.index() * 4 + k;
        m.set(idx, idx, C64::new(1.0, 0.0));
    }
    m
}

/// Spin-flip observable restricted to one path (energy preserved).
pub fn spin_x_path(path: Path) -> CMat {
    let mut m = CMat::zeros(DIM);
    for energy in [Energy::E0, Energy::EPrime] {
        let up = basis_index(path, Spin::Up, energy);
        let down = basis_index(path, Spin::Down, energy);
        m.set(up, down, C64::new(1.0, 0.0));
        m.set(down, up, C64::new(1.0, 0.0));
    }
    m
}

/// Joint spin-and-energy flip restricted to one path; the x component of the
/// energy observable accessible to the resonant rotator.
pub fn energy_x_path(path: Path) -> CMat {
    let mut m = CMat::zeros(DIM);
    for (spin, energy) in [
        (Spin::Up, Energy::E0),
        (Spin::Up, Energy::EPrime),
        (Spin::Down, Energy::E0),
        (Spin::Down, Energy::EPrime),
    ] {
        let from = basis_index(path, spin, energy);
        let to = basis_index(
            path,
            if spin == Spin::Up { Spin::Down } else { Spin::Up },
            if energy == Energy::E0 { Energy::EPrime } else { Energy::E0 },
        );
        m.set(to, from, C64::new(1.0, 0.0));
    }
    m
}

/// Hermitian generator X such that the rotation operator is
/// exp(-i (alpha/2) X); used by the matrix-exponential oracle. Absorbers are
/// not generated this way.
pub fn rotation_generator(kind: InteractionKind, path: Path) -> Option<CMat> {
    match kind {
        InteractionKind::Dc => Some(spin_x_path(path)),
        InteractionKind::Rf => Some(energy_x_path(path)),
        InteractionKind::Absorber => None,
    }
}

/// Closed-form operator for one interaction:
/// rotations are 1 - (1 - cos(alpha/2)) P_j - i sin(alpha/2) X_j and the
/// absorber is 1 - (1 - sqrt(1 - A)) P_j.
pub fn interaction_operator(x: &Interaction) -> CMat {
    let proj = path_projector(x.path);
    match x.kind {
        InteractionKind::Dc | InteractionKind::Rf => {
            let half = x.strength / 2.0;
            let xj = match x.kind {
                InteractionKind::Dc => spin_x_path(x.path),
                _ => energy_x_path(x.path),
            };
            CMat::identity(DIM)
                .add(&proj.scale(C64::new(half.cos() - 1.0, 0.0)))
                .and_then(|m| m.add(&xj.scale(C64::new(0.0, -half.sin()))))
                .expect("fixed 12x12 dimensions")
        }
        InteractionKind::Absorber => {
            let keep = (1.0 - x.strength).sqrt();
            CMat::identity(DIM)
                .add(&proj.scale(C64::new(keep - 1.0, 0.0)))
                .expect("fixed 12x12 dimensions")
        }
    }
}

/// Energy-integrated detected intensity behind the spin-up analyzer:
/// |<f0|O|i>|^2 + |<f'|O|i>|^2, with O the identity when no interaction is
/// present. The empty-device baseline is 1/9.
pub fn detected_intensity(x: Option<&Interaction>, sel: Selection) -> f64 {
    let mut psi = preselection();
    if let Some(x) = x {
        psi = interaction_operator(x).apply(&psi).expect("fixed 12x12 dimensions");
    }
    let f0 = postselection(sel, EnergySelect::E0);
    let fp = postselection(sel, EnergySelect::EPrime);
    inner(&f0, &psi).expect("dims match").norm_sqr()
        + inner(&fp, &psi).expect("dims match").norm_sqr()
}

/// Second-order truncation of the detected intensity, as printed:
/// rotations get 1 + alpha * delta_signal * sin(2 chi) + (alpha^2/4)
/// * (d_I - d_II + d_III) over 9, the absorber gets (1 - A * d_II) / 9.
pub fn intensity_perturbative(x: &Interaction, sel: Selection) -> f64 {
    let d = |p: Path| if x.path == p { 1.0 } else { 0.0 };
    match x.kind {
        InteractionKind::Absorber => (1.0 - x.strength * d(Path::II)) / 9.0,
        kind => {
            let alpha = x.strength;
            let (osc_path, chi) = match kind {
                InteractionKind::Dc => (Path::I, sel.chi1),
                _ => (Path::III, sel.chi2),
            };
            let linear = alpha * d(osc_path) * (2.0 * chi).sin();
            let quad = alpha * alpha / 4.0 * (d(Path::I) - d(Path::II) + d(Path::III));
            (1.0 + linear + quad) / 9.0
        }
    }
}

/// Observable tags a weak value can be computed for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OperatorTag {
    /// Spin flip in one path (energy preserved).
    SpinXPath(Path),
    /// Path projector.
    PathProjector(Path),
    /// Joint spin-energy flip in one path.
    EnergyXPath(Path),
    /// Property-p flip in path j of the generalized N-path device
    /// (1-based indices).
    Pan { property: usize, path: usize },
}

/// A weak value together with what was measured and how it was postselected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakValue {
    pub value: C64,
    pub tag: OperatorTag,
    /// True when the postselection filtered one energy sideband (E0 here).
    pub energy_selected: bool,
}

/// E0-postselected weak value <f0|O|i> / <f0|i> of a three-path observable.
pub fn weak_value(tag: OperatorTag, sel: Selection) -> Result<WeakValue, ModelError> {
    let op = match tag {
        OperatorTag::SpinXPath(p) => spin_x_path(p)
            .matmul(&path_projector(p))
            .expect("fixed 12x12 dimensions"),
        OperatorTag::PathProjector(p) => path_projector(p),
        OperatorTag::EnergyXPath(p) => energy_x_path(p)
            .matmul(&path_projector(p))
            .expect("fixed 12x12 dimensions"),
        OperatorTag::Pan { .. } => return Err(ModelError::NPathTag(tag)),
    };
    let i = preselection();
    let f0 = postselection(sel, EnergySelect::E0);
    let denom = inner(&f0, &i).expect("dims match");
    if denom.norm() < OVERLAP_FLOOR {
        return Err(ModelError::VanishingOverlap);
    }
    let numer = inner(&f0, &op.apply(&i).expect("dims match")).expect("dims match");
    Ok(WeakValue { value: numer / denom, tag, energy_selected: true })
}

/// Checks the decomposition of an ordinary expectation value into
/// postselection-probability-weighted weak values over a complete basis.
///
/// Returns (lhs, rhs) = (<i|P_j|i>, sum_m p_m * Re wv_m). Each term is
/// evaluated as <i|f_m><f_m|P_j|i>, which equals p_m times the weak value and
/// stays well-defined when an overlap vanishes (the term contributes zero).
pub fn completeness_check(basis: &[CVec], path: Path) -> Result<(f64, f64), ModelError> {
    if basis.len() != DIM || basis.iter().any(|v| v.dim() != DIM) {
        return Err(ModelError::WrongBasisShape { got: basis.len() });
    }
    for r in 0..DIM {
        for c in r..DIM {
            let g = inner(&basis[r], &basis[c]).expect("dims checked");
            let expect = if r == c { 1.0 } else { 0.0 };
            let deviation = (g - C64::new(expect, 0.0)).norm();
            if deviation > ORTHONORMALITY_TOL {
                return Err(ModelError::NonOrthonormalBasis { row: r, col: c, deviation });
            }
        }
    }
    let i = preselection();
    let proj_i = path_projector(path).apply(&i).expect("fixed 12x12 dimensions");
    let lhs = inner(&i, &proj_i).expect("dims match").re;
    let rhs: C64 = basis
        .iter()
        .map(|f| inner(&i, f).expect("dims checked") * inner(f, &proj_i).expect("dims checked"))
        .sum();
    Ok((lhs, rhs.re))
}

/// Beamline constants of the physical device. Documentation only: nothing in
/// the intensity or weak-value arithmetic reads these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalContext {
    pub wavelength_angstrom: f64,
    pub resonance_frequency_hz: f64,
    pub energy_splitting_nev: f64,
    pub beam_energy_mev: f64,
}

impl Default for PhysicalContext {
    fn default() -> Self {
        Self {
            wavelength_angstrom: 1.9,
            resonance_frequency_hz: 60.0e3,
            energy_splitting_nev: 0.25,
            beam_energy_mev: 25.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::expm;
    use approx::assert_abs_diff_eq;

    const ALPHA: f64 = std::f64::consts::PI / 9.0;

    fn c64(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn preselection_occupies_the_three_flipped_slots() {
        let i = preselection();
        assert_abs_diff_eq!(i.amp(2).re, INV_SQRT3, epsilon = 1e-15);
        assert_abs_diff_eq!(i.amp(4).re, INV_SQRT3, epsilon = 1e-15);
        assert_abs_diff_eq!(i.amp(11).re, INV_SQRT3, epsilon = 1e-15);
        let occupied: f64 = i.amps().iter().map(|a| a.norm_sqr()).sum();
        assert_abs_diff_eq!(occupied, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(i.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn postselection_phase_at_path_one_matches_direct_evaluation() {
        // chi1 = pi/2, chi2 = 0: ket amplitude on (I, up, E0) is
        // exp(i (chi2 - chi1)) / sqrt(3) = -i / sqrt(3). Frozen.
        let f0 = postselection(Selection::new(std::f64::consts::FRAC_PI_2, 0.0), EnergySelect::E0);
        let amp = f0.amp(basis_index(Path::I, Spin::Up, Energy::E0));
        assert_abs_diff_eq!(amp.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(amp.im, -0.5773502691896258, epsilon = 1e-15);
    }

    #[test]
    fn postselection_without_energy_leg_is_six_dimensional() {
        let f = postselection(Selection::default(), EnergySelect::None);
        assert_eq!(f.dim(), 6);
        for path in Path::ALL {
            assert_abs_diff_eq!(f.amp(path.index() * 2).re, INV_SQRT3, epsilon = 1e-15);
            assert_abs_diff_eq!(f.amp(path.index() * 2 + 1).norm(), 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn preselection_postselection_overlap_is_one_third() {
        // Term-by-term: only (II, up, E0) is shared, (1/sqrt3)*(1/sqrt3) = 1/3.
        let ov = inner(&postselection(Selection::default(), EnergySelect::E0), &preselection())
            .unwrap();
        assert_abs_diff_eq!(ov.re, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ov.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn overlap_carries_the_reference_path_phase() {
        // <f0|i> = (1/3) exp(-i (chi1 + chi2)) for any phase-shifter setting.
        for (chi1, chi2) in [(0.3, -1.1), (2.0, 0.7), (-0.4, 0.9), (4.0, 5.0)] {
            let ov = inner(
                &postselection(Selection::new(chi1, chi2), EnergySelect::E0),
                &preselection(),
            )
            .unwrap();
            let expect = C64::from_polar(1.0 / 3.0, -(chi1 + chi2));
            assert_abs_diff_eq!((ov - expect).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn baseline_intensity_is_one_ninth_for_any_selection() {
        for (chi1, chi2) in [(0.0, 0.0), (1.3, -0.8), (5.9, 2.2)] {
            assert_abs_diff_eq!(
                detected_intensity(None, Selection::new(chi1, chi2)),
                1.0 / 9.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn dc_rotation_in_path_three_raises_mean_without_fringes() {
        // Frozen: (1 + sin^2(pi/18)) / 9 = 0.11446152106744953, independent of
        // the phase shifters (the created component sits in the other energy
        // sideband).
        let x = Interaction::dc(Path::III, ALPHA).unwrap();
        for (chi1, chi2) in [(0.0, 0.0), (0.9, -0.4), (2.5, 1.0)] {
            assert_abs_diff_eq!(
                detected_intensity(Some(&x), Selection::new(chi1, chi2)),
                0.11446152106744953,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn dc_rotation_in_path_two_lowers_the_mean() {
        let x = Interaction::dc(Path::II, ALPHA).unwrap();
        assert_abs_diff_eq!(
            detected_intensity(Some(&x), Selection::default()),
            0.10776070115477268, // cos^2(pi/18) / 9, frozen
            epsilon = 1e-15
        );
    }

    #[test]
    fn dc_rotation_in_path_one_oscillates_at_twice_chi1() {
        // Exact expansion: (1 + 2 sin(a/2) sin(2 chi1) + sin^2(a/2)) / 9.
        let x = Interaction::dc(Path::I, ALPHA).unwrap();
        let s = (ALPHA / 2.0).sin();
        for chi1 in [0.0, 0.4, std::f64::consts::FRAC_PI_4, 2.0, 4.4] {
            let expect = (1.0 + 2.0 * s * (2.0 * chi1).sin() + s * s) / 9.0;
            assert_abs_diff_eq!(
                detected_intensity(Some(&x), Selection::new(chi1, 0.77)),
                expect,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn rf_mirror_cases_swap_paths_one_and_three() {
        let rf3 = Interaction::rf(Path::III, ALPHA).unwrap();
        let s = (ALPHA / 2.0).sin();
        for chi2 in [0.1_f64, 1.2, 3.0] {
            let expect = (1.0 + 2.0 * s * (2.0 * chi2).sin() + s * s) / 9.0;
            assert_abs_diff_eq!(
                detected_intensity(Some(&rf3), Selection::new(0.33, chi2)),
                expect,
                epsilon = 1e-15
            );
        }
        let rf1 = Interaction::rf(Path::I, ALPHA).unwrap();
        assert_abs_diff_eq!(
            detected_intensity(Some(&rf1), Selection::new(0.8, -0.3)),
            0.11446152106744953,
            epsilon = 1e-15
        );
    }

    #[test]
    fn absorber_scales_only_the_reference_path() {
        let sel = Selection::new(0.21, -1.4);
        let baseline = detected_intensity(None, sel);
        let on_ii = detected_intensity(Some(&Interaction::absorber(Path::II, 0.1).unwrap()), sel);
        assert_abs_diff_eq!(on_ii / baseline, 0.9, epsilon = 1e-12);
        for path in [Path::I, Path::III] {
            let off = detected_intensity(Some(&Interaction::absorber(path, 0.1).unwrap()), sel);
            // Bit-exact: the attenuated amplitude never reaches the analyzer.
            assert_eq!(off, baseline);
        }
    }

    #[test]
    fn perturbative_values_match_frozen_expansions() {
        let sel = Selection::new(std::f64::consts::FRAC_PI_4, 0.0);
        let dc1 = Interaction::dc(Path::I, ALPHA).unwrap();
        assert_abs_diff_eq!(
            intensity_perturbative(&dc1, sel),
            0.15328084359750407, // (1 + pi/9 + (pi/9)^2/4) / 9, frozen
            epsilon = 1e-15
        );
        let rf2 = Interaction::rf(Path::II, ALPHA).unwrap();
        assert_abs_diff_eq!(
            intensity_perturbative(&rf2, sel),
            0.107726473113481, // (1 - (pi/9)^2/4) / 9, frozen
            epsilon = 1e-15
        );
        let abs2 = Interaction::absorber(Path::II, 0.1).unwrap();
        assert_abs_diff_eq!(intensity_perturbative(&abs2, sel), 0.9 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn perturbative_tracks_exact_to_third_order() {
        // Max pointwise |exact - truncated| stays below alpha^3 for the
        // oscillating cell.
        for alpha in [0.05, 0.1, 0.2] {
            let x = Interaction::dc(Path::I, alpha).unwrap();
            let worst = (0..64)
                .map(|k| {
                    let sel = Selection::new(k as f64 * 0.1, 0.0);
                    (detected_intensity(Some(&x), sel) - intensity_perturbative(&x, sel)).abs()
                })
                .fold(0.0, f64::max);
            assert!(worst < alpha.powi(3), "alpha={alpha}: worst={worst:e}");
        }
    }

    #[test]
    fn weak_values_form_the_identity_pattern() {
        let sel = Selection::new(0.67, -0.95);
        for path in Path::ALL {
            let spin = weak_value(OperatorTag::SpinXPath(path), sel).unwrap().value;
            let proj = weak_value(OperatorTag::PathProjector(path), sel).unwrap().value;
            let energy = weak_value(OperatorTag::EnergyXPath(path), sel).unwrap().value;
            let expect_spin =
                if path == Path::I { C64::from_polar(1.0, 2.0 * sel.chi1) } else { c64(0.0, 0.0) };
            let expect_proj = if path == Path::II { c64(1.0, 0.0) } else { c64(0.0, 0.0) };
            let expect_energy =
                if path == Path::III { C64::from_polar(1.0, 2.0 * sel.chi2) } else { c64(0.0, 0.0) };
            assert_abs_diff_eq!((spin - expect_spin).norm(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!((proj - expect_proj).norm(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!((energy - expect_energy).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn energy_flip_weak_value_at_quarter_turn_is_i() {
        // chi2 = pi/4 makes exp(2 i chi2) = i. Frozen.
        let wv = weak_value(
            OperatorTag::EnergyXPath(Path::III),
            Selection::new(0.0, std::f64::consts::FRAC_PI_4),
        )
        .unwrap();
        assert_abs_diff_eq!(wv.value.re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(wv.value.im, 1.0, epsilon = 1e-14);
        assert!(wv.energy_selected);
    }

    #[test]
    fn weak_value_rejects_npath_tags() {
        let err = weak_value(OperatorTag::Pan { property: 1, path: 2 }, Selection::default());
        assert!(matches!(err, Err(ModelError::NPathTag(_))));
    }

    #[test]
    fn rotation_operators_match_matrix_exponential_oracle() {
        for (kind, path, alpha) in [
            (InteractionKind::Dc, Path::I, ALPHA),
            (InteractionKind::Dc, Path::II, 1.2),
            (InteractionKind::Rf, Path::III, 0.05),
            (InteractionKind::Rf, Path::I, 2.9),
        ] {
            let closed = interaction_operator(&Interaction::new(kind, path, alpha).unwrap());
            let gen = rotation_generator(kind, path).unwrap();
            let oracle = expm(&gen.scale(c64(0.0, -alpha / 2.0)), 1e-13).unwrap();
            let worst = (0..DIM)
                .flat_map(|r| (0..DIM).map(move |c| (r, c)))
                .map(|(r, c)| (closed.at(r, c) - oracle.at(r, c)).norm())
                .fold(0.0, f64::max);
            assert!(worst < 1e-12, "{kind:?} {path:?} alpha={alpha}: {worst:e}");
        }
    }

    #[test]
    fn rotation_operators_are_unitary() {
        for kind in [InteractionKind::Dc, InteractionKind::Rf] {
            for path in Path::ALL {
                let u = interaction_operator(&Interaction::new(kind, path, 0.83).unwrap());
                let udu = u.dagger().matmul(&u).unwrap();
                let eye = CMat::identity(DIM);
                for r in 0..DIM {
                    for c in 0..DIM {
                        assert_abs_diff_eq!(
                            (udu.at(r, c) - eye.at(r, c)).norm(),
                            0.0,
                            epsilon = 1e-12
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn absorber_endpoints_behave() {
        let none = interaction_operator(&Interaction::absorber(Path::II, 0.0).unwrap());
        assert_eq!(none, CMat::identity(DIM));
        let full = interaction_operator(&Interaction::absorber(Path::II, 1.0).unwrap());
        let out = full.apply(&preselection()).unwrap();
        assert_abs_diff_eq!(out.amp(4).norm(), 0.0, epsilon = 0.0);
    }

    #[test]
    fn strength_ranges_are_enforced() {
        assert!(matches!(
            Interaction::dc(Path::I, -0.1),
            Err(ModelError::BadStrength { kind: InteractionKind::Dc, .. })
        ));
        assert!(matches!(
            Interaction::dc(Path::I, std::f64::consts::TAU),
            Err(ModelError::BadStrength { .. })
        ));
        assert!(matches!(Interaction::absorber(Path::II, 1.5), Err(ModelError::BadStrength { .. })));
        assert!(Interaction::absorber(Path::II, 1.0).is_ok());
    }

    #[test]
    fn completeness_holds_in_the_computational_basis() {
        let basis: Vec<CVec> = (0..DIM).map(|k| CVec::basis(DIM, k)).collect();
        for path in Path::ALL {
            let (lhs, rhs) = completeness_check(&basis, path).unwrap();
            assert_abs_diff_eq!(lhs, 1.0 / 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rhs, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn completeness_survives_a_random_basis_rotation() {
        // Columns of a unitary built from a fixed Hermitian generator.
        let mut h = CMat::zeros(DIM);
        let mut x = 0.37_f64;
        let mut next = || {
            x = (x * 997.0 + 0.1234).rem_euclid(2.0) - 1.0;
            x
        };
        for r in 0..DIM {
            for c in r..DIM {
                if r == c {
                    h.set(r, c, c64(next(), 0.0));
                } else {
                    let v = c64(next(), next());
                    h.set(r, c, v);
                    h.set(c, r, v.conj());
                }
            }
        }
        let u = expm(&h.scale(c64(0.0, -1.0)), 1e-12).unwrap();
        let basis: Vec<CVec> = (0..DIM)
            .map(|k| {
                CVec::new((0..DIM).map(|r| u.at(r, k)).collect()).unwrap()
            })
            .collect();
        for path in Path::ALL {
            let (lhs, rhs) = completeness_check(&basis, path).unwrap();
            assert_abs_diff_eq!(lhs, 1.0 / 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rhs, 1.0 / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn completeness_rejects_a_skewed_basis() {
        let mut basis: Vec<CVec> = (0..DIM).map(|k| CVec::basis(DIM, k)).collect();
        basis[3] = basis[2].clone();
        assert!(matches!(
            completeness_check(&basis, Path::I),
            Err(ModelError::NonOrthonormalBasis { .. })
        ));
    }

    #[test]
    fn spin_flip_expectation_vanishes_in_every_path() {
        // The preselected spin in each path points along z, so the in-path
        // spin-flip expectation is exactly zero.
        let i = preselection();
        for path in Path::ALL {
            let op = spin_x_path(path).matmul(&path_projector(path)).unwrap();
            let ev = inner(&i, &op.apply(&i).unwrap()).unwrap();
            assert_abs_diff_eq!(ev.norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn leaked_preselection_reduces_to_the_ideal_preparation() {
        let psi = preselection_leaked(0.0);
        let ideal = preselection();
        for k in 0..DIM {
            assert_abs_diff_eq!((psi.amp(k) - ideal.amp(k)).norm(), 0.0, epsilon = 1e-15);
        }
        let sel = Selection::new(0.5, -0.2);
        let f0 = postselection(sel, EnergySelect::E0);
        let fp = postselection(sel, EnergySelect::EPrime);
        let got = inner(&f0, &psi).unwrap().norm_sqr() + inner(&fp, &psi).unwrap().norm_sqr();
        assert_abs_diff_eq!(got, 1.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn leaked_preselection_amplitudes_are_real_and_normalized() {
        let leak = 0.3;
        let psi = preselection_leaked(leak);
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-15);
        let up = basis_index(Path::I, Spin::Up, Energy::E0);
        assert_abs_diff_eq!(psi.amp(up).re, (leak / 2.0).sin() * INV_SQRT3, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.amp(up).im, 0.0, epsilon = 0.0);
        let down = basis_index(Path::I, Spin::Down, Energy::E0);
        assert_abs_diff_eq!(psi.amp(down).re, (leak / 2.0).cos() * INV_SQRT3, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.amp(down).im, 0.0, epsilon = 0.0);
    }

    #[test]
    fn oscillation_spectrum_lives_at_frequency_two() {
        // DFT over a uniform chi1 grid: DC in path I puts all oscillation at
        // frequency 2 with amplitude 2 sin(a/2)/9 = a/9 + O(a^3); DC in path
        // III is flat.
        let n = 64;
        let spectrum = |x: &Interaction| -> Vec<f64> {
            let samples: Vec<f64> = (0..n)
                .map(|k| {
                    let chi1 = k as f64 * std::f64::consts::TAU / n as f64;
                    detected_intensity(Some(x), Selection::new(chi1, 0.0))
                })
                .collect();
            (0..n / 2)
                .map(|freq| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (k, y) in samples.iter().enumerate() {
                        let ph = std::f64::consts::TAU * freq as f64 * k as f64 / n as f64;
                        re += y * ph.cos();
                        im -= y * ph.sin();
                    }
                    2.0 * (re * re + im * im).sqrt() / n as f64
                })
                .collect()
        };
        let on_path_one = spectrum(&Interaction::dc(Path::I, ALPHA).unwrap());
        assert!((on_path_one[2] - ALPHA / 9.0).abs() < ALPHA.powi(3) / 24.0);
        for (freq, amp) in on_path_one.iter().enumerate() {
            if freq != 0 && freq != 2 {
                assert!(*amp < 1e-12, "freq {freq}: {amp:e}");
            }
        }
        let on_path_three = spectrum(&Interaction::dc(Path::III, ALPHA).unwrap());
        for (freq, amp) in on_path_three.iter().enumerate() {
            if freq != 0 {
                assert!(*amp < 1e-12, "freq {freq}: {amp:e}");
            }
        }
    }
}

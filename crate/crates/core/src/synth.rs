//! Synthetic interferograms: ideal expected-intensity sweeps under an
//! imperfection model, Poisson counting noise, the flip-adjustment contrast
//! scan, and the full measurement set (nine marker cells with paired
//! preparation references plus three empty-device fringes).
//!
//! Imperfections enter in exactly two places: every interference cross term
//! between a pair of paths is multiplied by that loop's empty contrast, and
//! the preparation flips are under-rotated by the leak angle. Counting noise
//! is applied afterwards by [`poissonize`] and nowhere else.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::model::{
    interaction_operator, preselection_leaked, Interaction, InteractionKind, ModelError, Path,
    Selection, Spin,
};
use crate::rng::poisson_count;

type C64 = Complex64;

/// Detected intensity of the empty reference device; counting rates are
/// calibrated so this intensity maps to `mean_counts_baseline`.
pub const BASELINE_INTENSITY: f64 = 1.0 / 9.0;
/// Display uncertainty attached to adjustment-scan contrast points.
const ADJUST_SIGMA: f64 = 0.01;
const MIN_GRID_POINTS: usize = 5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("chi grid needs at least {MIN_GRID_POINTS} points, got {0}")]
    GridTooShort(usize),
    #[error("chi grid must increase strictly (violated at index {0})")]
    GridNotIncreasing(usize),
    #[error("swept path {sweep} does not belong to the {lp:?} loop")]
    SweepOutsideLoop { sweep: Path, lp: Loop },
    #[error("imperfection field {field} = {value} outside its valid range")]
    BadImperfection { field: &'static str, value: f64 },
    #[error("counting field {field} = {value} outside its valid range")]
    BadCounting { field: &'static str, value: f64 },
    #[error("interferogram already holds counts; refusing to add noise twice")]
    AlreadyNoisy,
    #[error("expected intensity at point {index} is {value}; cannot draw counts")]
    BadIntensity { index: usize, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Interference loop between a pair of paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loop {
    /// Paths I and II.
    Front,
    /// Paths II and III.
    Rear,
    /// Paths I and III.
    Outer,
}

impl Loop {
    pub const ALL: [Loop; 3] = [Loop::Front, Loop::Rear, Loop::Outer];

    pub fn index(self) -> usize {
        match self {
            Loop::Front => 0,
            Loop::Rear => 1,
            Loop::Outer => 2,
        }
    }

    pub fn paths(self) -> (Path, Path) {
        match self {
            Loop::Front => (Path::I, Path::II),
            Loop::Rear => (Path::II, Path::III),
            Loop::Outer => (Path::I, Path::III),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Loop::Front => "front",
            Loop::Rear => "rear",
            Loop::Outer => "outer",
        }
    }

    fn between(a: usize, b: usize) -> Loop {
        match (a.min(b), a.max(b)) {
            (0, 1) => Loop::Front,
            (1, 2) => Loop::Rear,
            _ => Loop::Outer,
        }
    }
}

impl std::str::FromStr for Loop {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "front" => Ok(Loop::Front),
            "rear" => Ok(Loop::Rear),
            "outer" => Ok(Loop::Outer),
            other => Err(format!("unknown loop {other:?} (expected front, rear, or outer)")),
        }
    }
}

/// Device imperfections applied during synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImperfectionModel {
    /// Empty-device contrast per loop, indexed (front, rear, outer). Every
    /// cross term between a pair of paths is multiplied by its loop's value.
    pub contrast_empty: [f64; 3],
    /// Preparation flips run at pi minus this angle, leaving a residual
    /// spin-up amplitude sin(leak/2) in paths I and III.
    pub prep_leak_angle: f64,
    /// Multiplier on the weak rotation angle (coil efficiency).
    pub efficiency_rot: f64,
}

impl ImperfectionModel {
    /// No decoherence, perfect flips, perfect coil.
    pub fn ideal() -> Self {
        Self { contrast_empty: [1.0, 1.0, 1.0], prep_leak_angle: 0.0, efficiency_rot: 1.0 }
    }

    pub fn contrast(self, lp: Loop) -> f64 {
        self.contrast_empty[lp.index()]
    }

    pub fn validate(self) -> Result<(), SynthError> {
        for (l, c) in Loop::ALL.iter().zip(self.contrast_empty) {
            if !c.is_finite() || !(0.0..=1.0).contains(&c) {
                let field = match l {
                    Loop::Front => "contrast_empty[front]",
                    Loop::Rear => "contrast_empty[rear]",
                    Loop::Outer => "contrast_empty[outer]",
                };
                return Err(SynthError::BadImperfection { field, value: c });
            }
        }
        if !self.prep_leak_angle.is_finite()
            || !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.prep_leak_angle)
        {
            return Err(SynthError::BadImperfection {
                field: "prep_leak_angle",
                value: self.prep_leak_angle,
            });
        }
        if !self.efficiency_rot.is_finite() || !(0.0..=1.0).contains(&self.efficiency_rot)
            || self.efficiency_rot == 0.0
        {
            return Err(SynthError::BadImperfection {
                field: "efficiency_rot",
                value: self.efficiency_rot,
            });
        }
        Ok(())
    }
}

impl Default for ImperfectionModel {
    /// Laboratory-like defaults: measured loop contrasts and a flip leak
    /// tuned to leave roughly 3% residual preparation contrast against the
    /// front loop.
    fn default() -> Self {
        Self {
            contrast_empty: [0.57, 0.53, 0.50],
            prep_leak_angle: 0.0526,
            efficiency_rot: 1.0,
        }
    }
}

/// Counting statistics of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingModel {
    /// Mean counts per point at the empty-device baseline intensity.
    pub mean_counts_baseline: f64,
    pub seed: u64,
}

impl CountingModel {
    pub fn validate(self) -> Result<(), SynthError> {
        if !self.mean_counts_baseline.is_finite() || self.mean_counts_baseline <= 0.0 {
            return Err(SynthError::BadCounting {
                field: "mean_counts_baseline",
                value: self.mean_counts_baseline,
            });
        }
        Ok(())
    }
}

impl Default for CountingModel {
    fn default() -> Self {
        Self { mean_counts_baseline: 4000.0, seed: 1 }
    }
}

/// Flip-adjustment scan settings: contrast of the front loop versus coil
/// current while one outer path is blocked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentConfig {
    /// Current that completes the pi flip (contrast minimum).
    pub flip_current_amp: f64,
    /// Rotation angle gained per ampere away from the flip current.
    pub rad_per_amp: f64,
    /// Contrast floor left by non-ideal optics at the exact flip current.
    pub residual_contrast: f64,
    pub current_start: f64,
    pub current_stop: f64,
    pub n_points: usize,
}

impl AdjustmentConfig {
    pub fn currents(&self) -> Vec<f64> {
        let n = self.n_points.max(2);
        let step = (self.current_stop - self.current_start) / (n - 1) as f64;
        (0..n).map(|k| self.current_start + k as f64 * step).collect()
    }
}

impl Default for AdjustmentConfig {
    fn default() -> Self {
        Self {
            flip_current_amp: 1.5,
            rad_per_amp: 1.0,
            residual_contrast: 0.03,
            current_start: 0.5,
            current_stop: 2.5,
            n_points: 41,
        }
    }
}

/// What one sweep measures.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    /// Two-beam fringe of one loop, no preparation (the third path is
    /// blocked, which is how pure loop contrasts are taken).
    Empty(Loop),
    /// Preparation flips only; ideally a flat line at the baseline.
    Prep,
    /// Preparation plus one marker interaction.
    Weak(Interaction),
    /// Contrast-versus-current flip adjustment scan; the grid holds currents
    /// in amperes instead of phases.
    AdjustScan(AdjustmentConfig),
}

/// A single sweep: what is in the beam, which path's phase advances, and the
/// grid of phases (or currents) to visit.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    kind: ScenarioKind,
    sweep: Path,
    chi_grid: Vec<f64>,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, sweep: Path, chi_grid: Vec<f64>) -> Result<Self, SynthError> {
        if chi_grid.len() < MIN_GRID_POINTS {
            return Err(SynthError::GridTooShort(chi_grid.len()));
        }
        for k in 1..chi_grid.len() {
            if chi_grid[k] <= chi_grid[k - 1] {
                return Err(SynthError::GridNotIncreasing(k));
            }
        }
        if let ScenarioKind::Empty(lp) = kind {
            let (a, b) = lp.paths();
            if sweep != a && sweep != b {
                return Err(SynthError::SweepOutsideLoop { sweep, lp });
            }
        }
        Ok(Self { kind, sweep, chi_grid })
    }

    /// Conventional swept path per kind: the marked path for weak sweeps,
    /// the non-reference arm for empty loops, path I otherwise.
    pub fn default_sweep(kind: &ScenarioKind) -> Path {
        match kind {
            ScenarioKind::Empty(Loop::Rear) => Path::III,
            ScenarioKind::Weak(x) => x.path(),
            _ => Path::I,
        }
    }

    pub fn kind(&self) -> &ScenarioKind {
        &self.kind
    }

    pub fn sweep(&self) -> Path {
        self.sweep
    }

    pub fn chi_grid(&self) -> &[f64] {
        &self.chi_grid
    }

    /// Canonical id; doubles as the noise-stream key and the file stem.
    pub fn id(&self) -> String {
        let base = match &self.kind {
            ScenarioKind::Empty(lp) => format!("empty:{}", lp.label()),
            ScenarioKind::Prep => format!("prep:{}", self.sweep.label()),
            ScenarioKind::Weak(x) => {
                format!("weak:{}:{}", x.kind().label(), x.path().label())
            }
            ScenarioKind::AdjustScan(_) => "adjust".to_string(),
        };
        let default = Self::default_sweep(&self.kind);
        match &self.kind {
            ScenarioKind::Prep | ScenarioKind::AdjustScan(_) => base,
            _ if self.sweep == default => base,
            _ => format!("{base}:sweep={}", self.sweep.label()),
        }
    }
}

/// Whether interferogram values are expected intensities or drawn counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Expected,
    Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfgMeta {
    pub scenario: String,
    pub sweep: String,
    pub kind: ValueKind,
    pub seed: Option<u64>,
    pub config_hash: String,
}

/// One recorded sweep: grid, values, and one-sigma uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferogram {
    pub chi: Vec<f64>,
    pub value: Vec<f64>,
    pub sigma: Vec<f64>,
    pub meta: IfgMeta,
}

impl Interferogram {
    pub fn len(&self) -> usize {
        self.chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }
}

/// State in the beam for a scenario, before the swept phase is applied.
fn prepared_state(
    kind: &ScenarioKind,
    imp: &ImperfectionModel,
) -> Result<crate::hilbert::CVec, SynthError> {
    match kind {
        ScenarioKind::Empty(lp) => {
            let mut v = crate::hilbert::CVec::zeros(crate::model::DIM);
            let amp = C64::new(crate::model::INV_SQRT3, 0.0);
            let (a, b) = lp.paths();
            for path in [a, b] {
                v.set(
                    crate::model::basis_index(path, Spin::Up, crate::model::Energy::E0),
                    amp,
                );
            }
            Ok(v)
        }
        ScenarioKind::Prep => Ok(preselection_leaked(imp.prep_leak_angle)),
        ScenarioKind::Weak(x) => {
            let x = x.with_efficiency(imp.efficiency_rot)?;
            let psi = preselection_leaked(imp.prep_leak_angle);
            Ok(interaction_operator(&x).apply(&psi).expect("fixed 12x12 dimensions"))
        }
        ScenarioKind::AdjustScan(_) => {
            unreachable!("adjustment scans never build a beam state")
        }
    }
}

/// Energy-integrated analyzer intensity with every pairwise cross term
/// damped by its loop's empty contrast. With unit contrasts this reproduces
/// the exact detected intensity.
fn detected_with_imperfections(
    psi: &crate::hilbert::CVec,
    sel: Selection,
    sweep: Path,
    chi: f64,
    imp: &ImperfectionModel,
) -> f64 {
    let phases = sel.path_phases();
    let third = crate::model::INV_SQRT3;
    let mut total = 0.0;
    for energy in 0..2 {
        let mut b = [C64::new(0.0, 0.0); 3];
        for (path, slot) in b.iter_mut().enumerate() {
            // Spin-up amplitude of this path and sideband; the analyzer
            // phase is conjugated, the swept shifter rides in the beam.
            let amp = psi.amp(path * 4 + energy);
            let mut phase = -phases[path];
            if path == sweep.index() {
                phase += chi;
            }
            *slot = C64::from_polar(third, phase) * amp;
        }
        for (j, bj) in b.iter().enumerate() {
            total += bj.norm_sqr();
            for (k, bk) in b.iter().enumerate().skip(j + 1) {
                let c = imp.contrast(Loop::between(j, k));
                total += 2.0 * c * (bj * bk.conj()).re;
            }
        }
    }
    total
}

/// Noise-free sweep: expected intensities (or, for adjustment scans,
/// contrasts) over the scenario grid. Sigmas are unit weights so noiseless
/// fits are unweighted.
pub fn sweep_ideal(
    sc: &Scenario,
    sel: Selection,
    imp: &ImperfectionModel,
) -> Result<Interferogram, SynthError> {
    imp.validate()?;
    let (value, sigma) = match &sc.kind {
        ScenarioKind::AdjustScan(adj) => {
            let curve = adjustment_scan(
                &sc.chi_grid,
                adj.flip_current_amp,
                adj.rad_per_amp,
                adj.residual_contrast,
                imp.contrast(Loop::Front),
            );
            (curve.into_iter().map(|(_, c)| c).collect::<Vec<_>>(), ADJUST_SIGMA)
        }
        kind => {
            let psi = prepared_state(kind, imp)?;
            (
                sc.chi_grid
                    .iter()
                    .map(|&chi| detected_with_imperfections(&psi, sel, sc.sweep, chi, imp))
                    .collect(),
                1.0,
            )
        }
    };
    let n = value.len();
    Ok(Interferogram {
        chi: sc.chi_grid.clone(),
        value,
        sigma: vec![sigma; n],
        meta: IfgMeta {
            scenario: sc.id(),
            sweep: sc.sweep.label().to_string(),
            kind: ValueKind::Expected,
            seed: None,
            config_hash: String::new(),
        },
    })
}

/// Replaces expected intensities by Poisson counts with
/// sigma = sqrt(max(counts, 1)). The stream is keyed by
/// (seed, scenario id, point index), so files regenerate bit-identically.
pub fn poissonize(ifg: &Interferogram, counting: CountingModel) -> Result<Interferogram, SynthError> {
    counting.validate()?;
    if ifg.meta.kind == ValueKind::Counts {
        return Err(SynthError::AlreadyNoisy);
    }
    let rate = counting.mean_counts_baseline / BASELINE_INTENSITY;
    let mut value = Vec::with_capacity(ifg.len());
    let mut sigma = Vec::with_capacity(ifg.len());
    for (index, &v) in ifg.value.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(SynthError::BadIntensity { index, value: v });
        }
        let counts = poisson_count(counting.seed, &ifg.meta.scenario, index as u64, v * rate);
        value.push(counts as f64);
        sigma.push((counts.max(1) as f64).sqrt());
    }
    Ok(Interferogram {
        chi: ifg.chi.clone(),
        value,
        sigma,
        meta: IfgMeta {
            seed: Some(counting.seed),
            kind: ValueKind::Counts,
            ..ifg.meta.clone()
        },
    })
}

/// Contrast-versus-current curve of the flip adjustment:
/// max(floor, c_max |sin(k (I - i_flip))|) at each current.
pub fn adjustment_scan(
    currents: &[f64],
    i_flip: f64,
    rad_per_amp: f64,
    floor: f64,
    c_max: f64,
) -> Vec<(f64, f64)> {
    currents
        .iter()
        .map(|&i| {
            let c = c_max * (rad_per_amp * (i - i_flip)).sin().abs();
            (i, c.max(floor))
        })
        .collect()
}

/// One marker cell: the interaction, the column (swept path), and the paired
/// off/on interferograms sharing a noise lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeasurement {
    pub kind: InteractionKind,
    pub path: Path,
    pub prep: Interferogram,
    pub weak: Interferogram,
}

/// The full campaign: nine cells (interaction kind major, path minor) plus
/// the three empty loop fringes.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub cells: Vec<CellMeasurement>,
    pub empties: [Interferogram; 3],
}

pub const KIND_ORDER: [InteractionKind; 3] =
    [InteractionKind::Dc, InteractionKind::Absorber, InteractionKind::Rf];

/// Simulates the whole campaign. Each cell sweeps the phase of its own path
/// with the marker alternately off (preparation reference) and on; the off
/// and on streams are distinct but derive from the same seed.
pub fn run_measurement_set(
    cfg: &ExperimentConfig,
    noise: bool,
) -> Result<MeasurementSet, SynthError> {
    let grid = cfg.grid.points();
    let sel = cfg.selection;
    let imp = &cfg.imperfections;
    let finish = |mut ifg: Interferogram, id: String| -> Result<Interferogram, SynthError> {
        ifg.meta.scenario = id;
        if noise {
            poissonize(&ifg, cfg.counting)
        } else {
            Ok(ifg)
        }
    };

    let mut cells = Vec::with_capacity(9);
    for kind in KIND_ORDER {
        for path in Path::ALL {
            let strength = match kind {
                InteractionKind::Absorber => cfg.absorption,
                _ => cfg.alpha_rot,
            };
            let x = Interaction::new(kind, path, strength)?;
            let prep_sc = Scenario::new(ScenarioKind::Prep, path, grid.clone())?;
            let weak_sc = Scenario::new(ScenarioKind::Weak(x), path, grid.clone())?;
            let prep = finish(
                sweep_ideal(&prep_sc, sel, imp)?,
                format!("prep:{}:{}", kind.label(), path.label()),
            )?;
            let weak = finish(sweep_ideal(&weak_sc, sel, imp)?, weak_sc.id())?;
            cells.push(CellMeasurement { kind, path, prep, weak });
        }
    }

    let mut empties = Vec::with_capacity(3);
    for lp in Loop::ALL {
        let sc = Scenario::new(
            ScenarioKind::Empty(lp),
            Scenario::default_sweep(&ScenarioKind::Empty(lp)),
            grid.clone(),
        )?;
        let id = sc.id();
        empties.push(finish(sweep_ideal(&sc, sel, imp)?, id)?);
    }
    let empties: [Interferogram; 3] =
        empties.try_into().expect("exactly three loops were synthesized");
    Ok(MeasurementSet { cells, empties })
}

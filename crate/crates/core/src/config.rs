//! Run configuration: every dial of the simulated experiment in one
//! serializable struct, with validation that names the offending field and a
//! stable content hash for provenance stamping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Path, Selection};
use crate::rng::fnv1a64;
use crate::synth::{AdjustmentConfig, CountingModel, ImperfectionModel, Loop, SynthError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {}", problems.join("; "))]
    Invalid { problems: Vec<String> },
    #[error("configuration is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Uniform phase grid, half-open over [start, start + span).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiGrid {
    pub n_points: usize,
    pub start: f64,
    pub span: f64,
}

impl ChiGrid {
    pub fn points(&self) -> Vec<f64> {
        let step = self.span / self.n_points as f64;
        (0..self.n_points).map(|k| self.start + k as f64 * step).collect()
    }
}

impl Default for ChiGrid {
    /// Sixteen points across two fringe periods.
    fn default() -> Self {
        Self { n_points: 16, start: 0.0, span: 4.0 * std::f64::consts::PI }
    }
}

/// Which loop contrast normalizes extractions in each column.
///
/// A marker in some path interferes with the reference beam through one
/// specific loop, so its fringe must be divided by that loop's empty
/// contrast: path I beats through the front loop, paths II and III through
/// the rear one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastMap {
    #[serde(rename = "I")]
    pub path_i: Loop,
    #[serde(rename = "II")]
    pub path_ii: Loop,
    #[serde(rename = "III")]
    pub path_iii: Loop,
}

impl ContrastMap {
    pub fn loop_for(&self, path: Path) -> Loop {
        match path {
            Path::I => self.path_i,
            Path::II => self.path_ii,
            Path::III => self.path_iii,
        }
    }
}

impl Default for ContrastMap {
    fn default() -> Self {
        Self { path_i: Loop::Front, path_ii: Loop::Rear, path_iii: Loop::Rear }
    }
}

/// Physical and statistical dials of one simulated campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Beam paths of the device; the laboratory pipeline requires 3.
    pub n_paths: usize,
    /// Weak rotation angle for both spin and sideband markers, radians.
    pub alpha_rot: f64,
    /// Fractional absorption of the path marker.
    pub absorption: f64,
    /// Analyzer phase offsets when no sweep phase is applied.
    pub selection: Selection,
    pub grid: ChiGrid,
    pub imperfections: ImperfectionModel,
    pub counting: CountingModel,
    pub contrast_map: ContrastMap,
    pub adjust: AdjustmentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_paths: 3,
            alpha_rot: std::f64::consts::PI / 9.0,
            absorption: 0.1,
            selection: Selection::default(),
            grid: ChiGrid::default(),
            imperfections: ImperfectionModel::default(),
            counting: CountingModel::default(),
            contrast_map: ContrastMap::default(),
            adjust: AdjustmentConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Checks every field, collecting all problems rather than stopping at
    /// the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.n_paths != 3 {
            problems.push(format!(
                "n_paths = {}; the laboratory pipeline is three-path",
                self.n_paths
            ));
        }
        if !self.alpha_rot.is_finite()
            || self.alpha_rot <= 0.0
            || self.alpha_rot >= 2.0 * std::f64::consts::PI
        {
            problems.push(format!("alpha_rot = {} outside (0, 2pi)", self.alpha_rot));
        }
        if !self.absorption.is_finite() || !(0.0..=1.0).contains(&self.absorption) {
            problems.push(format!("absorption = {} outside [0, 1]", self.absorption));
        }
        if !self.selection.chi1.is_finite() || !self.selection.chi2.is_finite() {
            problems.push("selection phases must be finite".to_string());
        }
        if self.grid.n_points < 5 {
            problems.push(format!("grid.n_points = {} below the minimum of 5", self.grid.n_points));
        }
        if !self.grid.span.is_finite() || self.grid.span <= 0.0 || !self.grid.start.is_finite() {
            problems.push(format!(
                "grid start/span = {}/{} must be finite with positive span",
                self.grid.start, self.grid.span
            ));
        }
        if let Err(SynthError::BadImperfection { field, value }) = self.imperfections.validate() {
            problems.push(format!("imperfections.{field} = {value}"));
        }
        if let Err(SynthError::BadCounting { field, value }) = self.counting.validate() {
            problems.push(format!("counting.{field} = {value}"));
        }
        let adj = &self.adjust;
        if adj.n_points < 5 {
            problems.push(format!("adjust.n_points = {} below the minimum of 5", adj.n_points));
        }
        if !(adj.current_start < adj.current_stop) {
            problems.push(format!(
                "adjust currents [{}, {}] must span a positive range",
                adj.current_start, adj.current_stop
            ));
        }
        if !adj.rad_per_amp.is_finite() || adj.rad_per_amp <= 0.0 {
            problems.push(format!("adjust.rad_per_amp = {} must be positive", adj.rad_per_amp));
        }
        if !(0.0..=1.0).contains(&adj.residual_contrast) {
            problems.push(format!(
                "adjust.residual_contrast = {} outside [0, 1]",
                adj.residual_contrast
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid { problems })
        }
    }
}

/// Output serialization for simulated sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Top-level run description: the experiment plus where and how to write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub output_dir: String,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            output_dir: "out".to_string(),
            format: OutputFormat::Csv,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.experiment.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run configuration always serializes")
    }

    /// Stable 16-hex-digit content hash of the canonical (compact) JSON
    /// encoding; stamped into interferogram metadata.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("run configuration always serializes");
        format!("{:016x}", fnv1a64(compact.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_grid_spans_two_periods_half_open() {
        let pts = ChiGrid::default().points();
        assert_eq!(pts.len(), 16);
        assert_abs_diff_eq!(pts[0], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(pts[1], std::f64::consts::PI / 4.0, epsilon = 1e-15);
        assert!(pts[15] < 4.0 * std::f64::consts::PI);
    }

    #[test]
    fn json_round_trip_preserves_every_field() {
        let mut cfg = RunConfig::default();
        cfg.experiment.alpha_rot = 0.25;
        cfg.experiment.selection = Selection::new(0.1, -0.2);
        cfg.experiment.imperfections.contrast_empty = [0.9, 0.8, 0.7];
        cfg.experiment.counting.seed = 77;
        cfg.format = OutputFormat::Json;
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"experiment": {"alpha_rot": 0.5}}"#).unwrap();
        assert_abs_diff_eq!(cfg.experiment.alpha_rot, 0.5, epsilon = 0.0);
        assert_eq!(cfg.experiment.grid, ChiGrid::default());
        assert_eq!(cfg.output_dir, "out");
    }

    #[test]
    fn validation_lists_every_offending_field() {
        let mut cfg = ExperimentConfig::default();
        cfg.alpha_rot = -1.0;
        cfg.absorption = 1.5;
        cfg.imperfections.efficiency_rot = 2.0;
        let err = cfg.validate().unwrap_err();
        let text = err.to_string();
        for needle in ["alpha_rot", "absorption", "efficiency_rot"] {
            assert!(text.contains(needle), "missing {needle} in {text}");
        }
    }

    #[test]
    fn n_paths_other_than_three_is_rejected() {
        let cfg = ExperimentConfig { n_paths: 4, ..Default::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("n_paths"));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.experiment.counting.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn contrast_map_default_routes_columns_to_their_loops() {
        let map = ContrastMap::default();
        assert_eq!(map.loop_for(Path::I), Loop::Front);
        assert_eq!(map.loop_for(Path::II), Loop::Rear);
        assert_eq!(map.loop_for(Path::III), Loop::Rear);
    }
}

//! Experiment configuration: one JSON document drives every subcommand.
//!
//! Units are fixed once here: `side_length` is in box units and energies in
//! inverse-length-squared units, the convention in which the operator is
//! −Δ + V with no physical constants. The document is schema-validated
//! before any run; every rejection names the offending field by its dotted
//! path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::disorder::{CouplingLaw, EnvelopeProfile};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Box side L, either a single box or an increasing family (used by the
/// convergence study; other subcommands read the first entry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SideSpec {
    Single(f64),
    List(Vec<f64>),
}

impl SideSpec {
    pub fn first(&self) -> f64 {
        match self {
            SideSpec::Single(l) => *l,
            SideSpec::List(ls) => ls[0],
        }
    }

    pub fn all(&self) -> Vec<f64> {
        match self {
            SideSpec::Single(l) => vec![*l],
            SideSpec::List(ls) => ls.clone(),
        }
    }
}

/// Geometric energy grid: `per_decade` points per factor of ten on
/// [e_min, e_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyGridSpec {
    pub e_min: f64,
    pub e_max: f64,
    pub per_decade: usize,
}

impl Default for EnergyGridSpec {
    fn default() -> Self {
        EnergyGridSpec { e_min: 0.01, e_max: 10.0, per_decade: 8 }
    }
}

/// Subcommand-specific dials, all optional in the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Knobs {
    /// Near-zone multiplier for the bounded-difference constants (≥ 3).
    pub m_factor: u32,
    /// Scaled spectral threshold b in ℙ(λ₁ < b/L²) for the perturbation run.
    pub b: f64,
    /// Quiet-zone exponent β in R = L^β; `null` means the value the
    /// envelope regime dictates.
    pub beta: Option<f64>,
    /// ε = epsilon_scale·L⁻² for the rare-event conditioning.
    pub epsilon_scale: f64,
    /// The constant c in the small-energy regime E < c/L² of the
    /// factorized one-eigenvalue bound.
    pub energy_box_coupling: f64,
    /// Explicit fit window [lo, hi]; `null` means the lowest uncensored
    /// decade of the curve.
    pub fit_window: Option<(f64, f64)>,
}

impl Default for Knobs {
    fn default() -> Self {
        Knobs {
            m_factor: 3,
            b: 0.05,
            beta: None,
            epsilon_scale: 1.0,
            energy_box_coupling: 10.0,
            fit_window: None,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// The one experiment document. Serialization round-trips exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub side_length: SideSpec,
    /// Grid resolution of the first box; further boxes in a list keep the
    /// same point density n/L.
    pub points_per_side: usize,
    pub law: CouplingLaw,
    pub envelope: EnvelopeProfile,
    #[serde(default)]
    pub energy: EnergyGridSpec,
    pub samples: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub knobs: Knobs,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// A small, fast, fully explicit document — the file `--config` examples
    /// start from.
    pub fn example() -> Self {
        ExperimentConfig {
            dim: 1,
            side_length: SideSpec::Single(8.0),
            points_per_side: 64,
            law: CouplingLaw::Uniform { a: 0.0, b: 1.0 },
            envelope: EnvelopeProfile::PolyDecay { alpha: 3.0, amplitude: 1.0 },
            energy: EnergyGridSpec::default(),
            samples: 200,
            base_seed: 1,
            knobs: Knobs::default(),
            out_dir: default_out_dir(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            Error::config(path.display().to_string(), format!("not a valid experiment document: {e}"))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Grid of the first (or only) box.
    pub fn primary_grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.dim, self.side_length.first(), self.points_per_side)
    }

    pub fn validate(&self) -> Result<()> {
        let sides = self.side_length.all();
        if sides.is_empty() {
            return Err(Error::config("side_length", "at least one box side is required"));
        }
        if sides.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::config("side_length", "sides must be positive"));
        }
        if sides.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("side_length", "a side list must be strictly increasing"));
        }
        // the density n/L of the first box must land on whole grids for the
        // rest of the list
        let density = self.points_per_side as f64 / sides[0];
        for (idx, &l) in sides.iter().enumerate().skip(1) {
            let n = density * l;
            if (n - n.round()).abs() > 1e-9 {
                return Err(Error::config(
                    format!("side_length[{idx}]"),
                    format!("density {density} per unit gives a non-integral grid n = {n}"),
                ));
            }
        }
        // degenerate laws (e.g. a point mass at 0) are valid documents —
        // they drive the deterministic free-operator runs; pipelines that
        // need a meaningful small-ball condition check that themselves
        self.primary_grid()?.validate()?;
        self.law.validate()?;
        self.envelope.validate(self.dim)?;
        if self.samples < 1 {
            return Err(Error::config("samples", "at least one disorder sample is required"));
        }
        let e = &self.energy;
        if !(e.e_min.is_finite() && e.e_min > 0.0 && e.e_max > e.e_min) {
            return Err(Error::config("energy.e_min", "need 0 < e_min < e_max"));
        }
        if e.per_decade < 1 {
            return Err(Error::config("energy.per_decade", "need at least one point per decade"));
        }
        let k = &self.knobs;
        if k.m_factor < 3 {
            return Err(Error::config("knobs.m_factor", "the near-zone multiplier must be ≥ 3"));
        }
        if !(k.b.is_finite() && k.b > 0.0) {
            return Err(Error::config("knobs.b", "the spectral threshold must be positive"));
        }
        if let Some(beta) = k.beta {
            if !(beta.is_finite() && beta >= 1.0) {
                return Err(Error::config("knobs.beta", "the quiet-zone exponent must be ≥ 1"));
            }
        }
        if !(k.epsilon_scale.is_finite() && k.epsilon_scale > 0.0) {
            return Err(Error::config("knobs.epsilon_scale", "the conditioning scale must be positive"));
        }
        if !(k.energy_box_coupling.is_finite() && k.energy_box_coupling > 0.0) {
            return Err(Error::config("knobs.energy_box_coupling", "the regime constant must be positive"));
        }
        if let Some((lo, hi)) = k.fit_window {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::config("knobs.fit_window", "need 0 < lo < hi"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_round_trips_exactly() {
        let config = ExperimentConfig::example();
        config.validate().unwrap();
        let text = config.to_json_pretty().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(config, back);
        // and once more through the serialized form of the reparse
        assert_eq!(text, back.to_json_pretty().unwrap());
    }

    #[test]
    fn minimal_document_fills_defaults() {
        let text = r#"{
            "dim": 1,
            "side_length": 8.0,
            "points_per_side": 32,
            "law": {"family": "uniform", "a": 0.0, "b": 1.0},
            "envelope": {"kind": "poly_decay", "alpha": 3.0, "amplitude": 1.0},
            "samples": 10,
            "base_seed": 7
        }"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.knobs, Knobs::default());
        assert_eq!(config.energy, EnergyGridSpec::default());
        assert_eq!(config.out_dir, PathBuf::from("runs"));
        assert_eq!(config.side_length.first(), 8.0);
    }

    #[test]
    fn side_list_parses_and_validates_density() {
        let mut config = ExperimentConfig::example();
        config.side_length = SideSpec::List(vec![8.0, 16.0, 32.0]);
        config.validate().unwrap();
        assert_eq!(config.side_length.all(), vec![8.0, 16.0, 32.0]);

        config.side_length = SideSpec::List(vec![8.0, 8.3]);
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("side_length[1]"), "{err}");
    }

    #[test]
    fn rejections_name_the_field() {
        let cases: Vec<(Box<dyn Fn(&mut ExperimentConfig)>, &str)> = vec![
            (Box::new(|c| c.samples = 0), "samples"),
            (Box::new(|c| c.energy.e_min = -1.0), "energy.e_min"),
            (Box::new(|c| c.energy.per_decade = 0), "energy.per_decade"),
            (Box::new(|c| c.knobs.m_factor = 1), "knobs.m_factor"),
            (Box::new(|c| c.knobs.b = 0.0), "knobs.b"),
            (Box::new(|c| c.knobs.beta = Some(0.5)), "knobs.beta"),
            (Box::new(|c| c.knobs.fit_window = Some((0.1, 0.01))), "knobs.fit_window"),
            (
                Box::new(|c| c.envelope = EnvelopeProfile::PolyDecay { alpha: 0.5, amplitude: 1.0 }),
                "envelope.alpha",
            ),
            (Box::new(|c| c.side_length = SideSpec::Single(-1.0)), "side_length"),
        ];
        for (mutate, path) in cases {
            let mut config = ExperimentConfig::example();
            mutate(&mut config);
            let err = config.validate().unwrap_err();
            assert!(matches!(err, Error::Config { .. }), "{path}: wrong variant {err}");
            assert!(err.to_string().contains(path), "expected `{path}` in `{err}`");
        }
    }

    #[test]
    fn file_loading_reports_parse_and_validation_failures() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.json");
        std::fs::write(&good, ExperimentConfig::example().to_json_pretty().unwrap()).unwrap();
        assert_eq!(ExperimentConfig::from_path(&good).unwrap(), ExperimentConfig::example());

        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, "{ not json").unwrap();
        let err = ExperimentConfig::from_path(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 2);

        let invalid = dir.path().join("invalid.json");
        let mut config = ExperimentConfig::example();
        config.samples = 0;
        std::fs::write(&invalid, serde_json::to_string(&config).unwrap()).unwrap();
        let err = ExperimentConfig::from_path(&invalid).unwrap_err();
        assert!(err.to_string().contains("samples"));
    }
}

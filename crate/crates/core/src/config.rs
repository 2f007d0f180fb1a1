//! TOML run configuration shared by the simulator, the statistics pipeline
//! and the theory evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{GridSpec, ModelParams, Vec2};
use crate::soliton::{Rates, SolitonParams};
use crate::taf::{Boundary, InitialProfile};
use crate::tips::SimSetup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TafConfig {
    /// zero | uniform | tumor-ridge
    pub profile: String,
    /// C₀ of the ridge, or the value of the uniform field.
    pub amplitude: f64,
    pub width: f64,
    pub boundary: Boundary,
}

impl Default for TafConfig {
    fn default() -> Self {
        Self {
            profile: "tumor-ridge".into(),
            amplitude: 2.0,
            width: 4.0,
            boundary: Boundary::ZeroFlux,
        }
    }
}

impl TafConfig {
    pub fn initial_profile(&self) -> Result<InitialProfile> {
        InitialProfile::parse(&self.profile, self.amplitude, self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub initial_tips: usize,
    pub max_alive_tips: usize,
    pub hours_per_unit: f64,
    pub seed: u64,
    pub realizations: u64,
    /// Snapshot labels such as "16h".
    pub snapshots: Vec<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            initial_tips: 20,
            max_alive_tips: 3000,
            hours_per_unit: 8.0,
            seed: 20240,
            realizations: 400,
            snapshots: vec!["16h".into(), "20h".into(), "24h".into()],
        }
    }
}

/// Centre of the ξ window: the fitted soliton peak, or x = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameChoice {
    Soliton,
    Lab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    pub orders: Vec<u32>,
    pub frame: FrameChoice,
    /// Half width of the traveling-frame window ξ ∈ [−w, w].
    pub xi_half_width: f64,
    pub xi_points: usize,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            orders: vec![1, 2, 3],
            frame: FrameChoice::Soliton,
            xi_half_width: 3.0,
            xi_points: 121,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheorySection {
    pub soliton: SolitonParams,
    pub rates: Rates,
    /// Decay rate per hour.
    pub d: f64,
    pub d0: f64,
    pub eps: f64,
    /// Lags of the structure functions.
    pub lags: Vec<f64>,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            soliton: SolitonParams::REFERENCE,
            rates: Rates::REFERENCE,
            d: 1.8,
            d0: 0.0,
            eps: 1.0,
            lags: vec![0.01, 0.02],
        }
    }
}

/// Complete run configuration. Every section may be omitted and falls back to
/// the defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub taf: TafConfig,
    pub run: RunSection,
    pub stats: StatsSection,
    pub theory: TheorySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            grid: GridSpec {
                nx: 53,
                ny: 31,
                hx: 0.1,
                hy: 0.1,
                origin: Vec2::new(-0.2, -1.5),
            },
            taf: TafConfig::default(),
            run: RunSection::default(),
            stats: StatsSection::default(),
            theory: TheorySection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            other => Err(Error::Config(format!("unknown preset '{other}' (expected desk or paper)"))),
        }
    }

    pub fn realizations(self) -> u64 {
        match self {
            Self::Desk => 100,
            Self::Paper => 400,
        }
    }
}

/// Parses "16h", "16.5h" or a bare number of hours.
pub fn parse_hours(label: &str) -> Result<f64> {
    let s = label.trim();
    let num = s.strip_suffix('h').unwrap_or(s).trim();
    let v: f64 = num
        .parse()
        .map_err(|_| Error::Config(format!("bad snapshot time '{label}' (expected e.g. 16h)")))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("snapshot time '{label}' must be >= 0")));
    }
    Ok(v)
}

/// Splits a comma list such as "16h,20h,24h".
pub fn parse_snapshot_list(list: &str) -> Result<Vec<String>> {
    let items: Vec<String> = list
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    for s in &items {
        parse_hours(s)?;
    }
    if items.is_empty() {
        return Err(Error::Config("empty snapshot list".into()));
    }
    Ok(items)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        self.run.realizations = preset.realizations();
    }

    /// Snapshot times in hours, as listed.
    pub fn snapshot_hours(&self) -> Result<Vec<f64>> {
        self.run.snapshots.iter().map(|s| parse_hours(s)).collect()
    }

    /// Snapshot times in model units.
    pub fn snapshot_times(&self) -> Result<Vec<f64>> {
        Ok(self
            .snapshot_hours()?
            .into_iter()
            .map(|h| h / self.run.hours_per_unit)
            .collect())
    }

    pub fn sim_setup(&self) -> Result<SimSetup> {
        Ok(SimSetup {
            params: self.model.clone(),
            grid: self.grid,
            taf_profile: self.taf.initial_profile()?,
            boundary: self.taf.boundary,
            initial_tips: self.run.initial_tips,
            max_alive_tips: self.run.max_alive_tips,
            hours_per_unit: self.run.hours_per_unit,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_setup()?.validate()?;
        if self.run.realizations == 0 {
            return Err(Error::Config("realizations must be >= 1".into()));
        }
        let hours = self.snapshot_hours()?;
        if hours.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("snapshot times must be strictly increasing".into()));
        }
        let t_end_hours = self.model.t_end * self.run.hours_per_unit;
        if let Some(&last) = hours.last() {
            if last > t_end_hours + 1e-9 {
                return Err(Error::Config(format!(
                    "snapshot {last}h lies beyond t_end = {t_end_hours}h"
                )));
            }
        }
        if self.stats.orders.is_empty() || self.stats.orders.contains(&0) {
            return Err(Error::Config("moment orders must be >= 1".into()));
        }
        if !(self.stats.xi_half_width > 0.0) || self.stats.xi_points < 3 {
            return Err(Error::Config("xi window needs a positive half width and >= 3 points".into()));
        }
        self.theory.soliton.validate()?;
        if !(0.0..=1.0).contains(&self.theory.eps) {
            return Err(Error::Config("theory.eps must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (fields in declaration order).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[model]\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[extra]\n").is_err());
        assert!(RunConfig::from_toml("[taf]\nprofile = \"sphere\"\n").is_err());
    }

    #[test]
    fn partial_sections() {
        let cfg = RunConfig::from_toml("[model]\nanastomosis_coeff = 0.0\n[run]\nrealizations = 7\n").unwrap();
        assert_eq!(cfg.model.anastomosis_coeff, 0.0);
        assert_eq!(cfg.model.branching_amplitude, 22.42);
        assert_eq!(cfg.run.realizations, 7);
        assert_ne!(cfg.hash(), RunConfig::default().hash());
    }

    #[test]
    fn snapshots_parse_and_check() {
        assert_eq!(parse_hours("16h").unwrap(), 16.0);
        assert_eq!(parse_hours(" 2.5 ").unwrap(), 2.5);
        assert!(parse_hours("h").is_err());
        assert!(parse_hours("-1h").is_err());
        assert_eq!(parse_snapshot_list("16h, 20h,24h").unwrap().len(), 3);
        let cfg = RunConfig::default();
        assert_eq!(cfg.snapshot_times().unwrap(), vec![2.0, 2.5, 3.0]);
        let mut late = cfg.clone();
        late.run.snapshots = vec!["30h".into()];
        assert!(late.validate().is_err());
        let mut unsorted = cfg;
        unsorted.run.snapshots = vec!["20h".into(), "16h".into()];
        assert!(unsorted.validate().is_err());
    }

    #[test]
    fn presets() {
        let mut cfg = RunConfig::default();
        cfg.apply_preset(Preset::parse("desk").unwrap());
        assert_eq!(cfg.run.realizations, 100);
        cfg.apply_preset(Preset::Paper);
        assert_eq!(cfg.run.realizations, 400);
        assert!(Preset::parse("huge").is_err());
    }
}

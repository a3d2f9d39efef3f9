//! Session configuration: a JSON file of defaults, overridden by flags.
//!
//! ```json
//! {
//!   "model": "models/default_hand.json",
//!   "scenario": "session",
//!   "recording": "run/recording.fsgr",
//!   "calibration": "run/calibration.json",
//!   "truth": "run/truth.json",
//!   "output_dir": "run",
//!   "seed": 0,
//!   "window_ns": 10000000,
//!   "noise": {"sigma_static_deg": 0.8}
//! }
//! ```
//!
//! Relative paths in the file are taken relative to the file itself.

use std::path::{Path, PathBuf};

use handcal::acquisition::SyncConfig;
use handcal::glove_sim::{NoiseModel, Scenario};
use handcal::hand_model::{default_model, load_model, HandModel};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Replaces any subset of the scenario's noise model.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseOverrides {
    pub sigma_static_deg: Option<f64>,
    pub sigma_dynamic_deg: Option<f64>,
    pub dynamic_threshold_deg_s: Option<f64>,
    pub drift_rate_deg_sqrt_min: Option<f64>,
    pub dorsal_sigma_pos_mm: Option<f64>,
}

impl NoiseOverrides {
    pub fn apply(&self, noise: &mut NoiseModel) {
        let pairs = [
            (self.sigma_static_deg, &mut noise.sigma_static_deg),
            (self.sigma_dynamic_deg, &mut noise.sigma_dynamic_deg),
            (
                self.dynamic_threshold_deg_s,
                &mut noise.dynamic_threshold_deg_s,
            ),
            (
                self.drift_rate_deg_sqrt_min,
                &mut noise.drift_rate_deg_sqrt_min,
            ),
            (self.dorsal_sigma_pos_mm, &mut noise.dorsal_sigma_pos_mm),
        ];
        for (value, slot) in pairs {
            if let Some(v) = value {
                *slot = v;
            }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub model: Option<PathBuf>,
    /// Preset name or scenario file.
    pub scenario: Option<String>,
    pub recording: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub object: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub window_ns: Option<u64>,
    pub port: Option<u16>,
    pub mesh_every: Option<usize>,
    #[serde(default)]
    pub noise: NoiseOverrides,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p.as_mut() {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl SessionConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg: SessionConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.model,
            &mut cfg.recording,
            &mut cfg.calibration,
            &mut cfg.truth,
            &mut cfg.object,
            &mut cfg.output_dir,
        ] {
            rebase(base, p);
        }
        if let Some(s) = cfg.scenario.as_mut() {
            if Scenario::preset(s).is_none() && Path::new(s.as_str()).is_relative() {
                *s = base.join(&*s).display().to_string();
            }
        }
        Ok(cfg)
    }

    pub fn model(&self) -> CliResult<HandModel> {
        match &self.model {
            None => Ok(default_model()),
            Some(p) => {
                require_file(p, "model")?;
                load_model(p).map_err(|e| CliError::config(format!("model {}: {e}", p.display())))
            }
        }
    }

    /// The scenario with seed and noise overrides applied. The seed falls
    /// back to the scenario's own, which is 0 for every preset.
    pub fn scenario(&self) -> CliResult<Scenario> {
        let name = self
            .scenario
            .as_deref()
            .ok_or_else(|| CliError::usage("no scenario given (--scenario)"))?;
        let path = Path::new(name);
        let mut scenario = if path.is_file() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("{name}: {e}")))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("scenario {name}: {e}")))?
        } else {
            Scenario::preset(name).ok_or_else(|| {
                CliError::config(format!(
                    "{name}: no such scenario file, and not a preset ({})",
                    Scenario::preset_names().join(", ")
                ))
            })?
        };
        if let Some(seed) = self.seed {
            scenario.seed = seed;
        }
        self.noise.apply(&mut scenario.noise);
        scenario
            .validate()
            .map_err(|e| CliError::config(format!("scenario {name}: {e}")))?;
        Ok(scenario)
    }

    pub fn sync(&self) -> SyncConfig {
        let mut sync = SyncConfig::default();
        if let Some(w) = self.window_ns {
            sync.window_ns = w;
        }
        sync
    }

    pub fn output_dir(&self) -> CliResult<PathBuf> {
        let dir = self
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }

    pub fn recording(&self) -> CliResult<&Path> {
        required(&self.recording, "recording", "--recording")
    }

    pub fn calibration(&self) -> CliResult<&Path> {
        required(&self.calibration, "calibration", "--calibration")
    }

    pub fn truth(&self) -> CliResult<&Path> {
        required(&self.truth, "answer key", "--truth")
    }

    pub fn object(&self) -> CliResult<&Path> {
        required(&self.object, "object mesh", "--object")
    }
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "{what} file not found: {}",
            path.display()
        )))
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str, flag: &str) -> CliResult<&'a Path> {
    let path = p
        .as_deref()
        .ok_or_else(|| CliError::usage(format!("no {what} given ({flag})")))?;
    require_file(path, what)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.json");
        std::fs::write(&cfg_path, r#"{"model": "m.json", "scenario": "hinge", "output_dir": "/abs", "noise": {"sigma_static_deg": 0.0}}"#)
            .unwrap();
        let cfg = SessionConfig::load(Some(&cfg_path)).unwrap();
        assert_eq!(cfg.model.unwrap(), dir.path().join("m.json"));
        assert_eq!(cfg.scenario.as_deref(), Some("hinge"));
        assert_eq!(cfg.output_dir.unwrap(), PathBuf::from("/abs"));
    }

    #[test]
    fn overrides_reach_the_scenario() {
        let cfg = SessionConfig {
            scenario: Some("drift".into()),
            seed: Some(9),
            noise: NoiseOverrides {
                drift_rate_deg_sqrt_min: Some(0.0),
                ..NoiseOverrides::default()
            },
            ..SessionConfig::default()
        };
        let s = cfg.scenario().unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.noise.drift_rate_deg_sqrt_min, 0.0);
        assert_eq!(
            s.noise.sigma_static_deg,
            NoiseModel::default().sigma_static_deg
        );
        // presets carry seed 0 unless told otherwise
        let plain = SessionConfig {
            scenario: Some("drift".into()),
            ..SessionConfig::default()
        };
        assert_eq!(plain.scenario().unwrap().seed, 0);
    }

    #[test]
    fn unknown_keys_and_missing_files_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.json");
        std::fs::write(&cfg_path, r#"{"modle": "m.json"}"#).unwrap();
        assert_eq!(SessionConfig::load(Some(&cfg_path)).unwrap_err().code, 2);
        let cfg = SessionConfig {
            model: Some(dir.path().join("absent.json")),
            ..SessionConfig::default()
        };
        let err = cfg.model().unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("absent.json"));
        let bad = SessionConfig {
            scenario: Some("nonsense".into()),
            ..SessionConfig::default()
        };
        assert_eq!(bad.scenario().unwrap_err().code, 2);
    }
}

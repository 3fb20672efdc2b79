//! Tracker configuration.
//!
//! Every threshold, weight and budget used by the control layer lives here.
//! Files are TOML; missing keys take their defaults and unknown keys are
//! rejected so that typos surface immediately.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // Mode classification.
    /// Top IoU below this forces recovery.
    pub tau_rec: f64,
    /// Appearance score below this forces recovery.
    pub tau_app_rec: f64,
    /// Top IoU below this marks the frame ambiguous.
    pub tau_unc: f64,
    pub tau_app_unc: f64,
    pub tau_mot: f64,
    pub tau_geo: f64,
    /// Candidate margin below this marks the frame ambiguous.
    pub tau_delta: f64,
    /// Motion scale as a fraction of the frame diagonal.
    pub tau_m: f64,

    // Branch scoring.
    pub lambda_a: f64,
    pub lambda_m: f64,
    pub lambda_g: f64,
    pub lambda_e: f64,
    pub epsilon: f64,

    // Reconfirmation.
    pub n_win: u32,
    pub tau_reconf_app: f64,
    pub l_miss: u32,
    pub tau_rep_iou: f64,
    pub tau_rep_app: f64,
    pub tau_rep_delta: f64,

    // DRM promotion.
    pub tau_drm: f64,
    pub tau_drm_reappear: f64,
    pub g_min: u32,
    pub r_min: f64,
    pub r_max: f64,
    pub r_min_small: f64,
    pub r_max_small: f64,
    pub n_drm: u32,

    // Budgets.
    pub branch_keep: usize,
    pub k_c: usize,
    pub keep_first_cond_frame: bool,
    pub noncond_capacity: usize,
    /// Raw non-conditioning buffer holds this many times `noncond_capacity`.
    pub noncond_buffer_factor: usize,
    /// Recovery longer than this respawns the branch pool.
    pub max_recovery_frames: u32,

    // Reference geometry.
    pub small_area_fraction: f64,
    pub median_window: usize,
    /// Floor applied to the area ratio for small objects.
    pub small_area_floor: f64,

    // Anchor bank.
    pub anchor_capacity: usize,
    pub tau_anchor: f64,
    /// Cosine at or above which a pointer counts as a duplicate anchor.
    pub anchor_novelty: f64,

    // Distractor signal.
    pub tau_dist: f64,
    /// Distractor distance gate in units of the reference side length.
    pub d_dist: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tau_rec: 0.30,
            tau_app_rec: 0.35,
            tau_unc: 0.55,
            tau_app_unc: 0.50,
            tau_mot: 0.35,
            tau_geo: 0.50,
            tau_delta: 0.10,
            tau_m: 0.05,
            lambda_a: 2.0,
            lambda_m: 0.5,
            lambda_g: 0.5,
            lambda_e: 1.0,
            epsilon: 1e-4,
            n_win: 3,
            tau_reconf_app: 0.70,
            l_miss: 10,
            tau_rep_iou: 0.50,
            tau_rep_app: 0.60,
            tau_rep_delta: 0.05,
            tau_drm: 0.80,
            tau_drm_reappear: 0.60,
            g_min: 5,
            r_min: 0.5,
            r_max: 2.0,
            r_min_small: 0.25,
            r_max_small: 4.0,
            n_drm: 2,
            branch_keep: 3,
            k_c: 6,
            keep_first_cond_frame: true,
            noncond_capacity: 7,
            noncond_buffer_factor: 4,
            max_recovery_frames: 60,
            small_area_fraction: 0.005,
            median_window: 15,
            small_area_floor: 0.5,
            anchor_capacity: 8,
            tau_anchor: 0.85,
            anchor_novelty: 0.98,
            tau_dist: 0.5,
            d_dist: 1.5,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse {
            what: "config",
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { what, message } => Error::Parse {
                what,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Checks every field against its admissible range.
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("tau_rec", self.tau_rec),
            ("tau_app_rec", self.tau_app_rec),
            ("tau_unc", self.tau_unc),
            ("tau_app_unc", self.tau_app_unc),
            ("tau_mot", self.tau_mot),
            ("tau_geo", self.tau_geo),
            ("tau_delta", self.tau_delta),
            ("tau_reconf_app", self.tau_reconf_app),
            ("tau_rep_iou", self.tau_rep_iou),
            ("tau_rep_app", self.tau_rep_app),
            ("tau_rep_delta", self.tau_rep_delta),
            ("tau_drm", self.tau_drm),
            ("tau_drm_reappear", self.tau_drm_reappear),
            ("tau_anchor", self.tau_anchor),
            ("tau_dist", self.tau_dist),
            ("anchor_novelty", self.anchor_novelty),
            ("small_area_floor", self.small_area_floor),
            ("small_area_fraction", self.small_area_fraction),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        let positive = [
            ("tau_m", self.tau_m),
            ("epsilon", self.epsilon),
            ("r_min", self.r_min),
            ("r_min_small", self.r_min_small),
            ("d_dist", self.d_dist),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        let weights = [
            ("lambda_a", self.lambda_a),
            ("lambda_m", self.lambda_m),
            ("lambda_g", self.lambda_g),
            ("lambda_e", self.lambda_e),
        ];
        for (name, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be non-negative")));
            }
        }
        if self.epsilon > 1.0 {
            return Err(Error::Config(format!("epsilon = {} must not exceed 1", self.epsilon)));
        }
        if self.r_min >= self.r_max {
            return Err(Error::Config(format!(
                "r_min = {} must be below r_max = {}",
                self.r_min, self.r_max
            )));
        }
        if self.r_min_small >= self.r_max_small {
            return Err(Error::Config(format!(
                "r_min_small = {} must be below r_max_small = {}",
                self.r_min_small, self.r_max_small
            )));
        }
        let counts = [
            ("branch_keep", self.branch_keep),
            ("k_c", self.k_c),
            ("n_drm", self.n_drm as usize),
            ("n_win", self.n_win as usize),
            ("noncond_capacity", self.noncond_capacity),
            ("noncond_buffer_factor", self.noncond_buffer_factor),
            ("median_window", self.median_window),
            ("anchor_capacity", self.anchor_capacity),
            ("max_recovery_frames", self.max_recovery_frames as usize),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Raw capacity of the non-conditioning buffer.
    pub fn noncond_buffer_capacity(&self) -> usize {
        self.noncond_capacity * self.noncond_buffer_factor
    }

    /// Motion scale in pixels for a given frame size.
    pub fn motion_scale(&self, frame_size: (u32, u32)) -> f64 {
        let (w, h) = (frame_size.0 as f64, frame_size.1 as f64);
        self.tau_m * (w * w + h * h).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = Config::default();
        let back = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = Config::from_toml_str("tau_recc = 0.3\n").unwrap_err();
        assert!(err.to_string().contains("tau_recc"), "{err}");
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = Config::from_toml_str("k_c = 4\nbranch_keep = 2\n").unwrap();
        assert_eq!(cfg.k_c, 4);
        assert_eq!(cfg.branch_keep, 2);
        assert_eq!(cfg.tau_rec, Config::default().tau_rec);
    }

    #[test]
    fn out_of_range_fields_are_named() {
        let cases = [
            ("tau_unc = 1.5", "tau_unc"),
            ("epsilon = 0.0", "epsilon"),
            ("branch_keep = 0", "branch_keep"),
            ("k_c = 0", "k_c"),
            ("n_drm = 0", "n_drm"),
            ("r_min = 3.0", "r_min"),
            ("lambda_a = -1.0", "lambda_a"),
        ];
        for (text, field) in cases {
            let err = Config::from_toml_str(text).unwrap_err();
            assert!(err.to_string().contains(field), "{text}: {err}");
        }
    }

    #[test]
    fn motion_scale_is_diagonal_fraction() {
        let cfg = Config::default();
        assert!((cfg.motion_scale((640, 480)) - 40.0).abs() < 1e-12);
    }
}

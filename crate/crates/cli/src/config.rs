//! Run configuration. Precedence: command-line flag, then config file, then
//! built-in default.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use vehicle_core::filter::DEFAULT_OVERLAP_THRESHOLD;
use vehicle_core::grid::DEFAULT_SCORE_THRESHOLD;
use vehicle_core::metrics::DEFAULT_IOU_THRESHOLD;
use vehicle_core::svm::{DEFAULT_COST, DEFAULT_SEED};
use vehicle_core::ConfidenceMode;

use crate::error::{CliError, Result};

/// Environment variable naming a config file when `--config` is absent.
pub const CONFIG_ENV: &str = "VEHICLE_CONFIG";

pub const DEFAULT_SOURCE_WIDTH: u32 = 4184;
pub const DEFAULT_SOURCE_HEIGHT: u32 = 3108;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Minimum decoded score, exclusive.
    pub score_threshold: f64,
    /// Containment ratio `t` above which the less confident box is removed.
    pub overlap_threshold: f64,
    /// Valid road region in detection-resolution pixels; whole image if unset.
    pub region: Option<[f64; 4]>,
    pub source_width: u32,
    pub source_height: u32,
    /// Minimum IoU for a prediction to match a ground-truth box.
    pub iou_threshold: f64,
    pub cost: f64,
    pub seed: u64,
    pub standardize: bool,
    pub balanced: bool,
    pub confidence_mode: ConfidenceMode,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            overlap_threshold: DEFAULT_OVERLAP_THRESHOLD,
            region: None,
            source_width: DEFAULT_SOURCE_WIDTH,
            source_height: DEFAULT_SOURCE_HEIGHT,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            cost: DEFAULT_COST,
            seed: DEFAULT_SEED,
            standardize: false,
            balanced: false,
            confidence_mode: ConfidenceMode::Calibrated,
        }
    }
}

/// A partially specified config, as read from a file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub score_threshold: Option<f64>,
    pub overlap_threshold: Option<f64>,
    pub region: Option<[f64; 4]>,
    pub source_width: Option<u32>,
    pub source_height: Option<u32>,
    pub iou_threshold: Option<f64>,
    pub cost: Option<f64>,
    pub seed: Option<u64>,
    pub standardize: Option<bool>,
    pub balanced: Option<bool>,
    pub confidence_mode: Option<ConfidenceMode>,
}

impl ConfigLayer {
    pub fn from_toml(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0),
            message: e.message().to_string(),
        })
    }
}

impl Config {
    fn apply(&mut self, l: &ConfigLayer) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = l.$f { self.$f = v; } )* };
        }
        take!(
            score_threshold,
            overlap_threshold,
            source_width,
            source_height,
            iou_threshold,
            cost,
            seed,
            standardize,
            balanced,
            confidence_mode
        );
        if l.region.is_some() {
            self.region = l.region;
        }
    }

    /// Layers `file` then `flags` over the defaults.
    pub fn resolve(file: Option<&ConfigLayer>, flags: &ConfigLayer) -> Result<Self> {
        let mut cfg = Config::default();
        if let Some(f) = file {
            cfg.apply(f);
        }
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the config file named by `explicit`, else by `$VEHICLE_CONFIG`.
    pub fn load(explicit: Option<&Path>, flags: &ConfigLayer) -> Result<Self> {
        let path: Option<PathBuf> = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let file = path.as_deref().map(ConfigLayer::from_toml).transpose()?;
        Self::resolve(file.as_ref(), flags)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::validation(m));
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return bad(format!(
                "score_threshold {} must be in [0, 1]",
                self.score_threshold
            ));
        }
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold <= 1.0) {
            return bad(format!(
                "overlap_threshold {} must be in (0, 1]",
                self.overlap_threshold
            ));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return bad(format!(
                "iou_threshold {} must be in (0, 1]",
                self.iou_threshold
            ));
        }
        if !(self.cost > 0.0 && self.cost.is_finite()) {
            return bad(format!("cost {} must be positive", self.cost));
        }
        if self.source_width == 0 || self.source_height == 0 {
            return bad("source image size must be positive".into());
        }
        if let Some([x0, y0, x1, y1]) = self.region {
            if !(x0 < x1 && y0 < y1) {
                return bad(format!(
                    "region [{x0}, {y0}, {x1}, {y1}] must have positive area"
                ));
            }
        }
        Ok(())
    }

    /// TOML rendering of every effective setting.
    pub fn render(&self) -> String {
        let region = match self.region {
            Some(r) => format!("region = [{:?}, {:?}, {:?}, {:?}]", r[0], r[1], r[2], r[3]),
            None => "# region = [x_min, y_min, x_max, y_max]  (unset: whole image)".to_string(),
        };
        let mode = match self.confidence_mode {
            ConfidenceMode::Calibrated => "calibrated",
            ConfidenceMode::Raw => "raw",
        };
        let lines = [
            format!("score_threshold = {:?}", self.score_threshold),
            format!("overlap_threshold = {:?}", self.overlap_threshold),
            region,
            format!("source_width = {}", self.source_width),
            format!("source_height = {}", self.source_height),
            format!("iou_threshold = {:?}", self.iou_threshold),
            format!("cost = {:?}", self.cost),
            format!("seed = {}", self.seed),
            format!("standardize = {}", self.standardize),
            format!("balanced = {}", self.balanced),
            format!("confidence_mode = \"{mode}\""),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flag_over_file_over_default() {
        let file = ConfigLayer {
            overlap_threshold: Some(0.4),
            cost: Some(2.0),
            ..Default::default()
        };
        let flags = ConfigLayer {
            cost: Some(5.0),
            ..Default::default()
        };
        let cfg = Config::resolve(Some(&file), &flags).unwrap();
        assert_eq!(cfg.cost, 5.0);
        assert_eq!(cfg.overlap_threshold, 0.4);
        assert_eq!(cfg.score_threshold, DEFAULT_SCORE_THRESHOLD);
    }

    #[test]
    fn rendered_config_parses_back() {
        let cfg = Config {
            region: Some([1.0, 2.0, 300.0, 200.0]),
            confidence_mode: ConfidenceMode::Raw,
            ..Config::default()
        };
        let layer: ConfigLayer = toml::from_str(&cfg.render()).unwrap();
        assert_eq!(Config::resolve(None, &layer).unwrap(), cfg);
        let layer: ConfigLayer = toml::from_str(&Config::default().render()).unwrap();
        assert_eq!(Config::resolve(None, &layer).unwrap(), Config::default());
    }

    #[test]
    fn invalid_values_are_validation_errors() {
        let flags = ConfigLayer {
            overlap_threshold: Some(0.0),
            ..Default::default()
        };
        let err = Config::resolve(None, &flags).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_VALIDATION);
        let flags = ConfigLayer {
            region: Some([5.0, 0.0, 5.0, 10.0]),
            ..Default::default()
        };
        assert!(Config::resolve(None, &flags).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ConfigLayer>("threshold = 0.5").is_err());
    }
}

//! Flat `key = value` configuration files.
//!
//! Detector parameters use the table key names (`delta_T_H`, `C_hours`,
//! `f_hours_H`, ...). Blank lines and lines starting with `#` are ignored.
//! Unknown keys and repeated keys are errors.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{HowdeError, Result};
use crate::metrics::Granularity;
use crate::model::HowdeParams;

pub const PARAM_KEYS: [&str; 12] = [
    "delta_T_H",
    "delta_T_W",
    "C_hours",
    "C_days_H",
    "C_days_W",
    "f_hours_H",
    "f_hours_W",
    "f_days_W",
    "window_mode",
    "night_bins",
    "business_bins",
    "business_days",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| HowdeError::Config(format!("bad value {value:?} for {key}")))
}

/// Sets one detector parameter. Returns `Ok(false)` if `key` is not a
/// detector parameter.
pub fn set_param(params: &mut HowdeParams, key: &str, value: &str) -> Result<bool> {
    match key {
        "delta_T_H" => params.delta_t_h = parse(key, value)?,
        "delta_T_W" => params.delta_t_w = parse(key, value)?,
        "C_hours" => params.c_hours = parse(key, value)?,
        "C_days_H" => params.c_days_h = parse(key, value)?,
        "C_days_W" => params.c_days_w = parse(key, value)?,
        "f_hours_H" => params.f_hours_h = parse(key, value)?,
        "f_hours_W" => params.f_hours_w = parse(key, value)?,
        "f_days_W" => params.f_days_w = parse(key, value)?,
        "window_mode" => params.window_mode = value.trim().parse()?,
        "night_bins" => params.windows.night_bins = value.trim().parse()?,
        "business_bins" => params.windows.business_bins = value.trim().parse()?,
        "business_days" => params.windows.business_days = value.trim().parse()?,
        _ => return Ok(false),
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Detector {
    #[default]
    Howde,
    Atlas,
    TimeGeo,
}

impl FromStr for Detector {
    type Err = HowdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "howde" => Ok(Detector::Howde),
            "atlas" => Ok(Detector::Atlas),
            "timegeo" => Ok(Detector::TimeGeo),
            _ => Err(HowdeError::Config(format!("unknown detector {s:?}"))),
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::Howde => "howde",
            Detector::Atlas => "atlas",
            Detector::TimeGeo => "timegeo",
        })
    }
}

impl FromStr for Granularity {
    type Err = HowdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "USER_WEEK" => Ok(Granularity::UserWeek),
            "USER" => Ok(Granularity::User),
            _ => Err(HowdeError::Config(format!("unknown protocol {s:?}"))),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::UserWeek => "USER_WEEK",
            Granularity::User => "USER",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: HowdeParams,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub detector: Detector,
    pub protocol: Granularity,
    pub bootstrap_b: usize,
    pub seed: u64,
    /// Users with fewer days of data are dropped before evaluation.
    pub prefilter_min_days: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            params: HowdeParams::default(),
            input: None,
            output: None,
            detector: Detector::Howde,
            protocol: Granularity::UserWeek,
            bootstrap_b: 1000,
            seed: 0,
            prefilter_min_days: 0,
        }
    }
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if set_param(&mut self.params, key, value)? {
            return Ok(());
        }
        match key {
            "input" => self.input = Some(PathBuf::from(value.trim())),
            "output" => self.output = Some(PathBuf::from(value.trim())),
            "detector" => self.detector = value.parse()?,
            "protocol" => self.protocol = value.parse()?,
            "bootstrap_B" => self.bootstrap_b = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "prefilter_min_days" => self.prefilter_min_days = parse(key, value)?,
            _ => return Err(HowdeError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Config> {
        let mut config = Config::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |e: HowdeError| HowdeError::Config(format!("line {}: {e}", i + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| {
                at(HowdeError::Config(format!(
                    "expected key = value, got {line:?}"
                )))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(at(HowdeError::Config(format!("duplicate key {key:?}"))));
            }
            config.set(key, value.trim()).map_err(at)?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HowdeError::Config(format!("{}: {e}", path.display())))?;
        Config::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WindowMode;

    #[test]
    fn parses_table_keys() {
        let cfg = Config::parse_str(
            "# max home configuration\n\
             delta_T_H = 28\n\
             f_hours_H = 0.9\n\
             window_mode = PAST_ONLY\n\
             night_bins = 0-5\n\
             business_days = Mon-Fri\n\
             protocol = USER\n\
             bootstrap_B = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.params.delta_t_h, 28);
        assert_eq!(cfg.params.f_hours_h, 0.9);
        assert_eq!(cfg.params.window_mode, WindowMode::PastOnly);
        assert_eq!(cfg.protocol, Granularity::User);
        assert_eq!(cfg.bootstrap_b, 50);
        assert_eq!(cfg.params.c_hours, 0.4);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let unknown = Config::parse_str("delta_T_X = 3\n")
            .unwrap_err()
            .to_string();
        assert!(
            unknown.contains("line 1") && unknown.contains("delta_T_X"),
            "{unknown}"
        );
        assert!(Config::parse_str("seed = 1\nseed = 2\n").is_err());
        assert!(Config::parse_str("C_hours 0.4\n").is_err());
        assert!(Config::parse_str("C_hours = lots\n").is_err());
    }

    #[test]
    fn validation_is_separate_from_parsing() {
        let cfg = Config::parse_str("delta_T_H = 27\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = Config::parse_str("f_hours_W = 1.5\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}

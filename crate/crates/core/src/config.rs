//! Run configuration shared by the config file and the command line.
//!
//! Every key is optional; command-line flags are merged over the file with
//! [`RunConfig::overlay`], so flags win.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::analysis::{
    Backend, ScanOptions, DEFAULT_FFT_OVERLAP, DEFAULT_MARGIN, DEFAULT_THRESHOLD,
};
use crate::correlator::CorrelatorParams;
use crate::ensemble::{Member, PipelineConfig};
use crate::{Error, Result};

pub const VALID_KEYS: &[&str] = &[
    "data",
    "info",
    "test",
    "out",
    "forecasts",
    "benchmark",
    "exclusions",
    "window",
    "r_threshold",
    "std_ratio",
    "bug1",
    "bug2",
    "past_only",
    "include_self",
    "correlator",
    "members",
    "external_forecasts",
    "horizon",
    "seasonality",
    "audit_threshold",
    "audit_backend",
    "bin_width",
    "fft_overlap_threshold",
    "r_threshold_grid",
    "std_ratio_grid",
    "threads",
    "no_timestamp",
];

/// A spread-check ratio; `"none"` (or `"disabled"`) turns the check off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StdRatio(pub Option<f64>);

impl std::str::FromStr for StdRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "disabled" | "off" => Ok(StdRatio(None)),
            t => t.parse::<f64>().map(|v| StdRatio(Some(v))).map_err(|_| {
                Error::Config(format!("std ratio {s:?} is neither a number nor \"none\""))
            }),
        }
    }
}

impl<'de> Deserialize<'de> for StdRatio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(StdRatio(Some(v as f64))),
            Raw::Num(v) => Ok(StdRatio(Some(v))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub info: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub forecasts: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
    pub window: Option<usize>,
    pub r_threshold: Option<f64>,
    pub std_ratio: Option<StdRatio>,
    pub bug1: Option<bool>,
    pub bug2: Option<bool>,
    pub past_only: Option<bool>,
    pub include_self: Option<bool>,
    /// `false` runs the member ensemble only.
    pub correlator: Option<bool>,
    pub members: Option<Vec<String>>,
    pub external_forecasts: Option<Vec<PathBuf>>,
    pub horizon: Option<usize>,
    pub seasonality: Option<usize>,
    pub audit_threshold: Option<f64>,
    pub audit_backend: Option<String>,
    pub bin_width: Option<usize>,
    pub fft_overlap_threshold: Option<usize>,
    pub r_threshold_grid: Option<Vec<f64>>,
    pub std_ratio_grid: Option<Vec<StdRatio>>,
    pub threads: Option<usize>,
    pub no_timestamp: Option<bool>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    /// Parses TOML text; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        let unknown: Vec<&str> = table
            .keys()
            .map(String::as_str)
            .filter(|k| !VALID_KEYS.contains(k))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "unknown config key(s) {}; valid keys: {}",
                unknown.join(", "),
                VALID_KEYS.join(", ")
            )));
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config: {}", e.message())))?;
        if let Some(base) = base_dir {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.data);
        fix(&mut self.info);
        fix(&mut self.test);
        fix(&mut self.out);
        fix(&mut self.forecasts);
        fix(&mut self.benchmark);
        fix(&mut self.exclusions);
        for p in self.external_forecasts.iter_mut().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfig) -> RunConfig {
        overlay_fields!(self, top;
            data, info, test, out, forecasts, benchmark, exclusions, window, r_threshold,
            std_ratio, bug1, bug2, past_only, include_self, correlator, members,
            external_forecasts, horizon, seasonality, audit_threshold, audit_backend,
            bin_width, fft_overlap_threshold, r_threshold_grid, std_ratio_grid, threads,
            no_timestamp);
        self
    }

    pub fn correlator_params(&self) -> Result<CorrelatorParams> {
        let d = CorrelatorParams::default();
        let p = CorrelatorParams {
            window: self.window.unwrap_or(d.window),
            r_threshold: self.r_threshold.unwrap_or(d.r_threshold),
            std_ratio: self.std_ratio.map_or(d.std_ratio, |s| s.0),
            bug1: self.bug1.unwrap_or(d.bug1),
            bug2: self.bug2.unwrap_or(d.bug2),
            past_only: self.past_only.unwrap_or(d.past_only),
            include_self: self.include_self.unwrap_or(d.include_self),
            continuation: None,
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }

    /// Builds the pipeline, loading any external forecast files.
    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let correlator = match self.correlator {
            Some(false) => None,
            _ => Some(self.correlator_params()?),
        };
        let members = match &self.members {
            Some(names) => names
                .iter()
                .map(|n| Member::builtin(n))
                .collect::<Result<Vec<_>>>()?,
            None => PipelineConfig::default().members,
        };
        let mut cfg = PipelineConfig {
            correlator,
            members,
            horizon: self.horizon,
        };
        if let Some(paths) = &self.external_forecasts {
            cfg.load_external(paths)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scan_options(&self) -> Result<ScanOptions> {
        let backend = match self
            .audit_backend
            .as_deref()
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            None | Some("auto") => Backend::Auto,
            Some("direct") => Backend::Direct,
            Some("fft") => Backend::Fft,
            Some(other) => {
                return Err(Error::Config(format!(
                    "audit_backend {other:?} must be auto, direct or fft"
                )))
            }
        };
        Ok(ScanOptions {
            margin: DEFAULT_MARGIN,
            backend,
            fft_overlap_threshold: self.fft_overlap_threshold.unwrap_or(DEFAULT_FFT_OVERLAP),
        })
    }

    pub fn audit_threshold(&self) -> f64 {
        self.audit_threshold.unwrap_or(DEFAULT_THRESHOLD)
    }

    pub fn bin_width(&self) -> usize {
        self.bin_width.unwrap_or(100)
    }

    pub fn sweep_grid(&self) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
        let thresholds = self
            .r_threshold_grid
            .clone()
            .unwrap_or_else(|| vec![0.9999, 0.999, 0.99]);
        let mut ratios: Vec<Option<f64>> = match &self.std_ratio_grid {
            Some(g) => g.iter().map(|s| s.0).collect(),
            None => vec![Some(2.0), Some(2.5), Some(3.0)],
        };
        if thresholds.is_empty() || ratios.is_empty() {
            return Err(Error::Config("sweep grids must not be empty".into()));
        }
        if !ratios.contains(&None) {
            ratios.push(None);
        }
        Ok((thresholds, ratios))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let cfg = RunConfig::from_toml(
            "data = \"d.csv\"\nstd_ratio = \"none\"\nr_threshold = 0.999\nmembers = [\"naive\"]\nstd_ratio_grid = [2, 2.5, \"none\"]\n",
            Some(Path::new("/cfg")),
        )
        .unwrap();
        assert_eq!(cfg.data.as_deref(), Some(Path::new("/cfg/d.csv")));
        assert_eq!(cfg.std_ratio, Some(StdRatio(None)));
        let p = cfg.correlator_params().unwrap();
        assert_eq!((p.r_threshold, p.std_ratio), (0.999, None));
        assert_eq!(cfg.pipeline().unwrap().members, vec![Member::Naive]);
        let (_, ratios) = cfg.sweep_grid().unwrap();
        assert_eq!(ratios, vec![Some(2.0), Some(2.5), None]);
    }

    #[test]
    fn unknown_keys_list_valid_ones() {
        let err = RunConfig::from_toml("windw = 3", None)
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("windw") && err.contains("r_threshold"),
            "{err}"
        );
        assert!(RunConfig::from_toml("window = \"x\"", None).is_err());
        assert!(RunConfig::from_toml("std_ratio = \"wide\"", None).is_err());
    }

    #[test]
    fn flags_win() {
        let file = RunConfig {
            window: Some(10),
            bug1: Some(true),
            ..Default::default()
        };
        let flags = RunConfig {
            window: Some(14),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!((merged.window, merged.bug1), (Some(14), Some(true)));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let cfg = RunConfig {
            r_threshold: Some(2.0),
            ..Default::default()
        };
        assert!(matches!(cfg.correlator_params(), Err(Error::Config(_))));
        let cfg = RunConfig {
            r_threshold_grid: Some(vec![]),
            ..Default::default()
        };
        assert!(cfg.sweep_grid().is_err());
        let cfg = RunConfig {
            audit_backend: Some("gpu".into()),
            ..Default::default()
        };
        assert!(cfg.scan_options().is_err());
    }
}

//! Full forecasting pipeline: correlator where it applies, median of the
//! member forecasters elsewhere, negative values clipped last.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use crate::correlator::{run_correlator_with_horizons, CorrelatorMatch, CorrelatorParams};
use crate::dataset::{read_forecast_csv, Dataset, TimeSeries};
use crate::forecasters::{custom_forecast, naive_forecast, ses_auto, Forecast, Method};
use crate::{Error, Result};

/// Forecasts loaded from a CSV in the forecast-output layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalForecasts {
    pub name: String,
    pub by_id: HashMap<String, Vec<f64>>,
}

impl ExternalForecasts {
    /// The member is named after the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(ExternalForecasts {
            name,
            by_id: read_forecast_csv(path)?.into_iter().collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Member {
    Naive,
    Ses,
    Custom,
    External(ExternalForecasts),
}

impl Member {
    /// Parses a built-in member name (`naive`, `ses`, `custom`).
    pub fn builtin(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "naive" => Ok(Member::Naive),
            "ses" => Ok(Member::Ses),
            "custom" => Ok(Member::Custom),
            other => Err(Error::Config(format!(
                "unknown ensemble member {other:?} (expected naive, ses or custom)"
            ))),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Member::Naive => Method::Naive,
            Member::Ses => Method::Ses,
            Member::Custom => Method::Custom,
            Member::External(e) => Method::External(e.name.clone()),
        }
    }

    pub fn forecast(&self, series: &TimeSeries, h: usize) -> Result<Forecast> {
        let values = match self {
            Member::Naive => naive_forecast(&series.values, h)?,
            Member::Ses => ses_auto(&series.values, h)?.1,
            Member::Custom => custom_forecast(&series.values, h)?,
            Member::External(ext) => {
                let v = ext.by_id.get(&series.id).ok_or_else(|| Error::MissingIds {
                    what: format!("external forecasts {:?}", ext.name),
                    ids: series.id.clone(),
                })?;
                if v.len() != h {
                    return Err(Error::LengthMismatch {
                        expected: h,
                        actual: v.len(),
                    });
                }
                v.clone()
            }
        };
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite forecast value {bad}")));
        }
        Ok(Forecast::new(series.id.clone(), values, self.method()))
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    /// `None` disables the correlator.
    pub correlator: Option<CorrelatorParams>,
    pub members: Vec<Member>,
    /// Overrides every series' own horizon.
    pub horizon: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            correlator: Some(CorrelatorParams::default()),
            members: vec![Member::Naive, Member::Ses, Member::Custom],
            horizon: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.correlator {
            p.validate()?;
        }
        if self.correlator.is_none() && self.members.is_empty() {
            return Err(Error::Config(
                "at least one ensemble member is required when the correlator is disabled".into(),
            ));
        }
        if self.horizon == Some(0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn load_external(&mut self, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            self.members
                .push(Member::External(ExternalForecasts::load(p)?));
        }
        Ok(())
    }
}

/// Pointwise median; even counts average the two central values.
pub fn median_combine(forecasts: &[Forecast]) -> Result<Forecast> {
    let first = forecasts
        .first()
        .ok_or_else(|| Error::invalid("median of zero forecasts"))?;
    let h = first.len();
    if let Some(bad) = forecasts.iter().find(|f| f.len() != h) {
        return Err(Error::LengthMismatch {
            expected: h,
            actual: bad.len(),
        });
    }
    let mut column = Vec::with_capacity(forecasts.len());
    let values = (0..h)
        .map(|t| {
            column.clear();
            column.extend(forecasts.iter().map(|f| f.values[t]));
            column.sort_by(f64::total_cmp);
            let mid = column.len() / 2;
            if column.len() % 2 == 1 {
                column[mid]
            } else {
                (column[mid - 1] + column[mid]) / 2.0
            }
        })
        .collect();
    Ok(Forecast::new(first.id.clone(), values, Method::Ensemble))
}

pub fn clip_negative(mut forecast: Forecast) -> Forecast {
    for v in &mut forecast.values {
        *v = v.max(0.0);
    }
    forecast
}

/// Median of the members that succeed on `series`; naive when none do.
pub fn ensemble_forecast(members: &[Member], series: &TimeSeries, h: usize) -> Result<Forecast> {
    let mut ok = Vec::with_capacity(members.len());
    for m in members {
        match m.forecast(series, h) {
            Ok(f) => ok.push(f),
            Err(e) => warn!(
                "{}: member {} failed ({e}); excluded",
                series.id,
                m.method()
            ),
        }
    }
    if ok.is_empty() {
        if !members.is_empty() {
            warn!("{}: every ensemble member failed; using naive", series.id);
        }
        let values = naive_forecast(&series.values, h)?;
        return Ok(Forecast::new(series.id.clone(), values, Method::Ensemble));
    }
    median_combine(&ok)
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    /// One forecast per input series, in file order.
    pub forecasts: Vec<Forecast>,
    /// Correlator outcome per series (all `None` when disabled).
    pub matches: Vec<Option<CorrelatorMatch>>,
}

impl PipelineOutput {
    pub fn correlator_count(&self) -> usize {
        self.forecasts
            .iter()
            .filter(|f| f.method == Method::Correlator)
            .count()
    }
}

pub fn pipeline_forecast(dataset: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let horizons: Vec<usize> = dataset
        .iter()
        .map(|s| cfg.horizon.unwrap_or(s.horizon))
        .collect();
    let matches = match &cfg.correlator {
        Some(p) => run_correlator_with_horizons(dataset, p, &horizons)?,
        None => vec![None; dataset.len()],
    };
    let forecasts = dataset
        .series()
        .par_iter()
        .zip(&matches)
        .zip(&horizons)
        .map(|((series, m), &h)| {
            let fc = match m {
                Some(m) => Forecast::new(series.id.clone(), m.forecast.clone(), Method::Correlator),
                None => ensemble_forecast(&cfg.members, series, h)?,
            };
            Ok(clip_negative(fc))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineOutput { forecasts, matches })
}

/// Writes `id,method` rows.
pub fn write_provenance_csv(path: impl AsRef<Path>, forecasts: &[Forecast]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let file = std::fs::File::create(path).map_err(io)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "id,method").map_err(io)?;
    for f in forecasts {
        writeln!(out, "{},{}", f.id, f.method).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads an `id,method` file back into a map.
pub fn read_provenance_csv(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if let (Some(id), Some(method)) = (rec.get(0), rec.get(1)) {
            out.insert(id.trim().to_string(), method.trim().to_string());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fc(values: &[f64]) -> Forecast {
        Forecast::new("D1", values.to_vec(), Method::Naive)
    }

    #[test]
    fn median_examples() {
        let same = vec![fc(&[1.0, 2.0]); 5];
        assert_eq!(median_combine(&same).unwrap().values, vec![1.0, 2.0]);
        let outlier = [fc(&[1.0]), fc(&[100.0]), fc(&[2.0])];
        assert_eq!(median_combine(&outlier).unwrap().values, vec![2.0]);
        let even = [fc(&[1.0]), fc(&[4.0])];
        assert_eq!(median_combine(&even).unwrap().values, vec![2.5]);
        assert!(median_combine(&[fc(&[1.0]), fc(&[1.0, 2.0])]).is_err());
        assert!(median_combine(&[]).is_err());
    }

    #[test]
    fn clipping() {
        assert_eq!(
            clip_negative(fc(&[-1.0, 0.0, 2.0])).values,
            vec![0.0, 0.0, 2.0]
        );
        assert_eq!(clip_negative(fc(&[0.5, 3.0])).values, vec![0.5, 3.0]);
    }

    #[test]
    fn naive_only_pipeline_matches_naive() {
        let d = Dataset::new(vec![
            TimeSeries::new("D1", vec![1.0, 2.0, 3.0]),
            TimeSeries::new("D2", vec![4.0, 1.0]),
        ])
        .unwrap();
        let cfg = PipelineConfig {
            correlator: None,
            members: vec![Member::Naive],
            horizon: Some(3),
        };
        let out = pipeline_forecast(&d, &cfg).unwrap();
        assert_eq!(out.forecasts[0].values, vec![3.0; 3]);
        assert_eq!(out.forecasts[1].values, vec![1.0; 3]);
        assert!(out.forecasts.iter().all(|f| f.method == Method::Ensemble));
    }

    #[test]
    fn clip_runs_after_median() {
        // median(-4, 6) = 1; clipping first would give median(0, 6) = 3
        let series = TimeSeries::new("D1", vec![1.0; 20]);
        let d = Dataset::new(vec![series]).unwrap();
        let ext = |name: &str, v: f64| {
            Member::External(ExternalForecasts {
                name: name.into(),
                by_id: HashMap::from([("D1".to_string(), vec![v; 2])]),
            })
        };
        let cfg = PipelineConfig {
            correlator: None,
            members: vec![ext("a", -4.0), ext("b", 6.0)],
            horizon: Some(2),
        };
        let out = pipeline_forecast(&d, &cfg).unwrap();
        assert_eq!(out.forecasts[0].values, vec![1.0, 1.0]);
    }

    #[test]
    fn failing_members_are_dropped_then_naive() {
        let series = TimeSeries::new("D1", vec![2.0, 5.0]);
        let missing = Member::External(ExternalForecasts {
            name: "x".into(),
            by_id: HashMap::new(),
        });
        let f = ensemble_forecast(&[missing.clone(), Member::Ses], &series, 2).unwrap();
        assert_eq!(f.values, ses_auto(&[2.0, 5.0], 2).unwrap().1);
        let f = ensemble_forecast(&[missing], &series, 2).unwrap();
        assert_eq!(f.values, vec![5.0, 5.0]);
    }

    #[test]
    fn config_needs_a_member_without_correlator() {
        let cfg = PipelineConfig {
            correlator: None,
            members: vec![],
            horizon: None,
        };
        assert!(cfg.validate().is_err());
        assert!(Member::builtin("arima").is_err());
        assert_eq!(Member::builtin(" SES ").unwrap(), Member::Ses);
    }

    proptest! {
        #[test]
        fn median_matches_sort_oracle(
            members in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 5), 1..8)
        ) {
            let fcs: Vec<Forecast> = members.iter().map(|v| fc(v)).collect();
            let med = median_combine(&fcs).unwrap();
            for t in 0..5 {
                let mut col: Vec<f64> = members.iter().map(|v| v[t]).collect();
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let n = col.len();
                let want = if n % 2 == 1 { col[n / 2] } else { 0.5 * (col[n / 2 - 1] + col[n / 2]) };
                prop_assert_eq!(med.values[t], want);
                prop_assert!(med.values[t] >= col[0] && med.values[t] <= col[n - 1]);
            }
        }
    }
}

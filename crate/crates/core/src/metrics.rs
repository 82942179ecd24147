//! MASE, sMAPE and OWA against a naive benchmark.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use log::warn;
use serde::Serialize;

use crate::dataset::{summarize_ids, HoldoutSplit};
use crate::forecasters::{naive_forecast, Forecast, Method};
use crate::{Error, Result};

fn check_lengths(actual: &[f64], forecast: &[f64]) -> Result<()> {
    if actual.len() != forecast.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            actual: forecast.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::invalid("empty forecast horizon"));
    }
    Ok(())
}

/// In-sample mean absolute seasonal-naive error at lag `m`.
pub fn mase_scale(train: &[f64], m: usize) -> Option<f64> {
    if m == 0 || train.len() <= m {
        return None;
    }
    let total: f64 = train.windows(m + 1).map(|w| (w[m] - w[0]).abs()).sum();
    let scale = total / (train.len() - m) as f64;
    (scale > 0.0).then_some(scale)
}

/// Mean absolute scaled error.
pub fn mase(train: &[f64], actual: &[f64], forecast: &[f64], m: usize) -> Result<f64> {
    check_lengths(actual, forecast)?;
    let scale = mase_scale(train, m).ok_or_else(|| Error::UndefinedMetric {
        id: String::new(),
        reason: "in-sample seasonal differences are all zero or the series is too short",
    })?;
    let mae = actual
        .iter()
        .zip(forecast)
        .map(|(y, f)| (y - f).abs())
        .sum::<f64>()
        / actual.len() as f64;
    Ok(mae / scale)
}

/// Symmetric MAPE in percent, `(200 / h) * sum |F - Y| / (|Y| + |F|)`.
/// Terms with `|Y| + |F| = 0` contribute zero.
pub fn smape(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_lengths(actual, forecast)?;
    let total: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(y, f)| {
            let denom = y.abs() + f.abs();
            if denom == 0.0 {
                0.0
            } else {
                (f - y).abs() / denom
            }
        })
        .sum();
    Ok(200.0 * total / actual.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesScore {
    pub id: String,
    /// `None` when the in-sample scale is zero.
    pub mase: Option<f64>,
    pub smape: f64,
    pub benchmark_mase: Option<f64>,
    pub benchmark_smape: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub series: usize,
    /// Series whose MASE was defined and entered the aggregate.
    pub mase_series: usize,
    pub aggregate_mase: f64,
    pub aggregate_smape: f64,
    pub benchmark_mase: f64,
    pub benchmark_smape: f64,
    pub relative_mase: f64,
    pub relative_smape: f64,
    pub owa: f64,
    pub per_series: Vec<SeriesScore>,
}

fn relative(value: f64, benchmark: f64, what: &str) -> Result<f64> {
    if benchmark > 0.0 {
        Ok(value / benchmark)
    } else if value == 0.0 {
        Ok(1.0)
    } else {
        Err(Error::invalid(format!(
            "benchmark {what} is zero; relative {what} undefined"
        )))
    }
}

/// Seasonal lag for MASE: fixed, or taken from each series' frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Seasonality {
    Fixed(usize),
    FromFrequency,
}

/// Scores `forecasts` and `benchmark` on the split's test values.
///
/// Aggregates are plain means over series (MASE only over series where it
/// is defined); relative metrics divide the aggregates; OWA is their mean.
pub fn owa_report(
    forecasts: &[Forecast],
    benchmark: &[Forecast],
    split: &HoldoutSplit,
    seasonality: Seasonality,
) -> Result<MetricReport> {
    if forecasts.is_empty() {
        return Err(Error::invalid("no forecasts to evaluate"));
    }
    let bench: HashMap<&str, &Forecast> = benchmark.iter().map(|f| (f.id.as_str(), f)).collect();
    let ids: std::collections::HashSet<&str> = forecasts.iter().map(|f| f.id.as_str()).collect();
    let missing: Vec<&str> = ids
        .iter()
        .copied()
        .filter(|id| !bench.contains_key(id))
        .collect();
    let extra: Vec<&str> = bench
        .keys()
        .copied()
        .filter(|id| !ids.contains(id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut all = missing;
        all.extend(extra);
        all.sort_unstable();
        return Err(Error::MissingIds {
            what: "forecast/benchmark pairing".into(),
            ids: summarize_ids(&all),
        });
    }

    let mut per_series = Vec::with_capacity(forecasts.len());
    let mut absent = Vec::new();
    for fc in forecasts {
        let (Some(series), Some(actual)) = (split.train.get(&fc.id), split.actual(&fc.id)) else {
            absent.push(fc.id.as_str());
            continue;
        };
        let bm = bench[fc.id.as_str()];
        let m = match seasonality {
            Seasonality::Fixed(m) => m,
            Seasonality::FromFrequency => series.frequency.seasonality(),
        };
        let with_id = |e: Error| match e {
            Error::UndefinedMetric { reason, .. } => Error::UndefinedMetric {
                id: fc.id.clone(),
                reason,
            },
            other => other,
        };
        let smape_f = smape(actual, &fc.values).map_err(with_id)?;
        let smape_b = smape(actual, &bm.values).map_err(with_id)?;
        let (mase_f, mase_b) = match mase_scale(&series.values, m) {
            Some(_) => (
                Some(mase(&series.values, actual, &fc.values, m).map_err(with_id)?),
                Some(mase(&series.values, actual, &bm.values, m).map_err(with_id)?),
            ),
            None => {
                warn!(
                    "{}: MASE undefined (flat in-sample at lag {m}); excluded from aggregate",
                    fc.id
                );
                (None, None)
            }
        };
        per_series.push(SeriesScore {
            id: fc.id.clone(),
            mase: mase_f,
            smape: smape_f,
            benchmark_mase: mase_b,
            benchmark_smape: smape_b,
        });
    }
    if !absent.is_empty() {
        return Err(Error::MissingIds {
            what: "test set".into(),
            ids: summarize_ids(&absent),
        });
    }

    let n = per_series.len() as f64;
    let defined: Vec<&SeriesScore> = per_series.iter().filter(|s| s.mase.is_some()).collect();
    let mean_of = |f: &dyn Fn(&SeriesScore) -> f64, set: &[&SeriesScore]| {
        if set.is_empty() {
            0.0
        } else {
            set.iter().map(|s| f(s)).sum::<f64>() / set.len() as f64
        }
    };
    let aggregate_mase = mean_of(&|s| s.mase.unwrap_or(0.0), &defined);
    let benchmark_mase = mean_of(&|s| s.benchmark_mase.unwrap_or(0.0), &defined);
    let aggregate_smape = per_series.iter().map(|s| s.smape).sum::<f64>() / n;
    let benchmark_smape = per_series.iter().map(|s| s.benchmark_smape).sum::<f64>() / n;
    let relative_mase = relative(aggregate_mase, benchmark_mase, "MASE")?;
    let relative_smape = relative(aggregate_smape, benchmark_smape, "sMAPE")?;
    Ok(MetricReport {
        series: per_series.len(),
        mase_series: defined.len(),
        aggregate_mase,
        aggregate_smape,
        benchmark_mase,
        benchmark_smape,
        relative_mase,
        relative_smape,
        owa: (relative_mase + relative_smape) / 2.0,
        per_series,
    })
}

/// Last-value forecasts for every training series, over each id's test length.
pub fn naive_benchmark(split: &HoldoutSplit) -> Result<Vec<Forecast>> {
    split
        .train
        .iter()
        .map(|s| {
            let h = split.actual(&s.id).map_or(s.horizon, <[f64]>::len);
            Ok(Forecast::new(
                s.id.clone(),
                naive_forecast(&s.values, h)?,
                Method::Naive,
            ))
        })
        .collect()
}

/// JSON with `aggregate` and `per_series` blocks. `generated_at` is omitted
/// when `None`.
pub fn write_report_json(
    path: impl AsRef<Path>,
    report: &MetricReport,
    generated_at: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    let mut aggregate = serde_json::to_value(report)?;
    let per_series = aggregate
        .as_object_mut()
        .and_then(|o| o.remove("per_series"))
        .unwrap_or_default();
    let mut doc = serde_json::json!({ "aggregate": aggregate, "per_series": per_series });
    if let Some(ts) = generated_at {
        doc["generated_at"] = serde_json::Value::from(ts);
    }
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub const SUMMARY_HEADER: &str =
    "series,mase_series,mase,smape,benchmark_mase,benchmark_smape,relative_mase,relative_smape,owa";

pub fn summary_row(r: &MetricReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.series,
        r.mase_series,
        r.aggregate_mase,
        r.aggregate_smape,
        r.benchmark_mase,
        r.benchmark_smape,
        r.relative_mase,
        r.relative_smape,
        r.owa
    )
}

pub fn write_report_csv(path: impl AsRef<Path>, report: &MetricReport) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut f = std::fs::File::create(path).map_err(io)?;
    writeln!(f, "{SUMMARY_HEADER}").map_err(io)?;
    writeln!(f, "{}", summary_row(report)).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{holdout_split, Dataset, TimeSeries};
    use proptest::prelude::*;

    #[test]
    fn mase_examples() {
        // numerator mean(|4-3|, |5-3|) = 1.5, denominator mean(1, 1) = 1
        assert_eq!(
            mase(&[1.0, 2.0, 3.0], &[4.0, 5.0], &[3.0, 3.0], 1).unwrap(),
            1.5
        );
        assert_eq!(
            mase(&[1.0, 2.0, 3.0], &[4.0, 5.0], &[4.0, 5.0], 1).unwrap(),
            0.0
        );
        assert!(matches!(
            mase(&[2.0; 5], &[4.0], &[3.0], 1),
            Err(Error::UndefinedMetric { .. })
        ));
        // lag 2 differences of [1, 5, 2, 6]: |2-1|, |6-5| -> scale 1
        assert_eq!(mase(&[1.0, 5.0, 2.0, 6.0], &[3.0], &[1.0], 2).unwrap(), 2.0);
    }

    #[test]
    fn smape_examples() {
        assert_eq!(smape(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        let v = smape(&[100.0], &[110.0]).unwrap();
        assert!((v - 200.0 * 10.0 / 210.0).abs() < 1e-12);
        assert!((v - 9.523809523809524).abs() < 1e-12);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!(smape(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn split() -> HoldoutSplit {
        let d = Dataset::new(vec![
            TimeSeries::new("D1", vec![1.0, 2.0, 3.0, 4.0, 6.0]),
            TimeSeries::new("D2", vec![10.0, 8.0, 9.0, 7.0, 7.0]),
            TimeSeries::new("D3", vec![5.0, 5.0, 5.0, 5.0, 6.0]),
        ])
        .unwrap();
        holdout_split(&d, 2).unwrap()
    }

    #[test]
    fn naive_against_itself_is_one() {
        let s = split();
        let naive = naive_benchmark(&s).unwrap();
        let r = owa_report(&naive, &naive, &s, Seasonality::Fixed(1)).unwrap();
        assert_eq!(r.relative_mase, 1.0);
        assert_eq!(r.relative_smape, 1.0);
        assert_eq!(r.owa, 1.0);
        assert_eq!(r.series, 3);
        assert_eq!(r.mase_series, 2);
    }

    #[test]
    fn aggregation_spreadsheet_check() {
        let s = split();
        let naive = naive_benchmark(&s).unwrap();
        let fc = vec![
            Forecast::new("D1", vec![4.0, 5.0], Method::Custom),
            Forecast::new("D2", vec![9.0, 9.0], Method::Custom),
            Forecast::new("D3", vec![5.0, 5.0], Method::Custom),
        ];
        let r = owa_report(&fc, &naive, &s, Seasonality::Fixed(1)).unwrap();
        // D1 train [1,2,3] scale 1, actual [4,6]: fc err (0,1) -> 0.5, naive [3,3] err (1,3) -> 2
        // D2 train [10,8,9] scale 1.5, actual [7,7]: fc err (2,2) -> 4/3, naive [9,9] -> 4/3
        // D3 train flat: MASE undefined
        let mase_fc = (0.5 + 4.0 / 3.0) / 2.0;
        let mase_nv = (2.0 + 4.0 / 3.0) / 2.0;
        let sm = |a: f64, f: f64| 200.0 * (f - a).abs() / (a.abs() + f.abs());
        let smape_fc = ((sm(4.0, 4.0) + sm(6.0, 5.0)) / 2.0
            + (sm(7.0, 9.0) + sm(7.0, 9.0)) / 2.0
            + (sm(5.0, 5.0) + sm(6.0, 5.0)) / 2.0)
            / 3.0;
        let smape_nv = ((sm(4.0, 3.0) + sm(6.0, 3.0)) / 2.0
            + (sm(7.0, 9.0) + sm(7.0, 9.0)) / 2.0
            + (sm(5.0, 5.0) + sm(6.0, 5.0)) / 2.0)
            / 3.0;
        assert!((r.aggregate_mase - mase_fc).abs() < 1e-12);
        assert!((r.benchmark_mase - mase_nv).abs() < 1e-12);
        assert!((r.aggregate_smape - smape_fc).abs() < 1e-12);
        assert!((r.benchmark_smape - smape_nv).abs() < 1e-12);
        let owa = (mase_fc / mase_nv + smape_fc / smape_nv) / 2.0;
        assert!((r.owa - owa).abs() < 1e-12);
        assert_eq!(r.per_series[2].mase, None);
    }

    #[test]
    fn mismatched_ids_rejected() {
        let s = split();
        let naive = naive_benchmark(&s).unwrap();
        let err = owa_report(&naive[..2], &naive, &s, Seasonality::Fixed(1)).unwrap_err();
        assert!(matches!(err, Error::MissingIds { ids, .. } if ids == "D3"));
        assert!(owa_report(&[], &[], &s, Seasonality::Fixed(1)).is_err());
    }

    #[test]
    fn permutation_invariant() {
        let s = split();
        let naive = naive_benchmark(&s).unwrap();
        let fc = vec![
            Forecast::new("D1", vec![4.0, 5.0], Method::Custom),
            Forecast::new("D2", vec![9.0, 9.0], Method::Custom),
            Forecast::new("D3", vec![5.0, 5.0], Method::Custom),
        ];
        let a = owa_report(&fc, &naive, &s, Seasonality::Fixed(1)).unwrap();
        let rev: Vec<Forecast> = fc.iter().rev().cloned().collect();
        let b = owa_report(&rev, &naive, &s, Seasonality::Fixed(1)).unwrap();
        assert!((a.aggregate_mase - b.aggregate_mase).abs() < 1e-15);
        assert!((a.aggregate_smape - b.aggregate_smape).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn smape_symmetric_and_bounded(
            pairs in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 1..30)
        ) {
            let (a, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let x = smape(&a, &f).unwrap();
            let y = smape(&f, &a).unwrap();
            prop_assert_eq!(x, y);
            prop_assert!((0.0..=200.0).contains(&x));
        }

        #[test]
        fn mase_scale_invariant(
            train in proptest::collection::vec(-1e3f64..1e3, 3..40),
            pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..15),
            c in 1e-3f64..1e3,
        ) {
            let (actual, fc): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(base) = mase(&train, &actual, &fc, 1) {
                let s = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
                let scaled = mase(&s(&train), &s(&actual), &s(&fc), 1).unwrap();
                prop_assert!((scaled - base).abs() <= 1e-12 * base.abs().max(1.0));
            }
        }
    }
}

//! Built-in statistical forecasters.

use std::fmt;

use log::warn;
use serde::Serialize;

use crate::{Error, Result};

/// Which method produced a forecast.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    Naive,
    Ses,
    Custom,
    Correlator,
    Ensemble,
    /// Forecasts injected from a CSV file, labelled by the file's member name.
    External(String),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Naive => f.write_str("Naive"),
            Method::Ses => f.write_str("SES"),
            Method::Custom => f.write_str("Custom"),
            Method::Correlator => f.write_str("Correlator"),
            Method::Ensemble => f.write_str("Ensemble"),
            Method::External(name) => write!(f, "External:{name}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Forecast {
    pub id: String,
    pub values: Vec<f64>,
    pub method: Method,
}

impl Forecast {
    pub fn new(id: impl Into<String>, values: Vec<f64>, method: Method) -> Self {
        Forecast {
            id: id.into(),
            values,
            method,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn require_values(values: &[f64], needed: usize) -> Result<()> {
    if values.len() < needed {
        return Err(Error::SeriesTooShort {
            id: String::new(),
            len: values.len(),
            needed,
        });
    }
    Ok(())
}

/// `h` copies of the last observation.
pub fn naive_forecast(values: &[f64], h: usize) -> Result<Vec<f64>> {
    require_values(values, 1)?;
    Ok(vec![values[values.len() - 1]; h])
}

/// Smoothing weights tried by [`ses_auto`]: 0.05, 0.10, ..., 0.95.
pub fn ses_alpha_grid() -> impl Iterator<Item = f64> {
    (1..=19).map(|k| k as f64 / 20.0)
}

fn ses_levels(values: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = values[0];
    let mut sse = 0.0;
    for &y in &values[1..] {
        let err = y - level;
        sse += err * err;
        level = alpha * y + (1.0 - alpha) * level;
    }
    (level, sse)
}

/// Simple exponential smoothing with a fixed weight: the level starts at the
/// first value and the forecast repeats the final level.
pub fn ses_forecast(values: &[f64], h: usize, alpha: f64) -> Result<Vec<f64>> {
    require_values(values, 1)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "smoothing weight must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(vec![ses_levels(values, alpha).0; h])
}

/// SES with the grid weight minimising in-sample one-step squared error
/// (smallest weight on ties). Returns the chosen weight and the forecast.
pub fn ses_auto(values: &[f64], h: usize) -> Result<(f64, Vec<f64>)> {
    require_values(values, 1)?;
    let mut best: Option<(f64, f64, f64)> = None;
    for alpha in ses_alpha_grid() {
        let (level, sse) = ses_levels(values, alpha);
        if best.is_none_or(|(_, _, b)| sse < b) {
            best = Some((alpha, level, sse));
        }
    }
    let (alpha, level, _) = best.expect("grid is non-empty");
    Ok((alpha, vec![level; h]))
}

/// Additive decomposition. Trend and residual are `NaN` where the centred
/// moving average is undefined (the first and last `period / 2` positions).
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub period: usize,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    /// Seasonal value for each phase `i % period`.
    pub seasonal_by_phase: Vec<f64>,
}

impl Decomposition {
    /// Range of positions where trend and residual are defined.
    pub fn interior(&self) -> std::ops::Range<usize> {
        let half = self.period / 2;
        half..self.trend.len() - half
    }
}

/// Classical additive decomposition: centred moving-average trend (weights
/// `0.25, 0.5, 0.25` for period 2), zero-mean per-phase seasonal averages of
/// the detrended series, and the remainder as residual.
pub fn decompose_classical(values: &[f64], period: usize) -> Result<Decomposition> {
    if period < 2 {
        return Err(Error::invalid(format!(
            "period must be at least 2, got {period}"
        )));
    }
    require_values(values, 2 * period)?;
    let n = values.len();
    let filter: Vec<f64> = if period.is_multiple_of(2) {
        let mut f = vec![1.0 / period as f64; period + 1];
        f[0] /= 2.0;
        f[period] /= 2.0;
        f
    } else {
        vec![1.0 / period as f64; period]
    };
    let half = filter.len() / 2;
    let mut trend = vec![f64::NAN; n];
    for (t, slot) in trend.iter_mut().enumerate().take(n - half).skip(half) {
        *slot = filter
            .iter()
            .zip(&values[t - half..])
            .map(|(w, v)| w * v)
            .sum();
    }

    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for t in half..n - half {
        sums[t % period] += values[t] - trend[t];
        counts[t % period] += 1;
    }
    let mut by_phase: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let centre = by_phase.iter().sum::<f64>() / period as f64;
    for v in &mut by_phase {
        *v -= centre;
    }
    let seasonal: Vec<f64> = (0..n).map(|t| by_phase[t % period]).collect();
    let residual = (0..n).map(|t| values[t] - trend[t] - seasonal[t]).collect();
    Ok(Decomposition {
        period,
        trend,
        seasonal,
        residual,
        seasonal_by_phase: by_phase,
    })
}

/// Least-squares line through `tail` at positions `1..=w`, evaluated at
/// `w + 1..=w + h`.
pub fn linear_extrapolate(tail: &[f64], h: usize) -> Result<Vec<f64>> {
    linear_extrapolate_after_gap(tail, 0, h)
}

/// As [`linear_extrapolate`], but the first forecast lies `gap` positions
/// past `w + 1`.
pub fn linear_extrapolate_after_gap(tail: &[f64], gap: usize, h: usize) -> Result<Vec<f64>> {
    require_values(tail, 2)?;
    let w = tail.len() as f64;
    let x_mean = (w + 1.0) / 2.0;
    let y_mean = tail.iter().sum::<f64>() / w;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in tail.iter().enumerate() {
        let dx = (i + 1) as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    Ok((1..=h)
        .map(|i| intercept + slope * (w + (gap + i) as f64))
        .collect())
}

/// Values per component used by the custom method's strategies.
pub const CUSTOM_WINDOW: usize = 14;
/// Seasonal period of the custom method's decomposition.
pub const CUSTOM_PERIOD: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ComponentStrategy {
    /// Straight line fitted to the last defined values.
    Linear,
    /// The last defined values, tiled or truncated to the horizon.
    Repeat,
}

pub type StrategyPair = (ComponentStrategy, ComponentStrategy);

const STRATEGY_COMBINATIONS: [StrategyPair; 4] = [
    (ComponentStrategy::Linear, ComponentStrategy::Linear),
    (ComponentStrategy::Linear, ComponentStrategy::Repeat),
    (ComponentStrategy::Repeat, ComponentStrategy::Linear),
    (ComponentStrategy::Repeat, ComponentStrategy::Repeat),
];

fn component_forecast(
    component: &[f64],
    interior: std::ops::Range<usize>,
    strategy: ComponentStrategy,
    h: usize,
) -> Result<Vec<f64>> {
    let n = component.len();
    let start = interior
        .end
        .saturating_sub(CUSTOM_WINDOW)
        .max(interior.start);
    let tail = &component[start..interior.end];
    match strategy {
        ComponentStrategy::Linear => linear_extrapolate_after_gap(tail, n - interior.end, h),
        ComponentStrategy::Repeat => {
            require_values(tail, 1)?;
            Ok((0..h).map(|i| tail[i % tail.len()]).collect())
        }
    }
}

fn decomposition_forecast(
    d: &Decomposition,
    (trend_s, resid_s): (ComponentStrategy, ComponentStrategy),
    h: usize,
) -> Result<Vec<f64>> {
    let n = d.trend.len();
    let trend = component_forecast(&d.trend, d.interior(), trend_s, h)?;
    let resid = component_forecast(&d.residual, d.interior(), resid_s, h)?;
    Ok((0..h)
        .map(|i| trend[i] + resid[i] + d.seasonal_by_phase[(n + i) % d.period])
        .collect())
}

/// Decomposition-based forecast with per-component strategy selection.
///
/// All four trend/residual strategy pairs are scored on the last `h` values
/// of the input; the winner is refit on the whole series. Series shorter
/// than `2h + 4` fall back to the naive forecast.
pub fn custom_forecast(values: &[f64], h: usize) -> Result<Vec<f64>> {
    custom_forecast_with_choice(values, h).map(|(fc, _)| fc)
}

/// [`custom_forecast`] together with the selected `(trend, residual)`
/// strategies, or `None` when the naive fallback was used.
pub fn custom_forecast_with_choice(
    values: &[f64],
    h: usize,
) -> Result<(Vec<f64>, Option<StrategyPair>)> {
    require_values(values, 1)?;
    let n = values.len();
    if n < 2 * h + 4 {
        warn!(
            "custom method needs at least {} values, got {n}; using naive",
            2 * h + 4
        );
        return Ok((naive_forecast(values, h)?, None));
    }
    let (train, valid) = values.split_at(n - h);
    let inner = decompose_classical(train, CUSTOM_PERIOD)?;
    // Every pair is scaled by the same in-sample MASE denominator, so ranking
    // by mean absolute error gives the same winner and survives a flat train.
    let mut best: Option<((ComponentStrategy, ComponentStrategy), f64)> = None;
    for combo in STRATEGY_COMBINATIONS {
        let fc = decomposition_forecast(&inner, combo, h)?;
        let mae = fc
            .iter()
            .zip(valid)
            .map(|(f, y)| (f - y).abs())
            .sum::<f64>()
            / h as f64;
        if best.is_none_or(|(_, b)| mae < b) {
            best = Some((combo, mae));
        }
    }
    let (combo, _) = best.expect("four combinations scored");
    let full = decompose_classical(values, CUSTOM_PERIOD)?;
    Ok((decomposition_forecast(&full, combo, h)?, Some(combo)))
}

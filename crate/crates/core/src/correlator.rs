//! Forecasting by correlated windows.
//!
//! For a target series the last `w` values are compared against every window
//! in the dataset that is followed by at least a full continuation. Windows
//! are visited best-first; the first one whose remapped continuation passes
//! the spread check becomes the forecast.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, TimeSeries};
use crate::stats::{self, rolling_stats, NormalizedQuery, RollingStats};
use crate::{Error, Result};

/// With `bug1` set, only the first this-many series (by file position) are
/// eligible targets.
pub const BUG1_CUTOFF: usize = 2138;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelatorParams {
    /// Length of the matched window.
    pub window: usize,
    /// Minimum correlation for a window to be considered.
    pub r_threshold: f64,
    /// Maximum ratio between the forecast's std and the reference std;
    /// `None` disables the check.
    pub std_ratio: Option<f64>,
    /// Only the first [`BUG1_CUTOFF`] series are forecast.
    pub bug1: bool,
    /// Spread check uses the source window's std instead of the target tail's.
    pub bug2: bool,
    /// Skip source regions that reach the target's forecast dates.
    pub past_only: bool,
    /// Whether the target's own non-terminal windows are candidates.
    pub include_self: bool,
    /// Number of continuation values (forecast length); defaults to `window`.
    pub continuation: Option<usize>,
}

impl Default for CorrelatorParams {
    fn default() -> Self {
        CorrelatorParams {
            window: 14,
            r_threshold: 0.9999,
            std_ratio: Some(2.5),
            bug1: false,
            bug2: false,
            past_only: false,
            include_self: true,
            continuation: None,
        }
    }
}

impl CorrelatorParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::invalid(format!(
                "window must be at least 2, got {}",
                self.window
            )));
        }
        if !(self.r_threshold > 0.0 && self.r_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "r_threshold must lie in (0, 1], got {}",
                self.r_threshold
            )));
        }
        if let Some(ratio) = self.std_ratio {
            if !(ratio > 0.0 && ratio.is_finite()) {
                return Err(Error::invalid(format!(
                    "std_ratio must be positive, got {ratio}"
                )));
            }
        }
        if self.continuation == Some(0) {
            return Err(Error::invalid("continuation length must be positive"));
        }
        Ok(())
    }

    pub fn continuation_len(&self) -> usize {
        self.continuation.unwrap_or(self.window)
    }
}

/// A window that correlates with a target's tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    /// File position of the source series.
    pub source: usize,
    /// Exclusive end offset of the source window.
    pub tau: usize,
    pub r: f64,
}

impl Candidate {
    /// Descending `r`, then ascending source, then ascending `tau`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .r
            .total_cmp(&self.r)
            .then(self.source.cmp(&other.source))
            .then(self.tau.cmp(&other.tau))
    }
}

#[derive(Clone, Copy, Debug)]
struct Ranked(Candidate);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// An accepted correlator forecast.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelatorMatch {
    pub target_id: String,
    pub source_id: String,
    /// File positions (0-based).
    pub target: usize,
    pub source: usize,
    pub tau: usize,
    pub r: f64,
    pub forecast: Vec<f64>,
    /// First and last date of the source window plus continuation.
    pub source_dates: Option<(NaiveDate, NaiveDate)>,
    /// Whether the source region reaches the target's forecast dates.
    pub used_future: Option<bool>,
}

/// Rolling statistics for every series, built once per dataset and window.
pub struct ScanIndex<'a> {
    dataset: &'a Dataset,
    window: usize,
    stats: Vec<Option<RollingStats>>,
}

impl<'a> ScanIndex<'a> {
    pub fn new(dataset: &'a Dataset, window: usize) -> Self {
        let stats = dataset
            .series()
            .par_iter()
            .map(|s| rolling_stats(&s.values, window).ok())
            .collect();
        ScanIndex {
            dataset,
            window,
            stats,
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stats(&self, k: usize) -> Option<&RollingStats> {
        self.stats[k].as_ref()
    }
}

const FIRST_BATCH: usize = 64;
const MAX_BATCH: usize = 1 << 16;

/// Candidates for one target in rank order, produced lazily.
///
/// Each refill rescans the dataset and keeps the best `batch` candidates that
/// rank after the last one handed out, so memory stays bounded however many
/// windows clear the threshold.
pub struct CandidateStream<'i, 'a> {
    index: &'i ScanIndex<'a>,
    target: usize,
    query: Option<NormalizedQuery>,
    threshold: f64,
    continuation: usize,
    include_self: bool,
    buffer: VecDeque<Candidate>,
    last: Option<Candidate>,
    batch: usize,
    exhausted: bool,
}

impl<'i, 'a> CandidateStream<'i, 'a> {
    /// Statistics of the target tail, when it is usable as a query.
    pub fn query(&self) -> Option<&NormalizedQuery> {
        self.query.as_ref()
    }

    fn refill(&mut self) {
        let Some(query) = &self.query else {
            self.exhausted = true;
            return;
        };
        let w = query.len();
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(self.batch + 1);
        let dataset = self.index.dataset();
        for (k, series) in dataset.series().iter().enumerate() {
            if k == self.target && !self.include_self {
                continue;
            }
            let Some(rs) = self.index.stats(k) else {
                continue;
            };
            let n = series.len();
            if n < w + self.continuation {
                continue;
            }
            // window start i covers values[i..i + w], tau = i + w
            for i in 0..=(n - w - self.continuation) {
                if !rs.is_valid(i) {
                    continue;
                }
                let r = query.correlate(&series.values[i..i + w], rs.means[i], rs.stds[i]);
                if r < self.threshold {
                    continue;
                }
                let cand = Candidate {
                    source: k,
                    tau: i + w,
                    r,
                };
                if let Some(last) = &self.last {
                    if cand.rank_cmp(last) != Ordering::Greater {
                        continue;
                    }
                }
                if heap.len() < self.batch {
                    heap.push(Ranked(cand));
                } else if let Some(worst) = heap.peek() {
                    if cand.rank_cmp(&worst.0) == Ordering::Less {
                        heap.pop();
                        heap.push(Ranked(cand));
                    }
                }
            }
        }
        if heap.len() < self.batch {
            self.exhausted = true;
        }
        self.buffer
            .extend(heap.into_sorted_vec().into_iter().map(|r| r.0));
        self.batch = (self.batch * 4).min(MAX_BATCH);
    }
}

impl Iterator for CandidateStream<'_, '_> {
    type Item = Candidate;

    fn next(&mut self) -> Option<Candidate> {
        if self.buffer.is_empty() && !self.exhausted {
            self.refill();
        }
        let next = self.buffer.pop_front()?;
        self.last = Some(next);
        Some(next)
    }
}

/// Windows correlating with target `j`'s tail at or above the threshold,
/// best first. Empty when the tail is constant or shorter than the window.
pub fn candidate_stream<'i, 'a>(
    index: &'i ScanIndex<'a>,
    j: usize,
    params: &CorrelatorParams,
) -> CandidateStream<'i, 'a> {
    let target = &index.dataset().series()[j];
    let w = index.window();
    let query = (target.len() >= w)
        .then(|| NormalizedQuery::new(&target.values[target.len() - w..]).ok())
        .flatten();
    CandidateStream {
        index,
        target: j,
        query,
        threshold: params.r_threshold,
        continuation: params.continuation_len(),
        include_self: params.include_self,
        buffer: VecDeque::new(),
        last: None,
        batch: FIRST_BATCH,
        exhausted: false,
    }
}

/// `(x - source_mean) * target_std / source_std + target_mean` elementwise.
pub fn affine_map(
    source_values: &[f64],
    source_mean: f64,
    source_std: f64,
    target_mean: f64,
    target_std: f64,
) -> Result<Vec<f64>> {
    if source_std.is_nan() || source_std <= 0.0 {
        return Err(Error::invalid(format!(
            "source std must be positive, got {source_std}"
        )));
    }
    let scale = target_std / source_std;
    Ok(source_values
        .iter()
        .map(|x| (x - source_mean) * scale + target_mean)
        .collect())
}

/// Dates covered by the source window and its continuation.
fn source_span(
    source: &TimeSeries,
    tau: usize,
    window: usize,
    continuation: usize,
) -> Option<(NaiveDate, NaiveDate)> {
    Some((
        source.date_of(tau - window)?,
        source.date_of(tau + continuation - 1)?,
    ))
}

/// True when the source region has a date on or after the target's first
/// forecast date; `None` when either series lacks a start date.
pub fn uses_future(
    target: &TimeSeries,
    source: &TimeSeries,
    tau: usize,
    window: usize,
    continuation: usize,
) -> Option<bool> {
    let (_, last) = source_span(source, tau, window, continuation)?;
    Some(last >= target.first_forecast_date()?)
}

/// Walks the candidate stream once and reports, for each entry of `ratios`,
/// the first candidate whose forecast passes that spread limit.
///
/// A candidate that passes a limit passes every looser one, so a single walk
/// serves a whole grid of limits. `None` in `ratios` accepts the first
/// candidate outright.
pub fn first_accepted(
    index: &ScanIndex<'_>,
    j: usize,
    params: &CorrelatorParams,
    ratios: &[Option<f64>],
) -> Vec<Option<CorrelatorMatch>> {
    let mut found: Vec<Option<CorrelatorMatch>> = vec![None; ratios.len()];
    if ratios.is_empty() || (params.bug1 && j >= BUG1_CUTOFF) {
        return found;
    }
    let dataset = index.dataset();
    let target = &dataset.series()[j];
    let w = params.window;
    let cont = params.continuation_len();
    let mut stream = candidate_stream(index, j, params);
    let Some(query) = stream.query().cloned() else {
        return found;
    };
    let mut remaining = ratios.len();
    for cand in stream.by_ref() {
        let source = &dataset.series()[cand.source];
        let used_future = uses_future(target, source, cand.tau, w, cont);
        if params.past_only && used_future == Some(true) {
            continue;
        }
        let Some(rs) = index.stats(cand.source) else {
            continue;
        };
        let start = cand.tau - w;
        let (src_mean, src_std) = (rs.means[start], rs.stds[start]);
        let Ok(forecast) = affine_map(
            &source.values[cand.tau..cand.tau + cont],
            src_mean,
            src_std,
            query.mean,
            query.std,
        ) else {
            continue;
        };
        let forecast_std = stats::std(&forecast);
        let reference = if params.bug2 { src_std } else { query.std };
        let mut built: Option<CorrelatorMatch> = None;
        for (slot, ratio) in found.iter_mut().zip(ratios) {
            if slot.is_some() {
                continue;
            }
            let pass = match ratio {
                None => true,
                Some(ratio) => forecast_std <= ratio * reference,
            };
            if pass {
                let m = built.get_or_insert_with(|| CorrelatorMatch {
                    target_id: target.id.clone(),
                    source_id: source.id.clone(),
                    target: j,
                    source: cand.source,
                    tau: cand.tau,
                    r: cand.r,
                    forecast: forecast.clone(),
                    source_dates: source_span(source, cand.tau, w, cont),
                    used_future,
                });
                *slot = Some(m.clone());
                remaining -= 1;
            }
        }
        if remaining == 0 {
            break;
        }
    }
    found
}

/// Correlator forecast for the series at file position `j`, if any
/// candidate is accepted.
pub fn correlator_forecast(
    index: &ScanIndex<'_>,
    j: usize,
    params: &CorrelatorParams,
) -> Option<CorrelatorMatch> {
    first_accepted(index, j, params, &[params.std_ratio])
        .pop()
        .flatten()
}

/// Runs the correlator on every series. Entry `j` corresponds to file
/// position `j`; the result does not depend on the thread count.
pub fn run_correlator(
    dataset: &Dataset,
    params: &CorrelatorParams,
) -> Result<Vec<Option<CorrelatorMatch>>> {
    params.validate()?;
    let index = ScanIndex::new(dataset, params.window);
    Ok((0..dataset.len())
        .into_par_iter()
        .map(|j| correlator_forecast(&index, j, params))
        .collect())
}

/// As [`run_correlator`], but target `j` forecasts `horizons[j]` values
/// unless `params.continuation` fixes the length.
pub fn run_correlator_with_horizons(
    dataset: &Dataset,
    params: &CorrelatorParams,
    horizons: &[usize],
) -> Result<Vec<Option<CorrelatorMatch>>> {
    params.validate()?;
    if horizons.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            expected: dataset.len(),
            actual: horizons.len(),
        });
    }
    let index = ScanIndex::new(dataset, params.window);
    Ok((0..dataset.len())
        .into_par_iter()
        .map(|j| {
            let p = CorrelatorParams {
                continuation: params.continuation.or(Some(horizons[j])),
                ..params.clone()
            };
            correlator_forecast(&index, j, &p)
        })
        .collect())
}

pub fn accepted_count(matches: &[Option<CorrelatorMatch>]) -> usize {
    matches.iter().filter(|m| m.is_some()).count()
}

/// Writes `target_id,source_id,tau,r,used_future` rows for accepted matches.
pub fn write_match_csv(
    path: impl AsRef<std::path::Path>,
    matches: &[Option<CorrelatorMatch>],
) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let file = std::fs::File::create(path).map_err(io)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "target_id,source_id,tau,r,used_future").map_err(io)?;
    for m in matches.iter().flatten() {
        let used = m.used_future.map(|b| b.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            m.target_id, m.source_id, m.tau, m.r, used
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

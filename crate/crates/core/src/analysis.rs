//! Whole-overlap cross-correlation audit.
//!
//! For every series `j` the full history is aligned against every end offset
//! `tau` of every series `k`; the overlap is the last `min(n_j, tau)` values
//! of `j` against the same number of values of `k` ending at `tau`. The best
//! alignment per `j` is kept, filtered by a threshold and an exclusion list,
//! and the surviving pairs are sorted into leakage categories.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use log::debug;
use rayon::prelude::*;
use serde::Serialize;

use crate::correlator::CorrelatorMatch;
use crate::dataset::Dataset;
use crate::stats::{self, cross_terms_direct, FftCrossTerms};
use crate::{Error, Result};

/// Smallest admissible `tau`, and the number of values of `k` that must
/// follow it.
pub const DEFAULT_MARGIN: usize = 14;
pub const DEFAULT_THRESHOLD: f64 = 0.995;
pub const DEFAULT_FFT_OVERLAP: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Direct products for short overlaps, FFT above the overlap threshold.
    Auto,
    Direct,
    Fft,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanOptions {
    pub margin: usize,
    pub backend: Backend,
    pub fft_overlap_threshold: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            margin: DEFAULT_MARGIN,
            backend: Backend::Auto,
            fft_overlap_threshold: DEFAULT_FFT_OVERLAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GlobalMatch {
    /// File positions (0-based).
    pub j: usize,
    pub k: usize,
    pub tau: usize,
    pub r_prime: f64,
    pub overlap: usize,
}

/// Correlation over the whole overlap of `j`'s end with `k` ending at `tau`.
pub fn global_cross_correlation(d: &Dataset, j: usize, k: usize, tau: usize) -> Result<f64> {
    let (a, b) = overlap_segments(d, j, k, tau)?;
    stats::pearson(a, b)
}

fn overlap_segments(d: &Dataset, j: usize, k: usize, tau: usize) -> Result<(&[f64], &[f64])> {
    let n = d.len();
    if j >= n || k >= n {
        return Err(Error::invalid(format!(
            "series index out of range ({j}, {k}) for {n} series"
        )));
    }
    let a = &d.series()[j].values;
    let b = &d.series()[k].values;
    if tau == 0 || tau > b.len() {
        return Err(Error::invalid(format!("tau {tau} outside 1..={}", b.len())));
    }
    let l = a.len().min(tau);
    Ok((&a[a.len() - l..], &b[tau - l..tau]))
}

/// Globally standardised values with prefix sums of `z` and `z^2`.
struct Prepared {
    z: Vec<f64>,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Prepared {
    fn new(x: &[f64]) -> Option<Self> {
        if x.len() < 2 {
            return None;
        }
        let m = stats::mean(x);
        let s = stats::std(x);
        if s <= stats::eps_std(m) {
            return None;
        }
        let z: Vec<f64> = x.iter().map(|v| (v - m) / s).collect();
        let mut sum = Vec::with_capacity(z.len() + 1);
        let mut sq = Vec::with_capacity(z.len() + 1);
        let (mut acc, mut acc2) = (0.0, 0.0);
        sum.push(0.0);
        sq.push(0.0);
        for v in &z {
            acc += v;
            acc2 += v * v;
            sum.push(acc);
            sq.push(acc2);
        }
        Some(Prepared { z, sum, sq })
    }

    fn len(&self) -> usize {
        self.z.len()
    }

    fn range(&self, lo: usize, hi: usize) -> (f64, f64) {
        (self.sum[hi] - self.sum[lo], self.sq[hi] - self.sq[lo])
    }
}

/// Centred sum of squares, or `None` when the segment is flat relative to
/// the series' global spread.
#[inline]
fn centred_ss(s: f64, ss: f64, l: f64) -> Option<f64> {
    let m = s / l;
    let v = ss - s * m;
    let tol = 1e-6 * (1.0 + m.abs());
    (v > tol * tol * l).then_some(v)
}

#[derive(Clone, Copy)]
struct Best {
    k: usize,
    tau: usize,
    r: f64,
}

fn scan_pair(
    pj: &Prepared,
    k: usize,
    pk: &Prepared,
    cross: &[f64],
    margin: usize,
    best: &mut Option<Best>,
) {
    let nj = pj.len();
    let nk = pk.len();
    for tau in margin..=nk - margin {
        let l = nj.min(tau);
        let lf = l as f64;
        let (sa, saa) = pj.range(nj - l, nj);
        let (sb, sbb) = pk.range(tau - l, tau);
        let (Some(va), Some(vb)) = (centred_ss(sa, saa, lf), centred_ss(sb, sbb, lf)) else {
            continue;
        };
        let cov = cross[tau - 1] - sa * sb / lf;
        let r = (cov / (va * vb).sqrt()).clamp(-1.0, 1.0);
        if best.is_none_or(|b| r > b.r) {
            *best = Some(Best { k, tau, r });
        }
    }
}

fn use_fft(opts: &ScanOptions, nj: usize, nk: usize) -> bool {
    match opts.backend {
        Backend::Direct => false,
        Backend::Fft => true,
        Backend::Auto => nj.min(nk - opts.margin) > opts.fft_overlap_threshold,
    }
}

fn best_for(j: usize, prepared: &[Option<Prepared>], opts: &ScanOptions) -> Option<Best> {
    let pj = prepared[j].as_ref()?;
    let admissible = |k: usize| prepared[k].as_ref().filter(|p| p.len() >= 2 * opts.margin);
    let mut fft: Option<FftCrossTerms> = None;
    let mut best = None;
    let mut k = 0;
    while k < prepared.len() {
        let Some(pk) = admissible(k) else {
            k += 1;
            continue;
        };
        if !use_fft(opts, pj.len(), pk.len()) {
            let cross = cross_terms_direct(&pj.z, &pk.z);
            scan_pair(pj, k, pk, &cross, opts.margin, &mut best);
            k += 1;
            continue;
        }
        let engine = fft.get_or_insert_with(|| FftCrossTerms::new(&pj.z));
        // pack the next FFT-eligible series into the imaginary part
        let partner = (k + 1..prepared.len())
            .find(|&m| admissible(m).is_some())
            .filter(|&m| {
                use_fft(
                    opts,
                    pj.len(),
                    prepared[m].as_ref().map_or(0, Prepared::len),
                )
            });
        match partner {
            Some(m) => {
                let pm = prepared[m].as_ref().expect("admissible");
                let (c1, c2) = engine.cross_terms_pair(&pk.z, &pm.z);
                scan_pair(pj, k, pk, &c1, opts.margin, &mut best);
                scan_pair(pj, m, pm, &c2, opts.margin, &mut best);
                k = m + 1;
            }
            None => {
                let c = engine.cross_terms(&pk.z);
                scan_pair(pj, k, pk, &c, opts.margin, &mut best);
                k += 1;
            }
        }
    }
    best
}

/// The best alignment of every series whose whole-overlap correlation
/// reaches `threshold`, in file order. Exclusions are not applied.
pub fn global_best_matches(
    d: &Dataset,
    threshold: f64,
    opts: &ScanOptions,
) -> Result<Vec<GlobalMatch>> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!(
            "threshold {threshold} outside [-1, 1]"
        )));
    }
    if opts.margin == 0 {
        return Err(Error::invalid("margin must be at least 1"));
    }
    let prepared: Vec<Option<Prepared>> = d
        .series()
        .par_iter()
        .map(|s| Prepared::new(&s.values))
        .collect();
    let found: Vec<Option<GlobalMatch>> = (0..d.len())
        .into_par_iter()
        .map(|j| {
            let best = best_for(j, &prepared, opts)?;
            // the moment form only ranks; report the two-pass value
            let r = match global_cross_correlation(d, j, best.k, best.tau) {
                Ok(r) => r,
                Err(e) => {
                    debug!(
                        "{}: best alignment rejected on recomputation: {e}",
                        d.series()[j].id
                    );
                    return None;
                }
            };
            (r >= threshold).then(|| GlobalMatch {
                j,
                k: best.k,
                tau: best.tau,
                r_prime: r,
                overlap: d.series()[j].len().min(best.tau),
            })
        })
        .collect();
    Ok(found.into_iter().flatten().collect())
}

/// Exclusions are `(j_id, k_id)` pairs; an excluded best alignment drops
/// `j` from the result rather than promoting its runner-up.
pub fn find_global_matches(
    d: &Dataset,
    threshold: f64,
    exclusions: &HashSet<(String, String)>,
    opts: &ScanOptions,
) -> Result<Vec<GlobalMatch>> {
    let mut matches = global_best_matches(d, threshold, opts)?;
    apply_exclusions(d, &mut matches, exclusions);
    Ok(matches)
}

pub fn apply_exclusions(
    d: &Dataset,
    matches: &mut Vec<GlobalMatch>,
    exclusions: &HashSet<(String, String)>,
) {
    if exclusions.is_empty() {
        return;
    }
    let ids = d.series();
    matches.retain(|m| !exclusions.contains(&(ids[m.j].id.clone(), ids[m.k].id.clone())));
}

/// Reads `(j_id, k_id)` pairs; a header row is skipped when present.
pub fn load_exclusions(path: impl AsRef<Path>) -> Result<HashSet<(String, String)>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut out = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let (Some(a), Some(b)) = (rec.get(0), rec.get(1)) else {
            if rec.iter().all(str::is_empty) {
                continue;
            }
            return Err(Error::Parse {
                path: path.into(),
                row: (i + 1).to_string(),
                column: 2,
                message: "expected two ids".into(),
            });
        };
        if i == 0
            && matches!(
                a.to_ascii_lowercase().as_str(),
                "j" | "j_id" | "id" | "target" | "target_id"
            )
        {
            continue;
        }
        out.insert((a.to_string(), b.to_string()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Category {
    /// A series correlated with itself.
    T1,
    /// Both directions of the pair are present.
    T2,
    /// Overlapping regions carry the same dates.
    T3,
    /// Overlapping regions carry different dates.
    T4,
    /// Not T1 or T2, and a start date is missing.
    DateUnknown,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::T1,
        Category::T2,
        Category::T3,
        Category::T4,
        Category::DateUnknown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::T1 => "T1",
            Category::T2 => "T2",
            Category::T3 => "T3",
            Category::T4 => "T4",
            Category::DateUnknown => "date_unknown",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Category of every match, in input order.
pub fn categorize(d: &Dataset, matches: &[GlobalMatch]) -> Vec<Category> {
    let pairs: HashSet<(usize, usize)> = matches.iter().map(|m| (m.j, m.k)).collect();
    matches
        .iter()
        .map(|m| {
            if m.j == m.k {
                return Category::T1;
            }
            if pairs.contains(&(m.k, m.j)) {
                return Category::T2;
            }
            let sj = &d.series()[m.j];
            let sk = &d.series()[m.k];
            // equal overlap lengths, so equal end dates mean equal ranges
            match (sj.date_of(sj.len() - 1), sk.date_of(m.tau - 1)) {
                (Some(a), Some(b)) if a == b => Category::T3,
                (Some(_), Some(_)) => Category::T4,
                _ => Category::DateUnknown,
            }
        })
        .collect()
}

/// Counts of `overlap` in bins `[b * width, (b + 1) * width)`, from bin 0 up
/// to the last occupied bin.
pub fn overlap_histogram(matches: &[GlobalMatch], bin_width: usize) -> Result<Vec<usize>> {
    if bin_width == 0 {
        return Err(Error::invalid("bin width must be at least 1"));
    }
    let Some(max) = matches.iter().map(|m| m.overlap).max() else {
        return Ok(Vec::new());
    };
    let mut counts = vec![0; max / bin_width + 1];
    for m in matches {
        counts[m.overlap / bin_width] += 1;
    }
    Ok(counts)
}

/// Fraction of accepted correlator matches whose source region reaches the
/// target's forecast dates.
pub fn future_use_stats(matches: &[Option<CorrelatorMatch>]) -> Result<f64> {
    let accepted: Vec<&CorrelatorMatch> = matches.iter().flatten().collect();
    if accepted.is_empty() {
        return Ok(0.0);
    }
    let mut used = 0usize;
    for m in &accepted {
        match m.used_future {
            Some(true) => used += 1,
            Some(false) => {}
            None => {
                return Err(Error::MissingDates(format!(
                    "no start date for {} or {}; pass the series info file (--info) to compute future use",
                    m.target_id, m.source_id
                )))
            }
        }
    }
    Ok(used as f64 / accepted.len() as f64)
}

#[derive(Clone, Debug)]
pub struct LeakageReport {
    pub set_c: Vec<GlobalMatch>,
    /// Parallel to `set_c`.
    pub labels: Vec<Category>,
    pub categories: BTreeMap<Category, Vec<GlobalMatch>>,
    pub bin_width: usize,
    pub histogram: Vec<usize>,
    /// Best alignments at or above the threshold before exclusions.
    pub before_exclusions: usize,
    pub future_use_fraction: Option<f64>,
}

impl LeakageReport {
    pub fn new(
        d: &Dataset,
        set_c: Vec<GlobalMatch>,
        before_exclusions: usize,
        bin_width: usize,
        future_use_fraction: Option<f64>,
    ) -> Result<Self> {
        let labels = categorize(d, &set_c);
        let mut categories: BTreeMap<Category, Vec<GlobalMatch>> =
            Category::ALL.iter().map(|&c| (c, Vec::new())).collect();
        for (m, c) in set_c.iter().zip(&labels) {
            categories
                .get_mut(c)
                .expect("all categories present")
                .push(m.clone());
        }
        let histogram = overlap_histogram(&set_c, bin_width)?;
        Ok(LeakageReport {
            set_c,
            labels,
            categories,
            bin_width,
            histogram,
            before_exclusions,
            future_use_fraction,
        })
    }

    pub fn count(&self, c: Category) -> usize {
        self.categories.get(&c).map_or(0, Vec::len)
    }

    pub fn max_overlap(&self) -> usize {
        self.set_c.iter().map(|m| m.overlap).max().unwrap_or(0)
    }

    /// Writes `matches.csv`, `histogram.csv` and `summary.json` into `dir`.
    pub fn write(&self, d: &Dataset, dir: &Path, generated_at: Option<&str>) -> Result<()> {
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |e| Error::io(p, e)
        };

        let path = dir.join("matches.csv");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io(&path))?);
        writeln!(out, "j,k,tau,r,overlap,category").map_err(io(&path))?;
        for (m, c) in self.set_c.iter().zip(&self.labels) {
            let (j, k) = (&d.series()[m.j].id, &d.series()[m.k].id);
            writeln!(out, "{j},{k},{},{},{},{c}", m.tau, m.r_prime, m.overlap)
                .map_err(io(&path))?;
        }
        out.flush().map_err(io(&path))?;

        let path = dir.join("histogram.csv");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io(&path))?);
        writeln!(out, "bin_start,bin_end,count").map_err(io(&path))?;
        for (b, n) in self.histogram.iter().enumerate() {
            writeln!(
                out,
                "{},{},{n}",
                b * self.bin_width,
                (b + 1) * self.bin_width
            )
            .map_err(io(&path))?;
        }
        out.flush().map_err(io(&path))?;

        let counts: serde_json::Map<String, serde_json::Value> = Category::ALL
            .iter()
            .map(|&c| (c.label().to_string(), self.count(c).into()))
            .collect();
        let mut doc = serde_json::json!({
            "set_c": self.set_c.len(),
            "before_exclusions": self.before_exclusions,
            "counts": counts,
            "max_overlap": self.max_overlap(),
            "future_use_fraction": self.future_use_fraction,
        });
        if let Some(ts) = generated_at {
            doc["generated_at"] = ts.into();
        }
        let path = dir.join("summary.json");
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n").map_err(io(&path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{correlator_forecast, run_correlator, CorrelatorParams, ScanIndex};
    use crate::dataset::TimeSeries;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(0.0..10.0)).collect()
    }

    fn dataset(series: Vec<Vec<f64>>) -> Dataset {
        Dataset::new(
            series
                .into_iter()
                .enumerate()
                .map(|(i, v)| TimeSeries::new(format!("D{}", i + 1), v))
                .collect(),
        )
        .unwrap()
    }

    /// Every admissible (j, k, tau), scored by two-pass Pearson.
    fn brute_force(d: &Dataset, margin: usize) -> Vec<Option<(usize, usize, f64)>> {
        (0..d.len())
            .map(|j| {
                let mut best: Option<(usize, usize, f64)> = None;
                for k in 0..d.len() {
                    let nk = d.series()[k].len();
                    if nk < 2 * margin {
                        continue;
                    }
                    for tau in margin..=nk - margin {
                        if let Ok(r) = global_cross_correlation(d, j, k, tau) {
                            if best.is_none_or(|b| r > b.2 + 1e-12) {
                                best = Some((k, tau, r));
                            }
                        }
                    }
                }
                best
            })
            .collect()
    }

    fn mixed_dataset() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = noise(&mut rng, 300);
        let mut series = vec![
            noise(&mut rng, 40),
            base.clone(),
            base[50..200].iter().map(|v| 3.0 * v + 1.0).collect(),
            noise(&mut rng, 20),
            noise(&mut rng, 180),
        ];
        // a short series embedded in a long one
        let mut long = noise(&mut rng, 260);
        long[100..140].copy_from_slice(&series[0].iter().map(|v| v * 0.5).collect::<Vec<_>>());
        series.push(long);
        series.push(vec![2.0; 50]);
        dataset(series)
    }

    #[test]
    fn segment_extraction() {
        let d = dataset(vec![
            vec![1.0, 2.0, 4.0, 3.0],
            vec![5.0, 1.0, 2.0, 4.0, 3.0, 9.0],
        ]);
        // whole of series 0 lines up with series 1 ending at 5
        assert!((global_cross_correlation(&d, 0, 1, 5).unwrap() - 1.0).abs() < 1e-12);
        let want = stats::pearson(&[4.0, 3.0], &[5.0, 1.0]).unwrap();
        assert_eq!(global_cross_correlation(&d, 0, 1, 2).unwrap(), want);
        assert!(global_cross_correlation(&d, 0, 1, 7).is_err());
    }

    #[test]
    fn backends_agree_with_brute_force() {
        let d = mixed_dataset();
        let oracle = brute_force(&d, 14);
        for backend in [Backend::Direct, Backend::Fft, Backend::Auto] {
            let opts = ScanOptions {
                backend,
                fft_overlap_threshold: 50,
                ..ScanOptions::default()
            };
            let got = global_best_matches(&d, -1.0, &opts).unwrap();
            let mut by_j = vec![None; d.len()];
            for m in &got {
                by_j[m.j] = Some((m.k, m.tau, m.r_prime));
            }
            for (j, (g, o)) in by_j.iter().zip(&oracle).enumerate() {
                match (g, o) {
                    (Some(g), Some(o)) => {
                        assert!(
                            (g.2 - o.2).abs() < 1e-9,
                            "{backend:?} j={j}: {g:?} vs {o:?}"
                        );
                        if o.2 < 1.0 - 1e-9 {
                            assert_eq!((g.0, g.1), (o.0, o.1), "{backend:?} j={j}");
                        }
                    }
                    (None, None) => {}
                    _ => panic!("{backend:?} j={j}: {g:?} vs {o:?}"),
                }
            }
        }
    }

    #[test]
    fn planted_copies_are_found() {
        let d = mixed_dataset();
        let got = global_best_matches(&d, 0.995, &ScanOptions::default()).unwrap();
        let pairs: Vec<(usize, usize, usize)> = got.iter().map(|m| (m.j, m.k, m.tau)).collect();
        // series 2 is an affine copy of series 1 ending at 200
        assert!(pairs.contains(&(2, 1, 200)));
        // series 0 sits in series 5 ending at 140
        assert!(pairs.contains(&(0, 5, 140)));
        let m = got.iter().find(|m| m.j == 2).unwrap();
        assert_eq!(m.overlap, 150);
        // the constant series never matches
        assert!(got.iter().all(|m| m.j != 6 && m.k != 6));
    }

    #[test]
    fn overlap_fourteen_equals_correlator_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = dataset(vec![noise(&mut rng, 30), noise(&mut rng, 60)]);
        let tail = &d.series()[0].values[16..];
        for tau in 14..=46 {
            let window = &d.series()[1].values[tau - 14..tau];
            let r = stats::pearson(tail, window).unwrap();
            let q = stats::NormalizedQuery::new(tail).unwrap();
            let r_corr = q.correlate(window, stats::mean(window), stats::std(window));
            // overlap is min(n_j, tau) = 14 only at tau = 14
            if tau == 14 {
                let g = global_cross_correlation(&d, 0, 1, tau).unwrap();
                assert!((g - r).abs() < 1e-9);
                assert!((g - r_corr).abs() < 1e-9);
            }
        }
        let short = dataset(vec![
            d.series()[0].values[16..].to_vec(),
            d.series()[1].values.clone(),
        ]);
        let q = stats::NormalizedQuery::new(&short.series()[0].values).unwrap();
        for tau in 14..=46 {
            let window = &short.series()[1].values[tau - 14..tau];
            let g = global_cross_correlation(&short, 0, 1, tau).unwrap();
            let r = q.correlate(window, stats::mean(window), stats::std(window));
            assert!((g - r).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_shrink_with_threshold() {
        let d = mixed_dataset();
        let opts = ScanOptions::default();
        let mut last = usize::MAX;
        for t in [-1.0, 0.0, 0.5, 0.9, 0.99, 0.999, 1.0] {
            let n = global_best_matches(&d, t, &opts).unwrap().len();
            assert!(n <= last);
            last = n;
        }
        assert!(global_best_matches(&Dataset::default(), 0.995, &opts)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn exclusions_drop_the_target() {
        let d = mixed_dataset();
        let opts = ScanOptions::default();
        let all = global_best_matches(&d, 0.995, &opts).unwrap();
        let ex = HashSet::from([("D3".to_string(), "D2".to_string())]);
        let kept = find_global_matches(&d, 0.995, &ex, &opts).unwrap();
        assert_eq!(kept.len(), all.len() - 1);
        assert!(kept.iter().all(|m| m.j != 2));
    }

    fn dated(id: &str, values: Vec<f64>, start: NaiveDate) -> TimeSeries {
        TimeSeries::new(id, values).with_start_date(start)
    }

    #[test]
    fn categories() {
        let day = |d| NaiveDate::from_ymd_opt(2020, 1, d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = noise(&mut rng, 60);
        // b repeats a shifted by ten steps but claims the same start date
        let mut b = noise(&mut rng, 10);
        b.extend_from_slice(&a[..50]);
        let d = Dataset::new(vec![
            dated("A", a.clone(), day(1)),
            dated("B", b, day(1)),
            dated("C", a[..40].to_vec(), day(1)),
        ])
        .unwrap();
        let m = |j, k, tau| GlobalMatch {
            j,
            k,
            tau,
            r_prime: 1.0,
            overlap: 0,
        };
        let labels = categorize(
            &d,
            &[
                m(0, 0, 30),
                m(1, 2, 40),
                m(2, 1, 30),
                m(2, 0, 40),
                m(1, 0, 50),
            ],
        );
        assert_eq!(labels[0], Category::T1);
        assert_eq!(labels[1], Category::T2);
        assert_eq!(labels[2], Category::T2);
        // C's last value and A's value at offset 40 share a date
        assert_eq!(labels[3], Category::T3);
        // B's last 50 values are A's first 50, ten days later
        assert_eq!(labels[4], Category::T4);

        let undated = dataset(vec![a.clone(), a[..40].to_vec()]);
        let labels = categorize(&undated, &[m(1, 0, 40), m(0, 0, 20)]);
        assert_eq!(labels, vec![Category::DateUnknown, Category::T1]);
    }

    #[test]
    fn duplicated_tail_is_self_category() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut v = noise(&mut rng, 200);
        let head: Vec<f64> = v[..100].to_vec();
        v[100..].copy_from_slice(&head);
        let d = dataset(vec![v, noise(&mut rng, 90)]);
        let got = global_best_matches(&d, 0.995, &ScanOptions::default()).unwrap();
        let m = got.iter().find(|m| m.j == 0).unwrap();
        assert_eq!((m.k, m.tau), (0, 100));
        let report = LeakageReport::new(&d, got, 0, 50, None).unwrap();
        assert_eq!(report.count(Category::T1), 1);
        let total: usize = Category::ALL.iter().map(|&c| report.count(c)).sum();
        assert_eq!(total, report.set_c.len());
    }

    #[test]
    fn histogram() {
        let m = |overlap| GlobalMatch {
            j: 0,
            k: 0,
            tau: 0,
            r_prime: 1.0,
            overlap,
        };
        assert_eq!(overlap_histogram(&[m(350)], 100).unwrap(), vec![0, 0, 0, 1]);
        let h = overlap_histogram(&[m(0), m(99), m(100), m(250)], 100).unwrap();
        assert_eq!(h, vec![2, 1, 1]);
        assert_eq!(h.iter().sum::<usize>(), 4);
        assert!(overlap_histogram(&[m(1)], 0).is_err());
        assert!(overlap_histogram(&[], 10).unwrap().is_empty());
    }

    #[test]
    fn future_use_hand_enumeration() {
        let day1 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        // A ends with a copy of its own values 10..24
        let mut a = noise(&mut rng, 60);
        let block = a[10..24].to_vec();
        a[46..60].copy_from_slice(&block);
        // B's tail appears in C ending at 50; C continues to 64 while B ends at 40
        let b = noise(&mut rng, 40);
        let mut c = noise(&mut rng, 80);
        c[36..50].copy_from_slice(&b[26..40]);
        let d = Dataset::new(vec![
            dated("A", a, day1),
            dated("B", b, day1),
            dated("C", c, day1),
        ])
        .unwrap();
        let params = CorrelatorParams {
            std_ratio: None,
            ..CorrelatorParams::default()
        };
        let matches = run_correlator(&d, &params).unwrap();
        let idx = ScanIndex::new(&d, 14);
        assert_eq!(
            matches[0].as_ref().map(|m| (m.source, m.tau)),
            Some((0, 24))
        );
        assert_eq!(
            matches[1].as_ref().map(|m| (m.source, m.tau)),
            Some((2, 50))
        );
        assert!(matches[2].is_none());
        // A reads 10..37 (dates before day 60): past. B reads C up to day 64 > 40: future.
        assert_eq!(future_use_stats(&matches).unwrap(), 0.5);

        let past = CorrelatorParams {
            past_only: true,
            ..params.clone()
        };
        let matches: Vec<_> = (0..d.len())
            .map(|j| correlator_forecast(&idx, j, &past))
            .collect();
        assert_eq!(future_use_stats(&matches).unwrap(), 0.0);

        let undated = dataset(d.iter().map(|s| s.values.clone()).collect());
        let m = run_correlator(&undated, &params).unwrap();
        assert!(matches!(future_use_stats(&m), Err(Error::MissingDates(_))));
    }
}

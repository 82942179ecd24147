//! Correlation kernels.
//!
//! Windows are addressed by their exclusive end offset `tau`: the window
//! ending at `tau` covers `values[tau - w..tau]`. That number equals the
//! 1-based index of the window's last element, which is how match reports
//! print it.

use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Standard deviations at or below this are treated as a constant window.
#[inline]
pub fn eps_std(mean: f64) -> f64 {
    1e-12 * (1.0 + mean.abs())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation (divisor `n`), two-pass.
pub fn std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Pearson correlation coefficient, clamped to `[-1, 1]`.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points"));
    }
    let n = a.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if (saa / n).sqrt() <= eps_std(ma) || (sbb / n).sqrt() <= eps_std(mb) {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean and population std of every length-`window` slice of a series.
/// Entry `i` describes `values[i..i + window]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RollingStats {
    pub window: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl RollingStats {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Whether window `i` is non-constant.
    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        self.stds[i] > eps_std(self.means[i])
    }
}

/// Each window is evaluated with the two-pass formula, so large offsets
/// (values around 1e9) lose nothing to prefix-sum cancellation.
pub fn rolling_stats(series: &[f64], window: usize) -> Result<RollingStats> {
    if window == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    if series.len() < window {
        return Err(Error::SeriesTooShort {
            id: String::new(),
            len: series.len(),
            needed: window,
        });
    }
    let count = series.len() - window + 1;
    let mut means = Vec::with_capacity(count);
    let mut stds = Vec::with_capacity(count);
    for win in series.windows(window) {
        let m = mean(win);
        means.push(m);
        stds.push((win.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / window as f64).sqrt());
    }
    Ok(RollingStats {
        window,
        means,
        stds,
    })
}

/// A query window normalised so that a single centred dot product with a
/// candidate window gives their correlation.
#[derive(Clone, Debug)]
pub struct NormalizedQuery {
    weights: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl NormalizedQuery {
    pub fn new(query: &[f64]) -> Result<Self> {
        if query.len() < 2 {
            return Err(Error::UndefinedCorrelation("query shorter than two points"));
        }
        let m = mean(query);
        let s = std(query);
        if s <= eps_std(m) {
            return Err(Error::UndefinedCorrelation("constant query window"));
        }
        let scale = 1.0 / (s * query.len() as f64);
        Ok(NormalizedQuery {
            weights: query.iter().map(|q| (q - m) * scale).collect(),
            mean: m,
            std: s,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Correlation with `window` given its precomputed mean and std.
    #[inline]
    pub fn correlate(&self, window: &[f64], mean: f64, std: f64) -> f64 {
        let acc: f64 = self
            .weights
            .iter()
            .zip(window)
            .map(|(w, y)| w * (y - mean))
            .sum();
        (acc / std).clamp(-1.0, 1.0)
    }
}

/// Correlation of `query` with every non-constant window of `series`, as
/// `(tau, r)` pairs in increasing `tau`.
pub fn sliding_correlations(
    query: &[f64],
    series: &[f64],
    stats: &RollingStats,
) -> Result<Vec<(usize, f64)>> {
    let w = query.len();
    if stats.window != w || stats.len() + w != series.len() + 1 {
        return Err(Error::invalid(format!(
            "rolling stats (window {}, {} entries) do not describe a length-{} series with window {w}",
            stats.window,
            stats.len(),
            series.len()
        )));
    }
    let q = NormalizedQuery::new(query)?;
    Ok((0..stats.len())
        .filter(|&i| stats.is_valid(i))
        .map(|i| {
            (
                i + w,
                q.correlate(&series[i..i + w], stats.means[i], stats.stds[i]),
            )
        })
        .collect())
}

/// Cross terms for every alignment of `a`'s end against `b`.
///
/// Entry `tau - 1` (for `tau` in `1..=b.len()`) holds
/// `sum(a[n_a - L + i] * b[tau - L + i])` over `i < L`, `L = min(n_a, tau)`.
pub fn cross_terms_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let na = a.len();
    (1..=b.len())
        .map(|tau| {
            let l = na.min(tau);
            a[na - l..]
                .iter()
                .zip(&b[tau - l..tau])
                .map(|(x, y)| x * y)
                .sum()
        })
        .collect()
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// FFT evaluation of [`cross_terms_direct`] with a cached query spectrum.
///
/// Two targets can share one complex transform: `b1 + i*b2` is transformed
/// once and the real and imaginary parts of the product's inverse are the
/// two real cross-correlations.
pub struct FftCrossTerms {
    reversed: Vec<f64>,
    planner: FftPlanner<f64>,
    plans: HashMap<usize, PlanPair>,
    spectra: HashMap<usize, Vec<Complex64>>,
    scratch: Vec<Complex64>,
}

impl FftCrossTerms {
    pub fn new(query: &[f64]) -> Self {
        FftCrossTerms {
            reversed: query.iter().rev().copied().collect(),
            planner: FftPlanner::new(),
            plans: HashMap::new(),
            spectra: HashMap::new(),
            scratch: Vec::new(),
        }
    }

    fn transform_size(&self, target_len: usize) -> usize {
        (self.reversed.len() + target_len).next_power_of_two()
    }

    fn plans(&mut self, size: usize) -> PlanPair {
        let planner = &mut self.planner;
        self.plans
            .entry(size)
            .or_insert_with(|| {
                (
                    planner.plan_fft_forward(size),
                    planner.plan_fft_inverse(size),
                )
            })
            .clone()
    }

    fn ensure_spectrum(&mut self, size: usize) {
        if !self.spectra.contains_key(&size) {
            let (fwd, _) = self.plans(size);
            let mut buf = vec![Complex64::new(0.0, 0.0); size];
            for (dst, &v) in buf.iter_mut().zip(&self.reversed) {
                dst.re = v;
            }
            self.run(&fwd, &mut buf);
            self.spectra.insert(size, buf);
        }
    }

    fn run(&mut self, plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        let need = plan.get_inplace_scratch_len();
        if self.scratch.len() < need {
            self.scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        plan.process_with_scratch(buf, &mut self.scratch[..need]);
    }

    pub fn cross_terms(&mut self, b: &[f64]) -> Vec<f64> {
        self.cross_terms_pair(b, &[]).0
    }

    /// Cross terms for two targets at once; `b2` may be empty.
    pub fn cross_terms_pair(&mut self, b1: &[f64], b2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let size = self.transform_size(b1.len().max(b2.len()));
        let (fwd, inv) = self.plans(size);
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for (dst, &v) in buf.iter_mut().zip(b1) {
            dst.re = v;
        }
        for (dst, &v) in buf.iter_mut().zip(b2) {
            dst.im = v;
        }
        self.run(&fwd, &mut buf);
        self.ensure_spectrum(size);
        for (x, a) in buf.iter_mut().zip(&self.spectra[&size]) {
            *x *= a;
        }
        self.run(&inv, &mut buf);
        let scale = 1.0 / size as f64;
        // index m of the circular result holds alignment tau = m + 1
        let first = buf[..b1.len()].iter().map(|c| c.re * scale).collect();
        let second = buf[..b2.len()].iter().map(|c| c.im * scale).collect();
        (first, second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook formula, written independently of `pearson`.
    fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / n;
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
        let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n).sqrt();
        cov / (sa * sb)
    }

    #[test]
    fn pearson_hand_value() {
        // means 2.75 and 2.25; cross sum 6.25, square sums 8.75 and 4.75
        let expected = 6.25 / (8.75f64 * 4.75).sqrt();
        let r = pearson(&[1.0, 2.0, 3.0, 5.0], &[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!((r - expected).abs() < 1e-15);
        assert!((expected - 0.9694584179118516).abs() < 1e-15);
        assert!((r - pearson_oracle(&[1.0, 2.0, 3.0, 5.0], &[1.0, 2.0, 2.0, 4.0])).abs() < 1e-15);
    }

    #[test]
    fn pearson_affine_and_negation() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 3.0).collect();
        let c: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &c).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rolling_stats_small_and_constant() {
        let rs = rolling_stats(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(rs.means, vec![1.5, 2.5]);
        assert_eq!(rs.stds, vec![0.5, 0.5]);
        let flat = rolling_stats(&[4.0; 10], 3).unwrap();
        assert!(flat.stds.iter().all(|&s| s == 0.0));
        assert!((0..flat.len()).all(|i| !flat.is_valid(i)));
        assert!(rolling_stats(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn rolling_stats_match_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for offset in [0.0, 1e6, 1e9] {
            let series: Vec<f64> = (0..1000)
                .map(|_| offset + rng.gen_range(-50.0..50.0))
                .collect();
            let rs = rolling_stats(&series, 14).unwrap();
            assert_eq!(rs.len(), 1000 - 14 + 1);
            for (i, win) in series.windows(14).enumerate() {
                let m = win.iter().sum::<f64>() / 14.0;
                let s = (win.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 14.0).sqrt();
                assert!((rs.means[i] - m).abs() <= 1e-9 * m.abs().max(1.0));
                assert!((rs.stds[i] - s).abs() <= 1e-9 * s);
            }
        }
    }

    #[test]
    fn sliding_self_match_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let series: Vec<f64> = (0..300).map(|_| rng.gen_range(0.0..10.0)).collect();
        let rs = rolling_stats(&series, 14).unwrap();
        let query = &series[100..114];
        let out = sliding_correlations(query, &series, &rs).unwrap();
        assert_eq!(out.len(), rs.len());
        let hit = out.iter().find(|(tau, _)| *tau == 114).unwrap();
        assert!((hit.1 - 1.0).abs() < 1e-12);
        assert!(out.iter().all(|(_, r)| (-1.0..=1.0).contains(r)));
        for &(tau, r) in &out {
            let direct = pearson_oracle(query, &series[tau - 14..tau]);
            assert!((r - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn sliding_skips_constant_windows_and_rejects_constant_query() {
        let mut series = vec![5.0; 20];
        series.extend((0..20).map(f64::from));
        let rs = rolling_stats(&series, 4).unwrap();
        let out = sliding_correlations(&[1.0, 2.0, 3.0, 5.0], &series, &rs).unwrap();
        assert!(out.iter().all(|(tau, _)| *tau > 20));
        assert!(sliding_correlations(&[2.0; 4], &series, &rs).is_err());
    }

    #[test]
    fn fft_cross_terms_match_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..57).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b1: Vec<f64> = (0..130).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b2: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut fft = FftCrossTerms::new(&a);
        let (c1, c2) = fft.cross_terms_pair(&b1, &b2);
        for (got, want) in c1.iter().zip(cross_terms_direct(&a, &b1)) {
            assert!((got - want).abs() < 1e-10);
        }
        for (got, want) in c2.iter().zip(cross_terms_direct(&a, &b2)) {
            assert!((got - want).abs() < 1e-10);
        }
        assert_eq!(fft.cross_terms(&b1).len(), b1.len());
    }

    proptest! {
        #[test]
        fn sliding_affine_invariance(
            seed in any::<u64>(),
            alpha in prop_oneof![0.01f64..100.0, -100.0f64..-0.01],
            beta in -1e4f64..1e4,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let series: Vec<f64> = (0..120).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let query: Vec<f64> = (0..14).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let mapped: Vec<f64> = query.iter().map(|q| alpha * q + beta).collect();
            let rs = rolling_stats(&series, 14).unwrap();
            let base = sliding_correlations(&query, &series, &rs).unwrap();
            let other = sliding_correlations(&mapped, &series, &rs).unwrap();
            let sign = alpha.signum();
            for ((t1, r1), (t2, r2)) in base.iter().zip(&other) {
                prop_assert_eq!(t1, t2);
                prop_assert!((sign * r1 - r2).abs() < 1e-9);
            }
        }
    }
}

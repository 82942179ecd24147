//! The `m4corr` command line.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 for usage or
//! configuration errors.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use crate::analysis::{
    apply_exclusions, future_use_stats, global_best_matches, load_exclusions, LeakageReport,
};
use crate::config::{RunConfig, StdRatio};
use crate::correlator::{
    first_accepted, run_correlator, write_match_csv, CorrelatorMatch, CorrelatorParams, ScanIndex,
};
use crate::dataset::{
    holdout_split, load_m4_info, load_m4_values, summarize_ids, write_forecast_csv, Dataset,
    HoldoutSplit,
};
use crate::ensemble::{
    clip_negative, ensemble_forecast, pipeline_forecast, read_provenance_csv, write_provenance_csv,
    PipelineOutput,
};
use crate::forecasters::{Forecast, Method};
use crate::metrics::{
    naive_benchmark, owa_report, write_report_csv, write_report_json, MetricReport, Seasonality,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "m4corr",
    version,
    about = "Correlation-based forecasting and leakage audits for M4-format data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Forecast every series (correlator, then median ensemble).
    Forecast,
    /// Score a forecast file against test values.
    Evaluate,
    /// Correlator accuracy over a grid of thresholds and spread ratios.
    Sweep,
    /// Whole-overlap cross-correlation leakage audit.
    Audit,
    /// Hold out the last values, forecast them and score the result.
    Validate,
}

#[derive(Debug, Default, Args)]
pub struct Options {
    /// M4-format value file (id followed by values).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Series info file with start dates and horizons.
    #[arg(long, global = true)]
    pub info: Option<PathBuf>,
    /// Test values in the same layout as --data.
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub r_threshold: Option<f64>,
    /// Spread limit, or "none" to disable the check.
    #[arg(long, global = true)]
    pub std_ratio: Option<String>,
    /// Only forecast the first 2138 series with the correlator.
    #[arg(long, global = true)]
    pub bug1: bool,
    /// Compare forecast spread against the source window.
    #[arg(long, global = true)]
    pub bug2: bool,
    /// Ignore source regions that reach the target's forecast dates.
    #[arg(long, global = true)]
    pub past_only: bool,
    /// Do not match a series against its own history.
    #[arg(long, global = true)]
    pub no_self: bool,
    /// Skip the correlator and use the ensemble for every series.
    #[arg(long, global = true)]
    pub no_correlator: bool,
    /// Ensemble members (naive, ses, custom).
    #[arg(long, global = true, value_delimiter = ',')]
    pub members: Option<Vec<String>>,
    /// Extra ensemble member read from a forecast file (repeatable).
    #[arg(long = "external", global = true)]
    pub external: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// MASE seasonal lag; defaults to the series frequency.
    #[arg(long, global = true)]
    pub seasonality: Option<usize>,
    /// Forecast file to evaluate.
    #[arg(long, global = true)]
    pub forecasts: Option<PathBuf>,
    /// Benchmark forecast file (naive when omitted).
    #[arg(long, global = true)]
    pub benchmark: Option<PathBuf>,
    /// Provenance file written by `forecast`.
    #[arg(long, global = true)]
    pub provenance: Option<PathBuf>,
    /// Evaluate only series whose provenance names this method.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Exclusion pairs for the audit.
    #[arg(long, global = true)]
    pub exclusions: Option<PathBuf>,
    #[arg(long, global = true)]
    pub audit_threshold: Option<f64>,
    /// auto, direct or fft.
    #[arg(long, global = true)]
    pub audit_backend: Option<String>,
    #[arg(long, global = true)]
    pub bin_width: Option<usize>,
    #[arg(long, global = true)]
    pub fft_overlap_threshold: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub r_threshold_grid: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub std_ratio_grid: Option<Vec<String>>,
    /// Leave the timestamp out of JSON summaries.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
}

impl Options {
    fn to_config(&self) -> Result<RunConfig> {
        let flag = |b: bool| b.then_some(true);
        let std_ratio = self
            .std_ratio
            .as_deref()
            .map(str::parse::<StdRatio>)
            .transpose()?;
        let std_ratio_grid = self
            .std_ratio_grid
            .as_ref()
            .map(|g| {
                g.iter()
                    .map(|s| s.parse::<StdRatio>())
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        Ok(RunConfig {
            data: self.data.clone(),
            info: self.info.clone(),
            test: self.test.clone(),
            out: self.out.clone(),
            forecasts: self.forecasts.clone(),
            benchmark: self.benchmark.clone(),
            exclusions: self.exclusions.clone(),
            window: self.window,
            r_threshold: self.r_threshold,
            std_ratio,
            bug1: flag(self.bug1),
            bug2: flag(self.bug2),
            past_only: flag(self.past_only),
            include_self: self.no_self.then_some(false),
            correlator: self.no_correlator.then_some(false),
            members: self.members.clone(),
            external_forecasts: (!self.external.is_empty()).then(|| self.external.clone()),
            horizon: self.horizon,
            seasonality: self.seasonality,
            audit_threshold: self.audit_threshold,
            audit_backend: self.audit_backend.clone(),
            bin_width: self.bin_width,
            fft_overlap_threshold: self.fft_overlap_threshold,
            r_threshold_grid: self.r_threshold_grid.clone(),
            std_ratio_grid,
            threads: self.threads,
            no_timestamp: flag(self.no_timestamp),
        })
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => 2,
        _ => 1,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let flags = cli.opts.to_config()?;
    let cfg = match &cli.opts.config {
        Some(path) => RunConfig::load(path)?.overlay(flags),
        None => flags,
    };
    let ctx = Context {
        cfg,
        provenance: cli.opts.provenance.clone(),
        method: cli.opts.method.clone(),
    };
    match ctx.cfg.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| ctx.dispatch(cli.command))
        }
        None => ctx.dispatch(cli.command),
    }
}

struct Context {
    cfg: RunConfig,
    provenance: Option<PathBuf>,
    method: Option<String>,
}

impl Context {
    fn dispatch(&self, command: Command) -> Result<()> {
        match command {
            Command::Forecast => self.forecast(),
            Command::Evaluate => self.evaluate(),
            Command::Sweep => self.sweep(),
            Command::Audit => self.audit(),
            Command::Validate => self.validate(),
        }
    }

    fn required<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value.as_deref().ok_or_else(|| {
            Error::Config(format!(
                "missing --{flag} (or `{}` in the config file)",
                flag.replace('-', "_")
            ))
        })
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn timestamp(&self) -> Option<String> {
        (!self.cfg.no_timestamp.unwrap_or(false)).then(|| chrono::Utc::now().to_rfc3339())
    }

    fn seasonality(&self) -> Seasonality {
        self.cfg
            .seasonality
            .map_or(Seasonality::FromFrequency, Seasonality::Fixed)
    }

    fn dataset(&self) -> Result<Dataset> {
        let mut d = load_m4_values(self.required(&self.cfg.data, "data")?)?;
        if let Some(info) = &self.cfg.info {
            d.attach_meta(&load_m4_info(info)?);
        }
        info!("loaded {} series", d.len());
        Ok(d)
    }

    /// Training data with test values, from --test or by holding out
    /// `fallback_h` values (the configured horizon wins).
    fn split(&self, fallback_h: Option<usize>) -> Result<HoldoutSplit> {
        let d = self.dataset()?;
        match &self.cfg.test {
            Some(test) => HoldoutSplit::from_parts(d, &load_m4_values(test)?),
            None => {
                let h = self
                    .cfg
                    .horizon
                    .or(fallback_h)
                    .or_else(|| d.iter().next().map(|s| s.horizon))
                    .ok_or_else(|| Error::Config("empty dataset and no --horizon".into()))?;
                holdout_split(&d, h)
            }
        }
    }

    fn write_pipeline(&self, dir: &Path, out: &PipelineOutput) -> Result<()> {
        write_forecast_csv(
            dir.join("forecasts.csv"),
            out.forecasts
                .iter()
                .map(|f| (f.id.as_str(), f.values.as_slice())),
        )?;
        write_provenance_csv(dir.join("provenance.csv"), &out.forecasts)?;
        write_match_csv(dir.join("correlator_matches.csv"), &out.matches)
    }

    fn forecast(&self) -> Result<()> {
        let d = self.dataset()?;
        let pipeline = self.cfg.pipeline()?;
        let dir = self.out_dir()?;
        let out = pipeline_forecast(&d, &pipeline)?;
        self.write_pipeline(&dir, &out)?;
        println!(
            "forecast {} series ({} by correlator) -> {}",
            out.forecasts.len(),
            out.correlator_count(),
            dir.display()
        );
        Ok(())
    }

    fn evaluate(&self) -> Result<()> {
        let path = self.required(&self.cfg.forecasts, "forecasts")?;
        let rows = crate::dataset::read_forecast_csv(path)?;
        let provenance = self
            .provenance
            .as_ref()
            .map(read_provenance_csv)
            .transpose()?;
        let mut forecasts: Vec<Forecast> = rows
            .into_iter()
            .map(|(id, values)| {
                let method = provenance
                    .as_ref()
                    .and_then(|p| p.get(&id))
                    .map_or(Method::External("input".into()), |m| parse_method(m));
                Forecast::new(id, values, method)
            })
            .collect();
        if let Some(want) = &self.method {
            if provenance.is_none() {
                return Err(Error::Config("--method needs --provenance".into()));
            }
            let want = parse_method(want);
            forecasts.retain(|f| f.method == want);
            info!("{} forecasts with method {want}", forecasts.len());
        }
        let h = forecasts.iter().map(Forecast::len).max();
        let split = self.split(h)?;
        let report = self.score(&forecasts, &split)?;
        self.write_report(&report)
    }

    fn benchmark_for(&self, forecasts: &[Forecast], split: &HoldoutSplit) -> Result<Vec<Forecast>> {
        let all = match &self.cfg.benchmark {
            Some(p) => crate::dataset::read_forecast_csv(p)?
                .into_iter()
                .map(|(id, v)| Forecast::new(id, v, Method::Naive))
                .collect(),
            None => naive_benchmark(split)?,
        };
        let mut by_id: HashMap<String, Forecast> =
            all.into_iter().map(|f| (f.id.clone(), f)).collect();
        let mut missing = Vec::new();
        let bench = forecasts
            .iter()
            .filter_map(|f| {
                let b = by_id.remove(&f.id);
                if b.is_none() {
                    missing.push(f.id.as_str());
                }
                b
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingIds {
                what: "benchmark".into(),
                ids: summarize_ids(&missing),
            });
        }
        Ok(bench)
    }

    fn score(&self, forecasts: &[Forecast], split: &HoldoutSplit) -> Result<MetricReport> {
        let bench = self.benchmark_for(forecasts, split)?;
        owa_report(forecasts, &bench, split, self.seasonality())
    }

    fn write_report(&self, report: &MetricReport) -> Result<()> {
        let dir = self.out_dir()?;
        write_report_json(dir.join("report.json"), report, self.timestamp().as_deref())?;
        write_report_csv(dir.join("report.csv"), report)?;
        println!(
            "{} series: MASE {:.4} sMAPE {:.4} OWA {:.4}",
            report.series, report.aggregate_mase, report.aggregate_smape, report.owa
        );
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let split = self.split(None)?;
        let mut pipeline = self.cfg.pipeline()?;
        let h = split.test.values().map(Vec::len).max().unwrap_or(0);
        pipeline.horizon = Some(h);
        let out = pipeline_forecast(&split.train, &pipeline)?;
        let dir = self.out_dir()?;
        self.write_pipeline(&dir, &out)?;
        let report = self.score(&out.forecasts, &split)?;
        self.write_report(&report)
    }

    fn sweep(&self) -> Result<()> {
        let (thresholds, ratios) = self.cfg.sweep_grid()?;
        let base = self.cfg.correlator_params()?;
        let t_min = thresholds.iter().copied().fold(f64::INFINITY, f64::min);
        for &t in &thresholds {
            CorrelatorParams {
                r_threshold: t,
                ..base.clone()
            }
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        }
        let split = self.split(None)?;
        let train = &split.train;
        let horizons: Vec<usize> = train
            .iter()
            .map(|s| split.actual(&s.id).map_or(s.horizon, <[f64]>::len))
            .collect();

        let index = ScanIndex::new(train, base.window);
        let walks: Vec<Vec<Option<CorrelatorMatch>>> = (0..train.len())
            .into_par_iter()
            .map(|j| {
                let p = CorrelatorParams {
                    r_threshold: t_min,
                    continuation: base.continuation.or(Some(horizons[j])),
                    ..base.clone()
                };
                first_accepted(&index, j, &p, &ratios)
            })
            .collect();

        let pipeline = self.cfg.pipeline()?;
        let fallback: Vec<Forecast> = train
            .series()
            .par_iter()
            .zip(&horizons)
            .map(|(s, &h)| ensemble_forecast(&pipeline.members, s, h).map(clip_negative))
            .collect::<Result<_>>()?;

        let dir = self.out_dir()?;
        let path = dir.join("sweep.csv");
        let io = |e| Error::io(&path, e);
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io)?);
        writeln!(
            out,
            "r_threshold,std_ratio,accepted,accepted_pct,mase,smape,owa,full_owa"
        )
        .map_err(io)?;
        for &t in &thresholds {
            for (ri, ratio) in ratios.iter().enumerate() {
                let mut accepted = Vec::new();
                let mut full = Vec::with_capacity(train.len());
                for (j, walk) in walks.iter().enumerate() {
                    match walk[ri].as_ref().filter(|m| m.r >= t) {
                        Some(m) => {
                            let f = clip_negative(Forecast::new(
                                m.target_id.clone(),
                                m.forecast.clone(),
                                Method::Correlator,
                            ));
                            accepted.push(f.clone());
                            full.push(f);
                        }
                        None => full.push(fallback[j].clone()),
                    }
                }
                let pct = if train.is_empty() {
                    0.0
                } else {
                    100.0 * accepted.len() as f64 / train.len() as f64
                };
                let cells = if accepted.is_empty() {
                    ",,".to_string()
                } else {
                    let r = self.score(&accepted, &split)?;
                    format!("{},{},{}", r.aggregate_mase, r.aggregate_smape, r.owa)
                };
                let full_owa = if full.is_empty() {
                    String::new()
                } else {
                    self.score(&full, &split)?.owa.to_string()
                };
                let ratio = ratio.map_or("none".to_string(), |r| r.to_string());
                writeln!(
                    out,
                    "{t},{ratio},{},{pct},{cells},{full_owa}",
                    accepted.len()
                )
                .map_err(io)?;
            }
        }
        out.flush().map_err(io)?;
        println!(
            "sweep over {} cells -> {}",
            thresholds.len() * ratios.len(),
            path.display()
        );
        Ok(())
    }

    fn audit(&self) -> Result<()> {
        let d = self.dataset()?;
        let opts = self.cfg.scan_options()?;
        let exclusions = self
            .cfg
            .exclusions
            .as_ref()
            .map(load_exclusions)
            .transpose()?
            .unwrap_or_default();
        let mut set_c = global_best_matches(&d, self.cfg.audit_threshold(), &opts)?;
        let before = set_c.len();
        apply_exclusions(&d, &mut set_c, &exclusions);
        let future = if d.has_dates() {
            let matches = run_correlator(&d, &self.cfg.correlator_params()?)?;
            match future_use_stats(&matches) {
                Ok(f) => Some(f),
                Err(e) => {
                    warn!("future-use fraction skipped: {e}");
                    None
                }
            }
        } else {
            warn!("no start dates (pass --info): synchronised/unsynchronised split and future use unavailable");
            None
        };
        let report = LeakageReport::new(&d, set_c, before, self.cfg.bin_width(), future)?;
        let dir = self.out_dir()?;
        report.write(&d, &dir, self.timestamp().as_deref())?;
        println!(
            "audit: {} matches ({} before exclusions) -> {}",
            report.set_c.len(),
            before,
            dir.display()
        );
        Ok(())
    }
}

fn parse_method(s: &str) -> Method {
    match s {
        "Naive" => Method::Naive,
        "SES" => Method::Ses,
        "Custom" => Method::Custom,
        "Correlator" => Method::Correlator,
        "Ensemble" => Method::Ensemble,
        other => Method::External(other.strip_prefix("External:").unwrap_or(other).to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Naive,
            Method::Ses,
            Method::Custom,
            Method::Correlator,
            Method::Ensemble,
        ] {
            assert_eq!(parse_method(&m.to_string()), m);
        }
        assert_eq!(
            parse_method("External:theta"),
            Method::External("theta".into())
        );
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["m4corr", "forecast"]), 2);
        assert_eq!(run(["m4corr", "frobnicate"]), 2);
        assert_eq!(
            run([
                "m4corr",
                "forecast",
                "--data",
                "x.csv",
                "--std-ratio",
                "wide"
            ]),
            2
        );
        assert_eq!(run(["m4corr", "--help"]), 0);
    }
}

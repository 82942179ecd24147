//! Loading, validating and splitting M4-format series.
//!
//! Value files are CSV with a header row and one ragged row per series:
//! the id followed by its observations, padded with empty cells up to the
//! longest series. Info files carry per-series metadata (horizon, seasonal
//! period, starting timestamp).

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Days, NaiveDate, NaiveDateTime};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shortest and longest Daily series in the M4 training set.
pub const DAILY_LENGTH_RANGE: (usize, usize) = (93, 9919);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frequency {
    Hourly,
    Daily,
    Weekly,
    Monthly,
    Quarterly,
    Yearly,
}

impl Frequency {
    /// M4 ids start with the frequency's initial (`D1`, `H413`, ...).
    pub fn from_id(id: &str) -> Option<Self> {
        match id.chars().next()? {
            'H' => Some(Frequency::Hourly),
            'D' => Some(Frequency::Daily),
            'W' => Some(Frequency::Weekly),
            'M' => Some(Frequency::Monthly),
            'Q' => Some(Frequency::Quarterly),
            'Y' => Some(Frequency::Yearly),
            _ => None,
        }
    }

    /// Competition forecast horizon.
    pub fn default_horizon(self) -> usize {
        match self {
            Frequency::Hourly => 48,
            Frequency::Daily => 14,
            Frequency::Weekly => 13,
            Frequency::Monthly => 18,
            Frequency::Quarterly => 8,
            Frequency::Yearly => 6,
        }
    }

    /// Seasonal lag used in the MASE denominator.
    pub fn seasonality(self) -> usize {
        match self {
            Frequency::Hourly => 24,
            Frequency::Monthly => 12,
            Frequency::Quarterly => 4,
            Frequency::Daily | Frequency::Weekly | Frequency::Yearly => 1,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Frequency::Hourly => "Hourly",
            Frequency::Daily => "Daily",
            Frequency::Weekly => "Weekly",
            Frequency::Monthly => "Monthly",
            Frequency::Quarterly => "Quarterly",
            Frequency::Yearly => "Yearly",
        };
        f.write_str(s)
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hourly" => Ok(Frequency::Hourly),
            "daily" => Ok(Frequency::Daily),
            "weekly" => Ok(Frequency::Weekly),
            "monthly" => Ok(Frequency::Monthly),
            "quarterly" => Ok(Frequency::Quarterly),
            "yearly" => Ok(Frequency::Yearly),
            other => Err(Error::invalid(format!("unknown frequency {other:?}"))),
        }
    }
}

/// One observed series. Value `i` (0-based) falls on `start_date + i` days
/// when a start date is known.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    pub values: Vec<f64>,
    pub start_date: Option<NaiveDate>,
    pub frequency: Frequency,
    pub horizon: usize,
}

impl TimeSeries {
    /// Frequency is inferred from the id prefix (Daily when unrecognised)
    /// and the horizon from the frequency.
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Self {
        let id = id.into();
        let frequency = Frequency::from_id(&id).unwrap_or(Frequency::Daily);
        TimeSeries {
            id,
            values,
            start_date: None,
            frequency,
            horizon: frequency.default_horizon(),
        }
    }

    pub fn with_start_date(mut self, date: NaiveDate) -> Self {
        self.start_date = Some(date);
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Calendar date of value `index`, one value per day.
    pub fn date_of(&self, index: usize) -> Option<NaiveDate> {
        self.start_date?.checked_add_days(Days::new(index as u64))
    }

    /// Date of the first value after the observed range.
    pub fn first_forecast_date(&self) -> Option<NaiveDate> {
        self.date_of(self.len())
    }
}

/// Ordered collection of series with unique ids.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    series: Vec<TimeSeries>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(series: Vec<TimeSeries>) -> Result<Self> {
        let mut index = HashMap::with_capacity(series.len());
        for (pos, s) in series.iter().enumerate() {
            if index.insert(s.id.clone(), pos).is_some() {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Dataset { series, index })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TimeSeries> {
        self.series.iter()
    }

    pub fn get(&self, id: &str) -> Option<&TimeSeries> {
        self.index.get(id).map(|&pos| &self.series[pos])
    }

    /// 0-based file position of `id`.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|s| s.id.as_str())
    }

    /// Applies metadata parsed by [`load_m4_info`]. Ids absent from `meta`
    /// keep their defaults.
    pub fn attach_meta(&mut self, meta: &HashMap<String, SeriesMeta>) {
        for s in &mut self.series {
            let Some(m) = meta.get(&s.id) else { continue };
            if let Some(freq) = m.frequency {
                s.frequency = freq;
                s.horizon = freq.default_horizon();
            }
            if let Some(h) = m.horizon {
                s.horizon = h;
            }
            if m.start_date.is_some() {
                s.start_date = m.start_date;
            }
        }
    }

    /// Overrides every series' horizon.
    pub fn set_horizon(&mut self, horizon: usize) {
        for s in &mut self.series {
            s.horizon = horizon;
        }
    }

    pub fn has_dates(&self) -> bool {
        !self.series.is_empty() && self.series.iter().all(|s| s.start_date.is_some())
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a TimeSeries;
    type IntoIter = std::slice::Iter<'a, TimeSeries>;

    fn into_iter(self) -> Self::IntoIter {
        self.series.iter()
    }
}

/// Reads a ragged M4 value file.
pub fn load_m4_values(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let dataset = read_m4_values(file, path)?;
    for s in dataset.iter() {
        if s.frequency == Frequency::Daily {
            let (lo, hi) = DAILY_LENGTH_RANGE;
            if s.len() < lo || s.len() > hi {
                warn!(
                    "{}: length {} outside the usual Daily range {lo}..={hi}",
                    s.id,
                    s.len()
                );
            }
        }
    }
    Ok(dataset)
}

/// Same as [`load_m4_values`] over any reader; `origin` only labels errors.
pub fn read_m4_values<R: std::io::Read>(reader: R, origin: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let mut series = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(origin, e))?;
        let id = record.get(0).map(str::trim).unwrap_or("");
        let row_label = if id.is_empty() {
            format!("line {}", line + 2)
        } else {
            id.to_string()
        };
        if id.is_empty() {
            if record.iter().all(|c| c.trim().is_empty()) {
                continue;
            }
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                row: row_label,
                column: 1,
                message: "missing series id".into(),
            });
        }
        let cells: Vec<&str> = record.iter().skip(1).map(str::trim).collect();
        let used = cells
            .iter()
            .rposition(|c| !c.is_empty())
            .map_or(0, |p| p + 1);
        let mut values = Vec::with_capacity(used);
        for (i, cell) in cells[..used].iter().enumerate() {
            let column = i + 2;
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                row: row_label.clone(),
                column,
                message,
            };
            if cell.is_empty() {
                return Err(parse_err("empty cell inside series".into()));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value {cell:?}")));
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                row: row_label,
                column: 2,
                message: "series has no values".into(),
            });
        }
        series.push(TimeSeries::new(id, values));
    }
    Dataset::new(series)
}

/// Writes a dataset in the M4 value layout (`id,V1,...,Vmax`, ragged rows).
pub fn write_m4_values(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let max_len = dataset.iter().map(TimeSeries::len).max().unwrap_or(0);
    let header = (1..=max_len).map(|i| format!("V{i}"));
    write_rows(
        path.as_ref(),
        header,
        dataset.iter().map(|s| (s.id.as_str(), s.values.as_slice())),
    )
}

/// Per-series metadata from an info file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeriesMeta {
    pub frequency: Option<Frequency>,
    pub seasonal_period: Option<usize>,
    pub horizon: Option<usize>,
    pub start_date: Option<NaiveDate>,
    pub category: Option<String>,
}

/// Reads an M4 info file (`M4id,category,Frequency,Horizon,SP,StartingDate`).
///
/// Columns are located by header name, case-insensitively; only the id
/// column is mandatory. Unparseable dates are logged and left absent.
pub fn load_m4_info(path: impl AsRef<Path>) -> Result<HashMap<String, SeriesMeta>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_m4_info(file, path)
}

pub fn read_m4_info<R: std::io::Read>(
    reader: R,
    origin: &Path,
) -> Result<HashMap<String, SeriesMeta>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::csv(origin, e))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h.as_str()));
    let id_col = col(&["m4id", "id"]).ok_or_else(|| Error::Parse {
        path: origin.to_path_buf(),
        row: "header".into(),
        column: 1,
        message: "no id column (expected M4id or id)".into(),
    })?;
    let horizon_col = col(&["horizon"]);
    let period_col = col(&["frequency", "seasonal_period"]);
    let label_col = col(&["sp", "frequency_label"]);
    let category_col = col(&["category"]);
    let date_col = col(&["startingdate", "start_date", "start"]);

    let mut out = HashMap::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(origin, e))?;
        let cell = |c: Option<usize>| {
            c.and_then(|c| record.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
        };
        let Some(id) = cell(Some(id_col)) else {
            continue;
        };
        let parse_usize = |c: Option<usize>, name: &str| -> Result<Option<usize>> {
            match cell(c) {
                None => Ok(None),
                Some(raw) => raw.parse::<usize>().map(Some).map_err(|_| Error::Parse {
                    path: origin.to_path_buf(),
                    row: id.to_string(),
                    column: c.unwrap_or(0) + 1,
                    message: format!("{name} is not a positive integer: {raw:?}"),
                }),
            }
        };
        let horizon = parse_usize(horizon_col, "horizon")?;
        let seasonal_period = parse_usize(period_col, "seasonal period")?;
        let frequency = cell(label_col)
            .and_then(|l| l.parse().ok())
            .or_else(|| Frequency::from_id(id));
        let start_date = cell(date_col).and_then(|raw| {
            let parsed = parse_date(raw);
            if parsed.is_none() {
                warn!(
                    "{}: line {}: unparseable start date {raw:?} for {id}; treating as absent",
                    origin.display(),
                    line + 2
                );
            }
            parsed
        });
        out.insert(
            id.to_string(),
            SeriesMeta {
                frequency,
                seasonal_period,
                horizon,
                start_date,
                category: cell(category_col).map(str::to_string),
            },
        );
    }
    Ok(out)
}

/// Accepts ISO dates (optionally with a time) and the `dd-mm-yy HH:MM`
/// layout used by the M4 info file.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    const DATE_FORMATS: [&str; 3] = ["%Y-%m-%d", "%d-%m-%y", "%Y/%m/%d"];
    const DATETIME_FORMATS: [&str; 4] = [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%d-%m-%y %H:%M",
        "%d-%m-%y %H:%M:%S",
    ];
    let raw = raw.trim();
    DATE_FORMATS
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(raw, f).ok())
        .or_else(|| {
            DATETIME_FORMATS.iter().find_map(|f| {
                NaiveDateTime::parse_from_str(raw, f)
                    .ok()
                    .map(|dt| dt.date())
            })
        })
}

/// Training part of each series plus the withheld final values.
#[derive(Clone, Debug)]
pub struct HoldoutSplit {
    pub train: Dataset,
    pub test: HashMap<String, Vec<f64>>,
}

impl HoldoutSplit {
    /// Pairs a training set with a separately loaded test set (the
    /// official M4 test file uses the same layout as the training file).
    pub fn from_parts(train: Dataset, test: &Dataset) -> Result<Self> {
        let missing: Vec<&str> = train.ids().filter(|id| test.get(id).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingIds {
                what: "test set".into(),
                ids: summarize_ids(&missing),
            });
        }
        let test = train
            .ids()
            .map(|id| {
                (
                    id.to_string(),
                    test.get(id).map(|s| s.values.clone()).unwrap_or_default(),
                )
            })
            .collect();
        Ok(HoldoutSplit { train, test })
    }

    pub fn actual(&self, id: &str) -> Option<&[f64]> {
        self.test.get(id).map(Vec::as_slice)
    }
}

/// Moves the last `h` values of every series into the test map.
pub fn holdout_split(dataset: &Dataset, h: usize) -> Result<HoldoutSplit> {
    if h == 0 {
        return Err(Error::invalid("holdout horizon must be positive"));
    }
    let mut train = Vec::with_capacity(dataset.len());
    let mut test = HashMap::with_capacity(dataset.len());
    for s in dataset {
        if s.len() <= h {
            return Err(Error::SeriesTooShort {
                id: s.id.clone(),
                len: s.len(),
                needed: h + 1,
            });
        }
        let cut = s.len() - h;
        let mut head = s.clone();
        let tail = head.values.split_off(cut);
        test.insert(s.id.clone(), tail);
        train.push(head);
    }
    Ok(HoldoutSplit {
        train: Dataset::new(train)?,
        test,
    })
}

/// Writes `id,F1,...,Fh` rows. Values use the shortest representation that
/// reads back to the same `f64`.
pub fn write_forecast_csv<'a, I>(path: impl AsRef<Path>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let rows: Vec<_> = rows.into_iter().collect();
    let h = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    write_rows(path.as_ref(), (1..=h).map(|i| format!("F{i}")), rows)
}

/// Reads a forecast CSV (same ragged layout as the value files) into
/// `(id, values)` pairs in file order.
pub fn read_forecast_csv(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<f64>)>> {
    let d = load_values_quiet(path.as_ref())?;
    Ok(d.series.into_iter().map(|s| (s.id, s.values)).collect())
}

fn load_values_quiet(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_m4_values(file, path)
}

fn write_rows<'a, H, I>(path: &Path, header: H, rows: I) -> Result<()>
where
    H: IntoIterator<Item = String>,
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(out, "id").map_err(io)?;
    for h in header {
        write!(out, ",{h}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for (id, values) in rows {
        write!(out, "{id}").map_err(io)?;
        for v in values {
            write!(out, ",{v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub(crate) fn summarize_ids(ids: &[&str]) -> String {
    const SHOWN: usize = 20;
    let mut s = ids
        .iter()
        .take(SHOWN)
        .copied()
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(" ... ({} total)", ids.len()));
    }
    s
}

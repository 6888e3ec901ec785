//! Transaction ingestion and position construction.
//!
//! Daily ledger rows are turned into cumulative share positions per investor,
//! one column per trading day, then each row is scaled by its own max-abs
//! value. Rows that never move (no trades, or strict daily round trips) are
//! dropped because they carry no profile to reconstruct.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Broad investor class carried along for the household/firm statistics.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum InvestorType {
    #[default]
    Household,
    Firm,
}

impl InvestorType {
    pub fn as_str(&self) -> &'static str {
        match self {
            InvestorType::Household => "household",
            InvestorType::Firm => "firm",
        }
    }
}

impl FromStr for InvestorType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "h" | "household" | "households" | "retail" => Ok(InvestorType::Household),
            "f" | "firm" | "firms" => Ok(InvestorType::Firm),
            other => Err(format!("unknown investor type {other:?}")),
        }
    }
}

/// One investor-day row of the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub investor_id: String,
    pub investor_type: InvestorType,
    pub day: NaiveDate,
    pub buy_shares: u64,
    pub sell_shares: u64,
    /// Currency turnover of the buys, when the source provides it.
    pub buy_value: Option<f64>,
    pub sell_value: Option<f64>,
}

impl TransactionRecord {
    pub fn new(id: impl Into<String>, day: NaiveDate, buy_shares: u64, sell_shares: u64) -> Self {
        Self {
            investor_id: id.into(),
            investor_type: InvestorType::Household,
            day,
            buy_shares,
            sell_shares,
            buy_value: None,
            sell_value: None,
        }
    }

    /// Signed share flow of the day.
    pub fn net_shares(&self) -> i64 {
        self.buy_shares as i64 - self.sell_shares as i64
    }
}

/// Column names used to locate fields in the CSV header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub investor_id: String,
    pub date: String,
    pub buy_shares: String,
    pub sell_shares: String,
    pub investor_type: String,
    pub buy_value: String,
    pub sell_value: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            investor_id: "investor_id".into(),
            date: "date".into(),
            buy_shares: "buy_shares".into(),
            sell_shares: "sell_shares".into(),
            investor_type: "investor_type".into(),
            buy_value: "buy_value".into(),
            sell_value: "sell_value".into(),
        }
    }
}

struct ColumnIndex {
    id: usize,
    date: usize,
    buy: usize,
    sell: usize,
    kind: Option<usize>,
    buy_value: Option<usize>,
    sell_value: Option<usize>,
}

impl ColumnIndex {
    fn locate(header: &csv::StringRecord, schema: &ColumnMap) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let required = |name: &str| {
            find(name).ok_or_else(|| Error::Schema(format!("missing required column {name:?}")))
        };
        Ok(Self {
            id: required(&schema.investor_id)?,
            date: required(&schema.date)?,
            buy: required(&schema.buy_shares)?,
            sell: required(&schema.sell_shares)?,
            kind: find(&schema.investor_type),
            buy_value: find(&schema.buy_value),
            sell_value: find(&schema.sell_value),
        })
    }
}

fn parse_shares(raw: &str, column: &str, row: usize) -> Result<u64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(0);
    }
    let value: i64 = raw.parse().map_err(|_| Error::Parse {
        row,
        message: format!("{column}: {raw:?} is not an integer share count"),
    })?;
    if value < 0 {
        return Err(Error::Validation(format!(
            "row {row}: negative {column} ({value})"
        )));
    }
    Ok(value as u64)
}

fn parse_value(raw: &str, column: &str, row: usize) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let value: f64 = raw.parse().map_err(|_| Error::Parse {
        row,
        message: format!("{column}: {raw:?} is not a number"),
    })?;
    if !value.is_finite() || value < 0.0 {
        return Err(Error::Validation(format!(
            "row {row}: {column} must be a non-negative amount, got {value}"
        )));
    }
    Ok(Some(value))
}

fn add_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x + y),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

/// Parse a ledger CSV into records sorted by `(investor_id, day)`.
///
/// Rows sharing an investor and a day are merged by summing their volumes.
/// Optional columns (type, currency values) may be absent from the header or
/// left empty per row.
pub fn parse_transactions<R: Read>(source: R, schema: &ColumnMap) -> Result<Vec<TransactionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    let cols = ColumnIndex::locate(&header, schema)?;

    let mut merged: BTreeMap<(String, NaiveDate), TransactionRecord> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        // header is line 1, first data row is row 2
        let row_no = i + 2;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |idx: usize| row.get(idx).unwrap_or("");
        let field_opt = |idx: Option<usize>| idx.map(|i| row.get(i).unwrap_or("")).unwrap_or("");

        let id = field(cols.id).trim();
        if id.is_empty() {
            return Err(Error::Parse {
                row: row_no,
                message: "empty investor id".into(),
            });
        }
        let date_raw = field(cols.date).trim();
        let day = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d").map_err(|e| Error::Parse {
            row: row_no,
            message: format!("malformed date {date_raw:?}: {e}"),
        })?;
        let investor_type = InvestorType::from_str(field_opt(cols.kind)).map_err(|message| {
            Error::Parse {
                row: row_no,
                message,
            }
        })?;
        let record = TransactionRecord {
            investor_id: id.to_string(),
            investor_type,
            day,
            buy_shares: parse_shares(field(cols.buy), &schema.buy_shares, row_no)?,
            sell_shares: parse_shares(field(cols.sell), &schema.sell_shares, row_no)?,
            buy_value: parse_value(field_opt(cols.buy_value), &schema.buy_value, row_no)?,
            sell_value: parse_value(field_opt(cols.sell_value), &schema.sell_value, row_no)?,
        };

        merged
            .entry((record.investor_id.clone(), day))
            .and_modify(|acc| {
                acc.buy_shares += record.buy_shares;
                acc.sell_shares += record.sell_shares;
                acc.buy_value = add_opt(acc.buy_value, record.buy_value);
                acc.sell_value = add_opt(acc.sell_value, record.sell_value);
            })
            .or_insert(record);
    }
    Ok(merged.into_values().collect())
}

/// Write records in the CSV layout [`parse_transactions`] reads with the default schema.
pub fn write_transactions<W: Write>(sink: W, records: &[TransactionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let map = ColumnMap::default();
    w.write_record([
        &map.investor_id,
        &map.date,
        &map.buy_shares,
        &map.sell_shares,
        &map.investor_type,
        &map.buy_value,
        &map.sell_value,
    ])
    .map_err(csv_io)?;
    for r in records {
        let fmt_val = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        w.write_record([
            r.investor_id.clone(),
            r.day.format("%Y-%m-%d").to_string(),
            r.buy_shares.to_string(),
            r.sell_shares.to_string(),
            r.investor_type.as_str().to_string(),
            fmt_val(r.buy_value),
            fmt_val(r.sell_value),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// The ordered trading days of the analysis window and the indices that
/// split it into the reference period and the investigation period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendar {
    days: Vec<NaiveDate>,
    reference_end: usize,
    pse_index: usize,
    delta_start: usize,
    delta_end: usize,
}

impl TradingCalendar {
    /// Build a calendar; the investigation window is `delta_start..=delta_end`.
    pub fn new(
        days: Vec<NaiveDate>,
        reference_end: usize,
        pse_index: usize,
        delta_start: usize,
        delta_end: usize,
    ) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::Config("calendar has no trading days".into()));
        }
        if days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("calendar days must be strictly increasing".into()));
        }
        let t = days.len();
        if !(reference_end < pse_index && pse_index < t) {
            return Err(Error::Config(format!(
                "need reference_end < pse_index < T, got {reference_end}, {pse_index}, {t}"
            )));
        }
        if !(reference_end < delta_start && delta_start <= delta_end && delta_end <= pse_index) {
            return Err(Error::Config(format!(
                "investigation window {delta_start}..={delta_end} must lie in ({reference_end}, {pse_index}]"
            )));
        }
        Ok(Self {
            days,
            reference_end,
            pse_index,
            delta_start,
            delta_end,
        })
    }

    /// Calendar whose investigation window is the `delta_len` trading days
    /// ending on the PSE day; everything before is reference period.
    pub fn with_trailing_window(days: Vec<NaiveDate>, pse_index: usize, delta_len: usize) -> Result<Self> {
        if delta_len == 0 || delta_len > pse_index {
            return Err(Error::Config(format!(
                "investigation window of {delta_len} days does not fit before PSE index {pse_index}"
            )));
        }
        let delta_start = pse_index + 1 - delta_len;
        Self::new(days, delta_start - 1, pse_index, delta_start, pse_index)
    }

    /// Synthetic calendar of consecutive weekdays starting at `start`.
    pub fn business_days(start: NaiveDate, t: usize) -> Vec<NaiveDate> {
        use chrono::{Datelike, Weekday};
        let mut days = Vec::with_capacity(t);
        let mut d = start;
        while days.len() < t {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                days.push(d);
            }
            d = d.succ_opt().expect("date overflow");
        }
        days
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn reference_end(&self) -> usize {
        self.reference_end
    }

    pub fn pse_index(&self) -> usize {
        self.pse_index
    }

    pub fn delta(&self) -> std::ops::RangeInclusive<usize> {
        self.delta_start..=self.delta_end
    }

    pub fn in_delta(&self, t: usize) -> bool {
        (self.delta_start..=self.delta_end).contains(&t)
    }

    pub fn index_of(&self, day: NaiveDate) -> Option<usize> {
        self.days.binary_search(&day).ok()
    }

    pub fn first_day(&self) -> NaiveDate {
        self.days[0]
    }

    pub fn last_day(&self) -> NaiveDate {
        self.days[self.days.len() - 1]
    }
}

/// How to cut the calendar out of the observed trading dates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarSpec {
    /// First day of the analysis window; defaults to the first observed date.
    pub t0: Option<NaiveDate>,
    /// Last day of the analysis window; defaults to the last observed date.
    pub t_end: Option<NaiveDate>,
    /// PSE day; defaults to the last trading day of the window.
    pub pse_date: Option<NaiveDate>,
    /// Length of the investigation period in trading days, ending on the PSE.
    pub delta_days: usize,
}

impl Default for CalendarSpec {
    fn default() -> Self {
        Self {
            t0: None,
            t_end: None,
            pse_date: None,
            delta_days: 21,
        }
    }
}

/// Derive the trading calendar from the dates present in `records`.
///
/// Non-trading days are simply absent; there is no interpolation.
pub fn derive_calendar(records: &[TransactionRecord], spec: &CalendarSpec) -> Result<TradingCalendar> {
    let days: BTreeSet<NaiveDate> = records
        .iter()
        .map(|r| r.day)
        .filter(|d| spec.t0.is_none_or(|t0| *d >= t0) && spec.t_end.is_none_or(|te| *d <= te))
        .collect();
    let days: Vec<NaiveDate> = days.into_iter().collect();
    if days.is_empty() {
        return Err(Error::Degenerate("no trading dates inside the analysis window".into()));
    }
    let pse_index = match spec.pse_date {
        None => days.len() - 1,
        Some(p) => days.binary_search(&p).map_err(|_| {
            Error::Config(format!("PSE date {p} is not a trading day in the window"))
        })?,
    };
    TradingCalendar::with_trailing_window(days, pse_index, spec.delta_days)
}

/// Keep only the records that fall inside the calendar's date range.
pub fn restrict_to_window(records: &[TransactionRecord], calendar: &TradingCalendar) -> Vec<TransactionRecord> {
    let (lo, hi) = (calendar.first_day(), calendar.last_day());
    records
        .iter()
        .filter(|r| r.day >= lo && r.day <= hi)
        .cloned()
        .collect()
}

/// Cumulative share positions before per-investor scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPositionMatrix {
    /// One row per investor, one column per trading day.
    pub psi: Vec<Vec<i64>>,
    pub investor_ids: Vec<String>,
    pub investor_types: Vec<InvestorType>,
    pub calendar: TradingCalendar,
}

/// Accumulate signed share flows into end-of-day positions.
///
/// Holdings are taken as zero before the first calendar day, so the first
/// column equals that day's net flow. Investors without records are absent.
pub fn build_positions(records: &[TransactionRecord], calendar: &TradingCalendar) -> Result<RawPositionMatrix> {
    let t = calendar.len();
    if t == 0 {
        return Err(Error::Config("empty calendar".into()));
    }
    let mut flows: BTreeMap<&str, (InvestorType, Vec<i64>)> = BTreeMap::new();
    for r in records {
        let idx = calendar.index_of(r.day).ok_or_else(|| {
            Error::Validation(format!(
                "record for {} on {} is not on a calendar trading day",
                r.investor_id, r.day
            ))
        })?;
        let entry = flows
            .entry(r.investor_id.as_str())
            .or_insert_with(|| (r.investor_type, vec![0; t]));
        entry.1[idx] += r.net_shares();
    }

    let mut psi = Vec::with_capacity(flows.len());
    let mut investor_ids = Vec::with_capacity(flows.len());
    let mut investor_types = Vec::with_capacity(flows.len());
    for (id, (kind, flow)) in flows {
        let row: Vec<i64> = flow
            .iter()
            .scan(0i64, |acc, f| {
                *acc += f;
                Some(*acc)
            })
            .collect();
        psi.push(row);
        investor_ids.push(id.to_string());
        investor_types.push(kind);
    }
    Ok(RawPositionMatrix {
        psi,
        investor_ids,
        investor_types,
        calendar: calendar.clone(),
    })
}

/// Max-abs scaled positions, the input to every reducer.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionMatrix {
    /// N x T, entries in [-1, 1].
    pub x: DMatrix<f64>,
    /// Per-investor max |psi| in shares.
    pub norms: Vec<f64>,
    /// Days with nonzero net share flow.
    pub activity_days: Vec<usize>,
    pub investor_ids: Vec<String>,
    pub investor_types: Vec<InvestorType>,
    pub calendar: TradingCalendar,
}

/// Count days on which a cumulative path moves (nonzero net flow).
pub fn activity_days<T: Copy + PartialEq + Default>(path: &[T]) -> usize {
    let mut prev = T::default();
    let mut count = 0;
    for &v in path {
        if v != prev {
            count += 1;
        }
        prev = v;
    }
    count
}

/// Scale a row by its max-abs value. Returns `None` for constant rows.
pub fn normalize_row(row: &[f64]) -> Option<(Vec<f64>, f64)> {
    let first = *row.first()?;
    if row.iter().all(|v| *v == first) {
        return None;
    }
    let norm = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if norm == 0.0 {
        return None;
    }
    Some((row.iter().map(|v| v / norm).collect(), norm))
}

/// Drop constant rows and divide the rest by their max-abs value.
pub fn normalize_and_filter(raw: &RawPositionMatrix) -> Result<PositionMatrix> {
    let t = raw.calendar.len();
    let mut data = Vec::new();
    let mut norms = Vec::new();
    let mut days = Vec::new();
    let mut ids = Vec::new();
    let mut types = Vec::new();
    for (i, row) in raw.psi.iter().enumerate() {
        if row.len() != t {
            return Err(Error::Shape(format!(
                "row {} has {} days, calendar has {t}",
                raw.investor_ids[i],
                row.len()
            )));
        }
        let as_f: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        if let Some((scaled, norm)) = normalize_row(&as_f) {
            data.extend(scaled);
            norms.push(norm);
            days.push(activity_days(row));
            ids.push(raw.investor_ids[i].clone());
            types.push(raw.investor_types[i]);
        }
    }
    if ids.is_empty() {
        return Err(Error::Degenerate(
            "every investor has a constant position; nothing left to analyse".into(),
        ));
    }
    let n = ids.len();
    Ok(PositionMatrix {
        x: DMatrix::from_row_slice(n, t, &data),
        norms,
        activity_days: days,
        investor_ids: ids,
        investor_types: types,
        calendar: raw.calendar.clone(),
    })
}

impl PositionMatrix {
    /// Wrap an already-scaled matrix. Activity days are inferred from the
    /// row paths and norms set to 1.
    pub fn from_matrix(x: DMatrix<f64>, investor_ids: Vec<String>, calendar: TradingCalendar) -> Result<Self> {
        if x.nrows() != investor_ids.len() || x.ncols() != calendar.len() {
            return Err(Error::Shape(format!(
                "matrix is {}x{}, expected {}x{}",
                x.nrows(),
                x.ncols(),
                investor_ids.len(),
                calendar.len()
            )));
        }
        let activity_days = (0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                activity_days(&row)
            })
            .collect();
        let n = x.nrows();
        Ok(Self {
            x,
            norms: vec![1.0; n],
            activity_days,
            investor_ids,
            investor_types: vec![InvestorType::Household; n],
            calendar,
        })
    }

    pub fn n_investors(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_days(&self) -> usize {
        self.x.ncols()
    }

    /// Keep only the rows selected by `keep`, in their original order.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let rows: Vec<usize> = (0..self.n_investors()).filter(|&i| keep(i)).collect();
        if rows.is_empty() {
            return Err(Error::Degenerate("row selection is empty".into()));
        }
        Ok(Self {
            x: self.x.select_rows(rows.iter()),
            norms: rows.iter().map(|&i| self.norms[i]).collect(),
            activity_days: rows.iter().map(|&i| self.activity_days[i]).collect(),
            investor_ids: rows.iter().map(|&i| self.investor_ids[i].clone()).collect(),
            investor_types: rows.iter().map(|&i| self.investor_types[i]).collect(),
            calendar: self.calendar.clone(),
        })
    }

    /// Row index lookup by investor id.
    pub fn index_map(&self) -> HashMap<&str, usize> {
        self.investor_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

/// Write a matrix file: `N T`, then N lines of T values, then N ids.
///
/// Values are written in shortest round-trip form so reloads are bit exact.
pub fn write_matrix_file<W: Write>(mut sink: W, x: &DMatrix<f64>, ids: &[String]) -> Result<()> {
    if ids.len() != x.nrows() {
        return Err(Error::Shape("id list length differs from row count".into()));
    }
    writeln!(sink, "{} {}", x.nrows(), x.ncols())?;
    for i in 0..x.nrows() {
        let line: Vec<String> = x.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(sink, "{}", line.join(" "))?;
    }
    for id in ids {
        writeln!(sink, "{id}")?;
    }
    Ok(())
}

/// Read back a file produced by [`write_matrix_file`].
pub fn read_matrix_file<R: Read>(source: R) -> Result<(DMatrix<f64>, Vec<String>)> {
    let reader = std::io::BufReader::new(source);
    let mut lines = reader.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Schema(format!("matrix file truncated before {what}")))?
            .map_err(Error::from)
    };
    let head = next("header")?;
    let dims: Vec<usize> = head
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Schema(format!("bad matrix header {head:?}")))?;
    let [n, t] = dims[..] else {
        return Err(Error::Schema(format!("bad matrix header {head:?}")));
    };
    let mut data = Vec::with_capacity(n * t);
    for i in 0..n {
        let line = next("matrix rows")?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                row: i + 2,
                message: "non-numeric matrix entry".into(),
            })?;
        if row.len() != t {
            return Err(Error::Shape(format!("matrix row {i} has {} values, expected {t}", row.len())));
        }
        data.extend(row);
    }
    let ids = (0..n).map(|_| next("id list")).collect::<Result<Vec<_>>>()?;
    Ok((DMatrix::from_row_slice(n, t, &data), ids))
}

//! CSV exports of the anomaly report and the score histograms.

use std::io::Write;

use super::criterion::AnomalyReport;
use super::scores::ScoreTable;
use crate::error::{Error, Result};
use crate::ingest::{csv_io, TradingCalendar};

/// One row per investor in input order.
pub fn write_report_csv<W: Write>(sink: W, report: &AnomalyReport, calendar: &TradingCalendar) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "investor_id",
        "s_star",
        "t_star_date",
        "d",
        "n_tstar",
        "net_buy",
        "flagged",
        "rank",
        "rank_distance",
    ])
    .map_err(csv_io)?;
    for r in &report.records {
        let day = calendar
            .days()
            .get(r.t_star)
            .ok_or_else(|| Error::Shape(format!("peak day {} outside the calendar", r.t_star)))?;
        w.write_record([
            r.investor_id.clone(),
            r.s_star.to_string(),
            day.format("%Y-%m-%d").to_string(),
            r.d.to_string(),
            r.n_tstar.to_string(),
            r.net_buy.to_string(),
            r.flagged.to_string(),
            r.rank.map(|v| v.to_string()).unwrap_or_default(),
            r.rank_distance.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Equal-width histogram of s* over [0, max s*].
pub fn write_s_star_histogram<W: Write>(sink: W, scores: &ScoreTable, bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let hi = scores.s_star.iter().copied().fold(0.0, f64::max);
    let width = if hi > 0.0 { hi / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &s in &scores.s_star {
        let b = ((s / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["bin_low", "bin_high", "count"]).map_err(csv_io)?;
    for (b, c) in counts.iter().enumerate() {
        w.write_record([
            (width * b as f64).to_string(),
            (width * (b + 1) as f64).to_string(),
            c.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-day count of investors peaking on that day.
pub fn write_t_star_histogram<W: Write>(sink: W, scores: &ScoreTable, calendar: &TradingCalendar) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["day_index", "date", "n_t", "in_window"]).map_err(csv_io)?;
    for (t, (n, day)) in scores.n_t.iter().zip(calendar.days()).enumerate() {
        w.write_record([
            t.to_string(),
            day.format("%Y-%m-%d").to_string(),
            n.to_string(),
            calendar.in_delta(t).to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

//! The flagging rule and the ranking of flagged investors.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use serde::Serialize;

use super::scores::ScoreTable;
use super::threshold::{find_epsilon_theta, find_n_theta, EpsilonMode};
use crate::error::{Error, Result};
use crate::ingest::PositionMatrix;
use crate::recon::Reconstruction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    pub epsilon_theta: f64,
    pub n_theta: f64,
    pub d_theta: usize,
    pub net_buy_threshold: f64,
    pub epsilon_mode: EpsilonMode,
    /// Test the crowding clause on the investor's peak day instead of on
    /// each candidate day.
    pub nt_on_tstar_only: bool,
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon_theta.is_finite() || !self.n_theta.is_finite() || !self.net_buy_threshold.is_finite() {
            return Err(Error::Config("thresholds must be finite".into()));
        }
        Ok(())
    }
}

/// How thresholds are obtained for a run: fixed values where given,
/// data-driven otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdPolicy {
    pub epsilon_theta: Option<f64>,
    pub n_theta: Option<f64>,
    pub d_theta: usize,
    pub net_buy_threshold: f64,
    pub nt_on_tstar_only: bool,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            epsilon_theta: None,
            n_theta: None,
            d_theta: 3,
            net_buy_threshold: 0.5,
            nt_on_tstar_only: false,
        }
    }
}

impl ThresholdPolicy {
    pub fn resolve(&self, scores: &ScoreTable) -> Result<Thresholds> {
        let (epsilon_theta, epsilon_mode) = match self.epsilon_theta {
            Some(v) => (v, EpsilonMode::BimodalMinimum),
            None => {
                let e = find_epsilon_theta(&scores.s_star)?;
                (e.value, e.mode)
            }
        };
        let n_theta = match self.n_theta {
            Some(v) => v,
            None => find_n_theta(&scores.n_t)?,
        };
        let th = Thresholds {
            epsilon_theta,
            n_theta,
            d_theta: self.d_theta,
            net_buy_threshold: self.net_buy_threshold,
            epsilon_mode,
            nt_on_tstar_only: self.nt_on_tstar_only,
        };
        th.validate()?;
        Ok(th)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvestorRecord {
    pub investor_id: String,
    pub s_star: f64,
    pub t_star: usize,
    pub d: usize,
    pub n_tstar: usize,
    /// Normalised position on the event day minus that on the first day.
    pub net_buy: f64,
    pub flagged: bool,
    /// 1-based position among flagged investors.
    pub rank: Option<usize>,
    pub rank_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyReport {
    pub records: Vec<InvestorRecord>,
    /// Row indices of flagged investors, in rank order once ranked.
    pub flagged: Vec<usize>,
    pub thresholds: Thresholds,
}

impl AnomalyReport {
    pub fn flagged_ids(&self) -> Vec<&str> {
        self.flagged.iter().map(|&i| self.records[i].investor_id.as_str()).collect()
    }
}

/// Where the flagging rule looks: the investigation window and the two days
/// whose positions define a net buy.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub delta: RangeInclusive<usize>,
    pub start: usize,
    pub pse: usize,
}

impl Window {
    pub fn of(positions: &PositionMatrix) -> Self {
        let c = &positions.calendar;
        Self {
            delta: c.delta(),
            start: 0,
            pse: c.pse_index(),
        }
    }
}

/// Flag investor `i` when some day `t` in the window has error at least
/// `epsilon_theta`, passes the crowding test (`n_t < n_theta`, waived for
/// investors active on at most `d_theta` days) and the investor's net buy
/// exceeds the threshold.
pub fn apply_criterion(
    scores: &ScoreTable,
    recon: &Reconstruction,
    positions: &PositionMatrix,
    th: &Thresholds,
) -> Result<AnomalyReport> {
    flag(scores, &recon.errors, &positions.x, &positions.investor_ids, &Window::of(positions), th)
}

pub fn flag(
    scores: &ScoreTable,
    errors: &DMatrix<f64>,
    x: &DMatrix<f64>,
    ids: &[String],
    window: &Window,
    th: &Thresholds,
) -> Result<AnomalyReport> {
    th.validate()?;
    let (n, t) = errors.shape();
    if x.shape() != (n, t) || ids.len() != n || scores.len() != n || scores.n_t.len() != t {
        return Err(Error::Shape("scores, errors, positions and ids disagree".into()));
    }
    if window.delta.is_empty() || *window.delta.end() >= t || window.pse >= t {
        return Err(Error::Config("investigation window is empty or out of range".into()));
    }
    let records = (0..n)
        .map(|i| {
            let net_buy = x[(i, window.pse)] - x[(i, window.start)];
            let crowd_exempt = scores.d[i] <= th.d_theta;
            let flagged = net_buy > th.net_buy_threshold
                && window.delta.clone().any(|day| {
                    let n_day = if th.nt_on_tstar_only {
                        scores.n_at_peak(i)
                    } else {
                        scores.n_t[day]
                    };
                    errors[(i, day)] >= th.epsilon_theta && (crowd_exempt || (n_day as f64) < th.n_theta)
                });
            InvestorRecord {
                investor_id: ids[i].clone(),
                s_star: scores.s_star[i],
                t_star: scores.t_star[i],
                d: scores.d[i],
                n_tstar: scores.n_at_peak(i),
                net_buy,
                flagged,
                rank: None,
                rank_distance: None,
            }
        })
        .collect::<Vec<_>>();
    let flagged = records.iter().enumerate().filter(|(_, r)| r.flagged).map(|(i, _)| i).collect();
    Ok(AnomalyReport {
        records,
        flagged,
        thresholds: th.clone(),
    })
}

/// Order flagged investors by distance to (1, 0) in the plane of min-max
/// normalised (s*, masked peak-day crowding), nearest first. Ties go to the
/// larger raw s*, then to the smaller id. Fills `rank` and `rank_distance`
/// and reorders `report.flagged`.
pub fn rank(report: &mut AnomalyReport) -> Vec<String> {
    let d_theta = report.thresholds.d_theta;
    let points: Vec<(usize, f64, f64)> = report
        .flagged
        .iter()
        .map(|&i| {
            let r = &report.records[i];
            let crowd = if r.d > d_theta { r.n_tstar as f64 } else { 0.0 };
            (i, r.s_star, crowd)
        })
        .collect();
    let range = |f: fn(&(usize, f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi - lo)
    };
    let (s_lo, s_span) = range(|p| p.1);
    let (c_lo, c_span) = range(|p| p.2);
    let mut scored: Vec<(usize, f64)> = points
        .iter()
        .map(|&(i, s, c)| {
            let s_norm = if s_span > 0.0 { (s - s_lo) / s_span } else { 1.0 };
            let c_norm = if c_span > 0.0 { (c - c_lo) / c_span } else { 0.0 };
            (i, ((1.0 - s_norm).powi(2) + c_norm.powi(2)).sqrt())
        })
        .collect();
    let records = &report.records;
    scored.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(records[b.0].s_star.total_cmp(&records[a.0].s_star))
            .then(records[a.0].investor_id.cmp(&records[b.0].investor_id))
    });
    for (pos, &(i, dist)) in scored.iter().enumerate() {
        report.records[i].rank = Some(pos + 1);
        report.records[i].rank_distance = Some(dist);
    }
    report.flagged = scored.iter().map(|p| p.0).collect();
    report.flagged.iter().map(|&i| report.records[i].investor_id.clone()).collect()
}

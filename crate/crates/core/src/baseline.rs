//! k-means comparison baseline on per-window Euro features.
//!
//! Each window gives every investor a point (signed turnover, signed maximum
//! exposure), both scaled by their largest magnitude across investors. The
//! cluster whose centroid is nearest (1, 1) is the most rewarding one; an
//! investor is anomalous when it sits there in the investigation window but
//! never did in the reference windows.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use chrono::Datelike;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{csv_io, TradingCalendar, TransactionRecord};
use crate::par;

// daily net Euro flow and whether the investor traded that day
type DailyFlow = (Vec<f64>, Vec<bool>);
// cluster of each investor (None when inactive) and the centroids
type WindowClusters = (Vec<Option<usize>>, Vec<[f64; 2]>);

pub const MAX_ITERATIONS: usize = 300;

/// Inclusive range of calendar day indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DayWindow {
    pub start: usize,
    pub end: usize,
}

/// Calendar-month windows over the reference period followed by the
/// investigation window.
pub fn monthly_windows(calendar: &TradingCalendar) -> Vec<DayWindow> {
    let days = calendar.days();
    let mut windows: Vec<DayWindow> = Vec::new();
    for t in 0..=calendar.reference_end() {
        let same_month = t > 0 && (days[t].year(), days[t].month()) == (days[t - 1].year(), days[t - 1].month());
        match windows.last_mut() {
            Some(w) if same_month => w.end = t,
            _ => windows.push(DayWindow { start: t, end: t }),
        }
    }
    let delta = calendar.delta();
    windows.push(DayWindow {
        start: *delta.start(),
        end: *delta.end(),
    });
    windows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowFeatures {
    pub investor_id: String,
    pub window_index: usize,
    pub signed_turnover: f64,
    pub max_exposure: f64,
    pub active: bool,
}

/// Features for every investor in every window, `result[w][i]`, investors in
/// id order. The last window is the investigation window.
pub fn window_features(
    records: &[TransactionRecord],
    calendar: &TradingCalendar,
    windows: &[DayWindow],
) -> Result<Vec<Vec<WindowFeatures>>> {
    if records.iter().any(|r| r.buy_value.is_none() || r.sell_value.is_none()) {
        return Err(Error::BaselineUnavailable(
            "the k-means baseline needs buy and sell values in currency".into(),
        ));
    }
    let t = calendar.len();
    if windows.iter().any(|w| w.start > w.end || w.end >= t) {
        return Err(Error::Config("baseline window outside the calendar".into()));
    }
    // per investor: daily net Euro flow and daily traded volume
    let mut daily: BTreeMap<&str, DailyFlow> = BTreeMap::new();
    for r in records {
        let Some(d) = calendar.index_of(r.day) else { continue };
        let entry = daily
            .entry(r.investor_id.as_str())
            .or_insert_with(|| (vec![0.0; t], vec![false; t]));
        entry.0[d] += r.buy_value.unwrap_or(0.0) - r.sell_value.unwrap_or(0.0);
        entry.1[d] |= r.buy_shares > 0 || r.sell_shares > 0;
    }
    let investors: Vec<(&str, &DailyFlow)> = daily.iter().map(|(k, v)| (*k, v)).collect();

    let out = par::map_range(windows.len(), |wi| {
        let w = windows[wi];
        let mut rows: Vec<WindowFeatures> = investors
            .iter()
            .map(|(id, (flow, traded))| {
                let mut cum = 0.0;
                let mut exposure = 0.0f64;
                for &f in &flow[w.start..=w.end] {
                    cum += f;
                    if cum.abs() > exposure.abs() {
                        exposure = cum;
                    }
                }
                WindowFeatures {
                    investor_id: id.to_string(),
                    window_index: wi,
                    signed_turnover: cum,
                    max_exposure: exposure,
                    active: traded[w.start..=w.end].iter().any(|b| *b),
                }
            })
            .collect();
        let scale = |f: fn(&WindowFeatures) -> f64, rows: &[WindowFeatures]| {
            rows.iter().map(|r| f(r).abs()).fold(0.0, f64::max)
        };
        let st = scale(|r| r.signed_turnover, &rows);
        let se = scale(|r| r.max_exposure, &rows);
        for r in &mut rows {
            if st > 0.0 {
                r.signed_turnover /= st;
            }
            if se > 0.0 {
                r.max_exposure /= se;
            }
        }
        rows
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    /// Within-cluster sum of squared distances.
    pub sse: f64,
    pub iterations: usize,
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: &[f64; 2], centroids: &[[f64; 2]]) -> usize {
    let mut best = 0;
    for (c, q) in centroids.iter().enumerate().skip(1) {
        if dist2(p, q) < dist2(p, &centroids[best]) {
            best = c;
        }
    }
    best
}

/// Total within-cluster squared distance of an assignment to its cluster
/// means.
pub fn partition_sse(points: &[[f64; 2]], assignments: &[usize], k: usize) -> f64 {
    let mut sums = vec![[0.0, 0.0, 0.0]; k];
    for (p, &a) in points.iter().zip(assignments) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
        sums[a][2] += 1.0;
    }
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| {
            let s = sums[a];
            dist2(p, &[s[0] / s[2], s[1] / s[2]])
        })
        .sum()
}

fn plus_plus_seeds<R: Rng>(points: &[[f64; 2]], k: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[[f64; 2]], mut centroids: Vec<[f64; 2]>) -> KMeansResult {
    let k = centroids.len();
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![[0.0, 0.0, 0.0]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            sums[a][2] += 1.0;
        }
        for (c, s) in centroids.iter_mut().zip(&sums) {
            if s[2] > 0.0 {
                *c = [s[0] / s[2], s[1] / s[2]];
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let sse = points.iter().zip(&assignments).map(|(p, &a)| dist2(p, &centroids[a])).sum();
    KMeansResult {
        assignments,
        centroids,
        sse,
        iterations,
    }
}

fn distinct_points(points: &[[f64; 2]]) -> usize {
    let mut v: Vec<(u64, u64)> = points.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// k-means++ seeding followed by Lloyd iterations, restarted `n_init` times
/// from seeds derived from `seed`; the lowest SSE wins.
pub fn kmeans(points: &[[f64; 2]], k: usize, seed: u64, n_init: usize) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Config("k-means needs k >= 1".into()));
    }
    let distinct = distinct_points(points);
    if k > distinct {
        return Err(Error::Config(format!("k = {k} exceeds the {distinct} distinct points")));
    }
    let mut best: Option<KMeansResult> = None;
    for run in 0..n_init.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64));
        let result = lloyd(points, plus_plus_seeds(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| result.sse < b.sse) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one run"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Label {
    Normal,
    Soft,
    Hard,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Normal => "normal",
            Self::Soft => "soft",
            Self::Hard => "hard",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BaselineLabel {
    pub investor_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineConfig {
    pub k: usize,
    pub seed: u64,
    pub n_init: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            k: 4,
            seed: 0,
            n_init: 10,
        }
    }
}

/// Cluster each window's active investors and label the discontinuities.
/// `features[w][i]` must list the same investors in the same order for every
/// window; the last window is the investigation window.
pub fn label_baseline(features: &[Vec<WindowFeatures>], cfg: &BaselineConfig) -> Result<Vec<BaselineLabel>> {
    if features.len() < 2 {
        return Err(Error::Config("the baseline needs a reference window and an investigation window".into()));
    }
    let n = features[0].len();
    if features.iter().any(|w| w.len() != n) {
        return Err(Error::Shape("every window must list the same investors".into()));
    }
    // per window: cluster of each investor (None when inactive) and centroids
    let clustered = par::map_range(features.len(), |w| -> Result<WindowClusters> {
        let active: Vec<usize> = (0..n).filter(|&i| features[w][i].active).collect();
        let points: Vec<[f64; 2]> = active
            .iter()
            .map(|&i| [features[w][i].signed_turnover, features[w][i].max_exposure])
            .collect();
        let mut clusters = vec![None; n];
        if points.is_empty() {
            return Ok((clusters, Vec::new()));
        }
        let k = cfg.k.min(distinct_points(&points));
        let seed = cfg.seed.wrapping_add((w as u64) << 32);
        let result = kmeans(&points, k, seed, cfg.n_init)?;
        for (&i, &a) in active.iter().zip(&result.assignments) {
            clusters[i] = Some(a);
        }
        Ok((clusters, result.centroids))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let (delta_clusters, delta_centroids) = clustered.last().expect("at least two windows");
    let mut labels: Vec<BaselineLabel> = features[0]
        .iter()
        .map(|f| BaselineLabel {
            investor_id: f.investor_id.clone(),
            label: Label::Normal,
        })
        .collect();
    if delta_centroids.is_empty() {
        return Ok(labels);
    }
    let rewarding = nearest(&[1.0, 1.0], delta_centroids);
    let reference = &clustered[..clustered.len() - 1];
    // map every reference cluster to its nearest investigation-window cluster
    let mapped: Vec<Vec<usize>> = reference
        .iter()
        .map(|(_, cents)| cents.iter().map(|c| nearest(c, delta_centroids)).collect())
        .collect();
    for (i, label) in labels.iter_mut().enumerate() {
        if delta_clusters[i] != Some(rewarding) {
            continue;
        }
        let mut active_before = false;
        let mut was_rewarding = false;
        for (w, (clusters, _)) in reference.iter().enumerate() {
            if let Some(c) = clusters[i] {
                active_before = true;
                was_rewarding |= mapped[w][c] == rewarding;
            }
        }
        label.label = match (active_before, was_rewarding) {
            (false, _) => Label::Hard,
            (true, false) => Label::Soft,
            (true, true) => Label::Normal,
        };
    }
    Ok(labels)
}

/// Features on monthly windows followed by labelling.
pub fn run_baseline(
    records: &[TransactionRecord],
    calendar: &TradingCalendar,
    cfg: &BaselineConfig,
) -> Result<Vec<BaselineLabel>> {
    let windows = monthly_windows(calendar);
    let features = window_features(records, calendar, &windows)?;
    label_baseline(&features, cfg)
}

pub fn write_labels_csv<W: Write>(sink: W, labels: &[BaselineLabel]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["investor_id", "label"]).map_err(csv_io)?;
    for l in labels {
        w.write_record([l.investor_id.as_str(), &l.label.to_string()]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

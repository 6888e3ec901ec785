//! Seeded synthetic transaction data with planted insiders.
//!
//! Normal investors follow a target position built from a few common slow
//! factors plus an idiosyncratic mean-reverting term, and trade towards it
//! on randomly chosen days. Hard insiders only trade inside the
//! investigation window, soft insiders trade normally and then buy heavily
//! inside it, strict daily traders buy and sell the same amount whenever
//! they trade. On shock days a fraction of normal investors all buy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{csv_io, InvestorType, TradingCalendar, TransactionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShockDay {
    pub day: usize,
    /// Probability that each normal investor joins the shock.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub n_normal: usize,
    pub n_hard: usize,
    pub n_soft: usize,
    pub n_daily: usize,
    pub t_days: usize,
    pub reference_end: usize,
    pub pse_index: usize,
    pub shock_days: Vec<ShockDay>,
    pub seed: u64,
    /// Share price per day; when present, trades carry Euro values.
    pub price_path: Option<Vec<f64>>,
    pub start_date: NaiveDate,
    /// Number of common factors driving normal investors.
    pub factors: usize,
    /// Loadings on factor `j` (0-based) scale as `(j + 1)^-factor_decay`.
    pub factor_decay: f64,
    /// Per-day reversion of the common factors.
    pub factor_reversion: f64,
    /// Per-day reversion of the idiosyncratic term.
    pub idio_reversion: f64,
    /// Size of the idiosyncratic term relative to the common part.
    pub idio_scale: f64,
    /// Range of per-investor trading probabilities per day.
    pub trade_prob: (f64, f64),
    /// Range of per-investor position scales in shares (log-uniform).
    pub share_scale: (f64, f64),
    /// Soft insider purchases as multiples of their normal peak position.
    pub soft_multiplier: (f64, f64),
    /// Shock purchases as multiples of the participant's scale.
    pub shock_size: (f64, f64),
    /// Participants sell the shock purchase back over up to this many days.
    pub shock_unwind_days: usize,
    pub firm_share: f64,
}

impl ScenarioConfig {
    /// 2,000 normal investors, 20 hard and 10 soft insiders, 120 days with the
    /// last 21 as investigation window ending on the event, and one shock day
    /// inside the window joined by 30% of normal investors.
    pub fn standard(seed: u64) -> Self {
        let t_days = 120;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let shock = 109;
        let noise = Normal::new(0.0, 0.012).expect("valid normal");
        let mut price: f64 = 10.0;
        let price_path = (0..t_days)
            .map(|t| {
                if t > 0 {
                    let jump: f64 = if t == shock { 0.07 } else { 0.0 };
                    price *= (noise.sample(&mut rng) + jump).exp();
                }
                (price * 1e4f64).round() / 1e4
            })
            .collect();
        Self {
            n_normal: 2000,
            n_hard: 20,
            n_soft: 10,
            n_daily: 0,
            t_days,
            reference_end: 98,
            pse_index: 119,
            shock_days: vec![ShockDay {
                day: shock,
                fraction: 0.3,
            }],
            seed,
            price_path: Some(price_path),
            start_date: NaiveDate::from_ymd_opt(2020, 1, 6).expect("valid date"),
            factors: 30,
            factor_decay: 0.75,
            factor_reversion: 0.1,
            idio_reversion: 0.1,
            idio_scale: 0.03,
            trade_prob: (0.5, 1.0),
            share_scale: (200.0, 5000.0),
            soft_multiplier: (4.0, 8.0),
            shock_size: (0.1, 0.3),
            shock_unwind_days: 8,
            firm_share: 0.15,
        }
    }

    /// A small scenario for quick runs and tests.
    pub fn small(seed: u64) -> Self {
        Self {
            n_normal: 200,
            n_hard: 4,
            n_soft: 2,
            n_daily: 5,
            t_days: 40,
            reference_end: 29,
            pse_index: 39,
            shock_days: vec![ShockDay { day: 33, fraction: 0.3 }],
            price_path: None,
            ..Self::standard(seed)
        }
    }

    pub fn calendar(&self) -> Result<TradingCalendar> {
        let days = TradingCalendar::business_days(self.start_date, self.t_days);
        TradingCalendar::new(days, self.reference_end, self.pse_index, self.reference_end + 1, self.pse_index)
    }

    pub fn validate(&self) -> Result<()> {
        self.calendar()?;
        if let Some(p) = &self.price_path {
            if p.len() != self.t_days || p.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config("price path must have one positive price per day".into()));
            }
        }
        for s in &self.shock_days {
            if s.day >= self.t_days || !(0.0..=1.0).contains(&s.fraction) {
                return Err(Error::Config(format!("invalid shock day {s:?}")));
            }
        }
        let ordered = |r: (f64, f64)| r.0 > 0.0 && r.0 <= r.1;
        if !ordered(self.share_scale) || !ordered(self.soft_multiplier) || !ordered(self.shock_size) {
            return Err(Error::Config("scenario ranges must be positive and ordered".into()));
        }
        if !(self.trade_prob.0 > 0.0 && self.trade_prob.0 <= self.trade_prob.1 && self.trade_prob.1 <= 1.0) {
            return Err(Error::Config("trade probabilities must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum TruthLabel {
    Normal,
    Hard,
    Soft,
    Daily,
}

impl fmt::Display for TruthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Normal => "normal",
            Self::Hard => "hard",
            Self::Soft => "soft",
            Self::Daily => "daily",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub records: Vec<TransactionRecord>,
    pub truth: BTreeMap<String, TruthLabel>,
    /// Normal investors that traded on a shock day.
    pub shock_participants: BTreeSet<String>,
    pub calendar: TradingCalendar,
}

impl Scenario {
    pub fn ids_with(&self, label: TruthLabel) -> BTreeSet<String> {
        self.truth
            .iter()
            .filter(|(_, l)| **l == label)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn write_truth_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["investor_id", "label", "shock_participant"]).map_err(csv_io)?;
        for (id, label) in &self.truth {
            w.write_record([
                id.clone(),
                label.to_string(),
                self.shock_participants.contains(id).to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..r.1)
    }
}

fn log_uniform<R: Rng>(rng: &mut R, r: (f64, f64)) -> f64 {
    uniform(rng, (r.0.ln(), r.1.ln())).exp()
}

/// Mean-reverting path `y(t) = (1 - k) y(t-1) + z(t)` with unit-variance
/// shocks scaled to a stationary standard deviation of one.
fn ou_path<R: Rng>(rng: &mut R, t: usize, reversion: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let step = (1.0 - (1.0 - reversion).powi(2)).sqrt();
    let mut y = 0.0;
    (0..t)
        .map(|_| {
            y = (1.0 - reversion) * y + step * normal.sample(rng);
            y
        })
        .collect()
}

/// Integrated mean-reverting velocity, rescaled to unit maximum magnitude:
/// a smooth trend that starts at zero.
fn smooth_path<R: Rng>(rng: &mut R, t: usize, reversion: f64) -> Vec<f64> {
    let velocity = ou_path(rng, t, reversion);
    let mut level = 0.0;
    let path: Vec<f64> = velocity
        .iter()
        .map(|v| {
            level += v;
            level
        })
        .collect();
    let peak = path.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    path.into_iter().map(|v| v / peak).collect()
}

/// Generate the scenario. Deterministic for a fixed configuration.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let calendar = cfg.calendar()?;
    let t = cfg.t_days;
    let delta_start = cfg.reference_end + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");

    let factors: Vec<Vec<f64>> = (0..cfg.factors).map(|_| smooth_path(&mut rng, t, cfg.factor_reversion)).collect();

    let mut roles: Vec<TruthLabel> = [
        (TruthLabel::Normal, cfg.n_normal),
        (TruthLabel::Hard, cfg.n_hard),
        (TruthLabel::Soft, cfg.n_soft),
        (TruthLabel::Daily, cfg.n_daily),
    ]
    .iter()
    .flat_map(|&(l, n)| std::iter::repeat_n(l, n))
    .collect();
    roles.shuffle(&mut rng);
    let width = roles.len().max(1).to_string().len();

    let mut truth = BTreeMap::new();
    let mut shock_participants = BTreeSet::new();
    // (id, type, daily flows, daily round-trip volume)
    let mut investors: Vec<(String, InvestorType, Vec<i64>, Vec<u64>)> = Vec::with_capacity(roles.len());

    for (n, &role) in roles.iter().enumerate() {
        let id = format!("inv{:0width$}", n + 1);
        let investor_type = if rng.random_bool(cfg.firm_share) {
            InvestorType::Firm
        } else {
            InvestorType::Household
        };
        let scale = log_uniform(&mut rng, cfg.share_scale);
        let mut churn = vec![0u64; t];
        let path: Vec<i64> = match role {
            TruthLabel::Normal | TruthLabel::Soft => {
                let mut p = normal_path(&mut rng, cfg, &factors, scale, &normal);
                if role == TruthLabel::Normal {
                    for shock in &cfg.shock_days {
                        if rng.random_bool(shock.fraction) {
                            let size = (uniform(&mut rng, cfg.shock_size) * scale).round().max(1.0);
                            let hold = rng.random_range(1..=cfg.shock_unwind_days.max(1));
                            for (k, v) in p.iter_mut().enumerate().skip(shock.day) {
                                let left = 1.0 - ((k - shock.day) as f64 / hold as f64).min(1.0);
                                *v += (size * left).round() as i64;
                            }
                            shock_participants.insert(id.clone());
                        }
                    }
                } else {
                    let peak = p.iter().map(|v| v.abs()).max().unwrap_or(0).max(scale.round() as i64);
                    let total = (uniform(&mut rng, cfg.soft_multiplier) * peak as f64).round() as i64;
                    let buys = rng.random_range(1..=2usize);
                    let days = pick_days(&mut rng, delta_start, cfg.pse_index, buys);
                    let mut left = total;
                    for (j, &d) in days.iter().enumerate() {
                        let amount = if j + 1 == days.len() { left } else { left / 2 };
                        left -= amount;
                        for v in p.iter_mut().skip(d) {
                            *v += amount;
                        }
                    }
                }
                p
            }
            TruthLabel::Hard => {
                let len = cfg.pse_index + 1 - delta_start;
                let first = delta_start + rng.random_range(0..=(len - 1) / 3);
                let buys = rng.random_range(1..=3usize);
                let last_buy = cfg.pse_index.saturating_sub(1).max(first);
                let mut days = vec![first];
                if last_buy > first {
                    days.extend(pick_days(&mut rng, first + 1, last_buy, buys - 1));
                }
                days.sort_unstable();
                days.dedup();
                // the first purchase carries most of the final position
                let total = log_uniform(&mut rng, cfg.share_scale) * 2.0;
                let first_share = if days.len() == 1 { 1.0 } else { uniform(&mut rng, (0.8, 0.95)) };
                let rest = days.len().saturating_sub(1).max(1) as f64;
                let mut p = vec![0i64; t];
                for (j, &d) in days.iter().enumerate() {
                    let share = if j == 0 { first_share } else { (1.0 - first_share) / rest };
                    let amount = (total * share).round().max(1.0) as i64;
                    for v in p.iter_mut().skip(d) {
                        *v += amount;
                    }
                }
                p
            }
            TruthLabel::Daily => {
                let prob = uniform(&mut rng, cfg.trade_prob);
                for c in churn.iter_mut() {
                    if rng.random_bool(prob) {
                        *c = (scale * uniform(&mut rng, (0.2, 1.0))).round().max(1.0) as u64;
                    }
                }
                if churn.iter().all(|c| *c == 0) {
                    churn[0] = scale.round().max(1.0) as u64;
                }
                vec![0; t]
            }
        };
        let mut flows = Vec::with_capacity(t);
        let mut prev = 0;
        for &v in &path {
            flows.push(v - prev);
            prev = v;
        }
        truth.insert(id.clone(), role);
        investors.push((id, investor_type, flows, churn));
    }

    let days = calendar.days();
    let mut records = Vec::new();
    for (id, investor_type, flows, churn) in &investors {
        for d in 0..t {
            let net = flows[d];
            let buy = net.max(0) as u64 + churn[d];
            let sell = (-net).max(0) as u64 + churn[d];
            if buy == 0 && sell == 0 {
                continue;
            }
            let mut r = TransactionRecord::new(id.clone(), days[d], buy, sell);
            r.investor_type = *investor_type;
            if let Some(prices) = &cfg.price_path {
                let cents = |shares: u64| (shares as f64 * prices[d] * 100.0).round() / 100.0;
                r.buy_value = Some(cents(buy));
                r.sell_value = Some(cents(sell));
            }
            records.push(r);
        }
    }
    records.sort_by(|a, b| a.day.cmp(&b.day).then_with(|| a.investor_id.cmp(&b.investor_id)));

    Ok(Scenario {
        records,
        truth,
        shock_participants,
        calendar,
    })
}

/// Integer position that follows the investor's target on trading days and
/// stays put otherwise.
fn normal_path<R: Rng>(
    rng: &mut R,
    cfg: &ScenarioConfig,
    factors: &[Vec<f64>],
    scale: f64,
    normal: &Normal<f64>,
) -> Vec<i64> {
    let t = cfg.t_days;
    let loadings: Vec<f64> = (0..factors.len())
        .map(|j| normal.sample(rng) * ((j + 1) as f64).powf(-cfg.factor_decay))
        .collect();
    let idio = ou_path(rng, t, cfg.idio_reversion);
    let prob = uniform(rng, cfg.trade_prob);
    let norm = loadings.iter().map(|l| l * l).sum::<f64>().sqrt().max(1e-9);
    let mut pos = 0i64;
    (0..t)
        .map(|d| {
            if rng.random_bool(prob) {
                let common: f64 = factors.iter().zip(&loadings).map(|(f, l)| f[d] * l).sum::<f64>();
                let target = scale * (common / norm + cfg.idio_scale * idio[d]);
                pos = target.round() as i64;
            }
            pos
        })
        .collect()
}

/// Up to `count` distinct days in `lo..=hi`, sorted.
fn pick_days<R: Rng>(rng: &mut R, lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if hi < lo || count == 0 {
        return Vec::new();
    }
    let mut all: Vec<usize> = (lo..=hi).collect();
    all.shuffle(rng);
    all.truncate(count);
    all.sort_unstable();
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_positions, normalize_and_filter};

    fn tiny_hard() -> ScenarioConfig {
        ScenarioConfig {
            n_normal: 0,
            n_hard: 1,
            n_soft: 0,
            n_daily: 0,
            t_days: 10,
            reference_end: 6,
            pse_index: 9,
            shock_days: vec![],
            price_path: None,
            ..ScenarioConfig::standard(5)
        }
    }

    #[test]
    fn lone_hard_insider_shape() {
        for seed in 0..20 {
            let cfg = ScenarioConfig { seed, ..tiny_hard() };
            let s = generate(&cfg).unwrap();
            let raw = build_positions(&s.records, &s.calendar).unwrap();
            let psi = &raw.psi[0];
            assert!(psi[..7].iter().all(|v| *v == 0), "{psi:?}");
            assert!(psi[7..].iter().all(|v| *v > 0));
            assert!(psi[7..].windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn daily_traders_are_filtered() {
        let cfg = ScenarioConfig { n_normal: 3, n_hard: 0, n_soft: 0, n_daily: 4, ..ScenarioConfig::small(2) };
        let s = generate(&cfg).unwrap();
        let raw = build_positions(&s.records, &s.calendar).unwrap();
        let pm = normalize_and_filter(&raw).unwrap();
        let daily = s.ids_with(TruthLabel::Daily);
        assert_eq!(daily.len(), 4);
        assert!(pm.investor_ids.iter().all(|id| !daily.contains(id)));
    }

    #[test]
    fn shock_participation_concentrates() {
        let cfg = ScenarioConfig {
            n_normal: 1000,
            n_hard: 0,
            n_soft: 0,
            shock_days: vec![ShockDay { day: 30, fraction: 0.5 }],
            ..ScenarioConfig::small(8)
        };
        let s = generate(&cfg).unwrap();
        let day = s.calendar.days()[30];
        let buyers = s.records.iter().filter(|r| r.day == day && r.net_shares() != 0).count();
        assert!(s.shock_participants.len() >= 400, "{}", s.shock_participants.len());
        assert!(buyers >= 400);
    }

    #[test]
    fn deterministic_partition_and_net_buy() {
        let cfg = ScenarioConfig::small(3);
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_eq!(a.truth.len(), 211);
        let raw = build_positions(&a.records, &a.calendar).unwrap();
        let pm = normalize_and_filter(&raw).unwrap();
        for (i, id) in pm.investor_ids.iter().enumerate() {
            if a.truth[id] == TruthLabel::Hard {
                let net = pm.x[(i, cfg.pse_index)] - pm.x[(i, 0)];
                assert!(net > 0.5, "{id}: {net}");
            }
        }
    }

    #[test]
    fn euro_columns_follow_prices() {
        let cfg = ScenarioConfig::standard(1);
        let cfg = ScenarioConfig { n_normal: 5, n_hard: 1, n_soft: 1, ..cfg };
        let s = generate(&cfg).unwrap();
        let prices = cfg.price_path.as_ref().unwrap();
        for r in &s.records {
            let d = s.calendar.index_of(r.day).unwrap();
            let expect = (r.buy_shares as f64 * prices[d] * 100.0).round() / 100.0;
            assert_eq!(r.buy_value, Some(expect));
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ScenarioConfig::small(0);
        cfg.shock_days = vec![ShockDay { day: 99, fraction: 0.1 }];
        assert!(generate(&cfg).is_err());
        let cfg = ScenarioConfig { reference_end: 39, ..ScenarioConfig::small(0) };
        assert!(generate(&cfg).is_err());
    }
}

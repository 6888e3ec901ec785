//! Fisher exact test and hypergeometric over/under-expression of investor
//! types across groups.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative slack when comparing table probabilities, so tables that tie
/// with the observed one up to rounding are counted.
pub const FISHER_SLACK: f64 = 1e-12;

pub const DEFAULT_ALPHA: f64 = 0.01;

/// 2×2 counts: rows are the two groups, columns the two types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

/// Hypergeometric support and probabilities of the top-left cell given the
/// table's margins.
fn fisher_distribution(t: &ContingencyTable) -> Result<(u64, Vec<f64>)> {
    let n = t.total();
    if n == 0 {
        return Err(Error::Config("empty contingency table".into()));
    }
    hypergeometric_pmf(n, t.a + t.c, t.a + t.b)
}

/// Probability of exactly this table given its margins.
pub fn table_probability(t: &ContingencyTable) -> Result<f64> {
    let (lo, probs) = fisher_distribution(t)?;
    Ok(probs[(t.a - lo) as usize])
}

/// Two-sided p-value: total probability of every table with the same
/// margins that is no more likely than the observed one.
pub fn fisher_exact(t: &ContingencyTable) -> Result<f64> {
    let (lo, probs) = fisher_distribution(t)?;
    let observed = probs[(t.a - lo) as usize];
    let cutoff = observed * (1.0 + FISHER_SLACK);
    let p: f64 = probs.iter().filter(|p| **p <= cutoff).sum();
    Ok(p.min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailProbabilities {
    /// P[X >= observed].
    pub p_over: f64,
    /// P[X <= observed].
    pub p_under: f64,
}

/// Hypergeometric pmf over the support `lo..=hi` of the number of `type_total`
/// marked items in a draw of `group_size` from `population`.
///
/// Weights follow the ratio recurrence outward from the mode and are divided
/// by their sum, which Vandermonde's identity makes the exact normaliser.
pub fn hypergeometric_pmf(population: u64, type_total: u64, group_size: u64) -> Result<(u64, Vec<f64>)> {
    if type_total > population || group_size > population {
        return Err(Error::Config(format!(
            "type total {type_total} and group size {group_size} must not exceed the population {population}"
        )));
    }
    let (big_n, k, n) = (population as f64, type_total as f64, group_size as f64);
    let lo = (group_size + type_total).saturating_sub(population);
    let hi = group_size.min(type_total);
    let mode = (((n + 1.0) * (k + 1.0) / (big_n + 2.0)).floor() as u64).clamp(lo, hi);
    let mut w = vec![0.0; (hi - lo + 1) as usize];
    let m = (mode - lo) as usize;
    w[m] = 1.0;
    for i in m + 1..w.len() {
        let x = (lo + i as u64) as f64;
        w[i] = w[i - 1] * (k - x + 1.0) * (n - x + 1.0) / (x * (big_n - k - n + x));
    }
    for i in (0..m).rev() {
        let x = (lo + i as u64) as f64;
        w[i] = w[i + 1] * (x + 1.0) * (big_n - k - n + x + 1.0) / ((k - x) * (n - x));
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok((lo, w))
}

/// Upper and lower hypergeometric tails at `observed`.
pub fn overexpression_test(group_size: u64, type_total: u64, population: u64, observed: u64) -> Result<TailProbabilities> {
    let (lo, pmf) = hypergeometric_pmf(population, type_total, group_size)?;
    let hi = lo + pmf.len() as u64 - 1;
    if observed < lo || observed > hi {
        return Err(Error::Config(format!(
            "observed count {observed} outside the attainable range {lo}..={hi}"
        )));
    }
    let at = (observed - lo) as usize;
    Ok(TailProbabilities {
        p_over: pmf[at..].iter().sum::<f64>().min(1.0),
        p_under: pmf[..=at].iter().sum::<f64>().min(1.0),
    })
}

/// Counts of each investor type inside one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupComposition {
    pub group: String,
    pub counts: BTreeMap<String, u64>,
}

/// Build compositions from `(group, type)` membership rows.
pub fn compositions<I, G, T>(rows: I) -> Vec<GroupComposition>
where
    I: IntoIterator<Item = (G, T)>,
    G: Into<String>,
    T: Into<String>,
{
    let mut map: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for (g, t) in rows {
        *map.entry(g.into()).or_default().entry(t.into()).or_insert(0) += 1;
    }
    map.into_iter().map(|(group, counts)| GroupComposition { group, counts }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpressionResult {
    pub group: String,
    pub investor_type: String,
    pub group_size: u64,
    pub type_total: u64,
    pub population: u64,
    pub observed: u64,
    pub p_over: f64,
    pub p_under: f64,
    pub over_expressed: bool,
    pub under_expressed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherResult {
    pub groups: [String; 2],
    pub types: [String; 2],
    pub table: ContingencyTable,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnrichmentReport {
    pub alpha: f64,
    pub tests: usize,
    /// Per-test level after Bonferroni correction.
    pub corrected_level: f64,
    pub fisher: Option<FisherResult>,
    pub expression: Vec<ExpressionResult>,
}

/// Test every (group, type) pair for over/under-expression at `alpha` with
/// Bonferroni correction; with exactly two groups and two types the Fisher
/// test of association is reported too.
pub fn enrichment(groups: &[GroupComposition], alpha: f64) -> Result<EnrichmentReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("significance level {alpha} must lie in (0, 1)")));
    }
    let mut type_totals: BTreeMap<&str, u64> = BTreeMap::new();
    for g in groups {
        for (t, c) in &g.counts {
            *type_totals.entry(t.as_str()).or_insert(0) += c;
        }
    }
    let population: u64 = type_totals.values().sum();
    if population == 0 {
        return Err(Error::Degenerate("no investors to test".into()));
    }
    let tests = groups.len() * type_totals.len();
    let corrected_level = alpha / tests as f64;
    let mut expression = Vec::with_capacity(tests);
    for g in groups {
        let group_size: u64 = g.counts.values().sum();
        for (&t, &type_total) in &type_totals {
            let observed = g.counts.get(t).copied().unwrap_or(0);
            let tails = overexpression_test(group_size, type_total, population, observed)?;
            expression.push(ExpressionResult {
                group: g.group.clone(),
                investor_type: t.to_string(),
                group_size,
                type_total,
                population,
                observed,
                p_over: tails.p_over,
                p_under: tails.p_under,
                over_expressed: tails.p_over < corrected_level,
                under_expressed: tails.p_under < corrected_level,
            });
        }
    }
    let fisher = if groups.len() == 2 && type_totals.len() == 2 {
        let types: Vec<&str> = type_totals.keys().copied().collect();
        let count = |g: &GroupComposition, t: &str| g.counts.get(t).copied().unwrap_or(0);
        let table = ContingencyTable::new(
            count(&groups[0], types[0]),
            count(&groups[0], types[1]),
            count(&groups[1], types[0]),
            count(&groups[1], types[1]),
        );
        Some(FisherResult {
            groups: [groups[0].group.clone(), groups[1].group.clone()],
            types: [types[0].to_string(), types[1].to_string()],
            table,
            p_value: fisher_exact(&table)?,
        })
    } else {
        None
    };
    Ok(EnrichmentReport {
        alpha,
        tests,
        corrected_level,
        fisher,
        expression,
    })
}

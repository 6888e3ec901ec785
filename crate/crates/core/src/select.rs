//! Choice of the latent dimension by stability of the flagged set.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;

use crate::ae::TrainConfig;
use crate::detect::{EpsilonMode, ThresholdPolicy};
use crate::error::{Error, Result};
use crate::ingest::{csv_io, PositionMatrix};
use crate::par;
use crate::pca::PcaModel;
use crate::pipeline::{self, FittedModel, ModelFamily};

/// `|a ∩ b| / |a ∪ b|`, 1 when both are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityRule {
    /// Number of consecutive similarities that must clear `j_min`.
    pub window: usize,
    pub j_min: f64,
}

impl Default for StabilityRule {
    fn default() -> Self {
        Self { window: 3, j_min: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KScanResult {
    pub ks: Vec<usize>,
    pub set_sizes: Vec<usize>,
    /// `jaccard[i]` compares the sets at `ks[i + 1]` and `ks[i]`.
    pub jaccard: Vec<f64>,
    pub chosen_k: usize,
    /// False when no stable run exists and the best single step was taken.
    pub stable: bool,
}

impl KScanResult {
    /// CSV with one row per K; the first row has an empty similarity.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["k", "set_size", "jaccard"]).map_err(csv_io)?;
        for (i, (k, size)) in self.ks.iter().zip(&self.set_sizes).enumerate() {
            let j = if i == 0 { String::new() } else { self.jaccard[i - 1].to_string() };
            w.write_record([k.to_string(), size.to_string(), j]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The smallest K that opens a run of `rule.window` similarities at or above
/// `rule.j_min`, each similarity being attributed to the larger K of its
/// pair. Without such a run, the K with the highest similarity.
pub fn choose_k(ks: &[usize], jaccard: &[f64], rule: &StabilityRule) -> Result<(usize, bool)> {
    if ks.is_empty() || jaccard.len() + 1 != ks.len() {
        return Err(Error::Config("K scan needs at least one K and one similarity per step".into()));
    }
    if jaccard.is_empty() {
        return Ok((ks[0], true));
    }
    let w = rule.window.max(1);
    if let Some(a) = (0..jaccard.len())
        .filter(|a| a + w <= jaccard.len())
        .find(|&a| jaccard[a..a + w].iter().all(|&j| j >= rule.j_min))
    {
        return Ok((ks[a + 1], true));
    }
    let best = (0..jaccard.len())
        .fold(0, |best, i| if jaccard[i] > jaccard[best] { i } else { best });
    log::warn!(
        "no run of {w} similarities >= {} in the K scan; taking K = {} with similarity {:.3}",
        rule.j_min,
        ks[best + 1],
        jaccard[best]
    );
    Ok((ks[best + 1], false))
}

/// Run the full detection pipeline for each K and compare consecutive
/// flagged sets. PCA is fitted once and truncated; autoencoders are trained
/// per K. K values are evaluated in parallel.
pub fn scan_k(
    positions: &PositionMatrix,
    family: ModelFamily,
    ks: &[usize],
    cfg: &TrainConfig,
    policy: &ThresholdPolicy,
    rule: &StabilityRule,
) -> Result<KScanResult> {
    let t = positions.n_days();
    if ks.is_empty() || ks.iter().any(|&k| k < 1 || k > t) {
        return Err(Error::Config(format!("scanned K values must lie in 1..={t}")));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("scanned K values must be strictly increasing".into()));
    }
    let full_pca = match family {
        ModelFamily::Pca => Some(PcaModel::fit(&positions.x, t.min(*ks.last().unwrap_or(&1)))?),
        _ => None,
    };
    let sets = par::map_slice(ks, |&k| -> Result<(BTreeSet<String>, bool)> {
        let model = match &full_pca {
            Some(m) => FittedModel::Pca(m.with_k(k)?),
            None => pipeline::fit_model(&positions.x, family, k, cfg)?,
        };
        let recon = model.reconstruct(&positions.x)?;
        let det = pipeline::detect_quietly(positions, &recon, policy)?;
        let fallback = det.thresholds.epsilon_mode == EpsilonMode::QuantileFallback;
        Ok((det.ranked.into_iter().collect(), fallback))
    });
    let sets = sets
        .into_iter()
        .zip(ks)
        .map(|(s, &k)| {
            s.map_err(|e| Error::AtK {
                k,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fallbacks = sets.iter().filter(|(_, f)| *f).count();
    if fallbacks > 0 {
        log::warn!(
            "anomaly scores show no second mode at {fallbacks} of {} K values; the error threshold fell back to the 95th percentile there",
            ks.len()
        );
    }
    let sets: Vec<BTreeSet<String>> = sets.into_iter().map(|(s, _)| s).collect();
    let jaccard: Vec<f64> = sets.windows(2).map(|w| jaccard(&w[1], &w[0])).collect();
    let (chosen_k, stable) = choose_k(ks, &jaccard, rule)?;
    Ok(KScanResult {
        ks: ks.to_vec(),
        set_sizes: sets.iter().map(BTreeSet::len).collect(),
        jaccard,
        chosen_k,
        stable,
    })
}

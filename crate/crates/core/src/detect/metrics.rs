//! Reconstruction quality and score-separation metrics.

use std::collections::{BTreeSet, HashSet};
use std::hash::Hash;

use nalgebra::DMatrix;
use serde::Serialize;

use super::scores::ScoreTable;
use crate::error::{Error, Result};
use crate::linalg::entry_variance;
use crate::recon::Reconstruction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub frobenius: f64,
    pub evs: f64,
    pub mean_s: f64,
    pub mean_s_anomalous: f64,
    pub mean_s_normal: f64,
    /// Relative gap between anomalous and normal mean scores.
    pub m1: f64,
    /// Anomalous mean score over the overall mean score.
    pub m2: f64,
}

/// Explained variance score in percent, with variances over all entries.
pub fn explained_variance_score(x: &DMatrix<f64>, x_hat: &DMatrix<f64>) -> Result<f64> {
    let var_x = entry_variance(x);
    if var_x <= 0.0 {
        return Err(Error::Degenerate("input has zero variance".into()));
    }
    Ok(100.0 * (1.0 - entry_variance(&(x - x_hat)) / var_x))
}

/// Metrics for one reconstruction, with `anomalous` the row indices of the
/// investors treated as anomalous.
pub fn compute_metrics(x: &DMatrix<f64>, recon: &Reconstruction, scores: &ScoreTable, anomalous: &[usize]) -> Result<Metrics> {
    let n = scores.len();
    let set: BTreeSet<usize> = anomalous.iter().copied().collect();
    if set.is_empty() || set.len() >= n {
        return Err(Error::Degenerate(
            "score-gap metrics need a nonempty proper subset of anomalous investors".into(),
        ));
    }
    if set.iter().any(|&i| i >= n) {
        return Err(Error::Shape("anomalous index out of range".into()));
    }
    let mean = |it: &mut dyn Iterator<Item = f64>, count: usize| it.sum::<f64>() / count as f64;
    let s = &scores.s_star;
    let mean_s = mean(&mut s.iter().copied(), n);
    let mean_s_anomalous = mean(&mut set.iter().map(|&i| s[i]), set.len());
    let mean_s_normal = mean(
        &mut (0..n).filter(|i| !set.contains(i)).map(|i| s[i]),
        n - set.len(),
    );
    Ok(Metrics {
        frobenius: recon.frobenius(),
        evs: explained_variance_score(x, &recon.x_hat)?,
        mean_s,
        mean_s_anomalous,
        mean_s_normal,
        m1: (mean_s_anomalous - mean_s_normal) / mean_s_normal,
        m2: mean_s_anomalous / mean_s,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Overlap {
    /// `(n, |first n of the ranking ∩ reference|)`
    pub at_depth: Vec<(usize, usize)>,
    pub total: usize,
}

pub fn overlap<T: Eq + Hash>(ranked: &[T], reference: &HashSet<T>, depths: &[usize]) -> Overlap {
    let hits: Vec<bool> = ranked.iter().map(|id| reference.contains(id)).collect();
    let at_depth = depths
        .iter()
        .map(|&n| (n, hits.iter().take(n).filter(|h| **h).count()))
        .collect();
    Overlap {
        at_depth,
        total: hits.iter().filter(|h| **h).count(),
    }
}

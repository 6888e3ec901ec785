//! Fit a reducer, reconstruct, score, threshold, flag and rank.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::ae::{self, AeArchitecture, AeKind, AeModel, TrainConfig};
use crate::detect::{self, AnomalyReport, EpsilonMode, ScoreTable, ThresholdPolicy, Thresholds};
use crate::error::{Error, Result};
use crate::ingest::PositionMatrix;
use crate::pca::PcaModel;
use crate::recon::Reconstruction;

pub const DEFAULT_LAE_LAMBDA: f64 = 1e-3;

/// Which dimensionality reduction to use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelFamily {
    Pca,
    Ae(AeKind),
    Lae { lambda: f64 },
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pca => write!(f, "pca"),
            Self::Ae(kind) => write!(f, "{kind}"),
            Self::Lae { .. } => write!(f, "lae"),
        }
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(Self::Pca),
            "lae" => Ok(Self::Lae {
                lambda: DEFAULT_LAE_LAMBDA,
            }),
            _ => s.parse().map(Self::Ae),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Pca(PcaModel),
    Ae(AeModel),
}

impl FittedModel {
    pub fn reconstruct(&self, x: &DMatrix<f64>) -> Result<Reconstruction> {
        match self {
            Self::Pca(m) => m.reconstruct(x),
            Self::Ae(m) => m.reconstruct(x),
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            Self::Pca(m) => m.to_text(),
            Self::Ae(m) => m.to_text(),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Self::Pca(m) => m.tag(),
            Self::Ae(m) => m.tag(),
        }
    }
}

pub fn fit_model(x: &DMatrix<f64>, family: ModelFamily, k: usize, cfg: &TrainConfig) -> Result<FittedModel> {
    match family {
        ModelFamily::Pca => PcaModel::fit(x, k).map(FittedModel::Pca),
        ModelFamily::Ae(kind) => ae::train(x, &AeArchitecture::make(kind, k)?, cfg).map(FittedModel::Ae),
        ModelFamily::Lae { lambda } => ae::train_lae(x, k, lambda, cfg).map(FittedModel::Ae),
    }
}

/// Scores, thresholds and the ranked report for one reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub scores: ScoreTable,
    pub thresholds: Thresholds,
    pub report: AnomalyReport,
    /// Ids of flagged investors, best ranked first.
    pub ranked: Vec<String>,
}

pub fn detect(positions: &PositionMatrix, recon: &Reconstruction, policy: &ThresholdPolicy) -> Result<Detection> {
    let det = detect_quietly(positions, recon, policy)?;
    if det.thresholds.epsilon_mode == EpsilonMode::QuantileFallback {
        log::warn!(
            "anomaly scores of {} investors show no second mode; error threshold falls back to the 95th percentile {:.4}",
            det.scores.len(),
            det.thresholds.epsilon_theta
        );
    }
    Ok(det)
}

/// [`detect`] without the fallback warning, for callers that summarise it.
pub(crate) fn detect_quietly(positions: &PositionMatrix, recon: &Reconstruction, policy: &ThresholdPolicy) -> Result<Detection> {
    let scores = detect::score(recon, positions)?;
    let thresholds = policy.resolve(&scores)?;
    let mut report = detect::apply_criterion(&scores, recon, positions, &thresholds)?;
    let ranked = detect::rank(&mut report);
    Ok(Detection {
        scores,
        thresholds,
        report,
        ranked,
    })
}

/// Fit, reconstruct and detect in one go.
pub fn run(
    positions: &PositionMatrix,
    family: ModelFamily,
    k: usize,
    cfg: &TrainConfig,
    policy: &ThresholdPolicy,
) -> Result<(FittedModel, Reconstruction, Detection)> {
    let model = fit_model(&positions.x, family, k, cfg)?;
    let recon = model.reconstruct(&positions.x)?;
    let detection = detect(positions, &recon, policy)?;
    Ok((model, recon, detection))
}

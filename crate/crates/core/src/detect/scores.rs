//! Per-investor anomaly scores and per-day peak counts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::PositionMatrix;
use crate::recon::Reconstruction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTable {
    /// Largest daily error of each investor.
    pub s_star: Vec<f64>,
    /// Day index of that error, earliest on ties.
    pub t_star: Vec<usize>,
    /// Number of investors whose largest error falls on each day.
    pub n_t: Vec<usize>,
    /// Days with a nonzero net flow.
    pub d: Vec<usize>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.s_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_star.is_empty()
    }

    /// `n_t` evaluated at each investor's own peak day.
    pub fn n_at_peak(&self, i: usize) -> usize {
        self.n_t[self.t_star[i]]
    }
}

pub fn score(recon: &Reconstruction, positions: &PositionMatrix) -> Result<ScoreTable> {
    score_errors(&recon.errors, &positions.activity_days)
}

/// Score an error matrix directly, with the activity-day counts supplied.
pub fn score_errors(errors: &nalgebra::DMatrix<f64>, activity_days: &[usize]) -> Result<ScoreTable> {
    let (n, t) = errors.shape();
    if activity_days.len() != n {
        return Err(Error::Shape(format!(
            "{n} error rows but {} activity counts",
            activity_days.len()
        )));
    }
    let mut s_star = Vec::with_capacity(n);
    let mut t_star = Vec::with_capacity(n);
    let mut n_t = vec![0usize; t];
    for row in errors.row_iter() {
        let mut best = 0;
        for j in 1..t {
            if row[j] > row[best] {
                best = j;
            }
        }
        s_star.push(if t > 0 { row[best] } else { 0.0 });
        t_star.push(best);
        if t > 0 {
            n_t[best] += 1;
        }
    }
    Ok(ScoreTable {
        s_star,
        t_star,
        n_t,
        d: activity_days.to_vec(),
    })
}

//! Data-driven thresholds on the anomaly scores and on the peak-day counts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;

pub const GRID_POINTS: usize = 512;
/// Fewer scores than this skip the density estimate.
pub const MIN_SCORES: usize = 50;
pub const FALLBACK_QUANTILE: f64 = 0.95;
/// Peaks less prominent than this fraction of the highest density are noise.
pub const MIN_PROMINENCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EpsilonMode {
    BimodalMinimum,
    QuantileFallback,
}

impl EpsilonMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BimodalMinimum => "bimodal_minimum",
            Self::QuantileFallback => "quantile_fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonThreshold {
    pub value: f64,
    pub mode: EpsilonMode,
}

/// Gaussian kernel density estimate sampled on an even grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Percentile with linear interpolation between order statistics;
/// `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Degenerate("percentile of an empty sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&v, q))
}

fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Silverman's rule `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`, falling back to
/// the standard deviation alone when the IQR vanishes.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = percentile_sorted(&sorted, 0.75) - percentile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Density on `GRID_POINTS` points spanning [min, max]; `None` when the
/// sample has no spread.
pub fn kde(values: &[f64]) -> Option<Density> {
    let h = silverman_bandwidth(values);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(h > 0.0) || !(hi > lo) {
        return None;
    }
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = par::map_slice(&grid, |&g| {
        values.iter().map(|v| (-0.5 * ((g - v) / h).powi(2)).exp()).sum::<f64>() * norm
    });
    Some(Density { grid, density, bandwidth: h })
}

/// Interior local maxima by sign change of the first difference; a plateau
/// reports its first point.
pub fn local_maxima(f: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < f.len() {
        if f[i] > f[i - 1] {
            let mut j = i;
            while j + 1 < f.len() && f[j + 1] == f[i] {
                j += 1;
            }
            if j + 1 < f.len() && f[j + 1] < f[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Topographic prominence of the peak at `p`: its height above the higher of
/// the two lowest points separating it from taller ground on either side.
pub fn prominence(f: &[f64], p: usize) -> f64 {
    let side = |range: &mut dyn Iterator<Item = usize>| {
        let mut low = f[p];
        for i in range {
            if f[i] > f[p] {
                break;
            }
            low = low.min(f[i]);
        }
        low
    };
    let left = side(&mut (0..p).rev());
    let right = side(&mut (p + 1..f.len()));
    f[p] - left.max(right)
}

/// Threshold between the bulk of the scores and the high-score mode: the
/// density minimum between the first two prominent peaks, or the 95th
/// percentile when the density has no second peak.
pub fn find_epsilon_theta(s_star: &[f64]) -> Result<EpsilonThreshold> {
    if s_star.is_empty() {
        return Err(Error::Degenerate("no anomaly scores".into()));
    }
    if s_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("anomaly scores must be finite".into()));
    }
    if s_star.len() >= MIN_SCORES {
        if let Some(d) = kde(s_star) {
            if let Some(i) = valley_between_first_peaks(&d.density) {
                return Ok(EpsilonThreshold {
                    value: d.grid[i],
                    mode: EpsilonMode::BimodalMinimum,
                });
            }
        }
    }
    let value = percentile(s_star, FALLBACK_QUANTILE)?;
    log::debug!(
        "anomaly scores are not bimodal ({} values); using the {}th percentile {value:.4} as threshold",
        s_star.len(),
        (FALLBACK_QUANTILE * 100.0) as u32
    );
    Ok(EpsilonThreshold {
        value,
        mode: EpsilonMode::QuantileFallback,
    })
}

fn valley_between_first_peaks(f: &[f64]) -> Option<usize> {
    let top = f.iter().copied().fold(0.0, f64::max);
    let peaks: Vec<usize> = local_maxima(f)
        .into_iter()
        .filter(|&p| prominence(f, p) >= MIN_PROMINENCE * top)
        .take(2)
        .collect();
    if peaks.len() < 2 {
        return None;
    }
    (peaks[0] + 1..peaks[1]).min_by(|&a, &b| f[a].total_cmp(&f[b]))
}

/// Top decile of the per-day peak counts.
pub fn find_n_theta(n_t: &[usize]) -> Result<f64> {
    let v: Vec<f64> = n_t.iter().map(|&n| n as f64).collect();
    percentile(&v, 0.9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn percentile_arithmetic() {
        let n: Vec<usize> = (1..=10).collect();
        assert!((find_n_theta(&n).unwrap() - 9.1).abs() < 1e-12);
        assert_eq!(find_n_theta(&[4, 4, 4]).unwrap(), 4.0);
        assert!(find_n_theta(&[]).is_err());
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn extrema_and_prominence() {
        let f = [0.0, 1.0, 0.5, 3.0, 3.0, 1.0, 2.0, 0.0];
        assert_eq!(local_maxima(&f), vec![1, 3, 6]);
        assert_eq!(prominence(&f, 3), 3.0);
        assert_eq!(prominence(&f, 1), 0.5);
        assert_eq!(prominence(&f, 6), 1.0);
        assert!(local_maxima(&[1.0, 2.0, 2.0]).is_empty());
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let v: Vec<f64> = (0..400).map(|_| normal.sample(&mut rng)).collect();
        let d = kde(&v).unwrap();
        let step = d.grid[1] - d.grid[0];
        let mass: f64 = d.density.iter().sum::<f64>() * step;
        assert!(mass > 0.9 && mass < 1.0, "{mass}");
        assert!(kde(&[1.0; 10]).is_none());
    }

    #[test]
    fn bimodal_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Normal::new(0.2, 0.05).unwrap();
        let b = Normal::new(0.7, 0.05).unwrap();
        let mut v: Vec<f64> = (0..900).map(|_| a.sample(&mut rng)).collect();
        v.extend((0..100).map(|_| b.sample(&mut rng)));
        let th = find_epsilon_theta(&v).unwrap();
        assert_eq!(th.mode, EpsilonMode::BimodalMinimum);
        assert!((0.3..=0.6).contains(&th.value), "{}", th.value);
    }

    #[test]
    fn unimodal_and_small_samples_fall_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Normal::new(0.3, 0.1).unwrap();
        let v: Vec<f64> = (0..100).map(|_| a.sample(&mut rng)).collect();
        let th = find_epsilon_theta(&v).unwrap();
        assert_eq!(th.mode, EpsilonMode::QuantileFallback);
        assert_eq!(th.value, percentile(&v, 0.95).unwrap());
        let few = [0.1, 0.1, 0.9, 0.9];
        assert_eq!(find_epsilon_theta(&few).unwrap().mode, EpsilonMode::QuantileFallback);
        assert!(find_epsilon_theta(&[]).is_err());
    }
}

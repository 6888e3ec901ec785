//! Principal component analysis on per-day standardised positions.
//!
//! Columns (trading days) are the features. Each day is centred and scaled to
//! unit standard deviation, the covariance `Z^T Z / N` is diagonalised and the
//! top `K` eigenvectors give the projector used for reconstruction. Errors are
//! reported after inverting the scaling, so they live in the same [-1, 1]
//! position domain as the autoencoder errors.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{complete_basis, fix_column_signs, sym_eigen_desc};
use crate::par;
use crate::recon::Reconstruction;

const EIGEN_FLOOR: f64 = 1e-12;

/// Per-day centring and scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub means: Vec<f64>,
    /// Population standard deviations; zero-variance days store 1.
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut stds = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            means.push(mean);
            stds.push(if std > 0.0 { std } else { 1.0 });
        }
        Self { means, stds }
    }

    /// Identity scaler for `t` days.
    pub fn identity(t: usize) -> Self {
        Self {
            means: vec![0.0; t],
            stds: vec![1.0; t],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        z
    }

    pub fn inverse(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = z.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.apply(|v| *v = *v * s + m);
        }
        x
    }
}

/// A fitted PCA: the scaler plus the eigen-decomposition of the scaled
/// covariance, truncated to `k` retained components.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// T x m eigenvectors (m >= k), columns ordered by eigenvalue.
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    scaler: Scaler,
    k: usize,
}

impl PcaModel {
    /// Fit on an N x T matrix keeping `k` components.
    pub fn fit(x: &DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, t) = x.shape();
        if k < 1 || k > t {
            return Err(Error::Config(format!("K must lie in 1..={t}, got {k}")));
        }
        if n < 2 {
            return Err(Error::Degenerate(format!("PCA needs at least 2 rows, got {n}")));
        }
        let scaler = Scaler::fit(x);
        let z = scaler.transform(x);
        let (mut eigenvalues, basis) = if t <= n {
            let cov = z.tr_mul(&z) / n as f64;
            sym_eigen_desc(cov)
        } else {
            feature_basis_from_gram(&z)
        };
        for v in eigenvalues.iter_mut() {
            if *v < EIGEN_FLOOR {
                *v = 0.0;
            }
        }
        Ok(Self {
            basis,
            eigenvalues,
            scaler,
            k,
        })
    }

    /// Same decomposition with a different number of retained components.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        if k < 1 || k > self.basis.ncols() {
            return Err(Error::Config(format!(
                "K must lie in 1..={}, got {k}",
                self.basis.ncols()
            )));
        }
        Ok(Self { k, ..self.clone() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_days(&self) -> usize {
        self.basis.nrows()
    }

    /// T x K matrix of retained loading vectors.
    pub fn loadings(&self) -> DMatrix<f64> {
        self.basis.columns(0, self.k).into_owned()
    }

    /// All T eigenvalues in nonincreasing order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn tag(&self) -> String {
        format!("pca(k={})", self.k)
    }

    /// Project one scaled row onto the retained subspace.
    fn project_scaled(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.basis.columns(0, self.k);
        (z * p) * p.transpose()
    }

    /// Reconstruct positions; errors are measured after unscaling.
    pub fn reconstruct(&self, x: &DMatrix<f64>) -> Result<Reconstruction> {
        if x.ncols() != self.n_days() {
            return Err(Error::Shape(format!(
                "model expects {} days, matrix has {}",
                self.n_days(),
                x.ncols()
            )));
        }
        const BLOCK: usize = 512;
        let n = x.nrows();
        let blocks = n.div_ceil(BLOCK);
        let parts = par::map_range(blocks, |b| {
            let start = b * BLOCK;
            let len = BLOCK.min(n - start);
            let rows = x.rows(start, len).into_owned();
            let z = self.scaler.transform(&rows);
            self.scaler.inverse(&self.project_scaled(&z))
        });
        let mut x_hat = DMatrix::zeros(n, x.ncols());
        for (b, part) in parts.into_iter().enumerate() {
            x_hat.rows_mut(b * BLOCK, part.nrows()).copy_from(&part);
        }
        Reconstruction::new(x, x_hat, self.tag())
    }

    /// Reconstruct a single profile with this model.
    pub fn reconstruct_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let x = DMatrix::from_row_slice(1, row.len(), row);
        Ok(self.reconstruct(&x)?.x_hat.iter().copied().collect())
    }

    /// Fraction of total variance carried by the leading `k` eigenvalues.
    pub fn explained_variance(&self, k: usize) -> Result<f64> {
        explained_variance(&self.eigenvalues, k)
    }

    /// `(component index, eigenvalue, cumulative explained fraction)` rows
    /// for scree and explained-variance plots.
    pub fn scree(&self) -> Result<Vec<(usize, f64, f64)>> {
        (1..=self.eigenvalues.len())
            .map(|k| Ok((k, self.eigenvalues[k - 1], self.explained_variance(k)?)))
            .collect()
    }

    /// Text export: K, T, means, stds, eigenvalues, then T rows of K loadings.
    pub fn to_text(&self) -> String {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        out.push_str("pca\n");
        out.push_str(&format!("k {}\n", self.k));
        out.push_str(&format!("t {}\n", self.n_days()));
        out.push_str(&format!("means {}\n", fmt(&self.scaler.means)));
        out.push_str(&format!("stds {}\n", fmt(&self.scaler.stds)));
        out.push_str(&format!("eigenvalues {}\n", fmt(&self.eigenvalues)));
        out.push_str("loadings\n");
        let p = self.loadings();
        for i in 0..p.nrows() {
            let row: Vec<f64> = p.row(i).iter().copied().collect();
            out.push_str(&fmt(&row));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Schema(format!("PCA model file: {what}"));
        let mut lines = text.lines();
        if lines.next() != Some("pca") {
            return Err(bad("missing 'pca' header"));
        }
        let mut field = |name: &str| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {name}")))?;
            let rest = line
                .strip_prefix(name)
                .ok_or_else(|| bad(&format!("expected {name}")))?;
            rest.split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| bad(&format!("bad number in {name}"))))
                .collect()
        };
        let k = field("k")?.first().copied().ok_or_else(|| bad("k"))? as usize;
        let t = field("t")?.first().copied().ok_or_else(|| bad("t"))? as usize;
        let means = field("means")?;
        let stds = field("stds")?;
        let eigenvalues = field("eigenvalues")?;
        field("loadings")?;
        let mut data = Vec::with_capacity(t * k);
        for _ in 0..t {
            let line = lines.next().ok_or_else(|| bad("truncated loadings"))?;
            for s in line.split_whitespace() {
                data.push(s.parse::<f64>().map_err(|_| bad("bad loading"))?);
            }
        }
        if means.len() != t || stds.len() != t || eigenvalues.len() != t || data.len() != t * k {
            return Err(bad("inconsistent dimensions"));
        }
        Ok(Self {
            basis: DMatrix::from_row_slice(t, k, &data),
            eigenvalues,
            scaler: Scaler { means, stds },
            k,
        })
    }
}

/// Leading eigenvectors of `Z^T Z / N` computed through the N x N Gram matrix
/// when N < T, with the null space completed to a full basis.
fn feature_basis_from_gram(z: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = z.nrows() as f64;
    let gram = z * z.transpose() / n;
    let (mu, u) = sym_eigen_desc(gram);
    let top = mu.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let mut cols = Vec::new();
    let mut values = Vec::new();
    for (j, &m) in mu.iter().enumerate() {
        if m <= top * 1e-12 || m <= EIGEN_FLOOR {
            break;
        }
        let p = z.tr_mul(&u.column(j)) / (n * m).sqrt();
        cols.push(p.normalize());
        values.push(m);
    }
    let t = z.ncols();
    let mut basis = if cols.is_empty() {
        DMatrix::identity(t, t)
    } else {
        complete_basis(&DMatrix::from_columns(&cols))
    };
    values.resize(t, 0.0);
    fix_column_signs(&mut basis);
    (values, basis)
}

/// Fraction of the eigenvalue sum carried by the first `k` entries.
pub fn explained_variance(eigenvalues: &[f64], k: usize) -> Result<f64> {
    if k > eigenvalues.len() {
        return Err(Error::Config(format!(
            "K = {k} exceeds the {} available components",
            eigenvalues.len()
        )));
    }
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("total variance is zero".into()));
    }
    let kept: f64 = eigenvalues[..k].iter().sum();
    Ok((kept / total).clamp(0.0, 1.0))
}

/// Eigenvalues of the day-feature and investor-feature orientations of the
/// same scaled matrix, and their largest disagreement.
#[derive(Debug, Clone, Serialize)]
pub struct EigenEquivalenceReport {
    /// Eigenvalues of `Z^T Z / N` (T x T).
    pub day_features: Vec<f64>,
    /// Eigenvalues of `Z Z^T / N` (N x N).
    pub investor_features: Vec<f64>,
    pub compared: usize,
    pub max_discrepancy: f64,
    pub note: &'static str,
}

/// Compare the spectra of both orientations after one shared per-day scaling.
pub fn eigen_equivalence_check(x: &DMatrix<f64>) -> Result<EigenEquivalenceReport> {
    let (n, t) = x.shape();
    if n < 1 || t < 1 {
        return Err(Error::Shape("empty matrix".into()));
    }
    let z = Scaler::fit(x).transform(x);
    let (day, _) = sym_eigen_desc(z.tr_mul(&z) / n as f64);
    let (inv, _) = sym_eigen_desc(&z * z.transpose() / n as f64);
    let compared = n.min(t);
    let max_discrepancy = day
        .iter()
        .zip(&inv)
        .take(compared)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(EigenEquivalenceReport {
        day_features: day,
        investor_features: inv,
        compared,
        max_discrepancy,
        note: "both orientations use the per-day scaler fitted on the N x T matrix",
    })
}

/// How a single profile's reconstruction error reacts to re-basing its
/// share position by a constant.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftInvarianceReport {
    /// max |psi|
    pub norm: f64,
    /// max |psi + c|
    pub shifted_norm: f64,
    /// Whether the two norms coincide, the condition for identical errors.
    pub exact_condition: bool,
    /// norm / shifted_norm, the predicted ratio of the scaled errors.
    pub predicted_ratio: f64,
    /// ||eps_C|| / ||eps|| on the scaled profiles; `None` when eps is zero.
    pub observed_ratio: Option<f64>,
    /// max_t | eps_C(t) * shifted_norm - eps(t) * norm |
    pub scaled_discrepancy: f64,
    /// max_t | eps_C(t) - eps(t) | when the raw share profile is fed directly.
    pub unnormalized_discrepancy: f64,
    /// max_t |R(1)(t) - 1| for the linear part R of the reconstruction map.
    /// Zero means the retained subspace carries the flat profile, which the
    /// error identities rely on.
    pub constant_residual: f64,
    /// max_t |(R - I)(mean)|, the affine offset of the reconstruction map.
    pub offset_residual: f64,
}

/// Fit PCA with `k` components on `x` and run [`shift_invariance_with_model`].
pub fn shift_invariance_check(psi: &[f64], c: f64, k: usize, x: &DMatrix<f64>) -> Result<ShiftInvarianceReport> {
    let model = PcaModel::fit(x, k)?;
    shift_invariance_with_model(&model, psi, c)
}

/// Reconstruct `psi` and `psi + c` with the same fitted model, both raw and
/// max-abs scaled, and compare their error profiles.
pub fn shift_invariance_with_model(model: &PcaModel, psi: &[f64], c: f64) -> Result<ShiftInvarianceReport> {
    let t = model.n_days();
    if psi.len() != t {
        return Err(Error::Shape(format!("profile has {} days, model {t}", psi.len())));
    }
    let first = psi[0];
    if psi.iter().all(|v| *v == first) {
        return Err(Error::Degenerate("profile is constant".into()));
    }
    let shifted: Vec<f64> = psi.iter().map(|v| v + c).collect();
    let norm = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let shifted_norm = shifted.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if shifted_norm == 0.0 {
        return Err(Error::Degenerate("shifted profile has zero max-abs".into()));
    }

    let errors = |row: &[f64]| -> Result<Vec<f64>> {
        let hat = model.reconstruct_row(row)?;
        Ok(row.iter().zip(&hat).map(|(a, b)| (a - b).abs()).collect())
    };
    let scaled: Vec<f64> = psi.iter().map(|v| v / norm).collect();
    let scaled_c: Vec<f64> = shifted.iter().map(|v| v / shifted_norm).collect();
    let eps = errors(&scaled)?;
    let eps_c = errors(&scaled_c)?;
    let raw_eps = errors(psi)?;
    let raw_eps_c = errors(&shifted)?;

    let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let observed_ratio = (l2(&eps) > 0.0).then(|| l2(&eps_c) / l2(&eps));
    let scaled_discrepancy = eps
        .iter()
        .zip(&eps_c)
        .map(|(a, b)| (b * shifted_norm - a * norm).abs())
        .fold(0.0, f64::max);
    let unnormalized_discrepancy = raw_eps
        .iter()
        .zip(&raw_eps_c)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    // linear part L(v) = R(v + m) - R(m) with m the scaler means
    let means = &model.scaler().means;
    let at_mean = model.reconstruct_row(means)?;
    let plus_one: Vec<f64> = means.iter().map(|m| m + 1.0).collect();
    let at_mean_plus_one = model.reconstruct_row(&plus_one)?;
    let constant_residual = at_mean_plus_one
        .iter()
        .zip(&at_mean)
        .map(|(a, b)| (a - b - 1.0).abs())
        .fold(0.0, f64::max);
    let zero = vec![0.0; t];
    let at_zero = model.reconstruct_row(&zero)?;
    let offset_residual = at_zero.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    Ok(ShiftInvarianceReport {
        norm,
        shifted_norm,
        exact_condition: norm == shifted_norm,
        predicted_ratio: norm / shifted_norm,
        observed_ratio,
        scaled_discrepancy,
        unnormalized_discrepancy,
        constant_residual,
        offset_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, t, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rank_one_data() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let m = PcaModel::fit(&x, 1).unwrap();
        let p = m.loadings();
        assert!((p[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(p[(1, 0)].abs() < 1e-12);
        // scaled data has unit variance on day 0 and nothing on day 1
        assert!((m.eigenvalues()[0] - 1.0).abs() < 1e-12);
        assert_eq!(m.eigenvalues()[1], 0.0);
    }

    #[test]
    fn parameter_errors() {
        let x = random(5, 4, 1);
        assert!(matches!(PcaModel::fit(&x, 0), Err(Error::Config(_))));
        assert!(matches!(PcaModel::fit(&x, 5), Err(Error::Config(_))));
        assert!(matches!(PcaModel::fit(&random(1, 4, 1), 1), Err(Error::Degenerate(_))));
        let m = PcaModel::fit(&x, 2).unwrap();
        assert!(matches!(m.reconstruct(&random(3, 5, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn scaler_round_trip() {
        let x = random(7, 5, 3);
        let s = Scaler::fit(&x);
        assert!((s.inverse(&s.transform(&x)) - &x).amax() < 1e-12);
        let mut flat = x.clone();
        flat.column_mut(2).fill(0.25);
        let s = Scaler::fit(&flat);
        assert_eq!(s.stds[2], 1.0);
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        for (n, t) in [(10, 6), (4, 9)] {
            let x = random(n, t, 11);
            let m = PcaModel::fit(&x, t).unwrap();
            assert!(m.reconstruct(&x).unwrap().frobenius() < 1e-8);
        }
    }

    #[test]
    fn loadings_orthonormal_and_eigenvalues_sorted() {
        for (n, t) in [(30, 8), (5, 8)] {
            let m = PcaModel::fit(&random(n, t, 5), 6).unwrap();
            let p = m.loadings();
            assert!((p.tr_mul(&p) - DMatrix::identity(6, 6)).amax() < 1e-10);
            assert!(m.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
            assert!(m.eigenvalues().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        let x = random(5, 9, 8);
        let m = PcaModel::fit(&x, 4).unwrap();
        let z = m.scaler().transform(&x);
        let (direct, vecs) = sym_eigen_desc(z.tr_mul(&z) / 5.0);
        for (j, d) in direct.iter().take(4).enumerate() {
            assert!((d - m.eigenvalues()[j]).abs() < 1e-10);
            let dot = vecs.column(j).dot(&m.loadings().column(j));
            assert!((dot - 1.0).abs() < 1e-8, "column {j}: {dot}");
        }
    }

    #[test]
    fn low_rank_exact_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(2, 7, |_, _| rng.random_range(-1.0..1.0));
        let x = a * b;
        let m = PcaModel::fit(&x, 2).unwrap();
        assert!(m.reconstruct(&x).unwrap().frobenius() < 1e-8);
    }

    #[test]
    fn explained_variance_arithmetic() {
        assert_eq!(explained_variance(&[3.0, 1.0, 0.0, 0.0], 1).unwrap(), 0.75);
        assert_eq!(explained_variance(&[3.0, 1.0, 0.0, 0.0], 4).unwrap(), 1.0);
        assert!(matches!(explained_variance(&[0.0, 0.0], 1), Err(Error::Degenerate(_))));
        let m = PcaModel::fit(&random(20, 6, 9), 3).unwrap();
        let scree = m.scree().unwrap();
        assert!(scree.windows(2).all(|w| w[0].2 <= w[1].2 + 1e-15));
        assert!((scree[5].2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn error_decreases_with_k() {
        let x = random(40, 10, 21);
        let full = PcaModel::fit(&x, 10).unwrap();
        let errs: Vec<f64> = (1..=10)
            .map(|k| full.with_k(k).unwrap().reconstruct(&x).unwrap().frobenius())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{errs:?}");
    }

    #[test]
    fn projection_is_idempotent() {
        let x = random(25, 8, 13);
        let m = PcaModel::fit(&x, 3).unwrap();
        let once = m.reconstruct(&x).unwrap().x_hat;
        let twice = m.reconstruct(&once).unwrap().x_hat;
        assert!((once - twice).amax() < 1e-10);
    }

    #[test]
    fn text_round_trip() {
        let m = PcaModel::fit(&random(12, 5, 17), 3).unwrap();
        let back = PcaModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back.loadings(), m.loadings());
        assert_eq!(back.eigenvalues(), m.eigenvalues());
        assert_eq!(back.scaler(), m.scaler());
        assert!(PcaModel::from_text("nope").is_err());
    }

    #[test]
    fn eigen_equivalence_single_row_and_random() {
        let one = DMatrix::from_row_slice(1, 4, &[0.1, 0.5, -0.2, 1.0]);
        let r = eigen_equivalence_check(&one).unwrap();
        assert_eq!(r.compared, 1);
        assert!(r.max_discrepancy < 1e-12);
        let r = eigen_equivalence_check(&random(20, 6, 3)).unwrap();
        assert!(r.max_discrepancy < 1e-8);
    }

    #[test]
    fn shift_check_zero_shift_and_example() {
        let x = random(40, 3, 31);
        let r = shift_invariance_check(&[5.0, -5.0, 0.0], 0.0, 2, &x).unwrap();
        assert_eq!(r.predicted_ratio, 1.0);
        assert!(r.exact_condition);
        assert!((r.observed_ratio.unwrap() - 1.0).abs() < 1e-12);

        let r = shift_invariance_check(&[3.0, -5.0, 2.0], 1.0, 2, &x).unwrap();
        assert_eq!((r.norm, r.shifted_norm), (5.0, 4.0));
        assert!(!r.exact_condition);
        assert_eq!(r.predicted_ratio, 1.25);
        assert!(matches!(
            shift_invariance_check(&[2.0, 2.0, 2.0], 1.0, 2, &x),
            Err(Error::Degenerate(_))
        ));
    }
}

//! L2-regularised linear autoencoder and recovery of the principal
//! directions from its decoder.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{fit, AeArchitecture, AeModel, Activation, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::{fix_column_signs, sym_eigen_desc};

/// Train a bias-free linear autoencoder of width `k` on mean-centred data
/// with penalty `lambda * (||W1||^2 + ||W2||^2)`.
pub fn train_lae(x: &DMatrix<f64>, k: usize, lambda: f64, cfg: &TrainConfig) -> Result<AeModel> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("LAE lambda must be positive, got {lambda}")));
    }
    if k < 1 || k > x.ncols() {
        return Err(Error::Config(format!("LAE width must lie in 1..={}, got {k}", x.ncols())));
    }
    if x.nrows() == 0 {
        return Err(Error::Shape("training matrix is empty".into()));
    }
    let mut arch = AeArchitecture::new(Vec::new(), k)?.linear();
    arch.biases = false;
    arch.l2_lambda = lambda;
    let mut model = AeModel::init(arch, x.ncols(), cfg.seed)?;
    model.input_mean = Some(column_means(x));
    fit(model, x, cfg)
}

fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter().map(|c| c.sum() / n).collect()
}

fn centre(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let mut z = x.clone();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    z
}

fn is_lae(model: &AeModel) -> bool {
    model.layers.len() == 2 && model.layers.iter().all(|l| l.activation == Activation::Linear)
}

/// Left singular vectors of the decoder transpose (T x K), ordered by
/// singular value and sign-fixed like the PCA loadings.
pub fn recover_principal_directions(model: &AeModel) -> Result<DMatrix<f64>> {
    if !is_lae(model) {
        return Err(Error::Mode("principal directions need a single-layer linear autoencoder".into()));
    }
    let decoder_t = model.layers[1].weights.transpose();
    let k = decoder_t.ncols();
    let svd = decoder_t.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Degenerate("SVD did not return U".into()))?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let cols: Vec<_> = idx.iter().take(k).map(|&j| u.column(j).into_owned()).collect();
    let mut dirs = DMatrix::from_columns(&cols);
    fix_column_signs(&mut dirs);
    Ok(dirs)
}

/// Covariance of the projected, centred data `(X0 B)^T (X0 B) / N`.
pub fn latent_covariance(x: &DMatrix<f64>, basis: &DMatrix<f64>) -> DMatrix<f64> {
    let p = centre(x) * basis;
    p.tr_mul(&p) / x.nrows() as f64
}

/// Largest absolute off-diagonal entry divided by the smallest diagonal
/// entry.
pub fn off_diagonal_ratio(cov: &DMatrix<f64>) -> f64 {
    let n = cov.nrows();
    let mut off = 0.0f64;
    let mut diag = f64::INFINITY;
    for i in 0..n {
        diag = diag.min(cov[(i, i)].abs());
        for j in 0..n {
            if i != j {
                off = off.max(cov[(i, j)].abs());
            }
        }
    }
    if off == 0.0 {
        0.0
    } else {
        off / diag
    }
}

/// Post-training diagnostics for a linear autoencoder.
#[derive(Debug, Clone, Serialize)]
pub struct LaeReport {
    pub lambda: f64,
    /// ||W1 - W2^T||_F / ||W1||_F
    pub transpose_residual: f64,
    /// Covariance eigenvalues of the centred data, largest first.
    pub covariance_eigenvalues: Vec<f64>,
    /// Eigenvalue a direction needs to survive the penalty. The loss averages
    /// over N*T entries, so the penalty bites at `lambda * T` on the
    /// covariance scale.
    pub survival_threshold: f64,
    /// First latent index whose eigenvalue falls below the threshold.
    pub suppressed_from: Option<usize>,
    /// Off-diagonal ratio of the latent covariance along the recovered
    /// directions.
    pub directions_off_diagonal: f64,
    /// Same ratio for the raw encoder output `X0 W1`.
    pub encoder_off_diagonal: f64,
}

impl LaeReport {
    pub fn compute(model: &AeModel, x: &DMatrix<f64>) -> Result<Self> {
        let dirs = recover_principal_directions(model)?;
        if x.ncols() != model.n_days() {
            return Err(Error::Shape("matrix does not match the model".into()));
        }
        let w1 = &model.layers[0].weights;
        let w2t = model.layers[1].weights.transpose();
        let transpose_residual = (w1 - &w2t).norm() / w1.norm();
        let z = centre(x);
        let (eig, _) = sym_eigen_desc(z.tr_mul(&z) / x.nrows() as f64);
        let lambda = model.architecture.l2_lambda;
        let survival_threshold = lambda * x.ncols() as f64;
        let k = model.architecture.latent_dim;
        let suppressed_from = eig.iter().take(k).position(|&e| e <= survival_threshold);
        if let Some(i) = suppressed_from {
            log::warn!("lambda {lambda} suppresses latent directions from index {}", i + 1);
        }
        Ok(Self {
            lambda,
            transpose_residual,
            covariance_eigenvalues: eig,
            survival_threshold,
            suppressed_from,
            directions_off_diagonal: off_diagonal_ratio(&latent_covariance(x, &dirs)),
            encoder_off_diagonal: off_diagonal_ratio(&latent_covariance(x, w1)),
        })
    }
}

//! Self-checks of the numerical identities the pipeline relies on. Each
//! returns the worst measured deviation next to its tolerance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::ae::{
    latent_covariance, off_diagonal_ratio, recover_principal_directions, train_lae, AeArchitecture, AeModel,
    TrainConfig,
};
use crate::error::Result;
use crate::linalg::sym_eigen_desc;
use crate::pca::{eigen_equivalence_check, shift_invariance_with_model, PcaModel};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn below(name: &'static str, measured: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name,
            passed: measured < tolerance,
            measured,
            tolerance,
            detail,
        }
    }
}

fn uniform(n: usize, t: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, t, |_, _| rng.random_range(-1.0..1.0))
}

/// Spectra of the day-feature and investor-feature orientations agree.
pub fn eigen_equivalence(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=12);
        let t = rng.random_range(2..=12);
        worst = worst.max(eigen_equivalence_check(&uniform(n, t, &mut rng))?.max_discrepancy);
    }
    Ok(CheckOutcome::below("eigen-equivalence", worst, 1e-8, "20 random matrices up to 12x12".into()))
}

/// Keeping every component reproduces the input.
pub fn full_rank_identity(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=30);
        let t = rng.random_range(1..=12);
        let x = uniform(n, t, &mut rng);
        worst = worst.max(PcaModel::fit(&x, t)?.reconstruct(&x)?.frobenius());
    }
    Ok(CheckOutcome::below("full-rank-identity", worst, 1e-8, "20 random matrices, K = T".into()))
}

/// Training matrix whose per-day scaling is uniform, whose day means are
/// zero and whose leading principal direction is the flat profile, so the
/// fitted reconstruction map carries constants through unchanged.
pub fn level_fixture(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
    assert!(n >= 4 && t >= 3, "fixture needs n >= 4 and t >= 3");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // three zero-mean, mutually orthogonal investor vectors
    let mut v = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in v.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let q = v.qr().q();
    let level = q.column(0) * 3.0;
    let (c, s) = (q.column(1), q.column(2));
    DMatrix::from_fn(n, t, |i, j| {
        let phase = std::f64::consts::TAU * j as f64 / t as f64;
        level[i] + c[i] * phase.cos() + s[i] * phase.sin()
    }) * (n as f64).sqrt()
}

/// Re-basing a share profile by a constant leaves raw errors unchanged and
/// rescales max-abs normalized errors by the ratio of the norms.
pub fn shift_invariance(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = 10;
    let model = PcaModel::fit(&level_fixture(60, t, seed), 2)?;
    let mut worst = 0.0f64;
    let mut premise = 0.0f64;
    for _ in 0..100 {
        let psi: Vec<f64> = (0..t).map(|_| rng.random_range(-500.0..500.0f64).round()).collect();
        let c = rng.random_range(-1000.0..1000.0f64).round();
        let r = shift_invariance_with_model(&model, &psi, c)?;
        worst = worst.max(r.unnormalized_discrepancy).max(r.scaled_discrepancy);
        premise = premise.max(r.constant_residual).max(r.offset_residual);
    }
    Ok(CheckOutcome::below(
        "shift-invariance",
        worst,
        1e-10,
        format!("100 random (psi, c) pairs; constant-preservation residual {premise:.1e}"),
    ))
}

/// Largest relative gap between analytic and central-difference gradients.
pub fn max_gradient_error(model: &AeModel, x: &DMatrix<f64>, h: f64) -> Result<f64> {
    let (_, grads) = model.gradient(x)?;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (l, g) in grads.iter().enumerate() {
        for idx in 0..g.weights.len() {
            let orig = probe.layers[l].weights[idx];
            probe.layers[l].weights[idx] = orig + h;
            let up = probe.objective(x)?;
            probe.layers[l].weights[idx] = orig - h;
            let down = probe.objective(x)?;
            probe.layers[l].weights[idx] = orig;
            worst = worst.max(rel(g.weights[idx], (up - down) / (2.0 * h)));
        }
        if let Some(gb) = &g.bias {
            for idx in 0..gb.len() {
                let bias = probe.layers[l].bias.as_mut().expect("bias gradient implies bias");
                let orig = bias[idx];
                bias[idx] = orig + h;
                let up = probe.objective(x)?;
                probe.layers[l].bias.as_mut().unwrap()[idx] = orig - h;
                let down = probe.objective(x)?;
                probe.layers[l].bias.as_mut().unwrap()[idx] = orig;
                worst = worst.max(rel(gb[idx], (up - down) / (2.0 * h)));
            }
        }
    }
    Ok(worst)
}

/// Backpropagation agrees with finite differences on a 4x6 toy matrix for
/// the ReLU/tanh network and its linear variant.
pub fn gradient_check(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(4, 6, &mut rng);
    let mut worst = 0.0f64;
    for linear in [false, true] {
        let mut arch = AeArchitecture::new(vec![5], 3)?;
        arch.l2_lambda = 1e-3;
        if linear {
            arch = arch.linear();
        }
        let mut model = AeModel::init(arch, 6, seed)?;
        // nonzero biases so every path is exercised
        for layer in &mut model.layers {
            if let Some(b) = &mut layer.bias {
                b.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
            }
        }
        worst = worst.max(max_gradient_error(&model, &x, 1e-5)?);
    }
    Ok(CheckOutcome::below(
        "gradient",
        worst,
        1e-4,
        "relu/tanh and linear networks 6-5-3-5-6, h = 1e-5".into(),
    ))
}

/// Exactly rank-4 50x8 matrix whose centred covariance has eigenvalues
/// 0.2, 0.1, 0.05, 0.025.
pub fn lae_fixture(seed: u64) -> DMatrix<f64> {
    const EIG: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
    let (n, t) = (50, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in scores.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let mut scores = scores.qr().q();
    for (j, mut col) in scores.column_iter_mut().enumerate() {
        col *= (n as f64 * EIG[j]).sqrt();
    }
    let dirs = DMatrix::from_fn(t, 4, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
    let offset: Vec<f64> = (0..t).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut x = scores * dirs.transpose();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(offset[j]);
    }
    x
}

pub fn lae_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 20_000,
        batch_size: 50,
        seed,
        ..TrainConfig::default()
    }
}

/// The regularised linear autoencoder recovers the covariance eigenvectors.
pub fn lae_recovery(seed: u64) -> Result<Vec<CheckOutcome>> {
    let x = lae_fixture(seed);
    let model = train_lae(&x, 4, 1e-3, &lae_train_config(seed))?;
    let dirs = recover_principal_directions(&model)?;
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let z = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j]);
    let (_, vecs) = sym_eigen_desc(z.tr_mul(&z) / n);
    let worst_cos = (0..4)
        .map(|j| dirs.column(j).dot(&vecs.column(j)).abs())
        .fold(f64::INFINITY, f64::min);
    let w1 = &model.layers[0].weights;
    let transpose = (w1 - model.layers[1].weights.transpose()).norm() / w1.norm();
    let off = off_diagonal_ratio(&latent_covariance(&x, &dirs));
    Ok(vec![
        CheckOutcome {
            name: "lae-directions",
            passed: worst_cos >= 0.99,
            measured: worst_cos,
            tolerance: 0.99,
            detail: "smallest |cosine| between recovered and covariance directions".into(),
        },
        CheckOutcome::below("lae-transpose", transpose, 0.05, "||W1 - W2^T|| / ||W1||".into()),
        CheckOutcome::below(
            "lae-latent-diagonal",
            off,
            0.05,
            "largest off-diagonal over smallest diagonal latent covariance".into(),
        ),
    ])
}

pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = vec![
        eigen_equivalence(seed)?,
        full_rank_identity(seed)?,
        shift_invariance(seed)?,
        gradient_check(seed)?,
    ];
    out.extend(lae_recovery(seed)?);
    Ok(out)
}

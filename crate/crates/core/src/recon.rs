use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Output of any reducer: the reconstructed positions and the per-entry
/// absolute errors, both in the max-abs scaled position domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub x_hat: DMatrix<f64>,
    pub errors: DMatrix<f64>,
    pub model_tag: String,
}

impl Reconstruction {
    pub fn new(x: &DMatrix<f64>, x_hat: DMatrix<f64>, model_tag: impl Into<String>) -> Result<Self> {
        if x.shape() != x_hat.shape() {
            return Err(Error::Shape(format!(
                "reconstruction is {:?}, source is {:?}",
                x_hat.shape(),
                x.shape()
            )));
        }
        let errors = x.zip_map(&x_hat, |a, b| (a - b).abs());
        Ok(Self {
            x_hat,
            errors,
            model_tag: model_tag.into(),
        })
    }

    /// Frobenius norm of the residual.
    pub fn frobenius(&self) -> f64 {
        self.errors.norm()
    }
}

//! Dense layers with batch forward and backward passes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Relu => "relu",
            Self::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Self::Linear),
            "relu" => Some(Self::Relu),
            "tanh" => Some(Self::Tanh),
            _ => None,
        }
    }

    fn apply(self, m: &mut DMatrix<f64>) {
        match self {
            Self::Linear => {}
            Self::Relu => m.apply(|v| *v = v.max(0.0)),
            Self::Tanh => m.apply(|v| *v = v.tanh()),
        }
    }

    /// Multiply `grad` in place by the derivative, given pre- and
    /// post-activation values.
    fn backprop(self, grad: &mut DMatrix<f64>, pre: &DMatrix<f64>, post: &DMatrix<f64>) {
        match self {
            Self::Linear => {}
            Self::Relu => grad.zip_apply(pre, |g, p| {
                if p <= 0.0 {
                    *g = 0.0
                }
            }),
            Self::Tanh => grad.zip_apply(post, |g, y| *g *= 1.0 - y * y),
        }
    }
}

/// `out = act(input * weights + bias)` for a batch of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// fan_in x fan_out
    pub weights: DMatrix<f64>,
    pub bias: Option<DVector<f64>>,
    pub activation: Activation,
}

impl Layer {
    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng>(fan_in: usize, fan_out: usize, bias: bool, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = DMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..=limit));
        Self {
            weights,
            bias: bias.then(|| DVector::zeros(fan_out)),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    fn pre_activation(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut pre = input * &self.weights;
        if let Some(b) = &self.bias {
            for mut row in pre.row_iter_mut() {
                row += b.transpose();
            }
        }
        pre
    }

    pub fn forward(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.pre_activation(input);
        self.activation.apply(&mut out);
        out
    }
}

/// Gradient for one layer, shaped like the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: DMatrix<f64>,
    pub bias: Option<DVector<f64>>,
}

pub fn forward(layers: &[Layer], x: &DMatrix<f64>) -> DMatrix<f64> {
    layers.iter().fold(x.clone(), |h, l| l.forward(&h))
}

/// Mean squared error over all entries of the batch plus
/// `l2 * sum ||W||_F^2`, and its gradient with respect to every parameter.
pub fn loss_and_grad(layers: &[Layer], x: &DMatrix<f64>, target: &DMatrix<f64>, l2: f64) -> (f64, Vec<LayerGrad>) {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pres = Vec::with_capacity(layers.len());
    let mut posts = Vec::with_capacity(layers.len());
    let mut h = x.clone();
    for l in layers {
        let pre = l.pre_activation(&h);
        let mut post = pre.clone();
        l.activation.apply(&mut post);
        inputs.push(h);
        pres.push(pre);
        h = post.clone();
        posts.push(post);
    }
    let count = (target.nrows() * target.ncols()) as f64;
    let diff = &h - target;
    let mut loss = diff.norm_squared() / count;
    if l2 > 0.0 {
        loss += l2 * layers.iter().map(|l| l.weights.norm_squared()).sum::<f64>();
    }

    let mut grad = diff * (2.0 / count);
    let mut grads = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate().rev() {
        l.activation.backprop(&mut grad, &pres[i], &posts[i]);
        let mut gw = inputs[i].tr_mul(&grad);
        if l2 > 0.0 {
            gw += &l.weights * (2.0 * l2);
        }
        let gb = l.bias.as_ref().map(|_| grad.row_sum().transpose());
        let next = if i > 0 { Some(&grad * l.weights.transpose()) } else { None };
        grads.push(LayerGrad { weights: gw, bias: gb });
        if let Some(n) = next {
            grad = n;
        }
    }
    grads.reverse();
    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Layer::init(10, 6, true, Activation::Relu, &mut rng);
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(l.weights.iter().all(|w| w.abs() <= limit));
        assert_eq!(l.bias.unwrap(), DVector::zeros(6));
    }

    #[test]
    fn hand_forward() {
        let l = Layer {
            weights: DMatrix::from_row_slice(2, 1, &[1.0, -2.0]),
            bias: Some(DVector::from_element(1, 0.5)),
            activation: Activation::Relu,
        };
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 3.0, 0.0]);
        let y = l.forward(&x);
        assert_eq!(y.as_slice(), &[0.0, 3.5]);
    }

    #[test]
    fn single_linear_layer_gradient() {
        // loss = (w x - y)^2 for one scalar entry
        let l = Layer {
            weights: DMatrix::from_element(1, 1, 2.0),
            bias: None,
            activation: Activation::Linear,
        };
        let x = DMatrix::from_element(1, 1, 3.0);
        let y = DMatrix::from_element(1, 1, 1.0);
        let (loss, g) = loss_and_grad(&[l], &x, &y, 0.0);
        assert_eq!(loss, 25.0);
        assert_eq!(g[0].weights[(0, 0)], 30.0);
    }
}

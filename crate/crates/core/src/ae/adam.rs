//! Adam optimiser over a stack of layers.

use nalgebra::{DMatrix, DVector};

use super::net::{Layer, LayerGrad};

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Vec<LayerGrad>,
    v: Vec<LayerGrad>,
}

fn zeros_like(layers: &[Layer]) -> Vec<LayerGrad> {
    layers
        .iter()
        .map(|l| LayerGrad {
            weights: DMatrix::zeros(l.fan_in(), l.fan_out()),
            bias: l.bias.as_ref().map(|b| DVector::zeros(b.len())),
        })
        .collect()
}

impl Adam {
    pub fn new(layers: &[Layer], lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: zeros_like(layers),
            v: zeros_like(layers),
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn update(&mut self, layers: &mut [Layer], grads: &[LayerGrad]) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = self.lr;
        let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (((layer, g), m), v) in layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            apply(
                layer.weights.as_mut_slice(),
                g.weights.as_slice(),
                m.weights.as_mut_slice(),
                v.weights.as_mut_slice(),
            );
            if let (Some(b), Some(gb), Some(mb), Some(vb)) = (&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias) {
                apply(b.as_mut_slice(), gb.as_slice(), mb.as_mut_slice(), vb.as_mut_slice());
            }
        }
    }
}

//! Adam parameter updates with bias-corrected first and second moments.

use ndarray::{Array1, Array4, NdFloat};

use super::model::{Gradients, ReconNet};
use super::tensor::sc;

/// Per-parameter moment buffers plus the shared step counter.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    moments: Vec<LayerMoments<T>>,
    step: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

#[derive(Debug, Clone)]
struct LayerMoments<T> {
    m_weight: Array4<T>,
    v_weight: Array4<T>,
    m_bias: Array1<T>,
    v_bias: Array1<T>,
}

impl<T: NdFloat> Adam<T> {
    /// Zeroed moments shaped after the network's layers.
    pub fn new(net: &ReconNet<T>, beta1: f64, beta2: f64, epsilon: f64) -> Adam<T> {
        let moments = net
            .layers()
            .iter()
            .map(|(_, layer)| LayerMoments {
                m_weight: Array4::zeros(layer.weight.dim()),
                v_weight: Array4::zeros(layer.weight.dim()),
                m_bias: Array1::zeros(layer.bias.len()),
                v_bias: Array1::zeros(layer.bias.len()),
            })
            .collect();
        Adam {
            moments,
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step_count(&self) -> i32 {
        self.step
    }

    /// One update: m and v decay toward the gradient and its square, then
    /// parameters move by `lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, net: &mut ReconNet<T>, grads: &Gradients<T>, learning_rate: f64) {
        self.step += 1;
        let b1 = sc::<T>(self.beta1);
        let b2 = sc::<T>(self.beta2);
        let eps = sc::<T>(self.epsilon);
        let lr = sc::<T>(learning_rate);
        let one = T::one();
        let corr1 = one - sc::<T>(self.beta1.powi(self.step));
        let corr2 = one - sc::<T>(self.beta2.powi(self.step));
        for ((layer, grad), st) in net
            .layers_mut()
            .into_iter()
            .zip(grads.layers())
            .zip(&mut self.moments)
        {
            let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            };
            for ((p, &g), (m, v)) in layer
                .weight
                .iter_mut()
                .zip(grad.weight.iter())
                .zip(st.m_weight.iter_mut().zip(st.v_weight.iter_mut()))
            {
                update(p, g, m, v);
            }
            for ((p, &g), (m, v)) in layer
                .bias
                .iter_mut()
                .zip(grad.bias.iter())
                .zip(st.m_bias.iter_mut().zip(st.v_bias.iter_mut()))
            {
                update(p, g, m, v);
            }
        }
    }
}

//! The reconstruction network: three conv+pool encoder stages, a
//! bottleneck, and two upsample+skip decoder stages ending in a linear
//! 1-channel head. Output spatial dims are exactly half the input's.

use ndarray::{Array4, NdFloat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    avg_pool2, avg_pool2_backward, concat_channels, relu, relu_backward, split_channels, Conv2d,
    Conv2dGrad,
};
use super::tensor::{resize_bilinear, resize_bilinear_adjoint};
use super::NetError;

/// Encoder depth is fixed at three 2x downsamples, so spatial dims must be
/// divisible by this.
pub const SPATIAL_MULTIPLE: usize = 8;

/// Channel schedule and seed; everything needed to rebuild the
/// architecture (the parameters themselves live in checkpoints).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Output channels of the three encoder stages.
    pub channels: [usize; 3],
    /// Seed for He-uniform initialization.
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            channels: [16, 32, 64],
            seed: 0,
        }
    }
}

/// Encoder-decoder depth regressor. Generic over the float type: `f32` for
/// training, `f64` for finite-difference gradient checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconNet<T> {
    enc1: Conv2d<T>,
    enc2: Conv2d<T>,
    enc3: Conv2d<T>,
    bottleneck: Conv2d<T>,
    dec1: Conv2d<T>,
    dec2: Conv2d<T>,
    head: Conv2d<T>,
    config: NetConfig,
}

/// Cached activations from a forward pass, consumed by [`ReconNet::backward`].
#[derive(Debug)]
pub struct Trace<T> {
    x: Array4<T>,
    e1: Array4<T>,
    s1: Array4<T>,
    e2: Array4<T>,
    s2: Array4<T>,
    e3: Array4<T>,
    p3: Array4<T>,
    bn: Array4<T>,
    c1: Array4<T>,
    d1: Array4<T>,
    c2: Array4<T>,
    d2: Array4<T>,
    output: Array4<T>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &Array4<T> {
        &self.output
    }
}

/// Per-layer parameter gradients, ordered like [`ReconNet::layers`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Conv2dGrad<T>>,
}

impl<T: NdFloat> Gradients<T> {
    pub fn layers(&self) -> &[Conv2dGrad<T>] {
        &self.grads
    }

    /// Euclidean norm over every parameter gradient.
    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.weight.iter().chain(g.bias.iter()))
            .map(|v| {
                let f = v.to_f64().expect("gradients fit in f64");
                f * f
            })
            .sum::<f64>()
            .sqrt()
    }
}

impl<T: NdFloat> ReconNet<T> {
    /// Builds a network with He-uniform weights drawn from a ChaCha8 stream
    /// seeded by `config.seed`; biases start at zero.
    pub fn seeded(config: NetConfig) -> ReconNet<T> {
        let [c1, c2, c3] = config.channels;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        ReconNet {
            enc1: Conv2d::he_uniform(3, c1, &mut rng),
            enc2: Conv2d::he_uniform(c1, c2, &mut rng),
            enc3: Conv2d::he_uniform(c2, c3, &mut rng),
            bottleneck: Conv2d::he_uniform(c3, c3, &mut rng),
            dec1: Conv2d::he_uniform(c3 + c2, c2, &mut rng),
            dec2: Conv2d::he_uniform(c2 + c1, c1, &mut rng),
            head: Conv2d::he_uniform(c1, 1, &mut rng),
            config,
        }
    }

    /// Rebuilds a network from explicit layers (checkpoint loading).
    pub(super) fn from_layers(layers: Vec<Conv2d<T>>, config: NetConfig) -> ReconNet<T> {
        let mut it = layers.into_iter();
        let net = ReconNet {
            enc1: it.next().expect("seven layers"),
            enc2: it.next().expect("seven layers"),
            enc3: it.next().expect("seven layers"),
            bottleneck: it.next().expect("seven layers"),
            dec1: it.next().expect("seven layers"),
            dec2: it.next().expect("seven layers"),
            head: it.next().expect("seven layers"),
            config,
        };
        assert!(it.next().is_none(), "exactly seven layers");
        net
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// Layers in forward order, paired with stable names used by the
    /// checkpoint format.
    pub fn layers(&self) -> [(&'static str, &Conv2d<T>); 7] {
        [
            ("enc1", &self.enc1),
            ("enc2", &self.enc2),
            ("enc3", &self.enc3),
            ("bottleneck", &self.bottleneck),
            ("dec1", &self.dec1),
            ("dec2", &self.dec2),
            ("head", &self.head),
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut Conv2d<T>; 7] {
        [
            &mut self.enc1,
            &mut self.enc2,
            &mut self.enc3,
            &mut self.bottleneck,
            &mut self.dec1,
            &mut self.dec2,
            &mut self.head,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(|(_, l)| l.parameter_count()).sum()
    }

    /// L2 norm over all parameters, reported in non-finite-loss
    /// diagnostics.
    pub fn parameter_norm(&self) -> f64 {
        self.layers()
            .iter()
            .flat_map(|(_, l)| l.weight.iter().chain(l.bias.iter()))
            .map(|v| {
                let f = v.to_f64().expect("parameters fit in f64");
                f * f
            })
            .sum::<f64>()
            .sqrt()
    }

    fn check_input(&self, x: &Array4<T>) -> Result<(), NetError> {
        let (_, h, w, c) = x.dim();
        if c != 3 {
            return Err(NetError::ShapeMismatch {
                expected: "3 input channels".into(),
                got: format!("{c}"),
            });
        }
        if h % SPATIAL_MULTIPLE != 0 || w % SPATIAL_MULTIPLE != 0 || h == 0 || w == 0 {
            return Err(NetError::Indivisible {
                got_h: h,
                got_w: w,
                multiple: SPATIAL_MULTIPLE,
            });
        }
        Ok(())
    }

    /// Forward pass keeping every intermediate activation for backprop.
    pub fn forward_trace(&self, x: &Array4<T>) -> Result<Trace<T>, NetError> {
        self.check_input(x)?;
        let e1 = relu(&self.enc1.forward(x));
        let s1 = avg_pool2(&e1);
        let e2 = relu(&self.enc2.forward(&s1));
        let s2 = avg_pool2(&e2);
        let e3 = relu(&self.enc3.forward(&s2));
        let p3 = avg_pool2(&e3);
        let bn = relu(&self.bottleneck.forward(&p3));
        let (_, bh, bw, _) = bn.dim();
        let u1 = resize_bilinear(&bn, bh * 2, bw * 2)?;
        let c1 = concat_channels(&u1, &s2);
        let d1 = relu(&self.dec1.forward(&c1));
        let (_, dh, dw, _) = d1.dim();
        let u2 = resize_bilinear(&d1, dh * 2, dw * 2)?;
        let c2 = concat_channels(&u2, &s1);
        let d2 = relu(&self.dec2.forward(&c2));
        let output = self.head.forward(&d2);
        Ok(Trace {
            x: x.clone(),
            e1,
            s1,
            e2,
            s2,
            e3,
            p3,
            bn,
            c1,
            d1,
            c2,
            d2,
            output,
        })
    }

    /// Forward pass returning only the half-resolution depth prediction.
    pub fn forward(&self, x: &Array4<T>) -> Result<Array4<T>, NetError> {
        Ok(self.forward_trace(x)?.output)
    }

    /// Backpropagates a loss gradient at the output through every layer,
    /// returning parameter gradients ordered like [`ReconNet::layers`].
    pub fn backward(&self, trace: &Trace<T>, grad_output: &Array4<T>) -> Gradients<T> {
        let [c1ch, c2ch, c3ch] = self.config.channels;
        let (gd2, g_head) = self.head.backward(&trace.d2, grad_output);
        let gd2 = relu_backward(&trace.d2, &gd2);
        let (gc2, g_dec2) = self.dec2.backward(&trace.c2, &gd2);
        let (gu2, gs1_skip) = split_channels(&gc2, c2ch);
        let (_, d1h, d1w, _) = trace.d1.dim();
        let gd1 = resize_bilinear_adjoint(&gu2, d1h, d1w).expect("trace dims are valid");
        let gd1 = relu_backward(&trace.d1, &gd1);
        let (gc1, g_dec1) = self.dec1.backward(&trace.c1, &gd1);
        let (gu1, gs2_skip) = split_channels(&gc1, c3ch);
        let (_, bnh, bnw, _) = trace.bn.dim();
        let gbn = resize_bilinear_adjoint(&gu1, bnh, bnw).expect("trace dims are valid");
        let gbn = relu_backward(&trace.bn, &gbn);
        let (gp3, g_bottleneck) = self.bottleneck.backward(&trace.p3, &gbn);
        let (_, e3h, e3w, _) = trace.e3.dim();
        let ge3 = avg_pool2_backward(&gp3, e3h, e3w);
        let ge3 = relu_backward(&trace.e3, &ge3);
        let (gs2_main, g_enc3) = self.enc3.backward(&trace.s2, &ge3);
        let gs2 = gs2_main + &gs2_skip;
        let (_, e2h, e2w, _) = trace.e2.dim();
        let ge2 = avg_pool2_backward(&gs2, e2h, e2w);
        let ge2 = relu_backward(&trace.e2, &ge2);
        let (gs1_main, g_enc2) = self.enc2.backward(&trace.s1, &ge2);
        let gs1 = gs1_main + &gs1_skip;
        let (_, e1h, e1w, _) = trace.e1.dim();
        let ge1 = avg_pool2_backward(&gs1, e1h, e1w);
        let ge1 = relu_backward(&trace.e1, &ge1);
        let (_, g_enc1) = self.enc1.backward(&trace.x, &ge1);
        let _ = c1ch;
        Gradients {
            grads: vec![
                g_enc1,
                g_enc2,
                g_enc3,
                g_bottleneck,
                g_dec1,
                g_dec2,
                g_head,
            ],
        }
    }

    /// Converts every parameter to `f32` (checkpoint precision).
    pub fn to_f32(&self) -> ReconNet<f32> {
        let layers = self
            .layers()
            .iter()
            .map(|(_, l)| Conv2d {
                weight: l.weight.mapv(|v| v.to_f32().expect("finite parameter")),
                bias: l.bias.mapv(|v| v.to_f32().expect("finite parameter")),
            })
            .collect();
        ReconNet::from_layers(layers, self.config.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_input(n: usize, h: usize, w: usize, seed: u64) -> Array4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn((n, h, w, 3), |_| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn output_is_half_the_input_resolution() {
        let net = ReconNet::<f32>::seeded(NetConfig::default());
        for (h, w) in [(16, 16), (32, 64), (8, 8)] {
            let y = net.forward(&rand_input(1, h, w, 4)).unwrap();
            assert_eq!(y.dim(), (1, h / 2, w / 2, 1));
        }
    }

    #[test]
    fn indivisible_input_reports_the_required_multiple() {
        let net = ReconNet::<f32>::seeded(NetConfig::default());
        match net.forward(&rand_input(1, 12, 16, 4)) {
            Err(NetError::Indivisible {
                got_h: 12,
                got_w: 16,
                multiple: 8,
            }) => {}
            other => panic!("expected Indivisible, got {other:?}"),
        }
    }

    #[test]
    fn zeroed_head_outputs_zero_regardless_of_input() {
        let mut net = ReconNet::<f32>::seeded(NetConfig::default());
        net.head = Conv2d {
            weight: Array4::zeros(net.head.weight.dim()),
            bias: Array1::zeros(net.head.bias.len()),
        };
        let y = net.forward(&rand_input(2, 16, 16, 9)).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn samples_in_a_batch_do_not_interact() {
        let net = ReconNet::<f32>::seeded(NetConfig::default());
        let single = rand_input(1, 16, 16, 21);
        let mut four = Array4::zeros((4, 16, 16, 3));
        for b in 0..4 {
            four.index_axis_mut(ndarray::Axis(0), b).assign(
                &single.index_axis(ndarray::Axis(0), 0),
            );
        }
        let y1 = net.forward(&single).unwrap();
        let y4 = net.forward(&four).unwrap();
        for b in 0..4 {
            assert_eq!(
                y1.index_axis(ndarray::Axis(0), 0),
                y4.index_axis(ndarray::Axis(0), b),
                "sample {b}"
            );
        }
    }

    #[test]
    fn identical_batch_entries_produce_identical_maps() {
        let net = ReconNet::<f32>::seeded(NetConfig::default());
        let one = rand_input(1, 16, 16, 33);
        let two = ndarray::concatenate(ndarray::Axis(0), &[one.view(), one.view()]).unwrap();
        let y = net.forward(&two.as_standard_layout().to_owned()).unwrap();
        assert_eq!(
            y.index_axis(ndarray::Axis(0), 0),
            y.index_axis(ndarray::Axis(0), 1)
        );
    }

    #[test]
    fn seeding_fixes_every_parameter() {
        let a = ReconNet::<f32>::seeded(NetConfig::default());
        let b = ReconNet::<f32>::seeded(NetConfig::default());
        assert_eq!(a, b);
        let c = ReconNet::<f32>::seeded(NetConfig {
            seed: 1,
            ..NetConfig::default()
        });
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_count_matches_the_declared_schedule() {
        let net = ReconNet::<f32>::seeded(NetConfig::default());
        // 3x3 kernels: (3*3*c_in + 1) * c_out summed over the seven layers.
        let expected = (3 * 3 * 3 + 1) * 16
            + (3 * 3 * 16 + 1) * 32
            + (3 * 3 * 32 + 1) * 64
            + (3 * 3 * 64 + 1) * 64
            + (3 * 3 * 96 + 1) * 32
            + (3 * 3 * 48 + 1) * 16
            + (3 * 3 * 16 + 1) * 1;
        assert_eq!(net.parameter_count(), expected);
        assert_eq!(net.parameter_count(), 95_265);
    }

    #[test]
    fn every_parameter_gradient_matches_finite_differences() {
        use crate::net::{composite_loss, LossSpec};
        // Tiny f64 net on an 8x8 input; window 3 so SSIM fits the 4x4
        // output. 337 parameters, all checked against central differences.
        let config = NetConfig {
            channels: [2, 2, 2],
            seed: 17,
        };
        let net = ReconNet::<f64>::seeded(config);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let x = Array4::from_shape_fn((1, 8, 8, 3), |_| rng.gen_range(0.0..1.0));
        let t = Array4::from_shape_fn((1, 4, 4, 1), |_| rng.gen_range(10.0..1000.0));
        let spec = LossSpec {
            window: 3,
            ..LossSpec::default()
        };
        let loss_of = |n: &ReconNet<f64>| -> f64 {
            composite_loss(&n.forward(&x).unwrap(), &t, &spec)
                .unwrap()
                .0
                .total
        };
        let trace = net.forward_trace(&x).unwrap();
        let (_, dpred) = composite_loss(trace.output(), &t, &spec).unwrap();
        let grads = net.backward(&trace, &dpred);
        let h = 1e-5;
        let mut checked = 0usize;
        for li in 0..7 {
            for weight in [true, false] {
                let count = if weight {
                    net.layers()[li].1.weight.len()
                } else {
                    net.layers()[li].1.bias.len()
                };
                for pi in 0..count {
                    let mut hi = net.clone();
                    let mut lo = net.clone();
                    if weight {
                        hi.layers_mut()[li].weight.as_slice_mut().unwrap()[pi] += h;
                        lo.layers_mut()[li].weight.as_slice_mut().unwrap()[pi] -= h;
                    } else {
                        hi.layers_mut()[li].bias.as_slice_mut().unwrap()[pi] += h;
                        lo.layers_mut()[li].bias.as_slice_mut().unwrap()[pi] -= h;
                    }
                    let numeric = (loss_of(&hi) - loss_of(&lo)) / (2.0 * h);
                    let g = &grads.layers()[li];
                    let analytic = if weight {
                        g.weight.as_slice().unwrap()[pi]
                    } else {
                        g.bias.as_slice().unwrap()[pi]
                    };
                    // Relative error 1e-4 with an absolute floor for the
                    // rounding noise central differences leave near zero.
                    assert!(
                        (analytic - numeric).abs()
                            <= 1e-7 + 1e-4 * analytic.abs().max(numeric.abs()),
                        "layer {} {} param {pi}: analytic {analytic}, numeric {numeric}",
                        net.layers()[li].0,
                        if weight { "weight" } else { "bias" },
                    );
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, net.parameter_count());
        assert_eq!(checked, 337);
    }

    #[test]
    fn biases_start_at_zero() {
        let net = ReconNet::<f64>::seeded(NetConfig::default());
        for (name, layer) in net.layers() {
            assert!(
                layer.bias.iter().all(|&b| b == 0.0),
                "{name} bias not zero-initialized"
            );
        }
    }
}

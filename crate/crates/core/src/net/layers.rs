//! Network building blocks: 3x3 same-padded convolution, ReLU, 2x2 average
//! pooling, and channel concatenation, each with a hand-derived backward
//! pass.

use ndarray::{Array1, Array4, NdFloat};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::tensor::{debug_assert_finite, sc};

/// A 3x3 convolution with zero padding. Weights are stored
/// (ky, kx, c_in, c_out) so the innermost products run over contiguous
/// output channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Array4<T>,
    pub bias: Array1<T>,
}

/// Parameter gradients for one convolution, shaped like the layer itself.
#[derive(Debug, Clone)]
pub struct Conv2dGrad<T> {
    pub weight: Array4<T>,
    pub bias: Array1<T>,
}

impl<T: NdFloat> Conv2d<T> {
    /// He-uniform initialization: weights from U(-b, b) with
    /// b = sqrt(6 / fan_in), biases zero. Draw order is row-major over
    /// (ky, kx, c_in, c_out), so a fixed seed fixes every parameter.
    pub fn he_uniform<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Conv2d<T> {
        let fan_in = (3 * 3 * c_in) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let dist = Uniform::new(-bound, bound);
        let weight = Array4::from_shape_fn((3, 3, c_in, c_out), |_| sc::<T>(dist.sample(rng)));
        Conv2d {
            weight,
            bias: Array1::zeros(c_out),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.dim().2
    }

    pub fn c_out(&self) -> usize {
        self.weight.dim().3
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Same-padded forward pass: output spatial dims equal input dims.
    pub fn forward(&self, x: &Array4<T>) -> Array4<T> {
        let (n, h, w, c_in) = x.dim();
        let (_, _, wc_in, c_out) = self.weight.dim();
        debug_assert_eq!(c_in, wc_in, "convolution input channels");
        let xs = x.as_slice().expect("tensors are contiguous");
        let ws = self.weight.as_slice().expect("weights are contiguous");
        let bias = self.bias.as_slice().expect("bias is contiguous");
        let mut y = Array4::zeros((n, h, w, c_out));
        {
            let ys = y.as_slice_mut().expect("freshly allocated");
            for b in 0..n {
                for oy in 0..h {
                    for ox in 0..w {
                        let out = &mut ys[((b * h + oy) * w + ox) * c_out..][..c_out];
                        out.copy_from_slice(bias);
                        for ky in 0..3 {
                            let Some(iy) = (oy + ky).checked_sub(1).filter(|&v| v < h) else {
                                continue;
                            };
                            for kx in 0..3 {
                                let Some(ix) = (ox + kx).checked_sub(1).filter(|&v| v < w)
                                else {
                                    continue;
                                };
                                let xrow = &xs[((b * h + iy) * w + ix) * c_in..][..c_in];
                                let wbase = ((ky * 3 + kx) * c_in) * c_out;
                                for (ci, &xv) in xrow.iter().enumerate() {
                                    let wrow = &ws[wbase + ci * c_out..][..c_out];
                                    for (o, &wv) in out.iter_mut().zip(wrow) {
                                        *o = *o + xv * wv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        debug_assert_finite("conv output", y.iter());
        y
    }

    /// Backward pass: given the forward input and the loss gradient at the
    /// output, returns the gradient at the input and the parameter
    /// gradients.
    pub fn backward(&self, x: &Array4<T>, grad_out: &Array4<T>) -> (Array4<T>, Conv2dGrad<T>) {
        let (n, h, w, c_in) = x.dim();
        let (_, _, _, c_out) = self.weight.dim();
        debug_assert_eq!(grad_out.dim(), (n, h, w, c_out), "gradient shape");
        let xs = x.as_slice().expect("tensors are contiguous");
        let ws = self.weight.as_slice().expect("weights are contiguous");
        let gs = grad_out.as_slice().expect("tensors are contiguous");
        let mut dx = Array4::zeros((n, h, w, c_in));
        let mut dw = Array4::<T>::zeros((3, 3, c_in, c_out));
        let mut db = Array1::<T>::zeros(c_out);
        {
            let dxs = dx.as_slice_mut().expect("freshly allocated");
            let dws = dw.as_slice_mut().expect("freshly allocated");
            let dbs = db.as_slice_mut().expect("freshly allocated");
            for b in 0..n {
                for oy in 0..h {
                    for ox in 0..w {
                        let g = &gs[((b * h + oy) * w + ox) * c_out..][..c_out];
                        for (d, &gv) in dbs.iter_mut().zip(g) {
                            *d = *d + gv;
                        }
                        for ky in 0..3 {
                            let Some(iy) = (oy + ky).checked_sub(1).filter(|&v| v < h) else {
                                continue;
                            };
                            for kx in 0..3 {
                                let Some(ix) = (ox + kx).checked_sub(1).filter(|&v| v < w)
                                else {
                                    continue;
                                };
                                let ibase = ((b * h + iy) * w + ix) * c_in;
                                let wbase = ((ky * 3 + kx) * c_in) * c_out;
                                for ci in 0..c_in {
                                    let xv = xs[ibase + ci];
                                    let wrow = &ws[wbase + ci * c_out..][..c_out];
                                    let dwrow = &mut dws[wbase + ci * c_out..][..c_out];
                                    let mut acc = T::zero();
                                    for ((&gv, &wv), d) in
                                        g.iter().zip(wrow).zip(dwrow.iter_mut())
                                    {
                                        acc = acc + gv * wv;
                                        *d = *d + xv * gv;
                                    }
                                    dxs[ibase + ci] = dxs[ibase + ci] + acc;
                                }
                            }
                        }
                    }
                }
            }
        }
        (
            dx,
            Conv2dGrad {
                weight: dw,
                bias: db,
            },
        )
    }
}

/// Elementwise max(0, x).
pub fn relu<T: NdFloat>(x: &Array4<T>) -> Array4<T> {
    x.mapv(|v| v.max(T::zero()))
}

/// ReLU backward using the post-activation values: gradient passes where
/// the output was strictly positive.
pub fn relu_backward<T: NdFloat>(activated: &Array4<T>, grad: &Array4<T>) -> Array4<T> {
    let mut out = grad.clone();
    out.zip_mut_with(activated, |g, &a| {
        if a <= T::zero() {
            *g = T::zero();
        }
    });
    out
}

/// 2x2 average pooling with stride 2. Spatial dims must be even.
pub fn avg_pool2<T: NdFloat>(x: &Array4<T>) -> Array4<T> {
    let (n, h, w, c) = x.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even dims");
    let (oh, ow) = (h / 2, w / 2);
    let quarter = sc::<T>(0.25);
    let xs = x.as_slice().expect("tensors are contiguous");
    let mut y = Array4::zeros((n, oh, ow, c));
    {
        let ys = y.as_slice_mut().expect("freshly allocated");
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let i00 = ((b * h + 2 * oy) * w + 2 * ox) * c;
                    let i01 = i00 + c;
                    let i10 = ((b * h + 2 * oy + 1) * w + 2 * ox) * c;
                    let i11 = i10 + c;
                    let o = ((b * oh + oy) * ow + ox) * c;
                    for ch in 0..c {
                        ys[o + ch] = (xs[i00 + ch] + xs[i01 + ch] + xs[i10 + ch] + xs[i11 + ch])
                            * quarter;
                    }
                }
            }
        }
    }
    y
}

/// Backward of [`avg_pool2`]: each input pixel receives a quarter of its
/// pool's output gradient.
pub fn avg_pool2_backward<T: NdFloat>(grad: &Array4<T>, in_h: usize, in_w: usize) -> Array4<T> {
    let (n, oh, ow, c) = grad.dim();
    debug_assert_eq!((oh * 2, ow * 2), (in_h, in_w), "pooling geometry");
    let quarter = sc::<T>(0.25);
    let gs = grad.as_slice().expect("tensors are contiguous");
    let mut dx = Array4::zeros((n, in_h, in_w, c));
    {
        let ds = dx.as_slice_mut().expect("freshly allocated");
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = ((b * oh + oy) * ow + ox) * c;
                    let i00 = ((b * in_h + 2 * oy) * in_w + 2 * ox) * c;
                    let i01 = i00 + c;
                    let i10 = ((b * in_h + 2 * oy + 1) * in_w + 2 * ox) * c;
                    let i11 = i10 + c;
                    for ch in 0..c {
                        let g = gs[o + ch] * quarter;
                        ds[i00 + ch] = g;
                        ds[i01 + ch] = g;
                        ds[i10 + ch] = g;
                        ds[i11 + ch] = g;
                    }
                }
            }
        }
    }
    dx
}

/// Concatenates two NHWC tensors along the channel axis.
pub fn concat_channels<T: NdFloat>(a: &Array4<T>, b: &Array4<T>) -> Array4<T> {
    debug_assert_eq!(
        (a.dim().0, a.dim().1, a.dim().2),
        (b.dim().0, b.dim().1, b.dim().2),
        "concat spatial dims"
    );
    ndarray::concatenate(ndarray::Axis(3), &[a.view(), b.view()])
        .expect("matching spatial dims")
        .as_standard_layout()
        .to_owned()
}

/// Splits a channel-concatenated gradient back into its two halves.
pub fn split_channels<T: NdFloat>(grad: &Array4<T>, c_first: usize) -> (Array4<T>, Array4<T>) {
    let (first, second) = grad
        .view()
        .split_at(ndarray::Axis(3), c_first);
    (
        first.as_standard_layout().to_owned(),
        second.as_standard_layout().to_owned(),
    )
}

//! NHWC tensor helpers: bilinear resampling and the depth-code rescaling
//! applied to training targets.

use ndarray::{Array4, NdFloat};

use super::loss::LossSpec;
use super::NetError;

/// Shorthand for lossless-enough conversion of an `f64` constant into the
/// working scalar type.
pub(crate) fn sc<T: NdFloat>(value: f64) -> T {
    T::from(value).expect("constant representable in the working float type")
}

/// Debug-mode hook: panics if any value in `values` is not finite. Release
/// builds compile this away.
pub(crate) fn debug_assert_finite<'a, T: NdFloat>(
    tag: &str,
    values: impl IntoIterator<Item = &'a T>,
) {
    if cfg!(debug_assertions) {
        for (i, v) in values.into_iter().enumerate() {
            assert!(
                v.is_finite(),
                "non-finite value {v} at flat index {i} in {tag}"
            );
        }
    }
    let _ = tag;
}

/// One output coordinate's source taps along a single axis: interpolate
/// between `lo` and `hi` with weight `frac` on `hi`.
#[derive(Debug, Clone, Copy)]
struct AxisTap {
    lo: usize,
    hi: usize,
    frac: f64,
}

/// Corner-aligned bilinear tap positions mapping `n_out` samples onto
/// `n_in` sources: output 0 lands on input 0 and output n_out-1 on input
/// n_in-1. A single-sample source expands to a constant.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<AxisTap> {
    (0..n_out)
        .map(|i| {
            if n_out == 1 || n_in == 1 {
                return AxisTap {
                    lo: 0,
                    hi: 0,
                    frac: 0.0,
                };
            }
            let s = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
            let lo = (s.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            AxisTap {
                lo,
                hi,
                frac: s - lo as f64,
            }
        })
        .collect()
}

/// Resamples an NHWC tensor to `out_h` x `out_w` with separable,
/// corner-aligned bilinear interpolation. Resizing to the input size
/// returns the input bit for bit.
pub fn resize_bilinear<T: NdFloat>(
    t: &Array4<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Array4<T>, NetError> {
    let (n, h, w, c) = t.dim();
    if out_h < 1 || out_w < 1 {
        return Err(NetError::BadResize { out_h, out_w });
    }
    if h < 1 || w < 1 {
        return Err(NetError::ShapeMismatch {
            expected: "non-empty input".into(),
            got: format!("{h}x{w}"),
        });
    }
    if out_h == h && out_w == w {
        return Ok(t.clone());
    }
    let rows = axis_taps(h, out_h);
    let cols = axis_taps(w, out_w);
    let src = t.as_slice().expect("tensors are contiguous");
    let mut out = Array4::zeros((n, out_h, out_w, c));
    {
        let dst = out.as_slice_mut().expect("freshly allocated");
        for b in 0..n {
            for (oy, ry) in rows.iter().enumerate() {
                let fy = sc::<T>(ry.frac);
                let gy = T::one() - fy;
                for (ox, rx) in cols.iter().enumerate() {
                    let fx = sc::<T>(rx.frac);
                    let gx = T::one() - fx;
                    let i00 = ((b * h + ry.lo) * w + rx.lo) * c;
                    let i01 = ((b * h + ry.lo) * w + rx.hi) * c;
                    let i10 = ((b * h + ry.hi) * w + rx.lo) * c;
                    let i11 = ((b * h + ry.hi) * w + rx.hi) * c;
                    let o = ((b * out_h + oy) * out_w + ox) * c;
                    for ch in 0..c {
                        let top = gx * src[i00 + ch] + fx * src[i01 + ch];
                        let bot = gx * src[i10 + ch] + fx * src[i11 + ch];
                        dst[o + ch] = gy * top + fy * bot;
                    }
                }
            }
        }
    }
    debug_assert_finite("resize_bilinear output", out.iter());
    Ok(out)
}

/// Adjoint of [`resize_bilinear`]: scatters a gradient at the output
/// resolution back onto an `in_h` x `in_w` grid. For any tensors `x`, `g`:
/// `dot(resize(x), g) == dot(x, adjoint(g))`.
pub fn resize_bilinear_adjoint<T: NdFloat>(
    grad: &Array4<T>,
    in_h: usize,
    in_w: usize,
) -> Result<Array4<T>, NetError> {
    let (n, out_h, out_w, c) = grad.dim();
    if in_h < 1 || in_w < 1 {
        return Err(NetError::ShapeMismatch {
            expected: "non-empty source".into(),
            got: format!("{in_h}x{in_w}"),
        });
    }
    if out_h == in_h && out_w == in_w {
        return Ok(grad.clone());
    }
    let rows = axis_taps(in_h, out_h);
    let cols = axis_taps(in_w, out_w);
    let src = grad.as_slice().expect("tensors are contiguous");
    let mut out = Array4::zeros((n, in_h, in_w, c));
    {
        let dst = out.as_slice_mut().expect("freshly allocated");
        for b in 0..n {
            for (oy, ry) in rows.iter().enumerate() {
                let fy = sc::<T>(ry.frac);
                let gy = T::one() - fy;
                for (ox, rx) in cols.iter().enumerate() {
                    let fx = sc::<T>(rx.frac);
                    let gx = T::one() - fx;
                    let i00 = ((b * in_h + ry.lo) * in_w + rx.lo) * c;
                    let i01 = ((b * in_h + ry.lo) * in_w + rx.hi) * c;
                    let i10 = ((b * in_h + ry.hi) * in_w + rx.lo) * c;
                    let i11 = ((b * in_h + ry.hi) * in_w + rx.hi) * c;
                    let o = ((b * out_h + oy) * out_w + ox) * c;
                    for ch in 0..c {
                        let g = src[o + ch];
                        dst[i00 + ch] = dst[i00 + ch] + gy * gx * g;
                        dst[i01 + ch] = dst[i01 + ch] + gy * fx * g;
                        dst[i10 + ch] = dst[i10 + ch] + fy * gx * g;
                        dst[i11 + ch] = dst[i11 + ch] + fy * fx * g;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Maps 8-bit depth codes onto the training range: `lo + code*(hi-lo)/255`.
/// The network regresses these rescaled values rather than raw codes.
pub fn rescale_target<T: NdFloat>(codes: &Array4<T>, spec: &LossSpec) -> Array4<T> {
    let (lo, hi) = spec.rescale;
    let scale = sc::<T>((hi - lo) / 255.0);
    let offset = sc::<T>(lo);
    codes.mapv(|c| offset + c * scale)
}

/// Inverse of [`rescale_target`]: recovers fractional code units from
/// network output.
pub fn rescale_inverse<T: NdFloat>(values: &Array4<T>, spec: &LossSpec) -> Array4<T> {
    let (lo, hi) = spec.rescale;
    let scale = sc::<T>(255.0 / (hi - lo));
    let offset = sc::<T>(lo);
    values.mapv(|y| (y - offset) * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_2x2() -> Array4<f64> {
        array![[[[0.0], [1.0]], [[2.0], [3.0]]]]
    }

    #[test]
    fn identity_resize_is_bitwise_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = Array4::from_shape_fn((2, 5, 4, 3), |_| rng.gen_range(-1.0f32..1.0));
        let r = resize_bilinear(&t, 5, 4).unwrap();
        assert_eq!(
            t.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            r.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn two_by_two_to_three_by_three_center_is_the_four_corner_mean() {
        let up = resize_bilinear(&grid_2x2(), 3, 3).unwrap();
        assert_eq!(up[(0, 1, 1, 0)], 1.5);
        // Corner alignment keeps the original samples at the corners.
        assert_eq!(up[(0, 0, 0, 0)], 0.0);
        assert_eq!(up[(0, 0, 2, 0)], 1.0);
        assert_eq!(up[(0, 2, 0, 0)], 2.0);
        assert_eq!(up[(0, 2, 2, 0)], 3.0);
        // Edge midpoints interpolate along one axis only.
        assert_eq!(up[(0, 0, 1, 0)], 0.5);
        assert_eq!(up[(0, 1, 0, 0)], 1.0);
    }

    #[test]
    fn degenerate_resize_target_is_rejected() {
        match resize_bilinear(&grid_2x2(), 0, 3) {
            Err(NetError::BadResize { out_h: 0, out_w: 3 }) => {}
            other => panic!("expected BadResize, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn constant_images_resize_to_the_same_constant(
            value in -10.0f64..10.0,
            h in 2usize..6,
            w in 2usize..6,
            out_h in 1usize..9,
            out_w in 1usize..9,
        ) {
            let t = Array4::from_elem((1, h, w, 2), value);
            let r = resize_bilinear(&t, out_h, out_w).unwrap();
            for v in r.iter() {
                prop_assert!((v - value).abs() < 1e-12);
            }
        }

        #[test]
        fn resize_and_adjoint_are_transposes(seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array4::from_shape_fn((1, 4, 5, 2), |_| rng.gen_range(-1.0f64..1.0));
            let g = Array4::from_shape_fn((1, 7, 3, 2), |_| rng.gen_range(-1.0f64..1.0));
            let ax = resize_bilinear(&x, 7, 3).unwrap();
            let atg = resize_bilinear_adjoint(&g, 4, 5).unwrap();
            let lhs: f64 = ax.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(atg.iter()).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12, "<Ax,g>={lhs} <x,Atg>={rhs}");
        }
    }

    #[test]
    fn rescale_maps_code_bounds_to_the_training_range() {
        let spec = LossSpec::default();
        let codes = array![[[[0.0f64], [255.0]]]];
        let padded = ndarray::concatenate![ndarray::Axis(1), codes, codes];
        let y = rescale_target(&padded, &spec);
        assert_eq!(y[(0, 0, 0, 0)], 10.0);
        assert_eq!(y[(0, 0, 1, 0)], 1000.0);
    }

    #[test]
    fn rescale_round_trips_every_code_within_1e4() {
        let spec = LossSpec::default();
        let codes =
            Array4::from_shape_vec((1, 16, 16, 1), (0..256).map(|c| c as f64).collect()).unwrap();
        let back = rescale_inverse(&rescale_target(&codes, &spec), &spec);
        let worst = codes
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-4, "worst code error {worst}");
    }
}

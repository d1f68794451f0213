//! Composite training loss: pointwise L1 on rescaled depth, L1 on
//! forward-difference image gradients, and a structural-similarity term,
//! each with an analytic gradient with respect to the prediction.

use ndarray::{Array4, NdFloat};
use serde::{Deserialize, Serialize};

use super::tensor::sc;
use super::NetError;

/// Loss weights, SSIM window, and the code-to-target rescale range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSpec {
    /// (depth, gradient, ssim) term weights.
    pub weights: [f64; 3],
    /// SSIM window side length; odd, at least 3.
    pub window: usize,
    /// Depth codes 0..255 map affinely onto this (lo, hi) range before the
    /// loss sees them.
    pub rescale: (f64, f64),
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            weights: [0.1, 1.0, 1.0],
            window: 7,
            rescale: (10.0, 1000.0),
        }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |reason: &str| NetError::LossSpec {
            reason: reason.into(),
        };
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(bad("weights must be finite and non-negative"));
        }
        if self.weights.iter().all(|&w| w == 0.0) {
            return Err(bad("at least one weight must be positive"));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(bad("SSIM window must be odd and at least 3"));
        }
        let (lo, hi) = self.rescale;
        if !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(bad("rescale range must be finite with hi > lo"));
        }
        Ok(())
    }

    /// SSIM stabilizers from the dynamic range L = hi - lo:
    /// C1 = (0.01 L)^2, C2 = (0.03 L)^2.
    fn ssim_constants(&self) -> (f64, f64) {
        let l = self.rescale.1 - self.rescale.0;
        ((0.01 * l).powi(2), (0.03 * l).powi(2))
    }
}

/// Unweighted term values and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    /// mean |pred - target|
    pub depth: f64,
    /// mean |du pred - du target| + mean |dv pred - dv target|
    pub grad: f64,
    /// (1 - mean SSIM) / 2
    pub ssim: f64,
    /// weights . (depth, grad, ssim)
    pub total: f64,
}

fn sgn<T: NdFloat>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Normalized 2D Gaussian window (sigma 1.5), row-major.
fn gaussian_window(k: usize) -> Vec<f64> {
    let c = (k as f64 - 1.0) / 2.0;
    let sigma = 1.5;
    let mut w: Vec<f64> = (0..k * k)
        .map(|i| {
            let y = (i / k) as f64 - c;
            let x = (i % k) as f64 - c;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Mean SSIM over every channel plane in a batch, Gaussian-weighted
/// windows at all fully-interior positions. `grad` optionally accumulates
/// `factor * dSSIM/dpred`.
fn ssim_pass<T: NdFloat>(
    pred: &Array4<T>,
    target: &Array4<T>,
    spec: &LossSpec,
    mut grad: Option<(&mut Array4<T>, T)>,
) -> Result<f64, NetError> {
    let (n, h, w, c) = pred.dim();
    let k = spec.window;
    if h < k || w < k {
        return Err(NetError::LossSpec {
            reason: format!("{k}x{k} SSIM window does not fit a {h}x{w} map"),
        });
    }
    let (c1, c2) = spec.ssim_constants();
    let c1 = sc::<T>(c1);
    let c2 = sc::<T>(c2);
    let win: Vec<T> = gaussian_window(k).into_iter().map(sc::<T>).collect();
    let ps = pred.as_slice().expect("tensors are contiguous");
    let ts = target.as_slice().expect("tensors are contiguous");
    let grad_slice = grad
        .as_mut()
        .map(|(g, f)| (g.as_slice_mut().expect("tensors are contiguous"), *f));
    let mut grad_slice = grad_slice;
    let mut sum = 0.0f64;
    let mut windows = 0usize;
    let at = |b: usize, y: usize, x: usize, ch: usize| ((b * h + y) * w + x) * c + ch;
    let two = sc::<T>(2.0);
    for b in 0..n {
        for ch in 0..c {
            for wy in 0..=(h - k) {
                for wx in 0..=(w - k) {
                    let mut mu_x = T::zero();
                    let mut mu_y = T::zero();
                    for dy in 0..k {
                        for dx in 0..k {
                            let wt = win[dy * k + dx];
                            let i = at(b, wy + dy, wx + dx, ch);
                            mu_x = mu_x + wt * ps[i];
                            mu_y = mu_y + wt * ts[i];
                        }
                    }
                    let mut var_x = T::zero();
                    let mut var_y = T::zero();
                    let mut cov = T::zero();
                    for dy in 0..k {
                        for dx in 0..k {
                            let wt = win[dy * k + dx];
                            let i = at(b, wy + dy, wx + dx, ch);
                            let ex = ps[i] - mu_x;
                            let ey = ts[i] - mu_y;
                            var_x = var_x + wt * ex * ex;
                            var_y = var_y + wt * ey * ey;
                            cov = cov + wt * ex * ey;
                        }
                    }
                    let a1 = two * mu_x * mu_y + c1;
                    let a2 = two * cov + c2;
                    let b1 = mu_x * mu_x + mu_y * mu_y + c1;
                    let b2 = var_x + var_y + c2;
                    let denom = b1 * b2;
                    let s = a1 * a2 / denom;
                    sum += s.to_f64().expect("SSIM fits in f64");
                    windows += 1;
                    if let Some((g, factor)) = grad_slice.as_mut() {
                        let factor = *factor;
                        for dy in 0..k {
                            for dx in 0..k {
                                let wt = win[dy * k + dx];
                                let i = at(b, wy + dy, wx + dx, ch);
                                let ex = ps[i] - mu_x;
                                let ey = ts[i] - mu_y;
                                let ds = wt
                                    * (two * mu_y * a2 + two * ey * a1
                                        - s * (two * mu_x * b2 + two * ex * b1))
                                    / denom;
                                g[i] = g[i] + factor * ds;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(sum / windows as f64)
}

/// Mean SSIM between two tensors (forward only).
pub fn ssim_mean<T: NdFloat>(
    x: &Array4<T>,
    y: &Array4<T>,
    spec: &LossSpec,
) -> Result<f64, NetError> {
    if x.dim() != y.dim() {
        return Err(NetError::ShapeMismatch {
            expected: format!("{:?}", x.dim()),
            got: format!("{:?}", y.dim()),
        });
    }
    ssim_pass(x, y, spec, None)
}

/// Evaluates the composite loss and its gradient with respect to `pred`.
///
/// The gradient term uses forward differences along each axis, averaged
/// separately over the positions where each difference exists. The SSIM
/// term is (1 - mean SSIM) / 2, so it sits in [0, 1].
pub fn composite_loss<T: NdFloat>(
    pred: &Array4<T>,
    target: &Array4<T>,
    spec: &LossSpec,
) -> Result<(LossTerms, Array4<T>), NetError> {
    spec.validate()?;
    if pred.dim() != target.dim() {
        return Err(NetError::ShapeMismatch {
            expected: format!("{:?}", target.dim()),
            got: format!("{:?}", pred.dim()),
        });
    }
    let (n, h, w, c) = pred.dim();
    let [w_depth, w_grad, w_ssim] = spec.weights;
    let mut grad = Array4::<T>::zeros(pred.dim());

    // Pointwise L1.
    let count = sc::<T>((n * h * w * c) as f64);
    let mut depth_sum = T::zero();
    {
        let ps = pred.as_slice().expect("tensors are contiguous");
        let ts = target.as_slice().expect("tensors are contiguous");
        let gs = grad.as_slice_mut().expect("freshly allocated");
        let scale = sc::<T>(w_depth) / count;
        for ((&p, &t), g) in ps.iter().zip(ts).zip(gs.iter_mut()) {
            let d = p - t;
            depth_sum = depth_sum + d.abs();
            *g = *g + scale * sgn(d);
        }
    }
    let depth_term = (depth_sum / count).to_f64().expect("loss fits in f64");

    // Forward-difference gradient L1, horizontal then vertical.
    let mut grad_term = 0.0f64;
    {
        let ps = pred.as_slice().expect("tensors are contiguous");
        let ts = target.as_slice().expect("tensors are contiguous");
        let gs = grad.as_slice_mut().expect("tensors are contiguous");
        let at = |b: usize, y: usize, x: usize, ch: usize| ((b * h + y) * w + x) * c + ch;
        if w > 1 {
            let count_u = sc::<T>((n * h * (w - 1) * c) as f64);
            let scale = sc::<T>(w_grad) / count_u;
            let mut sum = T::zero();
            for b in 0..n {
                for y in 0..h {
                    for x in 0..w - 1 {
                        for ch in 0..c {
                            let i = at(b, y, x, ch);
                            let j = at(b, y, x + 1, ch);
                            let d = (ps[j] - ps[i]) - (ts[j] - ts[i]);
                            sum = sum + d.abs();
                            let s = scale * sgn(d);
                            gs[j] = gs[j] + s;
                            gs[i] = gs[i] - s;
                        }
                    }
                }
            }
            grad_term += (sum / count_u).to_f64().expect("loss fits in f64");
        }
        if h > 1 {
            let count_v = sc::<T>((n * (h - 1) * w * c) as f64);
            let scale = sc::<T>(w_grad) / count_v;
            let mut sum = T::zero();
            for b in 0..n {
                for y in 0..h - 1 {
                    for x in 0..w {
                        for ch in 0..c {
                            let i = at(b, y, x, ch);
                            let j = at(b, y + 1, x, ch);
                            let d = (ps[j] - ps[i]) - (ts[j] - ts[i]);
                            sum = sum + d.abs();
                            let s = scale * sgn(d);
                            gs[j] = gs[j] + s;
                            gs[i] = gs[i] - s;
                        }
                    }
                }
            }
            grad_term += (sum / count_v).to_f64().expect("loss fits in f64");
        }
    }

    // Structural similarity. The mean is computed even at zero weight so
    // the term breakdown stays meaningful; the gradient scales with the
    // weight either way.
    let windows = if h >= spec.window && w >= spec.window {
        (h - spec.window + 1) * (w - spec.window + 1) * n * c
    } else {
        0
    };
    if windows == 0 {
        return Err(NetError::LossSpec {
            reason: format!(
                "{0}x{0} SSIM window does not fit a {h}x{w} map",
                spec.window
            ),
        });
    }
    let factor = -sc::<T>(w_ssim) / (sc::<T>(2.0) * sc::<T>(windows as f64));
    let mean_ssim = ssim_pass(pred, target, spec, Some((&mut grad, factor)))?;
    let ssim_term = (1.0 - mean_ssim) / 2.0;

    let total = w_depth * depth_term + w_grad * grad_term + w_ssim * ssim_term;
    Ok((
        LossTerms {
            depth: depth_term,
            grad: grad_term,
            ssim: ssim_term,
            total,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_map(shape: (usize, usize, usize, usize), lo: f64, hi: f64, seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn(shape, |_| rng.gen_range(lo..hi))
    }

    #[test]
    fn equal_prediction_and_target_have_zero_loss() {
        let t = rand_map((2, 8, 8, 1), 10.0, 1000.0, 1);
        let spec = LossSpec::default();
        let (terms, grad) = composite_loss(&t, &t, &spec).unwrap();
        assert!(terms.depth == 0.0 && terms.grad == 0.0);
        assert!(terms.ssim.abs() < 1e-12, "ssim term {}", terms.ssim);
        assert!(terms.total.abs() < 1e-12);
        assert!(grad.iter().all(|&g| g.abs() < 1e-12));
        assert!((ssim_mean(&t, &t, &spec).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_offset_shifts_only_depth_and_luminance() {
        let spec = LossSpec::default();
        let t = rand_map((1, 8, 8, 1), 100.0, 900.0, 2);
        let offset = 5.0;
        let p = &t + offset;
        let (terms, _) = composite_loss(&p, &t, &spec).unwrap();
        assert!((terms.depth - offset).abs() < 1e-9, "depth {}", terms.depth);
        assert!(terms.grad.abs() < 1e-12, "grad {}", terms.grad);

        // With variance and covariance untouched, each window's SSIM
        // reduces to its luminance factor (2 mx my + C1)/(mx^2 + my^2 + C1).
        let (c1, _) = spec.ssim_constants();
        let win = gaussian_window(spec.window);
        let k = spec.window;
        let mut expected_sum = 0.0;
        let mut count = 0usize;
        for wy in 0..=(8 - k) {
            for wx in 0..=(8 - k) {
                let mut mu = 0.0;
                for dy in 0..k {
                    for dx in 0..k {
                        mu += win[dy * k + dx] * t[(0, wy + dy, wx + dx, 0)];
                    }
                }
                let mx = mu + offset;
                expected_sum += (2.0 * mx * mu + c1) / (mx * mx + mu * mu + c1);
                count += 1;
            }
        }
        let expected_term = (1.0 - expected_sum / count as f64) / 2.0;
        assert!(
            (terms.ssim - expected_term).abs() < 1e-9,
            "ssim {} expected {expected_term}",
            terms.ssim
        );
    }

    /// Straight-line scalar recomputation of all three terms.
    fn reference_total(pred: &Array4<f64>, target: &Array4<f64>, spec: &LossSpec) -> f64 {
        let (_, h, w, _) = pred.dim();
        let mut depth = 0.0;
        for (p, t) in pred.iter().zip(target.iter()) {
            depth += (p - t).abs();
        }
        depth /= pred.len() as f64;

        let mut du = 0.0;
        for y in 0..h {
            for x in 0..w - 1 {
                let dp = pred[(0, y, x + 1, 0)] - pred[(0, y, x, 0)];
                let dt = target[(0, y, x + 1, 0)] - target[(0, y, x, 0)];
                du += (dp - dt).abs();
            }
        }
        du /= (h * (w - 1)) as f64;
        let mut dv = 0.0;
        for y in 0..h - 1 {
            for x in 0..w {
                let dp = pred[(0, y + 1, x, 0)] - pred[(0, y, x, 0)];
                let dt = target[(0, y + 1, x, 0)] - target[(0, y, x, 0)];
                dv += (dp - dt).abs();
            }
        }
        dv /= ((h - 1) * w) as f64;

        let win = gaussian_window(spec.window);
        let k = spec.window;
        let (c1, c2) = spec.ssim_constants();
        let mut ssim_sum = 0.0;
        let mut windows = 0;
        for wy in 0..=(h - k) {
            for wx in 0..=(w - k) {
                let (mut mx, mut my) = (0.0, 0.0);
                for dy in 0..k {
                    for dx in 0..k {
                        let wt = win[dy * k + dx];
                        mx += wt * pred[(0, wy + dy, wx + dx, 0)];
                        my += wt * target[(0, wy + dy, wx + dx, 0)];
                    }
                }
                let (mut vx, mut vy, mut cv) = (0.0, 0.0, 0.0);
                for dy in 0..k {
                    for dx in 0..k {
                        let wt = win[dy * k + dx];
                        let ex = pred[(0, wy + dy, wx + dx, 0)] - mx;
                        let ey = target[(0, wy + dy, wx + dx, 0)] - my;
                        vx += wt * ex * ex;
                        vy += wt * ey * ey;
                        cv += wt * ex * ey;
                    }
                }
                ssim_sum += (2.0 * mx * my + c1) * (2.0 * cv + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                windows += 1;
            }
        }
        let ssim_term = (1.0 - ssim_sum / windows as f64) / 2.0;

        spec.weights[0] * depth + spec.weights[1] * (du + dv) + spec.weights[2] * ssim_term
    }

    #[test]
    fn total_matches_an_independent_scalar_recomputation() {
        let spec = LossSpec::default();
        let p = rand_map((1, 8, 8, 1), 10.0, 1000.0, 3);
        let t = rand_map((1, 8, 8, 1), 10.0, 1000.0, 4);
        let (terms, _) = composite_loss(&p, &t, &spec).unwrap();
        let reference = reference_total(&p, &t, &spec);
        let rel = (terms.total - reference).abs() / reference.abs();
        assert!(rel < 1e-6, "total {} reference {reference}", terms.total);
        // Decomposition: total is exactly the weighted term sum.
        let recombined = spec.weights[0] * terms.depth
            + spec.weights[1] * terms.grad
            + spec.weights[2] * terms.ssim;
        assert!((terms.total - recombined).abs() <= 1e-12 * recombined.abs().max(1.0));
    }

    #[test]
    fn analytic_gradients_match_finite_differences_per_term() {
        let base = LossSpec::default();
        let p = rand_map((1, 8, 8, 1), 200.0, 800.0, 5);
        let t = rand_map((1, 8, 8, 1), 200.0, 800.0, 6);
        let h = 1e-5;
        for weights in [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.1, 1.0, 1.0],
        ] {
            let spec = LossSpec { weights, ..base.clone() };
            let (_, analytic) = composite_loss(&p, &t, &spec).unwrap();
            for idx in [(0, 0, 0, 0), (0, 3, 4, 0), (0, 7, 7, 0), (0, 5, 1, 0)] {
                let mut hi = p.clone();
                hi[idx] += h;
                let mut lo = p.clone();
                lo[idx] -= h;
                let fhi = composite_loss(&hi, &t, &spec).unwrap().0.total;
                let flo = composite_loss(&lo, &t, &spec).unwrap().0.total;
                let numeric = (fhi - flo) / (2.0 * h);
                let a = analytic[idx];
                // Relative tolerance 1e-4 with an absolute floor: central
                // differences of an O(100) loss carry ~1e-9 of rounding
                // noise, which dominates when the true gradient is zero.
                assert!(
                    (a - numeric).abs() <= 1e-7 + 1e-4 * a.abs().max(numeric.abs()),
                    "weights {weights:?} idx {idx:?}: analytic {a}, numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let specs = [
            LossSpec { weights: [0.0, 0.0, 0.0], ..LossSpec::default() },
            LossSpec { weights: [-0.1, 1.0, 1.0], ..LossSpec::default() },
            LossSpec { window: 4, ..LossSpec::default() },
            LossSpec { window: 1, ..LossSpec::default() },
            LossSpec { rescale: (10.0, 10.0), ..LossSpec::default() },
        ];
        for spec in specs {
            assert!(spec.validate().is_err(), "{spec:?} should fail");
        }
    }

    #[test]
    fn window_must_fit_inside_the_map() {
        let spec = LossSpec::default();
        let small = rand_map((1, 4, 4, 1), 0.0, 1.0, 7);
        match composite_loss(&small, &small, &spec) {
            Err(NetError::LossSpec { reason }) => {
                assert!(reason.contains("window"), "{reason}");
            }
            other => panic!("expected LossSpec error, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let spec = LossSpec::default();
        let a = rand_map((1, 8, 8, 1), 0.0, 1.0, 8);
        let b = rand_map((1, 8, 7, 1), 0.0, 1.0, 9);
        assert!(matches!(
            composite_loss(&a, &b, &spec),
            Err(NetError::ShapeMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn ssim_is_bounded_symmetric_and_one_on_self(seed in 0u64..40) {
            let spec = LossSpec::default();
            let x = rand_map((1, 7, 9, 1), 10.0, 1000.0, seed);
            let y = rand_map((1, 7, 9, 1), 10.0, 1000.0, seed.wrapping_add(1000));
            let sxy = ssim_mean(&x, &y, &spec).unwrap();
            let syx = ssim_mean(&y, &x, &spec).unwrap();
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&sxy), "ssim {sxy}");
            prop_assert!((sxy - syx).abs() < 1e-9, "asymmetry {}", (sxy - syx).abs());
            let sxx = ssim_mean(&x, &x, &spec).unwrap();
            prop_assert!((sxx - 1.0).abs() < 1e-9, "self ssim {sxx}");
        }
    }
}

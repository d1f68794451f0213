//! GP regression for the fisheye radial correspondence.
//!
//! The calibration samples pair a pixel radius r with the projected surface
//! radius y = R0 sin(theta) measured at that pixel. A GP with an RBF kernel
//! over a least-squares linear trend interpolates the samples; the trend
//! keeps extrapolation toward r = 0 anchored and makes exactly linear
//! fixtures exact.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::model::SensorError;

/// Length-scale fractions of the input range tried by the grid search.
pub const LENGTH_FRACTION_GRID: [f64; 5] = [0.05, 0.1, 0.15, 0.25, 0.5];

const DEFAULT_LENGTH_FRACTION: f64 = 0.15;
const NOISE_FRACTION: f64 = 1e-3;

/// RBF kernel hyperparameters: k(a, b) = signal_std^2 exp(-(a-b)^2 / (2 length_scale^2)),
/// with noise_std^2 added on the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpKernel {
    pub signal_std: f64,
    pub length_scale: f64,
    pub noise_std: f64,
}

impl GpKernel {
    fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.signal_std * self.signal_std
            * (-d * d / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    fn validate(&self) -> Result<(), SensorError> {
        let ok = self.signal_std.is_finite()
            && self.length_scale.is_finite()
            && self.noise_std.is_finite()
            && self.signal_std > 0.0
            && self.length_scale > 0.0
            && self.noise_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SensorError::BadKernel)
        }
    }
}

/// GP posterior over the radial correspondence, cached as the Cholesky
/// factor of the regularized kernel matrix plus the weight vector alpha.
#[derive(Debug, Clone)]
pub struct GpCorrespondence {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    kernel: GpKernel,
    trend_intercept: f64,
    trend_slope: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_marginal: f64,
}

fn default_kernel(samples: &[(f64, f64)], length_fraction: f64) -> GpKernel {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let var = samples.iter().map(|&(_, y)| (y - mean) * (y - mean)).sum::<f64>() / n;
    let peak = samples.iter().map(|&(_, y)| y.abs()).fold(1.0, f64::max);
    let signal_std = var.sqrt().max(1e-6 * peak);
    let (min_r, max_r) = input_range(samples);
    let length_scale = (length_fraction * (max_r - min_r)).max(1.0);
    GpKernel {
        signal_std,
        length_scale,
        noise_std: NOISE_FRACTION * signal_std,
    }
}

fn input_range(samples: &[(f64, f64)]) -> (f64, f64) {
    let min = samples.iter().map(|&(r, _)| r).fold(f64::INFINITY, f64::min);
    let max = samples.iter().map(|&(r, _)| r).fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Ordinary least squares line through the samples; degenerates to a
/// constant when all inputs coincide.
fn linear_trend(samples: &[(f64, f64)]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean_r = samples.iter().map(|&(r, _)| r).sum::<f64>() / n;
    let mean_y = samples.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let denom = samples.iter().map(|&(r, _)| (r - mean_r) * (r - mean_r)).sum::<f64>();
    if denom < 1e-12 {
        return (mean_y, 0.0);
    }
    let num = samples
        .iter()
        .map(|&(r, y)| (r - mean_r) * (y - mean_y))
        .sum::<f64>();
    let slope = num / denom;
    (mean_y - slope * mean_r, slope)
}

/// Fits the GP; `hyper = None` selects default hyperparameters from the
/// sample spread (see `default_kernel`).
pub fn fit_gp(
    samples: &[(f64, f64)],
    hyper: Option<GpKernel>,
) -> Result<GpCorrespondence, SensorError> {
    if samples.len() < 2 {
        return Err(SensorError::TooFewSamples {
            got: samples.len(),
            min: 2,
        });
    }
    for &(r, y) in samples {
        if !r.is_finite() || !y.is_finite() {
            return Err(SensorError::NonFiniteSample { r, y });
        }
    }
    let kernel = match hyper {
        Some(k) => {
            k.validate()?;
            k
        }
        None => default_kernel(samples, DEFAULT_LENGTH_FRACTION),
    };

    // Repeated radii must agree: beyond 3 sigma_n they cannot both be
    // interpolated and the fit is rejected rather than silently averaged.
    let tolerance = 3.0 * kernel.noise_std;
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for pair in sorted.windows(2) {
        if pair[0].0 == pair[1].0 && (pair[0].1 - pair[1].1).abs() > tolerance {
            return Err(SensorError::InconsistentSamples {
                r: pair[0].0,
                a: pair[0].1,
                b: pair[1].1,
                tolerance,
            });
        }
    }

    let (trend_intercept, trend_slope) = linear_trend(samples);
    let n = samples.len();
    let residuals = DVector::from_iterator(
        n,
        samples
            .iter()
            .map(|&(r, y)| y - trend_intercept - trend_slope * r),
    );

    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = kernel.eval(samples[i].0, samples[j].0);
        }
        k[(i, i)] += kernel.noise_std * kernel.noise_std;
    }
    let chol = Cholesky::new(k).ok_or(SensorError::NotPositiveDefinite {
        noise_std: kernel.noise_std,
    })?;
    let alpha = chol.solve(&residuals);

    let log_det_half: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    let log_marginal = -0.5 * residuals.dot(&alpha)
        - log_det_half
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    Ok(GpCorrespondence {
        inputs: samples.iter().map(|&(r, _)| r).collect(),
        targets: samples.iter().map(|&(_, y)| y).collect(),
        kernel,
        trend_intercept,
        trend_slope,
        chol,
        alpha,
        log_marginal,
    })
}

/// Fits one GP per grid length scale and keeps the one with the highest
/// log-marginal likelihood.
pub fn fit_gp_grid_search(samples: &[(f64, f64)]) -> Result<GpCorrespondence, SensorError> {
    let mut best: Option<GpCorrespondence> = None;
    let mut last_err = None;
    for fraction in LENGTH_FRACTION_GRID {
        if samples.len() < 2 {
            break;
        }
        let kernel = default_kernel(samples, fraction);
        match fit_gp(samples, Some(kernel)) {
            Ok(fit) => {
                let better = best
                    .as_ref()
                    .map_or(true, |b| fit.log_marginal > b.log_marginal);
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(fit) => Ok(fit),
        None => Err(last_err.unwrap_or(SensorError::TooFewSamples {
            got: samples.len(),
            min: 2,
        })),
    }
}

impl GpCorrespondence {
    /// Posterior mean at a pixel radius.
    pub fn predict(&self, r: f64) -> f64 {
        let mut acc = self.trend_intercept + self.trend_slope * r;
        for (x, a) in self.inputs.iter().zip(self.alpha.iter()) {
            acc += a * self.kernel.eval(r, *x);
        }
        acc
    }

    pub fn kernel(&self) -> &GpKernel {
        &self.kernel
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    /// Outermost calibrated radius; pixels beyond it are invalid.
    pub fn max_radius(&self) -> f64 {
        self.inputs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_radius(&self) -> f64 {
        self.inputs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn training_inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn training_targets(&self) -> &[f64] {
        &self.targets
    }

    /// Cached Cholesky factor of the regularized kernel matrix.
    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Inverts the posterior mean by bisection over [0, max_radius];
    /// requires the calibrated map to be increasing over that span, which
    /// saw-tooth fixtures satisfy. Returns `None` when `y` falls outside
    /// the attainable range.
    pub fn invert_monotone(&self, y: f64) -> Option<f64> {
        let mut lo = 0.0;
        let mut hi = self.max_radius();
        let f_lo = self.predict(lo);
        let f_hi = self.predict(hi);
        if !(f_lo < f_hi) || y < f_lo || y > f_hi {
            return None;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.predict(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

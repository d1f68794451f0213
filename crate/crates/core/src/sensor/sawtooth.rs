//! Saw-tooth calibration target: rendering a synthetic target image and
//! recovering the tooth-edge radii from it.
//!
//! The target alternates dark and bright rings whose boundaries sit at
//! known polar angles on the sensor surface, so each detected edge radius
//! pairs a pixel radius with a surface angle. Detection is a 1-D radial
//! specialization of Canny: gradient along averaged radial scanlines,
//! non-maximum suppression per above-threshold run, hysteresis at 0.2/0.1
//! of the peak gradient, and parabolic sub-pixel refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::sim::SensorImage;

use super::model::{SensorError, SensorModel};

const MIN_EDGES: usize = 4;
const SAMPLE_STEP: f64 = 0.25;
const FAN_HALF_ANGLE_DEG: f64 = 6.0;
const FAN_STEPS: usize = 13;
const HIGH_FRACTION: f64 = 0.2;
const LOW_FRACTION: f64 = 0.1;
const DARK: f32 = 0.25;
const BRIGHT: f32 = 0.75;

/// Tooth-edge radii of an equidistant fisheye: the projected radius grows
/// linearly with the tooth angle, so `count` teeth span `max_radius` in
/// equal steps.
pub fn equidistant_edge_radii(max_radius: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| max_radius * k as f64 / count as f64)
        .collect()
}

/// Renders the target: rings alternate dark and bright at the given edge
/// radii. `wobble = (sigma, seed)` perturbs each edge radius with a smooth
/// angular ripple of Gaussian amplitude, emulating print and alignment
/// jitter of about `sigma` pixels.
pub fn render_sawtooth_image(
    model: &SensorModel,
    edge_radii: &[f64],
    wobble: Option<(f64, u64)>,
) -> SensorImage {
    let ripple: Vec<(f64, f64)> = match wobble {
        Some((sigma, seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amp = Normal::new(0.0, sigma).expect("sigma >= 0");
            edge_radii
                .iter()
                .map(|_| (amp.sample(&mut rng), rng.gen_range(0.0..std::f64::consts::TAU)))
                .collect()
        }
        None => vec![(0.0, 0.0); edge_radii.len()],
    };
    SensorImage::from_fn(model.image_width, model.image_height, |x, y| {
        let du = x as f64 - model.center_u;
        let dv = y as f64 - model.center_v;
        let r = du.hypot(dv);
        let psi = dv.atan2(du);
        let crossings = edge_radii
            .iter()
            .zip(&ripple)
            .filter(|(&e, &(a, phase))| r >= e + a * (24.0 * psi + phase).sin())
            .count();
        let level = if crossings % 2 == 0 { DARK } else { BRIGHT };
        [level; 3]
    })
}

/// Recovers tooth edges as (pixel radius, surface angle in radians) pairs,
/// ordered by radius. Tooth k sits at angle k * tooth_interval_deg.
pub fn detect_sawtooth_edges(
    image: &SensorImage,
    model: &SensorModel,
    tooth_interval_deg: f64,
) -> Result<Vec<(f64, f64)>, SensorError> {
    let r_max = [
        model.center_u,
        model.center_v,
        (image.width() - 1) as f64 - model.center_u,
        (image.height() - 1) as f64 - model.center_v,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
        - 1.0;

    // Radial luminance profile averaged over a narrow fan of scanlines.
    let fan: Vec<f64> = (0..FAN_STEPS)
        .map(|i| {
            let t = i as f64 / (FAN_STEPS - 1) as f64;
            (2.0 * t - 1.0) * FAN_HALF_ANGLE_DEG.to_radians()
        })
        .collect();
    let count = ((r_max - 1.0) / SAMPLE_STEP).floor() as usize + 1;
    let radii: Vec<f64> = (0..count).map(|i| 1.0 + i as f64 * SAMPLE_STEP).collect();
    let profile: Vec<f64> = radii
        .iter()
        .map(|&r| {
            fan.iter()
                .map(|&psi| {
                    image.sample_luminance(
                        model.center_u + r * psi.cos(),
                        model.center_v + r * psi.sin(),
                    )
                })
                .sum::<f64>()
                / fan.len() as f64
        })
        .collect();

    let gradient: Vec<f64> = (0..profile.len())
        .map(|i| {
            if i == 0 || i == profile.len() - 1 {
                0.0
            } else {
                (profile[i + 1] - profile[i - 1]).abs() / (2.0 * SAMPLE_STEP)
            }
        })
        .collect();
    let peak = gradient.iter().copied().fold(0.0, f64::max);
    if peak < 1e-9 {
        return Err(SensorError::TooFewEdges {
            found: 0,
            min: MIN_EDGES,
        });
    }
    let high = HIGH_FRACTION * peak;
    let low = LOW_FRACTION * peak;

    // One edge per run of above-low gradient, kept only when the run
    // reaches the high threshold.
    let mut edges = Vec::new();
    let mut run_start = None;
    for i in 0..=gradient.len() {
        let above = i < gradient.len() && gradient[i] >= low;
        match (run_start, above) {
            (None, true) => run_start = Some(i),
            (Some(start), false) => {
                let best = (start..i)
                    .max_by(|&a, &b| gradient[a].partial_cmp(&gradient[b]).unwrap())
                    .unwrap();
                if gradient[best] >= high {
                    edges.push(refine_peak(&radii, &gradient, best));
                }
                run_start = None;
            }
            _ => {}
        }
    }

    if edges.len() < MIN_EDGES {
        return Err(SensorError::TooFewEdges {
            found: edges.len(),
            min: MIN_EDGES,
        });
    }
    for i in 1..edges.len() {
        if edges[i] <= edges[i - 1] {
            return Err(SensorError::NonMonotoneEdges { index: i });
        }
    }

    let interval = tooth_interval_deg.to_radians();
    Ok(edges
        .into_iter()
        .enumerate()
        .map(|(k, r)| (r, (k + 1) as f64 * interval))
        .collect())
}

/// Parabolic interpolation of the gradient peak at sample `i`.
fn refine_peak(radii: &[f64], gradient: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= gradient.len() {
        return radii[i];
    }
    let (a, b, c) = (gradient[i - 1], gradient[i], gradient[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-12 {
        return radii[i];
    }
    let delta = (0.5 * (a - c) / denom).clamp(-1.0, 1.0);
    radii[i] + delta * SAMPLE_STEP
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide_model() -> SensorModel {
        SensorModel::new(25.0, 35.0, 9.4, 340, 340, 169.5, 169.5, 340).unwrap()
    }

    #[test]
    fn ideal_edges_are_recovered() {
        let model = wide_model();
        let truth = [40.0, 80.0, 118.0, 152.0];
        let image = render_sawtooth_image(&model, &truth, None);
        let edges = detect_sawtooth_edges(&image, &model, 5.0).unwrap();
        assert_eq!(edges.len(), 4);
        for (k, ((r, theta), expected)) in edges.iter().zip(truth).enumerate() {
            assert!((r - expected).abs() <= 0.6, "edge {k}: r = {r}");
            let want = (k + 1) as f64 * 5.0f64.to_radians();
            assert!((theta - want).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_image_yields_calibration_error() {
        let model = wide_model();
        let image = SensorImage::from_fn(340, 340, |_, _| [0.5; 3]);
        assert!(matches!(
            detect_sawtooth_edges(&image, &model, 5.0),
            Err(SensorError::TooFewEdges { found: 0, .. })
        ));
    }

    #[test]
    fn three_edges_are_too_few() {
        let model = wide_model();
        let image = render_sawtooth_image(&model, &[50.0, 100.0, 150.0], None);
        assert!(matches!(
            detect_sawtooth_edges(&image, &model, 5.0),
            Err(SensorError::TooFewEdges { found: 3, .. })
        ));
    }

    #[test]
    fn jittered_edges_stay_within_one_pixel() {
        let model = wide_model();
        let truth = [40.0, 80.0, 118.0, 152.0];
        let image = render_sawtooth_image(&model, &truth, Some((1.0, 9)));
        let edges = detect_sawtooth_edges(&image, &model, 5.0).unwrap();
        assert_eq!(edges.len(), 4);
        for ((r, _), expected) in edges.iter().zip(truth) {
            assert!((r - expected).abs() <= 1.0, "r = {r}, expected {expected}");
        }
    }

    #[test]
    fn desk_scale_equidistant_teeth_are_recovered() {
        let model = SensorModel::desk_scale();
        let truth = equidistant_edge_radii(30.0, 8);
        let image = render_sawtooth_image(&model, &truth, None);
        let edges = detect_sawtooth_edges(&image, &model, 10.0).unwrap();
        assert_eq!(edges.len(), 8);
        for ((r, _), expected) in edges.iter().zip(&truth) {
            assert!((r - expected).abs() <= 0.75, "r = {r}, expected {expected}");
        }
    }
}

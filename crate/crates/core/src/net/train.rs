//! Seeded training over a generated dataset directory, per-epoch metrics,
//! and single-image prediction.

use std::path::Path;
use std::time::Instant;

use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sensor::{DepthMap, SensorModel};
use crate::sim::{load_manifest, load_record, Manifest, SensorImage, Split};

use super::checkpoint::save_checkpoint;
use super::loss::{composite_loss, LossSpec};
use super::model::ReconNet;
use super::optim::Adam;
use super::tensor::{rescale_inverse, rescale_target, resize_bilinear};
use super::NetError;

/// Decorrelates the epoch-shuffle stream from the weight-init stream when
/// both are derived from the same user-facing seed.
const SHUFFLE_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// Epochs, batching, optimizer constants, seed, and the expected dataset
/// resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Input images are square at this resolution.
    pub input_size: u32,
    /// Predicted depth resolution; must be half the input.
    pub output_size: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 4,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            input_size: 64,
            output_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |reason: &str| NetError::TrainConfig {
            reason: reason.into(),
        };
        if self.epochs < 1 {
            return Err(bad("epochs must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(bad("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(bad("learning rate must be positive and finite"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(bad(&format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(bad("epsilon must be positive"));
        }
        if self.output_size * 2 != self.input_size {
            return Err(bad("output resolution must be half the input"));
        }
        if self.input_size % 8 != 0 || self.input_size == 0 {
            return Err(bad("input resolution must be a positive multiple of 8"));
        }
        Ok(())
    }
}

/// One CSV row of training progress. Term values are unweighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub depth_term: f64,
    pub grad_term: f64,
    pub ssim_term: f64,
    pub test_l1_mm: f64,
}

/// Renders metrics as CSV with a header row.
pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,depth_term,grad_term,ssim_term,test_l1_mm\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.epoch, m.train_loss, m.depth_term, m.grad_term, m.ssim_term, m.test_l1_mm
        ));
    }
    out
}

/// A trained network with its per-epoch history.
#[derive(Debug)]
pub struct TrainOutcome {
    pub net: ReconNet<f32>,
    pub metrics: Vec<EpochMetrics>,
}

/// Converts an RGB sensor image into a (1, H, W, 3) tensor.
pub(crate) fn image_to_tensor(image: &SensorImage) -> Array4<f32> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    Array4::from_shape_vec((1, h, w, 3), image.data().to_vec())
        .expect("sensor image buffer matches its dims")
}

fn depth_to_code_tensor(depth: &DepthMap) -> Array4<f32> {
    let (w, h) = (depth.width() as usize, depth.height() as usize);
    Array4::from_shape_vec(
        (1, h, w, 1),
        depth.codes().iter().map(|&c| c as f32).collect(),
    )
    .expect("depth buffer matches its dims")
}

/// Loads one split as (input, half-resolution code target) tensor pairs.
/// Targets are raw fractional codes; rescale them before feeding the loss.
pub fn load_split_tensors(
    dir: &Path,
    manifest: &Manifest,
    split: Split,
) -> Result<(Vec<Array4<f32>>, Vec<Array4<f32>>), NetError> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for entry in manifest.split_records(split) {
        let (image, depth) = load_record(dir, manifest, entry)?;
        let input = image_to_tensor(&image);
        let (_, h, w, _) = input.dim();
        let codes = depth_to_code_tensor(&depth);
        targets.push(resize_bilinear(&codes, h / 2, w / 2)?);
        inputs.push(input);
    }
    Ok((inputs, targets))
}

fn stack(items: &[Array4<f32>], indices: &[usize]) -> Array4<f32> {
    let (_, h, w, c) = items[indices[0]].dim();
    let mut out = Array4::zeros((indices.len(), h, w, c));
    for (slot, &i) in indices.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), slot)
            .assign(&items[i].index_axis(ndarray::Axis(0), 0));
    }
    out
}

/// Mean absolute depth error in millimeters between predicted and target
/// codes at the network's output resolution.
fn mean_l1_mm(
    net: &ReconNet<f32>,
    inputs: &[Array4<f32>],
    code_targets: &[Array4<f32>],
    spec: &LossSpec,
    mm_per_code: f64,
) -> Result<f64, NetError> {
    if inputs.is_empty() {
        return Ok(f64::NAN);
    }
    let all: Vec<usize> = (0..inputs.len()).collect();
    let batch = stack(inputs, &all);
    let pred = net.forward(&batch)?;
    let pred_codes = rescale_inverse(&pred, spec);
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (slot, &i) in all.iter().enumerate() {
        let p = pred_codes.index_axis(ndarray::Axis(0), slot);
        let t = code_targets[i].index_axis(ndarray::Axis(0), 0);
        for (pv, tv) in p.iter().zip(t.iter()) {
            sum += (pv - tv).abs() as f64;
            count += 1;
        }
    }
    Ok(sum / count as f64 * mm_per_code)
}

/// Trains `net` on the dataset at `dir`. Shuffling, batching, and updates
/// are fully determined by `cfg.seed`; if `checkpoint` is given, the
/// latest parameters are written there after every epoch.
pub fn train(
    mut net: ReconNet<f32>,
    dir: &Path,
    cfg: &TrainConfig,
    spec: &LossSpec,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome, NetError> {
    cfg.validate()?;
    spec.validate()?;
    let manifest = load_manifest(dir)?;
    let model = &manifest.sensor;
    if model.image_width != cfg.input_size || model.image_height != cfg.input_size {
        return Err(NetError::ShapeMismatch {
            expected: format!("{0}x{0} dataset images", cfg.input_size),
            got: format!("{}x{}", model.image_width, model.image_height),
        });
    }
    let (inputs, code_targets) = load_split_tensors(dir, &manifest, Split::Train)?;
    let (test_inputs, test_codes) = load_split_tensors(dir, &manifest, Split::Test)?;
    if inputs.is_empty() {
        return Err(NetError::TrainConfig {
            reason: "dataset has no training records".into(),
        });
    }
    let targets: Vec<Array4<f32>> = code_targets
        .iter()
        .map(|c| rescale_target(c, spec))
        .collect();

    let mut adam = Adam::new(&net, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0f64; 4];
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = stack(&inputs, chunk);
            let t = stack(&targets, chunk);
            let trace = net.forward_trace(&x)?;
            let (terms, dpred) = composite_loss(trace.output(), &t, spec)?;
            let grads = net.backward(&trace, &dpred);
            if !terms.total.is_finite() {
                return Err(NetError::NonFinite {
                    what: format!("training loss at epoch {epoch}"),
                    param_norm: net.parameter_norm(),
                    grad_norm: grads.norm(),
                });
            }
            adam.step(&mut net, &grads, cfg.learning_rate);
            let n = chunk.len() as f64;
            sums[0] += terms.total * n;
            sums[1] += terms.depth * n;
            sums[2] += terms.grad * n;
            sums[3] += terms.ssim * n;
            seen += chunk.len();
        }
        let inv = 1.0 / seen as f64;
        let row = EpochMetrics {
            epoch,
            train_loss: sums[0] * inv,
            depth_term: sums[1] * inv,
            grad_term: sums[2] * inv,
            ssim_term: sums[3] * inv,
            test_l1_mm: mean_l1_mm(&net, &test_inputs, &test_codes, spec, model.code_scale())?,
        };
        metrics.push(row);
        if let Some(path) = checkpoint {
            let extra = serde_json::json!({
                "train": cfg,
                "loss": spec,
                "epoch": epoch,
                "test_l1_mm": row.test_l1_mm,
            });
            save_checkpoint(path, &net, &extra)?;
        }
    }
    Ok(TrainOutcome { net, metrics })
}

/// A predicted depth map and the wall-clock time the forward pass took.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub depth: DepthMap,
    pub millis: f64,
}

/// Runs the network on one sensor image and returns depth codes upsampled
/// back to the crop resolution.
pub fn predict(
    net: &ReconNet<f32>,
    image: &SensorImage,
    model: &SensorModel,
    spec: &LossSpec,
) -> Result<Prediction, NetError> {
    if image.width() != model.image_width || image.height() != model.image_height {
        return Err(NetError::ShapeMismatch {
            expected: format!("{}x{} image", model.image_width, model.image_height),
            got: format!("{}x{}", image.width(), image.height()),
        });
    }
    let start = Instant::now();
    let x = image_to_tensor(image);
    let (_, h, w, _) = x.dim();
    let y = net.forward(&x)?;
    let codes = rescale_inverse(&y, spec);
    let full = resize_bilinear(&codes, h, w)?;
    let quantized: Vec<u8> = full
        .iter()
        .map(|&c| c.round().clamp(0.0, 255.0) as u8)
        .collect();
    let depth = DepthMap::new(
        image.width(),
        image.height(),
        quantized,
        model.max_depression,
    )?;
    let millis = start.elapsed().as_secs_f64() * 1e3;
    Ok(Prediction { depth, millis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::model::NetConfig;
    use crate::sim::DatasetSpec;

    fn tiny_dataset(dir: &Path) -> Manifest {
        let model = SensorModel::desk_scale();
        let samples: Vec<(f64, f64)> = (0..=40).map(|i| (i as f64, 0.55 * i as f64)).collect();
        let gp = crate::sensor::fit_gp(&samples, None).unwrap();
        let table = crate::sensor::build_correspondence_table(&model, &gp);
        let spec = DatasetSpec {
            train_count: 6,
            test_count: 2,
            seed: 424,
            indicator_count: 2,
            indenter_count: 2,
            ..DatasetSpec::default()
        };
        crate::sim::generate_dataset(&spec, &model, &table, dir).unwrap()
    }

    fn tiny_train_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 2,
            learning_rate: 1e-3,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn tiny_net(seed: u64) -> ReconNet<f32> {
        ReconNet::seeded(NetConfig {
            channels: [4, 6, 8],
            seed,
        })
    }

    #[test]
    fn training_is_deterministic_and_checkpoints_each_epoch() {
        let dir = tempfile::tempdir().unwrap();
        tiny_dataset(dir.path());
        let cfg = tiny_train_config();
        let spec = LossSpec::default();
        let ck_a = dir.path().join("a.dtnn");
        let ck_b = dir.path().join("b.dtnn");
        let a = train(tiny_net(5), dir.path(), &cfg, &spec, Some(&ck_a)).unwrap();
        let b = train(tiny_net(5), dir.path(), &cfg, &spec, Some(&ck_b)).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(
            std::fs::read(&ck_a).unwrap(),
            std::fs::read(&ck_b).unwrap(),
            "checkpoint bytes differ between identical runs"
        );
        assert_eq!(a.metrics.len(), cfg.epochs);
        for row in &a.metrics {
            assert!(row.train_loss.is_finite());
            assert!(row.test_l1_mm.is_finite());
        }
    }

    #[test]
    fn metrics_csv_has_a_header_and_one_row_per_epoch() {
        let rows = [
            EpochMetrics {
                epoch: 1,
                train_loss: 2.5,
                depth_term: 1.0,
                grad_term: 0.5,
                ssim_term: 0.25,
                test_l1_mm: 0.75,
            },
            EpochMetrics {
                epoch: 2,
                train_loss: 1.25,
                depth_term: 0.5,
                grad_term: 0.25,
                ssim_term: 0.125,
                test_l1_mm: 0.5,
            },
        ];
        let csv = metrics_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "epoch,train_loss,depth_term,grad_term,ssim_term,test_l1_mm");
        assert!(lines[1].starts_with("1,2.5,1,0.5,0.25,"));
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let base = TrainConfig::default();
        let bad = [
            TrainConfig { epochs: 0, ..base.clone() },
            TrainConfig { batch_size: 0, ..base.clone() },
            TrainConfig { learning_rate: 0.0, ..base.clone() },
            TrainConfig { beta1: 1.0, ..base.clone() },
            TrainConfig { output_size: 16, ..base.clone() },
            TrainConfig { input_size: 20, output_size: 10, ..base.clone() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?} should be rejected");
        }
        assert!(base.validate().is_ok());
    }

    #[test]
    fn resolution_mismatch_with_the_dataset_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        tiny_dataset(dir.path());
        let cfg = TrainConfig {
            input_size: 32,
            output_size: 16,
            ..tiny_train_config()
        };
        match train(tiny_net(0), dir.path(), &cfg, &LossSpec::default(), None) {
            Err(NetError::ShapeMismatch { .. }) => {}
            other => panic!("expected ShapeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn predict_is_deterministic_and_measures_latency() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_dataset(dir.path());
        let entry = &manifest.records[0];
        let (image, _) = load_record(dir.path(), &manifest, entry).unwrap();
        let net = tiny_net(9);
        let spec = LossSpec::default();
        let model = SensorModel::desk_scale();
        let a = predict(&net, &image, &model, &spec).unwrap();
        let b = predict(&net, &image, &model, &spec).unwrap();
        assert_eq!(a.depth, b.depth);
        assert!(a.millis >= 0.0);
        assert_eq!(a.depth.width(), 64);

        let small = SensorImage::zeros(32, 32);
        assert!(matches!(
            predict(&net, &small, &model, &spec),
            Err(NetError::ShapeMismatch { .. })
        ));
    }
}

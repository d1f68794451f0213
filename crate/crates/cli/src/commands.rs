//! The five pipeline commands. Each validates its inputs, runs the owning
//! core module, and writes artifacts under the home directory while
//! holding the write lock.

use std::path::{Path, PathBuf};

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use densetact_core::cloud::{
    depth_to_pointcloud, error_statistics, evaluate_grasp, sample_mesh_surface, write_ply,
    GraspSensor, ObjectModel, PointCloud, RigidPose,
};
use densetact_core::mesh::shapes::icosphere;
use densetact_core::net::{load_checkpoint, predict, save_checkpoint, metrics_csv, train};
use densetact_core::sensor::{
    calibrate_from_image, equidistant_edge_radii, render_sawtooth_image, CalibrationFile,
};
use densetact_core::sim::{generate_dataset, load_manifest, load_record, Split};
use densetact_core::{CorrespondenceTable, LossSpec, ReconNet, SensorImage, SensorModel};

use crate::config::RunConfig;
use crate::context::{emit, WriteLock};
use crate::error::CliError;

/// Resolved configuration plus the per-invocation flags.
pub struct CommandEnv {
    pub home: PathBuf,
    pub config: RunConfig,
    pub seed: Option<u64>,
}

impl CommandEnv {
    fn calibration_path(&self) -> PathBuf {
        self.home.join("calibration.json")
    }
    fn table_path(&self) -> PathBuf {
        self.home.join("table.dtct")
    }
    fn dataset_dir(&self) -> PathBuf {
        self.home.join("dataset")
    }
    fn checkpoint_path(&self) -> PathBuf {
        self.home.join("model.dtnn")
    }
    fn metrics_path(&self) -> PathBuf {
        self.home.join("metrics.csv")
    }

    /// Loads the stored calibration (sensor model + pixel table), telling
    /// the user to calibrate first when the artifacts are missing.
    fn load_calibration(&self) -> Result<(SensorModel, CorrespondenceTable), CliError> {
        let cal_path = self.calibration_path();
        let table_path = self.table_path();
        for path in [&cal_path, &table_path] {
            if !path.exists() {
                return Err(CliError::usage(
                    "sensor",
                    "load-calibration",
                    format!(
                        "{} not found; run `densetact calibrate` first",
                        path.display()
                    ),
                ));
            }
        }
        let file = CalibrationFile::load(&cal_path)
            .map_err(|e| CliError::runtime("sensor", "load-calibration", e.to_string()))?;
        let table = CorrespondenceTable::read_sidecar(&table_path)
            .map_err(|e| CliError::runtime("sensor", "load-calibration", e.to_string()))?;
        if table.width() != file.sensor.image_width || table.height() != file.sensor.image_height
        {
            return Err(CliError::runtime(
                "sensor",
                "load-calibration",
                format!(
                    "table is {}x{} but the calibration says {}x{}; recalibrate",
                    table.width(),
                    table.height(),
                    file.sensor.image_width,
                    file.sensor.image_height
                ),
            ));
        }
        Ok((file.sensor, table))
    }

    /// Loads the trained network and the loss spec it was trained with
    /// (falling back to the configured loss for hand-built checkpoints).
    fn load_net(&self) -> Result<(ReconNet<f32>, LossSpec), CliError> {
        let path = self.checkpoint_path();
        if !path.exists() {
            return Err(CliError::usage(
                "net",
                "load-checkpoint",
                format!("{} not found; run `densetact train` first", path.display()),
            ));
        }
        let (net, blob) = load_checkpoint(&path)
            .map_err(|e| CliError::runtime("net", "load-checkpoint", e.to_string()))?;
        let loss = blob
            .pointer("/extra/loss")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_else(|| self.config.training.loss.clone());
        Ok((net, loss))
    }
}

fn write_text(path: &Path, text: &str, operation: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| {
        CliError::runtime("cli", operation, format!("cannot write {}: {e}", path.display()))
    })
}

pub fn calibrate(env: &CommandEnv) -> Result<(), CliError> {
    let model = env.config.sensor.model()?;
    let block = &env.config.calibration;
    let image = match &block.image {
        Some(path) => SensorImage::read_png(path).map_err(|e| {
            CliError::usage(
                "sensor",
                "calibrate",
                format!("cannot load {}: {e}", path.display()),
            )
        })?,
        None => render_sawtooth_image(
            &model,
            &equidistant_edge_radii(block.max_edge_radius_px, block.teeth),
            None,
        ),
    };
    let (file, _, table) =
        calibrate_from_image(&image, &model, block.tooth_interval_deg, block.grid_search)
            .map_err(|e| CliError::runtime("sensor", "calibrate", e.to_string()))?;

    let _lock = WriteLock::acquire(&env.home)?;
    file.save(&env.calibration_path())
        .map_err(|e| CliError::runtime("sensor", "calibrate", e.to_string()))?;
    table
        .write_sidecar(&env.table_path())
        .map_err(|e| CliError::runtime("sensor", "calibrate", e.to_string()))?;

    emit(
        "calibrated",
        json!({
            "valid_pixels": file.valid_pixels,
            "log_marginal_likelihood": file.gp.log_marginal_likelihood,
            "calibration": env.calibration_path(),
            "table": env.table_path(),
        }),
    );
    println!(
        "calibrated: {} valid pixels, GP log marginal likelihood {:.4}",
        file.valid_pixels, file.gp.log_marginal_likelihood
    );
    println!(
        "wrote {} and {}",
        env.calibration_path().display(),
        env.table_path().display()
    );
    Ok(())
}

pub fn gen_dataset(env: &CommandEnv) -> Result<(), CliError> {
    let (model, table) = env.load_calibration()?;
    let mut spec = env.config.dataset.clone();
    if let Some(seed) = env.seed {
        spec.seed = seed;
    }
    let dir = env.dataset_dir();

    let _lock = WriteLock::acquire(&env.home)?;
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| {
            CliError::runtime(
                "cli",
                "gen-dataset",
                format!("cannot clear {}: {e}", dir.display()),
            )
        })?;
    }
    let manifest = generate_dataset(&spec, &model, &table, &dir)
        .map_err(|e| CliError::runtime("sim", "gen-dataset", e.to_string()))?;

    let train = manifest.split_records(Split::Train).count();
    let test = manifest.split_records(Split::Test).count();
    emit(
        "dataset",
        json!({
            "records": manifest.records.len(),
            "train": train,
            "test": test,
            "seed": spec.seed,
            "dir": dir,
        }),
    );
    println!(
        "dataset: {} records ({train} train / {test} test, seed {}) in {}",
        manifest.records.len(),
        spec.seed,
        dir.display()
    );
    Ok(())
}

pub fn train_cmd(env: &CommandEnv) -> Result<(), CliError> {
    let dir = env.dataset_dir();
    if !dir.join("manifest.json").exists() {
        return Err(CliError::usage(
            "net",
            "train",
            format!(
                "{} has no manifest.json; run `densetact gen-dataset` first",
                dir.display()
            ),
        ));
    }
    let mut cfg = env.config.training.train.clone();
    if let Some(seed) = env.seed {
        cfg.seed = seed;
    }
    let loss = env.config.training.loss.clone();
    let net = ReconNet::<f32>::seeded(env.config.training.net.clone());

    let _lock = WriteLock::acquire(&env.home)?;
    let outcome = train(net, &dir, &cfg, &loss, None)
        .map_err(|e| CliError::runtime("net", "train", e.to_string()))?;
    for m in &outcome.metrics {
        emit(
            "epoch",
            json!({
                "epoch": m.epoch,
                "train_loss": m.train_loss,
                "test_l1_mm": m.test_l1_mm,
            }),
        );
    }
    let final_l1 = outcome.metrics.last().map(|m| m.test_l1_mm);
    let extra = json!({
        "train": cfg,
        "loss": loss,
        "final_test_l1_mm": final_l1,
    });
    save_checkpoint(&env.checkpoint_path(), &outcome.net, &extra)
        .map_err(|e| CliError::runtime("net", "train", e.to_string()))?;
    write_text(&env.metrics_path(), &metrics_csv(&outcome.metrics), "train")?;

    emit(
        "trained",
        json!({
            "epochs": outcome.metrics.len(),
            "final_test_l1_mm": final_l1,
            "checkpoint": env.checkpoint_path(),
            "metrics": env.metrics_path(),
        }),
    );
    println!(
        "trained {} epochs; test mean L1 {} mm",
        outcome.metrics.len(),
        final_l1.map_or("n/a".to_string(), |v| format!("{v:.4}"))
    );
    println!(
        "wrote {} and {}",
        env.checkpoint_path().display(),
        env.metrics_path().display()
    );
    Ok(())
}

pub fn predict_cmd(env: &CommandEnv) -> Result<(), CliError> {
    let Some(image_path) = &env.config.prediction.image else {
        return Err(CliError::usage(
            "net",
            "predict",
            "prediction.image is not set in the config",
        ));
    };
    let (model, table) = env.load_calibration()?;
    let (net, loss) = env.load_net()?;
    let image = SensorImage::read_png(image_path).map_err(|e| {
        CliError::usage(
            "net",
            "predict",
            format!("cannot load {}: {e}", image_path.display()),
        )
    })?;
    let prediction = predict(&net, &image, &model, &loss)
        .map_err(|e| CliError::runtime("net", "predict", e.to_string()))?;
    let cloud = depth_to_pointcloud(&prediction.depth, &table, &model)
        .map_err(|e| CliError::runtime("cloud", "predict", e.to_string()))?;

    let stem = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "prediction".to_string());
    let out_dir = env.home.join("predictions");
    let _lock = WriteLock::acquire(&env.home)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| {
        CliError::runtime(
            "cli",
            "predict",
            format!("cannot create {}: {e}", out_dir.display()),
        )
    })?;
    let depth_path = out_dir.join(format!("{stem}.png"));
    let cloud_path = out_dir.join(format!("{stem}.ply"));
    let meta_path = out_dir.join(format!("{stem}.json"));
    prediction
        .depth
        .write_png(&depth_path)
        .map_err(|e| CliError::runtime("sensor", "predict", e.to_string()))?;
    write_ply(&cloud, &cloud_path)
        .map_err(|e| CliError::runtime("cloud", "predict", e.to_string()))?;
    let meta = json!({
        "input": image_path,
        "depth_png": depth_path,
        "cloud_ply": cloud_path,
        "points": cloud.len(),
        "max_depression_mm": model.max_depression,
    });
    write_text(
        &meta_path,
        &format!("{}\n", serde_json::to_string_pretty(&meta).expect("meta json")),
        "predict",
    )?;

    emit(
        "prediction",
        json!({
            "input": image_path,
            "millis": prediction.millis,
            "points": cloud.len(),
            "depth_png": depth_path,
            "cloud_ply": cloud_path,
        }),
    );
    println!(
        "predicted {} in {:.2} ms; {} surface points",
        image_path.display(),
        prediction.millis,
        cloud.len()
    );
    println!("wrote {} and {}", depth_path.display(), cloud_path.display());
    Ok(())
}

pub fn evaluate_cmd(env: &CommandEnv) -> Result<(), CliError> {
    match env.config.evaluation.mode.as_str() {
        "dataset" => evaluate_dataset(env),
        "grasp" => evaluate_grasp_fixture(env),
        other => Err(CliError::usage(
            "cloud",
            "evaluate",
            format!("unknown evaluation mode {other:?}"),
        )),
    }
}

fn evaluate_dataset(env: &CommandEnv) -> Result<(), CliError> {
    let (model, table) = env.load_calibration()?;
    let (net, loss) = env.load_net()?;
    let dir = env.dataset_dir();
    if !dir.join("manifest.json").exists() {
        return Err(CliError::usage(
            "cloud",
            "evaluate",
            format!(
                "{} has no manifest.json; run `densetact gen-dataset` first",
                dir.display()
            ),
        ));
    }
    let manifest =
        load_manifest(&dir).map_err(|e| CliError::runtime("sim", "evaluate", e.to_string()))?;
    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    for entry in manifest.split_records(Split::Test) {
        let (image, truth) = load_record(&dir, &manifest, entry)
            .map_err(|e| CliError::runtime("sim", "evaluate", e.to_string()))?;
        let prediction = predict(&net, &image, &model, &loss)
            .map_err(|e| CliError::runtime("net", "evaluate", e.to_string()))?;
        predictions.push(prediction.depth);
        truths.push(truth);
    }
    let stats = error_statistics(&predictions, &truths, &table)
        .map_err(|e| CliError::runtime("cloud", "evaluate", e.to_string()))?;

    let out_dir = env.home.join("evaluation");
    let _lock = WriteLock::acquire(&env.home)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| {
        CliError::runtime(
            "cli",
            "evaluate",
            format!("cannot create {}: {e}", out_dir.display()),
        )
    })?;
    let csv_path = out_dir.join("stats.csv");
    let json_path = out_dir.join("stats.json");
    write_text(&csv_path, &stats.to_csv(), "evaluate")?;
    write_text(
        &json_path,
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&stats).expect("stats json")
        ),
        "evaluate",
    )?;

    emit(
        "evaluation",
        json!({
            "mode": "dataset",
            "images": stats.per_image.len(),
            "mean_l1_mm": stats.mean_l1_mm,
            "std_l1_mm": stats.std_l1_mm,
            "quantiles_mm": stats.quantiles_mm,
            "csv": csv_path,
            "json": json_path,
        }),
    );
    println!(
        "evaluated {} test images: mean L1 {:.4} mm (std {:.4}), median {:.4} mm",
        stats.per_image.len(),
        stats.mean_l1_mm,
        stats.std_l1_mm,
        stats.quantiles_mm[2]
    );
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn evaluate_grasp_fixture(env: &CommandEnv) -> Result<(), CliError> {
    let model = env.config.sensor.model()?;
    let block = &env.config.evaluation;
    let mut fixture = block.grasp.clone();
    if let Some(seed) = env.seed {
        fixture.seed = seed;
    }
    let mesh = icosphere(model.hemisphere_radius, 3);
    let total = fixture.sensors * fixture.points;
    let full = sample_mesh_surface(&mesh, total, fixture.seed)
        .map_err(|e| CliError::runtime("cloud", "evaluate", e.to_string()))?;
    let noise_sigma = fixture.noise_mm / 3.0_f64.sqrt();
    let sensors: Vec<GraspSensor> = (0..fixture.sensors)
        .map(|k| {
            let chunk = &full.points()[k * fixture.points..(k + 1) * fixture.points];
            let points: Vec<Point3<f64>> = if noise_sigma > 0.0 {
                let normal = Normal::new(0.0, noise_sigma).expect("sigma >= 0");
                let mut rng = ChaCha8Rng::seed_from_u64(fixture.seed ^ (k as u64 + 1));
                chunk
                    .iter()
                    .map(|p| {
                        Point3::new(
                            p.x + normal.sample(&mut rng),
                            p.y + normal.sample(&mut rng),
                            p.z + normal.sample(&mut rng),
                        )
                    })
                    .collect()
            } else {
                chunk.to_vec()
            };
            Ok(GraspSensor {
                cloud: PointCloud::new(points)
                    .map_err(|e| CliError::runtime("cloud", "evaluate", e.to_string()))?,
                mounting: RigidPose::identity(),
                init: RigidPose::identity(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    let object = ObjectModel::Mesh {
        mesh: &mesh,
        samples: total,
        seed: fixture.seed,
    };
    let eval = evaluate_grasp(
        &sensors,
        &object,
        block.max_iterations,
        block.inlier_threshold_mm,
    )
    .map_err(|e| CliError::runtime("cloud", "evaluate", e.to_string()))?;

    let out_dir = env.home.join("evaluation");
    let _lock = WriteLock::acquire(&env.home)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| {
        CliError::runtime(
            "cli",
            "evaluate",
            format!("cannot create {}: {e}", out_dir.display()),
        )
    })?;
    let json_path = out_dir.join("grasp.json");
    eval.write_json(&json_path)
        .map_err(|e| CliError::runtime("cloud", "evaluate", e.to_string()))?;

    let summary = &eval.summary;
    emit(
        "evaluation",
        json!({
            "mode": "grasp",
            "trials": summary.trials,
            "failures": summary.failures,
            "mean_fitness": summary.mean_fitness,
            "mean_rmse_mm": summary.mean_rmse_mm,
            "json": json_path,
        }),
    );
    println!(
        "grasp: {} trials ({} failed), mean fitness {:.3} (reference {:.3}), \
         mean inlier RMSE {:.4} mm (reference {:.4})",
        summary.trials,
        summary.failures,
        summary.mean_fitness,
        summary.reference_fitness,
        summary.mean_rmse_mm,
        summary.reference_rmse_mm
    );
    println!("wrote {}", json_path.display());
    Ok(())
}

//! Synthetic dataset generation.
//!
//! A dataset is a directory of rendered sensor images, quantized depth
//! labels, and per-record JSON sidecars, indexed by a versioned manifest:
//!
//! ```text
//! out/
//!   manifest.json
//!   images/000000.png   8-bit RGB sensor view
//!   depth/000000.png    8-bit depression codes
//!   meta/000000.json    press parameters for the record
//! ```
//!
//! Train and test splits never share an (indicator, indenter) hardware
//! pair, so a model evaluated on the test split has never seen those
//! part combinations in any pose. Generation is fully deterministic in
//! the spec seed: rerunning produces byte-identical trees.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{default_lights, simulate_record};
use super::scene::{indenter_catalog, indicator_catalog, press_scene, PressPose};
use super::{SensorImage, SimError};
use crate::sensor::{CorrespondenceTable, DepthMap, SensorModel};

pub const MANIFEST_FORMAT: &str = "densetact-dataset";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// What to generate. Deserializes with every field optional so run
/// configs can override only what they care about.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub train_count: u32,
    pub test_count: u32,
    pub seed: u64,
    /// How many indicator shells from the catalog to draw from.
    pub indicator_count: u32,
    /// How many indenter tips from the catalog to draw from.
    pub indenter_count: u32,
    /// Indicator shell press depth range `[lo, hi]`, millimeters.
    pub shell_press_mm: [f64; 2],
    /// Indenter tip press depth range `[lo, hi]`, millimeters.
    pub tip_press_mm: [f64; 2],
    /// Maximum magnitude of the A and C stage tilts, degrees.
    pub tilt_deg: f64,
}

impl Default for DatasetSpec {
    fn default() -> DatasetSpec {
        DatasetSpec {
            train_count: 180,
            test_count: 20,
            seed: 7,
            indicator_count: 6,
            indenter_count: 5,
            shell_press_mm: [0.5, 1.5],
            tip_press_mm: [2.0, 5.5],
            tilt_deg: 4.0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self, model: &SensorModel) -> Result<(), SimError> {
        let fail = |reason: String| Err(SimError::Manifest { reason });
        if self.train_count == 0 || self.test_count == 0 {
            return fail(format!(
                "both splits need records, got {} train / {} test",
                self.train_count, self.test_count
            ));
        }
        if self.indicator_count == 0 || self.indenter_count == 0 {
            return fail("indicator and indenter counts must be positive".into());
        }
        if u64::from(self.indicator_count) * u64::from(self.indenter_count) < 2 {
            return fail("need at least two part pairs to keep the splits disjoint".into());
        }
        for (name, [lo, hi]) in [
            ("shell_press_mm", self.shell_press_mm),
            ("tip_press_mm", self.tip_press_mm),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
                return fail(format!("{name} range [{lo}, {hi}] is not an ordered range"));
            }
            if hi >= model.max_depression {
                return fail(format!(
                    "{name} reaches {hi} mm, at or over the {} mm depression budget",
                    model.max_depression
                ));
            }
        }
        if !self.tilt_deg.is_finite() || self.tilt_deg < 0.0 {
            return fail(format!("tilt {} deg is not usable", self.tilt_deg));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub index: u32,
    pub split: Split,
    pub image: String,
    pub depth: String,
    pub meta: String,
    pub indicator: u32,
    pub indenter: u32,
}

/// Sidecar describing how one record was posed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMeta {
    pub index: u32,
    pub split: Split,
    pub indicator: u32,
    pub indenter: u32,
    pub press: PressPose,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub sensor: SensorModel,
    pub records: Vec<RecordEntry>,
}

impl Manifest {
    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &RecordEntry> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

/// Splits the part-pair grid so the test split owns a share of pairs
/// proportional to its record share, but both splits keep at least one.
fn assign_pairs(spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> (Vec<(u32, u32)>, Vec<(u32, u32)>) {
    let mut pairs: Vec<(u32, u32)> = (0..spec.indicator_count)
        .flat_map(|i| (0..spec.indenter_count).map(move |j| (i, j)))
        .collect();
    pairs.shuffle(rng);
    let total_records = spec.train_count as f64 + spec.test_count as f64;
    let want = (pairs.len() as f64 * spec.test_count as f64 / total_records).round() as usize;
    let test_take = want.clamp(1, pairs.len() - 1);
    let train = pairs.split_off(test_take);
    (train, pairs)
}

/// Stream cipher seed for one record, decorrelated from its neighbors so
/// inserting records never shifts every later draw.
fn record_seed(base: u64, index: u32) -> u64 {
    base ^ (u64::from(index) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Generates a dataset under `out_dir` and returns its manifest (also
/// written to `out_dir/manifest.json`).
pub fn generate_dataset(
    spec: &DatasetSpec,
    model: &SensorModel,
    table: &CorrespondenceTable,
    out_dir: &Path,
) -> Result<Manifest, SimError> {
    spec.validate(model)?;
    let indicators = indicator_catalog(spec.indicator_count as usize);
    let indenters = indenter_catalog(spec.indenter_count as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (train_pairs, test_pairs) = assign_pairs(spec, &mut rng);
    let lights = default_lights(model);

    for sub in ["images", "depth", "meta"] {
        fs::create_dir_all(out_dir.join(sub))?;
    }

    let total = spec.train_count + spec.test_count;
    let mut records = Vec::with_capacity(total as usize);
    for index in 0..total {
        let (split, pairs, offset) = if index < spec.train_count {
            (Split::Train, &train_pairs, index)
        } else {
            (Split::Test, &test_pairs, index - spec.train_count)
        };
        let (indicator_id, indenter_id) = pairs[offset as usize % pairs.len()];

        let mut record_rng = ChaCha8Rng::seed_from_u64(record_seed(spec.seed, index));
        let tilt = spec.tilt_deg;
        let press = PressPose {
            axis_angles_deg: [
                record_rng.gen_range(-tilt..=tilt),
                record_rng.gen_range(0.0..360.0),
                record_rng.gen_range(-tilt..=tilt),
            ],
            shell_press_mm: record_rng.gen_range(spec.shell_press_mm[0]..=spec.shell_press_mm[1]),
            tip_press_mm: record_rng.gen_range(spec.tip_press_mm[0]..=spec.tip_press_mm[1]),
        };
        let scene = press_scene(
            model,
            &indicators[indicator_id as usize],
            &indenters[indenter_id as usize],
            &press,
        )?;
        let (image, depth) = simulate_record(&scene, table, model, &lights)?;

        let entry = RecordEntry {
            index,
            split,
            image: format!("images/{index:06}.png"),
            depth: format!("depth/{index:06}.png"),
            meta: format!("meta/{index:06}.json"),
            indicator: indicator_id,
            indenter: indenter_id,
        };
        image.write_png(&out_dir.join(&entry.image))?;
        depth.write_png(&out_dir.join(&entry.depth))?;
        let meta = RecordMeta {
            index,
            split,
            indicator: indicator_id,
            indenter: indenter_id,
            press,
        };
        let mut meta_json = serde_json::to_string_pretty(&meta)?;
        meta_json.push('\n');
        fs::write(out_dir.join(&entry.meta), meta_json)?;
        records.push(entry);
    }

    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        version: MANIFEST_VERSION,
        seed: spec.seed,
        sensor: model.clone(),
        records,
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    fs::write(out_dir.join("manifest.json"), manifest_json)?;
    Ok(manifest)
}

/// Reads and validates `manifest.json` under a dataset directory.
pub fn load_manifest(dir: &Path) -> Result<Manifest, SimError> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(SimError::Manifest {
            reason: format!("format {:?} is not {MANIFEST_FORMAT:?}", manifest.format),
        });
    }
    if manifest.version != MANIFEST_VERSION {
        return Err(SimError::Manifest {
            reason: format!(
                "version {} not supported (expected {MANIFEST_VERSION})",
                manifest.version
            ),
        });
    }
    if manifest.records.is_empty() {
        return Err(SimError::Manifest {
            reason: "manifest lists no records".into(),
        });
    }
    Ok(manifest)
}

/// Loads one record's image and depth label.
pub fn load_record(
    dir: &Path,
    manifest: &Manifest,
    entry: &RecordEntry,
) -> Result<(SensorImage, DepthMap), SimError> {
    let image = SensorImage::read_png(&dir.join(&entry.image))?;
    let depth = DepthMap::read_png(&dir.join(&entry.depth), manifest.sensor.max_depression)?;
    Ok((image, depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::build_correspondence_table;
    use crate::sim::ground_truth_depth;
    use crate::sim::scene::{indenter_pose, IndenterKind, IndenterSpec};
    use nalgebra::Vector3;
    use std::collections::HashSet;

    fn desk_setup() -> (SensorModel, CorrespondenceTable) {
        let model = SensorModel::desk_scale();
        let samples: Vec<(f64, f64)> = (0..=40).map(|i| (i as f64, 0.55 * i as f64)).collect();
        let gp = crate::sensor::fit_gp(&samples, None).unwrap();
        let table = build_correspondence_table(&model, &gp);
        (model, table)
    }

    fn tiny_spec() -> DatasetSpec {
        DatasetSpec {
            train_count: 6,
            test_count: 2,
            seed: 11,
            indicator_count: 3,
            indenter_count: 2,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn generate_and_reload_round_trips() {
        let (model, table) = desk_setup();
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(&tiny_spec(), &model, &table, dir.path()).unwrap();
        assert_eq!(manifest.records.len(), 8);

        let loaded = load_manifest(dir.path()).unwrap();
        assert_eq!(
            serde_json::to_value(&loaded).unwrap(),
            serde_json::to_value(&manifest).unwrap()
        );

        let entry = &manifest.records[3];
        let (image, depth) = load_record(dir.path(), &manifest, entry).unwrap();
        assert_eq!((image.width(), image.height()), (64, 64));
        assert_eq!((depth.width(), depth.height()), (64, 64));
        // Depth labels carry actual contact, not a flat field.
        assert!(depth.codes().iter().any(|&c| c > 10));

        let meta: RecordMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(&entry.meta)).unwrap())
                .unwrap();
        assert_eq!(meta.index, entry.index);
        assert_eq!(meta.indicator, entry.indicator);
        assert!(meta.press.tip_press_mm >= 2.0 && meta.press.tip_press_mm <= 5.5);
    }

    #[test]
    fn splits_never_share_a_part_pair() {
        let (model, table) = desk_setup();
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(&tiny_spec(), &model, &table, dir.path()).unwrap();
        let train: HashSet<(u32, u32)> = manifest
            .split_records(Split::Train)
            .map(|r| (r.indicator, r.indenter))
            .collect();
        let test: HashSet<(u32, u32)> = manifest
            .split_records(Split::Test)
            .map(|r| (r.indicator, r.indenter))
            .collect();
        assert!(!train.is_empty() && !test.is_empty());
        assert!(
            train.is_disjoint(&test),
            "shared pairs: {:?}",
            train.intersection(&test).collect::<Vec<_>>()
        );
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let (model, table) = desk_setup();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_dataset(&tiny_spec(), &model, &table, a.path()).unwrap();
        generate_dataset(&tiny_spec(), &model, &table, b.path()).unwrap();

        let mut rels = vec!["manifest.json".to_string()];
        for sub in ["images", "depth", "meta"] {
            let mut names: Vec<String> = std::fs::read_dir(a.path().join(sub))
                .unwrap()
                .map(|e| format!("{sub}/{}", e.unwrap().file_name().to_string_lossy()))
                .collect();
            names.sort();
            rels.extend(names);
        }
        assert_eq!(rels.len(), 1 + 3 * 8);
        for rel in rels {
            let left = std::fs::read(a.path().join(&rel)).unwrap();
            let right = std::fs::read(b.path().join(&rel)).unwrap();
            assert_eq!(left, right, "{rel} differs between runs");
        }
    }

    #[test]
    fn bad_specs_are_rejected_before_any_io() {
        let (model, _) = desk_setup();
        let cases = [
            DatasetSpec {
                test_count: 0,
                ..DatasetSpec::default()
            },
            DatasetSpec {
                indicator_count: 1,
                indenter_count: 1,
                ..DatasetSpec::default()
            },
            DatasetSpec {
                tip_press_mm: [2.0, 11.0],
                ..DatasetSpec::default()
            },
            DatasetSpec {
                shell_press_mm: [1.5, 0.5],
                ..DatasetSpec::default()
            },
        ];
        for spec in cases {
            assert!(matches!(
                spec.validate(&model),
                Err(SimError::Manifest { .. })
            ));
        }
    }

    #[test]
    fn optical_axis_sweep_steps_change_depth_gradually() {
        let (model, table) = desk_setup();
        // A wide tip pressed shallow: its tangent circle stays outside
        // the rest hemisphere, so the depth field is continuous at the
        // contact boundary and small pose steps move codes gently.
        // (A deep narrow press has a silhouette cliff: grazing rays hit
        // over a millimeter deep, one step later they miss entirely.)
        let tip = IndenterSpec {
            id: 0,
            kind: IndenterKind::Sphere,
            size_mm: 6.0,
        };
        let base_dir = Vector3::new(30f64.to_radians().sin(), 0.0, 30f64.to_radians().cos());
        let press = 2.0;
        let step = 0.9f64;
        let mut prev: Option<DepthMap> = None;
        let mut worst = 0i32;
        for k in 0..200 {
            let rig = crate::sim::scene::axis_rotation([0.0, step * k as f64, 0.0]);
            let pose = indenter_pose(rig * base_dir, model.hemisphere_radius - press);
            let scene =
                crate::sim::PressScene::new(vec![(tip.tip_mesh(), pose)], [0.0, step * k as f64, 0.0])
                    .unwrap();
            let depth = ground_truth_depth(&scene, &table, &model).unwrap();
            if let Some(last) = &prev {
                let linf = last
                    .codes()
                    .iter()
                    .zip(depth.codes())
                    .map(|(a, b)| (i32::from(*a) - i32::from(*b)).abs())
                    .max()
                    .unwrap();
                worst = worst.max(linf);
            }
            prev = Some(depth);
        }
        assert!(
            worst <= 15,
            "a 0.9 degree sweep step moved some pixel {worst} codes"
        );
    }
}

use super::{
    interference_gain, sample_interferers, sample_scene, synthesize_clean, synthesize_interferer,
    InterfererConfig, RadarConfig, Scene,
};
use crate::dsp::{self, RdaMap};
use crate::error::{Error, Result};
use crate::metrics::{detect_objects, CfarConfig, Peak};
use crate::mitigate::InterferenceMask;
use crate::tensor::{read_crt1_file, write_crt1_file, ComplexTensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const GENERATOR_VERSION: &str = "radarim-sim/1";

/// Attempts per sample before giving up on finding a usable scene.
const MAX_ATTEMPTS: u64 = 64;

/// How the sampled `snir_db` values are applied when mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnirMode {
    /// `snir_db` is the clean-to-interference power ratio.
    SignalOverInterference,
    /// `snir_db` is the interference excess over the clean cube power.
    #[default]
    InterferenceOverSignal,
}

impl SnirMode {
    fn mixing_ratio_db(self, snir_db: f64) -> f64 {
        match self {
            SnirMode::SignalOverInterference => snir_db,
            SnirMode::InterferenceOverSignal => -snir_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Pins every interferer's angle of arrival, degrees.
    pub fixed_aoa: Option<f64>,
    pub snir_mode: SnirMode,
    /// CFAR used to derive the ground-truth peak set from clean data.
    pub cfar: CfarConfig,
    pub overwrite: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            n_train: 300,
            n_val: 50,
            n_test: 50,
            seed: 0,
            fixed_aoa: None,
            snir_mode: SnirMode::default(),
            cfar: CfarConfig::default(),
            overwrite: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub interfered_path: String,
    pub clean_path: String,
    pub peaks: Vec<Peak>,
    pub interferers: Vec<InterfererConfig>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<SampleRecord>,
    pub val: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub radar_config: RadarConfig,
    pub splits: Splits,
    pub generator_version: String,
    pub seed: u64,
    pub fixed_aoa: Option<f64>,
    pub snir_mode: SnirMode,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn split(&self, name: &str) -> Result<&[SampleRecord]> {
        match name {
            "train" => Ok(&self.splits.train),
            "val" => Ok(&self.splits.val),
            "test" => Ok(&self.splits.test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Paired interfered/clean RDA tensors with their ground truth.
#[derive(Debug, Clone)]
pub struct DataSample {
    pub interfered_rda: RdaMap,
    pub clean_rda: RdaMap,
    pub peaks: Vec<Peak>,
    pub interference_mask: InterferenceMask,
    pub scene: Option<Scene>,
    pub interferers: Vec<InterfererConfig>,
    pub seed: u64,
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sample `index` in a dataset generated from `seed`.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Builds one sample from its seed. Scenes without a detectable object and
/// interferer sets that never cross the ego band (or cover half the frame
/// or more) are redrawn from a derived seed.
pub fn build_sample(
    cfg: &RadarConfig,
    seed: u64,
    fixed_aoa: Option<f64>,
    snir_mode: SnirMode,
    cfar: &CfarConfig,
) -> Result<DataSample> {
    cfg.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let s = if attempt == 0 {
            seed
        } else {
            splitmix64(seed.wrapping_add(attempt))
        };
        let scene = sample_scene(s, cfg);
        let clean = synthesize_clean(&scene, cfg, s)?;
        let clean_rda = dsp::time_to_rda(&clean)?;
        let (_, peaks) = detect_objects(&dsp::rda_to_rd(&clean_rda)?, cfar)?;
        if peaks.is_empty() {
            continue;
        }

        let mut interferers = sample_interferers(s, cfg);
        if let Some(aoa) = fixed_aoa {
            interferers.iter_mut().for_each(|ic| ic.aoa = aoa);
        }
        let p_clean = clean.mean_power();
        let mut mixed = clean.clone();
        let mut mask = InterferenceMask::empty(cfg.n_range, cfg.n_doppler);
        let mut active = Vec::new();
        for ic in &interferers {
            let (cube, m) = synthesize_interferer(ic, cfg)?;
            let p = cube.mean_power();
            if p == 0.0 {
                continue;
            }
            let g = interference_gain(p_clean, p, snir_mode.mixing_ratio_db(ic.snir_db))? as f32;
            mixed = mixed.zip_with(&cube, |a, b| a + b * g)?;
            mask = mask.union(&m)?;
            active.push(ic.clone());
        }
        if active.is_empty() || mask.fraction() >= 0.5 {
            continue;
        }
        return Ok(DataSample {
            interfered_rda: dsp::time_to_rda(&mixed)?,
            clean_rda,
            peaks,
            interference_mask: mask,
            scene: Some(scene),
            interferers: active,
            seed: s,
        });
    }
    Err(Error::Degenerate(format!(
        "no usable sample after {MAX_ATTEMPTS} attempts from seed {seed}"
    )))
}

fn prepare_dir(out_dir: &Path, overwrite: bool) -> Result<()> {
    if out_dir.exists() {
        let non_empty = std::fs::read_dir(out_dir)
            .map_err(|e| Error::io(out_dir, e))?
            .next()
            .is_some();
        if non_empty && !overwrite {
            return Err(Error::InvalidArgument(format!(
                "{} already exists and is not empty (pass overwrite to replace it)",
                out_dir.display()
            )));
        }
    }
    for split in ["train", "val", "test"] {
        let d = out_dir.join(split);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    Ok(())
}

/// Generates the three splits under `out_dir` and writes `manifest.json`
/// last, so a failed run never leaves a manifest behind.
pub fn generate_dataset(
    opts: &DatasetOptions,
    cfg: &RadarConfig,
    out_dir: &Path,
) -> Result<Manifest> {
    cfg.validate()?;
    opts.cfar.validate()?;
    if opts.n_train == 0 || opts.n_val == 0 || opts.n_test == 0 {
        return Err(Error::InvalidConfig(
            "every split needs at least one sample".into(),
        ));
    }
    prepare_dir(out_dir, opts.overwrite)?;

    let layout: Vec<(&str, usize)> = [
        ("train", opts.n_train),
        ("val", opts.n_val),
        ("test", opts.n_test),
    ]
    .into_iter()
    .flat_map(|(split, n)| (0..n).map(move |i| (split, i)))
    .collect();
    let records: Vec<Result<SampleRecord>> = layout
        .par_iter()
        .enumerate()
        .map(|(global, &(split, i))| {
            let seed = sample_seed(opts.seed, global as u64);
            let sample = build_sample(cfg, seed, opts.fixed_aoa, opts.snir_mode, &opts.cfar)?;
            let id = format!("{split}-{i:05}");
            let interfered_path = format!("{split}/{i:05}_interfered.crt1");
            let clean_path = format!("{split}/{i:05}_clean.crt1");
            write_crt1_file(
                &out_dir.join(&interfered_path),
                sample.interfered_rda.tensor(),
            )?;
            write_crt1_file(&out_dir.join(&clean_path), sample.clean_rda.tensor())?;
            Ok(SampleRecord {
                id,
                interfered_path,
                clean_path,
                peaks: sample.peaks,
                interferers: sample.interferers,
                seed: sample.seed,
            })
        })
        .collect();

    let mut splits = Splits::default();
    for ((split, _), rec) in layout.iter().zip(records) {
        let rec = rec?;
        match *split {
            "train" => splits.train.push(rec),
            "val" => splits.val.push(rec),
            _ => splits.test.push(rec),
        }
    }
    let manifest = Manifest {
        radar_config: cfg.clone(),
        splits,
        generator_version: GENERATOR_VERSION.to_string(),
        seed: opts.seed,
        fixed_aoa: opts.fixed_aoa,
        snir_mode: opts.snir_mode,
    };
    let path = out_dir.join("manifest.json");
    let tmp = out_dir.join("manifest.json.tmp");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a sample back. The interference mask is recomputed from the
/// interferer metadata.
pub fn load_sample(root: &Path, record: &SampleRecord, cfg: &RadarConfig) -> Result<DataSample> {
    let shape = cfg.cube_shape();
    let read = |rel: &str| -> Result<ComplexTensor> {
        let t = read_crt1_file(&root.join(rel))?;
        t.ensure_shape(&shape)?;
        Ok(t)
    };
    let mut mask = InterferenceMask::empty(cfg.n_range, cfg.n_doppler);
    for ic in &record.interferers {
        mask = mask.union(&synthesize_interferer(ic, cfg)?.1)?;
    }
    Ok(DataSample {
        interfered_rda: RdaMap(read(&record.interfered_path)?),
        clean_rda: RdaMap(read(&record.clean_path)?),
        peaks: record.peaks.clone(),
        interference_mask: mask,
        scene: None,
        interferers: record.interferers.clone(),
        seed: record.seed,
    })
}

/// Directory holding `manifest.json`; sample paths are relative to it.
pub fn manifest_root(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

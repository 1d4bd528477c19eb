//! Synthetic multi-antenna FMCW data: point-target scenes, crossing-chirp
//! mutual interference and paired interfered/clean datasets.

mod dataset;
mod interference;

pub use dataset::{
    build_sample, generate_dataset, load_sample, manifest_root, sample_seed, DataSample,
    DatasetOptions, Manifest, SampleRecord, SnirMode, Splits, GENERATOR_VERSION,
};
pub use interference::{
    interference_gain, mix_at_snir, sample_interferers, synthesize_interference,
    synthesize_interferer, InterfererConfig,
};

use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;
use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Ego sensor parameters. The sample rate is derived as `n_range / sweep_duration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    pub n_range: usize,
    pub n_doppler: usize,
    pub n_antennas: usize,
    /// Centre of the ego sweep, Hz.
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub sweep_duration: f64,
    /// Element spacing in wavelengths.
    pub antenna_spacing: f64,
    /// Complex noise power per sample, dB relative to a unit-amplitude object.
    pub noise_floor_db: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        RadarConfig {
            n_range: 96,
            n_doppler: 96,
            n_antennas: 16,
            carrier_freq: 79e9,
            bandwidth: 0.2e9,
            sweep_duration: 16e-6,
            antenna_spacing: 0.5,
            noise_floor_db: -20.0,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq", self.carrier_freq),
            ("bandwidth", self.bandwidth),
            ("sweep_duration", self.sweep_duration),
            ("antenna_spacing", self.antenna_spacing),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.n_range == 0 || self.n_doppler == 0 || self.n_antennas == 0 {
            return Err(Error::InvalidConfig(
                "tensor dimensions must be positive".into(),
            ));
        }
        if !self.noise_floor_db.is_finite() {
            return Err(Error::InvalidConfig("noise_floor_db must be finite".into()));
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.n_range as f64 / self.sweep_duration
    }

    pub fn chirp_slope(&self) -> f64 {
        self.bandwidth / self.sweep_duration
    }

    pub fn sweep_start_freq(&self) -> f64 {
        self.carrier_freq - 0.5 * self.bandwidth
    }

    /// Range at which the beat frequency reaches `f_s / 2`.
    pub fn max_range(&self) -> f64 {
        SPEED_OF_LIGHT * self.sample_rate() * self.sweep_duration / (4.0 * self.bandwidth)
    }

    /// Velocity at which the Doppler shift reaches half the sweep rate.
    pub fn max_velocity(&self) -> f64 {
        SPEED_OF_LIGHT / (4.0 * self.carrier_freq * self.sweep_duration)
    }

    pub fn frame_duration(&self) -> f64 {
        self.n_doppler as f64 * self.sweep_duration
    }

    pub fn cube_shape(&self) -> [usize; 3] {
        [self.n_range, self.n_doppler, self.n_antennas]
    }

    pub fn beat_frequency(&self, range: f64) -> f64 {
        2.0 * self.bandwidth * range / (SPEED_OF_LIGHT * self.sweep_duration)
    }

    pub fn doppler_frequency(&self, velocity: f64) -> f64 {
        2.0 * velocity * self.carrier_freq / SPEED_OF_LIGHT
    }

    /// Fractional range bin of an object (unshifted axis).
    pub fn range_bin(&self, range: f64) -> f64 {
        self.beat_frequency(range) * self.sweep_duration
    }

    /// Fractional Doppler bin offset from the zero-velocity bin.
    pub fn doppler_bin_offset(&self, velocity: f64) -> f64 {
        self.doppler_frequency(velocity) * self.n_doppler as f64 * self.sweep_duration
    }

    /// Fractional angle bin offset from boresight.
    pub fn angle_bin_offset(&self, azimuth_deg: f64) -> f64 {
        self.n_antennas as f64 * self.antenna_spacing * azimuth_deg.to_radians().sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    /// Metres.
    pub range: f64,
    /// Radial velocity, m/s.
    pub velocity: f64,
    /// Degrees in `[-90, 90]`.
    pub azimuth: f64,
    /// Linear amplitude.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

pub const MAX_OBJECTS: usize = 10;
const MIN_RANGE: f64 = 2.0;
/// Amplitude span of sampled objects, dB.
const AMPLITUDE_SPAN_DB: f64 = 30.0;

impl Scene {
    pub fn validate(&self, cfg: &RadarConfig) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::InvalidArgument("scene has no objects".into()));
        }
        if self.objects.len() > MAX_OBJECTS {
            return Err(Error::InvalidArgument(format!(
                "scene has {} objects, at most {MAX_OBJECTS} allowed",
                self.objects.len()
            )));
        }
        let r_max = cfg.max_range();
        for o in &self.objects {
            if !(o.range >= 0.0 && o.range < r_max) {
                return Err(Error::InvalidArgument(format!(
                    "object range {} m outside unambiguous range {r_max:.2} m",
                    o.range
                )));
            }
            if !(-90.0..=90.0).contains(&o.azimuth) {
                return Err(Error::InvalidArgument(format!(
                    "object azimuth {} outside [-90, 90]",
                    o.azimuth
                )));
            }
        }
        Ok(())
    }
}

/// Independent RNG stream `stream` derived from `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const SCENE: u64 = 1;
    pub const INTERFERERS: u64 = 2;
    pub const NOISE: u64 = 3;
}

pub fn sample_scene(rng_seed: u64, cfg: &RadarConfig) -> Scene {
    let mut rng = stream_rng(rng_seed, streams::SCENE);
    let count = rng.random_range(1..=MAX_OBJECTS);
    let r_hi = 0.9 * cfg.max_range();
    let v_max = cfg.max_velocity();
    let objects = (0..count)
        .map(|_| {
            let range = rng.random_range(MIN_RANGE.min(r_hi)..r_hi);
            let velocity = rng.random_range(-v_max..v_max);
            let azimuth = rng.random_range(-90.0..=90.0);
            let amp_db: f64 = rng.random_range(-AMPLITUDE_SPAN_DB..=0.0);
            SceneObject {
                range,
                velocity,
                azimuth,
                amplitude: 10f64.powf(amp_db / 20.0),
            }
        })
        .collect();
    Scene { objects }
}

/// Noise-free beat signal of the scene, `[N_R, N_D, N_A]`.
pub fn synthesize_targets(scene: &Scene, cfg: &RadarConfig) -> Result<ComplexTensor> {
    cfg.validate()?;
    scene.validate(cfg)?;
    let [nr, nd, na] = cfg.cube_shape();
    let fs = cfg.sample_rate();
    let mut acc = vec![num_complex::Complex64::new(0.0, 0.0); nr * nd * na];
    for o in &scene.objects {
        let fb = cfg.beat_frequency(o.range) / fs;
        let fd = cfg.doppler_frequency(o.velocity) * cfg.sweep_duration;
        let fa = cfg.antenna_spacing * o.azimuth.to_radians().sin();
        // separable phase: precompute the three progressions
        let pr: Vec<_> = (0..nr)
            .map(|n| num_complex::Complex64::from_polar(o.amplitude, 2.0 * PI * fb * n as f64))
            .collect();
        let pd: Vec<_> = (0..nd)
            .map(|m| num_complex::Complex64::from_polar(1.0, 2.0 * PI * fd * m as f64))
            .collect();
        let pa: Vec<_> = (0..na)
            .map(|a| num_complex::Complex64::from_polar(1.0, 2.0 * PI * fa * a as f64))
            .collect();
        let mut idx = 0;
        for r in &pr {
            for d in &pd {
                let rd = r * d;
                for a in &pa {
                    acc[idx] += rd * a;
                    idx += 1;
                }
            }
        }
    }
    let data = acc
        .into_iter()
        .map(|z| Complex32::new(z.re as f32, z.im as f32))
        .collect();
    ComplexTensor::from_vec(&[nr, nd, na], data)
}

/// Circular complex Gaussian noise at the configured floor.
pub fn add_noise<R: Rng>(cube: &mut ComplexTensor, cfg: &RadarConfig, rng: &mut R) {
    let sigma = (10f64.powf(cfg.noise_floor_db / 10.0) / 2.0).sqrt();
    for z in cube.data_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += Complex32::new((sigma * re) as f32, (sigma * im) as f32);
    }
}

/// Clean time cube: ideal point targets plus receiver noise drawn from `noise_seed`.
pub fn synthesize_clean(
    scene: &Scene,
    cfg: &RadarConfig,
    noise_seed: u64,
) -> Result<ComplexTensor> {
    let mut cube = synthesize_targets(scene, cfg)?;
    let mut rng = stream_rng(noise_seed, streams::NOISE);
    add_noise(&mut cube, cfg, &mut rng);
    Ok(cube)
}

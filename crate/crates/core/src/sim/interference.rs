//! Crossing-chirp mutual interference.
//!
//! An interferer sweeping with a different slope produces a baseband signal
//! in the ego receiver only while the instantaneous frequency difference
//! `f_Δ(t)` lies inside the receiver band `|f_Δ| < f_s/2`. Inside that window
//! the dechirped phase is the time integral of `f_Δ`, i.e. a short quadratic
//! chirp burst.

use super::{stream_rng, streams, RadarConfig};
use crate::error::{Error, Result};
use crate::mitigate::InterferenceMask;
use crate::tensor::ComplexTensor;
use num_complex::{Complex32, Complex64};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfererConfig {
    /// Seconds per sweep.
    pub sweep_duration: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Frequency at the start of each sweep, Hz.
    pub start_freq: f64,
    /// Angle of arrival, degrees.
    pub aoa: f64,
    pub n_sweeps: usize,
    pub snir_db: f64,
    /// Start of the first interferer sweep relative to the ego frame, seconds.
    pub time_offset: f64,
    /// `+1` for up-chirps, `-1` for down-chirps.
    pub chirp_slope_sign: i8,
}

pub const SWEEP_DURATION_RANGE: (f64, f64) = (12e-6, 24e-6);
pub const BANDWIDTH_RANGE: (f64, f64) = (0.15e9, 0.25e9);
pub const AOA_RANGE: (f64, f64) = (-90.0, 90.0);
pub const START_FREQ_RANGE: (f64, f64) = (78.9e9, 79.1e9);
pub const N_SWEEPS_RANGE: (usize, usize) = (100, 156);
pub const SNIR_DB_RANGE: (f64, f64) = (30.0, 50.0);
pub const MAX_INTERFERERS: usize = 3;

impl InterfererConfig {
    pub fn slope(&self) -> f64 {
        self.chirp_slope_sign as f64 * self.bandwidth / self.sweep_duration
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sweep_duration > 0.0 && self.bandwidth > 0.0 && self.n_sweeps > 0) {
            return Err(Error::InvalidArgument(
                "interferer sweep duration, bandwidth and sweep count must be positive".into(),
            ));
        }
        if self.chirp_slope_sign != 1 && self.chirp_slope_sign != -1 {
            return Err(Error::InvalidArgument("chirp_slope_sign must be ±1".into()));
        }
        Ok(())
    }
}

/// Draws 1–3 interferers with parameters uniform over the documented ranges.
pub fn sample_interferers(rng_seed: u64, cfg: &RadarConfig) -> Vec<InterfererConfig> {
    let mut rng = stream_rng(rng_seed, streams::INTERFERERS);
    let count = rng.random_range(1..=MAX_INTERFERERS);
    (0..count)
        .map(|_| {
            let sweep_duration = rng.random_range(SWEEP_DURATION_RANGE.0..=SWEEP_DURATION_RANGE.1);
            let bandwidth = rng.random_range(BANDWIDTH_RANGE.0..=BANDWIDTH_RANGE.1);
            let aoa = rng.random_range(AOA_RANGE.0..=AOA_RANGE.1);
            let start_freq = rng.random_range(START_FREQ_RANGE.0..=START_FREQ_RANGE.1);
            let n_sweeps = rng.random_range(N_SWEEPS_RANGE.0..=N_SWEEPS_RANGE.1);
            let snir_db = rng.random_range(SNIR_DB_RANGE.0..=SNIR_DB_RANGE.1);
            let frame = n_sweeps as f64 * sweep_duration;
            let time_offset = rng.random_range(-0.5 * frame..0.5 * cfg.frame_duration());
            let chirp_slope_sign = if rng.random_bool(0.5) { 1 } else { -1 };
            InterfererConfig {
                sweep_duration,
                bandwidth,
                start_freq,
                aoa,
                n_sweeps,
                snir_db,
                time_offset,
                chirp_slope_sign,
            }
        })
        .collect()
}

fn wrap_phase(x: f64) -> f64 {
    x.rem_euclid(2.0 * PI)
}

/// Unscaled dechirped baseband of one interferer and the samples it corrupts.
pub fn synthesize_interferer(
    ic: &InterfererConfig,
    cfg: &RadarConfig,
) -> Result<(ComplexTensor, InterferenceMask)> {
    cfg.validate()?;
    ic.validate()?;
    let [nr, nd, na] = cfg.cube_shape();
    let fs = cfg.sample_rate();
    let f_ref = cfg.carrier_freq;
    let ego_f0 = cfg.sweep_start_freq() - f_ref;
    let ego_k = cfg.chirp_slope();
    let t_ego = cfg.sweep_duration;
    // phase accumulated over one complete sweep, relative to the reference carrier
    let ego_sweep_phase = 2.0 * PI * (ego_f0 * t_ego + 0.5 * ego_k * t_ego * t_ego);

    let int_f0 = ic.start_freq - f_ref;
    let int_k = ic.slope();
    let t_int = ic.sweep_duration;
    let int_sweep_phase = 2.0 * PI * (int_f0 * t_int + 0.5 * int_k * t_int * t_int);
    let int_end = ic.n_sweeps as f64 * t_int;
    // carrier terms of the two signals differ by a constant
    let carrier_offset = -2.0 * PI * (f_ref * ic.time_offset).fract();

    let spacing_phase = -2.0 * PI * cfg.antenna_spacing * ic.aoa.to_radians().sin();
    let steering: Vec<Complex64> = (0..na)
        .map(|a| Complex64::from_polar(1.0, spacing_phase * a as f64))
        .collect();

    let mut cube = ComplexTensor::zeros(&[nr, nd, na]);
    let mut mask = InterferenceMask::empty(nr, nd);
    let data = cube.data_mut();
    for n in 0..nr {
        let tau_e = n as f64 / fs;
        let f_ego = ego_f0 + ego_k * tau_e;
        let phi_ego_in = 2.0 * PI * (ego_f0 * tau_e + 0.5 * ego_k * tau_e * tau_e);
        for m in 0..nd {
            let t = m as f64 * t_ego + tau_e;
            let u = t - ic.time_offset;
            if u < 0.0 || u >= int_end {
                continue;
            }
            let sweep = (u / t_int).floor();
            let tau_i = u - sweep * t_int;
            let f_int = int_f0 + int_k * tau_i;
            if (f_int - f_ego).abs() >= 0.5 * fs {
                continue;
            }
            mask.set(n, m, true);
            let phi_int =
                sweep * int_sweep_phase + 2.0 * PI * (int_f0 * tau_i + 0.5 * int_k * tau_i * tau_i);
            let phi_ego = m as f64 * ego_sweep_phase + phi_ego_in;
            let burst = Complex64::from_polar(1.0, wrap_phase(phi_int - phi_ego + carrier_offset));
            let base = (n * nd + m) * na;
            for (a, s) in steering.iter().enumerate() {
                let z = burst * s;
                data[base + a] = Complex32::new(z.re as f32, z.im as f32);
            }
        }
    }
    Ok((cube, mask))
}

/// Sum of the unscaled interferer signals and the union of their masks.
pub fn synthesize_interference(
    ics: &[InterfererConfig],
    cfg: &RadarConfig,
) -> Result<(ComplexTensor, InterferenceMask)> {
    if ics.is_empty() {
        return Err(Error::InvalidArgument("no interferers given".into()));
    }
    let mut total = ComplexTensor::zeros(&cfg.cube_shape());
    let mut mask = InterferenceMask::empty(cfg.n_range, cfg.n_doppler);
    for ic in ics {
        let (cube, m) = synthesize_interferer(ic, cfg)?;
        total = total.add(&cube)?;
        mask = mask.union(&m)?;
    }
    Ok((total, mask))
}

/// Amplitude gain `g` such that `10·log10(p_clean / (g²·p_interference)) = snir_db`.
pub fn interference_gain(p_clean: f64, p_interference: f64, snir_db: f64) -> Result<f64> {
    if !(p_interference > 0.0) {
        return Err(Error::Degenerate("interference has zero power".into()));
    }
    Ok((p_clean / (p_interference * 10f64.powf(snir_db / 10.0))).sqrt())
}

/// `clean + g·interference` with powers measured over the whole cube.
pub fn mix_at_snir(
    clean: &ComplexTensor,
    interference: &ComplexTensor,
    snir_db: f64,
) -> Result<ComplexTensor> {
    interference.ensure_shape(clean.shape())?;
    let g = interference_gain(clean.mean_power(), interference.mean_power(), snir_db)? as f32;
    clean.zip_with(interference, |c, i| c + i * g)
}

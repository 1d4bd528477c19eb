use crate::dsp::{self, RdaMap};
use crate::error::{Error, Result};

/// Display factor for the zero-padded antenna DFT.
pub const DEFAULT_ANGLE_UPSAMPLING: usize = 8;
/// Black level of the graymap, dB below the maximum.
pub const PGM_FLOOR_DB: f64 = -60.0;

const ASCII_RAMP: &[u8] = b" .:-=+*#%@";

/// Range-angle power in dB, rows = range bins, columns = angle bins,
/// scaled so the maximum is 0 dB.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeAngleMap {
    pub rows: usize,
    pub cols: usize,
    pub db: Vec<f64>,
}

/// Sums power over Doppler after an angle DFT zero-padded by `upsampling`.
pub fn range_angle_map(rda: &RdaMap, upsampling: usize) -> Result<RangeAngleMap> {
    if upsampling == 0 {
        return Err(Error::InvalidArgument(
            "angle up-sampling must be at least 1".into(),
        ));
    }
    let rd = dsp::rda_to_rd(rda)?;
    let [nr, nd, na] = [rd.0.shape()[0], rd.0.shape()[1], rd.0.shape()[2]];
    let cols = na * upsampling;
    let spec = dsp::upsampled_angle_spectrum(&rd, cols)?;
    let data = spec.data();
    let mut power = vec![0.0f64; nr * cols];
    for r in 0..nr {
        for d in 0..nd {
            let base = (r * nd + d) * cols;
            for (c, z) in data[base..base + cols].iter().enumerate() {
                power[r * cols + c] += z.norm_sqr() as f64;
            }
        }
    }
    let max = power.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::Degenerate("degenerate dynamic range".into()));
    }
    let db = power
        .iter()
        .map(|&p| {
            if p > 0.0 {
                10.0 * (p / max).log10()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    Ok(RangeAngleMap { rows: nr, cols, db })
}

impl RangeAngleMap {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.db[r * self.cols + c]
    }

    fn level(&self, v: f64, floor_db: f64, top: f64) -> f64 {
        ((v - floor_db) / -floor_db).clamp(0.0, 1.0) * top
    }

    /// Binary graymap (P5), 0 dB white, `floor_db` and below black.
    /// Range increases downwards.
    pub fn to_pgm(&self, floor_db: f64) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend(
            self.db
                .iter()
                .map(|&v| self.level(v, floor_db, 255.0).round() as u8),
        );
        out
    }

    /// Character preview, averaging the dB values over blocks so the width
    /// stays within `max_cols`.
    pub fn to_ascii(&self, floor_db: f64, max_cols: usize) -> String {
        let step = self.cols.div_ceil(max_cols.max(1));
        let top = (ASCII_RAMP.len() - 1) as f64;
        let mut out = String::new();
        for r in 0..self.rows {
            for c0 in (0..self.cols).step_by(step) {
                let c1 = (c0 + step).min(self.cols);
                let v = (c0..c1)
                    .map(|c| self.get(r, c))
                    .fold(f64::NEG_INFINITY, f64::max);
                out.push(ASCII_RAMP[self.level(v, floor_db, top).round() as usize] as char);
            }
            out.push('\n');
        }
        out
    }
}

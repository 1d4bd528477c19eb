//! Object detection (CA-CFAR + cluster peaks) and the F1 / EVM / PPMSE
//! scores used to compare mitigation methods.
//!
//! Detection always runs on the non-coherent power sum of a Hann-windowed
//! RD-map. The window is applied in the frequency domain, so unwindowed
//! network outputs and unwindowed stored samples can be scored directly.

mod cfar;
mod peaks;
mod scores;

pub use cfar::{cacfar, cfar_alpha, BinaryMap, CfarConfig};
pub use peaks::{extract_peaks, Peak};
pub use scores::{evm, f1_score, ppmse, wrapped_phase_error, F1Score};

use crate::dsp::{self, RdMap, RdaMap};
use crate::error::Result;
use crate::sim::DataSample;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MATCH_TOLERANCE: usize = 1;

/// CFAR detections and their cluster peaks for an unwindowed RD-map.
pub fn detect_objects(rd: &RdMap, cfar: &CfarConfig) -> Result<(BinaryMap, Vec<Peak>)> {
    let windowed = dsp::hann_in_frequency(rd)?;
    let power = dsp::noncoherent_sum(windowed.tensor())?;
    let detections = cacfar(&power, cfar)?;
    let peaks = extract_peaks(&detections, &power)?;
    Ok((detections, peaks))
}

/// Output of a mitigation method in whichever domain it works in.
#[derive(Debug, Clone)]
pub enum Prediction {
    Rd(RdMap),
    Rda(RdaMap),
}

impl Prediction {
    pub fn to_rd(&self) -> Result<RdMap> {
        match self {
            Prediction::Rd(rd) => Ok(rd.clone()),
            Prediction::Rda(rda) => dsp::rda_to_rd(rda),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    #[serde(skip)]
    pub detections: Option<BinaryMap>,
    pub peaks: Vec<Peak>,
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_fn: usize,
    pub f1: f64,
    pub evm: f64,
    pub ppmse: f64,
}

/// Scores one mitigated output against the sample's clean ground truth.
pub fn evaluate_sample(
    sample: &DataSample,
    output: &Prediction,
    cfar: &CfarConfig,
    match_tolerance: usize,
) -> Result<DetectionReport> {
    let pred_rd = output.to_rd()?;
    let clean_rd = dsp::rda_to_rd(&sample.clean_rda)?;
    pred_rd.0.ensure_shape(clean_rd.0.shape())?;
    let (detections, peaks) = detect_objects(&pred_rd, cfar)?;
    let f1 = f1_score(&peaks, &sample.peaks, match_tolerance);
    Ok(DetectionReport {
        detections: Some(detections),
        peaks,
        n_tp: f1.tp,
        n_fp: f1.fp,
        n_fn: f1.fn_,
        f1: f1.f1,
        evm: evm(&pred_rd, &clean_rd, &sample.peaks)?,
        ppmse: ppmse(&pred_rd, &clean_rd, &sample.peaks)?,
    })
}

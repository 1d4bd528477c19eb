//! Experiment plumbing shared by the command-line front end: configuration,
//! the mitigation methods under comparison, evaluation reports and
//! range-angle rendering.

mod config;
mod evaluate;
mod render;

pub use config::{DatasetSection, ExperimentConfig, MitigationConfig, ModelChoice};
pub use evaluate::{
    aggregate, aggregate_csv, evaluate_split, mitigate, run_evaluation, Aggregate,
    EvaluationReport, SampleScore, TrainedModel,
};
pub use render::{range_angle_map, RangeAngleMap, DEFAULT_ANGLE_UPSAMPLING, PGM_FLOOR_DB};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ccnn3d-l")]
    Ccnn3dL,
    #[serde(rename = "ccnn3d-m")]
    Ccnn3dM,
    #[serde(rename = "ccnn3d-s")]
    Ccnn3dS,
    #[serde(rename = "ccnn3d-xs")]
    Ccnn3dXs,
    #[serde(rename = "ccnn2d")]
    Ccnn2d,
    #[serde(rename = "zeroing")]
    Zeroing,
    #[serde(rename = "ramp")]
    Ramp,
    #[serde(rename = "imat")]
    Imat,
    #[serde(rename = "none")]
    None,
}

impl Method {
    /// Report row order.
    pub const ALL: [Method; 9] = [
        Method::Ccnn3dL,
        Method::Ccnn3dM,
        Method::Ccnn3dS,
        Method::Ccnn3dXs,
        Method::Ccnn2d,
        Method::Zeroing,
        Method::Ramp,
        Method::Imat,
        Method::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ccnn3dL => "ccnn3d-l",
            Method::Ccnn3dM => "ccnn3d-m",
            Method::Ccnn3dS => "ccnn3d-s",
            Method::Ccnn3dXs => "ccnn3d-xs",
            Method::Ccnn2d => "ccnn2d",
            Method::Zeroing => "zeroing",
            Method::Ramp => "ramp",
            Method::Imat => "imat",
            Method::None => "none",
        }
    }

    /// Network methods need a trained checkpoint.
    pub fn is_neural(self) -> bool {
        (self as usize) < 5
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::InvalidArgument(format!("unknown method {s:?}; expected one of {names:?}"))
            })
    }
}

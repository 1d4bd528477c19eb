use super::Peak;
use crate::dsp::RdMap;
use crate::error::{Error, Result};
use num_complex::Complex32;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl F1Score {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let f1 = if tp + fp + fn_ == 0 {
            1.0
        } else {
            2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
        };
        F1Score { f1, tp, fp, fn_ }
    }
}

/// Size of a maximum one-to-one matching between the two peak sets, where
/// a pair may match when their Chebyshev distance is at most `tol`.
fn max_matching(pred: &[Peak], truth: &[Peak], tol: usize) -> usize {
    fn augment(
        p: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &t in &adj[p] {
            if seen[t] {
                continue;
            }
            seen[t] = true;
            if owner[t].is_none_or(|q| augment(q, adj, seen, owner)) {
                owner[t] = Some(p);
                return true;
            }
        }
        false
    }
    let adj: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| {
            let mut c: Vec<usize> = (0..truth.len())
                .filter(|&t| p.chebyshev(&truth[t]) <= tol)
                .collect();
            c.sort_by_key(|&t| p.chebyshev(&truth[t]));
            c
        })
        .collect();
    let mut owner = vec![None; truth.len()];
    let mut matched = 0;
    for p in 0..pred.len() {
        let mut seen = vec![false; truth.len()];
        if augment(p, &adj, &mut seen, &mut owner) {
            matched += 1;
        }
    }
    matched
}

/// F1 over peak sets with a ±`tol` cell matching window; `tol = 0` is exact
/// element-wise comparison.
pub fn f1_score(pred: &[Peak], truth: &[Peak], tol: usize) -> F1Score {
    let tp = max_matching(pred, truth, tol);
    F1Score::from_counts(tp, pred.len() - tp, truth.len() - tp)
}

fn peak_values<'a>(
    pred: &'a RdMap,
    clean: &'a RdMap,
    peaks: &'a [Peak],
) -> Result<impl Iterator<Item = (Complex32, Complex32)> + 'a> {
    clean.0.ensure_shape(pred.0.shape())?;
    if peaks.is_empty() {
        return Err(Error::Degenerate("empty ground-truth peak set".into()));
    }
    let na = clean.0.shape()[2];
    for p in peaks {
        if p.0 >= clean.0.shape()[0] || p.1 >= clean.0.shape()[1] {
            return Err(Error::InvalidArgument(format!(
                "peak {p:?} outside the map"
            )));
        }
    }
    Ok(peaks.iter().flat_map(move |p| {
        (0..na).map(move |a| (pred.0.get(&[p.0, p.1, a]), clean.0.get(&[p.0, p.1, a])))
    }))
}

/// Mean of `|S - Ŝ| / |S|` over antennas and ground-truth peaks.
pub fn evm(pred: &RdMap, clean: &RdMap, peaks: &[Peak]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, c) in peak_values(pred, clean, peaks)? {
        let denom = c.norm() as f64;
        if denom == 0.0 {
            return Err(Error::Degenerate(
                "ground truth has zero magnitude at a peak".into(),
            ));
        }
        sum += (c - p).norm() as f64 / denom;
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Wrapped phase difference in `[0, π]`.
pub fn wrapped_phase_error(a: f64, b: f64) -> f64 {
    let delta = (a - b).abs().rem_euclid(2.0 * PI);
    delta.min(2.0 * PI - delta)
}

/// Mean squared wrapped phase error over antennas and ground-truth peaks.
pub fn ppmse(pred: &RdMap, clean: &RdMap, peaks: &[Peak]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, c) in peak_values(pred, clean, peaks)? {
        if c.norm() == 0.0 {
            return Err(Error::Degenerate(
                "ground truth has zero magnitude at a peak".into(),
            ));
        }
        // a zero prediction has no phase; atan2(0, 0) = 0 is used
        let e = wrapped_phase_error(p.arg() as f64, c.arg() as f64);
        sum += e * e;
        count += 1;
    }
    Ok(sum / count as f64)
}

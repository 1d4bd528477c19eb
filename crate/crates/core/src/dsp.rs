//! Transforms between time cubes, multi-antenna range-Doppler maps and
//! range-Doppler-angle maps.
//!
//! Axis conventions for every rank-3 radar tensor are `[range/fast-time,
//! Doppler/slow-time, antenna/angle]`. The Doppler axis of an RD-map and the
//! angle axis of an RDA-map are fftshifted, so bin `N/2` is zero velocity
//! and boresight respectively.

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, Direction};
use num_complex::Complex32;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    /// Periodic Hann window on the fast- and slow-time axes.
    Hann2d,
}

/// Multi-antenna range-Doppler map `[N_R, N_D, N_A]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RdMap(pub ComplexTensor);

/// Range-Doppler-angle map `[N_R, N_D, N_θ]`, angle axis centred on boresight.
#[derive(Debug, Clone, PartialEq)]
pub struct RdaMap(pub ComplexTensor);

impl RdMap {
    pub fn tensor(&self) -> &ComplexTensor {
        &self.0
    }
    pub fn into_tensor(self) -> ComplexTensor {
        self.0
    }
}

impl RdaMap {
    pub fn tensor(&self) -> &ComplexTensor {
        &self.0
    }
    pub fn into_tensor(self) -> ComplexTensor {
        self.0
    }
}

/// Real-valued rank-2 map, row-major `[rows, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl PowerMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PowerMap {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Row-major position of the largest value (first on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }
}

fn ensure_rank3(t: &ComplexTensor) -> Result<()> {
    if t.rank() != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected a rank-3 radar tensor, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

pub fn hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()) as f32)
        .collect()
}

fn apply_time_window(cube: &ComplexTensor) -> ComplexTensor {
    let [nr, nd, na] = [cube.shape()[0], cube.shape()[1], cube.shape()[2]];
    let (wr, wd) = (hann(nr), hann(nd));
    let mut out = cube.clone();
    for (i, z) in out.data_mut().iter_mut().enumerate() {
        let r = i / (nd * na);
        let d = (i / na) % nd;
        *z *= wr[r] * wd[d];
    }
    out
}

/// Time cube `[N_R, N_D, N_A]` → per-antenna RD-maps.
pub fn time_to_rd(cube: &ComplexTensor, window: Window) -> Result<RdMap> {
    ensure_rank3(cube)?;
    let windowed;
    let src = match window {
        Window::None => cube,
        Window::Hann2d => {
            windowed = apply_time_window(cube);
            &windowed
        }
    };
    let rd = src
        .dft_axis(0, Direction::Forward)?
        .dft_axis(1, Direction::Forward)?
        .fftshift_axis(1)?;
    Ok(RdMap(rd))
}

/// Exact inverse of `time_to_rd(_, Window::None)`.
pub fn rd_to_time(rd: &RdMap) -> Result<ComplexTensor> {
    ensure_rank3(&rd.0)?;
    rd.0.ifftshift_axis(1)?
        .dft_axis(1, Direction::Inverse)?
        .dft_axis(0, Direction::Inverse)
}

/// Applies the periodic Hann window to an unwindowed RD-map directly in the
/// frequency domain: a 3-tap `[-1/4, 1/2, -1/4]` circular convolution along
/// range and Doppler. Equivalent to windowing the time cube before the DFT.
pub fn hann_in_frequency(rd: &RdMap) -> Result<RdMap> {
    ensure_rank3(&rd.0)?;
    let smooth = |t: &ComplexTensor, axis: usize| -> Result<ComplexTensor> {
        let prev = t.circular_shift(axis, 1)?;
        let next = t.circular_shift(axis, -1)?;
        let mut out = t.scale(0.5);
        for ((o, p), n) in out.data_mut().iter_mut().zip(prev.data()).zip(next.data()) {
            *o -= (p + n) * 0.25;
        }
        Ok(out)
    };
    Ok(RdMap(smooth(&smooth(&rd.0, 0)?, 1)?))
}

/// Unwindowed, non-zero-padded DFT over antennas, then centring of the angle axis.
pub fn rd_to_rda(rd: &RdMap) -> Result<RdaMap> {
    ensure_rank3(&rd.0)?;
    Ok(RdaMap(
        rd.0.dft_axis(2, Direction::Forward)?.fftshift_axis(2)?,
    ))
}

pub fn rda_to_rd(rda: &RdaMap) -> Result<RdMap> {
    ensure_rank3(&rda.0)?;
    Ok(RdMap(
        rda.0.ifftshift_axis(2)?.dft_axis(2, Direction::Inverse)?,
    ))
}

/// Full chain: time cube → RDA-map, no window.
pub fn time_to_rda(cube: &ComplexTensor) -> Result<RdaMap> {
    rd_to_rda(&time_to_rd(cube, Window::None)?)
}

/// Inverse of [`time_to_rda`].
pub fn rda_to_time(rda: &RdaMap) -> Result<ComplexTensor> {
    rd_to_time(&rda_to_rd(rda)?)
}

/// `out[r, d] = Σ_k |S[r, d, k]|²` over the last axis.
pub fn noncoherent_sum(t: &ComplexTensor) -> Result<PowerMap> {
    ensure_rank3(t)?;
    let [nr, nd, nk] = [t.shape()[0], t.shape()[1], t.shape()[2]];
    let mut out = PowerMap::zeros(nr, nd);
    for (cell, lane) in out.data.iter_mut().zip(t.data().chunks_exact(nk)) {
        *cell = lane.iter().map(|z| z.norm_sqr() as f64).sum();
    }
    Ok(out)
}

/// Angle spectrum of a single antenna snapshot, zero-padded to `n_out` bins
/// and centred. Display-only helper for the range-angle renderer.
pub fn upsampled_angle_spectrum(rd: &RdMap, n_out: usize) -> Result<ComplexTensor> {
    ensure_rank3(&rd.0)?;
    let na = rd.0.shape()[2];
    if n_out < na {
        return Err(Error::InvalidArgument(format!(
            "angle up-sampling to {n_out} bins is below the {na} antennas"
        )));
    }
    let [nr, nd] = [rd.0.shape()[0], rd.0.shape()[1]];
    let padded = ComplexTensor::from_fn(&[nr, nd, n_out], |i| {
        if i[2] < na {
            rd.0.get(&[i[0], i[1], i[2]])
        } else {
            Complex32::new(0.0, 0.0)
        }
    });
    padded.dft_axis(2, Direction::Forward)?.fftshift_axis(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_cube(shape: &[usize], seed: u64) -> ComplexTensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ComplexTensor::from_fn(shape, |_| {
            Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn rel(a: &ComplexTensor, b: &ComplexTensor) -> f64 {
        a.sub(b).unwrap().energy().sqrt() / b.energy().sqrt()
    }

    #[test]
    fn zero_cube_gives_zero_maps() {
        let z = ComplexTensor::zeros(&[8, 6, 4]);
        let rd = time_to_rd(&z, Window::Hann2d).unwrap();
        assert_eq!(rd.0.energy(), 0.0);
        let back = rda_to_rd(&RdaMap(z.clone())).unwrap();
        assert_eq!(back.0.energy(), 0.0);
        assert!(noncoherent_sum(&z).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parseval_per_antenna_without_window() {
        let cube = random_cube(&[12, 10, 3], 1);
        let rd = time_to_rd(&cube, Window::None).unwrap();
        for a in 0..3 {
            let e_t: f64 = (0..12)
                .flat_map(|r| (0..10).map(move |d| (r, d)))
                .map(|(r, d)| cube.get(&[r, d, a]).norm_sqr() as f64)
                .sum();
            let e_f: f64 = (0..12)
                .flat_map(|r| (0..10).map(move |d| (r, d)))
                .map(|(r, d)| rd.0.get(&[r, d, a]).norm_sqr() as f64)
                .sum();
            assert!((e_t * 120.0 - e_f).abs() < 1e-5 * e_f);
        }
    }

    #[test]
    fn frequency_domain_hann_matches_time_window() {
        let cube = random_cube(&[16, 12, 2], 5);
        let direct = time_to_rd(&cube, Window::Hann2d).unwrap();
        let via_freq = hann_in_frequency(&time_to_rd(&cube, Window::None).unwrap()).unwrap();
        assert!(rel(&via_freq.0, &direct.0) < 1e-5);
    }

    #[test]
    fn constant_antenna_lane_goes_to_boresight() {
        let rd = RdMap(ComplexTensor::from_fn(&[2, 2, 16], |_| {
            Complex32::new(1.0, 0.0)
        }));
        let rda = rd_to_rda(&rd).unwrap();
        for k in 0..16 {
            let expected = if k == 8 { 16.0 } else { 0.0 };
            assert!((rda.0.get(&[1, 0, k]).norm() - expected).abs() < 1e-5);
        }
    }

    #[test]
    fn steering_vector_lands_four_bins_off_centre() {
        // oracle: direct DFT of e^{jπ a sin θ}, peak offset N·0.5·sin θ = 4
        let theta = 30f64.to_radians();
        let rd = RdMap(ComplexTensor::from_fn(&[1, 1, 16], |i| {
            let ph = PI * i[2] as f64 * theta.sin();
            Complex32::new(ph.cos() as f32, ph.sin() as f32)
        }));
        let rda = rd_to_rda(&rd).unwrap();
        let p = noncoherent_sum(&RdaMap(rda.0.clone()).0).unwrap();
        assert_eq!(p.data.len(), 1);
        let best = (0..16)
            .max_by(|&a, &b| {
                rda.0
                    .get(&[0, 0, a])
                    .norm()
                    .total_cmp(&rda.0.get(&[0, 0, b]).norm())
            })
            .unwrap();
        assert_eq!(best, 12);
    }

    #[test]
    fn rd_rda_roundtrip() {
        let x = RdMap(random_cube(&[6, 5, 16], 2));
        let back = rda_to_rd(&rd_to_rda(&x).unwrap()).unwrap();
        assert!(rel(&back.0, &x.0) < 1e-6);
        let cube = random_cube(&[8, 6, 16], 3);
        let back = rda_to_time(&time_to_rda(&cube).unwrap()).unwrap();
        assert!(rel(&back, &cube) < 1e-6);
    }

    #[test]
    fn chain_is_linear() {
        let x = random_cube(&[8, 6, 4], 10);
        let y = random_cube(&[8, 6, 4], 11);
        let (a, b) = (0.7f32, -1.3f32);
        let lhs = time_to_rda(&x.scale(a).add(&y.scale(b)).unwrap())
            .unwrap()
            .0;
        let rhs = time_to_rda(&x)
            .unwrap()
            .0
            .scale(a)
            .add(&time_to_rda(&y).unwrap().0.scale(b))
            .unwrap();
        assert!(rel(&lhs, &rhs) < 1e-5);
    }

    #[test]
    fn noncoherent_sum_examples() {
        let ones = ComplexTensor::from_fn(&[3, 4, 16], |_| Complex32::new(1.0, 0.0));
        let p = noncoherent_sum(&ones).unwrap();
        assert!(p.data.iter().all(|&v| v == 16.0));

        // same integration before and after the angle DFT differs by N_θ
        let rd = RdMap(random_cube(&[4, 4, 16], 4));
        let rda = rd_to_rda(&rd).unwrap();
        let pre = noncoherent_sum(&rd.0).unwrap();
        let post = noncoherent_sum(&rda.0).unwrap();
        for (a, b) in pre.data.iter().zip(&post.data) {
            assert!((a * 16.0 - b).abs() < 1e-5 * b);
        }

        let shifted = rda.0.circular_shift(2, 5).unwrap();
        let p2 = noncoherent_sum(&shifted).unwrap();
        for (a, b) in post.data.iter().zip(&p2.data) {
            assert!((a - b).abs() <= 1e-9 * a.abs());
        }
        assert!(noncoherent_sum(&ComplexTensor::zeros(&[2, 2])).is_err());
    }
}

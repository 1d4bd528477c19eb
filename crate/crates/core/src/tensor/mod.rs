//! Dense complex tensors and the axis-wise operations the radar chain needs.

mod fft;
mod io;

pub use fft::{naive_dft, Direction, FftPlan};
pub use io::{read_crt1, read_crt1_file, write_crt1, write_crt1_file, CRT1_MAGIC};

use crate::error::{Error, Result};
use num_complex::{Complex32, Complex64};

/// Row-major rank-N array of `Complex32`, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<Complex32>,
}

impl ComplexTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        ComplexTensor {
            shape: shape.to_vec(),
            data: vec![Complex32::new(0.0, 0.0); len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<Complex32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "tensor shape must have positive axis lengths, got {shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(ComplexTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> Complex32) -> Self {
        let mut t = ComplexTensor::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex32> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for ax in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[ax] = strides[ax + 1] * self.shape[ax + 1];
        }
        strides
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (ax, &i) in index.iter().enumerate() {
            debug_assert!(i < self.shape[ax]);
            off = off * self.shape[ax] + i;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> Complex32 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: Complex32) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.rank() {
            return Err(Error::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        Ok(())
    }

    pub(crate) fn ensure_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(expected, &self.shape));
        }
        Ok(())
    }

    /// Applies `f` to every 1-D lane along `axis`. The closure receives the
    /// lane copied into a contiguous buffer and writes its result in place.
    fn map_lanes(&self, axis: usize, mut f: impl FnMut(&mut [Complex32])) -> ComplexTensor {
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let mut out = self.clone();
        let mut lane = vec![Complex32::new(0.0, 0.0); n];
        for o in 0..outer {
            let base = o * n * inner;
            for i in 0..inner {
                for (k, slot) in lane.iter_mut().enumerate() {
                    *slot = self.data[base + k * inner + i];
                }
                f(&mut lane);
                for (k, v) in lane.iter().enumerate() {
                    out.data[base + k * inner + i] = *v;
                }
            }
        }
        out
    }

    /// 1-D DFT along `axis` applied to every lane. Forward is unnormalized,
    /// inverse carries the `1/N` factor.
    pub fn dft_axis(&self, axis: usize, direction: Direction) -> Result<ComplexTensor> {
        self.check_axis(axis)?;
        let n = self.shape[axis];
        if n == 0 {
            return Err(Error::EmptyAxis(axis));
        }
        let plan = FftPlan::new(n);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        Ok(self.map_lanes(axis, |lane| {
            for (b, v) in buf.iter_mut().zip(lane.iter()) {
                *b = Complex64::new(v.re as f64, v.im as f64);
            }
            plan.process(&mut buf, direction);
            for (v, b) in lane.iter_mut().zip(buf.iter()) {
                *v = Complex32::new(b.re as f32, b.im as f32);
            }
        }))
    }

    /// Moves the element at index `i` to `(i + k) mod N` along `axis`.
    pub fn circular_shift(&self, axis: usize, k: isize) -> Result<ComplexTensor> {
        self.check_axis(axis)?;
        let n = self.shape[axis];
        let k = k.rem_euclid(n as isize) as usize;
        if k == 0 {
            return Ok(self.clone());
        }
        let mut tmp = vec![Complex32::new(0.0, 0.0); n];
        Ok(self.map_lanes(axis, |lane| {
            for (i, v) in lane.iter().enumerate() {
                tmp[(i + k) % n] = *v;
            }
            lane.copy_from_slice(&tmp);
        }))
    }

    /// Shift by `floor(N/2)`, putting the zero-frequency bin in the middle.
    pub fn fftshift_axis(&self, axis: usize) -> Result<ComplexTensor> {
        self.check_axis(axis)?;
        self.circular_shift(axis, (self.shape[axis] / 2) as isize)
    }

    /// Inverse of [`fftshift_axis`](Self::fftshift_axis), also for odd lengths.
    pub fn ifftshift_axis(&self, axis: usize) -> Result<ComplexTensor> {
        self.check_axis(axis)?;
        self.circular_shift(axis, -((self.shape[axis] / 2) as isize))
    }

    /// Sum of squared magnitudes, accumulated in `f64`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr() as f64).sum()
    }

    /// Mean squared magnitude per element.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f32::max)
    }

    pub fn scale(&self, factor: f32) -> ComplexTensor {
        self.map(|z| z * factor)
    }

    pub fn map(&self, f: impl Fn(Complex32) -> Complex32) -> ComplexTensor {
        ComplexTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &ComplexTensor,
        f: impl Fn(Complex32, Complex32) -> Complex32,
    ) -> Result<ComplexTensor> {
        other.ensure_shape(&self.shape)?;
        Ok(ComplexTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &ComplexTensor) -> Result<ComplexTensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexTensor) -> Result<ComplexTensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f32, im: f32) -> Complex32 {
        Complex32::new(re, im)
    }

    fn lane(values: &[f32]) -> ComplexTensor {
        ComplexTensor::from_vec(&[values.len()], values.iter().map(|&v| c(v, 0.0)).collect())
            .unwrap()
    }

    fn random_tensor(shape: &[usize], seed: u64) -> ComplexTensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ComplexTensor::from_fn(shape, |_| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn rel_err(a: &ComplexTensor, b: &ComplexTensor) -> f64 {
        a.sub(b).unwrap().energy().sqrt() / b.energy().sqrt().max(1e-30)
    }

    #[test]
    fn delta_transforms_to_constant() {
        let t = lane(&[1.0, 0.0, 0.0, 0.0]);
        let f = t.dft_axis(0, Direction::Forward).unwrap();
        for z in f.data() {
            assert!((z - c(1.0, 0.0)).norm() < 1e-7);
        }
    }

    #[test]
    fn roundtrip_length_96() {
        let x = random_tensor(&[96], 11);
        let y = x
            .dft_axis(0, Direction::Forward)
            .unwrap()
            .dft_axis(0, Direction::Inverse)
            .unwrap();
        assert!(rel_err(&y, &x) < 1e-6);
    }

    #[test]
    fn complex_exponential_lands_in_its_bin() {
        // oracle: direct O(N²) summation of the same lane
        let n = 16;
        let x = ComplexTensor::from_fn(&[n], |i| {
            let ph = 2.0 * PI * 3.0 * i[0] as f64 / n as f64;
            c(ph.cos() as f32, ph.sin() as f32)
        });
        let f = x.dft_axis(0, Direction::Forward).unwrap();
        let as64: Vec<Complex64> = x
            .data()
            .iter()
            .map(|z| Complex64::new(z.re as f64, z.im as f64))
            .collect();
        let reference = naive_dft(&as64, Direction::Forward);
        for (k, (got, want)) in f.data().iter().zip(&reference).enumerate() {
            assert!((got.re as f64 - want.re).abs() < 1e-4);
            assert!((got.im as f64 - want.im).abs() < 1e-4);
            let expected = if k == 3 { 16.0 } else { 0.0 };
            assert!((got.norm() as f64 - expected).abs() < 1e-4, "bin {k}");
        }
    }

    #[test]
    fn axis_errors() {
        let t = ComplexTensor::zeros(&[4, 4]);
        assert!(matches!(
            t.dft_axis(2, Direction::Forward),
            Err(Error::AxisOutOfRange { axis: 2, rank: 2 })
        ));
        assert!(t.circular_shift(5, 1).is_err());
        assert!(t.fftshift_axis(2).is_err());
        assert!(ComplexTensor::from_vec(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn circular_shift_examples() {
        let t = lane(&[1.0, 2.0, 3.0, 4.0]);
        let s = t.circular_shift(0, 1).unwrap();
        let re: Vec<f32> = s.data().iter().map(|z| z.re).collect();
        assert_eq!(re, vec![4.0, 1.0, 2.0, 3.0]);
        assert_eq!(t.circular_shift(0, 0).unwrap(), t);
        let x = random_tensor(&[3, 16], 2);
        let back = x
            .circular_shift(1, 5)
            .unwrap()
            .circular_shift(1, 11)
            .unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn fftshift_examples() {
        let t = lane(&[0.0, 1.0, 2.0, 3.0]);
        let re: Vec<f32> = t
            .fftshift_axis(0)
            .unwrap()
            .data()
            .iter()
            .map(|z| z.re)
            .collect();
        assert_eq!(re, vec![2.0, 3.0, 0.0, 1.0]);
        let x = random_tensor(&[16], 3);
        assert_eq!(x.fftshift_axis(0).unwrap().fftshift_axis(0).unwrap(), x);
        let mut delta = ComplexTensor::zeros(&[96]);
        delta.set(&[0], c(1.0, 0.0));
        let s = delta.fftshift_axis(0).unwrap();
        assert_eq!(s.get(&[48]), c(1.0, 0.0));
        let odd = random_tensor(&[7], 4);
        assert_eq!(
            odd.fftshift_axis(0).unwrap().ifftshift_axis(0).unwrap(),
            odd
        );
    }

    #[test]
    fn dft_on_middle_axis_only_touches_that_axis() {
        let x = random_tensor(&[3, 5, 4], 9);
        let f = x.dft_axis(1, Direction::Forward).unwrap();
        let lane_in: Vec<Complex64> = (0..5)
            .map(|k| {
                let z = x.get(&[2, k, 1]);
                Complex64::new(z.re as f64, z.im as f64)
            })
            .collect();
        let reference = naive_dft(&lane_in, Direction::Forward);
        for k in 0..5 {
            let z = f.get(&[2, k, 1]);
            assert!((z.re as f64 - reference[k].re).abs() < 1e-5);
            assert!((z.im as f64 - reference[k].im).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn parseval(seed in 0u64..1000, n in 1usize..64) {
            let x = random_tensor(&[n], seed);
            let f = x.dft_axis(0, Direction::Forward).unwrap();
            let lhs = x.energy() * n as f64;
            let rhs = f.energy();
            prop_assert!((lhs - rhs).abs() <= 1e-5 * lhs.max(1e-12));
        }

        #[test]
        fn linearity(seed in 0u64..1000, a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let x = random_tensor(&[2, 24], seed);
            let y = random_tensor(&[2, 24], seed + 7919);
            let combo = x.scale(a).add(&y.scale(b)).unwrap();
            let lhs = combo.dft_axis(1, Direction::Forward).unwrap();
            let rhs = x.dft_axis(1, Direction::Forward).unwrap().scale(a)
                .add(&y.dft_axis(1, Direction::Forward).unwrap().scale(b)).unwrap();
            let scale = rhs.energy().sqrt().max(1.0);
            prop_assert!(lhs.sub(&rhs).unwrap().energy().sqrt() <= 1e-5 * scale);
        }

        #[test]
        fn shift_theorem(seed in 0u64..1000, k in -20isize..20) {
            let n = 16;
            let x = random_tensor(&[n], seed);
            let lhs = x.circular_shift(0, k).unwrap().dft_axis(0, Direction::Forward).unwrap();
            let fx = x.dft_axis(0, Direction::Forward).unwrap();
            for m in 0..n {
                let ph = -2.0 * std::f32::consts::PI * (k * m as isize) as f32 / n as f32;
                let want = fx.get(&[m]) * Complex32::from_polar(1.0, ph);
                prop_assert!((lhs.get(&[m]) - want).norm() <= 1e-5 * fx.energy().sqrt() as f32 + 1e-5);
            }
        }

        #[test]
        fn shift_is_bijective(seed in 0u64..100, k in -40isize..40) {
            let x = random_tensor(&[4, 16], seed);
            let s = x.circular_shift(1, k).unwrap();
            prop_assert_eq!(s.circular_shift(1, -k).unwrap(), x);
        }
    }
}

//! One-dimensional DFT of arbitrary length.
//!
//! Lengths whose prime factors are all small are handled by a recursive
//! mixed-radix Cooley-Tukey decomposition. Any other length goes through
//! Bluestein's chirp-z identity, which re-expresses the transform as a
//! circular convolution of power-of-two length. All arithmetic is `f64`.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Largest prime factor handled by a direct radix butterfly.
const MAX_RADIX: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    MixedRadix {
        factors: Vec<usize>,
        /// `exp(-2πi k / len)` for `k in 0..len`.
        twiddles: Vec<Complex64>,
    },
    Bluestein {
        /// `exp(-iπ k² / len)` for `k in 0..len`.
        chirp: Vec<Complex64>,
        /// Forward transform of the conjugate chirp, wrapped to the inner length.
        kernel_spectrum: Vec<Complex64>,
        inner: Box<FftPlan>,
    },
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut factors = Vec::new();
    // radix-4 first keeps the recursion shallow for powers of two
    while n % 4 == 0 {
        factors.push(4);
        n /= 4;
    }
    let mut p = 2;
    while n > 1 {
        if p * p > n {
            factors.push(n);
            break;
        }
        while n % p == 0 {
            factors.push(p);
            n /= p;
        }
        p += 1;
    }
    factors
}

impl FftPlan {
    /// Builds a plan for transforms of length `len` (must be positive).
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let factors = factorize(len);
        if factors.iter().all(|&f| f <= MAX_RADIX) {
            let twiddles = (0..len)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / len as f64))
                .collect();
            return FftPlan {
                len,
                kind: PlanKind::MixedRadix { factors, twiddles },
            };
        }

        let inner_len = (2 * len - 1).next_power_of_two();
        let inner = FftPlan::new(inner_len);
        // k² mod 2len keeps the chirp argument small for large k
        let two_len = 2 * len as u128;
        let chirp: Vec<Complex64> = (0..len)
            .map(|k| {
                let k2 = (k as u128 * k as u128) % two_len;
                Complex64::from_polar(1.0, -PI * k2 as f64 / len as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); inner_len];
        kernel[0] = chirp[0].conj();
        for k in 1..len {
            kernel[k] = chirp[k].conj();
            kernel[inner_len - k] = chirp[k].conj();
        }
        inner.process(&mut kernel, Direction::Forward);
        FftPlan {
            len,
            kind: PlanKind::Bluestein {
                chirp,
                kernel_spectrum: kernel,
                inner: Box::new(inner),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// True when the plan falls back to the chirp-z path.
    pub fn is_bluestein(&self) -> bool {
        matches!(self.kind, PlanKind::Bluestein { .. })
    }

    /// In-place transform. The forward transform is unnormalized, the
    /// inverse is scaled by `1/len`.
    pub fn process(&self, data: &mut [Complex64], direction: Direction) {
        assert_eq!(data.len(), self.len, "buffer length does not match plan");
        if direction == Direction::Inverse {
            data.iter_mut().for_each(|z| *z = z.conj());
        }
        self.forward(data);
        if direction == Direction::Inverse {
            let scale = 1.0 / self.len as f64;
            data.iter_mut().for_each(|z| *z = z.conj() * scale);
        }
    }

    fn forward(&self, data: &mut [Complex64]) {
        match &self.kind {
            PlanKind::MixedRadix { factors, twiddles } => {
                let input = data.to_vec();
                let mut scratch = vec![Complex64::new(0.0, 0.0); MAX_RADIX.max(4)];
                mixed_radix(&input, 1, data, factors, twiddles, 1, &mut scratch);
            }
            PlanKind::Bluestein {
                chirp,
                kernel_spectrum,
                inner,
            } => {
                let m = inner.len;
                let mut buf = vec![Complex64::new(0.0, 0.0); m];
                for (k, (b, x)) in buf.iter_mut().zip(data.iter()).enumerate() {
                    *b = x * chirp[k];
                }
                inner.forward(&mut buf);
                for (b, h) in buf.iter_mut().zip(kernel_spectrum) {
                    *b *= h;
                }
                inner.process(&mut buf, Direction::Inverse);
                for (k, x) in data.iter_mut().enumerate() {
                    *x = buf[k] * chirp[k];
                }
            }
        }
    }
}

/// Decimation in time over `factors`. `input` is read with `stride`;
/// `tw_stride` maps the local length onto the full twiddle table.
fn mixed_radix(
    input: &[Complex64],
    stride: usize,
    out: &mut [Complex64],
    factors: &[usize],
    twiddles: &[Complex64],
    tw_stride: usize,
    scratch: &mut [Complex64],
) {
    let n = out.len();
    if n == 1 {
        out[0] = input[0];
        return;
    }
    let p = factors[0];
    let m = n / p;
    for q in 0..p {
        mixed_radix(
            &input[q * stride..],
            stride * p,
            &mut out[q * m..(q + 1) * m],
            &factors[1..],
            twiddles,
            tw_stride * p,
            scratch,
        );
    }

    let full = twiddles.len();
    for k in 0..m {
        for q in 0..p {
            let tw = twiddles[(q * k * tw_stride) % full];
            scratch[q] = out[q * m + k] * tw;
        }
        match p {
            2 => {
                let (a, b) = (scratch[0], scratch[1]);
                out[k] = a + b;
                out[k + m] = a - b;
            }
            4 => {
                let (a, b, c, d) = (scratch[0], scratch[1], scratch[2], scratch[3]);
                let s0 = a + c;
                let s1 = a - c;
                let s2 = b + d;
                // -i * (b - d)
                let t = b - d;
                let s3 = Complex64::new(t.im, -t.re);
                out[k] = s0 + s2;
                out[k + m] = s1 + s3;
                out[k + 2 * m] = s0 - s2;
                out[k + 3 * m] = s1 - s3;
            }
            _ => {
                let root_step = full / p;
                for s in 0..p {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (q, v) in scratch[..p].iter().enumerate() {
                        acc += v * twiddles[((q * s) % p) * root_step];
                    }
                    out[k + s * m] = acc;
                }
            }
        }
    }
}

/// Direct O(N²) DFT used as a reference.
pub fn naive_dft(x: &[Complex64], direction: Direction) -> Vec<Complex64> {
    let n = x.len();
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let mut out: Vec<Complex64> = (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, v)| {
                    let ang = sign * 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                    v * Complex64::from_polar(1.0, ang)
                })
                .sum()
        })
        .collect();
    if direction == Direction::Inverse {
        out.iter_mut().for_each(|z| *z /= n as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn matches_naive_for_many_lengths() {
        for n in [
            1, 2, 3, 4, 5, 6, 7, 8, 12, 16, 17, 30, 31, 96, 97, 128, 210, 257,
        ] {
            let x = random_signal(n, n as u64);
            let plan = FftPlan::new(n);
            let mut y = x.clone();
            plan.process(&mut y, Direction::Forward);
            let reference = naive_dft(&x, Direction::Forward);
            assert!(max_err(&y, &reference) < 1e-9 * n as f64, "n = {n}");
        }
    }

    #[test]
    fn large_primes_use_bluestein() {
        assert!(FftPlan::new(17).is_bluestein());
        assert!(FftPlan::new(257).is_bluestein());
        assert!(!FftPlan::new(96).is_bluestein());
        assert!(!FftPlan::new(13).is_bluestein());
    }

    #[test]
    fn inverse_roundtrip() {
        for n in [16, 96, 101] {
            let x = random_signal(n, 7);
            let plan = FftPlan::new(n);
            let mut y = x.clone();
            plan.process(&mut y, Direction::Forward);
            plan.process(&mut y, Direction::Inverse);
            assert!(max_err(&x, &y) < 1e-12);
        }
    }

    #[test]
    fn factorization_covers_required_sizes() {
        assert_eq!(factorize(96), vec![4, 4, 2, 3]);
        assert_eq!(factorize(16), vec![4, 4]);
        assert_eq!(factorize(17), vec![17]);
    }
}

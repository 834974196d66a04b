//! Radix-2 complex FFT for the periodic grids used in this crate.
//!
//! Grid sizes are powers of two by construction, so a plain iterative
//! Cooley-Tukey with a precomputed twiddle table covers every case. The
//! forward transform is the unnormalized DFT `X_k = sum_j x_j e^{-2 pi i jk/N}`;
//! the inverse divides by `N`.

use alloc::vec;
use alloc::vec::Vec;

use crate::mathfn;
use crate::Complex64;

/// Plan for a fixed power-of-two length.
#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    // twiddles[j] = e^{-2 pi i j / len}, j < len/2
    twiddles: Vec<Complex64>,
}

impl Fft {
    pub fn new(len: usize) -> Self {
        assert!(len.is_power_of_two() && len >= 2, "FFT length must be a power of two");
        let mut twiddles = Vec::with_capacity(len / 2);
        for j in 0..len / 2 {
            let angle = -2.0 * core::f64::consts::PI * j as f64 / len as f64;
            let (s, c) = mathfn::sin_cos(angle);
            twiddles.push(Complex64::new(c, s));
        }
        Fft { len, twiddles }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
        let scale = 1.0 / self.len as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], conjugate: bool) {
        let n = self.len;
        assert_eq!(buf.len(), n);
        bit_reverse_permute(buf);
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let tstep = n / size;
            let mut start = 0;
            while start < n {
                for j in 0..half {
                    let mut w = self.twiddles[j * tstep];
                    if conjugate {
                        w = w.conj();
                    }
                    let a = buf[start + j];
                    let b = buf[start + j + half] * w;
                    buf[start + j] = a + b;
                    buf[start + j + half] = a - b;
                }
                start += size;
            }
            size *= 2;
        }
    }
}

fn bit_reverse_permute(buf: &mut [Complex64]) {
    let n = buf.len();
    let shift = n.leading_zeros() + 1;
    for i in 0..n {
        let j = i.reverse_bits() >> shift;
        if j > i {
            buf.swap(i, j);
        }
    }
}

/// In-place transform along every axis of a hypercube grid with `dim` axes of
/// length `n` each, row-major (last axis contiguous).
pub fn transform_hypercube(values: &mut [Complex64], dim: usize, n: usize, forward: bool) {
    assert_eq!(values.len(), n.checked_pow(dim as u32).expect("grid size overflow"));
    let plan = Fft::new(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = stride * n;
        let blocks = values.len() / block;
        for b in 0..blocks {
            let base_block = b * block;
            if stride == 1 {
                let line = &mut values[base_block..base_block + n];
                if forward {
                    plan.forward(line);
                } else {
                    plan.inverse(line);
                }
            } else {
                for offset in 0..stride {
                    let base = base_block + offset;
                    for t in 0..n {
                        scratch[t] = values[base + t * stride];
                    }
                    if forward {
                        plan.forward(&mut scratch);
                    } else {
                        plan.inverse(&mut scratch);
                    }
                    for t in 0..n {
                        values[base + t * stride] = scratch[t];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, v) in x.iter().enumerate() {
                    let angle = -2.0 * core::f64::consts::PI * (j * k) as f64 / n as f64;
                    acc += v * Complex64::new(angle.cos(), angle.sin());
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = SplitMix64::new(42);
        let mut x: Vec<Complex64> = (0..32)
            .map(|_| Complex64::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)))
            .collect();
        let expected = naive_dft(&x);
        let plan = Fft::new(32);
        plan.forward(&mut x);
        for (a, b) in x.iter().zip(&expected) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut rng = SplitMix64::new(1);
        let orig: Vec<Complex64> = (0..128)
            .map(|_| Complex64::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)))
            .collect();
        let mut buf = orig.clone();
        let plan = Fft::new(128);
        plan.forward(&mut buf);
        plan.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn hypercube_round_trip_2d() {
        let mut rng = SplitMix64::new(9);
        let orig: Vec<Complex64> = (0..16 * 16)
            .map(|_| Complex64::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)))
            .collect();
        let mut buf = orig.clone();
        transform_hypercube(&mut buf, 2, 16, true);
        transform_hypercube(&mut buf, 2, 16, false);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn impulse_transforms_to_constant() {
        let mut buf = vec![Complex64::new(0.0, 0.0); 8];
        buf[0] = Complex64::new(1.0, 0.0);
        Fft::new(8).forward(&mut buf);
        for v in &buf {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }
}

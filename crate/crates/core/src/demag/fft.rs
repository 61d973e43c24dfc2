use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Planned complex FFTs along each axis of a fixed 3-D shape, with the
/// axis-0-fastest layout used throughout the crate.
pub(crate) struct Fft3 {
    dims: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims.map(|n| planner.plan_fft_forward(n));
        let inv = dims.map(|n| planner.plan_fft_inverse(n));
        Self { dims, fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn forward(&self, data: &mut [Complex<f64>]) {
        for axis in 0..3 {
            self.apply(axis, true, data);
        }
    }

    /// Unnormalized inverse; callers divide by `len()`.
    pub fn inverse(&self, data: &mut [Complex<f64>]) {
        for axis in 0..3 {
            self.apply(axis, false, data);
        }
    }

    fn apply(&self, axis: usize, forward: bool, data: &mut [Complex<f64>]) {
        assert_eq!(data.len(), self.len());
        let [n0, n1, n2] = self.dims;
        let fft = if forward { &self.fwd[axis] } else { &self.inv[axis] };
        match axis {
            // lines along axis 0 are contiguous and in order
            0 => fft.process(data),
            1 => {
                let mut line = vec![Complex::default(); n1];
                for k in 0..n2 {
                    for i in 0..n0 {
                        let base = i + n0 * n1 * k;
                        for (j, v) in line.iter_mut().enumerate() {
                            *v = data[base + j * n0];
                        }
                        fft.process(&mut line);
                        for (j, v) in line.iter().enumerate() {
                            data[base + j * n0] = *v;
                        }
                    }
                }
            }
            _ => {
                let stride = n0 * n1;
                let mut line = vec![Complex::default(); n2];
                for j in 0..n1 {
                    for i in 0..n0 {
                        let base = i + n0 * j;
                        for (k, v) in line.iter_mut().enumerate() {
                            *v = data[base + k * stride];
                        }
                        fft.process(&mut line);
                        for (k, v) in line.iter().enumerate() {
                            data[base + k * stride] = *v;
                        }
                    }
                }
            }
        }
    }
}

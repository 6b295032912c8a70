//! Spectral building blocks: sub-cell translations of periodic lines and
//! spectral gradients of periodic 2D fields.

use std::f64::consts::PI;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Translates real periodic lines of fixed length by arbitrary (fractional)
/// numbers of cells using the trigonometric interpolant.
///
/// `shift(line, s)` replaces `line[j]` by the interpolant evaluated at
/// `j - s`, i.e. content moves towards larger indices for `s > 0`. The mean
/// (zero mode) of the line is preserved exactly.
pub struct LineShifter {
    n: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    spectrum: Vec<Complex64>,
    phase: Vec<Complex64>,
    scratch_fwd: Vec<Complex64>,
    scratch_inv: Vec<Complex64>,
    work: Vec<f64>,
    phase_shift: f64,
}

impl LineShifter {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n.is_multiple_of(2), "line length must be even");
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let spectrum = forward.make_output_vec();
        let scratch_fwd = forward.make_scratch_vec();
        let scratch_inv = inverse.make_scratch_vec();
        Self {
            n,
            forward,
            inverse,
            phase: vec![Complex64::new(1.0, 0.0); spectrum.len()],
            spectrum,
            scratch_fwd,
            scratch_inv,
            work: vec![0.0; n],
            phase_shift: 0.0,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn set_phase(&mut self, shift_cells: f64) {
        if self.phase_shift.to_bits() == shift_cells.to_bits() {
            return;
        }
        let n = self.n;
        let half = n / 2;
        let base = -2.0 * PI * shift_cells / n as f64;
        let step = Complex64::new(base.cos(), base.sin());
        // Re-anchor the recurrence every few modes to bound round-off growth.
        for k in 0..=half {
            self.phase[k] = if k % 8 == 0 {
                let angle = base * k as f64;
                Complex64::new(angle.cos(), angle.sin())
            } else {
                self.phase[k - 1] * step
            };
        }
        // The Nyquist mode of a real signal must stay real.
        self.phase[half] = Complex64::new((base * half as f64).cos(), 0.0);
        self.phase_shift = shift_cells;
    }

    /// Shifts `line` in place by `shift_cells`.
    pub fn shift(&mut self, line: &mut [f64], shift_cells: f64) {
        debug_assert_eq!(line.len(), self.n);
        if shift_cells == 0.0 {
            return;
        }
        self.set_phase(shift_cells);
        self.work.copy_from_slice(line);
        self.forward
            .process_with_scratch(&mut self.work, &mut self.spectrum, &mut self.scratch_fwd)
            .expect("forward real FFT length mismatch");
        for (c, p) in self.spectrum.iter_mut().zip(&self.phase) {
            *c *= p;
        }
        let last = self.spectrum.len() - 1;
        self.spectrum[0].im = 0.0;
        self.spectrum[last].im = 0.0;
        self.inverse
            .process_with_scratch(&mut self.spectrum, line, &mut self.scratch_inv)
            .expect("inverse real FFT length mismatch");
        let scale = 1.0 / self.n as f64;
        for v in line.iter_mut() {
            *v *= scale;
        }
    }
}

/// Transposes the `n x n` row-major block `src` into `dst`.
pub fn transpose_square(src: &[f64], dst: &mut [f64], n: usize) {
    debug_assert!(src.len() == n * n && dst.len() == n * n);
    const TILE: usize = 16;
    for i0 in (0..n).step_by(TILE) {
        for j0 in (0..n).step_by(TILE) {
            for i in i0..(i0 + TILE).min(n) {
                for j in j0..(j0 + TILE).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

/// Uniform 2D translation of an `n x n` block: `block[i][j]` becomes the
/// interpolant at `(i - s0, j - s1)` (shifts in cells).
pub fn shift_block(
    shifter: &mut LineShifter,
    block: &mut [f64],
    tmp: &mut [f64],
    n: usize,
    s0: f64,
    s1: f64,
) {
    if s1 != 0.0 {
        for row in block.chunks_exact_mut(n) {
            shifter.shift(row, s1);
        }
    }
    if s0 != 0.0 {
        transpose_square(block, tmp, n);
        for row in tmp.chunks_exact_mut(n) {
            shifter.shift(row, s0);
        }
        transpose_square(tmp, block, n);
    }
}

/// Signed integer wavenumber of FFT bin `k` for length `n`.
#[inline]
pub fn signed_mode(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Spectral gradient of a periodic field sampled on an `n x n` grid of
/// spacing `h` (row-major, first index along x1). The Nyquist modes are
/// dropped from the derivative.
pub fn spectral_gradient(values: &[f64], n: usize, h: f64) -> [Vec<f64>; 2] {
    assert_eq!(values.len(), n * n);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut spec: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut spec, n, fwd.as_ref());

    let dk = 2.0 * PI / (n as f64 * h);
    let mut out = [Vec::new(), Vec::new()];
    for (axis, slot) in out.iter_mut().enumerate() {
        let mut d = spec.clone();
        for k1 in 0..n {
            for k2 in 0..n {
                let k = if axis == 0 { k1 } else { k2 };
                let m = if k == n / 2 { 0 } else { signed_mode(k, n) };
                d[k1 * n + k2] *= Complex64::new(0.0, dk * m as f64);
            }
        }
        fft2(&mut d, n, inv.as_ref());
        let scale = 1.0 / (n * n) as f64;
        *slot = d.iter().map(|c| c.re * scale).collect();
    }
    out
}

/// In-place unnormalized 2D FFT of an `n x n` complex array.
pub fn fft2(data: &mut [Complex64], n: usize, plan: &dyn rustfft::Fft<f64>) {
    for row in data.chunks_exact_mut(n) {
        plan.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        plan.process(&mut col);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

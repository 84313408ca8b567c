//! Overlap-save FFT cross-correlation.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use spikedict_core::conv::{Correlator, DirectCorrelator};

/// Templates at most this long are correlated in the time domain by [`AutoCorrelator`].
pub const DIRECT_MAX_TEMPLATE: usize = 64;

/// Cross-correlation by blocks of a fixed FFT length.
#[derive(Clone)]
pub struct FftCorrelator {
    block: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftCorrelator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftCorrelator").field("block", &self.block).finish()
    }
}

impl FftCorrelator {
    /// `block` must exceed the longest template it will see.
    pub fn new(block: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            block,
            forward: planner.plan_fft_forward(block),
            inverse: planner.plan_fft_inverse(block),
        }
    }

    /// Block length of `4·l` rounded up to a power of two.
    pub fn for_template_length(l: usize) -> Self {
        Self::new((4 * l.max(1)).next_power_of_two())
    }

    pub fn block(&self) -> usize {
        self.block
    }
}

impl Correlator for FftCorrelator {
    fn correlate_into(&self, h: &[f64], r: &[f64], out: &mut [f64]) {
        let l = h.len();
        let n = self.block;
        if l >= n {
            DirectCorrelator.correlate_into(h, r, out);
            return;
        }
        let mut spec: Vec<Complex<f64>> = (0..n)
            .map(|i| Complex::new(h.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.forward.process(&mut spec);
        spec.iter_mut().for_each(|v| *v = v.conj());
        let step = n - l + 1;
        let scale = 1.0 / n as f64;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut start = 0;
        while start < out.len() {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(r.get(start + i).copied().unwrap_or(0.0), 0.0);
            }
            self.forward.process(&mut buf);
            for (b, s) in buf.iter_mut().zip(&spec) {
                *b *= s;
            }
            self.inverse.process(&mut buf);
            let take = step.min(out.len() - start);
            for (o, b) in out[start..start + take].iter_mut().zip(&buf) {
                *o = b.re * scale;
            }
            start += step;
        }
    }
}

/// Direct kernel for short templates, FFT otherwise.
#[derive(Debug, Clone)]
pub struct AutoCorrelator {
    fft: Option<FftCorrelator>,
}

impl AutoCorrelator {
    pub fn for_template_length(l: usize) -> Self {
        Self {
            fft: (l > DIRECT_MAX_TEMPLATE).then(|| FftCorrelator::for_template_length(l)),
        }
    }
}

impl Correlator for AutoCorrelator {
    fn correlate_into(&self, h: &[f64], r: &[f64], out: &mut [f64]) {
        match &self.fft {
            Some(f) => f.correlate_into(h, r, out),
            None => DirectCorrelator.correlate_into(h, r, out),
        }
    }
}

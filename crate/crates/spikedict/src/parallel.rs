//! Window-parallel cOMP.

use rayon::prelude::*;
use spikedict_core::omp::{merge_windows, ConvCoder, StoppingRule, WindowEncoder};
use spikedict_core::signal::{Dictionary, EventList, WindowedSignal};
use spikedict_core::Result;

use crate::fft::AutoCorrelator;

/// Codes windows on the rayon pool; output is merged in window order, so it
/// does not depend on scheduling.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParallelEncoder;

impl WindowEncoder for ParallelEncoder {
    fn encode_all(&self, y: &WindowedSignal, d: &Dictionary, stop: &StoppingRule) -> Result<EventList> {
        let kernel = AutoCorrelator::for_template_length(d.template_length());
        let coder = ConvCoder::with_kernel(d, &kernel);
        let w = y.window_length();
        let codes: Vec<Result<EventList>> = y
            .concatenated()
            .par_chunks_exact(w.max(1))
            .map(|col| coder.encode(col, stop))
            .collect();
        merge_windows(w, codes)
    }
}

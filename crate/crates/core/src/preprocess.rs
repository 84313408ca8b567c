//! Recording preprocessing: zero-phase highpass, background-noise estimate,
//! detection threshold and data-driven dictionary initialization.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{detect_threshold_crossings, snippet_start};
use crate::math;
use crate::signal::{atom_distance, normalize_template, Dictionary, Signal, Template};

/// Quality factors of the two second-order sections of a 4th-order Butterworth.
const BUTTERWORTH4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_377];

/// Gaussian consistency constant of the median absolute deviation.
pub const MAD_SCALE: f64 = 0.6745;
pub const DEFAULT_THRESHOLD_MULTIPLIER: f64 = 4.0;
pub const DEFAULT_QUIET_MS: f64 = 500.0;

/// Transposed direct-form II biquad, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Bilinear-transform highpass with pre-warped cutoff.
    pub fn highpass(cutoff_hz: f64, sampling_rate_hz: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / sampling_rate_hz;
        let (sn, cs) = (math::sin(w0), math::cos(w0));
        let alpha = sn / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 + cs) / 2.0 / a0, -(1.0 + cs) / a0, (1.0 + cs) / 2.0 / a0],
            a: [-2.0 * cs / a0, (1.0 - alpha) / a0],
        }
    }

    /// DC gain.
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Filters in place, starting from the steady state for a constant input `x[0]`.
    pub fn apply(&self, x: &mut [f64]) {
        let Some(&u) = x.first() else { return };
        let g = self.dc_gain();
        let mut z1 = (g - self.b[0]) * u;
        let mut z2 = (self.b[2] - self.a[1] * g) * u;
        for v in x.iter_mut() {
            let xin = *v;
            let y = self.b[0] * xin + z1;
            z1 = self.b[1] * xin - self.a[0] * y + z2;
            z2 = self.b[2] * xin - self.a[1] * y;
            *v = y;
        }
    }
}

/// Zero-phase 4th-order Butterworth highpass (each section run forward and
/// backward over an odd-reflected extension of the signal).
pub fn highpass(signal: &Signal, cutoff_hz: f64) -> Result<Signal> {
    let fs = signal.sampling_rate_hz();
    if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
        return Err(Error::Filter("cutoff must lie in (0, fs/2)"));
    }
    let x = signal.samples();
    let n = x.len();
    if n < 2 {
        return Signal::new(x.to_vec(), fs);
    }
    let pad = (3.0 * math::ceil(fs / cutoff_hz)).max(15.0) as usize;
    let pad = pad.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let sections: Vec<Biquad> = BUTTERWORTH4_Q.iter().map(|&q| Biquad::highpass(cutoff_hz, fs, q)).collect();
    for s in &sections {
        s.apply(&mut ext);
    }
    ext.reverse();
    for s in &sections {
        s.apply(&mut ext);
    }
    ext.reverse();
    Signal::new(ext[pad..pad + n].to_vec(), fs)
}

/// Standard deviation of the first stretch of at least `quiet_ms` during
/// which `|x| < threshold` (the whole maximal stretch is used).
pub fn estimate_noise_floor(signal: &Signal, threshold: f64, quiet_ms: f64) -> Result<f64> {
    if !(quiet_ms > 0.0) {
        return Err(Error::Domain("quiet duration must be positive"));
    }
    let need = math::ceil(quiet_ms * 1e-3 * signal.sampling_rate_hz()).max(2.0) as usize;
    let x = signal.samples();
    let mut start = 0;
    while start < x.len() {
        if math::abs(x[start]) >= threshold {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < x.len() && math::abs(x[end]) < threshold {
            end += 1;
        }
        if end - start >= need {
            return Ok(sample_std(&x[start..end]));
        }
        start = end;
    }
    Err(Error::NoQuietSegment)
}

fn sample_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    math::sqrt(x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
}

/// `multiplier · MAD / 0.6745`, MAD taken about the median.
pub fn mad_threshold(x: &[f64], multiplier: f64) -> f64 {
    let med = math::median(x);
    let dev: Vec<f64> = x.iter().map(|v| math::abs(v - med)).collect();
    multiplier * math::median(&dev) / MAD_SCALE
}

/// Removes `[start_s, end_s)` (seconds) from the recording.
pub fn exclude_segment(signal: &Signal, start_s: f64, end_s: f64) -> Result<Signal> {
    if !(start_s >= 0.0 && end_s > start_s) {
        return Err(Error::Domain("excluded segment must satisfy 0 <= start < end"));
    }
    let fs = signal.sampling_rate_hz();
    let n = signal.len();
    let a = (math::round(start_s * fs) as usize).min(n);
    let b = (math::round(end_s * fs) as usize).min(n);
    let mut out = signal.samples()[..a].to_vec();
    out.extend_from_slice(&signal.samples()[b..]);
    Signal::new(out, fs)
}

/// Greedy max-min selection of `count` templates under [`atom_distance`].
///
/// Candidates are put in a canonical order first, so the result depends
/// only on the candidate set and `seed`.
pub fn select_farthest(mut candidates: Vec<Template>, count: usize, seed: u64) -> Result<Vec<Template>> {
    if candidates.len() < count {
        return Err(Error::InsufficientEvents {
            found: candidates.len(),
            needed: count,
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    candidates.sort_by(|a, b| {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..candidates.len());
    let mut chosen = alloc::vec![first];
    let mut min_d: Vec<f64> = candidates
        .iter()
        .map(|t| atom_distance(t.values(), candidates[first].values()))
        .collect();
    while chosen.len() < count {
        let mut far = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[far] {
                far = i;
            }
        }
        chosen.push(far);
        for (i, t) in candidates.iter().enumerate() {
            min_d[i] = min_d[i].min(atom_distance(t.values(), candidates[far].values()));
        }
    }
    Ok(chosen.into_iter().map(|i| candidates[i].clone()).collect())
}

/// Threshold-crossing snippets of length `l`, each normalized to unit norm.
pub fn crossing_snippets(x: &[f64], l: usize, threshold: f64) -> Result<Vec<Template>> {
    let peaks = detect_threshold_crossings(x, threshold, l)?;
    Ok(peaks
        .into_iter()
        .filter_map(|p| snippet_start(p, l))
        .filter(|&s| s + l <= x.len())
        .filter_map(|s| normalize_template(&x[s..s + l]).ok())
        .collect())
}

/// `C` mutually distant threshold-crossing snippets as the initial dictionary.
pub fn init_dictionary_from_data(x: &[f64], neurons: usize, l: usize, threshold: f64, seed: u64) -> Result<Dictionary> {
    let snippets = crossing_snippets(x, l, threshold)?;
    Dictionary::new(select_farthest(snippets, neurons, seed)?)
}

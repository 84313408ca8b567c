//! Synthetic ground-truthed recordings: refractory spike trains, template
//! rendering, Gaussian noise at a target SNR and dictionary perturbation.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::conv::add_events;
use crate::error::{Error, Result};
use crate::math;
use crate::signal::{error_distance, Dictionary, Event, EventList, WindowedSignal};

/// Half-width of the accepted band around the perturbation target.
pub const PERTURBATION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dictionary: Dictionary,
    pub num_windows: usize,
    pub window_length: usize,
    pub sampling_rate_hz: f64,
    /// One rate per neuron.
    pub firing_rate_hz: Vec<f64>,
    /// Range of the rendered peak value of each spike (signed, e.g. mV).
    pub amplitude_range: (f64, f64),
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub seed: u64,
    /// Number of spike-free windows at the start of the recording.
    pub silent_leading_windows: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let l = self.dictionary.template_length();
        if self.window_length <= l {
            return Err(Error::InvalidWindowLength {
                window: self.window_length,
                samples: l,
            });
        }
        if self.firing_rate_hz.len() != self.dictionary.num_atoms() {
            return Err(Error::ShapeMismatch("one firing rate per neuron"));
        }
        if self.firing_rate_hz.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Domain("firing rates must be positive"));
        }
        let (lo, hi) = self.amplitude_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Domain("amplitude range must satisfy lo <= hi"));
        }
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return Err(Error::Domain("sampling rate must be positive"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Domain("snr_db must be a number"));
        }
        if self.num_windows == 0 {
            return Err(Error::Domain("at least one window"));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.num_windows * self.window_length
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub clean: WindowedSignal,
    pub noisy: WindowedSignal,
    pub events: EventList,
    pub noise_sigma: f64,
}

/// Poisson arrivals at `rate_hz`, dead-time thinned so that kept positions
/// are at least `refractory` samples apart; positions lie in
/// `0..=duration_samples - refractory`.
pub fn gen_spike_train<R: Rng + ?Sized>(
    rate_hz: f64,
    duration_samples: usize,
    refractory: usize,
    sampling_rate_hz: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(rate_hz.is_finite() && rate_hz >= 0.0) || !(sampling_rate_hz > 0.0) {
        return Err(Error::Domain("rate and sampling rate must be nonnegative"));
    }
    if rate_hz * refractory as f64 / sampling_rate_hz >= 1.0 {
        return Err(Error::InfeasibleRate);
    }
    if rate_hz == 0.0 || duration_samples < refractory {
        return Ok(Vec::new());
    }
    let last = (duration_samples - refractory) as f64;
    let gap = Exp::new(rate_hz / sampling_rate_hz).map_err(|_| Error::Domain("rate"))?;
    let mut out: Vec<usize> = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t > last + 1.0 {
            break;
        }
        let p = t as usize;
        if p as f64 > last {
            break;
        }
        if out.last().is_none_or(|&q| p >= q + refractory) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Seeded convenience wrapper around [`gen_spike_train`].
pub fn gen_spike_train_seeded(
    rate_hz: f64,
    duration_samples: usize,
    refractory: usize,
    sampling_rate_hz: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    gen_spike_train(rate_hz, duration_samples, refractory, sampling_rate_hz, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Code amplitude that makes the rendered waveform peak at `peak`.
pub fn code_amplitude(d: &Dictionary, neuron: usize, peak: f64) -> f64 {
    peak / d.template(neuron).peak().1
}

/// `Σ amplitude · shift(template)` over all events, cut into windows.
pub fn render(d: &Dictionary, events: &EventList, num_windows: usize, window_length: usize) -> Result<WindowedSignal> {
    let l = d.template_length();
    for e in events.iter() {
        if window_length < l || e.position % window_length > window_length - l || e.position / window_length >= num_windows {
            return Err(Error::InvalidEvent {
                neuron: e.neuron,
                position: e.position,
            });
        }
    }
    let mut out = vec![0.0; num_windows * window_length];
    add_events(d, events.events(), &mut out)?;
    WindowedSignal::from_columns(out, window_length)
}

/// Mean squared value of `clean` over the union of the event supports.
pub fn spike_power(clean: &[f64], events: &EventList, template_length: usize) -> f64 {
    let mut covered = vec![false; clean.len()];
    for e in events.iter() {
        let end = (e.position + template_length).min(clean.len());
        for flag in &mut covered[e.position.min(end)..end] {
            *flag = true;
        }
    }
    let (sum, count) = clean
        .iter()
        .zip(&covered)
        .filter(|(_, &c)| c)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v * v, n + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Noise standard deviation giving `snr_db` against `power`.
pub fn noise_sigma(power: f64, snr_db: f64) -> Result<f64> {
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    if !(power > 0.0) {
        return Err(Error::UndefinedSnr);
    }
    Ok(math::sqrt(power / math::powf(10.0, snr_db / 10.0)))
}

/// Adds i.i.d. Gaussian noise calibrated against the spike-support power.
pub fn add_noise<R: Rng + ?Sized>(
    clean: &[f64],
    events: &EventList,
    template_length: usize,
    snr_db: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let sigma = noise_sigma(spike_power(clean, events, template_length), snr_db)?;
    if sigma == 0.0 {
        return Ok((clean.to_vec(), 0.0));
    }
    let noisy = clean
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            v + sigma * z
        })
        .collect();
    Ok((noisy, sigma))
}

/// Full simulation: trains per window and neuron, per-event peak draws,
/// rendering and noise, all from `cfg.seed`.
pub fn simulate(cfg: &SimConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let d = &cfg.dictionary;
    let l = d.template_length();
    let w = cfg.window_length;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = cfg.amplitude_range;
    let mut events = Vec::new();
    for j in cfg.silent_leading_windows.min(cfg.num_windows)..cfg.num_windows {
        for (c, &rate) in cfg.firing_rate_hz.iter().enumerate() {
            let train = gen_spike_train(rate, w, l, cfg.sampling_rate_hz, &mut rng)?;
            for p in train {
                let peak = if lo == hi { lo } else { rng.random_range(lo..=hi) };
                events.push(Event::new(c, j * w + p, code_amplitude(d, c, peak)));
            }
        }
    }
    let events = EventList::new(events)?;
    let clean = render(d, &events, cfg.num_windows, w)?;
    let (noisy, sigma) = add_noise(clean.concatenated(), &events, l, cfg.snr_db, &mut rng)?;
    Ok(GroundTruth {
        noisy: WindowedSignal::from_columns(noisy, w)?,
        clean,
        events,
        noise_sigma: sigma,
    })
}

/// Adds a common multiple of fixed Gaussian draws to every template and
/// renormalizes, choosing the multiple by bisection so that the error
/// distance to `d` lands within ±0.01 of `target_err`.
pub fn perturb_dictionary(d: &Dictionary, target_err: f64, seed: u64) -> Result<Dictionary> {
    if !(target_err >= 0.0) {
        return Err(Error::Domain("target error must be nonnegative"));
    }
    if target_err >= 1.0 {
        return Err(Error::UnreachablePerturbation);
    }
    if target_err == 0.0 {
        return Ok(d.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = d.template_length();
    let apply = |noise: &[Vec<f64>], scale: f64| -> Result<(Dictionary, f64)> {
        let rows: Vec<Vec<f64>> = d
            .templates()
            .iter()
            .zip(noise)
            .map(|(t, n)| t.values().iter().zip(n).map(|(a, b)| a + scale * b).collect())
            .collect();
        let out = Dictionary::from_rows(&rows)?;
        let err = error_distance(&out, d)?;
        Ok((out, err))
    };
    for _attempt in 0..32 {
        let noise: Vec<Vec<f64>> = (0..d.num_atoms())
            .map(|_| (0..l).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let (mut lo, mut hi) = (0.0, 1.0 / math::sqrt(l as f64));
        let mut found = false;
        for _ in 0..60 {
            match apply(&noise, hi) {
                Ok((out, err)) if (err - target_err).abs() <= PERTURBATION_TOLERANCE => return Ok(out),
                Ok((_, err)) if err > target_err => {
                    found = true;
                    break;
                }
                Ok(_) => {
                    lo = hi;
                    hi *= 2.0;
                }
                Err(_) => break,
            }
        }
        if !found {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let (out, err) = apply(&noise, mid)?;
            if (err - target_err).abs() <= PERTURBATION_TOLERANCE {
                return Ok(out);
            }
            if err > target_err {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    Err(Error::UnreachablePerturbation)
}

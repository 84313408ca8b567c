//! Glue between files, configuration and the core algorithms.

use spikedict_core::cksvd::{learn_with, LearnConfig, LearnResult};
use spikedict_core::eval::{
    assign_clusters, baseline_sort, rendered_peak, threshold_sweep, BaselineConfig, BaselineResult, SortReport,
};
use spikedict_core::omp::{StoppingRule, WindowEncoder};
use spikedict_core::preprocess::{estimate_noise_floor, exclude_segment, highpass, mad_threshold};
use spikedict_core::signal::{window, Dictionary, EventList, Signal};
use spikedict_core::Error as CoreError;

use crate::config::{BaselineSection, CodingSection, LearnSection, PreprocessSection};
use crate::error::{Error, Result};
use crate::parallel::ParallelEncoder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    QuietSegment,
    Mad,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NoiseEstimate {
    /// Detection threshold `k·MAD/0.6745`.
    pub threshold: f64,
    pub sigma: f64,
    pub source: NoiseSource,
}

/// Noise level from the first quiet stretch below the MAD threshold, or
/// `MAD/0.6745` when the recording has none.
pub fn estimate_noise(signal: &Signal, multiplier: f64, quiet_ms: f64) -> Result<NoiseEstimate> {
    let threshold = mad_threshold(signal.samples(), multiplier);
    match estimate_noise_floor(signal, threshold, quiet_ms) {
        Ok(sigma) => Ok(NoiseEstimate {
            threshold,
            sigma,
            source: NoiseSource::QuietSegment,
        }),
        Err(CoreError::NoQuietSegment) => Ok(NoiseEstimate {
            threshold,
            sigma: threshold / multiplier,
            source: NoiseSource::Mad,
        }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PreprocessReport {
    pub sampling_rate_hz: f64,
    pub num_samples: usize,
    pub cutoff_hz: f64,
    pub excluded_s: Vec<[f64; 2]>,
    pub threshold: f64,
    pub noise_sigma: f64,
    pub noise_source: NoiseSource,
}

/// Segment removal (later segments first, so earlier times stay valid),
/// zero-phase highpass, then the noise report.
pub fn preprocess(signal: &Signal, cfg: &PreprocessSection) -> Result<(Signal, PreprocessReport)> {
    let mut segments = cfg.exclude.clone();
    segments.sort_by(|a, b| b[0].total_cmp(&a[0]));
    let mut cut = signal.clone();
    for [start, end] in &segments {
        cut = exclude_segment(&cut, *start, *end)?;
    }
    let filtered = highpass(&cut, cfg.highpass_hz)?;
    let noise = estimate_noise(&filtered, cfg.threshold_multiplier, cfg.quiet_ms)?;
    let report = PreprocessReport {
        sampling_rate_hz: filtered.sampling_rate_hz(),
        num_samples: filtered.len(),
        cutoff_hz: cfg.highpass_hz,
        excluded_s: cfg.exclude.clone(),
        threshold: noise.threshold,
        noise_sigma: noise.sigma,
        noise_source: noise.source,
    };
    Ok((filtered, report))
}

/// One second of samples, or the whole signal if shorter.
pub fn default_window_length(signal: &Signal) -> usize {
    (signal.sampling_rate_hz().round() as usize).clamp(1, signal.len().max(1))
}

/// Builds the stopping rule. The residual threshold is taken as given, else
/// `σ·√W` with σ given or estimated; with only a sparsity cap it is 0.
pub fn stopping_rule(
    coding: &CodingSection,
    signal: &Signal,
    pre: &PreprocessSection,
    window_length: usize,
) -> Result<(StoppingRule, Option<f64>)> {
    let sigma = match (coding.residual_threshold, coding.noise_sigma, coding.max_sparsity) {
        (Some(_), _, _) => None,
        (None, Some(s), _) => Some(s),
        (None, None, Some(_)) => None,
        (None, None, None) => Some(estimate_noise(signal, pre.threshold_multiplier, pre.quiet_ms)?.sigma),
    };
    let threshold = match (coding.residual_threshold, sigma) {
        (Some(t), _) => t,
        (None, Some(s)) => s * (window_length as f64).sqrt(),
        (None, None) => 0.0,
    };
    Ok((StoppingRule::new(coding.max_sparsity, threshold)?, sigma))
}

/// cOMP over all windows of `signal`, in parallel; positions are global.
pub fn sort_signal(signal: &Signal, d: &Dictionary, window_length: usize, stop: &StoppingRule) -> Result<EventList> {
    let y = window(signal, window_length)?;
    Ok(ParallelEncoder.encode_all(&y, d, stop)?)
}

pub fn learn_config(section: &LearnSection, stop: StoppingRule) -> Result<LearnConfig> {
    let mut cfg = LearnConfig::new(section.iterations, stop)?;
    cfg.tolerance = section.tolerance;
    cfg.early_stop = section.early_stop;
    cfg.reseed_unused = section.reseed_unused;
    cfg.record_history = true;
    Ok(cfg)
}

pub fn learn_signal(signal: &Signal, d0: &Dictionary, window_length: usize, cfg: &LearnConfig) -> Result<LearnResult> {
    let y = window(signal, window_length)?;
    Ok(learn_with(&y, d0, cfg, &ParallelEncoder)?)
}

/// Relabels detected neurons by the injective assignment that best fits the truth.
pub fn align_to_truth(truth: &EventList, detected: &EventList, num_detected: usize, tol: usize) -> Result<EventList> {
    let num_truth = truth.neuron_count().max(num_detected);
    let (map, _) = assign_clusters(truth, detected, num_detected, num_truth, tol);
    Ok(detected.relabeled(&map)?)
}

/// Ascending sweep thresholds: 0, then `count − 1` evenly ranked rendered peak magnitudes.
pub fn sweep_thresholds(detected: &EventList, d: &Dictionary, count: usize) -> Vec<f64> {
    let mut peaks: Vec<f64> = detected.iter().map(|e| rendered_peak(d, e)).collect();
    peaks.sort_by(f64::total_cmp);
    let mut out = vec![0.0];
    if !peaks.is_empty() {
        for i in 1..count {
            out.push(peaks[i * (peaks.len() - 1) / (count - 1)]);
        }
    }
    out.dedup();
    out.retain(|v| v.is_finite());
    out
}

/// Rates over the threshold sweep, after optional label alignment.
pub fn evaluate_sweep(
    truth: &EventList,
    detected: &EventList,
    d: &Dictionary,
    thresholds: usize,
    tol: usize,
    align: bool,
) -> Result<Vec<SortReport>> {
    if let Some(e) = detected.iter().find(|e| e.neuron >= d.num_atoms()) {
        return Err(Error::Format(format!(
            "detection neuron {} outside a dictionary of {} templates",
            e.neuron,
            d.num_atoms()
        )));
    }
    let labelled = if align {
        align_to_truth(truth, detected, d.num_atoms(), tol)?
    } else {
        detected.clone()
    };
    let levels = sweep_thresholds(&labelled, d, thresholds);
    Ok(threshold_sweep(truth, &labelled, d, &levels, tol)?)
}

pub fn run_baseline(
    signal: &Signal,
    truth: &EventList,
    section: &BaselineSection,
    clusters: usize,
    tol: usize,
    threshold_multiplier: f64,
    seed: u64,
) -> Result<BaselineResult> {
    let threshold = section
        .threshold
        .unwrap_or_else(|| mad_threshold(signal.samples(), threshold_multiplier));
    let mut cfg = BaselineConfig::new(threshold, section.snippet_length, clusters, seed);
    cfg.components = section.components;
    cfg.restarts = section.restarts;
    cfg.tolerance = tol;
    Ok(baseline_sort(signal.samples(), &cfg, truth)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use spikedict_core::signal::Event;

    #[test]
    fn thresholds_ascending_from_zero() {
        let d = Dictionary::from_rows(&[[1.0, 0.0]]).unwrap();
        let ev = EventList::new((0..10).map(|i| Event::new(0, 3 * i, (i + 1) as f64)).collect()).unwrap();
        let t = sweep_thresholds(&ev, &d, 5);
        assert_eq!(t[0], 0.0);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*t.last().unwrap(), 10.0);
        assert_eq!(sweep_thresholds(&EventList::empty(), &d, 5), vec![0.0]);
    }

    #[test]
    fn rule_precedence() {
        let s = Signal::new(vec![0.0; 100], 1000.0).unwrap();
        let pre = PreprocessSection::default();
        let c = CodingSection {
            noise_sigma: Some(2.0),
            ..Default::default()
        };
        let (r, sigma) = stopping_rule(&c, &s, &pre, 25).unwrap();
        assert_eq!(sigma, Some(2.0));
        assert_eq!(r.residual_threshold, 10.0);
        let c = CodingSection {
            max_sparsity: Some(3),
            ..Default::default()
        };
        let (r, _) = stopping_rule(&c, &s, &pre, 25).unwrap();
        assert_eq!((r.max_sparsity, r.residual_threshold), (Some(3), 0.0));
    }
}

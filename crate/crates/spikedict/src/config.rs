//! `RunConfig`: one JSON document holding every run parameter. Unknown keys
//! are rejected and values are validated before anything runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spikedict_core::eval::{DEFAULT_COMPONENTS, DEFAULT_MATCH_TOLERANCE, DEFAULT_RESTARTS};
use spikedict_core::preprocess::{DEFAULT_QUIET_MS, DEFAULT_THRESHOLD_MULTIPLIER};

use crate::error::{Error, Result};
use crate::formats::read_json;

/// Firing rate shared by every neuron, or one per neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rates {
    Shared(f64),
    PerNeuron(Vec<f64>),
}

impl Rates {
    pub fn expand(&self, neurons: usize) -> Result<Vec<f64>> {
        match self {
            Rates::Shared(r) => Ok(vec![*r; neurons]),
            Rates::PerNeuron(v) if v.len() == neurons => Ok(v.clone()),
            Rates::PerNeuron(v) => Err(Error::Config(format!(
                "{} firing rates given for {neurons} neurons",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Dictionary file; the bundled three-template set when absent.
    pub dictionary: Option<PathBuf>,
    pub num_windows: usize,
    pub window_length: usize,
    pub sampling_rate_hz: f64,
    pub firing_rate_hz: Rates,
    /// Peak amplitude range in mV, `[lo, hi]`.
    pub amplitude_range: [f64; 2],
    /// `null` disables noise.
    pub snr_db: Option<f64>,
    pub silent_leading_windows: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            dictionary: None,
            num_windows: 50,
            window_length: 30_000,
            sampling_rate_hz: 30_000.0,
            firing_rate_hz: Rates::Shared(5.0),
            amplitude_range: [-125.0, -75.0],
            snr_db: Some(6.0),
            silent_leading_windows: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub highpass_hz: f64,
    pub quiet_ms: f64,
    pub threshold_multiplier: f64,
    /// Segments `[start_s, end_s]` removed before filtering.
    pub exclude: Vec<[f64; 2]>,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            highpass_hz: 400.0,
            quiet_ms: DEFAULT_QUIET_MS,
            threshold_multiplier: DEFAULT_THRESHOLD_MULTIPLIER,
            exclude: Vec::new(),
        }
    }
}

/// Stopping rule for sparse coding. With `max_sparsity` unset and no
/// `noise_sigma`, the noise level is estimated from the signal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodingSection {
    pub window_length: Option<usize>,
    pub max_sparsity: Option<usize>,
    pub residual_threshold: Option<f64>,
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnSection {
    pub window_length: Option<usize>,
    pub max_sparsity: Option<usize>,
    pub residual_threshold: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub iterations: usize,
    pub tolerance: f64,
    pub early_stop: bool,
    pub reseed_unused: bool,
    /// Used when no initial dictionary is given: seed one from the data.
    pub neurons: Option<usize>,
    pub template_length: Option<usize>,
}

impl Default for LearnSection {
    fn default() -> Self {
        Self {
            window_length: None,
            max_sparsity: None,
            residual_threshold: None,
            noise_sigma: None,
            iterations: 20,
            tolerance: 1e-6,
            early_stop: true,
            reseed_unused: false,
            neurons: None,
            template_length: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub tolerance: usize,
    /// Number of detection thresholds in the sweep.
    pub thresholds: usize,
    /// Relabel detections to the injective neuron assignment that best fits the truth.
    pub align: bool,
    pub baseline: BaselineSection,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_MATCH_TOLERANCE,
            thresholds: 20,
            align: true,
            baseline: BaselineSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// Detection threshold; MAD-based when absent.
    pub threshold: Option<f64>,
    pub snippet_length: usize,
    pub components: usize,
    pub restarts: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            threshold: None,
            snippet_length: 45,
            components: DEFAULT_COMPONENTS,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub simulate: SimulateSection,
    pub preprocess: PreprocessSection,
    pub learn: LearnSection,
    pub sort: CodingSection,
    pub eval: EvalSection,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl LearnSection {
    pub fn coding(&self) -> CodingSection {
        CodingSection {
            window_length: self.window_length,
            max_sparsity: self.max_sparsity,
            residual_threshold: self.residual_threshold,
            noise_sigma: self.noise_sigma,
        }
    }
}

impl CodingSection {
    pub fn validate(&self, section: &str) -> Result<()> {
        if self.window_length == Some(0) {
            return Err(Error::Config(format!("{section}.window_length must be positive")));
        }
        if self.max_sparsity == Some(0) {
            return Err(Error::Config(format!("{section}.max_sparsity must be positive")));
        }
        if let Some(t) = self.residual_threshold {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("{section}.residual_threshold must be nonnegative")));
            }
        }
        if let Some(s) = self.noise_sigma {
            positive(&format!("{section}.noise_sigma"), s)?;
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path).map_err(|e| match e {
            Error::Json { path, source } => Error::Config(format!("{}: {source}", path.display())),
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulate;
        if s.num_windows == 0 || s.window_length == 0 {
            return Err(Error::Config("simulate: num_windows and window_length must be positive".into()));
        }
        positive("simulate.sampling_rate_hz", s.sampling_rate_hz)?;
        let [lo, hi] = s.amplitude_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config("simulate.amplitude_range must be [lo, hi] with lo <= hi".into()));
        }
        if let Some(snr) = s.snr_db {
            if !snr.is_finite() {
                return Err(Error::Config("simulate.snr_db must be finite or null".into()));
            }
        }
        if s.silent_leading_windows > s.num_windows {
            return Err(Error::Config("simulate.silent_leading_windows exceeds num_windows".into()));
        }
        let p = &self.preprocess;
        positive("preprocess.highpass_hz", p.highpass_hz)?;
        positive("preprocess.quiet_ms", p.quiet_ms)?;
        positive("preprocess.threshold_multiplier", p.threshold_multiplier)?;
        if p.exclude.iter().any(|[a, b]| !(*a >= 0.0 && b > a)) {
            return Err(Error::Config("preprocess.exclude segments need 0 <= start < end".into()));
        }
        self.learn.coding().validate("learn")?;
        self.sort.validate("sort")?;
        if self.learn.iterations == 0 {
            return Err(Error::Config("learn.iterations must be positive".into()));
        }
        if self.learn.neurons == Some(0) || self.learn.template_length.is_some_and(|l| l < 2) {
            return Err(Error::Config("learn: neurons >= 1 and template_length >= 2 required".into()));
        }
        if self.eval.thresholds == 0 {
            return Err(Error::Config("eval.thresholds must be positive".into()));
        }
        let b = &self.eval.baseline;
        if b.snippet_length < 2 || b.components == 0 || b.restarts == 0 {
            return Err(Error::Config("eval.baseline: snippet_length >= 2, components and restarts >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = serde_json::from_str::<RunConfig>(r#"{"seed": 1, "bogus": 2}"#);
        assert!(e.is_err());
        let e = serde_json::from_str::<RunConfig>(r#"{"simulate": {"num_window": 2}}"#);
        assert!(e.is_err());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"seed": 9, "learn": {"iterations": 3, "max_sparsity": 4}, "simulate": {"firing_rate_hz": [1, 2, 3]}}"#)
                .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.learn.iterations, 3);
        assert_eq!(cfg.learn.max_sparsity, Some(4));
        assert_eq!(cfg.simulate.window_length, 30_000);
        assert_eq!(cfg.simulate.firing_rate_hz.expand(3).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(cfg.simulate.firing_rate_hz.expand(2).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = RunConfig::default();
        cfg.simulate.amplitude_range = [1.0, 0.0];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.sort.max_sparsity = Some(0);
        assert!(cfg.validate().is_err());
    }
}

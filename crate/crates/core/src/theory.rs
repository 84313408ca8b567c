//! Sample-complexity and recording-length bounds, and diagnostics of the
//! assumptions they rest on.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::conv::ShiftGram;
use crate::error::{Error, Result};
use crate::math;
use crate::signal::{error_distance, Dictionary, EventList};

/// Universal constant of the sample-complexity bound.
pub const C3: f64 = 4.0;

/// Firing rates and neuron counts of the published recording-length grid.
pub const TABLE_RATES_HZ: [f64; 3] = [5.0, 10.0, 20.0];
pub const TABLE_NEURONS: [usize; 3] = [5, 10, 20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Base10,
    Base2,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => math::ln(x),
            LogBase::Base10 => math::log10(x),
            LogBase::Base2 => math::log2(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityParams {
    /// Number of neurons `C`.
    pub neurons: usize,
    /// Maximum number of simultaneously active neurons `s`.
    pub simultaneity: usize,
    /// Bound `M` on normalized amplitudes.
    pub amplitude_bound: f64,
    /// Failure probability `δ`.
    pub delta: f64,
    /// Firing-rate bound `λ̄` in Hz.
    pub max_rate_hz: f64,
    pub log_base: LogBase,
}

impl ComplexityParams {
    pub fn new(neurons: usize, simultaneity: usize, amplitude_bound: f64, delta: f64, max_rate_hz: f64) -> Result<Self> {
        let p = Self {
            neurons,
            simultaneity,
            amplitude_bound,
            delta,
            max_rate_hz,
            log_base: LogBase::Natural,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_log_base(mut self, base: LogBase) -> Self {
        self.log_base = base;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.neurons == 0 || self.simultaneity == 0 || self.simultaneity > self.neurons {
            return Err(Error::Domain("need 1 <= s <= C"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain("delta must lie in (0, 1)"));
        }
        if !(self.max_rate_hz > 0.0 && self.max_rate_hz.is_finite()) {
            return Err(Error::Domain("rate bound must be positive"));
        }
        if !(self.amplitude_bound > 0.0 && self.amplitude_bound.is_finite()) {
            return Err(Error::Domain("amplitude bound must be positive"));
        }
        Ok(())
    }

    fn log_term(&self) -> f64 {
        self.log_base.log(2.0 * self.neurons as f64 / self.delta)
    }
}

/// `4·max(C², C·M²·s)·log(2C/δ)` before rounding.
pub fn sample_complexity_raw(p: &ComplexityParams) -> Result<f64> {
    p.validate()?;
    let c = p.neurons as f64;
    let m2 = p.amplitude_bound * p.amplitude_bound;
    Ok(C3 * (c * c).max(c * m2 * p.simultaneity as f64) * p.log_term())
}

/// Minimum number of windows `J`.
pub fn sample_complexity(p: &ComplexityParams) -> Result<u64> {
    Ok(math::ceil(sample_complexity_raw(p)? - 1e-9) as u64)
}

/// `(4/λ̄)·max(C²/s, C·M²)·log(2C/δ)` seconds.
pub fn recording_length(p: &ComplexityParams) -> Result<f64> {
    p.validate()?;
    let c = p.neurons as f64;
    let s = p.simultaneity as f64;
    let m2 = p.amplitude_bound * p.amplitude_bound;
    Ok(C3 / p.max_rate_hz * (c * c / s).max(c * m2) * p.log_term())
}

/// Union bound `s·λ̄` on the total event rate.
pub fn event_rate_bound(p: &ComplexityParams) -> f64 {
    p.simultaneity as f64 * p.max_rate_hz
}

/// `"45 secs."`, `"1 min. 30 secs."`, `"3 mins. 25 secs."`.
pub fn format_duration(seconds: f64) -> String {
    let total = math::round(seconds.max(0.0)) as u64;
    let (m, s) = (total / 60, total % 60);
    let minutes = match m {
        0 => return format!("{s} secs."),
        1 => String::from("1 min."),
        _ => format!("{m} mins."),
    };
    if s == 0 {
        minutes
    } else {
        format!("{minutes} {s} secs.")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub max_rate_hz: f64,
    pub neurons: usize,
    pub seconds: f64,
}

/// Recording lengths over `λ̄ ∈ {5, 10, 20}` (rows) × `C ∈ {5, 10, 20}` (columns).
pub fn table1(delta: f64, simultaneity: usize, amplitude_bound: f64, log_base: LogBase) -> Result<[[TableEntry; 3]; 3]> {
    let mut out = [[TableEntry {
        max_rate_hz: 0.0,
        neurons: 0,
        seconds: 0.0,
    }; 3]; 3];
    for (i, &rate) in TABLE_RATES_HZ.iter().enumerate() {
        for (k, &c) in TABLE_NEURONS.iter().enumerate() {
            let p = ComplexityParams::new(c, simultaneity, amplitude_bound, delta, rate)?.with_log_base(log_base);
            out[i][k] = TableEntry {
                max_rate_hz: rate,
                neurons: c,
                seconds: recording_length(&p)?,
            };
        }
    }
    Ok(out)
}

/// Initial-dictionary accuracy required of `H⁽⁰⁾`: `1/(2592 s²)`.
pub fn initial_error_threshold(simultaneity: usize) -> f64 {
    let s = simultaneity as f64;
    1.0 / (2592.0 * s * s)
}

/// Accuracy schedule `ε_{t+1} = (25050·μ₁·s³/√l)·ε_t` from `ε₀ = 1/(2592 s²)`, `steps + 1` values.
pub fn accuracy_schedule(mu1: f64, simultaneity: usize, template_length: usize, steps: usize) -> Vec<f64> {
    let s = simultaneity as f64;
    let factor = 25050.0 * mu1 * s * s * s / math::sqrt(template_length as f64);
    let mut eps = initial_error_threshold(simultaneity);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(eps);
    for _ in 0..steps {
        eps *= factor;
        out.push(eps);
    }
    out
}

/// `max_c min_{z=±1} ‖z·a_c − b_c‖₂`.
pub fn signed_l2_distance(a: &Dictionary, b: &Dictionary) -> Result<f64> {
    if a.num_atoms() != b.num_atoms() || a.template_length() != b.template_length() {
        return Err(Error::ShapeMismatch("dictionaries differ in shape"));
    }
    Ok(a.templates()
        .iter()
        .zip(b.templates())
        .map(|(x, y)| {
            let plus: f64 = x.values().iter().zip(y.values()).map(|(u, v)| (u - v) * (u - v)).sum();
            let minus: f64 = x.values().iter().zip(y.values()).map(|(u, v)| (u + v) * (u + v)).sum();
            math::sqrt(plus.min(minus))
        })
        .fold(0.0, f64::max))
}

/// Largest `|⟨shift(h_c, n), shift(h_c', n')⟩|` over distinct shifted atoms.
pub fn mutual_coherence(d: &Dictionary) -> f64 {
    let g = ShiftGram::new(d);
    let l = d.template_length() as isize;
    let mut best: f64 = 0.0;
    for a in 0..d.num_atoms() {
        for b in 0..d.num_atoms() {
            for lag in -(l - 1)..l {
                if a == b && lag == 0 {
                    continue;
                }
                best = best.max(math::abs(g.get(a, b, lag)));
            }
        }
    }
    best
}

/// Largest number of distinct neurons whose event supports share a sample.
pub fn max_simultaneity(code: &EventList, template_length: usize) -> usize {
    let mut edges: Vec<(usize, bool, usize)> = Vec::with_capacity(2 * code.len());
    for e in code.iter() {
        edges.push((e.position, true, e.neuron));
        edges.push((e.position + template_length, false, e.neuron));
    }
    // Ends sort before starts at the same sample (half-open supports).
    edges.sort_unstable_by_key(|&(p, start, c)| (p, start, c));
    let mut active = alloc::collections::BTreeMap::<usize, usize>::new();
    let mut best = 0;
    for (_, start, c) in edges {
        if start {
            *active.entry(c).or_insert(0) += 1;
            best = best.max(active.len());
        } else if let Some(n) = active.get_mut(&c) {
            *n -= 1;
            if *n == 0 {
                active.remove(&c);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub mutual_coherence: f64,
    /// `max|x| / rms(x)` over code amplitudes.
    pub normalized_amplitude_bound: f64,
    pub max_abs_amplitude: f64,
    pub amplitude_second_moment: f64,
    pub max_simultaneity: usize,
    pub simultaneity_bound: usize,
    /// Required accuracy of an initial dictionary.
    pub initial_error_threshold: f64,
    /// `max_c min_z ‖z h⁽⁰⁾_c − h_c‖₂` of the supplied initial dictionary.
    pub initial_l2_error: Option<f64>,
    /// Sine-form error distance of the supplied initial dictionary.
    pub initial_error_distance: Option<f64>,
    pub initial_within_threshold: Option<bool>,
}

/// Empirical checks of the dictionary and code against the theorem's assumptions.
pub fn assumption_report(d: &Dictionary, code: &EventList, p: &ComplexityParams, initial: Option<&Dictionary>) -> Result<AssumptionReport> {
    p.validate()?;
    let n = code.len();
    let max_abs = code.iter().map(|e| math::abs(e.amplitude)).fold(0.0, f64::max);
    let second = if n == 0 {
        0.0
    } else {
        code.iter().map(|e| e.amplitude * e.amplitude).sum::<f64>() / n as f64
    };
    let normalized = if second > 0.0 { max_abs / math::sqrt(second) } else { 0.0 };
    let threshold = initial_error_threshold(p.simultaneity);
    let (l2, sine) = match initial {
        Some(h0) => (Some(signed_l2_distance(h0, d)?), Some(error_distance(h0, d)?)),
        None => (None, None),
    };
    Ok(AssumptionReport {
        mutual_coherence: mutual_coherence(d),
        normalized_amplitude_bound: normalized,
        max_abs_amplitude: max_abs,
        amplitude_second_moment: second,
        max_simultaneity: max_simultaneity(code, d.template_length()),
        simultaneity_bound: p.simultaneity,
        initial_error_threshold: threshold,
        initial_l2_error: l2,
        initial_error_distance: sine,
        initial_within_threshold: l2.map(|e| e <= threshold),
    })
}

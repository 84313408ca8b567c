//! Data types of the generative model: signals, unit-norm templates,
//! dictionaries, sparse codes as event lists, and the non-overlapping
//! window view of a trace.
//!
//! Neuron indices are 0-based throughout the crate. Event positions are the
//! sample index of the first template sample.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Tolerance on the unit-norm invariant of a [`Template`].
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// A sampled single-channel voltage trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sampling_rate_hz: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sampling_rate_hz: f64) -> Result<Self> {
        if !(sampling_rate_hz > 0.0 && sampling_rate_hz.is_finite()) {
            return Err(Error::Domain("sampling rate must be positive"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            samples,
            sampling_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }
}

/// A unit-norm spike waveform of length at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Template(Vec<f64>);

impl Template {
    /// Wraps values that are already unit norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::ShapeMismatch("template length must be at least 2"));
        }
        let n = math::norm(&values);
        if !n.is_finite() || math::abs(n - 1.0) > UNIT_NORM_TOL {
            return Err(Error::DegenerateTemplate);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index and signed value of the sample with the largest magnitude.
    pub fn peak(&self) -> (usize, f64) {
        let mut best = (0, self.0[0]);
        for (i, &v) in self.0.iter().enumerate() {
            if math::abs(v) > math::abs(best.1) {
                best = (i, v);
            }
        }
        best
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }
}

/// Scales `v` to unit ℓ2 norm.
pub fn normalize_template(v: &[f64]) -> Result<Template> {
    if v.len() < 2 {
        return Err(Error::ShapeMismatch("template length must be at least 2"));
    }
    let n = math::norm(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateTemplate);
    }
    Ok(Template(v.iter().map(|x| x / n).collect()))
}

/// `C` unit-norm templates of a common length `l`; the generators of the
/// block-Toeplitz convolutional dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    templates: Vec<Template>,
    template_length: usize,
}

impl Dictionary {
    pub fn new(templates: Vec<Template>) -> Result<Self> {
        let Some(first) = templates.first() else {
            return Err(Error::ShapeMismatch("dictionary needs at least one template"));
        };
        let template_length = first.len();
        if templates.iter().any(|t| t.len() != template_length) {
            return Err(Error::ShapeMismatch("templates differ in length"));
        }
        Ok(Self {
            templates,
            template_length,
        })
    }

    /// Normalizes each row and builds a dictionary.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let templates = rows
            .iter()
            .map(|r| normalize_template(r.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(templates)
    }

    pub fn num_atoms(&self) -> usize {
        self.templates.len()
    }

    pub fn template_length(&self) -> usize {
        self.template_length
    }

    pub fn template(&self, c: usize) -> &Template {
        &self.templates[c]
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn set_template(&mut self, c: usize, t: Template) -> Result<()> {
        if t.len() != self.template_length {
            return Err(Error::ShapeMismatch("replacement template length"));
        }
        self.templates[c] = t;
        Ok(())
    }

    /// Keeps the templates at `order` in that order.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.iter().any(|&c| c >= self.num_atoms()) {
            return Err(Error::ShapeMismatch("permutation index out of range"));
        }
        Self::new(order.iter().map(|&c| self.templates[c].clone()).collect())
    }
}

/// `max_c sqrt(1 - <h_c, ĥ_c>^2)` for index-matched columns, in `[0, 1]`.
pub fn error_distance(d1: &Dictionary, d2: &Dictionary) -> Result<f64> {
    if d1.num_atoms() != d2.num_atoms() || d1.template_length() != d2.template_length() {
        return Err(Error::ShapeMismatch("dictionaries differ in atom count or length"));
    }
    Ok(d1
        .templates()
        .iter()
        .zip(d2.templates())
        .map(|(a, b)| atom_distance(a.values(), b.values()))
        .fold(0.0, f64::max))
}

/// Sign-invariant angular distance `|sin θ|` between two vectors.
///
/// Evaluated through Lagrange's identity `|a|²|b|² - <a,b>² = Σ_{i<j} (a_i b_j - a_j b_i)²`,
/// which stays accurate near θ = 0 where `1 - <a,b>²` cancels.
pub fn atom_distance(a: &[f64], b: &[f64]) -> f64 {
    let denom = math::norm_sq(a) * math::norm_sq(b);
    if !(denom > 0.0) {
        return 1.0;
    }
    let mut wedge = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let m = a[i] * b[j] - a[j] * b[i];
            wedge += m * m;
        }
    }
    math::sqrt((wedge / denom).clamp(0.0, 1.0))
}

/// One nonzero of the sparse code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub neuron: usize,
    pub position: usize,
    pub amplitude: f64,
}

impl Event {
    pub fn new(neuron: usize, position: usize, amplitude: f64) -> Self {
        Self {
            neuron,
            position,
            amplitude,
        }
    }
}

/// Sparse code as a list of events sorted by `(neuron, position)` with no
/// repeated `(neuron, position)` pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventList {
    events: Vec<Event>,
}

impl EventList {
    pub fn new(mut events: Vec<Event>) -> Result<Self> {
        if events.iter().any(|e| !e.amplitude.is_finite()) {
            return Err(Error::NonFinite);
        }
        events.sort_by(|a, b| (a.neuron, a.position).cmp(&(b.neuron, b.position)));
        for w in events.windows(2) {
            if w[0].neuron == w[1].neuron && w[0].position == w[1].position {
                return Err(Error::InvalidEvent {
                    neuron: w[1].neuron,
                    position: w[1].position,
                });
            }
        }
        Ok(Self { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub(crate) fn events_mut(&mut self) -> &mut [Event] {
        &mut self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Event> {
        self.events.iter()
    }

    /// Events of one neuron, sorted by position.
    pub fn for_neuron(&self, c: usize) -> &[Event] {
        let lo = self.events.partition_point(|e| e.neuron < c);
        let hi = self.events.partition_point(|e| e.neuron <= c);
        &self.events[lo..hi]
    }

    /// Largest neuron index plus one (0 when empty).
    pub fn neuron_count(&self) -> usize {
        self.events.last().map_or(0, |e| e.neuron + 1)
    }

    /// Checks that every event fits a signal of `len` samples with templates
    /// of length `l` and a dictionary of `num_atoms` atoms.
    pub fn check_bounds(&self, len: usize, l: usize, num_atoms: usize) -> Result<()> {
        for e in &self.events {
            if e.neuron >= num_atoms || len < l || e.position > len - l {
                return Err(Error::InvalidEvent {
                    neuron: e.neuron,
                    position: e.position,
                });
            }
        }
        Ok(())
    }

    /// Support as `(neuron, position)` pairs in list order.
    pub fn support(&self) -> Vec<(usize, usize)> {
        self.events.iter().map(|e| (e.neuron, e.position)).collect()
    }

    /// Keeps events satisfying `keep`.
    pub fn filtered<F: FnMut(&Event) -> bool>(&self, mut keep: F) -> Self {
        Self {
            events: self.events.iter().copied().filter(|e| keep(e)).collect(),
        }
    }

    /// Renames neuron `c` to `map[c]` (entries of `None` are dropped).
    pub fn relabeled(&self, map: &[Option<usize>]) -> Result<Self> {
        let events = self
            .events
            .iter()
            .filter_map(|e| map.get(e.neuron).copied().flatten().map(|c| Event { neuron: c, ..*e }))
            .collect();
        Self::new(events)
    }
}

/// The matrix `Y` of `J` contiguous non-overlapping windows of length `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSignal {
    window_length: usize,
    num_windows: usize,
    data: Vec<f64>,
}

impl WindowedSignal {
    /// Builds a windowed view from raw column data (`data.len()` must be a multiple of `w`).
    pub fn from_columns(data: Vec<f64>, window_length: usize) -> Result<Self> {
        if window_length == 0 || data.len() % window_length != 0 {
            return Err(Error::InvalidWindowLength {
                window: window_length,
                samples: data.len(),
            });
        }
        Ok(Self {
            window_length,
            num_windows: data.len() / window_length,
            data,
        })
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn num_windows(&self) -> usize {
        self.num_windows
    }

    /// Window `j` (0-based).
    pub fn column(&self, j: usize) -> &[f64] {
        let w = self.window_length;
        &self.data[j * w..(j + 1) * w]
    }

    pub fn columns(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.window_length)
    }

    /// Columns concatenated back into one trace.
    pub fn concatenated(&self) -> &[f64] {
        &self.data
    }

    /// Sample index of the first sample of window `j`.
    pub fn offset(&self, j: usize) -> usize {
        j * self.window_length
    }
}

/// Splits `signal` into `floor(N / W)` windows; the tail shorter than `W` is dropped.
pub fn window(signal: &Signal, w: usize) -> Result<WindowedSignal> {
    let n = signal.len();
    if w == 0 || w > n {
        return Err(Error::InvalidWindowLength {
            window: w,
            samples: n,
        });
    }
    let j = n / w;
    WindowedSignal::from_columns(signal.samples()[..j * w].to_vec(), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn window_exact_split() {
        let s = Signal::new((0..10).map(f64::from).collect(), 1.0).unwrap();
        let y = window(&s, 5).unwrap();
        assert_eq!(y.num_windows(), 2);
        assert_eq!(y.column(0), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(y.column(1), &[5.0, 6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn window_truncates_tail() {
        let s = Signal::new((0..11).map(f64::from).collect(), 1.0).unwrap();
        let y = window(&s, 5).unwrap();
        assert_eq!(y.num_windows(), 2);
        assert_eq!(y.concatenated().len(), 10);
        assert_eq!(*y.column(1).last().unwrap(), 9.0);
    }

    #[test]
    fn window_count_for_simulation_scale() {
        let s = Signal::new(vec![0.0; 30_000 * 50], 30_000.0).unwrap();
        assert_eq!(window(&s, 30_000).unwrap().num_windows(), 50);
    }

    #[test]
    fn window_rejects_bad_lengths() {
        let s = Signal::new(vec![0.0; 4], 1.0).unwrap();
        assert!(matches!(window(&s, 0), Err(Error::InvalidWindowLength { .. })));
        assert!(matches!(window(&s, 5), Err(Error::InvalidWindowLength { .. })));
    }

    #[test]
    fn normalize_examples() {
        let t = normalize_template(&[3.0, 4.0]).unwrap();
        assert!((t.values()[0] - 0.6).abs() < 1e-15);
        assert!((t.values()[1] - 0.8).abs() < 1e-15);
        let again = normalize_template(t.values()).unwrap();
        for (a, b) in again.values().iter().zip(t.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(normalize_template(&[0.0, 0.0]), Err(Error::DegenerateTemplate));
    }

    #[test]
    fn template_rejects_non_unit() {
        assert!(Template::new(vec![1.0, 1.0]).is_err());
        assert!(Template::new(vec![1.0]).is_err());
        assert!(Template::new(vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn error_distance_examples() {
        let d = Dictionary::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 1.0, -1.0]]).unwrap();
        assert_eq!(error_distance(&d, &d).unwrap(), 0.0);
        let neg = Dictionary::from_rows(&[vec![-1.0, -2.0, -3.0], vec![0.0, -1.0, 1.0]]).unwrap();
        assert_eq!(error_distance(&d, &neg).unwrap(), 0.0);
        let a = Dictionary::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Dictionary::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(error_distance(&a, &b).unwrap(), 1.0);
        let short = Dictionary::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(error_distance(&a, &short), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn event_list_sorts_and_rejects_duplicates() {
        let list = EventList::new(vec![
            Event::new(1, 5, 1.0),
            Event::new(0, 9, 2.0),
            Event::new(0, 3, 3.0),
        ])
        .unwrap();
        assert_eq!(list.support(), vec![(0, 3), (0, 9), (1, 5)]);
        assert_eq!(list.for_neuron(0).len(), 2);
        assert_eq!(list.for_neuron(2).len(), 0);
        assert!(EventList::new(vec![Event::new(0, 3, 1.0), Event::new(0, 3, 2.0)]).is_err());
    }

    fn unit_rows(c: usize, l: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(
            proptest::collection::vec(-1.0f64..1.0, l)
                .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3),
            c,
        )
    }

    proptest! {
        #[test]
        fn window_roundtrip(n in 1usize..500, w in 1usize..100) {
            prop_assume!(w <= n);
            let s = Signal::new((0..n).map(|i| i as f64 * 0.5).collect(), 1.0).unwrap();
            let y = window(&s, w).unwrap();
            let cat: Vec<f64> = y.columns().flat_map(|c| c.iter().copied()).collect();
            prop_assert_eq!(&cat[..], &s.samples()[..w * (n / w)]);
        }

        #[test]
        fn error_distance_symmetric_and_bounded(a in unit_rows(3, 6), b in unit_rows(3, 6)) {
            let d1 = Dictionary::from_rows(&a).unwrap();
            let d2 = Dictionary::from_rows(&b).unwrap();
            let e12 = error_distance(&d1, &d2).unwrap();
            let e21 = error_distance(&d2, &d1).unwrap();
            prop_assert!((e12 - e21).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&e12));
            prop_assert_eq!(error_distance(&d1, &d1).unwrap(), 0.0);
        }

        #[test]
        fn normalize_idempotent(v in proptest::collection::vec(-10.0f64..10.0, 2..40)) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
            let once = normalize_template(&v).unwrap();
            let twice = normalize_template(once.values()).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

//! Convolutional orthogonal matching pursuit (cOMP) and matching pursuit (cMP).
//!
//! One window is coded at a time. Atom selection scans a correlation profile
//! `Hᵀr` that is computed once from the window and then patched locally:
//! when the coefficient of atom `(c, n)` changes by `δ`, only profile entries
//! with shifts in `n-l+1..n+l-1` move, by `δ` times a precomputed
//! template-pair inner product. The least-squares step grows a Cholesky
//! factor of the Gram matrix of the selected atoms by one row per iteration.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{correlate_dictionary_with, CorrelationProfile, Correlator, DirectCorrelator, ShiftGram};
use crate::error::{Error, Result};
use crate::linalg::IncrementalCholesky;
use crate::math;
use crate::signal::{Dictionary, Event, EventList, WindowedSignal};

/// Relative squared pivot below which a new atom is rejected as collinear with the support.
pub const MIN_PIVOT: f64 = 1e-10;

/// Residual norms below this fraction of the window norm count as zero.
const ROUNDING_FLOOR: f64 = 1e-12;

/// When to stop adding atoms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    /// Maximum number of atoms per window (`None` = unlimited).
    pub max_sparsity: Option<usize>,
    /// Stop once `‖r‖₂` is at or below this value.
    pub residual_threshold: f64,
}

impl StoppingRule {
    pub fn new(max_sparsity: Option<usize>, residual_threshold: f64) -> Result<Self> {
        if residual_threshold.is_nan() || residual_threshold < 0.0 {
            return Err(Error::Domain("residual threshold must be nonnegative"));
        }
        if max_sparsity.is_none() && !residual_threshold.is_finite() {
            return Err(Error::Domain("stopping rule needs a finite criterion"));
        }
        if max_sparsity == Some(0) {
            return Err(Error::Domain("max sparsity must be positive"));
        }
        Ok(Self {
            max_sparsity,
            residual_threshold,
        })
    }

    /// Exactly `beta` atoms (or fewer if the residual vanishes).
    pub fn sparsity(beta: usize) -> Result<Self> {
        Self::new(Some(beta), 0.0)
    }

    /// Residual-driven, unlimited sparsity.
    pub fn residual(threshold: f64) -> Result<Self> {
        Self::new(None, threshold)
    }

    /// `‖r‖₂ ≤ σ·√W`: stop once the residual is at the noise level.
    pub fn noise_level(sigma: f64, window_length: usize) -> Result<Self> {
        Self::residual(sigma * math::sqrt(window_length as f64))
    }

    fn done(&self, atoms: usize, residual_norm: f64, floor: f64) -> bool {
        residual_norm <= self.residual_threshold.max(floor)
            || self.max_sparsity.is_some_and(|b| atoms >= b)
    }
}

/// A column of `H`: template `neuron` shifted to `position`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub neuron: usize,
    pub position: usize,
}

impl Atom {
    pub fn new(neuron: usize, position: usize) -> Self {
        Self { neuron, position }
    }
}

/// Dictionary plus the per-dictionary tables shared by every window.
pub struct ConvCoder<'a> {
    dict: &'a Dictionary,
    gram: ShiftGram,
    kernel: &'a dyn Correlator,
}

impl<'a> ConvCoder<'a> {
    pub fn new(dict: &'a Dictionary) -> Self {
        Self::with_kernel(dict, &DirectCorrelator)
    }

    pub fn with_kernel(dict: &'a Dictionary, kernel: &'a dyn Correlator) -> Self {
        Self {
            dict,
            gram: ShiftGram::new(dict),
            kernel,
        }
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.dict
    }

    /// Fresh solver state for one window (`S = ∅`, `r = Y_j`).
    pub fn start<'w>(&'w self, window: &'w [f64]) -> Result<SolverState<'w>> {
        SolverState::new(self, window)
    }

    /// cOMP on one window; positions in the result are window-local.
    pub fn encode(&self, window: &[f64], stop: &StoppingRule) -> Result<EventList> {
        let mut state = self.start(window)?;
        let floor = ROUNDING_FLOOR * math::norm(window);
        while !stop.done(state.support_size(), state.residual_norm(), floor) {
            let atom = match state.select_atom() {
                Ok(a) => a,
                Err(Error::NoSelectableAtom) => break,
                Err(e) => return Err(e),
            };
            match state.update_least_squares(atom) {
                Ok(()) => {}
                Err(Error::IllConditionedSupport { .. }) => state.mask(atom),
                Err(e) => return Err(e),
            }
        }
        state.events()
    }

    /// cMP on one window: no re-projection, repeated picks of one atom are summed.
    pub fn encode_mp(&self, window: &[f64], stop: &StoppingRule) -> Result<EventList> {
        let d = self.dict;
        let l = d.template_length();
        if window.len() < l {
            return Err(Error::ShapeMismatch("window shorter than template"));
        }
        let mut profile = correlate_dictionary_with(d, window, self.kernel)?;
        let mut residual = window.to_vec();
        let mut amplitudes: BTreeMap<Atom, f64> = BTreeMap::new();
        let floor = ROUNDING_FLOOR * math::norm(window);
        let cap = 64 * d.num_atoms() * profile.num_shifts();
        let mut iterations = 0;
        while !stop.done(iterations, math::norm(&residual), floor) && iterations < cap {
            let Some(atom) = argmax(&profile, |_| false) else {
                break;
            };
            let alpha = profile.get(atom.neuron, atom.position) / self.gram.get(atom.neuron, atom.neuron, 0);
            let h = d.template(atom.neuron).values();
            for (r, v) in residual[atom.position..atom.position + l].iter_mut().zip(h) {
                *r -= alpha * v;
            }
            patch_profile(&mut profile, &self.gram, atom, alpha);
            *amplitudes.entry(atom).or_insert(0.0) += alpha;
            iterations += 1;
        }
        EventList::new(
            amplitudes
                .into_iter()
                .filter(|(_, x)| *x != 0.0)
                .map(|(a, x)| Event::new(a.neuron, a.position, x))
                .collect(),
        )
    }
}

/// Subtracts `delta · <shift(h_c, k), atom>` from every profile entry the atom overlaps.
fn patch_profile(profile: &mut CorrelationProfile, gram: &ShiftGram, atom: Atom, delta: f64) {
    let l = gram.template_length();
    let shifts = profile.num_shifts();
    let lo = atom.position.saturating_sub(l - 1);
    let hi = (atom.position + l - 1).min(shifts - 1);
    for c in 0..gram.num_atoms() {
        let row = profile.neuron_mut(c);
        for (k, v) in row.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *v -= delta * gram.get(c, atom.neuron, atom.position as isize - k as isize);
        }
    }
}

/// Largest `|profile|` entry not excluded by `blocked`; ties go to the lowest
/// neuron, then the lowest position. `None` when every candidate is zero.
fn argmax<F: Fn(usize) -> bool>(profile: &CorrelationProfile, blocked: F) -> Option<Atom> {
    let shifts = profile.num_shifts();
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in profile.as_slice().iter().enumerate() {
        let a = math::abs(v);
        if a > best.map_or(0.0, |b| b.1) && !blocked(i) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| Atom::new(i / shifts, i % shifts))
}

/// cOMP iterate for one window: support, Cholesky factor, coefficients, residual.
pub struct SolverState<'w> {
    coder: &'w ConvCoder<'w>,
    window: &'w [f64],
    residual: Vec<f64>,
    profile: CorrelationProfile,
    atoms: Vec<Atom>,
    /// Per-column flag: selected or rejected as ill-conditioned.
    blocked: Vec<bool>,
    selected: Vec<bool>,
    rhs: Vec<f64>,
    chol: IncrementalCholesky,
    coefficients: Vec<f64>,
}

impl<'w> SolverState<'w> {
    fn new(coder: &'w ConvCoder<'w>, window: &'w [f64]) -> Result<Self> {
        let profile = correlate_dictionary_with(coder.dict, window, coder.kernel)?;
        let n = profile.as_slice().len();
        Ok(Self {
            coder,
            window,
            residual: window.to_vec(),
            profile,
            atoms: Vec::new(),
            blocked: vec![false; n],
            selected: vec![false; n],
            rhs: Vec::new(),
            chol: IncrementalCholesky::default(),
            coefficients: Vec::new(),
        })
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn residual_norm(&self) -> f64 {
        math::norm(&self.residual)
    }

    /// Current `Hᵀr`.
    pub fn profile(&self) -> &CorrelationProfile {
        &self.profile
    }

    pub fn support(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    /// Least-squares coefficients, aligned with [`support`](Self::support).
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn cholesky_dim(&self) -> usize {
        self.chol.dim()
    }

    fn index(&self, atom: Atom) -> Option<usize> {
        let shifts = self.profile.num_shifts();
        (atom.neuron < self.coder.dict.num_atoms() && atom.position < shifts)
            .then_some(atom.neuron * shifts + atom.position)
    }

    /// Excludes `atom` from future selection.
    pub fn mask(&mut self, atom: Atom) {
        if let Some(i) = self.index(atom) {
            self.blocked[i] = true;
        }
    }

    /// The unselected, unmasked column with the largest `|<H_q, r>|`.
    pub fn select_atom(&self) -> Result<Atom> {
        argmax(&self.profile, |i| self.blocked[i]).ok_or(Error::NoSelectableAtom)
    }

    /// Adds `atom` to the support and re-solves the least-squares fit.
    ///
    /// On error the state is unchanged.
    pub fn update_least_squares(&mut self, atom: Atom) -> Result<()> {
        let i = self.index(atom).ok_or(Error::InvalidEvent {
            neuron: atom.neuron,
            position: atom.position,
        })?;
        if self.selected[i] {
            return Err(Error::DuplicateAtom {
                neuron: atom.neuron,
                position: atom.position,
            });
        }
        let gram = &self.coder.gram;
        let g: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| gram.get(a.neuron, atom.neuron, atom.position as isize - a.position as isize))
            .collect();
        let diag = gram.get(atom.neuron, atom.neuron, 0);
        if self.chol.push(&g, diag, MIN_PIVOT).is_none() {
            return Err(Error::IllConditionedSupport {
                neuron: atom.neuron,
                position: atom.position,
            });
        }
        let l = self.coder.dict.template_length();
        let h = self.coder.dict.template(atom.neuron).values();
        self.rhs.push(math::dot(h, &self.window[atom.position..atom.position + l]));
        self.atoms.push(atom);
        self.selected[i] = true;
        self.blocked[i] = true;

        let x = self.chol.solve(&self.rhs);
        self.coefficients.push(0.0);
        for (&a, (&new, old)) in self.atoms.iter().zip(x.iter().zip(self.coefficients.iter_mut())) {
            let delta = new - *old;
            *old = new;
            if delta == 0.0 {
                continue;
            }
            let h = self.coder.dict.template(a.neuron).values();
            for (r, v) in self.residual[a.position..a.position + l].iter_mut().zip(h) {
                *r -= delta * v;
            }
            patch_profile(&mut self.profile, gram, a, delta);
        }
        Ok(())
    }

    /// Current coefficients as window-local events.
    pub fn events(&self) -> Result<EventList> {
        EventList::new(
            self.atoms
                .iter()
                .zip(&self.coefficients)
                .filter(|(_, &x)| x != 0.0)
                .map(|(a, &x)| Event::new(a.neuron, a.position, x))
                .collect(),
        )
    }
}

/// cOMP on one window with the direct correlation kernel.
pub fn comp_encode(window: &[f64], d: &Dictionary, stop: &StoppingRule) -> Result<EventList> {
    ConvCoder::new(d).encode(window, stop)
}

/// cMP on one window with the direct correlation kernel.
pub fn cmp_encode(window: &[f64], d: &Dictionary, stop: &StoppingRule) -> Result<EventList> {
    ConvCoder::new(d).encode_mp(window, stop)
}

/// Codes every window of a signal; implementations may run windows in parallel
/// but must return the same events as sequential coding.
pub trait WindowEncoder {
    fn encode_all(&self, y: &WindowedSignal, d: &Dictionary, stop: &StoppingRule) -> Result<EventList>;
}

/// Codes windows one after another with the direct kernel.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialEncoder;

impl WindowEncoder for SequentialEncoder {
    fn encode_all(&self, y: &WindowedSignal, d: &Dictionary, stop: &StoppingRule) -> Result<EventList> {
        comp_encode_all(y, d, stop)
    }
}

/// Shifts window-local events to global sample positions.
pub fn globalize(window_index: usize, window_length: usize, local: EventList) -> impl Iterator<Item = Event> {
    let offset = window_index * window_length;
    local.into_events().into_iter().map(move |e| Event {
        position: e.position + offset,
        ..e
    })
}

/// Merges per-window codes (in window order) into one global event list.
pub fn merge_windows<I: IntoIterator<Item = Result<EventList>>>(window_length: usize, codes: I) -> Result<EventList> {
    let mut events = Vec::new();
    for (j, code) in codes.into_iter().enumerate() {
        let code = code.map_err(|e| Error::InWindow {
            window: j,
            source: alloc::boxed::Box::new(e),
        })?;
        events.extend(globalize(j, window_length, code));
    }
    EventList::new(events)
}

/// cOMP on every window; event positions are global sample indices.
pub fn comp_encode_all(y: &WindowedSignal, d: &Dictionary, stop: &StoppingRule) -> Result<EventList> {
    let coder = ConvCoder::new(d);
    merge_windows(y.window_length(), y.columns().map(|col| coder.encode(col, stop)))
}

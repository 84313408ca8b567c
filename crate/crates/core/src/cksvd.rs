//! Convolutional K-SVD dictionary update and the alternating-minimization loop.
//!
//! For neuron `c`, every event of `c` contributes one length-`l` column to
//! the error matrix `E_c`: the observed window samples under the event minus
//! the overlapping contribution of all other neurons' events. The leading
//! left singular vector of `E_c` replaces `h_c`; the leading singular value
//! times the right singular vector replaces the event amplitudes, so the
//! support of the code never changes during an update.

use alloc::vec;
use alloc::vec::Vec;

use crate::conv::add_events;
use crate::error::{Error, Result};
use crate::linalg::{psd_solve, symmetric_eigen};
use crate::math;
use crate::omp::{SequentialEncoder, StoppingRule, WindowEncoder};
use crate::signal::{error_distance, normalize_template, Dictionary, Event, EventList, Template, WindowedSignal};

/// Where a patch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSource {
    pub window: usize,
    /// Window-local position of the event.
    pub position: usize,
    /// Index of the event in the [`EventList`] it was extracted from.
    pub event_index: usize,
}

/// The columns of `E_c` for one neuron, split into observation and interference.
#[derive(Debug, Clone)]
pub struct PatchSet {
    neuron: usize,
    template_length: usize,
    observations: Vec<f64>,
    interference: Vec<f64>,
    codes: Vec<f64>,
    sources: Vec<PatchSource>,
}

impl PatchSet {
    pub fn neuron(&self) -> usize {
        self.neuron
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn template_length(&self) -> usize {
        self.template_length
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        let l = self.template_length;
        &self.observations[i * l..(i + 1) * l]
    }

    pub fn interference(&self, i: usize) -> &[f64] {
        let l = self.template_length;
        &self.interference[i * l..(i + 1) * l]
    }

    /// Column `i` of `E_c`.
    pub fn residual_column(&self, i: usize) -> Vec<f64> {
        self.observation(i)
            .iter()
            .zip(self.interference(i))
            .map(|(y, z)| y - z)
            .collect()
    }

    /// Current code values, one per patch.
    pub fn codes(&self) -> &[f64] {
        &self.codes
    }

    pub fn sources(&self) -> &[PatchSource] {
        &self.sources
    }

    /// `E_c` column-major (`l × len`).
    pub fn error_matrix(&self) -> Vec<f64> {
        self.observations
            .iter()
            .zip(&self.interference)
            .map(|(y, z)| y - z)
            .collect()
    }
}

/// Per-window event indices sorted by local position.
struct WindowIndex {
    window_length: usize,
    windows: Vec<Vec<(usize, usize)>>,
}

impl WindowIndex {
    fn new(y: &WindowedSignal, d: &Dictionary, code: &EventList) -> Result<Self> {
        let w = y.window_length();
        let l = d.template_length();
        let mut windows = vec![Vec::new(); y.num_windows()];
        for (i, e) in code.iter().enumerate() {
            let j = e.position / w;
            let local = e.position % w;
            if j >= y.num_windows() || w < l || local > w - l || e.neuron >= d.num_atoms() {
                return Err(Error::InvalidEvent {
                    neuron: e.neuron,
                    position: e.position,
                });
            }
            windows[j].push((local, i));
        }
        for win in &mut windows {
            win.sort_unstable();
        }
        Ok(Self {
            window_length: w,
            windows,
        })
    }
}

fn extract_indexed(y: &WindowedSignal, d: &Dictionary, code: &EventList, index: &WindowIndex, c: usize) -> Result<PatchSet> {
    let l = d.template_length();
    let events = code.events();
    let mut set = PatchSet {
        neuron: c,
        template_length: l,
        observations: Vec::new(),
        interference: Vec::new(),
        codes: Vec::new(),
        sources: Vec::new(),
    };
    for (j, win) in index.windows.iter().enumerate() {
        let column = y.column(j);
        for &(n, i) in win.iter().filter(|&&(_, i)| events[i].neuron == c) {
            set.observations.extend_from_slice(&column[n..n + l]);
            let mut patch = vec![0.0; l];
            let lo = n.saturating_sub(l - 1);
            let start = win.partition_point(|&(p, _)| p < lo);
            for &(p, k) in win[start..].iter().take_while(|&&(p, _)| p < n + l) {
                let e = &events[k];
                if e.neuron == c {
                    continue;
                }
                let h = d.template(e.neuron).values();
                // Overlap of [p, p+l) with [n, n+l).
                let from = p.max(n);
                let to = (p + l).min(n + l);
                for s in from..to {
                    patch[s - n] += e.amplitude * h[s - p];
                }
            }
            set.interference.extend_from_slice(&patch);
            set.codes.push(events[i].amplitude);
            set.sources.push(PatchSource {
                window: j,
                position: n,
                event_index: i,
            });
        }
    }
    debug_assert_eq!(index.window_length, y.window_length());
    if set.is_empty() {
        return Err(Error::EmptyPatchSet { neuron: c });
    }
    Ok(set)
}

/// Stacks, for every event of neuron `c`, the observed patch and the
/// interference of the other neurons' events over the same `l` samples.
pub fn extract_patches(y: &WindowedSignal, d: &Dictionary, code: &EventList, c: usize) -> Result<PatchSet> {
    if c >= d.num_atoms() {
        return Err(Error::ShapeMismatch("neuron index out of range"));
    }
    let index = WindowIndex::new(y, d, code)?;
    extract_indexed(y, d, code, &index, c)
}

/// Best rank-1 fit `ĥ xᵀ` of `E_c`.
///
/// Returns the unit-norm leading left singular vector, signed so that
/// `<ĥ, previous> ≥ 0`, and the new code values `σ₁·v₁` in patch order.
pub fn rank1_update(patches: &PatchSet, previous: &Template) -> Result<(Template, Vec<f64>)> {
    let l = patches.template_length();
    let m = patches.len();
    if m == 0 {
        return Err(Error::EmptyPatchSet {
            neuron: patches.neuron(),
        });
    }
    if previous.len() != l {
        return Err(Error::ShapeMismatch("previous template length"));
    }
    let e = patches.error_matrix();
    if e.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateAtom {
            neuron: patches.neuron(),
        });
    }
    // E Eᵀ is l × l, independent of the number of events.
    let mut g = vec![0.0; l * l];
    for col in e.chunks_exact(l) {
        for a in 0..l {
            let ca = col[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..l {
                g[a * l + b] += ca * col[b];
            }
        }
    }
    let eig = symmetric_eigen(&g, l);
    let mut u = eig.vectors[0].clone();
    let prev = previous.values();
    if math::dot(&u, prev) < 0.0 {
        u.iter_mut().for_each(|v| *v = -*v);
    }
    let h = normalize_template(&u).map_err(|_| Error::DegenerateAtom {
        neuron: patches.neuron(),
    })?;
    let x = e.chunks_exact(l).map(|col| math::dot(col, h.values())).collect();
    Ok((h, x))
}

/// `‖Y - HX‖_F²` summed over windows.
pub fn objective(y: &WindowedSignal, d: &Dictionary, code: &EventList) -> Result<f64> {
    let w = y.window_length();
    let l = d.template_length();
    for e in code.iter() {
        if w < l || e.position % w > w - l || e.position / w >= y.num_windows() {
            return Err(Error::InvalidEvent {
                neuron: e.neuron,
                position: e.position,
            });
        }
    }
    let mut recon = vec![0.0; y.concatenated().len()];
    add_events(d, code.events(), &mut recon)?;
    Ok(y
        .concatenated()
        .iter()
        .zip(&recon)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Options for a dictionary-update sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PassOptions {
    /// Replace atoms without events by the most energetic residual segment.
    pub reseed_unused: bool,
}

/// One sweep of rank-1 updates over atoms `0..C`, each seeing the latest
/// versions of the others.
pub fn cksvd_pass(y: &WindowedSignal, d: &Dictionary, code: &EventList) -> Result<(Dictionary, EventList)> {
    cksvd_pass_observed(y, d, code, PassOptions::default(), |_, _, _| {})
}

/// [`cksvd_pass`] calling `on_atom(c, dictionary, code)` after each atom update.
///
/// Atoms without events or with a zero error matrix are left unchanged
/// (or reseeded when `opts.reseed_unused` is set). When a neuron's own
/// events overlap, an update that would raise the objective is reverted.
pub fn cksvd_pass_observed<F>(
    y: &WindowedSignal,
    d: &Dictionary,
    code: &EventList,
    opts: PassOptions,
    mut on_atom: F,
) -> Result<(Dictionary, EventList)>
where
    F: FnMut(usize, &Dictionary, &EventList),
{
    let index = WindowIndex::new(y, d, code)?;
    let mut dict = d.clone();
    let mut code = code.clone();
    for c in 0..dict.num_atoms() {
        match extract_indexed(y, &dict, &code, &index, c) {
            Ok(patches) => match rank1_update(&patches, dict.template(c)) {
                Ok((h, x)) => {
                    let clusters = if self_overlapping(&code, &index, c, dict.template_length()) {
                        Some(self_clusters(y, &dict, &code, &index, c))
                    } else {
                        None
                    };
                    let (h, x) = match clusters {
                        Some(cl) => monotone_update(&cl, dict.template(c), patches.codes(), h, x),
                        None => (h, x),
                    };
                    dict.set_template(c, h)?;
                    set_codes(&mut code, &patches, &x);
                }
                Err(Error::DegenerateAtom { .. }) => {}
                Err(e) => return Err(e),
            },
            Err(Error::EmptyPatchSet { .. }) => {
                if opts.reseed_unused {
                    if let Some(t) = worst_explained_segment(y, &dict, &code)? {
                        dict.set_template(c, t)?;
                    }
                }
            }
            Err(e) => return Err(e),
        }
        on_atom(c, &dict, &code);
    }
    Ok((dict, code))
}

fn set_codes(code: &mut EventList, patches: &PatchSet, values: &[f64]) {
    let events = code.events_mut();
    for (src, &v) in patches.sources().iter().zip(values) {
        events[src.event_index].amplitude = v;
    }
}

/// True when two events of neuron `c` overlap inside a window. The patches
/// then count each other's contribution and the rank-1 fit is no longer
/// the exact minimizer.
fn self_overlapping(code: &EventList, index: &WindowIndex, c: usize, l: usize) -> bool {
    let events = code.events();
    index.windows.iter().any(|win| {
        let mut last: Option<usize> = None;
        for &(p, _) in win.iter().filter(|&&(_, i)| events[i].neuron == c) {
            if last.is_some_and(|q| p < q + l) {
                return true;
            }
            last = Some(p);
        }
        false
    })
}

/// Overlapping events of one neuron inside a window, with the observation
/// minus the other neurons' contribution over their joint span.
struct Cluster {
    /// `(offset in span, patch index)`.
    members: Vec<(usize, usize)>,
    target: Vec<f64>,
}

fn self_clusters(y: &WindowedSignal, d: &Dictionary, code: &EventList, index: &WindowIndex, c: usize) -> Vec<Cluster> {
    let l = d.template_length();
    let events = code.events();
    let mut out = Vec::new();
    let mut k = 0;
    for (j, win) in index.windows.iter().enumerate() {
        let column = y.column(j);
        let mut spans: Vec<(usize, usize, Vec<(usize, usize)>)> = Vec::new();
        for &(p, _) in win.iter().filter(|&&(_, i)| events[i].neuron == c) {
            match spans.last_mut() {
                Some(last) if p < last.1 => {
                    last.1 = p + l;
                    last.2.push((p, k));
                }
                _ => spans.push((p, p + l, vec![(p, k)])),
            }
            k += 1;
        }
        for (a, b, members) in spans {
            let mut target = column[a..b].to_vec();
            let start = win.partition_point(|&(p, _)| p + l <= a);
            for &(p, i) in win[start..].iter().take_while(|&&(p, _)| p < b) {
                let e = &events[i];
                if e.neuron == c {
                    continue;
                }
                let h = d.template(e.neuron).values();
                for s in p.max(a)..(p + l).min(b) {
                    target[s - a] -= e.amplitude * h[s - p];
                }
            }
            out.push(Cluster {
                members: members.into_iter().map(|(p, k)| (p - a, k)).collect(),
                target,
            });
        }
    }
    out
}

fn cluster_energy(clusters: &[Cluster], h: &[f64], x: &[f64]) -> f64 {
    let mut total = 0.0;
    for cl in clusters {
        let mut r = cl.target.clone();
        for &(o, k) in &cl.members {
            for (t, hv) in h.iter().enumerate() {
                r[o + t] -= x[k] * hv;
            }
        }
        total += math::norm_sq(&r);
    }
    total
}

/// Least-squares amplitudes for a fixed template.
fn fit_amplitudes(clusters: &[Cluster], h: &[f64], count: usize) -> Vec<f64> {
    let l = h.len();
    let mut x = vec![0.0; count];
    for cl in clusters {
        let m = cl.members.len();
        let mut g = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for (a, &(oa, _)) in cl.members.iter().enumerate() {
            rhs[a] = math::dot(&cl.target[oa..oa + l], h);
            for (b, &(ob, _)) in cl.members.iter().enumerate().skip(a) {
                let lag = ob - oa;
                if lag < l {
                    g[a * m + b] = math::dot(&h[lag..], &h[..l - lag]);
                }
            }
        }
        let sol = psd_solve(&g, m, &rhs);
        for (&(_, k), v) in cl.members.iter().zip(sol) {
            x[k] = v;
        }
    }
    x
}

/// Least-squares (unnormalized) template for fixed amplitudes.
fn fit_template(clusters: &[Cluster], x: &[f64], l: usize) -> Vec<f64> {
    let mut a = vec![0.0; l * l];
    let mut b = vec![0.0; l];
    for cl in clusters {
        for (i, &(oi, ki)) in cl.members.iter().enumerate() {
            for t in 0..l {
                b[t] += x[ki] * cl.target[oi + t];
            }
            for &(ok, kk) in &cl.members[i..] {
                let lag = ok - oi;
                let w = x[ki] * x[kk];
                for t in 0..l.saturating_sub(lag) {
                    a[t * l + t + lag] += w;
                }
            }
        }
    }
    psd_solve(&a, l, &b)
}

/// Accepts the rank-1 fit when it does not raise the energy of neuron `c`'s
/// spans; otherwise takes one exact template step and one exact amplitude
/// step from the previous atom.
fn monotone_update(clusters: &[Cluster], old: &Template, old_x: &[f64], h: Template, x: Vec<f64>) -> (Template, Vec<f64>) {
    let before = cluster_energy(clusters, old.values(), old_x);
    if cluster_energy(clusters, h.values(), &x) <= before {
        return (h, x);
    }
    let refit = fit_amplitudes(clusters, h.values(), x.len());
    if cluster_energy(clusters, h.values(), &refit) <= before {
        return (h, refit);
    }
    let mut g = fit_template(clusters, old_x, old.len());
    if math::dot(&g, old.values()) < 0.0 {
        g.iter_mut().for_each(|v| *v = -*v);
    }
    if let Ok(t) = normalize_template(&g) {
        let x = fit_amplitudes(clusters, t.values(), old_x.len());
        if cluster_energy(clusters, t.values(), &x) <= before {
            return (t, x);
        }
    }
    (old.clone(), old_x.to_vec())
}

/// Normalized length-`l` residual segment of largest energy, taken from the
/// window with the largest residual energy.
fn worst_explained_segment(y: &WindowedSignal, d: &Dictionary, code: &EventList) -> Result<Option<Template>> {
    let l = d.template_length();
    let w = y.window_length();
    let mut recon = vec![0.0; y.concatenated().len()];
    add_events(d, code.events(), &mut recon)?;
    let residual: Vec<f64> = y.concatenated().iter().zip(&recon).map(|(a, b)| a - b).collect();
    let Some((j, _)) = residual
        .chunks_exact(w)
        .map(math::norm_sq)
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (j, e)| match best {
            Some((_, b)) if b >= e => best,
            _ => Some((j, e)),
        })
    else {
        return Ok(None);
    };
    let win = &residual[j * w..(j + 1) * w];
    let mut energy: f64 = math::norm_sq(&win[..l]);
    let (mut best_k, mut best_e) = (0, energy);
    for k in 1..=w - l {
        energy += win[k + l - 1] * win[k + l - 1] - win[k - 1] * win[k - 1];
        if energy > best_e {
            best_e = energy;
            best_k = k;
        }
    }
    Ok(normalize_template(&win[best_k..best_k + l]).ok())
}

/// Settings of the alternating minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    /// Number of coding + update iterations.
    pub iterations: usize,
    /// Stopping rule of the inner cOMP.
    pub stop: StoppingRule,
    /// Successive-iterate error distance below which an iteration counts as converged.
    pub tolerance: f64,
    /// Stop at the first converged iteration instead of running all of them.
    pub early_stop: bool,
    pub reseed_unused: bool,
    pub record_history: bool,
}

impl LearnConfig {
    pub fn new(iterations: usize, stop: StoppingRule) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::Domain("at least one iteration"));
        }
        Ok(Self {
            iterations,
            stop,
            tolerance: 1e-6,
            early_stop: false,
            reseed_unused: false,
            record_history: true,
        })
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    /// `‖Y - HX‖_F²` after the dictionary update.
    pub objective: f64,
    /// Error distance between this iterate and the initial dictionary.
    pub error_distance_to_init: f64,
    /// Error distance between this iterate and the previous one.
    pub change: f64,
    pub num_events: usize,
}

#[derive(Debug, Clone)]
pub struct LearnResult {
    pub dictionary: Dictionary,
    pub code: EventList,
    pub history: Vec<IterationRecord>,
    /// First iteration whose change fell below the tolerance.
    pub converged_at: Option<usize>,
}

/// Alternating cOMP / cKSVD, coding windows sequentially.
pub fn learn(y: &WindowedSignal, d0: &Dictionary, cfg: &LearnConfig) -> Result<LearnResult> {
    learn_with(y, d0, cfg, &SequentialEncoder)
}

/// Alternating minimization with a caller-supplied window encoder.
pub fn learn_with<E: WindowEncoder + ?Sized>(
    y: &WindowedSignal,
    d0: &Dictionary,
    cfg: &LearnConfig,
    encoder: &E,
) -> Result<LearnResult> {
    if cfg.iterations == 0 {
        return Err(Error::Domain("at least one iteration"));
    }
    let opts = PassOptions {
        reseed_unused: cfg.reseed_unused,
    };
    let mut dict = d0.clone();
    let mut code = EventList::empty();
    let mut history = Vec::new();
    let mut converged_at = None;
    for t in 1..=cfg.iterations {
        let coded = encoder.encode_all(y, &dict, &cfg.stop)?;
        if coded.is_empty() {
            return Err(Error::NoEvents { iteration: t });
        }
        let (next, updated) = cksvd_pass_observed(y, &dict, &coded, opts, |_, _, _| {})?;
        let change = error_distance(&next, &dict)?;
        if cfg.record_history {
            history.push(IterationRecord {
                iteration: t,
                objective: objective(y, &next, &updated)?,
                error_distance_to_init: error_distance(&next, d0)?,
                change,
                num_events: updated.len(),
            });
        }
        dict = next;
        code = updated;
        if converged_at.is_none() && change < cfg.tolerance {
            converged_at = Some(t);
            if cfg.early_stop {
                break;
            }
        }
    }
    Ok(LearnResult {
        dictionary: dict,
        code,
        history,
        converged_at,
    })
}

/// Events of `code` that fall in window `j`, with window-local positions.
pub fn window_events(code: &EventList, window_length: usize, j: usize) -> Vec<Event> {
    let lo = j * window_length;
    let hi = lo + window_length;
    code.iter()
        .filter(|e| (lo..hi).contains(&e.position))
        .map(|e| Event {
            position: e.position - lo,
            ..*e
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::reconstruct;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dictionary(rng: &mut ChaCha8Rng, c: usize, l: usize) -> Dictionary {
        let rows: Vec<Vec<f64>> = (0..c)
            .map(|_| (0..l).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Dictionary::from_rows(&rows).unwrap()
    }

    fn windowed(d: &Dictionary, code: &EventList, w: usize, j: usize) -> WindowedSignal {
        let mut data = Vec::new();
        for k in 0..j {
            data.extend(reconstruct(d, &window_events(code, w, k), w).unwrap());
        }
        WindowedSignal::from_columns(data, w).unwrap()
    }

    #[test]
    fn single_event_patch_is_scaled_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_dictionary(&mut rng, 1, 6);
        let code = EventList::new(vec![Event::new(0, 10, 2.5)]).unwrap();
        let y = windowed(&d, &code, 40, 1);
        let p = extract_patches(&y, &d, &code, 0).unwrap();
        assert_eq!(p.len(), 1);
        for (a, b) in p.residual_column(0).iter().zip(d.template(0).values()) {
            assert!((a - 2.5 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn disjoint_neurons_have_no_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_dictionary(&mut rng, 2, 6);
        let code = EventList::new(vec![Event::new(0, 3, 1.0), Event::new(1, 20, 1.0)]).unwrap();
        let y = windowed(&d, &code, 40, 1);
        let p = extract_patches(&y, &d, &code, 0).unwrap();
        assert!(p.interference(0).iter().all(|&v| v == 0.0));
        assert!(matches!(
            extract_patches(&y, &d, &EventList::new(vec![Event::new(1, 20, 1.0)]).unwrap(), 0),
            Err(Error::EmptyPatchSet { neuron: 0 })
        ));
    }

    #[test]
    fn half_overlap_matches_dense_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = 8;
        let d = random_dictionary(&mut rng, 2, l);
        let code = EventList::new(vec![
            Event::new(0, 40 + 10, 1.3),
            Event::new(1, 40 + 14, -0.7),
            Event::new(1, 40 + 3, 0.4),
        ])
        .unwrap();
        let mut y = windowed(&d, &code, 40, 2);
        let noise: Vec<f64> = (0..80).map(|_| rng.random_range(-0.1..0.1)).collect();
        y = WindowedSignal::from_columns(y.concatenated().iter().zip(&noise).map(|(a, b)| a + b).collect(), 40).unwrap();
        let p = extract_patches(&y, &d, &code, 0).unwrap();
        // Dense oracle: full reconstruction of neuron 1 only, cut at the patch.
        let others: Vec<Event> = window_events(&code, 40, 1).into_iter().filter(|e| e.neuron == 1).collect();
        let dense = reconstruct(&d, &others, 40).unwrap();
        let col = y.column(1);
        let e = p.residual_column(0);
        for s in 0..l {
            assert!((e[s] - (col[10 + s] - dense[10 + s])).abs() < 1e-12);
        }
        assert_eq!(p.sources()[0], PatchSource { window: 1, position: 10, event_index: 0 });
    }

    fn patch_set_from_columns(cols: &[Vec<f64>]) -> PatchSet {
        let l = cols[0].len();
        PatchSet {
            neuron: 0,
            template_length: l,
            observations: cols.iter().flatten().copied().collect(),
            interference: vec![0.0; l * cols.len()],
            codes: vec![1.0; cols.len()],
            sources: (0..cols.len())
                .map(|i| PatchSource { window: 0, position: 0, event_index: i })
                .collect(),
        }
    }

    #[test]
    fn rank1_of_rank1_input() {
        let h = normalize_template(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        let cols: Vec<Vec<f64>> = [2.0, 3.0].iter().map(|a| h.values().iter().map(|v| a * v).collect()).collect();
        let p = patch_set_from_columns(&cols);
        let (hh, x) = rank1_update(&p, &h).unwrap();
        for (a, b) in hh.values().iter().zip(h.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);

        // Sign follows the previous template.
        let (neg, xn) = rank1_update(&p, &h.negated()).unwrap();
        assert!((neg.values()[0] + h.values()[0]).abs() < 1e-12);
        assert!((xn[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank1_exact_outer_product_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cols: Vec<Vec<f64>> = v.iter().map(|b| u.iter().map(|a| a * b).collect()).collect();
        let p = patch_set_from_columns(&cols);
        let prev = normalize_template(&u).unwrap();
        let (h, x) = rank1_update(&p, &prev).unwrap();
        let mut res = 0.0;
        for (col, xi) in cols.iter().zip(&x) {
            for (a, hv) in col.iter().zip(h.values()) {
                res += (a - hv * xi).powi(2);
            }
        }
        assert!(res.sqrt() < 1e-10);
    }

    #[test]
    fn rank1_tail_energy_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let cols: Vec<Vec<f64>> = (0..5).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let p = patch_set_from_columns(&cols);
            let prev = normalize_template(&cols[0]).unwrap();
            let (h, x) = rank1_update(&p, &prev).unwrap();
            let mut res = 0.0;
            for (col, xi) in cols.iter().zip(&x) {
                for (a, hv) in col.iter().zip(h.values()) {
                    res += (a - hv * xi).powi(2);
                }
            }
            let m = nalgebra::DMatrix::from_fn(8, 5, |i, j| cols[j][i]);
            let sv = m.svd(false, false).singular_values;
            let mut s: Vec<f64> = sv.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            let tail: f64 = s[1..].iter().map(|v| v * v).sum();
            assert!((res - tail).abs() < 1e-9);
        }
    }

    #[test]
    fn rank1_zero_matrix_is_degenerate() {
        let p = patch_set_from_columns(&[vec![0.0; 4]]);
        let prev = normalize_template(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(rank1_update(&p, &prev), Err(Error::DegenerateAtom { neuron: 0 }));
    }

    #[test]
    fn pass_fixed_point_on_exact_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random_dictionary(&mut rng, 2, 6);
        let code = EventList::new(vec![
            Event::new(0, 5, 2.0),
            Event::new(1, 8, -1.0),
            Event::new(0, 45, 1.5),
            Event::new(1, 70, 3.0),
        ])
        .unwrap();
        let y = windowed(&d, &code, 40, 2);
        let (d1, c1) = cksvd_pass(&y, &d, &code).unwrap();
        assert!(error_distance(&d, &d1).unwrap() < 1e-10);
        for (a, b) in code.iter().zip(c1.iter()) {
            assert!((a.amplitude - b.amplitude).abs() < 1e-9);
        }
        let (d2, c2) = cksvd_pass(&y, &d1, &c1).unwrap();
        let (d3, _) = cksvd_pass(&y, &d2, &c2).unwrap();
        for (a, b) in d2.templates().iter().zip(d3.templates()) {
            assert!(math::dot(a.values(), b.values()) > 0.0);
            for (x, z) in a.values().iter().zip(b.values()) {
                assert!((x - z).abs() < 1e-12);
            }
        }
        assert_eq!(d2.templates(), d3.templates());
    }

    #[test]
    fn single_atom_recovered_from_known_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth = random_dictionary(&mut rng, 1, 10);
        let events: Vec<Event> = (0..12).map(|k| Event::new(0, k * 50 + 3, rng.random_range(1.0..3.0))).collect();
        let code = EventList::new(events).unwrap();
        let y = windowed(&truth, &code, 100, 6);
        let noisy: Vec<f64> = truth.template(0).values().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        let start = Dictionary::from_rows(&[noisy]).unwrap();
        let (d1, _) = cksvd_pass(&y, &start, &code).unwrap();
        assert!(error_distance(&d1, &truth).unwrap() < 1e-6);
    }

    #[test]
    fn pass_preserves_support_and_norms_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let l = 8;
            let d = random_dictionary(&mut rng, 3, l);
            let w = 80;
            let mut events = Vec::new();
            for j in 0..3 {
                for c in 0..3 {
                    let mut p = rng.random_range(0..10);
                    while p <= w - l {
                        events.push(Event::new(c, j * w + p, rng.random_range(-2.0..2.0)));
                        p += l + rng.random_range(0..20);
                    }
                }
            }
            let code = EventList::new(events).unwrap();
            let data: Vec<f64> = (0..3 * w).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = WindowedSignal::from_columns(data, w).unwrap();
            let mut prev = objective(&y, &d, &code).unwrap();
            let (d1, c1) = cksvd_pass_observed(&y, &d, &code, PassOptions::default(), |_, dd, cc| {
                let now = objective(&y, dd, cc).unwrap();
                assert!(now <= prev + 1e-9 * prev.max(1.0), "{now} > {prev}");
                prev = now;
            })
            .unwrap();
            assert_eq!(code.support(), c1.support());
            for t in d1.templates() {
                assert!((math::norm(t.values()) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pass_is_monotone_with_self_overlapping_events() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let l = 6;
            let w = 60;
            let d = random_dictionary(&mut rng, 2, l);
            let mut events = Vec::new();
            for j in 0..2 {
                for c in 0..2 {
                    let mut p = rng.random_range(0..4);
                    while p <= w - l {
                        events.push(Event::new(c, j * w + p, rng.random_range(-2.0..2.0)));
                        p += rng.random_range(1..8);
                    }
                }
            }
            let code = EventList::new(events).unwrap();
            let data: Vec<f64> = (0..2 * w).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = WindowedSignal::from_columns(data, w).unwrap();
            let mut prev = objective(&y, &d, &code).unwrap();
            cksvd_pass_observed(&y, &d, &code, PassOptions::default(), |_, dd, cc| {
                let now = objective(&y, dd, cc).unwrap();
                assert!(now <= prev + 1e-9 * prev.max(1.0), "{now} > {prev}");
                prev = now;
            })
            .unwrap();
        }
    }

    #[test]
    fn fallback_steps_are_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let l = 5;
        let target: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cl = [Cluster {
            members: vec![(0, 0), (3, 1), (7, 2)],
            target,
        }];
        let old = normalize_template(&[1.0, -0.5, 0.3, 0.2, -0.1]).unwrap();
        let x0 = [0.7, -0.4, 1.1];
        let g = fit_template(&cl, &x0, l);
        let x1 = fit_amplitudes(&cl, old.values(), 3);
        let best_h = cluster_energy(&cl, &g, &x0);
        let best_x = cluster_energy(&cl, old.values(), &x1);
        for _ in 0..50 {
            let dh: Vec<f64> = g.iter().map(|v| v + rng.random_range(-0.01..0.01)).collect();
            assert!(cluster_energy(&cl, &dh, &x0) >= best_h - 1e-12);
            let dx: Vec<f64> = x1.iter().map(|v| v + rng.random_range(-0.01..0.01)).collect();
            assert!(cluster_energy(&cl, old.values(), &dx) >= best_x - 1e-12);
        }
        let bad = normalize_template(&[-1.0, 2.0, 0.0, 0.0, 3.0]).unwrap();
        let (h, x) = monotone_update(&cl, &old, &x0, bad, vec![5.0, 5.0, 5.0]);
        assert!(cluster_energy(&cl, h.values(), &x) < cluster_energy(&cl, old.values(), &x0));
    }

    #[test]
    fn unused_atom_kept_or_reseeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_dictionary(&mut rng, 2, 5);
        let code = EventList::new(vec![Event::new(0, 4, 1.0)]).unwrap();
        let mut y = windowed(&d, &code, 30, 1);
        let mut data = y.concatenated().to_vec();
        data[20] += 5.0;
        y = WindowedSignal::from_columns(data, 30).unwrap();
        let (kept, _) = cksvd_pass(&y, &d, &code).unwrap();
        assert_eq!(kept.template(1), d.template(1));
        let (reseeded, _) =
            cksvd_pass_observed(&y, &d, &code, PassOptions { reseed_unused: true }, |_, _, _| {}).unwrap();
        assert_ne!(reseeded.template(1), d.template(1));
        assert!(reseeded.template(1).values().iter().any(|v| (v.abs() - 1.0).abs() < 1e-3));
    }

    #[test]
    fn learn_from_truth_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = random_dictionary(&mut rng, 2, 8);
        let code = EventList::new(vec![
            Event::new(0, 5, 2.0),
            Event::new(1, 40, -1.5),
            Event::new(0, 130, 1.0),
            Event::new(1, 170, 2.5),
        ])
        .unwrap();
        let y = windowed(&d, &code, 100, 2);
        let cfg = LearnConfig::new(3, StoppingRule::residual(0.0).unwrap()).unwrap();
        let out = learn(&y, &d, &cfg).unwrap();
        assert_eq!(out.converged_at, Some(1));
        assert!(out.history[0].objective < 1e-10);
        assert!(error_distance(&out.dictionary, &d).unwrap() < 1e-10);
        assert_eq!(out.history.len(), 3);
    }

    #[test]
    fn learn_rejects_empty_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = random_dictionary(&mut rng, 1, 4);
        let y = WindowedSignal::from_columns(vec![0.0; 40], 20).unwrap();
        let cfg = LearnConfig::new(2, StoppingRule::residual(1.0).unwrap()).unwrap();
        assert_eq!(learn(&y, &d, &cfg).unwrap_err(), Error::NoEvents { iteration: 1 });
    }
}

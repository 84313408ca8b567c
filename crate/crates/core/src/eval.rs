//! Sorting metrics and the threshold + PCA + K-means baseline.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::math;
use crate::signal::{Dictionary, Event, EventList};

/// Default matching window in samples (1 ms at 30 kHz).
pub const DEFAULT_MATCH_TOLERANCE: usize = 30;
pub const DEFAULT_COMPONENTS: usize = 10;
pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_LLOYD_ITERATIONS: usize = 300;

/// One-to-one pairs `(truth index, detected index)` into the respective event lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
}

fn greedy_pairs(truth: &[Event], detected: &[Event], tol: usize) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    let mut start = 0;
    for (i, t) in truth.iter().enumerate() {
        while start < detected.len() && detected[start].position + tol < t.position {
            start += 1;
        }
        for (k, d) in detected[start..].iter().enumerate() {
            if d.position > t.position + tol {
                break;
            }
            candidates.push((t.position.abs_diff(d.position), i, start + k));
        }
    }
    candidates.sort_unstable();
    let mut used_t = vec![false; truth.len()];
    let mut used_d = vec![false; detected.len()];
    let mut pairs = Vec::new();
    for (_, i, k) in candidates {
        if !used_t[i] && !used_d[k] {
            used_t[i] = true;
            used_d[k] = true;
            pairs.push((i, k));
        }
    }
    pairs
}

/// Greedy per-neuron matching: closest pairs within `tol` samples first.
pub fn match_spikes(truth: &EventList, detected: &EventList, tol: usize) -> Matching {
    let n = truth.neuron_count().max(detected.neuron_count());
    let mut pairs = Vec::new();
    for c in 0..n {
        let t = truth.for_neuron(c);
        let d = detected.for_neuron(c);
        let t0 = truth.events().partition_point(|e| e.neuron < c);
        let d0 = detected.events().partition_point(|e| e.neuron < c);
        pairs.extend(greedy_pairs(t, d, tol).into_iter().map(|(i, k)| (t0 + i, d0 + k)));
    }
    pairs.sort_unstable();
    Matching { pairs }
}

/// Counts and rates for one neuron, or pooled over neurons.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rates {
    pub num_true: usize,
    pub num_detected: usize,
    pub num_matched: usize,
    pub true_miss: f64,
    pub false_alarm: f64,
}

impl Rates {
    pub fn from_counts(num_true: usize, num_detected: usize, num_matched: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            num_true,
            num_detected,
            num_matched,
            true_miss: ratio(num_true - num_matched, num_true),
            false_alarm: ratio(num_detected - num_matched, num_detected),
        }
    }

    pub fn summed(&self) -> f64 {
        self.true_miss + self.false_alarm
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SortReport {
    pub per_neuron: Vec<Rates>,
    pub pooled: Rates,
    pub matching: Matching,
    pub threshold: Option<f64>,
}

impl SortReport {
    /// Σ over neurons of (true miss + false alarm).
    pub fn summed_error(&self) -> f64 {
        self.per_neuron.iter().map(Rates::summed).sum()
    }
}

/// Per-neuron and pooled rates of a matching; empty denominators give 0.
pub fn rates(matching: &Matching, truth: &EventList, detected: &EventList) -> SortReport {
    let n = truth.neuron_count().max(detected.neuron_count());
    let mut matched = vec![0usize; n];
    for &(i, _) in &matching.pairs {
        matched[truth.events()[i].neuron] += 1;
    }
    let per_neuron: Vec<Rates> = (0..n)
        .map(|c| Rates::from_counts(truth.for_neuron(c).len(), detected.for_neuron(c).len(), matched[c]))
        .collect();
    SortReport {
        pooled: Rates::from_counts(truth.len(), detected.len(), matching.pairs.len()),
        per_neuron,
        matching: matching.clone(),
        threshold: None,
    }
}

/// Matches and scores in one step.
pub fn evaluate(truth: &EventList, detected: &EventList, tol: usize) -> SortReport {
    rates(&match_spikes(truth, detected, tol), truth, detected)
}

/// Rendered peak magnitude `|amplitude · template peak|` of a detection.
pub fn rendered_peak(d: &Dictionary, e: &Event) -> f64 {
    math::abs(e.amplitude * d.template(e.neuron).peak().1)
}

/// Rates after discarding detections whose rendered peak is below each threshold.
pub fn threshold_sweep(
    truth: &EventList,
    detected: &EventList,
    d: &Dictionary,
    thresholds: &[f64],
    tol: usize,
) -> Result<Vec<SortReport>> {
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Domain("thresholds must be sorted ascending"));
    }
    if detected.iter().any(|e| e.neuron >= d.num_atoms()) {
        return Err(Error::ShapeMismatch("detection neuron outside dictionary"));
    }
    Ok(thresholds
        .iter()
        .map(|&theta| {
            let kept = detected.filtered(|e| rendered_peak(d, e) >= theta);
            let mut r = evaluate(truth, &kept, tol);
            r.threshold = Some(theta);
            r
        })
        .collect())
}

/// Sweep row with the smallest summed error (first on ties).
pub fn best_of(reports: &[SortReport]) -> Option<&SortReport> {
    reports
        .iter()
        .fold(None, |best: Option<&SortReport>, r| match best {
            Some(b) if b.summed_error() <= r.summed_error() => Some(b),
            _ => Some(r),
        })
}

/// Positions of the local extremum of each threshold crossing of `|x|`;
/// crossings within `l` samples after a detected peak are suppressed.
pub fn detect_threshold_crossings(x: &[f64], theta: f64, l: usize) -> Result<Vec<usize>> {
    if !(theta > 0.0) {
        return Err(Error::Domain("detection threshold must be positive"));
    }
    let l = l.max(1);
    let mut out = Vec::new();
    let mut i = 0;
    while i < x.len() {
        if math::abs(x[i]) > theta {
            let end = (i + l).min(x.len());
            let mut peak = i;
            for k in i..end {
                if math::abs(x[k]) > math::abs(x[peak]) {
                    peak = k;
                }
            }
            out.push(peak);
            i = peak + l;
        } else {
            i += 1;
        }
    }
    Ok(out)
}

/// Principal-component model of a set of snippets.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm directions, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the covariance (all of them, descending).
    pub variances: Vec<f64>,
    /// Fraction of total variance captured by `components`.
    pub explained: f64,
}

impl Pca {
    pub fn project(&self, snippet: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = snippet.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.components.iter().map(|c| math::dot(c, &centered)).collect()
    }
}

/// Fits a PCA with `min(p, #snippets)` components and returns it with the scores.
pub fn pca_project<S: AsRef<[f64]>>(snippets: &[S], p: usize) -> Result<(Pca, Vec<Vec<f64>>)> {
    let n = snippets.len();
    if n == 0 {
        return Err(Error::TooFewPoints { points: 0, clusters: p });
    }
    let dim = snippets[0].as_ref().len();
    if snippets.iter().any(|s| s.as_ref().len() != dim) {
        return Err(Error::ShapeMismatch("snippets of unequal length"));
    }
    let mut mean = vec![0.0; dim];
    for s in snippets {
        for (m, v) in mean.iter_mut().zip(s.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; dim * dim];
    for s in snippets {
        let c: Vec<f64> = s.as_ref().iter().zip(&mean).map(|(a, m)| a - m).collect();
        for a in 0..dim {
            for b in a..dim {
                cov[a * dim + b] += c[a] * c[b];
            }
        }
    }
    let eig = symmetric_eigen(&cov, dim);
    let variances: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let k = p.min(n).min(dim);
    let total: f64 = variances.iter().sum();
    let explained = if total > 0.0 {
        variances[..k].iter().sum::<f64>() / total
    } else {
        1.0
    };
    let pca = Pca {
        mean,
        components: eig.vectors[..k].to_vec(),
        variances,
        explained,
    };
    let scores = snippets.iter().map(|s| pca.project(s.as_ref())).collect();
    Ok((pca, scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn lloyd<S: AsRef<[f64]>>(points: &[S], first: usize, k: usize) -> KMeans {
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p.as_ref(), points[first].as_ref())).collect();
    while chosen.len() < k {
        let mut far = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[far] {
                far = i;
            }
        }
        chosen.push(far);
        for (i, p) in points.iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(p.as_ref(), points[far].as_ref()));
        }
    }
    let mut centroids: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].as_ref().to_vec()).collect();
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(&centroids, p.as_ref());
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        history.push(inertia(points, &centroids, &labels));
        if !changed {
            break;
        }
        let dim = centroids[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p.as_ref()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        history.push(inertia(points, &centroids, &labels));
    }
    KMeans {
        inertia: inertia(points, &centroids, &labels),
        labels,
        centroids,
        history,
    }
}

fn inertia<S: AsRef<[f64]>>(points: &[S], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &c)| sq_dist(p.as_ref(), &centroids[c]))
        .sum()
}

/// Lloyd's algorithm from farthest-point seeding; the first seed is drawn from `seed`.
pub fn kmeans_cluster<S: AsRef<[f64]>>(points: &[S], k: usize, seed: u64) -> Result<KMeans> {
    kmeans_restarts(points, k, seed, 1)
}

/// Best (lowest-inertia) of `restarts` seeded runs.
pub fn kmeans_restarts<S: AsRef<[f64]>>(points: &[S], k: usize, seed: u64, restarts: usize) -> Result<KMeans> {
    if k == 0 || k > points.len() {
        return Err(Error::TooFewPoints {
            points: points.len(),
            clusters: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, rng.random_range(0..points.len()), k);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Injective cluster → neuron assignment minimizing Σ_neurons (miss + FA),
/// with `min(K, C)` clusters assigned. `clusters` carries cluster ids in
/// its `neuron` field.
pub fn assign_clusters(
    truth: &EventList,
    clusters: &EventList,
    num_clusters: usize,
    num_neurons: usize,
    tol: usize,
) -> (Vec<Option<usize>>, SortReport) {
    let mut matched = vec![vec![0usize; num_neurons]; num_clusters];
    for (k, row) in matched.iter_mut().enumerate() {
        for (c, m) in row.iter_mut().enumerate() {
            *m = greedy_pairs(truth.for_neuron(c), clusters.for_neuron(k), tol).len();
        }
    }
    let sizes: Vec<usize> = (0..num_clusters).map(|k| clusters.for_neuron(k).len()).collect();
    let truth_sizes: Vec<usize> = (0..num_neurons).map(|c| truth.for_neuron(c).len()).collect();
    let target = num_clusters.min(num_neurons);
    let mut best: Option<(f64, Vec<Option<usize>>)> = None;
    let mut current = vec![None; num_clusters];
    let mut used = vec![false; num_neurons];
    search(0, 0, target, &mut current, &mut used, &mut |map: &[Option<usize>]| {
        let mut cost = 0.0;
        for c in 0..num_neurons {
            let k = map.iter().position(|m| *m == Some(c));
            let r = match k {
                Some(k) => Rates::from_counts(truth_sizes[c], sizes[k], matched[k][c]),
                None => Rates::from_counts(truth_sizes[c], 0, 0),
            };
            cost += r.summed();
        }
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, map.to_vec()));
        }
    });
    let map = best.map(|b| b.1).unwrap_or_default();
    let relabeled = clusters
        .relabeled(&map)
        .expect("an injective relabeling keeps events distinct");
    (map, evaluate(truth, &relabeled, tol))
}

fn search<F: FnMut(&[Option<usize>])>(
    k: usize,
    assigned: usize,
    target: usize,
    current: &mut [Option<usize>],
    used: &mut [bool],
    visit: &mut F,
) {
    if k == current.len() {
        if assigned == target {
            visit(current);
        }
        return;
    }
    if current.len() - k > target - assigned {
        current[k] = None;
        search(k + 1, assigned, target, current, used, visit);
    }
    if assigned < target {
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                current[k] = Some(c);
                search(k + 1, assigned + 1, target, current, used, visit);
                used[c] = false;
                current[k] = None;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub threshold: f64,
    pub snippet_length: usize,
    pub components: usize,
    pub clusters: usize,
    pub restarts: usize,
    pub tolerance: usize,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(threshold: f64, snippet_length: usize, clusters: usize, seed: u64) -> Self {
        Self {
            threshold,
            snippet_length,
            components: DEFAULT_COMPONENTS,
            clusters,
            restarts: DEFAULT_RESTARTS,
            tolerance: DEFAULT_MATCH_TOLERANCE,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub threshold: f64,
    pub pca: Pca,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub model: BaselineModel,
    /// Detections at snippet starts, labelled by assigned neuron, amplitude = peak value.
    pub detections: EventList,
    pub report: SortReport,
}

/// Snippet start for a detected peak: the peak sits at a third of the snippet.
pub fn snippet_start(peak: usize, snippet_length: usize) -> Option<usize> {
    peak.checked_sub(snippet_length / 3)
}

/// Threshold detection, PCA features, K-means and the best cluster-to-neuron assignment.
pub fn baseline_sort(x: &[f64], cfg: &BaselineConfig, truth: &EventList) -> Result<BaselineResult> {
    let l = cfg.snippet_length;
    let peaks = detect_threshold_crossings(x, cfg.threshold, l)?;
    let starts: Vec<(usize, usize)> = peaks
        .into_iter()
        .filter_map(|p| snippet_start(p, l).filter(|s| s + l <= x.len()).map(|s| (s, p)))
        .collect();
    let snippets: Vec<&[f64]> = starts.iter().map(|&(s, _)| &x[s..s + l]).collect();
    if snippets.len() < cfg.clusters {
        return Err(Error::TooFewPoints {
            points: snippets.len(),
            clusters: cfg.clusters,
        });
    }
    let (pca, scores) = pca_project(&snippets, cfg.components)?;
    let km = kmeans_restarts(&scores, cfg.clusters, cfg.seed, cfg.restarts)?;
    let clusters = EventList::new(
        starts
            .iter()
            .zip(&km.labels)
            .map(|(&(s, p), &k)| Event::new(k, s, x[p]))
            .collect(),
    )?;
    let num_neurons = truth.neuron_count().max(cfg.clusters);
    let (assignment, mut report) = assign_clusters(truth, &clusters, cfg.clusters, num_neurons, cfg.tolerance);
    report.threshold = Some(cfg.threshold);
    Ok(BaselineResult {
        detections: clusters.relabeled(&assignment)?,
        model: BaselineModel {
            threshold: cfg.threshold,
            pca,
            centroids: km.centroids,
            assignment,
        },
        report,
    })
}

//! Matrix-free products with the convolutional dictionary `H`.
//!
//! `Hᵀr` is a bank of `C` cross-correlations and `HX` is a sum of shifted,
//! scaled templates, so `H` itself is never formed.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::signal::{Dictionary, Event, Template};

/// A cross-correlation kernel: `out[k] = Σ_m h[m]·r[k+m]` for `k = 0..=r.len()-h.len()`.
pub trait Correlator: Sync {
    fn correlate_into(&self, h: &[f64], r: &[f64], out: &mut [f64]);
}

/// Time-domain kernel, `O(W·l)` per template.
#[derive(Debug, Clone, Copy, Default)]
pub struct DirectCorrelator;

impl Correlator for DirectCorrelator {
    fn correlate_into(&self, h: &[f64], r: &[f64], out: &mut [f64]) {
        let l = h.len();
        for (k, o) in out.iter_mut().enumerate() {
            *o = math::dot(h, &r[k..k + l]);
        }
    }
}

/// Valid-mode cross-correlation of `h` against `r`.
pub fn cross_correlate(h: &Template, r: &[f64]) -> Result<Vec<f64>> {
    let l = h.len();
    if r.len() < l {
        return Err(Error::ShapeMismatch("signal shorter than template"));
    }
    let mut out = vec![0.0; r.len() - l + 1];
    DirectCorrelator.correlate_into(h.values(), r, &mut out);
    Ok(out)
}

/// `Hᵀr` arranged per neuron: entry `(c, k)` is `<shift(h_c, k), r>`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationProfile {
    num_shifts: usize,
    data: Vec<f64>,
}

impl CorrelationProfile {
    pub fn zeros(num_atoms: usize, num_shifts: usize) -> Self {
        Self {
            num_shifts,
            data: vec![0.0; num_atoms * num_shifts],
        }
    }

    pub fn num_atoms(&self) -> usize {
        if self.num_shifts == 0 {
            0
        } else {
            self.data.len() / self.num_shifts
        }
    }

    /// `W - l + 1`.
    pub fn num_shifts(&self) -> usize {
        self.num_shifts
    }

    pub fn neuron(&self, c: usize) -> &[f64] {
        &self.data[c * self.num_shifts..(c + 1) * self.num_shifts]
    }

    pub fn neuron_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.num_shifts..(c + 1) * self.num_shifts]
    }

    pub fn get(&self, c: usize, k: usize) -> f64 {
        self.data[c * self.num_shifts + k]
    }

    /// Flat view in `H` column order (neuron-major).
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `Hᵀr` with the direct kernel.
pub fn correlate_dictionary(d: &Dictionary, r: &[f64]) -> Result<CorrelationProfile> {
    correlate_dictionary_with(d, r, &DirectCorrelator)
}

/// `Hᵀr` with a caller-chosen kernel.
pub fn correlate_dictionary_with<K: Correlator + ?Sized>(
    d: &Dictionary,
    r: &[f64],
    kernel: &K,
) -> Result<CorrelationProfile> {
    let l = d.template_length();
    if r.len() < l {
        return Err(Error::ShapeMismatch("window shorter than template"));
    }
    let mut profile = CorrelationProfile::zeros(d.num_atoms(), r.len() - l + 1);
    for (c, t) in d.templates().iter().enumerate() {
        kernel.correlate_into(t.values(), r, profile.neuron_mut(c));
    }
    Ok(profile)
}

/// `HX` for a window of length `w`: the sum of `amplitude · shift(h_c, position)`.
pub fn reconstruct(d: &Dictionary, code: &[Event], w: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; w];
    add_events(d, code, &mut out)?;
    Ok(out)
}

/// Adds `Σ amplitude · shift(h_c, position)` into `out`.
pub fn add_events(d: &Dictionary, code: &[Event], out: &mut [f64]) -> Result<()> {
    let l = d.template_length();
    for e in code {
        if e.neuron >= d.num_atoms() || out.len() < l || e.position > out.len() - l {
            return Err(Error::InvalidEvent {
                neuron: e.neuron,
                position: e.position,
            });
        }
        let h = d.template(e.neuron).values();
        for (o, v) in out[e.position..e.position + l].iter_mut().zip(h) {
            *o += e.amplitude * v;
        }
    }
    Ok(())
}

/// `<shift(h_{c1}, n1), shift(h_{c2}, n2)>`, exactly 0 when the supports are disjoint.
pub fn inner_product_shifted(d: &Dictionary, c1: usize, n1: usize, c2: usize, n2: usize) -> f64 {
    let l = d.template_length();
    let (a, b, lag) = if n2 >= n1 {
        (d.template(c1).values(), d.template(c2).values(), n2 - n1)
    } else {
        (d.template(c2).values(), d.template(c1).values(), n1 - n2)
    };
    if lag >= l {
        return 0.0;
    }
    math::dot(&a[lag..], &b[..l - lag])
}

/// Precomputed inner products of every template pair at every lag.
///
/// `get(c1, c2, lag)` with `lag = n2 - n1` returns the same value as
/// [`inner_product_shifted`], in O(1).
#[derive(Debug, Clone)]
pub struct ShiftGram {
    num_atoms: usize,
    template_length: usize,
    table: Vec<f64>,
}

impl ShiftGram {
    pub fn new(d: &Dictionary) -> Self {
        let c = d.num_atoms();
        let l = d.template_length();
        let span = 2 * l - 1;
        let mut table = vec![0.0; c * c * span];
        for c1 in 0..c {
            for c2 in 0..c {
                for lag in -(l as isize - 1)..=(l as isize - 1) {
                    let (n1, n2) = if lag >= 0 {
                        (0, lag as usize)
                    } else {
                        ((-lag) as usize, 0)
                    };
                    table[(c1 * c + c2) * span + (lag + l as isize - 1) as usize] =
                        inner_product_shifted(d, c1, n1, c2, n2);
                }
            }
        }
        Self {
            num_atoms: c,
            template_length: l,
            table,
        }
    }

    #[inline]
    pub fn get(&self, c1: usize, c2: usize, lag: isize) -> f64 {
        let l = self.template_length as isize;
        if lag <= -l || lag >= l {
            return 0.0;
        }
        self.table[(c1 * self.num_atoms + c2) * (2 * self.template_length - 1) + (lag + l - 1) as usize]
    }

    pub fn template_length(&self) -> usize {
        self.template_length
    }

    pub fn num_atoms(&self) -> usize {
        self.num_atoms
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::normalize_template;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dictionary(rng: &mut ChaCha8Rng, c: usize, l: usize) -> Dictionary {
        let rows: Vec<Vec<f64>> = (0..c)
            .map(|_| (0..l).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Dictionary::from_rows(&rows).unwrap()
    }

    /// Dense `W × C(W-l+1)` block-Toeplitz matrix, column-major.
    fn materialize(d: &Dictionary, w: usize) -> Vec<Vec<f64>> {
        let l = d.template_length();
        let mut cols = Vec::new();
        for t in d.templates() {
            for k in 0..=w - l {
                let mut col = vec![0.0; w];
                col[k..k + l].copy_from_slice(t.values());
                cols.push(col);
            }
        }
        cols
    }

    #[test]
    fn delta_filter_copies() {
        let h = Template::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(cross_correlate(&h, &[0.0, 1.0, 0.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_tap_filter() {
        let h = normalize_template(&[1.0, 2.0]).unwrap();
        let out = cross_correlate(&h, &[1.0, 1.0, 1.0]).unwrap();
        let expect = 3.0 / 5f64.sqrt();
        assert_eq!(out.len(), 2);
        for v in out {
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_correlate_rejects_short_signal() {
        let h = normalize_template(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(cross_correlate(&h, &[1.0, 1.0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn cross_correlate_matches_shifted_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = normalize_template(&(0..8).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
            .unwrap();
        let r: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = cross_correlate(&h, &r).unwrap();
        for k in 0..=56 {
            let mut shifted = vec![0.0; 64];
            shifted[k..k + 8].copy_from_slice(h.values());
            let brute: f64 = shifted.iter().zip(&r).map(|(a, b)| a * b).sum();
            assert!((out[k] - brute).abs() < 1e-10);
        }
    }

    #[test]
    fn self_correlation_peak() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_dictionary(&mut rng, 3, 10);
        let mut r = vec![0.0; 50];
        r[17..27].copy_from_slice(d.template(1).values());
        let p = correlate_dictionary(&d, &r).unwrap();
        assert!((p.get(1, 17) - 1.0).abs() < 1e-12);
        let max = p.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(max, p.get(1, 17).abs());
    }

    #[test]
    fn correlate_dictionary_matches_materialized_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let c = rng.random_range(1..=4);
            let l = rng.random_range(2..=16);
            let w = rng.random_range(l..=128);
            let d = random_dictionary(&mut rng, c, l);
            let r: Vec<f64> = (0..w).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = correlate_dictionary(&d, &r).unwrap();
            let h = materialize(&d, w);
            for (col, got) in h.iter().zip(p.as_slice()) {
                let expect: f64 = col.iter().zip(&r).map(|(a, b)| a * b).sum();
                assert!((got - expect).abs() <= 1e-10 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn reconstruct_examples() {
        let d = Dictionary::from_rows(&[vec![1.0, 2.0, 2.0]]).unwrap();
        assert_eq!(reconstruct(&d, &[], 8).unwrap(), vec![0.0; 8]);
        let out = reconstruct(&d, &[Event::new(0, 3, 2.0)], 8).unwrap();
        let h = d.template(0).values();
        assert_eq!(&out[..3], &[0.0; 3]);
        for m in 0..3 {
            assert_eq!(out[3 + m], 2.0 * h[m]);
        }
        assert_eq!(&out[6..], &[0.0; 2]);
        assert!(matches!(
            reconstruct(&d, &[Event::new(0, 6, 1.0)], 8),
            Err(Error::InvalidEvent { .. })
        ));
    }

    #[test]
    fn reconstruct_matches_materialized_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_dictionary(&mut rng, 2, 6);
        let w = 30;
        let code = [Event::new(0, 4, 1.5), Event::new(1, 7, -0.5), Event::new(0, 20, 2.0)];
        let out = reconstruct(&d, &code, w).unwrap();
        let h = materialize(&d, w);
        let shifts = w - 6 + 1;
        let mut dense = vec![0.0; w];
        for e in &code {
            for (o, v) in dense.iter_mut().zip(&h[e.neuron * shifts + e.position]) {
                *o += e.amplitude * v;
            }
        }
        for (a, b) in out.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adjointness_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let c = rng.random_range(1..=4);
            let l = rng.random_range(2..=16);
            let w = rng.random_range(l..=128);
            let d = random_dictionary(&mut rng, c, l);
            let mut code = Vec::new();
            for ci in 0..c {
                for k in 0..=w - l {
                    if rng.random_bool(0.2) {
                        code.push(Event::new(ci, k, rng.random_range(-2.0..2.0)));
                    }
                }
            }
            let r: Vec<f64> = (0..w).map(|_| rng.random_range(-1.0..1.0)).collect();
            let hx = reconstruct(&d, &code, w).unwrap();
            let lhs = math::dot(&hx, &r);
            let p = correlate_dictionary(&d, &r).unwrap();
            let rhs: f64 = code.iter().map(|e| e.amplitude * p.get(e.neuron, e.position)).sum();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));

            let scaled: Vec<Event> = code.iter().map(|e| Event { amplitude: 3.0 * e.amplitude, ..*e }).collect();
            let other = [Event::new(0, 0, 1.0)];
            let mut both = scaled.clone();
            both.extend_from_slice(&other);
            let lin = reconstruct(&d, &both, w).unwrap();
            let o = reconstruct(&d, &other, w).unwrap();
            for i in 0..w {
                assert!((lin[i] - (3.0 * hx[i] + o[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inner_product_shifted_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_dictionary(&mut rng, 2, 5);
        assert!((inner_product_shifted(&d, 1, 4, 1, 4) - 1.0).abs() < 1e-12);
        assert_eq!(inner_product_shifted(&d, 0, 0, 1, 5), 0.0);
        assert_eq!(inner_product_shifted(&d, 0, 9, 1, 2), 0.0);
        let delta = Dictionary::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(inner_product_shifted(&delta, 0, 3, 0, 4), 0.0);
    }

    #[test]
    fn shift_gram_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_dictionary(&mut rng, 3, 7);
        let g = ShiftGram::new(&d);
        for c1 in 0..3 {
            for c2 in 0..3 {
                for n1 in 0..20usize {
                    for n2 in 0..20usize {
                        let direct = inner_product_shifted(&d, c1, n1, c2, n2);
                        assert_eq!(g.get(c1, c2, n2 as isize - n1 as isize), direct);
                    }
                }
            }
        }
    }
}

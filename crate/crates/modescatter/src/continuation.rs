//! Rational continuation of scattering amplitudes in k within one
//! inter-threshold band: adaptive barycentric interpolation with greedy
//! support-point selection, degree chosen by held-out residual, and
//! rejection of models with poles inside the sampled window.

use nalgebra::{Complex, DMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_SUPPORT: usize = 24;
/// Trust region extends past the sample window by this fraction of its width.
const TRUST_MARGIN: f64 = 0.25;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Barycentric {
    support: Vec<f64>,
    values: Vec<Complex64>,
    weights: Vec<Complex64>,
}

impl Barycentric {
    fn eval(&self, x: f64) -> Complex64 {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = Complex64::new(0.0, 0.0);
        for j in 0..self.support.len() {
            let d = x - self.support[j];
            if d == 0.0 {
                return self.values[j];
            }
            let c = self.weights[j] / d;
            num += c * self.values[j];
            den += c;
        }
        num / den
    }

    /// Coefficients (ascending) of the denominator polynomial
    /// q(z) = sum_j w_j prod_{l != j} (z - z_l).
    fn denominator_coeffs(&self) -> Vec<Complex64> {
        let m = self.support.len();
        // Full product P(z) = prod (z - z_l), ascending coefficients.
        let mut p = vec![Complex64::new(1.0, 0.0)];
        for &z in &self.support {
            let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
            for (i, &c) in p.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * z;
            }
            p = next;
        }
        let mut q = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..m {
            // Synthetic division P / (z - z_j), ascending output of degree m-1.
            let zj = Complex64::new(self.support[j], 0.0);
            let mut quot = vec![Complex64::new(0.0, 0.0); m];
            let mut carry = Complex64::new(0.0, 0.0);
            for i in (0..m).rev() {
                carry = p[i + 1] + carry * zj;
                quot[i] = carry;
            }
            for i in 0..m {
                q[i] += self.weights[j] * quot[i];
            }
        }
        q
    }
}

/// Barycentric rational model of one amplitude over a real k-window, with
/// the previous (one fewer support point) stage kept for error estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationModel {
    best: Barycentric,
    previous: Option<Barycentric>,
    pub window: (f64, f64),
    pub excluded: Vec<(f64, f64)>,
    /// Max relative residual on the held-out samples.
    pub holdout_residual: f64,
}

/// Roots of a complex polynomial (ascending coefficients) by Durand-Kerner.
fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut c = coeffs.to_vec();
    while let Some(last) = c.last() {
        if last.norm() <= 1e-300 && c.len() > 1 {
            c.pop();
        } else {
            break;
        }
    }
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let monic: Vec<Complex64> = c.iter().map(|v| v / lead).collect();
    let radius = 1.0
        + monic[..deg]
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..deg).map(|j| radius * seed.powu(j as u32 + 1)).collect();
    for _ in 0..200 {
        let mut shift = 0.0f64;
        for j in 0..deg {
            let mut num = Complex64::new(0.0, 0.0);
            for &cc in monic.iter().rev() {
                num = num * roots[j] + cc;
            }
            let mut den = Complex64::new(1.0, 0.0);
            for l in 0..deg {
                if l != j {
                    den *= roots[j] - roots[l];
                }
            }
            if den.norm() > 0.0 {
                let d = num / den;
                roots[j] -= d;
                shift = shift.max(d.norm());
            }
        }
        if shift <= 1e-13 * radius {
            break;
        }
    }
    roots
}

fn loewner_weights(
    support: &[f64],
    sup_vals: &[Complex64],
    rest: &[(f64, Complex64)],
) -> Vec<Complex64> {
    let (rows, cols) = (rest.len(), support.len());
    let a = DMatrix::<Complex<f64>>::from_fn(rows, cols, |i, j| {
        (rest[i].1 - sup_vals[j]) / (rest[i].0 - support[j])
    });
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut best = 0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < svd.singular_values[best] {
            best = i;
        }
    }
    (0..cols).map(|j| v_t[(best, j)].conj()).collect()
}

/// Fit a rational approximant to (k, value) samples. A deterministic subset
/// (every round(1/holdout)-th sample) is held out; greedy support-point
/// insertion stops when the held-out residual stops improving, and the best
/// stage is returned. Models whose denominator has a (numerically real)
/// root inside the sample window away from the excluded bands are rejected.
pub fn fit_rational(samples: &[(f64, Complex64)], holdout: f64) -> Result<ContinuationModel> {
    fit_rational_excluding(samples, holdout, &[])
}

pub fn fit_rational_excluding(
    samples: &[(f64, Complex64)],
    holdout: f64,
    excluded: &[(f64, f64)],
) -> Result<ContinuationModel> {
    if samples.len() < 12 {
        return Err(Error::InsufficientSamples(samples.len()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let window = (sorted[0].0, sorted[sorted.len() - 1].0);
    let scale = sorted
        .iter()
        .map(|(_, v)| v.norm())
        .fold(0.0f64, f64::max)
        .max(1e-300);

    let stride = (1.0 / holdout.clamp(0.05, 0.5)).round() as usize;
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, s) in sorted.iter().enumerate() {
        // Keep the endpoints in the training set so the fit window spans
        // the samples.
        if i % stride == stride / 2 && i != 0 && i != sorted.len() - 1 {
            held.push(*s);
        } else {
            train.push(*s);
        }
    }

    let mut support: Vec<f64> = Vec::new();
    let mut sup_vals: Vec<Complex64> = Vec::new();
    let mut rest = train.clone();
    // Start from the sample farthest from the mean.
    let mean = train.iter().map(|(_, v)| v).sum::<Complex64>() / train.len() as f64;
    let mut next = (0..rest.len())
        .max_by(|&a, &b| {
            (rest[a].1 - mean)
                .norm()
                .total_cmp(&(rest[b].1 - mean).norm())
        })
        .unwrap();

    let mut stages: Vec<(Barycentric, f64)> = Vec::new();
    let max_m = MAX_SUPPORT.min(train.len() - 2);
    for _m in 1..=max_m {
        let (x, v) = rest.remove(next);
        support.push(x);
        sup_vals.push(v);
        let weights = loewner_weights(&support, &sup_vals, &rest);
        let bary = Barycentric {
            support: support.clone(),
            values: sup_vals.clone(),
            weights,
        };
        let residual = held
            .iter()
            .map(|(k, f)| (bary.eval(*k) - f).norm())
            .fold(0.0f64, f64::max)
            / scale;
        stages.push((bary.clone(), residual));
        if residual <= 1e-13 {
            break;
        }
        // Next support point: worst training residual.
        if rest.is_empty() {
            break;
        }
        next = (0..rest.len())
            .max_by(|&a, &b| {
                (bary.eval(rest[a].0) - rest[a].1)
                    .norm()
                    .total_cmp(&(bary.eval(rest[b].0) - rest[b].1).norm())
            })
            .unwrap();
    }

    let best_i = (0..stages.len())
        .min_by(|&a, &b| stages[a].1.total_cmp(&stages[b].1))
        .unwrap();
    let (best, holdout_residual) = stages[best_i].clone();
    let previous = if best_i > 0 {
        Some(stages[best_i - 1].0.clone())
    } else {
        None
    };

    // Pole scan: real roots of the denominator inside the window that are
    // not inside an excluded band make the model unusable.
    let width = (window.1 - window.0).max(1e-12);
    for root in polynomial_roots(&best.denominator_coeffs()) {
        let inside = root.re >= window.0 && root.re <= window.1;
        let nearly_real = root.im.abs() <= 1e-3 * width;
        let excused = excluded
            .iter()
            .any(|&(lo, hi)| root.re >= lo && root.re <= hi);
        if inside && nearly_real && !excused {
            return Err(Error::PoleInWindow {
                re: root.re,
                im: root.im,
            });
        }
    }

    Ok(ContinuationModel {
        best,
        previous,
        window,
        excluded: excluded.to_vec(),
        holdout_residual,
    })
}

/// Evaluate the model at k with an error estimate (difference from the
/// next-lower-degree stage, floored by the held-out residual). k outside
/// the trust region (window widened by 25%) is refused.
pub fn evaluate_continuation(model: &ContinuationModel, k: f64) -> Result<(Complex64, f64)> {
    let (lo, hi) = model.window;
    let margin = TRUST_MARGIN * (hi - lo);
    if k < lo - margin || k > hi + margin {
        return Err(Error::ExtrapolationRange {
            k,
            lo: lo - margin,
            hi: hi + margin,
        });
    }
    let value = model.best.eval(k);
    let scale = model
        .best
        .values
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let stage_diff = model
        .previous
        .as_ref()
        .map(|p| (p.eval(k) - value).norm())
        .unwrap_or(0.0);
    let mut estimate = stage_diff.max(model.holdout_residual * scale);
    // Outside the sample window consecutive stages correlate and the stage
    // difference underestimates the drift; inflate conservatively.
    let outside = (lo - k).max(k - hi);
    if outside > 0.0 {
        estimate *= 30.0 * (1.0 + outside / (hi - lo).max(1e-12));
    }
    Ok((value, estimate))
}

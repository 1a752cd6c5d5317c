//! Dirichlet-to-Neumann maps on the trace line x2 = T: direct computation
//! from lower-domain solves, reconstruction from propagating-mode scattering
//! data, and frequency-to-time synthesis of the hyperbolic DtN map.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::blocktri::solve_checked;
use crate::error::{Error, Result};
use crate::forward::{assemble, EndCondition, Scenario, COND_LIMIT};
use crate::grid::Grid;
use crate::scatdata::{ScatteringDataset, Side};
use crate::spectral::{grating_kappa2, vertical_root, Branch};

/// Matrix of the map from Dirichlet Fourier coefficients to one-sided
/// normal-derivative Fourier coefficients on x2 = T, over the trace basis
/// e^{i(m+alpha)x1}, |m| <= m_max. Entry (p, n): coefficient p of the
/// response to basis trace n. The free-space diagonal is -i lambda_m
/// (outgoing below, derivative in +x2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DtNMatrix {
    pub k: f64,
    pub alpha: f64,
    pub m_max: i64,
    /// Row-major (2 m_max + 1)^2 entries; index (m + m_max).
    pub entries: Vec<Complex64>,
    /// Condition estimate of the producing solve, or the worst expansion
    /// residual for reconstructed maps.
    pub diagnostic: f64,
}

impl DtNMatrix {
    pub fn dim(&self) -> usize {
        (2 * self.m_max + 1) as usize
    }

    pub fn get(&self, p: i64, n: i64) -> Complex64 {
        let d = self.dim();
        self.entries[(p + self.m_max) as usize * d + (n + self.m_max) as usize]
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn frobenius_diff(&self, other: &DtNMatrix) -> f64 {
        assert_eq!(self.m_max, other.m_max);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Apply to Fourier coefficients indexed -m_max..=m_max.
    pub fn apply(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim();
        assert_eq!(coeffs.len(), d);
        (0..d)
            .map(|p| (0..d).map(|n| self.entries[p * d + n] * coeffs[n]).sum())
            .collect()
    }
}

fn fourier_coeff(trace: &[Complex64], grid: &Grid, alpha: f64, m: i64) -> Complex64 {
    let n1 = trace.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, v) in trace.iter().enumerate() {
        acc += v * Complex64::from_polar(1.0, -(m as f64 + alpha) * grid.x1(j));
    }
    acc / n1 as f64
}

/// Direct DtN: for each basis trace, solve the discrete problem on the rows
/// below x2 = T with the trace as Dirichlet data and the geometry's bottom
/// condition, then difference one-sidedly from below. Near-singular
/// lower-domain solves (k^2 at an interior eigenvalue) are reported as the
/// S_T condition.
pub fn dtn_direct(s: &Scenario, k: f64, m_max: i64) -> Result<DtNMatrix> {
    if !s.periodic() {
        return Err(Error::Parse("dtn_direct supports grating scenarios only".into()));
    }
    let g = &s.grid;
    let i_t = g.row_of(s.t);
    let a = assemble(s, k, 0, i_t, s.bottom_end(Branch::Outgoing), EndCondition::Fixed)?;
    let n1 = g.n1;
    let dim = (2 * m_max + 1) as usize;
    let size = (i_t + 1) * n1;
    let mut rhss = Vec::with_capacity(dim);
    for n in -m_max..=m_max {
        let mut rhs = DVector::<Complex64>::zeros(size);
        for j in 0..n1 {
            rhs[i_t * n1 + j] = Complex64::from_polar(1.0, (n as f64 + s.alpha) * g.x1(j));
        }
        rhss.push(rhs);
    }
    let (sols, cond) = solve_checked(a, &rhss, COND_LIMIT).map_err(|e| match e {
        Error::SingularSystem { cond } => Error::StCondition { cond },
        other => other,
    })?;
    let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
    for (col, u) in sols.iter().enumerate() {
        let deriv: Vec<Complex64> = (0..n1)
            .map(|j| {
                (3.0 * u[i_t * n1 + j] - 4.0 * u[(i_t - 1) * n1 + j] + u[(i_t - 2) * n1 + j])
                    / (2.0 * g.h2)
            })
            .collect();
        for p in -m_max..=m_max {
            entries[(p + m_max) as usize * dim + col] = fourier_coeff(&deriv, g, s.alpha, p);
        }
    }
    Ok(DtNMatrix {
        k,
        alpha: s.alpha,
        m_max,
        entries,
        diagnostic: cond,
    })
}

/// Reconstruct the DtN map from scattering amplitudes: the exterior field of
/// each incident index n is rebuilt on the three rows below x2 = T from the
/// discrete incident exponential plus the stored a_m with discrete outgoing
/// roots, giving trace t_n and (same one-sided stencil) derivative d_n; each
/// basis trace is ridge-least-squares expanded in the t_n and the map is
/// read off the expanded derivatives. `n_span` limits the incident indices
/// used; all reflected m present in the dataset contribute to the exterior
/// sums.
pub fn dtn_from_modes(
    ds: &ScatteringDataset,
    s: &Scenario,
    k: f64,
    m_max: i64,
    n_span: i64,
    reg: f64,
) -> Result<DtNMatrix> {
    if !s.periodic() {
        return Err(Error::Parse("dtn_from_modes supports grating scenarios only".into()));
    }
    let g = &s.grid;
    let n1 = g.n1;
    let i_t = g.row_of(s.t);
    let i0 = g.row_of(0.0);

    let root = |m: i64| vertical_root(k * k - grating_kappa2(m, s.alpha, g.h1), g.h2, Branch::Outgoing);

    // Incident indices available in the dataset within the span.
    let mut incident: Vec<i64> = (-n_span..=n_span)
        .filter(|&n| ds.amplitude(n, 0, k, Side::Reflected).is_some())
        .collect();
    incident.sort_unstable();
    if incident.is_empty() {
        return Err(Error::IncompleteData { n: n_span, k });
    }
    let m_ext: Vec<i64> = {
        let mut v: Vec<i64> = ds
            .entries
            .iter()
            .filter(|e| e.side == Side::Reflected && (e.k - k).abs() <= 1e-12 * k.abs().max(1.0))
            .map(|e| e.m)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };

    // Exterior field rows i_t, i_t-1, i_t-2 for each incident index.
    let mut traces: Vec<Vec<Complex64>> = Vec::new();
    let mut derivs: Vec<Vec<Complex64>> = Vec::new();
    for &n in &incident {
        let rn = root(n);
        let mut rows = vec![vec![Complex64::new(0.0, 0.0); n1]; 3];
        for (ri, row) in rows.iter_mut().enumerate() {
            let i = i_t - 2 + ri;
            let down = rn.powi(i0 as i32 - i as i32);
            for (j, v) in row.iter_mut().enumerate() {
                *v = down * Complex64::from_polar(1.0, (n as f64 + s.alpha) * g.x1(j));
            }
            for &m in &m_ext {
                let Some(am) = ds.amplitude(n, m, k, Side::Reflected) else { continue };
                let up = root(m).powi(i as i32 - i0 as i32);
                for (j, v) in row.iter_mut().enumerate() {
                    *v += am * up * Complex64::from_polar(1.0, (m as f64 + s.alpha) * g.x1(j));
                }
            }
        }
        traces.push(rows[2].clone());
        derivs.push(
            (0..n1)
                .map(|j| (3.0 * rows[2][j] - 4.0 * rows[1][j] + rows[0][j]) / (2.0 * g.h2))
                .collect(),
        );
    }

    // Least squares in the full lateral Fourier coefficient space.
    let nc = incident.len();
    let t_mat = DMatrix::<Complex64>::from_fn(n1, nc, |b, c| {
        let m = if b <= n1 / 2 { b as i64 } else { b as i64 - n1 as i64 };
        fourier_coeff(&traces[c], g, s.alpha, m)
    });
    let d_mat = DMatrix::<Complex64>::from_fn(n1, nc, |b, c| {
        let m = if b <= n1 / 2 { b as i64 } else { b as i64 - n1 as i64 };
        fourier_coeff(&derivs[c], g, s.alpha, m)
    });
    let gram = t_mat.adjoint() * &t_mat
        + DMatrix::<Complex64>::identity(nc, nc) * Complex64::new(reg, 0.0);
    let lu = gram.lu();

    let dim = (2 * m_max + 1) as usize;
    let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
    let mut worst = 0.0f64;
    for q in -m_max..=m_max {
        let mut h = DVector::<Complex64>::zeros(n1);
        let bin = if q >= 0 { q as usize } else { (q + n1 as i64) as usize };
        h[bin] = Complex64::new(1.0, 0.0);
        let c = lu
            .solve(&(t_mat.adjoint() * &h))
            .ok_or(Error::IllConditionedSpan { residual: f64::INFINITY, index: q })?;
        let residual = (&t_mat * &c - &h).norm() / h.norm();
        worst = worst.max(residual);
        if residual > 0.05 {
            return Err(Error::IllConditionedSpan { residual, index: q });
        }
        let d = &d_mat * &c;
        for p in -m_max..=m_max {
            let bin_p = if p >= 0 { p as usize } else { (p + n1 as i64) as usize };
            entries[(p + m_max) as usize * dim + (q + m_max) as usize] = d[bin_p];
        }
    }
    Ok(DtNMatrix {
        k,
        alpha: s.alpha,
        m_max,
        entries,
        diagnostic: worst,
    })
}

/// Boundary traces over time: samples are time-major, complex, over the n1
/// lateral nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeTraceSet {
    pub dt: f64,
    pub n1: usize,
    /// The signal is (supposed to be) zero before this time.
    pub onset: f64,
    /// Frequency band (in k = omega) carrying the signal content.
    pub band: (f64, f64),
    pub samples: Vec<Complex64>,
    /// Fraction of spectral energy outside the synthesis band (outputs only).
    pub band_leakage: f64,
    /// Fraction of output energy before `onset`, measured prior to causal
    /// windowing (outputs only).
    pub causal_leakage: f64,
}

impl TimeTraceSet {
    pub fn new(dt: f64, n1: usize, onset: f64, band: (f64, f64), samples: Vec<Complex64>) -> Self {
        assert_eq!(samples.len() % n1, 0);
        TimeTraceSet {
            dt,
            n1,
            onset,
            band,
            samples,
            band_leakage: 0.0,
            causal_leakage: 0.0,
        }
    }

    pub fn nt(&self) -> usize {
        self.samples.len() / self.n1
    }

    pub fn at(&self, it: usize, j: usize) -> Complex64 {
        self.samples[it * self.n1 + j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,j,re,im\n");
        for it in 0..self.nt() {
            for j in 0..self.n1 {
                let v = self.at(it, j);
                out.push_str(&format!("{:.9e},{},{:.12e},{:.12e}\n", it as f64 * self.dt, j, v.re, v.im));
            }
        }
        out
    }
}

/// Gaussian-windowed tone: sin(omega0 (t-t0)) e^{-(t-t0)^2/(2 sigma^2)},
/// hard-gated to |t-t0| <= 4 sigma so the onset is sharp.
pub fn gaussian_wavelet(t: f64, t0: f64, sigma: f64, omega0: f64) -> f64 {
    let d = t - t0;
    if d.abs() > 4.0 * sigma {
        return 0.0;
    }
    (omega0 * d).sin() * (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Catmull-Rom interpolation over a uniform grid of values.
fn cubic_interp(xs: &[f64], ys: &[Complex64], x: f64) -> Complex64 {
    let n = xs.len();
    let h = xs[1] - xs[0];
    let pos = ((x - xs[0]) / h).clamp(0.0, (n - 1) as f64);
    let i = (pos.floor() as usize).min(n - 2);
    let t = pos - i as f64;
    let get = |idx: i64| ys[idx.clamp(0, n as i64 - 1) as usize];
    let (p0, p1, p2, p3) = (get(i as i64 - 1), get(i as i64), get(i as i64 + 1), get(i as i64 + 2));
    0.5 * ((2.0 * p1)
        + (p2 - p0) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * (t * t)
        + (3.0 * p1 - p0 - 3.0 * p2 + p3) * (t * t * t))
}

/// Apply the frequency family of DtN maps to a band-limited boundary input:
/// FFT in t, per-bin application of the cubically interpolated map (with
/// Lambda(-omega) = conj(Lambda(omega)) under index reversal; alpha = 0
/// only), inverse FFT, causal windowing. Errors if more than 1% of the
/// input's spectral energy lies outside the family's k-band.
pub fn dtn_time_synthesis(family: &[DtNMatrix], g: &TimeTraceSet) -> Result<TimeTraceSet> {
    assert!(family.len() >= 4, "need at least 4 frequency samples");
    let m_max = family[0].m_max;
    if family[0].alpha != 0.0 {
        return Err(Error::Parse(
            "time synthesis requires alpha = 0 (real-in-time kernel)".into(),
        ));
    }
    let ks: Vec<f64> = family.iter().map(|m| m.k).collect();
    let (k_lo, k_hi) = (ks[0], ks[ks.len() - 1]);
    let nt = g.nt();
    let n1 = g.n1;
    let dim = (2 * m_max + 1) as usize;

    // Lateral Fourier transform per time step.
    let mut modal = vec![vec![Complex64::new(0.0, 0.0); nt]; dim];
    for it in 0..nt {
        for (mi, row) in modal.iter_mut().enumerate() {
            let m = mi as i64 - m_max;
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n1 {
                let x1 = 2.0 * std::f64::consts::PI * j as f64 / n1 as f64;
                acc += g.at(it, j) * Complex64::from_polar(1.0, -(m as f64) * x1);
            }
            *row[it..].first_mut().unwrap() = acc / n1 as f64;
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nt);
    let ifft = planner.plan_fft_inverse(nt);
    for row in modal.iter_mut() {
        fft.process(row);
    }

    // Band coverage and per-bin application.
    let d_om = 2.0 * std::f64::consts::PI / (nt as f64 * g.dt);
    let omega = |l: usize| -> f64 {
        if l <= nt / 2 {
            l as f64 * d_om
        } else {
            (l as f64 - nt as f64) * d_om
        }
    };
    let mut total = 0.0f64;
    let mut outside = 0.0f64;
    for row in &modal {
        for (l, v) in row.iter().enumerate() {
            let e = v.norm_sqr();
            total += e;
            let a = omega(l).abs();
            if a < k_lo || a > k_hi {
                outside += e;
            }
        }
    }
    let band_leakage = if total > 0.0 { outside / total } else { 0.0 };
    if band_leakage > 0.01 {
        return Err(Error::BandCoverage { fraction: band_leakage });
    }

    // Interpolated matrix at |omega|, cached per bin on demand.
    let entry_tables: Vec<Vec<Complex64>> = (0..dim * dim)
        .map(|e| family.iter().map(|m| m.entries[e]).collect())
        .collect();
    let mut out_modal = vec![vec![Complex64::new(0.0, 0.0); nt]; dim];
    for l in 0..nt {
        let om = omega(l);
        let a = om.abs();
        if a < k_lo || a > k_hi {
            continue;
        }
        let lam: Vec<Complex64> = entry_tables
            .iter()
            .map(|tab| cubic_interp(&ks, tab, a))
            .collect();
        for p in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for q in 0..dim {
                let coeff = modal[q][l];
                if coeff.norm_sqr() == 0.0 {
                    continue;
                }
                // Forward-FFT bins carry e^{+i omega t}; the Helmholtz maps
                // are built in the e^{-i omega t} convention, so positive
                // frequencies take the conjugate with mode-index reversal
                // (Lambda(-omega)_{p,q} = conj(Lambda(omega)_{-p,-q})).
                let entry = if om >= 0.0 {
                    lam[(dim - 1 - p) * dim + (dim - 1 - q)].conj()
                } else {
                    lam[p * dim + q]
                };
                acc += entry * coeff;
            }
            out_modal[p][l] = acc;
        }
    }
    for row in out_modal.iter_mut() {
        ifft.process(row);
        for v in row.iter_mut() {
            *v /= nt as f64;
        }
    }

    // Back to nodal samples.
    let mut samples = vec![Complex64::new(0.0, 0.0); nt * n1];
    for it in 0..nt {
        for j in 0..n1 {
            let x1 = 2.0 * std::f64::consts::PI * j as f64 / n1 as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for (mi, row) in out_modal.iter().enumerate() {
                let m = mi as i64 - m_max;
                acc += row[it] * Complex64::from_polar(1.0, m as f64 * x1);
            }
            samples[it * n1 + j] = acc;
        }
    }

    // Causality diagnostic, then hard causal window.
    let onset_it = (g.onset / g.dt).floor().max(0.0) as usize;
    let before: f64 = samples[..onset_it.min(nt) * n1].iter().map(|v| v.norm_sqr()).sum();
    let all: f64 = samples.iter().map(|v| v.norm_sqr()).sum();
    let causal_leakage = if all > 0.0 { before / all } else { 0.0 };
    for v in samples[..onset_it.min(nt) * n1].iter_mut() {
        *v = Complex64::new(0.0, 0.0);
    }

    Ok(TimeTraceSet {
        dt: g.dt,
        n1,
        onset: g.onset,
        band: (k_lo, k_hi),
        samples,
        band_leakage,
        causal_leakage,
    })
}

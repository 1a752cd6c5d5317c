//! Scattering-data extraction and verification: propagating/evanescent mode
//! amplitudes from solved fields, energy-flux balance per geometry, and the
//! trace identity relating distorted plane waves to incoming line-source
//! solutions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::{
    apply_rows, incoming_line_source_solve, solve_distorted_wave, FieldSolution, Geometry,
    Scenario,
};
use crate::grid::x1_weight;
use crate::spectral::{grating_kappa2, lambda_branch, vertical_root, Branch, WaveguideMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Reflected,
    Transmitted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplitudeEntry {
    pub n: i64,
    pub m: i64,
    pub k: f64,
    pub re: f64,
    pub im: f64,
    pub propagating: bool,
    pub side: Side,
}

impl AmplitudeEntry {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Mode amplitudes keyed by (incident n, scattered m, k), with the
/// geometry tag and quasi-momentum needed to interpret them and a hash of
/// the producing scenario for provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatteringDataset {
    pub geometry: Geometry,
    pub alpha: f64,
    pub provenance: String,
    pub entries: Vec<AmplitudeEntry>,
}

impl ScatteringDataset {
    pub fn amplitude(&self, n: i64, m: i64, k: f64, side: Side) -> Option<Complex64> {
        self.entries
            .iter()
            .find(|e| {
                e.n == n && e.m == m && e.side == side && (e.k - k).abs() <= 1e-12 * k.abs().max(1.0)
            })
            .map(|e| e.value())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m,k,re,im,propagating,side\n");
        for e in &self.entries {
            let side = match e.side {
                Side::Reflected => "reflected",
                Side::Transmitted => "transmitted",
            };
            out.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e},{},{}\n",
                e.n, e.m, e.k, e.re, e.im, e.propagating, side
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AmplitudeValue {
    pub m: i64,
    pub value: Complex64,
    pub propagating: bool,
}

/// Amplitudes from a raw trace line at height x2ref:
/// a_m = e^{-i x2ref lambda_m} (1/n1) sum_j e^{-i(m+alpha)x1_j} trace_j.
/// Uses the continuum vertical phases; exact for traces that are continuum
/// modal sums at x2ref.
pub fn extract_trace_amplitudes(
    trace: &[Complex64],
    alpha: f64,
    x2ref: f64,
    k: f64,
    m_max: i64,
) -> Result<Vec<AmplitudeValue>> {
    let n1 = trace.len();
    let mut out = Vec::new();
    for m in -m_max..=m_max {
        let lam = lambda_branch(k, m, alpha, Branch::Outgoing)?;
        let mut coeff = Complex64::new(0.0, 0.0);
        for (j, v) in trace.iter().enumerate() {
            let x1 = 2.0 * std::f64::consts::PI * j as f64 / n1 as f64;
            coeff += v * Complex64::from_polar(1.0, -(m as f64 + alpha) * x1);
        }
        coeff /= n1 as f64;
        out.push(AmplitudeValue {
            m,
            value: coeff * (-Complex64::i() * lam * x2ref).exp(),
            propagating: (m as f64 + alpha).powi(2) < k * k,
        });
    }
    Ok(out)
}

/// Waveguide amplitudes from a raw trace line at height x2ref:
/// b_m = e^{-i x2ref sqrt(mu_m)} <phi_m, trace>_w.
pub fn extract_waveguide_trace_amplitudes(
    trace: &[Complex64],
    basis: &[WaveguideMode],
    b: f64,
    x2ref: f64,
) -> Vec<AmplitudeValue> {
    let n1 = trace.len();
    let h1 = b / n1 as f64;
    basis
        .iter()
        .map(|mode| {
            let mut coeff = Complex64::new(0.0, 0.0);
            for (j, v) in trace.iter().enumerate() {
                coeff += v * mode.phi[j] * (x1_weight(false, n1, j) * h1);
            }
            let lam = if mode.mu > 0.0 {
                Complex64::new(mode.mu.sqrt(), 0.0)
            } else {
                Complex64::new(0.0, (-mode.mu).sqrt())
            };
            AmplitudeValue {
                m: mode.m as i64,
                value: coeff * (-Complex64::i() * lam * x2ref).exp(),
                propagating: mode.propagating(),
            }
        })
        .collect()
}

/// Amplitudes of the scattered field of a solve, referenced to x2 = 0 with
/// the exact discrete vertical roots. Because the solved field is exactly a
/// sum of discrete modal exponentials outside the contrast, the result is
/// independent of the sampling height to solver precision.
pub fn extract_grating_amplitudes(
    s: &Scenario,
    sol: &FieldSolution,
    m_max: i64,
    x2_at: f64,
    downward: bool,
) -> Result<Vec<AmplitudeValue>> {
    let g = &s.grid;
    let i_at = g.row_of(x2_at);
    let i0 = g.row_of(0.0);
    let k = sol.k;
    let mut out = Vec::new();
    for m in -m_max..=m_max {
        let mut coeff = Complex64::new(0.0, 0.0);
        for j in 0..g.n1 {
            coeff += sol.scattered[g.idx(i_at, j)]
                * Complex64::from_polar(1.0, -(m as f64 + s.alpha) * g.x1(j));
        }
        coeff /= g.n1 as f64;
        let r = vertical_root(k * k - grating_kappa2(m, s.alpha, g.h1), g.h2, Branch::Outgoing);
        // Upward wave: value r^{i-i0}; downward: r^{i0-i}.
        let steps = i_at as i32 - i0 as i32;
        let value = if downward {
            coeff * r.powi(steps)
        } else {
            coeff * r.powi(-steps)
        };
        out.push(AmplitudeValue {
            m,
            value,
            propagating: (m as f64 + s.alpha).powi(2) < k * k,
        });
    }
    Ok(out)
}

/// Waveguide analogue of [`extract_grating_amplitudes`].
pub fn extract_waveguide_amplitudes(
    s: &Scenario,
    sol: &FieldSolution,
    basis: &[WaveguideMode],
    x2_at: f64,
    downward: bool,
) -> Result<Vec<AmplitudeValue>> {
    let basis_k = basis.first().map(|m| m.k).unwrap_or(sol.k);
    if (basis_k - sol.k).abs() > 1e-12 {
        return Err(Error::BasisMismatch { basis_k, k: sol.k });
    }
    let g = &s.grid;
    let i_at = g.row_of(x2_at);
    let i0 = g.row_of(0.0);
    let mut out = Vec::new();
    for mode in basis {
        let mut coeff = Complex64::new(0.0, 0.0);
        for j in 0..g.n1 {
            coeff +=
                sol.scattered[g.idx(i_at, j)] * mode.phi[j] * (x1_weight(false, g.n1, j) * g.h1);
        }
        let r = vertical_root(mode.mu, g.h2, Branch::Outgoing);
        let steps = i_at as i32 - i0 as i32;
        let value = if downward {
            coeff * r.powi(steps)
        } else {
            coeff * r.powi(-steps)
        };
        out.push(AmplitudeValue {
            m: mode.m as i64,
            value,
            propagating: mode.propagating(),
        });
    }
    Ok(out)
}

/// Solve the scenario for each incident index and collect reflected (and,
/// for open-bottom geometries, transmitted) amplitudes for |m| <= m_max
/// (gratings) or all basis modes (waveguides). Evanescent incident indices
/// are solved as generalized distorted waves.
pub fn build_dataset(s: &Scenario, k: f64, m_max: i64, incident: &[i64]) -> Result<ScatteringDataset> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(s)?.as_bytes());
    hasher.update(format!("{k:.17e}").as_bytes());
    let provenance = format!("{:x}", hasher.finalize());

    let basis = if s.periodic() {
        Vec::new()
    } else {
        s.waveguide_modes(k)?
    };
    let open_bottom = !matches!(s.geometry, Geometry::GratingCase2 { .. });
    let mut entries = Vec::new();
    for &n in incident {
        let sol = solve_distorted_wave(s, n, k, true)?;
        let mut push = |vals: Vec<AmplitudeValue>, side: Side| {
            for v in vals {
                entries.push(AmplitudeEntry {
                    n,
                    m: v.m,
                    k,
                    re: v.value.re,
                    im: v.value.im,
                    propagating: v.propagating,
                    side,
                });
            }
        };
        if s.periodic() {
            push(extract_grating_amplitudes(s, &sol, m_max, s.t, false)?, Side::Reflected);
            if open_bottom {
                push(extract_grating_amplitudes(s, &sol, m_max, -s.t, true)?, Side::Transmitted);
            }
        } else {
            push(
                extract_waveguide_amplitudes(s, &sol, &basis, s.t, false)?,
                Side::Reflected,
            );
            push(
                extract_waveguide_amplitudes(s, &sol, &basis, -s.t, true)?,
                Side::Transmitted,
            );
        }
    }
    Ok(ScatteringDataset {
        geometry: s.geometry.clone(),
        alpha: s.alpha,
        provenance,
        entries,
    })
}

/// Energy-flux balance residual for incident propagating index n at k:
/// |sum_m lambda_m (|a_m|^2 + |t_m + delta_mn|^2) - lambda_n| / lambda_n.
/// The transmitted sum carries the unscattered delta and is dropped for the
/// closed-bottom geometry (GratingCase2), where all flux returns upward.
/// Waveguide flux factors are sqrt(mu_m) and require the modal basis.
pub fn flux_balance(
    ds: &ScatteringDataset,
    n: i64,
    k: f64,
    basis: Option<&[WaveguideMode]>,
) -> Result<f64> {
    // (mode index, flux factor lambda_m) over the propagating set.
    let modes: Vec<(i64, f64)> = match ds.geometry {
        Geometry::Waveguide { .. } => {
            let basis = basis.ok_or(Error::IncompleteData { n, k })?;
            basis
                .iter()
                .filter(|m| m.propagating())
                .map(|m| (m.m as i64, m.mu.sqrt()))
                .collect()
        }
        _ => {
            let mut v = Vec::new();
            let mut m = 0i64;
            loop {
                let hit = |m: i64| (m as f64 + ds.alpha).powi(2) < k * k;
                let any = hit(m) || hit(-m);
                if hit(m) {
                    v.push((m, (k * k - (m as f64 + ds.alpha).powi(2)).sqrt()));
                }
                if m != 0 && hit(-m) {
                    v.push((-m, (k * k - (-m as f64 + ds.alpha).powi(2)).sqrt()));
                }
                if !any && m > 0 {
                    break;
                }
                m += 1;
            }
            v
        }
    };
    let lambda_n = modes
        .iter()
        .find(|(m, _)| *m == n)
        .map(|(_, l)| *l)
        .ok_or(Error::IncompleteData { n, k })?;
    let open_bottom = !matches!(ds.geometry, Geometry::GratingCase2 { .. });
    let mut flux = 0.0;
    for &(m, lam) in &modes {
        let a = ds
            .amplitude(n, m, k, Side::Reflected)
            .ok_or(Error::IncompleteData { n, k })?;
        flux += lam * a.norm_sqr();
        if open_bottom {
            let t = ds
                .amplitude(n, m, k, Side::Transmitted)
                .ok_or(Error::IncompleteData { n, k })?;
            let delta = if m == n { 1.0 } else { 0.0 };
            flux += lam * (t + delta).norm_sqr();
        }
    }
    Ok((flux - lambda_n).abs() / lambda_n)
}

/// Smooth radial cutoff in |x2|: identically 0 for |x2| <= t + w/10,
/// identically 1 for |x2| >= t + w, C^2 quintic blend between.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub t: f64,
    pub w: f64,
}

impl CutoffSpec {
    pub fn new(t: f64) -> Self {
        CutoffSpec { t, w: 1.0 }
    }

    pub fn eval(&self, x2: f64) -> f64 {
        let r = x2.abs();
        let lo = self.t + self.w / 10.0;
        let hi = self.t + self.w;
        if r <= lo {
            0.0
        } else if r >= hi {
            1.0
        } else {
            let s = (r - lo) / (hi - lo);
            s * s * s * (6.0 * s * s - 15.0 * s + 10.0)
        }
    }
}

/// Relative mismatch of the trace identity:
/// LHS = int conj(f) u_+(x1, T, m, k) dx1,
/// RHS = int int e^{i[(m+alpha)x1 - lambda_m x2]} conj((L - k^2)(psi w)) dx,
/// with w the incoming line-source solution for f and psi the cutoff. Both
/// sides are evaluated discretely; (L - k^2)(psi w) is supported in the
/// cutoff transition annulus, where the medium is unperturbed.
pub fn lemma1_residual(
    s: &Scenario,
    f: &[Complex64],
    m: i64,
    k: f64,
    cutoff: &CutoffSpec,
) -> Result<f64> {
    let g = &s.grid;
    assert_eq!(f.len(), g.n1);
    if f.iter().all(|v| v.norm_sqr() == 0.0) {
        return Ok(0.0);
    }
    if s.t_prime < cutoff.t + cutoff.w + 2.0 * g.h2 {
        return Err(Error::Parse(format!(
            "margin Tprime = {} too small for cutoff reaching {}",
            s.t_prime,
            cutoff.t + cutoff.w
        )));
    }
    let u = solve_distorted_wave(s, m, k, false)?;
    let w = incoming_line_source_solve(s, f, k)?;

    let i_t = g.row_of(s.t);
    let mut lhs = Complex64::new(0.0, 0.0);
    for j in 0..g.n1 {
        lhs += f[j].conj() * u.field[g.idx(i_t, j)] * g.h1;
    }

    let mut cut = g.zeros();
    for i in 0..g.n2 {
        let psi = cutoff.eval(g.x2(i));
        if psi > 0.0 {
            for j in 0..g.n1 {
                cut[g.idx(i, j)] = psi * w.field[g.idx(i, j)];
            }
        }
    }
    let applied = apply_rows(s, k, &cut, 0, g.n2 - 1);
    let lam = lambda_branch(k, m, s.alpha, Branch::Outgoing)?;
    let mut rhs = Complex64::new(0.0, 0.0);
    for i in 1..g.n2 - 1 {
        for j in 0..g.n1 {
            let v = applied[g.idx(i, j)];
            if v.norm_sqr() > 0.0 {
                let phase = Complex64::from_polar(1.0, (m as f64 + s.alpha) * g.x1(j))
                    * (-Complex64::i() * lam * g.x2(i)).exp();
                rhs += phase * v.conj() * (g.h1 * g.h2);
            }
        }
    }
    let denom = lhs.norm() + rhs.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((lhs - rhs).norm() / denom)
}

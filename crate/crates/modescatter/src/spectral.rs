//! Branch functions, thresholds, and Sturm-Liouville modal bases.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign convention for square roots of real arguments.
///
/// Outgoing: sqrt(z) > 0 for z > 0, k > 0; sqrt(z) < 0 for z > 0, k < 0;
/// sqrt(z) = i*sqrt(|z|) for z < 0. Incoming values are the negatives
/// (which for evanescent arguments coincide with the complex conjugates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Outgoing,
    Incoming,
}

/// Half-width of the refused interval around a threshold k_thr.
pub fn guard_band(k_thr: f64) -> f64 {
    1e-6 * k_thr.abs().max(1.0)
}

fn check_guard(k: f64, a: f64, mode: i64) -> Result<()> {
    let k_thr = a.abs();
    if (k.abs() - k_thr).abs() < guard_band(k_thr) {
        return Err(Error::Threshold {
            k,
            threshold: k_thr,
            mode,
        });
    }
    Ok(())
}

/// Vertical wavenumber lambda_m(k) = sqrt(k^2 - (m+alpha)^2) with the chosen branch.
pub fn lambda_branch(k: f64, m: i64, alpha: f64, branch: Branch) -> Result<Complex64> {
    let a = m as f64 + alpha;
    check_guard(k, a, m)?;
    let z = k * k - a * a;
    let out = if z > 0.0 {
        Complex64::new(k.signum() * z.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-z).sqrt())
    };
    Ok(match branch {
        Branch::Outgoing => out,
        Branch::Incoming => -out,
    })
}

/// Outgoing branch for complex k: ~ k near infinity, cut on (-|m+alpha|, |m+alpha|).
///
/// Computed as sqrt(k - a) * sqrt(k + a) with principal square roots, so that
/// Im(lambda) > 0 throughout Im(k) > 0.
pub fn lambda_branch_complex(k: Complex64, m: i64, alpha: f64) -> Complex64 {
    let a = (m as f64 + alpha).abs();
    ((k - a).sqrt()) * ((k + a).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Threshold {
    pub k: f64,
    pub mode: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub thresholds: Vec<Threshold>,
    /// Fixed lower bound on the guard half-width; the per-threshold band is
    /// `guard_band(k_thr)`.
    pub guard_floor: f64,
}

impl ThresholdSet {
    /// Nearest threshold that `k` violates, if any.
    pub fn violation(&self, k: f64) -> Option<&Threshold> {
        self.thresholds
            .iter()
            .find(|t| (k - t.k).abs() < guard_band(t.k))
    }

    pub fn check(&self, k: f64) -> Result<()> {
        match self.violation(k) {
            Some(t) => Err(Error::Threshold {
                k,
                threshold: t.k,
                mode: t.mode,
            }),
            None => Ok(()),
        }
    }
}

/// All grating thresholds k = |p + alpha| with |p + alpha| <= k_max, ascending.
pub fn grating_thresholds(alpha: f64, k_max: f64) -> ThresholdSet {
    assert!(k_max > 0.0, "k_max must be positive");
    let mut thresholds: Vec<Threshold> = Vec::new();
    let p_lo = (-k_max - alpha).floor() as i64;
    let p_hi = (k_max - alpha).ceil() as i64;
    for p in p_lo..=p_hi {
        let k = (p as f64 + alpha).abs();
        if k <= k_max {
            thresholds.push(Threshold { k, mode: p });
        }
    }
    thresholds.sort_by(|a, b| a.k.total_cmp(&b.k).then(a.mode.cmp(&b.mode)));
    thresholds.dedup_by(|a, b| (a.k - b.k).abs() < 1e-12);
    ThresholdSet {
        thresholds,
        guard_floor: 1e-6,
    }
}

/// Background profile c0(x1) for the waveguide.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum C0Profile {
    Constant { value: f64 },
    SinePerturbed { base: f64, amp: f64 },
    Samples { values: Vec<SamplePoint> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: f64,
    pub value: f64,
}

impl C0Profile {
    /// Evaluate on [0, B]; sampled profiles are interpolated linearly.
    pub fn eval(&self, x: f64, b: f64) -> f64 {
        match self {
            C0Profile::Constant { value } => *value,
            C0Profile::SinePerturbed { base, amp } => base + amp * (std::f64::consts::PI * x / b).sin(),
            C0Profile::Samples { values } => {
                if values.is_empty() {
                    return 1.0;
                }
                if x <= values[0].x {
                    return values[0].value;
                }
                for w in values.windows(2) {
                    if x <= w[1].x {
                        let t = (x - w[0].x) / (w[1].x - w[0].x);
                        return w[0].value + t * (w[1].value - w[0].value);
                    }
                }
                values[values.len() - 1].value
            }
        }
    }
}

/// One eigenpair of the Sturm-Liouville problem
/// phi'' + (k^2 / c0^2) phi = mu phi, phi(0) = 0, phi'(B) = 0.
///
/// `phi` holds the eigenfunction on the nodes x1 = h, 2h, ..., B (the
/// Dirichlet node is omitted), orthonormal in the trapezoidal inner product
/// with a half weight at x1 = B.
#[derive(Debug, Clone)]
pub struct WaveguideMode {
    /// 1-based mode index.
    pub m: usize,
    pub mu: f64,
    pub phi: Vec<f64>,
    pub dmu_dk: f64,
    pub k: f64,
    pub b: f64,
}

impl WaveguideMode {
    pub fn propagating(&self) -> bool {
        self.mu > 0.0
    }
}

/// Full discrete spectrum of the Sturm-Liouville operator on `n1` interior
/// nodes, largest mu first.
pub fn sl_eigensystem_full(c0: &C0Profile, b: f64, n1: usize, k: f64) -> Result<Vec<WaveguideMode>> {
    assert!(n1 >= 2, "need at least two interior nodes");
    let h = b / n1 as f64;
    let c: Vec<f64> = (1..=n1).map(|j| c0.eval(j as f64 * h, b)).collect();
    if c.iter().any(|&v| v <= 0.0) {
        return Err(Error::Convergence("c0 must be strictly positive".into()));
    }

    // Symmetrized finite-difference matrix. The Neumann ghost closure at
    // x1 = B is symmetric in the half-weighted inner product; conjugating by
    // diag(1,..,1,sqrt(1/2)) restores plain symmetry.
    let mut mat = DMatrix::<f64>::zeros(n1, n1);
    let h2 = h * h;
    for j in 0..n1 {
        mat[(j, j)] = -2.0 / h2 + k * k / (c[j] * c[j]);
    }
    for j in 0..n1 - 1 {
        let coupling = if j + 2 == n1 {
            std::f64::consts::SQRT_2 / h2
        } else {
            1.0 / h2
        };
        mat[(j, j + 1)] = coupling;
        mat[(j + 1, j)] = coupling;
    }

    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n1).collect();
    order.sort_by(|&a, &bb| eig.eigenvalues[bb].total_cmp(&eig.eigenvalues[a]));

    let mut modes = Vec::with_capacity(n1);
    for (rank, &col) in order.iter().enumerate() {
        let mu = eig.eigenvalues[col];
        let mut phi: Vec<f64> = (0..n1).map(|j| eig.eigenvectors[(j, col)]).collect();
        // Undo the symmetrizing scaling and normalize in the weighted
        // trapezoidal inner product.
        phi[n1 - 1] *= std::f64::consts::SQRT_2;
        let inv = 1.0 / h.sqrt();
        for v in phi.iter_mut() {
            *v *= inv;
        }
        // Deterministic sign: phi positive near x1 = 0.
        if phi[0] < 0.0 {
            for v in phi.iter_mut() {
                *v = -*v;
            }
        }
        // Hellmann-Feynman derivative.
        let mut dmu = 0.0;
        for j in 0..n1 {
            let w = if j + 1 == n1 { 0.5 } else { 1.0 };
            dmu += w * h * phi[j] * phi[j] / (c[j] * c[j]);
        }
        dmu *= 2.0 * k;
        modes.push(WaveguideMode {
            m: rank + 1,
            mu,
            phi,
            dmu_dk: dmu,
            k,
            b,
        });
    }
    Ok(modes)
}

/// First `m_count` eigenpairs (largest mu first).
pub fn sl_eigensystem(
    c0: &C0Profile,
    b: f64,
    n1: usize,
    k: f64,
    m_count: usize,
) -> Result<Vec<WaveguideMode>> {
    assert!(m_count >= 1);
    let mut modes = sl_eigensystem_full(c0, b, n1, k)?;
    if modes.len() < m_count {
        return Err(Error::Convergence(format!(
            "requested {m_count} modes but grid supports {}",
            modes.len()
        )));
    }
    modes.truncate(m_count);
    Ok(modes)
}

/// Richardson-refined eigenvalue mu_m(k) over grids n and 2n (kills the h^2 term).
pub fn sl_mu_refined(c0: &C0Profile, b: f64, n1: usize, k: f64, m: usize) -> Result<f64> {
    let coarse = sl_eigensystem(c0, b, n1, k, m)?[m - 1].mu;
    let fine = sl_eigensystem(c0, b, 2 * n1, k, m)?[m - 1].mu;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Roots of mu_m(k) = 0 in `k_range` via bisection (valid since dmu/dk > 0).
pub fn waveguide_thresholds(c0: &C0Profile, b: f64, m: usize, k_range: (f64, f64)) -> Vec<f64> {
    let (mut lo, hi) = k_range;
    assert!(lo > 0.0 && hi > lo, "k_range must be positive and ordered");
    let n1 = 256;
    let mu = |k: f64| sl_mu_refined(c0, b, n1, k, m).expect("eigensolve");
    let (mut flo, fhi) = (mu(lo), mu(hi));
    if flo > 0.0 || fhi < 0.0 {
        // mu is monotone increasing in k: no sign change means no root.
        return Vec::new();
    }
    let mut hi = hi;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = mu(mid);
        if fm == 0.0 {
            return vec![mid];
        }
        if (flo < 0.0) == (fm < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-11 {
            break;
        }
    }
    vec![0.5 * (lo + hi)]
}

/// Discrete transverse eigenvalue of the quasi-periodic x1 Laplacian for the
/// Fourier mode e^{i (m+alpha) x1} on spacing h1.
pub fn grating_kappa2(m: i64, alpha: f64, h1: f64) -> f64 {
    let a = m as f64 + alpha;
    (2.0 - 2.0 * (a * h1).cos()) / (h1 * h1)
}

/// Per-step-up transfer factor of the discrete exterior mode with vertical
/// dispersion u'' + mu u = 0, i.e. the root of r + 1/r = 2 - mu h2^2.
///
/// Outgoing: e^{+i theta} for propagating (mu > 0), the decaying root for
/// evanescent. Incoming is the complex conjugate (propagating modes reverse,
/// evanescent modes still decay).
pub fn vertical_root(mu: f64, h2: f64, branch: Branch) -> Complex64 {
    let c = 1.0 - 0.5 * mu * h2 * h2;
    assert!(
        c > -1.0,
        "propagating mode unresolved by grid: mu = {mu}, h2 = {h2}"
    );
    let out = if mu > 0.0 {
        Complex64::new(c, (1.0 - c * c).sqrt())
    } else {
        Complex64::new(c - (c * c - 1.0).sqrt(), 0.0)
    };
    match branch {
        Branch::Outgoing => out,
        Branch::Incoming => out.conj(),
    }
}

/// Discrete vertical wavenumber: lambda_d with r = e^{i lambda_d h2} for the
/// outgoing root.
pub fn lambda_disc(mu: f64, h2: f64) -> Complex64 {
    let r = vertical_root(mu, h2, Branch::Outgoing);
    r.ln() / Complex64::new(0.0, h2)
}
